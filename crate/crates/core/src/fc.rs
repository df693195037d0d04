//! Fixed-point evaluation of the digital fully connected layer.
//!
//! Operands are signed Nb-bit codes on the [`QuantSpec`] grid, products take
//! 2Nb bits and the accumulator 3Nb bits. The accumulator cannot overflow for
//! up to `2^Nb` terms; beyond that it saturates and each event is counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonideal::QuantSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub operand_bits: u32,
}

impl FixedPointFormat {
    pub fn new(operand_bits: u32) -> Result<Self> {
        QuantSpec::new(operand_bits)?;
        Ok(Self { operand_bits })
    }

    pub fn product_bits(self) -> u32 {
        2 * self.operand_bits
    }

    pub fn accumulator_bits(self) -> u32 {
        3 * self.operand_bits
    }

    pub fn operand_range(self) -> (i64, i64) {
        signed_range(self.operand_bits)
    }

    pub fn accumulator_range(self) -> (i64, i64) {
        signed_range(self.accumulator_bits())
    }

    /// Largest term count that provably never saturates.
    pub fn safe_terms(self) -> usize {
        1usize << self.operand_bits
    }

    /// Real value of one accumulator unit: operands carry `2^-(Nb-1)` each.
    pub fn score_scale(self) -> f64 {
        1.0 / (1u64 << (2 * (self.operand_bits - 1))) as f64
    }

    pub fn quant(self) -> QuantSpec {
        QuantSpec::new(self.operand_bits).expect("checked at construction")
    }
}

fn signed_range(bits: u32) -> (i64, i64) {
    (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FcOpCounts {
    pub mults: u64,
    pub adds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcResult {
    /// Raw accumulator values.
    pub scores: Vec<i64>,
    pub ops: FcOpCounts,
    pub saturations: u64,
}

/// Integer dot products of `inputs` with each row of `weights`.
///
/// A bias code, if given, seeds the accumulator at product scale. Every term
/// costs one multiply and one add.
pub fn fc_eval(inputs: &[i64], weights: &[Vec<i64>], bias: Option<&[i64]>, fmt: FixedPointFormat) -> Result<FcResult> {
    let (lo, hi) = fmt.operand_range();
    let check = |v: i64, what: &str| {
        if v < lo || v > hi {
            Err(Error::Domain(format!(
                "{what} {v} does not fit {} bits",
                fmt.operand_bits
            )))
        } else {
            Ok(())
        }
    };
    for &x in inputs {
        check(x, "input")?;
    }
    if let Some(b) = bias {
        if b.len() != weights.len() {
            return Err(Error::Shape(format!("{} biases for {} outputs", b.len(), weights.len())));
        }
    }
    let (amin, amax) = fmt.accumulator_range();
    let bias_shift = fmt.operand_bits - 1;
    let mut scores = Vec::with_capacity(weights.len());
    let mut ops = FcOpCounts::default();
    let mut saturations = 0;
    for (o, row) in weights.iter().enumerate() {
        if row.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "weight row {o} has {} entries for {} inputs",
                row.len(),
                inputs.len()
            )));
        }
        let mut acc: i64 = match bias {
            Some(b) => {
                check(b[o], "bias")?;
                b[o] << bias_shift
            }
            None => 0,
        };
        for (&x, &w) in inputs.iter().zip(row) {
            check(w, "weight")?;
            acc += x * w;
            if acc > amax {
                acc = amax;
                saturations += 1;
            } else if acc < amin {
                acc = amin;
                saturations += 1;
            }
        }
        ops.mults += row.len() as u64;
        ops.adds += row.len() as u64;
        scores.push(acc);
    }
    Ok(FcResult { scores, ops, saturations })
}

/// Floating-point reference path used in ideal mode.
pub fn fc_eval_f64(inputs: &[f64], weights: &[Vec<f64>], bias: &[f64]) -> Result<(Vec<f64>, FcOpCounts)> {
    if bias.len() != weights.len() {
        return Err(Error::Shape(format!("{} biases for {} outputs", bias.len(), weights.len())));
    }
    let mut ops = FcOpCounts::default();
    let mut out = Vec::with_capacity(weights.len());
    for (row, &b) in weights.iter().zip(bias) {
        if row.len() != inputs.len() {
            return Err(Error::Shape(format!("weight row of {} for {} inputs", row.len(), inputs.len())));
        }
        out.push(b + row.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>());
        ops.mults += row.len() as u64;
        ops.adds += row.len() as u64;
    }
    Ok((out, ops))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: PartialOrd>(scores: &[T]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Domain("argmax of an empty score vector".into()));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f4() -> FixedPointFormat {
        FixedPointFormat::new(4).unwrap()
    }

    #[test]
    fn widths() {
        assert_eq!(f4().product_bits(), 8);
        assert_eq!(f4().accumulator_bits(), 12);
        assert_eq!(f4().accumulator_range(), (-2048, 2047));
    }

    #[test]
    fn identity_rows() {
        let x = vec![3, -2, 7];
        // weight 1.0 is not representable; use the code for 0.5 and compare
        // against half the inputs at product scale
        let w: Vec<Vec<i64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 4 } else { 0 }).collect()).collect();
        let r = fc_eval(&x, &w, None, f4()).unwrap();
        assert_eq!(r.scores, vec![12, -8, 28]);
        assert_eq!(r.ops, FcOpCounts { mults: 9, adds: 9 });
    }

    #[test]
    fn zero_inputs() {
        let r = fc_eval(&[0; 5], &[vec![7; 5], vec![-8; 5]], None, f4()).unwrap();
        assert_eq!(r.scores, vec![0, 0]);
    }

    #[test]
    fn extreme_sixteen_terms() {
        let r = fc_eval(&[7; 16], &[vec![7; 16]], None, f4()).unwrap();
        assert_eq!(r.scores, vec![16 * 49]);
        assert_eq!(r.saturations, 0);
    }

    #[test]
    fn saturation_counted() {
        let r = fc_eval(&[-8; 40], &[vec![-8; 40]], None, f4()).unwrap();
        assert_eq!(r.scores, vec![2047]);
        assert!(r.saturations > 0);
    }

    #[test]
    fn operand_range_enforced() {
        assert!(fc_eval(&[8], &[vec![1]], None, f4()).is_err());
        assert!(fc_eval(&[1], &[vec![1, 2]], None, f4()).is_err());
    }

    #[test]
    fn bias_at_product_scale() {
        // bias code 2 = 0.25; product scale is 2^-6, so 0.25 = 16 units
        let r = fc_eval(&[0], &[vec![0]], Some(&[2]), f4()).unwrap();
        assert_eq!(r.scores, vec![16]);
        assert_eq!(r.scores[0] as f64 * f4().score_scale(), 0.25);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[1, 3, 2]).unwrap(), 1);
        assert_eq!(argmax(&[5, 5, 0]).unwrap(), 0);
        assert!(argmax::<i64>(&[]).is_err());
    }
}
