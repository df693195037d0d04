//! Single-array CeNN dynamics.
//!
//! Units are normalized: `R_cell = C_cell = 1`, so time is measured in cell
//! time constants and template gains are dimensionless. Physical settling time
//! only enters through the cost model.
//!
//! Template matrices are indexed by neighbor offset: entry `[r][c]` couples the
//! cell at offset `(r - 1, c - 1)` into the center cell, so `b[0][1]` is the
//! northern neighbor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};

/// Output nonlinearity `y = 0.5|x + 1| - 0.5|x - 1|`.
pub fn sat(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("sat is undefined for {x}")));
    }
    Ok(clip(x))
}

/// Unchecked piecewise-linear saturation. Identical to the absolute-value form
/// of [`sat`] but exact on `[-1, 1]`.
#[inline]
pub fn clip(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// 3x3 coupling matrix.
pub type Matrix3 = [[f64; 3]; 3];

pub const ZERO3: Matrix3 = [[0.0; 3]; 3];

/// Center-only matrix with the given gain.
pub const fn center(gain: f64) -> Matrix3 {
    [[0.0, 0.0, 0.0], [0.0, gain, 0.0], [0.0, 0.0, 0.0]]
}

/// Nonlinear cell-interaction function (the D-hat template).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearD {
    #[default]
    None,
    /// Output stage becomes `max(0, sat(x))`.
    ReluLike,
    /// Each neighbor adds `D(x_self - x_neighbor)` with `D(v) = -slope * v`
    /// for `v <= 0` and 0 otherwise. The classic GLOBMAX uses `slope = 1/8`.
    GlobmaxLike { slope: f64 },
}

impl NonlinearD {
    pub const GLOBMAX: NonlinearD = NonlinearD::GlobmaxLike { slope: 0.125 };
}

/// One CeNN operation: feedback `a`, feed-forward `b`, bias `z`, optional `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub a: Matrix3,
    pub b: Matrix3,
    pub z: f64,
    #[serde(default)]
    pub d: NonlinearD,
}

impl Template {
    pub fn new(a: Matrix3, b: Matrix3, z: f64, d: NonlinearD) -> Result<Self> {
        let t = Self { a, b, z, d };
        t.validate()?;
        Ok(t)
    }

    pub fn feedforward(b: Matrix3, z: f64) -> Result<Self> {
        Self::new(ZERO3, b, z, NonlinearD::None)
    }

    /// Builds a template from arbitrary square matrices; only radius 1 is
    /// accepted.
    pub fn from_matrices(a: &[Vec<f64>], b: &[Vec<f64>], z: f64, d: NonlinearD) -> Result<Self> {
        Self::new(to_matrix3(a, "A")?, to_matrix3(b, "B")?, z, d)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .a
            .iter()
            .chain(self.b.iter())
            .flatten()
            .all(|v| v.is_finite())
            && self.z.is_finite();
        if !finite {
            return Err(Error::Template("template entries must be finite".into()));
        }
        if let NonlinearD::GlobmaxLike { slope } = self.d {
            if !(slope.is_finite() && slope >= 0.0) {
                return Err(Error::Template(format!("GLOBMAX slope {slope} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_feedforward(&self) -> bool {
        self.d == NonlinearD::None && self.a.iter().flatten().all(|&v| v == 0.0)
    }

    /// Number of nonzero coefficients in A and B (OTAs that draw current).
    pub fn active_coefficients(&self) -> usize {
        self.a.iter().chain(self.b.iter()).flatten().filter(|&&v| v != 0.0).count()
    }
}

fn to_matrix3(m: &[Vec<f64>], name: &str) -> Result<Matrix3> {
    let n = m.len();
    if n != 3 || m.iter().any(|row| row.len() != 3) {
        let cols = m.first().map_or(0, Vec::len);
        return Err(Error::Template(format!(
            "{name} must be 3x3 (neighborhood radius 1), got {n}x{cols}"
        )));
    }
    let mut out = ZERO3;
    for (r, row) in m.iter().enumerate() {
        out[r].copy_from_slice(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Virtual cells outside the array hold `u = x = y = 0`.
    #[default]
    Zero,
    /// Virtual cells mirror the nearest edge cell.
    Replicate,
}

/// Voltage-to-current conversion of a template coefficient.
///
/// The ideal OTA returns `gain * v`; measured curves replace the product with a
/// table lookup.
pub trait Transconductance: Sync {
    fn current(&self, gain: f64, v: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdealOta;

impl Transconductance for IdealOta {
    #[inline]
    fn current(&self, gain: f64, v: f64) -> f64 {
        gain * v
    }
}

/// State of one CeNN array. Inactive (power-gated) cells hold zero and draw no
/// neighbor current.
#[derive(Debug, Clone, PartialEq)]
pub struct CeNNArrayState {
    pub u: Grid,
    pub x: Grid,
    pub y: Grid,
    active: Vec<bool>,
}

impl CeNNArrayState {
    /// Fresh state with input `u`, zero state and output, all cells active.
    pub fn new(u: Grid) -> Self {
        let shape = u.shape();
        Self {
            u,
            x: Grid::zeros(shape),
            y: Grid::zeros(shape),
            active: vec![true; shape.cells()],
        }
    }

    /// State whose initial `x` equals the input, with `y = sat(x)`.
    pub fn from_input_as_state(u: Grid) -> Self {
        let x = u.clone();
        let y = x.map(clip);
        let n = u.shape().cells();
        Self {
            u,
            x,
            y,
            active: vec![true; n],
        }
    }

    pub fn with_mask(mut self, active: Vec<bool>) -> Result<Self> {
        if active.len() != self.shape().cells() {
            return Err(Error::Shape(format!(
                "mask of {} cells for a {} array",
                active.len(),
                self.shape()
            )));
        }
        self.active = active;
        for i in 0..self.active.len() {
            if !self.active[i] {
                self.x.as_mut_slice()[i] = 0.0;
                self.y.as_mut_slice()[i] = 0.0;
            }
        }
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.u.shape()
    }

    pub fn is_active(&self, r: usize, c: usize) -> bool {
        self.active[r * self.u.cols() + c]
    }

    pub fn active_cells(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }
}

/// Integration controls for the ODE paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleConfig {
    /// Euler step in cell time constants.
    pub dt: f64,
    pub t_max: f64,
    /// Convergence threshold on `max |dx/dt|`.
    pub eps: f64,
    /// `|x|` above this is reported as divergence.
    pub blowup: f64,
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 20.0,
            eps: 1e-6,
            blowup: 1e3,
        }
    }
}

impl SettleConfig {
    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max >= self.dt) || !(self.eps > 0.0) || !(self.blowup > 0.0) {
            return Err(Error::Precondition(format!(
                "need dt > 0, t_max >= dt, eps > 0 (got dt={}, t_max={}, eps={})",
                self.dt, self.t_max, self.eps
            )));
        }
        Ok(())
    }
}

/// Sum of `ota(gain, field[neighbor])` over the 3x3 neighborhood of `(r, c)`.
/// Out-of-array neighbors follow `boundary`; inactive neighbors contribute 0.
#[inline]
fn neighborhood_sum(
    m: &Matrix3,
    field: &Grid,
    mask: &[bool],
    r: usize,
    c: usize,
    boundary: BoundaryPolicy,
    ota: &dyn Transconductance,
) -> f64 {
    let rows = field.rows() as isize;
    let cols = field.cols() as isize;
    let mut acc = 0.0;
    for (dr, row) in m.iter().enumerate() {
        for (dc, &gain) in row.iter().enumerate() {
            if gain == 0.0 {
                continue;
            }
            let mut nr = r as isize + dr as isize - 1;
            let mut nc = c as isize + dc as isize - 1;
            let inside = nr >= 0 && nc >= 0 && nr < rows && nc < cols;
            if !inside {
                match boundary {
                    BoundaryPolicy::Zero => continue,
                    BoundaryPolicy::Replicate => {
                        nr = nr.clamp(0, rows - 1);
                        nc = nc.clamp(0, cols - 1);
                    }
                }
            }
            let idx = nr as usize * field.cols() + nc as usize;
            if !mask[idx] {
                continue;
            }
            acc += ota.current(gain, field.as_slice()[idx]);
        }
    }
    acc
}

fn feedforward_field(state: &CeNNArrayState, t: &Template, boundary: BoundaryPolicy, ota: &dyn Transconductance) -> Grid {
    let shape = state.shape();
    Grid::from_fn(shape, |r, c| {
        if !state.is_active(r, c) {
            return 0.0;
        }
        neighborhood_sum(&t.b, &state.u, &state.active, r, c, boundary, ota) + t.z
    })
}

/// Algebraic steady state of a feed-forward (`A = 0`) template.
pub fn settle_feedforward(state: &CeNNArrayState, t: &Template, boundary: BoundaryPolicy) -> Result<CeNNArrayState> {
    settle_feedforward_with(state, t, boundary, &IdealOta)
}

pub fn settle_feedforward_with(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    ota: &dyn Transconductance,
) -> Result<CeNNArrayState> {
    if !t.is_feedforward() {
        return Err(Error::Precondition(
            "settle_feedforward needs A = 0 and no D template".into(),
        ));
    }
    let x = feedforward_field(state, t, boundary, ota);
    let y = x.map(clip);
    Ok(CeNNArrayState {
        u: state.u.clone(),
        x,
        y,
        active: state.active.clone(),
    })
}

/// Integrates `dx/dt = -x + sum a*y + sum b*u + z` with explicit Euler until
/// `max |dx/dt| < eps` or `t_max` elapses.
pub fn settle_ode(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
) -> Result<CeNNArrayState> {
    settle_ode_with(state, t, boundary, cfg, &IdealOta)
}

pub fn settle_ode_with(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
    ota: &dyn Transconductance,
) -> Result<CeNNArrayState> {
    if t.d != NonlinearD::None {
        return Err(Error::Precondition(
            "template has a D function; use settle_nonlinear_d".into(),
        ));
    }
    integrate(state.clone(), t, boundary, cfg, ota)
}

/// Integrates the dynamics with the template's D function active.
///
/// GLOBMAX-style templates start from `x(0) = u` so the cell begins at its own
/// pixel value; the D term then pulls each cell up toward larger neighbors.
pub fn settle_nonlinear_d(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
) -> Result<CeNNArrayState> {
    settle_nonlinear_d_with(state, t, boundary, cfg, &IdealOta)
}

pub fn settle_nonlinear_d_with(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
    ota: &dyn Transconductance,
) -> Result<CeNNArrayState> {
    let start = match t.d {
        NonlinearD::None => {
            return Err(Error::Precondition(
                "settle_nonlinear_d needs a D function".into(),
            ))
        }
        NonlinearD::GlobmaxLike { .. } => {
            CeNNArrayState::from_input_as_state(state.u.clone()).with_mask(state.active.clone())?
        }
        NonlinearD::ReluLike => state.clone(),
    };
    integrate(start, t, boundary, cfg, ota)
}

fn output_stage(d: NonlinearD, x: f64) -> f64 {
    match d {
        NonlinearD::ReluLike => clip(x).max(0.0),
        _ => clip(x),
    }
}

fn integrate(
    mut s: CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
    ota: &dyn Transconductance,
) -> Result<CeNNArrayState> {
    cfg.check()?;
    t.validate()?;
    let shape = s.shape();
    let ff = feedforward_field(&s, t, boundary, ota);
    for (i, y) in s.y.as_mut_slice().iter_mut().enumerate() {
        *y = if s.active[i] { output_stage(t.d, s.x.as_slice()[i]) } else { 0.0 };
    }
    let has_feedback = t.a.iter().flatten().any(|&v| v != 0.0);
    let steps = (cfg.t_max / cfg.dt).ceil() as usize;
    let mut deriv = Grid::zeros(shape);
    for step in 0..steps {
        let mut max_rate: f64 = 0.0;
        for r in 0..shape.rows {
            for c in 0..shape.cols {
                if !s.is_active(r, c) {
                    continue;
                }
                let x = s.x.get(r, c);
                let mut rate = -x + ff.get(r, c);
                if has_feedback {
                    rate += neighborhood_sum(&t.a, &s.y, &s.active, r, c, boundary, ota);
                }
                if let NonlinearD::GlobmaxLike { slope } = t.d {
                    rate += globmax_term(&s, r, c, slope, boundary);
                }
                deriv.set(r, c, rate);
                max_rate = max_rate.max(rate.abs());
            }
        }
        if max_rate < cfg.eps {
            break;
        }
        let mut peak: f64 = 0.0;
        for i in 0..shape.cells() {
            if !s.active[i] {
                continue;
            }
            let x = s.x.as_slice()[i] + cfg.dt * deriv.as_slice()[i];
            s.x.as_mut_slice()[i] = x;
            s.y.as_mut_slice()[i] = output_stage(t.d, x);
            peak = peak.max(x.abs());
        }
        if !peak.is_finite() || peak > cfg.blowup {
            return Err(Error::Instability {
                step,
                magnitude: peak,
                bound: cfg.blowup,
            });
        }
    }
    Ok(s)
}

fn globmax_term(s: &CeNNArrayState, r: usize, c: usize, slope: f64, boundary: BoundaryPolicy) -> f64 {
    let x_self = s.x.get(r, c);
    let rows = s.x.rows() as isize;
    let cols = s.x.cols() as isize;
    let mut acc = 0.0;
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let mut nr = r as isize + dr;
            let mut nc = c as isize + dc;
            let x_n = if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                match boundary {
                    BoundaryPolicy::Zero => 0.0,
                    BoundaryPolicy::Replicate => {
                        nr = nr.clamp(0, rows - 1);
                        nc = nc.clamp(0, cols - 1);
                        s.x.get(nr as usize, nc as usize)
                    }
                }
            } else {
                if !s.is_active(nr as usize, nc as usize) {
                    continue;
                }
                s.x.get(nr as usize, nc as usize)
            };
            let v = x_self - x_n;
            if v <= 0.0 {
                acc += -slope * v;
            }
        }
    }
    acc
}

/// Dispatches to the closed form for feed-forward templates, the D path for
/// nonlinear templates and the ODE otherwise.
pub fn settle(
    state: &CeNNArrayState,
    t: &Template,
    boundary: BoundaryPolicy,
    cfg: &SettleConfig,
    ota: &dyn Transconductance,
) -> Result<CeNNArrayState> {
    if t.is_feedforward() {
        settle_feedforward_with(state, t, boundary, ota)
    } else if t.d != NonlinearD::None {
        settle_nonlinear_d_with(state, t, boundary, cfg, ota)
    } else {
        settle_ode_with(state, t, boundary, cfg, ota)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(shape: Shape, v: f64) -> CeNNArrayState {
        CeNNArrayState::new(Grid::filled(shape, v))
    }

    fn diff_north() -> Matrix3 {
        [[0.0, 0.5, 0.0], [0.0, -0.5, 0.0], [0.0, 0.0, 0.0]]
    }

    #[test]
    fn sat_regions() {
        assert_eq!(sat(0.5).unwrap(), 0.5);
        assert_eq!(sat(-3.0).unwrap(), -1.0);
        assert_eq!(sat(1.0).unwrap(), 1.0);
        assert!(matches!(sat(f64::NAN), Err(Error::Domain(_))));
        assert!(sat(f64::INFINITY).is_err());
    }

    #[test]
    fn radius_two_rejected() {
        let five = vec![vec![0.0; 5]; 5];
        let three = vec![vec![0.0; 3]; 3];
        let err = Template::from_matrices(&three, &five, 0.0, NonlinearD::None).unwrap_err();
        assert!(err.to_string().contains("radius 1"));
        assert!(Template::feedforward(center(f64::NAN), 0.0).is_err());
    }

    #[test]
    fn ode_identity_settles_to_input() {
        let t = Template::feedforward(center(1.0), 0.0).unwrap();
        let out = settle_ode(&uniform(Shape::new(5, 5), 0.4), &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap();
        for &y in out.y.as_slice() {
            assert!((y - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn ode_bias_shift() {
        // closed form x = u + z = -0.7
        let t = Template::feedforward(center(1.0), -1.0).unwrap();
        let out = settle_ode(&uniform(Shape::new(4, 4), 0.3), &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap();
        for &y in out.y.as_slice() {
            assert!((y + 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn ode_relu_shift_clips() {
        let t = Template::feedforward(center(1.0), -1.0).unwrap();
        let s = uniform(Shape::new(3, 3), -0.5);
        let ode = settle_ode(&s, &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap();
        let ff = settle_feedforward(&s, &t, BoundaryPolicy::Zero).unwrap();
        assert!(ode.y.as_slice().iter().all(|&y| y == -1.0));
        assert!(ff.y.as_slice().iter().all(|&y| y == -1.0));
        assert!((ff.x.get(1, 1) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn feedforward_average_of_constant() {
        let t = Template::feedforward([[1.0 / 9.0; 3]; 3], 0.0).unwrap();
        let out = settle_feedforward(&uniform(Shape::new(5, 5), 0.6), &t, BoundaryPolicy::Zero).unwrap();
        for r in 1..4 {
            for c in 1..4 {
                assert!((out.y.get(r, c) - 0.6).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feedforward_diff_example() {
        // center 0.2, north 0.6: -0.5*0.2 + 0.5*0.6 - 1 = -0.8
        let u = Grid::from_rows(&[&[0.0, 0.6, 0.0], &[0.0, 0.2, 0.0], &[0.0, 0.0, 0.0]]).unwrap();
        let t = Template::feedforward(diff_north(), -1.0).unwrap();
        let out = settle_feedforward(&CeNNArrayState::new(u), &t, BoundaryPolicy::Zero).unwrap();
        assert!((out.y.get(1, 1) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn feedforward_inc_example() {
        let t = Template::feedforward(center(1.0), 1.0).unwrap();
        let out = settle_feedforward(&uniform(Shape::new(2, 2), -0.8), &t, BoundaryPolicy::Zero).unwrap();
        assert!(out.y.as_slice().iter().all(|&y| (y - 0.2).abs() < 1e-12));
    }

    #[test]
    fn feedforward_rejects_feedback() {
        let t = Template::new(center(1.0), center(1.0), 0.0, NonlinearD::None).unwrap();
        assert!(matches!(
            settle_feedforward(&uniform(Shape::new(2, 2), 0.0), &t, BoundaryPolicy::Zero),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn divergence_reports_step() {
        // saturation bounds y, so only a huge bias pushes x past the bound
        let t = Template::new(center(3.0), ZERO3, 2000.0, NonlinearD::None).unwrap();
        let err = settle_ode(&uniform(Shape::new(2, 2), 0.0), &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap_err();
        match err {
            Error::Instability { step, magnitude, .. } => {
                assert!(step > 0 && magnitude > 1e3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_integration_controls() {
        let t = Template::feedforward(center(1.0), 0.0).unwrap();
        let cfg = SettleConfig {
            dt: 0.0,
            ..SettleConfig::default()
        };
        assert!(settle_ode(&uniform(Shape::new(2, 2), 0.0), &t, BoundaryPolicy::Zero, &cfg).is_err());
    }

    #[test]
    fn globmax_uniform_unchanged() {
        let t = Template::new(center(1.0), ZERO3, 0.0, NonlinearD::GLOBMAX).unwrap();
        let s = uniform(Shape::new(4, 4), 0.3);
        let out = settle_nonlinear_d(&s, &t, BoundaryPolicy::Replicate, &SettleConfig::default()).unwrap();
        assert!(out.y.as_slice().iter().all(|&y| (y - 0.3).abs() < 1e-12));
    }

    #[test]
    fn globmax_short_time_reaches_only_neighbors() {
        let t = Template::new(center(1.0), ZERO3, 0.0, NonlinearD::GLOBMAX).unwrap();
        let mut u = Grid::zeros(Shape::new(7, 7));
        u.set(3, 3, 0.8);
        let cfg = SettleConfig {
            t_max: 0.5,
            ..SettleConfig::default()
        };
        let out = settle_nonlinear_d(&CeNNArrayState::new(u), &t, BoundaryPolicy::Zero, &cfg).unwrap();
        assert!(out.y.get(3, 4) > 0.04);
        assert!(out.y.get(2, 2) > 0.04);
        // radius 2 only sees a second-order trickle
        assert!(out.y.get(3, 5) < 0.01);
        assert!(out.y.get(3, 5) < out.y.get(3, 4) / 5.0);
    }

    #[test]
    fn relu_like_output_stage() {
        let t = Template::new(ZERO3, center(1.0), 0.0, NonlinearD::ReluLike).unwrap();
        let out = settle_nonlinear_d(&uniform(Shape::new(2, 2), -0.4), &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap();
        assert!(out.y.as_slice().iter().all(|&y| y == 0.0));
        let out = settle_nonlinear_d(&uniform(Shape::new(2, 2), 0.4), &t, BoundaryPolicy::Zero, &SettleConfig::default()).unwrap();
        assert!(out.y.as_slice().iter().all(|&y| (y - 0.4).abs() < 1e-6));
    }

    #[test]
    fn inactive_cells_hold_zero_and_draw_nothing() {
        let u = Grid::filled(Shape::new(3, 3), 0.5);
        let mut mask = vec![true; 9];
        mask[4] = false;
        let s = CeNNArrayState::new(u).with_mask(mask).unwrap();
        let t = Template::feedforward([[0.1; 3]; 3], 0.0).unwrap();
        let out = settle_feedforward(&s, &t, BoundaryPolicy::Zero).unwrap();
        assert_eq!(out.y.get(1, 1), 0.0);
        // corner: self + 2 active edge neighbors, center masked out
        assert!((out.y.get(0, 0) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn replicate_boundary() {
        let t = Template::feedforward([[1.0 / 9.0; 3]; 3], 0.0).unwrap();
        let out = settle_feedforward(&uniform(Shape::new(3, 3), 0.9), &t, BoundaryPolicy::Replicate).unwrap();
        assert!(out.y.as_slice().iter().all(|&y| (y - 0.9).abs() < 1e-12));
    }
}
