//! Template programs that realize CoNN layer math as sequences of CeNN steps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cenn::{self, center, clip, BoundaryPolicy, CeNNArrayState, IdealOta, Matrix3, NonlinearD, SettleConfig, Template, Transconductance, ZERO3};
use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};
use crate::nonideal::QuantSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleMode {
    /// Keep the top-left cell of every 2x2 group; odd dimensions are an error.
    Half,
    /// As `Half`, dropping a trailing odd row/column.
    HalfFloor,
}

impl DownsampleMode {
    pub fn output_shape(self, s: Shape) -> Result<Shape> {
        match self {
            Self::Half if !s.rows.is_multiple_of(2) || !s.cols.is_multiple_of(2) => Err(Error::Shape(format!(
                "2x2 downsampling needs even dimensions, got {s}"
            ))),
            _ => Ok(Shape::new(s.rows / 2, s.cols / 2)),
        }
    }
}

/// Compass direction of the neighbor used by one max-pool compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
    E,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::S, Direction::E, Direction::W];

    /// Template matrix index of the neighbor.
    fn index(self) -> (usize, usize) {
        match self {
            Self::N => (0, 1),
            Self::S => (2, 1),
            Self::E => (1, 2),
            Self::W => (1, 0),
        }
    }
}

/// Neighborhood covered by the linear max-pool program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxNeighborhood {
    /// Four in-place cardinal compares. Each compare widens the running max by
    /// one cell in its direction, so the four together cover the full 3x3
    /// square. 16 steps.
    #[default]
    Square,
    /// Max over self and the four cardinal neighbors only: separate vertical
    /// and horizontal passes merged by a two-map compare. 22 steps.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Step {
    /// Settle the array with the current map as input; the output becomes the
    /// current map. `t_max` overrides the integration horizon.
    ApplyTemplate { template: Template, t_max: Option<f64> },
    StoreToMem(usize),
    LoadToInput(usize),
    /// Current map becomes `sat(current + mem[slot])`.
    AddFromMem(usize),
    Downsample2x2(DownsampleMode),
    /// Marks the current map as the program result.
    WriteBack,
}

impl Step {
    pub fn apply(template: Template) -> Self {
        Step::ApplyTemplate { template, t_max: None }
    }

    /// Whether the step occupies the array for one settle time.
    pub fn is_compute(&self) -> bool {
        matches!(self, Step::ApplyTemplate { .. } | Step::AddFromMem(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateProgram {
    steps: Vec<Step>,
    external_slots: Vec<usize>,
}

/// Evaluation options shared by every step of a program.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub boundary: BoundaryPolicy,
    pub settle: SettleConfig,
    pub ota: &'a dyn Transconductance,
    /// Quantize each step output (after `sat`) to this grid.
    pub quant: Option<QuantSpec>,
}

impl Default for StepContext<'_> {
    fn default() -> Self {
        Self {
            boundary: BoundaryPolicy::Zero,
            settle: SettleConfig::default(),
            ota: &IdealOta,
            quant: None,
        }
    }
}

impl StepContext<'_> {
    fn finish(&self, g: Grid) -> Grid {
        match self.quant {
            Some(q) => g.map(|v| q.quantize(v)),
            None => g,
        }
    }

    /// Settles one template with `input` as `u` and returns `y`.
    pub fn settle(&self, input: &Grid, t: &Template, t_max: Option<f64>, mask: Option<&[bool]>) -> Result<Grid> {
        let mut state = CeNNArrayState::new(input.clone());
        if let Some(m) = mask {
            state = state.with_mask(m.to_vec())?;
        }
        let mut cfg = self.settle;
        if let Some(t) = t_max {
            cfg.t_max = t;
        }
        let out = cenn::settle(&state, t, self.boundary, &cfg, self.ota)?;
        Ok(self.finish(out.y))
    }

    pub fn accumulate(&self, a: &Grid, b: &Grid) -> Result<Grid> {
        Ok(self.finish(add_maps(a, b)?))
    }
}

impl TemplateProgram {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        Self::with_external_slots(steps, Vec::new())
    }

    /// Program whose `external_slots` are filled before it runs.
    pub fn with_external_slots(steps: Vec<Step>, external_slots: Vec<usize>) -> Result<Self> {
        let p = Self { steps, external_slots };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Program("template program has no steps".into()));
        }
        let mut written: Vec<usize> = self.external_slots.clone();
        for (i, s) in self.steps.iter().enumerate() {
            match s {
                Step::StoreToMem(slot) => written.push(*slot),
                Step::LoadToInput(slot) | Step::AddFromMem(slot) if !written.contains(slot) => {
                    return Err(Error::Program(format!("step {i} reads slot {slot} before it is written")));
                }
                Step::ApplyTemplate { template, t_max } => {
                    template.validate()?;
                    if let Some(t) = t_max {
                        if !(t.is_finite() && *t > 0.0) {
                            return Err(Error::Program(format!("step {i}: t_max {t} must be positive")));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn external_slots(&self) -> &[usize] {
        &self.external_slots
    }

    pub fn template_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::ApplyTemplate { .. })).count()
    }

    /// Steps that each take one settle time (templates and accumulates).
    pub fn compute_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.is_compute()).count()
    }

    /// Number of distinct memory slots used.
    pub fn slots_used(&self) -> usize {
        let mut slots: Vec<usize> = self.external_slots.clone();
        for s in &self.steps {
            if let Step::StoreToMem(k) | Step::LoadToInput(k) | Step::AddFromMem(k) = s {
                slots.push(*k);
            }
        }
        slots.sort_unstable();
        slots.dedup();
        slots.len()
    }

    pub fn then(mut self, other: TemplateProgram) -> Result<Self> {
        self.steps.extend(other.steps);
        self.validate()?;
        Ok(self)
    }

    /// Runs the program on one map with ideal settings.
    pub fn run(&self, input: &Grid) -> Result<Grid> {
        self.run_with(input, &StepContext::default(), &BTreeMap::new())
    }

    pub fn run_with(&self, input: &Grid, ctx: &StepContext<'_>, external: &BTreeMap<usize, Grid>) -> Result<Grid> {
        let mut mem: BTreeMap<usize, Grid> = BTreeMap::new();
        for &slot in &self.external_slots {
            let g = external
                .get(&slot)
                .ok_or_else(|| Error::Program(format!("external slot {slot} not provided")))?;
            mem.insert(slot, g.clone());
        }
        let mut cur = input.clone();
        let mut result = None;
        for step in &self.steps {
            match step {
                Step::ApplyTemplate { template, t_max } => cur = ctx.settle(&cur, template, *t_max, None)?,
                Step::StoreToMem(slot) => {
                    mem.insert(*slot, cur.clone());
                }
                Step::LoadToInput(slot) => cur = mem[slot].clone(),
                Step::AddFromMem(slot) => cur = ctx.accumulate(&cur, &mem[slot])?,
                Step::Downsample2x2(mode) => cur = downsample(&cur, *mode)?,
                Step::WriteBack => result = Some(cur.clone()),
            }
        }
        Ok(result.unwrap_or(cur))
    }
}

fn ff(b: Matrix3, z: f64) -> Template {
    Template::feedforward(b, z).expect("library template is finite")
}

/// Single feed-forward step computing the zero-padded cross-correlation of the
/// input with `kernel`, plus `bias`, clipped.
pub fn conv_program(kernel: Matrix3, bias: f64) -> Result<TemplateProgram> {
    TemplateProgram::new(vec![Step::apply(Template::feedforward(kernel, bias)?)])
}

pub fn relu_shift_down() -> Template {
    ff(center(1.0), -1.0)
}

pub fn relu_shift_up() -> Template {
    ff(center(1.0), 1.0)
}

/// `max(0, u)` for `u` in `[-1, 1]` in two linear steps.
pub fn relu_program() -> TemplateProgram {
    TemplateProgram::new(vec![Step::apply(relu_shift_down()), Step::apply(relu_shift_up())]).expect("valid")
}

/// `0.5 * neighbor - 0.5 * self - 1`.
pub fn diff_template(dir: Direction) -> Template {
    let mut b = center(-0.5);
    let (r, c) = dir.index();
    b[r][c] = 0.5;
    ff(b, -1.0)
}

pub fn inc_template() -> Template {
    ff(center(1.0), 1.0)
}

pub fn mult_template() -> Template {
    ff(center(2.0), 0.0)
}

const SCRATCH: usize = 0;

/// Replaces each pixel with `max(self, neighbor in dir)` for inputs whose
/// neighbor exceeds self by at most 1 (always true on `[0, 1]`).
pub fn maxpool_compare_step(dir: Direction) -> TemplateProgram {
    TemplateProgram::new(compare_steps(dir, SCRATCH)).expect("valid")
}

fn compare_steps(dir: Direction, slot: usize) -> Vec<Step> {
    vec![
        Step::StoreToMem(slot),
        Step::apply(diff_template(dir)),
        Step::apply(inc_template()),
        Step::apply(mult_template()),
        Step::AddFromMem(slot),
    ]
}

/// Linear max pooling over the 3x3 square, optionally downsampled with `Half`.
pub fn maxpool_program(downsample: bool) -> TemplateProgram {
    let ds = downsample.then_some(DownsampleMode::Half);
    maxpool_program_with(MaxNeighborhood::Square, ds)
}

pub fn maxpool_program_with(neigh: MaxNeighborhood, downsample: Option<DownsampleMode>) -> TemplateProgram {
    maxpool_program_ordered(neigh, Direction::ALL, downsample)
}

/// As [`maxpool_program_with`] with an explicit compare order. For `Cross` the
/// first two directions form one pass and the last two the other.
pub fn maxpool_program_ordered(neigh: MaxNeighborhood, order: [Direction; 4], downsample: Option<DownsampleMode>) -> TemplateProgram {
    let mut steps = Vec::new();
    match neigh {
        MaxNeighborhood::Square => {
            for d in order {
                steps.extend(compare_steps(d, SCRATCH));
            }
        }
        MaxNeighborhood::Cross => {
            const INPUT: usize = 1;
            const FIRST: usize = 2;
            const SECOND: usize = 3;
            const NEG_FIRST: usize = 4;
            steps.push(Step::StoreToMem(INPUT));
            steps.extend(compare_steps(order[0], SCRATCH));
            steps.extend(compare_steps(order[1], SCRATCH));
            steps.push(Step::StoreToMem(FIRST));
            steps.push(Step::LoadToInput(INPUT));
            steps.extend(compare_steps(order[2], SCRATCH));
            steps.extend(compare_steps(order[3], SCRATCH));
            steps.push(Step::StoreToMem(SECOND));
            // two-map DIFF: 0.5*second - 0.5*first - 1, then INC/MULT/ADD first
            steps.push(Step::LoadToInput(FIRST));
            steps.push(Step::apply(ff(center(-0.5), 0.0)));
            steps.push(Step::StoreToMem(NEG_FIRST));
            steps.push(Step::LoadToInput(SECOND));
            steps.push(Step::apply(ff(center(0.5), -1.0)));
            steps.push(Step::AddFromMem(NEG_FIRST));
            steps.push(Step::apply(inc_template()));
            steps.push(Step::apply(mult_template()));
            steps.push(Step::AddFromMem(FIRST));
        }
    }
    if let Some(mode) = downsample {
        steps.push(Step::Downsample2x2(mode));
    }
    TemplateProgram::new(steps).expect("valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolWindow {
    #[serde(rename = "2x2")]
    W2x2,
    #[serde(rename = "3x3")]
    W3x3,
}

/// 2x2 window anchored at its top-left cell: the cell, east, south, south-east.
pub const AVG_2X2: Matrix3 = [[0.0, 0.0, 0.0], [0.0, 0.25, 0.25], [0.0, 0.25, 0.25]];
pub const AVG_3X3: Matrix3 = [[1.0 / 9.0; 3]; 3];

pub fn avgpool_template(window: PoolWindow) -> Template {
    match window {
        PoolWindow::W2x2 => ff(AVG_2X2, 0.0),
        PoolWindow::W3x3 => ff(AVG_3X3, 0.0),
    }
}

pub fn avgpool_program(window: PoolWindow, downsample: Option<DownsampleMode>) -> TemplateProgram {
    let mut steps = vec![Step::apply(avgpool_template(window))];
    if let Some(mode) = downsample {
        steps.push(Step::Downsample2x2(mode));
    }
    TemplateProgram::new(steps).expect("valid")
}

pub fn nonlinear_relu_template() -> Template {
    Template::new(ZERO3, center(1.0), 0.0, NonlinearD::ReluLike).expect("valid")
}

pub fn globmax_template() -> Template {
    Template::new(center(1.0), ZERO3, 0.0, NonlinearD::GLOBMAX).expect("valid")
}

pub fn nonlinear_relu_program() -> TemplateProgram {
    TemplateProgram::new(vec![Step::apply(nonlinear_relu_template())]).expect("valid")
}

/// GLOBMAX pooling; `t_max` sets how far the maximum spreads.
pub fn nonlinear_pool_program(t_max: f64, downsample: Option<DownsampleMode>) -> Result<TemplateProgram> {
    let mut steps = vec![Step::ApplyTemplate {
        template: globmax_template(),
        t_max: Some(t_max),
    }];
    if let Some(mode) = downsample {
        steps.push(Step::Downsample2x2(mode));
    }
    TemplateProgram::new(steps)
}

/// Elementwise `sat(a + b)`.
pub fn add_maps(a: &Grid, b: &Grid) -> Result<Grid> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("cannot add {} and {} maps", a.shape(), b.shape())));
    }
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| clip(x + y)).collect();
    Grid::from_vec(a.shape(), data)
}

/// Keeps the top-left cell of each 2x2 group.
pub fn downsample(g: &Grid, mode: DownsampleMode) -> Result<Grid> {
    let out = mode.output_shape(g.shape())?;
    Ok(Grid::from_fn(out, |r, c| g.get(2 * r, 2 * c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Grid {
        Grid::filled(Shape::new(1, 1), v)
    }

    fn pair_north(center_v: f64, north: f64) -> Grid {
        Grid::from_rows(&[&[0.0, north, 0.0], &[0.0, center_v, 0.0], &[0.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn relu_examples() {
        let p = relu_program();
        assert_eq!(p.run(&one(0.5)).unwrap().get(0, 0), 0.5);
        assert_eq!(p.run(&one(-0.3)).unwrap().get(0, 0), 0.0);
        assert_eq!(p.run(&one(0.0)).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn compare_examples() {
        let p = maxpool_compare_step(Direction::N);
        assert!((p.run(&pair_north(0.2, 0.6)).unwrap().get(1, 1) - 0.6).abs() < 1e-15);
        assert_eq!(p.run(&pair_north(0.6, 0.2)).unwrap().get(1, 1), 0.6);
        assert_eq!(p.run(&pair_north(0.4, 0.4)).unwrap().get(1, 1), 0.4);
        assert_eq!(p.template_count(), 3);
        assert_eq!(p.compute_steps(), 4);
    }

    #[test]
    fn compare_clips_when_gap_exceeds_one() {
        // MULT saturates at 1, so the reconstruction stops at self + 1
        let p = maxpool_compare_step(Direction::N);
        let y = p.run(&pair_north(-0.8, 0.9)).unwrap().get(1, 1);
        assert!((y - 0.2).abs() < 1e-12);
    }

    #[test]
    fn step_counts() {
        assert_eq!(maxpool_program(false).compute_steps(), 16);
        assert_eq!(maxpool_program(false).template_count(), 12);
        assert_eq!(maxpool_program_with(MaxNeighborhood::Cross, None).compute_steps(), 22);
        assert_eq!(relu_program().compute_steps(), 2);
        assert_eq!(avgpool_program(PoolWindow::W2x2, None).compute_steps(), 1);
    }

    #[test]
    fn maxpool_block_downsampled() {
        let g = Grid::from_rows(&[&[0.1, 0.4], &[0.0, 0.3]]).unwrap();
        let out = maxpool_program(true).run(&g).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1));
        assert!((out.get(0, 0) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn odd_downsample_rejected() {
        let g = Grid::zeros(Shape::new(3, 4));
        assert!(matches!(maxpool_program(true).run(&g), Err(Error::Shape(_))));
        let out = maxpool_program_with(MaxNeighborhood::Square, Some(DownsampleMode::HalfFloor)).run(&g).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 2));
    }

    #[test]
    fn cross_excludes_diagonals() {
        let mut g = Grid::zeros(Shape::new(3, 3));
        g.set(0, 0, 0.75);
        g.set(0, 1, 0.25);
        let cross = maxpool_program_with(MaxNeighborhood::Cross, None).run(&g).unwrap();
        let square = maxpool_program(false).run(&g).unwrap();
        assert_eq!(cross.get(1, 1), 0.25);
        assert_eq!(square.get(1, 1), 0.75);
    }

    #[test]
    fn avgpool_2x2_anchor() {
        let g = Grid::from_rows(&[&[0.2, 0.4], &[0.6, 0.8]]).unwrap();
        let out = avgpool_program(PoolWindow::W2x2, None).run(&g).unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn avgpool_constant() {
        let g = Grid::filled(Shape::new(5, 5), -0.3);
        let out = avgpool_program(PoolWindow::W3x3, None).run(&g).unwrap();
        assert!((out.get(2, 2) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn add_maps_examples() {
        assert_eq!(add_maps(&one(0.3), &one(0.2)).unwrap().get(0, 0), 0.5);
        assert_eq!(add_maps(&one(0.8), &one(0.9)).unwrap().get(0, 0), 1.0);
        assert!(add_maps(&one(0.0), &Grid::zeros(Shape::new(2, 1))).is_err());
    }

    #[test]
    fn unwritten_slot_rejected() {
        let err = TemplateProgram::new(vec![Step::AddFromMem(3)]).unwrap_err();
        assert!(err.to_string().contains("slot 3"));
        assert!(TemplateProgram::new(vec![]).is_err());
        assert!(TemplateProgram::with_external_slots(vec![Step::AddFromMem(3)], vec![3]).is_ok());
    }

    #[test]
    fn nonlinear_programs() {
        let out = nonlinear_relu_program().run(&one(-0.4)).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        let g = Grid::filled(Shape::new(4, 4), 0.2);
        let out = nonlinear_pool_program(5.0, None).unwrap().run(&g).unwrap();
        assert!(out.max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn globmax_fills_group() {
        let mut g = Grid::zeros(Shape::new(6, 6));
        g.set(2, 2, 0.8);
        let out = nonlinear_pool_program(30.0, None).unwrap().run(&g).unwrap();
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            assert!((out.get(r, c) - 0.8).abs() < 0.05, "({r},{c}) = {}", out.get(r, c));
        }
    }

    #[test]
    fn quantized_context_rounds_outputs() {
        let ctx = StepContext {
            quant: Some(QuantSpec::new(4).unwrap()),
            ..StepContext::default()
        };
        let p = conv_program(center(1.0), 0.0).unwrap();
        let out = p.run_with(&one(0.3), &ctx, &BTreeMap::new()).unwrap();
        assert_eq!(out.get(0, 0), 0.25);
    }
}
