//! Simulator, template compiler and cost model for convolutional network
//! inference on Cellular Neural Network (CeNN) arrays.

pub mod cenn;
pub mod cost;
pub mod error;
pub mod fc;
pub mod grid;
pub mod netspec;
pub mod nonideal;
pub mod scheduler;
pub mod templates;

pub use cenn::{BoundaryPolicy, CeNNArrayState, NonlinearD, SettleConfig, Template};
pub use error::{Error, Result};
pub use grid::{Grid, Region, Shape};
pub use nonideal::{ExecMode, OtaCurve, QuantSpec};
pub use templates::{DownsampleMode, Step, TemplateProgram};
pub use netspec::{Dataset, Layer, LayerKind, LayerOp, NetworkSpec, PoolKind, Precision, ReluKind};
pub use fc::{argmax, fc_eval, FixedPointFormat};
pub use scheduler::{compile, execute, execute_batch, CeNNProgram, ExecOptions, ExecutionStats, Executor, HardwareConfig, Inference};
pub use cost::{analytic_delay, precision_scale, trace_cost, Activity, CostParams, CostReport, PrecisionScale};
