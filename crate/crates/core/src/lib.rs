//! Attribution-guided constraint repair for tile-based game levels.
//!
//! The crate trains a solvability classifier on minimal 4-tile levels, turns
//! per-tile attributions of the "unsolvable" prediction into repair-priority
//! weights, and solves a weighted constraint problem (lowered to a 0-1 MILP)
//! that minimally edits a level until a start-to-goal path exists.
//!
//! Main pieces:
//!
//! - [`level`]: grid representation, text codec, one-hot encoding.
//! - [`reachability`]: movement templates and the exact BFS solvability oracle.
//! - [`patterns`]: adjacency validity rules extracted from exemplar levels.
//! - [`classifier`]: from-scratch MLP with Adam training and input gradients.
//! - [`attribution`]: Integrated Gradients, DeepLIFT-rescale, uniform baseline.
//! - [`weightgen`]: percentile thresholding and connected-component weighting.
//! - [`csp`]: the mid-level Boolean constraint API, its 0-1 MILP lowering, and
//!   the repair / unsolvable-generation problem builders.
//! - [`solver`]: branch-and-bound with lazy reachability, racing, LP/WCNF export.
//! - [`pipeline`]: dataset generation, end-to-end repair, experiments, stats.

pub mod attribution;
pub mod classifier;
pub mod csp;
pub mod level;
pub mod patterns;
pub mod pipeline;
pub mod reachability;
pub mod solver;
pub mod svg;
pub mod weightgen;

pub use attribution::{AttributionGrid, AttributionMethod};
pub use classifier::{LabeledDataset, MlpModel, TrainConfig};
pub use csp::{ConstraintProgram, Literal, VarId, VarMap};
pub use level::{diff_cells, Level, OneHotTensor, TileKind};
pub use patterns::PatternRules;
pub use reachability::{check_solvable, MovementTemplate, ReachResult};
pub use solver::{race, solve_bb, SolveResult, SolveStatus, SolverConfig};
pub use weightgen::WeightGrid;
