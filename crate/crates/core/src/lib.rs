//! Per-goal solver selection for an SMT portfolio: goal language, feature
//! extraction, cost model, random-forest ranking, evaluation and scheduling.

pub mod cost;
pub mod eval;
pub mod features;
pub mod forest;
pub mod logic;
pub mod scheduler;
pub mod solver;

pub use cost::{Answer, CostConfig, ResultsTable, SolverOutcome};
pub use features::{FeatureVector, TaskId, FEATURE_COUNT, FEATURE_NAMES};
pub use forest::{ForestModel, Hyperparameters, TrainingSet};
pub use logic::{parse_document, print_document, Document};
pub use solver::{SolverId, SolverRanking};
