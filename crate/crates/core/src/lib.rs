//! Bayesian simultaneous file matching and regression when the categorical
//! matching variables may be misreported.
//!
//! Records of two files that share blocking and matching fields are linked
//! within pools of identical codes while the regression of one file's outcome
//! on the other's is estimated. Reported matching codes in file 2 may be wrong;
//! the true codes are sampled alongside the linkage under a latent-class model.

pub mod analysis;
pub mod data;
pub mod error;
pub mod error_model;
pub mod latent_class;
pub mod linkage;
pub mod oracle;
pub mod pool_move;
pub mod pools;
pub mod rng;
pub mod sampler;
pub mod scenario;
pub mod sim;
pub mod state;

pub use analysis::{AnalysisModel, Theta};
pub use data::{Code, FieldRole, FieldSpec, InCommonSchema, RecordTable};
pub use error::{Error, Result};
pub use sampler::{ChainConfig, ModelKind, PosteriorStore, Priors, Problem, Sampler};
pub use scenario::Scenario;
