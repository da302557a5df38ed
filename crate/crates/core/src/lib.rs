//! Distributional regression trees and forests for responses censored at a
//! threshold, with EMOS-style baselines and scoring-rule evaluation.

pub mod archive;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod families;
pub mod forest;
pub mod mle;
pub mod model;
pub mod special;
pub mod tree;

pub use archive::{ModelArchive, StoredModel};
pub use baselines::{fit_emos, fit_intercept, EmosModel, EmosSpec, InterceptModel};
pub use error::{Error, Result};
pub use families::{DistributionFamily, Family, ParamVector};
pub use forest::{DistForest, ForestConfig};
pub use model::{DistributionalModel, Predictive};
pub use tree::{DistTree, TreeConfig};
