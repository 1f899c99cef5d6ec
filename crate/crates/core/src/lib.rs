//! Regression trees and forests with variable importance measured by
//! randomizing the maximal subtrees of a variable ("noising up"), plus a
//! pairwise association statistic built from paired importances.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod noising;
pub mod seed;
pub mod subtree;
pub mod tree;
pub mod vimp;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use forest::{forest_predict, grow_forest, oob_mse, Forest, ForestConfig, TreeEnsemble};
pub use noising::{NoisingMode, VarSet};
pub use tree::{grow_tree, GrowConfig, Tree};
