//! Multilevel low-rank tensor collocation for elliptic PDEs with random
//! coefficients.

pub mod collocation;
pub mod cross;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod htensor;
pub mod multilevel;
pub mod report;
pub mod synthetic;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use htensor::{DenseTensor, HTensor, RankStats};
pub use tree::{DimensionTree, TreeNode, TreeShape};
