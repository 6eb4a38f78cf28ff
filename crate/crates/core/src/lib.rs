//! Unbiased variable importance for regression data.
//!
//! Scores come from shallow GUIDE-style trees whose split variables are
//! chosen by chi-squared tests rather than by impurity, adjusted by their
//! mean under response permutation, and normalized against a permutation
//! threshold so that scores above 1 are significant at a chosen level.

pub mod cart;
pub mod dataset;
pub mod error;
pub mod guide;
pub mod importance;
pub mod predvalue;
pub mod report;
pub mod rng;
pub mod simbench;
pub mod split;
pub mod stats;

pub use dataset::{load_csv, read_csv, Column, ColumnData, Dataset, Role};
pub use error::{Error, Result};
pub use guide::{grow_tree, Tree, TreeConfig};
pub use importance::{score, ImportanceReport, VariableScore};
