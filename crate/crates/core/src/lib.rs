// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod config;
pub mod error;
pub mod forest;
pub mod gbr;
pub mod hurdat2;
pub mod labels;
pub mod matrix;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod preprocess;
pub mod smote;
pub mod svm;
pub mod tree;
pub mod windowing;
pub mod workflow;

pub use error::{Error, Result};
