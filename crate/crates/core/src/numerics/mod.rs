//! Dense linear algebra and reverse-mode differentiation.

pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod matrix;

pub use gradcheck::grad_check;
pub use graph::{DiffGraph, Gradients, NodeId};
pub use linalg::{pinv, svd, Svd, DEFAULT_PINV_TOL};
pub use matrix::DenseMatrix;
