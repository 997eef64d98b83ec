pub mod analytic;
pub mod cli;
pub mod collapse;
pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod trainkit;

pub use error::{Error, Result};
