#![no_std]
// `!(x > 0.0)` style checks deliberately reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod boundary;
pub mod complex;
pub mod error;
pub mod knn;
pub mod landscape;
pub mod metrics;
pub mod numerics;
pub mod seed;
pub mod subject;
pub mod visualizer;

pub use error::{Error, Result};
