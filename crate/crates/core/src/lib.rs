//! Sparse Factor Method: supervised sparse latent-factor regression for one
//! or several data assays, with the baselines and simulation harness used to
//! compare it against LASSO, elastic net and supervised PCA.

// `!(x > 0.0)` rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod multi;
pub mod procrustes;
pub mod simgen;
pub mod single;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/bound_lasso.md")]
    mod bound_lasso {}
    #[doc = include_str!("../../../book/src/single.md")]
    mod single {}
    #[doc = include_str!("../../../book/src/multi.md")]
    mod multi {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
