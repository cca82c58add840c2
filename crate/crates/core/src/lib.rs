//! Single-index regression by conditional estimation.
//!
//! Given samples `(X_i, Y_i)` with `Y = f(⟨v, X⟩) + noise`, the pipeline
//!
//! 1. standardizes the predictors ([`data::standardize`]),
//! 2. slices the response range dyadically ([`slicing`]),
//! 3. estimates `v` from per-slice moments with SIR, SAVE or SVR ([`index`]),
//! 4. fits a dyadic piecewise polynomial to `Y` against `⟨v̂, X⟩`
//!    ([`regression`]).
//!
//! [`synthetic`] generates seeded benchmark problems and [`harness`] runs
//! the Monte Carlo experiments on top of them.
//!
//! ```
//! use svreg::prelude::*;
//!
//! let problem = Problem::new(
//!     DistributionSpec::gaussian(4),
//!     FunctionSpec::new(FunctionKind::F1),
//!     None,
//!     0.01,
//! )?;
//! let train = problem.sample(4000, 1)?;
//! let fit = Pipeline::default().fit(&train.data)?;
//! let err = index_error(&fit.original_direction()?, &problem.v);
//! assert!(err < 1e-2);
//! # Ok::<(), svreg::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod harness;
pub mod index;
pub mod linalg;
pub mod pipeline;
pub mod regression;
pub mod slicing;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result, Warning};

pub mod prelude {
    pub use crate::data::{
        standardize, Dataset, FilterConfig, Standardization, StandardizedDataset,
    };
    pub use crate::error::{Error, Result};
    pub use crate::index::{estimate, index_error, EstimatorOptions, IndexEstimate, Method};
    pub use crate::pipeline::Pipeline;
    pub use crate::regression::{fit_piecewise, knn_fit, mse, PiecewiseModel, Predictor, SvrModel};
    pub use crate::slicing::LocalMatrix;
    pub use crate::synthetic::{DistributionSpec, FunctionKind, FunctionSpec, Problem};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/standardizing.md")]
    mod standardizing {}
    #[doc = include_str!("../../../book/src/slicing.md")]
    mod slicing {}
    #[doc = include_str!("../../../book/src/index.md")]
    mod index {}
    #[doc = include_str!("../../../book/src/link.md")]
    mod link {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
