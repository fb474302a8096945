//! Minimum-relative-entropy transformation and Gaussian-mixture fitting for
//! univariate distributions.
//!
//! The crate is organized around [`DistributionSpec`]: every fit, transform
//! and divergence is an expectation over one, computed by adaptive
//! quadrature on its continuous part and exact summation over its atoms.

pub mod distribution;
pub mod emfit;
pub mod error;
pub mod json;
pub mod mixture;
pub mod pipeline;
pub mod quadrature;
pub mod sizesearch;
pub mod special;
pub mod transform;

pub use distribution::{
    cross_term, relative_entropy, spline_from_points, Atom, DistributionSpec, Family, Moments, TailPolicy,
};
pub use emfit::{em_fit, em_step, fast_fit_two, init_mixture, EmConfig, FitReport, InitStrategy};
pub use error::{Error, Result};
pub use mixture::{moment_match_gaussian, Component, GaussianMixture};
pub use pipeline::{analyze, evaluate, run_pipeline, FitMode, PipelineError, PipelineRequest, PipelineResult, Stage, TransformMode};
pub use quadrature::QuadratureConfig;
pub use sizesearch::{accuracy_measure, select_size, stop_predicate, Accuracy, SizeSearchConfig, SizeSearchResult};
pub use transform::{
    optimal_power, precondition, pushforward, round_power, transform_gap, Bounds, PowerSearch, PowerSearchConfig,
    TransformChain, TransformStep,
};
