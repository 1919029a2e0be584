//! Random deep neural networks with Gaussian parameters, their
//! infinite-width Gaussian-process limits, and desk-scale experiments that
//! measure how fast the two laws approach each other in Wasserstein
//! distance.
//!
//! The crate is organized around the pipeline of those experiments:
//!
//! * [`psdlinalg`] - symmetric/PSD matrix calculus (square roots, spectral
//!   floors, partial traces, dominance);
//! * [`quadrature`] - kink-aware Gaussian quadrature shared by the kernel
//!   and moment computations;
//! * [`netarch`] - the generalized network architecture, weight sampling and
//!   the forward recursion;
//! * [`nngp`] - the infinite-width covariance recursion, non-degeneracy
//!   reporting and Gaussian-process sampling;
//! * [`gaussmoments`] - moment functionals of Gaussian pushforwards and the
//!   fluctuation covariance of the empirical kernel;
//! * [`ot`] - Wasserstein estimators: exact assignment matching, the Bures
//!   closed form, and plug-in Gaussian distances;
//! * [`bayes`] - exact Bayesian posteriors: closed-form GP regression and
//!   importance-reweighted network posteriors;
//! * [`harness`] - experiment configs, orchestration, slope fitting and
//!   CSV/JSON outputs behind the `widelimit` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bayes;
pub mod error;
pub mod gaussmoments;
pub mod harness;
pub mod netarch;
pub mod nngp;
pub mod ot;
pub mod psdlinalg;
pub mod quadrature;
pub mod streams;

pub use error::{Error, Result};
