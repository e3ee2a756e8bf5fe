//! Career-level analysis of researcher productivity and journal prestige.
//!
//! The library turns raw publication records into inflation-adjusted,
//! discipline-adjusted standard scores, classifies career years into the
//! seven sectors of the prestige-versus-productivity plane, and quantifies
//! career dynamics with null-model transition analysis, frequentist tests,
//! and a hierarchical Bayesian regression. Synthetic corpora with planted
//! ground truth make every stage verifiable end to end.
//!
//! Pipeline stages (see each module's docs):
//!
//! 1. [`corpus`]: load, validate, join and filter publication data into
//!    per-researcher yearly career series.
//! 2. [`robust`]: Huber joint estimation of location and scale.
//! 3. [`normalize`]: productivity and prestige standard scores, the latter
//!    against a size-corrected resampling null.
//! 4. [`plane`]: sector classification, researcher categories, occupation
//!    entropy.
//! 5. [`transitions`]: sector transition counts against a career-shuffle
//!    null model.
//! 6. [`stats`]: logistic regression, permutation tests, bootstrap CIs.
//! 7. [`bayes`]: hierarchical Bayesian model of prestige on productivity
//!    (and optionally career age) with multi-chain Gibbs sampling.
//! 8. [`career`]: career-age trends and sector occupancy matrices.
//! 9. [`synth`]: synthetic corpora with planted ground truth.
//!
//! All randomized stages draw from counter-based substreams derived from a
//! single master seed ([`rng`]), so results are independent of iteration
//! order and thread count.

pub mod bayes;
pub mod career;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod manifest;
pub mod normalize;
pub mod numeric;
pub mod plane;
pub mod report;
pub mod rng;
pub mod robust;
pub mod stats;
pub mod svg;
pub mod synth;
pub mod transitions;

pub use error::{Error, Result};
