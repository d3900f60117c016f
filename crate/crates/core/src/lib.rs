//! Exact, asymptotic and simulated quantities of birth-death type processes
//! (branching processes, SIS epidemics, household SIS epidemics) whose
//! individuals have arbitrary mean-one lifetimes.

pub mod bd_analytic;
pub mod engine;
pub mod error;
pub mod harness;
pub mod lifetimes;
pub mod logspace;
pub mod oracle;
pub mod rng;
pub mod sis_analytic;
pub mod verification;

pub use bd_analytic::{AnalyticSummary, BirthRateModel};
pub use error::{Error, Result};
pub use lifetimes::{LifetimeDistribution, LifetimeKind};
pub use logspace::LogWeight;
pub use rng::RandomStream;
