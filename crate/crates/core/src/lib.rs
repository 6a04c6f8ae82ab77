//! Simulation library for privacy-preserving data procurement.
//!
//! A data analyst wants to count how many of `n` players hold a target type,
//! but types correlate with each player's private cost of privacy. The
//! mechanism here posts a type-indexed contract whose acceptance probability
//! is the same constant `c` for every type, estimates the count from the
//! accepting sample with Laplace noise, and pays accepters a Laplace-noised
//! price, so both the estimate and the payments stay differentially private
//! across adjacent cost-data pairs.
//!
//! The crate provides:
//!
//! * [`dist`] — cost distributions (closed-form, discrete, oracle-only CDF)
//!   and the Laplace noise source;
//! * [`contract`] — contract construction hitting acceptance probability `c`
//!   exactly, including randomized offers for step CDFs;
//! * [`agents`] — populations, decision rules, and the incentive audits;
//! * [`mechanism`] — the estimation mechanism, its accuracy bound, and the
//!   parameter-selection formulas (fixed accuracy, fixed budget);
//! * [`privacy`] — empirical two-sided histogram-ratio audits of the
//!   estimate and payment distributions;
//! * [`benchmarks`] — virtual costs, ironing, optimal w-unit procurement,
//!   and approximation-ratio experiments;
//! * [`rng`] / [`stats`] — splittable seeded streams and small statistics
//!   helpers.

pub mod agents;
pub mod benchmarks;
pub mod contract;
pub mod dist;
pub mod mechanism;
pub mod privacy;
pub mod rng;
pub mod stats;
