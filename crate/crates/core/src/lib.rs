//! Differentially private facility location on a bounded interval.
//!
//! A facility is placed on `V = [-m/2, m/2]` to serve `n` agents whose
//! locations are private. The non-private optimum is the median agent; the
//! private mechanism is a continuous exponential mechanism over a widened
//! rank-based loss, which keeps the output distribution piecewise constant
//! and therefore exactly integrable and exactly sampleable.
//!
//! The crate is organized around that exactness:
//!
//! * [`domain`] — datasets of agent locations and the change-one distance.
//! * [`metrics`] — the optimal location, welfare, and the maximum-individual-loss
//!   and welfare-gap metrics, each with a closed form and a definitional oracle.
//! * [`score`] — the percentile loss `q`, its widened variant `p_alpha`, and
//!   their piecewise-constant representations.
//! * [`mechanism`] — the output density, exact tail probabilities and
//!   quantiles, and seeded two-stage sampling.
//! * [`families`] — collapsing-towards-the-median and single-peaked dataset
//!   families, certificates, and the adversarial generators.
//! * [`bounds`] — analytic tail bounds, the direct lower-bound floor, and an
//!   exact privacy auditor.
//!
//! All types are immutable after construction and safe to share across
//! threads. Randomness is derived from `(seed, trial_index)` pairs so results
//! are identical under any parallel schedule.

pub mod bounds;
pub mod domain;
pub mod families;
pub mod jsonio;
pub mod mechanism;
pub mod metrics;
pub mod rng;
pub mod score;

mod error;

pub use error::{Error, Result};
