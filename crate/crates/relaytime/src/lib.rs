//! Travel-time analysis for packets hopping along a relay chain through
//! Poisson-field interference.
//!
//! A packet crosses an N-hop chain of fixed relays. Every time slot,
//! each interferer in a planar Poisson field transmits independently
//! with some probability, fading is Rayleigh, and the current hop
//! succeeds when its signal-to-interference ratio clears a threshold.
//! The slot count until delivery — the travel time — is random in the
//! fading, the medium access, and the interferer positions themselves.
//!
//! The library computes the distribution and moments of that travel
//! time two independent ways:
//!
//! * **Analytically** ([`moments`], [`pmf`], [`speed`]): success
//!   probabilities conditioned on the interferer field reduce, via the
//!   probability generating functional of the Poisson process, to
//!   two-dimensional integrals evaluated by certified adaptive
//!   quadrature ([`quad`]). Works for both the *dependent* regime
//!   (one field realization frozen for the packet's whole journey,
//!   hops correlated) and the *independent* regime (fresh field each
//!   slot, hops i.i.d.).
//! * **Empirically** ([`mc`]): a slot-level Monte Carlo simulator with
//!   deterministic, splittable seeding that replays the exact slot
//!   dynamics and serves as an end-to-end check on the analytics.
//!
//! The two routes share only the model types in [`model`]; keeping
//! their numerics disjoint is what makes cross-validation meaningful.

pub mod error;
pub mod mc;
pub mod model;
pub mod moments;
pub mod pmf;
pub mod quad;
pub mod speed;
pub(crate) mod util;

pub use error::{Error, Result};
pub use mc::{
    estimate, sample_ppp, simulate_packet, simulate_slot, McConfig, McEstimate, SamplingRadius,
    TrialOutcome,
};
pub use model::{
    ChainTopology, InterferenceMode, Link, PathLossKind, PathLossModel, Point, SystemParams,
};
pub use moments::{
    chain_moments, check_divergence, covariance_curve, cross_moment, link_moments,
    success_probability, DivergenceStatus, EvalContext, LinkMoments, MomentReport,
};
pub use pmf::{independent_pmf, joint_pmf, link_pmf, travel_time_pmf, PmfTable};
pub use quad::{IntegralResult, IntegrationSpec, RadiusPolicy};
pub use speed::{
    asymptotic_speed, truncation_lag, variance_upper_bound, CovarianceTruncation, SpeedReport,
    DEFAULT_COVARIANCE_THRESHOLD,
};
