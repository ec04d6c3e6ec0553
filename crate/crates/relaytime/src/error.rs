use thiserror::Error;

/// Errors surfaced by model construction, quadrature, moment evaluation,
/// PMF assembly, and Monte Carlo estimation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor argument violated its domain (reported by name).
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Path loss evaluated at zero distance under the singular law.
    #[error("singular path loss is undefined at coincident points")]
    SingularAtZeroDistance,

    /// The dependent-mode mean diverges: singular path loss with
    /// transmit probability 1 makes E[T_n] infinite for every alpha.
    #[error("dependent-mode mean is infinite (singular path loss, transmit probability 1)")]
    InfiniteDependentMean,

    /// Adaptive quadrature ran out of evaluation budget before reaching
    /// the requested tolerance. Carries the best estimate so far.
    #[error(
        "quadrature did not converge within {evaluations} evaluations \
         (best estimate {best:.17e}, error bound {error_bound:.3e})"
    )]
    QuadratureBudget {
        best: f64,
        error_bound: f64,
        evaluations: usize,
    },

    /// The truncation radius grew past every representable scale without
    /// the tail envelope dropping below the absolute-tolerance target.
    #[error("tail envelope never fell below {target:.3e} (reached radius {radius:.3e})")]
    TailEnvelopeStalled { target: f64, radius: f64 },

    /// An alternating sum cancelled past the point where the result is
    /// distinguishable from accumulated floating-point noise.
    #[error(
        "alternating sum lost precision: result {value:.6e} is below the \
         noise floor {noise_floor:.6e}"
    )]
    PrecisionLoss { value: f64, noise_floor: f64 },

    /// The composition sum for the travel-time PMF would exceed the
    /// configured number of joint-PMF terms.
    #[error(
        "PMF term budget exceeded at t={t} over {links} links: \
         {terms} joint terms > budget {budget}"
    )]
    TermBudget {
        t: u64,
        links: usize,
        terms: u128,
        budget: u64,
    },

    /// Success probability underflowed to zero; the independent-mode
    /// mean 1/success_probability is not representable.
    #[error("success probability underflowed to zero; independent-mode mean diverges")]
    ZeroSuccessProbability,

    /// Every Monte Carlo trial hit the slot cap; the estimate is unusable.
    #[error("all {trials} trials were censored at slot cap {slot_cap}")]
    AllCensored { trials: u64, slot_cap: u64 },

    /// The covariance-truncation search hit its lag cap with the
    /// pairwise link covariance still at or above the threshold.
    #[error(
        "covariance truncation lag budget exceeded: still {last:.3e} \
         (threshold {threshold:.3e}) at lag {max_lag}"
    )]
    LagBudget {
        threshold: f64,
        max_lag: u32,
        last: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
