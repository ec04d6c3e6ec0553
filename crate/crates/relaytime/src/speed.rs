//! Long-chain speed asymptotics.
//!
//! Over a uniform chain the travel time is a sum of per-link slot
//! counts with identical marginals, so the packet's velocity — hops
//! covered per slot, times the hop length — concentrates around
//! `L / E[T_link]` as the chain grows. This module reports that limit,
//! the variance envelope that certifies the concentration, and the
//! resulting Chebyshev bound on straying from it.
//!
//! The envelope is where the work is. In dependent mode the hops share
//! one frozen interferer field, so link times are positively correlated
//! and Var[T] picks up `2·Σ_{m<n} Cov[T_m, T_n]` on top of
//! `N·Var[T_link]`. The pairwise covariance decays quickly with hop
//! separation — distant links are dominated by disjoint regions of the
//! field — so we cap the sum by *truncation*: find the smallest lag K
//! at which the covariance drops below a threshold, charge every
//! closer pair the adjacent-link covariance C (the largest term, since
//! the covariance is non-increasing in separation), and drop the rest:
//!
//! `Var[T] ≤ N·Var[T_link] + 2·N·min(N−1, K)·C`.
//!
//! That keeps the envelope linear in N, which is exactly what drives
//! the Chebyshev tail probability to zero like 1/N and makes the speed
//! limit an honest limit. Independent mode has no cross terms; its
//! envelope is `N·Var[T_link]` exactly.
//!
//! The divergent regime (dependent mode, singular path loss, transmit
//! probability 1) has an infinite per-link mean. Following the same
//! convention as [`chain_moments`](crate::moments::chain_moments) —
//! an infinite answer is an answer — [`asymptotic_speed`] returns a
//! report with speed exactly 0 and [`SpeedReport::is_divergent`] set,
//! rather than an error.

use crate::error::{Error, Result};
use crate::model::{InterferenceMode, Link, Point, SystemParams};
use crate::moments::{
    check_divergence, covariance_curve, link_moments, DivergenceStatus, EvalContext,
};

/// Default covariance-truncation threshold: lags whose pairwise link
/// covariance falls below this are dropped from the variance envelope.
pub const DEFAULT_COVARIANCE_THRESHOLD: f64 = 1e-3;

/// Hard cap on the truncation-lag search. The covariance decays like a
/// power of the separation whenever the mean is finite, so a healthy
/// search ends after a handful of lags; hitting the cap means the
/// threshold sits far below the decay floor and comes back as
/// [`Error::LagBudget`].
const MAX_TRUNCATION_LAG: u32 = 256;

/// Outcome of the covariance-truncation search: the first lag at which
/// the pairwise link covariance dips below the threshold, plus the
/// adjacent-link covariance that dominates every shorter lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceTruncation {
    lag: u32,
    adjacent_covariance: f64,
    threshold: f64,
}

impl CovarianceTruncation {
    /// Assemble a certificate directly from its parts. Normally
    /// produced by [`truncation_lag`]; the constructor exists for
    /// callers carrying a lag and covariance from external analysis.
    pub fn new(lag: u32, adjacent_covariance: f64, threshold: f64) -> Result<Self> {
        if lag < 1 {
            return Err(Error::invalid("lag", "truncation lag must be >= 1"));
        }
        if !adjacent_covariance.is_finite() || adjacent_covariance < 0.0 {
            return Err(Error::invalid(
                "adjacent_covariance",
                "adjacent covariance must be finite and >= 0",
            ));
        }
        if !threshold.is_finite() || !(threshold > 0.0) {
            return Err(Error::invalid(
                "threshold",
                "covariance threshold must be finite and > 0",
            ));
        }
        Ok(CovarianceTruncation {
            lag,
            adjacent_covariance,
            threshold,
        })
    }

    /// Smallest hop separation (in links) at which `Cov[T_m, T_n]` is
    /// below the threshold. Always >= 1.
    pub fn lag(&self) -> u32 {
        self.lag
    }

    /// `Cov[T_n, T_{n+1}]` — the largest pairwise term, charged to
    /// every pair that survives truncation.
    pub fn adjacent_covariance(&self) -> f64 {
        self.adjacent_covariance
    }

    /// The cut-off the search was run with.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Search for the smallest lag K (in hops) with `Cov[T_n, T_{n+K}]`
/// below `threshold`. Dependent mode only, like [`covariance_curve`]
/// underneath it.
///
/// The covariance is the autocorrelation of a radially decreasing
/// interference profile, so it is non-increasing in separation; the
/// search exploits that with an exponential probe followed by
/// bisection, costing O(log K) covariance evaluations instead of K.
///
/// At zero intensity the covariance is exactly zero at every lag, so
/// the search ends at K = 1 with C = 0. A threshold above the
/// adjacent-link covariance also ends at K = 1: the envelope then
/// carries no cross terms at all, which is only sound when the caller
/// genuinely tolerates covariances of that size. Heavy-contention
/// regimes can hold the covariance above the threshold at every lag up
/// to the cap (the `E[T_m]E[T_n]` prefactor scales the whole curve);
/// that comes back as [`Error::LagBudget`].
pub fn truncation_lag(
    ctx: &EvalContext,
    hop_length: f64,
    threshold: f64,
) -> Result<CovarianceTruncation> {
    if !threshold.is_finite() || !(threshold > 0.0) {
        return Err(Error::invalid(
            "threshold",
            "covariance threshold must be finite and > 0",
        ));
    }
    let covariance_at = |lag: u32| -> Result<f64> {
        let separation = f64::from(lag) * hop_length;
        Ok(covariance_curve(ctx, hop_length, &[separation])?[0].1)
    };
    let adjacent = covariance_at(1)?;
    if adjacent < threshold {
        return Ok(CovarianceTruncation {
            lag: 1,
            adjacent_covariance: adjacent,
            threshold,
        });
    }
    // Double the probe until it crosses the threshold (or the cap).
    let mut low = 1u32; // largest probed lag still at or above the threshold
    let mut high = None; // smallest probed lag below the threshold
    let mut probe = 2u32;
    while high.is_none() {
        let lag = probe.min(MAX_TRUNCATION_LAG);
        let value = covariance_at(lag)?;
        if value < threshold {
            high = Some(lag);
        } else if lag == MAX_TRUNCATION_LAG {
            return Err(Error::LagBudget {
                threshold,
                max_lag: lag,
                last: value,
            });
        } else {
            low = lag;
            probe = lag.saturating_mul(2);
        }
    }
    // Bisect (low, high] down to the first lag below the threshold.
    let mut high = high.expect("loop exits only with a bracket");
    while high - low > 1 {
        let mid = low + (high - low) / 2;
        if covariance_at(mid)? < threshold {
            high = mid;
        } else {
            low = mid;
        }
    }
    Ok(CovarianceTruncation {
        lag: high,
        adjacent_covariance: adjacent,
        threshold,
    })
}

/// Linear-in-N envelope on the travel-time variance over `links` hops:
/// `N·v + 2·N·min(N−1, K)·C`.
///
/// Each of the N links pairs with at most `min(N−1, K)` neighbours on
/// either side whose covariance survives truncation, and each such
/// pair is charged the adjacent-link value C, which dominates because
/// the covariance is non-increasing in separation. At zero intensity
/// C = 0 and the envelope collapses to `N·v` exactly.
pub fn variance_upper_bound(
    links: u32,
    link_variance: f64,
    truncation: &CovarianceTruncation,
) -> f64 {
    let n = f64::from(links);
    let covered = f64::from(truncation.lag.min(links.saturating_sub(1)));
    n * link_variance + 2.0 * n * covered * truncation.adjacent_covariance
}

/// Asymptotic-speed summary for one hop length and parameter set.
///
/// Produced by [`asymptotic_speed`]; the accessors expose the limit
/// and its certificate, [`SpeedReport::chebyshev_bound`] turns them
/// into a finite-N tail bound, and [`SpeedReport::csv_row`] serializes
/// the sweep-friendly subset.
#[derive(Debug, Clone)]
pub struct SpeedReport {
    params: SystemParams,
    hop_length: f64,
    mean_inverse_speed: f64,
    asymptotic_speed: f64,
    link_variance: f64,
    truncation: Option<CovarianceTruncation>,
    divergent: bool,
}

impl SpeedReport {
    pub fn hop_length(&self) -> f64 {
        self.hop_length
    }

    pub fn mode(&self) -> InterferenceMode {
        self.params.mode
    }

    /// `E[T_link] / L` — expected slots per unit distance, the mean of
    /// the inverse velocity `T/(N·L)` at every N. Infinite in the
    /// divergent regime.
    pub fn mean_inverse_speed(&self) -> f64 {
        self.mean_inverse_speed
    }

    /// `L / E[T_link]` — the in-probability limit of distance over
    /// slots as the chain grows. When finite it lies in (0, L]: a hop
    /// takes at least one slot. Exactly zero in the divergent regime.
    pub fn asymptotic_speed(&self) -> f64 {
        self.asymptotic_speed
    }

    /// `Var[T_link]` under the report's interference mode.
    pub fn link_variance(&self) -> f64 {
        self.link_variance
    }

    /// The covariance truncation backing the dependent-mode variance
    /// envelope. `None` in independent mode (no cross terms), in the
    /// divergent regime (no finite moments to bound), and when the
    /// default-threshold search exhausted its lag cap — heavy
    /// contention scales the whole covariance curve by `E[T_link]²`,
    /// which can hold it above an absolute threshold at every
    /// reachable lag even though the speed itself is finite.
    pub fn truncation(&self) -> Option<&CovarianceTruncation> {
        self.truncation.as_ref()
    }

    /// True when the per-link mean is infinite (dependent mode,
    /// singular path loss, transmit probability 1). The speed is then
    /// exactly zero and every tail bound is trivial.
    pub fn is_divergent(&self) -> bool {
        self.divergent
    }

    /// Chebyshev bound on the inverse velocity straying from its mean:
    /// `P(|T/(N·L) − mean_inverse_speed| >= epsilon)` is at most
    /// `Var[T] / (N·L·epsilon)²`, with Var[T] the truncation envelope
    /// in dependent mode and exactly `N·Var[T_link]` in independent
    /// mode. The envelope is linear in N, so the bound decays like
    /// 1/N — the concentration that makes the speed limit meaningful.
    ///
    /// Degenerate queries (divergent regime, `links == 0`, or
    /// `epsilon <= 0`) come back as the trivial bound, infinity — as
    /// does dependent mode without a truncation certificate, since
    /// `N·Var[T_link]` alone would *under*state the variance there.
    pub fn chebyshev_bound(&self, links: u32, epsilon: f64) -> f64 {
        if self.divergent || links == 0 || !(epsilon > 0.0) {
            return f64::INFINITY;
        }
        let variance = match (self.params.mode, &self.truncation) {
            (InterferenceMode::Independent, _) => f64::from(links) * self.link_variance,
            (InterferenceMode::Dependent, Some(truncation)) => {
                variance_upper_bound(links, self.link_variance, truncation)
            }
            (InterferenceMode::Dependent, None) => return f64::INFINITY,
        };
        let denominator = f64::from(links) * self.hop_length * epsilon;
        variance / (denominator * denominator)
    }

    /// Column order for [`SpeedReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "hop_length,transmit_prob,intensity,sir_threshold,alpha,mode,speed"
    }

    /// One row matching [`SpeedReport::csv_header`]. Deterministic:
    /// same report, same bytes.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e}",
            self.hop_length,
            self.params.transmit_prob,
            self.params.intensity,
            self.params.sir_threshold,
            self.params.path_loss.alpha(),
            self.params.mode,
            self.asymptotic_speed,
        )
    }
}

/// The long-chain speed limit for hops of length `hop_length` under
/// the context's parameters, with the variance certificate needed to
/// trust it at finite N (dependent mode runs the truncation search at
/// [`DEFAULT_COVARIANCE_THRESHOLD`]; if that absolute threshold is
/// unreachable within the lag cap the report simply carries no
/// certificate — see [`SpeedReport::truncation`]).
///
/// The divergent regime is reported, not refused: the record comes
/// back with speed exactly 0, infinite mean inverse speed, and
/// [`SpeedReport::chebyshev_bound`] pinned at infinity.
pub fn asymptotic_speed(ctx: &EvalContext, hop_length: f64) -> Result<SpeedReport> {
    if !hop_length.is_finite() || !(hop_length > 0.0) {
        return Err(Error::invalid(
            "hop_length",
            "hop length must be finite and > 0",
        ));
    }
    let params = *ctx.params();
    if check_divergence(&params) == DivergenceStatus::InfiniteDependentMean {
        return Ok(SpeedReport {
            params,
            hop_length,
            mean_inverse_speed: f64::INFINITY,
            asymptotic_speed: 0.0,
            link_variance: f64::INFINITY,
            truncation: None,
            divergent: true,
        });
    }
    let link = Link {
        tx: Point::ORIGIN,
        rx: Point::new(hop_length, 0.0),
    };
    let moments = link_moments(ctx, &link)?;
    let truncation = match params.mode {
        InterferenceMode::Dependent => {
            match truncation_lag(ctx, hop_length, DEFAULT_COVARIANCE_THRESHOLD) {
                Ok(truncation) => Some(truncation),
                // The absolute threshold can be unreachable when heavy
                // contention inflates E[T_link]²; the speed is still
                // finite, so report it without a concentration
                // certificate instead of failing the whole sweep.
                Err(Error::LagBudget { .. }) => None,
                Err(other) => return Err(other),
            }
        }
        InterferenceMode::Independent => None,
    };
    Ok(SpeedReport {
        params,
        hop_length,
        mean_inverse_speed: moments.mean() / hop_length,
        asymptotic_speed: hop_length / moments.mean(),
        link_variance: moments.variance(),
        truncation,
        divergent: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PathLossModel;

    fn bounded_params(lambda: f64, p: f64, mode: InterferenceMode) -> SystemParams {
        SystemParams::new(lambda, p, 0.1, PathLossModel::bounded(3.0).unwrap(), mode).unwrap()
    }

    #[test]
    fn interference_free_speed_is_one_hop_per_slot() {
        for mode in [InterferenceMode::Dependent, InterferenceMode::Independent] {
            let params = bounded_params(0.0, 0.5, mode);
            let ctx = EvalContext::new(&params);
            let report = asymptotic_speed(&ctx, 0.75).unwrap();
            assert_eq!(report.asymptotic_speed(), 0.75);
            assert_eq!(report.mean_inverse_speed(), 1.0 / 0.75);
            assert_eq!(report.link_variance(), 0.0);
            assert!(!report.is_divergent());
            // Deterministic travel time: the tail bound is exactly zero.
            assert_eq!(report.chebyshev_bound(10, 0.01), 0.0);
        }
    }

    #[test]
    fn zero_intensity_truncates_at_the_first_lag() {
        let params = bounded_params(0.0, 0.5, InterferenceMode::Dependent);
        let ctx = EvalContext::new(&params);
        let truncation = truncation_lag(&ctx, 1.0, DEFAULT_COVARIANCE_THRESHOLD).unwrap();
        assert_eq!(truncation.lag(), 1);
        assert_eq!(truncation.adjacent_covariance(), 0.0);
        assert_eq!(truncation.threshold(), DEFAULT_COVARIANCE_THRESHOLD);
    }

    #[test]
    fn loose_threshold_keeps_only_the_diagonal() {
        let params = bounded_params(0.5, 0.5, InterferenceMode::Dependent);
        let ctx = EvalContext::new(&params);
        // The adjacent covariance here is ~6.4e-3; a threshold above it
        // stops the search immediately, and the envelope charges one
        // neighbour per side.
        let truncation = truncation_lag(&ctx, 1.0, 1e-1).unwrap();
        assert_eq!(truncation.lag(), 1);
        assert!(truncation.adjacent_covariance() > 0.0);
        assert!(truncation.adjacent_covariance() < 1e-1);
        let v = 0.25;
        let expected = 4.0 * v + 8.0 * truncation.adjacent_covariance();
        assert!((variance_upper_bound(4, v, &truncation) - expected).abs() < 1e-15);
    }

    #[test]
    fn envelope_lag_saturates_at_the_chain_length() {
        let truncation = CovarianceTruncation {
            lag: 9,
            adjacent_covariance: 0.5,
            threshold: 1e-3,
        };
        // N = 4 has only 3 distinct positive lags, so min(N−1, K) = 3.
        let v = 1.0;
        assert_eq!(
            variance_upper_bound(4, v, &truncation),
            4.0 * v + 2.0 * 4.0 * 3.0 * 0.5
        );
        // A single link has no pairs at all.
        assert_eq!(variance_upper_bound(1, v, &truncation), v);
    }

    #[test]
    fn divergent_regime_reports_zero_speed_rather_than_failing() {
        let singular = PathLossModel::singular(3.0).unwrap();
        let dep = SystemParams::new(1.0, 1.0, 0.1, singular, InterferenceMode::Dependent).unwrap();
        let report = asymptotic_speed(&EvalContext::new(&dep), 1.0).unwrap();
        assert!(report.is_divergent());
        assert_eq!(report.asymptotic_speed(), 0.0);
        assert!(report.mean_inverse_speed().is_infinite());
        assert!(report.truncation().is_none());
        assert!(report.chebyshev_bound(5, 0.1).is_infinite());

        // The same geometry with fresh fields every slot is perfectly
        // finite — divergence is a dependent-mode phenomenon.
        let ind =
            SystemParams::new(1.0, 1.0, 0.1, singular, InterferenceMode::Independent).unwrap();
        let report = asymptotic_speed(&EvalContext::new(&ind), 1.0).unwrap();
        assert!(!report.is_divergent());
        assert!(report.asymptotic_speed() > 0.0);
    }

    #[test]
    fn speed_and_inverse_speed_are_reciprocal() {
        for mode in [InterferenceMode::Dependent, InterferenceMode::Independent] {
            let params = bounded_params(0.5, 0.5, mode);
            let ctx = EvalContext::new(&params);
            let report = asymptotic_speed(&ctx, 0.5).unwrap();
            let product = report.asymptotic_speed() * report.mean_inverse_speed();
            assert!((product - 1.0).abs() < 1e-12);
            assert!(report.asymptotic_speed() > 0.0);
            assert!(report.asymptotic_speed() <= report.hop_length());
        }
    }

    #[test]
    fn frozen_fields_slow_the_packet_down() {
        let dep = bounded_params(0.5, 0.5, InterferenceMode::Dependent);
        let ind = bounded_params(0.5, 0.5, InterferenceMode::Independent);
        let dep_report = asymptotic_speed(&EvalContext::new(&dep), 1.0).unwrap();
        let ind_report = asymptotic_speed(&EvalContext::new(&ind), 1.0).unwrap();
        assert!(dep_report.asymptotic_speed() < ind_report.asymptotic_speed());
        assert!(dep_report.truncation().is_some());
        assert!(ind_report.truncation().is_none());
    }

    #[test]
    fn independent_bound_is_exactly_linear_in_the_link_variance() {
        let params = bounded_params(1.0, 0.5, InterferenceMode::Independent);
        let ctx = EvalContext::new(&params);
        let report = asymptotic_speed(&ctx, 1.0).unwrap();
        let links = 16u32;
        let epsilon = 0.05;
        let denominator = f64::from(links) * report.hop_length() * epsilon;
        let expected = f64::from(links) * report.link_variance() / (denominator * denominator);
        assert_eq!(report.chebyshev_bound(links, epsilon), expected);
        // Degenerate queries get the trivial bound, not a panic.
        assert!(report.chebyshev_bound(0, epsilon).is_infinite());
        assert!(report.chebyshev_bound(links, 0.0).is_infinite());
        assert!(report.chebyshev_bound(links, -1.0).is_infinite());
    }

    #[test]
    fn missing_certificate_yields_the_trivial_bound() {
        // Dependent mode without a truncation certificate: N·v alone
        // would understate the variance, so the bound must be trivial.
        let report = SpeedReport {
            params: bounded_params(0.25, 0.75, InterferenceMode::Dependent),
            hop_length: 5.0,
            mean_inverse_speed: 2.0 / 5.0,
            asymptotic_speed: 5.0 / 2.0,
            link_variance: 1.0,
            truncation: None,
            divergent: false,
        };
        assert!(report.chebyshev_bound(10, 0.1).is_infinite());
        assert!(!report.is_divergent());
        assert!(report.asymptotic_speed() > 0.0);
    }

    #[test]
    fn csv_row_matches_the_header_shape() {
        let params = bounded_params(0.5, 0.25, InterferenceMode::Independent);
        let ctx = EvalContext::new(&params);
        let report = asymptotic_speed(&ctx, 2.0).unwrap();
        assert_eq!(SpeedReport::csv_header().split(',').count(), 7);
        let row = report.csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "2");
        assert_eq!(fields[1], "0.25");
        assert_eq!(fields[2], "0.5");
        assert_eq!(fields[3], "0.1");
        assert_eq!(fields[4], "3");
        assert_eq!(fields[5], "independent");
        assert_eq!(report.csv_row(), report.csv_row());
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let params = bounded_params(0.5, 0.5, InterferenceMode::Dependent);
        let ctx = EvalContext::new(&params);
        assert!(truncation_lag(&ctx, 1.0, 0.0).is_err());
        assert!(truncation_lag(&ctx, 1.0, -1.0).is_err());
        assert!(truncation_lag(&ctx, 1.0, f64::NAN).is_err());
        assert!(truncation_lag(&ctx, 1.0, f64::INFINITY).is_err());
        assert!(asymptotic_speed(&ctx, 0.0).is_err());
        assert!(asymptotic_speed(&ctx, -1.0).is_err());
        assert!(asymptotic_speed(&ctx, f64::NAN).is_err());

        // The covariance is a dependent-mode quantity.
        let ind = bounded_params(0.5, 0.5, InterferenceMode::Independent);
        assert!(truncation_lag(&EvalContext::new(&ind), 1.0, 1e-3).is_err());
    }
}
