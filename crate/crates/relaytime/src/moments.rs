//! Travel-time moments from interference integrals.
//!
//! Conditioned on the interferer positions, one slot of link n succeeds
//! with probability ∏_u φ_n(u) over interferers u, where φ_n averages
//! the Rayleigh fading and ALOHA activity of a single interferer:
//!
//! ```text
//! φ_n(x) = p / (1 + θ_n·g(x, rx_n)) + (1 − p)
//! ```
//!
//! Averaging products of φ_n over the Poisson field turns every moment
//! of the per-link slot counts into an exponential of an interference
//! integral. This module evaluates those integrals with certified
//! quadrature, caches them keyed by everything *except* the field
//! intensity (they are intensity-free; λ only scales the exponent), and
//! assembles per-link, cross, and chain moments for both interference
//! modes.
//!
//! All exponentials are kept in log space internally; linear accessors
//! are derived views, so parameter sweeps that overflow `f64` in linear
//! scale still report meaningful log-domain numbers.
//!
//! Numerical forms: with t = θ_n·g(x, rx_n) the module never evaluates
//! φ directly in integrands but uses the cancellation-free deficits
//!
//! ```text
//! 1 − φ        = p·t/(1 + t)
//! 1/φ − 1      = p·t/(1 + (1−p)·t)
//! 1/φ² − 1     = u·(u + 2)          with u = 1/φ − 1
//! 1 − φ^e      = −expm1(e·ln1p(−(1 − φ)))
//! ```
//!
//! Far from the receiver all of these decay like t ≈ θ_n·‖x‖^(−α); the
//! naive forms would subtract numbers near 1 there and turn the smooth
//! tail into relative-epsilon noise that adaptive refinement can neither
//! see nor fix.

use dashmap::DashMap;

use crate::error::{Error, Result};
use crate::model::{
    ChainTopology, InterferenceMode, Link, PathLossKind, PathLossModel, Point, SystemParams,
};
use crate::quad::{self, IntegrationSpec};
use crate::util::NeumaierSum;

/// The single-interferer success factor φ_n of one link: everything
/// needed to evaluate it and its deficits anywhere in the plane.
#[derive(Debug, Clone, Copy)]
pub struct LinkFactor {
    receiver: Point,
    /// Effective threshold θ_n = θ / g(tx_n, rx_n).
    threshold: f64,
    transmit_prob: f64,
    path_loss: PathLossModel,
}

impl LinkFactor {
    pub fn new(link: &Link, params: &SystemParams) -> Result<LinkFactor> {
        let signal_gain = params.path_loss.gain(link.length())?;
        if !(signal_gain > 0.0) {
            return Err(Error::invalid(
                "link",
                "signal gain vanished; hop too long for this path-loss law",
            ));
        }
        Ok(LinkFactor {
            receiver: link.rx,
            threshold: params.sir_threshold / signal_gain,
            transmit_prob: params.transmit_prob,
            path_loss: params.path_loss,
        })
    }

    pub fn receiver(&self) -> Point {
        self.receiver
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub(crate) fn transmit_prob(&self) -> f64 {
        self.transmit_prob
    }

    /// φ_n(x): the factor one interferer at x contributes to the
    /// conditional slot success probability of this link.
    pub fn value(&self, x: Point) -> f64 {
        1.0 - self.deficit(x)
    }

    /// t = θ_n·g(‖x − rx_n‖); +∞ at the singular law's origin, where
    /// every deficit below still has a finite limit.
    fn weight_at(&self, dist: f64) -> f64 {
        let alpha = self.path_loss.alpha();
        let gain = match self.path_loss.kind() {
            PathLossKind::Bounded => {
                if dist <= 1.0 {
                    1.0
                } else {
                    dist.powf(-alpha)
                }
            }
            PathLossKind::Singular => {
                if dist == 0.0 {
                    f64::INFINITY
                } else {
                    dist.powf(-alpha)
                }
            }
        };
        self.threshold * gain
    }

    /// 1 − φ = p·t/(1+t) ∈ [0, p].
    pub(crate) fn deficit_at(&self, dist: f64) -> f64 {
        let t = self.weight_at(dist);
        if t.is_finite() {
            self.transmit_prob * t / (1.0 + t)
        } else {
            self.transmit_prob
        }
    }

    pub(crate) fn deficit(&self, x: Point) -> f64 {
        self.deficit_at(x.distance(self.receiver))
    }

    /// u = 1/φ − 1 = p·t/(1 + (1−p)·t) ≥ 0; diverges near the receiver
    /// only for the singular law at p = 1 (the infinite-mean regime).
    pub(crate) fn inverse_deficit_at(&self, dist: f64) -> f64 {
        let p = self.transmit_prob;
        let t = self.weight_at(dist);
        if t.is_finite() {
            p * t / (1.0 + (1.0 - p) * t)
        } else if p < 1.0 {
            p / (1.0 - p)
        } else {
            f64::INFINITY
        }
    }

    pub(crate) fn inverse_deficit(&self, x: Point) -> f64 {
        self.inverse_deficit_at(x.distance(self.receiver))
    }

    /// 1 − φ^e, evaluated as −expm1(e·ln1p(−(1−φ))) so the far-field
    /// tail stays smooth at full precision.
    pub(crate) fn deficit_pow_at(&self, dist: f64, exponent: u32) -> f64 {
        let a = self.deficit_at(dist);
        if exponent == 1 {
            a
        } else {
            -(f64::from(exponent) * (-a).ln_1p()).exp_m1()
        }
    }

    pub(crate) fn deficit_pow(&self, x: Point, exponent: u32) -> f64 {
        self.deficit_pow_at(x.distance(self.receiver), exponent)
    }
}

/// Has the dependent mean any chance of being finite?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceStatus {
    Finite,
    /// Dependent mode, singular path loss, p = 1: the mean slot count of
    /// every link is infinite regardless of λ, θ, α.
    InfiniteDependentMean,
}

/// The infinite-mean predicate: fires exactly for (Dependent, Singular,
/// p = 1). The singular law makes 1/φ − 1 grow like θ_n·d^(−α) at the
/// receiver, which is not integrable in the plane for α > 2, and p = 1
/// removes the (1−p)·t damping that would cap it.
pub fn check_divergence(params: &SystemParams) -> DivergenceStatus {
    if params.mode == InterferenceMode::Dependent
        && params.path_loss.kind() == PathLossKind::Singular
        && params.transmit_prob == 1.0
    {
        DivergenceStatus::InfiniteDependentMean
    } else {
        DivergenceStatus::Finite
    }
}

// ---------------------------------------------------------------------
// Integral cache
// ---------------------------------------------------------------------

/// One evaluated interference integral: value plus the certified bound
/// on the truncated tail and the achieved quadrature error estimate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CachedIntegral {
    pub value: f64,
    pub tail_bound: f64,
    pub quad_error: f64,
}

impl CachedIntegral {
    /// Worst-case absolute error of this integral: achieved quadrature
    /// estimate plus truncation bound. Exactly zero when the integrand
    /// vanished identically (p = 0), so interference-free limits stay
    /// exact in every consumer.
    pub fn error_bound(&self) -> f64 {
        self.quad_error + self.tail_bound
    }
}

type LossKey = (PathLossKind, u64);
type TolKey = (u64, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RadialKind {
    /// ∫ t/(1+t): the p = 1 deficit profile; 1 − φ integrates to
    /// p × this, so one cached value serves every transmit probability.
    Profile,
    /// ∫ (1 − φ^e).
    DeficitPow(u32),
    /// ∫ (1/φ − 1).
    InverseDeficit,
    /// ∫ (1/φ² − 1).
    InverseSquareDeficit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum ProductKind {
    /// ∏ (1 − φ_i^{e_i}) over two or more links.
    DeficitPow,
    /// ∏ (1/φ_i − 1) over exactly two links.
    InverseDeficit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ProductEntry {
    exponent: u32,
    threshold_bits: u64,
    dx_bits: u64,
    dy_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Radial {
        kind: RadialKind,
        threshold_bits: u64,
        prob_bits: u64,
        loss: LossKey,
        tol: TolKey,
    },
    Product {
        kind: ProductKind,
        entries: Vec<ProductEntry>,
        prob_bits: u64,
        loss: LossKey,
        tol: TolKey,
    },
}

/// Concurrent memo table for interference integrals. Keys deliberately
/// exclude the field intensity λ: the integrals do not depend on it, so
/// a λ-sweep at fixed geometry reuses every entry.
#[derive(Debug, Default)]
pub struct MomentCache {
    map: DashMap<CacheKey, CachedIntegral>,
}

impl MomentCache {
    pub fn new() -> MomentCache {
        MomentCache::default()
    }

    fn get_or_compute<F>(&self, key: CacheKey, compute: F) -> Result<CachedIntegral>
    where
        F: FnOnce() -> Result<CachedIntegral>,
    {
        if let Some(hit) = self.map.get(&key) {
            return Ok(*hit);
        }
        // Concurrent callers may race to compute the same pure value;
        // both get identical bits, so last-write-wins is harmless.
        let fresh = compute()?;
        self.map.insert(key, fresh);
        Ok(fresh)
    }
}

fn loss_key(model: PathLossModel) -> LossKey {
    (model.kind(), model.alpha().to_bits())
}

fn tol_key(spec: &IntegrationSpec) -> TolKey {
    (spec.rel_tol.to_bits(), spec.abs_tol.to_bits())
}

fn radial_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    link: &LinkFactor,
    kind: RadialKind,
) -> Result<CachedIntegral> {
    let prob_bits = match kind {
        // The profile is p-free by construction.
        RadialKind::Profile => 1.0_f64.to_bits(),
        _ => link.transmit_prob.to_bits(),
    };
    let key = CacheKey::Radial {
        kind,
        threshold_bits: link.threshold.to_bits(),
        prob_bits,
        loss: loss_key(link.path_loss),
        tol: tol_key(spec),
    };
    cache.get_or_compute(key, || {
        let factor = *link;
        let theta = link.threshold;
        let p = link.transmit_prob;
        let alpha = link.path_loss.alpha();
        // Far-field envelopes: beyond the unit disk g = ρ^(−α) (both
        // laws), and with t = θ_n·g,
        //   1 − φ   = p·t/(1+t)        ≤ p·θ_n·ρ^(−α)   (c = 1)
        //   1 − φ^e ≤ e·(1 − φ)        ≤ e·p·θ_n·ρ^(−α) (c = e)
        //   1/φ − 1 = p·t/(1+(1−p)t)   ≤ p·θ_n·ρ^(−α)   (c = 1)
        //   1/φ² −1 = u(u+2) ≤ 2pt+(pt)² — two exact power terms.
        let result = match kind {
            RadialKind::Profile => quad::integrate_radial(
                move |r| {
                    let t = factor.weight_at(r);
                    if t.is_finite() {
                        t / (1.0 + t)
                    } else {
                        1.0
                    }
                },
                move |radius| quad::power_tail(theta, 0.0, alpha, radius),
                spec,
            )?,
            RadialKind::DeficitPow(e) => quad::integrate_radial(
                move |r| factor.deficit_pow_at(r, e),
                move |radius| quad::power_tail(f64::from(e) * p * theta, 0.0, alpha, radius),
                spec,
            )?,
            RadialKind::InverseDeficit => quad::integrate_radial(
                move |r| factor.inverse_deficit_at(r),
                move |radius| quad::power_tail(p * theta, 0.0, alpha, radius),
                spec,
            )?,
            RadialKind::InverseSquareDeficit => quad::integrate_radial(
                move |r| {
                    let u = factor.inverse_deficit_at(r);
                    u * (u + 2.0)
                },
                move |radius| {
                    2.0 * quad::power_tail(p * theta, 0.0, alpha, radius)
                        + quad::power_tail((p * theta) * (p * theta), 0.0, 2.0 * alpha, radius)
                },
                spec,
            )?,
        };
        Ok(CachedIntegral {
            value: result.value,
            tail_bound: result.tail_bound,
            quad_error: result.error_estimate,
        })
    })
}

pub(crate) fn profile_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    link: &LinkFactor,
) -> Result<CachedIntegral> {
    radial_integral(cache, spec, link, RadialKind::Profile)
}

pub(crate) fn deficit_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    link: &LinkFactor,
    exponent: u32,
) -> Result<CachedIntegral> {
    if exponent == 1 {
        // The first-power deficit is exactly p times the transmit-probability-free
        // profile, so route through the shared profile entry: callers that need both
        // (e.g. a one-slot mass and a success probability) then agree bit-for-bit.
        let profile = profile_integral(cache, spec, link)?;
        let p = link.transmit_prob();
        return Ok(CachedIntegral {
            value: p * profile.value,
            tail_bound: p * profile.tail_bound,
            quad_error: p * profile.quad_error,
        });
    }
    radial_integral(cache, spec, link, RadialKind::DeficitPow(exponent))
}

pub(crate) fn inverse_deficit_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    link: &LinkFactor,
) -> Result<CachedIntegral> {
    radial_integral(cache, spec, link, RadialKind::InverseDeficit)
}

pub(crate) fn inverse_square_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    link: &LinkFactor,
) -> Result<CachedIntegral> {
    radial_integral(cache, spec, link, RadialKind::InverseSquareDeficit)
}

/// ∫ over the plane of a product of per-link deficits: the coupling
/// integrals. `factors` pairs each link with its exponent (exponents are
/// ignored for `InverseDeficit`, which is the two-link u_m·u_n case).
pub(crate) fn product_integral(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    kind: ProductKind,
    factors: &[(&LinkFactor, u32)],
) -> Result<CachedIntegral> {
    assert!(factors.len() >= 2, "product integrals couple >= 2 links");
    if kind == ProductKind::InverseDeficit {
        assert_eq!(factors.len(), 2, "u_m*u_n coupling is pairwise");
    }
    let p = factors[0].0.transmit_prob;
    let loss = factors[0].0.path_loss;
    debug_assert!(factors
        .iter()
        .all(|(f, _)| f.transmit_prob == p && f.path_loss == loss));

    // Canonical key: translate receivers so the lexicographically
    // smallest sits at the origin, then sort entries. Two link subsets
    // with identical relative geometry and thresholds share one entry
    // (uniform chains hit this constantly).
    let base = factors
        .iter()
        .map(|(f, _)| f.receiver)
        .min_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)))
        .expect("non-empty");
    let mut entries: Vec<ProductEntry> = factors
        .iter()
        .map(|(f, e)| ProductEntry {
            exponent: if kind == ProductKind::InverseDeficit { 1 } else { *e },
            threshold_bits: f.threshold.to_bits(),
            dx_bits: (f.receiver.x - base.x).to_bits(),
            dy_bits: (f.receiver.y - base.y).to_bits(),
        })
        .collect();
    entries.sort_unstable();
    let key = CacheKey::Product {
        kind,
        entries,
        prob_bits: p.to_bits(),
        loss: loss_key(loss),
        tol: tol_key(spec),
    };

    cache.get_or_compute(key, || {
        let parts: Vec<(LinkFactor, u32)> = factors.iter().map(|(f, e)| (**f, *e)).collect();
        let centers: Vec<Point> = parts.iter().map(|(f, _)| f.receiver).collect();
        let centroid = Point::new(
            centers.iter().map(|c| c.x).sum::<f64>() / centers.len() as f64,
            centers.iter().map(|c| c.y).sum::<f64>() / centers.len() as f64,
        );
        let max_offset = centers
            .iter()
            .map(|c| c.distance(centroid))
            .fold(0.0, f64::max);
        // Each factor is ≤ e_i·p·θ_i·ρ_i^(−α) with ρ_i ≥ r − max_offset
        // from the centroid, so the product tail is one power law of
        // order n·α.
        let tail_coeff: f64 = parts
            .iter()
            .map(|(f, e)| {
                let e = if kind == ProductKind::InverseDeficit { 1.0 } else { f64::from(*e) };
                e * f.transmit_prob * f.threshold
            })
            .product();
        let tail_order = parts.len() as f64 * loss.alpha();
        let integrand = move |x: Point| -> f64 {
            let mut product = 1.0;
            for (f, e) in &parts {
                product *= match kind {
                    ProductKind::DeficitPow => f.deficit_pow(x, *e),
                    ProductKind::InverseDeficit => f.inverse_deficit(x),
                };
            }
            product
        };
        let result = quad::integrate_plane(
            integrand,
            &centers,
            move |radius| quad::power_tail(tail_coeff, max_offset, tail_order, radius),
            spec,
        )?;
        Ok(CachedIntegral {
            value: result.value,
            tail_bound: result.tail_bound,
            quad_error: result.error_estimate,
        })
    })
}

// ---------------------------------------------------------------------
// Evaluation context and per-link moments
// ---------------------------------------------------------------------

/// Shared state for a batch of related moment evaluations: the system
/// parameters, the quadrature spec, and the integral cache.
#[derive(Debug)]
pub struct EvalContext<'a> {
    params: &'a SystemParams,
    spec: IntegrationSpec,
    cache: MomentCache,
}

impl<'a> EvalContext<'a> {
    pub fn new(params: &'a SystemParams) -> EvalContext<'a> {
        EvalContext::with_spec(params, IntegrationSpec::default())
    }

    pub fn with_spec(params: &'a SystemParams, spec: IntegrationSpec) -> EvalContext<'a> {
        EvalContext {
            params,
            spec,
            cache: MomentCache::new(),
        }
    }

    pub fn params(&self) -> &SystemParams {
        self.params
    }

    pub fn spec(&self) -> &IntegrationSpec {
        &self.spec
    }

    pub(crate) fn cache(&self) -> &MomentCache {
        &self.cache
    }
}

/// First and second moment of one link's slot count, in log space.
#[derive(Debug, Clone, Copy)]
pub struct LinkMoments {
    /// ln of the unconditional single-slot success probability.
    pub log_success: f64,
    /// ln E[T_n].
    pub log_mean: f64,
    /// ln E[T_n²].
    pub log_second: f64,
}

impl LinkMoments {
    pub fn success_probability(&self) -> f64 {
        self.log_success.exp()
    }

    pub fn mean(&self) -> f64 {
        self.log_mean.exp()
    }

    pub fn second_moment(&self) -> f64 {
        self.log_second.exp()
    }

    /// Var[T_n] = E[T_n²] − E[T_n]², evaluated as
    /// mean²·expm1(log_second − 2·log_mean) so it is exactly 0 in the
    /// interference-free limits instead of a difference of two 1.0s.
    pub fn variance(&self) -> f64 {
        (2.0 * self.log_mean).exp() * (self.log_second - 2.0 * self.log_mean).exp_m1()
    }
}

fn link_moments_for_factor(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    params: &SystemParams,
    factor: &LinkFactor,
) -> Result<LinkMoments> {
    let lambda = params.intensity;
    let p = params.transmit_prob;
    // ∫(1 − φ) = p·∫ t/(1+t): shared by both modes.
    let deficit_mass = p * profile_integral(cache, spec, factor)?.value;
    let log_success = -lambda * deficit_mass;
    match params.mode {
        InterferenceMode::Independent => {
            // T_n is geometric with the unconditional success
            // probability: E[T] = e^x, E[T²] = 2e^{2x} − e^x, x = λ∫(1−φ).
            let x = lambda * deficit_mass;
            Ok(LinkMoments {
                log_success,
                log_mean: x,
                log_second: 2.0 * x + (2.0 - (-x).exp()).ln(),
            })
        }
        InterferenceMode::Dependent => {
            if check_divergence(params) == DivergenceStatus::InfiniteDependentMean {
                return Err(Error::InfiniteDependentMean);
            }
            // E[T] = e^{λ∫u}, E[T²] = 2e^{λ∫u(u+2)} − e^{λ∫u}; the
            // second-moment exponent dominates the first, so the log of
            // the difference is stable.
            let u1 = lambda * inverse_deficit_integral(cache, spec, factor)?.value;
            let u2 = lambda * inverse_square_integral(cache, spec, factor)?.value;
            Ok(LinkMoments {
                log_success,
                log_mean: u1,
                log_second: u2 + (2.0 - (u1 - u2).exp()).ln(),
            })
        }
    }
}

/// Mode-aware per-link moments (mean, second moment, success
/// probability) for one hop.
pub fn link_moments(ctx: &EvalContext, link: &Link) -> Result<LinkMoments> {
    let factor = LinkFactor::new(link, ctx.params())?;
    link_moments_for_factor(ctx.cache(), ctx.spec(), ctx.params(), &factor)
}

/// Unconditional probability that one slot of this link succeeds,
/// identical in both interference modes.
pub fn success_probability(ctx: &EvalContext, link: &Link) -> Result<f64> {
    let factor = LinkFactor::new(link, ctx.params())?;
    let deficit_mass = ctx.params().transmit_prob
        * profile_integral(ctx.cache(), ctx.spec(), &factor)?.value;
    Ok((-ctx.params().intensity * deficit_mass).exp())
}

/// E[T_n] with the interferer field frozen across the packet's journey.
pub fn mean_link_dependent(ctx: &EvalContext, link: &Link) -> Result<f64> {
    let params = ctx.params();
    if check_divergence_dependent(params) == DivergenceStatus::InfiniteDependentMean {
        return Err(Error::InfiniteDependentMean);
    }
    let factor = LinkFactor::new(link, params)?;
    let u1 = inverse_deficit_integral(ctx.cache(), ctx.spec(), &factor)?.value;
    Ok((params.intensity * u1).exp())
}

/// E[T_n] with a fresh interferer field every slot: the reciprocal of
/// the single-slot success probability.
pub fn mean_link_independent(ctx: &EvalContext, link: &Link) -> Result<f64> {
    let factor = LinkFactor::new(link, ctx.params())?;
    let deficit_mass = ctx.params().transmit_prob
        * profile_integral(ctx.cache(), ctx.spec(), &factor)?.value;
    let log_mean = ctx.params().intensity * deficit_mass;
    if log_mean.is_infinite() {
        return Err(Error::ZeroSuccessProbability);
    }
    Ok(log_mean.exp())
}

/// E[T_n²] in the mode selected by the context's parameters.
pub fn second_moment_link(ctx: &EvalContext, link: &Link) -> Result<f64> {
    Ok(link_moments(ctx, link)?.second_moment())
}

/// The divergence predicate applied as if mode were Dependent,
/// regardless of the configured mode (used by the dependent-only ops).
fn check_divergence_dependent(params: &SystemParams) -> DivergenceStatus {
    let dependent_view = SystemParams {
        mode: InterferenceMode::Dependent,
        ..*params
    };
    check_divergence(&dependent_view)
}

/// E[T_m·T_n] for two distinct hops.
///
/// Dependent mode: exp(λ(∫u_m + ∫u_n + ∫u_m·u_n)) — the coupling term
/// ∫u_m·u_n is the only genuinely two-dimensional integral. Independent
/// mode: the slot counts are independent, so exactly the product of the
/// two means.
pub fn cross_moment(ctx: &EvalContext, link_m: &Link, link_n: &Link) -> Result<f64> {
    if link_m == link_n {
        return Err(Error::invalid("links", "cross moment needs two distinct links"));
    }
    let params = ctx.params();
    match params.mode {
        InterferenceMode::Independent => {
            Ok(mean_link_independent(ctx, link_m)? * mean_link_independent(ctx, link_n)?)
        }
        InterferenceMode::Dependent => {
            if check_divergence(params) == DivergenceStatus::InfiniteDependentMean {
                return Err(Error::InfiniteDependentMean);
            }
            let fm = LinkFactor::new(link_m, params)?;
            let fn_ = LinkFactor::new(link_n, params)?;
            let u1m = inverse_deficit_integral(ctx.cache(), ctx.spec(), &fm)?.value;
            let u1n = inverse_deficit_integral(ctx.cache(), ctx.spec(), &fn_)?.value;
            let coupling = product_integral(
                ctx.cache(),
                ctx.spec(),
                ProductKind::InverseDeficit,
                &[(&fm, 1), (&fn_, 1)],
            )?
            .value;
            Ok((params.intensity * (u1m + u1n + coupling)).exp())
        }
    }
}

// ---------------------------------------------------------------------
// Chain assembly
// ---------------------------------------------------------------------

/// Every moment of a chain's travel time. `values` is `None` exactly
/// when the divergence predicate fires, in which case no numeric field
/// exists at all.
#[derive(Debug, Clone)]
pub struct MomentReport {
    mode: InterferenceMode,
    values: Option<MomentValues>,
}

/// The numeric payload of a finite-regime [`MomentReport`].
#[derive(Debug, Clone)]
pub struct MomentValues {
    /// ln E[T_n] per link.
    pub log_per_link_mean: Vec<f64>,
    /// ln E[T_n²] per link.
    pub log_per_link_second: Vec<f64>,
    /// E[T_m·T_n] in linear scale, second moments on the diagonal.
    pub cross: Vec<Vec<f64>>,
    /// E[T] = Σ E[T_n].
    pub total_mean: f64,
    /// Var[T] = ΣΣ E[T_m T_n] − E[T]².
    pub total_var: f64,
}

impl MomentReport {
    pub fn mode(&self) -> InterferenceMode {
        self.mode
    }

    pub fn finite(&self) -> bool {
        self.values.is_some()
    }

    pub fn values(&self) -> Option<&MomentValues> {
        self.values.as_ref()
    }

    pub fn per_link_mean(&self) -> Option<Vec<f64>> {
        self.values
            .as_ref()
            .map(|v| v.log_per_link_mean.iter().map(|x| x.exp()).collect())
    }

    pub fn per_link_second(&self) -> Option<Vec<f64>> {
        self.values
            .as_ref()
            .map(|v| v.log_per_link_second.iter().map(|x| x.exp()).collect())
    }

    pub fn total_mean(&self) -> Option<f64> {
        self.values.as_ref().map(|v| v.total_mean)
    }

    pub fn total_var(&self) -> Option<f64> {
        self.values.as_ref().map(|v| v.total_var)
    }
}

/// All per-link, cross, and total moments of the chain's travel time.
///
/// The divergent regime comes back as a report with `finite() == false`
/// rather than an error: an infinite mean is an answer, not a failure.
pub fn chain_moments(ctx: &EvalContext, topology: &ChainTopology) -> Result<MomentReport> {
    let params = ctx.params();
    if check_divergence(params) == DivergenceStatus::InfiniteDependentMean {
        return Ok(MomentReport {
            mode: params.mode,
            values: None,
        });
    }
    let cache = ctx.cache();
    let spec = ctx.spec();
    let factors: Vec<LinkFactor> = topology
        .links()
        .iter()
        .map(|l| LinkFactor::new(l, params))
        .collect::<Result<_>>()?;
    let moments: Vec<LinkMoments> = factors
        .iter()
        .map(|f| link_moments_for_factor(cache, spec, params, f))
        .collect::<Result<_>>()?;

    let n = factors.len();
    let lambda = params.intensity;
    let means: Vec<f64> = moments.iter().map(|m| m.mean()).collect();
    let mut cross = vec![vec![0.0; n]; n];
    let mut var_sum = NeumaierSum::new();
    for (i, m) in moments.iter().enumerate() {
        cross[i][i] = m.second_moment();
        var_sum.add(m.variance());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (value, covariance) = match params.mode {
                InterferenceMode::Independent => (means[i] * means[j], 0.0),
                InterferenceMode::Dependent => {
                    let coupling = product_integral(
                        cache,
                        spec,
                        ProductKind::InverseDeficit,
                        &[(&factors[i], 1), (&factors[j], 1)],
                    )?
                    .value;
                    let log_product = moments[i].log_mean + moments[j].log_mean;
                    (
                        (log_product + lambda * coupling).exp(),
                        log_product.exp() * (lambda * coupling).exp_m1(),
                    )
                }
            };
            cross[i][j] = value;
            cross[j][i] = value;
            var_sum.add(2.0 * covariance);
        }
    }
    let mut mean_sum = NeumaierSum::new();
    for m in &means {
        mean_sum.add(*m);
    }
    Ok(MomentReport {
        mode: params.mode,
        values: Some(MomentValues {
            log_per_link_mean: moments.iter().map(|m| m.log_mean).collect(),
            log_per_link_second: moments.iter().map(|m| m.log_second).collect(),
            cross,
            total_mean: mean_sum.total(),
            total_var: var_sum.total(),
        }),
    })
}

/// Cov[T_m, T_n] for two links of length `hop_length` whose receivers
/// sit `separation` apart, for each separation in the grid. Dependent
/// mode only — the independent-mode covariance is identically zero.
pub fn covariance_curve(
    ctx: &EvalContext,
    hop_length: f64,
    separations: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let params = ctx.params();
    if params.mode != InterferenceMode::Dependent {
        return Err(Error::invalid(
            "mode",
            "covariance of link travel times is a dependent-mode quantity",
        ));
    }
    if check_divergence(params) == DivergenceStatus::InfiniteDependentMean {
        return Err(Error::InfiniteDependentMean);
    }
    if !(hop_length > 0.0) || !hop_length.is_finite() {
        return Err(Error::invalid("hop_length", "hop length must be finite and > 0"));
    }
    let lambda = params.intensity;
    let mut curve = Vec::with_capacity(separations.len());
    for &separation in separations {
        if separation < hop_length {
            return Err(Error::invalid(
                "separation",
                format!(
                    "receiver separation {separation} below hop length {hop_length}: \
                     adjacent chain links cannot sit closer than one hop"
                ),
            ));
        }
        let near = Link {
            tx: Point::new(-hop_length, 0.0),
            rx: Point::ORIGIN,
        };
        let far = Link {
            tx: Point::new(separation - hop_length, 0.0),
            rx: Point::new(separation, 0.0),
        };
        let fm = LinkFactor::new(&near, params)?;
        let fn_ = LinkFactor::new(&far, params)?;
        let u1m = inverse_deficit_integral(ctx.cache(), ctx.spec(), &fm)?.value;
        let u1n = inverse_deficit_integral(ctx.cache(), ctx.spec(), &fn_)?.value;
        let coupling = product_integral(
            ctx.cache(),
            ctx.spec(),
            ProductKind::InverseDeficit,
            &[(&fm, 1), (&fn_, 1)],
        )?
        .value;
        // Cov = E[T_m]E[T_n]·(e^{λ∫u_m u_n} − 1): exactly 0 at λ = 0.
        let covariance = (lambda * (u1m + u1n)).exp() * (lambda * coupling).exp_m1();
        curve.push((separation, covariance));
    }
    Ok(curve)
}
