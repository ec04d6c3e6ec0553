//! Exact slot-count distribution of the travel time, for short chains and
//! finite horizons.
//!
//! Conditioned on the interferer field, each link's slot count is geometric
//! with success chance Ω_n, the product of that link's per-interferer factors.
//! Averaging the conditional masses over the field turns every power Ω^e into
//! one PGFL integral, so a mass becomes a finite alternating sum of terms
//! `±C(t−1,k) · exp(−λ V)` where V is the integral of `1 − ∏ φ^e` over the
//! plane. The chain's joint mass factors the same way with one exponent per
//! link, and the travel-time PMF is the sum of joint masses over compositions.
//!
//! Two numerical hazards shape this module:
//!
//! * The alternating sums cancel brutally — binomial coefficients reach 2^29
//!   at a horizon of thirty slots while the masses they produce sit below
//!   1e-14. Every sum here is accumulated in descending order of magnitude
//!   with compensated summation, each term carries a noise estimate derived
//!   from its integral's certified error, and the public single-mass entry
//!   points refuse to return a value smaller than 1e-6 times the largest
//!   term rather than hand back cancellation noise.
//! * The integrals are shared aggressively. The exponent vector alone
//!   determines the field average, so a memo table keyed on it collapses the
//!   composition sum, and the underlying quadratures are cached per exponent
//!   pattern across the whole table. All PMF quadrature runs at a fixed
//!   1e-13 tolerance regardless of the caller's spec, because the alternating
//!   sums amplify integral error by the coefficient mass.
//!
//! Table-level output ([`PmfTable`]) clamps each mass to [0, 1], reports the
//! accumulated noise budget separately, and closes the distribution with a
//! certified tail bound: exact for one link, a union bound over per-link
//! tails for chains, and a complement computation for the independent mode's
//! geometric convolution.

use std::collections::HashMap;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{ChainTopology, InterferenceMode, Link, SystemParams};
use crate::moments::{
    check_divergence, deficit_integral, product_integral, profile_integral, DivergenceStatus,
    EvalContext, LinkFactor, MomentCache, ProductKind,
};
use crate::quad::IntegrationSpec;
use crate::util::{binomial, NeumaierSum};

/// Quadrature tolerance used for every PMF integral. The alternating sums
/// multiply integral error by the total coefficient mass (up to ~2^29 at a
/// horizon of thirty slots), so the integrals must be pinned far below the
/// accuracy wanted of the masses; 1e-13 leaves the final table good to a few
/// parts in 1e5 at the default horizon.
const PMF_QUAD_TOL: f64 = 1e-13;

/// A mass smaller than this fraction of the largest alternating-sum term is
/// considered cancellation noise by the single-mass entry points.
const PRECISION_GATE: f64 = 1e-6;

/// Default cap on the total number of joint-PMF terms a table may expand.
pub const DEFAULT_TERM_BUDGET: u64 = 100_000;

/// Default horizon: the shortest possible travel time plus 25 slots.
pub fn default_t_max(links: usize) -> u32 {
    links as u32 + 25
}

/// The per-link powers of the single-slot factor φ inside one field average.
///
/// A joint-PMF term is determined, up to its binomial coefficient and sign,
/// by this vector alone: E[∏ Ω_n^{e_n}] = exp(−λ V(e)). Memoizing on the
/// vector is what keeps the composition sum affordable — distinct index
/// tuples with equal exponents share one integral.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExponentVector(Vec<u32>);

impl ExponentVector {
    /// Exponents must cover every link and each must be at least one.
    pub fn new(exponents: Vec<u32>) -> Result<ExponentVector> {
        if exponents.is_empty() {
            return Err(Error::invalid("exponents", "empty exponent vector"));
        }
        if exponents.iter().any(|&e| e == 0) {
            return Err(Error::invalid(
                "exponents",
                "every link appears with exponent >= 1 in a PMF term",
            ));
        }
        Ok(ExponentVector(exponents))
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }
}

/// Scratch result of one alternating sum: the signed value, an upper bound
/// on its quadrature-plus-roundoff noise, and the largest term magnitude
/// (the scale against which cancellation is judged).
#[derive(Debug, Clone, Copy)]
struct MassTerms {
    value: f64,
    noise: f64,
    max_term: f64,
}

/// Sort descending by magnitude and accumulate with compensation. Equal
/// magnitudes keep their original order, so the result is deterministic.
fn alternating_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut sum = NeumaierSum::new();
    for &term in terms.iter() {
        sum.add(term);
    }
    sum.total()
}

/// V(e) for a single link together with its certified error bound.
fn single_deficit_mass(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    factor: &LinkFactor,
    exponent: u32,
) -> Result<(f64, f64)> {
    let integral = deficit_integral(cache, spec, factor, exponent)?;
    Ok((integral.value, integral.error_bound()))
}

/// V(e) = ∫ (1 − ∏_n φ_n^{e_n}) dx for a full exponent vector.
///
/// Expanding 1 − ∏ A_n over subsets (inclusion–exclusion on the deficits
/// 1 − A_n) splits the plane integral into one radial integral per link and
/// one genuinely two-dimensional integral per subset of two or more links.
/// Each piece is nonnegative-signed into a compensated sum; the error bounds
/// simply add.
fn coupled_deficit_mass(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    factors: &[LinkFactor],
    exponents: &[u32],
) -> Result<(f64, f64)> {
    debug_assert_eq!(factors.len(), exponents.len());
    let n = factors.len();
    if n == 1 {
        return single_deficit_mass(cache, spec, &factors[0], exponents[0]);
    }
    let mut value = NeumaierSum::new();
    let mut error = 0.0;
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let integral = if members.len() == 1 {
            let i = members[0];
            deficit_integral(cache, spec, &factors[i], exponents[i])?
        } else {
            let subset: Vec<(&LinkFactor, u32)> = members
                .iter()
                .map(|&i| (&factors[i], exponents[i]))
                .collect();
            product_integral(cache, spec, ProductKind::DeficitPow, &subset)?
        };
        let sign = if members.len() % 2 == 1 { 1.0 } else { -1.0 };
        value.add(sign * integral.value);
        error += integral.error_bound();
    }
    Ok((value.total(), error))
}

/// Memoized V(e) lookup shared across one table or joint-mass evaluation.
fn memoized_deficit_mass(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    factors: &[LinkFactor],
    exponents: &[u32],
    memo: &mut HashMap<Vec<u32>, (f64, f64)>,
) -> Result<(f64, f64)> {
    if let Some(&hit) = memo.get(exponents) {
        return Ok(hit);
    }
    let computed = coupled_deficit_mass(cache, spec, factors, exponents)?;
    memo.insert(exponents.to_vec(), computed);
    Ok(computed)
}

/// P[T_n = t] for one link: Σ_{k=0}^{t−1} (−1)^k C(t−1, k) exp(−λ V_{k+1}),
/// the binomial expansion of E[(1 − Ω)^{t−1} Ω].
fn link_mass_terms(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    intensity: f64,
    factor: &LinkFactor,
    t: u32,
) -> Result<MassTerms> {
    let mut terms = Vec::with_capacity(t as usize);
    let mut noise = 0.0;
    let mut max_term = 0.0f64;
    let mut abs_sum = 0.0;
    for k in 0..t {
        let (v, v_err) = single_deficit_mass(cache, spec, factor, k + 1)?;
        let magnitude = binomial(u64::from(t) - 1, u64::from(k)) * (-intensity * v).exp();
        noise += magnitude * (intensity * v_err).exp_m1();
        max_term = max_term.max(magnitude);
        abs_sum += magnitude;
        terms.push(if k % 2 == 0 { magnitude } else { -magnitude });
    }
    let value = alternating_sum(&mut terms);
    noise += 4.0 * f64::EPSILON * abs_sum;
    Ok(MassTerms {
        value,
        noise,
        max_term,
    })
}

/// P[T_1 = t_1, …, T_N = t_N] as a nested alternating sum: one binomial
/// index per link, coefficient ∏ C(t_n−1, k_n), sign (−1)^{Σ k_n}, field
/// average exp(−λ V(k+1)).
fn joint_mass_terms(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    intensity: f64,
    factors: &[LinkFactor],
    slot_counts: &[u32],
    memo: &mut HashMap<Vec<u32>, (f64, f64)>,
) -> Result<MassTerms> {
    let n = slot_counts.len();
    let term_count: usize = slot_counts.iter().map(|&t| t as usize).product();
    let mut terms = Vec::with_capacity(term_count);
    let mut noise = 0.0;
    let mut max_term = 0.0f64;
    let mut abs_sum = 0.0;
    let mut indices = vec![0u32; n];
    let mut exponents = vec![1u32; n];
    loop {
        let mut coefficient = 1.0;
        let mut parity = 0u32;
        for i in 0..n {
            coefficient *= binomial(u64::from(slot_counts[i]) - 1, u64::from(indices[i]));
            parity += indices[i];
            exponents[i] = indices[i] + 1;
        }
        let (v, v_err) = memoized_deficit_mass(cache, spec, factors, &exponents, memo)?;
        let magnitude = coefficient * (-intensity * v).exp();
        noise += magnitude * (intensity * v_err).exp_m1();
        max_term = max_term.max(magnitude);
        abs_sum += magnitude;
        terms.push(if parity % 2 == 0 { magnitude } else { -magnitude });

        // Odometer increment over the index box ∏ [0, t_n).
        let mut axis = 0;
        loop {
            if axis == n {
                let value = alternating_sum(&mut terms);
                noise += 4.0 * f64::EPSILON * abs_sum;
                return Ok(MassTerms {
                    value,
                    noise,
                    max_term,
                });
            }
            indices[axis] += 1;
            if indices[axis] < slot_counts[axis] {
                break;
            }
            indices[axis] = 0;
            axis += 1;
        }
    }
}

/// P[T_n > t] for one link: Σ_{i=0}^{t} (−1)^i C(t, i) exp(−λ V_i) with
/// V_0 = 0, the expansion of E[(1 − Ω)^t]. This is an equality, not a bound;
/// the returned noise makes it a certified bound when added.
fn link_tail_terms(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    intensity: f64,
    factor: &LinkFactor,
    t: u32,
) -> Result<MassTerms> {
    let mut terms = Vec::with_capacity(t as usize + 1);
    let mut noise = 0.0;
    let mut max_term = 0.0f64;
    let mut abs_sum = 0.0;
    for i in 0..=t {
        let (v, v_err) = if i == 0 {
            (0.0, 0.0)
        } else {
            single_deficit_mass(cache, spec, factor, i)?
        };
        let magnitude = binomial(u64::from(t), u64::from(i)) * (-intensity * v).exp();
        noise += magnitude * (intensity * v_err).exp_m1();
        max_term = max_term.max(magnitude);
        abs_sum += magnitude;
        terms.push(if i % 2 == 0 { magnitude } else { -magnitude });
    }
    let value = alternating_sum(&mut terms);
    noise += 4.0 * f64::EPSILON * abs_sum;
    Ok(MassTerms {
        value,
        noise,
        max_term,
    })
}

fn pmf_spec(base: &IntegrationSpec) -> IntegrationSpec {
    IntegrationSpec {
        rel_tol: base.rel_tol.min(PMF_QUAD_TOL),
        abs_tol: base.abs_tol.min(PMF_QUAD_TOL),
        radius_policy: base.radius_policy,
        max_evals: base.max_evals,
    }
}

fn require_dependent(params: &SystemParams, what: &'static str) -> Result<()> {
    if params.mode != InterferenceMode::Dependent {
        return Err(Error::invalid(
            "mode",
            match what {
                "link_pmf" => "link_pmf describes the dependent mode; \
                               use independent_pmf for renewed interference",
                "joint_pmf" => "joint_pmf describes the dependent mode; \
                                independent-mode slot counts are independent geometrics",
                _ => "this distribution is defined for the dependent mode; \
                      use independent_pmf for renewed interference",
            },
        ));
    }
    Ok(())
}

fn require_finite_regime(params: &SystemParams) -> Result<()> {
    if check_divergence(params) == DivergenceStatus::InfiniteDependentMean {
        return Err(Error::InfiniteDependentMean);
    }
    Ok(())
}

fn gate_precision(mass: MassTerms) -> Result<f64> {
    let floor = PRECISION_GATE * mass.max_term;
    if mass.value.abs() < floor {
        return Err(Error::PrecisionLoss {
            value: mass.value,
            noise_floor: floor,
        });
    }
    Ok(mass.value)
}

/// Probability that one link, alone in the dependent field, needs exactly
/// `slots` attempts.
///
/// Errors with [`Error::PrecisionLoss`] once the alternating sum cancels
/// below the reliable range (around t ≈ 13 at moderate intensity); use
/// [`travel_time_pmf`] for whole tables, which clamps instead of failing.
pub fn link_pmf(ctx: &EvalContext, link: &Link, slots: u32) -> Result<f64> {
    let params = ctx.params();
    require_dependent(params, "link_pmf")?;
    require_finite_regime(params)?;
    if slots == 0 {
        return Err(Error::invalid("slots", "travel time starts at one slot"));
    }
    let factor = LinkFactor::new(link, params)?;
    let spec = pmf_spec(ctx.spec());
    let mass = link_mass_terms(ctx.cache(), &spec, params.intensity, &factor, slots)?;
    gate_precision(mass)
}

/// Joint probability that link n of the chain needs exactly
/// `slot_counts[n]` attempts, all links sharing one frozen field.
pub fn joint_pmf(ctx: &EvalContext, topology: &ChainTopology, slot_counts: &[u32]) -> Result<f64> {
    let params = ctx.params();
    require_dependent(params, "joint_pmf")?;
    require_finite_regime(params)?;
    let links = topology.links();
    if slot_counts.len() != links.len() {
        return Err(Error::invalid(
            "slot_counts",
            "need exactly one slot count per link",
        ));
    }
    if slot_counts.iter().any(|&t| t == 0) {
        return Err(Error::invalid("slot_counts", "travel time starts at one slot"));
    }
    if links.len() == 1 {
        return link_pmf(ctx, &links[0], slot_counts[0]);
    }
    let term_count: u128 = slot_counts.iter().map(|&t| u128::from(t)).product();
    if term_count > u128::from(DEFAULT_TERM_BUDGET) {
        return Err(Error::TermBudget {
            t: slot_counts.iter().map(|&t| u64::from(t)).sum(),
            links: links.len(),
            terms: term_count,
            budget: DEFAULT_TERM_BUDGET,
        });
    }
    let factors = link_factors(links, params)?;
    let spec = pmf_spec(ctx.spec());
    let mut memo = HashMap::new();
    let mass = joint_mass_terms(
        ctx.cache(),
        &spec,
        params.intensity,
        &factors,
        slot_counts,
        &mut memo,
    )?;
    gate_precision(mass)
}

fn link_factors(links: &[Link], params: &SystemParams) -> Result<Vec<LinkFactor>> {
    links
        .iter()
        .map(|link| LinkFactor::new(link, params))
        .collect()
}

/// Truncated distribution of the chain travel time T = Σ T_n.
///
/// Masses are indexed from the earliest possible arrival t = N (one slot per
/// link) up to `t_max` inclusive. Each stored mass is clamped to [0, 1]; the
/// accumulated noise budget of the clamp-free values is reported alongside,
/// and `tail_mass_bound` certifies everything beyond the horizon.
#[derive(Debug, Clone)]
pub struct PmfTable {
    mode: InterferenceMode,
    first_support: u32,
    masses: Vec<f64>,
    tail_mass_bound: f64,
    noise_bound: f64,
    topology: ChainTopology,
    params: SystemParams,
}

impl PmfTable {
    /// Interference mode the table was computed under.
    pub fn mode(&self) -> InterferenceMode {
        self.mode
    }

    /// Smallest travel time with positive mass: the number of links.
    pub fn support_start(&self) -> u32 {
        self.first_support
    }

    /// Largest travel time covered by the table.
    pub fn t_max(&self) -> u32 {
        self.first_support + self.masses.len() as u32 - 1
    }

    /// The covered travel times, in order.
    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.first_support..=self.t_max()
    }

    /// Masses in support order, aligned with [`PmfTable::support`].
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass at travel time `t`: zero below the support start (arrival that
    /// early is impossible), `None` beyond the horizon (unknown, covered by
    /// the tail bound).
    pub fn mass(&self, t: u32) -> Option<f64> {
        if t < self.first_support {
            return Some(0.0);
        }
        self.masses.get((t - self.first_support) as usize).copied()
    }

    /// Certified upper bound on P[T > t_max].
    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// Upper bound on the total quadrature-plus-roundoff noise across all
    /// stored masses. Distinct from the tail bound: this measures how far
    /// the stored masses may sit from the true ones.
    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    /// Sum of the stored masses. Together with the tail bound this should
    /// bracket 1 up to the noise bound.
    pub fn total_mass(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for &m in &self.masses {
            sum.add(m);
        }
        sum.total()
    }

    /// Mean of the truncated distribution, Σ t · mass(t). Low by at most the
    /// mass beyond the horizon times its (tail-bounded) location.
    pub fn truncated_mean(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for (t, &m) in self.support().zip(&self.masses) {
            sum.add(f64::from(t) * m);
        }
        sum.total()
    }

    /// The topology this table describes.
    pub fn topology(&self) -> &ChainTopology {
        &self.topology
    }

    /// The system parameters this table was computed under.
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Two columns `t,mass`, preceded by comment lines carrying the tail and
    /// noise bounds. Deterministic: same table, same bytes.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# tail_mass_bound = {:e}", self.tail_mass_bound)?;
        writeln!(out, "# noise_bound = {:e}", self.noise_bound)?;
        writeln!(out, "t,mass")?;
        for (t, &m) in self.support().zip(&self.masses) {
            writeln!(out, "{},{:e}", t, m)?;
        }
        Ok(())
    }
}

/// Total number of joint terms the composition sum expands for horizons
/// N..=t_max: Σ_t Σ_{compositions of t} ∏ t_n = C(t_max + N, 2N) by the
/// hockey-stick identity. Exact in f64 for every departure from desk scale
/// worth counting (the budget rejects anything near 2^53 long before).
fn total_term_count(links: usize, t_max: u32) -> u128 {
    binomial(u64::from(t_max) + links as u64, 2 * links as u64) as u128
}

/// Distribution of the dependent-mode chain travel time up to `t_max`, with
/// the default term budget.
pub fn travel_time_pmf(
    ctx: &EvalContext,
    topology: &ChainTopology,
    t_max: u32,
) -> Result<PmfTable> {
    travel_time_pmf_with_budget(ctx, topology, t_max, DEFAULT_TERM_BUDGET)
}

/// As [`travel_time_pmf`], with an explicit cap on the number of joint terms
/// the composition sum may expand.
pub fn travel_time_pmf_with_budget(
    ctx: &EvalContext,
    topology: &ChainTopology,
    t_max: u32,
    budget: u64,
) -> Result<PmfTable> {
    let params = ctx.params();
    require_dependent(params, "travel_time_pmf")?;
    require_finite_regime(params)?;
    let links = topology.links();
    let n = links.len();
    if (t_max as usize) < n {
        return Err(Error::invalid(
            "t_max",
            "horizon below the number of links; no mass to tabulate",
        ));
    }
    let term_count = total_term_count(n, t_max);
    if term_count > u128::from(budget) {
        return Err(Error::TermBudget {
            t: u64::from(t_max),
            links: n,
            terms: term_count,
            budget,
        });
    }

    let factors = link_factors(links, params)?;
    let spec = pmf_spec(ctx.spec());
    let intensity = params.intensity;
    let mut memo = HashMap::new();

    let mut masses = Vec::with_capacity((t_max as usize) - n + 1);
    let mut noise_bound = 0.0;
    for t in n as u32..=t_max {
        let mut raw = NeumaierSum::new();
        let mut noise = 0.0;
        if n == 1 {
            let mass = link_mass_terms(ctx.cache(), &spec, intensity, &factors[0], t)?;
            raw.add(mass.value);
            noise += mass.noise;
        } else {
            for_each_composition(t, n, &mut |slot_counts| {
                let mass = joint_mass_terms(
                    ctx.cache(),
                    &spec,
                    intensity,
                    &factors,
                    slot_counts,
                    &mut memo,
                )?;
                raw.add(mass.value);
                noise += mass.noise;
                Ok(())
            })?;
        }
        // Clamping can only move the value toward the true mass, so the
        // unclamped noise budget still covers the stored value.
        masses.push(raw.total().clamp(0.0, 1.0));
        noise_bound += noise;
    }

    let tail_mass_bound =
        dependent_tail_bound(ctx.cache(), &spec, intensity, &factors, t_max)?;

    Ok(PmfTable {
        mode: InterferenceMode::Dependent,
        first_support: n as u32,
        masses,
        tail_mass_bound,
        noise_bound,
        topology: topology.clone(),
        params: *params,
    })
}

/// Visit every composition of `total` into `parts` positive integers.
fn for_each_composition<F>(total: u32, parts: usize, visit: &mut F) -> Result<()>
where
    F: FnMut(&[u32]) -> Result<()>,
{
    fn descend<F>(remaining: u32, slot: usize, current: &mut [u32], visit: &mut F) -> Result<()>
    where
        F: FnMut(&[u32]) -> Result<()>,
    {
        let parts_left = current.len() - slot;
        if parts_left == 1 {
            current[slot] = remaining;
            return visit(current);
        }
        // Leave at least one slot for every remaining part.
        for value in 1..=(remaining - parts_left as u32 + 1) {
            current[slot] = value;
            descend(remaining - value, slot + 1, current, visit)?;
        }
        Ok(())
    }
    let mut current = vec![0u32; parts];
    descend(total, 0, &mut current, visit)
}

/// Certified bound on P[T > t_max] for the dependent chain.
///
/// One link: the exact tail expansion plus its noise. Several links: if every
/// link finished within its share t*_n of a split Σ t*_n = t_max, the packet
/// arrived by t_max, so P[T > t_max] ≤ Σ_n P[T_n > t*_n].
fn dependent_tail_bound(
    cache: &MomentCache,
    spec: &IntegrationSpec,
    intensity: f64,
    factors: &[LinkFactor],
    t_max: u32,
) -> Result<f64> {
    let n = factors.len() as u32;
    let base = t_max / n;
    let leftover = t_max % n;
    let mut bound = 0.0;
    for (index, factor) in factors.iter().enumerate() {
        let share = base + u32::from((index as u32) < leftover);
        let tail = link_tail_terms(cache, spec, intensity, factor, share)?;
        bound += tail.value.max(0.0) + tail.noise;
    }
    Ok(bound)
}

/// Distribution of the independent-mode chain travel time up to `t_max`.
///
/// With the field renewed every slot the links are independent geometrics,
/// so the table is an exact convolution; the only integrals involved fix the
/// per-link success probabilities.
pub fn independent_pmf(
    ctx: &EvalContext,
    topology: &ChainTopology,
    t_max: u32,
) -> Result<PmfTable> {
    let params = ctx.params();
    if params.mode != InterferenceMode::Independent {
        return Err(Error::invalid(
            "mode",
            "independent_pmf describes the independent mode; \
             use travel_time_pmf for a frozen field",
        ));
    }
    let links = topology.links();
    let n = links.len();
    if (t_max as usize) < n {
        return Err(Error::invalid(
            "t_max",
            "horizon below the number of links; no mass to tabulate",
        ));
    }
    let spec = pmf_spec(ctx.spec());
    let mut successes = Vec::with_capacity(n);
    for link in links {
        let factor = LinkFactor::new(link, params)?;
        let deficit_mass =
            params.transmit_prob * profile_integral(ctx.cache(), &spec, &factor)?.value;
        let success = (-params.intensity * deficit_mass).exp();
        if success == 0.0 {
            return Err(Error::ZeroSuccessProbability);
        }
        successes.push(success);
    }

    // Convolve the geometric masses: dist[t] = P[first k links took t slots].
    let horizon = t_max as usize;
    let mut dist = vec![0.0f64; horizon + 1];
    dist[0] = 1.0;
    for &s in &successes {
        let failure = 1.0 - s;
        let mut next = vec![0.0f64; horizon + 1];
        for (j, &dj) in dist.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            let mut geometric = s;
            for cell in next.iter_mut().skip(j + 1) {
                *cell += dj * geometric;
                geometric *= failure;
            }
        }
        dist = next;
    }

    let masses: Vec<f64> = dist[n..].to_vec();
    let mut covered = NeumaierSum::new();
    for &m in &masses {
        covered.add(m);
    }
    // The convolution is exact arithmetic on exact geometric masses, so the
    // complement only carries summation roundoff.
    let roundoff = 32.0 * f64::EPSILON * (horizon as f64 + 1.0);
    let tail_mass_bound = (1.0 - covered.total()).max(0.0) + roundoff;

    Ok(PmfTable {
        mode: InterferenceMode::Independent,
        first_support: n as u32,
        masses,
        tail_mass_bound,
        noise_bound: roundoff,
        topology: topology.clone(),
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_chain_x, PathLossModel};

    fn dependent_params(intensity: f64, transmit_prob: f64) -> SystemParams {
        SystemParams::new(
            intensity,
            transmit_prob,
            0.1,
            PathLossModel::bounded(3.0).unwrap(),
            InterferenceMode::Dependent,
        )
        .unwrap()
    }

    #[test]
    fn exponent_vector_rejects_zero() {
        assert!(ExponentVector::new(vec![1, 0]).is_err());
        assert!(ExponentVector::new(vec![]).is_err());
        assert_eq!(ExponentVector::new(vec![2, 1]).unwrap().exponents(), &[2, 1]);
    }

    #[test]
    fn composition_enumeration_counts() {
        let mut seen = Vec::new();
        for_each_composition(5, 3, &mut |c| {
            seen.push(c.to_vec());
            Ok(())
        })
        .unwrap();
        // C(4, 2) = 6 compositions of 5 into 3 positive parts.
        assert_eq!(seen.len(), 6);
        assert!(seen.contains(&vec![1, 1, 3]));
        assert!(seen.contains(&vec![3, 1, 1]));
        assert!(seen.iter().all(|c| c.iter().sum::<u32>() == 5));
    }

    #[test]
    fn term_budget_formula_matches_enumeration() {
        for (links, t_max) in [(1usize, 9u32), (2, 8), (3, 7)] {
            let mut counted: u128 = 0;
            for t in links as u32..=t_max {
                for_each_composition(t, links, &mut |c| {
                    counted += c.iter().map(|&x| u128::from(x)).product::<u128>();
                    Ok(())
                })
                .unwrap();
            }
            assert_eq!(total_term_count(links, t_max), counted);
        }
    }

    #[test]
    fn alternating_sum_is_order_stable() {
        let mut a = vec![1.0, -0.5, 0.25, -0.125];
        let mut b = vec![-0.125, 0.25, 1.0, -0.5];
        assert_eq!(alternating_sum(&mut a), alternating_sum(&mut b));
        assert_eq!(alternating_sum(&mut a), 0.625);
    }

    #[test]
    fn one_slot_mass_is_the_success_probability() {
        let params = dependent_params(0.5, 0.5);
        // Same tolerances as the PMF's internal spec, so both routes hit the
        // identical cached profile integral and agree bit-for-bit.
        let spec = IntegrationSpec::with_tols(PMF_QUAD_TOL, PMF_QUAD_TOL);
        let ctx = EvalContext::with_spec(&params, spec);
        let chain = uniform_chain_x(1, 1.0).unwrap();
        let link = chain.links()[0];
        let mass = link_pmf(&ctx, &link, 1).unwrap();
        let success = crate::moments::success_probability(&ctx, &link).unwrap();
        assert_eq!(mass.to_bits(), success.to_bits());
    }

    #[test]
    fn precision_gate_fires_deep_in_the_tail() {
        let params = dependent_params(0.5, 0.5);
        let ctx = EvalContext::new(&params);
        let chain = uniform_chain_x(1, 1.0).unwrap();
        let link = chain.links()[0];
        let deep = (14..40).find_map(|t| match link_pmf(&ctx, &link, t) {
            Err(Error::PrecisionLoss { noise_floor, .. }) => Some(noise_floor),
            _ => None,
        });
        let floor = deep.expect("alternating sum should cancel below the gate by t = 40");
        assert!(floor > 0.0);
    }

    #[test]
    fn interference_free_chain_is_a_point_mass() {
        let params = dependent_params(0.0, 1.0);
        let ctx = EvalContext::new(&params);
        let chain = uniform_chain_x(3, 1.0).unwrap();
        let table = travel_time_pmf(&ctx, &chain, 10).unwrap();
        assert_eq!(table.support_start(), 3);
        assert_eq!(table.mass(3), Some(1.0));
        for t in 4..=10 {
            assert_eq!(table.mass(t), Some(0.0));
        }
        assert_eq!(table.mass(2), Some(0.0));
        assert_eq!(table.mass(11), None);
        // The masses are exact; the tail bound keeps its generic roundoff
        // padding of a few machine epsilons even though the sums cancel
        // exactly here.
        assert!(table.tail_mass_bound() < 1e-12);
    }

    #[test]
    fn table_mode_guards() {
        let dep = dependent_params(1.0, 0.5);
        let ctx = EvalContext::new(&dep);
        let chain = uniform_chain_x(2, 1.0).unwrap();
        assert!(matches!(
            independent_pmf(&ctx, &chain, 10),
            Err(Error::InvalidParameter { .. })
        ));
        let ind = SystemParams {
            mode: InterferenceMode::Independent,
            ..dep
        };
        let ctx_ind = EvalContext::new(&ind);
        assert!(matches!(
            travel_time_pmf(&ctx_ind, &chain, 10),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            link_pmf(&ctx_ind, &chain.links()[0], 1),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn term_budget_rejects_oversized_tables() {
        let params = dependent_params(1.0, 0.5);
        let ctx = EvalContext::new(&params);
        let chain = uniform_chain_x(3, 1.0).unwrap();
        let err = travel_time_pmf_with_budget(&ctx, &chain, 30, 10_000).unwrap_err();
        match err {
            Error::TermBudget { t, links, terms, budget } => {
                assert_eq!(t, 30);
                assert_eq!(links, 3);
                assert_eq!(budget, 10_000);
                assert!(terms > 10_000);
            }
            other => panic!("expected a term-budget error, got {other:?}"),
        }
    }

    #[test]
    fn divergent_regime_is_rejected() {
        let params = SystemParams::new(
            1.0,
            1.0,
            0.1,
            PathLossModel::singular(3.0).unwrap(),
            InterferenceMode::Dependent,
        )
        .unwrap();
        let ctx = EvalContext::new(&params);
        let chain = uniform_chain_x(1, 1.0).unwrap();
        assert!(matches!(
            travel_time_pmf(&ctx, &chain, 10),
            Err(Error::InfiniteDependentMean)
        ));
    }

    #[test]
    fn csv_shape_is_stable() {
        let params = dependent_params(0.0, 1.0);
        let ctx = EvalContext::new(&params);
        let chain = uniform_chain_x(1, 1.0).unwrap();
        let table = travel_time_pmf(&ctx, &chain, 3).unwrap();
        let mut bytes = Vec::new();
        table.write_csv(&mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# tail_mass_bound = "));
        assert!(lines[1].starts_with("# noise_bound = "));
        assert_eq!(lines[2], "t,mass");
        assert_eq!(lines[3], "1,1e0");
        assert_eq!(lines.len(), 6);
    }
}
