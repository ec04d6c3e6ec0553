//! Adaptive quadrature for interference integrals over the plane.
//!
//! Two entry points cover everything the library needs:
//! [`integrate_radial`] for radially symmetric integrands (one receiver)
//! and [`integrate_plane`] for integrands coupling several receivers.
//! Both truncate the infinite domain at a radius where a caller-supplied
//! certified tail envelope is provably below tolerance, then refine with
//! 15-point Gauss–Kronrod panels, worst-error-first, deterministically.
//!
//! The plane integral is evaluated in polar coordinates about the
//! centroid of the centers as nested 1-D integrals (radius outside,
//! angle inside). The bounded path-loss law has a gradient kink on the
//! unit circle around each receiver; those circles cross polar cells
//! obliquely and would degrade a tensor-cell scheme to low order, so
//! instead every inner angular integral splits exactly at the kink
//! angles (solve cos(psi - bearing) from the law of cosines) and the
//! outer radial integral splits at the kink-tangent radii. Each 1-D
//! piece is then smooth and the panels converge at full order, which is
//! what lets the PMF layer push absolute tolerances to ~1e-13.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Point;
use crate::util::NeumaierSum;

const TWO_PI: f64 = 2.0 * PI;

/// Tolerances, truncation policy, and evaluation budget for one integral.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationSpec {
    /// Relative tolerance on the integral value (default 1e-8).
    pub rel_tol: f64,
    /// Absolute tolerance, shared between quadrature error and the
    /// truncated tail (default 1e-12).
    pub abs_tol: f64,
    /// How the domain truncation radius is chosen.
    pub radius_policy: RadiusPolicy,
    /// Hard cap on integrand evaluations before giving up.
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusPolicy {
    /// Grow the radius geometrically until the tail envelope certifies
    /// the omitted mass below half the absolute tolerance.
    Auto,
    /// Integrate over a fixed disk of this radius; the reported
    /// tail bound is whatever the envelope says at that radius.
    Fixed(f64),
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            radius_policy: RadiusPolicy::Auto,
            max_evals: 30_000_000,
        }
    }
}

impl IntegrationSpec {
    pub fn with_tols(rel_tol: f64, abs_tol: f64) -> IntegrationSpec {
        IntegrationSpec {
            rel_tol,
            abs_tol,
            ..IntegrationSpec::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid(
                "tolerance",
                "rel_tol and abs_tol must be positive",
            ));
        }
        if let RadiusPolicy::Fixed(r) = self.radius_policy {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid("radius_policy", "fixed radius must be > 0"));
            }
        }
        Ok(())
    }
}

/// Outcome of one integral: the value, a certified bound on the mass
/// omitted outside the truncation radius, the achieved quadrature error
/// estimate, and the evaluation count.
#[derive(Debug, Clone, Copy)]
pub struct IntegralResult {
    pub value: f64,
    pub tail_bound: f64,
    /// Accumulated error estimate of the adaptive pass; at most the
    /// requested tolerance, and exactly zero for an identically zero
    /// integrand — which lets interference-free limits stay exact
    /// through every layer above.
    pub error_estimate: f64,
    pub evaluations: usize,
}

// 15-point Kronrod extension of 7-point Gauss (QUADPACK dqk15 constants).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One refinable panel. `noise` is the non-refinable error inherited from
/// nested inner integrals evaluated at this panel's nodes.
#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    noise: f64,
    seq: u64,
}

impl Piece {
    fn priority(&self) -> f64 {
        self.err + self.noise
    }
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    // Max-heap: larger combined error first; FIFO on exact ties so
    // refinement order (and thus the result) is deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority()
            .total_cmp(&other.priority())
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Evaluate one Gauss–Kronrod panel. The integrand returns
/// (value, pointwise error floor). Error estimation follows QUADPACK:
/// the |K - G| difference is rescaled against the panel's variation and
/// floored at roundoff scale so refinement stops at machine precision.
fn gk15<F>(f: &mut F, a: f64, b: f64, evals: &Cell<usize>) -> Result<Piece>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut values = [0.0_f64; 15];
    let mut noise_sum;
    let (fc, nc) = f(center)?;
    values[14] = fc;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = WGK[7] * fc.abs();
    noise_sum = WGK[7] * nc.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let (lo, nlo) = f(center - dx)?;
        let (hi, nhi) = f(center + dx)?;
        values[2 * j] = lo;
        values[2 * j + 1] = hi;
        resk += WGK[j] * (lo + hi);
        if j % 2 == 1 {
            resg += WG[j / 2] * (lo + hi);
        }
        resabs += WGK[j] * (lo.abs() + hi.abs());
        noise_sum += WGK[j] * (nlo.abs() + nhi.abs());
    }
    evals.set(evals.get() + 15);
    if !resk.is_finite() {
        return Err(Error::invalid(
            "integrand",
            format!("non-finite value on [{a}, {b}]"),
        ));
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (values[14] - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((values[2 * j] - mean).abs() + (values[2 * j + 1] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    err = err.max(50.0 * f64::EPSILON * resabs);
    Ok(Piece {
        a,
        b,
        value,
        err,
        noise: noise_sum * half.abs(),
        seq: 0,
    })
}

/// Adaptive worst-first refinement over an initial breakpoint partition.
/// Returns (value, total error bound including inherited noise).
fn refine<F>(
    f: &mut F,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    evals: &Cell<usize>,
    max_evals: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Piece> = Vec::new();
    let mut seq = 0_u64;
    let mut value_est = 0.0;
    let mut err_est = 0.0;
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mut piece = gk15(f, w[0], w[1], evals)?;
        piece.seq = seq;
        seq += 1;
        value_est += piece.value;
        err_est += piece.priority();
        heap.push(piece);
    }

    loop {
        let tol = abs_tol.max(rel_tol * value_est.abs());
        if err_est <= tol {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => {
                // Everything is frozen at machine width and the target is
                // still out of reach.
                return Err(Error::QuadratureBudget {
                    best: value_est,
                    error_bound: err_est,
                    evaluations: evals.get(),
                });
            }
        };
        let width_floor = f64::EPSILON * (worst.a.abs() + worst.b.abs() + 1.0);
        if worst.b - worst.a <= width_floor {
            frozen.push(worst);
            continue;
        }
        if evals.get() + 30 > max_evals {
            return Err(Error::QuadratureBudget {
                best: value_est,
                error_bound: err_est,
                evaluations: evals.get(),
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let mut left = gk15(f, worst.a, mid, evals)?;
        let mut right = gk15(f, mid, worst.b, evals)?;
        left.seq = seq;
        right.seq = seq + 1;
        seq += 2;
        value_est += left.value + right.value - worst.value;
        err_est += left.priority() + right.priority() - worst.priority();
        heap.push(left);
        heap.push(right);
    }

    // Exact final pass in spatial order: bit-identical no matter how the
    // refinement heap happened to interleave.
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.extend(frozen);
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = NeumaierSum::new();
    let mut err = NeumaierSum::new();
    for p in &pieces {
        value.add(p.value);
        err.add(p.priority());
    }
    Ok((value.total(), err.total()))
}

/// Resolve the truncation radius for the given envelope and policy.
/// `start` is the initial radius for the Auto policy.
fn resolve_radius<E>(envelope: &E, spec: &IntegrationSpec, start: f64) -> Result<f64>
where
    E: Fn(f64) -> f64,
{
    match spec.radius_policy {
        RadiusPolicy::Fixed(r) => Ok(r),
        RadiusPolicy::Auto => {
            let target = 0.5 * spec.abs_tol;
            let mut radius = start.max(1.0);
            for _ in 0..1100 {
                let tail = envelope(radius);
                if tail.is_finite() && tail >= 0.0 && tail < target {
                    return Ok(radius);
                }
                radius *= 2.0;
                if !radius.is_finite() {
                    break;
                }
            }
            Err(Error::TailEnvelopeStalled {
                target,
                radius,
            })
        }
    }
}

/// Breakpoints {0} ∪ kinks ∪ dyadic shells up to `radius`. The dyadic
/// shells keep panel counts logarithmic in the (possibly enormous)
/// truncation radius while the integrand decays polynomially.
fn radial_breakpoints(kinks: &[f64], radius: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    for &k in kinks {
        if k > 0.0 && k < radius {
            pts.push(k);
        }
    }
    let dyadic_start = kinks.iter().cloned().fold(1.0_f64, f64::max);
    let mut shell = dyadic_start;
    while shell < radius {
        if shell > 0.0 {
            pts.push(shell);
        }
        shell *= 2.0;
    }
    pts.push(radius);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= f64::EPSILON * (a.abs() + b.abs()));
    pts
}

/// Integrate f over the plane as ∫_0^∞ f(r)·2πr dr for a radially
/// symmetric profile. `tail_envelope(R)` must bound ∫_R^∞ |f(r)|·2πr dr
/// and be non-increasing; it certifies the truncation.
pub fn integrate_radial<F, E>(
    f: F,
    tail_envelope: E,
    spec: &IntegrationSpec,
) -> Result<IntegralResult>
where
    F: Fn(f64) -> f64,
    E: Fn(f64) -> f64,
{
    spec.validate()?;
    let radius = resolve_radius(&tail_envelope, spec, 2.0)?;
    let breakpoints = radial_breakpoints(&[1.0], radius);
    let evals = Cell::new(0_usize);
    let mut integrand = |r: f64| {
        let v = f(r) * TWO_PI * r;
        Ok((v, 0.0))
    };
    let (value, err) = refine(
        &mut integrand,
        &breakpoints,
        spec.rel_tol,
        0.5 * spec.abs_tol,
        &evals,
        spec.max_evals,
    )?;
    Ok(IntegralResult {
        value,
        tail_bound: tail_envelope(radius).max(0.0),
        error_estimate: err,
        evaluations: evals.get(),
    })
}

/// Offset of one center from the polar origin, precomputed.
struct CenterOffset {
    dist: f64,
    bearing: f64,
}

/// Kink angles on the circle of radius `r`: solutions of
/// ‖x(r, psi) - center‖ = 1 from the law of cosines.
fn kink_angles(offsets: &[CenterOffset], r: f64, out: &mut Vec<f64>) {
    out.clear();
    for c in offsets {
        if c.dist <= 0.0 || r <= 0.0 {
            continue;
        }
        let arg = (r * r + c.dist * c.dist - 1.0) / (2.0 * r * c.dist);
        if arg.abs() < 1.0 - 1e-14 {
            let half_span = arg.acos();
            out.push(c.bearing + half_span);
            out.push(c.bearing - half_span);
        }
    }
}

fn normalize_angle(mut a: f64) -> f64 {
    a %= TWO_PI;
    if a < 0.0 {
        a += TWO_PI;
    }
    a
}

/// Shared core: integrate f over the disk of `radius` about `origin`,
/// with integrand structure centered at `origin + offsets`. Returns
/// (value, error bound). `abs_tol` here is the quadrature-only budget.
fn disk_quadrature<F>(
    f: &F,
    origin: Point,
    radius: f64,
    offsets: &[CenterOffset],
    rel_tol: f64,
    abs_tol: f64,
    evals: &Cell<usize>,
    max_evals: usize,
) -> Result<(f64, f64)>
where
    F: Fn(Point) -> f64,
{
    // Outer radial breakpoints: tangent radii of every kink circle plus
    // the center distances themselves.
    let mut kinks = Vec::new();
    for c in offsets {
        if c.dist == 0.0 {
            kinks.push(1.0);
        } else {
            kinks.push((c.dist - 1.0).abs());
            kinks.push(c.dist);
            kinks.push(c.dist + 1.0);
        }
    }
    kinks.retain(|&k| k > 0.0 && k < radius);
    let breakpoints = radial_breakpoints(&kinks, radius);

    // Budget split: a quarter of the absolute tolerance is spent on the
    // inner angular integrals (spread as 1/(R·r) so the r-weighted outer
    // accumulation stays within it), the rest on the outer refinement.
    let inner_abs_share = 0.25 * abs_tol;
    let inner_rel = 0.2 * rel_tol;
    let outer_abs = 0.75 * abs_tol;

    let mut angle_buf: Vec<f64> = Vec::new();
    let mut angles: Vec<f64> = Vec::new();
    let mut outer = |r: f64| -> Result<(f64, f64)> {
        if r == 0.0 {
            return Ok((0.0, 0.0));
        }
        kink_angles(offsets, r, &mut angle_buf);
        angles.clear();
        angles.extend([0.0, 0.5 * PI, PI, 1.5 * PI]);
        for c in offsets {
            if c.dist > 0.0 {
                angles.push(normalize_angle(c.bearing));
            }
        }
        for &a in angle_buf.iter() {
            angles.push(normalize_angle(a));
        }
        angles.push(TWO_PI);
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() <= 1e-13);
        let mut inner = |psi: f64| {
            let p = Point::new(origin.x + r * psi.cos(), origin.y + r * psi.sin());
            let v = f(p);
            Ok((v, 0.0))
        };
        let inner_abs = inner_abs_share / (radius * r);
        let (v, e) = refine(&mut inner, &angles, inner_rel, inner_abs, evals, max_evals)?;
        Ok((r * v, r * e))
    };

    refine(
        &mut outer,
        &breakpoints,
        rel_tol,
        outer_abs,
        evals,
        max_evals,
    )
}

/// Integrate f over the whole plane. `centers` are the points the
/// integrand decays away from (receivers); the polar origin is their
/// centroid. `tail_envelope(R)` must bound the integrand mass outside
/// the disk of radius R about that centroid.
pub fn integrate_plane<F, E>(
    f: F,
    centers: &[Point],
    tail_envelope: E,
    spec: &IntegrationSpec,
) -> Result<IntegralResult>
where
    F: Fn(Point) -> f64,
    E: Fn(f64) -> f64,
{
    spec.validate()?;
    if centers.is_empty() {
        return Err(Error::invalid("centers", "need at least one center"));
    }
    let origin = Point::new(
        centers.iter().map(|c| c.x).sum::<f64>() / centers.len() as f64,
        centers.iter().map(|c| c.y).sum::<f64>() / centers.len() as f64,
    );
    let offsets: Vec<CenterOffset> = centers
        .iter()
        .map(|c| {
            let dx = c.x - origin.x;
            let dy = c.y - origin.y;
            CenterOffset {
                dist: dx.hypot(dy),
                bearing: dy.atan2(dx),
            }
        })
        .collect();
    let max_dist = offsets.iter().map(|c| c.dist).fold(0.0, f64::max);
    let radius = resolve_radius(&tail_envelope, spec, 2.0 * (max_dist + 1.0))?;
    let evals = Cell::new(0_usize);
    let (value, err) = disk_quadrature(
        &f,
        origin,
        radius,
        &offsets,
        spec.rel_tol,
        0.5 * spec.abs_tol,
        &evals,
        spec.max_evals,
    )?;
    Ok(IntegralResult {
        value,
        tail_bound: tail_envelope(radius).max(0.0),
        error_estimate: err,
        evaluations: evals.get(),
    })
}

/// Integrate f over a fixed disk (no tail: the disk is the domain).
/// `kink_centers` are absolute points whose unit circles are gradient
/// kinks of f; the origin of the disk need not be their centroid.
pub(crate) fn integrate_disk<F>(
    f: F,
    origin: Point,
    radius: f64,
    kink_centers: &[Point],
    spec: &IntegrationSpec,
) -> Result<IntegralResult>
where
    F: Fn(Point) -> f64,
{
    spec.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid("radius", "disk radius must be finite and > 0"));
    }
    let offsets: Vec<CenterOffset> = kink_centers
        .iter()
        .map(|c| {
            let dx = c.x - origin.x;
            let dy = c.y - origin.y;
            CenterOffset {
                dist: dx.hypot(dy),
                bearing: dy.atan2(dx),
            }
        })
        .collect();
    let evals = Cell::new(0_usize);
    let (value, err) = disk_quadrature(
        &f,
        origin,
        radius,
        &offsets,
        spec.rel_tol,
        spec.abs_tol,
        &evals,
        spec.max_evals,
    )?;
    Ok(IntegralResult {
        value,
        tail_bound: 0.0,
        error_estimate: err,
        evaluations: evals.get(),
    })
}

/// Certified tail of a power-law envelope: ∫_R^∞ c·(r-d)^(-m)·2πr dr for
/// the first-order far-field bounds (m > 2, R > d). Closed form used by
/// every module that builds envelopes.
pub fn power_tail(c: f64, d: f64, m: f64, radius: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let u = radius - d;
    if u <= 0.0 {
        return f64::INFINITY;
    }
    c * TWO_PI * (u.powf(2.0 - m) / (m - 2.0) + d * u.powf(1.0 - m) / (m - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_is_exact_on_low_degree_polynomials() {
        let evals = Cell::new(0);
        let mut f = |x: f64| Ok((3.0 * x * x + 2.0 * x + 1.0, 0.0));
        let p = gk15(&mut f, 0.0, 2.0, &evals).unwrap();
        assert!((p.value - 14.0).abs() < 1e-13);
        assert_eq!(evals.get(), 15);
    }

    #[test]
    fn radial_gaussian_integrates_to_pi() {
        let spec = IntegrationSpec::default();
        let res = integrate_radial(
            |r| (-r * r).exp(),
            |radius: f64| PI * (-radius * radius).exp(),
            &spec,
        )
        .unwrap();
        assert!((res.value - PI).abs() < 1e-10, "got {}", res.value);
        assert!(res.tail_bound <= spec.abs_tol);
    }

    #[test]
    fn plane_gaussian_integrates_to_pi() {
        let spec = IntegrationSpec::default();
        let res = integrate_plane(
            |p: Point| (-(p.x * p.x + p.y * p.y)).exp(),
            &[Point::ORIGIN],
            |radius: f64| PI * (-radius * radius).exp(),
            &spec,
        )
        .unwrap();
        assert!((res.value - PI).abs() < 1e-9, "got {}", res.value);
    }

    #[test]
    fn fixed_policy_integrates_the_given_disk_only() {
        let spec = IntegrationSpec {
            radius_policy: RadiusPolicy::Fixed(3.0),
            ..IntegrationSpec::default()
        };
        // ∫_0^3 r·2πr... of f=1: area of the disk.
        let res = integrate_radial(|_| 1.0, |_| 0.0, &spec).unwrap();
        assert!((res.value - PI * 9.0).abs() < 1e-9);
    }

    #[test]
    fn power_tail_matches_hand_integral() {
        // c=1, d=0, m=3: ∫_R^∞ r^-3·2πr dr = 2π/R.
        let t = power_tail(1.0, 0.0, 3.0, 10.0);
        assert!((t - TWO_PI / 10.0).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let spec = IntegrationSpec {
            rel_tol: 1e-15,
            abs_tol: 1e-300,
            radius_policy: RadiusPolicy::Fixed(1.0),
            max_evals: 200,
        };
        let err = integrate_radial(|r| (10.0 * r).sin().abs(), |_| 0.0, &spec).unwrap_err();
        match err {
            Error::QuadratureBudget { best, .. } => {
                assert!(best.is_finite());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
