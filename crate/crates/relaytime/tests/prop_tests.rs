//! Randomized invariants: identities and orderings that must hold
//! across the valid parameter space, not just at the frozen reference
//! points the other suites pin down. Integral-heavy blocks cap their
//! case counts; the slacks below cover quadrature error only, never a
//! genuine violation.

use proptest::prelude::*;
use relaytime::model::{
    uniform_chain_x, InterferenceMode, Link, PathLossModel, Point, SystemParams,
};
use relaytime::moments::{
    check_divergence, cross_moment, link_moments, success_probability, DivergenceStatus,
    EvalContext,
};
use relaytime::pmf::travel_time_pmf;
use relaytime::quad::{integrate_plane, integrate_radial, power_tail};
use relaytime::speed::{asymptotic_speed, variance_upper_bound, CovarianceTruncation};
use relaytime::IntegrationSpec;

fn params(
    lambda: f64,
    p: f64,
    theta: f64,
    loss: PathLossModel,
    mode: InterferenceMode,
) -> SystemParams {
    SystemParams::new(lambda, p, theta, loss, mode).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Path loss never increases with distance, and the two laws are
    /// bitwise identical from unit distance outward.
    #[test]
    fn path_loss_is_monotone_and_laws_agree_far_out(
        alpha in 2.1..5.0f64,
        near in 0.05..30.0f64,
        step in 0.0..10.0f64,
    ) {
        let far = near + step;
        let bounded = PathLossModel::bounded(alpha).unwrap();
        let singular = PathLossModel::singular(alpha).unwrap();
        prop_assert!(bounded.gain(near).unwrap() >= bounded.gain(far).unwrap());
        prop_assert!(singular.gain(near).unwrap() >= singular.gain(far).unwrap());
        if near >= 1.0 {
            prop_assert_eq!(bounded.gain(near).unwrap(), singular.gain(near).unwrap());
        }
    }

    /// Every hop of a uniform chain sees the same effective threshold
    /// (equal lengths up to placement round-off).
    #[test]
    fn uniform_chain_links_are_congruent(
        hops in 1usize..9,
        hop_length in 0.05..3.0f64,
    ) {
        let chain = uniform_chain_x(hops, hop_length).unwrap();
        for link in chain.links() {
            let rel = (link.length() - hop_length).abs() / hop_length;
            prop_assert!(rel < 1e-12, "hop length {} vs {hop_length}", link.length());
        }
    }

    /// The divergent regime is exactly (dependent, singular, p = 1).
    #[test]
    fn divergence_fires_exactly_on_the_bad_corner(
        p in prop_oneof![Just(1.0), 0.0..1.0f64],
        singular in any::<bool>(),
        dependent in any::<bool>(),
        lambda in 0.0..3.0f64,
        theta in 0.01..2.0f64,
    ) {
        let loss = if singular {
            PathLossModel::singular(3.0).unwrap()
        } else {
            PathLossModel::bounded(3.0).unwrap()
        };
        let mode = if dependent {
            InterferenceMode::Dependent
        } else {
            InterferenceMode::Independent
        };
        let status = check_divergence(&params(lambda, p, theta, loss, mode));
        let expected = dependent && singular && p == 1.0;
        prop_assert_eq!(status == DivergenceStatus::InfiniteDependentMean, expected);
    }

    /// The variance envelope dominates the uncorrelated part, grows
    /// with the chain, and stays linear: per-link mass caps at
    /// v + 2KC, so the Chebyshev quotient halves exactly once the
    /// truncation window saturates (N − 1 >= K).
    #[test]
    fn variance_envelope_algebra(
        lag in 1u32..30,
        adjacent in 0.0..2.0f64,
        link_variance in 0.0..10.0f64,
        links in 2u32..300,
    ) {
        let truncation = CovarianceTruncation::new(lag, adjacent, 1e-3).unwrap();
        let bound = variance_upper_bound(links, link_variance, &truncation);
        prop_assert!(bound >= f64::from(links) * link_variance);
        let next = variance_upper_bound(links + 1, link_variance, &truncation);
        prop_assert!(next >= bound);

        // Linearity: bound(N)/N never exceeds the saturated per-link
        // mass v + 2KC, and reaches it for N - 1 >= K.
        let per_link = bound / f64::from(links);
        let saturated = link_variance + 2.0 * f64::from(lag) * adjacent;
        prop_assert!(per_link <= saturated * (1.0 + 1e-12));
        let next_per_link = next / f64::from(links + 1);
        prop_assert!(next_per_link >= per_link * (1.0 - 1e-12));

        if link_variance + adjacent > 0.0 {
            let wide = lag + 1; // first chain length with a saturated window
            let chebyshev = |n: u32| {
                variance_upper_bound(n, link_variance, &truncation) / f64::from(n).powi(2)
            };
            let ratio = chebyshev(2 * wide) / chebyshev(wide);
            prop_assert!((ratio - 0.5).abs() < 1e-12, "saturated ratio {ratio}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Scaling the integrand scales the integral: the certified
    /// quadrature makes no hidden absolute-scale assumptions.
    #[test]
    fn radial_quadrature_is_linear(
        theta in 0.02..0.5f64,
        scale in 0.1..10.0f64,
    ) {
        let spec = IntegrationSpec::default();
        let profile = move |r: f64| {
            let g = if r <= 1.0 { 1.0 } else { r.powf(-3.0) };
            let t = theta * g;
            t / (1.0 + t)
        };
        let base = integrate_radial(profile, |r| power_tail(theta, 0.0, 3.0, r), &spec)
            .unwrap()
            .value;
        let scaled = integrate_radial(
            move |r| scale * profile(r),
            move |r| scale * power_tail(theta, 0.0, 3.0, r),
            &spec,
        )
        .unwrap()
        .value;
        prop_assert!(
            (scaled - scale * base).abs() <= 1e-7 * scale * base,
            "base {base}, scaled {scaled}, factor {scale}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Shifting the integrand and its registered center together moves
    /// nothing: the plane has no preferred origin.
    #[test]
    fn plane_quadrature_is_translation_invariant(
        theta in 0.05..0.4f64,
        p in 0.2..0.9f64,
        shift_x in -3.0..3.0f64,
        shift_y in -3.0..3.0f64,
    ) {
        let spec = IntegrationSpec::default();
        let deficit = move |d: f64| {
            let g = if d <= 1.0 { 1.0 } else { d.powf(-3.0) };
            let t = theta * g;
            p * t / (1.0 + t)
        };
        let home = Point::new(0.5, -0.25);
        let away = Point::new(home.x + shift_x, home.y + shift_y);
        let at_home = integrate_plane(
            move |x: Point| deficit(x.distance(home)),
            &[home],
            |r| power_tail(p * theta, 0.0, 3.0, r),
            &spec,
        )
        .unwrap()
        .value;
        let at_away = integrate_plane(
            move |x: Point| deficit(x.distance(away)),
            &[away],
            |r| power_tail(p * theta, 0.0, 3.0, r),
            &spec,
        )
        .unwrap()
        .value;
        prop_assert!(
            (at_home - at_away).abs() <= 1e-7 * at_home.abs().max(1e-12),
            "home {at_home}, away {at_away}"
        );
    }

    /// Mode ordering and per-link moment consistency over random
    /// parameters: frozen fields can only slow the packet (Jensen),
    /// the independent mean is the exact reciprocal of the success
    /// probability, and second moments dominate squared means.
    #[test]
    fn link_moments_obey_the_orderings(
        lambda in 0.05..1.5f64,
        p in 0.05..0.95f64,
        theta in 0.02..0.5f64,
        hop_length in 0.3..1.2f64,
        alpha in 2.4..4.0f64,
    ) {
        let loss = PathLossModel::bounded(alpha).unwrap();
        let link = Link {
            tx: Point::ORIGIN,
            rx: Point::new(hop_length, 0.0),
        };

        let dep = params(lambda, p, theta, loss, InterferenceMode::Dependent);
        let ind = params(lambda, p, theta, loss, InterferenceMode::Independent);
        let dep_ctx = EvalContext::new(&dep);
        let ind_ctx = EvalContext::new(&ind);

        let dep_moments = link_moments(&dep_ctx, &link).unwrap();
        let ind_moments = link_moments(&ind_ctx, &link).unwrap();

        // Jensen: E[1/P] >= 1/E[P]; slack covers quadrature only.
        prop_assert!(dep_moments.mean() >= ind_moments.mean() * (1.0 - 1e-9));

        let success = success_probability(&ind_ctx, &link).unwrap();
        prop_assert!((ind_moments.mean() * success - 1.0).abs() < 1e-12);

        for moments in [&dep_moments, &ind_moments] {
            prop_assert!(moments.mean() >= 1.0 - 1e-12);
            prop_assert!(moments.variance() >= -1e-9);
            prop_assert!(
                moments.second_moment() >= moments.mean().powi(2) * (1.0 - 1e-9)
            );
        }

        // Positive association of the frozen field: adjacent links are
        // positively correlated.
        let chain = uniform_chain_x(2, hop_length).unwrap();
        let cross = cross_moment(&dep_ctx, &chain.links()[0], &chain.links()[1]).unwrap();
        let product = dep_moments.mean() * dep_moments.mean();
        prop_assert!(cross >= product * (1.0 - 1e-8), "cross {cross} < product {product}");
    }

    /// Every emitted PMF is a (sub-)probability table whose certified
    /// tail closes the gap to 1.
    #[test]
    fn pmf_tables_are_certified_subprobabilities(
        lambda in 0.05..0.6f64,
        p in 0.1..0.9f64,
        theta in 0.02..0.3f64,
        hop_length in 0.4..1.0f64,
    ) {
        let loss = PathLossModel::bounded(3.0).unwrap();
        let dep = params(lambda, p, theta, loss, InterferenceMode::Dependent);
        let ctx = EvalContext::new(&dep);
        let chain = uniform_chain_x(1, hop_length).unwrap();
        let table = travel_time_pmf(&ctx, &chain, 8).unwrap();
        for &mass in table.masses() {
            prop_assert!((0.0..=1.0 + 1e-9).contains(&mass));
        }
        prop_assert!(table.total_mass() <= 1.0 + 1e-6);
        prop_assert!(table.total_mass() + table.tail_mass_bound() >= 1.0 - 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Speed reports stay inside their contract over random parameters:
    /// reciprocal mean inverse speed, range (0, L], and the dependent
    /// mode never faster than the independent one.
    #[test]
    fn speed_reports_respect_the_contract(
        lambda in 0.05..1.0f64,
        p in 0.1..0.9f64,
        theta in 0.02..0.3f64,
        hop_length in 0.3..1.5f64,
    ) {
        let loss = PathLossModel::bounded(3.0).unwrap();
        let dep = params(lambda, p, theta, loss, InterferenceMode::Dependent);
        let ind = params(lambda, p, theta, loss, InterferenceMode::Independent);
        let dep_report = asymptotic_speed(&EvalContext::new(&dep), hop_length).unwrap();
        let ind_report = asymptotic_speed(&EvalContext::new(&ind), hop_length).unwrap();
        for report in [&dep_report, &ind_report] {
            let speed = report.asymptotic_speed();
            prop_assert!(speed > 0.0 && speed <= hop_length * (1.0 + 1e-12));
            prop_assert!((speed * report.mean_inverse_speed() - 1.0).abs() < 1e-12);
            prop_assert!(!report.is_divergent());
        }
        prop_assert!(
            dep_report.asymptotic_speed() <= ind_report.asymptotic_speed() * (1.0 + 1e-9)
        );
    }
}
