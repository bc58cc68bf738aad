use esn::analytic::{
    alpha_estimate, extremal_coefficient, extremal_index, joint_cdf, marginal_cdf, AlphaMode, CoefficientArg, Confidence,
    Model,
};
use esn::shape::{Amplitude, EnvelopeMode, Region, ShapeKind, ShapeSpec};
use esn::stats::{ecdf, ks_one_sample, ks_two_sample};
use esn::weight::WeightSpec;
use proptest::prelude::*;

fn gaussian(sigma: f64, xi: f64) -> ShapeSpec {
    ShapeSpec::new(
        ShapeKind::GaussianDiag { sigma: vec![sigma], amplitude: Amplitude::Normalized { normalize_xi: xi } },
        1,
    )
    .unwrap()
}

fn any_weight() -> impl Strategy<Value = WeightSpec> {
    prop_oneof![
        (0.5..4.0f64).prop_map(|xi| WeightSpec::PowerMeasure { xi }),
        (0.5..4.0f64, 0.2..3.0f64).prop_map(|(xi, sigma)| WeightSpec::Pareto { xi, sigma }),
        (0.5..3.0f64, 0.3..3.0f64).prop_map(|(c, k)| WeightSpec::Burr { c, k }),
        (0.2..4.0f64).prop_map(|rate| WeightSpec::Exponential { rate }),
    ]
}

fn any_shape(d: usize) -> impl Strategy<Value = ShapeSpec> {
    prop_oneof![
        (0.3..2.0f64).prop_map(move |s| ShapeSpec::gaussian(vec![s; d]).unwrap()),
        (0.2..2.0f64).prop_map(move |w| ShapeSpec::indicator_box(vec![w; d], 1.0).unwrap()),
        (0.2..1.0f64, 2.5..5.0f64)
            .prop_map(move |(r0, beta)| ShapeSpec::new(ShapeKind::PathLossHard { a: 1.0, r0, beta }, d).unwrap()),
        (0.5..2.0f64, 0.5..3.0f64)
            .prop_map(move |(a, beta)| ShapeSpec::new(ShapeKind::PathLossSmooth { a, beta }, d).unwrap()),
        (0.5..3.0f64).prop_map(move |gamma| ShapeSpec::new(ShapeKind::LogDecay { gamma, cap: 10.0 }, d).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn max_stability(sigma in 0.3..2.0f64, xi in 0.5..4.0f64, theta in 0.2..8.0f64,
                     y in -1.0..1.0f64, u1 in 0.5..3.0f64, u2 in 0.5..3.0f64) {
        let model = Model::new(gaussian(sigma, xi), WeightSpec::PowerMeasure { xi }, 1.0).unwrap().with_tol(1e-12);
        let ys = vec![vec![0.0], vec![y]];
        let base = joint_cdf(&model, &ys, &[u1, u2]).unwrap().prob;
        let s = theta.powf(-1.0 / xi);
        let scaled = joint_cdf(&model, &ys, &[u1 * s, u2 * s]).unwrap().prob;
        prop_assert!((base.powf(theta) - scaled).abs() < 1e-10);
    }

    #[test]
    fn superposition_on_a_box(w in 0.1..2.0f64, a in any_weight(), b in any_weight(), lambda in 0.5..5.0f64, u in 0.2..4.0f64) {
        let infinite = [&a, &b].iter().any(|g| matches!(g, WeightSpec::PowerMeasure { .. }));
        let lambda = if infinite { 1.0 } else { lambda };
        let shape = ShapeSpec::indicator_box(vec![w], 1.0).unwrap();
        let sum = WeightSpec::Sum { parts: vec![a.clone(), b.clone()] };
        let m = |g: WeightSpec| Model::new(shape.clone(), g, lambda).unwrap();
        let lhs = marginal_cdf(&m(sum), u).unwrap().prob;
        let rhs = marginal_cdf(&m(a), u).unwrap().prob * marginal_cdf(&m(b), u).unwrap().prob;
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn alpha_modes_are_ordered(shape in any_shape(2), weight in any_weight(), eps in 0.01..0.5f64) {
        let a = |mode| alpha_estimate(&shape, &weight, mode).unwrap();
        let (lo, mid, hi) = (a(AlphaMode::Minus { eps }), a(AlphaMode::Plain), a(AlphaMode::Plus));
        if [lo.confidence, mid.confidence, hi.confidence].iter().all(|c| *c == Confidence::Exact) {
            prop_assert!(lo.alpha <= mid.alpha && mid.alpha <= hi.alpha);
        }
    }

    #[test]
    fn coefficient_lies_between_one_and_two(sigma in 0.3..2.0f64, xi in 0.5..4.0f64, t in -6.0..6.0f64) {
        let c = extremal_coefficient(&gaussian(sigma, xi), xi, &CoefficientArg::Lag(vec![t]), 1e-9).unwrap();
        prop_assert!(c.normalized);
        prop_assert!(c.theta >= 1.0 - 1e-7 && c.theta <= 2.0 + 1e-7, "{}", c.theta);
    }

    #[test]
    fn extremal_index_totals_are_subadditive(sigma in 0.3..2.0f64, v in 0.2..3.0f64) {
        let e = extremal_index(&gaussian(sigma, 1.0), 1.0, &[v], 8, 1e-9).unwrap();
        let total = |n: usize| n as f64 * e.gamma_n[n - 1];
        for n in 1..8 {
            for m in 1..=(8 - n) {
                prop_assert!(total(n + m) <= total(n) + total(m) + 1e-6);
            }
        }
        prop_assert!(e.gamma >= 0.0 && e.gamma <= e.gamma_min);
    }

    #[test]
    fn envelopes_are_monotone_in_the_ball(shape in any_shape(2), x in -3.0..3.0f64, y in -3.0..3.0f64,
                                          r1 in 0.0..2.0f64, dr in 0.0..2.0f64) {
        let p = [x, y];
        let (small, big) = (Region::ball(r1), Region::ball(r1 + dr));
        let s1 = shape.envelope_value(&p, &small, EnvelopeMode::Sup);
        let s2 = shape.envelope_value(&p, &big, EnvelopeMode::Sup);
        let i1 = shape.envelope_value(&p, &small, EnvelopeMode::Inf);
        let i2 = shape.envelope_value(&p, &big, EnvelopeMode::Inf);
        let h = shape.value(&p);
        prop_assert!(i2 <= i1 && i1 <= h && h <= s1 && s1 <= s2);
    }

    #[test]
    fn restricted_marks_stay_in_range(w in any_weight(), lo in 0.05..5.0f64, span in 1.01..50.0f64, v in 0.0001..0.9999f64) {
        let hi = lo * span;
        let m = w.sample_between(lo, hi, v).unwrap();
        prop_assert!(m > lo && m <= hi);
    }

    #[test]
    fn ks_statistics_are_distances(xs in prop::collection::vec(0.0..1.0f64, 1..60),
                                   ys in prop::collection::vec(0.0..1.0f64, 1..60)) {
        let d = ks_one_sample(&xs, |u| u.clamp(0.0, 1.0));
        prop_assert!((0.0..=1.0).contains(&d));
        let mut s = xs.clone();
        s.sort_by(f64::total_cmp);
        prop_assert!(d + 1e-12 >= (ecdf(&s, 0.5) - 0.5).abs());
        let d2 = ks_two_sample(&xs, &ys);
        prop_assert!((0.0..=1.0).contains(&d2));
        prop_assert_eq!(d2, ks_two_sample(&ys, &xs));
        prop_assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }
}
