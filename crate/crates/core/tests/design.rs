use mabs::design::{build_ellipsoid, coverage_test_plan, make_design, uniform_in_ellipsoid, DesignParams, Ellipsoid};
use mabs::inputs::{DegeneratePolicy, Family, InputDataset, ModelSpec};
use mabs::rng;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

fn tilted() -> Ellipsoid {
    Ellipsoid::new(vec![1.0, -2.0, 0.5], vec![vec![4.0, 1.0, 0.0], vec![1.0, 2.0, 0.3], vec![0.0, 0.3, 1.0]], 3.0).unwrap()
}

#[test]
fn gaussian_cloud_radius_matches_chi_square_quantile() {
    let mut r = rng::stream(11, &[]);
    let samples: Vec<Vec<f64>> = (0..20_000)
        .map(|_| vec![StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)])
        .collect();
    let e = build_ellipsoid(&samples, 0.97).unwrap();
    let want = ChiSquared::new(2.0).unwrap().inverse_cdf(0.97);
    assert!((want - 7.013).abs() < 1e-3);
    assert!((e.radius2() - want).abs() < 0.1 * want, "{} vs {want}", e.radius2());
}

#[test]
fn test_plans_meet_their_error_rates() {
    for &(q0, q1, a, pw) in &[(0.99, 0.97, 0.005, 0.95), (0.95, 0.90, 0.05, 0.9), (0.9, 0.8, 0.01, 0.99)] {
        let (b1, c) = coverage_test_plan(q0, q1, a, pw).unwrap();
        let size = Binomial::new(q0, b1 as u64).unwrap().cdf(c as u64);
        let power = Binomial::new(q1, b1 as u64).unwrap().cdf(c as u64);
        assert!(size <= a, "plan ({b1}, {c}) has size {size}");
        assert!(power >= pw, "plan ({b1}, {c}) has power {power}");
        let smaller = b1 - 1;
        let feasible = (0..=smaller as u64).any(|c| {
            Binomial::new(q0, smaller as u64).unwrap().cdf(c) <= a && Binomial::new(q1, smaller as u64).unwrap().cdf(c) >= pw
        });
        assert!(!feasible, "B1 = {b1} is not minimal");
    }
}

#[test]
fn uniform_points_fill_the_ellipsoid_evenly() {
    let e = tilted();
    let pts = uniform_in_ellipsoid(&e, 4000, &mut rng::stream(2, &[])).unwrap();
    // For a uniform point in a d-ball, (r/R)^d is U(0, 1).
    let u: Vec<f64> = pts.iter().map(|p| (e.distance2(p) / e.radius2()).powf(1.5)).collect();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    assert!((mean - 0.5).abs() < 0.02, "{mean}");
    let centroid: Vec<f64> = (0..3).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64).collect();
    for (c, want) in centroid.iter().zip(e.center()) {
        assert!((c - want).abs() < 0.1, "{c} vs {want}");
    }
}

proptest! {
    #[test]
    fn sampled_points_stay_inside(k in 1usize..60, seed in any::<u64>()) {
        let e = tilted();
        let pts = uniform_in_ellipsoid(&e, k, &mut rng::stream(seed, &[])).unwrap();
        prop_assert_eq!(pts.len(), k);
        prop_assert!(pts.iter().all(|p| e.contains(p)));
    }

    #[test]
    fn ellipsoid_holds_requested_fraction(seed in any::<u64>(), q in 0.5f64..1.0) {
        let mut r = rng::stream(seed, &[]);
        let samples: Vec<Vec<f64>> = (0..200).map(|_| { let (a, b): (f64, f64) = (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)); vec![a, 3.0 * b] }).collect();
        let e = build_ellipsoid(&samples, q).unwrap();
        let inside = samples.iter().filter(|p| e.contains(p)).count();
        prop_assert!(inside as f64 >= q * 200.0 - 1e-9);
    }
}

#[test]
fn design_is_reproducible_and_enclosed() {
    let specs = vec![ModelSpec::new("a", Family::Normal), ModelSpec::new("p", Family::Bernoulli)];
    let mut ds = InputDataset::new();
    ds.insert("a", vec![1.0, 2.5, 0.3, 1.9, 1.1, 0.7, 2.2, 1.4]);
    ds.insert("p", vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    let params = DesignParams { k: 12, budget: 600, ..DesignParams::default() };
    let a = make_design(&ds, &specs, &params, 42, DegeneratePolicy::default()).unwrap();
    let b = make_design(&ds, &specs, &params, 42, DegeneratePolicy::default()).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.reps, 50);
    assert_eq!(a.points.len(), 12);
    assert!(a.points.iter().all(|p| a.ellipsoid.contains(p)));
    let last = a.provenance.rounds.last().unwrap();
    assert!(last.accepted && last.contained > a.provenance.threshold);
    let json = serde_json::to_string(&a).unwrap();
    let back: mabs::design::ExperimentDesign = serde_json::from_str(&json).unwrap();
    assert_eq!(back.points, a.points);
}
