use mabs::design::DesignParams;
use mabs::inputs::{self, DegeneratePolicy, MomentLayout};
use mabs::kriging::{DesignSummary, FitOptions, SkModel};
use mabs::numkit::JitterLadder;
use mabs::simulators::{Simulator, Toy};
use mabs::uq::{self, percentile_indices, percentile_interval, uq_from_moments, UqConfig};
use mabs::Error;
use proptest::prelude::*;

proptest! {
    #[test]
    fn interval_brackets_the_central_mass(xs in prop::collection::vec(-1e3f64..1e3, 40..400), alpha in 0.01f64..0.5) {
        prop_assume!(xs.len() as f64 >= 2.0 / alpha);
        let (lo, hi) = percentile_interval(&xs, alpha).unwrap();
        prop_assert!(lo <= hi);
        let below = xs.iter().filter(|&&v| v < lo).count() as f64;
        let above = xs.iter().filter(|&&v| v > hi).count() as f64;
        let n = xs.len() as f64;
        prop_assert!(below <= n * alpha / 2.0);
        prop_assert!(above <= n * alpha / 2.0);
    }

    #[test]
    fn indices_follow_ceiling_rule(b in 40usize..5000, alpha in 0.01f64..0.2) {
        let (lo, hi) = percentile_indices(b, alpha);
        prop_assert!(lo >= 1 && hi <= b && lo <= hi);
        prop_assert!((lo as f64) >= b as f64 * alpha / 2.0 - 1e-9 && ((lo - 1) as f64) < b as f64 * alpha / 2.0);
    }

    #[test]
    fn interval_is_order_invariant(mut xs in prop::collection::vec(-10.0f64..10.0, 100), seed in any::<u64>()) {
        let a = percentile_interval(&xs, 0.05).unwrap();
        use rand::seq::SliceRandom;
        xs.shuffle(&mut mabs::rng::stream(seed, &[]));
        prop_assert_eq!(a, percentile_interval(&xs, 0.05).unwrap());
    }
}

fn line_model() -> SkModel {
    let points: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
    let means = points.iter().map(|p| 2.0 * p[0] + 1.0).collect();
    let design = DesignSummary::new(points, means, vec![0.2; 6], vec![20; 6]).unwrap();
    SkModel::with_hyperparameters(design, 4.0, vec![0.3], &JitterLadder::default()).unwrap()
}

#[test]
fn variance_components_and_report() {
    let model = line_model();
    let moments: Vec<Vec<f64>> = (0..400).map(|b| vec![1.0 + 3.0 * b as f64 / 399.0]).collect();
    let cfg = UqConfig { b: 400, alpha: 0.05, seed: 4 };
    let r = uq_from_moments(&model, &moments, cfg).unwrap();
    assert!(r.ci_plus.1 - r.ci_plus.0 >= 0.0);
    assert!(r.sigma2_m >= 0.0 && r.sigma2_i > 0.0);
    assert_eq!(r.mu_b.len(), 400);
    let again = uq_from_moments(&model, &moments, cfg).unwrap();
    assert_eq!(r, again);
    let json = serde_json::to_value(r.report()).unwrap();
    for key in ["ci0_lo", "ci0_hi", "ciplus_lo", "ciplus_hi", "sigma2_I", "sigma2_M", "sigma2_T", "ratio", "B", "alpha", "seed"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let mut csv = Vec::new();
    r.write_samples_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("b,mu_b,sigma2_p_b,M_b\n"));
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn config_rejects_small_b() {
    assert!(matches!(UqConfig { b: 39, alpha: 0.05, seed: 0 }.validate(), Err(Error::Config(_))));
    assert!(UqConfig { b: 40, alpha: 0.05, seed: 0 }.validate().is_ok());
    assert!(matches!(percentile_interval(&[], 0.05), Err(Error::TooFewSamples { .. })));
}

#[test]
fn toy_pipeline_brackets_the_truth_and_agrees_with_direct_bootstrap() {
    let sim = Toy::new(0.5);
    let specs = sim.specs().to_vec();
    let truth = sim.true_moments().unwrap();
    let ds = inputs::synthesize_dataset(&specs, &truth, &[50, 50, 50], 17).unwrap();
    let cfg = UqConfig { b: 400, alpha: 0.05, seed: 17 };
    let params = DesignParams { k: 20, budget: 1000, ..DesignParams::default() };
    let run = uq::run_uq(&ds, &specs, &sim, &params, &FitOptions::default(), cfg, DegeneratePolicy::default()).unwrap();
    let r = &run.result;
    assert!(r.ci_plus.0 < 5.15 && 5.15 < r.ci_plus.1, "{:?}", r.ci_plus);
    // Metamodel means against the closed-form surface at the same bootstrap moments.
    let layout = MomentLayout::from_specs(&specs);
    let boot = inputs::bootstrap_moments(&ds, &specs, 400, 17, DegeneratePolicy::default()).unwrap();
    let exact: Vec<f64> = boot.moments.iter().map(|x| sim.analytic_mean(x).unwrap().unwrap()).collect();
    let (lo, hi) = percentile_interval(&exact, 0.05).unwrap();
    assert!((r.ci0.0 - lo).abs() < 0.15 && (r.ci0.1 - hi).abs() < 0.15, "{:?} vs ({lo}, {hi})", r.ci0);
    assert_eq!(layout.dim(), run.model.dim());
    let direct = uq::direct_bootstrap(&ds, &specs, &sim, 200, cfg, DegeneratePolicy::default()).unwrap();
    assert!((direct.ci_lo - lo).abs() < 0.3 && (direct.ci_hi - hi).abs() < 0.3);
}

#[test]
fn unstable_fraction_counts_predicate_hits() {
    let layout = MomentLayout::from_specs(&Toy::new(0.5).specs().to_vec());
    let xs: Vec<_> = (0..10).map(|i| layout.unflatten(&[i as f64, 1.0, 0.5, 1.0, 1.0]).unwrap()).collect();
    let f = uq::unstable_fraction(&xs, |x| x.block("A").unwrap()[0] >= 7.0);
    assert_eq!(f, 0.3);
}
