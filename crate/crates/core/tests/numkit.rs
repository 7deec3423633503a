use mabs::numkit::{self, latin_hypercube, multistart, nelder_mead, Cholesky, JitterLadder, NelderMeadOptions, SpdMatrix};
use mabs::rng;
use proptest::prelude::*;

fn spd_from(entries: &[f64], n: usize) -> Vec<Vec<f64>> {
    // A·Aᵀ + n·I is symmetric positive definite for any square A.
    let a = |i: usize, j: usize| entries[i * n + j];
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a(i, k) * a(j, k)).sum::<f64>() + if i == j { n as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

proptest! {
    #[test]
    fn cholesky_solve_has_small_residual(n in 1usize..7, entries in prop::collection::vec(-3.0f64..3.0, 49), rhs in prop::collection::vec(-10.0f64..10.0, 7)) {
        let rows = spd_from(&entries, n);
        let chol = Cholesky::factor(&SpdMatrix::from_rows(&rows).unwrap(), &JitterLadder::none()).unwrap();
        let b = &rhs[..n];
        let x = chol.solve(b);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| rows[i][j] * x[j]).sum();
            prop_assert!((ax - b[i]).abs() < 1e-9 * (1.0 + b[i].abs()));
        }
        let xb: f64 = x.iter().zip(b).map(|(u, v)| u * v).sum();
        prop_assert!((chol.quad_inv(b) - xb).abs() < 1e-9 * (1.0 + xb.abs()));
        prop_assert_eq!(chol.jitter(), 0.0);
    }

    #[test]
    fn log_det_matches_product_of_pivots(d in prop::collection::vec(0.1f64..10.0, 1..6)) {
        let n = d.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect();
        let chol = Cholesky::factor(&SpdMatrix::from_rows(&rows).unwrap(), &JitterLadder::default()).unwrap();
        let want: f64 = d.iter().map(|v| v.ln()).sum();
        prop_assert!((chol.log_det() - want).abs() < 1e-10);
    }

    #[test]
    fn latin_hypercube_fills_every_stratum(n in 1usize..40, d in 1usize..6, seed in any::<u64>()) {
        let pts = latin_hypercube(n, d, &mut rng::stream(seed, &[])).unwrap();
        prop_assert_eq!(pts.len(), n);
        for j in 0..d {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[j] * n as f64).floor() as usize).collect();
            strata.sort_unstable();
            prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
            prop_assert!(pts.iter().all(|p| p[j] > 0.0 && p[j] < 1.0));
        }
    }

    #[test]
    fn nelder_mead_finds_shifted_quadratic(c in prop::collection::vec(-5.0f64..5.0, 1..4)) {
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let r = nelder_mead(f, &vec![0.0; c.len()], &NelderMeadOptions::default()).unwrap();
        for (a, b) in r.argmin.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-4);
        }
    }
}

#[test]
fn rosenbrock_minimum() {
    let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
    let r = nelder_mead(f, &[-1.2, 1.0], &NelderMeadOptions::default()).unwrap();
    assert!((r.argmin[0] - 1.0).abs() < 1e-4 && (r.argmin[1] - 1.0).abs() < 1e-4);
}

#[test]
fn multistart_keeps_the_deeper_basin() {
    // Two wells at ±2; the one at +2 is deeper.
    let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) - x[0];
    let (best, all) = multistart(f, &[vec![-3.0], vec![3.0]], &NelderMeadOptions::default()).unwrap();
    assert_eq!(all.len(), 2);
    assert!(best.argmin[0] > 0.0);
}

#[test]
fn near_singular_matrix_takes_jitter() {
    let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
    let chol = Cholesky::factor(&SpdMatrix::from_rows(&rows).unwrap(), &JitterLadder::default()).unwrap();
    assert!(chol.jitter() > 0.0 && chol.jitter() <= 1e-4);
    assert!(Cholesky::factor(&SpdMatrix::from_rows(&rows).unwrap(), &JitterLadder::none()).is_err());
}

#[test]
fn sample_statistics() {
    assert_eq!(numkit::mean(&[1.0, 2.0, 3.0, 6.0]), 3.0);
    assert!((numkit::sample_variance(&[1.0, 2.0, 3.0, 6.0]) - 14.0 / 3.0).abs() < 1e-12);
}
