//! Nelder–Mead simplex search with restarts and multi-start.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Convergence threshold on the simplex diameter.
    pub tol: f64,
    /// Number of times the simplex is rebuilt around the incumbent after convergence.
    pub restarts: usize,
    /// Edge length of the initial simplex, relative to `max(|x0_i|, 1)`.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-8,
            restarts: 2,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub argmin: Vec<f64>,
    pub fmin: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimize `objective` from `x0`. Non-finite values away from `x0` are treated as +∞.
pub fn nelder_mead<F>(objective: F, x0: &[f64], options: &NelderMeadOptions) -> Result<OptimizerReport>
where
    F: Fn(&[f64]) -> f64,
{
    let f0 = objective(x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    if x0.is_empty() {
        return Ok(OptimizerReport {
            argmin: vec![],
            fmin: f0,
            iterations: 0,
            evaluations: 1,
            converged: true,
        });
    }
    let mut counted = Counted {
        f: &objective,
        evals: 1,
    };
    let mut best = x0.to_vec();
    let mut fbest = f0;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..=options.restarts {
        let (x, fx, iters, conv) = run_simplex(&mut counted, &best, fbest, options);
        iterations += iters;
        let improved = fx < fbest;
        if fx <= fbest {
            best = x;
            fbest = fx;
        }
        converged = conv;
        if conv && !improved {
            break;
        }
    }
    Ok(OptimizerReport {
        argmin: best,
        fmin: fbest,
        iterations,
        evaluations: counted.evals,
        converged,
    })
}

fn run_simplex<F: Fn(&[f64]) -> f64>(
    f: &mut Counted<'_, F>,
    x0: &[f64],
    f0: f64,
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    values.push(f0);
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step * x0[i].abs().max(1.0);
        values.push(f.eval(&v));
        simplex.push(v);
    }

    let mut iters = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    while iters < opts.max_iters {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (ib, iw, isw) = (order[0], order[n], order[n - 1]);

        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[ib])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diameter < opts.tol {
            converged = true;
            break;
        }
        iters += 1;

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[iw])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = f.eval(&xr);
        if fr < values[ib] {
            let xe = along(2.0);
            let fe = f.eval(&xe);
            if fe < fr {
                simplex[iw] = xe;
                values[iw] = fe;
            } else {
                simplex[iw] = xr;
                values[iw] = fr;
            }
            continue;
        }
        if fr < values[isw] {
            simplex[iw] = xr;
            values[iw] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[iw] {
            let xc = along(0.5);
            let fc = f.eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = f.eval(&xc);
            (xc, fc)
        };
        if fc < values[iw].min(fr) {
            simplex[iw] = xc;
            values[iw] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[ib].clone();
        for i in 0..=n {
            if i == ib {
                continue;
            }
            for (v, b) in simplex[i].iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            values[i] = f.eval(&simplex[i]);
        }
    }
    let ib = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[ib].clone(), values[ib], iters, converged)
}

/// Runs [`nelder_mead`] from every start and keeps the best result.
///
/// Starts whose objective is not finite are skipped; an error is returned only
/// when no start is usable.
pub fn multistart<F>(
    objective: F,
    starts: &[Vec<f64>],
    options: &NelderMeadOptions,
) -> Result<(OptimizerReport, Vec<OptimizerReport>)>
where
    F: Fn(&[f64]) -> f64,
{
    let mut reports = Vec::with_capacity(starts.len());
    for s in starts {
        match nelder_mead(&objective, s, options) {
            Ok(r) => reports.push(r),
            Err(Error::NonFiniteObjective) => continue,
            Err(e) => return Err(e),
        }
    }
    let best = reports
        .iter()
        .min_by(|a, b| a.fmin.total_cmp(&b.fmin))
        .cloned()
        .ok_or(Error::NonFiniteObjective)?;
    Ok((best, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &Default::default()).unwrap();
        assert!((r.argmin[0] - 3.0).abs() < 1e-6, "{r:?}");
        assert!(r.converged);
    }

    #[test]
    fn separable_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let r = nelder_mead(f, &[0.0, 0.0], &Default::default()).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-5);
        assert!((r.argmin[1] + 2.0).abs() < 1e-5);
        assert!(r.fmin <= f(&[0.0, 0.0]));
    }

    #[test]
    fn nan_objective_rejected() {
        let err = nelder_mead(|_| f64::NAN, &[0.0], &Default::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective));
    }

    #[test]
    fn iteration_cap_respected() {
        let opts = NelderMeadOptions {
            max_iters: 5,
            restarts: 0,
            ..Default::default()
        };
        let r = nelder_mead(|x| x.iter().map(|v| v * v).sum(), &[5.0, 5.0, 5.0], &opts).unwrap();
        assert!(r.iterations <= 5);
        assert!(!r.converged);
    }

    #[test]
    fn multistart_keeps_best() {
        // double well with minima at ±1, deeper at −1
        let f = |x: &[f64]| (x[0] * x[0] - 1.0).powi(2) + 0.1 * x[0];
        let (best, all) = multistart(f, &[vec![2.0], vec![-2.0]], &Default::default()).unwrap();
        assert_eq!(all.len(), 2);
        assert!(best.argmin[0] < 0.0);
    }
}
