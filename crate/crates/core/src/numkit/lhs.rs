use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Latin hypercube sample of `n` points in the open unit cube `(0,1)^d`.
///
/// Each column places exactly one point in every stratum `((i-1)/n, i/n)`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidSize(format!(
            "latin hypercube needs n >= 1 and d >= 1 (got n = {n}, d = {d})"
        )));
    }
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.sample(Open01);
            points[i][j] = (stratum as f64 + u) / n as f64;
        }
    }
    Ok(points)
}
