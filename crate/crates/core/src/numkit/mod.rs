//! Numerical support: SPD solves, simplex optimization and stratified sampling.

mod lhs;
mod linalg;
mod optim;

pub use lhs::latin_hypercube;
pub use linalg::{spd_solve, spd_solve_with, Cholesky, JitterLadder, Matrix, SpdMatrix, SpdSolution};
pub use optim::{multistart, nelder_mead, NelderMeadOptions, OptimizerReport};

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` divisor (0 for fewer than two values).
///
/// Values are shifted by the first one before the two-pass sum, so a constant
/// sample gives exactly 0.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let shift = xs[0];
    let m = xs.iter().map(|x| x - shift).sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - shift - m) * (x - shift - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_variance() {
        assert_eq!(sample_variance(&[0.1 + 0.2; 501]), 0.0);
        assert_eq!(sample_variance(&[1.0, 3.0]), 2.0);
    }
}
