//! Gaussian-process surrogate on the unit hypercube.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

const LENGTH_SCALES: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0];
const NOISES: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];

/// Matern 5/2 correlation at distance `r`.
pub fn matern52(r: f64, length_scale: f64) -> f64 {
    let s = 5f64.sqrt() * r / length_scale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Zero-mean GP on standardized targets, hyperparameters picked from a small
/// grid by marginal likelihood.
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    pub length_scale: f64,
    pub noise: f64,
}

impl GaussianProcess {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Option<Self> {
        let n = y.len();
        if n == 0 || x.len() != n {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
        let mut dist = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let d = distance(&x[i], &x[j]);
                dist[(i, j)] = d;
                dist[(j, i)] = d;
            }
        }
        let mut best: Option<(f64, f64, f64, Cholesky<f64, Dyn>, DVector<f64>)> = None;
        for &ls in &LENGTH_SCALES {
            for &noise in &NOISES {
                let k = DMatrix::from_fn(n, n, |i, j| matern52(dist[(i, j)], ls) + if i == j { noise } else { 0.0 });
                let Some(chol) = k.cholesky() else {
                    continue;
                };
                let alpha = chol.solve(&ys);
                let log_det: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum();
                let lml = -0.5 * ys.dot(&alpha) - log_det;
                if best.as_ref().is_none_or(|b| lml > b.0) {
                    best = Some((lml, ls, noise, chol, alpha));
                }
            }
        }
        let (_, length_scale, noise, chol, alpha) = best?;
        Some(Self {
            x: x.to_vec(),
            chol,
            alpha,
            y_mean,
            y_scale,
            length_scale,
            noise,
        })
    }

    /// Posterior mean and standard deviation in the original target units.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| matern52(distance(xi, point), self.length_scale)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular solve");
        let var = (1.0 - v.norm_squared()).max(1e-12);
        (self.y_mean + mean * self.y_scale, var.sqrt() * self.y_scale)
    }
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - best - xi).max(0.0);
    }
    let z = (mean - best - xi) / sd;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    (mean - best - xi) * cdf + sd * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_shape() {
        assert_eq!(matern52(0.0, 0.3), 1.0);
        assert!(matern52(0.1, 0.3) > matern52(0.2, 0.3));
    }

    #[test]
    fn interpolates_noise_free_data() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin()).collect();
        let gp = GaussianProcess::fit(&x, &y).unwrap();
        for (p, t) in x.iter().zip(&y) {
            let (m, s) = gp.predict(p);
            assert!((m - t).abs() < 0.05, "{m} vs {t}");
            assert!(s < 0.2);
        }
        let (_, far) = gp.predict(&[3.0]);
        assert!(far > 0.5);
    }

    #[test]
    fn improvement_is_non_negative() {
        assert!(expected_improvement(0.0, 1.0, 5.0, 0.0) >= 0.0);
        assert!(expected_improvement(1.0, 0.1, 0.0, 0.0) > 0.9);
        assert_eq!(expected_improvement(1.0, 0.0, 2.0, 0.0), 0.0);
    }
}
