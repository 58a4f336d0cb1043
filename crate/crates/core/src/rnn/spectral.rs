//! Power-iteration estimate of the largest singular value.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm, standard_normal, Matrix};
use crate::rng::substream;

/// Persistent right-singular-vector estimate for one weight matrix.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    u: Vec<f64>,
    rng: ChaCha8Rng,
}

/// Singular vector pair from the last iteration; `sigma = vᵀ W u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SpectralEstimate {
    /// `vᵀ W u` for the stored vectors; linear in `W`.
    pub fn evaluate(&self, w: &Matrix) -> f64 {
        let mut wu = vec![0.0; w.rows];
        w.mul_vec_acc(&self.u, &mut wu);
        dot(&self.v, &wu)
    }

    /// Gradient of [`evaluate`](Self::evaluate) w.r.t. `W`: `v uᵀ`.
    pub fn add_gradient(&self, scale: f64, grad: &mut Matrix) {
        let v: Vec<f64> = self.v.iter().map(|x| x * scale).collect();
        grad.add_outer(&v, &self.u);
    }
}

impl PowerIteration {
    /// Starts from a random unit vector of length `cols`.
    pub fn new(cols: usize, seed: u64) -> Self {
        let mut rng = substream(seed, "spectral");
        let u = random_unit(cols, &mut rng);
        PowerIteration { u, rng }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Runs `iters` rounds of `v ← normalize(W u)`, `u ← normalize(Wᵀ v)` and
    /// returns `σ = vᵀ W u`, computed as `‖W u‖ / ‖u‖` so that isometries give
    /// exactly 1. A zero matrix yields 0 and re-randomizes `u`.
    pub fn estimate(&mut self, w: &Matrix, iters: usize) -> SpectralEstimate {
        assert_eq!(
            self.u.len(),
            w.cols,
            "power iteration vector has wrong length"
        );
        let mut v = vec![0.0; w.rows];
        for _ in 0..iters.max(1) {
            v.iter_mut().for_each(|x| *x = 0.0);
            w.mul_vec_acc(&self.u, &mut v);
            let nv = norm(&v);
            if nv == 0.0 || !nv.is_finite() {
                return self.degenerate(w);
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let mut u = vec![0.0; w.cols];
            w.mul_t_vec_acc(&v, &mut u);
            let nu = norm(&u);
            if nu == 0.0 || !nu.is_finite() {
                return self.degenerate(w);
            }
            u.iter_mut().for_each(|x| *x /= nu);
            self.u = u;
        }
        let mut wu = vec![0.0; w.rows];
        w.mul_vec_acc(&self.u, &mut wu);
        SpectralEstimate {
            sigma: norm(&wu) / norm(&self.u),
            u: self.u.clone(),
            v,
        }
    }

    fn degenerate(&mut self, w: &Matrix) -> SpectralEstimate {
        self.u = random_unit(w.cols, &mut self.rng);
        SpectralEstimate {
            sigma: 0.0,
            u: self.u.clone(),
            v: vec![0.0; w.rows],
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let nu = norm(&u);
        if nu > 0.0 {
            u.iter_mut().for_each(|x| *x /= nu);
            return u;
        }
    }
}

/// Largest singular value of `w` from a fresh random start.
pub fn spectral_norm(w: &Matrix, iters: usize, seed: u64) -> f64 {
    PowerIteration::new(w.cols, seed).estimate(w, iters).sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_one() {
        for n in [1, 4, 16] {
            let s = spectral_norm(&Matrix::identity(n), 1, 3);
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn diagonal() {
        let w = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let s = spectral_norm(&w, 50, 0);
        assert!((s - 3.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn zero_matrix() {
        let w = Matrix::zeros(3, 3);
        let mut pi = PowerIteration::new(3, 1);
        let before = pi.u().to_vec();
        let est = pi.estimate(&w, 5);
        assert_eq!(est.sigma, 0.0);
        assert_ne!(pi.u(), before.as_slice());
        assert!((norm(pi.u()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn persistent_state_converges_one_step_at_a_time() {
        let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]);
        let mut pi = PowerIteration::new(2, 9);
        let mut last = 0.0;
        for _ in 0..60 {
            last = pi.estimate(&w, 1).sigma;
        }
        // singular values of [[2,1],[0,1]]: sqrt(3 + sqrt(5))
        let exact = (3.0 + 5f64.sqrt()).sqrt();
        assert!((last - exact).abs() < 1e-9, "{last} vs {exact}");
    }

    #[test]
    fn gradient_is_outer_product() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![-1.0, 0.0, 3.0]]);
        let est = PowerIteration::new(3, 2).estimate(&w, 3);
        let mut g = Matrix::zeros(2, 3);
        est.add_gradient(1.0, &mut g);
        let h = 1e-6;
        for k in 0..6 {
            let mut wp = w.clone();
            wp.data[k] += h;
            let mut wm = w.clone();
            wm.data[k] -= h;
            let fd = (est.evaluate(&wp) - est.evaluate(&wm)) / (2.0 * h);
            assert!((fd - g.data[k]).abs() < 1e-8);
        }
    }
}
