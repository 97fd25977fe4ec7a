//! Discrete sine series on `(0, Z)` with nodes `z_j = j Z / (N + 1)`,
//! `j = 1..=N`, computed through a complex FFT of length `2 (N + 1)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct SineBasis {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineBasis").field("n", &self.n).finish()
    }
}

impl SineBasis {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let m = 2 * (n + 1);
        Self {
            n,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    /// Coefficients `c_k`, `k = 1..=N` (stored at index `k - 1`), such that
    /// `f_j = sum_k c_k sin(pi j k / (N + 1))`.
    pub fn analyze(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n);
        let m = 2 * (self.n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (j, &v) in values.iter().enumerate() {
            buf[j + 1] = v;
            buf[m - j - 1] = -v;
        }
        self.forward.process(&mut buf);
        // FFT of the odd extension is -2i sum_j f_j sin(...)
        let scale = Complex64::new(0.0, 1.0 / (self.n + 1) as f64);
        buf[1..=self.n].iter().map(|&a| a * scale).collect()
    }

    /// Values at the nodes of `d^m/dz^m sum_k c_k sin(kappa_k z)` where
    /// `kappa_k = k pi / Z` and `Z = (N + 1) dz`.
    pub fn synthesize(&self, coeffs: &[Complex64], order: u32, dz: f64) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let m = 2 * (self.n + 1);
        let kappa0 = PI / ((self.n + 1) as f64 * dz);
        let mut plus = vec![Complex64::new(0.0, 0.0); m];
        for (i, &c) in coeffs.iter().enumerate() {
            let kappa = kappa0 * (i + 1) as f64;
            plus[i + 1] = c * kappa.powi(order as i32);
        }
        let mut minus = plus.clone();
        self.inverse.process(&mut plus);
        self.forward.process(&mut minus);
        // d^m sin(x) = sin(x + m pi / 2) = (i^m e^{ix} - i^{-m} e^{-ix}) / (2i)
        let im = Complex64::new(0.0, 1.0).powu(order);
        let im_inv = im.conj();
        let two_i = Complex64::new(0.0, 2.0);
        (1..=self.n)
            .map(|j| (im * plus[j] - im_inv * minus[j]) / two_i)
            .collect()
    }
}
