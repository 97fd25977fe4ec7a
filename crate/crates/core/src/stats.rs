//! Goodness-of-fit tests used by the equivariance and sampling checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test of `samples` against `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against expected probabilities.
/// Cells with expected count below 5 are pooled into their neighbour.
pub fn chi_square_gof(observed: &[usize], expected_prob: &[f64]) -> ChiSquareResult {
    assert_eq!(observed.len(), expected_prob.len());
    let n: usize = observed.iter().sum();
    let nf = n as f64;
    let total_p: f64 = expected_prob.iter().sum();

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected_prob) {
        acc.0 += o as f64;
        acc.1 += nf * p / total_p;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    ChiSquareResult { statistic, dof, p_value }
}

/// Piecewise-linear CDF through `(x_i, F_i)` knots, clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    x: Vec<f64>,
    f: Vec<f64>,
}

impl TabulatedCdf {
    /// Cumulative trapezoid of `density` sampled at increasing `x`.
    pub fn from_density(x: Vec<f64>, density: &[f64]) -> Self {
        assert_eq!(x.len(), density.len());
        let mut f = Vec::with_capacity(x.len());
        let mut acc = 0.0;
        f.push(0.0);
        for i in 1..x.len() {
            acc += 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]);
            f.push(acc);
        }
        let total = acc;
        for v in f.iter_mut() {
            *v /= total;
        }
        Self { x, f }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.x[0] {
            return 0.0;
        }
        if t >= *self.x.last().unwrap() {
            return 1.0;
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let s = (t - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.f[i] + s * (self.f[i + 1] - self.f[i])
    }

    /// Inverse CDF with linear interpolation inside each segment.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.f.partition_point(|&v| v <= u).clamp(1, self.f.len() - 1) - 1;
        let df = self.f[i + 1] - self.f[i];
        let s = if df > 0.0 { (u - self.f[i]) / df } else { 0.0 };
        self.x[i] + s * (self.x[i + 1] - self.x[i])
    }
}
