//! Binned spin POVMs `E_k = e0_k I + e_k . sigma` and the diagnostics that
//! decide whether direction-indexed arrival statistics can come from one.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::binning::{ArrivalDistribution, TimeBinning};
use crate::error::{Error, Result};
use crate::spin::SpinDirection;

/// Slack on positivity and normalization of a constructed POVM.
pub const POVM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpinPovm {
    binning: TimeBinning,
    e0: Vec<f64>,
    e: Vec<[f64; 3]>,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl SpinPovm {
    /// Checks `|e_k| <= e0_k`, `sum e0 = 1` and `sum e = 0`.
    pub fn new(binning: TimeBinning, e0: Vec<f64>, e: Vec<[f64; 3]>) -> Result<Self> {
        let p = Self::raw(binning, e0, e)?;
        p.validate()?;
        Ok(p)
    }

    fn raw(binning: TimeBinning, e0: Vec<f64>, e: Vec<[f64; 3]>) -> Result<Self> {
        binning.validate()?;
        if e0.len() != binning.n_outcomes() || e.len() != binning.n_outcomes() {
            return Err(Error::invalid(format!("a POVM on this binning needs {} elements", binning.n_outcomes())));
        }
        Ok(Self { binning, e0, e })
    }

    pub fn validate(&self) -> Result<()> {
        for (k, (&a, &v)) in self.e0.iter().zip(&self.e).enumerate() {
            if !(a.is_finite() && v.iter().all(|x| x.is_finite())) {
                return Err(Error::invalid(format!("non-finite POVM element {k}")));
            }
            if a < 0.0 || norm3(v) > a + 1e-12 {
                return Err(Error::invalid(format!("POVM element {k} is not positive: e0 = {a}, |e| = {}", norm3(v))));
            }
        }
        let (s0, s) = self.totals();
        if (s0 - 1.0).abs() > POVM_TOLERANCE || norm3(s) > POVM_TOLERANCE {
            return Err(Error::invalid(format!("POVM does not sum to the identity: e0 total {s0}, e total {s:?}")));
        }
        Ok(())
    }

    fn totals(&self) -> (f64, [f64; 3]) {
        let s0 = self.e0.iter().sum();
        let mut s = [0.0; 3];
        for v in &self.e {
            for i in 0..3 {
                s[i] += v[i];
            }
        }
        (s0, s)
    }

    /// `n`-independent POVM with the given masses.
    pub fn trivial(binning: TimeBinning, masses: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        Self::new(binning, masses, vec![[0.0; 3]; n])
    }

    pub fn binning(&self) -> &TimeBinning {
        &self.binning
    }
    pub fn e0(&self) -> &[f64] {
        &self.e0
    }
    pub fn e_vec(&self) -> &[[f64; 3]] {
        &self.e
    }

    /// `e0_k + e_k . n` per outcome.
    pub fn predict_masses(&self, n: &SpinDirection) -> Vec<f64> {
        let v = n.vector();
        self.e0.iter().zip(&self.e).map(|(a, e)| a + dot3(*e, v)).collect()
    }

    pub fn predict(&self, n: &SpinDirection) -> ArrivalDistribution {
        ArrivalDistribution::from_masses(self.binning, self.predict_masses(n))
            .expect("a valid POVM predicts a probability distribution")
    }

    /// Smallest eigenvalue `e0_k - |e_k|` of each element.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.e0.iter().zip(&self.e).map(|(a, e)| a - norm3(*e)).collect()
    }

    /// `(tau0, tau)` with `tau0 = sum t_k e0_k` and `tau = sum t_k e_k` over
    /// the non-censored bins, `t_k` the bin midpoints.
    pub fn time_moments(&self) -> (f64, [f64; 3]) {
        let mut t0 = 0.0;
        let mut t = [0.0; 3];
        for k in 0..self.binning.n_bins {
            let m = self.binning.midpoint(k);
            t0 += m * self.e0[k];
            for i in 0..3 {
                t[i] += m * self.e[k][i];
            }
        }
        (t0, t)
    }

    /// CSV with columns `bin, t_lo, t_hi, e0, ex, ey, ez`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin", "t_lo", "t_hi", "e0", "ex", "ey", "ez"])?;
        for k in 0..self.binning.n_outcomes() {
            let (lo, hi) = self.binning.edges(k);
            let e = self.e[k];
            out.write_record([
                k.to_string(),
                lo.to_string(),
                hi.to_string(),
                format!("{:.17e}", self.e0[k]),
                format!("{:.17e}", e[0]),
                format!("{:.17e}", e[1]),
                format!("{:.17e}", e[2]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<[f64; 7]> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut row = [0.0; 7];
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = rec
                    .get(i)
                    .ok_or_else(|| Error::Parse("short POVM row".into()))?
                    .trim()
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::Parse(e.to_string()))?;
            }
            rows.push(row);
        }
        let last = rows.last().ok_or_else(|| Error::Parse("empty POVM file".into()))?;
        if last[2].is_finite() || rows.len() < 2 {
            return Err(Error::Parse("last row must be the censored bin".into()));
        }
        let binning = TimeBinning::new(last[1], rows.len() - 1)?;
        for (k, r) in rows.iter().enumerate() {
            if r[0] as usize != k {
                return Err(Error::Parse(format!("bin index {} out of order", r[0])));
            }
        }
        let e0 = rows.iter().map(|r| r[3]).collect();
        let e = rows.iter().map(|r| [r[4], r[5], r[6]]).collect();
        Self::new(binning, e0, e)
    }
}

/// Total variation `1/2 sum |p_k - q_k|`.
pub fn tv_distance(p: &ArrivalDistribution, q: &ArrivalDistribution) -> Result<f64> {
    p.check_same_binning(q)?;
    Ok(0.5 * p.mass().iter().zip(q.mass()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Root-sum-square of the per-bin standard errors of `p - q`, treating the
/// inputs as independent.
pub fn difference_noise(p: &ArrivalDistribution, q: &ArrivalDistribution) -> Result<f64> {
    p.check_same_binning(q)?;
    Ok(p.stderr().iter().zip(q.stderr()).map(|(a, b)| a * a + b * b).sum::<f64>().sqrt())
}

/// A distance together with the Monte Carlo noise it has to beat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub value: f64,
    pub noise: f64,
}

impl Comparison {
    /// `value / noise`; infinite for exact inputs with a nonzero value.
    pub fn ratio(&self) -> f64 {
        if self.noise > 0.0 {
            self.value / self.noise
        } else if self.value > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

pub fn compare(p: &ArrivalDistribution, q: &ArrivalDistribution) -> Result<Comparison> {
    Ok(Comparison { value: tv_distance(p, q)?, noise: difference_noise(p, q)? })
}

/// TV between `(P+ + P-)/2` and `(Q+ + Q-)/2`. Any spin POVM gives zero,
/// whatever the two axes.
pub fn trace_pair_residual(
    p_plus: &ArrivalDistribution,
    p_minus: &ArrivalDistribution,
    q_plus: &ArrivalDistribution,
    q_minus: &ArrivalDistribution,
) -> Result<Comparison> {
    compare(&p_plus.even_mixture(p_minus)?, &q_plus.even_mixture(q_minus)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Fitted POVM after projection onto the positive, normalized set.
    pub povm: SpinPovm,
    pub directions: Vec<SpinDirection>,
    pub residual_unconstrained: f64,
    pub residual_projected: f64,
    /// Smallest eigenvalue of each unconstrained element; negative values
    /// are infeasible.
    pub per_bin_min_eigenvalue: Vec<f64>,
    pub per_bin_noise: Vec<f64>,
    /// Root-sum-square of every input standard error.
    pub noise_floor: f64,
    pub design_rank: usize,
}

impl FitReport {
    /// `max(0, -min eigenvalue)` per bin.
    pub fn per_bin_violation(&self) -> Vec<f64> {
        self.per_bin_min_eigenvalue.iter().map(|v| (-v).max(0.0)).collect()
    }

    /// Bins whose eigenvalue is below `-multiplier` times its noise.
    pub fn violating_bins(&self, multiplier: f64) -> Vec<usize> {
        self.per_bin_min_eigenvalue
            .iter()
            .zip(&self.per_bin_noise)
            .enumerate()
            .filter(|(_, (v, s))| **v < -multiplier * **s)
            .map(|(k, _)| k)
            .collect()
    }

    /// Largest `violation / noise` over the bins.
    pub fn max_violation_ratio(&self) -> f64 {
        self.per_bin_violation()
            .iter()
            .zip(&self.per_bin_noise)
            .map(|(v, s)| if *s > 0.0 { v / s } else if *v > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn projected_ratio(&self) -> f64 {
        Comparison { value: self.residual_projected, noise: self.noise_floor }.ratio()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dirs: Vec<String> = self.directions.iter().map(|d| d.label()).collect();
        let _ = writeln!(s, "directions = [{}]", dirs.join("; "));
        let _ = writeln!(s, "design_rank = {}", self.design_rank);
        let _ = writeln!(s, "residual_unconstrained = {:.6e}", self.residual_unconstrained);
        let _ = writeln!(s, "residual_projected = {:.6e}", self.residual_projected);
        let _ = writeln!(s, "noise_floor = {:.6e}", self.noise_floor);
        let _ = writeln!(s, "bins_violating_5x = {:?}", self.violating_bins(5.0));
        let _ = writeln!(s, "bin,t_lo,t_hi,min_eigenvalue,noise,e0,ex,ey,ez");
        for k in 0..self.povm.binning.n_outcomes() {
            let (lo, hi) = self.povm.binning.edges(k);
            let e = self.povm.e[k];
            let _ = writeln!(
                s,
                "{k},{lo},{hi},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                self.per_bin_min_eigenvalue[k], self.per_bin_noise[k], self.povm.e0[k], e[0], e[1], e[2]
            );
        }
        s
    }
}

fn shared_binning(dists: &[&ArrivalDistribution]) -> Result<TimeBinning> {
    let first = dists.first().ok_or_else(|| Error::invalid("no distributions"))?;
    for d in &dists[1..] {
        first.check_same_binning(d)?;
    }
    Ok(*first.binning())
}

fn residual(povm: &SpinPovm, directions: &[SpinDirection], dists: &[&ArrivalDistribution]) -> f64 {
    directions
        .iter()
        .zip(dists)
        .map(|(n, d)| {
            povm.predict_masses(n)
                .iter()
                .zip(d.mass())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Makes `(e0, e)` a valid POVM: alternately clamps `e0 >= 0` and shrinks
/// `e` radially onto `|e| <= e0`, then restores `sum e0 = 1`, `sum e = 0` by
/// uniform subtraction, until both hold.
pub fn project_to_povm(binning: TimeBinning, mut e0: Vec<f64>, mut e: Vec<[f64; 3]>) -> Result<SpinPovm> {
    let k = e0.len() as f64;
    let cone = |e0: &mut [f64], e: &mut [[f64; 3]]| {
        for (a, v) in e0.iter_mut().zip(e.iter_mut()) {
            if *a < 0.0 {
                *a = 0.0;
            }
            let r = norm3(*v);
            if r > *a {
                let s = if r > 0.0 { *a / r } else { 0.0 };
                for x in v.iter_mut() {
                    *x *= s;
                }
            }
        }
    };
    for _ in 0..100_000 {
        cone(&mut e0, &mut e);
        let s0: f64 = e0.iter().sum();
        let mut s = [0.0; 3];
        for v in &e {
            for i in 0..3 {
                s[i] += v[i];
            }
        }
        if (s0 - 1.0).abs() <= 0.1 * POVM_TOLERANCE && norm3(s) <= 0.1 * POVM_TOLERANCE {
            break;
        }
        let d0 = (s0 - 1.0) / k;
        for a in e0.iter_mut() {
            *a -= d0;
        }
        for v in e.iter_mut() {
            for i in 0..3 {
                v[i] -= s[i] / k;
            }
        }
    }
    SpinPovm::new(binning, e0, e)
}

/// Per-bin least squares of `p_j,k = e0_k + e_k . n_j` with the minimum-norm
/// solution when the directions do not span three dimensions.
pub fn fit_spin_povm(directions: &[SpinDirection], dists: &[ArrivalDistribution]) -> Result<FitReport> {
    fit_spin_povm_with(directions, dists, false)
}

/// As [`fit_spin_povm`]; with `require_full_rank` a rank-deficient design is
/// an error instead of a minimum-norm fit.
pub fn fit_spin_povm_with(
    directions: &[SpinDirection],
    dists: &[ArrivalDistribution],
    require_full_rank: bool,
) -> Result<FitReport> {
    if directions.len() != dists.len() {
        return Err(Error::invalid("one distribution per direction required"));
    }
    let distinct = directions.iter().enumerate().any(|(i, a)| directions[..i].iter().any(|b| !a.approx_eq(b)));
    if directions.len() < 2 || !distinct {
        return Err(Error::invalid("at least two distinct directions required"));
    }
    let refs: Vec<&ArrivalDistribution> = dists.iter().collect();
    let binning = shared_binning(&refs)?;
    let j = directions.len();
    let design = DMatrix::from_fn(j, 4, |r, c| if c == 0 { 1.0 } else { directions[r].vector()[c - 1] });
    let svd = design.clone().svd(true, true);
    let eps = 1e-10 * svd.singular_values.max();
    let rank = svd.rank(eps);
    if require_full_rank && rank < 4 {
        return Err(Error::DegenerateDesign(format!(
            "directions span a design of rank {rank} < 4; some components of e are unidentifiable"
        )));
    }
    let pinv = svd.pseudo_inverse(eps).map_err(|e| Error::DegenerateDesign(e.to_string()))?;

    let n_out = binning.n_outcomes();
    let mut e0 = Vec::with_capacity(n_out);
    let mut e = Vec::with_capacity(n_out);
    let mut per_bin_noise = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let p = DVector::from_fn(j, |r, _| dists[r].mass()[k]);
        let x = &pinv * p;
        e0.push(x[0]);
        e.push([x[1], x[2], x[3]]);
        per_bin_noise.push(dists.iter().map(|d| d.stderr()[k].powi(2)).sum::<f64>().sqrt());
    }
    let raw = SpinPovm::raw(binning, e0.clone(), e.clone())?;
    let residual_unconstrained = residual(&raw, directions, &refs);
    let per_bin_min_eigenvalue = raw.min_eigenvalues();
    let povm = project_to_povm(binning, e0, e)?;
    let residual_projected = residual(&povm, directions, &refs).max(residual_unconstrained);
    Ok(FitReport {
        povm,
        directions: directions.to_vec(),
        residual_unconstrained,
        residual_projected,
        per_bin_min_eigenvalue,
        per_bin_noise,
        noise_floor: noise_floor(&refs),
        design_rank: rank,
    })
}

fn noise_floor(dists: &[&ArrivalDistribution]) -> f64 {
    dists.iter().flat_map(|d| d.stderr()).map(|s| s * s).sum::<f64>().sqrt()
}

/// Axial candidate `E_k = P_x,k (I - sigma_z) + P_z,k sigma_z`, which
/// reproduces both inputs and is positive iff `P_z,k <= 2 P_x,k`.
pub fn fit_axial(p_x: &ArrivalDistribution, p_z: &ArrivalDistribution) -> Result<FitReport> {
    let binning = shared_binning(&[p_x, p_z])?;
    let e0: Vec<f64> = p_x.mass().to_vec();
    let e: Vec<[f64; 3]> = p_x.mass().iter().zip(p_z.mass()).map(|(x, z)| [0.0, 0.0, z - x]).collect();
    let per_bin_min_eigenvalue = p_x
        .mass()
        .iter()
        .zip(p_z.mass())
        .map(|(x, z)| z.min(2.0 * x - z))
        .collect();
    let per_bin_noise = p_x
        .stderr()
        .iter()
        .zip(p_z.stderr())
        .map(|(sx, sz)| (4.0 * sx * sx + sz * sz).sqrt())
        .collect();
    let directions = vec![SpinDirection::plus_x(), SpinDirection::plus_z()];
    let raw = SpinPovm::raw(binning, e0.clone(), e.clone())?;
    let residual_unconstrained = residual(&raw, &directions, &[p_x, p_z]);
    let povm = project_to_povm(binning, e0, e)?;
    let residual_projected = residual(&povm, &directions, &[p_x, p_z]).max(residual_unconstrained);
    Ok(FitReport {
        povm,
        directions,
        residual_unconstrained,
        residual_projected,
        per_bin_min_eigenvalue,
        per_bin_noise,
        noise_floor: noise_floor(&[p_x, p_z]),
        design_rank: 2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationBound {
    /// Largest TV between data and prediction over the four axes.
    pub max_dev: Comparison,
    pub worst_direction: SpinDirection,
    /// `TV(P_x, P_z) / 2`.
    pub bound: Comparison,
}

impl DeviationBound {
    pub fn holds(&self) -> bool {
        self.max_dev.value >= self.bound.value
    }
}

fn find<'a>(data: &'a [(SpinDirection, ArrivalDistribution)], n: &SpinDirection) -> Result<&'a ArrivalDistribution> {
    data.iter()
        .find(|(d, _)| d.approx_eq(n))
        .map(|(_, p)| p)
        .ok_or_else(|| Error::MissingDirection(n.label()))
}

/// For any POVM, some axis among `+-z, +-x` deviates from its prediction by
/// at least `TV(P_x, P_z) / 2` when `P_-x = P_x` and `P_-z = P_z`.
pub fn deviation_lower_bound(data: &[(SpinDirection, ArrivalDistribution)], fitted: &SpinPovm) -> Result<DeviationBound> {
    let axes = [
        SpinDirection::plus_z(),
        SpinDirection::minus_z(),
        SpinDirection::plus_x(),
        SpinDirection::minus_x(),
    ];
    let mut worst: Option<(Comparison, SpinDirection)> = None;
    for n in &axes {
        let p = find(data, n)?;
        let pred = fitted.predict(n);
        let c = compare(p, &pred)?;
        if worst.is_none_or(|(w, _)| c.value > w.value) {
            worst = Some((c, *n));
        }
    }
    let (max_dev, worst_direction) = worst.expect("four axes were compared");
    let c = compare(find(data, &SpinDirection::plus_x())?, find(data, &SpinDirection::plus_z())?)?;
    Ok(DeviationBound {
        max_dev,
        worst_direction,
        bound: Comparison { value: 0.5 * c.value, noise: 0.5 * c.noise },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub tau0: f64,
    pub tau_z: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl SinusoidFit {
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// Weighted least squares of `means` against `tau0 + tau_z cos(alpha)`.
pub fn fit_sinusoidal_mean(alphas: &[f64], means: &[f64], errors: &[f64]) -> Result<SinusoidFit> {
    let n = alphas.len();
    if means.len() != n || errors.len() != n {
        return Err(Error::invalid("alphas, means and errors must have equal length"));
    }
    if n < 3 {
        return Err(Error::invalid("at least three points required"));
    }
    if errors.iter().any(|s| !(s.is_finite() && *s > 0.0)) || means.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("means must be finite and errors positive"));
    }
    let c: Vec<f64> = alphas.iter().map(|a| a.cos()).collect();
    let (mut sw, mut swc, mut swcc, mut swy, mut swcy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = 1.0 / (errors[i] * errors[i]);
        sw += w;
        swc += w * c[i];
        swcc += w * c[i] * c[i];
        swy += w * means[i];
        swcy += w * c[i] * means[i];
    }
    let det = sw * swcc - swc * swc;
    let spread = c.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - c.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if spread < 1e-12 || det <= 1e-14 * sw * swcc {
        return Err(Error::DegenerateDesign("all cos(alpha) are equal".into()));
    }
    let tau0 = (swcc * swy - swc * swcy) / det;
    let tau_z = (sw * swcy - swc * swy) / det;
    let chi2 = (0..n)
        .map(|i| ((means[i] - tau0 - tau_z * c[i]) / errors[i]).powi(2))
        .sum();
    Ok(SinusoidFit { tau0, tau_z, chi2, dof: n - 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_outcome() -> TimeBinning {
        TimeBinning::new(1.0, 1).unwrap()
    }

    fn sigma_z() -> SpinPovm {
        SpinPovm::new(two_outcome(), vec![0.5, 0.5], vec![[0.0, 0.0, 0.5], [0.0, 0.0, -0.5]]).unwrap()
    }

    #[test]
    fn sigma_z_measurement_predictions() {
        let p = sigma_z();
        assert_eq!(p.predict_masses(&SpinDirection::plus_z()), vec![1.0, 0.0]);
        assert_eq!(p.predict_masses(&SpinDirection::minus_z()), vec![0.0, 1.0]);
        let px = p.predict_masses(&SpinDirection::plus_x());
        assert!((px[0] - 0.5).abs() < 1e-15 && (px[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_povms_are_rejected() {
        let b = two_outcome();
        assert!(SpinPovm::new(b, vec![0.5, 0.5], vec![[0.0, 0.0, 0.6], [0.0, 0.0, -0.6]]).is_err());
        assert!(SpinPovm::new(b, vec![0.5, 0.6], vec![[0.0; 3], [0.0; 3]]).is_err());
        assert!(SpinPovm::new(b, vec![0.5, 0.5], vec![[0.1, 0.0, 0.0], [0.0; 3]]).is_err());
    }

    fn dist(b: TimeBinning, m: &[f64]) -> ArrivalDistribution {
        ArrivalDistribution::from_masses(b, m.to_vec()).unwrap()
    }

    #[test]
    fn trace_pair_maximal_violation() {
        let b = two_outcome();
        let a = dist(b, &[1.0, 0.0]);
        let c = dist(b, &[0.0, 1.0]);
        let r = trace_pair_residual(&a, &a, &c, &c).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.ratio(), f64::INFINITY);
    }

    #[test]
    fn axial_examples() {
        let b = TimeBinning::new(1.0, 2).unwrap();
        let same = dist(b, &[0.2, 0.5, 0.3]);
        let r = fit_axial(&same, &same).unwrap();
        assert!(r.povm.e_vec().iter().all(|v| *v == [0.0; 3]));
        assert!(r.violating_bins(5.0).is_empty());

        let pz = dist(b, &[1.0, 0.0, 0.0]);
        let px = dist(b, &[0.0, 1.0, 0.0]);
        let r = fit_axial(&px, &pz).unwrap();
        assert_eq!(r.per_bin_min_eigenvalue[0], -1.0);
        assert_eq!(r.violating_bins(5.0), vec![0]);
        assert!(r.residual_projected > r.residual_unconstrained);
        assert!(r.residual_unconstrained < 1e-15);
    }

    #[test]
    fn deviation_bound_examples() {
        let b = two_outcome();
        let pz = dist(b, &[1.0, 0.0]);
        let px = dist(b, &[0.0, 1.0]);
        let data = vec![
            (SpinDirection::plus_z(), pz.clone()),
            (SpinDirection::minus_z(), pz),
            (SpinDirection::plus_x(), px.clone()),
            (SpinDirection::minus_x(), px),
        ];
        for povm in [sigma_z(), SpinPovm::trivial(b, vec![0.3, 0.7]).unwrap()] {
            let r = deviation_lower_bound(&data, &povm).unwrap();
            assert_eq!(r.bound.value, 0.5);
            assert!(r.max_dev.value >= 0.5 && r.holds());
        }
        assert!(matches!(deviation_lower_bound(&data[..3], &sigma_z()), Err(Error::MissingDirection(_))));
    }

    #[test]
    fn sinusoid_examples() {
        let alphas: Vec<f64> = (0..9).map(|i| i as f64 * std::f64::consts::PI / 8.0).collect();
        let means: Vec<f64> = alphas.iter().map(|a| 2.0 + 0.5 * a.cos()).collect();
        let err = vec![0.1; 9];
        let f = fit_sinusoidal_mean(&alphas, &means, &err).unwrap();
        assert!((f.tau0 - 2.0).abs() < 1e-12 && (f.tau_z - 0.5).abs() < 1e-12);
        assert!(f.chi2 < 1e-20);
        assert_eq!(f.dof, 7);
        let f = fit_sinusoidal_mean(&alphas, &[3.0; 9], &err).unwrap();
        assert!(f.tau_z.abs() < 1e-12);
        assert!(matches!(
            fit_sinusoidal_mean(&[0.5, 0.5, 0.5], &[1.0, 2.0, 3.0], &[1.0; 3]),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn rank_deficient_design() {
        let b = two_outcome();
        let dirs = [SpinDirection::plus_z(), SpinDirection::minus_z()];
        let d = [dist(b, &[0.7, 0.3]), dist(b, &[0.3, 0.7])];
        let r = fit_spin_povm(&dirs, &d).unwrap();
        assert_eq!(r.design_rank, 2);
        assert!(r.residual_unconstrained < 1e-12);
        assert!((r.povm.e_vec()[0][2] - 0.2).abs() < 1e-12);
        assert!(matches!(fit_spin_povm_with(&dirs, &d, true), Err(Error::DegenerateDesign(_))));
        assert!(fit_spin_povm(&dirs[..1], &d[..1]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = sigma_z();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(SpinPovm::read_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn moments_match_prediction_mean() {
        let b = TimeBinning::new(4.0, 4).unwrap();
        let povm = SpinPovm::new(
            b,
            vec![0.2, 0.3, 0.25, 0.15, 0.1],
            vec![[0.0, 0.0, 0.1], [0.0, 0.0, -0.05], [0.0, 0.0, 0.0], [0.0, 0.0, -0.05], [0.0; 3]],
        )
        .unwrap();
        let (t0, t) = povm.time_moments();
        for alpha in [0.0, 0.7, 2.0] {
            let n = SpinDirection::from_angles(alpha, 1.1);
            let p = povm.predict_masses(&n);
            let direct: f64 = (0..4).map(|k| b.midpoint(k) * p[k]).sum();
            assert!((direct - (t0 + t[2] * alpha.cos())).abs() < 1e-12);
        }
    }
}
