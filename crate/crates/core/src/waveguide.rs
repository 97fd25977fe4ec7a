//! Longitudinal wave function on the half-line `z >= 0` with a hard wall at
//! `z = 0`, times the transverse harmonic ground mode.
//!
//! The longitudinal factor `f_t(z)` lives on the nodes `z_j = j dz`,
//! `j = 1..=N`, with Dirichlet walls at `0` and `Z = z_max + dz`. Free
//! evolution is diagonal in the sine basis `sin(kappa_k z)`,
//! `kappa_k = k pi / Z`, so every [`WaveState`] is exact in time. Off-node
//! values use quintic Hermite interpolation of `f` (and, separately, of
//! `f'`) from spectrally exact derivatives.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sine::SineBasis;
use crate::spin::{PhysicalParams, SpinDirection};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Antisymmetrized Gaussian packet moving toward `+z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketConfig {
    pub z0: f64,
    pub width_d: f64,
    pub p0: f64,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            z0: 5.0,
            width_d: 1.0,
            p0: 1.5,
        }
    }
}

impl PacketConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0.is_finite() && self.z0 > 0.0) {
            return Err(Error::invalid("packet z0 must be positive"));
        }
        if !(self.width_d.is_finite() && self.width_d > 0.0) {
            return Err(Error::invalid("packet width must be positive"));
        }
        if !(self.p0.is_finite() && self.p0 >= 0.0) {
            return Err(Error::invalid("packet momentum must be nonnegative"));
        }
        Ok(())
    }

    /// Set when the packet overlaps the wall enough that the odd extension
    /// visibly distorts the nominal Gaussian.
    pub fn wall_truncation_warning(&self) -> Option<String> {
        (self.z0 - 3.0 * self.width_d <= 0.0).then(|| {
            format!(
                "packet center z0 = {} is within 3 widths ({}) of the wall",
                self.z0, self.width_d
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongitudinalGrid {
    pub z_max: f64,
    pub n_points: usize,
}

impl LongitudinalGrid {
    pub fn new(z_max: f64, n_points: usize) -> Result<Self> {
        let g = Self { z_max, n_points };
        g.validate()?;
        Ok(g)
    }

    /// Desk-scale default: 4096 nodes up to `8 L`.
    pub fn default_for(params: &PhysicalParams) -> Self {
        Self {
            z_max: 8.0 * params.detector_plane_l,
            n_points: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(Error::invalid("z_max must be positive"));
        }
        if self.n_points < 8 {
            return Err(Error::invalid("grid needs at least 8 points"));
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        self.z_max / self.n_points as f64
    }

    /// Position of the far Dirichlet wall, `z_max + dz`.
    pub fn wall(&self) -> f64 {
        self.z_max + self.dz()
    }

    /// Node `j` for `j = 0..=N+1`, walls included.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dz()
    }

    pub fn kappa(&self, k: usize) -> f64 {
        k as f64 * PI / self.wall()
    }
}

/// Truncated sine series `f(z, t) = sum_k c_k e^{-i E_k t / hbar} sin(kappa_k z)`
/// evaluated directly at arbitrary `(z, t)`.
#[derive(Debug, Clone)]
pub(crate) struct ModalSeries {
    k_lo: usize,
    coeffs: Vec<Complex64>,
    kappa0: f64,
    /// `hbar / 2m`
    dispersion: f64,
    t_ref: f64,
}

impl ModalSeries {
    fn new(grid: &LongitudinalGrid, params: &PhysicalParams, coeffs: &[Complex64], t_ref: f64) -> Self {
        let total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let keep = |c: &Complex64| c.norm_sqr() > 1e-30 * total;
        let lo = coeffs.iter().position(keep).unwrap_or(0);
        let hi = coeffs.iter().rposition(keep).unwrap_or(0);
        Self {
            k_lo: lo + 1,
            coeffs: coeffs[lo..=hi].to_vec(),
            kappa0: PI / grid.wall(),
            dispersion: params.hbar / (2.0 * params.mass),
            t_ref,
        }
    }

    /// `(f, df/dz)` at `(z, t)`.
    fn eval(&self, z: f64, t: f64) -> (Complex64, Complex64) {
        let tau = t - self.t_ref;
        let a = self.dispersion * self.kappa0 * self.kappa0 * tau;
        let k0 = self.k_lo as f64;
        // e^{i kappa_k z} and e^{-i a k^2}, advanced by recurrence in k
        let mut spatial = Complex64::from_polar(1.0, self.kappa0 * k0 * z);
        let spatial_step = Complex64::from_polar(1.0, self.kappa0 * z);
        let mut temporal = Complex64::from_polar(1.0, -a * k0 * k0);
        let mut temporal_ratio = Complex64::from_polar(1.0, -a * (2.0 * k0 + 1.0));
        let temporal_ratio_step = Complex64::from_polar(1.0, -2.0 * a);
        let mut f = ZERO;
        let mut df = ZERO;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let kappa = self.kappa0 * (k0 + i as f64);
            let ct = c * temporal;
            f += ct * spatial.im;
            df += ct * (kappa * spatial.re);
            spatial *= spatial_step;
            temporal *= temporal_ratio;
            temporal_ratio *= temporal_ratio_step;
        }
        (f, df)
    }

    /// `d^m f / dz^m` at a wall position `z = j_wall * Z` (0 or 1), where only
    /// odd derivatives survive.
    fn wall_derivative(&self, far_wall: bool, order: u32, t: f64) -> Complex64 {
        if order % 2 == 0 {
            return ZERO;
        }
        let tau = t - self.t_ref;
        let sign_m = if (order / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let mut acc = ZERO;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = self.k_lo + i;
            let kappa = self.kappa0 * k as f64;
            let phase = Complex64::from_polar(1.0, -self.dispersion * kappa * kappa * tau);
            let sign_k = if far_wall && k % 2 == 1 { -1.0 } else { 1.0 };
            acc += c * phase * (sign_m * sign_k * kappa.powi(order as i32));
        }
        acc
    }

    /// Smallest `kappa` beyond which the spectral tail weight is below
    /// `1e-14` of the total.
    fn effective_kappa_max(&self) -> f64 {
        let total: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        let mut tail = 0.0;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            tail += c.norm_sqr();
            if tail > 1e-14 * total {
                return self.kappa0 * (self.k_lo + i) as f64;
            }
        }
        self.kappa0 * self.k_lo as f64
    }
}

/// Quintic Hermite interpolation on `[0, h]` from value, first and second
/// derivative at both ends; `s` is the fractional position.
#[inline]
fn quintic(s: f64, h: f64, a: [Complex64; 3], b: [Complex64; 3]) -> Complex64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    a[0] * h00 + a[1] * (h10 * h) + a[2] * (h20 * h * h) + b[0] * h01 + b[1] * (h11 * h) + b[2] * (h21 * h * h)
}

/// Cubic Hermite interpolation on `[0, h]` from values and first derivatives.
#[inline]
fn cubic(s: f64, h: f64, a: [Complex64; 2], b: [Complex64; 2]) -> Complex64 {
    let s2 = s * s;
    let s3 = s2 * s;
    a[0] * (2.0 * s3 - 3.0 * s2 + 1.0) + a[1] * ((s3 - 2.0 * s2 + s) * h) + b[0] * (3.0 * s2 - 2.0 * s3) + b[1] * ((s3 - s2) * h)
}

/// Any source of the longitudinal factor `f` and its derivative.
pub trait LongitudinalField: Sync {
    fn params(&self) -> &PhysicalParams;

    /// `(f, df/dz)` at height `z` and time `t`.
    fn longitudinal(&self, z: f64, t: f64) -> (Complex64, Complex64);

    /// `max_z |f(z, t)|^2`, the reference for the node-singularity floor.
    fn peak_density(&self, t: f64) -> f64;
}

/// `f_t` on the grid plus its first three spectral derivatives.
#[derive(Debug, Clone)]
pub struct WaveState {
    grid: LongitudinalGrid,
    params: PhysicalParams,
    time: f64,
    coeffs: Vec<Complex64>,
    /// `d^m f` for `m = 0..=3` at nodes `0..=N+1` (walls included).
    derivs: [Vec<Complex64>; 4],
    peak: f64,
}

impl WaveState {
    /// `f_0(z) ~ g(z) - g(-z)` with `g(z) = exp(-(z - z0)^2 / 4 d^2 + i p0 z / hbar)`,
    /// normalized on the grid.
    pub fn init_packet(cfg: &PacketConfig, grid: &LongitudinalGrid, params: &PhysicalParams) -> Result<Self> {
        cfg.validate()?;
        grid.validate()?;
        params.validate()?;
        let g = |z: f64| {
            let u = (z - cfg.z0) / (2.0 * cfg.width_d);
            Complex64::from_polar((-u * u).exp(), cfg.p0 * z / params.hbar)
        };
        let dz = grid.dz();
        let mut amps: Vec<Complex64> = (1..=grid.n_points)
            .map(|j| {
                let z = j as f64 * dz;
                g(z) - g(-z)
            })
            .collect();
        let norm = (amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dz).sqrt();
        let nominal = (2.0 * PI).sqrt() * cfg.width_d;
        if !(norm * norm / nominal > 1e-6) {
            return Err(Error::NonNormalizable { norm: norm * norm / nominal });
        }
        for a in amps.iter_mut() {
            *a /= norm;
        }
        let basis = SineBasis::new(grid.n_points);
        let coeffs = basis.analyze(&amps);
        Ok(Self::from_coeffs(&basis, *grid, *params, 0.0, coeffs))
    }

    /// A single sine mode `sqrt(2 / Z) sin(kappa_k z)` (normalized on the grid).
    pub fn sine_mode(k: usize, grid: &LongitudinalGrid, params: &PhysicalParams) -> Result<Self> {
        grid.validate()?;
        if k == 0 || k > grid.n_points {
            return Err(Error::invalid(format!("mode {k} outside 1..={}", grid.n_points)));
        }
        let mut coeffs = vec![ZERO; grid.n_points];
        coeffs[k - 1] = Complex64::new((2.0 / grid.wall()).sqrt(), 0.0);
        let basis = SineBasis::new(grid.n_points);
        Ok(Self::from_coeffs(&basis, *grid, *params, 0.0, coeffs))
    }

    /// Wave state from arbitrary node amplitudes (normalized here).
    pub fn from_amplitudes(amps: &[Complex64], grid: &LongitudinalGrid, params: &PhysicalParams) -> Result<Self> {
        grid.validate()?;
        if amps.len() != grid.n_points {
            return Err(Error::invalid("amplitude count does not match grid"));
        }
        let norm = (amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dz()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonNormalizable { norm });
        }
        let scaled: Vec<Complex64> = amps.iter().map(|a| a / norm).collect();
        let basis = SineBasis::new(grid.n_points);
        let coeffs = basis.analyze(&scaled);
        Ok(Self::from_coeffs(&basis, *grid, *params, 0.0, coeffs))
    }

    fn from_coeffs(basis: &SineBasis, grid: LongitudinalGrid, params: PhysicalParams, time: f64, coeffs: Vec<Complex64>) -> Self {
        let series = ModalSeries::new(&grid, &params, &coeffs, time);
        let dz = grid.dz();
        let derivs: [Vec<Complex64>; 4] = std::array::from_fn(|m| {
            let interior = basis.synthesize(&coeffs, m as u32, dz);
            let mut full = Vec::with_capacity(grid.n_points + 2);
            full.push(series.wall_derivative(false, m as u32, time));
            full.extend(interior);
            full.push(series.wall_derivative(true, m as u32, time));
            full
        });
        let peak = derivs[0].iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
        Self {
            grid,
            params,
            time,
            coeffs,
            derivs,
            peak,
        }
    }

    /// Exact free evolution to time `t`: mode `k` picks up
    /// `exp(-i hbar kappa_k^2 (t - t_now) / 2m)`.
    pub fn evolve_to(&self, t: f64) -> Result<Self> {
        let next = self.evolve_unchecked(t)?;
        next.check_far_wall()?;
        Ok(next)
    }

    /// As [`WaveState::evolve_to`] without the far-wall check, for states
    /// that fill the box on purpose (single modes).
    pub fn evolve_unchecked(&self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid(format!("evolution time {t} must be nonnegative")));
        }
        let tau = t - self.time;
        let disp = self.params.hbar / (2.0 * self.params.mass);
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let kappa = self.grid.kappa(i + 1);
                c * Complex64::from_polar(1.0, -disp * kappa * kappa * tau)
            })
            .collect();
        let basis = SineBasis::new(self.grid.n_points);
        Ok(Self::from_coeffs(&basis, self.grid, self.params, t, coeffs))
    }

    /// Probability within `10 dz` of `z_max`; a reflection off the far wall
    /// would be an artifact of the finite box.
    pub fn far_wall_mass(&self) -> f64 {
        let n = self.grid.n_points;
        self.derivs[0][n - 9..=n].iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dz()
    }

    fn check_far_wall(&self) -> Result<()> {
        let mass = self.far_wall_mass();
        if mass > 1e-6 {
            return Err(Error::DomainTooSmall { time: self.time, mass });
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn grid(&self) -> &LongitudinalGrid {
        &self.grid
    }

    /// Node amplitudes `f(z_j)`, `j = 1..=N`.
    pub fn amplitudes(&self) -> &[Complex64] {
        let n = self.grid.n_points;
        &self.derivs[0][1..=n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes().iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dz()
    }

    /// Mean momentum `<-i hbar d/dz>` from the spectral derivative.
    pub fn mean_momentum(&self) -> f64 {
        let n = self.grid.n_points;
        let num: Complex64 = (1..=n)
            .map(|j| self.derivs[0][j].conj() * self.derivs[1][j])
            .sum::<Complex64>()
            * self.grid.dz();
        (Complex64::new(0.0, -self.params.hbar) * num).re / self.norm_sqr()
    }

    /// Full scalar wave function `chi_0(x, y) e^{-i omega t} f_t(z)`.
    pub fn psi(&self, x: f64, y: f64, z: f64) -> Complex64 {
        let chi = self.params.transverse_density(x, y).sqrt();
        let phase = Complex64::from_polar(1.0, -self.params.omega * self.time);
        phase * chi * self.longitudinal(z, self.time).0
    }

    /// `|f(z)|^2` at the nodes `0..=N+1`, paired with node positions.
    pub fn longitudinal_density(&self) -> (Vec<f64>, Vec<f64>) {
        let z = (0..self.grid.n_points + 2).map(|j| self.grid.node(j)).collect();
        let rho = self.derivs[0].iter().map(|a| a.norm_sqr()).collect();
        (z, rho)
    }

    fn interpolate(&self, z: f64, order: usize) -> Complex64 {
        let dz = self.grid.dz();
        let last = self.grid.n_points + 1;
        if !(0.0..=self.grid.wall()).contains(&z) {
            return ZERO;
        }
        let pos = z / dz;
        let j = (pos.floor() as usize).min(last - 1);
        let s = pos - j as f64;
        let d = &self.derivs;
        if order == 0 {
            quintic(s, dz, [d[0][j], d[1][j], d[2][j]], [d[0][j + 1], d[1][j + 1], d[2][j + 1]])
        } else {
            quintic(s, dz, [d[1][j], d[2][j], d[3][j]], [d[1][j + 1], d[2][j + 1], d[3][j + 1]])
        }
    }

    /// Snapshot rows `(t, z, Re f, Im f)` for every interior node.
    pub fn write_snapshot_csv<W: Write>(states: &[WaveState], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "z", "re_f", "im_f"])?;
        for st in states {
            for (j, a) in st.amplitudes().iter().enumerate() {
                out.write_record([
                    st.time.to_string(),
                    st.grid.node(j + 1).to_string(),
                    format!("{:.17e}", a.re),
                    format!("{:.17e}", a.im),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

impl LongitudinalField for WaveState {
    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    /// Evaluated at the state's own time; `t` is ignored.
    fn longitudinal(&self, z: f64, _t: f64) -> (Complex64, Complex64) {
        (self.interpolate(z, 0), self.interpolate(z, 1))
    }

    fn peak_density(&self, _t: f64) -> f64 {
        self.peak
    }
}

/// Precomputed snapshots of `f` and its derivatives up to fifth order on the
/// nodes below `z_cover`, for fast evaluation at arbitrary `(z, t)`.
///
/// Space: quintic Hermite per snapshot. Time: cubic Hermite using
/// `df/dt = (i hbar / 2m) d^2f/dz^2`. When the a-priori interpolation error
/// estimate exceeds `1e-6`, or a query falls outside the table, the exact
/// modal sum is evaluated instead.
#[derive(Debug, Clone)]
pub struct StateTable {
    grid: LongitudinalGrid,
    params: PhysicalParams,
    series: ModalSeries,
    t0: f64,
    dt: f64,
    n_snapshots: usize,
    n_nodes: usize,
    /// `[snapshot][node][order]`, flattened.
    data: Vec<[Complex64; 6]>,
    peaks: Vec<f64>,
    error_estimate: f64,
    use_exact: bool,
}

/// Accuracy target of the interpolated table.
pub const TABLE_TOLERANCE: f64 = 1e-6;
const MAX_TABLE_BYTES: usize = 768 << 20;

impl StateTable {
    /// Tabulates `state0` forward over `[state0.time, t_end]` for heights up
    /// to `z_cover`. Fails with `DomainTooSmall` if the packet reaches the far
    /// wall of the box before `t_end`.
    pub fn build(state0: &WaveState, t_end: f64, z_cover: f64) -> Result<Self> {
        let t0 = state0.time;
        if !(t_end.is_finite() && t_end > t0) {
            return Err(Error::invalid("table end time must exceed the state time"));
        }
        let grid = state0.grid;
        let params = state0.params;
        let series = ModalSeries::new(&grid, &params, &state0.coeffs, t0);
        let kappa_max = series.effective_kappa_max();
        let omega_max = params.hbar * kappa_max * kappa_max / (2.0 * params.mass);
        let dz = grid.dz();
        let space_err = (kappa_max * dz).powi(6) / 46080.0;

        // cubic Hermite in time: |err| <= (omega h)^4 / 384
        let dt_target = (0.5 * TABLE_TOLERANCE * 384.0).powf(0.25) / omega_max.max(1e-12);
        let span = t_end - t0;
        let n_intervals = (span / dt_target).ceil().max(1.0) as usize;
        let n_nodes = ((z_cover.max(0.0) / dz).ceil() as usize + 3).min(grid.n_points + 2);
        let bytes = (n_intervals + 1) * n_nodes * std::mem::size_of::<[Complex64; 6]>();

        let mut table = Self {
            grid,
            params,
            series,
            t0,
            dt: span / n_intervals as f64,
            n_snapshots: n_intervals + 1,
            n_nodes,
            data: Vec::new(),
            peaks: Vec::new(),
            error_estimate: 0.0,
            use_exact: false,
        };
        let time_err = (omega_max * table.dt).powi(4) / 384.0;
        table.error_estimate = time_err + space_err;
        if bytes > MAX_TABLE_BYTES || table.error_estimate > TABLE_TOLERANCE {
            table.use_exact = true;
        }

        let basis = SineBasis::new(grid.n_points);
        let snapshot = |s: usize| -> Result<(Vec<[Complex64; 6]>, f64)> {
            let t = t0 + s as f64 * table.dt;
            let tau = t - t0;
            let disp = params.hbar / (2.0 * params.mass);
            let coeffs: Vec<Complex64> = state0
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let kappa = grid.kappa(i + 1);
                    c * Complex64::from_polar(1.0, -disp * kappa * kappa * tau)
                })
                .collect();
            let d0 = basis.synthesize(&coeffs, 0, dz);
            let n = grid.n_points;
            let far: f64 = d0[n - 10..].iter().map(|a| a.norm_sqr()).sum::<f64>() * dz;
            if far > 1e-6 {
                return Err(Error::DomainTooSmall { time: t, mass: far });
            }
            let peak = d0.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
            if table.use_exact {
                return Ok((Vec::new(), peak));
            }
            let mut orders: Vec<Vec<Complex64>> = vec![d0];
            for m in 1..6u32 {
                orders.push(basis.synthesize(&coeffs, m, dz));
            }
            let rows = (0..n_nodes)
                .map(|j| {
                    std::array::from_fn(|m| {
                        if j == 0 {
                            table.series.wall_derivative(false, m as u32, t)
                        } else if j == n + 1 {
                            table.series.wall_derivative(true, m as u32, t)
                        } else {
                            orders[m][j - 1]
                        }
                    })
                })
                .collect();
            Ok((rows, peak))
        };
        let snaps: Vec<Result<(Vec<[Complex64; 6]>, f64)>> =
            crate::par::map_indices(table.n_snapshots, snapshot);
        let mut data = Vec::with_capacity(if table.use_exact { 0 } else { table.n_snapshots * n_nodes });
        let mut peaks = Vec::with_capacity(table.n_snapshots);
        for s in snaps {
            let (rows, peak) = s?;
            data.extend(rows);
            peaks.push(peak);
        }
        table.data = data;
        table.peaks = peaks;
        Ok(table)
    }

    pub fn grid(&self) -> &LongitudinalGrid {
        &self.grid
    }
    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.n_snapshots - 1) as f64
    }
    pub fn snapshot_dt(&self) -> f64 {
        self.dt
    }
    /// A-priori bound on the relative interpolation error.
    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }
    /// True when every query goes through the exact modal sum.
    pub fn uses_exact_evaluation(&self) -> bool {
        self.use_exact
    }

    /// Exact `(f, df/dz)` by direct modal summation.
    pub fn exact(&self, z: f64, t: f64) -> (Complex64, Complex64) {
        if !(0.0..=self.grid.wall()).contains(&z) {
            return (ZERO, ZERO);
        }
        self.series.eval(z, t)
    }

    #[inline]
    fn row(&self, s: usize, j: usize) -> &[Complex64; 6] {
        &self.data[s * self.n_nodes + j]
    }

    fn interpolated(&self, z: f64, t: f64) -> Option<(Complex64, Complex64)> {
        if self.use_exact || z < 0.0 {
            return None;
        }
        let dz = self.grid.dz();
        let pos = z / dz;
        let j = pos.floor() as usize;
        if j + 1 >= self.n_nodes {
            return None;
        }
        let tp = (t - self.t0) / self.dt;
        if !(tp >= 0.0 && tp <= (self.n_snapshots - 1) as f64) {
            return None;
        }
        let s = (tp.floor() as usize).min(self.n_snapshots - 2);
        let tau = tp - s as f64;
        let sz = pos - j as f64;
        let q = |snap: usize, m: usize| {
            let a = self.row(snap, j);
            let b = self.row(snap, j + 1);
            quintic(sz, dz, [a[m], a[m + 1], a[m + 2]], [b[m], b[m + 1], b[m + 2]])
        };
        let c = Complex64::new(0.0, self.params.hbar / (2.0 * self.params.mass));
        let (q0a, q1a, q2a, q3a) = (q(s, 0), q(s, 1), q(s, 2), q(s, 3));
        let (q0b, q1b, q2b, q3b) = (q(s + 1, 0), q(s + 1, 1), q(s + 1, 2), q(s + 1, 3));
        let f = cubic(tau, self.dt, [q0a, c * q2a], [q0b, c * q2b]);
        let df = cubic(tau, self.dt, [q1a, c * q3a], [q1b, c * q3b]);
        Some((f, df))
    }
}

impl LongitudinalField for StateTable {
    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn longitudinal(&self, z: f64, t: f64) -> (Complex64, Complex64) {
        self.interpolated(z, t).unwrap_or_else(|| self.exact(z, t))
    }

    fn peak_density(&self, t: f64) -> f64 {
        let tp = ((t - self.t0) / self.dt).clamp(0.0, (self.n_snapshots - 1) as f64);
        let s = tp.floor() as usize;
        let next = (s + 1).min(self.n_snapshots - 1);
        self.peaks[s].max(self.peaks[next])
    }
}

/// Density, its gradient, and the convective `z`-velocity at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    pub rho: f64,
    pub grad_rho: [f64; 3],
    pub conv_velocity_z: f64,
}

/// Relative floor below which the guidance law is treated as singular.
pub const RHO_FLOOR_FRACTION: f64 = 1e-12;

/// Same as [`rho_and_grad`] without the node-singularity check.
pub fn density_sample<F: LongitudinalField + ?Sized>(field: &F, t: f64, pos: [f64; 3]) -> DensitySample {
    let p = field.params();
    let [x, y, z] = pos;
    let (f, df) = field.longitudinal(z, t);
    let chi2 = p.transverse_density(x, y);
    let f2 = f.norm_sqr();
    let rho = chi2 * f2;
    let cross = f.conj() * df;
    let a = p.transverse_stiffness();
    let conv_velocity_z = if f2 > 0.0 { p.hbar / p.mass * cross.im / f2 } else { 0.0 };
    DensitySample {
        rho,
        grad_rho: [-a * x * rho, -a * y * rho, chi2 * 2.0 * cross.re],
        conv_velocity_z,
    }
}

/// `rho = |chi_0|^2 |f|^2`, `grad rho`, and `(hbar / m) Im(f'/f)`.
/// Fails with `NodeSingularity` when `rho < 1e-12 max rho`.
pub fn rho_and_grad<F: LongitudinalField + ?Sized>(field: &F, t: f64, pos: [f64; 3]) -> Result<DensitySample> {
    let sample = density_sample(field, t, pos);
    let p = field.params();
    let floor = RHO_FLOOR_FRACTION * p.transverse_density(0.0, 0.0) * field.peak_density(t);
    if !(sample.rho >= floor) || sample.rho == 0.0 {
        return Err(Error::NodeSingularity { rho: sample.rho, floor });
    }
    Ok(sample)
}

/// Flux through the detector plane over a sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxReport {
    pub min_flux: f64,
    /// `(t, x, y)` of the minimum.
    pub argmin: (f64, f64, f64),
    pub negative_fraction: f64,
    pub n_samples: usize,
}

/// `z`-component of the current `rho v` on `z = L`, including the spin term
/// `(lambda hbar / 2m) (grad rho x n)_z`.
pub fn flux_density<F: LongitudinalField + ?Sized>(field: &F, n: &SpinDirection, lambda: f64, t: f64, x: f64, y: f64) -> f64 {
    let p = field.params();
    let s = density_sample(field, t, [x, y, p.detector_plane_l]);
    let nv = n.vector();
    let curl_z = s.grad_rho[0] * nv[1] - s.grad_rho[1] * nv[0];
    s.rho * s.conv_velocity_z + lambda * p.hbar / (2.0 * p.mass) * curl_z
}

/// Evaluates the flux on every `(t, x, y)` combination and reports its minimum
/// and the fraction of negative samples (current positivity diagnostics).
pub fn flux_on_plane<F: LongitudinalField + ?Sized>(
    field: &F,
    n: &SpinDirection,
    lambda: f64,
    t_samples: &[f64],
    xy_samples: &[(f64, f64)],
) -> FluxReport {
    let mut min_flux = f64::INFINITY;
    let mut argmin = (f64::NAN, f64::NAN, f64::NAN);
    let mut negative = 0usize;
    let mut count = 0usize;
    for &t in t_samples {
        for &(x, y) in xy_samples {
            let j = flux_density(field, n, lambda, t, x, y);
            if j < min_flux {
                min_flux = j;
                argmin = (t, x, y);
            }
            if j < 0.0 {
                negative += 1;
            }
            count += 1;
        }
    }
    FluxReport {
        min_flux,
        argmin,
        negative_fraction: if count > 0 { negative as f64 / count as f64 } else { 0.0 },
        n_samples: count,
    }
}
