//! Browser demo: arrival-time curves, the mean against polar angle, and the
//! signaling protocol on a small waveguide.

use std::fmt::Write as _;

use arrival_core::ensemble::{self, EnsembleConfig};
use arrival_core::povm;
use arrival_core::signaling::{self, Axis};
use arrival_core::svg::{self, Series};
use arrival_core::{
    arrival_distribution, ArrivalDistribution, DistributionFamily, DynamicsSpec, LongitudinalGrid, PacketConfig,
    PhysicalParams, Result, Simulation, SpinDirection, TimeBinning,
};
use wasm_bindgen::prelude::*;

const PLANE_L: f64 = 8.0;
const T_MAX: f64 = 8.0;
const N_BINS: usize = 12;
const MAX_TRAJECTORIES: usize = 20_000;

#[wasm_bindgen]
pub struct Figure {
    svg: String,
    text: String,
}

#[wasm_bindgen]
impl Figure {
    #[wasm_bindgen(getter)]
    pub fn svg(&self) -> String {
        self.svg.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn text(&self) -> String {
        self.text.clone()
    }
}

/// A tabulated packet shared by every operation.
#[wasm_bindgen]
pub struct Demo {
    sim: Simulation,
    binning: TimeBinning,
}

fn js(e: arrival_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(omega: f64, p0: f64) -> std::result::Result<Demo, JsError> {
        Demo::build(omega, p0).map_err(js)
    }

    /// Overlaid distributions for spin `+z` and the direction at polar angle
    /// `alpha_deg`.
    pub fn arrival_curves(
        &self,
        lambda: f64,
        alpha_deg: f64,
        n: usize,
        seed: u64,
    ) -> std::result::Result<Figure, JsError> {
        self.curves(lambda, alpha_deg, n, seed).map_err(js)
    }

    pub fn mean_vs_alpha(&self, lambda: f64, n_alpha: usize, n: usize, seed: u64) -> std::result::Result<Figure, JsError> {
        self.sweep(lambda, n_alpha, n, seed).map_err(js)
    }

    pub fn signaling(&self, n_rounds: usize, trials: usize, n: usize, seed: u64) -> std::result::Result<Figure, JsError> {
        self.protocol(n_rounds, trials, n, seed).map_err(js)
    }
}

impl Demo {
    pub fn build(omega: f64, p0: f64) -> Result<Self> {
        let params = PhysicalParams { omega, detector_plane_l: PLANE_L, ..Default::default() };
        let packet = PacketConfig { p0, ..Default::default() };
        let grid = LongitudinalGrid::new(5.0 * PLANE_L, 2048)?;
        Ok(Self {
            sim: Simulation::new(params, packet, grid, T_MAX)?,
            binning: TimeBinning::new(T_MAX, N_BINS)?,
        })
    }

    fn config(&self, lambda: f64, n: usize, seed: u64) -> EnsembleConfig {
        EnsembleConfig::new(n.clamp(1, MAX_TRAJECTORIES), seed, DynamicsSpec::deterministic(lambda), T_MAX)
    }

    fn distributions(&self, dirs: &[SpinDirection], cfg: &EnsembleConfig) -> Result<Vec<(SpinDirection, ArrivalDistribution)>> {
        dirs.iter()
            .map(|n| Ok((*n, arrival_distribution(&self.sim.run(n, cfg)?, self.binning)?)))
            .collect()
    }

    pub fn curves(&self, lambda: f64, alpha_deg: f64, n: usize, seed: u64) -> Result<Figure> {
        let other = SpinDirection::from_angles(alpha_deg.to_radians(), 0.0);
        let dists = self.distributions(&[SpinDirection::plus_z(), other], &self.config(lambda, n, seed))?;
        let cmp = povm::compare(&dists[0].1, &dists[1].1)?;
        let series: Vec<Series> = dists.iter().map(|(d, p)| Series::histogram(d.label(), p)).collect();
        let mut text = String::new();
        let _ = writeln!(text, "TV(+z, {}) = {:.4}", other.label(), cmp.value);
        let _ = writeln!(text, "Monte Carlo noise = {:.4}", cmp.noise);
        let _ = write!(text, "ratio = {:.2}", cmp.ratio());
        Ok(Figure {
            svg: svg::chart("First-arrival time", "arrival time", "probability density", &series),
            text,
        })
    }

    pub fn sweep(&self, lambda: f64, n_alpha: usize, n: usize, seed: u64) -> Result<Figure> {
        let k = n_alpha.clamp(3, 25);
        let alphas: Vec<f64> = (0..k).map(|i| i as f64 * std::f64::consts::PI / (k - 1) as f64).collect();
        let points = ensemble::mean_vs_alpha(&self.sim, &alphas, &self.config(lambda, n, seed))?;
        let a: Vec<f64> = points.iter().map(|p| p.alpha).collect();
        let m: Vec<f64> = points.iter().map(|p| p.mean).collect();
        let e: Vec<f64> = points.iter().map(|p| p.stderr).collect();
        let mut series = vec![Series::line("mean", a.iter().copied().zip(m.iter().copied()).collect())
            .with_errors(e.clone())
            .points_only()];
        let mut text = String::new();
        if let Ok(fit) = povm::fit_sinusoidal_mean(&a, &m, &e) {
            let curve = (0..=60)
                .map(|i| {
                    let x = i as f64 * std::f64::consts::PI / 60.0;
                    (x, fit.tau0 + fit.tau_z * x.cos())
                })
                .collect();
            series.push(Series::line("cosine fit", curve));
            let _ = write!(
                text,
                "tau0 = {:.4}, tau_z = {:.4}, chi2/dof = {:.2}",
                fit.tau0,
                fit.tau_z,
                fit.reduced_chi2()
            );
        }
        Ok(Figure {
            svg: svg::chart("Mean arrival time", "alpha", "mean arrival time", &series),
            text,
        })
    }

    pub fn protocol(&self, n_rounds: usize, trials: usize, n: usize, seed: u64) -> Result<Figure> {
        let dirs = [
            SpinDirection::plus_z(),
            SpinDirection::minus_z(),
            SpinDirection::plus_x(),
            SpinDirection::minus_x(),
        ];
        let family = DistributionFamily::new(self.distributions(&dirs, &self.config(1.0, n, seed))?)?;
        let mz = signaling::bob_mixture(&family, Axis::Z)?;
        let mx = signaling::bob_mixture(&family, Axis::X)?;
        let trials = trials.clamp(1, 5000);
        let rounds: Vec<usize> = [1, 3, 10, 30, 100, 300].into_iter().filter(|&r| r <= n_rounds.max(1)).collect();
        let mut acc = Vec::new();
        let mut text = String::new();
        for &r in &rounds {
            let rep = signaling::decode_accuracy(&family, r, trials, seed)?;
            let _ = writeln!(text, "{r} rounds: accuracy {:.3} +- {:.3}", rep.accuracy, rep.binomial_error);
            acc.push((r as f64, rep.accuracy));
        }
        let mixtures = svg::chart(
            "Bob's arrival statistics",
            "arrival time",
            "probability density",
            &[Series::histogram("Alice measured z", &mz), Series::histogram("Alice measured x", &mx)],
        );
        let _ = write!(
            text,
            "TV between mixtures = {:.4} (noise {:.4})",
            povm::tv_distance(&mz, &mx)?,
            povm::difference_noise(&mz, &mx)?
        );
        let accuracy = svg::chart(
            "Decode accuracy",
            "rounds per trial",
            "accuracy",
            &[Series::line("accuracy", acc.clone()), Series::line("chance", vec![(acc[0].0, 0.5), (acc[acc.len() - 1].0, 0.5)])],
        );
        Ok(Figure { svg: format!("{mixtures}{accuracy}"), text })
    }
}
