use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use arrival_core::povm::{self, Comparison};
use arrival_core::signaling::{self, Axis};
use arrival_core::svg::{self, Series};
use arrival_core::toymeasure::{self, CVector, ExperimentFile};
use arrival_core::{arrival_distribution, ensemble, ArrivalDistribution, DistributionFamily, Simulation, SpinDirection};
use serde::Serialize;

use crate::config::{sha256_hex, LoadedConfig, RunConfig};
use crate::output::{self, Manifest, OutDir, RunSummary};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: Option<u64>,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Common {
    fn out_dir(&self, config: Option<&RunConfig>, command: &str) -> Result<OutDir> {
        let root = self
            .out
            .clone()
            .or_else(|| config.and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out").join(command));
        OutDir::create(root)
    }

    fn seed(&self, config: &RunConfig) -> u64 {
        self.seed.unwrap_or(config.seed)
    }
}

fn simulation(c: &RunConfig) -> Result<Simulation> {
    if let Some(w) = c.packet.wall_truncation_warning() {
        eprintln!("warning: {w}");
    }
    Ok(Simulation::new(c.physical, c.packet, c.grid(), c.binning.t_max)?)
}

/// Runs one ensemble per direction and bins it.
fn run_directions(
    sim: &Simulation,
    c: &RunConfig,
    seed: u64,
    dirs: &[SpinDirection],
    out: Option<&mut OutDir>,
    manifest: &mut Manifest,
) -> Result<Vec<(SpinDirection, ArrivalDistribution)>> {
    let cfg = c.ensemble(seed);
    let mut dists = Vec::with_capacity(dirs.len());
    let mut out = out;
    for n in dirs {
        let run = sim.run(n, &cfg)?;
        eprintln!(
            "{}: censored {:.4}, aborted {:.4}",
            n.label(),
            run.censored_fraction(),
            run.aborted_fraction()
        );
        if let Some(o) = out.as_deref_mut() {
            run.write_records_csv(o.create_file(&format!("records_{}.csv", output::slug(n)))?)?;
        }
        manifest.runs.push(RunSummary::of(&run));
        dists.push((*n, arrival_distribution(&run, c.binning)?));
    }
    Ok(dists)
}

fn overlay(title: &str, dists: &[(SpinDirection, ArrivalDistribution)]) -> String {
    let series: Vec<Series> = dists.iter().map(|(n, d)| Series::histogram(n.label(), d)).collect();
    svg::chart(title, "arrival time", "probability density", &series)
}

pub fn arrival_dist(common: &Common, loaded: &LoadedConfig) -> Result<()> {
    let c = &loaded.config;
    let dirs = c.directions()?;
    ensure!(!dirs.is_empty(), "config lists no directions");
    let seed = common.seed(c);
    let mut out = common.out_dir(Some(c), "arrival-dist")?;
    let mut manifest = Manifest::new("arrival-dist", common.workers).with_config(loaded, seed);
    let sim = simulation(c)?;
    let dists = run_directions(&sim, c, seed, &dirs, Some(&mut out), &mut manifest)?;
    output::write_distributions(&mut out, &dists)?;
    out.write("arrival.svg", &overlay("First-arrival time distributions", &dists))?;

    let mut summary = String::from("a,b,tv,noise,ratio\n");
    for i in 0..dists.len() {
        for j in 0..i {
            let cmp = povm::compare(&dists[j].1, &dists[i].1)?;
            let _ = writeln!(
                summary,
                "{},{},{:.6e},{:.6e},{:.3}",
                dists[j].0.label(),
                dists[i].0.label(),
                cmp.value,
                cmp.noise,
                cmp.ratio()
            );
        }
    }
    out.write("pairwise_tv.csv", &summary)?;
    print!("{summary}");
    manifest.finish(&mut out)
}

pub fn mean_vs_alpha(common: &Common, loaded: &LoadedConfig) -> Result<()> {
    let c = &loaded.config;
    let seed = common.seed(c);
    let mut out = common.out_dir(Some(c), "mean-vs-alpha")?;
    let mut manifest = Manifest::new("mean-vs-alpha", common.workers).with_config(loaded, seed);
    let sim = simulation(c)?;
    let alphas = c.sweep.angles();
    let points = ensemble::mean_vs_alpha(&sim, &alphas, &c.ensemble(seed))?;

    let mut csv = String::from("alpha,mean,stderr,n_arrived,censored_fraction,aborted_fraction\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{:.9},{:.9},{:.9},{},{:.6},{:.6}",
            p.alpha, p.mean, p.stderr, p.n_arrived, p.censored_fraction, p.aborted_fraction
        );
        manifest.runs.push(RunSummary {
            direction: SpinDirection::from_angles(p.alpha, 0.0).label(),
            lambda: c.dynamics().lambda,
            diffusion_nu: c.dynamics().diffusion_nu,
            n_trajectories: c.n_trajectories,
            censored_fraction: p.censored_fraction,
            aborted_fraction: p.aborted_fraction,
        });
    }
    out.write("mean_vs_alpha.csv", &csv)?;

    let a: Vec<f64> = points.iter().map(|p| p.alpha).collect();
    let m: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let e: Vec<f64> = points.iter().map(|p| p.stderr).collect();
    let mut series = vec![Series::line("mean", a.iter().copied().zip(m.iter().copied()).collect())
        .with_errors(e.clone())
        .points_only()];
    let mut report = String::new();
    match povm::fit_sinusoidal_mean(&a, &m, &e) {
        Ok(fit) => {
            let _ = writeln!(report, "model = \"tau0 + tau_z cos(alpha)\"");
            let _ = writeln!(report, "tau0 = {:.9}", fit.tau0);
            let _ = writeln!(report, "tau_z = {:.9}", fit.tau_z);
            let _ = writeln!(report, "chi2 = {:.6}", fit.chi2);
            let _ = writeln!(report, "dof = {}", fit.dof);
            let _ = writeln!(report, "reduced_chi2 = {:.6}", fit.reduced_chi2());
            let _ = writeln!(report, "sinusoid_rejected = {}", fit.reduced_chi2() > 10.0);
            let curve = (0..=100)
                .map(|i| {
                    let x = i as f64 * std::f64::consts::PI / 100.0;
                    (x, fit.tau0 + fit.tau_z * x.cos())
                })
                .collect();
            series.push(Series::line("cosine fit", curve));
        }
        Err(err) => {
            let _ = writeln!(report, "fit_error = {:?}", err.to_string());
        }
    }
    out.write("sinusoid_fit.toml", &report)?;
    out.write(
        "mean_vs_alpha.svg",
        &svg::chart("Mean arrival time against polar angle", "alpha", "mean arrival time", &series),
    )?;
    print!("{report}");
    manifest.finish(&mut out)
}

#[derive(Debug, Serialize)]
struct TestVerdict {
    value: f64,
    noise: f64,
    ratio: f64,
    violation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

impl TestVerdict {
    fn of(c: Comparison, detail: Option<String>) -> Self {
        Self { value: c.value, noise: c.noise, ratio: c.ratio(), violation: c.ratio() > VIOLATION_MULTIPLIER, detail }
    }
}

#[derive(Debug, Serialize)]
struct Verdict {
    noise_multiplier: f64,
    directions: Vec<String>,
    any_violation: bool,
    trace_pair: TestVerdict,
    axial: TestVerdict,
    spin_povm_fit: TestVerdict,
    deviation_bound: DeviationVerdict,
}

#[derive(Debug, Serialize)]
struct DeviationVerdict {
    max_dev: f64,
    max_dev_noise: f64,
    worst_direction: String,
    bound: f64,
    bound_noise: f64,
    inequality_holds: bool,
    violation: bool,
}

const VIOLATION_MULTIPLIER: f64 = 5.0;

fn find<'a>(data: &'a [(SpinDirection, ArrivalDistribution)], n: &SpinDirection) -> Result<&'a ArrivalDistribution> {
    Ok(data
        .iter()
        .find(|(d, _)| d.approx_eq(n))
        .map(|(_, p)| p)
        .ok_or_else(|| arrival_core::Error::MissingDirection(n.label()))?)
}

fn audit(out: &mut OutDir, data: &[(SpinDirection, ArrivalDistribution)]) -> Result<Verdict> {
    let (pz, mz) = (find(data, &SpinDirection::plus_z())?, find(data, &SpinDirection::minus_z())?);
    let (px, mx) = (find(data, &SpinDirection::plus_x())?, find(data, &SpinDirection::minus_x())?);
    for (_, d) in data {
        pz.check_same_binning(d)?;
    }

    let trace = povm::trace_pair_residual(pz, mz, px, mx)?;

    let axial = povm::fit_axial(px, pz)?;
    let worst = axial
        .per_bin_violation()
        .iter()
        .zip(&axial.per_bin_noise)
        .map(|(&v, &s)| Comparison { value: v, noise: s })
        .max_by(|a, b| a.ratio().total_cmp(&b.ratio()))
        .unwrap_or(Comparison { value: 0.0, noise: 0.0 });
    let bins = axial.violating_bins(VIOLATION_MULTIPLIER);
    let axial_detail = format!("bins with P_z > 2 P_x beyond {VIOLATION_MULTIPLIER}x noise: {bins:?}");

    let (dirs, dists): (Vec<SpinDirection>, Vec<ArrivalDistribution>) = data.iter().cloned().unzip();
    let fit = povm::fit_spin_povm(&dirs, &dists)?;
    out.write("fit_report.txt", &fit.to_text())?;
    fit.povm.write_csv(out.create_file("fitted_povm.csv")?)?;
    let fit_cmp = Comparison { value: fit.residual_projected, noise: fit.noise_floor };

    let dev = povm::deviation_lower_bound(data, &fit.povm)?;
    let deviation_bound = DeviationVerdict {
        max_dev: dev.max_dev.value,
        max_dev_noise: dev.max_dev.noise,
        worst_direction: dev.worst_direction.label(),
        bound: dev.bound.value,
        bound_noise: dev.bound.noise,
        inequality_holds: dev.holds(),
        violation: dev.max_dev.ratio() > VIOLATION_MULTIPLIER && dev.bound.ratio() > VIOLATION_MULTIPLIER,
    };

    let trace_pair = TestVerdict::of(trace, None);
    let axial = TestVerdict { violation: !bins.is_empty(), ..TestVerdict::of(worst, Some(axial_detail)) };
    let spin_povm_fit = TestVerdict::of(fit_cmp, Some(format!("design rank {}", fit.design_rank)));
    Ok(Verdict {
        noise_multiplier: VIOLATION_MULTIPLIER,
        directions: dirs.iter().map(|d| d.label()).collect(),
        any_violation: trace_pair.violation || axial.violation || spin_povm_fit.violation || deviation_bound.violation,
        trace_pair,
        axial,
        spin_povm_fit,
        deviation_bound,
    })
}

pub fn povm_audit(common: &Common, loaded: Option<&LoadedConfig>, input: Option<&Path>) -> Result<()> {
    let (mut out, manifest, data) = match (loaded, input) {
        (Some(_), Some(_)) => bail!("give either --config or --input, not both"),
        (None, None) => bail!("povm-audit needs --config or --input"),
        (None, Some(dir)) => {
            let data = output::read_distributions(dir)?;
            let index = std::fs::read(dir.join(output::INDEX_FILE))?;
            let mut m = Manifest::new("povm-audit", common.workers);
            m.input_path = dir.join(output::INDEX_FILE).display().to_string();
            m.input_sha256 = sha256_hex(&index);
            (common.out_dir(None, "povm-audit")?, m, data)
        }
        (Some(l), None) => {
            let c = &l.config;
            let seed = common.seed(c);
            let mut dirs = c.directions()?;
            if dirs.is_empty() {
                dirs = SpinDirection::axes().to_vec();
            }
            let mut out = common.out_dir(Some(c), "povm-audit")?;
            let mut m = Manifest::new("povm-audit", common.workers).with_config(l, seed);
            let sim = simulation(c)?;
            let data = run_directions(&sim, c, seed, &dirs, None, &mut m)?;
            output::write_distributions(&mut out, &data)?;
            (out, m, data)
        }
    };
    let verdict = audit(&mut out, &data)?;
    let text = toml::to_string(&verdict).context("serializing verdict")?;
    out.write("verdict.toml", &text)?;
    print!("{text}");
    manifest.finish(&mut out)
}

pub fn signaling_cmd(common: &Common, loaded: Option<&LoadedConfig>, input: Option<&Path>) -> Result<()> {
    let (c, seed, mut out, mut manifest, data) = match (loaded, input) {
        (Some(l), Some(dir)) => {
            let c = l.config.clone();
            let seed = common.seed(&c);
            let m = Manifest::new("signaling", common.workers).with_config(l, seed);
            (c, seed, common.out_dir(Some(&l.config), "signaling")?, m, output::read_distributions(dir)?)
        }
        (Some(l), None) => {
            let c = l.config.clone();
            let seed = common.seed(&c);
            let mut out = common.out_dir(Some(&c), "signaling")?;
            let mut m = Manifest::new("signaling", common.workers).with_config(l, seed);
            let dirs = [
                SpinDirection::plus_z(),
                SpinDirection::minus_z(),
                SpinDirection::plus_x(),
                SpinDirection::minus_x(),
            ];
            let sim = simulation(&c)?;
            let data = run_directions(&sim, &c, seed, &dirs, None, &mut m)?;
            output::write_distributions(&mut out, &data)?;
            (c, seed, out, m, data)
        }
        (None, _) => bail!("signaling needs --config (trial settings), optionally with --input"),
    };
    let family = DistributionFamily::new(data)?;
    let mz = signaling::bob_mixture(&family, Axis::Z)?;
    let mx = signaling::bob_mixture(&family, Axis::X)?;
    let gap = povm::compare(&mz, &mx)?;

    let fit_dirs: Vec<SpinDirection> = family.entries().iter().map(|(n, _)| *n).collect();
    let fit_dists: Vec<ArrivalDistribution> = family.entries().iter().map(|(_, d)| d.clone()).collect();
    let control_povm = povm::fit_spin_povm(&fit_dirs, &fit_dists)?.povm;
    let control = DistributionFamily::from_povm(&control_povm, &fit_dirs)?;

    let trials = c.signaling.trials;
    let mut reports = Vec::new();
    let mut controls = Vec::new();
    for &r in &c.signaling.n_rounds {
        reports.push(signaling::decode_accuracy(&family, r, trials, seed)?);
        controls.push(signaling::decode_accuracy(&control, r, trials, seed)?);
    }
    signaling::write_accuracy_csv(&reports, out.create_file("accuracy.csv")?)?;
    signaling::write_accuracy_csv(&controls, out.create_file("accuracy_povm_control.csv")?)?;

    let mut text = String::new();
    let _ = writeln!(text, "mixture_tv = {:.6e}", gap.value);
    let _ = writeln!(text, "mixture_noise = {:.6e}", gap.noise);
    let _ = writeln!(text, "mixture_ratio = {:.3}", gap.ratio());
    for (r, k) in reports.iter().zip(&controls) {
        let _ = writeln!(
            text,
            "# n_rounds = {}: accuracy {:.4} +- {:.4}, povm control {:.4} +- {:.4}",
            r.n_rounds, r.accuracy, r.binomial_error, k.accuracy, k.binomial_error
        );
    }
    out.write("signaling_report.toml", &text)?;
    print!("{text}");
    manifest.seed = Some(seed);
    manifest.finish(&mut out)
}

pub fn toy_povm(common: &Common, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = ExperimentFile::parse(&text)?;
    let exp = file.experiment()?;
    let extracted = toymeasure::extract_povm(&exp);
    let mut out = common.out_dir(None, "toy-povm")?;
    let mut manifest = Manifest::new("toy-povm", common.workers);
    manifest.input_path = path.display().to_string();
    manifest.input_sha256 = sha256_hex(text.as_bytes());

    let mut r = String::new();
    let _ = writeln!(r, "d_sys = {}", exp.d_sys());
    let _ = writeln!(r, "d_app = {}", exp.d_app());
    let _ = writeln!(r, "completeness_error = {:.3e}", extracted.completeness_error());
    let _ = writeln!(r, "min_eigenvalue = {:.6e}", extracted.min_eigenvalue());
    let _ = writeln!(r, "hermiticity_error = {:.3e}", extracted.hermiticity_error());
    for (label, m) in extracted.labels.iter().zip(&extracted.elements) {
        let _ = writeln!(r, "\n[element.{label:?}]");
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols())
                .map(|j| {
                    let z = m[(i, j)];
                    format!("\"{:+.6e}{:+.6e}i\"", z.re, z.im)
                })
                .collect();
            let _ = writeln!(r, "row{i} = [{}]", row.join(", "));
        }
    }

    let mut states: Vec<CVector> = file.system_states();
    if states.is_empty() {
        states = (0..exp.d_sys()).map(|i| CVector::from_fn(exp.d_sys(), |j, _| if i == j { 1.0.into() } else { 0.0.into() })).collect();
    }
    let mut worst: f64 = 0.0;
    for (s, psi) in states.iter().enumerate() {
        let norm = psi.norm();
        ensure!((norm - 1.0).abs() < 1e-9, "state {s} has norm {norm}");
        let born = toymeasure::born_outcome_dist(&exp, psi)?;
        let povm = extracted.expectation(psi);
        let _ = writeln!(r, "\n[state.{s}]");
        for (label, p) in &born {
            let q = povm.get(label).copied().unwrap_or(0.0);
            worst = worst.max((p - q).abs());
            let _ = writeln!(r, "{label:?} = {{ born = {p:.12}, povm = {q:.12} }}");
        }
    }
    let _ = writeln!(r, "\n[summary]\nmax_born_povm_difference = {worst:.3e}");

    if exp.d_sys() % 2 == 0 {
        let rest = exp.d_sys() / 2;
        let phi = CVector::from_fn(rest, |i, _| if i == 0 { 1.0.into() } else { 0.0.into() });
        let dirs = [
            SpinDirection::plus_z(),
            SpinDirection::plus_x(),
            SpinDirection::plus_y(),
            SpinDirection::minus_z(),
        ];
        let _ = writeln!(r, "spin_commutator_norm = {:.3e}", toymeasure::spin_commutator_norm(&exp)?);
        match toymeasure::decoupling_check(&exp, &phi, &dirs) {
            Ok(tv) => {
                let _ = writeln!(r, "decoupled = true\ndecoupling_max_tv = {tv:.3e}");
            }
            Err(e) => {
                let _ = writeln!(r, "decoupled = false\ndecoupling_reason = {:?}", e.to_string());
            }
        }
    }
    out.write("toy_report.toml", &r)?;
    print!("{r}");
    manifest.finish(&mut out)
}
