use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arrival_core::{ArrivalDistribution, DistributionLabel, EnsembleRun, SpinDirection};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, RunConfig};

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root, written: Vec::new() })
    }

    pub fn create_file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.root.join(name);
        let f = File::create(&p).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.root.join(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// File-name-safe form of a direction label.
pub fn slug(n: &SpinDirection) -> String {
    n.label()
        .chars()
        .map(|c| match c {
            '+' => 'p',
            '-' => 'm',
            '.' => 'd',
            ',' => '_',
            c if c.is_ascii_alphanumeric() => c,
            _ => '_',
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub direction: String,
    pub lambda: f64,
    pub diffusion_nu: f64,
    pub n_trajectories: usize,
    pub censored_fraction: f64,
    pub aborted_fraction: f64,
}

impl RunSummary {
    pub fn of(run: &EnsembleRun) -> Self {
        Self {
            direction: run.n_dir.label(),
            lambda: run.spec.lambda,
            diffusion_nu: run.spec.diffusion_nu,
            n_trajectories: run.n_trajectories,
            censored_fraction: run.censored_fraction(),
            aborted_fraction: run.aborted_fraction(),
        }
    }
}

/// Everything needed to rerun a command byte-for-byte. No timestamps.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub input_path: String,
    pub input_sha256: String,
    pub outputs: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub config: Option<RunConfig>,
}

impl Manifest {
    pub fn new(command: &str, workers: usize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            workers,
            input_path: String::new(),
            input_sha256: String::new(),
            outputs: Vec::new(),
            runs: Vec::new(),
            config: None,
        }
    }

    pub fn with_config(mut self, loaded: &LoadedConfig, seed: u64) -> Self {
        self.seed = Some(seed);
        self.input_path = loaded.path.display().to_string();
        self.input_sha256 = loaded.sha256.clone();
        let mut c = loaded.config.clone();
        c.seed = seed;
        self.config = Some(c);
        self
    }

    pub fn finish(mut self, out: &mut OutDir) -> Result<()> {
        self.outputs = out.written().to_vec();
        self.outputs.push("manifest.toml".into());
        let text = toml::to_string(&self).context("serializing manifest")?;
        out.write("manifest.toml", &text)
    }
}

/// Index of saved distributions, `distributions.toml`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionIndex {
    #[serde(default)]
    pub distribution: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub direction: [f64; 3],
    pub file: String,
    pub n_samples: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub diffusion_nu: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const INDEX_FILE: &str = "distributions.toml";

pub fn write_distributions(out: &mut OutDir, dists: &[(SpinDirection, ArrivalDistribution)]) -> Result<()> {
    let mut index = DistributionIndex::default();
    for (n, d) in dists {
        let file = format!("dist_{}.csv", slug(n));
        d.write_csv(out.create_file(&file)?)?;
        index.distribution.push(IndexEntry {
            direction: n.vector(),
            file,
            n_samples: d.n_samples(),
            lambda: d.label.lambda,
            diffusion_nu: d.label.nu,
            seed: d.label.seed,
        });
    }
    out.write(INDEX_FILE, &toml::to_string(&index)?)
}

pub fn read_distributions(dir: &Path) -> Result<Vec<(SpinDirection, ArrivalDistribution)>> {
    let index_path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).with_context(|| format!("reading {}", index_path.display()))?;
    let index: DistributionIndex = toml::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
    if index.distribution.is_empty() {
        bail!("{} lists no distributions", index_path.display());
    }
    index
        .distribution
        .iter()
        .map(|e| {
            let p = dir.join(&e.file);
            let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            let d = ArrivalDistribution::read_csv(f, e.n_samples)
                .with_context(|| format!("reading {}", p.display()))?
                .with_label(DistributionLabel {
                    direction: Some(e.direction),
                    lambda: e.lambda,
                    nu: e.diffusion_nu,
                    seed: e.seed,
                });
            Ok((SpinDirection::new(e.direction)?, d))
        })
        .collect()
}
