//! Uniform time bins with a trailing censored bin, and binned arrival distributions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n_bins` uniform bins on `[0, t_max]` followed by one censored bin for
/// "no arrival before `t_max`".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBinning {
    pub t_max: f64,
    pub n_bins: usize,
}

impl TimeBinning {
    pub fn new(t_max: f64, n_bins: usize) -> Result<Self> {
        let b = Self { t_max, n_bins };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::invalid(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.n_bins == 0 {
            return Err(Error::invalid("n_bins must be positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.t_max / self.n_bins as f64
    }

    /// Number of outcomes including the censored bin.
    pub fn n_outcomes(&self) -> usize {
        self.n_bins + 1
    }

    pub fn censored_index(&self) -> usize {
        self.n_bins
    }

    /// Bin of an arrival time; `None` and times beyond `t_max` are censored.
    /// `t_max` itself belongs to the last regular bin.
    pub fn index_of(&self, t: Option<f64>) -> usize {
        match t {
            Some(t) if t <= self.t_max => {
                let k = (t.max(0.0) / self.width()).floor() as usize;
                k.min(self.n_bins - 1)
            }
            _ => self.n_bins,
        }
    }

    /// `(t_lo, t_hi)` of bin `k`; the censored bin is `(t_max, inf)`.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        if k >= self.n_bins {
            (self.t_max, f64::INFINITY)
        } else {
            let w = self.width();
            (k as f64 * w, (k + 1) as f64 * w)
        }
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        let (lo, hi) = self.edges(k);
        0.5 * (lo + hi)
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.n_bins == other.n_bins && (self.t_max - other.t_max).abs() <= 1e-12 * self.t_max
    }
}

/// Provenance attached to a distribution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionLabel {
    pub direction: Option<[f64; 3]>,
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
    pub seed: Option<u64>,
}

/// Normalized histogram over the outcomes of a [`TimeBinning`].
///
/// `n_samples == 0` marks an exact (model-generated) distribution whose
/// standard errors are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDistribution {
    binning: TimeBinning,
    mass: Vec<f64>,
    stderr: Vec<f64>,
    n_samples: usize,
    pub label: DistributionLabel,
}

const NORM_TOL: f64 = 1e-9;

impl ArrivalDistribution {
    /// Exact distribution from per-outcome masses. Round-off negatives above
    /// `-1e-10` are clamped to zero.
    pub fn from_masses(binning: TimeBinning, mass: Vec<f64>) -> Result<Self> {
        Self::with_errors(binning, mass, None, 0)
    }

    /// Empirical distribution; standard errors are `sqrt(p (1 - p) / N)`.
    pub fn from_counts(binning: TimeBinning, counts: &[usize]) -> Result<Self> {
        if counts.len() != binning.n_outcomes() {
            return Err(Error::invalid(format!(
                "expected {} counts, got {}",
                binning.n_outcomes(),
                counts.len()
            )));
        }
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::invalid("empty histogram"));
        }
        let nf = n as f64;
        let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let stderr = mass.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
        Self::with_errors(binning, mass, Some(stderr), n)
    }

    pub fn with_errors(
        binning: TimeBinning,
        mut mass: Vec<f64>,
        stderr: Option<Vec<f64>>,
        n_samples: usize,
    ) -> Result<Self> {
        binning.validate()?;
        if mass.len() != binning.n_outcomes() {
            return Err(Error::invalid(format!(
                "expected {} masses, got {}",
                binning.n_outcomes(),
                mass.len()
            )));
        }
        for m in mass.iter_mut() {
            if !m.is_finite() || *m < -1e-10 {
                return Err(Error::invalid(format!("invalid bin mass {m}")));
            }
            *m = m.max(0.0);
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        let stderr = match stderr {
            Some(s) if s.len() == mass.len() => s,
            Some(_) => return Err(Error::invalid("stderr length mismatch")),
            None => vec![0.0; mass.len()],
        };
        Ok(Self {
            binning,
            mass,
            stderr,
            n_samples,
            label: DistributionLabel::default(),
        })
    }

    pub fn with_label(mut self, label: DistributionLabel) -> Self {
        self.label = label;
        self
    }

    pub fn binning(&self) -> &TimeBinning {
        &self.binning
    }
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn censored_mass(&self) -> f64 {
        self.mass[self.binning.censored_index()]
    }

    pub fn check_same_binning(&self, other: &Self) -> Result<()> {
        if self.binning.same_as(&other.binning) {
            Ok(())
        } else {
            Err(Error::BinningMismatch)
        }
    }

    /// `(self + other) / 2` with standard errors of independent inputs.
    pub fn even_mixture(&self, other: &Self) -> Result<Self> {
        self.check_same_binning(other)?;
        let mass = self.mass.iter().zip(&other.mass).map(|(a, b)| 0.5 * (a + b)).collect();
        let stderr = self
            .stderr
            .iter()
            .zip(&other.stderr)
            .map(|(a, b)| 0.5 * (a * a + b * b).sqrt())
            .collect();
        Self::with_errors(self.binning, mass, Some(stderr), self.n_samples + other.n_samples)
    }

    /// Mean bin midpoint over the non-censored bins, conditioned on arrival.
    pub fn mean_arrival(&self) -> f64 {
        let n = self.binning.n_bins;
        let arrived: f64 = self.mass[..n].iter().sum();
        let moment: f64 = (0..n).map(|k| self.binning.midpoint(k) * self.mass[k]).sum();
        moment / arrived
    }

    /// CSV with columns `t_lo, t_hi, mass, stderr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_lo", "t_hi", "mass", "stderr"])?;
        for k in 0..self.binning.n_outcomes() {
            let (lo, hi) = self.binning.edges(k);
            out.write_record([
                lo.to_string(),
                hi.to_string(),
                format!("{:.17e}", self.mass[k]),
                format!("{:.17e}", self.stderr[k]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`ArrivalDistribution::write_csv`]. The binning is
    /// recovered from the edges; `n_samples` is not stored in the file.
    pub fn read_csv<R: Read>(r: R, n_samples: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse("short distribution row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            rows.push((field(0)?, field(1)?, field(2)?, field(3)?));
        }
        let (censored, regular) = rows
            .split_last()
            .ok_or_else(|| Error::Parse("empty distribution file".into()))?;
        if censored.1.is_finite() || regular.is_empty() {
            return Err(Error::Parse("last row must be the censored bin".into()));
        }
        let binning = TimeBinning::new(censored.0, regular.len())?;
        for (k, row) in regular.iter().enumerate() {
            let (lo, hi) = binning.edges(k);
            if (row.0 - lo).abs() > 1e-9 * binning.t_max || (row.1 - hi).abs() > 1e-9 * binning.t_max {
                return Err(Error::Parse(format!("non-uniform bin edges at row {k}")));
            }
        }
        let mass = rows.iter().map(|r| r.2).collect();
        let stderr = rows.iter().map(|r| r.3).collect();
        Self::with_errors(binning, mass, Some(stderr), n_samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_indexing() {
        let b = TimeBinning::new(10.0, 5).unwrap();
        assert_eq!(b.index_of(Some(0.0)), 0);
        assert_eq!(b.index_of(Some(1.999)), 0);
        assert_eq!(b.index_of(Some(2.0)), 1);
        assert_eq!(b.index_of(Some(10.0)), 4);
        assert_eq!(b.index_of(Some(10.5)), 5);
        assert_eq!(b.index_of(None), 5);
        assert_eq!(b.edges(5), (10.0, f64::INFINITY));
        assert!(TimeBinning::new(0.0, 3).is_err());
        assert!(TimeBinning::new(1.0, 0).is_err());
    }

    #[test]
    fn counts_normalize_with_errors() {
        let b = TimeBinning::new(1.0, 2).unwrap();
        let d = ArrivalDistribution::from_counts(b, &[2, 1, 1]).unwrap();
        assert_eq!(d.mass(), &[0.5, 0.25, 0.25]);
        assert!((d.stderr()[0] - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(d.censored_mass(), 0.25);
    }

    #[test]
    fn rejects_unnormalized() {
        let b = TimeBinning::new(1.0, 2).unwrap();
        assert!(ArrivalDistribution::from_masses(b, vec![0.5, 0.5, 0.5]).is_err());
        assert!(ArrivalDistribution::from_masses(b, vec![1.5, -0.5, 0.0]).is_err());
        assert!(ArrivalDistribution::from_masses(b, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let b = TimeBinning::new(3.0, 3).unwrap();
        let d = ArrivalDistribution::from_counts(b, &[3, 4, 2, 1]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = ArrivalDistribution::read_csv(buf.as_slice(), 10).unwrap();
        assert_eq!(back.mass(), d.mass());
        assert_eq!(back.stderr(), d.stderr());
        assert!(back.binning().same_as(d.binning()));
    }
}
