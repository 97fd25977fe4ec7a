//! Signaling protocol: Alice's axis choice leaves Bob's spin along `+n` or
//! `-n` with equal probability; Bob records arrival-time bins and guesses
//! the axis from their likelihood under the two mixtures.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::binning::{ArrivalDistribution, TimeBinning};
use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::povm::SpinPovm;
use crate::rng::{derive_seed, domain, stream};
use crate::spin::SpinDirection;

/// Direction-indexed distributions on one binning.
#[derive(Debug, Clone)]
pub struct DistributionFamily {
    binning: TimeBinning,
    entries: Vec<(SpinDirection, ArrivalDistribution)>,
}

/// Alice's axis: bit 0 is `z`, bit 1 is `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Z,
    X,
}

impl Axis {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Axis::Z
        } else {
            Axis::X
        }
    }

    pub fn bit(&self) -> u8 {
        match self {
            Axis::Z => 0,
            Axis::X => 1,
        }
    }

    pub fn direction(&self) -> SpinDirection {
        match self {
            Axis::Z => SpinDirection::plus_z(),
            Axis::X => SpinDirection::plus_x(),
        }
    }
}

impl DistributionFamily {
    pub fn new(entries: Vec<(SpinDirection, ArrivalDistribution)>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::invalid("empty distribution family"))?;
        let binning = *first.1.binning();
        for (_, d) in &entries[1..] {
            first.1.check_same_binning(d)?;
        }
        Ok(Self { binning, entries })
    }

    /// Exact family predicted by a POVM.
    pub fn from_povm(povm: &SpinPovm, directions: &[SpinDirection]) -> Result<Self> {
        Self::new(directions.iter().map(|n| (*n, povm.predict(n))).collect())
    }

    pub fn binning(&self) -> &TimeBinning {
        &self.binning
    }

    pub fn entries(&self) -> &[(SpinDirection, ArrivalDistribution)] {
        &self.entries
    }

    pub fn get(&self, n: &SpinDirection) -> Result<&ArrivalDistribution> {
        self.entries
            .iter()
            .find(|(d, _)| d.approx_eq(n))
            .map(|(_, p)| p)
            .ok_or_else(|| Error::MissingDirection(n.label()))
    }
}

/// `(P_axis + P_-axis) / 2`.
pub fn bob_mixture(family: &DistributionFamily, axis: Axis) -> Result<ArrivalDistribution> {
    let n = axis.direction();
    family.get(&n)?.even_mixture(family.get(&n.negated())?)
}

/// Bin indices Bob records over `n_rounds` rounds when Alice sends `bit`.
pub fn run_protocol(family: &DistributionFamily, bit: u8, n_rounds: usize, seed: u64) -> Result<Vec<usize>> {
    if n_rounds == 0 {
        return Err(Error::invalid("n_rounds must be at least 1"));
    }
    let n = Axis::from_bit(bit).direction();
    let weighted = |d: &ArrivalDistribution| WeightedIndex::new(d.mass()).map_err(|e| Error::invalid(e.to_string()));
    let plus = weighted(family.get(&n)?)?;
    let minus = weighted(family.get(&n.negated())?)?;
    let mut rng = stream(seed, domain::PROTOCOL, 0);
    Ok((0..n_rounds)
        .map(|_| if rng.random::<bool>() { plus.sample(&mut rng) } else { minus.sample(&mut rng) })
        .collect())
}

/// Log-likelihood ratio of the samples under the `z` mixture versus the
/// `x` mixture; empty bins get mass `1 / (2 n_outcomes n_samples)`.
pub fn log_likelihood_ratio(samples: &[usize], mix_z: &ArrivalDistribution, mix_x: &ArrivalDistribution) -> f64 {
    let eps = 1.0 / (2.0 * mix_z.binning().n_outcomes() as f64 * samples.len().max(1) as f64);
    let smooth = |p: f64| if p > 0.0 { p } else { eps };
    samples
        .iter()
        .map(|&k| smooth(mix_z.mass()[k]).ln() - smooth(mix_x.mass()[k]).ln())
        .sum()
}

/// Bob's guess of Alice's bit; ties decode as 0.
pub fn decode(samples: &[usize], family: &DistributionFamily) -> Result<u8> {
    let mz = bob_mixture(family, Axis::Z)?;
    let mx = bob_mixture(family, Axis::X)?;
    if let Some(&k) = samples.iter().find(|&&k| k >= family.binning.n_outcomes()) {
        return Err(Error::invalid(format!("sample {k} outside the binning")));
    }
    Ok(if log_likelihood_ratio(samples, &mz, &mx) >= 0.0 { 0 } else { 1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub n_rounds: usize,
    pub trials: usize,
    pub accuracy: f64,
    /// `sqrt(a (1 - a) / trials)`.
    pub binomial_error: f64,
}

/// Fraction of `trials` independent protocol runs, each with a uniformly
/// random bit, that Bob decodes correctly.
pub fn decode_accuracy(family: &DistributionFamily, n_rounds: usize, trials: usize, seed: u64) -> Result<AccuracyReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    bob_mixture(family, Axis::Z)?;
    bob_mixture(family, Axis::X)?;
    let outcomes = map_indices(trials, |i| -> Result<bool> {
        let trial_seed = derive_seed(seed, domain::TRIAL, i as u64);
        let bit = (stream(trial_seed, domain::TRIAL, 0).random::<u32>() & 1) as u8;
        let samples = run_protocol(family, bit, n_rounds, trial_seed)?;
        Ok(decode(&samples, family)? == bit)
    });
    let correct = outcomes.into_iter().collect::<Result<Vec<bool>>>()?.iter().filter(|&&c| c).count();
    let a = correct as f64 / trials as f64;
    Ok(AccuracyReport {
        n_rounds,
        trials,
        accuracy: a,
        binomial_error: (a * (1.0 - a) / trials as f64).sqrt(),
    })
}

/// CSV with columns `n_rounds, trials, accuracy, binomial_error`.
pub fn write_accuracy_csv<W: Write>(reports: &[AccuracyReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_rounds", "trials", "accuracy", "binomial_error"])?;
    for r in reports {
        out.write_record([
            r.n_rounds.to_string(),
            r.trials.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.binomial_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}
