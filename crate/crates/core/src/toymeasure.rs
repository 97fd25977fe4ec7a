//! Finite-dimensional measurement models: a system coupled to an apparatus
//! by a unitary, read out in the computational basis of the composite and
//! grouped into outcome labels by a calibration map.
//!
//! Composite basis index of `|s> (x) |a>` is `s * d_app + a`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{spinor_from_direction, SpinDirection};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteExperiment {
    d_sys: usize,
    d_app: usize,
    unitary: CMatrix,
    ready_state: CVector,
    calibration: Vec<String>,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl FiniteExperiment {
    pub fn new(d_sys: usize, d_app: usize, unitary: CMatrix, ready_state: CVector, calibration: Vec<String>) -> Result<Self> {
        if d_sys == 0 || d_app == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        let d = d_sys * d_app;
        if unitary.nrows() != d || unitary.ncols() != d {
            return Err(Error::invalid(format!("unitary must be {d}x{d}")));
        }
        if ready_state.len() != d_app {
            return Err(Error::invalid(format!("ready state must have {d_app} components")));
        }
        if calibration.len() != d {
            return Err(Error::invalid(format!("calibration must label all {d} basis states")));
        }
        if (ready_state.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("ready state has norm {}", ready_state.norm())));
        }
        let deviation = max_abs(&(unitary.adjoint() * &unitary - CMatrix::identity(d, d)));
        if deviation > 1e-10 {
            return Err(Error::NonUnitary { deviation });
        }
        Ok(Self { d_sys, d_app, unitary, ready_state, calibration })
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }
    pub fn d_app(&self) -> usize {
        self.d_app
    }
    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }
    pub fn ready_state(&self) -> &CVector {
        &self.ready_state
    }
    pub fn calibration(&self) -> &[String] {
        &self.calibration
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.calibration.clone();
        l.sort();
        l.dedup();
        l
    }

    /// `V = U (I (x) |Phi_0>)`, a `d_sys d_app x d_sys` isometry.
    fn isometry(&self) -> CMatrix {
        let d = self.d_sys * self.d_app;
        CMatrix::from_fn(d, self.d_sys, |i, s| {
            (0..self.d_app)
                .map(|a| self.unitary[(i, s * self.d_app + a)] * self.ready_state[a])
                .sum()
        })
    }

    fn product_state(&self, psi: &CVector) -> CVector {
        CVector::from_fn(self.d_sys * self.d_app, |i, _| psi[i / self.d_app] * self.ready_state[i % self.d_app])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedPovm {
    pub labels: Vec<String>,
    pub elements: Vec<CMatrix>,
}

impl ExtractedPovm {
    pub fn element(&self, label: &str) -> Option<&CMatrix> {
        self.labels.iter().position(|l| l == label).map(|i| &self.elements[i])
    }

    /// `max |sum_label E - I|`.
    pub fn completeness_error(&self) -> f64 {
        let d = self.elements[0].nrows();
        let mut sum = CMatrix::zeros(d, d);
        for e in &self.elements {
            sum += e;
        }
        max_abs(&(sum - CMatrix::identity(d, d)))
    }

    /// Smallest eigenvalue over all elements.
    pub fn min_eigenvalue(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| hermitian_part(e).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation from hermiticity over all elements.
    pub fn hermiticity_error(&self) -> f64 {
        self.elements.iter().map(|e| max_abs(&(e - e.adjoint()))).fold(0.0, f64::max)
    }

    /// `<psi|E(label)|psi>` per label.
    pub fn expectation(&self, psi: &CVector) -> BTreeMap<String, f64> {
        self.labels
            .iter()
            .zip(&self.elements)
            .map(|(l, e)| (l.clone(), psi.dotc(&(e * psi)).re))
            .collect()
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `E(label) = <Phi_0| U^dagger P(F^-1(label)) U |Phi_0>`.
pub fn extract_povm(exp: &FiniteExperiment) -> ExtractedPovm {
    let v = exp.isometry();
    let labels = exp.labels();
    let elements = labels
        .iter()
        .map(|label| {
            let mut e = CMatrix::zeros(exp.d_sys, exp.d_sys);
            for (i, _) in exp.calibration.iter().enumerate().filter(|(_, l)| *l == label) {
                let row = v.row(i);
                e += row.adjoint() * row;
            }
            e
        })
        .collect();
    ExtractedPovm { labels, elements }
}

/// Outcome probabilities of `U (psi (x) Phi_0)` read out in the composite
/// basis and grouped by the calibration.
pub fn born_outcome_dist(exp: &FiniteExperiment, psi: &CVector) -> Result<BTreeMap<String, f64>> {
    if psi.len() != exp.d_sys {
        return Err(Error::invalid(format!("system state must have {} components", exp.d_sys)));
    }
    if (psi.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("system state has norm {}", psi.norm())));
    }
    let out = &exp.unitary * exp.product_state(psi);
    let mut dist: BTreeMap<String, f64> = exp.labels().into_iter().map(|l| (l, 0.0)).collect();
    for (i, amp) in out.iter().enumerate() {
        *dist.get_mut(&exp.calibration[i]).expect("label present") += amp.norm_sqr();
    }
    Ok(dist)
}

fn pauli(a: usize) -> [[Complex64; 2]; 2] {
    let i = Complex64::new(0.0, 1.0);
    match a {
        0 => [[ZERO, ONE], [ONE, ZERO]],
        1 => [[ZERO, -i], [i, ZERO]],
        _ => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

/// Largest entry of `[U, sigma_a (x) I]` over `a = x, y, z`, with the spin
/// as the leading factor of the system.
pub fn spin_commutator_norm(exp: &FiniteExperiment) -> Result<f64> {
    if exp.d_sys % 2 != 0 {
        return Err(Error::invalid("system dimension must be even to contain a spin factor"));
    }
    let d = exp.d_sys * exp.d_app;
    let half = d / 2;
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        let s = pauli(a);
        let op = CMatrix::from_fn(d, d, |r, c| if r % half == c % half { s[r / half][c / half] } else { ZERO });
        worst = worst.max(max_abs(&(&exp.unitary * &op - &op * &exp.unitary)));
    }
    Ok(worst)
}

/// Largest pairwise TV between outcome distributions of `|n> (x) phi` over
/// `directions`. Requires `U` to commute with every `sigma_a (x) I` and the
/// calibration to ignore the spin index.
pub fn decoupling_check(exp: &FiniteExperiment, phi: &CVector, directions: &[SpinDirection]) -> Result<f64> {
    let deviation = spin_commutator_norm(exp)?;
    if deviation > 1e-10 {
        return Err(Error::NotDecoupled { deviation });
    }
    let half = exp.calibration.len() / 2;
    if (0..half).any(|i| exp.calibration[i] != exp.calibration[i + half]) {
        return Err(Error::NotDecoupled { deviation: 1.0 });
    }
    let rest = exp.d_sys / 2;
    if phi.len() != rest {
        return Err(Error::invalid(format!("phi must have {rest} components")));
    }
    let dists = directions
        .iter()
        .map(|n| {
            let s = spinor_from_direction(n);
            let psi = CVector::from_fn(exp.d_sys, |i, _| if i < rest { s.up * phi[i] } else { s.down * phi[i - rest] });
            born_outcome_dist(exp, &psi)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..dists.len() {
        for j in 0..i {
            let tv = 0.5 * dists[i].iter().map(|(l, p)| (p - dists[j][l]).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    Ok(worst)
}

pub fn random_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phases of
/// `R`'s diagonal moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random unitary, ready state and a calibration into `n_labels` labels.
pub fn random_experiment<R: Rng + ?Sized>(d_sys: usize, d_app: usize, n_labels: usize, rng: &mut R) -> FiniteExperiment {
    let d = d_sys * d_app;
    let calibration = (0..d).map(|_| format!("o{}", rng.random_range(0..n_labels.max(1)))).collect();
    FiniteExperiment::new(d_sys, d_app, random_unitary(d, rng), random_state(d_app, rng), calibration)
        .expect("random construction is valid")
}

/// `I_2 (x) W` for a unitary `W` on the remaining system factor times the apparatus.
pub fn spin_decoupled(w: &CMatrix) -> CMatrix {
    let m = w.nrows();
    CMatrix::from_fn(2 * m, 2 * m, |r, c| if r / m == c / m { w[(r % m, c % m)] } else { ZERO })
}

/// Text form of an experiment: dimensions, `U` row-major as `[re, im]`
/// pairs, the ready state, one label per composite basis index, and
/// optional system states to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub d_sys: usize,
    pub d_app: usize,
    pub unitary: Vec<[f64; 2]>,
    pub ready_state: Vec<[f64; 2]>,
    pub calibration: Vec<String>,
    #[serde(default)]
    pub states: Vec<Vec<[f64; 2]>>,
}

fn complex(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

fn pairs<'a>(v: impl Iterator<Item = &'a Complex64>) -> Vec<[f64; 2]> {
    v.map(|z| [z.re, z.im]).collect()
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn experiment(&self) -> Result<FiniteExperiment> {
        let d = self.d_sys * self.d_app;
        if self.unitary.len() != d * d {
            return Err(Error::Parse(format!("unitary needs {} entries, found {}", d * d, self.unitary.len())));
        }
        let u = CMatrix::from_row_slice(d, d, &complex(&self.unitary));
        let ready = CVector::from_vec(complex(&self.ready_state));
        FiniteExperiment::new(self.d_sys, self.d_app, u, ready, self.calibration.clone())
    }

    pub fn system_states(&self) -> Vec<CVector> {
        self.states.iter().map(|s| CVector::from_vec(complex(s))).collect()
    }

    pub fn from_experiment(exp: &FiniteExperiment, states: &[CVector]) -> Self {
        Self {
            d_sys: exp.d_sys,
            d_app: exp.d_app,
            unitary: pairs(exp.unitary.transpose().iter()),
            ready_state: pairs(exp.ready_state.iter()),
            calibration: exp.calibration.clone(),
            states: states.iter().map(|s| pairs(s.iter())).collect(),
        }
    }
}
