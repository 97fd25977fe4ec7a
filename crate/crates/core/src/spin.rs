//! Physical parameters, spin directions and their spinor representatives.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Units and trap/detector geometry shared by every stage of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    /// Transverse trap frequency of the waveguide.
    pub omega: f64,
    /// Height `L` of the detector plane `z = L`.
    pub detector_plane_l: f64,
    pub lambda: f64,
    pub diffusion_nu: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            omega: 16.0,
            detector_plane_l: 10.0,
            lambda: 1.0,
            diffusion_nu: 0.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hbar", self.hbar),
            ("mass", self.mass),
            ("omega", self.omega),
            ("detector_plane_l", self.detector_plane_l),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if !(self.diffusion_nu.is_finite() && self.diffusion_nu >= 0.0) {
            return Err(Error::invalid("diffusion_nu must be nonnegative"));
        }
        Ok(())
    }

    /// `2 m omega / hbar`, the curvature of `-ln |chi_0|^2`.
    pub fn transverse_stiffness(&self) -> f64 {
        2.0 * self.mass * self.omega / self.hbar
    }

    /// Per-axis variance of the transverse ground-state density.
    pub fn transverse_variance(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.omega)
    }

    /// `|chi_0(x, y)|^2` of the transverse harmonic ground state.
    pub fn transverse_density(&self, x: f64, y: f64) -> f64 {
        let a = self.mass * self.omega / self.hbar;
        a / PI * (-a * (x * x + y * y)).exp()
    }
}

/// Unit vector `n` together with its polar and azimuthal angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinDirection {
    n: [f64; 3],
    alpha: f64,
    beta: f64,
}

const POLE_EPS: f64 = 1e-15;

impl SpinDirection {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid(format!("cannot normalize direction {v:?}")));
        }
        let n = [v[0] / norm, v[1] / norm, v[2] / norm];
        let alpha = n[2].clamp(-1.0, 1.0).acos();
        let rho = n[0].hypot(n[1]);
        let beta = if rho < POLE_EPS {
            0.0
        } else {
            n[1].atan2(n[0]).rem_euclid(TAU)
        };
        Ok(Self { n, alpha, beta })
    }

    /// Builds `n = (sin a cos b, sin a sin b, cos a)`.
    ///
    /// A polar angle outside `[0, pi]` is folded back (`a` and `2 pi - a`
    /// name the same direction), the azimuth is reduced mod `2 pi`, and the
    /// azimuth is set to 0 on the poles.
    pub fn from_angles(alpha: f64, beta: f64) -> Self {
        let mut a = alpha.rem_euclid(TAU);
        if a > PI {
            a = TAU - a;
        }
        let b = beta.rem_euclid(TAU);
        if a < POLE_EPS {
            return Self { n: [0.0, 0.0, 1.0], alpha: 0.0, beta: 0.0 };
        }
        if PI - a < POLE_EPS {
            return Self { n: [0.0, 0.0, -1.0], alpha: PI, beta: 0.0 };
        }
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        Self {
            n: [sa * cb, sa * sb, ca],
            alpha: a,
            beta: b,
        }
    }

    pub fn plus_z() -> Self {
        Self::from_angles(0.0, 0.0)
    }
    pub fn minus_z() -> Self {
        Self::from_angles(PI, 0.0)
    }
    pub fn plus_x() -> Self {
        Self::from_angles(PI / 2.0, 0.0)
    }
    pub fn minus_x() -> Self {
        Self::from_angles(PI / 2.0, PI)
    }
    pub fn plus_y() -> Self {
        Self::from_angles(PI / 2.0, PI / 2.0)
    }
    pub fn minus_y() -> Self {
        Self::from_angles(PI / 2.0, 1.5 * PI)
    }

    /// The six directions `+z, -z, +x, -x, +y, -y`.
    pub fn axes() -> [Self; 6] {
        [
            Self::plus_z(),
            Self::minus_z(),
            Self::plus_x(),
            Self::minus_x(),
            Self::plus_y(),
            Self::minus_y(),
        ]
    }

    pub fn vector(&self) -> [f64; 3] {
        self.n
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn negated(&self) -> Self {
        let [x, y, z] = self.n;
        Self::new([-x, -y, -z]).expect("unit vector")
    }

    /// Euclidean distance between the two unit vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        let d: f64 = (0..3).map(|i| (self.n[i] - other.n[i]).powi(2)).sum();
        d.sqrt()
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.distance(other) < 1e-9
    }

    /// Short name such as `+z` for the coordinate axes, otherwise the vector.
    pub fn label(&self) -> String {
        const NAMES: [&str; 6] = ["+z", "-z", "+x", "-x", "+y", "-y"];
        for (axis, name) in Self::axes().iter().zip(NAMES) {
            if axis.approx_eq(self) {
                return name.to_string();
            }
        }
        format!("{:.6},{:.6},{:.6}", self.n[0], self.n[1], self.n[2])
    }

    /// Inverse of [`SpinDirection::label`].
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let named = match s {
            "+z" | "z" => Some(Self::plus_z()),
            "-z" => Some(Self::minus_z()),
            "+x" | "x" => Some(Self::plus_x()),
            "-x" => Some(Self::minus_x()),
            "+y" | "y" => Some(Self::plus_y()),
            "-y" => Some(Self::minus_y()),
            _ => None,
        };
        if let Some(d) = named {
            return Ok(d);
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("direction {s:?}: {e}")))?;
        match parts.as_slice() {
            [x, y, z] => Self::new([*x, *y, *z]),
            _ => Err(Error::Parse(format!("direction {s:?} needs 3 components"))),
        }
    }
}

impl fmt::Display for SpinDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Normalized element of `C^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor {
    pub up: Complex64,
    pub down: Complex64,
}

impl Spinor {
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("zero spinor"));
        }
        Ok(Self {
            up: up / norm,
            down: down / norm,
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    /// Expectation values `<s|sigma_a|s>` for `a = x, y, z`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        let w = self.up.conj() * self.down;
        [
            2.0 * w.re,
            2.0 * w.im,
            self.up.norm_sqr() - self.down.norm_sqr(),
        ]
    }
}

/// `|n> = (cos(a/2), sin(a/2) e^{i b})` with the global phase fixed to 0.
pub fn spinor_from_direction(dir: &SpinDirection) -> Spinor {
    let half = 0.5 * dir.alpha();
    Spinor {
        up: Complex64::new(half.cos(), 0.0),
        down: Complex64::from_polar(half.sin(), dir.beta()),
    }
}

/// `<s|sigma|s>`, renormalized to a unit vector.
pub fn direction_from_spinor(s: &Spinor) -> SpinDirection {
    SpinDirection::new(s.bloch_vector()).expect("normalized spinor has a unit Bloch vector")
}
