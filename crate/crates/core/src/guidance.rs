//! Guidance laws: the lambda-family of deterministic velocity fields and the
//! diffusion-indexed stochastic family built on top of it.
//!
//! For product states `Psi = |n> (x) psi` one has `Psi^dagger sigma Psi = rho n`,
//! so the spin term `curl(Psi^dagger sigma Psi) / rho` reduces to
//! `(grad rho x n) / rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::SpinDirection;
use crate::waveguide::{rho_and_grad, LongitudinalField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub lambda: f64,
    #[serde(default)]
    pub diffusion_nu: f64,
}

impl DynamicsSpec {
    pub fn deterministic(lambda: f64) -> Self {
        Self { lambda, diffusion_nu: 0.0 }
    }

    pub fn stochastic(lambda: f64, diffusion_nu: f64) -> Self {
        Self { lambda, diffusion_nu }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if !(self.diffusion_nu.is_finite() && self.diffusion_nu >= 0.0) {
            return Err(Error::invalid("diffusion_nu must be nonnegative"));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.diffusion_nu == 0.0
    }
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `v = (0, 0, (hbar/m) Im(f'/f)) + (lambda hbar / 2m) (grad rho x n) / rho`.
pub fn velocity<F: LongitudinalField + ?Sized>(
    field: &F,
    t: f64,
    pos: [f64; 3],
    n: &SpinDirection,
    lambda: f64,
) -> Result<[f64; 3]> {
    let s = rho_and_grad(field, t, pos)?;
    let mut v = [0.0, 0.0, s.conv_velocity_z];
    if lambda != 0.0 {
        let p = field.params();
        let g = [s.grad_rho[0] / s.rho, s.grad_rho[1] / s.rho, s.grad_rho[2] / s.rho];
        let spin = cross(g, n.vector());
        let c = lambda * p.hbar / (2.0 * p.mass);
        for i in 0..3 {
            v[i] += c * spin[i];
        }
    }
    Ok(v)
}

/// Drift `v + nu grad rho / rho` of the equivariant diffusion with
/// coefficient `nu` (increment variance `2 nu dt` per axis).
pub fn stochastic_drift<F: LongitudinalField + ?Sized>(
    field: &F,
    t: f64,
    pos: [f64; 3],
    n: &SpinDirection,
    spec: &DynamicsSpec,
) -> Result<[f64; 3]> {
    let mut v = velocity(field, t, pos, n, spec.lambda)?;
    if spec.diffusion_nu > 0.0 {
        let s = rho_and_grad(field, t, pos)?;
        for i in 0..3 {
            v[i] += spec.diffusion_nu * s.grad_rho[i] / s.rho;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{spinor_from_direction, PhysicalParams};
    use crate::waveguide::{density_sample, LongitudinalGrid, PacketConfig, WaveState};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state() -> WaveState {
        let p = PhysicalParams::default();
        let grid = LongitudinalGrid::new(40.0, 2048).unwrap();
        WaveState::init_packet(&PacketConfig::default(), &grid, &p)
            .unwrap()
            .evolve_to(0.8)
            .unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
        [
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(4.0..9.0),
        ]
    }

    #[test]
    fn real_wave_function_has_no_velocity_at_lambda_zero() {
        let p = PhysicalParams::default();
        let st = WaveState::sine_mode(50, &LongitudinalGrid::new(40.0, 1024).unwrap(), &p).unwrap();
        let v = velocity(&st, 0.0, [0.1, -0.2, 3.3], &SpinDirection::plus_x(), 0.0).unwrap();
        assert_eq!(v, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn z_spin_leaves_longitudinal_velocity_alone() {
        let st = state();
        let pos = [0.2, -0.1, 6.0];
        let v0 = velocity(&st, 0.8, pos, &SpinDirection::plus_z(), 0.0).unwrap();
        let v1 = velocity(&st, 0.8, pos, &SpinDirection::plus_z(), 1.0).unwrap();
        assert_eq!(v0[2], v1[2]);
        // (hbar/2m)(d_y ln rho, -d_x ln rho, 0) with d_x ln rho = -2 m omega x / hbar
        let a = PhysicalParams::default().transverse_stiffness();
        assert!((v1[0] - 0.5 * (-a * pos[1])).abs() < 1e-12);
        assert!((v1[1] - 0.5 * (a * pos[0])).abs() < 1e-12);
    }

    #[test]
    fn y_spin_difference_matches_finite_difference_cross_product() {
        let st = state();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = SpinDirection::plus_y();
        for _ in 0..50 {
            let pos = random_point(&mut rng);
            let v0 = velocity(&st, 0.8, pos, &n, 0.0).unwrap();
            let v1 = velocity(&st, 0.8, pos, &n, 1.0).unwrap();
            // oracle: central differences of rho, then an explicit component-wise cross product
            let h = 1e-5;
            let rho = |q: [f64; 3]| density_sample(&st, 0.8, q).rho;
            let r = rho(pos);
            let mut g = [0.0; 3];
            for i in 0..3 {
                let mut a = pos;
                let mut b = pos;
                a[i] += h;
                b[i] -= h;
                g[i] = (rho(a) - rho(b)) / (2.0 * h) / r;
            }
            let expect = [-0.5 * g[2], 0.0, 0.5 * g[0]];
            for i in 0..3 {
                let d = v1[i] - v0[i];
                assert!((d - expect[i]).abs() < 1e-5 * (1.0 + expect[i].abs()), "{i}: {d} vs {}", expect[i]);
            }
        }
    }

    #[test]
    fn spin_term_is_linear_in_lambda() {
        let st = state();
        let n = SpinDirection::new([0.3, -0.5, 0.8]).unwrap();
        let pos = [0.15, 0.25, 6.5];
        let v0 = velocity(&st, 0.8, pos, &n, 0.0).unwrap();
        let v1 = velocity(&st, 0.8, pos, &n, 1.0).unwrap();
        for lambda in [-1.0, 0.5, 1.0, 2.0] {
            let vl = velocity(&st, 0.8, pos, &n, lambda).unwrap();
            for i in 0..3 {
                let expect = lambda * (v1[i] - v0[i]);
                assert!((vl[i] - v0[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
            }
        }
    }

    /// `(lambda hbar / 2m) curl(Psi^dagger sigma Psi) / Psi^dagger Psi` from
    /// full spinor components, with `d_i (Psi^dagger sigma_a Psi) = 2 Re(Psi^dagger sigma_a d_i Psi)`.
    fn spin_term_from_components(st: &WaveState, pos: [f64; 3], n: &SpinDirection, lambda: f64) -> [f64; 3] {
        let p = PhysicalParams::default();
        let [x, y, z] = pos;
        let (f, df) = crate::waveguide::LongitudinalField::longitudinal(st, z, 0.8);
        let chi = p.transverse_density(x, y).sqrt();
        let k = p.mass * p.omega / p.hbar;
        let psi = chi * f;
        let dpsi = [-k * x * psi, -k * y * psi, chi * df];
        let s = spinor_from_direction(n);
        let spinor = [s.up, s.down];
        let sigma = |a: usize, v: [Complex64; 2]| -> [Complex64; 2] {
            let i = Complex64::new(0.0, 1.0);
            match a {
                0 => [v[1], v[0]],
                1 => [-i * v[1], i * v[0]],
                _ => [v[0], -v[1]],
            }
        };
        let full = [spinor[0] * psi, spinor[1] * psi];
        let rho = full[0].norm_sqr() + full[1].norm_sqr();
        // grad_i S_a
        let mut grad = [[0.0; 3]; 3];
        for (a, row) in grad.iter_mut().enumerate() {
            for (i, g) in row.iter_mut().enumerate() {
                let d = [spinor[0] * dpsi[i], spinor[1] * dpsi[i]];
                let sd = sigma(a, d);
                *g = 2.0 * (full[0].conj() * sd[0] + full[1].conj() * sd[1]).re;
            }
        }
        let curl = [
            grad[2][1] - grad[1][2],
            grad[0][2] - grad[2][0],
            grad[1][0] - grad[0][1],
        ];
        let c = lambda * p.hbar / (2.0 * p.mass) / rho;
        [c * curl[0], c * curl[1], c * curl[2]]
    }

    #[test]
    fn product_state_identity() {
        let st = state();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let pos = random_point(&mut rng);
            let n = SpinDirection::new([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap();
            let v0 = velocity(&st, 0.8, pos, &n, 0.0).unwrap();
            let v1 = velocity(&st, 0.8, pos, &n, 1.0).unwrap();
            let full = spin_term_from_components(&st, pos, &n, 1.0);
            for i in 0..3 {
                let d = v1[i] - v0[i];
                assert!((d - full[i]).abs() < 1e-10 * (1.0 + d.abs()), "{d} vs {}", full[i]);
            }
        }
    }

    #[test]
    fn drift_reduces_to_velocity_and_osmotic_term() {
        let st = state();
        let n = SpinDirection::plus_x();
        let pos = [0.1, 0.2, 5.5];
        let v = velocity(&st, 0.8, pos, &n, 1.0).unwrap();
        let d = stochastic_drift(&st, 0.8, pos, &n, &DynamicsSpec::deterministic(1.0)).unwrap();
        assert_eq!(v, d);

        let p = PhysicalParams::default();
        let real = WaveState::sine_mode(30, &LongitudinalGrid::new(40.0, 1024).unwrap(), &p).unwrap();
        let pos = [0.1, 0.2, 0.5];
        let d = stochastic_drift(&real, 0.0, pos, &n, &DynamicsSpec::stochastic(0.0, 0.5)).unwrap();
        let s = density_sample(&real, 0.0, pos);
        for i in 0..3 {
            assert!((d[i] - 0.5 * s.grad_rho[i] / s.rho).abs() < 1e-12);
        }
    }

    #[test]
    fn node_singularity_is_reported() {
        let st = state();
        let err = velocity(&st, 0.8, [0.0, 0.0, 39.0], &SpinDirection::plus_z(), 1.0).unwrap_err();
        assert!(matches!(err, Error::NodeSingularity { .. }));
    }
}
