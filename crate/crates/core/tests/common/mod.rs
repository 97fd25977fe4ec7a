#![allow(dead_code)]

use arrival_core::rng::StreamRng;
use arrival_core::{LongitudinalGrid, PacketConfig, PhysicalParams, Simulation, SpinDirection, SpinPovm, TimeBinning};
use rand::{Rng, SeedableRng};

/// Short waveguide for tests that only need qualitative dynamics.
pub fn small_sim(t_end: f64) -> Simulation {
    let p = PhysicalParams { detector_plane_l: 8.0, ..Default::default() };
    Simulation::new(p, PacketConfig::default(), LongitudinalGrid::new(40.0, 2048).unwrap(), t_end).unwrap()
}

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn random_direction<R: Rng>(rng: &mut R) -> SpinDirection {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    SpinDirection::new([s * phi.cos(), s * phi.sin(), z]).unwrap()
}

/// Random valid POVM: positive `e0`, and zero-sum `e` scaled inside every cone.
pub fn random_povm<R: Rng>(rng: &mut R, n_bins: usize) -> SpinPovm {
    let b = TimeBinning::new(n_bins as f64, n_bins).unwrap();
    let k = b.n_outcomes();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let e0: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mut e: Vec<[f64; 3]> = (0..k).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    for i in 0..3 {
        let mean = e.iter().map(|v| v[i]).sum::<f64>() / k as f64;
        for v in e.iter_mut() {
            v[i] -= mean;
        }
    }
    let scale = e
        .iter()
        .zip(&e0)
        .map(|(v, &a)| a / (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-300))
        .fold(f64::INFINITY, f64::min);
    let s = 0.9 * scale * rng.random_range(0.1..1.0);
    for v in e.iter_mut() {
        for c in v.iter_mut() {
            *c *= s;
        }
    }
    SpinPovm::new(b, e0, e).unwrap()
}

/// Independent check of every POVM invariant.
pub fn assert_valid_povm(p: &SpinPovm) {
    let mut s0 = 0.0;
    let mut s = [0.0; 3];
    for (a, v) in p.e0().iter().zip(p.e_vec()) {
        assert!(*a >= 0.0);
        assert!((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() <= a + 1e-12);
        s0 += a;
        for i in 0..3 {
            s[i] += v[i];
        }
    }
    assert!((s0 - 1.0).abs() < 1e-10);
    assert!(s.iter().all(|c| c.abs() < 1e-10));
}
