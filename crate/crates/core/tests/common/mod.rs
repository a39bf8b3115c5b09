//! Seeded random plants, parameters and patterns shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use parametrix::linalg::{hstack, spectral_radius, vstack};
use parametrix::lti::{Controller, Fir, PlantBlocks, StateSpacePlant};
use parametrix::param_maps::YoulaParam;
use parametrix::synthesis::SparsityPattern;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_fir(rng: &mut ChaCha8Rng, r: usize, c: usize, horizon: usize) -> Fir {
    Fir::new((0..=horizon).map(|_| gaussian(rng, r, c)).collect()).unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng, nu: usize, ny: usize, horizon: usize) -> YoulaParam {
    YoulaParam::new(random_fir(rng, nu, ny, horizon))
}

pub struct Dims {
    pub n: usize,
    pub nw: usize,
    pub nu: usize,
    pub nz: usize,
    pub ny: usize,
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_n: usize) -> Dims {
    Dims {
        n: rng.gen_range(1..=max_n),
        nw: rng.gen_range(1..=2),
        nu: rng.gen_range(1..=2),
        nz: rng.gen_range(1..=2),
        ny: rng.gen_range(1..=2),
    }
}

/// Gaussian plant with Gaussian feedthrough terms and `A` rescaled to a
/// spectral radius in `[0.5, 1.5)`, so stable and unstable plants both
/// occur; redrawn until it is stabilizable and detectable.
pub fn random_plant(rng: &mut ChaCha8Rng, max_n: usize) -> StateSpacePlant {
    loop {
        let d = random_dims(rng, max_n);
        let rho = rng.gen_range(0.5..1.5);
        let blocks = PlantBlocks::new(
            scaled_a(rng, d.n, rho),
            gaussian(rng, d.n, d.nw),
            gaussian(rng, d.n, d.nu),
            gaussian(rng, d.nz, d.n),
            gaussian(rng, d.ny, d.n),
        )
        .with_d11(gaussian(rng, d.nz, d.nw))
        .with_d12(gaussian(rng, d.nz, d.nu))
        .with_d21(gaussian(rng, d.ny, d.nw));
        if let Ok(p) = StateSpacePlant::new(blocks) {
            return p;
        }
    }
}

/// Random `A` rescaled to spectral radius `rho`.
pub fn scaled_a(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> Mat {
    loop {
        let a = gaussian(rng, n, n);
        let r = spectral_radius(&a);
        if r > 1e-3 {
            return a * (rho / r);
        }
    }
}

/// `z = (x, u)`, `y = C2 x + v`, `w = (process, sensor)`: every state and
/// input is penalized and every measurement is noisy.
pub fn full_h2_plant(a: Mat, b2: Mat, c2: Mat) -> StateSpacePlant {
    let (n, nu, ny) = (a.nrows(), b2.ncols(), c2.nrows());
    let b1 = hstack(&[&Mat::identity(n, n), &Mat::zeros(n, ny)]);
    let c1 = vstack(&[&Mat::identity(n, n), &Mat::zeros(nu, n)]);
    let d12 = vstack(&[&Mat::zeros(n, nu), &Mat::identity(nu, nu)]);
    let d21 = hstack(&[&Mat::zeros(ny, n), &Mat::identity(ny, ny)]);
    StateSpacePlant::new(PlantBlocks::new(a, b1, b2, c1, c2).with_d12(d12).with_d21(d21)).unwrap()
}

/// Stable plant with full H2 weights, `rho(A) = 0.5`.
pub fn random_stable_plant(rng: &mut ChaCha8Rng, max_n: usize) -> StateSpacePlant {
    let n = rng.gen_range(1..=max_n);
    let nu = rng.gen_range(1..=2.min(n));
    let ny = rng.gen_range(1..=2.min(n));
    let a = scaled_a(rng, n, 0.5);
    full_h2_plant(a, gaussian(rng, n, nu), gaussian(rng, ny, n))
}

pub fn random_pattern(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> SparsityPattern {
    SparsityPattern::from_fn(r, c, |_, _| rng.gen_bool(density))
}

pub fn random_controller(rng: &mut ChaCha8Rng, nu: usize, ny: usize, order: usize, scale: f64) -> Controller {
    Controller::new(
        gaussian(rng, order, order) * 0.5,
        gaussian(rng, order, ny),
        gaussian(rng, nu, order),
        gaussian(rng, nu, ny) * scale,
    )
    .unwrap()
}
