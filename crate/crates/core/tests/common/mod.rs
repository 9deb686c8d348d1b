#![allow(dead_code)]

use oxytaxis_core::control::ControlSchedule;
use oxytaxis_core::fem::{FeFunction, FemSpace};
use oxytaxis_core::mesh::generate_unit_square;
use oxytaxis_core::model::{default_satellites, initial_oxygen, initial_tumor, InitMode, ModelParams};
use oxytaxis_core::time::TimeGrid;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub space: FemSpace,
    pub params: ModelParams,
    pub grid: TimeGrid,
    pub u0: FeFunction,
    pub sigma0: FeFunction,
}

/// Reference initial data on an `n × n` unit square. `b < 1` switches on
/// the oxygen dependence of the growth rate so that every coupling term of
/// the linearization is exercised.
pub fn setup(n: usize, dt: f64, n_steps: usize, b: f64) -> Setup {
    let space = FemSpace::new(generate_unit_square(n, n).unwrap());
    let params = ModelParams { b, ..ModelParams::default() };
    let u0 = initial_tumor(&space, InitMode::L2Projection).unwrap();
    let sigma0 = initial_oxygen(&space, &params, default_satellites(&space), InitMode::L2Projection).unwrap();
    Setup {
        space,
        params,
        grid: TimeGrid::new(dt, n_steps).unwrap(),
        u0,
        sigma0,
    }
}

pub fn random_schedule(rng: &mut ChaCha8Rng, grid: TimeGrid, lo: f64, hi: f64) -> ControlSchedule {
    let n = grid.n_steps();
    let c = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let s = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    ControlSchedule::new(grid, c, s).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
