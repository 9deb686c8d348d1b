mod common;

use std::collections::{BTreeSet, HashMap};

use common::{max_diff, random_schedule, setup};
use oxytaxis_core::adjoint::run_adjoint;
use oxytaxis_core::control::{AdmissibleSet, ControlSchedule};
use oxytaxis_core::cost::{reduced_gradient, sensitivity_derivative, ControlProblem, CostWeights};
use oxytaxis_core::fem::{FeFunction, FemSpace};
use oxytaxis_core::mesh::{generate_rectangle, Mesh};
use oxytaxis_core::model::{default_satellites, initial_oxygen, initial_tumor, InitMode, ModelParams};
use oxytaxis_core::optimizer::{optimize, AdamConfig};
use oxytaxis_core::sensitivity::run_sensitivity;
use oxytaxis_core::state::run_state;
use oxytaxis_core::time::TimeGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Structured rectangle with interior vertices jittered by up to a quarter
/// cell, so elements are no longer congruent.
fn jittered(lx: f64, ly: f64, nx: usize, ny: usize, seed: u64) -> Mesh {
    let base = generate_rectangle(lx, ly, nx, ny).unwrap();
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = base
        .vertices()
        .iter()
        .map(|&[x, y]| {
            let interior = x > 1e-12 && x < lx - 1e-12 && y > 1e-12 && y < ly - 1e-12;
            if interior {
                [x + hx * rng.gen_range(-0.25..0.25), y + hy * rng.gen_range(-0.25..0.25)]
            } else {
                [x, y]
            }
        })
        .collect();
    Mesh::new(vertices, base.triangles().to_vec()).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    (0.5f64..3.0, 0.5f64..3.0, 1usize..9, 1usize..9, any::<u64>())
        .prop_map(|(lx, ly, nx, ny, seed)| jittered(lx, ly, nx, ny, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_gradients_sum_to_zero(mesh in mesh_strategy()) {
        for e in 0..mesh.num_triangles() {
            let g = mesh.element_geometry(e).grads;
            for d in 0..2 {
                prop_assert!((g[0][d] + g[1][d] + g[2][d]).abs() <= 1e-14 * (1.0 + g[0][d].abs().max(g[1][d].abs())));
            }
        }
    }

    #[test]
    fn element_areas_add_up_to_the_domain(lx in 0.5f64..3.0, ly in 0.5f64..3.0, nx in 1usize..12, ny in 1usize..12, seed: u64) {
        let mesh = jittered(lx, ly, nx, ny, seed);
        let sum: f64 = (0..mesh.num_triangles()).map(|e| mesh.element_geometry(e).area).sum();
        prop_assert!((sum - lx * ly).abs() <= 1e-12 * lx * ly);
        prop_assert!((mesh.area() - lx * ly).abs() <= 1e-12 * lx * ly);
    }

    #[test]
    fn edges_are_shared_by_one_or_two_triangles(mesh in mesh_strategy()) {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in mesh.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        prop_assert!(count.values().all(|&c| c == 1 || c == 2));
        let single: BTreeSet<_> = count.iter().filter(|(_, &c)| c == 1).map(|(&k, _)| k).collect();
        let boundary: BTreeSet<_> = mesh.boundary_edges().iter().map(|&[a, b]| (a.min(b), a.max(b))).collect();
        prop_assert_eq!(single, boundary);
    }

    #[test]
    fn unit_weight_mass_equals_mass(mesh in mesh_strategy()) {
        let space = FemSpace::new(mesh);
        let w = space.assemble_weighted_mass(|_, _, _| 1.0).unwrap();
        let m = space.assemble_mass();
        for i in 0..space.dim() {
            for j in 0..space.dim() {
                prop_assert!((w.get(i, j) - m.get(i, j)).abs() <= 1e-12 * (1.0 + m.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn convection_pairing_matches_direct_integral(mesh in mesh_strategy(), seed: u64) {
        let space = FemSpace::new(mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_vec(&mut rng, space.dim());
        let b = random_vec(&mut rng, space.dim());
        let w: Vec<[f64; 2]> = (0..space.num_elements()).map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
        let pairing = space.assemble_convection(&w).unwrap().bilinear(&a, &b);
        // ∇a_h is constant per element and ∫_e b_h = area · mean of b
        let mut direct = 0.0;
        for (e, t) in space.mesh().triangles().iter().enumerate() {
            let g = space.geometry(e);
            let grad = [0, 1].map(|d| (0..3).map(|k| a[t[k]] * g.grads[k][d]).sum::<f64>());
            let mean_b = (b[t[0]] + b[t[1]] + b[t[2]]) / 3.0;
            direct += (w[e][0] * grad[0] + w[e][1] * grad[1]) * g.area * mean_b;
        }
        prop_assert!((pairing - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn growth_rate_is_affine_and_bounded(b in 0.0f64..=1.0, rho_hat in 0.1f64..10.0, alpha in 1.0f64..10.0, beta in 0.1f64..5.0, sigma in 0.0f64..50.0) {
        let p = ModelParams { b, rho_hat, alpha, beta, ..ModelParams::default() };
        let affine = p.rho(0.0) + p.rho_prime(sigma) * sigma;
        prop_assert!((p.rho(sigma) - affine).abs() <= 1e-14 * (1.0 + affine.abs()));
        if sigma <= 10.0 * beta && b > 0.0 {
            let floor = (rho_hat / alpha * b).min(rho_hat / alpha);
            prop_assert!(p.rho(sigma) >= floor * (1.0 - 1e-15));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // the 1e-3 bound needs the tumor bump (width 0.1·min L) resolved,
    // h ≤ min L/12; a 4×4 unit square undershoots by about 11%
    #[test]
    fn initial_fields_are_nonnegative_up_to_projection_undershoot(n in 12usize..30, lx in 0.5f64..4.0, ly in 0.5f64..4.0) {
        let min = lx.min(ly);
        let cells = |l: f64| (n as f64 * l / min).ceil() as usize;
        let space = FemSpace::new(generate_rectangle(lx, ly, cells(lx), cells(ly)).unwrap());
        let p = ModelParams::default();
        let sats = default_satellites(&space);
        for mode in [InitMode::Interpolation, InitMode::L2Projection] {
            for f in [initial_tumor(&space, mode).unwrap(), initial_oxygen(&space, &p, sats, mode).unwrap()] {
                let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = f.iter().copied().fold(f64::INFINITY, f64::min);
                match mode {
                    InitMode::Interpolation => prop_assert!(min >= 0.0),
                    InitMode::L2Projection => prop_assert!(min >= -1e-3 * max),
                }
            }
        }
    }

    #[test]
    fn equilibrium_is_stationary_under_any_admissible_controls(seed: u64, n in 2usize..8, b in 0.0f64..=1.0) {
        let space = FemSpace::new(generate_rectangle(1.0, 1.0, n, n).unwrap());
        let p = ModelParams { b, ..ModelParams::default() };
        let grid = TimeGrid::new(0.05, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = random_schedule(&mut rng, grid, 0.0, 1.0);
        let u0 = FeFunction::zeros(space.dim());
        let s0 = FeFunction::constant(space.dim(), p.beta);
        let tr = run_state(&space, &u0, &s0, &controls, &p).unwrap();
        for k in 0..=grid.n_steps() {
            prop_assert!(tr.u[k].max_abs() <= 1e-10);
            prop_assert!(tr.sigma[k].iter().all(|v| (v - p.beta).abs() <= 1e-10));
        }
    }

    #[test]
    fn pure_diffusion_conserves_tumor_mass(seed: u64, d_u in 0.1f64..5.0) {
        let s = setup(6, 0.02, 10, 1.0);
        let p = ModelParams { d_u, rho_hat: 0.0, chi: 0.0, kappa: 0.0, ..ModelParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = FeFunction::new((0..s.space.dim()).map(|_| rng.gen_range(0.0..1.0)).collect());
        let tr = run_state(&s.space, &u0, &s.sigma0, &ControlSchedule::zeros(s.grid), &p).unwrap();
        let m0 = s.space.integral(&tr.u[0]);
        for u in &tr.u {
            prop_assert!((s.space.integral(u) - m0).abs() <= 1e-10 * (1.0 + m0.abs()));
        }
    }

    #[test]
    fn state_and_adjoint_are_deterministic(seed: u64) {
        let s = setup(5, 0.02, 6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
        let a = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
        let b = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
        prop_assert_eq!(&a, &b);
        let w = CostWeights::default();
        let pa = run_adjoint(&s.space, &a, &controls, &w, &s.params).unwrap();
        let pb = run_adjoint(&s.space, &b, &controls, &w, &s.params).unwrap();
        prop_assert_eq!(pa, pb);
    }

    #[test]
    fn adjoint_scales_with_the_weights(seed: u64, lambda in -5.0f64..5.0) {
        let s = setup(5, 0.02, 6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
        let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
        let w = CostWeights { sigma_q: 0.7, sigma_omega: 1.2, ..CostWeights::default() };
        let a = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
        let b = run_adjoint(&s.space, &st, &controls, &w.scaled(lambda), &s.params).unwrap();
        for (x, y) in a.p1.iter().zip(&b.p1).chain(a.p2.iter().zip(&b.p2)) {
            let sx: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            prop_assert!(max_diff(&sx, y) <= 1e-10 * y.max_abs().max(1.0));
        }
    }

    #[test]
    fn sensitivity_scales_with_the_direction(seed: u64, k in -4.0f64..4.0) {
        let s = setup(5, 0.02, 6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
        let dir = random_schedule(&mut rng, s.grid, -1.0, 1.0);
        let kdir = ControlSchedule::new(s.grid, dir.c.iter().map(|v| k * v).collect(), dir.s.iter().map(|v| k * v).collect()).unwrap();
        let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
        let z = run_sensitivity(&s.space, &st, &controls, &dir, &s.params).unwrap();
        let zk = run_sensitivity(&s.space, &st, &controls, &kdir, &s.params).unwrap();
        for (x, y) in z.z1.iter().zip(&zk.z1).chain(z.z2.iter().zip(&zk.z2)) {
            let sx: Vec<f64> = x.iter().map(|v| k * v).collect();
            prop_assert!(max_diff(&sx, y) <= 1e-10 * x.max_abs().max(y.max_abs()).max(1e-300));
        }
    }

    #[test]
    fn adjoint_and_sensitivity_agree_on_directional_derivatives(seed: u64, b in 0.0f64..=1.0) {
        let s = setup(5, 0.02, 8, b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
        let w = CostWeights { sigma_q: 0.8, sigma_omega: 1.1, ..CostWeights::default() };
        let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
        let adj = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
        let grad = reduced_gradient(&s.space, &st, &adj, &w, &s.params).unwrap();
        let dir = random_schedule(&mut rng, s.grid, -1.0, 1.0);
        let z = run_sensitivity(&s.space, &st, &controls, &dir, &s.params).unwrap();
        let via_sens = sensitivity_derivative(&s.space, &st, &z, &dir, &w).unwrap();
        let via_adj = grad.directional(&dir);
        prop_assert!((via_sens - via_adj).abs() <= 1e-6 * via_sens.abs().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimizer_iterates_stay_feasible_and_best_is_the_minimum(
        c_max in 0.02f64..0.15,
        c0 in 0.0f64..=1.0,
        s0 in 0.0f64..=1.0,
        k3 in 0.0f64..0.1,
        alpha0 in 0.01f64..0.3,
    ) {
        let s = setup(4, 0.02, 10, 0.5);
        let w = CostWeights { k3, ..CostWeights::default() };
        let prob = ControlProblem::new(&s.space, s.params, w, c_max, s.grid, s.u0.clone(), s.sigma0.clone()).unwrap();
        let cfg = AdamConfig { alpha0, max_iter: 8, ..AdamConfig::default() };
        let r = optimize(&prob, &ControlSchedule::constant(s.grid, c0, s0), &cfg).unwrap();
        let set = AdmissibleSet { c_max, omega_area: s.space.area() };
        let mut running = f64::INFINITY;
        for h in &r.history {
            prop_assert!(h.controls.is_admissible(&set));
            running = running.min(h.cost);
        }
        prop_assert_eq!(r.best_cost, running);
        prop_assert_eq!(r.history[r.best_iteration].cost, r.best_cost);
        prop_assert_eq!(&r.best, &r.history[r.best_iteration].controls);
    }
}
