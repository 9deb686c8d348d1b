mod common;

use common::{max_diff, random_schedule, setup};
use oxytaxis_core::adjoint::{run_adjoint, terminal_adjoint};
use oxytaxis_core::control::ControlSchedule;
use oxytaxis_core::cost::{evaluate_cost, reduced_gradient, sensitivity_derivative, CostWeights};
use oxytaxis_core::fem::FeFunction;
use oxytaxis_core::sensitivity::run_sensitivity;
use oxytaxis_core::state::run_state;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scaled(a: &ControlSchedule, k: f64) -> ControlSchedule {
    ControlSchedule::new(
        a.grid,
        a.c.iter().map(|v| k * v).collect(),
        a.s.iter().map(|v| k * v).collect(),
    )
    .unwrap()
}

#[test]
fn sensitivity_is_linear_in_the_direction() {
    let s = setup(6, 0.02, 10, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
    let dir = random_schedule(&mut rng, s.grid, -1.0, 1.0);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let z = run_sensitivity(&s.space, &st, &controls, &dir, &s.params).unwrap();
    let z2 = run_sensitivity(&s.space, &st, &controls, &scaled(&dir, 2.0), &s.params).unwrap();
    for n in 0..=s.grid.n_steps() {
        let scale = z.z1[n].max_abs().max(z.z2[n].max_abs()).max(1e-300);
        let d1: Vec<f64> = z.z1[n].iter().map(|v| 2.0 * v).collect();
        let d2: Vec<f64> = z.z2[n].iter().map(|v| 2.0 * v).collect();
        assert!(max_diff(&d1, &z2.z1[n]) <= 1e-10 * scale);
        assert!(max_diff(&d2, &z2.z2[n]) <= 1e-10 * scale);
    }
}

#[test]
fn zero_direction_gives_zero_sensitivity() {
    let s = setup(4, 0.02, 5, 0.3);
    let controls = ControlSchedule::constant(s.grid, 0.4, 0.6);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let z = run_sensitivity(&s.space, &st, &controls, &ControlSchedule::zeros(s.grid), &s.params).unwrap();
    assert!(z.z1.iter().chain(&z.z2).all(|f| f.max_abs() == 0.0));
}

#[test]
fn sensitivity_matches_central_differences_of_the_states() {
    let s = setup(6, 0.02, 10, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let controls = random_schedule(&mut rng, s.grid, 0.2, 0.8);
    let dir = random_schedule(&mut rng, s.grid, -1.0, 1.0);
    let eps = 1e-5;
    let run = |k: f64| {
        run_state(&s.space, &s.u0, &s.sigma0, &controls.perturbed(&dir, k), &s.params).unwrap()
    };
    let (plus, minus) = (run(eps), run(-eps));
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let z = run_sensitivity(&s.space, &st, &controls, &dir, &s.params).unwrap();
    for n in 1..=s.grid.n_steps() {
        let fd1: Vec<f64> = plus.u[n].iter().zip(minus.u[n].iter()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let fd2: Vec<f64> =
            plus.sigma[n].iter().zip(minus.sigma[n].iter()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        assert!(max_diff(&fd1, &z.z1[n]) <= 1e-6 * z.z1[n].max_abs().max(1.0), "u at step {n}");
        assert!(max_diff(&fd2, &z.z2[n]) <= 1e-6 * z.z2[n].max_abs().max(1.0), "sigma at step {n}");
    }
}

#[test]
fn zero_weights_give_zero_adjoint() {
    let s = setup(5, 0.02, 8, 0.3);
    let controls = ControlSchedule::constant(s.grid, 0.3, 0.7);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let adj = run_adjoint(&s.space, &st, &controls, &CostWeights::zero(), &s.params).unwrap();
    assert!(adj.p1.iter().chain(&adj.p2).all(|f| f.max_abs() <= 1e-12));
}

#[test]
fn adjoint_is_linear_in_the_weights() {
    let s = setup(5, 0.02, 8, 0.3);
    let controls = ControlSchedule::constant(s.grid, 0.3, 0.7);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let w = CostWeights { sigma_q: 0.8, sigma_omega: 0.9, ..CostWeights::default() };
    let a = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
    let b = run_adjoint(&s.space, &st, &controls, &w.scaled(3.5), &s.params).unwrap();
    for (x, y) in a.p1.iter().zip(&b.p1).chain(a.p2.iter().zip(&b.p2)) {
        let sx: Vec<f64> = x.iter().map(|v| 3.5 * v).collect();
        assert!(max_diff(&sx, y) <= 1e-10 * y.max_abs().max(1.0));
    }
}

#[test]
fn adjoint_sweep_is_bitwise_reproducible() {
    let s = setup(5, 0.02, 6, 0.3);
    let controls = ControlSchedule::constant(s.grid, 0.5, 0.5);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let w = CostWeights::default();
    let a = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
    let b = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn terminal_data_with_constant_fields() {
    // projection reproduces constants, so p1 = l1·u and p2 = l2·(σ − σ_Ω)
    let s = setup(4, 0.02, 1, 1.0);
    let n = s.space.dim();
    let w = CostWeights { l1: 2.0, l2: 3.0, sigma_omega: 0.5, ..CostWeights::zero() };
    let (p1, p2) = terminal_adjoint(&s.space, &FeFunction::constant(n, 0.25), &FeFunction::constant(n, 1.5), &w).unwrap();
    assert!(p1.iter().all(|v| (v - 0.5).abs() < 1e-12));
    assert!(p2.iter().all(|v| (v - 3.0).abs() < 1e-12));
}

#[test]
fn adjoint_gradient_matches_sensitivity_pairing() {
    let s = setup(6, 0.02, 10, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
    let w = CostWeights { sigma_q: 0.9, sigma_omega: 1.1, ..CostWeights::default() };
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let adj = run_adjoint(&s.space, &st, &controls, &w, &s.params).unwrap();
    let grad = reduced_gradient(&s.space, &st, &adj, &w, &s.params).unwrap();
    let m = s.space.mass();
    let dt = s.grid.dt();
    for _ in 0..3 {
        let dir = random_schedule(&mut rng, s.grid, -1.0, 1.0);
        let z = run_sensitivity(&s.space, &st, &controls, &dir, &s.params).unwrap();
        // derivative of the cost through the linearized states
        let mut dj = 0.0;
        for n in 1..=s.grid.n_steps() {
            let dev: Vec<f64> = st.sigma[n].iter().map(|v| v - w.sigma_q).collect();
            dj += dt * (w.k1 * m.bilinear(&st.u[n], &z.z1[n]) + w.k2 * m.bilinear(&dev, &z.z2[n]));
        }
        let (u_t, s_t) = st.final_state();
        let dev: Vec<f64> = s_t.iter().map(|v| v - w.sigma_omega).collect();
        let n = s.grid.n_steps();
        dj += w.l1 * m.bilinear(u_t, &z.z1[n]) + w.l2 * m.bilinear(&dev, &z.z2[n]);
        let area = s.space.area();
        dj += dt * dir.c.iter().zip(&dir.s).map(|(c, q)| (w.k3 * c + w.k4 * q) * area).sum::<f64>();
        let adj_dj = grad.directional(&dir);
        assert!((dj - adj_dj).abs() <= 1e-8 * dj.abs(), "{dj} vs {adj_dj}");
        let lib = sensitivity_derivative(&s.space, &st, &z, &dir, &w).unwrap();
        assert!((lib - dj).abs() <= 1e-12 * dj.abs());
    }
}

#[test]
fn cost_is_additive_over_weight_terms() {
    let s = setup(5, 0.02, 6, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
    let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
    let w = CostWeights { k1: 0.7, k2: 1.3, k3: 0.2, k4: 0.05, l1: 2.0, l2: 0.4, sigma_q: 0.9, sigma_omega: 1.2 };
    let z = CostWeights { sigma_q: w.sigma_q, sigma_omega: w.sigma_omega, ..CostWeights::zero() };
    let parts = [
        CostWeights { k1: w.k1, ..z },
        CostWeights { k2: w.k2, ..z },
        CostWeights { k3: w.k3, ..z },
        CostWeights { k4: w.k4, ..z },
        CostWeights { l1: w.l1, ..z },
        CostWeights { l2: w.l2, ..z },
    ];
    let total = evaluate_cost(&s.space, &st, &controls, &w).unwrap();
    let sum: f64 = parts.iter().map(|p| evaluate_cost(&s.space, &st, &controls, p).unwrap()).sum();
    assert!((total - sum).abs() <= 1e-12 * total.abs());
    assert!(parts.iter().all(|p| evaluate_cost(&s.space, &st, &controls, p).unwrap() >= 0.0));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cost_is_nonnegative(
            seed in any::<u64>(),
            k in proptest::array::uniform6(0.0f64..5.0),
            targets in proptest::array::uniform2(-2.0f64..3.0),
        ) {
            let s = setup(3, 0.05, 4, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let controls = random_schedule(&mut rng, s.grid, 0.0, 1.0);
            let st = run_state(&s.space, &s.u0, &s.sigma0, &controls, &s.params).unwrap();
            let w = CostWeights {
                k1: k[0], k2: k[1], k3: k[2], k4: k[3], l1: k[4], l2: k[5],
                sigma_q: targets[0], sigma_omega: targets[1],
            };
            prop_assert!(evaluate_cost(&s.space, &st, &controls, &w).unwrap() >= 0.0);
        }
    }
}
