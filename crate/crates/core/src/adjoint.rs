//! Discrete adjoint of the state scheme, swept backward in time.
//!
//! The adjoint is the exact transpose of the linearized scheme in
//! [`sensitivity`](crate::sensitivity), scaled by `1/Δt`. Because the
//! linearized oxygen row at step `n` depends on `z1ⁿ` but the tumor row does
//! not depend on `z2ⁿ`, the transposed system is solved `p2` first:
//!
//! ```text
//! Bₙ p2ⁿ = k₂ M(σⁿ − σ_Q) + M p2ⁿ⁺¹/Δt
//!          + W(A_ox uⁿ⁺¹ σⁿ⁺¹/(k_ox + σⁿ)²) p2ⁿ⁺¹ − W(a′ₙ₊₁ uⁿ⁺¹) p1ⁿ⁺¹ + χ K[uⁿ⁺¹] p1ⁿ⁺¹
//! Aₙᵀ p1ⁿ = k₁ M uⁿ + M p1ⁿ⁺¹/Δt − W(ρ(σⁿ) uⁿ⁺¹) p1ⁿ⁺¹
//!          − W(A_ox σⁿ/(k_ox + σⁿ⁻¹)) p2ⁿ + (1 − sₙ) S_c M p2ⁿ
//! ```
//!
//! `K[w]` is the stiffness matrix weighted by `w`. Coupling terms through
//! step `n + 1` vanish at `n = N`, where `pᴺ⁺¹` is the projected terminal
//! data `(l₁ uᴺ, l₂ (σᴺ − σ_Ω))`.

use crate::control::ControlSchedule;
use crate::cost::CostWeights;
use crate::error::{Error, Result};
use crate::fem::{solve_sparse_with, FeFunction, FemSpace, SolverHint, SolverOptions};
use crate::model::ModelParams;
use crate::sensitivity::map_quad;
use crate::state::{
    consumption_weight, michaelis_denominator, sigma_matrix, u_matrix, u_reaction, StateTrajectory,
};
use crate::time::TimeGrid;

/// Backward solution. Entry `k` holds `p^{k+1}`, the multiplier of state
/// step `k + 1`; entry `N` holds the terminal data.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub grid: TimeGrid,
    pub p1: Vec<FeFunction>,
    pub p2: Vec<FeFunction>,
}

/// `(Q^h(l₁ u_T), Q^h(l₂ (σ_T − σ_Ω)))`.
pub fn terminal_adjoint(
    space: &FemSpace,
    u_t: &FeFunction,
    sigma_t: &FeFunction,
    weights: &CostWeights,
) -> Result<(FeFunction, FeFunction)> {
    let p1 = space.project_quad(&map_quad(&space.to_quad(u_t), |_, _, v| weights.l1 * v))?;
    let p2 = space.project_quad(&map_quad(&space.to_quad(sigma_t), |_, _, v| {
        weights.l2 * (v - weights.sigma_omega)
    }))?;
    Ok((p1, p2))
}

/// Solves for `pⁿ` given `pⁿ⁺¹`, for `n` in `1..=N`.
#[allow(clippy::too_many_arguments)]
pub fn step_adjoint_backward(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    n: usize,
    p1_next: &FeFunction,
    p2_next: &FeFunction,
    weights: &CostWeights,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<(FeFunction, FeFunction)> {
    let n_steps = states.grid.n_steps();
    if n == 0 || n > n_steps {
        return Err(Error::InvalidArgument(format!(
            "backward step {n} outside 1..={n_steps}"
        )));
    }
    let dt = states.grid.dt();
    let dim = space.dim();
    let m = space.mass();
    let (u_prev, s_prev) = (&states.u[n - 1], &states.sigma[n - 1]);
    let (u, s) = (&states.u[n], &states.sigma[n]);
    let u_prev_q = space.to_quad(u_prev);
    let s_prev_q = space.to_quad(s_prev);
    let u_q = space.to_quad(u);
    let s_q = space.to_quad(s);

    // oxygen multiplier
    let denom = michaelis_denominator(params, &s_prev_q)?;
    let b = sigma_matrix(space, params, dt, &consumption_weight(params, &u_q, &denom))?;
    let dev: Vec<f64> = s.iter().map(|v| v - weights.sigma_q).collect();
    let mdev = m.mul(&dev);
    let mp2 = m.mul(p2_next);
    let mut rhs: Vec<f64> = (0..dim)
        .map(|i| weights.k2 * mdev[i] + mp2[i] / dt)
        .collect();
    if n < n_steps {
        let u_next = &states.u[n + 1];
        let u_next_q = space.to_quad(u_next);
        let s_next_q = space.to_quad(&states.sigma[n + 1]);
        let p1_next_q = space.to_quad(p1_next);
        let p2_next_q = space.to_quad(p2_next);
        let c_next = controls.c[n];
        let d_next = michaelis_denominator(params, &s_q)?;
        let source = map_quad(&u_next_q, |e, q, un| {
            let d = d_next[e][q];
            let a_prime = -params.rho_prime_clamped(s_q[e][q]) * (params.alpha - u_q[e][q])
                + params.kappa * c_next;
            params.a_ox * un * s_next_q[e][q] / (d * d) * p2_next_q[e][q]
                - a_prime * un * p1_next_q[e][q]
        });
        let load = space.load(&source)?;
        let taxis = space.weighted_stiffness(&u_next_q)?.mul(p1_next);
        for i in 0..dim {
            rhs[i] += load[i] + params.chi * taxis[i];
        }
    }
    let p2 = solve_sparse_with(&b, &rhs, SolverHint::Spd, opts, None)?;

    // tumor multiplier
    let a = u_matrix(space, params, dt, &u_reaction(params, &u_prev_q, &s_prev_q, controls.c[n - 1]), s_prev)?;
    let at = a.transpose();
    let mu = m.mul(u);
    let mp1 = m.mul(p1_next);
    let mp2n = m.mul(&p2);
    let supply = (1.0 - controls.s[n - 1]) * params.s_c;
    let p2_q = space.to_quad(&p2);
    let source = map_quad(&s_q, |e, q, sv| -params.a_ox * sv / denom[e][q] * p2_q[e][q]);
    let mut load = space.load(&source)?;
    if n < n_steps {
        let u_next_q = space.to_quad(&states.u[n + 1]);
        let p1_next_q = space.to_quad(p1_next);
        let growth = map_quad(&s_q, |e, q, sv| {
            -params.rho(sv) * u_next_q[e][q] * p1_next_q[e][q]
        });
        for (l, g) in load.iter_mut().zip(space.load(&growth)?) {
            *l += g;
        }
    }
    let rhs: Vec<f64> = (0..dim)
        .map(|i| weights.k1 * mu[i] + mp1[i] / dt + load[i] + supply * mp2n[i])
        .collect();
    let p1 = solve_sparse_with(&at, &rhs, SolverHint::General, opts, None)?;
    Ok((FeFunction::new(p1), FeFunction::new(p2)))
}

pub fn run_adjoint(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    weights: &CostWeights,
    params: &ModelParams,
) -> Result<AdjointTrajectory> {
    run_adjoint_with(space, states, controls, weights, params, &SolverOptions::default())
}

pub fn run_adjoint_with(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    weights: &CostWeights,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<AdjointTrajectory> {
    let grid = states.grid;
    let n_steps = grid.n_steps();
    if states.len() != n_steps + 1 || controls.len() != n_steps {
        return Err(Error::InvalidArgument(
            "states and controls must share one time grid".into(),
        ));
    }
    let (u_t, s_t) = states.final_state();
    let (p1_t, p2_t) = terminal_adjoint(space, u_t, s_t, weights)?;
    let mut p1 = vec![FeFunction::zeros(0); n_steps + 1];
    let mut p2 = vec![FeFunction::zeros(0); n_steps + 1];
    p1[n_steps] = p1_t;
    p2[n_steps] = p2_t;
    for n in (1..=n_steps).rev() {
        let (a, b) = step_adjoint_backward(
            space, states, controls, n, &p1[n], &p2[n], weights, params, opts,
        )
        .map_err(|e| e.at_step(n))?;
        p1[n - 1] = a;
        p2[n - 1] = b;
    }
    Ok(AdjointTrajectory { grid, p1, p2 })
}
