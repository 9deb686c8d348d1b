//! Linearized state scheme: the exact directional derivative of
//! [`run_state`](crate::state::run_state) with respect to the controls.
//!
//! With `z1ⁿ = ∂uⁿ`, `z2ⁿ = ∂σⁿ` and `z⁰ = 0`, step `n` solves
//!
//! ```text
//! Aₙ z1ⁿ = M z1ⁿ⁻¹/Δt − W(ρ(σⁿ⁻¹) z1ⁿ⁻¹) uⁿ − W(a′ₙ z2ⁿ⁻¹) uⁿ
//!          + χ C(∇z2ⁿ⁻¹) uⁿ − κ δcₙ W(σⁿ⁻¹) uⁿ
//! Bₙ z2ⁿ = M z2ⁿ⁻¹/Δt + W(A_ox uⁿ z2ⁿ⁻¹/(k_ox + σⁿ⁻¹)²) σⁿ
//!          − W(A_ox z1ⁿ/(k_ox + σⁿ⁻¹)) σⁿ + (1 − sₙ) S_c M z1ⁿ − S_c δsₙ M uⁿ
//! ```
//!
//! where `Aₙ`, `Bₙ` are the state system matrices and
//! `a′ₙ = −ρ′(σⁿ⁻¹)(α − uⁿ⁻¹) + κ cₙ`.

use crate::control::ControlSchedule;
use crate::error::{Error, Result};
use crate::fem::{solve_sparse_with, FeFunction, FemSpace, QuadField, SolverHint, SolverOptions};
use crate::model::ModelParams;
use crate::state::{
    consumption_weight, michaelis_denominator, sigma_matrix, u_matrix, u_reaction, StateTrajectory,
};
use crate::time::TimeGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub grid: TimeGrid,
    pub z1: Vec<FeFunction>,
    pub z2: Vec<FeFunction>,
}

pub(crate) fn map_quad(a: &QuadField, f: impl Fn(usize, usize, f64) -> f64) -> QuadField {
    a.iter()
        .enumerate()
        .map(|(e, x)| std::array::from_fn(|q| f(e, q, x[q])))
        .collect()
}

pub fn run_sensitivity(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    direction: &ControlSchedule,
    params: &ModelParams,
) -> Result<SensitivityTrajectory> {
    run_sensitivity_with(space, states, controls, direction, params, &SolverOptions::default())
}

pub fn run_sensitivity_with(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    direction: &ControlSchedule,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<SensitivityTrajectory> {
    let grid = states.grid;
    let n_steps = grid.n_steps();
    if states.len() != n_steps + 1 || controls.len() != n_steps || direction.len() != n_steps {
        return Err(Error::InvalidArgument(
            "states, controls and direction must share one time grid".into(),
        ));
    }
    let dt = grid.dt();
    let dim = space.dim();
    let m = space.mass();
    let mut z1 = vec![FeFunction::zeros(dim)];
    let mut z2 = vec![FeFunction::zeros(dim)];

    for n in 1..=n_steps {
        let step = |e: Error| e.at_step(n);
        let (u_prev, s_prev) = (&states.u[n - 1], &states.sigma[n - 1]);
        let (u, s) = (&states.u[n], &states.sigma[n]);
        let (c, sc) = (controls.c[n - 1], controls.s[n - 1]);
        let (dc, ds) = (direction.c[n - 1], direction.s[n - 1]);
        let (z1p, z2p) = (&z1[n - 1], &z2[n - 1]);

        let u_prev_q = space.to_quad(u_prev);
        let s_prev_q = space.to_quad(s_prev);
        let u_q = space.to_quad(u);
        let s_q = space.to_quad(s);
        let z1p_q = space.to_quad(z1p);
        let z2p_q = space.to_quad(z2p);

        // tumor row
        let a = u_matrix(space, params, dt, &u_reaction(params, &u_prev_q, &s_prev_q, c), s_prev)
            .map_err(step)?;
        let a_prime = map_quad(&s_prev_q, |e, q, sv| {
            -params.rho_prime_clamped(sv) * (params.alpha - u_prev_q[e][q]) + params.kappa * c
        });
        let source = map_quad(&u_q, |e, q, uv| {
            uv * (-params.rho(s_prev_q[e][q]) * z1p_q[e][q] - a_prime[e][q] * z2p_q[e][q]
                - params.kappa * dc * s_prev_q[e][q])
        });
        let mut rhs = space.load(&source).map_err(step)?;
        let taxis = space
            .assemble_convection(&space.gradient(z2p))
            .map_err(step)?
            .mul(u);
        let mz = m.mul(z1p);
        for i in 0..dim {
            rhs[i] += mz[i] / dt + params.chi * taxis[i];
        }
        let z1n = solve_sparse_with(&a, &rhs, SolverHint::General, opts, None).map_err(step)?;

        // oxygen row
        let denom = michaelis_denominator(params, &s_prev_q).map_err(step)?;
        let b = sigma_matrix(space, params, dt, &consumption_weight(params, &u_q, &denom))
            .map_err(step)?;
        let z1n_q = space.to_quad(&z1n);
        let source = map_quad(&s_q, |e, q, sv| {
            let d = denom[e][q];
            params.a_ox * sv * (u_q[e][q] * z2p_q[e][q] / (d * d) - z1n_q[e][q] / d)
        });
        let mut rhs = space.load(&source).map_err(step)?;
        let mz2 = m.mul(z2p);
        let mz1 = m.mul(&z1n);
        let mu = m.mul(u);
        for i in 0..dim {
            rhs[i] += mz2[i] / dt + (1.0 - sc) * params.s_c * mz1[i] - params.s_c * ds * mu[i];
        }
        let z2n = solve_sparse_with(&b, &rhs, SolverHint::Spd, opts, None).map_err(step)?;

        z1.push(FeFunction::new(z1n));
        z2.push(FeFunction::new(z2n));
    }
    Ok(SensitivityTrajectory { grid, z1, z2 })
}
