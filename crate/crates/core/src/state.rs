//! Linear, decoupled, semi-implicit time stepping of the tumor–oxygen
//! system.
//!
//! Step `n` first solves for `uⁿ` with coefficients lagged at
//! `(uⁿ⁻¹, σⁿ⁻¹)`:
//!
//! ```text
//! [M/Δt + D_u K + W(−ρ(σⁿ⁻¹)(α − uⁿ⁻¹) + κ c σⁿ⁻¹) − χ C(∇σⁿ⁻¹)] uⁿ = M uⁿ⁻¹/Δt
//! ```
//!
//! then for `σⁿ` using the fresh `uⁿ`:
//!
//! ```text
//! [M/Δt + D_σ K + γM + W(A_ox uⁿ/(k_ox + σⁿ⁻¹))] σⁿ
//!     = M σⁿ⁻¹/Δt + γβ M1 + (1 − s) S_c M uⁿ
//! ```
//!
//! `W(w)` is the mass matrix weighted by `w` at the quadrature points and
//! `C(b)_ij = ∫ φ_j b·∇φ_i`.

use crate::control::ControlSchedule;
use crate::error::{Error, Result};
use crate::fem::{
    solve_sparse_with, FeFunction, FemSpace, QuadField, SolverHint, SolverOptions, SparseMatrix,
};
use crate::model::ModelParams;
use crate::time::TimeGrid;

/// Smallest admissible Michaelis denominator `k_ox + σ` at a quadrature point.
pub const MICHAELIS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub u: Vec<FeFunction>,
    pub sigma: Vec<FeFunction>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn final_state(&self) -> (&FeFunction, &FeFunction) {
        (self.u.last().expect("nonempty"), self.sigma.last().expect("nonempty"))
    }

    /// Smallest nodal values of `u` and `σ` over the whole run. The scheme
    /// does not enforce positivity, so negative values are undershoot.
    pub fn min_values(&self) -> (f64, f64) {
        let min = |fs: &[FeFunction]| {
            fs.iter()
                .flat_map(|f| f.iter().copied())
                .fold(f64::INFINITY, f64::min)
        };
        (min(&self.u), min(&self.sigma))
    }
}

/// Quadrature weight of the lagged reaction term in the `u` system:
/// `−ρ(σⁿ⁻¹)(α − uⁿ⁻¹) + κ c σⁿ⁻¹`.
pub(crate) fn u_reaction(
    params: &ModelParams,
    u_prev_q: &QuadField,
    sigma_prev_q: &QuadField,
    c: f64,
) -> QuadField {
    u_prev_q
        .iter()
        .zip(sigma_prev_q)
        .map(|(uq, sq)| {
            std::array::from_fn(|q| {
                -params.rho(sq[q]) * (params.alpha - uq[q]) + params.kappa * c * sq[q]
            })
        })
        .collect()
}

/// `k_ox + σⁿ⁻¹` at the quadrature points.
pub(crate) fn michaelis_denominator(
    params: &ModelParams,
    sigma_prev_q: &QuadField,
) -> Result<QuadField> {
    let mut out = Vec::with_capacity(sigma_prev_q.len());
    for (e, sq) in sigma_prev_q.iter().enumerate() {
        let mut d = [0.0; 3];
        for q in 0..3 {
            d[q] = params.k_ox + sq[q];
            if !(d[q] >= MICHAELIS_FLOOR) {
                return Err(Error::Numeric {
                    element: e,
                    point: q,
                    value: d[q],
                });
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// System matrix of the `u` solve.
pub(crate) fn u_matrix(
    space: &FemSpace,
    params: &ModelParams,
    dt: f64,
    reaction: &QuadField,
    sigma_prev: &[f64],
) -> Result<SparseMatrix> {
    let mut a = space.mass().scaled(1.0 / dt);
    a.add_scaled(params.d_u, space.stiffness())?;
    a.add_scaled(1.0, &space.weighted_mass(reaction)?)?;
    a.add_scaled(-params.chi, &space.assemble_convection(&space.gradient(sigma_prev))?)?;
    Ok(a)
}

/// System matrix of the `σ` solve, given the consumption weight
/// `A_ox uⁿ/(k_ox + σⁿ⁻¹)`.
pub(crate) fn sigma_matrix(
    space: &FemSpace,
    params: &ModelParams,
    dt: f64,
    consumption: &QuadField,
) -> Result<SparseMatrix> {
    let mut b = space.mass().scaled(1.0 / dt + params.gamma);
    b.add_scaled(params.d_sigma, space.stiffness())?;
    b.add_scaled(1.0, &space.weighted_mass(consumption)?)?;
    Ok(b)
}

pub(crate) fn consumption_weight(
    params: &ModelParams,
    u_q: &QuadField,
    denom: &QuadField,
) -> QuadField {
    u_q.iter()
        .zip(denom)
        .map(|(uq, dq)| std::array::from_fn(|q| params.a_ox * uq[q] / dq[q]))
        .collect()
}

/// Right-hand side of the `σ` system.
pub(crate) fn sigma_rhs(
    space: &FemSpace,
    params: &ModelParams,
    dt: f64,
    sigma_prev: &[f64],
    u_new: &[f64],
    s: f64,
) -> Vec<f64> {
    let m = space.mass();
    let mut rhs = m.mul(sigma_prev);
    let supply = supply_load(space, params, u_new, s);
    let m1 = m.mul(&vec![1.0; space.dim()]);
    for i in 0..rhs.len() {
        rhs[i] = rhs[i] / dt + params.gamma * params.beta * m1[i] + supply[i];
    }
    rhs
}

/// `(1 − s) S_c M uⁿ`.
pub(crate) fn supply_load(space: &FemSpace, params: &ModelParams, u_new: &[f64], s: f64) -> Vec<f64> {
    let factor = (1.0 - s) * params.s_c;
    space.mass().mul(u_new).into_iter().map(|v| factor * v).collect()
}

/// One step of the scheme with default solver options.
pub fn step_state(
    space: &FemSpace,
    u_prev: &FeFunction,
    sigma_prev: &FeFunction,
    c: f64,
    s: f64,
    params: &ModelParams,
    dt: f64,
) -> Result<(FeFunction, FeFunction)> {
    step_state_with(space, u_prev, sigma_prev, c, s, params, dt, &SolverOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn step_state_with(
    space: &FemSpace,
    u_prev: &FeFunction,
    sigma_prev: &FeFunction,
    c: f64,
    s: f64,
    params: &ModelParams,
    dt: f64,
    opts: &SolverOptions,
) -> Result<(FeFunction, FeFunction)> {
    let n = space.dim();
    if u_prev.len() != n || sigma_prev.len() != n {
        return Err(Error::InvalidArgument(format!(
            "fields of length ({}, {}) on a space of dimension {n}",
            u_prev.len(),
            sigma_prev.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let sigma_prev_q = space.to_quad(sigma_prev);
    let reaction = u_reaction(params, &space.to_quad(u_prev), &sigma_prev_q, c);
    let a = u_matrix(space, params, dt, &reaction, sigma_prev)?;
    let rhs: Vec<f64> = space.mass().mul(u_prev).iter().map(|v| v / dt).collect();
    let u = solve_sparse_with(&a, &rhs, SolverHint::General, opts, Some(u_prev))?;

    let denom = michaelis_denominator(params, &sigma_prev_q)?;
    let b = sigma_matrix(space, params, dt, &consumption_weight(params, &space.to_quad(&u), &denom))?;
    let rhs = sigma_rhs(space, params, dt, sigma_prev, &u, s);
    let sigma = solve_sparse_with(&b, &rhs, SolverHint::Spd, opts, Some(sigma_prev))?;
    Ok((FeFunction::new(u), FeFunction::new(sigma)))
}

/// Forward sweep over the whole schedule.
pub fn run_state(
    space: &FemSpace,
    u0: &FeFunction,
    sigma0: &FeFunction,
    controls: &ControlSchedule,
    params: &ModelParams,
) -> Result<StateTrajectory> {
    run_state_with(space, u0, sigma0, controls, params, &SolverOptions::default())
}

pub fn run_state_with(
    space: &FemSpace,
    u0: &FeFunction,
    sigma0: &FeFunction,
    controls: &ControlSchedule,
    params: &ModelParams,
    opts: &SolverOptions,
) -> Result<StateTrajectory> {
    let grid = controls.grid;
    if controls.len() != grid.n_steps() {
        return Err(Error::InvalidArgument("control schedule does not match its grid".into()));
    }
    let n = grid.n_steps();
    let mut u = Vec::with_capacity(n + 1);
    let mut sigma = Vec::with_capacity(n + 1);
    u.push(u0.clone());
    sigma.push(sigma0.clone());
    for k in 0..n {
        let (un, sn) = step_state_with(
            space,
            &u[k],
            &sigma[k],
            controls.c[k],
            controls.s[k],
            params,
            grid.dt(),
            opts,
        )
        .map_err(|e| e.at_step(k + 1))?;
        if !un.is_finite() || !sn.is_finite() {
            return Err(Error::Solver {
                iterations: 0,
                residual: f64::NAN,
            }
            .at_step(k + 1));
        }
        u.push(un);
        sigma.push(sn);
    }
    Ok(StateTrajectory { grid, u, sigma })
}

/// Per-time observables of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub t: f64,
    /// `∫ u²`.
    pub u_sq: f64,
    pub max_u: f64,
    /// `∫ (σ − σ_Q)²`.
    pub sigma_dev_sq: f64,
    /// `∫ u`.
    pub volume: f64,
}

pub fn observables(space: &FemSpace, traj: &StateTrajectory, sigma_q: f64) -> Vec<Observables> {
    let m = space.mass();
    traj.u
        .iter()
        .zip(&traj.sigma)
        .enumerate()
        .map(|(n, (u, s))| {
            let dev: Vec<f64> = s.iter().map(|v| v - sigma_q).collect();
            Observables {
                t: traj.grid.time(n),
                u_sq: m.bilinear(u, u),
                max_u: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                sigma_dev_sq: m.bilinear(&dev, &dev),
                volume: space.integral(u),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_unit_square;

    fn space(n: usize) -> FemSpace {
        FemSpace::new(generate_unit_square(n, n).unwrap())
    }

    #[test]
    fn equilibrium_is_stationary() {
        let sp = space(6);
        let p = ModelParams::default();
        let u0 = FeFunction::zeros(sp.dim());
        let s0 = FeFunction::constant(sp.dim(), p.beta);
        for (c, s) in [(0.0, 0.0), (1.0, 0.3), (0.7, 1.0)] {
            let (u, sg) = step_state(&sp, &u0, &s0, c, s, &p, 0.008).unwrap();
            assert!(u.max_abs() <= 1e-10);
            assert!(sg.iter().all(|v| (v - p.beta).abs() <= 1e-10));
        }
    }

    #[test]
    fn constant_oxygen_relaxes_to_beta() {
        let sp = space(5);
        let p = ModelParams::default();
        let dt = 0.05;
        let s0 = 0.3;
        let (u, sg) = step_state(
            &sp,
            &FeFunction::zeros(sp.dim()),
            &FeFunction::constant(sp.dim(), s0),
            0.0,
            0.0,
            &p,
            dt,
        )
        .unwrap();
        let expected = (s0 / dt + p.gamma * p.beta) / (1.0 / dt + p.gamma);
        assert!(u.max_abs() <= 1e-12);
        assert!(sg.iter().all(|v| (v - expected).abs() <= 1e-10));
    }

    #[test]
    fn empty_schedule_keeps_initial_pair() {
        let sp = space(3);
        let p = ModelParams::default();
        let grid = TimeGrid::new(0.1, 0).unwrap();
        let u0 = FeFunction::constant(sp.dim(), 0.2);
        let s0 = FeFunction::constant(sp.dim(), 0.9);
        let tr = run_state(&sp, &u0, &s0, &ControlSchedule::zeros(grid), &p).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.u[0], u0);
        assert_eq!(tr.sigma[0], s0);
    }

    #[test]
    fn pure_diffusion_conserves_mass() {
        let sp = space(8);
        let p = ModelParams {
            rho_hat: 0.0,
            chi: 0.0,
            ..Default::default()
        };
        let grid = TimeGrid::new(0.01, 30).unwrap();
        let u0 = sp.interpolate(|x| (-20.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2))).exp());
        let s0 = FeFunction::constant(sp.dim(), 1.0);
        let tr = run_state(&sp, &u0, &s0, &ControlSchedule::zeros(grid), &p).unwrap();
        let m0 = sp.integral(&tr.u[0]);
        for u in &tr.u {
            assert!((sp.integral(u) - m0).abs() <= 1e-10);
        }
    }

    #[test]
    fn supply_term_is_linear() {
        let sp = space(4);
        let p = ModelParams::default();
        let u = sp.interpolate(|x| x[0] + 2.0 * x[1]);
        let one = supply_load(&sp, &p, &u, 0.25);
        let two = supply_load(&sp, &ModelParams { s_c: 2.0 * p.s_c, ..p }, &u, 0.25);
        for i in 0..sp.dim() {
            assert_eq!(two[i], 2.0 * one[i]);
        }
    }

    #[test]
    fn michaelis_floor_rejects_pathological_undershoot() {
        let p = ModelParams::default();
        let q = vec![[-p.k_ox, 0.0, 0.0]];
        assert!(matches!(
            michaelis_denominator(&p, &q),
            Err(Error::Numeric { element: 0, point: 0, .. })
        ));
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let sp = space(6);
        let p = ModelParams::default();
        let grid = TimeGrid::new(0.01, 5).unwrap();
        let u0 = sp.interpolate(|x| 0.5 * (-10.0 * ((x[0] - 0.5).powi(2) + x[1].powi(2))).exp());
        let s0 = sp.interpolate(|x| 1.0 - 0.2 * x[0]);
        let ctl = ControlSchedule::constant(grid, 0.3, 0.6);
        let a = run_state(&sp, &u0, &s0, &ctl, &p).unwrap();
        let b = run_state(&sp, &u0, &s0, &ctl, &p).unwrap();
        assert_eq!(a, b);
    }
}
