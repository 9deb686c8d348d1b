//! Therapy cost functional, its reduced gradient and finite-difference
//! checks.
//!
//! The discrete cost is
//!
//! ```text
//! J = Σₙ₌₁ᴺ Δt [½k₁ uⁿᵀM uⁿ + ½k₂ (σⁿ − σ_Q)ᵀM(σⁿ − σ_Q)] + Δt Σₙ (k₃ cₙ + k₄ sₙ)|Ω|
//!     + ½l₁ uᴺᵀM uᴺ + ½l₂ (σᴺ − σ_Ω)ᵀM(σᴺ − σ_Ω)
//! ```

use crate::adjoint::{run_adjoint_with, AdjointTrajectory};
use crate::control::{project_schedule, AdmissibleSet, ControlSchedule};
use crate::error::{Error, Result};
use crate::fem::{FeFunction, FemSpace, SolverOptions};
use crate::model::ModelParams;
use crate::sensitivity::SensitivityTrajectory;
use crate::state::{run_state_with, StateTrajectory};
use crate::time::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub l1: f64,
    pub l2: f64,
    pub sigma_q: f64,
    pub sigma_omega: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            k3: 0.01,
            k4: 0.01,
            l1: 1.0,
            l2: 1.0,
            sigma_q: 1.0,
            sigma_omega: 1.0,
        }
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            k4: 0.0,
            l1: 0.0,
            l2: 0.0,
            sigma_q: 1.0,
            sigma_omega: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("l1", self.l1),
            ("l2", self.l2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !self.sigma_q.is_finite() || !self.sigma_omega.is_finite() {
            return Err(Error::InvalidArgument("target oxygen levels must be finite".into()));
        }
        Ok(())
    }

    /// Multiplies every weight by `s`, leaving the targets alone.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            k1: s * self.k1,
            k2: s * self.k2,
            k3: s * self.k3,
            k4: s * self.k4,
            l1: s * self.l1,
            l2: s * self.l2,
            ..*self
        }
    }
}

fn check_aligned(states: &StateTrajectory, controls: &ControlSchedule) -> Result<()> {
    let n = states.grid.n_steps();
    if states.len() != n + 1 || controls.len() != n || controls.grid != states.grid {
        return Err(Error::InvalidArgument(
            "states and controls live on different time grids".into(),
        ));
    }
    Ok(())
}

fn deviation_sq(space: &FemSpace, f: &FeFunction, target: f64) -> f64 {
    let d: Vec<f64> = f.iter().map(|v| v - target).collect();
    space.mass().bilinear(&d, &d)
}

pub fn evaluate_cost(
    space: &FemSpace,
    states: &StateTrajectory,
    controls: &ControlSchedule,
    weights: &CostWeights,
) -> Result<f64> {
    check_aligned(states, controls)?;
    let dt = states.grid.dt();
    let m = space.mass();
    let mut running = 0.0;
    for n in 1..states.len() {
        let mut term = 0.0;
        if weights.k1 != 0.0 {
            term += 0.5 * weights.k1 * m.bilinear(&states.u[n], &states.u[n]);
        }
        if weights.k2 != 0.0 {
            term += 0.5 * weights.k2 * deviation_sq(space, &states.sigma[n], weights.sigma_q);
        }
        running += dt * term;
    }
    let control: f64 = controls
        .c
        .iter()
        .zip(&controls.s)
        .map(|(c, s)| weights.k3 * c + weights.k4 * s)
        .sum::<f64>()
        * dt
        * space.area();
    let (u_t, s_t) = states.final_state();
    let mut terminal = 0.0;
    if weights.l1 != 0.0 {
        terminal += 0.5 * weights.l1 * m.bilinear(u_t, u_t);
    }
    if weights.l2 != 0.0 {
        terminal += 0.5 * weights.l2 * deviation_sq(space, s_t, weights.sigma_omega);
    }
    Ok(running + control + terminal)
}

/// Per-step gradient densities. The derivative of `J` with respect to the
/// control value on step `k` is `Δt·d_c[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGradient {
    pub d_c: Vec<f64>,
    pub d_s: Vec<f64>,
}

impl ReducedGradient {
    /// `Σ_k Δt (d_c[k] δc_k + d_s[k] δs_k)`.
    pub fn directional(&self, direction: &ControlSchedule) -> f64 {
        let dt = direction.grid.dt();
        dt * (self.d_c.iter().zip(&direction.c).map(|(a, b)| a * b).sum::<f64>()
            + self.d_s.iter().zip(&direction.s).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn norm(&self) -> f64 {
        self.d_c
            .iter()
            .chain(&self.d_s)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// `d_c[k] = k₃|Ω| − κ ∫ σᵏ uᵏ⁺¹ p₁[k]` and `d_s[k] = k₄|Ω| − S_c ∫ uᵏ⁺¹ p₂[k]`.
///
/// The oxygen factor is lagged like the cytotoxic term of the state scheme,
/// which makes the result the exact derivative of the discrete cost.
pub fn reduced_gradient(
    space: &FemSpace,
    states: &StateTrajectory,
    adjoints: &AdjointTrajectory,
    weights: &CostWeights,
    params: &ModelParams,
) -> Result<ReducedGradient> {
    let n = states.grid.n_steps();
    if states.len() != n + 1 || adjoints.p1.len() != n + 1 || adjoints.grid != states.grid {
        return Err(Error::InvalidArgument(
            "state and adjoint trajectories are not aligned".into(),
        ));
    }
    let area = space.area();
    let m = space.mass();
    let mut d_c = Vec::with_capacity(n);
    let mut d_s = Vec::with_capacity(n);
    for k in 0..n {
        let s_q = space.to_quad(&states.sigma[k]);
        let u_q = space.to_quad(&states.u[k + 1]);
        let p_q = space.to_quad(&adjoints.p1[k]);
        let prod: Vec<[f64; 3]> = (0..s_q.len())
            .map(|e| std::array::from_fn(|q| s_q[e][q] * u_q[e][q] * p_q[e][q]))
            .collect();
        d_c.push(weights.k3 * area - params.kappa * space.integrate(&prod));
        d_s.push(weights.k4 * area - params.s_c * m.bilinear(&adjoints.p2[k], &states.u[k + 1]));
    }
    Ok(ReducedGradient { d_c, d_s })
}

/// `dJ/dε` along a direction whose linearized states are `sens`. Pairs with
/// [`ReducedGradient::directional`] in gradient checks.
pub fn sensitivity_derivative(
    space: &FemSpace,
    states: &StateTrajectory,
    sens: &SensitivityTrajectory,
    direction: &ControlSchedule,
    weights: &CostWeights,
) -> Result<f64> {
    check_aligned(states, direction)?;
    if sens.z1.len() != states.len() || sens.grid != states.grid {
        return Err(Error::InvalidArgument("sensitivities are not aligned with the states".into()));
    }
    let dt = states.grid.dt();
    let m = space.mass();
    let n = states.grid.n_steps();
    let dev = |f: &FeFunction, target: f64| f.iter().map(|v| v - target).collect::<Vec<f64>>();
    let mut dj = 0.0;
    for k in 1..=n {
        dj += dt
            * (weights.k1 * m.bilinear(&states.u[k], &sens.z1[k])
                + weights.k2 * m.bilinear(&dev(&states.sigma[k], weights.sigma_q), &sens.z2[k]));
    }
    let (u_t, s_t) = states.final_state();
    dj += weights.l1 * m.bilinear(u_t, &sens.z1[n])
        + weights.l2 * m.bilinear(&dev(s_t, weights.sigma_omega), &sens.z2[n]);
    let control: f64 = direction
        .c
        .iter()
        .zip(&direction.s)
        .map(|(c, s)| weights.k3 * c + weights.k4 * s)
        .sum();
    Ok(dj + dt * control * space.area())
}

/// Everything needed to evaluate the reduced cost as a function of the
/// controls.
#[derive(Debug, Clone)]
pub struct ControlProblem<'a> {
    pub space: &'a FemSpace,
    pub params: ModelParams,
    pub weights: CostWeights,
    pub set: AdmissibleSet,
    pub grid: TimeGrid,
    pub u0: FeFunction,
    pub sigma0: FeFunction,
    pub solver: SolverOptions,
}

/// State, cost and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub states: StateTrajectory,
    pub gradient: ReducedGradient,
}

impl<'a> ControlProblem<'a> {
    /// Builds a problem whose budget is measured with the mesh area.
    pub fn new(
        space: &'a FemSpace,
        params: ModelParams,
        weights: CostWeights,
        c_max: f64,
        grid: TimeGrid,
        u0: FeFunction,
        sigma0: FeFunction,
    ) -> Result<Self> {
        weights.validate()?;
        if u0.len() != space.dim() || sigma0.len() != space.dim() {
            return Err(Error::InvalidArgument("initial data do not match the mesh".into()));
        }
        Ok(Self {
            space,
            params,
            weights,
            set: AdmissibleSet::new(c_max, space.area())?,
            grid,
            u0,
            sigma0,
            solver: SolverOptions::default(),
        })
    }

    pub fn solve_state(&self, controls: &ControlSchedule) -> Result<StateTrajectory> {
        if controls.grid != self.grid {
            return Err(Error::InvalidArgument("controls use a different time grid".into()));
        }
        run_state_with(self.space, &self.u0, &self.sigma0, controls, &self.params, &self.solver)
    }

    pub fn cost(&self, controls: &ControlSchedule) -> Result<f64> {
        let states = self.solve_state(controls)?;
        evaluate_cost(self.space, &states, controls, &self.weights)
    }

    pub fn adjoint(
        &self,
        states: &StateTrajectory,
        controls: &ControlSchedule,
    ) -> Result<AdjointTrajectory> {
        run_adjoint_with(self.space, states, controls, &self.weights, &self.params, &self.solver)
    }

    /// State solve, cost, adjoint solve and reduced gradient.
    pub fn evaluate(&self, controls: &ControlSchedule) -> Result<Evaluation> {
        let states = self.solve_state(controls)?;
        let cost = evaluate_cost(self.space, &states, controls, &self.weights)?;
        let adjoints = self.adjoint(&states, controls)?;
        let gradient = reduced_gradient(self.space, &states, &adjoints, &self.weights, &self.params)?;
        Ok(Evaluation {
            cost,
            states,
            gradient,
        })
    }

    /// Forward difference `(J(c + εδ) − J(c))/ε`.
    pub fn fd_gradient_oracle(
        &self,
        controls: &ControlSchedule,
        direction: &ControlSchedule,
        eps: f64,
    ) -> Result<f64> {
        fd_gradient_oracle(controls, direction, eps, |c| self.cost(c))
    }

    /// Costs of `project(c* + pert)` for a constant shift of one control.
    pub fn probe(
        &self,
        optimum: &ControlSchedule,
        which: ControlKind,
        perts: &[f64],
    ) -> Result<Vec<ProbePoint>> {
        perts
            .iter()
            .map(|&pert| {
                let mut shifted = optimum.clone();
                let target = match which {
                    ControlKind::Cytotoxic => &mut shifted.c,
                    ControlKind::Antiangiogenic => &mut shifted.s,
                };
                target.iter_mut().for_each(|v| *v += pert);
                let (projected, _) = if pert == 0.0 {
                    (optimum.clone(), 0.0)
                } else {
                    project_schedule(&shifted, &self.set)?
                };
                Ok(ProbePoint {
                    pert,
                    cost: self.cost(&projected)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// `c`.
    Cytotoxic,
    /// `s`.
    Antiangiogenic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePoint {
    pub pert: f64,
    pub cost: f64,
}

/// True if the smallest probed cost sits at `pert = 0` or at a neighbour of
/// it in the sorted probe list. Costs within `rel_tol` of the minimum count
/// as ties.
pub fn probe_has_local_minimum(points: &[ProbePoint], rel_tol: f64) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.pert.total_cmp(&b.pert));
    let Some(zero) = sorted.iter().position(|p| p.pert == 0.0) else {
        return false;
    };
    let best = sorted.iter().map(|p| p.cost).fold(f64::INFINITY, f64::min);
    let lo = zero.saturating_sub(1);
    let hi = (zero + 1).min(sorted.len() - 1);
    sorted[lo..=hi]
        .iter()
        .any(|p| p.cost <= best + rel_tol * best.abs())
}

/// Forward difference of an arbitrary cost map along `direction`.
pub fn fd_gradient_oracle(
    controls: &ControlSchedule,
    direction: &ControlSchedule,
    eps: f64,
    mut cost: impl FnMut(&ControlSchedule) -> Result<f64>,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {eps}")));
    }
    if direction.c.iter().chain(&direction.s).all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let j0 = cost(controls)?;
    let j1 = cost(&controls.perturbed(direction, eps))?;
    Ok((j1 - j0) / eps)
}
