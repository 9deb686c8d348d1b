//! Projected Adam descent on the reduced cost.
//!
//! Each iteration solves the state and adjoint, forms the gradient, takes
//! an Adam step of length `α_k = α₀·decayᵏ` and projects: `c` onto the box
//! and budget, `s` onto the box. The loop stops once `𝒩` consecutive cost
//! changes `|J_k − J_{k−1}|` fall below `tol`, or after `max_iter`
//! evaluations, and returns the cheapest iterate seen.

use crate::control::{clamp_box, evaluate_budget, project_budget, ControlSchedule};
use crate::cost::ControlProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub alpha0: f64,
    /// Multiplicative step decay per iteration.
    pub decay: f64,
    pub tol: f64,
    /// Consecutive small cost changes required to stop.
    pub n_stable: usize,
    /// Cap on cost evaluations.
    pub max_iter: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            alpha0: 0.1,
            decay: 1.0,
            tol: 1e-6,
            n_stable: 5,
            max_iter: 200,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "moment decays must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if !(self.epsilon > 0.0) || !(self.alpha0 > 0.0) || !(self.tol > 0.0) {
            return bad("epsilon, alpha0 and tol must be positive".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("step decay must lie in (0, 1], got {}", self.decay));
        }
        if self.n_stable == 0 {
            return bad("the stability window must be at least one iteration".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least one".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_c: Vec<f64>,
    pub v_c: Vec<f64>,
    pub m_s: Vec<f64>,
    pub v_s: Vec<f64>,
    /// Completed `(c, s)` updates.
    pub k: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m_c: vec![0.0; n],
            v_c: vec![0.0; n],
            m_s: vec![0.0; n],
            v_s: vec![0.0; n],
            k: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    C,
    S,
}

/// Moment update and bias-corrected direction for one control.
///
/// The counter `k` is shared by both controls and is not advanced here;
/// [`adam_step`] advances it once per `(c, s)` update.
pub fn adam_direction(
    state: &AdamState,
    grad: &[f64],
    cfg: &AdamConfig,
    which: Which,
) -> Result<(Vec<f64>, AdamState)> {
    let mut next = state.clone();
    let (m, v) = match which {
        Which::C => (&mut next.m_c, &mut next.v_c),
        Which::S => (&mut next.m_s, &mut next.v_s),
    };
    if grad.len() != m.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient of length {} for moments of length {}",
            grad.len(),
            m.len()
        )));
    }
    let power = state.k as i32 + 1;
    let c1 = 1.0 - cfg.beta1.powi(power);
    let c2 = 1.0 - cfg.beta2.powi(power);
    let mut dir = Vec::with_capacity(grad.len());
    for i in 0..grad.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        dir.push(-m_hat / (v_hat.sqrt() + cfg.epsilon));
    }
    Ok((dir, next))
}

/// Directions for both controls; advances the shared counter.
pub fn adam_step(
    state: &AdamState,
    d_c: &[f64],
    d_s: &[f64],
    cfg: &AdamConfig,
) -> Result<(Vec<f64>, Vec<f64>, AdamState)> {
    let (p_c, st) = adam_direction(state, d_c, cfg, Which::C)?;
    let (p_s, mut st) = adam_direction(&st, d_s, cfg, Which::S)?;
    st.k += 1;
    Ok((p_c, p_s, st))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The cost stabilised.
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    /// `|J_k − J_{k−1}|`; `None` on the first iteration.
    pub delta: Option<f64>,
    pub grad_norm: f64,
    /// Budget multiplier of the projection that produced this iterate.
    pub lambda: f64,
    pub budget: f64,
    /// Set on the last record when the loop stopped there.
    pub stop: Option<StopReason>,
    pub best_so_far: f64,
    /// The iterate itself.
    pub controls: ControlSchedule,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub initial: ControlSchedule,
    pub best: ControlSchedule,
    pub best_cost: f64,
    pub best_iteration: usize,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
}

pub fn optimize(
    problem: &ControlProblem<'_>,
    initial: &ControlSchedule,
    cfg: &AdamConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let grid = problem.grid;
    if initial.grid != grid {
        return Err(Error::InvalidArgument("initial controls use a different time grid".into()));
    }
    let first = project_budget(&initial.c, &problem.set, &grid)?;
    let mut c = first.values;
    let mut lambda = first.multiplier;
    let mut s = clamp_box(&initial.s);
    let initial = ControlSchedule::new(grid, c.clone(), s.clone())?;

    let mut adam = AdamState::new(grid.n_steps());
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, usize, ControlSchedule)> = None;
    let mut stable = 0usize;

    for k in 0..cfg.max_iter {
        let controls = ControlSchedule::new(grid, c.clone(), s.clone())?;
        debug_assert!(controls.is_admissible(&problem.set));
        let eval = problem.evaluate(&controls).map_err(|e| Error::Optimization {
            iteration: k,
            source: Box::new(e),
            history: history.clone(),
        })?;
        let cost = eval.cost;
        let delta = history.last().map(|r| (cost - r.cost).abs());
        if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
            best = Some((cost, k, controls.clone()));
        }
        stable = match delta {
            Some(d) if d < cfg.tol => stable + 1,
            _ => 0,
        };
        let stop = if stable >= cfg.n_stable {
            Some(StopReason::Converged)
        } else if k + 1 == cfg.max_iter {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        history.push(IterationRecord {
            k,
            cost,
            delta,
            grad_norm: eval.gradient.norm(),
            lambda,
            budget: evaluate_budget(&c, &grid)? * problem.set.omega_area,
            stop,
            best_so_far: best.as_ref().map_or(cost, |b| b.0),
            controls,
        });
        if let Some(reason) = stop {
            let (best_cost, best_iteration, best) = best.expect("at least one iterate");
            return Ok(OptimizationResult {
                initial,
                best,
                best_cost,
                best_iteration,
                history,
                stop: reason,
            });
        }

        let (p_c, p_s, next) = adam_step(&adam, &eval.gradient.d_c, &eval.gradient.d_s, cfg)?;
        adam = next;
        let alpha = cfg.alpha0 * cfg.decay.powi(k as i32);
        let tentative: Vec<f64> = c.iter().zip(&p_c).map(|(x, p)| x + alpha * p).collect();
        let projected = project_budget(&tentative, &problem.set, &grid)?;
        c = projected.values;
        lambda = projected.multiplier;
        s = clamp_box(&s.iter().zip(&p_s).map(|(x, p)| x + alpha * p).collect::<Vec<_>>());
    }
    unreachable!("the loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_gives_zero_direction() {
        let st = AdamState::new(3);
        let (d, next) = adam_direction(&st, &[0.0; 3], &AdamConfig::default(), Which::C).unwrap();
        assert_eq!(d, vec![0.0; 3]);
        assert_eq!(next.k, 0);
    }

    #[test]
    fn first_step_is_a_signed_unit_step() {
        let cfg = AdamConfig::default();
        let st = AdamState::new(4);
        let g = [2.0, -0.003, 150.0, -7.5];
        let (d, _) = adam_direction(&st, &g, &cfg, Which::S).unwrap();
        // m̂ = g and v̂ = g², so the direction is −g/(|g| + ε)
        for (di, gi) in d.iter().zip(&g) {
            assert!((di + gi / (gi.abs() + cfg.epsilon)).abs() < 1e-12);
        }
    }

    #[test]
    fn counter_advances_once_per_pair() {
        let cfg = AdamConfig::default();
        let (_, _, st) = adam_step(&AdamState::new(2), &[1.0, 2.0], &[3.0, 4.0], &cfg).unwrap();
        assert_eq!(st.k, 1);
        assert!(st.v_c.iter().chain(&st.v_s).all(|v| *v >= 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { n_stable: 0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
    }
}
