//! Time-dependent therapy schedules and their projection onto the
//! admissible set: box bounds `0 ≤ c, s ≤ 1` plus the budget
//! `|Ω|·Δt·Σ c_n ≤ c_max` on the cytotoxic control.

use crate::error::{Error, Result};
use crate::time::TimeGrid;

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// Piecewise-constant controls, one value per step interval `(t_n, t_{n+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub grid: TimeGrid,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

impl ControlSchedule {
    pub fn new(grid: TimeGrid, c: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        let n = grid.n_steps();
        if c.len() != n || s.len() != n {
            return Err(Error::InvalidArgument(format!(
                "schedule lengths ({}, {}) do not match {n} time steps",
                c.len(),
                s.len()
            )));
        }
        Ok(Self { grid, c, s })
    }

    pub fn constant(grid: TimeGrid, c: f64, s: f64) -> Self {
        let n = grid.n_steps();
        Self {
            grid,
            c: vec![c; n],
            s: vec![s; n],
        }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, 0.0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// `self + eps·direction`, without projection.
    pub fn perturbed(&self, direction: &ControlSchedule, eps: f64) -> Self {
        Self {
            grid: self.grid,
            c: self.c.iter().zip(&direction.c).map(|(a, d)| a + eps * d).collect(),
            s: self.s.iter().zip(&direction.s).map(|(a, d)| a + eps * d).collect(),
        }
    }

    /// Box bounds hold and the budget is met up to `1e-10`.
    pub fn is_admissible(&self, set: &AdmissibleSet) -> bool {
        let in_box = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        in_box(&self.c)
            && in_box(&self.s)
            && set.omega_area * self.grid.dt() * self.c.iter().sum::<f64>() <= set.c_max + 1e-10
    }
}

/// Budget on the time–space integral of the cytotoxic control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibleSet {
    pub c_max: f64,
    /// |Ω|, the factor between the time integral of a spatially constant
    /// control and its space–time integral.
    pub omega_area: f64,
}

impl AdmissibleSet {
    pub fn new(c_max: f64, omega_area: f64) -> Result<Self> {
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("c_max must be positive, got {c_max}")));
        }
        if !(omega_area > 0.0 && omega_area.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain area must be positive, got {omega_area}"
            )));
        }
        Ok(Self { c_max, omega_area })
    }

    /// Checks `c_max < T·|Ω|`, without which the budget can never bind.
    pub fn check_binding(&self, grid: &TimeGrid) -> Result<()> {
        if self.c_max >= grid.t_final() * self.omega_area {
            return Err(Error::InvalidArgument(format!(
                "c_max = {} is not below T·|Ω| = {}",
                self.c_max,
                grid.t_final() * self.omega_area
            )));
        }
        Ok(())
    }
}

/// `Δt·Σ c_n`, exact for a piecewise-constant schedule.
pub fn evaluate_budget(c: &[f64], grid: &TimeGrid) -> Result<f64> {
    if c.len() != grid.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "{} control values for {} time steps",
            c.len(),
            grid.n_steps()
        )));
    }
    Ok(grid.dt() * c.iter().sum::<f64>())
}

/// Entrywise `min(max(v, 0), 1)`.
pub fn clamp_box(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub values: Vec<f64>,
    /// Multiplier of the budget constraint; zero when it is inactive.
    pub multiplier: f64,
}

/// Projection onto `{0 ≤ v ≤ upper, Σ measure_i·weight_i·v_i ≤ bound}` in the
/// `measure`-weighted Euclidean norm.
///
/// If clamping alone meets the bound it is the answer; otherwise the result
/// is `clamp(h − γ·weight, 0, upper)` with `γ > 0` found by bisection so that
/// the constraint holds with equality.
pub fn project_weighted(
    h: &[f64],
    weight: &[f64],
    measure: &[f64],
    upper: f64,
    bound: f64,
) -> Result<Projection> {
    if weight.len() != h.len() || measure.len() != h.len() {
        return Err(Error::InvalidArgument("projection inputs differ in length".into()));
    }
    if !(bound > 0.0) || !(upper > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "projection needs positive bounds, got upper = {upper}, bound = {bound}"
        )));
    }
    if weight.iter().chain(measure).any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("weights and measure must be positive".into()));
    }
    let shifted = |gamma: f64| -> Vec<f64> {
        h.iter()
            .zip(weight)
            .map(|(&x, &w)| (x - gamma * w).clamp(0.0, upper))
            .collect()
    };
    let integral = |v: &[f64]| -> f64 {
        v.iter()
            .zip(weight)
            .zip(measure)
            .map(|((x, w), m)| x * w * m)
            .sum()
    };

    let clamped = shifted(0.0);
    if integral(&clamped) <= bound {
        return Ok(Projection {
            values: clamped,
            multiplier: 0.0,
        });
    }

    let mut lo = 0.0;
    let mut hi = h
        .iter()
        .zip(weight)
        .map(|(x, w)| x / w)
        .fold(0.0f64, f64::max);
    let (mut g_lo, mut g_hi) = (integral(&clamped) - bound, -bound);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let v = shifted(mid);
        let g = integral(&v) - bound;
        debug_assert!(
            g <= g_lo + 1e-12 && g >= g_hi - 1e-12,
            "budget map not monotone in the multiplier"
        );
        if g.abs() <= BISECTION_TOL {
            return Ok(Projection {
                values: v,
                multiplier: mid,
            });
        }
        if g > 0.0 {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    // the bracket collapsed without meeting the tolerance: accept the
    // feasible side if it is close enough
    let v = shifted(hi);
    let g = integral(&v) - bound;
    if g.abs() <= 1e-10 {
        return Ok(Projection {
            values: v,
            multiplier: hi,
        });
    }
    Err(Error::Solver {
        iterations: BISECTION_MAX_ITER,
        residual: g.abs(),
    })
}

/// Projects a cytotoxic schedule onto the box and the budget.
///
/// Returns the projected values and `λ`, with the projection equal to
/// `clamp(c − λ)`.
pub fn project_budget(c: &[f64], set: &AdmissibleSet, grid: &TimeGrid) -> Result<Projection> {
    if c.len() != grid.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "{} control values for {} time steps",
            c.len(),
            grid.n_steps()
        )));
    }
    if !(set.c_max > 0.0) {
        return Err(Error::InvalidArgument(format!("c_max must be positive, got {}", set.c_max)));
    }
    let n = c.len();
    project_weighted(
        c,
        &vec![1.0; n],
        &vec![grid.dt() * set.omega_area; n],
        1.0,
        set.c_max,
    )
}

/// Projects both components of a schedule onto the admissible set.
pub fn project_schedule(
    schedule: &ControlSchedule,
    set: &AdmissibleSet,
) -> Result<(ControlSchedule, f64)> {
    let p = project_budget(&schedule.c, set, &schedule.grid)?;
    Ok((
        ControlSchedule {
            grid: schedule.grid,
            c: p.values,
            s: clamp_box(&schedule.s),
        },
        p.multiplier,
    ))
}
