//! Manufactured-solution convergence studies for the oxygen sub-problem.
//!
//! The tumor density is prescribed, and a source term is added to the
//! oxygen equation so that a chosen smooth `σ` solves it exactly. The
//! discrete problem is the production oxygen step plus the assembled
//! source.

use crate::error::{Error, Result};
use crate::fem::{solve_sparse_with, FeFunction, FemSpace, SolverHint, SolverOptions};
use crate::mesh::generate_unit_square;
use crate::model::ModelParams;
use crate::state::{consumption_weight, michaelis_denominator, sigma_matrix, sigma_rhs};

/// A smooth oxygen field with the derivatives needed to build its source,
/// together with the prescribed tumor density.
pub trait ManufacturedOxygen {
    fn sigma(&self, x: [f64; 2], t: f64) -> f64;
    fn sigma_t(&self, x: [f64; 2], t: f64) -> f64;
    fn laplacian(&self, x: [f64; 2], t: f64) -> f64;
    fn u(&self, x: [f64; 2], t: f64) -> f64;
}

/// `σ = 1 + a(t) + ε(1 + t) cos πx cos πy` with `a(t) = 0.5 sin 4t`, and
/// `u = (1 + t)(1 + x²y²)`. The cosine mode satisfies the no-flux condition
/// on the unit square; the small `ε` keeps the spatial error well below the
/// temporal one.
#[derive(Debug, Clone, Copy)]
pub struct TimeDominated {
    pub eps: f64,
}

impl ManufacturedOxygen for TimeDominated {
    fn sigma(&self, x: [f64; 2], t: f64) -> f64 {
        1.0 + 0.5 * (4.0 * t).sin() + self.eps * (1.0 + t) * mode(x)
    }

    fn sigma_t(&self, x: [f64; 2], t: f64) -> f64 {
        2.0 * (4.0 * t).cos() + self.eps * mode(x)
    }

    fn laplacian(&self, x: [f64; 2], t: f64) -> f64 {
        -2.0 * std::f64::consts::PI.powi(2) * self.eps * (1.0 + t) * mode(x)
    }

    fn u(&self, x: [f64; 2], t: f64) -> f64 {
        (1.0 + t) * (1.0 + x[0] * x[0] * x[1] * x[1])
    }
}

/// Steady `σ = 1 + ½ cos πx cos πy` with a time-dependent tumor density.
/// The backward difference and the lagged Michaelis denominator are then
/// exact, so only the spatial error remains.
#[derive(Debug, Clone, Copy)]
pub struct SpaceDominated;

impl ManufacturedOxygen for SpaceDominated {
    fn sigma(&self, x: [f64; 2], _t: f64) -> f64 {
        1.0 + 0.5 * mode(x)
    }

    fn sigma_t(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }

    fn laplacian(&self, x: [f64; 2], _t: f64) -> f64 {
        -std::f64::consts::PI.powi(2) * mode(x)
    }

    fn u(&self, x: [f64; 2], t: f64) -> f64 {
        (1.0 + t) * (1.0 + x[0] * x[0] * x[1] * x[1])
    }
}

fn mode(x: [f64; 2]) -> f64 {
    use std::f64::consts::PI;
    (PI * x[0]).cos() * (PI * x[1]).cos()
}

/// Seven-point rule, exact for polynomials of degree five.
const RULE: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

/// `‖f_h − f‖_{L²}` by a quadrature of higher order than the P1 error.
pub fn l2_error(space: &FemSpace, f_h: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mesh = space.mesh();
    let v = mesh.vertices();
    let mut acc = 0.0;
    for (e, t) in mesh.triangles().iter().enumerate() {
        let area = space.geometry(e).area;
        for (bary, w) in RULE {
            let mut x = [0.0; 2];
            let mut fh = 0.0;
            for a in 0..3 {
                x[0] += bary[a] * v[t[a]][0];
                x[1] += bary[a] * v[t[a]][1];
                fh += bary[a] * f_h[t[a]];
            }
            acc += area * w * (fh - exact(x)).powi(2);
        }
    }
    acc.sqrt()
}

/// Runs the oxygen scheme with source and returns the L² error at `t = n·dt`.
pub fn oxygen_mms_error(
    space: &FemSpace,
    params: &ModelParams,
    field: &dyn ManufacturedOxygen,
    s: f64,
    dt: f64,
    n_steps: usize,
) -> Result<f64> {
    let opts = SolverOptions {
        rtol: 1e-12,
        max_iter: None,
    };
    let mut sigma = space.interpolate(|x| field.sigma(x, 0.0));
    for n in 1..=n_steps {
        let t = n as f64 * dt;
        let u = space.interpolate(|x| field.u(x, t));
        let source = space.quad_eval(|_, _, x| {
            let sg = field.sigma(x, t);
            let uu = field.u(x, t);
            field.sigma_t(x, t) - params.d_sigma * field.laplacian(x, t)
                - params.gamma * (params.beta - sg)
                + params.a_ox * uu * sg / (params.k_ox + sg)
                - (1.0 - s) * params.s_c * uu
        });
        let step = |e: Error| e.at_step(n);
        let denom = michaelis_denominator(params, &space.to_quad(&sigma)).map_err(step)?;
        let b = sigma_matrix(space, params, dt, &consumption_weight(params, &space.to_quad(&u), &denom))
            .map_err(step)?;
        let mut rhs = sigma_rhs(space, params, dt, &sigma, &u, s);
        for (r, f) in rhs.iter_mut().zip(space.load(&source).map_err(step)?) {
            *r += f;
        }
        let next = solve_sparse_with(&b, &rhs, SolverHint::Spd, &opts, Some(&sigma)).map_err(step)?;
        sigma = FeFunction::new(next);
    }
    let t = n_steps as f64 * dt;
    Ok(l2_error(space, &sigma, |x| field.sigma(x, t)))
}

/// Errors at successive refinements and the observed orders between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// Step size or mesh width per level.
    pub sizes: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`.
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn from_errors(sizes: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = sizes
            .windows(2)
            .zip(errors.windows(2))
            .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        Self {
            sizes,
            errors,
            orders,
        }
    }
}

/// Temporal study on a fixed `mesh_n × mesh_n` square up to `t_final`.
pub fn temporal_study(
    params: &ModelParams,
    mesh_n: usize,
    t_final: f64,
    dts: &[f64],
) -> Result<ConvergenceStudy> {
    let space = FemSpace::new(generate_unit_square(mesh_n, mesh_n)?);
    let field = TimeDominated { eps: 0.05 };
    let mut errors = Vec::with_capacity(dts.len());
    for &dt in dts {
        let n = (t_final / dt).round() as usize;
        if ((n as f64) * dt - t_final).abs() > 1e-9 * t_final {
            return Err(Error::InvalidArgument(format!(
                "time step {dt} does not divide the horizon {t_final}"
            )));
        }
        errors.push(oxygen_mms_error(&space, params, &field, 0.3, dt, n)?);
    }
    Ok(ConvergenceStudy::from_errors(dts.to_vec(), errors))
}

/// Spatial study over `n × n` squares with a fixed step.
pub fn spatial_study(
    params: &ModelParams,
    mesh_ns: &[usize],
    dt: f64,
    n_steps: usize,
) -> Result<ConvergenceStudy> {
    let mut errors = Vec::with_capacity(mesh_ns.len());
    for &n in mesh_ns {
        let space = FemSpace::new(generate_unit_square(n, n)?);
        errors.push(oxygen_mms_error(&space, params, &SpaceDominated, 0.3, dt, n_steps)?);
    }
    let sizes = mesh_ns.iter().map(|&n| 1.0 / n as f64).collect();
    Ok(ConvergenceStudy::from_errors(sizes, errors))
}
