//! The runner verbs. Each writes its artifacts under `cfg.out` and finishes
//! with a MANIFEST, also when the run fails part way.

use oxytaxis_core::adjoint::run_adjoint_with;
use oxytaxis_core::control::{evaluate_budget, ControlSchedule};
use oxytaxis_core::cost::{
    probe_has_local_minimum, reduced_gradient, sensitivity_derivative, ControlKind, ControlProblem, ProbePoint,
};
use oxytaxis_core::fem::{FeFunction, FemSpace};
use oxytaxis_core::model::{default_satellites, initial_oxygen, initial_tumor};
use oxytaxis_core::optimizer::{optimize, IterationRecord, OptimizationResult};
use oxytaxis_core::sensitivity::run_sensitivity_with;
use oxytaxis_core::state::{observables, run_state_with, StateTrajectory};
use oxytaxis_core::verification::{spatial_study, temporal_study, ConvergenceStudy};
use oxytaxis_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, InitialData};
use crate::output::{num, observable_row, OutputDir, OBSERVABLE_HEADER};
use crate::CliError;

/// Relative tolerance under which probe costs count as equal. The budget
/// projection is solved to about 1e-12, which moves `J` by less than this.
pub const PROBE_TIE_TOL: f64 = 1e-9;

struct Prepared {
    space: FemSpace,
    u0: FeFunction,
    sigma0: FeFunction,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let space = FemSpace::new(cfg.mesh.build()?);
    let (u0, sigma0) = match cfg.initial {
        InitialData::Tumor => {
            let satellites = cfg.satellites.unwrap_or_else(|| default_satellites(&space));
            (initial_tumor(&space, cfg.init)?, initial_oxygen(&space, &cfg.params, satellites, cfg.init)?)
        }
        InitialData::Equilibrium => {
            (FeFunction::zeros(space.dim()), FeFunction::constant(space.dim(), cfg.params.beta))
        }
    };
    Ok(Prepared { space, u0, sigma0 })
}

fn problem<'a>(cfg: &ExperimentConfig, p: &'a Prepared) -> Result<ControlProblem<'a>, CliError> {
    let prob = ControlProblem::new(
        &p.space,
        cfg.params,
        cfg.weights,
        cfg.c_max,
        cfg.grid,
        p.u0.clone(),
        p.sigma0.clone(),
    )?;
    prob.set.check_binding(&cfg.grid)?;
    Ok(prob)
}

/// Runs `body`, then writes the MANIFEST with the outcome.
fn with_manifest<T>(
    cfg: &ExperimentConfig,
    body: impl FnOnce(&mut OutputDir) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let mut out = OutputDir::create(&cfg.out)?;
    match body(&mut out) {
        Ok(v) => {
            out.finish("ok")?;
            Ok(v)
        }
        Err(e) => {
            // the original error matters more than a failed manifest
            let _ = out.finish(&format!("failed: {}", e.to_string().replace('\n', " ")));
            Err(e)
        }
    }
}

fn solve(cfg: &ExperimentConfig, p: &Prepared, controls: &ControlSchedule) -> Result<StateTrajectory, CliError> {
    Ok(run_state_with(&p.space, &p.u0, &p.sigma0, controls, &cfg.params, &Default::default())?)
}

pub fn run_uncontrolled(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = prepare(cfg)?;
    with_manifest(cfg, |out| {
        let traj = solve(cfg, &p, &ControlSchedule::zeros(cfg.grid))?;
        let obs = observables(&p.space, &traj, cfg.weights.sigma_q);
        out.csv("observables.csv", &OBSERVABLE_HEADER, obs.iter().map(observable_row))?;
        let snaps = out.snapshots("snapshots/state", p.space.mesh(), &traj, cfg.stride)?;
        let last = obs.last().expect("at least the initial state");
        Ok(format!(
            "uncontrolled run: {} steps, {snaps} snapshots, final u_sq {:.6}, max_u {:.6}",
            cfg.grid.n_steps(),
            last.u_sq,
            last.max_u
        ))
    })
}

fn history_rows(history: &[IterationRecord]) -> impl Iterator<Item = Vec<String>> + '_ {
    history.iter().map(|h| {
        vec![
            h.k.to_string(),
            num(h.cost),
            h.delta.map(num).unwrap_or_default(),
            num(h.lambda),
            num(h.budget),
        ]
    })
}

const HISTORY_HEADER: [&str; 5] = ["k", "J", "delta", "lambda", "budget"];

fn run_optimization(
    cfg: &ExperimentConfig,
    prob: &ControlProblem<'_>,
    out: &mut OutputDir,
) -> Result<OptimizationResult, CliError> {
    let initial = ControlSchedule::constant(cfg.grid, cfg.c0, cfg.s0);
    match optimize(prob, &initial, &cfg.adam) {
        Ok(r) => {
            out.csv("history.csv", &HISTORY_HEADER, history_rows(&r.history))?;
            Ok(r)
        }
        Err(e) => {
            if let Error::Optimization { history, .. } = &e {
                out.csv("history.csv", &HISTORY_HEADER, history_rows(history))?;
            }
            Err(e.into())
        }
    }
}

fn probe_rows<'a>(label: &'static str, pts: &'a [ProbePoint]) -> impl Iterator<Item = Vec<String>> + 'a {
    pts.iter().map(move |pt| vec![label.to_owned(), num(pt.pert), num(pt.cost)])
}

fn kind_label(kind: ControlKind) -> &'static str {
    match kind {
        ControlKind::Cytotoxic => "c",
        ControlKind::Antiangiogenic => "s",
    }
}

pub fn run_control(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = prepare(cfg)?;
    let prob = problem(cfg, &p)?;
    with_manifest(cfg, |out| {
        let r = run_optimization(cfg, &prob, out)?;
        let grid = cfg.grid;
        out.csv(
            "controls.csv",
            &["t", "c_initial", "c_optimal", "s_initial", "s_optimal"],
            (0..grid.n_steps()).map(|k| {
                vec![
                    num(grid.time(k + 1)),
                    num(r.initial.c[k]),
                    num(r.best.c[k]),
                    num(r.initial.s[k]),
                    num(r.best.s[k]),
                ]
            }),
        )?;

        let unc = solve(cfg, &p, &ControlSchedule::zeros(grid))?;
        let opt = prob.solve_state(&r.best)?;
        let ou = observables(&p.space, &unc, cfg.weights.sigma_q);
        let oo = observables(&p.space, &opt, cfg.weights.sigma_q);
        out.csv(
            "comparison.csv",
            &[
                "t",
                "u_sq_uncontrolled",
                "u_sq_optimal",
                "max_u_uncontrolled",
                "max_u_optimal",
                "sigma_dev_sq_uncontrolled",
                "sigma_dev_sq_optimal",
                "volume_uncontrolled",
                "volume_optimal",
            ],
            ou.iter().zip(&oo).map(|(a, b)| {
                vec![
                    num(a.t),
                    num(a.u_sq),
                    num(b.u_sq),
                    num(a.max_u),
                    num(b.max_u),
                    num(a.sigma_dev_sq),
                    num(b.sigma_dev_sq),
                    num(a.volume),
                    num(b.volume),
                ]
            }),
        )?;

        let mut rows = Vec::new();
        let mut minima = Vec::new();
        for kind in [ControlKind::Cytotoxic, ControlKind::Antiangiogenic] {
            let pts = prob.probe(&r.best, kind, &cfg.perts)?;
            minima.push(format!(
                "{} probe minimum at or next to 0: {}",
                kind_label(kind),
                probe_has_local_minimum(&pts, PROBE_TIE_TOL)
            ));
            rows.extend(probe_rows(kind_label(kind), &pts));
        }
        out.csv("probe.csv", &["control", "pert", "J"], rows)?;
        out.snapshots("snapshots/optimal", p.space.mesh(), &opt, cfg.stride)?;

        Ok(format!(
            "optimization {:?} after {} iterations: J {:.8} -> {:.8}, budget {:.6}; {}",
            r.stop,
            r.history.len(),
            r.history[0].cost,
            r.best_cost,
            evaluate_budget(&r.best.c, &grid)? * prob.set.omega_area,
            minima.join("; ")
        ))
    })
}

pub fn probe(cfg: &ExperimentConfig, kind: ControlKind, perts: &[f64]) -> Result<String, CliError> {
    let p = prepare(cfg)?;
    let prob = problem(cfg, &p)?;
    with_manifest(cfg, |out| {
        let r = run_optimization(cfg, &prob, out)?;
        let pts = prob.probe(&r.best, kind, perts)?;
        out.csv("probe.csv", &["control", "pert", "J"], probe_rows(kind_label(kind), &pts))?;
        Ok(format!(
            "probe of {} over {} perturbations around J = {:.8}: minimum at or next to 0: {}",
            kind_label(kind),
            pts.len(),
            r.best_cost,
            probe_has_local_minimum(&pts, PROBE_TIE_TOL)
        ))
    })
}

fn random_schedule(rng: &mut ChaCha8Rng, cfg: &ExperimentConfig, lo: f64, hi: f64) -> ControlSchedule {
    let n = cfg.grid.n_steps();
    let c = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let s = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    ControlSchedule::new(cfg.grid, c, s).expect("lengths match the grid")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn check_gradient(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = prepare(cfg)?;
    let prob = problem(cfg, &p)?;
    with_manifest(cfg, |out| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let controls = random_schedule(&mut rng, cfg, 0.1, 0.9);
        let states = prob.solve_state(&controls)?;
        let adj = run_adjoint_with(&p.space, &states, &controls, &cfg.weights, &cfg.params, &prob.solver)?;
        let grad = reduced_gradient(&p.space, &states, &adj, &cfg.weights, &cfg.params)?;
        let mut fd_rows = Vec::new();
        let mut dual_rows = Vec::new();
        let mut worst_dual: f64 = 0.0;
        let mut best_fd = f64::INFINITY;
        for d in 0..cfg.check_directions {
            let dir = random_schedule(&mut rng, cfg, -1.0, 1.0);
            let adjoint = grad.directional(&dir);
            let sens = run_sensitivity_with(&p.space, &states, &controls, &dir, &cfg.params, &prob.solver)?;
            let via_sens = sensitivity_derivative(&p.space, &states, &sens, &dir, &cfg.weights)?;
            let dual = rel(adjoint, via_sens);
            worst_dual = worst_dual.max(dual);
            dual_rows.push(vec![d.to_string(), num(via_sens), num(adjoint), num(dual)]);
            for &eps in &cfg.check_eps {
                let fd = prob.fd_gradient_oracle(&controls, &dir, eps)?;
                let e = rel(fd, adjoint);
                best_fd = best_fd.min(e);
                fd_rows.push(vec![d.to_string(), num(eps), num(fd), num(adjoint), num(e)]);
            }
        }
        out.csv("gradient_check.csv", &["direction", "eps", "fd", "adjoint", "rel_error"], fd_rows)?;
        out.csv("duality.csv", &["direction", "sensitivity", "adjoint", "rel_error"], dual_rows)?;
        Ok(format!(
            "gradient check over {} directions: worst duality mismatch {worst_dual:.3e}, best finite-difference error {best_fd:.3e}",
            cfg.check_directions
        ))
    })
}

fn study_rows(label: &'static str, s: &ConvergenceStudy) -> Vec<Vec<String>> {
    (0..s.sizes.len())
        .map(|i| {
            let order = if i == 0 { String::new() } else { num(s.orders[i - 1]) };
            vec![label.to_owned(), num(s.sizes[i]), num(s.errors[i]), order]
        })
        .collect()
}

pub fn convergence(cfg: &ExperimentConfig) -> Result<String, CliError> {
    with_manifest(cfg, |out| {
        let c = &cfg.convergence;
        let t = temporal_study(&cfg.params, c.mesh_n, c.t_final, &c.dts)?;
        let s = spatial_study(&cfg.params, &c.spatial_meshes, c.spatial_dt, c.spatial_steps)?;
        let mut rows = study_rows("temporal", &t);
        rows.extend(study_rows("spatial", &s));
        out.csv("convergence.csv", &["study", "size", "error", "order"], rows)?;
        let fmt = |v: &[f64]| v.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ");
        Ok(format!(
            "temporal orders [{}], spatial orders [{}]",
            fmt(&t.orders),
            fmt(&s.orders)
        ))
    })
}
