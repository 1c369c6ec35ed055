//! Problem construction from a configuration and the three study harnesses:
//! single run, grid-convergence study and entropy study.

use std::sync::Arc;
use std::thread;

use spfp::diagnostics::{l1_distance, rel_l1_error, Order, StudyReport};
use spfp::model::{bimodal_initial, ScalarFn};
use spfp::stepper::{run, Integrator, Observer, Record, RunOutcome, RunSettings, SolverSettings};
use spfp::{builtin_test1, builtin_test2, Diffusion, Drift, Field, Grid, Problem, QuadratureRule, WeightMode};

use crate::config::{ProblemKind, RunConfig, Weights};
use crate::error::{CliError, Result};

/// The configured problem on a grid with `points` points per direction.
pub fn build_problem(cfg: &RunConfig, points: usize) -> Result<Problem<f64>> {
    if points < 4 {
        return Err(CliError::config(format!("a grid needs at least 4 points, got {points}")));
    }
    let cells = points - 1;
    let p = &cfg.problem;
    Ok(match p.kind {
        ProblemKind::Test1 => builtin_test1(p.builtin_params(), cells)?,
        ProblemKind::Test2 => builtin_test2(p.builtin_params(), cells)?,
        ProblemKind::Custom => {
            let custom = p.custom.clone().ok_or_else(|| CliError::config("missing [problem.custom] table"))?;
            let grid = Grid::new(custom.domain[0], custom.domain[1], cells)?;
            let constant = |v: f64| -> ScalarFn<f64> { Arc::new(move |_, _| v) };
            let [d11, d12, d22] = custom.diffusion;
            let diffusion = Diffusion::new(constant(d11), constant(d12), constant(d22))
                .with_partials(constant(0.0), constant(0.0), constant(0.0), constant(0.0));
            let (a, b) = (custom.drift_matrix, custom.drift_offset);
            let drift = Drift::Linear(Arc::new(move |x, y| [a[0][0] * x + a[0][1] * y + b[0], a[1][0] * x + a[1][1] * y + b[1]]));
            Problem::new(grid, diffusion, drift, bimodal_initial(grid, p.c, p.mu)?)?
        }
    })
}

fn weight_mode(cfg: &RunConfig, rule: QuadratureRule) -> WeightMode {
    match cfg.scheme.weights {
        Weights::Quadrature => WeightMode::Quadrature(rule),
        Weights::Exact => WeightMode::Exact,
    }
}

fn settings(
    cfg: &RunConfig,
    points: usize,
    rule: QuadratureRule,
    integrator: Integrator,
    t_final: f64,
) -> Result<RunSettings<f64>> {
    let mut s = RunSettings::new(weight_mode(cfg, rule), integrator, cfg.policy(points, t_final)?);
    s.solver = SolverSettings { tol: cfg.scheme.solver_tol, max_iter: cfg.scheme.solver_max_iter };
    Ok(s)
}

/// Result of a single configured run.
pub struct SingleRun {
    pub outcome: RunOutcome<f64>,
    pub snapshots: Vec<(f64, Field<f64>)>,
}

/// Runs the configured scheme on `grid.points`, collecting diagnostics every
/// `output.stride` steps and snapshots at `output.snapshot_times`.
pub fn single_run(cfg: &RunConfig) -> Result<SingleRun> {
    let points = cfg.grid.points;
    let problem = build_problem(cfg, points)?;
    let mut s = settings(cfg, points, cfg.quadrature()?, cfg.integrator()?, cfg.time.t_final)?;
    s.stride = cfg.output.stride;
    s.output_times = cfg.output.snapshot_times.clone();
    let wanted = cfg.output.snapshot_times.clone();
    let mut snapshots = Vec::new();
    let mut grab = |r: &Record<'_, f64>| {
        if r.output && wanted.iter().any(|t| (*t - r.time).abs() <= 1e-12 * t.abs().max(1.0)) {
            snapshots.push((r.time, r.field.clone()));
        }
        Ok(())
    };
    let outcome = run(&problem, &s, &mut [&mut grab as &mut dyn Observer<f64>])?;
    Ok(SingleRun { outcome, snapshots })
}

/// Fields of one run at the requested times, in order.
pub struct TimedFields {
    pub report: StudyReport<f64>,
    pub fields: Vec<Field<f64>>,
}

/// Runs `problem` to the largest of `times` and returns the fields at each time.
pub fn fields_at_times(problem: &Problem<f64>, settings: &RunSettings<f64>, times: &[f64]) -> Result<TimedFields> {
    let mut s = settings.clone();
    s.output_times = times.to_vec();
    s.stride = usize::MAX;
    let mut grabbed: Vec<(f64, Field<f64>)> = Vec::new();
    let mut grab = |r: &Record<'_, f64>| {
        if r.output {
            grabbed.push((r.time, r.field.clone()));
        }
        Ok(())
    };
    let outcome = run(problem, &s, &mut [&mut grab as &mut dyn Observer<f64>])?;
    let fields = times
        .iter()
        .map(|t| {
            grabbed
                .iter()
                .find(|(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
                .map(|(_, f)| f.clone())
                .ok_or_else(|| CliError::config(format!("run never reached t = {t}")))
        })
        .collect::<Result<_>>()?;
    Ok(TimedFields { report: outcome.report, fields })
}

/// Observed order per successive pair of errors (grids refined by two).
pub fn observed_orders(errors: &[f64]) -> Vec<Order<f64>> {
    errors.windows(2).map(|w| Order::from_errors(w[0], w[1])).collect()
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub quadrature: QuadratureRule,
    pub integrator: Integrator,
    pub time: f64,
    /// Against the analytic equilibrium per grid, or successive-grid
    /// differences on the coarsest nodes when there is none.
    pub errors: Vec<f64>,
    pub orders: Vec<Order<f64>>,
    /// Largest relative mass drift over the runs behind this row.
    pub mass_drift: f64,
}

/// Runs every grid of `study.grids` (concurrently) for one scheme.
pub fn convergence_for(cfg: &RunConfig, rule: QuadratureRule, integrator: Integrator) -> Result<Vec<ConvergenceRow>> {
    let times = cfg.study.times.clone();
    let t_final = times.iter().copied().fold(0.0, f64::max);
    let runs: Vec<Result<(Option<Field<f64>>, TimedFields)>> = thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .study
            .grids
            .iter()
            .map(|&points| {
                let times = &times;
                scope.spawn(move || -> Result<_> {
                    let problem = build_problem(cfg, points)?;
                    let s = settings(cfg, points, rule, integrator, t_final)?;
                    let out = fields_at_times(&problem, &s, times)?;
                    Ok((problem.steady_state.clone(), out))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("study thread panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mass_drift = runs.iter().map(|(_, r)| r.report.mass_drift()).fold(0.0, f64::max);
    let analytic = runs.iter().all(|(f_inf, _)| f_inf.is_some());

    let mut rows = Vec::with_capacity(times.len());
    for (k, &time) in times.iter().enumerate() {
        let errors = if analytic {
            runs.iter()
                .map(|(f_inf, r)| rel_l1_error(&r.fields[k], f_inf.as_ref().expect("checked")))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let coarse = *runs[0].1.fields[k].grid();
            let restricted =
                runs.iter().map(|(_, r)| r.fields[k].restrict_to(&coarse)).collect::<Result<Vec<_>, _>>()?;
            restricted.windows(2).map(|w| l1_distance(&w[1], &w[0])).collect::<Result<Vec<_>, _>>()?
        };
        let orders = observed_orders(&errors);
        rows.push(ConvergenceRow { quadrature: rule, integrator, time, errors, orders, mass_drift });
    }
    Ok(rows)
}

/// Convergence rows for every configured rule and integrator.
pub fn convergence_study(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for integrator in cfg.study_integrators()? {
        for rule in cfg.study_quadratures()? {
            rows.extend(convergence_for(cfg, rule, integrator)?);
        }
    }
    Ok(rows)
}

/// Entropy history of one grid, one entry per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySeries {
    pub points: usize,
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    /// `NaN` where the density touches zero.
    pub dissipation: Vec<f64>,
    pub mass_drift: f64,
}

impl EntropySeries {
    /// Forward difference `(H(n+1) - H(n)) / dt`; `None` at the last step.
    pub fn dh_dt(&self, n: usize) -> Option<f64> {
        (n + 1 < self.times.len())
            .then(|| (self.entropy[n + 1] - self.entropy[n]) / (self.times[n + 1] - self.times[n]))
    }
}

/// Relative entropy and dissipation after every step, on each of `study.entropy_grids`.
pub fn entropy_study(cfg: &RunConfig) -> Result<Vec<EntropySeries>> {
    let rule = cfg.quadrature()?;
    let integrator = cfg.integrator()?;
    cfg.study
        .entropy_grids
        .iter()
        .map(|&points| {
            let problem = build_problem(cfg, points)?;
            if problem.steady_state.is_none() {
                return Err(CliError::config("the entropy study needs a problem with an analytic equilibrium (test1)"));
            }
            let s = settings(cfg, points, rule, integrator, cfg.time.t_final)?;
            let report = run(&problem, &s, &mut [])?.report;
            Ok(EntropySeries {
                points,
                mass_drift: report.mass_drift(),
                times: report.times,
                entropy: report.entropy.expect("reference present"),
                dissipation: report.dissipation.expect("reference present"),
            })
        })
        .collect()
}
