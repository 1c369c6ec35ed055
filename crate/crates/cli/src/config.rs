//! Run configuration, read from TOML. `N` (`grid.points`) counts grid points
//! per direction, so `N = 81` means 80 cells.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spfp::stepper::{Integrator, StepMode, TimeStepPolicy};
use spfp::{BuiltinParams, QuadratureRule};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// Gradient drift with analytic equilibrium.
    Test1,
    /// Mean-field alignment with `P = 1`.
    Test2,
    /// Constant diffusion and affine drift from `[problem.custom]`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomProblem {
    /// Computational square `[a, b]^2`.
    pub domain: [f64; 2],
    /// Constant `(d11, d12, d22)`.
    pub diffusion: [f64; 3],
    /// `B(w) = A w + b`, `A` given row by row.
    pub drift_matrix: [[f64; 2]; 2],
    pub drift_offset: [f64; 2],
}

impl Default for CustomProblem {
    fn default() -> Self {
        Self { domain: [-1.0, 1.0], diffusion: [0.5, 0.0, 0.5], drift_matrix: [[1.0, 0.0], [0.0, 1.0]], drift_offset: [0.0; 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Variances `sigma1^2`, `sigma2^2`.
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub rho: f64,
    pub d: f64,
    /// Width and offset of the bimodal initial datum.
    pub c: f64,
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomProblem>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { kind: ProblemKind::Test1, sigma1_sq: 1.0, sigma2_sq: 1.0, rho: 0.9, d: 12.5, c: 30.0, mu: 0.5, custom: None }
    }
}

impl ProblemConfig {
    pub fn builtin_params(&self) -> BuiltinParams<f64> {
        BuiltinParams {
            sigma1: self.sigma1_sq.sqrt(),
            sigma2: self.sigma2_sq.sqrt(),
            rho: self.rho,
            d: self.d,
            c: self.c,
            mu: self.mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 81 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Quadrature,
    /// Weights from the known equilibrium (test1 only).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub quadrature: String,
    pub integrator: String,
    pub weights: Weights,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            quadrature: "gauss8".into(),
            integrator: "si1".into(),
            weights: Weights::Quadrature,
            solver_tol: 1e-12,
            solver_max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicy {
    /// `time.dt`.
    Fixed,
    /// `dw^2 / (10 sigma1^2 dw + 10)`.
    Table1,
    /// `dw / (20 max(sigma1^2, sigma2^2))`.
    Fig1,
    /// `time.safety` times the explicit positivity bound, every step.
    ExplicitCfl,
    /// `time.safety` times the semi-implicit positivity bound, every step.
    SemiImplicitCfl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt_policy: DtPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub safety: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_final: 80.0, dt_policy: DtPolicy::Fig1, dt: None, safety: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Diagnostics every `stride` steps.
    pub stride: usize,
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stride: 100, snapshot_times: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Point counts of the convergence study, each grid a refinement by two.
    pub grids: Vec<usize>,
    pub times: Vec<f64>,
    /// Rules compared by `convergence`; empty means `scheme.quadrature` only.
    pub quadratures: Vec<String>,
    /// Empty means `scheme.integrator` only.
    pub integrators: Vec<String>,
    /// Point counts of the entropy study.
    pub entropy_grids: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            grids: vec![21, 41, 81],
            times: vec![1.0, 10.0, 20.0],
            quadratures: ["nc2", "nc4", "nc6", "gauss8"].map(String::from).to_vec(),
            integrators: Vec::new(),
            entropy_grids: vec![10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub scheme: SchemeConfig,
    pub time: TimeConfig,
    pub output: OutputConfig,
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn quadrature(&self) -> Result<QuadratureRule> {
        Ok(self.scheme.quadrature.parse()?)
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Ok(self.scheme.integrator.parse()?)
    }

    pub fn study_quadratures(&self) -> Result<Vec<QuadratureRule>> {
        if self.study.quadratures.is_empty() {
            return Ok(vec![self.quadrature()?]);
        }
        Ok(self.study.quadratures.iter().map(|s| s.parse()).collect::<Result<_, _>>()?)
    }

    pub fn study_integrators(&self) -> Result<Vec<Integrator>> {
        if self.study.integrators.is_empty() {
            return Ok(vec![self.integrator()?]);
        }
        Ok(self.study.integrators.iter().map(|s| s.parse()).collect::<Result<_, _>>()?)
    }

    /// Time-step policy on a grid with `points` points per direction.
    pub fn policy(&self, points: usize, t_final: f64) -> Result<TimeStepPolicy<f64>> {
        let (a, b) = self.domain();
        let dw = (b - a) / (points - 1) as f64;
        let p = &self.problem;
        let mode = match self.time.dt_policy {
            DtPolicy::Fixed => StepMode::Fixed(self.time.dt.ok_or_else(|| CliError::config("time.dt is required by the fixed policy"))?),
            DtPolicy::Table1 => StepMode::Fixed(dw * dw / (10.0 * p.sigma1_sq * dw + 10.0)),
            DtPolicy::Fig1 => StepMode::Fixed(dw / (20.0 * p.sigma1_sq.max(p.sigma2_sq))),
            DtPolicy::ExplicitCfl => StepMode::ExplicitCfl { safety: self.time.safety },
            DtPolicy::SemiImplicitCfl => StepMode::SemiImplicitCfl { safety: self.time.safety },
        };
        Ok(TimeStepPolicy::new(mode, t_final)?)
    }

    pub fn domain(&self) -> (f64, f64) {
        match (&self.problem.kind, &self.problem.custom) {
            (ProblemKind::Custom, Some(c)) => (c.domain[0], c.domain[1]),
            _ => (-1.0, 1.0),
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let p = &self.problem;
        for (name, v) in [("problem.sigma1_sq", p.sigma1_sq), ("problem.sigma2_sq", p.sigma2_sq), ("problem.c", p.c)] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(p.rho.abs() < 1.0) {
            errs.push(format!("problem.rho = {}: |rho| must be < 1 or the diffusion matrix loses positive definiteness", p.rho));
        }
        for (name, v) in [("problem.d", p.d), ("problem.mu", p.mu)] {
            if !v.is_finite() {
                errs.push(format!("{name} must be finite"));
            }
        }
        match (p.kind, &p.custom) {
            (ProblemKind::Custom, None) => errs.push("problem.kind = \"custom\" requires a [problem.custom] table".into()),
            (ProblemKind::Custom, Some(c)) => {
                if !(c.domain[0] < c.domain[1]) {
                    errs.push(format!("problem.custom.domain must be increasing, got {:?}", c.domain));
                }
                let [d11, d12, d22] = c.diffusion;
                if !(d11 > 0.0 && d22 > 0.0 && d11 * d22 - d12 * d12 > 0.0) {
                    errs.push(format!("problem.custom.diffusion {:?} is not positive definite", c.diffusion));
                }
                if self.scheme.weights == Weights::Exact {
                    errs.push("scheme.weights = \"exact\" needs an analytic equilibrium (test1 only)".into());
                }
            }
            (_, Some(_)) => errs.push("[problem.custom] is only allowed with problem.kind = \"custom\"".into()),
            (ProblemKind::Test2, None) if self.scheme.weights == Weights::Exact => {
                errs.push("scheme.weights = \"exact\" needs an analytic equilibrium (test1 only)".into())
            }
            _ => {}
        }
        if self.grid.points < 4 {
            errs.push(format!("grid.points must be at least 4, got {}", self.grid.points));
        }
        if let Err(e) = self.quadrature() {
            errs.push(format!("scheme.quadrature: {e}"));
        }
        if let Err(e) = self.integrator() {
            errs.push(format!("scheme.integrator: {e}"));
        }
        if !(self.scheme.solver_tol > 0.0) || self.scheme.solver_max_iter == 0 {
            errs.push("scheme.solver_tol and scheme.solver_max_iter must be positive".into());
        }
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            errs.push(format!("time.t_final must be nonnegative, got {}", t.t_final));
        }
        match (t.dt_policy, t.dt) {
            (DtPolicy::Fixed, None) => errs.push("time.dt is required by the fixed policy".into()),
            (DtPolicy::Fixed, Some(dt)) if !(dt > 0.0 && dt.is_finite()) => {
                errs.push(format!("time.dt must be positive, got {dt}"))
            }
            _ => {}
        }
        if matches!(t.dt_policy, DtPolicy::ExplicitCfl | DtPolicy::SemiImplicitCfl) && !(t.safety > 0.0 && t.safety <= 1.0) {
            errs.push(format!("time.safety must lie in (0, 1], got {}", t.safety));
        }
        if self.output.stride == 0 {
            errs.push("output.stride must be at least 1".into());
        }
        if self.output.snapshot_times.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            errs.push("output.snapshot_times must be nonnegative".into());
        }
        let s = &self.study;
        if s.grids.len() < 3 {
            errs.push(format!("study.grids needs at least three grids, got {}", s.grids.len()));
        }
        if s.grids.iter().any(|&n| n < 4) {
            errs.push("study.grids entries must be at least 4".into());
        }
        if s.grids.windows(2).any(|w| w[1] < 2 || w[0] < 2 || w[1] - 1 != 2 * (w[0] - 1)) {
            errs.push(format!("study.grids {:?} are not nested: each grid must double the cells of the previous one", s.grids));
        }
        if s.times.is_empty() || s.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            errs.push("study.times must be a nonempty list of nonnegative times".into());
        }
        for q in &s.quadratures {
            if let Err(e) = q.parse::<QuadratureRule>() {
                errs.push(format!("study.quadratures: {e}"));
            }
        }
        for q in &s.integrators {
            if let Err(e) = q.parse::<Integrator>() {
                errs.push(format!("study.integrators: {e}"));
            }
        }
        if s.entropy_grids.iter().any(|&n| n < 4) {
            errs.push("study.entropy_grids entries must be at least 4".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }
}
