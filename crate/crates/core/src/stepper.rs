//! Time integration: explicit Euler, RK4, SSP-RK3 and first/second order
//! semi-implicit stepping, plus the run loop with observers.

use std::fmt;
use std::str::FromStr;

use crate::diagnostics::StudyReport;
use crate::error::{Error, Result};
use crate::flux::{Coefficients, FluxOperator, WeightMode};
use crate::grid::Field;
use crate::model::Problem;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Integrator {
    Euler,
    Rk4,
    Ssprk3,
    SemiImplicit1,
    SemiImplicit2,
}

impl Integrator {
    pub const ALL: [Integrator; 5] = [
        Integrator::Euler,
        Integrator::Rk4,
        Integrator::Ssprk3,
        Integrator::SemiImplicit1,
        Integrator::SemiImplicit2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
            Integrator::Ssprk3 => "ssprk3",
            Integrator::SemiImplicit1 => "si1",
            Integrator::SemiImplicit2 => "si2",
        }
    }

    pub fn is_explicit(self) -> bool {
        matches!(self, Integrator::Euler | Integrator::Rk4 | Integrator::Ssprk3)
    }

    /// Coefficient refreshes per step.
    pub fn stages(self) -> usize {
        match self {
            Integrator::Euler | Integrator::SemiImplicit1 => 1,
            Integrator::SemiImplicit2 => 2,
            Integrator::Ssprk3 => 3,
            Integrator::Rk4 => 4,
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" | "explicit-euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            "ssprk3" | "ssp-rk3" => Ok(Integrator::Ssprk3),
            "si1" | "semi-implicit-1" => Ok(Integrator::SemiImplicit1),
            "si2" | "semi-implicit-2" => Ok(Integrator::SemiImplicit2),
            other => Err(Error::Config(format!("unknown integrator '{other}'"))),
        }
    }
}

/// Positivity bound of forward Euler:
/// `dw^2 / (2 [(Gx + Gy) dw + D1 + D2])`.
pub fn cfl_explicit<T: Real>(coeffs: &Coefficients<T>, dw: T) -> T {
    let (gx, gy) = coeffs.max_drift();
    let (d1, d2) = coeffs.max_diffusion();
    explicit_bound(gx + gy, d1 + d2, dw)
}

fn explicit_bound<T: Real>(g: T, d: T, dw: T) -> T {
    dw * dw / (T::lit(2.0) * (g * dw + d))
}

/// Positivity bound of the semi-implicit scheme, `dw / (2 (Gx + Gy))`;
/// infinite without drift.
pub fn cfl_semi_implicit<T: Real>(coeffs: &Coefficients<T>, dw: T) -> T {
    let (gx, gy) = coeffs.max_drift();
    semi_implicit_bound(gx + gy, dw)
}

fn semi_implicit_bound<T: Real>(g: T, dw: T) -> T {
    if g == T::zero() {
        T::infinity()
    } else {
        dw / (T::lit(2.0) * g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode<T> {
    Fixed(T),
    /// `safety * cfl_explicit`, re-evaluated every step.
    ExplicitCfl { safety: T },
    /// `safety * cfl_semi_implicit`, re-evaluated every step.
    SemiImplicitCfl { safety: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepPolicy<T> {
    pub mode: StepMode<T>,
    pub t_final: T,
}

impl<T: Real> TimeStepPolicy<T> {
    pub fn new(mode: StepMode<T>, t_final: T) -> Result<Self> {
        match mode {
            StepMode::Fixed(dt) if !(dt > T::zero() && dt.is_finite()) => {
                return Err(Error::Config(format!("time step must be positive, got {dt}")))
            }
            StepMode::ExplicitCfl { safety } | StepMode::SemiImplicitCfl { safety }
                if !(safety > T::zero() && safety <= T::one()) =>
            {
                return Err(Error::Config(format!("CFL safety factor must lie in (0, 1], got {safety}")))
            }
            _ => {}
        }
        if !(t_final >= T::zero() && t_final.is_finite()) {
            return Err(Error::Config(format!("final time must be nonnegative, got {t_final}")));
        }
        Ok(Self { mode, t_final })
    }

    /// Step size for the current coefficients (before clipping to output times).
    pub fn dt(&self, coeffs: &Coefficients<T>) -> T {
        let dw = coeffs.grid().dw();
        match self.mode {
            StepMode::Fixed(dt) => dt,
            StepMode::ExplicitCfl { safety } => safety * cfl_explicit(coeffs, dw),
            StepMode::SemiImplicitCfl { safety } => safety * cfl_semi_implicit(coeffs, dw),
        }
    }
}

/// Five-band system over the lexicographically ordered nodes (`i` fastest):
/// `diag x_r + west x_(r-1) + east x_(r+1) + south x_(r-np) + north x_(r+np) = rhs_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PentadiagonalSystem<T> {
    /// Nodes per grid line.
    pub np: usize,
    pub diag: Vec<T>,
    pub west: Vec<T>,
    pub east: Vec<T>,
    pub south: Vec<T>,
    pub north: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Real> PentadiagonalSystem<T> {
    pub fn identity(np: usize, rhs: Vec<T>) -> Self {
        let len = np * np;
        let zeros = vec![T::zero(); len];
        Self {
            np,
            diag: vec![T::one(); len],
            west: zeros.clone(),
            east: zeros.clone(),
            south: zeros.clone(),
            north: zeros,
            rhs,
        }
    }

    /// `(I - tau L) x = rhs` where `L` is the conservative operator of `coeffs`.
    pub fn implicit(coeffs: &Coefficients<T>, tau: T, rhs: Vec<T>) -> Self {
        let g = coeffs.grid();
        let (n, np) = (g.cells(), g.points());
        let s = tau / g.dw();
        let mut sys = Self::identity(np, rhs);
        for j in 0..np {
            for i in 0..n {
                let k = j * n + i;
                let (l, r) = (j * np + i, j * np + i + 1);
                let (am, ap) = (s * coeffs.a_minus_x[k], s * coeffs.a_plus_x[k]);
                sys.diag[l] += am;
                sys.east[l] = -ap;
                sys.diag[r] += ap;
                sys.west[r] = -am;
            }
        }
        for j in 0..n {
            for i in 0..np {
                let k = j * np + i;
                let (am, ap) = (s * coeffs.a_minus_y[k], s * coeffs.a_plus_y[k]);
                sys.diag[k] += am;
                sys.north[k] = -ap;
                sys.diag[k + np] += ap;
                sys.south[k + np] = -am;
            }
        }
        sys
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `A x`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let np = self.np;
        let len = self.len();
        for r in 0..len {
            let mut v = self.diag[r] * x[r];
            if r % np != 0 {
                v += self.west[r] * x[r - 1];
            }
            if r % np != np - 1 {
                v += self.east[r] * x[r + 1];
            }
            if r >= np {
                v += self.south[r] * x[r - np];
            }
            if r + np < len {
                v += self.north[r] * x[r + np];
            }
            out[r] = v;
        }
    }

    /// `||rhs - A x||_inf`.
    pub fn residual(&self, x: &[T]) -> T {
        let mut ax = vec![T::zero(); self.len()];
        self.apply(x, &mut ax);
        ax.iter().zip(&self.rhs).fold(T::zero(), |acc, (a, b)| acc.max((*b - *a).abs()))
    }

    /// Smallest `diag - sum |off-diagonal|` over rows.
    pub fn row_margin(&self) -> (usize, T) {
        (0..self.len())
            .map(|r| {
                let off = self.west[r].abs() + self.east[r].abs() + self.south[r].abs() + self.north[r].abs();
                (r, self.diag[r] - off)
            })
            .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// Smallest `diag - sum |off-diagonal|` over columns.
    pub fn column_margin(&self) -> T {
        let np = self.np;
        let len = self.len();
        let mut off = vec![T::zero(); len];
        for r in 0..len {
            if r % np != 0 {
                off[r - 1] += self.west[r].abs();
            }
            if r % np != np - 1 {
                off[r + 1] += self.east[r].abs();
            }
            if r >= np {
                off[r - np] += self.south[r].abs();
            }
            if r + np < len {
                off[r + np] += self.north[r].abs();
            }
        }
        (0..len).fold(T::infinity(), |m, c| m.min(self.diag[c] - off[c]))
    }

    /// Strict diagonal dominance by rows or by columns; reports the worst row otherwise.
    pub fn check_dominance(&self) -> Result<()> {
        let (row, margin) = self.row_margin();
        if margin > T::zero() || self.column_margin() > T::zero() {
            Ok(())
        } else {
            Err(Error::NotDiagonallyDominant { row })
        }
    }

    /// M-matrix sign pattern: positive diagonal, nonpositive off-diagonals.
    pub fn has_m_matrix_signs(&self) -> bool {
        self.diag.iter().all(|d| *d > T::zero())
            && [&self.west, &self.east, &self.south, &self.north].iter().all(|b| b.iter().all(|v| *v <= T::zero()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-12), max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solve<T> {
    pub solution: Vec<T>,
    pub sweeps: usize,
    pub residual: T,
}

/// Gauss-Seidel sweeps from `x0` (or `rhs`) until `||rhs - A x||_inf <= tol ||rhs||_inf`.
/// At least one sweep is always performed.
pub fn solve_pentadiagonal<T: Real>(
    system: &PentadiagonalSystem<T>,
    x0: Option<&[T]>,
    settings: SolverSettings<T>,
) -> Result<Solve<T>> {
    system.check_dominance()?;
    let np = system.np;
    let len = system.len();
    let mut x = x0.map_or_else(|| system.rhs.clone(), <[T]>::to_vec);
    if x.len() != len || system.rhs.len() != len {
        return Err(Error::Shape(format!("system of size {len} with vectors of size {}", x.len())));
    }
    let scale = system.rhs.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let target = settings.tol * scale;
    let scaled = Scaled::new(system);
    let mut change = vec![T::zero(); len];
    let mut residual = T::infinity();
    for sweep in 1..=settings.max_iter {
        scaled.sweep(&mut x, &mut change);
        // After a forward sweep only the upper neighbours are stale:
        // rhs - A x = -(east dx_(r+1) + north dx_(r+np)).
        residual = T::zero();
        for j in 0..np {
            for i in 0..np {
                let r = j * np + i;
                let mut v = T::zero();
                if i + 1 < np {
                    v += system.east[r] * change[r + 1];
                }
                if j + 1 < np {
                    v += system.north[r] * change[r + np];
                }
                residual = residual.max(v.abs());
            }
        }
        if residual <= target {
            return Ok(Solve { solution: x, sweeps: sweep, residual });
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::SolverNonConvergence { iterations: settings.max_iter, residual: residual.as_f64() })
}

/// Row-scaled bands (`A / diag`) used by the sweeps.
struct Scaled<T> {
    np: usize,
    rhs: Vec<T>,
    west: Vec<T>,
    east: Vec<T>,
    south: Vec<T>,
    north: Vec<T>,
}

impl<T: Real> Scaled<T> {
    fn new(s: &PentadiagonalSystem<T>) -> Self {
        let inv: Vec<T> = s.diag.iter().map(|d| d.recip()).collect();
        let scale = |band: &[T]| band.iter().zip(&inv).map(|(b, i)| *b * *i).collect::<Vec<T>>();
        Self {
            np: s.np,
            rhs: scale(&s.rhs),
            west: scale(&s.west),
            east: scale(&s.east),
            south: scale(&s.south),
            north: scale(&s.north),
        }
    }

    fn sweep(&self, x: &mut [T], change: &mut [T]) {
        let np = self.np;
        for j in 0..np {
            let row = j * np;
            for i in 0..np {
                let r = row + i;
                let mut v = self.rhs[r];
                if i > 0 {
                    v -= self.west[r] * x[r - 1];
                }
                if i + 1 < np {
                    v -= self.east[r] * x[r + 1];
                }
                if j > 0 {
                    v -= self.south[r] * x[r - np];
                }
                if j + 1 < np {
                    v -= self.north[r] * x[r + np];
                }
                change[r] = v - x[r];
                x[r] = v;
            }
        }
    }
}

fn divergence_error(stage: usize) -> Error {
    Error::Divergence { step: 0, stage, time: f64::NAN }
}

fn check_finite<T: Real>(v: &[T], stage: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(divergence_error(stage))
    }
}

/// `L(u) u` with coefficients refreshed from `u`.
fn rhs<T: Real>(op: &FluxOperator<T>, u: &Field<T>, out: &mut [T]) -> Result<()> {
    let c = op.coefficients(u)?;
    c.apply(u.values(), out);
    Ok(())
}

fn axpy<T: Real>(grid: crate::grid::Grid<T>, base: &[T], a: T, k: &[T]) -> Field<T> {
    let values = base.iter().zip(k).map(|(b, k)| *b + a * *k).collect();
    Field::from_values(grid, values).expect("matching lengths")
}

/// One explicit step (Euler, RK4 or SSP-RK3).
pub fn step_explicit<T: Real>(op: &FluxOperator<T>, f: &Field<T>, dt: T, method: Integrator) -> Result<Field<T>> {
    let grid = *f.grid();
    let len = grid.len();
    let u0 = f.values();
    let mut k1 = vec![T::zero(); len];
    rhs(op, f, &mut k1)?;
    check_finite(&k1, 1)?;
    let out = match method {
        Integrator::Euler => axpy(grid, u0, dt, &k1),
        Integrator::Rk4 => {
            let half = dt * T::lit(0.5);
            let mut k2 = vec![T::zero(); len];
            rhs(op, &axpy(grid, u0, half, &k1), &mut k2)?;
            check_finite(&k2, 2)?;
            let mut k3 = vec![T::zero(); len];
            rhs(op, &axpy(grid, u0, half, &k2), &mut k3)?;
            check_finite(&k3, 3)?;
            let mut k4 = vec![T::zero(); len];
            rhs(op, &axpy(grid, u0, dt, &k3), &mut k4)?;
            check_finite(&k4, 4)?;
            let sixth = dt / T::lit(6.0);
            let two = T::lit(2.0);
            let values = (0..len).map(|r| u0[r] + sixth * (k1[r] + two * (k2[r] + k3[r]) + k4[r])).collect();
            Field::from_values(grid, values)?
        }
        Integrator::Ssprk3 => {
            let u1 = axpy(grid, u0, dt, &k1);
            let mut k = vec![T::zero(); len];
            rhs(op, &u1, &mut k)?;
            check_finite(&k, 2)?;
            let (q, tq) = (T::lit(0.25), T::lit(0.75));
            let u2: Vec<T> = (0..len).map(|r| tq * u0[r] + q * (u1.values()[r] + dt * k[r])).collect();
            let u2 = Field::from_values(grid, u2)?;
            rhs(op, &u2, &mut k)?;
            check_finite(&k, 3)?;
            let (a, b) = (T::one() / T::lit(3.0), T::lit(2.0) / T::lit(3.0));
            Field::from_values(grid, (0..len).map(|r| a * u0[r] + b * (u2.values()[r] + dt * k[r])).collect())?
        }
        _ => return Err(Error::Config(format!("{method} is not an explicit integrator"))),
    };
    check_finite(out.values(), method.stages())?;
    Ok(out)
}

/// Solves `(I - tau L) x = rhs` warm-started from `guess` and rescales the
/// iterate so that its mass equals that of `rhs` (the operator is
/// conservative, so this only removes the solver's mass defect).
fn implicit_solve<T: Real>(
    coeffs: &Coefficients<T>,
    tau: T,
    rhs: Vec<T>,
    guess: &[T],
    solver: SolverSettings<T>,
    stage: usize,
) -> Result<Vec<T>> {
    let sys = PentadiagonalSystem::implicit(coeffs, tau, rhs);
    debug_assert!(sys.has_m_matrix_signs());
    let mut x = solve_pentadiagonal(&sys, Some(guess), solver)?.solution;
    check_finite(&x, stage)?;
    let target: T = sys.rhs.iter().copied().sum();
    let current: T = x.iter().copied().sum();
    if current > T::zero() && target > T::zero() {
        let s = target / current;
        x.iter_mut().for_each(|v| *v *= s);
    }
    Ok(x)
}

/// One semi-implicit step. Order 1 freezes the coefficients at `f` and
/// treats the fluxes implicitly; order 2 predicts a half step that way,
/// refreshes the coefficients and takes a Crank-Nicolson step.
pub fn step_semi_implicit<T: Real>(
    op: &FluxOperator<T>,
    f: &Field<T>,
    dt: T,
    order: usize,
    solver: SolverSettings<T>,
) -> Result<Field<T>> {
    let grid = *f.grid();
    let c0 = op.coefficients(f)?;
    match order {
        1 => {
            let x = implicit_solve(&c0, dt, f.values().to_vec(), f.values(), solver, 1)?;
            Field::from_values(grid, x)
        }
        2 => {
            let half = dt * T::lit(0.5);
            let pred = implicit_solve(&c0, half, f.values().to_vec(), f.values(), solver, 1)?;
            let pred = Field::from_values(grid, pred)?;
            let c1 = op.coefficients(&pred)?;
            let mut lf = vec![T::zero(); grid.len()];
            c1.apply(f.values(), &mut lf);
            let rhs: Vec<T> = f.values().iter().zip(&lf).map(|(u, l)| *u + half * *l).collect();
            let x = implicit_solve(&c1, half, rhs, pred.values(), solver, 2)?;
            Field::from_values(grid, x)
        }
        _ => Err(Error::Config(format!("semi-implicit order must be 1 or 2, got {order}"))),
    }
}

/// One step of any integrator.
pub fn step<T: Real>(
    op: &FluxOperator<T>,
    f: &Field<T>,
    dt: T,
    method: Integrator,
    solver: SolverSettings<T>,
) -> Result<Field<T>> {
    match method {
        Integrator::SemiImplicit1 => step_semi_implicit(op, f, dt, 1, solver),
        Integrator::SemiImplicit2 => step_semi_implicit(op, f, dt, 2, solver),
        _ => step_explicit(op, f, dt, method),
    }
}

/// Scheme configuration for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings<T> {
    pub weights: WeightMode,
    pub integrator: Integrator,
    pub policy: TimeStepPolicy<T>,
    /// Record diagnostics every `stride` steps (and at the last step).
    pub stride: usize,
    /// Times the run lands on exactly; observers see them flagged.
    pub output_times: Vec<T>,
    pub solver: SolverSettings<T>,
}

impl<T: Real> RunSettings<T> {
    pub fn new(weights: WeightMode, integrator: Integrator, policy: TimeStepPolicy<T>) -> Self {
        Self { weights, integrator, policy, stride: 1, output_times: Vec::new(), solver: SolverSettings::default() }
    }
}

/// State handed to observers.
pub struct Record<'a, T> {
    pub step: usize,
    pub time: T,
    pub field: &'a Field<T>,
    pub coefficients: &'a Coefficients<T>,
    /// Whether `time` is one of the requested output times.
    pub output: bool,
}

pub trait Observer<T> {
    fn observe(&mut self, record: &Record<'_, T>) -> Result<()>;
}

impl<T, F: FnMut(&Record<'_, T>) -> Result<()>> Observer<T> for F {
    fn observe(&mut self, record: &Record<'_, T>) -> Result<()> {
        self(record)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub report: StudyReport<T>,
    pub field: Field<T>,
    pub steps: usize,
    /// Largest `dt / bound` seen, against the positivity bound of the integrator family.
    pub max_cfl_ratio: T,
}

/// Advances the problem's initial datum to `policy.t_final`.
pub fn run<T: Real>(
    problem: &Problem<T>,
    settings: &RunSettings<T>,
    observers: &mut [&mut dyn Observer<T>],
) -> Result<RunOutcome<T>> {
    let op = FluxOperator::new(problem.clone(), settings.weights)?;
    run_with_operator(&op, problem.initial.clone(), settings, observers)
}

/// [`run`] with a prebuilt operator and explicit starting field.
pub fn run_with_operator<T: Real>(
    op: &FluxOperator<T>,
    initial: Field<T>,
    settings: &RunSettings<T>,
    observers: &mut [&mut dyn Observer<T>],
) -> Result<RunOutcome<T>> {
    if settings.stride == 0 {
        return Err(Error::Config("observer stride must be at least 1".into()));
    }
    let t_final = settings.policy.t_final;
    let mut targets: Vec<T> = settings.output_times.iter().copied().filter(|t| *t <= t_final).collect();
    targets.push(t_final);
    targets.sort_by(|a, b| a.partial_cmp(b).expect("finite output times"));
    targets.dedup();

    let f_inf = op.problem().steady_state.as_ref();
    let mut report = StudyReport::new(f_inf.is_some());
    let mut f = initial;
    let mut t = T::zero();
    let mut n = 0usize;
    let mut next = targets.iter().position(|s| *s > T::zero()).unwrap_or(targets.len());
    let mut coeffs = op.coefficients(&f)?;
    let mut max_ratio = T::zero();

    let mut emit = |report: &mut StudyReport<T>, n: usize, t: T, f: &Field<T>, c: &Coefficients<T>, output: bool| {
        report.record(t, f, f_inf, c)?;
        let rec = Record { step: n, time: t, field: f, coefficients: c, output };
        observers.iter_mut().try_for_each(|o| o.observe(&rec))
    };
    emit(&mut report, 0, t, &f, &coeffs, targets.first() == Some(&T::zero()))?;

    let landing = T::lit(1e-9);
    while next < targets.len() {
        let target = targets[next];
        let nominal = settings.policy.dt(&coeffs);
        if !(nominal > T::zero()) {
            return Err(Error::Config(format!("time step policy produced {nominal}")));
        }
        let dw = coeffs.grid().dw();
        let bound = if settings.integrator.is_explicit() {
            cfl_explicit(&coeffs, dw)
        } else {
            cfl_semi_implicit(&coeffs, dw)
        };
        let mut dt = nominal.min(target - t);
        let lands = target - t - dt <= landing * nominal;
        if lands {
            dt = target - t;
        }
        max_ratio = max_ratio.max(dt / bound);
        f = step(op, &f, dt, settings.integrator, settings.solver).map_err(|e| match e {
            Error::Divergence { stage, .. } => Error::Divergence { step: n + 1, stage, time: t.as_f64() },
            other => other,
        })?;
        n += 1;
        t = if lands { target } else { t + dt };
        let output = lands;
        if lands {
            next += 1;
        }
        let last = next == targets.len();
        coeffs = op.coefficients(&f)?;
        if output || last || n.is_multiple_of(settings.stride) {
            emit(&mut report, n, t, &f, &coeffs, output)?;
        }
    }
    Ok(RunOutcome { report, field: f, steps: n, max_cfl_ratio: max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{builtin_test1, BuiltinParams, Diffusion, Drift};
    use crate::quadrature::QuadratureRule;
    use std::sync::Arc;

    fn heat(cells: usize) -> Problem<f64> {
        let grid = Grid::<f64>::new(-1.0, 1.0, cells).unwrap();
        Problem::new(
            grid,
            Diffusion::<f64>::constant_diagonal(1.0, 1.0),
            Drift::Linear(Arc::new(|_, _| [0.0, 0.0])),
            Field::from_fn(grid, |x, y| (-10.0 * (x * x + y * y)).exp()),
        )
        .unwrap()
    }

    #[test]
    fn cfl_examples() {
        assert!((explicit_bound(0.0, 2.0, 0.1_f64) - 0.0025).abs() < 1e-18);
        assert!((explicit_bound(2.0, 2.0, 0.1_f64) - 0.01 / (2.0 * 2.2)).abs() < 1e-18);
        assert!((semi_implicit_bound(2.0, 0.1_f64) - 0.025).abs() < 1e-18);
        assert_eq!(semi_implicit_bound(0.0, 0.1_f64), f64::INFINITY);
        let p = heat(4);
        let c = Coefficients::compute(&p, &p.initial, WeightMode::Quadrature(QuadratureRule::Midpoint)).unwrap();
        assert_eq!(cfl_semi_implicit(&c, 0.5), f64::INFINITY);
        assert!((cfl_explicit(&c, 0.5) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn integrator_names_round_trip() {
        for m in Integrator::ALL {
            assert_eq!(m.name().parse::<Integrator>().unwrap(), m);
        }
        assert_eq!("semi-implicit-2".parse::<Integrator>().unwrap(), Integrator::SemiImplicit2);
        assert!("leapfrog".parse::<Integrator>().is_err());
    }

    #[test]
    fn identity_system_returns_rhs() {
        let rhs = vec![1.0, -2.0, 3.5, 0.25];
        let s = solve_pentadiagonal(&PentadiagonalSystem::identity(2, rhs.clone()), None, SolverSettings::default())
            .unwrap();
        assert_eq!(s.solution, rhs);
        assert_eq!(s.sweeps, 1);
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let m = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= m * a[c][k];
                }
                b[r] -= m * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn gauss_seidel_matches_dense_elimination() {
        let np = 5;
        let len = np * np;
        let mut sys = PentadiagonalSystem::identity(np, (0..len).map(|r| (r as f64 * 0.37).sin()).collect());
        for r in 0..len {
            sys.diag[r] = 4.5 + (r % 3) as f64 * 0.1;
            if r % np != 0 {
                sys.west[r] = -1.0;
            }
            if r % np != np - 1 {
                sys.east[r] = -1.1;
            }
            if r >= np {
                sys.south[r] = -0.9;
            }
            if r + np < len {
                sys.north[r] = -1.0;
            }
        }
        let mut dense = vec![vec![0.0; len]; len];
        for r in 0..len {
            dense[r][r] = sys.diag[r];
            if r % np != 0 {
                dense[r][r - 1] = sys.west[r];
            }
            if r % np != np - 1 {
                dense[r][r + 1] = sys.east[r];
            }
            if r >= np {
                dense[r][r - np] = sys.south[r];
            }
            if r + np < len {
                dense[r][r + np] = sys.north[r];
            }
        }
        let mut b = sys.rhs.clone();
        let oracle = dense_solve(&mut dense, &mut b);
        let s = solve_pentadiagonal(&sys, None, SolverSettings::default()).unwrap();
        for (x, y) in s.solution.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn non_dominant_system_is_rejected() {
        let mut sys = PentadiagonalSystem::identity(2, vec![1.0; 4]);
        sys.east[0] = -2.0;
        sys.west[3] = -2.0;
        assert!(matches!(
            solve_pentadiagonal(&sys, None, SolverSettings::default()),
            Err(Error::NotDiagonallyDominant { .. })
        ));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let np = 6;
        let p = heat(np - 1);
        let c = Coefficients::compute(&p, &p.initial, WeightMode::Quadrature(QuadratureRule::Midpoint)).unwrap();
        let sys = PentadiagonalSystem::implicit(&c, 10.0, p.initial.values().to_vec());
        let err = solve_pentadiagonal(&sys, None, SolverSettings { tol: 1e-15, max_iter: 2 }).unwrap_err();
        assert!(matches!(err, Error::SolverNonConvergence { iterations: 2, residual } if residual > 0.0));
    }

    #[test]
    fn implicit_matrix_columns_sum_to_one() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 10).unwrap();
        let c = Coefficients::compute(&p, &p.initial, WeightMode::Quadrature(QuadratureRule::GaussLegendre8)).unwrap();
        let sys = PentadiagonalSystem::implicit(&c, 0.7, vec![0.0; p.grid.len()]);
        assert!(sys.has_m_matrix_signs());
        let np = sys.np;
        let len = sys.len();
        let mut col = sys.diag.clone();
        for r in 0..len {
            if r % np != 0 {
                col[r - 1] += sys.west[r];
            }
            if r % np != np - 1 {
                col[r + 1] += sys.east[r];
            }
            if r >= np {
                col[r - np] += sys.south[r];
            }
            if r + np < len {
                col[r + np] += sys.north[r];
            }
        }
        assert!(col.iter().all(|s| (s - 1.0).abs() < 1e-12));
        // Rows are dominant under the semi-implicit bound.
        let dt = cfl_semi_implicit(&c, p.grid.dw());
        let sys = PentadiagonalSystem::implicit(&c, 0.99 * dt, vec![0.0; p.grid.len()]);
        assert!(sys.row_margin().1 > 0.0);
    }

    #[test]
    fn semi_implicit_heat_conserves_mass() {
        let p = heat(12);
        let op = FluxOperator::new(p.clone(), WeightMode::Quadrature(QuadratureRule::Midpoint)).unwrap();
        let m0 = p.initial.mass();
        let mut f = p.initial.clone();
        for order in [1, 2] {
            for _ in 0..5 {
                f = step_semi_implicit(&op, &f, 0.05, order, SolverSettings::default()).unwrap();
                assert!((f.mass() - m0).abs() <= 1e-14 * m0.max(1.0));
                assert!(f.min_value() >= 0.0);
            }
        }
    }

    #[test]
    fn explicit_steps_conserve_mass() {
        let p = builtin_test1::<f64>(BuiltinParams { rho: 0.5, ..Default::default() }, 12).unwrap();
        let op = FluxOperator::new(p.clone(), WeightMode::Quadrature(QuadratureRule::OpenNewtonCotes4)).unwrap();
        let c = op.coefficients(&p.initial).unwrap();
        let dt = cfl_explicit(&c, p.grid.dw());
        for m in [Integrator::Euler, Integrator::Rk4, Integrator::Ssprk3] {
            let g = step_explicit(&op, &p.initial, dt, m).unwrap();
            assert!((g.mass() - 1.0).abs() < 1e-14, "{m}");
            if m != Integrator::Rk4 {
                assert!(g.min_value() >= 0.0);
            }
        }
    }

    #[test]
    fn rk4_refreshes_four_times_per_step() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 6).unwrap();
        let op = FluxOperator::new(p.clone(), WeightMode::Exact).unwrap();
        for (m, k) in [
            (Integrator::Rk4, 4),
            (Integrator::Euler, 1),
            (Integrator::Ssprk3, 3),
            (Integrator::SemiImplicit1, 1),
            (Integrator::SemiImplicit2, 2),
        ] {
            let before = op.refresh_count();
            step(&op, &p.initial, 1e-4, m, SolverSettings::default()).unwrap();
            assert_eq!(op.refresh_count() - before, k, "{m}");
            assert_eq!(m.stages(), k);
        }
    }

    #[test]
    fn steady_state_is_fixed_point_of_every_integrator() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 10).unwrap();
        let f_inf = p.steady_state.clone().unwrap();
        let op = FluxOperator::new(p.clone(), WeightMode::Exact).unwrap();
        for m in Integrator::ALL {
            let g = step(&op, &f_inf, 1e-4, m, SolverSettings::default()).unwrap();
            let dev = g.values().iter().zip(f_inf.values()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(dev <= 1e-13 * f_inf.max_value(), "{m}: {dev}");
        }
    }

    #[test]
    fn run_to_time_zero_records_initial_state_only() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 8).unwrap();
        let policy = TimeStepPolicy::new(StepMode::Fixed(0.01), 0.0).unwrap();
        let settings = RunSettings::new(WeightMode::Exact, Integrator::SemiImplicit1, policy);
        let out = run(&p, &settings, &mut []).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.report.len(), 1);
        assert!(out.report.is_consistent());
    }

    #[test]
    fn observer_cadence() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 6).unwrap();
        for (steps, k) in [(10usize, 3usize), (9, 3), (7, 1), (5, 8)] {
            let policy = TimeStepPolicy::new(StepMode::Fixed(0.01), steps as f64 * 0.01).unwrap();
            let mut settings = RunSettings::new(WeightMode::Exact, Integrator::Euler, policy);
            settings.stride = k;
            let mut seen = Vec::new();
            let mut obs = |r: &Record<'_, f64>| {
                seen.push(r.step);
                Ok(())
            };
            let out = run(&p, &settings, &mut [&mut obs]).unwrap();
            assert_eq!(out.steps, steps);
            assert_eq!(seen.len(), steps.div_ceil(k) + 1, "steps {steps}, stride {k}");
            assert_eq!(out.report.len(), seen.len());
            assert_eq!(*seen.last().unwrap(), steps);
        }
    }

    #[test]
    fn run_lands_on_output_times() {
        let p = builtin_test1::<f64>(BuiltinParams::default(), 6).unwrap();
        let policy = TimeStepPolicy::new(StepMode::Fixed(0.03), 0.1).unwrap();
        let mut settings = RunSettings::new(WeightMode::Exact, Integrator::SemiImplicit1, policy);
        settings.stride = 1000;
        settings.output_times = vec![0.05, 0.07];
        let mut hits = Vec::new();
        let mut obs = |r: &Record<'_, f64>| {
            if r.output {
                hits.push(r.time);
            }
            Ok(())
        };
        run(&p, &settings, &mut [&mut obs]).unwrap();
        assert_eq!(hits, vec![0.05, 0.07, 0.1]);
    }

    #[test]
    fn policy_validation() {
        assert!(TimeStepPolicy::new(StepMode::Fixed(-1.0), 1.0).is_err());
        assert!(TimeStepPolicy::new(StepMode::ExplicitCfl { safety: 1.5 }, 1.0).is_err());
        assert!(TimeStepPolicy::new(StepMode::SemiImplicitCfl { safety: 0.5 }, -1.0).is_err());
        assert!(TimeStepPolicy::new(StepMode::ExplicitCfl { safety: 1.0 }, 1.0).is_ok());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let p = heat(6);
        let policy = TimeStepPolicy::new(StepMode::Fixed(10.0), 10_000.0).unwrap();
        let settings = RunSettings::new(WeightMode::Quadrature(QuadratureRule::Midpoint), Integrator::Euler, policy);
        let err = run(&p, &settings, &mut []).unwrap_err();
        assert!(matches!(err, Error::Divergence { step, .. } if step > 1), "{err:?}");
    }
}
