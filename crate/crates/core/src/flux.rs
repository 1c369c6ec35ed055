//! Interface coefficients, Chang-Cooper-type weights, numerical fluxes and
//! the conservative divergence with no-flux boundaries.
//!
//! Interface layouts: x-interfaces `(i+1/2, j)` are stored at `j * cells + i`
//! (`i < cells`, `j <= cells`); y-interfaces `(i, j+1/2)` at `j * points + i`
//! (`i <= cells`, `j < cells`).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{Diffusion, Drift, DriftState, Kernel, Problem};
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;

/// Switch point between the closed form of the weight and its series.
/// Balances the truncation of the three-term series against cancellation
/// in the closed form for the working precision.
pub fn series_threshold<T: Real>() -> T {
    (T::lit(30240.0) * T::epsilon()).powf(T::lit(1.0 / 6.0))
}

/// `delta(lambda) = 1/lambda + 1/(1 - e^lambda)`, strictly inside `(0, 1)`.
///
/// Infinite arguments (and overflow of `e^lambda`) yield the upwind limits.
pub fn compute_delta<T: Real>(lambda: T) -> T {
    if lambda.abs() < series_threshold() {
        let l3 = lambda * lambda * lambda;
        T::lit(0.5) - lambda / T::lit(12.0) + l3 / T::lit(720.0)
    } else {
        lambda.recip() - lambda.exp_m1().recip()
    }
}

/// `alpha(lambda) = lambda / (e^lambda - 1)`, with `alpha(0) = 1`.
pub fn bernoulli<T: Real>(lambda: T) -> T {
    if lambda.abs() < series_threshold() {
        let l2 = lambda * lambda;
        T::one() - lambda / T::lit(2.0) + l2 / T::lit(12.0) - l2 * l2 / T::lit(720.0)
    } else if lambda == T::neg_infinity() {
        T::infinity()
    } else if lambda == T::infinity() {
        T::zero()
    } else {
        lambda / lambda.exp_m1()
    }
}

/// Where the interface weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Line integrals of the drift/diffusion ratio with the given rule.
    Quadrature(QuadratureRule),
    /// `lambda = log f_inf(left) - log f_inf(right)` from the known equilibrium.
    Exact,
}

#[inline]
fn x_len(cells: usize) -> usize {
    cells * (cells + 1)
}

/// Effective diffusions at x- and y-interfaces.
pub fn effective_diffusions<T: Real>(diffusion: &Diffusion<T>, grid: &Grid<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = grid.cells();
    let np = grid.points();
    let mut dx = Vec::with_capacity(x_len(n));
    for j in 0..np {
        for i in 0..n {
            let (x, y) = (grid.midpoint(i), grid.node(j));
            dx.push(checked_positive(diffusion.effective_x(x, y), x, y)?);
        }
    }
    let mut dy = Vec::with_capacity(x_len(n));
    for j in 0..n {
        for i in 0..np {
            let (x, y) = (grid.node(i), grid.midpoint(j));
            dy.push(checked_positive(diffusion.effective_y(x, y), x, y)?);
        }
    }
    Ok((dx, dy))
}

fn checked_positive<T: Real>(value: T, x: T, y: T) -> Result<T> {
    if value > T::zero() && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NotPositiveDefinite { x: x.as_f64(), y: y.as_f64(), value: value.as_f64() })
    }
}

/// Integrand of the x-weight, `(C_x - (d12/d22) C_y) / D1`, at one point.
#[inline]
fn integrand_x<T: Real>(diffusion: &Diffusion<T>, x: T, y: T, c: [T; 2]) -> Result<T> {
    let [d11, d12, d22] = diffusion.entries(x, y);
    let ratio = if d22 == T::zero() { T::zero() } else { d12 / d22 };
    let eff = d11 - d12 * ratio;
    if !(eff > T::zero()) {
        return Err(Error::SingularIntegrand { x: x.as_f64(), y: y.as_f64(), what: "x-weight" });
    }
    Ok((c[0] - ratio * c[1]) / eff)
}

#[inline]
fn integrand_y<T: Real>(diffusion: &Diffusion<T>, x: T, y: T, c: [T; 2]) -> Result<T> {
    let [d11, d12, d22] = diffusion.entries(x, y);
    let ratio = if d11 == T::zero() { T::zero() } else { d12 / d11 };
    let eff = d22 - d12 * ratio;
    if !(eff > T::zero()) {
        return Err(Error::SingularIntegrand { x: x.as_f64(), y: y.as_f64(), what: "y-weight" });
    }
    Ok((c[1] - ratio * c[0]) / eff)
}

/// Integrates `(D^-1 c)` along every interface segment for a field `c(w)`,
/// returning `(lambda_x, lambda_y)`.
fn line_integrals<T: Real>(
    grid: &Grid<T>,
    diffusion: &Diffusion<T>,
    rule: QuadratureRule,
    c: impl Fn(T, T) -> Result<[T; 2]>,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = grid.cells();
    let np = grid.points();
    let dw = grid.dw();
    let reference = rule.reference::<T>();
    let checked = |v: T, x: T, y: T| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { node: if x.is_finite() { x.as_f64() } else { y.as_f64() } })
        }
    };
    let mut lx = Vec::with_capacity(x_len(n));
    for j in 0..np {
        let y = grid.node(j);
        for i in 0..n {
            let lo = grid.node(i);
            let mut acc = T::zero();
            for &(xi, wt) in &reference {
                let x = lo + dw * xi;
                let v = integrand_x(diffusion, x, y, c(x, y)?)?;
                acc += wt * checked(v, x, y)?;
            }
            lx.push(acc * dw);
        }
    }
    let mut ly = Vec::with_capacity(x_len(n));
    for j in 0..n {
        let lo = grid.node(j);
        for i in 0..np {
            let x = grid.node(i);
            let mut acc = T::zero();
            for &(xi, wt) in &reference {
                let y = lo + dw * xi;
                let v = integrand_y(diffusion, x, y, c(x, y)?)?;
                acc += wt * checked(v, y, x)?;
            }
            ly.push(acc * dw);
        }
    }
    Ok((lx, ly))
}

/// `(lambda_x, lambda_y)` by quadrature along each interface segment, with
/// the drift frozen at the density `f`.
pub fn compute_lambda<T: Real>(problem: &Problem<T>, f: &Field<T>, rule: QuadratureRule) -> Result<(Vec<T>, Vec<T>)> {
    if f.grid() != &problem.grid {
        return Err(Error::Shape("density lives on a different grid than the problem".into()));
    }
    let state = problem.drift.prepare(f);
    line_integrals(&problem.grid, &problem.diffusion, rule, |x, y| problem.c_with_state(x, y, &state))
}

/// `lambda_inf = log f_inf(left) - log f_inf(right)` per interface.
pub fn steady_state_lambda<T: Real>(f_inf: &Field<T>) -> Result<(Vec<T>, Vec<T>)> {
    let grid = f_inf.grid();
    if let Some(bad) = f_inf.values().iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
        let np = grid.points();
        return Err(Error::Domain(format!(
            "steady state must be positive; node ({}, {}) holds {}",
            bad % np,
            bad / np,
            f_inf.values()[bad]
        )));
    }
    let n = grid.cells();
    let np = grid.points();
    let logs: Vec<T> = f_inf.values().iter().map(|v| v.ln()).collect();
    let mut lx = Vec::with_capacity(x_len(n));
    for j in 0..np {
        for i in 0..n {
            lx.push(logs[grid.index(i, j)] - logs[grid.index(i + 1, j)]);
        }
    }
    let mut ly = Vec::with_capacity(x_len(n));
    for j in 0..n {
        for i in 0..np {
            ly.push(logs[grid.index(i, j)] - logs[grid.index(i, j + 1)]);
        }
    }
    Ok((lx, ly))
}

/// Weights that make the flux vanish exactly on `f_inf`.
pub fn steady_state_weights<T: Real>(f_inf: &Field<T>) -> Result<(Vec<T>, Vec<T>)> {
    let (lx, ly) = steady_state_lambda(f_inf)?;
    Ok((lx.into_iter().map(compute_delta).collect(), ly.into_iter().map(compute_delta).collect()))
}

/// Per-interface coefficients `lambda`, `delta`, `G = D lambda / dw`, `D`,
/// plus the two-point rates `a-`, `a+` with `F = a+ f(right) - a- f(left)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients<T> {
    grid: Grid<T>,
    pub lambda_x: Vec<T>,
    pub lambda_y: Vec<T>,
    pub delta_x: Vec<T>,
    pub delta_y: Vec<T>,
    pub g_x: Vec<T>,
    pub g_y: Vec<T>,
    pub dcal_x: Vec<T>,
    pub dcal_y: Vec<T>,
    pub a_minus_x: Vec<T>,
    pub a_plus_x: Vec<T>,
    pub a_minus_y: Vec<T>,
    pub a_plus_y: Vec<T>,
}

impl<T: Real> Coefficients<T> {
    pub fn from_lambda(grid: Grid<T>, lambda: (Vec<T>, Vec<T>), dcal: (Vec<T>, Vec<T>)) -> Result<Self> {
        let expected = x_len(grid.cells());
        for (name, len) in [
            ("lambda_x", lambda.0.len()),
            ("lambda_y", lambda.1.len()),
            ("dcal_x", dcal.0.len()),
            ("dcal_y", dcal.1.len()),
        ] {
            if len != expected {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {expected}")));
            }
        }
        let dw = grid.dw();
        let (lambda_x, lambda_y) = lambda;
        let (dcal_x, dcal_y) = dcal;
        let derive = |lam: &[T], d: &[T]| {
            let delta: Vec<T> = lam.iter().map(|&l| compute_delta(l)).collect();
            let g: Vec<T> = lam.iter().zip(d).map(|(&l, &d)| d * l / dw).collect();
            let am: Vec<T> = lam.iter().zip(d).map(|(&l, &d)| d * bernoulli(l) / dw).collect();
            // alpha(l) e^l = alpha(-l): positive without cancellation.
            let ap: Vec<T> = lam.iter().zip(d).map(|(&l, &d)| d * bernoulli(-l) / dw).collect();
            (delta, g, am, ap)
        };
        let (delta_x, g_x, a_minus_x, a_plus_x) = derive(&lambda_x, &dcal_x);
        let (delta_y, g_y, a_minus_y, a_plus_y) = derive(&lambda_y, &dcal_y);
        Ok(Self {
            grid,
            lambda_x,
            lambda_y,
            delta_x,
            delta_y,
            g_x,
            g_y,
            dcal_x,
            dcal_y,
            a_minus_x,
            a_plus_x,
            a_minus_y,
            a_plus_y,
        })
    }

    /// One-shot evaluation for a density `f`.
    pub fn compute(problem: &Problem<T>, f: &Field<T>, mode: WeightMode) -> Result<Self> {
        let dcal = effective_diffusions(&problem.diffusion, &problem.grid)?;
        let lambda = match mode {
            WeightMode::Quadrature(rule) => compute_lambda(problem, f, rule)?,
            WeightMode::Exact => steady_state_lambda(exact_target(problem)?)?,
        };
        Self::from_lambda(problem.grid, lambda, dcal)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn x_index(&self, i: usize, j: usize) -> usize {
        j * self.grid.cells() + i
    }

    #[inline]
    pub fn y_index(&self, i: usize, j: usize) -> usize {
        j * self.grid.points() + i
    }

    /// Largest `|G|` over x- and y-interfaces.
    pub fn max_drift(&self) -> (T, T) {
        let m = |v: &[T]| v.iter().fold(T::zero(), |acc, g| acc.max(g.abs()));
        (m(&self.g_x), m(&self.g_y))
    }

    /// Largest effective diffusion over x- and y-interfaces.
    pub fn max_diffusion(&self) -> (T, T) {
        let m = |v: &[T]| v.iter().fold(T::zero(), |acc, d| acc.max(*d));
        (m(&self.dcal_x), m(&self.dcal_y))
    }

    /// Discrete divergence written directly from the two-point rates into `out`.
    pub fn apply(&self, f: &[T], out: &mut [T]) {
        let n = self.grid.cells();
        let np = n + 1;
        let inv = self.grid.dw().recip();
        debug_assert_eq!(f.len(), np * np);
        debug_assert_eq!(out.len(), np * np);
        out.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..np {
            let row = j * np;
            let base = j * n;
            for i in 0..n {
                let k = base + i;
                let flux = (self.a_plus_x[k] * f[row + i + 1] - self.a_minus_x[k] * f[row + i]) * inv;
                out[row + i] += flux;
                out[row + i + 1] -= flux;
            }
        }
        for j in 0..n {
            let row = j * np;
            for i in 0..np {
                let k = row + i;
                let flux = (self.a_plus_y[k] * f[k + np] - self.a_minus_y[k] * f[k]) * inv;
                out[k] += flux;
                out[k + np] -= flux;
            }
        }
    }
}

fn exact_target<T: Real>(problem: &Problem<T>) -> Result<&Field<T>> {
    if problem.drift.depends_on_density() {
        return Err(Error::Config("exact steady-state weights require a density-independent drift".into()));
    }
    problem
        .steady_state
        .as_ref()
        .ok_or_else(|| Error::Config("exact steady-state weights require an analytic steady state".into()))
}

/// Numerical fluxes including the zero boundary ghosts.
///
/// `fx` holds `points + 1` entries per row `j`; entry `k` is the interface
/// `k - 1/2`, so `k = 0` and `k = points` are the boundary. `fy` is laid out
/// the same way with the roles of the axes swapped (entry `k * points + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField<T> {
    grid: Grid<T>,
    pub fx: Vec<T>,
    pub fy: Vec<T>,
}

impl<T: Real> FluxField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let len = (grid.points() + 1) * grid.points();
        Self { grid, fx: vec![T::zero(); len], fy: vec![T::zero(); len] }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// Flux through the x-interface `k - 1/2` on row `j`.
    #[inline]
    pub fn x(&self, k: usize, j: usize) -> T {
        self.fx[j * (self.grid.points() + 1) + k]
    }

    #[inline]
    pub fn x_mut(&mut self, k: usize, j: usize) -> &mut T {
        let np = self.grid.points();
        &mut self.fx[j * (np + 1) + k]
    }

    /// Flux through the y-interface `k - 1/2` on column `i`.
    #[inline]
    pub fn y(&self, i: usize, k: usize) -> T {
        self.fy[k * self.grid.points() + i]
    }

    #[inline]
    pub fn y_mut(&mut self, i: usize, k: usize) -> &mut T {
        let np = self.grid.points();
        &mut self.fy[k * np + i]
    }

    pub fn boundary_is_zero(&self) -> bool {
        let np = self.grid.points();
        (0..np).all(|j| self.x(0, j) == T::zero() && self.x(np, j) == T::zero())
            && (0..np).all(|i| self.y(i, 0) == T::zero() && self.y(i, np) == T::zero())
    }

    /// Largest interior flux magnitude.
    pub fn max_abs(&self) -> T {
        self.fx.iter().chain(&self.fy).fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

/// `F = G [(1 - delta) f(right) + delta f(left)] + D (f(right) - f(left)) / dw`
/// at interior interfaces; zero on the boundary.
pub fn assemble_fluxes<T: Real>(f: &Field<T>, coeffs: &Coefficients<T>) -> Result<FluxField<T>> {
    let grid = *coeffs.grid();
    if f.grid() != &grid {
        return Err(Error::Shape("density and coefficients live on different grids".into()));
    }
    let n = grid.cells();
    let np = grid.points();
    let dw = grid.dw();
    let mut flux = FluxField::zeros(grid);
    let form = |g: T, d: T, dc: T, left: T, right: T| g * ((T::one() - d) * right + d * left) + dc * (right - left) / dw;
    for j in 0..np {
        for i in 0..n {
            let k = coeffs.x_index(i, j);
            *flux.x_mut(i + 1, j) =
                form(coeffs.g_x[k], coeffs.delta_x[k], coeffs.dcal_x[k], f[(i, j)], f[(i + 1, j)]);
        }
    }
    for j in 0..n {
        for i in 0..np {
            let k = coeffs.y_index(i, j);
            *flux.y_mut(i, j + 1) =
                form(coeffs.g_y[k], coeffs.delta_y[k], coeffs.dcal_y[k], f[(i, j)], f[(i, j + 1)]);
        }
    }
    Ok(flux)
}

/// `(Fx(i+1/2) - Fx(i-1/2)) / dw + (Fy(j+1/2) - Fy(j-1/2)) / dw` at every node.
pub fn divergence<T: Real>(flux: &FluxField<T>) -> Field<T> {
    let grid = *flux.grid();
    let np = grid.points();
    let dw = grid.dw();
    let mut out = Field::zeros(grid);
    for j in 0..np {
        for i in 0..np {
            out[(i, j)] = (flux.x(i + 1, j) - flux.x(i, j) + flux.y(i, j + 1) - flux.y(i, j)) / dw;
        }
    }
    out
}

enum Plan<T> {
    /// Coefficients do not depend on the density.
    Frozen(Arc<Coefficients<T>>),
    /// Mean-field kernel: `lambda = m K_w - M1x K_x - M1y K_y + K_div`.
    Affine { k_w: (Vec<T>, Vec<T>), k_x: (Vec<T>, Vec<T>), k_y: (Vec<T>, Vec<T>), k_div: (Vec<T>, Vec<T>) },
    /// General kernel; full quadrature every refresh.
    Full(QuadratureRule),
}

/// Coefficient provider for time stepping: caches what does not depend on
/// the density and counts refreshes.
pub struct FluxOperator<T> {
    problem: Problem<T>,
    mode: WeightMode,
    dcal: (Vec<T>, Vec<T>),
    plan: Plan<T>,
    refreshes: AtomicUsize,
}

impl<T: Real> FluxOperator<T> {
    pub fn new(problem: Problem<T>, mode: WeightMode) -> Result<Self> {
        let dcal = effective_diffusions(&problem.diffusion, &problem.grid)?;
        let plan = match (&problem.drift, mode) {
            (Drift::Nonlocal(_), WeightMode::Exact) => {
                return Err(Error::Config("exact steady-state weights require a density-independent drift".into()))
            }
            (Drift::Nonlocal(Kernel::Uniform), WeightMode::Quadrature(rule)) => {
                let grid = problem.grid;
                let d = &problem.diffusion;
                let k_w = line_integrals(&grid, d, rule, |x, y| Ok([x, y]))?;
                let k_x = line_integrals(&grid, d, rule, |_, _| Ok([T::one(), T::zero()]))?;
                let k_y = line_integrals(&grid, d, rule, |_, _| Ok([T::zero(), T::one()]))?;
                let k_div = line_integrals(&grid, d, rule, |x, y| d.divergence(x, y))?;
                Plan::Affine { k_w, k_x, k_y, k_div }
            }
            (Drift::Nonlocal(Kernel::General(_)), WeightMode::Quadrature(rule)) => Plan::Full(rule),
            _ => Plan::Frozen(Arc::new(Coefficients::compute(&problem, &problem.initial, mode)?)),
        };
        Ok(Self { problem, mode, dcal, plan, refreshes: AtomicUsize::new(0) })
    }

    pub fn problem(&self) -> &Problem<T> {
        &self.problem
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.problem.grid
    }

    /// Whether coefficients change with the density.
    pub fn is_frozen(&self) -> bool {
        matches!(self.plan, Plan::Frozen(_))
    }

    /// Number of coefficient requests served so far.
    pub fn refresh_count(&self) -> usize {
        self.refreshes.load(Ordering::Relaxed)
    }

    /// Coefficients for the density `f`.
    pub fn coefficients(&self, f: &Field<T>) -> Result<Arc<Coefficients<T>>> {
        self.refreshes.fetch_add(1, Ordering::Relaxed);
        match &self.plan {
            Plan::Frozen(c) => Ok(Arc::clone(c)),
            Plan::Affine { k_w, k_x, k_y, k_div } => {
                let DriftState::Moments { mass, first } = self.problem.drift.prepare(f) else {
                    unreachable!("uniform kernel always prepares moments")
                };
                let combine = |w: &[T], x: &[T], y: &[T], d: &[T]| -> Vec<T> {
                    (0..w.len()).map(|k| mass * w[k] - first[0] * x[k] - first[1] * y[k] + d[k]).collect()
                };
                let lx = combine(&k_w.0, &k_x.0, &k_y.0, &k_div.0);
                let ly = combine(&k_w.1, &k_x.1, &k_y.1, &k_div.1);
                Ok(Arc::new(Coefficients::from_lambda(self.problem.grid, (lx, ly), self.dcal.clone())?))
            }
            Plan::Full(rule) => {
                let lambda = compute_lambda(&self.problem, f, *rule)?;
                Ok(Arc::new(Coefficients::from_lambda(self.problem.grid, lambda, self.dcal.clone())?))
            }
        }
    }
}
