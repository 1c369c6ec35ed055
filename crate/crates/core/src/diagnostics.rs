//! Conserved quantities, errors, convergence orders and discrete entropy
//! functionals.

use crate::error::{Error, Result};
use crate::flux::{assemble_fluxes, Coefficients};
use crate::grid::Field;
use crate::scalar::Real;

pub fn mass<T: Real>(f: &Field<T>) -> T {
    f.mass()
}

fn same_grid<T: Real>(a: &Field<T>, b: &Field<T>) -> Result<()> {
    if a.grid() == b.grid() {
        Ok(())
    } else {
        Err(Error::Shape("fields live on different grids".into()))
    }
}

fn require_positive<T: Real>(f: &Field<T>, what: &str) -> Result<()> {
    match f.values().iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
        None => Ok(()),
        Some(k) => {
            let np = f.grid().points();
            Err(Error::Domain(format!("{what} must be positive; node ({}, {}) holds {}", k % np, k / np, f.values()[k])))
        }
    }
}

/// Discrete `L1` norm `dw^2 sum |f|`.
pub fn l1_norm<T: Real>(f: &Field<T>) -> T {
    let dw = f.grid().dw();
    dw * dw * f.values().iter().map(|v| v.abs()).sum::<T>()
}

/// Discrete `L1` distance.
pub fn l1_distance<T: Real>(a: &Field<T>, b: &Field<T>) -> Result<T> {
    same_grid(a, b)?;
    let dw = a.grid().dw();
    Ok(dw * dw * a.values().iter().zip(b.values()).map(|(x, y)| (*x - *y).abs()).sum::<T>())
}

/// `||f - f_ref||_1 / ||f_ref||_1`.
pub fn rel_l1_error<T: Real>(f: &Field<T>, f_ref: &Field<T>) -> Result<T> {
    let denom = l1_norm(f_ref);
    if denom == T::zero() {
        return Err(Error::Domain("reference field has zero L1 norm".into()));
    }
    Ok(l1_distance(f, f_ref)? / denom)
}

/// Observed order from two errors; `Saturated` when the finer error is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order<T> {
    Value(T),
    Saturated,
}

impl<T: Real> Order<T> {
    pub fn from_errors(coarse: T, fine: T) -> Self {
        if fine == T::zero() {
            Order::Saturated
        } else {
            Order::Value((coarse / fine).log2())
        }
    }

    pub fn value(self) -> Option<T> {
        match self {
            Order::Value(v) => Some(v),
            Order::Saturated => None,
        }
    }
}

/// Order from three nested solutions, `log2(|f2 - f1| / |f3 - f2|)` with
/// both norms taken on the coarsest node set.
pub fn successive_refinement_order<T: Real>(coarse: &Field<T>, mid: &Field<T>, fine: &Field<T>) -> Result<Order<T>> {
    let g = *coarse.grid();
    if !(g.cells() < mid.grid().cells() && mid.grid().cells() < fine.grid().cells()) {
        return Err(Error::Shape("grids must be strictly refined from coarse to fine".into()));
    }
    if !mid.grid().nests_into(fine.grid()) {
        return Err(Error::Shape("middle grid does not nest into the fine grid".into()));
    }
    let m = mid.restrict_to(&g)?;
    let f = fine.restrict_to(&g)?;
    Ok(Order::from_errors(l1_distance(&m, coarse)?, l1_distance(&f, &m)?))
}

/// `H = dw^2 sum f log(f / f_inf)`, with `0 log 0 = 0`.
pub fn relative_entropy<T: Real>(f: &Field<T>, f_inf: &Field<T>) -> Result<T> {
    same_grid(f, f_inf)?;
    require_positive(f_inf, "steady state")?;
    let dw = f.grid().dw();
    let mut acc = T::zero();
    for (&v, &r) in f.values().iter().zip(f_inf.values()) {
        if v < T::zero() {
            return Err(Error::Domain(format!("entropy of a negative density value {v}")));
        }
        if v > T::zero() {
            acc += v * (v / r).ln();
        }
    }
    Ok(dw * dw * acc)
}

/// `dw^2 sum (f - f_inf)^2 / f_inf`.
pub fn weighted_l2_distance<T: Real>(f: &Field<T>, f_inf: &Field<T>) -> Result<T> {
    same_grid(f, f_inf)?;
    require_positive(f_inf, "steady state")?;
    let dw = f.grid().dw();
    let s: T = f.values().iter().zip(f_inf.values()).map(|(&v, &r)| (v - r) * (v - r) / r).sum();
    Ok(dw * dw * s)
}

/// Logarithmic mean `(x - y) / (log x - log y)`, `x` when equal.
pub fn log_mean<T: Real>(x: T, y: T) -> T {
    if x == y {
        return x;
    }
    let r = (x - y) / y;
    y * r / r.ln_1p()
}

/// Interface value `x y log(x / y) / (x - y) = x y / L(x, y)`.
pub fn hat_mean<T: Real>(x: T, y: T) -> T {
    x * y / log_mean(x, y)
}

/// Interface values of the steady state entering the entropy form of the flux.
pub fn log_mean_interface<T: Real>(f_inf: &Field<T>) -> Result<(Vec<T>, Vec<T>)> {
    require_positive(f_inf, "steady state")?;
    let g = f_inf.grid();
    let (n, np) = (g.cells(), g.points());
    let mut hx = Vec::with_capacity(n * np);
    for j in 0..np {
        for i in 0..n {
            hx.push(hat_mean(f_inf[(i + 1, j)], f_inf[(i, j)]));
        }
    }
    let mut hy = Vec::with_capacity(n * np);
    for j in 0..n {
        for i in 0..np {
            hy.push(hat_mean(f_inf[(i, j + 1)], f_inf[(i, j)]));
        }
    }
    Ok((hx, hy))
}

/// Discrete entropy dissipation
/// `sum over interfaces of [log F(right) - log F(left)] (F(right) - F(left)) f_hat D`
/// with `F = f / f_inf`; it equals `-dH/dt` for the semi-discrete scheme
/// with exact steady-state weights.
pub fn dissipation_functional<T: Real>(f: &Field<T>, f_inf: &Field<T>, coeffs: &Coefficients<T>) -> Result<T> {
    same_grid(f, f_inf)?;
    require_positive(f, "density")?;
    let (hx, hy) = log_mean_interface(f_inf)?;
    let g = f.grid();
    let (n, np) = (g.cells(), g.points());
    let ratio: Vec<T> = f.values().iter().zip(f_inf.values()).map(|(&a, &b)| a / b).collect();
    let logs: Vec<T> = ratio.iter().map(|r| r.ln()).collect();
    let term = |a: usize, b: usize, h: T, d: T| (logs[b] - logs[a]) * (ratio[b] - ratio[a]) * h * d;
    let mut acc = T::zero();
    for j in 0..np {
        for i in 0..n {
            let k = j * n + i;
            acc += term(g.index(i, j), g.index(i + 1, j), hx[k], coeffs.dcal_x[k]);
        }
    }
    for j in 0..n {
        for i in 0..np {
            let k = j * np + i;
            acc += term(g.index(i, j), g.index(i, j + 1), hy[k], coeffs.dcal_y[k]);
        }
    }
    Ok(acc)
}

/// Largest deviation between the assembled flux and its entropy form
/// `(D / dw) f_hat (F(right) - F(left))`, together with the largest flux
/// magnitude for scaling.
pub fn entropy_flux_identity_check<T: Real>(
    f: &Field<T>,
    f_inf: &Field<T>,
    coeffs: &Coefficients<T>,
) -> Result<(T, T)> {
    same_grid(f, f_inf)?;
    let flux = assemble_fluxes(f, coeffs)?;
    let (hx, hy) = log_mean_interface(f_inf)?;
    let g = f.grid();
    let (n, np, dw) = (g.cells(), g.points(), g.dw());
    let ratio = |i: usize, j: usize| f[(i, j)] / f_inf[(i, j)];
    let mut dev = T::zero();
    for j in 0..np {
        for i in 0..n {
            let k = j * n + i;
            let form = coeffs.dcal_x[k] / dw * hx[k] * (ratio(i + 1, j) - ratio(i, j));
            dev = dev.max((flux.x(i + 1, j) - form).abs());
        }
    }
    for j in 0..n {
        for i in 0..np {
            let k = j * np + i;
            let form = coeffs.dcal_y[k] / dw * hy[k] * (ratio(i, j + 1) - ratio(i, j));
            dev = dev.max((flux.y(i, j + 1) - form).abs());
        }
    }
    Ok((dev, flux.max_abs()))
}

/// One observed-order entry of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderEntry<T> {
    pub scheme: String,
    pub time: T,
    pub errors: Vec<T>,
    pub orders: Vec<Order<T>>,
}

/// Time series collected along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport<T> {
    pub times: Vec<T>,
    pub mass: Vec<T>,
    pub min_value: Vec<T>,
    pub rel_l1_error: Option<Vec<T>>,
    pub entropy: Option<Vec<T>>,
    /// `NaN` where the density has a nonpositive node.
    pub dissipation: Option<Vec<T>>,
    pub orders: Vec<OrderEntry<T>>,
}

impl<T: Real> StudyReport<T> {
    pub fn new(with_reference: bool) -> Self {
        let opt = || with_reference.then(Vec::new);
        Self {
            times: Vec::new(),
            mass: Vec::new(),
            min_value: Vec::new(),
            rel_l1_error: opt(),
            entropy: opt(),
            dissipation: opt(),
            orders: Vec::new(),
        }
    }

    /// Appends the diagnostics of `f` at time `t`.
    pub fn record(&mut self, t: T, f: &Field<T>, f_inf: Option<&Field<T>>, coeffs: &Coefficients<T>) -> Result<()> {
        self.times.push(t);
        self.mass.push(f.mass());
        self.min_value.push(f.min_value());
        if let Some(r) = f_inf {
            if let Some(v) = self.rel_l1_error.as_mut() {
                v.push(rel_l1_error(f, r)?);
            }
            let nonneg = f.min_value() >= T::zero();
            if let Some(v) = self.entropy.as_mut() {
                v.push(if nonneg { relative_entropy(f, r)? } else { T::nan() });
            }
            if let Some(v) = self.dissipation.as_mut() {
                v.push(if f.min_value() > T::zero() { dissipation_functional(f, r, coeffs)? } else { T::nan() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// All series share the length of `times`.
    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        self.mass.len() == n
            && self.min_value.len() == n
            && [&self.rel_l1_error, &self.entropy, &self.dissipation]
                .iter()
                .all(|s| s.as_ref().is_none_or(|v| v.len() == n))
    }

    /// Largest relative deviation of the mass from its first value.
    pub fn mass_drift(&self) -> T {
        let Some(&m0) = self.mass.first() else { return T::zero() };
        self.mass.iter().fold(T::zero(), |acc, m| acc.max(((*m - m0) / m0).abs()))
    }
}
