//! Open one-dimensional quadrature rules for the interface integrals.
//!
//! Every rule evaluates its integrand strictly inside the interval, so
//! integrands that blow up where the diffusion matrix degenerates on the
//! domain boundary are never sampled there.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Open Newton-Cotes weights on `[0, 1]` with nodes `k / (p + 1)`, `k = 1..=p`.
const NC2: [f64; 2] = [0.5, 0.5];
const NC4: [f64; 4] = [11.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0, 11.0 / 24.0];
const NC6: [f64; 6] = [
    611.0 / 1440.0,
    -453.0 / 1440.0,
    562.0 / 1440.0,
    562.0 / 1440.0,
    -453.0 / 1440.0,
    611.0 / 1440.0,
];

const GAUSS_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureRule {
    Midpoint,
    OpenNewtonCotes2,
    OpenNewtonCotes4,
    OpenNewtonCotes6,
    GaussLegendre8,
}

impl QuadratureRule {
    pub const ALL: [QuadratureRule; 5] = [
        QuadratureRule::Midpoint,
        QuadratureRule::OpenNewtonCotes2,
        QuadratureRule::OpenNewtonCotes4,
        QuadratureRule::OpenNewtonCotes6,
        QuadratureRule::GaussLegendre8,
    ];

    /// The four rules compared in the convergence studies (`SP_2`, `SP_4`, `SP_6`, `SP_G`).
    pub const STUDY: [QuadratureRule; 4] = [
        QuadratureRule::OpenNewtonCotes2,
        QuadratureRule::OpenNewtonCotes4,
        QuadratureRule::OpenNewtonCotes6,
        QuadratureRule::GaussLegendre8,
    ];

    /// Highest polynomial degree integrated exactly.
    pub fn degree(self) -> usize {
        match self {
            Self::Midpoint | Self::OpenNewtonCotes2 => 1,
            Self::OpenNewtonCotes4 => 3,
            Self::OpenNewtonCotes6 => 5,
            Self::GaussLegendre8 => 2 * GAUSS_POINTS - 1,
        }
    }

    /// Nominal order of the composite rule.
    pub fn order(self) -> usize {
        self.degree() + 1
    }

    pub fn len(self) -> usize {
        match self {
            Self::Midpoint => 1,
            Self::OpenNewtonCotes2 => 2,
            Self::OpenNewtonCotes4 => 4,
            Self::OpenNewtonCotes6 => 6,
            Self::GaussLegendre8 => GAUSS_POINTS,
        }
    }

    /// Short name used on the command line and in CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Self::Midpoint => "mid",
            Self::OpenNewtonCotes2 => "nc2",
            Self::OpenNewtonCotes4 => "nc4",
            Self::OpenNewtonCotes6 => "nc6",
            Self::GaussLegendre8 => "gauss8",
        }
    }

    /// Nodes and weights on `[0, 1]`.
    pub fn reference<T: Real>(self) -> Vec<(T, T)> {
        let open_nc = |weights: &[f64]| {
            let denom = T::from_usize_lossy(weights.len() + 1);
            weights
                .iter()
                .enumerate()
                .map(|(k, &w)| (T::from_usize_lossy(k + 1) / denom, T::lit(w)))
                .collect()
        };
        match self {
            Self::Midpoint => vec![(T::lit(0.5), T::one())],
            Self::OpenNewtonCotes2 => open_nc(&NC2),
            Self::OpenNewtonCotes4 => open_nc(&NC4),
            Self::OpenNewtonCotes6 => open_nc(&NC6),
            Self::GaussLegendre8 => gauss_legendre::<T>(GAUSS_POINTS)
                .into_iter()
                .map(|(x, w)| ((x + T::one()) * T::lit(0.5), w * T::lit(0.5)))
                .collect(),
        }
    }

    /// Nodes and weights mapped onto `[lo, hi]`.
    pub fn nodes_and_weights<T: Real>(self, lo: T, hi: T) -> Result<Vec<(T, T)>> {
        if !(lo < hi) {
            return Err(Error::Domain(format!("quadrature interval [{lo}, {hi}] is empty")));
        }
        let h = hi - lo;
        Ok(self.reference::<T>().into_iter().map(|(x, w)| (lo + h * x, h * w)).collect())
    }

    pub fn integrate<T: Real>(self, f: impl Fn(T) -> T, lo: T, hi: T) -> Result<T> {
        let mut acc = T::zero();
        for (x, w) in self.nodes_and_weights(lo, hi)? {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { node: x.as_f64() });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mid" | "midpoint" => Ok(Self::Midpoint),
            "nc2" | "open-newton-cotes-2" | "sp2" => Ok(Self::OpenNewtonCotes2),
            "nc4" | "open-newton-cotes-4" | "sp4" => Ok(Self::OpenNewtonCotes4),
            "nc6" | "open-newton-cotes-6" | "sp6" => Ok(Self::OpenNewtonCotes6),
            "gauss8" | "gauss" | "gauss-legendre-8" | "spg" => Ok(Self::GaussLegendre8),
            other => Err(Error::Config(format!(
                "unknown quadrature rule '{other}' (expected mid, nc2, nc4, nc6 or gauss8)"
            ))),
        }
    }
}

/// Free-function form of [`QuadratureRule::nodes_and_weights`].
pub fn nodes_and_weights<T: Real>(rule: QuadratureRule, lo: T, hi: T) -> Result<Vec<(T, T)>> {
    rule.nodes_and_weights(lo, hi)
}

/// Free-function form of [`QuadratureRule::integrate`].
pub fn integrate_1d<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, rule: QuadratureRule) -> Result<T> {
    rule.integrate(f, lo, hi)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
fn gauss_legendre<T: Real>(n: usize) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(n);
    let nn = T::from_usize_lossy(n);
    for k in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let theta = T::PI() * (T::from_usize_lossy(k) + T::lit(0.75)) / (nn + T::lit(0.5));
        let mut x = theta.cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= T::epsilon() * T::lit(4.0) {
                let (_, d) = legendre(n, x);
                dp = d;
                break;
            }
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        out.push((x, w));
    }
    out.reverse();
    out
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kk = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kk - T::one()) * x * p1 - (kk - T::one()) * p0) / kk;
        p0 = p1;
        p1 = p2;
    }
    let nn = T::from_usize_lossy(n);
    let dp = nn * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}
