//! Problem description: diffusion matrix field, drift operator, initial data
//! and (optionally) the analytic stationary state.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn(T, T) -> [T; 2] + Send + Sync>;
/// Interaction kernel `P(w, w_*)`.
pub type KernelFn<T> = Arc<dyn Fn([T; 2], [T; 2]) -> T + Send + Sync>;

/// First derivatives of the diffusion entries that enter `div D`.
#[derive(Clone)]
pub enum Partials<T> {
    Missing,
    Analytic {
        dx_d11: ScalarFn<T>,
        dy_d21: ScalarFn<T>,
        dx_d12: ScalarFn<T>,
        dy_d22: ScalarFn<T>,
    },
    /// Central differences with the given step.
    FiniteDifference { step: T },
}

/// Symmetric 2x2 diffusion matrix field; `d21` is `d12`.
#[derive(Clone)]
pub struct Diffusion<T> {
    pub d11: ScalarFn<T>,
    pub d12: ScalarFn<T>,
    pub d22: ScalarFn<T>,
    pub partials: Partials<T>,
}

impl<T: Real> Diffusion<T> {
    pub fn new(d11: ScalarFn<T>, d12: ScalarFn<T>, d22: ScalarFn<T>) -> Self {
        Self { d11, d12, d22, partials: Partials::Missing }
    }

    pub fn with_partials(
        mut self,
        dx_d11: ScalarFn<T>,
        dy_d21: ScalarFn<T>,
        dx_d12: ScalarFn<T>,
        dy_d22: ScalarFn<T>,
    ) -> Self {
        self.partials = Partials::Analytic { dx_d11, dy_d21, dx_d12, dy_d22 };
        self
    }

    /// Falls back to central differences with step `1e-6 * (b - a)`.
    pub fn with_finite_difference_partials(mut self, grid: &Grid<T>) -> Self {
        self.partials = Partials::FiniteDifference { step: T::lit(1e-6) * (grid.b() - grid.a()) };
        self
    }

    /// Constant diagonal matrix `diag(d1, d2)`.
    pub fn constant_diagonal(d1: T, d2: T) -> Self {
        let zero: ScalarFn<T> = Arc::new(|_, _| T::zero());
        Self::new(Arc::new(move |_, _| d1), zero.clone(), Arc::new(move |_, _| d2))
            .with_partials(zero.clone(), zero.clone(), zero.clone(), zero)
    }

    /// `(d11, d12, d22)` at `(x, y)`.
    #[inline]
    pub fn entries(&self, x: T, y: T) -> [T; 3] {
        [(self.d11)(x, y), (self.d12)(x, y), (self.d22)(x, y)]
    }

    /// `div D = (dx d11 + dy d21, dx d12 + dy d22)`.
    pub fn divergence(&self, x: T, y: T) -> Result<[T; 2]> {
        match &self.partials {
            Partials::Analytic { dx_d11, dy_d21, dx_d12, dy_d22 } => {
                Ok([dx_d11(x, y) + dy_d21(x, y), dx_d12(x, y) + dy_d22(x, y)])
            }
            Partials::FiniteDifference { step } => {
                let h = *step;
                let two_h = h + h;
                let dx = |g: &ScalarFn<T>| (g(x + h, y) - g(x - h, y)) / two_h;
                let dy = |g: &ScalarFn<T>| (g(x, y + h) - g(x, y - h)) / two_h;
                Ok([dx(&self.d11) + dy(&self.d12), dx(&self.d12) + dy(&self.d22)])
            }
            Partials::Missing => Err(Error::Config(
                "diffusion partial derivatives are required to evaluate the drift correction".into(),
            )),
        }
    }

    /// Matrix-vector product `D(x, y) v`.
    #[inline]
    pub fn apply(&self, x: T, y: T, v: [T; 2]) -> [T; 2] {
        let [d11, d12, d22] = self.entries(x, y);
        [d11 * v[0] + d12 * v[1], d12 * v[0] + d22 * v[1]]
    }

    /// Effective x-diffusion `d11 - d12^2 / d22`. Where `d22` vanishes
    /// (which forces `d12 = 0` for a positive semidefinite matrix) the
    /// coupling term is absent and `d11` is returned.
    #[inline]
    pub fn effective_x(&self, x: T, y: T) -> T {
        let [d11, d12, d22] = self.entries(x, y);
        if d22 == T::zero() {
            d11
        } else {
            d11 - d12 * d12 / d22
        }
    }

    /// Effective y-diffusion `d22 - d12^2 / d11`, same convention as [`Self::effective_x`].
    #[inline]
    pub fn effective_y(&self, x: T, y: T) -> T {
        let [d11, d12, d22] = self.entries(x, y);
        if d11 == T::zero() {
            d22
        } else {
            d22 - d12 * d12 / d11
        }
    }

    pub fn is_positive_definite_at(&self, x: T, y: T) -> bool {
        let [d11, d12, d22] = self.entries(x, y);
        d11 > T::zero() && d22 > T::zero() && d11 * d22 - d12 * d12 > T::zero()
    }
}

impl<T> fmt::Debug for Diffusion<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let partials = match self.partials {
            Partials::Missing => "missing",
            Partials::Analytic { .. } => "analytic",
            Partials::FiniteDifference { .. } => "finite-difference",
        };
        f.debug_struct("Diffusion").field("partials", &partials).finish_non_exhaustive()
    }
}

/// Kernel of the nonlocal drift `B[f](w) = ∫ P(w, w_*) (w - w_*) f(w_*) dw_*`.
#[derive(Clone)]
pub enum Kernel<T> {
    /// `P ≡ 1`; the drift reduces to `m w - M1` with the discrete moments of `f`.
    Uniform,
    General(KernelFn<T>),
}

#[derive(Clone)]
pub enum Drift<T> {
    /// Prescribed `B(w)`.
    Linear(VectorFn<T>),
    Nonlocal(Kernel<T>),
    /// `B = -div D - D grad(phi)`; the vanishing-flux stationary state is
    /// proportional to `exp(phi)`.
    Gradient { phi: ScalarFn<T>, grad_phi: VectorFn<T> },
}

impl<T> fmt::Debug for Drift<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Linear(_) => f.write_str("Linear"),
            Drift::Nonlocal(Kernel::Uniform) => f.write_str("Nonlocal(P = 1)"),
            Drift::Nonlocal(Kernel::General(_)) => f.write_str("Nonlocal(P)"),
            Drift::Gradient { .. } => f.write_str("Gradient"),
        }
    }
}

impl<T: Real> Drift<T> {
    /// Whether the drift depends on the density (and coefficients must be refreshed).
    pub fn depends_on_density(&self) -> bool {
        matches!(self, Drift::Nonlocal(_))
    }

    /// Snapshot of the density information the drift needs for one stage.
    pub fn prepare(&self, f: &Field<T>) -> DriftState<T> {
        match self {
            Drift::Nonlocal(Kernel::Uniform) => {
                let m = trapezoid_moments(f);
                DriftState::Moments { mass: m[0], first: [m[1], m[2]] }
            }
            Drift::Nonlocal(Kernel::General(_)) => {
                let grid = *f.grid();
                let np = grid.points();
                let dw2 = grid.dw() * grid.dw();
                let mut samples = Vec::with_capacity(grid.len());
                for j in 0..np {
                    for i in 0..np {
                        let wgt = dw2 * trapezoid_factor::<T>(i, np) * trapezoid_factor::<T>(j, np);
                        samples.push(([grid.node(i), grid.node(j)], wgt * f[(i, j)]));
                    }
                }
                DriftState::Samples(samples)
            }
            _ => DriftState::None,
        }
    }
}

/// Per-stage density information consumed by the nonlocal drift.
#[derive(Debug, Clone)]
pub enum DriftState<T> {
    None,
    Moments { mass: T, first: [T; 2] },
    /// Node positions with trapezoid-weighted density values.
    Samples(Vec<([T; 2], T)>),
}

#[inline]
fn trapezoid_factor<T: Real>(i: usize, np: usize) -> T {
    if i == 0 || i + 1 == np {
        T::lit(0.5)
    } else {
        T::one()
    }
}

/// Trapezoidal `(∫f, ∫w_x f, ∫w_y f)` over the nodal grid.
pub fn trapezoid_moments<T: Real>(f: &Field<T>) -> [T; 3] {
    let grid = f.grid();
    let np = grid.points();
    let dw2 = grid.dw() * grid.dw();
    let mut acc = [T::zero(); 3];
    for j in 0..np {
        let y = grid.node(j);
        let cj = trapezoid_factor::<T>(j, np);
        for i in 0..np {
            let w = cj * trapezoid_factor::<T>(i, np) * f[(i, j)];
            acc[0] += w;
            acc[1] += w * grid.node(i);
            acc[2] += w * y;
        }
    }
    acc.map(|v| v * dw2)
}

/// A complete initial-value problem on a square grid.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub grid: Grid<T>,
    pub diffusion: Diffusion<T>,
    pub drift: Drift<T>,
    pub initial: Field<T>,
    pub steady_state: Option<Field<T>>,
}

impl<T: Real> Problem<T> {
    pub fn new(grid: Grid<T>, diffusion: Diffusion<T>, drift: Drift<T>, initial: Field<T>) -> Result<Self> {
        if initial.grid() != &grid {
            return Err(Error::Shape("initial data lives on a different grid".into()));
        }
        if initial.values().iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Domain("initial data must be finite and nonnegative".into()));
        }
        Ok(Self { grid, diffusion, drift, initial, steady_state: None })
    }

    pub fn with_steady_state(mut self, f_inf: Field<T>) -> Result<Self> {
        if f_inf.grid() != &self.grid {
            return Err(Error::Shape("steady state lives on a different grid".into()));
        }
        self.steady_state = Some(f_inf);
        Ok(self)
    }

    fn check_domain(&self, x: T, y: T) -> Result<()> {
        if self.grid.contains(x, y) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point ({x}, {y}) lies outside the computational domain")))
        }
    }

    /// `B[f](w)` given a prepared drift state.
    pub fn drift_with_state(&self, x: T, y: T, state: &DriftState<T>) -> Result<[T; 2]> {
        self.check_domain(x, y)?;
        match (&self.drift, state) {
            (Drift::Linear(b), _) => Ok(b(x, y)),
            (Drift::Gradient { grad_phi, .. }, _) => {
                let div = self.diffusion.divergence(x, y)?;
                let dg = self.diffusion.apply(x, y, grad_phi(x, y));
                Ok([-div[0] - dg[0], -div[1] - dg[1]])
            }
            (Drift::Nonlocal(Kernel::Uniform), DriftState::Moments { mass, first }) => {
                Ok([*mass * x - first[0], *mass * y - first[1]])
            }
            (Drift::Nonlocal(Kernel::General(p)), DriftState::Samples(samples)) => {
                let mut b = [T::zero(); 2];
                for &(ws, wf) in samples {
                    let k = p([x, y], ws) * wf;
                    b[0] += k * (x - ws[0]);
                    b[1] += k * (y - ws[1]);
                }
                Ok(b)
            }
            (Drift::Nonlocal(_), _) => {
                Err(Error::Config("nonlocal drift evaluated without a matching density state".into()))
            }
        }
    }

    /// `B[f](w)`.
    pub fn eval_drift(&self, x: T, y: T, f: &Field<T>) -> Result<[T; 2]> {
        let state = self.drift.prepare(f);
        self.drift_with_state(x, y, &state)
    }

    /// `C = B[f] + div D`.
    pub fn eval_c(&self, x: T, y: T, f: &Field<T>) -> Result<[T; 2]> {
        let state = self.drift.prepare(f);
        self.c_with_state(x, y, &state)
    }

    pub fn c_with_state(&self, x: T, y: T, state: &DriftState<T>) -> Result<[T; 2]> {
        let b = self.drift_with_state(x, y, state)?;
        let div = self.diffusion.divergence(x, y)?;
        Ok([b[0] + div[0], b[1] + div[1]])
    }
}

/// Parameters of the two built-in test problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinParams<T> {
    /// Standard deviations (the diffusion entries scale with their squares).
    pub sigma1: T,
    pub sigma2: T,
    /// Correlation coefficient, `|rho| < 1`.
    pub rho: T,
    /// Potential strength, `phi(w) = -d (w_x^8 + w_y^8)`.
    pub d: T,
    /// Width and offset of the bimodal initial datum.
    pub c: T,
    pub mu: T,
}

impl<T: Real> Default for BuiltinParams<T> {
    fn default() -> Self {
        Self {
            sigma1: T::one(),
            sigma2: T::one(),
            rho: T::lit(0.9),
            d: T::lit(12.5),
            c: T::lit(30.0),
            mu: T::lit(0.5),
        }
    }
}

impl<T: Real> BuiltinParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < T::one()) {
            return Err(Error::Config(format!(
                "|rho| = {} >= 1: diffusion matrix loses positive definiteness",
                self.rho.abs()
            )));
        }
        if !(self.sigma1 > T::zero()) || !(self.sigma2 > T::zero()) {
            return Err(Error::Config("sigma1 and sigma2 must be positive".into()));
        }
        if !(self.c > T::zero()) {
            return Err(Error::Config("initial width parameter c must be positive".into()));
        }
        Ok(())
    }
}

/// Degenerate anisotropic diffusion on `[-1, 1]^2`:
/// `d11 = s1^2 (1-x^2)^2 / 2`, `d12 = rho s1 s2 (1-x^2)(1-y^2) / 4`, `d22 = s2^2 (1-y^2)^2 / 2`.
pub fn degenerate_diffusion<T: Real>(sigma1: T, sigma2: T, rho: T) -> Diffusion<T> {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let s11 = sigma1 * sigma1;
    let s22 = sigma2 * sigma2;
    let s12 = rho * sigma1 * sigma2 * T::lit(0.25);
    let d11: ScalarFn<T> = Arc::new(move |x, _| {
        let u = T::one() - x * x;
        half * s11 * u * u
    });
    let d12: ScalarFn<T> = Arc::new(move |x, y| s12 * (T::one() - x * x) * (T::one() - y * y));
    let d22: ScalarFn<T> = Arc::new(move |_, y| {
        let v = T::one() - y * y;
        half * s22 * v * v
    });
    let dx_d11: ScalarFn<T> = Arc::new(move |x, _| -two * s11 * x * (T::one() - x * x));
    let dy_d21: ScalarFn<T> = Arc::new(move |x, y| -two * s12 * y * (T::one() - x * x));
    let dx_d12: ScalarFn<T> = Arc::new(move |x, y| -two * s12 * x * (T::one() - y * y));
    let dy_d22: ScalarFn<T> = Arc::new(move |_, y| -two * s22 * y * (T::one() - y * y));
    Diffusion::new(d11, d12, d22).with_partials(dx_d11, dy_d21, dx_d12, dy_d22)
}

/// Bimodal Gaussian datum centred at `±(mu, mu)`, normalized to unit discrete mass.
pub fn bimodal_initial<T: Real>(grid: Grid<T>, c: T, mu: T) -> Result<Field<T>> {
    let g = move |s: T| (-c * s * s).exp();
    let mut f = Field::from_fn(grid, move |x, y| g(x + mu) * g(y + mu) + g(x - mu) * g(y - mu));
    f.normalize()?;
    Ok(f)
}

fn unit_square<T: Real>(cells: usize) -> Result<Grid<T>> {
    Grid::new(-T::one(), T::one(), cells)
}

/// Validation problem with vanishing flux at equilibrium: gradient drift
/// built from `phi(w) = -d (w_x^8 + w_y^8)`, analytic stationary state
/// `exp(phi)` normalized on the grid.
pub fn builtin_test1<T: Real>(params: BuiltinParams<T>, cells: usize) -> Result<Problem<T>> {
    params.validate()?;
    let grid = unit_square(cells)?;
    let d = params.d;
    let eight = T::lit(8.0);
    let phi: ScalarFn<T> = Arc::new(move |x, y| -d * (x.powi(8) + y.powi(8)));
    let grad_phi: VectorFn<T> = Arc::new(move |x, y| [-eight * d * x.powi(7), -eight * d * y.powi(7)]);
    let diffusion = degenerate_diffusion(params.sigma1, params.sigma2, params.rho);
    let initial = bimodal_initial(grid, params.c, params.mu)?;
    let phi_eval = phi.clone();
    let mut f_inf = Field::from_fn(grid, move |x, y| phi_eval(x, y).exp());
    f_inf.normalize()?;
    Problem::new(grid, diffusion, Drift::Gradient { phi, grad_phi }, initial)?.with_steady_state(f_inf)
}

/// Alignment problem with the mean-field kernel `P ≡ 1`; no analytic equilibrium.
pub fn builtin_test2<T: Real>(params: BuiltinParams<T>, cells: usize) -> Result<Problem<T>> {
    params.validate()?;
    let grid = unit_square(cells)?;
    let diffusion = degenerate_diffusion(params.sigma1, params.sigma2, params.rho);
    let initial = bimodal_initial(grid, params.c, params.mu)?;
    Problem::new(grid, diffusion, Drift::Nonlocal(Kernel::Uniform), initial)
}
