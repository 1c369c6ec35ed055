//! Uniform square grids and nodal density fields.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid on `[a, b] x [a, b]` with `cells` cells per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    a: T,
    b: T,
    cells: usize,
    dw: T,
}

impl<T: Real> Grid<T> {
    pub fn new(a: T, b: T, cells: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("grid bounds must satisfy a < b, got [{a}, {b}]")));
        }
        if cells == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        let dw = (b - a) / T::from_usize_lossy(cells);
        Ok(Self { a, b, cells, dw })
    }

    /// Grid with `points` nodes per direction, i.e. `points - 1` cells.
    pub fn with_points(a: T, b: T, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config(format!("need at least 2 grid points, got {points}")));
        }
        Self::new(a, b, points - 1)
    }

    #[inline]
    pub fn a(&self) -> T {
        self.a
    }

    #[inline]
    pub fn b(&self) -> T {
        self.b
    }

    /// Number of cells per direction (`N`).
    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes per direction (`N + 1`).
    #[inline]
    pub fn points(&self) -> usize {
        self.cells + 1
    }

    #[inline]
    pub fn dw(&self) -> T {
        self.dw
    }

    #[inline]
    pub fn node(&self, i: usize) -> T {
        self.a + T::from_usize_lossy(i) * self.dw
    }

    /// Interface coordinate `a + (i + 1/2) dw`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> T {
        self.a + (T::from_usize_lossy(i) + T::lit(0.5)) * self.dw
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.a && x <= self.b && y >= self.a && y <= self.b
    }

    /// Flat storage index of node `(i, j)`; `i` runs fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.cells + 1) + i
    }

    pub fn len(&self) -> usize {
        self.points() * self.points()
    }

    /// Whether every node of `self` is also a node of `fine`.
    pub fn nests_into(&self, fine: &Grid<T>) -> bool {
        self.a == fine.a && self.b == fine.b && fine.cells.is_multiple_of(self.cells)
    }
}

/// Nodal values `f_{i,j}` on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        Self { grid, values: vec![T::zero(); grid.len()] }
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn(T, T) -> T) -> Self {
        let np = grid.points();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..np {
            let y = grid.node(j);
            for i in 0..np {
                values.push(f(grid.node(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Discrete mass `dw^2 * sum f`.
    pub fn mass(&self) -> T {
        let dw = self.grid.dw();
        dw * dw * self.values.iter().copied().sum::<T>()
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: T) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Rescales to unit discrete mass.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > T::zero()) || !m.is_finite() {
            return Err(Error::Domain(format!("cannot normalize field with mass {m}")));
        }
        self.scale(T::one() / m);
        Ok(())
    }

    /// Samples this field on the nodes of a coarser nested grid.
    pub fn restrict_to(&self, coarse: &Grid<T>) -> Result<Field<T>> {
        if !coarse.nests_into(&self.grid) {
            return Err(Error::Shape(format!(
                "grid with {} cells does not nest into grid with {} cells",
                coarse.cells(),
                self.grid.cells()
            )));
        }
        let ratio = self.grid.cells() / coarse.cells();
        let np = coarse.points();
        let mut values = Vec::with_capacity(coarse.len());
        for j in 0..np {
            for i in 0..np {
                values.push(self[(i * ratio, j * ratio)]);
            }
        }
        Field::from_values(*coarse, values)
    }
}

impl<T: Real> Index<(usize, usize)> for Field<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.values[self.grid.index(i, j)]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Field<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        let k = self.grid.index(i, j);
        &mut self.values[k]
    }
}
