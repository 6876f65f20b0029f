//! Uniform periodic grids and the discrete calculus on them.
//!
//! A [`Grid`] covers the circle of circumference `L` with `K` cells of width
//! `dx = L / K`; a [`GridFunction`] holds the `K` samples, indexed modulo `K`
//! so that `v[k + K] = v[k]`. The difference and average operators
//!
//! ```text
//! (δ⁺v)_k = (v_{k+1} - v_k)/dx        (μ⁺v)_k = (v_{k+1} + v_k)/2
//! (δ⁻v)_k = (v_k - v_{k-1})/dx        (μ⁻v)_k = (v_k + v_{k-1})/2
//! (δ¹v)_k = (v_{k+1} - v_{k-1})/(2dx)
//! (δ²v)_k = (v_{k+1} - 2v_k + v_{k-1})/dx²
//! ```
//!
//! are implemented as plain O(K) stencil loops so that this module stays
//! dependency-free and can serve as the reference against which the spectral
//! implementations are validated. Norms and inner products carry the cell
//! width: `‖v‖_p = (Σ |v_k|^p dx)^{1/p}`, `⟨v, w⟩ = Σ v_k w_k dx`.
//!
//! All values are immutable after construction and every operation is a pure
//! function, so grid functions can be shared freely across threads.

use thiserror::Error;

/// Errors from [`Grid`] construction.
#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("domain length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("grid needs at least 2 cells, got {0}")]
    TooFewCells(usize),
}

/// Uniform periodic grid: `K` cells of width `dx = L / K` on a circle of
/// circumference `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    length: f64,
    cells: usize,
    dx: f64,
}

impl Grid {
    pub fn new(length: f64, cells: usize) -> Result<Self, GridError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::BadLength(length));
        }
        if cells < 2 {
            return Err(GridError::TooFewCells(cells));
        }
        Ok(Self {
            length,
            cells,
            dx: length / cells as f64,
        })
    }

    /// Domain circumference `L`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of cells `K`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Cell width `dx = L / K`.
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Physical coordinate of sample `k`.
    pub fn point(&self, k: usize) -> f64 {
        k as f64 * self.dx
    }

    /// `L̂ = √2 · max(1/√L, √L)`, the constant of the discrete Sobolev
    /// embedding `‖v‖_∞ ≤ L̂ ‖v‖_{H¹}`.
    pub fn embedding_const(&self) -> f64 {
        let s = self.length.sqrt();
        2f64.sqrt() * (1.0 / s).max(s)
    }

    /// `C = (L̂/4) √(L² + 16)`, the constant of the product bound
    /// `‖((δ⁻)†v) * w‖ ≤ C ‖v‖ ‖w‖`.
    pub fn pinv_product_const(&self) -> f64 {
        self.embedding_const() / 4.0 * (self.length * self.length + 16.0).sqrt()
    }
}

/// Real-valued samples on a [`Grid`], understood periodically.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps `values` as samples on `grid`. Panics if the length is not `K`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            grid.cells(),
            "grid function needs exactly K = {} values",
            grid.cells()
        );
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::new(grid, vec![c; grid.cells()])
    }

    /// Samples `f` at the grid points `x_k = k dx`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid, (0..grid.cells()).map(|k| f(grid.point(k))).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when every sample is finite (no NaN / infinities).
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Grid average `(1/L) Σ v_k dx = (Σ v_k)/K`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|x| x * x).sum::<f64>() * self.grid.dx()).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete Sobolev norm `(‖v‖₂² + ‖δ⁺v‖₂²)^{1/2}`.
    pub fn h1_norm(&self) -> f64 {
        let d = apply_diff(DiffKind::Forward, self);
        (self.norm_l2().powi(2) + d.norm_l2().powi(2)).sqrt()
    }

    /// Pointwise map, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_same_grid(self, other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid, values)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|x| x + c)
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }
}

/// `⟨v, w⟩ = Σ v_k w_k dx`.
pub fn inner(v: &GridFunction, w: &GridFunction) -> f64 {
    assert_same_grid(v, w);
    v.values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * v.grid().dx()
}

/// Componentwise (Hadamard) product `v * w`.
pub fn hadamard(v: &GridFunction, w: &GridFunction) -> GridFunction {
    v.zip_map(w, |a, b| a * b)
}

/// Difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffKind {
    Forward,
    Backward,
    Central,
    SecondCentral,
}

/// Average stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvgKind {
    Forward,
    Backward,
}

/// Applies the difference stencil with periodic wraparound.
pub fn apply_diff(kind: DiffKind, v: &GridFunction) -> GridFunction {
    let n = v.len();
    let dx = v.grid().dx();
    let x = v.values();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let next = if k + 1 == n { 0 } else { k + 1 };
        let prev = if k == 0 { n - 1 } else { k - 1 };
        let d = match kind {
            DiffKind::Forward => (x[next] - x[k]) / dx,
            DiffKind::Backward => (x[k] - x[prev]) / dx,
            DiffKind::Central => (x[next] - x[prev]) / (2.0 * dx),
            DiffKind::SecondCentral => (x[next] - 2.0 * x[k] + x[prev]) / (dx * dx),
        };
        out.push(d);
    }
    GridFunction::new(v.grid(), out)
}

/// Applies the average stencil with periodic wraparound.
pub fn apply_avg(kind: AvgKind, v: &GridFunction) -> GridFunction {
    let n = v.len();
    let x = v.values();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let next = if k + 1 == n { 0 } else { k + 1 };
        let prev = if k == 0 { n - 1 } else { k - 1 };
        let a = match kind {
            AvgKind::Forward => 0.5 * (x[next] + x[k]),
            AvgKind::Backward => 0.5 * (x[k] + x[prev]),
        };
        out.push(a);
    }
    GridFunction::new(v.grid(), out)
}

/// Removes the grid average: `Pv = v - v̄·1`.
pub fn project_zero_mean(v: &GridFunction) -> GridFunction {
    let m = v.mean();
    v.map(|x| x - m)
}

pub(crate) fn assert_same_grid(v: &GridFunction, w: &GridFunction) {
    assert_eq!(
        v.grid(),
        w.grid(),
        "grid functions live on different grids"
    );
}
