//! Circulant diagonalization of the periodic difference / average operators,
//! their Moore–Penrose pseudo-inverses, and a dense SVD oracle.
//!
//! Every operator in [`crate::grid`] is circulant, hence diagonal in the
//! discrete Fourier basis `e_j(k) = exp(2πi jk/K)`. With `θ_j = 2πj/K` the
//! symbols are
//!
//! ```text
//! δ⁺: (e^{iθ} - 1)/dx          μ⁺: (e^{iθ} + 1)/2
//! δ⁻: (1 - e^{-iθ})/dx         μ⁻: (1 + e^{-iθ})/2
//! δ¹: i sin θ / dx             δ²: (2 cos θ - 2)/dx²
//! ```
//!
//! Pseudo-inverses reciprocate the nonzero symbol entries and vanish on the
//! kernel modes, which are identified *by index*, not by magnitude: mode 0
//! (the constant) for δ⁺, δ⁻, δ²; modes 0 and K/2 (when K is even) for δ¹.
//! The zero-mean projector `P` has symbol 1 away from mode 0. Applying any
//! of these costs one forward and one inverse FFT, O(K log K).
//!
//! [`dense_operator`] and [`dense_pinv_oracle`] build the explicit K×K
//! matrices (pseudo-inverses via SVD with a relative cutoff) for desk-scale
//! validation; the test suite gates every symbol against them before the
//! bank is trusted.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{apply_avg, apply_diff, AvgKind, DiffKind, Grid, GridFunction};

/// Relative cutoff below which dense singular values are treated as zero.
pub const DENSE_SV_CUTOFF: f64 = 1e-10;

/// Largest grid accepted by the dense oracle.
pub const DENSE_ORACLE_MAX_CELLS: usize = 64;

/// Allowed imaginary residue of a spectral application, relative to `‖v‖₂`.
pub const SPECTRAL_RESIDUE_TOL: f64 = 1e-11;

/// The operators held by an [`OperatorBank`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    ForwardDiff,
    BackwardDiff,
    CentralDiff,
    SecondDiff,
    ForwardAvg,
    BackwardAvg,
    PinvForwardDiff,
    PinvBackwardDiff,
    PinvCentralDiff,
    PinvSecondDiff,
    ZeroMeanProjector,
}

impl OpKind {
    pub const ALL: [OpKind; 11] = [
        OpKind::ForwardDiff,
        OpKind::BackwardDiff,
        OpKind::CentralDiff,
        OpKind::SecondDiff,
        OpKind::ForwardAvg,
        OpKind::BackwardAvg,
        OpKind::PinvForwardDiff,
        OpKind::PinvBackwardDiff,
        OpKind::PinvCentralDiff,
        OpKind::PinvSecondDiff,
        OpKind::ZeroMeanProjector,
    ];

    fn index(self) -> usize {
        Self::ALL.iter().position(|&o| o == self).unwrap()
    }

    /// For a pseudo-inverse, the operator it inverts.
    pub fn pinv_base(self) -> Option<OpKind> {
        match self {
            OpKind::PinvForwardDiff => Some(OpKind::ForwardDiff),
            OpKind::PinvBackwardDiff => Some(OpKind::BackwardDiff),
            OpKind::PinvCentralDiff => Some(OpKind::CentralDiff),
            OpKind::PinvSecondDiff => Some(OpKind::SecondDiff),
            _ => None,
        }
    }
}

/// Eigenvalues of one circulant operator, indexed by Fourier mode
/// `j = 0..K-1` (mode 0 is the constant mode).
#[derive(Clone, Debug)]
pub struct CirculantSymbol {
    grid: Grid,
    eigenvalues: Vec<Complex64>,
}

impl CirculantSymbol {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Kernel modes of an operator, known analytically.
fn kernel_modes(op: OpKind, cells: usize) -> Vec<usize> {
    let half = (cells % 2 == 0).then_some(cells / 2);
    match op {
        OpKind::ForwardDiff | OpKind::BackwardDiff | OpKind::SecondDiff => vec![0],
        OpKind::CentralDiff => std::iter::once(0).chain(half).collect(),
        OpKind::ForwardAvg | OpKind::BackwardAvg => half.into_iter().collect(),
        OpKind::ZeroMeanProjector => vec![0],
        _ => Vec::new(),
    }
}

fn base_symbol(op: OpKind, grid: Grid, j: usize) -> Complex64 {
    let theta = 2.0 * std::f64::consts::PI * j as f64 / grid.cells() as f64;
    let dx = grid.dx();
    let e = Complex64::from_polar(1.0, theta);
    match op {
        OpKind::ForwardDiff => (e - 1.0) / dx,
        OpKind::BackwardDiff => (1.0 - e.conj()) / dx,
        OpKind::CentralDiff => Complex64::new(0.0, theta.sin() / dx),
        OpKind::SecondDiff => Complex64::new((2.0 * theta.cos() - 2.0) / (dx * dx), 0.0),
        OpKind::ForwardAvg => (e + 1.0) / 2.0,
        OpKind::BackwardAvg => (1.0 + e.conj()) / 2.0,
        _ => unreachable!("not a base operator: {op:?}"),
    }
}

fn build_symbol(op: OpKind, grid: Grid) -> CirculantSymbol {
    let cells = grid.cells();
    let eigenvalues = match op {
        OpKind::ZeroMeanProjector => (0..cells)
            .map(|j| Complex64::new(if j == 0 { 0.0 } else { 1.0 }, 0.0))
            .collect(),
        _ => {
            if let Some(base) = op.pinv_base() {
                let zeros = kernel_modes(base, cells);
                (0..cells)
                    .map(|j| {
                        if zeros.contains(&j) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            base_symbol(base, grid, j).inv()
                        }
                    })
                    .collect()
            } else {
                (0..cells).map(|j| base_symbol(op, grid, j)).collect()
            }
        }
    };
    CirculantSymbol { grid, eigenvalues }
}

/// Precomputed symbols and FFT plans for one grid.
///
/// Immutable after construction; applications are pure, so one bank can be
/// shared by concurrent simulations on the same grid.
pub struct OperatorBank {
    grid: Grid,
    symbols: Vec<CirculantSymbol>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl OperatorBank {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.cells());
        let inv = planner.plan_fft_inverse(grid.cells());
        let symbols = OpKind::ALL
            .iter()
            .map(|&op| build_symbol(op, grid))
            .collect();
        Self {
            grid,
            symbols,
            fwd,
            inv,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn symbol(&self, op: OpKind) -> &CirculantSymbol {
        &self.symbols[op.index()]
    }

    /// Applies `op` spectrally: forward FFT, multiply by the symbol, inverse
    /// FFT, real part. Panics when a finite input produces an imaginary
    /// residue above [`SPECTRAL_RESIDUE_TOL`]`·‖v‖₂` — that signals a broken
    /// symbol, not a data problem. Non-finite inputs pass through so the
    /// caller can detect divergence.
    pub fn apply(&self, op: OpKind, v: &GridFunction) -> GridFunction {
        assert_eq!(v.grid(), self.grid, "grid function from a different grid");
        let n = self.grid.cells() as f64;
        let mut buf: Vec<Complex64> = v
            .values()
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.fwd.process(&mut buf);
        for (b, lambda) in buf.iter_mut().zip(self.symbol(op).eigenvalues()) {
            *b *= lambda;
        }
        self.inv.process(&mut buf);

        let mut out = Vec::with_capacity(buf.len());
        let mut residue: f64 = 0.0;
        for b in &buf {
            out.push(b.re / n);
            residue = residue.max((b.im / n).abs());
        }
        if !(residue <= SPECTRAL_RESIDUE_TOL * v.norm_l2()) && v.is_finite() {
            panic!(
                "spectral application of {op:?} left imaginary residue {residue:.3e} \
                 (‖v‖₂ = {:.3e}); the symbol is corrupt",
                v.norm_l2()
            );
        }
        GridFunction::new(self.grid, out)
    }

    /// `‖(δ⁺)†‖₂`, the largest modulus of the forward-difference
    /// pseudo-inverse symbol. Equals `dx / (2 sin(π/K))` and is bounded by
    /// `L/4` for every `K ≥ 2`, with equality at `K = 2`.
    pub fn pinv_forward_diff_norm(&self) -> f64 {
        self.symbol(OpKind::PinvForwardDiff).max_modulus()
    }

    /// Overwrites one eigenvalue. Validation hook for negative tests of the
    /// oracle gate; never used by the solver.
    pub fn perturb_symbol(&mut self, op: OpKind, mode: usize, delta: Complex64) {
        self.symbols[op.index()].eigenvalues[mode] += delta;
    }
}

/// Explicit K×K matrix of `op`, with pseudo-inverses computed by
/// [`dense_pinv_oracle`]. Guarded to `K ≤ `[`DENSE_ORACLE_MAX_CELLS`].
pub fn dense_operator(op: OpKind, grid: Grid) -> DMatrix<f64> {
    assert!(
        grid.cells() <= DENSE_ORACLE_MAX_CELLS,
        "dense oracle is restricted to K <= {DENSE_ORACLE_MAX_CELLS}"
    );
    let n = grid.cells();
    if let Some(base) = op.pinv_base() {
        return dense_pinv_oracle(base, grid);
    }
    if op == OpKind::ZeroMeanProjector {
        return DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    }
    // columns are the stencil applied to the canonical basis vectors
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let e = GridFunction::new(grid, e);
        let col = match op {
            OpKind::ForwardDiff => apply_diff(DiffKind::Forward, &e),
            OpKind::BackwardDiff => apply_diff(DiffKind::Backward, &e),
            OpKind::CentralDiff => apply_diff(DiffKind::Central, &e),
            OpKind::SecondDiff => apply_diff(DiffKind::SecondCentral, &e),
            OpKind::ForwardAvg => apply_avg(AvgKind::Forward, &e),
            OpKind::BackwardAvg => apply_avg(AvgKind::Backward, &e),
            _ => unreachable!(),
        };
        for (i, &x) in col.values().iter().enumerate() {
            m[(i, k)] = x;
        }
    }
    m
}

/// Moore–Penrose inverse of the dense matrix of `base`, via SVD with
/// singular values below [`DENSE_SV_CUTOFF`]`·σ_max` treated as zero.
pub fn dense_pinv_oracle(base: OpKind, grid: Grid) -> DMatrix<f64> {
    assert!(
        base.pinv_base().is_none() && base != OpKind::ZeroMeanProjector,
        "pseudo-inverse oracle expects a base operator, got {base:?}"
    );
    let m = dense_operator(base, grid);
    let sigma_max = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &s| a.max(s));
    m.pseudo_inverse(DENSE_SV_CUTOFF * sigma_max)
        .expect("SVD of a finite matrix cannot fail")
}

/// Largest singular value of a dense matrix.
pub fn dense_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &s| a.max(s))
}
