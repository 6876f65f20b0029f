//! The conservative one-step scheme, its fixed-point solver, and step-size
//! planning.
//!
//! The unknowns advance through the derivative variable `v = δ⁻u`, which
//! lives in the zero-mean space; the field is recovered as
//! `u = (δ⁻)†v + h·1` with `h` the conserved grid average. One step solves
//! for the midpoint value `w = (v^{m+1} + v^m)/2` as the fixed point of
//!
//! ```text
//! φ_v(w) = v + ω Δt (δ⁺)† μ⁺ w - (Δt/4) P ψ(w)
//! ψ(w)   = w² + 2 μ⁻(((δ⁻)†w + h·1) * (δ⁺w))
//! ```
//!
//! and sets `v^{m+1} = 2w - v^m`. The map is a contraction on the ball
//! `B(pr)`, `r = ‖v‖₂`, whenever `Δt` stays below the two thresholds
//!
//! ```text
//! ε₁(p,r) = 4(p-1)Δx / [p(|ω|LΔx + pr√Δx + 4|h| + 4Cpr)]     (self-map)
//! ε₂(p,r) = 4Δx / (|ω|LΔx + 2pr√Δx + 4|h| + 8Cpr)            (contraction)
//! ```
//!
//! with `C` from [`Grid::pinv_product_const`]. Because the energy
//! `(1/2)‖v‖₂²` is conserved exactly, `r` can be frozen at the initial data
//! and the bounds hold for the whole run.
//!
//! [`step_field_midpoint`] is the equivalent midpoint stepper acting on `u`
//! itself through `(δ²)†`; the two produce identical trajectories up to
//! solver tolerance.

use thiserror::Error;

use crate::grid::{
    apply_avg, apply_diff, hadamard, project_zero_mean, AvgKind, DiffKind, Grid, GridFunction,
};
use crate::spectral::{OpKind, OperatorBank};

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    /// A user-supplied constant step.
    Fixed { dt: f64 },
    /// `0.99 · min(ε₁(p,r), ε₂(p,r))` computed from the initial data.
    Auto { ball_factor: f64 },
    /// Start from `dt0`, then shrink as `min(dt, α/‖δ²u‖_∞)` with
    /// `α = safety · dt0 · ‖δ²u⁰‖_∞`.
    Adaptive { dt0: f64, safety: f64 },
}

/// Solver configuration. `ball_factor` is the ball-radius multiplier `p > 1`
/// used wherever a policy does not carry its own.
#[derive(Clone, Copy, Debug)]
pub struct SchemeConfig {
    pub omega: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub ball_factor: f64,
    pub dt_policy: DtPolicy,
}

impl SchemeConfig {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            fp_tol: 1e-13,
            fp_max_iter: 200,
            ball_factor: 2.0,
            dt_policy: DtPolicy::Auto { ball_factor: 2.0 },
        }
    }

    pub fn with_policy(mut self, policy: DtPolicy) -> Self {
        self.dt_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.omega == 0.0 || !self.omega.is_finite() {
            return Err(ConfigError::ZeroOmega);
        }
        if !(self.fp_tol > 0.0) {
            return Err(ConfigError::BadTolerance(self.fp_tol));
        }
        if self.fp_max_iter == 0 {
            return Err(ConfigError::BadMaxIter);
        }
        if !(self.ball_factor > 1.0) {
            return Err(ConfigError::BadBallFactor(self.ball_factor));
        }
        match self.dt_policy {
            DtPolicy::Fixed { dt } => {
                if !(dt > 0.0) {
                    return Err(ConfigError::BadDt(dt));
                }
            }
            DtPolicy::Auto { ball_factor } => {
                if !(ball_factor > 1.0) {
                    return Err(ConfigError::BadBallFactor(ball_factor));
                }
            }
            DtPolicy::Adaptive { dt0, safety } => {
                if !(dt0 > 0.0) {
                    return Err(ConfigError::BadDt(dt0));
                }
                if !(safety > 0.0) {
                    return Err(ConfigError::BadSafety(safety));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("ω must be a nonzero finite constant")]
    ZeroOmega,
    #[error("fixed-point tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("fixed-point iteration cap must be at least 1")]
    BadMaxIter,
    #[error("ball-radius factor p must exceed 1, got {0}")]
    BadBallFactor(f64),
    #[error("step size must be positive, got {0}")]
    BadDt(f64),
    #[error("adaptive safety factor must be positive, got {0}")]
    BadSafety(f64),
}

/// Failure modes of one implicit step.
#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    /// The iteration ran out of budget; the caller may halve `dt` and retry.
    #[error("fixed-point iteration did not converge within {iters} iterations")]
    NoConvergence { iters: usize },
    /// Non-finite values appeared — the run is at or past blow-up.
    #[error("non-finite values in fixed-point iteration {at_iter}")]
    Diverged { at_iter: usize },
}

/// Evolving state of one simulation.
#[derive(Clone, Debug)]
pub struct SchemeState {
    pub step_index: usize,
    pub time: f64,
    /// Derivative variable `v = δ⁻u`, zero-mean.
    pub v: GridFunction,
    /// Conserved grid average `h` of the field.
    pub mean_level: f64,
    pub last_dt: f64,
    pub last_fp_iters: usize,
}

impl SchemeState {
    pub fn from_initial(u0: &GridFunction) -> Self {
        Self {
            step_index: 0,
            time: 0.0,
            v: apply_diff(DiffKind::Backward, u0),
            mean_level: u0.mean(),
            last_dt: 0.0,
            last_fp_iters: 0,
        }
    }

    /// Recovers the field `u = (δ⁻)†v + h·1`.
    pub fn reconstruct_u(&self, bank: &OperatorBank) -> GridFunction {
        bank.apply(OpKind::PinvBackwardDiff, &self.v)
            .add_constant(self.mean_level)
    }
}

/// The skew-symmetric advection operator
/// `A(v)w = (ω·1 - δ²v) * (δ¹w) + δ¹((ω·1 - δ²v) * w)`.
pub fn skew_advection(v: &GridFunction, w: &GridFunction, omega: f64) -> GridFunction {
    let coeff = apply_diff(DiffKind::SecondCentral, v).map(|x| omega - x);
    let first = hadamard(&coeff, &apply_diff(DiffKind::Central, w));
    let second = apply_diff(DiffKind::Central, &hadamard(&coeff, w));
    first.add(&second)
}

/// The nonlinear flux `ψ(w) = w² + 2 μ⁻(((δ⁻)†w + h·1) * (δ⁺w))`.
pub fn nonlinear_flux(bank: &OperatorBank, w: &GridFunction, mean_level: f64) -> GridFunction {
    let field = bank
        .apply(OpKind::PinvBackwardDiff, w)
        .add_constant(mean_level);
    let advected = hadamard(&field, &apply_diff(DiffKind::Forward, w));
    hadamard(w, w).add(&apply_avg(AvgKind::Backward, &advected).scale(2.0))
}

/// The midpoint map `φ_v(w) = v + ω Δt (δ⁺)† μ⁺ w - (Δt/4) P ψ(w)`.
pub fn midpoint_map(
    bank: &OperatorBank,
    v: &GridFunction,
    w: &GridFunction,
    dt: f64,
    omega: f64,
    mean_level: f64,
) -> GridFunction {
    let linear = bank.apply(OpKind::PinvForwardDiff, &apply_avg(AvgKind::Forward, w));
    let flux = project_zero_mean(&nonlinear_flux(bank, w, mean_level));
    v.add_scaled(omega * dt, &linear)
        .add_scaled(-dt / 4.0, &flux)
}

/// Iterates `w ← φ_v(w)` from `w = v` until the relative ℓ² change drops
/// below `fp_tol`, returning the fixed point and the iteration count.
pub fn fixed_point_solve(
    bank: &OperatorBank,
    v: &GridFunction,
    dt: f64,
    omega: f64,
    mean_level: f64,
    cfg: &SchemeConfig,
) -> Result<(GridFunction, usize), StepError> {
    let mut w = v.clone();
    for iter in 1..=cfg.fp_max_iter {
        let next = midpoint_map(bank, v, &w, dt, omega, mean_level);
        if !next.is_finite() {
            return Err(StepError::Diverged { at_iter: iter });
        }
        let change = next.sub(&w).norm_l2();
        let done = change <= cfg.fp_tol * w.norm_l2().max(1.0);
        w = next;
        if done {
            return Ok((w, iter));
        }
    }
    Err(StepError::NoConvergence {
        iters: cfg.fp_max_iter,
    })
}

/// Self-mapping threshold
/// `ε₁(p,r) = 4(p-1)Δx / [p(|ω|LΔx + pr√Δx + 4|h| + 4Cpr)]`.
pub fn self_map_dt_bound(p: f64, r: f64, grid: Grid, omega: f64, mean_level: f64) -> f64 {
    assert!(p > 1.0, "ball-radius factor p must exceed 1, got {p}");
    let dx = grid.dx();
    let c = grid.pinv_product_const();
    let denom = omega.abs() * grid.length() * dx
        + p * r * dx.sqrt()
        + 4.0 * mean_level.abs()
        + 4.0 * c * p * r;
    4.0 * (p - 1.0) * dx / (p * denom)
}

/// Contraction threshold
/// `ε₂(p,r) = 4Δx / (|ω|LΔx + 2pr√Δx + 4|h| + 8Cpr)`.
pub fn contraction_dt_bound(p: f64, r: f64, grid: Grid, omega: f64, mean_level: f64) -> f64 {
    assert!(p > 1.0, "ball-radius factor p must exceed 1, got {p}");
    let dx = grid.dx();
    let c = grid.pinv_product_const();
    let denom = omega.abs() * grid.length() * dx
        + 2.0 * p * r * dx.sqrt()
        + 4.0 * mean_level.abs()
        + 8.0 * c * p * r;
    4.0 * dx / denom
}

/// Record of how the step size was planned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizePlan {
    pub ball_factor: f64,
    /// `r = ‖v⁰‖₂` at plan time (conserved by the scheme).
    pub radius: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub dt: f64,
}

/// Plans the step size from the initial derivative variable `v0 = δ⁻u0`
/// and the conserved average `h` of the field.
pub fn plan_dt(
    cfg: &SchemeConfig,
    grid: Grid,
    v0: &GridFunction,
    mean_level: f64,
) -> StepSizePlan {
    let r = v0.norm_l2();
    let p = match cfg.dt_policy {
        DtPolicy::Auto { ball_factor } => ball_factor,
        _ => cfg.ball_factor,
    };
    let eps1 = self_map_dt_bound(p, r, grid, cfg.omega, mean_level);
    let eps2 = contraction_dt_bound(p, r, grid, cfg.omega, mean_level);
    let dt = match cfg.dt_policy {
        DtPolicy::Fixed { dt } => dt,
        DtPolicy::Auto { .. } => 0.99 * eps1.min(eps2),
        DtPolicy::Adaptive { dt0, .. } => dt0,
    };
    StepSizePlan {
        ball_factor: p,
        radius: r,
        eps1,
        eps2,
        dt,
    }
}

/// Solves `ε₁(p,r) = ε₂(p,r)` for `p ∈ (1, 100]` by bisection, locating the
/// factor that maximizes `min(ε₁, ε₂)`. (`ε₂` decreases in `p` while `ε₁`
/// rises from zero, so the crossing is the maximizer.)
pub fn optimal_ball_factor(grid: Grid, r: f64, omega: f64, mean_level: f64) -> f64 {
    let gap = |p: f64| {
        self_map_dt_bound(p, r, grid, omega, mean_level)
            - contraction_dt_bound(p, r, grid, omega, mean_level)
    };
    let mut lo = 1.0 + 1e-9;
    let mut hi = 100.0;
    assert!(gap(lo) < 0.0 && gap(hi) > 0.0, "no crossing in (1, 100]");
    loop {
        let mid = 0.5 * (lo + hi);
        let e2 = contraction_dt_bound(mid, r, grid, omega, mean_level);
        if gap(mid).abs() <= 1e-12 * e2 || hi - lo <= f64::EPSILON * hi {
            return mid;
        }
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Adaptive step rule `Δt ← min(Δt, α/‖δ²u‖_∞)`; the sequence never grows.
pub fn adaptive_dt(curvature_sup: f64, dt_prev: f64, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "adaptive scale α must be positive");
    if curvature_sup > 0.0 {
        dt_prev.min(alpha / curvature_sup)
    } else {
        dt_prev
    }
}

/// One step of the conservative scheme: solve for the midpoint `w`, then
/// reflect, `v^{m+1} = 2w - v^m`.
pub fn step(
    bank: &OperatorBank,
    state: &SchemeState,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<SchemeState, StepError> {
    let (w, iters) = fixed_point_solve(bank, &state.v, dt, cfg.omega, state.mean_level, cfg)?;
    let v_next = w.scale(2.0).sub(&state.v);
    Ok(SchemeState {
        step_index: state.step_index + 1,
        time: state.time + dt,
        v: v_next,
        mean_level: state.mean_level,
        last_dt: dt,
        last_fp_iters: iters,
    })
}

/// [`step`], halving `dt` and retrying (up to 5 times) when the iteration
/// runs out of budget. Divergence is not retried.
pub fn step_with_retry(
    bank: &OperatorBank,
    state: &SchemeState,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<SchemeState, StepError> {
    let mut dt_try = dt;
    let mut last = StepError::NoConvergence {
        iters: cfg.fp_max_iter,
    };
    for _ in 0..=5 {
        match step(bank, state, dt_try, cfg) {
            Ok(next) => return Ok(next),
            Err(StepError::NoConvergence { iters }) => {
                last = StepError::NoConvergence { iters };
                dt_try *= 0.5;
            }
            Err(diverged) => return Err(diverged),
        }
    }
    Err(last)
}

/// One step of the midpoint scheme acting on the field itself:
/// `u^{m+1} = u^m + Δt (δ²)† (A(u^{m+1/2}) u^{m+1/2})`, the midpoint found
/// by the same fixed-point machinery. Returns the new field and the
/// iteration count.
pub fn step_field_midpoint(
    bank: &OperatorBank,
    u: &GridFunction,
    dt: f64,
    cfg: &SchemeConfig,
) -> Result<(GridFunction, usize), StepError> {
    let mut half = u.clone();
    for iter in 1..=cfg.fp_max_iter {
        let rhs = bank.apply(
            OpKind::PinvSecondDiff,
            &skew_advection(&half, &half, cfg.omega),
        );
        let next = u.add_scaled(dt / 2.0, &rhs);
        if !next.is_finite() {
            return Err(StepError::Diverged { at_iter: iter });
        }
        let change = next.sub(&half).norm_l2();
        let done = change <= cfg.fp_tol * half.norm_l2().max(1.0);
        half = next;
        if done {
            return Ok((half.scale(2.0).sub(u), iter));
        }
    }
    Err(StepError::NoConvergence {
        iters: cfg.fp_max_iter,
    })
}
