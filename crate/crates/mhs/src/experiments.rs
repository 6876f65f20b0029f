//! Experiment harnesses: simulation driver, grid-refinement convergence
//! study, and blow-up time estimation by inverse-norm regression.
//!
//! The benchmark initial profile is `u0(x) = a sin(2πx/L) - (πa)²`; the
//! constant term makes the continuum constraint functional vanish. The
//! convergence study integrates a ladder of nested grids to a common final
//! time and measures the sup-norm error against a finer reference run
//! restricted by index subsampling. The blow-up study runs with the adaptive
//! step rule and extrapolates the times at which `1/‖δ⁺u‖_∞` and
//! `‖δ²u‖_∞^{-1/2}` hit zero, each from an ordinary least-squares fit over
//! the trailing portion of the recorded series.

use thiserror::Error;

use crate::grid::{Grid, GridFunction};
use crate::invariants::{self, InvariantReport};
use crate::scheme::{
    self, adaptive_dt, plan_dt, DtPolicy, SchemeConfig, SchemeState, StepError, StepSizePlan,
};
use crate::spectral::OperatorBank;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] scheme::ConfigError),
    #[error("invalid grid: {0}")]
    Grid(#[from] crate::grid::GridError),
    #[error("reference grid {reference} does not nest ladder entry {coarse}")]
    NonNestedLadder { coarse: usize, reference: usize },
    #[error("regression needs at least 3 points in the window, got {0}")]
    WindowTooSmall(usize),
    #[error("regression abscissae have zero variance")]
    DegenerateRegression,
    #[error("run failed at step {step}: {source}")]
    Run { step: usize, source: StepError },
}

/// One recorded step of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    /// Step size used to reach this row (the planned first step for row 0).
    pub dt: f64,
    pub hd: f64,
    pub fd: f64,
    pub mean: f64,
    pub sup_u: f64,
    pub sup_ux: f64,
    pub sup_uxx: f64,
    pub fp_iters: usize,
}

impl StepRow {
    fn new(step: usize, t: f64, dt: f64, report: &InvariantReport, fp_iters: usize) -> Self {
        Self {
            step,
            t,
            dt,
            hd: report.hd,
            fd: report.fd,
            mean: report.mean,
            sup_u: report.sup_u,
            sup_ux: report.sup_ux,
            sup_uxx: report.sup_uxx,
            fp_iters,
        }
    }

    fn failure_marker(step: usize, t: f64, dt: f64, fp_iters: usize) -> Self {
        Self {
            step,
            t,
            dt,
            hd: f64::NAN,
            fd: f64::NAN,
            mean: f64::NAN,
            sup_u: f64::NAN,
            sup_ux: f64::NAN,
            sup_uxx: f64::NAN,
            fp_iters,
        }
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    Diverged { step: usize },
    NoConvergence { step: usize },
}

/// Full time series of a run plus the final field.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub plan: StepSizePlan,
    pub rows: Vec<StepRow>,
    /// `(step index, field)` frames, cadence set by `snapshot_every`.
    pub snapshots: Vec<(usize, GridFunction)>,
    pub final_u: GridFunction,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.outcome == RunOutcome::Completed
    }
}

/// Stop rule for [`run_simulation`].
#[derive(Clone, Copy, Debug)]
pub enum RunLength {
    Steps(usize),
    /// Run until the accumulated time reaches `t_end` (the last step may
    /// overshoot; steps are never clipped).
    UntilTime(f64),
}

/// The benchmark initial profile `u0(x) = a sin(2πx/L) - (πa)²`. On any
/// uniform grid the sampled sine sums to zero exactly, so the grid average
/// is `-(πa)²`.
pub fn sample_initial(amplitude: f64, grid: Grid) -> GridFunction {
    let freq = 2.0 * std::f64::consts::PI / grid.length();
    let offset = (std::f64::consts::PI * amplitude).powi(2);
    GridFunction::from_fn(grid, |x| amplitude * (freq * x).sin() - offset)
}

/// Integrates `u0` with the configured policy, recording invariants and
/// sup-norms every step. A divergence or a convergence failure ends the run
/// early with a marker row; everything recorded up to that point is kept.
pub fn run_simulation(
    cfg: &SchemeConfig,
    u0: &GridFunction,
    length: RunLength,
    snapshot_every: Option<usize>,
) -> Result<RunRecord, ExperimentError> {
    cfg.validate()?;
    let grid = u0.grid();
    let bank = OperatorBank::new(grid);
    let mut state = SchemeState::from_initial(u0);
    let plan = plan_dt(cfg, grid, &state.v, state.mean_level);

    let report0 = invariants::report(u0, cfg.omega);
    let alpha = match cfg.dt_policy {
        DtPolicy::Adaptive { dt0, safety } => safety * dt0 * report0.sup_uxx,
        _ => 0.0,
    };

    let mut rows = vec![StepRow::new(0, 0.0, plan.dt, &report0, 0)];
    let mut snapshots = Vec::new();
    if snapshot_every.is_some() {
        snapshots.push((0, u0.clone()));
    }

    let mut dt = plan.dt;
    let mut last_report = report0;
    let mut final_u = u0.clone();
    let mut outcome = RunOutcome::Completed;

    let done = |step: usize, time: f64| match length {
        RunLength::Steps(n) => step >= n,
        RunLength::UntilTime(t_end) => time >= t_end * (1.0 - 1e-14),
    };

    while !done(state.step_index, state.time) {
        if matches!(cfg.dt_policy, DtPolicy::Adaptive { .. }) && alpha > 0.0 {
            dt = adaptive_dt(last_report.sup_uxx, dt, alpha);
        }
        match scheme::step_with_retry(&bank, &state, dt, cfg) {
            Ok(next) => {
                state = next;
                dt = state.last_dt;
                final_u = state.reconstruct_u(&bank);
                last_report = invariants::report(&final_u, cfg.omega);
                rows.push(StepRow::new(
                    state.step_index,
                    state.time,
                    state.last_dt,
                    &last_report,
                    state.last_fp_iters,
                ));
                if let Some(every) = snapshot_every {
                    if every > 0 && state.step_index % every == 0 {
                        snapshots.push((state.step_index, final_u.clone()));
                    }
                }
            }
            Err(err) => {
                let at = state.step_index + 1;
                rows.push(StepRow::failure_marker(at, state.time + dt, dt, 0));
                outcome = match err {
                    StepError::Diverged { .. } => RunOutcome::Diverged { step: at },
                    StepError::NoConvergence { .. } => RunOutcome::NoConvergence { step: at },
                };
                break;
            }
        }
    }

    Ok(RunRecord {
        plan,
        rows,
        snapshots,
        final_u,
        outcome,
    })
}

/// One row of the convergence table.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub steps: usize,
    pub dx: f64,
    pub dt: f64,
    pub linf_error: f64,
    /// `log₂(err_prev / err_this)` against the previous (coarser) row.
    pub observed_order: Option<f64>,
}

/// Restricts a fine-grid field to a nested coarse grid by index subsampling.
pub fn restrict_to_coarse(fine: &GridFunction, coarse: Grid) -> GridFunction {
    let ratio = fine.grid().cells() / coarse.cells();
    assert_eq!(
        coarse.cells() * ratio,
        fine.grid().cells(),
        "grids do not nest"
    );
    GridFunction::new(
        coarse,
        (0..coarse.cells())
            .map(|k| fine.values()[k * ratio])
            .collect(),
    )
}

/// Runs the refinement ladder to `t_end` and measures each entry's sup-norm
/// error against the subsampled reference run. Ladder entries execute
/// concurrently; the result order is the input order.
pub fn convergence_study(
    cfg: &SchemeConfig,
    length: f64,
    amplitude: f64,
    ladder: &[(usize, usize)],
    reference: (usize, usize),
    t_end: f64,
) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    cfg.validate()?;
    let (ref_cells, ref_steps) = reference;
    for &(cells, _) in ladder {
        if cells >= ref_cells || ref_cells % cells != 0 {
            return Err(ExperimentError::NonNestedLadder {
                coarse: cells,
                reference: ref_cells,
            });
        }
    }

    let run_to_t_end = |cells: usize, steps: usize| -> Result<GridFunction, ExperimentError> {
        let grid = Grid::new(length, cells)?;
        let dt = t_end / steps as f64;
        let run_cfg = cfg.with_policy(DtPolicy::Fixed { dt });
        let record = run_simulation(&run_cfg, &sample_initial(amplitude, grid), RunLength::Steps(steps), None)?;
        match record.outcome {
            RunOutcome::Completed => Ok(record.final_u),
            RunOutcome::Diverged { step } => Err(ExperimentError::Run {
                step,
                source: StepError::Diverged { at_iter: 0 },
            }),
            RunOutcome::NoConvergence { step } => Err(ExperimentError::Run {
                step,
                source: StepError::NoConvergence { iters: cfg.fp_max_iter },
            }),
        }
    };

    // reference and ladder entries are independent; run them concurrently
    let mut results: Vec<Option<Result<GridFunction, ExperimentError>>> =
        (0..ladder.len() + 1).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        handles.push(scope.spawn(|| run_to_t_end(ref_cells, ref_steps)));
        for &(cells, steps) in ladder {
            handles.push(scope.spawn(move || run_to_t_end(cells, steps)));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("ladder worker panicked"));
        }
    });

    let mut results = results.into_iter().map(Option::unwrap);
    let u_ref = results.next().unwrap()?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ladder.len());
    for (&(cells, steps), result) in ladder.iter().zip(results) {
        let u = result?;
        let coarse_ref = restrict_to_coarse(&u_ref, u.grid());
        let linf_error = u.sub(&coarse_ref).norm_inf();
        let observed_order = rows
            .last()
            .map(|prev: &ConvergenceRow| (prev.linf_error / linf_error).log2());
        rows.push(ConvergenceRow {
            cells,
            steps,
            dx: u.grid().dx(),
            dt: t_end / steps as f64,
            linf_error,
            observed_order,
        });
    }
    Ok(rows)
}

/// Ordinary least-squares line fit over the trailing `window` fraction of
/// the data.
#[derive(Clone, Copy, Debug)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Where the fitted line crosses zero; `None` when the line is too flat
    /// for the root to mean anything (|slope| below `1e-3·mean|y|/span`).
    pub estimated_root: Option<f64>,
    pub window: f64,
}

/// Fits `y = intercept + slope·x` to the trailing `window` fraction of the
/// points by ordinary least squares.
pub fn linear_regression(
    xs: &[f64],
    ys: &[f64],
    window: f64,
) -> Result<RegressionFit, ExperimentError> {
    assert_eq!(xs.len(), ys.len(), "mismatched regression data");
    assert!(window > 0.0 && window <= 1.0, "window must be in (0, 1]");
    let n = xs.len();
    let take = ((n as f64 * window).ceil() as usize).min(n);
    if take < 3 {
        return Err(ExperimentError::WindowTooSmall(take));
    }
    let xs = &xs[n - take..];
    let ys = &ys[n - take..];

    let m = take as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::DegenerateRegression);
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;

    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let span = xs[take - 1] - xs[0];
    let mean_abs_y = ys.iter().map(|y| y.abs()).sum::<f64>() / m;
    let flat = slope.abs() < 1e-3 * mean_abs_y / span;
    let estimated_root = (!flat).then(|| -intercept / slope);

    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        estimated_root,
        window,
    })
}

/// Result of a blow-up run: the record plus the two inverse-norm fits.
#[derive(Clone, Debug)]
pub struct BlowupStudy {
    pub record: RunRecord,
    /// Fit of `1/‖δ⁺u‖_∞` against `t`; root estimates the steepness
    /// blow-up time.
    pub fit_ux: RegressionFit,
    /// Fit of `‖δ²u‖_∞^{-1/2}` against `t`; root estimates the curvature
    /// blow-up time.
    pub fit_uxx: RegressionFit,
}

/// Runs the adaptive-step blow-up experiment and regresses the inverse
/// norms over the trailing `window` fraction of the recorded steps. The
/// configuration must carry an [`DtPolicy::Adaptive`] policy.
pub fn blowup_study(
    cfg: &SchemeConfig,
    grid: Grid,
    amplitude: f64,
    n_steps: usize,
    window: f64,
    snapshot_every: Option<usize>,
) -> Result<BlowupStudy, ExperimentError> {
    assert!(
        matches!(cfg.dt_policy, DtPolicy::Adaptive { .. }),
        "blow-up study needs the adaptive step policy"
    );
    let u0 = sample_initial(amplitude, grid);
    let record = run_simulation(cfg, &u0, RunLength::Steps(n_steps), snapshot_every)?;

    let healthy: Vec<&StepRow> = record
        .rows
        .iter()
        .filter(|r| r.sup_ux.is_finite() && r.sup_uxx.is_finite())
        .collect();
    let ts: Vec<f64> = healthy.iter().map(|r| r.t).collect();
    let inv_ux: Vec<f64> = healthy.iter().map(|r| 1.0 / r.sup_ux).collect();
    let inv_sqrt_uxx: Vec<f64> = healthy.iter().map(|r| 1.0 / r.sup_uxx.sqrt()).collect();

    let fit_ux = linear_regression(&ts, &inv_ux, window)?;
    let fit_uxx = linear_regression(&ts, &inv_sqrt_uxx, window)?;

    Ok(BlowupStudy {
        record,
        fit_ux,
        fit_uxx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn initial_profile_mean_and_limit() {
        // a = 0: the zero function
        let g = Grid::new(1.0, 16).unwrap();
        assert_eq!(sample_initial(0.0, g).norm_inf(), 0.0);

        // the sampled sine cancels exactly, so the mean is -(πa)²
        for cells in [16usize, 33, 128] {
            let g = Grid::new(1.0, cells).unwrap();
            let u0 = sample_initial(0.01, g);
            assert!((u0.mean() + (PI * 0.01).powi(2)).abs() <= 1e-15);
        }
    }

    #[test]
    fn initial_profile_constraint_decays_quadratically() {
        let omega = 0.5;
        let mut values = Vec::new();
        for cells in [32usize, 64, 128] {
            let g = Grid::new(1.0, cells).unwrap();
            let u0 = sample_initial(0.01, g);
            values.push(crate::invariants::constraint_functional(&u0, omega).abs());
        }
        let order = (values[0] / values[2]).log2() / 2.0;
        assert!((order - 2.0).abs() <= 0.1, "order {order}");
    }

    #[test]
    fn constant_data_produces_constant_rows() {
        let g = Grid::new(1.0, 16).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Fixed { dt: 0.05 });
        let u0 = GridFunction::constant(g, 0.3);
        let record = run_simulation(&cfg, &u0, RunLength::Steps(10), None).unwrap();
        assert!(record.completed());
        assert_eq!(record.rows.len(), 11);
        let first = record.rows[0];
        for row in &record.rows {
            assert!((row.hd - first.hd).abs() <= 1e-15);
            assert!((row.mean - first.mean).abs() <= 1e-15);
            assert!((row.sup_u - first.sup_u).abs() <= 1e-15);
            assert!(row.fp_iters <= 1);
        }
    }

    #[test]
    fn benchmark_run_conserves_invariants() {
        let g = Grid::new(1.0, 32).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Fixed { dt: 0.1 });
        let u0 = sample_initial(0.01, g);
        let record = run_simulation(&cfg, &u0, RunLength::Steps(100), None).unwrap();
        assert!(record.completed());
        let first = record.rows[0];
        for row in &record.rows {
            assert!((row.hd - first.hd).abs() <= 1e-11 * first.hd.max(1.0));
            assert!((row.fd - first.fd).abs() <= 1e-11 * first.fd.abs().max(1.0));
            assert!((row.mean - first.mean).abs() <= 1e-12);
            assert!(row.sup_u <= crate::invariants::linf_bound(first.mean, 0.5, 1.0) + 1e-10);
        }
        // rows strictly increasing in t
        for pair in record.rows.windows(2) {
            assert!(pair[1].t > pair[0].t);
        }
    }

    #[test]
    fn time_limited_run_reaches_t_end() {
        let g = Grid::new(1.0, 16).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Fixed { dt: 0.05 });
        let u0 = sample_initial(0.01, g);
        let record = run_simulation(&cfg, &u0, RunLength::UntilTime(1.0), None).unwrap();
        assert!(record.completed());
        let last = record.rows.last().unwrap();
        assert!(last.t >= 1.0 - 1e-12 && last.t < 1.0 + 0.05);
    }

    #[test]
    fn snapshots_follow_cadence() {
        let g = Grid::new(1.0, 16).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Fixed { dt: 0.05 });
        let u0 = sample_initial(0.01, g);
        let record = run_simulation(&cfg, &u0, RunLength::Steps(10), Some(4)).unwrap();
        let steps: Vec<usize> = record.snapshots.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 4, 8]);
    }

    #[test]
    fn restriction_is_exact_on_nested_grids() {
        let fine_grid = Grid::new(1.0, 64).unwrap();
        let coarse_grid = Grid::new(1.0, 16).unwrap();
        let fine = GridFunction::from_fn(fine_grid, |x| (2.0 * PI * x).sin());
        let coarse = restrict_to_coarse(&fine, coarse_grid);
        for k in 0..16 {
            assert_eq!(coarse.values()[k], fine.values()[4 * k]);
        }
        // self-comparison: restriction to the same grid is the identity
        let same = restrict_to_coarse(&fine, fine_grid);
        assert_eq!(same.values(), fine.values());
        assert_eq!(same.sub(&fine).norm_inf(), 0.0);
    }

    #[test]
    fn non_nested_ladder_rejected() {
        let cfg = SchemeConfig::new(0.5);
        let err = convergence_study(&cfg, 1.0, 0.01, &[(24, 10)], (64, 20), 1.0).unwrap_err();
        assert!(matches!(err, ExperimentError::NonNestedLadder { .. }));
        let err = convergence_study(&cfg, 1.0, 0.01, &[(64, 10)], (64, 20), 1.0).unwrap_err();
        assert!(matches!(err, ExperimentError::NonNestedLadder { .. }));
    }

    #[test]
    fn short_convergence_ladder_orders_near_two() {
        let cfg = SchemeConfig::new(0.5);
        let rows =
            convergence_study(&cfg, 1.0, 0.01, &[(16, 10), (32, 20)], (128, 80), 1.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].observed_order.is_none());
        let order = rows[1].observed_order.unwrap();
        assert!(rows[1].linf_error < rows[0].linf_error);
        assert!((order - 2.0).abs() <= 0.35, "order {order}");
    }

    #[test]
    fn regression_recovers_exact_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = linear_regression(&xs, &ys, 1.0).unwrap();
        assert!((fit.slope - 2.0).abs() <= 1e-12);
        assert!((fit.intercept - 1.0).abs() <= 1e-12);
        assert_eq!(fit.r_squared, 1.0);
        assert!((fit.estimated_root.unwrap() + 0.5).abs() <= 1e-12);
    }

    #[test]
    fn regression_root_matches_hand_computation() {
        let xs: Vec<f64> = (0..30).map(|i| 1.0 + i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| -0.5367 * x + 1.4677).collect();
        let fit = linear_regression(&xs, &ys, 2.0 / 3.0).unwrap();
        let root = fit.estimated_root.unwrap();
        assert!((root - 1.4677 / 0.5367).abs() <= 1e-10);
        assert!((root - 2.734675).abs() <= 1e-4);
    }

    #[test]
    fn regression_rejects_degenerate_input() {
        assert!(matches!(
            linear_regression(&[1.0, 2.0], &[1.0, 2.0], 1.0),
            Err(ExperimentError::WindowTooSmall(_))
        ));
        assert!(matches!(
            linear_regression(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1.0),
            Err(ExperimentError::DegenerateRegression)
        ));
    }

    #[test]
    fn flat_series_reports_no_root() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 + 1e-9 * x).collect();
        let fit = linear_regression(&xs, &ys, 2.0 / 3.0).unwrap();
        assert!(fit.estimated_root.is_none());
    }

    #[test]
    fn calm_run_reports_no_blowup() {
        // well below the blow-up regime the inverse norms stay flat
        let g = Grid::new(1.0, 64).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Adaptive {
            dt0: 0.01,
            safety: 1.5,
        });
        let study = blowup_study(&cfg, g, 0.01, 400, 2.0 / 3.0, None).unwrap();
        assert!(study.record.completed());
        assert!(study.fit_ux.estimated_root.is_none(), "{:?}", study.fit_ux);
    }

    #[test]
    fn adaptive_dt_column_is_nonincreasing() {
        let g = Grid::new(1.0, 128).unwrap();
        let cfg = SchemeConfig::new(0.5).with_policy(DtPolicy::Adaptive {
            dt0: 1e-3,
            safety: 1.5,
        });
        let study = blowup_study(&cfg, g, 0.1, 300, 2.0 / 3.0, None).unwrap();
        let rows = &study.record.rows;
        for pair in rows.windows(2) {
            assert!(pair[1].dt <= pair[0].dt * (1.0 + 1e-15));
        }
    }
}
