//! Validation battery: spectral-vs-dense oracle gates, the pseudo-inverse
//! norm table, and the discrete-inequality property suite on seeded random
//! inputs. Used by the `verify-operators` subcommand and the test suites.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{hadamard, project_zero_mean, Grid, GridFunction};
use crate::spectral::{dense_operator, OpKind, OperatorBank};

/// Outcome of one named check: the worst deviation (or ratio overshoot)
/// observed and the tolerance it is held to.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, worst: f64, tol: f64) -> Self {
        let pass = worst <= tol;
        Self {
            name: name.into(),
            worst,
            tol,
            pass,
        }
    }
}

/// Relative deviation of the spectral action from the dense-oracle action
/// on every canonical basis vector, one check per operator.
pub fn operator_oracle_checks(grid: Grid, tol: f64) -> Vec<Check> {
    let bank = OperatorBank::new(grid);
    operator_oracle_checks_for(&bank, tol)
}

/// Same gate against a caller-supplied bank (lets tests corrupt a symbol).
pub fn operator_oracle_checks_for(bank: &OperatorBank, tol: f64) -> Vec<Check> {
    let grid = bank.grid();
    let n = grid.cells();
    OpKind::ALL
        .iter()
        .map(|&op| {
            let dense = dense_operator(op, grid);
            let mut worst = 0.0f64;
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                let e = GridFunction::new(grid, e);
                let spectral = bank.apply(op, &e);
                let oracle = column(&dense, k, grid);
                let err = spectral.sub(&oracle).norm_l2() / oracle.norm_l2().max(1.0);
                worst = worst.max(err);
            }
            Check::new(format!("oracle[{op:?}]"), worst, tol)
        })
        .collect()
}

fn column(m: &DMatrix<f64>, k: usize, grid: Grid) -> GridFunction {
    GridFunction::new(grid, m.column(k).iter().copied().collect())
}

/// `‖(δ⁺)†‖₂ = dx/(2 sin(π/K)) ≤ L/4` across a list of grid sizes.
pub fn pinv_norm_checks(length: f64, cells_list: &[usize]) -> Vec<Check> {
    let mut checks = Vec::new();
    for &cells in cells_list {
        let grid = Grid::new(length, cells).expect("valid grid");
        let bank = OperatorBank::new(grid);
        let got = bank.pinv_forward_diff_norm();
        let formula = grid.dx() / (2.0 * (std::f64::consts::PI / cells as f64).sin());
        checks.push(Check::new(
            format!("pinv_norm_formula[K={cells}]"),
            (got - formula).abs() / formula,
            1e-12,
        ));
        checks.push(Check::new(
            format!("pinv_norm_bound[K={cells}]"),
            got - length / 4.0,
            1e-15,
        ));
    }
    checks
}

/// The discrete-inequality suite on `trials` seeded random inputs. Each
/// check records the worst ratio `lhs/rhs - 1`, so anything positive beyond
/// roundoff is a violation.
pub fn inequality_checks(grid: Grid, seed: u64, trials: usize) -> Vec<Check> {
    use crate::grid::{apply_avg, apply_diff, AvgKind, DiffKind};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bank = OperatorBank::new(grid);
    let dx = grid.dx();
    let l = grid.length();
    let l_hat = grid.embedding_const();
    let c = grid.pinv_product_const();

    let mut worst = [f64::NEG_INFINITY; 7];
    for _ in 0..trials {
        let v = random_fn(grid, &mut rng);
        let w = random_fn(grid, &mut rng);

        let ratios = [
            // ‖v*w‖ ≤ dx^{-1/2} ‖v‖‖w‖
            hadamard(&v, &w).norm_l2() / (v.norm_l2() * w.norm_l2() / dx.sqrt()),
            // ‖μ⁺v‖ ≤ ‖v‖
            apply_avg(AvgKind::Forward, &v).norm_l2() / v.norm_l2(),
            // ‖δ⁺v‖ ≤ (2/dx)‖v‖
            apply_diff(DiffKind::Forward, &v).norm_l2() / (2.0 / dx * v.norm_l2()),
            // ‖v - v̄·1‖_∞ ≤ √L ‖δ⁺v‖
            project_zero_mean(&v).norm_inf()
                / (l.sqrt() * apply_diff(DiffKind::Forward, &v).norm_l2()),
            // ‖v‖_∞ ≤ L̂ ‖v‖_{H¹}
            v.norm_inf() / (l_hat * v.h1_norm()),
            // ‖v*w‖ ≤ L̂ ‖v‖_{H¹} ‖w‖
            hadamard(&v, &w).norm_l2() / (l_hat * v.h1_norm() * w.norm_l2()),
            // ‖((δ⁻)†v)*w‖ ≤ C ‖v‖‖w‖
            hadamard(&bank.apply(OpKind::PinvBackwardDiff, &v), &w).norm_l2()
                / (c * v.norm_l2() * w.norm_l2()),
        ];
        for (slot, ratio) in worst.iter_mut().zip(ratios) {
            *slot = slot.max(ratio - 1.0);
        }
    }

    let names = [
        "ineq_hadamard_l2",
        "ineq_average_contraction",
        "ineq_difference_bound",
        "ineq_poincare_wirtinger",
        "ineq_sobolev_embedding",
        "ineq_h1_product",
        "ineq_pinv_product",
    ];
    names
        .iter()
        .zip(worst)
        .map(|(name, w)| Check::new(*name, w, 1e-12))
        .collect()
}

fn random_fn(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction::new(
        grid,
        (0..grid.cells())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn default_battery_passes() {
        let grid = Grid::new(1.0, 16).unwrap();
        for check in operator_oracle_checks(grid, 1e-11) {
            assert!(check.pass, "{} worst {:.3e}", check.name, check.worst);
        }
        for check in pinv_norm_checks(1.0, &[2, 4, 8, 16, 32, 64]) {
            assert!(check.pass, "{} worst {:.3e}", check.name, check.worst);
        }
        for check in inequality_checks(grid, 7, 200) {
            assert!(check.pass, "{} worst {:.3e}", check.name, check.worst);
        }
    }

    #[test]
    fn corrupted_symbol_fails_by_name() {
        let grid = Grid::new(1.0, 8).unwrap();
        let mut bank = OperatorBank::new(grid);
        bank.perturb_symbol(OpKind::PinvSecondDiff, 3, Complex64::new(1e-3, 0.0));
        let checks = operator_oracle_checks_for(&bank, 1e-11);
        let failing: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
        assert_eq!(failing.len(), 1);
        assert_eq!(failing[0].name, "oracle[PinvSecondDiff]");
    }
}
