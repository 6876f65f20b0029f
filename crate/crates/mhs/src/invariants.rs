//! Discrete invariants of the flow and the sup-norm stability bound.
//!
//! The scheme conserves the discrete energy `H_d(u) = (1/2) Σ (δ⁺u_k)² dx`
//! and the constraint functional
//! `F_d(u) = Σ (2ω u_k + (1/2)(δ⁺u_k)²) dx = 2ωL·ū + H_d(u)`,
//! hence also the grid average `ū`. Together with the discrete
//! Poincaré–Wirtinger inequality these give the uniform bound
//! `‖u‖_∞ ≤ L√|4ω h| + |h|` with `h` the (conserved) initial average.
//! Everything here is a pure function of a single field; drift along
//! trajectories is checked by the callers against roundoff budgets.

use crate::grid::{apply_diff, DiffKind, GridFunction};

/// Snapshot of all monitored quantities for one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantReport {
    /// Discrete energy `H_d`.
    pub hd: f64,
    /// Constraint functional `F_d`.
    pub fd: f64,
    /// Grid average `(1/L) Σ u_k dx`.
    pub mean: f64,
    /// `‖u‖_∞`.
    pub sup_u: f64,
    /// `‖δ⁺u‖_∞`, the steepness observable.
    pub sup_ux: f64,
    /// `‖δ²u‖_∞`, the curvature observable.
    pub sup_uxx: f64,
    /// `L√|4ω·mean| + |mean|`, the stability bound implied by conservation.
    pub linf_bound: f64,
}

/// `H_d(u) = (1/2) Σ (δ⁺u_k)² dx`.
pub fn hamiltonian(u: &GridFunction) -> f64 {
    let dx = u.grid().dx();
    let d = apply_diff(DiffKind::Forward, u);
    0.5 * d.values().iter().map(|x| x * x).sum::<f64>() * dx
}

/// `F_d(u) = Σ (2ω u_k + (1/2)(δ⁺u_k)²) dx`. Requires `ω ≠ 0`.
pub fn constraint_functional(u: &GridFunction, omega: f64) -> f64 {
    assert!(omega != 0.0, "the constraint functional needs a nonzero ω");
    let dx = u.grid().dx();
    2.0 * omega * u.values().iter().sum::<f64>() * dx + hamiltonian(u)
}

/// Sup-norm bound `L√|4ω h| + |h|` from the conserved average `h`.
pub fn linf_bound(mean_level: f64, omega: f64, length: f64) -> f64 {
    length * (4.0 * omega * mean_level).abs().sqrt() + mean_level.abs()
}

/// Evaluates every monitored quantity of `u`.
pub fn report(u: &GridFunction, omega: f64) -> InvariantReport {
    let mean = u.mean();
    InvariantReport {
        hd: hamiltonian(u),
        fd: constraint_functional(u, omega),
        mean,
        sup_u: u.norm_inf(),
        sup_ux: apply_diff(DiffKind::Forward, u).norm_inf(),
        sup_uxx: apply_diff(DiffKind::SecondCentral, u).norm_inf(),
        linf_bound: linf_bound(mean, omega, u.grid().length()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    #[test]
    fn hamiltonian_of_constant_vanishes() {
        let g = Grid::new(2.5, 6).unwrap();
        assert_eq!(hamiltonian(&GridFunction::constant(g, 3.0)), 0.0);
    }

    #[test]
    fn hamiltonian_matches_brute_force() {
        let g = Grid::new(1.0, 4).unwrap();
        let u = GridFunction::new(g, vec![1.0, 0.0, -1.0, 0.0]);
        // δ⁺u = (-4,-4,4,4): (1/2)·(4·16)·0.25 = 8
        assert_eq!(hamiltonian(&u), 8.0);

        let dx = g.dx();
        let brute: f64 = (0..4)
            .map(|k| {
                let d = (u.values()[(k + 1) % 4] - u.values()[k]) / dx;
                0.5 * d * d * dx
            })
            .sum();
        assert_eq!(hamiltonian(&u), brute);
    }

    #[test]
    fn hamiltonian_shift_invariant() {
        let g = Grid::new(1.0, 12).unwrap();
        let u = GridFunction::from_fn(g, |x| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos());
        let shifted = u.add_constant(7.5);
        assert!((hamiltonian(&u) - hamiltonian(&shifted)).abs() <= 1e-12 * hamiltonian(&u));
    }

    #[test]
    fn constraint_functional_basics() {
        let g = Grid::new(2.5, 7).unwrap();
        assert_eq!(constraint_functional(&GridFunction::zeros(g), 0.5), 0.0);
        // u = c·1, ω = 1/2: F_d = 2ω c L = cL
        let c = 0.7;
        let u = GridFunction::constant(g, c);
        assert!((constraint_functional(&u, 0.5) - c * 2.5).abs() <= 1e-14);
    }

    #[test]
    #[should_panic(expected = "nonzero")]
    fn constraint_functional_rejects_zero_omega() {
        let g = Grid::new(1.0, 4).unwrap();
        let _ = constraint_functional(&GridFunction::zeros(g), 0.0);
    }

    #[test]
    fn constraint_of_balanced_initial_data_decays_quadratically() {
        // u0(x) = a sin(2πx) - (πa)² has F(u0) = 0 in the continuum, so the
        // discrete value must vanish at rate O(dx²).
        let a = 0.01;
        let omega = 0.5;
        let mut values = Vec::new();
        for cells in [32usize, 64, 128] {
            let g = Grid::new(1.0, cells).unwrap();
            let u0 = GridFunction::from_fn(g, |x| a * (2.0 * PI * x).sin() - (PI * a).powi(2));
            values.push(constraint_functional(&u0, omega).abs());
        }
        assert!(values[0] > values[1] && values[1] > values[2]);
        let order01 = (values[0] / values[1]).log2();
        let order12 = (values[1] / values[2]).log2();
        assert!((order01 - 2.0).abs() <= 0.1, "order {order01}");
        assert!((order12 - 2.0).abs() <= 0.1, "order {order12}");
    }

    #[test]
    fn linf_bound_values() {
        assert_eq!(linf_bound(0.0, 0.5, 1.0), 0.0);
        let h = -(PI / 100.0) * (PI / 100.0);
        let want = 2f64.sqrt() * PI / 100.0 + (PI / 100.0).powi(2);
        assert!((linf_bound(h, 0.5, 1.0) - want).abs() <= 1e-15);
        assert!((want - 0.045416).abs() <= 1e-6);
        // even in the sign of the average
        assert_eq!(linf_bound(h, 0.5, 1.0), linf_bound(-h, 0.5, 1.0));
    }

    #[test]
    fn report_of_constant() {
        let g = Grid::new(2.0, 10).unwrap();
        let c = -1.25;
        let r = report(&GridFunction::constant(g, c), 0.5);
        assert_eq!(r.hd, 0.0);
        assert!((r.fd - 2.0 * 0.5 * c * 2.0).abs() <= 1e-14);
        assert!((r.mean - c).abs() <= 1e-15);
        assert_eq!(r.sup_ux, 0.0);
        assert_eq!(r.sup_uxx, 0.0);
        assert_eq!(r.sup_u, c.abs());
    }

    #[test]
    fn report_recomputes_energy_independently() {
        let a = 0.01;
        let g = Grid::new(1.0, 128).unwrap();
        let u0 = GridFunction::from_fn(g, |x| a * (2.0 * PI * x).sin() - (PI * a).powi(2));
        let r = report(&u0, 0.5);
        let dx = g.dx();
        let n = g.cells();
        let brute: f64 = (0..n)
            .map(|k| {
                let d = (u0.values()[(k + 1) % n] - u0.values()[k]) / dx;
                0.5 * d * d * dx
            })
            .sum();
        assert!((r.hd - brute).abs() <= 1e-15 * brute.max(1.0));
    }

    #[test]
    fn curvature_observable_approaches_continuum() {
        let a = 0.01;
        let g = Grid::new(1.0, 512).unwrap();
        let u0 = GridFunction::from_fn(g, |x| a * (2.0 * PI * x).sin() - (PI * a).powi(2));
        let r = report(&u0, 0.5);
        let continuum = a * (2.0 * PI) * (2.0 * PI);
        assert!((r.sup_uxx - continuum).abs() <= 0.01 * continuum);
    }
}
