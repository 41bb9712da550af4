use crate::drivers::{AllocDriver, Driver, Growth};
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, TreeModel};

use super::{check_same_carrier, BsdeSolution, Carrier, Method, SolverMeta, TerminalClaim};

/// Largest admissible `|q|·√Δ` for a tilted step. Branch weights
/// `½(1 ± q√Δ)` may reach zero (the tilted measure stays absolutely
/// continuous) but not go negative; the slack absorbs rounding in `Z`.
pub(crate) const MAX_TILT: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TreeOptions {
    /// Largest admissible `Δ` for drivers of quadratic growth.
    pub step_bound: Option<f64>,
}

/// Explicit backward induction on the lattice.
///
/// `step(k, j, z)` returns the driver value at node `(k, j)` for control `z`.
pub(crate) fn tree_backward<F>(tree: &TreeModel, terminal: Vec<f64>, step: F) -> (Vec<Vec<f64>>, Vec<Vec<f64>>)
where
    F: Fn(usize, usize, f64) -> f64,
{
    let n = tree.steps();
    let dt = tree.grid().dt();
    let h = tree.sqrt_dt();
    let snap = z_snap(&terminal);
    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n + 1];
    y[n] = terminal;
    for k in (0..n).rev() {
        let next = &y[k + 1];
        let mut yk = Vec::with_capacity(k + 1);
        let mut zk = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let (dn, up) = (next[j], next[j + 1]);
            let zz = lattice_z(up, dn, h, snap);
            yk.push(0.5 * (up + dn) + step(k, j, zz) * dt);
            zk.push(zz);
        }
        y[k] = yk;
        z[k] = zk;
    }
    z[n] = terminal_z(&z[n - 1]);
    (y, z)
}

/// Fraction of a claim's range below which `up - dn` counts as rounding noise.
const Z_SNAP: f64 = 1e-12;

/// Absolute threshold on `|up - dn|` for a recursion started from `terminal`.
/// Proportional to the range of the terminal values, so it is unchanged by
/// constant shifts and scales with the claim.
pub(crate) fn z_snap(terminal: &[f64]) -> f64 {
    let (lo, hi) = terminal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        Z_SNAP * (hi - lo)
    } else {
        0.0
    }
}

/// `(up - dn) / (2√Δ)`, with differences at or below `snap` set to zero so
/// that the subgradient chosen at a kink does not depend on rounding.
pub(crate) fn lattice_z(up: f64, dn: f64, h: f64, snap: f64) -> f64 {
    let d = up - dn;
    if d.abs() <= snap {
        0.0
    } else {
        d / (2.0 * h)
    }
}

/// `Z_N` is never read by the recursion; store the parents' average.
fn terminal_z(prev: &[f64]) -> Vec<f64> {
    let m = prev.len();
    (0..=m)
        .map(|j| match (j.checked_sub(1).map(|i| prev[i]), prev.get(j)) {
            (Some(a), Some(&b)) => 0.5 * (a + b),
            (Some(a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => 0.0,
        })
        .collect()
}

fn min_steps_for_slope(grid: &TimeGrid, slope: f64) -> usize {
    (slope * slope * grid.horizon()).floor() as usize + 1
}

fn reject_slope(grid: &TimeGrid, slope: f64, what: &str) -> Error {
    Error::RejectedConfiguration(format!(
        "{what}: slope {slope} with N = {} gives slope·√Δ = {:.6}, too large for the lattice; use N ≥ {}",
        grid.steps(),
        slope * grid.dt().sqrt(),
        min_steps_for_slope(grid, slope)
    ))
}

pub(crate) fn check_step_bound(grid: &TimeGrid, options: &TreeOptions, what: &str) -> Result<()> {
    if let Some(b) = options.step_bound {
        if grid.dt() > b {
            let need = (grid.horizon() / b).ceil() as usize;
            return Err(Error::RejectedConfiguration(format!(
                "{what}: Δ = {} exceeds the step bound {b}; use N ≥ {need}",
                grid.dt()
            )));
        }
    }
    Ok(())
}

/// Rejects grids on which the one-step map of `driver` is not monotone.
pub(crate) fn check_driver_stability(driver: &dyn Driver, grid: &TimeGrid, options: &TreeOptions) -> Result<()> {
    match driver.growth() {
        Growth::Lipschitz(mu) => {
            if mu * grid.dt().sqrt() >= 1.0 {
                return Err(reject_slope(grid, mu, &driver.label()));
            }
            Ok(())
        }
        Growth::Quadratic => check_step_bound(grid, options, &driver.label()),
    }
}

/// Solves the BSDE with driver `g` and terminal value `terminal` (used as is).
pub fn solve_tree(
    driver: &dyn Driver,
    terminal: &TerminalClaim,
    tree: &TreeModel,
    options: &TreeOptions,
) -> Result<BsdeSolution> {
    let grid = *tree.grid();
    check_driver_stability(driver, &grid, options)?;
    let xi = terminal.on_tree(tree)?;
    let (y, z) = tree_backward(tree, xi, |k, _, zz| driver.evaluate(grid.time(k), &[zz]));
    let h = tree.sqrt_dt();
    let mut margin: f64 = 0.0;
    for k in 0..grid.steps() {
        for &zz in &z[k] {
            margin = margin.max(driver.subgradient1(grid.time(k), zz).abs() * h);
        }
    }
    Ok(BsdeSolution::new(
        Carrier::Tree(*tree),
        y,
        z,
        SolverMeta {
            method: Method::Tree,
            basis_size: 0,
            stability_margin: margin,
            std_error: None,
        },
    ))
}

/// Solves the allocation BSDE `g_Λ(t, Z, Z^Y)` with terminal value `-x`.
///
/// `z_y` is the solution of the base BSDE for `-Y` on the same tree.
pub fn solve_alloc_tree(
    alloc: &dyn AllocDriver,
    x: &TerminalClaim,
    z_y: &BsdeSolution,
    tree: &TreeModel,
    options: &TreeOptions,
) -> Result<BsdeSolution> {
    let carrier = Carrier::Tree(*tree);
    check_same_carrier(z_y.carrier(), &carrier, "allocation solve")?;
    let grid = *tree.grid();
    let h = tree.sqrt_dt();
    let mut margin: f64 = 0.0;
    let mut quadratic = false;
    for k in 0..grid.steps() {
        let t = grid.time(k);
        for &zy in z_y.z(k) {
            match alloc.z_lipschitz(t, &[zy]) {
                Some(l) => {
                    if l * h > MAX_TILT {
                        return Err(reject_slope(&grid, l, &alloc.label()));
                    }
                    margin = margin.max(l * h);
                }
                None => quadratic = true,
            }
        }
    }
    if quadratic {
        check_step_bound(&grid, options, &alloc.label())?;
    }
    let xi: Vec<f64> = x.on_tree(tree)?.into_iter().map(|v| -v).collect();
    let zs = z_y.z_all();
    let (y, z) = tree_backward(tree, xi, |k, j, zz| alloc.evaluate(grid.time(k), &[zz], &[zs[k][j]]));
    Ok(BsdeSolution::new(
        carrier,
        y,
        z,
        SolverMeta {
            method: Method::Tree,
            basis_size: 0,
            stability_margin: margin,
            std_error: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::*;
    use crate::grid::{build_grid, build_tree};
    use crate::payoff::parse_payoff;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tree(t: f64, n: usize) -> TreeModel {
        build_tree(build_grid(t, n).unwrap())
    }

    fn claim(s: &str) -> TerminalClaim {
        TerminalClaim::from_expr(parse_payoff(s, 1).unwrap())
    }

    fn sin_w(a: f64) -> TerminalClaim {
        TerminalClaim::from_fn(format!("sin({a}W)"), move |s| (a * s[0]).sin())
    }

    #[allow(dead_code)]
    fn tanh_w(a: f64) -> TerminalClaim {
        TerminalClaim::from_fn(format!("tanh({a}W)"), move |s| (a * s[0]).tanh())
    }

    fn opts() -> TreeOptions {
        TreeOptions::default()
    }

    #[test]
    fn zero_driver_linear_terminal() {
        let s = solve_tree(driver_zero().as_ref(), &claim("W"), &tree(1.0, 2), &opts()).unwrap();
        assert_abs_diff_eq!(s.y0(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_driver_constant_terminal() {
        let tr = tree(1.0, 7);
        let s = solve_tree(driver_zero().as_ref(), &TerminalClaim::constant(2.5), &tr, &opts()).unwrap();
        for k in 0..=7 {
            assert!(s.y(k).iter().all(|&v| v == 2.5));
        }
    }

    #[test]
    fn scaled_norm_worst_case_drift() {
        let d = driver_scaled_norm(0.5).unwrap();
        let s = solve_tree(d.as_ref(), &claim("-W"), &tree(1.0, 200), &opts()).unwrap();
        assert!((s.y0() - 0.5).abs() < 2e-2);
        // Z ≡ -1 makes the recursion exact.
        assert_abs_diff_eq!(s.y0(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn recursion_residual_and_terminal() {
        let d = driver_entropic(1.0).unwrap();
        let tr = tree(1.0, 40);
        let x = sin_w(1.0).add(&claim("max(W, 0)"));
        let s = solve_tree(d.as_ref(), &x, &tr, &opts()).unwrap();
        assert_eq!(s.y(40), x.on_tree(&tr).unwrap().as_slice());
        let dt = tr.grid().dt();
        for k in 0..40 {
            for j in 0..=k {
                let (dn, up) = (s.y(k + 1)[j], s.y(k + 1)[j + 1]);
                let r = s.y(k)[j] - (0.5 * (up + dn) + d.evaluate1(0.0, s.z(k)[j]) * dt);
                assert!(r.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stability_rejection_names_required_steps() {
        let d = driver_scaled_norm(3.0).unwrap();
        let err = solve_tree(d.as_ref(), &claim("W"), &tree(1.0, 4), &opts()).unwrap_err();
        match err {
            Error::RejectedConfiguration(m) => assert!(m.contains("N ≥ 10"), "{m}"),
            e => panic!("unexpected {e:?}"),
        }
        assert!(solve_tree(d.as_ref(), &claim("W"), &tree(1.0, 10), &opts()).is_ok());
    }

    #[test]
    fn quadratic_step_bound() {
        let d = driver_entropic(1.0).unwrap();
        let o = TreeOptions { step_bound: Some(0.01) };
        assert!(matches!(
            solve_tree(d.as_ref(), &claim("W"), &tree(1.0, 50), &o),
            Err(Error::RejectedConfiguration(_))
        ));
        assert!(solve_tree(d.as_ref(), &claim("W"), &tree(1.0, 100), &o).is_ok());
    }

    #[test]
    fn subdiff_alloc_diagonal_matches_base() {
        for base in [driver_entropic(1.0).unwrap(), driver_scaled_norm(0.5).unwrap()] {
            let tr = tree(1.0, 60);
            let y = claim("max(W, 0) - 0.3*W");
            let ys = solve_tree(base.as_ref(), &y.neg(), &tr, &opts()).unwrap();
            let a = alloc_driver_subdiff(base.clone()).unwrap();
            let s = solve_alloc_tree(a.as_ref(), &y, &ys, &tr, &opts()).unwrap();
            for k in 0..=60 {
                for j in 0..=k {
                    assert!((s.y(k)[j] - ys.y(k)[j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_position_with_vanishing_driver() {
        let base = driver_scaled_norm(0.5).unwrap();
        let tr = tree(1.0, 30);
        let ys = solve_tree(base.as_ref(), &sin_w(1.0).neg(), &tr, &opts()).unwrap();
        let a = alloc_driver_gradient(base);
        let s = solve_alloc_tree(a.as_ref(), &TerminalClaim::zero(), &ys, &tr, &opts()).unwrap();
        for k in 0..=30 {
            assert!(s.y(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn subdiff_no_undercut_call_in_linear_portfolio() {
        let base = driver_scaled_norm(0.5).unwrap();
        let tr = tree(1.0, 200);
        let y = claim("W");
        let x = claim("max(W, 0)");
        let ys = solve_tree(base.as_ref(), &y.neg(), &tr, &opts()).unwrap();
        let a = alloc_driver_subdiff(base.clone()).unwrap();
        let lam = solve_alloc_tree(a.as_ref(), &x, &ys, &tr, &opts()).unwrap();
        let rx = solve_tree(base.as_ref(), &x.neg(), &tr, &opts()).unwrap();
        assert!(lam.y0() <= rx.y0() + 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let base = driver_scaled_norm(0.5).unwrap();
        let ys = solve_tree(base.as_ref(), &claim("W"), &tree(1.0, 10), &opts()).unwrap();
        let a = alloc_driver_subdiff(base).unwrap();
        let r = solve_alloc_tree(a.as_ref(), &claim("W"), &ys, &tree(1.0, 12), &opts());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cash_shift_moves_every_node() {
        let d = driver_entropic(2.0).unwrap();
        let tr = tree(1.0, 50);
        let a = solve_tree(d.as_ref(), &claim("exp(-W*W)"), &tr, &opts()).unwrap();
        let b = solve_tree(d.as_ref(), &claim("exp(-W*W) + 0.75"), &tr, &opts()).unwrap();
        for k in 0..=50 {
            for j in 0..=k {
                assert!((b.y(k)[j] - a.y(k)[j] - 0.75).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        // g1 ≤ g2 and ξ1 ≤ ξ2 give Y1 ≤ Y2 node-wise.
        #[test]
        fn comparison(mu in 0.05f64..2.0, extra in 0.0f64..1.0, shift in 0.0f64..0.5, n in 4usize..40) {
            let tr = tree(1.0, n);
            prop_assume!((mu + extra) * tr.sqrt_dt() < 1.0);
            let g1 = driver_scaled_norm(mu).unwrap();
            let g2 = driver_scaled_norm(mu + extra).unwrap();
            let a = solve_tree(g1.as_ref(), &sin_w(3.0), &tr, &opts()).unwrap();
            let b = solve_tree(g2.as_ref(), &sin_w(3.0).shift(shift), &tr, &opts()).unwrap();
            for k in 0..=n {
                for j in 0..=k {
                    prop_assert!(a.y(k)[j] <= b.y(k)[j] + 1e-12);
                }
            }
        }

        // With z^y frozen the gradient allocation is linear in the terminal value.
        #[test]
        fn frozen_driver_linearity(a in -2.0f64..2.0, b in -2.0f64..2.0, lambda in 0.5f64..3.0) {
            let tr = tree(1.0, 30);
            let base = driver_entropic(lambda).unwrap();
            let ys = solve_tree(base.as_ref(), &claim("-max(W, 0)"), &tr, &opts()).unwrap();
            let g = alloc_driver_gradient(base);
            let x1 = sin_w(1.0);
            let x2 = claim("min(W*W, 4)");
            let combo = x1.scale(a).add(&x2.scale(b));
            let s1 = solve_alloc_tree(g.as_ref(), &x1, &ys, &tr, &opts()).unwrap();
            let s2 = solve_alloc_tree(g.as_ref(), &x2, &ys, &tr, &opts()).unwrap();
            let sc = solve_alloc_tree(g.as_ref(), &combo, &ys, &tr, &opts()).unwrap();
            for k in 0..=30 {
                for j in 0..=k {
                    let lin = a * s1.y(k)[j] + b * s2.y(k)[j];
                    prop_assert!((sc.y(k)[j] - lin).abs() <= 1e-10);
                }
            }
        }
    }
}
