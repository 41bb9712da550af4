use std::sync::Arc;

use rayon::prelude::*;

use crate::drivers::{AllocDriver, Driver};
use crate::error::{Error, Result};
use crate::grid::PathEnsemble;

use super::regression::{self, Design};
use super::{check_same_carrier, BsdeSolution, Carrier, Method, SolverMeta, TerminalClaim};

/// Regression basis: monomials of total degree `1..=degree` in `B_k / √t_k`,
/// an intercept, and optionally the terminal payoff evaluated at `B_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub degree: usize,
    pub include_payoff: bool,
    pub ridge: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            degree: 3,
            include_payoff: true,
            ridge: 1e-8,
        }
    }
}

impl BasisSpec {
    /// Number of basis functions including the intercept.
    pub fn size(&self, dim: usize) -> usize {
        1 + exponents(dim, self.degree).len() + usize::from(self.include_payoff)
    }
}

fn exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim {
            if cur.iter().any(|&e| e > 0) {
                out.push(cur.clone());
            }
            return;
        }
        for e in 0..=left {
            cur.push(e as u32);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Row-major regression features of the states at level `k`; none at `k = 0`
/// where every path sits at the origin.
pub(crate) fn features(
    paths: &PathEnsemble,
    k: usize,
    exps: &[Vec<u32>],
    payoff: Option<&TerminalClaim>,
) -> Result<(Vec<f64>, usize)> {
    if k == 0 {
        return Ok((Vec::new(), 0));
    }
    let cols = exps.len() + usize::from(payoff.is_some());
    let norm = paths.grid().time(k).sqrt();
    let mut f = vec![0.0; paths.paths() * cols];
    f.par_chunks_mut(cols)
        .enumerate()
        .try_for_each(|(p, row)| -> Result<()> {
            let s = paths.state(p, k);
            for (c, e) in exps.iter().enumerate() {
                row[c] = e
                    .iter()
                    .zip(s)
                    .map(|(&ei, &si)| (si / norm).powi(ei as i32))
                    .product();
            }
            if let Some(pf) = payoff {
                row[cols - 1] = pf.evaluate(s)?;
            }
            Ok(())
        })?;
    Ok((f, cols))
}

/// Regression estimate of `E[target | B_k]` per path.
pub(crate) fn conditional_on_paths(
    paths: &PathEnsemble,
    k: usize,
    target: &[f64],
    payoff: Option<&TerminalClaim>,
    basis: &BasisSpec,
) -> Result<Vec<f64>> {
    let exps = exponents(paths.dim(), basis.degree);
    let payoff = if basis.include_payoff { payoff } else { None };
    let (f, cols) = features(paths, k, &exps, payoff)?;
    let design = Design {
        rows: paths.paths(),
        cols,
        data: &f,
    };
    let (mut fitted, _) = regression::fit(&design, &[target], basis.ridge)?;
    Ok(fitted.pop().unwrap_or_default())
}

/// Backward regression scheme. `step(k, m, z)` is the driver value on path
/// `m` at level `k`.
pub(crate) fn lsmc_backward<F>(
    paths: &Arc<PathEnsemble>,
    basis: &BasisSpec,
    payoff: Option<&TerminalClaim>,
    terminal: Vec<f64>,
    step: F,
) -> Result<BsdeSolution>
where
    F: Fn(usize, usize, &[f64]) -> f64 + Sync,
{
    let grid = *paths.grid();
    let n = grid.steps();
    let d = paths.dim();
    let m = paths.paths();
    let size = basis.size(d);
    if m < 10 * size {
        return Err(Error::RejectedConfiguration(format!(
            "{m} paths for a basis of {size} functions; use M ≥ {}",
            10 * size
        )));
    }
    let dt = grid.dt();
    let exps = exponents(d, basis.degree);
    let payoff = if basis.include_payoff { payoff } else { None };

    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n + 1];
    y[n] = terminal;
    let mut used = 0usize;
    // Σ_k g_k Δ along each path, for the standard error
    let mut running = vec![0.0; m];
    for k in (0..n).rev() {
        let (features, width) = features(paths, k, &exps, payoff)?;
        let next = &y[k + 1];
        let design = Design {
            rows: m,
            cols: width,
            data: &features,
        };
        let (mut fit_y, q) = regression::fit(&design, &[next.as_slice()], basis.ridge)?;
        let cond = fit_y.pop().unwrap_or_default();
        used = used.max(q + 1);
        // E[c ΔB | F_k] = 0, so centering on the fitted mean only removes noise.
        let targets: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..m)
                    .into_par_iter()
                    .map(|p| (next[p] - cond[p]) * paths.increment(p, k)[i] / dt)
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = targets.iter().map(|v| v.as_slice()).collect();
        let (fit_z, _) = regression::fit(&design, &refs, basis.ridge)?;
        let mut zk = vec![0.0; m * d];
        zk.par_chunks_mut(d).enumerate().for_each(|(p, zp)| {
            for i in 0..d {
                zp[i] = fit_z[i][p];
            }
        });
        let gk: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|p| step(k, p, &zk[p * d..(p + 1) * d]) * dt)
            .collect();
        let yk: Vec<f64> = cond.iter().zip(&gk).map(|(c, g)| c + g).collect();
        if yk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!("non-finite value at level {k}")));
        }
        for (a, g) in running.iter_mut().zip(&gk) {
            *a += g;
        }
        y[k] = yk;
        z[k] = zk;
    }
    z[n] = z[n - 1].clone();
    // Conservative error bar: the spread of ξ + Σ gΔ, whose mean is Y_0.
    let pathwise: Vec<f64> = y[n].iter().zip(&running).map(|(a, b)| a + b).collect();
    let se = regression::std_dev(&pathwise) / (m as f64).sqrt();
    Ok(BsdeSolution::new(
        Carrier::Paths(paths.clone()),
        y,
        z,
        SolverMeta {
            method: Method::Lsmc,
            basis_size: used,
            stability_margin: 0.0,
            std_error: Some(se),
        },
    ))
}

/// Regression Monte Carlo solve with terminal value `terminal` (used as is).
pub fn solve_lsmc(
    driver: &dyn Driver,
    terminal: &TerminalClaim,
    paths: &Arc<PathEnsemble>,
    basis: &BasisSpec,
) -> Result<BsdeSolution> {
    let grid = *paths.grid();
    let xi = terminal.on_paths(paths, grid.steps())?;
    lsmc_backward(paths, basis, Some(terminal), xi, |k, _, z| driver.evaluate(grid.time(k), z))
}

/// Regression Monte Carlo solve of the allocation BSDE with terminal value `-x`.
pub fn solve_alloc_lsmc(
    alloc: &dyn AllocDriver,
    x: &TerminalClaim,
    z_y: &BsdeSolution,
    paths: &Arc<PathEnsemble>,
    basis: &BasisSpec,
) -> Result<BsdeSolution> {
    check_same_carrier(z_y.carrier(), &Carrier::Paths(paths.clone()), "allocation solve")?;
    let grid = *paths.grid();
    let xi: Vec<f64> = x.on_paths(paths, grid.steps())?.into_iter().map(|v| -v).collect();
    let neg = x.neg();
    lsmc_backward(paths, basis, Some(&neg), xi, |k, p, z| {
        alloc.evaluate(grid.time(k), z, z_y.z_at(k, p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::*;
    use crate::grid::{build_grid, sample_paths};

    fn ensemble(n: usize, m: usize, d: usize, seed: u64) -> Arc<PathEnsemble> {
        Arc::new(sample_paths(build_grid(1.0, n).unwrap(), d, m, seed).unwrap())
    }

    #[test]
    fn monomial_exponents() {
        assert_eq!(exponents(1, 3), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(exponents(2, 2).len(), 5);
        assert_eq!(BasisSpec::default().size(1), 5);
    }

    #[test]
    fn zero_driver_linear_terminal() {
        let p = ensemble(20, 100_000, 1, 7);
        let s = solve_lsmc(driver_zero().as_ref(), &TerminalClaim::terminal_state(), &p, &BasisSpec::default()).unwrap();
        let se = s.meta().std_error.unwrap();
        assert!(s.y0().abs() <= 3.0 * se, "{} vs se {}", s.y0(), se);
    }

    #[test]
    fn constant_terminal() {
        let p = ensemble(10, 5_000, 2, 3);
        let d = driver_scaled_norm(0.5).unwrap();
        let s = solve_lsmc(d.as_ref(), &TerminalClaim::constant(1.75), &p, &BasisSpec::default()).unwrap();
        assert!((s.y0() - 1.75).abs() <= 1e-8);
    }

    #[test]
    fn too_few_paths() {
        let p = ensemble(5, 40, 1, 1);
        let r = solve_lsmc(driver_zero().as_ref(), &TerminalClaim::zero(), &p, &BasisSpec::default());
        assert!(matches!(r, Err(Error::RejectedConfiguration(_))));
    }

    #[test]
    fn deterministic() {
        let p = ensemble(10, 20_000, 1, 11);
        let d = driver_entropic(1.0).unwrap();
        let x = TerminalClaim::from_fn("sin", |s| s[0].sin());
        let a = solve_lsmc(d.as_ref(), &x, &p, &BasisSpec::default()).unwrap();
        let b = solve_lsmc(d.as_ref(), &x, &p, &BasisSpec::default()).unwrap();
        assert_eq!(a.y0().to_bits(), b.y0().to_bits());
        assert_eq!(a.z(3), b.z(3));
    }

    #[test]
    fn ensemble_mismatch() {
        let p = ensemble(10, 2_000, 1, 1);
        let q = ensemble(10, 2_000, 1, 2);
        let base = driver_scaled_norm(0.5).unwrap();
        let ys = solve_lsmc(base.as_ref(), &TerminalClaim::terminal_state(), &p, &BasisSpec::default()).unwrap();
        let a = alloc_driver_subdiff(base).unwrap();
        let r = solve_alloc_lsmc(a.as_ref(), &TerminalClaim::zero(), &ys, &q, &BasisSpec::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
