//! Dynamic risk measures `ρ_t(X) = E^g(-X | F_t)` and the dual machinery:
//! Girsanov kernels, their densities, minimal penalties and conditional
//! expectations under the changed measure.
//!
//! Convention: under the measure of kernel `q`, `B` has drift `+q`. On the
//! lattice this means the up-branch weight `½(1 + q√Δ)`; on paths the
//! log-density increment is `-½‖q‖²Δ + q·ΔB`. With this convention the
//! kernel `q = ∂g(Z^X)` attains `ρ_t(X)` in the dual representation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bsde::{conditional_on_paths, BasisSpec, BsdeSolution, Carrier, Engine, TerminalClaim, MAX_TILT};
use crate::drivers::{dot, Driver};
use crate::error::{invalid, Error, Result};
use crate::grid::{PathEnsemble, TreeModel};
use crate::bsde::regression;

/// `ρ_t(X)` at every level, with the underlying solution of the BSDE for `-X`.
#[derive(Debug, Clone)]
pub struct RiskProcess {
    solution: BsdeSolution,
}

impl RiskProcess {
    pub fn values(&self, k: usize) -> &[f64] {
        self.solution.y(k)
    }

    pub fn value0(&self) -> f64 {
        self.solution.y0()
    }

    pub fn solution(&self) -> &BsdeSolution {
        &self.solution
    }

    pub fn into_solution(self) -> BsdeSolution {
        self.solution
    }

    pub fn std_error(&self) -> Option<f64> {
        self.solution.meta().std_error
    }
}

pub fn rho(driver: &dyn Driver, x: &TerminalClaim, engine: &Engine) -> Result<RiskProcess> {
    let solution = engine.solve(driver, &x.neg())?;
    Ok(RiskProcess { solution })
}

/// Adapted drift `q_k` per state for `k < N`.
#[derive(Debug, Clone)]
pub struct GirsanovKernel {
    carrier: Carrier,
    q: Vec<Vec<f64>>,
}

impl GirsanovKernel {
    /// `q[k][i*d + c]` for levels `k < N`.
    pub fn from_values(carrier: Carrier, q: Vec<Vec<f64>>) -> Result<Self> {
        let n = carrier.grid().steps();
        let d = carrier.dim();
        if q.len() != n {
            return Err(invalid(format!("kernel has {} levels, grid has {n}", q.len())));
        }
        for (k, qk) in q.iter().enumerate() {
            if qk.len() != carrier.width(k) * d {
                return Err(invalid(format!("kernel level {k} has {} entries", qk.len())));
            }
            if qk.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("kernel level {k} is not finite")));
            }
        }
        if let Carrier::Tree(tree) = &carrier {
            let h = tree.sqrt_dt();
            for (k, qk) in q.iter().enumerate() {
                for (j, &v) in qk.iter().enumerate() {
                    if v.abs() * h > MAX_TILT {
                        let need = (v * v * tree.grid().horizon()).floor() as usize + 1;
                        return Err(Error::RejectedConfiguration(format!(
                            "kernel value {v} at node ({k}, {j}) gives a negative branch weight; use N ≥ {need}"
                        )));
                    }
                }
            }
        }
        Ok(Self { carrier, q })
    }

    pub fn zero(carrier: Carrier) -> Self {
        let n = carrier.grid().steps();
        let d = carrier.dim();
        let q = (0..n).map(|k| vec![0.0; carrier.width(k) * d]).collect();
        Self { carrier, q }
    }

    pub fn constant(carrier: Carrier, value: &[f64]) -> Result<Self> {
        let d = carrier.dim();
        if value.len() != d {
            return Err(invalid(format!("constant kernel needs {d} components")));
        }
        let n = carrier.grid().steps();
        let q = (0..n)
            .map(|k| (0..carrier.width(k)).flat_map(|_| value.iter().copied()).collect())
            .collect();
        Self::from_values(carrier, q)
    }

    pub fn on_tree<F: Fn(usize, usize) -> f64>(tree: &TreeModel, f: F) -> Result<Self> {
        let q = (0..tree.steps()).map(|k| (0..=k).map(|j| f(k, j)).collect()).collect();
        Self::from_values(Carrier::Tree(*tree), q)
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn q(&self, k: usize) -> &[f64] {
        &self.q[k]
    }

    pub fn q_at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.carrier.dim();
        &self.q[k][i * d..(i + 1) * d]
    }

    pub fn max_norm(&self) -> f64 {
        let d = self.carrier.dim();
        self.q
            .iter()
            .flat_map(|qk| qk.chunks(d).map(|c| dot(c, c).sqrt()))
            .fold(0.0, f64::max)
    }

    /// `(down, up)` branch weights at node `(k, j)`.
    pub fn branch_weights(&self, k: usize, j: usize) -> (f64, f64) {
        let h = self.tree().map(|t| t.sqrt_dt()).unwrap_or(0.0);
        let a = self.q[k][j] * h;
        (0.5 * (1.0 - a), 0.5 * (1.0 + a))
    }

    fn tree(&self) -> Option<&TreeModel> {
        self.carrier.tree()
    }

    /// `L(k0 + moves.len(); k0)` along the lattice path leaving `(k0, j0)`
    /// with the given moves (`true` = up).
    pub fn path_density(&self, k0: usize, j0: usize, moves: &[bool]) -> Result<f64> {
        if self.tree().is_none() {
            return Err(invalid("path_density needs a lattice kernel"));
        }
        if k0 + moves.len() > self.q.len() || j0 > k0 {
            return Err(invalid("path leaves the lattice"));
        }
        let (mut k, mut j, mut l) = (k0, j0, 1.0);
        for &up in moves {
            let (pd, pu) = self.branch_weights(k, j);
            l *= if up { 2.0 * pu } else { 2.0 * pd };
            if up {
                j += 1;
            }
            k += 1;
        }
        Ok(l)
    }

    /// `ln L(to; from)` on path `m`.
    pub fn path_log_density(&self, m: usize, from: usize, to: usize) -> Result<f64> {
        let paths = self.carrier.paths().ok_or_else(|| invalid("path_log_density needs a path kernel"))?;
        Ok(log_density_increments(self, paths, m, from, to))
    }

    /// `L(T; k)` for every path.
    pub fn densities(&self, k: usize) -> Result<Vec<f64>> {
        let paths = self.carrier.paths().ok_or_else(|| invalid("densities needs a path kernel"))?;
        let n = paths.grid().steps();
        Ok((0..paths.paths())
            .into_par_iter()
            .map(|m| log_density_increments(self, paths, m, k, n).exp())
            .collect())
    }
}

fn log_density_increments(kernel: &GirsanovKernel, paths: &PathEnsemble, m: usize, from: usize, to: usize) -> f64 {
    let dt = paths.grid().dt();
    (from..to)
        .map(|k| {
            let q = kernel.q_at(k, m);
            -0.5 * dot(q, q) * dt + dot(q, paths.increment(m, k))
        })
        .sum()
}

/// `q_k = ∂g(t_k, Z_k)` from a solution of the BSDE with driver `g`.
pub fn kernel_from_subgradient(driver: &dyn Driver, solution: &BsdeSolution) -> Result<GirsanovKernel> {
    let grid = *solution.grid();
    let d = solution.dim();
    let q = (0..grid.steps())
        .map(|k| {
            let t = grid.time(k);
            let z = solution.z(k);
            let mut out = vec![0.0; z.len()];
            for (zc, qc) in z.chunks(d).zip(out.chunks_mut(d)) {
                driver.subgradient(t, zc, qc);
            }
            out
        })
        .collect();
    GirsanovKernel::from_values(solution.carrier().clone(), q)
}

/// An adapted process given by its values at every level.
#[derive(Debug, Clone)]
pub struct AdaptedValues {
    values: Vec<Vec<f64>>,
    std_error: Option<f64>,
}

impl AdaptedValues {
    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn value0(&self) -> f64 {
        self.values[0][0]
    }

    pub fn std_error(&self) -> Option<f64> {
        self.std_error
    }

    pub fn levels(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn new(values: Vec<Vec<f64>>, std_error: Option<f64>) -> Self {
        Self { values, std_error }
    }

    pub(crate) fn all(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Minimal penalty `c_k(Q) = E_Q[∫_{t_k}^T g*(s, q_s) ds | F_{t_k}]`.
pub type PenaltyProcess = AdaptedValues;

fn conjugates(driver: &dyn Driver, kernel: &GirsanovKernel) -> Result<Vec<Vec<f64>>> {
    let grid = *kernel.carrier.grid();
    let d = kernel.carrier.dim();
    kernel
        .q
        .iter()
        .enumerate()
        .map(|(k, qk)| {
            let t = grid.time(k);
            qk.chunks(d)
                .enumerate()
                .map(|(i, q)| {
                    let c = driver.conjugate(t, q);
                    if c.is_finite() {
                        Ok(c)
                    } else {
                        Err(Error::InadmissibleKernel(format!(
                            "conjugate of {} is infinite at level {k}, state {i}, q = {q:?}",
                            driver.label()
                        )))
                    }
                })
                .collect()
        })
        .collect()
}

/// Tilted backward sweep `E_k = p_dn E_{k+1}(j) + p_up E_{k+1}(j+1) + r_k(j)`.
fn tilted_sweep(kernel: &GirsanovKernel, terminal: Vec<f64>, running: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    let n = kernel.q.len();
    let dt = kernel.carrier.grid().dt();
    let mut v = vec![Vec::new(); n + 1];
    v[n] = terminal;
    for k in (0..n).rev() {
        let next = &v[k + 1];
        v[k] = (0..=k)
            .map(|j| {
                let (pd, pu) = kernel.branch_weights(k, j);
                let r = running.map(|r| r[k][j] * dt).unwrap_or(0.0);
                pd * next[j] + pu * next[j + 1] + r
            })
            .collect();
    }
    v
}

/// Per-path `(ln L(T;k), Σ_{i≥k} g*Δ)` for all levels.
fn path_accumulators(kernel: &GirsanovKernel, paths: &PathEnsemble, conj: Option<&[Vec<f64>]>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = paths.grid().steps();
    let m = paths.paths();
    let dt = paths.grid().dt();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|p| {
            let mut logl = vec![0.0; n + 1];
            let mut acc = vec![0.0; n + 1];
            for k in (0..n).rev() {
                let q = kernel.q_at(k, p);
                logl[k] = logl[k + 1] - 0.5 * dot(q, q) * dt + dot(q, paths.increment(p, k));
                acc[k] = acc[k + 1] + conj.map(|c| c[k][p] * dt).unwrap_or(0.0);
            }
            (logl, acc)
        })
        .collect();
    let mut logl = vec![vec![0.0; m]; n + 1];
    let mut acc = vec![vec![0.0; m]; n + 1];
    for (p, (l, a)) in per_path.into_iter().enumerate() {
        for k in 0..=n {
            logl[k][p] = l[k];
            acc[k][p] = a[k];
        }
    }
    (logl, acc)
}

/// Regression estimate of `E[target_k · L(T;k) | F_k]` at every level.
fn reweighted_on_paths(
    paths: &Arc<PathEnsemble>,
    logl: &[Vec<f64>],
    target: impl Fn(usize, usize) -> f64 + Sync,
    payoff: Option<&TerminalClaim>,
) -> Result<AdaptedValues> {
    let n = paths.grid().steps();
    let m = paths.paths();
    let basis = BasisSpec::default();
    let mut values = Vec::with_capacity(n + 1);
    let mut se = None;
    for k in 0..=n {
        let w: Vec<f64> = (0..m).into_par_iter().map(|p| target(k, p) * logl[k][p].exp()).collect();
        if k == n {
            values.push(w);
            continue;
        }
        if k == 0 {
            se = Some(regression::std_dev(&w) / (m as f64).sqrt());
        }
        values.push(conditional_on_paths(paths, k, &w, payoff, &basis)?);
    }
    Ok(AdaptedValues::new(values, se))
}

pub fn penalty(driver: &dyn Driver, kernel: &GirsanovKernel) -> Result<PenaltyProcess> {
    let conj = conjugates(driver, kernel)?;
    match &kernel.carrier {
        Carrier::Tree(tree) => {
            let terminal = vec![0.0; tree.steps() + 1];
            Ok(AdaptedValues::new(tilted_sweep(kernel, terminal, Some(&conj)), None))
        }
        Carrier::Paths(paths) => {
            let (logl, acc) = path_accumulators(kernel, paths, Some(&conj));
            reweighted_on_paths(paths, &logl, |k, p| acc[k][p], None)
        }
    }
}

/// `E_Q[-X | F_t]` at every level.
pub fn expectation_under_q(x: &TerminalClaim, kernel: &GirsanovKernel) -> Result<AdaptedValues> {
    match &kernel.carrier {
        Carrier::Tree(tree) => {
            let terminal: Vec<f64> = x.on_tree(tree)?.into_iter().map(|v| -v).collect();
            Ok(AdaptedValues::new(tilted_sweep(kernel, terminal, None), None))
        }
        Carrier::Paths(paths) => {
            let n = paths.grid().steps();
            let xs = x.on_paths(paths, n)?;
            let (logl, _) = path_accumulators(kernel, paths, None);
            reweighted_on_paths(paths, &logl, |_, p| -xs[p], Some(x))
        }
    }
}

/// `E_Q[-X | F_t] - c_t(Q)` for one candidate scenario.
pub fn dual_value(driver: &dyn Driver, x: &TerminalClaim, kernel: &GirsanovKernel) -> Result<AdaptedValues> {
    let e = expectation_under_q(x, kernel)?;
    let c = penalty(driver, kernel)?;
    let values = e
        .values
        .iter()
        .zip(&c.values)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - v).collect())
        .collect();
    let se = match (e.std_error, c.std_error) {
        (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
        _ => None,
    };
    Ok(AdaptedValues::new(values, se))
}
