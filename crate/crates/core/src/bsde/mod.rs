//! Backward solvers for `Y_t = ξ + ∫_t^T g(s, Z_s) ds - ∫_t^T Z_s dB_s`.
//!
//! Two discretizations share one solution type: the exact recombining tree
//! ([`solve_tree`]) and least-squares regression Monte Carlo
//! ([`solve_lsmc`]). Allocation BSDEs whose driver also reads `Z^Y` go
//! through [`solve_alloc_tree`] and [`solve_alloc_lsmc`].

mod claim;
mod lsmc;
pub(crate) mod regression;
mod tree;

use std::sync::Arc;

pub use claim::TerminalClaim;
pub use lsmc::{solve_alloc_lsmc, solve_lsmc, BasisSpec};
pub use tree::{solve_alloc_tree, solve_tree, TreeOptions};

pub(crate) use lsmc::conditional_on_paths;
pub(crate) use tree::{check_driver_stability, check_step_bound, lattice_z, z_snap, MAX_TILT};
#[cfg(test)]
pub(crate) use tree::tree_backward;

use crate::drivers::{AllocDriver, Driver};
use crate::error::{invalid, Result};
use crate::grid::{PathEnsemble, TimeGrid, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tree,
    Lsmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tree => "tree",
            Method::Lsmc => "lsmc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverMeta {
    pub method: Method,
    /// Number of regression columns actually used at the widest step (0 on the tree).
    pub basis_size: usize,
    /// Largest `L·√Δ` seen, `L` the local slope of the driver in `z`.
    pub stability_margin: f64,
    /// Monte Carlo standard error of `Y_0` (LSMC only).
    pub std_error: Option<f64>,
}

/// Discretization a solution lives on.
#[derive(Debug, Clone)]
pub enum Carrier {
    Tree(TreeModel),
    Paths(Arc<PathEnsemble>),
}

impl Carrier {
    pub fn grid(&self) -> &TimeGrid {
        match self {
            Carrier::Tree(t) => t.grid(),
            Carrier::Paths(p) => p.grid(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Carrier::Tree(_) => 1,
            Carrier::Paths(p) => p.dim(),
        }
    }

    /// Number of states (nodes or paths) at level `k`.
    pub fn width(&self, k: usize) -> usize {
        match self {
            Carrier::Tree(t) => t.nodes(k),
            Carrier::Paths(p) => p.paths(),
        }
    }

    pub fn tree(&self) -> Option<&TreeModel> {
        match self {
            Carrier::Tree(t) => Some(t),
            Carrier::Paths(_) => None,
        }
    }

    pub fn paths(&self) -> Option<&Arc<PathEnsemble>> {
        match self {
            Carrier::Tree(_) => None,
            Carrier::Paths(p) => Some(p),
        }
    }

    /// Whether two carriers are the same discretization.
    pub fn same_as(&self, other: &Carrier) -> bool {
        match (self, other) {
            (Carrier::Tree(a), Carrier::Tree(b)) => a.grid() == b.grid(),
            (Carrier::Paths(a), Carrier::Paths(b)) => {
                Arc::ptr_eq(a, b) || (a.fingerprint() == b.fingerprint() && a.grid() == b.grid())
            }
            _ => false,
        }
    }

    /// Terminal state of node/path `i` at level `k`.
    pub fn state(&self, k: usize, i: usize) -> Vec<f64> {
        match self {
            Carrier::Tree(t) => vec![t.state(k, i)],
            Carrier::Paths(p) => p.state(i, k).to_vec(),
        }
    }

    pub fn describe(&self) -> String {
        let g = self.grid();
        match self {
            Carrier::Tree(_) => format!("tree T={} N={}", g.horizon(), g.steps()),
            Carrier::Paths(p) => format!(
                "paths T={} N={} M={} d={} seed={}",
                g.horizon(),
                g.steps(),
                p.paths(),
                p.dim(),
                p.seed()
            ),
        }
    }
}

/// Adapted pair `(Y, Z)`; `y[k][i]` and `z[k][i*d + c]` for state `i` at level `k`.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    carrier: Carrier,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    meta: SolverMeta,
}

impl BsdeSolution {
    pub(crate) fn new(carrier: Carrier, y: Vec<Vec<f64>>, z: Vec<Vec<f64>>, meta: SolverMeta) -> Self {
        Self { carrier, y, z, meta }
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn grid(&self) -> &TimeGrid {
        self.carrier.grid()
    }

    pub fn dim(&self) -> usize {
        self.carrier.dim()
    }

    pub fn meta(&self) -> &SolverMeta {
        &self.meta
    }

    pub fn y(&self, k: usize) -> &[f64] {
        &self.y[k]
    }

    /// Flattened `Z` at level `k` (`d` entries per state).
    pub fn z(&self, k: usize) -> &[f64] {
        &self.z[k]
    }

    pub fn z_at(&self, k: usize, i: usize) -> &[f64] {
        let d = self.dim();
        &self.z[k][i * d..(i + 1) * d]
    }

    /// `Y_0`; on path ensembles this is the common value at time zero.
    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    pub fn levels(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn y_all(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub(crate) fn z_all(&self) -> &[Vec<f64>] {
        &self.z
    }
}

/// Solver selection shared by the risk and allocation layers.
#[derive(Debug, Clone)]
pub enum Engine {
    Tree { tree: TreeModel, options: TreeOptions },
    Lsmc { paths: Arc<PathEnsemble>, basis: BasisSpec },
}

impl Engine {
    pub fn tree(tree: TreeModel) -> Self {
        Engine::Tree {
            tree,
            options: TreeOptions::default(),
        }
    }

    pub fn lsmc(paths: Arc<PathEnsemble>) -> Self {
        Engine::Lsmc {
            paths,
            basis: BasisSpec::default(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            Engine::Tree { tree, .. } => tree.grid(),
            Engine::Lsmc { paths, .. } => paths.grid(),
        }
    }

    pub fn carrier(&self) -> Carrier {
        match self {
            Engine::Tree { tree, .. } => Carrier::Tree(*tree),
            Engine::Lsmc { paths, .. } => Carrier::Paths(paths.clone()),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            Engine::Tree { .. } => Method::Tree,
            Engine::Lsmc { .. } => Method::Lsmc,
        }
    }

    /// Solves with terminal value `terminal` (not negated).
    pub fn solve(&self, driver: &dyn Driver, terminal: &TerminalClaim) -> Result<BsdeSolution> {
        match self {
            Engine::Tree { tree, options } => solve_tree(driver, terminal, tree, options),
            Engine::Lsmc { paths, basis } => solve_lsmc(driver, terminal, paths, basis),
        }
    }

    /// Solves the allocation BSDE with terminal value `-x`.
    pub fn solve_alloc(&self, alloc: &dyn AllocDriver, x: &TerminalClaim, z_y: &BsdeSolution) -> Result<BsdeSolution> {
        match self {
            Engine::Tree { tree, options } => solve_alloc_tree(alloc, x, z_y, tree, options),
            Engine::Lsmc { paths, basis } => solve_alloc_lsmc(alloc, x, z_y, paths, basis),
        }
    }
}

pub(crate) fn check_same_carrier(a: &Carrier, b: &Carrier, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what}: discretization mismatch ({} vs {})",
            a.describe(),
            b.describe()
        )))
    }
}
