use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{PathEnsemble, TreeModel};
use crate::payoff::PayoffExpr;

type PayoffFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// A position `X = f(B_T)` with an optional essential bound.
#[derive(Clone)]
pub struct TerminalClaim {
    label: String,
    payoff: Arc<PayoffFn>,
    bound: f64,
}

impl fmt::Debug for TerminalClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalClaim")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .finish()
    }
}

impl fmt::Display for TerminalClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl TerminalClaim {
    pub fn from_fn<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            payoff: Arc::new(move |s| Ok(f(s))),
            bound: f64::INFINITY,
        }
    }

    pub fn from_expr(expr: PayoffExpr) -> Self {
        let label = expr.to_string();
        Self {
            label,
            payoff: Arc::new(move |s| expr.evaluate(s)),
            bound: f64::INFINITY,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("{c:?}"),
            payoff: Arc::new(move |_| Ok(c)),
            bound: c.abs(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Identity in the first coordinate, `X = B_T`.
    pub fn terminal_state() -> Self {
        Self::from_fn("W", |s| s[0])
    }

    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if bound.is_nan() || bound < 0.0 {
            return Err(invalid(format!("bound must be nonnegative, got {bound}")));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn evaluate(&self, state: &[f64]) -> Result<f64> {
        let v = (self.payoff)(state)?;
        if !v.is_finite() {
            return Err(Error::Evaluation {
                state: state.to_vec(),
                message: format!("payoff {} is not finite: {v}", self.label),
            });
        }
        if v.abs() > self.bound {
            return Err(Error::Evaluation {
                state: state.to_vec(),
                message: format!("payoff {} = {v} exceeds its bound {}", self.label, self.bound),
            });
        }
        Ok(v)
    }

    pub fn add(&self, other: &TerminalClaim) -> TerminalClaim {
        let (a, b) = (self.payoff.clone(), other.payoff.clone());
        TerminalClaim {
            label: format!("({} + {})", self.label, other.label),
            payoff: Arc::new(move |s| Ok(a(s)? + b(s)?)),
            bound: self.bound + other.bound,
        }
    }

    pub fn scale(&self, a: f64) -> TerminalClaim {
        let p = self.payoff.clone();
        TerminalClaim {
            label: format!("({a:?} * {})", self.label),
            payoff: Arc::new(move |s| Ok(a * p(s)?)),
            bound: a.abs() * self.bound,
        }
    }

    pub fn shift(&self, c: f64) -> TerminalClaim {
        let p = self.payoff.clone();
        TerminalClaim {
            label: format!("({} + {c:?})", self.label),
            payoff: Arc::new(move |s| Ok(p(s)? + c)),
            bound: self.bound + c.abs(),
        }
    }

    pub fn neg(&self) -> TerminalClaim {
        let p = self.payoff.clone();
        TerminalClaim {
            label: format!("(-{})", self.label),
            payoff: Arc::new(move |s| Ok(-p(s)?)),
            bound: self.bound,
        }
    }

    /// Values on the terminal level of the tree, node `j` at index `j`.
    pub fn on_tree(&self, tree: &TreeModel) -> Result<Vec<f64>> {
        let n = tree.steps();
        (0..=n).map(|j| self.evaluate(&[tree.state(n, j)])).collect()
    }

    /// Values at level `k` of each path.
    pub fn on_paths(&self, paths: &PathEnsemble, k: usize) -> Result<Vec<f64>> {
        (0..paths.paths())
            .into_par_iter()
            .map(|m| self.evaluate(paths.state(m, k)))
            .collect()
    }
}
