//! Closed-form reference values.
//!
//! Lattice oracles compute conditional expectations directly from binomial
//! probabilities over the terminal nodes reachable from each node, with
//! log-sum-exp shifting for exponential moments. They never run the backward
//! recursion, so they are independent checks of the solvers.

use crate::bsde::TerminalClaim;
use crate::error::{invalid, Error, Result};
use crate::grid::{PathEnsemble, TreeModel};

/// A named closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormSpec {
    EntropicRho { lambda: f64 },
    EntropicGradient { lambda: f64 },
    EntropicLambda1 { lambda: f64, c: f64 },
    EntropicLambda2 { lambda: f64, lambda_tilde: f64 },
    WorstCaseDrift { mu: f64 },
}

impl ClosedFormSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClosedFormSpec::EntropicRho { .. } => "entropic-rho",
            ClosedFormSpec::EntropicGradient { .. } => "entropic-gradient",
            ClosedFormSpec::EntropicLambda1 { .. } => "entropic-lambda1",
            ClosedFormSpec::EntropicLambda2 { .. } => "entropic-lambda2",
            ClosedFormSpec::WorstCaseDrift { .. } => "worst-case-drift",
        }
    }

    /// Values at level `t` of the tree. `y` is ignored by the risk-measure forms.
    pub fn evaluate(&self, x: &TerminalClaim, y: &TerminalClaim, tree: &TreeModel, t: usize) -> Result<Vec<f64>> {
        match *self {
            ClosedFormSpec::EntropicRho { lambda } => entropic_rho(lambda, x, tree, t),
            ClosedFormSpec::EntropicGradient { lambda } => entropic_gradient_car(lambda, x, y, tree, t),
            ClosedFormSpec::EntropicLambda1 { lambda, c } => entropic_lambda1(lambda, c, x, y, tree, t),
            ClosedFormSpec::EntropicLambda2 { lambda, lambda_tilde } => {
                entropic_lambda2(lambda, lambda_tilde, x, y, tree, t)
            }
            ClosedFormSpec::WorstCaseDrift { mu } => worst_case_drift_rho(mu, x, tree, t),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_level(tree: &TreeModel, t: usize) -> Result<()> {
    if t > tree.steps() {
        return Err(invalid(format!("level {t} beyond N = {}", tree.steps())));
    }
    Ok(())
}

/// `ln P(i ups in n steps)` with up probability `p`, for `i = 0..=n`.
fn log_binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut lnfact = vec![0.0; n + 1];
    for i in 1..=n {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (0..=n)
        .map(|i| {
            let mut v = lnfact[n] - lnfact[i] - lnfact[n - i];
            if i > 0 {
                v += i as f64 * lp;
            }
            if n > i {
                v += (n - i) as f64 * lq;
            }
            v
        })
        .collect()
}

/// `ln Σ_i exp(a_i + b_i)`.
fn log_sum_exp(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
    let terms: Vec<f64> = a.iter().enumerate().map(|(i, &ai)| ai + b(i)).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// For every node at level `t`: `f(lnpmf, offset)` where terminal node
/// `offset + i` is reached with log-probability `lnpmf[i]`.
fn per_node<F>(tree: &TreeModel, t: usize, p_up: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64], usize) -> f64,
{
    let pmf = log_binomial_pmf(tree.steps() - t, p_up);
    (0..=t).map(|j| f(&pmf, j)).collect()
}

/// `ρ_t(X) = λ ln E[exp(-X/λ) | F_t]`.
pub fn entropic_rho(lambda: f64, x: &TerminalClaim, tree: &TreeModel, t: usize) -> Result<Vec<f64>> {
    positive("lambda", lambda)?;
    check_level(tree, t)?;
    let xs = x.on_tree(tree)?;
    Ok(per_node(tree, t, 0.5, |pmf, j| lambda * log_sum_exp(pmf, |i| -xs[j + i] / lambda)))
}

/// `E[-X e^{-Y/λ} | F_t] / E[e^{-Y/λ} | F_t]`.
pub fn entropic_gradient_car(
    lambda: f64,
    x: &TerminalClaim,
    y: &TerminalClaim,
    tree: &TreeModel,
    t: usize,
) -> Result<Vec<f64>> {
    positive("lambda", lambda)?;
    check_level(tree, t)?;
    let xs = x.on_tree(tree)?;
    let ys = y.on_tree(tree)?;
    Ok(per_node(tree, t, 0.5, |pmf, j| {
        let w: Vec<f64> = pmf.iter().enumerate().map(|(i, &l)| l - ys[j + i] / lambda).collect();
        let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, wi) in w.iter().enumerate() {
            let e = (wi - m).exp();
            num += -xs[j + i] * e;
            den += e;
        }
        num / den
    }))
}

/// `E_{Q_c}[-Z | F_t]` under the constant kernel `c` (B drifts at `+c`).
fn tilted_expectation(c: f64, z: &[f64], tree: &TreeModel, t: usize) -> Result<Vec<f64>> {
    let a = c * tree.sqrt_dt();
    if a.abs() >= 1.0 {
        let need = (c * c * tree.grid().horizon()).floor() as usize + 1;
        return Err(Error::RejectedConfiguration(format!(
            "tilt c = {c} needs c·√Δ < 1; use N ≥ {need}"
        )));
    }
    let p = 0.5 * (1.0 + a);
    if p == 1.0 || p == 0.0 {
        return Err(Error::RejectedConfiguration("degenerate tilt".into()));
    }
    Ok(per_node(tree, t, p, |pmf, j| {
        pmf.iter().enumerate().map(|(i, l)| -z[j + i] * l.exp()).sum()
    }))
}

/// `ρ_t(Y) - E_{Q_c}[-(Y - X) | F_t]`.
pub fn entropic_lambda1(
    lambda: f64,
    c: f64,
    x: &TerminalClaim,
    y: &TerminalClaim,
    tree: &TreeModel,
    t: usize,
) -> Result<Vec<f64>> {
    positive("c", c)?;
    let rho_y = entropic_rho(lambda, y, tree, t)?;
    let xs = x.on_tree(tree)?;
    let ys = y.on_tree(tree)?;
    let diff: Vec<f64> = ys.iter().zip(&xs).map(|(a, b)| a - b).collect();
    let e = tilted_expectation(c, &diff, tree, t)?;
    Ok(rho_y.iter().zip(e).map(|(r, e)| r - e).collect())
}

/// `ρ_t(Y) + λ̃ ln E[exp(-(X - Y)/λ̃) | F_t]`.
pub fn entropic_lambda2(
    lambda: f64,
    lambda_tilde: f64,
    x: &TerminalClaim,
    y: &TerminalClaim,
    tree: &TreeModel,
    t: usize,
) -> Result<Vec<f64>> {
    positive("lambda tilde", lambda_tilde)?;
    let rho_y = entropic_rho(lambda, y, tree, t)?;
    let xs = x.on_tree(tree)?;
    let ys = y.on_tree(tree)?;
    let second = per_node(tree, t, 0.5, |pmf, j| {
        lambda_tilde * log_sum_exp(pmf, |i| -(xs[j + i] - ys[j + i]) / lambda_tilde)
    });
    Ok(rho_y.iter().zip(second).map(|(a, b)| a + b).collect())
}

/// `E_μ` value of a payoff monotone in the terminal state: the worst case
/// tilts against the payoff with `q = ∓μ`.
pub fn worst_case_drift_rho(mu: f64, x: &TerminalClaim, tree: &TreeModel, t: usize) -> Result<Vec<f64>> {
    positive("mu", mu)?;
    check_level(tree, t)?;
    let xs = x.on_tree(tree)?;
    let up = xs.windows(2).all(|w| w[1] >= w[0]);
    let down = xs.windows(2).all(|w| w[1] <= w[0]);
    let q = match (up, down) {
        (true, true) => 0.0,
        (true, false) => -mu,
        (false, true) => mu,
        (false, false) => {
            return Err(Error::NotApplicable(format!(
                "{} is not monotone in the terminal state",
                x.label()
            )))
        }
    };
    tilted_expectation(q, &xs, tree, t)
}

/// Self-normalized ensemble estimate of the gradient allocation at time 0,
/// with its delta-method standard error.
pub fn entropic_gradient_car_on_paths(
    lambda: f64,
    x: &TerminalClaim,
    y: &TerminalClaim,
    paths: &PathEnsemble,
) -> Result<(f64, f64)> {
    positive("lambda", lambda)?;
    let n = paths.grid().steps();
    let xs = x.on_paths(paths, n)?;
    let ys = y.on_paths(paths, n)?;
    let shift = ys.iter().map(|v| -v / lambda).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ys.iter().map(|v| (-v / lambda - shift).exp()).collect();
    let m = xs.len() as f64;
    let den: f64 = w.iter().sum::<f64>() / m;
    let est: f64 = xs.iter().zip(&w).map(|(x, w)| -x * w).sum::<f64>() / m / den;
    let var: f64 = xs
        .iter()
        .zip(&w)
        .map(|(x, w)| (w * (-x - est) / den).powi(2))
        .sum::<f64>()
        / (m - 1.0);
    Ok((est, (var / m).sqrt()))
}
