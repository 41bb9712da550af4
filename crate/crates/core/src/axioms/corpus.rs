//! Seeded test positions: payoffs, decompositions, translations and addends.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bsde::TerminalClaim;
use crate::error::{invalid, Result};
use crate::payoff::parse_payoff;

/// `Y = Σ pieces`, with convex weights `α_i` for weak-convexity checks.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub label: String,
    pub pieces: Vec<TerminalClaim>,
    pub alphas: Vec<f64>,
}

impl Decomposition {
    pub fn new(label: impl Into<String>, pieces: Vec<TerminalClaim>, alphas: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if pieces.is_empty() {
            return Err(invalid(format!("decomposition {label} has no pieces")));
        }
        if alphas.len() != pieces.len() {
            return Err(invalid(format!("decomposition {label}: {} weights for {} pieces", alphas.len(), pieces.len())));
        }
        let sum: f64 = alphas.iter().sum();
        if alphas.iter().any(|a| a.is_nan() || *a <= 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("decomposition {label}: weights must be positive and sum to 1")));
        }
        Ok(Self { label, pieces, alphas })
    }

    /// Equal weights.
    pub fn uniform(label: impl Into<String>, pieces: Vec<TerminalClaim>) -> Result<Self> {
        let n = pieces.len();
        let mut alphas = vec![1.0 / n.max(1) as f64; n];
        if n > 0 {
            alphas[n - 1] = 1.0 - alphas[..n - 1].iter().sum::<f64>();
        }
        Self::new(label, pieces, alphas)
    }

    /// The portfolio `Σ pieces`.
    pub fn total(&self) -> TerminalClaim {
        let mut it = self.pieces.iter();
        let first = it.next().expect("non-empty").clone();
        it.fold(first, |acc, p| acc.add(p)).with_label(self.label.clone())
    }
}

/// An `F_t`-measurable amount `c_t`, given as a function of `(t, B_t)`.
#[derive(Clone)]
pub struct Translation {
    pub label: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Translation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Translation").field("label", &self.label).finish()
    }
}

impl Translation {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c:?}"), move |_, _| c)
    }

    pub fn at(&self, t: f64, w: f64) -> f64 {
        (self.f)(t, w)
    }
}

/// Positions used by the axiom harness.
#[derive(Debug, Clone)]
pub struct PositionCorpus {
    pub payoffs: Vec<TerminalClaim>,
    pub decompositions: Vec<Decomposition>,
    pub translations: Vec<Translation>,
    /// Nonnegative claims `h` for monotonicity pairs `(X, X + h)`.
    pub addends: Vec<TerminalClaim>,
    pub seed: u64,
    pub diagonal_only: bool,
}

fn expr(text: &str) -> TerminalClaim {
    TerminalClaim::from_expr(parse_payoff(text, 1).expect("corpus expression"))
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

impl PositionCorpus {
    /// Twelve payoffs, four seeded decompositions (one with a zero piece, one
    /// with a repeated piece), three translations and four addends.
    pub fn standard(seed: u64) -> Self {
        let payoffs = standard_payoffs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [2usize, 3, 4, 4];
        let decompositions = sizes
            .iter()
            .enumerate()
            .map(|(d, &size)| {
                let mut pieces: Vec<TerminalClaim> = (0..size)
                    .map(|_| {
                        let k = rng.random_range(0..payoffs.len());
                        let a = round4(rng.random_range(-1.0..1.0));
                        payoffs[k].scale(a).with_label(format!("{a}*({})", payoffs[k].label()))
                    })
                    .collect();
                if d == 2 {
                    pieces[size - 1] = TerminalClaim::zero();
                }
                if d == 3 {
                    pieces[size - 1] = pieces[0].clone();
                }
                let raw: Vec<f64> = (0..size).map(|_| rng.random_range(0.2..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                let mut alphas: Vec<f64> = raw.iter().map(|a| a / sum).collect();
                let head: f64 = alphas[..size - 1].iter().sum();
                alphas[size - 1] = 1.0 - head;
                Decomposition::new(format!("Y{}", d + 1), pieces, alphas).expect("valid decomposition")
            })
            .collect();
        Self {
            payoffs,
            decompositions,
            translations: standard_translations(),
            addends: standard_addends(),
            seed,
            diagonal_only: false,
        }
    }

    pub fn portfolios(&self) -> Vec<TerminalClaim> {
        self.decompositions.iter().map(|d| d.total()).collect()
    }

    /// Every payoff against every portfolio, then the diagonal pairs
    /// `(X, X)` for payoffs and portfolios.
    pub fn pairs(&self) -> Vec<(TerminalClaim, TerminalClaim)> {
        if self.diagonal_only {
            return self.diagonal();
        }
        let ys = self.portfolios();
        let mut out = Vec::new();
        for y in &ys {
            for x in &self.payoffs {
                out.push((x.clone(), y.clone()));
            }
        }
        out.extend(self.diagonal());
        out
    }

    pub fn diagonal(&self) -> Vec<(TerminalClaim, TerminalClaim)> {
        self.payoffs
            .iter()
            .cloned()
            .chain(self.portfolios())
            .map(|x| (x.clone(), x))
            .collect()
    }

    /// Restricts pair-based checks to the diagonal `(X, X)`.
    pub fn diagonal_pairs_only(mut self) -> Self {
        self.diagonal_only = true;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.payoffs.is_empty() && self.decompositions.is_empty()
    }
}

fn standard_payoffs() -> Vec<TerminalClaim> {
    vec![
        expr("W"),
        expr("-0.5*W"),
        expr("max(W, 0)"),
        expr("max(W - 0.5, 0)"),
        expr("max(-W, 0)"),
        expr("max(-0.3 - W, 0)"),
        TerminalClaim::from_fn("1{W>0}", |s| if s[0] > 0.0 { 1.0 } else { 0.0 }),
        TerminalClaim::from_fn("1{W>-0.5}", |s| if s[0] > -0.5 { 1.0 } else { 0.0 }),
        expr("exp(-(W^2))"),
        TerminalClaim::from_fn("sin(W)", |s| s[0].sin()),
        TerminalClaim::from_fn("tanh(2*W)", |s| (2.0 * s[0]).tanh()),
        expr("min(W^2, 4)"),
    ]
}

fn standard_translations() -> Vec<Translation> {
    vec![
        Translation::constant(0.7),
        Translation::new("0.5*W_t-0.1", |_, w| 0.5 * w - 0.1),
        Translation::new("tanh(2*W_t)+0.2*t", |t, w| (2.0 * w).tanh() + 0.2 * t),
    ]
}

fn standard_addends() -> Vec<TerminalClaim> {
    vec![
        TerminalClaim::constant(0.3),
        expr("0.5*max(W, 0)"),
        expr("exp(-(W^2))"),
        TerminalClaim::from_fn("1{W>0}", |s| if s[0] > 0.0 { 1.0 } else { 0.0 }),
    ]
}
