//! Joint backward recursions on the lattice.
//!
//! Every rule is evaluated as one recursion over a small state vector per
//! node (for instance `[ρ(Y), Λ(X;Y)]`), so that claims with an `F_t` part
//! can be handled exactly: on the cone below each node at level `t` the claim
//! is an ordinary terminal function, and the values at level `t` are then
//! carried back to time 0 by the same recursion.

use rayon::prelude::*;

use crate::allocation::Rule;
use crate::bsde::{check_driver_stability, check_step_bound, lattice_z, z_snap, TerminalClaim, TreeOptions, MAX_TILT};
use crate::drivers::{AllocDriverRef, DriverRef, Growth};
use crate::error::{invalid, Error, Result};
use crate::grid::TreeModel;

/// A claim given by terminal node values plus an optional addend that is a
/// function of the node at an intermediate level.
///
/// `snap` is the rounding threshold for `Z` differences of this claim. It is
/// set from the terminal range and survives addends, so `Y` and `Y + c_t`
/// resolve kinks identically; claims built from values of another claim
/// inherit its threshold through [`Split::snap_like`].
#[derive(Debug, Clone)]
pub(crate) struct Split {
    terminal: Vec<f64>,
    addend: Option<(usize, Vec<f64>)>,
    snap: f64,
}

impl Split {
    pub(crate) fn terminal(values: Vec<f64>) -> Self {
        let snap = z_snap(&values);
        Self {
            terminal: values,
            addend: None,
            snap,
        }
    }

    pub(crate) fn snap_like(mut self, other: &Split) -> Self {
        self.snap = other.snap;
        self
    }

    pub(crate) fn claim(claim: &TerminalClaim, tree: &TreeModel) -> Result<Self> {
        Ok(Self::terminal(claim.on_tree(tree)?))
    }

    pub(crate) fn zero(tree: &TreeModel) -> Self {
        Self::terminal(vec![0.0; tree.steps() + 1])
    }

    /// Adds `values[j]` on the cone below node `(level, j)`.
    pub(crate) fn plus_at(mut self, level: usize, values: &[f64]) -> Self {
        match &mut self.addend {
            Some((l, a)) if *l == level => a.iter_mut().zip(values).for_each(|(a, v)| *a += v),
            Some(_) => panic!("addends at two levels"),
            None => self.addend = Some((level, values.to_vec())),
        }
        self
    }

    fn level(&self) -> Option<usize> {
        self.addend.as_ref().map(|(l, _)| *l)
    }

    fn at(&self, j0: usize, i: usize) -> f64 {
        let a = self.addend.as_ref().map(|(_, a)| a[j0]).unwrap_or(0.0);
        self.terminal[j0 + i] + a
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Stepper {
    /// `[ρ(X)]`.
    Base(DriverRef),
    /// `[ρ(Y), Λ]` with `Λ` driven by `g_Λ(t, Z^Λ, Z^Y)`. Built-in rules
    /// have slope `|∂g(Z^Y)|`; custom ones declare theirs.
    Induced { alloc: AllocDriverRef, declared_slope: bool },
    /// `[ρ(Y), ρ(Y - X)]`.
    Marginal(DriverRef),
    /// `[ρ(γ_i Y)…, E_i…]`, each `E_i` the frozen-scenario expectation of `-X`
    /// (or its dual value when penalized).
    Scenarios {
        driver: DriverRef,
        gammas: Vec<f64>,
        weights: Vec<f64>,
        penalized: bool,
    },
}

impl Stepper {
    pub(crate) fn for_rule(rule: &Rule, driver: &DriverRef) -> Result<Self> {
        Ok(match rule {
            Rule::Gradient => Stepper::Induced {
                alloc: crate::drivers::alloc_driver_gradient(driver.clone()),
                declared_slope: false,
            },
            Rule::Subdifferential => Stepper::Induced {
                alloc: crate::drivers::alloc_driver_subdiff(driver.clone())?,
                declared_slope: false,
            },
            Rule::Marginal => Stepper::Marginal(driver.clone()),
            Rule::AumannShapley(q) | Rule::PenalizedAs(q) => Stepper::Scenarios {
                driver: driver.clone(),
                gammas: q.nodes().to_vec(),
                weights: q.weights().to_vec(),
                penalized: matches!(rule, Rule::PenalizedAs(_)),
            },
            Rule::Custom(a) => {
                if a.base().label() != driver.label() {
                    return Err(invalid(format!(
                        "allocation driver is built over {}, the risk driver is {}",
                        a.base().label(),
                        driver.label()
                    )));
                }
                Stepper::Induced {
                    alloc: a.clone(),
                    declared_slope: true,
                }
            }
        })
    }

    fn driver(&self) -> &DriverRef {
        match self {
            Stepper::Base(d) | Stepper::Marginal(d) => d,
            Stepper::Induced { alloc, .. } => alloc.base(),
            Stepper::Scenarios { driver, .. } => driver,
        }
    }

    fn width(&self) -> usize {
        match self {
            Stepper::Base(_) => 1,
            Stepper::Induced { .. } | Stepper::Marginal(_) => 2,
            Stepper::Scenarios { gammas, .. } => 2 * gammas.len(),
        }
    }

    fn terminal(&self, x: f64, y: f64, out: &mut [f64]) {
        match self {
            Stepper::Base(_) => out[0] = -x,
            Stepper::Induced { .. } => {
                out[0] = -y;
                out[1] = -x;
            }
            Stepper::Marginal(_) => {
                out[0] = -y;
                out[1] = -(y - x);
            }
            Stepper::Scenarios { gammas, .. } => {
                let n = gammas.len();
                for (i, g) in gammas.iter().enumerate() {
                    out[i] = -g * y;
                    out[n + i] = -x;
                }
            }
        }
    }

    /// Driver values for the controls `z`; `h = √Δ` for stability checks.
    fn step(&self, t: f64, h: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Stepper::Base(g) => out[0] = g.evaluate1(t, z[0]),
            Stepper::Induced { alloc, declared_slope } => {
                out[0] = alloc.base().evaluate1(t, z[0]);
                let slope = if *declared_slope {
                    alloc.z_lipschitz(t, &z[..1])
                } else {
                    Some(alloc.base().subgradient1(t, z[0]).abs())
                };
                if let Some(l) = slope {
                    if l * h > MAX_TILT {
                        return Err(Error::RejectedConfiguration(format!(
                            "{}: slope {l} at t = {t} gives slope·√Δ > 1; refine the grid",
                            alloc.label()
                        )));
                    }
                }
                out[1] = alloc.evaluate1(t, z[1], z[0]);
            }
            Stepper::Marginal(g) => {
                out[0] = g.evaluate1(t, z[0]);
                out[1] = g.evaluate1(t, z[1]);
            }
            Stepper::Scenarios { driver, gammas, penalized, .. } => {
                let n = gammas.len();
                for i in 0..n {
                    let zi = z[i];
                    let gi = driver.evaluate1(t, zi);
                    let q = driver.subgradient1(t, zi);
                    if q.abs() * h > MAX_TILT {
                        return Err(Error::RejectedConfiguration(format!(
                            "scenario kernel {q} gives a negative branch weight"
                        )));
                    }
                    out[i] = gi;
                    out[n + i] = if *penalized { gi + q * (z[n + i] - zi) } else { q * z[n + i] };
                }
            }
        }
        Ok(())
    }

    /// Per-component snap thresholds. Only components whose `Z` selects a
    /// subgradient need one; elsewhere the driver is continuous in `z`.
    fn snaps(&self, x: f64, y: f64) -> Vec<f64> {
        match self {
            Stepper::Base(_) => vec![x],
            Stepper::Induced { .. } | Stepper::Marginal(_) => vec![y, 0.0],
            Stepper::Scenarios { gammas, .. } => gammas
                .iter()
                .map(|g| g * y)
                .chain(gammas.iter().map(|_| 0.0))
                .collect(),
        }
    }

    fn value(&self, s: &[f64]) -> f64 {
        match self {
            Stepper::Base(_) => s[0],
            Stepper::Induced { .. } => s[1],
            Stepper::Marginal(_) => s[0] - s[1],
            Stepper::Scenarios { gammas, weights, .. } => {
                let n = gammas.len();
                weights.iter().zip(&s[n..]).map(|(w, v)| w * v).sum()
            }
        }
    }
}

/// A stepper bound to a tree, with stability checked up front.
#[derive(Debug, Clone)]
pub(crate) struct LatticeRule {
    tree: TreeModel,
    stepper: Stepper,
}

impl LatticeRule {
    pub(crate) fn new(tree: &TreeModel, options: &TreeOptions, stepper: Stepper) -> Result<Self> {
        check_driver_stability(stepper.driver().as_ref(), tree.grid(), options)?;
        if let Stepper::Induced { alloc, declared_slope: true } = &stepper {
            if alloc.z_lipschitz(0.0, &[0.0]).is_none() || alloc.base().growth() == Growth::Quadratic {
                check_step_bound(tree.grid(), options, &alloc.label())?;
            }
        }
        Ok(Self { tree: *tree, stepper })
    }

    /// Backward recursion from `top` to `bottom`, where level `k` holds
    /// `k - bottom + 1` nodes. Returns every level if `keep`, else only `bottom`.
    fn sweep(&self, top: usize, bottom: usize, states: Vec<f64>, snap: &[f64], keep: bool) -> Result<Vec<Vec<f64>>> {
        let w = self.stepper.width();
        let grid = self.tree.grid();
        let (h, dt) = (self.tree.sqrt_dt(), grid.dt());
        let mut z = vec![0.0; w];
        let mut g = vec![0.0; w];
        let mut levels = Vec::new();
        let mut cur = states;
        for k in (bottom..top).rev() {
            let t = grid.time(k);
            let nodes = k - bottom + 1;
            let mut next = vec![0.0; nodes * w];
            for i in 0..nodes {
                let dn = &cur[i * w..(i + 1) * w];
                let up = &cur[(i + 1) * w..(i + 2) * w];
                for c in 0..w {
                    z[c] = lattice_z(up[c], dn[c], h, snap[c]);
                }
                self.stepper.step(t, h, &z, &mut g)?;
                for c in 0..w {
                    next[i * w + c] = 0.5 * (up[c] + dn[c]) + g[c] * dt;
                }
            }
            if keep {
                levels.push(std::mem::replace(&mut cur, next));
            } else {
                cur = next;
            }
        }
        levels.push(cur);
        levels.reverse();
        Ok(levels)
    }

    /// Rule values for `(X; Y)` at levels `0..=L`, where `L` is the addend
    /// level (or `N` if neither claim has one).
    pub(crate) fn values(&self, x: &Split, y: &Split) -> Result<Vec<Vec<f64>>> {
        let n = self.tree.steps();
        let top = match (x.level(), y.level()) {
            (Some(a), Some(b)) if a != b => return Err(invalid("addends at different levels")),
            (a, b) => a.or(b).unwrap_or(n),
        };
        let w = self.stepper.width();
        let mut base = vec![0.0; (n + 1) * w];
        for i in 0..=n {
            self.stepper.terminal(x.terminal[i], y.terminal[i], &mut base[i * w..(i + 1) * w]);
        }
        let snap = self.stepper.snaps(x.snap, y.snap);
        let cone = |j0: usize| -> Result<Vec<f64>> {
            let mut states = vec![0.0; (n - top + 1) * w];
            for i in 0..=n - top {
                self.stepper.terminal(x.at(j0, i), y.at(j0, i), &mut states[i * w..(i + 1) * w]);
            }
            Ok(self.sweep(n, top, states, &snap, false)?.swap_remove(0))
        };
        let levels = if x.level().is_none() && y.level().is_none() {
            self.sweep(n, 0, base, &snap, true)?
        } else {
            let parts = (0..=top).into_par_iter().map(cone).collect::<Result<Vec<_>>>()?;
            self.sweep(top, 0, parts.concat(), &snap, true)?
        };
        Ok(levels
            .iter()
            .map(|s| s.chunks(w).map(|c| self.stepper.value(c)).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Rule;
    use crate::bsde::Engine;
    use crate::drivers::*;
    use crate::grid::{build_grid, build_tree};
    use crate::quadrature::QuadratureSpec;
    use crate::risk::rho;

    fn tree(n: usize) -> TreeModel {
        build_tree(build_grid(1.0, n).unwrap())
    }

    fn call() -> TerminalClaim {
        TerminalClaim::from_fn("max(W,0)", |s| s[0].max(0.0))
    }

    fn sin_w() -> TerminalClaim {
        TerminalClaim::from_fn("sin(W)", |s| s[0].sin())
    }

    #[test]
    fn steppers_match_staged_allocation() {
        let tr = tree(40);
        let e = Engine::tree(tr);
        let q = QuadratureSpec::gauss_legendre(6).unwrap();
        let (x, y) = (sin_w(), call().add(&sin_w().scale(0.4)));
        for driver in [driver_scaled_norm(0.5).unwrap(), driver_entropic(1.0).unwrap()] {
            for spec in ["grad", "subdiff", "marginal", "as", "pas"] {
                let rule = Rule::parse(spec, &driver, &q).unwrap();
                let staged = rule.allocate(&driver, &x, &y, &e).unwrap();
                let lat = LatticeRule::new(&tr, &TreeOptions::default(), Stepper::for_rule(&rule, &driver).unwrap()).unwrap();
                let v = lat
                    .values(&Split::claim(&x, &tr).unwrap(), &Split::claim(&y, &tr).unwrap())
                    .unwrap();
                for k in 0..=40 {
                    for (a, b) in v[k].iter().zip(staged.values(k)) {
                        assert!((a - b).abs() <= 1e-12, "{spec} {}: {a} vs {b}", driver.label());
                    }
                }
            }
        }
    }

    #[test]
    fn split_claims_match_whole_tree_when_addend_is_zero() {
        let tr = tree(30);
        let driver = driver_entropic(1.0).unwrap();
        let lat = LatticeRule::new(&tr, &TreeOptions::default(), Stepper::Base(driver.clone())).unwrap();
        let x = Split::claim(&call(), &tr).unwrap();
        let full = lat.values(&x, &Split::zero(&tr)).unwrap();
        let split = lat
            .values(&x.clone().plus_at(12, &[0.0; 13]), &Split::zero(&tr))
            .unwrap();
        assert_eq!(split.len(), 13);
        for k in 0..=12 {
            for (a, b) in split[k].iter().zip(&full[k]) {
                assert!((a - b).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn constant_addend_is_cash_additive_for_the_risk_measure() {
        let tr = tree(30);
        let driver = driver_entropic(1.0).unwrap();
        let lat = LatticeRule::new(&tr, &TreeOptions::default(), Stepper::Base(driver.clone())).unwrap();
        let x = Split::claim(&call(), &tr).unwrap();
        let c: Vec<f64> = (0..=10).map(|j| 0.1 * j as f64).collect();
        let shifted = lat.values(&x.clone().plus_at(10, &c), &Split::zero(&tr)).unwrap();
        let r = rho(driver.as_ref(), &call(), &Engine::tree(tr)).unwrap();
        for (j, v) in shifted[10].iter().enumerate() {
            assert!((v - (r.values(10)[j] - c[j])).abs() <= 1e-12);
        }
    }

    #[test]
    fn custom_rule_slope_is_checked() {
        let tr = tree(4);
        let ent = driver_entropic(1.0).unwrap();
        let rule = Rule::parse("custom:ent1:c=5", &ent, &QuadratureSpec::default()).unwrap();
        let lat = LatticeRule::new(&tr, &TreeOptions::default(), Stepper::for_rule(&rule, &ent).unwrap()).unwrap();
        let err = lat.values(&Split::claim(&call(), &tr).unwrap(), &Split::claim(&call(), &tr).unwrap());
        assert!(matches!(err, Err(Error::RejectedConfiguration(_))));
    }
}
