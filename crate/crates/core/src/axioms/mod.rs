//! Property checks of allocation rules against the axioms of a dynamic CAR.
//!
//! On the lattice every check is exact and state-wise at every level; claims
//! with an `F_t` component are evaluated on the cones below level `t` (see
//! [`lattice`]). On path ensembles checks are statistical, at time 0 only,
//! with an allowance of three standard errors.

pub mod corpus;
mod lattice;
mod props;
mod report;

use rayon::prelude::*;

use crate::allocation::Rule;
use crate::bsde::{Engine, Method, TerminalClaim, TreeOptions};
use crate::drivers::DriverRef;
use crate::error::{invalid, Result};
use crate::grid::TreeModel;
use crate::risk::rho;

pub use corpus::{Decomposition, PositionCorpus, Translation};
pub use props::{
    check_lemma1, check_prop1_direction_a, check_prop3_condition, check_prop3_implication, Consistency,
    ConditionReport, KernelGrid, Lemma1Report, Prop1Report, Prop3Item, Prop3Report, ProbeSpec,
};
pub use report::{render_reports, AxiomId, AxiomReport, Status, Witness};

pub(crate) use lattice::{LatticeRule, Split, Stepper};

/// Default lattice tolerance.
pub const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Eq,
    /// `lhs ≤ rhs`.
    Le,
}

#[derive(Debug, Clone, Default)]
struct Outcome {
    worst: Option<(f64, f64, Witness)>,
    checks: usize,
}

impl Outcome {
    /// Keeps the check with the largest `violation / tolerance`; ties keep the first.
    fn record(&mut self, violation: f64, tolerance: f64, witness: impl FnOnce() -> Witness) {
        self.checks += 1;
        let score = violation / tolerance;
        let better = match &self.worst {
            None => true,
            Some((v, t, _)) => score > v / t || (score.is_nan() && !(v / t).is_nan()),
        };
        if better {
            self.worst = Some((violation, tolerance, witness()));
        }
    }

    fn merge(mut self, other: Outcome) -> Outcome {
        self.checks += other.checks;
        if let Some((v, t, w)) = other.worst {
            let score = v / t;
            let better = match &self.worst {
                None => true,
                Some((a, b, _)) => score > a / b,
            };
            if better {
                self.worst = Some((v, t, w));
            }
        }
        self
    }
}

fn violation(kind: Kind, lhs: f64, rhs: f64) -> f64 {
    let v = match kind {
        Kind::Eq => (lhs - rhs).abs(),
        Kind::Le => (lhs - rhs).max(0.0),
    };
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Levels `t` used for checks involving `F_t` claims.
pub fn consistency_levels(n: usize) -> Vec<usize> {
    let mut v = vec![n / 4, n / 2, 3 * n / 4];
    v.dedup();
    v
}

struct TreeCtx<'a> {
    tree: TreeModel,
    rule: LatticeRule,
    base: LatticeRule,
    corpus: &'a PositionCorpus,
    tol: f64,
}

impl TreeCtx<'_> {
    fn split(&self, c: &TerminalClaim) -> Result<Split> {
        Split::claim(c, &self.tree)
    }

    fn lambda(&self, x: &TerminalClaim, y: &TerminalClaim) -> Result<Vec<Vec<f64>>> {
        self.rule.values(&self.split(x)?, &self.split(y)?)
    }

    fn rho(&self, x: &TerminalClaim) -> Result<Vec<Vec<f64>>> {
        self.base.values(&self.split(x)?, &Split::zero(&self.tree))
    }

    fn translation(&self, c: &Translation, level: usize) -> Vec<f64> {
        let t = self.tree.grid().time(level);
        (0..=level).map(|j| c.at(t, self.tree.state(level, j))).collect()
    }

    /// Compares two adapted processes at the given levels.
    #[allow(clippy::too_many_arguments)]
    fn compare(
        &self,
        out: &mut Outcome,
        kind: Kind,
        lhs: &[Vec<f64>],
        rhs: &[Vec<f64>],
        levels: impl IntoIterator<Item = usize>,
        x: &str,
        y: &str,
        detail: &str,
    ) {
        for k in levels {
            for (j, (a, b)) in lhs[k].iter().zip(&rhs[k]).enumerate() {
                let v = violation(kind, *a, *b);
                out.record(v, self.tol, || Witness {
                    level: k,
                    time: self.tree.grid().time(k),
                    node: j,
                    state: self.tree.state(k, j),
                    x: x.to_string(),
                    y: y.to_string(),
                    detail: detail.to_string(),
                    lhs: *a,
                    rhs: *b,
                });
            }
        }
    }

    fn jobs(&self, axiom: AxiomId) -> Result<Outcome> {
        let c = self.corpus;
        let all = |v: &Vec<Vec<f64>>| 0..v.len();
        let levels_owned = consistency_levels(self.tree.steps());
        let levels = &levels_owned;
        let ys = c.portfolios();
        type Job<'b> = Box<dyn Fn() -> Result<Outcome> + Send + Sync + 'b>;
        let mut jobs: Vec<Job<'_>> = Vec::new();
        match axiom {
            AxiomId::Monotonicity => {
                for y in &ys {
                    for x in &c.payoffs {
                        for h in &c.addends {
                            let (x, y) = (x.clone(), y.clone());
                            jobs.push(Box::new(move || {
                                let mut o = Outcome::default();
                                let a = self.lambda(&x.add(h), &y)?;
                                let b = self.lambda(&x, &y)?;
                                self.compare(&mut o, Kind::Le, &a, &b, all(&a), x.label(), y.label(), &format!("h={}", h.label()));
                                Ok(o)
                            }));
                        }
                    }
                }
            }
            AxiomId::NoUndercut => {
                for (x, y) in c.pairs() {
                    jobs.push(Box::new(move || {
                        let mut o = Outcome::default();
                        let a = self.lambda(&x, &y)?;
                        let b = self.rho(&x)?;
                        self.compare(&mut o, Kind::Le, &a, &b, all(&a), x.label(), y.label(), "");
                        Ok(o)
                    }));
                }
            }
            AxiomId::Riskless => {
                for y in ys.iter().chain(&c.payoffs) {
                    for tr in &c.translations {
                        for &t in levels {
                            let y = y.clone();
                            jobs.push(Box::new(move || {
                                let mut o = Outcome::default();
                                let ct = self.translation(tr, t);
                                let a = self.rule.values(&Split::zero(&self.tree).plus_at(t, &ct), &self.split(&y)?)?;
                                let mut b = vec![Vec::new(); t + 1];
                                b[t] = ct.iter().map(|v| -v).collect();
                                self.compare(&mut o, Kind::Eq, &a, &b, [t], &format!("c_t={}", tr.label), y.label(), "");
                                Ok(o)
                            }));
                        }
                    }
                }
            }
            AxiomId::Cash1 | AxiomId::Cash => {
                let both = axiom == AxiomId::Cash;
                for (x, y) in c.pairs() {
                    jobs.push(Box::new(move || {
                        let mut o = Outcome::default();
                        let base = self.lambda(&x, &y)?;
                        for tr in &c.translations {
                            for &t in levels {
                                let ct = self.translation(tr, t);
                                let xs = self.split(&x)?.plus_at(t, &ct);
                                let ys = if both { self.split(&y)?.plus_at(t, &ct) } else { self.split(&y)? };
                                let a = self.rule.values(&xs, &ys)?;
                                let mut b = vec![Vec::new(); t + 1];
                                b[t] = base[t].iter().zip(&ct).map(|(l, c)| l - c).collect();
                                self.compare(&mut o, Kind::Eq, &a, &b, [t], x.label(), y.label(), &format!("c_t={}", tr.label));
                            }
                        }
                        Ok(o)
                    }));
                }
            }
            AxiomId::FullAllocation | AxiomId::SubAllocation | AxiomId::WeakConvexity => {
                for d in &c.decompositions {
                    jobs.push(Box::new(move || {
                        let mut o = Outcome::default();
                        let y = d.total();
                        let whole = self.lambda(&y, &y)?;
                        let weak = axiom == AxiomId::WeakConvexity;
                        let mut sum: Vec<Vec<f64>> = whole.iter().map(|v| vec![0.0; v.len()]).collect();
                        for (p, a) in d.pieces.iter().zip(&d.alphas) {
                            let (piece, w) = if weak { (p.scale(1.0 / a), *a) } else { (p.clone(), 1.0) };
                            let l = self.lambda(&piece, &y)?;
                            for (s, v) in sum.iter_mut().zip(&l) {
                                s.iter_mut().zip(v).for_each(|(s, v)| *s += w * v);
                            }
                        }
                        let (kind, lhs, rhs) = match axiom {
                            AxiomId::FullAllocation => (Kind::Eq, &whole, &sum),
                            AxiomId::SubAllocation => (Kind::Le, &sum, &whole),
                            _ => (Kind::Le, &whole, &sum),
                        };
                        self.compare(&mut o, kind, lhs, rhs, all(&whole), &d.label, y.label(), "");
                        Ok(o)
                    }));
                }
            }
            AxiomId::Tc1 | AxiomId::Tc2 => {
                let type2 = axiom == AxiomId::Tc2;
                for (x, y) in c.pairs() {
                    jobs.push(Box::new(move || {
                        let mut o = Outcome::default();
                        let lam = self.lambda(&x, &y)?;
                        let ry = if type2 { Some(self.rho(&y)?) } else { None };
                        let (xsplit, ysplit) = (self.split(&x)?, self.split(&y)?);
                        for &t in levels {
                            let neg: Vec<f64> = lam[t].iter().map(|v| -v).collect();
                            let xs = Split::zero(&self.tree).plus_at(t, &neg).snap_like(&xsplit);
                            let ys = match &ry {
                                Some(r) => {
                                    let neg_r: Vec<f64> = r[t].iter().map(|v| -v).collect();
                                    Split::zero(&self.tree).plus_at(t, &neg_r).snap_like(&ysplit)
                                }
                                None => ysplit.clone(),
                            };
                            let a = self.rule.values(&xs, &ys)?;
                            self.compare(&mut o, Kind::Eq, &a, &lam, 0..=t, x.label(), y.label(), &format!("t_level={t}"));
                        }
                        Ok(o)
                    }));
                }
            }
            AxiomId::CarIdentity | AxiomId::AudaciousIdentity | AxiomId::ZeroAllocation => {
                for y in c.payoffs.iter().chain(&ys) {
                    let y = y.clone();
                    jobs.push(Box::new(move || {
                        let mut o = Outcome::default();
                        if axiom != AxiomId::ZeroAllocation {
                            let a = self.lambda(&y, &y)?;
                            let b = self.rho(&y)?;
                            let kind = if axiom == AxiomId::CarIdentity { Kind::Eq } else { Kind::Le };
                            self.compare(&mut o, kind, &a, &b, all(&a), y.label(), y.label(), "");
                        } else {
                            let a = self.lambda(&TerminalClaim::zero(), &y)?;
                            let b: Vec<Vec<f64>> = a.iter().map(|v| vec![0.0; v.len()]).collect();
                            self.compare(&mut o, Kind::Eq, &a, &b, all(&a), "0", y.label(), "");
                        }
                        Ok(o)
                    }));
                }
            }
        }
        let outcomes = jobs.par_iter().map(|j| j()).collect::<Result<Vec<_>>>()?;
        Ok(outcomes.into_iter().fold(Outcome::default(), Outcome::merge))
    }
}

fn finish(axiom: AxiomId, rule: &Rule, driver: &DriverRef, method: Method, tol: f64, o: Outcome) -> AxiomReport {
    finish_named(axiom.name(), rule, driver, method, tol, o)
}

fn finish_named(name: &str, rule: &Rule, driver: &DriverRef, method: Method, tol: f64, o: Outcome) -> AxiomReport {
    let (violation, tolerance, witness) = match o.worst {
        Some((v, t, w)) => (v, t, Some(w)),
        None => (0.0, tol, None),
    };
    let status = if o.checks == 0 {
        Status::NotApplicable
    } else if violation <= tolerance {
        Status::Pass
    } else {
        Status::Fail
    };
    AxiomReport {
        axiom: name.to_string(),
        rule: rule.name(),
        driver: driver.label(),
        method,
        status,
        violation,
        tolerance,
        checks: o.checks,
        witness,
        note: (o.checks == 0).then(|| "empty corpus for this axiom".to_string()),
    }
}

/// Checks one axiom for `rule` over `driver` on the whole corpus.
pub fn check_axiom(
    axiom: AxiomId,
    rule: &Rule,
    driver: &DriverRef,
    corpus: &PositionCorpus,
    engine: &Engine,
    tolerance: f64,
) -> Result<AxiomReport> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    if corpus.is_empty() {
        return Err(invalid("empty position corpus"));
    }
    match engine {
        Engine::Tree { tree, options } => {
            let ctx = tree_ctx(rule, driver, corpus, tree, options, tolerance)?;
            let o = ctx.jobs(axiom)?;
            Ok(finish(axiom, rule, driver, Method::Tree, tolerance, o))
        }
        Engine::Lsmc { .. } => ensemble_check(axiom, rule, driver, corpus, engine, tolerance),
    }
}

/// Checks several axioms; reports keep the order of `axioms`.
pub fn check_axioms(
    axioms: &[AxiomId],
    rule: &Rule,
    driver: &DriverRef,
    corpus: &PositionCorpus,
    engine: &Engine,
    tolerance: f64,
) -> Result<Vec<AxiomReport>> {
    axioms
        .iter()
        .map(|a| check_axiom(*a, rule, driver, corpus, engine, tolerance))
        .collect()
}

fn tree_ctx<'a>(
    rule: &Rule,
    driver: &DriverRef,
    corpus: &'a PositionCorpus,
    tree: &TreeModel,
    options: &TreeOptions,
    tol: f64,
) -> Result<TreeCtx<'a>> {
    Ok(TreeCtx {
        tree: *tree,
        rule: LatticeRule::new(tree, options, Stepper::for_rule(rule, driver)?)?,
        base: LatticeRule::new(tree, options, Stepper::Base(driver.clone()))?,
        corpus,
        tol,
    })
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleCtx<'a> {
    rule: &'a Rule,
    driver: &'a DriverRef,
    engine: &'a Engine,
    tol: f64,
}

/// Value at time 0 and its standard error.
type Est = (f64, f64);

impl EnsembleCtx<'_> {
    fn lambda(&self, x: &TerminalClaim, y: &TerminalClaim) -> Result<Est> {
        let p = self.rule.allocate(self.driver, x, y, self.engine)?;
        Ok((p.value0(), p.std_error().unwrap_or(0.0)))
    }

    fn rho(&self, x: &TerminalClaim) -> Result<Est> {
        let r = rho(self.driver.as_ref(), x, self.engine)?;
        Ok((r.value0(), r.std_error().unwrap_or(0.0)))
    }

    #[allow(clippy::too_many_arguments)]
    fn compare(&self, out: &mut Outcome, kind: Kind, lhs: f64, rhs: f64, se2: f64, x: &str, y: &str, detail: &str) {
        let tol = self.tol.max(3.0 * se2.sqrt());
        out.record(violation(kind, lhs, rhs), tol, || Witness {
            level: 0,
            time: 0.0,
            node: 0,
            state: 0.0,
            x: x.to_string(),
            y: y.to_string(),
            detail: detail.to_string(),
            lhs,
            rhs,
        });
    }
}

fn ensemble_check(
    axiom: AxiomId,
    rule: &Rule,
    driver: &DriverRef,
    c: &PositionCorpus,
    engine: &Engine,
    tol: f64,
) -> Result<AxiomReport> {
    if matches!(axiom, AxiomId::Tc1 | AxiomId::Tc2) {
        let mut r = finish(axiom, rule, driver, Method::Lsmc, tol, Outcome::default());
        r.note = Some("time-consistency needs F_t claims, checked on the lattice only".into());
        return Ok(r);
    }
    let ctx = EnsembleCtx { rule, driver, engine, tol };
    let ys = c.portfolios();
    let mut o = Outcome::default();
    let sq = |a: f64| a * a;
    match axiom {
        AxiomId::Monotonicity => {
            for y in &ys {
                for x in &c.payoffs {
                    let (b, sb) = ctx.lambda(x, y)?;
                    for h in &c.addends {
                        let (a, sa) = ctx.lambda(&x.add(h), y)?;
                        ctx.compare(&mut o, Kind::Le, a, b, sq(sa) + sq(sb), x.label(), y.label(), &format!("h={}", h.label()));
                    }
                }
            }
        }
        AxiomId::NoUndercut => {
            for (x, y) in c.pairs() {
                let (a, sa) = ctx.lambda(&x, &y)?;
                let (b, sb) = ctx.rho(&x)?;
                ctx.compare(&mut o, Kind::Le, a, b, sq(sa) + sq(sb), x.label(), y.label(), "");
            }
        }
        AxiomId::Riskless => {
            for y in ys.iter().chain(&c.payoffs) {
                for tr in &c.translations {
                    let c0 = tr.at(0.0, 0.0);
                    let (a, sa) = ctx.lambda(&TerminalClaim::constant(c0), y)?;
                    ctx.compare(&mut o, Kind::Eq, a, -c0, sq(sa), &format!("c_t={}", tr.label), y.label(), "");
                }
            }
        }
        AxiomId::Cash1 | AxiomId::Cash => {
            for (x, y) in c.pairs() {
                let (b, sb) = ctx.lambda(&x, &y)?;
                for tr in &c.translations {
                    let c0 = tr.at(0.0, 0.0);
                    let yy = if axiom == AxiomId::Cash { y.shift(c0) } else { y.clone() };
                    let (a, sa) = ctx.lambda(&x.shift(c0), &yy)?;
                    ctx.compare(&mut o, Kind::Eq, a, b - c0, sq(sa) + sq(sb), x.label(), y.label(), &format!("c_t={}", tr.label));
                }
            }
        }
        AxiomId::FullAllocation | AxiomId::SubAllocation | AxiomId::WeakConvexity => {
            for d in &c.decompositions {
                let y = d.total();
                let (whole, sw) = ctx.lambda(&y, &y)?;
                let weak = axiom == AxiomId::WeakConvexity;
                let (mut sum, mut s2) = (0.0, sq(sw));
                for (p, a) in d.pieces.iter().zip(&d.alphas) {
                    let (piece, w) = if weak { (p.scale(1.0 / a), *a) } else { (p.clone(), 1.0) };
                    let (v, s) = ctx.lambda(&piece, &y)?;
                    sum += w * v;
                    s2 += sq(w * s);
                }
                let (kind, lhs, rhs) = match axiom {
                    AxiomId::FullAllocation => (Kind::Eq, whole, sum),
                    AxiomId::SubAllocation => (Kind::Le, sum, whole),
                    _ => (Kind::Le, whole, sum),
                };
                ctx.compare(&mut o, kind, lhs, rhs, s2, &d.label, y.label(), "");
            }
        }
        AxiomId::CarIdentity | AxiomId::AudaciousIdentity => {
            for y in c.payoffs.iter().chain(&ys) {
                let (a, sa) = ctx.lambda(y, y)?;
                let (b, sb) = ctx.rho(y)?;
                let kind = if axiom == AxiomId::CarIdentity { Kind::Eq } else { Kind::Le };
                ctx.compare(&mut o, kind, a, b, sq(sa) + sq(sb), y.label(), y.label(), "");
            }
        }
        AxiomId::ZeroAllocation => {
            for y in c.payoffs.iter().chain(&ys) {
                let (a, sa) = ctx.lambda(&TerminalClaim::zero(), y)?;
                ctx.compare(&mut o, Kind::Eq, a, 0.0, sq(sa), "0", y.label(), "");
            }
        }
        AxiomId::Tc1 | AxiomId::Tc2 => unreachable!(),
    }
    Ok(finish(axiom, rule, driver, Method::Lsmc, tol, o))
}
