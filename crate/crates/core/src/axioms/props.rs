//! Driver-level sufficient conditions, the round trip from a rule back to a
//! risk measure, and brute-force verification of optimal scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_axiom, consistency_levels, finish_named, tree_ctx, AxiomId, AxiomReport, Kind, Outcome, PositionCorpus,
    Split, Status, TreeCtx,
};
use crate::allocation::Rule;
use crate::bsde::{Engine, Method, TerminalClaim};
use crate::drivers::{AllocDriver, AllocDriverRef, DriverRef};
use crate::error::{invalid, Error, Result};
use crate::grid::TreeModel;
use crate::risk::{dual_value, rho, GirsanovKernel};

/// Items of the driver-level result linking `g_Λ` to the CAR axioms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Prop3Item {
    I,
    Ii,
    Iii,
    Iv,
    V,
    Vi,
}

impl Prop3Item {
    pub const ALL: [Prop3Item; 6] = [Prop3Item::I, Prop3Item::Ii, Prop3Item::Iii, Prop3Item::Iv, Prop3Item::V, Prop3Item::Vi];

    pub fn name(self) -> &'static str {
        match self {
            Prop3Item::I => "i",
            Prop3Item::Ii => "ii",
            Prop3Item::Iii => "iii",
            Prop3Item::Iv => "iv",
            Prop3Item::V => "v",
            Prop3Item::Vi => "vi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|i| i.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown item '{s}'")))
    }

    /// The axiom the condition implies for the induced rule.
    pub fn implied_axiom(self) -> AxiomId {
        match self {
            Prop3Item::I => AxiomId::Cash1,
            Prop3Item::Ii => AxiomId::ZeroAllocation,
            Prop3Item::Iii => AxiomId::NoUndercut,
            Prop3Item::Iv => AxiomId::Monotonicity,
            Prop3Item::V => AxiomId::SubAllocation,
            Prop3Item::Vi => AxiomId::WeakConvexity,
        }
    }

    /// Items that hold for every induced rule without extra conditions.
    pub fn is_unconditional(self) -> bool {
        matches!(self, Prop3Item::I | Prop3Item::Iv)
    }
}

/// Seeded probes over a box of `z` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub count: usize,
    pub seed: u64,
    pub radius: f64,
    pub horizon: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 0x5eed,
            radius: 4.0,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub item: Prop3Item,
    pub alloc: String,
    pub holds: bool,
    pub worst: f64,
    pub witness: Option<String>,
    pub probes: usize,
}

fn sample(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-r..r)).collect()
}

/// Checks the sufficient condition of `item` on seeded probes.
pub fn check_prop3_condition(item: Prop3Item, alloc: &dyn AllocDriver, probes: &ProbeSpec) -> ConditionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(probes.seed);
    let base = alloc.base();
    let dims: Vec<usize> = match base.dim() {
        Some(d) => vec![d],
        None => vec![1, 2],
    };
    let mut worst = 0.0_f64;
    let mut witness = None;
    let mut count = 0;
    if !item.is_unconditional() {
        for &dim in &dims {
            for i in 0..probes.count / dims.len() {
                let t = rng.random_range(0.0..probes.horizon);
                let zy = sample(&mut rng, dim, probes.radius);
                let z = if i == 0 { vec![0.0; dim] } else { sample(&mut rng, dim, probes.radius) };
                let (lhs, rhs, what) = match item {
                    Prop3Item::Ii => (alloc.evaluate(t, &vec![0.0; dim], &zy).abs(), 0.0, "g_Λ(t,0,z^y)"),
                    Prop3Item::Iii => (alloc.evaluate(t, &z, &zy), base.evaluate(t, &z), "g_Λ(t,z,z^y) - g(t,z)"),
                    Prop3Item::V => {
                        let n = rng.random_range(2..=4usize);
                        let parts: Vec<Vec<f64>> = (0..n).map(|_| sample(&mut rng, dim, probes.radius / n as f64)).collect();
                        let total: Vec<f64> = (0..dim).map(|c| parts.iter().map(|p| p[c]).sum()).collect();
                        let sum: f64 = parts.iter().map(|p| alloc.evaluate(t, p, &zy)).sum();
                        (sum, alloc.evaluate(t, &total, &zy), "Σg_Λ(z^i) - g_Λ(Σz^i)")
                    }
                    Prop3Item::Vi => {
                        let u = sample(&mut rng, dim, probes.radius);
                        let a: f64 = rng.random_range(0.0..1.0);
                        let mid: Vec<f64> = z.iter().zip(&u).map(|(p, q)| a * p + (1.0 - a) * q).collect();
                        let chord = a * alloc.evaluate(t, &z, &zy) + (1.0 - a) * alloc.evaluate(t, &u, &zy);
                        (alloc.evaluate(t, &mid, &zy), chord, "g_Λ(midpoint) - chord")
                    }
                    Prop3Item::I | Prop3Item::Iv => unreachable!(),
                };
                count += 1;
                let excess = lhs - rhs;
                let tol = 1e-12 * (1.0 + lhs.abs().max(rhs.abs()));
                if excess > tol && excess > worst {
                    worst = excess;
                    witness = Some(format!("t={t:e} z={z:?} z_y={zy:?}: {what} = {excess:e}"));
                }
            }
        }
    }
    ConditionReport {
        item,
        alloc: alloc.label(),
        holds: witness.is_none(),
        worst,
        witness,
        probes: count,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop3Report {
    pub condition: ConditionReport,
    pub axiom: AxiomReport,
    /// False only if the condition holds and the implied axiom fails.
    pub consistent: bool,
}

/// Checks the condition of `item` and the axiom it implies for the rule
/// induced by `alloc`.
pub fn check_prop3_implication(
    item: Prop3Item,
    alloc: &AllocDriverRef,
    corpus: &PositionCorpus,
    engine: &Engine,
    tolerance: f64,
) -> Result<Prop3Report> {
    let condition = check_prop3_condition(item, alloc.as_ref(), &ProbeSpec::default());
    let rule = Rule::Custom(alloc.clone());
    let axiom = check_axiom(item.implied_axiom(), &rule, alloc.base(), corpus, engine, tolerance)?;
    let consistent = !(condition.holds && axiom.failed());
    Ok(Prop3Report {
        condition,
        axiom,
        consistent,
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consistency {
    /// `ρ_s(X) = ρ_s(-ρ_t(X))`.
    Full,
    /// `ρ_s(X) ≤ ρ_s(-ρ_t(X))`.
    Weak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub status: Status,
    pub hypotheses: Vec<AxiomReport>,
    pub derived: Vec<AxiomReport>,
    pub consistency: Option<Consistency>,
    pub note: Option<String>,
}

/// Derives `ρ̃_t(X) = Λ_t(X;X)` from `rule` and checks it is a time-consistent
/// convex risk measure agreeing with the one induced by `driver`.
pub fn check_prop1_direction_a(
    rule: &Rule,
    driver: &DriverRef,
    corpus: &PositionCorpus,
    engine: &Engine,
    tolerance: f64,
) -> Result<Prop1Report> {
    let Engine::Tree { tree, options } = engine else {
        return Ok(Prop1Report {
            status: Status::NotApplicable,
            hypotheses: Vec::new(),
            derived: Vec::new(),
            consistency: None,
            note: Some("needs the lattice engine".into()),
        });
    };
    let hyp_ids = [
        AxiomId::Monotonicity,
        AxiomId::WeakConvexity,
        AxiomId::NoUndercut,
        AxiomId::Tc1,
        AxiomId::Tc2,
    ];
    let hypotheses = hyp_ids
        .iter()
        .map(|a| check_axiom(*a, rule, driver, corpus, engine, tolerance))
        .collect::<Result<Vec<_>>>()?;
    let ok = |i: usize| hypotheses[i].passed();
    if !(ok(0) && ok(1) && ok(2) && (ok(3) || ok(4))) {
        let failed: Vec<String> = hypotheses.iter().filter(|r| !r.passed()).map(|r| r.axiom.clone()).collect();
        return Ok(Prop1Report {
            status: Status::NotApplicable,
            hypotheses,
            derived: Vec::new(),
            consistency: None,
            note: Some(format!("hypotheses fail: {}", failed.join(", "))),
        });
    }
    let consistency = if ok(4) { Consistency::Full } else { Consistency::Weak };
    let ctx = tree_ctx(rule, driver, corpus, tree, options, tolerance)?;
    let derived = derived_checks(&ctx, consistency)?
        .into_iter()
        .map(|(name, o)| finish_named(name, rule, driver, Method::Tree, tolerance, o))
        .collect::<Vec<_>>();
    let status = if derived.iter().all(|r| r.passed()) { Status::Pass } else { Status::Fail };
    Ok(Prop1Report {
        status,
        hypotheses,
        derived,
        consistency: Some(consistency),
        note: None,
    })
}

fn derived_checks(ctx: &TreeCtx<'_>, consistency: Consistency) -> Result<Vec<(&'static str, Outcome)>> {
    let tree = ctx.tree;
    let c = ctx.corpus;
    let diag = |x: &TerminalClaim| ctx.lambda(x, x);
    let all = |v: &Vec<Vec<f64>>| 0..v.len();

    let mut identity = Outcome::default();
    let mut mono = Outcome::default();
    let mut convex = Outcome::default();
    let mut cash = Outcome::default();
    let mut tc = Outcome::default();
    let levels = consistency_levels(tree.steps());
    let n = c.payoffs.len();
    for (i, x) in c.payoffs.iter().enumerate() {
        let r = diag(x)?;
        ctx.compare(&mut identity, Kind::Eq, &r, &ctx.rho(x)?, all(&r), x.label(), x.label(), "");
        for h in &c.addends {
            let a = diag(&x.add(h))?;
            ctx.compare(&mut mono, Kind::Le, &a, &r, all(&a), x.label(), x.label(), &format!("h={}", h.label()));
        }
        let other = &c.payoffs[(i + 1) % n];
        let ro = diag(other)?;
        for a in [0.25, 0.5] {
            let mix = diag(&x.scale(a).add(&other.scale(1.0 - a)))?;
            let chord: Vec<Vec<f64>> = r
                .iter()
                .zip(&ro)
                .map(|(u, v)| u.iter().zip(v).map(|(p, q)| a * p + (1.0 - a) * q).collect())
                .collect();
            ctx.compare(&mut convex, Kind::Le, &mix, &chord, all(&mix), x.label(), other.label(), &format!("alpha={a}"));
        }
        for &t in &levels {
            for tr in &c.translations {
                let ct = ctx.translation(tr, t);
                let s = ctx.split(x)?.plus_at(t, &ct);
                let a = ctx.rule.values(&s, &s)?;
                let mut b = vec![Vec::new(); t + 1];
                b[t] = r[t].iter().zip(&ct).map(|(v, c)| v - c).collect();
                ctx.compare(&mut cash, Kind::Eq, &a, &b, [t], x.label(), x.label(), &format!("c_t={}", tr.label));
            }
            let neg: Vec<f64> = r[t].iter().map(|v| -v).collect();
            let s = Split::zero(&tree).plus_at(t, &neg).snap_like(&ctx.split(x)?);
            let again = ctx.rule.values(&s, &s)?;
            let kind = match consistency {
                Consistency::Full => Kind::Eq,
                Consistency::Weak => Kind::Le,
            };
            ctx.compare(&mut tc, kind, &r, &again, 0..=t, x.label(), x.label(), &format!("t_level={t}"));
        }
    }
    Ok(vec![
        ("derived-identity", identity),
        ("derived-monotonicity", mono),
        ("derived-convexity", convex),
        ("derived-cash", cash),
        ("derived-tc", tc),
    ])
}

// ---------------------------------------------------------------------------

/// Finite set of kernel values assigned independently at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub values: Vec<f64>,
}

impl KernelGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel grid needs finite values"));
        }
        Ok(Self { values })
    }

    /// `{-μ, 0, μ}`.
    pub fn symmetric(mu: f64) -> Self {
        Self {
            values: vec![-mu, 0.0, mu],
        }
    }
}

pub const LEMMA1_MAX_DEPTH: usize = 6;
pub const LEMMA1_MAX_GRID: usize = 5;
pub const LEMMA1_BUDGET: u64 = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub status: Status,
    /// Largest `|max_Q dual value - ρ_t(X)|` over non-terminal nodes.
    pub gap: f64,
    pub kernels: usize,
    /// Kernels with finite penalty and positive branch weights.
    pub admissible: usize,
    /// Kernels attaining `ρ_0(X)`, as `q[k][j]`.
    pub maximizers: Vec<Vec<Vec<f64>>>,
    /// `Z^X` of the BSDE solution, `z[k][j]`.
    pub z: Vec<Vec<f64>>,
    /// Largest Fenchel–Young residual `g*(q) + g(Z) - qZ` of a maximizer at
    /// nodes with `Z ≠ 0`.
    pub selection_residual: f64,
}

/// Enumerates every node-wise kernel with values in `grid` on a small tree
/// and compares the best dual value with `ρ_t(X)` node by node.
pub fn check_lemma1(driver: &DriverRef, x: &TerminalClaim, tree: &TreeModel, grid: &KernelGrid) -> Result<Lemma1Report> {
    let n = tree.steps();
    let g = grid.values.len();
    if n > LEMMA1_MAX_DEPTH || g > LEMMA1_MAX_GRID {
        return Err(Error::RejectedConfiguration(format!(
            "enumeration needs depth ≤ {LEMMA1_MAX_DEPTH} and at most {LEMMA1_MAX_GRID} kernel values, got depth {n} and {g}"
        )));
    }
    let slots = n * (n + 1) / 2;
    let count = (g as u64).checked_pow(slots as u32).unwrap_or(u64::MAX);
    if count > LEMMA1_BUDGET {
        return Err(Error::RejectedConfiguration(format!(
            "enumeration of {count} kernels exceeds the budget of {LEMMA1_BUDGET}"
        )));
    }
    let engine = Engine::tree(*tree);
    let r = rho(driver.as_ref(), x, &engine)?;
    let sol = r.solution();
    let mut best: Vec<Vec<f64>> = (0..n).map(|k| vec![f64::NEG_INFINITY; k + 1]).collect();
    let mut duals: Vec<(Vec<Vec<f64>>, f64)> = Vec::new();
    let mut digits = vec![0usize; slots];
    let mut admissible = 0;
    for _ in 0..count {
        let mut q: Vec<Vec<f64>> = (0..n).map(|k| vec![0.0; k + 1]).collect();
        let mut s = 0;
        for row in q.iter_mut() {
            for v in row.iter_mut() {
                *v = grid.values[digits[s]];
                s += 1;
            }
        }
        // advance the mixed-radix counter
        for d in digits.iter_mut() {
            *d += 1;
            if *d < g {
                break;
            }
            *d = 0;
        }
        let qq = q.clone();
        let kernel = match GirsanovKernel::on_tree(tree, move |k, j| qq[k][j]) {
            Ok(k) => k,
            Err(_) => continue,
        };
        let dv = match dual_value(driver.as_ref(), x, &kernel) {
            Ok(v) => v,
            Err(Error::InadmissibleKernel(_)) => continue,
            Err(e) => return Err(e),
        };
        admissible += 1;
        for (k, row) in best.iter_mut().enumerate() {
            for (j, b) in row.iter_mut().enumerate() {
                *b = b.max(dv.values(k)[j]);
            }
        }
        duals.push((q, dv.value0()));
    }
    let mut gap = 0.0_f64;
    for (k, row) in best.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            gap = gap.max((b - r.values(k)[j]).abs());
        }
    }
    if admissible == 0 {
        gap = f64::INFINITY;
    }
    let maximizers: Vec<Vec<Vec<f64>>> = duals
        .into_iter()
        .filter(|(_, v)| (v - r.value0()).abs() <= 1e-12)
        .map(|(q, _)| q)
        .collect();
    let z: Vec<Vec<f64>> = (0..n).map(|k| sol.z(k).to_vec()).collect();
    let mut residual = 0.0_f64;
    for q in &maximizers {
        for k in 0..n {
            let t = tree.grid().time(k);
            for j in 0..=k {
                let zz = z[k][j];
                if zz.abs() > 1e-12 {
                    let fy = driver.conjugate1(t, q[k][j]) + driver.evaluate1(t, zz) - q[k][j] * zz;
                    residual = residual.max(fy.abs());
                }
            }
        }
    }
    let status = if gap <= 1e-12 && residual <= 1e-12 { Status::Pass } else { Status::Fail };
    Ok(Lemma1Report {
        status,
        gap,
        kernels: count as usize,
        admissible,
        maximizers,
        z,
        selection_residual: residual,
    })
}
