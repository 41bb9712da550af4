//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use gcar_core::axioms::{KernelGrid, LATTICE_TOL};
use gcar_core::oracles::{entropic_gradient_car, entropic_lambda1, entropic_lambda2, entropic_rho, worst_case_drift_rho};
use gcar_core::{
    alloc_driver_entropic_1, alloc_driver_entropic_2, build_grid, build_tree, car_aumann_shapley, car_from_alloc_driver,
    car_gradient, car_subdifferential, car_subdifferential_dual, check_axiom, check_axioms, check_lemma1,
    check_prop1_direction_a, driver_entropic, driver_scaled_norm, parse_payoff, rho, sample_paths, AxiomId, DriverRef,
    Engine, PositionCorpus, QuadratureSpec, Result, Rule, TerminalClaim, TreeModel,
};

const CORPUS_SEED: u64 = 2024;
const PATH_SEED: u64 = 7;

struct Verdict {
    pass: bool,
    summary: String,
    /// Full numeric record, compared byte-for-byte by the determinism check.
    record: String,
}

fn claim(text: &str) -> TerminalClaim {
    TerminalClaim::from_expr(parse_payoff(text, 1).expect("payoff"))
}

fn tree(n: usize) -> TreeModel {
    build_tree(build_grid(1.0, n).expect("grid"))
}

fn ent() -> DriverRef {
    driver_entropic(1.0).expect("entropic")
}

fn norm() -> DriverRef {
    driver_scaled_norm(0.5).expect("norm")
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn entropic_value() -> Result<Verdict> {
    let x = claim("W");
    let t = tree(200);
    let tree_v = rho(ent().as_ref(), &x, &Engine::tree(t))?.value0();
    let oracle = entropic_rho(1.0, &x, &t, 0)?[0];
    let paths = sample_paths(build_grid(1.0, 50)?, 1, 100_000, PATH_SEED)?;
    let r = rho(ent().as_ref(), &x, &Engine::lsmc(Arc::new(paths)))?;
    let lsmc_v = r.value0();
    let tree_err = (tree_v - 0.5).abs();
    let rel = (lsmc_v - 0.5).abs() / 0.5;
    Ok(Verdict {
        pass: tree_err <= 5e-3 && rel <= 0.02,
        summary: format!("tree {tree_v:.6} (err {tree_err:.1e}, lattice oracle {oracle:.6}), lsmc {lsmc_v:.6} (rel {rel:.2e})"),
        record: format!("{tree_v:e} {oracle:e} {lsmc_v:e} {:e}", r.std_error().unwrap_or(f64::NAN)),
    })
}

fn coherent_value() -> Result<Verdict> {
    let x = claim("W");
    let t = tree(200);
    let v = rho(norm().as_ref(), &x, &Engine::tree(t))?.value0();
    let oracle = worst_case_drift_rho(0.5, &x, &t, 0)?[0];
    let err = (v - 0.5).abs();
    Ok(Verdict {
        pass: err <= 2e-2,
        summary: format!("tree {v:.6} (err {err:.1e}), worst-case drift on lattice {oracle:.6}"),
        record: format!("{v:e} {oracle:e}"),
    })
}

fn example_suite() -> Result<Verdict> {
    let n = 200;
    let t = tree(n);
    let e = Engine::tree(t);
    let x = claim("max(W,0)");
    let y = claim("W");
    let grad = car_gradient(&ent(), &x, &y, &e)?;
    let l1 = car_from_alloc_driver(alloc_driver_entropic_1(1.0, 2.0)?.as_ref(), &x, &y, &e)?;
    let l2 = car_from_alloc_driver(alloc_driver_entropic_2(1.0, 2.0)?.as_ref(), &x, &y, &e)?;
    let mut worst = [0.0f64; 3];
    let mut record = String::new();
    for k in [0, n / 2] {
        let refs = [
            entropic_gradient_car(1.0, &x, &y, &t, k)?,
            entropic_lambda1(1.0, 2.0, &x, &y, &t, k)?,
            entropic_lambda2(1.0, 2.0, &x, &y, &t, k)?,
        ];
        for (i, (sol, r)) in [&grad, &l1, &l2].iter().zip(&refs).enumerate() {
            let gap = max_gap(sol.values(k), r);
            worst[i] = worst[i].max(gap);
            let _ = write!(record, "{k}:{i}:{gap:e}:{:e} ", sol.values(k)[0]);
        }
    }
    Ok(Verdict {
        pass: worst.iter().all(|g| *g <= 1e-2),
        summary: format!(
            "max node error grad {:.1e}, lambda1 {:.1e}, lambda2 {:.1e} (t=0 values {:.6}, {:.6}, {:.6})",
            worst[0],
            worst[1],
            worst[2],
            grad.value0(),
            l1.value0(),
            l2.value0()
        ),
        record,
    })
}

fn subdiff_routes() -> Result<Verdict> {
    let e = Engine::tree(tree(100));
    let corpus = PositionCorpus::standard(CORPUS_SEED);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for d in [ent(), norm()] {
        for y in &corpus.payoffs {
            for x in &corpus.payoffs {
                let a = car_subdifferential(&d, x, y, &e)?;
                let b = car_subdifferential_dual(d.as_ref(), x, y, &e)?;
                for k in 0..a.levels() {
                    worst = worst.max(max_gap(a.values(k), b.values(k)));
                }
                pairs += 1;
            }
        }
    }
    Ok(Verdict {
        pass: worst <= 1e-9,
        summary: format!("{pairs} (driver, X, Y) cases, max node gap {worst:.1e}"),
        record: format!("{worst:e}"),
    })
}

fn coherent_axioms() -> Result<Verdict> {
    let e = Engine::tree(tree(200));
    let corpus = PositionCorpus::standard(CORPUS_SEED);
    let ids = [
        AxiomId::NoUndercut,
        AxiomId::Monotonicity,
        AxiomId::Riskless,
        AxiomId::Cash1,
        AxiomId::Cash,
        AxiomId::SubAllocation,
        AxiomId::WeakConvexity,
        AxiomId::Tc1,
        AxiomId::Tc2,
    ];
    let mut reports = check_axioms(&ids, &Rule::Subdifferential, &norm(), &corpus, &e, LATTICE_TOL)?;
    reports.push(check_axiom(AxiomId::FullAllocation, &Rule::Subdifferential, &norm(), &corpus, &e, 1e-10)?);
    let pass = reports.iter().all(|r| r.passed());
    let worst = reports
        .iter()
        .map(|r| format!("{} {:.0e}", r.axiom, r.violation))
        .collect::<Vec<_>>()
        .join(", ");
    let record = reports.iter().map(|r| r.to_record()).collect::<Vec<_>>().join("\n");
    Ok(Verdict {
        pass,
        summary: format!("violations: {worst}"),
        record,
    })
}

fn known_failures() -> Result<Verdict> {
    let e = Engine::tree(tree(200));
    let diag = PositionCorpus::standard(CORPUS_SEED).diagonal_pairs_only();
    let nu = check_axiom(AxiomId::NoUndercut, &Rule::Gradient, &ent(), &diag, &e, LATTICE_TOL)?;
    let nu_ok = nu.failed() && nu.witness.as_ref().is_some_and(|w| w.x == w.y);

    let corpus = PositionCorpus::standard(CORPUS_SEED);
    let pas = Rule::PenalizedAs(QuadratureSpec::gauss_legendre(32)?);
    let id = check_axiom(AxiomId::CarIdentity, &pas, &ent(), &corpus, &e, LATTICE_TOL)?;
    let id_ok = id.failed() && id.witness.as_ref().is_some_and(|w| w.lhs < w.rhs);

    let describe = |r: &gcar_core::AxiomReport| match &r.witness {
        Some(w) => format!(
            "{} {} (X={}, Y={}, lhs {:.4}, rhs {:.4})",
            r.axiom,
            r.status.name(),
            w.x,
            w.y,
            w.lhs,
            w.rhs
        ),
        None => format!("{} {}", r.axiom, r.status.name()),
    };
    Ok(Verdict {
        pass: nu_ok && id_ok,
        summary: format!("grad/entropic {}; penalized AS/entropic {}", describe(&nu), describe(&id)),
        record: format!("{}\n{}", nu.to_record(), id.to_record()),
    })
}

fn lemma1() -> Result<Verdict> {
    let mu = 0.5;
    let t = tree(3);
    let grid = KernelGrid::symmetric(mu);
    let mut gap = 0.0f64;
    let mut sel = 0.0f64;
    let mut maximizers = 0;
    let mut all_pass = true;
    let mut record = String::new();
    for x in PositionCorpus::standard(CORPUS_SEED).payoffs {
        let text = x.label().to_string();
        let r = check_lemma1(&norm(), &x, &t, &grid)?;
        all_pass &= r.status.name() == "pass" && !r.maximizers.is_empty();
        gap = gap.max(r.gap);
        for q in &r.maximizers {
            for (k, zk) in r.z.iter().enumerate() {
                for (j, z) in zk.iter().enumerate() {
                    if z.abs() > 1e-12 {
                        sel = sel.max((q[k][j] - mu * z.signum()).abs());
                    }
                }
            }
        }
        maximizers += r.maximizers.len();
        let _ = write!(record, "{text}:{:e}:{}:{} ", r.gap, r.kernels, r.maximizers.len());
    }
    Ok(Verdict {
        pass: all_pass && gap <= 1e-12 && sel <= 1e-12,
        summary: format!("max gap {gap:.1e}, {maximizers} maximizers, max |q - mu sign Z| {sel:.1e}"),
        record,
    })
}

fn prop1_round_trip() -> Result<Verdict> {
    let e = Engine::tree(tree(100));
    let corpus = PositionCorpus::standard(CORPUS_SEED);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut record = String::new();
    for d in [ent(), norm()] {
        let r = check_prop1_direction_a(&Rule::Subdifferential, &d, &corpus, &e, 1e-9)?;
        let get = |name: &str| r.derived.iter().find(|x| x.axiom == name);
        let (Some(id), Some(tc)) = (get("derived-identity"), get("derived-tc")) else {
            pass = false;
            parts.push(format!("{}: {}", d.label(), r.note.clone().unwrap_or_default()));
            continue;
        };
        let full = r.consistency == Some(gcar_core::axioms::Consistency::Full);
        pass &= id.passed() && tc.passed() && full;
        parts.push(format!(
            "{}: identity {:.0e}, tc {:.0e} ({})",
            d.label(),
            id.violation,
            tc.violation,
            if full { "full" } else { "weak" }
        ));
        for x in r.hypotheses.iter().chain(&r.derived) {
            record.push_str(&x.to_record());
            record.push('\n');
        }
    }
    Ok(Verdict {
        pass,
        summary: parts.join("; "),
        record,
    })
}

fn aumann_shapley() -> Result<Verdict> {
    let e = Engine::tree(tree(100));
    let corpus = PositionCorpus::standard(CORPUS_SEED);
    let quad = QuadratureSpec::gauss_legendre(32)?;
    let n = norm();
    let mut coherent = 0.0f64;
    for (x, y) in corpus.pairs() {
        let a = car_aumann_shapley(n.as_ref(), &x, &y, &e, &quad)?;
        let b = car_subdifferential(&n, &x, &y, &e)?;
        for k in 0..a.levels() {
            coherent = coherent.max(max_gap(a.values(k), b.values(k)));
        }
    }
    let d = ent();
    let mut identity = 0.0f64;
    for y in corpus.payoffs.iter().chain(&corpus.portfolios()) {
        let a = car_aumann_shapley(d.as_ref(), y, y, &e, &quad)?;
        let r = rho(d.as_ref(), y, &e)?;
        for k in 0..a.levels() {
            identity = identity.max(max_gap(a.values(k), r.values(k)));
        }
    }
    Ok(Verdict {
        pass: coherent <= 1e-10 && identity <= 1e-4,
        summary: format!("coherent AS vs subdiff {coherent:.1e}; entropic AS(Y;Y) vs rho(Y) {identity:.1e}"),
        record: format!("{coherent:e} {identity:e}"),
    })
}

type Check = fn() -> Result<Verdict>;

const CHECKS: [(&str, Check); 9] = [
    ("entropic value", entropic_value),
    ("coherent value", coherent_value),
    ("entropic allocation closed forms", example_suite),
    ("subdifferential routes agree", subdiff_routes),
    ("coherent axiom suite", coherent_axioms),
    ("known failures reproduced", known_failures),
    ("dual representation by enumeration", lemma1),
    ("derived risk measure round trip", prop1_round_trip),
    ("aumann-shapley", aumann_shapley),
];

fn run_all(print: bool) -> (Vec<String>, bool) {
    let mut records = Vec::new();
    let mut ok = true;
    for (i, (name, f)) in CHECKS.iter().enumerate() {
        let start = Instant::now();
        let v = f().unwrap_or_else(|e| Verdict {
            pass: false,
            summary: format!("error: {e}"),
            record: format!("error: {e}"),
        });
        ok &= v.pass;
        if print {
            println!(
                "{} {:>2} {name}: {} [{:.1}s]",
                if v.pass { "PASS" } else { "FAIL" },
                i + 1,
                v.summary,
                start.elapsed().as_secs_f64()
            );
        }
        records.push(v.record);
    }
    (records, ok)
}

fn main() {
    let (first, mut ok) = run_all(true);
    let start = Instant::now();
    let (second, _) = run_all(false);
    let same = first == second;
    let differing: Vec<usize> = first.iter().zip(&second).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| i + 1).collect();
    println!(
        "{} 10 determinism: {} [{:.1}s]",
        if same { "PASS" } else { "FAIL" },
        if same {
            "second run reproduced every record byte for byte".to_string()
        } else {
            format!("records differ for criteria {differing:?}")
        },
        start.elapsed().as_secs_f64()
    );
    ok &= same;
    if !ok {
        std::process::exit(1);
    }
}
