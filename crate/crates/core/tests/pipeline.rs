use std::sync::Arc;

use gcar_core::axioms::{check_prop3_condition, Prop3Item, ProbeSpec, LATTICE_TOL};
use gcar_core::oracles::entropic_gradient_car_on_paths;
use gcar_core::{
    alloc_driver_gradient, alloc_driver_subdiff, build_grid, build_tree, car_gradient, check_axioms,
    check_prop3_implication, driver_entropic, driver_scaled_norm, driver_zero, parse_payoff, render_reports, rho,
    sample_paths, AxiomId, Engine, PositionCorpus, Rule, TerminalClaim,
};

fn claim(text: &str) -> TerminalClaim {
    TerminalClaim::from_expr(parse_payoff(text, 1).unwrap())
}

fn tree(n: usize) -> Engine {
    Engine::tree(build_tree(build_grid(1.0, n).unwrap()))
}

fn lsmc(n: usize, m: usize, seed: u64) -> Engine {
    Engine::lsmc(Arc::new(sample_paths(build_grid(1.0, n).unwrap(), 1, m, seed).unwrap()))
}

#[test]
fn tree_and_lsmc_agree_for_lipschitz_drivers() {
    let paths = lsmc(50, 20_000, 1);
    let lattice = tree(50);
    let xs = [
        claim("W"),
        claim("max(W,0)"),
        claim("max(-0.3-W,0)"),
        claim("exp(-(W^2))"),
        TerminalClaim::from_fn("sin(W)", |s| s[0].sin()),
    ];
    for d in [driver_zero(), driver_scaled_norm(0.5).unwrap()] {
        for x in &xs {
            let a = rho(d.as_ref(), x, &lattice).unwrap().value0();
            let r = rho(d.as_ref(), x, &paths).unwrap();
            let se = r.std_error().unwrap();
            assert!(
                (a - r.value0()).abs() <= 3.0 * se,
                "{} {}: tree {a}, lsmc {} ± {se}",
                d.label(),
                x.label(),
                r.value0()
            );
        }
    }
}

#[test]
fn gradient_allocation_on_paths_matches_reweighting() {
    let d = driver_entropic(1.0).unwrap();
    let (x, y) = (claim("max(W,0)"), claim("W"));
    let e = lsmc(50, 40_000, 5);
    let a = car_gradient(&d, &x, &y, &e).unwrap();
    let Engine::Lsmc { paths, .. } = &e else { unreachable!() };
    let (est, se) = entropic_gradient_car_on_paths(1.0, &x, &y, paths).unwrap();
    let tol = 3.0 * (se.powi(2) + a.std_error().unwrap().powi(2)).sqrt();
    assert!((a.value0() - est).abs() <= tol, "{} vs {est} (tol {tol})", a.value0());
}

#[test]
fn prop3_conditions_predict_axioms() {
    let corpus = PositionCorpus::standard(9);
    let e = tree(64);
    let ent = driver_entropic(1.0).unwrap();
    let norm = driver_scaled_norm(0.5).unwrap();

    let grad = alloc_driver_gradient(ent.clone());
    assert!(!check_prop3_condition(Prop3Item::Iii, grad.as_ref(), &ProbeSpec::default()).holds);
    for item in [Prop3Item::Ii, Prop3Item::V, Prop3Item::Vi] {
        let r = check_prop3_implication(item, &grad, &corpus, &e, LATTICE_TOL).unwrap();
        assert!(r.condition.holds && r.axiom.passed(), "{}", r.axiom.to_record());
    }

    let sub = alloc_driver_subdiff(norm).unwrap();
    for item in Prop3Item::ALL {
        let r = check_prop3_implication(item, &sub, &corpus, &e, LATTICE_TOL).unwrap();
        assert!(r.consistent, "{}", r.axiom.to_record());
        assert!(r.condition.holds, "{:?}", r.condition.witness);
    }
}

#[test]
fn reports_are_reproducible_and_ordered() {
    let corpus = PositionCorpus::standard(3);
    let e = tree(32);
    let d = driver_scaled_norm(0.5).unwrap();
    let ids = [AxiomId::CarIdentity, AxiomId::Monotonicity, AxiomId::Tc2];
    let a = render_reports(&check_axioms(&ids, &Rule::Marginal, &d, &corpus, &e, LATTICE_TOL).unwrap());
    let b = render_reports(&check_axioms(&ids, &Rule::Marginal, &d, &corpus, &e, LATTICE_TOL).unwrap());
    assert_eq!(a, b);
    let order: Vec<&str> = a.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(order, ["axiom=car-identity", "axiom=monotonicity", "axiom=tc2"]);
}
