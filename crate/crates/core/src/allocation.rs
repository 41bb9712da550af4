//! Dynamic capital allocation rules `Λ_t(X; Y)` as adapted processes.

use rayon::prelude::*;

use crate::bsde::{BsdeSolution, Carrier, Engine, TerminalClaim};
use crate::catalog::parse_alloc_driver;
use crate::drivers::{alloc_driver_gradient, alloc_driver_subdiff, AllocDriver, AllocDriverRef, Driver, DriverRef};
use crate::error::{invalid, Result};
use crate::quadrature::QuadratureSpec;
use crate::risk::{dual_value, expectation_under_q, kernel_from_subgradient, rho, AdaptedValues, GirsanovKernel};

/// `Λ_t(X; Y)` at every level of a discretization.
#[derive(Debug, Clone)]
pub struct AllocationProcess {
    rule: String,
    audacious: bool,
    x_label: String,
    y_label: String,
    carrier: Carrier,
    values: Vec<Vec<f64>>,
    solution: Option<BsdeSolution>,
    std_error: Option<f64>,
}

impl AllocationProcess {
    pub fn rule(&self) -> &str {
        &self.rule
    }

    /// Audacious rules only promise `Λ_t(Y; Y) ≤ ρ_t(Y)`.
    pub fn is_audacious(&self) -> bool {
        self.audacious
    }

    pub fn x_label(&self) -> &str {
        &self.x_label
    }

    pub fn y_label(&self) -> &str {
        &self.y_label
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn value0(&self) -> f64 {
        self.values[0][0]
    }

    pub fn levels(&self) -> usize {
        self.values.len()
    }

    /// The allocation BSDE solution (`Z^{X,Y}`) for BSDE-induced rules.
    pub fn solution(&self) -> Option<&BsdeSolution> {
        self.solution.as_ref()
    }

    pub fn std_error(&self) -> Option<f64> {
        self.std_error
    }

    fn from_solution(rule: String, x: &TerminalClaim, y: &TerminalClaim, solution: BsdeSolution) -> Self {
        Self {
            rule,
            audacious: false,
            x_label: x.label().to_string(),
            y_label: y.label().to_string(),
            carrier: solution.carrier().clone(),
            values: solution.y_all().to_vec(),
            std_error: solution.meta().std_error,
            solution: Some(solution),
        }
    }

    fn from_values(rule: &str, x: &TerminalClaim, y: &TerminalClaim, carrier: Carrier, v: AdaptedValues) -> Self {
        Self {
            rule: rule.to_string(),
            audacious: false,
            x_label: x.label().to_string(),
            y_label: y.label().to_string(),
            carrier,
            std_error: v.std_error(),
            values: v.all().to_vec(),
            solution: None,
        }
    }
}

fn combine_se(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
        _ => None,
    }
}

/// Solves the base BSDE for `-Y`, then the allocation BSDE for `-X`.
pub fn car_from_alloc_driver(
    alloc: &dyn AllocDriver,
    x: &TerminalClaim,
    y: &TerminalClaim,
    engine: &Engine,
) -> Result<AllocationProcess> {
    let base = rho(alloc.base().as_ref(), y, engine)?.into_solution();
    let sol = engine.solve_alloc(alloc, x, &base)?;
    Ok(AllocationProcess::from_solution(alloc.label(), x, y, sol))
}

/// Subdifferential allocation through its BSDE.
pub fn car_subdifferential(driver: &DriverRef, x: &TerminalClaim, y: &TerminalClaim, engine: &Engine) -> Result<AllocationProcess> {
    let alloc = alloc_driver_subdiff(driver.clone())?;
    car_from_alloc_driver(alloc.as_ref(), x, y, engine)
}

/// Subdifferential allocation as `E_{Q^Y}[-X | F_t] - c_t(Q^Y)`.
pub fn car_subdifferential_dual(
    driver: &dyn Driver,
    x: &TerminalClaim,
    y: &TerminalClaim,
    engine: &Engine,
) -> Result<AllocationProcess> {
    let base = rho(driver, y, engine)?;
    let kernel = kernel_from_subgradient(driver, base.solution())?;
    let v = dual_value(driver, x, &kernel)?;
    Ok(AllocationProcess::from_values("subdiff-dual", x, y, engine.carrier(), v))
}

/// Gradient allocation. No convexity probe: the linear driver is built
/// directly from the selected gradient along `Z^Y`.
pub fn car_gradient(driver: &DriverRef, x: &TerminalClaim, y: &TerminalClaim, engine: &Engine) -> Result<AllocationProcess> {
    let alloc = alloc_driver_gradient(driver.clone());
    car_from_alloc_driver(alloc.as_ref(), x, y, engine)
}

/// `ρ_t(Y) - ρ_t(Y - X)`.
pub fn car_marginal(driver: &dyn Driver, x: &TerminalClaim, y: &TerminalClaim, engine: &Engine) -> Result<AllocationProcess> {
    let ry = rho(driver, y, engine)?;
    let rest = rho(driver, &y.add(&x.neg()), engine)?;
    let n = engine.grid().steps();
    let values = (0..=n)
        .map(|k| ry.values(k).iter().zip(rest.values(k)).map(|(a, b)| a - b).collect())
        .collect();
    let se = combine_se(ry.std_error(), rest.std_error());
    Ok(AllocationProcess::from_values(
        "marginal",
        x,
        y,
        engine.carrier(),
        AdaptedValues::new(values, se),
    ))
}

/// Scenario kernels `Q^{γ_i Y}` at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct ScenarioFamily {
    gammas: Vec<f64>,
    weights: Vec<f64>,
    kernels: Vec<GirsanovKernel>,
}

impl ScenarioFamily {
    pub fn build(driver: &dyn Driver, y: &TerminalClaim, engine: &Engine, quadrature: &QuadratureSpec) -> Result<Self> {
        let gammas = quadrature.nodes().to_vec();
        if gammas.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(invalid("quadrature nodes must lie in (0, 1]"));
        }
        let kernels = gammas
            .par_iter()
            .map(|&g| {
                let r = rho(driver, &y.scale(g), engine)?;
                kernel_from_subgradient(driver, r.solution())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gammas,
            weights: quadrature.weights().to_vec(),
            kernels,
        })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn kernels(&self) -> &[GirsanovKernel] {
        &self.kernels
    }

    /// Averaged density `L̃(T; k) = Σ w_i L^{γ_i Y}(T; k)` on every path.
    pub fn averaged_densities(&self, k: usize) -> Result<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        for (w, kern) in self.weights.iter().zip(&self.kernels) {
            let l = kern.densities(k)?;
            match acc.as_mut() {
                None => acc = Some(l.into_iter().map(|v| w * v).collect()),
                Some(a) => a.iter_mut().zip(l).for_each(|(a, v)| *a += w * v),
            }
        }
        acc.ok_or_else(|| invalid("empty quadrature"))
    }

    /// Averaged density along one lattice path leaving `(k0, j0)`.
    pub fn averaged_path_density(&self, k0: usize, j0: usize, moves: &[bool]) -> Result<f64> {
        let mut s = 0.0;
        for (w, kern) in self.weights.iter().zip(&self.kernels) {
            s += w * kern.path_density(k0, j0, moves)?;
        }
        Ok(s)
    }

    fn integrate<F>(&self, f: F) -> Result<AdaptedValues>
    where
        F: Fn(&GirsanovKernel) -> Result<AdaptedValues> + Sync,
    {
        let parts = self.kernels.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        let mut values: Vec<Vec<f64>> = parts[0].all().iter().map(|v| vec![0.0; v.len()]).collect();
        let mut se: Option<f64> = Some(0.0);
        for (w, p) in self.weights.iter().zip(&parts) {
            for (acc, v) in values.iter_mut().zip(p.all()) {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
            }
            // errors at different nodes share paths, so add them linearly
            se = match (se, p.std_error()) {
                (Some(a), Some(b)) => Some(a + w * b),
                _ => None,
            };
        }
        Ok(AdaptedValues::new(values, se))
    }
}

/// `∫₀¹ E_{Q^{γY}}[-X | F_t] dγ`.
pub fn car_aumann_shapley(
    driver: &dyn Driver,
    x: &TerminalClaim,
    y: &TerminalClaim,
    engine: &Engine,
    quadrature: &QuadratureSpec,
) -> Result<AllocationProcess> {
    let family = ScenarioFamily::build(driver, y, engine, quadrature)?;
    let v = family.integrate(|k| expectation_under_q(x, k))?;
    Ok(AllocationProcess::from_values("as", x, y, engine.carrier(), v))
}

/// `∫₀¹ Λ^sub_t(X; γY) dγ`, an audacious rule.
pub fn car_penalized_as(
    driver: &dyn Driver,
    x: &TerminalClaim,
    y: &TerminalClaim,
    engine: &Engine,
    quadrature: &QuadratureSpec,
) -> Result<AllocationProcess> {
    let family = ScenarioFamily::build(driver, y, engine, quadrature)?;
    let v = family.integrate(|k| dual_value(driver, x, k))?;
    let mut p = AllocationProcess::from_values("pas", x, y, engine.carrier(), v);
    p.audacious = true;
    Ok(p)
}

/// A named allocation rule.
#[derive(Debug, Clone)]
pub enum Rule {
    Gradient,
    Subdifferential,
    Marginal,
    AumannShapley(QuadratureSpec),
    PenalizedAs(QuadratureSpec),
    Custom(AllocDriverRef),
}

impl Rule {
    /// `grad`, `subdiff`, `marginal`, `as`, `pas` or `custom:<alloc-driver>`.
    pub fn parse(spec: &str, base: &DriverRef, quadrature: &QuadratureSpec) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "grad" => Ok(Rule::Gradient),
            "subdiff" => Ok(Rule::Subdifferential),
            "marginal" => Ok(Rule::Marginal),
            "as" => Ok(Rule::AumannShapley(quadrature.clone())),
            "pas" => Ok(Rule::PenalizedAs(quadrature.clone())),
            _ => match spec.strip_prefix("custom:") {
                Some(inner) => Ok(Rule::Custom(parse_alloc_driver(inner, base)?)),
                None => Err(invalid(format!("unknown allocation rule '{spec}'"))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Rule::Gradient => "grad".into(),
            Rule::Subdifferential => "subdiff".into(),
            Rule::Marginal => "marginal".into(),
            Rule::AumannShapley(_) => "as".into(),
            Rule::PenalizedAs(_) => "pas".into(),
            Rule::Custom(a) => format!("custom:{}", a.label()),
        }
    }

    pub fn is_audacious(&self) -> bool {
        matches!(self, Rule::PenalizedAs(_))
    }

    pub fn allocate(&self, driver: &DriverRef, x: &TerminalClaim, y: &TerminalClaim, engine: &Engine) -> Result<AllocationProcess> {
        let mut p = match self {
            Rule::Gradient => car_gradient(driver, x, y, engine)?,
            Rule::Subdifferential => car_subdifferential(driver, x, y, engine)?,
            Rule::Marginal => car_marginal(driver.as_ref(), x, y, engine)?,
            Rule::AumannShapley(q) => car_aumann_shapley(driver.as_ref(), x, y, engine, q)?,
            Rule::PenalizedAs(q) => car_penalized_as(driver.as_ref(), x, y, engine, q)?,
            Rule::Custom(a) => {
                if a.base().label() != driver.label() {
                    return Err(invalid(format!(
                        "allocation driver is built over {}, the risk driver is {}",
                        a.base().label(),
                        driver.label()
                    )));
                }
                car_from_alloc_driver(a.as_ref(), x, y, engine)?
            }
        };
        p.rule = self.name();
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::*;
    use crate::grid::{build_grid, build_tree, sample_paths, TreeModel};
    use crate::oracles;
    use std::sync::Arc;

    fn tree(n: usize) -> TreeModel {
        build_tree(build_grid(1.0, n).unwrap())
    }

    fn engine(n: usize) -> Engine {
        Engine::tree(tree(n))
    }

    fn w() -> TerminalClaim {
        TerminalClaim::terminal_state()
    }

    fn call() -> TerminalClaim {
        TerminalClaim::from_fn("max(W,0)", |s| s[0].max(0.0))
    }

    fn sin_w() -> TerminalClaim {
        TerminalClaim::from_fn("sin(W)", |s| s[0].sin())
    }

    fn max_gap(a: &AllocationProcess, b: impl Fn(usize) -> Vec<f64>) -> f64 {
        (0..a.levels())
            .flat_map(|k| {
                let bk = b(k);
                a.values(k).iter().zip(bk).map(|(u, v)| (u - v).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_is_the_risk_measure() {
        let e = engine(100);
        let norm = driver_scaled_norm(0.5).unwrap();
        let ent = driver_entropic(1.0).unwrap();
        let y = call().add(&sin_w().scale(0.3));
        let allocs: Vec<AllocDriverRef> = vec![
            alloc_driver_subdiff(norm.clone()).unwrap(),
            alloc_driver_gradient(norm.clone()),
            alloc_driver_marginal(norm.clone()).unwrap(),
            alloc_driver_subdiff(ent.clone()).unwrap(),
            alloc_driver_marginal(ent.clone()).unwrap(),
            alloc_driver_entropic_1(1.0, 2.0).unwrap(),
            alloc_driver_entropic_2(1.0, 2.0).unwrap(),
        ];
        for a in allocs {
            let l = car_from_alloc_driver(a.as_ref(), &y, &y, &e).unwrap();
            let r = rho(a.base().as_ref(), &y, &e).unwrap();
            assert!(max_gap(&l, |k| r.values(k).to_vec()) <= 1e-10, "{}", a.label());
        }
    }

    #[test]
    fn subdiff_does_not_undercut() {
        let e = engine(200);
        let norm = driver_scaled_norm(0.5).unwrap();
        let l = car_subdifferential(&norm, &call(), &w(), &e).unwrap();
        let r = rho(norm.as_ref(), &call(), &e).unwrap();
        assert!(l.value0() <= r.value0() + 1e-12);
    }

    #[test]
    fn ent1_matches_constant_kernel_expectation() {
        let tr = tree(100);
        let e = Engine::tree(tr);
        let x = w().scale(0.5);
        let y = call();
        let a = alloc_driver_entropic_1(1.0, 2.0).unwrap();
        let l = car_from_alloc_driver(a.as_ref(), &x, &y, &e).unwrap();
        let r = rho(a.base().as_ref(), &y, &e).unwrap();
        let q = GirsanovKernel::constant(Carrier::Tree(tr), &[2.0]).unwrap();
        let ex = expectation_under_q(&y.add(&x.neg()), &q).unwrap();
        let gap = max_gap(&l, |k| {
            r.values(k).iter().zip(ex.values(k)).map(|(a, b)| a - b).collect()
        });
        assert!(gap <= 1e-10, "{gap}");
    }

    #[test]
    fn subdiff_routes_agree() {
        let e = engine(100);
        let ent = driver_entropic(1.0).unwrap();
        let x = w().scale(0.5);
        let y = w();
        let a = car_subdifferential(&ent, &x, &y, &e).unwrap();
        let b = car_subdifferential_dual(ent.as_ref(), &x, &y, &e).unwrap();
        assert!(max_gap(&a, |k| b.values(k).to_vec()) <= 1e-9);
        // Λ^sub = ρ(Y) - E_{Q^Y}[-(Y - X)]
        let r = rho(ent.as_ref(), &y, &e).unwrap();
        let kern = kernel_from_subgradient(ent.as_ref(), r.solution()).unwrap();
        let ex = expectation_under_q(&y.add(&x.neg()), &kern).unwrap();
        let gap = max_gap(&a, |k| r.values(k).iter().zip(ex.values(k)).map(|(a, b)| a - b).collect());
        assert!(gap <= 1e-9, "{gap}");
    }

    #[test]
    fn coherent_subdiff_of_zero_is_zero() {
        let norm = driver_scaled_norm(0.5).unwrap();
        let l = car_subdifferential(&norm, &TerminalClaim::zero(), &call(), &engine(50)).unwrap();
        assert!(max_gap(&l, |k| vec![0.0; k + 1]) == 0.0);
    }

    #[test]
    fn gradient_examples() {
        let e = engine(200);
        let ent = driver_entropic(1.0).unwrap();
        let tr = tree(200);
        let g = car_gradient(&ent, &call(), &w(), &e).unwrap();
        for t in [0, 100] {
            let o = oracles::entropic_gradient_car(1.0, &call(), &w(), &tr, t).unwrap();
            let gap = g.values(t).iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-2, "t={t}: {gap}");
        }
        let norm = driver_scaled_norm(0.5).unwrap();
        let y = call().add(&sin_w().scale(0.3));
        let gn = car_gradient(&norm, &y, &y, &e).unwrap();
        let rn = rho(norm.as_ref(), &y, &e).unwrap();
        assert!(max_gap(&gn, |k| rn.values(k).to_vec()) <= 1e-10);
        let ge = car_gradient(&ent, &y, &y, &e).unwrap();
        let re = rho(ent.as_ref(), &y, &e).unwrap();
        for k in 0..=200 {
            for (a, b) in ge.values(k).iter().zip(re.values(k)) {
                assert!(*a >= b - 1e-12);
            }
        }
    }

    #[test]
    fn gradient_on_paths_tracks_closed_form() {
        let paths = Arc::new(sample_paths(build_grid(1.0, 20).unwrap(), 1, 20_000, 11).unwrap());
        let e = Engine::lsmc(paths.clone());
        let ent = driver_entropic(1.0).unwrap();
        let g = car_gradient(&ent, &call(), &w(), &e).unwrap();
        let (o, se) = oracles::entropic_gradient_car_on_paths(1.0, &call(), &w(), &paths).unwrap();
        assert!((g.value0() - o).abs() < 5.0 * se.max(g.std_error().unwrap()), "{} vs {o}", g.value0());
    }

    #[test]
    fn marginal_examples() {
        let e = engine(80);
        let norm = driver_scaled_norm(0.5).unwrap();
        let y = call();
        let x = sin_w();
        let same = car_marginal(norm.as_ref(), &y, &y, &e).unwrap();
        let r = rho(norm.as_ref(), &y, &e).unwrap();
        assert!(max_gap(&same, |k| r.values(k).to_vec()) <= 1e-12);
        let zero = car_marginal(norm.as_ref(), &TerminalClaim::zero(), &y, &e).unwrap();
        assert!(max_gap(&zero, |k| vec![0.0; k + 1]) <= 1e-12);
        let neutral = car_marginal(driver_zero().as_ref(), &x, &y, &e).unwrap();
        let ez = rho(driver_zero().as_ref(), &x, &e).unwrap();
        assert!(max_gap(&neutral, |k| ez.values(k).to_vec()) <= 1e-12);
        let bsde = car_from_alloc_driver(alloc_driver_marginal(norm.clone()).unwrap().as_ref(), &x, &y, &e).unwrap();
        let m = car_marginal(norm.as_ref(), &x, &y, &e).unwrap();
        assert!(max_gap(&bsde, |k| m.values(k).to_vec()) <= 1e-9);
    }

    #[test]
    fn aumann_shapley_examples() {
        let e = engine(100);
        let q = QuadratureSpec::default();
        let norm = driver_scaled_norm(0.5).unwrap();
        let y = call().add(&sin_w().scale(0.3));
        let x = w().scale(0.5);
        let a = car_aumann_shapley(norm.as_ref(), &x, &y, &e, &q).unwrap();
        let s = car_subdifferential(&norm, &x, &y, &e).unwrap();
        assert!(max_gap(&a, |k| s.values(k).to_vec()) <= 1e-10);
        let ent = driver_entropic(1.0).unwrap();
        let yy = car_aumann_shapley(ent.as_ref(), &y, &y, &e, &q).unwrap();
        let r = rho(ent.as_ref(), &y, &e).unwrap();
        assert!((yy.value0() - r.value0()).abs() <= 1e-4);
        let zero = car_aumann_shapley(ent.as_ref(), &TerminalClaim::zero(), &y, &e, &q).unwrap();
        assert!(max_gap(&zero, |k| vec![0.0; k + 1]) <= 1e-14);
    }

    #[test]
    fn penalized_as_examples() {
        let e = engine(100);
        let q = QuadratureSpec::gauss_legendre(16).unwrap();
        let norm = driver_scaled_norm(0.5).unwrap();
        let ent = driver_entropic(1.0).unwrap();
        let y = call();
        let x = sin_w();
        let p = car_penalized_as(norm.as_ref(), &x, &y, &e, &q).unwrap();
        let a = car_aumann_shapley(norm.as_ref(), &x, &y, &e, &q).unwrap();
        assert!(p.is_audacious() && !a.is_audacious());
        assert!(max_gap(&p, |k| a.values(k).to_vec()) <= 1e-12);
        let pe = car_penalized_as(ent.as_ref(), &x, &y, &e, &q).unwrap();
        let rx = rho(ent.as_ref(), &x, &e).unwrap();
        let ry = rho(ent.as_ref(), &y, &e).unwrap();
        let diag = car_penalized_as(ent.as_ref(), &y, &y, &e, &q).unwrap();
        for k in 0..=100 {
            for (a, b) in pe.values(k).iter().zip(rx.values(k)) {
                assert!(*a <= b + 1e-9);
            }
            for (a, b) in diag.values(k).iter().zip(ry.values(k)) {
                assert!(*a <= b + 1e-9);
            }
        }
    }

    #[test]
    fn linear_driver_collapses_rules() {
        let e = engine(60);
        let lin = driver_linear(vec![0.7]).unwrap();
        let (x, y) = (sin_w(), call());
        let m = car_marginal(lin.as_ref(), &x, &y, &e).unwrap();
        let s = car_subdifferential(&lin, &x, &y, &e).unwrap();
        let g = car_gradient(&lin, &x, &y, &e).unwrap();
        assert!(max_gap(&m, |k| s.values(k).to_vec()) <= 1e-10);
        assert!(max_gap(&m, |k| g.values(k).to_vec()) <= 1e-10);
    }

    #[test]
    fn averaged_density_is_a_density() {
        let paths = Arc::new(sample_paths(build_grid(1.0, 10).unwrap(), 1, 4000, 5).unwrap());
        let e = Engine::lsmc(paths);
        let fam = ScenarioFamily::build(
            driver_entropic(1.0).unwrap().as_ref(),
            &call(),
            &e,
            &QuadratureSpec::gauss_legendre(4).unwrap(),
        )
        .unwrap();
        let l = fam.averaged_densities(0).unwrap();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        let tr_fam = ScenarioFamily::build(
            driver_entropic(1.0).unwrap().as_ref(),
            &call(),
            &engine(3),
            &QuadratureSpec::gauss_legendre(4).unwrap(),
        )
        .unwrap();
        let mut total = 0.0;
        for bits in 0..8u32 {
            let moves: Vec<bool> = (0..3).map(|i| bits >> i & 1 == 1).collect();
            total += tr_fam.averaged_path_density(0, 0, &moves).unwrap() / 8.0;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rules_parse_and_dispatch() {
        let q = QuadratureSpec::gauss_legendre(4).unwrap();
        let ent = driver_entropic(1.0).unwrap();
        for s in ["grad", "subdiff", "marginal", "as", "pas", "custom:ent1:c=2"] {
            let r = Rule::parse(s, &ent, &q).unwrap();
            assert_eq!(r.is_audacious(), s == "pas");
            let p = r.allocate(&ent, &call(), &w(), &engine(30)).unwrap();
            assert!(p.value0().is_finite());
            assert_eq!(p.rule(), r.name());
        }
        assert!(Rule::parse("shapley", &ent, &q).is_err());
        let norm = driver_scaled_norm(0.5).unwrap();
        let custom = Rule::parse("custom:subdiff", &norm, &q).unwrap();
        assert!(custom.allocate(&ent, &call(), &w(), &engine(30)).is_err());
    }
}
