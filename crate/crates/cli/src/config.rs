//! Scenario configuration: a sectioned `key = value` file. Comments start
//! with `#` or `;` at the beginning of a line.
//!
//! ```text
//! [grid]
//! horizon = 1
//! steps = 200
//!
//! [engine]
//! method = tree
//!
//! [risk]
//! driver = entropic:lambda=1
//! rules = grad, subdiff
//!
//! [position:X]
//! payoff = W
//!
//! [report]
//! times = 0, 0.5
//! pairs = X;X
//! axioms = no-undercut
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use gcar_core::{parse_driver, AxiomId, BasisSpec, DriverRef, QuadratureSpec, Rule, TerminalClaim};
use ini::Ini;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Tree,
    Lsmc,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub paths: usize,
    pub seed: u64,
    pub basis: BasisSpec,
    pub step_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// Configured positions and decompositions, standard translations and addends.
    Positions,
    /// The built-in seeded corpus.
    Standard,
}

#[derive(Debug, Clone)]
pub struct Position {
    pub name: String,
    pub claim: TerminalClaim,
}

#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    pub name: String,
    pub pieces: Vec<String>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub horizon: f64,
    pub steps: usize,
    pub engine: EngineConfig,
    pub driver: DriverRef,
    pub rule_specs: Vec<String>,
    pub rules: Vec<Rule>,
    pub quadrature_nodes: usize,
    pub positions: Vec<Position>,
    pub decompositions: Vec<DecompositionConfig>,
    /// Grid indices of the reported times, ascending.
    pub levels: Vec<usize>,
    pub rho: Vec<String>,
    pub pairs: Vec<(String, String)>,
    pub axioms: Vec<AxiomId>,
    pub tolerance: f64,
    pub corpus: CorpusKind,
    pub corpus_seed: u64,
    pub diagonal_only: bool,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for s in ini.sections().flatten() {
            if !seen.insert(s) {
                return Err(cfg(format!("section [{s}] appears twice")));
            }
            let known = matches!(s, "grid" | "engine" | "risk" | "report")
                || s.starts_with("position:")
                || s.starts_with("decomposition:");
            if !known {
                return Err(cfg(format!("unknown section [{s}]")));
            }
        }
        if ini.section(None::<String>).is_some_and(|p| !p.is_empty()) {
            return Err(cfg("keys outside of any section"));
        }
        let r = Reader { ini: &ini };

        r.allow("grid", &["horizon", "steps"])?;
        let horizon: f64 = r.parse("grid", "horizon")?.unwrap_or(1.0);
        let steps: usize = r.require("grid", "steps")?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(cfg(format!("grid.horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(cfg("grid.steps must be at least 1"));
        }

        r.allow("engine", &["method", "paths", "seed", "degree", "payoff_basis", "ridge", "step_bound"])?;
        let kind = match r.get("engine", "method").unwrap_or("tree") {
            "tree" => EngineKind::Tree,
            "lsmc" => EngineKind::Lsmc,
            other => return Err(cfg(format!("engine.method must be tree or lsmc, got {other:?}"))),
        };
        let defaults = BasisSpec::default();
        let basis = BasisSpec {
            degree: r.parse("engine", "degree")?.unwrap_or(defaults.degree),
            include_payoff: r.parse("engine", "payoff_basis")?.unwrap_or(defaults.include_payoff),
            ridge: r.parse("engine", "ridge")?.unwrap_or(defaults.ridge),
        };
        let engine = EngineConfig {
            kind,
            paths: r.parse("engine", "paths")?.unwrap_or(10_000),
            seed: r.parse("engine", "seed")?.unwrap_or(7),
            basis,
            step_bound: r.parse("engine", "step_bound")?,
        };

        r.allow("risk", &["driver", "rules", "quadrature"])?;
        let driver_spec: String = r.require("risk", "driver")?;
        let driver = parse_driver(&driver_spec).map_err(|e| cfg(format!("risk.driver: {e}")))?;
        let quadrature_nodes: usize = r.parse("risk", "quadrature")?.unwrap_or(32);
        let quad = QuadratureSpec::gauss_legendre(quadrature_nodes).map_err(|e| cfg(format!("risk.quadrature: {e}")))?;
        let rule_specs = list(r.get("risk", "rules").unwrap_or(""));
        let rules = rule_specs
            .iter()
            .map(|s| Rule::parse(s, &driver, &quad).map_err(|e| cfg(format!("risk.rules: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;

        let mut positions = Vec::new();
        let mut decompositions = Vec::new();
        for s in ini.sections().flatten() {
            if let Some(name) = s.strip_prefix("position:") {
                check_name(name, s)?;
                r.allow(s, &["payoff"])?;
                let text: String = r.require(s, "payoff")?;
                let expr = gcar_core::parse_payoff(&text, 1).map_err(|e| cfg(format!("[{s}] payoff: {e}")))?;
                positions.push(Position {
                    name: name.to_string(),
                    claim: TerminalClaim::from_expr(expr).with_label(name),
                });
            } else if let Some(name) = s.strip_prefix("decomposition:") {
                check_name(name, s)?;
                r.allow(s, &["pieces", "weights"])?;
                let pieces = list(r.get(s, "pieces").unwrap_or(""));
                if pieces.is_empty() {
                    return Err(cfg(format!("[{s}] needs at least one piece")));
                }
                let weights = match r.get(s, "weights") {
                    Some(w) => Some(
                        list(w)
                            .iter()
                            .map(|v| v.parse::<f64>().map_err(|_| cfg(format!("[{s}] weights: not a number: {v:?}"))))
                            .collect::<Result<Vec<_>, _>>()?,
                    ),
                    None => None,
                };
                decompositions.push(DecompositionConfig {
                    name: name.to_string(),
                    pieces,
                    weights,
                });
            }
        }

        r.allow(
            "report",
            &["times", "rho", "pairs", "axioms", "tolerance", "corpus", "corpus_seed", "diagonal"],
        )?;
        let grid = gcar_core::build_grid(horizon, steps).map_err(|e| cfg(e.to_string()))?;
        let mut levels = Vec::new();
        for t in list(r.get("report", "times").unwrap_or("0")) {
            let v: f64 = t.parse().map_err(|_| cfg(format!("report.times: not a number: {t:?}")))?;
            let k = grid
                .index_of(v)
                .ok_or_else(|| cfg(format!("report.times: {v} is not a grid time (Δ = {})", grid.dt())))?;
            levels.push(k);
        }
        levels.sort_unstable();
        levels.dedup();

        let names: BTreeSet<&str> = positions.iter().map(|p| p.name.as_str()).collect();
        let resolve = |n: &str, what: &str| -> Result<String, CliError> {
            if names.contains(n) {
                Ok(n.to_string())
            } else {
                Err(cfg(format!("{what}: unknown position {n:?}")))
            }
        };
        let rho = match r.get("report", "rho") {
            Some(v) => list(v).iter().map(|n| resolve(n, "report.rho")).collect::<Result<_, _>>()?,
            None => positions.iter().map(|p| p.name.clone()).collect(),
        };
        let mut pairs = Vec::new();
        for p in list(r.get("report", "pairs").unwrap_or("")) {
            let (x, y) = p
                .split_once(';')
                .ok_or_else(|| cfg(format!("report.pairs: expected X;Y, got {p:?}")))?;
            pairs.push((resolve(x.trim(), "report.pairs")?, resolve(y.trim(), "report.pairs")?));
        }
        if !pairs.is_empty() && rules.is_empty() {
            return Err(cfg("report.pairs needs at least one rule in risk.rules"));
        }
        for d in &decompositions {
            for piece in &d.pieces {
                resolve(piece, &format!("[decomposition:{}]", d.name))?;
            }
            if let Some(w) = &d.weights {
                if w.len() != d.pieces.len() {
                    return Err(cfg(format!(
                        "[decomposition:{}] has {} pieces and {} weights",
                        d.name,
                        d.pieces.len(),
                        w.len()
                    )));
                }
            }
        }

        let axiom_list = list(r.get("report", "axioms").unwrap_or(""));
        let axioms = if axiom_list.len() == 1 && axiom_list[0] == "all" {
            AxiomId::ALL.to_vec()
        } else {
            axiom_list
                .iter()
                .map(|a| a.parse::<AxiomId>().map_err(|e| cfg(format!("report.axioms: {e}"))))
                .collect::<Result<Vec<_>, _>>()?
        };
        if !axioms.is_empty() && rules.is_empty() {
            return Err(cfg("report.axioms needs at least one rule in risk.rules"));
        }
        let tolerance: f64 = r.parse("report", "tolerance")?.unwrap_or(1e-9);
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(cfg(format!("report.tolerance must be positive, got {tolerance}")));
        }
        let corpus = match r.get("report", "corpus").unwrap_or("positions") {
            "positions" => CorpusKind::Positions,
            "standard" => CorpusKind::Standard,
            other => return Err(cfg(format!("report.corpus must be positions or standard, got {other:?}"))),
        };
        if !axioms.is_empty() && corpus == CorpusKind::Positions && positions.is_empty() {
            return Err(cfg("axiom checks on the positions corpus need at least one position"));
        }

        let config = Self {
            horizon,
            steps,
            engine,
            driver,
            rule_specs,
            rules,
            quadrature_nodes,
            positions,
            decompositions,
            levels,
            rho,
            pairs,
            axioms,
            tolerance,
            corpus,
            corpus_seed: r.parse("report", "corpus_seed")?.unwrap_or(2024),
            diagonal_only: r.parse("report", "diagonal")?.unwrap_or(false),
        };
        config.validate_engine()?;
        Ok(config)
    }

    /// Solver preconditions that can be decided before any computation.
    fn validate_engine(&self) -> Result<(), CliError> {
        let dt = self.horizon / self.steps as f64;
        if let Some(mu) = self.driver.growth().lipschitz() {
            if self.engine.kind == EngineKind::Tree && mu * dt.sqrt() >= 1.0 {
                let need = (mu * mu * self.horizon).floor() as usize + 1;
                return Err(cfg(format!(
                    "driver {} needs grid.steps ≥ {need} on the tree (μ√Δ < 1)",
                    self.driver.label()
                )));
            }
        }
        if let Some(b) = self.engine.step_bound {
            if b.is_nan() || b <= 0.0 {
                return Err(cfg(format!("engine.step_bound must be positive, got {b}")));
            }
            if dt > b {
                return Err(cfg(format!("Δ = {dt} exceeds engine.step_bound = {b}")));
            }
        }
        if self.engine.kind == EngineKind::Lsmc {
            let need = 10 * self.engine.basis.size(1);
            if self.engine.paths < need {
                return Err(cfg(format!(
                    "engine.paths = {} is below 10 × basis size = {need}",
                    self.engine.paths
                )));
            }
            if self.engine.basis.ridge.is_nan() || self.engine.basis.ridge < 0.0 {
                return Err(cfg("engine.ridge must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn position(&self, name: &str) -> &TerminalClaim {
        &self
            .positions
            .iter()
            .find(|p| p.name == name)
            .expect("names are resolved at load time")
            .claim
    }
}

fn cfg(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn check_name(name: &str, section: &str) -> Result<(), CliError> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(cfg(format!("[{section}]: names use letters, digits, '_' and '-'")))
    }
}

struct Reader<'a> {
    ini: &'a Ini,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.get_from(Some(section), key).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg(format!("{section}.{key}: cannot parse {v:?}"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        self.parse(section, key)?
            .ok_or_else(|| cfg(format!("missing {section}.{key}")))
    }

    /// Rejects keys outside `keys`, so typos do not pass silently.
    fn allow(&self, section: &str, keys: &[&str]) -> Result<(), CliError> {
        if let Some(props) = self.ini.section(Some(section)) {
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(cfg(format!("[{section}]: unknown key {k:?}")));
                }
            }
        }
        Ok(())
    }
}
