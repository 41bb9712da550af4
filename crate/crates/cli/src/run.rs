//! Executes a scenario and writes the values table, axiom report and manifest.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use gcar_core::axioms::{Decomposition, PositionCorpus};
use gcar_core::{
    build_grid, build_tree, check_axiom, render_reports, rho, sample_paths, AxiomReport, Engine, TreeOptions,
};

use crate::config::{CorpusKind, EngineKind, ScenarioConfig};
use crate::CliError;

/// Per-node rows are written only on trees up to this depth.
pub const MAX_NODE_ROWS_DEPTH: usize = 12;

pub struct Outcome {
    pub reports: Vec<AxiomReport>,
}

impl Outcome {
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.failed()).count()
    }
}

pub fn run(config: &ScenarioConfig, config_path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let engine = build_engine(config)?;
    let mut rows = Vec::new();
    let mut std_errors = Vec::new();

    for name in &config.rho {
        let r = rho(config.driver.as_ref(), config.position(name), &engine)?;
        let quantity = format!("rho({name})");
        push_rows(&mut rows, config, &engine, &quantity, |k| r.values(k), r.std_error());
        if let Some(se) = r.std_error() {
            std_errors.push((quantity, se));
        }
    }
    for rule in &config.rules {
        for (x, y) in &config.pairs {
            let a = rule.allocate(&config.driver, config.position(x), config.position(y), &engine)?;
            let quantity = format!("Lambda[{}]({x};{y})", rule.name());
            push_rows(&mut rows, config, &engine, &quantity, |k| a.values(k), a.std_error());
            if let Some(se) = a.std_error() {
                std_errors.push((quantity, se));
            }
        }
    }

    let mut reports = Vec::new();
    if !config.axioms.is_empty() {
        let corpus = build_corpus(config)?;
        for rule in &config.rules {
            for &axiom in &config.axioms {
                reports.push(check_axiom(axiom, rule, &config.driver, &corpus, &engine, config.tolerance)?);
            }
        }
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_values(&out.join("values.csv"), &rows)?;
    write_file(&out.join("axioms.txt"), &render_reports(&reports))?;
    write_file(
        &out.join("manifest.txt"),
        &manifest(config, config_path, &engine, &std_errors, &reports),
    )?;
    Ok(Outcome { reports })
}

fn build_engine(config: &ScenarioConfig) -> Result<Engine, CliError> {
    let grid = build_grid(config.horizon, config.steps)?;
    Ok(match config.engine.kind {
        EngineKind::Tree => Engine::Tree {
            tree: build_tree(grid),
            options: TreeOptions {
                step_bound: config.engine.step_bound,
            },
        },
        EngineKind::Lsmc => {
            let paths = sample_paths(grid, 1, config.engine.paths, config.engine.seed)?;
            Engine::Lsmc {
                paths: Arc::new(paths),
                basis: config.engine.basis,
            }
        }
    })
}

fn build_corpus(config: &ScenarioConfig) -> Result<PositionCorpus, CliError> {
    let mut corpus = PositionCorpus::standard(config.corpus_seed);
    if config.corpus == CorpusKind::Positions {
        corpus.payoffs = config.positions.iter().map(|p| p.claim.clone()).collect();
        corpus.decompositions = config
            .decompositions
            .iter()
            .map(|d| {
                let pieces = d.pieces.iter().map(|n| config.position(n).clone()).collect();
                match &d.weights {
                    Some(w) => Decomposition::new(d.name.clone(), pieces, w.clone()),
                    None => Decomposition::uniform(d.name.clone(), pieces),
                }
                .map_err(|e| CliError::Config(format!("[decomposition:{}]: {e}", d.name)))
            })
            .collect::<Result<_, _>>()?;
    }
    if config.diagonal_only {
        corpus = corpus.diagonal_pairs_only();
    }
    Ok(corpus)
}

struct Row {
    time: f64,
    state: String,
    quantity: String,
    value: f64,
}

fn push_rows<'a, F>(rows: &mut Vec<Row>, config: &ScenarioConfig, engine: &Engine, quantity: &str, values: F, se: Option<f64>)
where
    F: Fn(usize) -> &'a [f64],
{
    let grid = engine.grid();
    for &k in &config.levels {
        let t = grid.time(k);
        let v = values(k);
        let mut push = |state: String, value: f64| {
            rows.push(Row {
                time: t,
                state,
                quantity: quantity.to_string(),
                value,
            })
        };
        match engine {
            Engine::Tree { tree, .. } if config.steps <= MAX_NODE_ROWS_DEPTH => {
                for (j, &value) in v.iter().enumerate() {
                    push(format!("W={}", tree.state(k, j)), value);
                }
            }
            _ => {
                let n = v.len() as f64;
                let (lo, hi) = v
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                push("min".into(), lo);
                push("mean".into(), v.iter().sum::<f64>() / n);
                push("max".into(), hi);
            }
        }
        if k == 0 {
            if let Some(se) = se {
                push("std_error".into(), se);
            }
        }
    }
}

fn write_values(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["time", "state", "quantity", "value"]).map_err(io)?;
    for r in rows {
        w.write_record([r.time.to_string(), r.state.clone(), r.quantity.clone(), r.value.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn manifest(
    config: &ScenarioConfig,
    config_path: &Path,
    engine: &Engine,
    std_errors: &[(String, f64)],
    reports: &[AxiomReport],
) -> String {
    let mut m = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(m, "{k} = {v}");
    };
    kv("tool", &concat!("gcar ", env!("CARGO_PKG_VERSION")));
    kv("config", &config_path.display());
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    kv("started_unix", &started);
    kv("horizon", &config.horizon);
    kv("steps", &config.steps);
    kv("dt", &engine.grid().dt());
    kv("method", &engine.method().name());
    if let Engine::Lsmc { paths, basis } = engine {
        kv("paths", &paths.paths());
        kv("path_seed", &paths.seed());
        kv("basis_degree", &basis.degree);
        kv("basis_payoff", &basis.include_payoff);
        kv("basis_size", &basis.size(1));
        kv("ridge", &basis.ridge);
    }
    if let Some(b) = config.engine.step_bound {
        kv("step_bound", &b);
    }
    kv("driver", &config.driver.label());
    kv("rules", &config.rule_specs.join(", "));
    kv("quadrature_nodes", &config.quadrature_nodes);
    kv("times", &config.levels.iter().map(|&k| engine.grid().time(k).to_string()).collect::<Vec<_>>().join(", "));
    for (q, se) in std_errors {
        kv(&format!("std_error[{q}]"), se);
    }
    if !reports.is_empty() {
        kv("corpus", &match config.corpus {
            CorpusKind::Positions => "positions",
            CorpusKind::Standard => "standard",
        });
        kv("corpus_seed", &config.corpus_seed);
        kv("tolerance", &format!("{:e}", config.tolerance));
        kv("axiom_checks", &reports.len());
        kv("axiom_failures", &reports.iter().filter(|r| r.failed()).count());
    }
    m
}
