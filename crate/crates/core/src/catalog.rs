//! Specification strings for drivers, allocation drivers and rules.

use crate::drivers::{
    alloc_driver_entropic_1, alloc_driver_entropic_2, alloc_driver_gradient, alloc_driver_marginal,
    alloc_driver_subdiff, driver_entropic, driver_scaled_norm, driver_zero, AllocDriverRef, DriverRef,
};
use crate::axioms::AxiomId;
use crate::error::{invalid, Result};

fn param(spec: &str, body: &str, key: &str) -> Result<f64> {
    let value = body
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| invalid(format!("'{spec}': expected {key}=<number>")))?;
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| invalid(format!("'{spec}': '{value}' is not a number")))
}

/// `zero`, `norm:mu=<x>` or `entropic:lambda=<x>`.
pub fn parse_driver(spec: &str) -> Result<DriverRef> {
    let spec = spec.trim();
    match spec.split_once(':') {
        None if spec == "zero" => Ok(driver_zero()),
        Some(("norm", body)) => driver_scaled_norm(param(spec, body, "mu")?),
        Some(("entropic", body)) => driver_entropic(param(spec, body, "lambda")?),
        _ => Err(invalid(format!("unknown driver '{spec}'"))),
    }
}

/// `grad`, `subdiff`, `marginal`, `ent1:c=<x>` or `ent2:lt=<x>` over `base`.
///
/// The entropic families need an entropic base and take its `λ`.
pub fn parse_alloc_driver(spec: &str, base: &DriverRef) -> Result<AllocDriverRef> {
    let spec = spec.trim();
    let entropic_lambda = || -> Result<f64> {
        let label = base.label();
        label
            .strip_prefix("entropic:lambda=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| invalid(format!("'{spec}' needs an entropic risk driver, got {label}")))
    };
    match spec.split_once(':') {
        None if spec == "grad" => Ok(alloc_driver_gradient(base.clone())),
        None if spec == "subdiff" => alloc_driver_subdiff(base.clone()),
        None if spec == "marginal" => alloc_driver_marginal(base.clone()),
        Some(("ent1", body)) => alloc_driver_entropic_1(entropic_lambda()?, param(spec, body, "c")?),
        Some(("ent2", body)) => alloc_driver_entropic_2(entropic_lambda()?, param(spec, body, "lt")?),
        _ => Err(invalid(format!("unknown allocation driver '{spec}'"))),
    }
}

/// Human-readable list of everything the CLI accepts.
pub fn catalog_text() -> String {
    let mut rows: Vec<(String, &str)> = [
        ("driver zero", "g = 0, the risk-neutral measure ρ_t(X) = E[-X | F_t]"),
        ("driver norm:mu=<x>", "g = μ‖z‖, coherent worst case over drifts of norm ≤ μ"),
        ("driver entropic:lambda=<x>", "g = ‖z‖²/(2λ), entropic risk measure"),
        ("alloc grad", "∇g(z^y)·z"),
        ("alloc subdiff", "∂g(z^y)·(z - z^y) + g(z^y)"),
        ("alloc marginal", "g(z^y) - g(z^y - z)"),
        ("alloc ent1:c=<x>", "c(z - z^y) + ‖z^y‖²/(2λ), entropic base only"),
        ("alloc ent2:lt=<x>", "‖z - z^y‖²/(2λ̃) + ‖z^y‖²/(2λ), entropic base only"),
        ("rule grad", "gradient allocation"),
        ("rule subdiff", "subdifferential allocation"),
        ("rule marginal", "ρ_t(Y) - ρ_t(Y - X)"),
        ("rule as", "Aumann-Shapley, γ-quadrature over scenario kernels"),
        ("rule pas", "penalized Aumann-Shapley (audacious)"),
        ("rule custom:<alloc>", "allocation BSDE with the given allocation driver"),
        ("engine tree", "recombining binomial lattice, exact recursion"),
        ("engine lsmc", "regression Monte Carlo on simulated paths"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b))
    .collect();
    rows.extend(AxiomId::ALL.iter().map(|a| (format!("axiom {}", a.name()), a.statement())));
    let width = rows.iter().map(|(a, _)| a.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, desc) in rows {
        let pad = width - name.chars().count();
        out.push_str(&format!("{name}{}  {desc}\n", " ".repeat(pad)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drivers_round_trip_through_labels() {
        for s in ["zero", "norm:mu=0.5", "entropic:lambda=2"] {
            let d = parse_driver(s).unwrap();
            if s != "zero" {
                assert_eq!(d.label(), s);
            }
        }
        assert!(parse_driver("norm:mu=-1").is_err());
        assert!(parse_driver("norm:lambda=1").is_err());
        assert!(parse_driver("cubic").is_err());
        assert!(parse_driver("entropic:lambda=abc").is_err());
    }

    #[test]
    fn alloc_drivers() {
        let ent = parse_driver("entropic:lambda=1").unwrap();
        let norm = parse_driver("norm:mu=0.5").unwrap();
        assert_eq!(parse_alloc_driver("ent1:c=2", &ent).unwrap().evaluate1(0.0, 3.0, 1.0), 4.5);
        assert_eq!(parse_alloc_driver("ent2:lt=2", &ent).unwrap().evaluate1(0.0, 4.0, 2.0), 3.0);
        assert!(parse_alloc_driver("ent1:c=2", &norm).is_err());
        for s in ["grad", "subdiff", "marginal"] {
            assert_eq!(parse_alloc_driver(s, &norm).unwrap().label(), s);
        }
        assert!(parse_alloc_driver("shapley", &norm).is_err());
    }

    #[test]
    fn catalog_lists_every_rule() {
        let text = catalog_text();
        for name in ["grad", "subdiff", "marginal", "as", "pas", "custom:", "ent2:lt=<x>", "lsmc", "axiom tc1", "axiom car-identity"] {
            assert!(text.contains(name), "{name}");
        }
    }
}
