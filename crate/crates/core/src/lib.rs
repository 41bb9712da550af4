//! Dynamic convex risk measures induced by g-expectations and their dynamic
//! capital allocation rules, with an exact lattice oracle, a regression
//! Monte Carlo solver and an axiom-checking harness.

pub mod allocation;
pub mod axioms;
pub mod bsde;
pub mod catalog;
pub mod drivers;
pub mod error;
pub mod grid;
pub mod oracles;
pub mod payoff;
pub mod quadrature;
pub mod risk;

pub use bsde::{
    solve_alloc_lsmc, solve_alloc_tree, solve_lsmc, solve_tree, BasisSpec, BsdeSolution, Carrier, Engine, Method,
    SolverMeta, TerminalClaim, TreeOptions,
};
pub use drivers::{
    alloc_driver_entropic_1, alloc_driver_entropic_2, alloc_driver_f_family, alloc_driver_gradient,
    alloc_driver_marginal, alloc_driver_subdiff, driver_entropic, driver_linear, driver_scaled_norm, driver_zero,
    AllocDriver, AllocDriverRef, Driver, DriverRef, Growth,
};
pub use error::{Error, Result};
pub use grid::{build_grid, build_tree, sample_paths, PathEnsemble, TimeGrid, TreeModel};
pub use payoff::{parse_payoff, PayoffExpr};
pub use risk::{
    dual_value, expectation_under_q, kernel_from_subgradient, penalty, rho, AdaptedValues, GirsanovKernel,
    PenaltyProcess, RiskProcess,
};
pub use quadrature::QuadratureSpec;
pub use allocation::{
    car_aumann_shapley, car_from_alloc_driver, car_gradient, car_marginal, car_penalized_as, car_subdifferential,
    car_subdifferential_dual, AllocationProcess, Rule, ScenarioFamily,
};
pub use catalog::{catalog_text, parse_alloc_driver, parse_driver};
pub use axioms::{
    check_axiom, check_axioms, check_lemma1, check_prop1_direction_a, check_prop3_condition, check_prop3_implication,
    render_reports, AxiomId, AxiomReport, PositionCorpus, Status,
};
