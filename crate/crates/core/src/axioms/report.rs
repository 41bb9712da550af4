//! Axiom identifiers, reports and their text serialization.

use std::fmt;
use std::str::FromStr;

use crate::bsde::Method;
use crate::error::{invalid, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AxiomId {
    Monotonicity,
    NoUndercut,
    Riskless,
    Cash1,
    Cash,
    FullAllocation,
    SubAllocation,
    WeakConvexity,
    Tc1,
    Tc2,
    CarIdentity,
    AudaciousIdentity,
    ZeroAllocation,
}

impl AxiomId {
    pub const ALL: [AxiomId; 13] = [
        AxiomId::Monotonicity,
        AxiomId::NoUndercut,
        AxiomId::Riskless,
        AxiomId::Cash1,
        AxiomId::Cash,
        AxiomId::FullAllocation,
        AxiomId::SubAllocation,
        AxiomId::WeakConvexity,
        AxiomId::Tc1,
        AxiomId::Tc2,
        AxiomId::CarIdentity,
        AxiomId::AudaciousIdentity,
        AxiomId::ZeroAllocation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxiomId::Monotonicity => "monotonicity",
            AxiomId::NoUndercut => "no-undercut",
            AxiomId::Riskless => "riskless",
            AxiomId::Cash1 => "cash1",
            AxiomId::Cash => "cash",
            AxiomId::FullAllocation => "full-allocation",
            AxiomId::SubAllocation => "sub-allocation",
            AxiomId::WeakConvexity => "weak-convexity",
            AxiomId::Tc1 => "tc1",
            AxiomId::Tc2 => "tc2",
            AxiomId::CarIdentity => "car-identity",
            AxiomId::AudaciousIdentity => "audacious-identity",
            AxiomId::ZeroAllocation => "zero-allocation",
        }
    }

    pub fn statement(self) -> &'static str {
        match self {
            AxiomId::Monotonicity => "X ≤ Z implies Λ_t(X;Y) ≥ Λ_t(Z;Y)",
            AxiomId::NoUndercut => "Λ_t(X;Y) ≤ ρ_t(X)",
            AxiomId::Riskless => "Λ_t(c_t;Y) = -c_t",
            AxiomId::Cash1 => "Λ_t(X+c_t;Y) = Λ_t(X;Y) - c_t",
            AxiomId::Cash => "Λ_t(X+c_t;Y+c_t) = Λ_t(X;Y) - c_t",
            AxiomId::FullAllocation => "Λ_t(ΣY_i;Y) = ΣΛ_t(Y_i;Y)",
            AxiomId::SubAllocation => "Λ_t(ΣY_i;Y) ≥ ΣΛ_t(Y_i;Y)",
            AxiomId::WeakConvexity => "Λ_t(Σα_iY_i;Y) ≤ Σα_iΛ_t(Y_i;Y) for Y = Σα_iY_i",
            AxiomId::Tc1 => "Λ_s(-Λ_t(X;Y);Y) = Λ_s(X;Y), s ≤ t",
            AxiomId::Tc2 => "Λ_s(-Λ_t(X;Y);-ρ_t(Y)) = Λ_s(X;Y), s ≤ t",
            AxiomId::CarIdentity => "Λ_t(Y;Y) = ρ_t(Y)",
            AxiomId::AudaciousIdentity => "Λ_t(Y;Y) ≤ ρ_t(Y)",
            AxiomId::ZeroAllocation => "Λ_t(0;Y) = 0",
        }
    }
}

impl fmt::Display for AxiomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AxiomId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AxiomId::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown axiom id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotApplicable => "not-applicable",
        }
    }
}

/// Where the worst violation occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub level: usize,
    pub time: f64,
    /// Node index on the lattice; 0 for ensemble checks at time 0.
    pub node: usize,
    pub state: f64,
    pub x: String,
    pub y: String,
    pub detail: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub axiom: String,
    pub rule: String,
    pub driver: String,
    pub method: Method,
    pub status: Status,
    pub violation: f64,
    pub tolerance: f64,
    pub checks: usize,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    /// One line of `key=value` fields; strings are quoted.
    pub fn to_record(&self) -> String {
        let mut s = format!(
            "axiom={} rule={:?} driver={:?} method={} status={} violation={:e} tolerance={:e} checks={}",
            self.axiom,
            self.rule,
            self.driver,
            self.method.name(),
            self.status.name(),
            self.violation,
            self.tolerance,
            self.checks
        );
        if let Some(w) = &self.witness {
            s.push_str(&format!(
                " level={} time={:e} node={} state={:e} x={:?} y={:?} detail={:?} lhs={:e} rhs={:e}",
                w.level, w.time, w.node, w.state, w.x, w.y, w.detail, w.lhs, w.rhs
            ));
        }
        if let Some(n) = &self.note {
            s.push_str(&format!(" note={n:?}"));
        }
        s
    }
}

/// Records joined by newlines, in the given order.
pub fn render_reports(reports: &[AxiomReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_record());
        out.push('\n');
    }
    out
}
