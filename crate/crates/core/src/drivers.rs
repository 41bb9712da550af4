//! Risk drivers `g(t, z)` and allocation drivers `g_Λ(t, z, z^y)`.
//!
//! Drivers are opaque functions of the control variable `z ∈ R^d`. Besides
//! evaluation they expose a selected subgradient and the convex conjugate,
//! which is what the dual machinery in [`crate::risk`] needs. Built-in
//! drivers are probed at construction (10³ samples, fixed seed) for the
//! convexity, subgradient and diagonal invariants.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

pub type DriverRef = Arc<dyn Driver>;
pub type AllocDriverRef = Arc<dyn AllocDriver>;

/// Growth class of a driver in `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    Lipschitz(f64),
    Quadratic,
}

impl Growth {
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Growth::Lipschitz(mu) => Some(mu),
            Growth::Quadratic => None,
        }
    }
}

pub trait Driver: Send + Sync + fmt::Debug {
    /// Specification string, e.g. `norm:mu=0.5`.
    fn label(&self) -> String;

    fn evaluate(&self, t: f64, z: &[f64]) -> f64;

    /// Writes the selected element of `∂g(t, z)` into `out`.
    fn subgradient(&self, t: f64, z: &[f64], out: &mut [f64]);

    /// Convex conjugate `g*(t, q) = sup_z { q·z - g(t, z) }`, possibly `+∞`.
    fn conjugate(&self, t: f64, q: &[f64]) -> f64;

    fn growth(&self) -> Growth;

    /// `g(t, 0) = 0` for all `t`.
    fn is_normalized(&self) -> bool {
        true
    }

    /// Positive homogeneity in `z` (the induced risk measure is coherent).
    fn is_positively_homogeneous(&self) -> bool {
        false
    }

    /// Fixed dimension of `z`, if the driver only accepts one.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn subgradient_vec(&self, t: f64, z: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; z.len()];
        self.subgradient(t, z, &mut q);
        q
    }

    fn evaluate1(&self, t: f64, z: f64) -> f64 {
        self.evaluate(t, &[z])
    }

    fn subgradient1(&self, t: f64, z: f64) -> f64 {
        let mut q = [0.0];
        self.subgradient(t, &[z], &mut q);
        q[0]
    }

    fn conjugate1(&self, t: f64, q: f64) -> f64 {
        self.conjugate(t, &[q])
    }
}

pub trait AllocDriver: Send + Sync + fmt::Debug {
    fn label(&self) -> String;

    /// The risk driver being allocated.
    fn base(&self) -> &DriverRef;

    fn evaluate(&self, t: f64, z: &[f64], z_y: &[f64]) -> f64;

    /// Lipschitz constant of `z ↦ g_Λ(t, z, z_y)`, `None` for quadratic growth.
    fn z_lipschitz(&self, t: f64, z_y: &[f64]) -> Option<f64>;

    fn evaluate1(&self, t: f64, z: f64, z_y: f64) -> f64 {
        self.evaluate(t, &[z], &[z_y])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// ---------------------------------------------------------------------------
// Risk drivers

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDriver;

impl Driver for ZeroDriver {
    fn label(&self) -> String {
        "zero".into()
    }

    fn evaluate(&self, _t: f64, _z: &[f64]) -> f64 {
        0.0
    }

    fn subgradient(&self, _t: f64, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn conjugate(&self, _t: f64, q: &[f64]) -> f64 {
        if q.iter().all(|&x| x == 0.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn growth(&self) -> Growth {
        Growth::Lipschitz(0.0)
    }

    fn is_positively_homogeneous(&self) -> bool {
        true
    }
}

/// `g(t, z) = μ‖z‖`, the driver of the coherent `E_μ` expectation.
///
/// The subgradient at the kink `z = 0` is `kink` (default `0`), any vector of
/// norm at most `μ` being admissible.
#[derive(Debug, Clone)]
pub struct ScaledNormDriver {
    mu: f64,
    kink: Option<Vec<f64>>,
}

impl ScaledNormDriver {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Replaces the subgradient selected at `z = 0`.
    pub fn with_kink_selection(mut self, q0: Vec<f64>) -> Result<Self> {
        if norm(&q0) > self.mu {
            return Err(invalid(format!(
                "kink selection {q0:?} lies outside the ball of radius {}",
                self.mu
            )));
        }
        self.kink = Some(q0);
        Ok(self)
    }
}

impl Driver for ScaledNormDriver {
    fn label(&self) -> String {
        format!("norm:mu={}", self.mu)
    }

    fn evaluate(&self, _t: f64, z: &[f64]) -> f64 {
        self.mu * norm(z)
    }

    fn subgradient(&self, _t: f64, z: &[f64], out: &mut [f64]) {
        let n = norm(z);
        if n == 0.0 {
            match &self.kink {
                Some(q0) if q0.len() == out.len() => out.copy_from_slice(q0),
                Some(q0) if q0.len() == 1 => out.fill(q0[0] / (out.len() as f64).sqrt()),
                _ => out.fill(0.0),
            }
        } else {
            for (o, zi) in out.iter_mut().zip(z) {
                *o = self.mu * zi / n;
            }
        }
    }

    fn conjugate(&self, _t: f64, q: &[f64]) -> f64 {
        if norm(q) <= self.mu * (1.0 + 1e-12) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn growth(&self) -> Growth {
        Growth::Lipschitz(self.mu)
    }

    fn is_positively_homogeneous(&self) -> bool {
        true
    }
}

/// `g(t, z) = ‖z‖² / (2λ)`, the driver of the entropic risk measure.
#[derive(Debug, Clone, Copy)]
pub struct EntropicDriver {
    lambda: f64,
}

impl EntropicDriver {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Driver for EntropicDriver {
    fn label(&self) -> String {
        format!("entropic:lambda={}", self.lambda)
    }

    fn evaluate(&self, _t: f64, z: &[f64]) -> f64 {
        dot(z, z) / (2.0 * self.lambda)
    }

    fn subgradient(&self, _t: f64, z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = zi / self.lambda;
        }
    }

    fn conjugate(&self, _t: f64, q: &[f64]) -> f64 {
        0.5 * self.lambda * dot(q, q)
    }

    fn growth(&self) -> Growth {
        Growth::Quadratic
    }
}

/// `g(t, z) = b·z`. Not a risk driver in the strict sense (it is linear),
/// but useful as the degenerate case where all allocation rules agree.
#[derive(Debug, Clone)]
pub struct LinearDriver {
    b: Vec<f64>,
}

impl Driver for LinearDriver {
    fn label(&self) -> String {
        let parts: Vec<String> = self.b.iter().map(|x| x.to_string()).collect();
        format!("linear:b={}", parts.join(","))
    }

    fn evaluate(&self, _t: f64, z: &[f64]) -> f64 {
        dot(&self.b, z)
    }

    fn subgradient(&self, _t: f64, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b[..out.len()]);
    }

    fn conjugate(&self, _t: f64, q: &[f64]) -> f64 {
        if q.iter().zip(&self.b).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn growth(&self) -> Growth {
        Growth::Lipschitz(norm(&self.b))
    }

    fn dim(&self) -> Option<usize> {
        Some(self.b.len())
    }

    fn is_positively_homogeneous(&self) -> bool {
        true
    }
}

pub fn driver_zero() -> DriverRef {
    Arc::new(ZeroDriver)
}

pub fn scaled_norm(mu: f64) -> Result<ScaledNormDriver> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    Ok(ScaledNormDriver { mu, kink: None })
}

pub fn driver_scaled_norm(mu: f64) -> Result<DriverRef> {
    let d: DriverRef = Arc::new(scaled_norm(mu)?);
    probe_driver(d.as_ref())?;
    Ok(d)
}

pub fn driver_entropic(lambda: f64) -> Result<DriverRef> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let d: DriverRef = Arc::new(EntropicDriver { lambda });
    probe_driver(d.as_ref())?;
    Ok(d)
}

pub fn driver_linear(b: Vec<f64>) -> Result<DriverRef> {
    if b.is_empty() || b.iter().any(|x| !x.is_finite()) {
        return Err(invalid("linear driver needs a finite, non-empty slope"));
    }
    Ok(Arc::new(LinearDriver { b }))
}

// ---------------------------------------------------------------------------
// Allocation drivers

/// `∇g(t, z^y)·z`.
#[derive(Debug, Clone)]
pub struct GradientAlloc {
    base: DriverRef,
}

impl AllocDriver for GradientAlloc {
    fn label(&self) -> String {
        "grad".into()
    }

    fn base(&self) -> &DriverRef {
        &self.base
    }

    fn evaluate(&self, t: f64, z: &[f64], z_y: &[f64]) -> f64 {
        dot(&self.base.subgradient_vec(t, z_y), z)
    }

    fn z_lipschitz(&self, t: f64, z_y: &[f64]) -> Option<f64> {
        Some(norm(&self.base.subgradient_vec(t, z_y)))
    }

    fn evaluate1(&self, t: f64, z: f64, z_y: f64) -> f64 {
        self.base.subgradient1(t, z_y) * z
    }
}

/// `∂g(t, z^y)·(z - z^y) + g(t, z^y)`.
#[derive(Debug, Clone)]
pub struct SubdiffAlloc {
    base: DriverRef,
}

impl AllocDriver for SubdiffAlloc {
    fn label(&self) -> String {
        "subdiff".into()
    }

    fn base(&self) -> &DriverRef {
        &self.base
    }

    fn evaluate(&self, t: f64, z: &[f64], z_y: &[f64]) -> f64 {
        let q = self.base.subgradient_vec(t, z_y);
        let lin: f64 = q.iter().zip(z.iter().zip(z_y)).map(|(q, (a, b))| q * (a - b)).sum();
        lin + self.base.evaluate(t, z_y)
    }

    fn z_lipschitz(&self, t: f64, z_y: &[f64]) -> Option<f64> {
        Some(norm(&self.base.subgradient_vec(t, z_y)))
    }

    fn evaluate1(&self, t: f64, z: f64, z_y: f64) -> f64 {
        self.base.subgradient1(t, z_y) * (z - z_y) + self.base.evaluate1(t, z_y)
    }
}

/// `g(t, z^y) - g(t, z^y - z)`.
#[derive(Debug, Clone)]
pub struct MarginalAlloc {
    base: DriverRef,
}

impl AllocDriver for MarginalAlloc {
    fn label(&self) -> String {
        "marginal".into()
    }

    fn base(&self) -> &DriverRef {
        &self.base
    }

    fn evaluate(&self, t: f64, z: &[f64], z_y: &[f64]) -> f64 {
        let diff: Vec<f64> = z_y.iter().zip(z).map(|(a, b)| a - b).collect();
        self.base.evaluate(t, z_y) - self.base.evaluate(t, &diff)
    }

    fn z_lipschitz(&self, _t: f64, _z_y: &[f64]) -> Option<f64> {
        self.base.growth().lipschitz()
    }
}

pub type CorrectionFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// `f(t, z^y, z - z^y) + g(t, z^y)` with `f(t, z^y, 0) = 0`.
#[derive(Clone)]
pub struct FamilyAlloc {
    base: DriverRef,
    f: Arc<CorrectionFn>,
    label: String,
    slope: Option<f64>,
}

impl fmt::Debug for FamilyAlloc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilyAlloc")
            .field("base", &self.base)
            .field("label", &self.label)
            .field("slope", &self.slope)
            .finish()
    }
}

impl AllocDriver for FamilyAlloc {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn base(&self) -> &DriverRef {
        &self.base
    }

    fn evaluate(&self, t: f64, z: &[f64], z_y: &[f64]) -> f64 {
        let w: Vec<f64> = z.iter().zip(z_y).map(|(a, b)| a - b).collect();
        (self.f)(t, z_y, &w) + self.base.evaluate(t, z_y)
    }

    fn z_lipschitz(&self, _t: f64, _z_y: &[f64]) -> Option<f64> {
        self.slope
    }
}

pub fn alloc_driver_gradient(base: DriverRef) -> AllocDriverRef {
    Arc::new(GradientAlloc { base })
}

pub fn alloc_driver_subdiff(base: DriverRef) -> Result<AllocDriverRef> {
    let a: AllocDriverRef = Arc::new(SubdiffAlloc { base });
    probe_diagonal(a.as_ref())?;
    Ok(a)
}

pub fn alloc_driver_marginal(base: DriverRef) -> Result<AllocDriverRef> {
    if !base.is_normalized() {
        return Err(invalid(format!(
            "marginal allocation needs a normalized driver, {} is not",
            base.label()
        )));
    }
    let a: AllocDriverRef = Arc::new(MarginalAlloc { base });
    probe_diagonal(a.as_ref())?;
    Ok(a)
}

/// Generic `g^f_Λ`. `slope` is the Lipschitz constant of `w ↦ f(t, z^y, w)`
/// if known; `None` marks quadratic growth.
pub fn alloc_driver_f_family<F>(
    base: DriverRef,
    label: impl Into<String>,
    slope: Option<f64>,
    f: F,
) -> Result<AllocDriverRef>
where
    F: Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
{
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for dim in [1usize, 2] {
        let zero = vec![0.0; dim];
        for _ in 0..PROBES / 2 {
            let t = rng.random_range(0.0..PROBE_T);
            let zy = sample_z(&mut rng, dim);
            let v = f(t, &zy, &zero);
            if v.abs() > 1e-12 {
                return Err(invalid(format!(
                    "correction term does not vanish at w = 0: f({t}, {zy:?}, 0) = {v}"
                )));
            }
        }
    }
    let a: AllocDriverRef = Arc::new(FamilyAlloc {
        base,
        f: Arc::new(f),
        label: label.into(),
        slope,
    });
    probe_diagonal(a.as_ref())?;
    Ok(a)
}

/// `c(z - z^y) + ‖z^y‖²/(2λ)` over the entropic driver (summing `c·w_i` for `d > 1`).
pub fn alloc_driver_entropic_1(lambda: f64, c: f64) -> Result<AllocDriverRef> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    let base = driver_entropic(lambda)?;
    alloc_driver_f_family(base, format!("ent1:c={c}"), Some(c), move |_t, _zy, w| {
        c * w.iter().sum::<f64>()
    })
}

/// `‖z - z^y‖²/(2λ̃) + ‖z^y‖²/(2λ)`.
pub fn alloc_driver_entropic_2(lambda: f64, lambda_tilde: f64) -> Result<AllocDriverRef> {
    if !(lambda_tilde.is_finite() && lambda_tilde > 0.0) {
        return Err(invalid(format!("lambda tilde must be positive, got {lambda_tilde}")));
    }
    let base = driver_entropic(lambda)?;
    alloc_driver_f_family(base, format!("ent2:lt={lambda_tilde}"), None, move |_t, _zy, w| {
        dot(w, w) / (2.0 * lambda_tilde)
    })
}

// ---------------------------------------------------------------------------
// Probing

pub const PROBES: usize = 1000;
const PROBE_SEED: u64 = 0x9e37_79b9;
const PROBE_BOX: f64 = 4.0;
const PROBE_T: f64 = 10.0;

fn sample_z(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-PROBE_BOX..PROBE_BOX)).collect()
}

fn probe_dims(driver: &dyn Driver) -> Vec<usize> {
    match driver.dim() {
        Some(d) => vec![d],
        None => vec![1, 2],
    }
}

fn tol(scale: f64, base: f64) -> f64 {
    base * (1.0 + scale.abs())
}

/// Checks normalization, convexity, the subgradient inequality, the
/// Fenchel–Young equality at the selection and the Lipschitz bound on the
/// selection, on seeded probes in dimensions 1 and 2.
pub fn probe_driver(driver: &dyn Driver) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let name = driver.label();
    for dim in probe_dims(driver) {
        for i in 0..PROBES / 2 {
            let t = rng.random_range(0.0..PROBE_T);
            let z = if i == 0 { vec![0.0; dim] } else { sample_z(&mut rng, dim) };
            let u = sample_z(&mut rng, dim);
            let gz = driver.evaluate(t, &z);
            let gu = driver.evaluate(t, &u);

            if driver.is_normalized() {
                let g0 = driver.evaluate(t, &vec![0.0; dim]);
                if g0.abs() > 1e-12 {
                    return Err(invalid(format!("{name}: g({t}, 0) = {g0} but driver claims normalization")));
                }
            }

            let a: f64 = rng.random_range(0.0..1.0);
            let mix: Vec<f64> = z.iter().zip(&u).map(|(x, y)| a * x + (1.0 - a) * y).collect();
            let gm = driver.evaluate(t, &mix);
            let rhs = a * gz + (1.0 - a) * gu;
            if gm > rhs + tol(rhs, 1e-12) {
                return Err(invalid(format!("{name}: not convex between {z:?} and {u:?}")));
            }

            let q = driver.subgradient_vec(t, &z);
            let lower = gz + q.iter().zip(u.iter().zip(&z)).map(|(q, (a, b))| q * (a - b)).sum::<f64>();
            if gu < lower - tol(gu, 1e-10) {
                return Err(invalid(format!("{name}: subgradient inequality fails at z={z:?}, u={u:?}")));
            }

            let fy = dot(&q, &z) - driver.conjugate(t, &q);
            if !fy.is_finite() || (gz - fy).abs() > tol(gz, 1e-10) {
                return Err(invalid(format!(
                    "{name}: Fenchel–Young equality fails at z={z:?}: g={gz}, q·z - g*(q)={fy}"
                )));
            }

            if let Growth::Lipschitz(mu) = driver.growth() {
                if norm(&q) > mu * (1.0 + 1e-12) {
                    return Err(invalid(format!("{name}: selected subgradient {q:?} exceeds mu={mu}")));
                }
            }
        }
    }
    Ok(())
}

/// Checks `g_Λ(t, z, z) = g(t, z)` on seeded probes.
pub fn probe_diagonal(alloc: &dyn AllocDriver) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 1);
    let base = alloc.base();
    for dim in probe_dims(base.as_ref()) {
        for i in 0..PROBES / 2 {
            let t = rng.random_range(0.0..PROBE_T);
            let z = if i == 0 { vec![0.0; dim] } else { sample_z(&mut rng, dim) };
            let a = alloc.evaluate(t, &z, &z);
            let b = base.evaluate(t, &z);
            if (a - b).abs() > tol(b, 1e-12) {
                return Err(invalid(format!(
                    "{}: diagonal condition fails at z={z:?}: g_Λ={a}, g={b}",
                    alloc.label()
                )));
            }
        }
    }
    Ok(())
}
