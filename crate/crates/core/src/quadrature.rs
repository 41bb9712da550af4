//! Gauss–Legendre rules on `(0, 1)`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// An `n`-point Gauss–Legendre rule mapped to `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::gauss_legendre(32).expect("32-point rule")
    }
}

impl QuadratureSpec {
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 || n > 512 {
            return Err(invalid(format!("quadrature size must be in 1..=512, got {n}")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_rules() {
        let q = QuadratureSpec::gauss_legendre(1).unwrap();
        assert_eq!(q.nodes(), &[0.5]);
        assert_abs_diff_eq!(q.weights()[0], 1.0, epsilon = 1e-15);
        let q = QuadratureSpec::gauss_legendre(2).unwrap();
        assert_abs_diff_eq!(q.nodes()[0], 0.5 - 0.5 / 3f64.sqrt(), epsilon = 1e-15);
        assert!(QuadratureSpec::gauss_legendre(0).is_err());
    }

    #[test]
    fn exact_for_polynomials() {
        for n in [3usize, 8, 32] {
            let q = QuadratureSpec::gauss_legendre(n).unwrap();
            assert_abs_diff_eq!(q.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for deg in 0..2 * n {
                let v = q.integrate(|x| x.powi(deg as i32));
                assert_abs_diff_eq!(v, 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
            }
            assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(q.nodes().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn smooth_integrand() {
        let q = QuadratureSpec::default();
        assert_eq!(q.len(), 32);
        assert_abs_diff_eq!(q.integrate(f64::exp), 1f64.exp() - 1.0, epsilon = 1e-14);
    }
}
