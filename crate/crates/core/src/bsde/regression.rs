//! Ridge least squares with an unpenalized intercept.
//!
//! Columns are centered and scaled to unit RMS before the ridge term is
//! added, so the regularization is scale free and a constant target is
//! reproduced exactly. All reductions run over fixed-size chunks that are
//! combined in index order, so results do not depend on the thread pool.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Row-major `rows × cols` feature matrix.
pub(crate) struct Design<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

fn chunked_sum<F>(rows: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = (0..rows.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for r in c * CHUNK..((c + 1) * CHUNK).min(rows) {
                f(r, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Deterministic mean.
pub(crate) fn mean(values: &[f64]) -> f64 {
    chunked_sum(values.len(), 1, |r, acc| acc[0] += values[r])[0] / values.len() as f64
}

/// Deterministic sample standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let ss = chunked_sum(n, 1, |r, acc| acc[0] += (values[r] - m).powi(2))[0];
    (ss / (n - 1) as f64).sqrt()
}

/// Fitted values `Ê[target | features]` for each target, plus the number of
/// columns kept.
pub(crate) fn fit(design: &Design<'_>, targets: &[&[f64]], ridge: f64) -> Result<(Vec<Vec<f64>>, usize)> {
    let m = design.rows;
    let p = design.cols;
    let r = targets.len();
    let x = design.data;
    let nf = m as f64;

    let sums = chunked_sum(m, p + r, |row, acc| {
        for c in 0..p {
            acc[c] += x[row * p + c];
        }
        for (t, tv) in targets.iter().enumerate() {
            acc[p + t] += tv[row];
        }
    });
    let mu: Vec<f64> = sums.iter().map(|s| s / nf).collect();

    // centered second moments: p×p Gram followed by p×r cross terms
    let moments = chunked_sum(m, p * p + p * r, |row, acc| {
        let xr = &x[row * p..(row + 1) * p];
        for a in 0..p {
            let xa = xr[a] - mu[a];
            for b in a..p {
                acc[a * p + b] += xa * (xr[b] - mu[b]);
            }
            for (t, tv) in targets.iter().enumerate() {
                acc[p * p + a * r + t] += xa * (tv[row] - mu[p + t]);
            }
        }
    });

    let keep: Vec<usize> = (0..p)
        .filter(|&a| {
            let var = moments[a * p + a] / nf;
            var > 1e-24 * (1.0 + mu[a] * mu[a])
        })
        .collect();
    let q = keep.len();
    let scale: Vec<f64> = keep.iter().map(|&a| (moments[a * p + a] / nf).sqrt()).collect();

    let mut beta = vec![vec![0.0; q]; r];
    if q > 0 {
        let mut g = DMatrix::<f64>::zeros(q, q);
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                g[(i, j)] = moments[lo * p + hi] / (nf * scale[i] * scale[j]);
            }
            g[(i, i)] += ridge;
        }
        let chol = g.clone().cholesky().ok_or_else(|| {
            let eig = g.clone().symmetric_eigen();
            let lo = eig.eigenvalues.min();
            let hi = eig.eigenvalues.max();
            Error::NumericalFailure(format!(
                "regression Gram matrix is not positive definite despite ridge {ridge}: \
                 eigenvalues in [{lo:e}, {hi:e}], condition {:e}",
                hi / lo.abs().max(f64::MIN_POSITIVE)
            ))
        })?;
        for (t, bt) in beta.iter_mut().enumerate() {
            let rhs = DVector::from_iterator(
                q,
                keep.iter()
                    .enumerate()
                    .map(|(i, &a)| moments[p * p + a * r + t] / (nf * scale[i])),
            );
            let sol = chol.solve(&rhs);
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure(
                    "regression produced non-finite coefficients".into(),
                ));
            }
            bt.copy_from_slice(sol.as_slice());
        }
    }

    let fitted: Vec<Vec<f64>> = (0..r)
        .map(|t| {
            let ybar = mu[p + t];
            let bt = &beta[t];
            (0..m)
                .into_par_iter()
                .map(|row| {
                    let xr = &x[row * p..(row + 1) * p];
                    let mut v = ybar;
                    for (i, &a) in keep.iter().enumerate() {
                        v += bt[i] * (xr[a] - mu[a]) / scale[i];
                    }
                    v
                })
                .collect()
        })
        .collect();
    Ok((fitted, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_fit() {
        let m = 100;
        let data: Vec<f64> = (0..m).flat_map(|i| {
            let x = i as f64 / 10.0;
            [x, x * x]
        }).collect();
        let y: Vec<f64> = (0..m).map(|i| {
            let x = i as f64 / 10.0;
            1.0 + 2.0 * x - 0.5 * x * x
        }).collect();
        let d = Design { rows: m, cols: 2, data: &data };
        let (f, q) = fit(&d, &[&y], 1e-14).unwrap();
        assert_eq!(q, 2);
        for (a, b) in f[0].iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_target_is_exact() {
        let m = 10_000;
        let data: Vec<f64> = (0..m).map(|i| (i as f64).sin()).collect();
        let y = vec![3.25; m];
        let d = Design { rows: m, cols: 1, data: &data };
        let (f, _) = fit(&d, &[&y], 1e-8).unwrap();
        assert!(f[0].iter().all(|&v| (v - 3.25).abs() < 1e-14));
    }

    #[test]
    fn constant_columns_are_dropped() {
        let m = 50;
        let data: Vec<f64> = (0..m).flat_map(|i| [1.0, i as f64]).collect();
        let y: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let d = Design { rows: m, cols: 2, data: &data };
        let (_, q) = fit(&d, &[&y], 1e-8).unwrap();
        assert_eq!(q, 1);
    }

    #[test]
    fn deterministic_reductions() {
        let v: Vec<f64> = (0..100_003).map(|i| ((i * 7919) % 1000) as f64 * 1e-3).collect();
        assert_eq!(mean(&v).to_bits(), mean(&v).to_bits());
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
