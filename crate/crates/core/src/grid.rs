//! Time discretization, the recombining binomial lattice and seeded Gaussian
//! path ensembles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Uniform grid `t_k = k * T / N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("number of steps must be at least 1"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Grid index of `t`, if `t` lies on the grid (up to rounding).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.steps as f64 || (x - k).abs() > 1e-9 {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn build_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

/// Recombining binomial lattice for a one-dimensional Brownian motion.
///
/// Node `j` of level `k` (with `0 <= j <= k`) carries the state
/// `W(k, j) = (2j - k) * sqrt(dt)`. Its down child is `(k + 1, j)` and its up
/// child is `(k + 1, j + 1)`, each with probability 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeModel {
    grid: TimeGrid,
    sqrt_dt: f64,
}

impl TreeModel {
    pub fn new(grid: TimeGrid) -> Self {
        Self {
            grid,
            sqrt_dt: grid.dt().sqrt(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn nodes(&self, k: usize) -> usize {
        k + 1
    }

    pub fn state(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.sqrt_dt
    }

    pub fn level_states(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|j| self.state(k, j)).collect()
    }

    /// `(p_down, p_up)` under the reference measure.
    pub fn branch_probabilities(&self) -> (f64, f64) {
        (0.5, 0.5)
    }

    /// Total number of nodes on levels `0..=level`.
    pub fn node_count(&self, level: usize) -> usize {
        (level + 1) * (level + 2) / 2
    }
}

pub fn build_tree(grid: TimeGrid) -> TreeModel {
    TreeModel::new(grid)
}

const BLOCK_PATHS: usize = 1024;

/// Seeded Monte Carlo ensemble of `d`-dimensional Brownian paths.
///
/// Paths are generated in blocks of 1024; block `b` draws from the ChaCha8
/// stream `b` of the seed, so the ensemble does not depend on thread
/// scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    // [m][k][i], k in 0..N
    increments: Vec<f64>,
    // [m][k][i], k in 0..=N
    states: Vec<f64>,
}

impl PathEnsemble {
    pub fn generate(grid: TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<Self> {
        if paths == 0 {
            return Err(invalid("path count must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let n = grid.steps();
        let sd = grid.dt().sqrt();
        let per_path = n * dim;
        let mut increments = vec![0.0; paths * per_path];
        increments
            .par_chunks_mut(BLOCK_PATHS * per_path)
            .enumerate()
            .for_each(|(block, chunk)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(block as u64);
                for x in chunk.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *x = e * sd;
                }
            });
        let stride = (n + 1) * dim;
        let mut states = vec![0.0; paths * stride];
        states
            .par_chunks_mut(stride)
            .zip(increments.par_chunks(per_path))
            .for_each(|(s, inc)| {
                for k in 0..n {
                    for i in 0..dim {
                        s[(k + 1) * dim + i] = s[k * dim + i] + inc[k * dim + i];
                    }
                }
            });
        Ok(Self {
            grid,
            dim,
            paths,
            seed,
            increments,
            states,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment `B_{k+1} - B_k` of path `m`.
    pub fn increment(&self, m: usize, k: usize) -> &[f64] {
        let n = self.grid.steps();
        let start = (m * n + k) * self.dim;
        &self.increments[start..start + self.dim]
    }

    /// Value `B_k` of path `m`.
    pub fn state(&self, m: usize, k: usize) -> &[f64] {
        let n = self.grid.steps();
        let start = (m * (n + 1) + k) * self.dim;
        &self.states[start..start + self.dim]
    }

    /// Identity used to check that two solutions live on the same ensemble.
    pub fn fingerprint(&self) -> (u64, usize, usize, usize) {
        (self.seed, self.paths, self.dim, self.grid.steps())
    }
}

pub fn sample_paths(grid: TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<PathEnsemble> {
    PathEnsemble::generate(grid, dim, paths, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_points() {
        let g = build_grid(1.0, 4).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = build_grid(2.0, 1).unwrap();
        assert_eq!(g.points(), vec![0.0, 2.0]);
        assert!(build_grid(0.0, 4).is_err());
        assert!(build_grid(-1.0, 4).is_err());
        assert!(build_grid(1.0, 0).is_err());
        assert_eq!(build_grid(1.0, 4).unwrap().index_of(0.5), Some(2));
        assert_eq!(build_grid(1.0, 4).unwrap().index_of(0.3), None);
    }

    #[test]
    fn tree_states() {
        let tree = build_tree(build_grid(1.0, 2).unwrap());
        let s = tree.level_states(2);
        let h = 0.5f64.sqrt();
        assert_eq!(s.len(), 3);
        assert_abs_diff_eq!(s[0], -2.0 * h, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], 2.0 * h, epsilon = 1e-15);

        let tree = build_tree(build_grid(1.0, 1).unwrap());
        assert_eq!(tree.level_states(1), vec![-1.0, 1.0]);
        let (pd, pu) = tree.branch_probabilities();
        assert_eq!(pd + pu, 1.0);
    }

    #[test]
    fn tree_is_a_martingale_with_variance_dt() {
        let tree = build_tree(build_grid(1.3, 17).unwrap());
        let dt = tree.grid().dt();
        for k in 0..tree.steps() {
            for j in 0..=k {
                let w = tree.state(k, j);
                let up = tree.state(k + 1, j + 1);
                let down = tree.state(k + 1, j);
                assert_abs_diff_eq!(0.5 * (up + down), w, epsilon = 1e-14);
                let var = 0.5 * (up - w).powi(2) + 0.5 * (down - w).powi(2);
                assert_abs_diff_eq!(var, dt, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn ensembles_are_reproducible() {
        let g = build_grid(1.0, 5).unwrap();
        let a = sample_paths(g, 2, 3000, 7).unwrap();
        let b = sample_paths(g, 2, 3000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_paths(g, 2, 3000, 8).unwrap();
        assert_ne!(a.increments, c.increments);
        assert!(sample_paths(g, 1, 0, 1).is_err());
        assert!(sample_paths(g, 0, 10, 1).is_err());
    }

    #[test]
    fn ensemble_moments() {
        let g = build_grid(1.0, 4).unwrap();
        let m = 100_000;
        let e = sample_paths(g, 1, m, 42).unwrap();
        let dt = g.dt();
        for k in 0..4 {
            let xs: Vec<f64> = (0..m).map(|p| e.increment(p, k)[0]).collect();
            let mean = xs.iter().sum::<f64>() / m as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 0.02 * dt.sqrt(), "mean {mean}");
            assert!((var - dt).abs() < 5.0 / (m as f64).sqrt() * dt, "var {var}");
        }
        // cumulative sums
        let s = e.state(11, 3)[0];
        let manual: f64 = (0..3).map(|k| e.increment(11, k)[0]).sum();
        assert_abs_diff_eq!(s, manual, epsilon = 1e-14);
    }
}
