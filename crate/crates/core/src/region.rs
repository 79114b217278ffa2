//! Box regions: products of closed intervals, possibly degenerate.

use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::defaults::{GRID_CAP, GRID_PER_AXIS, GRID_SEED};

pub type Point = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("a region needs at least one axis")]
    ZeroDimensional,
    #[error("axis {axis}: bounds [{lo}, {hi}] are not an interval")]
    InvalidBounds { axis: usize, lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Sampling parameters for the tensor grid over a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub per_axis: usize,
    pub cap: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            per_axis: GRID_PER_AXIS,
            cap: GRID_CAP,
            seed: GRID_SEED,
        }
    }
}

impl GridSpec {
    pub fn with_per_axis(per_axis: usize) -> Self {
        Self {
            per_axis,
            ..Self::default()
        }
    }
}

/// An axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]` with `lo_i <= hi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    bounds: Vec<(f64, f64)>,
}

impl Region {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, RegionError> {
        if bounds.is_empty() {
            return Err(RegionError::ZeroDimensional);
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(RegionError::InvalidBounds { axis, lo, hi });
            }
        }
        Ok(Self { bounds })
    }

    /// `[lo, hi]` as a one-dimensional region.
    pub fn interval(lo: f64, hi: f64) -> Result<Self, RegionError> {
        Self::new(vec![(lo, hi)])
    }

    /// The unit cube `[0,1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::new(vec![(0.0, 1.0); dim]).expect("unit cube with dim >= 1")
    }

    /// The one-point region `{p}`.
    pub fn point(p: &[f64]) -> Result<Self, RegionError> {
        Self::new(p.iter().map(|&v| (v, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn is_degenerate_axis(&self, axis: usize) -> bool {
        let (lo, hi) = self.bounds[axis];
        lo == hi
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), RegionError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(RegionError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    /// `lo_i - tol <= x_i <= hi_i + tol` on every axis.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, RegionError> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x, tol))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64], tol: f64) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| lo - tol <= v && v <= hi + tol)
    }

    /// Max-norm distance by which `x` lies outside the box (0 inside).
    pub fn excess(&self, x: &[f64]) -> f64 {
        self.bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `self ⊆ other` axis-wise, with slack `tol`.
    pub fn is_subbox_of(&self, other: &Region, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(&(a, b), &(c, d))| c - tol <= a && b <= d + tol)
    }

    pub fn approx_eq(&self, other: &Region, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(&(a, b), &(c, d))| (a - c).abs() <= tol && (b - d).abs() <= tol)
    }

    /// Equispaced coordinates on one axis, endpoints included. Degenerate
    /// axes contribute a single coordinate.
    pub fn axis_samples(&self, axis: usize, per_axis: usize) -> Vec<f64> {
        let (lo, hi) = self.bounds[axis];
        if lo == hi || per_axis <= 1 {
            return vec![if per_axis <= 1 { 0.5 * (lo + hi) } else { lo }];
        }
        let n = per_axis - 1;
        (0..=n)
            .map(|k| {
                if k == n {
                    hi
                } else {
                    lo + (hi - lo) * (k as f64) / (n as f64)
                }
            })
            .collect()
    }

    /// The standard sample grid (17 points per axis, capped at 10^5).
    pub fn standard_grid(&self) -> Vec<Point> {
        self.grid(GridSpec::default())
    }

    /// Full tensor grid in lexicographic order, or a seeded random subset of
    /// `spec.cap` grid points (kept in lexicographic order) when it is larger.
    pub fn grid(&self, spec: GridSpec) -> Vec<Point> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|a| self.axis_samples(a, spec.per_axis))
            .collect();
        let total = axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.len()));
        let point_at = |mut flat: usize| -> Point {
            let mut p = vec![0.0; axes.len()];
            for (i, axis) in axes.iter().enumerate().rev() {
                p[i] = axis[flat % axis.len()];
                flat /= axis.len();
            }
            p
        };
        match total {
            Some(total) if total <= spec.cap => (0..total).map(point_at).collect(),
            _ => {
                let total = total.unwrap_or(usize::MAX);
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let mut picks = sample(&mut rng, total, spec.cap).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(point_at).collect()
            }
        }
    }

    /// Smallest box containing all `points`.
    pub fn bounding(points: &[Point]) -> Result<Self, RegionError> {
        let dim = points.first().map_or(0, Vec::len);
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for p in points {
            if p.len() != dim {
                return Err(RegionError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            for (b, &v) in bounds.iter_mut().zip(p) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Self::new(bounds)
    }

    /// The `2^dim` corners (degenerate axes counted once).
    pub fn corners(&self) -> Vec<Point> {
        self.grid(GridSpec {
            per_axis: 2,
            cap: usize::MAX,
            seed: 0,
        })
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "[{lo}, {hi}]")?;
        }
        Ok(())
    }
}

/// Max-norm distance between two points of equal length.
pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
