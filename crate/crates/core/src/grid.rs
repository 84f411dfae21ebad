//! One-dimensional configuration-space grids.
//!
//! A line grid has `n_points` nodes including both end points; a ring grid
//! has `n_points` nodes on `[x_min, x_max)` with `x_max` identified with
//! `x_min`. Faces sit between consecutive nodes: `n_points - 1` of them on a
//! line and `n_points` on a ring (the last face joins node `n-1` to node 0).

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Line,
    Ring,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain1D {
    kind: DomainKind,
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Domain1D {
    pub fn new(kind: DomainKind, x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(Error::InvalidDomain(format!(
                "n_points = {n_points} is below the minimum of {MIN_POINTS}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidDomain(format!(
                "need finite x_max > x_min, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            kind,
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn line(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        Self::new(DomainKind::Line, x_min, x_max, n_points)
    }

    pub fn ring(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        Self::new(DomainKind::Ring, x_min, x_max, n_points)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn is_ring(&self) -> bool {
        self.kind == DomainKind::Ring
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        match self.kind {
            DomainKind::Ring => self.length() / self.n_points as f64,
            DomainKind::Line => self.length() / (self.n_points - 1) as f64,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn n_faces(&self) -> usize {
        match self.kind {
            DomainKind::Ring => self.n_points,
            DomainKind::Line => self.n_points - 1,
        }
    }

    /// Position of face `f`, halfway between node `f` and its right neighbour.
    pub fn face_x(&self, f: usize) -> f64 {
        self.x(f) + 0.5 * self.dx()
    }

    /// Right neighbour of face `f` (wraps on a ring).
    pub fn face_right(&self, f: usize) -> usize {
        if f + 1 == self.n_points {
            0
        } else {
            f + 1
        }
    }

    /// Maps a ring coordinate into `[x_min, x_max)`. Identity on a line.
    pub fn wrap(&self, x: f64) -> f64 {
        if !self.is_ring() {
            return x;
        }
        let l = self.length();
        let mut y = (x - self.x_min).rem_euclid(l) + self.x_min;
        if y >= self.x_max {
            y = self.x_min;
        }
        y
    }

    /// Cell containing `x`: returns `(left, right, frac)` with
    /// `x = x_left + frac * dx`. Line positions are clamped to the grid.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, usize, f64) {
        let n = self.n_points;
        let s = (x - self.x_min) / self.dx();
        match self.kind {
            DomainKind::Ring => {
                let s = s.rem_euclid(n as f64);
                let mut i = s.floor() as usize;
                if i >= n {
                    i = n - 1;
                }
                let frac = s - i as f64;
                (i, if i + 1 == n { 0 } else { i + 1 }, frac)
            }
            DomainKind::Line => {
                let s = s.clamp(0.0, (n - 1) as f64);
                let mut i = s.floor() as usize;
                if i >= n - 1 {
                    i = n - 2;
                }
                (i, i + 1, s - i as f64)
            }
        }
    }

    /// Piecewise-linear interpolation of nodal values.
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (i, j, f) = self.locate(x);
        values[i] + f * (values[j] - values[i])
    }

    /// Trapezoidal quadrature weight of node `i`. On a ring every weight is `dx`.
    pub fn quad_weight(&self, i: usize) -> f64 {
        let dx = self.dx();
        match self.kind {
            DomainKind::Ring => dx,
            DomainKind::Line if i == 0 || i + 1 == self.n_points => 0.5 * dx,
            DomainKind::Line => dx,
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.quad_weight(i))
            .sum()
    }

    /// Second-order derivative of a real nodal function: central differences
    /// inside (periodic on a ring), one-sided second-order stencils at line ends.
    pub fn gradient(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        let h = self.dx();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = match (self.kind, i) {
                (DomainKind::Ring, _) => {
                    let l = values[(i + n - 1) % n];
                    let r = values[(i + 1) % n];
                    (r - l) / (2.0 * h)
                }
                (DomainKind::Line, 0) => {
                    (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
                }
                (DomainKind::Line, i) if i + 1 == n => {
                    (3.0 * values[i] - 4.0 * values[i - 1] + values[i - 2]) / (2.0 * h)
                }
                (DomainKind::Line, i) => (values[i + 1] - values[i - 1]) / (2.0 * h),
            };
        }
        out
    }

    pub fn same_grid(&self, other: &Domain1D) -> bool {
        self == other
    }
}
