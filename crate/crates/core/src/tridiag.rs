//! Thomas algorithm for tridiagonal and cyclic tridiagonal systems.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Field:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn magnitude(self) -> f64;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const PIVOT_FLOOR: f64 = 1e-300;

/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
/// For cyclic systems `lower[0]` couples to `x[n-1]` and `upper[n-1]` to `x[0]`;
/// otherwise those two entries are ignored.
#[derive(Clone, Debug)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Field> Tridiagonal<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T], cyclic: bool) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc = acc + self.lower[i] * x[i - 1];
                } else if cyclic {
                    acc = acc + self.lower[0] * x[n - 1];
                }
                if i + 1 < n {
                    acc = acc + self.upper[i] * x[i + 1];
                } else if cyclic {
                    acc = acc + self.upper[n - 1] * x[0];
                }
                acc
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[T], cyclic: bool) -> Result<Vec<T>> {
        if cyclic {
            self.solve_cyclic(rhs)
        } else {
            thomas(&self.lower, &self.diag, &self.upper, rhs)
        }
    }

    /// Sherman–Morrison reduction of the periodic system to two open ones.
    fn solve_cyclic(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        let corner_bottom = self.upper[n - 1]; // A[n-1][0]
        let corner_top = self.lower[0]; // A[0][n-1]
        let gamma = -self.diag[0];
        let mut diag = self.diag.clone();
        diag[0] = diag[0] - gamma;
        diag[n - 1] = diag[n - 1] - corner_bottom * corner_top / gamma;

        let x = thomas(&self.lower, &diag, &self.upper, rhs)?;
        let mut u = vec![T::zero(); n];
        u[0] = gamma;
        u[n - 1] = corner_bottom;
        let z = thomas(&self.lower, &diag, &self.upper, &u)?;

        let num = x[0] + corner_top * x[n - 1] / gamma;
        let den = T::one() + z[0] + corner_top * z[n - 1] / gamma;
        if den.magnitude() < PIVOT_FLOOR {
            return Err(Error::SingularSystem {
                row: 0,
                pivot: den.magnitude(),
            });
        }
        let fact = num / den;
        Ok(x.iter().zip(&z).map(|(&xi, &zi)| xi - fact * zi).collect())
    }
}

fn thomas<T: Field>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut pivot = diag[0];
    if pivot.magnitude() < PIVOT_FLOOR {
        return Err(Error::SingularSystem {
            row: 0,
            pivot: pivot.magnitude(),
        });
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot.magnitude() < PIVOT_FLOOR {
            return Err(Error::SingularSystem {
                row: i,
                pivot: pivot.magnitude(),
            });
        }
        if i + 1 < n {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] = x[i] - c[i] * next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_system(n: usize, seed: u64) -> (Tridiagonal<f64>, Vec<f64>) {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.lower[i] = next();
            a.upper[i] = next();
            a.diag[i] = 3.0 + next();
        }
        let x: Vec<f64> = (0..n).map(|_| next()).collect();
        (a, x)
    }

    #[test]
    fn open_solve_recovers_solution() {
        let (a, x) = random_system(40, 7);
        let b = a.apply(&x, false);
        let y = a.solve(&b, false).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_solve_recovers_solution() {
        let (a, x) = random_system(33, 11);
        let b = a.apply(&x, true);
        let y = a.solve(&b, true).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_cyclic_solve() {
        let n = 24;
        let mut a = Tridiagonal::<Complex64>::zeros(n);
        for i in 0..n {
            a.lower[i] = Complex64::new(-0.5, 0.1 * i as f64);
            a.upper[i] = Complex64::new(-0.5, -0.05);
            a.diag[i] = Complex64::new(2.0, 0.3);
        }
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let b = a.apply(&x, true);
        let y = a.solve(&b, true).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = Tridiagonal::<f64>::zeros(16);
        assert!(matches!(
            a.solve(&vec![1.0; 16], false),
            Err(Error::SingularSystem { row: 0, .. })
        ));
    }
}
