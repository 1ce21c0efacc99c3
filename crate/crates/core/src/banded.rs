//! Symmetric banded storage with an in-place Cholesky factorization.
//!
//! Structured meshes numbered row by row give stiffness matrices whose
//! half-bandwidth grows like `n`, so a band solver costs `O(N b²)` to factor
//! and `O(N b)` per solve with no fill outside the band.

use crate::error::{Error, Result};

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`.
/// Entry `(i, j)` with `i - bw <= j <= i` lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSym {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Value at `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)`. Only one triangle is
    /// stored, so callers add each unordered pair once per contribution.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for j in lo..i {
                let a = row[j + self.bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
        y
    }

    /// Quadratic/bilinear form `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Cholesky factor `L` with `A = L Lᵀ`, stored in the same band layout.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in klo..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::FactorizationFailure { pivot: i, value: s });
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, data: l })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest pivot of the factor (all pivots are positive by construction).
    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * (self.bw + 1) + self.bw])
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut x = b.to_vec();
        // L y = b
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.data[i * w + (k + bw - i)] * x[k];
            }
            x[i] = s / self.data[i * w + bw];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            x[i] /= self.data[i * w + bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                x[k] -= self.data[i * w + (k + bw - i)] * xi;
            }
        }
        x
    }
}
