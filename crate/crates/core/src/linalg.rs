//! Banded Cholesky factorization for the five-point operators.

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Symmetric positive definite band matrix stored as its lower band, factored in place.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds entries `(i, i − bw) ..= (i, i)`.
    data: Vec<f64>,
}

impl BandedCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * (self.bw + 1) + (j + self.bw - i)] = v;
    }

    /// Factors `−Δ_h + diag(d)` on `grid` (bandwidth `nx`).
    pub fn five_point(grid: &Grid2D, diag: &[f64]) -> Result<Self> {
        let (nx, n) = (grid.nx, grid.len());
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let mut m = Self { n, bw: nx, data: vec![0.0; n * (nx + 1)] };
        for k in 0..n {
            m.set(k, k, 4.0 * inv_h2 + diag[k]);
            if k % nx > 0 {
                m.set(k, k - 1, -inv_h2);
            }
            if k >= nx {
                m.set(k, k - nx, -inv_h2);
            }
        }
        m.factor()?;
        Ok(m)
    }

    fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.at(i, j);
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= self.at(i, k) * self.at(j, k);
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Factorization(format!("non-positive pivot {s} at row {i}")));
                    }
                    self.set(i, i, s.sqrt());
                } else {
                    let d = self.at(j, j);
                    self.set(i, j, s / d);
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_lu() {
        let g = Grid2D::new(7, 7, Rect::unit(), Rect::new(0.3, 0.7, 0.3, 0.7)).unwrap();
        let n = g.len();
        let diag: Vec<f64> = (0..n).map(|k| (k % 5) as f64 * 0.7).collect();
        let chol = BandedCholesky::five_point(&g, &diag).unwrap();
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = g.apply_laplacian(&e);
            for i in 0..n {
                a[(i, k)] = col[i] + if i == k { diag[k] } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let x = chol.solve(&b);
        let dense = a.lu().solve(&DVector::from_vec(b)).unwrap();
        for k in 0..n {
            assert!((x[k] - dense[k]).abs() <= 1e-12 * (1.0 + dense[k].abs()));
        }
    }
}
