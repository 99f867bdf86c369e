//! The control space `W = L²(D) ∩ H^s(D ∖ Ē)`: Gram operator, inner product,
//! Riesz map and the projection onto `F = {g ≤ 0 on E}`.
//!
//! Discretely `W = h² I + h² diag(1 − frac_E) + G`, where `G` is the dense
//! fractional Gram block acting only on nodes of `D ∖ Ē`. Nodes of `Ē` are
//! therefore decoupled (diagonal), which makes the pointwise clamp onto `F`
//! also the `W`-metric projection on this discretization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};

/// Largest `D ∖ Ē` node count for which the dense Gram is assembled.
pub const MAX_DENSE_NODES: usize = 100_000;

#[derive(Clone, Debug)]
pub struct WGram {
    s: f64,
    h: f64,
    n: usize,
    /// Diagonal `L²(D) + L²(D∖Ē)` mass per node.
    mass: Vec<f64>,
    /// Indices of the `D ∖ Ē` nodes, in grid order.
    de_nodes: Vec<usize>,
    /// Seminorm block on `de_nodes` (symmetric positive semidefinite).
    frac_gram: DMatrix<f64>,
    /// Factorization of `diag(mass) + frac_gram` on `de_nodes`.
    chol: Cholesky<f64, Dyn>,
}

/// Dense Gagliardo matrix `2h⁴ (diag(Σ_j w_ij) − w)` with
/// `w_ij = |x_i − x_j|^{−(2+2σ)}`, so that `uᵀ G u = h⁴ Σ_{i≠j} w_ij (u_i − u_j)²`.
fn gagliardo_matrix(points: &[(f64, f64)], sigma: f64, h: f64) -> DMatrix<f64> {
    let m = points.len();
    let c = 2.0 * h.powi(4);
    let expo = -(1.0 + sigma);
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i == j {
                continue;
            }
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            let w = (dx * dx + dy * dy).powf(expo);
            g[(i, j)] = -c * w;
            diag += w;
        }
        g[(i, i)] = c * diag;
    }
    g
}

impl WGram {
    pub fn new(grid: &Grid2D, s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 2.0 && s != 1.0) {
            return Err(Error::InvalidParameter(format!("smoothness s must lie in (0,1) or (1,2), got {s}")));
        }
        let de_nodes: Vec<usize> = grid.mask_de.indices().collect();
        if de_nodes.len() > MAX_DENSE_NODES {
            return Err(Error::GramTooLarge(de_nodes.len()));
        }
        let h = grid.h;
        let h2 = h * h;
        let mass: Vec<f64> = grid.frac_e.iter().map(|fr| h2 * (2.0 - fr)).collect();
        let frac_gram = if s < 1.0 {
            let pts: Vec<(f64, f64)> = de_nodes.iter().map(|&k| grid.node_of(k)).collect();
            gagliardo_matrix(&pts, s, h)
        } else {
            Self::gradient_gram(grid, &de_nodes, s - 1.0)
        };
        let mut block = frac_gram.clone();
        for (a, &k) in de_nodes.iter().enumerate() {
            block[(a, a)] += mass[k];
        }
        let chol = Cholesky::new(block)
            .ok_or_else(|| Error::Factorization("W-Gram block is not positive definite".into()))?;
        Ok(Self { s, h, n: grid.len(), mass, de_nodes, frac_gram, chol })
    }

    /// `H¹` seminorm plus order-`σ` Gagliardo seminorms of the forward
    /// difference quotients, each located at its edge midpoint.
    fn gradient_gram(grid: &Grid2D, de_nodes: &[usize], sigma: f64) -> DMatrix<f64> {
        let h = grid.h;
        let m = de_nodes.len();
        let mut local = vec![usize::MAX; grid.len()];
        for (a, &k) in de_nodes.iter().enumerate() {
            local[k] = a;
        }
        let mut total = DMatrix::zeros(m, m);
        for (di, dj) in [(1usize, 0usize), (0, 1)] {
            let mut rows: Vec<(usize, usize)> = Vec::new();
            let mut mids = Vec::new();
            for j in 0..grid.ny - dj {
                for i in 0..grid.nx - di {
                    let (k0, k1) = (grid.index(i, j), grid.index(i + di, j + dj));
                    if local[k0] != usize::MAX && local[k1] != usize::MAX {
                        rows.push((local[k0], local[k1]));
                        let (x0, y0) = grid.node(i, j);
                        mids.push((x0 + 0.5 * h * di as f64, y0 + 0.5 * h * dj as f64));
                    }
                }
            }
            let mut d = DMatrix::zeros(rows.len(), m);
            for (e, &(a, b)) in rows.iter().enumerate() {
                d[(e, a)] = -1.0 / h;
                d[(e, b)] = 1.0 / h;
            }
            let gs = gagliardo_matrix(&mids, sigma, h);
            total += d.transpose() * (gs * &d) + d.transpose() * &d * (h * h);
        }
        total
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn de_nodes(&self) -> &[usize] {
        &self.de_nodes
    }

    pub fn frac_gram(&self) -> &DMatrix<f64> {
        &self.frac_gram
    }

    fn gather(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.de_nodes.len(), self.de_nodes.iter().map(|&k| u[k]))
    }

    /// `(u, v)_W`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        assert!(u.len() == self.n && v.len() == self.n, "field length mismatch");
        let mut s = 0.0;
        for k in 0..self.n {
            s += self.mass[k] * u[k] * v[k];
        }
        s + self.seminorm_inner(u, v)
    }

    /// Bilinear form of the seminorm block alone, symmetrized so that
    /// swapping the arguments is exact in floating point.
    pub fn seminorm_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let (ud, vd) = (self.gather(u), self.gather(v));
        if std::ptr::eq(u, v) {
            return ud.dot(&(&self.frac_gram * vd));
        }
        0.5 * (ud.dot(&(&self.frac_gram * &vd)) + vd.dot(&(&self.frac_gram * &ud)))
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Solves `(r, v)_W = (q, v)_{L²(D)}` for all `v`.
    pub fn riesz(&self, q: &[f64]) -> Field {
        assert_eq!(q.len(), self.n, "field length mismatch");
        let h2 = self.h * self.h;
        let mut r: Vec<f64> = (0..self.n).map(|k| h2 * q[k] / self.mass[k]).collect();
        let rhs = self.gather(q) * h2;
        let sol = self.chol.solve(&rhs);
        for (a, &k) in self.de_nodes.iter().enumerate() {
            r[k] = sol[a];
        }
        Field::from_vec(r).expect("finite data yields a finite solve")
    }

    /// Applies the Gram operator divided by `h²`: the `L²` density of `(u, ·)_W`.
    pub fn density(&self, u: &[f64]) -> Field {
        let h2 = self.h * self.h;
        let mut out: Vec<f64> = (0..self.n).map(|k| self.mass[k] * u[k] / h2).collect();
        let gu = &self.frac_gram * self.gather(u);
        for (a, &k) in self.de_nodes.iter().enumerate() {
            out[k] += gu[a] / h2;
        }
        Field::from_vec(out).expect("finite")
    }
}

pub fn build_w_gram(grid: &Grid2D, s: f64) -> Result<WGram> {
    WGram::new(grid, s)
}

pub fn w_inner(gram: &WGram, u: &[f64], v: &[f64]) -> f64 {
    gram.inner(u, v)
}

pub fn riesz(gram: &WGram, q: &[f64]) -> Field {
    gram.riesz(q)
}

/// Clamps `g` to `≤ 0` on the nodes of `Ē`, leaving `D ∖ Ē` untouched.
pub fn project_f(g: &[f64], grid: &Grid2D) -> Field {
    let v = g.iter().enumerate().map(|(k, &x)| if grid.mask_e.get(k) { x.min(0.0) } else { x }).collect();
    Field::from_vec(v).expect("clamping preserves finiteness")
}

/// True when `g ≤ 0` at every node of `Ē`.
pub fn is_feasible(g: &[f64], grid: &Grid2D) -> bool {
    grid.mask_e.indices().all(|k| g[k] <= 0.0)
}
