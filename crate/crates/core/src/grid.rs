//! Uniform finite-difference grid on a rectangle `D` with an interior
//! rectangular subdomain `E`, nodal fields, masks and masked quadrature.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Axis-aligned open rectangle `(x0, x1) × (y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))
    }

    /// Closed-rectangle membership with an absolute slack `tol`.
    pub fn contains_closed(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x0 - tol && x <= self.x1 + tol && y >= self.y0 - tol && y <= self.y1 + tol
    }
}

/// Nodal scalar function on the interior nodes of a [`Grid2D`], stored
/// row-major (`k = j * nx + i`). Boundary values are implicitly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// Wraps a vector, rejecting non-finite entries.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { values })
    }

    /// Samples `f(x1, x2)` at every interior node.
    pub fn from_fn(grid: &Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.node(i, j);
                values.push(f(x, y));
            }
        }
        Self { values }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Boolean node mask on a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        Self { bits: (0..n).map(f).collect() }
    }

    pub fn get(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn set(&mut self, k: usize, v: bool) {
        self.bits[k] = v;
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask { bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect() }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        Mask { bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect() }
    }

    /// `self ∖ other`.
    pub fn minus(&self, other: &Mask) -> Mask {
        Mask { bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect() }
    }

    pub fn not(&self) -> Mask {
        Mask { bits: self.bits.iter().map(|&a| !a).collect() }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }
}

/// Region selector for [`Grid2D::integrate`].
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    D,
    E,
    /// `D ∖ Ē`.
    DMinusE,
    Custom(&'a Mask),
}

/// A grid measure estimate with its resolution uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measure {
    pub value: f64,
    /// Perimeter-times-`h` band: the estimate is only meaningful up to this.
    pub band: f64,
}

impl Measure {
    pub fn zero() -> Self {
        Self { value: 0.0, band: 0.0 }
    }

    /// True when the measure is indistinguishable from zero at grid resolution.
    pub fn within_band(&self) -> bool {
        self.value <= self.band
    }
}

/// Uniform grid of `nx × ny` interior nodes on `domain`, with masks for `Ē`
/// and `D ∖ Ē` and the fraction of each node's dual cell covered by `E`.
#[derive(Clone, Debug)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub domain: Rect,
    pub e_rect: Rect,
    /// Nodes in the closed subdomain `Ē` (these carry the constraint `g ≤ 0`).
    pub mask_e: Mask,
    /// Nodes in `D ∖ Ē`.
    pub mask_de: Mask,
    /// `|dual cell ∩ E| / h²` per node.
    pub frac_e: Vec<f64>,
}

impl Grid2D {
    /// Builds the grid; `h = width / (nx + 1) = height / (ny + 1)` must agree.
    pub fn new(nx: usize, ny: usize, domain: Rect, e_rect: Rect) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!("node counts must be >= 3, got {nx}x{ny}")));
        }
        let (w, hgt) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
        if !(w > 0.0 && hgt > 0.0) {
            return Err(Error::InvalidGrid("domain rectangle is empty".into()));
        }
        if !(e_rect.x1 > e_rect.x0 && e_rect.y1 > e_rect.y0) {
            return Err(Error::InvalidGrid("E rectangle is empty".into()));
        }
        if !(e_rect.x0 > domain.x0
            && e_rect.x1 < domain.x1
            && e_rect.y0 > domain.y0
            && e_rect.y1 < domain.y1)
        {
            return Err(Error::InvalidGrid("E touches the boundary of D".into()));
        }
        let hx = w / (nx + 1) as f64;
        let hy = hgt / (ny + 1) as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::InvalidGrid(format!(
                "non-uniform aspect: h_x = {hx}, h_y = {hy}; choose counts so both agree"
            )));
        }
        let h = hx;
        let n = nx * ny;
        let snap = 1e-9 * h;
        let mut mask_e = Mask::empty(n);
        let mut frac_e = vec![0.0; n];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let x = domain.x0 + (i + 1) as f64 * h;
                let y = domain.y0 + (j + 1) as f64 * h;
                mask_e.set(k, e_rect.contains_closed(x, y, snap));
                let ox = overlap(x - 0.5 * h, x + 0.5 * h, e_rect.x0, e_rect.x1);
                let oy = overlap(y - 0.5 * h, y + 0.5 * h, e_rect.y0, e_rect.y1);
                frac_e[k] = (ox * oy) / (h * h);
            }
        }
        let mask_de = mask_e.not();
        Ok(Self { nx, ny, h, domain, e_rect, mask_e, mask_de, frac_e })
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.domain.x0 + (i + 1) as f64 * self.h,
            self.domain.y0 + (j + 1) as f64 * self.h,
        )
    }

    pub fn node_of(&self, k: usize) -> (f64, f64) {
        self.node(k % self.nx, k / self.nx)
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::FieldSize { expected: self.len(), got: v.len() });
        }
        Ok(())
    }

    /// Five-point `−Δ_h v` with zero Dirichlet extension.
    pub fn apply_laplacian(&self, v: &[f64]) -> Field {
        let (nx, ny) = (self.nx, self.ny);
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; self.len()];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let mut s = 4.0 * v[k];
                if i > 0 {
                    s -= v[k - 1];
                }
                if i + 1 < nx {
                    s -= v[k + 1];
                }
                if j > 0 {
                    s -= v[k - nx];
                }
                if j + 1 < ny {
                    s -= v[k + nx];
                }
                out[k] = s * inv_h2;
            }
        }
        Field { values: out }
    }

    /// Quadrature weight of node `k` for the given region.
    pub fn weight(&self, region: Region<'_>, k: usize) -> f64 {
        match region {
            Region::D => 1.0,
            Region::E => self.frac_e[k],
            Region::DMinusE => 1.0 - self.frac_e[k],
            Region::Custom(m) => {
                if m.get(k) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Midpoint-rule integral `h² Σ w_k v_k`, summed in fixed node order.
    pub fn integrate(&self, v: &[f64], region: Region<'_>) -> f64 {
        let mut s = 0.0;
        for (k, &vk) in v.iter().enumerate() {
            s += self.weight(region, k) * vk;
        }
        s * self.h * self.h
    }

    /// Discrete `L²(D)` inner product.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, b) in u.iter().zip(v) {
            s += a * b;
        }
        s * self.h * self.h
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.dot(v, v).sqrt()
    }

    /// Estimate of `μ(E)`.
    pub fn measure_e(&self) -> Measure {
        Measure {
            value: self.integrate(&vec![1.0; self.len()], Region::E),
            band: self.e_rect.perimeter() * self.h,
        }
    }

    /// Estimate of `μ(D ∖ Ē)` (geometric complement of the `E` estimate).
    pub fn measure_de(&self) -> Measure {
        Measure {
            value: self.domain.area() - self.measure_e().value,
            band: (self.domain.perimeter() + self.e_rect.perimeter()) * self.h,
        }
    }

    /// Node count times `h²`, with a band of (mask boundary edges)·`h²`.
    pub fn measure(&self, mask: &Mask) -> Measure {
        let h2 = self.h * self.h;
        let mut edges = 0usize;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                if !mask.get(k) {
                    continue;
                }
                let nbrs = [
                    (i > 0).then(|| k - 1),
                    (i + 1 < self.nx).then(|| k + 1),
                    (j > 0).then(|| k - self.nx),
                    (j + 1 < self.ny).then(|| k + self.nx),
                ];
                edges += nbrs.iter().filter(|n| n.map_or(true, |m| !mask.get(m))).count();
            }
        }
        Measure { value: mask.count() as f64 * h2, band: edges as f64 * h2 }
    }

    /// All nodes within Euclidean distance `radius` of some node of `mask`.
    pub fn dilate_mask(&self, mask: &Mask, radius: f64) -> Mask {
        assert!(radius >= 0.0, "dilation radius must be non-negative");
        let r = radius / self.h;
        let r2 = r * r + 1e-9;
        let reach = r.floor() as isize;
        if reach == 0 {
            return mask.clone();
        }
        let mut out = mask.clone();
        for k in mask.indices() {
            let (i0, j0) = ((k % self.nx) as isize, (k / self.nx) as isize);
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    if ((di * di + dj * dj) as f64) > r2 {
                        continue;
                    }
                    let (i, j) = (i0 + di, j0 + dj);
                    if i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny {
                        out.set(self.index(i as usize, j as usize), true);
                    }
                }
            }
        }
        out
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}
