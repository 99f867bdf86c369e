//! The monotone non-smooth nonlinearity `β`, its one-sided derivatives,
//! kink classification, and the mollified family `β_γ = β ⋆ ψ_γ`.

use crate::error::{Error, Result};

/// Pointwise monotone nonlinearity used by the PDE solvers.
///
/// `one_sided(z, band)` returns `(β'₋, β'₊)`; a point within `band` of a
/// kink is treated as sitting on it. Smooth nonlinearities return equal slopes.
pub trait Nonlinearity: Sync {
    fn value(&self, z: f64) -> f64;
    fn one_sided(&self, z: f64, band: f64) -> (f64, f64);
    /// Global Lipschitz constant.
    fn lipschitz(&self) -> f64;
}

/// Local shape of `β` around a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KinkKind {
    /// Right slope exceeds left slope.
    Convex,
    /// Left slope exceeds right slope.
    Concave,
}

/// Continuous non-decreasing piecewise-linear `β` with finitely many kinks.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearBeta {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    value_at_zero: f64,
    delta: f64,
    /// `β(z_k)`, cached for evaluation.
    knot_values: Vec<f64>,
    lipschitz: f64,
}

impl PiecewiseLinearBeta {
    /// Validates monotonicity, genuine kinks and disjoint `δ`-neighbourhoods.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, value_at_zero: f64, delta: f64) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidBeta(format!(
                "{} breakpoints need {} slopes, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len()
            )));
        }
        if breakpoints.iter().chain(&slopes).chain([&value_at_zero, &delta]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidBeta("non-finite entry".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidBeta(format!("kink half-width must be > 0, got {delta}")));
        }
        if let Some(m) = slopes.iter().find(|&&m| m < 0.0) {
            return Err(Error::InvalidBeta(format!("negative slope {m}: beta must be non-decreasing")));
        }
        for w in breakpoints.windows(2) {
            if w[1] - w[0] <= 2.0 * delta {
                return Err(Error::InvalidBeta(format!(
                    "breakpoints {} and {} are not separated by more than 2*delta",
                    w[0], w[1]
                )));
            }
        }
        for (k, z) in breakpoints.iter().enumerate() {
            if slopes[k] == slopes[k + 1] {
                return Err(Error::InvalidBeta(format!("equal slopes on both sides of breakpoint {z}")));
            }
        }
        let lipschitz = slopes.iter().copied().fold(0.0, f64::max);
        let mut beta = Self {
            breakpoints,
            slopes,
            value_at_zero,
            delta,
            knot_values: Vec::new(),
            lipschitz,
        };
        beta.knot_values = beta.breakpoints.iter().map(|&z| value_at_zero + beta.slope_integral(0.0, z)).collect();
        Ok(beta)
    }

    /// `β = max(0, ·)`.
    pub fn relu() -> Self {
        Self::new(vec![0.0], vec![0.0, 1.0], 0.0, 0.5).expect("valid")
    }

    /// `β = min(·, 0)`, monotone with a concave kink at 0.
    pub fn neg_part() -> Self {
        Self::new(vec![0.0], vec![1.0, 0.0], 0.0, 0.5).expect("valid")
    }

    /// Linear `β(z) = m z` (no kinks).
    pub fn linear(m: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![m], 0.0, 1.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `∫_a^b β'(t) dt` (signed).
    fn slope_integral(&self, a: f64, b: f64) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut total = 0.0;
        for (k, &m) in self.slopes.iter().enumerate() {
            let left = if k == 0 { f64::NEG_INFINITY } else { self.breakpoints[k - 1] };
            let right = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            let len = hi.min(right) - lo.max(left);
            if len > 0.0 {
                total += m * len;
            }
        }
        sign * total
    }

    pub fn eval(&self, z: f64) -> f64 {
        // Index of the open interval containing z (breakpoints ≤ z lie left).
        let idx = self.breakpoints.partition_point(|&b| b <= z);
        if idx == 0 {
            match self.breakpoints.first() {
                Some(&z0) => self.knot_values[0] + self.slopes[0] * (z - z0),
                None => self.value_at_zero + self.slopes[0] * z,
            }
        } else {
            self.knot_values[idx - 1] + self.slopes[idx] * (z - self.breakpoints[idx - 1])
        }
    }

    /// `β'₊(z) = β'(z; 1)`.
    pub fn slope_right(&self, z: f64) -> f64 {
        self.slopes[self.breakpoints.partition_point(|&b| b <= z)]
    }

    /// `β'₋(z) = −β'(z; −1)`.
    pub fn slope_left(&self, z: f64) -> f64 {
        self.slopes[self.breakpoints.partition_point(|&b| b < z)]
    }

    /// `β'(z; d) = β'₊(z) d⁺ + β'₋(z) d⁻`.
    pub fn dir_deriv(&self, z: f64, d: f64) -> f64 {
        self.slope_right(z) * d.max(0.0) + self.slope_left(z) * d.min(0.0)
    }

    /// Classifies an exact breakpoint.
    pub fn classify_kink(&self, z: f64) -> Result<KinkKind> {
        let k = self.breakpoints.iter().position(|&b| b == z).ok_or(Error::SmoothPoint(z))?;
        Ok(self.kink_kind(k))
    }

    fn kink_kind(&self, k: usize) -> KinkKind {
        if self.slopes[k + 1] > self.slopes[k] {
            KinkKind::Convex
        } else {
            KinkKind::Concave
        }
    }

    /// The kink within `band` of `z`, if any (kink neighbourhoods are disjoint).
    pub fn kink_near(&self, z: f64, band: f64) -> Option<(usize, KinkKind)> {
        let idx = self.breakpoints.partition_point(|&b| b < z);
        [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&k| k < self.breakpoints.len())
            .find(|&k| (self.breakpoints[k] - z).abs() <= band)
            .map(|k| (k, self.kink_kind(k)))
    }

    /// Distance from `z` to the nearest breakpoint (infinite when there are none).
    pub fn distance_to_kink(&self, z: f64) -> f64 {
        self.breakpoints.iter().fold(f64::INFINITY, |m, &b| m.min((b - z).abs()))
    }
}

impl Nonlinearity for PiecewiseLinearBeta {
    fn value(&self, z: f64) -> f64 {
        self.eval(z)
    }

    fn one_sided(&self, z: f64, band: f64) -> (f64, f64) {
        match self.kink_near(z, band) {
            Some((k, _)) => (self.slopes[k], self.slopes[k + 1]),
            None => (self.slope_left(z), self.slope_right(z)),
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Number of Gauss–Legendre nodes per panel.
pub const QUADRATURE_ORDER: usize = 64;

/// Fixed panels splitting `[−1, 1]` before kink preimages are inserted.
const BASE_PANELS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Gauss–Legendre nodes and weights on `[−1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// The even bump `ψ(s) = c_ψ exp(−1/(1 − s²))` on `(−1, 1)` with its quadrature.
#[derive(Clone, Debug)]
pub struct MollifierPsi {
    c_psi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for MollifierPsi {
    fn default() -> Self {
        Self::new()
    }
}

impl MollifierPsi {
    pub fn new() -> Self {
        let (nodes, weights) = gauss_legendre(QUADRATURE_ORDER);
        let mut psi = Self { c_psi: 1.0, nodes, weights };
        let mass: f64 = BASE_PANELS.windows(2).map(|w| psi.panel(w[0], w[1], |_| 1.0)).sum();
        psi.c_psi = 1.0 / mass;
        psi
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            0.0
        } else {
            self.c_psi * (-1.0 / (1.0 - s * s)).exp()
        }
    }

    /// `∫_a^b φ(s) ψ(s) ds` by one Gauss–Legendre panel.
    pub fn panel(&self, a: f64, b: f64, phi: impl Fn(f64) -> f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let t = mid + half * x;
            s += w * phi(t) * self.eval(t);
        }
        s * half
    }

    /// Panel boundaries on `[−1, 1]`: the base panels refined at `cuts`.
    fn panels(&self, cuts: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut pts: Vec<f64> = BASE_PANELS.to_vec();
        pts.extend(cuts.filter(|c| c.abs() < 1.0));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("mollification width must be > 0, got {gamma}")));
    }
    Ok(())
}

/// Kink preimages `s_k = (v − z_k)/γ` of the integrand `β(v − γs)`.
fn kink_preimages<'a>(beta: &'a PiecewiseLinearBeta, gamma: f64, v: f64) -> impl Iterator<Item = f64> + 'a {
    beta.breakpoints().iter().map(move |z| (v - z) / gamma)
}

/// `β_γ(v) = ∫ β(v − γs) ψ(s) ds`.
pub fn mollify(beta: &PiecewiseLinearBeta, psi: &MollifierPsi, gamma: f64, v: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(mollify_unchecked(beta, psi, gamma, v))
}

/// `β'_γ(v) = ∫ β'(v − γs) ψ(s) ds` with the a.e. slope of `β`.
pub fn mollify_deriv(beta: &PiecewiseLinearBeta, psi: &MollifierPsi, gamma: f64, v: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(mollify_deriv_unchecked(beta, psi, gamma, v))
}

fn mollify_unchecked(beta: &PiecewiseLinearBeta, psi: &MollifierPsi, gamma: f64, v: f64) -> f64 {
    if beta.distance_to_kink(v) >= gamma {
        // β is affine on [v − γ, v + γ] and ψ has zero first moment.
        return beta.eval(v);
    }
    let pts = psi.panels(kink_preimages(beta, gamma, v));
    pts.windows(2).map(|w| psi.panel(w[0], w[1], |s| beta.eval(v - gamma * s))).sum()
}

fn mollify_deriv_unchecked(beta: &PiecewiseLinearBeta, psi: &MollifierPsi, gamma: f64, v: f64) -> f64 {
    if beta.distance_to_kink(v) >= gamma {
        return beta.slope_right(v);
    }
    let pts = psi.panels(kink_preimages(beta, gamma, v));
    pts.windows(2)
        .map(|w| {
            // β' is constant on each panel; read it at the panel midpoint.
            let m = beta.slope_right(v - gamma * 0.5 * (w[0] + w[1]));
            m * psi.panel(w[0], w[1], |_| 1.0)
        })
        .sum()
}

/// `β_γ` as a smooth [`Nonlinearity`].
#[derive(Clone, Debug)]
pub struct MollifiedBeta {
    beta: PiecewiseLinearBeta,
    psi: MollifierPsi,
    gamma: f64,
}

impl MollifiedBeta {
    pub fn new(beta: PiecewiseLinearBeta, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { beta, psi: MollifierPsi::new(), gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn deriv(&self, v: f64) -> f64 {
        mollify_deriv_unchecked(&self.beta, &self.psi, self.gamma, v)
    }
}

impl Nonlinearity for MollifiedBeta {
    fn value(&self, z: f64) -> f64 {
        mollify_unchecked(&self.beta, &self.psi, self.gamma, z)
    }

    fn one_sided(&self, z: f64, _band: f64) -> (f64, f64) {
        let d = self.deriv(z);
        (d, d)
    }

    fn lipschitz(&self) -> f64 {
        self.beta.lipschitz()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_kink() -> PiecewiseLinearBeta {
        // Convex kink at −1, concave kink at 1.
        PiecewiseLinearBeta::new(vec![-1.0, 1.0], vec![0.5, 2.0, 0.25], 0.3, 0.4).unwrap()
    }

    /// Composite refinement of the same integral with many small panels.
    fn refined<F: Fn(f64) -> f64>(psi: &MollifierPsi, phi: F, cuts: &[f64]) -> f64 {
        let mut pts = vec![-1.0, 1.0];
        pts.extend(cuts.iter().copied().filter(|c| c.abs() < 1.0));
        pts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let n = 64;
            for i in 0..n {
                let a = w[0] + (w[1] - w[0]) * i as f64 / n as f64;
                let b = w[0] + (w[1] - w[0]) * (i + 1) as f64 / n as f64;
                total += psi.panel(a, b, &phi);
            }
        }
        total
    }

    #[test]
    fn relu_examples() {
        let b = PiecewiseLinearBeta::relu();
        assert_eq!(b.eval(-2.0), 0.0);
        assert_eq!(b.eval(3.0), 3.0);
        assert_eq!(b.eval(0.0), 0.0);
        assert_eq!(b.dir_deriv(0.0, 1.0), 1.0);
        assert_eq!(b.dir_deriv(0.0, -1.0), 0.0);
        assert_eq!(b.dir_deriv(5.0, -2.0), -2.0);
    }

    #[test]
    fn value_anchored_at_zero() {
        let b = two_kink();
        assert!((b.eval(0.0) - 0.3).abs() < 1e-15);
        assert!((b.eval(1.0) - 2.3).abs() < 1e-15);
        assert!((b.eval(-1.0) - (-1.7)).abs() < 1e-15);
        assert!((b.eval(-3.0) - (-2.7)).abs() < 1e-15);
        assert!((b.eval(3.0) - 2.8).abs() < 1e-15);
    }

    #[test]
    fn kink_classification() {
        assert_eq!(PiecewiseLinearBeta::relu().classify_kink(0.0).unwrap(), KinkKind::Convex);
        assert_eq!(PiecewiseLinearBeta::neg_part().classify_kink(0.0).unwrap(), KinkKind::Concave);
        assert!(matches!(PiecewiseLinearBeta::relu().classify_kink(1.0), Err(Error::SmoothPoint(_))));
    }

    #[test]
    fn one_sided_slopes_have_the_kink_sign_pattern() {
        // Convex: β'₊ > β'₋ ≥ 0; concave: β'₋ > β'₊ ≥ 0.
        let b = two_kink();
        for (k, &z) in b.breakpoints().iter().enumerate() {
            let (l, r) = (b.slope_left(z), b.slope_right(z));
            match b.classify_kink(z).unwrap() {
                KinkKind::Convex => assert!(r > l && l >= 0.0, "kink {k}"),
                KinkKind::Concave => assert!(l > r && r >= 0.0, "kink {k}"),
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(PiecewiseLinearBeta::new(vec![0.0], vec![0.0], 0.0, 0.1).is_err());
        assert!(PiecewiseLinearBeta::new(vec![0.0], vec![-1.0, 1.0], 0.0, 0.1).is_err());
        assert!(PiecewiseLinearBeta::new(vec![0.0], vec![1.0, 1.0], 0.0, 0.1).is_err());
        assert!(PiecewiseLinearBeta::new(vec![0.0, 0.1], vec![0.0, 1.0, 2.0], 0.0, 0.1).is_err());
        assert!(PiecewiseLinearBeta::new(vec![0.0], vec![0.0, 1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(QUADRATURE_ORDER);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
        for p in [2, 10, 60, 126] {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - 2.0 / (p as f64 + 1.0)).abs() < 1e-13, "degree {p}");
        }
    }

    #[test]
    fn psi_is_normalized_even_and_nonnegative() {
        let psi = MollifierPsi::new();
        let mass = refined(&psi, |_| 1.0, &[]);
        assert!((mass - 1.0).abs() < 1e-12);
        for s in [-0.99, -0.5, 0.0, 0.3, 0.9] {
            assert!(psi.eval(s) >= 0.0);
            assert_eq!(psi.eval(s), psi.eval(-s));
        }
        assert_eq!(psi.eval(1.0), 0.0);
        assert_eq!(psi.eval(-1.5), 0.0);
    }

    #[test]
    fn mollify_examples() {
        let b = PiecewiseLinearBeta::relu();
        let psi = MollifierPsi::new();
        let g = 0.1;
        assert_eq!(mollify(&b, &psi, g, -0.2).unwrap(), 0.0);
        assert!(mollify(&b, &psi, g, -0.1).unwrap().abs() < 1e-15);
        assert!((mollify(&b, &psi, g, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((mollify(&b, &psi, g, 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert!(mollify(&b, &psi, 0.0, 0.7).is_err());
        assert!((mollify_deriv(&b, &psi, g, 0.0).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(mollify_deriv(&b, &psi, g, 0.1).unwrap(), 1.0);
        assert_eq!(mollify_deriv(&b, &psi, g, -0.1).unwrap(), 0.0);
        assert!(mollify_deriv(&b, &psi, -1.0, 0.0).is_err());
    }

    #[test]
    fn quadrature_agrees_with_adaptive_refinement() {
        let b = two_kink();
        let psi = MollifierPsi::new();
        for &gamma in &[0.3, 0.05] {
            for i in 0..41 {
                let v = -1.5 + 3.0 * i as f64 / 40.0;
                let cuts: Vec<f64> = b.breakpoints().iter().map(|z| (v - z) / gamma).collect();
                let exact = refined(&psi, |s| b.eval(v - gamma * s), &cuts);
                let got = mollify(&b, &psi, gamma, v).unwrap();
                assert!((got - exact).abs() < 1e-10, "v = {v}: {got} vs {exact}");
                let exact_d = refined(&psi, |s| b.slope_right(v - gamma * s), &cuts);
                let got_d = mollify_deriv(&b, &psi, gamma, v).unwrap();
                assert!((got_d - exact_d).abs() < 1e-10, "v = {v}: {got_d} vs {exact_d}");
            }
        }
    }

    #[test]
    fn mollified_derivative_at_kink_is_slope_mean() {
        let b = two_kink();
        let psi = MollifierPsi::new();
        for &z in b.breakpoints() {
            let mean = 0.5 * (b.slope_left(z) + b.slope_right(z));
            for gamma in [0.1, 0.01, 0.001] {
                assert!((mollify_deriv(&b, &psi, gamma, z).unwrap() - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convexity_is_preserved_near_a_convex_kink() {
        let b = two_kink();
        let psi = MollifierPsi::new();
        let (z, d) = (-1.0, b.delta());
        let gamma = d / 4.0;
        let f = |v: f64| mollify(&b, &psi, gamma, v).unwrap();
        for i in 0..200 {
            let a = z - 0.75 * d + 1.5 * d * i as f64 / 200.0;
            let c = (a + 0.05 * d).min(z + 0.75 * d);
            let m = 0.5 * (a + c);
            assert!(f(m) <= 0.5 * (f(a) + f(c)) + 1e-13);
        }
    }

    proptest! {
        #[test]
        fn monotone_and_lipschitz(z1 in -5.0f64..5.0, z2 in -5.0f64..5.0) {
            let b = two_kink();
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(b.eval(lo) <= b.eval(hi));
            prop_assert!((b.eval(z1) - b.eval(z2)).abs() <= b.lipschitz() * (z1 - z2).abs() + 1e-14);
        }

        #[test]
        fn difference_quotients_reach_the_directional_derivative(z in -3.0f64..3.0, d in -2.0f64..2.0) {
            let b = two_kink();
            let dist = b.distance_to_kink(z);
            let tau = 0.5 * dist / (d.abs() + 1e-300);
            if tau > 1e-12 && tau < 1.0 {
                let q = (b.eval(z + tau * d) - b.eval(z)) / tau;
                prop_assert!((q - b.dir_deriv(z, d)).abs() <= 1e-9 * (1.0 + d.abs()) / tau.min(1.0));
            }
            // Exactly at a kink the quotient is exact for every small τ.
            for &zk in b.breakpoints() {
                let q = (b.eval(zk + 1e-3 * d) - b.eval(zk)) / 1e-3;
                prop_assert!((q - b.dir_deriv(zk, d)).abs() <= 1e-10);
            }
        }

        #[test]
        fn dir_deriv_is_positively_homogeneous(z in -3.0f64..3.0, d in -2.0f64..2.0, c in 0.0f64..10.0) {
            let b = two_kink();
            prop_assert!((b.dir_deriv(z, c * d) - c * b.dir_deriv(z, d)).abs() <= 1e-12 * (1.0 + c));
        }

        #[test]
        fn mollified_family_is_monotone_lipschitz_and_close(
            v1 in -3.0f64..3.0, v2 in -3.0f64..3.0, gexp in 1.0f64..3.0,
        ) {
            let b = two_kink();
            let psi = MollifierPsi::new();
            let gamma = 10f64.powf(-gexp);
            let (f1, f2) = (mollify(&b, &psi, gamma, v1).unwrap(), mollify(&b, &psi, gamma, v2).unwrap());
            let (lo, hi) = if v1 <= v2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(lo <= hi + 1e-14);
            prop_assert!((f1 - f2).abs() <= b.lipschitz() * (v1 - v2).abs() + 1e-12);
            prop_assert!((f1 - b.eval(v1)).abs() <= gamma * b.lipschitz());
            let d = mollify_deriv(&b, &psi, gamma, v1).unwrap();
            let slopes: Vec<f64> = [v1 - gamma, v1, v1 + gamma]
                .iter()
                .flat_map(|&t| [b.slope_left(t), b.slope_right(t)])
                .collect();
            let (smin, smax) = slopes.iter().fold((f64::INFINITY, 0.0f64), |(a, c), &s| (a.min(s), c.max(s)));
            prop_assert!(d >= smin - 1e-12 && d <= smax + 1e-12);
        }
    }
}
