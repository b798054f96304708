//! Symmetric kernels Φ: (ℝ^d)^k → ℂ with their derivative blocks.
//!
//! Block conventions: `grad1` is ∇_{x₁}Φ, `hess11` is ∇²_{x₁x₁}Φ and `hess12`
//! has entries `∂²Φ/∂(x₁)_i∂(x₂)_j`. Derivatives in other slots follow from
//! symmetry by moving the slots of interest to the front.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::linalg::{dot, factorial, norm_sq, CMat};
use crate::measure::Measure;
use crate::{Error, Result, C64};

pub type KernelRef = Arc<dyn SymmetricKernel>;

/// Largest arity for which permutation sums are materialized.
pub const MAX_SYMMETRIZE_ARITY: usize = 8;

pub trait SymmetricKernel: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, x: &[&[f64]]) -> C64;
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64>;
    fn hess11(&self, x: &[&[f64]]) -> CMat;
    fn hess12(&self, x: &[&[f64]]) -> CMat;

    /// Declared bound on the operator norm of the full Hessian on (ℝ^d)^k.
    fn sup_hess(&self) -> Option<f64> {
        None
    }

    /// Every slot of the support lies in the ball of this radius.
    fn support_radius(&self) -> Option<f64> {
        None
    }

    /// Closed form of `F_Φ[μ]` when one exists.
    fn closed_form_functional(&self, _m: &dyn Measure) -> Option<C64> {
        None
    }
}

/// `x` with slot `s` moved to the front (by transposition).
pub fn front_one<'a>(x: &[&'a [f64]], s: usize) -> Vec<&'a [f64]> {
    let mut y = x.to_vec();
    y.swap(0, s);
    y
}

/// `x` with slots `s ≠ t` moved to positions 0 and 1.
pub fn front_two<'a>(x: &[&'a [f64]], s: usize, t: usize) -> Vec<&'a [f64]> {
    debug_assert_ne!(s, t);
    let mut y = x.to_vec();
    y.swap(0, s);
    let t = if t == 0 { s } else { t };
    y.swap(1, t);
    y
}

/// ∇_{x_s}Φ(x).
pub fn grad_slot(phi: &dyn SymmetricKernel, x: &[&[f64]], s: usize) -> Vec<C64> {
    phi.grad1(&front_one(x, s))
}

/// Block `∂²Φ/∂x_s∂x_t` of the full Hessian.
pub fn hess_block(phi: &dyn SymmetricKernel, x: &[&[f64]], s: usize, t: usize) -> CMat {
    if s == t {
        phi.hess11(&front_one(x, s))
    } else {
        phi.hess12(&front_two(x, s, t))
    }
}

fn check_arity(op: &'static str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("arity must be at least 1".into()));
    }
    if k > MAX_SYMMETRIZE_ARITY {
        return Err(Error::ArityGuardExceeded { op, arity: k, limit: MAX_SYMMETRIZE_ARITY });
    }
    Ok(())
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    (0..k).permutations(k).collect()
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

// ---------------------------------------------------------------------------
// Exponential kernel Φ^k_ξ

/// `Φ^k_ξ(x) = (1/k!) Σ_σ exp(−2πi Σ_j ⟨ξ_{σ(j)}, x_j⟩)`.
#[derive(Debug, Clone)]
pub struct ExponentialKernel {
    xi: Vec<Vec<f64>>,
    dim: usize,
    perms: Vec<Vec<usize>>,
}

impl ExponentialKernel {
    pub fn new(xi: Vec<Vec<f64>>) -> Result<Self> {
        check_arity("exponential kernel", xi.len())?;
        let dim = xi[0].len();
        for f in &xi {
            if f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: f.len() });
            }
        }
        let perms = permutations(xi.len());
        Ok(Self { xi, dim, perms })
    }

    pub fn frequencies(&self) -> &[Vec<f64>] {
        &self.xi
    }

    /// Phases `e^{−2πi Σ⟨ξ_{σ(j)},x_j⟩}/k!` per permutation.
    fn terms(&self, x: &[&[f64]]) -> Vec<C64> {
        let k = self.xi.len();
        let dots: Vec<Vec<f64>> = self.xi.iter().map(|f| x.iter().map(|p| dot(f, p)).collect()).collect();
        let inv = 1.0 / factorial(k);
        self.perms
            .iter()
            .map(|s| {
                let phase: f64 = (0..k).map(|j| dots[s[j]][j]).sum();
                C64::from_polar(inv, -2.0 * PI * phase)
            })
            .collect()
    }
}

impl SymmetricKernel for ExponentialKernel {
    fn arity(&self) -> usize {
        self.xi.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        crate::sum::sum_c64(self.terms(x))
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        let mut g = vec![zero(); self.dim];
        let c = C64::new(0.0, -2.0 * PI);
        for (s, e) in self.perms.iter().zip(self.terms(x)) {
            let f = &self.xi[s[0]];
            g.iter_mut().zip(f).for_each(|(gi, fi)| *gi += c * e * *fi);
        }
        g
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        let c = -4.0 * PI * PI;
        for (s, e) in self.perms.iter().zip(self.terms(x)) {
            let f = &self.xi[s[0]];
            for i in 0..self.dim {
                for j in 0..self.dim {
                    h[(i, j)] += e * (c * f[i] * f[j]);
                }
            }
        }
        h
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        if self.xi.len() < 2 {
            return h;
        }
        let c = -4.0 * PI * PI;
        for (s, e) in self.perms.iter().zip(self.terms(x)) {
            let (f, g) = (&self.xi[s[0]], &self.xi[s[1]]);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    h[(i, j)] += e * (c * f[i] * g[j]);
                }
            }
        }
        h
    }
    fn sup_hess(&self) -> Option<f64> {
        Some(4.0 * PI * PI * self.xi.iter().map(|f| norm_sq(f)).sum::<f64>())
    }
    fn closed_form_functional(&self, m: &dyn Measure) -> Option<C64> {
        let k = self.xi.len() as f64;
        let mut p = C64::new(1.0 / k, 0.0);
        for f in &self.xi {
            p *= m.char_fn(f).ok()?;
        }
        Some(p)
    }
}

// ---------------------------------------------------------------------------
// Symmetrized tensor polynomials

#[derive(Debug, Clone, PartialEq)]
pub struct PolyTerm {
    pub coef: f64,
    /// `exponents[slot][coord]`.
    pub exponents: Vec<Vec<u32>>,
}

/// `Φ(x) = (1/k!) Σ_σ Σ_terms c Π_j Π_c (x_j)_c^{e_{σ(j),c}}`.
#[derive(Debug, Clone)]
pub struct TensorPolynomial {
    k: usize,
    dim: usize,
    terms: Vec<PolyTerm>,
    perms: Vec<Vec<usize>>,
}

fn mono(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product()
}

fn mono_grad(e: &[u32], x: &[f64]) -> Vec<f64> {
    (0..e.len())
        .map(|c| {
            if e[c] == 0 {
                return 0.0;
            }
            let mut v = e[c] as f64 * x[c].powi(e[c] as i32 - 1);
            for (o, (&p, &y)) in e.iter().zip(x).enumerate() {
                if o != c {
                    v *= y.powi(p as i32);
                }
            }
            v
        })
        .collect()
}

fn mono_hess(e: &[u32], x: &[f64]) -> Vec<Vec<f64>> {
    let d = e.len();
    let mut h = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut pw = e.to_vec();
            let mut c = 1.0;
            for idx in [a, b] {
                if pw[idx] == 0 {
                    c = 0.0;
                    break;
                }
                c *= pw[idx] as f64;
                pw[idx] -= 1;
            }
            if c != 0.0 {
                h[a][b] = c * mono(&pw, x);
            }
        }
    }
    h
}

impl TensorPolynomial {
    pub fn new(k: usize, dim: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        check_arity("tensor polynomial", k)?;
        for t in &terms {
            if t.exponents.len() != k {
                return Err(Error::ShapeMismatch(format!("term has {} slots, arity {}", t.exponents.len(), k)));
            }
            for e in &t.exponents {
                if e.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: e.len() });
                }
            }
        }
        Ok(Self { k, dim, terms, perms: permutations(k) })
    }

    pub fn monomial(exponents: Vec<Vec<u32>>) -> Result<Self> {
        let k = exponents.len();
        let dim = exponents.first().map_or(0, |e| e.len());
        Self::new(k, dim, vec![PolyTerm { coef: 1.0, exponents }])
    }

    pub fn constant(k: usize, dim: usize, c: f64) -> Result<Self> {
        Self::new(k, dim, vec![PolyTerm { coef: c, exponents: vec![vec![0; dim]; k] }])
    }

    /// `Φ(x) = |x|²` (arity 1).
    pub fn squared_norm(dim: usize) -> Result<Self> {
        let terms = (0..dim)
            .map(|c| {
                let mut e = vec![0; dim];
                e[c] = 2;
                PolyTerm { coef: 1.0, exponents: vec![e] }
            })
            .collect();
        Self::new(1, dim, terms)
    }

    /// `Φ(x) = Π_j (x_j)_1`, the product of first coordinates.
    pub fn coordinate_product(k: usize, dim: usize) -> Result<Self> {
        let mut e = vec![0; dim];
        e[0] = 1;
        Self::new(k, dim, vec![PolyTerm { coef: 1.0, exponents: vec![e; k] }])
    }

    fn max_total_degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().flatten().sum::<u32>()).max().unwrap_or(0)
    }

    fn for_each_term(&self, mut f: impl FnMut(f64, &[&[u32]])) {
        let inv = 1.0 / factorial(self.k);
        for s in &self.perms {
            for t in &self.terms {
                let e: Vec<&[u32]> = (0..self.k).map(|j| t.exponents[s[j]].as_slice()).collect();
                f(inv * t.coef, &e);
            }
        }
    }
}

impl SymmetricKernel for TensorPolynomial {
    fn arity(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        let mut acc = crate::sum::KahanSum::new();
        self.for_each_term(|c, e| acc.add(c * (0..self.k).map(|j| mono(e[j], x[j])).product::<f64>()));
        C64::new(acc.value(), 0.0)
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        let mut g = vec![0.0; self.dim];
        self.for_each_term(|c, e| {
            let rest: f64 = (1..self.k).map(|j| mono(e[j], x[j])).product();
            for (gi, v) in g.iter_mut().zip(mono_grad(e[0], x[0])) {
                *gi += c * rest * v;
            }
        });
        g.into_iter().map(|v| C64::new(v, 0.0)).collect()
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        let mut h = vec![vec![0.0; self.dim]; self.dim];
        self.for_each_term(|c, e| {
            let rest: f64 = (1..self.k).map(|j| mono(e[j], x[j])).product();
            let m = mono_hess(e[0], x[0]);
            for a in 0..self.dim {
                for b in 0..self.dim {
                    h[a][b] += c * rest * m[a][b];
                }
            }
        });
        CMat::from_fn(self.dim, |a, b| C64::new(h[a][b], 0.0))
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        let mut h = vec![vec![0.0; self.dim]; self.dim];
        if self.k >= 2 {
            self.for_each_term(|c, e| {
                let rest: f64 = (2..self.k).map(|j| mono(e[j], x[j])).product();
                let g0 = mono_grad(e[0], x[0]);
                let g1 = mono_grad(e[1], x[1]);
                for a in 0..self.dim {
                    for b in 0..self.dim {
                        h[a][b] += c * rest * g0[a] * g1[b];
                    }
                }
            });
        }
        CMat::from_fn(self.dim, |a, b| C64::new(h[a][b], 0.0))
    }
    /// Exact for total degree ≤ 2 (constant Hessian); unbounded otherwise.
    fn sup_hess(&self) -> Option<f64> {
        if self.max_total_degree() > 2 {
            return None;
        }
        let origin = vec![0.0; self.dim];
        let x: Vec<&[f64]> = vec![origin.as_slice(); self.k];
        Some(full_hessian_norm(self, &x))
    }
    /// Only the zero polynomial is compactly supported.
    fn support_radius(&self) -> Option<f64> {
        self.terms.iter().all(|t| t.coef == 0.0).then_some(0.0)
    }
}

/// Spectral norm of the real part of the full (kd × kd) Hessian at `x`.
pub fn full_hessian_norm(phi: &dyn SymmetricKernel, x: &[&[f64]]) -> f64 {
    let (k, d) = (phi.arity(), phi.dim());
    let mut h = DMatrix::<f64>::zeros(k * d, k * d);
    for s in 0..k {
        for t in 0..k {
            let b = hess_block(phi, x, s, t);
            for i in 0..d {
                for j in 0..d {
                    h[(s * d + i, t * d + j)] = b[(i, j)].re;
                }
            }
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    h.symmetric_eigenvalues().iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

// ---------------------------------------------------------------------------
// Radial differences Φ(x, y) = f(x − y)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvenProfile {
    /// `exp(−|z|²/(2s²))`
    Gauss { scale: f64 },
    /// `cos(2π z₁ / s)`
    Cosine { scale: f64 },
    /// `|z|²`
    Quadratic,
    /// `|z|³`, C² but not C³ at the origin.
    CubicAbs,
    /// `(1 + |z|²/s²)^{−1/2}`
    InverseMultiquadric { scale: f64 },
}

impl EvenProfile {
    pub fn parse(name: &str, scale: f64) -> Result<Self> {
        Ok(match name {
            "gauss" => Self::Gauss { scale },
            "cosine" => Self::Cosine { scale },
            "quadratic" => Self::Quadratic,
            "cubic_abs" => Self::CubicAbs,
            "inverse_multiquadric" => Self::InverseMultiquadric { scale },
            other => return Err(Error::Parse(format!("unknown radial profile '{other}'"))),
        })
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let r2 = norm_sq(z);
        match *self {
            Self::Gauss { scale } => (-r2 / (2.0 * scale * scale)).exp(),
            Self::Cosine { scale } => (2.0 * PI * z[0] / scale).cos(),
            Self::Quadratic => r2,
            Self::CubicAbs => r2 * r2.sqrt(),
            Self::InverseMultiquadric { scale } => (1.0 + r2 / (scale * scale)).powf(-0.5),
        }
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let r2 = norm_sq(z);
        let d = z.len();
        match *self {
            Self::Gauss { scale } => {
                let f = self.value(z) / (scale * scale);
                z.iter().map(|c| -c * f).collect()
            }
            Self::Cosine { scale } => {
                let w = 2.0 * PI / scale;
                let mut g = vec![0.0; d];
                g[0] = -w * (w * z[0]).sin();
                g
            }
            Self::Quadratic => z.iter().map(|c| 2.0 * c).collect(),
            Self::CubicAbs => z.iter().map(|c| 3.0 * r2.sqrt() * c).collect(),
            Self::InverseMultiquadric { scale } => {
                let s2 = scale * scale;
                let f = (1.0 + r2 / s2).powf(-1.5) / s2;
                z.iter().map(|c| -c * f).collect()
            }
        }
    }

    pub fn hess(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let r2 = norm_sq(z);
        let d = z.len();
        let mut h = vec![vec![0.0; d]; d];
        match *self {
            Self::Gauss { scale } => {
                let s2 = scale * scale;
                let f = self.value(z);
                for i in 0..d {
                    for j in 0..d {
                        h[i][j] = f * (z[i] * z[j] / (s2 * s2) - if i == j { 1.0 / s2 } else { 0.0 });
                    }
                }
            }
            Self::Cosine { scale } => {
                let w = 2.0 * PI / scale;
                h[0][0] = -w * w * (w * z[0]).cos();
            }
            Self::Quadratic => (0..d).for_each(|i| h[i][i] = 2.0),
            Self::CubicAbs => {
                let r = r2.sqrt();
                if r > 0.0 {
                    for i in 0..d {
                        for j in 0..d {
                            h[i][j] = 3.0 * (z[i] * z[j] / r + if i == j { r } else { 0.0 });
                        }
                    }
                }
            }
            Self::InverseMultiquadric { scale } => {
                let s2 = scale * scale;
                let u = 1.0 + r2 / s2;
                for i in 0..d {
                    for j in 0..d {
                        h[i][j] = 3.0 * z[i] * z[j] * u.powf(-2.5) / (s2 * s2)
                            - if i == j { u.powf(-1.5) / s2 } else { 0.0 };
                    }
                }
            }
        }
        h
    }

    /// sup ‖∇²f‖.
    fn sup_hess(&self) -> Option<f64> {
        match *self {
            Self::Gauss { scale } | Self::InverseMultiquadric { scale } => Some(1.0 / (scale * scale)),
            Self::Cosine { scale } => Some((2.0 * PI / scale).powi(2)),
            Self::Quadratic => Some(2.0),
            Self::CubicAbs => None,
        }
    }
}

/// `Φ(x, y) = f(x − y)` with `f` even; harmonic for Δ_w.
#[derive(Debug, Clone)]
pub struct RadialDifference {
    dim: usize,
    profile: EvenProfile,
}

impl RadialDifference {
    pub fn new(dim: usize, profile: EvenProfile) -> Self {
        Self { dim, profile }
    }

    fn diff(x: &[&[f64]]) -> Vec<f64> {
        x[0].iter().zip(x[1]).map(|(a, b)| a - b).collect()
    }
}

impl SymmetricKernel for RadialDifference {
    fn arity(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        C64::new(self.profile.value(&Self::diff(x)), 0.0)
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        self.profile.grad(&Self::diff(x)).into_iter().map(|v| C64::new(v, 0.0)).collect()
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        let h = self.profile.hess(&Self::diff(x));
        CMat::from_fn(self.dim, |i, j| C64::new(h[i][j], 0.0))
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        let h = self.profile.hess(&Self::diff(x));
        CMat::from_fn(self.dim, |i, j| C64::new(-h[i][j], 0.0))
    }
    /// The full Hessian is [[H, −H], [−H, H]], of norm 2‖H‖.
    fn sup_hess(&self) -> Option<f64> {
        self.profile.sup_hess().map(|c| 2.0 * c)
    }
}

// ---------------------------------------------------------------------------
// Products of compactly supported bumps

/// `Φ(x) = (1/k!) Σ_σ Π_j b((x_j − c_{σ(j)})/ρ)` with `b(y) = (1 − |y|²)⁴₊`,
/// which is C³ with compact support.
#[derive(Debug, Clone)]
pub struct BumpProduct {
    k: usize,
    dim: usize,
    radius: f64,
    centers: Vec<Vec<f64>>,
    perms: Vec<Vec<usize>>,
}

struct BumpEval {
    v: f64,
    g: Vec<f64>,
    h: Vec<Vec<f64>>,
}

impl BumpProduct {
    pub fn new(k: usize, dim: usize, radius: f64, centers: Option<Vec<Vec<f64>>>) -> Result<Self> {
        check_arity("bump product", k)?;
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("bump radius {radius}")));
        }
        let centers = centers.unwrap_or_else(|| vec![vec![0.0; dim]; k]);
        if centers.len() != k {
            return Err(Error::ShapeMismatch(format!("{} centers for arity {k}", centers.len())));
        }
        for c in &centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.len() });
            }
        }
        let distinct = centers.iter().any(|c| c != &centers[0]);
        let perms = if distinct { permutations(k) } else { vec![(0..k).collect()] };
        Ok(Self { k, dim, radius, centers, perms })
    }

    fn bump(&self, x: &[f64], c: &[f64], order: usize) -> BumpEval {
        let d = self.dim;
        let r2 = self.radius * self.radius;
        let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
        let s = norm_sq(&y) / r2;
        let mut out = BumpEval { v: 0.0, g: vec![0.0; d], h: vec![vec![0.0; d]; d] };
        if s >= 1.0 {
            return out;
        }
        let q = 1.0 - s;
        out.v = q.powi(4);
        if order >= 1 {
            let g1 = -8.0 * q.powi(3) / r2;
            out.g = y.iter().map(|yi| g1 * yi).collect();
            if order >= 2 {
                let g2 = 48.0 * q * q / (r2 * r2);
                for i in 0..d {
                    for j in 0..d {
                        out.h[i][j] = g2 * y[i] * y[j] + if i == j { g1 } else { 0.0 };
                    }
                }
            }
        }
        out
    }

    fn scale(&self) -> f64 {
        1.0 / self.perms.len() as f64
    }
}

impl SymmetricKernel for BumpProduct {
    fn arity(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        let v: f64 = self
            .perms
            .iter()
            .map(|s| (0..self.k).map(|j| self.bump(x[j], &self.centers[s[j]], 0).v).product::<f64>())
            .sum();
        C64::new(v * self.scale(), 0.0)
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        let mut g = vec![0.0; self.dim];
        for s in &self.perms {
            let rest: f64 = (1..self.k).map(|j| self.bump(x[j], &self.centers[s[j]], 0).v).product();
            if rest == 0.0 {
                continue;
            }
            let b = self.bump(x[0], &self.centers[s[0]], 1);
            g.iter_mut().zip(&b.g).for_each(|(a, v)| *a += rest * v);
        }
        g.into_iter().map(|v| C64::new(v * self.scale(), 0.0)).collect()
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        for s in &self.perms {
            let rest: f64 = (1..self.k).map(|j| self.bump(x[j], &self.centers[s[j]], 0).v).product();
            if rest == 0.0 {
                continue;
            }
            let b = self.bump(x[0], &self.centers[s[0]], 2);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    h[(i, j)] += rest * b.h[i][j] * self.scale();
                }
            }
        }
        h
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        if self.k < 2 {
            return h;
        }
        for s in &self.perms {
            let rest: f64 = (2..self.k).map(|j| self.bump(x[j], &self.centers[s[j]], 0).v).product();
            if rest == 0.0 {
                continue;
            }
            let b0 = self.bump(x[0], &self.centers[s[0]], 1);
            let b1 = self.bump(x[1], &self.centers[s[1]], 1);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    h[(i, j)] += rest * b0.g[i] * b1.g[j] * self.scale();
                }
            }
        }
        h
    }
    /// sup|∇b| = 8(6/7)³/(√7ρ), sup‖∇²b‖ = 8/ρ², b ≤ 1; the full Hessian norm
    /// is at most the Frobenius norm of the matrix of block norms.
    fn sup_hess(&self) -> Option<f64> {
        let k = self.k as f64;
        let m1 = 8.0 * (6.0f64 / 7.0).powi(3) / (7.0f64.sqrt() * self.radius);
        let m2 = 8.0 / (self.radius * self.radius);
        Some((k * m2 * m2 + k * (k - 1.0) * m1.powi(4)).sqrt())
    }
    fn support_radius(&self) -> Option<f64> {
        Some(self.centers.iter().map(|c| norm_sq(c).sqrt()).fold(0.0, f64::max) + self.radius)
    }
    /// Every permutation contributes `Π_j ∫b_{c_j} dm`, so `F = (1/k)Π_j ∫b_{c_j} dm`.
    fn closed_form_functional(&self, m: &dyn Measure) -> Option<C64> {
        if m.variance() != 0.0 {
            return None;
        }
        let base = m.base();
        let mut p = 1.0 / self.k as f64;
        for c in &self.centers {
            p *= base.atoms().iter().zip(base.weights()).map(|(x, &w)| w * self.bump(x, c, 0).v).sum::<f64>();
        }
        Some(C64::new(p, 0.0))
    }
}

// ---------------------------------------------------------------------------
// Callback kernels with finite-difference derivatives

pub type RawKernelFn = dyn Fn(&[&[f64]]) -> C64 + Send + Sync;

/// Kernel given only by values; derivatives by central differences with
/// `h = 1e-5·(1+|x|)` for gradients and `1e-4·(1+|x|)` for second derivatives.
#[derive(Clone)]
pub struct GenericCallback {
    k: usize,
    dim: usize,
    f: Arc<RawKernelFn>,
    sup_hess: Option<f64>,
    support_radius: Option<f64>,
}

impl fmt::Debug for GenericCallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericCallback").field("k", &self.k).field("dim", &self.dim).finish()
    }
}

fn bump_coord(x: &[&[f64]], slot: usize, coord: usize, h: f64) -> Vec<Vec<f64>> {
    let mut y: Vec<Vec<f64>> = x.iter().map(|p| p.to_vec()).collect();
    y[slot][coord] += h;
    y
}

fn as_refs(y: &[Vec<f64>]) -> Vec<&[f64]> {
    y.iter().map(|p| p.as_slice()).collect()
}

impl GenericCallback {
    /// Wraps an already symmetric callback.
    pub fn new(k: usize, dim: usize, f: Arc<RawKernelFn>) -> Self {
        Self { k, dim, f, sup_hess: None, support_radius: None }
    }

    pub fn with_sup_hess(mut self, c: f64) -> Self {
        self.sup_hess = Some(c);
        self
    }

    pub fn with_support_radius(mut self, r: f64) -> Self {
        self.support_radius = Some(r);
        self
    }

    fn eval(&self, y: &[Vec<f64>]) -> C64 {
        (self.f)(&as_refs(y))
    }

    fn step(x: &[f64], base: f64) -> f64 {
        base * (1.0 + norm_sq(x).sqrt())
    }

    fn mixed(&self, x: &[&[f64]], (s, a): (usize, usize), (t, b): (usize, usize)) -> C64 {
        let hs = Self::step(x[s], 1e-4);
        let ht = Self::step(x[t], 1e-4);
        if s == t && a == b {
            let p = self.eval(&bump_coord(x, s, a, hs));
            let m = self.eval(&bump_coord(x, s, a, -hs));
            let c = (self.f)(x);
            return (p - 2.0 * c + m) / (hs * hs);
        }
        let shifted = |u: f64, v: f64| {
            let mut y = bump_coord(x, s, a, u);
            y[t][b] += v;
            self.eval(&y)
        };
        (shifted(hs, ht) - shifted(hs, -ht) - shifted(-hs, ht) + shifted(-hs, -ht)) / (4.0 * hs * ht)
    }
}

impl SymmetricKernel for GenericCallback {
    fn arity(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        (self.f)(x)
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        let h = Self::step(x[0], 1e-5);
        (0..self.dim)
            .map(|c| (self.eval(&bump_coord(x, 0, c, h)) - self.eval(&bump_coord(x, 0, c, -h))) / (2.0 * h))
            .collect()
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        CMat::from_fn(self.dim, |a, b| self.mixed(x, (0, a), (0, b)))
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        if self.k < 2 {
            return CMat::zeros(self.dim);
        }
        CMat::from_fn(self.dim, |a, b| self.mixed(x, (0, a), (1, b)))
    }
    fn sup_hess(&self) -> Option<f64> {
        self.sup_hess
    }
    fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }
}

/// `Φ(x) = (1/k!) Σ_σ raw(x^σ)`; derivatives by finite differences of Φ.
pub fn symmetrize(raw: Arc<RawKernelFn>, k: usize, d: usize) -> Result<GenericCallback> {
    check_arity("symmetrize", k)?;
    let perms = permutations(k);
    let inv = 1.0 / factorial(k);
    let f = move |x: &[&[f64]]| {
        let mut acc = crate::sum::ComplexSum::new();
        for s in &perms {
            let y: Vec<&[f64]> = s.iter().map(|&i| x[i]).collect();
            acc.add(raw(&y));
        }
        acc.value() * inv
    };
    Ok(GenericCallback::new(k, d, Arc::new(f)))
}

// ---------------------------------------------------------------------------
// Linear combinations

/// `Σ_i c_i Φ_i` over kernels of equal arity and dimension.
#[derive(Debug, Clone)]
pub struct KernelCombination {
    k: usize,
    dim: usize,
    terms: Vec<(C64, KernelRef)>,
}

impl KernelCombination {
    pub fn new(terms: Vec<(C64, KernelRef)>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidParameter("empty combination".into()))?;
        let (k, dim) = (first.1.arity(), first.1.dim());
        for (_, t) in &terms {
            if t.arity() != k {
                return Err(Error::ShapeMismatch("arity differs inside combination".into()));
            }
            if t.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.dim() });
            }
        }
        Ok(Self { k, dim, terms })
    }
}

impl SymmetricKernel for KernelCombination {
    fn arity(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[&[f64]]) -> C64 {
        crate::sum::sum_c64(self.terms.iter().map(|(c, t)| c * t.value(x)))
    }
    fn grad1(&self, x: &[&[f64]]) -> Vec<C64> {
        let mut g = vec![zero(); self.dim];
        for (c, t) in &self.terms {
            g.iter_mut().zip(t.grad1(x)).for_each(|(a, v)| *a += c * v);
        }
        g
    }
    fn hess11(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        self.terms.iter().for_each(|(c, t)| h.add_scaled(&t.hess11(x), *c));
        h
    }
    fn hess12(&self, x: &[&[f64]]) -> CMat {
        let mut h = CMat::zeros(self.dim);
        self.terms.iter().for_each(|(c, t)| h.add_scaled(&t.hess12(x), *c));
        h
    }
    fn sup_hess(&self) -> Option<f64> {
        self.terms.iter().map(|(c, t)| t.sup_hess().map(|s| c.norm() * s)).sum()
    }
    fn support_radius(&self) -> Option<f64> {
        self.terms.iter().map(|(_, t)| t.support_radius()).try_fold(0.0, |a: f64, r| r.map(|r| a.max(r)))
    }
    fn closed_form_functional(&self, m: &dyn Measure) -> Option<C64> {
        self.terms.iter().map(|(c, t)| t.closed_form_functional(m).map(|v| c * v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn tuple(rng: &mut RngStream, k: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..d).map(|_| scale * (2.0 * rng.uniform() - 1.0)).collect()).collect()
    }

    fn refs(x: &[Vec<f64>]) -> Vec<&[f64]> {
        x.iter().map(|p| p.as_slice()).collect()
    }

    fn builtins() -> Vec<KernelRef> {
        let mut v: Vec<KernelRef> = vec![
            Arc::new(ExponentialKernel::new(vec![vec![0.3, -0.2], vec![0.5, 0.1], vec![-0.4, 0.7]]).unwrap()),
            Arc::new(ExponentialKernel::new(vec![vec![0.8]]).unwrap()),
            Arc::new(
                TensorPolynomial::new(
                    3,
                    2,
                    vec![
                        PolyTerm { coef: 1.5, exponents: vec![vec![2, 0], vec![0, 1], vec![1, 1]] },
                        PolyTerm { coef: -0.5, exponents: vec![vec![0, 0], vec![3, 0], vec![0, 0]] },
                    ],
                )
                .unwrap(),
            ),
            Arc::new(BumpProduct::new(2, 2, 1.5, Some(vec![vec![0.1, 0.0], vec![-0.2, 0.3]])).unwrap()),
            Arc::new(BumpProduct::new(3, 1, 2.0, None).unwrap()),
        ];
        for p in [
            EvenProfile::Gauss { scale: 0.7 },
            EvenProfile::Cosine { scale: 1.3 },
            EvenProfile::Quadratic,
            EvenProfile::CubicAbs,
            EvenProfile::InverseMultiquadric { scale: 0.9 },
        ] {
            v.push(Arc::new(RadialDifference::new(2, p)));
        }
        v
    }

    fn fd_grad(phi: &dyn SymmetricKernel, x: &[Vec<f64>], h: f64) -> Vec<C64> {
        (0..phi.dim())
            .map(|c| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[0][c] += h;
                m[0][c] -= h;
                (phi.value(&refs(&p)) - phi.value(&refs(&m))) / (2.0 * h)
            })
            .collect()
    }

    /// Row `c` of the slot-(0, t) Hessian block by differencing grad1 in slot t.
    fn fd_hess(phi: &dyn SymmetricKernel, x: &[Vec<f64>], t: usize, h: f64) -> CMat {
        let d = phi.dim();
        let mut out = CMat::zeros(d);
        for b in 0..d {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[t][b] += h;
            m[t][b] -= h;
            let gp = phi.grad1(&refs(&p));
            let gm = phi.grad1(&refs(&m));
            for a in 0..d {
                out[(a, b)] = (gp[a] - gm[a]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn builtin_symmetry() {
        let mut rng = RngStream::new(1, 0);
        for phi in builtins() {
            let k = phi.arity();
            let perms = permutations(k);
            for _ in 0..20 {
                let x = tuple(&mut rng, k, phi.dim(), 1.0);
                let v = phi.value(&refs(&x));
                for p in perms.iter().take(6) {
                    let y: Vec<Vec<f64>> = p.iter().map(|&i| x[i].clone()).collect();
                    let w = phi.value(&refs(&y));
                    assert!((v - w).norm() <= 1e-12 * (1.0 + v.norm()), "{phi:?}");
                }
            }
        }
    }

    #[test]
    fn builtin_derivatives_match_differences() {
        let mut rng = RngStream::new(2, 0);
        for phi in builtins() {
            let k = phi.arity();
            for _ in 0..10 {
                let x = tuple(&mut rng, k, phi.dim(), 1.0);
                let g = phi.grad1(&refs(&x));
                let gf = fd_grad(phi.as_ref(), &x, 1e-5);
                let scale = 1.0 + g.iter().map(|v| v.norm()).fold(0.0, f64::max);
                for (a, b) in g.iter().zip(&gf) {
                    assert!((a - b).norm() <= 1e-6 * scale, "{phi:?} grad {a} vs {b}");
                }
                let h11 = phi.hess11(&refs(&x));
                let f11 = fd_hess(phi.as_ref(), &x, 0, 1e-5);
                assert!(h11.max_abs_diff(&f11) <= 1e-6 * (1.0 + h11.max_abs()), "{phi:?} hess11");
                if k >= 2 {
                    let h12 = phi.hess12(&refs(&x));
                    let f12 = fd_hess(phi.as_ref(), &x, 1, 1e-5);
                    assert!(h12.max_abs_diff(&f12) <= 1e-6 * (1.0 + h12.max_abs()), "{phi:?} hess12");
                }
            }
        }
    }

    #[test]
    fn exponential_matches_direct_sum() {
        let mut rng = RngStream::new(3, 0);
        for k in 1..=6 {
            let xi = tuple(&mut rng, k, 2, 1.0);
            let phi = ExponentialKernel::new(xi.clone()).unwrap();
            let x = tuple(&mut rng, k, 2, 1.0);
            let mut direct = C64::new(0.0, 0.0);
            for s in (0..k).permutations(k) {
                let phase: f64 = (0..k).map(|j| dot(&xi[s[j]], &x[j])).sum();
                direct += C64::from_polar(1.0, -2.0 * PI * phase);
            }
            direct /= factorial(k);
            assert!((phi.value(&refs(&x)) - direct).norm() <= 1e-12);
        }
    }

    #[test]
    fn symmetrize_examples() {
        let raw: Arc<RawKernelFn> = Arc::new(|x: &[&[f64]]| C64::new(x[0][0], 0.0));
        let s = symmetrize(raw, 2, 1).unwrap();
        let v = s.value(&[&[0.3], &[-0.9]]);
        assert!((v.re - (-0.3)).abs() < 1e-15);

        let fixed: Arc<RawKernelFn> = Arc::new(|x: &[&[f64]]| C64::new(x[0][0] * x[1][0] + x[0][0] + x[1][0], 0.0));
        let s = symmetrize(fixed.clone(), 2, 1).unwrap();
        let x: [&[f64]; 2] = [&[1.7], &[-0.4]];
        assert!((s.value(&x) - fixed(&x)).norm() <= 1e-13 * fixed(&x).norm());

        // Two-term hand sum for Φ²_ξ at x = (0.3, −0.7), ξ = (1, 2).
        let raw: Arc<RawKernelFn> =
            Arc::new(|x: &[&[f64]]| C64::from_polar(1.0, -2.0 * PI * (x[0][0] + 2.0 * x[1][0])));
        let s = symmetrize(raw, 2, 1).unwrap();
        let hand = (C64::from_polar(1.0, -2.0 * PI * (0.3 - 1.4)) + C64::from_polar(1.0, -2.0 * PI * (0.6 - 0.7))) / 2.0;
        assert!((s.value(&[&[0.3], &[-0.7]]) - hand).norm() < 1e-14);

        assert!(matches!(
            symmetrize(Arc::new(|_: &[&[f64]]| C64::new(0.0, 0.0)), 9, 1),
            Err(Error::ArityGuardExceeded { .. })
        ));
    }

    #[test]
    fn callback_derivatives_within_relaxed_tolerance() {
        let exact = ExponentialKernel::new(vec![vec![0.3], vec![-0.6]]).unwrap();
        let e2 = exact.clone();
        let cb = GenericCallback::new(2, 1, Arc::new(move |x: &[&[f64]]| e2.value(x)));
        let x: [&[f64]; 2] = [&[0.4], &[-1.1]];
        for (a, b) in cb.grad1(&x).iter().zip(exact.grad1(&x)) {
            assert!((a - b).norm() < 1e-8);
        }
        assert!(cb.hess11(&x).max_abs_diff(&exact.hess11(&x)) < 1e-5);
        assert!(cb.hess12(&x).max_abs_diff(&exact.hess12(&x)) < 1e-5);
    }

    #[test]
    fn polynomial_hessian_bounds() {
        let sq = TensorPolynomial::squared_norm(1).unwrap();
        assert!((sq.sup_hess().unwrap() - 2.0).abs() < 1e-14);
        let prod = TensorPolynomial::coordinate_product(2, 1).unwrap();
        assert!((prod.sup_hess().unwrap() - 1.0).abs() < 1e-14);
        assert!(TensorPolynomial::coordinate_product(3, 1).unwrap().sup_hess().is_none());
    }

    #[test]
    fn bump_hessian_bound_dominates_samples() {
        let phi = BumpProduct::new(2, 2, 0.8, Some(vec![vec![0.0, 0.1], vec![0.2, 0.0]])).unwrap();
        let c = phi.sup_hess().unwrap();
        let mut rng = RngStream::new(9, 0);
        for _ in 0..500 {
            let x = tuple(&mut rng, 2, 2, 1.0);
            assert!(full_hessian_norm(&phi, &refs(&x)) <= c);
        }
    }

    #[test]
    fn radial_difference_hessian_bounds() {
        let mut rng = RngStream::new(4, 0);
        for p in [EvenProfile::Gauss { scale: 0.6 }, EvenProfile::InverseMultiquadric { scale: 0.5 }, EvenProfile::Cosine { scale: 2.0 }] {
            let phi = RadialDifference::new(2, p);
            let c = phi.sup_hess().unwrap();
            for _ in 0..300 {
                let x = tuple(&mut rng, 2, 2, 1.5);
                assert!(full_hessian_norm(&phi, &refs(&x)) <= c * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn slot_helpers_reorder() {
        let a = [0.0];
        let b = [1.0];
        let c = [2.0];
        let x: [&[f64]; 3] = [&a, &b, &c];
        assert_eq!(front_two(&x, 2, 0), vec![&c[..], &a[..], &b[..]]);
        assert_eq!(front_two(&x, 1, 2), vec![&b[..], &c[..], &a[..]]);
        assert_eq!(front_one(&x, 2), vec![&c[..], &b[..], &a[..]]);
    }

    #[test]
    fn bump_closed_form_matches_tensor_sum() {
        let mut rng = RngStream::new(77, 0);
        for k in 1..=4 {
            let b = BumpProduct::new(k, 2, 0.9, Some(tuple(&mut rng, k, 2, 0.4))).unwrap();
            let pts = tuple(&mut rng, 4, 2, 0.8);
            let m = crate::measure::DiscreteMeasure::new(pts, Some(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
            let closed = crate::calculus::eval_f(&b, &m).unwrap();
            let tensor = crate::calculus::eval_f_tensor(&b, &m).unwrap();
            assert!((closed - tensor).norm() <= 1e-14 * (1.0 + tensor.norm()), "k={k}");
            assert!(b.closed_form_functional(&m.smooth(0.1).unwrap()).is_none());
        }
    }
}
