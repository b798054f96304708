//! Spectral representation of functionals: eigenfunctions `F^k_ξ`, eigenvalues,
//! coefficient sets on quadrature grids, `H^s` pairings and the spectral
//! Laplacian / mean gradient.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use itertools::Itertools;
use sha2::{Digest, Sha256};

use crate::linalg::{factorial, norm, norm_sq};
use crate::measure::Measure;
use crate::sum::{ComplexSum, KahanSum};
use crate::{Error, Result, C64};

/// `Σ_j ξ_j`.
pub fn frequency_sum(xi: &[Vec<f64>]) -> Vec<f64> {
    let d = xi.first().map_or(0, |f| f.len());
    (0..d).map(|c| xi.iter().map(|f| f[c]).sum()).collect()
}

/// `4π²(|Σξ_j|² + εΣ|ξ_j|²)`.
pub fn lambda_sq_value(xi: &[Vec<f64>], eps: f64) -> f64 {
    let base = norm_sq(&frequency_sum(xi));
    let local: f64 = if eps == 0.0 { 0.0 } else { xi.iter().map(|f| norm_sq(f)).sum() };
    4.0 * PI * PI * (base + eps * local)
}

/// Multiplier of `βΔ_{w,ε/β}` on the mode `ξ`: `−4π²(β|Σξ_j|² + εΣ|ξ_j|²)`.
pub fn laplacian_multiplier(xi: &[Vec<f64>], eps: f64, beta: f64) -> f64 {
    let base = norm_sq(&frequency_sum(xi));
    let local: f64 = xi.iter().map(|f| norm_sq(f)).sum();
    -4.0 * PI * PI * (beta * base + eps * local)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueSpec {
    pub k: usize,
    pub xi: Vec<Vec<f64>>,
    pub eps: f64,
    pub lambda_sq_base: f64,
    pub lambda_sq_eps: f64,
}

pub fn lambda_sq(xi: &[Vec<f64>], eps: f64) -> EigenvalueSpec {
    EigenvalueSpec {
        k: xi.len(),
        xi: xi.to_vec(),
        eps,
        lambda_sq_base: lambda_sq_value(xi, 0.0),
        lambda_sq_eps: lambda_sq_value(xi, eps),
    }
}

/// `F^k_ξ[m] = k⁻¹ ∏_j m̂(ξ_j)`.
pub fn eigenfunction(xi: &[Vec<f64>], m: &dyn Measure) -> Result<C64> {
    if xi.is_empty() {
        return Err(Error::InvalidParameter("eigenfunction of degree 0".into()));
    }
    let mut p = C64::new(1.0, 0.0);
    for f in xi {
        p *= m.char_fn(f)?;
    }
    Ok(p / xi.len() as f64)
}

// ---------------------------------------------------------------------------
// Grids and coefficient sets

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    degree: usize,
    dim: usize,
    nodes: Vec<Vec<Vec<f64>>>,
    quad_weights: Vec<f64>,
    /// Set when the node set is not closed under block permutations.
    symmetrize: bool,
    grid_id: String,
}

impl SpectralGrid {
    pub fn new(degree: usize, dim: usize, nodes: Vec<Vec<Vec<f64>>>, quad_weights: Vec<f64>) -> Result<Self> {
        if degree == 0 || dim == 0 {
            return Err(Error::InvalidParameter("grid degree and dimension must be positive".into()));
        }
        if nodes.is_empty() {
            return Err(Error::GridMissing(degree));
        }
        if nodes.len() != quad_weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodes but {} quadrature weights",
                nodes.len(),
                quad_weights.len()
            )));
        }
        for node in &nodes {
            if node.len() != degree {
                return Err(Error::ShapeMismatch(format!("node with {} blocks in degree {degree}", node.len())));
            }
            for b in node {
                if b.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: b.len() });
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("grid node"));
                }
            }
        }
        if quad_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidParameter("quadrature weights must be positive".into()));
        }
        let mut g = Self { degree, dim, nodes, quad_weights, symmetrize: false, grid_id: String::new() };
        g.symmetrize = !g.is_permutation_closed();
        g.grid_id = g.hash();
        Ok(g)
    }

    /// Degree-1 lattice `{−nh, …, nh}` in `d = 1` with weights `h`.
    pub fn lattice_1d(n: usize, h: f64) -> Result<Self> {
        let nodes = (0..=2 * n).map(|i| vec![vec![(i as f64 - n as f64) * h]]).collect();
        Self::new(1, 1, nodes, vec![h; 2 * n + 1])
    }

    fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.degree as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for node in &self.nodes {
            for v in node.iter().flatten() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for w in &self.quad_weights {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn is_permutation_closed(&self) -> bool {
        if self.degree == 1 {
            return true;
        }
        let key = |node: &[Vec<f64>]| node.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        let set: std::collections::HashSet<Vec<u64>> = self.nodes.iter().map(|n| key(n)).collect();
        self.nodes.iter().all(|node| {
            (0..self.degree).permutations(self.degree).all(|p| {
                let permuted: Vec<Vec<f64>> = p.iter().map(|&j| node[j].clone()).collect();
                set.contains(&key(&permuted))
            })
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Vec<Vec<f64>>] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn symmetrize_flag(&self) -> bool {
        self.symmetrize
    }

    pub fn grid_id(&self) -> &str {
        &self.grid_id
    }

    /// Index of the node equal to `node`, if any.
    pub fn find(&self, node: &[Vec<f64>]) -> Option<usize> {
        self.nodes.iter().position(|n| n.as_slice() == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants {
    pub c: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCoefficients {
    pub grid: Arc<SpectralGrid>,
    pub values: Vec<C64>,
}

/// Truncated coefficient sequence `(a_k)_k`, each on its own grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectralCoefficients {
    degrees: BTreeMap<usize, DegreeCoefficients>,
    pub decay: Option<DecayConstants>,
}

impl SpectralCoefficients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, grid: Arc<SpectralGrid>, values: Vec<C64>) -> Result<()> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values on a grid of {} nodes", values.len(), grid.len())));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("coefficient value"));
        }
        if let Some((_, other)) = self.degrees.iter().next() {
            if other.grid.dim() != grid.dim() {
                return Err(Error::DimensionMismatch { expected: other.grid.dim(), found: grid.dim() });
            }
        }
        self.degrees.insert(grid.degree(), DegreeCoefficients { grid, values });
        Ok(())
    }

    pub fn with_degree(mut self, grid: Arc<SpectralGrid>, values: Vec<C64>) -> Result<Self> {
        self.insert(grid, values)?;
        Ok(self)
    }

    /// One mode `a·δ_ξ` with unit quadrature weight.
    pub fn single_mode(xi: Vec<Vec<f64>>, a: C64) -> Result<Self> {
        let k = xi.len();
        let d = xi.first().map_or(0, |f| f.len());
        let grid = SpectralGrid::new(k, d, vec![xi], vec![1.0])?;
        Self::new().with_degree(Arc::new(grid), vec![a])
    }

    pub fn degree(&self, k: usize) -> Result<&DegreeCoefficients> {
        self.degrees.get(&k).ok_or(Error::GridMissing(k))
    }

    pub fn degrees(&self) -> impl Iterator<Item = (usize, &DegreeCoefficients)> {
        self.degrees.iter().map(|(&k, v)| (k, v))
    }

    pub fn dim(&self) -> Option<usize> {
        self.degrees.values().next().map(|e| e.grid.dim())
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Same grids, values multiplied node-wise by `f(k, ξ)`.
    pub fn map_nodes(&self, mut f: impl FnMut(usize, &[Vec<f64>], C64) -> C64) -> Self {
        let degrees = self
            .degrees
            .iter()
            .map(|(&k, e)| {
                let values = e.grid.nodes().iter().zip(&e.values).map(|(xi, &a)| f(k, xi, a)).collect();
                (k, DegreeCoefficients { grid: e.grid.clone(), values })
            })
            .collect();
        Self { degrees, decay: self.decay }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_nodes(|_, _, a| a * c)
    }

    /// `self + other`; degrees present in both must share a grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (&k, e) in &other.degrees {
            match out.degrees.get_mut(&k) {
                Some(mine) => {
                    if mine.grid.grid_id() != e.grid.grid_id() {
                        return Err(Error::GridMismatch(k));
                    }
                    mine.values.iter_mut().zip(&e.values).for_each(|(a, b)| *a += b);
                }
                None => {
                    out.degrees.insert(k, e.clone());
                }
            }
        }
        out.decay = None;
        Ok(out)
    }

    /// Coefficients whose superposition is the real part of this one: every
    /// node is paired with `−ξ` carrying the conjugate value, both halved.
    pub fn real_part(&self) -> Result<Self> {
        let mut out = Self { degrees: BTreeMap::new(), decay: self.decay };
        for (_, e) in self.degrees() {
            let g = &e.grid;
            let mut nodes = g.nodes().to_vec();
            nodes.extend(g.nodes().iter().map(|n| n.iter().map(|b| b.iter().map(|v| -v).collect()).collect()));
            let mut w = g.quad_weights().to_vec();
            w.extend_from_slice(g.quad_weights());
            let mut values: Vec<C64> = e.values.iter().map(|a| a * 0.5).collect();
            values.extend(e.values.iter().map(|a| a.conj() * 0.5));
            out.insert(Arc::new(SpectralGrid::new(g.degree(), g.dim(), nodes, w)?), values)?;
        }
        Ok(out)
    }

    /// Max relative defect of `a(ξ^σ) = a(ξ)` over permutation-closed grids.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, e) in self.degrees() {
            if e.grid.symmetrize_flag() {
                continue;
            }
            for (i, node) in e.grid.nodes().iter().enumerate() {
                for p in (0..k).permutations(k) {
                    let permuted: Vec<Vec<f64>> = p.iter().map(|&j| node[j].clone()).collect();
                    if let Some(j) = e.grid.find(&permuted) {
                        let (a, b) = (e.values[i], e.values[j]);
                        worst = worst.max((a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE));
                    }
                }
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Operations

/// `Σ_k (1/k!) Σ_nodes w·a_k(ξ)·F^k_ξ[m]`.
pub fn eval_superposition(a: &SpectralCoefficients, m: &dyn Measure) -> Result<C64> {
    let mut total = ComplexSum::new();
    for (k, e) in a.degrees() {
        let mut s = ComplexSum::new();
        for ((xi, &w), &v) in e.grid.nodes().iter().zip(e.grid.quad_weights()).zip(&e.values) {
            if v != C64::new(0.0, 0.0) {
                s.add(v * w * eigenfunction(xi, m)?);
            }
        }
        total.add(s.value() / factorial(k));
    }
    Ok(total.value())
}

/// `⟨A;B⟩_{H^s} = Σ_k (1/k!) ∫ a_k b̄_k (1+λ²_k)^s dξ`.
pub fn hs_inner(a: &SpectralCoefficients, b: &SpectralCoefficients, s: f64) -> Result<C64> {
    let mut total = ComplexSum::new();
    for (k, ea) in a.degrees() {
        let Ok(eb) = b.degree(k) else { continue };
        if ea.grid.grid_id() != eb.grid.grid_id() {
            return Err(Error::GridMismatch(k));
        }
        let mut acc = ComplexSum::new();
        for (i, xi) in ea.grid.nodes().iter().enumerate() {
            let weight = if s == 0.0 { 1.0 } else { (1.0 + lambda_sq_value(xi, 0.0)).powf(s) };
            acc.add(ea.values[i] * eb.values[i].conj() * (ea.grid.quad_weights()[i] * weight));
        }
        total.add(acc.value() / factorial(k));
    }
    Ok(total.value())
}

pub fn hs_norm(a: &SpectralCoefficients, s: f64) -> f64 {
    hs_inner(a, a, s).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
}

/// Coefficients of `βΔ_{w,ε/β}`: multiply by `−βλ²_{k,ε/β}(ξ)`.
pub fn apply_laplacian_spectral(a: &SpectralCoefficients, eps: f64, beta: f64) -> SpectralCoefficients {
    let mut out = a.map_nodes(|_, xi, v| v * laplacian_multiplier(xi, eps, beta));
    out.decay = None;
    out
}

/// Components `n = 1..d` of the mean gradient `∫∇_wF dm`: `−2πi(Σ_jξ_j)_n·a_k(ξ)`.
pub fn mean_gradient_spectral(a: &SpectralCoefficients) -> Vec<SpectralCoefficients> {
    let d = a.dim().unwrap_or(0);
    (0..d)
        .map(|n| {
            let mut c = a.map_nodes(|_, xi, v| C64::new(0.0, -2.0 * PI * frequency_sum(xi)[n]) * v);
            c.decay = None;
            c
        })
        .collect()
}

/// Both sides of `−⟨Δ_wF;G⟩_{H⁰} = ⟨∫∇_wF dm; ∫∇_wG dm⟩_{H⁰}`.
pub fn ibp_check(a: &SpectralCoefficients, b: &SpectralCoefficients) -> Result<(C64, C64)> {
    let lhs = -hs_inner(&apply_laplacian_spectral(a, 0.0, 1.0), b, 0.0)?;
    let (ga, gb) = (mean_gradient_spectral(a), mean_gradient_spectral(b));
    let mut rhs = ComplexSum::new();
    for (u, v) in ga.iter().zip(&gb) {
        rhs.add(hs_inner(u, v, 0.0)?);
    }
    Ok((lhs, rhs.value()))
}

pub fn ibp_tolerance(lhs: C64) -> f64 {
    1e-12 * (1.0 + lhs.norm())
}

// ---------------------------------------------------------------------------
// Decay conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayCondition {
    /// `∫|a_k| ≤ Ck!/k^δ`.
    Uniform,
    /// `∫|a_k||ξ₁|^p ≤ Ck!/k^{1+δ}`, `p = 1, 2`.
    Grad1,
    /// `∫|a_k||ξ₁||ξ₂| ≤ Ck!/k^{2+δ}`.
    Cross,
    /// `∫|a_k||ξ₁|³ ≤ Ck!/k^{1+δ}` and `∫|a_k||ξ₁|²|ξ₂| ≤ Ck!/k^{3+δ}`.
    Third,
    /// `∫|a_k| ≤ Ck!/k^{3+δ}`.
    Strong3,
}

impl DecayCondition {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => Self::Uniform,
            "grad1" => Self::Grad1,
            "cross" => Self::Cross,
            "third" => Self::Third,
            "strong3" => Self::Strong3,
            other => return Err(Error::InvalidParameter(format!("unknown decay condition {other}"))),
        })
    }

    /// `(weight exponents on |ξ₁|, |ξ₂|; power of k in the bound)`.
    fn moments(self) -> &'static [(i32, i32, f64)] {
        match self {
            Self::Uniform => &[(0, 0, 0.0)],
            Self::Grad1 => &[(1, 0, 1.0), (2, 0, 1.0)],
            Self::Cross => &[(1, 1, 2.0)],
            Self::Third => &[(3, 0, 1.0), (2, 1, 3.0)],
            Self::Strong3 => &[(0, 0, 3.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayLine {
    pub k: usize,
    pub integral: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub condition: DecayCondition,
    pub passed: bool,
    pub first_violation: Option<usize>,
    pub lines: Vec<DecayLine>,
}

/// Quadrature version of the decay bound per degree. Moments involving `ξ₂`
/// vanish for `k = 1`.
pub fn decay_check(a: &SpectralCoefficients, c: f64, delta: f64, condition: DecayCondition) -> DecayReport {
    let mut lines = Vec::new();
    let mut first_violation = None;
    for (k, e) in a.degrees() {
        for &(p1, p2, kp) in condition.moments() {
            if p2 > 0 && k < 2 {
                continue;
            }
            let mut s = KahanSum::new();
            for ((xi, &w), v) in e.grid.nodes().iter().zip(e.grid.quad_weights()).zip(&e.values) {
                let mut weight = 1.0;
                if p1 > 0 {
                    weight *= norm(&xi[0]).powi(p1);
                }
                if p2 > 0 {
                    weight *= norm(&xi[1]).powi(p2);
                }
                s.add(w * v.norm() * weight);
            }
            let bound = c * factorial(k) / (k as f64).powf(kp + delta);
            let integral = s.value();
            if integral > bound * (1.0 + 1e-12) && first_violation.is_none() {
                first_violation = Some(k);
            }
            lines.push(DecayLine { k, integral, bound });
        }
    }
    DecayReport { condition, passed: first_violation.is_none(), first_violation, lines }
}

/// `ε̄(t) = 6C(1/t + 1/(π⁴ε²t³))`: decay constant of `−βλ²b_k(t)` for inputs
/// satisfying the strong3 bound with constant `C`.
pub fn smoothing_decay_constant(c: f64, eps: f64, t: f64) -> f64 {
    6.0 * c * (1.0 / t + 1.0 / (PI.powi(4) * eps * eps * t.powi(3)))
}

// ---------------------------------------------------------------------------
// Smoothing-norm constant

/// `C̄(n,t) = inf_{a≥0} (n! + (at)ⁿ)/(n!(1+a)ⁿ)`, including the limit `tⁿ/n!`.
pub fn smoothing_constant(n: u32, t: f64) -> f64 {
    assert!(n >= 1 && t > 0.0);
    let nf = factorial(n as usize);
    let ln_nf = nf.ln();
    // ln of the ratio, stable for large a.
    let f = |a: f64| {
        let x = n as f64 * (a * t).ln();
        let (hi, lo) = if x > ln_nf { (x, ln_nf) } else { (ln_nf, x) };
        (hi + (lo - hi).exp().ln_1p() - ln_nf - n as f64 * a.ln_1p()).exp()
    };
    let grid: Vec<f64> = (0..=400).map(|i| 10f64.powf(-6.0 + 14.0 * i as f64 / 400.0)).collect();
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for (i, &a) in grid.iter().enumerate() {
        let v = f(a);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = (grid[best_i.saturating_sub(1)].ln(), grid[(best_i + 1).min(grid.len() - 1)].ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1.exp()) < f(x2.exp()) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    best.min(f((0.5 * (lo + hi)).exp())).min(1.0).min(t.powi(n as i32) / nf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    /// `Σ(1/k!)∫|b_k(t)|²(1+λ²_k)^l dξ`.
    pub lhs: f64,
    /// `(1/C̄)Σ(1/k!)∫|a_k|² dξ`.
    pub rhs: f64,
    pub cbar: f64,
    /// Time used in `C̄`; equals `t` when `β ≥ 1/2`, `2βt` otherwise.
    pub t_eff: f64,
}

impl SmoothingReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

/// Evolves `a` to time `t` and compares its `H^l` norm with the `H⁰` norm of `a`.
pub fn smoothing_norm_check(a: &SpectralCoefficients, beta: f64, eps: f64, t: f64, l: u32, n: u32) -> Result<SmoothingReport> {
    if n < l {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least l = {l}")));
    }
    let b = a.map_nodes(|_, xi, v| v * (-beta * lambda_sq_value(xi, eps / beta) * t).exp());
    let lhs = hs_inner(&b, &b, l as f64)?.re;
    let t_eff = if beta >= 0.5 { t } else { 2.0 * beta * t };
    let cbar = smoothing_constant(n, t_eff);
    Ok(SmoothingReport { lhs, rhs: hs_inner(a, a, 0.0)?.re / cbar, cbar, t_eff })
}
