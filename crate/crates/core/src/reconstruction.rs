//! Recovering symmetric kernels from functionals: the inclusion–exclusion
//! operator `O_k` over empirical sub-measures, the λ-extension `𝓕[λ,m]`, the
//! projections `π_k` and `Φ_k = k·k!·O_k(π_k F)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::calculus::eval_f;
use crate::kernel::KernelRef;
use crate::linalg::{binomial, factorial};
use crate::measure::{DiscreteMeasure, Measure};
use crate::sum::{ComplexSum, Dd};
use crate::{Error, Result, C64};

pub const SUBSET_GUARD: usize = 20;
pub const OK_GUARD: usize = 12;
pub const MAX_DEGREE: usize = 12;
const COND_GUARD: f64 = 1e13;
const STABILIZATION_RTOL: f64 = 1e-8;

/// Nonempty increasing index tuples of `{0..k}`, grouped by size `r = 1..k`.
pub fn subsets(k: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    if k > SUBSET_GUARD {
        return Err(Error::ArityGuardExceeded { op: "subsets", arity: k, limit: SUBSET_GUARD });
    }
    let mut groups = vec![Vec::new(); k];
    for mask in 1u32..(1u32 << k) {
        let set: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        groups[set.len() - 1].push(set);
    }
    for g in &mut groups {
        g.sort();
    }
    Ok(groups)
}

/// `m_{x_I} = (1/|I|) Σ_{i∈I} δ_{x_i}`.
pub fn empirical_from_index(x: &[Vec<f64>], idx: &[usize]) -> Result<DiscreteMeasure> {
    let mut pts = Vec::with_capacity(idx.len());
    for &i in idx {
        pts.push(x.get(i).ok_or(Error::IndexOutOfRange { index: i, len: x.len() })?.clone());
    }
    DiscreteMeasure::uniform(pts)
}

/// One term `c_I·F(m_{x_I})` of `O_k(F)(x)`, with `c_I = (−1)^{k−r}r^k/k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct OkTerm {
    pub subset: Vec<usize>,
    pub coefficient: f64,
    pub value: C64,
}

pub fn ok_terms(f: &dyn Fn(&DiscreteMeasure) -> Result<C64>, x: &[Vec<f64>]) -> Result<Vec<OkTerm>> {
    let k = x.len();
    if k > OK_GUARD {
        return Err(Error::ArityGuardExceeded { op: "O_k", arity: k, limit: OK_GUARD });
    }
    let mut out = Vec::with_capacity((1 << k) - 1);
    for (r0, group) in subsets(k)?.into_iter().enumerate() {
        let r = r0 + 1;
        let sign = if (k - r) % 2 == 0 { 1.0 } else { -1.0 };
        let coefficient = sign * (r as f64).powi(k as i32) / factorial(k);
        for subset in group {
            let value = f(&empirical_from_index(x, &subset)?)?;
            out.push(OkTerm { subset, coefficient, value });
        }
    }
    Ok(out)
}

/// `O_k(F)(x₁,…,x_k) = (1/k!) Σ_r (−1)^{k−r} r^k Σ_{|I|=r} F(m_{x_I})`.
pub fn apply_ok(f: &dyn Fn(&DiscreteMeasure) -> Result<C64>, x: &[Vec<f64>]) -> Result<C64> {
    let terms = ok_terms(f, x)?;
    let mut s = ComplexSum::new();
    for t in terms {
        s.add(t.value * t.coefficient);
    }
    Ok(s.value())
}

pub type Evaluator = dyn Fn(&DiscreteMeasure) -> Result<C64> + Send + Sync;

/// `F = Σ_k (1/k!) F_{Φ_k}`, possibly known only through its evaluator.
#[derive(Clone)]
pub struct GradedFunctional {
    evaluator: Arc<Evaluator>,
    max_degree: Option<usize>,
    underlying: Option<Vec<(usize, KernelRef)>>,
}

impl fmt::Debug for GradedFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradedFunctional")
            .field("max_degree", &self.max_degree)
            .field("underlying", &self.underlying)
            .finish()
    }
}

impl GradedFunctional {
    pub fn from_evaluator(evaluator: Arc<Evaluator>, max_degree: Option<usize>) -> Self {
        Self { evaluator, max_degree, underlying: None }
    }

    /// `Σ(1/k!)F_{Φ_k}` from `(k, Φ_k)` pairs with distinct degrees.
    pub fn from_kernels(kernels: Vec<(usize, KernelRef)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (k, phi) in &kernels {
            if phi.arity() != *k {
                return Err(Error::InvalidParameter(format!("kernel of arity {} listed as degree {k}", phi.arity())));
            }
            if !seen.insert(*k) {
                return Err(Error::InvalidParameter(format!("degree {k} listed twice")));
            }
        }
        let max_degree = kernels.iter().map(|(k, _)| *k).max();
        let ks = kernels.clone();
        let evaluator: Arc<Evaluator> = Arc::new(move |m: &DiscreteMeasure| {
            let mut s = ComplexSum::new();
            for (k, phi) in &ks {
                s.add(eval_f(phi.as_ref(), m)? / factorial(*k));
            }
            Ok(s.value())
        });
        Ok(Self { evaluator, max_degree, underlying: Some(kernels) })
    }

    /// The zero functional with a declared degree bound.
    pub fn zero(max_degree: usize) -> Self {
        Self::from_evaluator(Arc::new(|_: &DiscreteMeasure| Ok(C64::new(0.0, 0.0))), Some(max_degree))
    }

    pub fn eval(&self, m: &DiscreteMeasure) -> Result<C64> {
        (self.evaluator)(m)
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.max_degree
    }

    pub fn underlying(&self) -> Option<&[(usize, KernelRef)]> {
        self.underlying.as_deref()
    }

    /// Largest support radius among known kernels, if all declare one.
    fn kernel_support(&self) -> Option<f64> {
        let ks = self.underlying.as_ref()?;
        ks.iter().map(|(_, p)| p.support_radius()).try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r)))
    }

    /// `m ↦ π_k(F)[m]` as a functional of degree at most `max_degree`.
    pub fn projected(&self, k: usize, path: ExtensionPath) -> Self {
        let me = self.clone();
        Self::from_evaluator(Arc::new(move |m: &DiscreteMeasure| project_pi_k(&me, k, m, path)), self.max_degree)
    }
}

/// How `𝓕[λ,m]` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtensionPath {
    /// `Σ λ^k F_{Φ_k}[m]/k!` from the known kernels.
    Known,
    /// `F(λm + (1−λ)δ_y)` with `y = y_far·e₁`; `None` uses [`default_y_far`].
    Far(Option<f64>),
}

pub fn default_y_far(m: &DiscreteMeasure, kernel_support: Option<f64>) -> f64 {
    10.0 * (m.support_radius().max(kernel_support.unwrap_or(0.0)) + m.diameter() + 1.0)
}

fn far_point(m: &DiscreteMeasure, y_far: f64) -> DiscreteMeasure {
    let mut y = vec![0.0; m.dim()];
    y[0] = y_far;
    DiscreteMeasure::dirac(y).expect("finite far point")
}

/// `𝓕[λ,m]`.
pub fn extension_f_lambda(f: &GradedFunctional, lambda: f64, m: &DiscreteMeasure, path: ExtensionPath) -> Result<C64> {
    let [re, im] = extension_dd(f, lambda, m, path)?;
    Ok(C64::new(re.value(), im.value()))
}

/// `𝓕[λ,m]` in double-double. On the known-kernel path this is the exact
/// polynomial in `λ` with the computed `F_{Φ_k}[m]` as coefficients, which
/// keeps the Vandermonde extraction free of rounding in the data.
fn extension_dd(f: &GradedFunctional, lambda: f64, m: &DiscreteMeasure, path: ExtensionPath) -> Result<[Dd; 2]> {
    match path {
        ExtensionPath::Known => {
            let ks = f
                .underlying()
                .ok_or_else(|| Error::InvalidParameter("known-kernel path needs the underlying kernels".into()))?;
            let (mut re, mut im) = (Dd::default(), Dd::default());
            for (k, phi) in ks {
                let v = eval_f(phi.as_ref(), m)?;
                let mut w = Dd::new(1.0);
                for _ in 0..*k {
                    w = w.mul(Dd::new(lambda));
                }
                let w = w.div(Dd::new(factorial(*k)));
                re = re.add(w.mul(Dd::new(v.re)));
                im = im.add(w.mul(Dd::new(v.im)));
            }
            Ok([re, im])
        }
        ExtensionPath::Far(y_far) => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
            }
            let y = y_far.unwrap_or_else(|| default_y_far(m, f.kernel_support()));
            let at = |y: f64| f.eval(&m.mix(lambda, &far_point(m, y))?);
            let (a, b) = (at(y)?, at(2.0 * y)?);
            let diff = (a - b).norm();
            if diff > STABILIZATION_RTOL * a.norm().max(b.norm()) {
                return Err(Error::NotStabilized(diff));
            }
            Ok([Dd::new(a.re), Dd::new(a.im)])
        }
    }
}

/// Nodes `λ_j = j/(N+1)`, `j = 1..N`, and `V_{ji} = λ_j^i`, `i = 1..N`.
fn vandermonde(n: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::IllConditioned(format!("degree bound {n} outside 1..={MAX_DEGREE}")));
    }
    let nodes: Vec<f64> = (1..=n).map(|j| j as f64 / (n + 1) as f64).collect();
    let v = DMatrix::from_fn(n, n, |j, i| nodes[j].powi(i as i32 + 1));
    let sv = v.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < COND_GUARD) {
        return Err(Error::IllConditioned(format!("Vandermonde condition number {cond:.3e}")));
    }
    Ok((nodes, v))
}

/// Coefficients of `λ, λ², …, λ^N` in `𝓕[λ,m]`.
pub fn lambda_coefficients(f: &GradedFunctional, m: &DiscreteMeasure, path: ExtensionPath) -> Result<Vec<C64>> {
    let n = f
        .max_degree()
        .ok_or_else(|| Error::InvalidParameter("projection needs a finite degree bound".into()))?;
    let (nodes, _) = vandermonde(n)?;
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for &l in &nodes {
        let [a, b] = extension_dd(f, l, m, path)?;
        re.push(a.div(Dd::new(l)));
        im.push(b.div(Dd::new(l)));
    }
    // 𝓕[λ,m]/λ is a polynomial of degree N−1 with the same coefficients.
    bjorck_pereyra(&nodes, &mut re);
    bjorck_pereyra(&nodes, &mut im);
    Ok(re.iter().zip(&im).map(|(a, b)| C64::new(a.value(), b.value())).collect())
}

/// Monomial coefficients of the polynomial interpolating `(x_j, f_j)`, in place.
fn bjorck_pereyra(x: &[f64], f: &mut [Dd]) {
    let n = x.len();
    for k in 0..n.saturating_sub(1) {
        for j in (k + 1..n).rev() {
            f[j] = f[j].sub(f[j - 1]).div(Dd::new(x[j]).sub(Dd::new(x[j - k - 1])));
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        for j in k..n - 1 {
            f[j] = f[j].sub(Dd::new(x[k]).mul(f[j + 1]));
        }
    }
}

/// `π_k(F)[m]`: the `λ^k` coefficient of `𝓕[λ,m]`, i.e. `F_{Φ_k}[m]/k!`.
pub fn project_pi_k(f: &GradedFunctional, k: usize, m: &DiscreteMeasure, path: ExtensionPath) -> Result<C64> {
    let c = lambda_coefficients(f, m, path)?;
    if k == 0 || k > c.len() {
        return Err(Error::IndexOutOfRange { index: k, len: c.len() });
    }
    Ok(c[k - 1])
}

/// `Φ_k(x) = k·k!·O_k(π_k F)(x)`.
pub fn recover_kernel(f: &GradedFunctional, k: usize, x: &[Vec<f64>], path: ExtensionPath) -> Result<C64> {
    if x.len() != k {
        return Err(Error::ShapeMismatch(format!("{} points for a kernel of arity {k}", x.len())));
    }
    let ok = apply_ok(&|m: &DiscreteMeasure| project_pi_k(f, k, m, path), x)?;
    Ok(ok * (k as f64 * factorial(k)))
}

/// `C_N` with `sup|O_k π_k F| ≤ C_N sup|F|` for `k ≤ N`:
/// `max_k (1/k!) Σ_r r^k C(k,r) ‖row k of V⁻¹‖₁`.
pub fn boundedness_constant(n: usize) -> Result<f64> {
    let (_, v) = vandermonde(n)?;
    let inv = v.try_inverse().ok_or_else(|| Error::IllConditioned("singular Vandermonde".into()))?;
    let mut best: f64 = 0.0;
    for k in 1..=n {
        let row: f64 = inv.row(k - 1).iter().map(|x| x.abs()).sum();
        let ie: f64 = (1..=k).map(|r| (r as f64).powi(k as i32) * binomial(k, r)).sum::<f64>() / factorial(k);
        best = best.max(ie * row);
    }
    Ok(best)
}
