//! k-polynomial functionals `F_Φ[m] = (1/k)∫Φ dm^{⊗k}` and their Wasserstein
//! derivatives, Hessian form and partial Laplacians on discrete measures.

use crate::kernel::{hess_block, SymmetricKernel};
use crate::linalg::CMat;
use crate::measure::DiscreteMeasure;
use crate::sum::ComplexSum;
use crate::{Error, Result, C64};

pub const TENSOR_GUARD: f64 = 1e7;

fn guard(n: usize, slots: usize) -> Result<()> {
    let terms = (n as f64).powi(slots as i32);
    if terms > TENSOR_GUARD {
        return Err(Error::TensorGuardExceeded(terms));
    }
    Ok(())
}

fn check(phi: &dyn SymmetricKernel, m: &DiscreteMeasure) -> Result<()> {
    m.check_dim(phi.dim())
}

/// Visits every `slots`-tuple of atom indices with its weight product.
fn for_each_tuple(m: &DiscreteMeasure, slots: usize, mut f: impl FnMut(&[usize], f64)) {
    let n = m.len();
    let mut idx = vec![0usize; slots];
    loop {
        let w: f64 = idx.iter().map(|&i| m.weight(i)).product();
        f(&idx, w);
        let mut pos = slots;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Sum over tuples `(fixed..., x_{j₁}, …)` of `w·g(tuple)`.
fn tensor_sum<T>(
    m: &DiscreteMeasure,
    fixed: &[&[f64]],
    free: usize,
    mut g: impl FnMut(&[&[f64]]) -> T,
    mut acc: impl FnMut(T, f64),
) {
    let mut x: Vec<&[f64]> = fixed.to_vec();
    x.resize(fixed.len() + free, &[]);
    for_each_tuple(m, free, |idx, w| {
        for (slot, &i) in idx.iter().enumerate() {
            x[fixed.len() + slot] = m.atom(i);
        }
        acc(g(&x), w);
    });
}

/// `F_Φ[m]`; uses the kernel's closed form when it has one.
pub fn eval_f(phi: &dyn SymmetricKernel, m: &DiscreteMeasure) -> Result<C64> {
    check(phi, m)?;
    if let Some(v) = phi.closed_form_functional(m) {
        return Ok(v);
    }
    eval_f_tensor(phi, m)
}

/// `F_Φ[m]` by the full tensor sum.
pub fn eval_f_tensor(phi: &dyn SymmetricKernel, m: &DiscreteMeasure) -> Result<C64> {
    check(phi, m)?;
    let k = phi.arity();
    guard(m.len(), k)?;
    let mut s = ComplexSum::new();
    tensor_sum(m, &[], k, |x| phi.value(x), |v, w| s.add(v * w));
    Ok(s.value() / k as f64)
}

/// `A_m(x₁) = ∫∇_{x₁}Φ(x₁, x₂, …) dm^{⊗(k−1)}`.
pub fn grad_w(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, x1: &[f64]) -> Result<Vec<C64>> {
    check(phi, m)?;
    m.check_dim(x1.len())?;
    let k = phi.arity();
    guard(m.len(), k - 1)?;
    let mut acc = vec![ComplexSum::new(); phi.dim()];
    tensor_sum(m, &[x1], k - 1, |x| phi.grad1(x), |g: Vec<C64>, w| {
        acc.iter_mut().zip(g).for_each(|(a, v)| a.add(v * w))
    });
    Ok(acc.iter().map(|a| a.value()).collect())
}

fn matrix_sum(
    phi: &dyn SymmetricKernel,
    m: &DiscreteMeasure,
    fixed: &[&[f64]],
    block: impl Fn(&[&[f64]]) -> CMat,
) -> CMat {
    let d = phi.dim();
    let mut acc = vec![ComplexSum::new(); d * d];
    let free = phi.arity() - fixed.len();
    let mut x: Vec<&[f64]> = fixed.to_vec();
    x.resize(phi.arity(), &[]);
    for_each_tuple(m, free, |idx, w| {
        for (slot, &i) in idx.iter().enumerate() {
            x[fixed.len() + slot] = m.atom(i);
        }
        let h = block(&x);
        for i in 0..d {
            for j in 0..d {
                acc[i * d + j].add(h[(i, j)] * w);
            }
        }
    });
    CMat::from_fn(d, |i, j| acc[i * d + j].value())
}

/// `Ã[m](x₁) = ∫∇²_{x₁x₁}Φ dm^{⊗(k−1)}`.
pub fn grad_grad_w(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, x1: &[f64]) -> Result<CMat> {
    check(phi, m)?;
    m.check_dim(x1.len())?;
    guard(m.len(), phi.arity() - 1)?;
    Ok(matrix_sum(phi, m, &[x1], |x| phi.hess11(x)))
}

/// `A_mm(x₁, x₂) = (k−1)∫∇²_{x₂x₁}Φ dm^{⊗(k−2)}`, zero for k = 1.
pub fn hess_offdiag(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, x1: &[f64], x2: &[f64]) -> Result<CMat> {
    check(phi, m)?;
    m.check_dim(x1.len())?;
    m.check_dim(x2.len())?;
    let k = phi.arity();
    if k == 1 {
        return Ok(CMat::zeros(phi.dim()));
    }
    guard(m.len(), k - 2)?;
    let h = matrix_sum(phi, m, &[x1, x2], |x| phi.hess12(x));
    Ok(h.scale(C64::new((k - 1) as f64, 0.0)))
}

/// `∫⟨Ã ζ₁, ζ₂⟩ dm + ∬⟨A_mm(x, a) ζ₁(a), ζ₂(x)⟩ dm(x) dm(a)` with fields given at the atoms.
pub fn hess_quadratic_form(
    phi: &dyn SymmetricKernel,
    m: &DiscreteMeasure,
    zeta1: &[Vec<f64>],
    zeta2: &[Vec<f64>],
) -> Result<C64> {
    check(phi, m)?;
    if zeta1.len() != m.len() || zeta2.len() != m.len() {
        return Err(Error::ShapeMismatch("vector fields must have one value per atom".into()));
    }
    for z in zeta1.iter().chain(zeta2) {
        m.check_dim(z.len())?;
    }
    let mut s = ComplexSum::new();
    for i in 0..m.len() {
        let a = grad_grad_w(phi, m, m.atom(i))?;
        s.add(a.bilinear(&zeta2[i], &zeta1[i]) * m.weight(i));
        if phi.arity() >= 2 {
            for j in 0..m.len() {
                let b = hess_offdiag(phi, m, m.atom(i), m.atom(j))?;
                s.add(b.bilinear(&zeta2[i], &zeta1[j]) * (m.weight(i) * m.weight(j)));
            }
        }
    }
    Ok(s.value())
}

/// `Δ_{w,ε}F_Φ[m] = F_{Θ_ε}[m] = (1+ε)∫tr ∇²_{x₁x₁}Φ dm^{⊗k} + (k−1)∫tr ∇²_{x₂x₁}Φ dm^{⊗k}`.
pub fn laplacian_w(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, eps: f64) -> Result<C64> {
    check(phi, m)?;
    if eps < 0.0 {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be nonnegative")));
    }
    let k = phi.arity();
    guard(m.len(), k)?;
    let mut diag = ComplexSum::new();
    let mut off = ComplexSum::new();
    tensor_sum(
        m,
        &[],
        k,
        |x| {
            let d = phi.hess11(x).trace();
            let o = if k >= 2 { phi.hess12(x).trace() } else { C64::new(0.0, 0.0) };
            (d, o)
        },
        |(d, o), w| {
            diag.add(d * w);
            off.add(o * w);
        },
    );
    Ok(diag.value() * (1.0 + eps) + off.value() * (k as f64 - 1.0))
}

/// The two pieces `(∫tr Ã dm, ∬tr A_mm dm dm)` computed from the derivative fields.
pub fn laplacian_parts(phi: &dyn SymmetricKernel, m: &DiscreteMeasure) -> Result<(C64, C64)> {
    let mut diag = ComplexSum::new();
    let mut off = ComplexSum::new();
    for i in 0..m.len() {
        diag.add(grad_grad_w(phi, m, m.atom(i))?.trace() * m.weight(i));
        for j in 0..m.len() {
            off.add(hess_offdiag(phi, m, m.atom(i), m.atom(j))?.trace() * (m.weight(i) * m.weight(j)));
        }
    }
    Ok((diag.value(), off.value()))
}

fn uniform_on(x: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::uniform(x.to_vec())
}

/// `Δ_w U[m_x] = Σ_{j,l} div_{x_j}∇_{x_l} u(x)` for `u(x) = F_Φ[m_x]`, `m_x`
/// uniform on the points of `x`, from the kernel's derivative blocks.
pub fn empirical_laplacian(phi: &dyn SymmetricKernel, x: &[Vec<f64>]) -> Result<C64> {
    let m = uniform_on(x)?;
    check(phi, &m)?;
    let k = phi.arity();
    guard(m.len(), k)?;
    let mut s = ComplexSum::new();
    // ∂_{x_a}∂_{x_b} of Φ(x_{j₁},…,x_{j_k}) collects the blocks of slot pairs (s, t)
    // with j_s = a, j_t = b; summing over all atom pairs leaves every slot pair.
    tensor_sum(
        &m,
        &[],
        k,
        |t| {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    acc += hess_block(phi, t, a, b).trace();
                }
            }
            acc
        },
        |v, w| s.add(v * w),
    );
    Ok(s.value() / k as f64)
}

/// Same quantity by central differences of `u` in every pair of atom coordinates.
pub fn empirical_laplacian_fd(phi: &dyn SymmetricKernel, x: &[Vec<f64>], h: f64) -> Result<C64> {
    let u = |y: &[Vec<f64>]| -> Result<C64> { eval_f(phi, &uniform_on(y)?) };
    let n = x.len();
    let d = phi.dim();
    let u0 = u(x)?;
    let mut s = ComplexSum::new();
    for c in 0..d {
        for a in 0..n {
            for b in 0..n {
                let shifted = |da: f64, db: f64| {
                    let mut y = x.to_vec();
                    y[a][c] += da;
                    y[b][c] += db;
                    u(&y)
                };
                let v = if a == b {
                    (shifted(h, 0.0)? - 2.0 * u0 + shifted(-h, 0.0)?) / (h * h)
                } else {
                    (shifted(h, h)? - shifted(h, -h)? - shifted(-h, h)? + shifted(-h, -h)?) / (4.0 * h * h)
                };
                s.add(v);
            }
        }
    }
    Ok(s.value())
}
