//! The measures `P^{I,J,R}` on pairs of empirical measures and the signed
//! combination `P^{k,R}`, integrated by Monte Carlo over `B_R^k` with common
//! samples across all `(I,J)` terms.

use std::f64::consts::PI;

use serde::Serialize;

use crate::calculus::{eval_f, grad_w, laplacian_w};
use crate::kernel::SymmetricKernel;
use crate::linalg::{factorial, gauss_legendre};
use crate::measure::DiscreteMeasure;
use crate::reconstruction::{empirical_from_index, subsets};
use crate::rng::RngStream;
use crate::stats::{run_blocks_n, z_score, McEstimate};
use crate::sum::ComplexSum;
use crate::{Error, Result, C64};

pub const PKR_GUARD: usize = 5;
const QUADRATURE_BUDGET: f64 = 1e7;

/// Volume of the d-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let unit = match d {
        0 => 1.0,
        1 => 2.0,
        _ => {
            let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
            let mut j = if d % 2 == 0 { 2 } else { 3 };
            while j <= d {
                v *= 2.0 * PI / j as f64;
                j += 2;
            }
            v
        }
    };
    unit * r.powi(d as i32)
}

/// One point uniform in the d-ball: Gaussian direction, radius `R·U^{1/d}`.
pub fn sample_ball(r: f64, d: usize, rng: &mut RngStream) -> Vec<f64> {
    let dir = loop {
        let v = rng.normal_vec(d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let rad = r * rng.uniform().powf(1.0 / d as f64);
    dir.into_iter().map(|x| x * rad).collect()
}

/// `k` independent uniform points of `B_R ⊂ ℝ^d`.
pub fn sample_ball_tuple(r: f64, d: usize, k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..k).map(|_| sample_ball(r, d, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductMeasureSpec {
    pub k: usize,
    pub radius: f64,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub stream_base: u64,
}

impl ProductMeasureSpec {
    pub fn new(k: usize, radius: f64, dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::InvalidParameter("k and dim must be positive".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        if samples < 2 {
            return Err(Error::InvalidParameter("at least two samples are required".into()));
        }
        Ok(Self { k, radius, dim, samples, seed, stream_base: 0 })
    }

    pub fn with_stream_base(self, stream_base: u64) -> Self {
        Self { stream_base, ..self }
    }

    /// `vol(B_R)^k`.
    pub fn lebesgue_mass(&self) -> f64 {
        ball_volume(self.dim, self.radius).powi(self.k as i32)
    }
}

/// `∫ H(m_{x_I}, m_{x_J}) dx` over `B_R^k`.
pub fn integrate_pij<H>(h: H, i: &[usize], j: &[usize], spec: &ProductMeasureSpec) -> Result<McEstimate>
where
    H: Fn(&DiscreteMeasure, &DiscreteMeasure) -> Result<C64> + Sync,
{
    let acc = run_blocks_n(spec.samples, spec.seed, spec.stream_base, |rng| {
        let x = sample_ball_tuple(spec.radius, spec.dim, spec.k, rng);
        Ok([h(&empirical_from_index(&x, i)?, &empirical_from_index(&x, j)?)?])
    })?;
    Ok(acc[0].estimate().scaled(spec.lebesgue_mass()))
}

/// Signed terms `(I, J, (k²/(k!)³)(−1)^{r+p} r^k p^k)` of `P^{k,R}`.
pub fn pkr_terms(k: usize) -> Result<Vec<(Vec<usize>, Vec<usize>, f64)>> {
    if k > PKR_GUARD {
        return Err(Error::ArityGuardExceeded { op: "P^{k,R}", arity: k, limit: PKR_GUARD });
    }
    let groups = subsets(k)?;
    let pre = (k * k) as f64 / factorial(k).powi(3);
    let mut out = Vec::new();
    for (r0, gi) in groups.iter().enumerate() {
        for (p0, gj) in groups.iter().enumerate() {
            let (r, p) = (r0 + 1, p0 + 1);
            let sign = if (r + p) % 2 == 0 { 1.0 } else { -1.0 };
            let c = pre * sign * (r as f64).powi(k as i32) * (p as f64).powi(k as i32);
            for i in gi {
                for j in gj {
                    out.push((i.clone(), j.clone(), c));
                }
            }
        }
    }
    Ok(out)
}

/// `∫ H dP^{k,R}` for `N` integrands at once, on common samples.
pub fn integrate_pkr_with<const N: usize, H>(h: H, spec: &ProductMeasureSpec) -> Result<[McEstimate; N]>
where
    H: Fn(&DiscreteMeasure, &DiscreteMeasure) -> Result<[C64; N]> + Sync,
{
    let terms = pkr_terms(spec.k)?;
    let groups: Vec<Vec<usize>> = subsets(spec.k)?.into_iter().flatten().collect();
    let acc = run_blocks_n(spec.samples, spec.seed, spec.stream_base, |rng| {
        let x = sample_ball_tuple(spec.radius, spec.dim, spec.k, rng);
        let measures: Vec<DiscreteMeasure> =
            groups.iter().map(|g| empirical_from_index(&x, g)).collect::<Result<_>>()?;
        let index = |s: &[usize]| groups.iter().position(|g| g.as_slice() == s).expect("subset in table");
        let mut sums = [ComplexSum::new(); N];
        for (i, j, c) in &terms {
            let v = h(&measures[index(i)], &measures[index(j)])?;
            sums.iter_mut().zip(v).for_each(|(s, z)| s.add(z * *c));
        }
        Ok(sums.map(|s| s.value()))
    })?;
    let mass = spec.lebesgue_mass();
    Ok(acc.map(|a| a.estimate().scaled(mass)))
}

pub fn integrate_pkr<H>(h: H, spec: &ProductMeasureSpec) -> Result<McEstimate>
where
    H: Fn(&DiscreteMeasure, &DiscreteMeasure) -> Result<C64> + Sync,
{
    Ok(integrate_pkr_with(|a, b| h(a, b).map(|v| [v]), spec)?[0])
}

fn check_support(phi: &dyn SymmetricKernel, spec: &ProductMeasureSpec) -> Result<()> {
    if phi.arity() != spec.k {
        return Err(Error::ShapeMismatch(format!("kernel arity {} but k = {}", phi.arity(), spec.k)));
    }
    if phi.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, found: phi.dim() });
    }
    match phi.support_radius() {
        Some(s) if s <= spec.radius => Ok(()),
        other => Err(Error::SupportExceedsBall { support: other.unwrap_or(f64::INFINITY), radius: spec.radius }),
    }
}

/// `∫_{[−R,R]^{dk}} f` by tensor Gauss–Legendre: 64 nodes per axis when
/// `dk ≤ 3`, otherwise as many as a budget of 10⁷ points allows.
pub fn cube_quadrature(f: impl Fn(&[&[f64]]) -> C64, k: usize, d: usize, r: f64, nodes: Option<usize>) -> C64 {
    let axes = k * d;
    let n = nodes.unwrap_or_else(|| {
        if axes <= 3 {
            64
        } else {
            (QUADRATURE_BUDGET.powf(1.0 / axes as f64).floor() as usize).max(2)
        }
    });
    let (t, w) = gauss_legendre(n);
    let mut idx = vec![0usize; axes];
    let mut pts = vec![vec![0.0; d]; k];
    let mut s = ComplexSum::new();
    loop {
        let mut weight = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            pts[a / d][a % d] = r * t[i];
            weight *= r * w[i];
        }
        let x: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        s.add(f(&x) * weight);
        let mut a = axes;
        loop {
            if a == 0 {
                return s.value();
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PkrReport {
    pub lhs: C64,
    pub rhs: C64,
    pub stderr: f64,
    pub z: f64,
}

/// `(1/k!)∫ΦΨ dx` (quadrature) against `∫F_Φ[m₁]F_Ψ[m₂] dP^{k,R}` (Monte Carlo).
pub fn duality_check(
    phi: &dyn SymmetricKernel,
    psi: &dyn SymmetricKernel,
    spec: &ProductMeasureSpec,
    nodes: Option<usize>,
) -> Result<PkrReport> {
    check_support(phi, spec)?;
    check_support(psi, spec)?;
    let lhs = cube_quadrature(|x| phi.value(x) * psi.value(x), spec.k, spec.dim, spec.radius, nodes) / factorial(spec.k);
    let rhs = integrate_pkr(|m1, m2| Ok(eval_f(phi, m1)? * eval_f(psi, m2)?), spec)?;
    Ok(PkrReport { lhs, rhs: rhs.mean, stderr: rhs.stderr, z: z_score(lhs - rhs.mean, rhs.stderr) })
}

/// `D₂ = ∬⟨∇_wF_Φ[m₁](q₁), ∇_wF_Ψ[m₂](q₂)⟩ dm₁ dm₂` (bilinear, no conjugation).
pub fn d2_bilinear(
    phi: &dyn SymmetricKernel,
    psi: &dyn SymmetricKernel,
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
) -> Result<C64> {
    let mean_grad = |f: &dyn SymmetricKernel, m: &DiscreteMeasure| -> Result<Vec<C64>> {
        let mut g = vec![C64::new(0.0, 0.0); f.dim()];
        for (x, &w) in m.atoms().iter().zip(m.weights()) {
            for (a, b) in g.iter_mut().zip(grad_w(f, m, x)?) {
                *a += b * w;
            }
        }
        Ok(g)
    };
    if phi.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: phi.dim(), found: psi.dim() });
    }
    let (g1, g2) = (mean_grad(phi, m1)?, mean_grad(psi, m2)?);
    Ok(g1.iter().zip(&g2).map(|(a, b)| a * b).sum())
}

/// `−∫Δ_wF_Φ[m₁]F_Ψ[m₂] dP^{k,R}` against `∫D₂ dP^{k,R}`; z from the paired
/// per-sample difference.
pub fn ibp_measure_check(
    phi: &dyn SymmetricKernel,
    psi: &dyn SymmetricKernel,
    spec: &ProductMeasureSpec,
) -> Result<PkrReport> {
    check_support(phi, spec)?;
    check_support(psi, spec)?;
    let [lhs, rhs, diff] = integrate_pkr_with(
        |m1, m2| {
            let l = -laplacian_w(phi, m1, 0.0)? * eval_f(psi, m2)?;
            let r = d2_bilinear(phi, psi, m1, m2)?;
            Ok([l, r, l - r])
        },
        spec,
    )?;
    Ok(PkrReport { lhs: lhs.mean, rhs: rhs.mean, stderr: diff.stderr, z: z_score(diff.mean, diff.stderr) })
}
