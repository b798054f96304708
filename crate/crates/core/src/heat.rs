//! Brownian motion on measures `σ^{ε,β}_t[m] = (id + √(2β)W_t)_#(G^ε_t ∗ m)`,
//! Monte Carlo expectations, the closed-form heat semigroup on spectral
//! coefficients, and residual checks for the heat equation, Itô's formula and
//! the linear weak form.

use std::f64::consts::PI;

use serde::Serialize;

use crate::calculus::eval_f;
use crate::kernel::SymmetricKernel;
use crate::linalg::{dist_sq, dot, factorial, norm_sq};
use crate::measure::{DiscreteMeasure, Measure, SmoothedMeasure};
use crate::rng::RngStream;
use crate::spectral::{
    apply_laplacian_spectral, eigenfunction, eval_superposition, laplacian_multiplier, SpectralCoefficients,
};
use crate::stats::{run_blocks, run_blocks_n, z_score, McEstimate};
use crate::sum::{ComplexSum, KahanSum};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowParams {
    pub beta: f64,
    pub eps: f64,
    pub t: f64,
}

impl FlowParams {
    pub fn new(beta: f64, eps: f64, t: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
        }
        Ok(Self { beta, eps, t })
    }

    pub fn at(&self, t: f64) -> Self {
        Self { t, ..*self }
    }
}

/// `smooth(m, εt)` translated by `√(2β)·w`.
pub fn flow_state(m: &DiscreteMeasure, p: &FlowParams, w: &[f64]) -> Result<SmoothedMeasure> {
    m.check_dim(w.len())?;
    let shift: Vec<f64> = w.iter().map(|v| (2.0 * p.beta).sqrt() * v).collect();
    m.translate(&shift)?.smooth(p.eps * p.t)
}

/// Brownian path sampled on `times` (starting at 0).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub increments: Vec<Vec<f64>>,
}

impl PathSample {
    pub fn simulate(times: &[f64], d: usize, rng: &mut RngStream) -> Result<Self> {
        if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("path times must start at 0 and increase".into()));
        }
        let increments = times
            .windows(2)
            .map(|w| {
                let sd = (w[1] - w[0]).sqrt();
                rng.normal_vec(d).into_iter().map(|z| sd * z).collect()
            })
            .collect();
        Ok(Self { times: times.to_vec(), increments })
    }

    /// `W_{t_i}` for every grid time.
    pub fn positions(&self) -> Vec<Vec<f64>> {
        let d = self.increments.first().map_or(0, |v| v.len());
        let mut w = vec![0.0; d];
        let mut out = vec![w.clone()];
        for inc in &self.increments {
            w.iter_mut().zip(inc).for_each(|(a, b)| *a += b);
            out.push(w.clone());
        }
        out
    }
}

/// Initial datum `U₀` of the flow.
#[derive(Debug, Clone, Copy)]
pub enum Functional<'a> {
    Spectral(&'a SpectralCoefficients),
    /// `F_Φ`; under smoothing, evaluated by the kernel's closed form when it has
    /// one, otherwise by `samples` Monte Carlo draws of k-tuples.
    Kernel { phi: &'a dyn SymmetricKernel, samples: usize },
}

impl Functional<'_> {
    pub fn eval(&self, mu: &SmoothedMeasure, rng: &mut RngStream) -> Result<C64> {
        match self {
            Functional::Spectral(a) => eval_superposition(a, mu),
            Functional::Kernel { phi, samples } => {
                if mu.variance() == 0.0 {
                    return eval_f(*phi, mu.base());
                }
                if let Some(v) = phi.closed_form_functional(mu) {
                    return Ok(v);
                }
                let k = phi.arity();
                let mut s = ComplexSum::new();
                for _ in 0..*samples {
                    let pts = mu.sample(k, rng);
                    let x: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
                    s.add(phi.value(&x));
                }
                Ok(s.value() / (*samples as f64 * k as f64))
            }
        }
    }
}

/// `𝔼 U₀(σ^{ε,β}_t[m])` over terminal Gaussians `W_t`.
pub fn mc_expectation(
    u: Functional<'_>,
    m: &DiscreteMeasure,
    p: &FlowParams,
    n_paths: usize,
    seed: u64,
    stream_base: u64,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter("n_paths must be at least 2".into()));
    }
    let d = m.dim();
    let sd = p.t.sqrt();
    let acc = run_blocks(n_paths, seed, stream_base, |rng| {
        let w: Vec<f64> = rng.normal_vec(d).into_iter().map(|z| sd * z).collect();
        u.eval(&flow_state(m, p, &w)?, rng)
    })?;
    Ok(acc.estimate())
}

/// `b_k(t,ξ) = a_k(ξ)·exp(−βλ²_{k,ε/β}(ξ)t)`.
pub fn semigroup_closed_form(a: &SpectralCoefficients, p: &FlowParams) -> SpectralCoefficients {
    let mut b = a.map_nodes(|_, xi, v| v * (laplacian_multiplier(xi, p.eps, p.beta) * p.t).exp());
    b.decay = None;
    b
}

/// Coefficients of `βΔ_{w,ε/β}V(t)`: `c_k = −βλ²_{k,ε/β}·b_k(t)`.
pub fn evolved_laplacian(a: &SpectralCoefficients, p: &FlowParams) -> SpectralCoefficients {
    apply_laplacian_spectral(&semigroup_closed_form(a, p), p.eps, p.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementReport {
    pub closed_form: C64,
    pub mc: McEstimate,
    pub z: f64,
}

pub fn semigroup_agreement(
    a: &SpectralCoefficients,
    m: &DiscreteMeasure,
    p: &FlowParams,
    n_paths: usize,
    seed: u64,
    stream_base: u64,
) -> Result<AgreementReport> {
    let closed_form = eval_superposition(&semigroup_closed_form(a, p), m)?;
    let mc = mc_expectation(Functional::Spectral(a), m, p, n_paths, seed, stream_base)?;
    Ok(AgreementReport { closed_form, mc, z: z_score(mc.mean - closed_form, mc.stderr) })
}

pub fn default_dt(t: f64) -> f64 {
    1e-4 * t.max(1.0)
}

/// `|∂_tV − βΔ_{w,ε/β}V|` at `(p.t, m)` with a central difference in time.
pub fn heat_residual(a: &SpectralCoefficients, m: &dyn Measure, p: &FlowParams, dt: f64) -> Result<f64> {
    let v = |t: f64| eval_superposition(&semigroup_closed_form(a, &p.at(t)), m);
    let dv = (v(p.t + dt)? - v(p.t - dt)?) / (2.0 * dt);
    let rhs = eval_superposition(&evolved_laplacian(a, p), m)?;
    Ok((dv - rhs).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RichardsonReport {
    pub dt: f64,
    pub residual: f64,
    pub residual_half: f64,
    pub ratio: f64,
}

impl RichardsonReport {
    pub fn second_order(&self) -> bool {
        (3.5..=4.5).contains(&self.ratio)
    }
}

pub fn heat_residual_richardson(
    a: &SpectralCoefficients,
    m: &dyn Measure,
    p: &FlowParams,
    dt: f64,
) -> Result<RichardsonReport> {
    let residual = heat_residual(a, m, p, dt)?;
    let residual_half = heat_residual(a, m, p, dt / 2.0)?;
    Ok(RichardsonReport { dt, residual, residual_half, ratio: residual / residual_half })
}

/// Euler grid `s, s+Δ, …, r` prefixed by 0.
fn euler_times(s: f64, r: f64, steps: usize) -> Vec<f64> {
    let mut times = vec![0.0];
    times.extend((0..=steps).map(|i| s + (r - s) * i as f64 / steps as f64));
    times
}

fn check_window(s: f64, r: f64, steps: usize) -> Result<()> {
    if !(s > 0.0 && r > s) {
        return Err(Error::InvalidParameter(format!("need 0 < s < r, got s = {s}, r = {r}")));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("at least one time step is required".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItoReport {
    pub estimate: McEstimate,
    /// Exact expectation of the left-point Euler error (Euler sum minus integral).
    pub euler_bias: f64,
    /// Mean change of the residual when the step count doubles, on the same paths.
    pub halving_shift: f64,
    pub steps: usize,
}

impl ItoReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.estimate.mean.norm() <= sigmas * self.estimate.stderr + self.euler_bias.abs()
    }
}

/// Per-mode data `(μ = βλ²_{k,ε/β}, c = w·a·F^k_ξ[m]/k!)`.
fn modes(a: &SpectralCoefficients, m: &DiscreteMeasure, p: &FlowParams) -> Result<Vec<(f64, C64)>> {
    let mut out = Vec::new();
    for (k, e) in a.degrees() {
        for ((xi, &w), &v) in e.grid.nodes().iter().zip(e.grid.quad_weights()).zip(&e.values) {
            let mu = -laplacian_multiplier(xi, p.eps, p.beta);
            out.push((mu, v * w * eigenfunction(xi, m)? / factorial(k)));
        }
    }
    Ok(out)
}

/// `V(r,σ_r) − V(s,σ_s) − Σ(∂_tV + βΔ_{w,ε/β}V)(t_i, σ_{t_i})Δt` along paths of
/// `σ_t = σ^{ε,β}_t[m]`, with `V` the heat evolution of `a`.
#[allow(clippy::too_many_arguments)]
pub fn ito_residual(
    a: &SpectralCoefficients,
    m: &DiscreteMeasure,
    beta: f64,
    eps: f64,
    s: f64,
    r: f64,
    n_paths: usize,
    steps: usize,
    seed: u64,
    stream_base: u64,
) -> Result<ItoReport> {
    check_window(s, r, steps)?;
    let p = FlowParams::new(beta, eps, 0.0)?;
    let d = m.dim();
    // Simulated at twice the resolution; the coarse grid uses every other point.
    let times = euler_times(s, r, 2 * steps);
    let v_at = |t: f64, w: &[f64]| -> Result<C64> {
        eval_superposition(&semigroup_closed_form(a, &p.at(t)), &flow_state(m, &p.at(t), w)?)
    };
    let drift_at = |t: f64, w: &[f64]| -> Result<C64> {
        let c = evolved_laplacian(a, &p.at(t));
        Ok(eval_superposition(&c, &flow_state(m, &p.at(t), w)?)? * 2.0)
    };
    let dt_fine = (r - s) / (2 * steps) as f64;
    let [residual, shift] = run_blocks_n(n_paths, seed, stream_base, |rng| {
        let path = PathSample::simulate(&times, d, rng)?;
        let w = path.positions();
        let ends = v_at(r, &w[w.len() - 1])? - v_at(s, &w[1])?;
        let (mut coarse, mut fine) = (ComplexSum::new(), ComplexSum::new());
        for i in 0..2 * steps {
            let g = drift_at(times[i + 1], &w[i + 1])?;
            fine.add(g * dt_fine);
            if i % 2 == 0 {
                coarse.add(g * (2.0 * dt_fine));
            }
        }
        Ok([ends - coarse.value(), coarse.value() - fine.value()])
    })?;

    // 𝔼 drift(t) = Σ c·(−2μ)e^{−2μt}; bias = Euler sum − exact integral.
    let dt = (r - s) / steps as f64;
    let mut bias = ComplexSum::new();
    for (mu, c) in modes(a, m, &p)? {
        let mut euler = KahanSum::new();
        for i in 0..steps {
            euler.add(-2.0 * mu * (-2.0 * mu * (s + i as f64 * dt)).exp() * dt);
        }
        let exact = (-2.0 * mu * r).exp() - (-2.0 * mu * s).exp();
        bias.add(c * (euler.value() - exact));
    }
    Ok(ItoReport {
        estimate: residual.estimate(),
        euler_bias: bias.value().norm(),
        halving_shift: shift.estimate().mean.norm(),
        steps,
    })
}

// ---------------------------------------------------------------------------
// Linear weak form

/// C² test functions with closed-form Gaussian integrals of `φ` and `Δφ`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `⟨a,x⟩ + b`.
    Linear { a: Vec<f64>, b: f64 },
    /// `|x|²`.
    SquaredNorm,
    /// `e^{−2πi⟨ξ,x⟩}`.
    Fourier(Vec<f64>),
    /// `exp(−|x−c|²/(2s²))`.
    Gaussian { center: Vec<f64>, scale: f64 },
}

impl TestFunction {
    pub fn value(&self, x: &[f64]) -> C64 {
        match self {
            Self::Constant(c) => C64::new(*c, 0.0),
            Self::Linear { a, b } => C64::new(dot(a, x) + b, 0.0),
            Self::SquaredNorm => C64::new(norm_sq(x), 0.0),
            Self::Fourier(xi) => C64::from_polar(1.0, -2.0 * PI * dot(xi, x)),
            Self::Gaussian { center, scale } => C64::new((-dist_sq(x, center) / (2.0 * scale * scale)).exp(), 0.0),
        }
    }

    /// `(∫φ dN(μ,vI), ∫Δφ dN(μ,vI))`.
    pub fn gaussian_integrals(&self, mu: &[f64], v: f64) -> (C64, C64) {
        let d = mu.len() as f64;
        let zero = C64::new(0.0, 0.0);
        match self {
            Self::Constant(c) => (C64::new(*c, 0.0), zero),
            Self::Linear { a, b } => (C64::new(dot(a, mu) + b, 0.0), zero),
            Self::SquaredNorm => (C64::new(norm_sq(mu) + d * v, 0.0), C64::new(2.0 * d, 0.0)),
            Self::Fourier(xi) => {
                let f = C64::from_polar((-2.0 * PI * PI * v * norm_sq(xi)).exp(), -2.0 * PI * dot(xi, mu));
                (f, f * (-4.0 * PI * PI * norm_sq(xi)))
            }
            Self::Gaussian { center, scale } => {
                let s2 = scale * scale + v;
                let r2 = dist_sq(mu, center);
                let f = (scale * scale / s2).powf(d / 2.0) * (-r2 / (2.0 * s2)).exp();
                (C64::new(f, 0.0), C64::new(f * (r2 / (s2 * s2) - d / s2), 0.0))
            }
        }
    }

    /// `(∫φ dμ, ∫Δφ dμ)` for a smoothed measure.
    pub fn integrals(&self, mu: &SmoothedMeasure) -> (C64, C64) {
        let base = mu.base();
        let (mut a, mut b) = (ComplexSum::new(), ComplexSum::new());
        for (x, &w) in base.atoms().iter().zip(base.weights()) {
            let (f, l) = self.gaussian_integrals(x, mu.variance());
            a.add(f * w);
            b.add(l * w);
        }
        (a.value(), b.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakFormReport {
    pub estimate: McEstimate,
    /// Expected left-point Euler error.
    pub euler_bias: f64,
    pub steps: usize,
}

impl WeakFormReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        self.estimate.mean.norm() <= sigmas * self.estimate.stderr + self.euler_bias
    }
}

/// `∫φ dσ_r − ∫φ dσ_s − Σ(ε+β)∫Δφ dσ_{t_i} Δt` along paths of `σ^{ε,β}_t[m]`.
#[allow(clippy::too_many_arguments)]
pub fn weak_form_check(
    m: &DiscreteMeasure,
    beta: f64,
    eps: f64,
    phi: &TestFunction,
    s: f64,
    r: f64,
    n_paths: usize,
    steps: usize,
    seed: u64,
    stream_base: u64,
) -> Result<WeakFormReport> {
    check_window(s, r, steps)?;
    let p = FlowParams::new(beta, eps, 0.0)?;
    let times = euler_times(s, r, steps);
    let dt = (r - s) / steps as f64;
    let acc = run_blocks(n_paths, seed, stream_base, |rng| {
        let path = PathSample::simulate(&times, m.dim(), rng)?;
        let w = path.positions();
        let at = |i: usize| flow_state(m, &p.at(times[i]), &w[i]).map(|mu| phi.integrals(&mu));
        let mut drift = ComplexSum::new();
        for i in 1..=steps {
            drift.add(at(i)?.1 * ((eps + beta) * dt));
        }
        Ok(at(steps + 1)?.0 - at(1)?.0 - drift.value())
    })?;
    // 𝔼∫ψ dσ_t = ∫ψ d(N(0, 2(β+ε)t) ∗ m).
    let expected = |t: f64| -> Result<(C64, C64)> { Ok(phi.integrals(&m.smooth((beta + eps) * t)?)) };
    let mut euler = ComplexSum::new();
    for i in 0..steps {
        euler.add(expected(s + i as f64 * dt)?.1 * ((eps + beta) * dt));
    }
    let euler_bias = (euler.value() - (expected(r)?.0 - expected(s)?.0)).norm();
    Ok(WeakFormReport { estimate: acc.estimate(), euler_bias, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ExponentialKernel, TensorPolynomial};
    use crate::rng::stream_id;
    use crate::spectral::SpectralGrid;
    use std::sync::Arc;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap()
    }

    fn mode(xi: Vec<Vec<f64>>) -> SpectralCoefficients {
        SpectralCoefficients::single_mode(xi, C64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(FlowParams::new(0.0, 0.1, 1.0).is_err());
        assert!(FlowParams::new(1.0, -0.1, 1.0).is_err());
        assert!(FlowParams::new(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn flow_state_examples() {
        let m = DiscreteMeasure::new(vec![vec![0.2, -0.1], vec![0.5, 0.4]], Some(vec![0.3, 0.7])).unwrap();
        let p = FlowParams::new(0.8, 0.3, 0.0).unwrap();
        let s = flow_state(&m, &p, &[0.0, 0.0]).unwrap();
        assert_eq!(s.base(), &m);
        assert_eq!(s.variance(), 0.0);

        let p = FlowParams::new(0.8, 0.0, 0.7).unwrap();
        let w = [0.3, -1.1];
        let shift: Vec<f64> = w.iter().map(|v| (1.6f64).sqrt() * v).collect();
        assert_eq!(flow_state(&m, &p, &w).unwrap().base(), &m.translate(&shift).unwrap());

        let p = FlowParams::new(0.8, 0.3, 0.7).unwrap();
        let mut rng = RngStream::new(30, 0);
        for _ in 0..20 {
            let xi = [rng.normal(), rng.normal()];
            let got = flow_state(&m, &p, &w).unwrap().char_fn(&xi).unwrap();
            let mut direct = C64::new(0.0, 0.0);
            for (x, &wt) in m.atoms().iter().zip(m.weights()) {
                direct += C64::from_polar(wt, -2.0 * PI * dot(&xi, x));
            }
            let expect = C64::from_polar(1.0, -2.0 * PI * (1.6f64).sqrt() * dot(&xi, &w))
                * direct
                * (-4.0 * PI * PI * p.eps * p.t * norm_sq(&xi)).exp();
            assert!((got - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
            // Smoothing then translating is the same measure.
            let other = m.smooth(p.eps * p.t).unwrap().translate(&shift).unwrap().char_fn(&xi).unwrap();
            assert!((got - other).norm() <= 1e-12);
        }
    }

    #[test]
    fn path_increments_have_step_variance() {
        let times = [0.0, 0.1, 0.4, 1.0];
        let mut sums = [0.0f64; 3];
        let n = 20_000;
        let mut rng = RngStream::new(31, 0);
        for _ in 0..n {
            let p = PathSample::simulate(&times, 1, &mut rng).unwrap();
            assert_eq!(p.positions()[0], vec![0.0]);
            for (s, inc) in sums.iter_mut().zip(&p.increments) {
                *s += inc[0] * inc[0];
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let h = times[i + 1] - times[i];
            // Sample variance of χ²₁·h has sd h·√(2/n).
            assert!((s / n as f64 - h).abs() <= 3.0 * h * (2.0 / n as f64).sqrt());
        }
        assert!(PathSample::simulate(&[0.0, 0.0], 1, &mut rng).is_err());
    }

    #[test]
    fn mc_expectation_examples() {
        let m = two_point();
        let a = mode(vec![vec![0.4]]);
        let p0 = FlowParams::new(1.0, 0.2, 0.0).unwrap();
        let e = mc_expectation(Functional::Spectral(&a), &m, &p0, 100, 1, 0).unwrap();
        assert_eq!(e.mean, eval_superposition(&a, &m).unwrap());
        assert_eq!(e.stderr, 0.0);

        let one = TensorPolynomial::constant(2, 1, 1.0).unwrap();
        let p = FlowParams::new(1.0, 0.2, 0.3).unwrap();
        let e = mc_expectation(Functional::Kernel { phi: &one, samples: 4 }, &m, &p, 100, 1, 0).unwrap();
        assert!((e.mean - 0.5).norm() < 1e-15 && e.stderr < 1e-15);

        let xi = 0.4;
        let p = FlowParams::new(0.7, 0.2, 0.3).unwrap();
        let e = mc_expectation(Functional::Spectral(&a), &m, &p, 10_000, 2, 0).unwrap();
        let expect = m.char_fn(&[xi]).unwrap() * (-4.0 * PI * PI * (p.beta + p.eps) * xi * xi * p.t).exp();
        assert!(z_score(e.mean - expect, e.stderr) <= 4.0);

        // Kernel path with its closed form agrees with the spectral path on the same streams.
        let k = ExponentialKernel::new(vec![vec![xi]]).unwrap();
        let ek = mc_expectation(Functional::Kernel { phi: &k, samples: 1 }, &m, &p, 2000, 2, 0).unwrap();
        let es = mc_expectation(Functional::Spectral(&a), &m, &p, 2000, 2, 0).unwrap();
        assert!((ek.mean - es.mean).norm() < 1e-12);
    }

    #[test]
    fn sampled_kernel_evaluation_is_unbiased() {
        // F_{|x|²} under N(μ, v) smoothing of δ_μ is |μ|² + d·v.
        let sq = TensorPolynomial::squared_norm(1).unwrap();
        let mu = SmoothedMeasure::new(DiscreteMeasure::dirac(vec![0.5]).unwrap(), 0.2).unwrap();
        let mut rng = RngStream::new(32, 0);
        let f = Functional::Kernel { phi: &sq, samples: 200_000 };
        let v = f.eval(&mu, &mut rng).unwrap();
        assert!((v.re - 0.45).abs() < 5e-3);
    }

    #[test]
    fn stderr_scales_with_paths() {
        let m = two_point();
        let a = mode(vec![vec![0.3], vec![0.2]]);
        let p = FlowParams::new(1.0, 0.0, 0.5).unwrap();
        let e1 = mc_expectation(Functional::Spectral(&a), &m, &p, 4096, 3, 0).unwrap();
        let e4 = mc_expectation(Functional::Spectral(&a), &m, &p, 4 * 4096, 3, 100).unwrap();
        let ratio = e1.stderr / e4.stderr;
        assert!((ratio - 2.0).abs() <= 0.5, "{ratio}");
    }

    #[test]
    fn block_reduction_independent_of_thread_count() {
        let m = two_point();
        let a = mode(vec![vec![0.3], vec![0.2]]);
        let p = FlowParams::new(1.0, 0.1, 0.5).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_expectation(Functional::Spectral(&a), &m, &p, 5000, 9, stream_id(1, 0)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn semigroup_examples() {
        let a = mode(vec![vec![1.0]]);
        let p = FlowParams::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(semigroup_closed_form(&a, &p), a);
        let b = semigroup_closed_form(&a, &p.at(0.1));
        assert!((b.degree(1).unwrap().values[0].re - (-0.4 * PI * PI).exp()).abs() < 1e-15);
        let h = mode(vec![vec![1.0], vec![-1.0]]);
        assert_eq!(semigroup_closed_form(&h, &p.at(5.0)), h);

        // Semigroup property.
        let p = FlowParams::new(0.6, 0.3, 0.0).unwrap();
        let mut rng = RngStream::new(33, 0);
        // Moderate exponents: rounding in the exponent scales with |μt|.
        let xs = (0..6).map(|_| vec![vec![0.2 * rng.normal()], vec![0.2 * rng.normal()]]).collect();
        let grid = Arc::new(SpectralGrid::new(2, 1, xs, vec![0.5; 6]).unwrap());
        let a = SpectralCoefficients::new().with_degree(grid, (0..6).map(|_| C64::new(rng.normal(), rng.normal())).collect()).unwrap();
        let once = semigroup_closed_form(&a, &p.at(0.7));
        let twice = semigroup_closed_form(&semigroup_closed_form(&a, &p.at(0.3)), &p.at(0.4));
        for (x, y) in once.degree(2).unwrap().values.iter().zip(&twice.degree(2).unwrap().values) {
            assert!((x - y).norm() <= 1e-14 * x.norm());
        }
    }

    #[test]
    fn semigroup_agreement_examples() {
        let m = two_point();
        let a = mode(vec![vec![0.3], vec![0.4]]);
        let r = semigroup_agreement(&a, &m, &FlowParams::new(1.0, 0.0, 0.0).unwrap(), 10, 1, 0).unwrap();
        assert_eq!(r.z, 0.0);
        let r = semigroup_agreement(&a, &m, &FlowParams::new(1.0, 0.0, 0.2).unwrap(), 10_000, 1, 0).unwrap();
        assert!(r.z <= 4.0, "{r:?}");
        let h = mode(vec![vec![1.0], vec![-1.0]]);
        let r = semigroup_agreement(&h, &m, &FlowParams::new(1.0, 0.0, 1.0).unwrap(), 10_000, 1, 0).unwrap();
        assert!((r.closed_form - eigenfunction(&[vec![1.0], vec![-1.0]], &m).unwrap() / 2.0).norm() < 1e-15);
        assert!(r.z <= 3.0);
    }

    #[test]
    fn heat_residual_examples() {
        let m = DiscreteMeasure::uniform(vec![vec![0.1], vec![0.7]]).unwrap();
        let h = mode(vec![vec![1.0], vec![-1.0]]);
        let p = FlowParams::new(1.0, 0.0, 0.5).unwrap();
        assert!(heat_residual(&h, &m, &p, default_dt(p.t)).unwrap() < 1e-12);
        let a = mode(vec![vec![0.5]]);
        let r = heat_residual_richardson(&a, &m, &p, 1e-3).unwrap();
        assert!(r.second_order(), "{r:?}");
        let p = FlowParams::new(0.5, 0.2, 0.3).unwrap();
        let r = heat_residual_richardson(&mode(vec![vec![0.4], vec![0.3]]), &m, &p, 1e-3).unwrap();
        assert!(r.second_order(), "{r:?}");
    }

    #[test]
    fn ito_examples() {
        let m = DiscreteMeasure::uniform(vec![vec![0.1], vec![0.6]]).unwrap();
        let constant = mode(vec![vec![0.0]]);
        let r = ito_residual(&constant, &m, 1.0, 0.3, 0.1, 0.5, 100, 8, 1, 0).unwrap();
        assert_eq!(r.estimate.mean.norm(), 0.0);

        let h = mode(vec![vec![1.0], vec![-1.0]]);
        let r = ito_residual(&h, &m, 1.0, 0.0, 0.1, 0.5, 1000, 8, 1, 0).unwrap();
        assert!(r.estimate.mean.norm() < 1e-14 && r.euler_bias == 0.0);

        let a = mode(vec![vec![0.3]]);
        let r = ito_residual(&a, &m, 1.0, 0.2, 0.1, 0.6, 10_000, 64, 2, 0).unwrap();
        assert!(r.passes(3.0), "{r:?}");
        assert!(ito_residual(&a, &m, 1.0, 0.2, 0.0, 0.6, 10, 4, 2, 0).is_err());
    }

    #[test]
    fn ito_bias_matches_large_step_mean() {
        // With very few steps the Euler bias dominates and must be visible in the mean.
        let m = DiscreteMeasure::uniform(vec![vec![0.1], vec![0.6]]).unwrap();
        let a = mode(vec![vec![0.3]]);
        let r = ito_residual(&a, &m, 1.0, 0.2, 0.1, 1.1, 20_000, 2, 3, 0).unwrap();
        assert!(r.euler_bias > 10.0 * r.estimate.stderr);
        assert!((r.estimate.mean.norm() - r.euler_bias).abs() <= 4.0 * r.estimate.stderr, "{r:?}");
        assert!(r.halving_shift > 0.0);
    }

    #[test]
    fn test_function_integrals_match_quadrature() {
        let (nodes, weights) = crate::linalg::gauss_legendre(80);
        let (mu, v): (f64, f64) = (0.3, 0.15);
        let sd = v.sqrt();
        let fns = [
            TestFunction::Constant(2.0),
            TestFunction::Linear { a: vec![1.5], b: -0.2 },
            TestFunction::SquaredNorm,
            TestFunction::Fourier(vec![0.7]),
            TestFunction::Gaussian { center: vec![-0.1], scale: 0.4 },
        ];
        for f in &fns {
            let (mut i0, mut i2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            let lap_fd = |x: f64| {
                let h = 1e-4;
                (f.value(&[x + h]) - 2.0 * f.value(&[x]) + f.value(&[x - h])) / (h * h)
            };
            for (&u, &w) in nodes.iter().zip(&weights) {
                let z = 8.0 * u;
                let dens = (-z * z / 2.0).exp() / (2.0 * PI).sqrt() * 8.0 * w;
                i0 += f.value(&[mu + sd * z]) * dens;
                i2 += lap_fd(mu + sd * z) * dens;
            }
            let (a, b) = f.gaussian_integrals(&[mu], v);
            assert!((a - i0).norm() < 1e-9, "{f:?}");
            assert!((b - i2).norm() < 1e-5, "{f:?}: {b} vs {i2}");
        }
    }

    #[test]
    fn weak_form_examples() {
        let m = DiscreteMeasure::uniform(vec![vec![0.1], vec![0.6]]).unwrap();
        let r = weak_form_check(&m, 1.0, 0.2, &TestFunction::Constant(1.0), 0.1, 0.5, 100, 8, 1, 0).unwrap();
        assert_eq!(r.estimate.mean.norm(), 0.0);
        let lin = TestFunction::Linear { a: vec![1.0], b: 0.0 };
        let r = weak_form_check(&m, 1.0, 0.2, &lin, 0.1, 0.5, 10_000, 16, 1, 0).unwrap();
        assert!(r.passes(3.0), "{r:?}");
        let four = TestFunction::Fourier(vec![0.3]);
        let r = weak_form_check(&m, 1.0, 0.2, &four, 0.1, 0.5, 10_000, 64, 2, 0).unwrap();
        assert!(r.passes(3.0), "{r:?}");
        let g = TestFunction::Gaussian { center: vec![0.2], scale: 0.5 };
        let r = weak_form_check(&m, 0.5, 0.1, &g, 0.1, 0.5, 10_000, 64, 3, 0).unwrap();
        assert!(r.passes(3.0), "{r:?}");
    }

    #[test]
    fn smoothing_makes_strong3_inputs_regular() {
        use crate::spectral::{decay_check, smoothing_decay_constant, DecayCondition};
        let mut a = SpectralCoefficients::new();
        let mut rng = RngStream::new(34, 0);
        for k in 1..=3 {
            let xs = (0..10).map(|_| (0..k).map(|_| vec![3.0 * rng.normal()]).collect()).collect();
            let grid = Arc::new(SpectralGrid::new(k, 1, xs, vec![0.1; 10]).unwrap());
            let vals: Vec<C64> = (0..10).map(|_| C64::new(rng.normal(), rng.normal())).collect();
            let mass: f64 = vals.iter().map(|v| 0.1 * v.norm()).sum();
            let target = factorial(k) / (k as f64).powi(4);
            a.insert(grid, vals.iter().map(|v| v * (target / mass)).collect()).unwrap();
        }
        assert!(decay_check(&a, 1.0, 1.0, DecayCondition::Strong3).passed);
        for t in [0.1, 1.0] {
            let p = FlowParams::new(1.0, 0.5, t).unwrap();
            let c = evolved_laplacian(&a, &p);
            let cbar = smoothing_decay_constant(1.0, p.eps, t);
            for cond in [DecayCondition::Grad1, DecayCondition::Cross, DecayCondition::Third] {
                assert!(decay_check(&c, cbar, 1.0, cond).passed, "{cond:?} t={t}");
            }
        }
    }
}
