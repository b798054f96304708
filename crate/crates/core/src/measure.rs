//! Finitely supported probability measures on ℝ^d and their Gaussian smoothings.

use std::f64::consts::PI;

use crate::linalg::{dot, norm_sq};
use crate::rng::RngStream;
use crate::sum::{ComplexSum, KahanSum};
use crate::{Error, Result, C64};

const SUM_TOL: f64 = 1e-12;
const MIN_WEIGHT_SUM: f64 = 1e-9;

/// Common interface of discrete and smoothed measures.
pub trait Measure: Send + Sync {
    fn dim(&self) -> usize;
    fn base(&self) -> &DiscreteMeasure;
    /// Per-coordinate variance of the Gaussian jitter (0 for discrete measures).
    fn variance(&self) -> f64;

    /// `∫ e^{−2πi⟨ξ,x⟩} dμ(x)`.
    fn char_fn(&self, xi: &[f64]) -> Result<C64> {
        let base = self.base().char_fn(xi)?;
        let v = self.variance();
        Ok(if v > 0.0 { base * (-2.0 * PI * PI * v * norm_sq(xi)).exp() } else { base })
    }

    fn second_moment(&self) -> f64 {
        self.base().raw_second_moment() + self.dim() as f64 * self.variance()
    }

    fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let base = self.base();
        let sd = self.variance().sqrt();
        (0..n)
            .map(|_| {
                let j = rng.categorical(&base.cumulative);
                let mut p = base.atoms[j].clone();
                if sd > 0.0 {
                    p.iter_mut().for_each(|c| *c += sd * rng.normal());
                }
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a probability measure; weights default to uniform and are
    /// renormalized when their sum is at least 1e-9.
    pub fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySupport);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("atom"));
            }
        }
        let n = points.len();
        let mut w = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::ShapeMismatch(format!("{} atoms but {} weights", n, w.len())));
                }
                for (index, &value) in w.iter().enumerate() {
                    if !value.is_finite() {
                        return Err(Error::NonFinite("weight"));
                    }
                    if value < 0.0 {
                        return Err(Error::NegativeWeight { index, value });
                    }
                }
                w
            }
        };
        let total = crate::sum::sum_f64(w.iter().copied());
        if total < MIN_WEIGHT_SUM {
            return Err(Error::DegenerateWeightSum(total));
        }
        if (total - 1.0).abs() > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
        }
        debug_assert!((crate::sum::sum_f64(w.iter().copied()) - 1.0).abs() <= SUM_TOL);
        Ok(Self::from_parts(dim, points, w))
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], None)
    }

    fn from_parts(dim: usize, atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Self { dim, atoms, weights, cumulative }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: d })
        }
    }

    /// `(x ↦ x + v)_# m`.
    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        self.check_dim(v.len())?;
        let atoms = self
            .atoms
            .iter()
            .map(|a| a.iter().zip(v).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self::from_parts(self.dim, atoms, self.weights.clone()))
    }

    /// Pushforward by an atom-wise displacement field.
    pub fn displace(&self, field: &[Vec<f64>], scale: f64) -> Result<Self> {
        if field.len() != self.len() {
            return Err(Error::ShapeMismatch("displacement field length".into()));
        }
        let mut atoms = self.atoms.clone();
        for (a, v) in atoms.iter_mut().zip(field) {
            self.check_dim(v.len())?;
            a.iter_mut().zip(v).for_each(|(x, y)| *x += scale * y);
        }
        Ok(Self::from_parts(self.dim, atoms, self.weights.clone()))
    }

    /// Mixture `λ·self + (1−λ)·other`.
    pub fn mix(&self, lambda: f64, other: &DiscreteMeasure) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut atoms = self.atoms.clone();
        let mut weights: Vec<f64> = self.weights.iter().map(|w| lambda * w).collect();
        atoms.extend(other.atoms.iter().cloned());
        weights.extend(other.weights.iter().map(|w| (1.0 - lambda) * w));
        Self::new(atoms, Some(weights))
    }

    pub fn char_fn(&self, xi: &[f64]) -> Result<C64> {
        self.check_dim(xi.len())?;
        let mut s = ComplexSum::new();
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            s.add(C64::from_polar(w, -2.0 * PI * dot(xi, a)));
        }
        Ok(s.value())
    }

    fn raw_second_moment(&self) -> f64 {
        let mut s = KahanSum::new();
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            s.add(w * norm_sq(a));
        }
        s.value()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            m.iter_mut().zip(a).for_each(|(s, x)| *s += w * x);
        }
        m
    }

    /// Largest |x| over the atoms.
    pub fn support_radius(&self) -> f64 {
        self.atoms.iter().map(|a| norm_sq(a).sqrt()).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.atoms {
            for b in &self.atoms {
                d = d.max(crate::linalg::dist_sq(a, b));
            }
        }
        d.sqrt()
    }

    pub fn smooth(&self, eps_t: f64) -> Result<SmoothedMeasure> {
        SmoothedMeasure::new(self.clone(), 2.0 * eps_t)
    }
}

impl Measure for DiscreteMeasure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn base(&self) -> &DiscreteMeasure {
        self
    }
    fn variance(&self) -> f64 {
        0.0
    }
}

/// `G ∗ m` with an isotropic Gaussian of per-coordinate variance `variance`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMeasure {
    base: DiscreteMeasure,
    variance: f64,
}

impl SmoothedMeasure {
    pub fn new(base: DiscreteMeasure, variance: f64) -> Result<Self> {
        if !variance.is_finite() {
            return Err(Error::NonFinite("variance"));
        }
        if variance < 0.0 {
            return Err(Error::NegativeVariance(variance));
        }
        Ok(Self { base, variance })
    }

    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        Ok(Self { base: self.base.translate(v)?, variance: self.variance })
    }

    /// Adds `eps_t` to the heat time, i.e. `2·eps_t` to the variance.
    pub fn smooth_more(&self, eps_t: f64) -> Result<Self> {
        Self::new(self.base.clone(), self.variance + 2.0 * eps_t)
    }
}

impl Measure for SmoothedMeasure {
    fn dim(&self) -> usize {
        self.base.dim
    }
    fn base(&self) -> &DiscreteMeasure {
        &self.base
    }
    fn variance(&self) -> f64 {
        self.variance
    }
}

/// Convenience constructor matching `make_discrete`.
pub fn make_discrete(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(points, weights)
}

/// Convenience constructor matching `smooth`.
pub fn smooth(m: &DiscreteMeasure, eps_t: f64) -> Result<SmoothedMeasure> {
    if eps_t < 0.0 {
        return Err(Error::NegativeVariance(2.0 * eps_t));
    }
    m.smooth(eps_t)
}

pub fn translate_pushforward(m: &DiscreteMeasure, v: &[f64]) -> Result<DiscreteMeasure> {
    m.translate(v)
}
