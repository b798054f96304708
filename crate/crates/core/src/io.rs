//! JSON formats for measures, spectral coefficient sets, kernels and graded
//! functionals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::kernel::{BumpProduct, EvenProfile, ExponentialKernel, KernelRef, PolyTerm, RadialDifference, TensorPolynomial};
use crate::measure::{DiscreteMeasure, Measure, SmoothedMeasure};
use crate::reconstruction::GradedFunctional;
use crate::spectral::{DecayConstants, SpectralCoefficients, SpectralGrid};
use crate::{Error, Result, C64};

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

// ---------------------------------------------------------------------------
// Measures

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl MeasureFile {
    pub fn build(&self) -> Result<SmoothedMeasure> {
        let m = DiscreteMeasure::new(self.atoms.clone(), self.weights.clone())?;
        m.check_dim(self.dim)?;
        SmoothedMeasure::new(m, self.variance.unwrap_or(0.0))
    }

    pub fn from_measure(m: &dyn Measure) -> Self {
        let v = m.variance();
        Self {
            dim: m.dim(),
            atoms: m.base().atoms().to_vec(),
            weights: Some(m.base().weights().to_vec()),
            variance: (v > 0.0).then_some(v),
        }
    }
}

pub fn parse_measure(text: &str) -> Result<SmoothedMeasure> {
    parse::<MeasureFile>(text)?.build()
}

/// Parses a measure that must not carry a Gaussian part.
pub fn parse_discrete_measure(text: &str) -> Result<DiscreteMeasure> {
    let s = parse_measure(text)?;
    if s.variance() != 0.0 {
        return Err(Error::Parse("expected a discrete measure (variance must be absent or 0)".into()));
    }
    Ok(s.base().clone())
}

// ---------------------------------------------------------------------------
// Spectral coefficients

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeFile {
    pub k: usize,
    /// One flat array of length `k·d` per node.
    pub nodes: Vec<Vec<f64>>,
    pub quad_weights: Vec<f64>,
    pub values_re: Vec<f64>,
    pub values_im: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFile {
    #[serde(rename = "C")]
    pub c: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsFile {
    pub degrees: Vec<DegreeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayFile>,
}

impl CoefficientsFile {
    pub fn build(&self) -> Result<SpectralCoefficients> {
        let mut a = SpectralCoefficients::new();
        for deg in &self.degrees {
            let k = deg.k;
            if k == 0 {
                return Err(Error::Parse("degree 0 is not allowed".into()));
            }
            let flat = deg.nodes.first().map_or(0, |n| n.len());
            if flat == 0 || flat % k != 0 {
                return Err(Error::Parse(format!("node length {flat} is not a positive multiple of k = {k}")));
            }
            let d = flat / k;
            let nodes: Vec<Vec<Vec<f64>>> = deg
                .nodes
                .iter()
                .map(|n| {
                    if n.len() != flat {
                        return Err(Error::Parse(format!("node of length {} in degree {k}", n.len())));
                    }
                    Ok(n.chunks(d).map(|c| c.to_vec()).collect())
                })
                .collect::<Result<_>>()?;
            if deg.values_re.len() != nodes.len() || deg.values_im.len() != nodes.len() {
                return Err(Error::Parse(format!("degree {k}: value arrays do not match the node count")));
            }
            let values = deg.values_re.iter().zip(&deg.values_im).map(|(&r, &i)| C64::new(r, i)).collect();
            a.insert(Arc::new(SpectralGrid::new(k, d, nodes, deg.quad_weights.clone())?), values)?;
        }
        a.decay = self.decay.map(|d| DecayConstants { c: d.c, delta: d.delta });
        Ok(a)
    }

    pub fn from_coefficients(a: &SpectralCoefficients) -> Self {
        let degrees = a
            .degrees()
            .map(|(k, e)| DegreeFile {
                k,
                nodes: e.grid.nodes().iter().map(|n| n.iter().flatten().copied().collect()).collect(),
                quad_weights: e.grid.quad_weights().to_vec(),
                values_re: e.values.iter().map(|v| v.re).collect(),
                values_im: e.values.iter().map(|v| v.im).collect(),
            })
            .collect();
        Self { degrees, decay: a.decay.map(|d| DecayFile { c: d.c, delta: d.delta }) }
    }
}

pub fn parse_coefficients(text: &str) -> Result<SpectralCoefficients> {
    parse::<CoefficientsFile>(text)?.build()
}

pub fn coefficients_to_json(a: &SpectralCoefficients) -> String {
    serde_json::to_string_pretty(&CoefficientsFile::from_coefficients(a)).expect("serializable")
}

// ---------------------------------------------------------------------------
// Kernels and graded functionals

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Symmetrized `e^{−2πiΣ⟨ξ_j,x_j⟩}`; one frequency per slot.
    Exponential { xi: Vec<Vec<f64>> },
    /// Symmetrized monomial `coef·Π_j x_j^{e_j}`; `exponents[slot][coord]`.
    TensorPoly {
        exponents: Vec<Vec<u32>>,
        #[serde(default = "one")]
        coef: f64,
    },
    RadialDifference {
        f: String,
        #[serde(default = "one")]
        scale: f64,
        dim: usize,
    },
    BumpProduct {
        radius: f64,
        arity: usize,
        dim: usize,
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelRef> {
        Ok(match self {
            Self::Exponential { xi } => Arc::new(ExponentialKernel::new(xi.clone())?),
            Self::TensorPoly { exponents, coef } => {
                let k = exponents.len();
                let d = exponents.first().map_or(0, |e| e.len());
                Arc::new(TensorPolynomial::new(k, d, vec![PolyTerm { coef: *coef, exponents: exponents.clone() }])?)
            }
            Self::RadialDifference { f, scale, dim } => Arc::new(RadialDifference::new(*dim, EvenProfile::parse(f, *scale)?)),
            Self::BumpProduct { radius, arity, dim, centers } => {
                Arc::new(BumpProduct::new(*arity, *dim, *radius, centers.clone())?)
            }
        })
    }
}

pub fn parse_kernel(text: &str) -> Result<KernelRef> {
    parse::<KernelSpec>(text)?.build()
}

/// `F = Σ(1/k!)F_{Φ_k}` with one kernel per degree; the degree is the arity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalFile {
    pub components: Vec<KernelSpec>,
}

impl FunctionalFile {
    pub fn build(&self) -> Result<GradedFunctional> {
        let ks = self
            .components
            .iter()
            .map(|s| s.build().map(|k| (k.arity(), k)))
            .collect::<Result<Vec<_>>>()?;
        GradedFunctional::from_kernels(ks)
    }
}

pub fn parse_functional(text: &str) -> Result<GradedFunctional> {
    parse::<FunctionalFile>(text)?.build()
}

/// Evaluation points: a list of k-tuples of points in ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub points: Vec<Vec<Vec<f64>>>,
}

pub fn parse_points(text: &str) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(parse::<PointsFile>(text)?.points)
}
