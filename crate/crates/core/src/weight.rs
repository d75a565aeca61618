//! Weight functions, chaining functions and the weighted forecast
//! distribution `F_w`.

use serde::{Deserialize, Serialize};

use crate::dist::{self, std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::heat::{HeatLevel, HeatThresholds};
use crate::quad;
use crate::WEIGHTED_MASS_FLOOR;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Nonnegative weight over outcomes. Univariate Gaussian families take a
/// standard deviation; multivariate ones take per-dimension variances
/// (diagonal covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFunction {
    Constant,
    /// `1{z > t}`
    IndicatorAbove { threshold: f64 },
    /// `1{z < t}`
    IndicatorBelow { threshold: f64 },
    GaussPdf { mu: f64, sigma: f64 },
    /// `1 - φ(z)/φ(μ)`, emphasising both tails.
    OneMinusGaussPdfRatio { mu: f64, sigma: f64 },
    GaussCdf { mu: f64, sigma: f64 },
    OneMinusGaussCdf { mu: f64, sigma: f64 },
    MvGaussPdf { mu: Vec<f64>, variances: Vec<f64> },
    OneMinusMvGaussPdfRatio { mu: Vec<f64>, variances: Vec<f64> },
    MvGaussCdf { mu: Vec<f64>, variances: Vec<f64> },
    OneMinusMvGaussCdf { mu: Vec<f64>, variances: Vec<f64> },
    /// `1` when `lower_k < z_k <= upper_k` in every dimension.
    BoxIndicator { lower: Vec<f64>, upper: Vec<f64> },
    HeatLevelIndicator {
        level: HeatLevel,
        #[serde(default)]
        thresholds: Option<HeatThresholds>,
    },
}

impl WeightFunction {
    pub fn heat_level(level: HeatLevel) -> Self {
        WeightFunction::HeatLevelIndicator { level, thresholds: None }
    }

    /// Checks parameter validity (positive scales, matching vector lengths).
    pub fn validate(&self) -> Result<()> {
        use WeightFunction::*;
        let ok = match self {
            Constant | HeatLevelIndicator { .. } => true,
            IndicatorAbove { threshold } | IndicatorBelow { threshold } => !threshold.is_nan(),
            GaussPdf { mu, sigma }
            | OneMinusGaussPdfRatio { mu, sigma }
            | GaussCdf { mu, sigma }
            | OneMinusGaussCdf { mu, sigma } => mu.is_finite() && *sigma > 0.0 && sigma.is_finite(),
            MvGaussPdf { mu, variances }
            | OneMinusMvGaussPdfRatio { mu, variances }
            | MvGaussCdf { mu, variances }
            | OneMinusMvGaussCdf { mu, variances } => {
                !mu.is_empty()
                    && mu.len() == variances.len()
                    && mu.iter().all(|m| m.is_finite())
                    && variances.iter().all(|v| *v > 0.0 && v.is_finite())
            }
            BoxIndicator { lower, upper } => {
                !lower.is_empty() && lower.len() == upper.len() && lower.iter().zip(upper).all(|(l, u)| l <= u)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid weight parameters: {self:?}")))
        }
    }

    /// Input dimension, or `None` when any dimension is accepted.
    pub fn dim(&self) -> Option<usize> {
        use WeightFunction::*;
        match self {
            Constant => None,
            IndicatorAbove { .. } | IndicatorBelow { .. } | GaussPdf { .. } | OneMinusGaussPdfRatio { .. } | GaussCdf { .. } | OneMinusGaussCdf { .. } => Some(1),
            MvGaussPdf { mu, .. } | OneMinusMvGaussPdfRatio { mu, .. } | MvGaussCdf { mu, .. } | OneMinusMvGaussCdf { mu, .. } => Some(mu.len()),
            BoxIndicator { lower, .. } => Some(lower.len()),
            HeatLevelIndicator { .. } => Some(3),
        }
    }

    pub fn name(&self) -> &'static str {
        use WeightFunction::*;
        match self {
            Constant => "constant",
            IndicatorAbove { .. } => "indicator_above",
            IndicatorBelow { .. } => "indicator_below",
            GaussPdf { .. } => "gauss_pdf",
            OneMinusGaussPdfRatio { .. } => "one_minus_gauss_pdf_ratio",
            GaussCdf { .. } => "gauss_cdf",
            OneMinusGaussCdf { .. } => "one_minus_gauss_cdf",
            MvGaussPdf { .. } => "mv_gauss_pdf",
            OneMinusMvGaussPdfRatio { .. } => "one_minus_mv_gauss_pdf_ratio",
            MvGaussCdf { .. } => "mv_gauss_cdf",
            OneMinusMvGaussCdf { .. } => "one_minus_mv_gauss_cdf",
            BoxIndicator { .. } => "box_indicator",
            HeatLevelIndicator { .. } => "heat_level_indicator",
        }
    }

    /// True when the weight only takes the values 0 and 1.
    pub fn is_binary(&self) -> bool {
        use WeightFunction::*;
        matches!(self, Constant | IndicatorAbove { .. } | IndicatorBelow { .. } | BoxIndicator { .. } | HeatLevelIndicator { .. })
    }

    /// Points where a univariate weight is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            WeightFunction::IndicatorAbove { threshold } | WeightFunction::IndicatorBelow { threshold } if threshold.is_finite() => {
                vec![threshold]
            }
            _ => Vec::new(),
        }
    }

    /// Discontinuities plus points resolving the scale of smooth weights,
    /// used to split integrals involving the weight.
    pub fn guide_points(&self) -> Vec<f64> {
        let mut points = self.breakpoints();
        match *self {
            WeightFunction::GaussPdf { mu, sigma }
            | WeightFunction::OneMinusGaussPdfRatio { mu, sigma }
            | WeightFunction::GaussCdf { mu, sigma }
            | WeightFunction::OneMinusGaussCdf { mu, sigma } => {
                points.extend([-10.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 10.0].iter().map(|k| mu + k * sigma));
            }
            _ => {}
        }
        points
    }

    /// `w(z)`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if z.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: z.len() });
            }
        }
        Ok(self.eval_unchecked(z))
    }

    /// `w(z)` for a univariate weight. The weight must accept dimension one.
    #[inline]
    pub fn at(&self, z: f64) -> f64 {
        debug_assert!(matches!(self.dim(), None | Some(1)));
        self.eval_unchecked(std::slice::from_ref(&z))
    }

    pub(crate) fn eval_unchecked(&self, z: &[f64]) -> f64 {
        use WeightFunction::*;
        match self {
            Constant => 1.0,
            IndicatorAbove { threshold } => f64::from(u8::from(z[0] > *threshold)),
            IndicatorBelow { threshold } => f64::from(u8::from(z[0] < *threshold)),
            GaussPdf { mu, sigma } => dist::normal_pdf(z[0], *mu, *sigma),
            OneMinusGaussPdfRatio { mu, sigma } => {
                let u = (z[0] - mu) / sigma;
                1.0 - (-0.5 * u * u).exp()
            }
            GaussCdf { mu, sigma } => dist::normal_cdf(z[0], *mu, *sigma),
            OneMinusGaussCdf { mu, sigma } => std_normal_cdf(-(z[0] - mu) / sigma),
            MvGaussPdf { mu, variances } => z
                .iter()
                .zip(mu)
                .zip(variances)
                .map(|((x, m), v)| dist::normal_pdf(*x, *m, v.sqrt()))
                .product(),
            OneMinusMvGaussPdfRatio { mu, variances } => {
                let q: f64 = z.iter().zip(mu).zip(variances).map(|((x, m), v)| (x - m).powi(2) / v).sum();
                1.0 - (-0.5 * q).exp()
            }
            MvGaussCdf { mu, variances } => mv_gauss_cdf(z, mu, variances),
            OneMinusMvGaussCdf { mu, variances } => 1.0 - mv_gauss_cdf(z, mu, variances),
            BoxIndicator { lower, upper } => {
                let inside = z.iter().zip(lower).zip(upper).all(|((x, l), u)| x > l && x <= u);
                f64::from(u8::from(inside))
            }
            HeatLevelIndicator { level, thresholds } => {
                let th = thresholds.unwrap_or_default();
                f64::from(u8::from(th.classify_unchecked(z) == *level))
            }
        }
    }

    /// `∫_{a}^{b} w(x) dF(x)` for a univariate weight and forecast.
    pub fn weighted_mass(&self, forecast: &Forecast, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        if let Forecast::Ensemble { members } = forecast {
            let m = members.len() as f64;
            return Ok(members.iter().filter(|&&x| x > a && x <= b).map(|&x| self.at(x)).sum::<f64>() / m);
        }
        let cdf = |x: f64| {
            if x == f64::NEG_INFINITY {
                0.0
            } else if x == f64::INFINITY {
                1.0
            } else {
                forecast.cdf(x)
            }
        };
        match *self {
            WeightFunction::Constant => Ok(cdf(b) - cdf(a)),
            WeightFunction::IndicatorAbove { threshold } => {
                let lo = a.max(threshold);
                Ok(if b > lo { cdf(b) - cdf(lo) } else { 0.0 })
            }
            WeightFunction::IndicatorBelow { threshold } => {
                let hi = b.min(threshold);
                Ok(if hi > a { cdf(hi) - cdf(a) } else { 0.0 })
            }
            _ => {
                let (lo, hi) = forecast.tail_bounds();
                let (lo, hi) = (a.max(lo), b.min(hi));
                if hi <= lo {
                    return Ok(0.0);
                }
                let pdf = |x: f64| self.at(x) * forecast.pdf(x).unwrap_or(0.0);
                let mut points = self.guide_points();
                points.extend(forecast.guide_points());
                quad::integrate(pdf, lo, hi, &points)
            }
        }
    }
}

fn mv_gauss_cdf(z: &[f64], mu: &[f64], variances: &[f64]) -> f64 {
    z.iter().zip(mu).zip(variances).map(|((x, m), v)| dist::normal_cdf(*x, *m, v.sqrt())).product()
}

/// `eval_weight`: `w(z)` with a dimension check.
pub fn eval_weight(w: &WeightFunction, z: &[f64]) -> Result<f64> {
    w.eval(z)
}

/// `F_w(x) = E_F[1{X <= x} w(X)] / E_F[w(X)]`.
pub fn weighted_cdf(forecast: &Forecast, w: &WeightFunction, x: f64) -> Result<f64> {
    forecast.validate()?;
    if !matches!(w.dim(), None | Some(1)) {
        return Err(Error::DimensionMismatch { expected: 1, got: w.dim().unwrap_or(1) });
    }
    let total = w.weighted_mass(forecast, f64::NEG_INFINITY, f64::INFINITY)?;
    if total <= WEIGHTED_MASS_FLOOR {
        return Err(Error::WeightedMassZero { mass: total });
    }
    let part = w.weighted_mass(forecast, f64::NEG_INFINITY, x)?;
    Ok((part / total).clamp(0.0, 1.0))
}

/// Transformation `v` with `v(z) - v(z') = ∫_{z'}^{z} w` for the
/// associated weight (univariate families), or the collapse map
/// `z ↦ z` if `w(z) = 1`, `z ↦ z₀` if `w(z) = 0` for binary multivariate
/// weights. Univariate families act componentwise on vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ChainingFunction {
    Identity,
    /// `max(z, t)`, chaining for `1{z > t}`.
    CensorAbove { threshold: f64 },
    /// `min(z, t)`, chaining for `1{z < t}`.
    CensorBelow { threshold: f64 },
    /// `Φ_{μ,σ}(z)`, chaining for the Gaussian density weight.
    GaussPdfChain { mu: f64, sigma: f64 },
    /// `z - σ√(2π) Φ_{μ,σ}(z)`, chaining for `1 - φ(z)/φ(μ)`.
    GaussTailChain { mu: f64, sigma: f64 },
    /// `(z - μ)Φ_{μ,σ}(z) + σ² φ_{μ,σ}(z)`, chaining for the Gaussian CDF weight.
    GaussCdfChain { mu: f64, sigma: f64 },
    /// `z - [(z - μ)Φ_{μ,σ}(z) + σ² φ_{μ,σ}(z)]`, chaining for `1 - Φ_{μ,σ}`.
    GaussSurvivalChain { mu: f64, sigma: f64 },
    CollapseOutside { weight: WeightFunction, origin: Vec<f64> },
}

impl ChainingFunction {
    /// Collapse map for a binary weight; `origin` is the point `z₀`.
    pub fn collapse_outside(weight: WeightFunction, origin: Vec<f64>) -> Result<Self> {
        weight.validate()?;
        if !weight.is_binary() {
            return Err(Error::contract(format!("collapse chaining needs a binary weight, got {}", weight.name())));
        }
        if let Some(d) = weight.dim() {
            if d != origin.len() {
                return Err(Error::DimensionMismatch { expected: d, got: origin.len() });
            }
        }
        Ok(ChainingFunction::CollapseOutside { weight, origin })
    }

    /// The univariate chaining whose derivative is `w`, when one is known.
    pub fn for_weight(w: &WeightFunction) -> Option<Self> {
        use WeightFunction as W;
        Some(match *w {
            W::Constant => ChainingFunction::Identity,
            W::IndicatorAbove { threshold } => ChainingFunction::CensorAbove { threshold },
            W::IndicatorBelow { threshold } => ChainingFunction::CensorBelow { threshold },
            W::GaussPdf { mu, sigma } => ChainingFunction::GaussPdfChain { mu, sigma },
            W::OneMinusGaussPdfRatio { mu, sigma } => ChainingFunction::GaussTailChain { mu, sigma },
            W::GaussCdf { mu, sigma } => ChainingFunction::GaussCdfChain { mu, sigma },
            W::OneMinusGaussCdf { mu, sigma } => ChainingFunction::GaussSurvivalChain { mu, sigma },
            _ => return None,
        })
    }

    /// Derivative of a univariate chaining, i.e. its weight function.
    pub fn weight(&self) -> Option<WeightFunction> {
        use WeightFunction as W;
        Some(match *self {
            ChainingFunction::Identity => W::Constant,
            ChainingFunction::CensorAbove { threshold } => W::IndicatorAbove { threshold },
            ChainingFunction::CensorBelow { threshold } => W::IndicatorBelow { threshold },
            ChainingFunction::GaussPdfChain { mu, sigma } => W::GaussPdf { mu, sigma },
            ChainingFunction::GaussTailChain { mu, sigma } => W::OneMinusGaussPdfRatio { mu, sigma },
            ChainingFunction::GaussCdfChain { mu, sigma } => W::GaussCdf { mu, sigma },
            ChainingFunction::GaussSurvivalChain { mu, sigma } => W::OneMinusGaussCdf { mu, sigma },
            ChainingFunction::CollapseOutside { .. } => return None,
        })
    }

    pub fn is_univariate(&self) -> bool {
        !matches!(self, ChainingFunction::CollapseOutside { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChainingFunction::Identity => "identity",
            ChainingFunction::CensorAbove { .. } => "censor_above",
            ChainingFunction::CensorBelow { .. } => "censor_below",
            ChainingFunction::GaussPdfChain { .. } => "gauss_pdf_chain",
            ChainingFunction::GaussTailChain { .. } => "gauss_tail_chain",
            ChainingFunction::GaussCdfChain { .. } => "gauss_cdf_chain",
            ChainingFunction::GaussSurvivalChain { .. } => "gauss_survival_chain",
            ChainingFunction::CollapseOutside { .. } => "collapse_outside",
        }
    }

    /// `v(z)` for a univariate chaining. Panics on `CollapseOutside`.
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            ChainingFunction::Identity => z,
            ChainingFunction::CensorAbove { threshold } => z.max(threshold),
            ChainingFunction::CensorBelow { threshold } => z.min(threshold),
            ChainingFunction::GaussPdfChain { mu, sigma } => dist::normal_cdf(z, mu, sigma),
            ChainingFunction::GaussTailChain { mu, sigma } => z - sigma * SQRT_2PI * dist::normal_cdf(z, mu, sigma),
            ChainingFunction::GaussCdfChain { mu, sigma } => gauss_cdf_antiderivative(z, mu, sigma),
            ChainingFunction::GaussSurvivalChain { mu, sigma } => z - gauss_cdf_antiderivative(z, mu, sigma),
            ChainingFunction::CollapseOutside { .. } => panic!("collapse chaining is not a scalar map"),
        }
    }

    /// `v(z)` for a vector. Univariate families apply componentwise.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            ChainingFunction::CollapseOutside { weight, origin } => {
                if z.len() != origin.len() {
                    return Err(Error::DimensionMismatch { expected: origin.len(), got: z.len() });
                }
                let w = weight.eval(z)?;
                if w == 1.0 {
                    Ok(z.to_vec())
                } else if w == 0.0 {
                    Ok(origin.clone())
                } else {
                    Err(Error::contract(format!("collapse chaining met non-binary weight value {w}")))
                }
            }
            _ => Ok(z.iter().map(|&x| self.apply(x)).collect()),
        }
    }
}

/// Antiderivative of `Φ_{μ,σ}`: `(z - μ)Φ((z-μ)/σ) + σ φ((z-μ)/σ)`.
fn gauss_cdf_antiderivative(z: f64, mu: f64, sigma: f64) -> f64 {
    let u = (z - mu) / sigma;
    (z - mu) * std_normal_cdf(u) + sigma * std_normal_pdf(u)
}

/// `eval_chaining`: `v(z)`.
pub fn eval_chaining(v: &ChainingFunction, z: &[f64]) -> Result<Vec<f64>> {
    v.eval(z)
}
