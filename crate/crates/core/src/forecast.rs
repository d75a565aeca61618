//! Forecast and observation representations.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

/// A univariate predictive distribution: either a finite ensemble or one of
/// the supported parametric families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forecast {
    Ensemble { members: Vec<f64> },
    /// Parameterised by mean and *variance*.
    Normal { mean: f64, variance: f64 },
    Logistic { location: f64, scale: f64 },
    StudentT { df: f64, location: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricFamily {
    Normal,
    Logistic,
    StudentT { df: u32 },
}

impl Forecast {
    pub fn ensemble(members: Vec<f64>) -> Result<Self> {
        let f = Forecast::Ensemble { members };
        f.validate()?;
        Ok(f)
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        let f = Forecast::Normal { mean, variance };
        f.validate()?;
        Ok(f)
    }

    pub fn logistic(location: f64, scale: f64) -> Result<Self> {
        let f = Forecast::Logistic { location, scale };
        f.validate()?;
        Ok(f)
    }

    pub fn student_t(df: f64, location: f64, scale: f64) -> Result<Self> {
        let f = Forecast::StudentT { df, location, scale };
        f.validate()?;
        Ok(f)
    }

    /// Member of `family` with the given mean and variance.
    ///
    /// Student-t scale follows `sqrt(variance * (df - 2) / df)`, which needs `df > 2`.
    pub fn moment_matched(family: ParametricFamily, mean: f64, variance: f64) -> Result<Self> {
        if variance.is_nan() || variance <= 0.0 {
            return Err(Error::contract(format!("moment matching needs positive variance, got {variance}")));
        }
        match family {
            ParametricFamily::Normal => Forecast::normal(mean, variance),
            ParametricFamily::Logistic => {
                Forecast::logistic(mean, (3.0 * variance).sqrt() / std::f64::consts::PI)
            }
            ParametricFamily::StudentT { df } => {
                let df = f64::from(df);
                if df <= 2.0 {
                    return Err(Error::contract(format!("moment matching needs df > 2, got {df}")));
                }
                Forecast::student_t(df, mean, (variance * (df - 2.0) / df).sqrt())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Forecast::Ensemble { ref members } => {
                if members.is_empty() {
                    return Err(Error::contract("ensemble must have at least one member"));
                }
                members.iter().all(|x| x.is_finite())
            }
            Forecast::Normal { mean, variance } => mean.is_finite() && variance.is_finite() && variance > 0.0,
            Forecast::Logistic { location, scale } => location.is_finite() && scale.is_finite() && scale > 0.0,
            Forecast::StudentT { df, location, scale } => {
                df.is_finite() && df > 0.0 && location.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid forecast parameters: {self:?}")))
        }
    }

    pub fn is_parametric(&self) -> bool {
        !matches!(self, Forecast::Ensemble { .. })
    }

    pub fn members(&self) -> Option<&[f64]> {
        match self {
            Forecast::Ensemble { members } => Some(members),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Forecast::Ensemble { .. } => "ensemble",
            Forecast::Normal { .. } => "normal",
            Forecast::Logistic { .. } => "logistic",
            Forecast::StudentT { .. } => "student_t",
        }
    }

    /// CDF; for ensembles, the fraction of members `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Forecast::Ensemble { ref members } => {
                members.iter().filter(|&&m| m <= x).count() as f64 / members.len() as f64
            }
            Forecast::Normal { mean, variance } => dist::normal_cdf(x, mean, variance.sqrt()),
            Forecast::Logistic { location, scale } => dist::logistic_cdf(x, location, scale),
            Forecast::StudentT { df, location, scale } => dist::student_t_cdf(x, df, location, scale),
        }
    }

    /// Density of a parametric forecast; `None` for ensembles.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Forecast::Ensemble { .. } => return None,
            Forecast::Normal { mean, variance } => dist::normal_pdf(x, mean, variance.sqrt()),
            Forecast::Logistic { location, scale } => dist::logistic_pdf(x, location, scale),
            Forecast::StudentT { df, location, scale } => dist::student_t_pdf(x, df, location, scale),
        })
    }

    /// Quantile function of a parametric forecast; `None` for ensembles.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        Some(match *self {
            Forecast::Ensemble { .. } => return None,
            Forecast::Normal { mean, variance } => mean + variance.sqrt() * dist::std_normal_quantile(p),
            Forecast::Logistic { location, scale } => dist::logistic_quantile(p, location, scale),
            Forecast::StudentT { df, location, scale } => dist::student_t_quantile(p, df, location, scale),
        })
    }

    /// Points that split integrals over the forecast into well-resolved
    /// pieces: a ladder of quantiles for parametric forecasts, the members
    /// for ensembles.
    pub fn guide_points(&self) -> Vec<f64> {
        const PROBS: [f64; 15] =
            [1e-12, 1e-8, 1e-5, 1e-3, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99, 0.999, 1.0 - 1e-5, 1.0 - 1e-8, 1.0 - 1e-12];
        match self {
            Forecast::Ensemble { members } => members.clone(),
            _ => PROBS.iter().filter_map(|&p| self.quantile(p)).filter(|q| q.is_finite()).collect(),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            Forecast::Ensemble { ref members } => Some(members.iter().sum::<f64>() / members.len() as f64),
            Forecast::Normal { mean, .. } => Some(mean),
            Forecast::Logistic { location, .. } => Some(location),
            Forecast::StudentT { df, location, .. } => (df > 1.0).then_some(location),
        }
    }

    /// Variance; ensembles use the `1/m` (plug-in) form.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Forecast::Ensemble { ref members } => {
                let m = members.len() as f64;
                let mean = members.iter().sum::<f64>() / m;
                Some(members.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m)
            }
            Forecast::Normal { variance, .. } => Some(variance),
            Forecast::Logistic { scale, .. } => Some((scale * std::f64::consts::PI).powi(2) / 3.0),
            Forecast::StudentT { df, scale, .. } => (df > 2.0).then(|| scale * scale * df / (df - 2.0)),
        }
    }

    pub fn has_finite_mean(&self) -> bool {
        self.mean().is_some()
    }

    /// Interval outside which the forecast carries negligible mass
    /// (tail probability well below 1e-15); used to truncate integrals.
    pub fn tail_bounds(&self) -> (f64, f64) {
        match *self {
            Forecast::Ensemble { ref members } => {
                let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Forecast::Normal { mean, variance } => {
                let s = variance.sqrt();
                (mean - 10.0 * s, mean + 10.0 * s)
            }
            Forecast::Logistic { location, scale } => (location - 40.0 * scale, location + 40.0 * scale),
            Forecast::StudentT { df, location, scale } => {
                let reach = 10f64.powf(16.0 / df).clamp(40.0, 1e8);
                (location - reach * scale, location + reach * scale)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Forecast::Ensemble { ref members } => members[rng.random_range(0..members.len())],
            Forecast::Normal { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            Forecast::Logistic { location, scale } => {
                let u: f64 = rng.random();
                // `random` is in [0, 1); map 0 to the smallest positive value.
                let u = u.max(f64::MIN_POSITIVE);
                dist::logistic_quantile(u, location, scale)
            }
            Forecast::StudentT { df, location, scale } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                location + scale * t
            }
        }
    }
}

/// A `d × m` ensemble of `m` members in `d` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvEnsemble {
    dim: usize,
    /// Member-major storage: member `j` occupies `data[j*dim .. (j+1)*dim]`.
    data: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
}

impl MvEnsemble {
    /// Builds an ensemble from member vectors, each of length `d`.
    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::contract("ensemble must have at least one member"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::contract("ensemble dimension must be at least one"));
        }
        let mut data = Vec::with_capacity(dim * members.len());
        for m in members {
            if m.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: m.len() });
            }
            data.extend_from_slice(m);
        }
        Self::from_flat(dim, data)
    }

    /// Builds an ensemble from `d` rows of `m` values (one row per dimension).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::contract("ensemble dimension must be at least one"))?;
        let m = first.len();
        if m == 0 {
            return Err(Error::contract("ensemble must have at least one member"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
        }
        let dim = rows.len();
        let data = (0..m).flat_map(|j| rows.iter().map(move |r| r[j])).collect();
        Self::from_flat(dim, data)
    }

    fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract("ensemble members must be finite"));
        }
        Ok(Self { dim, data, labels: Vec::new() })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn member(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Values of dimension `k` across members.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.members().map(|x| x[k]).collect()
    }

    /// Applies `f` to every member.
    pub fn map_members<F: FnMut(&[f64]) -> Vec<f64>>(&self, mut f: F) -> Result<Self> {
        let members: Vec<Vec<f64>> = self.members().map(&mut f).collect();
        let mut out = Self::from_members(&members)?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    pub(crate) fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: y.len() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Observation {
    pub fn is_finite(&self) -> bool {
        match self {
            Observation::Scalar(v) => v.is_finite(),
            Observation::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// One verifying observation with its aggregation keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationCase {
    pub station_id: String,
    pub valid_time: NaiveDate,
    /// Lead time in days.
    pub lead_time: u32,
    pub value: Observation,
}

impl ObservationCase {
    pub fn new(station_id: impl Into<String>, valid_time: NaiveDate, lead_time: u32, value: Observation, horizon: u32) -> Result<Self> {
        if lead_time == 0 || lead_time > horizon {
            return Err(Error::contract(format!("lead time {lead_time} outside 1..={horizon}")));
        }
        if !value.is_finite() {
            return Err(Error::contract("observation must be finite"));
        }
        Ok(Self { station_id: station_id.into(), valid_time, lead_time, value })
    }
}
