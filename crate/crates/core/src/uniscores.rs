//! Univariate scoring rules: Brier score, CRPS and its weighted variants.
//!
//! All scores are negatively oriented. Ensemble forecasts use sample means
//! over members; parametric forecasts are evaluated by adaptive quadrature
//! (or, on request, by Monte-Carlo sampling). [`TabulatedScorer`] evaluates
//! the same quantities for one parametric forecast against many outcomes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dist::{std_normal_cdf, std_normal_pdf, FRAC_1_SQRT_PI};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::quad::{self, CumulativeTable};
use crate::weight::{ChainingFunction, WeightFunction};
use crate::WEIGHTED_MASS_FLOOR;

/// Normalisation of the member-pair term in ensemble kernel scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleEstimator {
    /// `1/m²`: the score of the empirical distribution.
    #[default]
    Plain,
    /// `1/(m(m-1))`: unbiased for the score of the underlying distribution.
    Fair,
}

/// How expectations over a parametric forecast are computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Expectation {
    pub const DEFAULT_MONTE_CARLO: Expectation = Expectation::MonteCarlo { samples: 1_000_000, seed: 0x5eed };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    ClosedForm,
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Parameters a score was computed with.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Multivariate reference point of re-scaled scores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    /// Order `p` of variogram scores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chaining: Option<&'static str>,
    pub method: Method,
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreValue {
    pub name: &'static str,
    pub value: f64,
    pub params: ScoreParams,
}

impl ScoreValue {
    pub(crate) fn new(name: &'static str, value: f64, params: ScoreParams) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Numerical { routine: name, detail: format!("non-finite score {value}") });
        }
        // Rounding can leave a nonnegative score a few ulps below zero. Fair
        // estimates are unbiased rather than nonnegative and pass unchanged.
        if value < 0.0 && !params.fair {
            if value < -1e-9 * (1.0 + value.abs()) {
                return Err(Error::Numerical { routine: name, detail: format!("negative score {value}") });
            }
            return Ok(Self { name, value: 0.0, params });
        }
        Ok(Self { name, value, params })
    }
}

fn method_of(forecast: &Forecast, expectation: Expectation) -> Method {
    match (forecast.is_parametric(), expectation) {
        (false, _) => Method::Exact,
        (true, Expectation::Quadrature) => Method::Quadrature,
        (true, Expectation::MonteCarlo { samples, seed }) => Method::MonteCarlo { samples, seed },
    }
}

// ---------------------------------------------------------------------------
// Ensemble kernels

/// `Σ_i Σ_j |x_i - x_j|` in `O(m log m)`.
pub(crate) fn pair_abs_sum(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    2.0 * s.iter().enumerate().map(|(i, x)| x * (2.0 * i as f64 - m + 1.0)).sum::<f64>()
}

/// `Σ_i Σ_j |x_i - x_j| w_i w_j` in `O(m log m)`.
pub(crate) fn weighted_pair_abs_sum(xs: &[f64], ws: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let (mut w_below, mut wx_below, mut acc) = (0.0, 0.0, 0.0);
    for &i in &idx {
        acc += ws[i] * (xs[i] * w_below - wx_below);
        w_below += ws[i];
        wx_below += ws[i] * xs[i];
    }
    2.0 * acc
}

fn pair_denominator(m: usize, estimator: EnsembleEstimator) -> f64 {
    let m = m as f64;
    match estimator {
        EnsembleEstimator::Plain => m * m,
        EnsembleEstimator::Fair => m * (m - 1.0),
    }
}

/// Kernel score `mean|x_i - y| - Σ Σ |x_i - x_j| / (2 m²)` of an ensemble.
pub(crate) fn ensemble_kernel(xs: &[f64], y: f64, estimator: EnsembleEstimator) -> f64 {
    let m = xs.len();
    if m == 1 && estimator == EnsembleEstimator::Fair {
        return (xs[0] - y).abs();
    }
    let first = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
    first - pair_abs_sum(xs) / (2.0 * pair_denominator(m, estimator))
}

fn check_members(members: &[f64]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::contract("ensemble must have at least one member"));
    }
    if members.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract("ensemble members must be finite"));
    }
    Ok(())
}

fn check_obs(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("observation must be finite, got {y}")))
    }
}

// ---------------------------------------------------------------------------
// Brier and CRPS

/// Brier score `(F(t) - 1{y <= t})²` for the event `Y <= t`.
pub fn brier(forecast: &Forecast, y: f64, t: f64) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    let outcome = f64::from(u8::from(y <= t));
    let p = forecast.cdf(t);
    ScoreValue::new("brier", (p - outcome).powi(2), ScoreParams { threshold: Some(t), ..Default::default() })
}

pub fn crps_ensemble(members: &[f64], y: f64) -> Result<ScoreValue> {
    crps_ensemble_with(members, y, EnsembleEstimator::Plain)
}

pub fn crps_ensemble_with(members: &[f64], y: f64, estimator: EnsembleEstimator) -> Result<ScoreValue> {
    check_members(members)?;
    check_obs(y)?;
    let value = ensemble_kernel(members, y, estimator);
    ScoreValue::new("crps", value, ScoreParams { fair: estimator == EnsembleEstimator::Fair, ..Default::default() })
}

/// Closed-form CRPS of `N(mu, sigma²)`.
pub fn crps_normal(mu: f64, sigma: f64, y: f64) -> Result<ScoreValue> {
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::contract(format!("crps_normal needs finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    check_obs(y)?;
    ScoreValue::new("crps", crps_normal_value(mu, sigma, y), ScoreParams { method: Method::ClosedForm, ..Default::default() })
}

#[inline]
pub(crate) fn crps_normal_value(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - FRAC_1_SQRT_PI)
}

/// Gradient of [`crps_normal_value`] with respect to `(mu, sigma)`.
#[inline]
pub(crate) fn crps_normal_gradient(mu: f64, sigma: f64, y: f64) -> (f64, f64) {
    let z = (y - mu) / sigma;
    (1.0 - 2.0 * std_normal_cdf(z), 2.0 * std_normal_pdf(z) - FRAC_1_SQRT_PI)
}

/// Integration domain for a forecast and outcome: forecast tail bounds
/// widened to include `y` and any extra points.
fn domain(forecast: &Forecast, y: f64, extra: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = forecast.tail_bounds();
    for &p in std::iter::once(&y).chain(extra) {
        if p.is_finite() {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    (lo, hi)
}

/// Split points for integrals over a forecast: the outcome, the forecast's
/// guide points (members or quantiles) and any extra points.
fn breakpoints(forecast: &Forecast, y: f64, extra: &[f64]) -> Vec<f64> {
    let mut b = vec![y];
    b.extend_from_slice(extra);
    b.extend(forecast.guide_points());
    b
}

/// Brier-score integral `∫ (F(z) - 1{y <= z})² w(z) dz` by adaptive quadrature.
fn threshold_integral(forecast: &Forecast, y: f64, w: &WeightFunction) -> Result<f64> {
    let (lo, hi) = domain(forecast, y, &[]);
    let bps = breakpoints(forecast, y, &w.guide_points());
    let left = quad::integrate(|z| forecast.cdf(z).powi(2) * w.at(z), lo, y, &bps)?;
    let right = quad::integrate(|z| (1.0 - forecast.cdf(z)).powi(2) * w.at(z), y, hi, &bps)?;
    Ok(left + right)
}

/// CRPS from its integral form by adaptive quadrature. Used as the
/// reference for the other routes.
pub fn crps_numeric(forecast: &Forecast, y: f64) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    if !forecast.has_finite_mean() {
        return Err(Error::contract("CRPS needs a forecast with finite mean"));
    }
    let value = threshold_integral(forecast, y, &WeightFunction::Constant)?;
    ScoreValue::new("crps", value, ScoreParams { method: method_of(forecast, Expectation::Quadrature), ..Default::default() })
}

/// CRPS dispatching on forecast type: ensemble formula, closed form for
/// the normal, quadrature otherwise.
pub fn crps(forecast: &Forecast, y: f64) -> Result<ScoreValue> {
    match forecast {
        Forecast::Ensemble { members } => crps_ensemble(members, y),
        Forecast::Normal { mean, variance } => crps_normal(*mean, variance.sqrt(), y),
        _ => crps_numeric(forecast, y),
    }
}

fn sample_forecast(forecast: &Forecast, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::contract("Monte-Carlo expectation needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..samples).map(|_| forecast.sample(&mut rng)).collect())
}

// ---------------------------------------------------------------------------
// Threshold-weighted CRPS

/// twCRPS `E|v(X) - v(y)| - ½ E|v(X) - v(X')|`.
pub fn twcrps(forecast: &Forecast, y: f64, v: &ChainingFunction) -> Result<ScoreValue> {
    twcrps_with(forecast, y, v, Expectation::Quadrature, EnsembleEstimator::Plain)
}

pub fn twcrps_with(
    forecast: &Forecast,
    y: f64,
    v: &ChainingFunction,
    expectation: Expectation,
    estimator: EnsembleEstimator,
) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    let w = v
        .weight()
        .ok_or_else(|| Error::contract(format!("{} chaining is not a univariate chaining", v.name())))?;
    let params = ScoreParams {
        threshold: threshold_of(&w),
        chaining: Some(v.name()),
        method: method_of(forecast, expectation),
        fair: estimator == EnsembleEstimator::Fair,
        ..Default::default()
    };
    let value = match (forecast, expectation) {
        (Forecast::Ensemble { members }, _) => {
            let chained: Vec<f64> = members.iter().map(|&x| v.apply(x)).collect();
            ensemble_kernel(&chained, v.apply(y), estimator)
        }
        (_, Expectation::MonteCarlo { samples, seed }) => {
            let chained: Vec<f64> = sample_forecast(forecast, samples, seed)?.into_iter().map(|x| v.apply(x)).collect();
            ensemble_kernel(&chained, v.apply(y), EnsembleEstimator::Plain)
        }
        (_, Expectation::Quadrature) => {
            if !forecast.has_finite_mean() {
                return Err(Error::contract("twCRPS needs a forecast with finite mean"));
            }
            // With v' = w, the kernel form equals the weighted Brier integral.
            threshold_integral(forecast, y, &w)?
        }
    };
    ScoreValue::new("twcrps", value, params)
}

fn threshold_of(w: &WeightFunction) -> Option<f64> {
    match *w {
        WeightFunction::IndicatorAbove { threshold } | WeightFunction::IndicatorBelow { threshold } => Some(threshold),
        _ => None,
    }
}


/// Panel edges adapted to a parametric forecast: equal-probability
/// quantiles, geometric tail quantiles and a coarse uniform grid, clipped
/// to `[lo, hi]`, plus the given extra edges.
pub(crate) fn forecast_edges(forecast: &Forecast, lo: f64, hi: f64, n: usize, extra: &[f64]) -> Vec<f64> {
    let mut edges = vec![lo, hi];
    let uniform = n / 4;
    edges.extend((1..uniform).map(|i| lo + (hi - lo) * i as f64 / uniform as f64));
    let probs = (1..n).map(|i| i as f64 / n as f64).chain((3..16).flat_map(|k| {
        let p = 10f64.powi(-k);
        [p, 1.0 - p]
    }));
    edges.extend(probs.filter_map(|p| forecast.quantile(p)));
    edges.extend_from_slice(extra);
    edges.retain(|&e| e >= lo && e <= hi);
    edges
}

// ---------------------------------------------------------------------------
// Outcome-weighted CRPS

/// Running weighted mass `W(x) = ∫_{-∞}^{x} w dF` of a parametric forecast.
enum WeightedMass<'a> {
    /// `W` from the forecast CDF: constant or one-sided indicator weights.
    Closed { forecast: &'a Forecast, w: &'a WeightFunction },
    Tabulated(CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>),
}

impl<'a> WeightedMass<'a> {
    fn new(forecast: &'a Forecast, w: &'a WeightFunction, panels: usize) -> Self {
        match w {
            WeightFunction::Constant | WeightFunction::IndicatorAbove { .. } | WeightFunction::IndicatorBelow { .. } => {
                WeightedMass::Closed { forecast, w }
            }
            _ => {
                let (lo, hi) = forecast.tail_bounds();
                let density: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |x| w.at(x) * forecast.pdf(x).unwrap_or(0.0));
                WeightedMass::Tabulated(CumulativeTable::with_edges(density, forecast_edges(forecast, lo, hi, panels, &w.guide_points())))
            }
        }
    }

    fn upto(&self, x: f64) -> f64 {
        match self {
            WeightedMass::Closed { forecast, w } => match **w {
                WeightFunction::IndicatorAbove { threshold } => {
                    if x > threshold {
                        forecast.cdf(x) - forecast.cdf(threshold)
                    } else {
                        0.0
                    }
                }
                WeightFunction::IndicatorBelow { threshold } => forecast.cdf(x.min(threshold)),
                _ => forecast.cdf(x),
            },
            WeightedMass::Tabulated(t) => t.upto(x),
        }
    }

    fn total(&self) -> f64 {
        match self {
            WeightedMass::Closed { forecast, w } => match **w {
                WeightFunction::IndicatorAbove { threshold } => 1.0 - forecast.cdf(threshold),
                WeightFunction::IndicatorBelow { threshold } => forecast.cdf(threshold),
                _ => 1.0,
            },
            WeightedMass::Tabulated(t) => t.total(),
        }
    }
}

/// CRPS of the weighted distribution `F_w` at `y`, by quadrature.
fn crps_of_weighted(forecast: &Forecast, w: &WeightFunction, y: f64) -> Result<f64> {
    let mass = WeightedMass::new(forecast, w, 800);
    let total = mass.total();
    if total <= WEIGHTED_MASS_FLOOR {
        return Err(Error::WeightedMassZero { mass: total });
    }
    let fw = |z: f64| (mass.upto(z) / total).clamp(0.0, 1.0);
    let (lo, hi) = domain(forecast, y, &[]);
    let bps = breakpoints(forecast, y, &w.guide_points());
    let left = quad::integrate(|z| fw(z).powi(2), lo, y, &bps)?;
    let right = quad::integrate(|z| (1.0 - fw(z)).powi(2), y, hi, &bps)?;
    Ok(left + right)
}

/// owCRPS `w(y) · CRPS(F_w, y)`. Ensembles must be smoothed first.
pub fn owcrps(forecast: &Forecast, y: f64, w: &WeightFunction) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    check_univariate_weight(w)?;
    if !forecast.is_parametric() {
        return Err(Error::Unsupported(
            "owCRPS is not computed on raw ensembles; smooth the ensemble first (postprocess::smooth_ensemble)".into(),
        ));
    }
    let params = ScoreParams { threshold: threshold_of(w), weight: Some(w.name()), method: Method::Quadrature, ..Default::default() };
    let wy = w.at(y);
    if wy == 0.0 {
        return ScoreValue::new("owcrps", 0.0, params);
    }
    let value = wy * crps_of_weighted(forecast, w, y)?;
    ScoreValue::new("owcrps", value, params)
}

/// owCRPS for `w = 1{z > t}` complemented by the Brier score at `t`:
/// `1{y > t} CRPS(F_w, y) + BS(F, y; t)`.
///
/// The Brier term is charged for every outcome. Charging it only when
/// `y <= t` (see [`owcrps_bs_gated`]) rewards pushing `F(t)` towards one.
pub fn owcrps_bs(forecast: &Forecast, y: f64, t: f64) -> Result<ScoreValue> {
    owcrps_bs_impl("owcrps_bs", forecast, y, t, true)
}

/// `1{y > t} CRPS(F_w, y) + 1{y <= t} BS(F, y; t)`. Kept for comparison:
/// its expectation decreases as `F(t)` grows, so it is not proper.
pub fn owcrps_bs_gated(forecast: &Forecast, y: f64, t: f64) -> Result<ScoreValue> {
    owcrps_bs_impl("owcrps_bs_gated", forecast, y, t, false)
}

fn owcrps_bs_impl(name: &'static str, forecast: &Forecast, y: f64, t: f64, full_brier: bool) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    if !forecast.is_parametric() {
        return Err(Error::Unsupported(
            "owCRPS is not computed on raw ensembles; smooth the ensemble first (postprocess::smooth_ensemble)".into(),
        ));
    }
    let params = ScoreParams { threshold: Some(t), weight: Some("indicator_above"), method: Method::Quadrature, ..Default::default() };
    let ft = forecast.cdf(t);
    let value = if y > t {
        let ow = crps_of_weighted(forecast, &WeightFunction::IndicatorAbove { threshold: t }, y)?;
        if full_brier { ow + ft * ft } else { ow }
    } else {
        (ft - 1.0).powi(2)
    };
    ScoreValue::new(name, value, params)
}

fn check_univariate_weight(w: &WeightFunction) -> Result<()> {
    w.validate()?;
    match w.dim() {
        None | Some(1) => Ok(()),
        Some(d) => Err(Error::DimensionMismatch { expected: 1, got: d }),
    }
}

// ---------------------------------------------------------------------------
// Vertically re-scaled CRPS

/// vrCRPS
/// `E[|X-y| w(X) w(y)] - ½ E[|X-X'| w(X) w(X')] + (E[|X-x₀| w(X)] - |y-x₀| w(y)) (E[w(X)] - w(y))`.
pub fn vrcrps(forecast: &Forecast, y: f64, w: &WeightFunction, x0: f64) -> Result<ScoreValue> {
    vrcrps_with(forecast, y, w, x0, Expectation::Quadrature, EnsembleEstimator::Plain)
}

pub fn vrcrps_with(
    forecast: &Forecast,
    y: f64,
    w: &WeightFunction,
    x0: f64,
    expectation: Expectation,
    estimator: EnsembleEstimator,
) -> Result<ScoreValue> {
    forecast.validate()?;
    check_obs(y)?;
    check_univariate_weight(w)?;
    if !x0.is_finite() {
        return Err(Error::contract("x0 must be finite"));
    }
    let params = ScoreParams {
        threshold: threshold_of(w),
        x0: Some(x0),
        weight: Some(w.name()),
        method: method_of(forecast, expectation),
        fair: estimator == EnsembleEstimator::Fair,
        ..Default::default()
    };
    let value = match (forecast, expectation) {
        (Forecast::Ensemble { members }, _) => vr_ensemble(members, y, w, x0, estimator),
        (_, Expectation::MonteCarlo { samples, seed }) => {
            vr_ensemble(&sample_forecast(forecast, samples, seed)?, y, w, x0, EnsembleEstimator::Plain)
        }
        (_, Expectation::Quadrature) => {
            if !forecast.has_finite_mean() {
                return Err(Error::contract("vrCRPS needs a forecast with finite mean"));
            }
            vr_quadrature(forecast, y, w, x0)?
        }
    };
    ScoreValue::new("vrcrps", value, params)
}

fn vr_ensemble(xs: &[f64], y: f64, w: &WeightFunction, x0: f64, estimator: EnsembleEstimator) -> f64 {
    let m = xs.len() as f64;
    let ws: Vec<f64> = xs.iter().map(|&x| w.at(x)).collect();
    let wy = w.at(y);
    let obs_term = xs.iter().zip(&ws).map(|(x, wx)| (x - y).abs() * wx).sum::<f64>() / m * wy;
    let pair_term = if xs.len() == 1 && estimator == EnsembleEstimator::Fair {
        0.0
    } else {
        weighted_pair_abs_sum(xs, &ws) / (2.0 * pair_denominator(xs.len(), estimator))
    };
    let ref_term = xs.iter().zip(&ws).map(|(x, wx)| (x - x0).abs() * wx).sum::<f64>() / m;
    let mean_w = ws.iter().sum::<f64>() / m;
    obs_term - pair_term + (ref_term - (y - x0).abs() * wy) * (mean_w - wy)
}

/// `E[|X - a| w(X)]` for a parametric forecast by quadrature.
fn weighted_abs_moment(forecast: &Forecast, w: &WeightFunction, a: f64) -> Result<f64> {
    let (lo, hi) = forecast.tail_bounds();
    let (lo, hi) = (lo.min(a), hi.max(a));
    let bps = breakpoints(forecast, a, &w.guide_points());
    quad::integrate(|x| (x - a).abs() * w.at(x) * forecast.pdf(x).unwrap_or(0.0), lo, hi, &bps)
}

fn vr_quadrature(forecast: &Forecast, y: f64, w: &WeightFunction, x0: f64) -> Result<f64> {
    let wy = w.at(y);
    let mass = WeightedMass::new(forecast, w, 800);
    let total = mass.total();
    let (lo, hi) = forecast.tail_bounds();
    let mut bps = w.guide_points();
    bps.extend(forecast.guide_points());
    // E|X - X'| w(X) w(X') = 2 ∫ W(z) (W_total - W(z)) dz.
    let pair = 2.0 * quad::integrate(|z| {
        let wz = mass.upto(z);
        wz * (total - wz)
    }, lo, hi, &bps)?;
    let obs = if wy == 0.0 { 0.0 } else { wy * weighted_abs_moment(forecast, w, y)? };
    let reference = weighted_abs_moment(forecast, w, x0)?;
    Ok(obs - 0.5 * pair + (reference - (y - x0).abs() * wy) * (total - wy))
}

// ---------------------------------------------------------------------------
// Decomposition of the twCRPS into owCRPS terms

/// twCRPS minus its owCRPS decomposition for `w = 1{z > t}`; zero up to
/// quadrature error.
pub fn twcrps_decomposition_check(forecast: &Forecast, y: f64, t: f64) -> Result<f64> {
    forecast.validate()?;
    check_obs(y)?;
    if !forecast.is_parametric() {
        return Err(Error::contract("decomposition check needs a parametric forecast"));
    }
    let ft = forecast.cdf(t);
    if ft >= 1.0 - WEIGHTED_MASS_FLOOR {
        return Err(Error::WeightedMassZero { mass: 1.0 - ft });
    }
    let tw = twcrps(forecast, y, &ChainingFunction::CensorAbove { threshold: t })?.value;
    let ow = owcrps(forecast, y, &WeightFunction::IndicatorAbove { threshold: t })?.value;
    let (_, hi) = domain(forecast, y, &[t]);
    let rest = if y > t {
        let excess = quad::integrate(|x| forecast.cdf(x) - ft, t, y, &[])?;
        ft * ft * (y - t) + 2.0 * ft * excess
    } else {
        quad::integrate(|x| (forecast.cdf(x) - 1.0).powi(2), t, hi, &[])?
    };
    Ok(tw - ((1.0 - ft).powi(2) * ow + rest))
}

// ---------------------------------------------------------------------------
// Tabulated scorer for many outcomes

/// Weighted scores of one parametric forecast, tabulated so that each
/// additional outcome costs a handful of Kronrod rules instead of a full
/// adaptive integration.
pub struct TabulatedScorer<'a> {
    forecast: &'a Forecast,
    w: &'a WeightFunction,
    lo: f64,
    hi: f64,
    below: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
    above: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
    mass: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
    first_moment: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
    pair: f64,
}

impl<'a> TabulatedScorer<'a> {
    pub fn new(forecast: &'a Forecast, w: &'a WeightFunction) -> Result<Self> {
        forecast.validate()?;
        check_univariate_weight(w)?;
        if !forecast.is_parametric() || !forecast.has_finite_mean() {
            return Err(Error::contract("tabulated scores need a parametric forecast with finite mean"));
        }
        let (lo, hi) = forecast.tail_bounds();
        let mut bps = w.guide_points();
        bps.extend(forecast.guide_points());
        let panels = 2000;
        let below: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |z| forecast.cdf(z).powi(2) * w.at(z));
        let above: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |z| (1.0 - forecast.cdf(z)).powi(2) * w.at(z));
        let density: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |x| w.at(x) * forecast.pdf(x).unwrap_or(0.0));
        let moment: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |x| x * w.at(x) * forecast.pdf(x).unwrap_or(0.0));
        let below = CumulativeTable::with_edges(below, forecast_edges(forecast, lo, hi, panels, &bps));
        let above = CumulativeTable::with_edges(above, forecast_edges(forecast, lo, hi, panels, &bps));
        let mass = CumulativeTable::with_edges(density, forecast_edges(forecast, lo, hi, panels, &bps));
        let first_moment = CumulativeTable::with_edges(moment, forecast_edges(forecast, lo, hi, panels, &bps));
        let total = mass.total();
        let pair = 2.0 * quad::integrate(|z| {
            let wz = mass.upto(z);
            wz * (total - wz)
        }, lo, hi, &bps)?;
        Ok(Self { forecast, w, lo, hi, below, above, mass, first_moment, pair })
    }

    /// twCRPS with the chaining whose derivative is `w`.
    pub fn twcrps(&self, y: f64) -> Result<f64> {
        let mut value = self.below.upto(y) + self.above.from(y);
        // Outcomes beyond the tabulated range: F is ~0 (resp. ~1) there.
        if y < self.lo {
            value += quad::integrate(|z| (1.0 - self.forecast.cdf(z)).powi(2) * self.w.at(z), y, self.lo, &self.w.guide_points())?;
        } else if y > self.hi {
            value += quad::integrate(|z| self.forecast.cdf(z).powi(2) * self.w.at(z), self.hi, y, &self.w.guide_points())?;
        }
        Ok(value)
    }

    /// `E[|X - a| w(X)] = a (2 W(a) - W) - 2 M(a) + M`.
    fn abs_moment(&self, a: f64) -> f64 {
        let (wa, wt) = (self.mass.upto(a), self.mass.total());
        let (ma, mt) = (self.first_moment.upto(a), self.first_moment.total());
        a * (2.0 * wa - wt) - 2.0 * ma + mt
    }

    pub fn weighted_mass(&self) -> f64 {
        self.mass.total()
    }

    pub fn vrcrps(&self, y: f64, x0: f64) -> f64 {
        let wy = self.w.at(y);
        let total = self.mass.total();
        let obs = if wy == 0.0 { 0.0 } else { wy * self.abs_moment(y) };
        obs - 0.5 * self.pair + (self.abs_moment(x0) - (y - x0).abs() * wy) * (total - wy)
    }
}

/// [`owcrps_bs`] for many outcomes of one forecast, tabulated.
pub struct TabulatedOwBs<'a> {
    forecast: &'a Forecast,
    t: f64,
    ft: f64,
    below: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
    above: CumulativeTable<Box<dyn Fn(f64) -> f64 + 'a>>,
}

impl<'a> TabulatedOwBs<'a> {
    pub fn new(forecast: &'a Forecast, t: f64) -> Result<Self> {
        forecast.validate()?;
        if !forecast.is_parametric() {
            return Err(Error::contract("tabulated owCRPS needs a parametric forecast"));
        }
        let ft = forecast.cdf(t);
        if 1.0 - ft <= WEIGHTED_MASS_FLOOR {
            return Err(Error::WeightedMassZero { mass: 1.0 - ft });
        }
        let (_, hi) = forecast.tail_bounds();
        let hi = hi.max(t + 1.0);
        let below: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |z| (forecast.cdf(z) - ft).powi(2));
        let above: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |z| (1.0 - forecast.cdf(z)).powi(2));
        Ok(Self {
            forecast,
            t,
            ft,
            below: CumulativeTable::with_edges(below, forecast_edges(forecast, t, hi, 2000, &[])),
            above: CumulativeTable::with_edges(above, forecast_edges(forecast, t, hi, 2000, &[])),
        })
    }

    pub fn score(&self, y: f64) -> Result<f64> {
        if y <= self.t {
            return Ok((self.ft - 1.0).powi(2));
        }
        Ok(self.conditional_crps(y)? + self.ft * self.ft)
    }

    /// `CRPS(F_w, y)` for `y >= t`, where `F_w` is `F` conditioned on
    /// exceeding `t`.
    pub fn conditional_crps(&self, y: f64) -> Result<f64> {
        if y < self.t {
            return Err(Error::contract(format!("conditional CRPS needs y >= {}, got {y}", self.t)));
        }
        let mut num = self.below.upto(y) + self.above.from(y);
        if y > self.below.hi() {
            num += quad::integrate(|z| (self.forecast.cdf(z) - self.ft).powi(2), self.below.hi(), y, &[])?;
        }
        Ok(num / (1.0 - self.ft).powi(2))
    }
}
