//! Forecast generation: lapse-rate correction, EMOS fitted by CRPS
//! minimisation, rolling climatology, ensemble smoothing and ensemble copula
//! coupling.

use std::collections::VecDeque;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{Forecast, MvEnsemble};
use crate::optim::{bfgs, BfgsOptions};
use crate::uniscores::{crps_normal_gradient, crps_normal_value};
use crate::VARIANCE_FLOOR;

/// Temperature lapse rate, °C per metre.
pub const LAPSE_RATE: f64 = 0.006;

/// Training window length in days.
pub const WINDOW_DAYS: usize = 45;

/// Smallest number of training cases for EMOS and climatology fits.
pub const MIN_TRAINING: usize = 10;

/// Moves a model temperature from the model surface height to the true
/// station height: a model surface above the station is too cold, so
/// `0.006 °C/m · (model - true)` is added.
pub fn lapse_rate_correct(member_value: f64, model_height: f64, true_height: f64) -> Result<f64> {
    if !(model_height.is_finite() && true_height.is_finite() && member_value.is_finite()) {
        return Err(Error::contract("lapse-rate correction needs finite inputs"));
    }
    Ok(member_value + LAPSE_RATE * (model_height - true_height))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    /// Topographic position index (m).
    pub tpi: f64,
    /// Model-minus-true surface height (m).
    pub mhd: f64,
    #[serde(default)]
    pub altitude: f64,
    #[serde(default)]
    pub latitude: f64,
}

impl StationMeta {
    pub fn new(station_id: impl Into<String>, tpi: f64, mhd: f64) -> Self {
        Self { station_id: station_id.into(), tpi, mhd, altitude: 0.0, latitude: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.tpi, self.mhd, self.altitude, self.latitude].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::contract(format!("station {} has non-finite metadata", self.station_id)))
        }
    }
}

/// Coefficients of the model `Y ~ N(β₀ + β₁x̄ + β₂MHD + β₃TPI, σ₀ + σ₁v)`.
/// `sigma0` and `sigma1` are variance coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosParams {
    pub beta: [f64; 4],
    pub sigma0: f64,
    pub sigma1: f64,
    #[serde(default)]
    pub lead_time: Option<u32>,
}

impl Default for EmosParams {
    fn default() -> Self {
        Self { beta: [0.0, 1.0, 0.0, 0.0], sigma0: 1.0, sigma1: 0.1, lead_time: None }
    }
}

impl EmosParams {
    pub fn mean(&self, ens_mean: f64, meta: &StationMeta) -> f64 {
        self.beta[0] + self.beta[1] * ens_mean + self.beta[2] * meta.mhd + self.beta[3] * meta.tpi
    }

    pub fn variance(&self, ens_var: f64) -> f64 {
        self.sigma0 + self.sigma1 * ens_var
    }
}

/// One forecast–observation pair of a training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCase {
    pub ens_mean: f64,
    pub ens_var: f64,
    pub mhd: f64,
    pub tpi: f64,
    pub obs: f64,
}

impl TrainingCase {
    pub fn new(ens_mean: f64, ens_var: f64, meta: &StationMeta, obs: f64) -> Self {
        Self { ens_mean, ens_var, mhd: meta.mhd, tpi: meta.tpi, obs }
    }
}

/// Cases of the most recent `days` forecast days, pooled across stations,
/// in chronological order.
#[derive(Debug, Clone, Default)]
pub struct TrainingWindow {
    days: usize,
    entries: VecDeque<(Option<NaiveDate>, Vec<TrainingCase>)>,
}

impl TrainingWindow {
    pub fn new(days: usize) -> Self {
        Self { days: days.max(1), entries: VecDeque::new() }
    }

    /// A window holding exactly `cases`, without dates.
    pub fn from_cases(cases: Vec<TrainingCase>) -> Self {
        let mut entries = VecDeque::new();
        entries.push_back((None, cases));
        Self { days: 1, entries }
    }

    /// Appends the cases of a new day, dropping the oldest day when full.
    pub fn push_day(&mut self, date: NaiveDate, cases: Vec<TrainingCase>) -> Result<()> {
        if let Some((Some(last), _)) = self.entries.back() {
            if date <= *last {
                return Err(Error::contract(format!("training days must be chronological: {date} after {last}")));
            }
        }
        self.entries.push_back((Some(date), cases));
        while self.entries.len() > self.days {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn cases(&self) -> impl Iterator<Item = &TrainingCase> {
        self.entries.iter().flat_map(|(_, c)| c.iter())
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|(_, c)| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn days(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmosFit {
    pub params: EmosParams,
    /// Mean CRPS over the training window at the fitted parameters.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean CRPS after each optimiser step (non-increasing).
    pub trace: Vec<f64>,
}

/// Location and scale used to standardise a predictor.
#[derive(Debug, Clone, Copy)]
struct Standardiser {
    mean: f64,
    scale: f64,
}

impl Standardiser {
    fn new(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let sd = (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        // A constant predictor is left unscaled (its coefficient is then
        // confounded with the intercept and stays at its initial value).
        let scale = if sd > 1e-9 * (1.0 + mean.abs()) { sd } else { 1.0 };
        Self { mean: if scale == 1.0 && sd <= 1e-9 * (1.0 + mean.abs()) { 0.0 } else { mean }, scale }
    }

    fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }
}

/// Fits EMOS coefficients by minimising the mean CRPS over the window.
///
/// Predictors are standardised internally; variance coefficients are
/// optimised on the log scale. Starts from `init` when given (warm start),
/// otherwise from `β = (0, 1, 0, 0)`, `σ₀ = 1`, `σ₁ = 0.1`.
pub fn fit_emos(window: &TrainingWindow, init: Option<&EmosParams>) -> Result<EmosFit> {
    fit_emos_with(window, init, BfgsOptions::default())
}

pub fn fit_emos_with(window: &TrainingWindow, init: Option<&EmosParams>, opts: BfgsOptions) -> Result<EmosFit> {
    let cases: Vec<&TrainingCase> = window.cases().collect();
    if cases.len() < MIN_TRAINING {
        return Err(Error::InsufficientData { needed: MIN_TRAINING, got: cases.len() });
    }
    for c in &cases {
        if ![c.ens_mean, c.ens_var, c.mhd, c.tpi, c.obs].iter().all(|v| v.is_finite()) || c.ens_var < 0.0 {
            return Err(Error::contract("training cases need finite values and nonnegative ensemble variance"));
        }
    }
    let sx = Standardiser::new(cases.iter().map(|c| c.ens_mean));
    let sm = Standardiser::new(cases.iter().map(|c| c.mhd));
    let st = Standardiser::new(cases.iter().map(|c| c.tpi));
    let rows: Vec<[f64; 5]> = cases.iter().map(|c| [sx.apply(c.ens_mean), sm.apply(c.mhd), st.apply(c.tpi), c.ens_var, c.obs]).collect();
    let n = rows.len() as f64;

    let start = init.cloned().unwrap_or_default();
    if !(start.sigma0 > 0.0 && start.sigma1 > 0.0) {
        return Err(Error::contract("initial variance coefficients must be positive"));
    }
    // Original-scale coefficients to standardised ones.
    let b1 = start.beta[1] * sx.scale;
    let b2 = start.beta[2] * sm.scale;
    let b3 = start.beta[3] * st.scale;
    let b0 = start.beta[0] + start.beta[1] * sx.mean + start.beta[2] * sm.mean + start.beta[3] * st.mean;
    let x0 = [b0, b1, b2, b3, start.sigma0.ln(), start.sigma1.ln()];

    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (c, d) = (theta[4].exp(), theta[5].exp());
        let mut total = 0.0;
        for r in &rows {
            let mu = theta[0] + theta[1] * r[0] + theta[2] * r[1] + theta[3] * r[2];
            let raw_var = c + d * r[3];
            let var = raw_var.max(VARIANCE_FLOOR);
            let sigma = var.sqrt();
            total += crps_normal_value(mu, sigma, r[4]);
            let (dmu, dsigma) = crps_normal_gradient(mu, sigma, r[4]);
            grad[0] += dmu;
            grad[1] += dmu * r[0];
            grad[2] += dmu * r[1];
            grad[3] += dmu * r[2];
            if raw_var > VARIANCE_FLOOR {
                let dvar = dsigma / (2.0 * sigma);
                grad[4] += dvar * c;
                grad[5] += dvar * d * r[3];
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        total / n
    };
    let min = bfgs(objective, &x0, opts);
    let t = &min.x;
    let beta1 = t[1] / sx.scale;
    let beta2 = t[2] / sm.scale;
    let beta3 = t[3] / st.scale;
    let beta0 = t[0] - beta1 * sx.mean - beta2 * sm.mean - beta3 * st.mean;
    let params = EmosParams { beta: [beta0, beta1, beta2, beta3], sigma0: t[4].exp(), sigma1: t[5].exp(), lead_time: start.lead_time };
    if params.beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical { routine: "fit_emos", detail: format!("non-finite coefficients {:?}", params.beta) });
    }
    Ok(EmosFit { params, objective: min.value, iterations: min.iterations, converged: min.converged, trace: min.trace })
}

/// Predictive normal distribution of the fitted model.
pub fn predict_emos(p: &EmosParams, ens_mean: f64, ens_var: f64, meta: &StationMeta) -> Result<Forecast> {
    let var = p.variance(ens_var);
    if var.is_nan() || var <= 0.0 {
        return Err(Error::contract(format!("EMOS predictive variance must be positive, got {var}")));
    }
    Forecast::normal(p.mean(ens_mean, meta), var.max(VARIANCE_FLOOR))
}

fn mean_and_sample_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Normal climatology from a station's recent observations (sample
/// variance with `n - 1` denominator, floored).
pub fn fit_climatology(history: &[f64]) -> Result<Forecast> {
    if history.len() < MIN_TRAINING {
        return Err(Error::InsufficientData { needed: MIN_TRAINING, got: history.len() });
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("climatology history must be finite"));
    }
    let (mean, var) = mean_and_sample_variance(history);
    Forecast::normal(mean, var.max(VARIANCE_FLOOR))
}

/// Normal distribution with the ensemble mean and sample variance (floored).
pub fn smooth_ensemble(members: &[f64]) -> Result<Forecast> {
    if members.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: members.len() });
    }
    if members.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("ensemble members must be finite"));
    }
    let (mean, var) = mean_and_sample_variance(members);
    Forecast::normal(mean, var.max(VARIANCE_FLOOR))
}

/// Quantile levels `(i - 0.5) / m`, `i = 1..=m`.
pub fn ecc_levels(m: usize) -> Vec<f64> {
    (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect()
}

/// Ensemble copula coupling: takes `m` equally spaced quantiles of each
/// marginal and arranges them so that each dimension has the rank order of
/// the raw ensemble (ties broken by member index).
pub fn ecc_reorder(marginals: &[Forecast], raw: &MvEnsemble) -> Result<MvEnsemble> {
    if marginals.len() != raw.dim() {
        return Err(Error::DimensionMismatch { expected: raw.dim(), got: marginals.len() });
    }
    let m = raw.size();
    let levels = ecc_levels(m);
    let mut rows = Vec::with_capacity(raw.dim());
    for (k, f) in marginals.iter().enumerate() {
        f.validate()?;
        let quantiles: Vec<f64> = levels
            .iter()
            .map(|&p| f.quantile(p).ok_or_else(|| Error::contract("ECC marginals must be parametric")))
            .collect::<Result<_>>()?;
        let component = raw.component(k);
        let mut order: Vec<usize> = (0..m).collect();
        // Stable sort keeps member-index order among ties; adding zero maps
        // -0.0 to 0.0 so that the two tie.
        order.sort_by(|&a, &b| (component[a] + 0.0).total_cmp(&(component[b] + 0.0)));
        let mut row = vec![0.0; m];
        for (r, &j) in order.iter().enumerate() {
            row[j] = quantiles[r];
        }
        rows.push(row);
    }
    Ok(MvEnsemble::from_rows(&rows)?.with_labels(raw.labels.clone()))
}
