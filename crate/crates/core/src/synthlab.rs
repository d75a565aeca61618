//! Synthetic experiments: weighted score curves, PIT and conditional PIT
//! demonstrations, and Monte-Carlo checks of (im)propriety.
//!
//! Every experiment is reproducible from its seed. Random draws come from
//! ChaCha8 streams derived from the master seed: each block of cases (or
//! each distribution pair) has its own stream, so results do not depend on
//! how the work is scheduled.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::{corp_reliability, cpit, ecdf_max_deviation, pit, pit_ecdf, HistogramSummary, PitValue, ReliabilityFit, DEFAULT_PIT_BINS};
use crate::error::{Error, Result};
use crate::forecast::{Forecast, MvEnsemble, ParametricFamily};
use crate::mvscores::{energy_score_with, tw_energy_score_with, tw_variogram_score_with, variogram_score_with, vr_energy_score_with, VariogramSpec};
use crate::row;
use crate::table::Table;
use crate::uniscores::{
    crps_normal, crps_normal_value, owcrps, twcrps, vrcrps, EnsembleEstimator, TabulatedOwBs, TabulatedScorer,
};
use crate::weight::{ChainingFunction, WeightFunction};

/// Cases per random stream.
const BLOCK: usize = 4096;

/// Generator for stream `stream` of experiment `purpose` under `seed`.
fn stream_rng(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) | stream);
    rng
}

/// Calls `f(i, rng)` for cases `0..n`, switching to a fresh stream every
/// [`BLOCK`] cases.
fn for_each_case(n: usize, seed: u64, purpose: u64, mut f: impl FnMut(usize, &mut ChaCha8Rng) -> Result<()>) -> Result<()> {
    for block in 0..n.div_ceil(BLOCK) {
        let mut rng = stream_rng(seed, purpose, block as u64);
        for i in block * BLOCK..((block + 1) * BLOCK).min(n) {
            f(i, &mut rng)?;
        }
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// Experiment specification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Fig1Curves,
    Fig2Ideal,
    Fig3Tails,
    ProprietyMc,
    ImproprietyDemo,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::Fig1Curves,
        ExperimentName::Fig2Ideal,
        ExperimentName::Fig3Tails,
        ExperimentName::ProprietyMc,
        ExperimentName::ImproprietyDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Fig1Curves => "fig1_curves",
            ExperimentName::Fig2Ideal => "fig2_ideal",
            ExperimentName::Fig3Tails => "fig3_tails",
            ExperimentName::ProprietyMc => "propriety_mc",
            ExperimentName::ImproprietyDemo => "impropriety_demo",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    /// Accepts the full names and the short forms `fig1`, `fig2`, `fig3`,
    /// `propriety` and `impropriety`.
    fn from_str(s: &str) -> Result<Self> {
        let name = match s {
            "fig1" | "fig1_curves" => ExperimentName::Fig1Curves,
            "fig2" | "fig2_ideal" => ExperimentName::Fig2Ideal,
            "fig3" | "fig3_tails" => ExperimentName::Fig3Tails,
            "propriety" | "propriety_mc" => ExperimentName::ProprietyMc,
            "impropriety" | "impropriety_demo" => ExperimentName::ImproprietyDemo,
            other => return Err(Error::contract(format!("unknown experiment {other:?}"))),
        };
        Ok(name)
    }
}

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    /// Number of cases (grid points for the score curves, outcome draws per
    /// distribution pair for the univariate propriety check).
    pub n: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    /// Cases per pair of the multivariate propriety check.
    #[serde(default)]
    pub n_multivariate: Option<usize>,
    /// Resamples of the CORP consistency bands.
    #[serde(default)]
    pub resamples: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20_230_901;
pub const DEFAULT_CORP_RESAMPLES: usize = 1000;
/// Pointwise coverage of the CORP consistency bands.
pub const CORP_BAND_LEVEL: f64 = 0.99;
pub const DEFAULT_MV_CASES: usize = 20_000;
pub const DEFAULT_MV_MEMBERS: usize = 50;

impl ExperimentSpec {
    /// The default configuration of each experiment.
    pub fn new(name: ExperimentName) -> Self {
        let (n, t) = match name {
            ExperimentName::Fig1Curves => (601, 1.0),
            ExperimentName::Fig2Ideal => (100_000, 1.0),
            ExperimentName::Fig3Tails => (1_000_000, 2.0),
            ExperimentName::ProprietyMc => (100_000, 1.0),
            ExperimentName::ImproprietyDemo => (100_000, 0.5),
        };
        Self { name, n, seed: DEFAULT_SEED, thresholds: vec![t], n_multivariate: None, resamples: None, output: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::contract("experiments need n >= 1"));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::contract("experiments need at least one finite threshold"));
        }
        if self.n_multivariate == Some(0) {
            return Err(Error::contract("multivariate propriety check needs at least one case"));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.thresholds[0]
    }
}

/// Result tables of an experiment together with the settings that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub tables: Vec<Table>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Runs the described experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let t = spec.threshold();
    let tables = match spec.name {
        ExperimentName::Fig1Curves => {
            let grid = linear_grid(-3.0, 3.0, spec.n.max(2));
            vec![run_fig1_curves(&grid, t)?]
        }
        ExperimentName::Fig2Ideal => run_fig2_ideal(spec.n, FIG2_VARIANCE, t, spec.seed)?.tables(),
        ExperimentName::Fig3Tails => {
            let resamples = spec.resamples.unwrap_or(DEFAULT_CORP_RESAMPLES);
            run_fig3_tails_with(spec.n, t, spec.seed, resamples)?.tables()
        }
        ExperimentName::ProprietyMc => {
            let pairs = default_univariate_pairs(spec.seed);
            let mut rows = run_propriety_mc(&default_univariate_scores(t), &pairs, spec.n, spec.seed)?;
            let mv_pairs = default_multivariate_pairs(spec.seed);
            let cases = spec.n_multivariate.unwrap_or(DEFAULT_MV_CASES);
            rows.extend(run_mv_propriety_mc(&default_multivariate_scores(t), &mv_pairs, DEFAULT_MV_MEMBERS, cases, spec.seed)?);
            vec![propriety_table(&rows)]
        }
        ExperimentName::ImproprietyDemo => vec![run_impropriety_demo(t, spec.n, spec.seed)?.table()],
    };
    Ok(ExperimentOutput { spec: spec.clone(), tables })
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linear_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn histogram_table(name: &str, h: &HistogramSummary) -> Table {
    let mut t = Table::new(name, &["bin", "lower", "upper", "count", "frequency"]);
    let k = h.bins as f64;
    for b in 0..h.bins {
        t.push(row![b + 1, b as f64 / k, (b + 1) as f64 / k, h.counts[b] as usize, h.frequencies[b]]);
    }
    t
}

// ---------------------------------------------------------------------------
// Weighted score curves

/// CRPS, twCRPS, owCRPS and vrCRPS (`x₀ = 0`) of `N(0, 1)` as functions of
/// the outcome, for the weight `1{z > t}`.
pub fn run_fig1_curves(y_grid: &[f64], t: f64) -> Result<Table> {
    let f = Forecast::normal(0.0, 1.0)?;
    let w = WeightFunction::IndicatorAbove { threshold: t };
    let v = ChainingFunction::CensorAbove { threshold: t };
    let mut table = Table::new("fig1_curves", &["y", "crps", "twcrps", "owcrps", "vrcrps"]);
    for &y in y_grid {
        table.push(row![
            y,
            crps_normal(0.0, 1.0, y)?.value,
            twcrps(&f, y, &v)?.value,
            owcrps(&f, y, &w)?.value,
            vrcrps(&f, y, &w, 0.0)?.value,
        ]);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Ideal forecaster: PIT, restricted PIT and conditional PIT

/// Predictive variance of the ideal forecaster in the PIT demonstration.
pub const FIG2_VARIANCE: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Result {
    pub n: usize,
    pub variance: f64,
    pub threshold: f64,
    pub exceedances: usize,
    /// PIT of all cases.
    pub pit: HistogramSummary,
    /// PIT of the cases exceeding the threshold.
    pub restricted_pit: HistogramSummary,
    /// Conditional PIT of the cases exceeding the threshold.
    pub cpit: HistogramSummary,
}

impl Fig2Result {
    pub fn tables(&self) -> Vec<Table> {
        let mut summary = Table::new("fig2_summary", &["n", "variance", "threshold", "exceedances", "pit_ri", "restricted_pit_ri", "cpit_ri"]);
        summary.push(row![
            self.n,
            self.variance,
            self.threshold,
            self.exceedances,
            self.pit.reliability_index,
            self.restricted_pit.reliability_index,
            self.cpit.reliability_index,
        ]);
        vec![
            histogram_table("fig2_pit_hist", &self.pit),
            histogram_table("fig2_restricted_pit_hist", &self.restricted_pit),
            histogram_table("fig2_cpit_hist", &self.cpit),
            summary,
        ]
    }
}

/// Outcomes `Y ~ N(μ, σ²)` with `μ ~ N(0, 1 - σ²)`; the ideal forecaster
/// issues `N(μ, σ²)`.
pub fn run_fig2_ideal(n: usize, variance: f64, t: f64, seed: u64) -> Result<Fig2Result> {
    if !(variance > 0.0 && variance < 1.0) {
        return Err(Error::contract(format!("predictive variance must lie in (0, 1), got {variance}")));
    }
    let mut pits = Vec::with_capacity(n);
    let mut restricted = Vec::new();
    let mut conditional = Vec::new();
    let (sd_mu, sd) = ((1.0 - variance).sqrt(), variance.sqrt());
    for_each_case(n, seed, 2, |_, rng| {
        let mu = sd_mu * normal(rng);
        let y = mu + sd * normal(rng);
        let f = Forecast::normal(mu, variance)?;
        let u = pit(&f, y)?;
        pits.push(u);
        if let Some(c) = cpit(&f, y, t)? {
            restricted.push(u);
            conditional.push(c);
        }
        Ok(())
    })?;
    Ok(Fig2Result {
        n,
        variance,
        threshold: t,
        exceedances: conditional.len(),
        pit: HistogramSummary::from_pit(&pits, DEFAULT_PIT_BINS)?,
        restricted_pit: HistogramSummary::from_pit(&restricted, DEFAULT_PIT_BINS)?,
        cpit: HistogramSummary::from_pit(&conditional, DEFAULT_PIT_BINS)?,
    })
}

// ---------------------------------------------------------------------------
// Tail behaviour: light, matching and heavy tailed forecasters

/// Variance of the location `μ` of the logistic outcome distribution.
pub const FIG3_LOCATION_VARIANCE: f64 = 2.0 / 3.0;
/// Variance of the logistic outcome distribution given `μ` (scale `1/π`).
pub const FIG3_VARIANCE: f64 = 1.0 / 3.0;

pub const FIG3_FAMILIES: [ParametricFamily; 3] =
    [ParametricFamily::Normal, ParametricFamily::Logistic, ParametricFamily::StudentT { df: 5 }];

pub fn family_label(family: ParametricFamily) -> String {
    match family {
        ParametricFamily::Normal => "normal".into(),
        ParametricFamily::Logistic => "logistic".into(),
        ParametricFamily::StudentT { df } => format!("student_t{df}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailForecaster {
    pub label: String,
    pub cpit: HistogramSummary,
    /// Empirical CDF points of the conditional PIT values.
    pub ecdf: Vec<(f64, f64)>,
    pub ecdf_max_deviation: f64,
    /// CORP reliability of the exceedance probabilities `1 - F(t)`.
    pub corp: ReliabilityFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Result {
    pub n: usize,
    pub threshold: f64,
    pub exceedances: usize,
    pub forecasters: Vec<TailForecaster>,
}

impl Fig3Result {
    pub fn forecaster(&self, label: &str) -> Option<&TailForecaster> {
        self.forecasters.iter().find(|f| f.label == label)
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut tables = Vec::new();
        let mut summary = Table::new(
            "fig3_summary",
            &["forecaster", "n", "threshold", "exceedances", "cpit_ri", "cpit_first_bin", "cpit_last_bin", "ecdf_max_deviation"],
        );
        for f in &self.forecasters {
            let freq = &f.cpit.frequencies;
            summary.push(row![
                f.label.as_str(),
                self.n,
                self.threshold,
                self.exceedances,
                f.cpit.reliability_index,
                freq[0],
                freq[freq.len() - 1],
                f.ecdf_max_deviation,
            ]);
            tables.push(histogram_table(&format!("fig3_{}_cpit_hist", f.label), &f.cpit));
            let mut ecdf = Table::new(format!("fig3_{}_cpit_ecdf", f.label), &["u", "ecdf"]);
            for &(u, p) in &f.ecdf {
                ecdf.push(row![u, p]);
            }
            tables.push(ecdf);
            let mut corp = Table::new(format!("fig3_{}_corp", f.label), &["prob", "cep"]);
            for (p, c) in f.corp.probs.iter().zip(&f.corp.cep) {
                corp.push(row![*p, *c]);
            }
            tables.push(corp);
            let mut band = Table::new(format!("fig3_{}_corp_band", f.label), &["prob", "lower", "upper"]);
            for ((p, lo), hi) in f.corp.band_probs.iter().zip(&f.corp.lower).zip(&f.corp.upper) {
                band.push(row![*p, *lo, *hi]);
            }
            tables.push(band);
        }
        tables.insert(0, summary);
        tables
    }
}

pub fn run_fig3_tails(n: usize, t: f64, seed: u64) -> Result<Fig3Result> {
    run_fig3_tails_with(n, t, seed, DEFAULT_CORP_RESAMPLES)
}

/// Outcomes `Y ~ Logistic(μ, 1/π)` with `μ ~ N(0, 2/3)`, so that `Y` has
/// unit variance. Normal, logistic and Student-t(5) forecasters share the
/// outcome's conditional mean `μ` and variance `1/3`.
pub fn run_fig3_tails_with(n: usize, t: f64, seed: u64, resamples: usize) -> Result<Fig3Result> {
    let truth_scale = 1.0 / std::f64::consts::PI;
    let mut mu = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for_each_case(n, seed, 3, |_, rng| {
        let m = FIG3_LOCATION_VARIANCE.sqrt() * normal(rng);
        mu.push(m);
        y.push(Forecast::Logistic { location: m, scale: truth_scale }.sample(rng));
        Ok(())
    })?;
    let outcomes: Vec<bool> = y.iter().map(|&v| v > t).collect();
    let exceedances = outcomes.iter().filter(|&&e| e).count();

    let mut forecasters = Vec::new();
    for (k, &family) in FIG3_FAMILIES.iter().enumerate() {
        let mut values: Vec<PitValue> = Vec::with_capacity(exceedances);
        let mut probs = Vec::with_capacity(n);
        for (&m, &obs) in mu.iter().zip(&y) {
            let f = Forecast::moment_matched(family, m, FIG3_VARIANCE)?;
            probs.push(1.0 - f.cdf(t));
            if let Some(c) = cpit(&f, obs, t)? {
                values.push(c);
            }
        }
        let corp = corp_reliability(&probs, &outcomes, CORP_BAND_LEVEL, resamples, seed.wrapping_add(k as u64))?;
        forecasters.push(TailForecaster {
            label: family_label(family),
            cpit: HistogramSummary::from_pit(&values, DEFAULT_PIT_BINS)?,
            ecdf: pit_ecdf(&values)?,
            ecdf_max_deviation: ecdf_max_deviation(&values)?,
            corp,
        });
    }
    Ok(Fig3Result { n, threshold: t, exceedances, forecasters })
}

// ---------------------------------------------------------------------------
// Monte-Carlo propriety checks

/// A univariate score evaluated in the propriety check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "score", rename_all = "snake_case")]
pub enum UniScore {
    Crps,
    /// twCRPS with the chaining function whose derivative is the weight.
    TwCrps { weight: WeightFunction },
    OwCrpsBs { threshold: f64 },
    VrCrps { weight: WeightFunction, x0: f64 },
}

impl UniScore {
    pub fn label(&self) -> String {
        match self {
            UniScore::Crps => "crps".into(),
            UniScore::TwCrps { weight } => format!("twcrps[{}]", weight.name()),
            UniScore::OwCrpsBs { threshold } => format!("owcrps_bs[t={threshold}]"),
            UniScore::VrCrps { weight, x0 } => format!("vrcrps[{},x0={x0}]", weight.name()),
        }
    }
}

/// The univariate weights of the usual families: everything, central
/// values, both tails, right tail, left tail, and exceedance of `t`.
pub fn univariate_weights(t: f64) -> Vec<WeightFunction> {
    vec![
        WeightFunction::Constant,
        WeightFunction::GaussPdf { mu: 0.0, sigma: 1.0 },
        WeightFunction::OneMinusGaussPdfRatio { mu: 0.0, sigma: 1.0 },
        WeightFunction::GaussCdf { mu: t, sigma: 1.0 },
        WeightFunction::OneMinusGaussCdf { mu: -t, sigma: 1.0 },
        WeightFunction::IndicatorAbove { threshold: t },
    ]
}

pub fn default_univariate_scores(t: f64) -> Vec<UniScore> {
    let mut scores = vec![UniScore::Crps];
    for w in univariate_weights(t).into_iter().skip(1) {
        scores.push(UniScore::TwCrps { weight: w });
    }
    scores.push(UniScore::OwCrpsBs { threshold: t });
    for w in univariate_weights(t).into_iter().skip(1) {
        scores.push(UniScore::VrCrps { weight: w, x0: 0.0 });
    }
    scores
}

fn random_family(rng: &mut ChaCha8Rng) -> ParametricFamily {
    FIG3_FAMILIES[rng.random_range(0..FIG3_FAMILIES.len())]
}

/// Two fixed pairs, `(N(0,1), N(1,1))` and `(N(0,1), N(0,4))`, followed by
/// 20 random pairs of normal, logistic or Student-t(5) distributions with
/// means in `[-1, 1]` and variances in `[0.5, 2]`.
pub fn default_univariate_pairs(seed: u64) -> Vec<(Forecast, Forecast)> {
    let n01 = Forecast::Normal { mean: 0.0, variance: 1.0 };
    let mut pairs = vec![(n01.clone(), Forecast::Normal { mean: 1.0, variance: 1.0 }), (n01, Forecast::Normal { mean: 0.0, variance: 4.0 })];
    let mut rng = stream_rng(seed, 4, 0);
    let draw = |rng: &mut ChaCha8Rng| {
        let family = random_family(rng);
        let mean = rng.random_range(-1.0..1.0);
        let variance = rng.random_range(0.5..2.0);
        Forecast::moment_matched(family, mean, variance).expect("valid moment-matched parameters")
    };
    for _ in 0..20 {
        let g = draw(&mut rng);
        let f = draw(&mut rng);
        pairs.push((g, f));
    }
    pairs
}

/// One row of a propriety comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProprietyRow {
    pub score: String,
    pub pair: usize,
    pub truth: String,
    pub forecast: String,
    pub n: usize,
    /// Mean score of the true distribution `G`.
    pub mean_truth: f64,
    /// Mean score of the alternative `F`.
    pub mean_forecast: f64,
    /// Standard error of the mean paired difference `S(F) - S(G)`.
    pub se: f64,
    /// `mean_truth <= mean_forecast + 2 se`.
    pub pass: bool,
}

impl ProprietyRow {
    fn from_differences(score: String, pair: usize, truth: String, forecast: String, sg: &[f64], sf: &[f64]) -> Self {
        let n = sg.len();
        let nf = n as f64;
        let mean_truth = sg.iter().sum::<f64>() / nf;
        let mean_forecast = sf.iter().sum::<f64>() / nf;
        let mean_diff = mean_forecast - mean_truth;
        let var = if n > 1 {
            sg.iter().zip(sf).map(|(g, f)| (f - g - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        let se = (var / nf).sqrt();
        Self { score, pair, truth, forecast, n, mean_truth, mean_forecast, se, pass: mean_truth <= mean_forecast + 2.0 * se }
    }

    pub fn mean_difference(&self) -> f64 {
        self.mean_forecast - self.mean_truth
    }
}

pub fn propriety_table(rows: &[ProprietyRow]) -> Table {
    let mut t = Table::new(
        "propriety",
        &["score", "pair", "truth", "forecast", "n", "mean_truth", "mean_forecast", "mean_difference", "se", "pass"],
    );
    for r in rows {
        t.push(row![
            r.score.as_str(),
            r.pair,
            r.truth.as_str(),
            r.forecast.as_str(),
            r.n,
            r.mean_truth,
            r.mean_forecast,
            r.mean_difference(),
            r.se,
            r.pass,
        ]);
    }
    t
}

fn describe(f: &Forecast) -> String {
    match *f {
        Forecast::Normal { mean, variance } => format!("normal({mean},{variance})"),
        Forecast::Logistic { location, scale } => format!("logistic({location},{scale})"),
        Forecast::StudentT { df, location, scale } => format!("student_t({df},{location},{scale})"),
        Forecast::Ensemble { ref members } => format!("ensemble(m={})", members.len()),
    }
}

/// Scores of `f` at every outcome in `ys`.
fn score_all(score: &UniScore, f: &Forecast, ys: &[f64]) -> Result<Vec<f64>> {
    match score {
        UniScore::Crps => match *f {
            Forecast::Normal { mean, variance } => Ok(ys.iter().map(|&y| crps_normal_value(mean, variance.sqrt(), y)).collect()),
            _ => {
                let w = WeightFunction::Constant;
                let tab = TabulatedScorer::new(f, &w)?;
                ys.iter().map(|&y| tab.twcrps(y)).collect()
            }
        },
        UniScore::TwCrps { weight } => {
            let tab = TabulatedScorer::new(f, weight)?;
            ys.iter().map(|&y| tab.twcrps(y)).collect()
        }
        UniScore::VrCrps { weight, x0 } => {
            let tab = TabulatedScorer::new(f, weight)?;
            Ok(ys.iter().map(|&y| tab.vrcrps(y, *x0)).collect())
        }
        UniScore::OwCrpsBs { threshold } => {
            let tab = TabulatedOwBs::new(f, *threshold)?;
            ys.iter().map(|&y| tab.score(y)).collect()
        }
    }
}

/// For each pair `(G, F)` draws `n` outcomes from `G` (one stream per pair)
/// and compares the mean scores of `G` and `F` on the same outcomes.
pub fn run_propriety_mc(scores: &[UniScore], pairs: &[(Forecast, Forecast)], n: usize, seed: u64) -> Result<Vec<ProprietyRow>> {
    if n == 0 {
        return Err(Error::contract("propriety check needs n >= 1"));
    }
    let mut rows = Vec::new();
    for (p, (g, f)) in pairs.iter().enumerate() {
        g.validate()?;
        f.validate()?;
        if !g.is_parametric() || !f.is_parametric() {
            return Err(Error::contract("propriety check needs parametric distributions"));
        }
        let mut rng = stream_rng(seed, 5, p as u64);
        let ys: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        for score in scores {
            let sg = score_all(score, g, &ys)?;
            let sf = score_all(score, f, &ys)?;
            rows.push(ProprietyRow::from_differences(score.label(), p, describe(g), describe(f), &sg, &sf));
        }
    }
    Ok(rows)
}

/// Multivariate normal law with equal correlation between all components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicorrelatedNormal {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub correlation: f64,
}

impl EquicorrelatedNormal {
    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        if d == 0 || self.sd.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.sd.len() });
        }
        let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
        if !(lower.max(0.0)..1.0).contains(&self.correlation) || self.sd.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::contract("equicorrelated normal needs correlation in [0, 1) and positive sds"));
        }
        Ok(())
    }

    /// `μ + σ ⊙ (√ρ z₀ + √(1-ρ) z)` with independent standard normals.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let common = normal(rng) * self.correlation.sqrt();
        let own = (1.0 - self.correlation).sqrt();
        self.mean.iter().zip(&self.sd).map(|(m, s)| m + s * (common + own * normal(rng))).collect()
    }

    fn describe(&self) -> String {
        format!("mvn(d={},mean={:?},sd={:?},rho={})", self.mean.len(), self.mean, self.sd, self.correlation)
    }
}

/// A multivariate score evaluated in the propriety check. Ensemble
/// estimators are the fair ones, whose expectation over ensembles drawn from
/// `F` equals the score of `F` itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "score", rename_all = "snake_case")]
pub enum MvScore {
    Es,
    Vs { spec: VariogramSpec },
    TwEs { chaining: ChainingFunction },
    TwVs { chaining: ChainingFunction, spec: VariogramSpec },
    VrEs { weight: WeightFunction, x0: Vec<f64> },
}

impl MvScore {
    pub fn label(&self) -> String {
        match self {
            MvScore::Es => "es".into(),
            MvScore::Vs { spec } => format!("vs[p={}]", spec.order),
            MvScore::TwEs { chaining } => format!("twes[{}]", chaining.name()),
            MvScore::TwVs { chaining, spec } => format!("twvs[{},p={}]", chaining.name(), spec.order),
            MvScore::VrEs { weight, .. } => format!("vres[{}]", weight.name()),
        }
    }

    fn eval(&self, ens: &MvEnsemble, y: &[f64]) -> Result<f64> {
        let fair = EnsembleEstimator::Fair;
        let s = match self {
            MvScore::Es => energy_score_with(ens, y, fair)?,
            MvScore::Vs { spec } => variogram_score_with(ens, y, spec, fair)?,
            MvScore::TwEs { chaining } => tw_energy_score_with(ens, y, chaining, fair)?,
            MvScore::TwVs { chaining, spec } => tw_variogram_score_with(ens, y, chaining, spec, fair)?,
            MvScore::VrEs { weight, x0 } => vr_energy_score_with(ens, y, weight, x0, fair)?,
        };
        Ok(s.value)
    }
}

pub const MV_DIM: usize = 3;

/// ES, VS (p = 0.5), twES and twVS censoring each component below `t`,
/// twES with the Gaussian CDF chaining, and vrES with the multivariate
/// Gaussian CDF and tail weights.
pub fn default_multivariate_scores(t: f64) -> Vec<MvScore> {
    let d = MV_DIM;
    let vs = VariogramSpec::with_order(0.5);
    let censor = ChainingFunction::CensorAbove { threshold: t };
    vec![
        MvScore::Es,
        MvScore::Vs { spec: vs.clone() },
        MvScore::TwEs { chaining: censor.clone() },
        MvScore::TwEs { chaining: ChainingFunction::GaussCdfChain { mu: t, sigma: 1.0 } },
        MvScore::TwVs { chaining: censor, spec: vs },
        MvScore::VrEs { weight: WeightFunction::MvGaussCdf { mu: vec![t; d], variances: vec![1.0; d] }, x0: vec![0.0; d] },
        MvScore::VrEs { weight: WeightFunction::OneMinusMvGaussPdfRatio { mu: vec![0.0; d], variances: vec![1.0; d] }, x0: vec![0.0; d] },
    ]
}

/// 20 random pairs of three-dimensional equicorrelated normals. The
/// alternative differs in correlation and, for half the pairs, also in
/// location and spread.
pub fn default_multivariate_pairs(seed: u64) -> Vec<(EquicorrelatedNormal, EquicorrelatedNormal)> {
    let mut rng = stream_rng(seed, 6, 0);
    (0..20)
        .map(|k| {
            let rho_g: f64 = rng.random_range(0.0..0.9);
            let mut rho_f: f64 = rng.random_range(0.0..0.9);
            while (rho_f - rho_g).abs() < 0.2 {
                rho_f = rng.random_range(0.0..0.9);
            }
            let g = EquicorrelatedNormal { mean: vec![0.0; MV_DIM], sd: vec![1.0; MV_DIM], correlation: rho_g };
            let (shift, spread) = if k % 2 == 1 { (rng.random_range(-0.5..0.5), rng.random_range(0.8..1.25)) } else { (0.0, 1.0) };
            let f = EquicorrelatedNormal { mean: vec![shift; MV_DIM], sd: vec![spread; MV_DIM], correlation: rho_f };
            (g, f)
        })
        .collect()
}

/// For each pair `(G, F)` and case: draws an outcome and an `m`-member
/// ensemble from `G`, and an `m`-member ensemble from `F`, then compares
/// the mean scores of the two ensembles.
pub fn run_mv_propriety_mc(
    scores: &[MvScore],
    pairs: &[(EquicorrelatedNormal, EquicorrelatedNormal)],
    m: usize,
    cases: usize,
    seed: u64,
) -> Result<Vec<ProprietyRow>> {
    if cases == 0 || m < 2 {
        return Err(Error::contract("multivariate propriety check needs cases >= 1 and m >= 2"));
    }
    let mut rows = Vec::new();
    for (p, (g, f)) in pairs.iter().enumerate() {
        g.validate()?;
        f.validate()?;
        if g.mean.len() != f.mean.len() {
            return Err(Error::DimensionMismatch { expected: g.mean.len(), got: f.mean.len() });
        }
        let mut sg = vec![Vec::with_capacity(cases); scores.len()];
        let mut sf = vec![Vec::with_capacity(cases); scores.len()];
        for_each_case(cases, seed, 7 + ((p as u64) << 8), |_, rng| {
            let y = g.sample(rng);
            let eg = MvEnsemble::from_members(&(0..m).map(|_| g.sample(rng)).collect::<Vec<_>>())?;
            let ef = MvEnsemble::from_members(&(0..m).map(|_| f.sample(rng)).collect::<Vec<_>>())?;
            for (k, score) in scores.iter().enumerate() {
                sg[k].push(score.eval(&eg, &y)?);
                sf[k].push(score.eval(&ef, &y)?);
            }
            Ok(())
        })?;
        for (k, score) in scores.iter().enumerate() {
            rows.push(ProprietyRow::from_differences(score.label(), p, g.describe(), f.describe(), &sg[k], &sf[k]));
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Impropriety of naively weighted scores

#[derive(Debug, Clone, Serialize)]
pub struct ImproprietyResult {
    pub threshold: f64,
    pub n: usize,
    /// `w(Y) CRPS(·, Y)` for the truth `G = N(0,1)` and for `G_w`, the truth
    /// conditioned on exceeding the threshold.
    pub naive: ProprietyRow,
    /// twCRPS with `v(z) = max(z, t)` for the same two forecasts.
    pub twcrps: ProprietyRow,
}

impl ImproprietyResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new("impropriety", &["score", "threshold", "n", "mean_truth", "mean_conditioned", "mean_difference", "se", "preferred"]);
        for r in [&self.naive, &self.twcrps] {
            let preferred = if r.mean_forecast < r.mean_truth { "conditioned" } else { "truth" };
            t.push(row![r.score.as_str(), self.threshold, r.n, r.mean_truth, r.mean_forecast, r.mean_difference(), r.se, preferred]);
        }
        t
    }
}

/// Compares `G = N(0, 1)` with `G_w` under the naive weighted score
/// `1{y > t} CRPS(F, y)` and under the twCRPS.
pub fn run_impropriety_demo(t: f64, n: usize, seed: u64) -> Result<ImproprietyResult> {
    if n == 0 {
        return Err(Error::contract("impropriety demo needs n >= 1"));
    }
    let g = Forecast::normal(0.0, 1.0)?;
    let w = WeightFunction::IndicatorAbove { threshold: t };
    let tw_truth = TabulatedScorer::new(&g, &w)?;
    let conditioned = TabulatedOwBs::new(&g, t)?;
    let mut rng = stream_rng(seed, 8, 0);
    let ys: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();

    let mut naive_g = Vec::with_capacity(n);
    let mut naive_w = Vec::with_capacity(n);
    let mut tw_g = Vec::with_capacity(n);
    let mut tw_w = Vec::with_capacity(n);
    for &y in &ys {
        if y > t {
            naive_g.push(crps_normal_value(0.0, 1.0, y));
            naive_w.push(conditioned.conditional_crps(y)?);
        } else {
            naive_g.push(0.0);
            naive_w.push(0.0);
        }
        tw_g.push(tw_truth.twcrps(y)?);
        // G_w lives above t, so censoring leaves it unchanged and moves y to max(y, t).
        tw_w.push(conditioned.conditional_crps(y.max(t))?);
    }
    let truth = describe(&g);
    let cond = format!("{truth}|>{t}");
    Ok(ImproprietyResult {
        threshold: t,
        n,
        naive: ProprietyRow::from_differences("naive_weighted_crps".into(), 0, truth.clone(), cond.clone(), &naive_g, &naive_w),
        twcrps: ProprietyRow::from_differences("twcrps".into(), 0, truth, cond, &tw_g, &tw_w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::std_normal_cdf;
    use crate::quad;
    use approx::assert_abs_diff_eq;

    #[test]
    fn names_parse() {
        for name in ExperimentName::ALL {
            assert_eq!(name.as_str().parse::<ExperimentName>().unwrap(), name);
        }
        assert_eq!("fig2".parse::<ExperimentName>().unwrap(), ExperimentName::Fig2Ideal);
        assert!("fig9".parse::<ExperimentName>().is_err());
    }

    #[test]
    fn experiment_validation() {
        let mut s = ExperimentSpec::new(ExperimentName::Fig2Ideal);
        assert!(s.validate().is_ok());
        s.n = 0;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(ExperimentName::Fig1Curves);
        s.thresholds = vec![f64::NAN];
        assert!(s.validate().is_err());
    }

    #[test]
    fn streams_do_not_depend_on_block_position() {
        let mut a = Vec::new();
        for_each_case(BLOCK + 5, 9, 1, |_, rng| {
            a.push(rng.random::<u64>());
            Ok(())
        })
        .unwrap();
        let mut second = stream_rng(9, 1, 1);
        assert_eq!(a[BLOCK], second.random::<u64>());
        assert_ne!(a[0], a[BLOCK]);
    }

    #[test]
    fn fig1_shape() {
        let t = 1.0;
        let grid = linear_grid(-3.0, 3.0, 61);
        let table = run_fig1_curves(&grid, t).unwrap();
        let y = table.numeric_column("y").unwrap();
        for col in ["twcrps", "owcrps", "vrcrps"] {
            let v = table.numeric_column(col).unwrap();
            let below: Vec<f64> = v.iter().zip(&y).filter(|(_, y)| **y < t).map(|(v, _)| *v).collect();
            let spread = below.iter().cloned().fold(f64::MIN, f64::max) - below.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-8, "{col} varies below t by {spread}");
        }
        let crps = table.numeric_column("crps").unwrap();
        let k0 = y.iter().position(|v| v.abs() < 1e-12).unwrap();
        assert!(crps.iter().all(|&c| c >= crps[k0]));
    }

    #[test]
    fn fig2_small_run() {
        let r = run_fig2_ideal(20_000, FIG2_VARIANCE, 1.0, 3).unwrap();
        assert_eq!(r.pit.n, 20_000);
        assert_eq!(r.restricted_pit.n as usize, r.exceedances);
        assert!(r.pit.reliability_index < 0.1);
        let f = &r.restricted_pit.frequencies;
        assert!(f[19] > f[10] && f[10] > f[0]);
        assert_eq!(r.tables().len(), 4);
        // P(Y > 1) with Y ~ N(0, 1).
        let p = 1.0 - std_normal_cdf(1.0);
        assert!((r.exceedances as f64 / 20_000.0 - p).abs() < 0.01);
    }

    #[test]
    fn fig2_is_reproducible() {
        let a = run_fig2_ideal(5000, FIG2_VARIANCE, 1.0, 11).unwrap();
        let b = run_fig2_ideal(5000, FIG2_VARIANCE, 1.0, 11).unwrap();
        assert_eq!(a.pit, b.pit);
        assert_eq!(a.cpit, b.cpit);
        let c = run_fig2_ideal(5000, FIG2_VARIANCE, 1.0, 12).unwrap();
        assert_ne!(a.pit, c.pit);
    }

    #[test]
    fn fig3_small_run() {
        let r = run_fig3_tails_with(100_000, 2.0, 5, 20).unwrap();
        let frac = r.exceedances as f64 / 100_000.0;
        assert!((0.02..0.03).contains(&frac), "{frac}");
        let normal = &r.forecaster("normal").unwrap().cpit.frequencies;
        let t5 = &r.forecaster("student_t5").unwrap().cpit.frequencies;
        assert!(normal[19] > normal[0]);
        assert!(t5[0] > t5[19]);
        assert_eq!(r.tables().len(), 13);
    }

    #[test]
    fn propriety_examples() {
        let n01 = Forecast::normal(0.0, 1.0).unwrap();
        let pairs = vec![
            (n01.clone(), Forecast::normal(1.0, 1.0).unwrap()),
            (n01.clone(), Forecast::normal(0.0, 4.0).unwrap()),
            (n01.clone(), n01.clone()),
        ];
        let scores = vec![UniScore::Crps, UniScore::TwCrps { weight: WeightFunction::IndicatorAbove { threshold: 1.0 } }];
        let rows = run_propriety_mc(&scores, &pairs, 20_000, 1).unwrap();
        assert!(rows.iter().all(|r| r.pass));
        // CRPS, N(0,1) vs N(1,1): the truth wins clearly.
        assert!(rows[0].mean_difference() > 5.0 * rows[0].se);
        // Identical forecasts: zero difference.
        assert_eq!(rows[4].mean_difference(), 0.0);
        assert_eq!(rows[4].se, 0.0);
    }

    /// CRPS(N(μ,σ²), y) averaged over y ~ N(0,1) has the closed form
    /// `√(1+σ²)·√(2/π)·φ-type` expression `E|X - Y| - ½E|X - X'|`.
    #[test]
    fn propriety_means_match_closed_form() {
        let g = Forecast::normal(0.0, 1.0).unwrap();
        let f = Forecast::normal(1.0, 1.0).unwrap();
        let rows = run_propriety_mc(&[UniScore::Crps], &[(g, f)], 50_000, 2).unwrap();
        // E|X - Y| for X - Y ~ N(δ, s²): s√(2/π) e^{-δ²/2s²} + δ(1 - 2Φ(-δ/s)).
        let abs_mean = |delta: f64, s: f64| {
            s * (2.0 / std::f64::consts::PI).sqrt() * (-delta * delta / (2.0 * s * s)).exp() + delta * (1.0 - 2.0 * std_normal_cdf(-delta / s))
        };
        let half_pair = 0.5 * abs_mean(0.0, 2f64.sqrt());
        let expected_g = abs_mean(0.0, 2f64.sqrt()) - half_pair;
        let expected_f = abs_mean(1.0, 2f64.sqrt()) - half_pair;
        let r = &rows[0];
        assert!((r.mean_truth - expected_g).abs() < 0.01, "{} vs {expected_g}", r.mean_truth);
        assert!((r.mean_forecast - expected_f).abs() < 0.01, "{} vs {expected_f}", r.mean_forecast);
    }

    #[test]
    fn multivariate_propriety_small_run() {
        let pairs = default_multivariate_pairs(4).into_iter().take(2).collect::<Vec<_>>();
        let rows = run_mv_propriety_mc(&default_multivariate_scores(1.0), &pairs, 10, 500, 4).unwrap();
        assert_eq!(rows.len(), 2 * default_multivariate_scores(1.0).len());
        assert!(rows.iter().all(|r| r.se.is_finite() && r.n == 500));
    }

    /// Independent check of the conditioned forecast's twCRPS:
    /// `∫_t^∞ (G_w(z) - 1{y <= z})² dz`.
    #[test]
    fn conditioned_twcrps_matches_direct_integral() {
        let t = 0.5;
        let g = Forecast::normal(0.0, 1.0).unwrap();
        let tab = TabulatedOwBs::new(&g, t).unwrap();
        let gt = std_normal_cdf(t);
        let gw = |z: f64| if z <= t { 0.0 } else { (std_normal_cdf(z) - gt) / (1.0 - gt) };
        for &y in &[-1.0f64, 0.5, 0.7, 2.3] {
            let direct = quad::integrate(|z| (gw(z) - if y <= z { 1.0 } else { 0.0 }).powi(2), t, 12.0, &[y.max(t)]).unwrap();
            assert_abs_diff_eq!(tab.conditional_crps(f64::max(y, t)).unwrap(), direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn impropriety_small_run() {
        let r = run_impropriety_demo(0.5, 20_000, 7).unwrap();
        assert!(r.naive.mean_forecast < r.naive.mean_truth);
        assert!(r.twcrps.mean_truth < r.twcrps.mean_forecast);
        // Far below the support the weight is one and the two coincide.
        let r = run_impropriety_demo(-40.0, 2000, 7).unwrap();
        assert!(r.naive.mean_difference().abs() < 1e-9);
    }
}
