//! Calibration diagnostics: PIT values and rank histograms, conditional PIT
//! values for threshold exceedances, PIT reliability diagrams and CORP
//! reliability diagrams with resampled consistency bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forecast::{Forecast, MvEnsemble};
use crate::isotonic::{pav, TiedGroups};
use crate::postprocess::smooth_ensemble;
use crate::WEIGHTED_MASS_FLOOR;

/// Bins of PIT and conditional PIT histograms.
pub const DEFAULT_PIT_BINS: usize = 20;

/// Ensemble members required above the threshold before conditional
/// calibration is assessed on a (smoothed) ensemble.
pub const MIN_EXCEEDING_MEMBERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PitKind {
    Standard,
    Conditional { threshold: f64 },
    RandomizedRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitValue {
    pub u: f64,
    #[serde(flatten)]
    pub kind: PitKind,
}

impl PitValue {
    fn new(u: f64, kind: PitKind) -> Self {
        Self { u: u.clamp(0.0, 1.0), kind }
    }
}

/// `F(y)` for a parametric forecast.
pub fn pit(forecast: &Forecast, y: f64) -> Result<PitValue> {
    forecast.validate()?;
    if !forecast.is_parametric() {
        return Err(Error::contract("PIT values need a parametric forecast; use rank() for ensembles"));
    }
    if y.is_nan() {
        return Err(Error::contract("observation must not be NaN"));
    }
    Ok(PitValue::new(forecast.cdf(y), PitKind::Standard))
}

/// Rank of `y` among the members (1 to m+1), with ties broken uniformly at
/// random using a generator seeded by `seed`.
pub fn rank(members: &[f64], y: f64, seed: u64) -> Result<usize> {
    rank_with_rng(members, y, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// As [`rank`], drawing tie-breaks from `rng`. Consumes one draw only when
/// ties occur.
pub fn rank_with_rng<R: Rng + ?Sized>(members: &[f64], y: f64, rng: &mut R) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::contract("ensemble must have at least one member"));
    }
    if y.is_nan() || members.iter().any(|x| x.is_nan()) {
        return Err(Error::contract("rank needs non-NaN values"));
    }
    let below = members.iter().filter(|&&x| x < y).count();
    let ties = members.iter().filter(|&&x| x == y).count();
    let extra = if ties == 0 { 0 } else { rng.random_range(0..=ties) };
    Ok(below + extra + 1)
}

/// Relative frequencies of a histogram with its reliability index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub bins: usize,
    pub frequencies: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
    pub reliability_index: f64,
}

impl HistogramSummary {
    fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let bins = counts.len();
        let reliability_index = ri(&frequencies);
        Ok(Self { bins, frequencies, counts, n, reliability_index })
    }

    /// Histogram of values in `[0, 1]` on `bins` equal-width bins; `u = 1`
    /// falls in the last bin.
    pub fn from_unit_values(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::contract("histogram needs at least one bin"));
        }
        let mut counts = vec![0u64; bins];
        for u in values {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::contract(format!("PIT value {u} outside [0, 1]")));
            }
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_pit(values: &[PitValue], bins: usize) -> Result<Self> {
        Self::from_unit_values(values.iter().map(|v| v.u), bins)
    }

    /// Rank histogram with `m + 1` bins for ranks in `1..=m+1`.
    pub fn from_ranks(ranks: &[usize], m: usize) -> Result<Self> {
        let mut counts = vec![0u64; m + 1];
        for &r in ranks {
            if r == 0 || r > m + 1 {
                return Err(Error::contract(format!("rank {r} outside 1..={}", m + 1)));
            }
            counts[r - 1] += 1;
        }
        Self::from_counts(counts)
    }
}

fn ri(frequencies: &[f64]) -> f64 {
    let k = frequencies.len() as f64;
    frequencies.iter().map(|f| (f - 1.0 / k).abs()).sum()
}

/// `Σ_b |f_b - 1/k|`.
pub fn reliability_index(h: &HistogramSummary) -> f64 {
    ri(&h.frequencies)
}

/// Conditional PIT `(F(y) - F(t)) / (1 - F(t))` for `y > t`; `None` when
/// the threshold is not exceeded.
///
/// Ensembles are smoothed with a normal distribution first, and only when at
/// least [`MIN_EXCEEDING_MEMBERS`] members exceed `t`.
pub fn cpit(forecast: &Forecast, y: f64, t: f64) -> Result<Option<PitValue>> {
    forecast.validate()?;
    if y.is_nan() || t.is_nan() {
        return Err(Error::contract("cPIT needs non-NaN observation and threshold"));
    }
    if y <= t {
        return Ok(None);
    }
    let smoothed;
    let f = match forecast {
        Forecast::Ensemble { members } => {
            let exceeding = members.iter().filter(|&&x| x > t).count();
            if exceeding < MIN_EXCEEDING_MEMBERS {
                return Err(Error::Unsupported(format!(
                    "only {exceeding} ensemble members exceed {t}; conditional calibration needs at least {MIN_EXCEEDING_MEMBERS}"
                )));
            }
            smoothed = smooth_ensemble(members)?;
            &smoothed
        }
        _ => forecast,
    };
    conditional_pit(f.cdf(y), f.cdf(t), t).map(Some)
}

fn conditional_pit(fy: f64, ft: f64, t: f64) -> Result<PitValue> {
    if ft >= 1.0 - WEIGHTED_MASS_FLOOR {
        return Err(Error::DegenerateConditional { cdf_at_threshold: ft });
    }
    Ok(PitValue::new((fy - ft) / (1.0 - ft), PitKind::Conditional { threshold: t }))
}

/// Points `(u_(i), i/n)` of the empirical CDF of PIT values.
pub fn pit_ecdf(values: &[PitValue]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut u: Vec<f64> = values.iter().map(|v| v.u).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    Ok(u.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

/// Largest vertical distance between the empirical CDF of PIT values and
/// the diagonal.
pub fn ecdf_max_deviation(values: &[PitValue]) -> Result<f64> {
    let points = pit_ecdf(values)?;
    let n = points.len() as f64;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &(u, f))| (f - u).abs().max((u - i as f64 / n).abs()))
        .fold(0.0, f64::max))
}

/// CORP reliability diagram: isotonic conditional event probabilities with
/// a resampled consistency band.
#[derive(Debug, Clone, Serialize)]
pub struct ReliabilityFit {
    /// Distinct forecast probabilities, ascending.
    pub probs: Vec<f64>,
    /// Fitted conditional event probability at each distinct probability.
    pub cep: Vec<f64>,
    /// Forecast probabilities at which the band is evaluated.
    pub band_probs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub band_level: f64,
    pub resamples: usize,
    pub n: usize,
}

impl ReliabilityFit {
    /// Fitted CEP at forecast probability `p` (step function, right-continuous).
    pub fn cep_at(&self, p: f64) -> f64 {
        let k = self.probs.partition_point(|&x| x <= p);
        self.cep[k.saturating_sub(1)]
    }
}

/// Largest number of points at which consistency bands are evaluated.
pub const MAX_BAND_POINTS: usize = 200;

/// CORP reliability diagram for binary `outcomes` given forecast `probs`.
///
/// The band resamples outcomes as independent Bernoulli draws with the
/// forecast probabilities (the calibration hypothesis), refits, and takes
/// pointwise `(1 ± band_level) / 2` quantiles.
pub fn corp_reliability(probs: &[f64], outcomes: &[bool], band_level: f64, resamples: usize, seed: u64) -> Result<ReliabilityFit> {
    if probs.len() != outcomes.len() {
        return Err(Error::DimensionMismatch { expected: probs.len(), got: outcomes.len() });
    }
    if probs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::contract("forecast probabilities must lie in [0, 1]"));
    }
    if !(band_level > 0.0 && band_level < 1.0) {
        return Err(Error::contract("band level must lie in (0, 1)"));
    }
    let y: Vec<f64> = outcomes.iter().map(|&o| f64::from(u8::from(o))).collect();
    let groups = TiedGroups::new(probs, &y);
    let cep = groups.fit();

    let g = groups.x.len();
    let band_idx: Vec<usize> = if g <= MAX_BAND_POINTS {
        (0..g).collect()
    } else {
        let mut idx: Vec<usize> = (0..MAX_BAND_POINTS).map(|i| i * (g - 1) / (MAX_BAND_POINTS - 1)).collect();
        idx.dedup();
        idx
    };

    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); band_idx.len()];
    let mut sums = vec![0.0; g];
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &i in &groups.order {
            if rng.random::<f64>() < probs[i] {
                sums[groups.group_of[i]] += 1.0;
            }
        }
        let means: Vec<f64> = sums.iter().zip(&groups.count).map(|(s, c)| s / c).collect();
        let fit = pav(&means, &groups.count);
        for (slot, &k) in draws.iter_mut().zip(&band_idx) {
            slot.push(fit[k]);
        }
    }
    let (lo_q, hi_q) = ((1.0 - band_level) / 2.0, (1.0 + band_level) / 2.0);
    let mut lower = Vec::with_capacity(band_idx.len());
    let mut upper = Vec::with_capacity(band_idx.len());
    for slot in &mut draws {
        if slot.is_empty() {
            lower.push(f64::NAN);
            upper.push(f64::NAN);
            continue;
        }
        slot.sort_by(f64::total_cmp);
        lower.push(empirical_quantile(slot, lo_q));
        upper.push(empirical_quantile(slot, hi_q));
    }
    Ok(ReliabilityFit {
        band_probs: band_idx.iter().map(|&k| groups.x[k]).collect(),
        probs: groups.x,
        cep,
        lower,
        upper,
        band_level,
        resamples,
        n: probs.len(),
    })
}

/// Linear-interpolation quantile of sorted data.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Maps a multivariate outcome to a scalar.
#[derive(Debug, Clone, Copy)]
pub enum Prerank {
    /// Only for `d = 1`.
    Identity,
    Mean,
    Sum,
    Min,
    Max,
    Custom(fn(&[f64]) -> f64),
}

impl Prerank {
    pub fn apply(&self, z: &[f64]) -> f64 {
        match self {
            Prerank::Identity => z[0],
            Prerank::Mean => z.iter().sum::<f64>() / z.len() as f64,
            Prerank::Sum => z.iter().sum(),
            Prerank::Min => z.iter().copied().fold(f64::INFINITY, f64::min),
            Prerank::Max => z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Prerank::Custom(f) => f(z),
        }
    }
}

/// A multivariate predictive distribution for pre-rank calibration checks.
#[derive(Debug, Clone, Copy)]
pub enum MvPredictive<'a> {
    /// Independent parametric marginals.
    Independent(&'a [Forecast]),
    Ensemble(&'a MvEnsemble),
}

/// Monte-Carlo settings for pre-rank distributions without a closed form.
#[derive(Debug, Clone, Copy)]
pub struct PrerankSampling {
    pub samples: usize,
    pub seed: u64,
}

impl Default for PrerankSampling {
    fn default() -> Self {
        Self { samples: 200_000, seed: 0x7072_6572 }
    }
}

/// Conditional PIT of `prerank(y)` against the distribution of
/// `prerank(X)`, with threshold `prerank(t)`.
pub fn prerank_cpit(predictive: MvPredictive<'_>, y: &[f64], t: &[f64], prerank: Prerank) -> Result<Option<PitValue>> {
    prerank_cpit_with(predictive, y, t, prerank, PrerankSampling::default())
}

pub fn prerank_cpit_with(
    predictive: MvPredictive<'_>,
    y: &[f64],
    t: &[f64],
    prerank: Prerank,
    sampling: PrerankSampling,
) -> Result<Option<PitValue>> {
    let d = match predictive {
        MvPredictive::Independent(m) => m.len(),
        MvPredictive::Ensemble(e) => e.dim(),
    };
    for v in [y, t] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
    }
    if matches!(prerank, Prerank::Identity) && d != 1 {
        return Err(Error::contract("identity pre-rank needs one dimension"));
    }
    let (gy, gt) = (prerank.apply(y), prerank.apply(t));
    if !(gy.is_finite() && gt.is_finite()) {
        return Err(Error::contract("pre-rank values must be finite"));
    }
    if gy <= gt {
        return Ok(None);
    }
    match predictive {
        MvPredictive::Ensemble(e) => {
            let values: Vec<f64> = e.members().map(|x| prerank.apply(x)).collect();
            cpit(&Forecast::ensemble(values)?, gy, gt)
        }
        MvPredictive::Independent(marginals) => {
            for f in marginals {
                f.validate()?;
                if !f.is_parametric() {
                    return Err(Error::contract("independent marginals must be parametric"));
                }
            }
            if let Some(f) = exact_prerank_distribution(marginals, prerank)? {
                return conditional_pit(f.cdf(gy), f.cdf(gt), gt).map(Some);
            }
            if sampling.samples == 0 {
                return Err(Error::contract("pre-rank sampling needs at least one sample"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
            let mut x = vec![0.0; d];
            let (mut below_t, mut below_y) = (0usize, 0usize);
            for _ in 0..sampling.samples {
                for (xi, f) in x.iter_mut().zip(marginals) {
                    *xi = f.sample(&mut rng);
                }
                let g = prerank.apply(&x);
                below_t += usize::from(g <= gt);
                below_y += usize::from(g <= gy);
            }
            let n = sampling.samples as f64;
            conditional_pit(below_y as f64 / n, below_t as f64 / n, gt).map(Some)
        }
    }
}

/// Closed-form pre-rank distribution: the marginal itself for the identity,
/// a normal for sums and means of independent normals.
fn exact_prerank_distribution(marginals: &[Forecast], prerank: Prerank) -> Result<Option<Forecast>> {
    match prerank {
        Prerank::Identity => Ok(Some(marginals[0].clone())),
        Prerank::Sum | Prerank::Mean => {
            let mut mean = 0.0;
            let mut var = 0.0;
            for f in marginals {
                match *f {
                    Forecast::Normal { mean: m, variance } => {
                        mean += m;
                        var += variance;
                    }
                    _ => return Ok(None),
                }
            }
            if matches!(prerank, Prerank::Mean) {
                let d = marginals.len() as f64;
                mean /= d;
                var /= d * d;
            }
            Forecast::normal(mean, var).map(Some)
        }
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::std_normal_quantile;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn n01() -> Forecast {
        Forecast::normal(0.0, 1.0).unwrap()
    }

    #[test]
    fn pit_examples() {
        assert_eq!(pit(&n01(), 0.0).unwrap().u, 0.5);
        assert_eq!(pit(&n01(), -1e10).unwrap().u, 0.0);
        assert_eq!(pit(&n01(), 1e10).unwrap().u, 1.0);
        let l = Forecast::logistic(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(pit(&l, 3f64.ln()).unwrap().u, 0.75, epsilon = 1e-15);
        assert!(pit(&Forecast::ensemble(vec![1.0]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[1.0, 2.0, 3.0], 0.0, 1).unwrap(), 1);
        assert_eq!(rank(&[1.0, 2.0, 3.0], 4.0, 1).unwrap(), 4);
        assert_eq!(rank(&[1.0, 2.0, 3.0], 2.5, 1).unwrap(), 3);
        assert_eq!(rank(&[1.0, 2.0], 1.5, 7).unwrap(), rank(&[1.0, 2.0], 1.5, 7).unwrap());
    }

    #[test]
    fn rank_ties_are_uniform() {
        // All members equal to y, m = 2: every rank in {1, 2, 3} equally likely.
        let mut counts = [0usize; 3];
        for seed in 0..30_000 {
            counts[rank(&[1.0, 1.0], 1.0, seed).unwrap() - 1] += 1;
        }
        for c in counts {
            let f = c as f64 / 30_000.0;
            assert!((f - 1.0 / 3.0).abs() < 4.0 * (2.0f64 / 9.0 / 30_000.0).sqrt(), "{counts:?}");
        }
    }

    #[test]
    fn calibrated_rank_histogram_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (m, n) = (10, 50_000);
        let ranks: Vec<usize> = (0..n)
            .map(|_| {
                let members: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let y = rng.random::<f64>();
                rank_with_rng(&members, y, &mut rng).unwrap()
            })
            .collect();
        let h = HistogramSummary::from_ranks(&ranks, m).unwrap();
        assert_eq!(h.bins, m + 1);
        for f in &h.frequencies {
            assert!((f - 1.0 / (m + 1) as f64).abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn reliability_index_examples() {
        let uniform = HistogramSummary::from_unit_values([0.1, 0.6], 2).unwrap();
        assert_eq!(reliability_index(&uniform), 0.0);
        let k = 5;
        let spike = HistogramSummary::from_unit_values([0.05; 10], k).unwrap();
        assert_abs_diff_eq!(reliability_index(&spike), 2.0 * (k as f64 - 1.0) / k as f64, epsilon = 1e-15);
        let h = HistogramSummary::from_unit_values([0.1, 0.2, 0.3, 0.9], 2).unwrap();
        assert_abs_diff_eq!(h.reliability_index, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.frequencies.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn histogram_edges() {
        let h = HistogramSummary::from_unit_values([0.0, 1.0, 0.5], 4).unwrap();
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
        assert!(HistogramSummary::from_unit_values([1.5], 4).is_err());
        assert!(HistogramSummary::from_unit_values(std::iter::empty(), 4).is_err());
    }

    #[test]
    fn cpit_examples() {
        assert_eq!(cpit(&n01(), -0.5, 0.0).unwrap(), None);
        assert_eq!(cpit(&n01(), 0.0, 0.0).unwrap(), None);
        let u = cpit(&n01(), std_normal_quantile(0.8), 0.0).unwrap().unwrap();
        assert_abs_diff_eq!(u.u, 0.6, epsilon = 1e-12);
        assert_eq!(u.kind, PitKind::Conditional { threshold: 0.0 });
        let far = cpit(&n01(), 0.3, -1e6).unwrap().unwrap();
        assert_eq!(far.u, pit(&n01(), 0.3).unwrap().u);
        assert!(matches!(cpit(&n01(), 50.0, 40.0), Err(Error::DegenerateConditional { .. })));
    }

    #[test]
    fn cpit_on_ensembles() {
        let few = Forecast::ensemble((0..21).map(|i| i as f64).collect()).unwrap();
        assert!(matches!(cpit(&few, 20.5, 15.0), Err(Error::Unsupported(_))));
        let smoothed = smooth_ensemble(few.members().unwrap()).unwrap();
        let direct = cpit(&smoothed, 12.0, 5.0).unwrap().unwrap().u;
        assert_eq!(cpit(&few, 12.0, 5.0).unwrap().unwrap().u, direct);
    }

    #[test]
    fn pit_ecdf_examples() {
        assert_eq!(pit_ecdf(&[PitValue::new(0.5, PitKind::Standard)]).unwrap(), vec![(0.5, 1.0)]);
        let n = 99;
        let grid: Vec<PitValue> = (1..=n).map(|i| PitValue::new(i as f64 / (n + 1) as f64, PitKind::Standard)).collect();
        assert!(ecdf_max_deviation(&grid).unwrap() <= 1.0 / (n + 1) as f64 + 1e-12);
        assert!(pit_ecdf(&[]).is_err());
    }

    #[test]
    fn pit_ecdf_of_uniform_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let values: Vec<PitValue> = (0..n).map(|_| PitValue::new(rng.random(), PitKind::Standard)).collect();
        assert!(ecdf_max_deviation(&values).unwrap() < 1.63 / (n as f64).sqrt());
    }

    #[test]
    fn corp_examples() {
        let probs = [0.0, 0.0, 0.0, 1.0, 1.0];
        let fit = corp_reliability(&probs, &[false, false, false, true, true], 0.99, 50, 1).unwrap();
        assert_eq!(fit.cep_at(0.0), 0.0);
        assert_eq!(fit.cep_at(1.0), 1.0);
        let half = corp_reliability(&[0.5; 4], &[true, false, true, false], 0.99, 50, 1).unwrap();
        assert_eq!(half.cep, vec![0.5]);
        let pooled = corp_reliability(&[0.2, 0.8], &[true, false], 0.99, 50, 1).unwrap();
        assert_eq!(pooled.cep, vec![0.5, 0.5]);
        assert!(corp_reliability(&[0.2], &[true, false], 0.99, 10, 1).is_err());
    }

    #[test]
    fn corp_band_covers_calibrated_forecasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 5_000;
        let probs: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).floor() / 20.0).collect();
        let outcomes: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() < p).collect();
        let fit = corp_reliability(&probs, &outcomes, 0.99, 300, 5).unwrap();
        assert_eq!(fit.band_probs.len(), fit.probs.len());
        let inside = fit
            .band_probs
            .iter()
            .zip(fit.lower.iter().zip(&fit.upper))
            .filter(|(&p, (&lo, &hi))| fit.cep_at(p) >= lo - 1e-12 && fit.cep_at(p) <= hi + 1e-12)
            .count();
        assert!(inside as f64 >= 0.8 * fit.band_probs.len() as f64);
        // The band is reproducible from the seed.
        let again = corp_reliability(&probs, &outcomes, 0.99, 300, 5).unwrap();
        assert_eq!(fit.lower, again.lower);
    }

    #[test]
    fn corp_band_is_thinned_for_many_distinct_probabilities() {
        let probs: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let outcomes: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
        let fit = corp_reliability(&probs, &outcomes, 0.9, 20, 3).unwrap();
        assert_eq!(fit.band_probs.len(), MAX_BAND_POINTS);
        assert_eq!(fit.probs.len(), 1000);
    }

    #[test]
    fn prerank_examples() {
        let marginal = [n01()];
        let y = [std_normal_quantile(0.8)];
        let a = prerank_cpit(MvPredictive::Independent(&marginal), &y, &[0.0], Prerank::Identity).unwrap().unwrap();
        assert_abs_diff_eq!(a.u, cpit(&n01(), y[0], 0.0).unwrap().unwrap().u, epsilon = 1e-15);
        let m = [n01(), Forecast::normal(1.0, 4.0).unwrap()];
        assert_eq!(prerank_cpit(MvPredictive::Independent(&m), &[0.0, 0.0], &[0.5, 0.5], Prerank::Mean).unwrap(), None);
    }

    #[test]
    fn prerank_mean_matches_monte_carlo_oracle() {
        let m = [n01(), Forecast::normal(1.0, 4.0).unwrap(), Forecast::normal(-0.5, 0.25).unwrap()];
        let (y, t) = ([1.5, 2.0, 0.4], [0.5, 0.5, 0.5]);
        let exact = prerank_cpit(MvPredictive::Independent(&m), &y, &t, Prerank::Mean).unwrap().unwrap().u;
        // Oracle: the custom pre-rank forces the sampling route.
        fn mean(z: &[f64]) -> f64 {
            z.iter().sum::<f64>() / z.len() as f64
        }
        let sampling = PrerankSampling { samples: 1_000_000, seed: 99 };
        let mc = prerank_cpit_with(MvPredictive::Independent(&m), &y, &t, Prerank::Custom(mean), sampling).unwrap().unwrap().u;
        // Conditional sample size is about 0.44 n; SE of a proportion.
        let se = (exact * (1.0 - exact) / 400_000.0).sqrt();
        assert!((exact - mc).abs() < 3.0 * se, "{exact} vs {mc}");
    }

    #[test]
    fn prerank_on_ensembles() {
        let small = MvEnsemble::from_members(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(matches!(
            prerank_cpit(MvPredictive::Ensemble(&small), &[5.0, 5.0], &[0.0, 0.0], Prerank::Mean),
            Err(Error::Unsupported(_))
        ));
        let members: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64, i as f64 + 1.0]).collect();
        let big = MvEnsemble::from_members(&members).unwrap();
        let u = prerank_cpit(MvPredictive::Ensemble(&big), &[12.0, 12.0], &[2.0, 2.0], Prerank::Mean).unwrap().unwrap();
        assert!((0.0..=1.0).contains(&u.u));
    }

    proptest! {
        #[test]
        fn cep_is_monotone(
            data in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
        ) {
            let (probs, outcomes): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
            let fit = corp_reliability(&probs, &outcomes, 0.99, 5, 0).unwrap();
            prop_assert!(fit.cep.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            prop_assert!(fit.cep.iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn cpit_lies_in_unit_interval(mu in -3.0f64..3.0, s in 0.1f64..3.0, t in -3.0f64..3.0, y in -6.0f64..6.0) {
            let f = Forecast::logistic(mu, s).unwrap();
            if let Some(u) = cpit(&f, y, t).unwrap() {
                prop_assert!((0.0..=1.0).contains(&u.u));
            }
        }
    }
}
