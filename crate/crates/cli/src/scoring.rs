//! Batch scoring of an archive: per-case scores and grouped means.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;
use wxverify::heat::{HeatLevel, HeatThresholds};
use wxverify::mvscores::{self, VariogramSpec};
use wxverify::postprocess::smooth_ensemble;
use wxverify::table::{Cell, Table};
use wxverify::uniscores::{self, EnsembleEstimator, Expectation};
use wxverify::{row, ChainingFunction, Forecast, MvEnsemble, WeightFunction};

use crate::archive::{Archive, ArchiveRecord};
use crate::config::{ScoreName, ScoreRequest};
use crate::error::{CliError, CliResult};

/// Score of one case: a single lead time, or the vector of lead times of
/// one station and initialisation date (`lead_time = None`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub score: String,
    pub station_id: String,
    pub init_date: NaiveDate,
    pub lead_time: Option<u32>,
    pub value: f64,
}

/// Mean of a score over a group; `lead_time = None` is the overall mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMean {
    pub score: String,
    pub lead_time: Option<u32>,
    pub n: usize,
    pub mean: f64,
}

/// Station and initialisation date left out of a multivariate score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub score: String,
    pub station_id: String,
    pub init_date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreRun {
    pub records: Vec<ScoreRecord>,
    pub means: Vec<ScoreMean>,
    pub skipped: Vec<Skipped>,
}

/// Settings shared by all requests of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringContext {
    pub heat: HeatThresholds,
    /// Lead times forming the multivariate outcome vector, in order.
    pub lead_times: Vec<u32>,
}

impl Default for ScoringContext {
    fn default() -> Self {
        Self { heat: HeatThresholds::default(), lead_times: vec![1, 2, 3] }
    }
}

/// Checks that every request can be computed on ensemble forecasts, naming
/// the remedy when it cannot.
pub fn validate_requests(requests: &[ScoreRequest], ctx: &ScoringContext) -> CliResult<()> {
    for r in requests {
        validate_request(r, ctx)?;
    }
    Ok(())
}

fn validate_request(r: &ScoreRequest, ctx: &ScoringContext) -> CliResult<()> {
    let label = r.label();
    let usage = |msg: String| Err(CliError::Usage(format!("score {label}: {msg}")));
    if let Some(t) = r.threshold {
        if !t.is_finite() {
            return usage("threshold must be finite".into());
        }
    }
    if let Some(w) = &r.weight {
        w.validate().map_err(|e| CliError::Usage(format!("score {label}: {e}")))?;
    }
    if matches!(r.name, ScoreName::Owcrps | ScoreName::OwcrpsBs) && !r.smooth {
        return usage(format!(
            "{} is not defined for raw ensembles; add `smooth = true` to this score so the ensemble is smoothed with a normal distribution first",
            r.name.as_str()
        ));
    }
    if r.name.is_multivariate() {
        if r.smooth {
            return usage("smoothing applies to univariate scores only".into());
        }
        if let Some(l) = r.heat_level {
            HeatLevel::new(l).map_err(|e| CliError::Usage(format!("score {label}: {e}")))?;
            if ctx.lead_times.len() != 3 {
                return usage("heat levels need exactly three lead times".into());
            }
        }
        if matches!(r.name, ScoreName::Twes | ScoreName::Twvs | ScoreName::Vres) {
            mv_weight(r, ctx)?;
        }
    } else {
        if r.heat_level.is_some() {
            return usage("heat levels weight multivariate scores only".into());
        }
        match r.name {
            ScoreName::Brier | ScoreName::OwcrpsBs if r.threshold.is_none() => return usage("needs a threshold".into()),
            ScoreName::Twcrps => {
                uni_chaining(r)?;
            }
            ScoreName::Owcrps | ScoreName::Vrcrps => {
                uni_weight(r)?;
            }
            _ => {}
        }
    }
    if let Some(p) = r.order {
        if !(p > 0.0 && p.is_finite()) {
            return usage("variogram order must be positive".into());
        }
    }
    Ok(())
}

fn uni_weight(r: &ScoreRequest) -> CliResult<WeightFunction> {
    let w = match (&r.weight, r.threshold) {
        (Some(w), _) => w.clone(),
        (None, Some(t)) => WeightFunction::IndicatorAbove { threshold: t },
        (None, None) => return Err(CliError::Usage(format!("score {}: needs a weight or a threshold", r.label()))),
    };
    if !matches!(w.dim(), None | Some(1)) {
        return Err(CliError::Usage(format!("score {}: weight {} is not univariate", r.label(), w.name())));
    }
    Ok(w)
}

fn uni_chaining(r: &ScoreRequest) -> CliResult<ChainingFunction> {
    let w = uni_weight(r)?;
    ChainingFunction::for_weight(&w)
        .ok_or_else(|| CliError::Usage(format!("score {}: no chaining function is known for weight {}", r.label(), w.name())))
}

/// Weight, chaining and reference point of a multivariate weighted score.
struct MvWeighting {
    weight: WeightFunction,
    chaining: ChainingFunction,
    origin: Vec<f64>,
}

fn mv_weight(r: &ScoreRequest, ctx: &ScoringContext) -> CliResult<MvWeighting> {
    let d = ctx.lead_times.len();
    let fail = |msg: &str| CliError::Usage(format!("score {}: {msg}", r.label()));
    if let Some(l) = r.heat_level {
        let level = HeatLevel::new(l).map_err(|e| fail(&e.to_string()))?;
        let weight = WeightFunction::HeatLevelIndicator { level, thresholds: Some(ctx.heat) };
        // Outcomes outside the level collapse onto a point just at the
        // threshold that the level is defined by.
        let z0 = if level.get() == 4 { ctx.heat.hot } else { ctx.heat.warm };
        let origin = vec![r.x0.unwrap_or(z0); d];
        let chaining = ChainingFunction::collapse_outside(weight.clone(), origin.clone()).map_err(|e| fail(&e.to_string()))?;
        return Ok(MvWeighting { weight, chaining, origin });
    }
    match (&r.weight, r.threshold) {
        (Some(w), _) if matches!(w.dim(), None | Some(1)) => {
            let chaining = ChainingFunction::for_weight(w).ok_or_else(|| fail("no chaining function is known for this weight"))?;
            if r.name == ScoreName::Vres && w.dim() == Some(1) {
                return Err(fail("vres needs a weight on the whole vector (a heat level, a threshold or a multivariate weight)"));
            }
            Ok(MvWeighting { weight: w.clone(), chaining, origin: vec![r.x0.unwrap_or(0.0); d] })
        }
        (Some(w), _) => {
            if w.dim() != Some(d) {
                return Err(fail(&format!("weight dimension {:?} differs from the {d} lead times", w.dim())));
            }
            let origin = vec![r.x0.ok_or_else(|| fail("a multivariate weight needs the collapse point x0"))?; d];
            let chaining = ChainingFunction::collapse_outside(w.clone(), origin.clone()).map_err(|e| fail(&e.to_string()))?;
            Ok(MvWeighting { weight: w.clone(), chaining, origin })
        }
        (None, Some(t)) => {
            // All components above t; tw scores censor each component at t.
            let weight = WeightFunction::BoxIndicator { lower: vec![t; d], upper: vec![f64::INFINITY; d] };
            Ok(MvWeighting { weight, chaining: ChainingFunction::CensorAbove { threshold: t }, origin: vec![r.x0.unwrap_or(t); d] })
        }
        (None, None) => Err(fail("needs a heat level, a threshold or a weight")),
    }
}

fn estimator(r: &ScoreRequest) -> EnsembleEstimator {
    if r.fair {
        EnsembleEstimator::Fair
    } else {
        EnsembleEstimator::Plain
    }
}

fn score_univariate(r: &ScoreRequest, rec: &ArchiveRecord) -> CliResult<f64> {
    let est = estimator(r);
    let forecast = if r.smooth { smooth_ensemble(&rec.members)? } else { Forecast::ensemble(rec.members.clone())? };
    let y = rec.obs;
    let v = match r.name {
        ScoreName::Crps => match &forecast {
            Forecast::Ensemble { members } => uniscores::crps_ensemble_with(members, y, est)?,
            f => uniscores::crps(f, y)?,
        },
        ScoreName::Brier => uniscores::brier(&forecast, y, r.threshold.expect("validated"))?,
        ScoreName::Twcrps => uniscores::twcrps_with(&forecast, y, &uni_chaining(r)?, Expectation::Quadrature, est)?,
        ScoreName::Owcrps => uniscores::owcrps(&forecast, y, &uni_weight(r)?)?,
        ScoreName::OwcrpsBs => uniscores::owcrps_bs(&forecast, y, r.threshold.expect("validated"))?,
        ScoreName::Vrcrps => {
            let w = uni_weight(r)?;
            let x0 = r.x0.or(r.threshold).unwrap_or(0.0);
            uniscores::vrcrps_with(&forecast, y, &w, x0, Expectation::Quadrature, est)?
        }
        _ => unreachable!("multivariate score in the univariate path"),
    };
    Ok(v.value)
}

fn score_multivariate(r: &ScoreRequest, ctx: &ScoringContext, ens: &MvEnsemble, y: &[f64]) -> CliResult<f64> {
    let est = estimator(r);
    let spec = VariogramSpec::with_order(r.order.unwrap_or(0.5));
    let v = match r.name {
        ScoreName::Es => mvscores::energy_score_with(ens, y, est)?,
        ScoreName::Vs => mvscores::variogram_score_with(ens, y, &spec, est)?,
        ScoreName::Twes => mvscores::tw_energy_score_with(ens, y, &mv_weight(r, ctx)?.chaining, est)?,
        ScoreName::Twvs => mvscores::tw_variogram_score_with(ens, y, &mv_weight(r, ctx)?.chaining, &spec, est)?,
        ScoreName::Vres => {
            let mw = mv_weight(r, ctx)?;
            mvscores::vr_energy_score_with(ens, y, &mw.weight, &mw.origin, est)?
        }
        _ => unreachable!("univariate score in the multivariate path"),
    };
    Ok(v.value)
}

/// Station and initialisation date of a multivariate case.
pub type CaseKey = (String, NaiveDate);

/// Ensemble and outcome vector of a case, or why the group is incomplete.
pub type MvCase = Result<(MvEnsemble, Vec<f64>), String>;

/// Vectors over `ctx.lead_times` per station and initialisation date, in
/// sorted key order. Incomplete groups are returned as errors.
pub fn multivariate_cases<'a>(
    archive: &'a Archive,
    lead_times: &[u32],
) -> Vec<(CaseKey, MvCase)> {
    let mut groups: BTreeMap<(String, NaiveDate), BTreeMap<u32, &'a ArchiveRecord>> = BTreeMap::new();
    for rec in &archive.records {
        if lead_times.contains(&rec.lead_time) {
            groups.entry((rec.station_id.clone(), rec.init_date)).or_default().insert(rec.lead_time, rec);
        }
    }
    groups
        .into_iter()
        .map(|(key, by_lead)| {
            let case = (|| {
                let recs: Vec<&ArchiveRecord> = lead_times
                    .iter()
                    .map(|l| by_lead.get(l).copied().ok_or_else(|| format!("lead time {l} is missing")))
                    .collect::<Result<_, _>>()?;
                let rows: Vec<Vec<f64>> = recs.iter().map(|r| r.members.clone()).collect();
                let ens = MvEnsemble::from_rows(&rows).map_err(|e| e.to_string())?;
                Ok((ens, recs.iter().map(|r| r.obs).collect()))
            })();
            (key, case)
        })
        .collect()
}

/// Scores every case of the archive for each request. Records are sorted by
/// request, station, initialisation date and lead time, so the output does
/// not depend on the row order of the input.
pub fn score_archive(archive: &Archive, requests: &[ScoreRequest], ctx: &ScoringContext) -> CliResult<ScoreRun> {
    validate_requests(requests, ctx)?;
    let sorted = archive.sorted();
    let mut run = ScoreRun::default();
    let mv_cases = if requests.iter().any(|r| r.name.is_multivariate()) { multivariate_cases(archive, &ctx.lead_times) } else { Vec::new() };
    for r in requests {
        let label = r.label();
        let start = run.records.len();
        if r.name.is_multivariate() {
            for ((station, date), case) in &mv_cases {
                match case {
                    Ok((ens, y)) => {
                        let value = score_multivariate(r, ctx, ens, y)?;
                        run.records.push(ScoreRecord { score: label.clone(), station_id: station.clone(), init_date: *date, lead_time: None, value });
                    }
                    Err(reason) => run.skipped.push(Skipped {
                        score: label.clone(),
                        station_id: station.clone(),
                        init_date: *date,
                        reason: reason.clone(),
                    }),
                }
            }
        } else {
            for rec in &sorted {
                let value = score_univariate(r, rec)
                    .map_err(|e| annotate(e, &format!("{label} at {} {} lead {}", rec.station_id, rec.init_date, rec.lead_time)))?;
                run.records.push(ScoreRecord {
                    score: label.clone(),
                    station_id: rec.station_id.clone(),
                    init_date: rec.init_date,
                    lead_time: Some(rec.lead_time),
                    value,
                });
            }
        }
        run.means.extend(group_means(&label, &run.records[start..]));
    }
    Ok(run)
}

fn annotate(e: CliError, context: &str) -> CliError {
    match e {
        CliError::Data(m) => CliError::Data(format!("{context}: {m}")),
        CliError::Numerical(m) => CliError::Numerical(format!("{context}: {m}")),
        other => other,
    }
}

/// Means by lead time (ascending) followed by the overall mean, summed in
/// record order.
pub fn group_means(label: &str, records: &[ScoreRecord]) -> Vec<ScoreMean> {
    let mut by_lead: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    let (mut n, mut sum) = (0usize, 0.0);
    for r in records {
        if let Some(l) = r.lead_time {
            let e = by_lead.entry(l).or_default();
            e.0 += 1;
            e.1 += r.value;
        }
        n += 1;
        sum += r.value;
    }
    let mut out: Vec<ScoreMean> = Vec::new();
    if n == by_lead.values().map(|e| e.0).sum::<usize>() {
        out.extend(by_lead.into_iter().map(|(l, (k, s))| ScoreMean { score: label.to_string(), lead_time: Some(l), n: k, mean: s / k as f64 }));
    }
    if n > 0 {
        out.push(ScoreMean { score: label.to_string(), lead_time: None, n, mean: sum / n as f64 });
    }
    out
}

fn lead_cell(l: Option<u32>) -> Cell {
    l.map_or_else(|| Cell::from("all"), Cell::from)
}

impl ScoreRun {
    pub fn records_table(&self) -> Table {
        let mut t = Table::new("scores", &["score", "station_id", "init_date", "lead_time", "value"]);
        for r in &self.records {
            t.push(vec![r.score.as_str().into(), r.station_id.as_str().into(), r.init_date.to_string().into(), lead_cell(r.lead_time), r.value.into()]);
        }
        t
    }

    pub fn means_table(&self) -> Table {
        let mut t = Table::new("score_means", &["score", "lead_time", "n", "mean"]);
        for m in &self.means {
            t.push(vec![m.score.as_str().into(), lead_cell(m.lead_time), m.n.into(), m.mean.into()]);
        }
        t
    }

    pub fn skipped_table(&self) -> Table {
        let mut t = Table::new("score_skipped", &["score", "station_id", "init_date", "reason"]);
        for s in &self.skipped {
            t.push(row![s.score.as_str(), s.station_id.as_str(), s.init_date.to_string(), s.reason.as_str()]);
        }
        t
    }

    /// Mean of a score label over a group.
    pub fn mean(&self, score: &str, lead_time: Option<u32>) -> Option<f64> {
        self.means.iter().find(|m| m.score == score && m.lead_time == lead_time).map(|m| m.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(station: &str, day: u32, lead: u32, members: Vec<f64>, obs: f64) -> ArchiveRecord {
        ArchiveRecord {
            station_id: station.into(),
            init_date: NaiveDate::from_ymd_opt(2020, 7, day).unwrap(),
            lead_time: lead,
            members,
            obs,
        }
    }

    #[test]
    fn perfect_deterministic_forecasts_score_zero() {
        let archive = Archive::new(vec![rec("A", 1, 1, vec![20.0], 20.0), rec("B", 2, 2, vec![26.5], 26.5)]).unwrap();
        let run = score_archive(&archive, &[ScoreRequest::new(ScoreName::Crps)], &ScoringContext::default()).unwrap();
        assert!(run.records.iter().all(|r| r.value == 0.0));
        assert_eq!(run.mean("crps", None), Some(0.0));
    }

    #[test]
    fn owcrps_without_smoothing_names_the_remedy() {
        let archive = Archive::new(vec![rec("A", 1, 1, vec![20.0, 21.0], 20.0)]).unwrap();
        let req = ScoreRequest::new(ScoreName::Owcrps).with_threshold(25.0);
        let err = score_archive(&archive, std::slice::from_ref(&req), &ScoringContext::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("smooth = true"), "{err}");
        assert!(score_archive(&archive, &[req.smoothed()], &ScoringContext::default()).is_ok());
    }

    #[test]
    fn row_order_does_not_change_output() {
        let a = vec![
            rec("B", 2, 1, vec![1.0, 2.0, 3.0], 2.5),
            rec("A", 1, 2, vec![0.0, 1.0, 5.0], 0.5),
            rec("A", 1, 1, vec![2.0, 2.0, 4.0], 1.0),
        ];
        let mut b = a.clone();
        b.reverse();
        let req = [ScoreRequest::new(ScoreName::Crps), ScoreRequest::new(ScoreName::Twcrps).with_threshold(1.5)];
        let ra = score_archive(&Archive::new(a).unwrap(), &req, &ScoringContext::default()).unwrap();
        let rb = score_archive(&Archive::new(b).unwrap(), &req, &ScoringContext::default()).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.records[0].station_id, "A");
        assert_eq!(ra.means[0].lead_time, Some(1));
    }

    #[test]
    fn multivariate_scores_group_lead_times() {
        let mut recs = Vec::new();
        for lead in 1..=3 {
            recs.push(rec("A", 1, lead, vec![24.0, 26.0, 28.0], 27.0));
        }
        recs.push(rec("B", 1, 1, vec![24.0, 26.0, 28.0], 27.0));
        let archive = Archive::new(recs).unwrap();
        let reqs = [
            ScoreRequest::new(ScoreName::Es),
            ScoreRequest::new(ScoreName::Twes).with_heat_level(4),
            ScoreRequest::new(ScoreName::Vres).with_threshold(25.0),
        ];
        let run = score_archive(&archive, &reqs, &ScoringContext::default()).unwrap();
        assert_eq!(run.records.len(), 3);
        assert_eq!(run.skipped.len(), 3);
        assert!(run.records.iter().all(|r| r.lead_time.is_none() && r.value >= 0.0));
    }

    #[test]
    fn heat_levels_are_rejected_for_univariate_scores() {
        let req = ScoreRequest::new(ScoreName::Twcrps).with_heat_level(2);
        assert!(validate_requests(&[req], &ScoringContext::default()).is_err());
    }
}
