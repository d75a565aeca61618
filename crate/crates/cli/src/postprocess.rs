//! Post-processing run: lapse-rate correction, EMOS per lead time on a
//! rolling training window, ECC reordering and a station climatology
//! reference with the same dependence structure.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::Serialize;
use wxverify::postprocess::{
    ecc_reorder, fit_climatology, fit_emos, lapse_rate_correct, predict_emos, EmosParams, StationMeta, TrainingCase, TrainingWindow,
    MIN_TRAINING,
};
use wxverify::{Forecast, MvEnsemble};

use crate::archive::{Archive, ArchiveRecord};
use crate::config::PostprocessOptions;
use crate::error::{CliError, CliResult};

/// Reads station metadata (columns `station_id`, `tpi`, `mhd`, optionally
/// `altitude`, `latitude`).
pub fn read_stations(path: &Path) -> CliResult<BTreeMap<String, StationMeta>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, row) in reader.deserialize::<StationMeta>().enumerate() {
        let meta = row.map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        meta.validate()?;
        if out.insert(meta.station_id.clone(), meta).is_some() {
            return Err(CliError::Data(format!("{}: duplicate station at row {}", path.display(), i + 2)));
        }
    }
    Ok(out)
}

/// EMOS coefficients used for one lead time and initialisation date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmosRecord {
    pub lead_time: u32,
    pub init_date: NaiveDate,
    pub training_cases: usize,
    pub training_days: usize,
    pub params: EmosParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PostprocessOutput {
    /// ECC-reordered EMOS quantiles.
    pub postprocessed: Archive,
    /// ECC-reordered climatology quantiles.
    pub climatology: Archive,
    pub emos: Vec<EmosRecord>,
}

fn mean_var(members: &[f64]) -> (f64, f64) {
    let n = members.len() as f64;
    let mean = members.iter().sum::<f64>() / n;
    let var = if members.len() > 1 { members.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Applies the lapse-rate correction to every member.
pub fn correct_archive(archive: &Archive, stations: &BTreeMap<String, StationMeta>) -> CliResult<Archive> {
    let records = archive
        .records
        .iter()
        .map(|r| {
            let meta = station(stations, &r.station_id)?;
            let members = r.members.iter().map(|&v| lapse_rate_correct(v, meta.mhd, 0.0)).collect::<wxverify::Result<_>>()?;
            Ok(ArchiveRecord { members, ..r.clone() })
        })
        .collect::<CliResult<_>>()?;
    Archive::new(records)
}

fn station<'a>(stations: &'a BTreeMap<String, StationMeta>, id: &str) -> CliResult<&'a StationMeta> {
    stations.get(id).ok_or_else(|| CliError::Data(format!("station {id} has no metadata")))
}

/// Predictive marginals keyed by station, init date and lead time.
type Marginals = HashMap<(String, NaiveDate, u32), Forecast>;

/// EMOS predictive distributions of every case that has a full training
/// window. Training for initialisation date `D` at lead `L` uses only cases
/// initialised on or before `D - L`, whose observations are known at `D`.
fn emos_marginals(
    archive: &Archive,
    stations: &BTreeMap<String, StationMeta>,
    window_days: usize,
) -> CliResult<(Marginals, Vec<EmosRecord>)> {
    let mut by_lead: BTreeMap<u32, BTreeMap<NaiveDate, Vec<&ArchiveRecord>>> = BTreeMap::new();
    for r in archive.sorted() {
        by_lead.entry(r.lead_time).or_default().entry(r.init_date).or_default().push(r);
    }
    let mut marginals = HashMap::new();
    let mut fits = Vec::new();
    for (&lead, days) in &by_lead {
        let mut window = TrainingWindow::new(window_days);
        let dates: Vec<NaiveDate> = days.keys().copied().collect();
        let mut next_train = 0;
        let mut previous: Option<EmosParams> = None;
        for &date in &dates {
            let cutoff = date.checked_sub_days(Days::new(u64::from(lead))).unwrap_or(NaiveDate::MIN);
            while next_train < dates.len() && dates[next_train] <= cutoff {
                let d = dates[next_train];
                let cases = days[&d]
                    .iter()
                    .map(|r| {
                        let (m, v) = mean_var(&r.members);
                        Ok(TrainingCase::new(m, v, station(stations, &r.station_id)?, r.obs))
                    })
                    .collect::<CliResult<_>>()?;
                window.push_day(d, cases)?;
                next_train += 1;
            }
            if window.len() < MIN_TRAINING {
                continue;
            }
            let init = previous.clone().map(|p| EmosParams { lead_time: Some(lead), ..p }).unwrap_or(EmosParams { lead_time: Some(lead), ..Default::default() });
            let fit = fit_emos(&window, Some(&init))?;
            for r in &days[&date] {
                let (m, v) = mean_var(&r.members);
                let f = predict_emos(&fit.params, m, v, station(stations, &r.station_id)?)?;
                marginals.insert((r.station_id.clone(), date, lead), f);
            }
            fits.push(EmosRecord {
                lead_time: lead,
                init_date: date,
                training_cases: window.len(),
                training_days: window.days(),
                params: fit.params.clone(),
                objective: fit.objective,
                iterations: fit.iterations,
                converged: fit.converged,
            });
            previous = Some(fit.params);
        }
    }
    Ok((marginals, fits))
}

/// Normal climatology per station and initialisation date from the
/// observations valid in the `window_days` days before that date.
fn climatology_marginals(archive: &Archive, window_days: usize) -> CliResult<HashMap<(String, NaiveDate), Forecast>> {
    let mut obs: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut inits: BTreeSet<(&str, NaiveDate)> = BTreeSet::new();
    for r in &archive.records {
        obs.entry(r.station_id.as_str()).or_default().insert(r.valid_date(), r.obs);
        inits.insert((r.station_id.as_str(), r.init_date));
    }
    let mut out = HashMap::new();
    for (s, date) in inits {
        let start = date.checked_sub_days(Days::new(window_days as u64)).unwrap_or(NaiveDate::MIN);
        let history: Vec<f64> = obs[s].range(start..date).map(|(_, v)| *v).collect();
        if history.len() >= MIN_TRAINING {
            out.insert((s.to_string(), date), fit_climatology(&history)?);
        }
    }
    Ok(out)
}

/// Reorders the quantiles of `marginal(record)` with the rank structure of
/// the raw ensembles across the lead times of each station and date.
fn ecc_archive(archive: &Archive, mut marginal: impl FnMut(&ArchiveRecord) -> Option<Forecast>) -> CliResult<Archive> {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<&ArchiveRecord>> = BTreeMap::new();
    for r in archive.sorted() {
        groups.entry((r.station_id.as_str(), r.init_date)).or_default().push(r);
    }
    let mut records = Vec::new();
    for recs in groups.values() {
        let (with, forecasts): (Vec<&ArchiveRecord>, Vec<Forecast>) = recs.iter().filter_map(|r| marginal(r).map(|f| (*r, f))).unzip();
        if with.is_empty() {
            continue;
        }
        let raw = MvEnsemble::from_rows(&with.iter().map(|r| r.members.clone()).collect::<Vec<_>>())?;
        let reordered = ecc_reorder(&forecasts, &raw)?;
        for (k, r) in with.iter().enumerate() {
            records.push(ArchiveRecord { members: reordered.component(k), ..(*r).clone() });
        }
    }
    Archive::new(records)
}

/// Full post-processing of a raw archive.
pub fn postprocess(raw: &Archive, stations: &BTreeMap<String, StationMeta>, opts: &PostprocessOptions) -> CliResult<PostprocessOutput> {
    if raw.members() < 2 {
        return Err(CliError::Data("post-processing needs ensembles of at least two members".into()));
    }
    let corrected = if opts.lapse_rate { correct_archive(raw, stations)? } else { raw.clone() };
    let (emos, fits) = emos_marginals(&corrected, stations, opts.window_days)?;
    let clim = climatology_marginals(&corrected, opts.window_days)?;
    let postprocessed = ecc_archive(&corrected, |r| emos.get(&(r.station_id.clone(), r.init_date, r.lead_time)).cloned())?;
    let climatology = ecc_archive(&corrected, |r| clim.get(&(r.station_id.clone(), r.init_date)).cloned())?;
    Ok(PostprocessOutput { postprocessed, climatology, emos: fits })
}
