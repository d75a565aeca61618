//! Calibration diagnostics of an ensemble archive: rank and PIT histograms
//! per lead time, conditional PIT histograms and CORP reliability diagrams
//! above the heat thresholds, and reliability indices per station.

use std::collections::BTreeMap;

use wxverify::calibration::{self, HistogramSummary, PitValue, DEFAULT_PIT_BINS};
use wxverify::postprocess::smooth_ensemble;
use wxverify::table::{Cell, Table};
use wxverify::{row, Error, Forecast};

use crate::archive::{Archive, ArchiveRecord};
use crate::error::CliResult;

/// Resamples of the CORP consistency bands.
pub const CORP_RESAMPLES: usize = 500;
pub const CORP_BAND_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub thresholds: Vec<f64>,
    pub bins: usize,
    pub seed: u64,
    pub corp_resamples: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { thresholds: vec![25.0, 27.0], bins: DEFAULT_PIT_BINS, seed: 0, corp_resamples: CORP_RESAMPLES }
    }
}

/// Histograms and counts of one group of cases.
#[derive(Debug, Clone)]
struct Group {
    ranks: Vec<usize>,
    pits: Vec<PitValue>,
}

fn hist_table(name: &str, keys: &[&str], groups: &[(Vec<Cell>, HistogramSummary)], rank: bool) -> Table {
    let mut columns = keys.to_vec();
    columns.extend(["bin", "lower", "upper", "count", "frequency"]);
    let mut t = Table::new(name, &columns);
    for (k, h) in groups {
        for b in 0..h.bins {
            let (lo, hi) = if rank { ((b + 1) as f64, (b + 1) as f64) } else { (b as f64 / h.bins as f64, (b + 1) as f64 / h.bins as f64) };
            let mut row = k.clone();
            row.extend([(b + 1).into(), lo.into(), hi.into(), (h.counts[b] as i64).into(), h.frequencies[b].into()]);
            t.push(row);
        }
    }
    t
}

/// Runs all diagnostics; returns the output tables.
pub fn diagnose(archive: &Archive, opts: &DiagnoseOptions) -> CliResult<Vec<Table>> {
    let m = archive.members();
    let sorted = archive.sorted();
    let mut by_lead: BTreeMap<u32, Group> = BTreeMap::new();
    let mut by_station: BTreeMap<&str, Group> = BTreeMap::new();
    for (i, rec) in sorted.iter().enumerate() {
        let r = calibration::rank(&rec.members, rec.obs, opts.seed.wrapping_add(i as u64))?;
        let p = calibration::pit(&smooth_ensemble(&rec.members)?, rec.obs)?;
        for g in [by_lead.entry(rec.lead_time).or_insert_with(empty), by_station.entry(rec.station_id.as_str()).or_insert_with(empty)] {
            g.ranks.push(r);
            g.pits.push(p);
        }
    }

    let mut rank_groups = Vec::new();
    let mut pit_groups = Vec::new();
    let mut summary = Table::new("diagnose_summary", &["lead_time", "n", "rank_reliability_index", "pit_reliability_index"]);
    for (lead, g) in &by_lead {
        let rh = HistogramSummary::from_ranks(&g.ranks, m)?;
        let ph = HistogramSummary::from_pit(&g.pits, opts.bins)?;
        summary.push(row![*lead, g.ranks.len(), rh.reliability_index, ph.reliability_index]);
        rank_groups.push((vec![Cell::from(*lead)], rh));
        pit_groups.push((vec![Cell::from(*lead)], ph));
    }
    let mut stations = Table::new("station_reliability", &["station_id", "n", "rank_reliability_index", "pit_reliability_index"]);
    for (s, g) in &by_station {
        let rh = HistogramSummary::from_ranks(&g.ranks, m)?;
        let ph = HistogramSummary::from_pit(&g.pits, opts.bins)?;
        stations.push(row![*s, g.ranks.len(), rh.reliability_index, ph.reliability_index]);
    }

    let mut tables = vec![
        hist_table("rank_hist", &["lead_time"], &rank_groups, true),
        hist_table("pit_hist", &["lead_time"], &pit_groups, false),
        summary,
        stations,
    ];
    tables.extend(threshold_diagnostics(&sorted, opts)?);
    Ok(tables)
}

fn empty() -> Group {
    Group { ranks: Vec::new(), pits: Vec::new() }
}

/// Conditional PIT histograms per threshold and lead time, and CORP
/// reliability diagrams of the exceedance probabilities per threshold.
fn threshold_diagnostics(sorted: &[&ArchiveRecord], opts: &DiagnoseOptions) -> CliResult<Vec<Table>> {
    let mut cpit_summary =
        Table::new("cpit_summary", &["threshold", "lead_time", "exceedances", "used", "too_few_members", "reliability_index"]);
    let mut cpit_groups = Vec::new();
    let mut corp = Table::new("corp", &["threshold", "prob", "cep"]);
    let mut band = Table::new("corp_band", &["threshold", "prob", "lower", "upper"]);
    for (ti, &t) in opts.thresholds.iter().enumerate() {
        let mut per_lead: BTreeMap<u32, (usize, usize, Vec<PitValue>)> = BTreeMap::new();
        let mut probs = Vec::with_capacity(sorted.len());
        let mut outcomes = Vec::with_capacity(sorted.len());
        for rec in sorted {
            let above = rec.members.iter().filter(|&&x| x > t).count();
            probs.push(above as f64 / rec.members.len() as f64);
            outcomes.push(rec.obs > t);
            let e = per_lead.entry(rec.lead_time).or_default();
            if rec.obs <= t {
                continue;
            }
            e.0 += 1;
            match calibration::cpit(&Forecast::ensemble(rec.members.clone())?, rec.obs, t) {
                Ok(Some(v)) => e.2.push(v),
                Ok(None) => {}
                Err(Error::Unsupported(_) | Error::DegenerateConditional { .. }) => e.1 += 1,
                Err(err) => return Err(err.into()),
            }
        }
        for (lead, (exceed, skipped, values)) in per_lead {
            let ri = if values.is_empty() {
                None
            } else {
                let h = HistogramSummary::from_pit(&values, opts.bins)?;
                let ri = h.reliability_index;
                cpit_groups.push((row![t, lead], h));
                Some(ri)
            };
            cpit_summary.push(row![t, lead, exceed, values.len(), skipped, ri]);
        }
        if !probs.is_empty() {
            let fit = calibration::corp_reliability(&probs, &outcomes, CORP_BAND_LEVEL, opts.corp_resamples, opts.seed.wrapping_add(ti as u64))?;
            for (p, c) in fit.probs.iter().zip(&fit.cep) {
                corp.push(row![t, *p, *c]);
            }
            for ((p, lo), hi) in fit.band_probs.iter().zip(&fit.lower).zip(&fit.upper) {
                band.push(row![t, *p, *lo, *hi]);
            }
        }
    }
    Ok(vec![hist_table("cpit_hist", &["threshold", "lead_time"], &cpit_groups, false), cpit_summary, corp, band])
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn tables_cover_leads_and_thresholds() {
        let mut recs = Vec::new();
        for d in 0..30u32 {
            for lead in 1..=2 {
                let base = 20.0 + (d % 10) as f64;
                let members: Vec<f64> = (0..21).map(|j| base + 0.4 * j as f64 - 4.0).collect();
                recs.push(ArchiveRecord {
                    station_id: if d % 2 == 0 { "A".into() } else { "B".into() },
                    init_date: NaiveDate::from_ymd_opt(2021, 6, 1).unwrap() + chrono::Days::new(d as u64),
                    lead_time: lead,
                    members,
                    obs: base + 0.3,
                });
            }
        }
        let archive = Archive::new(recs).unwrap();
        let opts = DiagnoseOptions { corp_resamples: 20, ..Default::default() };
        let tables = diagnose(&archive, &opts).unwrap();
        let names: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["rank_hist", "pit_hist", "diagnose_summary", "station_reliability", "cpit_hist", "cpit_summary", "corp", "corp_band"]);
        assert_eq!(tables[0].len(), 2 * 22);
        assert_eq!(tables[3].len(), 2);
        assert_eq!(tables[5].len(), 4);
        let again = diagnose(&archive, &opts).unwrap();
        assert_eq!(tables, again);
    }
}
