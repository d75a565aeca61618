//! Comparison of forecast systems: mean scores, skill against a reference
//! system, and summary grids of CRPS by lead time, ES, VS and the heat-level
//! weighted multivariate scores.

use wxverify::table::{Cell, Table};

use crate::archive::Archive;
use crate::config::{ScoreName, ScoreRequest};
use crate::error::CliResult;
use crate::scoring::{score_archive, ScoreRun, ScoringContext};
use crate::skill::{skill_rows_table, skill_table};

pub const HEAT_LEVELS: [u8; 4] = [1, 2, 3, 4];

/// CRPS, ES, VS and the twES/twVS for each heat level.
pub fn default_report_scores() -> Vec<ScoreRequest> {
    let mut scores = vec![ScoreRequest::new(ScoreName::Crps), ScoreRequest::new(ScoreName::Es), ScoreRequest::new(ScoreName::Vs)];
    for l in HEAT_LEVELS {
        scores.push(ScoreRequest::new(ScoreName::Twes).with_heat_level(l));
    }
    for l in HEAT_LEVELS {
        scores.push(ScoreRequest::new(ScoreName::Twvs).with_heat_level(l));
    }
    scores
}

#[derive(Debug, Clone)]
pub struct SystemScores {
    pub name: String,
    pub run: ScoreRun,
}

/// Scores every system with the same requests.
pub fn score_systems(systems: &[(String, Archive)], requests: &[ScoreRequest], ctx: &ScoringContext) -> CliResult<Vec<SystemScores>> {
    systems.iter().map(|(name, a)| Ok(SystemScores { name: name.clone(), run: score_archive(a, requests, ctx)? })).collect()
}

/// Output tables of a report.
pub fn report_tables(scored: &[SystemScores], requests: &[ScoreRequest], reference: Option<&str>, lead_times: &[u32]) -> CliResult<Vec<Table>> {
    let mut means = Table::new("report_means", &["system", "score", "lead_time", "n", "mean"]);
    for s in scored {
        for m in &s.run.means {
            means.push(vec![s.name.as_str().into(), m.score.as_str().into(), m.lead_time.map_or_else(|| Cell::from("all"), Cell::from), m.n.into(), m.mean.into()]);
        }
    }
    let mut tables = vec![means, summary_grid(scored, requests, lead_times), heat_grid(scored, requests)];
    if let Some(r) = reference {
        let base = scored.iter().find(|s| s.name == r).expect("reference validated against the systems");
        let mut skill = skill_rows_table("", r, &[]);
        for s in scored.iter().filter(|s| s.name != r) {
            skill.rows.extend(skill_rows_table(&s.name, r, &skill_table(&s.run.means, &base.run.means)?).rows);
        }
        tables.push(skill);
    }
    Ok(tables)
}

fn find(requests: &[ScoreRequest], f: impl Fn(&ScoreRequest) -> bool) -> Option<&ScoreRequest> {
    requests.iter().find(|r| f(r))
}

/// One row per system: CRPS per lead time, then ES and VS.
fn summary_grid(scored: &[SystemScores], requests: &[ScoreRequest], lead_times: &[u32]) -> Table {
    let crps = find(requests, |r| r.name == ScoreName::Crps && r.threshold.is_none() && r.weight.is_none()).map(ScoreRequest::label);
    let es = find(requests, |r| r.name == ScoreName::Es).map(ScoreRequest::label);
    let vs = find(requests, |r| r.name == ScoreName::Vs).map(ScoreRequest::label);
    let mut columns = vec!["system".to_string()];
    columns.extend(lead_times.iter().map(|l| format!("crps_lead{l}")));
    columns.extend(["es".to_string(), "vs".to_string()]);
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = Table::new("report_summary", &cols);
    for s in scored {
        let mut row: Vec<Cell> = vec![s.name.as_str().into()];
        for &l in lead_times {
            row.push(crps.as_ref().and_then(|c| s.run.mean(c, Some(l))).into());
        }
        row.push(es.as_ref().and_then(|c| s.run.mean(c, None)).into());
        row.push(vs.as_ref().and_then(|c| s.run.mean(c, None)).into());
        t.push(row);
    }
    t
}

/// One row per system and heat level with the twES and twVS.
fn heat_grid(scored: &[SystemScores], requests: &[ScoreRequest]) -> Table {
    let mut t = Table::new("report_heat_levels", &["system", "heat_level", "twes", "twvs"]);
    for s in scored {
        for l in HEAT_LEVELS {
            let es = find(requests, |r| r.name == ScoreName::Twes && r.heat_level == Some(l)).and_then(|r| s.run.mean(&r.label(), None));
            let vs = find(requests, |r| r.name == ScoreName::Twvs && r.heat_level == Some(l)).and_then(|r| s.run.mean(&r.label(), None));
            if es.is_some() || vs.is_some() {
                t.push(vec![s.name.as_str().into(), l.into(), es.into(), vs.into()]);
            }
        }
    }
    t
}
