//! Skill scores `1 - S / S_ref` relative to a reference system.

use serde::Serialize;
use wxverify::table::{Cell, Table};

use crate::error::{CliError, CliResult};
use crate::scoring::ScoreMean;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillRow {
    pub score: String,
    pub lead_time: Option<u32>,
    pub value: f64,
    pub reference: f64,
    /// `None` when the reference score is zero and the skill is undefined.
    pub skill: Option<f64>,
}

/// Skill `1 - s / s_ref`; `None` when `s_ref = 0`.
pub fn skill(s: f64, s_ref: f64) -> Option<f64> {
    if s_ref == 0.0 {
        None
    } else {
        Some(1.0 - s / s_ref)
    }
}

/// Skill of every group of `scores` against the matching group of
/// `reference`. Groups must match one to one.
pub fn skill_table(scores: &[ScoreMean], reference: &[ScoreMean]) -> CliResult<Vec<SkillRow>> {
    if scores.len() != reference.len() {
        return Err(CliError::Data(format!("{} score groups against {} reference groups", scores.len(), reference.len())));
    }
    scores
        .iter()
        .map(|s| {
            let r = reference
                .iter()
                .find(|r| r.score == s.score && r.lead_time == s.lead_time)
                .ok_or_else(|| CliError::Data(format!("no reference group for {} lead {:?}", s.score, s.lead_time)))?;
            if r.n != s.n {
                return Err(CliError::Data(format!("{} lead {:?}: {} cases against {} reference cases", s.score, s.lead_time, s.n, r.n)));
            }
            Ok(SkillRow { score: s.score.clone(), lead_time: s.lead_time, value: s.mean, reference: r.mean, skill: skill(s.mean, r.mean) })
        })
        .collect()
}

pub fn skill_rows_table(system: &str, reference: &str, rows: &[SkillRow]) -> Table {
    let mut t = Table::new("skill", &["system", "reference", "score", "lead_time", "value", "reference_value", "skill", "undefined"]);
    for r in rows {
        t.push(vec![
            system.into(),
            reference.into(),
            r.score.as_str().into(),
            r.lead_time.map_or_else(|| Cell::from("all"), Cell::from),
            r.value.into(),
            r.reference.into(),
            r.skill.into(),
            r.skill.is_none().into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mean(score: &str, lead: Option<u32>, v: f64) -> ScoreMean {
        ScoreMean { score: score.into(), lead_time: lead, n: 4, mean: v }
    }

    #[test]
    fn skill_examples() {
        assert_eq!(skill(0.7, 0.7), Some(0.0));
        assert_eq!(skill(0.0, 0.3), Some(1.0));
        assert_eq!(skill(0.2, 0.0), None);
        assert_abs_diff_eq!(skill(0.88, 1.05).unwrap(), 0.17 / 1.05, epsilon = 1e-15);
    }

    #[test]
    fn table_matches_groups() {
        let s = [mean("crps", Some(1), 0.88), mean("crps", None, 0.0)];
        let r = [mean("crps", None, 0.0), mean("crps", Some(1), 1.05)];
        let rows = skill_table(&s, &r).unwrap();
        assert_abs_diff_eq!(rows[0].skill.unwrap(), 0.1619, epsilon = 1e-3);
        assert_eq!(rows[1].skill, None);
        assert!(skill_table(&s, &r[..1]).is_err());
    }
}
