//! Run configuration (TOML) and the score requests it carries.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wxverify::heat::HeatThresholds;
use wxverify::synthlab::{ExperimentName, ExperimentSpec};
use wxverify::WeightFunction;

use crate::archive::{Format, DEFAULT_REJECT_THRESHOLD};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Score,
    Diagnose,
    Postprocess,
    Synth,
    Report,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Score => "score",
            Task::Diagnose => "diagnose",
            Task::Postprocess => "postprocess",
            Task::Synth => "synth",
            Task::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreName {
    Crps,
    Brier,
    Twcrps,
    Owcrps,
    OwcrpsBs,
    Vrcrps,
    Es,
    Vs,
    Twes,
    Twvs,
    Vres,
}

impl ScoreName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreName::Crps => "crps",
            ScoreName::Brier => "brier",
            ScoreName::Twcrps => "twcrps",
            ScoreName::Owcrps => "owcrps",
            ScoreName::OwcrpsBs => "owcrps_bs",
            ScoreName::Vrcrps => "vrcrps",
            ScoreName::Es => "es",
            ScoreName::Vs => "vs",
            ScoreName::Twes => "twes",
            ScoreName::Twvs => "twvs",
            ScoreName::Vres => "vres",
        }
    }

    /// Scores of the vector of lead times rather than of single cases.
    pub fn is_multivariate(self) -> bool {
        matches!(self, ScoreName::Es | ScoreName::Vs | ScoreName::Twes | ScoreName::Twvs | ScoreName::Vres)
    }
}

/// One score to compute, with its weighting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub name: ScoreName,
    /// Threshold of the weight `1{z > t}` (or of the Brier event `y <= t`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Explicit weight function; overrides `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightFunction>,
    /// Heat level 1 to 4 for multivariate weighted scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_level: Option<u8>,
    /// Reference point of the vertically re-scaled scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Variogram order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    /// Smooth ensembles with a normal distribution first (required for owCRPS).
    #[serde(default)]
    pub smooth: bool,
    /// Fair (`m(m-1)`) ensemble estimator.
    #[serde(default)]
    pub fair: bool,
}

impl ScoreRequest {
    pub fn new(name: ScoreName) -> Self {
        Self { name, threshold: None, weight: None, heat_level: None, x0: None, order: None, smooth: false, fair: false }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = Some(t);
        self
    }

    pub fn with_heat_level(mut self, level: u8) -> Self {
        self.heat_level = Some(level);
        self
    }

    pub fn smoothed(mut self) -> Self {
        self.smooth = true;
        self
    }

    /// Stable label used in output tables, e.g. `twcrps[t=25]`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(w) = &self.weight {
            parts.push(w.name().to_string());
        } else if let Some(t) = self.threshold {
            parts.push(format!("t={t}"));
        }
        if let Some(l) = self.heat_level {
            parts.push(format!("level={l}"));
        }
        if let Some(x0) = self.x0 {
            parts.push(format!("x0={x0}"));
        }
        if let Some(p) = self.order {
            parts.push(format!("p={p}"));
        }
        if self.smooth {
            parts.push("smoothed".into());
        }
        if self.fair {
            parts.push("fair".into());
        }
        if parts.is_empty() {
            self.name.as_str().to_string()
        } else {
            format!("{}[{}]", self.name.as_str(), parts.join(","))
        }
    }
}

/// A named forecast archive compared in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInput {
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostprocessOptions {
    /// Training window in days.
    #[serde(default = "PostprocessOptions::default_window")]
    pub window_days: usize,
    /// Apply the lapse-rate correction to raw members first.
    #[serde(default = "PostprocessOptions::default_lapse")]
    pub lapse_rate: bool,
}

impl PostprocessOptions {
    fn default_window() -> usize {
        wxverify::postprocess::WINDOW_DAYS
    }
    fn default_lapse() -> bool {
        true
    }
}

impl Default for PostprocessOptions {
    fn default() -> Self {
        Self { window_days: Self::default_window(), lapse_rate: Self::default_lapse() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Heat thresholds (warm, hot) used for heat levels, cPIT and exceedance
    /// diagnostics.
    #[serde(default = "RunConfig::default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "RunConfig::default_reject_threshold")]
    pub reject_threshold: f64,
    #[serde(default)]
    pub scores: Vec<ScoreRequest>,
    /// Lead times forming the multivariate outcome vector.
    #[serde(default = "RunConfig::default_lead_times")]
    pub lead_times: Vec<u32>,
    /// Station metadata CSV (station_id, tpi, mhd, ...) for post-processing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<PathBuf>,
    #[serde(default)]
    pub postprocess: PostprocessOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default)]
    pub systems: Vec<SystemInput>,
    /// Reference system of the skill scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl RunConfig {
    fn default_thresholds() -> Vec<f64> {
        let h = HeatThresholds::default();
        vec![h.warm, h.hot]
    }
    fn default_reject_threshold() -> f64 {
        DEFAULT_REJECT_THRESHOLD
    }
    fn default_lead_times() -> Vec<u32> {
        vec![1, 2, 3]
    }

    pub fn new(task: Task) -> Self {
        Self {
            task,
            seed: None,
            thresholds: Self::default_thresholds(),
            input: None,
            format: None,
            output: None,
            reject_threshold: Self::default_reject_threshold(),
            scores: Vec::new(),
            lead_times: Self::default_lead_times(),
            stations: None,
            postprocess: PostprocessOptions::default(),
            experiment: None,
            systems: Vec::new(),
            reference: None,
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// Loads a TOML config, or the config echoed in a run manifest (JSON).
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", path.display())))?;
            let echo = manifest.get("config").cloned().ok_or_else(|| CliError::Usage("manifest has no config".into()))?;
            serde_json::from_value(echo).map_err(|e| CliError::Usage(format!("invalid config in manifest: {e}")))?
        } else {
            Self::from_toml(&text)?
        };
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.as_mut() {
            fix(p);
        }
        if let Some(p) = self.stations.as_mut() {
            fix(p);
        }
        for s in &mut self.systems {
            fix(&mut s.path);
        }
    }

    pub fn heat_thresholds(&self) -> HeatThresholds {
        let d = HeatThresholds::default();
        HeatThresholds { warm: self.thresholds.first().copied().unwrap_or(d.warm), hot: self.thresholds.get(1).copied().unwrap_or(d.hot) }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(CliError::Usage("thresholds must be finite".into()));
        }
        if self.thresholds.len() >= 2 && self.thresholds[0] > self.thresholds[1] {
            return Err(CliError::Usage("heat thresholds must be ordered (warm <= hot)".into()));
        }
        if !(0.0..=1.0).contains(&self.reject_threshold) {
            return Err(CliError::Usage("reject_threshold must lie in [0, 1]".into()));
        }
        let exists = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Usage(format!("{what} {} does not exist", p.display())))
            }
        };
        match self.task {
            Task::Score | Task::Diagnose | Task::Postprocess => {
                let input = self.input.as_deref().ok_or_else(|| CliError::Usage(format!("{} needs an input archive", self.task.as_str())))?;
                exists("input", input)?;
            }
            Task::Report => {
                if self.systems.is_empty() {
                    return Err(CliError::Usage("report needs at least one system".into()));
                }
                for s in &self.systems {
                    exists(&format!("system {}", s.name), &s.path)?;
                }
                if let Some(r) = &self.reference {
                    if !self.systems.iter().any(|s| &s.name == r) {
                        return Err(CliError::Usage(format!("reference system {r:?} is not among the systems")));
                    }
                }
            }
            Task::Synth => {
                let e = self.experiment.as_ref().ok_or_else(|| CliError::Usage("synth needs an experiment".into()))?;
                e.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        if let Some(p) = &self.stations {
            exists("stations", p)?;
        }
        if self.task == Task::Postprocess && self.stations.is_none() {
            return Err(CliError::Usage("postprocess needs station metadata (stations = \"...\")".into()));
        }
        if self.lead_times.is_empty() {
            return Err(CliError::Usage("lead_times must not be empty".into()));
        }
        Ok(())
    }

    /// Experiment settings for `synth`, filled from a short name when absent.
    pub fn experiment_for(name: ExperimentName) -> ExperimentSpec {
        ExperimentSpec::new(name)
    }
}
