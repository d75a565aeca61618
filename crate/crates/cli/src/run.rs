//! Dispatch of a configured run to the modules, writing outputs and the
//! manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use wxverify::synthlab::{run_experiment, DEFAULT_SEED};
use wxverify::table::Table;

use crate::archive::{emit_to_path, ingest, Archive, Format, Ingested};
use crate::config::{RunConfig, ScoreName, ScoreRequest, Task};
use crate::diagnose::{diagnose, DiagnoseOptions};
use crate::error::{CliError, CliResult};
use crate::manifest::{InputSummary, Manifest};
use crate::output::{ensure_dir, write_jsonl, write_table};
use crate::postprocess::{postprocess, read_stations};
use crate::report::{default_report_scores, report_tables, score_systems};
use crate::scoring::{score_archive, ScoringContext};
use wxverify::row;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub outputs: Vec<String>,
}

struct Outputs<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Outputs<'_> {
    fn table(&mut self, t: &Table) -> CliResult<()> {
        let p = write_table(self.dir, t)?;
        self.manifest.add_output(self.dir, &p);
        Ok(())
    }

    fn ingest(&mut self, path: &Path, format: Option<Format>, threshold: f64, label: &str) -> CliResult<Archive> {
        let format = format.or_else(|| Format::from_path(path)).ok_or_else(|| {
            CliError::Usage(format!("cannot tell the format of {}; pass --format csv|jsonl", path.display()))
        })?;
        let Ingested { archive, rejects, rows } = ingest(path, format, threshold)?;
        let mut t = Table::new(format!("rejects_{label}"), &["line", "reason", "raw"]);
        for r in &rejects {
            t.push(row![r.line, r.reason.as_str(), r.raw.as_str()]);
        }
        self.table(&t)?;
        self.manifest.inputs.push(InputSummary { path: path.to_path_buf(), rows, records: archive.len(), rejects: rejects.len() });
        Ok(archive)
    }
}

/// Resolves the seed and output directory of `config` so that the echoed
/// configuration repeats the run exactly.
pub fn resolve(mut config: RunConfig, out: Option<PathBuf>, seed: Option<u64>, format: Option<Format>) -> CliResult<RunConfig> {
    if let Some(o) = out {
        config.output = Some(o);
    }
    if let Some(s) = seed {
        config.seed = Some(s);
    }
    if let Some(f) = format {
        config.format = Some(f);
    }
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    config.seed = Some(seed);
    if let Some(e) = config.experiment.as_mut() {
        e.seed = seed;
    }
    let out = config.output.clone().ok_or_else(|| CliError::Usage("no output directory; pass --out <dir>".into()))?;
    config.output = Some(std::path::absolute(&out).map_err(|e| CliError::io(&out, e))?);
    for p in [config.input.as_mut(), config.stations.as_mut()].into_iter().flatten() {
        *p = std::path::absolute(&*p).map_err(|e| CliError::io(&*p, e))?;
    }
    for s in &mut config.systems {
        s.path = std::path::absolute(&s.path).map_err(|e| CliError::io(&s.path, e))?;
    }
    config.validate()?;
    Ok(config)
}

/// Runs a resolved configuration (see [`resolve`]).
pub fn run(config: &RunConfig) -> CliResult<RunSummary> {
    let start = Instant::now();
    let dir = config.output.clone().ok_or_else(|| CliError::Usage("no output directory".into()))?;
    ensure_dir(&dir)?;
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    let mut out = Outputs { dir: &dir, manifest: Manifest::new(config, seed) };
    let ctx = ScoringContext { heat: config.heat_thresholds(), lead_times: config.lead_times.clone() };

    match config.task {
        Task::Score => {
            let archive = out.ingest(config.input.as_deref().expect("validated"), config.format, config.reject_threshold, "input")?;
            let scores = if config.scores.is_empty() { vec![ScoreRequest::new(ScoreName::Crps)] } else { config.scores.clone() };
            let run = score_archive(&archive, &scores, &ctx)?;
            out.table(&run.records_table())?;
            out.table(&run.means_table())?;
            out.table(&run.skipped_table())?;
        }
        Task::Diagnose => {
            let archive = out.ingest(config.input.as_deref().expect("validated"), config.format, config.reject_threshold, "input")?;
            let opts = DiagnoseOptions { thresholds: config.thresholds.clone(), seed, ..Default::default() };
            for t in diagnose(&archive, &opts)? {
                out.table(&t)?;
            }
        }
        Task::Postprocess => {
            let input = config.input.as_deref().expect("validated");
            let format = config.format.or_else(|| Format::from_path(input)).unwrap_or(Format::Csv);
            let archive = out.ingest(input, Some(format), config.reject_threshold, "input")?;
            let stations = read_stations(config.stations.as_deref().expect("validated"))?;
            let result = postprocess(&archive, &stations, &config.postprocess)?;
            for (name, a) in [("postprocessed", &result.postprocessed), ("climatology", &result.climatology)] {
                let p = dir.join(format!("{name}.{}", format.extension()));
                emit_to_path(a, &p, format)?;
                out.manifest.add_output(&dir, &p);
            }
            let p = dir.join("emos_params.jsonl");
            write_jsonl(&p, &result.emos)?;
            out.manifest.add_output(&dir, &p);
        }
        Task::Synth => {
            let spec = config.experiment.as_ref().expect("validated");
            let result = run_experiment(spec)?;
            for t in &result.tables {
                out.table(t)?;
            }
        }
        Task::Report => {
            let mut systems = Vec::new();
            for s in &config.systems {
                let a = out.ingest(&s.path, s.format.or(config.format), config.reject_threshold, &s.name)?;
                systems.push((s.name.clone(), a));
            }
            let scores = if config.scores.is_empty() { default_report_scores() } else { config.scores.clone() };
            let scored = score_systems(&systems, &scores, &ctx)?;
            for t in report_tables(&scored, &scores, config.reference.as_deref(), &config.lead_times)? {
                out.table(&t)?;
            }
        }
    }
    let mut manifest = out.manifest;
    manifest.wall_time_ms = start.elapsed().as_millis();
    let path = manifest.write(&dir)?;
    Ok(RunSummary { out_dir: dir, manifest: path, outputs: manifest.outputs })
}
