//! Forecast–observation archives: one row per station, initialisation date
//! and lead time, with the ensemble members (or a single `value`) and the
//! verifying observation.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(CliError::Usage(format!("unknown format {other:?} (expected csv or jsonl)"))),
        }
    }
}

impl Format {
    /// Format implied by a file extension, if any.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub station_id: String,
    pub init_date: NaiveDate,
    /// Lead time in days.
    pub lead_time: u32,
    pub members: Vec<f64>,
    pub obs: f64,
}

impl ArchiveRecord {
    pub fn valid_date(&self) -> NaiveDate {
        self.init_date + chrono::Days::new(u64::from(self.lead_time))
    }
}

/// Archive records with a common member count.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Archive {
    pub records: Vec<ArchiveRecord>,
}

impl Archive {
    pub fn new(records: Vec<ArchiveRecord>) -> CliResult<Self> {
        if let Some(first) = records.first() {
            let m = first.members.len();
            if let Some(bad) = records.iter().find(|r| r.members.len() != m) {
                return Err(CliError::Data(format!(
                    "member count must be constant: {} has {} members, expected {m}",
                    bad.station_id,
                    bad.members.len()
                )));
            }
        }
        Ok(Self { records })
    }

    /// Members per record (0 for an empty archive).
    pub fn members(&self) -> usize {
        self.records.first().map_or(0, |r| r.members.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in (station, init date, lead time) order.
    pub fn sorted(&self) -> Vec<&ArchiveRecord> {
        let mut out: Vec<&ArchiveRecord> = self.records.iter().collect();
        out.sort_by(|a, b| (&a.station_id, a.init_date, a.lead_time).cmp(&(&b.station_id, b.init_date, b.lead_time)));
        out
    }
}

/// A row that could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based line number in the input (the CSV header is line 1).
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub archive: Archive,
    pub rejects: Vec<Reject>,
    /// Data rows read (accepted plus rejected).
    pub rows: usize,
}

/// Default largest tolerated fraction of rejected rows.
pub const DEFAULT_REJECT_THRESHOLD: f64 = 0.01;

pub fn ingest(path: &Path, format: Format, reject_threshold: f64) -> CliResult<Ingested> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(BufReader::new(file), format, reject_threshold)
}

pub fn ingest_reader<R: Read>(reader: R, format: Format, reject_threshold: f64) -> CliResult<Ingested> {
    if !(0.0..=1.0).contains(&reject_threshold) {
        return Err(CliError::Usage(format!("reject threshold must lie in [0, 1], got {reject_threshold}")));
    }
    let (mut records, mut rejects, rows) = match format {
        Format::Csv => parse_csv(reader)?,
        Format::Jsonl => parse_jsonl(reader)?,
    };
    // Rows whose member count differs from the first accepted row.
    if let Some(m) = records.first().map(|(_, r): &(usize, ArchiveRecord)| r.members.len()) {
        let (keep, odd): (Vec<_>, Vec<_>) = records.into_iter().partition(|(_, r)| r.members.len() == m);
        for (line, r) in odd {
            rejects.push(Reject { line, reason: format!("{} members, expected {m}", r.members.len()), raw: String::new() });
        }
        records = keep;
    }
    rejects.sort_by_key(|r| r.line);
    if rows > 0 && rejects.len() as f64 > reject_threshold * rows as f64 {
        return Err(CliError::Data(format!(
            "{} of {rows} rows rejected, above the {:.2}% threshold; first: line {}: {}",
            rejects.len(),
            100.0 * reject_threshold,
            rejects[0].line,
            rejects[0].reason
        )));
    }
    let archive = Archive::new(records.into_iter().map(|(_, r)| r).collect())?;
    Ok(Ingested { archive, rejects, rows })
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad init_date {s:?}: {e}"))
}

fn parse_finite(name: &str, s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("bad {name} {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {name} {s:?}"))
    }
}

/// Column positions of a validated CSV header.
struct Layout {
    station: usize,
    date: usize,
    lead: usize,
    obs: usize,
    members: Vec<usize>,
}

impl Layout {
    fn new(header: &csv::StringRecord) -> CliResult<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| CliError::Data(format!("missing column {name:?}")));
        let station = need("station_id")?;
        let date = need("init_date")?;
        let lead = need("lead_time")?;
        let obs = need("obs")?;
        let mut members = Vec::new();
        while let Some(k) = find(&format!("m{}", members.len() + 1)) {
            members.push(k);
        }
        if members.is_empty() {
            members.push(find("value").ok_or_else(|| CliError::Data("missing member columns m1.. or a value column".into()))?);
        }
        Ok(Self { station, date, lead, obs, members })
    }

    fn parse(&self, row: &csv::StringRecord) -> Result<ArchiveRecord, String> {
        let field = |k: usize| row.get(k).ok_or_else(|| format!("missing field {}", k + 1));
        let station_id = field(self.station)?.trim().to_string();
        if station_id.is_empty() {
            return Err("empty station_id".into());
        }
        let lead_time: u32 = field(self.lead)?.trim().parse().map_err(|_| format!("bad lead_time {:?}", row.get(self.lead)))?;
        let members =
            self.members.iter().map(|&k| parse_finite("member", field(k)?)).collect::<Result<Vec<f64>, String>>()?;
        Ok(ArchiveRecord { station_id, init_date: parse_date(field(self.date)?)?, lead_time, members, obs: parse_finite("obs", field(self.obs)?)? })
    }
}

type Parsed = (Vec<(usize, ArchiveRecord)>, Vec<Reject>, usize);

fn parse_csv<R: Read>(reader: R) -> CliResult<Parsed> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut iter = rdr.records();
    let header = match iter.next() {
        None => return Ok((Vec::new(), Vec::new(), 0)),
        Some(h) => h?,
    };
    let layout = Layout::new(&header)?;
    let (mut records, mut rejects, mut rows) = (Vec::new(), Vec::new(), 0);
    for (k, row) in iter.enumerate() {
        let line = k + 2;
        rows += 1;
        match row {
            Ok(row) if row.len() != header.len() => {
                rejects.push(Reject { line, reason: format!("{} fields, expected {}", row.len(), header.len()), raw: join(&row) })
            }
            Ok(row) => match layout.parse(&row) {
                Ok(r) => records.push((line, r)),
                Err(reason) => rejects.push(Reject { line, reason, raw: join(&row) }),
            },
            Err(e) => rejects.push(Reject { line, reason: e.to_string(), raw: String::new() }),
        }
    }
    Ok((records, rejects, rows))
}

fn join(row: &csv::StringRecord) -> String {
    row.iter().collect::<Vec<_>>().join(",")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    station_id: String,
    init_date: String,
    lead_time: u32,
    #[serde(default)]
    members: Option<Vec<Option<f64>>>,
    #[serde(default)]
    value: Option<Option<f64>>,
    obs: Option<f64>,
}

impl JsonRow {
    fn into_record(self) -> Result<ArchiveRecord, String> {
        let members = match (self.members, self.value) {
            (Some(m), None) => m,
            (None, Some(v)) => vec![v],
            _ => return Err("exactly one of members or value is required".into()),
        };
        if members.is_empty() {
            return Err("no members".into());
        }
        let members = members
            .into_iter()
            .map(|v| v.filter(|x| x.is_finite()).ok_or_else(|| "non-finite member".to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let obs = self.obs.filter(|x| x.is_finite()).ok_or("non-finite obs")?;
        if self.station_id.trim().is_empty() {
            return Err("empty station_id".into());
        }
        Ok(ArchiveRecord { station_id: self.station_id, init_date: parse_date(&self.init_date)?, lead_time: self.lead_time, members, obs })
    }
}

fn parse_jsonl<R: Read>(reader: R) -> CliResult<Parsed> {
    let (mut records, mut rejects, mut rows) = (Vec::new(), Vec::new(), 0);
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k + 1;
        let text = line.map_err(|e| CliError::Data(format!("line {line_no}: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        rows += 1;
        let parsed = serde_json::from_str::<JsonRow>(&text).map_err(|e| e.to_string()).and_then(JsonRow::into_record);
        match parsed {
            Ok(r) => records.push((line_no, r)),
            Err(reason) => rejects.push(Reject { line: line_no, reason, raw: text }),
        }
    }
    Ok((records, rejects, rows))
}

/// Writes the archive; floats use the shortest exact representation, so
/// ingesting the output reproduces the archive.
pub fn emit<W: Write>(archive: &Archive, writer: W, format: Format) -> CliResult<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            let m = archive.members();
            let mut header = vec!["station_id".to_string(), "init_date".into(), "lead_time".into()];
            if m == 1 {
                header.push("value".into());
            } else {
                header.extend((1..=m).map(|i| format!("m{i}")));
            }
            header.push("obs".into());
            if !archive.is_empty() {
                w.write_record(&header)?;
            }
            for r in &archive.records {
                let mut row = vec![r.station_id.clone(), r.init_date.to_string(), r.lead_time.to_string()];
                row.extend(r.members.iter().map(|v| v.to_string()));
                row.push(r.obs.to_string());
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| CliError::Data(e.to_string()))?;
        }
        Format::Jsonl => {
            let mut w = std::io::BufWriter::new(writer);
            for r in &archive.records {
                let line = serde_json::to_string(r).map_err(|e| CliError::Data(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| CliError::Data(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Data(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn emit_to_path(archive: &Archive, path: &Path, format: Format) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    emit(archive, file, format)
}
