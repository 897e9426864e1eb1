//! Training-run records and learning-curve checkpoints: data model, CSV/JSON
//! ingestion and validation.
//!
//! Counts (`n_params`, `d_tokens`, `u_tokens`) are carried as `f64` because
//! real logs write them in scientific notation and `6ND` overflows `u64` at
//! large scale.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Prefix of metric columns in the CSV formats.
pub const METRIC_PREFIX: &str = "metric.";

/// Modality tag written when a file leaves it blank.
pub const DEFAULT_MODALITY: &str = "unknown";

#[derive(Debug, thiserror::Error)]
pub enum RunStoreError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("record {record} ({run_id}): {message}")]
    Invalid {
        record: String,
        run_id: String,
        message: String,
    },
    #[error("duplicate run_id {run_id:?} ({record})")]
    DuplicateRunId { run_id: String, record: String },
    #[error("{0} contains no records")]
    Empty(String),
    #[error("metric {metric:?} missing on run {run_id:?}")]
    MissingMetric { metric: String, run_id: String },
    #[error("failed to write: {0}")]
    Write(String),
}

pub type Result<T> = std::result::Result<T, RunStoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; everything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// One completed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub modality: String,
    pub n_params: f64,
    pub d_tokens: f64,
    pub u_tokens: f64,
    pub test_loss: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    /// Single-epoch record (`u_tokens = d_tokens`) with no metrics.
    pub fn new(run_id: impl Into<String>, n_params: f64, d_tokens: f64, test_loss: f64) -> Self {
        RunRecord {
            run_id: run_id.into(),
            modality: DEFAULT_MODALITY.to_string(),
            n_params,
            d_tokens,
            u_tokens: d_tokens,
            test_loss,
            metrics: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.run_id.is_empty() {
            return Err("run_id is empty".into());
        }
        positive("n_params", self.n_params)?;
        positive("d_tokens", self.d_tokens)?;
        positive("u_tokens", self.u_tokens)?;
        if self.u_tokens > self.d_tokens {
            return Err(format!(
                "u_tokens ({}) exceeds d_tokens ({})",
                self.u_tokens, self.d_tokens
            ));
        }
        positive("test_loss", self.test_loss)?;
        check_metrics(&self.metrics)
    }

    /// Training compute under the `C = 6ND` approximation.
    pub fn compute(&self) -> f64 {
        derive_compute(self)
    }

    pub fn epochs(&self) -> f64 {
        epochs(self)
    }

    pub fn metric(&self, name: &str) -> Result<f64> {
        self.metrics
            .get(name)
            .copied()
            .ok_or_else(|| RunStoreError::MissingMetric {
                metric: name.to_string(),
                run_id: self.run_id.clone(),
            })
    }
}

/// `C = 6 · N · D` FLOPs.
pub fn derive_compute(record: &RunRecord) -> f64 {
    6.0 * record.n_params * record.d_tokens
}

/// Number of repetitions `R_D = D / U_D − 1`; zero for a single-epoch run.
pub fn epochs(record: &RunRecord) -> f64 {
    record.d_tokens / record.u_tokens - 1.0
}

fn positive(field: &str, v: f64) -> std::result::Result<(), String> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(format!("{field} must be finite and > 0, got {v}"))
    }
}

fn check_metrics(metrics: &BTreeMap<String, f64>) -> std::result::Result<(), String> {
    for (name, &v) in metrics {
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("metric {name} = {v} outside [0, 100]"));
        }
    }
    Ok(())
}

/// One checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub run_id: String,
    pub compute: f64,
    pub loss: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl CurvePoint {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.run_id.is_empty() {
            return Err("run_id is empty".into());
        }
        positive("compute", self.compute)?;
        positive("loss", self.loss)?;
        check_metrics(&self.metrics)
    }
}

/// Where a set came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
}

impl Provenance {
    fn now(source: &Path) -> Self {
        let loaded_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Provenance {
            source: source.display().to_string(),
            loaded_at,
        }
    }
}

/// Validated, immutable collection of runs. Equality compares records only.
#[derive(Debug, Clone)]
pub struct RunSet {
    records: Vec<RunRecord>,
    provenance: Option<Provenance>,
}

impl PartialEq for RunSet {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl RunSet {
    /// Validates every record and run_id uniqueness.
    pub fn new(records: Vec<RunRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(RunStoreError::Empty("run set".into()));
        }
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            let label = format!("record {}", i + 1);
            r.validate().map_err(|message| RunStoreError::Invalid {
                record: label.clone(),
                run_id: r.run_id.clone(),
                message,
            })?;
            if !seen.insert(r.run_id.as_str()) {
                return Err(RunStoreError::DuplicateRunId {
                    run_id: r.run_id.clone(),
                    record: label,
                });
            }
        }
        Ok(RunSet {
            records,
            provenance: None,
        })
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RunRecord> {
        self.records.iter()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn get(&self, run_id: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.run_id == run_id)
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }

    /// Records whose `predicate` holds, or `None` if none do.
    pub fn filter(&self, predicate: impl Fn(&RunRecord) -> bool) -> Option<RunSet> {
        let records: Vec<_> = self.records.iter().filter(|r| predicate(r)).cloned().collect();
        if records.is_empty() {
            None
        } else {
            Some(RunSet {
                records,
                provenance: self.provenance.clone(),
            })
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let metric_names = metric_columns(self.records.iter().map(|r| &r.metrics));
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "run_id".to_string(),
            "modality".into(),
            "n_params".into(),
            "d_tokens".into(),
            "u_tokens".into(),
            "test_loss".into(),
        ];
        header.extend(metric_names.iter().map(|m| format!("{METRIC_PREFIX}{m}")));
        w.write_record(&header).map_err(write_err)?;
        for r in &self.records {
            let mut row = vec![
                r.run_id.clone(),
                r.modality.clone(),
                fmt_num(r.n_params),
                fmt_num(r.d_tokens),
                fmt_num(r.u_tokens),
                fmt_num(r.test_loss),
            ];
            row.extend(
                metric_names
                    .iter()
                    .map(|m| r.metrics.get(m).map(|&v| fmt_num(v)).unwrap_or_default()),
            );
            w.write_record(&row).map_err(write_err)?;
        }
        finish_csv(w)
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.records).map_err(|e| RunStoreError::Write(e.to_string()))
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<()> {
        let body = match format {
            Format::Csv => self.to_csv_string()?,
            Format::Json => self.to_json_string()?,
        };
        write_file(path, &body)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let required = |name: &str| {
            col(name).ok_or_else(|| RunStoreError::Parse {
                line: 1,
                message: format!("missing required column {name:?}"),
            })
        };
        let c_id = required("run_id")?;
        let c_n = required("n_params")?;
        let c_d = required("d_tokens")?;
        let c_loss = required("test_loss")?;
        let c_mod = col("modality");
        let c_u = col("u_tokens");
        let metric_cols = metric_header_columns(&headers);

        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let cell = |i: usize| row.get(i).unwrap_or("");
            let num = |i: usize, name: &str| parse_num(cell(i), name, line);
            let opt_num = |i: Option<usize>, name: &str| -> Result<Option<f64>> {
                match i.map(cell) {
                    None | Some("") => Ok(None),
                    Some(s) => parse_num(s, name, line).map(Some),
                }
            };
            let d_tokens = num(c_d, "d_tokens")?;
            let mut metrics = BTreeMap::new();
            for (i, name) in &metric_cols {
                if let Some(v) = opt_num(Some(*i), name)? {
                    metrics.insert(name.clone(), v);
                }
            }
            let record = RunRecord {
                run_id: cell(c_id).to_string(),
                modality: c_mod
                    .map(cell)
                    .filter(|s| !s.is_empty())
                    .unwrap_or(DEFAULT_MODALITY)
                    .to_string(),
                n_params: num(c_n, "n_params")?,
                d_tokens,
                u_tokens: opt_num(c_u, "u_tokens")?.unwrap_or(d_tokens),
                test_loss: num(c_loss, "test_loss")?,
                metrics,
            };
            let label = format!("line {line}");
            check_record(&record, &label, &mut seen)?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(RunStoreError::Empty("run file".into()));
        }
        Ok(RunSet {
            records,
            provenance: None,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: Vec<RawRunRecord> = serde_json::from_str(text).map_err(json_err)?;
        let mut records = Vec::with_capacity(raw.len());
        let mut seen = HashSet::new();
        for (i, r) in raw.into_iter().enumerate() {
            let record = RunRecord {
                run_id: r.run_id,
                modality: r
                    .modality
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| DEFAULT_MODALITY.to_string()),
                n_params: r.n_params,
                d_tokens: r.d_tokens,
                u_tokens: r.u_tokens.unwrap_or(r.d_tokens),
                test_loss: r.test_loss,
                metrics: r.metrics,
            };
            check_record(&record, &format!("record {}", i + 1), &mut seen)?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(RunStoreError::Empty("run file".into()));
        }
        Ok(RunSet {
            records,
            provenance: None,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunRecord {
    run_id: String,
    #[serde(default)]
    modality: Option<String>,
    n_params: f64,
    d_tokens: f64,
    #[serde(default)]
    u_tokens: Option<f64>,
    test_loss: f64,
    #[serde(default)]
    metrics: BTreeMap<String, f64>,
}

fn check_record(record: &RunRecord, label: &str, seen: &mut HashSet<String>) -> Result<()> {
    record.validate().map_err(|message| RunStoreError::Invalid {
        record: label.to_string(),
        run_id: record.run_id.clone(),
        message,
    })?;
    if !seen.insert(record.run_id.clone()) {
        return Err(RunStoreError::DuplicateRunId {
            run_id: record.run_id.clone(),
            record: label.to_string(),
        });
    }
    Ok(())
}

/// Loads runs from `path`, preserving file order.
pub fn load_runs(path: &Path, format: Format) -> Result<RunSet> {
    let text = read_file(path)?;
    let mut set = match format {
        Format::Csv => RunSet::from_csv_str(&text)?,
        Format::Json => RunSet::from_json_str(&text)?,
    };
    set.provenance = Some(Provenance::now(path));
    Ok(set)
}

/// Checkpoints grouped by run. Compute is strictly increasing within a run.
#[derive(Debug, Clone)]
pub struct CurveSet {
    points: Vec<CurvePoint>,
    provenance: Option<Provenance>,
}

impl PartialEq for CurveSet {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl CurveSet {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(RunStoreError::Empty("curve set".into()));
        }
        let mut last = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            check_point(p, &format!("point {}", i + 1), &mut last)?;
        }
        Ok(CurveSet {
            points,
            provenance: None,
        })
    }

    /// One single-point curve per run, at its final compute `6ND`.
    pub fn from_runs(runs: &RunSet) -> CurveSet {
        let points = runs
            .iter()
            .map(|r| CurvePoint {
                run_id: r.run_id.clone(),
                compute: r.compute(),
                loss: r.test_loss,
                metrics: r.metrics.clone(),
            })
            .collect();
        CurveSet {
            points,
            provenance: runs.provenance.clone(),
        }
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Run ids in order of first appearance.
    pub fn run_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.points
            .iter()
            .filter(|p| seen.insert(p.run_id.as_str()))
            .map(|p| p.run_id.as_str())
            .collect()
    }

    /// Drops, per run, the checkpoints with compute below `fraction` of that
    /// run's final compute. Returns `None` when nothing survives.
    pub fn burn_in(&self, fraction: f64) -> Option<CurveSet> {
        let mut max_c: BTreeMap<&str, f64> = BTreeMap::new();
        for p in &self.points {
            let e = max_c.entry(p.run_id.as_str()).or_insert(0.0);
            *e = e.max(p.compute);
        }
        let points: Vec<_> = self
            .points
            .iter()
            .filter(|p| p.compute >= fraction * max_c[p.run_id.as_str()])
            .cloned()
            .collect();
        if points.is_empty() {
            None
        } else {
            Some(CurveSet {
                points,
                provenance: self.provenance.clone(),
            })
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let metric_names = metric_columns(self.points.iter().map(|p| &p.metrics));
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["run_id".to_string(), "compute".into(), "loss".into()];
        header.extend(metric_names.iter().map(|m| format!("{METRIC_PREFIX}{m}")));
        w.write_record(&header).map_err(write_err)?;
        for p in &self.points {
            let mut row = vec![p.run_id.clone(), fmt_num(p.compute), fmt_num(p.loss)];
            row.extend(
                metric_names
                    .iter()
                    .map(|m| p.metrics.get(m).map(|&v| fmt_num(v)).unwrap_or_default()),
            );
            w.write_record(&row).map_err(write_err)?;
        }
        finish_csv(w)
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.points).map_err(|e| RunStoreError::Write(e.to_string()))
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<()> {
        let body = match format {
            Format::Csv => self.to_csv_string()?,
            Format::Json => self.to_json_string()?,
        };
        write_file(path, &body)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RunStoreError::Parse {
                    line: 1,
                    message: format!("missing required column {name:?}"),
                })
        };
        let c_id = col("run_id")?;
        let c_c = col("compute")?;
        let c_loss = col("loss")?;
        let metric_cols = metric_header_columns(&headers);
        let mut points = Vec::new();
        let mut last = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let cell = |i: usize| row.get(i).unwrap_or("");
            let mut metrics = BTreeMap::new();
            for (i, name) in &metric_cols {
                let s = cell(*i);
                if !s.is_empty() {
                    metrics.insert(name.clone(), parse_num(s, name, line)?);
                }
            }
            let p = CurvePoint {
                run_id: cell(c_id).to_string(),
                compute: parse_num(cell(c_c), "compute", line)?,
                loss: parse_num(cell(c_loss), "loss", line)?,
                metrics,
            };
            check_point(&p, &format!("line {line}"), &mut last)?;
            points.push(p);
        }
        if points.is_empty() {
            return Err(RunStoreError::Empty("curve file".into()));
        }
        Ok(CurveSet {
            points,
            provenance: None,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let points: Vec<CurvePoint> = serde_json::from_str(text).map_err(json_err)?;
        let mut set = CurveSet::new(points)?;
        set.provenance = None;
        Ok(set)
    }
}

fn check_point(p: &CurvePoint, label: &str, last: &mut BTreeMap<String, f64>) -> Result<()> {
    let invalid = |message: String| RunStoreError::Invalid {
        record: label.to_string(),
        run_id: p.run_id.clone(),
        message,
    };
    p.validate().map_err(invalid)?;
    if let Some(&prev) = last.get(&p.run_id) {
        if p.compute <= prev {
            return Err(invalid(format!(
                "compute {} not strictly increasing (previous {prev})",
                p.compute
            )));
        }
    }
    last.insert(p.run_id.clone(), p.compute);
    Ok(())
}

pub fn load_curves(path: &Path, format: Format) -> Result<CurveSet> {
    let text = read_file(path)?;
    let mut set = match format {
        Format::Csv => CurveSet::from_csv_str(&text)?,
        Format::Json => CurveSet::from_json_str(&text)?,
    };
    set.provenance = Some(Provenance::now(path));
    Ok(set)
}

/// Shortest decimal that parses back to the same `f64`; large counts in
/// scientific notation.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_num(s: &str, field: &str, line: u64) -> Result<f64> {
    s.parse::<f64>().map_err(|_| RunStoreError::Parse {
        line,
        message: format!("field {field}: cannot parse {s:?} as a number"),
    })
}

fn metric_header_columns(headers: &csv::StringRecord) -> Vec<(usize, String)> {
    headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(METRIC_PREFIX).map(|m| (i, m.to_string())))
        .collect()
}

fn metric_columns<'a>(maps: impl Iterator<Item = &'a BTreeMap<String, f64>>) -> Vec<String> {
    let mut names: Vec<String> = maps.flat_map(|m| m.keys().cloned()).collect();
    names.sort();
    names.dedup();
    names
}

fn csv_err(e: csv::Error) -> RunStoreError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    RunStoreError::Parse {
        line,
        message: e.to_string(),
    }
}

fn json_err(e: serde_json::Error) -> RunStoreError {
    RunStoreError::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    }
}

fn write_err(e: csv::Error) -> RunStoreError {
    RunStoreError::Write(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| RunStoreError::Write(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunStoreError::Write(e.to_string()))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| RunStoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| RunStoreError::Write(format!("{}: {e}", path.display())))
}
