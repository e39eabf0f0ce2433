//! Loading, validating and persisting run inputs and outputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::axes::AnchorSet;
use crate::embedding::ProviderConfig;
use crate::error::{Error, Result, Violation};
use crate::projection::{sort_records, ScoreRecord};
use crate::segmentation::RawResponse;
use crate::types::{Construct, Representation, ResponseFormat, Scale, TimePointFilter};

pub const SCORES_HEADER: [&str; 8] = [
    "participant_id",
    "time_point",
    "construct",
    "format",
    "axis",
    "representation",
    "projection",
    "severity",
];
pub const CLINICAL_HEADER: [&str; 6] = ["participant_id", "time_point", "phq9", "cesd", "gad7", "pswq"];

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::InvalidData {
        path: path.to_path_buf(),
        violations: vec![Violation::Parse {
            line: e.line(),
            message: e.to_string(),
        }],
    })
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Records that loaded cleanly plus, in lenient mode, the problems that were
/// skipped.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: Vec<Violation>,
}

fn finish<T>(path: &Path, records: Vec<T>, violations: Vec<Violation>, lenient: bool) -> Result<Loaded<T>> {
    if violations.is_empty() || lenient {
        Ok(Loaded {
            records,
            skipped: violations,
        })
    } else {
        Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations,
        })
    }
}

/// Loads a JSON Lines responses file. Every invalid line is reported; with
/// `lenient` the invalid lines are skipped instead.
pub fn load_responses(path: &Path, lenient: bool) -> Result<Loaded<RawResponse>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_responses(path, &text, lenient)
}

pub fn parse_responses(path: &Path, text: &str, lenient: bool) -> Result<Loaded<RawResponse>> {
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut seen: HashMap<(String, u8, Construct, ResponseFormat), usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: RawResponse = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                violations.push(Violation::Parse {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let problems = r.problems();
        if !problems.is_empty() {
            violations.extend(
                problems
                    .into_iter()
                    .map(|message| Violation::Invalid { line: line_no, message }),
            );
            continue;
        }
        let key = (r.participant_id.clone(), r.time_point, r.construct, r.format);
        if let Some(first) = seen.get(&key) {
            violations.push(Violation::DuplicateKey {
                line: line_no,
                key: format!("{}/t{}/{}/{} (first on line {first})", key.0, key.1, key.2, key.3),
            });
            continue;
        }
        seen.insert(key, line_no);
        records.push(r);
    }
    finish(path, records, violations, lenient)
}

pub fn write_responses(responses: &[RawResponse], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in responses {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Questionnaire totals for one participant at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub phq9: u32,
    pub cesd: u32,
    pub gad7: u32,
    pub pswq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub participant_id: String,
    pub time_point: u8,
    pub totals: Totals,
}

impl ClinicalRecord {
    pub fn total(&self, scale: Scale) -> u32 {
        match scale {
            Scale::Phq9 => self.totals.phq9,
            Scale::Cesd => self.totals.cesd,
            Scale::Gad7 => self.totals.gad7,
            Scale::Pswq => self.totals.pswq,
        }
    }

    pub fn key(&self) -> (String, u8) {
        (self.participant_id.clone(), self.time_point)
    }
}

pub fn load_clinical(path: &Path) -> Result<Vec<ClinicalRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clinical(path, file)
}

pub fn parse_clinical<R: std::io::Read>(path: &Path, reader: R) -> Result<Vec<ClinicalRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut violations = Vec::new();
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CLINICAL_HEADER {
        return Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations: vec![Violation::Invalid {
                line: 1,
                message: format!(
                    "header must be {}, got {}",
                    CLINICAL_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            }],
        });
    }
    let mut records = Vec::new();
    let mut seen: HashMap<(String, u8), usize> = HashMap::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                violations.push(Violation::Parse {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let before = violations.len();
        let pid = row[0].trim().to_string();
        if pid.is_empty() {
            violations.push(Violation::Invalid {
                line,
                message: "participant_id is empty".into(),
            });
        }
        let time_point = match row[1].trim().parse::<u8>() {
            Ok(t @ (1 | 2)) => t,
            _ => {
                violations.push(Violation::Range {
                    line,
                    field: "time_point".into(),
                    message: format!("{:?} is not 1 or 2", &row[1]),
                });
                0
            }
        };
        let mut totals = [0u32; 4];
        for (slot, scale) in [Scale::Phq9, Scale::Cesd, Scale::Gad7, Scale::Pswq].iter().enumerate() {
            let field = &row[slot + 2];
            let (lo, hi) = scale.range();
            match field.trim().parse::<u32>() {
                Ok(v) if (lo..=hi).contains(&v) => totals[slot] = v,
                Ok(v) => violations.push(Violation::Range {
                    line,
                    field: scale.column().into(),
                    message: format!("{v} not in {lo}..={hi}"),
                }),
                Err(_) => violations.push(Violation::Parse {
                    line,
                    message: format!("{} {:?} is not an integer total", scale.column(), field),
                }),
            }
        }
        if violations.len() > before {
            continue;
        }
        if let Some(first) = seen.get(&(pid.clone(), time_point)) {
            violations.push(Violation::DuplicateKey {
                line,
                key: format!("{pid}/t{time_point} (first on line {first})"),
            });
            continue;
        }
        seen.insert((pid.clone(), time_point), line);
        records.push(ClinicalRecord {
            participant_id: pid,
            time_point,
            totals: Totals {
                phq9: totals[0],
                cesd: totals[1],
                gad7: totals[2],
                pswq: totals[3],
            },
        });
    }
    if violations.is_empty() {
        Ok(records)
    } else {
        Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations,
        })
    }
}

pub fn write_clinical(records: &[ClinicalRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&ClinicalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.participant_id, a.time_point).cmp(&(&b.participant_id, b.time_point)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CLINICAL_HEADER)?;
    for r in sorted {
        let t = r.totals;
        w.write_record([
            r.participant_id.clone(),
            r.time_point.to_string(),
            t.phq9.to_string(),
            t.cesd.to_string(),
            t.gad7.to_string(),
            t.pswq.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Fails with every response whose participant and time point have no
/// clinical record.
pub fn check_references(responses: &[RawResponse], clinical: &[ClinicalRecord], path: &Path) -> Result<()> {
    let known: BTreeSet<(&str, u8)> = clinical
        .iter()
        .map(|c| (c.participant_id.as_str(), c.time_point))
        .collect();
    let missing: BTreeSet<(&str, u8)> = responses
        .iter()
        .map(|r| (r.participant_id.as_str(), r.time_point))
        .filter(|k| !known.contains(k))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    Err(Error::InvalidData {
        path: path.to_path_buf(),
        violations: missing
            .into_iter()
            .map(|(p, t)| Violation::DanglingReference {
                key: format!("{p}/t{t}"),
            })
            .collect(),
    })
}

/// Loads an anchor file, reporting every invalid set and duplicate name.
pub fn load_anchors(path: &Path) -> Result<Vec<AnchorSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_anchors(path, &text)
}

pub fn parse_anchors(path: &Path, text: &str) -> Result<Vec<AnchorSet>> {
    let sets: Vec<AnchorSet> = serde_json::from_str(text).map_err(|e| Error::InvalidData {
        path: path.to_path_buf(),
        violations: vec![Violation::Parse {
            line: e.line(),
            message: e.to_string(),
        }],
    })?;
    let mut violations = Vec::new();
    let mut names = BTreeSet::new();
    for (i, set) in sets.iter().enumerate() {
        for message in set.problems() {
            violations.push(Violation::Invalid {
                line: i + 1,
                message: format!("{}: {message}", set.axis_name),
            });
        }
        if !names.insert(set.axis_name.as_str()) {
            violations.push(Violation::DuplicateKey {
                line: i + 1,
                key: set.axis_name.clone(),
            });
        }
    }
    if violations.is_empty() {
        Ok(sets)
    } else {
        Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations,
        })
    }
}

/// Writes scores as CSV sorted by the record key, floats at nine
/// significant digits.
pub fn write_scores(records: &[ScoreRecord], path: &Path) -> Result<()> {
    write_atomic(path, &scores_csv(records)?)
}

pub fn scores_csv(records: &[ScoreRecord]) -> Result<Vec<u8>> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.participant_id.as_str(),
            &r.time_point.to_string(),
            r.construct.as_str(),
            r.format.as_str(),
            &r.axis_name,
            r.representation.as_str(),
            &format_sig9(r.projection),
            &format_sig9(r.severity),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {}", e.error())))
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SCORES_HEADER {
        return Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations: vec![Violation::Invalid {
                line: 1,
                message: format!("header must be {}", SCORES_HEADER.join(",")),
            }],
        });
    }
    let mut out = Vec::new();
    let mut violations = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parsed = (|| -> std::result::Result<ScoreRecord, String> {
            let num = |s: &str| -> std::result::Result<f64, String> {
                let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("{s:?} is not finite"))
                }
            };
            Ok(ScoreRecord {
                participant_id: row[0].to_string(),
                time_point: row[1].parse().map_err(|_| format!("bad time_point {:?}", &row[1]))?,
                construct: row[2].parse::<Construct>().map_err(|e| e.to_string())?,
                format: row[3].parse::<ResponseFormat>().map_err(|e| e.to_string())?,
                axis_name: row[4].to_string(),
                representation: row[5].parse::<Representation>().map_err(|e| e.to_string())?,
                projection: num(&row[6])?,
                severity: num(&row[7])?,
            })
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(message) => violations.push(Violation::Parse { line, message }),
        }
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(Error::InvalidData {
            path: path.to_path_buf(),
            violations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleReliability {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// File locations for a run; relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub responses: PathBuf,
    pub clinical: PathBuf,
    pub anchors: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunPaths {
    fn default() -> Self {
        RunPaths {
            responses: "responses.jsonl".into(),
            clinical: "clinical.csv".into(),
            anchors: None,
            cache_dir: "cache".into(),
            out_dir: "out".into(),
        }
    }
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_id: String,
    #[serde(default)]
    pub reliabilities: BTreeMap<Scale, ScaleReliability>,
    #[serde(default)]
    pub time_point: TimePointFilter,
    #[serde(default)]
    pub paths: RunPaths,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_url: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abbreviations: Vec<String>,
}

impl RunConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        RunConfig {
            model_id: model_id.into(),
            reliabilities: BTreeMap::new(),
            time_point: TimePointFilter::Pooled,
            paths: RunPaths::default(),
            seed: None,
            provider: ProviderConfig::default(),
            service_url: None,
            request_timeout_secs: default_timeout(),
            abbreviations: Vec::new(),
        }
    }

    /// Parses and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.resolve(base);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::InvalidConfig("model_id is empty".into()));
        }
        for (scale, r) in &self.reliabilities {
            if !(r.value > 0.0 && r.value <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "reliability for {scale} must be in (0, 1], got {}",
                    r.value
                )));
            }
        }
        let p = &self.provider;
        if p.batch_size == 0 || p.max_in_flight == 0 || p.max_attempts == 0 {
            return Err(Error::InvalidConfig("provider limits must be positive".into()));
        }
        if self.request_timeout_secs == 0 {
            return Err(Error::InvalidConfig("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    /// The configured reliabilities for `scales`, or the list of those
    /// missing.
    pub fn require_reliabilities(&self, scales: &[Scale]) -> Result<BTreeMap<Scale, f64>> {
        let missing: Vec<Scale> = scales
            .iter()
            .copied()
            .filter(|s| !self.reliabilities.contains_key(s))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingReliabilities(missing));
        }
        Ok(scales.iter().map(|s| (*s, self.reliabilities[s].value)).collect())
    }
}

impl RunPaths {
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.responses);
        fix(&mut self.clinical);
        fix(&mut self.cache_dir);
        fix(&mut self.out_dir);
        if let Some(a) = self.anchors.as_mut() {
            fix(a);
        }
    }
}
