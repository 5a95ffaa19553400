//! Dataset and embedding-sidecar I/O.
//!
//! A dataset is JSONL, one record per line, with configurable field names
//! for id / question / reference answer; all other fields are preserved as
//! string metadata. Embeddings live in a sidecar JSONL keyed by sample id.
//! Writers emit to a temp file in the destination directory and rename into
//! place, so a crash never leaves a partial artifact behind.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine { path: String, line: usize, message: String },
    #[error("{path}:{line}: missing field '{field}'")]
    MissingField { path: String, line: usize, field: String },
    #[error("{path}:{line}: field '{field}' must be {expected}")]
    InvalidField { path: String, line: usize, field: String, expected: &'static str },
    #[error("{path}: duplicate id '{id}' at lines {first_line} and {line}")]
    DuplicateLine { path: String, id: String, first_line: usize, line: usize },
    #[error("duplicate sample id '{id}'")]
    DuplicateSample { id: String },
    #[error("{path}: no records")]
    EmptyFile { path: String },
    #[error("invalid sample: {reason}")]
    InvalidSample { reason: String },
    #[error("schema mapping fields must be distinct non-empty names")]
    InvalidSchema,
    #[error("{path}:{line}: embedding dimension {found} conflicts with dimension {expected} set at line {first_line}")]
    DimensionMismatch { path: String, line: usize, found: usize, expected: usize, first_line: usize },
    #[error("{path}:{line}: embedding dimension must be at least 2, got {found}")]
    DimensionTooSmall { path: String, line: usize, found: usize },
    #[error("{path}:{line}: non-finite embedding component for id '{id}'")]
    NonFinite { path: String, line: usize, id: String },
    #[error("embeddings missing for {count} dataset ids, first: {first}")]
    MissingEmbeddings { count: usize, first: String },
    #[error("embeddings for {count} ids not present in the dataset, first: {first}")]
    ExtraEmbeddings { count: usize, first: String },
    #[error("embedding records are inconsistent: {reason}")]
    InconsistentRecords { reason: String },
    #[error("selection names {count} ids not present in the dataset, first: {first}")]
    UnknownIds { count: usize, first: String },
    #[error("template must contain '{{question}}' exactly once, found {found}")]
    MalformedTemplate { found: usize },
}

impl DataError {
    /// True for input-contract violations; false for I/O failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, DataError::Io { .. })
    }
}

/// One benchmark sample. `meta` carries any extra source fields verbatim
/// (non-string values as compact JSON text).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub meta: BTreeMap<String, String>,
}

/// Maps the toolkit's id / question / answer fields onto the source file's
/// key names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMapping {
    pub id: String,
    pub question: String,
    pub answer: String,
}

impl Default for SchemaMapping {
    fn default() -> Self {
        SchemaMapping { id: "id".into(), question: "question".into(), answer: "answer".into() }
    }
}

impl SchemaMapping {
    fn validate(&self) -> Result<()> {
        let names = [&self.id, &self.question, &self.answer];
        let distinct: HashSet<&String> = names.iter().copied().collect();
        if distinct.len() != names.len() || names.iter().any(|n| n.is_empty()) {
            return Err(DataError::InvalidSchema);
        }
        Ok(())
    }
}

/// An ordered, id-unique collection of samples. Row order is load order and
/// is the canonical order for embeddings, distances, and exports.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    index: HashMap<String, usize>,
    fingerprint: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(DataError::InvalidSample { reason: "dataset has no samples".into() });
        }
        let mut index = HashMap::with_capacity(samples.len());
        let mut hasher = Sha256::new();
        for (row, s) in samples.iter().enumerate() {
            if s.id.is_empty() {
                return Err(DataError::InvalidSample { reason: format!("row {row}: empty id") });
            }
            if s.question.is_empty() {
                return Err(DataError::InvalidSample {
                    reason: format!("id '{}': empty question", s.id),
                });
            }
            if index.insert(s.id.clone(), row).is_some() {
                return Err(DataError::DuplicateSample { id: s.id.clone() });
            }
            hasher.update(s.id.as_bytes());
            hasher.update(b"\n");
        }
        let fingerprint = hex(&hasher.finalize());
        Ok(Dataset { samples, index, fingerprint })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.index.get(id).map(|&row| &self.samples[row])
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Content hash over the ordered sample ids; identifies the dataset in
    /// downstream artifacts.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// One embedding sidecar record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embedding: Vec<f64>,
}

/// The outcome of a compression run: which samples survived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedSet {
    /// Fingerprint of the dataset the selection was drawn from.
    pub source_dataset_id: String,
    pub selected_ids: Vec<String>,
    /// Achieved fraction of the source kept, in (0, 1].
    pub retention_rate: f64,
    /// Free-form note tying the selection to the analysis that produced it.
    pub provenance: String,
}

/// Returned by writers: how many records went out and the SHA-256 of the
/// exact bytes written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteReceipt {
    pub count: usize,
    pub sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Loads a JSONL dataset using `schema` to locate the id, question, and
/// (optional) reference-answer fields. Blank lines are skipped; every other
/// line must be a JSON object. Ids may be strings or integers and must be
/// unique. All unmapped fields land in `Sample::meta`; a `meta` object of
/// strings is flattened back into it, so exports round-trip.
pub fn load_samples(path: &Path, schema: &SchemaMapping) -> Result<Dataset> {
    schema.validate()?;
    let pstr = path.display().to_string();
    let mut samples = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();

    for (line_no, raw) in read_lines(path)? {
        let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| {
            DataError::MalformedLine { path: pstr.clone(), line: line_no, message: e.to_string() }
        })?;
        let serde_json::Value::Object(mut obj) = value else {
            return Err(DataError::MalformedLine {
                path: pstr.clone(),
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };

        let id = match obj.remove(&schema.id) {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(_) => {
                return Err(DataError::InvalidField {
                    path: pstr.clone(),
                    line: line_no,
                    field: schema.id.clone(),
                    expected: "a non-empty string or a number",
                })
            }
            None => {
                return Err(DataError::MissingField {
                    path: pstr.clone(),
                    line: line_no,
                    field: schema.id.clone(),
                })
            }
        };
        if let Some(first) = first_seen.insert(id.clone(), line_no) {
            return Err(DataError::DuplicateLine {
                path: pstr.clone(),
                id,
                first_line: first,
                line: line_no,
            });
        }

        let question = match obj.remove(&schema.question) {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s,
            Some(_) => {
                return Err(DataError::InvalidField {
                    path: pstr.clone(),
                    line: line_no,
                    field: schema.question.clone(),
                    expected: "a non-empty string",
                })
            }
            None => {
                return Err(DataError::MissingField {
                    path: pstr.clone(),
                    line: line_no,
                    field: schema.question.clone(),
                })
            }
        };

        let answer = match obj.remove(&schema.answer) {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(other) => Some(other.to_string()),
        };

        let mut meta = BTreeMap::new();
        for (key, value) in obj {
            // A string-valued "meta" object is our own export shape: unnest it.
            if key == "meta" {
                if let serde_json::Value::Object(inner) = &value {
                    if inner.values().all(|v| v.is_string()) {
                        for (k, v) in inner {
                            meta.insert(k.clone(), v.as_str().unwrap().to_string());
                        }
                        continue;
                    }
                }
            }
            let text = match value {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            meta.insert(key, text);
        }

        samples.push(Sample { id, question, answer, meta });
    }

    if samples.is_empty() {
        return Err(DataError::EmptyFile { path: pstr });
    }
    Dataset::new(samples)
}

/// Loads an embedding sidecar. All records must share one dimension d >= 2,
/// contain only finite components, and have unique ids.
pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let pstr = path.display().to_string();
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut established: Option<(usize, usize)> = None; // (dims, line)

    for (line_no, raw) in read_lines(path)? {
        let record: EmbeddingRecord = serde_json::from_str(&raw).map_err(|e| {
            DataError::MalformedLine { path: pstr.clone(), line: line_no, message: e.to_string() }
        })?;
        if record.id.is_empty() {
            return Err(DataError::InvalidField {
                path: pstr.clone(),
                line: line_no,
                field: "id".into(),
                expected: "a non-empty string",
            });
        }
        if let Some(first) = first_seen.insert(record.id.clone(), line_no) {
            return Err(DataError::DuplicateLine {
                path: pstr.clone(),
                id: record.id,
                first_line: first,
                line: line_no,
            });
        }
        if record.embedding.iter().any(|x| !x.is_finite()) {
            return Err(DataError::NonFinite { path: pstr.clone(), line: line_no, id: record.id });
        }
        let found = record.embedding.len();
        match established {
            None => {
                if found < 2 {
                    return Err(DataError::DimensionTooSmall {
                        path: pstr.clone(),
                        line: line_no,
                        found,
                    });
                }
                established = Some((found, line_no));
            }
            Some((expected, first_line)) if found != expected => {
                return Err(DataError::DimensionMismatch {
                    path: pstr.clone(),
                    line: line_no,
                    found,
                    expected,
                    first_line,
                });
            }
            Some(_) => {}
        }
        records.push(record);
    }

    if records.is_empty() {
        return Err(DataError::EmptyFile { path: pstr });
    }
    Ok(records)
}

/// Arranges sidecar records into a row-per-sample matrix in dataset order.
/// The record id set must equal the dataset id set exactly.
pub fn align(dataset: &Dataset, records: &[EmbeddingRecord]) -> Result<crate::geometry::EmbeddingMatrix> {
    let mut by_id: HashMap<&str, &EmbeddingRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(DataError::InconsistentRecords {
                reason: format!("duplicate embedding id '{}'", r.id),
            });
        }
    }

    let mut extra: Vec<&str> = by_id
        .keys()
        .copied()
        .filter(|id| dataset.row_of(id).is_none())
        .collect();
    if !extra.is_empty() {
        extra.sort_unstable();
        return Err(DataError::ExtraEmbeddings { count: extra.len(), first: extra[0].to_string() });
    }
    let missing: Vec<&Sample> =
        dataset.samples().iter().filter(|s| !by_id.contains_key(s.id.as_str())).collect();
    if !missing.is_empty() {
        return Err(DataError::MissingEmbeddings {
            count: missing.len(),
            first: missing[0].id.clone(),
        });
    }

    let dims = records[0].embedding.len();
    if dims < 2 {
        return Err(DataError::InconsistentRecords {
            reason: format!("embedding dimension must be at least 2, got {dims}"),
        });
    }
    let mut data = Vec::with_capacity(dataset.len() * dims);
    for sample in dataset.samples() {
        let r = by_id[sample.id.as_str()];
        if r.embedding.len() != dims {
            return Err(DataError::InconsistentRecords {
                reason: format!(
                    "id '{}' has dimension {}, expected {dims}",
                    r.id,
                    r.embedding.len()
                ),
            });
        }
        if r.embedding.iter().any(|x| !x.is_finite()) {
            return Err(DataError::InconsistentRecords {
                reason: format!("id '{}' has a non-finite component", r.id),
            });
        }
        data.extend_from_slice(&r.embedding);
    }

    crate::geometry::EmbeddingMatrix::from_flat(data, dataset.len(), dims)
        .map_err(|e| DataError::InconsistentRecords { reason: e.to_string() })
}

/// Writes the selected samples as JSONL, preserving dataset order and all
/// fields. The write is atomic: temp file in the target directory, then
/// rename.
pub fn export_subset(dataset: &Dataset, set: &CompressedSet, path: &Path) -> Result<WriteReceipt> {
    let selected = check_selection(dataset, &set.selected_ids)?;
    let lines = dataset
        .samples()
        .iter()
        .filter(|s| selected.contains(s.id.as_str()))
        .map(|s| serde_json::to_string(s).expect("sample serializes"));
    write_atomic(path, lines)
}

/// Writes one generation prompt per selected sample (in selection order) by
/// substituting the sample question into `template` at its single
/// `{question}` placeholder. Output lines are {"id", "prompt"} objects.
pub fn export_gen_seeds(
    set: &CompressedSet,
    dataset: &Dataset,
    template: &str,
    path: &Path,
) -> Result<WriteReceipt> {
    let occurrences = template.matches("{question}").count();
    if occurrences != 1 {
        return Err(DataError::MalformedTemplate { found: occurrences });
    }
    check_selection(dataset, &set.selected_ids)?;
    let lines = set.selected_ids.iter().map(|id| {
        let sample = dataset.get(id).expect("validated above");
        let prompt = template.replace("{question}", &sample.question);
        serde_json::json!({ "id": id, "prompt": prompt }).to_string()
    });
    write_atomic(path, lines)
}

fn check_selection<'a>(dataset: &Dataset, ids: &'a [String]) -> Result<HashSet<&'a str>> {
    let mut selected: HashSet<&str> = HashSet::with_capacity(ids.len());
    let mut unknown: Vec<&str> = Vec::new();
    for id in ids {
        if dataset.row_of(id).is_none() {
            unknown.push(id);
        }
        selected.insert(id.as_str());
    }
    if !unknown.is_empty() {
        unknown.sort_unstable();
        return Err(DataError::UnknownIds { count: unknown.len(), first: unknown[0].to_string() });
    }
    Ok(selected)
}

/// Writes `lines` (without trailing newlines) to `path` atomically and
/// returns the receipt over the bytes written.
pub fn write_atomic<I>(path: &Path, lines: I) -> Result<WriteReceipt>
where
    I: IntoIterator<Item = String>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut count = 0usize;
    {
        let w = tmp.as_file_mut();
        for line in lines {
            w.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
            w.write_all(b"\n").map_err(|e| io_err(path, e))?;
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
            count += 1;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(WriteReceipt { count, sha256: hex(&hasher.finalize()) })
}
