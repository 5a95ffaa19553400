//! Fidelity scoring: does the compressed set reproduce full-set accuracy
//! and model ranking? Plus a contamination probe comparing compressed-set
//! accuracy against freshly generated variants.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, FidelityError>;

#[derive(Debug, Error)]
pub enum FidelityError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed eval line: {message}")]
    MalformedLine { path: String, line: usize, message: String },
    #[error("{path}:{line}: record appears before any model header")]
    MissingModelHeader { path: String, line: usize },
    #[error("{path}:{line}: duplicate model '{model}'")]
    DuplicateModel { path: String, line: usize, model: String },
    #[error("{path}:{line}: duplicate id '{id}' for model '{model}'")]
    DuplicateEvalId { path: String, line: usize, model: String, id: String },
    #[error("{path}: model '{model}' has no records")]
    EmptySection { path: String, model: String },
    #[error("{path}: no eval sections")]
    EmptyEval { path: String },
    #[error("subset names {count} ids absent from model '{model}', first: {first}")]
    UnknownEvalIds { model: String, count: usize, first: String },
    #[error("accuracy is undefined over an empty id set")]
    EmptySubset,
    #[error("accuracy {value} outside [0, 1]")]
    InvalidAccuracy { value: f64 },
    #[error("full-set accuracy is zero; relative delta is undefined")]
    ZeroBaseline,
    #[error("score maps disagree on models: {reason}")]
    MismatchedModels { reason: String },
    #[error("rank correlation needs at least 2 models, got {count}")]
    TooFewModels { count: usize },
    #[error("all {side} scores tie; rank correlation is undefined")]
    ZeroRankVariance { side: &'static str },
    #[error("models '{missing}' present in the compressed eval but not the full eval")]
    UnknownModel { missing: String },
    #[error("no models in common between the full and compressed evals")]
    NoCommonModels,
    #[error("reference answer is empty")]
    EmptyReference,
    #[error("no standalone A-D choice letter in reference '{reference}'")]
    NoChoiceLetter { reference: String },
}

impl FidelityError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, FidelityError::Io { .. })
    }
}

/// Which evaluation produced a record set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSource {
    Full,
    Compressed,
    Generalization,
}

/// Per-sample correctness for one model on one evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub model: String,
    pub source: EvalSource,
    /// id -> answered correctly. Ordered map: iteration order never
    /// depends on insertion order.
    pub correctness: BTreeMap<String, bool>,
}

/// Fraction answered correctly, optionally restricted to `subset` (which
/// must then be non-empty and fully covered by the record).
pub fn accuracy(record: &EvalRecord, subset: Option<&HashSet<String>>) -> Result<f64> {
    match subset {
        None => {
            let n = record.correctness.len();
            debug_assert!(n > 0, "loader rejects empty sections");
            let hits = record.correctness.values().filter(|&&c| c).count();
            Ok(hits as f64 / n as f64)
        }
        Some(ids) => {
            if ids.is_empty() {
                return Err(FidelityError::EmptySubset);
            }
            let mut missing: Vec<&str> =
                ids.iter().filter(|id| !record.correctness.contains_key(*id)).map(String::as_str).collect();
            if !missing.is_empty() {
                missing.sort_unstable();
                return Err(FidelityError::UnknownEvalIds {
                    model: record.model.clone(),
                    count: missing.len(),
                    first: missing[0].to_string(),
                });
            }
            let hits = record
                .correctness
                .iter()
                .filter(|(id, &c)| c && ids.contains(*id))
                .count();
            Ok(hits as f64 / ids.len() as f64)
        }
    }
}

/// Relative accuracy change of the compressed run against the full run:
/// (compressed - full) / full. Positive means the compressed set scored
/// higher.
pub fn delta(acc_full: f64, acc_comp: f64) -> Result<f64> {
    for v in [acc_full, acc_comp] {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(FidelityError::InvalidAccuracy { value: v });
        }
    }
    if acc_full == 0.0 {
        return Err(FidelityError::ZeroBaseline);
    }
    Ok((acc_comp - acc_full) / acc_full)
}

/// Average ranks (1-based), ties sharing the mean of their rank run.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean 1-based rank.
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation between two score maps over the same models.
/// Ties get average ranks; the result is the Pearson correlation of the
/// rank vectors.
pub fn spearman(full: &BTreeMap<String, f64>, comp: &BTreeMap<String, f64>) -> Result<f64> {
    if full.len() != comp.len() || full.keys().zip(comp.keys()).any(|(a, b)| a != b) {
        let only_full: Vec<&str> =
            full.keys().filter(|k| !comp.contains_key(*k)).map(String::as_str).collect();
        let only_comp: Vec<&str> =
            comp.keys().filter(|k| !full.contains_key(*k)).map(String::as_str).collect();
        return Err(FidelityError::MismatchedModels {
            reason: format!("only in full: {only_full:?}; only in compressed: {only_comp:?}"),
        });
    }
    if full.len() < 2 {
        return Err(FidelityError::TooFewModels { count: full.len() });
    }
    for v in full.values().chain(comp.values()) {
        if !v.is_finite() {
            return Err(FidelityError::InvalidAccuracy { value: *v });
        }
    }

    let xs: Vec<f64> = full.values().copied().collect();
    let ys: Vec<f64> = comp.values().copied().collect();
    let rx = average_ranks(&xs);
    let ry = average_ranks(&ys);

    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0; // both rank vectors average to this
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(FidelityError::ZeroRankVariance { side: "full" });
    }
    if var_y == 0.0 {
        return Err(FidelityError::ZeroRankVariance { side: "compressed" });
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Contamination probe: how far accuracy falls on regenerated variants of
/// the kept questions relative to the kept originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSignal {
    /// (compressed - generated) / compressed.
    pub relative_drop: f64,
    /// True when the drop exceeds the configured threshold: the model may
    /// have memorized the originals.
    pub flagged: bool,
}

pub fn contamination_check(
    acc_comp: f64,
    acc_gen: f64,
    drop_threshold: f64,
) -> Result<ContaminationSignal> {
    for v in [acc_comp, acc_gen] {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(FidelityError::InvalidAccuracy { value: v });
        }
    }
    if acc_comp == 0.0 {
        return Err(FidelityError::ZeroBaseline);
    }
    let relative_drop = (acc_comp - acc_gen) / acc_comp;
    Ok(ContaminationSignal { relative_drop, flagged: relative_drop > drop_threshold })
}

/// Answer-matching policies for scoring raw predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Byte equality.
    Strict,
    /// Case-folded, whitespace-collapsed equality.
    Normalized,
    /// First standalone A-D token on each side must agree (multiple-choice).
    ChoiceLetter,
}

/// Scores one prediction against the reference answer. The reference must
/// be non-blank; in `ChoiceLetter` mode it must contain a choice letter,
/// while a prediction without one simply scores false.
pub fn score_exact_match(prediction: &str, reference: &str, mode: MatchMode) -> Result<bool> {
    if reference.trim().is_empty() {
        return Err(FidelityError::EmptyReference);
    }
    match mode {
        MatchMode::Strict => Ok(prediction == reference),
        MatchMode::Normalized => Ok(normalize_text(prediction) == normalize_text(reference)),
        MatchMode::ChoiceLetter => {
            let Some(want) = choice_letter(reference) else {
                return Err(FidelityError::NoChoiceLetter { reference: reference.to_string() });
            };
            Ok(choice_letter(prediction) == Some(want))
        }
    }
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// First maximal alphanumeric token that is exactly one of A-D.
fn choice_letter(s: &str) -> Option<char> {
    s.split(|c: char| !c.is_alphanumeric())
        .find(|tok| tok.len() == 1 && matches!(tok.chars().next(), Some('A'..='D')))
        .and_then(|tok| tok.chars().next())
}

/// Loads eval records from a sectioned JSONL file: a `{"model": ...}`
/// header line opens each section, followed by `{"id": ..., "correct":
/// bool}` lines for that model.
pub fn load_eval_records(path: &Path, source: EvalSource) -> Result<Vec<EvalRecord>> {
    let pstr = path.display().to_string();
    let file = File::open(path).map_err(|e| FidelityError::Io { path: pstr.clone(), source: e })?;

    let mut records: Vec<EvalRecord> = Vec::new();
    let mut seen_models: BTreeMap<String, usize> = BTreeMap::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let raw = line.map_err(|e| FidelityError::Io { path: pstr.clone(), source: e })?;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| {
            FidelityError::MalformedLine { path: pstr.clone(), line: line_no, message: e.to_string() }
        })?;
        let obj = value.as_object().ok_or_else(|| FidelityError::MalformedLine {
            path: pstr.clone(),
            line: line_no,
            message: "expected a JSON object".into(),
        })?;

        if let Some(model) = obj.get("model") {
            let model = model.as_str().map(str::to_string).filter(|m| !m.is_empty()).ok_or_else(
                || FidelityError::MalformedLine {
                    path: pstr.clone(),
                    line: line_no,
                    message: "'model' must be a non-empty string".into(),
                },
            )?;
            if seen_models.insert(model.clone(), line_no).is_some() {
                return Err(FidelityError::DuplicateModel { path: pstr, line: line_no, model });
            }
            records.push(EvalRecord { model, source, correctness: BTreeMap::new() });
            continue;
        }

        let current = records.last_mut().ok_or(FidelityError::MissingModelHeader {
            path: pstr.clone(),
            line: line_no,
        })?;
        let id = match obj.get("id") {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                return Err(FidelityError::MalformedLine {
                    path: pstr,
                    line: line_no,
                    message: "'id' must be a non-empty string or a number".into(),
                })
            }
        };
        let correct = obj.get("correct").and_then(|c| c.as_bool()).ok_or_else(|| {
            FidelityError::MalformedLine {
                path: pstr.clone(),
                line: line_no,
                message: "'correct' must be a boolean".into(),
            }
        })?;
        if current.correctness.insert(id.clone(), correct).is_some() {
            return Err(FidelityError::DuplicateEvalId {
                path: pstr,
                line: line_no,
                model: current.model.clone(),
                id,
            });
        }
    }

    if records.is_empty() {
        return Err(FidelityError::EmptyEval { path: pstr });
    }
    if let Some(empty) = records.iter().find(|r| r.correctness.is_empty()) {
        return Err(FidelityError::EmptySection { path: pstr, model: empty.model.clone() });
    }
    Ok(records)
}

/// One model's full-vs-compressed accuracy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFidelity {
    pub model: String,
    pub acc_full: f64,
    pub acc_comp: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Sorted by model name.
    pub per_model: Vec<ModelFidelity>,
    /// Rank agreement across models; absent (with `note`) when fewer than
    /// two models are shared.
    pub spearman_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Compares full-set and compressed-set evals model by model. Every model
/// in `comp` must appear in `full`; models only in `full` are ignored.
pub fn fidelity_report(full: &[EvalRecord], comp: &[EvalRecord]) -> Result<FidelityReport> {
    let full_by_name: BTreeMap<&str, &EvalRecord> =
        full.iter().map(|r| (r.model.as_str(), r)).collect();

    let mut acc_full_map: BTreeMap<String, f64> = BTreeMap::new();
    let mut acc_comp_map: BTreeMap<String, f64> = BTreeMap::new();
    for comp_record in comp {
        let Some(full_record) = full_by_name.get(comp_record.model.as_str()) else {
            return Err(FidelityError::UnknownModel { missing: comp_record.model.clone() });
        };
        acc_full_map.insert(comp_record.model.clone(), accuracy(full_record, None)?);
        acc_comp_map.insert(comp_record.model.clone(), accuracy(comp_record, None)?);
    }
    if acc_full_map.is_empty() {
        return Err(FidelityError::NoCommonModels);
    }

    let mut per_model = Vec::with_capacity(acc_full_map.len());
    for (model, &acc_full) in &acc_full_map {
        let acc_comp = acc_comp_map[model];
        per_model.push(ModelFidelity {
            model: model.clone(),
            acc_full,
            acc_comp,
            delta: delta(acc_full, acc_comp)?,
        });
    }

    let (spearman_rho, note) = if per_model.len() >= 2 {
        (Some(spearman(&acc_full_map, &acc_comp_map)?), None)
    } else {
        (None, Some("rank correlation needs at least 2 models; reporting deltas only".to_string()))
    };

    Ok(FidelityReport { per_model, spearman_rho, note })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: &str, bits: &[(&str, bool)]) -> EvalRecord {
        EvalRecord {
            model: model.into(),
            source: EvalSource::Full,
            correctness: bits.iter().map(|(id, c)| (id.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn accuracy_over_all_and_subset() {
        let r = record("m", &[("a", true), ("b", false), ("c", true), ("d", true)]);
        assert_eq!(accuracy(&r, None).unwrap(), 0.75);
        let subset: HashSet<String> = ["b".to_string(), "c".to_string()].into();
        assert_eq!(accuracy(&r, Some(&subset)).unwrap(), 0.5);
        let unknown: HashSet<String> = ["z".to_string()].into();
        assert!(matches!(
            accuracy(&r, Some(&unknown)),
            Err(FidelityError::UnknownEvalIds { .. })
        ));
        assert!(matches!(
            accuracy(&r, Some(&HashSet::new())),
            Err(FidelityError::EmptySubset)
        ));
    }

    #[test]
    fn delta_sign_follows_compressed_minus_full() {
        assert!((delta(0.5, 0.55).unwrap() - 0.1).abs() < 1e-12);
        assert!((delta(0.5, 0.45).unwrap() + 0.1).abs() < 1e-12);
        assert_eq!(delta(0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(delta(0.0, 0.5), Err(FidelityError::ZeroBaseline)));
        assert!(matches!(delta(1.2, 0.5), Err(FidelityError::InvalidAccuracy { .. })));
    }

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn spearman_perfect_and_reversed() {
        let full = scores(&[("m1", 0.2), ("m2", 0.4), ("m3", 0.6), ("m4", 0.8)]);
        let same_order = scores(&[("m1", 0.25), ("m2", 0.41), ("m3", 0.66), ("m4", 0.79)]);
        assert_eq!(spearman(&full, &same_order).unwrap(), 1.0);
        let reversed = scores(&[("m1", 0.9), ("m2", 0.7), ("m3", 0.5), ("m4", 0.3)]);
        assert_eq!(spearman(&full, &reversed).unwrap(), -1.0);
    }

    #[test]
    fn spearman_single_swap_matches_hand_value() {
        // Ranks (1,2,3,4,5) vs (1,2,3,5,4): rho = 1 - 6*2/(5*24) = 0.9.
        let full = scores(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4), ("e", 0.5)]);
        let comp = scores(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.5), ("e", 0.4)]);
        assert!((spearman(&full, &comp).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn spearman_ties_use_average_ranks() {
        // x ranks: (1, 2.5, 2.5, 4) vs y ranks (1,2,3,4):
        // rho = 4.5 / sqrt(4.5 * 5.0) = sqrt(0.9).
        let full = scores(&[("a", 10.0), ("b", 20.0), ("c", 20.0), ("d", 30.0)]);
        let comp = scores(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        let want = 0.9f64.sqrt();
        assert!((spearman(&full, &comp).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn spearman_rejects_mismatch_and_constants() {
        let full = scores(&[("a", 0.1), ("b", 0.2)]);
        let other = scores(&[("a", 0.1), ("c", 0.2)]);
        assert!(matches!(
            spearman(&full, &other),
            Err(FidelityError::MismatchedModels { .. })
        ));
        let constant = scores(&[("a", 0.5), ("b", 0.5)]);
        assert!(matches!(
            spearman(&full, &constant),
            Err(FidelityError::ZeroRankVariance { side: "compressed" })
        ));
        let single = scores(&[("a", 0.5)]);
        assert!(matches!(
            spearman(&single, &single),
            Err(FidelityError::TooFewModels { count: 1 })
        ));
    }

    #[test]
    fn contamination_flags_large_drops_only() {
        let hit = contamination_check(0.7252, 0.60, 0.10).unwrap();
        assert!(hit.flagged);
        assert!((hit.relative_drop - (0.7252 - 0.60) / 0.7252).abs() < 1e-12);
        let ok = contamination_check(0.7252, 0.70, 0.10).unwrap();
        assert!(!ok.flagged);
        // Generated-set accuracy above compressed is a negative drop.
        let up = contamination_check(0.5, 0.6, 0.10).unwrap();
        assert!(!up.flagged && up.relative_drop < 0.0);
        assert!(matches!(
            contamination_check(0.0, 0.5, 0.10),
            Err(FidelityError::ZeroBaseline)
        ));
    }

    #[test]
    fn exact_match_modes() {
        use MatchMode::*;
        assert!(score_exact_match("A", "A", Strict).unwrap());
        assert!(!score_exact_match("a", "A", Strict).unwrap());
        assert!(!score_exact_match("A ", "A", Strict).unwrap());

        assert!(score_exact_match("  The  ANSWER ", "the answer", Normalized).unwrap());
        assert!(!score_exact_match("the answers", "the answer", Normalized).unwrap());

        assert!(score_exact_match("The answer is (C).", "C", ChoiceLetter).unwrap());
        assert!(score_exact_match("B, final answer", "Answer: B", ChoiceLetter).unwrap());
        assert!(!score_exact_match("I pick D", "C", ChoiceLetter).unwrap());
        // "A" inside a longer token is not standalone.
        assert!(!score_exact_match("Apple pie", "A", ChoiceLetter).unwrap());
        // Prediction without any letter scores false; reference without one
        // is a contract violation.
        assert!(!score_exact_match("no idea", "C", ChoiceLetter).unwrap());
        assert!(matches!(
            score_exact_match("C", "no letter here", ChoiceLetter),
            Err(FidelityError::NoChoiceLetter { .. })
        ));
        assert!(matches!(
            score_exact_match("C", "   ", ChoiceLetter),
            Err(FidelityError::EmptyReference)
        ));
    }

    #[test]
    fn report_matches_models_and_carries_note_for_single_model() {
        let full = vec![
            record("m1", &[("a", true), ("b", false)]),
            record("m2", &[("a", true), ("b", true)]),
        ];
        let comp = vec![record("m1", &[("a", true)])];
        let report = fidelity_report(&full, &comp).unwrap();
        assert_eq!(report.per_model.len(), 1);
        assert_eq!(report.per_model[0].acc_full, 0.5);
        assert_eq!(report.per_model[0].acc_comp, 1.0);
        assert!(report.spearman_rho.is_none());
        assert!(report.note.is_some());

        let unknown = vec![record("mX", &[("a", true)])];
        assert!(matches!(
            fidelity_report(&full, &unknown),
            Err(FidelityError::UnknownModel { .. })
        ));
    }
}
