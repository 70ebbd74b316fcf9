//! Parsing raw generations into persona records, deduplication and corpus
//! statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::persona::{Attribute, PersonaRecord, Source, ATTRIBUTE_COUNT};
use crate::text::{normalize_with, NormalizeOptions};

/// Upper bound on `[` positions tried before giving up on a payload.
const MAX_ARRAY_CANDIDATES: usize = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("no parsable array of objects in payload")]
    NoParsableArray,
    #[error("payload text is empty")]
    EmptyPayload,
    #[error("only {found} distinct names available, {requested} requested")]
    InsufficientNames {
        found: usize,
        requested: usize,
        names: Vec<String>,
    },
    #[error("corpus line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

/// One response body from a generation request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPayload {
    pub model_id: String,
    pub run_id: String,
    pub text: String,
}

impl RawPayload {
    pub fn new(
        model_id: impl Into<String>,
        run_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.is_empty() {
            return Err(CorpusError::EmptyPayload);
        }
        Ok(RawPayload {
            model_id: model_id.into(),
            run_id: run_id.into(),
            text,
        })
    }
}

/// Why an array element did not become a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    NotAnObject,
    MissingField(Attribute),
    EmptyField(Attribute),
    InvalidFieldType(Attribute),
    TruncatedObject,
    /// A complete `{...}` span that is not valid JSON.
    MalformedObject,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::NotAnObject => f.write_str("not an object"),
            RejectReason::MissingField(a) => write!(f, "missing field: {a}"),
            RejectReason::EmptyField(a) => write!(f, "empty field: {a}"),
            RejectReason::InvalidFieldType(a) => write!(f, "invalid field type: {a}"),
            RejectReason::TruncatedObject => f.write_str("truncated object"),
            RejectReason::MalformedObject => f.write_str("malformed object"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub run_id: String,
    pub index: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    pub records: Vec<PersonaRecord>,
    pub rejections: Vec<Rejection>,
}

/// Parses a payload with default normalization (no stemming).
pub fn parse_generation_payload(payload: &RawPayload) -> Result<ParseOutcome, CorpusError> {
    parse_generation_payload_with(payload, NormalizeOptions::default())
}

/// Extracts the first well-formed array of objects from a model response and
/// turns each complete object into a [`PersonaRecord`].
///
/// Markdown fences and surrounding prose are ignored. An array cut off before
/// its closing bracket still yields its complete leading objects; the partial
/// trailing object is rejected as truncated.
pub fn parse_generation_payload_with(
    payload: &RawPayload,
    opts: NormalizeOptions,
) -> Result<ParseOutcome, CorpusError> {
    let text = strip_code_fences(&payload.text);
    let items = extract_items(&text).ok_or(CorpusError::NoParsableArray)?;

    let mut outcome = ParseOutcome::default();
    for (index, item) in items.into_iter().enumerate() {
        let result = match item {
            Item::Value(v) => record_from_value(&v, opts),
            Item::Truncated => Err(RejectReason::TruncatedObject),
            Item::Malformed => Err(RejectReason::MalformedObject),
        };
        match result {
            Ok(raw) => outcome.records.push(PersonaRecord::new(
                raw,
                Source {
                    model_id: payload.model_id.clone(),
                    run_id: payload.run_id.clone(),
                    index,
                },
            )),
            Err(reason) => outcome.rejections.push(Rejection {
                run_id: payload.run_id.clone(),
                index,
                reason,
            }),
        }
    }
    Ok(outcome)
}

/// Parses arbitrary bytes, replacing invalid UTF-8.
pub fn parse_generation_bytes(
    model_id: &str,
    run_id: &str,
    bytes: &[u8],
) -> Result<ParseOutcome, CorpusError> {
    let payload = RawPayload::new(model_id, run_id, String::from_utf8_lossy(bytes))?;
    parse_generation_payload(&payload)
}

fn strip_code_fences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find("```") {
        out.push_str(&rest[..pos]);
        rest = &rest[pos + 3..];
        // Drop a language tag glued to the opening fence.
        let tag_len = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_alphanumeric())
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        rest = &rest[tag_len..];
    }
    out.push_str(rest);
    out
}

enum Item {
    Value(Value),
    Truncated,
    Malformed,
}

enum Scan {
    /// Byte index of the matching close bracket.
    Closed(usize),
    Unterminated,
}

/// Finds the bracket closing the one at `start`, skipping string literals.
fn scan_balanced(bytes: &[u8], start: usize) -> Scan {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Scan::Closed(i);
                }
            }
            _ => {}
        }
    }
    Scan::Unterminated
}

fn extract_items(text: &str) -> Option<Vec<Item>> {
    let bytes = text.as_bytes();
    let candidates = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'[')
        .map(|(i, _)| i)
        .take(MAX_ARRAY_CANDIDATES);
    for start in candidates {
        let end = match scan_balanced(bytes, start) {
            Scan::Closed(end) => {
                if let Ok(Value::Array(values)) = serde_json::from_str::<Value>(&text[start..=end])
                {
                    if values.iter().any(Value::is_object) {
                        return Some(values.into_iter().map(Item::Value).collect());
                    }
                    continue;
                }
                end + 1
            }
            Scan::Unterminated => text.len(),
        };
        if let Some(items) = salvage_objects(&text[..end], start) {
            return Some(items);
        }
    }
    None
}

/// Recovers the objects of an array that is not valid JSON as a whole: one
/// cut off before its closing bracket, or one with a trailing comma or a
/// malformed element. Stops at the first element that is not an object.
fn salvage_objects(text: &str, start: usize) -> Option<Vec<Item>> {
    let bytes = text.as_bytes();
    let mut pos = start + 1;
    let mut items = Vec::new();
    loop {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b',') {
            pos += 1;
        }
        if pos >= bytes.len() || bytes[pos] != b'{' {
            break;
        }
        match scan_balanced(bytes, pos) {
            Scan::Closed(end) => {
                match serde_json::from_str::<Value>(&text[pos..=end]) {
                    Ok(v) => items.push(Item::Value(v)),
                    Err(_) => items.push(Item::Malformed),
                }
                pos = end + 1;
            }
            Scan::Unterminated => {
                items.push(Item::Truncated);
                break;
            }
        }
    }
    let has_object = items
        .iter()
        .any(|i| matches!(i, Item::Value(v) if v.is_object()));
    has_object.then_some(items)
}

fn record_from_value(
    value: &Value,
    opts: NormalizeOptions,
) -> Result<[String; ATTRIBUTE_COUNT], RejectReason> {
    let object = value.as_object().ok_or(RejectReason::NotAnObject)?;
    let mut found: [Option<&Value>; ATTRIBUTE_COUNT] = Default::default();
    for (key, v) in object {
        if let Some(attr) = Attribute::from_loose_key(key) {
            found[attr.index()].get_or_insert(v);
        }
    }
    let mut raw: [String; ATTRIBUTE_COUNT] = Default::default();
    for attr in Attribute::ALL {
        let v = found[attr.index()].ok_or(RejectReason::MissingField(attr))?;
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Null => return Err(RejectReason::EmptyField(attr)),
            Value::Array(_) | Value::Object(_) => return Err(RejectReason::InvalidFieldType(attr)),
        };
        let normalized = normalize_with(&text, opts);
        if normalized.is_empty() {
            return Err(RejectReason::EmptyField(attr));
        }
        raw[attr.index()] = normalized;
    }
    Ok(raw)
}

/// Serializes records as a JSON array in the same shape a model is asked to
/// produce (used for replay fixtures and the parse round-trip).
pub fn records_to_json_array(records: &[PersonaRecord]) -> String {
    let objects: Vec<Value> = records
        .iter()
        .map(|r| {
            let map = Attribute::ALL
                .iter()
                .map(|a| (a.key().to_string(), Value::String(r.raw(*a).to_string())))
                .collect::<serde_json::Map<_, _>>();
            Value::Object(map)
        })
        .collect();
    Value::Array(objects).to_string()
}

/// Keeps the first occurrence of every eight-tuple.
pub fn dedupe(records: Vec<PersonaRecord>) -> (Vec<PersonaRecord>, usize) {
    let mut seen: HashSet<[String; ATTRIBUTE_COUNT]> = HashSet::with_capacity(records.len());
    let before = records.len();
    let unique: Vec<PersonaRecord> = records
        .into_iter()
        .filter(|r| seen.insert(r.raw.clone()))
        .collect();
    let removed = before - unique.len();
    (unique, removed)
}

/// Ingestion counters carried alongside a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub parsed: usize,
    pub rejected: usize,
    pub duplicates: usize,
}

/// A deduplicated set of persona records from one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub model_id: String,
    pub records: Vec<PersonaRecord>,
    pub counts: IngestCounts,
}

impl Corpus {
    /// Dedupes `parsed` and records the counters.
    pub fn from_parsed(
        model_id: impl Into<String>,
        parsed: Vec<PersonaRecord>,
        rejected: usize,
    ) -> Corpus {
        let parsed_count = parsed.len();
        let (records, duplicates) = dedupe(parsed);
        Corpus {
            model_id: model_id.into(),
            records,
            counts: IngestCounts {
                parsed: parsed_count,
                rejected,
                duplicates,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub parsed_count: usize,
    pub rejected_count: usize,
    pub duplicate_count: usize,
    pub unique_count: usize,
    /// Distinct raw values per attribute over the deduplicated records.
    pub cardinality: BTreeMap<Attribute, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut cardinality = BTreeMap::new();
    if !corpus.records.is_empty() {
        for attr in Attribute::ALL {
            let distinct: HashSet<&str> = corpus.records.iter().map(|r| r.raw(attr)).collect();
            cardinality.insert(attr, distinct.len());
        }
    }
    CorpusStats {
        parsed_count: corpus.counts.parsed,
        rejected_count: corpus.counts.rejected,
        duplicate_count: corpus.counts.duplicates,
        unique_count: corpus.counts.parsed - corpus.counts.duplicates,
        cardinality,
    }
}

/// The `k` most frequent names pooled across corpora; ties are broken
/// lexicographically.
///
/// When fewer than `k` distinct names exist, the error carries the shorter
/// list so callers may continue with it.
pub fn top_k_names(corpora: &[&Corpus], k: usize) -> Result<Vec<String>, CorpusError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for corpus in corpora {
        for r in &corpus.records {
            *counts.entry(r.raw(Attribute::Name)).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let names: Vec<String> = ranked.iter().take(k).map(|(n, _)| n.to_string()).collect();
    if names.len() < k {
        return Err(CorpusError::InsufficientNames {
            found: names.len(),
            requested: k,
            names,
        });
    }
    Ok(names)
}

/// One line of a corpus file.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusLine {
    name: String,
    gender: String,
    ethnicity: String,
    sexual_orientation: String,
    social_class: String,
    education_level: String,
    occupation: String,
    top_personal_interest: String,
    model_id: String,
    run_id: String,
}

pub fn write_corpus_line<W: Write>(out: &mut W, record: &PersonaRecord) -> std::io::Result<()> {
    let [name, gender, ethnicity, sexual_orientation, social_class, education_level, occupation, top_personal_interest] =
        record.raw.clone();
    let line = CorpusLine {
        name,
        gender,
        ethnicity,
        sexual_orientation,
        social_class,
        education_level,
        occupation,
        top_personal_interest,
        model_id: record.source.model_id.clone(),
        run_id: record.source.run_id.clone(),
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

/// Writes one record per line with fields in canonical order.
pub fn write_corpus<W: Write>(mut out: W, records: &[PersonaRecord]) -> std::io::Result<()> {
    for r in records {
        write_corpus_line(&mut out, r)?;
    }
    out.flush()
}

/// Reads a corpus file. Values are re-normalized so hand-edited files stay
/// consistent with parsed ones; blank lines are skipped.
pub fn read_corpus_records<R: BufRead>(input: R) -> Result<Vec<PersonaRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| CorpusError::BadLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        let raw = [
            parsed.name,
            parsed.gender,
            parsed.ethnicity,
            parsed.sexual_orientation,
            parsed.social_class,
            parsed.education_level,
            parsed.occupation,
            parsed.top_personal_interest,
        ]
        .map(|v| crate::text::normalize_text(&v));
        if let Some(attr) = Attribute::ALL.iter().find(|a| raw[a.index()].is_empty()) {
            return Err(CorpusError::BadLine {
                line: i + 1,
                message: format!("empty field: {attr}"),
            });
        }
        records.push(PersonaRecord::new(
            raw,
            Source {
                model_id: parsed.model_id,
                run_id: parsed.run_id,
                index: i,
            },
        ));
    }
    Ok(records)
}

/// Loads a corpus file, deduplicating on the way in. The model id is taken
/// from `model_id` when given, otherwise from the first line.
pub fn read_corpus<R: BufRead>(input: R, model_id: Option<&str>) -> Result<Corpus, CorpusError> {
    let records = read_corpus_records(input)?;
    let id = model_id
        .map(str::to_string)
        .or_else(|| records.first().map(|r| r.source.model_id.clone()))
        .unwrap_or_default();
    Ok(Corpus::from_parsed(id, records, 0))
}

#[derive(Serialize)]
struct RejectionLine<'a> {
    run_id: &'a str,
    index: usize,
    reason: String,
}

pub fn write_rejections<W: Write>(mut out: W, rejections: &[Rejection]) -> std::io::Result<()> {
    for r in rejections {
        serde_json::to_writer(
            &mut out,
            &RejectionLine {
                run_id: &r.run_id,
                index: r.index,
                reason: r.reason.to_string(),
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Distinct raw values of one attribute, sorted.
pub fn distinct_values(records: &[PersonaRecord], attribute: Attribute) -> BTreeSet<&str> {
    records.iter().map(|r| r.raw(attribute)).collect()
}
