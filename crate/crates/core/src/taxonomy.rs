//! Raw term → canonical category mapping, with drill-down back to the raw
//! terms behind each category.
//!
//! A taxonomy file is a JSON object keyed by attribute. Each attribute holds
//! `"raw term": "category"` pairs plus an optional `"policy"` for terms the
//! map does not cover (`"reject"`, `"other"` or `"passthrough"`). `"_doc"`
//! keys are ignored anywhere, and a top-level `"_targets"` object may declare
//! the expected number of categories per attribute.
//!
//! ```json
//! {
//!   "_doc": "education consolidation",
//!   "education_level": {
//!     "policy": "other",
//!     "secondary school": "high school",
//!     "higher secondary": "high school"
//!   },
//!   "_targets": { "education_level": 5 }
//! }
//! ```

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::de::{self, DeserializeSeed, IgnoredAny, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::persona::{Attribute, PersonaRecord, ATTRIBUTE_COUNT};
use crate::text::normalize_text;

/// Category assigned to unmapped terms under [`UnmappedPolicy::OtherBucket`].
pub const OTHER_CATEGORY: &str = "other";

/// Post-consolidation category counts of the reference taxonomy.
pub const REFERENCE_TARGETS: [(Attribute, usize); 7] = [
    (Attribute::Gender, 3),
    (Attribute::Ethnicity, 6),
    (Attribute::SexualOrientation, 5),
    (Attribute::SocialClass, 3),
    (Attribute::EducationLevel, 5),
    (Attribute::Occupation, 18),
    (Attribute::TopPersonalInterest, 15),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("line {line}: `{term}` in {attribute} maps to both `{first}` and `{second}`")]
    DuplicateKey {
        line: usize,
        attribute: Attribute,
        term: String,
        first: String,
        second: String,
    },
    #[error("line {line}: empty category for `{term}` in {attribute}")]
    EmptyCategory {
        line: usize,
        attribute: Attribute,
        term: String,
    },
    #[error("line {line}: unknown attribute `{key}`")]
    UnknownAttribute { line: usize, key: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unmapped {attribute} term `{term}` ({count} records)")]
    UnmappedTerm {
        attribute: Attribute,
        term: String,
        count: usize,
    },
    #[error("unknown {attribute} category `{category}`")]
    UnknownCategory {
        attribute: Attribute,
        category: String,
    },
    #[error("cannot read taxonomy: {0}")]
    Io(String),
}

/// What happens to a raw term the map does not list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    Reject,
    #[default]
    #[serde(rename = "other")]
    OtherBucket,
    Passthrough,
}

impl std::str::FromStr for UnmappedPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reject" => Ok(UnmappedPolicy::Reject),
            "other" | "other-bucket" | "other_bucket" => Ok(UnmappedPolicy::OtherBucket),
            "passthrough" | "pass-through" | "identity" => Ok(UnmappedPolicy::Passthrough),
            other => Err(format!("unknown unmapped policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeTaxonomy {
    /// Normalized raw term → normalized category.
    pub terms: BTreeMap<String, String>,
    pub policy: UnmappedPolicy,
}

impl AttributeTaxonomy {
    pub fn categories(&self) -> BTreeSet<&str> {
        self.terms.values().map(String::as_str).collect()
    }
}

/// Immutable per-attribute mapping. Attributes absent from the file pass
/// their raw values through unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaxonomyMap {
    attributes: BTreeMap<Attribute, AttributeTaxonomy>,
    targets: BTreeMap<Attribute, usize>,
}

enum Lookup<'a> {
    Mapped(&'a str),
    Unmapped(UnmappedPolicy),
}

impl TaxonomyMap {
    /// A map that leaves every value as-is.
    pub fn passthrough() -> Self {
        TaxonomyMap::default()
    }

    pub fn from_sections(sections: BTreeMap<Attribute, AttributeTaxonomy>) -> Self {
        TaxonomyMap {
            attributes: sections,
            targets: BTreeMap::new(),
        }
    }

    pub fn section(&self, attribute: Attribute) -> Option<&AttributeTaxonomy> {
        self.attributes.get(&attribute)
    }

    /// Category counts declared in the file's `_targets` block.
    pub fn declared_targets(&self) -> &BTreeMap<Attribute, usize> {
        &self.targets
    }

    fn lookup(&self, attribute: Attribute, term: &str) -> Lookup<'_> {
        match self.attributes.get(&attribute) {
            None => Lookup::Unmapped(UnmappedPolicy::Passthrough),
            Some(section) => match section.terms.get(term) {
                Some(category) => Lookup::Mapped(category),
                None => Lookup::Unmapped(section.policy),
            },
        }
    }

    /// Categories the map can produce for `attribute`.
    pub fn categories(&self, attribute: Attribute) -> BTreeSet<&str> {
        self.attributes
            .get(&attribute)
            .map(AttributeTaxonomy::categories)
            .unwrap_or_default()
    }
}

thread_local! {
    static LOAD_ISSUE: RefCell<Option<LoadIssue>> = const { RefCell::new(None) };
}

enum LoadIssue {
    Duplicate {
        attribute: Attribute,
        term: String,
        raw_key: String,
        first: String,
        second: String,
    },
    EmptyCategory {
        attribute: Attribute,
        term: String,
    },
    UnknownAttribute(String),
}

impl LoadIssue {
    /// The key as written in the file.
    fn source_key(&self) -> &str {
        match self {
            LoadIssue::Duplicate { raw_key, .. } => raw_key,
            LoadIssue::EmptyCategory { term, .. } => term,
            LoadIssue::UnknownAttribute(k) => k,
        }
    }
}

fn raise<E: de::Error>(issue: LoadIssue) -> E {
    let msg = match &issue {
        LoadIssue::Duplicate { term, .. } => format!("duplicate key `{term}`"),
        LoadIssue::EmptyCategory { term, .. } => format!("empty category for `{term}`"),
        LoadIssue::UnknownAttribute(k) => format!("unknown attribute `{k}`"),
    };
    LOAD_ISSUE.with(|cell| *cell.borrow_mut() = Some(issue));
    E::custom(msg)
}

struct FileContents {
    attributes: BTreeMap<Attribute, AttributeTaxonomy>,
    targets: BTreeMap<Attribute, usize>,
}

impl<'de> Deserialize<'de> for FileContents {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_map(FileVisitor)
    }
}

struct FileVisitor;

impl<'de> Visitor<'de> for FileVisitor {
    type Value = FileContents;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object keyed by attribute")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
        let mut attributes = BTreeMap::new();
        let mut targets = BTreeMap::new();
        while let Some(key) = access.next_key::<String>()? {
            if key == "_doc" {
                access.next_value::<IgnoredAny>()?;
                continue;
            }
            if key == "_targets" {
                let raw: BTreeMap<String, usize> = access.next_value()?;
                for (k, v) in raw {
                    match Attribute::from_loose_key(&k) {
                        Some(a) if a != Attribute::Name => {
                            targets.insert(a, v);
                        }
                        _ => return Err(raise(LoadIssue::UnknownAttribute(k))),
                    }
                }
                continue;
            }
            let attribute = match Attribute::from_loose_key(&key) {
                Some(a) if a != Attribute::Name => a,
                _ => return Err(raise(LoadIssue::UnknownAttribute(key))),
            };
            let section = access.next_value_seed(SectionSeed { attribute })?;
            match attributes.entry(attribute) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(section);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    // A repeated section is merged, still subject to the
                    // function property.
                    let existing = o.get_mut();
                    for (term, category) in section.terms {
                        if let Some(prev) = existing.terms.get(&term) {
                            if *prev != category {
                                return Err(raise(LoadIssue::Duplicate {
                                    attribute,
                                    raw_key: term.clone(),
                                    term,
                                    first: prev.clone(),
                                    second: category,
                                }));
                            }
                        }
                        existing.terms.insert(term, category);
                    }
                    existing.policy = section.policy;
                }
            }
        }
        Ok(FileContents {
            attributes,
            targets,
        })
    }
}

struct SectionSeed {
    attribute: Attribute,
}

impl<'de> DeserializeSeed<'de> for SectionSeed {
    type Value = AttributeTaxonomy;

    fn deserialize<D: Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        deserializer.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for SectionSeed {
    type Value = AttributeTaxonomy;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object of raw term → category pairs")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
        let mut section = AttributeTaxonomy::default();
        while let Some(key) = access.next_key::<String>()? {
            match key.as_str() {
                "_doc" => {
                    access.next_value::<IgnoredAny>()?;
                }
                "policy" => {
                    let raw: String = access.next_value()?;
                    section.policy = raw.parse().map_err(de::Error::custom)?;
                }
                _ => {
                    let category: String = access.next_value()?;
                    let term = normalize_text(&key);
                    let category = normalize_text(&category);
                    if category.is_empty() || term.is_empty() {
                        return Err(raise(LoadIssue::EmptyCategory {
                            attribute: self.attribute,
                            term: key,
                        }));
                    }
                    if let Some(prev) = section.terms.get(&term) {
                        if *prev != category {
                            return Err(raise(LoadIssue::Duplicate {
                                attribute: self.attribute,
                                term,
                                raw_key: key,
                                first: prev.clone(),
                                second: category,
                            }));
                        }
                    }
                    section.terms.insert(term, category);
                }
            }
        }
        Ok(section)
    }
}

/// Parses taxonomy text. Raw-term keys are normalized on load.
pub fn parse_taxonomy(text: &str) -> Result<TaxonomyMap, TaxonomyError> {
    LOAD_ISSUE.with(|cell| cell.borrow_mut().take());
    match serde_json::from_str::<FileContents>(text) {
        Ok(contents) => Ok(TaxonomyMap {
            attributes: contents.attributes,
            targets: contents.targets,
        }),
        Err(e) => {
            let issue = LOAD_ISSUE.with(|cell| cell.borrow_mut().take());
            let line = match &issue {
                Some(issue) => key_line(text, issue.source_key(), e.line(), e.column()),
                None => e.line(),
            };
            Err(match issue {
                Some(LoadIssue::Duplicate {
                    attribute,
                    term,
                    first,
                    second,
                    ..
                }) => TaxonomyError::DuplicateKey {
                    line,
                    attribute,
                    term,
                    first,
                    second,
                },
                Some(LoadIssue::EmptyCategory { attribute, term }) => {
                    TaxonomyError::EmptyCategory {
                        line,
                        attribute,
                        term,
                    }
                }
                Some(LoadIssue::UnknownAttribute(key)) => {
                    TaxonomyError::UnknownAttribute { line, key }
                }
                None => TaxonomyError::Syntax {
                    line,
                    message: e.to_string(),
                },
            })
        }
    }
}

/// serde_json reports visitor errors at the end of the enclosing object.
/// Walks back to the last occurrence of `key` before that point.
fn key_line(text: &str, key: &str, line: usize, column: usize) -> usize {
    let end = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column;
    let end = end.min(text.len());
    let quoted = serde_json::to_string(key).unwrap_or_default();
    match text.get(..end).and_then(|head| head.rfind(&quoted)) {
        Some(pos) => text[..pos].matches('\n').count() + 1,
        None => line,
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyMap, TaxonomyError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| TaxonomyError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_taxonomy(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnmappedEntry {
    pub attribute: Attribute,
    pub term: String,
    pub count: usize,
}

/// Every raw term not listed in the map, with its record count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UnmappedReport {
    pub entries: Vec<UnmappedEntry>,
}

impl UnmappedReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_records(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

fn canonicalize_record(
    record: &PersonaRecord,
    map: &TaxonomyMap,
) -> ([String; ATTRIBUTE_COUNT], Vec<(Attribute, UnmappedPolicy)>) {
    let mut misses = Vec::new();
    let canonical: [String; ATTRIBUTE_COUNT] = std::array::from_fn(|i| {
        let attribute = Attribute::ALL[i];
        let raw = &record.raw[i];
        if attribute == Attribute::Name {
            return raw.clone();
        }
        match map.lookup(attribute, raw) {
            Lookup::Mapped(category) => category.to_string(),
            Lookup::Unmapped(policy) => {
                if map.attributes.contains_key(&attribute) {
                    misses.push((attribute, policy));
                }
                match policy {
                    UnmappedPolicy::OtherBucket => OTHER_CATEGORY.to_string(),
                    UnmappedPolicy::Passthrough | UnmappedPolicy::Reject => raw.clone(),
                }
            }
        }
    });
    (canonical, misses)
}

/// Fills every record's canonical categories. Record count and order are
/// preserved.
///
/// Under the `reject` policy the first unmapped term (by attribute, then
/// term) is returned as an error; otherwise every unmapped term is listed in
/// the report.
pub fn canonicalize_corpus(
    corpus: &Corpus,
    map: &TaxonomyMap,
) -> Result<(Corpus, UnmappedReport), TaxonomyError> {
    let mapped: Vec<_> = corpus
        .records
        .par_iter()
        .map(|r| canonicalize_record(r, map))
        .collect();

    let mut unmapped: BTreeMap<(Attribute, &str), (usize, UnmappedPolicy)> = BTreeMap::new();
    for (record, (_, misses)) in corpus.records.iter().zip(&mapped) {
        for &(attribute, policy) in misses {
            unmapped
                .entry((attribute, record.raw(attribute)))
                .or_insert((0, policy))
                .0 += 1;
        }
    }
    if let Some(((attribute, term), (count, _))) = unmapped
        .iter()
        .find(|(_, (_, policy))| *policy == UnmappedPolicy::Reject)
    {
        return Err(TaxonomyError::UnmappedTerm {
            attribute: *attribute,
            term: term.to_string(),
            count: *count,
        });
    }

    let mut entries: Vec<UnmappedEntry> = unmapped
        .iter()
        .map(|((attribute, term), (count, _))| UnmappedEntry {
            attribute: *attribute,
            term: term.to_string(),
            count: *count,
        })
        .collect();
    entries.sort_by(|a, b| {
        a.attribute
            .cmp(&b.attribute)
            .then(b.count.cmp(&a.count))
            .then_with(|| a.term.cmp(&b.term))
    });

    let records = corpus
        .records
        .iter()
        .zip(mapped)
        .map(|(r, (canonical, _))| PersonaRecord {
            raw: r.raw.clone(),
            canonical: Some(canonical),
            source: r.source.clone(),
        })
        .collect();
    Ok((
        Corpus {
            model_id: corpus.model_id.clone(),
            records,
            counts: corpus.counts,
        },
        UnmappedReport { entries },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TargetCheck {
    pub attribute: Attribute,
    pub expected: usize,
    pub actual: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<TargetCheck>,
}

impl ValidationReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &TargetCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }

    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Compares the number of distinct categories per attribute with `targets`.
pub fn validate_taxonomy(
    map: &TaxonomyMap,
    targets: &BTreeMap<Attribute, usize>,
) -> ValidationReport {
    let checks = targets
        .iter()
        .map(|(&attribute, &expected)| {
            let actual = map.categories(attribute).len();
            TargetCheck {
                attribute,
                expected,
                actual,
                ok: actual == expected,
            }
        })
        .collect();
    ValidationReport { checks }
}

pub fn reference_targets() -> BTreeMap<Attribute, usize> {
    REFERENCE_TARGETS.into_iter().collect()
}

/// The bundled reference taxonomy file.
pub const REFERENCE_TAXONOMY_JSON: &str = include_str!("../data/reference_taxonomy.json");

/// Parses [`REFERENCE_TAXONOMY_JSON`].
pub fn reference_taxonomy() -> TaxonomyMap {
    parse_taxonomy(REFERENCE_TAXONOMY_JSON).expect("bundled taxonomy is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermCount {
    pub term: String,
    pub count: usize,
}

/// Raw terms behind one canonical category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DrillDownView {
    pub attribute: Attribute,
    pub category: String,
    pub condition: Option<(Attribute, String)>,
    /// Sorted by count descending, then term.
    pub terms: Vec<TermCount>,
}

impl DrillDownView {
    pub fn total(&self) -> usize {
        self.terms.iter().map(|t| t.count).sum()
    }
}

fn known_category(
    corpus: &Corpus,
    map: &TaxonomyMap,
    attribute: Attribute,
    category: &str,
) -> bool {
    map.categories(attribute).contains(category)
        || corpus
            .records
            .iter()
            .any(|r| r.category(attribute) == category)
}

/// Expands `category` back into its raw source terms, optionally restricted
/// to records whose `condition.0` category equals `condition.1`.
pub fn drill_down(
    corpus: &Corpus,
    map: &TaxonomyMap,
    attribute: Attribute,
    category: &str,
    condition: Option<(Attribute, &str)>,
) -> Result<DrillDownView, TaxonomyError> {
    if !known_category(corpus, map, attribute, category) {
        return Err(TaxonomyError::UnknownCategory {
            attribute,
            category: category.to_string(),
        });
    }
    if let Some((cond_attr, cond_cat)) = condition {
        if !known_category(corpus, map, cond_attr, cond_cat) {
            return Err(TaxonomyError::UnknownCategory {
                attribute: cond_attr,
                category: cond_cat.to_string(),
            });
        }
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &corpus.records {
        if r.category(attribute) != category {
            continue;
        }
        if let Some((cond_attr, cond_cat)) = condition {
            if r.category(cond_attr) != cond_cat {
                continue;
            }
        }
        *counts.entry(r.raw(attribute)).or_default() += 1;
    }
    let mut terms: Vec<TermCount> = counts
        .into_iter()
        .map(|(term, count)| TermCount {
            term: term.to_string(),
            count,
        })
        .collect();
    terms.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
    Ok(DrillDownView {
        attribute,
        category: category.to_string(),
        condition: condition.map(|(a, c)| (a, c.to_string())),
        terms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub category: String,
    pub count: usize,
    pub percent: f64,
}

/// Distribution over `over` categories among records whose raw `attribute`
/// value is `term` (e.g. the gender split of the raw occupation "nurse").
pub fn raw_term_breakdown(
    corpus: &Corpus,
    attribute: Attribute,
    term: &str,
    over: Attribute,
) -> Vec<CategoryShare> {
    let term = normalize_text(term);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in corpus.records.iter().filter(|r| r.raw(attribute) == term) {
        *counts.entry(r.category(over)).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(category, count)| CategoryShare {
            category: category.to_string(),
            count,
            percent: 100.0 * count as f64 / total as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::Source;

    fn record(fields: [&str; 8]) -> PersonaRecord {
        PersonaRecord::new(
            fields.map(str::to_string),
            Source {
                model_id: "m".into(),
                run_id: "r".into(),
                index: 0,
            },
        )
    }

    fn corpus(rows: &[[&str; 8]]) -> Corpus {
        Corpus::from_parsed("m", rows.iter().map(|f| record(*f)).collect(), 0)
    }

    #[test]
    fn high_school_consolidation() {
        let map = parse_taxonomy(
            r#"{"education_level": {"Secondary School": "High School", "higher secondary": "high school"}}"#,
        )
        .unwrap();
        let section = map.section(Attribute::EducationLevel).unwrap();
        assert_eq!(
            section.categories().into_iter().collect::<Vec<_>>(),
            ["high school"]
        );
        let sources: Vec<&String> = section
            .terms
            .iter()
            .filter(|(_, c)| *c == "high school")
            .map(|(t, _)| t)
            .collect();
        assert_eq!(sources, ["higher secondary", "secondary school"]);
    }

    #[test]
    fn duplicate_key_names_line() {
        let text = "{\n  \"occupation\": {\n    \"nurse\": \"healthcare\",\n    \"Nurse\": \"education\"\n  }\n}";
        match parse_taxonomy(text) {
            Err(TaxonomyError::DuplicateKey { line, term, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(term, "nurse");
            }
            other => panic!("unexpected {other:?}"),
        }
        // Same target twice is not a conflict.
        assert!(parse_taxonomy(r#"{"gender": {"f": "female", "F": "female"}}"#).is_ok());
    }

    #[test]
    fn empty_category_and_unknown_attribute() {
        let err = parse_taxonomy("{\"gender\": {\"f\": \"  \"}}").unwrap_err();
        assert!(
            matches!(err, TaxonomyError::EmptyCategory { line: 1, .. }),
            "{err:?}"
        );
        let err = parse_taxonomy("{\n\"age\": {}\n}").unwrap_err();
        assert!(
            matches!(err, TaxonomyError::UnknownAttribute { line: 2, ref key } if key == "age"),
            "{err:?}"
        );
        let err = parse_taxonomy("{\"name\": {}}").unwrap_err();
        assert!(matches!(err, TaxonomyError::UnknownAttribute { .. }));
        let err = parse_taxonomy("{\"gender\": ").unwrap_err();
        assert!(matches!(err, TaxonomyError::Syntax { .. }));
    }

    #[test]
    fn identity_map_is_noop() {
        let c = corpus(&[
            [
                "a", "female", "asian", "gay", "middle", "phd", "nurse", "art",
            ],
            [
                "b", "male", "white", "straight", "upper", "ba", "pilot", "golf",
            ],
        ]);
        let text = r#"{
            "gender": {"female": "female", "male": "male"},
            "occupation": {"nurse": "nurse", "pilot": "pilot"}
        }"#;
        let map = parse_taxonomy(text).unwrap();
        let (out, report) = canonicalize_corpus(&c, &map).unwrap();
        assert!(report.is_empty());
        for r in &out.records {
            assert_eq!(r.canonical.as_ref().unwrap(), &r.raw);
        }
        // and again: re-canonicalizing is stable
        let (again, _) = canonicalize_corpus(&out, &map).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn additivity_and_other_bucket() {
        let c = corpus(&[
            ["a", "f", "x", "s", "c", "phd", "nurse", "i"],
            ["b", "f", "x", "s", "c", "phd", "nurse", "i"],
            ["c", "f", "x", "s", "c", "doctorate", "nurse", "i"],
            ["d", "f", "x", "s", "c", "bachelor", "astro-gardener", "i"],
        ]);
        let map = parse_taxonomy(
            r#"{"education_level": {"phd": "doctorate", "doctorate": "doctorate", "bachelor": "bachelor"},
                "occupation": {"nurse": "healthcare"}}"#,
        )
        .unwrap();
        let (out, report) = canonicalize_corpus(&c, &map).unwrap();
        let doctorate = out
            .records
            .iter()
            .filter(|r| r.category(Attribute::EducationLevel) == "doctorate")
            .count();
        assert_eq!(doctorate, 3);
        assert_eq!(
            out.records[3].category(Attribute::Occupation),
            OTHER_CATEGORY
        );
        assert_eq!(
            report.entries,
            vec![UnmappedEntry {
                attribute: Attribute::Occupation,
                term: "astro-gardener".into(),
                count: 1
            }]
        );
        assert_eq!(out.len(), c.len());
    }

    #[test]
    fn reject_policy() {
        let c = corpus(&[["a", "f", "x", "s", "c", "e", "astro-gardener", "i"]]);
        let map = parse_taxonomy(r#"{"occupation": {"policy": "reject", "nurse": "healthcare"}}"#)
            .unwrap();
        assert_eq!(
            canonicalize_corpus(&c, &map).unwrap_err(),
            TaxonomyError::UnmappedTerm {
                attribute: Attribute::Occupation,
                term: "astro-gardener".into(),
                count: 1
            }
        );
        let map =
            parse_taxonomy(r#"{"occupation": {"policy": "passthrough", "nurse": "healthcare"}}"#)
                .unwrap();
        let (out, report) = canonicalize_corpus(&c, &map).unwrap();
        assert_eq!(
            out.records[0].category(Attribute::Occupation),
            "astro-gardener"
        );
        assert_eq!(report.entries.len(), 1);
    }

    #[test]
    fn validation() {
        let map = parse_taxonomy(
            r#"{"gender": {"m": "male", "f": "female", "nb": "non-binary", "x": "agender"}}"#,
        )
        .unwrap();
        let mut targets = BTreeMap::new();
        targets.insert(Attribute::Gender, 3);
        let report = validate_taxonomy(&map, &targets);
        assert_eq!(report.mismatches().count(), 1);
        assert_eq!(report.checks[0].actual, 4);
        assert!(validate_taxonomy(&map, &BTreeMap::new()).checks.is_empty());
    }

    #[test]
    fn reference_taxonomy_hits_targets() {
        let map = reference_taxonomy();
        let report = validate_taxonomy(&map, &reference_targets());
        assert!(
            report.all_ok(),
            "{:?}",
            report.mismatches().collect::<Vec<_>>()
        );
        assert_eq!(map.declared_targets(), &reference_targets());
        let (c, _) = canonicalize_corpus(
            &corpus(&[[
                "ana",
                "woman",
                "latina",
                "straight",
                "working class",
                "ged",
                "registered nurse",
                "hiking",
            ]]),
            &map,
        )
        .unwrap();
        let r = &c.records[0];
        assert_eq!(r.category(Attribute::Gender), "female");
        assert_eq!(r.category(Attribute::Ethnicity), "hispanic or latino");
        assert_eq!(r.category(Attribute::SocialClass), "lower class");
        assert_eq!(r.category(Attribute::EducationLevel), "high school");
        assert_eq!(r.category(Attribute::Occupation), "healthcare");
        assert_eq!(
            r.category(Attribute::TopPersonalInterest),
            "outdoor activities"
        );
    }

    #[test]
    fn drill_down_healthcare() {
        let c = corpus(&[
            ["a", "female", "x", "s", "c", "e", "nurse", "1"],
            ["b", "female", "x", "s", "c", "e", "nurse", "2"],
            ["c", "male", "x", "s", "c", "e", "nurse", "3"],
            ["d", "male", "x", "s", "c", "e", "doctor", "4"],
            ["e", "male", "x", "s", "c", "e", "pilot", "5"],
        ]);
        let map = parse_taxonomy(
            r#"{"occupation": {"nurse": "healthcare", "doctor": "healthcare", "pilot": "transport"}}"#,
        )
        .unwrap();
        let (c, _) = canonicalize_corpus(&c, &map).unwrap();
        let view = drill_down(&c, &map, Attribute::Occupation, "healthcare", None).unwrap();
        assert_eq!(
            view.terms[0],
            TermCount {
                term: "nurse".into(),
                count: 3
            }
        );
        assert_eq!(
            view.terms[1],
            TermCount {
                term: "doctor".into(),
                count: 1
            }
        );
        assert_eq!(view.total(), 4);

        let single = drill_down(&c, &map, Attribute::Occupation, "transport", None).unwrap();
        assert_eq!(single.terms.len(), 1);
        assert_eq!(single.total(), 1);

        let male = drill_down(
            &c,
            &map,
            Attribute::Occupation,
            "healthcare",
            Some((Attribute::Gender, "male")),
        )
        .unwrap();
        assert_eq!(male.total(), 2);

        assert!(matches!(
            drill_down(&c, &map, Attribute::Occupation, "astronomy", None),
            Err(TaxonomyError::UnknownCategory { .. })
        ));

        let nurse = raw_term_breakdown(&c, Attribute::Occupation, "Nurse", Attribute::Gender);
        assert_eq!(nurse.len(), 2);
        assert_eq!(nurse[0].category, "female");
        assert!((nurse[0].percent - 200.0 / 3.0).abs() < 1e-12);
    }
}
