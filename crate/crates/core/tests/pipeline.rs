//! Synthetic corpus → reference taxonomy → audit, checked against a
//! closed-form population value and frozen results.

use std::path::PathBuf;

use pba_core::association::{audit_model, Severity};
use pba_core::corpus::top_k_names;
use pba_core::generation::{synthetic_generate, CategoricalSpec, SyntheticSpec};
use pba_core::taxonomy::{canonicalize_corpus, reference_taxonomy};
use pba_core::{Attribute, AuditMatrix, BiasDimension};

fn spec(lambda: f64) -> SyntheticSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synth_spec.json");
    let mut spec: SyntheticSpec =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    spec.binding.as_mut().unwrap().lambda = lambda;
    spec
}

fn audit(spec: &SyntheticSpec) -> AuditMatrix {
    let corpus = synthetic_generate(spec, 10_000).unwrap();
    let (corpus, unmapped) = canonicalize_corpus(&corpus, &reference_taxonomy()).unwrap();
    assert!(
        unmapped.is_empty(),
        "fixture terms missing from the reference taxonomy"
    );
    let names = top_k_names(&[&corpus], 6).unwrap();
    audit_model(&corpus, &names)
}

/// Cramér's V of the population joint distribution implied by the spec's
/// mixture: with probability λ the occupation comes from the identity's
/// conditional row, otherwise from the marginal.
fn population_v(spec: &SyntheticSpec) -> f64 {
    let b = spec.binding.as_ref().unwrap();
    let identity = &spec.attributes[&b.identity];
    let social = &spec.attributes[&b.social];
    let rows: Vec<Vec<f64>> = identity
        .categories
        .iter()
        .zip(&identity.weights)
        .map(|(c, &pi)| {
            social
                .weights
                .iter()
                .zip(&b.conditional[c])
                .map(|(&m, &cond)| pi * ((1.0 - b.lambda) * m + b.lambda * cond))
                .collect()
        })
        .collect();
    let col: Vec<f64> = (0..social.categories.len())
        .map(|j| rows.iter().map(|r| r[j]).sum())
        .collect();
    let mut phi2 = -1.0;
    for (r, &pi) in rows.iter().zip(&identity.weights) {
        for (p, pj) in r.iter().zip(&col) {
            if *pj > 0.0 {
                phi2 += p * p / (pi * pj);
            }
        }
    }
    let df = (identity.categories.len() - 1).min(social.categories.len() - 1) as f64;
    (phi2 / df).sqrt()
}

fn bound_v(spec: &SyntheticSpec, names: usize) -> f64 {
    let corpus = synthetic_generate(spec, 10_000).unwrap();
    let (corpus, _) = canonicalize_corpus(&corpus, &reference_taxonomy()).unwrap();
    let names = top_k_names(&[&corpus], names).unwrap();
    audit_model(&corpus, &names)
        .score(&BiasDimension::single(
            Attribute::Gender,
            Attribute::Occupation,
        ))
        .unwrap()
        .raw_v
}

#[test]
fn bound_cell_tracks_the_population_value() {
    // With 2000 names duplicates are rare, so the sample follows the mixture.
    for lambda in [0.25, 0.5, 0.75] {
        let mut spec = spec(lambda);
        let names: Vec<String> = (0..2000).map(|i| format!("name{i}")).collect();
        spec.attributes
            .insert(Attribute::Name, CategoricalSpec::uniform(names));
        let got = bound_v(&spec, 50);
        let want = population_v(&spec);
        assert!(
            (got - want).abs() < 0.02,
            "λ = {lambda}: V = {got}, population {want}"
        );
    }
}

#[test]
fn deduplication_attenuates_the_bound_cell() {
    // Bound draws share fewer distinct tuples, so more of them are dropped as
    // duplicates when collecting until 10k unique profiles.
    for lambda in [0.5, 0.75] {
        let spec = spec(lambda);
        let got = bound_v(&spec, 6);
        let want = population_v(&spec);
        assert!(got < want, "λ = {lambda}: V = {got}, population {want}");
    }
}

// Frozen from the current implementation; a change here means the generator,
// the reference taxonomy or the scoring changed.
const FROZEN_HALF: [(&str, f64, &str); 16] = [
    ("name_x_social_class", 0.01469832666394132, "small"),
    ("name_x_education_level", 0.02075489727723583, "small"),
    ("name_x_occupation", 0.024_929_220_221_488, "small"),
    (
        "name_x_top_personal_interest",
        0.019_686_294_240_284_5,
        "small",
    ),
    ("gender_x_social_class", 0.017_242_874_345_463_1, "small"),
    ("gender_x_education_level", 0.01406032254238648, "small"),
    ("gender_x_occupation", 0.569_324_976_131_953_1, "very_high"),
    (
        "gender_x_top_personal_interest",
        0.01312706501937548,
        "small",
    ),
    ("ethnicity_x_social_class", 0.01766802610059898, "small"),
    ("ethnicity_x_education_level", 0.02000941886781548, "small"),
    ("ethnicity_x_occupation", 0.029_719_846_416_316_9, "small"),
    (
        "ethnicity_x_top_personal_interest",
        0.02082601509245105,
        "small",
    ),
    (
        "sexual_orientation_x_social_class",
        0.01590322725065121,
        "small",
    ),
    (
        "sexual_orientation_x_education_level",
        0.014_960_998_684_598_3,
        "small",
    ),
    (
        "sexual_orientation_x_occupation",
        0.03146566495533071,
        "small",
    ),
    (
        "sexual_orientation_x_top_personal_interest",
        0.01841508299191525,
        "small",
    ),
];

#[test]
fn half_lambda_audit_is_frozen() {
    let audit = audit(&spec(0.5));
    assert_eq!(audit.entries.len(), FROZEN_HALF.len());
    for ((dim, outcome), (key, v, severity)) in audit.entries.iter().zip(FROZEN_HALF) {
        let score = outcome.score().unwrap();
        assert_eq!(dim.key(), key);
        assert_eq!(score.n, 10_000, "{key}");
        assert!(
            (score.raw_v - v).abs() < 1e-12,
            "{key}: {} vs {v}",
            score.raw_v
        );
        assert_eq!(score.severity.as_str(), severity, "{key}");
    }
    let mean = audit.mean_normalized.unwrap();
    assert!((mean - 0.20993132417804825).abs() < 1e-12, "{mean}");
}

#[test]
fn unbound_dimensions_stay_small() {
    for lambda in [0.0, 0.5, 1.0] {
        let audit = audit(&spec(lambda));
        let bound = BiasDimension::single(Attribute::Gender, Attribute::Occupation);
        for (dim, outcome) in &audit.entries {
            if *dim != bound {
                assert_eq!(
                    outcome.score().unwrap().severity,
                    Severity::Small,
                    "λ = {lambda}: {}",
                    dim.key()
                );
            }
        }
    }
}
