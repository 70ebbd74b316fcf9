use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pba_core::association::{audit_dimensions, TableOptions, DEFAULT_MIN_SUPPORT};
use pba_core::corpus::{top_k_names, CorpusError};
use pba_core::report::{
    audit_json, combined_csv, combined_json, combined_markdown, radar_csv, ArtifactMeta,
    InputDigest,
};
use pba_core::taxonomy::{canonicalize_corpus, UnmappedReport};
use pba_core::text::normalize_text;
use pba_core::{AuditMatrix, BiasDimension, Corpus, TaxonomyMap};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::context::{digest_of, load_corpus, read_bytes, write_csv, write_json, Context, Format};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct AuditArgs {
    /// Corpus files (JSON lines), one model each.
    #[arg(required = true)]
    corpora: Vec<PathBuf>,
    /// Size of the pooled top-k name filter for name dimensions.
    #[arg(long, default_value_t = 50)]
    names: usize,
    /// Fixed name pool (JSON array) instead of the pooled top-k.
    #[arg(long)]
    name_pool: Option<PathBuf>,
    /// Minimum records for a composite identity row.
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: u64,
    /// Dimension to score, e.g. gender_x_occupation (repeatable; default: the 16 standard ones).
    #[arg(long = "dimension")]
    dimensions: Vec<BiasDimension>,
}

/// Reads corpora in the given order and rejects repeated model ids.
pub fn load_corpora(paths: &[PathBuf]) -> Result<Vec<(Corpus, InputDigest)>, CliError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let (corpus, digest) = load_corpus(path)?;
        if !seen.insert(corpus.model_id.clone()) {
            return Err(CliError::Usage(format!(
                "model id `{}` appears in more than one corpus",
                corpus.model_id
            )));
        }
        out.push((corpus, digest));
    }
    Ok(out)
}

pub type Canonicalized = Result<(Corpus, UnmappedReport), CliError>;

pub fn canonicalize_all(
    corpora: &[(Corpus, InputDigest)],
    map: &TaxonomyMap,
) -> Vec<Canonicalized> {
    corpora
        .par_iter()
        .map(|(c, _)| canonicalize_corpus(c, map).map_err(CliError::from))
        .collect()
}

/// The shared name filter: read from `file`, or the `k` most frequent names
/// pooled over `corpora`. A shorter pool is used when fewer names exist.
pub fn name_pool(
    corpora: &[&Corpus],
    k: usize,
    file: Option<&Path>,
) -> Result<(Vec<String>, Option<InputDigest>), CliError> {
    if let Some(path) = file {
        let names: Vec<String> = serde_json::from_slice(&read_bytes(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let pool = names.iter().map(|n| normalize_text(n)).collect();
        return Ok((pool, Some(digest_of(path)?)));
    }
    match top_k_names(corpora, k) {
        Ok(pool) => Ok((pool, None)),
        Err(CorpusError::InsufficientNames {
            found,
            requested,
            names,
        }) => {
            tracing::warn!(found, requested, "fewer distinct names than requested");
            Ok((names, None))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn dimensions_or_standard(dims: &[BiasDimension]) -> Vec<BiasDimension> {
    if dims.is_empty() {
        BiasDimension::standard()
    } else {
        dims.to_vec()
    }
}

pub fn run(ctx: &Context, args: AuditArgs) -> Result<(), CliError> {
    let (map, taxonomy_digest) = ctx.load_taxonomy()?;
    let loaded = load_corpora(&args.corpora)?;
    let canonical = canonicalize_all(&loaded, &map);
    let ok: Vec<&Corpus> = canonical
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|(c, _)| c)
        .collect();
    let (pool, pool_digest) = name_pool(&ok, args.names, args.name_pool.as_deref())?;
    let dims = dimensions_or_standard(&args.dimensions);
    let opts = TableOptions {
        name_filter: Some(&pool),
        min_support: args.min_support,
    };
    let audits: Vec<Option<AuditMatrix>> = canonical
        .par_iter()
        .map(|r| {
            r.as_ref()
                .ok()
                .map(|(c, _)| audit_dimensions(c, &dims, opts))
        })
        .collect();

    let config = json!({
        "command": "audit",
        "names": args.names,
        "min_support": args.min_support,
        "dimensions": dims,
    });
    let shared_inputs = |corpus: Option<&InputDigest>| -> Vec<InputDigest> {
        let mut inputs = vec![taxonomy_digest.clone()];
        inputs.extend(pool_digest.clone());
        inputs.extend(corpus.cloned());
        inputs
    };

    let audit_dir = ctx.dir("audit")?;
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (((corpus, digest), result), audit) in loaded.iter().zip(&canonical).zip(audits) {
        let meta = ArtifactMeta::new(shared_inputs(Some(digest)), config.clone());
        match (result, audit) {
            (Ok((_, unmapped)), Some(audit)) => {
                let stem = &audit.model_id;
                write_json(
                    &audit_dir.join(format!("{stem}.audit.json")),
                    &audit_json(&audit, &meta, &pool),
                )?;
                write_json(
                    &audit_dir.join(format!("{stem}.unmapped.json")),
                    &json!({ "artifact": meta, "model_id": stem, "unmapped": unmapped.entries }),
                )?;
                done.push(audit);
            }
            (Err(e), _) => {
                tracing::error!(model = %corpus.model_id, error = %e, "audit failed");
                failures.push(json!({ "model_id": corpus.model_id, "error": e.to_string() }));
            }
            (Ok(_), None) => unreachable!("every canonicalized corpus is audited"),
        }
    }

    let all_inputs = {
        let mut inputs = vec![taxonomy_digest.clone()];
        inputs.extend(pool_digest.clone());
        inputs.extend(loaded.iter().map(|(_, d)| d.clone()));
        inputs
    };
    let meta = ArtifactMeta::new(all_inputs, config);
    let out = ctx.dir("")?;
    let combined_path = out.join(format!("combined.{}", ctx.format.extension()));
    match ctx.format {
        Format::Json => {
            let mut value = combined_json(&done, &meta, &pool);
            if let Value::Object(m) = &mut value {
                m.insert("failures".into(), Value::Array(failures.clone()));
            }
            write_json(&combined_path, &value)?;
        }
        Format::Csv => write_csv(&combined_path, &meta, &combined_csv(&done)?)?,
        Format::Md => crate::context::write_md(&combined_path, &meta, &combined_markdown(&done))?,
    }
    write_csv(&out.join("radar.csv"), &meta, &radar_csv(&done)?)?;
    print!("{}", combined_markdown(&done));

    if !failures.is_empty() {
        return Err(CliError::Data(format!(
            "{} of {} corpora could not be audited",
            failures.len(),
            loaded.len()
        )));
    }
    Ok(())
}
