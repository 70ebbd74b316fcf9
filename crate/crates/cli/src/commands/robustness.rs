use std::path::PathBuf;

use pba_core::association::{audit_dimensions, TableOptions, DEFAULT_MIN_SUPPORT};
use pba_core::report::{agreement_csv, agreement_markdown, audit_json, ArtifactMeta};
use pba_core::robustness::agreement_table;
use pba_core::{AuditMatrix, BiasDimension, Corpus};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::commands::audit::{canonicalize_all, dimensions_or_standard, load_corpora, name_pool};
use crate::context::{emit, load_audit, split_list, write_json, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct RobustnessArgs {
    /// Condition as NAME=AUDIT[,AUDIT...] (repeat, in order; at least two).
    #[arg(long = "condition", value_name = "NAME=FILES")]
    conditions: Vec<String>,
    /// Sample sizes for sample-size mode, e.g. 5000,10000,15000,20000.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Corpora to subsample in sample-size mode (repeatable).
    #[arg(long = "corpus")]
    corpora: Vec<PathBuf>,
    /// Size of the pooled top-k name filter (sample-size mode).
    #[arg(long, default_value_t = 50)]
    names: usize,
    /// Minimum records for a composite identity row (sample-size mode).
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: u64,
    /// Dimension to score in sample-size mode (repeatable; default: standard 16).
    #[arg(long = "dimension")]
    dimensions: Vec<BiasDimension>,
}

/// Seeded uniform draw of `size` records without replacement, kept in
/// corpus order. The stream depends on (seed, model, size) only.
pub fn subsample(corpus: &Corpus, size: usize, seed: u64) -> Result<Corpus, CliError> {
    if size > corpus.len() {
        return Err(CliError::Data(format!(
            "{} has {} records, cannot draw {size}",
            corpus.model_id,
            corpus.len()
        )));
    }
    let key = Sha256::digest(format!("{seed}:{}:{size}", corpus.model_id).as_bytes());
    let stream_seed = u64::from_le_bytes(key[..8].try_into().expect("digest has 32 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut picked = sample(&mut rng, corpus.len(), size).into_vec();
    picked.sort_unstable();
    Ok(Corpus {
        model_id: corpus.model_id.clone(),
        records: picked
            .into_iter()
            .map(|i| corpus.records[i].clone())
            .collect(),
        counts: corpus.counts,
    })
}

fn parse_condition(spec: &str) -> Result<(String, Vec<PathBuf>), CliError> {
    let (name, files) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("condition `{spec}` is not NAME=FILES")))?;
    let files: Vec<PathBuf> = split_list(files).into_iter().map(PathBuf::from).collect();
    if name.trim().is_empty() || files.is_empty() {
        return Err(CliError::Usage(format!(
            "condition `{spec}` is not NAME=FILES"
        )));
    }
    Ok((name.trim().to_string(), files))
}

pub fn run(ctx: &Context, args: RobustnessArgs) -> Result<(), CliError> {
    let sample_mode = !args.sizes.is_empty() || !args.corpora.is_empty();
    if sample_mode == !args.conditions.is_empty() {
        return Err(CliError::Usage(
            "give either --condition (at least two) or --sizes with --corpus".into(),
        ));
    }
    let (conditions, inputs, config) = if sample_mode {
        sample_size_conditions(ctx, &args)?
    } else {
        if args.conditions.len() < 2 {
            return Err(CliError::Usage(
                "at least two --condition entries are needed".into(),
            ));
        }
        let mut conditions = Vec::new();
        let mut inputs = Vec::new();
        let mut names = Vec::new();
        for spec in &args.conditions {
            let (name, files) = parse_condition(spec)?;
            let mut audits = Vec::new();
            for f in &files {
                let (audit, digest) = load_audit(f)?;
                audits.push(audit);
                inputs.push(digest);
            }
            names.push(name.clone());
            conditions.push((name, audits));
        }
        let config = json!({ "command": "robustness", "mode": "conditions", "conditions": names });
        (conditions, inputs, config)
    };

    let rows = agreement_table(&conditions)?;
    let meta = ArtifactMeta::new(inputs, config);
    let condition_names: Vec<&str> = conditions.iter().map(|(n, _)| n.as_str()).collect();
    emit(
        &ctx.dir("")?,
        "agreement",
        ctx.format,
        &meta,
        || json!({ "artifact": meta, "conditions": condition_names, "rows": rows }),
        || Ok(agreement_csv(&rows)?),
        || Ok(agreement_markdown(&rows)),
    )?;
    print!("{}", agreement_markdown(&rows));
    Ok(())
}

type Conditions = (
    Vec<(String, Vec<AuditMatrix>)>,
    Vec<pba_core::report::InputDigest>,
    serde_json::Value,
);

fn sample_size_conditions(ctx: &Context, args: &RobustnessArgs) -> Result<Conditions, CliError> {
    if args.sizes.len() < 2 || args.corpora.is_empty() {
        return Err(CliError::Usage(
            "sample-size mode needs at least two --sizes and one --corpus".into(),
        ));
    }
    let seed = ctx.seed.unwrap_or(0);
    let (map, taxonomy_digest) = ctx.load_taxonomy()?;
    let loaded = load_corpora(&args.corpora)?;
    let canonical: Vec<Corpus> = canonicalize_all(&loaded, &map)
        .into_iter()
        .map(|r| r.map(|(c, _)| c))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Corpus> = canonical.iter().collect();
    let (pool, _) = name_pool(&refs, args.names, None)?;
    let dims = dimensions_or_standard(&args.dimensions);
    let opts = TableOptions {
        name_filter: Some(&pool),
        min_support: args.min_support,
    };
    let config = json!({
        "command": "robustness",
        "mode": "sample_size",
        "sizes": args.sizes,
        "seed": seed,
        "names": args.names,
        "min_support": args.min_support,
        "dimensions": dims,
    });

    let mut inputs = vec![taxonomy_digest];
    inputs.extend(loaded.iter().map(|(_, d)| d.clone()));
    let mut conditions = Vec::with_capacity(args.sizes.len());
    for &size in &args.sizes {
        let audits: Vec<AuditMatrix> = canonical
            .par_iter()
            .map(|c| subsample(c, size, seed).map(|s| audit_dimensions(&s, &dims, opts)))
            .collect::<Result<_, _>>()?;
        let name = format!("n{size}");
        let dir = ctx.dir(&format!("robustness/{name}"))?;
        for (audit, (_, digest)) in audits.iter().zip(&loaded) {
            let meta = ArtifactMeta::new(
                vec![inputs[0].clone(), digest.clone()],
                json!({ "command": "robustness", "sample_size": size, "seed": seed, "config": config }),
            );
            write_json(
                &dir.join(format!("{}.audit.json", audit.model_id)),
                &audit_json(audit, &meta, &pool),
            )?;
        }
        conditions.push((name, audits));
    }
    Ok((conditions, inputs, config))
}
