use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use pba_core::association::{
    build_contingency, l1_gap, top_k_conditional, TableOptions, DEFAULT_MIN_SUPPORT,
};
use pba_core::report::{
    breakdown_csv, drill_down_csv, heatmap_csv, l1_gaps_csv, l1_gaps_markdown, trajectory,
    trajectory_csv, trajectory_markdown, ArtifactMeta, L1GapRow,
};
use pba_core::taxonomy::{drill_down, raw_term_breakdown};
use pba_core::{Attribute, BiasDimension, Corpus};
use serde_json::json;

use crate::commands::audit::{canonicalize_all, load_corpora, name_pool};
use crate::context::{emit, load_audit, write_csv, write_json, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Audit files written by `pba audit`.
    #[arg(required = true)]
    audits: Vec<PathBuf>,
    /// Model ids in lineage order, comma separated (default: audit file order).
    #[arg(long, value_delimiter = ',')]
    lineage: Vec<String>,
    /// Corpora for heatmaps, drill-downs and L1 gaps (repeatable).
    #[arg(long = "corpus")]
    corpora: Vec<PathBuf>,
    /// Dimension to export as heatmap data (repeatable).
    #[arg(long = "heatmap")]
    heatmaps: Vec<BiasDimension>,
    /// Social categories kept per identity row in the top-k heatmap summary.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Drill-down ATTRIBUTE:CATEGORY[:ATTRIBUTE=CATEGORY], e.g. occupation:healthcare:gender=female.
    #[arg(long = "drill")]
    drills: Vec<String>,
    /// Breakdown ATTRIBUTE:RAW_TERM:OVER, e.g. occupation:nurse:gender.
    #[arg(long = "breakdown")]
    breakdowns: Vec<String>,
    /// L1 gap DIMENSION:GROUP_A:GROUP_B (default gender_x_occupation:male:female).
    #[arg(long = "l1")]
    l1: Vec<String>,
    /// Size of the pooled top-k name filter for name heatmaps.
    #[arg(long, default_value_t = 50)]
    names: usize,
    /// Minimum records for a composite identity row.
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    min_support: u64,
}

struct Drill {
    attribute: Attribute,
    category: String,
    condition: Option<(Attribute, String)>,
}

fn attribute(s: &str) -> Result<Attribute, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn parse_drill(spec: &str) -> Result<Drill, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "drill-down `{spec}` is not ATTRIBUTE:CATEGORY[:ATTRIBUTE=CATEGORY]"
        ))
    };
    let mut parts = spec.splitn(3, ':');
    let attr = parts.next().ok_or_else(bad)?;
    let category = parts
        .next()
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(bad)?;
    let condition = match parts.next() {
        Some(cond) => {
            let (a, c) = cond.split_once('=').ok_or_else(bad)?;
            Some((attribute(a)?, c.trim().to_lowercase()))
        }
        None => None,
    };
    Ok(Drill {
        attribute: attribute(attr)?,
        category: category.trim().to_lowercase(),
        condition,
    })
}

fn parse_breakdown(spec: &str) -> Result<(Attribute, String, Attribute), CliError> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    match parts.as_slice() {
        [a, term, over] if !term.trim().is_empty() => {
            Ok((attribute(a)?, term.trim().to_string(), attribute(over)?))
        }
        _ => Err(CliError::Usage(format!(
            "breakdown `{spec}` is not ATTRIBUTE:TERM:OVER"
        ))),
    }
}

fn parse_l1(spec: &str) -> Result<(BiasDimension, String, String), CliError> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    match parts.as_slice() {
        [dim, a, b] if !a.trim().is_empty() && !b.trim().is_empty() => Ok((
            dim.parse()?,
            a.trim().to_lowercase(),
            b.trim().to_lowercase(),
        )),
        _ => Err(CliError::Usage(format!(
            "L1 gap `{spec}` is not DIMENSION:GROUP_A:GROUP_B"
        ))),
    }
}

/// File-name-safe form of a label.
fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

pub fn run(ctx: &Context, args: ReportArgs) -> Result<(), CliError> {
    let drills: Vec<Drill> = args
        .drills
        .iter()
        .map(|d| parse_drill(d))
        .collect::<Result<_, _>>()?;
    let breakdowns = args
        .breakdowns
        .iter()
        .map(|b| parse_breakdown(b))
        .collect::<Result<Vec<_>, _>>()?;
    let l1_specs = if args.l1.is_empty() {
        vec!["gender_x_occupation:male:female".to_string()]
    } else {
        args.l1.clone()
    };
    let l1_specs = l1_specs
        .iter()
        .map(|s| parse_l1(s))
        .collect::<Result<Vec<_>, _>>()?;

    let mut audits = Vec::new();
    let mut inputs = Vec::new();
    let mut seen = BTreeSet::new();
    for path in &args.audits {
        let (audit, digest) = load_audit(path)?;
        if !seen.insert(audit.model_id.clone()) {
            return Err(CliError::Usage(format!(
                "model `{}` given twice",
                audit.model_id
            )));
        }
        audits.push(audit);
        inputs.push(digest);
    }
    let lineage = if args.lineage.is_empty() {
        audits.iter().map(|a| a.model_id.clone()).collect()
    } else {
        args.lineage.clone()
    };
    let view = trajectory(&audits, &lineage)?;
    let meta = ArtifactMeta::new(inputs, json!({ "command": "report", "lineage": lineage }));
    let out = ctx.dir("")?;
    emit(
        &out,
        "trajectory",
        ctx.format,
        &meta,
        || json!({ "artifact": meta, "trajectory": view }),
        || Ok(trajectory_csv(&view)?),
        || Ok(trajectory_markdown(&view)),
    )?;
    print!("{}", trajectory_markdown(&view));

    if args.corpora.is_empty() {
        if !args.heatmaps.is_empty()
            || !drills.is_empty()
            || !breakdowns.is_empty()
            || !args.l1.is_empty()
        {
            return Err(CliError::Usage(
                "heatmaps, drill-downs, breakdowns and L1 gaps need --corpus".into(),
            ));
        }
        return Ok(());
    }
    corpus_views(ctx, &args, &drills, &breakdowns, &l1_specs)
}

fn corpus_views(
    ctx: &Context,
    args: &ReportArgs,
    drills: &[Drill],
    breakdowns: &[(Attribute, String, Attribute)],
    l1_specs: &[(BiasDimension, String, String)],
) -> Result<(), CliError> {
    let (map, taxonomy_digest) = ctx.load_taxonomy()?;
    let loaded = load_corpora(&args.corpora)?;
    let canonical: Vec<Corpus> = canonicalize_all(&loaded, &map)
        .into_iter()
        .map(|r| r.map(|(c, _)| c))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Corpus> = canonical.iter().collect();
    let (pool, _) = name_pool(&refs, args.names, None)?;
    let opts = TableOptions {
        name_filter: Some(&pool),
        min_support: args.min_support,
    };
    let config = json!({
        "command": "report",
        "heatmaps": args.heatmaps,
        "top_k": args.top_k,
        "drills": args.drills,
        "breakdowns": args.breakdowns,
        "l1": l1_specs.iter().map(|(d, a, b)| format!("{d}:{a}:{b}")).collect::<Vec<_>>(),
        "names": args.names,
        "min_support": args.min_support,
    });

    let mut gaps = Vec::new();
    for (corpus, (_, digest)) in canonical.iter().zip(&loaded) {
        let model = &corpus.model_id;
        let meta = ArtifactMeta::new(
            vec![taxonomy_digest.clone(), digest.clone()],
            config.clone(),
        );
        if !args.heatmaps.is_empty() {
            let dir = ctx.dir("heatmaps")?;
            for dim in &args.heatmaps {
                let table = build_contingency(corpus, *dim, opts)?;
                let stem = format!("{model}.{}", dim.key());
                write_csv(
                    &dir.join(format!("{stem}.csv")),
                    &meta,
                    &heatmap_csv(model, dim, &table)?,
                )?;
                write_json(
                    &dir.join(format!("{stem}.top{}.json", args.top_k)),
                    &json!({
                        "artifact": meta,
                        "model_id": model,
                        "dimension": dim,
                        "k": args.top_k,
                        "rows": top_k_conditional(&table, args.top_k),
                    }),
                )?;
            }
        }
        if !drills.is_empty() {
            let dir = ctx.dir("drilldown")?;
            for d in drills {
                let cond = d.condition.as_ref().map(|(a, c)| (*a, c.as_str()));
                let view = drill_down(corpus, &map, d.attribute, &d.category, cond)?;
                let mut stem = format!("{model}.{}.{}", d.attribute.key(), slug(&d.category));
                if let Some((a, c)) = &d.condition {
                    let _ = write!(stem, ".{}-{}", a.key(), slug(c));
                }
                write_csv(
                    &dir.join(format!("{stem}.csv")),
                    &meta,
                    &drill_down_csv(model, &view)?,
                )?;
            }
        }
        if !breakdowns.is_empty() {
            let dir = ctx.dir("breakdown")?;
            for (attr, term, over) in breakdowns {
                let shares = raw_term_breakdown(corpus, *attr, term, *over);
                if shares.is_empty() {
                    tracing::warn!(model = %model, term = %term, "no records with this raw term");
                }
                let stem = format!("{model}.{}.{}.{}", attr.key(), slug(term), over.key());
                write_csv(
                    &dir.join(format!("{stem}.csv")),
                    &meta,
                    &breakdown_csv(model, *attr, term, *over, &shares)?,
                )?;
            }
        }
        for (dim, a, b) in l1_specs {
            let gap = build_contingency(corpus, *dim, opts).and_then(|t| l1_gap(&t, a, b));
            gaps.push(L1GapRow {
                model_id: model.clone(),
                dimension: *dim,
                group_a: a.clone(),
                group_b: b.clone(),
                l1_gap: gap.as_ref().ok().copied(),
                error: gap.err().map(|e| e.to_string()),
            });
        }
    }

    let mut inputs = vec![taxonomy_digest];
    inputs.extend(loaded.into_iter().map(|(_, d)| d));
    let meta = ArtifactMeta::new(inputs, config);
    emit(
        &ctx.dir("")?,
        "l1_gaps",
        ctx.format,
        &meta,
        || json!({ "artifact": meta, "gaps": gaps }),
        || Ok(l1_gaps_csv(&gaps)?),
        || Ok(l1_gaps_markdown(&gaps)),
    )?;
    print!("{}", l1_gaps_markdown(&gaps));
    Ok(())
}
