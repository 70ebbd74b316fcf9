use std::collections::BTreeSet;
use std::path::PathBuf;

use pba_core::report::{significance_csv, significance_json, significance_text, ArtifactMeta};
use pba_core::robustness::{pairwise_model_significance, DEFAULT_FDR_Q};
use serde_json::json;

use crate::context::{emit, load_audit, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Audit files written by `pba audit` (at least two).
    #[arg(required = true, num_args = 2..)]
    audits: Vec<PathBuf>,
    /// False discovery rate for the Benjamini–Hochberg pass.
    #[arg(long, default_value_t = DEFAULT_FDR_Q)]
    q: f64,
}

pub fn run(ctx: &Context, args: CompareArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.q) {
        return Err(CliError::Usage(format!("q = {} is outside [0, 1]", args.q)));
    }
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
    let matrix = pairwise_model_significance(&audits, args.q)?;
    let meta = ArtifactMeta::new(inputs, json!({ "command": "compare", "q": args.q }));
    let text = significance_text(&matrix);
    emit(
        &ctx.dir("")?,
        "significance",
        ctx.format,
        &meta,
        || significance_json(&matrix, &meta),
        || Ok(significance_csv(&matrix)?),
        || Ok(format!("```text\n{text}```\n")),
    )?;
    print!("{text}");
    Ok(())
}
