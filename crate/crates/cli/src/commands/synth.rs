use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use pba_core::corpus::write_corpus;
use pba_core::generation::{synthetic_generate, SyntheticSpec};
use pba_core::report::ArtifactMeta;
use serde_json::json;

use crate::context::{digest_of, read_bytes, write_json, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Synthetic spec (JSON): categories, weights, optional binding.
    #[arg(long)]
    spec: PathBuf,
    /// Number of distinct profiles to draw.
    #[arg(short, long, default_value_t = 10_000)]
    n: usize,
    /// Overrides the binding strength λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides the spec's model id.
    #[arg(long)]
    model_id: Option<String>,
}

pub fn run(ctx: &Context, args: SynthArgs) -> Result<(), CliError> {
    let bytes = read_bytes(&args.spec)?;
    let mut spec: SyntheticSpec = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    if let Some(id) = args.model_id {
        spec.model_id = id;
    }
    if let Some(lambda) = args.lambda {
        let binding = spec
            .binding
            .as_mut()
            .ok_or_else(|| CliError::Usage("--lambda needs a spec with a binding".into()))?;
        binding.lambda = lambda;
    }
    if spec.model_id.is_empty() || spec.model_id.contains(['/', '\\']) {
        return Err(CliError::Usage(format!(
            "unusable model id `{}`",
            spec.model_id
        )));
    }
    let corpus = synthetic_generate(&spec, args.n)?;

    let dir = ctx.dir("")?;
    let path = dir.join(format!("{}.jsonl", spec.model_id));
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_corpus(BufWriter::new(file), &corpus.records).map_err(|e| CliError::io(&path, e))?;

    let meta = ArtifactMeta::new(
        vec![digest_of(&args.spec)?],
        json!({ "command": "synth", "n": args.n, "spec": spec }),
    );
    let summary = json!({
        "artifact": meta,
        "model_id": spec.model_id,
        "corpus": path.file_name().map(|n| n.to_string_lossy()),
        "records": corpus.len(),
    });
    write_json(&dir.join(format!("{}.synth.json", spec.model_id)), &summary)?;
    println!("{}", path.display());
    Ok(())
}
