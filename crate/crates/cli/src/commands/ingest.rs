use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pba_core::corpus::{
    parse_generation_payload_with, write_corpus, write_rejections, RawPayload, Rejection,
};
use pba_core::report::ArtifactMeta;
use pba_core::text::NormalizeOptions;
use pba_core::Corpus;
use serde_json::json;

use crate::context::{digest_of, read_bytes, write_json, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Model id for the resulting corpus.
    #[arg(long)]
    model_id: String,
    /// Strip plural suffixes from values.
    #[arg(long)]
    stem: bool,
    /// Payload files, or directories of payload files (read in name order).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn expand(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn run_id_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn run(ctx: &Context, args: IngestArgs) -> Result<(), CliError> {
    if args.model_id.is_empty() || args.model_id.contains(['/', '\\']) {
        return Err(CliError::Usage(format!(
            "unusable model id `{}`",
            args.model_id
        )));
    }
    let files = expand(&args.inputs)?;
    let opts = NormalizeOptions { stem: args.stem };

    let mut records = Vec::new();
    let mut rejections: Vec<Rejection> = Vec::new();
    let mut failures = Vec::new();
    let mut inputs = Vec::with_capacity(files.len());
    for path in &files {
        inputs.push(digest_of(path)?);
        let text = String::from_utf8_lossy(&read_bytes(path)?).into_owned();
        let outcome = RawPayload::new(&args.model_id, run_id_of(path), text)
            .and_then(|p| parse_generation_payload_with(&p, opts));
        match outcome {
            Ok(o) => {
                records.extend(o.records);
                rejections.extend(o.rejections);
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "payload skipped");
                failures
                    .push(json!({ "path": path.display().to_string(), "error": e.to_string() }));
            }
        }
    }
    let corpus = Corpus::from_parsed(&args.model_id, records, rejections.len());

    let dir = ctx.dir("")?;
    let corpus_path = dir.join(format!("{}.jsonl", args.model_id));
    let file = File::create(&corpus_path).map_err(|e| CliError::io(&corpus_path, e))?;
    write_corpus(BufWriter::new(file), &corpus.records)
        .map_err(|e| CliError::io(&corpus_path, e))?;
    let rej_path = dir.join(format!("{}.rejections.jsonl", args.model_id));
    let file = File::create(&rej_path).map_err(|e| CliError::io(&rej_path, e))?;
    write_rejections(BufWriter::new(file), &rejections).map_err(|e| CliError::io(&rej_path, e))?;

    let meta = ArtifactMeta::new(
        inputs,
        json!({ "command": "ingest", "model_id": args.model_id, "stem": args.stem }),
    );
    let stats = corpus.stats();
    write_json(
        &dir.join(format!("{}.ingest.json", args.model_id)),
        &json!({
            "artifact": meta,
            "model_id": args.model_id,
            "payloads": files.len(),
            "failed_payloads": failures,
            "stats": stats,
        }),
    )?;
    println!(
        "{}: {} payloads ({} unparsable), {} parsed, {} rejected, {} duplicates, {} unique",
        args.model_id,
        files.len(),
        failures.len(),
        stats.parsed_count,
        stats.rejected_count,
        stats.duplicate_count,
        stats.unique_count
    );
    if corpus.is_empty() {
        return Err(CliError::Data("no records could be parsed".into()));
    }
    Ok(())
}
