use std::path::PathBuf;

use pba_core::generation::{
    collect_until_unique, CollectOptions, GenerationConfig, HttpProvider, PromptVariant, Provider,
    ReplayProvider, RunPaths,
};

use crate::context::{read_bytes, Context};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    /// Generation config (JSON): endpoint, model, target_unique, ...
    #[arg(long)]
    config: PathBuf,
    /// Prompt variant: baseline, role_play or debias.
    #[arg(long, default_value = "baseline")]
    variant: PromptVariant,
    /// Continue an interrupted run from its manifest.
    #[arg(long)]
    resume: bool,
    /// Allow a temperature other than 1.0.
    #[arg(long)]
    unsafe_temperature: bool,
    /// Run id recorded in the manifest and in every record.
    #[arg(long)]
    run_id: Option<String>,
    /// Serve recorded responses from this directory instead of calling the endpoint.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Overrides the config's target number of unique profiles.
    #[arg(long)]
    target_unique: Option<usize>,
}

pub fn run(ctx: &Context, args: GenerateArgs) -> Result<(), CliError> {
    let bytes = read_bytes(&args.config)?;
    let mut config: GenerationConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    if let Some(target) = args.target_unique {
        config.target_unique = target;
    }
    config.validate(args.unsafe_temperature)?;

    let provider: Box<dyn Provider> = match &args.replay {
        Some(dir) => Box::new(ReplayProvider::from_dir(dir).map_err(|e| CliError::io(dir, e))?),
        None => Box::new(HttpProvider::from_config(&config)?),
    };
    let dir = ctx.dir("")?;
    let paths = RunPaths::in_dir(&dir, config.model_id());
    let opts = CollectOptions {
        resume: args.resume,
        run_id: args.run_id,
    };
    let (corpus, run) =
        collect_until_unique(&config, args.variant, provider.as_ref(), &paths, &opts)?;
    println!(
        "{}: {} unique profiles after {} requests ({} parse failures, {} rejected items, {} duplicates)",
        run.model_id,
        corpus.len(),
        run.counters.requests,
        run.counters.parse_failures,
        run.counters.rejected_items,
        run.counters.duplicates
    );
    println!("{}", paths.corpus.display());
    Ok(())
}
