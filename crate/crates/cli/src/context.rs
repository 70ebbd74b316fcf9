//! State shared by every subcommand: output directory, format, seed,
//! taxonomy, and the artifact writers that stamp provenance on each file.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pba_core::corpus::{read_corpus, Corpus};
use pba_core::report::{audit_from_json, ArtifactMeta, InputDigest};
use pba_core::taxonomy::{parse_taxonomy, reference_taxonomy, REFERENCE_TAXONOMY_JSON};
use pba_core::{AuditMatrix, TaxonomyMap};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Md,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Md => "md",
        }
    }
}

/// Name under which the bundled taxonomy is recorded in artifacts.
pub const BUILTIN_TAXONOMY: &str = "builtin:reference";

pub struct Context {
    pub out: PathBuf,
    pub format: Format,
    pub seed: Option<u64>,
    pub taxonomy: Option<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn digest_of(path: &Path) -> Result<InputDigest, CliError> {
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&read_bytes(path)?),
    })
}

impl Context {
    /// Creates `out/sub` (or `out` when `sub` is empty).
    pub fn dir(&self, sub: &str) -> Result<PathBuf, CliError> {
        let dir = if sub.is_empty() {
            self.out.clone()
        } else {
            self.out.join(sub)
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    /// Loads the taxonomy and returns it with its digest.
    pub fn load_taxonomy(&self) -> Result<(TaxonomyMap, InputDigest), CliError> {
        match &self.taxonomy {
            None => Ok((
                reference_taxonomy(),
                InputDigest {
                    path: BUILTIN_TAXONOMY.into(),
                    sha256: sha256_hex(REFERENCE_TAXONOMY_JSON.as_bytes()),
                },
            )),
            Some(path) => {
                let bytes = read_bytes(path)?;
                let text = String::from_utf8(bytes.clone())
                    .map_err(|_| CliError::Data(format!("{}: not utf-8", path.display())))?;
                let map = parse_taxonomy(&text)?;
                Ok((
                    map,
                    InputDigest {
                        path: path.display().to_string(),
                        sha256: sha256_hex(&bytes),
                    },
                ))
            }
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<(Corpus, InputDigest), CliError> {
    let bytes = read_bytes(path)?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    let mut corpus = read_corpus(BufReader::new(bytes.as_slice()), None)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if corpus.model_id.is_empty() {
        corpus.model_id = file_stem(path);
    }
    Ok((corpus, digest))
}

pub fn load_audit(path: &Path) -> Result<(AuditMatrix, InputDigest), CliError> {
    let bytes = read_bytes(path)?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let audit =
        audit_from_json(&value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((audit, digest))
}

/// File name up to the first dot.
pub fn file_stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    tracing::info!(path = %path.display(), "wrote");
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn meta_line(meta: &ArtifactMeta) -> String {
    serde_json::to_string(meta).expect("metadata serializes")
}

/// CSV preceded by a `# artifact: {...}` comment line.
pub fn write_csv(path: &Path, meta: &ArtifactMeta, body: &str) -> Result<(), CliError> {
    write(path, &format!("# artifact: {}\n{body}", meta_line(meta)))
}

/// Markdown preceded by an HTML comment carrying the metadata.
pub fn write_md(path: &Path, meta: &ArtifactMeta, body: &str) -> Result<(), CliError> {
    write(
        path,
        &format!("<!-- artifact: {} -->\n\n{body}", meta_line(meta)),
    )
}

/// Writes `stem.<ext>` in the requested format. `json` must already carry
/// the artifact block; `csv` and `md` bodies get it prepended.
pub fn emit(
    dir: &Path,
    stem: &str,
    format: Format,
    meta: &ArtifactMeta,
    json: impl FnOnce() -> Value,
    csv: impl FnOnce() -> Result<String, CliError>,
    md: impl FnOnce() -> Result<String, CliError>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        Format::Json => write_json(&path, &json())?,
        Format::Csv => write_csv(&path, meta, &csv()?)?,
        Format::Md => write_md(&path, meta, &md()?)?,
    }
    Ok(path)
}

/// Splits `a,b,c` into trimmed non-empty parts.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}
