//! Persona brainstorm audits.
//!
//! Large batches of model-generated persona profiles are parsed into
//! [`PersonaRecord`]s, canonicalized through a human-maintained
//! [`TaxonomyMap`], and scored for association between identity attributes
//! (name, gender, ethnicity, sexual orientation) and social attributes
//! (social class, education, occupation, interest) with a
//! degree-of-freedom-aware normalized Cramér's V.
//!
//! The [`robustness`] module holds the agreement and significance statistics
//! used to compare audits across models and prompt or sample-size
//! conditions, and [`generation`] collects corpora from chat-completion
//! providers or synthesizes them with a controllable amount of bias.

pub mod association;
pub mod corpus;
pub mod generation;
pub mod persona;
pub mod report;
pub mod robustness;
pub mod special;
pub mod taxonomy;
pub mod text;

pub use association::{
    AuditMatrix, BiasDimension, BiasScore, ContingencyTable, EffectThresholds, IdentityAxis,
    Severity,
};
pub use corpus::{Corpus, CorpusStats, RawPayload};
pub use persona::{Attribute, PersonaRecord};
pub use taxonomy::TaxonomyMap;

/// Version string embedded in every exported artifact.
pub const TOOL_VERSION: &str = concat!("pba ", env!("CARGO_PKG_VERSION"));
