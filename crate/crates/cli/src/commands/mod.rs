pub mod audit;
pub mod compare;
pub mod generate;
pub mod ingest;
pub mod report;
pub mod robustness;
pub mod synth;
