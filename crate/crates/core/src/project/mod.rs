//! On-disk project: configuration, input ingestion and the pipeline stages.
//!
//! Each stage reads the artifacts of earlier stages from the project
//! directory and writes its own; nothing is ever rewritten by a later stage.

pub mod artifact;
pub mod config;
pub mod ingest;
pub mod proj;
mod stages;

pub use config::{stage_seed, ProjectConfig};
pub use stages::{
    names, DetectorChoice, IngestInputs, LabelSource, Manifest, Project, RoadsInput, SceneFiles, SimulatedVisibility,
    StageReport,
};
