//! Orchestration of the anomaly pipeline: scene pools, translator training,
//! conversion, dataset assembly, two detectors, evaluation, Grad-CAM and the
//! comparison report. Every stage records its artifacts in `run_record.json`
//! under the output root.

pub mod config;
pub mod layout;
pub mod record;
pub mod report;
pub mod stages;

pub use config::{PipelineConfig, Preset};
pub use layout::Layout;
pub use record::RunRecord;
pub use stages::{run_stage, Stage, Variant};

/// A failed precondition: bad configuration, missing upstream artifacts, or
/// output that would be overwritten. Maps to exit code 2.
#[derive(Debug)]
pub struct Precondition(pub String);

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Precondition {}

/// Process exit code for a stage result.
pub fn exit_code(result: &anyhow::Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<Precondition>().is_some() => 2,
        Err(_) => 1,
    }
}
