//! Orchestration on top of the library: the argument replay, counterexample
//! searches, verification campaigns and their reports.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub mod pipeline;
pub mod campaign;
pub mod search;

pub use campaign::{
    verify_campaign, CampaignConfig, CampaignReport, CardinalityFamily, HeavyFamily, MonotoneFamily, SchnirelmannFamily,
};
pub use pipeline::{
    first_good_term, measurable_alpha, pipeline_replay, PipelineConfig, PipelineInput, PipelineTrace, SetSource, Step,
    StepKind,
};
pub use search::{
    resume_cursor, screen_rect_density, search_schnirelmann, BFamily, ScreenConfig, ScreenReport, SchnirelmannSearch,
    SearchMode, SearchReport, Verdict,
};

/// SHA-256 of the compact JSON form of a configuration, in hex.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configurations serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Appends `record` as one JSON line.
pub fn write_jsonl<W: Write, T: Serialize>(out: &mut W, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, record).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))
}
