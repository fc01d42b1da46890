//! `codes.json`: the list of codes written by `encode`.

use std::path::Path;

use infiris::encode::read_code;
use infiris::error::PathIoError;
use infiris::pipeline::CodedSample;
use infiris::synth::EyeLabel;
use infiris::{EncoderKind, Result};
use serde::{Deserialize, Serialize};

pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeIndex {
    pub version: u32,
    pub encoder: EncoderKind,
    pub entries: Vec<CodeEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeEntry {
    pub sample_id: String,
    pub subject_id: String,
    pub eye_label: EyeLabel,
    /// Relative to the index file; absent when encoding failed.
    pub code_path: Option<String>,
    pub error: Option<String>,
}

impl CodeIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PathIoError::new(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reads every referenced code.
    pub fn load_samples(&self, index_path: &Path) -> Result<Vec<CodedSample>> {
        let dir = index_path.parent().unwrap_or(Path::new("."));
        self.entries
            .iter()
            .map(|e| {
                let code = match &e.code_path {
                    Some(p) => Some(read_code(dir.join(p))?.0),
                    None => None,
                };
                Ok(CodedSample {
                    sample_id: e.sample_id.clone(),
                    subject_id: e.subject_id.clone(),
                    eye_label: e.eye_label,
                    code,
                })
            })
            .collect()
    }
}
