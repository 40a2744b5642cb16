//! Per-channel metric reports with the evaluation harness's row structure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MatError, Result};

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub perceptual: f64,
}

/// Channel keys reported by the reconstruction and decomposition harnesses.
pub const REPORT_CHANNELS: [&str; 5] = ["render", "basecolor", "normal", "roughness", "metallic"];

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub channels: BTreeMap<String, ChannelMetrics>,
    /// Fréchet distance between generated and reference render features,
    /// computed over the whole run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frechet_render: Option<f64>,
    /// Substitute for the CLIP text-image score: nearest-training-material
    /// retrieval accuracy by feature distance. Not comparable to CLIP values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag_retrieval_accuracy: Option<f64>,
    pub sample_count: usize,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(MatError::Contract("metric report with zero samples".into()));
        }
        for (name, ch) in &self.channels {
            for (label, v) in [("mse", ch.mse), ("psnr", ch.psnr), ("perceptual", ch.perceptual)] {
                if !v.is_finite() {
                    return Err(MatError::NonFinite(format!("{name}.{label}")));
                }
            }
        }
        if let Some(f) = self.frechet_render {
            if !f.is_finite() {
                return Err(MatError::NonFinite("frechet_render".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<MetricReport> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
