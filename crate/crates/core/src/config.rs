//! Pipeline settings. Every field has a default so a config file only
//! needs the values it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ResizePolicy;
use crate::segmentation::{DetectOptions, PasteOrder};
use crate::style::LossWeights;

/// Where instance masks come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// An external segmentation program, see [`crate::segmentation::CommandBackend`].
    ExternalModel,
    /// A precomputed manifest file.
    #[default]
    Manifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub resize: ResizePolicy,
    pub score_threshold: f64,
    pub min_pixels: usize,
    pub paste_order: PasteOrder,
    pub loss_weights: LossWeights,
    /// Checkpoint file with the network weights.
    pub weights: Option<PathBuf>,
    pub backend: BackendKind,
    /// Program and leading arguments for the external backend.
    pub backend_command: Vec<String>,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            resize: ResizePolicy::default(),
            score_threshold: 0.5,
            min_pixels: 16,
            paste_order: PasteOrder::AreaDesc,
            loss_weights: LossWeights::default(),
            weights: None,
            backend: BackendKind::Manifest,
            backend_command: Vec::new(),
            manifest: None,
            output_dir: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks value ranges and that referenced input files exist.
    pub fn validate(&self) -> Result<()> {
        self.resize.validate()?;
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::contract(format!(
                "score_threshold {} outside [0, 1]",
                self.score_threshold
            )));
        }
        self.loss_weights.validate()?;
        if let Some(p) = &self.weights {
            if !p.is_file() {
                return Err(Error::Checkpoint(format!(
                    "weights file {} not found",
                    p.display()
                )));
            }
        }
        if let Some(p) = &self.manifest {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
                ));
            }
        }
        if self.backend == BackendKind::ExternalModel && self.backend_command.is_empty() {
            return Err(Error::contract("backend external-model needs backend_command"));
        }
        Ok(())
    }

    pub fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            score_threshold: self.score_threshold,
            min_pixels: self.min_pixels,
            order: self.paste_order.clone(),
        }
    }

    /// Resolves relative paths against `base` (the config file's directory).
    pub fn rebase_paths(&mut self, base: &Path) {
        for p in [&mut self.weights, &mut self.manifest, &mut self.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Interpolation, ResizeMode};

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(
            PipelineConfig::from_toml_str("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let text = r#"
            score_threshold = 0.7
            paste_order = [1, 0]
            [resize]
            mode = "pad-to-pow2"
            max_side = 256
            interpolation = "nearest"
        "#;
        let cfg = PipelineConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.score_threshold, 0.7);
        assert_eq!(cfg.paste_order, PasteOrder::Explicit(vec![1, 0]));
        assert_eq!(cfg.resize.mode, ResizeMode::PadToPow2);
        assert_eq!(cfg.resize.interpolation, Interpolation::Nearest);
        assert_eq!(cfg.min_pixels, 16);
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::from_toml_str("scor_threshold = 1").is_err());
        let bad = PipelineConfig {
            score_threshold: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let missing = PipelineConfig {
            weights: Some("/no/such/file.ckpt".into()),
            ..Default::default()
        };
        assert!(matches!(missing.validate(), Err(Error::Checkpoint(_))));
        let no_manifest = PipelineConfig {
            manifest: Some("/no/such/m.json".into()),
            ..Default::default()
        };
        assert!(matches!(no_manifest.validate(), Err(Error::Io { .. })));
        let ext = PipelineConfig {
            backend: BackendKind::ExternalModel,
            ..Default::default()
        };
        assert!(ext.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
