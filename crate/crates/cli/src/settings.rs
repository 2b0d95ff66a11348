//! Layers defaults, the config file and command-line flags into one
//! [`PipelineConfig`].

use std::path::{Path, PathBuf};

use anyhow::Context;
use segstyle_core::{BackendKind, PipelineConfig};

use crate::args::PipelineFlags;
use crate::exit::UsageError;

/// Environment variable naming the directory that holds `model.ckpt`.
pub const WEIGHTS_DIR_ENV: &str = "SEGSTYLE_WEIGHTS_DIR";

pub const DEFAULT_WEIGHTS_FILE: &str = "model.ckpt";

pub fn load_file(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| segstyle_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg = PipelineConfig::from_toml_str(&text)
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.rebase_paths(base);
    Ok(cfg)
}

/// Applies every flag that was given on top of `cfg`.
pub fn apply_flags(cfg: &mut PipelineConfig, f: &PipelineFlags) {
    if let Some(v) = f.resize_mode {
        cfg.resize.mode = v;
    }
    if let Some(v) = f.max_side {
        cfg.resize.max_side = v;
    }
    if let Some(v) = f.interpolation {
        cfg.resize.interpolation = v;
    }
    if let Some(v) = f.score_threshold {
        cfg.score_threshold = v;
    }
    if let Some(v) = f.min_pixels {
        cfg.min_pixels = v;
    }
    if let Some(v) = &f.paste_order {
        cfg.paste_order = v.clone();
    }
    if let Some(v) = &f.weights {
        cfg.weights = Some(v.clone());
    }
    if let Some(v) = &f.manifest {
        cfg.manifest = Some(v.clone());
        cfg.backend = BackendKind::Manifest;
    }
    if let Some(v) = &f.backend_command {
        cfg.backend_command = v.clone();
        cfg.backend = BackendKind::ExternalModel;
    }
    if let Some(v) = f.backend {
        cfg.backend = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    let lw = &mut cfg.loss_weights;
    for (dst, src) in [
        (&mut lw.content, f.content_weight),
        (&mut lw.style, f.style_weight),
        (&mut lw.identity1, f.identity1_weight),
        (&mut lw.identity2, f.identity2_weight),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
}

/// Defaults, then the config file, then flags. `out_dir` is the command's
/// own output directory flag, if it has one.
pub fn resolve(
    config: Option<&Path>,
    flags: &PipelineFlags,
    out_dir: Option<&PathBuf>,
) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match config {
        Some(p) => load_file(p)?,
        None => PipelineConfig::default(),
    };
    apply_flags(&mut cfg, flags);
    if let Some(d) = out_dir {
        cfg.output_dir = Some(d.clone());
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

/// The checkpoint to load: the configured one, else
/// `$SEGSTYLE_WEIGHTS_DIR/model.ckpt`.
pub fn weights_path(cfg: &PipelineConfig) -> Result<PathBuf, segstyle_core::Error> {
    if let Some(p) = &cfg.weights {
        return Ok(p.clone());
    }
    match std::env::var_os(WEIGHTS_DIR_ENV) {
        Some(dir) => Ok(PathBuf::from(dir).join(DEFAULT_WEIGHTS_FILE)),
        None => Err(segstyle_core::Error::Checkpoint(format!(
            "no weights given: pass --weights or set {WEIGHTS_DIR_ENV}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use segstyle_core::imaging::{Interpolation, ResizeMode};
    use segstyle_core::segmentation::PasteOrder;

    #[test]
    fn flags_beat_file_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "score_threshold = 0.7\nmin_pixels = 40\nseed = 9\n[resize]\nmax_side = 256\n",
        )
        .unwrap();
        let flags = PipelineFlags {
            score_threshold: Some(0.9),
            interpolation: Some(Interpolation::Nearest),
            ..Default::default()
        };
        let cfg = resolve(Some(&path), &flags, None).unwrap();
        // flag over file
        assert_eq!(cfg.score_threshold, 0.9);
        // flag over default
        assert_eq!(cfg.resize.interpolation, Interpolation::Nearest);
        // file over default
        assert_eq!(cfg.min_pixels, 40);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.resize.max_side, 256);
        // untouched default
        assert_eq!(cfg.resize.mode, ResizeMode::ScaleToPow2);
        assert_eq!(cfg.paste_order, PasteOrder::AreaDesc);
    }

    #[test]
    fn file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.json"), "{}").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "manifest = \"m.json\"\n").unwrap();
        let cfg = load_file(&path).unwrap();
        assert_eq!(cfg.manifest.unwrap(), dir.path().join("m.json"));
    }

    #[test]
    fn backend_follows_the_source_flag() {
        let mut cfg = PipelineConfig::default();
        let flags = PipelineFlags {
            backend_command: Some(vec!["seg".into(), "--fast".into()]),
            ..Default::default()
        };
        apply_flags(&mut cfg, &flags);
        assert_eq!(cfg.backend, BackendKind::ExternalModel);
        assert_eq!(cfg.backend_command, ["seg", "--fast"]);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "treshold = 1\n").unwrap();
        let err = load_file(&path).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
