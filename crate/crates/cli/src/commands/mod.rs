mod fetch;
mod pipeline;
mod train;

use std::path::{Path, PathBuf};

use anyhow::Context;
use segstyle_core::compositor::compare_grid;
use segstyle_core::imaging::load_image;
use segstyle_core::segmentation::{detect_instances, load_manifest, CommandBackend, SegmentationResult};
use segstyle_core::style::{checkpoint, StyleNetWeights};
use segstyle_core::{BackendKind, Error, PipelineConfig};

use crate::args::{Cli, Command, CompareArgs};
use crate::exit::UsageError;
use crate::settings;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Segment(a) => {
            let cfg = settings::resolve(config, &a.pipeline, a.out_dir.as_ref())?;
            pipeline::segment(&a.image, &cfg)
        }
        Command::Stylize(a) => {
            let cfg = settings::resolve(config, &a.pipeline, None)?;
            pipeline::stylize(&a.content, &a.style, &a.out, &cfg)
        }
        Command::Segstylize(a) => {
            let cfg = settings::resolve(config, &a.pipeline, a.out_dir.as_ref())?;
            pipeline::segstylize(&a.content, &a.style, a.compare, &cfg)
        }
        Command::Train(a) => {
            let cfg = settings::resolve(config, &a.pipeline, None)?;
            train::train(&a, &cfg)
        }
        Command::FetchWeights(a) => {
            let cfg = settings::resolve(config, &a.pipeline, None)?;
            fetch::fetch(&a, &cfg)
        }
        Command::Compare(a) => compare(&a),
    }
}

fn output_dir(cfg: &PipelineConfig) -> anyhow::Result<&Path> {
    cfg.output_dir
        .as_deref()
        .ok_or_else(|| UsageError("no output directory: pass --out-dir or set output_dir".into()).into())
}

fn load_weights(cfg: &PipelineConfig) -> anyhow::Result<StyleNetWeights> {
    let path = settings::weights_path(cfg)?;
    if !path.is_file() {
        return Err(Error::Checkpoint(format!(
            "weights file {} not found (run `segstyle fetch-weights` or `segstyle train`)",
            path.display()
        ))
        .into());
    }
    let (w, _) = checkpoint::load(&path)?;
    Ok(w)
}

/// Instance masks for `image` from the configured source, in paste order.
fn segmentation_for(
    image_path: &Path,
    image: &segstyle_core::imaging::Image,
    cfg: &PipelineConfig,
) -> anyhow::Result<SegmentationResult> {
    match cfg.backend {
        BackendKind::Manifest => {
            let path = cfg.manifest.as_ref().ok_or_else(|| {
                UsageError("no segmentation source: pass --manifest or --backend-command".into())
            })?;
            let loaded = load_manifest(path)?;
            for w in &loaded.warnings {
                log::warn!("{}: {w}", path.display());
            }
            if loaded.result.source_dims() != image.dims() {
                return Err(Error::Manifest {
                    field: "source_dims".into(),
                    message: format!(
                        "{:?} in {} does not match {} ({:?})",
                        loaded.result.source_dims(),
                        path.display(),
                        image_path.display(),
                        image.dims()
                    ),
                }
                .into());
            }
            Ok(loaded.result.with_order(&cfg.paste_order)?)
        }
        BackendKind::ExternalModel => {
            let (program, args) = cfg
                .backend_command
                .split_first()
                .ok_or_else(|| UsageError("backend external-model needs --backend-command".into()))?;
            let mut backend = CommandBackend::new(PathBuf::from(program), args.to_vec());
            Ok(detect_instances(&mut backend, image, &cfg.detect_options())?)
        }
    }
}

fn compare(a: &CompareArgs) -> anyhow::Result<()> {
    let [c, s, g, seg] = [&a.content, &a.style, &a.global, &a.segmented].map(load_image);
    let grid = compare_grid(&c?, &s?, &g?, &seg?);
    grid.save(&a.out).with_context(|| "writing comparison grid")?;
    Ok(())
}
