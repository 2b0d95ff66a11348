use std::path::Path;

use segstyle_core::compositor::{compare_grid, run_pipeline, stylize_at_original_size, NetworkStylizer};
use segstyle_core::imaging::load_image;
use segstyle_core::segmentation::{extract_pieces, save_manifest};
use segstyle_core::{Error, PipelineConfig};

use super::{load_weights, output_dir, segmentation_for};

pub fn segment(image_path: &Path, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let image = load_image(image_path)?;
    let seg = segmentation_for(image_path, &image, cfg)?;
    if seg.is_empty() {
        log::warn!(
            "no instances found in {}; writing background only",
            image_path.display()
        );
    }
    let pieces = extract_pieces(&image, &seg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    save_manifest(&seg, out.join("manifest.json"))?;
    pieces.background.save(out.join("background.png"))?;
    for (i, (inst, piece)) in seg.instances().iter().zip(&pieces.instances).enumerate() {
        inst.mask().save_png(out.join(format!("mask_{i}.png")))?;
        piece.save(out.join(format!("piece_{i}.png")))?;
    }
    log::info!("{} instances written to {}", seg.len(), out.display());
    Ok(())
}

pub fn stylize(content: &Path, style: &Path, out: &Path, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let weights = load_weights(cfg)?;
    let content = load_image(content)?;
    let style = load_image(style)?;
    let st = NetworkStylizer { weights: &weights };
    let result = stylize_at_original_size(&st, &content, &style, &cfg.resize)?;
    result.save(out)?;
    Ok(())
}

pub fn segstylize(
    content_path: &Path,
    style_path: &Path,
    compare: bool,
    cfg: &PipelineConfig,
) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let weights = load_weights(cfg)?;
    let content = load_image(content_path)?;
    let style = load_image(style_path)?;
    let seg = segmentation_for(content_path, &content, cfg)?;
    if seg.is_empty() {
        log::warn!(
            "no instances in {}; the result is a global stylization",
            content_path.display()
        );
    }
    let st = NetworkStylizer { weights: &weights };
    let run = run_pipeline(&content, &style, &seg, &st, cfg)?;
    run.save(out, cfg)?;
    if compare {
        let global = stylize_at_original_size(&st, &content, &style, &cfg.resize)?;
        compare_grid(&content, &style, &global, &run.final_image).save(out.join("compare.png"))?;
    }
    log::info!(
        "{} instances; extract {:.3}s, stylize {:.3}s, paste {:.3}s",
        seg.len(),
        run.timing.extract.as_secs_f64(),
        run.timing.stylize.as_secs_f64(),
        run.timing.paste.as_secs_f64()
    );
    Ok(())
}
