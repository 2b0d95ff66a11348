use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::paste;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imaging::{apply_inverse, to_power_of_two, Image, ResizePolicy};
use crate::par;
use crate::segmentation::{extract_pieces, manifest_json, SegmentationResult};
use crate::style::{stylize, StyleNetWeights};

/// Image-to-image transfer applied to each piece. Inputs already have
/// power-of-two sides; the output must keep the content's size.
pub trait Stylizer: Sync {
    fn stylize(&self, content: &Image, style: &Image) -> Result<Image>;
}

/// The style-attention network.
#[derive(Clone, Copy, Debug)]
pub struct NetworkStylizer<'w> {
    pub weights: &'w StyleNetWeights,
}

impl Stylizer for NetworkStylizer<'_> {
    fn stylize(&self, content: &Image, style: &Image) -> Result<Image> {
        stylize(content, style, self.weights)
    }
}

/// Returns the content unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityStylizer;

impl Stylizer for IdentityStylizer {
    fn stylize(&self, content: &Image, _style: &Image) -> Result<Image> {
        Ok(content.clone())
    }
}

fn stylize_prepared(
    st: &dyn Stylizer,
    content: &Image,
    style: &Image,
    policy: &ResizePolicy,
) -> Result<Image> {
    let (input, inverse) = to_power_of_two(content, policy);
    let out = st.stylize(&input, style)?;
    apply_inverse(&out, &inverse)
}

/// Resizes both images to power-of-two sides, stylizes, and maps the result
/// back to the content's size. This is the global (unsegmented) transfer.
pub fn stylize_at_original_size(
    st: &dyn Stylizer,
    content: &Image,
    style: &Image,
    policy: &ResizePolicy,
) -> Result<Image> {
    let (style, _) = to_power_of_two(style, policy);
    stylize_prepared(st, content, &style, policy)
}

/// Wall-clock time per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    #[serde(serialize_with = "secs")]
    pub extract: Duration,
    #[serde(serialize_with = "secs")]
    pub stylize: Duration,
    #[serde(serialize_with = "secs")]
    pub paste: Duration,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// Everything one pipeline run produced.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub content: Image,
    pub style: Image,
    pub seg: SegmentationResult,
    pub background_stylized: Image,
    /// One per instance, in paste order.
    pub pieces_stylized: Vec<Image>,
    pub final_image: Image,
    pub timing: StageTimings,
}

/// Extracts the pieces, stylizes each (in parallel) with the same style
/// image, and pastes the stylized instances over the stylized background in
/// `seg`'s instance order.
pub fn run_pipeline(
    content: &Image,
    style: &Image,
    seg: &SegmentationResult,
    stylizer: &dyn Stylizer,
    cfg: &PipelineConfig,
) -> Result<PipelineRun> {
    let t0 = Instant::now();
    let pieces = extract_pieces(content, seg).map_err(|e| e.in_stage("extract"))?;
    let (style_input, _) = to_power_of_two(style, &cfg.resize);
    let t1 = Instant::now();

    let mut jobs = Vec::with_capacity(1 + pieces.instances.len());
    jobs.push(&pieces.background);
    jobs.extend(pieces.instances.iter());
    let mut stylized = par::map_slice(&jobs, |piece| {
        stylize_prepared(stylizer, piece, &style_input, &cfg.resize)
    })
    .into_iter()
    .collect::<Result<Vec<Image>>>()
    .map_err(|e| e.in_stage("stylize"))?;
    let background_stylized = stylized.remove(0);
    let pieces_stylized = stylized;
    let t2 = Instant::now();

    let mut final_image = background_stylized.clone();
    for (inst, piece) in seg.instances().iter().zip(&pieces_stylized) {
        final_image = paste(&final_image, piece, inst.mask()).map_err(|e| e.in_stage("paste"))?;
    }
    let t3 = Instant::now();
    log::debug!(
        "pipeline: {} pieces, extract {:?}, stylize {:?}, paste {:?}",
        jobs.len(),
        t1 - t0,
        t2 - t1,
        t3 - t2
    );

    Ok(PipelineRun {
        content: content.clone(),
        style: style.clone(),
        seg: seg.clone(),
        background_stylized,
        pieces_stylized,
        final_image,
        timing: StageTimings {
            extract: t1 - t0,
            stylize: t2 - t1,
            paste: t3 - t2,
        },
    })
}

impl PipelineRun {
    /// Writes `final.png`, `background.png`, `piece_<i>.png`, `mask_<i>.png`
    /// and `manifest.json` (segmentation, timing and the config used).
    pub fn save(&self, dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.final_image.save(dir.join("final.png"))?;
        self.background_stylized.save(dir.join("background.png"))?;
        for (i, (piece, inst)) in self.pieces_stylized.iter().zip(self.seg.instances()).enumerate() {
            piece.save(dir.join(format!("piece_{i}.png")))?;
            inst.mask().save_png(dir.join(format!("mask_{i}.png")))?;
        }
        let doc = serde_json::json!({
            "segmentation": manifest_json(&self.seg),
            "timing_seconds": self.timing,
            "config": cfg,
        });
        let path = dir.join("manifest.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&doc).expect("manifest serializes"),
        )
        .map_err(|e| Error::io(&path, e))
    }
}
