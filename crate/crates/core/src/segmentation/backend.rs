use std::path::PathBuf;
use std::process::Command;

use serde::Deserialize;

use super::instance::{resolve_overlaps, InstanceMask, Ordering, PasteOrder, SegmentationResult};
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Image, Rle};

/// One raw detection as a backend reports it.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    pub mask: BinaryMask,
}

/// An instance-segmentation model. A backend may hold a session, so calls
/// take `&mut self` and one backend serves one worker at a time.
pub trait SegmentationBackend {
    fn name(&self) -> &str;
    fn detect(&mut self, img: &Image) -> Result<Vec<Detection>>;
}

/// Returns a fixed list of detections; for tests and precomputed runs.
#[derive(Clone, Debug, Default)]
pub struct StaticBackend {
    pub detections: Vec<Detection>,
}

impl StaticBackend {
    pub fn new(detections: Vec<Detection>) -> Self {
        StaticBackend { detections }
    }
}

impl SegmentationBackend for StaticBackend {
    fn name(&self) -> &str {
        "static"
    }

    fn detect(&mut self, _img: &Image) -> Result<Vec<Detection>> {
        Ok(self.detections.clone())
    }
}

/// Runs an external program as `<program> <args...> <input.png> <output.json>`.
///
/// The program writes `{"instances": [{"label", "score", "rle"}, ...]}` with
/// masks in the column-major run-length encoding used by manifests.
#[derive(Clone, Debug)]
pub struct CommandBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Deserialize)]
struct CommandOutput {
    instances: Vec<CommandInstance>,
}

#[derive(Deserialize)]
struct CommandInstance {
    label: String,
    score: f64,
    rle: Rle,
}

impl CommandBackend {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        CommandBackend {
            program: program.into(),
            args,
        }
    }

    fn failure(&self, message: String) -> Error {
        Error::Backend {
            message,
            hint: format!(
                "check that `{}` is installed and runs standalone, or pass precomputed masks with --manifest",
                self.program.display()
            ),
        }
    }
}

impl SegmentationBackend for CommandBackend {
    fn name(&self) -> &str {
        "command"
    }

    fn detect(&mut self, img: &Image) -> Result<Vec<Detection>> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let input = dir.path().join("input.png");
        let output = dir.path().join("detections.json");
        img.save(&input)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .status()
            .map_err(|e| self.failure(format!("cannot start `{}`: {e}", self.program.display())))?;
        if !status.success() {
            return Err(self.failure(format!("`{}` exited with {status}", self.program.display())));
        }
        let text = std::fs::read_to_string(&output)
            .map_err(|e| self.failure(format!("no readable output at {}: {e}", output.display())))?;
        let parsed: CommandOutput = serde_json::from_str(&text)
            .map_err(|e| self.failure(format!("malformed detection output: {e}")))?;
        let (w, h) = img.dims();
        parsed
            .instances
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d.rle.size != [h, w] {
                    return Err(self.failure(format!(
                        "detection {i} mask is {:?} (h, w), image is [{h}, {w}]",
                        d.rle.size
                    )));
                }
                let mask = d
                    .rle
                    .decode()
                    .map_err(|e| self.failure(format!("detection {i}: {e}")))?;
                Ok(Detection {
                    label: d.label,
                    score: d.score,
                    mask,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectOptions {
    pub score_threshold: f64,
    /// Instances with fewer pixels, before or after overlap resolution,
    /// are discarded.
    pub min_pixels: usize,
    pub order: PasteOrder,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            score_threshold: 0.5,
            min_pixels: 16,
            order: PasteOrder::AreaDesc,
        }
    }
}

/// Runs the backend and turns its detections into a disjoint, ordered
/// result. No detections is a valid result with an all-background frame.
pub fn detect_instances(
    backend: &mut dyn SegmentationBackend,
    img: &Image,
    opts: &DetectOptions,
) -> Result<SegmentationResult> {
    if !(0.0..=1.0).contains(&opts.score_threshold) {
        return Err(Error::contract(format!(
            "score threshold {} outside [0, 1]",
            opts.score_threshold
        )));
    }
    let dims = img.dims();
    let mut kept = Vec::new();
    for (i, d) in backend.detect(img)?.into_iter().enumerate() {
        if d.mask.dims() != dims {
            return Err(Error::Backend {
                message: format!(
                    "{} backend returned a {:?} mask for a {dims:?} image",
                    backend.name(),
                    d.mask.dims()
                ),
                hint: "the backend must emit masks at the input resolution".into(),
            });
        }
        if !(0.0..=1.0).contains(&d.score) || !d.score.is_finite() {
            return Err(Error::Backend {
                message: format!("detection {i} has score {} outside [0, 1]", d.score),
                hint: "report probabilities, not logits".into(),
            });
        }
        if d.score < opts.score_threshold || d.mask.area() < opts.min_pixels.max(1) {
            continue;
        }
        kept.push(InstanceMask::new(d.mask, d.label, d.score)?);
    }
    let resolved: Vec<InstanceMask> = resolve_overlaps(kept)
        .into_iter()
        .filter(|i| i.area() >= opts.min_pixels)
        .collect();
    SegmentationResult::new(dims, resolved, Ordering::Explicit)?.with_order(&opts.order)
}
