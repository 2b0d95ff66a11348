use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use segstyle_core::imaging::{Interpolation, ResizeMode};
use segstyle_core::segmentation::PasteOrder;
use segstyle_core::BackendKind;

/// Segmentation-aware style transfer.
#[derive(Debug, Parser)]
#[command(name = "segstyle", version, about)]
pub struct Cli {
    /// TOML config file. Flags override its values; it overrides defaults.
    #[arg(long, global = true, env = "SEGSTYLE_CONFIG")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment an image into instance masks and full-frame pieces.
    Segment(SegmentArgs),
    /// Stylize a whole image (no segmentation).
    Stylize(StylizeArgs),
    /// Segment, stylize every piece separately and recompose.
    Segstylize(SegstylizeArgs),
    /// Train transform and decoder weights on a small image set.
    Train(TrainArgs),
    /// Download or import pretrained weights into a checkpoint.
    FetchWeights(FetchArgs),
    /// Lay out content, style, global and segmented results side by side.
    Compare(CompareArgs),
}

/// Settings shared with the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct PipelineFlags {
    /// pad-to-pow2 or scale-to-pow2
    #[arg(long)]
    pub resize_mode: Option<ResizeMode>,
    /// Largest side fed to the network (power of two, 64..=2048).
    #[arg(long)]
    pub max_side: Option<u32>,
    /// bilinear or nearest
    #[arg(long)]
    pub interpolation: Option<Interpolation>,
    /// Minimum detection confidence in [0, 1].
    #[arg(long)]
    pub score_threshold: Option<f64>,
    /// Drop instances with fewer pixels.
    #[arg(long)]
    pub min_pixels: Option<usize>,
    /// area-desc, manifest, or an index list such as 2,0,1
    #[arg(long)]
    pub paste_order: Option<PasteOrder>,
    /// Checkpoint file (default: $SEGSTYLE_WEIGHTS_DIR/model.ckpt).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// manifest or external-model. Inferred from --manifest or
    /// --backend-command when omitted.
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
    /// Precomputed segmentation manifest.
    #[arg(long, conflicts_with = "backend_command")]
    pub manifest: Option<PathBuf>,
    /// External segmentation program and its leading arguments; it is
    /// called with the input PNG and an output JSON path appended.
    #[arg(long, num_args = 1.., allow_hyphen_values = true, value_terminator = ";")]
    pub backend_command: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub content_weight: Option<f64>,
    #[arg(long)]
    pub style_weight: Option<f64>,
    #[arg(long)]
    pub identity1_weight: Option<f64>,
    #[arg(long)]
    pub identity2_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub image: PathBuf,
    /// Directory for manifest.json, mask_<i>.png and piece_<i>.png.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct StylizeArgs {
    pub content: PathBuf,
    pub style: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct SegstylizeArgs {
    pub content: PathBuf,
    pub style: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write compare.png (content | style | global | segmented).
    #[arg(long)]
    pub compare: bool,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with `content/` and `style/` subdirectories, or a flat
    /// directory of images paired with their successor.
    pub dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss CSV (default: the checkpoint path with a .csv extension).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Peak Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Final learning rate as a fraction of --lr (cosine decay).
    #[arg(long, default_value_t = 0.1)]
    pub lr_floor: f64,
    /// Square training resolution (power of two).
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    /// Pairs per step (default: all pairs).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Architecture profile for fresh weights: tiny or vgg19.
    #[arg(long, default_value = "tiny")]
    pub profile: String,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// URL or path of the encoder weights (safetensors).
    #[arg(long)]
    pub encoder: String,
    /// Expected SHA-256 of the encoder file.
    #[arg(long)]
    pub encoder_sha256: Option<String>,
    #[arg(long)]
    pub decoder: Option<String>,
    #[arg(long, requires = "decoder")]
    pub decoder_sha256: Option<String>,
    /// Attention blocks and merge convolution.
    #[arg(long)]
    pub transformer: Option<String>,
    #[arg(long, requires = "transformer")]
    pub transformer_sha256: Option<String>,
    /// Checkpoint to write (default: $SEGSTYLE_WEIGHTS_DIR/model.ckpt).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub content: PathBuf,
    pub style: PathBuf,
    pub global: PathBuf,
    pub segmented: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "manifest" => Ok(BackendKind::Manifest),
        "external-model" => Ok(BackendKind::ExternalModel),
        other => Err(format!(
            "unknown backend `{other}` (expected manifest or external-model)"
        )),
    }
}
