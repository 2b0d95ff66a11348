use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segstyle_core::imaging::{load_image, resize, Image, Interpolation};
use segstyle_core::style::{checkpoint, cosine_lr, ArchProfile, LossBreakdown, StyleNetWeights, Trainer};
use segstyle_core::{Error, PipelineConfig};

use crate::args::TrainArgs;
use crate::exit::UsageError;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub const CSV_HEADER: &str = "step,content,style,id1,id2,total";

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Content/style path pairs. With `content/` and `style/` subdirectories,
/// content i is paired with style i mod n_style. Otherwise every image is
/// content once and the next image (cyclically) is its style.
pub fn dataset_pairs(dir: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    let (cdir, sdir) = (dir.join("content"), dir.join("style"));
    let pairs: Vec<(PathBuf, PathBuf)> = if cdir.is_dir() && sdir.is_dir() {
        let contents = list_images(&cdir)?;
        let styles = list_images(&sdir)?;
        if styles.is_empty() {
            return Err(UsageError(format!("no style images in {}", sdir.display())).into());
        }
        contents
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), styles[i % styles.len()].clone()))
            .collect()
    } else {
        let imgs = list_images(dir)?;
        let n = imgs.len();
        (0..n)
            .map(|i| (imgs[i].clone(), imgs[(i + 1) % n].clone()))
            .collect()
    };
    if pairs.is_empty() {
        return Err(UsageError(format!("no training images in {}", dir.display())).into());
    }
    Ok(pairs)
}

fn load_square(path: &Path, size: u32, interp: Interpolation) -> Result<Image, Error> {
    let img = load_image(path)?;
    Ok(if img.dims() == (size, size) {
        img
    } else {
        resize(&img, size, size, interp)
    })
}

/// Indices for each step: a fresh seeded permutation per epoch, consumed
/// `batch` at a time.
struct BatchSchedule {
    rng: ChaCha8Rng,
    n: usize,
    batch: usize,
    queue: Vec<usize>,
}

impl BatchSchedule {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        BatchSchedule {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            batch,
            queue: Vec::new(),
        }
    }

    fn next(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.queue.is_empty() {
                self.queue = (0..self.n).collect();
                self.queue.shuffle(&mut self.rng);
            }
            out.push(self.queue.pop().expect("queue refilled"));
        }
        out
    }
}

fn csv_row(step: usize, l: &LossBreakdown) -> String {
    format!(
        "{step},{},{},{},{},{}",
        l.content, l.style, l.identity1, l.identity2, l.total
    )
}

pub fn train(a: &TrainArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    if !(a.lr.is_finite() && a.lr >= 0.0) {
        return Err(UsageError(format!("--lr {} must be finite and non-negative", a.lr)).into());
    }
    if !(0.0..=1.0).contains(&a.lr_floor) {
        return Err(UsageError(format!("--lr-floor {} outside [0, 1]", a.lr_floor)).into());
    }
    if a.batch_size == Some(0) {
        return Err(UsageError("--batch-size must be positive".into()).into());
    }
    let pairs = dataset_pairs(&a.dataset)?;
    let interp = cfg.resize.interpolation;
    let data = pairs
        .iter()
        .map(|(c, s)| Ok((load_square(c, a.size, interp)?, load_square(s, a.size, interp)?)))
        .collect::<Result<Vec<_>, Error>>()?;

    let init = match &a.init {
        Some(p) => checkpoint::load(p)?.0,
        None => {
            let profile = ArchProfile::by_name(&a.profile)
                .ok_or_else(|| UsageError(format!("unknown profile `{}` (tiny or vgg19)", a.profile)))?;
            StyleNetWeights::init(profile, cfg.seed)?
        }
    };
    let mut trainer = Trainer::new(init, cfg.loss_weights, &data)?;
    let mut schedule = match a.batch_size {
        Some(b) if b < trainer.len() => Some(BatchSchedule::new(trainer.len(), b, cfg.seed)),
        _ => None,
    };

    let csv_path = a.loss_csv.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let file = File::create(&csv_path).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    let mut csv = BufWriter::new(file);
    let io_err = |e| Error::Io {
        path: csv_path.clone(),
        source: e,
    };
    writeln!(csv, "{CSV_HEADER}").map_err(io_err)?;
    csv.flush().map_err(io_err)?;

    log::info!(
        "training on {} pairs at {}px for {} steps",
        trainer.len(),
        a.size,
        a.steps
    );
    let start = Instant::now();
    for step in 1..=a.steps {
        let lr = cosine_lr(a.lr, step, a.steps, a.lr_floor);
        let indices = schedule.as_mut().map(BatchSchedule::next);
        let losses = trainer.step(indices.as_deref(), lr)?;
        writeln!(csv, "{}", csv_row(step, &losses)).map_err(io_err)?;
        csv.flush().map_err(io_err)?;
        if step == 1 || step % 20 == 0 || step == a.steps {
            log::info!("step {step}: total {:.6} (lr {lr:.2e})", losses.total);
        }
    }
    log::info!("training took {:.1}s", start.elapsed().as_secs_f64());

    let metadata = BTreeMap::from([
        ("seed".to_string(), cfg.seed.to_string()),
        ("steps".to_string(), a.steps.to_string()),
        ("lr".to_string(), a.lr.to_string()),
        ("lr_floor".to_string(), a.lr_floor.to_string()),
        ("size".to_string(), a.size.to_string()),
        ("pairs".to_string(), trainer.len().to_string()),
    ]);
    checkpoint::save(trainer.weights(), &metadata, &a.out)?;
    Ok(())
}
