#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segstyle_core::imaging::{BinaryMask, Image};
use segstyle_core::segmentation::{save_manifest, InstanceMask, Ordering, SegmentationResult};
use segstyle_core::style::{checkpoint, ArchProfile, StyleNetWeights};

pub const W: u32 = 48;
pub const H: u32 = 40;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_segstyle"));
    c.env_remove("SEGSTYLE_WEIGHTS_DIR").env_remove("SEGSTYLE_CONFIG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn content_image() -> Image {
    Image::from_fn(W, H, |x, y| {
        let (fx, fy) = (x as f32 / W as f32, y as f32 / H as f32);
        if (6..20).contains(&x) && (8..30).contains(&y) {
            [0.9, 0.2, 0.1]
        } else if (26..42).contains(&x) && (4..16).contains(&y) {
            [0.1, 0.7, 0.3]
        } else if (28..36).contains(&x) && (24..34).contains(&y) {
            [0.2, 0.3, 0.9]
        } else {
            [0.4 * fx, 0.3 + 0.2 * fy, 0.5]
        }
    })
}

pub fn style_image() -> Image {
    Image::from_fn(32, 32, |x, y| {
        let band = ((x + 2 * y) / 4) % 3;
        [[0.1, 0.2, 0.6], [0.9, 0.8, 0.2], [0.2, 0.5, 0.9]][band as usize]
    })
}

/// Three disjoint rectangles matching the objects in [`content_image`].
pub fn scene_segmentation() -> SegmentationResult {
    let inst = |x0, y0, x1, y1, label: &str| {
        InstanceMask::new(BinaryMask::rect(W, H, x0, y0, x1, y1), label, 0.9).unwrap()
    };
    SegmentationResult::new(
        (W, H),
        vec![
            inst(6, 8, 20, 30, "vase"),
            inst(26, 4, 42, 16, "book"),
            inst(28, 24, 36, 34, "cup"),
        ],
        Ordering::Explicit,
    )
    .unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub content: PathBuf,
    pub style: PathBuf,
    pub weights: PathBuf,
    pub manifest: PathBuf,
    pub empty_manifest: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        content_image().save(p("content.png")).unwrap();
        style_image().save(p("style.png")).unwrap();
        let w = StyleNetWeights::init(ArchProfile::tiny(), 5).unwrap();
        checkpoint::save(&w, &Default::default(), p("model.ckpt")).unwrap();
        save_manifest(&scene_segmentation(), p("scene.json")).unwrap();
        save_manifest(&SegmentationResult::empty(W, H), p("empty.json")).unwrap();
        Fixture {
            content: p("content.png"),
            style: p("style.png"),
            weights: p("model.ckpt"),
            manifest: p("scene.json"),
            empty_manifest: p("empty.json"),
            dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}
