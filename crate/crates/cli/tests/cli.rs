mod common;

use std::collections::BTreeMap;

use common::*;
use segstyle_core::imaging::{load_image, BinaryMask, Image};
use segstyle_core::style::{checkpoint, ArchProfile, StyleNetWeights};

fn read(p: &std::path::Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["paint"])), 2);
    assert_eq!(code(&run(&["stylize", "a.png"])), 2);
    assert_eq!(code(&run(&["segment", "a.png", "--paste-order", "two,one"])), 2);
    assert_eq!(code(&run(&["segment", "a.png", "--resize-mode", "stretch"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn segment_missing_image_exits_4_and_names_it() {
    let f = Fixture::new();
    let missing = f.path("nope.png");
    let o = run(&[
        "segment",
        s(&missing),
        "--manifest",
        s(&f.manifest),
        "--out-dir",
        s(&f.path("out")),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.png"));
}

#[test]
fn segment_blank_image_warns_and_succeeds() {
    let f = Fixture::new();
    let blank = f.path("blank.png");
    Image::black(W, H).save(&blank).unwrap();
    let out = f.path("seg");
    let o = run(&[
        "segment",
        s(&blank),
        "--manifest",
        s(&f.empty_manifest),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("warn"));
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["instances"].as_array().unwrap().len(), 0);
    assert!(out.join("background.png").is_file());
    assert!(!out.join("piece_0.png").exists());
}

#[test]
fn segment_writes_one_piece_per_instance_on_black() {
    let f = Fixture::new();
    let out = f.path("seg");
    let o = run(&[
        "segment",
        s(&f.content),
        "--manifest",
        s(&f.manifest),
        "--out-dir",
        s(&out),
        "--paste-order",
        "manifest",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let content = load_image(&f.content).unwrap();
    for i in 0..3 {
        let piece = load_image(out.join(format!("piece_{i}.png"))).unwrap();
        let mask = BinaryMask::load_png(out.join(format!("mask_{i}.png"))).unwrap();
        for y in 0..H {
            for x in 0..W {
                let want = if mask.get(x, y) {
                    content.pixel(x, y)
                } else {
                    [0.0; 3]
                };
                assert_eq!(piece.pixel(x, y), want);
            }
        }
    }
    assert!(!out.join("piece_3.png").exists());
}

#[test]
fn segment_via_external_command() {
    let f = Fixture::new();
    let script = f.path("seg.sh");
    // One full-frame detection in COCO run-length form.
    let n = W * H;
    std::fs::write(
        &script,
        format!(
            "#!/bin/sh\nprintf '{{\"instances\":[{{\"label\":\"all\",\"score\":0.8,\"rle\":{{\"size\":[{H},{W}],\"counts\":[0,{n}]}}}}]}}' > \"$2\"\n"
        ),
    )
    .unwrap();
    let out = f.path("seg");
    let o = run(&[
        "segment",
        s(&f.content),
        "--out-dir",
        s(&out),
        "--backend-command",
        "sh",
        s(&script),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["instances"].as_array().unwrap().len(), 1);

    let o = run(&[
        "segment",
        s(&f.content),
        "--out-dir",
        s(&out),
        "--backend-command",
        "false",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn stylize_keeps_dims_and_is_deterministic() {
    let f = Fixture::new();
    let (a, b) = (f.path("a.png"), f.path("b.png"));
    for out in [&a, &b] {
        let o = run(&[
            "stylize",
            s(&f.content),
            s(&f.style),
            "--out",
            s(out),
            "--weights",
            s(&f.weights),
            "--max-side",
            "64",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(load_image(&a).unwrap().dims(), (W, H));
    assert_eq!(read(&a), read(&b));
}

#[test]
fn weights_come_from_the_environment_directory() {
    let f = Fixture::new();
    let out = f.path("a.png");
    let o = bin()
        .args([
            "stylize",
            s(&f.content),
            s(&f.style),
            "--out",
            s(&out),
            "--max-side",
            "64",
        ])
        .env("SEGSTYLE_WEIGHTS_DIR", f.dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["stylize", s(&f.content), s(&f.style), "--out", s(&out)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn bad_checkpoints_exit_5() {
    let f = Fixture::new();
    let bytes = read(&f.weights);
    let text = String::from_utf8_lossy(&bytes);
    let at = text.find("\"version\":1").expect("version field in header");
    let mut future = bytes.clone();
    future[at + 10] = b'7';
    let ck = f.path("future.ckpt");
    std::fs::write(&ck, &future).unwrap();
    let out = f.path("a.png");
    let o = run(&[
        "stylize",
        s(&f.content),
        s(&f.style),
        "--out",
        s(&out),
        "--weights",
        s(&ck),
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("version 7"), "{}", stderr(&o));

    std::fs::write(&ck, &bytes[..bytes.len() / 2]).unwrap();
    let o = run(&[
        "stylize",
        s(&f.content),
        s(&f.style),
        "--out",
        s(&out),
        "--weights",
        s(&ck),
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));

    let o = run(&[
        "stylize",
        s(&f.content),
        s(&f.style),
        "--out",
        s(&out),
        "--weights",
        s(&f.path("none.ckpt")),
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn segstylize_explicit_order_and_region_equality() {
    let f = Fixture::new();
    let out = f.path("run");
    let o = run(&[
        "segstylize",
        s(&f.content),
        s(&f.style),
        "--out-dir",
        s(&out),
        "--weights",
        s(&f.weights),
        "--manifest",
        s(&f.manifest),
        "--paste-order",
        "2,0,1",
        "--max-side",
        "64",
        "--compare",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    let labels: Vec<&str> = m["segmentation"]["instances"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["cup", "vase", "book"]);
    assert_eq!(m["segmentation"]["order"], "explicit");
    assert_eq!(m["config"]["paste_order"], serde_json::json!([2, 0, 1]));

    let fin = load_image(out.join("final.png")).unwrap();
    let bg = load_image(out.join("background.png")).unwrap();
    let mut covered = BinaryMask::zeros(W, H);
    for i in 0..3 {
        let piece = load_image(out.join(format!("piece_{i}.png"))).unwrap();
        let mask = BinaryMask::load_png(out.join(format!("mask_{i}.png"))).unwrap();
        for y in 0..H {
            for x in 0..W {
                if mask.get(x, y) {
                    assert_eq!(fin.pixel(x, y), piece.pixel(x, y));
                    covered.set(x, y, true);
                }
            }
        }
    }
    for y in 0..H {
        for x in 0..W {
            if !covered.get(x, y) {
                assert_eq!(fin.pixel(x, y), bg.pixel(x, y));
            }
        }
    }
    let grid = load_image(out.join("compare.png")).unwrap();
    assert_eq!(grid.height(), 32);
    assert_eq!(grid.width(), 3 * 38 + 32 + 3 * 4);
}

#[test]
fn zero_instances_match_stylize_bytes() {
    let f = Fixture::new();
    let single = f.path("single.png");
    let common = ["--weights", s(&f.weights), "--max-side", "64", "--seed", "3"];
    let mut args = vec!["stylize", s(&f.content), s(&f.style), "--out", s(&single)];
    args.extend(common);
    assert_eq!(code(&run(&args)), 0);
    let out = f.path("run");
    let mut args = vec![
        "segstylize",
        s(&f.content),
        s(&f.style),
        "--out-dir",
        s(&out),
        "--manifest",
        s(&f.empty_manifest),
    ];
    args.extend(common);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(&out.join("final.png")), read(&single));
}

#[test]
fn mismatched_manifest_is_a_usage_error() {
    let f = Fixture::new();
    let small = f.path("small.png");
    Image::black(16, 16).save(&small).unwrap();
    let o = run(&[
        "segment",
        s(&small),
        "--manifest",
        s(&f.manifest),
        "--out-dir",
        s(&f.path("o")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("source_dims"));
}

#[test]
fn config_file_values_apply_below_flags() {
    let f = Fixture::new();
    let cfg = f.path("run.toml");
    std::fs::write(
        &cfg,
        "weights = \"model.ckpt\"\nmanifest = \"scene.json\"\npaste_order = \"manifest\"\n[resize]\nmax_side = 64\n",
    )
    .unwrap();
    let out = f.path("run");
    let o = run(&[
        "--config",
        s(&cfg),
        "segstylize",
        s(&f.content),
        s(&f.style),
        "--out-dir",
        s(&out),
        "--paste-order",
        "1,2,0",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["config"]["resize"]["max_side"], 64);
    assert_eq!(m["config"]["paste_order"], serde_json::json!([1, 2, 0]));
    assert_eq!(m["config"]["score_threshold"], 0.5);

    std::fs::write(&cfg, "max_sid = 64\n").unwrap();
    let o = run(&[
        "--config",
        s(&cfg),
        "segment",
        s(&f.content),
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn write_dataset(dir: &std::path::Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let k = i as f32 / n as f32;
        Image::from_fn(32, 32, |x, y| {
            let t = ((x as f32 * (0.2 + k)).sin() + (y as f32 * 0.3).cos()) * 0.25 + 0.5;
            [t, k, 1.0 - t]
        })
        .save(dir.join(format!("img_{i}.png")))
        .unwrap();
    }
}

#[test]
fn train_zero_steps_writes_the_initialization() {
    let f = Fixture::new();
    let data = f.path("data");
    write_dataset(&data, 2);
    let ck = f.path("init.ckpt");
    let o = run(&[
        "train",
        s(&data),
        "--out",
        s(&ck),
        "--steps",
        "0",
        "--size",
        "32",
        "--seed",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (w, meta) = checkpoint::load(&ck).unwrap();
    let init = StyleNetWeights::init(ArchProfile::tiny(), 4).unwrap();
    assert_eq!(w.tensors(), init.tensors());
    assert_eq!(meta.get("steps").map(String::as_str), Some("0"));
    let csv = std::fs::read_to_string(ck.with_extension("csv")).unwrap();
    assert_eq!(csv, "step,content,style,id1,id2,total\n");
}

#[test]
fn train_is_deterministic_and_logs_every_step() {
    let f = Fixture::new();
    let data = f.path("data");
    write_dataset(&data, 3);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let ck = f.path(&format!("m{k}.ckpt"));
        let csv = f.path(&format!("loss{k}.csv"));
        let o = run(&[
            "train",
            s(&data),
            "--out",
            s(&ck),
            "--loss-csv",
            s(&csv),
            "--steps",
            "4",
            "--size",
            "32",
            "--batch-size",
            "2",
            "--seed",
            "8",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push((read(&ck), std::fs::read_to_string(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows: Vec<&str> = outputs[0].1.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("4,"));
    assert_eq!(rows[1].split(',').count(), 6);
}

#[test]
fn train_error_codes() {
    let f = Fixture::new();
    let empty = f.path("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let ck = f.path("m.ckpt");
    let o = run(&["train", s(&empty), "--out", s(&ck)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let data = f.path("data");
    write_dataset(&data, 2);
    let o = run(&["train", s(&data), "--out", s(&ck), "--size", "24"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // An absurd step size blows the weights up after the first update.
    let o = run(&[
        "train",
        s(&data),
        "--out",
        s(&ck),
        "--size",
        "32",
        "--steps",
        "4",
        "--lr",
        "1e300",
    ]);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn compare_lays_out_four_columns() {
    let f = Fixture::new();
    let out = f.path("grid.png");
    let o = run(&[
        "compare",
        s(&f.content),
        s(&f.style),
        s(&f.content),
        s(&f.content),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = load_image(&out).unwrap();
    assert_eq!(g.dims(), (3 * 38 + 32 + 12, 32));
}

mod fetch {
    use super::*;
    use safetensors::tensor::TensorView;
    use safetensors::Dtype;
    use sha2::{Digest, Sha256};

    const ENCODER: [(&str, usize); 14] = [
        ("conv0", 0),
        ("conv1_1", 2),
        ("conv1_2", 5),
        ("conv2_1", 9),
        ("conv2_2", 12),
        ("conv3_1", 16),
        ("conv3_2", 19),
        ("conv3_3", 22),
        ("conv3_4", 25),
        ("conv4_1", 29),
        ("conv4_2", 32),
        ("conv4_3", 35),
        ("conv4_4", 38),
        ("conv5_1", 42),
    ];

    fn encoder_file(w: &StyleNetWeights) -> Vec<u8> {
        let mut raw: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
        for (name, idx) in ENCODER {
            for suffix in ["weight", "bias"] {
                let t = w.get(&format!("encoder.{name}.{suffix}")).unwrap();
                let bytes = t.data().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
                raw.push((format!("{idx}.{suffix}"), t.shape().to_vec(), bytes));
            }
        }
        let views: Vec<(String, TensorView<'_>)> = raw
            .iter()
            .map(|(n, s, b)| (n.clone(), TensorView::new(Dtype::F32, s.clone(), b).unwrap()))
            .collect();
        safetensors::serialize(views, &None).unwrap()
    }

    #[test]
    fn imports_local_file_with_hash_check() {
        let f = Fixture::new();
        let reference = StyleNetWeights::init(ArchProfile::tiny(), 21).unwrap();
        let bytes = encoder_file(&reference);
        let enc = f.path("vgg.safetensors");
        std::fs::write(&enc, &bytes).unwrap();
        let hash: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();

        let o = run(&[
            "fetch-weights",
            "--encoder",
            s(&enc),
            "--encoder-sha256",
            &"0".repeat(64),
            "--out",
            s(&f.path("x.ckpt")),
        ]);
        assert_eq!(code(&o), 5, "{}", stderr(&o));
        assert!(stderr(&o).contains("sha256 mismatch"));

        let wdir = f.path("weights");
        let o = bin()
            .args(["fetch-weights", "--encoder", s(&enc), "--encoder-sha256", &hash])
            .env("SEGSTYLE_WEIGHTS_DIR", &wdir)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (w, meta): (StyleNetWeights, BTreeMap<String, String>) =
            checkpoint::load(wdir.join("model.ckpt")).unwrap();
        assert_eq!(
            w.get("encoder.conv3_1.weight"),
            reference.get("encoder.conv3_1.weight")
        );
        assert_eq!(meta["encoder_sha256"], hash);

        let o = run(&[
            "fetch-weights",
            "--encoder",
            s(&f.path("missing.safetensors")),
            "--out",
            s(&f.path("y.ckpt")),
        ]);
        assert_eq!(code(&o), 4, "{}", stderr(&o));
    }
}
