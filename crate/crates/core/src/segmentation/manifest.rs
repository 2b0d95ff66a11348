use std::path::Path;

use serde::{Deserialize, Serialize};

use super::instance::{resolve_overlaps, InstanceMask, Ordering, SegmentationResult};
use crate::error::{Error, Result};
use crate::imaging::{mask_union, BBox, Rle};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    source_dims: [u32; 2],
    instances: Vec<ManifestInstance>,
    #[serde(default)]
    order: Ordering,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestInstance {
    label: String,
    score: f64,
    bbox: BBox,
    rle: Rle,
}

/// A parsed manifest and any repairs made while loading it.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedManifest {
    pub result: SegmentationResult,
    pub warnings: Vec<String>,
}

pub fn manifest_json(seg: &SegmentationResult) -> serde_json::Value {
    let (w, h) = seg.source_dims();
    let file = ManifestFile {
        source_dims: [w, h],
        instances: seg
            .instances()
            .iter()
            .map(|i| ManifestInstance {
                label: i.label().to_string(),
                score: i.score(),
                bbox: i.bbox(),
                rle: Rle::encode(i.mask()),
            })
            .collect(),
        order: seg.ordering(),
    };
    serde_json::to_value(file).expect("manifest serializes")
}

pub fn save_manifest(seg: &SegmentationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&manifest_json(seg)).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses manifest text. Overlapping masks are resolved (and reported in
/// `warnings`); instance order is otherwise preserved.
pub fn parse_manifest(text: &str) -> Result<LoadedManifest> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde_json names unknown or missing fields in its message.
        Error::manifest(field_hint(&msg), msg)
    })?;
    let [w, h] = file.source_dims;
    if w == 0 || h == 0 {
        return Err(Error::manifest("source_dims", "dimensions must be positive"));
    }
    let mut instances = Vec::with_capacity(file.instances.len());
    for (i, inst) in file.instances.into_iter().enumerate() {
        let field = |f: &str| format!("instances[{i}].{f}");
        if inst.rle.size != [h, w] {
            return Err(Error::manifest(
                field("rle.size"),
                format!("mask is {:?} (h, w) but source_dims is [{w}, {h}]", inst.rle.size),
            ));
        }
        let mask = inst
            .rle
            .decode()
            .map_err(|e| Error::manifest(field("rle.counts"), e.to_string()))?;
        if !(0.0..=1.0).contains(&inst.score) {
            return Err(Error::manifest(
                field("score"),
                format!("{} is outside [0, 1]", inst.score),
            ));
        }
        let Some(tight) = mask.bbox() else {
            return Err(Error::manifest(field("rle"), "mask has no set pixels"));
        };
        if tight != inst.bbox {
            return Err(Error::manifest(
                field("bbox"),
                format!(
                    "{:?} is not the tight box {:?} of the mask",
                    <[u32; 4]>::from(inst.bbox),
                    <[u32; 4]>::from(tight)
                ),
            ));
        }
        instances.push(InstanceMask::new(mask, inst.label, inst.score)?);
    }

    let mut warnings = Vec::new();
    let total: usize = instances.iter().map(|i| i.area()).sum();
    let union = mask_union(w, h, instances.iter().map(|i| i.mask()))?.area();
    if total != union {
        let before = instances.len();
        instances = resolve_overlaps(instances);
        warnings.push(format!(
            "manifest masks overlapped on {} pixels; resolved by score, area, then order ({} of {before} instances kept)",
            total - union,
            instances.len()
        ));
    }
    let result = SegmentationResult::new((w, h), instances, file.order)?;
    Ok(LoadedManifest { result, warnings })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

fn field_hint(msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BinaryMask;
    use crate::segmentation::PasteOrder;

    fn two_instances() -> SegmentationResult {
        let a = InstanceMask::new(BinaryMask::rect(9, 7, 0, 0, 4, 3), "vase", 0.91).unwrap();
        let b = InstanceMask::new(
            BinaryMask::from_fn(9, 7, |x, y| x > 5 && y % 2 == 1),
            "flower",
            0.62,
        )
        .unwrap();
        SegmentationResult::new((9, 7), vec![a, b], Ordering::Explicit).unwrap()
    }

    #[test]
    fn round_trip() {
        let seg = two_instances();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_manifest(&seg, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.result, seg);
        assert!(loaded.warnings.is_empty());
        let reordered = seg.with_order(&PasteOrder::AreaDesc).unwrap();
        let again = parse_manifest(&manifest_json(&reordered).to_string()).unwrap();
        assert_eq!(again.result, reordered);
    }

    #[test]
    fn overlap_is_resolved_with_warning() {
        let a = BinaryMask::rect(8, 8, 0, 0, 5, 5);
        let b = BinaryMask::rect(8, 8, 3, 3, 8, 8);
        let inst = |m: &BinaryMask, s: f64| serde_json::json!({"label": "x", "score": s, "bbox": <[u32; 4]>::from(m.bbox().unwrap()), "rle": Rle::encode(m)});
        let text = serde_json::json!({
            "source_dims": [8, 8],
            "instances": [inst(&a, 0.4), inst(&b, 0.9)],
            "order": "explicit"
        })
        .to_string();
        let loaded = parse_manifest(&text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.result.is_partition());
        assert!(!loaded.result.instances()[0].mask().get(4, 4));
        assert!(loaded.result.instances()[1].mask().get(4, 4));
    }

    fn err_field(text: &str) -> String {
        match parse_manifest(text).unwrap_err() {
            Error::Manifest { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let mut v = manifest_json(&two_instances());
        v["instances"][1]["rle"]["size"] = serde_json::json!([7, 8]);
        assert_eq!(err_field(&v.to_string()), "instances[1].rle.size");

        let mut v = manifest_json(&two_instances());
        v["instances"][0]["score"] = serde_json::json!(1.5);
        assert_eq!(err_field(&v.to_string()), "instances[0].score");

        let mut v = manifest_json(&two_instances());
        v["instances"][0]["bbox"] = serde_json::json!([0, 0, 9, 7]);
        assert_eq!(err_field(&v.to_string()), "instances[0].bbox");

        let mut v = manifest_json(&two_instances());
        v.as_object_mut().unwrap().remove("source_dims");
        assert_eq!(err_field(&v.to_string()), "source_dims");

        let mut v = manifest_json(&two_instances());
        v["order"] = serde_json::json!("random");
        assert!(parse_manifest(&v.to_string()).is_err());
    }
}
