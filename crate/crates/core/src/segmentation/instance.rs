use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{mask_apply, mask_union, BBox, BinaryMask, Image};

/// One detected object: a non-empty mask with its label and confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMask {
    mask: BinaryMask,
    label: String,
    score: f64,
    bbox: BBox,
}

impl InstanceMask {
    /// Fails when the mask is empty or the score lies outside `[0, 1]`.
    pub fn new(mask: BinaryMask, label: impl Into<String>, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::contract(format!("instance score {score} outside [0, 1]")));
        }
        let bbox = mask
            .bbox()
            .ok_or_else(|| Error::contract("instance mask has no set pixels"))?;
        Ok(InstanceMask {
            mask,
            label: label.into(),
            score,
            bbox,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    /// Tight box around the set pixels, exclusive on the far corner.
    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.mask.area()
    }
}

/// How the instance list of a result is ordered, as recorded in manifests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    #[default]
    AreaDesc,
    Explicit,
}

/// Paste order requested by the caller. `Explicit` lists positions in the
/// current instance list; later entries are pasted last and stay on top.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum PasteOrder {
    #[default]
    AreaDesc,
    /// Keep the order the backend or manifest produced.
    Manifest,
    Explicit(Vec<usize>),
}

impl fmt::Display for PasteOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PasteOrder::AreaDesc => f.write_str("area-desc"),
            PasteOrder::Manifest => f.write_str("manifest"),
            PasteOrder::Explicit(ix) => {
                let s: Vec<String> = ix.iter().map(|i| i.to_string()).collect();
                f.write_str(&s.join(","))
            }
        }
    }
}

impl FromStr for PasteOrder {
    type Err = String;

    /// Accepts `area-desc`, `manifest`, or a comma-separated index list
    /// such as `2,0,1`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "area-desc" => Ok(PasteOrder::AreaDesc),
            "manifest" => Ok(PasteOrder::Manifest),
            list => list
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(PasteOrder::Explicit)
                .map_err(|_| {
                    format!("paste order `{s}` is not `area-desc`, `manifest` or a list like `2,0,1`")
                }),
        }
    }
}

impl Serialize for PasteOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PasteOrder::Explicit(ix) => ix.serialize(s),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for PasteOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            List(Vec<usize>),
        }
        match Repr::deserialize(d)? {
            Repr::List(ix) => Ok(PasteOrder::Explicit(ix)),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Disjoint instances plus the background, which covers every pixel no
/// instance claims.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    instances: Vec<InstanceMask>,
    background: BinaryMask,
    source_dims: (u32, u32),
    ordering: Ordering,
}

impl SegmentationResult {
    /// Builds a result from already-disjoint instances, keeping their order.
    pub fn new(source_dims: (u32, u32), instances: Vec<InstanceMask>, ordering: Ordering) -> Result<Self> {
        let (w, h) = source_dims;
        if w == 0 || h == 0 {
            return Err(Error::contract("source dimensions must be positive"));
        }
        for (i, inst) in instances.iter().enumerate() {
            if inst.mask.dims() != source_dims {
                return Err(Error::contract(format!(
                    "instance {i} mask is {:?}, source is {source_dims:?}",
                    inst.mask.dims()
                )));
            }
        }
        let mut claimed = BinaryMask::zeros(w, h);
        for (i, inst) in instances.iter().enumerate() {
            if claimed.intersects(&inst.mask) {
                return Err(Error::contract(format!(
                    "instance {i} overlaps an earlier instance; resolve overlaps first"
                )));
            }
            claimed = mask_union(w, h, [&claimed, &inst.mask])?;
        }
        Ok(SegmentationResult {
            instances,
            background: claimed.complement(),
            source_dims,
            ordering,
        })
    }

    /// No instances: the background is the whole frame.
    pub fn empty(width: u32, height: u32) -> Self {
        SegmentationResult {
            instances: Vec::new(),
            background: BinaryMask::ones(width, height),
            source_dims: (width, height),
            ordering: Ordering::AreaDesc,
        }
    }

    pub fn instances(&self) -> &[InstanceMask] {
        &self.instances
    }

    pub fn background(&self) -> &BinaryMask {
        &self.background
    }

    pub fn source_dims(&self) -> (u32, u32) {
        self.source_dims
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// True when every pixel belongs to exactly one of the background and
    /// the instances.
    pub fn is_partition(&self) -> bool {
        let (w, h) = self.source_dims;
        (0..h).all(|y| {
            (0..w).all(|x| {
                let owners = usize::from(self.background.get(x, y))
                    + self.instances.iter().filter(|i| i.mask.get(x, y)).count();
                owners == 1
            })
        })
    }

    /// Reorders instances for pasting.
    pub fn with_order(mut self, order: &PasteOrder) -> Result<Self> {
        match order {
            PasteOrder::Manifest => {}
            PasteOrder::AreaDesc => {
                // Stable: equal areas keep their relative order.
                self.instances.sort_by_key(|i| std::cmp::Reverse(i.area()));
                self.ordering = Ordering::AreaDesc;
            }
            PasteOrder::Explicit(ix) => {
                let n = self.instances.len();
                let mut seen = vec![false; n];
                for &i in ix {
                    if i >= n || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::contract(format!(
                            "paste order {order} is not a permutation of 0..{n}"
                        )));
                    }
                }
                if ix.len() != n {
                    return Err(Error::contract(format!(
                        "paste order {order} lists {} of {n} instances",
                        ix.len()
                    )));
                }
                self.instances = ix.iter().map(|&i| self.instances[i].clone()).collect();
                self.ordering = Ordering::Explicit;
            }
        }
        Ok(self)
    }
}

/// Makes masks pairwise disjoint. Contested pixels go to the instance with
/// the higher score, then the larger (original) area, then the earlier
/// position. Instances left empty are dropped; survivors keep input order.
pub fn resolve_overlaps(instances: Vec<InstanceMask>) -> Vec<InstanceMask> {
    let Some(first) = instances.first() else {
        return instances;
    };
    let (w, h) = first.mask.dims();
    let mut priority: Vec<usize> = (0..instances.len()).collect();
    priority.sort_by(|&a, &b| {
        let (ia, ib) = (&instances[a], &instances[b]);
        ib.score
            .total_cmp(&ia.score)
            .then(ib.area().cmp(&ia.area()))
            .then(a.cmp(&b))
    });
    let mut claimed = BinaryMask::zeros(w, h);
    let mut resolved: Vec<Option<BinaryMask>> = vec![None; instances.len()];
    for &i in &priority {
        let mut m = instances[i].mask.clone();
        m.subtract(&claimed);
        claimed = mask_union(w, h, [&claimed, &instances[i].mask]).expect("masks share dims");
        resolved[i] = Some(m);
    }
    instances
        .into_iter()
        .zip(resolved)
        .filter_map(|(inst, m)| {
            let m = m.expect("every instance visited");
            InstanceMask::new(m, inst.label, inst.score).ok()
        })
        .collect()
}

/// Full-frame pieces, each with its object at the original position on black.
#[derive(Clone, Debug, PartialEq)]
pub struct Pieces {
    pub background: Image,
    pub instances: Vec<Image>,
}

pub fn extract_pieces(img: &Image, seg: &SegmentationResult) -> Result<Pieces> {
    if img.dims() != seg.source_dims {
        return Err(Error::contract(format!(
            "image is {:?}, segmentation is for {:?}",
            img.dims(),
            seg.source_dims
        )));
    }
    Ok(Pieces {
        background: mask_apply(img, &seg.background)?,
        instances: seg
            .instances
            .iter()
            .map(|i| mask_apply(img, &i.mask))
            .collect::<Result<_>>()?,
    })
}
