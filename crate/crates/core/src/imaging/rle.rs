//! COCO-style uncompressed run-length encoding of binary masks.
//!
//! Runs are taken in column-major order and alternate between unset and set
//! pixels, always starting with an unset run (which may be 0 long).

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Rle {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                if mask.get(x, y) != current {
                    counts.push(run);
                    run = 0;
                    current = !current;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle { size: [h, w], counts }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let [h, w] = self.size;
        let total = h as u64 * w as u64;
        let sum: u64 = self.counts.iter().map(|c| *c as u64).sum();
        if sum != total {
            return Err(Error::manifest(
                "rle.counts",
                format!("runs cover {sum} pixels, mask has {total}"),
            ));
        }
        let mut mask = BinaryMask::zeros(w, h);
        let mut idx = 0u64;
        let mut value = false;
        for &c in &self.counts {
            if value {
                for i in idx..idx + c as u64 {
                    let (x, y) = ((i / h as u64) as u32, (i % h as u64) as u32);
                    mask.set(x, y, true);
                }
            }
            idx += c as u64;
            value = !value;
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_major_runs_start_unset() {
        // 2 rows x 3 cols, set pixels at (x=0,y=0) and (x=1,y=1):
        // column-major order: (0,0)=1 (0,1)=0 (1,0)=0 (1,1)=1 (2,0)=0 (2,1)=0
        let mut m = BinaryMask::zeros(3, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        let rle = Rle::encode(&m);
        assert_eq!(rle.size, [2, 3]);
        assert_eq!(rle.counts, vec![0, 1, 2, 1, 2]);
        assert_eq!(rle.decode().unwrap(), m);
    }

    #[test]
    fn json_shape() {
        let rle = Rle::encode(&BinaryMask::ones(2, 2));
        assert_eq!(
            serde_json::to_string(&rle).unwrap(),
            r#"{"size":[2,2],"counts":[0,4]}"#
        );
    }

    #[test]
    fn bad_total_is_rejected() {
        let rle = Rle {
            size: [2, 2],
            counts: vec![1, 1],
        };
        assert!(rle.decode().is_err());
    }

    proptest! {
        #[test]
        fn round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let m = BinaryMask::from_fn(w, h, |x, y| {
                (seed.rotate_left(x * 7 + y * 3) ^ (x as u64 * 31 + y as u64)) & 1 == 1
            });
            prop_assert_eq!(Rle::encode(&m).decode().unwrap(), m);
        }
    }
}
