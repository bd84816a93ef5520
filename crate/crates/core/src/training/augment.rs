use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    None,
    /// One slice permutation shared by the whole batch.
    #[default]
    BatchWise,
    /// An independent permutation per record.
    RowWise,
}

/// Time-slice shuffling of the motion signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationMode {
    pub kind: AugmentationKind,
    pub slice_size: usize,
    /// Slices per record; `None` uses just enough to cover the signal.
    pub n_slices: Option<usize>,
}

impl Default for AugmentationMode {
    fn default() -> Self {
        Self { kind: AugmentationKind::BatchWise, slice_size: 32, n_slices: Some(47) }
    }
}

impl AugmentationMode {
    pub fn none() -> Self {
        Self { kind: AugmentationKind::None, ..Self::default() }
    }

    /// Slice count for a signal of `len` samples.
    pub fn slices_for(&self, len: usize) -> Result<usize> {
        if self.slice_size == 0 {
            return arg("augmentation slice size must be at least 1");
        }
        let k = self.n_slices.unwrap_or(len.div_ceil(self.slice_size));
        if k * self.slice_size < len {
            return arg(format!(
                "{k} slices of {} samples cannot cover a {len}-sample signal",
                self.slice_size
            ));
        }
        Ok(k)
    }
}

/// Augmented batch `[b, 3, k·s]` and the slice order used for each record.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub data: Vec<f32>,
    pub padded_len: usize,
    pub perms: Vec<Vec<usize>>,
}

/// Zero-pad each channel to `k·s` samples, cut it into `k` slices and
/// reorder the slices. All three channels of a record share its order.
pub fn augment_batch<R: Rng + ?Sized>(
    batch: &[f32],
    b: usize,
    len: usize,
    mode: &AugmentationMode,
    rng: &mut R,
) -> Result<Augmented> {
    if batch.len() != b * 3 * len {
        return arg(format!("batch holds {} values, expected {b}×3×{len}", batch.len()));
    }
    let k = mode.slices_for(len)?;
    let s = mode.slice_size;
    let padded_len = k * s;
    let identity: Vec<usize> = (0..k).collect();
    let shared = {
        let mut p = identity.clone();
        if mode.kind == AugmentationKind::BatchWise {
            p.shuffle(rng);
        }
        p
    };
    let mut data = vec![0f32; b * 3 * padded_len];
    let mut perms = Vec::with_capacity(b);
    let mut padded = vec![0f32; padded_len];
    for r in 0..b {
        let perm = match mode.kind {
            AugmentationKind::RowWise => {
                let mut p = identity.clone();
                p.shuffle(rng);
                p
            }
            _ => shared.clone(),
        };
        for c in 0..3 {
            let src = &batch[(r * 3 + c) * len..(r * 3 + c + 1) * len];
            padded[..len].copy_from_slice(src);
            padded[len..].fill(0.0);
            let dst = &mut data[(r * 3 + c) * padded_len..(r * 3 + c + 1) * padded_len];
            for (slot, &from) in perm.iter().enumerate() {
                dst[slot * s..(slot + 1) * s].copy_from_slice(&padded[from * s..(from + 1) * s]);
            }
        }
        perms.push(perm);
    }
    Ok(Augmented { data, padded_len, perms })
}

/// Keep the first `len` samples of every channel of `[b, 3, padded]`.
pub fn crop(data: &[f32], b: usize, padded: usize, len: usize) -> Vec<f32> {
    data.chunks_exact(padded).take(b * 3).flat_map(|ch| ch[..len].iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn none_only_pads() {
        let x: Vec<f32> = (0..2 * 3 * 1501).map(|i| i as f32).collect();
        let a = augment_batch(&x, 2, 1501, &AugmentationMode::none(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.padded_len, 1504);
        assert_eq!(crop(&a.data, 2, 1504, 1501), x);
        assert!(a.data[1501..1504].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_slicing_covers_full_records() {
        assert_eq!(AugmentationMode::default().slices_for(1501).unwrap(), 47);
        assert!(AugmentationMode::default().slices_for(1505).is_err());
        assert_eq!(AugmentationMode { n_slices: None, ..Default::default() }.slices_for(301).unwrap(), 10);
    }
}
