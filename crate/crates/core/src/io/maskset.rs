//! JSON documents holding pseudo masks as run-length encoded bitmaps.

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::hmc::CalibratedMask;
use crate::types::{BinaryMask, CategoryDistribution, PseudoMask, PseudoMaskSet};

/// Row-major run lengths alternating 0-runs and 1-runs, starting with a
/// (possibly empty) 0-run. The runs sum to the pixel count.
pub fn rle_encode(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &bit in mask.bits() {
        if bit != current {
            runs.push(len);
            current = bit;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u32], height: usize, width: usize) -> Result<BinaryMask, FormatError> {
    let n = height * width;
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != n as u64 {
        return Err(FormatError::RleLength {
            expected: n,
            actual: total,
        });
    }
    let mut bits = Vec::with_capacity(n);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat(i % 2 == 1).take(r as usize));
    }
    BinaryMask::from_bits(height, width, bits).map_err(FormatError::Content)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub category: usize,
    pub probs: Vec<f32>,
    pub rle: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_category: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_rle: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSetDocument {
    pub height: usize,
    pub width: usize,
    pub num_categories: usize,
    pub category_names: Vec<String>,
    /// Generator identifier and seed when the masks were synthesised.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub masks: Vec<MaskRecord>,
}

/// `category_<i>` for every index.
pub fn default_category_names(num_categories: usize) -> Vec<String> {
    (0..num_categories).map(|c| format!("category_{c}")).collect()
}

impl MaskSetDocument {
    pub fn from_mask_set(set: &PseudoMaskSet, category_names: Vec<String>) -> Self {
        Self {
            height: set.height(),
            width: set.width(),
            num_categories: set.num_categories(),
            category_names,
            rng: None,
            seed: None,
            masks: set
                .masks()
                .iter()
                .map(|m| MaskRecord {
                    category: m.category(),
                    probs: m.dist().as_slice().to_vec(),
                    rle: rle_encode(m.mask()),
                    corrected_category: None,
                    corrected_rle: None,
                    dropped: None,
                })
                .collect(),
        }
    }

    /// Original masks together with their calibration outcome.
    pub fn from_calibrated(
        calibrated: &[CalibratedMask],
        height: usize,
        width: usize,
        num_categories: usize,
        category_names: Vec<String>,
    ) -> Self {
        Self {
            height,
            width,
            num_categories,
            category_names,
            rng: None,
            seed: None,
            masks: calibrated
                .iter()
                .map(|cm| MaskRecord {
                    category: cm.original.category(),
                    probs: cm.original.dist().as_slice().to_vec(),
                    rle: rle_encode(cm.original.mask()),
                    corrected_category: Some(cm.corrected_category),
                    corrected_rle: Some(rle_encode(&cm.corrected_mask)),
                    dropped: Some(cm.dropped),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let invalid = |msg: String| Err(FormatError::Invalid(msg));
        if self.category_names.len() != self.num_categories {
            return invalid(format!(
                "{} category names for {} categories",
                self.category_names.len(),
                self.num_categories
            ));
        }
        for (k, m) in self.masks.iter().enumerate() {
            if m.probs.len() != self.num_categories {
                return invalid(format!(
                    "mask {k}: {} probabilities for {} categories",
                    m.probs.len(),
                    self.num_categories
                ));
            }
            for c in std::iter::once(m.category).chain(m.corrected_category) {
                if c >= self.num_categories {
                    return invalid(format!("mask {k}: category {c} out of range"));
                }
            }
            if m.corrected_category.is_some() != m.corrected_rle.is_some() {
                return invalid(format!(
                    "mask {k}: corrected_category and corrected_rle must appear together"
                ));
            }
        }
        Ok(())
    }

    /// The original (uncalibrated) masks.
    pub fn to_mask_set(&self) -> Result<PseudoMaskSet, FormatError> {
        self.validate()?;
        let masks = self
            .masks
            .iter()
            .map(|m| {
                let mask = rle_decode(&m.rle, self.height, self.width)?;
                let dist = CategoryDistribution::new(m.probs.clone()).map_err(FormatError::Content)?;
                PseudoMask::new(m.category, dist, mask).map_err(FormatError::Content)
            })
            .collect::<Result<Vec<_>, _>>()?;
        PseudoMaskSet::new(self.height, self.width, self.num_categories, masks)
            .map_err(FormatError::Content)
    }

    /// The calibrated masks that were not dropped; records without
    /// calibration fields are taken as they are.
    pub fn to_corrected_mask_set(&self) -> Result<PseudoMaskSet, FormatError> {
        self.validate()?;
        let mut masks = Vec::new();
        for m in &self.masks {
            if m.dropped == Some(true) {
                continue;
            }
            let (category, rle) = match (&m.corrected_category, &m.corrected_rle) {
                (Some(c), Some(r)) => (*c, r),
                _ => (m.category, &m.rle),
            };
            let mask = rle_decode(rle, self.height, self.width)?;
            let dist = CategoryDistribution::new(m.probs.clone()).map_err(FormatError::Content)?;
            masks.push(PseudoMask::from_calibration(category, dist, mask).map_err(FormatError::Content)?);
        }
        PseudoMaskSet::new(self.height, self.width, self.num_categories, masks)
            .map_err(FormatError::Content)
    }
}
