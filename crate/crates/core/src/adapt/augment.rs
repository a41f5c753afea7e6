use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SceneRng;
use crate::types::{BinaryMask, FeatureMap, PseudoMask, PseudoMaskSet};

/// A concrete geometric transform: nearest-neighbour resize by `scale`,
/// crop of `crop_height x crop_width` at `(top, left)` in the resized grid,
/// then an optional horizontal mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub scale: f64,
    pub top: usize,
    pub left: usize,
    pub crop_height: usize,
    pub crop_width: usize,
    pub hflip: bool,
}

impl AugmentSpec {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            scale: 1.0,
            top: 0,
            left: 0,
            crop_height: height,
            crop_width: width,
            hflip: false,
        }
    }

    pub fn scaled_dims(&self, height: usize, width: usize) -> (usize, usize) {
        scaled(height, width, self.scale)
    }

    fn validate(&self, height: usize, width: usize) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig("scale must be positive".into()));
        }
        let (sh, sw) = self.scaled_dims(height, width);
        if self.crop_height == 0
            || self.crop_width == 0
            || self.top + self.crop_height > sh
            || self.left + self.crop_width > sw
        {
            return Err(Error::InvalidConfig(format!(
                "crop {}x{} at ({}, {}) exceeds resized {sh}x{sw}",
                self.crop_height, self.crop_width, self.top, self.left
            )));
        }
        Ok(())
    }

    /// Source pixel index for every output pixel, in row-major order.
    fn source_indices(&self, height: usize, width: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.crop_height * self.crop_width);
        for r in 0..self.crop_height {
            let sr = resample(self.top + r, self.scale, height);
            for c in 0..self.crop_width {
                let cc = if self.hflip { self.crop_width - 1 - c } else { c };
                let sc = resample(self.left + cc, self.scale, width);
                out.push(sr * width + sc);
            }
        }
        out
    }
}

fn scaled(height: usize, width: usize, scale: f64) -> (usize, usize) {
    let s = |n: usize| ((n as f64 * scale).round() as usize).max(1);
    (s(height), s(width))
}

fn resample(i: usize, scale: f64, len: usize) -> usize {
    (((i as f64 + 0.5) / scale).floor() as usize).min(len - 1)
}

/// Distribution the per-step transform is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub scales: Vec<f64>,
    /// Crop side as a fraction of the resized side.
    pub crop_ratio: f64,
    pub hflip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.75, 1.0, 1.25],
            crop_ratio: 0.8,
            hflip_probability: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return Err(Error::InvalidConfig("crop_ratio must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_probability) {
            return Err(Error::InvalidConfig("hflip_probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn sample(&self, height: usize, width: usize, rng: &mut SceneRng) -> Result<AugmentSpec> {
        self.validate()?;
        let scale = self.scales[rng.below(self.scales.len())];
        let (sh, sw) = scaled(height, width, scale);
        let ch = ((sh as f64 * self.crop_ratio).round() as usize).clamp(1, sh);
        let cw = ((sw as f64 * self.crop_ratio).round() as usize).clamp(1, sw);
        let top = rng.int_inclusive(0, sh - ch);
        let left = rng.int_inclusive(0, sw - cw);
        Ok(AugmentSpec {
            scale,
            top,
            left,
            crop_height: ch,
            crop_width: cw,
            hflip: rng.bernoulli(self.hflip_probability),
        })
    }
}

/// Applies the same transform to a feature map and to its masks. Masks that
/// fall entirely outside the crop are removed.
pub fn apply_augment(
    features: &FeatureMap,
    masks: &PseudoMaskSet,
    spec: &AugmentSpec,
) -> Result<(FeatureMap, PseudoMaskSet)> {
    if features.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: masks.dims(),
            actual: features.dims(),
        });
    }
    let f = augment_features(features, spec)?;
    let (h, w) = features.dims();
    let src = spec.source_indices(h, w);
    let out = masks
        .masks()
        .iter()
        .filter_map(|pm| {
            let m = pm.mask();
            let bits = src.iter().map(|&i| m.get_index(i)).collect();
            let mask = BinaryMask::from_bits(spec.crop_height, spec.crop_width, bits).ok()?;
            if mask.is_empty() {
                return None;
            }
            PseudoMask::from_calibration(pm.category(), pm.dist().clone(), mask).ok()
        })
        .collect();
    Ok((
        f,
        PseudoMaskSet::new(spec.crop_height, spec.crop_width, masks.num_categories(), out)?,
    ))
}

pub fn augment_features(features: &FeatureMap, spec: &AugmentSpec) -> Result<FeatureMap> {
    let (h, w) = features.dims();
    spec.validate(h, w)?;
    let src = spec.source_indices(h, w);
    let mut values = Vec::with_capacity(features.channels() * src.len());
    for ch in 0..features.channels() {
        let plane = features.plane(ch);
        values.extend(src.iter().map(|&i| plane[i]));
    }
    FeatureMap::new(features.channels(), spec.crop_height, spec.crop_width, values)
}
