//! Shared data model: feature grids, binary masks, category distributions,
//! pseudo masks, centroid stores and panoptic label maps, plus the small
//! numeric kernels (masked pooling, L1 distance, softmax) the calibration
//! stages are built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `channels x height x width` grid of 32-bit features, stored
/// channel-major (each channel is a row-major `height x width` plane).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != channels * height * width {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: channels * height * width,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    /// Builds a map by evaluating `f(channel, row, col)` for every entry.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    values.push(f(c, r, col));
                }
            }
        }
        Self::new(channels, height, width, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[(channel * self.height + row) * self.width + col]
    }

    /// Value of `channel` at flat pixel index `idx = row * width + col`.
    #[inline]
    pub fn at(&self, channel: usize, idx: usize) -> f32 {
        self.values[channel * self.height * self.width + idx]
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.values[channel * n..(channel + 1) * n]
    }

    /// Feature vector of the pixel at flat index `idx`, widened to f64.
    pub fn pixel_vector(&self, idx: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.at(c, idx) as f64).collect()
    }

    pub(crate) fn pixel_into(&self, idx: usize, out: &mut [f64]) {
        let n = self.height * self.width;
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.values[c * n + idx] as f64;
        }
    }
}

/// Row-major `height x width` boolean mask with a cached foreground count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    area: usize,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
            area: 0,
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
            area: height * width,
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: height * width,
            });
        }
        let area = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            height,
            width,
            bits,
            area,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        let area = bits.iter().filter(|&&b| b).count();
        Self {
            height,
            width,
            bits,
            area,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn get_index(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        let old = std::mem::replace(&mut self.bits[idx], value);
        match (old, value) {
            (false, true) => self.area += 1,
            (true, false) => self.area -= 1,
            _ => {}
        }
    }

    /// Flat indices of foreground pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        other.ensure_dims(self.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        BinaryMask::from_bits(self.height, self.width, bits)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Probability vector over the `C` categories of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct CategoryDistribution {
    probs: Vec<f32>,
}

impl CategoryDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-5;

    pub fn new(probs: Vec<f32>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("category distribution"));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidConfig("negative probability".into()));
        }
        let sum: f64 = probs.iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(category: usize, count: usize) -> Result<Self> {
        if category >= count {
            return Err(Error::CategoryOutOfRange { category, count });
        }
        let mut probs = vec![0.0; count];
        probs[category] = 1.0;
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, category: usize) -> f32 {
        self.probs[category]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.probs
    }

    /// Index of the largest probability; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        argmax(self.probs.iter().map(|&p| p as f64))
    }
}

impl TryFrom<Vec<f32>> for CategoryDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f32>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<CategoryDistribution> for Vec<f32> {
    fn from(d: CategoryDistribution) -> Self {
        d.probs
    }
}

/// One predicted segment: category, category distribution and binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMask {
    category: usize,
    dist: CategoryDistribution,
    mask: BinaryMask,
}

impl PseudoMask {
    /// A fresh prediction. `category` must be a maximiser of `dist` and the
    /// mask must be non-empty.
    pub fn new(category: usize, dist: CategoryDistribution, mask: BinaryMask) -> Result<Self> {
        let p = Self::from_calibration(category, dist, mask)?;
        let max = p.dist.as_slice().iter().cloned().fold(f32::MIN, f32::max);
        if p.dist.prob(category) < max {
            return Err(Error::InvalidConfig(format!(
                "category {category} is not the argmax of its distribution"
            )));
        }
        Ok(p)
    }

    /// A mask whose category was reassigned by calibration, so it need not
    /// match the argmax of `dist`.
    pub fn from_calibration(
        category: usize,
        dist: CategoryDistribution,
        mask: BinaryMask,
    ) -> Result<Self> {
        if category >= dist.len() {
            return Err(Error::CategoryOutOfRange {
                category,
                count: dist.len(),
            });
        }
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            category,
            dist,
            mask,
        })
    }

    /// Builds a mask with the argmax category of `dist`.
    pub fn from_distribution(dist: CategoryDistribution, mask: BinaryMask) -> Result<Self> {
        let category = dist.argmax();
        Self::new(category, dist, mask)
    }

    pub fn category(&self) -> usize {
        self.category
    }

    pub fn dist(&self) -> &CategoryDistribution {
        &self.dist
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Probability the distribution assigns to the carried category.
    pub fn confidence(&self) -> f32 {
        self.dist.prob(self.category)
    }
}

/// The `K` pseudo masks predicted for one image. Masks may overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMaskSet {
    height: usize,
    width: usize,
    num_categories: usize,
    masks: Vec<PseudoMask>,
}

impl PseudoMaskSet {
    pub fn new(
        height: usize,
        width: usize,
        num_categories: usize,
        masks: Vec<PseudoMask>,
    ) -> Result<Self> {
        for m in &masks {
            m.mask.ensure_dims((height, width))?;
            if m.dist.len() != num_categories {
                return Err(Error::LengthMismatch {
                    left: m.dist.len(),
                    right: num_categories,
                });
            }
        }
        Ok(Self {
            height,
            width,
            num_categories,
            masks,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn masks(&self) -> &[PseudoMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn into_masks(self) -> Vec<PseudoMask> {
        self.masks
    }
}

/// Per-category feature centroids with validity flags and the EMA
/// coefficient used when they are refreshed.
///
/// Centroids are held in f64 so repeated EMA updates stay exact enough to
/// track the closed-form geometric decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidStore {
    centroids: Vec<Vec<f64>>,
    valid: Vec<bool>,
    gamma_prime: f64,
}

impl CentroidStore {
    pub fn empty(num_categories: usize, dim: usize, gamma_prime: f64) -> Result<Self> {
        Self::from_parts(
            vec![vec![0.0; dim]; num_categories],
            vec![false; num_categories],
            gamma_prime,
        )
    }

    pub fn from_parts(centroids: Vec<Vec<f64>>, valid: Vec<bool>, gamma_prime: f64) -> Result<Self> {
        if !(gamma_prime > 0.0 && gamma_prime < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma_prime must lie in (0, 1), got {gamma_prime}"
            )));
        }
        if centroids.len() != valid.len() {
            return Err(Error::LengthMismatch {
                left: centroids.len(),
                right: valid.len(),
            });
        }
        let dim = centroids.first().map_or(0, Vec::len);
        for (c, v) in centroids.iter().zip(&valid) {
            if c.len() != dim {
                return Err(Error::LengthMismatch {
                    left: c.len(),
                    right: dim,
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("centroid"));
            }
            if !v && c.iter().any(|&x| x != 0.0) {
                return Err(Error::InvalidConfig(
                    "invalid centroid must be all-zero".into(),
                ));
            }
        }
        Ok(Self {
            centroids,
            valid,
            gamma_prime,
        })
    }

    pub fn num_categories(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn gamma_prime(&self) -> f64 {
        self.gamma_prime
    }

    pub fn centroid(&self, category: usize) -> &[f64] {
        &self.centroids[category]
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn is_valid(&self, category: usize) -> bool {
        self.valid[category]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub(crate) fn set_centroid(&mut self, category: usize, value: Vec<f64>) {
        self.centroids[category] = value;
        self.valid[category] = true;
    }

    /// Index of the nearest valid centroid under L1; ties go to the lower
    /// category. `None` when no centroid is valid.
    pub fn nearest(&self, v: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (c, centroid) in self.centroids.iter().enumerate() {
            if !self.valid[c] {
                continue;
            }
            let d = l1_unchecked(v, centroid);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c)
    }
}

/// Category value of unlabelled pixels.
pub const VOID: u32 = u32::MAX;
/// Instance value of unlabelled pixels.
pub const NO_INSTANCE: u32 = u32::MAX;

/// Non-overlapping per-pixel `(category, instance)` map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticLabel {
    height: usize,
    width: usize,
    category: Vec<u32>,
    instance: Vec<u32>,
}

/// One `(category, instance)` segment of a [`PanopticLabel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub category: u32,
    pub instance: u32,
    pub mask: BinaryMask,
}

impl PanopticLabel {
    pub fn void(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            category: vec![VOID; height * width],
            instance: vec![NO_INSTANCE; height * width],
        }
    }

    pub fn from_planes(
        height: usize,
        width: usize,
        category: Vec<u32>,
        instance: Vec<u32>,
    ) -> Result<Self> {
        let n = height * width;
        if category.len() != n || instance.len() != n {
            return Err(Error::LengthMismatch {
                left: category.len().max(instance.len()),
                right: n,
            });
        }
        if category
            .iter()
            .zip(&instance)
            .any(|(&c, &i)| c == VOID && i != NO_INSTANCE)
        {
            return Err(Error::InvalidConfig(
                "VOID pixel carries an instance id".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            category,
            instance,
        })
    }

    /// Paints disjoint segments onto a VOID canvas.
    pub fn from_segments(height: usize, width: usize, segments: &[Segment]) -> Result<Self> {
        let mut label = Self::void(height, width);
        for s in segments {
            s.mask.ensure_dims((height, width))?;
            if s.category == VOID {
                return Err(Error::InvalidConfig("segment with VOID category".into()));
            }
            for idx in s.mask.ones() {
                if label.category[idx] != VOID {
                    return Err(Error::InvalidConfig(format!(
                        "segments overlap at pixel {idx}"
                    )));
                }
                label.category[idx] = s.category;
                label.instance[idx] = s.instance;
            }
        }
        Ok(label)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn category_plane(&self) -> &[u32] {
        &self.category
    }

    pub fn instance_plane(&self) -> &[u32] {
        &self.instance
    }

    pub fn category_at(&self, idx: usize) -> u32 {
        self.category[idx]
    }

    pub fn instance_at(&self, idx: usize) -> u32 {
        self.instance[idx]
    }

    pub fn is_void(&self, idx: usize) -> bool {
        self.category[idx] == VOID
    }

    pub(crate) fn set(&mut self, idx: usize, category: u32, instance: u32) {
        self.category[idx] = category;
        self.instance[idx] = instance;
    }

    /// Segment keys in ascending `(category, instance)` order; the position
    /// of a key in this list is its segment id.
    pub fn segment_keys(&self) -> Vec<(u32, u32)> {
        let mut keys: Vec<(u32, u32)> = self
            .category
            .iter()
            .zip(&self.instance)
            .filter(|(&c, _)| c != VOID)
            .map(|(&c, &i)| (c, i))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// Per-pixel segment id (see [`Self::segment_keys`]), `None` for VOID.
    pub fn segment_ids(&self) -> (Vec<(u32, u32)>, Vec<Option<usize>>) {
        let keys = self.segment_keys();
        let ids = self
            .category
            .iter()
            .zip(&self.instance)
            .map(|(&c, &i)| {
                if c == VOID {
                    None
                } else {
                    keys.binary_search(&(c, i)).ok()
                }
            })
            .collect();
        (keys, ids)
    }

    /// All segments, ordered by `(category, instance)`.
    pub fn segments(&self) -> Vec<Segment> {
        let (keys, ids) = self.segment_ids();
        let mut masks = vec![BinaryMask::empty(self.height, self.width); keys.len()];
        for (idx, id) in ids.iter().enumerate() {
            if let Some(id) = id {
                masks[*id].set(idx, true);
            }
        }
        keys.into_iter()
            .zip(masks)
            .map(|((category, instance), mask)| Segment {
                category,
                instance,
                mask,
            })
            .collect()
    }
}

/// Normalisation applied when pooling features inside a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Divide the masked sum by the mask area.
    #[default]
    MaskMean,
    /// Divide the masked sum by `H * W` (literal global average pooling of
    /// the masked map).
    StrictGap,
}

/// Pools the feature vectors under `mask` into one vector.
pub fn mask_pooled_vector(
    features: &FeatureMap,
    mask: &BinaryMask,
    mode: PoolingMode,
) -> Result<Vec<f64>> {
    mask.ensure_dims(features.dims())?;
    let denom = match mode {
        PoolingMode::MaskMean => {
            if mask.is_empty() {
                return Err(Error::EmptyMask);
            }
            mask.area() as f64
        }
        PoolingMode::StrictGap => (features.height() * features.width()) as f64,
    };
    let mut out = vec![0.0f64; features.channels()];
    for (c, slot) in out.iter_mut().enumerate() {
        let plane = features.plane(c);
        let sum: f64 = mask.ones().map(|i| plane[i] as f64).sum();
        *slot = sum / denom;
    }
    Ok(out)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(l1_unchecked(a, b))
}

#[inline]
pub(crate) fn l1_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Max-subtracted softmax in f64.
pub fn softmax_weights(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("softmax scores"));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn softmax(scores: &[f64]) -> Result<CategoryDistribution> {
    let w = softmax_weights(scores)?;
    Ok(CategoryDistribution {
        probs: w.into_iter().map(|x| x as f32).collect(),
    })
}

/// Index of the largest value; ties go to the lower index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
