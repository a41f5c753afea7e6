//! Hierarchical mask calibration.
//!
//! Each pseudo mask passes through up to three stages, by default in
//! coarse-to-fine order:
//!
//! * **region**: the category is re-chosen as `argmax_c w_c * p_c`, where
//!   `w = softmax(-|v - centroid_c|_1 / tau)` and `v` is the feature pooled
//!   under the mask;
//! * **superpixel**: the mask is replaced by the union of every superpixel it
//!   overlaps;
//! * **pixel**: each superpixel inside the mask is kept only if enough of its
//!   pixels have the mask category as their nearest centroid.
//!
//! Centroids are initialised from baseline predictions and refreshed with an
//! exponential moving average over calibrated batches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::{compute_superpixels, overlap_areas, SlicConfig, SuperpixelMap};
use crate::types::{
    argmax, l1_unchecked, mask_pooled_vector, softmax_weights, BinaryMask, CentroidStore,
    FeatureMap, PoolingMode, PseudoMask, PseudoMaskSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Region,
    Superpixel,
    Pixel,
}

impl Stage {
    pub fn letter(self) -> char {
        match self {
            Stage::Region => 'R',
            Stage::Superpixel => 'S',
            Stage::Pixel => 'P',
        }
    }
}

/// Ordered, duplicate-free list of stages, written as letters (`"RSP"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StageOrder(Vec<Stage>);

impl StageOrder {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        for (i, s) in stages.iter().enumerate() {
            if stages[..i].contains(s) {
                return Err(Error::InvalidConfig(format!(
                    "stage {} listed twice",
                    s.letter()
                )));
            }
        }
        Ok(Self(stages))
    }

    pub fn coarse_to_fine() -> Self {
        Self(vec![Stage::Region, Stage::Superpixel, Stage::Pixel])
    }

    pub fn stages(&self) -> &[Stage] {
        &self.0
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.0.contains(&stage)
    }
}

impl Default for StageOrder {
    fn default() -> Self {
        Self::coarse_to_fine()
    }
}

impl FromStr for StageOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'R' => Ok(Stage::Region),
                'S' => Ok(Stage::Superpixel),
                'P' => Ok(Stage::Pixel),
                other => Err(Error::InvalidConfig(format!("unknown stage '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }
}

impl fmt::Display for StageOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.letter())?;
        }
        Ok(())
    }
}

impl TryFrom<String> for StageOrder {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StageOrder> for String {
    fn from(o: StageOrder) -> Self {
        o.to_string()
    }
}

/// How categories without a valid centroid are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidCentroidPolicy {
    /// Weight equal to the mean weight of the valid categories.
    #[default]
    Neutral,
    /// Weight zero.
    Exclude,
}

/// Which category a calibrated mask is filed under when refreshing centroids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidGrouping {
    /// The corrected category and mask.
    #[default]
    Calibrated,
    /// The raw predicted category and mask.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub stage_order: StageOrder,
    /// A superpixel joins the expanded mask when its overlap exceeds this
    /// fraction of its area (0 keeps any overlap).
    pub overlap_ratio_threshold: f64,
    /// Minimum fraction of consistent pixel votes for a superpixel to stay.
    pub vote_majority: f64,
    pub temperature: f64,
    pub invalid_centroid_policy: InvalidCentroidPolicy,
    pub pooling: PoolingMode,
    pub centroid_grouping: CentroidGrouping,
    pub superpixels: SlicConfig,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            stage_order: StageOrder::default(),
            overlap_ratio_threshold: 0.0,
            vote_majority: 0.5,
            temperature: 1.0,
            invalid_centroid_policy: InvalidCentroidPolicy::Neutral,
            pooling: PoolingMode::MaskMean,
            centroid_grouping: CentroidGrouping::Calibrated,
            superpixels: SlicConfig::default(),
        }
    }
}

impl HmcConfig {
    pub fn with_order(order: StageOrder) -> Self {
        Self {
            stage_order: order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap_ratio_threshold) {
            return Err(Error::InvalidConfig(
                "overlap_ratio_threshold must lie in [0, 1)".into(),
            ));
        }
        if !(self.vote_majority > 0.0 && self.vote_majority <= 1.0) {
            return Err(Error::InvalidConfig(
                "vote_majority must lie in (0, 1]".into(),
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// A pseudo mask after calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedMask {
    pub original: PseudoMask,
    pub corrected_category: usize,
    pub corrected_mask: BinaryMask,
    /// Set when a stage emptied the mask; `corrected_mask` is then empty.
    pub dropped: bool,
}

impl CalibratedMask {
    /// The corrected mask as a pseudo mask, `None` when dropped.
    pub fn to_pseudo_mask(&self) -> Option<PseudoMask> {
        if self.dropped {
            return None;
        }
        PseudoMask::from_calibration(
            self.corrected_category,
            self.original.dist().clone(),
            self.corrected_mask.clone(),
        )
        .ok()
    }

    /// Probability of the corrected category under the original distribution.
    pub fn confidence(&self) -> f32 {
        self.original.dist().prob(self.corrected_category)
    }
}

/// Re-weighting factors `w_c = softmax(-|v - centroid_c|_1 / tau)` over the
/// valid centroids, with invalid categories handled per the configured policy.
pub fn calibration_weights(v: &[f64], store: &CentroidStore, cfg: &HmcConfig) -> Result<Vec<f64>> {
    if v.len() != store.dim() {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: store.dim(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("region vector"));
    }
    let valid: Vec<usize> = (0..store.num_categories())
        .filter(|&c| store.is_valid(c))
        .collect();
    if valid.is_empty() {
        return Err(Error::NoValidCentroids);
    }
    let scores: Vec<f64> = valid
        .iter()
        .map(|&c| -l1_unchecked(v, store.centroid(c)) / cfg.temperature)
        .collect();
    let soft = softmax_weights(&scores)?;
    let mut weights = vec![0.0; store.num_categories()];
    for (&c, &w) in valid.iter().zip(&soft) {
        weights[c] = w;
    }
    let invalid = store.num_categories() - valid.len();
    if invalid > 0 && cfg.invalid_centroid_policy == InvalidCentroidPolicy::Neutral {
        let neutral = 1.0 / valid.len() as f64;
        let total = 1.0 + invalid as f64 * neutral;
        for (c, w) in weights.iter_mut().enumerate() {
            if !store.is_valid(c) {
                *w = neutral;
            }
            *w /= total;
        }
    }
    Ok(weights)
}

/// Corrected category of `pm`: `argmax_c w_c * p_c`, ties to the lower index.
pub fn calibrate_region(
    pm: &PseudoMask,
    features: &FeatureMap,
    store: &CentroidStore,
    cfg: &HmcConfig,
) -> Result<usize> {
    region_category(pm, pm.mask(), features, store, cfg)
}

fn region_category(
    pm: &PseudoMask,
    mask: &BinaryMask,
    features: &FeatureMap,
    store: &CentroidStore,
    cfg: &HmcConfig,
) -> Result<usize> {
    if pm.dist().len() != store.num_categories() {
        return Err(Error::LengthMismatch {
            left: pm.dist().len(),
            right: store.num_categories(),
        });
    }
    let v = mask_pooled_vector(features, mask, cfg.pooling)?;
    let w = calibration_weights(&v, store, cfg)?;
    Ok(argmax(
        w.iter()
            .zip(pm.dist().as_slice())
            .map(|(&w, &p)| w * p as f64),
    ))
}

fn mean_vectors(
    batch: impl IntoIterator<Item = (usize, Vec<f64>)>,
    num_categories: usize,
    dim: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut sums = vec![vec![0.0; dim]; num_categories];
    let mut counts = vec![0usize; num_categories];
    for (category, v) in batch {
        if category >= num_categories {
            return Err(Error::CategoryOutOfRange {
                category,
                count: num_categories,
            });
        }
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: dim,
            });
        }
        for (s, x) in sums[category].iter_mut().zip(&v) {
            *s += x;
        }
        counts[category] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    Ok((sums, counts))
}

fn region_vectors<'a>(
    batch: impl IntoIterator<Item = (&'a PseudoMask, &'a FeatureMap)>,
    pooling: PoolingMode,
) -> Result<Vec<(usize, Vec<f64>)>> {
    batch
        .into_iter()
        .map(|(pm, f)| Ok((pm.category(), mask_pooled_vector(f, pm.mask(), pooling)?)))
        .collect()
}

/// Centroid of each category = mean region vector of the masks predicted as
/// that category. Categories without masks are left invalid; an empty input
/// yields a store with no valid centroid.
pub fn init_centroids<'a>(
    predictions: impl IntoIterator<Item = (&'a PseudoMask, &'a FeatureMap)>,
    num_categories: usize,
    dim: usize,
    gamma_prime: f64,
    pooling: PoolingMode,
) -> Result<CentroidStore> {
    let mut store = CentroidStore::empty(num_categories, dim, gamma_prime)?;
    let vectors = region_vectors(predictions, pooling)?;
    let (means, counts) = mean_vectors(vectors, num_categories, dim)?;
    for (c, (mean, n)) in means.into_iter().zip(counts).enumerate() {
        if n > 0 {
            store.set_centroid(c, mean);
        }
    }
    Ok(store)
}

/// One EMA refresh: `centroid <- g * centroid + (1 - g) * batch_mean` for every
/// category present in the batch. Absent categories are untouched; an invalid
/// category seen in the batch becomes valid at its batch mean.
pub fn update_centroids<'a>(
    store: &CentroidStore,
    batch: impl IntoIterator<Item = (&'a PseudoMask, &'a FeatureMap)>,
    pooling: PoolingMode,
) -> Result<CentroidStore> {
    let vectors = region_vectors(batch, pooling)?;
    update_with_vectors(store, vectors)
}

pub(crate) fn update_with_vectors(
    store: &CentroidStore,
    vectors: Vec<(usize, Vec<f64>)>,
) -> Result<CentroidStore> {
    if vectors.iter().flat_map(|(_, v)| v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("batch vector"));
    }
    let (means, counts) = mean_vectors(vectors, store.num_categories(), store.dim())?;
    let g = store.gamma_prime();
    let mut next = store.clone();
    for (c, (mean, n)) in means.into_iter().zip(counts).enumerate() {
        if n == 0 {
            continue;
        }
        if store.is_valid(c) {
            let blended = store
                .centroid(c)
                .iter()
                .zip(&mean)
                .map(|(old, new)| g * old + (1.0 - g) * new)
                .collect();
            next.set_centroid(c, blended);
        } else {
            next.set_centroid(c, mean);
        }
    }
    Ok(next)
}

/// Refreshes `store` from one image's calibration output. Dropped masks are
/// skipped; grouping follows `cfg.centroid_grouping`.
pub fn update_centroids_from_calibration(
    store: &CentroidStore,
    calibrated: &[CalibratedMask],
    features: &FeatureMap,
    cfg: &HmcConfig,
) -> Result<CentroidStore> {
    let mut vectors = Vec::new();
    for cm in calibrated.iter().filter(|cm| !cm.dropped) {
        let (category, mask) = match cfg.centroid_grouping {
            CentroidGrouping::Calibrated => (cm.corrected_category, &cm.corrected_mask),
            CentroidGrouping::Raw => (cm.original.category(), cm.original.mask()),
        };
        vectors.push((category, mask_pooled_vector(features, mask, cfg.pooling)?));
    }
    update_with_vectors(store, vectors)
}

/// Union of the superpixels whose overlap with `mask` exceeds
/// `rho * superpixel area`.
pub fn expand_mask_superpixels(
    mask: &BinaryMask,
    sp: &SuperpixelMap,
    rho: f64,
) -> Result<BinaryMask> {
    let areas = overlap_areas(mask, sp)?;
    let sizes = sp.sizes();
    let selected: Vec<bool> = areas
        .iter()
        .zip(&sizes)
        .map(|(&a, &s)| a > 0 && a as f64 > rho * s as f64)
        .collect();
    let (h, w) = sp.dims();
    BinaryMask::from_bits(
        h,
        w,
        (0..h * w).map(|idx| selected[sp.label_at(idx)]).collect(),
    )
}

/// Per-pixel nearest valid centroid, computed lazily.
struct NearestCache<'a> {
    features: &'a FeatureMap,
    store: &'a CentroidStore,
    slots: Vec<Option<Option<usize>>>,
    buf: Vec<f64>,
}

impl<'a> NearestCache<'a> {
    fn new(features: &'a FeatureMap, store: &'a CentroidStore) -> Self {
        Self {
            features,
            store,
            slots: vec![None; features.height() * features.width()],
            buf: vec![0.0; features.channels()],
        }
    }

    fn get(&mut self, idx: usize) -> Option<usize> {
        if let Some(hit) = self.slots[idx] {
            return hit;
        }
        self.features.pixel_into(idx, &mut self.buf);
        let nearest = self.store.nearest(&self.buf);
        self.slots[idx] = Some(nearest);
        nearest
    }
}

/// Pixel-level voting inside superpixels.
///
/// For every superpixel touched by `mask`, the mask pixels it contains vote
/// for their nearest valid centroid (L1); the part is kept when the share of
/// votes for `category` reaches `cfg.vote_majority`. When `mask` is a union
/// of whole superpixels this keeps or discards whole superpixels. A category
/// without a valid centroid cannot be voted for, so the mask is returned
/// unchanged in that case.
pub fn pixel_vote_filter(
    mask: &BinaryMask,
    sp: &SuperpixelMap,
    features: &FeatureMap,
    store: &CentroidStore,
    category: usize,
    cfg: &HmcConfig,
) -> Result<BinaryMask> {
    mask.ensure_dims(sp.dims())?;
    mask.ensure_dims(features.dims())?;
    if features.channels() != store.dim() {
        return Err(Error::LengthMismatch {
            left: features.channels(),
            right: store.dim(),
        });
    }
    let mut cache = NearestCache::new(features, store);
    vote(mask, sp, &mut cache, category, cfg.vote_majority)
}

fn vote(
    mask: &BinaryMask,
    sp: &SuperpixelMap,
    cache: &mut NearestCache<'_>,
    category: usize,
    majority: f64,
) -> Result<BinaryMask> {
    if category >= cache.store.num_categories() {
        return Err(Error::CategoryOutOfRange {
            category,
            count: cache.store.num_categories(),
        });
    }
    if !cache.store.is_valid(category) {
        return Ok(mask.clone());
    }
    let mut total = vec![0usize; sp.count()];
    let mut agree = vec![0usize; sp.count()];
    for idx in mask.ones() {
        let j = sp.label_at(idx);
        total[j] += 1;
        if cache.get(idx) == Some(category) {
            agree[j] += 1;
        }
    }
    let keep: Vec<bool> = total
        .iter()
        .zip(&agree)
        .map(|(&t, &a)| t > 0 && a as f64 >= majority * t as f64)
        .collect();
    let mut out = mask.clone();
    for idx in mask.ones() {
        if !keep[sp.label_at(idx)] {
            out.set(idx, false);
        }
    }
    Ok(out)
}

/// Calibrates every mask of one image. Superpixels are computed once from
/// `image` with `cfg.superpixels`.
pub fn calibrate_mask_set(
    masks: &PseudoMaskSet,
    features: &FeatureMap,
    image: &FeatureMap,
    store: &CentroidStore,
    cfg: &HmcConfig,
) -> Result<Vec<CalibratedMask>> {
    if masks.is_empty() {
        return Ok(Vec::new());
    }
    let needs_superpixels = cfg.stage_order.contains(Stage::Superpixel)
        || cfg.stage_order.contains(Stage::Pixel);
    if needs_superpixels {
        if image.dims() != masks.dims() {
            return Err(Error::DimensionMismatch {
                expected: masks.dims(),
                actual: image.dims(),
            });
        }
        let sp = compute_superpixels(image, &cfg.superpixels)?;
        calibrate_with_superpixels(masks, features, &sp, store, cfg)
    } else {
        // region-only calibration never looks at superpixels
        let (h, w) = masks.dims();
        let trivial = SuperpixelMap::from_labels(h, w, vec![0; h * w])?;
        calibrate_with_superpixels(masks, features, &trivial, store, cfg)
    }
}

/// As [`calibrate_mask_set`] with a precomputed superpixel map.
pub fn calibrate_with_superpixels(
    masks: &PseudoMaskSet,
    features: &FeatureMap,
    sp: &SuperpixelMap,
    store: &CentroidStore,
    cfg: &HmcConfig,
) -> Result<Vec<CalibratedMask>> {
    cfg.validate()?;
    if masks.is_empty() {
        return Ok(Vec::new());
    }
    if features.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: masks.dims(),
            actual: features.dims(),
        });
    }
    if sp.dims() != masks.dims() {
        return Err(Error::DimensionMismatch {
            expected: masks.dims(),
            actual: sp.dims(),
        });
    }
    if features.channels() != store.dim() || masks.num_categories() != store.num_categories() {
        return Err(Error::LengthMismatch {
            left: features.channels(),
            right: store.dim(),
        });
    }
    if store.valid_count() == 0 {
        return Err(Error::NoValidCentroids);
    }
    let mut cache = NearestCache::new(features, store);
    let mut out = Vec::with_capacity(masks.len());
    for pm in masks.masks() {
        let mut category = pm.category();
        let mut mask = pm.mask().clone();
        for &stage in cfg.stage_order.stages() {
            match stage {
                Stage::Region => {
                    category = region_category(pm, &mask, features, store, cfg)?;
                }
                Stage::Superpixel => {
                    mask = expand_mask_superpixels(&mask, sp, cfg.overlap_ratio_threshold)?;
                }
                Stage::Pixel => {
                    mask = vote(&mask, sp, &mut cache, category, cfg.vote_majority)?;
                }
            }
            if mask.is_empty() {
                break;
            }
        }
        let dropped = mask.is_empty();
        out.push(CalibratedMask {
            original: pm.clone(),
            corrected_category: category,
            corrected_mask: mask,
            dropped,
        });
    }
    Ok(out)
}

/// Non-dropped calibrated masks as a new mask set.
pub fn calibrated_mask_set(
    calibrated: &[CalibratedMask],
    height: usize,
    width: usize,
    num_categories: usize,
) -> Result<PseudoMaskSet> {
    PseudoMaskSet::new(
        height,
        width,
        num_categories,
        calibrated
            .iter()
            .filter_map(CalibratedMask::to_pseudo_mask)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CategoryDistribution;

    fn store(centroids: Vec<Vec<f64>>, valid: Vec<bool>) -> CentroidStore {
        CentroidStore::from_parts(centroids, valid, 0.9).unwrap()
    }

    fn quadrants() -> SuperpixelMap {
        SuperpixelMap::from_labels(
            4,
            4,
            vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3],
        )
        .unwrap()
    }

    fn dist(p: &[f32]) -> CategoryDistribution {
        CategoryDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn weights_two_centroids() {
        let s = store(vec![vec![0.0], vec![2.0]], vec![true, true]);
        let w = calibration_weights(&[0.0], &s, &HmcConfig::default()).unwrap();
        assert!((w[0] - 0.880_797).abs() < 1e-4);
        assert!((w[1] - 0.119_203).abs() < 1e-4);
    }

    #[test]
    fn weights_equidistant_are_uniform() {
        let s = store(vec![vec![-1.0], vec![1.0]], vec![true, true]);
        let w = calibration_weights(&[0.0], &s, &HmcConfig::default()).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn weights_invalid_policies() {
        let s = store(vec![vec![0.0], vec![2.0], vec![0.0]], vec![true, true, false]);
        let exclude = HmcConfig {
            invalid_centroid_policy: InvalidCentroidPolicy::Exclude,
            ..HmcConfig::default()
        };
        let w = calibration_weights(&[0.0], &s, &exclude).unwrap();
        assert!((w[0] - 0.880_797).abs() < 1e-4);
        assert!((w[1] - 0.119_203).abs() < 1e-4);
        assert_eq!(w[2], 0.0);

        // neutral: invalid gets 1/2 before renormalising by 1.5
        let w = calibration_weights(&[0.0], &s, &HmcConfig::default()).unwrap();
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w[0] - 0.880_797 / 1.5).abs() < 1e-4);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let none = store(vec![vec![0.0]; 2], vec![false, false]);
        assert_eq!(
            calibration_weights(&[0.0], &none, &HmcConfig::default()),
            Err(Error::NoValidCentroids)
        );
    }

    #[test]
    fn temperature_scales_distances() {
        let s = store(vec![vec![0.0], vec![2.0]], vec![true, true]);
        let cfg = HmcConfig {
            temperature: 2.0,
            ..HmcConfig::default()
        };
        let w = calibration_weights(&[0.0], &s, &cfg).unwrap();
        // softmax(0, -1)
        assert!((w[0] - 0.731_059).abs() < 1e-5);
    }

    #[test]
    fn region_reweighting_flips_category() {
        // p = [0.6, 0.4]; centroids chosen so w = [0.2, 0.8]:
        // softmax(-d0, -d1) with d0 - d1 = ln 4
        let f = FeatureMap::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let s = store(vec![vec![4f64.ln()], vec![0.0]], vec![true, true]);
        let w = calibration_weights(&[0.0], &s, &HmcConfig::default()).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12 && (w[1] - 0.8).abs() < 1e-12);
        let pm = PseudoMask::new(0, dist(&[0.6, 0.4]), BinaryMask::full(1, 2)).unwrap();
        assert_eq!(calibrate_region(&pm, &f, &s, &HmcConfig::default()).unwrap(), 1);
    }

    #[test]
    fn region_uniform_weights_keep_argmax() {
        let f = FeatureMap::new(1, 1, 1, vec![0.0]).unwrap();
        let s = store(vec![vec![-1.0], vec![1.0], vec![0.0]], vec![true, true, false]);
        let pm = PseudoMask::new(1, dist(&[0.2, 0.5, 0.3]), BinaryMask::full(1, 1)).unwrap();
        let cfg = HmcConfig::default();
        assert_eq!(calibrate_region(&pm, &f, &s, &cfg).unwrap(), 1);
    }

    #[test]
    fn region_one_hot_weights_pick_that_category() {
        // distances 0 vs 1000 give an effectively one-hot weight on category 1
        let f = FeatureMap::new(1, 1, 1, vec![0.0]).unwrap();
        let s = store(vec![vec![1000.0], vec![0.0]], vec![true, true]);
        let pm = PseudoMask::new(0, dist(&[0.9, 0.1]), BinaryMask::full(1, 1)).unwrap();
        assert_eq!(calibrate_region(&pm, &f, &s, &HmcConfig::default()).unwrap(), 1);
    }

    #[test]
    fn init_examples() {
        let f = FeatureMap::new(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let a = PseudoMask::new(0, dist(&[1.0, 0.0, 0.0]), BinaryMask::from_fn(1, 2, |_, c| c == 0)).unwrap();
        let b = PseudoMask::new(0, dist(&[1.0, 0.0, 0.0]), BinaryMask::from_fn(1, 2, |_, c| c == 1)).unwrap();
        let c = PseudoMask::new(2, dist(&[0.0, 0.0, 1.0]), BinaryMask::from_fn(1, 2, |_, c| c == 1)).unwrap();
        let s = init_centroids([(&a, &f), (&b, &f), (&c, &f)], 3, 1, 0.9, PoolingMode::MaskMean)
            .unwrap();
        assert_eq!(s.centroid(0), &[2.0]);
        assert_eq!(s.centroid(2), &[3.0]);
        assert!(s.is_valid(0) && s.is_valid(2));
        assert!(!s.is_valid(1));

        let empty = init_centroids([], 3, 1, 0.9, PoolingMode::MaskMean).unwrap();
        assert_eq!(empty.valid_count(), 0);
    }

    #[test]
    fn update_examples() {
        let f = FeatureMap::new(1, 1, 1, vec![2.0]).unwrap();
        let s = store(vec![vec![1.0], vec![5.0], vec![0.0]], vec![true, true, false]);
        let m0 = PseudoMask::new(0, dist(&[1.0, 0.0, 0.0]), BinaryMask::full(1, 1)).unwrap();
        let next = update_centroids(&s, [(&m0, &f)], PoolingMode::MaskMean).unwrap();
        assert!((next.centroid(0)[0] - 1.1).abs() < 1e-12);
        assert_eq!(next.centroid(1), &[5.0]);
        assert!(!next.is_valid(2));

        let m2 = PseudoMask::new(2, dist(&[0.0, 0.0, 1.0]), BinaryMask::full(1, 1)).unwrap();
        let next = update_centroids(&s, [(&m2, &f)], PoolingMode::MaskMean).unwrap();
        assert!(next.is_valid(2));
        assert_eq!(next.centroid(2), &[2.0]);
    }

    #[test]
    fn expand_examples() {
        let sp = quadrants();
        let mut one = BinaryMask::empty(4, 4);
        one.set(5, true);
        let out = expand_mask_superpixels(&one, &sp, 0.0).unwrap();
        assert_eq!(out, sp.superpixel_mask(0));

        let top = BinaryMask::from_fn(4, 4, |r, _| r < 2);
        assert_eq!(expand_mask_superpixels(&top, &sp, 0.0).unwrap(), top);
        assert!(expand_mask_superpixels(&BinaryMask::empty(4, 4), &sp, 0.0)
            .unwrap()
            .is_empty());

        // rho = 0.3: a 1-of-4 overlap no longer qualifies
        assert!(expand_mask_superpixels(&one, &sp, 0.3).unwrap().is_empty());
    }

    fn vote_fixture(pixels: [f32; 16]) -> (FeatureMap, CentroidStore) {
        (
            FeatureMap::new(1, 4, 4, pixels.to_vec()).unwrap(),
            store(vec![vec![0.0], vec![10.0]], vec![true, true]),
        )
    }

    #[test]
    fn vote_unanimous_keeps() {
        let (f, s) = vote_fixture([0.0; 16]);
        let m = BinaryMask::full(4, 4);
        let out = pixel_vote_filter(&m, &quadrants(), &f, &s, 0, &HmcConfig::default()).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn vote_inconsistent_quadrant_removed() {
        let mut px = [0.0; 16];
        for idx in [10, 11, 14, 15] {
            px[idx] = 10.0;
        }
        let (f, s) = vote_fixture(px);
        let sp = quadrants();
        let out =
            pixel_vote_filter(&BinaryMask::full(4, 4), &sp, &f, &s, 0, &HmcConfig::default()).unwrap();
        assert_eq!(out.area(), 12);
        assert!(!out.get(3, 3));
    }

    #[test]
    fn vote_three_of_four_kept() {
        let mut px = [0.0; 16];
        px[0] = 10.0;
        let (f, s) = vote_fixture(px);
        let sp = quadrants();
        let m = sp.superpixel_mask(0);
        let out = pixel_vote_filter(&m, &sp, &f, &s, 0, &HmcConfig::default()).unwrap();
        assert_eq!(out, m);
        let strict = HmcConfig {
            vote_majority: 0.8,
            ..HmcConfig::default()
        };
        assert!(pixel_vote_filter(&m, &sp, &f, &s, 0, &strict).unwrap().is_empty());
    }

    #[test]
    fn vote_for_invalid_category_is_a_no_op() {
        let f = FeatureMap::new(1, 4, 4, vec![0.0; 16]).unwrap();
        let s = store(vec![vec![0.0], vec![0.0]], vec![true, false]);
        let m = BinaryMask::full(4, 4);
        let out = pixel_vote_filter(&m, &quadrants(), &f, &s, 1, &HmcConfig::default()).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn empty_set_calibrates_to_nothing() {
        let f = FeatureMap::new(1, 4, 4, vec![0.0; 16]).unwrap();
        let s = store(vec![vec![0.0], vec![1.0]], vec![true, true]);
        let ms = PseudoMaskSet::new(4, 4, 2, vec![]).unwrap();
        assert!(calibrate_mask_set(&ms, &f, &f, &s, &HmcConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn stage_order_parsing() {
        assert_eq!("rsp".parse::<StageOrder>().unwrap(), StageOrder::coarse_to_fine());
        assert_eq!("PSR".parse::<StageOrder>().unwrap().to_string(), "PSR");
        assert!("RR".parse::<StageOrder>().is_err());
        assert!("RX".parse::<StageOrder>().is_err());
        assert!("".parse::<StageOrder>().unwrap().stages().is_empty());
    }

    #[test]
    fn dropped_masks_skip_centroid_update() {
        let f = FeatureMap::new(1, 1, 2, vec![4.0, 8.0]).unwrap();
        let s = store(vec![vec![0.0], vec![0.0]], vec![true, false]);
        let pm = PseudoMask::new(0, dist(&[1.0, 0.0]), BinaryMask::full(1, 2)).unwrap();
        let dropped = CalibratedMask {
            original: pm.clone(),
            corrected_category: 1,
            corrected_mask: BinaryMask::empty(1, 2),
            dropped: true,
        };
        let next =
            update_centroids_from_calibration(&s, &[dropped], &f, &HmcConfig::default()).unwrap();
        assert_eq!(next, s);

        let kept = CalibratedMask {
            original: pm,
            corrected_category: 1,
            corrected_mask: BinaryMask::from_fn(1, 2, |_, c| c == 1),
            dropped: false,
        };
        let next = update_centroids_from_calibration(&s, std::slice::from_ref(&kept), &f, &HmcConfig::default())
            .unwrap();
        assert_eq!(next.centroid(1), &[8.0]);
        let raw = HmcConfig {
            centroid_grouping: CentroidGrouping::Raw,
            ..HmcConfig::default()
        };
        let next = update_centroids_from_calibration(&s, &[kept], &f, &raw).unwrap();
        assert!((next.centroid(0)[0] - 0.6).abs() < 1e-12);
    }
}
