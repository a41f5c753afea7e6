//! Deterministic synthetic panoptic scenes in a source and a target domain.
//!
//! A scene is a stack of horizontal "stuff" bands overlaid with elliptical
//! and rectangular "thing" blobs. Every pixel's feature is its category
//! signature plus a per-segment offset and Gaussian noise; target scenes
//! add a fixed domain shift. A 3-channel rendering of the same layout is
//! produced for superpixel computation.
//!
//! All randomness comes from [`SceneRng`], a xoshiro256** generator seeded
//! through SplitMix64, with the sampling formulas documented on each method
//! so scenes can be regenerated bit-for-bit elsewhere.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{for_each_neighbour, is_connected};
use crate::types::{
    BinaryMask, CategoryDistribution, FeatureMap, PanopticLabel, PseudoMask, PseudoMaskSet,
    Segment,
};

/// Identifier written into emitted files alongside seeds.
pub const RNG_ALGORITHM: &str = "xoshiro256starstar-splitmix64";

/// Portable pseudo-random source.
///
/// * `uniform()` = `(next_u64 >> 11) * 2^-53`
/// * `below(n)` = `floor(uniform() * n)`
/// * `normal()` = Box-Muller cosine branch on two fresh uniforms
///   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`
#[derive(Debug, Clone)]
pub struct SceneRng(Xoshiro256StarStar);

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    /// Independent stream for `(seed, stream)`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finaliser over `seed + stream * golden`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub num_categories: usize,
    /// Categories `0..stuff_categories` are stuff (one band each); the rest
    /// are things.
    pub stuff_categories: usize,
    /// Inclusive range of blobs per thing category.
    pub blobs_per_thing: (usize, usize),
    pub feature_dim: usize,
    /// Pairwise L2 distance between category signatures.
    pub class_signature_separation: f64,
    pub noise_sigma: f64,
    /// Standard deviation of the per-segment feature offset.
    pub instance_sigma: f64,
    pub domain_shift: Vec<f64>,
    /// Standard deviation of the per-pixel noise in the rendered image.
    pub image_noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            num_categories: 4,
            stuff_categories: 2,
            blobs_per_thing: (1, 3),
            feature_dim: 4,
            class_signature_separation: 4.0,
            noise_sigma: 0.5,
            instance_sigma: 0.0,
            domain_shift: vec![1.0, 0.0, 0.0, 0.0],
            image_noise: 0.02,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("height and width must be positive");
        }
        if self.num_categories < 2 {
            return bad("need at least two categories");
        }
        if self.stuff_categories == 0 || self.stuff_categories > self.num_categories {
            return bad("stuff_categories must lie in [1, num_categories]");
        }
        if self.stuff_categories > self.height {
            return bad("more stuff bands than rows");
        }
        if self.blobs_per_thing.0 == 0 || self.blobs_per_thing.0 > self.blobs_per_thing.1 {
            return bad("blobs_per_thing must be a positive, ordered range");
        }
        if self.feature_dim < self.num_categories {
            return bad("feature_dim must be at least num_categories");
        }
        if !(self.class_signature_separation > 0.0) {
            return bad("class_signature_separation must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.instance_sigma >= 0.0 && self.image_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if self.domain_shift.len() != self.feature_dim {
            return bad("domain_shift length must equal feature_dim");
        }
        Ok(())
    }

    /// Signature of `category`: the scaled unit vector
    /// `separation / sqrt(2) * e_category`.
    pub fn signature(&self, category: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.feature_dim];
        s[category] = self.class_signature_separation / std::f64::consts::SQRT_2;
        s
    }

    pub fn is_stuff(&self, category: usize) -> bool {
        category < self.stuff_categories
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: FeatureMap,
    pub features: FeatureMap,
    pub gt: PanopticLabel,
    pub num_categories: usize,
}

impl Scene {
    /// Ground-truth segments as one-hot pseudo masks in segment order.
    pub fn gt_masks(&self) -> Result<PseudoMaskSet> {
        label_to_masks(&self.gt, self.num_categories)
    }
}

/// One-hot pseudo masks for every segment of `label`.
pub fn label_to_masks(label: &PanopticLabel, num_categories: usize) -> Result<PseudoMaskSet> {
    let masks = label
        .segments()
        .into_iter()
        .map(|s| {
            PseudoMask::new(
                s.category as usize,
                CategoryDistribution::one_hot(s.category as usize, num_categories)?,
                s.mask,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    PseudoMaskSet::new(label.height(), label.width(), num_categories, masks)
}

const LAYOUT_STREAM: u64 = 1;
const PIXEL_STREAM: u64 = 2;
const PLACEMENT_ATTEMPTS: usize = 64;

/// Fixed category palette (RGB in `[0, 1]`); extended by hue rotation.
fn palette(category: usize) -> [f64; 3] {
    const BASE: [[f64; 3]; 8] = [
        [0.50, 0.70, 0.95],
        [0.45, 0.45, 0.45],
        [0.85, 0.15, 0.15],
        [0.15, 0.70, 0.20],
        [0.95, 0.80, 0.10],
        [0.55, 0.20, 0.75],
        [0.10, 0.75, 0.80],
        [0.95, 0.55, 0.20],
    ];
    if category < BASE.len() {
        return BASE[category];
    }
    let h = (category as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [0.2 + 0.6 * r, 0.2 + 0.6 * g, 0.2 + 0.6 * b]
}

struct Layout {
    category: Vec<u32>,
    instance: Vec<u32>,
}

impl Layout {
    fn segment_mask(&self, key: (u32, u32), h: usize, w: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| {
            let i = r * w + c;
            (self.category[i], self.instance[i]) == key
        })
    }
}

fn blob_mask(rng: &mut SceneRng, h: usize, w: usize) -> BinaryMask {
    let short = h.min(w) as f64;
    let min_r = (short / 10.0).max(1.0);
    let max_r = (short / 4.0).max(min_r + 1.0);
    let ry = rng.range(min_r, max_r);
    let rx = rng.range(min_r, max_r);
    let cy = rng.range(0.0, h as f64);
    let cx = rng.range(0.0, w as f64);
    let ellipse = rng.bernoulli(0.5);
    BinaryMask::from_fn(h, w, |r, c| {
        let dy = (r as f64 + 0.5 - cy) / ry;
        let dx = (c as f64 + 0.5 - cx) / rx;
        if ellipse {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    })
}

fn generate_layout(cfg: &SceneConfig, rng: &mut SceneRng) -> Result<Layout> {
    let (h, w) = (cfg.height, cfg.width);
    // stuff bands: choose distinct cut rows
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() + 1 < cfg.stuff_categories {
        let r = rng.int_inclusive(1, h - 1);
        if !cuts.contains(&r) {
            cuts.push(r);
        }
    }
    cuts.sort_unstable();
    let mut category = vec![0u32; h * w];
    for r in 0..h {
        let band = cuts.iter().filter(|&&cut| r >= cut).count();
        for c in 0..w {
            category[r * w + c] = band as u32;
        }
    }
    let mut layout = Layout {
        category,
        instance: vec![0; h * w],
    };

    let mut things: Vec<(u32, u32)> = Vec::new();
    for cat in cfg.stuff_categories..cfg.num_categories {
        let n = rng.int_inclusive(cfg.blobs_per_thing.0, cfg.blobs_per_thing.1);
        things.extend((0..n as u32).map(|i| (cat as u32, i)));
    }
    rng.shuffle(&mut things);

    for key in things {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let blob = blob_mask(rng, h, w);
            if blob.area() < 4 || !is_connected(&blob) {
                continue;
            }
            let mut touched: Vec<(u32, u32)> = blob
                .ones()
                .map(|i| (layout.category[i], layout.instance[i]))
                .collect();
            touched.sort_unstable();
            touched.dedup();
            let mut trial = Layout {
                category: layout.category.clone(),
                instance: layout.instance.clone(),
            };
            for i in blob.ones() {
                trial.category[i] = key.0;
                trial.instance[i] = key.1;
            }
            // later blobs may occlude earlier segments but must not split or erase them
            let intact = touched
                .iter()
                .all(|&t| is_connected(&trial.segment_mask(t, h, w)));
            if intact {
                layout = trial;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place blob {} of category {} in a {h}x{w} scene",
                key.1, key.0
            )));
        }
    }
    Ok(layout)
}

/// Generates one scene. The layout, per-segment offsets and pixel noise
/// depend only on `cfg.seed`, so the two domains of one seed differ exactly
/// by the domain shift.
pub fn generate_scene(cfg: &SceneConfig, domain: Domain) -> Result<Scene> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut layout_rng = SceneRng::stream(cfg.seed, LAYOUT_STREAM);
    let layout = generate_layout(cfg, &mut layout_rng)?;
    let gt = PanopticLabel::from_planes(h, w, layout.category.clone(), layout.instance.clone())?;

    let keys = gt.segment_keys();
    let offsets: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            (0..cfg.feature_dim)
                .map(|_| cfg.instance_sigma * layout_rng.normal())
                .collect()
        })
        .collect();
    let tints: Vec<[f64; 3]> = keys
        .iter()
        .map(|_| [0; 3].map(|_| layout_rng.range(-0.06, 0.06)))
        .collect();
    let (_, seg_ids) = gt.segment_ids();
    let signatures: Vec<Vec<f64>> = (0..cfg.num_categories).map(|c| cfg.signature(c)).collect();

    let mut pixel_rng = SceneRng::stream(cfg.seed, PIXEL_STREAM);
    let n = h * w;
    let mut feat = vec![0f32; cfg.feature_dim * n];
    let mut img = vec![0f32; 3 * n];
    for idx in 0..n {
        let seg = seg_ids[idx].expect("generated scenes have no void");
        let cat = layout.category[idx] as usize;
        for e in 0..cfg.feature_dim {
            let mut v = signatures[cat][e] + offsets[seg][e] + cfg.noise_sigma * pixel_rng.normal();
            if domain == Domain::Target {
                v += cfg.domain_shift[e];
            }
            feat[e * n + idx] = v as f32;
        }
        let base = palette(cat);
        for ch in 0..3 {
            let v = base[ch] + tints[seg][ch] + cfg.image_noise * pixel_rng.normal();
            img[ch * n + idx] = v.clamp(0.0, 1.0) as f32;
        }
    }
    Ok(Scene {
        image: FeatureMap::new(3, h, w, img)?,
        features: FeatureMap::new(cfg.feature_dim, h, w, feat)?,
        gt,
        num_categories: cfg.num_categories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub flip_rate: f64,
    /// Square structuring-element radius for the per-segment erosion or
    /// dilation.
    pub boundary_radius: usize,
    pub impostor_rate: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            flip_rate: 0.3,
            boundary_radius: 1,
            impostor_rate: 0.2,
        }
    }
}

impl PerturbConfig {
    pub fn none() -> Self {
        Self {
            flip_rate: 0.0,
            boundary_radius: 0,
            impostor_rate: 0.0,
        }
    }
}

fn morph(mask: &BinaryMask, radius: usize, dilate: bool) -> BinaryMask {
    let (h, w) = mask.dims();
    let r = radius as isize;
    BinaryMask::from_fn(h, w, |row, col| {
        let mut any = false;
        let mut all = true;
        for dr in -r..=r {
            for dc in -r..=r {
                let (y, x) = (row as isize + dr, col as isize + dc);
                let inside = y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w;
                let v = inside && mask.get(y as usize, x as usize);
                any |= v;
                all &= v;
            }
        }
        if dilate {
            any
        } else {
            all
        }
    })
}

/// Turns ground truth into imperfect pseudo masks: category flips, boundary
/// erosion/dilation and attached impostor blobs. With all rates zero the
/// output reproduces the ground-truth segments with one-hot distributions.
pub fn perturb_predictions(
    gt: &PanopticLabel,
    num_categories: usize,
    cfg: &PerturbConfig,
    seed: u64,
) -> Result<PseudoMaskSet> {
    for (name, rate) in [("flip_rate", cfg.flip_rate), ("impostor_rate", cfg.impostor_rate)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
        }
    }
    let (h, w) = gt.dims();
    let mut rng = SceneRng::new(seed);
    let soft = cfg.flip_rate > 0.0;
    let side = ((((h * w) as f64).sqrt() / 8.0).round() as usize).max(2);
    let mut masks = Vec::new();
    for Segment { category, mask, .. } in gt.segments() {
        let truth = category as usize;
        if truth >= num_categories {
            return Err(Error::CategoryOutOfRange {
                category: truth,
                count: num_categories,
            });
        }
        let flipped = rng.bernoulli(cfg.flip_rate);
        let carried = if flipped {
            let k = rng.below(num_categories - 1);
            if k >= truth {
                k + 1
            } else {
                k
            }
        } else {
            truth
        };
        let dist = if soft {
            let conf = rng.range(0.55, 0.95);
            let rest = 1.0 - conf;
            let mut p = vec![0.0f64; num_categories];
            p[carried] = conf;
            let others: Vec<usize> = (0..num_categories).filter(|&c| c != carried).collect();
            if flipped && others.len() > 1 {
                let share = 0.3 * rest / (others.len() - 1) as f64;
                for &c in &others {
                    p[c] = if c == truth { 0.7 * rest } else { share };
                }
            } else {
                for &c in &others {
                    p[c] = rest / others.len() as f64;
                }
            }
            CategoryDistribution::new(p.into_iter().map(|x| x as f32).collect())?
        } else {
            CategoryDistribution::one_hot(carried, num_categories)?
        };

        let mut shaped = mask.clone();
        if cfg.boundary_radius > 0 {
            let dilate = rng.bernoulli(0.5);
            let m = morph(&mask, cfg.boundary_radius, dilate);
            if !m.is_empty() {
                shaped = m;
            }
        }
        if rng.bernoulli(cfg.impostor_rate) {
            let rim: Vec<usize> = (0..h * w)
                .filter(|&i| {
                    if shaped.get_index(i) {
                        return false;
                    }
                    let mut touches = false;
                    for_each_neighbour(i, h, w, |n| touches |= shaped.get_index(n));
                    touches
                })
                .collect();
            if !rim.is_empty() {
                let anchor = rim[rng.below(rim.len())];
                let (ar, ac) = ((anchor / w) as isize, (anchor % w) as isize);
                let half = (side / 2) as isize;
                for r in (ar - half).max(0)..(ar - half + side as isize).min(h as isize) {
                    for c in (ac - half).max(0)..(ac - half + side as isize).min(w as isize) {
                        shaped.set(r as usize * w + c as usize, true);
                    }
                }
            }
        }
        masks.push(PseudoMask::new(carried, dist, shaped)?);
    }
    PseudoMaskSet::new(h, w, num_categories, masks)
}
