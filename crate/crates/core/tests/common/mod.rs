#![allow(dead_code)]

pub mod oracle;
pub mod pq;
pub mod slic;

use maskcal::hmc::{CalibratedMask, HmcConfig, InvalidCentroidPolicy, StageOrder};
use maskcal::superpixel::SuperpixelMap;
use maskcal::synth::SceneRng;
use maskcal::types::{BinaryMask, CategoryDistribution, CentroidStore, FeatureMap, PseudoMask, PseudoMaskSet};

use oracle::{OracleMask, OracleParams};

/// A random calibration problem with quarter-step features so distance
/// comparisons are exact.
#[derive(Debug, Clone)]
pub struct HmcCase {
    pub features: FeatureMap,
    pub image: FeatureMap,
    pub masks: PseudoMaskSet,
    pub store: CentroidStore,
    pub cfg: HmcConfig,
}

fn quarter(rng: &mut SceneRng, lo: i64, hi: i64) -> f64 {
    (lo + rng.below((hi - lo + 1) as usize) as i64) as f64 * 0.25
}

fn random_rect(rng: &mut SceneRng, h: usize, w: usize) -> BinaryMask {
    let r0 = rng.below(h);
    let c0 = rng.below(w);
    let r1 = rng.int_inclusive(r0, h - 1);
    let c1 = rng.int_inclusive(c0, w - 1);
    BinaryMask::from_fn(h, w, |r, c| (r0..=r1).contains(&r) && (c0..=c1).contains(&c))
}

pub fn random_hmc_case(seed: u64, max_side: usize, max_categories: usize, max_masks: usize) -> HmcCase {
    let mut rng = SceneRng::new(seed);
    let h = rng.int_inclusive(2, max_side);
    let w = rng.int_inclusive(2, max_side);
    let c = rng.int_inclusive(2, max_categories);
    let e = rng.int_inclusive(1, 3);

    // blocky layout shared by image and features
    let blocks = rng.int_inclusive(1, 4);
    let mut owner = vec![0usize; h * w];
    for b in 1..blocks {
        let rect = random_rect(&mut rng, h, w);
        for i in rect.ones() {
            owner[i] = b;
        }
    }
    let bases: Vec<Vec<f64>> = (0..blocks).map(|_| (0..e).map(|_| quarter(&mut rng, -8, 8)).collect()).collect();
    let colours: Vec<[f64; 3]> = (0..blocks)
        .map(|_| [0; 3].map(|_| rng.below(9) as f64 / 8.0))
        .collect();
    let mut fv = vec![0f32; e * h * w];
    let mut iv = vec![0f32; 3 * h * w];
    for i in 0..h * w {
        for k in 0..e {
            fv[k * h * w + i] = (bases[owner[i]][k] + quarter(&mut rng, -1, 1)) as f32;
        }
        for k in 0..3 {
            iv[k * h * w + i] = colours[owner[i]][k] as f32;
        }
    }
    let features = FeatureMap::new(e, h, w, fv).unwrap();
    let image = FeatureMap::new(3, h, w, iv).unwrap();

    let k = rng.int_inclusive(0, max_masks);
    let masks = (0..k)
        .map(|_| {
            let weights: Vec<f64> = (0..c).map(|_| rng.int_inclusive(1, 8) as f64).collect();
            let total: f64 = weights.iter().sum();
            let dist = CategoryDistribution::new(weights.iter().map(|x| (x / total) as f32).collect()).unwrap();
            let mask = if rng.bernoulli(0.5) {
                random_rect(&mut rng, h, w)
            } else {
                let b = rng.below(blocks);
                let m = BinaryMask::from_fn(h, w, |r, col| owner[r * w + col] == b);
                if m.is_empty() { random_rect(&mut rng, h, w) } else { m }
            };
            PseudoMask::from_distribution(dist, mask).unwrap()
        })
        .collect();
    let masks = PseudoMaskSet::new(h, w, c, masks).unwrap();

    let mut valid: Vec<bool> = (0..c).map(|_| rng.bernoulli(0.8)).collect();
    if !valid.iter().any(|&v| v) {
        valid[rng.below(c)] = true;
    }
    let centroids = valid
        .iter()
        .map(|&v| if v { (0..e).map(|_| quarter(&mut rng, -8, 8)).collect() } else { vec![0.0; e] })
        .collect();
    let store = CentroidStore::from_parts(centroids, valid, 0.9).unwrap();

    let mut letters = vec!['R', 'S', 'P'];
    rng.shuffle(&mut letters);
    let len = rng.int_inclusive(1, 3);
    let order: String = letters[..len].iter().collect();
    let mut cfg = HmcConfig::with_order(order.parse::<StageOrder>().unwrap());
    cfg.overlap_ratio_threshold = [0.0, 0.25, 0.5][rng.below(3)];
    cfg.vote_majority = [0.5, 0.75, 1.0][rng.below(3)];
    cfg.temperature = [0.5, 1.0, 2.0][rng.below(3)];
    cfg.invalid_centroid_policy = if rng.bernoulli(0.5) {
        InvalidCentroidPolicy::Neutral
    } else {
        InvalidCentroidPolicy::Exclude
    };
    cfg.superpixels.target_count = Some(rng.int_inclusive(1, 12.min(h * w)));
    cfg.superpixels.compactness = [1.0, 10.0][rng.below(2)];
    HmcCase {
        features,
        image,
        masks,
        store,
        cfg,
    }
}

pub fn oracle_features(f: &FeatureMap) -> Vec<Vec<f64>> {
    (0..f.height() * f.width()).map(|i| f.pixel_vector(i)).collect()
}

pub fn oracle_centroids(store: &CentroidStore) -> Vec<Option<Vec<f64>>> {
    (0..store.num_categories())
        .map(|c| store.is_valid(c).then(|| store.centroid(c).to_vec()))
        .collect()
}

pub fn oracle_masks(set: &PseudoMaskSet) -> Vec<OracleMask> {
    set.masks()
        .iter()
        .map(|m| OracleMask {
            category: m.category(),
            probs: m.dist().as_slice().iter().map(|&p| p as f64).collect(),
            bits: m.mask().bits().to_vec(),
        })
        .collect()
}

pub fn oracle_params(cfg: &HmcConfig) -> OracleParams {
    OracleParams {
        order: cfg.stage_order.to_string(),
        rho: cfg.overlap_ratio_threshold,
        vote: cfg.vote_majority,
        tau: cfg.temperature,
        exclude_invalid: cfg.invalid_centroid_policy == InvalidCentroidPolicy::Exclude,
    }
}

/// Runs the oracle on `case` with superpixels `sp`; `None` when `got`
/// agrees, otherwise a description of the first difference.
pub fn oracle_mismatch(case: &HmcCase, sp: &SuperpixelMap, got: &[CalibratedMask]) -> Option<String> {
    let want = oracle::calibrate(
        &oracle_features(&case.features),
        sp.labels(),
        &oracle_centroids(&case.store),
        &oracle_masks(&case.masks),
        &oracle_params(&case.cfg),
    );
    if want.len() != got.len() {
        return Some(format!("{} masks expected, {} produced", want.len(), got.len()));
    }
    for (k, ((cat, bits, dropped), g)) in want.iter().zip(got).enumerate() {
        if *cat != g.corrected_category || bits.as_slice() != g.corrected_mask.bits() || *dropped != g.dropped {
            return Some(format!(
                "mask {k}: oracle category {cat} dropped {dropped}, library category {} dropped {}",
                g.corrected_category, g.dropped
            ));
        }
    }
    None
}
