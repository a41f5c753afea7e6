//! A small self-training loop: a nearest-prototype segmenter, its momentum
//! copy, augmentation, set matching and a joint supervised/self-training
//! update, plus a seeded two-domain benchmark built on [`crate::synth`].

mod augment;
mod benchmark;
mod hungarian;
mod loss;
mod model;

pub use augment::{apply_augment, augment_features, AugmentConfig, AugmentSpec};
pub use benchmark::{
    evaluate_model, run_benchmark, BenchmarkConfig, BenchmarkData, BenchmarkOutcome, StepRecord,
};
pub use hungarian::{hungarian_match, Assignment};
pub use loss::{toy_loss, toy_loss_with_matching, LossBreakdown, PROB_FLOOR};
pub use model::{ema_update_params, MomentumModel, PrototypeModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmc::{calibrate_with_superpixels, calibrated_mask_set, update_centroids_from_calibration, HmcConfig};
use crate::superpixel::{compute_superpixels, SuperpixelMap};
use crate::synth::SceneRng;
use crate::types::{CentroidStore, FeatureMap, PseudoMaskSet};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState {
    pub model: PrototypeModel,
    pub momentum: MomentumModel,
    pub store: CentroidStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Prototype step size.
    pub learning_rate: f64,
    /// Calibration applied to the momentum model's masks; `None` uses them raw.
    pub calibration: Option<HmcConfig>,
    pub augment: AugmentConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            calibration: Some(HmcConfig::default()),
            augment: AugmentConfig::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig("learning_rate must lie in [0, 1]".into()));
        }
        if let Some(h) = &self.calibration {
            h.validate()?;
        }
        self.augment.validate()
    }
}

/// A labelled source image.
#[derive(Debug, Clone, Copy)]
pub struct SourceSample<'a> {
    pub features: &'a FeatureMap,
    pub gt: &'a PseudoMaskSet,
}

/// An unlabelled target image with its rendering and, optionally, its
/// precomputed superpixels.
#[derive(Debug, Clone, Copy)]
pub struct TargetSample<'a> {
    pub features: &'a FeatureMap,
    pub image: &'a FeatureMap,
    pub superpixels: Option<&'a SuperpixelMap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLosses {
    pub supervised: LossBreakdown,
    pub self_training: LossBreakdown,
}

/// Per-category feature sums over pixels of matched label masks.
struct PixelMeans {
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl PixelMeans {
    fn new(categories: usize, dim: usize) -> Self {
        Self {
            sums: vec![vec![0.0; dim]; categories],
            counts: vec![0; categories],
        }
    }

    fn add_matched(&mut self, features: &FeatureMap, labels: &PseudoMaskSet, targets: impl Iterator<Item = usize>) {
        let mut v = vec![0.0; features.channels()];
        for j in targets {
            let m = &labels.masks()[j];
            let c = m.category();
            for idx in m.mask().ones() {
                features.pixel_into(idx, &mut v);
                self.counts[c] += 1;
                for (s, x) in self.sums[c].iter_mut().zip(&v) {
                    *s += x;
                }
            }
        }
    }

    fn mean(&self, c: usize) -> Option<Vec<f64>> {
        (self.counts[c] > 0).then(|| self.sums[c].iter().map(|s| s / self.counts[c] as f64).collect())
    }
}

/// One joint update.
///
/// 1. The momentum model predicts on each raw target image.
/// 2. Those masks are calibrated (or kept raw when calibration is off).
/// 3. Centroids take one EMA step from the calibration output.
/// 4. Target features and masks are augmented with a freshly drawn transform.
/// 5. Each prototype moves by `learning_rate` toward the average of its
///    supervised and self-training pixel means (pixels of matched label masks).
/// 6. The momentum model takes one EMA step toward the updated model.
///
/// Returned losses are measured before the update and averaged over the
/// images of each batch.
pub fn adapt_step(
    state: &AdaptState,
    source: &[SourceSample<'_>],
    target: &[TargetSample<'_>],
    cfg: &AdaptConfig,
    rng: &mut SceneRng,
) -> Result<(AdaptState, StepLosses)> {
    cfg.validate()?;
    let k = state.model.num_categories();
    let dim = state.model.dim();
    let mut store = state.store.clone();

    // pseudo-mask generation flow
    let mut labels = Vec::with_capacity(target.len());
    for t in target {
        let raw = state.momentum.params.predict(t.features)?;
        let calibrated = match &cfg.calibration {
            None => raw,
            Some(h) => {
                let computed;
                let sp = match t.superpixels {
                    Some(sp) => sp,
                    None => {
                        computed = compute_superpixels(t.image, &h.superpixels)?;
                        &computed
                    }
                };
                let out = calibrate_with_superpixels(&raw, t.features, sp, &state.store, h)?;
                store = update_centroids_from_calibration(&store, &out, t.features, h)?;
                calibrated_mask_set(&out, raw.height(), raw.width(), k)?
            }
        };
        labels.push(calibrated);
    }

    // training flow
    let mut sup_means = PixelMeans::new(k, dim);
    let mut sup_losses = Vec::with_capacity(source.len());
    for s in source {
        let pred = state.model.predict(s.features)?;
        let (loss, a) = toy_loss_with_matching(&pred, s.gt)?;
        sup_means.add_matched(s.features, s.gt, a.pairs.iter().map(|p| p.1));
        sup_losses.push(loss);
    }
    let mut self_means = PixelMeans::new(k, dim);
    let mut self_losses = Vec::with_capacity(target.len());
    for (t, lab) in target.iter().zip(&labels) {
        let (h, w) = t.features.dims();
        let spec = cfg.augment.sample(h, w, rng)?;
        let (x_aug, y_aug) = apply_augment(t.features, lab, &spec)?;
        let pred = state.model.predict(&x_aug)?;
        let (loss, a) = toy_loss_with_matching(&pred, &y_aug)?;
        self_means.add_matched(&x_aug, &y_aug, a.pairs.iter().map(|p| p.1));
        self_losses.push(loss);
    }

    let mut model = state.model.clone();
    for c in 0..k {
        let theta = &model.prototypes[c];
        let pulls: Vec<Vec<f64>> = [sup_means.mean(c), self_means.mean(c)]
            .into_iter()
            .flatten()
            .map(|m| m.iter().zip(theta).map(|(a, b)| a - b).collect())
            .collect();
        if pulls.is_empty() {
            continue;
        }
        let n = pulls.len() as f64;
        let step: Vec<f64> = (0..dim)
            .map(|e| cfg.learning_rate * pulls.iter().map(|p| p[e]).sum::<f64>() / n)
            .collect();
        for (p, d) in model.prototypes[c].iter_mut().zip(step) {
            *p += d;
        }
    }
    let momentum = ema_update_params(&state.momentum, &model)?;
    Ok((
        AdaptState {
            model,
            momentum,
            store,
        },
        StepLosses {
            supervised: LossBreakdown::mean(&sup_losses),
            self_training: LossBreakdown::mean(&self_losses),
        },
    ))
}
