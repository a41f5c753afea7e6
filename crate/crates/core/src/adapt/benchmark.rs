use serde::{Deserialize, Serialize};

use super::{adapt_step, AdaptConfig, AdaptState, MomentumModel, PrototypeModel, SourceSample, StepLosses, TargetSample};
use crate::error::{Error, Result};
use crate::hmc::{init_centroids, HmcConfig};
use crate::metrics::{match_segments, PqReport, PqStats};
use crate::superpixel::{compute_superpixels, SuperpixelMap};
use crate::synth::{derive_seed, generate_scene, Domain, Scene, SceneConfig, SceneRng};
use crate::types::PseudoMaskSet;

/// Settings of the seeded two-domain self-training benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Scene template; per-scene seeds are derived from the run seed.
    pub scene: SceneConfig,
    pub source_scenes: usize,
    pub target_train_scenes: usize,
    pub target_eval_scenes: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub centroid_momentum: f64,
    pub model_temperature: f64,
    /// Calibration of the momentum model's masks; `None` trains on them raw.
    pub calibration: Option<HmcConfig>,
    pub augment: super::AugmentConfig,
    /// Evaluate on the target split every this many steps (0 disables).
    pub eval_every: usize,
}

impl Default for BenchmarkConfig {
    /// 48x48 scenes; target features are moved one signature length toward
    /// the last (thing) category.
    fn default() -> Self {
        let mut hmc = HmcConfig::default();
        hmc.superpixels.target_count = Some(96);
        hmc.superpixels.compactness = 5.0;
        let base = SceneConfig::default();
        let mut shift = vec![0.0; base.feature_dim];
        shift[base.num_categories - 1] = base.class_signature_separation / std::f64::consts::SQRT_2;
        Self {
            scene: SceneConfig {
                height: 48,
                width: 48,
                domain_shift: shift,
                ..base
            },
            source_scenes: 8,
            target_train_scenes: 8,
            target_eval_scenes: 8,
            steps: 200,
            learning_rate: 0.1,
            momentum: 0.99,
            centroid_momentum: 0.9,
            model_temperature: 1.0,
            calibration: Some(hmc),
            augment: super::AugmentConfig::default(),
            eval_every: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.source_scenes == 0 || self.target_train_scenes == 0 || self.target_eval_scenes == 0 {
            return Err(Error::InvalidConfig("scene counts must be positive".into()));
        }
        self.adapt_config().validate()
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            learning_rate: self.learning_rate,
            calibration: self.calibration.clone(),
            augment: self.augment.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub losses: StepLosses,
    /// Target-split mPQ of the current model when evaluated at this step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_mpq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    /// Source-only model on the target evaluation split.
    pub initial_target: PqReport,
    pub final_target: PqReport,
    pub final_source: PqReport,
}

/// Scenes of one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub source: Vec<Scene>,
    pub source_gt: Vec<PseudoMaskSet>,
    pub target_train: Vec<Scene>,
    pub target_eval: Vec<Scene>,
}

impl BenchmarkData {
    pub fn generate(cfg: &BenchmarkConfig, seed: u64) -> Result<Self> {
        let make = |stream: u64, n: usize, domain: Domain| {
            (0..n as u64)
                .map(|i| generate_scene(&cfg.scene.with_seed(derive_seed(seed, stream + i)), domain))
                .collect::<Result<Vec<_>>>()
        };
        let source = make(1 << 20, cfg.source_scenes, Domain::Source)?;
        let source_gt = source.iter().map(Scene::gt_masks).collect::<Result<_>>()?;
        Ok(Self {
            source,
            source_gt,
            target_train: make(2 << 20, cfg.target_train_scenes, Domain::Target)?,
            target_eval: make(3 << 20, cfg.target_eval_scenes, Domain::Target)?,
        })
    }
}

/// Panoptic quality of `model` over `scenes`.
pub fn evaluate_model(model: &PrototypeModel, scenes: &[Scene]) -> Result<PqReport> {
    let mut stats = PqStats::new(model.num_categories());
    for s in scenes {
        let pred = model.predict_label(&s.features)?;
        stats.add(&match_segments(&pred, &s.gt)?);
    }
    Ok(stats.report())
}

/// Trains a source-only model, then runs `cfg.steps` joint updates cycling
/// through the source and target training scenes one pair per step.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    seed: u64,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let data = BenchmarkData::generate(cfg, seed)?;
    let sc = &cfg.scene;
    let model = PrototypeModel::fit_supervised(
        data.source.iter().map(|s| (&s.features, &s.gt)),
        sc.num_categories,
        sc.feature_dim,
        cfg.model_temperature,
    )?;
    let initial_target = evaluate_model(&model, &data.target_eval)?;

    let raw: Vec<PseudoMaskSet> = data
        .target_train
        .iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<_>>()?;
    let pooling = cfg.calibration.as_ref().map(|h| h.pooling).unwrap_or_default();
    let store = init_centroids(
        raw.iter()
            .zip(&data.target_train)
            .flat_map(|(set, s)| set.masks().iter().map(move |m| (m, &s.features))),
        sc.num_categories,
        sc.feature_dim,
        cfg.centroid_momentum,
        pooling,
    )?;
    let superpixels: Vec<Option<SuperpixelMap>> = data
        .target_train
        .iter()
        .map(|s| match &cfg.calibration {
            Some(h) => compute_superpixels(&s.image, &h.superpixels).map(Some),
            None => Ok(None),
        })
        .collect::<Result<_>>()?;

    let mut state = AdaptState {
        momentum: MomentumModel::new(model.clone(), cfg.momentum)?,
        model,
        store,
    };
    let adapt = cfg.adapt_config();
    let mut rng = SceneRng::stream(seed, 4 << 20);
    for step in 0..cfg.steps {
        let s = &data.source[step % data.source.len()];
        let ti = step % data.target_train.len();
        let t = &data.target_train[ti];
        let source = [SourceSample {
            features: &s.features,
            gt: &data.source_gt[step % data.source.len()],
        }];
        let target = [TargetSample {
            features: &t.features,
            image: &t.image,
            superpixels: superpixels[ti].as_ref(),
        }];
        let (next, losses) = adapt_step(&state, &source, &target, &adapt, &mut rng)?;
        state = next;
        let target_mpq = if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            Some(evaluate_model(&state.model, &data.target_eval)?.m_pq)
        } else {
            None
        };
        on_step(&StepRecord {
            step,
            losses,
            target_mpq,
        });
    }
    Ok(BenchmarkOutcome {
        initial_target,
        final_target: evaluate_model(&state.model, &data.target_eval)?,
        final_source: evaluate_model(&state.model, &data.source)?,
    })
}
