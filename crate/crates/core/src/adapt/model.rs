use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::label_components;
use crate::types::{
    BinaryMask, CategoryDistribution, FeatureMap, PanopticLabel, PseudoMask, PseudoMaskSet,
};

/// Nearest-prototype segmenter.
///
/// A pixel scores `d_c = |v - theta_c|_1 - b_c` for every category and takes
/// the lowest score (ties to the lower index). Each 4-connected region of
/// equal label becomes one predicted mask whose distribution is the mean of
/// the per-pixel `softmax(-d / temperature)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeModel {
    pub prototypes: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub temperature: f64,
}

impl PrototypeModel {
    pub fn new(prototypes: Vec<Vec<f64>>, bias: Vec<f64>, temperature: f64) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::InvalidConfig("need at least two prototypes".into()));
        }
        let dim = prototypes[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(p) = prototypes.iter().find(|p| p.len() != dim) {
            return Err(Error::LengthMismatch {
                left: dim,
                right: p.len(),
            });
        }
        if bias.len() != prototypes.len() {
            return Err(Error::LengthMismatch {
                left: prototypes.len(),
                right: bias.len(),
            });
        }
        if prototypes.iter().flatten().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model parameter"));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        Ok(Self {
            prototypes,
            bias,
            temperature,
        })
    }

    /// Prototypes at the mean ground-truth feature of each category over
    /// `scenes`; categories never seen stay at the origin.
    pub fn fit_supervised<'a>(
        scenes: impl IntoIterator<Item = (&'a FeatureMap, &'a PanopticLabel)>,
        num_categories: usize,
        dim: usize,
        temperature: f64,
    ) -> Result<Self> {
        let mut sums = vec![vec![0.0f64; dim]; num_categories];
        let mut counts = vec![0usize; num_categories];
        for (f, gt) in scenes {
            if f.dims() != gt.dims() {
                return Err(Error::DimensionMismatch {
                    expected: gt.dims(),
                    actual: f.dims(),
                });
            }
            if f.channels() != dim {
                return Err(Error::LengthMismatch {
                    left: dim,
                    right: f.channels(),
                });
            }
            for idx in 0..gt.height() * gt.width() {
                if gt.is_void(idx) {
                    continue;
                }
                let c = gt.category_at(idx) as usize;
                if c >= num_categories {
                    return Err(Error::CategoryOutOfRange {
                        category: c,
                        count: num_categories,
                    });
                }
                counts[c] += 1;
                for (e, s) in sums[c].iter_mut().enumerate() {
                    *s += f.at(e, idx) as f64;
                }
            }
        }
        let prototypes = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| {
                if n == 0 {
                    s
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();
        Self::new(prototypes, vec![0.0; num_categories], temperature)
    }

    pub fn num_categories(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    fn scores(&self, v: &[f64], out: &mut [f64]) {
        for (c, (p, b)) in self.prototypes.iter().zip(&self.bias).enumerate() {
            out[c] = p.iter().zip(v).map(|(a, x)| (a - x).abs()).sum::<f64>() - b;
        }
    }

    /// Per-pixel label of the lowest score.
    pub fn label_pixels(&self, features: &FeatureMap) -> Result<Vec<usize>> {
        self.check_features(features)?;
        let n = features.height() * features.width();
        let mut v = vec![0.0; self.dim()];
        let mut d = vec![0.0; self.num_categories()];
        Ok((0..n)
            .map(|idx| {
                features.pixel_into(idx, &mut v);
                self.scores(&v, &mut d);
                lowest(&d)
            })
            .collect())
    }

    pub fn predict(&self, features: &FeatureMap) -> Result<PseudoMaskSet> {
        self.check_features(features)?;
        let (h, w) = features.dims();
        let n = h * w;
        let k = self.num_categories();
        let mut v = vec![0.0; self.dim()];
        let mut d = vec![0.0; k];
        let mut labels = vec![0usize; n];
        let mut probs = vec![0.0f64; n * k];
        for idx in 0..n {
            features.pixel_into(idx, &mut v);
            self.scores(&v, &mut d);
            labels[idx] = lowest(&d);
            let best = d[labels[idx]];
            let p = &mut probs[idx * k..(idx + 1) * k];
            let mut total = 0.0;
            for (pc, dc) in p.iter_mut().zip(&d) {
                *pc = (-(dc - best) / self.temperature).exp();
                total += *pc;
            }
            p.iter_mut().for_each(|x| *x /= total);
        }
        let (comp, sizes) = label_components(&labels, h, w);
        let mut comp_label = vec![0usize; sizes.len()];
        let mut comp_probs = vec![vec![0.0f64; k]; sizes.len()];
        let mut members = vec![Vec::new(); sizes.len()];
        for idx in 0..n {
            let s = comp[idx];
            comp_label[s] = labels[idx];
            members[s].push(idx);
            for (acc, p) in comp_probs[s].iter_mut().zip(&probs[idx * k..(idx + 1) * k]) {
                *acc += p;
            }
        }
        let mut masks = Vec::with_capacity(sizes.len());
        for s in 0..sizes.len() {
            let c = comp_label[s];
            let mut p: Vec<f32> = comp_probs[s]
                .iter()
                .map(|x| (x / sizes[s] as f64) as f32)
                .collect();
            // every pixel favours c, so only rounding can put another entry above it
            let top = p[c];
            p.iter_mut().for_each(|x| *x = x.min(top));
            let mut mask = BinaryMask::empty(h, w);
            for &idx in &members[s] {
                mask.set(idx, true);
            }
            masks.push(PseudoMask::new(c, CategoryDistribution::new(p)?, mask)?);
        }
        PseudoMaskSet::new(h, w, k, masks)
    }

    /// Panoptic prediction: every predicted region becomes one segment.
    pub fn predict_label(&self, features: &FeatureMap) -> Result<PanopticLabel> {
        let masks = self.predict(features)?;
        crate::metrics::resolve_overlaps(masks.masks(), features.height(), features.width())
    }

    fn check_features(&self, features: &FeatureMap) -> Result<()> {
        if features.channels() != self.dim() {
            return Err(Error::LengthMismatch {
                left: self.dim(),
                right: features.channels(),
            });
        }
        Ok(())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.prototypes.iter().flatten().chain(&self.bias)
    }
}

fn lowest(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in d.iter().enumerate().skip(1) {
        if x < d[best] {
            best = i;
        }
    }
    best
}

/// Slowly moving copy of a [`PrototypeModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumModel {
    pub params: PrototypeModel,
    pub gamma: f64,
}

impl MomentumModel {
    pub fn new(params: PrototypeModel, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidConfig("momentum gamma must lie in (0, 1)".into()));
        }
        Ok(Self { params, gamma })
    }
}

/// `theta' <- gamma * theta' + (1 - gamma) * theta` for every parameter.
pub fn ema_update_params(momentum: &MomentumModel, current: &PrototypeModel) -> Result<MomentumModel> {
    let m = &momentum.params;
    if m.num_categories() != current.num_categories() || m.dim() != current.dim() {
        return Err(Error::LengthMismatch {
            left: m.params().count(),
            right: current.params().count(),
        });
    }
    let g = momentum.gamma;
    let blend = |a: &f64, b: &f64| a + (1.0 - g) * (b - a);
    Ok(MomentumModel {
        params: PrototypeModel {
            prototypes: m
                .prototypes
                .iter()
                .zip(&current.prototypes)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| blend(x, y)).collect())
                .collect(),
            bias: m.bias.iter().zip(&current.bias).map(|(x, y)| blend(x, y)).collect(),
            temperature: m.temperature,
        },
        gamma: g,
    })
}
