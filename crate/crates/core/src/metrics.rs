//! Panoptic quality (PQ = SQ x RQ) with per-category TP/FP/FN accounting,
//! plus the overlap resolution that turns possibly overlapping masks into a
//! panoptic label map.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmc::CalibratedMask;
use crate::types::{BinaryMask, PanopticLabel, PseudoMask, NO_INSTANCE, VOID};

/// Matches require strictly more than this IoU.
pub const MATCH_IOU: f64 = 0.5;

/// `|a & b| / |a | b|`, zero when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    b.ensure_dims(a.dims())?;
    let inter = a.intersection_count(b);
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Drop prediction pixels that fall on VOID ground truth from the IoU
    /// union.
    pub ignore_void: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub category: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmatchedSegment {
    pub id: usize,
    pub category: u32,
}

/// Segment ids index [`PanopticLabel::segment_keys`] of the respective label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_predictions: Vec<UnmatchedSegment>,
    pub unmatched_ground_truth: Vec<UnmatchedSegment>,
}

pub fn match_segments(pred: &PanopticLabel, gt: &PanopticLabel) -> Result<MatchResult> {
    match_segments_with(pred, gt, MatchOptions::default())
}

/// Pairs predicted and ground-truth segments of the same category with
/// IoU > 0.5. For non-overlapping segments this threshold admits at most one
/// partner per segment, so no assignment search is needed.
pub fn match_segments_with(
    pred: &PanopticLabel,
    gt: &PanopticLabel,
    opts: MatchOptions,
) -> Result<MatchResult> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    let (pkeys, pids) = pred.segment_ids();
    let (gkeys, gids) = gt.segment_ids();
    let mut parea = vec![0usize; pkeys.len()];
    let mut garea = vec![0usize; gkeys.len()];
    let mut pvoid = vec![0usize; pkeys.len()];
    let mut inter: HashMap<(usize, usize), usize> = HashMap::new();
    for (p, g) in pids.iter().zip(&gids) {
        if let Some(p) = *p {
            parea[p] += 1;
            match *g {
                Some(g) => *inter.entry((p, g)).or_default() += 1,
                None => pvoid[p] += 1,
            }
        }
        if let Some(g) = *g {
            garea[g] += 1;
        }
    }
    let mut candidates: Vec<MatchedPair> = inter
        .into_iter()
        .filter(|&((p, g), _)| pkeys[p].0 == gkeys[g].0)
        .filter_map(|((p, g), n)| {
            let pa = if opts.ignore_void {
                parea[p] - pvoid[p]
            } else {
                parea[p]
            };
            let union = pa + garea[g] - n;
            let iou = n as f64 / union as f64;
            (iou > MATCH_IOU).then_some(MatchedPair {
                prediction: p,
                ground_truth: g,
                category: pkeys[p].0,
                iou,
            })
        })
        .collect();
    candidates.sort_by_key(|m| (m.ground_truth, m.prediction));
    let mut pused = vec![false; pkeys.len()];
    let mut gused = vec![false; gkeys.len()];
    let mut pairs = Vec::new();
    for m in candidates {
        if !pused[m.prediction] && !gused[m.ground_truth] {
            pused[m.prediction] = true;
            gused[m.ground_truth] = true;
            pairs.push(m);
        }
    }
    let unmatched = |used: &[bool], keys: &[(u32, u32)]| {
        used.iter()
            .enumerate()
            .filter(|(_, &u)| !u)
            .map(|(id, _)| UnmatchedSegment {
                id,
                category: keys[id].0,
            })
            .collect()
    };
    Ok(MatchResult {
        unmatched_predictions: unmatched(&pused, &pkeys),
        unmatched_ground_truth: unmatched(&gused, &gkeys),
        pairs,
    })
}

/// Raw per-category sums; merging is associative and order-independent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PqStats {
    iou_sum: Vec<f64>,
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
}

impl PqStats {
    pub fn new(num_categories: usize) -> Self {
        let mut s = Self::default();
        s.grow(num_categories);
        s
    }

    fn grow(&mut self, n: usize) {
        if self.tp.len() < n {
            self.iou_sum.resize(n, 0.0);
            self.tp.resize(n, 0);
            self.fp.resize(n, 0);
            self.fn_.resize(n, 0);
        }
    }

    pub fn add(&mut self, m: &MatchResult) {
        let max_cat = m
            .pairs
            .iter()
            .map(|p| p.category)
            .chain(m.unmatched_predictions.iter().map(|u| u.category))
            .chain(m.unmatched_ground_truth.iter().map(|u| u.category))
            .max();
        if let Some(c) = max_cat {
            self.grow(c as usize + 1);
        }
        for p in &m.pairs {
            self.tp[p.category as usize] += 1;
            self.iou_sum[p.category as usize] += p.iou;
        }
        for u in &m.unmatched_predictions {
            self.fp[u.category as usize] += 1;
        }
        for u in &m.unmatched_ground_truth {
            self.fn_[u.category as usize] += 1;
        }
    }

    pub fn merge(&mut self, other: &PqStats) {
        self.grow(other.tp.len());
        for c in 0..other.tp.len() {
            self.iou_sum[c] += other.iou_sum[c];
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }

    pub fn report(&self) -> PqReport {
        let categories: Vec<CategoryQuality> = (0..self.tp.len())
            .map(|c| {
                let (tp, fp, fn_) = (self.tp[c], self.fp[c], self.fn_[c]);
                let sq = if tp == 0 {
                    0.0
                } else {
                    self.iou_sum[c] / tp as f64
                };
                let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
                let rq = if denom == 0.0 { 0.0 } else { tp as f64 / denom };
                CategoryQuality {
                    category: c,
                    sq,
                    rq,
                    pq: sq * rq,
                    tp,
                    fp,
                    fn_,
                    present: tp + fp + fn_ > 0,
                }
            })
            .collect();
        let present: Vec<&CategoryQuality> = categories.iter().filter(|c| c.present).collect();
        let mean = |f: fn(&CategoryQuality) -> f64| {
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
            }
        };
        let (tp, fp, fn_): (usize, usize, usize) = (
            self.tp.iter().sum(),
            self.fp.iter().sum(),
            self.fn_.iter().sum(),
        );
        let total = (tp + fp + fn_) as f64;
        let frac = |x: usize| if total == 0.0 { 0.0 } else { x as f64 / total };
        PqReport {
            m_sq: mean(|c| c.sq),
            m_rq: mean(|c| c.rq),
            m_pq: mean(|c| c.pq),
            proportions: Proportions {
                tp: frac(tp),
                fp: frac(fp),
                fn_: frac(fn_),
            },
            categories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryQuality {
    pub category: usize,
    pub sq: f64,
    pub rq: f64,
    pub pq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Whether the category occurs in the prediction or the ground truth.
    pub present: bool,
}

/// TP, FP and FN counts as fractions of `TP + FP + FN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub categories: Vec<CategoryQuality>,
    pub m_sq: f64,
    pub m_rq: f64,
    pub m_pq: f64,
    pub proportions: Proportions,
}

impl PqReport {
    /// Plain-text table, one row per present category then the means.
    pub fn to_table(&self, names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6}",
            "category", "SQ", "RQ", "PQ", "TP", "FP", "FN"
        );
        for c in self.categories.iter().filter(|c| c.present) {
            let name = names
                .get(c.category)
                .cloned()
                .unwrap_or_else(|| format!("class_{}", c.category));
            let _ = writeln!(
                out,
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>6}",
                name, c.sq, c.rq, c.pq, c.tp, c.fp, c.fn_
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>8.4} {:>8.4} {:>8.4}",
            "mean", self.m_sq, self.m_rq, self.m_pq
        );
        let _ = writeln!(
            out,
            "proportions     TP {:.4} FP {:.4} FN {:.4}",
            self.proportions.tp, self.proportions.fp, self.proportions.fn_
        );
        out
    }
}

/// Per-category SQ, RQ and PQ for one match result, sized to at least
/// `num_categories` rows.
pub fn compute_pq(m: &MatchResult, num_categories: usize) -> PqReport {
    let mut stats = PqStats::new(num_categories);
    stats.add(m);
    stats.report()
}

/// Anything that can claim pixels in a panoptic label.
pub trait SegmentClaim {
    /// `(category, confidence, mask)`, or `None` to skip.
    fn claim(&self) -> Option<(usize, f32, &BinaryMask)>;
}

impl SegmentClaim for PseudoMask {
    fn claim(&self) -> Option<(usize, f32, &BinaryMask)> {
        Some((self.category(), self.confidence(), self.mask()))
    }
}

impl SegmentClaim for CalibratedMask {
    fn claim(&self) -> Option<(usize, f32, &BinaryMask)> {
        (!self.dropped).then(|| (self.corrected_category, self.confidence(), &self.corrected_mask))
    }
}

/// Paints masks into a panoptic label. A contested pixel goes to the mask
/// with the higher confidence (ties: lower index); uncovered pixels are VOID.
/// Instance ids count up per category in mask order, skipping masks left
/// with no pixels.
pub fn resolve_overlaps<T: SegmentClaim>(
    masks: &[T],
    height: usize,
    width: usize,
) -> Result<PanopticLabel> {
    let mut owner: Vec<Option<(usize, f32)>> = vec![None; height * width];
    for (k, m) in masks.iter().enumerate() {
        let Some((_, conf, mask)) = m.claim() else {
            continue;
        };
        mask.ensure_dims((height, width))?;
        for idx in mask.ones() {
            match owner[idx] {
                Some((_, c)) if c >= conf => {}
                _ => owner[idx] = Some((k, conf)),
            }
        }
    }
    let mut count = vec![0usize; masks.len()];
    for (k, _) in owner.iter().flatten() {
        count[*k] += 1;
    }
    let mut next_instance: HashMap<usize, u32> = HashMap::new();
    let mut instance = vec![NO_INSTANCE; masks.len()];
    for (k, m) in masks.iter().enumerate() {
        if count[k] == 0 {
            continue;
        }
        let (category, _, _) = m.claim().expect("claimed pixels imply a claim");
        let slot = next_instance.entry(category).or_insert(0);
        instance[k] = *slot;
        *slot += 1;
    }
    let mut label = PanopticLabel::void(height, width);
    for (idx, o) in owner.iter().enumerate() {
        if let Some((k, _)) = o {
            let (category, _, _) = masks[*k].claim().unwrap();
            label.set(idx, category as u32, instance[*k]);
        }
    }
    debug_assert!(label.category_plane().iter().zip(label.instance_plane()).all(
        |(&c, &i)| (c == VOID) == (i == NO_INSTANCE)
    ));
    Ok(label)
}
