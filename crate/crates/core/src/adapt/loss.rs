use serde::{Deserialize, Serialize};

use super::hungarian::{hungarian_match, Assignment};
use crate::error::{Error, Result};
use crate::metrics::iou;
use crate::types::PseudoMaskSet;

/// Probability floor inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub matching_cost: f64,
    pub category_term: f64,
    pub mask_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(matching_cost: f64, category_term: f64, mask_term: f64) -> Self {
        Self {
            matching_cost,
            category_term,
            mask_term,
            total: category_term + mask_term,
        }
    }

    /// Element-wise mean; zero for an empty slice.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::new(
            sum(|l| l.matching_cost),
            sum(|l| l.category_term),
            sum(|l| l.mask_term),
        )
    }
}

/// Set loss between predicted masks and target masks.
pub fn toy_loss(pred: &PseudoMaskSet, target: &PseudoMaskSet) -> Result<LossBreakdown> {
    toy_loss_with_matching(pred, target).map(|(l, _)| l)
}

/// As [`toy_loss`], also returning the `(prediction, target)` assignment.
///
/// Pair cost is `(1 - p_pred(target category)) + (1 - IoU)`. Terms are
/// averaged over the targets; a target left unmatched contributes
/// `-ln(1e-7)` and `1`. Predictions without a target cost nothing.
pub fn toy_loss_with_matching(
    pred: &PseudoMaskSet,
    target: &PseudoMaskSet,
) -> Result<(LossBreakdown, Assignment)> {
    if pred.num_categories() != target.num_categories() {
        return Err(Error::LengthMismatch {
            left: pred.num_categories(),
            right: target.num_categories(),
        });
    }
    if pred.dims() != target.dims() {
        return Err(Error::DimensionMismatch {
            expected: target.dims(),
            actual: pred.dims(),
        });
    }
    let k_gt = target.len();
    if k_gt == 0 {
        return Ok((
            LossBreakdown::default(),
            Assignment {
                pairs: Vec::new(),
                total_cost: 0.0,
            },
        ));
    }
    let mut prob = vec![vec![0.0f64; k_gt]; pred.len()];
    let mut overlap = vec![vec![0.0f64; k_gt]; pred.len()];
    let mut cost = vec![vec![0.0f64; k_gt]; pred.len()];
    for (i, p) in pred.masks().iter().enumerate() {
        for (j, t) in target.masks().iter().enumerate() {
            prob[i][j] = p.dist().prob(t.category()) as f64;
            overlap[i][j] = iou(p.mask(), t.mask())?;
            cost[i][j] = (1.0 - prob[i][j]) + (1.0 - overlap[i][j]);
        }
    }
    let assignment = hungarian_match(&cost)?;
    let unmatched = (k_gt - assignment.pairs.len()) as f64;
    let mut category = unmatched * -PROB_FLOOR.ln();
    let mut mask = unmatched;
    for &(i, j) in &assignment.pairs {
        category -= prob[i][j].max(PROB_FLOOR).ln();
        mask += 1.0 - overlap[i][j];
    }
    let n = k_gt as f64;
    Ok((
        LossBreakdown::new(assignment.total_cost / n, category / n, mask / n),
        assignment,
    ))
}
