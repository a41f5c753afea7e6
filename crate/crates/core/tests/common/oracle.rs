//! Straight-line reference implementations used as test oracles. Inputs are
//! plain vectors so nothing here depends on the library's own helpers.

#![allow(dead_code)]

/// One input mask: category, probabilities, row-major bits.
#[derive(Debug, Clone)]
pub struct OracleMask {
    pub category: usize,
    pub probs: Vec<f64>,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct OracleParams {
    /// Stage letters in application order, e.g. "RSP".
    pub order: String,
    pub rho: f64,
    pub vote: f64,
    pub tau: f64,
    pub exclude_invalid: bool,
}

/// Output per mask: final category, final bits, dropped flag.
pub type OracleOutput = (usize, Vec<bool>, bool);

fn l1(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s
}

fn nearest(v: &[f64], centroids: &[Option<Vec<f64>>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, cen) in centroids.iter().enumerate() {
        if let Some(cen) = cen {
            let d = l1(v, cen);
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((c, d)),
            }
        }
    }
    best.map(|b| b.0)
}

/// Region weights: softmax of -L1/tau over valid centroids. Invalid
/// categories get 0 (exclude) or the mean valid weight followed by a
/// renormalisation of all weights (neutral).
pub fn weights(v: &[f64], centroids: &[Option<Vec<f64>>], tau: f64, exclude: bool) -> Vec<f64> {
    let c = centroids.len();
    let mut score = vec![f64::NEG_INFINITY; c];
    let mut max = f64::NEG_INFINITY;
    for k in 0..c {
        if let Some(cen) = &centroids[k] {
            score[k] = -l1(v, cen) / tau;
            if score[k] > max {
                max = score[k];
            }
        }
    }
    let mut w = vec![0.0; c];
    let mut total = 0.0;
    for k in 0..c {
        if centroids[k].is_some() {
            w[k] = (score[k] - max).exp();
            total += w[k];
        }
    }
    let mut n_valid = 0usize;
    for k in 0..c {
        if centroids[k].is_some() {
            w[k] /= total;
            n_valid += 1;
        }
    }
    if !exclude && n_valid < c {
        let mean = 1.0 / n_valid as f64;
        let mut sum = 0.0;
        for k in 0..c {
            if centroids[k].is_none() {
                w[k] = mean;
            }
            sum += w[k];
        }
        for x in w.iter_mut() {
            *x /= sum;
        }
    }
    w
}

fn region(
    mask: &[bool],
    probs: &[f64],
    features: &[Vec<f64>],
    centroids: &[Option<Vec<f64>>],
    p: &OracleParams,
) -> usize {
    let e = features[0].len();
    let mut v = vec![0.0; e];
    let mut area = 0usize;
    for (i, &b) in mask.iter().enumerate() {
        if b {
            area += 1;
            for k in 0..e {
                v[k] += features[i][k];
            }
        }
    }
    for x in v.iter_mut() {
        *x /= area as f64;
    }
    let w = weights(&v, centroids, p.tau, p.exclude_invalid);
    let mut best = 0;
    for c in 1..w.len() {
        if w[c] * probs[c] > w[best] * probs[best] {
            best = c;
        }
    }
    best
}

fn expand(mask: &[bool], sp: &[u32], rho: f64) -> Vec<bool> {
    let n = mask.len();
    let mut out = vec![false; n];
    for i in 0..n {
        let label = sp[i];
        let mut size = 0usize;
        let mut overlap = 0usize;
        for j in 0..n {
            if sp[j] == label {
                size += 1;
                if mask[j] {
                    overlap += 1;
                }
            }
        }
        out[i] = overlap > 0 && overlap as f64 > rho * size as f64;
    }
    out
}

fn pixel_vote(
    mask: &[bool],
    sp: &[u32],
    features: &[Vec<f64>],
    centroids: &[Option<Vec<f64>>],
    category: usize,
    vote: f64,
) -> Vec<bool> {
    if centroids[category].is_none() {
        return mask.to_vec();
    }
    let n = mask.len();
    let near: Vec<Option<usize>> = features.iter().map(|v| nearest(v, centroids)).collect();
    let mut out = vec![false; n];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let mut total = 0usize;
        let mut agree = 0usize;
        for j in 0..n {
            if mask[j] && sp[j] == sp[i] {
                total += 1;
                if near[j] == Some(category) {
                    agree += 1;
                }
            }
        }
        out[i] = agree as f64 >= vote * total as f64;
    }
    out
}

/// Applies the stages named in `p.order` to each mask independently.
/// `features[pixel][channel]`, `sp[pixel]` superpixel label,
/// `centroids[c]` is `None` for an invalid category.
pub fn calibrate(
    features: &[Vec<f64>],
    sp: &[u32],
    centroids: &[Option<Vec<f64>>],
    masks: &[OracleMask],
    p: &OracleParams,
) -> Vec<OracleOutput> {
    let mut out = Vec::new();
    for m in masks {
        let mut category = m.category;
        let mut bits = m.bits.clone();
        for stage in p.order.chars() {
            match stage {
                'R' => category = region(&bits, &m.probs, features, centroids, p),
                'S' => bits = expand(&bits, sp, p.rho),
                'P' => bits = pixel_vote(&bits, sp, features, centroids, category, p.vote),
                other => panic!("unknown stage {other}"),
            }
            if !bits.iter().any(|&b| b) {
                break;
            }
        }
        let dropped = !bits.iter().any(|&b| b);
        out.push((category, bits, dropped));
    }
    out
}

/// Per-category `(tp, fp, fn, sum of matched IoU)` from an exhaustive scan
/// over every prediction/ground-truth segment pair. Labels are given as
/// `(category, instance)` per pixel with `None` for void.
pub fn brute_force_pq_counts(
    pred: &[Option<(u32, u32)>],
    gt: &[Option<(u32, u32)>],
    num_categories: usize,
) -> Vec<(usize, usize, usize, f64)> {
    let mut pseg: Vec<(u32, u32)> = pred.iter().flatten().copied().collect();
    pseg.sort_unstable();
    pseg.dedup();
    let mut gseg: Vec<(u32, u32)> = gt.iter().flatten().copied().collect();
    gseg.sort_unstable();
    gseg.dedup();
    let mut out = vec![(0usize, 0usize, 0usize, 0.0f64); num_categories];
    let mut pmatched = vec![false; pseg.len()];
    let mut gmatched = vec![false; gseg.len()];
    for (gi, g) in gseg.iter().enumerate() {
        for (pi, q) in pseg.iter().enumerate() {
            if q.0 != g.0 {
                continue;
            }
            let mut inter = 0usize;
            let mut union = 0usize;
            for i in 0..pred.len() {
                let a = pred[i] == Some(*q);
                let b = gt[i] == Some(*g);
                if a && b {
                    inter += 1;
                }
                if a || b {
                    union += 1;
                }
            }
            let iou = inter as f64 / union as f64;
            if iou > 0.5 {
                assert!(!pmatched[pi] && !gmatched[gi], "IoU > 0.5 matched twice");
                pmatched[pi] = true;
                gmatched[gi] = true;
                out[g.0 as usize].0 += 1;
                out[g.0 as usize].3 += iou;
            }
        }
    }
    for (pi, q) in pseg.iter().enumerate() {
        if !pmatched[pi] {
            out[q.0 as usize].1 += 1;
        }
    }
    for (gi, g) in gseg.iter().enumerate() {
        if !gmatched[gi] {
            out[g.0 as usize].2 += 1;
        }
    }
    out
}

/// `(sq, rq, pq)` per category and the means over present categories.
pub fn pq_from_counts(counts: &[(usize, usize, usize, f64)]) -> (Vec<(f64, f64, f64)>, [f64; 3]) {
    let mut per = Vec::new();
    let mut sums = [0.0; 3];
    let mut present = 0usize;
    for &(tp, fp, fn_, iou_sum) in counts {
        let sq = if tp == 0 { 0.0 } else { iou_sum / tp as f64 };
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        let rq = if denom == 0.0 { 0.0 } else { tp as f64 / denom };
        per.push((sq, rq, sq * rq));
        if tp + fp + fn_ > 0 {
            present += 1;
            sums[0] += sq;
            sums[1] += rq;
            sums[2] += sq * rq;
        }
    }
    let means = if present == 0 {
        [0.0; 3]
    } else {
        sums.map(|s| s / present as f64)
    };
    (per, means)
}

/// Minimum total cost over every injective assignment of the smaller side
/// of `cost` into the larger, by exhaustive search.
pub fn brute_force_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let at = |small: usize, large: usize| if rows <= cols { cost[small][large] } else { cost[large][small] };
    let (n_small, n_large) = (rows.min(cols), rows.max(cols));
    fn search(k: usize, n_small: usize, n_large: usize, used: &mut [bool], at: &dyn Fn(usize, usize) -> f64) -> f64 {
        if k == n_small {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..n_large {
            if !used[j] {
                used[j] = true;
                best = best.min(at(k, j) + search(k + 1, n_small, n_large, used, at));
                used[j] = false;
            }
        }
        best
    }
    search(0, n_small, n_large, &mut vec![false; n_large], &at)
}
