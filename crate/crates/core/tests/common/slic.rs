//! Independent checks for superpixel maps.

use std::collections::VecDeque;

use maskcal::synth::SceneRng;
use maskcal::types::FeatureMap;

fn neighbours(idx: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (idx / w, idx % w);
    [
        (r > 0).then(|| idx - w),
        (r + 1 < h).then(|| idx + w),
        (c > 0).then(|| idx - 1),
        (c + 1 < w).then(|| idx + 1),
    ]
    .into_iter()
    .flatten()
}

/// Checks that `labels` uses exactly `0..count`, each label forming one
/// 4-connected region.
pub fn partition_violation(labels: &[u32], count: usize, h: usize, w: usize) -> Option<String> {
    if labels.len() != h * w {
        return Some("wrong label length".into());
    }
    let mut first = vec![None; count];
    for (idx, &l) in labels.iter().enumerate() {
        let Some(slot) = first.get_mut(l as usize) else {
            return Some(format!("label {l} >= count {count}"));
        };
        slot.get_or_insert(idx);
    }
    let mut sizes = vec![0usize; count];
    labels.iter().for_each(|&l| sizes[l as usize] += 1);
    for (l, start) in first.iter().enumerate() {
        let Some(start) = *start else {
            return Some(format!("label {l} unused"));
        };
        let mut seen = vec![false; h * w];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = queue.pop_front() {
            reached += 1;
            for n in neighbours(i, h, w) {
                if !seen[n] && labels[n] as usize == l {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if reached != sizes[l] {
            return Some(format!("label {l} is disconnected"));
        }
    }
    None
}

/// A random RGB image with values in [0, 1].
pub fn random_image(rng: &mut SceneRng, h: usize, w: usize) -> FeatureMap {
    let smooth = rng.bernoulli(0.5);
    let base = [rng.uniform(), rng.uniform(), rng.uniform()];
    FeatureMap::from_fn(3, h, w, |c, r, k| {
        if smooth {
            ((base[c] + 0.05 * (r + 2 * k) as f64).fract()) as f32
        } else {
            ((base[c] * 7.0 + (r * 31 + k * 17 + c * 5) as f64 * 0.137).fract()) as f32
        }
    })
    .unwrap()
}

/// A two-colour image split by a random straight line or a disc, and the
/// region membership of each pixel.
pub fn two_region_image(rng: &mut SceneRng, h: usize, w: usize) -> (FeatureMap, Vec<bool>) {
    let inside: Vec<bool> = if rng.bernoulli(0.5) {
        let angle = rng.range(0.0, std::f64::consts::PI);
        let (nx, ny) = (angle.cos(), angle.sin());
        let (cx, cy) = (rng.range(0.3, 0.7) * w as f64, rng.range(0.3, 0.7) * h as f64);
        (0..h * w)
            .map(|i| ((i % w) as f64 + 0.5 - cx) * nx + ((i / w) as f64 + 0.5 - cy) * ny > 0.0)
            .collect()
    } else {
        let radius = rng.range(0.2, 0.35) * h.min(w) as f64;
        let (cx, cy) = (rng.range(0.4, 0.6) * w as f64, rng.range(0.4, 0.6) * h as f64);
        (0..h * w)
            .map(|i| ((i % w) as f64 + 0.5 - cx).hypot((i / w) as f64 + 0.5 - cy) < radius)
            .collect()
    };
    let dark = [rng.range(0.0, 0.3), rng.range(0.0, 0.3), rng.range(0.0, 0.3)];
    let light = [rng.range(0.7, 1.0), rng.range(0.7, 1.0), rng.range(0.7, 1.0)];
    let image = FeatureMap::from_fn(3, h, w, |c, r, k| {
        (if inside[r * w + k] { light[c] } else { dark[c] }) as f32
    })
    .unwrap();
    (image, inside)
}

/// Fraction of ground-truth boundary pixels lying within `tolerance`
/// (Chebyshev distance) of a superpixel boundary pixel. Boundary pixels have
/// a 4-neighbour with a different value. `None` if there is no boundary.
pub fn boundary_recall(labels: &[u32], region: &[bool], h: usize, w: usize, tolerance: usize) -> Option<f64> {
    let edge = |v: &dyn Fn(usize) -> u32| -> Vec<bool> {
        (0..h * w).map(|i| neighbours(i, h, w).any(|n| v(n) != v(i))).collect()
    };
    let gt = edge(&|i| region[i] as u32);
    let sp = edge(&|i| labels[i]);
    let t = tolerance as isize;
    let mut total = 0usize;
    let mut hit = 0usize;
    for i in (0..h * w).filter(|&i| gt[i]) {
        total += 1;
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        let found = (-t..=t).any(|dr| {
            (-t..=t).any(|dc| {
                let (y, x) = (r + dr, c + dc);
                y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && sp[y as usize * w + x as usize]
            })
        });
        hit += found as usize;
    }
    (total > 0).then(|| hit as f64 / total as f64)
}
