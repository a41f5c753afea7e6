//! SLIC superpixels: grid-seeded, window-restricted k-means in colour and
//! position, followed by a connectivity pass that leaves a partition of
//! 4-connected regions.

use std::cmp::Reverse;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{for_each_neighbour, label_components};
use crate::types::{BinaryMask, FeatureMap};

/// Pixels per superpixel when no target count is given.
pub const DEFAULT_PIXELS_PER_SUPERPIXEL: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicConfig {
    /// Requested number of superpixels; `None` means `ceil(H * W / 400)`.
    pub target_count: Option<usize>,
    pub compactness: f64,
    pub iterations: usize,
    /// Components smaller than this fraction of the mean superpixel area are
    /// absorbed by a neighbour.
    pub min_region_fraction: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            target_count: None,
            compactness: 10.0,
            iterations: 10,
            min_region_fraction: 0.25,
        }
    }
}

impl SlicConfig {
    pub fn with_count(target_count: usize) -> Self {
        Self {
            target_count: Some(target_count),
            ..Self::default()
        }
    }

    pub fn resolved_count(&self, height: usize, width: usize) -> usize {
        self.target_count
            .unwrap_or_else(|| (height * width).div_ceil(DEFAULT_PIXELS_PER_SUPERPIXEL))
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let count = self.resolved_count(height, width);
        if count == 0 || count > height * width {
            return Err(Error::InvalidConfig(format!(
                "superpixel count {count} outside [1, {}]",
                height * width
            )));
        }
        if !(self.compactness >= 0.0 && self.compactness.is_finite()) {
            return Err(Error::InvalidConfig("compactness must be >= 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.min_region_fraction > 0.0 && self.min_region_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "min_region_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Partition of an `H x W` grid into `count` non-empty 4-connected regions
/// labelled `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelMap {
    /// Validates a label grid against the partition invariants.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: height * width,
            });
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let (_, sizes) = label_components(&labels, height, width);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("superpixel labels are not dense".into()));
        }
        if sizes.len() != count {
            return Err(Error::InvalidConfig(
                "superpixel is not 4-connected".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            labels,
            count,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn label_at(&self, idx: usize) -> usize {
        self.labels[idx] as usize
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Pixel indices of every superpixel, each list in scan order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (idx, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(idx);
        }
        out
    }

    pub fn superpixel_mask(&self, label: usize) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |r, c| {
            self.labels[r * self.width + c] as usize == label
        })
    }

    /// Pixels with at least one 4-neighbour in a different superpixel.
    pub fn boundary_mask(&self) -> BinaryMask {
        let mut mask = BinaryMask::empty(self.height, self.width);
        for idx in 0..self.labels.len() {
            let mut edge = false;
            for_each_neighbour(idx, self.height, self.width, |n| {
                edge |= self.labels[n] != self.labels[idx];
            });
            if edge {
                mask.set(idx, true);
            }
        }
        mask
    }
}

/// sRGB (components in `[0, 1]`, clamped) to CIELAB under D65.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    fn linear(c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let [r, g, b] = rgb.map(linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel colour coordinates used by the clustering: CIELAB for three
/// channels, `100 * value` (an L-like scale) for one.
fn colour_space(image: &FeatureMap) -> Result<Vec<[f64; 3]>> {
    let n = image.height() * image.width();
    match image.channels() {
        1 => Ok((0..n)
            .map(|i| [100.0 * image.at(0, i) as f64, 0.0, 0.0])
            .collect()),
        3 => Ok((0..n)
            .map(|i| {
                srgb_to_lab([
                    image.at(0, i) as f64,
                    image.at(1, i) as f64,
                    image.at(2, i) as f64,
                ])
            })
            .collect()),
        e => Err(Error::InvalidConfig(format!(
            "superpixels need 1 or 3 channels, got {e}"
        ))),
    }
}

#[derive(Clone, Copy)]
struct Center {
    colour: [f64; 3],
    row: f64,
    col: f64,
}

/// Grid shape for `count` seeds over an `height x width` image.
fn seed_grid(count: usize, height: usize, width: usize) -> (usize, usize) {
    let ny = ((count as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, height);
    let nx = ((count as f64 / ny as f64).round() as usize).clamp(1, width);
    (ny, nx)
}

pub fn compute_superpixels(image: &FeatureMap, cfg: &SlicConfig) -> Result<SuperpixelMap> {
    let (height, width) = image.dims();
    cfg.validate(height, width)?;
    let colour = colour_space(image)?;
    let count = cfg.resolved_count(height, width);
    let n = height * width;
    let (ny, nx) = seed_grid(count, height, width);
    let step = (n as f64 / count as f64).sqrt();
    let spatial_weight = (cfg.compactness / step).powi(2);
    let half_h = height as f64 / ny as f64;
    let half_w = width as f64 / nx as f64;

    let mut labels: Vec<usize> = (0..n)
        .map(|idx| {
            let (r, c) = (idx / width, idx % width);
            (r * ny / height) * nx + c * nx / width
        })
        .collect();
    let k = nx * ny;
    let mut centers = recompute_centers(&labels, &colour, width, k, None);
    let mut dist = vec![f64::INFINITY; n];

    for _ in 0..cfg.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (label, center) in centers.iter().enumerate() {
            let r0 = (center.row - half_h).ceil().max(0.0) as usize;
            let r1 = ((center.row + half_h).floor() as usize).min(height - 1);
            let c0 = (center.col - half_w).ceil().max(0.0) as usize;
            let c1 = ((center.col + half_w).floor() as usize).min(width - 1);
            for r in r0..=r1 {
                let dr = r as f64 - center.row;
                for c in c0..=c1 {
                    let idx = r * width + c;
                    let dc = c as f64 - center.col;
                    let px = &colour[idx];
                    let dcol = (px[0] - center.colour[0]).powi(2)
                        + (px[1] - center.colour[1]).powi(2)
                        + (px[2] - center.colour[2]).powi(2);
                    let d = dcol + (dr * dr + dc * dc) * spatial_weight;
                    // strict comparison: ties stay with the lower seed index
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = label;
                    }
                }
            }
        }
        centers = recompute_centers(&labels, &colour, width, k, Some(&centers));
    }

    let raw: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    Ok(enforce_connectivity(
        &raw,
        height,
        width,
        count,
        cfg.min_region_fraction,
    ))
}

fn recompute_centers(
    labels: &[usize],
    colour: &[[f64; 3]],
    width: usize,
    k: usize,
    previous: Option<&[Center]>,
) -> Vec<Center> {
    let mut acc = vec![[0.0f64; 6]; k];
    for (idx, &l) in labels.iter().enumerate() {
        let a = &mut acc[l];
        a[0] += colour[idx][0];
        a[1] += colour[idx][1];
        a[2] += colour[idx][2];
        a[3] += (idx / width) as f64;
        a[4] += (idx % width) as f64;
        a[5] += 1.0;
    }
    acc.iter()
        .enumerate()
        .map(|(l, a)| {
            if a[5] == 0.0 {
                // an emptied cluster keeps its last position and may regain pixels
                previous.map(|p| p[l]).unwrap_or(Center {
                    colour: [0.0; 3],
                    row: 0.0,
                    col: 0.0,
                })
            } else {
                Center {
                    colour: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    row: a[3] / a[5],
                    col: a[4] / a[5],
                }
            }
        })
        .collect()
}

/// Region adjacency over connected components with merge bookkeeping.
struct RegionGraph {
    parent: Vec<usize>,
    size: Vec<usize>,
    adj: Vec<BTreeSet<usize>>,
    alive: usize,
}

impl RegionGraph {
    fn new(comp: &[usize], sizes: &[usize], height: usize, width: usize) -> Self {
        let mut adj = vec![BTreeSet::new(); sizes.len()];
        for idx in 0..comp.len() {
            for_each_neighbour(idx, height, width, |n| {
                if comp[n] != comp[idx] {
                    adj[comp[idx]].insert(comp[n]);
                }
            });
        }
        Self {
            parent: (0..sizes.len()).collect(),
            size: sizes.to_vec(),
            adj,
            alive: sizes.len(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Largest adjacent region (ties: lowest id).
    fn best_neighbour(&self, root: usize) -> Option<usize> {
        self.adj[root]
            .iter()
            .copied()
            .max_by_key(|&n| (self.size[n], Reverse(n)))
    }

    /// Merges `small` into `into`; both must be roots.
    fn merge(&mut self, small: usize, into: usize) {
        self.parent[small] = into;
        self.size[into] += self.size[small];
        let moved = std::mem::take(&mut self.adj[small]);
        for &x in &moved {
            self.adj[x].remove(&small);
            if x != into {
                self.adj[x].insert(into);
                self.adj[into].insert(x);
            }
        }
        self.adj[into].remove(&small);
        self.alive -= 1;
    }

    /// Repeatedly absorbs the smallest region while `pred(size, alive)` holds.
    fn absorb_smallest(&mut self, mut pred: impl FnMut(usize, usize) -> bool) {
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..self.size.len())
            .filter(|&i| self.parent[i] == i)
            .map(|i| Reverse((self.size[i], i)))
            .collect();
        while let Some(Reverse((size, id))) = heap.pop() {
            if self.parent[id] != id || self.size[id] != size {
                continue;
            }
            if !pred(size, self.alive) {
                break;
            }
            let Some(target) = self.best_neighbour(id) else {
                continue;
            };
            self.merge(id, target);
            heap.push(Reverse((self.size[target], target)));
        }
    }
}

/// Turns a candidate labelling into a valid [`SuperpixelMap`].
///
/// Components smaller than `min_region_fraction * H * W / target_count` are
/// merged into their largest neighbour; the result is then nudged so its
/// region count lies in `[target_count / 2, 2 * target_count]`.
pub fn enforce_connectivity(
    labels: &[u32],
    height: usize,
    width: usize,
    target_count: usize,
    min_region_fraction: f64,
) -> SuperpixelMap {
    let n = height * width;
    let target = target_count.clamp(1, n);
    let threshold = min_region_fraction * n as f64 / target as f64;

    let (comp, sizes) = label_components(labels, height, width);
    let mut graph = RegionGraph::new(&comp, &sizes, height, width);
    graph.absorb_smallest(|size, _| (size as f64) < threshold);
    graph.absorb_smallest(|_, alive| alive > 2 * target);

    let mut out: Vec<usize> = comp.iter().map(|&c| graph.find(c)).collect();
    let mut regions = graph.alive;
    while 2 * regions < target {
        regions = split_largest(&mut out, height, width);
    }
    dense_relabel(&out, height, width)
}

/// Splits the largest region in two along a breadth-first order from its
/// first pixel; the tail may fall apart into several components.
fn split_largest(labels: &mut [usize], height: usize, width: usize) -> usize {
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for &l in labels.iter() {
        *sizes.entry(l).or_default() += 1;
    }
    let (&largest, &size) = sizes
        .iter()
        .max_by_key(|&(&l, &s)| (s, Reverse(l)))
        .expect("non-empty grid");
    let start = labels.iter().position(|&l| l == largest).unwrap();
    let fresh = labels.iter().max().unwrap() + 1;
    let mut visited = vec![false; labels.len()];
    let mut queue = VecDeque::from([start]);
    visited[start] = true;
    let mut taken = 0;
    while let Some(idx) = queue.pop_front() {
        if taken == size.div_ceil(2) {
            break;
        }
        labels[idx] = fresh;
        taken += 1;
        for_each_neighbour(idx, height, width, |nb| {
            if !visited[nb] && labels[nb] == largest {
                visited[nb] = true;
                queue.push_back(nb);
            }
        });
    }
    let (_, sizes) = label_components(labels, height, width);
    sizes.len()
}

/// Relabels by connected component, in scan order of first pixels.
fn dense_relabel(labels: &[usize], height: usize, width: usize) -> SuperpixelMap {
    let (comp, sizes) = label_components(labels, height, width);
    SuperpixelMap {
        height,
        width,
        labels: comp.into_iter().map(|c| c as u32).collect(),
        count: sizes.len(),
    }
}

/// Number of mask pixels inside each superpixel.
pub fn overlap_areas(mask: &BinaryMask, sp: &SuperpixelMap) -> Result<Vec<usize>> {
    mask.ensure_dims(sp.dims())?;
    let mut areas = vec![0; sp.count()];
    for idx in mask.ones() {
        areas[sp.label_at(idx)] += 1;
    }
    Ok(areas)
}

/// Per-image superpixel cache keyed by a hash of the image content and the
/// clustering parameters.
#[derive(Debug, Default)]
pub struct SuperpixelCache {
    entries: HashMap<u64, Arc<SuperpixelMap>>,
}

impl SuperpixelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_compute(
        &mut self,
        image: &FeatureMap,
        cfg: &SlicConfig,
    ) -> Result<Arc<SuperpixelMap>> {
        let key = content_key(image, cfg);
        if let Some(hit) = self.entries.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let sp = Arc::new(compute_superpixels(image, cfg)?);
        self.entries.insert(key, Arc::clone(&sp));
        Ok(sp)
    }
}

fn content_key(image: &FeatureMap, cfg: &SlicConfig) -> u64 {
    let mut h = DefaultHasher::new();
    (image.channels(), image.height(), image.width()).hash(&mut h);
    for v in image.values() {
        v.to_bits().hash(&mut h);
    }
    cfg.target_count.hash(&mut h);
    cfg.compactness.to_bits().hash(&mut h);
    cfg.iterations.hash(&mut h);
    cfg.min_region_fraction.to_bits().hash(&mut h);
    h.finish()
}
