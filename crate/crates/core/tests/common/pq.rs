//! Hand-computed panoptic quality fixtures and random label generation.

use maskcal::synth::SceneRng;
use maskcal::types::{PanopticLabel, NO_INSTANCE, VOID};

pub type Pixels = Vec<Option<(u32, u32)>>;

/// `.` is void; `a b c` are instances 0, 1, 2 of category 0 and `x y z` the
/// same for category 1.
pub fn pixels(spec: &str) -> Pixels {
    spec.chars()
        .filter(|c| !c.is_whitespace())
        .map(|ch| match ch {
            '.' => None,
            'a' => Some((0, 0)),
            'b' => Some((0, 1)),
            'c' => Some((0, 2)),
            'x' => Some((1, 0)),
            'y' => Some((1, 1)),
            'z' => Some((1, 2)),
            other => panic!("bad fixture pixel {other}"),
        })
        .collect()
}

pub fn to_label(h: usize, w: usize, px: &[Option<(u32, u32)>]) -> PanopticLabel {
    let cat = px.iter().map(|p| p.map_or(VOID, |(c, _)| c)).collect();
    let inst = px.iter().map(|p| p.map_or(NO_INSTANCE, |(_, i)| i)).collect();
    PanopticLabel::from_planes(h, w, cat, inst).unwrap()
}

pub struct PqFixture {
    pub name: &'static str,
    pub width: usize,
    pub pred: &'static str,
    pub gt: &'static str,
    pub ignore_void: bool,
    /// `(tp, fp, fn)` per category, two categories.
    pub counts: [(usize, usize, usize); 2],
    /// Mean SQ, RQ, PQ over present categories.
    pub means: [f64; 3],
}

pub fn fixtures() -> Vec<PqFixture> {
    vec![
        PqFixture {
            name: "identical",
            width: 6,
            pred: "aaaxxx",
            gt: "aaaxxx",
            ignore_void: false,
            counts: [(1, 0, 0), (1, 0, 0)],
            means: [1.0, 1.0, 1.0],
        },
        PqFixture {
            name: "sq 0.8 rq 0.5",
            width: 10,
            pred: "aaaa..b...",
            gt: "aaaaa..bbb",
            ignore_void: false,
            counts: [(1, 1, 1), (0, 0, 0)],
            means: [0.8, 0.5, 0.4],
        },
        PqFixture {
            name: "empty prediction",
            width: 4,
            pred: "....",
            gt: "aaaa",
            ignore_void: false,
            counts: [(0, 0, 1), (0, 0, 0)],
            means: [0.0, 0.0, 0.0],
        },
        PqFixture {
            name: "empty ground truth",
            width: 4,
            pred: "xxxx",
            gt: "....",
            ignore_void: false,
            counts: [(0, 0, 0), (0, 1, 0)],
            means: [0.0, 0.0, 0.0],
        },
        PqFixture {
            name: "both empty",
            width: 3,
            pred: "...",
            gt: "...",
            ignore_void: false,
            counts: [(0, 0, 0), (0, 0, 0)],
            means: [0.0, 0.0, 0.0],
        },
        PqFixture {
            name: "iou exactly one half",
            width: 4,
            pred: "aaaa",
            gt: "aa..",
            ignore_void: false,
            counts: [(0, 1, 1), (0, 0, 0)],
            means: [0.0, 0.0, 0.0],
        },
        PqFixture {
            name: "void ignored",
            width: 4,
            pred: "aaaa",
            gt: "aa..",
            ignore_void: true,
            counts: [(1, 0, 0), (0, 0, 0)],
            means: [1.0, 1.0, 1.0],
        },
        PqFixture {
            name: "wrong category",
            width: 4,
            pred: "xxxx",
            gt: "aaaa",
            ignore_void: false,
            counts: [(0, 0, 1), (0, 1, 0)],
            means: [0.0, 0.0, 0.0],
        },
        PqFixture {
            name: "one perfect one partial",
            width: 6,
            pred: "aaa.xx",
            gt: "aaaxxx",
            ignore_void: false,
            counts: [(1, 0, 0), (1, 0, 0)],
            means: [5.0 / 6.0, 1.0, 5.0 / 6.0],
        },
        PqFixture {
            name: "split prediction",
            width: 6,
            pred: "aaaabb",
            gt: "aaaaaa",
            ignore_void: false,
            counts: [(1, 1, 0), (0, 0, 0)],
            means: [2.0 / 3.0, 2.0 / 3.0, 4.0 / 9.0],
        },
        PqFixture {
            name: "merged prediction",
            width: 6,
            pred: "aaaaaa",
            gt: "aaaabb",
            ignore_void: false,
            counts: [(1, 0, 1), (0, 0, 0)],
            means: [2.0 / 3.0, 2.0 / 3.0, 4.0 / 9.0],
        },
        PqFixture {
            name: "instances swapped ids",
            width: 6,
            pred: "bbbaaa",
            gt: "aaabbb",
            ignore_void: false,
            counts: [(2, 0, 0), (0, 0, 0)],
            means: [1.0, 1.0, 1.0],
        },
        PqFixture {
            name: "two rows mixed",
            width: 4,
            pred: "aaxx aayy",
            gt: "aaxx aaxx",
            ignore_void: false,
            // a: 4/4; x: pred x {2,3} vs gt x {2,3,6,7} = 0.5, no match; y FP
            counts: [(1, 0, 0), (0, 2, 1)],
            means: [0.5, 0.5, 0.5],
        },
    ]
}

/// A random `h x w` label with up to `num_categories` categories, a few
/// instances each and some void.
pub fn random_pixels(rng: &mut SceneRng, h: usize, w: usize, num_categories: usize) -> Pixels {
    let mut px: Pixels = vec![None; h * w];
    let rects = rng.int_inclusive(0, 6);
    for _ in 0..rects {
        paint_rect(rng, &mut px, h, w, num_categories);
    }
    px
}

/// Overwrites a random rectangle with a random segment key or void.
pub fn paint_rect(rng: &mut SceneRng, px: &mut Pixels, h: usize, w: usize, num_categories: usize) {
    let r0 = rng.below(h);
    let c0 = rng.below(w);
    let r1 = rng.int_inclusive(r0, h - 1);
    let c1 = rng.int_inclusive(c0, w - 1);
    let key = if rng.bernoulli(0.15) {
        None
    } else {
        Some((rng.below(num_categories) as u32, rng.below(3) as u32))
    };
    for r in r0..=r1 {
        for c in c0..=c1 {
            px[r * w + c] = key;
        }
    }
}

/// A ground truth and a perturbed copy of it as prediction.
pub fn random_pair(seed: u64, h: usize, w: usize, num_categories: usize) -> (Pixels, Pixels) {
    let mut rng = SceneRng::new(seed);
    let gt = random_pixels(&mut rng, h, w, num_categories);
    let mut pred = if rng.bernoulli(0.8) {
        gt.clone()
    } else {
        random_pixels(&mut rng, h, w, num_categories)
    };
    let edits = rng.int_inclusive(0, 3);
    for _ in 0..edits {
        paint_rect(&mut rng, &mut pred, h, w, num_categories);
    }
    (pred, gt)
}
