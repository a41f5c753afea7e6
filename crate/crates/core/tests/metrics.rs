mod common;

use common::oracle::{brute_force_pq_counts, pq_from_counts};
use common::pq::{fixtures, pixels, random_pair, to_label};
use maskcal::metrics::{
    compute_pq, match_segments, match_segments_with, resolve_overlaps, MatchOptions, MatchResult, MatchedPair,
    PqStats, UnmatchedSegment,
};
use maskcal::types::{BinaryMask, CategoryDistribution, PseudoMask, VOID};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

#[test]
fn hand_computed_fixtures() {
    for fx in fixtures() {
        let (p, g) = (pixels(fx.pred), pixels(fx.gt));
        let h = g.len() / fx.width;
        let m = match_segments_with(
            &to_label(h, fx.width, &p),
            &to_label(h, fx.width, &g),
            MatchOptions {
                ignore_void: fx.ignore_void,
            },
        )
        .unwrap();
        let r = compute_pq(&m, 2);
        for (c, want) in fx.counts.iter().enumerate() {
            let q = &r.categories[c];
            assert_eq!((q.tp, q.fp, q.fn_), *want, "{}: category {c}", fx.name);
        }
        let got = [r.m_sq, r.m_rq, r.m_pq];
        for k in 0..3 {
            assert!((got[k] - fx.means[k]).abs() < TOL, "{}: {got:?} vs {:?}", fx.name, fx.means);
        }
    }
}

#[test]
fn fixture_proportions() {
    let (p, g) = (pixels("aaaa..b..."), pixels("aaaaa..bbb"));
    let r = compute_pq(&match_segments(&to_label(1, 10, &p), &to_label(1, 10, &g)).unwrap(), 1);
    for x in [r.proportions.tp, r.proportions.fp, r.proportions.fn_] {
        assert!((x - 1.0 / 3.0).abs() < TOL);
    }
}

#[test]
fn accumulation_over_images() {
    let mut stats = PqStats::new(2);
    for (pred, gt) in [("aaaxxx", "aaaxxx"), ("......", "aaaaaa")] {
        let m = match_segments(&to_label(1, 6, &pixels(pred)), &to_label(1, 6, &pixels(gt))).unwrap();
        stats.add(&m);
    }
    let r = stats.report();
    assert!((r.categories[0].rq - 2.0 / 3.0).abs() < TOL);
    assert!((r.m_sq - 1.0).abs() < TOL);
    assert!((r.m_rq - 5.0 / 6.0).abs() < TOL);
    assert!((r.m_pq - 5.0 / 6.0).abs() < TOL);
}

#[test]
fn matches_brute_force_on_random_scenes() {
    for seed in 0..300 {
        let (p, g) = random_pair(seed, 8, 8, 3);
        let m = match_segments(&to_label(8, 8, &p), &to_label(8, 8, &g)).unwrap();
        let r = compute_pq(&m, 3);
        let counts = brute_force_pq_counts(&p, &g, 3);
        let (per, means) = pq_from_counts(&counts);
        for c in 0..3 {
            let q = &r.categories[c];
            assert_eq!((q.tp, q.fp, q.fn_), (counts[c].0, counts[c].1, counts[c].2), "seed {seed}");
            assert!((q.sq - per[c].0).abs() < TOL && (q.rq - per[c].1).abs() < TOL && (q.pq - per[c].2).abs() < TOL);
        }
        assert!((r.m_pq - means[2]).abs() < TOL, "seed {seed}");
    }
}

fn arb_match() -> impl Strategy<Value = MatchResult> {
    let pair = (0u32..3, 0.5001f64..=1.0).prop_map(|(category, iou)| MatchedPair {
        prediction: 0,
        ground_truth: 0,
        category,
        iou,
    });
    let un = (0u32..3).prop_map(|category| UnmatchedSegment { id: 0, category });
    (
        prop::collection::vec(pair, 0..6),
        prop::collection::vec(un.clone(), 0..6),
        prop::collection::vec(un, 0..6),
    )
        .prop_map(|(pairs, unmatched_predictions, unmatched_ground_truth)| MatchResult {
            pairs,
            unmatched_predictions,
            unmatched_ground_truth,
        })
}

proptest! {
    #[test]
    fn pq_is_sq_times_rq(m in arb_match()) {
        let r = compute_pq(&m, 3);
        for q in &r.categories {
            prop_assert!((q.pq - q.sq * q.rq).abs() < TOL);
            prop_assert!((0.0..=1.0).contains(&q.rq) && (0.0..=1.0).contains(&q.sq));
            prop_assert!(q.tp == 0 || q.sq > 0.5);
        }
    }

    #[test]
    fn turning_a_false_positive_into_a_match_raises_rq(m in arb_match(), iou in 0.5001f64..=1.0) {
        prop_assume!(!m.unmatched_predictions.is_empty());
        let before = compute_pq(&m, 3);
        let mut after = m.clone();
        let fp = after.unmatched_predictions.remove(0);
        after.pairs.push(MatchedPair { prediction: 0, ground_truth: 0, category: fp.category, iou });
        let a = compute_pq(&after, 3);
        let c = fp.category as usize;
        prop_assert!(a.categories[c].rq > before.categories[c].rq);
    }

    #[test]
    fn swapping_roles_swaps_fp_and_fn(seed in any::<u64>()) {
        let (p, g) = random_pair(seed, 6, 6, 2);
        let (lp, lg) = (to_label(6, 6, &p), to_label(6, 6, &g));
        let ab = compute_pq(&match_segments(&lp, &lg).unwrap(), 2);
        let ba = compute_pq(&match_segments(&lg, &lp).unwrap(), 2);
        for (x, y) in ab.categories.iter().zip(&ba.categories) {
            prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fn_, y.fp));
            prop_assert!((x.pq - y.pq).abs() < TOL);
        }
    }

    #[test]
    fn resolve_overlaps_gives_each_pixel_its_most_confident_claim(
        specs in prop::collection::vec((0usize..3, 0.34f32..1.0, prop::collection::vec(any::<bool>(), 20)), 0..5)
    ) {
        let masks: Vec<PseudoMask> = specs
            .iter()
            .map(|(c, conf, bits)| {
                let mut p = vec![(1.0 - conf) / 2.0; 3];
                p[*c] = *conf;
                PseudoMask::new(*c, CategoryDistribution::new(p).unwrap(), BinaryMask::from_bits(4, 5, bits.clone()).unwrap()).unwrap()
            })
            .collect();
        let label = resolve_overlaps(&masks, 4, 5).unwrap();
        for idx in 0..20 {
            let claims: Vec<&PseudoMask> = masks.iter().filter(|m| m.mask().get_index(idx)).collect();
            if claims.is_empty() {
                prop_assert!(label.is_void(idx));
                continue;
            }
            let best = claims.iter().fold(claims[0], |b, m| if m.confidence() > b.confidence() { m } else { b });
            prop_assert_eq!(label.category_at(idx) as usize, best.category());
            prop_assert!(label.category_at(idx) != VOID);
        }
    }
}
