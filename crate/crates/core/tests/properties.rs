mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use leanet::dataio::{decode_mask, encode_mask, LabelSet};
use leanet::extract::{mask_from_regions, regions_from_mask};
use leanet::geometry::BBox;
use leanet::mask::MultiLabelMask;
use leanet::narrate::{document_entries, parse_markup, reading_order, script_for, to_markup, Mode, OrderItem};
use leanet::train::compute_metrics;

fn mask_strategy(max_k: usize, max_side: usize) -> impl Strategy<Value = MultiLabelMask> {
    (1..=max_k, 1..=max_side, 1..=max_side, 0.0..1.0f64).prop_flat_map(|(k, h, w, density)| {
        proptest::collection::vec(proptest::bool::weighted(density.clamp(0.01, 0.99)), k * h * w).prop_map(
            move |bits| MultiLabelMask::from_vec(k, h, w, bits.into_iter().map(u8::from).collect()).unwrap(),
        )
    })
}

/// Per class, rectangles separated by at least one background pixel on
/// every side.
fn separated_rects_strategy() -> impl Strategy<Value = MultiLabelMask> {
    (2..=4usize, 8..=24usize, 8..=24usize, any::<u64>()).prop_map(|(k, h, w, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = MultiLabelMask::new(k, h, w);
        for c in 0..k {
            let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
            for _ in 0..6 {
                let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
                let (rw, rh) = (rng.gen_range(1..=(w - x).min(8)), rng.gen_range(1..=(h - y).min(8)));
                let clear = placed.iter().all(|&(px, py, pw, ph)| {
                    x > px + pw || px > x + rw || y > py + ph || py > y + rh
                });
                if clear {
                    m.fill_rect(c, x, y, rw, rh);
                    placed.push((x, y, rw, rh));
                }
            }
        }
        m
    })
}

fn labels_for(k: usize) -> LabelSet {
    let names = ["title", "text", "figure", "table", "equation"];
    LabelSet::new(
        (0..k)
            .map(|i| (names[i].to_string(), leanet::dataio::Coarse::Text))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn codec_round_trip(mask in mask_strategy(5, 24)) {
        let bytes = encode_mask(&mask);
        prop_assert_eq!(decode_mask(&bytes).unwrap(), mask);
    }

    #[test]
    fn iou_is_symmetric(a in mask_strategy(3, 8), seed in any::<u64>()) {
        let (k, h, w) = a.dims();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = MultiLabelMask::from_vec(k, h, w, (0..k * h * w).map(|_| rng.gen_range(0..2u8)).collect()).unwrap();
        let ab = compute_metrics(&a, &b).unwrap();
        let ba = compute_metrics(&b, &a).unwrap();
        prop_assert_eq!(ab.per_class_iou, ba.per_class_iou);
        prop_assert_eq!(ab.mean_iou, ba.mean_iou);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn component_areas_sum_to_class_population(mask in mask_strategy(4, 20)) {
        let labels = labels_for(mask.classes());
        let regions = regions_from_mask(&mask, None, 1, &labels).unwrap();
        for k in 0..mask.classes() {
            let total: u64 = regions.iter().filter(|r| r.class_index == k).map(|r| r.pixel_count).sum();
            prop_assert_eq!(total, mask.count(k) as u64);
        }
        let ids: Vec<u32> = regions.iter().map(|r| r.id).collect();
        prop_assert_eq!(ids, (0..regions.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn region_extraction_is_idempotent(mask in separated_rects_strategy()) {
        let (k, h, w) = mask.dims();
        let labels = labels_for(k);
        let first = regions_from_mask(&mask, None, 1, &labels).unwrap();
        let rebuilt = mask_from_regions(&first, k, h, w);
        let second = regions_from_mask(&rebuilt, None, 1, &labels).unwrap();
        let boxes = |rs: &[leanet::extract::Region]| rs.iter().map(|r| (r.class_index, r.bbox)).collect::<Vec<_>>();
        prop_assert_eq!(boxes(&first), boxes(&second));
        prop_assert_eq!(rebuilt, mask);
    }

    #[test]
    fn reading_order_is_a_translation_invariant_permutation(
        boxes in proptest::collection::vec((0u32..100, 0u32..100, 1u32..40, 1u32..40, proptest::bool::weighted(0.2)), 0..10),
        dx in 0u32..500,
        dy in 0u32..500,
    ) {
        let items: Vec<OrderItem> = boxes
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h, t))| OrderItem { id: i as u32, bbox: BBox::new(x, y, w, h), is_title: t })
            .collect();
        let order = reading_order(&items);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..items.len() as u32).collect::<Vec<_>>());

        let shifted: Vec<OrderItem> = items.iter().map(|it| OrderItem { bbox: it.bbox.translated(dx, dy), ..*it }).collect();
        prop_assert_eq!(reading_order(&shifted), order.clone());

        let mut reversed = items.clone();
        reversed.reverse();
        prop_assert_eq!(reading_order(&reversed), order);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn markup_round_trip(seed in any::<u64>()) {
        let doc = common::random_document(seed);
        let markup = to_markup(&doc);
        let parsed = parse_markup(&markup).unwrap();
        prop_assert_eq!(&parsed.image_ref, &doc.image_ref);
        prop_assert_eq!((parsed.width, parsed.height), (doc.width, doc.height));
        prop_assert_eq!(parsed.entries, document_entries(&doc));
        prop_assert_eq!(to_markup(&doc), markup);
    }

    #[test]
    fn read_all_covers_every_region_once(seed in any::<u64>()) {
        let doc = common::random_document(seed);
        let script = script_for(&doc, Mode::NonInteractive, None).unwrap();
        let spoken: Vec<u32> = script.utterances.iter().map(|u| u.region_id).collect();
        let unique: BTreeSet<u32> = spoken.iter().copied().collect();
        prop_assert_eq!(unique.len(), spoken.len());
        prop_assert_eq!(unique, doc.regions.iter().map(|r| r.id).collect::<BTreeSet<_>>());
        prop_assert_eq!(spoken, doc.reading_order.clone());
    }

    #[test]
    fn canonical_json_round_trip(seed in any::<u64>()) {
        let doc = common::random_document(seed);
        let json = doc.to_canonical_json().unwrap();
        let back = leanet::extract::SlideDocument::from_json(&json).unwrap();
        prop_assert_eq!(back.to_canonical_json().unwrap(), json);
    }
}

#[test]
fn overlapping_boxes_merge_when_rebuilt() {
    // The L-shaped component's box covers the lone pixel at (0, 2), so
    // rasterising boxes joins them. Idempotence needs separated boxes.
    let mut m = MultiLabelMask::new(1, 3, 3);
    for (y, x) in [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (0, 2)] {
        m.set(0, y, x, true);
    }
    let labels = labels_for(1);
    let first = regions_from_mask(&m, None, 1, &labels).unwrap();
    let second = regions_from_mask(&mask_from_regions(&first, 1, 3, 3), None, 1, &labels).unwrap();
    assert_eq!(first.len(), 2);
    assert_eq!(second.len(), 1);
    assert_eq!(second[0].bbox, BBox::new(0, 0, 3, 3));
}
