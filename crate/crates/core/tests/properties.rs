use proptest::prelude::*;
use rose::eval::{compute_ciou, compute_giou};
use rose::irag::{Chunk, VectorStore};
use rose::primitives::{rle_encode, BinaryMask, FeatureVector, Rle};

fn mask(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<bool>(), h * w).prop_map(move |bits| BinaryMask::from_bits(h, w, &bits).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        (prop::collection::vec(any::<bool>(), h * w), prop::collection::vec(any::<bool>(), h * w))
            .prop_map(move |(a, b)| (BinaryMask::from_bits(h, w, &a).unwrap(), BinaryMask::from_bits(h, w, &b).unwrap()))
    })
}

proptest! {
    #[test]
    fn rle_round_trips(m in mask(40)) {
        let text = rle_encode(&m).to_string();
        let parsed: Rle = text.parse().unwrap();
        prop_assert_eq!(parsed.decode().unwrap(), m.clone());
        prop_assert_eq!(parsed.area(), m.count());
    }

    #[test]
    fn metrics_lie_in_the_unit_interval(pairs in prop::collection::vec(mask_pair(12), 1..6)) {
        let nonempty = pairs.iter().any(|(a, b)| !a.is_empty() || !b.is_empty());
        let g = compute_giou(&pairs).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        match compute_ciou(&pairs) {
            Ok(c) => prop_assert!(nonempty && (0.0..=1.0).contains(&c)),
            Err(_) => prop_assert!(!nonempty),
        }
    }

    #[test]
    fn identical_masks_score_one(m in mask(16)) {
        prop_assume!(!m.is_empty());
        prop_assert_eq!(compute_giou(&[(m.clone(), m.clone())]).unwrap(), 1.0);
        prop_assert_eq!(compute_ciou(&[(m.clone(), m.clone())]).unwrap(), 1.0);
    }

    #[test]
    fn search_results_are_sorted_and_bounded(
        vectors in prop::collection::vec(prop::collection::vec(-3i8..=3, 4), 1..40),
        query in prop::collection::vec(-3i8..=3, 4),
        k in 1usize..10,
    ) {
        let to_vec = |v: &Vec<i8>| {
            let mut f: Vec<f64> = v.iter().map(|x| f64::from(*x)).collect();
            if f.iter().all(|x| *x == 0.0) { f[0] = 1.0; }
            FeatureVector::new(f).unwrap()
        };
        let entries = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (to_vec(v), Chunk { text: i.to_string(), source_url: "u".into(), index_in_doc: i }))
            .collect();
        let store = VectorStore::from_entries(4, entries).unwrap();
        let hits = store.search(&to_vec(&query), k).unwrap();
        prop_assert_eq!(hits.len(), k.min(vectors.len()));
        for w in hits.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }
}
