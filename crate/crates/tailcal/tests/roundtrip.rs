//! Persistence invariants: binary round-trips are bit-exact, partition
//! commutes with class relabeling, and statistics JSON keeps full
//! precision.

mod support;

use ndarray::Array2;
use proptest::prelude::*;
use tailcal::{
    gaussian, load_set, partition, save_set, ClassGaussian, FileFormat, LabeledEmbeddingSet,
};

fn arb_set() -> impl Strategy<Value = (usize, usize, usize, Vec<f32>, Vec<f32>, Vec<u32>)> {
    (1usize..12, 1usize..6, 2usize..5).prop_flat_map(|(n, d, c)| {
        let feats = prop::collection::vec(-1e4f32..1e4, n * d);
        let logits = prop::collection::vec(-50f32..50.0, n * c);
        let labels = prop::collection::vec(0u32..c as u32, n);
        (Just(n), Just(d), Just(c), feats, logits, labels)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_save_load_is_bit_exact((n, d, c, feats, logits, labels) in arb_set()) {
        let features = Array2::from_shape_vec((n, d), feats).unwrap();
        let logit_m = Array2::from_shape_vec((n, c), logits).unwrap();
        let set = LabeledEmbeddingSet::new(features, logit_m, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_set(dir.path(), &set, FileFormat::Binary).unwrap();
        let back = load_set(&manifest, FileFormat::Binary).unwrap();
        prop_assert_eq!(back.features(), set.features());
        prop_assert_eq!(back.logits(), set.logits());
        prop_assert_eq!(back.labels(), set.labels());
        prop_assert_eq!(back.class_counts(), set.class_counts());
    }

    #[test]
    fn partition_commutes_with_relabeling(
        counts in prop::collection::vec(1u64..500, 2..10),
        zeta in 1u64..400,
        shift in 0usize..10,
    ) {
        prop_assume!(counts.iter().any(|&n| n >= zeta));
        let p = partition(&counts, zeta).unwrap();

        // Rotate class indices and re-partition: membership must follow the
        // permutation.
        let k = shift % counts.len();
        let rotated: Vec<u64> = (0..counts.len()).map(|i| counts[(i + k) % counts.len()]).collect();
        let pr = partition(&rotated, zeta).unwrap();
        for c in 0..counts.len() {
            let moved = (c + counts.len() - k) % counts.len();
            prop_assert_eq!(p.is_head(c), pr.is_head(moved));
        }
    }

    #[test]
    fn stats_json_roundtrips_at_full_precision(
        mean in prop::collection::vec(-1e6f64..1e6, 1..8),
        std in prop::collection::vec(1e-6f64..1e3, 1..8),
        count in 1u64..1_000_000,
    ) {
        prop_assume!(mean.len() == std.len());
        let g = ClassGaussian::new(mean, std, count).unwrap();
        let mut stats = std::collections::BTreeMap::new();
        stats.insert(0usize, g);
        let entries = gaussian::stats_to_entries(&stats);
        let json = serde_json::to_string(&entries).unwrap();
        let back: Vec<gaussian::ClassStatsEntry> = serde_json::from_str(&json).unwrap();
        let rebuilt = gaussian::entries_to_stats(&back).unwrap();
        prop_assert_eq!(rebuilt, stats);
    }
}
