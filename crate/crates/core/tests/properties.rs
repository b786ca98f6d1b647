use codinet_core::analytics::{kl_divergence, pcc, unique_path_count, PathLog, PathRecord};
use codinet_core::blocks::CostTable;
use codinet_core::data::{augment, AugmentConfig, Sample};
use codinet_core::losses::{consistency_loss, cost_loss, diversity_loss};
use codinet_core::math::softmax;
use codinet_core::net::{RelaxedPath, RoutingPath};
use codinet_core::{Rng, Tensor};
use proptest::prelude::*;

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn rp(v: &[f64]) -> RelaxedPath {
    RelaxedPath::new(v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn softmax_ignores_shifts(xs in prop::collection::vec(-20.0f64..20.0, 1..8), c in -50.0f64..50.0) {
        let a = softmax(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = softmax(&shifted);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularizers_ignore_ordering(
        flat in prop::collection::vec(unit_vec(4), 6),
        costs in prop::collection::vec(0.0f64..3.0, 4),
        rot in 0usize..3,
    ) {
        let groups: Vec<Vec<RelaxedPath>> = flat.chunks(2).map(|c| c.iter().map(|v| rp(v)).collect()).collect();
        let mut permuted: Vec<Vec<RelaxedPath>> = groups.iter().map(|g| g.iter().rev().cloned().collect()).collect();
        permuted.rotate_left(rot);
        let a = consistency_loss(&groups, 0.2).unwrap();
        let b = consistency_loss(&permuted, 0.2).unwrap();
        prop_assert!((a - b).abs() < 1e-12);

        let mut centers: Vec<Vec<f64>> = flat.iter().take(4).cloned().collect();
        let d1 = diversity_loss(&centers, 0.5).unwrap();
        centers.rotate_left(rot);
        let d2 = diversity_loss(&centers, 0.5).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-12);

        let paths: Vec<RelaxedPath> = flat.iter().map(|v| rp(v)).collect();
        let mut rev = paths.clone();
        rev.reverse();
        prop_assert!((cost_loss(&paths, &costs).unwrap() - cost_loss(&rev, &costs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn regularizers_are_non_negative(flat in prop::collection::vec(unit_vec(3), 4), costs in prop::collection::vec(0.0f64..3.0, 3)) {
        let groups: Vec<Vec<RelaxedPath>> = flat.chunks(2).map(|c| c.iter().map(|v| rp(v)).collect()).collect();
        prop_assert!(consistency_loss(&groups, 0.2).unwrap() >= 0.0);
        prop_assert!(diversity_loss(&flat, 0.5).unwrap() >= 0.0);
        let paths: Vec<RelaxedPath> = flat.iter().map(|v| rp(v)).collect();
        prop_assert!(cost_loss(&paths, &costs).unwrap() >= 0.0);
    }

    #[test]
    fn pcc_is_affine_invariant(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pcc(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r2 = pcc(&scaled, &ys).unwrap();
            prop_assert!((r - r2).abs() < 1e-9);
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert!((pcc(&neg, &ys).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_is_non_negative((p, q) in (1usize..8).prop_flat_map(|n| (distribution(n), distribution(n)))) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn augmentation_stays_in_range(
        pixels in prop::collection::vec(0.0f64..=1.0, 2 * 5 * 5),
        pad in 0usize..4,
        flip in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let s = Sample { id: 0, label: 1, image: Tensor::new(&[2, 5, 5], pixels).unwrap() };
        let out = augment(&s, &AugmentConfig { pad, flip }, &mut Rng::new(seed, 3)).unwrap();
        prop_assert_eq!(out.image.shape(), s.image.shape());
        prop_assert_eq!(out.label, 1);
        prop_assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mass_in: f64 = s.image.data().iter().sum();
        let mass_out: f64 = out.image.data().iter().sum();
        prop_assert!(mass_out <= mass_in + 1e-9);
    }

    #[test]
    fn unique_paths_are_bounded(codes in prop::collection::vec(any::<u64>(), 0..60), n in 1usize..7) {
        let mut log = PathLog::new(n, 2);
        for (i, &c) in codes.iter().enumerate() {
            let path = RoutingPath::from_code(c, n);
            log.push(PathRecord { id: i as u64, label: 0, relaxed: RelaxedPath::new(path.as_reals()).unwrap(), path, cost_maccs: 0, probs: vec![0.5, 0.5] }).unwrap();
        }
        let u = unique_path_count(&log);
        prop_assert!(u <= codes.len().min(1 << n));
        prop_assert_eq!(u == 0, codes.is_empty());
    }

    #[test]
    fn path_cost_is_bounded(entries in prop::collection::vec(1u64..10_000, 1..10), code in any::<u64>()) {
        let table = CostTable::new(entries.clone()).unwrap();
        let p = RoutingPath::from_code(code, entries.len());
        let c = table.path_cost(p.bits()).unwrap();
        prop_assert!(c <= table.total());
        prop_assert_eq!(c == 0, p.popcount() == 0);
        prop_assert_eq!(table.path_cost(RoutingPath::all(entries.len(), 1).bits()).unwrap(), table.total());
    }
}
