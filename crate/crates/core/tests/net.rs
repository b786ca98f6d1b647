use codinet_core::blocks::BlockKind;
use codinet_core::net::{group_center, DynamicNet, Gates, NetSpec, RelaxedPath, RoutingPath};
use codinet_core::rng::{stream, Rng};
use codinet_core::router::GumbelConfig;
use codinet_core::Tensor;

fn spec(kind: BlockKind, depth: usize) -> NetSpec {
    let in_shape = match kind {
        BlockKind::ConvResidual => [1, 6, 6],
        BlockKind::DenseResidual => [1, 4, 4],
    };
    NetSpec { kind, in_shape, channels: 3, depth, num_classes: 4, pools: 0, router_hidden: 4 }
}

fn input(shape: [usize; 3], rng: &mut Rng) -> Tensor {
    Tensor::new(&shape, (0..shape.iter().product()).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn forced_binary_gates_match_binary_forward() {
    let mut r = Rng::new(11, 0);
    for case in 0..100u64 {
        let kind = if case % 2 == 0 { BlockKind::ConvResidual } else { BlockKind::DenseResidual };
        let s = spec(kind, 1 + (case % 5) as usize);
        let mut net = DynamicNet::new(s.clone(), &mut Rng::new(case, stream::INIT)).unwrap();
        // spread router decisions so both outcomes occur
        for router in &mut net.routers {
            let b = router.tensors_mut()[3].data_mut();
            let shift = 2.0 * r.normal();
            b[1] += shift;
        }
        let x = input(s.in_shape, &mut r);
        let bin = net.forward_binary(&x).unwrap();
        let (logits, _) = net.forward_relaxed(&x, &GumbelConfig::default(), Gates::Forced(&bin.path.as_reals())).unwrap();
        for (a, b) in logits.iter().zip(&bin.logits) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
        assert_eq!(bin.executed_blocks, bin.path.popcount());
    }
}

#[test]
fn executed_blocks_equal_popcount_on_forced_paths() {
    let s = spec(BlockKind::ConvResidual, 5);
    let net = DynamicNet::new(s.clone(), &mut Rng::new(2, stream::INIT)).unwrap();
    let x = input(s.in_shape, &mut Rng::new(3, 0));
    for code in 0..32 {
        let p = RoutingPath::from_code(code, 5);
        let out = net.forward_path(&x, &p).unwrap();
        assert_eq!(out.executed_blocks, p.popcount());
        assert_eq!(out.path, p);
    }
}

#[test]
fn forcing_routers_reaches_every_path() {
    for n in 1..=10usize {
        let s = spec(BlockKind::DenseResidual, n);
        let mut net = DynamicNet::new(s.clone(), &mut Rng::new(n as u64, stream::INIT)).unwrap();
        let x = input(s.in_shape, &mut Rng::new(0, 0));
        let mut seen = std::collections::BTreeSet::new();
        for code in 0..(1u64 << n) {
            let p = RoutingPath::from_code(code, n);
            net.force_routers(&p).unwrap();
            let out = net.forward_binary(&x).unwrap();
            assert_eq!(out.path, p);
            seen.insert(out.path);
        }
        assert_eq!(seen.len(), 1 << n);
    }
}

#[test]
fn path_cost_sums_executed_entries() {
    let s = spec(BlockKind::ConvResidual, 3);
    let net = DynamicNet::new(s.clone(), &mut Rng::new(1, stream::INIT)).unwrap();
    let c = net.cost_table.entries().to_vec();
    let x = input(s.in_shape, &mut Rng::new(1, 0));
    let out = net.forward_path(&x, &RoutingPath::new(vec![1, 0, 1]).unwrap()).unwrap();
    assert_eq!(out.cost_maccs, c[0] + c[2]);
    let none = net.forward_path(&x, &RoutingPath::all(3, 0)).unwrap();
    assert_eq!(none.cost_maccs, 0);
    assert_eq!(none.executed_blocks, 0);
}

#[test]
fn skipping_everything_is_stem_then_head() {
    let s = spec(BlockKind::DenseResidual, 4);
    let net = DynamicNet::new(s.clone(), &mut Rng::new(5, stream::INIT)).unwrap();
    let shallow = DynamicNet {
        blocks: vec![],
        routers: vec![],
        spec: NetSpec { depth: 0, ..s.clone() },
        cost_table: NetSpec { depth: 0, ..s.clone() }.cost_table().unwrap(),
        ..net.clone()
    };
    let x = input(s.in_shape, &mut Rng::new(9, 0));
    let a = net.forward_path(&x, &RoutingPath::all(4, 0)).unwrap();
    let b = shallow.forward_path(&x, &RoutingPath::all(0, 0)).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn group_center_is_elementwise_mean() {
    let paths = [
        RelaxedPath::new(vec![1.0, 0.0, 0.5]).unwrap(),
        RelaxedPath::new(vec![0.0, 0.0, 0.25]).unwrap(),
        RelaxedPath::new(vec![0.5, 1.0, 0.75]).unwrap(),
    ];
    let c = group_center(&paths).unwrap();
    assert_eq!(c, vec![0.5, 1.0 / 3.0, 0.5]);
    assert!(group_center(&[]).is_err());
    assert!(group_center(&[paths[0].clone(), RelaxedPath::new(vec![0.0]).unwrap()]).is_err());
}

#[test]
fn bitstrings_round_trip() {
    let p = RoutingPath::new(vec![1, 0, 1, 1]).unwrap();
    assert_eq!(p.to_bitstring(), "1011");
    assert_eq!(RoutingPath::parse_bitstring("1011").unwrap(), p);
    assert!(RoutingPath::parse_bitstring("10a1").is_err());
    assert!(RoutingPath::new(vec![2]).is_err());
}

#[test]
fn parameter_names_follow_tensor_order() {
    let mut net = DynamicNet::new(spec(BlockKind::ConvResidual, 2), &mut Rng::new(1, stream::INIT)).unwrap();
    let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), 4 + 8 + 8);
    assert_eq!(names[4], "block0.w1");
    assert_eq!(names[12], "router0.w1");
    let lens: Vec<usize> = net.named_tensors().iter().map(|(_, t)| t.len()).collect();
    let mut_lens: Vec<usize> = net.tensors_mut(codinet_core::net::ParamGroup::All).iter().map(|t| t.len()).collect();
    assert_eq!(lens, mut_lens);
    assert_eq!(net.tensors_mut(codinet_core::net::ParamGroup::Routers).len(), 8);
    assert_eq!(net.tensors_mut(codinet_core::net::ParamGroup::Backbone).len(), 12);
}

#[test]
fn rejects_wrong_input_and_path_lengths() {
    let s = spec(BlockKind::ConvResidual, 2);
    let net = DynamicNet::new(s, &mut Rng::new(1, stream::INIT)).unwrap();
    let bad = Tensor::new(&[1, 5, 5], vec![0.0; 25]).unwrap();
    assert!(net.forward_binary(&bad).is_err());
    let x = Tensor::new(&[1, 6, 6], vec![0.0; 36]).unwrap();
    assert!(net.forward_path(&x, &RoutingPath::all(3, 1)).is_err());
    assert!(net.forward_relaxed(&x, &GumbelConfig::default(), Gates::Forced(&[1.0])).is_err());
}
