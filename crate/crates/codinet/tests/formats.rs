use codinet::checkpoint::{Checkpoint, RngState, MAGIC};
use codinet::config::Config;
use codinet::datasets::{load_splits, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
use codinet::pathlog::{format_path_log, parse_features, parse_path_log};
use codinet::CliError;
use codinet_core::analytics::{collect_path_log, PathLog};
use codinet_core::data::{encode_cifar10, Sample};
use codinet_core::train::{initial_net, Precision};
use codinet_core::{Rng, Tensor};

fn tiny() -> Config {
    Config::load(None, &["net.depth=3".into(), "net.channels=4".into(), "data.per_class=2".into(), "data.val_per_class=2".into()]).unwrap()
}

#[test]
fn file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "loss.gamma = 0.05\nnet.depth = 4\n").unwrap();
    let cfg = Config::load(Some(&path), &["loss.gamma=0.1".into()]).unwrap();
    assert_eq!(cfg.loss.gamma, 0.1);
    assert_eq!(cfg.net.depth, 4);
    let file_only = Config::load(Some(&path), &[]).unwrap();
    assert_eq!(file_only.loss.gamma, 0.05);
    assert!(matches!(Config::load(None, &["loss.gamma".into()]), Err(CliError::Config(_))));
}

#[test]
fn checkpoint_reproduces_forward_outputs() {
    let cfg = tiny();
    let mut net = initial_net(cfg.net_spec(), 7).unwrap();
    // move away from the initial draw so loading is observable
    for t in net.tensors_mut(codinet_core::net::ParamGroup::All) {
        t.data_mut().iter_mut().for_each(|x| *x = *x * 1.5 + 0.01);
    }
    let mut rng = Rng::new(4, 9);
    rng.normal();
    rng.normal();
    let ck = Checkpoint::capture(&net, &cfg, 12, &rng);
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.epoch, 12);
    assert_eq!(back.rng.restore().normal(), rng.clone().normal());
    let restored = back.restore_net().unwrap();
    assert_eq!(restored, net);

    let splits = load_splits(&cfg).unwrap();
    for s in &splits.val {
        let x = cfg.normalization().apply(&s.image).unwrap();
        assert_eq!(net.forward_binary(&x).unwrap(), restored.forward_binary(&x).unwrap());
    }

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.bin");
    ck.save(&p).unwrap();
    assert_eq!(Checkpoint::load(&p).unwrap(), ck);
}

#[test]
fn checkpoint_rejects_bad_input() {
    let cfg = tiny();
    let net = initial_net(cfg.net_spec(), 1).unwrap();
    let bytes = Checkpoint::capture(&net, &cfg, 0, &Rng::new(0, 0)).to_bytes();

    let mut wrong_version = bytes.clone();
    wrong_version[MAGIC.len()..MAGIC.len() + 4].copy_from_slice(&99u32.to_le_bytes());
    let e = Checkpoint::from_bytes(&wrong_version).unwrap_err();
    assert!(matches!(e, CliError::Data(_)) && e.to_string().contains("version 99"), "{e}");

    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(CliError::Data(_))));
    assert!(matches!(Checkpoint::from_bytes(b"NOTACKPT"), Err(CliError::Data(_))));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(Checkpoint::from_bytes(&trailing).is_err());

    let other = Config::load(None, &["net.depth=4".into(), "net.channels=4".into()]).unwrap();
    let mut bigger = initial_net(other.net_spec(), 1).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert!(matches!(ck.load_into(&mut bigger), Err(CliError::Config(_))));
}

#[test]
fn f32_checkpoints_round_values() {
    let mut cfg = tiny();
    cfg.train.precision = Precision::F32;
    let net = initial_net(cfg.net_spec(), 2).unwrap();
    let ck = Checkpoint::capture(&net, &cfg, 0, &Rng::new(0, 0));
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    for ((_, a), (_, b)) in ck.tensors.iter().zip(&back.tensors) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*y, f64::from(*x as f32));
        }
    }
    assert_eq!(back.rng, RngState { seed: 0, stream: 0, draw_index: 0 });
}

#[test]
fn path_log_round_trips() {
    let cfg = tiny();
    let net = initial_net(cfg.net_spec(), 3).unwrap();
    let splits = load_splits(&cfg).unwrap();
    let log = collect_path_log(&net, &splits.val, &cfg.normalization()).unwrap();
    let text = format_path_log(&log);
    let back = parse_path_log(&text).unwrap();
    assert_eq!(format_path_log(&back), text);
    assert_eq!(back.paths(), log.paths());
    for (a, b) in log.records().iter().zip(back.records()) {
        assert_eq!(a.probs, b.probs);
        assert_eq!((a.id, a.label, a.cost_maccs), (b.id, b.label, b.cost_maccs));
    }
}

#[test]
fn empty_path_log_is_header_only() {
    let text = format_path_log(&PathLog::new(5, 8));
    assert_eq!(text, "# codinet path log n=5 classes=8\n");
    let back = parse_path_log(&text).unwrap();
    assert!(back.is_empty());
    assert_eq!(back.depth(), 5);
}

#[test]
fn malformed_path_logs() {
    assert!(parse_path_log("").is_err());
    assert!(parse_path_log("id\tlabel\n").is_err());
    let head = "# codinet path log n=2 classes=2\n";
    assert!(parse_path_log(&format!("{head}0\t1\t10\t1.0,0.0\t5\n")).is_err());
    assert!(parse_path_log(&format!("{head}0\t1\t1x\t1.0,0.0\t5\t0.5,0.5\n")).is_err());
    assert!(parse_path_log(&format!("{head}0\t1\t10\t1.0,0.0\t5\t0.9,0.5\n")).is_err());
    let ok = format!("{head}0\t1\t10\t1.000000,0.000000\t5\t0.25,0.75\n");
    assert_eq!(parse_path_log(&ok).unwrap().len(), 1);
    assert!(parse_path_log(&format!("{ok}0\t0\t01\t0.0,1.0\t5\t0.5,0.5\n")).is_err());
}

#[test]
fn feature_files() {
    let f = parse_features("1,2,3\n\n# comment\n4 5\t6\n").unwrap();
    assert_eq!(f, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    assert!(parse_features("1,x").is_err());
}

fn cifar_sample(id: u64, label: usize, shade: f64) -> Sample {
    Sample { id, label, image: Tensor::new(&[3, 32, 32], vec![shade; 3 * 32 * 32]).unwrap() }
}

#[test]
fn cifar_fixture_directory() {
    let dir = tempfile::tempdir().unwrap();
    for (i, f) in CIFAR_TRAIN_FILES.iter().enumerate() {
        let recs: Vec<Sample> = (0..2).map(|j| cifar_sample(0, (i + j) % 10, j as f64 / 2.0)).collect();
        std::fs::write(dir.path().join(f), encode_cifar10(&recs).unwrap()).unwrap();
    }
    std::fs::write(dir.path().join(CIFAR_TEST_FILE), encode_cifar10(&[cifar_sample(0, 3, 1.0)]).unwrap()).unwrap();
    let root = format!("data.root={}", dir.path().display());
    let base = ["data.source=cifar10".to_string(), "data.channels=3".into(), "data.size=32".into(), "net.num_classes=10".into(), root];
    let cfg = Config::load(None, &base).unwrap();
    let s = load_splits(&cfg).unwrap();
    assert_eq!(s.train.len(), 10);
    assert_eq!(s.val.len(), 1);
    assert_eq!(s.train.iter().map(|x| x.id).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    assert_eq!(s.val[0].id, 10);
    assert_eq!(s.val[0].label, 3);
    assert_eq!(s.train[1].image.data()[0], 128.0 / 255.0);

    let mut limited = base.to_vec();
    limited.push("data.train_limit=3".into());
    assert_eq!(load_splits(&Config::load(None, &limited).unwrap()).unwrap().train.len(), 3);

    std::fs::write(dir.path().join(CIFAR_TEST_FILE), [0u8; 100]).unwrap();
    assert!(matches!(load_splits(&cfg), Err(CliError::Data(_))));
    std::fs::remove_file(dir.path().join(CIFAR_TEST_FILE)).unwrap();
    assert!(matches!(load_splits(&cfg), Err(CliError::Io { .. })));
}

#[test]
fn cifar_config_needs_matching_geometry() {
    let e = Config::load(None, &["data.source=cifar10".into(), "data.root=/nowhere".into()]).unwrap_err();
    assert!(matches!(e, CliError::Config(_)));
}
