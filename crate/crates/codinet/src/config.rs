//! Line-oriented `section.key = value` configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a complete configuration. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use codinet_core::blocks::BlockKind;
use codinet_core::data::{AugmentConfig, BatchSpec, Normalization, Probe};
use codinet_core::losses::RegularizerConfig;
use codinet_core::net::NetSpec;
use codinet_core::router::{GumbelConfig, GumbelVariant};
use codinet_core::train::{initial_net, CostUnit, Precision, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Cifar10,
}

impl DataSource {
    fn as_str(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Cifar10 => "cifar10",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub kind: BlockKind,
    pub depth: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub router_hidden: usize,
    pub pools: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs_stage1: usize,
    /// `None` means 20% of stage 1, rounded down.
    pub epochs_stage2: Option<usize>,
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub groups: usize,
    pub augmentations: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Write an intermediate checkpoint every this many epochs (0: never).
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub root: Option<PathBuf>,
    pub seed: u64,
    pub channels: usize,
    pub size: usize,
    pub per_class: usize,
    pub val_per_class: usize,
    pub noise: f64,
    /// Blob position jitter, as a fraction of the image size.
    pub jitter: f64,
    /// Cap on CIFAR-10 records per split (0: all).
    pub train_limit: usize,
    pub val_limit: usize,
    pub pad: usize,
    pub flip: bool,
    /// One value per channel, or a single value for all channels.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub probes: Vec<Probe>,
    pub pair_cap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub net: NetConfig,
    pub gumbel: GumbelConfig,
    pub loss: RegularizerConfig,
    pub cost_unit: CostUnit,
    pub train: TrainSettings,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            net: NetConfig { kind: BlockKind::ConvResidual, depth: 6, channels: 8, num_classes: 8, router_hidden: 16, pools: 1 },
            gumbel: GumbelConfig::default(),
            loss: RegularizerConfig::default(),
            cost_unit: CostUnit::Relative,
            train: TrainSettings {
                epochs_stage1: 30,
                epochs_stage2: None,
                lr: 0.02,
                milestones: vec![20],
                lr_decay: 0.1,
                momentum: 0.9,
                weight_decay: 1e-4,
                groups: 8,
                augmentations: 4,
                seed: 1,
                precision: Precision::F64,
                checkpoint_every: 0,
            },
            data: DataConfig {
                source: DataSource::Synthetic,
                root: None,
                seed: 0,
                channels: 1,
                size: 16,
                per_class: 50,
                val_per_class: 50,
                noise: 0.1,
                jitter: 0.12,
                train_limit: 0,
                val_limit: 0,
                pad: 4,
                flip: true,
                mean: vec![0.2],
                std: vec![0.25],
            },
            eval: EvalConfig { probes: Probe::PROBE_SET.to_vec(), pair_cap: codinet_core::analytics::PAIR_CAP },
        }
    }
}

/// Every accepted key, in the order [`Config::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "net.kind",
    "net.depth",
    "net.channels",
    "net.num_classes",
    "net.router_hidden",
    "net.pools",
    "gumbel.temperature",
    "gumbel.variant",
    "gumbel.inference_noise",
    "loss.alpha",
    "loss.beta",
    "loss.gamma",
    "loss.m_c",
    "loss.m_d",
    "loss.cost_unit",
    "train.epochs_stage1",
    "train.epochs_stage2",
    "train.lr",
    "train.milestones",
    "train.lr_decay",
    "train.momentum",
    "train.weight_decay",
    "train.L",
    "train.M",
    "train.seed",
    "train.precision",
    "train.checkpoint_every",
    "data.source",
    "data.root",
    "data.seed",
    "data.channels",
    "data.size",
    "data.per_class",
    "data.val_per_class",
    "data.noise",
    "data.jitter",
    "data.train_limit",
    "data.val_limit",
    "data.pad",
    "data.flip",
    "data.mean",
    "data.std",
    "eval.probes",
    "eval.pair_cap",
];

fn bad(key: &str, value: &str, want: &str) -> CliError {
    CliError::Config(format!("{key}: expected {want}, got {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| bad(key, v, "a number"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any), then applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "net.kind" => self.net.kind = BlockKind::parse(v).ok_or_else(|| bad(key, v, "conv or dense"))?,
            "net.depth" => self.net.depth = num(key, v)?,
            "net.channels" => self.net.channels = num(key, v)?,
            "net.num_classes" => self.net.num_classes = num(key, v)?,
            "net.router_hidden" => self.net.router_hidden = num(key, v)?,
            "net.pools" => self.net.pools = num(key, v)?,
            "gumbel.temperature" => self.gumbel.temperature = num(key, v)?,
            "gumbel.variant" => self.gumbel.variant = GumbelVariant::parse(v).ok_or_else(|| bad(key, v, "reparameterized or straight-through"))?,
            "gumbel.inference_noise" => self.gumbel.inference_noise = boolean(key, v)?,
            "loss.alpha" => self.loss.alpha = num(key, v)?,
            "loss.beta" => self.loss.beta = num(key, v)?,
            "loss.gamma" => self.loss.gamma = num(key, v)?,
            "loss.m_c" => self.loss.margin_consistency = num(key, v)?,
            "loss.m_d" => self.loss.margin_diversity = num(key, v)?,
            "loss.cost_unit" => self.cost_unit = CostUnit::parse(v).ok_or_else(|| bad(key, v, "relative or gmacc"))?,
            "train.epochs_stage1" => self.train.epochs_stage1 = num(key, v)?,
            "train.epochs_stage2" => self.train.epochs_stage2 = if v == "auto" { None } else { Some(num(key, v)?) },
            "train.lr" => self.train.lr = num(key, v)?,
            "train.milestones" => self.train.milestones = list(key, v)?,
            "train.lr_decay" => self.train.lr_decay = num(key, v)?,
            "train.momentum" => self.train.momentum = num(key, v)?,
            "train.weight_decay" => self.train.weight_decay = num(key, v)?,
            "train.L" => self.train.groups = num(key, v)?,
            "train.M" => self.train.augmentations = num(key, v)?,
            "train.seed" => self.train.seed = num(key, v)?,
            "train.precision" => self.train.precision = Precision::parse(v).ok_or_else(|| bad(key, v, "f64 or f32"))?,
            "train.checkpoint_every" => self.train.checkpoint_every = num(key, v)?,
            "data.source" => {
                self.data.source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "cifar10" => DataSource::Cifar10,
                    _ => return Err(bad(key, v, "synthetic or cifar10")),
                }
            }
            "data.root" => self.data.root = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "data.seed" => self.data.seed = num(key, v)?,
            "data.channels" => self.data.channels = num(key, v)?,
            "data.size" => self.data.size = num(key, v)?,
            "data.per_class" => self.data.per_class = num(key, v)?,
            "data.val_per_class" => self.data.val_per_class = num(key, v)?,
            "data.noise" => self.data.noise = num(key, v)?,
            "data.jitter" => self.data.jitter = num(key, v)?,
            "data.train_limit" => self.data.train_limit = num(key, v)?,
            "data.val_limit" => self.data.val_limit = num(key, v)?,
            "data.pad" => self.data.pad = num(key, v)?,
            "data.flip" => self.data.flip = boolean(key, v)?,
            "data.mean" => self.data.mean = list(key, v)?,
            "data.std" => self.data.std = list(key, v)?,
            "eval.probes" => {
                self.eval.probes = v
                    .split(',')
                    .map(str::trim)
                    .map(|p| Probe::parse(p).ok_or_else(|| bad(key, p, "one of identity, crop, hflip, vflip, rot90")))
                    .collect::<Result<_, _>>()?
            }
            "eval.pair_cap" => self.eval.pair_cap = num(key, v)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Textual value of `key`, in the form [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "net.kind" => self.net.kind.as_str().to_string(),
            "net.depth" => self.net.depth.to_string(),
            "net.channels" => self.net.channels.to_string(),
            "net.num_classes" => self.net.num_classes.to_string(),
            "net.router_hidden" => self.net.router_hidden.to_string(),
            "net.pools" => self.net.pools.to_string(),
            "gumbel.temperature" => self.gumbel.temperature.to_string(),
            "gumbel.variant" => self.gumbel.variant.as_str().to_string(),
            "gumbel.inference_noise" => self.gumbel.inference_noise.to_string(),
            "loss.alpha" => self.loss.alpha.to_string(),
            "loss.beta" => self.loss.beta.to_string(),
            "loss.gamma" => self.loss.gamma.to_string(),
            "loss.m_c" => self.loss.margin_consistency.to_string(),
            "loss.m_d" => self.loss.margin_diversity.to_string(),
            "loss.cost_unit" => self.cost_unit.as_str().to_string(),
            "train.epochs_stage1" => self.train.epochs_stage1.to_string(),
            "train.epochs_stage2" => self.train.epochs_stage2.map_or_else(|| "auto".to_string(), |e| e.to_string()),
            "train.lr" => self.train.lr.to_string(),
            "train.milestones" => join(&self.train.milestones),
            "train.lr_decay" => self.train.lr_decay.to_string(),
            "train.momentum" => self.train.momentum.to_string(),
            "train.weight_decay" => self.train.weight_decay.to_string(),
            "train.L" => self.train.groups.to_string(),
            "train.M" => self.train.augmentations.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "train.precision" => self.train.precision.as_str().to_string(),
            "train.checkpoint_every" => self.train.checkpoint_every.to_string(),
            "data.source" => self.data.source.as_str().to_string(),
            "data.root" => self.data.root.as_ref().map_or_else(String::new, |p| p.display().to_string()),
            "data.seed" => self.data.seed.to_string(),
            "data.channels" => self.data.channels.to_string(),
            "data.size" => self.data.size.to_string(),
            "data.per_class" => self.data.per_class.to_string(),
            "data.val_per_class" => self.data.val_per_class.to_string(),
            "data.noise" => self.data.noise.to_string(),
            "data.jitter" => self.data.jitter.to_string(),
            "data.train_limit" => self.data.train_limit.to_string(),
            "data.val_limit" => self.data.val_limit.to_string(),
            "data.pad" => self.data.pad.to_string(),
            "data.flip" => self.data.flip.to_string(),
            "data.mean" => join(&self.data.mean),
            "data.std" => join(&self.data.std),
            "eval.probes" => self.eval.probes.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(","),
            "eval.pair_cap" => self.eval.pair_cap.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Canonical text listing every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.get(k).expect("every listed key has a value");
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        out
    }

    pub fn epochs_stage2(&self) -> usize {
        self.train.epochs_stage2.unwrap_or(self.train.epochs_stage1 / 5)
    }

    pub fn in_shape(&self) -> [usize; 3] {
        [self.data.channels, self.data.size, self.data.size]
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec {
            kind: self.net.kind,
            in_shape: self.in_shape(),
            channels: self.net.channels,
            depth: self.net.depth,
            num_classes: self.net.num_classes,
            pools: self.net.pools,
            router_hidden: self.net.router_hidden,
        }
    }

    pub fn normalization(&self) -> Normalization {
        let widen = |v: &[f64]| if v.len() == 1 { vec![v[0]; self.data.channels] } else { v.to_vec() };
        Normalization { mean: widen(&self.data.mean), std: widen(&self.data.std) }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs_stage1: self.train.epochs_stage1,
            epochs_stage2: self.epochs_stage2(),
            lr: self.train.lr,
            milestones: self.train.milestones.clone(),
            lr_decay: self.train.lr_decay,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            batch: BatchSpec { groups: self.train.groups, augmentations: self.train.augmentations },
            loss: self.loss,
            gumbel: self.gumbel,
            augment: AugmentConfig { pad: self.data.pad, flip: self.data.flip },
            normalization: self.normalization(),
            cost_unit: self.cost_unit,
            precision: self.train.precision,
            seed: self.train.seed,
        }
    }

    /// Re-checks every constraint of the owning modules.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: codinet_core::Error| CliError::Config(e.to_string());
        if self.data.source == DataSource::Cifar10 {
            if self.in_shape() != [3, 32, 32] || self.net.num_classes != 10 {
                return Err(CliError::Config("cifar10 needs data.channels = 3, data.size = 32 and net.num_classes = 10".into()));
            }
            if self.data.root.is_none() {
                return Err(CliError::Config("data.root must name the CIFAR-10 directory".into()));
            }
        }
        if self.data.mean.len() != self.data.std.len() || ![1, self.data.channels].contains(&self.data.mean.len()) {
            return Err(CliError::Config(format!(
                "data.mean/data.std need 1 or {} values each, got {} and {}",
                self.data.channels,
                self.data.mean.len(),
                self.data.std.len()
            )));
        }
        if !(self.data.jitter >= 0.0) {
            return Err(CliError::Config(format!("data.jitter must be non-negative, got {}", self.data.jitter)));
        }
        if !(self.data.noise >= 0.0) {
            return Err(CliError::Config(format!("data.noise must be non-negative, got {}", self.data.noise)));
        }
        if self.eval.probes.is_empty() {
            return Err(CliError::Config("eval.probes must list at least one probe".into()));
        }
        self.train_config().validate().map_err(cfg_err)?;
        initial_net(self.net_spec(), 0).map(|_| ()).map_err(cfg_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!((cfg.loss.alpha, cfg.loss.beta), (0.2, 0.2));
        assert_eq!((cfg.loss.margin_consistency, cfg.loss.margin_diversity), (0.2, 0.5));
        assert_eq!(cfg.gumbel.temperature, 1.0);
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = Config::parse("# desk run\n\n  loss.gamma = 0.05   # light cost\nnet.depth=4\n").unwrap();
        assert_eq!(cfg.loss.gamma, 0.05);
        assert_eq!(cfg.net.depth, 4);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = Config::parse("loss.gama = 0.1").unwrap_err();
        assert!(e.to_string().contains("loss.gama"));
    }

    #[test]
    fn negative_margin_names_the_key() {
        let e = Config::parse("loss.m_d = -1").unwrap_err();
        assert!(e.to_string().contains("loss.m_d"), "{e}");
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Config::parse("loss.gamma = 0.1\ntrain.milestones = 5,9\neval.probes = crop,rot90\ndata.root = /tmp/x").unwrap();
        cfg.train.epochs_stage2 = Some(3);
        assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn stage2_defaults_to_a_fifth() {
        let cfg = Config::parse("train.epochs_stage1 = 30").unwrap();
        assert_eq!(cfg.epochs_stage2(), 6);
        assert_eq!(Config::parse("train.epochs_stage2 = 2").unwrap().epochs_stage2(), 2);
    }

    #[test]
    fn malformed_values() {
        assert!(Config::parse("net.depth = six").is_err());
        assert!(Config::parse("data.flip = yes").is_err());
        assert!(Config::parse("just words").is_err());
        assert!(Config::parse("train.milestones = 9,5").is_err());
        assert!(Config::parse("data.source = cifar10").is_err());
    }
}
