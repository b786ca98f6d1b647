use std::path::Path;

use codinet_core::data::{decode_cifar10, synthetic_dataset, Sample, SyntheticParams};
use codinet_core::rng::{stream, Rng};

use crate::config::{Config, DataSource};
use crate::error::CliError;

pub const CIFAR_TRAIN_FILES: [&str; 5] = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

/// Reads one CIFAR-10 binary file; ids follow record order.
pub fn load_cifar10_binary(path: &Path) -> Result<Vec<Sample>, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    decode_cifar10(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn renumber(samples: &mut [Sample], first: u64) {
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = first + i as u64;
    }
}

fn limit(mut v: Vec<Sample>, n: usize) -> Vec<Sample> {
    if n > 0 {
        v.truncate(n);
    }
    v
}

/// Training and evaluation splits described by `cfg.data`. Ids are unique
/// across both splits.
pub fn load_splits(cfg: &Config) -> Result<Splits, CliError> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let params = SyntheticParams {
                num_classes: cfg.net.num_classes,
                per_class: cfg.data.per_class,
                channels: cfg.data.channels,
                size: cfg.data.size,
                noise: cfg.data.noise,
                jitter: cfg.data.jitter,
            };
            let rng = Rng::new(cfg.data.seed, stream::SYNTHETIC);
            let train = synthetic_dataset(&params, 0, &rng)?;
            let val_params = SyntheticParams { per_class: cfg.data.val_per_class, ..params };
            let val = synthetic_dataset(&val_params, train.len() as u64, &rng)?;
            Ok(Splits { train, val })
        }
        DataSource::Cifar10 => {
            let root = cfg.data.root.as_deref().ok_or_else(|| CliError::Config("data.root is not set".into()))?;
            let mut train = Vec::new();
            for f in CIFAR_TRAIN_FILES {
                train.extend(load_cifar10_binary(&root.join(f))?);
            }
            let mut train = limit(train, cfg.data.train_limit);
            renumber(&mut train, 0);
            let mut val = limit(load_cifar10_binary(&root.join(CIFAR_TEST_FILE))?, cfg.data.val_limit);
            renumber(&mut val, train.len() as u64);
            Ok(Splits { train, val })
        }
    }
}
