//! Single-file checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "CODINETC" | version u32 | precision u8 (0 f64, 1 f32) | epoch u64
//! rng seed u64 | rng stream u64 | rng draw index u128
//! config length u64 | config text (UTF-8)
//! array count u32 | per array: name length u32, name, rank u32, dims u64 × rank, values
//! ```

use std::path::Path;

use codinet_core::net::DynamicNet;
use codinet_core::train::{initial_net, Precision};
use codinet_core::{Rng, Tensor};

use crate::config::Config;
use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"CODINETC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub draw_index: u128,
}

impl RngState {
    pub fn of(rng: &Rng) -> Self {
        RngState { seed: rng.seed(), stream: rng.stream_id(), draw_index: rng.draw_index() }
    }

    pub fn restore(&self) -> Rng {
        let mut r = Rng::new(self.seed, self.stream);
        r.set_draw_index(self.draw_index);
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub precision: Precision,
    /// Epochs completed when the checkpoint was taken.
    pub epoch: u64,
    pub rng: RngState,
    pub config_text: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(net: &DynamicNet, cfg: &Config, epoch: u64, rng: &Rng) -> Self {
        Checkpoint {
            precision: cfg.train.precision,
            epoch,
            rng: RngState::of(rng),
            config_text: cfg.to_text(),
            tensors: net.named_tensors().into_iter().map(|(n, t)| (n, Tensor::new(t.shape(), t.data().to_vec()).expect("valid tensor"))).collect(),
        }
    }

    pub fn config(&self) -> Result<Config, CliError> {
        Config::parse(&self.config_text)
    }

    /// Rebuilds the network described by the stored config and fills in the
    /// stored parameters.
    pub fn restore_net(&self) -> Result<DynamicNet, CliError> {
        let cfg = self.config()?;
        let mut net = initial_net(cfg.net_spec(), cfg.train.seed)?;
        self.load_into(&mut net)?;
        Ok(net)
    }

    /// Overwrites the parameters of `net`; names and shapes must match exactly.
    pub fn load_into(&self, net: &mut DynamicNet) -> Result<(), CliError> {
        let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(CliError::Config(format!("checkpoint holds {} arrays, network has {}", self.tensors.len(), names.len())));
        }
        for ((name, dst), (sname, src)) in names.iter().zip(net.tensors_mut(codinet_core::net::ParamGroup::All)).zip(&self.tensors) {
            if name != sname || dst.shape() != src.shape() {
                return Err(CliError::Config(format!(
                    "checkpoint array {sname} {:?} does not match network parameter {name} {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(match self.precision {
            Precision::F64 => 0,
            Precision::F32 => 1,
        });
        b.extend_from_slice(&self.epoch.to_le_bytes());
        b.extend_from_slice(&self.rng.seed.to_le_bytes());
        b.extend_from_slice(&self.rng.stream.to_le_bytes());
        b.extend_from_slice(&self.rng.draw_index.to_le_bytes());
        b.extend_from_slice(&(self.config_text.len() as u64).to_le_bytes());
        b.extend_from_slice(self.config_text.as_bytes());
        b.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                match self.precision {
                    Precision::F64 => b.extend_from_slice(&x.to_le_bytes()),
                    Precision::F32 => b.extend_from_slice(&(x as f32).to_le_bytes()),
                }
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CliError::Data("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Data(format!("checkpoint format version {version}, this build reads {VERSION}")));
        }
        let precision = match r.take(1)?[0] {
            0 => Precision::F64,
            1 => Precision::F32,
            p => return Err(CliError::Data(format!("unknown precision tag {p}"))),
        };
        let epoch = r.u64()?;
        let rng = RngState { seed: r.u64()?, stream: r.u64()?, draw_index: u128::from_le_bytes(r.array()?) };
        let len = r.u64()? as usize;
        let config_text = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| CliError::Data("config block is not UTF-8".into()))?;
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| CliError::Data("array name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = match precision {
                Precision::F64 => (0..n).map(|_| r.array().map(f64::from_le_bytes)).collect::<Result<Vec<_>, _>>()?,
                Precision::F32 => (0..n).map(|_| r.array().map(|a| f64::from(f32::from_le_bytes(a)))).collect::<Result<Vec<_>, _>>()?,
            };
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(CliError::Data(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { precision, epoch, rng, config_text, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_bytes(&std::fs::read(path).map_err(CliError::io(path))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| CliError::Data("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CliError> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        self.array().map(u64::from_le_bytes)
    }
}
