//! Samples, the CIFAR-10 binary record layout, a synthetic blob dataset,
//! augmentation and grouped batches (`L` sources × `M` augmentations).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{stream, Rng};
use crate::{math, Error, Result, Tensor};

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
pub const CIFAR_CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    /// `[C, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: usize,
}

/// Parses concatenated CIFAR-10 records: one label byte followed by the
/// R, G and B planes (32×32, row-major). Pixels are scaled to `[0, 1]`.
pub fn decode_cifar10(bytes: &[u8]) -> Result<Vec<Sample>> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!("truncated CIFAR-10 data: {} bytes is not a multiple of {CIFAR_RECORD}", bytes.len())));
    }
    bytes
        .chunks_exact(CIFAR_RECORD)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(Error::Data(format!("record {i}: label {label} > 9")));
            }
            let data = rec[1..].iter().map(|&p| f64::from(p) / 255.0).collect();
            Ok(Sample { id: i as u64, image: Tensor::new(&[3, 32, 32], data)?, label })
        })
        .collect()
}

/// Inverse of [`decode_cifar10`] for `[3, 32, 32]` images.
pub fn encode_cifar10(samples: &[Sample]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(samples.len() * CIFAR_RECORD);
    for s in samples {
        if s.image.shape() != [3, 32, 32] || s.label >= CIFAR_CLASSES {
            return Err(Error::Data(format!("sample {} is not a CIFAR-10 record", s.id)));
        }
        out.push(s.label as u8);
        out.extend(s.image.data().iter().map(|&v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub size: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    /// Standard deviation of the per-sample blob displacement, as a fraction of `size`.
    pub jitter: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams { num_classes: 8, per_class: 250, channels: 1, size: 16, noise: 0.1, jitter: 0.12 }
    }
}

/// Class-conditional Gaussian blobs. Class `k` fixes the blob width
/// (`k mod 2`), its peak intensity (`k / 2`) and its position; each sample
/// adds a small amplitude jitter and pixel noise, clamped to `[0, 1]`.
/// Samples are interleaved by class and numbered from `first_id`.
pub fn synthetic_dataset(params: &SyntheticParams, first_id: u64, rng: &Rng) -> Result<Vec<Sample>> {
    let SyntheticParams { num_classes, per_class, channels, size, noise, jitter } = *params;
    if num_classes == 0 || channels == 0 || size == 0 {
        return Err(Error::Usage("synthetic dataset needs positive classes, channels and size".into()));
    }
    let levels = num_classes.div_ceil(2).max(2);
    let mut out = Vec::with_capacity(num_classes * per_class);
    let mut id = first_id;
    for _ in 0..per_class {
        for k in 0..num_classes {
            let mut r = rng.derive(stream::SYNTHETIC, id);
            let sigma = if k % 2 == 0 { 0.09 } else { 0.19 } * size as f64;
            let amp = 0.3 + 0.65 * ((k / 2) as f64 / (levels - 1) as f64) + 0.03 * r.normal();
            let jit = jitter * size as f64;
            let cy = size as f64 * (0.2 + 0.6 * ((k % 4) as f64 / 3.0)) + jit * r.normal();
            let cx = (size as f64 - 1.0) / 2.0 + jit * r.normal();
            let mut data = Vec::with_capacity(channels * size * size);
            for c in 0..channels {
                let ch_scale = 1.0 - 0.15 * c as f64;
                for y in 0..size {
                    for x in 0..size {
                        let d2 = (y as f64 - cy) * (y as f64 - cy) + (x as f64 - cx) * (x as f64 - cx);
                        let v = amp * ch_scale * math::exp(-d2 / (2.0 * sigma * sigma)) + noise * r.normal();
                        data.push(v.clamp(0.0, 1.0));
                    }
                }
            }
            out.push(Sample { id, image: Tensor::new(&[channels, size, size], data)?, label: k });
            id += 1;
        }
    }
    Ok(out)
}

/// Training augmentation: zero padding, random crop back to the original
/// size, and an optional horizontal flip with probability 0.5.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentConfig {
    pub pad: usize,
    pub flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { pad: 4, flip: true }
    }
}

/// Crops the zero-padded image at offset `(dy, dx)` of the padded frame
/// (`(pad, pad)` is the identity) and optionally mirrors it left-right.
pub fn crop_flip(image: &Tensor, pad: usize, dy: usize, dx: usize, flip: bool) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!("augment expects [C,H,W], got {:?}", image.shape())));
    };
    if dy > 2 * pad || dx > 2 * pad {
        return Err(Error::Usage(format!("crop offset ({dy}, {dx}) outside padded frame of {pad}")));
    }
    let src = image.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let sy = y as isize + dy as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let ox = if flip { w - 1 - x } else { x };
                let sx = ox as isize + dx as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[(ch * h + y) * w + x] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// One random training augmentation of `s`; id and label are preserved.
pub fn augment(s: &Sample, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Sample> {
    let &[_, h, w] = s.image.shape() else {
        return Err(Error::Shape(format!("augment expects [C,H,W], got {:?}", s.image.shape())));
    };
    if h != w {
        return Err(Error::Shape(format!("augment expects square images, got {h}×{w}")));
    }
    let span = 2 * cfg.pad as u64 + 1;
    let dy = rng.below(span) as usize;
    let dx = rng.below(span) as usize;
    let flip = cfg.flip && rng.bernoulli(0.5);
    Ok(Sample { id: s.id, image: crop_flip(&s.image, cfg.pad, dy, dx, flip)?, label: s.label })
}

/// Transforms used to probe routing consistency at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    Identity,
    /// Random padded crop without flipping.
    Crop,
    HorizontalFlip,
    VerticalFlip,
    /// Quarter turn counter-clockwise.
    Rotate90,
}

impl Probe {
    pub const PROBE_SET: [Probe; 4] = [Probe::Crop, Probe::HorizontalFlip, Probe::VerticalFlip, Probe::Rotate90];

    pub fn as_str(self) -> &'static str {
        match self {
            Probe::Identity => "identity",
            Probe::Crop => "crop",
            Probe::HorizontalFlip => "hflip",
            Probe::VerticalFlip => "vflip",
            Probe::Rotate90 => "rot90",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Probe::Identity, Probe::Crop, Probe::HorizontalFlip, Probe::VerticalFlip, Probe::Rotate90].into_iter().find(|p| p.as_str() == s)
    }

    pub fn apply(self, image: &Tensor, pad: usize, rng: &mut Rng) -> Result<Tensor> {
        let &[c, h, w] = image.shape() else {
            return Err(Error::Shape(format!("probe expects [C,H,W], got {:?}", image.shape())));
        };
        let src = image.data();
        match self {
            Probe::Identity => Ok(image.clone()),
            Probe::Crop => {
                let span = 2 * pad as u64 + 1;
                let (dy, dx) = (rng.below(span) as usize, rng.below(span) as usize);
                crop_flip(image, pad, dy, dx, false)
            }
            Probe::HorizontalFlip => crop_flip(image, 0, 0, 0, true),
            Probe::VerticalFlip => {
                let mut out = vec![0.0; src.len()];
                for ch in 0..c {
                    for y in 0..h {
                        let d = (ch * h + y) * w;
                        let s = (ch * h + h - 1 - y) * w;
                        out[d..d + w].copy_from_slice(&src[s..s + w]);
                    }
                }
                Tensor::new(&[c, h, w], out)
            }
            Probe::Rotate90 => {
                if h != w {
                    return Err(Error::Shape(format!("rotation needs square images, got {h}×{w}")));
                }
                let mut out = vec![0.0; src.len()];
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            out[(ch * h + y) * w + x] = src[(ch * h + x) * w + (w - 1 - y)];
                        }
                    }
                }
                Tensor::new(&[c, h, w], out)
            }
        }
    }
}

/// Per-channel `(x − mean) / std`, applied after augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Usage("normalization needs one positive std per mean".into()));
        }
        Ok(())
    }

    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let c = image.shape()[0];
        if c != self.mean.len() {
            return Err(Error::Shape(format!("normalization for {} channels, image has {c}", self.mean.len())));
        }
        let hw = image.len() / c;
        let data = image.data().iter().enumerate().map(|(i, &v)| (v - self.mean[i / hw]) / self.std[i / hw]).collect();
        Tensor::new(image.shape(), data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSpec {
    /// Source samples per batch (`L`).
    pub groups: usize,
    /// Augmentations per source (`M`).
    pub augmentations: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.augmentations == 0 {
            return Err(Error::Usage(format!("batch needs L ≥ 1 and M ≥ 1, got {self:?}")));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.groups * self.augmentations
    }
}

/// `L·M` augmented samples in group-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedBatch {
    pub items: Vec<Sample>,
    pub group_of: Vec<usize>,
    pub augmentations: usize,
}

impl GroupedBatch {
    pub fn groups(&self) -> usize {
        self.items.len() / self.augmentations.max(1)
    }

    pub fn group(&self, i: usize) -> &[Sample] {
        &self.items[i * self.augmentations..(i + 1) * self.augmentations]
    }
}

/// Expands the given sources into `m` augmentations each. Augmentation `j`
/// of source `i` draws from its own stream derived from `rng`.
pub fn expand_groups(sources: &[&Sample], m: usize, aug: &AugmentConfig, rng: &Rng) -> Result<GroupedBatch> {
    let mut items = Vec::with_capacity(sources.len() * m);
    let mut group_of = Vec::with_capacity(sources.len() * m);
    for (i, s) in sources.iter().enumerate() {
        for j in 0..m {
            let mut r = rng.derive(stream::AUGMENT, (i * m + j) as u64);
            items.push(augment(s, aug, &mut r)?);
            group_of.push(i);
        }
    }
    Ok(GroupedBatch { items, group_of, augmentations: m })
}

/// Draws `L` distinct sources without replacement and augments each `M` times.
pub fn build_grouped_batch(pool: &[Sample], spec: &BatchSpec, aug: &AugmentConfig, rng: &Rng) -> Result<GroupedBatch> {
    spec.validate()?;
    if pool.len() < spec.groups {
        return Err(Error::Usage(format!("pool of {} samples cannot supply {} groups", pool.len(), spec.groups)));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    let mut r = rng.derive(stream::BATCH, 0);
    // Partial Fisher-Yates: the first L positions are a uniform draw.
    for i in 0..spec.groups {
        let j = i + r.below((pool.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    let sources: Vec<&Sample> = idx[..spec.groups].iter().map(|&i| &pool[i]).collect();
    expand_groups(&sources, spec.augmentations, aug, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, n: usize) -> Tensor {
        Tensor::new(&[c, n, n], (0..c * n * n).map(|i| i as f64 / (c * n * n) as f64).collect()).unwrap()
    }

    #[test]
    fn cifar_single_record() {
        let mut rec = vec![255u8; CIFAR_RECORD];
        rec[0] = 7;
        let s = decode_cifar10(&rec).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, 7);
        assert!(s[0].image.data().iter().all(|&v| v == 1.0));
        assert_eq!(s[0].image.shape(), &[3, 32, 32]);
    }

    #[test]
    fn cifar_empty_and_errors() {
        assert!(decode_cifar10(&[]).unwrap().is_empty());
        assert!(matches!(decode_cifar10(&[0u8; CIFAR_RECORD - 1]), Err(Error::Data(_))));
        let mut rec = vec![0u8; CIFAR_RECORD];
        rec[0] = 10;
        assert!(matches!(decode_cifar10(&rec), Err(Error::Data(_))));
    }

    #[test]
    fn cifar_two_records_round_trip() {
        let bytes: Vec<u8> =
            (0..2 * CIFAR_RECORD).map(|i| if i % CIFAR_RECORD == 0 { (i / CIFAR_RECORD) as u8 + 3 } else { (i * 31 % 256) as u8 }).collect();
        let s = decode_cifar10(&bytes).unwrap();
        assert_eq!(s.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(s[1].label, 4);
        // pixel (G plane, row 2, col 5) of record 1
        let off = CIFAR_RECORD + 1 + 1024 + 2 * 32 + 5;
        assert_eq!(s[1].image.data()[1024 + 2 * 32 + 5], bytes[off] as f64 / 255.0);
        assert_eq!(encode_cifar10(&s).unwrap(), bytes);
    }

    #[test]
    fn synthetic_determinism_and_shape() {
        let p = SyntheticParams { per_class: 3, ..Default::default() };
        let a = synthetic_dataset(&p, 0, &Rng::new(5, 0)).unwrap();
        let b = synthetic_dataset(&p, 0, &Rng::new(5, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 24);
        assert!(a.iter().all(|s| s.image.shape() == [1, 16, 16] && s.label < 8));
        assert!(a.iter().all(|s| s.image.data().iter().all(|v| (0.0..=1.0).contains(v))));
        let none = synthetic_dataset(&SyntheticParams { per_class: 0, ..p }, 0, &Rng::new(5, 0)).unwrap();
        assert!(none.is_empty());
        let c = synthetic_dataset(&p, 0, &Rng::new(6, 0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn center_crop_without_flip_is_identity() {
        let img = ramp(2, 6);
        assert_eq!(crop_flip(&img, 4, 4, 4, false).unwrap(), img);
    }

    #[test]
    fn flip_is_an_involution() {
        let img = ramp(1, 5);
        let f = crop_flip(&img, 4, 4, 4, true).unwrap();
        assert_eq!(f.data()[0], img.data()[4]);
        assert_eq!(crop_flip(&f, 4, 4, 4, true).unwrap(), img);
    }

    #[test]
    fn corner_crop_shifts_window() {
        // offset (0,0) of a 4-padded frame: out[y][x] = in[y-4][x-4] where valid.
        let n = 6;
        let img = ramp(1, n);
        let out = crop_flip(&img, 4, 0, 0, false).unwrap();
        for y in 0..n {
            for x in 0..n {
                let expect = if y >= 4 && x >= 4 { img.data()[(y - 4) * n + (x - 4)] } else { 0.0 };
                assert_eq!(out.data()[y * n + x], expect);
            }
        }
    }

    #[test]
    fn augmentation_preserves_identity_and_range() {
        let s = Sample { id: 42, image: ramp(1, 8), label: 3 };
        let mut r = Rng::new(1, 1);
        for _ in 0..50 {
            let a = augment(&s, &AugmentConfig::default(), &mut r).unwrap();
            assert_eq!((a.id, a.label), (42, 3));
            assert_eq!(a.image.shape(), s.image.shape());
            assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn probes() {
        let img = ramp(1, 3);
        let mut r = Rng::new(0, 0);
        let v = Probe::VerticalFlip.apply(&img, 4, &mut r).unwrap();
        assert_eq!(&v.data()[0..3], &img.data()[6..9]);
        let rot = Probe::Rotate90.apply(&img, 4, &mut r).unwrap();
        let back = (0..3).fold(rot, |t, _| Probe::Rotate90.apply(&t, 4, &mut r).unwrap());
        assert_eq!(back, img);
        assert_eq!(Probe::Identity.apply(&img, 4, &mut r).unwrap(), img);
    }

    #[test]
    fn grouped_batch_structure() {
        let pool = synthetic_dataset(&SyntheticParams { per_class: 2, ..Default::default() }, 0, &Rng::new(1, 0)).unwrap();
        let spec = BatchSpec { groups: 2, augmentations: 3 };
        let b = build_grouped_batch(&pool, &spec, &AugmentConfig::default(), &Rng::new(9, 4)).unwrap();
        assert_eq!(b.items.len(), 6);
        assert_eq!(b.group_of, vec![0, 0, 0, 1, 1, 1]);
        for i in 0..2 {
            let g = b.group(i);
            assert!(g.iter().all(|s| s.id == g[0].id && s.label == g[0].label));
        }
        assert_ne!(b.group(0)[0].id, b.group(1)[0].id);
        let again = build_grouped_batch(&pool, &spec, &AugmentConfig::default(), &Rng::new(9, 4)).unwrap();
        assert_eq!(b, again);

        let plain = build_grouped_batch(&pool, &BatchSpec { groups: 5, augmentations: 1 }, &AugmentConfig::default(), &Rng::new(2, 2)).unwrap();
        let mut ids: Vec<u64> = plain.items.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 5);

        assert!(build_grouped_batch(&pool[..1], &spec, &AugmentConfig::default(), &Rng::new(0, 0)).is_err());
    }
}
