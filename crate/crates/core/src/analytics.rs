//! Diagnostics over the routing paths a trained network takes: path counts
//! and histograms, KL divergences, augmentation consistency, the correlation
//! between sample similarity and path similarity, and cost accounting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::CostTable;
use crate::data::{Normalization, Probe, Sample};
use crate::net::{DynamicNet, RelaxedPath, RoutingPath};
use crate::rng::{stream, Rng};
use crate::{math, Error, Result};

/// Smoothing constant inside the KL logarithm.
pub const KL_EPS: f64 = 1e-12;
/// Upper bound on the number of sample pairs entering a similarity report.
pub const PAIR_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub id: u64,
    pub label: usize,
    pub path: RoutingPath,
    pub relaxed: RelaxedPath,
    pub cost_maccs: u64,
    /// Softmax over the logits of the binary-gated forward.
    pub probs: Vec<f64>,
}

/// Per-sample routing records of one evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLog {
    depth: usize,
    num_classes: usize,
    records: Vec<PathRecord>,
    ids: BTreeSet<u64>,
}

impl PathLog {
    pub fn new(depth: usize, num_classes: usize) -> Self {
        PathLog { depth, num_classes, records: Vec::new(), ids: BTreeSet::new() }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn records(&self) -> &[PathRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record after checking id uniqueness, lengths and that the
    /// prediction is a distribution.
    pub fn push(&mut self, r: PathRecord) -> Result<()> {
        if r.path.len() != self.depth || r.relaxed.len() != self.depth {
            return Err(Error::Data(format!(
                "record {} has paths of length {}/{} in a log of depth {}",
                r.id,
                r.path.len(),
                r.relaxed.len(),
                self.depth
            )));
        }
        if r.probs.len() != self.num_classes {
            return Err(Error::Data(format!("record {} has {} probabilities, expected {}", r.id, r.probs.len(), self.num_classes)));
        }
        check_distribution(&r.probs)?;
        if !self.ids.insert(r.id) {
            return Err(Error::Data(format!("duplicate record id {}", r.id)));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn paths(&self) -> Vec<RoutingPath> {
        self.records.iter().map(|r| r.path.clone()).collect()
    }
}

/// Binary-gated evaluation of every sample into a path log.
pub fn collect_path_log(net: &DynamicNet, samples: &[Sample], norm: &Normalization) -> Result<PathLog> {
    let mut log = PathLog::new(net.depth(), net.spec.num_classes);
    for s in samples {
        let out = net.forward_binary(&norm.apply(&s.image)?)?;
        log.push(PathRecord { id: s.id, label: s.label, path: out.path, relaxed: out.relaxed, cost_maccs: out.cost_maccs, probs: out.probs })?;
    }
    Ok(log)
}

pub fn unique_path_count(log: &PathLog) -> usize {
    log.records.iter().map(|r| r.path.bits()).collect::<BTreeSet<_>>().len()
}

/// Distinct paths with their counts, most frequent first (ties by bitstring).
pub fn path_histogram(log: &PathLog) -> Vec<(RoutingPath, usize)> {
    let mut counts: BTreeMap<&RoutingPath, usize> = BTreeMap::new();
    for r in &log.records {
        *counts.entry(&r.path).or_default() += 1;
    }
    let mut out: Vec<_> = counts.into_iter().map(|(p, c)| (p.clone(), c)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Expected number of blocks to run, `Σ v_k`.
pub fn expected_run_count(path: &RelaxedPath) -> f64 {
    path.values().iter().sum()
}

/// Counts of records by expected run count rounded to the nearest integer;
/// index `j` holds records expecting `j` blocks.
pub fn run_count_histogram(log: &PathLog) -> Vec<usize> {
    let mut h = vec![0; log.depth + 1];
    for r in &log.records {
        let j = libm::round(expected_run_count(&r.relaxed)) as usize;
        h[j.min(log.depth)] += 1;
    }
    h
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Data(format!("distribution has negative or non-finite entries: {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("distribution sums to {s}, not 1")));
    }
    Ok(())
}

/// `Σ p_i ln((p_i + ε)/(q_i + ε))` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("KL between distributions of length {} and {}", p.len(), q.len())));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(p.iter().zip(q).map(|(&a, &b)| a * math::ln((a + KL_EPS) / (b + KL_EPS))).sum())
}

/// KL between the path-frequency histograms of two logs over the union of
/// their paths.
pub fn path_distribution_kl(p: &PathLog, q: &PathLog) -> Result<f64> {
    if p.depth != q.depth {
        return Err(Error::Shape(format!("logs of depth {} and {}", p.depth, q.depth)));
    }
    if p.is_empty() || q.is_empty() {
        return Err(Error::Data("path-distribution KL needs non-empty logs".into()));
    }
    let mut keys: BTreeMap<&RoutingPath, (f64, f64)> = BTreeMap::new();
    for r in &p.records {
        keys.entry(&r.path).or_default().0 += 1.0;
    }
    for r in &q.records {
        keys.entry(&r.path).or_default().1 += 1.0;
    }
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let (a, b): (Vec<f64>, Vec<f64>) = keys.values().map(|&(x, y)| (x / np, y / nq)).unzip();
    kl_divergence(&renormalize(a), &renormalize(b))
}

// Frequencies can miss 1 by an ulp or two.
fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsistencyReport {
    pub pairs: usize,
    pub matches: usize,
    /// `matches / pairs`.
    pub rate: f64,
    /// Mean `KL(p_original ‖ p_augmented)` of the binary-gated predictions.
    pub mean_prediction_kl: f64,
    /// `(probe, pairs, matches)` for every probe in use.
    pub per_probe: Vec<(Probe, usize, usize)>,
}

/// Compares each sample's binary path with the path of one probed variant.
/// Sample `i` uses `probes[i % probes.len()]`, drawing any randomness from
/// the stream derived from its id.
pub fn consistency_match_rate(
    net: &DynamicNet,
    samples: &[Sample],
    probes: &[Probe],
    pad: usize,
    rng: &Rng,
    norm: &Normalization,
) -> Result<ConsistencyReport> {
    if probes.is_empty() {
        return Err(Error::Usage("consistency check needs at least one probe".into()));
    }
    let mut per_probe: Vec<(Probe, usize, usize)> = probes.iter().map(|&p| (p, 0, 0)).collect();
    let (mut matches, mut kl) = (0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        let slot = i % probes.len();
        let mut r = rng.derive(stream::PROBE, s.id);
        let variant = probes[slot].apply(&s.image, pad, &mut r)?;
        let a = net.forward_binary(&norm.apply(&s.image)?)?;
        let b = net.forward_binary(&norm.apply(&variant)?)?;
        let same = a.path == b.path;
        matches += usize::from(same);
        per_probe[slot].1 += 1;
        per_probe[slot].2 += usize::from(same);
        kl += kl_divergence(&a.probs, &b.probs)?;
    }
    let n = samples.len();
    Ok(ConsistencyReport {
        pairs: n,
        matches,
        rate: if n == 0 { 0.0 } else { matches as f64 / n as f64 },
        mean_prediction_kl: if n == 0 { 0.0 } else { kl / n as f64 },
        per_probe,
    })
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = math::sqrt(a.iter().map(|x| x * x).sum());
    let nb = math::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation coefficient.
pub fn pcc(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("pcc over {} and {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined(format!("pcc needs at least 2 pairs, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Deviations of a constant sequence are rounding noise around its mean.
    let flat = |s: f64, v: &[f64], m: f64| s <= 1e-24 * (m * m * n + v.iter().map(|x| x * x).sum::<f64>()).max(1e-300);
    if flat(sxx, xs, mx) || flat(syy, ys, my) {
        return Err(Error::Undefined("pcc of a zero-variance sequence".into()));
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityReport {
    /// `(feature cosine, path cosine)` per evaluated pair.
    pub pairs: Vec<(f64, f64)>,
    /// Pairs drawn or enumerated before exclusions.
    pub candidates: usize,
    /// `None` when either similarity column has zero variance.
    pub pcc: Option<f64>,
}

/// Correlates feature similarity with path similarity over sample pairs.
///
/// With at most `cap` unordered pairs all are enumerated; otherwise `cap`
/// pairs are drawn with replacement from `rng`. Pairs involving an all-zero
/// path or a zero feature vector are dropped.
pub fn similarity_report(features: &[Vec<f64>], paths: &[RoutingPath], cap: usize, rng: &Rng) -> Result<SimilarityReport> {
    if features.len() != paths.len() {
        return Err(Error::Shape(format!("{} feature rows for {} paths", features.len(), paths.len())));
    }
    let n = features.len();
    let reals: Vec<Vec<f64>> = paths.iter().map(RoutingPath::as_reals).collect();
    let total = n * n.saturating_sub(1) / 2;
    let mut index_pairs = Vec::with_capacity(total.min(cap));
    if total <= cap {
        for i in 0..n {
            for j in i + 1..n {
                index_pairs.push((i, j));
            }
        }
    } else {
        let mut r = rng.derive(stream::PAIRS, 0);
        while index_pairs.len() < cap {
            let i = r.below(n as u64) as usize;
            let j = r.below(n as u64) as usize;
            if i != j {
                index_pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    let candidates = index_pairs.len();
    let pairs: Vec<(f64, f64)> =
        index_pairs.into_iter().filter_map(|(i, j)| Some((cosine(&features[i], &features[j])?, cosine(&reals[i], &reals[j])?))).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let pcc = match pcc(&xs, &ys) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SimilarityReport { pairs, candidates, pcc })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub mean_gmaccs: f64,
    pub full_gmaccs: f64,
    /// `full / mean`; infinite when every record skips every block.
    pub speedup: f64,
}

/// Mean hard-gated cost `Σ c_k u_k` of the log, in GMACCs.
pub fn cost_report(log: &PathLog, table: &CostTable) -> Result<CostReport> {
    if table.len() != log.depth {
        return Err(Error::Shape(format!("cost table of {} entries for paths of length {}", table.len(), log.depth)));
    }
    let mut sum = 0.0;
    for r in &log.records {
        sum += table.path_cost(r.path.bits())? as f64;
    }
    let mean = if log.is_empty() { 0.0 } else { sum / log.len() as f64 } / 1e9;
    let full = table.total() as f64 / 1e9;
    Ok(CostReport { mean_gmaccs: mean, full_gmaccs: full, speedup: full / mean })
}

/// Two leading principal components of a point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    /// Variance along each component (population normalization).
    pub variances: [f64; 2],
    pub coords: Vec<[f64; 2]>,
}

pub fn pca2(points: &[Vec<f64>]) -> Result<Projection> {
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("pca over rows of unequal length".into()));
    }
    let n = points.len();
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut cov = vec![0.0; d * d];
    for p in points {
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (p[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n.max(1) as f64);
    let (vals, vecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let pick = |k: usize| -> (Vec<f64>, f64) {
        match order.get(k) {
            Some(&c) => ((0..d).map(|r| vecs[r * d + c]).collect(), vals[c].max(0.0)),
            None => (vec![0.0; d], 0.0),
        }
    };
    let ((c0, v0), (c1, v1)) = (pick(0), pick(1));
    let coords = points
        .iter()
        .map(|p| {
            let proj = |c: &[f64]| p.iter().zip(&mean).zip(c).map(|((x, m), w)| (x - m) * w).sum();
            [proj(&c0), proj(&c1)]
        })
        .collect();
    Ok(Projection { mean, components: [c0, c1], variances: [v0, v1], coords })
}

/// Cyclic Jacobi rotations on a symmetric `d×d` matrix. Returns eigenvalues
/// and the row-major matrix whose columns are the eigenvectors.
fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * d + j] * a[i * d + j]).sum();
        let diag: f64 = (0..d).map(|i| a[i * d + i] * a[i * d + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k * d + p], a[k * d + q]);
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p * d + k], a[q * d + k]);
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k * d + p], v[k * d + q]);
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i * d + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockKind;
    use crate::net::NetSpec;

    fn rec(id: u64, bits: &[u8]) -> PathRecord {
        PathRecord {
            id,
            label: 0,
            path: RoutingPath::new(bits.to_vec()).unwrap(),
            relaxed: RelaxedPath::new(bits.iter().map(|&b| f64::from(b)).collect()).unwrap(),
            cost_maccs: 0,
            probs: vec![0.5, 0.5],
        }
    }

    fn log_of(paths: &[&[u8]]) -> PathLog {
        let mut log = PathLog::new(paths[0].len(), 2);
        for (i, p) in paths.iter().enumerate() {
            log.push(rec(i as u64, p)).unwrap();
        }
        log
    }

    #[test]
    fn unique_paths_single_and_exhaustive() {
        assert_eq!(unique_path_count(&log_of(&[&[1, 0, 1], &[1, 0, 1], &[1, 0, 1]])), 1);
        let all: Vec<Vec<u8>> = (0..8).map(|c| RoutingPath::from_code(c, 3).bits().to_vec()).collect();
        let refs: Vec<&[u8]> = all.iter().map(Vec::as_slice).collect();
        assert_eq!(unique_path_count(&log_of(&refs)), 8);
    }

    #[test]
    fn log_rejects_duplicates_and_bad_probs() {
        let mut log = log_of(&[&[1, 0]]);
        assert!(log.push(rec(0, &[0, 0])).is_err());
        let mut r = rec(5, &[0, 0]);
        r.probs = vec![0.7, 0.7];
        assert!(log.push(r).is_err());
        assert!(log.push(rec(6, &[0, 0, 1])).is_err());
    }

    #[test]
    fn histogram_orders_by_count() {
        let h = path_histogram(&log_of(&[&[0, 1], &[1, 1], &[0, 1]]));
        assert_eq!(h[0], (RoutingPath::new(vec![0, 1]).unwrap(), 2));
        assert_eq!(h[1].1, 1);
    }

    #[test]
    fn expected_runs() {
        assert_eq!(expected_run_count(&RelaxedPath::new(vec![1.0; 6]).unwrap()), 6.0);
        assert_eq!(expected_run_count(&RelaxedPath::new(vec![0.5; 6]).unwrap()), 3.0);
        assert!((expected_run_count(&RelaxedPath::new(vec![0.1, 0.9, 0.4]).unwrap()) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        assert!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-9);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - core::f64::consts::LN_2).abs() < 1e-9);
        let want = 0.5 * libm::log(2.0) + 0.5 * libm::log(2.0 / 3.0);
        assert!((kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap() - want).abs() < 1e-9);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn path_kl_of_identical_logs_is_zero() {
        let a = log_of(&[&[0, 1], &[1, 1]]);
        assert!(path_distribution_kl(&a, &a).unwrap().abs() < 1e-12);
        let b = log_of(&[&[0, 1], &[0, 1]]);
        // p = (1/2, 1/2) over {01, 11}; q puts everything on 01.
        let kl = path_distribution_kl(&a, &b).unwrap();
        let want = 0.5 * libm::log((0.5 + KL_EPS) / (1.0 + KL_EPS)) + 0.5 * libm::log((0.5 + KL_EPS) / KL_EPS);
        assert!((kl - want).abs() < 1e-9);
    }

    #[test]
    fn pcc_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pcc(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pcc(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        // deviations (−1.5, −.5, .5, 1.5) and (−.5, −1.5, 1.5, .5): Σ = 3, Σx² = Σy² = 5.
        assert!((pcc(&xs, &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(pcc(&xs, &[0.1; 4]), Err(Error::Undefined(_))));
        assert!(matches!(pcc(&[1.0], &[2.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn cost_report_examples() {
        let table = CostTable::new(vec![100, 300]).unwrap();
        let full = cost_report(&log_of(&[&[1, 1], &[1, 1]]), &table).unwrap();
        assert_eq!(full.speedup, 1.0);
        let half = cost_report(&log_of(&[&[1, 1], &[0, 0]]), &table).unwrap();
        assert!((half.speedup - 2.0).abs() < 1e-12);
        let mixed = cost_report(&log_of(&[&[1, 0], &[0, 1], &[0, 1]]), &table).unwrap();
        assert!((mixed.mean_gmaccs - 700.0 / 3.0 / 1e9).abs() < 1e-20);
        assert!(cost_report(&log_of(&[&[1, 0, 1]]), &table).is_err());
    }

    #[test]
    fn similarity_skips_zero_paths_and_enumerates_small_sets() {
        let feats = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0], vec![0.5, 0.5]];
        let paths: Vec<RoutingPath> = [[1, 1, 0], [1, 1, 0], [0, 0, 1], [0, 0, 0]].iter().map(|b| RoutingPath::new(b.to_vec()).unwrap()).collect();
        let rep = similarity_report(&feats, &paths, PAIR_CAP, &Rng::new(1, 0)).unwrap();
        assert_eq!(rep.candidates, 6);
        assert_eq!(rep.pairs.len(), 3);
        assert!(rep.pcc.unwrap() > 0.9);
        let capped = similarity_report(&feats, &paths, 4, &Rng::new(1, 0)).unwrap();
        assert_eq!(capped.candidates, 4);
    }

    #[test]
    fn pca_of_collinear_points() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let p = pca2(&pts).unwrap();
        assert!(p.variances[1].abs() < 1e-10);
        // Variance of 0..9 is 8.25, scaled by the squared norm of (1, 2, −1).
        assert!((p.variances[0] - 8.25 * 6.0).abs() < 1e-9);
        assert!(p.coords.iter().all(|c| c[1].abs() < 1e-9));
    }

    #[test]
    fn pca_diagonal_covariance() {
        let pts = vec![vec![3.0, 0.0], vec![-3.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let p = pca2(&pts).unwrap();
        assert!((p.variances[0] - 4.5).abs() < 1e-12 && (p.variances[1] - 0.5).abs() < 1e-12);
        assert!((p.components[0][0].abs() - 1.0).abs() < 1e-12);
    }

    fn small_net() -> DynamicNet {
        let spec = NetSpec { kind: BlockKind::ConvResidual, in_shape: [1, 8, 8], channels: 4, depth: 3, num_classes: 3, pools: 0, router_hidden: 4 };
        DynamicNet::new(spec, &mut Rng::new(3, stream::INIT)).unwrap()
    }

    fn small_samples() -> Vec<Sample> {
        let mut r = Rng::new(4, 0);
        (0..12)
            .map(|i| Sample {
                id: i,
                label: (i % 3) as usize,
                image: crate::Tensor::new(&[1, 8, 8], (0..64).map(|_| r.uniform()).collect()).unwrap(),
            })
            .collect()
    }

    #[test]
    fn identity_probe_is_always_consistent() {
        let net = small_net();
        let rep = consistency_match_rate(&net, &small_samples(), &[Probe::Identity], 2, &Rng::new(0, 0), &Normalization::identity(1)).unwrap();
        assert_eq!(rep.rate, 1.0);
        assert!(rep.mean_prediction_kl.abs() < 1e-12);
    }

    #[test]
    fn input_independent_routers_are_always_consistent() {
        let mut net = small_net();
        net.force_routers(&RoutingPath::new(vec![1, 0, 1]).unwrap()).unwrap();
        let rep = consistency_match_rate(&net, &small_samples(), &Probe::PROBE_SET, 2, &Rng::new(0, 0), &Normalization::identity(1)).unwrap();
        assert_eq!(rep.rate, 1.0);
        assert_eq!(rep.per_probe.iter().map(|p| p.1).sum::<usize>(), 12);
    }

    #[test]
    fn collected_log_matches_forward() {
        let net = small_net();
        let samples = small_samples();
        let log = collect_path_log(&net, &samples, &Normalization::identity(1)).unwrap();
        assert_eq!(log.len(), 12);
        for (r, s) in log.records().iter().zip(&samples) {
            assert_eq!(r.path, net.forward_binary(&s.image).unwrap().path);
        }
        assert!(unique_path_count(&log) <= 8);
    }
}
