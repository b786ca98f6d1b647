//! The train / eval / analyze / sweep operations behind the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use codinet_core::analytics::{
    consistency_match_rate, cost_report, expected_run_count, path_distribution_kl, path_histogram, run_count_histogram, similarity_report,
    unique_path_count, ConsistencyReport, PathLog, PathRecord, SimilarityReport,
};
use codinet_core::data::Sample;
use codinet_core::net::DynamicNet;
use codinet_core::rng::{stream, Rng};
use codinet_core::train::{evaluate, finetune_stage2, initial_net, train_stage1, EpochRecord, EvalSummary, Observer, TrainData, TrainReport};

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::datasets::{load_splits, Splits};
use crate::error::CliError;
use crate::pathlog::{write_path_log, write_projection};

/// One line of the metrics file. Wall time is left out so that repeated runs
/// produce identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub stage: u8,
    pub epoch: usize,
    pub lr: f64,
    pub loss_cls: f64,
    pub loss_con: f64,
    pub loss_div: f64,
    pub loss_cost: f64,
    pub loss_total: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub mean_gates: Vec<f64>,
    pub val_gmaccs: f64,
    pub val_paths: usize,
}

impl From<&EpochRecord> for MetricsLine {
    fn from(r: &EpochRecord) -> Self {
        MetricsLine {
            stage: r.stage,
            epoch: r.epoch,
            lr: r.lr,
            loss_cls: r.loss.cls,
            loss_con: r.loss.con,
            loss_div: r.loss.div,
            loss_cost: r.loss.cost,
            loss_total: r.loss.total,
            train_accuracy: r.train_accuracy,
            val_accuracy: r.val_accuracy,
            mean_gates: r.mean_gates.clone(),
            val_gmaccs: r.val_cost_gmacc,
            val_paths: r.val_unique_paths,
        }
    }
}

struct RunObserver<'a> {
    cfg: &'a Config,
    metrics: Option<BufWriter<File>>,
    metrics_path: PathBuf,
    out: Option<&'a Path>,
    verbose: bool,
}

impl Observer for RunObserver<'_> {
    fn on_epoch(&mut self, r: &mut EpochRecord, net: &DynamicNet) -> codinet_core::Result<()> {
        let line = serde_json::to_string(&MetricsLine::from(&*r)).expect("metrics serialize");
        if let Some(w) = self.metrics.as_mut() {
            writeln!(w, "{line}").map_err(|e| codinet_core::Error::Data(format!("{}: {e}", self.metrics_path.display())))?;
        }
        if self.verbose {
            eprintln!(
                "stage {} epoch {:>3}  loss {:.4}  train {:.3}  val {:.3}  gmaccs {:.3e}  paths {}",
                r.stage, r.epoch, r.loss.total, r.train_accuracy, r.val_accuracy, r.val_cost_gmacc, r.val_unique_paths
            );
        }
        let every = self.cfg.train.checkpoint_every;
        if let (Some(out), true) = (self.out, every > 0 && (r.epoch + 1).is_multiple_of(every)) {
            let ck = Checkpoint::capture(net, self.cfg, r.epoch as u64 + 1, &Rng::new(self.cfg.train.seed, 0));
            ck.save(&out.join(format!("checkpoint-epoch{}.bin", r.epoch + 1))).map_err(|e| codinet_core::Error::Data(e.to_string()))?;
        }
        Ok(())
    }
}

/// Accuracy and compute of a binary-gated evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummaryJson {
    pub samples: usize,
    pub accuracy: f64,
    pub mean_gmaccs: f64,
    pub full_gmaccs: f64,
    pub speedup: f64,
    /// Number of distinct routing paths taken.
    pub paths: usize,
    pub mean_expected_runs: f64,
    /// Records per rounded expected run count `0..=n`.
    pub expected_run_histogram: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyJson {
    pub pairs: usize,
    pub matches: usize,
    pub rate: f64,
    pub per_probe: BTreeMap<String, [usize; 2]>,
    pub mean_prediction_kl_nats: f64,
}

impl From<&ConsistencyReport> for ConsistencyJson {
    fn from(c: &ConsistencyReport) -> Self {
        ConsistencyJson {
            pairs: c.pairs,
            matches: c.matches,
            rate: c.rate,
            per_probe: c.per_probe.iter().map(|&(p, n, m)| (p.as_str().to_string(), [n, m])).collect(),
            mean_prediction_kl_nats: c.mean_prediction_kl,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityJson {
    pub candidates: usize,
    pub pairs: usize,
    pub pcc: Option<f64>,
    pub notice: Option<String>,
}

impl From<&SimilarityReport> for SimilarityJson {
    fn from(s: &SimilarityReport) -> Self {
        SimilarityJson {
            candidates: s.candidates,
            pairs: s.pairs.len(),
            pcc: s.pcc,
            notice: s.pcc.is_none().then(|| "correlation undefined: a similarity column has zero variance or fewer than 2 pairs".to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: EvalSummaryJson,
    pub consistency: ConsistencyJson,
    /// Raw pixel vectors as features.
    pub similarity: SimilarityJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub accuracy_before_stage2: f64,
    pub routers_unchanged_by_stage2: bool,
    #[serde(flatten)]
    pub eval: EvalSummaryJson,
}

pub struct TrainOutcome {
    pub net: DynamicNet,
    pub report: TrainReport,
    pub before_stage2: EvalSummary,
    pub summary: TrainSummary,
    pub splits: Splits,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("report serialize") + "\n";
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn router_bits(net: &DynamicNet) -> Vec<u64> {
    net.named_tensors()
        .into_iter()
        .filter(|(n, _)| n.starts_with("router"))
        .flat_map(|(_, t)| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect()
}

fn summarize(net: &DynamicNet, log: &PathLog) -> Result<EvalSummaryJson, CliError> {
    let cost = cost_report(log, &net.cost_table)?;
    let n = log.len().max(1) as f64;
    let correct = log.records().iter().filter(|r| argmax(&r.probs) == r.label).count();
    Ok(EvalSummaryJson {
        samples: log.len(),
        accuracy: if log.is_empty() { 0.0 } else { correct as f64 / n },
        mean_gmaccs: cost.mean_gmaccs,
        full_gmaccs: cost.full_gmaccs,
        speedup: cost.speedup,
        paths: unique_path_count(log),
        mean_expected_runs: log.records().iter().map(|r| expected_run_count(&r.relaxed)).sum::<f64>() / n,
        expected_run_histogram: run_count_histogram(log),
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Trains both stages. With `out`, writes `config.txt`, `metrics.jsonl`,
/// `checkpoint.bin` and `summary.json` there.
pub fn train(cfg: &Config, out: Option<&Path>, verbose: bool) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    if cfg.loss.beta > 0.0 && cfg.train.groups < 2 {
        eprintln!("warning: diversity loss needs at least 2 groups per batch (train.L = {}); it stays 0", cfg.train.groups);
    }
    let splits = load_splits(cfg)?;
    let tc = cfg.train_config();
    let mut net = initial_net(cfg.net_spec(), cfg.train.seed)?;
    let metrics_path = out.map(|o| o.join("metrics.jsonl")).unwrap_or_default();
    let metrics = match out {
        Some(o) => {
            create_dir(o)?;
            std::fs::write(o.join("config.txt"), cfg.to_text()).map_err(CliError::io(o.join("config.txt")))?;
            Some(BufWriter::new(File::create(&metrics_path).map_err(CliError::io(&metrics_path))?))
        }
        None => None,
    };
    let mut obs = RunObserver { cfg, metrics, metrics_path: metrics_path.clone(), out, verbose };
    let data = TrainData { train: &splits.train, val: &splits.val };
    let mut report = train_stage1(&mut net, &data, &tc, &mut obs)?;
    let before_stage2 = evaluate(&net, &splits.val, &tc.normalization)?;
    let routers = router_bits(&net);
    report.epochs.extend(finetune_stage2(&mut net, &data, &tc, &mut obs)?.epochs);
    let routers_unchanged = routers == router_bits(&net);
    if let Some(mut w) = obs.metrics.take() {
        w.flush().map_err(CliError::io(&metrics_path))?;
    }
    let log = collect_log(cfg, &net, &splits.val)?;
    let summary = TrainSummary {
        epochs_stage1: tc.epochs_stage1,
        epochs_stage2: tc.epochs_stage2,
        accuracy_before_stage2: before_stage2.accuracy,
        routers_unchanged_by_stage2: routers_unchanged,
        eval: summarize(&net, &log)?,
    };
    if let Some(o) = out {
        Checkpoint::capture(&net, cfg, report.epochs.len() as u64, &Rng::new(cfg.train.seed, 0)).save(&o.join("checkpoint.bin"))?;
        write_json(&o.join("summary.json"), &summary)?;
    }
    Ok(TrainOutcome { net, report, before_stage2, summary, splits })
}

/// Binary-gated path log of `samples`, with Gumbel noise on the decisions
/// when `gumbel.inference_noise` is set.
pub fn collect_log(cfg: &Config, net: &DynamicNet, samples: &[Sample]) -> Result<PathLog, CliError> {
    let norm = cfg.normalization();
    let mut log = PathLog::new(net.depth(), cfg.net.num_classes);
    let noise_root = Rng::new(cfg.train.seed, stream::GUMBEL).derive(stream::PROBE, u64::MAX);
    for s in samples {
        let x = norm.apply(&s.image)?;
        let out = if cfg.gumbel.inference_noise {
            net.forward_binary_noisy(&x, &cfg.gumbel, &mut noise_root.derive(stream::GUMBEL, s.id))?
        } else {
            net.forward_binary(&x)?
        };
        log.push(PathRecord { id: s.id, label: s.label, path: out.path, relaxed: out.relaxed, cost_maccs: out.cost_maccs, probs: out.probs })?;
    }
    Ok(log)
}

pub struct EvalOutcome {
    pub log: PathLog,
    pub report: EvalReport,
}

/// Evaluates `net` on `samples`: path log, cost summary, augmentation
/// consistency and the pixel-similarity / path-similarity correlation.
pub fn evaluate_net(cfg: &Config, net: &DynamicNet, samples: &[Sample], out: Option<&Path>) -> Result<EvalOutcome, CliError> {
    let log = collect_log(cfg, net, samples)?;
    let norm = cfg.normalization();
    let consistency = consistency_match_rate(net, samples, &cfg.eval.probes, cfg.data.pad, &Rng::new(cfg.train.seed, stream::PROBE), &norm)?;
    let features: Vec<Vec<f64>> = samples.iter().map(|s| s.image.data().to_vec()).collect();
    let similarity = similarity_report(&features, &log.paths(), cfg.eval.pair_cap, &Rng::new(cfg.train.seed, stream::PAIRS))?;
    let report = EvalReport { summary: summarize(net, &log)?, consistency: (&consistency).into(), similarity: (&similarity).into() };
    if let Some(o) = out {
        create_dir(o)?;
        write_path_log(&log, &o.join("paths.tsv"))?;
        if !log.is_empty() {
            write_projection(&log, &o.join("projection.csv"))?;
        }
        write_json(&o.join("eval.json"), &report)?;
    }
    Ok(EvalOutcome { log, report })
}

/// Loads a checkpoint into the network described by `cfg` and evaluates it
/// on the evaluation split.
pub fn eval(cfg: &Config, checkpoint: &Path, out: Option<&Path>) -> Result<EvalOutcome, CliError> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut net = initial_net(cfg.net_spec(), cfg.train.seed)?;
    ck.load_into(&mut net)?;
    let splits = load_splits(cfg)?;
    evaluate_net(cfg, &net, &splits.val, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathCount {
    pub path: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub records: [usize; 2],
    pub unique_paths: [usize; 2],
    pub mean_gmaccs: [f64; 2],
    pub mean_expected_runs: [f64; 2],
    /// `KL(this ‖ other)` and `KL(other ‖ this)` over path frequencies, in nats.
    pub path_kl_nats: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub records: usize,
    pub depth: usize,
    pub unique_paths: usize,
    pub mean_gmaccs: f64,
    pub mean_expected_runs: f64,
    pub expected_run_histogram: Vec<usize>,
    pub path_histogram: Vec<PathCount>,
    pub similarity: Option<SimilarityJson>,
    pub notices: Vec<String>,
    pub comparison: Option<Comparison>,
}

fn mean_gmaccs(log: &PathLog) -> f64 {
    log.records().iter().map(|r| r.cost_maccs as f64).sum::<f64>() / log.len().max(1) as f64 / 1e9
}

fn mean_runs(log: &PathLog) -> f64 {
    log.records().iter().map(|r| expected_run_count(&r.relaxed)).sum::<f64>() / log.len().max(1) as f64
}

/// Reports over a path log, optionally correlating with per-record features
/// and comparing against a second log.
pub fn analyze(
    log: &PathLog,
    features: Option<&[Vec<f64>]>,
    other: Option<&PathLog>,
    pair_cap: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<AnalyzeReport, CliError> {
    let mut notices = Vec::new();
    let mut scatter = None;
    let similarity = match features {
        Some(f) => {
            if f.len() != log.len() {
                return Err(CliError::Data(format!("feature file has {} rows, path log has {} records", f.len(), log.len())));
            }
            let rep = similarity_report(f, &log.paths(), pair_cap, &Rng::new(seed, stream::PAIRS))?;
            let json = SimilarityJson::from(&rep);
            if let Some(n) = &json.notice {
                notices.push(format!("pcc skipped: {n}"));
            }
            scatter = Some(rep);
            Some(json)
        }
        None => {
            notices.push("pcc skipped: no feature file given".into());
            None
        }
    };
    let comparison = match other {
        Some(o) => {
            if o.depth() != log.depth() {
                return Err(CliError::Data(format!("cannot compare logs of depth {} and {}", log.depth(), o.depth())));
            }
            let kl = if log.is_empty() || o.is_empty() {
                notices.push("path KL skipped: empty log".into());
                [0.0, 0.0]
            } else {
                [path_distribution_kl(log, o)?, path_distribution_kl(o, log)?]
            };
            Some(Comparison {
                records: [log.len(), o.len()],
                unique_paths: [unique_path_count(log), unique_path_count(o)],
                mean_gmaccs: [mean_gmaccs(log), mean_gmaccs(o)],
                mean_expected_runs: [mean_runs(log), mean_runs(o)],
                path_kl_nats: kl,
            })
        }
        None => None,
    };
    let report = AnalyzeReport {
        records: log.len(),
        depth: log.depth(),
        unique_paths: unique_path_count(log),
        mean_gmaccs: mean_gmaccs(log),
        mean_expected_runs: mean_runs(log),
        expected_run_histogram: run_count_histogram(log),
        path_histogram: path_histogram(log).into_iter().map(|(p, c)| PathCount { path: p.to_bitstring(), count: c }).collect(),
        similarity,
        notices,
        comparison,
    };
    if let Some(o) = out {
        create_dir(o)?;
        write_json(&o.join("analysis.json"), &report)?;
        let mut hist = String::from("path,count\n");
        for p in &report.path_histogram {
            writeln!(hist, "{},{}", p.path, p.count).expect("writing to a String");
        }
        std::fs::write(o.join("path_histogram.csv"), hist).map_err(CliError::io(o.join("path_histogram.csv")))?;
        if let Some(rep) = scatter {
            let mut csv = String::from("feature_cosine,path_cosine\n");
            for (x, y) in &rep.pairs {
                writeln!(csv, "{x},{y}").expect("writing to a String");
            }
            std::fs::write(o.join("similarity.csv"), csv).map_err(CliError::io(o.join("similarity.csv")))?;
        }
        if let Some(c) = &report.comparison {
            let table = format!(
                "metric,this,other\nrecords,{},{}\nunique_paths,{},{}\nmean_gmaccs,{},{}\nmean_expected_runs,{},{}\npath_kl_nats,{},{}\n",
                c.records[0],
                c.records[1],
                c.unique_paths[0],
                c.unique_paths[1],
                c.mean_gmaccs[0],
                c.mean_gmaccs[1],
                c.mean_expected_runs[0],
                c.mean_expected_runs[1],
                c.path_kl_nats[0],
                c.path_kl_nats[1]
            );
            std::fs::write(o.join("comparison.csv"), table).map_err(CliError::io(o.join("comparison.csv")))?;
        }
        if !log.is_empty() {
            write_projection(log, &o.join("projection.csv"))?;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub accuracy: f64,
    pub mean_gmaccs: f64,
    pub paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_accuracy: f64,
    pub mean_gmaccs: f64,
    pub speedup: f64,
    pub mean_paths: f64,
    pub runs: Vec<SweepRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub full_gmaccs: f64,
    /// Ordered by increasing γ.
    pub rows: Vec<SweepRow>,
}

/// Trains one model per `(γ, seed)` from scratch and tabulates cost and
/// accuracy per γ, averaged over seeds.
pub fn sweep(cfg: &Config, gammas: &[f64], seeds: &[u64], out: Option<&Path>, verbose: bool) -> Result<SweepReport, CliError> {
    if gammas.len() < 2 {
        return Err(CliError::Config(format!("a sweep needs at least 2 gamma values, got {}", gammas.len())));
    }
    if seeds.is_empty() {
        return Err(CliError::Config("a sweep needs at least one seed".into()));
    }
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut full = 0.0;
    for &gamma in &sorted {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut c = cfg.clone();
            c.loss.gamma = gamma;
            c.train.seed = seed;
            let dir = out.map(|o| o.join(format!("gamma-{gamma}")).join(format!("seed-{seed}")));
            let t = train(&c, dir.as_deref(), verbose)?;
            full = t.summary.eval.full_gmaccs;
            runs.push(SweepRun { seed, accuracy: t.summary.eval.accuracy, mean_gmaccs: t.summary.eval.mean_gmaccs, paths: t.summary.eval.paths });
        }
        let k = runs.len() as f64;
        let mean_gmaccs = runs.iter().map(|r| r.mean_gmaccs).sum::<f64>() / k;
        rows.push(SweepRow {
            gamma,
            mean_accuracy: runs.iter().map(|r| r.accuracy).sum::<f64>() / k,
            mean_gmaccs,
            speedup: full / mean_gmaccs,
            mean_paths: runs.iter().map(|r| r.paths as f64).sum::<f64>() / k,
            runs,
        });
    }
    let report = SweepReport { full_gmaccs: full, rows };
    if let Some(o) = out {
        create_dir(o)?;
        write_json(&o.join("sweep.json"), &report)?;
        let mut csv = String::from("gamma,mean_accuracy,mean_gmaccs,speedup,mean_paths\n");
        for r in &report.rows {
            writeln!(csv, "{},{},{},{},{}", r.gamma, r.mean_accuracy, r.mean_gmaccs, r.speedup, r.mean_paths).expect("writing to a String");
        }
        std::fs::write(o.join("sweep.csv"), csv).map_err(CliError::io(o.join("sweep.csv")))?;
    }
    Ok(report)
}
