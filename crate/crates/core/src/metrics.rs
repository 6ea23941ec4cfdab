//! Ranking and threshold metrics, the three-way direction decision and
//! top-K discovery ranking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::data::{Task2Instance, Task2Label};
use crate::error::{Error, Result};
use crate::model::Embeddings;
use crate::views::DrugGraph;

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape("metric", "score and label counts differ"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative (ties
/// count one half), via midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based) midranks of the positives, kept doubled to stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Items in descending score order; equal scores keep input order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Average precision: mean over positives of the precision at that
/// positive's rank. Ties are broken by input order after a stable
/// descending sort.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// Confusion counts and derived accuracy / F1 at a threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub acc: f64,
    pub f1: f64,
}

fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Predicts positive when `score ≥ tau`.
pub fn threshold_metrics(scores: &[f64], labels: &[bool], tau: f64) -> Result<BinaryMetrics> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= tau, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(BinaryMetrics {
        tp,
        fp,
        fn_,
        tn,
        acc: (tp + tn) as f64 / scores.len() as f64,
        f1: f1_score(tp, fp, fn_),
    })
}

/// Three-way decision for the pair `{u, v}` given `p1 = ŷ(u→v)` and
/// `p2 = ŷ(v→u)`: `None` below `tau`, else the larger direction. An exact
/// tie goes to the direction whose source has the smaller index.
pub fn decide_task2(p1: f64, p2: f64, u: usize, v: usize, tau: f64) -> Task2Label {
    if p1.max(p2) < tau {
        return Task2Label::None;
    }
    match p1.partial_cmp(&p2) {
        Some(Ordering::Greater) => Task2Label::Forward,
        Some(Ordering::Less) => Task2Label::Backward,
        _ => {
            log::debug!("direction tie for pair ({u}, {v}) at {p1}");
            if u <= v {
                Task2Label::Forward
            } else {
                Task2Label::Backward
            }
        }
    }
}

/// Scores both directions of `{u, v}` and applies [`decide_task2`].
pub fn classify_task2(emb: &Embeddings, u: usize, v: usize, tau: f64) -> Result<Task2Label> {
    let p = emb.score(&[(u, v), (v, u)])?;
    Ok(decide_task2(p[0], p[1], u, v, tau))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Task2Metrics {
    /// Three-way accuracy.
    pub acc: f64,
    /// Macro-F1 over the classes that occur in labels or predictions.
    pub macro_f1: f64,
    /// Fraction of directed instances assigned their exact direction.
    pub direction_acc: f64,
    /// One-vs-rest macro AUROC using class scores `(p1, p2, 1 − max)`.
    pub auroc: f64,
    pub auprc: f64,
    pub confusion: [[usize; 3]; 3],
}

/// Metrics from predicted direction probabilities `(p1, p2)` per instance.
pub fn task2_metrics(
    instances: &[Task2Instance],
    probs: &[(f64, f64)],
    tau: f64,
) -> Result<Task2Metrics> {
    if instances.len() != probs.len() {
        return Err(Error::shape("task2_metrics", "instance and score counts differ"));
    }
    if instances.is_empty() {
        return Err(Error::UndefinedMetric("no three-way instances".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (inst, &(p1, p2)) in instances.iter().zip(probs) {
        let pred = decide_task2(p1, p2, inst.u, inst.v, tau);
        confusion[inst.label.index()][pred.index()] += 1;
    }
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let mut f1s = Vec::new();
    for c in 0..3 {
        let tp = confusion[c][c];
        let fp: usize = (0..3).filter(|&r| r != c).map(|r| confusion[r][c]).sum();
        let fn_: usize = (0..3).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        if tp + fp + fn_ > 0 {
            f1s.push(f1_score(tp, fp, fn_));
        }
    }
    let directed: usize = confusion[0].iter().chain(&confusion[1]).sum();
    let direction_acc = if directed == 0 {
        0.0
    } else {
        (confusion[0][0] + confusion[1][1]) as f64 / directed as f64
    };

    let mut aurocs = Vec::new();
    let mut auprcs = Vec::new();
    for class in Task2Label::ALL {
        let labels: Vec<bool> = instances.iter().map(|i| i.label == class).collect();
        let scores: Vec<f64> = probs
            .iter()
            .map(|&(p1, p2)| match class {
                Task2Label::Forward => p1,
                Task2Label::Backward => p2,
                Task2Label::None => 1.0 - p1.max(p2),
            })
            .collect();
        if let Ok(a) = auroc(&scores, &labels) {
            aurocs.push(a);
        }
        if let Ok(a) = auprc(&scores, &labels) {
            auprcs.push(a);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Task2Metrics {
        acc: correct as f64 / instances.len() as f64,
        macro_f1: mean(&f1s),
        direction_acc,
        auroc: mean(&aurocs),
        auprc: mean(&auprcs),
        confusion,
    })
}

// ---------------------------------------------------------------------------
// top-K discovery

#[derive(Clone, Debug, PartialEq)]
pub struct RankedPrediction {
    pub source: String,
    pub target: String,
    pub source_index: usize,
    pub target_index: usize,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Heap entry ordered so that the *worst* candidate is the maximum: lower
/// score is worse, and at equal score the later pair is worse.
#[derive(PartialEq)]
struct Candidate {
    score: f64,
    pair: (usize, usize),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.pair.cmp(&other.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Top `k` ordered pairs outside `E` by score; ties keep `(source, target)`
/// lexicographic order. Scoring runs one source row at a time.
pub fn rank_unknown_pairs(emb: &Embeddings, graph: &DrugGraph, k: usize) -> Result<Vec<RankedPrediction>> {
    let n = graph.n_drugs();
    let unknown = n * n.saturating_sub(1) - graph.n_edges();
    if k > unknown {
        return Err(Error::Request(format!(
            "top-{k} requested but only {unknown} unknown pairs exist"
        )));
    }
    if emb.s.rows() != n {
        return Err(Error::Request(format!(
            "embeddings cover {} drugs, graph has {n}",
            emb.s.rows()
        )));
    }
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    if k > 0 {
        for u in 0..n {
            let pairs: Vec<(usize, usize)> = (0..n).filter(|&v| v != u && !graph.contains(u, v)).map(|v| (u, v)).collect();
            let scores = emb.score(&pairs)?;
            for (pair, score) in pairs.into_iter().zip(scores) {
                let c = Candidate { score, pair };
                if heap.len() < k {
                    heap.push(c);
                } else if heap.peek().is_some_and(|worst| c < *worst) {
                    heap.pop();
                    heap.push(c);
                }
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedPrediction {
            source: graph.id(c.pair.0).to_string(),
            target: graph.id(c.pair.1).to_string(),
            source_index: c.pair.0,
            target_index: c.pair.1,
            score: c.score,
            rank: i + 1,
        })
        .collect())
}

pub fn ranked_tsv(preds: &[RankedPrediction]) -> String {
    let mut out = String::from("rank\tsource\ttarget\tscore\n");
    for p in preds {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", p.rank, p.source, p.target, p.score);
    }
    out
}

// ---------------------------------------------------------------------------
// reports

/// The four Task 1 columns.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Task1Scores {
    pub auroc: f64,
    pub auprc: f64,
    pub acc: f64,
    pub f1: f64,
}

impl Task1Scores {
    pub fn compute(scores: &[f64], labels: &[bool], tau: f64) -> Result<Self> {
        let t = threshold_metrics(scores, labels, tau)?;
        Ok(Self {
            auroc: auroc(scores, labels)?,
            auprc: auprc(scores, labels)?,
            acc: t.acc,
            f1: t.f1,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Task2Scores {
    pub auroc: f64,
    pub auprc: f64,
    pub acc: f64,
    pub f1: f64,
    pub direction_acc: f64,
}

impl From<Task2Metrics> for Task2Scores {
    fn from(m: Task2Metrics) -> Self {
        Self {
            auroc: m.auroc,
            auprc: m.auprc,
            acc: m.acc,
            f1: m.macro_f1,
            direction_acc: m.direction_acc,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub task1: Task1Scores,
    pub task2: Task2Scores,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_auroc: f64,
    pub task2_excluded: usize,
}

impl FoldReport {
    fn values(&self) -> [f64; 9] {
        let (a, b) = (self.task1, self.task2);
        [a.auroc, a.auprc, a.acc, a.f1, b.auroc, b.auprc, b.acc, b.f1, b.direction_acc]
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "t1_auroc", "t1_auprc", "t1_acc", "t1_f1", "t2_auroc", "t2_auprc", "t2_acc", "t2_f1", "t2_dir_acc",
];

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Per-fold and aggregated metrics of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tag: String,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    /// Wall-clock seconds; excluded from the TSV so reports stay reproducible.
    pub runtime_secs: f64,
}

impl EvalReport {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.folds.iter().map(|f| f.values()[i]).collect()
    }

    pub fn summary(&self) -> Vec<(f64, f64)> {
        (0..REPORT_COLUMNS.len()).map(|i| mean_std(&self.column(i))).collect()
    }

    pub fn mean(&self, column: &str) -> Option<f64> {
        let i = REPORT_COLUMNS.iter().position(|c| *c == column)?;
        Some(mean_std(&self.column(i)).0)
    }

    /// One row per fold plus `mean` and `std` rows; values in shortest
    /// round-trip form.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("tag\tseed\tfold\t{}\tbest_epoch\tepochs_run\tt2_excluded\n", REPORT_COLUMNS.join("\t"));
        for f in &self.folds {
            let vals: Vec<String> = f.values().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                self.tag,
                self.seed,
                f.fold,
                vals.join("\t"),
                f.best_epoch,
                f.epochs_run,
                f.task2_excluded
            );
        }
        let summary = self.summary();
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let vals: Vec<String> = summary
                .iter()
                .map(|&(m, s)| if pick == 0 { m } else { s }.to_string())
                .collect();
            let _ = writeln!(out, "{}\t{}\t{label}\t{}\t\t\t", self.tag, self.seed, vals.join("\t"));
        }
        out
    }

    pub fn pretty(&self) -> String {
        let mut out = format!("{} (seed {}, {} folds, {:.1}s)\n", self.tag, self.seed, self.folds.len(), self.runtime_secs);
        let _ = writeln!(out, "{:<12} {:>16} {:>16}", "metric", "mean", "std");
        for (name, (m, s)) in REPORT_COLUMNS.iter().zip(self.summary()) {
            let _ = writeln!(out, "{name:<12} {m:>16.4} {s:>16.4}");
        }
        out
    }
}

/// Side-by-side `mean±std` table of several reports.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut out = format!("variant\t{}\n", REPORT_COLUMNS.join("\t"));
    for r in reports {
        let cells: Vec<String> = r.summary().iter().map(|(m, s)| format!("{m:.4}±{s:.4}")).collect();
        let _ = writeln!(out, "{}\t{}", r.tag, cells.join("\t"));
    }
    out
}
