//! Per-fold training with early stopping, and k-fold cross-validation.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{build_task2_instances, derive_seed, sample_negatives, FoldSplit};
use crate::decoder;
use crate::error::{Error, Result};
use crate::metrics::{auroc, task2_metrics, EvalReport, FoldReport, Task1Scores, Task2Scores};
use crate::model::{Embeddings, InputKind, Mgkan, ModelConfig};
use crate::numeric::{AdamConfig, AdamState, DenseMatrix, ParamStore, Tape};
use crate::views::{DrugGraph, FeatureTable, ViewSet};

/// How training negatives are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativeMode {
    /// Drawn once per fold.
    #[default]
    Fixed,
    /// Redrawn every epoch, avoiding validation and test negatives.
    PerEpoch,
}

impl NegativeMode {
    pub fn name(self) -> &'static str {
        match self {
            NegativeMode::Fixed => "fixed",
            NegativeMode::PerEpoch => "per_epoch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(NegativeMode::Fixed),
            "per_epoch" => Some(NegativeMode::PerEpoch),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Upper bound on parameter updates.
    pub epochs: usize,
    /// Stop after this many epochs without a validation AUROC improvement.
    pub patience: usize,
    pub adam: AdamConfig,
    pub tau: f64,
    pub negatives: NegativeMode,
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            patience: 30,
            adam: AdamConfig::default(),
            tau: 0.5,
            negatives: NegativeMode::Fixed,
            smoothing: crate::views::DEFAULT_SMOOTHING,
        }
    }
}

/// Everything a fold needs besides its split.
#[derive(Clone, Copy, Debug)]
pub struct Experiment<'d> {
    pub graph: &'d DrugGraph,
    pub features: Option<&'d FeatureTable>,
    pub model: &'d ModelConfig,
    pub train: &'d TrainConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub source: usize,
    pub target: usize,
    pub score: f64,
    pub label: bool,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub report: FoldReport,
    /// Parameters at the best validation epoch.
    pub params: ParamStore,
    pub test_scores: Vec<ScoredPair>,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub folds: Vec<FoldOutcome>,
    /// Fold with the highest validation AUROC (lowest index on ties).
    pub best_fold: usize,
}

fn score_with(
    s: &DenseMatrix,
    t: &DenseMatrix,
    m: &DenseMatrix,
    symmetric: bool,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    if symmetric {
        decoder::score_symmetric(s, t, m, pairs)
    } else {
        decoder::score(s, t, m, pairs)
    }
}

/// Views for a fold: training positives only, direction-blind for the
/// symmetric control.
pub fn fold_views(exp: &Experiment, fold: &FoldSplit) -> Result<ViewSet> {
    let g = exp.graph.with_edges(fold.train.clone())?;
    let source = format!("fold {} train", fold.fold);
    let views = if exp.model.symmetric {
        ViewSet::build_symmetric(&g, exp.features, exp.train.smoothing, source)?
    } else {
        ViewSet::build(&g, exp.features, exp.train.smoothing, source)?
    };
    views.assert_excludes(&fold.held_out())?;
    Ok(views)
}

/// Node inputs implied by the model configuration.
pub fn model_inputs(exp: &Experiment) -> Result<Option<DenseMatrix>> {
    match exp.model.input {
        InputKind::FreeEmbedding { .. } => Ok(None),
        InputKind::Features { .. } => exp
            .features
            .map(FeatureTable::dense_features)
            .map(Some)
            .ok_or_else(|| Error::Config("model expects features but none were loaded".into())),
    }
}

fn labelled(pos: &[(usize, usize)], neg: &[(usize, usize)]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let pairs = pos.iter().chain(neg).copied().collect();
    let labels = std::iter::repeat_n(1.0, pos.len())
        .chain(std::iter::repeat_n(0.0, neg.len()))
        .collect();
    (pairs, labels)
}

/// Trains one fold and evaluates both tasks on its test split.
pub fn train_fold(exp: &Experiment, fold: &FoldSplit) -> Result<FoldOutcome> {
    fold.validate(exp.graph)?;
    let views = fold_views(exp, fold)?;
    let x = model_inputs(exp)?;
    let mut model = Mgkan::new(exp.model.clone(), derive_seed(exp.seed, 1000 + fold.fold as u64))?;
    let mut adam = AdamState::new(&model.params, exp.train.adam);
    let symmetric = exp.model.symmetric;

    let (val_pairs, val_labels) = labelled(&fold.val, &fold.val_neg);
    let val_bool: Vec<bool> = val_labels.iter().map(|&l| l > 0.5).collect();
    let held_negatives: HashSet<(usize, usize)> =
        fold.val_neg.iter().chain(&fold.test_neg).copied().collect();
    let (mut train_pairs, train_labels) = labelled(&fold.train, &fold.train_neg);

    let mut best: Option<(f64, usize, Vec<DenseMatrix>)> = None;
    let mut epochs_run = 0;
    for epoch in 0..=exp.train.epochs {
        if epoch > 0 && exp.train.negatives == NegativeMode::PerEpoch {
            let seed = derive_seed(fold.seed, 100 + epoch as u64);
            let neg = sample_negatives(exp.graph, fold.train.len(), seed, &held_negatives)?;
            train_pairs = labelled(&fold.train, &neg).0;
        }
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &views, x.as_ref())?;
        let loss = model.loss(&mut tape, &fwd, &train_pairs, &train_labels)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                fold: fold.fold,
                epoch,
                loss: loss_value,
            });
        }

        // validation AUROC of the parameters that produced this loss
        let val_auc = if val_pairs.is_empty() {
            None
        } else {
            let p = score_with(tape.value(fwd.s), tape.value(fwd.t), tape.value(fwd.m), symmetric, &val_pairs)?;
            auroc(&p, &val_bool).ok()
        };
        let improved = match (&best, val_auc) {
            (None, _) => true,
            (Some(_), None) => true,
            (Some((b, _, _)), Some(a)) => a > *b,
        };
        if improved {
            best = Some((val_auc.unwrap_or(f64::NAN), epoch, model.params.values_snapshot()));
        }
        if epoch % 10 == 0 {
            log::debug!("fold {} epoch {epoch}: loss {loss_value:.5} val auroc {val_auc:?}", fold.fold);
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if epoch == exp.train.epochs || epoch - best_epoch >= exp.train.patience {
            break;
        }
        tape.backward(loss, &mut model.params)?;
        adam.step(&mut model.params);
        epochs_run += 1;
    }
    let (best_val, best_epoch, snapshot) = best.expect("at least one epoch is evaluated");
    model.params.restore(&snapshot)?;
    let emb = model.embed(&views, x.as_ref())?;

    let (test_pairs, test_labels) = labelled(&fold.test, &fold.test_neg);
    let test_bool: Vec<bool> = test_labels.iter().map(|&l| l > 0.5).collect();
    let test_p = emb.score(&test_pairs)?;
    let task1 = Task1Scores::compute(&test_p, &test_bool, exp.train.tau)?;

    let t2 = build_task2_instances(exp.graph, fold);
    let task2 = task2_scores(&emb, &t2.instances, exp.train.tau)?;

    log::info!(
        "fold {}: best epoch {best_epoch}/{epochs_run}, val auroc {best_val:.4}, test auroc {:.4}, task2 acc {:.4}",
        fold.fold,
        task1.auroc,
        task2.acc
    );
    Ok(FoldOutcome {
        report: FoldReport {
            fold: fold.fold,
            task1,
            task2,
            best_epoch,
            epochs_run,
            best_val_auroc: best_val,
            task2_excluded: t2.excluded_bidirectional,
        },
        params: model.params,
        test_scores: test_pairs
            .iter()
            .zip(&test_p)
            .zip(&test_bool)
            .map(|((&(u, v), &score), &label)| ScoredPair {
                source: u,
                target: v,
                score,
                label,
            })
            .collect(),
    })
}

fn task2_scores(emb: &Embeddings, instances: &[crate::data::Task2Instance], tau: f64) -> Result<Task2Scores> {
    let pairs: Vec<(usize, usize)> = instances.iter().flat_map(|i| [(i.u, i.v), (i.v, i.u)]).collect();
    let p = emb.score(&pairs)?;
    let probs: Vec<(f64, f64)> = p.chunks(2).map(|c| (c[0], c[1])).collect();
    Ok(task2_metrics(instances, &probs, tau)?.into())
}

/// Runs every fold (in parallel when threads are available) and merges in
/// fold order.
pub fn cross_validate(exp: &Experiment, folds: &[FoldSplit], tag: &str) -> Result<CvOutcome> {
    let start = Instant::now();
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|f| train_fold(exp, f))
        .collect::<Result<Vec<_>>>()?;
    let mut best_fold = 0;
    for (i, o) in outcomes.iter().enumerate() {
        let cur = outcomes[best_fold].report.best_val_auroc;
        if o.report.best_val_auroc > cur || (cur.is_nan() && !o.report.best_val_auroc.is_nan()) {
            best_fold = i;
        }
    }
    Ok(CvOutcome {
        report: EvalReport {
            tag: tag.to_string(),
            seed: exp.seed,
            folds: outcomes.iter().map(|o| o.report.clone()).collect(),
            runtime_secs: start.elapsed().as_secs_f64(),
        },
        folds: outcomes,
        best_fold,
    })
}
