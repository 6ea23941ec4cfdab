//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mgkan::data::{make_folds, Ratios};
use mgkan::model::{InputKind, Mgkan, ModelConfig};
use mgkan::numeric::{DenseMatrix, Tape};
use mgkan::synthetic::{planted, PlantedConfig};
use mgkan::views::{DrugGraph, Family, FeatureFamily, FeatureTable, ViewSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Textbook recursion for `B_{j,p}(x)` over knots `t`, half-open spans.
pub fn cox_de_boor(t: &[f64], j: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if t[j] <= x && x < t[j + 1] { 1.0 } else { 0.0 };
    }
    let left = (x - t[j]) / (t[j + p] - t[j]) * cox_de_boor(t, j, p - 1, x);
    let right = (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * cox_de_boor(t, j + 1, p - 1, x);
    left + right
}

pub fn random_digraph(rng: &mut ChaCha8Rng, max_n: usize) -> DrugGraph {
    let n = rng.random_range(2..=max_n);
    let p = rng.random_range(0.02..0.4);
    let edges = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v)
        .filter(|_| rng.random_bool(p))
        .collect::<Vec<_>>();
    DrugGraph::with_indices(n, edges).unwrap()
}

pub fn dense_adjacency(g: &DrugGraph) -> Vec<Vec<f64>> {
    let n = g.n_drugs();
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
    }
    a
}

/// `(C_in, C_out)` by the triple loop, diagonals kept.
pub fn co_interaction_oracle(g: &DrugGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.n_drugs();
    let a = dense_adjacency(g);
    let out_deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let in_deg: Vec<f64> = (0..n).map(|j| (0..n).map(|i| a[i][j]).sum()).collect();
    let mut c_in = vec![vec![0.0; n]; n];
    let mut c_out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if out_deg[k] > 0.0 {
                    c_in[i][j] += a[k][i] * a[k][j] / out_deg[k];
                }
                if in_deg[k] > 0.0 {
                    c_out[i][j] += a[i][k] * a[j][k] / in_deg[k];
                }
            }
        }
    }
    (c_in, c_out)
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize) -> FeatureTable {
    let families = Family::ALL.map(|f| {
        let width = rng.random_range(0..8);
        let p = rng.random_range(0.0..0.6);
        FeatureFamily {
            items: (0..width).map(|i| format!("{}{i}", f.name())).collect(),
            members: (0..n).map(|_| (0..width).filter(|_| rng.random_bool(p)).collect()).collect(),
        }
    });
    FeatureTable::new(families).unwrap()
}

/// Fused Jaccard similarity by explicit set operations, zero diagonal.
pub fn similarity_oracle(table: &FeatureTable) -> Vec<Vec<f64>> {
    let n = table.n_drugs();
    let mut b = vec![vec![0.0; n]; n];
    for (u, row) in b.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            if u == v {
                continue;
            }
            for f in Family::ALL {
                let fam = table.family(f);
                let a: BTreeSet<usize> = fam.members[u].iter().copied().collect();
                let c: BTreeSet<usize> = fam.members[v].iter().copied().collect();
                let union = a.union(&c).count();
                if union > 0 {
                    *cell += a.intersection(&c).count() as f64 / union as f64;
                }
            }
        }
    }
    b
}

pub fn normalize_oracle(dense: &DenseMatrix, eps: f64) -> Vec<Vec<f64>> {
    let n = dense.rows();
    let r: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense.get(i, j)).sum()).collect();
    let c: Vec<f64> = (0..n).map(|j| (0..n).map(|i| dense.get(i, j)).sum()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let w = dense.get(i, j);
                    if w == 0.0 {
                        0.0
                    } else {
                        w / ((r[i] + eps) * (c[j] + eps)).sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

/// Fraction of positive–negative pairs ordered correctly, ties counted half.
pub fn pair_count_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    let pos = scores.iter().zip(labels).filter(|p| *p.1).map(|p| *p.0);
    for si in pos {
        for sj in scores.iter().zip(labels).filter(|p| !*p.1).map(|p| *p.0) {
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Precision at each positive counts the items that a stable descending
/// sort would put at or above it.
pub fn reference_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let above = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let mut total = 0.0;
    let mut n_pos = 0;
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        n_pos += 1;
        let ranked: Vec<usize> = (0..scores.len()).filter(|&j| above(i, j)).collect();
        let hits = ranked.iter().filter(|&&j| labels[j]).count();
        total += hits as f64 / ranked.len() as f64;
    }
    total / n_pos as f64
}

/// Up to 500 scores on a coarse grid (so ties are common), both classes
/// present.
pub fn random_scored(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=500);
    let levels = rng.random_range(2..50);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

pub fn max_abs_diff(sparse: &mgkan::numeric::SparseMatrix, dense: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in dense.iter().enumerate() {
        for (j, &want) in row.iter().enumerate() {
            worst = worst.max((sparse.get(i, j) - want).abs());
        }
    }
    worst
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL: f64 = 1e-4;
pub const FD_ABS: f64 = 1e-8;

/// 12 drugs, small feature blocks, full-rank form.
pub fn gradient_instance(seed: u64) -> PlantedConfig {
    PlantedConfig {
        n_drugs: 12,
        latent_dim: 4,
        edges: 30,
        items_per_family: 4,
        feature_threshold: 0.2,
        form_rank: 0,
        seed,
    }
}

/// Every view active, two layers, tiny width.
pub fn gradient_model(seed: u64) -> ModelConfig {
    let width = planted(&gradient_instance(seed)).unwrap().features.total_width();
    let mut c = ModelConfig::new(InputKind::Features { width });
    c.hidden = 3;
    c.layers = 2;
    c
}

/// Central finite differences over every parameter entry of one training
/// loss. Returns the number of entries checked, the worst relative error
/// among entries above the absolute floor, and the worst absolute error.
pub fn gradient_check(config: ModelConfig, seed: u64) -> Result<(usize, f64, f64), String> {
    let p = planted(&gradient_instance(seed)).unwrap();
    let fold = &make_folds(&p.graph, 2, Ratios::new(0.6, 0.2, 0.2).unwrap(), seed).unwrap()[0];
    let train = p.graph.with_edges(fold.train.clone()).unwrap();
    assert!(train.n_edges() > 0 && p.features.total_width() > 0);
    let views = if config.symmetric {
        ViewSet::build_symmetric(&train, Some(&p.features), 1e-8, "grad").unwrap()
    } else {
        ViewSet::build(&train, Some(&p.features), 1e-8, "grad").unwrap()
    };
    let dense = p.features.dense_features();
    let x = match config.input {
        InputKind::Features { .. } => Some(&dense),
        InputKind::FreeEmbedding { .. } => None,
    };
    let pairs: Vec<(usize, usize)> = fold.train.iter().chain(&fold.train_neg).copied().collect();
    let labels: Vec<f64> = (0..pairs.len()).map(|i| (i < fold.train.len()) as u8 as f64).collect();

    let mut model = Mgkan::new(config, seed).unwrap();
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &views, x).unwrap();
    let loss = model.loss(&mut tape, &fwd, &pairs, &labels).unwrap();
    tape.backward(loss, &mut model.params).unwrap();
    drop(tape);

    let ids: Vec<_> = model.params.ids().collect();
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for id in ids {
        let analytic = model.params.grad(id).clone();
        let name = model.params.get(id).name.clone();
        for k in 0..analytic.as_slice().len() {
            let orig = model.params.value(id).as_slice()[k];
            model.params.get_mut(id).value.as_mut_slice()[k] = orig + FD_STEP;
            let up = model.loss_value(&views, x, &pairs, &labels).unwrap();
            model.params.get_mut(id).value.as_mut_slice()[k] = orig - FD_STEP;
            let down = model.loss_value(&views, x, &pairs, &labels).unwrap();
            model.params.get_mut(id).value.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.as_slice()[k];
            let err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            if err > FD_ABS && err > FD_REL * scale {
                return Err(format!("{name}[{k}]: analytic {a:e} numeric {numeric:e}"));
            }
            worst_abs = worst_abs.max(err);
            if err > FD_ABS {
                worst = worst.max(err / scale);
            }
            checked += 1;
        }
    }
    Ok((checked, worst, worst_abs))
}

