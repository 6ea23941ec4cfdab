//! Metrics against brute-force definitions.

use mgkan::data::{Task2Instance, Task2Label};
use mgkan::metrics::{auprc, auroc, decide_task2, rank_unknown_pairs, task2_metrics, threshold_metrics};
use mgkan::model::Embeddings;
use mgkan::numeric::DenseMatrix;
use mgkan::views::DrugGraph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{pair_count_auroc, random_scored, reference_ap};

#[test]
fn auroc_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (s, l) = random_scored(&mut rng);
        let got = auroc(&s, &l).unwrap();
        assert!((got - pair_count_auroc(&s, &l)).abs() <= 1e-12);
    }
}

#[test]
fn auprc_equals_reference_average_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let (s, l) = random_scored(&mut rng);
        let got = auprc(&s, &l).unwrap();
        assert!((got - reference_ap(&s, &l)).abs() <= 1e-12);
    }
    // a lone positive ranked last among four
    assert_eq!(auprc(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap(), 0.25);
}

#[test]
fn threshold_metrics_confusion_example() {
    // TP=2 FP=1 FN=1 TN=6
    let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
    let labels = [true, true, false, true, false, false, false, false, false, false];
    let m = threshold_metrics(&scores, &labels, 0.5).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 6));
    assert!((m.acc - 0.8).abs() < 1e-15);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
}

fn macro_f1_oracle(truth: &[Task2Label], pred: &[Task2Label]) -> f64 {
    let mut f1s = Vec::new();
    for c in Task2Label::ALL {
        let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count();
        let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count();
        let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count();
        if tp + fp + fn_ == 0 {
            continue;
        }
        f1s.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

#[test]
fn task2_accuracy_and_macro_f1_match_enumeration() {
    let levels = [0.1, 0.5, 0.8];
    let labels = Task2Label::ALL;
    // every assignment of (p1, p2, label) for three instances
    let singles: Vec<(f64, f64, Task2Label)> = levels
        .iter()
        .flat_map(|&a| levels.iter().flat_map(move |&b| labels.into_iter().map(move |l| (a, b, l))))
        .collect();
    let mut cases = 0;
    for x in &singles {
        for y in &singles {
            for z in singles.iter().step_by(5) {
                let items = [x, y, z];
                let inst: Vec<Task2Instance> =
                    items.iter().enumerate().map(|(i, c)| Task2Instance { u: 2 * i, v: 2 * i + 1, label: c.2 }).collect();
                let probs: Vec<(f64, f64)> = items.iter().map(|c| (c.0, c.1)).collect();
                let pred: Vec<Task2Label> =
                    inst.iter().zip(&probs).map(|(i, p)| decide_task2(p.0, p.1, i.u, i.v, 0.5)).collect();
                let truth: Vec<Task2Label> = inst.iter().map(|i| i.label).collect();
                let Ok(m) = task2_metrics(&inst, &probs, 0.5) else { continue };
                let acc = truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / 3.0;
                assert!((m.acc - acc).abs() < 1e-15);
                assert!((m.macro_f1 - macro_f1_oracle(&truth, &pred)).abs() < 1e-12);
                cases += 1;
            }
        }
    }
    assert!(cases > 1000);
}

#[test]
fn task2_decision_rule() {
    assert_eq!(decide_task2(0.9, 0.2, 0, 1, 0.5), Task2Label::Forward);
    assert_eq!(decide_task2(0.3, 0.3, 0, 1, 0.5), Task2Label::None);
    assert_eq!(decide_task2(0.8, 0.8, 0, 1, 0.5), Task2Label::Forward);
    assert_eq!(decide_task2(0.2, 0.7, 0, 1, 0.5), Task2Label::Backward);
}

#[test]
fn top_k_matches_exhaustive_scoring() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..20 {
        let n = 4;
        let emb = Embeddings {
            s: DenseMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0)),
            t: DenseMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0)),
            // a zero matrix on some trials makes every score tie
            m: DenseMatrix::from_fn(3, 3, |_, _| if trial % 5 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }),
            symmetric: false,
        };
        let g = DrugGraph::with_indices(n, vec![(0, 1), (2, 3), (3, 0)]).unwrap();
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && !g.contains(u, v) {
                    let logit: f64 = (0..3)
                        .flat_map(|i| (0..3).map(move |j| (i, j)))
                        .map(|(i, j)| emb.s.get(u, i) * emb.m.get(i, j) * emb.t.get(v, j))
                        .sum();
                    all.push((1.0 / (1.0 + (-logit).exp()), u, v));
                }
            }
        }
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for k in [0, 1, 5, all.len()] {
            let got = rank_unknown_pairs(&emb, &g, k).unwrap();
            assert_eq!(got.len(), k);
            for (r, (p, w)) in got.iter().zip(&all).enumerate() {
                assert_eq!((p.source_index, p.target_index), (w.1, w.2), "trial {trial} rank {r}");
                assert!((p.score - w.0).abs() < 1e-12);
                assert_eq!(p.rank, r + 1);
            }
        }
        assert!(rank_unknown_pairs(&emb, &g, all.len() + 1).is_err());
    }
}

proptest! {
    #[test]
    fn auroc_is_invariant_under_monotone_maps(
        raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
    ) {
        let (s, l): (Vec<f64>, Vec<bool>) = raw.into_iter().unzip();
        prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
        let a = auroc(&s, &l).unwrap();
        let mapped: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        prop_assert!((a - auroc(&mapped, &l).unwrap()).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[0] != w[1]) {
            prop_assert!((a + auroc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(
        raw in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..60),
    ) {
        let (s, l): (Vec<f64>, Vec<bool>) = raw.into_iter().unzip();
        if l.iter().any(|&x| x) {
            let ap = auprc(&s, &l).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
        }
        let m = threshold_metrics(&s, &l, 0.5).unwrap();
        prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, s.len());
        prop_assert!((0.0..=1.0).contains(&m.acc) && (0.0..=1.0).contains(&m.f1));
    }
}
