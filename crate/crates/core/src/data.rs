//! Dataset ingestion, transductive fold construction and negative sampling.
//!
//! Edge file: `source_id<TAB>target_id` per line. Feature file:
//! `drug_id<TAB>family<TAB>item_id`. Blank lines and lines starting with
//! `#` are ignored in both.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::views::{DrugGraph, Family, FeatureFamily, FeatureTable};

/// Non-fatal oddities found while loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub duplicate_edges: usize,
    pub self_loops: usize,
    pub duplicate_features: usize,
    /// Drugs that appear only in the feature file.
    pub feature_only_drugs: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: DrugGraph,
    pub features: Option<FeatureTable>,
    pub report: LoadReport,
}

/// Assigns dense indices in order of first appearance.
#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn get(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

fn records<'p, R: Read + 'p>(reader: R, path: &'p Path) -> impl Iterator<Item = Result<(usize, String)>> + 'p {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) => {
                let t = l.trim_end_matches(['\r', '\n']);
                if t.trim().is_empty() || t.trim_start().starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, t.to_string())))
                }
            }
        })
}

fn fields<'s>(line: &'s str, want: usize, path: &Path, lineno: usize) -> Result<Vec<&'s str>> {
    let parts: Vec<&str> = line.split('\t').map(str::trim).collect();
    if parts.len() != want || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("expected {want} non-empty tab-separated fields, found {:?}", line),
        });
    }
    Ok(parts)
}

/// Parses edge and optional feature data from readers; `*_name` label
/// error messages.
pub fn parse_dataset<E: Read, F: Read>(
    edges: E,
    edge_name: &Path,
    features: Option<(F, &Path)>,
) -> Result<Dataset> {
    let mut ids = Interner::default();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    let mut edge_list = Vec::new();
    for rec in records(edges, edge_name) {
        let (lineno, line) = rec?;
        let f = fields(&line, 2, edge_name, lineno)?;
        let (u, v) = (ids.get(f[0]), ids.get(f[1]));
        if u == v {
            log::warn!("{}:{lineno}: self-loop on {} skipped", edge_name.display(), f[0]);
            report.self_loops += 1;
            continue;
        }
        if !seen.insert((u, v)) {
            log::warn!("{}:{lineno}: duplicate edge {} -> {} ignored", edge_name.display(), f[0], f[1]);
            report.duplicate_edges += 1;
            continue;
        }
        edge_list.push((u, v));
    }

    let n_graph = ids.names.len();
    let mut triples: Vec<(usize, Family, usize)> = Vec::new();
    let mut items: [Interner; 3] = Default::default();
    if let Some((reader, path)) = features {
        let mut seen = HashSet::new();
        for rec in records(reader, path) {
            let (lineno, line) = rec?;
            let f = fields(&line, 3, path, lineno)?;
            let family = Family::parse(&f[1].to_ascii_lowercase()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!(
                    "unknown feature family {:?} (expected target, enzyme or transporter)",
                    f[1]
                ),
            })?;
            let d = ids.get(f[0]);
            let item = items[family as usize].get(f[2]);
            if !seen.insert((d, family, item)) {
                report.duplicate_features += 1;
                continue;
            }
            triples.push((d, family, item));
        }
        if report.duplicate_features > 0 {
            log::warn!(
                "{}: {} duplicate feature rows ignored",
                path.display(),
                report.duplicate_features
            );
        }
    }
    report.feature_only_drugs = ids.names.len() - n_graph;
    if report.feature_only_drugs > 0 {
        log::info!("{} drugs appear only in the feature file", report.feature_only_drugs);
    }

    let n = ids.names.len();
    let feature_table = if features_present(&items, &triples) {
        let mut fams: [FeatureFamily; 3] = Default::default();
        for (slot, fam) in fams.iter_mut().enumerate() {
            *fam = FeatureFamily::empty(n);
            fam.items = std::mem::take(&mut items[slot].names);
        }
        for (d, family, item) in triples {
            fams[family as usize].members[d].push(item);
        }
        Some(FeatureTable::new(fams)?)
    } else {
        None
    };
    Ok(Dataset {
        graph: DrugGraph::new(ids.names, edge_list)?,
        features: feature_table,
        report,
    })
}

fn features_present(items: &[Interner; 3], triples: &[(usize, Family, usize)]) -> bool {
    !triples.is_empty() || items.iter().any(|i| !i.names.is_empty())
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Loads the edge file and, when given, the feature file.
pub fn load_dataset(edge_file: &Path, feature_file: Option<&Path>) -> Result<Dataset> {
    let edges = open(edge_file)?;
    match feature_file {
        Some(p) => parse_dataset(edges, edge_file, Some((open(p)?, p))),
        None => parse_dataset::<_, std::fs::File>(edges, edge_file, None),
    }
}

/// Writes the `drug_id<TAB>row_index` manifest.
pub fn drug_manifest(graph: &DrugGraph) -> String {
    let mut out = String::from("drug_id\trow_index\n");
    for (i, id) in graph.ids().iter().enumerate() {
        let _ = writeln!(out, "{id}\t{i}");
    }
    out
}

// ---------------------------------------------------------------------------
// folds

/// Positive and negative ordered pairs of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub seed: u64,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl FoldSplit {
    pub fn held_out(&self) -> Vec<(usize, usize)> {
        self.val.iter().chain(&self.test).copied().collect()
    }

    /// Every negative of every split.
    pub fn all_negatives(&self) -> HashSet<(usize, usize)> {
        self.train_neg
            .iter()
            .chain(&self.val_neg)
            .chain(&self.test_neg)
            .copied()
            .collect()
    }

    /// Checks the split invariants against the full graph.
    pub fn validate(&self, graph: &DrugGraph) -> Result<()> {
        let bad = |m: String| Err(Error::Construction(format!("fold {}: {m}", self.fold)));
        let mut pos = HashSet::new();
        for &e in self.train.iter().chain(&self.val).chain(&self.test) {
            if !graph.contains(e.0, e.1) {
                return bad(format!("positive {e:?} is not an edge"));
            }
            if !pos.insert(e) {
                return bad(format!("positive {e:?} appears in two splits"));
            }
        }
        if pos.len() != graph.n_edges() {
            return bad("positive splits do not cover the edge set".into());
        }
        let mut neg = HashSet::new();
        for (name, p, n) in [
            ("train", &self.train, &self.train_neg),
            ("val", &self.val, &self.val_neg),
            ("test", &self.test, &self.test_neg),
        ] {
            if p.len() != n.len() {
                return bad(format!("{name}: {} positives but {} negatives", p.len(), n.len()));
            }
            for &(u, v) in n {
                if u == v || graph.contains(u, v) {
                    return bad(format!("negative ({u}, {v}) is a self-loop or an edge"));
                }
                if !neg.insert((u, v)) {
                    return bad(format!("negative ({u}, {v}) drawn twice"));
                }
            }
        }
        Ok(())
    }
}

/// Split proportions `(train, val, test)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Ratios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("split ratios must be non-negative: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {parts:?}")));
        }
        Ok(())
    }

    /// `(train, val, test)` counts for `n` edges: validation and test are
    /// floored, the remainder goes to training.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let (val, test) = (floor(self.val), floor(self.test));
        (n - val - test, val, test)
    }
}

impl Default for Ratios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Seed for stream `index` derived from a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `k` folds, each an independent seeded shuffle of `E` cut by `ratios`,
/// with 1:1 negatives drawn per split (test first, then validation, then
/// training) so that no negative is shared between splits.
pub fn make_folds(graph: &DrugGraph, k: usize, ratios: Ratios, seed: u64) -> Result<Vec<FoldSplit>> {
    ratios.validate()?;
    if k == 0 {
        return Err(Error::Config("at least one fold is required".into()));
    }
    if graph.n_edges() < k {
        return Err(Error::Config(format!(
            "{} edges cannot fill {k} folds",
            graph.n_edges()
        )));
    }
    (0..k)
        .map(|fold| {
            let fold_seed = derive_seed(seed, fold as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(fold_seed);
            let mut edges = graph.edges().to_vec();
            edges.shuffle(&mut rng);
            let (_, n_val, n_test) = ratios.counts(edges.len());
            let test: Vec<_> = edges[..n_test].to_vec();
            let val: Vec<_> = edges[n_test..n_test + n_val].to_vec();
            let train: Vec<_> = edges[n_test + n_val..].to_vec();

            let mut taken = HashSet::new();
            let draw = |count: usize, stream: u64, taken: &mut HashSet<(usize, usize)>| {
                let out = sample_negatives(graph, count, derive_seed(fold_seed, stream), taken)?;
                taken.extend(out.iter().copied());
                Ok::<_, Error>(out)
            };
            let test_neg = draw(test.len(), 1, &mut taken)?;
            let val_neg = draw(val.len(), 2, &mut taken)?;
            let train_neg = draw(train.len(), 3, &mut taken)?;
            Ok(FoldSplit {
                fold,
                seed: fold_seed,
                train,
                val,
                test,
                train_neg,
                val_neg,
                test_neg,
            })
        })
        .collect()
}

/// Draws `count` distinct ordered pairs uniformly from those that are not
/// edges, not self-loops and not in `exclusions`.
pub fn sample_negatives(
    graph: &DrugGraph,
    count: usize,
    seed: u64,
    exclusions: &HashSet<(usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = graph.n_drugs();
    let excluded_free = exclusions
        .iter()
        .filter(|&&(u, v)| u != v && u < n && v < n && !graph.contains(u, v))
        .count();
    let available = (n * n.saturating_sub(1))
        .saturating_sub(graph.n_edges())
        .saturating_sub(excluded_free);
    if available < count {
        return Err(Error::Config(format!(
            "only {available} unknown ordered pairs remain, {count} negatives requested"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let usable = |u: usize, v: usize| u != v && !graph.contains(u, v) && !exclusions.contains(&(u, v));

    if available < 4 * count {
        // dense regime: enumerate the candidates and take a random subset
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| usable(u, v))
            .collect();
        let (chosen, _) = pool.partial_shuffle(&mut rng, count);
        return Ok(chosen.to_vec());
    }
    let mut drawn = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if usable(u, v) && drawn.insert((u, v)) {
            out.push((u, v));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// task 2

/// Three-way label of an unordered pair `{u, v}` (stored with `u < v`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task2Label {
    /// `u → v`
    Forward,
    /// `v → u`
    Backward,
    None,
}

impl Task2Label {
    pub const ALL: [Task2Label; 3] = [Task2Label::Forward, Task2Label::Backward, Task2Label::None];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task2Instance {
    pub u: usize,
    pub v: usize,
    pub label: Task2Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task2Set {
    pub instances: Vec<Task2Instance>,
    /// Held-out edges skipped because the reverse edge also exists.
    pub excluded_bidirectional: usize,
}

impl Task2Set {
    pub fn count(&self, label: Task2Label) -> usize {
        self.instances.iter().filter(|i| i.label == label).count()
    }
}

fn unordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Task 2 instances from the fold's test positives: one directed instance
/// per edge whose reverse is not in `E`, plus as many `none` pairs (neither
/// direction in `E`), taken from the test negatives first and topped up by
/// seeded sampling.
pub fn build_task2_instances(graph: &DrugGraph, fold: &FoldSplit) -> Task2Set {
    let mut used = HashSet::new();
    let mut instances = Vec::new();
    let mut excluded = 0;
    for &(u, v) in &fold.test {
        if graph.contains(v, u) {
            excluded += 1;
            continue;
        }
        if !used.insert(unordered(u, v)) {
            continue;
        }
        let (a, b) = unordered(u, v);
        let label = if a == u { Task2Label::Forward } else { Task2Label::Backward };
        instances.push(Task2Instance { u: a, v: b, label });
    }
    if excluded > 0 {
        log::info!(
            "fold {}: {excluded} bidirectional test pairs excluded from the three-way task",
            fold.fold
        );
    }

    let directed = instances.len();
    let free = |u: usize, v: usize| u != v && !graph.contains(u, v) && !graph.contains(v, u);
    let mut none = 0;
    for &(u, v) in &fold.test_neg {
        if none == directed {
            break;
        }
        if free(u, v) && used.insert(unordered(u, v)) {
            let (a, b) = unordered(u, v);
            instances.push(Task2Instance { u: a, v: b, label: Task2Label::None });
            none += 1;
        }
    }
    if none < directed {
        // avoid pairs the model was trained or tuned on
        let seen: HashSet<(usize, usize)> = fold
            .train_neg
            .iter()
            .chain(&fold.val_neg)
            .map(|&(u, v)| unordered(u, v))
            .collect();
        let n = graph.n_drugs();
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| free(u, v) && !seen.contains(&(u, v)) && !used.contains(&(u, v)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(fold.seed, 4));
        let need = (directed - none).min(candidates.len());
        let (chosen, _) = candidates.partial_shuffle(&mut rng, need);
        for &(u, v) in chosen.iter() {
            instances.push(Task2Instance { u, v, label: Task2Label::None });
        }
        none += need;
        if none < directed {
            log::warn!(
                "fold {}: only {none} unlinked pairs available for {directed} directed instances",
                fold.fold
            );
        }
    }
    Task2Set {
        instances,
        excluded_bidirectional: excluded,
    }
}

// ---------------------------------------------------------------------------
// fold manifests

const SPLITS: [&str; 3] = ["train", "val", "test"];

/// `fold<TAB>split<TAB>source<TAB>target<TAB>label` rows, external ids.
pub fn write_fold_manifest(graph: &DrugGraph, folds: &[FoldSplit]) -> String {
    let mut out = String::from("fold\tsplit\tsource\ttarget\tlabel\n");
    for f in folds {
        let _ = writeln!(out, "# seed\t{}\t{}", f.fold, f.seed);
        let groups = [
            (&f.train, &f.train_neg),
            (&f.val, &f.val_neg),
            (&f.test, &f.test_neg),
        ];
        for (split, (pos, neg)) in SPLITS.iter().zip(groups) {
            for (list, label) in [(pos, 1), (neg, 0)] {
                for &(u, v) in list {
                    let _ = writeln!(out, "{}\t{split}\t{}\t{}\t{label}", f.fold, graph.id(u), graph.id(v));
                }
            }
        }
    }
    out
}

/// Reads a manifest written by [`write_fold_manifest`]; row order within
/// each list is preserved.
pub fn read_fold_manifest(graph: &DrugGraph, text: &str, path: &Path) -> Result<Vec<FoldSplit>> {
    let index: HashMap<&str, usize> = graph.ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut folds: Vec<FoldSplit> = Vec::new();
    let err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        msg,
    };
    let grow = |folds: &mut Vec<FoldSplit>, fold: usize| {
        while folds.len() <= fold {
            folds.push(FoldSplit {
                fold: folds.len(),
                seed: 0,
                train: vec![],
                val: vec![],
                test: vec![],
                train_neg: vec![],
                val_neg: vec![],
                test_neg: vec![],
            });
        }
    };
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if let Some(rest) = line.strip_prefix("# seed\t") {
            let parsed = rest
                .split_once('\t')
                .and_then(|(f, s)| Some((f.parse::<usize>().ok()?, s.trim().parse::<u64>().ok()?)));
            let (fold, seed) = parsed.ok_or_else(|| err(lineno, format!("bad seed line {line:?}")))?;
            grow(&mut folds, fold);
            folds[fold].seed = seed;
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("fold\t") {
            continue;
        }
        let f = fields(line, 5, path, lineno)?;
        let fold: usize = f[0].parse().map_err(|_| err(lineno, format!("bad fold index {:?}", f[0])))?;
        let id = |s: &str| index.get(s).copied().ok_or_else(|| err(lineno, format!("unknown drug id {s:?}")));
        let pair = (id(f[2])?, id(f[3])?);
        grow(&mut folds, fold);
        let fs = &mut folds[fold];
        let list = match (f[1], f[4]) {
            ("train", "1") => &mut fs.train,
            ("train", "0") => &mut fs.train_neg,
            ("val", "1") => &mut fs.val,
            ("val", "0") => &mut fs.val_neg,
            ("test", "1") => &mut fs.test,
            ("test", "0") => &mut fs.test_neg,
            _ => return Err(err(lineno, format!("bad split/label {:?}/{:?}", f[1], f[4]))),
        };
        list.push(pair);
    }
    for f in &folds {
        f.validate(graph)?;
    }
    Ok(folds)
}
