//! The subcommands behind the `mgkan` binary. Each takes a resolved
//! [`RunConfig`] and writes its artifacts under the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::checkpoint::{sha256_hex, Checkpoint};
use crate::config::RunConfig;
use crate::data::{drug_manifest, make_folds, parse_dataset, read_fold_manifest, write_fold_manifest, Dataset, FoldSplit};
use crate::error::{Error, Result};
use crate::metrics::{comparison_table, rank_unknown_pairs, ranked_tsv, EvalReport, RankedPrediction, Task1Scores};
use crate::model::{Ablation, InputKind, Mgkan};
use crate::train::{cross_validate, CvOutcome, Experiment};
use crate::views::ViewSet;

/// Parsed inputs plus what the configuration resolved to.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub data: Dataset,
    pub input: InputKind,
    /// Config after fallbacks (e.g. `no_sim` implied by missing features).
    pub config: RunConfig,
    pub edges_sha256: String,
    pub features_sha256: Option<String>,
}

impl Inputs {
    pub fn manifest(&self) -> String {
        let mut out = self.config.to_text();
        let _ = writeln!(out, "edges_sha256 = {}", self.edges_sha256);
        let _ = writeln!(out, "features_sha256 = {}", self.features_sha256.as_deref().unwrap_or("none"));
        let _ = writeln!(out, "n_drugs = {}", self.data.graph.n_drugs());
        let _ = writeln!(out, "n_edges = {}", self.data.graph.n_edges());
        let input = match self.input {
            InputKind::Features { width } => format!("features:{width}"),
            InputKind::FreeEmbedding { width, .. } => format!("embedding:{width}"),
        };
        let _ = writeln!(out, "input = {input}");
        let _ = writeln!(out, "format_version = {}", crate::checkpoint::VERSION);
        out
    }

    pub fn experiment<'a>(&'a self, model: &'a crate::model::ModelConfig, train: &'a crate::train::TrainConfig) -> Experiment<'a> {
        Experiment {
            graph: &self.data.graph,
            features: self.data.features.as_ref(),
            model,
            train,
            seed: self.config.seed,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads the edge and feature files, applying the free-embedding fallback
/// when features are unavailable.
pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    cfg.validate()?;
    if cfg.edges.is_empty() {
        return Err(Error::Config("no edge file given (set `edges`)".into()));
    }
    let mut config = cfg.clone();
    let edge_path = PathBuf::from(&cfg.edges);
    let edge_bytes = read(&edge_path)?;

    let feature_path = (!cfg.features.is_empty()).then(|| PathBuf::from(&cfg.features));
    let feature_bytes = match &feature_path {
        Some(p) if p.exists() || !cfg.free_embedding => Some(read(p)?),
        _ => None,
    };
    let data = parse_dataset(
        edge_bytes.as_slice(),
        &edge_path,
        feature_bytes.as_deref().zip(feature_path.as_deref()),
    )?;
    let n = data.graph.n_drugs();
    let input = match &data.features {
        Some(t) => InputKind::Features { width: t.total_width() },
        None if cfg.free_embedding => {
            log::warn!("no feature data; using a trainable {}-wide embedding and dropping the similarity view", cfg.embedding_dim);
            config.ablation.no_sim = true;
            InputKind::FreeEmbedding {
                n_drugs: n,
                width: cfg.embedding_dim,
            }
        }
        None => {
            return Err(Error::Config(
                "no feature data; give a feature file or enable free_embedding".into(),
            ))
        }
    };
    Ok(Inputs {
        data,
        input,
        config,
        edges_sha256: sha256_hex(&edge_bytes),
        features_sha256: feature_bytes.as_deref().map(sha256_hex),
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// build-views

#[derive(Clone, Debug, PartialEq)]
pub struct ViewStat {
    pub name: &'static str,
    pub nnz: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub isolated: usize,
    pub max_row_sum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSummary {
    pub n_drugs: usize,
    pub n_edges: usize,
    pub views: Vec<ViewStat>,
    pub similarity_omitted: bool,
}

impl ViewSummary {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("view\tnnz\tdensity\tmean_degree\tisolated\tmax_row_sum\n");
        for v in &self.views {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                v.name, v.nnz, v.density, v.mean_degree, v.isolated, v.max_row_sum
            );
        }
        out
    }
}

pub fn summarize(views: &ViewSet) -> Vec<ViewStat> {
    let n = views.n_drugs();
    views
        .named()
        .into_iter()
        .map(|(name, m)| {
            let sums = m.row_sums();
            ViewStat {
                name,
                nnz: m.nnz(),
                density: if n == 0 { 0.0 } else { m.nnz() as f64 / (n * n) as f64 },
                mean_degree: if n == 0 { 0.0 } else { m.nnz() as f64 / n as f64 },
                isolated: (0..n).filter(|&r| m.row_nnz(r) == 0).count(),
                max_row_sum: sums.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Builds every view on the full graph and writes `views_summary.tsv`,
/// `drug_ids.tsv` and `manifest.txt`.
pub fn build_views(cfg: &RunConfig) -> Result<ViewSummary> {
    let inputs = load_inputs(cfg)?;
    let g = &inputs.data.graph;
    let features = if inputs.config.ablation.no_sim { None } else { inputs.data.features.as_ref() };
    let views = ViewSet::build(g, features, cfg.smoothing, "full graph")?;
    let summary = ViewSummary {
        n_drugs: g.n_drugs(),
        n_edges: g.n_edges(),
        views: summarize(&views),
        similarity_omitted: views.sim.is_none(),
    };
    let out = inputs.config.output_path();
    write_file(&out.join("views_summary.tsv"), summary.to_tsv())?;
    write_file(&out.join("drug_ids.tsv"), drug_manifest(g))?;
    write_file(&out.join("manifest.txt"), inputs.manifest())?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// train / ablate

fn resolve_folds(inputs: &Inputs) -> Result<Vec<FoldSplit>> {
    let cfg = &inputs.config;
    if cfg.folds_file.is_empty() {
        make_folds(&inputs.data.graph, cfg.folds, cfg.ratios, cfg.seed)
    } else {
        let path = Path::new(&cfg.folds_file);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let folds = read_fold_manifest(&inputs.data.graph, &text, path)?;
        if folds.len() != cfg.folds {
            return Err(Error::Config(format!(
                "fold manifest has {} folds, configuration asks for {}",
                folds.len(),
                cfg.folds
            )));
        }
        Ok(folds)
    }
}

fn run_cv(inputs: &Inputs, folds: &[FoldSplit], ablation: Ablation) -> Result<CvOutcome> {
    let mut cfg = inputs.config.clone();
    cfg.ablation = ablation;
    let model = cfg.model_config(inputs.input)?;
    let train = cfg.train_config();
    let exp = inputs.experiment(&model, &train);
    let tag = if cfg.symmetric {
        format!("{}+symmetric", ablation.tag())
    } else {
        ablation.tag()
    };
    cross_validate(&exp, folds, &tag)
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub report: EvalReport,
    pub best_fold: usize,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
}

fn scores_tsv(inputs: &Inputs, outcome: &crate::train::FoldOutcome) -> String {
    let g = &inputs.data.graph;
    let mut out = String::from("source\ttarget\tscore\tlabel\n");
    for s in &outcome.test_scores {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", g.id(s.source), g.id(s.target), s.score, u8::from(s.label));
    }
    out
}

/// Cross-validated training. Writes the fold manifest, per-fold test
/// scores, the report, the run manifest and the best fold's checkpoint.
pub fn train(cfg: &RunConfig) -> Result<TrainRun> {
    let inputs = load_inputs(cfg)?;
    let folds = resolve_folds(&inputs)?;
    let out = inputs.config.output_path();
    write_file(&out.join("folds.tsv"), write_fold_manifest(&inputs.data.graph, &folds))?;
    let manifest = inputs.manifest();
    write_file(&out.join("manifest.txt"), &manifest)?;

    let cv = run_cv(&inputs, &folds, inputs.config.ablation)?;
    for o in &cv.folds {
        write_file(&out.join(format!("scores_fold{}.tsv", o.report.fold)), scores_tsv(&inputs, o))?;
    }
    write_file(&out.join("report.tsv"), cv.report.to_tsv())?;
    let ckpt_path = inputs.config.checkpoint_path();
    let ckpt_manifest = format!("{manifest}best_fold = {}\n", cv.best_fold);
    let ckpt = Checkpoint::from_params(ckpt_manifest, &cv.folds[cv.best_fold].params);
    if let Some(parent) = ckpt_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    ckpt.save(&ckpt_path)?;
    Ok(TrainRun {
        report: cv.report,
        best_fold: cv.best_fold,
        checkpoint: ckpt_path,
        output_dir: out,
    })
}

/// Variant order of the ablation table.
pub const ABLATION_ORDER: [&str; 6] = ["no_kan", "no_af", "no_kf", "no_dn", "no_ci", "no_sim"];

/// The full model plus each single-component variant on shared folds.
pub fn ablate(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let inputs = load_inputs(cfg)?;
    let folds = resolve_folds(&inputs)?;
    let out = inputs.config.output_path();
    write_file(&out.join("folds.tsv"), write_fold_manifest(&inputs.data.graph, &folds))?;
    write_file(&out.join("manifest.txt"), inputs.manifest())?;
    let base = inputs.config.ablation;
    let mut variants = vec![base];
    for flag in ABLATION_ORDER {
        let mut a = base;
        let single = Ablation::single(flag).expect("known flag");
        for (slot, on) in [
            (&mut a.no_kan, single.no_kan),
            (&mut a.no_af, single.no_af),
            (&mut a.no_kf, single.no_kf),
            (&mut a.no_dn, single.no_dn),
            (&mut a.no_ci, single.no_ci),
            (&mut a.no_sim, single.no_sim),
        ] {
            *slot |= on;
        }
        variants.push(a);
    }
    let mut reports = Vec::with_capacity(variants.len());
    let mut detail = String::new();
    for a in variants {
        a.validate()?;
        let r = run_cv(&inputs, &folds, a)?.report;
        log::info!("{}: task 1 AUROC {:.4}", r.tag, r.mean("t1_auroc").unwrap_or(f64::NAN));
        detail.push_str(&r.to_tsv());
        reports.push(r);
    }
    write_file(&out.join("ablation.tsv"), comparison_table(&reports))?;
    write_file(&out.join("ablation_folds.tsv"), detail)?;
    Ok(reports)
}

// ---------------------------------------------------------------------------
// predict-topk / evaluate

/// Restores a checkpoint for the configured model over the full graph and
/// ranks the top `k` unknown ordered pairs.
pub fn predict_topk(cfg: &RunConfig, checkpoint: &Path, k: usize) -> Result<Vec<RankedPrediction>> {
    let inputs = load_inputs(cfg)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let g = &inputs.data.graph;
    if let Some(n) = ckpt.manifest_value("n_drugs") {
        if n != g.n_drugs().to_string() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on {n} drugs, data has {}",
                g.n_drugs()
            )));
        }
    }
    let model_cfg = inputs.config.model_config(inputs.input)?;
    let mut model = Mgkan::new(model_cfg, 0)?;
    ckpt.restore_into(&mut model.params)?;
    let features = inputs.data.features.as_ref();
    let views = if inputs.config.symmetric {
        ViewSet::build_symmetric(g, features, cfg.smoothing, "full graph")?
    } else {
        ViewSet::build(g, features, cfg.smoothing, "full graph")?
    };
    let x = features.map(|f| f.dense_features());
    let x = match inputs.input {
        InputKind::Features { .. } => x,
        InputKind::FreeEmbedding { .. } => None,
    };
    let emb = model.embed(&views, x.as_ref())?;
    let ranked = rank_unknown_pairs(&emb, g, k)?;
    write_file(&inputs.config.output_path().join("topk.tsv"), ranked_tsv(&ranked))?;
    Ok(ranked)
}

/// Task 1 metrics from a persisted `source<TAB>target<TAB>score<TAB>label`
/// file.
pub fn evaluate_scores(path: &Path, tau: f64) -> Result<Task1Scores> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("source\t") {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let s: f64 = f[2].trim().parse().map_err(|_| bad(format!("bad score {:?}", f[2])))?;
        let l = match f[3].trim() {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("label must be 0 or 1, found {other:?}"))),
        };
        scores.push(s);
        labels.push(l);
    }
    Task1Scores::compute(&scores, &labels, tau)
}
