//! Flat `key = value` run configuration.
//!
//! Every key has a default, may be set in a config file, and may be
//! overridden on the command line under the same name. The resolved
//! configuration is written verbatim into each run's manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Ratios;
use crate::error::{Error, Result};
use crate::fusion::AttentionMode;
use crate::kan::SplineSettings;
use crate::model::{Ablation, InputKind, ModelConfig};
use crate::numeric::AdamConfig;
use crate::train::{NegativeMode, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MGKAN_OUTPUT_DIR";

/// `(key, help)` for every configuration key, in manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("edges", "edge-list TSV (source_id<TAB>target_id)"),
    ("features", "feature TSV (drug_id<TAB>family<TAB>item_id); empty for none"),
    ("output_dir", "output directory (default: $MGKAN_OUTPUT_DIR or ./mgkan-out)"),
    ("checkpoint", "checkpoint path (default: <output_dir>/checkpoint.bin)"),
    ("folds_file", "fold manifest to reuse instead of drawing new folds"),
    ("scores", "scored-pairs TSV for `evaluate`"),
    ("hidden", "hidden width h"),
    ("layers", "GKAN layers per view"),
    ("grid_intervals", "spline grid intervals G"),
    ("spline_order", "spline order k"),
    ("spline_lo", "lower end of the spline domain"),
    ("spline_hi", "upper end of the spline domain"),
    ("input_scale", "factor applied to spline inputs before clamping"),
    ("attention", "attention granularity: per_view or per_drug"),
    ("free_embedding", "use a trainable embedding when features are missing"),
    ("embedding_dim", "width of the free embedding table"),
    ("epochs", "maximum training epochs"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("adam_eps", "Adam epsilon"),
    ("patience", "early-stopping patience in epochs"),
    ("seed", "master random seed"),
    ("folds", "number of cross-validation folds"),
    ("ratios", "train,val,test split ratios"),
    ("tau", "decision threshold"),
    ("negatives", "negative sampling: fixed or per_epoch"),
    ("smoothing", "degree smoothing inside the normalization"),
    ("no_kan", "replace KAN transforms by affine+SiLU"),
    ("no_af", "drop attention fusion"),
    ("no_kf", "drop KAN fusion"),
    ("no_dn", "drop the directed interaction views"),
    ("no_ci", "drop the co-interaction views"),
    ("no_sim", "drop the similarity view"),
    ("symmetric", "direction-blind control model"),
    ("topk", "number of ranked predictions"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub edges: String,
    pub features: String,
    pub output_dir: String,
    pub checkpoint: String,
    pub folds_file: String,
    pub scores: String,
    pub hidden: usize,
    pub layers: usize,
    pub grid_intervals: usize,
    pub spline_order: usize,
    pub spline_lo: f64,
    pub spline_hi: f64,
    pub input_scale: f64,
    pub attention: AttentionMode,
    pub free_embedding: bool,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub seed: u64,
    pub folds: usize,
    pub ratios: Ratios,
    pub tau: f64,
    pub negatives: NegativeMode,
    pub smoothing: f64,
    pub ablation: Ablation,
    pub symmetric: bool,
    pub topk: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            edges: String::new(),
            features: String::new(),
            output_dir: String::new(),
            checkpoint: String::new(),
            folds_file: String::new(),
            scores: String::new(),
            hidden: 64,
            layers: 2,
            grid_intervals: 5,
            spline_order: 3,
            spline_lo: -1.0,
            spline_hi: 1.0,
            input_scale: 1.0,
            attention: AttentionMode::PerView,
            free_embedding: false,
            embedding_dim: 64,
            epochs: 500,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            patience: 30,
            seed: 42,
            folds: 5,
            ratios: Ratios::default(),
            tau: 0.5,
            negatives: NegativeMode::Fixed,
            smoothing: crate::views::DEFAULT_SMOOTHING,
            ablation: Ablation::default(),
            symmetric: false,
            topk: 10,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "edges" => self.edges = v.into(),
            "features" => self.features = v.into(),
            "output_dir" => self.output_dir = v.into(),
            "checkpoint" => self.checkpoint = v.into(),
            "folds_file" => self.folds_file = v.into(),
            "scores" => self.scores = v.into(),
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "grid_intervals" => self.grid_intervals = parse(key, v)?,
            "spline_order" => self.spline_order = parse(key, v)?,
            "spline_lo" => self.spline_lo = parse(key, v)?,
            "spline_hi" => self.spline_hi = parse(key, v)?,
            "input_scale" => self.input_scale = parse(key, v)?,
            "attention" => {
                self.attention = AttentionMode::parse(v)
                    .ok_or_else(|| Error::Config(format!("attention must be per_view or per_drug, got {v:?}")))?
            }
            "free_embedding" => self.free_embedding = parse_bool(key, v)?,
            "embedding_dim" => self.embedding_dim = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "ratios" => {
                let parts: Vec<f64> = v.split(',').map(|p| parse(key, p)).collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(Error::Config(format!("ratios needs three values, got {v:?}")));
                }
                self.ratios = Ratios {
                    train: parts[0],
                    val: parts[1],
                    test: parts[2],
                };
            }
            "tau" => self.tau = parse(key, v)?,
            "negatives" => {
                self.negatives = NegativeMode::parse(v)
                    .ok_or_else(|| Error::Config(format!("negatives must be fixed or per_epoch, got {v:?}")))?
            }
            "smoothing" => self.smoothing = parse(key, v)?,
            "no_kan" => self.ablation.no_kan = parse_bool(key, v)?,
            "no_af" => self.ablation.no_af = parse_bool(key, v)?,
            "no_kf" => self.ablation.no_kf = parse_bool(key, v)?,
            "no_dn" => self.ablation.no_dn = parse_bool(key, v)?,
            "no_ci" => self.ablation.no_ci = parse_bool(key, v)?,
            "no_sim" => self.ablation.no_sim = parse_bool(key, v)?,
            "symmetric" => self.symmetric = parse_bool(key, v)?,
            "topk" => self.topk = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Textual value of one key, as written to manifests.
    pub fn get(&self, key: &str) -> Option<String> {
        let a = self.ablation;
        Some(match key {
            "edges" => self.edges.clone(),
            "features" => self.features.clone(),
            "output_dir" => self.output_dir.clone(),
            "checkpoint" => self.checkpoint.clone(),
            "folds_file" => self.folds_file.clone(),
            "scores" => self.scores.clone(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "grid_intervals" => self.grid_intervals.to_string(),
            "spline_order" => self.spline_order.to_string(),
            "spline_lo" => self.spline_lo.to_string(),
            "spline_hi" => self.spline_hi.to_string(),
            "input_scale" => self.input_scale.to_string(),
            "attention" => self.attention.name().into(),
            "free_embedding" => self.free_embedding.to_string(),
            "embedding_dim" => self.embedding_dim.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "folds" => self.folds.to_string(),
            "ratios" => format!("{},{},{}", self.ratios.train, self.ratios.val, self.ratios.test),
            "tau" => self.tau.to_string(),
            "negatives" => self.negatives.name().into(),
            "smoothing" => self.smoothing.to_string(),
            "no_kan" => a.no_kan.to_string(),
            "no_af" => a.no_af.to_string(),
            "no_kf" => a.no_kf.to_string(),
            "no_dn" => a.no_dn.to_string(),
            "no_ci" => a.no_ci.to_string(),
            "no_sim" => a.no_sim.to_string(),
            "symmetric" => self.symmetric.to_string(),
            "topk" => self.topk.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected key = value, found {raw:?}"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Every key in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.ablation.validate()?;
        self.ratios.validate()?;
        self.spline_settings()?;
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("embedding_dim", self.embedding_dim),
            ("folds", self.folds),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (k, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{k} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("smoothing must be non-negative".into()));
        }
        Ok(())
    }

    pub fn spline_settings(&self) -> Result<SplineSettings> {
        SplineSettings::new(
            self.spline_lo,
            self.spline_hi,
            self.grid_intervals,
            self.spline_order,
            self.input_scale,
        )
    }

    pub fn model_config(&self, input: InputKind) -> Result<ModelConfig> {
        Ok(ModelConfig {
            input,
            hidden: self.hidden,
            layers: self.layers,
            spline: self.spline_settings()?,
            attention: self.attention,
            ablation: self.ablation,
            symmetric: self.symmetric,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            tau: self.tau,
            negatives: self.negatives,
            smoothing: self.smoothing,
        }
    }

    /// `output_dir`, else `$MGKAN_OUTPUT_DIR`, else `./mgkan-out`.
    pub fn output_path(&self) -> PathBuf {
        if !self.output_dir.is_empty() {
            return PathBuf::from(&self.output_dir);
        }
        match std::env::var(OUTPUT_DIR_ENV) {
            Ok(d) if !d.is_empty() => PathBuf::from(d),
            _ => PathBuf::from("mgkan-out"),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.is_empty() {
            self.output_path().join("checkpoint.bin")
        } else {
            PathBuf::from(&self.checkpoint)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = RunConfig::default();
        for (key, _) in KEYS {
            let v = cfg.get(key).unwrap();
            let mut c2 = RunConfig::default();
            c2.set(key, &v).unwrap();
            assert_eq!(c2, cfg, "{key}");
        }
        let mut back = RunConfig::default();
        back.hidden = 7;
        back.apply_text(&cfg.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut c = RunConfig::default();
        c.set("no_af", "true").unwrap();
        c.set("no_kf", "true").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.set("ratios", "0.7,0.1,0.1").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().set("bogus", "1").is_err());
        assert!(RunConfig::default().set("hidden", "-3").is_err());
    }

    #[test]
    fn config_file_errors_carry_line_numbers() {
        let mut c = RunConfig::default();
        let err = c.apply_text("# comment\nhidden = 8\nlr 0.1\n", Path::new("run.cfg")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert_eq!(c.hidden, 8);
    }
}
