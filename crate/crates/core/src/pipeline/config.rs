//! Experiment configuration (TOML) and per-stage fingerprints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::FreezeMask;
use crate::baselines::{PvdmConfig, PvdmGrid, TuningConfig};
use crate::corpus::{DocumentFilter, GeneratorSpec, TokenPolicy};
use crate::evaluate::ClassifierConfig;
use crate::lm::LstmSizes;
use crate::numerics::TrainConfig;
use crate::vectors::Recipe;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Rnn,
    Lstm,
}

/// What the parent LM used for a test fold is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentScope {
    /// One parent per fold, trained on that fold's training documents.
    Fold,
    /// One parent trained on every document.
    Corpus,
}

/// Parameters of [`GeneratorSpec::markov`] plus the sampling seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub genres: usize,
    pub vocabulary: usize,
    pub docs_per_genre: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub fanout: usize,
    pub smoothing: f64,
    pub structure_seed: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            genres: 2,
            vocabulary: 30,
            docs_per_genre: 100,
            min_len: 100,
            max_len: 200,
            fanout: 3,
            smoothing: 0.1,
            structure_seed: 7,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self) -> GeneratorSpec {
        GeneratorSpec::markov(
            self.genres,
            self.vocabulary,
            self.docs_per_genre,
            (self.min_len, self.max_len),
            self.fanout,
            self.smoothing,
            self.structure_seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Manifest of `<path>\t<genre>` lines; relative to the config file.
    pub manifest: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub policy: TokenPolicy,
    pub filter: DocumentFilter,
    /// Genre relabelling applied after filtering.
    pub merge: BTreeMap<String, String>,
    /// Collapse the Brown fiction sub-genres into `fiction`.
    pub merge_brown_fiction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// RNN hidden size `d` or LSTM cell count.
    pub hidden: usize,
    /// LSTM compression width `p`.
    pub compression: usize,
    /// LSTM sigmoid-layer width.
    pub sigmoid: usize,
    /// Word classes `C` of the output layer.
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: ModelFamily::Lstm,
            hidden: 100,
            compression: 100,
            sigmoid: 100,
            classes: 500,
        }
    }
}

impl ModelConfig {
    pub fn lstm_sizes(&self) -> LstmSizes {
        LstmSizes {
            compression: self.compression,
            sigmoid: self.sigmoid,
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub recipes: Vec<Recipe>,
    pub pvdm: PvdmConfig,
    /// Run the PV-DM lattice search on a tuning sample first.
    pub pvdm_search: bool,
    pub pvdm_grid: PvdmGrid,
    pub tuning: TuningConfig,
    /// Apply idf weighting to the class-frequency feature.
    pub class_tf_idf: bool,
    pub random_seed: u64,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            recipes: vec![Recipe::DvLstmDm, Recipe::Tfidf { n: 5, top_k: 10000 }],
            pvdm: PvdmConfig::default(),
            pvdm_search: false,
            pvdm_grid: PvdmGrid::default(),
            tuning: TuningConfig::default(),
            class_tf_idf: false,
            random_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub folds: usize,
    pub seed: u64,
    pub confidence: f64,
    pub classifier: ClassifierConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 1,
            confidence: 0.99,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Artifact directory; relative to the config file.
    pub output_dir: PathBuf,
    pub parent_scope: ParentScope,
    /// Adaptation worker threads; 0 uses every core.
    pub workers: usize,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub parent: TrainConfig,
    pub adapt: TrainConfig,
    /// Parameter groups updated during adaptation; the family default when
    /// absent.
    pub mask: Option<Vec<String>>,
    pub features: FeaturesConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            parent_scope: ParentScope::Fold,
            workers: 0,
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            parent: TrainConfig::default(),
            adapt: TrainConfig::adaptation(),
            mask: None,
            features: FeaturesConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Cluster,
    TrainParent,
    AdaptAll,
    Features,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Cluster,
        Stage::TrainParent,
        Stage::AdaptAll,
        Stage::Features,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::TrainParent => "train-parent",
            Stage::AdaptAll => "adapt-all",
            Stage::Features => "features",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

fn canonical<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config sections serialise")
}

impl ExperimentConfig {
    /// Parses `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(m) = &cfg.corpus.manifest {
            if m.is_relative() {
                cfg.corpus.manifest = Some(base.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.corpus.manifest, &self.corpus.synth) {
            (Some(_), Some(_)) => return bad("set either corpus.manifest or corpus.synth, not both".into()),
            (None, None) => return bad("one of corpus.manifest or corpus.synth is required".into()),
            (Some(m), None) if !m.is_file() => return bad(format!("manifest {} does not exist", m.display())),
            _ => {}
        }
        if self.evaluation.folds < 2 {
            return bad("evaluation.folds must be at least 2".into());
        }
        if self.model.classes < 2 {
            return bad("model.classes must be at least 2".into());
        }
        if self.model.hidden == 0 || self.model.compression == 0 || self.model.sigmoid == 0 {
            return bad("model widths must be positive".into());
        }
        if self.features.recipes.is_empty() {
            return bad("features.recipes is empty".into());
        }
        for r in self.features.recipes.iter().flat_map(Recipe::leaves) {
            let wrong = match self.model.family {
                ModelFamily::Rnn => r.is_lstm(),
                ModelFamily::Lstm => r.is_rnn(),
            };
            if wrong {
                return bad(format!("recipe `{r}` does not match model family {:?}", self.model.family));
            }
        }
        self.parent.validate()?;
        self.adapt.validate()?;
        self.features.pvdm.validate()?;
        self.mask()?;
        Ok(())
    }

    pub fn mask(&self) -> Result<FreezeMask> {
        match (&self.mask, self.model.family) {
            (Some(groups), _) => FreezeMask::new(groups.iter().cloned()),
            (None, ModelFamily::Rnn) => Ok(FreezeMask::rnn_default()),
            (None, ModelFamily::Lstm) => Ok(FreezeMask::lstm_default()),
        }
    }

    /// Adapted recipes any requested recipe depends on.
    pub fn adapted_leaves(&self) -> Vec<Recipe> {
        let mut out: Vec<Recipe> = self
            .features
            .recipes
            .iter()
            .flat_map(Recipe::leaves)
            .filter(Recipe::is_adapted)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Digest of the config sections `stage` depends on, chained through
    /// every upstream stage.
    pub fn fingerprint(&self, stage: Stage) -> String {
        let section = match stage {
            Stage::Ingest => serde_json::json!({
                "corpus": canonical(&self.corpus),
                "folds": self.evaluation.folds,
                "fold_seed": self.evaluation.seed,
            }),
            Stage::Cluster => serde_json::json!({
                "scope": canonical(&self.parent_scope),
                "classes": self.model.classes,
            }),
            Stage::TrainParent => serde_json::json!({
                "model": canonical(&self.model),
                "parent": canonical(&self.parent),
            }),
            Stage::AdaptAll => serde_json::json!({
                "adapt": canonical(&self.adapt),
                "mask": canonical(&self.mask().ok().map(|m| m.groups().map(str::to_owned).collect::<Vec<_>>())),
                "recipes": canonical(&self.adapted_leaves()),
            }),
            Stage::Features => serde_json::json!({
                "features": canonical(&self.features),
            }),
            Stage::Evaluate => serde_json::json!({
                "evaluation": canonical(&self.evaluation),
            }),
            Stage::Report => serde_json::json!({}),
        };
        let upstream = Stage::ALL
            .iter()
            .copied()
            .take_while(|&s| s < stage)
            .last()
            .map(|s| self.fingerprint(s))
            .unwrap_or_default();
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        h.update([0]);
        h.update(upstream.as_bytes());
        h.update([0]);
        h.update(section.to_string().as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_config() -> ExperimentConfig {
        ExperimentConfig {
            corpus: CorpusConfig {
                synth: Some(SynthConfig::default()),
                ..CorpusConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = synth_config();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn fingerprints_chain() {
        let a = synth_config();
        let mut b = a.clone();
        b.evaluation.classifier.l2 = 0.5;
        assert_eq!(a.fingerprint(Stage::Features), b.fingerprint(Stage::Features));
        assert_ne!(a.fingerprint(Stage::Evaluate), b.fingerprint(Stage::Evaluate));
        assert_ne!(a.fingerprint(Stage::Report), b.fingerprint(Stage::Report));
        b.corpus.policy.min_count = 1;
        assert_ne!(a.fingerprint(Stage::Cluster), b.fingerprint(Stage::Cluster));
    }

    #[test]
    fn validation_catches_mismatches() {
        let mut cfg = synth_config();
        cfg.features.recipes = vec![Recipe::DvRnnH];
        assert!(cfg.validate().is_err());
        cfg.model.family = ModelFamily::Rnn;
        cfg.validate().unwrap();
        assert_eq!(cfg.mask().unwrap(), FreezeMask::rnn_default());
        cfg.corpus.synth = None;
        assert!(cfg.validate().is_err());
    }
}
