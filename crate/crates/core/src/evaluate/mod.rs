//! Genre classification over document vectors: classifiers, stratified
//! cross-validation, weighted F-scores, paired t-tests and reports.

mod classifier;
mod lbfgs;
mod metrics;

use std::fmt::Write as _;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use classifier::{train_classifier, ClassifierConfig, ClassifierKind, LinearClassifier, Standardizer};
pub use lbfgs::{minimize, LbfgsConfig, LbfgsResult};
pub use metrics::{paired_ttest, tallies, weighted_fscore, GenreTally, TTest};

use crate::corpus::LabeledCorpus;
use crate::{Error, Result};

/// Fold index of every document: genres are shuffled internally (seeded),
/// concatenated in genre order, and position `p` goes to fold `p mod k`.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} documents cannot fill {folds} folds",
            labels.len()
        )));
    }
    let num_genres = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut pos = 0;
    for g in 0..num_genres {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        if !members.is_empty() && members.len() < folds {
            warn!(
                "genre {g} has {} documents, fewer than {folds} folds; some folds will lack it",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = pos % folds;
            pos += 1;
        }
    }
    Ok(assignment)
}

/// Training and test indices of fold `k`.
pub fn fold_split(assignment: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != k)
}

/// Feature rows for one fold, fitted on the training documents only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldFeatures {
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

/// Produces features for a cross-validation fold.
pub trait FoldFeaturizer: Sync {
    fn name(&self) -> String;
    fn featurize(&self, fold: usize, train: &[usize], test: &[usize]) -> Result<FoldFeatures>;
}

/// Fold-independent features (one row per document).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedFeatures {
    pub name: String,
    pub rows: Vec<Vec<f64>>,
}

impl FoldFeaturizer for FixedFeatures {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn featurize(&self, _: usize, train: &[usize], test: &[usize]) -> Result<FoldFeatures> {
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.rows[i].clone()).collect();
        Ok(FoldFeatures {
            train: pick(train),
            test: pick(test),
        })
    }
}

/// Features computed separately for each fold: `folds[k][doc]` is the row
/// of every document under the fold-`k` fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PerFoldFeatures {
    pub name: String,
    pub folds: Vec<Vec<Vec<f64>>>,
}

impl FoldFeaturizer for PerFoldFeatures {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn featurize(&self, fold: usize, train: &[usize], test: &[usize]) -> Result<FoldFeatures> {
        let rows = self
            .folds
            .get(fold)
            .ok_or_else(|| Error::InvalidArgument(format!("no features for fold {fold}")))?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| rows[i].clone()).collect();
        Ok(FoldFeatures {
            train: pick(train),
            test: pick(test),
        })
    }
}

/// Seeded standard-normal vectors, a no-signal control feature.
pub fn random_features(docs: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Cross-validated result of one feature recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResult {
    pub recipe: String,
    pub dim: usize,
    pub fold_scores: Vec<f64>,
    pub mean_fscore: f64,
    /// Per fold: test document indices, predicted and gold genre indices.
    pub test_indices: Vec<Vec<usize>>,
    pub predictions: Vec<Vec<usize>>,
    pub golds: Vec<Vec<usize>>,
}

/// Feature dimension, test indices, predictions, golds and weighted F of one fold.
type FoldOutcome = (usize, Vec<usize>, Vec<usize>, Vec<usize>, f64);

/// Runs every fold of `assignment` with features from `featurizer`.
pub fn cross_validate_assignment(
    labels: &[usize],
    num_classes: usize,
    assignment: &[usize],
    featurizer: &dyn FoldFeaturizer,
    cfg: &ClassifierConfig,
) -> Result<FeatureResult> {
    if labels.len() != assignment.len() {
        return Err(Error::Shape("fold assignment and labels differ in length".into()));
    }
    let folds = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let per_fold: Vec<FoldOutcome> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (train, test) = fold_split(assignment, k);
            let feats = featurizer.featurize(k, &train, &test)?;
            let dim = feats.train.first().map_or(0, Vec::len);
            let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let clf = train_classifier(&feats.train, &y, num_classes, cfg)?;
            let preds = clf.predict_all(&feats.test)?;
            let golds: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            let f = weighted_fscore(&preds, &golds)?;
            Ok((dim, test, preds, golds, f))
        })
        .collect::<Result<_>>()?;
    let name = featurizer.name();
    let mut out = FeatureResult {
        recipe: name.clone(),
        dim: per_fold.first().map_or(0, |p| p.0),
        fold_scores: Vec::with_capacity(folds),
        mean_fscore: 0.0,
        test_indices: Vec::new(),
        predictions: Vec::new(),
        golds: Vec::new(),
    };
    for (_, test, preds, golds, f) in per_fold {
        out.fold_scores.push(f);
        out.test_indices.push(test);
        out.predictions.push(preds);
        out.golds.push(golds);
    }
    out.mean_fscore = out.fold_scores.iter().sum::<f64>() / folds as f64;
    info!("{name}: mean weighted F {:.4}", out.mean_fscore);
    Ok(out)
}

/// Stratified `folds`-fold cross-validation of one feature over `corpus`.
pub fn cross_validate(
    corpus: &LabeledCorpus,
    featurizer: &dyn FoldFeaturizer,
    folds: usize,
    seed: u64,
    cfg: &ClassifierConfig,
) -> Result<FeatureResult> {
    let labels = corpus.labels();
    let assignment = stratified_folds(&labels, folds, seed)?;
    cross_validate_assignment(&labels, corpus.num_genres(), &assignment, featurizer, cfg)
}

/// Paired t-test verdict between two recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    #[serde(with = "nonfinite")]
    pub t: f64,
    pub df: usize,
    pub significant: bool,
}

mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Text(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("bad t statistic `{s}`"))),
        }
    }
}

/// Cross-validation results for several recipes on shared folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub genres: Vec<String>,
    pub folds: usize,
    pub confidence: f64,
    pub features: Vec<FeatureResult>,
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    /// Collects results and runs the t-test on every ordered pair.
    pub fn assemble(
        fingerprint: &str,
        genres: Vec<String>,
        features: Vec<FeatureResult>,
        confidence: f64,
    ) -> Result<Self> {
        let folds = features.first().map_or(0, |f| f.fold_scores.len());
        if features.iter().any(|f| f.fold_scores.len() != folds) {
            return Err(Error::InvalidArgument("features were evaluated on different fold counts".into()));
        }
        let mut comparisons = Vec::new();
        for a in &features {
            for b in &features {
                if a.recipe == b.recipe {
                    continue;
                }
                let t = paired_ttest(&a.fold_scores, &b.fold_scores, confidence)?;
                comparisons.push(Comparison {
                    a: a.recipe.clone(),
                    b: b.recipe.clone(),
                    t: t.t,
                    df: t.df,
                    significant: t.significant,
                });
            }
        }
        Ok(Self {
            fingerprint: fingerprint.to_owned(),
            genres,
            folds,
            confidence,
            features,
            comparisons,
        })
    }

    pub fn feature(&self, recipe: &str) -> Option<&FeatureResult> {
        self.features.iter().find(|f| f.recipe == recipe)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("report", e.to_string()))
    }

    /// One row per recipe with mean and per-fold F, then the significance
    /// matrix (`+` a significantly better, `-` worse, `.` neither).
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# fingerprint {}", self.fingerprint);
        s.push_str("recipe\tdim\tmean_f");
        for k in 0..self.folds {
            let _ = write!(s, "\tfold{k}");
        }
        s.push('\n');
        for f in &self.features {
            let _ = write!(s, "{}\t{}\t{:.6}", f.recipe, f.dim, f.mean_fscore);
            for v in &f.fold_scores {
                let _ = write!(s, "\t{v:.6}");
            }
            s.push('\n');
        }
        s.push_str("\nsignificance");
        for f in &self.features {
            let _ = write!(s, "\t{}", f.recipe);
        }
        s.push('\n');
        for a in &self.features {
            s.push_str(&a.recipe);
            for b in &self.features {
                let mark = match self.comparison(&a.recipe, &b.recipe) {
                    None => "",
                    Some(c) if c.significant && c.t > 0.0 => "+",
                    Some(c) if c.significant => "-",
                    Some(_) => ".",
                };
                let _ = write!(s, "\t{mark}");
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable table: feature, dimension, F-score, and the recipes
    /// each feature beats significantly.
    pub fn summary(&self) -> String {
        let width = self.features.iter().map(|f| f.recipe.len()).max().unwrap_or(7).max(7);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Genre classification, {} genres, {}-fold CV (paired t-test at {})",
            self.genres.len(),
            self.folds,
            self.confidence
        );
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>7}  better than", "feature", "dim", "F");
        for f in &self.features {
            let beats: Vec<&str> = self
                .comparisons
                .iter()
                .filter(|c| c.a == f.recipe && c.significant && c.t > 0.0)
                .map(|c| c.b.as_str())
                .collect();
            let _ = writeln!(
                s,
                "{:<width$}  {:>7}  {:>7.4}  {}",
                f.recipe,
                f.dim,
                f.mean_fscore,
                if beats.is_empty() { "-".to_owned() } else { beats.join(", ") }
            );
        }
        s
    }
}
