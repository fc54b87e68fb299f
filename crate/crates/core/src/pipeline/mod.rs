//! Staged experiment runner behind the `docvec` binary.
//!
//! Stages read their inputs from and write their outputs to the configured
//! output directory:
//!
//! | stage        | writes                                              |
//! |--------------|-----------------------------------------------------|
//! | ingest       | `corpus.cache`, `folds.tsv`                         |
//! | cluster      | `classes/<unit>.tsv`                                |
//! | train-parent | `parents/<unit>.ckpt`, `parents/<unit>.log`         |
//! | adapt-all    | `adapted/<unit>/<recipe>.dv`, `adapted/<unit>/perplexity.tsv` |
//! | features     | `features/fold<k>/<recipe>.dv`, `features/pvdm_grid.json` |
//! | evaluate     | `report.json`                                       |
//! | report       | `report.tsv`, `report.txt`                          |
//!
//! A unit is one fold's training set (`fold<k>`) or, with the corpus parent
//! scope, the whole corpus (`corpus`).

mod artifacts;
mod config;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

pub use artifacts::{read_dv, read_text, stamp_status, write_dv, write_text, StampStatus};
pub use config::{
    CorpusConfig, EvaluationConfig, ExperimentConfig, FeaturesConfig, ModelConfig, ModelFamily, ParentScope,
    Stage, SynthConfig,
};

use crate::adaptation::{adapt, concat_features, dv_lstm, dv_rnn, FreezeMask};
use crate::baselines::{ngram_tfidf, pvdm_features, pvdm_grid_search, GridSearch, PvdmConfig};
use crate::corpus::{
    brown_fiction_merge, filter_documents, load_corpus_report, merge_genres, synth_corpus, DocumentFilter,
    LabeledCorpus,
};
use crate::evaluate::{
    cross_validate_assignment, random_features, stratified_folds, EvalReport, FeatureResult, PerFoldFeatures,
};
use crate::lm::{lstm_train, rnn_train, LanguageModel, LstmLm, RnnLm, TrainReport};
use crate::numerics::{Precision, Real, TrainConfig};
use crate::vectors::{DocumentVector, DvRecord, Recipe};
use crate::word_classes::{brown_cluster, class_tf_vector, ClassWeighting, WordClassMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Training set of one parent model.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Unit {
    name: String,
    train: Vec<usize>,
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    force: bool,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    /// `workers` overrides the config's worker count when given.
    pub fn new(cfg: ExperimentConfig, force: bool, workers: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let n = workers.unwrap_or(cfg.workers);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { cfg, force, pool })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::ALL.iter().map(|&s| Ok((s, self.run(s)?))).collect()
    }

    /// Runs `stage` unless its stamp matches the current fingerprint.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        let fp = self.cfg.fingerprint(stage);
        let out = &self.cfg.output_dir;
        match artifacts::stamp_status(out, stage.name(), &fp)? {
            StampStatus::Current if !self.force => {
                info!("{}: up to date, skipping", stage.name());
                return Ok(StageOutcome::Skipped);
            }
            StampStatus::Stale(found) if !self.force => {
                return Err(Error::FingerprintMismatch {
                    path: artifacts::stamp_path(out, stage.name()),
                    found,
                    expected: fp,
                });
            }
            _ => {}
        }
        info!("{}: running", stage.name());
        artifacts::remove_stamp(out, stage.name())?;
        self.pool.install(|| match stage {
            Stage::Ingest => self.ingest(&fp),
            Stage::Cluster => self.cluster(&fp),
            Stage::TrainParent => self.train_parents(&fp),
            Stage::AdaptAll => self.adapt_all(&fp),
            Stage::Features => self.features(&fp),
            Stage::Evaluate => self.evaluate(&fp),
            Stage::Report => self.report(&fp).map(|_| ()),
        })?;
        artifacts::write_stamp(out, stage.name(), &fp)?;
        Ok(StageOutcome::Ran)
    }

    // ---- inputs shared by several stages ----

    fn corpus(&self) -> Result<LabeledCorpus> {
        let body = read_text(
            &self.path("corpus.cache"),
            "corpus",
            &self.cfg.fingerprint(Stage::Ingest),
        )?;
        LabeledCorpus::from_cache_str(&body)
    }

    /// Fold of every document, in corpus order.
    fn folds(&self, corpus: &LabeledCorpus) -> Result<Vec<usize>> {
        let path = self.path("folds.tsv");
        let body = read_text(&path, "folds", &self.cfg.fingerprint(Stage::Ingest))?;
        let by_id: HashMap<&str, usize> = body
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .map(|(id, k)| k.parse().map(|k| (id, k)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("fold list", format!("bad fold index in {}", path.display())))?;
        corpus
            .documents()
            .iter()
            .map(|d| {
                by_id
                    .get(d.id())
                    .copied()
                    .ok_or_else(|| Error::format("fold list", format!("no fold for document {}", d.id())))
            })
            .collect()
    }

    fn units(&self, corpus: &LabeledCorpus, folds: &[usize]) -> Vec<Unit> {
        match self.cfg.parent_scope {
            ParentScope::Corpus => vec![Unit {
                name: "corpus".into(),
                train: (0..corpus.len()).collect(),
            }],
            ParentScope::Fold => (0..self.cfg.evaluation.folds)
                .map(|k| Unit {
                    name: format!("fold{k}"),
                    train: (0..corpus.len()).filter(|&i| folds[i] != k).collect(),
                })
                .collect(),
        }
    }

    fn unit_of_fold(&self, k: usize) -> String {
        match self.cfg.parent_scope {
            ParentScope::Corpus => "corpus".into(),
            ParentScope::Fold => format!("fold{k}"),
        }
    }

    /// Every document under the vocabulary of the unit's training set.
    fn unit_corpus(&self, corpus: &LabeledCorpus, unit: &Unit) -> Result<LabeledCorpus> {
        corpus.revocabulate(&unit.train)
    }

    fn class_map(&self, unit_corpus: &LabeledCorpus, unit: &str) -> Result<WordClassMap> {
        let body = read_text(
            &self.path(format!("classes/{unit}.tsv")),
            "classes",
            &self.cfg.fingerprint(Stage::Cluster),
        )?;
        WordClassMap::import(&body, unit_corpus.vocabulary())
    }

    // ---- stages ----

    fn ingest(&self, fp: &str) -> Result<()> {
        let c = &self.cfg.corpus;
        let mut corpus = match (&c.manifest, &c.synth) {
            (Some(m), _) => {
                let report = load_corpus_report(m, &c.policy)?;
                for id in &report.skipped_empty {
                    warn!("excluded empty document {}", id.display());
                }
                report.corpus
            }
            (None, Some(s)) => synth_corpus(&s.spec(), s.seed)?,
            (None, None) => return Err(Error::Config("no corpus source".into())),
        };
        if c.filter != DocumentFilter::default() {
            corpus = filter_documents(&corpus, &c.filter)?;
        }
        let mut mapping = c.merge.clone();
        if c.merge_brown_fiction {
            for (from, to) in brown_fiction_merge() {
                if corpus.genre_index(&from).is_some() {
                    mapping.entry(from).or_insert(to);
                }
            }
        }
        if !mapping.is_empty() {
            corpus = merge_genres(&corpus, &mapping)?;
        }
        info!(
            "ingested {} documents in {} genres, vocabulary {}",
            corpus.len(),
            corpus.num_genres(),
            corpus.vocabulary().len()
        );
        let folds = stratified_folds(&corpus.labels(), self.cfg.evaluation.folds, self.cfg.evaluation.seed)?;
        let mut body = String::new();
        for (d, k) in corpus.documents().iter().zip(&folds) {
            let _ = writeln!(body, "{}\t{k}", d.id());
        }
        write_text(&self.path("corpus.cache"), "corpus", fp, &corpus.to_cache_string())?;
        write_text(&self.path("folds.tsv"), "folds", fp, &body)
    }

    fn cluster(&self, fp: &str) -> Result<()> {
        let corpus = self.corpus()?;
        let folds = self.folds(&corpus)?;
        let units = self.units(&corpus, &folds);
        units.par_iter().try_for_each(|u| {
            let uc = self.unit_corpus(&corpus, u)?;
            let map = brown_cluster(&uc.select(&u.train)?, self.cfg.model.classes)?;
            info!("{}: {} classes over {} words", u.name, map.num_classes(), map.vocab_size());
            write_text(
                &self.path(format!("classes/{}.tsv", u.name)),
                "classes",
                fp,
                &map.export(uc.vocabulary()),
            )
        })
    }

    fn train_parents(&self, fp: &str) -> Result<()> {
        let corpus = self.corpus()?;
        let folds = self.folds(&corpus)?;
        let units = self.units(&corpus, &folds);
        units.par_iter().try_for_each(|u| {
            let uc = self.unit_corpus(&corpus, u)?;
            let map = self.class_map(&uc, &u.name)?;
            let train = uc.select(&u.train)?;
            match self.cfg.parent.precision {
                Precision::Fp32 => self.train_parent::<f32>(&train, &map, &u.name, fp),
                Precision::Fp64 => self.train_parent::<f64>(&train, &map, &u.name, fp),
            }
        })
    }

    fn train_parent<T: Real>(&self, train: &LabeledCorpus, map: &WordClassMap, unit: &str, fp: &str) -> Result<()> {
        let m = &self.cfg.model;
        let (ck, report) = match m.family {
            ModelFamily::Rnn => {
                let (model, r) = rnn_train::<T>(train, &self.cfg.parent, m.hidden, map)?;
                (model.to_checkpoint(), r)
            }
            ModelFamily::Lstm => {
                let (model, r) = lstm_train::<T>(train, &self.cfg.parent, m.lstm_sizes(), map)?;
                (model.to_checkpoint(), r)
            }
        };
        write_text(&self.path(format!("parents/{unit}.log")), "train-log", fp, &train_log(&report))?;
        artifacts::write_checkpoint(&self.path(format!("parents/{unit}.ckpt")), fp, ck)
    }

    fn adapt_all(&self, fp: &str) -> Result<()> {
        let corpus = self.corpus()?;
        let folds = self.folds(&corpus)?;
        let recipes = self.cfg.adapted_leaves();
        if recipes.is_empty() {
            info!("no adapted recipes requested");
            return Ok(());
        }
        let mask = self.cfg.mask()?;
        for u in self.units(&corpus, &folds) {
            let uc = self.unit_corpus(&corpus, &u)?;
            match self.cfg.adapt.precision {
                Precision::Fp32 => self.adapt_unit::<f32>(&uc, &u.name, &mask, &recipes, fp)?,
                Precision::Fp64 => self.adapt_unit::<f64>(&uc, &u.name, &mask, &recipes, fp)?,
            }
        }
        Ok(())
    }

    fn adapt_unit<T: Real>(
        &self,
        uc: &LabeledCorpus,
        unit: &str,
        mask: &FreezeMask,
        recipes: &[Recipe],
        fp: &str,
    ) -> Result<()> {
        let parent_fp = self.cfg.fingerprint(Stage::TrainParent);
        let ck = artifacts::read_checkpoint::<T>(&self.path(format!("parents/{unit}.ckpt")), &parent_fp)?;
        let rows = match self.cfg.model.family {
            ModelFamily::Rnn => {
                let parent = RnnLm::<T>::from_checkpoint(&ck)?;
                adapt_corpus(&parent, uc, mask, &self.cfg.adapt, |m| {
                    recipes.iter().map(|r| dv_rnn(m, r)).collect()
                })?
            }
            ModelFamily::Lstm => {
                let parent = LstmLm::<T>::from_checkpoint(&ck)?;
                adapt_corpus(&parent, uc, mask, &self.cfg.adapt, |m| {
                    let v = dv_lstm(m);
                    recipes.iter().map(|r| v.get(r)).collect()
                })?
            }
        };
        let improved = rows.iter().filter(|r| r.adapted_ppl < r.parent_ppl).count();
        info!("{unit}: adaptation lowered perplexity for {improved} of {} documents", rows.len());
        let mut ppl = String::from("doc\tparent_ppl\tadapted_ppl\tbest_epoch\n");
        for (d, r) in uc.documents().iter().zip(&rows) {
            let _ = writeln!(ppl, "{}\t{:?}\t{:?}\t{}", d.id(), r.parent_ppl, r.adapted_ppl, r.best_epoch);
        }
        write_text(&self.path(format!("adapted/{unit}/perplexity.tsv")), "adaptation", fp, &ppl)?;
        for (j, recipe) in recipes.iter().enumerate() {
            let records: Vec<DvRecord> = uc
                .documents()
                .iter()
                .zip(&rows)
                .map(|(d, r)| DvRecord {
                    doc_id: d.id().to_owned(),
                    vector: r.vectors[j].clone(),
                })
                .collect();
            write_dv(&self.path(format!("adapted/{unit}/{recipe}.dv")), fp, &records)?;
        }
        Ok(())
    }

    fn features(&self, fp: &str) -> Result<()> {
        let corpus = self.corpus()?;
        let folds = self.folds(&corpus)?;
        let f = &self.cfg.features;
        let pvdm_cfg = if f.pvdm_search && self.needs(&Recipe::Pvdm) {
            let search = pvdm_grid_search(&corpus, &f.pvdm, &f.pvdm_grid, &f.tuning, &self.cfg.evaluation.classifier)?;
            info!(
                "PV-DM search: best of {} configurations has tuning F {:.4}",
                search.evaluated.len(),
                search.best_fscore
            );
            let json = serde_json::to_string_pretty(&search).expect("grid search serialises");
            write_text(&self.path("features/pvdm_grid.json"), "pvdm-grid", fp, &json)?;
            search.best
        } else {
            f.pvdm.clone()
        };
        let ids: Vec<&str> = corpus.documents().iter().map(|d| d.id()).collect();
        for k in 0..self.cfg.evaluation.folds {
            let train: Vec<usize> = (0..corpus.len()).filter(|&i| folds[i] != k).collect();
            let mut cache: HashMap<Recipe, Vec<DocumentVector>> = HashMap::new();
            for recipe in &f.recipes {
                let vectors = self.recipe_vectors(recipe, &corpus, k, &train, &pvdm_cfg, &mut cache)?;
                let records: Vec<DvRecord> = ids
                    .iter()
                    .zip(vectors)
                    .map(|(id, v)| DvRecord {
                        doc_id: (*id).to_owned(),
                        vector: v,
                    })
                    .collect();
                write_dv(&self.path(format!("features/fold{k}/{recipe}.dv")), fp, &records)?;
            }
        }
        Ok(())
    }

    fn needs(&self, leaf: &Recipe) -> bool {
        self.cfg.features.recipes.iter().flat_map(Recipe::leaves).any(|r| &r == leaf)
    }

    fn recipe_vectors(
        &self,
        recipe: &Recipe,
        corpus: &LabeledCorpus,
        fold: usize,
        train: &[usize],
        pvdm: &PvdmConfig,
        cache: &mut HashMap<Recipe, Vec<DocumentVector>>,
    ) -> Result<Vec<DocumentVector>> {
        if let Some(v) = cache.get(recipe) {
            return Ok(v.clone());
        }
        let vectors = match recipe {
            Recipe::Concat(parts) => {
                let mut acc: Option<Vec<DocumentVector>> = None;
                for p in parts {
                    let next = self.recipe_vectors(p, corpus, fold, train, pvdm, cache)?;
                    acc = Some(match acc {
                        None => next,
                        Some(prev) => prev.iter().zip(&next).map(|(a, b)| concat_features(a, b)).collect(),
                    });
                }
                acc.unwrap_or_default()
            }
            r if r.is_adapted() => {
                let unit = self.unit_of_fold(fold);
                let path = self.path(format!("adapted/{unit}/{r}.dv"));
                let records = read_dv(&path, &self.cfg.fingerprint(Stage::AdaptAll))?;
                let by_id: HashMap<String, DocumentVector> =
                    records.into_iter().map(|r| (r.doc_id, r.vector)).collect();
                corpus
                    .documents()
                    .iter()
                    .map(|d| {
                        by_id.get(d.id()).cloned().ok_or_else(|| {
                            Error::format("DV export", format!("{} lacks document {}", path.display(), d.id()))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            Recipe::Tfidf { n, top_k } => ngram_tfidf(corpus.documents(), train, *n, *top_k)?.1,
            Recipe::ClassTf => {
                let unit = self.unit_of_fold(fold);
                let unit_train = match self.cfg.parent_scope {
                    ParentScope::Corpus => (0..corpus.len()).collect(),
                    ParentScope::Fold => train.to_vec(),
                };
                let uc = corpus.revocabulate(&unit_train)?;
                let map = self.class_map(&uc, &unit)?;
                let weighting = if self.cfg.features.class_tf_idf {
                    ClassWeighting::fit_idf(train.iter().map(|&i| &uc.documents()[i]), &map)
                } else {
                    ClassWeighting::Tf
                };
                uc.documents()
                    .iter()
                    .map(|d| class_tf_vector(d, &map, &weighting))
                    .collect::<Result<_>>()?
            }
            Recipe::Pvdm => pvdm_features(corpus.documents(), train, pvdm)?,
            Recipe::Random { dim } => random_features(corpus.len(), *dim, self.cfg.features.random_seed)
                .into_iter()
                .map(|v| DocumentVector::new(v, recipe.clone()))
                .collect(),
            other => return Err(Error::InvalidArgument(format!("unsupported recipe `{other}`"))),
        };
        cache.insert(recipe.clone(), vectors.clone());
        Ok(vectors)
    }

    fn evaluate(&self, fp: &str) -> Result<()> {
        let corpus = self.corpus()?;
        let folds = self.folds(&corpus)?;
        let labels = corpus.labels();
        let features_fp = self.cfg.fingerprint(Stage::Features);
        let mut results: Vec<FeatureResult> = Vec::new();
        for recipe in &self.cfg.features.recipes {
            let mut per_fold = Vec::with_capacity(self.cfg.evaluation.folds);
            for k in 0..self.cfg.evaluation.folds {
                let records = read_dv(&self.path(format!("features/fold{k}/{recipe}.dv")), &features_fp)?;
                if records.len() != corpus.len() || records.iter().zip(corpus.documents()).any(|(r, d)| r.doc_id != d.id()) {
                    return Err(Error::format("DV export", format!("fold {k} `{recipe}` does not match the corpus")));
                }
                per_fold.push(records.into_iter().map(|r| r.vector.values).collect());
            }
            let feats = PerFoldFeatures {
                name: recipe.to_string(),
                folds: per_fold,
            };
            results.push(cross_validate_assignment(
                &labels,
                corpus.num_genres(),
                &folds,
                &feats,
                &self.cfg.evaluation.classifier,
            )?);
        }
        let genres = corpus.genres().iter().map(|g| g.genre.clone()).collect();
        let report = EvalReport::assemble(fp, genres, results, self.cfg.evaluation.confidence)?;
        write_text(&self.path("report.json"), "report", fp, &report.to_json())
    }

    fn report(&self, fp: &str) -> Result<EvalReport> {
        let body = read_text(&self.path("report.json"), "report", &self.cfg.fingerprint(Stage::Evaluate))?;
        let report = EvalReport::from_json(&body)?;
        write_text(&self.path("report.tsv"), "report-table", fp, &report.to_tsv())?;
        write_text(&self.path("report.txt"), "report-summary", fp, &report.summary())?;
        Ok(report)
    }

    /// The evaluation report of a completed run.
    pub fn load_report(&self) -> Result<EvalReport> {
        let body = read_text(&self.path("report.json"), "report", &self.cfg.fingerprint(Stage::Evaluate))?;
        EvalReport::from_json(&body)
    }

    /// Parsed PV-DM grid search, when one was run.
    pub fn load_grid_search(&self) -> Result<GridSearch> {
        let body = read_text(
            &self.path("features/pvdm_grid.json"),
            "pvdm-grid",
            &self.cfg.fingerprint(Stage::Features),
        )?;
        serde_json::from_str(&body).map_err(|e| Error::format("grid search", e.to_string()))
    }
}

fn train_log(report: &TrainReport) -> String {
    let mut s = format!("initial_validation_ppl\t{:?}\n", report.initial_validation_perplexity);
    s.push_str("epoch\tlr\ttrain_loss\tvalidation_ppl\taccepted\n");
    for e in &report.epochs {
        let _ = writeln!(
            s,
            "{}\t{:?}\t{:?}\t{:?}\t{}",
            e.epoch, e.learning_rate, e.train_loss, e.validation_perplexity, e.accepted
        );
    }
    s
}

/// Adaptation outcome and vectors of one document.
#[derive(Debug, Clone)]
pub struct AdaptedRow {
    pub parent_ppl: f64,
    pub adapted_ppl: f64,
    pub best_epoch: usize,
    pub vectors: Vec<DocumentVector>,
}

/// Adapts `parent` to every document of `corpus` in parallel and extracts
/// vectors from each adapted model.
pub fn adapt_corpus<M, F>(
    parent: &M,
    corpus: &LabeledCorpus,
    mask: &FreezeMask,
    cfg: &TrainConfig,
    extract: F,
) -> Result<Vec<AdaptedRow>>
where
    M: LanguageModel,
    F: Fn(&M) -> Result<Vec<DocumentVector>> + Sync,
{
    if parent.vocab_size() != corpus.vocabulary().len() {
        return Err(Error::VocabularyMismatch(format!(
            "parent covers {} words, corpus vocabulary has {}",
            parent.vocab_size(),
            corpus.vocabulary().len()
        )));
    }
    corpus
        .documents()
        .par_iter()
        .map(|d| {
            let out = adapt(parent, d.tokens(), mask, cfg)?;
            Ok(AdaptedRow {
                parent_ppl: out.parent_perplexity,
                adapted_ppl: out.adapted_perplexity,
                best_epoch: out.best_epoch,
                vectors: extract(&out.model)?,
            })
        })
        .collect()
}
