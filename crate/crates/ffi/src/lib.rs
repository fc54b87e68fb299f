//! C interface.
//!
//! Every function returns a [`DvStatus`]; results come back through out
//! pointers. On failure the thread's last error message is available from
//! [`dv_last_error`]. Handles (`DvCorpus`, `DvModel`, `DvVector`) are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use docvec::adaptation::{adapt, dv_lstm, dv_rnn, FreezeMask};
use docvec::corpus::{load_corpus, synth_corpus, GeneratorSpec, LabeledCorpus, TokenPolicy};
use docvec::evaluate::{paired_ttest, weighted_fscore};
use docvec::lm::{checkpoint_kind, lstm_train, perplexity, rnn_train, LanguageModel, LstmLm, LstmSizes, RnnLm};
use docvec::numerics::{Checkpoint, Precision, TrainConfig};
use docvec::vectors::Recipe;
use docvec::word_classes::brown_cluster;
use docvec::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    VocabularyMismatch = 5,
    Shape = 6,
    Training = 7,
    Config = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Language-model family of a [`DvModel`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvFamily {
    Rnn = 0,
    Lstm = 1,
}

/// Paired t-test outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DvTTest {
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub mean_difference: f64,
    pub significant: bool,
}

/// A tokenised, genre-labelled corpus.
pub struct DvCorpus(LabeledCorpus);

enum AnyModel {
    Rnn32(RnnLm<f32>),
    Rnn64(RnnLm<f64>),
    Lstm32(LstmLm<f32>),
    Lstm64(LstmLm<f64>),
}

/// A parent language model.
pub struct DvModel(AnyModel);

/// A document vector.
pub struct DvVector {
    values: Vec<f64>,
    recipe: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior NUL"));
}

fn status_of(e: &Error) -> DvStatus {
    match e {
        Error::Io { .. } | Error::MissingArtifact(_) => DvStatus::Io,
        Error::Ingest(_) | Error::Format { .. } => DvStatus::Format,
        Error::InvalidArgument(_) => DvStatus::InvalidArgument,
        Error::Shape(_) => DvStatus::Shape,
        Error::NonFiniteGradient(_) | Error::Diverged { .. } => DvStatus::Training,
        Error::TokenOutOfRange { .. } | Error::VocabularyMismatch(_) => DvStatus::VocabularyMismatch,
        Error::FingerprintMismatch { .. } | Error::Config(_) => DvStatus::Config,
    }
}

enum Fail {
    Lib(Error),
    Status(DvStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(DvStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> DvStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            DvStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            DvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(DvStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn document(corpus: &LabeledCorpus, doc: usize) -> Result<&[u32], Fail> {
    corpus.documents().get(doc).map(|d| d.tokens()).ok_or_else(|| {
        Fail::Status(
            DvStatus::OutOfRange,
            format!("document {doc} out of range for corpus of {}", corpus.len()),
        )
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string.
#[no_mangle]
pub extern "C" fn dv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Samples a synthetic corpus of `genres` order-1 Markov sources.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_synth(
    genres: usize,
    vocabulary: usize,
    docs_per_genre: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
    out: *mut *mut DvCorpus,
) -> DvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = GeneratorSpec::markov(genres, vocabulary, docs_per_genre, (min_len, max_len), 3, 0.1, seed);
        *out = Box::into_raw(Box::new(DvCorpus(synth_corpus(&spec, seed)?)));
        Ok(())
    })
}

/// Reads a `<path>\t<genre>` manifest with the default tokenisation policy.
///
/// # Safety
/// `manifest` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_load(manifest: *const c_char, out: *mut *mut DvCorpus) -> DvStatus {
    guard(|| {
        let path = str_arg(manifest, "manifest")?;
        let out = out_arg(out, "out")?;
        let corpus = load_corpus(Path::new(path), &TokenPolicy::default())?;
        *out = Box::into_raw(Box::new(DvCorpus(corpus)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from a `dv_corpus_*` constructor; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_len(corpus: *const DvCorpus, out: *mut usize) -> DvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(corpus, "corpus")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from a `dv_corpus_*` constructor; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_num_genres(corpus: *const DvCorpus, out: *mut usize) -> DvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(corpus, "corpus")?.0.num_genres();
        Ok(())
    })
}

/// Genre index of every document, written to `labels[0..len]`.
///
/// # Safety
/// `labels` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_labels(corpus: *const DvCorpus, labels: *mut u32, len: usize) -> DvStatus {
    guard(|| {
        let c = &handle(corpus, "corpus")?.0;
        if len != c.len() {
            return Err(Fail::Status(
                DvStatus::InvalidArgument,
                format!("label buffer holds {len} values, corpus has {}", c.len()),
            ));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        let dst = std::slice::from_raw_parts_mut(labels, len);
        for (d, l) in dst.iter_mut().zip(c.labels()) {
            *d = l as u32;
        }
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dv_corpus_free(corpus: *mut DvCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Brown-clusters the corpus into `classes` word classes and trains a
/// single-precision parent model on all of it.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dv_model_train(
    corpus: *const DvCorpus,
    family: DvFamily,
    hidden: usize,
    classes: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut DvModel,
) -> DvStatus {
    guard(|| {
        let c = &handle(corpus, "corpus")?.0;
        let out = out_arg(out, "out")?;
        let map = brown_cluster(c, classes)?;
        let cfg = TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        };
        let model = match family {
            DvFamily::Rnn => AnyModel::Rnn32(rnn_train::<f32>(c, &cfg, hidden, &map)?.0),
            DvFamily::Lstm => {
                let sizes = LstmSizes {
                    compression: hidden,
                    sigmoid: hidden,
                    hidden,
                };
                AnyModel::Lstm32(lstm_train::<f32>(c, &cfg, sizes, &map)?.0)
            }
        };
        *out = Box::into_raw(Box::new(DvModel(model)));
        Ok(())
    })
}

/// Loads a parent checkpoint, keeping its stored precision.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dv_model_load(path: *const c_char, out: *mut *mut DvModel) -> DvStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let model = match Checkpoint::<f32>::stored_precision(&bytes)? {
            Precision::Fp32 => {
                let ck = Checkpoint::<f32>::from_bytes(&bytes)?;
                match checkpoint_kind(&ck) {
                    Some("lstm") => AnyModel::Lstm32(LstmLm::from_checkpoint(&ck)?),
                    _ => AnyModel::Rnn32(RnnLm::from_checkpoint(&ck)?),
                }
            }
            Precision::Fp64 => {
                let ck = Checkpoint::<f64>::from_bytes(&bytes)?;
                match checkpoint_kind(&ck) {
                    Some("lstm") => AnyModel::Lstm64(LstmLm::from_checkpoint(&ck)?),
                    _ => AnyModel::Rnn64(RnnLm::from_checkpoint(&ck)?),
                }
            }
        };
        *out = Box::into_raw(Box::new(DvModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dv_model_save(model: *const DvModel, path: *const c_char) -> DvStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        match &handle(model, "model")?.0 {
            AnyModel::Rnn32(m) => m.to_checkpoint().save(path)?,
            AnyModel::Rnn64(m) => m.to_checkpoint().save(path)?,
            AnyModel::Lstm32(m) => m.to_checkpoint().save(path)?,
            AnyModel::Lstm64(m) => m.to_checkpoint().save(path)?,
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_model_family(model: *const DvModel, out: *mut DvFamily) -> DvStatus {
    guard(|| {
        *out_arg(out, "out")? = match handle(model, "model")?.0 {
            AnyModel::Rnn32(_) | AnyModel::Rnn64(_) => DvFamily::Rnn,
            AnyModel::Lstm32(_) | AnyModel::Lstm64(_) => DvFamily::Lstm,
        };
        Ok(())
    })
}

/// Perplexity of the model on document `doc` of `corpus`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dv_model_perplexity(
    model: *const DvModel,
    corpus: *const DvCorpus,
    doc: usize,
    out: *mut f64,
) -> DvStatus {
    guard(|| {
        let tokens = document(&handle(corpus, "corpus")?.0, doc)?;
        let out = out_arg(out, "out")?;
        *out = match &handle(model, "model")?.0 {
            AnyModel::Rnn32(m) => perplexity(m, tokens)?,
            AnyModel::Rnn64(m) => perplexity(m, tokens)?,
            AnyModel::Lstm32(m) => perplexity(m, tokens)?,
            AnyModel::Lstm64(m) => perplexity(m, tokens)?,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dv_model_free(model: *mut DvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn adapt_rnn<T: docvec::numerics::Real>(m: &RnnLm<T>, tokens: &[u32], recipe: &Recipe) -> docvec::Result<Vec<f64>> {
    let out = adapt(m, tokens, &FreezeMask::rnn_default(), &TrainConfig::adaptation())?;
    Ok(dv_rnn(&out.model, recipe)?.values)
}

fn adapt_lstm<T: docvec::numerics::Real>(m: &LstmLm<T>, tokens: &[u32], recipe: &Recipe) -> docvec::Result<Vec<f64>> {
    let out = adapt(m, tokens, &FreezeMask::lstm_default(), &TrainConfig::adaptation())?;
    Ok(dv_lstm(&out.model).get(recipe)?.values)
}

/// Adapts the parent to document `doc` with the default mask and schedule
/// and extracts `recipe` (e.g. `"dv_lstm_dm"` or `"dv_rnn_hk"`).
///
/// # Safety
/// Handles must be live, `recipe` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dv_adapt_document(
    model: *const DvModel,
    corpus: *const DvCorpus,
    doc: usize,
    recipe: *const c_char,
    out: *mut *mut DvVector,
) -> DvStatus {
    guard(|| {
        let name = str_arg(recipe, "recipe")?;
        let recipe: Recipe = name.parse()?;
        let tokens = document(&handle(corpus, "corpus")?.0, doc)?;
        let out = out_arg(out, "out")?;
        let values = match &handle(model, "model")?.0 {
            AnyModel::Rnn32(m) => adapt_rnn(m, tokens, &recipe)?,
            AnyModel::Rnn64(m) => adapt_rnn(m, tokens, &recipe)?,
            AnyModel::Lstm32(m) => adapt_lstm(m, tokens, &recipe)?,
            AnyModel::Lstm64(m) => adapt_lstm(m, tokens, &recipe)?,
        };
        *out = Box::into_raw(Box::new(DvVector {
            values,
            recipe: CString::new(recipe.to_string()).expect("recipe names contain no NUL"),
        }));
        Ok(())
    })
}

/// # Safety
/// `vector` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_vector_dim(vector: *const DvVector, out: *mut usize) -> DvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(vector, "vector")?.values.len();
        Ok(())
    })
}

/// Borrowed pointer to the vector's values, valid until the vector is freed.
///
/// # Safety
/// `vector` must be a live handle or null (which yields null).
#[no_mangle]
pub unsafe extern "C" fn dv_vector_values(vector: *const DvVector) -> *const f64 {
    vector.as_ref().map_or(std::ptr::null(), |v| v.values.as_ptr())
}

/// Recipe name of the vector, valid until the vector is freed.
///
/// # Safety
/// `vector` must be a live handle or null (which yields null).
#[no_mangle]
pub unsafe extern "C" fn dv_vector_recipe(vector: *const DvVector) -> *const c_char {
    vector.as_ref().map_or(std::ptr::null(), |v| v.recipe.as_ptr())
}

/// # Safety
/// `vector` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dv_vector_free(vector: *mut DvVector) {
    if !vector.is_null() {
        drop(Box::from_raw(vector));
    }
}

/// Per-genre F1 averaged with weights proportional to gold counts.
///
/// # Safety
/// `preds` and `golds` must each hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_weighted_fscore(preds: *const u32, golds: *const u32, n: usize, out: *mut f64) -> DvStatus {
    guard(|| {
        let p = slice_arg(preds, n, "preds")?;
        let g = slice_arg(golds, n, "golds")?;
        *out_arg(out, "out")? = weighted_fscore(p, g)?;
        Ok(())
    })
}

/// Two-sided paired t-test of `a - b` with `n - 1` degrees of freedom.
///
/// # Safety
/// `a` and `b` must each hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dv_paired_ttest(
    a: *const f64,
    b: *const f64,
    n: usize,
    confidence: f64,
    out: *mut DvTTest,
) -> DvStatus {
    guard(|| {
        let a = slice_arg(a, n, "a")?;
        let b = slice_arg(b, n, "b")?;
        let t = paired_ttest(a, b, confidence)?;
        *out_arg(out, "out")? = DvTTest {
            t: t.t,
            df: t.df,
            critical: t.critical,
            mean_difference: t.mean_difference,
            significant: t.significant,
        };
        Ok(())
    })
}
