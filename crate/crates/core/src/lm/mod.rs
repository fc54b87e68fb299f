//! Class-factorised recurrent language models and their training loop.

mod lstm;
mod output;
mod rnn;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use lstm::{lstm_train, LstmLm, LstmSizes, LstmState, GATE_BIASES};
pub use rnn::{rnn_train, RnnLm};

use crate::numerics::{Checkpoint, GradientModel, Gradients, ParamStore, Real, TrainConfig};
use crate::word_classes::WordClassMap;
use crate::{Error, Result};

/// Per-step output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Class distribution after each input position.
    pub class_probs: Vec<Vec<f64>>,
    /// Distribution over the members of the next word's class.
    pub word_probs: Vec<Vec<f64>>,
    /// `-Σ ln P(w_{t+1} | w_1..w_t)` over the predicted positions.
    pub log_loss: f64,
}

/// Common surface of the recurrent language models.
///
/// Every token after the first is predicted from its history, so a sequence
/// of `n` tokens has `n - 1` predicted positions.
pub trait LanguageModel: Clone + Send + Sync {
    type Scalar: Real;
    type State: Clone;

    fn params(&self) -> &ParamStore<Self::Scalar>;
    fn params_mut(&mut self) -> &mut ParamStore<Self::Scalar>;
    fn class_map(&self) -> &WordClassMap;
    fn vocab_size(&self) -> usize {
        self.class_map().vocab_size()
    }
    fn initial_state(&self) -> Self::State;
    /// Tensors whose gradients are tracked row-sparsely.
    fn row_sparse(&self) -> Vec<usize>;
    /// Named parameter groups usable in freeze masks, with their tensors.
    fn parameter_groups(&self) -> Vec<(&'static str, Vec<&'static str>)>;

    /// Runs `tokens` from `state`, leaving the final state behind; returns the
    /// summed negative log-likelihood.
    fn advance(&self, state: &mut Self::State, tokens: &[u32]) -> f64;
    /// As [`Self::advance`], also accumulating gradients (truncated at the
    /// start of `tokens`).
    fn advance_grad(&self, state: &mut Self::State, tokens: &[u32], grads: &mut Gradients<Self::Scalar>) -> f64;
    /// Forward pass keeping per-step distributions.
    fn trace(&self, tokens: &[u32]) -> Result<ForwardTrace>;
    /// Full-vocabulary next-word distributions after each input position.
    fn next_word_distributions(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>>;

    fn to_checkpoint(&self) -> Checkpoint<Self::Scalar>;

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        let vocab = self.vocab_size();
        match tokens.iter().find(|&&t| t as usize >= vocab) {
            Some(&id) => Err(Error::TokenOutOfRange { id, vocab }),
            None => Ok(()),
        }
    }

    /// Total negative log-likelihood of `tokens` from the initial state.
    fn sequence_loss(&self, tokens: &[u32]) -> Result<f64> {
        self.check_tokens(tokens)?;
        Ok(self.advance(&mut self.initial_state(), tokens))
    }
}

/// `exp(loss / predicted positions)`.
pub fn perplexity<M: LanguageModel>(model: &M, tokens: &[u32]) -> Result<f64> {
    if tokens.len() < 2 {
        return Err(Error::InvalidArgument(
            "perplexity needs at least two tokens (one predicted position)".into(),
        ));
    }
    Ok((model.sequence_loss(tokens)? / (tokens.len() - 1) as f64).exp())
}

/// Perplexity over several sequences, pooling their predicted positions.
pub fn pooled_perplexity<M: LanguageModel>(model: &M, seqs: &[&[u32]]) -> Result<f64> {
    let mut loss = 0.0;
    let mut n = 0usize;
    for s in seqs.iter().filter(|s| s.len() >= 2) {
        loss += model.sequence_loss(s)?;
        n += s.len() - 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no predicted positions".into()));
    }
    Ok((loss / n as f64).exp())
}

/// One pass of truncated BPTT over `docs`, with an SGD step per span.
/// Returns the summed training loss.
pub fn train_epoch<M: LanguageModel>(
    model: &mut M,
    docs: &[&[u32]],
    lr: f64,
    cfg: &TrainConfig,
    grads: &mut Gradients<M::Scalar>,
) -> Result<f64> {
    let span = cfg.bptt_span.max(1);
    let mut total = 0.0;
    for doc in docs {
        model.check_tokens(doc)?;
        if doc.len() < 2 {
            continue;
        }
        let mut state = model.initial_state();
        let mut start = 0;
        while start + 1 < doc.len() {
            let end = (start + span).min(doc.len() - 1);
            total += model.advance_grad(&mut state, &doc[start..=end], grads);
            let mut params = std::mem::take(model.params_mut());
            let applied = grads.apply_sgd(&mut params, lr, cfg.clip_threshold);
            *model.params_mut() = params;
            applied?;
            start = end;
        }
    }
    Ok(total)
}

/// Per-epoch record of parent training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation_perplexity: f64,
    /// False when the epoch made validation worse and was rolled back.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_validation_perplexity: f64,
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    /// Validation perplexity of the returned model after each epoch.
    pub fn accepted_perplexities(&self) -> Vec<f64> {
        let mut cur = self.initial_validation_perplexity;
        self.epochs
            .iter()
            .map(|e| {
                if e.accepted {
                    cur = e.validation_perplexity;
                }
                cur
            })
            .collect()
    }
}

/// Splits each document into a training head and a validation tail holding
/// the last 5% of its tokens (documents shorter than 40 tokens are kept
/// whole for training).
pub fn validation_split<'a>(docs: &[&'a [u32]]) -> (Vec<&'a [u32]>, Vec<&'a [u32]>) {
    let mut train = Vec::with_capacity(docs.len());
    let mut val = Vec::new();
    for &d in docs {
        if d.len() >= 40 {
            let tail = d.len().div_ceil(20).max(2);
            let cut = d.len() - tail;
            train.push(&d[..cut]);
            val.push(&d[cut..]);
        } else {
            train.push(d);
        }
    }
    (train, val)
}

const MIN_RELATIVE_IMPROVEMENT: f64 = 1e-3;

/// Trains a parent model with SGD and the halving schedule: when an epoch
/// fails to improve validation perplexity by 0.1% the learning rate is
/// multiplied by `lr_decay`; an epoch that makes validation worse is rolled
/// back; training stops after two consecutive failures or `epochs` epochs.
pub fn train_parent<M: LanguageModel>(model: &mut M, docs: &[&[u32]], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    for d in docs {
        model.check_tokens(d)?;
    }
    let (train, mut val) = validation_split(docs);
    if val.is_empty() {
        val = train.clone();
    }
    let mut best = pooled_perplexity(model, &val)?;
    let mut report = TrainReport {
        initial_validation_perplexity: best,
        epochs: Vec::new(),
    };
    if cfg.epochs == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut failures = 0;
    let mut grads = Gradients::for_store(model.params(), &model.row_sparse());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batch: Vec<&[u32]> = order.iter().map(|&i| train[i]).collect();
        let snapshot = model.clone();
        let loss = match train_epoch(model, &batch, lr, cfg, &mut grads) {
            Ok(l) => l,
            Err(Error::NonFiniteGradient(_)) => return Err(Error::Diverged { epoch }),
            Err(e) => return Err(e),
        };
        let ppl = pooled_perplexity(model, &val)?;
        if !loss.is_finite() || !ppl.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let accepted = ppl <= best;
        info!("epoch {epoch}: lr {lr:.4} train loss {loss:.3} validation ppl {ppl:.3}");
        report.epochs.push(EpochReport {
            epoch,
            learning_rate: lr,
            train_loss: loss,
            validation_perplexity: ppl,
            accepted,
        });
        let improved = ppl < best * (1.0 - MIN_RELATIVE_IMPROVEMENT);
        if accepted {
            best = ppl;
        } else {
            *model = snapshot;
            grads = Gradients::for_store(model.params(), &model.row_sparse());
        }
        if improved {
            failures = 0;
        } else {
            failures += 1;
            if failures >= 2 {
                break;
            }
            lr *= cfg.lr_decay;
        }
    }
    if report.epochs.iter().all(|e| !e.accepted) {
        warn!("no training epoch improved validation perplexity");
    }
    Ok(report)
}

/// Adapts a double-precision model to [`GradientModel`] over full sequences.
#[derive(Debug, Clone)]
pub struct SequenceObjective<M>(pub M);

impl<M: LanguageModel<Scalar = f64>> GradientModel for SequenceObjective<M> {
    type Input = [u32];

    fn params(&self) -> &ParamStore<f64> {
        self.0.params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        self.0.params_mut()
    }

    fn loss(&self, input: &[u32]) -> Result<f64> {
        self.0.sequence_loss(input)
    }

    fn loss_and_grad(&self, input: &[u32]) -> Result<(f64, ParamStore<f64>)> {
        self.0.check_tokens(input)?;
        let mut grads = Gradients::for_store(self.0.params(), &[]);
        let loss = self.0.advance_grad(&mut self.0.initial_state(), input, &mut grads);
        Ok((loss, grads.to_store(self.0.params())))
    }
}

pub(crate) fn class_map_from_checkpoint<T: Real>(ck: &Checkpoint<T>) -> Result<WordClassMap> {
    let assign = ck
        .arrays
        .get("class_of")
        .ok_or_else(|| Error::format("checkpoint", "missing class map"))?;
    WordClassMap::from_assignment(assign.clone())
}

pub(crate) fn expect_kind<T: Real>(ck: &Checkpoint<T>, kind: &str) -> Result<()> {
    match ck.meta.get("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::format(
            "checkpoint",
            format!("expected a `{kind}` model, found {other:?}"),
        )),
    }
}

/// Model family stored in a checkpoint.
pub fn checkpoint_kind<T: Real>(ck: &Checkpoint<T>) -> Option<&str> {
    ck.meta.get("kind").map(String::as_str)
}
