use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledCorpus, RawDocument, TokenPolicy};
use crate::{Error, Result};

/// An order-1 Markov source over the generator vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreSource {
    pub name: String,
    /// Distribution of the first word.
    pub initial: Vec<f64>,
    /// Row-stochastic transition weights; row `i` is `P(next | word i)`.
    pub transitions: Vec<Vec<f64>>,
}

/// Description of a synthetic labelled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Surface words. A `.` entry ends sentences.
    pub vocabulary: Vec<String>,
    pub genres: Vec<GenreSource>,
    pub docs_per_genre: usize,
    /// Document length in words, drawn uniformly from `min_len..=max_len`.
    pub min_len: usize,
    pub max_len: usize,
}

impl GeneratorSpec {
    /// Randomly structured genres: every word has `fanout` preferred
    /// successors per genre carrying `1 - smoothing` of the mass, the rest
    /// spread uniformly. Word 0 is the sentence terminator `.`.
    pub fn markov(
        num_genres: usize,
        vocab_size: usize,
        docs_per_genre: usize,
        len: (usize, usize),
        fanout: usize,
        smoothing: f64,
        structure_seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(structure_seed);
        let vocabulary: Vec<String> = std::iter::once(".".to_owned())
            .chain((1..vocab_size).map(|i| format!("w{i:03}")))
            .collect();
        let genres = (0..num_genres)
            .map(|g| {
                let transitions = (0..vocab_size)
                    .map(|_| {
                        let mut row = vec![smoothing / vocab_size as f64; vocab_size];
                        let mut mass = vec![0.0; fanout.max(1)];
                        for m in mass.iter_mut() {
                            *m = rng.random_range(0.5..1.5);
                        }
                        let total: f64 = mass.iter().sum();
                        for m in mass {
                            let to = rng.random_range(0..vocab_size);
                            row[to] += (1.0 - smoothing) * m / total;
                        }
                        row
                    })
                    .collect();
                GenreSource {
                    name: format!("genre{g}"),
                    initial: vec![1.0; vocab_size],
                    transitions,
                }
            })
            .collect();
        Self {
            vocabulary,
            genres,
            docs_per_genre,
            min_len: len.0,
            max_len: len.1,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.vocabulary.len();
        if self.genres.len() < 2 {
            return Err(Error::InvalidArgument("synthetic corpus needs at least 2 genres".into()));
        }
        if v == 0 || self.docs_per_genre == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidArgument("empty vocabulary, document count or length range".into()));
        }
        for g in &self.genres {
            if g.initial.len() != v || g.transitions.len() != v || g.transitions.iter().any(|r| r.len() != v) {
                return Err(Error::Shape(format!("genre {} does not match vocabulary size {v}", g.name)));
            }
        }
        Ok(())
    }
}

/// Samples a deterministic corpus from `spec`.
pub fn synth_corpus(spec: &GeneratorSpec, seed: u64) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = TokenPolicy {
        min_count: 1,
        ..TokenPolicy::default()
    };
    let bad = |g: &str| Error::InvalidArgument(format!("genre {g} has an invalid distribution"));
    let mut raw = Vec::with_capacity(spec.genres.len() * spec.docs_per_genre);
    for g in &spec.genres {
        let initial = WeightedIndex::new(&g.initial).map_err(|_| bad(&g.name))?;
        let rows = g
            .transitions
            .iter()
            .map(WeightedIndex::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(&g.name))?;
        for d in 0..spec.docs_per_genre {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let mut w = initial.sample(&mut rng);
            let mut text = String::new();
            for i in 0..len {
                if i > 0 {
                    text.push(' ');
                    w = rows[w].sample(&mut rng);
                }
                text.push_str(&spec.vocabulary[w]);
            }
            raw.push(RawDocument::from_text(
                &format!("{}-{d:04}", g.name),
                &g.name,
                &text,
                &policy,
            ));
        }
    }
    LabeledCorpus::from_raw(raw, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fewer_than_two_genres_is_fatal() {
        let mut spec = GeneratorSpec::markov(2, 5, 3, (5, 10), 2, 0.1, 0);
        spec.genres.truncate(1);
        assert!(synth_corpus(&spec, 1).is_err());
    }

    #[test]
    fn seeds_change_the_sample() {
        let spec = GeneratorSpec::markov(2, 8, 5, (20, 30), 2, 0.1, 0);
        assert_ne!(synth_corpus(&spec, 7).unwrap(), synth_corpus(&spec, 8).unwrap());
    }
}
