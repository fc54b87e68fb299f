//! n-gram TF-IDF features over surface tokens.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
use sha2::{Digest, Sha256};

use crate::adaptation::unit_normalize;
use crate::corpus::Document;
use crate::vectors::{DocumentVector, Recipe};
use crate::{Error, Result};

/// Joins n-gram parts with a separator that sorts below every printable
/// character, so key order equals element-wise lexicographic order.
const SEP: char = '\u{1f}';

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    tokens.windows(n).map(move |w| {
        let mut key = String::with_capacity(w.iter().map(|t| t.len() + 1).sum());
        for (i, t) in w.iter().enumerate() {
            if i > 0 {
                key.push(SEP);
            }
            key.push_str(t);
        }
        key
    })
}

/// Selected order-`n` terms with their document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramIndex {
    n: usize,
    terms: Vec<String>,
    column: HashMap<String, usize>,
    df: Vec<usize>,
    idf: Vec<f64>,
    num_docs: usize,
}

impl NgramIndex {
    /// Keeps the `top_k` n-grams with the highest document frequency over
    /// `docs` (ties in lexicographic order).
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a Document>, n: usize, top_k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
        }
        if top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be at least 1".into()));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut num_docs = 0;
        for d in docs {
            num_docs += 1;
            let distinct: HashSet<String> = ngrams(d.surface(), n).collect();
            for g in distinct {
                *df.entry(g).or_default() += 1;
            }
        }
        if num_docs == 0 {
            return Err(Error::InvalidArgument("cannot fit an n-gram index on no documents".into()));
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if ranked.len() < top_k {
            warn!(
                "only {} distinct {n}-grams for top_k = {top_k}; keeping all",
                ranked.len()
            );
        }
        ranked.truncate(top_k);
        let terms: Vec<String> = ranked.iter().map(|(t, _)| t.clone()).collect();
        let df: Vec<usize> = ranked.iter().map(|(_, c)| *c).collect();
        let idf = df.iter().map(|&c| (num_docs as f64 / c as f64).ln()).collect();
        let column = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            n,
            terms,
            column,
            df,
            idf,
            num_docs,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    /// Term of column `c`, its tokens separated by spaces.
    pub fn term(&self, c: usize) -> String {
        self.terms[c].replace(SEP, " ")
    }

    pub fn document_frequency(&self, c: usize) -> usize {
        self.df[c]
    }

    pub fn idf(&self, c: usize) -> f64 {
        self.idf[c]
    }

    /// Raw term counts of `doc` over the selected columns.
    pub fn term_counts(&self, doc: &Document) -> BTreeMap<usize, f64> {
        let mut tf = BTreeMap::new();
        for g in ngrams(doc.surface(), self.n) {
            if let Some(&c) = self.column.get(&g) {
                *tf.entry(c).or_insert(0.0) += 1.0;
            }
        }
        tf
    }

    /// L2-normalised `tf · ln(N / df)` vector.
    pub fn transform(&self, doc: &Document, recipe: Recipe) -> DocumentVector {
        let mut v = vec![0.0; self.dim()];
        for (c, tf) in self.term_counts(doc) {
            v[c] = tf * self.idf[c];
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let values = if norm > 0.0 { unit_normalize(&v) } else { v };
        DocumentVector::new(values, recipe)
    }

    /// Digest of the selected terms and their statistics.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.num_docs as u64).to_le_bytes());
        for (t, df) in self.terms.iter().zip(&self.df) {
            h.update(t.as_bytes());
            h.update([0u8]);
            h.update((*df as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Fits the index on `fit` and transforms every document of `docs`.
pub fn ngram_tfidf(docs: &[Document], fit: &[usize], n: usize, top_k: usize) -> Result<(NgramIndex, Vec<DocumentVector>)> {
    let index = NgramIndex::fit(fit.iter().map(|&i| &docs[i]), n, top_k)?;
    let recipe = Recipe::Tfidf { n, top_k };
    let vectors = docs.iter().map(|d| index.transform(d, recipe.clone())).collect();
    Ok((index, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledCorpus, TokenPolicy};

    fn corpus(texts: &[&str]) -> LabeledCorpus {
        let policy = TokenPolicy {
            min_count: 1,
            sentence_boundaries: false,
            eos_at_doc_end: false,
            ..TokenPolicy::default()
        };
        let ids: Vec<String> = (0..texts.len()).map(|i| format!("d{i}")).collect();
        LabeledCorpus::from_texts(ids.iter().zip(texts).map(|(i, t)| (i.as_str(), "g", *t)), policy)
            .unwrap()
            .0
    }

    #[test]
    fn unigram_weights_by_hand() {
        // df: a 2, b 2, c 1, d 1.
        let c = corpus(&["a a b", "b c", "a d"]);
        let all = [0, 1, 2];
        let (index, v) = ngram_tfidf(c.documents(), &all, 1, 2).unwrap();
        assert_eq!((index.term(0), index.term(1)), ("a".to_owned(), "b".to_owned()));
        let idf = (3.0f64 / 2.0).ln();
        // doc 0: (2 idf, idf) normalised.
        let n = (5.0f64).sqrt();
        assert!((v[0].values[0] - 2.0 / n).abs() < 1e-12 && (v[0].values[1] - 1.0 / n).abs() < 1e-12);
        assert_eq!(v[1].values, vec![0.0, 1.0]);
        assert_eq!(v[2].values, vec![1.0, 0.0]);
        assert!((index.idf(0) - idf).abs() < 1e-15);
    }

    #[test]
    fn ubiquitous_term_is_zero_column() {
        let c = corpus(&["x y", "x z", "x"]);
        let (index, v) = ngram_tfidf(c.documents(), &[0, 1, 2], 1, 10).unwrap();
        assert_eq!(index.dim(), 3);
        assert_eq!(index.term(0), "x");
        assert!(v.iter().all(|d| d.values[0] == 0.0));
        assert_eq!(v[2].values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn index_ignores_unfitted_documents() {
        let c = corpus(&["p q r", "p q s", "t u v"]);
        let a = NgramIndex::fit(&c.documents()[..2], 2, 5).unwrap();
        let b = NgramIndex::fit(c.select(&[0, 1]).unwrap().documents(), 2, 5).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.term(0), "p q");
        assert_eq!(a.transform(&c.documents()[2], Recipe::Tfidf { n: 2, top_k: 5 }).values, vec![0.0; 3]);
    }
}
