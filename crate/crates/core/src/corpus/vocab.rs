use std::collections::HashMap;

use super::tokenize::{EOS_TOKEN, UNK_TOKEN};

/// Dense word-id mapping with per-type corpus counts.
///
/// Id 0 is always the unknown token and id 1 the end-of-sentence token.
/// Remaining ids follow descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    ids: HashMap<String, u32>,
    counts: Vec<u64>,
}

impl Vocabulary {
    pub const UNK: u32 = 0;
    pub const EOS: u32 = 1;

    /// Builds a vocabulary from surface-token streams.
    pub fn build<'a, I, S>(streams: I, min_count: usize, max_vocab: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut total = 0u64;
        let streams: Vec<&'a [S]> = streams.into_iter().collect();
        for s in &streams {
            for t in s.iter() {
                *freq.entry(t.as_ref()).or_default() += 1;
                total += 1;
            }
        }
        let eos_count = freq.remove(EOS_TOKEN).unwrap_or(0);
        let unk_literal = freq.remove(UNK_TOKEN).unwrap_or(0);
        let mut regular: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c as usize >= min_count.max(1))
            .collect();
        regular.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        regular.truncate(max_vocab.saturating_sub(2));

        let mut words = vec![UNK_TOKEN.to_owned(), EOS_TOKEN.to_owned()];
        let mut counts = vec![unk_literal, eos_count];
        for (w, c) in &regular {
            words.push((*w).to_owned());
            counts.push(*c);
        }
        let kept: u64 = counts.iter().sum();
        counts[Self::UNK as usize] += total - kept;
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, ids, counts }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    /// Id of `word`, or the unknown token.
    pub fn lookup(&self, word: &str) -> u32 {
        self.id(word).unwrap_or(Self::UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_with_specials_first() {
        let docs: Vec<Vec<&str>> = vec![vec!["b", "a", "b", "</s>"], vec!["c", "b", "a"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), 1, 100);
        assert_eq!(v.words(), ["<unk>", "</s>", "b", "a", "c"]);
        assert_eq!(v.counts(), [0, 1, 3, 2, 1]);
    }

    #[test]
    fn rare_words_fold_into_unknown() {
        let docs: Vec<Vec<&str>> = vec![vec!["x", "y", "y", "z", "z", "z"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), 2, 100);
        assert_eq!(v.words(), ["<unk>", "</s>", "z", "y"]);
        assert_eq!(v.count(Vocabulary::UNK), 1);
        assert_eq!(v.lookup("x"), Vocabulary::UNK);
        assert_eq!(v.counts().iter().sum::<u64>(), 6);
    }

    #[test]
    fn cap_limits_size_including_specials() {
        let docs: Vec<Vec<&str>> = vec![vec!["a", "a", "a", "b", "b", "c"]];
        let v = Vocabulary::build(docs.iter().map(|d| d.as_slice()), 1, 3);
        assert_eq!(v.words(), ["<unk>", "</s>", "a"]);
        assert_eq!(v.count(Vocabulary::UNK), 3);
    }
}
