//! Word classes for the class-factorised output layers, via windowed
//! agglomerative Brown clustering, and the class-frequency feature.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;

use crate::corpus::{Document, LabeledCorpus, Vocabulary};
use crate::vectors::{DocumentVector, Recipe};
use crate::{Error, Result};

/// A total partition of the vocabulary into dense, non-empty classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordClassMap {
    class_of: Vec<u32>,
    members: Vec<Vec<u32>>,
    position: Vec<u32>,
}

impl WordClassMap {
    pub fn from_assignment(class_of: Vec<u32>) -> Result<Self> {
        let num_classes = class_of.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); num_classes];
        let mut position = vec![0u32; class_of.len()];
        for (w, &c) in class_of.iter().enumerate() {
            position[w] = members[c as usize].len() as u32;
            members[c as usize].push(w as u32);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("word class {empty} has no members")));
        }
        Ok(Self {
            class_of,
            members,
            position,
        })
    }

    /// Every word in its own class.
    pub fn singletons(vocab_size: usize) -> Self {
        Self::from_assignment((0..vocab_size as u32).collect()).expect("dense")
    }

    /// Word `w` goes to class `w % num_classes`.
    pub fn round_robin(vocab_size: usize, num_classes: usize) -> Result<Self> {
        if num_classes == 0 || num_classes > vocab_size {
            return Err(Error::InvalidArgument(format!(
                "cannot spread {vocab_size} words over {num_classes} classes"
            )));
        }
        Self::from_assignment((0..vocab_size).map(|w| (w % num_classes) as u32).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.class_of.len()
    }

    #[inline]
    pub fn class_of(&self, word: u32) -> u32 {
        self.class_of[word as usize]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.class_of
    }

    pub fn members(&self, class: u32) -> &[u32] {
        &self.members[class as usize]
    }

    /// Index of `word` within its class' member list.
    #[inline]
    pub fn position(&self, word: u32) -> usize {
        self.position[word as usize] as usize
    }

    /// `<word>\t<class-id>` per line, in word-id order.
    pub fn export(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for (w, &c) in self.class_of.iter().enumerate() {
            let _ = writeln!(out, "{}\t{c}", vocab.word(w as u32));
        }
        out
    }

    /// Inverse of [`Self::export`]; every vocabulary word must be listed.
    pub fn import(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut class_of = vec![u32::MAX; vocab.len()];
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (word, class) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::format("class map", format!("line {}", i + 1)))?;
            let class: u32 = class
                .parse()
                .map_err(|_| Error::format("class map", format!("line {}: bad class id", i + 1)))?;
            let id = vocab.id(word).ok_or_else(|| {
                Error::VocabularyMismatch(format!("class map word `{word}` not in vocabulary"))
            })?;
            class_of[id as usize] = class;
        }
        if let Some(w) = class_of.iter().position(|&c| c == u32::MAX) {
            return Err(Error::VocabularyMismatch(format!(
                "class map misses word `{}`",
                vocab.word(w as u32)
            )));
        }
        Self::from_assignment(class_of)
    }
}

/// Within-document bigram statistics over a vocabulary.
#[derive(Debug, Clone)]
pub struct BigramStats {
    /// `right[x]` lists `(y, count)` for bigrams `x y`.
    right: Vec<Vec<(u32, f64)>>,
    left: Vec<Vec<(u32, f64)>>,
    left_marg: Vec<f64>,
    right_marg: Vec<f64>,
    unigram: Vec<u64>,
    total: f64,
}

impl BigramStats {
    pub fn from_sequences<'a>(vocab_size: usize, seqs: impl IntoIterator<Item = &'a [u32]>) -> Self {
        let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
        let mut unigram = vec![0u64; vocab_size];
        for s in seqs {
            for &t in s {
                unigram[t as usize] += 1;
            }
            for w in s.windows(2) {
                *pairs.entry((w[0], w[1])).or_default() += 1;
            }
        }
        let mut sorted: Vec<((u32, u32), u64)> = pairs.into_iter().collect();
        sorted.sort_unstable();
        let mut right = vec![Vec::new(); vocab_size];
        let mut left = vec![Vec::new(); vocab_size];
        let mut left_marg = vec![0.0; vocab_size];
        let mut right_marg = vec![0.0; vocab_size];
        let mut total = 0.0;
        for ((x, y), c) in sorted {
            let c = c as f64;
            right[x as usize].push((y, c));
            left[y as usize].push((x, c));
            left_marg[x as usize] += c;
            right_marg[y as usize] += c;
            total += c;
        }
        Self {
            right,
            left,
            left_marg,
            right_marg,
            unigram,
            total,
        }
    }

    pub fn from_corpus(corpus: &LabeledCorpus) -> Self {
        Self::from_sequences(
            corpus.vocabulary().len(),
            corpus.documents().iter().map(Document::tokens),
        )
    }

    pub fn vocab_size(&self) -> usize {
        self.unigram.len()
    }

    /// Average mutual information (nats) of adjacent classes under `map`.
    pub fn average_mutual_information(&self, map: &WordClassMap) -> f64 {
        let c = map.num_classes();
        let mut joint = vec![0.0; c * c];
        let mut pl = vec![0.0; c];
        let mut pr = vec![0.0; c];
        for (x, row) in self.right.iter().enumerate() {
            let cx = map.class_of(x as u32) as usize;
            pl[cx] += self.left_marg[x];
            pr[cx] += self.right_marg[x];
            for &(y, n) in row {
                joint[cx * c + map.class_of(y) as usize] += n;
            }
        }
        let mut ami = 0.0;
        for a in 0..c {
            for b in 0..c {
                ami += q_term(joint[a * c + b], pl[a], pr[b], self.total);
            }
        }
        ami
    }
}

/// `p(a,b) log(p(a,b) / (p_l(a) p_r(b)))` from raw counts.
#[inline]
fn q_term(joint: f64, left: f64, right: f64, total: f64) -> f64 {
    if joint <= 0.0 {
        0.0
    } else {
        joint / total * (joint * total / (left * right)).ln()
    }
}

/// Working set of clusters for the windowed agglomeration.
struct Window<'a> {
    stats: &'a BigramStats,
    slots: usize,
    active: Vec<bool>,
    members: Vec<Vec<u32>>,
    pl: Vec<f64>,
    pr: Vec<f64>,
    /// `joint[s * slots + t]`: bigram count from cluster `s` to cluster `t`.
    joint: Vec<f64>,
    slot_of: Vec<Option<usize>>,
    /// Merge loss for active pairs `s < t`, at `s * slots + t`.
    loss: Vec<f64>,
}

impl<'a> Window<'a> {
    fn new(stats: &'a BigramStats, slots: usize) -> Self {
        Self {
            stats,
            slots,
            active: vec![false; slots],
            members: vec![Vec::new(); slots],
            pl: vec![0.0; slots],
            pr: vec![0.0; slots],
            joint: vec![0.0; slots * slots],
            slot_of: vec![None; stats.vocab_size()],
            loss: vec![0.0; slots * slots],
        }
    }

    #[inline]
    fn j(&self, s: usize, t: usize) -> f64 {
        self.joint[s * self.slots + t]
    }

    #[inline]
    fn q(&self, s: usize, t: usize) -> f64 {
        q_term(self.j(s, t), self.pl[s], self.pr[t], self.stats.total)
    }

    /// Symmetric AMI contribution of the (s, t) cell pair.
    #[inline]
    fn w(&self, s: usize, t: usize) -> f64 {
        if s == t {
            self.q(s, s)
        } else {
            self.q(s, t) + self.q(t, s)
        }
    }

    /// Contribution between the hypothetical union of `s, t` and cluster `k`.
    #[inline]
    fn w_union(&self, s: usize, t: usize, k: usize) -> f64 {
        let total = self.stats.total;
        let pl = self.pl[s] + self.pl[t];
        let pr = self.pr[s] + self.pr[t];
        q_term(self.j(s, k) + self.j(t, k), pl, self.pr[k], total)
            + q_term(self.j(k, s) + self.j(k, t), self.pl[k], pr, total)
    }

    /// Summand of `loss(s, t)` contributed by a third cluster `k`.
    #[inline]
    fn summand(&self, s: usize, t: usize, k: usize) -> f64 {
        self.w(s, k) + self.w(t, k) - self.w_union(s, t, k)
    }

    fn full_loss(&self, s: usize, t: usize) -> f64 {
        let total = self.stats.total;
        let self_union = q_term(
            self.j(s, s) + self.j(s, t) + self.j(t, s) + self.j(t, t),
            self.pl[s] + self.pl[t],
            self.pr[s] + self.pr[t],
            total,
        );
        let mut l = self.w(s, s) + self.w(t, t) + self.w(s, t) - self_union;
        for k in 0..self.slots {
            if self.active[k] && k != s && k != t {
                l += self.summand(s, t, k);
            }
        }
        l
    }

    fn active_slots(&self) -> Vec<usize> {
        (0..self.slots).filter(|&s| self.active[s]).collect()
    }

    fn place(&mut self, word: u32, slot: usize) {
        let n = self.slots;
        self.active[slot] = true;
        self.members[slot] = vec![word];
        self.slot_of[word as usize] = Some(slot);
        self.pl[slot] = self.stats.left_marg[word as usize];
        self.pr[slot] = self.stats.right_marg[word as usize];
        for t in 0..n {
            self.joint[slot * n + t] = 0.0;
            self.joint[t * n + slot] = 0.0;
        }
        for &(y, c) in &self.stats.right[word as usize] {
            if let Some(t) = self.slot_of[y as usize] {
                self.joint[slot * n + t] += c;
            }
        }
        for &(x, c) in &self.stats.left[word as usize] {
            if let Some(t) = self.slot_of[x as usize] {
                if x != word {
                    self.joint[t * n + slot] += c;
                }
            }
        }
    }

    /// Adds `word` as a new cluster and updates the loss table.
    fn insert(&mut self, word: u32, slot: usize) {
        self.place(word, slot);
        let act = self.active_slots();
        for (a, &s) in act.iter().enumerate() {
            for &t in &act[a + 1..] {
                if s == slot || t == slot {
                    continue;
                }
                let d = self.summand(s, t, slot);
                self.loss[s * self.slots + t] += d;
            }
        }
        for &s in &act {
            if s != slot {
                let (a, b) = (s.min(slot), s.max(slot));
                self.loss[a * self.slots + b] = self.full_loss(a, b);
            }
        }
    }

    fn best_pair(&self) -> (usize, usize) {
        let act = self.active_slots();
        let mut best = (act[0], act[1]);
        let mut best_loss = f64::INFINITY;
        for (a, &s) in act.iter().enumerate() {
            for &t in &act[a + 1..] {
                let l = self.loss[s * self.slots + t];
                if l < best_loss {
                    best_loss = l;
                    best = (s, t);
                }
            }
        }
        best
    }

    /// Merges cluster `b` into `a` (`a < b`), freeing slot `b`.
    fn merge(&mut self, a: usize, b: usize) {
        let n = self.slots;
        let others: Vec<usize> = self
            .active_slots()
            .into_iter()
            .filter(|&k| k != a && k != b)
            .collect();
        for (x, &s) in others.iter().enumerate() {
            for &t in &others[x + 1..] {
                let d = self.summand(s, t, a) + self.summand(s, t, b);
                self.loss[s * n + t] -= d;
            }
        }
        for k in 0..n {
            self.joint[a * n + k] += self.joint[b * n + k];
        }
        for k in 0..n {
            self.joint[k * n + a] += self.joint[k * n + b];
        }
        for k in 0..n {
            self.joint[b * n + k] = 0.0;
            self.joint[k * n + b] = 0.0;
        }
        self.pl[a] += self.pl[b];
        self.pr[a] += self.pr[b];
        self.pl[b] = 0.0;
        self.pr[b] = 0.0;
        let moved = std::mem::take(&mut self.members[b]);
        for &w in &moved {
            self.slot_of[w as usize] = Some(a);
        }
        self.members[a].extend(moved);
        self.active[b] = false;
        for (x, &s) in others.iter().enumerate() {
            for &t in &others[x + 1..] {
                let d = self.summand(s, t, a);
                self.loss[s * n + t] += d;
            }
        }
        for &k in &others {
            let (s, t) = (k.min(a), k.max(a));
            self.loss[s * n + t] = self.full_loss(s, t);
        }
    }
}

/// Flat Brown clustering of the corpus vocabulary into `num_classes` classes.
///
/// Words are visited by descending corpus frequency (ties by id). The first
/// `num_classes` seed the working set; each later word joins as a new cluster
/// and the pair whose merge loses the least average mutual information is
/// merged. Class ids follow the frequency rank of each class' first word.
pub fn brown_cluster(corpus: &LabeledCorpus, num_classes: usize) -> Result<WordClassMap> {
    brown_cluster_stats(&BigramStats::from_corpus(corpus), num_classes)
}

pub fn brown_cluster_stats(stats: &BigramStats, num_classes: usize) -> Result<WordClassMap> {
    let v = stats.vocab_size();
    if num_classes < 2 {
        return Err(Error::InvalidArgument("num_classes must be at least 2".into()));
    }
    if v < num_classes {
        return Err(Error::InvalidArgument(format!(
            "vocabulary of {v} words is smaller than {num_classes} classes"
        )));
    }
    let mut order: Vec<u32> = (0..v as u32).collect();
    order.sort_by(|&a, &b| stats.unigram[b as usize].cmp(&stats.unigram[a as usize]).then(a.cmp(&b)));

    let mut win = Window::new(stats, num_classes + 1);
    for (slot, &w) in order[..num_classes].iter().enumerate() {
        win.place(w, slot);
    }
    if v > num_classes {
        let act = win.active_slots();
        for (x, &s) in act.iter().enumerate() {
            for &t in &act[x + 1..] {
                win.loss[s * win.slots + t] = win.full_loss(s, t);
            }
        }
        for &w in &order[num_classes..] {
            let free = (0..win.slots).find(|&s| !win.active[s]).expect("one free slot");
            win.insert(w, free);
            let (a, b) = win.best_pair();
            win.merge(a, b);
        }
    }

    let rank: Vec<usize> = {
        let mut r = vec![0; v];
        for (i, &w) in order.iter().enumerate() {
            r[w as usize] = i;
        }
        r
    };
    let mut clusters: Vec<&Vec<u32>> = win.members.iter().filter(|m| !m.is_empty()).collect();
    clusters.sort_by_key(|m| m.iter().map(|&w| rank[w as usize]).min());
    let mut class_of = vec![0u32; v];
    for (c, m) in clusters.iter().enumerate() {
        for &w in m.iter() {
            class_of[w as usize] = c as u32;
        }
    }
    WordClassMap::from_assignment(class_of)
}

/// Weighting for [`class_tf_vector`].
#[derive(Debug, Clone, PartialEq)]
pub enum ClassWeighting {
    Tf,
    /// Per-class `ln(N / df)` fitted on a document set.
    TfIdf(Vec<f64>),
}

impl ClassWeighting {
    pub fn fit_idf<'a>(docs: impl IntoIterator<Item = &'a Document>, map: &WordClassMap) -> Self {
        let mut df = vec![0usize; map.num_classes()];
        let mut n = 0usize;
        for d in docs {
            n += 1;
            let mut seen = vec![false; map.num_classes()];
            for &t in d.tokens() {
                seen[map.class_of(t) as usize] = true;
            }
            for (c, s) in seen.into_iter().enumerate() {
                df[c] += usize::from(s);
            }
        }
        ClassWeighting::TfIdf(
            df.into_iter()
                .map(|d| if d == 0 { 0.0 } else { (n as f64 / d as f64).ln() })
                .collect(),
        )
    }
}

/// Unnormalised class counts of a token sequence.
pub fn class_counts(tokens: &[u32], map: &WordClassMap) -> Vec<f64> {
    let mut counts = vec![0.0; map.num_classes()];
    for &t in tokens {
        counts[map.class_of(t) as usize] += 1.0;
    }
    counts
}

/// L2-normalised (weighted) word-class histogram of a document.
pub fn class_tf_vector(doc: &Document, map: &WordClassMap, weighting: &ClassWeighting) -> Result<DocumentVector> {
    if doc.tokens().iter().any(|&t| t as usize >= map.vocab_size()) {
        return Err(Error::VocabularyMismatch(format!(
            "document {} has tokens outside the class map",
            doc.id()
        )));
    }
    let mut v = class_counts(doc.tokens(), map);
    if let ClassWeighting::TfIdf(idf) = weighting {
        for (x, w) in v.iter_mut().zip(idf) {
            *x *= w;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        warn!("document {} has an all-zero class histogram", doc.id());
    }
    Ok(DocumentVector::new(v, Recipe::ClassTf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenPolicy;

    fn toy_corpus(texts: &[&str]) -> LabeledCorpus {
        let policy = TokenPolicy {
            min_count: 1,
            sentence_boundaries: false,
            eos_at_doc_end: false,
            ..TokenPolicy::default()
        };
        let ids: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
        LabeledCorpus::from_texts(ids.iter().zip(texts).map(|(i, t)| (i.as_str(), "g", *t)), policy)
            .unwrap()
            .0
    }

    #[test]
    fn vocabulary_sized_clustering_is_singletons_without_loss() {
        let c = toy_corpus(&["a b c a b", "c a"]);
        let v = c.vocabulary().len();
        let map = brown_cluster(&c, v).unwrap();
        assert_eq!(map.num_classes(), v);
        assert!(map.members(0).len() == 1);
        let stats = BigramStats::from_corpus(&c);
        let ami = stats.average_mutual_information(&map);
        let exact = stats.average_mutual_information(&WordClassMap::singletons(v));
        assert!((ami - exact).abs() < 1e-15);
    }

    #[test]
    fn too_many_classes_is_fatal() {
        let c = toy_corpus(&["a b"]);
        assert!(brown_cluster(&c, c.vocabulary().len() + 1).is_err());
        assert!(brown_cluster(&c, 1).is_err());
    }

    #[test]
    fn class_map_export_round_trips() {
        let c = toy_corpus(&["x y z x y z"]);
        let map = brown_cluster(&c, 2).unwrap();
        let text = map.export(c.vocabulary());
        assert_eq!(WordClassMap::import(&text, c.vocabulary()).unwrap(), map);
        assert!(text.starts_with("<unk>\t"));
    }

    #[test]
    fn empty_class_is_rejected() {
        assert!(WordClassMap::from_assignment(vec![0, 2, 2]).is_err());
    }

    #[test]
    fn one_hot_and_hand_counted_histograms() {
        let c = toy_corpus(&["p r q p s", "q"]);
        let vocab = c.vocabulary();
        let mut assign = vec![0u32; vocab.len()];
        for (w, class) in [("p", 0), ("q", 3), ("r", 2), ("s", 1), ("<unk>", 1), ("</s>", 1)] {
            assign[vocab.id(w).unwrap() as usize] = class;
        }
        let map = WordClassMap::from_assignment(assign).unwrap();
        let v = class_tf_vector(&c.documents()[1], &map, &ClassWeighting::Tf).unwrap();
        assert_eq!(v.values, [0.0, 0.0, 0.0, 1.0]);
        let counts = class_counts(c.documents()[0].tokens(), &map);
        assert_eq!(counts, [2.0, 1.0, 1.0, 1.0]);
        assert_eq!(counts.iter().sum::<f64>(), 5.0);

        let c = toy_corpus(&["p r q p", "q s"]);
        let vocab = c.vocabulary();
        let mut assign = vec![1u32; vocab.len()];
        for (w, class) in [("p", 0), ("q", 3), ("r", 2)] {
            assign[vocab.id(w).unwrap() as usize] = class;
        }
        let map = WordClassMap::from_assignment(assign).unwrap();
        let v = class_tf_vector(&c.documents()[0], &map, &ClassWeighting::Tf).unwrap();
        let n = 6.0f64.sqrt();
        assert_eq!(v.dim(), 4);
        for (a, b) in v.values.iter().zip([2.0 / n, 0.0, 1.0 / n, 1.0 / n]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Every partition of `0..v` into exactly `k` nonempty classes.
    fn partitions(v: usize, k: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; v];
        fn rec(i: usize, used: u32, k: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i == cur.len() {
                if used == k {
                    out.push(cur.clone());
                }
                return;
            }
            for c in 0..=used.min(k - 1) {
                cur[i] = c;
                rec(i + 1, used.max(c + 1), k, cur, out);
            }
        }
        rec(0, 0, k as u32, &mut cur, &mut out);
        out
    }

    #[test]
    fn two_classes_match_exhaustive_ami_optimum() {
        let stats = BigramStats::from_sequences(4, [&[0u32, 2, 1, 3, 0, 3, 1, 2, 0, 2, 1, 3][..]]);
        let best = partitions(4, 2)
            .into_iter()
            .map(|p| {
                let m = WordClassMap::from_assignment(p).unwrap();
                (stats.average_mutual_information(&m), m)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let map = brown_cluster_stats(&stats, 2).unwrap();
        assert!((stats.average_mutual_information(&map) - best.0).abs() < 1e-12);
        assert_eq!(map.class_of(0), map.class_of(1));
        assert_eq!(map.class_of(2), map.class_of(3));
        assert_ne!(map.class_of(0), map.class_of(2));
    }

    #[test]
    fn clustering_beats_random_partitions() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let spec = crate::corpus::GeneratorSpec::markov(2, 30, 10, (80, 120), 3, 0.05, 4);
        let corpus = crate::corpus::synth_corpus(&spec, 9).unwrap();
        let stats = BigramStats::from_corpus(&corpus);
        let k = 6;
        let ami = stats.average_mutual_information(&brown_cluster_stats(&stats, k).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = stats.vocab_size();
        for _ in 0..50 {
            let mut assign: Vec<u32> = (0..v).map(|i| (i % k) as u32).collect();
            assign.shuffle(&mut rng);
            let random = stats.average_mutual_information(&WordClassMap::from_assignment(assign).unwrap());
            assert!(ami >= random, "{ami} < {random}");
        }
    }
}
