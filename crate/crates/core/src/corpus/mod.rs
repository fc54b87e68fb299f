//! Genre-labelled document collections: ingestion, vocabulary, the
//! dataset-construction filters and a synthetic Markov generator.

mod cache;
mod synth;
mod tokenize;
mod vocab;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

pub use cache::CORPUS_CACHE_VERSION;
pub use synth::{synth_corpus, GeneratorSpec, GenreSource};
pub use tokenize::{tokenize, PreFilter, TokenPolicy, EOS_TOKEN, UNK_TOKEN};
pub use vocab::Vocabulary;

use crate::{Error, Result};

/// One tokenised, labelled document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    genre: String,
    tokens: Vec<u32>,
    raw_word_count: usize,
    surface: Vec<String>,
}

impl Document {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn genre(&self) -> &str {
        &self.genre
    }

    /// Token ids under the owning corpus' vocabulary.
    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Number of word tokens before vocabulary mapping (punctuation and
    /// sentence markers excluded).
    pub fn raw_word_count(&self) -> usize {
        self.raw_word_count
    }

    /// Surface tokens the ids were mapped from.
    pub fn surface(&self) -> &[String] {
        &self.surface
    }
}

/// A document before vocabulary mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub genre: String,
    pub surface: Vec<String>,
    pub raw_word_count: usize,
}

impl RawDocument {
    pub fn from_text(id: &str, genre: &str, text: &str, policy: &TokenPolicy) -> Self {
        let (surface, raw_word_count) = tokenize(text, policy);
        Self {
            id: id.to_owned(),
            genre: genre.to_owned(),
            surface,
            raw_word_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreCount {
    pub genre: String,
    pub documents: usize,
}

/// Documents sharing one vocabulary, with the genre inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    documents: Vec<Document>,
    vocabulary: Vocabulary,
    genres: Vec<GenreCount>,
    policy: TokenPolicy,
}

impl LabeledCorpus {
    /// Builds the vocabulary over `raw` and encodes every document.
    pub fn from_raw(raw: Vec<RawDocument>, policy: TokenPolicy) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Ingest("corpus has no documents".into()));
        }
        let mut seen = HashSet::new();
        for d in &raw {
            if d.id.is_empty() || d.id.contains(['\t', '\n', '\r']) {
                return Err(Error::Ingest(format!("invalid document id {:?}", d.id)));
            }
            if d.genre.trim().is_empty() || d.genre.contains(['\t', '\n', '\r']) {
                return Err(Error::Ingest(format!("document {} has an invalid genre label", d.id)));
            }
            if d.surface.is_empty() {
                return Err(Error::Ingest(format!("document {} is empty", d.id)));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Ingest(format!("duplicate document id {}", d.id)));
            }
        }
        let vocabulary = Vocabulary::build(
            raw.iter().map(|d| d.surface.as_slice()),
            policy.min_count,
            policy.max_vocab,
        );
        let documents: Vec<Document> = raw
            .into_iter()
            .map(|d| Document {
                tokens: vocabulary.encode(&d.surface),
                id: d.id,
                genre: d.genre,
                raw_word_count: d.raw_word_count,
                surface: d.surface,
            })
            .collect();
        let genres = count_genres(&documents);
        Ok(Self {
            documents,
            vocabulary,
            genres,
            policy,
        })
    }

    /// Tokenises `(id, genre, text)` triples. Documents with no tokens are
    /// skipped with a warning; their ids are returned alongside the corpus.
    pub fn from_texts<'a, I>(texts: I, policy: TokenPolicy) -> Result<(Self, Vec<String>)>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut raw = Vec::new();
        let mut skipped = Vec::new();
        for (id, genre, text) in texts {
            let doc = RawDocument::from_text(id, genre, text, &policy);
            if doc.surface.is_empty() {
                warn!("skipping empty document {id}");
                skipped.push(id.to_owned());
            } else {
                raw.push(doc);
            }
        }
        Ok((Self::from_raw(raw, policy)?, skipped))
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Genres in lexicographic order with their document counts.
    pub fn genres(&self) -> &[GenreCount] {
        &self.genres
    }

    pub fn policy(&self) -> &TokenPolicy {
        &self.policy
    }

    pub fn num_genres(&self) -> usize {
        self.genres.len()
    }

    pub fn genre_index(&self, genre: &str) -> Option<usize> {
        self.genres
            .binary_search_by(|g| g.genre.as_str().cmp(genre))
            .ok()
    }

    /// Genre index of every document, in document order.
    pub fn labels(&self) -> Vec<usize> {
        self.documents
            .iter()
            .map(|d| self.genre_index(&d.genre).expect("genre inventory is complete"))
            .collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    /// The documents at `indices` (in that order), keeping this corpus'
    /// vocabulary so token ids stay comparable.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty document selection".into()));
        }
        let documents: Vec<Document> = indices.iter().map(|&i| self.documents[i].clone()).collect();
        let genres = count_genres(&documents);
        Ok(Self {
            documents,
            vocabulary: self.vocabulary.clone(),
            genres,
            policy: self.policy.clone(),
        })
    }

    /// Every document re-encoded under a vocabulary built only from the
    /// documents at `fit_indices`.
    pub fn revocabulate(&self, fit_indices: &[usize]) -> Result<Self> {
        if fit_indices.is_empty() {
            return Err(Error::InvalidArgument("empty vocabulary fit set".into()));
        }
        let vocabulary = Vocabulary::build(
            fit_indices.iter().map(|&i| self.documents[i].surface.as_slice()),
            self.policy.min_count,
            self.policy.max_vocab,
        );
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                tokens: vocabulary.encode(&d.surface),
                ..d.clone()
            })
            .collect();
        Ok(Self {
            documents,
            vocabulary,
            genres: self.genres.clone(),
            policy: self.policy.clone(),
        })
    }
}

fn count_genres(documents: &[Document]) -> Vec<GenreCount> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in documents {
        *counts.entry(d.genre.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(g, n)| GenreCount {
            genre: g.to_owned(),
            documents: n,
        })
        .collect()
}

/// Outcome of manifest ingestion.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub corpus: LabeledCorpus,
    /// Manifest entries rejected because they contained no tokens.
    pub skipped_empty: Vec<PathBuf>,
}

/// Parses a manifest: one `<relative-path>\t<genre>` record per line, paths
/// relative to the manifest's directory. Blank lines and `#` comments are
/// ignored.
pub fn parse_manifest(manifest: &Path) -> Result<Vec<(PathBuf, String)>> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Error::Ingest(format!("cannot read manifest {}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(path), Some(genre), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(
                "manifest",
                format!("{}:{}: expected `<path>\\t<genre>`", manifest.display(), lineno + 1),
            ));
        };
        let genre = genre.trim();
        if path.is_empty() || genre.is_empty() {
            return Err(Error::format(
                "manifest",
                format!("{}:{}: empty path or genre", manifest.display(), lineno + 1),
            ));
        }
        out.push((base.join(path), genre.to_owned()));
    }
    Ok(out)
}

/// Reads every manifest entry, tokenises it and builds the shared vocabulary.
/// Document ids are the manifest's relative paths.
pub fn load_corpus_report(manifest: &Path, policy: &TokenPolicy) -> Result<IngestReport> {
    let entries = parse_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut raw = Vec::with_capacity(entries.len());
    let mut skipped_empty = Vec::new();
    for (path, genre) in entries {
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::Ingest(format!("cannot read document {}: {e}", path.display())))?;
        let text = String::from_utf8_lossy(&bytes);
        let id = path
            .strip_prefix(base)
            .unwrap_or(&path)
            .to_string_lossy()
            .into_owned();
        let doc = RawDocument::from_text(&id, &genre, &text, policy);
        if doc.surface.is_empty() {
            warn!("rejecting empty document {}", path.display());
            skipped_empty.push(path);
            continue;
        }
        raw.push(doc);
    }
    let corpus = LabeledCorpus::from_raw(raw, policy.clone())?;
    Ok(IngestReport {
        corpus,
        skipped_empty,
    })
}

pub fn load_corpus(manifest: &Path, policy: &TokenPolicy) -> Result<LabeledCorpus> {
    load_corpus_report(manifest, policy).map(|r| r.corpus)
}

/// Dataset-construction filter settings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocumentFilter {
    pub min_words: usize,
    /// At most this many documents per genre, keeping the lexicographically
    /// smallest ids. `None` means uncapped.
    pub per_genre_cap: Option<usize>,
    pub drop_genres: BTreeSet<String>,
}

/// Removes short documents and dropped genres, caps each genre, and rebuilds
/// the vocabulary over the survivors.
pub fn filter_documents(corpus: &LabeledCorpus, filter: &DocumentFilter) -> Result<LabeledCorpus> {
    let mut survivors: Vec<&Document> = corpus
        .documents
        .iter()
        .filter(|d| d.raw_word_count >= filter.min_words && !filter.drop_genres.contains(&d.genre))
        .collect();
    if let Some(cap) = filter.per_genre_cap {
        let mut by_genre: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for d in &survivors {
            by_genre.entry(d.genre.as_str()).or_default().push(d.id.as_str());
        }
        let keep: HashSet<&str> = by_genre
            .into_values()
            .flat_map(|mut ids| {
                ids.sort_unstable();
                ids.truncate(cap);
                ids
            })
            .collect();
        survivors.retain(|d| keep.contains(d.id.as_str()));
    }
    if survivors.is_empty() {
        return Err(Error::InvalidArgument("filtering removed every document".into()));
    }
    let raw = survivors
        .into_iter()
        .map(|d| RawDocument {
            id: d.id.clone(),
            genre: d.genre.clone(),
            surface: d.surface.clone(),
            raw_word_count: d.raw_word_count,
        })
        .collect();
    LabeledCorpus::from_raw(raw, corpus.policy.clone())
}

/// Relabels genres through `mapping`; unmapped genres keep their label.
pub fn merge_genres(corpus: &LabeledCorpus, mapping: &BTreeMap<String, String>) -> Result<LabeledCorpus> {
    for (from, to) in mapping {
        if corpus.genre_index(from).is_none() {
            return Err(Error::InvalidArgument(format!("genre `{from}` is not in the corpus")));
        }
        if to.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("genre `{from}` mapped to an empty label")));
        }
    }
    let mut out = corpus.clone();
    for d in &mut out.documents {
        if let Some(to) = mapping.get(&d.genre) {
            d.genre = to.trim().to_owned();
        }
    }
    out.genres = count_genres(&out.documents);
    Ok(out)
}

/// The six imaginative-prose categories of the Brown Corpus collapsed into a
/// single `fiction` genre, leaving 10 genres.
pub fn brown_fiction_merge() -> BTreeMap<String, String> {
    ["fiction", "mystery", "science_fiction", "adventure", "romance", "humor"]
        .into_iter()
        .map(|g| (g.to_owned(), "fiction".to_owned()))
        .collect()
}

/// Converts an NLTK-style `cats.txt` (`<file> <category>` per line) into
/// manifest text.
pub fn manifest_from_categories(cats: &str) -> Result<String> {
    let mut out = String::new();
    for (i, line) in cats.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(file), Some(cat), None) => {
                out.push_str(file);
                out.push('\t');
                out.push_str(cat);
                out.push('\n');
            }
            _ => {
                return Err(Error::format(
                    "category list",
                    format!("line {}: expected `<file> <category>`", i + 1),
                ))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> TokenPolicy {
        TokenPolicy {
            min_count: 1,
            ..TokenPolicy::default()
        }
    }

    fn corpus_with_lengths(lengths: &[usize]) -> LabeledCorpus {
        let texts: Vec<(String, String, String)> = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                (
                    format!("d{i}"),
                    if i % 2 == 0 { "a" } else { "b" }.to_owned(),
                    vec!["w"; n].join(" "),
                )
            })
            .collect();
        LabeledCorpus::from_texts(
            texts.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())),
            policy(),
        )
        .unwrap()
        .0
    }

    #[test]
    fn min_words_filter_counts_survivors() {
        let c = corpus_with_lengths(&[50, 250, 300, 10, 500]);
        let f = DocumentFilter {
            min_words: 200,
            ..Default::default()
        };
        let out = filter_documents(&c, &f).unwrap();
        let ids: Vec<_> = out.documents().iter().map(|d| d.id()).collect();
        assert_eq!(ids, ["d1", "d2", "d4"]);
    }

    #[test]
    fn identity_filter_leaves_corpus_unchanged() {
        let c = corpus_with_lengths(&[5, 6, 7]);
        assert_eq!(filter_documents(&c, &DocumentFilter::default()).unwrap(), c);
    }

    #[test]
    fn cap_keeps_smallest_ids_and_drop_removes_genres() {
        let c = corpus_with_lengths(&[3, 3, 3, 3, 3, 3, 3]);
        let f = DocumentFilter {
            min_words: 0,
            per_genre_cap: Some(2),
            drop_genres: ["b".to_owned()].into(),
        };
        let out = filter_documents(&c, &f).unwrap();
        let ids: Vec<_> = out.documents().iter().map(|d| d.id()).collect();
        assert_eq!(ids, ["d0", "d2"]);
        assert_eq!(out.genres().len(), 1);
    }

    #[test]
    fn filtering_everything_is_fatal() {
        let c = corpus_with_lengths(&[3, 4]);
        let f = DocumentFilter {
            min_words: 100,
            ..Default::default()
        };
        assert!(filter_documents(&c, &f).is_err());
    }

    #[test]
    fn merge_sums_genre_counts() {
        let texts = [("1", "x", "a"), ("2", "y", "a"), ("3", "z", "a"), ("4", "z", "a")];
        let (c, _) = LabeledCorpus::from_texts(texts, policy()).unwrap();
        let mapping: BTreeMap<String, String> = [("x".to_owned(), "z".to_owned())].into();
        let out = merge_genres(&c, &mapping).unwrap();
        let counts: Vec<_> = out.genres().iter().map(|g| (g.genre.as_str(), g.documents)).collect();
        assert_eq!(counts, [("y", 1), ("z", 3)]);
    }

    #[test]
    fn merge_rejects_empty_label_and_unknown_genre() {
        let (c, _) = LabeledCorpus::from_texts([("1", "x", "a"), ("2", "y", "b")], policy()).unwrap();
        let empty: BTreeMap<String, String> = [("x".to_owned(), " ".to_owned())].into();
        assert!(merge_genres(&c, &empty).is_err());
        let unknown: BTreeMap<String, String> = [("q".to_owned(), "x".to_owned())].into();
        assert!(merge_genres(&c, &unknown).is_err());
        let identity: BTreeMap<String, String> = [("x".to_owned(), "x".to_owned())].into();
        assert_eq!(merge_genres(&c, &identity).unwrap(), c);
    }

    #[test]
    fn brown_merge_yields_ten_genres() {
        let brown = [
            "adventure", "belles_lettres", "editorial", "fiction", "government", "hobbies",
            "humor", "learned", "lore", "mystery", "news", "religion", "reviews", "romance",
            "science_fiction",
        ];
        let texts: Vec<(String, &str)> = brown.iter().map(|g| (format!("{g}01"), *g)).collect();
        let (c, _) =
            LabeledCorpus::from_texts(texts.iter().map(|(id, g)| (id.as_str(), *g, "some text")), policy())
                .unwrap();
        assert_eq!(c.num_genres(), 15);
        let merged = merge_genres(&c, &brown_fiction_merge()).unwrap();
        assert_eq!(merged.num_genres(), 10);
        assert_eq!(merged.genres().iter().find(|g| g.genre == "fiction").unwrap().documents, 6);
    }

    #[test]
    fn category_list_becomes_manifest() {
        let m = manifest_from_categories("ca01 news\nck02 fiction\n\n").unwrap();
        assert_eq!(m, "ca01\tnews\nck02\tfiction\n");
        assert!(manifest_from_categories("ca01\n").is_err());
    }

    #[test]
    fn revocabulate_uses_only_fit_documents() {
        let (c, _) = LabeledCorpus::from_texts(
            [("1", "x", "alpha beta"), ("2", "y", "gamma beta")],
            policy(),
        )
        .unwrap();
        let r = c.revocabulate(&[0]).unwrap();
        assert!(r.vocabulary().id("gamma").is_none());
        assert_eq!(r.documents()[1].tokens()[0], Vocabulary::UNK);
        assert_eq!(r.genres(), c.genres());
    }
}
