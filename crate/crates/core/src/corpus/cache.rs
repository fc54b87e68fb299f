//! Line-oriented corpus cache.
//!
//! ```text
//! docvec-corpus<TAB><version>
//! policy<TAB><token policy as JSON>
//! doc<TAB><id><TAB><genre><TAB><raw word count><TAB><space-separated surface tokens>
//! ```
//!
//! The vocabulary is rebuilt from the surface tokens on load.

use std::fmt::Write as _;
use std::path::Path;

use super::{LabeledCorpus, RawDocument, TokenPolicy};
use crate::{Error, Result};

pub const CORPUS_CACHE_VERSION: u32 = 1;
const HEADER: &str = "docvec-corpus";

impl LabeledCorpus {
    pub fn to_cache_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}\t{CORPUS_CACHE_VERSION}");
        let policy = serde_json::to_string(&self.policy).expect("policy serialises");
        let _ = writeln!(out, "policy\t{policy}");
        for d in &self.documents {
            let _ = writeln!(
                out,
                "doc\t{}\t{}\t{}\t{}",
                d.id,
                d.genre,
                d.raw_word_count,
                d.surface.join(" ")
            );
        }
        out
    }

    pub fn from_cache_str(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("corpus cache", msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        match header.split_once('\t') {
            Some((HEADER, v)) if v.parse::<u32>().ok() == Some(CORPUS_CACHE_VERSION) => {}
            _ => return Err(bad(format!("unsupported header {header:?}"))),
        }
        let policy_line = lines.next().ok_or_else(|| bad("missing policy".into()))?;
        let policy: TokenPolicy = match policy_line.split_once('\t') {
            Some(("policy", json)) => serde_json::from_str(json).map_err(|e| bad(e.to_string()))?,
            _ => return Err(bad("missing policy".into())),
        };
        let mut raw = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.splitn(5, '\t').collect();
            let [tag, id, genre, count, toks] = fields[..] else {
                return Err(bad(format!("line {}: expected 5 fields", i + 3)));
            };
            if tag != "doc" {
                return Err(bad(format!("line {}: unknown record {tag:?}", i + 3)));
            }
            raw.push(RawDocument {
                id: id.to_owned(),
                genre: genre.to_owned(),
                raw_word_count: count.parse().map_err(|_| bad(format!("line {}: bad count", i + 3)))?,
                surface: toks.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect(),
            });
        }
        LabeledCorpus::from_raw(raw, policy)
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_cache_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_cache_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trips() {
        let (c, _) = LabeledCorpus::from_texts(
            [("a/1.txt", "news", "The cat sat. It purred!"), ("b/2.txt", "fiction", "Once, there was.")],
            TokenPolicy {
                min_count: 1,
                ..TokenPolicy::default()
            },
        )
        .unwrap();
        let text = c.to_cache_string();
        let back = LabeledCorpus::from_cache_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_cache_string(), text);
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(LabeledCorpus::from_cache_str("docvec-corpus\t99\npolicy\t{}\n").is_err());
    }
}
