//! Document vectors, their recipes and the text export format.
//!
//! Export records are one line per document:
//!
//! ```text
//! <doc id>\t<recipe>\t<dim>\t<space-separated values>
//! ```
//!
//! preceded by `# docvec-dv <version>` and `# fingerprint <hex>` header lines.
//! Values use the shortest decimal form that parses back to the same `f64`,
//! so export → import → export is bit-exact.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DV_EXPORT_VERSION: u32 = 1;

/// How a document vector was built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Recipe {
    /// Column-major `vec(H)` of an adapted RNN-LM.
    DvRnnH,
    /// Column-major `vec(K)` of an adapted RNN-LM.
    DvRnnK,
    /// `[vec(H); vec(K)]`.
    DvRnnHk,
    /// The four normalised LSTM gate/cell bias blocks.
    DvLstmBm,
    /// Gate/cell blocks followed by the normalised sigmoid-layer bias.
    DvLstmBa,
    /// Normalised class-layer bias.
    DvLstmBc,
    /// `[n(b_a); n(b_c)]`, the full LSTM document vector.
    DvLstmDm,
    /// n-gram TF-IDF with order `n` and `top_k` selected terms.
    Tfidf { n: usize, top_k: usize },
    /// Word-class frequency histogram.
    ClassTf,
    /// Distributed-memory paragraph vector.
    Pvdm,
    /// Seeded Gaussian noise of the given dimension (control feature).
    Random { dim: usize },
    /// Block-wise normalised concatenation.
    Concat(Vec<Recipe>),
}

impl Recipe {
    /// Recipes computed from adapted language models.
    pub fn is_adapted(&self) -> bool {
        matches!(
            self,
            Recipe::DvRnnH
                | Recipe::DvRnnK
                | Recipe::DvRnnHk
                | Recipe::DvLstmBm
                | Recipe::DvLstmBa
                | Recipe::DvLstmBc
                | Recipe::DvLstmDm
        )
    }

    pub fn is_rnn(&self) -> bool {
        matches!(self, Recipe::DvRnnH | Recipe::DvRnnK | Recipe::DvRnnHk)
    }

    pub fn is_lstm(&self) -> bool {
        matches!(
            self,
            Recipe::DvLstmBm | Recipe::DvLstmBa | Recipe::DvLstmBc | Recipe::DvLstmDm
        )
    }

    /// The non-concatenated recipes this one is built from.
    pub fn leaves(&self) -> Vec<Recipe> {
        match self {
            Recipe::Concat(parts) => parts.iter().flat_map(Recipe::leaves).collect(),
            other => vec![other.clone()],
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::DvRnnH => f.write_str("dv_rnn_h"),
            Recipe::DvRnnK => f.write_str("dv_rnn_k"),
            Recipe::DvRnnHk => f.write_str("dv_rnn_hk"),
            Recipe::DvLstmBm => f.write_str("dv_lstm_bm"),
            Recipe::DvLstmBa => f.write_str("dv_lstm_ba"),
            Recipe::DvLstmBc => f.write_str("dv_lstm_bc"),
            Recipe::DvLstmDm => f.write_str("dv_lstm_dm"),
            Recipe::Tfidf { n, top_k } => write!(f, "tfidf{n}_{top_k}"),
            Recipe::ClassTf => f.write_str("class_tf"),
            Recipe::Pvdm => f.write_str("pvdm"),
            Recipe::Random { dim } => write!(f, "random{dim}"),
            Recipe::Concat(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('+') {
            let parts = s.split('+').map(str::parse).collect::<Result<Vec<_>>>()?;
            return Ok(Recipe::Concat(parts));
        }
        let bad = || Error::InvalidArgument(format!("unknown feature recipe `{s}`"));
        Ok(match s {
            "dv_rnn_h" => Recipe::DvRnnH,
            "dv_rnn_k" => Recipe::DvRnnK,
            "dv_rnn_hk" => Recipe::DvRnnHk,
            "dv_lstm_bm" => Recipe::DvLstmBm,
            "dv_lstm_ba" => Recipe::DvLstmBa,
            "dv_lstm_bc" => Recipe::DvLstmBc,
            "dv_lstm_dm" => Recipe::DvLstmDm,
            "class_tf" => Recipe::ClassTf,
            "pvdm" => Recipe::Pvdm,
            _ => {
                if let Some(rest) = s.strip_prefix("tfidf") {
                    let (n, k) = rest.split_once('_').ok_or_else(bad)?;
                    Recipe::Tfidf {
                        n: n.parse().map_err(|_| bad())?,
                        top_k: k.parse().map_err(|_| bad())?,
                    }
                } else if let Some(rest) = s.strip_prefix("random") {
                    Recipe::Random {
                        dim: rest.parse().map_err(|_| bad())?,
                    }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl TryFrom<String> for Recipe {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Recipe> for String {
    fn from(r: Recipe) -> String {
        r.to_string()
    }
}

/// A fixed-length real vector tagged with its recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub values: Vec<f64>,
    pub recipe: Recipe,
}

impl DocumentVector {
    pub fn new(values: Vec<f64>, recipe: Recipe) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values, recipe }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One exported document vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DvRecord {
    pub doc_id: String,
    pub vector: DocumentVector,
}

/// Serialises records in the text export format.
pub fn write_dv_export(fingerprint: &str, records: &[DvRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# docvec-dv {DV_EXPORT_VERSION}");
    let _ = writeln!(out, "# fingerprint {fingerprint}");
    for r in records {
        let _ = write!(out, "{}\t{}\t{}\t", r.doc_id, r.vector.recipe, r.vector.dim());
        for (i, v) in r.vector.values.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

/// Parses the text export format, returning the fingerprint and records.
pub fn read_dv_export(text: &str) -> Result<(String, Vec<DvRecord>)> {
    let bad = |m: String| Error::format("document-vector export", m);
    let mut lines = text.lines();
    match lines.next().and_then(|l| l.strip_prefix("# docvec-dv ")) {
        Some(v) if v.trim().parse::<u32>().ok() == Some(DV_EXPORT_VERSION) => {}
        _ => return Err(bad("missing or unsupported header".into())),
    }
    let fingerprint = lines
        .next()
        .and_then(|l| l.strip_prefix("# fingerprint "))
        .ok_or_else(|| bad("missing fingerprint".into()))?
        .trim()
        .to_owned();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [id, recipe, dim, vals] = fields[..] else {
            return Err(bad(format!("record {}: expected 4 fields", i + 1)));
        };
        let dim: usize = dim.parse().map_err(|_| bad(format!("record {}: bad dim", i + 1)))?;
        let values = vals
            .split(' ')
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("record {}: bad value", i + 1)))?;
        if values.len() != dim {
            return Err(bad(format!("record {}: {} values, dim {dim}", i + 1, values.len())));
        }
        records.push(DvRecord {
            doc_id: id.to_owned(),
            vector: DocumentVector::new(values, recipe.parse()?),
        });
    }
    Ok((fingerprint, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recipe_names_round_trip() {
        for s in [
            "dv_rnn_h", "dv_rnn_k", "dv_rnn_hk", "dv_lstm_bm", "dv_lstm_ba", "dv_lstm_bc", "dv_lstm_dm",
            "tfidf5_10000", "class_tf", "pvdm", "random500", "dv_lstm_dm+tfidf5_1000",
        ] {
            assert_eq!(s.parse::<Recipe>().unwrap().to_string(), s);
        }
        assert!("bogus".parse::<Recipe>().is_err());
    }

    proptest! {
        #[test]
        fn export_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
            let rec = DvRecord {
                doc_id: "doc-1".into(),
                vector: DocumentVector::new(vals, Recipe::Pvdm),
            };
            let text = write_dv_export("abc", std::slice::from_ref(&rec));
            let (fp, back) = read_dv_export(&text).unwrap();
            prop_assert_eq!(fp, "abc");
            prop_assert_eq!(&back[0], &rec);
            prop_assert_eq!(write_dv_export("abc", &back), text);
        }
    }
}
