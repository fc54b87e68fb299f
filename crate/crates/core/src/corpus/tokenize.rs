use serde::{Deserialize, Serialize};

/// Surface form of the end-of-sentence marker in raw token streams.
pub const EOS_TOKEN: &str = "</s>";
/// Surface form of the unknown-word token.
pub const UNK_TOKEN: &str = "<unk>";

/// Transformation applied to raw file text before tokenisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreFilter {
    #[default]
    None,
    /// Drops a trailing `/tag` from every whitespace-delimited token
    /// (`The/at Fulton/np-tl` becomes `The Fulton`), as in tagged corpora.
    SlashTags,
}

impl PreFilter {
    pub fn apply(self, text: &str) -> String {
        match self {
            PreFilter::None => text.to_owned(),
            PreFilter::SlashTags => {
                let mut out = String::with_capacity(text.len());
                for line in text.lines() {
                    let mut first = true;
                    for tok in line.split_whitespace() {
                        let word = match tok.rfind('/') {
                            Some(i) if i > 0 => &tok[..i],
                            _ => tok,
                        };
                        if !first {
                            out.push(' ');
                        }
                        out.push_str(word);
                        first = false;
                    }
                    out.push('\n');
                }
                out
            }
        }
    }
}

/// Tokenisation and vocabulary policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenPolicy {
    pub lowercase: bool,
    pub keep_punctuation: bool,
    /// Insert an end-of-sentence token after `.`, `!` and `?` runs.
    pub sentence_boundaries: bool,
    /// Make every document end with an end-of-sentence token.
    pub eos_at_doc_end: bool,
    /// Words rarer than this map to the unknown token.
    pub min_count: usize,
    /// Upper bound on vocabulary size, special tokens included.
    pub max_vocab: usize,
    pub prefilter: PreFilter,
}

impl Default for TokenPolicy {
    fn default() -> Self {
        Self {
            lowercase: true,
            keep_punctuation: true,
            sentence_boundaries: true,
            eos_at_doc_end: true,
            min_count: 3,
            max_vocab: 20_000,
            prefilter: PreFilter::None,
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

/// Splits text into surface tokens, inserting [`EOS_TOKEN`] at sentence
/// boundaries. Returns the tokens and the count of word (alphanumeric) tokens.
pub fn tokenize(text: &str, policy: &TokenPolicy) -> (Vec<String>, usize) {
    let text = policy.prefilter.apply(text);
    let mut pieces: Vec<String> = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, pieces: &mut Vec<String>| {
        if !word.is_empty() {
            pieces.push(std::mem::take(word));
        }
    };
    for c in text.chars() {
        if is_word_char(c) {
            if policy.lowercase {
                word.extend(c.to_lowercase());
            } else {
                word.push(c);
            }
        } else {
            flush(&mut word, &mut pieces);
            if !c.is_whitespace() {
                pieces.push(c.to_string());
            }
        }
    }
    flush(&mut word, &mut pieces);

    let words = pieces.iter().filter(|p| p.chars().any(is_word_char)).count();
    let mut out = Vec::with_capacity(pieces.len() + pieces.len() / 8);
    for (i, p) in pieces.iter().enumerate() {
        let terminal = is_terminal(p);
        let is_word = p.chars().any(is_word_char);
        if is_word || policy.keep_punctuation {
            out.push(p.clone());
        }
        if policy.sentence_boundaries && terminal {
            let next_terminal = pieces.get(i + 1).is_some_and(|n| is_terminal(n));
            if !next_terminal && out.last().map(String::as_str) != Some(EOS_TOKEN) && !out.is_empty() {
                out.push(EOS_TOKEN.to_owned());
            }
        }
    }
    if policy.eos_at_doc_end && !out.is_empty() && out.last().map(String::as_str) != Some(EOS_TOKEN) {
        out.push(EOS_TOKEN.to_owned());
    }
    (out, words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation_and_marks_sentences() {
        let (toks, words) = tokenize("Hello, World! It's  fine...", &TokenPolicy::default());
        assert_eq!(
            toks,
            ["hello", ",", "world", "!", "</s>", "it", "'", "s", "fine", ".", ".", ".", "</s>"]
        );
        assert_eq!(words, 5);
    }

    #[test]
    fn punctuation_can_be_dropped_but_still_ends_sentences() {
        let policy = TokenPolicy {
            keep_punctuation: false,
            ..TokenPolicy::default()
        };
        let (toks, _) = tokenize("a b. c", &policy);
        assert_eq!(toks, ["a", "b", "</s>", "c", "</s>"]);
    }

    #[test]
    fn whitespace_only_text_yields_nothing() {
        let (toks, words) = tokenize(" \n\t ", &TokenPolicy::default());
        assert!(toks.is_empty());
        assert_eq!(words, 0);
    }

    #[test]
    fn slash_tags_are_stripped() {
        let policy = TokenPolicy {
            prefilter: PreFilter::SlashTags,
            ..TokenPolicy::default()
        };
        let (toks, _) = tokenize("The/at Fulton/np-tl said/vbd ./.", &policy);
        assert_eq!(toks, ["the", "fulton", "said", ".", "</s>"]);
    }
}
