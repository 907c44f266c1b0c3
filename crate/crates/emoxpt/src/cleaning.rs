//! Text cleaning pipelines, one per text class.
//!
//! All three pipelines share a common tail — lowercase, replace every
//! character outside `a-z` with a space, split on whitespace, drop tokens
//! shorter than two characters, drop stopwords. The human-comment pipeline
//! first strips URLs, `@`-mentions, and emoji; the LLM-response pipeline
//! additionally drops a list of neutral boilerplate words (e.g. "ai",
//! "language", "model") after stopword removal.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default document-frequency threshold for neutral-word derivation.
pub const DEFAULT_NEUTRAL_MIN_DOC_FREQUENCY: f64 = 0.30;

/// Default size cap for a derived neutral wordlist.
pub const DEFAULT_NEUTRAL_TOP_K: usize = 10;

/// Which text class a token sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Tweet,
    LlmResponse,
    HumanComment,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Origin::Tweet => "tweet",
            Origin::LlmResponse => "llm_response",
            Origin::HumanComment => "human_comment",
        };
        f.write_str(name)
    }
}

/// A cleaned document: the tokens that survived a cleaning pipeline.
///
/// Serialized as one JSON object `{"id": …, "origin": …, "tokens": […]}` per
/// line in cleaned-corpus files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    /// Identifier of the source text (record id, possibly suffixed).
    #[serde(rename = "id")]
    pub source_id: String,
    /// Text class the tokens came from.
    pub origin: Origin,
    /// Surviving tokens in original text order; all match `[a-z]{2,}`.
    pub tokens: Vec<String>,
}

/// A named, content-addressed set of lowercase words (stopwords, neutral
/// words).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wordlist {
    /// Human-readable list name, used in diagnostics.
    pub name: String,
    /// The words, lowercased.
    pub words: BTreeSet<String>,
    /// Hex SHA-256 over the sorted words, one per line; identifies the list
    /// content independently of file formatting.
    pub content_hash: String,
}

impl Wordlist {
    /// Builds a wordlist from an iterator of words, lowercasing each.
    ///
    /// Returns [`CleaningError::EmptyWordlist`] if no words are given.
    pub fn from_words<I, S>(name: &str, words: I) -> Result<Self, CleaningError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(CleaningError::EmptyWordlist {
                name: name.to_owned(),
            });
        }
        let mut hasher = Sha256::new();
        for word in &words {
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        let content_hash = format!("{:x}", hasher.finalize());
        Ok(Wordlist {
            name: name.to_owned(),
            words,
            content_hash,
        })
    }

    /// Loads a wordlist from a text file: one word per line, blank lines and
    /// `#`-comment lines ignored.
    pub fn from_file(path: &Path, name: &str) -> Result<Self, CleaningError> {
        let text = std::fs::read_to_string(path).map_err(|source| CleaningError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_words(
            name,
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Whether `word` is in the list.
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    /// Number of words in the list.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// Whether the list is empty (never true for a constructed list).
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Errors arising while loading wordlists or deriving neutral words.
#[derive(Debug, thiserror::Error)]
pub enum CleaningError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("wordlist `{name}` contains no words")]
    EmptyWordlist { name: String },
    #[error("no documents to derive neutral words from")]
    EmptyInput,
    #[error("min_doc_frequency must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("no word meets the document-frequency threshold {0}")]
    NoQualifyingWords(f64),
}

static URL_RE: LazyLock<Regex> = LazyLock::new(|| {
    // Matches scheme://… or www.…; applied to lowercased text.
    Regex::new(r"(?:[a-z][a-z0-9+.-]*://\S+|\bwww\.\S+)").expect("static regex")
});

static MENTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"@[a-z0-9_]+").expect("static regex"));

/// Whether `c` falls in one of the six emoji blocks stripped by the
/// human-comment pipeline.
fn is_emoji(c: char) -> bool {
    matches!(
        u32::from(c),
        0x1F300..=0x1F5FF   // symbols & pictographs
            | 0x1F600..=0x1F64F // emoticons
            | 0x1F680..=0x1F6FF // transport & map symbols
            | 0x1F900..=0x1F9FF // supplemental symbols & pictographs
            | 0x2600..=0x26FF   // miscellaneous symbols
            | 0x2700..=0x27BF // dingbats
    )
}

/// Common tail of every pipeline, from the non-alphabetic strip onward:
/// map non-`a-z` to spaces, tokenize, keep tokens of length ≥ 2 that are
/// not stopwords.
fn tokenize_common(lowercased: &str, stopwords: &Wordlist) -> Vec<String> {
    let spaced: String = lowercased
        .chars()
        .map(|c| if c.is_ascii_lowercase() { c } else { ' ' })
        .collect();
    spaced
        .split_whitespace()
        .filter(|t| t.len() >= 2)
        .filter(|t| !stopwords.contains(t))
        .map(str::to_owned)
        .collect()
}

/// Cleans `text` with the common pipeline: lowercase, non-alphabetic strip,
/// tokenize, minimum length, stopword removal.
pub fn clean_common(
    source_id: &str,
    origin: Origin,
    text: &str,
    stopwords: &Wordlist,
) -> TokenSequence {
    let lowered = text.to_lowercase();
    TokenSequence {
        source_id: source_id.to_owned(),
        origin,
        tokens: tokenize_common(&lowered, stopwords),
    }
}

/// Lowercases `text` and strips URLs, `@`-mentions, and emoji, in that
/// order, replacing each with a space.
fn strip_human_noise(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_urls = URL_RE.replace_all(&lowered, " ");
    let no_mentions = MENTION_RE.replace_all(&no_urls, " ");
    no_mentions
        .chars()
        .map(|c| if is_emoji(c) { ' ' } else { c })
        .collect()
}

/// Cleans a human comment: lowercase, URL/mention/emoji removal, then the
/// common tail.
pub fn clean_human(source_id: &str, text: &str, stopwords: &Wordlist) -> TokenSequence {
    TokenSequence {
        source_id: source_id.to_owned(),
        origin: Origin::HumanComment,
        tokens: tokenize_common(&strip_human_noise(text), stopwords),
    }
}

/// Cleans an LLM response: the human-comment steps plus neutral-word removal
/// after stopword removal.
pub fn clean_llm(
    source_id: &str,
    text: &str,
    stopwords: &Wordlist,
    neutral: &Wordlist,
) -> TokenSequence {
    let mut seq = clean_human(source_id, text, stopwords);
    seq.origin = Origin::LlmResponse;
    seq.tokens.retain(|t| !neutral.contains(t));
    seq
}

/// Derives a neutral wordlist from cleaned documents: words whose document
/// frequency is at least `min_doc_frequency`, ranked by document frequency
/// descending (ties broken alphabetically), truncated to `top_k`.
pub fn derive_neutral_words(
    docs: &[TokenSequence],
    min_doc_frequency: f64,
    top_k: usize,
) -> Result<Wordlist, CleaningError> {
    if docs.is_empty() {
        return Err(CleaningError::EmptyInput);
    }
    if !(min_doc_frequency > 0.0 && min_doc_frequency <= 1.0) {
        return Err(CleaningError::InvalidThreshold(min_doc_frequency));
    }
    if top_k == 0 {
        return Err(CleaningError::ZeroTopK);
    }
    let total = docs.len() as f64;
    let mut doc_counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for token in unique {
            *doc_counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut qualifying: Vec<(&str, f64)> = doc_counts
        .into_iter()
        .map(|(token, n)| (token, n as f64 / total))
        .filter(|&(_, df)| df >= min_doc_frequency)
        .collect();
    if qualifying.is_empty() {
        return Err(CleaningError::NoQualifyingWords(min_doc_frequency));
    }
    // BTreeMap iteration already yields tokens in ascending order, so a
    // stable sort on descending document frequency keeps the alphabetical
    // tie-break.
    qualifying.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite frequencies"));
    qualifying.truncate(top_k);
    Wordlist::from_words("derived_neutral", qualifying.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stoplist(words: &[&str]) -> Wordlist {
        Wordlist::from_words("test_stopwords", words.iter().copied()).unwrap()
    }

    fn bundled(name: &str) -> Wordlist {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("data")
            .join(name);
        Wordlist::from_file(&path, name).unwrap()
    }

    #[test]
    fn common_pipeline_worked_example() {
        let stop = stoplist(&["or", "at", "once", "it"]);
        let seq = clean_common("t01", Origin::Tweet, "Blessing or curse at once❓", &stop);
        assert_eq!(seq.tokens, vec!["blessing", "curse"]);
        assert_eq!(seq.origin, Origin::Tweet);
    }

    #[test]
    fn human_pipeline_worked_example() {
        let stop = stoplist(&["it"]);
        let seq = clean_human("t01-c1", "Love it 😍 @sam https://t.co/xyz", &stop);
        assert_eq!(seq.tokens, vec!["love"]);
        assert_eq!(seq.origin, Origin::HumanComment);
    }

    #[test]
    fn llm_pipeline_worked_example() {
        let stop = stoplist(&["as", "an", "do", "not", "have", "to", "i"]);
        let neutral = stoplist(&["ai", "language", "model"]);
        let seq = clean_llm(
            "t02",
            "As an AI language model, I do not have access to personal information.",
            &stop,
            &neutral,
        );
        assert_eq!(seq.tokens, vec!["access", "personal", "information"]);
        assert_eq!(seq.origin, Origin::LlmResponse);
    }

    #[test]
    fn urls_without_scheme_are_stripped_by_www_prefix() {
        let stop = stoplist(&["the"]);
        let seq = clean_human("c", "read www.example.com/blog?a=1 tonight", &stop);
        assert_eq!(seq.tokens, vec!["read", "tonight"]);
    }

    #[test]
    fn url_inside_word_is_not_stripped() {
        // "awww.cool" must not be treated as a URL: no word boundary before
        // the "www".
        let stop = stoplist(&["x"]);
        let seq = clean_human("c", "awww.cool", &stop);
        assert_eq!(seq.tokens, vec!["awww", "cool"]);
    }

    #[test]
    fn common_pipeline_keeps_urls_as_shredded_tokens() {
        // The common pipeline has no URL removal step; a URL survives as the
        // alphabetic fragments left after the non-alphabetic strip.
        let stop = stoplist(&["co"]);
        let seq = clean_common("t", Origin::Tweet, "see https://t.co/xyz", &stop);
        assert_eq!(seq.tokens, vec!["see", "https", "xyz"]);
    }

    #[test]
    fn emoji_from_all_six_blocks_are_removed() {
        let stop = stoplist(&["x"]);
        for emoji in ['😀', '🌍', '🚀', '🤖', '☀', '✂'] {
            let text = format!("great{emoji}stuff");
            let seq = clean_human("c", &text, &stop);
            assert_eq!(seq.tokens, vec!["great", "stuff"], "emoji {emoji:?}");
        }
    }

    #[test]
    fn short_tokens_are_dropped() {
        let stop = stoplist(&["never_matches"]);
        let seq = clean_common("t", Origin::Tweet, "I a ab abc", &stop);
        assert_eq!(seq.tokens, vec!["ab", "abc"]);
    }

    #[test]
    fn empty_text_yields_empty_tokens() {
        let stop = stoplist(&["the"]);
        assert!(clean_common("t", Origin::Tweet, "", &stop)
            .tokens
            .is_empty());
        assert!(clean_human("c", "   ", &stop).tokens.is_empty());
    }

    #[test]
    fn llm_with_empty_neutral_equals_human_modulo_origin() {
        // Neutral lists cannot be empty by construction, so compare against
        // a list whose word never occurs.
        let stop = stoplist(&["the"]);
        let neutral = stoplist(&["zzzzunused"]);
        let text = "The model URL is https://x.org/a and @bob says hi 😀";
        let human = clean_human("d", text, &stop);
        let llm = clean_llm("d", text, &stop, &neutral);
        assert_eq!(human.tokens, llm.tokens);
        assert_eq!(llm.origin, Origin::LlmResponse);
    }

    #[test]
    fn token_sequence_json_shape() {
        let seq = TokenSequence {
            source_id: "t01".into(),
            origin: Origin::LlmResponse,
            tokens: vec!["access".into(), "personal".into()],
        };
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(
            json,
            r#"{"id":"t01","origin":"llm_response","tokens":["access","personal"]}"#
        );
        let back: TokenSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn bundled_stopword_list_has_expected_shape() {
        let stop = bundled("stopwords_en.txt");
        assert_eq!(stop.len(), 179);
        for word in [
            "or", "at", "once", "it", "as", "an", "do", "not", "have", "is", "to",
        ] {
            assert!(stop.contains(word), "expected stopword {word}");
        }
        for word in [
            "blessing", "curse", "love", "chatgpt", "ai", "language", "model", "access",
        ] {
            assert!(!stop.contains(word), "{word} must survive cleaning");
        }
    }

    #[test]
    fn bundled_neutral_list_matches_boilerplate_words() {
        let neutral = bundled("neutral_llm.txt");
        let words: Vec<&str> = neutral.words.iter().map(String::as_str).collect();
        assert_eq!(words, vec!["ai", "language", "model"]);
    }

    #[test]
    fn wordlist_hash_depends_on_content_not_formatting() {
        let a = Wordlist::from_words("a", ["beta", "alpha"]).unwrap();
        let b = Wordlist::from_words("b", ["alpha", "beta", "alpha"]).unwrap();
        assert_eq!(a.content_hash, b.content_hash);
        let c = Wordlist::from_words("c", ["alpha", "gamma"]).unwrap();
        assert_ne!(a.content_hash, c.content_hash);
    }

    #[test]
    fn empty_wordlist_is_rejected() {
        let err = Wordlist::from_words("empty", Vec::<String>::new()).unwrap_err();
        assert!(matches!(err, CleaningError::EmptyWordlist { .. }));
    }

    fn doc(id: &str, tokens: &[&str]) -> TokenSequence {
        TokenSequence {
            source_id: id.into(),
            origin: Origin::LlmResponse,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn derive_neutral_words_ranks_by_document_frequency() {
        // "model" in 3/4 docs, "ai" in 2/4, "data" in 1/4.
        let docs = vec![
            doc("a", &["model", "ai", "model"]),
            doc("b", &["model", "data"]),
            doc("c", &["model"]),
            doc("d", &["ai"]),
        ];
        let list = derive_neutral_words(&docs, 0.5, 10).unwrap();
        let words: Vec<&str> = list.words.iter().map(String::as_str).collect();
        assert_eq!(words, vec!["ai", "model"]);

        let top1 = derive_neutral_words(&docs, 0.5, 1).unwrap();
        assert_eq!(
            top1.words.iter().map(String::as_str).collect::<Vec<_>>(),
            vec!["model"]
        );
    }

    #[test]
    fn derive_neutral_words_breaks_frequency_ties_alphabetically() {
        let docs = vec![doc("a", &["zeta", "alpha"]), doc("b", &["zeta", "alpha"])];
        let top1 = derive_neutral_words(&docs, 0.5, 1).unwrap();
        assert_eq!(
            top1.words.iter().map(String::as_str).collect::<Vec<_>>(),
            vec!["alpha"]
        );
    }

    #[test]
    fn derive_neutral_words_error_paths() {
        let docs = vec![doc("a", &["rare"])];
        assert!(matches!(
            derive_neutral_words(&[], 0.5, 10),
            Err(CleaningError::EmptyInput)
        ));
        assert!(matches!(
            derive_neutral_words(&docs, 0.0, 10),
            Err(CleaningError::InvalidThreshold(_))
        ));
        assert!(matches!(
            derive_neutral_words(&docs, 1.5, 10),
            Err(CleaningError::InvalidThreshold(_))
        ));
        assert!(matches!(
            derive_neutral_words(&docs, 0.5, 0),
            Err(CleaningError::ZeroTopK)
        ));
        let sparse = vec![doc("a", &["one"]), doc("b", &["two"]), doc("c", &["three"])];
        assert!(matches!(
            derive_neutral_words(&sparse, 0.9, 10),
            Err(CleaningError::NoQualifyingWords(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cleaning_never_panics_and_tokens_are_canonical(text in "\\PC{0,200}") {
                let stop = stoplist(&["the", "and", "of"]);
                for seq in [
                    clean_common("t", Origin::Tweet, &text, &stop),
                    clean_human("c", &text, &stop),
                ] {
                    for token in &seq.tokens {
                        prop_assert!(token.len() >= 2);
                        prop_assert!(token.chars().all(|c| c.is_ascii_lowercase()));
                        prop_assert!(!stop.contains(token));
                    }
                }
            }

            #[test]
            fn cleaning_is_idempotent(text in "\\PC{0,200}") {
                let stop = stoplist(&["the", "and", "of"]);
                let once = clean_human("c", &text, &stop);
                let again = clean_human("c", &once.tokens.join(" "), &stop);
                prop_assert_eq!(once.tokens, again.tokens);
            }

            #[test]
            fn llm_tokens_never_contain_neutral_words(text in "\\PC{0,200}") {
                let stop = stoplist(&["the"]);
                let neutral = stoplist(&["ai", "language", "model"]);
                let seq = clean_llm("r", &text, &stop, &neutral);
                prop_assert!(seq.tokens.iter().all(|t| !neutral.contains(t)));
            }
        }
    }
}
