//! Exploratory statistics over cleaned documents: word/topic frequency
//! tables and token-count length summaries with Tukey outlier flags.

use serde::Serialize;

use crate::cleaning::TokenSequence;

/// One row of a frequency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyEntry {
    /// The token.
    pub token: String,
    /// Total occurrences across all documents.
    pub count: usize,
    /// Fraction of documents containing the token at least once.
    pub doc_frequency: f64,
}

/// Frequency table sorted by count descending, token ascending, truncated
/// to the requested number of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub entries: Vec<FrequencyEntry>,
}

/// Five-number summary of per-document token counts, plus Tukey outliers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthSummary {
    /// Number of documents summarized.
    pub n: usize,
    /// Smallest token count.
    pub min: usize,
    /// Largest token count.
    pub max: usize,
    /// Arithmetic mean token count.
    pub mean: f64,
    /// Median (linear interpolation between closest ranks).
    pub median: f64,
    /// First quartile.
    pub q1: f64,
    /// Third quartile.
    pub q3: f64,
    /// Ids of documents whose count falls outside the Tukey fences
    /// `[q1 - 1.5·IQR, q3 + 1.5·IQR]`, sorted lexicographically.
    pub outlier_ids: Vec<String>,
}

/// Errors arising from exploratory statistics.
#[derive(Debug, thiserror::Error)]
pub enum EdaError {
    #[error("no documents to summarize")]
    EmptyInput,
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

/// Linearly interpolated quantile of `sorted` at fraction `q`.
///
/// Uses the closest-ranks convention: the quantile sits at fractional
/// position `q · (n − 1)` in the sorted array.
///
/// Preconditions: `sorted` is nonempty and ascending, `0 ≤ q ≤ 1`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn frequency_table<'a, F>(
    docs: &'a [TokenSequence],
    top_k: usize,
    keep: F,
) -> Result<FrequencyTable, EdaError>
where
    F: Fn(&str) -> bool,
{
    if docs.is_empty() {
        return Err(EdaError::EmptyInput);
    }
    if top_k == 0 {
        return Err(EdaError::ZeroTopK);
    }
    let total_docs = docs.len() as f64;
    let mut counts: std::collections::BTreeMap<&'a str, (usize, usize)> =
        std::collections::BTreeMap::new();
    for doc in docs {
        let mut seen = std::collections::BTreeSet::new();
        for token in &doc.tokens {
            if !keep(token) {
                continue;
            }
            let entry = counts.entry(token.as_str()).or_insert((0, 0));
            entry.0 += 1;
            if seen.insert(token.as_str()) {
                entry.1 += 1;
            }
        }
    }
    let mut entries: Vec<FrequencyEntry> = counts
        .into_iter()
        .map(|(token, (count, doc_count))| FrequencyEntry {
            token: token.to_owned(),
            count,
            doc_frequency: doc_count as f64 / total_docs,
        })
        .collect();
    // Entries arrive token-ascending from the BTreeMap; a stable sort on
    // descending count preserves that as the tie-break.
    entries.sort_by_key(|e| std::cmp::Reverse(e.count));
    entries.truncate(top_k);
    Ok(FrequencyTable { entries })
}

/// Most frequent tokens across `docs`, with occurrence counts and document
/// frequencies. Rows are ordered by count descending, token ascending.
pub fn word_frequency(docs: &[TokenSequence], top_k: usize) -> Result<FrequencyTable, EdaError> {
    frequency_table(docs, top_k, |_| true)
}

/// Like [`word_frequency`] but restricted to tokens of length ≥ 3, which
/// filters residual short noise when mining discussion topics.
pub fn topic_frequency(docs: &[TokenSequence], top_k: usize) -> Result<FrequencyTable, EdaError> {
    frequency_table(docs, top_k, |t| t.len() >= 3)
}

/// Summarizes per-document token counts: five-number summary plus Tukey
/// outliers at 1.5 × IQR.
pub fn word_count_summary(docs: &[TokenSequence]) -> Result<LengthSummary, EdaError> {
    if docs.is_empty() {
        return Err(EdaError::EmptyInput);
    }
    let counts: Vec<usize> = docs.iter().map(|d| d.tokens.len()).collect();
    let mut sorted: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("counts are finite"));
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let mut outlier_ids: Vec<String> = docs
        .iter()
        .zip(&counts)
        .filter(|&(_, &c)| (c as f64) < lo_fence || (c as f64) > hi_fence)
        .map(|(d, _)| d.source_id.clone())
        .collect();
    outlier_ids.sort();
    Ok(LengthSummary {
        n: counts.len(),
        min: counts.iter().copied().min().expect("nonempty"),
        max: counts.iter().copied().max().expect("nonempty"),
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        median,
        q1,
        q3,
        outlier_ids,
    })
}
