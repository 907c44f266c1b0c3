//! Cluster polarity assignment and the human-vs-LLM sentiment comparison.
//!
//! Clusters come out of k-means unlabeled; a pinned seed lexicon votes on
//! which of the two clusters is the positive one. Percentages are reported
//! with raw ratios retained and whole-number display values (mirroring
//! published tables whose rows sum to 99 or 101 after rounding).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clustering::{distance, ClusterModel};
use crate::embedding::{EmbeddingMatrix, EmbeddingProvider, MatrixLevel};

/// Sentiment polarity of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Which text group a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Human,
    Llm,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Human => "human",
            Group::Llm => "llm",
        })
    }
}

/// Positive/negative word lists with a content hash pinning the exact
/// list used for a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    /// Positive words, lowercase.
    pub positive: BTreeSet<String>,
    /// Negative words, lowercase; disjoint from `positive`.
    pub negative: BTreeSet<String>,
    /// Hex SHA-256 over the sorted signed words.
    pub content_hash: String,
}

impl Lexicon {
    /// Builds a lexicon from word iterators, lowercasing and validating
    /// that both sides are nonempty and disjoint.
    pub fn from_words<I, J, S, T>(positive: I, negative: J) -> Result<Self, SentimentError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let normalize = |w: &str| w.trim().to_lowercase();
        let positive: BTreeSet<String> = positive
            .into_iter()
            .map(|w| normalize(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        let negative: BTreeSet<String> = negative
            .into_iter()
            .map(|w| normalize(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        if positive.is_empty() {
            return Err(SentimentError::EmptyLexiconSide("positive"));
        }
        if negative.is_empty() {
            return Err(SentimentError::EmptyLexiconSide("negative"));
        }
        if let Some(word) = positive.intersection(&negative).next() {
            return Err(SentimentError::OverlappingWord(word.clone()));
        }
        let mut hasher = Sha256::new();
        for word in &positive {
            hasher.update(b"+");
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        for word in &negative {
            hasher.update(b"-");
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        Ok(Lexicon {
            positive,
            negative,
            content_hash: format!("{:x}", hasher.finalize()),
        })
    }

    /// Loads a lexicon file: one `+word` or `-word` per line, blank lines
    /// and `#`-comments ignored.
    pub fn load(path: &Path) -> Result<Self, SentimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| SentimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_at(1) {
                ("+", word) if !word.is_empty() => positive.push(word.to_owned()),
                ("-", word) if !word.is_empty() => negative.push(word.to_owned()),
                _ => {
                    return Err(SentimentError::MalformedLine {
                        line: idx + 1,
                        content: raw.to_owned(),
                    })
                }
            }
        }
        Self::from_words(positive, negative)
    }
}

/// Counts and percentages for one group at one level.
///
/// The raw percentages sum to exactly 100; the display values are rounded
/// to the nearest whole percent independently, so they may sum to 99, 100,
/// or 101.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentageSplit {
    pub positive_count: usize,
    pub negative_count: usize,
    pub positive_pct: f64,
    pub negative_pct: f64,
    pub positive_pct_display: u32,
    pub negative_pct_display: u32,
}

/// Full per-group sentiment summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentimentReport {
    pub group: Group,
    pub level: MatrixLevel,
    #[serde(flatten)]
    pub split: PercentageSplit,
    pub silhouette_mean: f64,
    pub cluster_polarity: BTreeMap<usize, Polarity>,
}

/// Which group came out more positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Human,
    Llm,
    Equal,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Human => "human",
            Verdict::Llm => "llm",
            Verdict::Equal => "equal",
        })
    }
}

/// Side-by-side comparison of the two groups at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub level: MatrixLevel,
    pub human: SentimentReport,
    pub llm: SentimentReport,
    pub verdict: Verdict,
}

/// Errors arising from lexicon handling or report construction.
#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: lexicon lines must be `+word` or `-word`, got `{content}`")]
    MalformedLine { line: usize, content: String },
    #[error("lexicon has no {0} words")]
    EmptyLexiconSide(&'static str),
    #[error("word `{0}` appears in both lexicon sides")]
    OverlappingWord(String),
    #[error("cluster polarity requires exactly 2 clusters, got k={0}")]
    UnsupportedK(usize),
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sentence-level labeling needs per-document token sequences")]
    MissingTokens,
    #[error("no member token of either cluster appears in the lexicon")]
    NoLexiconHits,
    #[error("clusters tie and no positive lexicon word is in the embedding vocabulary")]
    TieBreakUnavailable,
    #[error("labels reference cluster {0}, which has no polarity assigned")]
    UnknownCluster(usize),
    #[error("no labels to summarize")]
    EmptyLabels,
    #[error("reports are at different levels")]
    LevelMismatch,
}

/// Assigns positive/negative polarity to the two clusters of `model`.
///
/// Each cluster is scored as `(positive hits − negative hits) / member
/// count`, with hits counted over member tokens: the row labels themselves
/// at word level, or `doc_tokens` (one token list per row, required) at
/// sentence level. The higher-scoring cluster is positive. An exact tie is
/// broken toward the cluster whose centroid is nearer to the mean embedding
/// of the in-vocabulary positive lexicon words.
pub fn label_clusters<P: EmbeddingProvider + ?Sized>(
    model: &ClusterModel,
    points: &EmbeddingMatrix,
    doc_tokens: Option<&[Vec<String>]>,
    lexicon: &Lexicon,
    provider: &P,
) -> Result<BTreeMap<usize, Polarity>, SentimentError> {
    if model.k != 2 {
        return Err(SentimentError::UnsupportedK(model.k));
    }
    let n = points.n_rows();
    if model.assignments.len() != n {
        return Err(SentimentError::LengthMismatch {
            expected: n,
            actual: model.assignments.len(),
        });
    }
    if let Some(tokens) = doc_tokens {
        if tokens.len() != n {
            return Err(SentimentError::LengthMismatch {
                expected: n,
                actual: tokens.len(),
            });
        }
    }
    if points.level == MatrixLevel::Sentence && doc_tokens.is_none() {
        return Err(SentimentError::MissingTokens);
    }

    let mut net = [0i64; 2];
    let mut members = [0usize; 2];
    let mut total_hits = 0usize;
    for i in 0..n {
        let cluster = model.assignments[i];
        members[cluster] += 1;
        let mut tally = |token: &str| {
            if lexicon.positive.contains(token) {
                net[cluster] += 1;
                total_hits += 1;
            } else if lexicon.negative.contains(token) {
                net[cluster] -= 1;
                total_hits += 1;
            }
        };
        match doc_tokens {
            Some(tokens) => tokens[i].iter().for_each(|t| tally(t)),
            None => tally(&points.labels[i]),
        }
    }
    if total_hits == 0 {
        return Err(SentimentError::NoLexiconHits);
    }
    let score = |c: usize| {
        if members[c] == 0 {
            0.0
        } else {
            net[c] as f64 / members[c] as f64
        }
    };
    let positive_cluster = match score(0).partial_cmp(&score(1)).expect("finite scores") {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => {
            // Tie: the cluster whose centroid sits nearer the mean
            // embedding of the in-vocabulary positive words is positive.
            let mut mean = vec![0.0f64; model.dim];
            let mut count = 0usize;
            for word in &lexicon.positive {
                if let Some(vector) = provider.lookup(word) {
                    for (m, v) in mean.iter_mut().zip(&vector) {
                        *m += v;
                    }
                    count += 1;
                }
            }
            if count == 0 {
                return Err(SentimentError::TieBreakUnavailable);
            }
            for m in &mut mean {
                *m /= count as f64;
            }
            let d0 = distance(model.centroid(0), &mean);
            let d1 = distance(model.centroid(1), &mean);
            usize::from(d1 < d0)
        }
    };
    let mut polarity = BTreeMap::new();
    polarity.insert(positive_cluster, Polarity::Positive);
    polarity.insert(1 - positive_cluster, Polarity::Negative);
    Ok(polarity)
}

/// Turns per-point cluster labels plus a cluster→polarity map into counts
/// and percentages.
pub fn sentiment_percentages(
    labels: &[usize],
    polarity: &BTreeMap<usize, Polarity>,
) -> Result<PercentageSplit, SentimentError> {
    if labels.is_empty() {
        return Err(SentimentError::EmptyLabels);
    }
    let mut positive_count = 0usize;
    let mut negative_count = 0usize;
    for &label in labels {
        match polarity.get(&label) {
            Some(Polarity::Positive) => positive_count += 1,
            Some(Polarity::Negative) => negative_count += 1,
            None => return Err(SentimentError::UnknownCluster(label)),
        }
    }
    let total = (positive_count + negative_count) as f64;
    let positive_pct = 100.0 * positive_count as f64 / total;
    // Defined as the complement so the raw percentages sum to exactly 100.
    let negative_pct = 100.0 - positive_pct;
    Ok(PercentageSplit {
        positive_count,
        negative_count,
        positive_pct,
        negative_pct,
        positive_pct_display: positive_pct.round() as u32,
        negative_pct_display: negative_pct.round() as u32,
    })
}

/// Compares the two groups' reports and names the more positive one.
pub fn compare_groups(
    human: &SentimentReport,
    llm: &SentimentReport,
) -> Result<ComparisonReport, SentimentError> {
    if human.level != llm.level {
        return Err(SentimentError::LevelMismatch);
    }
    let verdict = match human
        .split
        .positive_pct
        .partial_cmp(&llm.split.positive_pct)
        .expect("percentages are finite")
    {
        std::cmp::Ordering::Greater => Verdict::Human,
        std::cmp::Ordering::Less => Verdict::Llm,
        std::cmp::Ordering::Equal => Verdict::Equal,
    };
    Ok(ComparisonReport {
        level: human.level,
        human: human.clone(),
        llm: llm.clone(),
        verdict,
    })
}

/// Renders a comparison as a plain-text table: one row per group with
/// whole-percent positive/negative columns, then a verdict line.
pub fn render_comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Percentages of Emotions ({} level)\n",
        report.level
    ));
    out.push_str(&format!(
        "{:<16} {:>12} {:>12}\n",
        "group", "positive %", "negative %"
    ));
    for side in [&report.human, &report.llm] {
        out.push_str(&format!(
            "{:<16} {:>12} {:>12}\n",
            side.group.to_string(),
            side.split.positive_pct_display,
            side.split.negative_pct_display
        ));
    }
    out.push_str(&format!("verdict: {}\n", report.verdict));
    out
}
