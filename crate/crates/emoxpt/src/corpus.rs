//! Corpus ingestion: records of tweets, LLM responses, and user comments.
//!
//! The canonical on-disk form is JSON Lines, one record per line with keys
//! `id`, `date`, `hashtags`, `tweet`, `response`, and `comments`. A CSV
//! sidecar format carries the same columns, with `hashtags` and `comments`
//! cells `|`-joined. Loading normalizes hashtags (lowercase, leading `#`
//! stripped) and trims comments, dropping any that are empty after the trim.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// One harvested tweet together with the LLM response it elicited and the
/// human comments left under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Unique record identifier, nonempty.
    pub id: String,
    /// Harvest date of the tweet.
    pub date: NaiveDate,
    /// Normalized hashtags: lowercase, no leading `#`, `[a-z0-9_]+`.
    pub hashtags: BTreeSet<String>,
    /// Raw tweet text; may be empty.
    pub tweet: String,
    /// Raw LLM response text; may be empty.
    pub response: String,
    /// Human comments, each nonempty after trimming.
    pub comments: Vec<String>,
}

/// An ordered collection of records loaded from one source file.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Records in file order.
    pub records: Vec<Record>,
    /// Path the corpus was loaded from, as given by the caller.
    pub source_path: String,
}

/// On-disk corpus encodings accepted by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line.
    Jsonl,
    /// Header row plus one record per row; list cells are `|`-joined.
    Csv,
}

/// Summary statistics over per-record comment counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentStats {
    /// Number of records in the corpus.
    pub total_tweets: usize,
    /// Sum of comment counts over all records.
    pub total_comments: usize,
    /// `total_comments / total_tweets`.
    pub mean_comments: f64,
    /// Largest single-record comment count.
    pub max_comments: usize,
    /// Number of records with zero comments.
    pub zero_comment_tweets: usize,
    /// `zero_comment_tweets / total_tweets`.
    pub zero_comment_fraction: f64,
    /// Map from comment count to the number of records with that count.
    pub histogram: std::collections::BTreeMap<usize, usize>,
}

/// Errors arising while loading or summarizing a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: invalid JSON: {source}")]
    Json {
        row: usize,
        source: serde_json::Error,
    },
    #[error("row {row}: invalid CSV: {source}")]
    Csv { row: usize, source: csv::Error },
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("row {row}: field `{field}` has the wrong type")]
    WrongType { row: usize, field: &'static str },
    #[error("row {row}: empty record id")]
    EmptyId { row: usize },
    #[error("row {row}: malformed date `{value}` (expected YYYY-MM-DD)")]
    MalformedDate { row: usize, value: String },
    #[error("row {row}: malformed hashtag `{tag}`")]
    MalformedHashtag { row: usize, tag: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("corpus contains no records")]
    EmptyCorpus,
}

/// Loads a corpus from `path`, validating and normalizing every record.
///
/// Rows are numbered from 1 (the CSV header row is row 0). Record ids must
/// be unique across the file, and the file must contain at least one record.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records = match format {
        CorpusFormat::Jsonl => parse_jsonl(&text)?,
        CorpusFormat::Csv => parse_csv(&text)?,
    };
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut seen = BTreeSet::new();
    for record in &records {
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id.clone()));
        }
    }
    Ok(Corpus {
        records,
        source_path: path.display().to_string(),
    })
}

fn parse_jsonl(text: &str) -> Result<Vec<Record>, CorpusError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|source| CorpusError::Json { row, source })?;
        records.push(record_from_json(row, &value)?);
    }
    Ok(records)
}

fn record_from_json(row: usize, value: &serde_json::Value) -> Result<Record, CorpusError> {
    let get = |field: &'static str| {
        value
            .get(field)
            .ok_or(CorpusError::MissingField { row, field })
    };
    let get_str = |field: &'static str| {
        get(field)?
            .as_str()
            .ok_or(CorpusError::WrongType { row, field })
    };
    let get_str_list = |field: &'static str| -> Result<Vec<String>, CorpusError> {
        get(field)?
            .as_array()
            .ok_or(CorpusError::WrongType { row, field })?
            .iter()
            .map(|item| {
                item.as_str()
                    .map(str::to_owned)
                    .ok_or(CorpusError::WrongType { row, field })
            })
            .collect()
    };
    build_record(
        row,
        get_str("id")?,
        get_str("date")?,
        get_str_list("hashtags")?,
        get_str("tweet")?,
        get_str("response")?,
        get_str_list("comments")?,
    )
}

fn parse_csv(text: &str) -> Result<Vec<Record>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::Csv { row: 0, source })?
        .clone();
    let column = |field: &'static str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h == field)
            .ok_or(CorpusError::MissingField { row: 0, field })
    };
    let (id_col, date_col) = (column("id")?, column("date")?);
    let (tags_col, tweet_col) = (column("hashtags")?, column("tweet")?);
    let (resp_col, comments_col) = (column("response")?, column("comments")?);

    let mut records = Vec::new();
    for (idx, result) in reader.records().enumerate() {
        let row = idx + 1;
        let record = result.map_err(|source| CorpusError::Csv { row, source })?;
        let cell = |col: usize, field: &'static str| {
            record
                .get(col)
                .ok_or(CorpusError::MissingField { row, field })
        };
        let split_cell = |col: usize, field: &'static str| -> Result<Vec<String>, CorpusError> {
            let raw = cell(col, field)?;
            if raw.is_empty() {
                Ok(Vec::new())
            } else {
                Ok(raw.split('|').map(str::to_owned).collect())
            }
        };
        records.push(build_record(
            row,
            cell(id_col, "id")?,
            cell(date_col, "date")?,
            split_cell(tags_col, "hashtags")?,
            cell(tweet_col, "tweet")?,
            cell(resp_col, "response")?,
            split_cell(comments_col, "comments")?,
        )?);
    }
    Ok(records)
}

fn build_record(
    row: usize,
    id: &str,
    date: &str,
    hashtags: Vec<String>,
    tweet: &str,
    response: &str,
    comments: Vec<String>,
) -> Result<Record, CorpusError> {
    if id.is_empty() {
        return Err(CorpusError::EmptyId { row });
    }
    let date =
        NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| CorpusError::MalformedDate {
            row,
            value: date.to_owned(),
        })?;
    let hashtags = hashtags
        .into_iter()
        .map(|raw| normalize_hashtag(row, &raw))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let comments = comments
        .into_iter()
        .map(|c| c.trim().to_owned())
        .filter(|c| !c.is_empty())
        .collect();
    Ok(Record {
        id: id.to_owned(),
        date,
        hashtags,
        tweet: tweet.to_owned(),
        response: response.to_owned(),
        comments,
    })
}

/// Lowercases `raw`, strips leading `#`s, and validates the remainder
/// against `[a-z0-9_]+`.
fn normalize_hashtag(row: usize, raw: &str) -> Result<String, CorpusError> {
    let tag = raw.to_lowercase();
    let tag = tag.trim_start_matches('#');
    if tag.is_empty()
        || !tag
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return Err(CorpusError::MalformedHashtag {
            row,
            tag: raw.to_owned(),
        });
    }
    Ok(tag.to_owned())
}

/// Percentage of records (0–100) whose hashtag set contains each tag.
pub fn hashtag_distribution(
    corpus: &Corpus,
) -> Result<std::collections::BTreeMap<String, f64>, CorpusError> {
    if corpus.records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let total = corpus.records.len() as f64;
    let mut counts = std::collections::BTreeMap::new();
    for record in &corpus.records {
        for tag in &record.hashtags {
            *counts.entry(tag.clone()).or_insert(0usize) += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(tag, n)| (tag, 100.0 * n as f64 / total))
        .collect())
}

/// Summarizes the per-record comment counts of `corpus`.
pub fn comment_count_stats(corpus: &Corpus) -> Result<CommentStats, CorpusError> {
    if corpus.records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let total_tweets = corpus.records.len();
    let counts: Vec<usize> = corpus.records.iter().map(|r| r.comments.len()).collect();
    let total_comments: usize = counts.iter().sum();
    let max_comments = counts.iter().copied().max().unwrap_or(0);
    let zero_comment_tweets = counts.iter().filter(|&&c| c == 0).count();
    let mut histogram = std::collections::BTreeMap::new();
    for count in counts {
        *histogram.entry(count).or_insert(0usize) += 1;
    }
    Ok(CommentStats {
        total_tweets,
        total_comments,
        mean_comments: total_comments as f64 / total_tweets as f64,
        max_comments,
        zero_comment_tweets,
        zero_comment_fraction: zero_comment_tweets as f64 / total_tweets as f64,
        histogram,
    })
}
