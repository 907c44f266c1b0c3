//! End-to-end pipeline orchestration: configuration, stage execution, and
//! the hashed output manifest.
//!
//! A run is configured by a flat `key = value` file and writes, in order,
//! `eda/`, `cleaned/`, `embeddings/`, `clusters/`, `projections/`, and
//! `report/` under the configured output directory, finishing with a
//! `manifest.json` that lists every emitted file with its SHA-256. All
//! randomness flows from config seeds, so re-running an identical config
//! reproduces every file byte-for-byte. Each stage is also runnable
//! standalone on the previous stages' outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cleaning::{
    clean_common, clean_human, clean_llm, derive_neutral_words, Origin, TokenSequence, Wordlist,
    DEFAULT_NEUTRAL_MIN_DOC_FREQUENCY, DEFAULT_NEUTRAL_TOP_K,
};
use crate::clustering::{kmeans_fit, silhouette, ClusterModel, KmeansParams, SilhouetteReport};
use crate::corpus::{comment_count_stats, hashtag_distribution, load_corpus, Corpus, CorpusFormat};
use crate::eda::{
    topic_frequency, word_count_summary, word_frequency, FrequencyTable, LengthSummary,
};
use crate::embedding::{
    embed_sentences, embed_words, hash_embedder, load_embedding_table, EmbedDiagnostics,
    EmbeddingMatrix, EmbeddingProvider, MatrixLevel,
};
use crate::projection::{render_scatter_svg, tsne, Projection2D, TsneConfig};
use crate::sentiment::{
    compare_groups, label_clusters, render_comparison_table, sentiment_percentages,
    ComparisonReport, Group, Lexicon, SentimentReport,
};

/// Rows kept in each frequency table written by the EDA stage.
pub const EDA_TOP_K: usize = 25;

/// Where token vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// word2vec-style text table.
    Table(PathBuf),
    /// Deterministic hash embedder.
    Hash { dim: usize, seed: u64 },
}

/// A fully resolved pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub format: CorpusFormat,
    pub stopwords_path: PathBuf,
    /// `None` derives the neutral list from the corpus responses.
    pub neutral_path: Option<PathBuf>,
    pub embedding: EmbeddingSource,
    pub k: usize,
    pub kmeans_seed: u64,
    pub tsne: TsneConfig,
    pub lexicon_path: PathBuf,
    pub out_dir: PathBuf,
}

/// Errors arising from configuration or stage execution.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

/// One manifest row: a written file and its content hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

/// The run manifest written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    /// Whether every stage finished.
    pub complete: bool,
    /// Name of the failing stage, if any.
    pub failed_stage: Option<String>,
    /// Every emitted file, sorted by path.
    pub files: Vec<ManifestEntry>,
}

/// Outcome of a full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub manifest: Manifest,
    pub word: ComparisonReport,
    pub sentence: ComparisonReport,
}

// ---------------------------------------------------------------------------
// Configuration parsing

const KNOWN_KEYS: [&str; 16] = [
    "corpus_path",
    "format",
    "stopwords_path",
    "neutral_path",
    "embedding.table",
    "embedding.hash.dim",
    "embedding.hash.seed",
    "k",
    "kmeans_seed",
    "tsne.perplexity",
    "tsne.learning_rate",
    "tsne.iterations",
    "tsne.exaggeration_factor",
    "tsne.exaggeration_iters",
    "tsne.seed",
    "lexicon_path",
];
// `out_dir` is also known; kept separate because it resolves against the
// working directory rather than the config file's directory.

fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                idx + 1
            ))
        })?;
        let key = key.trim().to_owned();
        let value = value.trim().to_owned();
        if !(key == "out_dir" || KNOWN_KEYS.contains(&key.as_str())) {
            return Err(PipelineError::Config(format!(
                "line {}: unknown key `{key}`",
                idx + 1
            )));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(PipelineError::Config(format!(
                "line {}: duplicate key `{key}`",
                idx + 1
            )));
        }
    }
    Ok(map)
}

fn parse_number<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, PipelineError> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            PipelineError::Config(format!("key `{key}`: cannot parse `{raw}` as a number"))
        }),
    }
}

/// Builds a resolved [`PipelineConfig`] from config text.
///
/// `overrides` are applied after the file (CLI `--set key=value` flags).
/// Relative input paths resolve against `base_dir` (the config file's
/// directory); a relative `out_dir` resolves against `cwd`.
pub fn resolve_config(
    text: &str,
    base_dir: &Path,
    cwd: &Path,
    overrides: &[(String, String)],
) -> Result<PipelineConfig, PipelineError> {
    let mut map = parse_key_values(text)?;
    for (key, value) in overrides {
        if !(key == "out_dir" || KNOWN_KEYS.contains(&key.as_str())) {
            return Err(PipelineError::Config(format!(
                "unknown key `{key}` in override"
            )));
        }
        map.insert(key.clone(), value.clone());
    }

    let required = |key: &str| -> Result<&String, PipelineError> {
        map.get(key)
            .ok_or_else(|| PipelineError::Config(format!("missing required key `{key}`")))
    };
    let input_path = |raw: &str| -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };

    let corpus_path = input_path(required("corpus_path")?);
    let format = match map.get("format").map(String::as_str) {
        Some("jsonl") => CorpusFormat::Jsonl,
        Some("csv") => CorpusFormat::Csv,
        Some(other) => {
            return Err(PipelineError::Config(format!(
                "key `format`: expected `jsonl` or `csv`, got `{other}`"
            )))
        }
        None => match corpus_path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => CorpusFormat::Jsonl,
            Some("csv") => CorpusFormat::Csv,
            _ => {
                return Err(PipelineError::Config(
                    "key `format` missing and not inferable from the corpus extension".to_owned(),
                ))
            }
        },
    };
    let stopwords_path = input_path(required("stopwords_path")?);
    let neutral_path = map.get("neutral_path").map(|raw| input_path(raw));
    let lexicon_path = input_path(required("lexicon_path")?);

    let table = map.get("embedding.table");
    let hash_dim: Option<usize> = parse_number(&map, "embedding.hash.dim")?;
    let hash_seed: Option<u64> = parse_number(&map, "embedding.hash.seed")?;
    let embedding = match (table, hash_dim) {
        (Some(path), None) => {
            if hash_seed.is_some() {
                return Err(PipelineError::Config(
                    "embedding.hash.seed given alongside embedding.table".to_owned(),
                ));
            }
            EmbeddingSource::Table(input_path(path))
        }
        (None, Some(dim)) => {
            if dim == 0 {
                return Err(PipelineError::Config(
                    "embedding.hash.dim must be at least 1".to_owned(),
                ));
            }
            EmbeddingSource::Hash {
                dim,
                seed: hash_seed.unwrap_or(0),
            }
        }
        (Some(_), Some(_)) => {
            return Err(PipelineError::Config(
                "exactly one embedding source allowed: embedding.table or embedding.hash.*"
                    .to_owned(),
            ))
        }
        (None, None) => {
            return Err(PipelineError::Config(
                "missing embedding source: set embedding.table or embedding.hash.dim".to_owned(),
            ))
        }
    };

    let k = parse_number(&map, "k")?.unwrap_or(2);
    if k < 2 {
        return Err(PipelineError::Config(format!(
            "key `k`: the sentiment stage requires k >= 2, got {k}"
        )));
    }
    let kmeans_seed = parse_number(&map, "kmeans_seed")?.unwrap_or(0);

    let default_tsne = TsneConfig::default();
    let tsne = TsneConfig {
        perplexity: parse_number(&map, "tsne.perplexity")?.unwrap_or(default_tsne.perplexity),
        learning_rate: parse_number(&map, "tsne.learning_rate")?
            .unwrap_or(default_tsne.learning_rate),
        iterations: parse_number(&map, "tsne.iterations")?.unwrap_or(default_tsne.iterations),
        exaggeration_factor: parse_number(&map, "tsne.exaggeration_factor")?
            .unwrap_or(default_tsne.exaggeration_factor),
        exaggeration_iters: parse_number(&map, "tsne.exaggeration_iters")?
            .unwrap_or(default_tsne.exaggeration_iters),
        seed: parse_number(&map, "tsne.seed")?.unwrap_or(default_tsne.seed),
    };
    if tsne.iterations < tsne.exaggeration_iters {
        return Err(PipelineError::Config(format!(
            "tsne.iterations ({}) must be >= tsne.exaggeration_iters ({})",
            tsne.iterations, tsne.exaggeration_iters
        )));
    }

    let out_raw = PathBuf::from(required("out_dir")?);
    let out_dir = if out_raw.is_absolute() {
        out_raw
    } else {
        cwd.join(out_raw)
    };

    Ok(PipelineConfig {
        corpus_path,
        format,
        stopwords_path,
        neutral_path,
        embedding,
        k,
        kmeans_seed,
        tsne,
        lexicon_path,
        out_dir,
    })
}

/// Reads and resolves the config file at `path` (see [`resolve_config`]).
pub fn load_config(
    path: &Path,
    overrides: &[(String, String)],
) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let cwd = std::env::current_dir()
        .map_err(|e| PipelineError::Config(format!("cannot determine working directory: {e}")))?;
    resolve_config(&text, base_dir, &cwd, overrides)
}

// ---------------------------------------------------------------------------
// Output writing

/// Collects written files and their hashes for the manifest.
pub struct OutputWriter {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Self {
        OutputWriter {
            root: root.to_owned(),
            entries: Vec::new(),
        }
    }

    /// Writes `bytes` to `rel` under the output root, creating parent
    /// directories, and records the file in the manifest.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.entries.push(ManifestEntry {
            path: rel.to_owned(),
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    /// Paths written so far, relative to the root.
    pub fn written(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.path.clone()).collect()
    }

    /// Builds the manifest and writes `manifest.json`.
    pub fn finish(&mut self, failed_stage: Option<&str>) -> std::io::Result<Manifest> {
        let mut files = self.entries.clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            complete: failed_stage.is_none(),
            failed_stage: failed_stage.map(str::to_owned),
            files,
        };
        let json = to_pretty_json(&manifest);
        let path = self.root.join("manifest.json");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, json)?;
        Ok(manifest)
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut json = serde_json::to_string_pretty(value).expect("serializable value");
    json.push('\n');
    json
}

// ---------------------------------------------------------------------------
// Stage building blocks

/// The four model variants of the analysis grid.
#[derive(Debug, Clone)]
pub struct Variants<T> {
    pub human_word: T,
    pub llm_word: T,
    pub human_sentence: T,
    pub llm_sentence: T,
}

impl<T> Variants<T> {
    /// `(key, group, level, value)` rows in fixed order.
    pub fn entries(&self) -> [(&'static str, Group, MatrixLevel, &T); 4] {
        [
            (
                "human_word",
                Group::Human,
                MatrixLevel::Word,
                &self.human_word,
            ),
            ("llm_word", Group::Llm, MatrixLevel::Word, &self.llm_word),
            (
                "human_sentence",
                Group::Human,
                MatrixLevel::Sentence,
                &self.human_sentence,
            ),
            (
                "llm_sentence",
                Group::Llm,
                MatrixLevel::Sentence,
                &self.llm_sentence,
            ),
        ]
    }
}

/// Cleaned documents for all three text classes.
#[derive(Debug, Clone)]
pub struct CleanedDocs {
    /// Tweets through the common pipeline, one per record.
    pub tweets: Vec<TokenSequence>,
    /// Comments through the human pipeline, ids `{record}-c{i}`.
    pub human: Vec<TokenSequence>,
    /// Nonempty responses through the LLM pipeline, one per record.
    pub llm: Vec<TokenSequence>,
}

/// Loads the neutral wordlist from `neutral_path`, or derives it from the
/// corpus responses when the path is absent.
pub fn resolve_neutral(
    corpus: &Corpus,
    stopwords: &Wordlist,
    neutral_path: Option<&Path>,
) -> Result<Wordlist, crate::cleaning::CleaningError> {
    match neutral_path {
        Some(path) => Wordlist::from_file(path, "neutral"),
        None => {
            // Document frequencies are measured on responses cleaned by
            // every step except the neutral-word removal itself.
            let docs: Vec<TokenSequence> = corpus
                .records
                .iter()
                .filter(|r| !r.response.trim().is_empty())
                .map(|r| {
                    let mut seq = clean_human(&r.id, &r.response, stopwords);
                    seq.origin = Origin::LlmResponse;
                    seq
                })
                .collect();
            derive_neutral_words(
                &docs,
                DEFAULT_NEUTRAL_MIN_DOC_FREQUENCY,
                DEFAULT_NEUTRAL_TOP_K,
            )
        }
    }
}

/// Cleans every text class of `corpus`.
pub fn build_docs(corpus: &Corpus, stopwords: &Wordlist, neutral: &Wordlist) -> CleanedDocs {
    let tweets = corpus
        .records
        .iter()
        .map(|r| clean_common(&r.id, Origin::Tweet, &r.tweet, stopwords))
        .collect();
    let human = corpus
        .records
        .iter()
        .flat_map(|r| {
            r.comments.iter().enumerate().map(|(i, comment)| {
                clean_human(&format!("{}-c{}", r.id, i + 1), comment, stopwords)
            })
        })
        .collect();
    let llm = corpus
        .records
        .iter()
        .filter(|r| !r.response.trim().is_empty())
        .map(|r| clean_llm(&r.id, &r.response, stopwords, neutral))
        .collect();
    CleanedDocs { tweets, human, llm }
}

/// Builds the configured embedding provider.
pub fn build_provider(
    source: &EmbeddingSource,
) -> Result<Box<dyn EmbeddingProvider>, crate::embedding::EmbeddingError> {
    match source {
        EmbeddingSource::Table(path) => Ok(Box::new(load_embedding_table(path)?)),
        EmbeddingSource::Hash { dim, seed } => Ok(Box::new(hash_embedder(*dim, *seed)?)),
    }
}

/// Embeds both classes at both levels.
pub fn build_matrices(
    docs: &CleanedDocs,
    provider: &dyn EmbeddingProvider,
) -> Result<(Variants<EmbeddingMatrix>, Variants<EmbedDiagnostics>), crate::embedding::EmbeddingError>
{
    let (human_word, d1) = embed_words(&docs.human, provider)?;
    let (llm_word, d2) = embed_words(&docs.llm, provider)?;
    let (human_sentence, d3) = embed_sentences(&docs.human, provider)?;
    let (llm_sentence, d4) = embed_sentences(&docs.llm, provider)?;
    Ok((
        Variants {
            human_word,
            llm_word,
            human_sentence,
            llm_sentence,
        },
        Variants {
            human_word: d1,
            llm_word: d2,
            human_sentence: d3,
            llm_sentence: d4,
        },
    ))
}

// ---------------------------------------------------------------------------
// Deterministic renderers

fn frequency_csv(table: &FrequencyTable) -> String {
    let mut out = String::from("token,count,doc_frequency\n");
    for entry in &table.entries {
        out.push_str(&format!(
            "{},{},{}\n",
            entry.token, entry.count, entry.doc_frequency
        ));
    }
    out
}

fn length_summary_csv(summary: &LengthSummary) -> String {
    format!(
        "n,min,max,mean,median,q1,q3,outlier_ids\n{},{},{},{},{},{},{},{}\n",
        summary.n,
        summary.min,
        summary.max,
        summary.mean,
        summary.median,
        summary.q1,
        summary.q3,
        summary.outlier_ids.join(";")
    )
}

fn hashtag_csv(distribution: &BTreeMap<String, f64>) -> String {
    let mut out = String::from("hashtag,percent\n");
    for (tag, pct) in distribution {
        out.push_str(&format!("{tag},{pct}\n"));
    }
    out
}

fn token_jsonl(docs: &[TokenSequence]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("serializable token sequence"));
        out.push('\n');
    }
    out
}

fn matrix_csv(matrix: &EmbeddingMatrix) -> String {
    let mut buffer = Vec::new();
    matrix.write_csv(&mut buffer).expect("in-memory write");
    String::from_utf8(buffer).expect("csv is utf-8")
}

fn assignments_csv(labels: &[String], assignments: &[usize]) -> String {
    let mut out = String::from("label,cluster\n");
    for (label, cluster) in labels.iter().zip(assignments) {
        out.push_str(&format!("{label},{cluster}\n"));
    }
    out
}

fn coords_csv(proj: &Projection2D, assignments: &[usize]) -> String {
    let mut out = String::from("label,x,y,cluster\n");
    for (i, label) in proj.labels.iter().enumerate() {
        let (x, y) = proj.point(i);
        out.push_str(&format!("{label},{x},{y},{}\n", assignments[i]));
    }
    out
}

/// Per-variant clustering metrics written as `clusters/{variant}_metrics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterMetrics {
    pub k: usize,
    pub inertia: f64,
    pub silhouette_mean: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize)]
struct FullReport<'a> {
    word: &'a ComparisonReport,
    sentence: &'a ComparisonReport,
}

fn silhouette_table(level: MatrixLevel, human: f64, llm: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!("Silhouette Score of Clusters ({level} level)\n"));
    out.push_str(&format!("{:<16} {:>12}\n", "group", "silhouette"));
    out.push_str(&format!("{:<16} {:>12.6}\n", "human", human));
    out.push_str(&format!("{:<16} {:>12.6}\n", "llm", llm));
    out
}

// ---------------------------------------------------------------------------
// Stage runners

struct LoadedInputs {
    corpus: Corpus,
    stopwords: Wordlist,
    lexicon: Lexicon,
}

fn stage_load(config: &PipelineConfig) -> Result<LoadedInputs, String> {
    let corpus = load_corpus(&config.corpus_path, config.format).map_err(|e| e.to_string())?;
    let stopwords =
        Wordlist::from_file(&config.stopwords_path, "stopwords").map_err(|e| e.to_string())?;
    let lexicon = Lexicon::load(&config.lexicon_path).map_err(|e| e.to_string())?;
    Ok(LoadedInputs {
        corpus,
        stopwords,
        lexicon,
    })
}

fn stage_clean(
    config: &PipelineConfig,
    inputs: &LoadedInputs,
) -> Result<(Wordlist, CleanedDocs), String> {
    let neutral = resolve_neutral(
        &inputs.corpus,
        &inputs.stopwords,
        config.neutral_path.as_deref(),
    )
    .map_err(|e| e.to_string())?;
    let docs = build_docs(&inputs.corpus, &inputs.stopwords, &neutral);
    Ok((neutral, docs))
}

fn write_eda(writer: &mut OutputWriter, corpus: &Corpus, docs: &CleanedDocs) -> Result<(), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let human_freq = word_frequency(&docs.human, EDA_TOP_K).map_err(|e| err(&e))?;
    let llm_freq = word_frequency(&docs.llm, EDA_TOP_K).map_err(|e| err(&e))?;
    let topics = topic_frequency(&docs.human, EDA_TOP_K).map_err(|e| err(&e))?;
    let human_lengths = word_count_summary(&docs.human).map_err(|e| err(&e))?;
    let llm_lengths = word_count_summary(&docs.llm).map_err(|e| err(&e))?;
    let hashtags = hashtag_distribution(corpus).map_err(|e| err(&e))?;
    let comments = comment_count_stats(corpus).map_err(|e| err(&e))?;
    let io = |e: std::io::Error| e.to_string();
    writer
        .write(
            "eda/word_frequency_human.csv",
            frequency_csv(&human_freq).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/word_frequency_llm.csv",
            frequency_csv(&llm_freq).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/topic_frequency_human.csv",
            frequency_csv(&topics).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/length_summary_human.csv",
            length_summary_csv(&human_lengths).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/length_summary_llm.csv",
            length_summary_csv(&llm_lengths).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/hashtag_distribution.csv",
            hashtag_csv(&hashtags).as_bytes(),
        )
        .map_err(io)?;
    writer
        .write(
            "eda/comment_stats.json",
            to_pretty_json(&comments).as_bytes(),
        )
        .map_err(io)?;
    Ok(())
}

fn write_cleaned(writer: &mut OutputWriter, docs: &CleanedDocs) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    writer
        .write("cleaned/tweets.jsonl", token_jsonl(&docs.tweets).as_bytes())
        .map_err(io)?;
    writer
        .write("cleaned/human.jsonl", token_jsonl(&docs.human).as_bytes())
        .map_err(io)?;
    writer
        .write("cleaned/llm.jsonl", token_jsonl(&docs.llm).as_bytes())
        .map_err(io)?;
    Ok(())
}

fn write_embeddings(
    writer: &mut OutputWriter,
    matrices: &Variants<EmbeddingMatrix>,
    diagnostics: &Variants<EmbedDiagnostics>,
) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    for (key, _, _, matrix) in matrices.entries() {
        writer
            .write(
                &format!("embeddings/{key}.csv"),
                matrix_csv(matrix).as_bytes(),
            )
            .map_err(io)?;
    }
    let map: BTreeMap<&'static str, &EmbedDiagnostics> = diagnostics
        .entries()
        .into_iter()
        .map(|(key, _, _, value)| (key, value))
        .collect();
    writer
        .write(
            "embeddings/diagnostics.json",
            to_pretty_json(&map).as_bytes(),
        )
        .map_err(io)?;
    Ok(())
}

/// Fits and scores one matrix; shared by the pipeline and the standalone
/// cluster stage.
pub fn fit_variant(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
) -> Result<(ClusterModel, SilhouetteReport), crate::clustering::ClusteringError> {
    let model = kmeans_fit(matrix, &KmeansParams::new(k, seed))?;
    let report = silhouette(matrix, &model.assignments)?;
    Ok((model, report))
}

fn write_cluster_variant(
    writer: &mut OutputWriter,
    key: &str,
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    report: &SilhouetteReport,
) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    writer
        .write(
            &format!("clusters/{key}_assignments.csv"),
            assignments_csv(&matrix.labels, &model.assignments).as_bytes(),
        )
        .map_err(io)?;
    let metrics = ClusterMetrics {
        k: model.k,
        inertia: model.inertia,
        silhouette_mean: report.mean,
        iterations: model.iterations,
        converged: model.converged,
    };
    writer
        .write(
            &format!("clusters/{key}_metrics.json"),
            to_pretty_json(&metrics).as_bytes(),
        )
        .map_err(io)?;
    Ok(())
}

fn write_projection_variant(
    writer: &mut OutputWriter,
    key: &str,
    proj: &Projection2D,
    assignments: &[usize],
) -> Result<(), String> {
    let io = |e: std::io::Error| e.to_string();
    let svg = render_scatter_svg(proj, assignments).map_err(|e| e.to_string())?;
    writer
        .write(&format!("projections/{key}.svg"), svg.as_bytes())
        .map_err(io)?;
    writer
        .write(
            &format!("projections/{key}_coords.csv"),
            coords_csv(proj, assignments).as_bytes(),
        )
        .map_err(io)?;
    Ok(())
}

/// Token lists aligned to a sentence matrix's rows (documents dropped by
/// the embedding stage are absent from the matrix and skipped here).
fn doc_tokens_for(matrix: &EmbeddingMatrix, docs: &[TokenSequence]) -> Vec<Vec<String>> {
    let by_id: BTreeMap<&str, &Vec<String>> = docs
        .iter()
        .map(|d| (d.source_id.as_str(), &d.tokens))
        .collect();
    matrix
        .labels
        .iter()
        .map(|label| {
            by_id
                .get(label.as_str())
                .map(|tokens| (*tokens).clone())
                .unwrap_or_default()
        })
        .collect()
}

/// Builds one group's sentiment report from fitted artifacts.
#[allow(clippy::too_many_arguments)]
fn build_report(
    group: Group,
    level: MatrixLevel,
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    silhouette_mean: f64,
    docs: &[TokenSequence],
    lexicon: &Lexicon,
    provider: &dyn EmbeddingProvider,
) -> Result<SentimentReport, String> {
    let tokens;
    let doc_tokens = match level {
        MatrixLevel::Word => None,
        MatrixLevel::Sentence => {
            tokens = doc_tokens_for(matrix, docs);
            Some(tokens.as_slice())
        }
    };
    let polarity =
        label_clusters(model, matrix, doc_tokens, lexicon, provider).map_err(|e| e.to_string())?;
    let split = sentiment_percentages(&model.assignments, &polarity).map_err(|e| e.to_string())?;
    Ok(SentimentReport {
        group,
        level,
        split,
        silhouette_mean,
        cluster_polarity: polarity,
    })
}

// ---------------------------------------------------------------------------
// Full pipeline

/// Runs every stage and writes the manifest. On a stage failure the partial
/// outputs are left in place and the manifest is written with
/// `complete: false` and the failing stage's name.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    let mut writer = OutputWriter::new(&config.out_dir);

    macro_rules! stage {
        ($name:literal, $body:expr) => {
            match $body {
                Ok(value) => value,
                Err(message) => {
                    let _ = writer.finish(Some($name));
                    return Err(PipelineError::Stage {
                        stage: $name,
                        message,
                    });
                }
            }
        };
    }

    let inputs = stage!("load", stage_load(config));
    let (_neutral, docs) = stage!("clean", stage_clean(config, &inputs));
    stage!("eda", write_eda(&mut writer, &inputs.corpus, &docs));
    stage!("clean", write_cleaned(&mut writer, &docs));

    let provider = stage!(
        "embed",
        build_provider(&config.embedding).map_err(|e| e.to_string())
    );
    let (matrices, diagnostics) = stage!(
        "embed",
        build_matrices(&docs, provider.as_ref()).map_err(|e| e.to_string())
    );
    stage!(
        "embed",
        write_embeddings(&mut writer, &matrices, &diagnostics)
    );

    let mut fits: Vec<(ClusterModel, SilhouetteReport)> = Vec::new();
    for (key, _, _, matrix) in matrices.entries() {
        let fit = stage!(
            "cluster",
            fit_variant(matrix, config.k, config.kmeans_seed).map_err(|e| e.to_string())
        );
        stage!(
            "cluster",
            write_cluster_variant(&mut writer, key, matrix, &fit.0, &fit.1)
        );
        fits.push(fit);
    }

    for (i, (key, _, _, matrix)) in matrices.entries().into_iter().enumerate() {
        let proj = stage!(
            "project",
            tsne(matrix, &config.tsne).map_err(|e| e.to_string())
        );
        stage!(
            "project",
            write_projection_variant(&mut writer, key, &proj, &fits[i].0.assignments)
        );
    }

    let mut reports: Vec<SentimentReport> = Vec::new();
    for (i, (_, group, level, matrix)) in matrices.entries().into_iter().enumerate() {
        let docs_for_level = match group {
            Group::Human => &docs.human,
            Group::Llm => &docs.llm,
        };
        let report = stage!(
            "report",
            build_report(
                group,
                level,
                matrix,
                &fits[i].0,
                fits[i].1.mean,
                docs_for_level,
                &inputs.lexicon,
                provider.as_ref(),
            )
        );
        reports.push(report);
    }
    let word = stage!(
        "report",
        compare_groups(&reports[0], &reports[1]).map_err(|e| e.to_string())
    );
    let sentence = stage!(
        "report",
        compare_groups(&reports[2], &reports[3]).map_err(|e| e.to_string())
    );
    let full = FullReport {
        word: &word,
        sentence: &sentence,
    };
    stage!(
        "report",
        writer
            .write("report/report.json", to_pretty_json(&full).as_bytes())
            .map_err(|e| e.to_string())
    );
    let mut text = String::new();
    text.push_str(&silhouette_table(
        MatrixLevel::Word,
        reports[0].silhouette_mean,
        reports[1].silhouette_mean,
    ));
    text.push('\n');
    text.push_str(&silhouette_table(
        MatrixLevel::Sentence,
        reports[2].silhouette_mean,
        reports[3].silhouette_mean,
    ));
    text.push('\n');
    text.push_str(&render_comparison_table(&word));
    text.push('\n');
    text.push_str(&render_comparison_table(&sentence));
    stage!(
        "report",
        writer
            .write("report/report.txt", text.as_bytes())
            .map_err(|e| e.to_string())
    );

    let manifest = writer.finish(None).map_err(|e| PipelineError::Stage {
        stage: "report",
        message: format!("cannot write manifest: {e}"),
    })?;
    Ok(PipelineSummary {
        manifest,
        word,
        sentence,
    })
}

// ---------------------------------------------------------------------------
// Standalone stages

/// Reads a cleaned-token JSONL file.
pub fn read_token_sequences(path: &Path) -> Result<Vec<TokenSequence>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: TokenSequence = serde_json::from_str(line)
            .map_err(|e| format!("{}:{}: {e}", path.display(), idx + 1))?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(format!("{} contains no documents", path.display()));
    }
    Ok(docs)
}

/// Reads an assignments CSV (`label,cluster`).
pub fn read_assignments(path: &Path) -> Result<(Vec<String>, Vec<usize>), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("label,cluster") => {}
        _ => {
            return Err(format!(
                "{}: expected `label,cluster` header",
                path.display()
            ))
        }
    }
    let mut labels = Vec::new();
    let mut clusters = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (label, cluster) = line
            .rsplit_once(',')
            .ok_or_else(|| format!("{}:{}: malformed row", path.display(), idx + 2))?;
        labels.push(label.to_owned());
        clusters.push(
            cluster
                .parse::<usize>()
                .map_err(|e| format!("{}:{}: bad cluster index: {e}", path.display(), idx + 2))?,
        );
    }
    if labels.is_empty() {
        return Err(format!("{} contains no assignments", path.display()));
    }
    Ok((labels, clusters))
}

fn stage_error(stage: &'static str, message: String) -> PipelineError {
    PipelineError::Stage { stage, message }
}

/// Standalone EDA stage: cleans in memory and writes `eda/`.
pub fn run_stage_eda(config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    let inputs = stage_load(config).map_err(|m| stage_error("load", m))?;
    let (_, docs) = stage_clean(config, &inputs).map_err(|m| stage_error("clean", m))?;
    let mut writer = OutputWriter::new(&config.out_dir);
    write_eda(&mut writer, &inputs.corpus, &docs).map_err(|m| stage_error("eda", m))?;
    Ok(writer.written())
}

/// Standalone clean stage: writes `cleaned/`, optionally restricted to one
/// class.
pub fn run_stage_clean(
    config: &PipelineConfig,
    class: Option<Origin>,
) -> Result<Vec<String>, PipelineError> {
    let inputs = stage_load(config).map_err(|m| stage_error("load", m))?;
    let (_, docs) = stage_clean(config, &inputs).map_err(|m| stage_error("clean", m))?;
    let mut writer = OutputWriter::new(&config.out_dir);
    let io = |e: std::io::Error| stage_error("clean", e.to_string());
    if class.is_none() || class == Some(Origin::Tweet) {
        writer
            .write("cleaned/tweets.jsonl", token_jsonl(&docs.tweets).as_bytes())
            .map_err(io)?;
    }
    if class.is_none() || class == Some(Origin::HumanComment) {
        writer
            .write("cleaned/human.jsonl", token_jsonl(&docs.human).as_bytes())
            .map_err(io)?;
    }
    if class.is_none() || class == Some(Origin::LlmResponse) {
        writer
            .write("cleaned/llm.jsonl", token_jsonl(&docs.llm).as_bytes())
            .map_err(io)?;
    }
    Ok(writer.written())
}

/// Standalone embed stage: reads `cleaned/`, writes `embeddings/`.
pub fn run_stage_embed(config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    let err = |m: String| stage_error("embed", m);
    let human = read_token_sequences(&config.out_dir.join("cleaned/human.jsonl")).map_err(err)?;
    let llm = read_token_sequences(&config.out_dir.join("cleaned/llm.jsonl")).map_err(err)?;
    let docs = CleanedDocs {
        tweets: Vec::new(),
        human,
        llm,
    };
    let provider = build_provider(&config.embedding).map_err(|e| err(e.to_string()))?;
    let (matrices, diagnostics) =
        build_matrices(&docs, provider.as_ref()).map_err(|e| err(e.to_string()))?;
    let mut writer = OutputWriter::new(&config.out_dir);
    write_embeddings(&mut writer, &matrices, &diagnostics).map_err(err)?;
    Ok(writer.written())
}

/// Keys of the two variants at one level.
fn level_keys(level: MatrixLevel) -> [(&'static str, Group); 2] {
    match level {
        MatrixLevel::Word => [("human_word", Group::Human), ("llm_word", Group::Llm)],
        MatrixLevel::Sentence => [
            ("human_sentence", Group::Human),
            ("llm_sentence", Group::Llm),
        ],
    }
}

fn read_matrix(
    config: &PipelineConfig,
    key: &str,
    level: MatrixLevel,
) -> Result<EmbeddingMatrix, String> {
    let path = config.out_dir.join(format!("embeddings/{key}.csv"));
    let file =
        std::fs::File::open(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    EmbeddingMatrix::read_csv(std::io::BufReader::new(file), level)
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Standalone cluster stage for one level: reads `embeddings/`, writes both
/// groups' assignments and metrics.
pub fn run_stage_cluster(
    config: &PipelineConfig,
    level: MatrixLevel,
) -> Result<Vec<String>, PipelineError> {
    let err = |m: String| stage_error("cluster", m);
    let mut writer = OutputWriter::new(&config.out_dir);
    for (key, _) in level_keys(level) {
        let matrix = read_matrix(config, key, level).map_err(err)?;
        let (model, report) =
            fit_variant(&matrix, config.k, config.kmeans_seed).map_err(|e| err(e.to_string()))?;
        write_cluster_variant(&mut writer, key, &matrix, &model, &report).map_err(err)?;
    }
    Ok(writer.written())
}

/// Standalone projection stage for one level: reads `embeddings/` and
/// `clusters/`, writes both groups' SVG and coords files. When `only` names
/// a group and an SVG path, just that variant is written, to the given path
/// (with the coords CSV alongside).
pub fn run_stage_project(
    config: &PipelineConfig,
    level: MatrixLevel,
    only: Option<(Group, PathBuf)>,
) -> Result<Vec<String>, PipelineError> {
    let err = |m: String| stage_error("project", m);
    let mut writer = OutputWriter::new(&config.out_dir);
    let mut written_abs = Vec::new();
    for (key, group) in level_keys(level) {
        if let Some((only_group, _)) = &only {
            if *only_group != group {
                continue;
            }
        }
        let matrix = read_matrix(config, key, level).map_err(err)?;
        let (labels, assignments) = read_assignments(
            &config
                .out_dir
                .join(format!("clusters/{key}_assignments.csv")),
        )
        .map_err(err)?;
        if labels != matrix.labels {
            return Err(err(format!(
                "assignments for `{key}` do not match the embedding matrix rows"
            )));
        }
        let proj = tsne(&matrix, &config.tsne).map_err(|e| err(e.to_string()))?;
        match &only {
            Some((_, svg_path)) => {
                let svg =
                    render_scatter_svg(&proj, &assignments).map_err(|e| err(e.to_string()))?;
                std::fs::write(svg_path, svg.as_bytes()).map_err(|e| err(e.to_string()))?;
                let coords_path = svg_path.with_extension("csv");
                std::fs::write(&coords_path, coords_csv(&proj, &assignments).as_bytes())
                    .map_err(|e| err(e.to_string()))?;
                written_abs.push(svg_path.display().to_string());
                written_abs.push(coords_path.display().to_string());
            }
            None => {
                write_projection_variant(&mut writer, key, &proj, &assignments).map_err(err)?;
            }
        }
    }
    let mut written = writer.written();
    written.extend(written_abs);
    Ok(written)
}

/// Standalone report stage: reads `cleaned/`, `embeddings/`, and
/// `clusters/` for all four variants, writes `report/`.
pub fn run_stage_report(config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    let err = |m: String| stage_error("report", m);
    let lexicon = Lexicon::load(&config.lexicon_path).map_err(|e| err(e.to_string()))?;
    let provider = build_provider(&config.embedding).map_err(|e| err(e.to_string()))?;
    let human_docs =
        read_token_sequences(&config.out_dir.join("cleaned/human.jsonl")).map_err(err)?;
    let llm_docs = read_token_sequences(&config.out_dir.join("cleaned/llm.jsonl")).map_err(err)?;

    let mut reports: Vec<SentimentReport> = Vec::new();
    for level in [MatrixLevel::Word, MatrixLevel::Sentence] {
        for (key, group) in level_keys(level) {
            let matrix = read_matrix(config, key, level).map_err(err)?;
            let (labels, assignments) = read_assignments(
                &config
                    .out_dir
                    .join(format!("clusters/{key}_assignments.csv")),
            )
            .map_err(err)?;
            if labels != matrix.labels {
                return Err(err(format!(
                    "assignments for `{key}` do not match the embedding matrix rows"
                )));
            }
            let silhouette_report =
                silhouette(&matrix, &assignments).map_err(|e| err(e.to_string()))?;
            // Rebuild a model shell (centroids as member means) so the
            // labeling path is identical to the pipeline's.
            let model = model_from_assignments(&matrix, &assignments, config.kmeans_seed);
            let docs = match group {
                Group::Human => &human_docs,
                Group::Llm => &llm_docs,
            };
            let report = build_report(
                group,
                level,
                &matrix,
                &model,
                silhouette_report.mean,
                docs,
                &lexicon,
                provider.as_ref(),
            )
            .map_err(err)?;
            reports.push(report);
        }
    }
    let word = compare_groups(&reports[0], &reports[1]).map_err(|e| err(e.to_string()))?;
    let sentence = compare_groups(&reports[2], &reports[3]).map_err(|e| err(e.to_string()))?;
    let mut writer = OutputWriter::new(&config.out_dir);
    let full = FullReport {
        word: &word,
        sentence: &sentence,
    };
    writer
        .write("report/report.json", to_pretty_json(&full).as_bytes())
        .map_err(|e| err(e.to_string()))?;
    let mut text = String::new();
    text.push_str(&silhouette_table(
        MatrixLevel::Word,
        reports[0].silhouette_mean,
        reports[1].silhouette_mean,
    ));
    text.push('\n');
    text.push_str(&silhouette_table(
        MatrixLevel::Sentence,
        reports[2].silhouette_mean,
        reports[3].silhouette_mean,
    ));
    text.push('\n');
    text.push_str(&render_comparison_table(&word));
    text.push('\n');
    text.push_str(&render_comparison_table(&sentence));
    writer
        .write("report/report.txt", text.as_bytes())
        .map_err(|e| err(e.to_string()))?;
    Ok(writer.written())
}

/// Reconstructs a k=2 model from stored assignments: centroids are the
/// member means, matching what a converged fit would have produced.
fn model_from_assignments(
    matrix: &EmbeddingMatrix,
    assignments: &[usize],
    seed: u64,
) -> ClusterModel {
    let k = assignments.iter().copied().max().unwrap_or(0) + 1;
    let dim = matrix.dim;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(matrix.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for s in &mut sums[c * dim..(c + 1) * dim] {
                *s /= counts[c] as f64;
            }
        }
    }
    let inertia = (0..matrix.n_rows())
        .map(|i| {
            crate::clustering::squared_distance(
                matrix.row(i),
                &sums[assignments[i] * dim..(assignments[i] + 1) * dim],
            )
        })
        .sum();
    ClusterModel {
        k,
        dim,
        centroids: sums,
        assignments: assignments.to_vec(),
        iterations: 0,
        converged: true,
        inertia,
        seed,
    }
}
