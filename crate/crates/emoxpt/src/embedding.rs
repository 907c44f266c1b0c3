//! Token embedding providers and word/sentence embedding matrices.
//!
//! Two providers are available: a lookup table loaded from a word2vec-style
//! text file, and a deterministic hash embedder that derives a unit vector
//! for any token from a seed (useful when no pretrained table is at hand).
//! Word-level matrices hold one row per unique in-vocabulary token; sentence
//! matrices hold one row per document, pooled as the mean over token
//! occurrences (repeats weighted by multiplicity, out-of-vocabulary tokens
//! skipped).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cleaning::TokenSequence;

/// Whether a matrix has one row per unique token or one per document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixLevel {
    Word,
    Sentence,
}

impl std::fmt::Display for MatrixLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatrixLevel::Word => "word",
            MatrixLevel::Sentence => "sentence",
        })
    }
}

/// Maps tokens to fixed-dimension vectors.
pub trait EmbeddingProvider {
    /// Dimension of every vector produced by this provider.
    fn dim(&self) -> usize;
    /// The token's vector, or `None` if the token is out of vocabulary.
    fn lookup(&self, token: &str) -> Option<Vec<f64>>;
    /// Whether the token is in vocabulary.
    fn contains(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }
}

/// Embedding table loaded from a word2vec-style text file.
#[derive(Debug, Clone)]
pub struct TableProvider {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl TableProvider {
    /// Tokens in the table, in lexicographic order.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    /// Number of tokens in the table.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    /// Whether the table is empty (never true for a loaded table).
    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for TableProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lookup(&self, token: &str) -> Option<Vec<f64>> {
        self.table.get(token).cloned()
    }

    fn contains(&self, token: &str) -> bool {
        self.table.contains_key(token)
    }
}

/// Deterministic hash embedder: every token gets a unit vector drawn from a
/// ChaCha8 stream keyed on SHA-256(seed ‖ token).
#[derive(Debug, Clone, Copy)]
pub struct HashProvider {
    dim: usize,
    seed: u64,
}

/// Builds a hash embedder of dimension `dim` keyed on `seed`.
pub fn hash_embedder(dim: usize, seed: u64) -> Result<HashProvider, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    Ok(HashProvider { dim, seed })
}

impl EmbeddingProvider for HashProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lookup(&self, token: &str) -> Option<Vec<f64>> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let mut vector: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut vector {
                *v /= norm;
            }
        } else {
            // Astronomically unlikely all-zero draw; pin to a fixed axis so
            // the vector is still unit length.
            vector[0] = 1.0;
        }
        Some(vector)
    }

    fn contains(&self, _token: &str) -> bool {
        true
    }
}

/// Dense row-major matrix of embeddings with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// Word or sentence level.
    pub level: MatrixLevel,
    /// Row labels: tokens (word level) or document ids (sentence level).
    pub labels: Vec<String>,
    /// Vector dimension.
    pub dim: usize,
    /// Row-major data, `labels.len() × dim` entries, all finite.
    pub data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    /// The `i`-th row as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Writes the matrix as CSV: header `label,v0,…`, one row per label.
    /// Values use Rust's shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        write!(writer, "label")?;
        for j in 0..self.dim {
            write!(writer, ",v{j}")?;
        }
        writeln!(writer)?;
        for (i, label) in self.labels.iter().enumerate() {
            write!(writer, "{label}")?;
            for value in self.row(i) {
                write!(writer, ",{value}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    /// Reads a matrix previously written by [`EmbeddingMatrix::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R, level: MatrixLevel) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(EmbeddingError::BadHeader {
            reason: "empty file".to_owned(),
        })?;
        let header = header?;
        let mut fields = header.split(',');
        if fields.next() != Some("label") {
            return Err(EmbeddingError::BadHeader {
                reason: "first column must be `label`".to_owned(),
            });
        }
        let dim = fields.count();
        if dim == 0 {
            return Err(EmbeddingError::BadHeader {
                reason: "no vector columns".to_owned(),
            });
        }
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = idx + 1;
            let mut fields = line.split(',');
            labels.push(
                fields
                    .next()
                    .expect("split yields at least one field")
                    .to_owned(),
            );
            let mut count = 0usize;
            for field in fields {
                let value: f64 = field
                    .parse()
                    .map_err(|_| EmbeddingError::MalformedValue { line: row })?;
                if !value.is_finite() {
                    return Err(EmbeddingError::NonFiniteValue { line: row });
                }
                data.push(value);
                count += 1;
            }
            if count != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: row,
                    expected: dim,
                    actual: count,
                });
            }
        }
        if labels.is_empty() {
            return Err(EmbeddingError::EmptyMatrix);
        }
        Ok(EmbeddingMatrix {
            level,
            labels,
            dim,
            data,
        })
    }
}

/// Which tokens or documents the embedding stage had to skip.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmbedDiagnostics {
    /// Out-of-vocabulary token → number of occurrences skipped.
    pub oov_tokens: BTreeMap<String, usize>,
    /// Documents dropped because none of their tokens were in vocabulary
    /// (sentence level only), in input order.
    pub dropped_docs: Vec<String>,
}

/// Errors arising while loading tables or building matrices.
#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {reason}")]
    BadHeader { reason: String },
    #[error("line {line}: expected {expected} values, found {actual}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: malformed numeric value")]
    MalformedValue { line: usize },
    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: usize },
    #[error("duplicate token `{0}` in embedding table")]
    DuplicateToken(String),
    #[error("header promised {expected} vectors, file has {actual}")]
    LineCountMismatch { expected: usize, actual: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("matrix has no rows")]
    EmptyMatrix,
    #[error("no input documents")]
    EmptyInput,
    #[error("no token of any document is in the provider vocabulary")]
    NoKnownTokens,
    #[error("every document lost all its tokens to the vocabulary filter")]
    NoEmbeddableDocuments,
}

/// Loads a word2vec-style text table: a `count dim` header line followed by
/// `count` lines of `token v1 … v_dim`, whitespace-separated.
pub fn load_embedding_table(path: &Path) -> Result<TableProvider, EmbeddingError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(EmbeddingError::BadHeader {
        reason: "empty file".to_owned(),
    })?;
    let mut parts = header.split_whitespace();
    let parse_header = |part: Option<&str>| -> Option<usize> { part?.parse().ok() };
    let count = parse_header(parts.next()).ok_or(EmbeddingError::BadHeader {
        reason: format!("expected `count dim`, got `{header}`"),
    })?;
    let dim = parse_header(parts.next()).ok_or(EmbeddingError::BadHeader {
        reason: format!("expected `count dim`, got `{header}`"),
    })?;
    if parts.next().is_some() || count == 0 || dim == 0 {
        return Err(EmbeddingError::BadHeader {
            reason: format!("expected positive `count dim`, got `{header}`"),
        });
    }
    let mut table = BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = idx + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("nonblank line").to_owned();
        let vector: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| EmbeddingError::MalformedValue { line: row })
            })
            .collect::<Result<_, _>>()?;
        if vector.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: row,
                expected: dim,
                actual: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            let _ = bad;
            return Err(EmbeddingError::NonFiniteValue { line: row });
        }
        if table.insert(token.clone(), vector).is_some() {
            return Err(EmbeddingError::DuplicateToken(token));
        }
    }
    if table.len() != count {
        return Err(EmbeddingError::LineCountMismatch {
            expected: count,
            actual: table.len(),
        });
    }
    Ok(TableProvider { dim, table })
}

/// Builds the word-level matrix: one row per unique in-vocabulary token
/// across all documents, rows in lexicographic token order.
pub fn embed_words<P: EmbeddingProvider + ?Sized>(
    docs: &[TokenSequence],
    provider: &P,
) -> Result<(EmbeddingMatrix, EmbedDiagnostics), EmbeddingError> {
    if docs.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let mut diagnostics = EmbedDiagnostics::default();
    let mut vocabulary = std::collections::BTreeSet::new();
    for doc in docs {
        for token in &doc.tokens {
            if provider.contains(token) {
                vocabulary.insert(token.clone());
            } else {
                *diagnostics.oov_tokens.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }
    if vocabulary.is_empty() {
        return Err(EmbeddingError::NoKnownTokens);
    }
    let dim = provider.dim();
    let mut data = Vec::with_capacity(vocabulary.len() * dim);
    for token in &vocabulary {
        data.extend(provider.lookup(token).expect("token checked in-vocab"));
    }
    let matrix = EmbeddingMatrix {
        level: MatrixLevel::Word,
        labels: vocabulary.into_iter().collect(),
        dim,
        data,
    };
    debug_assert!(matrix.data.iter().all(|v| v.is_finite()));
    Ok((matrix, diagnostics))
}

/// Builds the sentence-level matrix: one row per document, pooled as the
/// mean over token occurrences. Documents with no in-vocabulary tokens are
/// dropped and reported in the diagnostics.
pub fn embed_sentences<P: EmbeddingProvider + ?Sized>(
    docs: &[TokenSequence],
    provider: &P,
) -> Result<(EmbeddingMatrix, EmbedDiagnostics), EmbeddingError> {
    if docs.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let dim = provider.dim();
    let mut diagnostics = EmbedDiagnostics::default();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for doc in docs {
        let mut sum = vec![0.0f64; dim];
        let mut hits = 0usize;
        for token in &doc.tokens {
            match provider.lookup(token) {
                Some(vector) => {
                    for (acc, v) in sum.iter_mut().zip(&vector) {
                        *acc += v;
                    }
                    hits += 1;
                }
                None => {
                    *diagnostics.oov_tokens.entry(token.clone()).or_insert(0) += 1;
                }
            }
        }
        if hits == 0 {
            diagnostics.dropped_docs.push(doc.source_id.clone());
            continue;
        }
        labels.push(doc.source_id.clone());
        data.extend(sum.into_iter().map(|v| v / hits as f64));
    }
    if labels.is_empty() {
        return Err(EmbeddingError::NoEmbeddableDocuments);
    }
    let matrix = EmbeddingMatrix {
        level: MatrixLevel::Sentence,
        labels,
        dim,
        data,
    };
    debug_assert!(matrix.data.iter().all(|v| v.is_finite()));
    Ok((matrix, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleaning::Origin;

    fn doc(id: &str, tokens: &[&str]) -> TokenSequence {
        TokenSequence {
            source_id: id.into(),
            origin: Origin::HumanComment,
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn toy_provider() -> TableProvider {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("data")
            .join("toy_vectors.txt");
        load_embedding_table(&path).unwrap()
    }

    fn table_from(text: &str) -> Result<TableProvider, EmbeddingError> {
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), text).unwrap();
        load_embedding_table(file.path())
    }

    #[test]
    fn loads_bundled_toy_table() {
        let provider = toy_provider();
        assert_eq!(provider.dim(), 8);
        assert_eq!(provider.len(), 20);
        assert!(provider.contains("amazing"));
        assert!(!provider.contains("nonexistentword"));
        let v = provider.lookup("amazing").unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], 0.881);
    }

    #[test]
    fn table_loader_rejects_bad_inputs() {
        assert!(matches!(
            table_from(""),
            Err(EmbeddingError::BadHeader { .. })
        ));
        assert!(matches!(
            table_from("not a header\n"),
            Err(EmbeddingError::BadHeader { .. })
        ));
        assert!(matches!(
            table_from("0 4\n"),
            Err(EmbeddingError::BadHeader { .. })
        ));
        assert!(matches!(
            table_from("1 2\nai 0.5\n"),
            Err(EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 2,
                actual: 1
            })
        ));
        assert!(matches!(
            table_from("1 2\nai 0.5 oops\n"),
            Err(EmbeddingError::MalformedValue { line: 2 })
        ));
        assert!(matches!(
            table_from("1 2\nai inf 0.5\n"),
            Err(EmbeddingError::NonFiniteValue { line: 2 })
        ));
        match table_from("2 2\nai 0.5 0.5\nai 1.0 1.0\n") {
            Err(EmbeddingError::DuplicateToken(token)) => assert_eq!(token, "ai"),
            other => panic!("expected DuplicateToken, got {other:?}"),
        }
        assert!(matches!(
            table_from("3 2\nai 0.5 0.5\nml 1.0 1.0\n"),
            Err(EmbeddingError::LineCountMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn hash_embedder_produces_deterministic_unit_vectors() {
        let provider = hash_embedder(16, 42).unwrap();
        let a = provider.lookup("privacy").unwrap();
        let b = provider.lookup("privacy").unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // Different tokens and different seeds give different vectors.
        assert_ne!(a, provider.lookup("privacyx").unwrap());
        let other_seed = hash_embedder(16, 43).unwrap();
        assert_ne!(a, other_seed.lookup("privacy").unwrap());
        assert!(matches!(hash_embedder(0, 1), Err(EmbeddingError::ZeroDim)));
    }

    #[test]
    fn word_matrix_is_sorted_unique_in_vocab_tokens() {
        let table = table_from("2 2\nai 1 0\nhype 0 1\n").unwrap();
        let docs = vec![
            doc("a", &["hype", "ai", "ai", "missing"]),
            doc("b", &["ai"]),
        ];
        let (matrix, diag) = embed_words(&docs, &table).unwrap();
        assert_eq!(matrix.level, MatrixLevel::Word);
        assert_eq!(matrix.labels, vec!["ai".to_owned(), "hype".to_owned()]);
        assert_eq!(matrix.row(0), &[1.0, 0.0]);
        assert_eq!(matrix.row(1), &[0.0, 1.0]);
        assert_eq!(diag.oov_tokens.get("missing"), Some(&1));
        assert!(diag.dropped_docs.is_empty());
    }

    #[test]
    fn sentence_pooling_weights_by_multiplicity() {
        let table = table_from("2 2\nai 1 0\nhype 0 1\n").unwrap();
        let docs = vec![doc("d1", &["ai", "hype", "ai"])];
        let (matrix, _) = embed_sentences(&docs, &table).unwrap();
        let row = matrix.row(0);
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((row[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sentence_level_drops_fully_oov_docs() {
        let table = table_from("1 2\nai 1 0\n").unwrap();
        let docs = vec![doc("keep", &["ai", "junk"]), doc("drop", &["junk", "more"])];
        let (matrix, diag) = embed_sentences(&docs, &table).unwrap();
        assert_eq!(matrix.labels, vec!["keep".to_owned()]);
        assert_eq!(matrix.row(0), &[1.0, 0.0]);
        assert_eq!(diag.dropped_docs, vec!["drop".to_owned()]);
        assert_eq!(diag.oov_tokens.get("junk"), Some(&2));
        assert_eq!(diag.oov_tokens.get("more"), Some(&1));
    }

    #[test]
    fn embedding_error_paths() {
        let table = table_from("1 2\nai 1 0\n").unwrap();
        assert!(matches!(
            embed_words(&[], &table),
            Err(EmbeddingError::EmptyInput)
        ));
        let oov_only = vec![doc("a", &["junk"])];
        assert!(matches!(
            embed_words(&oov_only, &table),
            Err(EmbeddingError::NoKnownTokens)
        ));
        assert!(matches!(
            embed_sentences(&oov_only, &table),
            Err(EmbeddingError::NoEmbeddableDocuments)
        ));
    }

    #[test]
    fn matrix_csv_round_trips_exactly() {
        let provider = hash_embedder(5, 7).unwrap();
        let docs = vec![doc("d1", &["alpha", "beta"]), doc("d2", &["gamma"])];
        let (matrix, _) = embed_sentences(&docs, &provider).unwrap();
        let mut buffer = Vec::new();
        matrix.write_csv(&mut buffer).unwrap();
        let back = EmbeddingMatrix::read_csv(buffer.as_slice(), MatrixLevel::Sentence).unwrap();
        assert_eq!(back, matrix);
    }

    #[test]
    fn matrix_csv_read_rejects_bad_inputs() {
        let read = |text: &str| EmbeddingMatrix::read_csv(text.as_bytes(), MatrixLevel::Word);
        assert!(matches!(read(""), Err(EmbeddingError::BadHeader { .. })));
        assert!(matches!(
            read("wrong,v0\na,1\n"),
            Err(EmbeddingError::BadHeader { .. })
        ));
        assert!(matches!(
            read("label,v0,v1\na,1\n"),
            Err(EmbeddingError::DimensionMismatch { line: 2, .. })
        ));
        assert!(matches!(
            read("label,v0\na,zap\n"),
            Err(EmbeddingError::MalformedValue { line: 2 })
        ));
        assert!(matches!(
            read("label,v0\na,NaN\n"),
            Err(EmbeddingError::NonFiniteValue { line: 2 })
        ));
        assert!(matches!(
            read("label,v0\n"),
            Err(EmbeddingError::EmptyMatrix)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hash_vectors_are_unit_and_finite(
                token in "[a-z]{2,12}",
                dim in 1usize..32,
                seed in 0u64..1000,
            ) {
                let provider = hash_embedder(dim, seed).unwrap();
                let v = provider.lookup(&token).unwrap();
                prop_assert_eq!(v.len(), dim);
                prop_assert!(v.iter().all(|x| x.is_finite()));
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }

            #[test]
            fn word_matrix_is_permutation_invariant(
                seed in 0u64..1000,
            ) {
                use rand::seq::SliceRandom;
                let provider = hash_embedder(4, 11).unwrap();
                let docs = vec![
                    doc("a", &["red", "green", "blue"]),
                    doc("b", &["green", "yellow"]),
                    doc("c", &["blue"]),
                ];
                let (matrix, _) = embed_words(&docs, &provider).unwrap();
                let mut shuffled = docs.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                shuffled.shuffle(&mut rng);
                let (matrix2, _) = embed_words(&shuffled, &provider).unwrap();
                prop_assert_eq!(matrix, matrix2);
            }
        }
    }
}
