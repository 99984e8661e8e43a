//! Text to dense vectors.
//!
//! Three providers produce row-aligned matrices: the built-in signed
//! character n-gram hashing embedder, a CSV embedding file for vectors
//! computed elsewhere, and an HTTP client for a sentence-embedding service.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ReferralDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::fnv1a64;

/// Record ids plus one vector per id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub record_ids: Vec<String>,
    pub vectors: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(record_ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if record_ids.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: record_ids.len(),
                actual: vectors.nrows(),
            });
        }
        if vectors.ncols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if let Some(pos) = vectors.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value in row {}",
                pos / vectors.ncols()
            )));
        }
        Ok(EmbeddingMatrix {
            record_ids,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.record_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.record_ids.is_empty()
    }

    /// Reorders rows to follow `ids`; every id must be present.
    pub fn aligned_to(&self, ids: &[String]) -> Result<EmbeddingMatrix> {
        let index: HashMap<&str, usize> = self
            .record_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no embedding for record {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingMatrix {
            record_ids: ids.to_vec(),
            vectors: self.vectors.select_rows(&rows),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Hyde,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Hyde => "hyde",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "hyde" => Ok(Variant::Hyde),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

/// Embedding matrix joined with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    pub matrix: EmbeddingMatrix,
    pub labels: Vec<u8>,
    pub variant: Variant,
}

impl EmbeddedDataset {
    pub fn new(matrix: EmbeddingMatrix, labels: Vec<u8>, variant: Variant) -> Result<Self> {
        if labels.len() != matrix.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.len(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(EmbeddedDataset {
            matrix,
            labels,
            variant,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.matrix.vectors
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashingEmbedderConfig {
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub lowercase: bool,
    pub signed: bool,
}

impl Default for HashingEmbedderConfig {
    fn default() -> Self {
        HashingEmbedderConfig {
            dim: 384,
            ngram_min: 3,
            ngram_max: 5,
            lowercase: true,
            signed: true,
        }
    }
}

impl HashingEmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max {
            return Err(Error::invalid(format!(
                "need 1 <= ngram_min <= ngram_max, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.dim < 2 {
            return Err(Error::invalid("hashing dimension must be at least 2"));
        }
        Ok(())
    }
}

/// Lowercases (optionally) and collapses whitespace runs to one space.
fn normalize(text: &str, lowercase: bool) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        if lowercase {
            out.extend(word.chars().flat_map(char::to_lowercase));
        } else {
            out.extend(word.chars());
        }
    }
    out
}

/// Character n-grams of the normalized text, shortest first. A text shorter
/// than `ngram_min` yields itself as its only gram.
pub fn char_ngrams(text: &str, config: &HashingEmbedderConfig) -> Vec<String> {
    let chars = normalize(text, config.lowercase);
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < config.ngram_min {
        return vec![chars.iter().collect()];
    }
    let mut grams = Vec::new();
    for n in config.ngram_min..=config.ngram_max.min(chars.len()) {
        grams.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    grams
}

fn hash_one(text: &str, config: &HashingEmbedderConfig, out: &mut [f64]) {
    let dim = config.dim as u64;
    let grams = char_ngrams(text, config);
    for g in &grams {
        let h = fnv1a64(g.as_bytes());
        let bucket = (h % dim) as usize;
        let sign = if config.signed && (h >> 63) == 1 {
            -1.0
        } else {
            1.0
        };
        out[bucket] += sign;
    }
    let mut norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 && !grams.is_empty() {
        // signed collisions cancelled everything out
        for g in &grams {
            out[(fnv1a64(g.as_bytes()) % dim) as usize] += 1.0;
        }
        norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Signed feature hashing over character n-grams, L2-normalized per row.
/// Empty (or whitespace-only) text maps to the zero vector.
pub fn embed_hashing<S: AsRef<str> + Sync>(
    texts: &[S],
    config: &HashingEmbedderConfig,
) -> Result<Matrix> {
    config.validate()?;
    let mut m = Matrix::zeros(texts.len(), config.dim);
    if texts.is_empty() {
        return Ok(m);
    }
    let rows: Vec<Vec<f64>> = texts
        .par_iter()
        .map(|t| {
            let mut row = vec![0.0; config.dim];
            hash_one(t.as_ref(), config, &mut row);
            row
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(row);
    }
    Ok(m)
}

/// Writes `record_id,d0,...,d{D-1}`. Values use the shortest decimal form
/// that parses back to the identical `f64`.
pub fn write_embedding_file(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "record_id").map_err(io)?;
    for d in 0..emb.dim() {
        write!(w, ",d{d}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (id, row) in emb.record_ids.iter().zip(emb.vectors.rows()) {
        if id.contains([',', '"', '\n', '\r']) {
            return Err(Error::invalid(format!(
                "record id `{id}` cannot be written to an embedding file"
            )));
        }
        write!(w, "{id}").map_err(io)?;
        for v in row {
            write!(w, ",{v:?}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::row(path, 1, "missing header")),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first().map(|c| c.trim()) != Some("record_id") || cols.len() < 2 {
        return Err(Error::row(
            path,
            1,
            "header must be record_id,d0,...,d{D-1}",
        ));
    }
    for (d, c) in cols[1..].iter().enumerate() {
        if c.trim() != format!("d{d}") {
            return Err(Error::row(
                path,
                1,
                format!("expected column d{d}, found `{c}`"),
            ));
        }
    }
    let dim = cols.len() - 1;

    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let row_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.trim_end().split(',');
        let id = cells.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::row(path, row_no, "empty record_id"));
        }
        let start = data.len();
        for cell in cells {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::row(path, row_no, format!("non-numeric value `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::row(
                    path,
                    row_no,
                    format!("non-finite value `{cell}`"),
                ));
            }
            data.push(v);
        }
        let got = data.len() - start;
        if got != dim {
            return Err(Error::row(
                path,
                row_no,
                format!("expected {dim} values, found {got}"),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::row(
                path,
                row_no,
                format!("duplicate record_id `{id}`"),
            ));
        }
        ids.push(id);
    }
    let n = ids.len();
    EmbeddingMatrix::new(ids, Matrix::from_vec(n, dim, data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "defaults::initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "defaults::timeout_secs")]
    pub timeout_secs: u64,
}

mod defaults {
    pub fn batch_size() -> usize {
        32
    }
    pub fn max_attempts() -> u32 {
        4
    }
    pub fn initial_backoff_ms() -> u64 {
        250
    }
    pub fn timeout_secs() -> u64 {
        120
    }
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            batch_size: defaults::batch_size(),
            max_attempts: defaults::max_attempts(),
            initial_backoff_ms: defaults::initial_backoff_ms(),
            timeout_secs: defaults::timeout_secs(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

fn post_batch(
    agent: &ureq::Agent,
    url: &str,
    texts: &[&str],
) -> std::result::Result<Vec<Vec<f64>>, String> {
    let body = serde_json::to_string(&EmbedRequest { texts }).map_err(|e| e.to_string())?;
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body.as_str())
        .map_err(|e| e.to_string())?;
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    let parsed: EmbedResponse = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(parsed.vectors)
}

/// POSTs `{"texts": [...]}` to `{endpoint}/embed` in batches and stacks the
/// returned vectors in request order. Transport failures and non-200
/// responses are retried with exponential backoff.
pub fn fetch_remote_embeddings<S: AsRef<str>>(
    config: &RemoteConfig,
    texts: &[S],
) -> Result<Matrix> {
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let url = format!("{}/embed", config.endpoint.trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
        .build()
        .into();

    let texts: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    for (b, batch) in texts.chunks(config.batch_size).enumerate() {
        let mut attempt = 0;
        let vectors = loop {
            attempt += 1;
            match post_batch(&agent, &url, batch) {
                Ok(v) => break v,
                Err(e) if attempt >= config.max_attempts.max(1) => {
                    return Err(Error::Remote(format!(
                        "batch {b} failed after {attempt} attempts: {e}"
                    )))
                }
                Err(_) => {
                    let wait = config.initial_backoff_ms << (attempt - 1).min(16);
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        };
        if vectors.len() != batch.len() {
            return Err(Error::Remote(format!(
                "batch {b}: sent {} texts, received {} vectors",
                batch.len(),
                vectors.len()
            )));
        }
        for v in vectors {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d || d == 0 {
                return Err(Error::Remote(format!(
                    "batch {b}: inconsistent dimensionality ({} vs {d})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Remote(format!("batch {b}: non-finite value")));
            }
            data.extend(v);
        }
    }
    Matrix::from_vec(texts.len(), dim.unwrap_or(0), data)
}

/// Where vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case")]
pub enum Provider {
    Hashing(HashingEmbedderConfig),
    File { path: std::path::PathBuf },
    Remote(RemoteConfig),
}

impl Default for Provider {
    fn default() -> Self {
        Provider::Hashing(HashingEmbedderConfig::default())
    }
}

/// Embeds a referral dataset with the given provider and attaches labels.
pub fn embed_dataset(
    dataset: &ReferralDataset,
    provider: &Provider,
    variant: Variant,
) -> Result<EmbeddedDataset> {
    let ids = dataset.ids();
    let matrix = match provider {
        Provider::Hashing(cfg) => EmbeddingMatrix::new(ids, embed_hashing(&dataset.texts(), cfg)?)?,
        Provider::Remote(cfg) => {
            EmbeddingMatrix::new(ids, fetch_remote_embeddings(cfg, &dataset.texts())?)?
        }
        Provider::File { path } => load_embedding_file(path)?.aligned_to(&ids)?,
    };
    EmbeddedDataset::new(matrix, dataset.labels(), variant)
}
