//! EMB1 embedding files and synthetic oracle embeddings.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EMB1" | u32 version=1 | u32 dim | u32 dtype (0=f32, 1=f64) | u32 sentence_count
//!        | u32 meta_len | meta_len bytes of `key=value` lines
//!        | records: u32 ordinal | u32 n | n*dim values, row-major
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::treebank::Treebank;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const MAX_LAYER: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Word vectors for one sentence; row `i` is the vector of token `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSentence {
    pub ordinal: usize,
    pub vectors: DMatrix<f64>,
}

impl EmbeddedSentence {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub language: String,
    pub model_tag: String,
    pub layer: u32,
    pub dim: usize,
    pub dtype: Dtype,
    /// Metadata beyond the three required keys, in file order.
    pub extra_meta: Vec<(String, String)>,
    pub sentences: Vec<EmbeddedSentence>,
}

impl EmbeddingFile {
    pub fn new(language: &str, model_tag: &str, layer: u32, dim: usize, dtype: Dtype) -> Self {
        EmbeddingFile {
            language: language.to_string(),
            model_tag: model_tag.to_string(),
            layer,
            dim,
            dtype,
            extra_meta: Vec::new(),
            sentences: Vec::new(),
        }
    }

    fn metadata(&self) -> String {
        let mut meta = format!(
            "language={}\nmodel_tag={}\nlayer={}\n",
            self.language, self.model_tag, self.layer
        );
        for (k, v) in &self.extra_meta {
            meta.push_str(&format!("{k}={v}\n"));
        }
        meta
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = self.metadata();
        let width = self.dtype.width();
        let body: usize = self
            .sentences
            .iter()
            .map(|s| 8 + s.len() * self.dim * width)
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + body);
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            u32_of(self.dim, "dim")?,
            self.dtype.code(),
            u32_of(self.sentences.len(), "sentence count")?,
            u32_of(meta.len(), "metadata length")?,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(meta.as_bytes());
        for s in &self.sentences {
            if s.vectors.ncols() != self.dim {
                return Err(Error::Dimension(format!(
                    "sentence {} has dim {}, file dim {}",
                    s.ordinal,
                    s.vectors.ncols(),
                    self.dim
                )));
            }
            out.extend_from_slice(&u32_of(s.ordinal, "ordinal")?.to_le_bytes());
            out.extend_from_slice(&u32_of(s.len(), "token count")?.to_le_bytes());
            for i in 0..s.len() {
                for j in 0..self.dim {
                    let v = s.vectors[(i, j)];
                    match self.dtype {
                        Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                        Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = cur.u32()? as usize;
        let dtype = match cur.u32()? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        };
        let count = cur.u32()? as usize;
        let meta_len = cur.u32()? as usize;
        let meta = std::str::from_utf8(cur.take(meta_len)?)
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;

        let (mut language, mut model_tag, mut layer) = (None, None, None);
        let mut extra_meta = Vec::new();
        for line in meta.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))?;
            match k {
                "language" => language = Some(v.to_string()),
                "model_tag" => model_tag = Some(v.to_string()),
                "layer" => {
                    layer = Some(
                        v.parse::<u32>()
                            .map_err(|_| Error::Format(format!("bad layer {v:?}")))?,
                    )
                }
                _ => extra_meta.push((k.to_string(), v.to_string())),
            }
        }
        let missing = |k: &str| Error::Format(format!("metadata key {k} missing"));
        let layer = layer.ok_or_else(|| missing("layer"))?;
        if layer > MAX_LAYER {
            return Err(Error::Format(format!("layer {layer} outside 0..={MAX_LAYER}")));
        }
        if dim == 0 {
            return Err(Error::Format("dim must be positive".into()));
        }

        let mut sentences = Vec::with_capacity(count);
        for expected in 0..count {
            let ordinal = cur.u32().map_err(|_| truncated(expected, count))? as usize;
            if ordinal != expected {
                return Err(Error::Format(format!(
                    "record {expected} carries ordinal {ordinal}"
                )));
            }
            let n = cur.u32().map_err(|_| truncated(expected, count))? as usize;
            let raw = cur
                .take(n * dim * dtype.width())
                .map_err(|_| truncated(expected, count))?;
            let values: Vec<f64> = match dtype {
                Dtype::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                Dtype::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { ordinal });
            }
            sentences.push(EmbeddedSentence {
                ordinal,
                vectors: DMatrix::from_row_slice(n, dim, &values),
            });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Truncated(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - cur.pos
            )));
        }

        Ok(EmbeddingFile {
            language: language.ok_or_else(|| missing("language"))?,
            model_tag: model_tag.ok_or_else(|| missing("model_tag"))?,
            layer,
            dim,
            dtype,
            extra_meta,
            sentences,
        })
    }
}

fn truncated(record: usize, count: usize) -> Error {
    Error::Truncated(format!("record {record} of {count} incomplete"))
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("need {len} bytes at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_emb(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingFile::from_bytes(&bytes)
}

pub fn write_emb(file: &EmbeddingFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = file.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Path-indicator embeddings: coordinate `c` stands for one tree edge and
/// `h_i` marks every edge on the path from the root to token `i`, so that
/// `||h_i - h_j||^2` equals the tree distance when `noise_sigma` is 0.
pub fn synth_oracle_embeddings(
    treebank: &Treebank,
    pad_dim: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<EmbeddingFile> {
    let needed = treebank
        .sentences
        .iter()
        .map(|s| s.len().saturating_sub(1))
        .max()
        .unwrap_or(0);
    if pad_dim < needed.max(1) {
        return Err(Error::Dimension(format!(
            "pad_dim {pad_dim} < {needed} edges of the longest sentence"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut file = EmbeddingFile::new(&treebank.language, "oracle", 7, pad_dim, Dtype::F64);
    file.extra_meta
        .push(("noise_sigma".to_string(), noise_sigma.to_string()));
    for (ordinal, s) in treebank.sentences.iter().enumerate() {
        let n = s.len();
        let heads = s.heads();
        // Edge coordinate of each non-root token, in token order.
        let mut coord = vec![usize::MAX; n];
        let mut next = 0;
        for (p, &h) in heads.iter().enumerate() {
            if h != 0 {
                coord[p] = next;
                next += 1;
            }
        }
        let mut vectors = DMatrix::<f64>::zeros(n, pad_dim);
        for p in 0..n {
            let mut cur = p;
            while heads[cur] != 0 {
                vectors[(p, coord[cur])] = 1.0;
                cur = heads[cur] - 1;
            }
        }
        if noise_sigma > 0.0 {
            for i in 0..n {
                for j in 0..pad_dim {
                    vectors[(i, j)] += noise.sample(&mut rng);
                }
            }
        }
        file.sentences.push(EmbeddedSentence { ordinal, vectors });
    }
    Ok(file)
}

/// Result of comparing per-ordinal token counts of a treebank and embeddings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignReport {
    pub treebank_sentences: usize,
    pub embedding_sentences: usize,
    /// `(ordinal, treebank tokens, embedded tokens)`, first 10 only.
    pub mismatches: Vec<(usize, usize, usize)>,
    pub mismatch_count: usize,
}

impl AlignReport {
    pub fn is_ok(&self) -> bool {
        self.treebank_sentences == self.embedding_sentences && self.mismatch_count == 0
    }
}

impl fmt::Display for AlignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok ({} sentences)", self.treebank_sentences);
        }
        write!(
            f,
            "{} treebank vs {} embedded sentences; {} token-count mismatches",
            self.treebank_sentences, self.embedding_sentences, self.mismatch_count
        )?;
        for (o, a, b) in &self.mismatches {
            write!(f, "; #{o}: {a} vs {b}")?;
        }
        Ok(())
    }
}

pub fn align_check(treebank: &Treebank, emb: &EmbeddingFile) -> AlignReport {
    let mut mismatches = Vec::new();
    let mut mismatch_count = 0;
    for (ordinal, (s, e)) in treebank.sentences.iter().zip(&emb.sentences).enumerate() {
        if s.len() != e.len() {
            mismatch_count += 1;
            if mismatches.len() < 10 {
                mismatches.push((ordinal, s.len(), e.len()));
            }
        }
    }
    AlignReport {
        treebank_sentences: treebank.len(),
        embedding_sentences: emb.sentences.len(),
        mismatches,
        mismatch_count,
    }
}

/// Like [`align_check`], but turns a mismatch into an error.
pub fn require_aligned(treebank: &Treebank, emb: &EmbeddingFile) -> Result<()> {
    let report = align_check(treebank, emb);
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{} ({}): {report}",
            treebank.language, emb.language
        )))
    }
}
