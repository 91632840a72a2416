//! Structural probe: a rank-constrained linear map `B` (k x m) under which
//! squared distances between word vectors approximate tree distances.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVectorView};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embstore::{require_aligned, EmbeddingFile};
use crate::error::{Error, Result};
use crate::treebank::{tree_distances, DistanceMatrix, Treebank};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPRB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Rank used for tree evaluation.
pub const DEFAULT_RANK: usize = 128;
/// Rank used for difference-vector analysis.
pub const DEFAULT_DIFF_RANK: usize = 32;
pub const DEFAULT_LAYER: u32 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams {
    /// `k x m`; rows span the syntactic subspace.
    pub b: DMatrix<f64>,
    pub layer: u32,
    /// Sorted, de-duplicated language codes the probe was trained on.
    pub train_langs: Vec<String>,
}

impl ProbeParams {
    pub fn new(b: DMatrix<f64>, layer: u32, train_langs: &[String]) -> Result<Self> {
        if b.nrows() > b.ncols() {
            return Err(Error::Dimension(format!(
                "probe rank {} exceeds embedding dim {}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite probe entry".into()));
        }
        let mut train_langs = train_langs.to_vec();
        train_langs.sort();
        train_langs.dedup();
        Ok(ProbeParams {
            b,
            layer,
            train_langs,
        })
    }

    pub fn rank(&self) -> usize {
        self.b.nrows()
    }

    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    /// Checkpoint-safe concatenation of the training languages.
    pub fn langs_label(&self) -> String {
        self.train_langs.join(",")
    }
}

/// `||B h_i - B h_j||^2`.
pub fn probe_sq_distance(p: &ProbeParams, h_i: &[f64], h_j: &[f64]) -> Result<f64> {
    let m = p.dim();
    if h_i.len() != m || h_j.len() != m {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {} for probe dim {m}",
            h_i.len(),
            h_j.len()
        )));
    }
    let diff = DVectorView::from_slice(h_i, m) - DVectorView::from_slice(h_j, m);
    Ok((&p.b * diff).norm_squared())
}

/// All pairwise squared probe distances of a sentence (`n x n`).
pub fn predicted_distances(b: &DMatrix<f64>, vectors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if vectors.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "embedding dim {} vs probe dim {}",
            vectors.ncols(),
            b.ncols()
        )));
    }
    let projected = vectors * b.transpose();
    Ok(pairwise_sq(&projected))
}

fn pairwise_sq(projected: &DMatrix<f64>) -> DMatrix<f64> {
    let n = projected.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for c in 0..projected.ncols() {
                let t = projected[(i, c)] - projected[(j, c)];
                acc += t * t;
            }
            d[(i, j)] = acc;
            d[(j, i)] = acc;
        }
    }
    d
}

fn check_sentence(b: &DMatrix<f64>, vectors: &DMatrix<f64>, gold: &DistanceMatrix) -> Result<()> {
    if vectors.nrows() != gold.n() {
        return Err(Error::Alignment(format!(
            "{} vectors for {} tokens",
            vectors.nrows(),
            gold.n()
        )));
    }
    if vectors.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "embedding dim {} vs probe dim {}",
            vectors.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// `1/n^2 * sum_{i,j} |d_T(i,j) - d_B(i,j)|` over ordered pairs.
/// Returns `None` for sentences with fewer than two tokens.
pub fn sentence_loss(
    b: &DMatrix<f64>,
    vectors: &DMatrix<f64>,
    gold: &DistanceMatrix,
) -> Result<Option<f64>> {
    check_sentence(b, vectors, gold)?;
    let n = gold.n();
    if n < 2 {
        return Ok(None);
    }
    let pred = predicted_distances(b, vectors)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += (f64::from(gold.get(i, j)) - pred[(i, j)]).abs();
        }
    }
    Ok(Some(total / (n * n) as f64))
}

/// Loss and its subgradient with respect to `B`; the subgradient of `|r|`
/// is taken as 0 where the residual is exactly 0.
///
/// With `s_ij = sign(d_B - d_T)` and `L = diag(S 1) - S`, the gradient is
/// `4/n^2 * (H B^T)^T L H`.
pub fn loss_and_gradient(
    b: &DMatrix<f64>,
    vectors: &DMatrix<f64>,
    gold: &DistanceMatrix,
) -> Result<Option<(f64, DMatrix<f64>)>> {
    check_sentence(b, vectors, gold)?;
    let n = gold.n();
    if n < 2 {
        return Ok(None);
    }
    let projected = vectors * b.transpose();
    let pred = pairwise_sq(&projected);
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = pred[(i, j)] - f64::from(gold.get(i, j));
            total += r.abs();
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            lap[(i, j)] = -s;
            row_sum += s;
        }
        lap[(i, i)] = row_sum;
    }
    let scale = 1.0 / (n * n) as f64;
    let grad = (projected.transpose() * lap * vectors) * (4.0 * scale);
    Ok(Some((total * scale, grad)))
}

pub fn loss_gradient(
    b: &DMatrix<f64>,
    vectors: &DMatrix<f64>,
    gold: &DistanceMatrix,
) -> Result<Option<DMatrix<f64>>> {
    Ok(loss_and_gradient(b, vectors, gold)?.map(|(_, g)| g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    pub layer: u32,
    pub learning_rate: f64,
    pub decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub max_train_len: usize,
    pub betas: (f64, f64),
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: DEFAULT_RANK,
            layer: DEFAULT_LAYER,
            learning_rate: 1e-3,
            decay: 0.1,
            patience: 3,
            max_epochs: 30,
            batch_size: 20,
            seed: 0,
            max_train_len: 100,
            betas: (0.9, 0.999),
            init_scale: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.rank == 0 {
            problems.push("rank must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            problems.push("learning rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            problems.push("decay must lie in (0, 1)");
        }
        if self.patience == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            problems.push("patience, max_epochs and batch_size must be positive");
        }
        if self.max_train_len < 2 {
            problems.push("max_train_len must be at least 2");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "epoch={} train_loss={:.9} dev_loss={:.9} lr={:e} improved={}",
                e.epoch, e.train_loss, e.dev_loss, e.learning_rate, e.improved
            );
        }
        let _ = writeln!(
            out,
            "best_epoch={} best_dev_loss={:.9} stopped_early={}",
            self.best_epoch, self.best_dev_loss, self.stopped_early
        );
        out
    }
}

/// A corpus split paired with its embeddings.
pub type Corpus<'a> = (&'a Treebank, &'a EmbeddingFile);

struct Item<'a> {
    vectors: &'a DMatrix<f64>,
    gold: DistanceMatrix,
}

fn collect_items<'a>(corpora: &[Corpus<'a>], max_len: usize) -> Result<Vec<Item<'a>>> {
    let mut items = Vec::new();
    for (tb, emb) in corpora {
        require_aligned(tb, emb)?;
        for (s, e) in tb.sentences.iter().zip(&emb.sentences) {
            if s.len() >= 2 && s.len() <= max_len {
                items.push(Item {
                    vectors: &e.vectors,
                    gold: tree_distances(s),
                });
            }
        }
    }
    Ok(items)
}

fn mean_loss(b: &DMatrix<f64>, items: &[Item<'_>]) -> Result<f64> {
    let losses: Vec<f64> = items
        .par_iter()
        .map(|it| sentence_loss(b, it.vectors, &it.gold).map(|l| l.unwrap_or(0.0)))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: i32,
}

impl Adam {
    fn new(shape: (usize, usize), lr: f64, betas: (f64, f64)) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut DMatrix<f64>, grad: &DMatrix<f64>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trains a probe on the concatenation of `train` corpora with Adam, decaying
/// the step size whenever the dev loss fails to improve and stopping after
/// `patience` non-improving epochs. Returns the best-dev-loss parameters.
/// With no usable dev sentences, selection falls back to the train loss.
pub fn train_probe(
    train: &[Corpus<'_>],
    dev: &[Corpus<'_>],
    cfg: &TrainConfig,
) -> Result<(ProbeParams, TrainLog)> {
    cfg.validate()?;
    let dim = train
        .iter()
        .chain(dev)
        .map(|(_, e)| e.dim)
        .try_fold(None, |acc: Option<usize>, d| match acc {
            Some(a) if a != d => Err(Error::Dimension(format!("mixed embedding dims {a} and {d}"))),
            _ => Ok(Some(d)),
        })?
        .ok_or_else(|| Error::Empty("no training corpora".into()))?;
    if cfg.rank > dim {
        return Err(Error::Dimension(format!(
            "rank {} exceeds embedding dim {dim}",
            cfg.rank
        )));
    }

    let train_items = collect_items(train, cfg.max_train_len)?;
    if train_items.is_empty() {
        return Err(Error::Empty(
            "no training sentences with at least two tokens".into(),
        ));
    }
    let dev_items = collect_items(dev, usize::MAX)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut b = DMatrix::from_fn(cfg.rank, dim, |_, _| {
        rng.random_range(-cfg.init_scale..=cfg.init_scale)
    });
    let mut adam = Adam::new((cfg.rank, dim), cfg.learning_rate, cfg.betas);

    let mut log = TrainLog {
        best_dev_loss: f64::INFINITY,
        ..TrainLog::default()
    };
    let mut best_b = b.clone();
    let mut bad_epochs = 0;
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let parts: Vec<(f64, DMatrix<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let it = &train_items[i];
                    loss_and_gradient(&b, it.vectors, &it.gold)
                        .map(|r| r.expect("training items have n >= 2"))
                })
                .collect::<Result<_>>()?;
            let mut grad = DMatrix::zeros(cfg.rank, dim);
            let mut loss = 0.0;
            for (l, g) in &parts {
                loss += l;
                grad += g;
            }
            let scale = 1.0 / batch.len() as f64;
            grad *= scale;
            if !(loss.is_finite() && grad.iter().all(|g| g.is_finite())) {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {epoch}, batch {batch_no} (loss {loss})"
                )));
            }
            epoch_loss += loss;
            adam.step(&mut b, &grad);
        }
        let train_loss = epoch_loss / train_items.len() as f64;
        let dev_loss = if dev_items.is_empty() {
            mean_loss(&b, &train_items)?
        } else {
            mean_loss(&b, &dev_items)?
        };
        if !dev_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite dev loss at epoch {epoch}")));
        }

        let improved = dev_loss < log.best_dev_loss;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            learning_rate: adam.lr,
            improved,
        });
        if improved {
            log.best_dev_loss = dev_loss;
            log.best_epoch = epoch;
            best_b.copy_from(&b);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            adam.lr *= cfg.decay;
            if bad_epochs >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    let mut langs: Vec<String> = train.iter().map(|(t, _)| t.language.clone()).collect();
    langs.sort();
    langs.dedup();
    Ok((ProbeParams::new(best_b, cfg.layer, &langs)?, log))
}

pub fn probe_to_bytes(p: &ProbeParams) -> Vec<u8> {
    let langs = p.langs_label();
    let mut out = Vec::with_capacity(24 + langs.len() + 8 * p.b.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        p.rank() as u32,
        p.dim() as u32,
        p.layer,
        langs.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(langs.as_bytes());
    for i in 0..p.rank() {
        for j in 0..p.dim() {
            out.extend_from_slice(&p.b[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn probe_from_bytes(bytes: &[u8]) -> Result<ProbeParams> {
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
            .ok_or_else(|| Error::Truncated("probe header".into()))
    };
    if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Format("bad probe magic".into()));
    }
    let version = u32_at(4)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported probe version {version}")));
    }
    let k = u32_at(8)? as usize;
    let m = u32_at(12)? as usize;
    let layer = u32_at(16)?;
    let langs_len = u32_at(20)? as usize;
    if k > m {
        return Err(Error::Dimension(format!("probe rank {k} exceeds dim {m}")));
    }
    let langs = bytes
        .get(24..24 + langs_len)
        .ok_or_else(|| Error::Truncated("probe languages".into()))?;
    let langs = std::str::from_utf8(langs).map_err(|_| Error::Format("languages not UTF-8".into()))?;
    let body = &bytes[24 + langs_len..];
    if body.len() != 8 * k * m {
        return Err(Error::Truncated(format!(
            "expected {} payload bytes, found {}",
            8 * k * m,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let langs: Vec<String> = langs
        .split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    ProbeParams::new(DMatrix::from_row_slice(k, m, &values), layer, &langs)
}

pub fn save_probe(p: &ProbeParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, probe_to_bytes(p)).map_err(|e| Error::io(path, e))
}

pub fn load_probe(path: impl AsRef<Path>) -> Result<ProbeParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    probe_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::synth_oracle_embeddings;
    use crate::synthetic::random_treebank;
    use crate::treebank::ParsedSentence;

    fn probe(b: DMatrix<f64>) -> ProbeParams {
        ProbeParams::new(b, 7, &["en".to_string()]).unwrap()
    }

    #[test]
    fn pythagorean_distance() {
        let p = probe(DMatrix::identity(2, 2));
        assert_eq!(probe_sq_distance(&p, &[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        let z = probe(DMatrix::zeros(2, 2));
        assert_eq!(probe_sq_distance(&z, &[3.0, 4.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert!(probe_sq_distance(&p, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_probe_on_chain_loss() {
        let s = ParsedSentence::from_heads("c", &[0, 1, 2]).unwrap();
        let d = tree_distances(&s);
        let v = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let b = DMatrix::zeros(2, 4);
        let loss = sentence_loss(&b, &v, &d).unwrap().unwrap();
        assert!((loss - 8.0 / 9.0).abs() < 1e-15);
        let g = loss_gradient(&b, &v, &d).unwrap().unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_token_is_skipped() {
        let s = ParsedSentence::from_heads("one", &[0]).unwrap();
        let d = tree_distances(&s);
        let v = DMatrix::zeros(1, 3);
        assert_eq!(sentence_loss(&DMatrix::zeros(2, 3), &v, &d).unwrap(), None);
    }

    #[test]
    fn oracle_support_basis_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tb = random_treebank("xx", 20, 2, 9, &mut rng);
        let emb = synth_oracle_embeddings(&tb, 8, 0.0, 0).unwrap();
        let b = DMatrix::identity(8, 8);
        for (s, e) in tb.sentences.iter().zip(&emb.sentences) {
            let l = sentence_loss(&b, &e.vectors, &tree_distances(s)).unwrap().unwrap();
            assert_eq!(l, 0.0);
            let neg = sentence_loss(&(-&b), &e.vectors, &tree_distances(s)).unwrap().unwrap();
            assert_eq!(neg, 0.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = DMatrix::from_fn(3, 5, |_, _| rng.random::<f64>() - 0.5);
        let p = ProbeParams::new(b, 4, &["fr".into(), "de".into(), "fr".into()]).unwrap();
        assert_eq!(p.train_langs, vec!["de", "fr"]);
        let bytes = probe_to_bytes(&p);
        assert_eq!(probe_from_bytes(&bytes).unwrap(), p);

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(probe_from_bytes(&bad), Err(Error::Format(_))));
        // k = 6 > m = 5
        let mut bad = bytes.clone();
        bad[8] = 6;
        assert!(matches!(probe_from_bytes(&bad), Err(Error::Dimension(_))));
        assert!(probe_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rank_above_dim_rejected() {
        assert!(ProbeParams::new(DMatrix::zeros(4, 3), 7, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let cfg = TrainConfig {
            decay: 1.5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_training_data_is_an_error() {
        let tb = Treebank {
            language: "xx".into(),
            sentences: vec![ParsedSentence::from_heads("a", &[0]).unwrap()],
        };
        let emb = synth_oracle_embeddings(&tb, 2, 0.0, 0).unwrap();
        let cfg = TrainConfig {
            rank: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_probe(&[(&tb, &emb)], &[], &cfg),
            Err(Error::Empty(_))
        ));
    }
}
