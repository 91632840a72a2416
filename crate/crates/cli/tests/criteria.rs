//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any failed.

#![allow(clippy::needless_range_loop)]

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use synprobe::eval::{evaluate_linear_baseline, evaluate_predictions, EvalOptions};
use synprobe::geometry::mean_principal_angle;
use synprobe::probe::{loss_and_gradient, predicted_distances, sentence_loss};
use synprobe::reduction::{conditional_probabilities, joint_probabilities, low_dim_affinities, pca, tsne, TsneParams};
use synprobe::stats::spearman;
use synprobe::synthetic::{random_heads, random_treebank};
use synprobe::{
    evaluate, load_conllu, mst_decode, synth_oracle_embeddings, train_probe, tree_distances,
    EmbeddingFile, ParsedSentence, TrainConfig, Treebank,
};

use common::{brute_force_mst, knn_purity, naive_spearman};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(k, k, rng).qr().q()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// Oracle data: path-indicator embeddings of random trees with 5..=30 tokens
// and 32 dimensions, 500 train / 100 dev / 100 test sentences.
fn oracle_split(count: usize, seed: u64, noise: f64) -> (Treebank, EmbeddingFile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tb = random_treebank("xx", count, 5, 30, &mut rng);
    let emb = synth_oracle_embeddings(&tb, 32, noise, seed ^ 0x5eed).unwrap();
    (tb, emb)
}

struct Oracle {
    train: (Treebank, EmbeddingFile),
    dev: (Treebank, EmbeddingFile),
    test: (Treebank, EmbeddingFile),
}

fn oracle(noise: f64) -> Oracle {
    Oracle {
        train: oracle_split(500, 11, noise),
        dev: oracle_split(100, 12, noise),
        test: oracle_split(100, 13, noise),
    }
}

fn train_and_score(data: &Oracle, rank: usize) -> (f64, f64) {
    let cfg = TrainConfig {
        rank,
        seed: 17,
        ..TrainConfig::default()
    };
    let (probe, _) = train_probe(
        &[(&data.train.0, &data.train.1)],
        &[(&data.dev.0, &data.dev.1)],
        &cfg,
    )
    .unwrap();
    let r = evaluate(&probe, &data.test.0, &data.test.1).unwrap();
    (r.uuas.unwrap(), r.dspr.unwrap())
}

/// DSpr of predictions that order every pair like the gold tree but break its
/// many ties at random. Informational: it bounds what a trained probe can get.
fn tie_broken_dspr(tb: &Treebank) -> f64 {
    evaluate_predictions(tb, &EvalOptions::default(), |i, s| {
        let mut rng = ChaCha8Rng::seed_from_u64(99 + i as u64);
        let n = s.len();
        let jitter = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 1e-6);
        let d = tree_distances(s);
        Ok(DMatrix::from_row_slice(n, n, &d.to_f64()) + &jitter + jitter.transpose())
    })
    .unwrap()
    .dspr
    .unwrap()
}

fn oracle_end_to_end() -> Verdict {
    let start = Instant::now();
    let data = oracle(0.0);
    let (uuas, dspr) = train_and_score(&data, 32);
    let t = start.elapsed();
    verdict(
        uuas >= 0.99 && dspr >= 0.99 && t < Duration::from_secs(300),
        format!(
            "uuas {uuas:.4} (>= 0.99), dspr {dspr:.4} (>= 0.99; tie-broken ceiling on this test set {:.4}), {:.1}s (< 300s)",
            tie_broken_dspr(&data.test.0),
            secs(t)
        ),
    )
}

fn noise_robustness() -> Verdict {
    let (uuas, _) = train_and_score(&oracle(0.05), 32);
    verdict(uuas >= 0.95, format!("uuas {uuas:.4} at noise 0.05 (>= 0.95)"))
}

fn rank_sweep() -> Verdict {
    let data = oracle(0.0);
    let u: Vec<f64> = [8, 16, 32].iter().map(|&k| train_and_score(&data, k).0).collect();
    let pass = u[0] <= u[1] && u[1] <= u[2] && (1.0 - u[2]).abs() <= 0.01;
    verdict(
        pass,
        format!("uuas k8 {:.4} <= k16 {:.4} <= k32 {:.4} (saturated within 0.01 of 1)", u[0], u[1], u[2]),
    )
}

fn mst_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let start = Instant::now();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        // Distinct weights: a shuffled ladder plus a small perturbation.
        let mut ladder: Vec<f64> = (0..n * (n - 1) / 2).map(|v| v as f64 + rng.random::<f64>() * 0.5).collect();
        ladder.shuffle(&mut rng);
        let mut w = vec![vec![0.0; n]; n];
        let mut next = ladder.into_iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = next.next().unwrap();
                w[i][j] = v;
                w[j][i] = v;
            }
        }
        let tree = mst_decode(&DMatrix::from_fn(n, n, |i, j| w[i][j])).unwrap();
        let edges: Vec<_> = tree.into_iter().collect();
        let weight: f64 = edges.iter().map(|&(a, b)| w[a][b]).sum();
        let (best_edges, best_weight) = brute_force_mst(&w);
        if edges != best_edges || weight != best_weight {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        mismatches == 0 && t < Duration::from_secs(10),
        format!("{mismatches} mismatches in 1000 graphs, {:.2}s (< 10s)", secs(t)),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..15);
        let (k, m) = (rng.random_range(1..8), rng.random_range(4..16));
        let s = ParsedSentence::from_heads("s", &random_heads(n, &mut rng)).unwrap();
        let gold = tree_distances(&s);
        let h = gaussian(n, m, &mut rng);
        let b = gaussian(k, m, &mut rng) * 0.5;
        let (_, grad) = loss_and_gradient(&b, &h, &gold).unwrap().unwrap();
        let residuals = |b: &DMatrix<f64>| {
            let p = predicted_distances(b, &h).unwrap();
            DMatrix::from_fn(n, n, |i, j| p[(i, j)] - f64::from(gold.get(i, j)))
        };
        let base = residuals(&b);
        for r in 0..k {
            for c in 0..m {
                let mut plus = b.clone();
                plus[(r, c)] += eps;
                let mut minus = b.clone();
                minus[(r, c)] -= eps;
                // A residual near zero, or one that changes sign across the
                // stencil, puts the difference quotient across a kink.
                let (rp, rm) = (residuals(&plus), residuals(&minus));
                let near_kink = (0..n).any(|i| {
                    (0..n).any(|j| {
                        i != j
                            && (base[(i, j)].abs() < 1e-8
                                || rp[(i, j)].signum() != rm[(i, j)].signum())
                    })
                });
                if near_kink {
                    skipped += 1;
                    continue;
                }
                let lp = sentence_loss(&plus, &h, &gold).unwrap().unwrap();
                let lm = sentence_loss(&minus, &h, &gold).unwrap().unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let scale = fd.abs().max(grad[(r, c)].abs()).max(1e-8);
                worst = worst.max((fd - grad[(r, c)]).abs() / scale);
                checked += 1;
            }
        }
    }
    verdict(
        worst < 1e-5,
        format!("max relative error {worst:.2e} over {checked} entries ({skipped} near kinks skipped)"),
    )
}

fn spearman_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    let mut disagreements = 0;
    for _ in 0..1000 {
        let n = rng.random_range(3..60);
        let levels = rng.random_range(2..10);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        // Inject ties into both vectors.
        for i in 0..n {
            if rng.random_bool(0.4) {
                x[i] = rng.random_range(0..levels) as f64;
            }
            if rng.random_bool(0.4) {
                y[i] = x[rng.random_range(0..n)];
            }
        }
        match (spearman(&x, &y), naive_spearman(&x, &y)) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => disagreements += 1,
        }
    }
    verdict(
        worst < 1e-12 && disagreements == 0,
        format!("max difference {worst:.2e} (< 1e-12), {disagreements} definedness disagreements"),
    )
}

fn principal_angles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (mut a, mut b, mut c): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let k = rng.random_range(1..8);
        let m = rng.random_range(2 * k..=2 * k + 10);
        let b1 = gaussian(k, m, &mut rng);
        // (a) same row space under an invertible mixing of the rows.
        let mut r = gaussian(k, k, &mut rng);
        while r.determinant().abs() < 1e-2 {
            r = gaussian(k, k, &mut rng);
        }
        a = a.max(mean_principal_angle(&b1, &(&r * &b1)).unwrap());
        // (b) supports on disjoint coordinate blocks, then a shared rotation.
        let q = orthogonal(m, &mut rng);
        let mut left = DMatrix::zeros(k, m);
        let mut right = DMatrix::zeros(k, m);
        left.view_mut((0, 0), (k, k)).copy_from(&gaussian(k, k, &mut rng));
        right.view_mut((0, k), (k, m - k)).copy_from(&gaussian(k, m - k, &mut rng));
        let theta = mean_principal_angle(&(left * &q), &(right * &q)).unwrap();
        b = b.max((theta - std::f64::consts::FRAC_PI_2).abs());
        // (c) symmetry.
        let b2 = gaussian(k, m, &mut rng);
        let d = mean_principal_angle(&b1, &b2).unwrap() - mean_principal_angle(&b2, &b1).unwrap();
        c = c.max(d.abs());
    }
    verdict(
        a < 1e-8 && b < 1e-8 && c < 1e-12,
        format!("(a) max mean angle {a:.2e} (< 1e-8); (b) max |mean - pi/2| {b:.2e} (< 1e-8); (c) max asymmetry {c:.2e} (< 1e-12)"),
    )
}

fn pca_recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (mut recon, mut var): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.random_range(20..80);
        let d = rng.random_range(3..20);
        let r = rng.random_range(1..d.min(n - 1));
        let offset = gaussian(1, d, &mut rng) * 3.0;
        let mut x = gaussian(n, r, &mut rng) * gaussian(r, d, &mut rng);
        for mut row in x.row_iter_mut() {
            row += &offset;
        }
        let p = pca(&x, r).unwrap();
        recon = recon.max((p.reconstruct() - &x).abs().max());
        let full = pca(&x, d.min(n - 1)).unwrap();
        let mean = x.row_mean();
        let total: f64 = x.row_iter().map(|row| (row - &mean).norm_squared()).sum::<f64>() / (n - 1) as f64;
        var = var.max((full.explained_variance.iter().sum::<f64>() - total).abs());
    }
    verdict(
        recon < 1e-8 && var < 1e-9,
        format!("max reconstruction error {recon:.2e} (< 1e-8), max variance-sum error {var:.2e} (< 1e-9)"),
    )
}

fn three_gaussians(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<usize>) {
    let dim = 10;
    let centers = gaussian(3, dim, rng) * 8.0;
    let labels: Vec<usize> = (0..300).map(|i| i / 100).collect();
    let x = DMatrix::from_fn(300, dim, |i, j| {
        let z: f64 = StandardNormal.sample(rng);
        centers[(labels[i], j)] + z
    });
    (x, labels)
}

fn tsne_criterion() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (x, labels) = three_gaussians(&mut rng);
    let start = Instant::now();

    // Entropy recomputed from the returned rows, not from the search state.
    let cond = conditional_probabilities(&x, 30.0).unwrap();
    let mut perp_err: f64 = 0.0;
    for i in 0..x.nrows() {
        let h: f64 = cond.p.row(i).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        perp_err = perp_err.max((h.exp() - 30.0).abs());
    }
    let p_err = (joint_probabilities(&x, 30.0).unwrap().sum() - 1.0).abs();

    let (proj, trace) = tsne(&x, &TsneParams::with_perplexity(30.0, 27)).unwrap();
    let (_, q) = low_dim_affinities(&proj.points);
    let q_err = trace
        .q_sum
        .iter()
        .chain(std::iter::once(&q.sum()))
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let purity = knn_purity(&proj.points, &labels, 10);
    let t = start.elapsed();
    verdict(
        perp_err < 1e-3 && p_err < 1e-9 && q_err < 1e-9 && purity >= 0.9 && t < Duration::from_secs(120),
        format!(
            "perplexity error {perp_err:.2e} (< 1e-3), |sum P - 1| {p_err:.2e}, max |sum Q - 1| {q_err:.2e} (< 1e-9), 10-NN purity {purity:.3} (>= 0.9), {:.1}s (< 120s)",
            secs(t)
        ),
    )
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_synprobe"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn transfer_run(threads: &str) -> Result<(tempfile::TempDir, Vec<PathBuf>), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    cli(d, &["synth", "--out", "o", "--lang", "aa,bb,cc", "--seed", "7",
        "--set", "synth.train=200", "--set", "synth.dev=50", "--set", "synth.test=50"])?;
    cli(d, &["transfer", "--manifest", "o/data/manifest.txt", "--out", "o", "--seed", "7",
        "--rank", "8,16", "--set", &format!("run.threads={threads}")])?;
    let mut tsv: Vec<PathBuf> = fs::read_dir(d.join("o/reports"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    tsv.sort();
    Ok((dir, tsv))
}

fn transfer_determinism() -> Verdict {
    let runs = transfer_run("1").and_then(|a| transfer_run("4").map(|b| (a, b)));
    let ((da, a), (db, b)) = match runs {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let names = |v: &[PathBuf], root: &Path| -> Vec<PathBuf> {
        v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    if names(&a, da.path()) != names(&b, db.path()) {
        return verdict(false, "report sets differ");
    }
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| fs::read(x).unwrap() != fs::read(y).unwrap())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let grids = a.iter().filter(|p| p.to_string_lossy().contains("transfer.")).count();
    verdict(
        differing.is_empty() && grids == 6,
        format!("{} TSV reports compared across 1 and 4 threads, {} differ", a.len(), differing.len()),
    )
}

fn linear_baseline() -> Verdict {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let expected = fs::read_to_string(root.join("fixture50.linear_uuas")).unwrap();
    let f: Vec<&str> = expected.trim().split('\t').collect();
    let (correct, scored): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
    let tb = load_conllu(root.join("fixture50.conllu"), "fx").unwrap();
    let r = evaluate_linear_baseline(&tb, &EvalOptions::default()).unwrap();
    let uuas = r.uuas.unwrap();
    let want: f64 = f[2].parse().unwrap();
    verdict(
        tb.len() == 50 && r.correct_edges == correct && r.scored_edges == scored && (uuas - want).abs() < 1e-12,
        format!("{}/{} = {uuas:.12} vs oracle {}/{} = {}", r.correct_edges, r.scored_edges, f[0], f[1], f[2]),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle end-to-end", oracle_end_to_end),
        ("noise robustness", noise_robustness),
        ("mst oracle", mst_oracle),
        ("gradient check", gradient_check),
        ("spearman oracle", spearman_oracle),
        ("principal angles", principal_angles),
        ("pca", pca_recovery),
        ("t-sne", tsne_criterion),
        ("transfer-grid determinism", transfer_determinism),
        ("linear-baseline exactness", linear_baseline),
        ("rank-sweep monotonicity", rank_sweep),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
