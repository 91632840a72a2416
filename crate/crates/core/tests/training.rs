use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synprobe::eval::{evaluate_predictions, EvalOptions};
use synprobe::probe::sentence_loss;
use synprobe::synthetic::random_treebank;
use synprobe::{
    evaluate, load_probe, save_probe, synth_oracle_embeddings, train_probe, tree_distances,
    EmbeddingFile, TrainConfig, Treebank,
};

fn oracle_split(count: usize, tree_seed: u64, noise: f64, emb_seed: u64) -> (Treebank, EmbeddingFile) {
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
    let tb = random_treebank("xx", count, 5, 30, &mut rng);
    let emb = synth_oracle_embeddings(&tb, 32, noise, emb_seed).unwrap();
    (tb, emb)
}

/// Highest DSpr reachable by predictions that order distances like the gold
/// tree but break its ties (any non-exact probe does).
fn tie_broken_ceiling(tb: &Treebank) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let jitter: Vec<DMatrix<f64>> = tb
        .sentences
        .iter()
        .map(|s| {
            let n = s.len();
            let mut m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 1e-6);
            m = &m + m.transpose();
            m
        })
        .collect();
    evaluate_predictions(tb, &EvalOptions::default(), |i, s| {
        let d = tree_distances(s);
        Ok(DMatrix::from_row_slice(s.len(), s.len(), &d.to_f64()) + &jitter[i])
    })
    .unwrap()
    .dspr
    .unwrap()
}

#[test]
fn oracle_training_recovers_trees() {
    let (train, e_train) = oracle_split(500, 1, 0.0, 1);
    let (dev, e_dev) = oracle_split(100, 2, 0.0, 2);
    let (test, e_test) = oracle_split(100, 3, 0.0, 3);
    let cfg = TrainConfig {
        rank: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let (probe, log) = train_probe(&[(&train, &e_train)], &[(&dev, &e_dev)], &cfg).unwrap();

    // Checkpoint selection keeps the best dev loss seen.
    let best = log
        .epochs
        .iter()
        .map(|e| e.dev_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, log.best_dev_loss);

    let report = evaluate(&probe, &test, &e_test).unwrap();
    assert!(report.uuas.unwrap() >= 0.99, "{}", report.to_text());
    let ceiling = tie_broken_ceiling(&test);
    assert!(ceiling < 0.99);
    assert!(
        report.dspr.unwrap() >= ceiling - 0.005,
        "dspr {} vs tie-broken ceiling {ceiling}",
        report.dspr.unwrap()
    );

    // Reloaded probe reproduces the dev loss.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.sprb");
    save_probe(&probe, &path).unwrap();
    let loaded = load_probe(&path).unwrap();
    let mean = |b: &DMatrix<f64>| {
        dev.sentences
            .iter()
            .zip(&e_dev.sentences)
            .map(|(s, e)| sentence_loss(b, &e.vectors, &tree_distances(s)).unwrap().unwrap())
            .sum::<f64>()
            / dev.len() as f64
    };
    assert!((mean(&loaded.b) - log.best_dev_loss).abs() < 1e-12);
}

#[test]
fn training_is_deterministic_and_corpus_agnostic() {
    let (a, ea) = oracle_split(60, 10, 0.0, 1);
    let (mut b, mut eb) = oracle_split(60, 11, 0.0, 2);
    b.language = "yy".into();
    eb.language = "yy".into();
    let (dev, e_dev) = oracle_split(20, 12, 0.0, 3);
    let cfg = TrainConfig {
        rank: 16,
        seed: 3,
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let corpora = [(&a, &ea), (&b, &eb)];
    let (p1, l1) = train_probe(&corpora, &[(&dev, &e_dev)], &cfg).unwrap();
    let (p2, l2) = train_probe(&corpora, &[(&dev, &e_dev)], &cfg).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(l1, l2);
    assert_eq!(p1.train_langs, vec!["xx", "yy"]);
    assert!(l1.epochs.last().unwrap().dev_loss < l1.epochs[0].dev_loss);
}
