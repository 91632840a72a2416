//! One function per subcommand. Grid cells (languages, layers, ranks) run as
//! independent rayon jobs; their outputs are collected and written in a fixed
//! order so reruns produce identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use synprobe::embstore::require_aligned;
use synprobe::eval::{
    evaluate_linear_baseline, evaluate_with, extrapolation_uuas, AdjectiveOrder, EvalOptions,
    EvalReport,
};
use synprobe::geometry::ordering_correlation_tsv;
use synprobe::probe::{probe_from_bytes, probe_to_bytes};
use synprobe::reduction::{
    cluster_summary, diff_vectors, points_tsv, read_points_tsv, read_vectors_tsv, relation_counts,
    render_svg, top_relations, tsne, vectors_tsv, DiffFilter, DiffVector, LabelFilter,
    PointRecord, TsneParams,
};
use synprobe::synthetic::random_treebank;
use synprobe::treebank::to_conllu;
use synprobe::{
    mean_angle_matrix, ordering_correlation, synth_oracle_embeddings, train_probe, transfer_grid,
    EmbeddingFile, Metric, ProbeParams, Split, TrainConfig, TrainLog, TransferInputs,
    TransferMatrix, Treebank,
};

use crate::artifacts::{Artifacts, PLOTS, POINTS, PROBES, REPORTS};
use crate::config::{ExperimentConfig, Mode, ReduceMethod};
use crate::error::{CliError, CliResult};
use crate::seeds::derive_seed;

/// What a finished run produced.
#[derive(Debug)]
pub struct Outcome {
    pub run_manifest: PathBuf,
    pub messages: Vec<String>,
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(vec![format!("run.threads: {e}")]))?;
    pool.install(|| {
        let mut art = Artifacts::new(&cfg.out, cfg.header());
        let mut messages = Vec::new();
        let status = match cfg.mode {
            Mode::Synth => synth(cfg, &mut art, &mut messages),
            Mode::Train => train(cfg, &mut art, &mut messages),
            Mode::Eval => eval(cfg, &mut art, &mut messages),
            Mode::Transfer => transfer(cfg, &mut art, &mut messages),
            Mode::Angles => angles(cfg, &mut art, &mut messages),
            Mode::Diffvec => diffvec(cfg, &mut art, &mut messages),
            Mode::Reduce => reduce(cfg, &mut art, &mut messages),
            Mode::Plot => plot(cfg, &mut art, &mut messages),
            Mode::Extrapolate => extrapolate(cfg, &mut art, &mut messages),
        };
        // The manifest is written even when a grid ends in total failure, so
        // whatever was produced stays discoverable.
        let run_manifest = if status.is_ok() || !art.records().is_empty() {
            Some(art.finish(cfg.mode.as_str())?)
        } else {
            None
        };
        status?;
        Ok(Outcome {
            run_manifest: run_manifest.expect("written on success"),
            messages,
        })
    })
}

fn label(langs: &[String]) -> String {
    langs.join("+")
}

fn probe_name(label: &str, layer: u32, rank: usize) -> String {
    format!("{label}.L{layer}.k{rank}")
}

fn probe_rel(name: &str) -> String {
    format!("{PROBES}/{name}.sprb")
}

fn seed_line(component: &str, seed: u64) -> String {
    format!("seed {component} = {seed}")
}

fn eval_options(cfg: &ExperimentConfig) -> EvalOptions {
    EvalOptions {
        dspr_mode: cfg.dspr_mode,
        ..EvalOptions::default()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn train_config(cfg: &ExperimentConfig, layer: u32, rank: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        rank,
        layer,
        learning_rate: cfg.train.learning_rate,
        decay: cfg.train.decay,
        patience: cfg.train.patience,
        max_epochs: cfg.train.max_epochs,
        batch_size: cfg.train.batch_size,
        seed,
        max_train_len: cfg.train.max_len,
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------- data ---

type EmbKey = (String, Split, u32);

/// Treebanks and embeddings loaded once per run.
#[derive(Default)]
struct Store {
    treebanks: BTreeMap<(String, Split), Treebank>,
    embeddings: BTreeMap<EmbKey, EmbeddingFile>,
    /// Random-baseline embeddings.
    rand: BTreeMap<EmbKey, EmbeddingFile>,
}

impl Store {
    fn tb(&self, lang: &str, split: Split) -> &Treebank {
        &self.treebanks[&(lang.to_string(), split)]
    }

    fn emb(&self, lang: &str, split: Split, layer: u32) -> &EmbeddingFile {
        &self.embeddings[&(lang.to_string(), split, layer)]
    }
}

#[derive(Default)]
struct Needs {
    emb: BTreeSet<EmbKey>,
    rand: BTreeSet<EmbKey>,
}

impl Needs {
    fn add(&mut self, langs: &[String], splits: &[Split], layers: &[u32]) {
        for l in langs {
            for &s in splits {
                for &layer in layers {
                    self.emb.insert((l.clone(), s, layer));
                }
            }
        }
    }
}

/// Checks that every needed file exists (naming each missing one), then
/// loads everything in parallel and checks alignment.
fn load(cfg: &ExperimentConfig, needs: &Needs) -> CliResult<Store> {
    let m = cfg.manifest();
    let tb_keys: BTreeSet<(String, Split)> = needs
        .emb
        .iter()
        .chain(&needs.rand)
        .map(|(l, s, _)| (l.clone(), *s))
        .collect();
    let mut missing = Vec::new();
    let mut tb_paths = Vec::new();
    for (lang, split) in &tb_keys {
        match m.conllu_path(lang, *split) {
            Ok(p) if p.is_file() => tb_paths.push(((lang.clone(), *split), p)),
            Ok(p) => missing.push(format!("treebank for {lang} ({split}): {}", p.display())),
            Err(e) => missing.push(format!("treebank for {lang} ({split}): {e}")),
        }
    }
    let mut emb_paths = Vec::new();
    for (rand, keys) in [(false, &needs.emb), (true, &needs.rand)] {
        for (lang, split, layer) in keys {
            let what = if rand { "random-baseline embeddings" } else { "embeddings" };
            let path = if rand {
                m.rand_emb_path(lang, *split, *layer)
                    .and_then(|p| p.ok_or_else(|| synprobe::Error::InvalidArgument("not listed in the manifest".into())))
            } else {
                m.emb_path(lang, *split, *layer)
            };
            match path {
                Ok(p) if p.is_file() => emb_paths.push((rand, (lang.clone(), *split, *layer), p)),
                Ok(p) => missing.push(format!(
                    "{what} for {lang} layer {layer} ({split}): {}",
                    p.display()
                )),
                Err(e) => missing.push(format!("{what} for {lang} layer {layer} ({split}): {e}")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing input files:\n  {}", missing.join("\n  "))));
    }

    let treebanks: Vec<_> = tb_paths
        .par_iter()
        .map(|((lang, split), p)| {
            synprobe::load_conllu(p, lang).map(|tb| ((lang.clone(), *split), tb))
        })
        .collect::<synprobe::Result<_>>()?;
    let embeddings: Vec<_> = emb_paths
        .par_iter()
        .map(|(rand, key, p)| synprobe::read_emb(p).map(|e| (*rand, key.clone(), e)))
        .collect::<synprobe::Result<_>>()?;
    let mut store = Store {
        treebanks: treebanks.into_iter().collect(),
        ..Store::default()
    };
    for (rand, key, emb) in embeddings {
        let tb = &store.treebanks[&(key.0.clone(), key.1)];
        require_aligned(tb, &emb).map_err(|e| {
            CliError::Data(format!("{} layer {} ({}): {e}", key.0, key.2, key.1))
        })?;
        if rand {
            store.rand.insert(key, emb);
        } else {
            store.embeddings.insert(key, emb);
        }
    }
    Ok(store)
}

/// Rank must not exceed the embedding dimension of any file it is used with.
fn check_ranks(cfg: &ExperimentConfig, store: &Store) -> CliResult<()> {
    let mut problems = Vec::new();
    for ((lang, split, layer), e) in store.embeddings.iter().chain(&store.rand) {
        for &k in &cfg.ranks {
            if k > e.dim {
                problems.push(format!(
                    "probe.rank {k} exceeds embedding dim {} ({lang} layer {layer}, {split})",
                    e.dim
                ));
            }
        }
    }
    problems.dedup();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(problems))
    }
}

fn train_on(
    cfg: &ExperimentConfig,
    store: &Store,
    langs: &[String],
    layer: u32,
    rank: usize,
    rand: bool,
    seed: u64,
) -> synprobe::Result<(ProbeParams, TrainLog)> {
    let embs = if rand { &store.rand } else { &store.embeddings };
    let corpus = |split: Split| -> Vec<(&Treebank, &EmbeddingFile)> {
        langs
            .iter()
            .map(|l| (store.tb(l, split), &embs[&(l.clone(), split, layer)]))
            .collect()
    };
    train_probe(&corpus(Split::Train), &corpus(Split::Dev), &train_config(cfg, layer, rank, seed))
}

fn load_probe_file(path: &Path) -> CliResult<ProbeParams> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read probe {}: {e}", path.display())))?;
    probe_from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads every probe in `paths`, naming all missing ones at once.
fn load_probes(paths: &[(String, PathBuf)]) -> CliResult<BTreeMap<String, ProbeParams>> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(n, p)| format!("probe {n}: {}", p.display()))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing probes (run `train` first):\n  {}",
            missing.join("\n  ")
        )));
    }
    paths
        .iter()
        .map(|(n, p)| Ok((n.clone(), load_probe_file(p)?)))
        .collect()
}

// --------------------------------------------------------------- synth ---

fn synth(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let s = &cfg.synth;
    let mut manifest = String::new();
    let mut seeds = Vec::new();
    let mut summary = String::from("language\tsplit\tsentences\ttokens\n");
    for lang in &cfg.languages {
        for (split, count) in [(Split::Train, s.train), (Split::Dev, s.dev), (Split::Test, s.test)] {
            let tree_key = format!("synth/trees/{lang}/{split}");
            let emb_key = format!("synth/emb/{lang}/{split}");
            let tree_seed = derive_seed(cfg.seed, &tree_key);
            let emb_seed = derive_seed(cfg.seed, &emb_key);
            seeds.push(seed_line(&tree_key, tree_seed));
            seeds.push(seed_line(&emb_key, emb_seed));
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let tb = random_treebank(lang, count, s.min_len, s.max_len, &mut rng);
            art.write(&format!("data/{lang}.{split}.conllu"), to_conllu(&tb).as_bytes())?;
            let mut emb = synth_oracle_embeddings(&tb, s.pad_dim, s.noise, emb_seed)?;
            for &layer in &cfg.layers {
                emb.layer = layer;
                art.write(&format!("data/{lang}.{split}.L{layer}.emb"), &emb.to_bytes()?)?;
            }
            let tokens: usize = tb.sentences.iter().map(|s| s.len()).sum();
            let _ = writeln!(summary, "{lang}\t{split}\t{}\t{tokens}", tb.len());
            let _ = writeln!(manifest, "{lang}.{split} = {lang}.{split}.conllu");
            let _ = writeln!(manifest, "{lang}.{split}.emb = {lang}.{split}.L{{layer}}.emb");
        }
    }
    let path = art.write("data/manifest.txt", manifest.as_bytes())?;
    art.report(&format!("{REPORTS}/synth.tsv"), &seeds, &summary)?;
    messages.push(format!("manifest: {}", path.display()));
    Ok(())
}

// --------------------------------------------------------------- train ---

struct TrainJob {
    langs: Vec<String>,
    layer: u32,
    rank: usize,
    rand: bool,
}

impl TrainJob {
    fn name(&self) -> String {
        let base = probe_name(&label(&self.langs), self.layer, self.rank);
        if self.rand {
            format!("{base}.rand")
        } else {
            base
        }
    }

    fn seed_key(&self) -> String {
        let kind = if self.rand { "train-rand" } else { "train" };
        format!("{kind}/{}/L{}/k{}", label(&self.langs), self.layer, self.rank)
    }
}

type TrainResult = synprobe::Result<(ProbeParams, TrainLog)>;

fn run_jobs(cfg: &ExperimentConfig, store: &Store, jobs: &[TrainJob]) -> Vec<TrainResult> {
    jobs.par_iter()
        .map(|j| {
            let seed = derive_seed(cfg.seed, &j.seed_key());
            train_on(cfg, store, &j.langs, j.layer, j.rank, j.rand, seed)
        })
        .collect()
}

fn write_trained(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    job: &TrainJob,
    probe: &ProbeParams,
    log: &TrainLog,
) -> CliResult<()> {
    let name = job.name();
    art.write(&probe_rel(&name), &probe_to_bytes(probe))?;
    let seed = derive_seed(cfg.seed, &job.seed_key());
    art.report(
        &format!("{REPORTS}/train.{name}.txt"),
        &[seed_line(&job.seed_key(), seed)],
        &log.to_text(),
    )?;
    Ok(())
}

fn train(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let mut needs = Needs::default();
    needs.add(&cfg.languages, &[Split::Train, Split::Dev], &cfg.layers);
    let store = load(cfg, &needs)?;
    check_ranks(cfg, &store)?;

    let groups: Vec<Vec<String>> = if cfg.joint {
        vec![cfg.languages.clone()]
    } else {
        cfg.languages.iter().map(|l| vec![l.clone()]).collect()
    };
    let mut jobs = Vec::new();
    for g in &groups {
        for &layer in &cfg.layers {
            for &rank in &cfg.ranks {
                jobs.push(TrainJob {
                    langs: g.clone(),
                    layer,
                    rank,
                    rand: false,
                });
            }
        }
    }
    let results = run_jobs(cfg, &store, &jobs);
    let mut summary = String::from("probe\tlanguages\tlayer\trank\tbest_epoch\tbest_dev_loss\tepochs\n");
    for (job, res) in jobs.iter().zip(results) {
        let (probe, log) = res.map_err(|e| match CliError::from(e) {
            CliError::Data(m) => CliError::Data(format!("training {}: {m}", job.name())),
            CliError::Numeric(m) => CliError::Numeric(format!("training {}: {m}", job.name())),
            other => other,
        })?;
        write_trained(cfg, art, job, &probe, &log)?;
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}\t{:.9}\t{}",
            job.name(),
            probe.langs_label(),
            job.layer,
            job.rank,
            log.best_epoch,
            log.best_dev_loss,
            log.epochs.len()
        );
        messages.push(format!("trained {} (dev loss {:.6})", job.name(), log.best_dev_loss));
    }
    art.report(&format!("{REPORTS}/train.summary.tsv"), &[], &summary)?;
    Ok(())
}

// ---------------------------------------------------------------- eval ---

fn configured_probe_paths(cfg: &ExperimentConfig, probe_label: &str) -> Vec<(String, u32, usize, PathBuf)> {
    let mut out = Vec::new();
    for &layer in &cfg.layers {
        for &rank in &cfg.ranks {
            let name = probe_name(probe_label, layer, rank);
            out.push((name.clone(), layer, rank, cfg.out.join(probe_rel(&name))));
        }
    }
    out
}

/// `(name, probe)` pairs to use for a language group: the explicit
/// `probe.path`, or the trained probes for every configured layer and rank.
fn probes_for(cfg: &ExperimentConfig, probe_label: &str) -> CliResult<Vec<(String, ProbeParams)>> {
    if let Some(p) = &cfg.probe_path {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "probe".into());
        return Ok(vec![(name, load_probe_file(p)?)]);
    }
    let paths: Vec<(String, PathBuf)> = configured_probe_paths(cfg, probe_label)
        .into_iter()
        .map(|(n, _, _, p)| (n, p))
        .collect();
    Ok(load_probes(&paths)?.into_iter().collect())
}

fn eval(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let split = cfg.eval_split;
    let joint = label(&cfg.languages);
    let mut jobs: Vec<(String, String, ProbeParams)> = Vec::new();
    for lang in &cfg.languages {
        let probe_label = if cfg.joint { joint.as_str() } else { lang.as_str() };
        for (name, p) in probes_for(cfg, probe_label)? {
            jobs.push((lang.clone(), name, p));
        }
    }
    let layers: Vec<u32> = jobs.iter().map(|j| j.2.layer).collect::<BTreeSet<_>>().into_iter().collect();
    let mut needs = Needs::default();
    needs.add(&cfg.languages, &[split], &layers);
    let store = load(cfg, &needs)?;

    let opts = eval_options(cfg);
    let reports: Vec<synprobe::Result<EvalReport>> = jobs
        .par_iter()
        .map(|(lang, _, p)| evaluate_with(p, store.tb(lang, split), store.emb(lang, split, p.layer), &opts))
        .collect();
    let linear: BTreeMap<&String, EvalReport> = cfg
        .languages
        .iter()
        .map(|l| Ok((l, evaluate_linear_baseline(store.tb(l, split), &opts)?)))
        .collect::<synprobe::Result<_>>()?;

    let mut summary =
        String::from("language\tprobe\tlayer\trank\tuuas\tdspr\tlinear_uuas\tlinear_dspr\n");
    for ((lang, name, p), report) in jobs.iter().zip(reports) {
        let report = report?;
        let lin = &linear[lang];
        let body = format!(
            "language\t{lang}\nprobe\t{name}\nsplit\t{split}\n{}linear_uuas\t{}\nlinear_dspr\t{}\n",
            report.to_text(),
            fmt_opt(lin.uuas),
            fmt_opt(lin.dspr)
        );
        art.report(&format!("{REPORTS}/eval.{lang}.{name}.txt"), &[], &body)?;
        let _ = writeln!(
            summary,
            "{lang}\t{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.layer,
            p.rank(),
            fmt_opt(report.uuas),
            fmt_opt(report.dspr),
            fmt_opt(lin.uuas),
            fmt_opt(lin.dspr)
        );
        messages.push(format!(
            "{lang} {name}: uuas {} dspr {}",
            fmt_opt(report.uuas),
            fmt_opt(report.dspr)
        ));
    }
    art.report(&format!("{REPORTS}/eval.summary.tsv"), &[], &summary)?;
    Ok(())
}

// ------------------------------------------------------------ transfer ---

fn transfer_rel(layer: u32, rank: usize, what: &str) -> String {
    format!("{REPORTS}/transfer.L{layer}.k{rank}.{what}.tsv")
}

fn transfer(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let langs = &cfg.languages;
    let m = cfg.manifest();
    let mut needs = Needs::default();
    needs.add(langs, &Split::ALL, &cfg.layers);
    // The random baseline is used where the manifest lists all three splits.
    let rand_langs: Vec<String> = langs
        .iter()
        .filter(|l| {
            Split::ALL
                .iter()
                .all(|&s| m.rand_emb_path(l, s, cfg.layers[0]).ok().flatten().is_some())
        })
        .cloned()
        .collect();
    for l in &rand_langs {
        for &s in &Split::ALL {
            for &layer in &cfg.layers {
                needs.rand.insert((l.clone(), s, layer));
            }
        }
    }
    let store = load(cfg, &needs)?;
    check_ranks(cfg, &store)?;

    // Distinct probes needed by any cell, trained once each.
    let mut groups: BTreeSet<(bool, Vec<String>)> = BTreeSet::new();
    for l in langs {
        groups.insert((false, vec![l.clone()]));
        if langs.len() > 1 {
            groups.insert((false, langs.iter().filter(|o| *o != l).cloned().collect()));
        }
    }
    groups.insert((false, langs.clone()));
    for l in &rand_langs {
        groups.insert((true, vec![l.clone()]));
    }
    let mut jobs = Vec::new();
    for &layer in &cfg.layers {
        for &rank in &cfg.ranks {
            for (rand, g) in &groups {
                jobs.push(TrainJob {
                    langs: g.clone(),
                    layer,
                    rank,
                    rand: *rand,
                });
            }
        }
    }
    let results = run_jobs(cfg, &store, &jobs);
    let mut trained: BTreeMap<(bool, Vec<String>, u32, usize), ProbeParams> = BTreeMap::new();
    let mut train_notes = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        let seed = derive_seed(cfg.seed, &job.seed_key());
        train_notes.push(seed_line(&job.seed_key(), seed));
        match res {
            Ok((probe, log)) => {
                write_trained(cfg, art, job, &probe, &log)?;
                trained.insert((job.rand, job.langs.clone(), job.layer, job.rank), probe);
            }
            Err(e) => train_notes.push(format!("training {} failed: {e}", job.name())),
        }
    }

    let opts = eval_options(cfg);
    let mut any_scored = false;
    for &layer in &cfg.layers {
        for &rank in &cfg.ranks {
            let get = |rand: bool, g: Vec<String>| trained.get(&(rand, g, layer, rank)).cloned();
            let mut inputs = TransferInputs::default();
            for l in langs {
                inputs.targets.insert(
                    l.clone(),
                    (store.tb(l, Split::Test).clone(), store.emb(l, Split::Test, layer).clone()),
                );
                if let Some(p) = get(false, vec![l.clone()]) {
                    inputs.sources.insert(l.clone(), p);
                }
                if langs.len() > 1 {
                    let others: Vec<String> = langs.iter().filter(|o| *o != l).cloned().collect();
                    if let Some(p) = get(false, others) {
                        inputs.holdout.insert(l.clone(), p);
                    }
                }
                if let Some(p) = get(true, vec![l.clone()]) {
                    let remb = store.rand[&(l.clone(), Split::Test, layer)].clone();
                    inputs.rand.insert(l.clone(), (p, remb));
                }
            }
            inputs.all = get(false, langs.clone());
            let grid = transfer_grid(&inputs, &opts);
            any_scored |= grid.uuas.iter().flatten().any(Option::is_some);

            let mut notes = train_notes.clone();
            for (t, c, why) in &grid.failures {
                notes.push(format!("absent {t} / {c}: {why}"));
            }
            for metric in [Metric::Uuas, Metric::Dspr] {
                art.report(&transfer_rel(layer, rank, metric.as_str()), &notes, &grid.to_tsv(metric))?;
            }
            let mut best = String::from("target\tbest_source\tuuas\n");
            for (target, b) in langs.iter().zip(grid.single_tran(Metric::Uuas)) {
                match b {
                    Some((src, v)) => {
                        let _ = writeln!(best, "{target}\t{src}\t{v:.6}");
                    }
                    None => {
                        let _ = writeln!(best, "{target}\tNA\tNA");
                    }
                }
            }
            art.report(&transfer_rel(layer, rank, "single_tran"), &[], &best)?;
            messages.push(format!(
                "transfer grid L{layer} k{rank}: {}x{} ({} absent by failure)",
                grid.languages.len(),
                grid.columns.len(),
                grid.failures.len()
            ));
        }
    }
    if !any_scored {
        return Err(CliError::Data("every transfer cell failed".into()));
    }
    Ok(())
}

// -------------------------------------------------------------- angles ---

fn angles(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    for &layer in &cfg.layers {
        for &rank in &cfg.ranks {
            let paths: Vec<(String, PathBuf)> = cfg
                .languages
                .iter()
                .map(|l| (l.clone(), cfg.out.join(probe_rel(&probe_name(l, layer, rank)))))
                .collect();
            let probes: Vec<(String, ProbeParams)> = load_probes(&paths)?.into_iter().collect();
            let matrix = mean_angle_matrix(&probes)?;
            art.report(
                &format!("{REPORTS}/angles.L{layer}.k{rank}.tsv"),
                &[],
                &matrix.to_tsv(),
            )?;
            let transfer_path = art.path(&transfer_rel(layer, rank, cfg.metric.as_str()));
            if transfer_path.is_file() {
                let text = fs::read_to_string(&transfer_path).map_err(|e| {
                    CliError::Data(format!("cannot read {}: {e}", transfer_path.display()))
                })?;
                let grid = TransferMatrix::from_tsv(&text, cfg.metric)?;
                let rows = ordering_correlation(&matrix, &grid, cfg.metric);
                art.report(
                    &format!("{REPORTS}/angles.L{layer}.k{rank}.ordering.{}.tsv", cfg.metric.as_str()),
                    &[format!("transfer table {}", transfer_rel(layer, rank, cfg.metric.as_str()))],
                    &ordering_correlation_tsv(&rows, cfg.metric),
                )?;
            } else {
                messages.push(format!(
                    "no transfer table for L{layer} k{rank}; ordering correlation skipped"
                ));
            }
            messages.push(format!("angles L{layer} k{rank}: {} languages", probes.len()));
        }
    }
    Ok(())
}

// ------------------------------------------------------------- diffvec ---

fn diffvec_stem(cfg: &ExperimentConfig, layer: u32, rank: usize) -> String {
    let l = label(&cfg.languages);
    if cfg.diff_raw {
        format!("diffvec.{l}.L{layer}.raw")
    } else {
        format!("diffvec.{}", probe_name(&l, layer, rank))
    }
}

fn diffvec(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let joint = label(&cfg.languages);
    let probes: Vec<(u32, usize, Option<ProbeParams>)> = if cfg.diff_raw {
        cfg.layers.iter().map(|&l| (l, 0, None)).collect()
    } else {
        probes_for(cfg, &joint)?
            .into_iter()
            .map(|(_, p)| (p.layer, p.rank(), Some(p)))
            .collect()
    };
    let layers: Vec<u32> = probes.iter().map(|p| p.0).collect::<BTreeSet<_>>().into_iter().collect();
    let mut needs = Needs::default();
    needs.add(&cfg.languages, &[cfg.diff_split], &layers);
    let store = load(cfg, &needs)?;

    let filter = DiffFilter {
        labels: cfg.diff_labels.clone(),
        sample: cfg.diff_sample,
    };
    for (layer, rank, probe) in &probes {
        let corpora: Vec<(&Treebank, &EmbeddingFile)> = cfg
            .languages
            .iter()
            .map(|l| (store.tb(l, cfg.diff_split), store.emb(l, cfg.diff_split, *layer)))
            .collect();
        let stem = diffvec_stem(cfg, *layer, *rank);
        let seed_key = format!("diffvec/{stem}");
        let seed = derive_seed(cfg.seed, &seed_key);
        let vectors = diff_vectors(probe.as_ref(), &corpora, &filter, seed)?;

        let counts = relation_counts(&corpora);
        let mut body = format!("vectors\t{}\n", vectors.len());
        if let LabelFilter::TopN { n, exclude } = &cfg.diff_labels {
            let (top, coverage) = top_relations(&counts, *n, exclude);
            let _ = writeln!(body, "top_relations\t{}\ncoverage\t{coverage:.6}", top.join(","));
        }
        let mut kept: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for v in &vectors {
            *kept.entry((v.deprel.as_str(), v.direction.as_str())).or_default() += 1;
        }
        body.push_str("deprel\tdirection\tcount\n");
        for ((rel, dir), c) in kept {
            let _ = writeln!(body, "{rel}\t{dir}\t{c}");
        }
        let seeds = [seed_line(&seed_key, seed)];
        art.report(&format!("{REPORTS}/{stem}.txt"), &seeds, &body)?;
        art.report(&format!("{POINTS}/{stem}.tsv"), &seeds, &vectors_tsv(&vectors))?;
        messages.push(format!("{stem}: {} vectors", vectors.len()));
    }
    Ok(())
}

// -------------------------------------------------------------- reduce ---

fn method_name(m: ReduceMethod) -> &'static str {
    match m {
        ReduceMethod::Tsne => "tsne",
        ReduceMethod::Pca => "pca",
    }
}

fn default_input(cfg: &ExperimentConfig, suffix: &str) -> CliResult<PathBuf> {
    if cfg.languages.is_empty() {
        return Err(CliError::Config(vec![format!(
            "{} needs an explicit input or data.languages to locate diffvec output",
            cfg.mode
        )]));
    }
    let stem = diffvec_stem(cfg, cfg.layers[0], cfg.ranks[0]);
    let path = cfg.out.join(format!("{POINTS}/{stem}{suffix}"));
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "input {} does not exist (run the previous step first)",
            path.display()
        )));
    }
    Ok(path)
}

fn file_stem(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().trim_end_matches(".tsv").to_string())
        .unwrap_or_else(|| "input".into())
}

fn labelled_summary(points: &DMatrix<f64>, labels: Vec<String>, what: &str) -> String {
    match cluster_summary(points, &labels) {
        Ok(s) => format!("## {what}\n{}", s.to_tsv()),
        Err(e) => format!("## {what}\nskipped: {e}\n"),
    }
}

fn reduce(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let input = match &cfg.reduce_input {
        Some(p) => p.clone(),
        None => default_input(cfg, ".tsv")?,
    };
    let text = fs::read_to_string(&input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", input.display())))?;
    let vectors: Vec<DiffVector> = read_vectors_tsv(&text)?;
    if vectors.len() < 4 {
        return Err(CliError::Data(format!("{} holds only {} vectors", input.display(), vectors.len())));
    }
    let dim = vectors[0].v.len();
    let x = DMatrix::from_fn(vectors.len(), dim, |i, j| vectors[i].v[j]);
    let method = method_name(cfg.reduce_method);
    let stem = format!("{}.{method}", file_stem(&input));
    let seed_key = format!("reduce/{stem}");
    let seed = derive_seed(cfg.seed, &seed_key);
    let seeds = [seed_line(&seed_key, seed), format!("input {}", input.display())];

    let points = match cfg.reduce_method {
        ReduceMethod::Tsne => {
            let params = TsneParams {
                iterations: cfg.iterations,
                ..TsneParams::with_perplexity(cfg.perplexity, seed)
            };
            let (proj, trace) = tsne(&x, &params)?;
            let mut t = String::from("iteration\tkl\tq_sum\n");
            for (i, (kl, q)) in trace.kl.iter().zip(&trace.q_sum).enumerate() {
                let _ = writeln!(t, "{i}\t{kl:.9}\t{q:.12}");
            }
            art.report(&format!("{REPORTS}/{stem}.trace.tsv"), &seeds, &t)?;
            proj.points
        }
        ReduceMethod::Pca => {
            let r = synprobe::reduction::pca(&x, 2)?;
            let mut t = String::from("component\texplained_variance\n");
            for (i, v) in r.explained_variance.iter().enumerate() {
                let _ = writeln!(t, "{i}\t{v:.9}");
            }
            art.report(&format!("{REPORTS}/{stem}.variance.tsv"), &seeds, &t)?;
            r.projected
        }
    };
    let records = PointRecord::from_projection(&points, &vectors)?;
    art.report(&format!("{POINTS}/{stem}.tsv"), &seeds, &points_tsv(&records))?;

    let by_rel: Vec<String> = vectors.iter().map(|v| v.deprel.clone()).collect();
    let by_dir: Vec<String> = vectors
        .iter()
        .map(|v| format!("{}/{}", v.deprel, v.direction))
        .collect();
    let mut clusters = String::new();
    clusters.push_str(&labelled_summary(&points, by_rel.clone(), "projection by relation"));
    clusters.push_str(&labelled_summary(&points, by_dir.clone(), "projection by relation and direction"));
    clusters.push_str(&labelled_summary(&x, by_rel, "input space by relation"));
    clusters.push_str(&labelled_summary(&x, by_dir, "input space by relation and direction"));
    art.report(&format!("{REPORTS}/{stem}.clusters.tsv"), &seeds, &clusters)?;
    messages.push(format!("{stem}: {} points", records.len()));
    Ok(())
}

// ---------------------------------------------------------------- plot ---

fn plot(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let input = match &cfg.plot_input {
        Some(p) => p.clone(),
        None => default_input(cfg, &format!(".{}.tsv", method_name(cfg.reduce_method)))?,
    };
    let text = fs::read_to_string(&input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", input.display())))?;
    let records = read_points_tsv(&text)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{} has no points", input.display())));
    }
    let rel = format!("{PLOTS}/{}.svg", file_stem(&input));
    let path = art.write(&rel, render_svg(&records).as_bytes())?;
    messages.push(format!("plot: {}", path.display()));
    Ok(())
}

// --------------------------------------------------------- extrapolate ---

fn extrapolate(cfg: &ExperimentConfig, art: &mut Artifacts, messages: &mut Vec<String>) -> CliResult<()> {
    let source = label(&cfg.languages);
    let probes = probes_for(cfg, &source)?;
    let layers: Vec<u32> = probes.iter().map(|(_, p)| p.layer).collect::<BTreeSet<_>>().into_iter().collect();
    let mut needs = Needs::default();
    needs.add(&cfg.targets, &[cfg.eval_split], &layers);
    let store = load(cfg, &needs)?;

    for (name, p) in &probes {
        let mut body = String::from("target\trelation\torder\tcorrect\tscored\tuuas\n");
        for target in &cfg.targets {
            for (order, tag) in [
                (AdjectiveOrder::Prenominal, "prenominal"),
                (AdjectiveOrder::Postnominal, "postnominal"),
            ] {
                let s = extrapolation_uuas(
                    p,
                    store.tb(target, cfg.eval_split),
                    store.emb(target, cfg.eval_split, p.layer),
                    &cfg.relation,
                    order,
                )?;
                let _ = writeln!(
                    body,
                    "{target}\t{}\t{tag}\t{}\t{}\t{}",
                    cfg.relation,
                    s.correct,
                    s.scored,
                    fmt_opt(s.ratio())
                );
            }
        }
        art.report(&format!("{REPORTS}/extrapolate.{name}.tsv"), &[], &body)?;
        messages.push(format!("extrapolate {name}: {} targets", cfg.targets.len()));
    }
    Ok(())
}
