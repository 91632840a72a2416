//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers, overridden by command-line flags.
//!
//! ```text
//! [data]
//! manifest = data/manifest.txt
//! languages = en,fr
//! [probe]
//! rank = 8,16,32
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use synprobe::eval::DsprMode;
use synprobe::reduction::LabelFilter;
use synprobe::{Manifest, Metric, Split};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Synth,
    Train,
    Eval,
    Transfer,
    Angles,
    Diffvec,
    Reduce,
    Plot,
    Extrapolate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Synth => "synth",
            Mode::Train => "train",
            Mode::Eval => "eval",
            Mode::Transfer => "transfer",
            Mode::Angles => "angles",
            Mode::Diffvec => "diffvec",
            Mode::Reduce => "reduce",
            Mode::Plot => "plot",
            Mode::Extrapolate => "extrapolate",
        }
    }

    fn needs_manifest(self) -> bool {
        matches!(
            self,
            Mode::Train | Mode::Eval | Mode::Transfer | Mode::Diffvec | Mode::Extrapolate
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every recognised key with its default. Order here is the order of the
/// resolved config echoed into reports.
const SCHEMA: &[(&str, &str)] = &[
    ("run.seed", "0"),
    ("run.out", "out"),
    ("run.threads", "0"),
    ("data.manifest", ""),
    ("data.languages", ""),
    ("probe.layer", "7"),
    ("probe.rank", "128"),
    ("probe.path", ""),
    ("probe.joint", "false"),
    ("train.learning_rate", "0.001"),
    ("train.decay", "0.1"),
    ("train.patience", "3"),
    ("train.max_epochs", "30"),
    ("train.batch_size", "20"),
    ("train.max_len", "100"),
    ("eval.split", "test"),
    ("eval.dspr_mode", "per-word"),
    ("eval.metric", "uuas"),
    ("synth.train", "500"),
    ("synth.dev", "100"),
    ("synth.test", "100"),
    ("synth.min_len", "5"),
    ("synth.max_len", "30"),
    ("synth.pad_dim", "32"),
    ("synth.noise", "0"),
    ("diffvec.split", "dev"),
    ("diffvec.labels", "top11"),
    ("diffvec.sample", ""),
    ("diffvec.raw", "false"),
    ("reduce.input", ""),
    ("reduce.method", "tsne"),
    ("reduce.perplexity", "30"),
    ("reduce.iterations", "1000"),
    ("plot.input", ""),
    ("extrapolate.relation", "amod"),
    ("extrapolate.targets", ""),
];

/// Rank used by `diffvec` (and the `reduce`/`plot` steps that locate its
/// output) when none is configured.
const DIFFVEC_DEFAULT_RANK: &str = "32";

/// Raw key/value layers before typing.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses config text. Problems are accumulated, not returned one by one.
    pub fn parse(text: &str, label: &str, problems: &mut Vec<String>) -> Self {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = format!("{label}:{}", lineno + 1);
            if let Some(name) = line.strip_prefix('[') {
                match name.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => section = name.trim().to_string(),
                    _ => problems.push(format!("{at}: malformed section header {line:?}")),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("{at}: expected key = value, got {line:?}"));
                continue;
            };
            let key = key.trim();
            let key = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if raw.values.contains_key(&key) {
                problems.push(format!("{at}: duplicate key {key}"));
            }
            raw.values.insert(key, value.trim().to_string());
        }
        raw
    }

    pub fn load(path: &Path, problems: &mut Vec<String>) -> Self {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text, &path.display().to_string(), problems),
            Err(e) => {
                problems.push(format!("cannot read config {}: {e}", path.display()));
                RawConfig::default()
            }
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Later layers win.
    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pad_dim: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceMethod {
    Tsne,
    Pca,
}

/// Fully typed configuration for one invocation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub manifest_path: Option<PathBuf>,
    pub manifest: Option<Manifest>,
    pub languages: Vec<String>,
    pub layers: Vec<u32>,
    pub ranks: Vec<usize>,
    pub probe_path: Option<PathBuf>,
    pub joint: bool,
    pub train: TrainSettings,
    pub eval_split: Split,
    pub dspr_mode: DsprMode,
    pub metric: Metric,
    pub synth: SynthSettings,
    pub diff_split: Split,
    pub diff_labels: LabelFilter,
    pub diff_sample: Option<usize>,
    pub diff_raw: bool,
    pub reduce_input: Option<PathBuf>,
    pub reduce_method: ReduceMethod,
    pub perplexity: f64,
    pub iterations: usize,
    pub plot_input: Option<PathBuf>,
    pub relation: String,
    pub targets: Vec<String>,
    /// Every schema key with its effective value, in schema order.
    pub resolved: Vec<(String, String)>,
}

struct Typer<'a> {
    raw: &'a RawConfig,
    problems: Vec<String>,
}

impl Typer<'_> {
    fn text(&self, key: &str) -> String {
        self.raw
            .get(key)
            .or_else(|| SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .unwrap_or_default()
            .to_string()
    }

    fn parse<T: FromStr>(&mut self, key: &str, fallback: T) -> T
    where
        T::Err: fmt::Display,
    {
        let text = self.text(key);
        match text.parse() {
            Ok(v) => v,
            Err(e) => {
                self.problems.push(format!("{key}: cannot parse {text:?}: {e}"));
                fallback
            }
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        let text = self.text(key);
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(e) => self.problems.push(format!("{key}: cannot parse {item:?}: {e}")),
            }
        }
        out
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let text = self.text(key);
        (!text.is_empty()).then(|| PathBuf::from(text))
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let text = self.text(key);
        if text.is_empty() {
            return None;
        }
        match text.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("{key}: cannot parse {text:?}: {e}"));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.problems.push(message.into());
        }
    }
}

fn parse_dspr_mode(s: &str) -> Option<DsprMode> {
    match s {
        "per-word" => Some(DsprMode::PerWord),
        "per-pair" => Some(DsprMode::PerPair),
        _ => None,
    }
}

fn parse_labels(s: &str) -> Option<LabelFilter> {
    match s {
        "top11" => Some(LabelFilter::top_11_without_punct()),
        "all" => Some(LabelFilter::All),
        "" => None,
        list => Some(LabelFilter::Labels(
            list.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
        )),
    }
}

impl ExperimentConfig {
    /// Types and validates `raw` for `mode`, reporting every problem at once.
    pub fn resolve(mode: Mode, raw: &RawConfig, mut problems: Vec<String>) -> Result<Self, CliError> {
        for key in raw.values.keys() {
            if !SCHEMA.iter().any(|(k, _)| k == key) {
                problems.push(format!("unknown key {key}"));
            }
        }
        let mut raw = raw.clone();
        if matches!(mode, Mode::Diffvec | Mode::Reduce | Mode::Plot) && raw.get("probe.rank").is_none() {
            raw.set("probe.rank", DIFFVEC_DEFAULT_RANK);
        }
        let mut t = Typer { raw: &raw, problems };

        let seed = t.parse("run.seed", 0u64);
        let out = PathBuf::from(t.text("run.out"));
        t.check(!out.as_os_str().is_empty(), "run.out must not be empty");
        let threads = t.parse("run.threads", 0usize);
        let manifest_path = t.path("data.manifest");
        let mut languages: Vec<String> = t.list("data.languages");
        let layers: Vec<u32> = t.list("probe.layer");
        let ranks: Vec<usize> = t.list("probe.rank");
        let probe_path = t.path("probe.path");
        let joint = t.parse("probe.joint", false);
        let train = TrainSettings {
            learning_rate: t.parse("train.learning_rate", 1e-3),
            decay: t.parse("train.decay", 0.1),
            patience: t.parse("train.patience", 3),
            max_epochs: t.parse("train.max_epochs", 30),
            batch_size: t.parse("train.batch_size", 20),
            max_len: t.parse("train.max_len", 100),
        };
        let eval_split = t.parse("eval.split", Split::Test);
        let dspr_text = t.text("eval.dspr_mode");
        let dspr_mode = parse_dspr_mode(&dspr_text).unwrap_or_else(|| {
            t.problems
                .push(format!("eval.dspr_mode: expected per-word or per-pair, got {dspr_text:?}"));
            DsprMode::PerWord
        });
        let metric = t.parse("eval.metric", Metric::Uuas);
        let synth = SynthSettings {
            train: t.parse("synth.train", 500),
            dev: t.parse("synth.dev", 100),
            test: t.parse("synth.test", 100),
            min_len: t.parse("synth.min_len", 5),
            max_len: t.parse("synth.max_len", 30),
            pad_dim: t.parse("synth.pad_dim", 32),
            noise: t.parse("synth.noise", 0.0),
        };
        let diff_split = t.parse("diffvec.split", Split::Dev);
        let labels_text = t.text("diffvec.labels");
        let diff_labels = parse_labels(&labels_text).unwrap_or_else(|| {
            t.problems.push("diffvec.labels must not be empty".into());
            LabelFilter::All
        });
        let diff_sample = t.optional("diffvec.sample");
        let diff_raw = t.parse("diffvec.raw", false);
        let reduce_input = t.path("reduce.input");
        let method_text = t.text("reduce.method");
        let reduce_method = match method_text.as_str() {
            "tsne" => ReduceMethod::Tsne,
            "pca" => ReduceMethod::Pca,
            other => {
                t.problems
                    .push(format!("reduce.method: expected tsne or pca, got {other:?}"));
                ReduceMethod::Tsne
            }
        };
        let perplexity = t.parse("reduce.perplexity", 30.0);
        let iterations = t.parse("reduce.iterations", 1000);
        let plot_input = t.path("plot.input");
        let relation = t.text("extrapolate.relation");
        let mut targets: Vec<String> = t.list("extrapolate.targets");

        // Value ranges.
        t.check(!layers.is_empty(), "probe.layer must list at least one layer");
        for &l in &layers {
            t.check(l <= 12, format!("probe.layer {l} outside 0..=12"));
        }
        t.check(!ranks.is_empty(), "probe.rank must list at least one rank");
        t.check(ranks.iter().all(|&k| k > 0), "probe.rank values must be positive");
        t.check(train.learning_rate > 0.0, "train.learning_rate must be positive");
        t.check(
            train.decay > 0.0 && train.decay < 1.0,
            "train.decay must lie in (0, 1)",
        );
        t.check(train.patience > 0, "train.patience must be positive");
        t.check(train.max_epochs > 0, "train.max_epochs must be positive");
        t.check(train.batch_size > 0, "train.batch_size must be positive");
        t.check(train.max_len >= 2, "train.max_len must be at least 2");
        t.check(
            synth.min_len >= 1 && synth.min_len <= synth.max_len,
            "synth.min_len must lie in 1..=synth.max_len",
        );
        t.check(
            synth.pad_dim + 1 >= synth.max_len,
            format!(
                "synth.pad_dim {} cannot hold trees of {} tokens",
                synth.pad_dim, synth.max_len
            ),
        );
        t.check(
            synth.noise >= 0.0 && synth.noise.is_finite(),
            "synth.noise must be non-negative",
        );
        t.check(perplexity > 1.0, "reduce.perplexity must exceed 1");
        t.check(iterations > 0, "reduce.iterations must be positive");
        t.check(diff_sample != Some(0), "diffvec.sample must be positive");
        t.check(!relation.is_empty(), "extrapolate.relation must not be empty");

        // Paths that must exist at launch.
        for (key, p) in [
            ("probe.path", &probe_path),
            ("reduce.input", &reduce_input),
            ("plot.input", &plot_input),
        ] {
            if let Some(p) = p {
                t.check(p.is_file(), format!("{key}: {} does not exist", p.display()));
            }
        }
        // Modes that do not read data still use a given manifest for their
        // default language list.
        let mut manifest = None;
        if mode.needs_manifest() || (manifest_path.is_some() && mode != Mode::Synth) {
            match &manifest_path {
                None => t.problems.push(format!("{mode} requires data.manifest (--manifest)")),
                Some(p) if !p.is_file() => t
                    .problems
                    .push(format!("data.manifest: {} does not exist", p.display())),
                Some(p) => match Manifest::load(p) {
                    Ok(m) => manifest = Some(m),
                    Err(e) => t.problems.push(format!("data.manifest: {e}")),
                },
            }
        }
        if let Some(m) = &manifest {
            let known = m.language_codes();
            if languages.is_empty() {
                languages = known.clone();
            }
            for l in languages.iter().chain(&targets) {
                t.check(
                    known.contains(l),
                    format!("language {l:?} is not in the manifest"),
                );
            }
        }
        if mode == Mode::Synth && languages.is_empty() {
            languages.push("syn".to_string());
        }
        languages.sort();
        languages.dedup();
        if targets.is_empty() {
            targets = languages.clone();
        }
        if mode.needs_manifest() || mode == Mode::Angles {
            t.check(!languages.is_empty(), "data.languages is empty");
        }
        if mode == Mode::Angles {
            t.check(languages.len() >= 2, "angles needs at least two languages");
        }

        let resolved = SCHEMA
            .iter()
            .map(|(k, _)| {
                let v = match *k {
                    "data.languages" => languages.join(","),
                    "extrapolate.targets" => targets.join(","),
                    _ => t.text(k),
                };
                (k.to_string(), v)
            })
            .collect();

        if !t.problems.is_empty() {
            return Err(CliError::Config(t.problems));
        }
        Ok(ExperimentConfig {
            mode,
            seed,
            out,
            threads,
            manifest_path,
            manifest,
            languages,
            layers,
            ranks,
            probe_path,
            joint,
            train,
            eval_split,
            dspr_mode,
            metric,
            synth,
            diff_split,
            diff_labels,
            diff_sample,
            diff_raw,
            reduce_input,
            reduce_method,
            perplexity,
            iterations,
            plot_input,
            relation,
            targets,
            resolved,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        self.manifest.as_ref().expect("validated manifest")
    }

    /// `# key = value` lines for report headers. Where the run is written and
    /// how many threads it used do not affect any result, so they are left
    /// out and reruns elsewhere stay byte-identical.
    pub fn header(&self) -> String {
        let mut out = format!("# synprobe {}\n", self.mode);
        for (k, v) in &self.resolved {
            if k != "run.out" && k != "run.threads" {
                out.push_str(&format!("# {k} = {v}\n"));
            }
        }
        out
    }
}

/// Parses `key=value` override strings.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(mode: Mode, text: &str) -> Result<ExperimentConfig, CliError> {
        let mut problems = Vec::new();
        let raw = RawConfig::parse(text, "cfg", &mut problems);
        ExperimentConfig::resolve(mode, &raw, problems)
    }

    #[test]
    fn sections_prefix_keys() {
        let c = resolve(Mode::Synth, "[probe]\nrank = 8, 16\n[run]\nseed = 9\n").unwrap();
        assert_eq!(c.ranks, vec![8, 16]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.languages, vec!["syn"]);
        assert!(c.header().contains("# probe.rank = 8, 16\n"));
    }

    #[test]
    fn problems_are_reported_together() {
        let err = resolve(
            Mode::Train,
            "[probe]\nrank = x\nlayer = 13\nbogus = 1\n[train]\ndecay = 2\nno equals sign\n",
        )
        .unwrap_err();
        let CliError::Config(problems) = err else {
            panic!("expected config error")
        };
        let joined = problems.join("\n");
        for needle in [
            "no equals sign",
            "unknown key probe.bogus",
            "probe.rank: cannot parse",
            "probe.layer 13",
            "train.decay",
            "requires data.manifest",
        ] {
            assert!(joined.contains(needle), "{needle} missing from\n{joined}");
        }
    }

    #[test]
    fn overlay_prefers_later_values() {
        let mut problems = Vec::new();
        let mut a = RawConfig::parse("[run]\nseed = 1\nout = a\n", "a", &mut problems);
        let mut b = RawConfig::default();
        b.set("run.seed", "2");
        a.overlay(&b);
        let c = ExperimentConfig::resolve(Mode::Synth, &a, problems).unwrap();
        assert_eq!((c.seed, c.out), (2, PathBuf::from("a")));
    }

    #[test]
    fn diffvec_defaults_to_rank_32() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        fs::write(&m, "xx.dev = xx.conllu\n").unwrap();
        let text = format!("[data]\nmanifest = {}\n", m.display());
        assert_eq!(resolve(Mode::Diffvec, &text).unwrap().ranks, vec![32]);
        assert_eq!(resolve(Mode::Train, &text).unwrap().ranks, vec![128]);
        let explicit = format!("{text}[probe]\nrank = 8\n");
        assert_eq!(resolve(Mode::Diffvec, &explicit).unwrap().ranks, vec![8]);
    }

    #[test]
    fn languages_must_be_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        fs::write(&m, "xx.dev = xx.conllu\nyy.dev = yy.conllu\n").unwrap();
        let base = format!("[data]\nmanifest = {}\n", m.display());
        assert_eq!(resolve(Mode::Eval, &base).unwrap().languages, vec!["xx", "yy"]);
        let err = resolve(Mode::Eval, &format!("{base}languages = xx,zz\n")).unwrap_err();
        assert!(err.to_string().contains("\"zz\" is not in the manifest"));
    }
}
