//! Plain-text manifest mapping languages to treebank and embedding files.
//!
//! ```text
//! # comment
//! en.train = en/train.conllu
//! en.train.emb = en/train.L{layer}.emb
//! en.dev = en/dev.conllu
//! ```
//!
//! `<lang>.<split>` (or `<lang>.<split>.conllu`) names a CoNLL-U file and
//! `<lang>.<split>.emb` an embedding file, where `{layer}` is substituted.
//! `<lang>.<split>.rand` optionally names embeddings from the randomly
//! initialised baseline model, with the same substitution.
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::treebank::{load_conllu, Treebank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageEntry {
    pub conllu: BTreeMap<Split, PathBuf>,
    pub emb: BTreeMap<Split, String>,
    pub rand: BTreeMap<Split, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub languages: BTreeMap<String, LanguageEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, &path.display().to_string())
    }

    pub fn parse(text: &str, base_dir: PathBuf, label: &str) -> Result<Self> {
        let mut manifest = Manifest {
            base_dir,
            languages: BTreeMap::new(),
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |message: String| Error::Parse {
                file: label.to_string(),
                line: lineno + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let parts: Vec<&str> = key.split('.').collect();
            let (lang, split, kind) = match parts.as_slice() {
                [lang, split] => (*lang, *split, "conllu"),
                [lang, split, kind] => (*lang, *split, *kind),
                _ => return Err(perr(format!("malformed key {key:?}"))),
            };
            let split: Split = split.parse().map_err(|e: Error| perr(e.to_string()))?;
            let entry = manifest.languages.entry(lang.to_string()).or_default();
            match kind {
                "conllu" => {
                    entry.conllu.insert(split, PathBuf::from(value));
                }
                "emb" => {
                    entry.emb.insert(split, value.to_string());
                }
                "rand" => {
                    entry.rand.insert(split, value.to_string());
                }
                other => return Err(perr(format!("unknown file kind {other:?}"))),
            }
        }
        Ok(manifest)
    }

    pub fn language_codes(&self) -> Vec<String> {
        self.languages.keys().cloned().collect()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn entry(&self, lang: &str) -> Result<&LanguageEntry> {
        self.languages
            .get(lang)
            .ok_or_else(|| Error::InvalidArgument(format!("language {lang:?} not in manifest")))
    }

    pub fn conllu_path(&self, lang: &str, split: Split) -> Result<PathBuf> {
        let entry = self.entry(lang)?;
        entry
            .conllu
            .get(&split)
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::InvalidArgument(format!("no {split} treebank for {lang:?}")))
    }

    pub fn emb_path(&self, lang: &str, split: Split, layer: u32) -> Result<PathBuf> {
        let entry = self.entry(lang)?;
        let template = entry.emb.get(&split).ok_or_else(|| {
            Error::InvalidArgument(format!("no {split} embeddings for {lang:?}"))
        })?;
        Ok(self.substitute(template, layer))
    }

    /// Random-baseline embeddings, if the manifest lists them.
    pub fn rand_emb_path(&self, lang: &str, split: Split, layer: u32) -> Result<Option<PathBuf>> {
        let entry = self.entry(lang)?;
        Ok(entry.rand.get(&split).map(|t| self.substitute(t, layer)))
    }

    fn substitute(&self, template: &str, layer: u32) -> PathBuf {
        self.resolve(Path::new(&template.replace("{layer}", &layer.to_string())))
    }

    pub fn load_treebank(&self, lang: &str, split: Split) -> Result<Treebank> {
        load_conllu(self.conllu_path(lang, split)?, lang)
    }

    /// Renders the manifest back to text; keys are sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (lang, entry) in &self.languages {
            for (split, p) in &entry.conllu {
                out.push_str(&format!("{lang}.{split} = {}\n", p.display()));
            }
            for (split, t) in &entry.emb {
                out.push_str(&format!("{lang}.{split}.emb = {t}\n"));
            }
            for (split, t) in &entry.rand {
                out.push_str(&format!("{lang}.{split}.rand = {t}\n"));
            }
        }
        out
    }
}
