//! Flat `key = value` run configuration with section prefixes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lgdkit::{Error, Result};
use sha2::{Digest, Sha256};

const SECTIONS: &[&str] = &[
    "data", "screen", "adf", "model", "fit", "cv", "mars", "predict", "generator",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("{source}:{}: {msg}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let section = key.split('.').next().unwrap_or_default();
            if key != "seed" && (!SECTIONS.contains(&section) || !key.contains('.')) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(bad(format!("key `{key}` is set twice")));
            }
        }
        Ok(Self {
            entries,
            base_dir: PathBuf::new(),
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing config key `{key}`")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    /// Comma-separated list; empty entries are dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Entries under `prefix.`, with the prefix removed.
    pub fn section<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, v.as_str()))
        })
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        }))
    }

    pub fn seed(&self) -> Result<Option<u64>> {
        self.parsed("seed")
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed()?
            .ok_or_else(|| Error::Config("this command is stochastic; set `seed` or pass --seed".into()))
    }

    /// SHA-256 of the canonical `key=value` listing, sorted by key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = RunConfig::parse(
            "# run\nseed = 7\nscreen.leads = 0, 12 # both\nmodel.champion = A.B, C\n\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), Some(7));
        assert_eq!(cfg.list("screen.leads"), vec!["0", "12"]);
        assert_eq!(cfg.section("model").collect::<Vec<_>>(), vec![("champion", "A.B, C")]);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(RunConfig::parse("bogus.key = 1", "t").is_err());
        assert!(RunConfig::parse("data = 1", "t").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2", "t").is_err());
        assert!(RunConfig::parse("seed 1", "t").is_err());
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = RunConfig::parse("seed = 1\nfit.models = a", "t").unwrap();
        let b = RunConfig::parse("fit.models=a\n\n# c\nseed=1", "t").unwrap();
        let c = RunConfig::parse("seed = 2\nfit.models = a", "t").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
