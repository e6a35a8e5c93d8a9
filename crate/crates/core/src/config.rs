//! Run configuration: communities, ban times, categories and input paths.
//!
//! ```toml
//! seed = 7
//! bot_list = "bots.txt"
//! remove_top = 1000
//!
//! [[community]]
//! name = "example"
//! category = "dark jokes"
//! ban_time = 1593000000
//! archive = ["shard0.ndjson", "shard1.ndjson"]
//! baseline = "baseline.ndjson"
//! histories = "histories.ndjson"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Numeric keys at the top level override the built-in defaults; command-line
//! flags override both.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::{Error, Result};

pub const DEFAULT_CATEGORY: &str = "uncategorized";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bot_list: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remove_top: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_users: Option<usize>,
    #[serde(default, rename = "community")]
    pub communities: Vec<CommunityConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityConfig {
    pub name: String,
    #[serde(default = "default_category")]
    pub category: String,
    pub ban_time: i64,
    #[serde(deserialize_with = "one_or_many")]
    pub archive: Vec<PathBuf>,
    #[serde(deserialize_with = "one_or_many")]
    pub baseline: Vec<PathBuf>,
    /// Platform-wide comment histories of the community's users; defaults to `archive`.
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub histories: Vec<PathBuf>,
}

fn default_category() -> String {
    DEFAULT_CATEGORY.into()
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<PathBuf>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Paths {
        One(PathBuf),
        Many(Vec<PathBuf>),
    }
    Ok(match Paths::deserialize(de)? {
        Paths::One(p) => vec![p],
        Paths::Many(v) => v,
    })
}

impl Config {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.communities.is_empty() {
            return Err(Error::invalid("config lists no communities"));
        }
        let mut seen = BTreeSet::new();
        for c in &self.communities {
            let safe = !c.name.is_empty()
                && c.name.chars().all(|ch| ch.is_alphanumeric() || ch == '_' || ch == '-');
            if !safe {
                return Err(Error::invalid(format!("community name {:?} must be alphanumeric, '_' or '-'", c.name)));
            }
            if !seen.insert(c.name.to_lowercase()) {
                return Err(Error::invalid(format!("community {:?} listed twice", c.name)));
            }
            if c.archive.is_empty() || c.baseline.is_empty() {
                return Err(Error::invalid(format!("community {:?} needs archive and baseline paths", c.name)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn resolve_all(&self, paths: &[PathBuf]) -> Vec<PathBuf> {
        paths.iter().map(|p| self.resolve(p)).collect()
    }

    pub fn community(&self, name: &str) -> Option<&CommunityConfig> {
        self.communities.iter().find(|c| c.name == name)
    }

    pub fn category_of(&self, name: &str) -> &str {
        self.community(name).map_or(DEFAULT_CATEGORY, |c| c.category.as_str())
    }
}

impl CommunityConfig {
    pub fn history_paths(&self) -> &[PathBuf] {
        if self.histories.is_empty() {
            &self.archive
        } else {
            &self.histories
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3
bot_list = "bots.txt"
remove_top = 50

[[community]]
name = "alpha"
category = "dark jokes"
ban_time = 100
archive = ["a0.ndjson", "a1.ndjson"]
baseline = "base.ndjson"

[[community]]
name = "beta"
ban_time = 200
archive = "b.ndjson"
baseline = "/abs/base.ndjson"
histories = "bh.ndjson"
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = Config::parse(SAMPLE, "/cfg").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.remove_top, Some(50));
        assert_eq!(cfg.top_k, None);
        let alpha = &cfg.communities[0];
        assert_eq!(alpha.archive.len(), 2);
        assert_eq!(alpha.history_paths(), alpha.archive.as_slice());
        assert_eq!(cfg.category_of("beta"), DEFAULT_CATEGORY);
        assert_eq!(cfg.category_of("alpha"), "dark jokes");
        let beta = &cfg.communities[1];
        assert_eq!(cfg.resolve(&beta.archive[0]), PathBuf::from("/cfg/b.ndjson"));
        assert_eq!(cfg.resolve(&beta.baseline[0]), PathBuf::from("/abs/base.ndjson"));
        assert_eq!(beta.history_paths(), &[PathBuf::from("bh.ndjson")]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::parse(SAMPLE, "/cfg").unwrap();
        let again = Config::parse(&cfg.to_toml(), "/cfg").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::parse("seed = 1", ".").is_err());
        let dup = "[[community]]\nname='a'\nban_time=1\narchive='x'\nbaseline='y'\n".repeat(2);
        assert!(Config::parse(&dup, ".").is_err());
        assert!(Config::parse("[[community]]\nname='a/b'\nban_time=1\narchive='x'\nbaseline='y'\n", ".").is_err());
        assert!(Config::parse("typo = 1\n[[community]]\nname='a'\nban_time=1\narchive='x'\nbaseline='y'\n", ".").is_err());
    }
}
