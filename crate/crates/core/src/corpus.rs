//! Tokenizer and mergeable word-frequency tables.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub min_token_length: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { lowercase: true, strip_urls: true, min_token_length: 2 }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_length == 0 {
            return Err(Error::invalid("min_token_length must be at least 1"));
        }
        Ok(())
    }
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").expect("valid url regex"))
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn push_token(out: &mut Vec<String>, run: &str, min_len: usize) {
    let word = run.trim_matches(is_apostrophe);
    if word.chars().count() >= min_len {
        out.push(word.replace('\u{2019}', "'"));
    }
}

/// Split text into word tokens: maximal runs of letters, digits and
/// apostrophes, with leading/trailing apostrophes trimmed.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let stripped;
    let mut text = text;
    if cfg.strip_urls {
        stripped = url_pattern().replace_all(text, " ");
        text = &stripped;
    }
    let lowered;
    if cfg.lowercase {
        lowered = text.to_lowercase();
        text = &lowered;
    }
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let in_word = c.is_alphanumeric() || is_apostrophe(c);
        match (in_word, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push_token(&mut out, &text[s..i], cfg.min_token_length);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push_token(&mut out, &text[s..], cfg.min_token_length);
    }
    out
}

/// Word counts plus the total token count. Entries with zero count are
/// never stored, and `total` always equals the sum of the counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table = FrequencyTable::new();
        for t in tokens {
            table.add(t.as_ref(), 1);
        }
        table
    }

    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut table = FrequencyTable::new();
        for (w, c) in counts {
            let w: String = w.into();
            table.add(&w, c);
        }
        table
    }

    pub fn add(&mut self, word: &str, count: u64) {
        if count == 0 {
            return;
        }
        match self.counts.get_mut(word) {
            Some(c) => *c += count,
            None => {
                self.counts.insert(word.to_string(), count);
            }
        }
        self.total += count;
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct words.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Relative frequency; 0 for absent words or an empty table.
    pub fn rate(&self, word: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.get(word) as f64 / self.total as f64
        }
    }

    /// Entries in ascending word order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn merge_from(&mut self, other: &FrequencyTable) {
        for (w, c) in other.iter() {
            self.add(w, c);
        }
    }

    /// Entries sorted by count descending, then word ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn top_words(&self, k: usize) -> Vec<&str> {
        self.ranked().into_iter().take(k).map(|(w, _)| w).collect()
    }

    pub fn remove_words(&mut self, words: &HashSet<&str>) {
        let removed: u64 = words.iter().filter_map(|w| self.counts.remove(*w)).sum();
        self.total -= removed;
    }

    /// Persist as `#total <N>` followed by `word<TAB>count` lines in ranked order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "#total {}", self.total)?;
        for (w, c) in self.ranked() {
            if w.contains(['\t', '\n', '\r']) {
                return Err(Error::invalid(format!("word {w:?} cannot be stored in a tsv table")));
            }
            writeln!(out, "{w}\t{c}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        const WHAT: &str = "frequency table";
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let declared: u64 = header
            .strip_prefix("#total ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::Format { what: WHAT, line: 1, reason: "expected `#total <N>` header".into() })?;
        let mut table = FrequencyTable::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            let (word, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Format { what: WHAT, line: lineno, reason: "missing tab".into() })?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::Format { what: WHAT, line: lineno, reason: format!("bad count {count:?}") })?;
            if count == 0 || table.contains(word) {
                return Err(Error::Format { what: WHAT, line: lineno, reason: format!("zero or repeated entry {word:?}") });
            }
            table.add(word, count);
        }
        if table.total != declared {
            return Err(Error::Format {
                what: WHAT,
                line: 1,
                reason: format!("header total {declared} but counts sum to {}", table.total),
            });
        }
        Ok(table)
    }
}

/// Count a token stream.
pub fn build_table<I, S>(tokens: I) -> FrequencyTable
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    FrequencyTable::from_tokens(tokens)
}

pub fn merge(a: &FrequencyTable, b: &FrequencyTable) -> FrequencyTable {
    let (mut big, small) = if a.len() >= b.len() { (a.clone(), b) } else { (b.clone(), a) };
    big.merge_from(small);
    big
}

/// Delete the `k` most frequent baseline words (count descending, then word
/// ascending) from both the community and the baseline table.
pub fn remove_top_k(
    community: &FrequencyTable,
    baseline: &FrequencyTable,
    k: usize,
) -> (FrequencyTable, FrequencyTable) {
    let top: HashSet<&str> = baseline.top_words(k).into_iter().collect();
    let mut community = community.clone();
    let mut baseline_out = baseline.clone();
    community.remove_words(&top);
    baseline_out.remove_words(&top);
    (community, baseline_out)
}
