//! Per-user window statistics and normalized shift metrics.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cohort::CohortTag;
use crate::corpus::{tokenize, TokenizerConfig};
use crate::ingest::{window_split, Comment, TimeWindow};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserWindowStats {
    pub username: String,
    pub pre_comments: u64,
    pub post_comments: u64,
    pub pre_words: u64,
    pub post_words: u64,
    /// Token occurrences of vocabulary words.
    pub pre_ingroup: u64,
    pub post_ingroup: u64,
}

impl UserWindowStats {
    pub fn empty(username: impl Into<String>) -> Self {
        UserWindowStats { username: username.into(), ..Default::default() }
    }

    /// Add one comment's tokens to the pre-ban (`pre = true`) or post-ban window.
    pub fn record<S: AsRef<str>>(&mut self, tokens: &[S], vocab: &HashSet<&str>, pre: bool) {
        let words = tokens.len() as u64;
        let ingroup = count_ingroup(tokens, vocab);
        if pre {
            self.pre_comments += 1;
            self.pre_words += words;
            self.pre_ingroup += ingroup;
        } else {
            self.post_comments += 1;
            self.post_words += words;
            self.post_ingroup += ingroup;
        }
    }

    pub fn rate_before(&self) -> f64 {
        rate(self.pre_ingroup, self.pre_words)
    }

    pub fn rate_after(&self) -> f64 {
        rate(self.post_ingroup, self.post_words)
    }
}

fn rate(ingroup: u64, words: u64) -> f64 {
    if words == 0 {
        0.0
    } else {
        ingroup as f64 / words as f64
    }
}

/// Occurrences of vocabulary words in `tokens`, counting multiplicity.
pub fn count_ingroup<S: AsRef<str>>(tokens: &[S], vocab: &HashSet<&str>) -> u64 {
    tokens.iter().filter(|t| vocab.contains(t.as_ref())).count() as u64
}

/// `(after - before) / (after + before)`, on `[-1, 1]`.
pub fn normalized_shift(before: f64, after: f64) -> Result<f64> {
    if !(before >= 0.0 && after >= 0.0) {
        return Err(Error::invalid(format!("shift inputs must be non-negative, got ({before}, {after})")));
    }
    let denom = after + before;
    if denom == 0.0 {
        return Err(Error::Undefined("shift of two zero quantities".into()));
    }
    Ok(((after - before) / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub username: String,
    pub cohort: CohortTag,
    pub pre_comments: u64,
    pub post_comments: u64,
    pub activity_shift: f64,
    pub r_before: f64,
    pub r_after: f64,
    pub vocab_shift: Option<f64>,
}

pub fn build_shift_record(stats: &UserWindowStats, cohort: CohortTag) -> Result<ShiftRecord> {
    let activity_shift = normalized_shift(stats.pre_comments as f64, stats.post_comments as f64)?;
    let r_before = stats.rate_before();
    let r_after = stats.rate_after();
    let vocab_shift = normalized_shift(r_before, r_after).ok();
    Ok(ShiftRecord {
        username: stats.username.clone(),
        cohort,
        pre_comments: stats.pre_comments,
        post_comments: stats.post_comments,
        activity_shift,
        r_before,
        r_after,
        vocab_shift,
    })
}

/// Window statistics for each requested user over their platform-wide
/// history. Users without any comment in either window get zero stats.
pub fn collect_window_stats(
    history: &[Comment],
    window: &TimeWindow,
    users: &[&str],
    vocab: &HashSet<&str>,
    cfg: &TokenizerConfig,
) -> Vec<UserWindowStats> {
    let wanted: HashMap<&str, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut stats: Vec<UserWindowStats> = users.iter().map(|&u| UserWindowStats::empty(u)).collect();
    let relevant = history.iter().filter(|c| wanted.contains_key(c.author.as_str()));
    let split = window_split(relevant, window);
    for (comments, pre) in [(&split.pre, true), (&split.post, false)] {
        for c in comments {
            let tokens = tokenize(&c.body, cfg);
            stats[wanted[c.author.as_str()]].record(&tokens, vocab, pre);
        }
    }
    stats
}

pub fn write_shift_csv<W: Write>(out: W, records: &[ShiftRecord]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record([
        "username",
        "cohort",
        "pre_comments",
        "post_comments",
        "activity_shift",
        "r_before",
        "r_after",
        "vocab_shift",
    ])?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_shift_csv<R: Read>(input: R) -> Result<Vec<ShiftRecord>> {
    Ok(csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?)
}
