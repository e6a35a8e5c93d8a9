//! Per-word Jensen-Shannon divergence between a baseline and a community.
//!
//! With baseline rates `p`, community rates `q` and the equal-weight mixture
//! `m = (p + q) / 2`, word `w` contributes
//!
//! ```text
//! δ_w = -m_w log2 m_w + ½ p_w log2 p_w + ½ q_w log2 q_w
//!     = ½ p_w log2(p_w / m_w) + ½ q_w log2(q_w / m_w)
//! ```
//!
//! and the divergence is `Σ δ_w`, which lies in `[0, 1]` bits.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::FrequencyTable;
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordContribution {
    pub word: String,
    #[serde(rename = "contribution_bits")]
    pub contribution: f64,
    #[serde(rename = "baseline_rate")]
    pub p_rate: f64,
    #[serde(rename = "community_rate")]
    pub q_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordShift {
    /// One entry per word of the union vocabulary, in ascending word order.
    pub contributions: Vec<WordContribution>,
    /// Total divergence in bits.
    pub total: f64,
}

// ½ x log2(x / m), with 0 log 0 = 0
#[inline]
fn half_term(x: f64, m: f64) -> f64 {
    if x > 0.0 {
        0.5 * x * (x / m).log2()
    } else {
        0.0
    }
}

/// Compute every word's contribution over the union of both vocabularies.
pub fn jsd_contributions(baseline: &FrequencyTable, community: &FrequencyTable) -> Result<WordShift> {
    if baseline.total() == 0 || community.total() == 0 {
        return Err(Error::invalid("jensen-shannon divergence needs two non-empty tables"));
    }
    let n_p = baseline.total() as f64;
    let n_q = community.total() as f64;

    let mut union: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (w, c) in baseline.iter() {
        union.entry(w).or_default().0 = c;
    }
    for (w, c) in community.iter() {
        union.entry(w).or_default().1 = c;
    }

    let mut contributions = Vec::with_capacity(union.len());
    // total accumulated as count-weighted log ratios and divided once at the end
    let (mut weighted_p, mut weighted_q) = (0.0f64, 0.0f64);
    for (w, (cp, cq)) in union {
        let p = cp as f64 / n_p;
        let q = cq as f64 / n_q;
        let m = 0.5 * p + 0.5 * q;
        let log_p = if cp > 0 { (p / m).log2() } else { 0.0 };
        let log_q = if cq > 0 { (q / m).log2() } else { 0.0 };
        weighted_p += cp as f64 * log_p;
        weighted_q += cq as f64 * log_q;
        let delta = (half_term(p, m) + half_term(q, m)).max(0.0);
        contributions.push(WordContribution { word: w.to_string(), contribution: delta, p_rate: p, q_rate: q });
    }
    let total = (0.5 * weighted_p / n_p + 0.5 * weighted_q / n_q).clamp(0.0, 1.0);
    Ok(WordShift { contributions, total })
}

/// Ranked in-group vocabulary of one community.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VocabularyList {
    pub community: String,
    pub entries: Vec<WordContribution>,
}

impl VocabularyList {
    pub fn new(community: impl Into<String>, entries: Vec<WordContribution>) -> Self {
        VocabularyList { community: community.into(), entries }
    }

    pub fn named(mut self, community: impl Into<String>) -> Self {
        self.community = community.into();
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.word.as_str())
    }

    pub fn word_set(&self) -> HashSet<&str> {
        self.words().collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = crate::csv_writer(out);
        wtr.write_record(["word", "contribution_bits", "baseline_rate", "community_rate"])?;
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(community: impl Into<String>, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<WordContribution>, _>>()?;
        Ok(VocabularyList { community: community.into(), entries })
    }
}

/// Sort by contribution descending, ties by word ascending.
pub(crate) fn rank_descending(entries: &mut [WordContribution]) {
    entries.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then_with(|| a.word.cmp(&b.word))
    });
}

/// Keep words over-represented in the community (`q_rate > p_rate`), ranked
/// by contribution, truncated to `k`.
pub fn top_k_ingroup(contribs: &[WordContribution], k: usize) -> VocabularyList {
    let mut entries: Vec<WordContribution> =
        contribs.iter().filter(|c| c.q_rate > c.p_rate).cloned().collect();
    rank_descending(&mut entries);
    if entries.len() < k {
        log::warn!("only {} over-represented words available for a top-{k} vocabulary", entries.len());
    }
    entries.truncate(k);
    VocabularyList::new("", entries)
}
