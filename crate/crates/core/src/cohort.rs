//! User ranking, top/random cohort selection and omission rules.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::ingest::{sample_id_range, Comment, DELETED_AUTHOR};
use crate::shift::UserWindowStats;
use crate::Result;

pub const DEFAULT_TOP_USERS: usize = 100;
pub const DEFAULT_RANDOM_USERS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRank {
    pub username: String,
    pub preban_comments: u64,
}

/// Users by comment count descending, ties by username ascending.
pub fn rank_users<'a, I>(comments: I) -> Vec<UserRank>
where
    I: IntoIterator<Item = &'a Comment>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for c in comments {
        *counts.entry(c.author.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<UserRank> = counts
        .into_iter()
        .map(|(u, n)| UserRank { username: u.to_string(), preban_comments: n })
        .collect();
    ranked.sort_by(|a, b| b.preban_comments.cmp(&a.preban_comments).then_with(|| a.username.cmp(&b.username)));
    ranked
}

/// Usernames of known automated accounts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BotList {
    names: HashSet<String>,
}

impl BotList {
    /// One username per line; blank lines and `#` comments are ignored.
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut names = HashSet::new();
        for line in input.lines() {
            let line = line?;
            let name = line.split('#').next().unwrap_or("").trim();
            if !name.is_empty() {
                names.insert(name.to_string());
            }
        }
        Ok(BotList { names })
    }

    pub fn contains(&self, username: &str) -> bool {
        self.names.contains(username)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// True for bots and for the deleted-account sentinel.
    pub fn excludes(&self, username: &str) -> bool {
        username == DELETED_AUTHOR || self.contains(username)
    }
}

impl<S: Into<String>> FromIterator<S> for BotList {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        BotList { names: iter.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmissionReason {
    Bot,
    Deleted,
    ZeroPostban,
    ZeroVocab,
}

impl OmissionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            OmissionReason::Bot => "bot",
            OmissionReason::Deleted => "deleted",
            OmissionReason::ZeroPostban => "zero_postban",
            OmissionReason::ZeroVocab => "zero_vocab",
        }
    }
}

impl fmt::Display for OmissionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortTag {
    Top,
    Random,
}

impl CohortTag {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortTag::Top => "top",
            CohortTag::Random => "random",
        }
    }
}

impl fmt::Display for CohortTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortSelection {
    pub top: Vec<UserRank>,
    pub random: Vec<UserRank>,
    /// Ranked users that were skipped as bots or deleted accounts.
    pub omitted: BTreeMap<String, OmissionReason>,
}

impl CohortSelection {
    pub fn members(&self) -> impl Iterator<Item = (&UserRank, CohortTag)> + '_ {
        self.top
            .iter()
            .map(|u| (u, CohortTag::Top))
            .chain(self.random.iter().map(|u| (u, CohortTag::Random)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = crate::csv_writer(out);
        wtr.write_record(["username", "cohort", "preban_comments"])?;
        for (u, tag) in self.members() {
            wtr.write_record([u.username.as_str(), tag.as_str(), &u.preban_comments.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_omissions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = crate::csv_writer(out);
        wtr.write_record(["username", "reason"])?;
        for (u, r) in &self.omitted {
            wtr.write_record([u.as_str(), r.as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read back the cohort and omission files written above.
    pub fn read_csv<R: Read, S: Read>(cohorts: R, omissions: S) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            username: String,
            cohort: CohortTag,
            preban_comments: u64,
        }
        #[derive(Deserialize)]
        struct Omitted {
            username: String,
            reason: OmissionReason,
        }
        let mut sel = CohortSelection::default();
        for row in csv::Reader::from_reader(cohorts).deserialize::<Row>() {
            let row = row?;
            let u = UserRank { username: row.username, preban_comments: row.preban_comments };
            match row.cohort {
                CohortTag::Top => sel.top.push(u),
                CohortTag::Random => sel.random.push(u),
            }
        }
        for row in csv::Reader::from_reader(omissions).deserialize::<Omitted>() {
            let row = row?;
            sel.omitted.insert(row.username, row.reason);
        }
        Ok(sel)
    }
}

/// Take the first `n_top` eligible users as the top cohort and a seeded
/// uniform sample of `n_random` of the remaining eligible users as the
/// random cohort. Bots and deleted accounts are never eligible.
pub fn select_cohorts(ranked: &[UserRank], bots: &BotList, n_top: usize, n_random: usize, seed: u64) -> CohortSelection {
    let mut sel = CohortSelection::default();
    let mut rest: Vec<&UserRank> = Vec::new();
    for u in ranked {
        if u.username == DELETED_AUTHOR {
            sel.omitted.insert(u.username.clone(), OmissionReason::Deleted);
        } else if bots.contains(&u.username) {
            sel.omitted.insert(u.username.clone(), OmissionReason::Bot);
        } else if sel.top.len() < n_top {
            sel.top.push(u.clone());
        } else {
            rest.push(u);
        }
    }
    if sel.top.len() < n_top {
        log::warn!("only {} eligible users for a top cohort of {n_top}", sel.top.len());
    }
    if rest.len() < n_random {
        log::warn!("only {} eligible users for a random cohort of {n_random}", rest.len());
    }
    let take = n_random.min(rest.len());
    if take > 0 {
        let picks = sample_id_range(0, rest.len() as u64 - 1, take, seed).expect("sample fits the eligible range");
        sel.random = picks.into_iter().map(|i| rest[i as usize].clone()).collect();
    }
    sel
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Omission {
    Keep,
    Omit(OmissionReason),
}

/// Users with no post-ban comments are dropped first; then users who never
/// used the in-group vocabulary in either window.
pub fn apply_omission_rules(stats: &UserWindowStats) -> Omission {
    if stats.post_comments == 0 {
        Omission::Omit(OmissionReason::ZeroPostban)
    } else if stats.pre_ingroup + stats.post_ingroup == 0 {
        Omission::Omit(OmissionReason::ZeroVocab)
    } else {
        Omission::Keep
    }
}

/// A user dropped after window statistics were computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmissionRecord {
    pub username: String,
    pub cohort: CohortTag,
    pub reason: OmissionReason,
    /// Set when the user also met the zero-vocabulary condition.
    pub also_zero_vocab: bool,
}

impl OmissionRecord {
    pub fn from_stats(stats: &UserWindowStats, cohort: CohortTag) -> Option<Self> {
        match apply_omission_rules(stats) {
            Omission::Keep => None,
            Omission::Omit(reason) => Some(OmissionRecord {
                username: stats.username.clone(),
                cohort,
                reason,
                also_zero_vocab: reason == OmissionReason::ZeroPostban && stats.pre_ingroup + stats.post_ingroup == 0,
            }),
        }
    }
}

pub fn write_omission_records<W: Write>(out: W, records: &[OmissionRecord]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record(["username", "cohort", "reason", "also_zero_vocab"])?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_omission_records<R: Read>(input: R) -> Result<Vec<OmissionRecord>> {
    Ok(csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Omission counts for one cohort, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmissionTally {
    pub zero_postban: usize,
    pub zero_vocab: usize,
}

impl OmissionTally {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a OmissionRecord>, cohort: CohortTag) -> Self {
        let mut t = OmissionTally::default();
        for r in records.into_iter().filter(|r| r.cohort == cohort) {
            match r.reason {
                OmissionReason::ZeroPostban => t.zero_postban += 1,
                OmissionReason::ZeroVocab => t.zero_vocab += 1,
                OmissionReason::Bot | OmissionReason::Deleted => {}
            }
        }
        t
    }

    /// `community:(zero_postban, zero_vocab)`
    pub fn report_line(&self, community: &str) -> String {
        format!("{community}:({}, {})", self.zero_postban, self.zero_vocab)
    }
}
