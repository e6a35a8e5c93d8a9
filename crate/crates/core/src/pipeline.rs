//! File-based driver for the analysis stages.
//!
//! Every stage reads the files written by earlier stages and writes its own
//! outputs, so stages can be rerun individually. Per-community work lives in
//! `<out>/<community>/`; cross-community tables and `manifest.json` live in
//! `<out>/`. Independent communities are processed on separate threads and
//! gathered in config order before anything is written at the top level.
//!
//! | stage            | outputs                                                      |
//! |------------------|--------------------------------------------------------------|
//! | ingest           | `community.tsv`, `baseline.tsv`, `user_counts.csv`, `ingest.json` |
//! | sample-baseline  | `baseline_ids.txt`, `baseline_sample.ndjson`                 |
//! | vocab jsd        | `vocab_jsd.csv`, `jsd.json`                                  |
//! | vocab sage       | `sage_eta.csv`, `vocab_sage.csv`, `sage.json`                |
//! | cohorts          | `cohorts.csv`, `omissions.csv`                               |
//! | shifts           | `shifts_<m>.csv`, `shift_omissions_<m>.csv`                  |
//! | stats            | `tests_<m>.csv`                                              |
//! | summarize        | `summary_<m>.csv`, `omissions_report_<m>.txt`                |
//! | overlap          | `overlap_matrix_<m>.csv`, `overlap_matches_<m>.csv`, `overlap_pairs_<m>.csv`, `jsd_sage_overlap.csv` |

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cohort::{
    read_omission_records, select_cohorts, write_omission_records, BotList, CohortSelection, CohortTag,
    OmissionRecord, UserRank, DEFAULT_RANDOM_USERS, DEFAULT_TOP_USERS,
};
use crate::config::{CommunityConfig, Config};
use crate::corpus::{remove_top_k, tokenize, FrequencyTable, TokenizerConfig};
use crate::deobfuscate::{match_obscured, read_candidates, read_obscured, write_matches_csv};
use crate::divergence::{jsd_contributions, top_k_ingroup, VocabularyList, DEFAULT_TOP_K};
use crate::ingest::remote::{ArchiveClient, ArchiveQuery};
use crate::ingest::{read_archive_shards, sample_id_range, encode_base36, write_archive, Comment, ParsedArchive, TimeWindow};
use crate::report::{
    overlap_matrix, summarize, write_method_overlap_csv, write_summary_csv, omission_report, CommunitySummary,
    MethodOverlap, ACTIVITY, TOP_VS_RANDOM, VOCAB,
};
use crate::sage::{estimate_population_baseline, fit_sage, sage_top_k, vocab_overlap, write_overlap_csv, SageConfig};
use crate::shift::{build_shift_record, collect_window_stats, read_shift_csv, write_shift_csv, ShiftRecord};
use crate::stats::{
    bh_fdr, read_battery_csv, wilcoxon_rank_sum, wilcoxon_signed_rank, write_battery_csv, BatteryRow, TestMethod,
    TestResult, DEFAULT_ALPHA,
};
use crate::synth::{generate, SynthSpec};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_REMOVE_TOP: usize = 10_000;
pub const SYNTH_CONFIG: &str = "divlens.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMethod {
    Jsd,
    Sage,
}

impl VocabMethod {
    pub const ALL: [VocabMethod; 2] = [VocabMethod::Jsd, VocabMethod::Sage];

    pub fn as_str(self) -> &'static str {
        match self {
            VocabMethod::Jsd => "jsd",
            VocabMethod::Sage => "sage",
        }
    }

    pub fn vocab_file(self) -> String {
        format!("vocab_{self}.csv")
    }
}

impl fmt::Display for VocabMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsd" => Ok(VocabMethod::Jsd),
            "sage" => Ok(VocabMethod::Sage),
            other => Err(Error::invalid(format!("unknown vocabulary method {other:?}"))),
        }
    }
}

/// Resolved numeric parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub seed: u64,
    pub top_k: usize,
    pub remove_top: usize,
    pub window_days: u32,
    pub corpus_days: u32,
    pub top_users: usize,
    pub random_users: usize,
    pub tokenizer: TokenizerConfig,
    pub sage: SageConfig,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            seed: 0,
            top_k: DEFAULT_TOP_K,
            remove_top: DEFAULT_REMOVE_TOP,
            window_days: 60,
            corpus_days: 182,
            top_users: DEFAULT_TOP_USERS,
            random_users: DEFAULT_RANDOM_USERS,
            tokenizer: TokenizerConfig::default(),
            sage: SageConfig::default(),
        }
    }
}

impl Params {
    /// Defaults overridden by whatever the config file sets.
    pub fn from_config(cfg: &Config) -> Self {
        let d = Params::default();
        Params {
            seed: cfg.seed.unwrap_or(d.seed),
            top_k: cfg.top_k.unwrap_or(d.top_k),
            remove_top: cfg.remove_top.unwrap_or(d.remove_top),
            window_days: cfg.window_days.unwrap_or(d.window_days),
            corpus_days: cfg.corpus_days.unwrap_or(d.corpus_days),
            top_users: cfg.top_users.unwrap_or(d.top_users),
            random_users: cfg.random_users.unwrap_or(d.random_users),
            ..d
        }
    }

    pub fn window(&self, ban_time: i64) -> Result<TimeWindow> {
        TimeWindow::new(ban_time, self.window_days, self.window_days, self.corpus_days)
    }
}

/// Stable per-community, per-purpose seed.
pub fn derive_seed(seed: u64, community: &str, purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in community.bytes().chain([0]).chain(purpose.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub community: String,
    pub comments: usize,
    pub deleted_comments: usize,
    pub outside_window: usize,
    pub malformed: usize,
    pub submissions: usize,
    pub users: usize,
    pub community_tokens: u64,
    pub first_id: u64,
    pub last_id: u64,
    pub baseline_comments: u64,
    pub baseline_malformed: usize,
    pub baseline_tokens: u64,
}

/// Where `ingest` reads a community's comments from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveSource {
    Local,
    /// The archive service named by the environment; the fetched comments
    /// are kept as `archive.ndjson` in the community directory.
    Remote,
}

/// Where `sample-baseline` looks up the sampled IDs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineSource {
    IdsOnly,
    Archive(Vec<PathBuf>),
    Remote,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: Config,
    pub params: Params,
    pub out_dir: PathBuf,
    only: Option<String>,
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?))
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut out = create_file(path)?;
    f(&mut out)?;
    out.flush().map_err(|e| Error::file(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open_file(path)?)?)
}

fn in_parallel<'a, T, F>(communities: &[&'a CommunityConfig], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&'a CommunityConfig) -> Result<T> + Sync,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = communities.iter().map(|&c| scope.spawn(|| f(c))).collect();
        handles.into_iter().map(|h| h.join().expect("community worker panicked")).collect()
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct UserCountRow {
    username: String,
    preban_comments: u64,
}

impl Pipeline {
    pub fn new(config: Config, params: Params, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        params.tokenizer.validate()?;
        params.window(0)?;
        Ok(Pipeline { config, params, out_dir: out_dir.into(), only: None })
    }

    /// Restrict per-community stages to one community.
    pub fn only(mut self, community: Option<String>) -> Result<Self> {
        if let Some(name) = &community {
            if self.config.community(name).is_none() {
                return Err(Error::invalid(format!("community {name:?} is not in the config")));
            }
        }
        self.only = community;
        Ok(self)
    }

    pub fn communities(&self) -> Vec<&CommunityConfig> {
        self.config.communities.iter().filter(|c| self.only.as_ref().is_none_or(|n| *n == c.name)).collect()
    }

    pub fn community_dir(&self, community: &str) -> PathBuf {
        self.out_dir.join(community)
    }

    pub fn community_file(&self, community: &str, file: &str) -> PathBuf {
        self.community_dir(community).join(file)
    }

    pub fn root_file(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    fn record_stage(&self, stage: &str, details: BTreeMap<String, Value>) -> Result<()> {
        let path = self.root_file(MANIFEST);
        let mut manifest: Value = if path.exists() { read_json(&path)? } else { json!({}) };
        let obj = manifest.as_object_mut().ok_or_else(|| Error::invalid("manifest is not a JSON object"))?;
        obj.insert("tool".into(), json!("divlens"));
        obj.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        obj.insert("parameters".into(), serde_json::to_value(&self.params)?);
        obj.insert("communities".into(), serde_json::to_value(&self.config.communities)?);
        obj.insert("bot_list".into(), serde_json::to_value(&self.config.bot_list)?);
        let stages = obj.entry("stages").or_insert_with(|| json!({}));
        let entry = stages
            .as_object_mut()
            .ok_or_else(|| Error::invalid("manifest stages is not a JSON object"))?
            .entry(stage)
            .or_insert_with(|| json!({}));
        if !entry.is_object() {
            *entry = json!({});
        }
        let entry = entry.as_object_mut().expect("object");
        for (k, v) in details {
            entry.insert(k, v);
        }
        write_json(&path, &manifest)
    }

    fn record_each<T: Serialize>(&self, stage: &str, reports: &[(String, T)]) -> Result<()> {
        let mut details = BTreeMap::new();
        for (name, r) in reports {
            details.insert(name.clone(), serde_json::to_value(r)?);
        }
        self.record_stage(stage, details)
    }

    pub fn ingest(&self, source: ArchiveSource) -> Result<Vec<IngestReport>> {
        let reports = in_parallel(&self.communities(), |c| self.ingest_one(c, source))?;
        let named: Vec<(String, &IngestReport)> = reports.iter().map(|r| (r.community.clone(), r)).collect();
        self.record_each("ingest", &named)?;
        Ok(reports)
    }

    fn ingest_one(&self, c: &CommunityConfig, source: ArchiveSource) -> Result<IngestReport> {
        let window = self.params.window(c.ban_time)?;
        let corpus = window.corpus_range();
        let archive = match source {
            ArchiveSource::Local => read_archive_shards(&self.config.resolve_all(&c.archive))?,
            ArchiveSource::Remote => {
                let client = ArchiveClient::from_env().ok_or_else(|| {
                    Error::invalid(format!("{} is not set", crate::ingest::remote::ARCHIVE_URL_ENV))
                })?;
                let query = ArchiveQuery {
                    community: Some(c.name.clone()),
                    after: Some(corpus.start - 1),
                    before: Some(corpus.end),
                    ..ArchiveQuery::default()
                };
                let fetched = client.fetch(&query)?;
                let path = self.community_file(&c.name, "archive.ndjson");
                write_with(&path, |out| write_archive(out, &fetched.comments))?;
                fetched
            }
        };
        let ParsedArchive { comments, malformed, submissions } = archive;
        let total = comments.len();
        let kept: Vec<Comment> = comments
            .into_iter()
            .filter(|x| x.community.eq_ignore_ascii_case(&c.name) && corpus.contains(&x.created_utc))
            .collect();
        if kept.is_empty() {
            return Err(Error::Degenerate(format!("{}: no comments inside the corpus window", c.name)));
        }
        let tok = &self.params.tokenizer;
        let mut table = FrequencyTable::new();
        let mut ids = Vec::with_capacity(kept.len());
        for x in &kept {
            table.merge_from(&FrequencyTable::from_tokens(tokenize(&x.body, tok)));
            ids.push(x.numeric_id()?);
        }
        let first_id = *ids.iter().min().expect("non-empty");
        let last_id = *ids.iter().max().expect("non-empty");

        let baseline = read_archive_shards(&self.config.resolve_all(&c.baseline))?;
        let mut baseline_table = FrequencyTable::new();
        let mut baseline_comments = 0u64;
        for x in baseline.comments.iter().filter(|x| corpus.contains(&x.created_utc)) {
            baseline_table.merge_from(&FrequencyTable::from_tokens(tokenize(&x.body, tok)));
            baseline_comments += 1;
        }
        if baseline_comments == 0 {
            return Err(Error::Degenerate(format!("{}: baseline has no comments inside the corpus window", c.name)));
        }

        let ranked = crate::cohort::rank_users(kept.iter());
        write_with(&self.community_file(&c.name, "community.tsv"), |out| table.write_tsv(out))?;
        write_with(&self.community_file(&c.name, "baseline.tsv"), |out| baseline_table.write_tsv(out))?;
        write_with(&self.community_file(&c.name, "user_counts.csv"), |out| {
            let mut wtr = crate::csv_writer(out);
            wtr.write_record(["username", "preban_comments"])?;
            for u in &ranked {
                wtr.serialize(UserCountRow { username: u.username.clone(), preban_comments: u.preban_comments })?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        let report = IngestReport {
            community: c.name.clone(),
            comments: kept.len(),
            deleted_comments: kept.iter().filter(|x| x.is_deleted()).count(),
            outside_window: total - kept.len(),
            malformed,
            submissions,
            users: ranked.len(),
            community_tokens: table.total(),
            first_id,
            last_id,
            baseline_comments,
            baseline_malformed: baseline.malformed,
            baseline_tokens: baseline_table.total(),
        };
        write_json(&self.community_file(&c.name, "ingest.json"), &report)?;
        log::info!("{}: {} comments, {} users, {} baseline comments", c.name, report.comments, report.users, baseline_comments);
        Ok(report)
    }

    fn ingest_report(&self, community: &str) -> Result<IngestReport> {
        read_json(&self.community_file(community, "ingest.json"))
    }

    fn read_table(&self, community: &str, file: &str) -> Result<FrequencyTable> {
        FrequencyTable::read_tsv(open_file(&self.community_file(community, file))?)
    }

    /// Draw `count` IDs uniformly from the community's ID range and, when a
    /// source is given, collect the comments carrying them.
    pub fn sample_baseline(&self, count: usize, source: &BaselineSource) -> Result<Vec<(String, usize)>> {
        let mut found = Vec::new();
        for c in self.communities() {
            let ingest = self.ingest_report(&c.name)?;
            let ids = sample_id_range(ingest.first_id, ingest.last_id, count, derive_seed(self.params.seed, &c.name, "baseline"))?;
            write_with(&self.community_file(&c.name, "baseline_ids.txt"), |out| {
                for &id in &ids {
                    writeln!(out, "{}", encode_base36(id))?;
                }
                Ok(())
            })?;
            let comments = match source {
                BaselineSource::IdsOnly => None,
                BaselineSource::Archive(paths) => {
                    let wanted: HashSet<u64> = ids.iter().copied().collect();
                    let parsed = read_archive_shards(paths)?;
                    Some(
                        parsed
                            .comments
                            .into_iter()
                            .filter(|x| x.numeric_id().is_ok_and(|i| wanted.contains(&i)))
                            .collect::<Vec<_>>(),
                    )
                }
                BaselineSource::Remote => {
                    let client = ArchiveClient::from_env().ok_or_else(|| {
                        Error::invalid(format!("{} is not set", crate::ingest::remote::ARCHIVE_URL_ENV))
                    })?;
                    Some(client.fetch_ids(&ids)?.comments)
                }
            };
            let n = match comments {
                Some(list) => {
                    write_with(&self.community_file(&c.name, "baseline_sample.ndjson"), |out| write_archive(out, &list))?;
                    list.len()
                }
                None => 0,
            };
            found.push((c.name.clone(), n));
        }
        let details = found
            .iter()
            .map(|(name, n)| (name.clone(), json!({ "requested": count, "retrieved": n })))
            .collect();
        self.record_stage("sample_baseline", details)?;
        Ok(found)
    }

    pub fn vocab(&self, method: VocabMethod) -> Result<Vec<VocabularyList>> {
        let results = in_parallel(&self.communities(), |c| self.vocab_one(c, method))?;
        let named: Vec<(String, Value)> = results.iter().map(|(l, v)| (l.community.clone(), v.clone())).collect();
        self.record_each(&format!("vocab_{method}"), &named)?;
        Ok(results.into_iter().map(|(l, _)| l).collect())
    }

    fn vocab_one(&self, c: &CommunityConfig, method: VocabMethod) -> Result<(VocabularyList, Value)> {
        let community = self.read_table(&c.name, "community.tsv")?;
        let baseline = self.read_table(&c.name, "baseline.tsv")?;
        let (list, details) = match method {
            VocabMethod::Jsd => {
                let (reduced_c, reduced_b) = remove_top_k(&community, &baseline, self.params.remove_top);
                let shift = jsd_contributions(&reduced_b, &reduced_c)?;
                let list = top_k_ingroup(&shift.contributions, self.params.top_k).named(&c.name);
                let details = json!({
                    "total_bits": shift.total,
                    "community_tokens_after_removal": reduced_c.total(),
                    "baseline_tokens_after_removal": reduced_b.total(),
                    "vocabulary": list.len(),
                });
                write_json(&self.community_file(&c.name, "jsd.json"), &details)?;
                (list, details)
            }
            VocabMethod::Sage => {
                let ingest = self.ingest_report(&c.name)?;
                let population = estimate_population_baseline(
                    &baseline,
                    ingest.baseline_comments,
                    ingest.first_id,
                    ingest.last_id,
                    &community,
                )?;
                let cfg = SageConfig { seed: derive_seed(self.params.sage.seed, &c.name, "sage"), ..self.params.sage.clone() };
                let fit = fit_sage(&community, &population, &cfg)?;
                write_with(&self.community_file(&c.name, "sage_eta.csv"), |out| fit.write_csv(out))?;
                let list = sage_top_k(&fit, self.params.top_k).named(&c.name);
                let details = json!({
                    "regularization": fit.regularization,
                    "iterations": fit.iterations,
                    "residual": fit.residual,
                    "positive_eta": fit.eta.iter().filter(|&&e| e > 0.0).count(),
                    "vocabulary": list.len(),
                });
                write_json(&self.community_file(&c.name, "sage.json"), &details)?;
                (list, details)
            }
        };
        write_with(&self.community_file(&c.name, &method.vocab_file()), |out| list.write_csv(out))?;
        Ok((list, details))
    }

    fn bot_list(&self) -> Result<BotList> {
        match &self.config.bot_list {
            Some(p) => BotList::parse(open_file(&self.config.resolve(p))?),
            None => Ok(BotList::default()),
        }
    }

    pub fn cohorts(&self) -> Result<Vec<CohortSelection>> {
        let bots = self.bot_list()?;
        let selections = in_parallel(&self.communities(), |c| {
            let rows: Vec<UserCountRow> = csv::Reader::from_reader(open_file(&self.community_file(&c.name, "user_counts.csv"))?)
                .deserialize()
                .collect::<std::result::Result<_, _>>()?;
            let ranked: Vec<UserRank> =
                rows.into_iter().map(|r| UserRank { username: r.username, preban_comments: r.preban_comments }).collect();
            let sel = select_cohorts(
                &ranked,
                &bots,
                self.params.top_users,
                self.params.random_users,
                derive_seed(self.params.seed, &c.name, "cohort"),
            );
            write_with(&self.community_file(&c.name, "cohorts.csv"), |out| sel.write_csv(out))?;
            write_with(&self.community_file(&c.name, "omissions.csv"), |out| sel.write_omissions_csv(out))?;
            Ok(sel)
        })?;
        let named: Vec<(String, Value)> = self
            .communities()
            .iter()
            .zip(&selections)
            .map(|(c, s)| {
                let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
                for r in s.omitted.values() {
                    *reasons.entry(r.as_str()).or_default() += 1;
                }
                (c.name.clone(), json!({ "top": s.top.len(), "random": s.random.len(), "omitted": reasons }))
            })
            .collect();
        self.record_each("cohorts", &named)?;
        Ok(selections)
    }

    fn read_cohorts(&self, community: &str) -> Result<CohortSelection> {
        CohortSelection::read_csv(
            open_file(&self.community_file(community, "cohorts.csv"))?,
            open_file(&self.community_file(community, "omissions.csv"))?,
        )
    }

    fn read_vocab(&self, community: &str, method: VocabMethod) -> Result<VocabularyList> {
        VocabularyList::read_csv(community, open_file(&self.community_file(community, &method.vocab_file()))?)
    }

    pub fn shifts(&self, method: VocabMethod) -> Result<Vec<(Vec<ShiftRecord>, Vec<OmissionRecord>)>> {
        let results = in_parallel(&self.communities(), |c| self.shifts_one(c, method))?;
        let named: Vec<(String, Value)> = self
            .communities()
            .iter()
            .zip(&results)
            .map(|(c, (kept, omitted))| {
                let count = |tag: CohortTag| kept.iter().filter(|r| r.cohort == tag).count();
                (
                    c.name.clone(),
                    json!({ "kept_top": count(CohortTag::Top), "kept_random": count(CohortTag::Random), "omitted": omitted.len() }),
                )
            })
            .collect();
        self.record_each(&format!("shifts_{method}"), &named)?;
        Ok(results)
    }

    fn shifts_one(&self, c: &CommunityConfig, method: VocabMethod) -> Result<(Vec<ShiftRecord>, Vec<OmissionRecord>)> {
        let window = self.params.window(c.ban_time)?;
        let selection = self.read_cohorts(&c.name)?;
        let vocab = self.read_vocab(&c.name, method)?;
        let vocab_set = vocab.word_set();
        let history = read_archive_shards(&self.config.resolve_all(c.history_paths()))?;
        let members: Vec<(&UserRank, CohortTag)> = selection.members().collect();
        let users: Vec<&str> = members.iter().map(|(u, _)| u.username.as_str()).collect();
        let stats = collect_window_stats(&history.comments, &window, &users, &vocab_set, &self.params.tokenizer);
        let mut kept = Vec::new();
        let mut omitted = Vec::new();
        for (s, (_, tag)) in stats.iter().zip(&members) {
            match OmissionRecord::from_stats(s, *tag) {
                Some(o) => omitted.push(o),
                None => kept.push(build_shift_record(s, *tag)?),
            }
        }
        write_with(&self.community_file(&c.name, &format!("shifts_{method}.csv")), |out| write_shift_csv(out, &kept))?;
        write_with(&self.community_file(&c.name, &format!("shift_omissions_{method}.csv")), |out| {
            write_omission_records(out, &omitted)
        })?;
        Ok((kept, omitted))
    }

    fn read_shifts(&self, community: &str, method: VocabMethod) -> Result<Vec<ShiftRecord>> {
        read_shift_csv(open_file(&self.community_file(community, &format!("shifts_{method}.csv")))?)
    }

    fn read_shift_omissions(&self, community: &str, method: VocabMethod) -> Result<Vec<OmissionRecord>> {
        read_omission_records(open_file(&self.community_file(community, &format!("shift_omissions_{method}.csv")))?)
    }

    /// Run the test battery over every configured community and apply one
    /// Benjamini-Hochberg correction across all of its tests.
    pub fn stats(&self, method: VocabMethod) -> Result<Vec<BatteryRow>> {
        let communities: Vec<&CommunityConfig> = self.config.communities.iter().collect();
        let per_community = in_parallel(&communities, |c| Ok(run_battery(&c.name, &self.read_shifts(&c.name, method)?)))?;
        let results: Vec<(String, &'static str, &'static str, TestResult)> = per_community.into_iter().flatten().collect();
        let p: Vec<f64> = results.iter().map(|r| r.3.p_value).collect();
        let q = bh_fdr(&p)?;
        let rows: Vec<BatteryRow> = results
            .into_iter()
            .zip(q)
            .map(|((community, cohort, metric, t), q_value)| BatteryRow {
                community,
                cohort: cohort.into(),
                metric: metric.into(),
                method: t.method,
                statistic: t.statistic,
                n: t.sample_sizes(),
                p_value: t.p_value,
                q_value,
                significant: q_value <= DEFAULT_ALPHA,
            })
            .collect();
        write_with(&self.root_file(&format!("tests_{method}.csv")), |out| write_battery_csv(out, &rows))?;
        let mut details = BTreeMap::new();
        details.insert("tests".to_string(), json!(rows.len()));
        details.insert("rejections".to_string(), json!(rows.iter().filter(|r| r.significant).count()));
        self.record_stage(&format!("stats_{method}"), details)?;
        Ok(rows)
    }

    pub fn summarize(&self, method: VocabMethod) -> Result<Vec<CommunitySummary>> {
        let tests = read_battery_csv(open_file(&self.root_file(&format!("tests_{method}.csv")))?)?;
        let mut summaries = Vec::new();
        for c in &self.config.communities {
            let records = self.read_shifts(&c.name, method)?;
            let omissions = self.read_shift_omissions(&c.name, method)?;
            summaries.push(summarize(&c.name, &c.category, &records, &omissions, &tests));
        }
        write_with(&self.root_file(&format!("summary_{method}.csv")), |out| write_summary_csv(out, &summaries))?;
        let report = omission_report(&summaries);
        write_with(&self.root_file(&format!("omissions_report_{method}.txt")), |out| Ok(out.write_all(report.as_bytes())?))?;
        let mut details = BTreeMap::new();
        details.insert("communities".to_string(), json!(summaries.len()));
        self.record_stage(&format!("summarize_{method}"), details)?;
        Ok(summaries)
    }

    /// Pairwise overlaps of the `method` vocabularies, plus the per-community
    /// agreement of the two methods when both lists exist.
    pub fn overlap(&self, method: VocabMethod) -> Result<Vec<MethodOverlap>> {
        let mut lists = Vec::new();
        for c in &self.config.communities {
            lists.push(self.read_vocab(&c.name, method)?);
        }
        let mut details = BTreeMap::new();
        if lists.len() >= 2 {
            let m = overlap_matrix(&lists)?;
            write_with(&self.root_file(&format!("overlap_matrix_{method}.csv")), |out| m.write_csv(out))?;
            write_with(&self.root_file(&format!("overlap_matches_{method}.csv")), |out| m.write_matches_csv(out, 3))?;
            write_with(&self.root_file(&format!("overlap_pairs_{method}.csv")), |out| write_overlap_csv(out, &m.pairs()))?;
            details.insert(format!("pairs_{method}"), json!(m.pairs().len()));
        } else {
            log::warn!("overlap matrix needs at least two communities; skipping it");
        }
        let mut agreement = Vec::new();
        for c in &self.config.communities {
            let jsd = self.community_file(&c.name, &VocabMethod::Jsd.vocab_file());
            let sage = self.community_file(&c.name, &VocabMethod::Sage.vocab_file());
            if jsd.exists() && sage.exists() {
                let a = self.read_vocab(&c.name, VocabMethod::Jsd)?;
                let b = self.read_vocab(&c.name, VocabMethod::Sage)?;
                agreement.push(MethodOverlap {
                    community: c.name.clone(),
                    jsd_words: a.len(),
                    sage_words: b.len(),
                    overlap: vocab_overlap(&a, &b),
                });
            }
        }
        if !agreement.is_empty() {
            write_with(&self.root_file("jsd_sage_overlap.csv"), |out| write_method_overlap_csv(out, &agreement))?;
            let mean = agreement.iter().map(|r| r.overlap as f64).sum::<f64>() / agreement.len() as f64;
            details.insert("jsd_sage_mean_overlap".to_string(), json!(mean));
        }
        self.record_stage("overlap", details)?;
        Ok(agreement)
    }

    /// ingest → vocab → cohorts → shifts → stats → summarize for each method.
    pub fn run(&self, methods: &[VocabMethod]) -> Result<BTreeMap<VocabMethod, Vec<CommunitySummary>>> {
        self.ingest(ArchiveSource::Local)?;
        for &m in methods {
            self.vocab(m)?;
        }
        self.cohorts()?;
        let mut out = BTreeMap::new();
        for &m in methods {
            self.shifts(m)?;
            self.stats(m)?;
            out.insert(m, self.summarize(m)?);
        }
        Ok(out)
    }
}

fn signed_rank_or_null(pairs: &[(f64, f64)]) -> Result<TestResult> {
    match wilcoxon_signed_rank(pairs) {
        Err(Error::Degenerate(_)) => Ok(TestResult {
            method: TestMethod::SignedRank,
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            n_other: None,
            exact: true,
            q_value: None,
        }),
        other => other,
    }
}

/// Signed-rank tests of each cohort's before/after pairs and rank-sum tests
/// of top against random shifts. Cohorts without kept users get no rows.
pub fn run_battery(community: &str, records: &[ShiftRecord]) -> Vec<(String, &'static str, &'static str, TestResult)> {
    let mut rows = Vec::new();
    let of = |tag: CohortTag| records.iter().filter(move |r| r.cohort == tag);
    for tag in [CohortTag::Top, CohortTag::Random] {
        let activity: Vec<(f64, f64)> = of(tag).map(|r| (r.pre_comments as f64, r.post_comments as f64)).collect();
        let vocab: Vec<(f64, f64)> = of(tag).filter(|r| r.vocab_shift.is_some()).map(|r| (r.r_before, r.r_after)).collect();
        for (metric, pairs) in [(ACTIVITY, activity), (VOCAB, vocab)] {
            if pairs.is_empty() {
                continue;
            }
            match signed_rank_or_null(&pairs) {
                Ok(t) => rows.push((community.to_string(), tag.as_str(), metric, t)),
                Err(e) => log::warn!("{community} {tag} {metric}: {e}"),
            }
        }
    }
    let activity = |tag| of(tag).map(|r| r.activity_shift).collect::<Vec<_>>();
    let vocab = |tag| of(tag).filter_map(|r| r.vocab_shift).collect::<Vec<_>>();
    for (metric, a, b) in [
        (ACTIVITY, activity(CohortTag::Top), activity(CohortTag::Random)),
        (VOCAB, vocab(CohortTag::Top), vocab(CohortTag::Random)),
    ] {
        if a.is_empty() || b.is_empty() {
            continue;
        }
        match wilcoxon_rank_sum(&a, &b) {
            Ok(t) => rows.push((community.to_string(), TOP_VS_RANDOM, metric, t)),
            Err(e) => log::warn!("{community} {metric} rank-sum: {e}"),
        }
    }
    rows
}

/// Write the synthetic archives into `dir` together with a config file that
/// runs the pipeline on them. Returns the config path.
///
/// The shared vocabulary of a synthetic corpus is far smaller than a real
/// one, so the generated config removes a fifth of it instead of the
/// 10,000-word default.
pub fn synthesize(spec: &SynthSpec, dir: &Path) -> Result<PathBuf> {
    let out = generate(spec)?;
    let paths = out.write_dir(dir)?;
    let name = |p: &Path| PathBuf::from(p.file_name().expect("file name"));
    let config = Config {
        seed: Some(spec.seed),
        bot_list: Some(name(&paths.bots)),
        remove_top: Some(spec.shared_vocab_size / 5),
        window_days: Some(spec.window_days),
        corpus_days: Some(spec.corpus_days),
        top_users: Some(spec.top_users),
        communities: vec![CommunityConfig {
            name: spec.community.clone(),
            category: "synthetic".into(),
            ban_time: spec.ban_time,
            archive: vec![name(&paths.community)],
            baseline: vec![name(&paths.baseline)],
            histories: vec![name(&paths.histories)],
        }],
        ..Config::default()
    };
    let path = dir.join(SYNTH_CONFIG);
    fs::write(&path, config.to_toml()).map_err(|e| Error::file(&path, e))?;
    Ok(path)
}

/// Match an obscured-name list against a candidate CSV and write `out`.
pub fn deobfuscate_files(obscured: &Path, candidates: &Path, out: &Path) -> Result<usize> {
    let obscured = read_obscured(open_file(obscured)?)?;
    let candidates = read_candidates(open_file(candidates)?)?;
    let matches = match_obscured(&obscured, &candidates);
    write_with(out, |w| write_matches_csv(w, &obscured, &matches))?;
    Ok(matches.iter().filter(|m| m.is_some()).count())
}
