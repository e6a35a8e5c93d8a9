//! Synthetic communities with planted in-group vocabulary and a known ban
//! response, used as ground truth for end-to-end checks.
//!
//! The generated platform has one community plus background traffic. Every
//! community user has a power-law activity level (comments per user window);
//! a fixed share of that activity lands in the community before the ban.
//! Shared words follow a finite Zipf law; planted words appear only in text
//! written by community users, uniformly among themselves, at `planted_rate`
//! each. Users are ranked on their realised pre-ban community comments, the
//! first `top_users` form the top cohort, and the per-cohort response
//! multipliers are applied to post-ban activity and planted-word rates.
//! Comment IDs increase with time across all three archives.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::cohort::CohortTag;
use crate::divergence::VocabularyList;
use crate::ingest::{encode_base36, write_archive, Comment, TimeWindow, DELETED_AUTHOR};
use crate::{Error, Result};

const OTHER_COMMUNITIES: [&str; 8] = ["askreddit", "funny", "gaming", "movies", "music", "news", "pics", "worldnews"];
const ID_ORIGIN: u64 = 36u64.pow(6);
const IDS_PER_SECOND: i64 = 4;
const BASELINE_AUTHORS: usize = 50_000;

pub const COMMUNITY_ARCHIVE: &str = "community.ndjson";
pub const BASELINE_ARCHIVE: &str = "baseline.ndjson";
pub const HISTORY_ARCHIVE: &str = "histories.ndjson";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const BOT_LIST: &str = "bots.txt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanResponse {
    pub activity_multiplier: f64,
    pub vocab_rate_multiplier: f64,
}

impl BanResponse {
    pub const NULL: BanResponse = BanResponse { activity_multiplier: 1.0, vocab_rate_multiplier: 1.0 };
}

impl Default for BanResponse {
    fn default() -> Self {
        Self::NULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub community: String,
    pub shared_vocab_size: usize,
    pub zipf_exponent: f64,
    pub planted_vocab_size: usize,
    /// Probability that a community user's token is a given planted word.
    pub planted_rate: f64,
    pub n_users: usize,
    /// Exponent of the activity density, `p(a) ∝ a^-exponent` for `a ≥ activity_floor`.
    pub user_activity_exponent: f64,
    /// Smallest expected number of comments per user window.
    pub activity_floor: f64,
    /// Fraction of a user's pre-ban comments posted in the community.
    pub community_share: f64,
    pub words_per_comment: f64,
    pub baseline_comments: usize,
    pub top_users: usize,
    pub top_response: BanResponse,
    pub random_response: BanResponse,
    /// Bot accounts posting heavily in the community.
    pub bots: usize,
    /// Community comments whose author reads `[deleted]`.
    pub deleted_comments: usize,
    pub ban_time: i64,
    pub window_days: u32,
    pub corpus_days: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            community: "synthetic".into(),
            shared_vocab_size: 5000,
            zipf_exponent: 1.1,
            planted_vocab_size: 50,
            planted_rate: 0.002,
            n_users: 2000,
            user_activity_exponent: 2.5,
            activity_floor: 25.0,
            community_share: 0.03,
            words_per_comment: 12.0,
            baseline_comments: 170_000,
            top_users: crate::cohort::DEFAULT_TOP_USERS,
            top_response: BanResponse::NULL,
            random_response: BanResponse::NULL,
            bots: 2,
            deleted_comments: 300,
            ban_time: 1_593_000_000,
            window_days: 60,
            corpus_days: 182,
            seed: 1,
        }
    }
}

impl SynthSpec {
    /// Read a spec from TOML; omitted keys keep their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(toml::from_str(&text)?)
    }

    pub fn window(&self) -> Result<TimeWindow> {
        TimeWindow::new(self.ban_time, self.window_days, self.window_days, self.corpus_days)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("synthetic spec: {msg}")));
        if self.shared_vocab_size == 0 || self.n_users == 0 || self.baseline_comments == 0 {
            return bad("shared_vocab_size, n_users and baseline_comments must be positive");
        }
        if self.community.is_empty() {
            return bad("community name must be non-empty");
        }
        if !(self.planted_rate > 0.0 && self.planted_rate < 1.0) {
            return bad("planted_rate must lie in (0, 1)");
        }
        let planted_mass = self.planted_rate * self.planted_vocab_size as f64;
        if planted_mass >= 1.0 {
            return bad("planted_rate × planted_vocab_size must be below 1");
        }
        for r in [self.top_response, self.random_response] {
            if !(r.activity_multiplier >= 0.0 && r.activity_multiplier.is_finite())
                || !(r.vocab_rate_multiplier >= 0.0 && r.vocab_rate_multiplier.is_finite())
            {
                return bad("response multipliers must be finite and non-negative");
            }
            if planted_mass * r.vocab_rate_multiplier > 1.0 {
                return bad("post-ban planted mass exceeds 1");
            }
        }
        if !(self.user_activity_exponent > 1.0) {
            return bad("user_activity_exponent must exceed 1");
        }
        if !(self.activity_floor > 0.0) || !(self.words_per_comment >= 1.0) || !(self.zipf_exponent > 0.0) {
            return bad("activity_floor, words_per_comment and zipf_exponent must be positive");
        }
        if !(self.community_share > 0.0 && self.community_share <= 1.0) {
            return bad("community_share must lie in (0, 1]");
        }
        if self.corpus_days < self.window_days {
            return bad("corpus_days must cover the pre-ban user window");
        }
        self.window()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub username: String,
    pub cohort: CohortTag,
    /// Expected comments per user window before the ban.
    pub activity_rate: f64,
    pub preban_community_comments: u64,
    pub activity_multiplier: f64,
    pub vocab_rate_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub planted_tokens: Vec<String>,
    pub shared_tokens: usize,
    pub bots: Vec<String>,
    pub users: Vec<UserTruth>,
}

impl GroundTruth {
    pub fn planted_set(&self) -> BTreeSet<&str> {
        self.planted_tokens.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub community: Vec<Comment>,
    pub baseline: Vec<Comment>,
    pub histories: Vec<Comment>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub community: PathBuf,
    pub baseline: PathBuf,
    pub histories: PathBuf,
    pub ground_truth: PathBuf,
    pub bots: PathBuf,
}

impl SynthOutput {
    pub fn write_dir(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let paths = SynthPaths {
            community: dir.join(COMMUNITY_ARCHIVE),
            baseline: dir.join(BASELINE_ARCHIVE),
            histories: dir.join(HISTORY_ARCHIVE),
            ground_truth: dir.join(GROUND_TRUTH),
            bots: dir.join(BOT_LIST),
        };
        for (path, comments) in
            [(&paths.community, &self.community), (&paths.baseline, &self.baseline), (&paths.histories, &self.histories)]
        {
            let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
            let mut out = BufWriter::new(file);
            write_archive(&mut out, comments)?;
            out.flush()?;
        }
        let mut truth = serde_json::to_string_pretty(&self.truth)?;
        truth.push('\n');
        fs::write(&paths.ground_truth, truth).map_err(|e| Error::file(&paths.ground_truth, e))?;
        let mut bots = String::from("# synthetic bot accounts\n");
        for b in &self.truth.bots {
            bots.push_str(b);
            bots.push('\n');
        }
        fs::write(&paths.bots, bots).map_err(|e| Error::file(&paths.bots, e))?;
        Ok(paths)
    }
}

/// `prefix` followed by `index` written in base 26 with letters, at least
/// three letters wide.
pub fn word_name(prefix: char, index: usize, vocab_size: usize) -> String {
    let mut width = 3;
    while 26usize.pow(width as u32) < vocab_size {
        width += 1;
    }
    let mut letters = vec![b'a'; width];
    let mut v = index;
    for slot in letters.iter_mut().rev() {
        *slot = b'a' + (v % 26) as u8;
        v /= 26;
    }
    let mut s = String::with_capacity(width + 1);
    s.push(prefix);
    s.push_str(std::str::from_utf8(&letters).expect("ascii"));
    s
}

/// Probabilities of the finite Zipf law over ranks `1..=n`, in rank order.
pub fn zipf_pmf(n: usize, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

struct TextModel {
    shared: Vec<String>,
    planted: Vec<String>,
    zipf: Zipf<f64>,
    extra_words: f64,
}

impl TextModel {
    /// A comment body whose tokens are planted with total probability `planted_mass`.
    fn body(&self, rng: &mut ChaCha8Rng, planted_mass: f64) -> String {
        let len = 1 + poisson(rng, self.extra_words);
        let mut body = String::new();
        for i in 0..len {
            if i > 0 {
                body.push(' ');
            }
            let word = if planted_mass > 0.0 && rng.random::<f64>() < planted_mass {
                &self.planted[rng.random_range(0..self.planted.len())]
            } else {
                &self.shared[self.zipf.sample(rng) as usize - 1]
            };
            body.push_str(word);
        }
        body
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Destination {
    Baseline,
    Community,
    /// Posted elsewhere by a community user.
    History,
}

struct Draft {
    time: i64,
    destination: Destination,
    author: String,
    community: &'static str,
    body: String,
}

fn uniform_time(rng: &mut ChaCha8Rng, range: &std::ops::Range<i64>) -> i64 {
    rng.random_range(range.clone())
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let window = spec.window()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let text = TextModel {
        shared: (0..spec.shared_vocab_size).map(|i| word_name('s', i, spec.shared_vocab_size)).collect(),
        planted: (0..spec.planted_vocab_size).map(|i| word_name('p', i, spec.planted_vocab_size)).collect(),
        zipf: Zipf::new(spec.shared_vocab_size as f64, spec.zipf_exponent)
            .map_err(|e| Error::invalid(format!("zipf law: {e}")))?,
        extra_words: spec.words_per_comment - 1.0,
    };
    let planted_mass = spec.planted_rate * spec.planted_vocab_size as f64;
    let corpus_range = window.corpus_range();
    let pre_range = window.pre_range();
    let post_range = window.post_range();
    let corpus_windows = spec.corpus_days as f64 / spec.window_days as f64;

    let pareto = Pareto::new(spec.activity_floor, spec.user_activity_exponent - 1.0)
        .map_err(|e| Error::invalid(format!("activity law: {e}")))?;
    let users: Vec<(String, f64)> =
        (0..spec.n_users).map(|i| (format!("user{i:05}"), pareto.sample(&mut rng))).collect();

    let mut drafts: Vec<Draft> = Vec::new();
    let mut community_counts = vec![0u64; users.len()];
    for (idx, (name, activity)) in users.iter().enumerate() {
        let n = poisson(&mut rng, activity * spec.community_share * corpus_windows);
        community_counts[idx] = n;
        for _ in 0..n {
            let time = uniform_time(&mut rng, &corpus_range);
            let body = text.body(&mut rng, planted_mass);
            drafts.push(Draft { time, destination: Destination::Community, author: name.clone(), community: "", body });
        }
    }
    let busiest = community_counts.iter().copied().max().unwrap_or(0);
    let bots: Vec<String> = (0..spec.bots).map(|i| format!("synth_bot_{i}")).collect();
    for bot in &bots {
        for _ in 0..busiest + 25 {
            let time = uniform_time(&mut rng, &corpus_range);
            let body = text.body(&mut rng, 0.0);
            drafts.push(Draft { time, destination: Destination::Community, author: bot.clone(), community: "", body });
        }
    }
    for _ in 0..spec.deleted_comments {
        let time = uniform_time(&mut rng, &corpus_range);
        let body = text.body(&mut rng, 0.0);
        drafts.push(Draft { time, destination: Destination::Community, author: DELETED_AUTHOR.into(), community: "", body });
    }

    let mut order: Vec<usize> = (0..users.len()).filter(|&i| community_counts[i] > 0).collect();
    order.sort_by(|&a, &b| community_counts[b].cmp(&community_counts[a]).then_with(|| users[a].0.cmp(&users[b].0)));
    let top: BTreeSet<usize> = order.iter().take(spec.top_users).copied().collect();

    let mut truth_users = Vec::with_capacity(users.len());
    for (idx, (name, activity)) in users.iter().enumerate() {
        let (cohort, response) = if top.contains(&idx) {
            (CohortTag::Top, spec.top_response)
        } else {
            (CohortTag::Random, spec.random_response)
        };
        let elsewhere_pre = poisson(&mut rng, activity * (1.0 - spec.community_share));
        let post = poisson(&mut rng, activity * response.activity_multiplier);
        for (count, range, mass) in [
            (elsewhere_pre, &pre_range, planted_mass),
            (post, &post_range, planted_mass * response.vocab_rate_multiplier),
        ] {
            for _ in 0..count {
                let time = uniform_time(&mut rng, range);
                let community = OTHER_COMMUNITIES[rng.random_range(0..OTHER_COMMUNITIES.len())];
                let body = text.body(&mut rng, mass);
                drafts.push(Draft { time, destination: Destination::History, author: name.clone(), community, body });
            }
        }
        truth_users.push(UserTruth {
            username: name.clone(),
            cohort,
            activity_rate: *activity,
            preban_community_comments: community_counts[idx],
            activity_multiplier: response.activity_multiplier,
            vocab_rate_multiplier: response.vocab_rate_multiplier,
        });
    }

    for _ in 0..spec.baseline_comments {
        let time = uniform_time(&mut rng, &corpus_range);
        let author = format!("platform{:05}", rng.random_range(0..BASELINE_AUTHORS));
        let community = OTHER_COMMUNITIES[rng.random_range(0..OTHER_COMMUNITIES.len())];
        let body = text.body(&mut rng, 0.0);
        drafts.push(Draft { time, destination: Destination::Baseline, author, community, body });
    }

    // Stable sort keeps generation order among equal timestamps.
    drafts.sort_by_key(|d| (d.time, d.destination));
    let community_name: &str = &spec.community;
    let community_users: BTreeMap<&str, ()> = users.iter().map(|(n, _)| (n.as_str(), ())).collect();
    let (mut community, mut baseline, mut histories) = (Vec::new(), Vec::new(), Vec::new());
    let mut previous: Option<u64> = None;
    for d in drafts {
        let slot = ID_ORIGIN + ((d.time - corpus_range.start) * IDS_PER_SECOND) as u64;
        let id = previous.map_or(slot, |p| slot.max(p + 1));
        previous = Some(id);
        let comment = Comment {
            id: encode_base36(id),
            author: d.author,
            community: if d.destination == Destination::Community { community_name.into() } else { d.community.into() },
            body: d.body,
            created_utc: d.time,
        };
        match d.destination {
            Destination::Baseline => baseline.push(comment),
            Destination::History => histories.push(comment),
            Destination::Community => {
                if pre_range.contains(&comment.created_utc) && community_users.contains_key(comment.author.as_str()) {
                    histories.push(comment.clone());
                }
                community.push(comment);
            }
        }
    }

    Ok(SynthOutput {
        community,
        baseline,
        histories,
        truth: GroundTruth {
            spec: spec.clone(),
            planted_tokens: text.planted,
            shared_tokens: spec.shared_vocab_size,
            bots,
            users: truth_users,
        },
    })
}

/// Fraction of `truth` present in `found`.
pub fn recovery_score<S: AsRef<str>>(found: &VocabularyList, truth: &[S]) -> Result<f64> {
    let truth: BTreeSet<&str> = truth.iter().map(AsRef::as_ref).collect();
    if truth.is_empty() {
        return Err(Error::invalid("recovery score needs a non-empty truth set"));
    }
    let found = found.word_set();
    let hits = truth.iter().filter(|w| found.contains(*w)).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::WordContribution;
    use crate::ingest::parse_archive;

    fn small() -> SynthSpec {
        SynthSpec {
            shared_vocab_size: 300,
            planted_vocab_size: 10,
            planted_rate: 0.01,
            n_users: 120,
            baseline_comments: 3000,
            top_users: 10,
            deleted_comments: 5,
            bots: 1,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    fn list(words: &[&str]) -> VocabularyList {
        VocabularyList::new(
            "c",
            words
                .iter()
                .map(|w| WordContribution { word: (*w).into(), contribution: 0.1, p_rate: 0.0, q_rate: 0.1 })
                .collect(),
        )
    }

    #[test]
    fn names_are_fixed_width_and_distinct() {
        assert_eq!(word_name('s', 0, 10), "saaa");
        assert_eq!(word_name('s', 27, 10), "sabb");
        assert_eq!(word_name('p', 0, 20_000).len(), 5);
        let names: BTreeSet<String> = (0..5000).map(|i| word_name('s', i, 5000)).collect();
        assert_eq!(names.len(), 5000);
    }

    #[test]
    fn rejects_infeasible_specs() {
        let cases = [
            SynthSpec { planted_rate: 0.05, planted_vocab_size: 20, ..small() },
            SynthSpec { planted_rate: 0.0, ..small() },
            SynthSpec { n_users: 0, ..small() },
            SynthSpec { shared_vocab_size: 0, ..small() },
            SynthSpec { user_activity_exponent: 1.0, ..small() },
            SynthSpec {
                top_response: BanResponse { activity_multiplier: 1.0, vocab_rate_multiplier: 20.0 },
                ..small()
            },
            SynthSpec { random_response: BanResponse { activity_multiplier: -1.0, vocab_rate_multiplier: 1.0 }, ..small() },
        ];
        for spec in cases {
            assert!(matches!(generate(&spec), Err(Error::InvalidArgument(_))), "{spec:?}");
        }
    }

    #[test]
    fn archives_round_trip_and_keep_planted_out_of_baseline() {
        let out = generate(&small()).unwrap();
        let planted = out.truth.planted_set();
        for c in &out.baseline {
            assert!(c.body.split(' ').all(|w| !planted.contains(w)));
        }
        assert!(out.community.iter().any(|c| c.body.split(' ').any(|w| planted.contains(w))));
        for comments in [&out.community, &out.baseline, &out.histories] {
            let mut buf = Vec::new();
            write_archive(&mut buf, comments.iter()).unwrap();
            let parsed = parse_archive(buf.as_slice()).unwrap();
            assert_eq!(parsed.malformed, 0);
            assert_eq!(&parsed.comments, comments);
            let ids: Vec<u64> = parsed.comments.iter().map(|c| c.numeric_id().unwrap()).collect();
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn top_cohort_matches_realised_ranking() {
        let out = generate(&small()).unwrap();
        let tops: Vec<&UserTruth> = out.truth.users.iter().filter(|u| u.cohort == CohortTag::Top).collect();
        assert_eq!(tops.len(), 10);
        let min_top = tops.iter().map(|u| u.preban_community_comments).min().unwrap();
        let max_rest = out
            .truth
            .users
            .iter()
            .filter(|u| u.cohort == CohortTag::Random)
            .map(|u| u.preban_community_comments)
            .max()
            .unwrap();
        assert!(min_top >= max_rest);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.community, b.community);
        assert_eq!(a.histories, b.histories);
        assert_eq!(a.baseline, b.baseline);
        let c = generate(&SynthSpec { seed: 12, ..small() }).unwrap();
        assert_ne!(a.community, c.community);
    }

    #[test]
    fn recovery() {
        let truth = ["a", "b", "c", "d"];
        assert_eq!(recovery_score(&list(&["a", "b", "c", "d", "e"]), &truth).unwrap(), 1.0);
        assert_eq!(recovery_score(&list(&["x"]), &truth).unwrap(), 0.0);
        assert_eq!(recovery_score(&list(&["a", "b", "c"]), &truth).unwrap(), 0.75);
        assert!(recovery_score(&list(&["a"]), &[] as &[&str]).is_err());
        let planted: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let found: Vec<&str> = planted[..45].iter().map(String::as_str).collect();
        assert!((recovery_score(&list(&found), &planted).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zipf_pmf_normalised() {
        let p = zipf_pmf(100, 1.1);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
    }
}
