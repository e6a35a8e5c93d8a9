//! Per-community summaries and vocabulary overlap tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTag, OmissionRecord, OmissionTally};
use crate::divergence::VocabularyList;
use crate::sage::{vocab_overlap, OverlapRow};
use crate::shift::ShiftRecord;
use crate::stats::BatteryRow;
use crate::{Error, Result};

pub const ACTIVITY: &str = "activity";
pub const VOCAB: &str = "vocab";
pub const TOP_VS_RANDOM: &str = "top_vs_random";

/// Median with the midpoint convention for even lengths; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub cohort: CohortTag,
    pub kept: usize,
    pub omitted_zero_postban: usize,
    pub omitted_zero_vocab: usize,
    pub median_activity_shift: Option<f64>,
    pub median_vocab_shift: Option<f64>,
    pub activity_q: Option<f64>,
    pub vocab_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community: String,
    pub category: String,
    pub top: CohortSummary,
    pub random: CohortSummary,
    pub activity_rank_sum_q: Option<f64>,
    pub vocab_rank_sum_q: Option<f64>,
}

impl CommunitySummary {
    pub fn cohort(&self, tag: CohortTag) -> &CohortSummary {
        match tag {
            CohortTag::Top => &self.top,
            CohortTag::Random => &self.random,
        }
    }
}

fn lookup_q(tests: &[BatteryRow], community: &str, cohort: &str, metric: &str) -> Option<f64> {
    tests
        .iter()
        .find(|t| t.community == community && t.cohort == cohort && t.metric == metric)
        .map(|t| t.q_value)
}

/// Join kept shift records, window omissions and test rows for one community.
pub fn summarize(
    community: &str,
    category: &str,
    records: &[ShiftRecord],
    omissions: &[OmissionRecord],
    tests: &[BatteryRow],
) -> CommunitySummary {
    let cohort_summary = |tag: CohortTag| {
        let kept: Vec<&ShiftRecord> = records.iter().filter(|r| r.cohort == tag).collect();
        let activity: Vec<f64> = kept.iter().map(|r| r.activity_shift).collect();
        let vocab: Vec<f64> = kept.iter().filter_map(|r| r.vocab_shift).collect();
        let tally = OmissionTally::from_records(omissions, tag);
        if kept.is_empty() {
            log::warn!("{community}: no kept users in the {tag} cohort");
        }
        CohortSummary {
            cohort: tag,
            kept: kept.len(),
            omitted_zero_postban: tally.zero_postban,
            omitted_zero_vocab: tally.zero_vocab,
            median_activity_shift: median(&activity),
            median_vocab_shift: median(&vocab),
            activity_q: lookup_q(tests, community, tag.as_str(), ACTIVITY),
            vocab_q: lookup_q(tests, community, tag.as_str(), VOCAB),
        }
    };
    CommunitySummary {
        community: community.into(),
        category: category.into(),
        top: cohort_summary(CohortTag::Top),
        random: cohort_summary(CohortTag::Random),
        activity_rank_sum_q: lookup_q(tests, community, TOP_VS_RANDOM, ACTIVITY),
        vocab_rank_sum_q: lookup_q(tests, community, TOP_VS_RANDOM, VOCAB),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    community: String,
    category: String,
    cohort: CohortTag,
    kept: usize,
    omitted_zero_postban: usize,
    omitted_zero_vocab: usize,
    median_activity_shift: Option<f64>,
    median_vocab_shift: Option<f64>,
    activity_q: Option<f64>,
    vocab_q: Option<f64>,
    activity_rank_sum_q: Option<f64>,
    vocab_rank_sum_q: Option<f64>,
}

const SUMMARY_HEADER: [&str; 12] = [
    "community",
    "category",
    "cohort",
    "kept",
    "omitted_zero_postban",
    "omitted_zero_vocab",
    "median_activity_shift",
    "median_vocab_shift",
    "activity_q",
    "vocab_q",
    "activity_rank_sum_q",
    "vocab_rank_sum_q",
];

/// Two rows per community, top cohort first. Empty cells are null medians.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[CommunitySummary]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        for c in [&s.top, &s.random] {
            wtr.serialize(SummaryRow {
                community: s.community.clone(),
                category: s.category.clone(),
                cohort: c.cohort,
                kept: c.kept,
                omitted_zero_postban: c.omitted_zero_postban,
                omitted_zero_vocab: c.omitted_zero_vocab,
                median_activity_shift: c.median_activity_shift,
                median_vocab_shift: c.median_vocab_shift,
                activity_q: c.activity_q,
                vocab_q: c.vocab_q,
                activity_rank_sum_q: s.activity_rank_sum_q,
                vocab_rank_sum_q: s.vocab_rank_sum_q,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<CommunitySummary>> {
    let rows: Vec<SummaryRow> = csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?;
    let mut out = Vec::new();
    let mut it = rows.into_iter();
    while let Some(top) = it.next() {
        let random = it.next().ok_or_else(|| Error::invalid("summary file has an unpaired row"))?;
        if top.cohort != CohortTag::Top || random.cohort != CohortTag::Random || top.community != random.community {
            return Err(Error::invalid(format!("summary rows for {} are not a top/random pair", top.community)));
        }
        let cohort = |r: &SummaryRow| CohortSummary {
            cohort: r.cohort,
            kept: r.kept,
            omitted_zero_postban: r.omitted_zero_postban,
            omitted_zero_vocab: r.omitted_zero_vocab,
            median_activity_shift: r.median_activity_shift,
            median_vocab_shift: r.median_vocab_shift,
            activity_q: r.activity_q,
            vocab_q: r.vocab_q,
        };
        out.push(CommunitySummary {
            community: top.community.clone(),
            category: top.category.clone(),
            top: cohort(&top),
            random: cohort(&random),
            activity_rank_sum_q: top.activity_rank_sum_q,
            vocab_rank_sum_q: top.vocab_rank_sum_q,
        });
    }
    Ok(out)
}

/// Omission counts of the random cohort as `community:(zero_postban, zero_vocab)` lines.
pub fn omission_report(summaries: &[CommunitySummary]) -> String {
    summaries
        .iter()
        .map(|s| {
            let t = OmissionTally { zero_postban: s.random.omitted_zero_postban, zero_vocab: s.random.omitted_zero_vocab };
            t.report_line(&s.community) + "\n"
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    pub communities: Vec<String>,
    /// `counts[i][j]`: shared words of lists `i` and `j`; the diagonal holds list lengths.
    pub counts: Vec<Vec<usize>>,
}

pub fn overlap_matrix(vocabs: &[VocabularyList]) -> Result<OverlapMatrix> {
    if vocabs.len() < 2 {
        return Err(Error::invalid("overlap matrix needs at least two vocabulary lists"));
    }
    let n = vocabs.len();
    let mut counts = vec![vec![0usize; n]; n];
    for i in 0..n {
        counts[i][i] = vocabs[i].word_set().len();
        for j in i + 1..n {
            let k = vocab_overlap(&vocabs[i], &vocabs[j]);
            counts[i][j] = k;
            counts[j][i] = k;
        }
    }
    Ok(OverlapMatrix { communities: vocabs.iter().map(|v| v.community.clone()).collect(), counts })
}

impl OverlapMatrix {
    /// Up to `k` other communities per row, by overlap descending then name.
    pub fn top_matches(&self, k: usize) -> Vec<(String, Vec<(String, usize)>)> {
        (0..self.communities.len())
            .map(|i| {
                let mut others: Vec<(String, usize)> = (0..self.communities.len())
                    .filter(|&j| j != i)
                    .map(|j| (self.communities[j].clone(), self.counts[i][j]))
                    .collect();
                others.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                others.truncate(k);
                (self.communities[i].clone(), others)
            })
            .collect()
    }

    pub fn pairs(&self) -> Vec<OverlapRow> {
        let mut rows = Vec::new();
        for i in 0..self.communities.len() {
            for j in i + 1..self.communities.len() {
                rows.push(OverlapRow {
                    community_a: self.communities[i].clone(),
                    community_b: self.communities[j].clone(),
                    overlap: self.counts[i][j],
                });
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = crate::csv_writer(out);
        let mut header = vec!["community".to_string()];
        header.extend(self.communities.iter().cloned());
        wtr.write_record(&header)?;
        for (name, row) in self.communities.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(usize::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_matches_csv<W: Write>(&self, out: W, k: usize) -> Result<()> {
        let mut wtr = crate::csv_writer(out);
        let mut header = vec!["community".to_string()];
        for m in 1..=k {
            header.push(format!("match_{m}"));
            header.push(format!("overlap_{m}"));
        }
        wtr.write_record(&header)?;
        for (name, matches) in self.top_matches(k) {
            let mut rec = vec![name];
            for m in 0..k {
                match matches.get(m) {
                    Some((other, n)) => {
                        rec.push(other.clone());
                        rec.push(n.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Agreement between the two keyword methods for one community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodOverlap {
    pub community: String,
    pub jsd_words: usize,
    pub sage_words: usize,
    pub overlap: usize,
}

pub fn write_method_overlap_csv<W: Write>(out: W, rows: &[MethodOverlap]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record(["community", "jsd_words", "sage_words", "overlap"])?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::OmissionReason;
    use crate::divergence::WordContribution;
    use crate::stats::TestMethod;

    fn list(name: &str, words: impl IntoIterator<Item = String>) -> VocabularyList {
        VocabularyList::new(
            name,
            words
                .into_iter()
                .map(|word| WordContribution { word, contribution: 0.1, p_rate: 0.0, q_rate: 0.1 })
                .collect(),
        )
    }

    fn rec(name: &str, cohort: CohortTag, a: f64, v: Option<f64>) -> ShiftRecord {
        ShiftRecord {
            username: name.into(),
            cohort,
            pre_comments: 1,
            post_comments: 1,
            activity_shift: a,
            r_before: 0.1,
            r_after: 0.1,
            vocab_shift: v,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[-1.0, 0.0, 1.0]), Some(0.0));
        assert!((median(&[-0.5, -0.1]).unwrap() + 0.3).abs() < 1e-15);
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn identical_and_disjoint_overlaps() {
        let a: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let m = overlap_matrix(&[list("a", a.clone()), list("b", a)]).unwrap();
        assert_eq!(m.counts, vec![vec![100, 100], vec![100, 100]]);
        let lists: Vec<VocabularyList> =
            (0..4).map(|k| list(&format!("c{k}"), (0..10).map(move |i| format!("w{k}_{i}")))).collect();
        let m = overlap_matrix(&lists).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.counts[i][j], if i == j { 10 } else { 0 });
            }
        }
        assert!(overlap_matrix(&lists[..1]).is_err());
    }

    #[test]
    fn constructed_overlaps_and_matches() {
        let words = |tag: &str, n: usize| (0..n).map(move |i| format!("{tag}{i}")).collect::<Vec<_>>();
        let a = [words("ab", 10), words("ac", 2), words("a", 20)].concat();
        let b = [words("ab", 10), words("bc", 5), words("b", 20)].concat();
        let c = [words("ac", 2), words("bc", 5), words("c", 20)].concat();
        let m = overlap_matrix(&[list("A", a), list("B", b), list("C", c)]).unwrap();
        assert_eq!(m.counts, vec![vec![32, 10, 2], vec![10, 35, 5], vec![2, 5, 27]]);
        let matches = m.top_matches(3);
        assert_eq!(matches[0].1, vec![("B".to_string(), 10), ("C".to_string(), 2)]);
        assert_eq!(matches[2].1, vec![("B".to_string(), 5), ("A".to_string(), 2)]);
        let mut buf = Vec::new();
        m.write_matches_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "community,match_1,overlap_1,match_2,overlap_2,match_3,overlap_3");
        assert_eq!(text.lines().nth(1).unwrap(), "A,B,10,C,2,,");
        assert_eq!(m.pairs().len(), 3);
    }

    #[test]
    fn summary_joins_and_round_trips() {
        let records = vec![
            rec("a", CohortTag::Top, -1.0, Some(-0.5)),
            rec("b", CohortTag::Top, 0.0, Some(-0.1)),
            rec("c", CohortTag::Top, 1.0, None),
        ];
        let omissions = vec![
            OmissionRecord {
                username: "d".into(),
                cohort: CohortTag::Random,
                reason: OmissionReason::ZeroPostban,
                also_zero_vocab: false,
            },
            OmissionRecord {
                username: "e".into(),
                cohort: CohortTag::Random,
                reason: OmissionReason::ZeroVocab,
                also_zero_vocab: false,
            },
        ];
        let tests = vec![BatteryRow {
            community: "x".into(),
            cohort: "top".into(),
            metric: ACTIVITY.into(),
            method: TestMethod::SignedRank,
            statistic: 1.0,
            n: "3".into(),
            p_value: 0.5,
            q_value: 0.75,
            significant: false,
        }];
        let s = summarize("x", "cat", &records, &omissions, &tests);
        assert_eq!(s.top.median_activity_shift, Some(0.0));
        assert!((s.top.median_vocab_shift.unwrap() + 0.3).abs() < 1e-15);
        assert_eq!(s.top.activity_q, Some(0.75));
        assert_eq!(s.top.vocab_q, None);
        assert_eq!(s.random.kept, 0);
        assert_eq!(s.random.median_activity_shift, None);
        assert_eq!((s.random.omitted_zero_postban, s.random.omitted_zero_vocab), (1, 1));
        assert_eq!(omission_report(std::slice::from_ref(&s)), "x:(1, 1)\n");

        let mut buf = Vec::new();
        write_summary_csv(&mut buf, std::slice::from_ref(&s)).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), vec![s]);
    }
}
