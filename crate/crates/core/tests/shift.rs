use std::collections::HashSet;

use divlens::cohort::{CohortTag, OmissionReason, OmissionRecord, OmissionTally};
use divlens::corpus::TokenizerConfig;
use divlens::ingest::{Comment, TimeWindow, SECONDS_PER_DAY};
use divlens::report::{omission_report, read_summary_csv, summarize, write_summary_csv};
use divlens::shift::{build_shift_record, collect_window_stats, normalized_shift, read_shift_csv, write_shift_csv};
use proptest::prelude::*;

#[test]
fn anchored_examples() {
    assert_eq!(normalized_shift(5.0, 0.0).unwrap(), -1.0);
    assert_eq!(normalized_shift(7.0, 7.0).unwrap(), 0.0);
    assert_eq!(normalized_shift(0.0, 3.0).unwrap(), 1.0);
    assert!(normalized_shift(0.0, 0.0).is_err());
    assert!(normalized_shift(-1.0, 2.0).is_err());
    assert!(normalized_shift(f64::NAN, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn bounded_antisymmetric_scale_free(a in 0.0f64..1e6, b in 0.0f64..1e6, k in 1e-3f64..1e3) {
        prop_assume!(a + b > 0.0);
        let s = normalized_shift(a, b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(normalized_shift(b, a).unwrap(), -s);
        prop_assert!((normalized_shift(k * a, k * b).unwrap() - s).abs() <= 1e-12);
        prop_assert_eq!(s > 0.0, b > a);
    }

    #[test]
    fn one_sided_inputs_hit_the_bounds(x in 1e-9f64..1e9) {
        prop_assert_eq!(normalized_shift(x, 0.0).unwrap(), -1.0);
        prop_assert_eq!(normalized_shift(0.0, x).unwrap(), 1.0);
    }
}

const BAN: i64 = 1_600_000_000;

fn comment(id: u64, author: &str, body: &str, day_offset: i64) -> Comment {
    Comment {
        id: divlens::ingest::encode_base36(id),
        author: author.into(),
        community: "elsewhere".into(),
        body: body.into(),
        created_utc: BAN + day_offset * SECONDS_PER_DAY,
    }
}

#[test]
fn window_stats_and_omissions() {
    let window = TimeWindow::new(BAN, 60, 60, 182).unwrap();
    let vocab: HashSet<&str> = ["slang", "meme"].into_iter().collect();
    let history = vec![
        comment(1, "keeps", "slang slang talk", -3),
        comment(2, "keeps", "plain talk here", 4),
        comment(3, "fades", "meme day", -10),
        comment(4, "quiet", "nothing special", -1),
        comment(5, "quiet", "still nothing", 2),
        comment(6, "keeps", "too early slang", -61),
        comment(7, "keeps", "too late slang", 61),
    ];
    let users = ["keeps", "fades", "quiet", "absent"];
    let stats = collect_window_stats(&history, &window, &users, &vocab, &TokenizerConfig::default());
    assert_eq!((stats[0].pre_comments, stats[0].post_comments), (1, 1));
    assert_eq!((stats[0].pre_ingroup, stats[0].pre_words, stats[0].post_ingroup), (2, 3, 0));
    let kept = build_shift_record(&stats[0], CohortTag::Random).unwrap();
    assert_eq!(kept.activity_shift, 0.0);
    assert_eq!(kept.vocab_shift, Some(-1.0));

    let records: Vec<Option<OmissionRecord>> = stats.iter().map(|s| OmissionRecord::from_stats(s, CohortTag::Random)).collect();
    assert!(records[0].is_none());
    let fades = records[1].as_ref().unwrap();
    assert_eq!((fades.reason, fades.also_zero_vocab), (OmissionReason::ZeroPostban, false));
    let quiet = records[2].as_ref().unwrap();
    assert_eq!(quiet.reason, OmissionReason::ZeroVocab);
    let absent = records[3].as_ref().unwrap();
    assert_eq!((absent.reason, absent.also_zero_vocab), (OmissionReason::ZeroPostban, true));
    let flat: Vec<OmissionRecord> = records.into_iter().flatten().collect();
    let tally = OmissionTally::from_records(&flat, CohortTag::Random);
    assert_eq!(tally.report_line("demo"), "demo:(2, 1)");
    assert_eq!(OmissionTally::from_records(&flat, CohortTag::Top), OmissionTally::default());
}

#[test]
fn shift_and_summary_files_round_trip() {
    let window = TimeWindow::new(BAN, 60, 60, 182).unwrap();
    let vocab: HashSet<&str> = ["slang"].into_iter().collect();
    let mut history = Vec::new();
    let mut id = 1;
    let mut users = Vec::new();
    for u in 0..12 {
        let name = format!("user{u:02}");
        for k in 0..(u + 2) {
            history.push(comment(id, &name, if k % 2 == 0 { "slang word" } else { "word word" }, -1 - k as i64));
            id += 1;
        }
        for k in 0..(u % 4 + 1) {
            history.push(comment(id, &name, "slang slang", 1 + k as i64));
            id += 1;
        }
        users.push(name);
    }
    let names: Vec<&str> = users.iter().map(String::as_str).collect();
    let stats = collect_window_stats(&history, &window, &names, &vocab, &TokenizerConfig::default());
    let records: Vec<_> = stats
        .iter()
        .enumerate()
        .map(|(i, s)| build_shift_record(s, if i < 4 { CohortTag::Top } else { CohortTag::Random }).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_shift_csv(&mut buf, &records).unwrap();
    assert_eq!(read_shift_csv(buf.as_slice()).unwrap(), records);

    let summary = summarize("demo", "test", &records, &[], &[]);
    assert_eq!(summary.top.kept, 4);
    assert_eq!(summary.random.kept, 8);
    let mut out = Vec::new();
    write_summary_csv(&mut out, std::slice::from_ref(&summary)).unwrap();
    assert_eq!(read_summary_csv(out.as_slice()).unwrap(), vec![summary.clone()]);
    assert_eq!(omission_report(&[summary]), "demo:(0, 0)\n");
}
