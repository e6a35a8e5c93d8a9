mod common;

use std::collections::HashSet;

use divlens::deobfuscate::{match_obscured, read_candidates, read_obscured, write_matches_csv, Candidate, ObscuredName};
use proptest::prelude::*;

use common::deobfuscation_fixture;

fn parse_all(patterns: &[&str]) -> Vec<ObscuredName> {
    patterns.iter().map(|p| ObscuredName::parse(p).unwrap()).collect()
}

fn candidates(rows: &[(&str, u64)]) -> Vec<Candidate> {
    rows.iter().map(|&(n, p)| Candidate { name: n.into(), population: p }).collect()
}

#[test]
fn fixture_resolves() {
    let (obscured, cands, expected) = deobfuscation_fixture();
    let got = match_obscured(&parse_all(&obscured), &candidates(&cands));
    let expected: Vec<Option<String>> = expected.into_iter().map(|e| e.map(String::from)).collect();
    assert_eq!(got, expected);
}

#[test]
fn files_round_trip() {
    let (obscured, cands, _) = deobfuscation_fixture();
    let text = format!("# obscured\n\n{}\n", obscured.join("\n"));
    let names = read_obscured(text.as_bytes()).unwrap();
    assert_eq!(names, parse_all(&obscured));
    let mut csv = String::from("name,population\n");
    for (n, p) in &cands {
        csv.push_str(&format!("{n},{p}\n"));
    }
    let read = read_candidates(csv.as_bytes()).unwrap();
    assert_eq!(read, candidates(&cands));
    let m = match_obscured(&names, &read);
    let mut out = Vec::new();
    write_matches_csv(&mut out, &names, &m).unwrap();
    let out = String::from_utf8(out).unwrap();
    assert!(out.starts_with("obscured,matched\nge****,gentoo\n"));
    assert!(out.contains("\nzz***,\n"));
    assert!(out.contains("\nan**,Anon\n"));
}

#[test]
fn malformed_lines_report_position() {
    let err = read_obscured("ge***\ng*x*\n".as_bytes()).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
    assert!(ObscuredName::parse("g").is_err());
    assert!(ObscuredName::parse("g-**").is_err());
    assert!(read_candidates("name,population\nx,notanumber\n".as_bytes()).is_err());
}

fn arb_name() -> impl Strategy<Value = String> {
    "[ab][ab][a-c]{0,3}"
}

proptest! {
    #[test]
    fn assignments_are_admissible_and_unique(
        names in prop::collection::vec((arb_name(), 0u64..5), 0..20),
        patterns in prop::collection::vec(("[ab][ab]", 2usize..6), 0..20),
    ) {
        let cands: Vec<Candidate> = names.iter().map(|(n, p)| Candidate { name: n.clone(), population: *p }).collect();
        let obscured: Vec<ObscuredName> = patterns.iter().map(|(p, l)| ObscuredName::new(p, *l).unwrap()).collect();
        let m = match_obscured(&obscured, &cands);
        prop_assert_eq!(m.len(), obscured.len());
        let mut used = HashSet::new();
        for (o, pick) in obscured.iter().zip(&m) {
            match pick {
                Some(name) => {
                    prop_assert!(o.admits(name));
                    prop_assert!(used.insert(name.clone()), "candidate {} reused", name);
                }
                None => prop_assert!(!cands.iter().any(|c| o.admits(&c.name) && !used.contains(&c.name))),
            }
        }
        // candidate input order does not matter once names are distinct
        let mut dedup = HashSet::new();
        let first_seen: Vec<Candidate> = cands.iter().filter(|c| dedup.insert(c.name.clone())).cloned().collect();
        let mut rev_first: Vec<Candidate> = first_seen.clone();
        rev_first.reverse();
        prop_assert_eq!(match_obscured(&obscured, &rev_first), match_obscured(&obscured, &first_seen));
    }

    #[test]
    fn picks_the_most_populous_first(pops in prop::collection::vec(0u64..100, 1..10)) {
        let cands: Vec<Candidate> =
            pops.iter().enumerate().map(|(i, &p)| Candidate { name: format!("ge{i:03}"), population: p }).collect();
        let m = match_obscured(&[ObscuredName::new("ge", 5).unwrap()], &cands);
        let best = cands.iter().max_by(|a, b| a.population.cmp(&b.population).then_with(|| b.name.cmp(&a.name))).unwrap();
        prop_assert_eq!(m[0].as_deref(), Some(best.name.as_str()));
    }
}
