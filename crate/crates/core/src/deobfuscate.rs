//! Resolve obscured community names (`ge************`) against candidate lists.
//!
//! Obscured entries and candidates are grouped by lowercased two-character
//! prefix and total length. Within a group, candidates are ordered by
//! population (descending, ties by name) and paired with the obscured entries
//! in input order, so surplus obscured entries stay unmatched and surplus
//! candidates with the smallest populations go unused.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MASK: char = '*';

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObscuredName {
    pub prefix: String,
    pub length: usize,
}

impl ObscuredName {
    pub fn new(prefix: &str, length: usize) -> Result<Self> {
        let prefix = prefix.to_lowercase();
        if prefix.chars().count() != 2 {
            return Err(Error::invalid(format!("prefix {prefix:?} must have exactly 2 characters")));
        }
        if !prefix.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(Error::invalid(format!("prefix {prefix:?} must be alphanumeric or underscore")));
        }
        if length < 2 {
            return Err(Error::invalid("obscured length must be at least 2"));
        }
        Ok(Self { prefix, length })
    }

    /// Parse `ge*****`: two visible characters followed by asterisks.
    pub fn parse(pattern: &str) -> Result<Self> {
        let pattern = pattern.trim();
        let mut chars = pattern.chars();
        let prefix: String = chars.by_ref().take(2).collect();
        if chars.clone().any(|c| c != MASK) {
            return Err(Error::invalid(format!("pattern {pattern:?} must end in asterisks only")));
        }
        Self::new(&prefix, pattern.chars().count())
    }

    pub fn pattern(&self) -> String {
        let mut s = self.prefix.clone();
        s.extend(std::iter::repeat_n(MASK, self.length - 2));
        s
    }

    pub fn admits(&self, name: &str) -> bool {
        name.chars().count() == self.length && group_key(name).is_some_and(|(p, _)| p == self.prefix)
    }
}

fn group_key(name: &str) -> Option<(String, usize)> {
    let len = name.chars().count();
    if len < 2 {
        return None;
    }
    Some((name.chars().take(2).collect::<String>().to_lowercase(), len))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub population: u64,
}

/// One assignment per obscured entry, in input order; `None` means unmatched.
pub fn match_obscured(obscured: &[ObscuredName], candidates: &[Candidate]) -> Vec<Option<String>> {
    let mut pools: BTreeMap<(String, usize), Vec<&Candidate>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c.name.as_str()) {
            continue;
        }
        if let Some(key) = group_key(&c.name) {
            pools.entry(key).or_default().push(c);
        }
    }
    for pool in pools.values_mut() {
        pool.sort_by(|a, b| b.population.cmp(&a.population).then_with(|| a.name.cmp(&b.name)));
    }
    let mut used: BTreeMap<(String, usize), usize> = BTreeMap::new();
    obscured
        .iter()
        .map(|o| {
            let key = (o.prefix.to_lowercase(), o.length);
            let pool = pools.get(&key)?;
            let next = used.entry(key).or_insert(0);
            let pick = pool.get(*next)?;
            *next += 1;
            Some(pick.name.clone())
        })
        .collect()
}

/// One obscured pattern per line; blank lines and `#` comments are skipped.
pub fn read_obscured<R: BufRead>(input: R) -> Result<Vec<ObscuredName>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(ObscuredName::parse(line).map_err(|e| Error::Format {
            what: "obscured list",
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_candidates<R: Read>(input: R) -> Result<Vec<Candidate>> {
    let rows: Vec<Candidate> = csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.iter().any(|c| c.name.is_empty()) {
        return Err(Error::invalid("candidate names must be non-empty"));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRow {
    pub obscured: String,
    pub matched: Option<String>,
}

pub fn write_matches_csv<W: Write>(out: W, obscured: &[ObscuredName], matches: &[Option<String>]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record(["obscured", "matched"])?;
    for (o, m) in obscured.iter().zip(matches) {
        wtr.serialize(MatchRow { obscured: o.pattern(), matched: m.clone() })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(name: &str, population: u64) -> Candidate {
        Candidate { name: name.into(), population }
    }

    #[test]
    fn parse_patterns() {
        let o = ObscuredName::parse("ge************").unwrap();
        assert_eq!(o, ObscuredName { prefix: "ge".into(), length: 14 });
        assert_eq!(o.pattern(), "ge************");
        assert_eq!(ObscuredName::parse("GE**").unwrap().prefix, "ge");
        assert_eq!(ObscuredName::parse("ab").unwrap().length, 2);
        assert!(ObscuredName::parse("g").is_err());
        assert!(ObscuredName::parse("ge**x*").is_err());
        assert!(ObscuredName::parse("g-***").is_err());
    }

    #[test]
    fn single_match() {
        let o = [ObscuredName::new("ge", 14).unwrap()];
        assert_eq!(match_obscured(&o, &[cand("gendercritical", 5)]), vec![Some("gendercritical".into())]);
    }

    #[test]
    fn most_populous_wins() {
        let o = [ObscuredName::new("da", 15).unwrap()];
        let c = [cand("darkjokecentra1", 10), cand("darkjokecentral", 9000)];
        assert_eq!(match_obscured(&o, &c), vec![Some("darkjokecentral".into())]);
    }

    #[test]
    fn surplus_obscured_unmatched() {
        let o = [ObscuredName::new("xx", 5).unwrap(), ObscuredName::new("xx", 5).unwrap()];
        assert_eq!(match_obscured(&o, &[cand("xxabc", 1)]), vec![Some("xxabc".into()), None]);
    }

    #[test]
    fn prefix_is_case_insensitive() {
        let o = [ObscuredName::new("th", 9).unwrap()];
        assert_eq!(match_obscured(&o, &[cand("The_Donald", 1), cand("TheDonald", 2)]), vec![Some("TheDonald".into())]);
    }

    #[test]
    fn io_round_trip() {
        let obs = read_obscured("# list\nge****\n\nda***\n".as_bytes()).unwrap();
        assert_eq!(obs.len(), 2);
        let cands = read_candidates("name,population\ngenzed,4\ndaddy,0\n".as_bytes()).unwrap();
        let m = match_obscured(&obs, &cands);
        let mut buf = Vec::new();
        write_matches_csv(&mut buf, &obs, &m).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "obscured,matched\nge****,genzed\nda***,daddy\n");
        assert!(read_obscured("bad*x\n".as_bytes()).is_err());
    }
}
