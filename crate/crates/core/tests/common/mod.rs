#![allow(dead_code)]

use std::collections::BTreeMap;

use divlens::corpus::FrequencyTable;
use rand::Rng;

/// Average 1-based positions of equal values.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&x| x < v).count() as f64;
            let equal = values.iter().filter(|&&x| x == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn two_sided_from(null: &[f64], observed: f64) -> f64 {
    let total = null.len() as f64;
    let lower = null.iter().filter(|&&s| s <= observed).count() as f64 / total;
    let upper = null.iter().filter(|&&s| s >= observed).count() as f64 / total;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Signed-rank statistic and p-value by enumerating every sign assignment.
pub fn signed_rank_oracle(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    let diffs: Vec<f64> = pairs.iter().map(|&(b, a)| a - b).filter(|&d| d != 0.0).collect();
    if diffs.is_empty() {
        return None;
    }
    let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = diffs.len();
    let null: Vec<f64> = (0u32..1 << n)
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum())
        .collect();
    Some((observed, two_sided_from(&null, observed)))
}

/// Rank-sum U of `a` and its p-value by enumerating every relabelling.
pub fn rank_sum_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let big_n = pooled.len();
    let na = a.len();
    let observed: f64 = ranks[..na].iter().sum();
    let null: Vec<f64> = (0u32..1 << big_n)
        .filter(|m| m.count_ones() as usize == na)
        .map(|mask| (0..big_n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum())
        .collect();
    let u = observed - (na * (na + 1)) as f64 / 2.0;
    (u, two_sided_from(&null, observed))
}

/// `q_i = min over sorted positions k at or after p_i of min(1, p_(k) m / k)`.
pub fn bh_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    p.iter()
        .map(|&pi| {
            let first = sorted.iter().position(|&s| s == pi).unwrap();
            (first..m).map(|k| (sorted[k] * m as f64 / (k + 1) as f64).min(1.0)).fold(1.0, f64::min)
        })
        .collect()
}

/// Indices rejected by the step-up rule at level `alpha`.
pub fn bh_rejections(p: &[f64], alpha: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let cutoff = (1..=m).rev().find(|&k| p[order[k - 1]] <= k as f64 * alpha / m as f64);
    let mut out: Vec<usize> = cutoff.map(|k| order[..k].to_vec()).unwrap_or_default();
    out.sort();
    out
}

fn entropy(probs: impl Iterator<Item = f64>) -> f64 {
    probs.filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
}

/// Divergence in bits as `H(M) - (H(P) + H(Q)) / 2`.
pub fn jsd_entropy(p: &FrequencyTable, q: &FrequencyTable) -> f64 {
    let mut union: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (w, c) in p.iter() {
        union.entry(w).or_default().0 = c as f64 / p.total() as f64;
    }
    for (w, c) in q.iter() {
        union.entry(w).or_default().1 = c as f64 / q.total() as f64;
    }
    let hm = entropy(union.values().map(|(a, b)| 0.5 * (a + b)));
    let hp = entropy(union.values().map(|v| v.0));
    let hq = entropy(union.values().map(|v| v.1));
    hm - 0.5 * (hp + hq)
}

/// A table over words `w0..w{vocab}` with some zero cells, never empty.
pub fn random_table(rng: &mut impl Rng, vocab: usize) -> FrequencyTable {
    let mut t = FrequencyTable::new();
    for i in 0..vocab {
        if rng.random_bool(0.7) {
            t.add(&format!("w{i}"), rng.random_range(1..500));
        }
    }
    if t.is_empty() {
        t.add("w0", 1);
    }
    t
}

/// Small integers so ties and zero differences are common.
pub fn tied_sample(rng: &mut impl Rng, n: usize, spread: i32) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-spread..=spread) as f64).collect()
}

pub type Fixture = (Vec<&'static str>, Vec<(&'static str, u64)>, Vec<Option<&'static str>>);

/// Twelve obscured names with their expected resolutions, plus candidates.
///
/// - `ge` length 6: two entries, two candidates
/// - `fo` length 5: three entries, two candidates
/// - `ba` length 8: two entries, three candidates
/// - `ch` length 6: equal populations resolved by name
/// - `an` length 4: uppercase visible prefix, wrong-length candidate ignored
/// - `zz` length 5: no candidates
/// - `qu` length 3: single pair
pub fn deobfuscation_fixture() -> Fixture {
    let obscured = vec![
        "ge****", "fo***", "ba******", "ch****", "AN**", "fo***", "ge****", "zz***", "ba******", "ch****", "fo***", "qu*",
    ];
    let candidates = vec![
        ("Geneva", 300),
        ("gentoo", 500),
        ("forum", 100),
        ("focus", 90),
        ("bagpipes", 50),
        ("baseball", 1000),
        ("balloons", 700),
        ("cheese", 40),
        ("chorus", 10),
        ("chairs", 40),
        ("anime", 9000),
        ("ants", 3),
        ("Anon", 3),
        ("quo", 1),
        ("gentoo", 1),
    ];
    let expected = vec![
        Some("gentoo"),
        Some("forum"),
        Some("baseball"),
        Some("chairs"),
        Some("Anon"),
        Some("focus"),
        Some("Geneva"),
        None,
        Some("balloons"),
        Some("cheese"),
        None,
        Some("quo"),
    ];
    (obscured, candidates, expected)
}
