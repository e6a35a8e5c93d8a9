//! Wilcoxon signed-rank and rank-sum tests with Benjamini-Hochberg correction.
//!
//! Both tests work on doubled midranks so that tied ranks stay integral and
//! the exact null distributions can be tabulated by dynamic programming.
//! Exact p-values are used up to [`SIGNED_RANK_EXACT_MAX`] non-zero
//! differences and [`RANK_SUM_EXACT_MAX`] pooled observations; beyond that
//! a tie-corrected normal approximation with continuity correction is used.
//! All p-values are two-sided: twice the smaller tail, capped at 1.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

pub const SIGNED_RANK_EXACT_MAX: usize = 25;
pub const RANK_SUM_EXACT_MAX: usize = 20;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    SignedRank,
    RankSum,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::SignedRank => "signed_rank",
            TestMethod::RankSum => "rank_sum",
        }
    }
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    /// W+ for the signed-rank test, U of the first sample for rank-sum.
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size; the second sample's size for rank-sum.
    pub n: usize,
    pub n_other: Option<usize>,
    pub exact: bool,
    pub q_value: Option<f64>,
}

impl TestResult {
    pub fn sample_sizes(&self) -> String {
        match self.n_other {
            Some(m) => format!("{}/{}", self.n, m),
            None => self.n.to_string(),
        }
    }
}

/// Doubled midranks of `values` (1-based), in input order.
pub fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1 share the rank (i + j + 2) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the groups of equal values.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

pub(crate) fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_two_sided(deviation: f64, variance: f64) -> f64 {
    if !(variance > 0.0) {
        return 1.0;
    }
    let z = (deviation.abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("test inputs must be finite"));
    }
    Ok(())
}

/// Exact null distribution of the doubled positive-rank sum: `counts[s]` is
/// the number of sign assignments giving doubled sum `s`.
fn signed_rank_distribution(doubled_ranks: &[u64]) -> Vec<u64> {
    let max: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; max as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Paired test on `after - before`. Zero differences are dropped.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestResult> {
    check_finite(pairs.iter().flat_map(|&(a, b)| [a, b]))?;
    let diffs: Vec<f64> = pairs.iter().map(|&(b, a)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("every paired difference is zero".into()));
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&magnitudes);
    let w2: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let statistic = w2 as f64 / 2.0;

    let (p_value, exact) = if n <= SIGNED_RANK_EXACT_MAX {
        let counts = signed_rank_distribution(&ranks);
        let total = (1u64 << n) as f64;
        let w2 = w2 as usize;
        let lower: u64 = counts[..=w2].iter().sum();
        let upper: u64 = counts[w2..].iter().sum();
        (two_sided(lower as f64 / total, upper as f64 / total), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let ties: f64 = tie_groups(&magnitudes).iter().map(|&t| (t * t * t - t) as f64).sum();
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        (normal_two_sided(statistic - mean, variance), false)
    };
    Ok(TestResult { method: TestMethod::SignedRank, statistic, p_value, n, n_other: None, exact, q_value: None })
}

/// `table[k][s]`: number of `k`-subsets of the pooled sample whose doubled
/// rank sum is `s`.
fn rank_sum_distribution(doubled_ranks: &[u64], k_max: usize) -> Vec<Vec<u64>> {
    let max: u64 = doubled_ranks.iter().sum();
    let mut table = vec![vec![0u64; max as usize + 1]; k_max + 1];
    table[0][0] = 1;
    let mut reach = 0usize;
    for (taken, &r) in doubled_ranks.iter().enumerate() {
        let r = r as usize;
        for k in (1..=k_max.min(taken + 1)).rev() {
            for s in (0..=reach).rev() {
                let c = table[k - 1][s];
                if c > 0 {
                    table[k][s + r] += c;
                }
            }
        }
        reach += r;
    }
    table
}

/// Two-sample test of `a` against `b` using joint midranks.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("rank-sum test needs two non-empty samples"));
    }
    check_finite(a.iter().chain(b).copied())?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let r2: u64 = ranks[..na].iter().sum();
    let u2 = r2 - (na * (na + 1)) as u64;
    let statistic = u2 as f64 / 2.0;
    let big_n = na + nb;

    let (p_value, exact) = if big_n <= RANK_SUM_EXACT_MAX {
        let table = rank_sum_distribution(&ranks, na);
        let row = &table[na];
        let total: u64 = row.iter().sum();
        let r2 = r2 as usize;
        let lower: u64 = row[..=r2].iter().sum();
        let upper: u64 = row[r2..].iter().sum();
        (two_sided(lower as f64 / total as f64, upper as f64 / total as f64), true)
    } else {
        let (naf, nbf, nf) = (na as f64, nb as f64, big_n as f64);
        let mean = naf * nbf / 2.0;
        let ties: f64 = tie_groups(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
        let variance = naf * nbf / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
        (normal_two_sided(statistic - mean, variance), false)
    };
    Ok(TestResult {
        method: TestMethod::RankSum,
        statistic,
        p_value,
        n: na,
        n_other: Some(nb),
        exact,
        q_value: None,
    })
}

/// Benjamini-Hochberg step-up q-values, in input order.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::invalid(format!("p-value {p} outside (0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let candidate = (p_values[i] * m as f64 / (rank0 + 1) as f64).min(1.0);
        running = running.min(candidate);
        q[i] = running;
    }
    Ok(q)
}

/// Fill `q_value` on every result with one BH correction over the slice.
pub fn apply_fdr(results: &mut [TestResult]) -> Result<()> {
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    for (r, q) in results.iter_mut().zip(bh_fdr(&p)?) {
        r.q_value = Some(q);
    }
    Ok(())
}

/// One row of the per-community test battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub community: String,
    /// `top`, `random`, or `top_vs_random`.
    pub cohort: String,
    /// `activity` or `vocab`.
    pub metric: String,
    pub method: TestMethod,
    pub statistic: f64,
    pub n: String,
    pub p_value: f64,
    pub q_value: f64,
    #[serde(rename = "significant_at_0.05")]
    pub significant: bool,
}

pub fn write_battery_csv<W: Write>(out: W, rows: &[BatteryRow]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record([
        "community",
        "cohort",
        "metric",
        "method",
        "statistic",
        "n",
        "p_value",
        "q_value",
        "significant_at_0.05",
    ])?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_battery_csv<R: Read>(input: R) -> Result<Vec<BatteryRow>> {
    Ok(csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?)
}
