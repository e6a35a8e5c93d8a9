//! Sparse additive log-deviation keyword model.
//!
//! Community token counts `c` are modelled as a multinomial with word
//! probabilities `softmax(background + eta)`, where `background` is the log
//! frequency of a population baseline and `eta` is a sparse deviation. The
//! fit minimises the per-token negative log-likelihood plus `λ‖eta‖₁`:
//!
//! ```text
//! F(eta) = logsumexp(background + eta) - Σ_w (c_w / C)(background_w + eta_w) + λ Σ_w |eta_w|
//! ```
//!
//! `λ` is tuned by a golden-section search on held-out likelihood, and the
//! minimiser is found by accelerated proximal gradient with backtracking.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FrequencyTable;
use crate::divergence::{rank_descending, VocabularyList, WordContribution};
use crate::{Error, Result};

/// Real-valued word counts for an estimated population corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationBaseline {
    counts: BTreeMap<String, f64>,
}

impl PopulationBaseline {
    pub fn get(&self, word: &str) -> f64 {
        self.counts.get(word).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }
}

/// Scale a sampled baseline up to the size of the whole platform over the
/// ID range and add the community's out-of-vocabulary words.
///
/// The platform comment count is `last_id - first_id`; the platform word
/// count is that times the baseline's mean words per comment. Each baseline
/// word receives its share of that word count, and community words missing
/// from the baseline are added with their exact community counts.
pub fn estimate_population_baseline(
    baseline: &FrequencyTable,
    baseline_comments: u64,
    first_id: u64,
    last_id: u64,
    community: &FrequencyTable,
) -> Result<PopulationBaseline> {
    if last_id <= first_id {
        return Err(Error::invalid(format!("last id {last_id} must exceed first id {first_id}")));
    }
    if baseline.is_empty() {
        return Err(Error::invalid("population estimate needs a non-empty baseline"));
    }
    if baseline_comments == 0 {
        return Err(Error::invalid("population estimate needs a positive baseline comment count"));
    }
    let platform_comments = (last_id - first_id) as f64;
    let per_comment = baseline_comments as f64;
    // W * pmf(w) = (comments * total / n_comments) * (count / total)
    let mut counts: BTreeMap<String, f64> = baseline
        .iter()
        .map(|(w, c)| (w.to_string(), platform_comments * c as f64 / per_comment))
        .collect();
    for (w, c) in community.iter() {
        counts.entry(w.to_string()).or_insert(c as f64);
    }
    Ok(PopulationBaseline { counts })
}

/// How the L1 weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// Golden-section search over `log λ` maximising held-out likelihood.
    SelfTuned,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageConfig {
    pub regularization: Regularization,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub holdout_fraction: f64,
    /// Number of held-out evaluations made by the golden-section search.
    pub search_points: usize,
    /// Lower end of the λ search bracket, as a fraction of the smallest λ that zeroes every coefficient.
    pub search_floor: f64,
    pub seed: u64,
}

impl Default for SageConfig {
    fn default() -> Self {
        SageConfig {
            regularization: Regularization::SelfTuned,
            tolerance: 1e-6,
            max_iterations: 10_000,
            holdout_fraction: 0.1,
            search_points: 5,
            search_floor: 1e-4,
            seed: 0x5a6e,
        }
    }
}

/// The smooth part of the objective for one community against one background.
#[derive(Debug, Clone)]
pub struct SageProblem {
    pub words: Vec<String>,
    pub background_logprob: Vec<f64>,
    pub counts: Vec<f64>,
    total: f64,
}

impl SageProblem {
    pub fn new(community: &FrequencyTable, population: &PopulationBaseline) -> Result<Self> {
        if population.is_empty() {
            return Err(Error::invalid("empty population baseline"));
        }
        if community.total() == 0 {
            return Err(Error::invalid("empty community table"));
        }
        if let Some((w, _)) = community.iter().find(|(w, _)| !(population.get(w) > 0.0)) {
            return Err(Error::invalid(format!("community word {w:?} missing from the population baseline")));
        }
        let z: f64 = population.total();
        let mut words = Vec::with_capacity(population.len());
        let mut background_logprob = Vec::with_capacity(population.len());
        let mut counts = Vec::with_capacity(population.len());
        for (w, c) in population.iter().filter(|(_, c)| *c > 0.0) {
            words.push(w.to_string());
            background_logprob.push((c / z).ln());
            counts.push(community.get(w) as f64);
        }
        Ok(Self::from_parts(words, background_logprob, counts))
    }

    pub fn from_parts(words: Vec<String>, background_logprob: Vec<f64>, counts: Vec<f64>) -> Self {
        let total = counts.iter().sum();
        SageProblem { words, background_logprob, counts, total }
    }

    fn with_counts(&self, counts: Vec<f64>) -> Self {
        Self::from_parts(self.words.clone(), self.background_logprob.clone(), counts)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Model probabilities into `probs`; returns `logsumexp(background + eta)`.
    fn softmax_into(&self, eta: &[f64], probs: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (i, (&b, &e)) in self.background_logprob.iter().zip(eta).enumerate() {
            probs[i] = b + e;
            max = max.max(probs[i]);
        }
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            sum += *p;
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        max + sum.ln()
    }

    fn smooth_from_lse(&self, lse: f64, eta: &[f64]) -> f64 {
        let mut linear = 0.0;
        for ((&c, &b), &e) in self.counts.iter().zip(&self.background_logprob).zip(eta) {
            if c > 0.0 {
                linear += c * (b + e);
            }
        }
        lse - linear / self.total
    }

    /// Per-token negative log-likelihood.
    pub fn smooth_objective(&self, eta: &[f64]) -> f64 {
        let mut probs = vec![0.0; self.len()];
        let lse = self.softmax_into(eta, &mut probs);
        self.smooth_from_lse(lse, eta)
    }

    /// Gradient of [`SageProblem::smooth_objective`]: `softmax - c / C`.
    pub fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        let mut probs = vec![0.0; self.len()];
        self.softmax_into(eta, &mut probs);
        probs.iter().zip(&self.counts).map(|(p, c)| p - c / self.total).collect()
    }

    pub fn objective(&self, eta: &[f64], lambda: f64) -> f64 {
        self.smooth_objective(eta) + lambda * l1_norm(eta)
    }

    /// Smallest λ for which `eta = 0` is optimal.
    pub fn lambda_max(&self) -> f64 {
        let zero = vec![0.0; self.len()];
        self.gradient(&zero).iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Log-likelihood of `counts` under the model at `eta`.
    pub fn log_likelihood_of(&self, counts: &[f64], eta: &[f64]) -> f64 {
        let mut probs = vec![0.0; self.len()];
        let lse = self.softmax_into(eta, &mut probs);
        counts
            .iter()
            .zip(&self.background_logprob)
            .zip(eta)
            .filter(|((&c, _), _)| c > 0.0)
            .map(|((&c, &b), &e)| c * (b + e - lse))
            .sum()
    }
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Infinity norm of the minimum-norm subgradient of `F` at `eta`.
pub fn optimality_residual(gradient: &[f64], eta: &[f64], lambda: f64) -> f64 {
    gradient
        .iter()
        .zip(eta)
        .map(|(&g, &e)| {
            if e > 0.0 {
                (g + lambda).abs()
            } else if e < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Minimise `F` for a fixed λ starting from `start`.
pub fn solve_fixed_lambda(
    problem: &SageProblem,
    lambda: f64,
    start: Option<&[f64]>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Solution> {
    let n = problem.len();
    let mut x: Vec<f64> = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut probs = vec![0.0; n];
    let mut grad = vec![0.0; n];

    let eval = |point: &[f64], probs: &mut [f64], grad: &mut [f64]| -> f64 {
        let lse = problem.softmax_into(point, probs);
        for i in 0..n {
            grad[i] = probs[i] - problem.counts[i] / problem.total;
        }
        problem.smooth_from_lse(lse, point)
    };

    let mut f_x = eval(&x, &mut probs, &mut grad);
    let mut residual = optimality_residual(&grad, &x, lambda);
    if residual < tolerance {
        return Ok(Solution { eta: x, iterations: 0, residual });
    }
    let max_prob = probs.iter().fold(0.0f64, |m, &p| m.max(p));
    let mut step = 1.0 / max_prob.max(1e-12);
    let mut big_f_x = f_x + lambda * l1_norm(&x);

    let mut y = x.clone();
    let mut f_y = f_x;
    let mut grad_y = grad.clone();
    let mut theta = 1.0f64;
    let mut z = vec![0.0; n];
    let mut grad_z = vec![0.0; n];

    for iteration in 1..=max_iterations {
        // backtracking on the smooth part around y
        let f_z = loop {
            for i in 0..n {
                z[i] = soft_threshold(y[i] - step * grad_y[i], step * lambda);
            }
            let f_z = eval(&z, &mut probs, &mut grad_z);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let d = z[i] - y[i];
                lin += grad_y[i] * d;
                sq += d * d;
            }
            // the Hessian diag(p) - pp' is bounded by max p <= 1, so step 1 always suffices
            if step <= 1.0 || f_z <= f_y + lin + sq / (2.0 * step) + 1e-15 * f_y.abs() {
                break f_z;
            }
            step *= 0.5;
        };
        let big_f_z = f_z + lambda * l1_norm(&z);

        if big_f_z > big_f_x && theta > 1.0 {
            // momentum overshot: restart from the last accepted point
            theta = 1.0;
            y.copy_from_slice(&x);
            f_y = f_x;
            grad_y.copy_from_slice(&grad);
            continue;
        }

        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let momentum = (theta - 1.0) / theta_next;
        for i in 0..n {
            y[i] = z[i] + momentum * (z[i] - x[i]);
        }
        std::mem::swap(&mut x, &mut z);
        std::mem::swap(&mut grad, &mut grad_z);
        f_x = f_z;
        big_f_x = big_f_z;
        theta = theta_next;

        residual = optimality_residual(&grad, &x, lambda);
        if residual < tolerance {
            return Ok(Solution { eta: x, iterations: iteration, residual });
        }
        if momentum == 0.0 {
            f_y = f_x;
            grad_y.copy_from_slice(&grad);
        } else {
            f_y = eval(&y, &mut probs, &mut grad_y);
        }
    }
    Err(Error::NonConvergence { iterations: max_iterations, gradient_norm: residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SageFit {
    pub words: Vec<String>,
    pub eta: Vec<f64>,
    pub background_logprob: Vec<f64>,
    pub community_counts: Vec<f64>,
    pub regularization: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl SageFit {
    pub fn eta_of(&self, word: &str) -> Option<f64> {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).ok().map(|i| self.eta[i])
    }

    pub fn eta_map(&self) -> BTreeMap<&str, f64> {
        self.words.iter().map(String::as_str).zip(self.eta.iter().copied()).collect()
    }

    /// `word,eta` sorted by eta descending, ties by word.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut order: Vec<usize> = (0..self.words.len()).collect();
        order.sort_by(|&a, &b| self.eta[b].total_cmp(&self.eta[a]).then_with(|| self.words[a].cmp(&self.words[b])));
        let mut wtr = crate::csv_writer(out);
        wtr.write_record(["word", "eta"])?;
        for i in order {
            wtr.write_record([self.words[i].as_str(), &self.eta[i].to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Deterministic 90/10 style token split of the community counts.
fn split_tokens(counts: &[f64], holdout_fraction: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut tokens: Vec<u32> = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        tokens.extend(std::iter::repeat_n(i as u32, c as usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tokens.shuffle(&mut rng);
    let n_hold = ((tokens.len() as f64) * holdout_fraction).round() as usize;
    let mut train = vec![0.0; counts.len()];
    let mut held = vec![0.0; counts.len()];
    for (k, &i) in tokens.iter().enumerate() {
        if k < n_hold {
            held[i as usize] += 1.0;
        } else {
            train[i as usize] += 1.0;
        }
    }
    (train, held)
}

/// Golden-section search over `log λ` for the held-out likelihood maximum.
pub fn tune_lambda(problem: &SageProblem, config: &SageConfig) -> Result<f64> {
    let (train, held) = split_tokens(&problem.counts, config.holdout_fraction, config.seed);
    if train.iter().all(|&c| c == 0.0) || held.iter().all(|&c| c == 0.0) {
        return Ok(problem.lambda_max().max(f64::MIN_POSITIVE));
    }
    let training = problem.with_counts(train);
    let hi = training.lambda_max();
    if !(hi > 0.0) {
        return Ok(f64::MIN_POSITIVE);
    }
    let (mut a, mut b) = ((hi * config.search_floor).ln(), hi.ln());
    let ratio = (5f64.sqrt() - 1.0) / 2.0;

    let mut warm: Option<Vec<f64>> = None;
    let mut score = |log_lambda: f64| -> Result<f64> {
        let sol = solve_fixed_lambda(&training, log_lambda.exp(), warm.as_deref(), config.tolerance, config.max_iterations)?;
        let ll = training.log_likelihood_of(&held, &sol.eta);
        warm = Some(sol.eta);
        Ok(ll)
    };

    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = score(c)?;
    let mut fd = score(d)?;
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 2..config.search_points.max(2) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = score(c)?;
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = score(d)?;
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best.0.exp())
}

pub fn fit_sage(community: &FrequencyTable, population: &PopulationBaseline, config: &SageConfig) -> Result<SageFit> {
    let problem = SageProblem::new(community, population)?;
    fit_problem(&problem, config)
}

pub fn fit_problem(problem: &SageProblem, config: &SageConfig) -> Result<SageFit> {
    let lambda = match config.regularization {
        Regularization::Fixed(l) if l > 0.0 => l,
        Regularization::Fixed(l) => return Err(Error::invalid(format!("regularization must be positive, got {l}"))),
        Regularization::SelfTuned => tune_lambda(problem, config)?,
    };
    let sol = solve_fixed_lambda(problem, lambda, None, config.tolerance, config.max_iterations)?;
    Ok(SageFit {
        words: problem.words.clone(),
        eta: sol.eta,
        background_logprob: problem.background_logprob.clone(),
        community_counts: problem.counts.clone(),
        regularization: lambda,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Positive-eta words ranked by eta descending, truncated to `k`.
pub fn sage_top_k(fit: &SageFit, k: usize) -> VocabularyList {
    let total: f64 = fit.community_counts.iter().sum();
    let mut entries: Vec<WordContribution> = (0..fit.words.len())
        .filter(|&i| fit.eta[i] > 0.0)
        .map(|i| WordContribution {
            word: fit.words[i].clone(),
            contribution: fit.eta[i],
            p_rate: fit.background_logprob[i].exp(),
            q_rate: if total > 0.0 { fit.community_counts[i] / total } else { 0.0 },
        })
        .collect();
    rank_descending(&mut entries);
    entries.truncate(k);
    VocabularyList::new("", entries)
}

pub fn vocab_overlap(a: &VocabularyList, b: &VocabularyList) -> usize {
    let set: HashSet<&str> = a.word_set();
    b.word_set().iter().filter(|w| set.contains(*w)).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub community_a: String,
    pub community_b: String,
    pub overlap: usize,
}

pub fn write_overlap_csv<W: Write>(out: W, rows: &[OverlapRow]) -> Result<()> {
    let mut wtr = crate::csv_writer(out);
    wtr.write_record(["community_a", "community_b", "overlap"])?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
