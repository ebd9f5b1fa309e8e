//! Metrics over a completed table of proxy scores and trained results:
//! top-k performance gaps, talent rate, Spearman correlation, the random
//! search baseline and noise robustness.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{add_gaussian_noise, WindowedDataset};
use crate::error::{Result, ZcpError};
use crate::proxies::{ProxyName, ProxyScore};
use crate::stats::{average_ranks, mean, pearson, std_dev};

pub const NOISE_VARIANCES: [f64; 5] = [0.0, 0.001, 0.01, 0.05, 0.5];

/// One architecture's proxy scores joined with its training outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub spec_hash: String,
    pub scores: BTreeMap<ProxyName, ProxyScore>,
    #[serde(with = "crate::float_serde")]
    pub best_val_f1: f64,
    #[serde(with = "crate::float_serde")]
    pub test_f1: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    rows: Vec<TableRow>,
    proxies: Vec<ProxyName>,
}

impl ResultsTable {
    /// Requires unique spec hashes and the same proxy columns on every row.
    pub fn new(rows: Vec<TableRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.spec_hash.as_str()) {
                return Err(ZcpError::DuplicateKey(r.spec_hash.clone()));
            }
        }
        let proxies: Vec<ProxyName> = rows.first().map(|r| r.scores.keys().copied().collect()).unwrap_or_default();
        for r in &rows {
            if !r.scores.keys().copied().eq(proxies.iter().copied()) {
                return Err(ZcpError::MissingProxy(format!("row {} has an incomplete proxy set", r.spec_hash)));
            }
        }
        Ok(Self { rows, proxies })
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn proxies(&self) -> &[ProxyName] {
        &self.proxies
    }

    fn score(&self, i: usize, proxy: ProxyName) -> Result<f64> {
        self.rows[i]
            .scores
            .get(&proxy)
            .map(ProxyScore::rank_key)
            .ok_or_else(|| ZcpError::MissingProxy(proxy.to_string()))
    }

    /// Row indices from best to worst proxy score; ties by spec hash.
    pub fn proxy_order(&self, proxy: ProxyName) -> Result<Vec<usize>> {
        let keys = (0..self.len()).map(|i| self.score(i, proxy)).collect::<Result<Vec<_>>>()?;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then_with(|| self.hash_cmp(a, b)));
        Ok(idx)
    }

    /// Row indices from best to worst validation F1; diverged runs last.
    pub fn trained_order(&self) -> Vec<usize> {
        let keys: Vec<f64> = (0..self.len()).map(|i| self.val_key(i)).collect();
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then_with(|| self.hash_cmp(a, b)));
        idx
    }

    fn val_key(&self, i: usize) -> f64 {
        let r = &self.rows[i];
        if r.diverged || !r.best_val_f1.is_finite() {
            f64::NEG_INFINITY
        } else {
            r.best_val_f1
        }
    }

    fn hash_cmp(&self, a: usize, b: usize) -> Ordering {
        self.rows[a].spec_hash.cmp(&self.rows[b].spec_hash)
    }

    /// Best non-diverged row by validation F1 among `candidates`.
    pub fn select_by_val(&self, candidates: &[usize]) -> Option<usize> {
        candidates
            .iter()
            .copied()
            .filter(|&i| !self.rows[i].diverged)
            .min_by(|&a, &b| self.val_key(b).total_cmp(&self.val_key(a)).then_with(|| self.hash_cmp(a, b)))
    }

    fn best_trained_test(&self) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.select_by_val(&all)
            .map(|i| self.rows[i].test_f1)
            .ok_or_else(|| ZcpError::Degenerate("every run diverged".into()))
    }

    fn delta_for(&self, best_test: f64, candidates: &[usize]) -> f64 {
        best_test - self.select_by_val(candidates).map_or(0.0, |i| self.rows[i].test_f1)
    }
}

fn check_k(table: &ResultsTable, k: usize) -> Result<()> {
    if k == 0 || k > table.len() {
        return Err(ZcpError::InvalidArgument(format!("k = {k} outside 1..={}", table.len())));
    }
    Ok(())
}

/// Detail of a top-k selection.
#[derive(Clone, Debug, PartialEq)]
pub struct TopKSelection {
    pub delta: f64,
    /// Row chosen among the top-k by validation F1 (`None` if all diverged).
    pub candidate: Option<usize>,
}

pub fn top_k_selection(table: &ResultsTable, proxy: ProxyName, k: usize) -> Result<TopKSelection> {
    check_k(table, k)?;
    let best = table.best_trained_test()?;
    let order = table.proxy_order(proxy)?;
    let top = &order[..k];
    Ok(TopKSelection {
        delta: table.delta_for(best, top),
        candidate: table.select_by_val(top),
    })
}

/// Test-F1 gap between the best fully trained model and the best (by
/// validation F1) of the proxy's top `k`. May be negative.
pub fn delta_k(table: &ResultsTable, proxy: ProxyName, k: usize) -> Result<f64> {
    top_k_selection(table, proxy, k).map(|s| s.delta)
}

/// `ceil(pct · N / 100)`, at least 1.
pub fn percent_k(n: usize, pct: f64) -> Result<usize> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(ZcpError::InvalidArgument(format!("percentage {pct} outside (0, 100]")));
    }
    Ok(((pct * n as f64 / 100.0).ceil() as usize).clamp(1, n.max(1)))
}

pub fn delta_percent(table: &ResultsTable, proxy: ProxyName, pct: f64) -> Result<f64> {
    delta_k(table, proxy, percent_k(table.len(), pct)?)
}

/// Share (in percent) of the proxy's top `pct` % that is also in the top
/// `pct` % by validation F1.
pub fn talent_rate(table: &ResultsTable, proxy: ProxyName, pct: f64) -> Result<f64> {
    if table.len() < 10 {
        return Err(ZcpError::InvalidArgument(format!(
            "talent rate needs at least 10 rows, got {}",
            table.len()
        )));
    }
    let k = percent_k(table.len(), pct)?;
    let predicted: HashSet<usize> = table.proxy_order(proxy)?[..k].iter().copied().collect();
    let trained = &table.trained_order()[..k];
    let hits = trained.iter().filter(|i| predicted.contains(i)).count();
    Ok(hits as f64 / k as f64 * 100.0)
}

/// Spearman correlation of two columns with average ranks on ties.
pub fn spearman_columns(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ZcpError::InvalidArgument(format!(
            "spearman needs two equal columns of length >= 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| ZcpError::Degenerate("zero-variance column in spearman".into()))
}

/// Spearman correlation between proxy scores and validation F1.
pub fn spearman(table: &ResultsTable, proxy: ProxyName) -> Result<f64> {
    let x = (0..table.len()).map(|i| table.score(i, proxy)).collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = (0..table.len()).map(|i| table.val_key(i)).collect();
    spearman_columns(&x, &y)
}

/// Spearman correlation between proxy scores and an arbitrary per-row
/// performance column (e.g. test F1 under noise).
pub fn spearman_against(table: &ResultsTable, proxy: ProxyName, perf: &[f64]) -> Result<f64> {
    let x = (0..table.len()).map(|i| table.score(i, proxy)).collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = perf
        .iter()
        .zip(table.rows())
        .map(|(&v, r)| if r.diverged || !v.is_finite() { f64::NEG_INFINITY } else { v })
        .collect();
    spearman_columns(&x, &y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchStats {
    pub k: usize,
    pub trials: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
}

/// Per trial: draw `k` rows without replacement, keep the best by
/// validation F1 and record its test-F1 gap to the best trained model.
pub fn random_search_baseline(table: &ResultsTable, k: usize, trials: usize, seed: u64) -> Result<RandomSearchStats> {
    check_k(table, k)?;
    if trials == 0 {
        return Err(ZcpError::InvalidArgument("random search needs at least one trial".into()));
    }
    let best = table.best_trained_test()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deltas: Vec<f64> = (0..trials)
        .map(|_| {
            let picked = sample(&mut rng, table.len(), k).into_vec();
            table.delta_for(best, &picked)
        })
        .collect();
    Ok(RandomSearchStats {
        k,
        trials,
        mean_delta: mean(&deltas),
        std_delta: std_dev(&deltas),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    pub proxy: ProxyName,
    pub delta_1: f64,
    pub delta_10: f64,
    pub delta_10pct: f64,
    pub talent_rate: Option<f64>,
    pub spearman_rho: Option<f64>,
    /// Validation F1 of the row picked for Δ1 / Δ10 (`None` if every
    /// candidate diverged).
    pub delta_1_candidate_val_f1: Option<f64>,
    pub delta_10_candidate_val_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub pct: f64,
    pub top_k: usize,
    pub random_search_trials: usize,
    pub random_search_seed: u64,
    /// Sample sizes for the random-search baseline. The `pct` share of the
    /// table is always added.
    pub random_search_ks: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            pct: 10.0,
            top_k: 10,
            random_search_trials: 1000,
            random_search_seed: 0,
            random_search_ks: vec![1, 10],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_rows: usize,
    pub best_trained_test_f1: f64,
    pub proxies: Vec<ProxyMetrics>,
    pub random_search: Vec<RandomSearchStats>,
}

/// Computes every metric for every proxy column. `top_k` is capped at the
/// table size.
pub fn evaluate_table(table: &ResultsTable, settings: &EvalSettings) -> Result<EvalReport> {
    if table.is_empty() {
        return Err(ZcpError::Empty("results table".into()));
    }
    let n = table.len();
    let best = table.best_trained_test()?;
    let val_of = |c: Option<usize>| c.map(|i| table.rows()[i].best_val_f1);
    let proxies = table
        .proxies()
        .iter()
        .map(|&p| {
            let one = top_k_selection(table, p, 1)?;
            let ten = top_k_selection(table, p, settings.top_k.min(n))?;
            Ok(ProxyMetrics {
                proxy: p,
                delta_1: one.delta,
                delta_10: ten.delta,
                delta_10pct: delta_percent(table, p, settings.pct)?,
                talent_rate: talent_rate(table, p, settings.pct).ok(),
                spearman_rho: spearman(table, p).ok(),
                delta_1_candidate_val_f1: val_of(one.candidate),
                delta_10_candidate_val_f1: val_of(ten.candidate),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ks: Vec<usize> = settings.random_search_ks.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    ks.push(percent_k(n, settings.pct)?);
    ks.sort_unstable();
    ks.dedup();
    let random_search = ks
        .iter()
        .map(|&k| random_search_baseline(table, k, settings.random_search_trials, settings.random_search_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        n_rows: n,
        best_trained_test_f1: best,
        proxies,
        random_search,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), |x| x.to_string())
}

impl EvalReport {
    /// `proxy,metric,value`: one row per (proxy, metric), then the random
    /// search baseline under proxy `random_search`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("proxy,metric,value\n");
        for m in &self.proxies {
            let rows = [
                ("delta_1", Some(m.delta_1)),
                ("delta_10", Some(m.delta_10)),
                ("delta_10pct", Some(m.delta_10pct)),
                ("talent_rate", m.talent_rate),
                ("spearman_rho", m.spearman_rho),
                ("delta_1_candidate_val_f1", m.delta_1_candidate_val_f1),
                ("delta_10_candidate_val_f1", m.delta_10_candidate_val_f1),
            ];
            for (name, v) in rows {
                let _ = writeln!(s, "{},{},{}", m.proxy, name, fmt_opt(v));
            }
        }
        for r in &self.random_search {
            let _ = writeln!(s, "random_search,delta_mean_k{},{}", r.k, r.mean_delta);
            let _ = writeln!(s, "random_search,delta_std_k{},{}", r.k, r.std_delta);
        }
        s
    }

    /// `k,trials,mean_delta,std_delta`
    pub fn random_search_csv(&self) -> String {
        let mut s = String::from("k,trials,mean_delta,std_delta\n");
        for r in &self.random_search {
            let _ = writeln!(s, "{},{},{},{}", r.k, r.trials, r.mean_delta, r.std_delta);
        }
        s
    }
}

/// Spearman correlations of each proxy against test F1 at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub variance: f64,
    pub test_f1: Vec<f64>,
    pub spearman: BTreeMap<ProxyName, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    /// Correlations against the stored (noiseless) test F1.
    pub noiseless: BTreeMap<ProxyName, Option<f64>>,
    pub levels: Vec<NoiseLevel>,
}

impl NoiseReport {
    /// `variance,proxy,spearman_rho`; the noiseless reference is written with
    /// variance `reference`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variance,proxy,spearman_rho\n");
        for (p, v) in &self.noiseless {
            let _ = writeln!(s, "reference,{p},{}", fmt_opt(*v));
        }
        for level in &self.levels {
            for (p, v) in &level.spearman {
                let _ = writeln!(s, "{},{p},{}", level.variance, fmt_opt(*v));
            }
        }
        s
    }
}

/// Re-evaluates every row's test F1 on noisy copies of `test` (one seeded
/// draw per variance) and correlates it with each proxy.
///
/// `evaluate(row_index, dataset)` must return the test macro F1 of that
/// row's trained model on `dataset`.
pub fn noise_robustness<F>(
    table: &ResultsTable,
    test: &WindowedDataset,
    variances: &[f64],
    seed: u64,
    evaluate: F,
) -> Result<NoiseReport>
where
    F: Fn(usize, &WindowedDataset) -> Result<f64> + Sync,
{
    let stored: Vec<f64> = table.rows().iter().map(|r| r.test_f1).collect();
    let correlate = |perf: &[f64]| -> BTreeMap<ProxyName, Option<f64>> {
        table
            .proxies()
            .iter()
            .map(|&p| (p, spearman_against(table, p, perf).ok()))
            .collect()
    };
    let noiseless = correlate(&stored);
    let mut levels = Vec::with_capacity(variances.len());
    for (vi, &variance) in variances.iter().enumerate() {
        let noisy = add_gaussian_noise(test, variance, seed.wrapping_add(vi as u64))?;
        let test_f1 = (0..table.len())
            .into_par_iter()
            .map(|i| evaluate(i, &noisy))
            .collect::<Result<Vec<_>>>()?;
        levels.push(NoiseLevel {
            variance,
            spearman: correlate(&test_f1),
            test_f1,
        });
    }
    Ok(NoiseReport { noiseless, levels })
}
