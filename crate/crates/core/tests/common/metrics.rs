//! Independent reference implementations of the ranking metrics.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use zcp_har::eval::{ResultsTable, TableRow};
use zcp_har::proxies::{ProxyName, ProxyScore};

pub const P: ProxyName = ProxyName::Snip;
pub const Q: ProxyName = ProxyName::Synflow;

pub fn row(hash: &str, score: f64, val: f64, test: f64) -> TableRow {
    TableRow {
        spec_hash: hash.into(),
        scores: BTreeMap::from([(P, ProxyScore::checked(P, score))]),
        best_val_f1: val,
        test_f1: test,
        diverged: false,
    }
}

/// Random table with coarse values so ties in scores, validation and test
/// F1 all occur; a few rows diverge and a few scores are degenerate.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize) -> ResultsTable {
    let rows = (0..n)
        .map(|_| {
            let score = |rng: &mut ChaCha8Rng, p| {
                if rng.gen_bool(0.1) {
                    ProxyScore::degenerate(p)
                } else {
                    ProxyScore::checked(p, rng.gen_range(0..5) as f64)
                }
            };
            let s_p = score(rng, P);
            let s_q = score(rng, Q);
            TableRow {
                spec_hash: format!("{:016x}", rng.gen::<u64>()),
                scores: BTreeMap::from([(P, s_p), (Q, s_q)]),
                best_val_f1: rng.gen_range(0..6) as f64 / 5.0,
                test_f1: rng.gen_range(0..6) as f64 / 5.0,
                diverged: rng.gen_bool(0.1),
            }
        })
        .collect();
    ResultsTable::new(rows).unwrap()
}

pub fn key(r: &TableRow, p: ProxyName) -> f64 {
    let s = r.scores[&p];
    if s.degenerate {
        f64::NEG_INFINITY
    } else {
        s.value
    }
}

pub fn val(r: &TableRow) -> f64 {
    if r.diverged {
        f64::NEG_INFINITY
    } else {
        r.best_val_f1
    }
}

/// Row `a` precedes row `b` under "higher value first, ties by hash".
pub fn ahead(va: f64, ha: &str, vb: f64, hb: &str) -> bool {
    va > vb || (va == vb && ha < hb)
}

/// Rows whose count of strictly-ahead rows is below `k`.
pub fn top_set(rows: &[TableRow], k: usize, value: impl Fn(&TableRow) -> f64) -> Vec<usize> {
    (0..rows.len())
        .filter(|&i| {
            let before = (0..rows.len())
                .filter(|&j| j != i && ahead(value(&rows[j]), &rows[j].spec_hash, value(&rows[i]), &rows[i].spec_hash))
                .count();
            before < k
        })
        .collect()
}

/// Non-diverged row in `set` that no other non-diverged member beats.
pub fn winner(rows: &[TableRow], set: &[usize]) -> Option<usize> {
    let live: Vec<usize> = set.iter().copied().filter(|&i| !rows[i].diverged).collect();
    live.iter().copied().find(|&i| {
        live.iter()
            .all(|&j| j == i || !ahead(rows[j].best_val_f1, &rows[j].spec_hash, rows[i].best_val_f1, &rows[i].spec_hash))
    })
}

pub fn oracle_delta(rows: &[TableRow], set: &[usize]) -> Option<f64> {
    let all: Vec<usize> = (0..rows.len()).collect();
    let best = rows[winner(rows, &all)?].test_f1;
    Some(best - winner(rows, set).map_or(0.0, |i| rows[i].test_f1))
}

pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

