use std::collections::BTreeMap;

use crate::error::{Result, ZcpError};
use crate::proxies::{ProxyName, ProxyScore};
use crate::stats::average_ranks;

/// Ranks mapped to `[0, 1]` (best = 1); degenerate scores tie at the bottom.
pub fn normalized_ranks(scores: &[ProxyScore]) -> Vec<f64> {
    let n = scores.len();
    if n == 1 {
        return vec![1.0];
    }
    let keys: Vec<f64> = scores.iter().map(ProxyScore::rank_key).collect();
    average_ranks(&keys)
        .into_iter()
        .map(|r| (r - 1.0) / (n - 1) as f64)
        .collect()
}

/// Mean normalised rank across `components` for every architecture.
pub fn ensemble(columns: &BTreeMap<ProxyName, Vec<ProxyScore>>, components: &[ProxyName]) -> Result<Vec<f64>> {
    let first = components
        .first()
        .ok_or_else(|| ZcpError::InvalidArgument("ensemble needs at least one component".into()))?;
    let n = columns
        .get(first)
        .ok_or_else(|| ZcpError::MissingProxy(first.to_string()))?
        .len();
    let mut acc = vec![0.0; n];
    for p in components {
        let col = columns.get(p).ok_or_else(|| ZcpError::MissingProxy(p.to_string()))?;
        if col.len() != n {
            return Err(ZcpError::MissingProxy(format!("{p} has {} rows, expected {n}", col.len())));
        }
        for (a, r) in acc.iter_mut().zip(normalized_ranks(col)) {
            *a += r;
        }
    }
    let k = components.len() as f64;
    Ok(acc.into_iter().map(|v| v / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(p: ProxyName, v: &[f64]) -> Vec<ProxyScore> {
        v.iter().map(|&x| ProxyScore::checked(p, x)).collect()
    }

    #[test]
    fn opposite_orderings_cancel() {
        let mut cols = BTreeMap::new();
        cols.insert(ProxyName::Snip, col(ProxyName::Snip, &[1.0, 2.0, 3.0]));
        cols.insert(ProxyName::Plain, col(ProxyName::Plain, &[3.0, 2.0, 1.0]));
        let e = ensemble(&cols, &[ProxyName::Snip, ProxyName::Plain]).unwrap();
        assert!(e.iter().all(|&v| v == e[0]));
    }

    #[test]
    fn consensus_is_preserved() {
        let mut cols = BTreeMap::new();
        cols.insert(ProxyName::Snip, col(ProxyName::Snip, &[0.1, 5.0, 2.0, -1.0]));
        cols.insert(ProxyName::Fisher, col(ProxyName::Fisher, &[10.0, 900.0, 30.0, 1.0]));
        let e = ensemble(&cols, &[ProxyName::Snip, ProxyName::Fisher]).unwrap();
        assert!(e[3] < e[0] && e[0] < e[2] && e[2] < e[1]);
    }

    #[test]
    fn mean_rank_arithmetic() {
        // Rank 1 = best. A:(1,1) B:(2,3) C:(3,2).
        let mut cols = BTreeMap::new();
        cols.insert(ProxyName::Snip, col(ProxyName::Snip, &[3.0, 2.0, 1.0]));
        cols.insert(ProxyName::Plain, col(ProxyName::Plain, &[3.0, 1.0, 2.0]));
        let e = ensemble(&cols, &[ProxyName::Snip, ProxyName::Plain]).unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], e[2]);
        assert!(e[1] < e[0]);
    }

    #[test]
    fn degenerate_ranks_last() {
        let scores = vec![
            ProxyScore::degenerate(ProxyName::JacobCov),
            ProxyScore::checked(ProxyName::JacobCov, -1e9),
        ];
        assert_eq!(normalized_ranks(&scores), vec![0.0, 1.0]);
    }

    #[test]
    fn missing_column_reported() {
        let mut cols = BTreeMap::new();
        cols.insert(ProxyName::Snip, col(ProxyName::Snip, &[1.0]));
        assert!(matches!(
            ensemble(&cols, &[ProxyName::Snip, ProxyName::Grasp]),
            Err(ZcpError::MissingProxy(_))
        ));
    }
}
