use itertools::Itertools;

use crate::error::{Error, Result};

/// Largest K for which every label permutation is enumerated.
const BRUTE_FORCE_MAX_K: usize = 8;

/// Misclassification rate under the best one-to-one matching of predicted to true labels.
///
/// Labels are 0-based and must be below `k`.
pub fn clustering_error(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted labels for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() || k == 0 {
        return Err(Error::InvalidInput("clustering error needs labels and K >= 1".into()));
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for K={k}")));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&a, &b) in predicted.iter().zip(truth) {
        counts[a][b] += 1;
    }
    let agree = if k <= BRUTE_FORCE_MAX_K {
        (0..k)
            .permutations(k)
            .map(|perm| (0..k).map(|a| counts[a][perm[a]]).sum::<usize>())
            .max()
            .unwrap_or(0)
    } else {
        let cost: Vec<Vec<i64>> = counts.iter().map(|r| r.iter().map(|&c| -(c as i64)).collect()).collect();
        let assign = hungarian(&cost);
        (0..k).map(|a| counts[a][assign[a]]).sum()
    };
    Ok(1.0 - agree as f64 / predicted.len() as f64)
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with potentials).
/// Returns, for each row, its assigned column.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}
