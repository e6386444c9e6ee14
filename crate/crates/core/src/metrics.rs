//! External clustering metrics: Hungarian-matched accuracy, NMI, ARI and
//! macro-F1.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
    /// `contingency[p][c]` counts nodes with predicted cluster `p` and class `c`.
    pub contingency: Vec<Vec<usize>>,
    /// Predicted cluster → matched class; `None` for clusters left unmatched.
    pub mapping: Vec<Option<usize>>,
}

fn check(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(invalid_arg(
            "labels",
            format!("prediction has {} entries, truth has {}", pred.len(), truth.len()),
        ));
    }
    Ok(())
}

fn num_labels(xs: &[usize]) -> usize {
    xs.iter().max().map_or(0, |m| m + 1)
}

/// `K_pred × K_true` count matrix.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    check(pred, truth)?;
    let mut table = vec![vec![0usize; num_labels(truth)]; num_labels(pred)];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    Ok(table)
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns `row → column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is a virtual column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
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
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

fn accuracy_from_table(table: &[Vec<usize>], n: usize) -> (f64, Vec<Option<usize>>) {
    let kp = table.len();
    let kt = table.first().map_or(0, Vec::len);
    let size = kp.max(kt);
    if n == 0 || size == 0 {
        return (0.0, vec![None; kp]);
    }
    // Primary objective: matched counts. Ties are broken by the summed
    // per-pair F1, which is below `weight`, so the choice among
    // accuracy-optimal mappings does not depend on label order.
    let weight = (kp.min(kt) + 1) as f64;
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kt).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut cost = vec![vec![0.0; size]; size];
    for (p, row) in table.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let f1 = 2.0 * count as f64 / (row_sums[p] + col_sums[c]).max(1) as f64;
            cost[p][c] = -(count as f64 * weight + f1);
        }
    }
    let assignment = hungarian(&cost);
    let mut hits = 0usize;
    let mapping = (0..kp)
        .map(|p| {
            let c = assignment[p];
            if c < kt {
                hits += table[p][c];
                Some(c)
            } else {
                None
            }
        })
        .collect();
    (hits as f64 / n as f64, mapping)
}

/// Best accuracy over injective cluster → class mappings, and that mapping.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<(f64, Vec<Option<usize>>)> {
    let table = contingency(pred, truth)?;
    Ok(accuracy_from_table(&table, pred.len()))
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn nmi_from_table(table: &[Vec<usize>], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let kt = table.first().map_or(0, Vec::len);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..kt).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let h_pred = entropy(row_sums.iter().copied(), nf);
    let h_true = entropy(col_sums.iter().copied(), nf);
    if h_pred == 0.0 && h_true == 0.0 {
        return 1.0;
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (p, row) in table.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let joint = count as f64 / nf;
            mi += joint * (count as f64 * nf / (row_sums[p] as f64 * col_sums[c] as f64)).ln();
        }
    }
    (mi / ((h_pred + h_true) / 2.0)).clamp(0.0, 1.0)
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    Ok(nmi_from_table(&table, pred.len()))
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

fn ari_from_table(table: &[Vec<usize>], n: usize) -> f64 {
    let kt = table.first().map_or(0, Vec::len);
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let b: f64 = (0..kt).map(|c| pairs(table.iter().map(|r| r[c]).sum())).sum();
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = a * b / total;
    let max_index = (a + b) / 2.0;
    if max_index == expected {
        // both partitions trivial in the same way
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

/// Adjusted Rand index by pair counting.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    Ok(ari_from_table(&table, pred.len()))
}

fn macro_f1_from_table(table: &[Vec<usize>], mapping: &[Option<usize>]) -> f64 {
    let kt = table.first().map_or(0, Vec::len);
    if kt == 0 {
        return 0.0;
    }
    let mut predicted = vec![0usize; kt];
    let mut correct = vec![0usize; kt];
    for (p, row) in table.iter().enumerate() {
        if let Some(c) = mapping[p] {
            predicted[c] += row.iter().sum::<usize>();
            correct[c] += row[c];
        }
    }
    let mut sum = 0.0;
    for c in 0..kt {
        let actual: usize = table.iter().map(|r| r[c]).sum();
        let denom = predicted[c] + actual;
        if denom > 0 && correct[c] > 0 {
            sum += 2.0 * correct[c] as f64 / denom as f64;
        }
    }
    sum / kt as f64
}

/// Unweighted mean of per-class F1 after the accuracy-optimal mapping.
/// Nodes in unmatched clusters count as wrong for every class.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let (_, mapping) = accuracy_from_table(&table, pred.len());
    Ok(macro_f1_from_table(&table, &mapping))
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricReport> {
    let table = contingency(pred, truth)?;
    let n = pred.len();
    let (acc, mapping) = accuracy_from_table(&table, n);
    Ok(MetricReport {
        acc,
        nmi: nmi_from_table(&table, n),
        ari: ari_from_table(&table, n),
        f1: macro_f1_from_table(&table, &mapping),
        contingency: table,
        mapping,
    })
}
