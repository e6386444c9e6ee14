//! Cluster-guided contrastive objective.
//!
//! * positive term: squared distance between the two views of each
//!   high-confidence node, summed per cluster block and divided by `K`;
//! * negative term: mean cross-view cosine between high-confidence centers
//!   of *different* clusters;
//! * total: `l_pos + α·l_neg`.

use serde::{Deserialize, Serialize};

use crate::clustering::ContrastBatch;
use crate::error::{dim_mismatch, invalid_arg, Result};
use crate::tensor::{cosine, dot, row_l2_normalize, squared_distance, DenseMatrix};

/// Which cross-view pairs count as positives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Same node, both views.
    #[default]
    Eq9,
    /// Every (i, j) pair inside a cluster block, averaged per block:
    /// `(1/K) Σ_p (1/n_p) Σ_{i,j} ‖B¹ₚᵢ − B²ₚⱼ‖²`.
    FullIntraCluster,
}

/// Where negatives come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Cross-view high-confidence cluster centers with `p ≠ q`.
    #[default]
    Centers,
    /// Every cross-view pair of distinct nodes.
    NodePairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pos: f64,
    pub l_neg: f64,
    pub alpha: f64,
    pub total: f64,
}

fn check_aligned(b: &ContrastBatch) -> Result<()> {
    if b.view1_blocks.len() != b.view2_blocks.len() {
        return Err(dim_mismatch(
            "positive_loss",
            format!("{} vs {} blocks", b.view1_blocks.len(), b.view2_blocks.len()),
        ));
    }
    for (p, (a, c)) in b.view1_blocks.iter().zip(&b.view2_blocks).enumerate() {
        if a.shape() != c.shape() {
            return Err(dim_mismatch(
                "positive_loss",
                format!("block {p}: {:?} vs {:?}", a.shape(), c.shape()),
            ));
        }
    }
    Ok(())
}

/// `(1/K) Σ_p Σ_i ‖B¹ₚᵢ − B²ₚᵢ‖²`.
pub fn positive_loss(b: &ContrastBatch) -> Result<f64> {
    check_aligned(b)?;
    let k = b.k() as f64;
    let sum: f64 = b
        .view1_blocks
        .iter()
        .zip(&b.view2_blocks)
        .map(|(a, c)| {
            a.row_iter()
                .zip(c.row_iter())
                .map(|(x, y)| squared_distance(x, y))
                .sum::<f64>()
        })
        .sum();
    Ok(sum / k)
}

/// The same quantity written as `(1/K) Σ (2 − 2⟨·,·⟩)`; equal to
/// [`positive_loss`] only when every row has unit norm.
pub fn positive_loss_cosine_form(b: &ContrastBatch) -> Result<f64> {
    check_aligned(b)?;
    let k = b.k() as f64;
    let sum: f64 = b
        .view1_blocks
        .iter()
        .zip(&b.view2_blocks)
        .map(|(a, c)| {
            a.row_iter()
                .zip(c.row_iter())
                .map(|(x, y)| 2.0 - 2.0 * dot(x, y))
                .sum::<f64>()
        })
        .sum();
    Ok(sum / k)
}

/// All intra-cluster cross-view pairs, `1/n_p`-weighted, via the identity
/// `Σᵢⱼ‖aᵢ − bⱼ‖² / n = Σ‖aᵢ‖² + Σ‖bⱼ‖² − 2n⟨ā, b̄⟩`.
pub fn positive_loss_full_intra(b: &ContrastBatch) -> Result<f64> {
    check_aligned(b)?;
    let k = b.k() as f64;
    let mut sum = 0.0;
    for (p, (a, c)) in b.view1_blocks.iter().zip(&b.view2_blocks).enumerate() {
        let n = a.rows() as f64;
        let sq_a: f64 = a.row_iter().map(|r| dot(r, r)).sum();
        let sq_c: f64 = c.row_iter().map(|r| dot(r, r)).sum();
        sum += sq_a + sq_c - 2.0 * n * dot(b.centers1.row(p), b.centers2.row(p));
    }
    Ok(sum / k)
}

pub fn positive_loss_with(b: &ContrastBatch, mode: PairMode) -> Result<f64> {
    match mode {
        PairMode::Eq9 => positive_loss(b),
        PairMode::FullIntraCluster => positive_loss_full_intra(b),
    }
}

/// `1/(K²−K) Σ_{p≠q} cos(CEN¹ₚ, CEN²_q)`.
pub fn negative_loss(b: &ContrastBatch) -> Result<f64> {
    let k = b.centers1.rows();
    if k < 2 {
        return Err(invalid_arg("k", "negative loss needs at least two clusters"));
    }
    if b.centers2.rows() != k {
        return Err(dim_mismatch(
            "negative_loss",
            format!("{k} vs {} centers", b.centers2.rows()),
        ));
    }
    let mut sum = 0.0;
    for p in 0..k {
        for q in 0..k {
            if p != q {
                sum += cosine(b.centers1.row(p), b.centers2.row(q));
            }
        }
    }
    Ok(sum / (k * k - k) as f64)
}

/// Mean cosine over every cross-view pair of distinct nodes,
/// `1/(N²−N) Σ_{i≠j} cos(E¹ᵢ, E²ⱼ)`, in `O(N·d)`.
pub fn node_pair_negative_loss(e1: &DenseMatrix, e2: &DenseMatrix) -> Result<f64> {
    if e1.shape() != e2.shape() {
        return Err(dim_mismatch(
            "node_pair_negative_loss",
            format!("{:?} vs {:?}", e1.shape(), e2.shape()),
        ));
    }
    let n = e1.rows();
    if n < 2 {
        return Err(invalid_arg("n", "node-pair negatives need at least two nodes"));
    }
    let u1 = row_l2_normalize(e1);
    let u2 = row_l2_normalize(e2);
    let s1 = u1.column_means();
    let s2 = u2.column_means();
    let nf = n as f64;
    let all = nf * nf * dot(&s1, &s2);
    let diag: f64 = u1.row_iter().zip(u2.row_iter()).map(|(a, b)| dot(a, b)).sum();
    Ok((all - diag) / (nf * nf - nf))
}

pub fn total_loss(l_pos: f64, l_neg: f64, alpha: f64) -> Result<LossBreakdown> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid_arg("alpha", format!("{alpha} must be finite and ≥ 0")));
    }
    Ok(LossBreakdown {
        l_pos,
        l_neg,
        alpha,
        total: l_pos + alpha * l_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{cluster_means, fuse, ClusterState};
    use proptest::prelude::*;

    fn batch(e1: &DenseMatrix, e2: &DenseMatrix, assign: Vec<usize>, k: usize) -> ContrastBatch {
        let e = fuse(e1, e2).unwrap();
        let c = cluster_means(&e, &assign, k);
        let st = ClusterState::from_partition(&e, k, assign, c, 1.0).unwrap();
        ContrastBatch::from_embeddings(e1, e2, &st).unwrap()
    }

    fn m<R: AsRef<[f64]>>(rows: &[R]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_views_have_zero_positive_loss() {
        let e = m(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(positive_loss(&batch(&e, &e, vec![0, 1], 2)).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_pair() {
        let b = batch(&m(&[[1.0, 0.0]]), &m(&[[-1.0, 0.0]]), vec![0], 1);
        assert_eq!(positive_loss(&b).unwrap(), 4.0);
        assert_eq!(positive_loss_cosine_form(&b).unwrap(), 4.0);
    }

    #[test]
    fn two_orthogonal_pairs() {
        let e1 = m(&[[1.0, 0.0], [0.0, 1.0]]);
        let e2 = m(&[[0.0, 1.0], [1.0, 0.0]]);
        let b = batch(&e1, &e2, vec![0, 1], 2);
        assert_eq!(positive_loss(&b).unwrap(), 2.0);
    }

    #[test]
    fn misaligned_blocks_rejected() {
        let e = m(&[[1.0, 0.0], [0.0, 1.0]]);
        let mut b = batch(&e, &e, vec![0, 1], 2);
        b.view2_blocks[0] = DenseMatrix::zeros(2, 2);
        assert!(positive_loss(&b).is_err());
    }

    #[test]
    fn negative_loss_examples() {
        let u = [1.0, 0.0, 0.0];
        let v = [0.0, 1.0, 0.0];
        let w = [0.0, 0.0, 1.0];
        let mut b = batch(&m(&[u, v]), &m(&[u, v]), vec![0, 1], 2);
        // orthogonal off-diagonal pairs
        assert_eq!(negative_loss(&b).unwrap(), 0.0);
        b.centers2 = m(&[v, u]);
        assert_eq!(negative_loss(&b).unwrap(), 1.0);
        let before = negative_loss(&b).unwrap();
        b.centers1 = b.centers1.scaled(3.0);
        b.centers2 = b.centers2.scaled(3.0);
        assert_eq!(negative_loss(&b).unwrap(), before);
        let single = batch(&m(&[w]), &m(&[w]), vec![0], 1);
        assert!(negative_loss(&single).is_err());
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(1.5, 0.3, 0.0).unwrap().total, 1.5);
        assert_eq!(total_loss(2.0, 0.5, 1.0).unwrap().total, 2.5);
        assert_eq!(total_loss(0.0, -1.0, 10.0).unwrap().total, -10.0);
        assert!(total_loss(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn full_intra_matches_double_loop() {
        let e1 = m(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [-0.6, 0.8]]);
        let e2 = m(&[[0.8, 0.6], [0.0, -1.0], [1.0, 0.0], [0.6, -0.8]]);
        let b = batch(&e1, &e2, vec![0, 0, 1, 1], 2);
        let mut oracle = 0.0;
        for (a, c) in b.view1_blocks.iter().zip(&b.view2_blocks) {
            let mut s = 0.0;
            for x in a.row_iter() {
                for y in c.row_iter() {
                    s += squared_distance(x, y);
                }
            }
            oracle += s / a.rows() as f64;
        }
        oracle /= 2.0;
        assert!((positive_loss_full_intra(&b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn node_pairs_match_double_loop() {
        let e1 = m(&[[1.0, 0.0], [0.6, 0.8], [0.0, 0.0], [-0.6, 0.8]]);
        let e2 = m(&[[0.8, 0.6], [0.0, -1.0], [1.0, 0.0], [0.6, -0.8]]);
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    oracle += cosine(e1.row(i), e2.row(j));
                }
            }
        }
        oracle /= 12.0;
        assert!((node_pair_negative_loss(&e1, &e2).unwrap() - oracle).abs() < 1e-12);
    }

    fn unit_rows(n: usize, d: usize) -> impl Strategy<Value = DenseMatrix> {
        proptest::collection::vec(-1.0f64..1.0, n * d)
            .prop_filter("nonzero rows", move |v| v.chunks(d).all(|r| r.iter().any(|x| x.abs() > 1e-3)))
            .prop_map(move |v| row_l2_normalize(&DenseMatrix::new(n, d, v).unwrap()))
    }

    proptest! {
        #[test]
        fn bounds_and_identities(
            e1 in unit_rows(8, 3),
            e2 in unit_rows(8, 3),
            perm_seed in 0usize..8,
            a1 in 0.0f64..5.0,
            a2 in 0.0f64..5.0,
        ) {
            let assign: Vec<usize> = (0..8).map(|i| (i + perm_seed) % 3).collect();
            let b = batch(&e1, &e2, assign.clone(), 3);
            let lp = positive_loss(&b).unwrap();
            let ln = negative_loss(&b).unwrap();
            prop_assert!(lp >= 0.0);
            let max_np = *b.sizes().iter().max().unwrap() as f64;
            prop_assert!(lp <= 4.0 * max_np);
            prop_assert!((-1.0..=1.0).contains(&ln));
            prop_assert!((lp - positive_loss_cosine_form(&b).unwrap()).abs() <= 1e-10);
            // total is affine in alpha
            let mid = total_loss(lp, ln, 0.5 * (a1 + a2)).unwrap().total;
            let sum = total_loss(lp, ln, a1).unwrap().total + total_loss(lp, ln, a2).unwrap().total;
            prop_assert!((sum - 2.0 * mid).abs() <= 1e-12 * (1.0 + sum.abs()));
            let nodes = node_pair_negative_loss(&e1, &e2).unwrap();
            prop_assert!((-1.0..=1.0).contains(&nodes));
        }

        #[test]
        fn permuting_within_blocks_is_invariant(e1 in unit_rows(6, 3), e2 in unit_rows(6, 3)) {
            let b = batch(&e1, &e2, vec![0, 0, 0, 1, 1, 1], 2);
            let mut p = b.clone();
            for blk in [&mut p.view1_blocks[0], &mut p.view2_blocks[0]] {
                let rows: Vec<Vec<f64>> = [2usize, 0, 1].iter().map(|&r| blk.row(r).to_vec()).collect();
                *blk = DenseMatrix::from_rows(&rows).unwrap();
            }
            prop_assert!((positive_loss(&b).unwrap() - positive_loss(&p).unwrap()).abs() <= 1e-12);
            prop_assert_eq!(negative_loss(&b).unwrap(), negative_loss(&p).unwrap());
        }
    }
}
