//! Graph augmentations for the shared-encoder ablation baselines.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, CcgcError, Result};
use crate::graph::GraphDataset;
use crate::smoothing::renormalized_adjacency;
use crate::tensor::{DenseMatrix, SparseSymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    DropEdges,
    AddEdges,
    Diffusion,
    MaskFeatures,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Zero whole feature dimensions.
    #[default]
    Column,
    /// Zero individual entries.
    Entry,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    /// Edge/feature rate for drop, add and mask; teleport for diffusion.
    pub rate: f64,
    pub seed: u64,
    pub mask_mode: MaskMode,
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == AugmentKind::Diffusion {
            if !(self.rate > 0.0 && self.rate <= 1.0) {
                return Err(invalid_arg("teleport", "must lie in (0, 1]"));
            }
        } else {
            check_rate(self.rate)?;
        }
        Ok(())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(invalid_arg("aug_rate", "must lie in [0, 1]"));
    }
    Ok(())
}

/// Removes each undirected edge independently with probability `rate`.
pub fn drop_edges(d: &GraphDataset, rate: f64, seed: u64) -> Result<GraphDataset> {
    check_rate(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = d
        .edges()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= rate)
        .collect();
    d.with_edges(kept)
}

/// Adds `⌈rate·|E|⌉` distinct absent edges, chosen uniformly.
pub fn add_edges(d: &GraphDataset, rate: f64, seed: u64) -> Result<GraphDataset> {
    check_rate(rate)?;
    let n = d.num_nodes();
    let existing = d.edges().len();
    let wanted = (rate * existing as f64).ceil() as usize;
    if wanted == 0 {
        return d.with_edges(d.edges().to_vec());
    }
    let all_pairs = n * n.saturating_sub(1) / 2;
    let absent = all_pairs - existing;
    if absent < wanted {
        return Err(CcgcError::InvalidDataset(format!(
            "cannot add {wanted} edges: only {absent} node pairs are unconnected"
        )));
    }
    let present: HashSet<(usize, usize)> = d.edges().iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added: Vec<(usize, usize)> = Vec::with_capacity(wanted);
    if absent >= 2 * wanted {
        let mut seen = HashSet::with_capacity(wanted);
        while added.len() < wanted {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if !present.contains(&e) && seen.insert(e) {
                added.push(e);
            }
        }
    } else {
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|e| !present.contains(e))
            .collect();
        for i in 0..wanted {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(wanted);
        added = pool;
    }
    let mut edges = d.edges().to_vec();
    edges.extend(added);
    d.with_edges(edges)
}

/// Zeroes feature columns (or single entries) with probability `rate`.
pub fn mask_features(d: &GraphDataset, rate: f64, seed: u64, mode: MaskMode) -> Result<GraphDataset> {
    check_rate(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = d.features().clone();
    match mode {
        MaskMode::Column => {
            let masked: Vec<bool> = (0..x.cols()).map(|_| rng.random::<f64>() < rate).collect();
            let cols = x.cols();
            for (j, v) in x.as_mut_slice().iter_mut().enumerate() {
                if masked[j % cols] {
                    *v = 0.0;
                }
            }
        }
        MaskMode::Entry => {
            for v in x.as_mut_slice() {
                if rng.random::<f64>() < rate {
                    *v = 0.0;
                }
            }
        }
    }
    d.with_features(x)
}

/// Above this node count the diffusion is applied by truncated series
/// instead of a dense solve.
pub const DENSE_DIFFUSION_LIMIT: usize = 10_000;
pub const SERIES_TERMS: usize = 64;

fn check_teleport(teleport: f64) -> Result<()> {
    if !(teleport > 0.0 && teleport <= 1.0) {
        return Err(invalid_arg("teleport", "must lie in (0, 1]"));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
fn cholesky(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        assert!(diag > 0.0, "diffusion system is not positive definite");
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            let (ri, rj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l.set(i, j, s / ljj);
        }
    }
    l
}

/// Solves `L Lᵀ Y = B` in place.
fn cholesky_solve(l: &DenseMatrix, b: &mut DenseMatrix) {
    let n = l.rows();
    let c = b.cols();
    let data = b.as_mut_slice();
    for i in 0..n {
        let (done, rest) = data.split_at_mut(i * c);
        let row = &mut rest[..c];
        for (k, &f) in l.row(i)[..i].iter().enumerate() {
            if f != 0.0 {
                row.iter_mut().zip(&done[k * c..(k + 1) * c]).for_each(|(y, v)| *y -= f * v);
            }
        }
        let d = l.get(i, i);
        row.iter_mut().for_each(|v| *v /= d);
    }
    for i in (0..n).rev() {
        let (head, done) = data.split_at_mut((i + 1) * c);
        let row = &mut head[i * c..];
        for k in i + 1..n {
            let f = l.get(k, i);
            if f != 0.0 {
                let off = (k - i - 1) * c;
                row.iter_mut().zip(&done[off..off + c]).for_each(|(y, v)| *y -= f * v);
            }
        }
        let d = l.get(i, i);
        row.iter_mut().for_each(|v| *v /= d);
    }
}

fn diffusion_system(adj: &SparseSymMatrix, teleport: f64) -> DenseMatrix {
    let n = adj.dim();
    let mut m = DenseMatrix::identity(n);
    for (r, c, v) in adj.entries() {
        let cur = m.get(r, c);
        m.set(r, c, cur - (1.0 - teleport) * v);
    }
    m
}

/// Personalized-PageRank diffusion `t·(I − (1−t)Â)⁻¹` with the renormalized
/// adjacency `Â`, by dense solve.
pub fn diffusion(d: &GraphDataset, teleport: f64) -> Result<DenseMatrix> {
    check_teleport(teleport)?;
    let adj = renormalized_adjacency(d.num_nodes(), d.edges());
    let l = cholesky(&diffusion_system(&adj, teleport));
    let mut s = DenseMatrix::identity(d.num_nodes()).scaled(teleport);
    cholesky_solve(&l, &mut s);
    Ok(s)
}

/// `Σ_{k<terms} t(1−t)ᵏ Âᵏ X`, and the spectral-norm bound `(1−t)^terms`
/// on the discarded tail (relative to `‖X‖`).
pub fn diffusion_series(
    adj: &SparseSymMatrix,
    teleport: f64,
    x: &DenseMatrix,
    terms: usize,
) -> Result<(DenseMatrix, f64)> {
    check_teleport(teleport)?;
    let mut power = x.clone();
    let mut acc = x.scaled(teleport);
    let mut coef = teleport;
    for _ in 1..terms {
        power = adj.spmm(&power)?;
        coef *= 1.0 - teleport;
        acc = acc.add_scaled(&power, coef)?;
    }
    Ok((acc, (1.0 - teleport).powi(terms as i32)))
}

/// Diffused features `S·X`: dense solve up to [`DENSE_DIFFUSION_LIMIT`]
/// nodes, truncated series beyond. Returns the tail bound when truncated.
pub fn diffuse_features(d: &GraphDataset, teleport: f64) -> Result<(DenseMatrix, Option<f64>)> {
    check_teleport(teleport)?;
    let adj = renormalized_adjacency(d.num_nodes(), d.edges());
    if d.num_nodes() <= DENSE_DIFFUSION_LIMIT {
        let l = cholesky(&diffusion_system(&adj, teleport));
        let mut y = d.features().scaled(teleport);
        cholesky_solve(&l, &mut y);
        Ok((y, None))
    } else {
        let (y, tail) = diffusion_series(&adj, teleport, d.features(), SERIES_TERMS)?;
        Ok((y, Some(tail)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_sbm, SbmSpec};

    fn ring(n: usize) -> GraphDataset {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let x = DenseMatrix::new(n, 3, (0..n * 3).map(|v| v as f64 * 0.1).collect()).unwrap();
        GraphDataset::new("ring", x, edges, None, 1).unwrap().0
    }

    fn random_graph(n: usize, m: usize, seed: u64) -> GraphDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::new();
        while set.len() < m {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        GraphDataset::new("g", DenseMatrix::zeros(n, 1), set.into_iter().collect::<Vec<_>>(), None, 1)
            .unwrap()
            .0
    }

    #[test]
    fn drop_extremes() {
        let d = ring(10);
        assert_eq!(drop_edges(&d, 0.0, 1).unwrap().edges(), d.edges());
        assert!(drop_edges(&d, 1.0, 1).unwrap().edges().is_empty());
    }

    #[test]
    fn drop_count_within_binomial_band() {
        let d = random_graph(200, 1000, 9);
        let inside = (0..100)
            .filter(|&s| (750..=850).contains(&drop_edges(&d, 0.2, s).unwrap().edges().len()))
            .count();
        assert!(inside >= 99, "{inside}");
    }

    #[test]
    fn add_counts() {
        let d = random_graph(20, 10, 3);
        assert_eq!(add_edges(&d, 0.0, 1).unwrap().edges(), d.edges());
        assert_eq!(add_edges(&d, 0.5, 1).unwrap().edges().len(), 15);
        let out = add_edges(&d, 0.5, 1).unwrap();
        for &(u, v) in out.edges() {
            assert!(u < v);
        }
    }

    #[test]
    fn add_on_complete_graph_fails() {
        let tri = GraphDataset::new("t", DenseMatrix::zeros(3, 1), vec![(0, 1), (1, 2), (0, 2)], None, 1)
            .unwrap()
            .0;
        assert!(add_edges(&tri, 0.2, 0).is_err());
        assert!(add_edges(&tri, 0.0, 0).is_ok());
    }

    #[test]
    fn add_fills_dense_graph() {
        // 5 nodes, 10 pairs, 8 present; 0.25·8 = 2 absent pairs get added
        let d = random_graph(5, 8, 4);
        assert_eq!(add_edges(&d, 0.25, 2).unwrap().edges().len(), 10);
    }

    #[test]
    fn augmentations_deterministic() {
        let d = make_sbm(&SbmSpec::two_block_fixture(0)).unwrap();
        assert_eq!(drop_edges(&d, 0.2, 5).unwrap(), drop_edges(&d, 0.2, 5).unwrap());
        assert_eq!(add_edges(&d, 0.2, 5).unwrap(), add_edges(&d, 0.2, 5).unwrap());
        assert_eq!(
            mask_features(&d, 0.2, 5, MaskMode::Column).unwrap(),
            mask_features(&d, 0.2, 5, MaskMode::Column).unwrap()
        );
    }

    #[test]
    fn mask_modes() {
        let d = make_sbm(&SbmSpec::two_block_fixture(1)).unwrap();
        assert_eq!(mask_features(&d, 0.0, 1, MaskMode::Column).unwrap(), d);
        let all = mask_features(&d, 1.0, 1, MaskMode::Column).unwrap();
        assert!(all.features().as_slice().iter().all(|&v| v == 0.0));
        let m = mask_features(&d, 0.5, 2, MaskMode::Column).unwrap();
        let x = m.features();
        let mut any_masked = false;
        for j in 0..x.cols() {
            let zero_col = (0..x.rows()).all(|i| x.get(i, j) == 0.0);
            let untouched = (0..x.rows()).all(|i| x.get(i, j) == d.features().get(i, j));
            assert!(zero_col || untouched);
            any_masked |= zero_col;
        }
        assert!(any_masked);
    }

    #[test]
    fn diffusion_trivial_cases() {
        let d = ring(6);
        let s = diffusion(&d, 1.0).unwrap();
        assert!(s.max_abs_diff(&DenseMatrix::identity(6)) < 1e-15);
        let single = GraphDataset::new("s", DenseMatrix::zeros(1, 1), vec![], None, 1).unwrap().0;
        assert!((diffusion(&single, 0.2).unwrap().get(0, 0) - 1.0).abs() < 1e-12);
        assert!(diffusion(&d, 0.0).is_err());
    }

    #[test]
    fn diffusion_two_node_matches_series_and_closed_form() {
        let d = GraphDataset::new("e", DenseMatrix::identity(2), vec![(0, 1)], None, 1).unwrap().0;
        let s = diffusion(&d, 0.2).unwrap();
        // M = I − 0.8·½·ones = [[0.6, −0.4], [−0.4, 0.6]], det 0.2,
        // M⁻¹ = [[3, 2], [2, 3]], S = 0.2·M⁻¹
        let closed = DenseMatrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]).unwrap();
        assert!(s.max_abs_diff(&closed) < 1e-12);
        let adj = renormalized_adjacency(2, d.edges());
        let (series, tail) = diffusion_series(&adj, 0.2, &DenseMatrix::identity(2), 200).unwrap();
        assert!(s.max_abs_diff(&series) < 1e-10);
        assert!(tail < 1e-10);
    }

    #[test]
    fn diffusion_bounds_and_feature_path() {
        let d = make_sbm(&SbmSpec::two_block_fixture(2)).unwrap();
        let s = diffusion(&d, 0.2).unwrap();
        assert!(s.as_slice().iter().all(|&v| (-1e-12..=1.0).contains(&v)));
        let (y, tail) = diffuse_features(&d, 0.2).unwrap();
        assert!(tail.is_none());
        let direct = crate::tensor::matmul(&s, d.features()).unwrap();
        assert!(y.max_abs_diff(&direct) < 1e-10);
        let adj = renormalized_adjacency(d.num_nodes(), d.edges());
        let (series, bound) = diffusion_series(&adj, 0.2, d.features(), SERIES_TERMS).unwrap();
        let err = y.max_abs_diff(&series);
        assert!(err <= bound * d.features().frobenius_norm() + 1e-12);
    }

    #[test]
    fn spec_validation() {
        let s = AugmentSpec {
            kind: AugmentKind::DropEdges,
            rate: 1.5,
            seed: 0,
            mask_mode: MaskMode::Column,
        };
        assert!(s.validate().is_err());
        assert!(AugmentSpec { kind: AugmentKind::Diffusion, rate: 0.0, ..s }.validate().is_err());
        assert!(AugmentSpec { rate: 0.2, ..s }.validate().is_ok());
    }
}
