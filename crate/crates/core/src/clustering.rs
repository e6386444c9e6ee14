//! Pseudo-labels from K-means on the fused embedding, per-node confidence,
//! top-τ high-confidence selection and the per-cluster sample blocks used by
//! the contrastive losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, invalid_arg, CcgcError, Result};
use crate::model::ViewPair;
use crate::tensor::{squared_distance, DenseMatrix};

/// `E = ½(E¹ + E²)`.
pub fn fuse(e1: &DenseMatrix, e2: &DenseMatrix) -> Result<DenseMatrix> {
    if e1.shape() != e2.shape() {
        return Err(dim_mismatch(
            "fuse_views",
            format!("{:?} vs {:?}", e1.shape(), e2.shape()),
        ));
    }
    let data = e1
        .as_slice()
        .iter()
        .zip(e2.as_slice())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    DenseMatrix::new(e1.rows(), e1.cols(), data)
}

pub fn fuse_views(v: &ViewPair) -> Result<DenseMatrix> {
    fuse(&v.e1, &v.e2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
    /// Independent k-means++ starts; the lowest inertia wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centers: DenseMatrix,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

fn nearest(point: &[f64], centers: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.row_iter().enumerate() {
        let d = squared_distance(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(e: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = e.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(e.row(i), e.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target ≥ acc; fall back to the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // every point coincides with a chosen center
            (0..n).find(|i| !chosen.contains(i)).expect("k ≤ n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(e.row(i), e.row(next)));
        }
    }
    e.select_rows(&chosen)
}

/// Means of the rows assigned to each cluster; empty clusters get a zero row.
pub fn cluster_means(e: &DenseMatrix, assignments: &[usize], k: usize) -> DenseMatrix {
    let mut centers = DenseMatrix::zeros(k, e.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (c, v) in centers.row_mut(a).iter_mut().zip(e.row(i)) {
            *c += v;
        }
    }
    for (a, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            let n = cnt as f64;
            centers.row_mut(a).iter_mut().for_each(|c| *c /= n);
        }
    }
    centers
}

fn inertia_of(e: &DenseMatrix, assignments: &[usize], centers: &DenseMatrix) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(e.row(i), centers.row(a)))
        .sum()
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Empty clusters are repaired by moving the point farthest from its own
/// center (taken from a cluster with at least two members) into them.
pub fn kmeans(e: &DenseMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansResult> {
    let n = e.rows();
    if k == 0 {
        return Err(invalid_arg("k", "need at least one cluster"));
    }
    if k > n {
        return Err(invalid_arg("k", format!("{k} clusters for {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(e, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut dist = vec![0.0; n];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let (c, d) = nearest(e.row(i), &centers);
            assignments[i] = c;
            dist[i] = d;
            counts[c] += 1;
        }
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let victim = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("k ≤ n leaves a cluster with two members");
            counts[assignments[victim]] -= 1;
            assignments[victim] = empty;
            counts[empty] = 1;
            dist[victim] = 0.0;
        }
        let next = cluster_means(e, &assignments, k);
        let shift = next
            .row_iter()
            .zip(centers.row_iter())
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        history.push(inertia_of(e, &assignments, &centers));
        if shift < tol {
            break;
        }
    }
    Ok(KMeansResult {
        inertia: *history.last().expect("at least one iteration"),
        assignments,
        centers,
        inertia_history: history,
    })
}

fn restart_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Best of `cfg.restarts` runs by inertia (earliest wins ties).
pub fn kmeans_best_of(e: &DenseMatrix, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts.max(1) {
        let res = kmeans(e, k, restart_seed(seed, r), cfg.max_iter, cfg.tol)?;
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `exp(−‖Eᵢ − C_{a(i)}‖²)` for every node.
pub fn confidence_scores(e: &DenseMatrix, assignments: &[usize], centers: &DenseMatrix) -> Vec<f64> {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| (-squared_distance(e.row(i), centers.row(a))).exp())
        .collect()
}

/// Indices chosen by [`select_high_confidence`].
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Ascending node ids.
    pub indices: Vec<usize>,
    /// Nodes added only to keep a cluster from vanishing.
    pub forced: Vec<usize>,
}

/// Global top-`⌈τN⌉` nodes by confidence (lower index wins ties), plus the
/// most confident member of any cluster the cut would otherwise empty.
pub fn select_high_confidence(
    scores: &[f64],
    assignments: &[usize],
    k: usize,
    tau: f64,
) -> Result<Selection> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(invalid_arg("tau", format!("{tau} is outside (0, 1]")));
    }
    if scores.len() != assignments.len() {
        return Err(dim_mismatch(
            "select_high_confidence",
            format!("{} scores, {} assignments", scores.len(), assignments.len()),
        ));
    }
    let n = scores.len();
    let take = ((tau * n as f64 - 1e-9).ceil() as usize).clamp(n.min(1), n);
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal scores keep ascending index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut picked = vec![false; n];
    let mut covered = vec![false; k];
    for &i in &order[..take] {
        picked[i] = true;
        covered[assignments[i]] = true;
    }
    let mut forced = Vec::new();
    for &i in &order[take..] {
        let c = assignments[i];
        if !covered[c] {
            covered[c] = true;
            picked[i] = true;
            forced.push(i);
        }
    }
    forced.sort_unstable();
    Ok(Selection {
        indices: (0..n).filter(|&i| picked[i]).collect(),
        forced,
    })
}

/// Clustering of the fused embedding plus the high-confidence subset.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centers: DenseMatrix,
    pub inertia: f64,
    pub confidence: Vec<f64>,
    /// Ascending high-confidence node ids.
    pub high_conf: Vec<usize>,
    pub forced: Vec<usize>,
    pub tau: f64,
}

impl ClusterState {
    /// Scores and selects on top of an existing partition of `e`.
    pub fn from_partition(
        e: &DenseMatrix,
        k: usize,
        assignments: Vec<usize>,
        centers: DenseMatrix,
        tau: f64,
    ) -> Result<Self> {
        if assignments.len() != e.rows() || centers.shape() != (k, e.cols()) {
            return Err(dim_mismatch(
                "cluster_state",
                format!(
                    "{} assignments / {:?} centers for {:?} embedding, k={k}",
                    assignments.len(),
                    centers.shape(),
                    e.shape()
                ),
            ));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(invalid_arg("assignments", format!("cluster id {bad} ≥ k={k}")));
        }
        let confidence = confidence_scores(e, &assignments, &centers);
        let sel = select_high_confidence(&confidence, &assignments, k, tau)?;
        Ok(Self {
            k,
            inertia: inertia_of(e, &assignments, &centers),
            assignments,
            centers,
            confidence,
            high_conf: sel.indices,
            forced: sel.forced,
            tau,
        })
    }

    /// K-means on `e`, then confidence and top-τ selection.
    pub fn compute(e: &DenseMatrix, k: usize, tau: f64, seed: u64, cfg: &KMeansConfig) -> Result<Self> {
        let km = kmeans_best_of(e, k, seed, cfg)?;
        Self::from_partition(e, k, km.assignments, km.centers, tau)
    }

    /// Keeps the pseudo-labels but re-centers on a new embedding.
    pub fn refresh(&self, e: &DenseMatrix) -> Result<Self> {
        let centers = cluster_means(e, &self.assignments, self.k);
        Self::from_partition(e, self.k, self.assignments.clone(), centers, self.tau)
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.assignments.len() != n {
            return Err(CcgcError::StaleState(format!(
                "{} assignments for {n} nodes",
                self.assignments.len()
            )));
        }
        if self.high_conf.is_empty() || self.high_conf.iter().any(|&i| i >= n) {
            return Err(CcgcError::StaleState(
                "high-confidence set is empty or references missing nodes".into(),
            ));
        }
        if self.high_conf.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CcgcError::StaleState("high-confidence set is not strictly ascending".into()));
        }
        if self.assignments.iter().any(|&a| a >= self.k) {
            return Err(CcgcError::StaleState("assignment outside 0..k".into()));
        }
        Ok(())
    }
}

/// High-confidence rows of both views grouped by pseudo-label.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastBatch {
    /// Node ids in each cluster block, ascending; same order in both views.
    pub members: Vec<Vec<usize>>,
    pub view1_blocks: Vec<DenseMatrix>,
    pub view2_blocks: Vec<DenseMatrix>,
    /// Row `p` is the mean of block `p`, per view.
    pub centers1: DenseMatrix,
    pub centers2: DenseMatrix,
}

impl ContrastBatch {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn from_embeddings(e1: &DenseMatrix, e2: &DenseMatrix, st: &ClusterState) -> Result<Self> {
        if e1.shape() != e2.shape() {
            return Err(dim_mismatch(
                "build_contrast_batch",
                format!("{:?} vs {:?}", e1.shape(), e2.shape()),
            ));
        }
        st.validate_for(e1.rows())?;
        let mut members = vec![Vec::new(); st.k];
        for &i in &st.high_conf {
            members[st.assignments[i]].push(i);
        }
        if let Some(p) = members.iter().position(Vec::is_empty) {
            return Err(CcgcError::StaleState(format!(
                "cluster {p} has no high-confidence member"
            )));
        }
        let view1_blocks: Vec<_> = members.iter().map(|m| e1.select_rows(m)).collect();
        let view2_blocks: Vec<_> = members.iter().map(|m| e2.select_rows(m)).collect();
        let means = |blocks: &[DenseMatrix]| {
            let rows: Vec<Vec<f64>> = blocks.iter().map(DenseMatrix::column_means).collect();
            DenseMatrix::from_rows(&rows)
        };
        Ok(Self {
            centers1: means(&view1_blocks)?,
            centers2: means(&view2_blocks)?,
            members,
            view1_blocks,
            view2_blocks,
        })
    }
}

pub fn build_contrast_batch(v: &ViewPair, st: &ClusterState) -> Result<ContrastBatch> {
    ContrastBatch::from_embeddings(&v.e1, &v.e2, st)
}
