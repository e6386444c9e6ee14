//! Graph datasets: the on-disk bundle format, validation, statistics and a
//! planted-partition generator for synthetic fixtures.
//!
//! A bundle is a directory holding
//!
//! * `features.csv`: one comma-separated row of floats per node,
//! * `edges.tsv`: one `u<TAB>v` pair per line, 0-indexed,
//! * `labels.txt`: optional, one class id per line,
//! * `meta.json`: optional, `{"num_classes": K, "name": "..."}`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, CcgcError, Result};
use crate::tensor::DenseMatrix;

pub const FEATURES_FILE: &str = "features.csv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.txt";
pub const META_FILE: &str = "meta.json";

/// Attributed undirected graph with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    features: DenseMatrix,
    /// Canonical: `u < v`, sorted, unique.
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

/// What was cleaned up while building a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EdgeCleanup {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub nodes: usize,
    pub feature_dim: usize,
    pub edges: usize,
    pub classes: usize,
    /// Per-class node counts, present when labels are known.
    pub class_histogram: Option<Vec<usize>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Meta {
    num_classes: Option<usize>,
    name: Option<String>,
}

impl GraphDataset {
    /// Validates and canonicalizes. Self-loops and duplicate edges are
    /// dropped and counted rather than rejected.
    pub fn new(
        name: impl Into<String>,
        features: DenseMatrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<(Self, EdgeCleanup)> {
        let n = features.rows();
        let mut cleanup = EdgeCleanup::default();
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(CcgcError::InvalidDataset(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                cleanup.self_loops_dropped += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        let before = canon.len();
        canon.dedup();
        cleanup.duplicates_dropped = before - canon.len();

        if num_classes == 0 {
            return Err(CcgcError::InvalidDataset("num_classes must be at least 1".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(CcgcError::InvalidDataset(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
            if let Some((i, &c)) = l.iter().enumerate().find(|(_, &c)| c >= num_classes) {
                return Err(CcgcError::InvalidDataset(format!(
                    "label {c} of node {i} outside [0, {num_classes})"
                )));
            }
        }
        Ok((
            Self {
                name: name.into(),
                features,
                edges: canon,
                labels,
                num_classes,
            },
            cleanup,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Same nodes and labels, different edge set (re-canonicalized).
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        Ok(Self::new(
            self.name.clone(),
            self.features.clone(),
            edges,
            self.labels.clone(),
            self.num_classes,
        )?
        .0)
    }

    pub fn with_features(&self, features: DenseMatrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(crate::error::dim_mismatch(
                "with_features",
                format!("{} rows for {} nodes", features.rows(), self.num_nodes()),
            ));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(self)
    }
}

pub fn dataset_stats(d: &GraphDataset) -> DatasetStats {
    let class_histogram = d.labels().map(|l| {
        let mut h = vec![0usize; d.num_classes()];
        for &c in l {
            h[c] += 1;
        }
        h
    });
    DatasetStats {
        name: d.name.clone(),
        nodes: d.num_nodes(),
        feature_dim: d.feature_dim(),
        edges: d.edges().len(),
        classes: d.num_classes(),
        class_histogram,
    }
}

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(CcgcError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    fs::read_to_string(path).map_err(|source| CcgcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(file: &str, line: usize, column: usize, message: impl Into<String>) -> CcgcError {
    CcgcError::Parse {
        file: file.to_string(),
        line,
        column,
        message: message.into(),
    }
}

fn parse_features(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for (cn, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(FEATURES_FILE, ln + 1, cn + 1, format!("not a number: {:?}", cell.trim()))
            })?;
            if !v.is_finite() {
                return Err(parse_err(FEATURES_FILE, ln + 1, cn + 1, "non-finite value"));
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(parse_err(
                    FEATURES_FILE,
                    ln + 1,
                    count.min(c) + 1,
                    format!("expected {c} columns, found {count}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::new(rows, cols.unwrap_or(0), data)
}

fn parse_edges(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                EDGES_FILE,
                ln + 1,
                1,
                format!("expected two node ids, found {} fields", fields.len()),
            ));
        }
        let mut ids = [0usize; 2];
        for (cn, f) in fields.iter().enumerate() {
            ids[cn] = f.parse().map_err(|_| {
                parse_err(EDGES_FILE, ln + 1, cn + 1, format!("not a node id: {f:?}"))
            })?;
        }
        out.push((ids[0], ids[1]));
    }
    Ok(out)
}

fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(LABELS_FILE, ln + 1, 1, format!("not a class id: {:?}", l.trim())))
        })
        .collect()
}

/// Loads a bundle directory, reporting any edge cleanup performed.
pub fn load_dataset_with_cleanup(dir: &Path) -> Result<(GraphDataset, EdgeCleanup)> {
    let features = parse_features(&read_file(&dir.join(FEATURES_FILE))?)?;
    let edges = parse_edges(&read_file(&dir.join(EDGES_FILE))?)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(parse_labels(&read_file(&labels_path)?)?)
    } else {
        None
    };
    let meta_path = dir.join(META_FILE);
    let meta: Meta = if meta_path.exists() {
        serde_json::from_str(&read_file(&meta_path)?)?
    } else {
        Meta::default()
    };
    let num_classes = match (meta.num_classes, &labels) {
        (Some(k), _) => k,
        (None, Some(l)) => l.iter().max().map_or(1, |m| m + 1),
        (None, None) => {
            return Err(CcgcError::InvalidDataset(format!(
                "{}: no labels and no num_classes in {META_FILE}",
                dir.display()
            )))
        }
    };
    let name = meta.name.unwrap_or_else(|| {
        dir.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let (d, cleanup) = GraphDataset::new(name, features, edges, labels, num_classes)?;
    if cleanup.self_loops_dropped > 0 || cleanup.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s) and {} duplicate edge(s)",
            dir.display(),
            cleanup.self_loops_dropped,
            cleanup.duplicates_dropped
        );
    }
    Ok((d, cleanup))
}

pub fn load_dataset(dir: &Path) -> Result<GraphDataset> {
    load_dataset_with_cleanup(dir).map(|(d, _)| d)
}

fn write_file(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).map_err(|source| CcgcError::Io { path, source })
}

/// Writes a bundle that [`load_dataset`] reads back unchanged.
pub fn save_dataset(d: &GraphDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CcgcError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut feats = String::new();
    for row in d.features().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        feats.push_str(&cells.join(","));
        feats.push('\n');
    }
    write_file(dir.join(FEATURES_FILE), feats)?;
    let edges: String = d
        .edges()
        .iter()
        .map(|(u, v)| format!("{u}\t{v}\n"))
        .collect();
    write_file(dir.join(EDGES_FILE), edges)?;
    if let Some(l) = d.labels() {
        let labels: String = l.iter().map(|c| format!("{c}\n")).collect();
        write_file(dir.join(LABELS_FILE), labels)?;
    }
    let meta = Meta {
        num_classes: Some(d.num_classes()),
        name: Some(d.name.clone()),
    };
    write_file(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)
}

/// Parameters of the planted-partition generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub seed: u64,
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the additive Gaussian feature noise.
    pub feature_noise: f64,
}

impl SbmSpec {
    /// Two blocks of 30, p_in 0.9, p_out 0.05, 16 features with unit noise.
    pub fn two_block_fixture(seed: u64) -> Self {
        Self {
            seed,
            block_sizes: vec![30, 30],
            p_in: 0.9,
            p_out: 0.05,
            feature_dim: 16,
            feature_noise: 1.0,
        }
    }
}

/// Samples a stochastic block model. Feature column `j` indicates block
/// `j % blocks`; every entry gets independent `N(0, noise²)` noise.
pub fn make_sbm(spec: &SbmSpec) -> Result<GraphDataset> {
    for (name, p) in [("p_in", spec.p_in), ("p_out", spec.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid_arg(name, format!("{p} is not a probability")));
        }
    }
    if !(spec.feature_noise >= 0.0 && spec.feature_noise.is_finite()) {
        return Err(invalid_arg("feature_noise", "must be finite and non-negative"));
    }
    if spec.block_sizes.is_empty() || spec.block_sizes.contains(&0) {
        return Err(invalid_arg("block_sizes", "need at least one non-empty block"));
    }
    if spec.feature_dim == 0 {
        return Err(invalid_arg("feature_dim", "must be at least 1"));
    }
    let blocks = spec.block_sizes.len();
    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            // Always draw so the stream does not depend on p.
            let draw: f64 = rng.random();
            if draw < p {
                edges.push((u, v));
            }
        }
    }

    let mut data = Vec::with_capacity(n * spec.feature_dim);
    for &b in &labels {
        for j in 0..spec.feature_dim {
            let base = if j % blocks == b { 1.0 } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(base + spec.feature_noise * z);
        }
    }
    let features = DenseMatrix::new(n, spec.feature_dim, data)?;
    Ok(GraphDataset::new("sbm", features, edges, Some(labels), blocks)?.0)
}
