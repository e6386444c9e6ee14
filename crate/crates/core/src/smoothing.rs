//! Laplacian attribute smoothing with the renormalized adjacency
//! `D̂^{-1/2} (A + I) D̂^{-1/2}`, applied `t` times to the feature matrix.

use crate::error::{dim_mismatch, Result};
use crate::graph::GraphDataset;
use crate::tensor::{DenseMatrix, SparseSymMatrix};

/// Default number of filter applications.
pub const DEFAULT_FILTER_LAYERS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationOperator {
    pub matrix: SparseSymMatrix,
    pub layers: usize,
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` for an undirected edge list over `n` nodes.
/// Edges must be canonical (`u < v`, unique).
pub fn renormalized_adjacency(n: usize, edges: &[(usize, usize)]) -> SparseSymMatrix {
    // self-loop contributes 1 to every degree
    let mut degree = vec![1.0f64; n];
    for &(u, v) in edges {
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let mut triples = Vec::with_capacity(n + 2 * edges.len());
    for (i, d) in degree.iter().enumerate() {
        triples.push((i, i, 1.0 / d));
    }
    for &(u, v) in edges {
        let w = 1.0 / (degree[u] * degree[v]).sqrt();
        triples.push((u, v, w));
        triples.push((v, u, w));
    }
    SparseSymMatrix::from_triples(n, triples).expect("canonical edges give a valid operator")
}

pub fn build_operator(d: &GraphDataset, layers: usize) -> PropagationOperator {
    PropagationOperator {
        matrix: renormalized_adjacency(d.num_nodes(), d.edges()),
        layers,
    }
}

/// `X̃ = (I − L̃)^t X`.
pub fn smooth(op: &PropagationOperator, x: &DenseMatrix) -> Result<DenseMatrix> {
    if op.matrix.dim() != x.rows() {
        return Err(dim_mismatch(
            "smooth",
            format!("operator over {} nodes, features have {} rows", op.matrix.dim(), x.rows()),
        ));
    }
    let mut cur = x.clone();
    for _ in 0..op.layers {
        cur = op.matrix.spmm(&cur)?;
    }
    Ok(cur)
}
