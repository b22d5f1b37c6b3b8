//! Graph topology, labels and masks; neighbor sets and the symmetric
//! normalized adjacency used by every model.

use std::path::Path;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::textio::{data_lines, parse_error, parse_field};

/// Immutable undirected graph with labels and train/test masks.
///
/// Edges are stored once each as `(u, v)` with `u < v`, sorted.
/// Self-loops are never stored; they are added by [`Graph::normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    train_mask: Vec<usize>,
    test_mask: Vec<usize>,
    feature_dim: usize,
}

impl Graph {
    /// Validates and canonicalizes. Edges may be listed in either direction
    /// and more than once; duplicates collapse.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        train_mask: Vec<usize>,
        test_mask: Vec<usize>,
    ) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::EndpointOutOfRange { u, v, n });
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        if labels.len() != n {
            return Err(Error::shape(
                "Graph::new",
                format!("{} labels for {n} nodes", labels.len()),
            ));
        }
        for (node, l) in labels.iter().enumerate() {
            if let Some(label) = *l {
                if label >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        node,
                        label,
                        classes: num_classes,
                    });
                }
            }
        }

        let train_mask = canonical_mask(train_mask, n, "train", &labels)?;
        let test_mask = canonical_mask(test_mask, n, "test", &labels)?;
        // Both masks are sorted, so a merge walk finds any overlap.
        let (mut a, mut b) = (0, 0);
        while a < train_mask.len() && b < test_mask.len() {
            match train_mask[a].cmp(&test_mask[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    return Err(Error::OverlappingMasks { node: train_mask[a] })
                }
            }
        }

        Ok(Self {
            n,
            edges: canon,
            labels,
            num_classes,
            train_mask,
            test_mask,
            feature_dim: 0,
        })
    }

    /// Records the feature width `d`. Metadata only: features live with the clients.
    pub fn with_feature_dim(mut self, d: usize) -> Self {
        self.feature_dim = d;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_mask(&self) -> &[usize] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[usize] {
        &self.test_mask
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Fraction of nodes in the training mask.
    pub fn label_rate(&self) -> f64 {
        self.train_mask.len() as f64 / self.n as f64
    }

    pub fn labeled_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i))
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn adjacency_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    pub fn neighbor_sets(&self) -> NeighborSets {
        let mut lists: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for &(u, v) in &self.edges {
            lists[u].push(v);
            lists[v].push(u);
        }
        let mut offsets = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::with_capacity(self.n + 2 * self.edges.len());
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            indices.extend_from_slice(&l);
            offsets.push(indices.len());
        }
        NeighborSets { offsets, indices }
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` in CSR form.
    pub fn normalize(&self) -> NormalizedAdjacency {
        let nb = self.neighbor_sets();
        let mut values = Vec::with_capacity(nb.total());
        for i in 0..self.n {
            let di = nb.degree(i) as f64;
            for &j in nb.get(i) {
                // Symmetric in (i, j), and exact whenever the degree product is a square.
                values.push(1.0 / (di * nb.degree(j) as f64).sqrt());
            }
        }
        NormalizedAdjacency(CsrMatrix {
            n_rows: self.n,
            n_cols: self.n,
            indptr: nb.offsets,
            indices: nb.indices,
            values,
        })
    }
}

fn canonical_mask(
    mut mask: Vec<usize>,
    n: usize,
    name: &'static str,
    labels: &[Option<usize>],
) -> Result<Vec<usize>> {
    mask.sort_unstable();
    mask.dedup();
    for &node in &mask {
        if node >= n {
            return Err(Error::MaskOutOfRange { mask: name, node, n });
        }
        if labels[node].is_none() {
            return Err(Error::UnlabeledMaskNode { mask: name, node });
        }
    }
    Ok(mask)
}

/// Per-node sorted neighbor lists, each including the node itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborSets {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `|N_i|`, counting `i` itself.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// `Σ_i |N_i|`.
    pub fn total(&self) -> usize {
        self.indices.len()
    }

    /// Start offset of row `i` in the flattened neighbor array; edge
    /// quantities aligned with these lists are indexed the same way.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.num_nodes()).map(move |i| self.get(i))
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw arrays, checking structural consistency.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let ok = indptr.len() == n_rows + 1
            && indptr.first() == Some(&0)
            && indptr.windows(2).all(|w| w[0] <= w[1])
            && indptr.last() == Some(&indices.len())
            && indices.len() == values.len()
            && indices.iter().all(|&j| j < n_cols);
        if !ok {
            return Err(Error::shape("CsrMatrix::from_parts", "inconsistent CSR arrays"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// `Â = D̃^{-1/2}(A+I)D̃^{-1/2}`; row `i`'s pattern is exactly `N_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    pub fn csr(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn num_nodes(&self) -> usize {
        self.0.n_rows
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.0.row(i)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.0.to_dense()
    }
}

impl AsRef<CsrMatrix> for NormalizedAdjacency {
    fn as_ref(&self) -> &CsrMatrix {
        &self.0
    }
}

/// Paths of the four topology/label files.
#[derive(Debug, Clone, Copy)]
pub struct GraphFiles<'a> {
    pub edges: &'a Path,
    pub labels: &'a Path,
    pub train: &'a Path,
    pub test: &'a Path,
}

/// Reads `edges.tsv`, `labels.tsv`, `train.txt` and `test.txt`.
///
/// `classes` is the class count from `meta.tsv`; when absent it is
/// inferred as `max label + 1` (at least 1).
pub fn load_graph(files: GraphFiles<'_>, n: usize, classes: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    for (line, text) in data_lines(files.edges)? {
        let mut it = text.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_error(files.edges, line, "expected `u<TAB>v`"));
        };
        let u: usize = parse_field(files.edges, line, a, "node id")?;
        let v: usize = parse_field(files.edges, line, b, "node id")?;
        edges.push((u, v));
    }

    let label_lines = data_lines(files.labels)?;
    if label_lines.len() != n {
        return Err(parse_error(
            files.labels,
            label_lines.last().map_or(0, |l| l.0),
            format!("{} labels for {n} nodes", label_lines.len()),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    for (line, text) in &label_lines {
        let y: i64 = parse_field(files.labels, *line, text, "label")?;
        labels.push(match y {
            -1 => None,
            y if y >= 0 => Some(y as usize),
            _ => return Err(parse_error(files.labels, *line, "labels must be >= -1")),
        });
    }
    let c = classes.unwrap_or_else(|| labels.iter().flatten().max().map_or(1, |m| m + 1));

    let read_mask = |p: &Path| -> Result<Vec<usize>> {
        data_lines(p)?
            .into_iter()
            .map(|(line, t)| parse_field(p, line, &t, "node id"))
            .collect()
    };
    let graph = Graph::new(n, edges, labels, c, read_mask(files.train)?, read_mask(files.test)?)?;
    log::debug!(
        "loaded graph: n={} edges={} classes={} train={} test={}",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_classes(),
        graph.train_mask().len(),
        graph.test_mask().len()
    );
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(n, edges.iter().copied(), vec![Some(0); n], 1, vec![], vec![]).unwrap()
    }

    #[test]
    fn minimal_valid_graph() {
        let g = Graph::new(2, [(0, 1)], vec![Some(0), None], 1, vec![0], vec![]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert!(g.num_classes() >= 1);
    }

    #[test]
    fn endpoint_out_of_range() {
        let err = Graph::new(3, [(0, 5)], vec![None; 3], 1, vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::EndpointOutOfRange { u: 0, v: 5, n: 3 }));
        assert!(err.to_string().contains("endpoint out of range"));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(matches!(
            Graph::new(3, [(1, 1)], vec![None; 3], 1, vec![], vec![]),
            Err(Error::SelfLoop(1))
        ));
    }

    #[test]
    fn unlabeled_train_node_rejected() {
        let err = Graph::new(2, [], vec![Some(0), None], 1, vec![1], vec![]).unwrap_err();
        assert!(matches!(err, Error::UnlabeledMaskNode { mask: "train", node: 1 }));
    }

    #[test]
    fn overlapping_masks_rejected() {
        let err = Graph::new(3, [], vec![Some(0); 3], 1, vec![0, 2], vec![1, 2]).unwrap_err();
        assert!(matches!(err, Error::OverlappingMasks { node: 2 }));
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = g(3, &[(0, 1), (1, 0), (0, 1), (2, 1)]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn normalize_isolated_node() {
        let a = g(1, &[]).normalize().to_dense();
        assert_eq!(a.as_slice(), &[1.0]);
    }

    #[test]
    fn normalize_single_edge() {
        let a = g(2, &[(0, 1)]).normalize().to_dense();
        assert_eq!(a.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalize_triangle() {
        let a = g(3, &[(0, 1), (1, 2), (0, 2)]).normalize().to_dense();
        for &v in a.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn neighbor_sets_single_edge() {
        let nb = g(2, &[(0, 1)]).neighbor_sets();
        assert_eq!(nb.get(0), &[0, 1]);
        assert_eq!(nb.get(1), &[0, 1]);
        assert_eq!(nb.total(), 4);
    }

    #[test]
    fn neighbor_sets_no_edges() {
        let nb = g(3, &[]).neighbor_sets();
        for i in 0..3 {
            assert_eq!(nb.get(i), &[i]);
        }
        assert_eq!(nb.total(), 3);
    }

    #[test]
    fn csr_from_parts_validates() {
        assert!(CsrMatrix::from_parts(2, 2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
        assert!(CsrMatrix::from_parts(2, 2, vec![0, 1, 3], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(2, 2, vec![0, 1, 2], vec![0, 2], vec![1.0, 1.0]).is_err());
    }
}
