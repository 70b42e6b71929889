//! Undirected graphs on `{0, .., d-1}`, graph scoring and spanning trees.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hr::PrecisionMatrix;
use crate::ising::IsingModel;

/// Default tolerance on `|Θ_ij|` when reading edges off a precision matrix.
pub const EDGE_TOL: f64 = 1e-8;

/// Undirected simple graph. Edges are stored as ordered pairs `(i, j)` with
/// `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl Graph {
    pub fn empty(d: usize) -> Self {
        Self { d, edges: BTreeSet::new() }
    }

    pub fn complete(d: usize) -> Self {
        let mut g = Self::empty(d);
        for i in 0..d {
            for j in i + 1..d {
                g.edges.insert((i, j));
            }
        }
        g
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(d: usize, edges: I) -> Result<Self> {
        let mut g = Self::empty(d);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::InvalidConfig(format!("self-loop at node {i}")));
        }
        if i >= self.d || j >= self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: i.max(j) + 1 });
        }
        self.edges.insert(ordered(i, j));
        Ok(())
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.edges.remove(&ordered(i, j));
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&ordered(i, j))
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_vec(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Pairs `(i, j)`, `i < j`, that are not edges.
    pub fn non_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in i + 1..self.d {
                if !self.edges.contains(&(i, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.d];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.d <= 1 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.d];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.d
    }

    pub fn is_tree(&self) -> bool {
        self.n_edges() + 1 == self.d && self.is_connected()
    }

    /// Edges on the unique path between `a` and `b` in a tree (BFS parents).
    pub fn tree_path(&self, a: usize, b: usize) -> Option<Vec<(usize, usize)>> {
        let adj = self.adjacency();
        let mut parent = vec![usize::MAX; self.d];
        parent[a] = a;
        let mut queue = VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            if v == b {
                break;
            }
            for &w in &adj[v] {
                if parent[w] == usize::MAX {
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        if parent[b] == usize::MAX {
            return None;
        }
        let mut path = Vec::new();
        let mut v = b;
        while v != a {
            path.push(ordered(v, parent[v]));
            v = parent[v];
        }
        Some(path)
    }

    /// Maximum cardinality search order. For a chordal graph, every vertex's
    /// previously visited neighbours form a clique; returns `None` otherwise.
    pub fn perfect_elimination_order(&self) -> Option<Vec<usize>> {
        let adj = self.adjacency();
        let mut weight = vec![0usize; self.d];
        let mut visited = vec![false; self.d];
        let mut order = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            let v = (0..self.d)
                .filter(|&v| !visited[v])
                .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))?;
            visited[v] = true;
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    weight[w] += 1;
                }
            }
        }
        let mut pos = vec![0; self.d];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        for &v in &order {
            let earlier: Vec<usize> = adj[v].iter().copied().filter(|&w| pos[w] < pos[v]).collect();
            for (a, &x) in earlier.iter().enumerate() {
                for &y in &earlier[a + 1..] {
                    if !self.has_edge(x, y) {
                        return None;
                    }
                }
            }
        }
        Some(order)
    }
}

/// Graph of an IHR model: `(i, j)` is an edge iff `|Θ_ij| > tol` or `ψ_ij ≠ 0`.
pub fn edges_from_params(theta: &PrecisionMatrix, psi: &IsingModel, tol: f64) -> Result<Graph> {
    let d = theta.dim();
    if psi.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: psi.dim() });
    }
    let mut g = Graph::empty(d);
    for i in 0..d {
        for j in i + 1..d {
            if theta.get(i, j).abs() > tol || psi.psi(i, j) != 0.0 {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// `F1 = 2TP / (2TP + FP + FN)`; two empty graphs score 1.
pub fn f1_score(truth: &Graph, estimate: &Graph) -> f64 {
    let tp = truth.edges().filter(|&(i, j)| estimate.has_edge(i, j)).count();
    let fp = estimate.n_edges() - tp;
    let fn_ = truth.n_edges() - tp;
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Which dependence summary a spanning-tree weight matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MstKind {
    /// Weights are variogram entries, used as is.
    Gamma,
    /// Weights are tail correlations, transformed by `-log χ` (`χ = 0` ↦ ∞).
    Chi,
}

/// Minimum spanning tree (Kruskal). Ties break by lexicographic edge order.
pub fn mst_graph(weights: &DMatrix<f64>, kind: MstKind) -> Result<Graph> {
    let d = weights.nrows();
    if weights.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: weights.ncols() });
    }
    let mut cand = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            let raw = weights[(i, j)];
            let w = match kind {
                MstKind::Gamma => raw,
                MstKind::Chi => {
                    if raw.is_nan() || raw < 0.0 {
                        f64::NAN
                    } else if raw == 0.0 {
                        f64::INFINITY
                    } else {
                        -raw.ln()
                    }
                }
            };
            let bad = match kind {
                MstKind::Gamma => !w.is_finite(),
                MstKind::Chi => w.is_nan(),
            };
            if bad {
                return Err(Error::InvalidWeights(format!("entry ({i},{j}) = {raw}")));
            }
            cand.push((w, i, j));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut tree = Graph::empty(d);
    for (_, i, j) in cand {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.add_edge(i, j)?;
            if tree.n_edges() + 1 == d {
                break;
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(d: usize, e: &[(usize, usize)]) -> Graph {
        Graph::from_edges(d, e.iter().copied()).unwrap()
    }

    #[test]
    fn f1_cases() {
        let e = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(f1_score(&e, &e), 1.0);
        assert_eq!(f1_score(&g(3, &[(0, 1)]), &g(3, &[(0, 2)])), 0.0);
        assert!((f1_score(&e, &g(3, &[(0, 1)])) - 2.0 / 3.0).abs() < 1e-15);
        // asymmetric roles: a false positive vs a false negative count the same
        assert!((f1_score(&g(3, &[(0, 1)]), &e) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&Graph::empty(3), &g(3, &[(0, 1)])), 0.0);
        assert_eq!(f1_score(&g(3, &[(0, 1)]), &Graph::empty(3)), 0.0);
    }

    #[test]
    fn mst_on_tree_metric() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 4.0, 2.0, 0.0, 2.0, 4.0, 2.0, 0.0]);
        let t = mst_graph(&w, MstKind::Gamma).unwrap();
        assert_eq!(t.edge_vec(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn mst_ties_lexicographic() {
        let w = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let t = mst_graph(&w, MstKind::Gamma).unwrap();
        assert_eq!(t.edge_vec(), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn mst_chi_maximizes_dependence() {
        let chi = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.0, 0.8, 1.0, 0.5, 0.0, 0.5, 1.0]);
        let t = mst_graph(&chi, MstKind::Chi).unwrap();
        assert_eq!(t.edge_vec(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn mst_rejects_nonfinite() {
        let mut w = DMatrix::from_element(3, 3, 1.0);
        w[(0, 2)] = f64::NAN;
        assert!(matches!(mst_graph(&w, MstKind::Gamma), Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn chordality() {
        let cycle4 = g(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert!(cycle4.perfect_elimination_order().is_none());
        let chorded = g(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]);
        assert!(chorded.perfect_elimination_order().is_some());
        assert!(g(4, &[(0, 1), (1, 2), (1, 3)]).perfect_elimination_order().is_some());
    }

    #[test]
    fn tree_paths() {
        let t = g(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        assert!(t.is_tree());
        let mut p = t.tree_path(0, 4).unwrap();
        p.sort();
        assert_eq!(p, vec![(0, 1), (1, 3), (3, 4)]);
    }
}
