//! Graph structure learning for HR models from a variogram estimate:
//! per-base-node L1 learners combined by majority vote, HR matrix
//! completion on the learned graph, and pseudo-likelihood model selection.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hr::{sigma_from_gamma, PrecisionMatrix, VariogramMatrix};
use crate::linalg::submatrix;

/// Coordinate-descent convergence tolerance on coefficient changes.
pub const CD_TOL: f64 = 1e-8;
/// Sweep budget for coordinate descent and iterative completion.
pub const MAX_SWEEPS: usize = 10_000;
/// Constraint tolerance of the completion (`|Θ_ij|` off the graph).
pub const COMPLETION_TOL: f64 = 1e-8;
/// Default number of penalty grid points.
pub const GRID_LEN: usize = 32;
/// Smallest grid value relative to `ρ_max`.
pub const GRID_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Learner {
    NeighborhoodSelection,
    GraphicalLasso,
}

impl Learner {
    pub fn label(&self) -> &'static str {
        match self {
            Learner::NeighborhoodSelection => "NS",
            Learner::GraphicalLasso => "Glasso",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
}

/// `Σ^(m)` of a (projected) variogram estimate, checked positive definite.
pub fn sigma_k(gamma: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let s = sigma_from_gamma(gamma, m);
    if s.nrows() > 0 && Cholesky::new(s.clone()).is_none() {
        return Err(Error::RequiresProjection(m));
    }
    Ok(s)
}

/// Minimizes `½ βᵀAβ - bᵀβ + ρ‖β‖₁` by cyclic coordinate descent, starting
/// from `beta`. Returns the number of sweeps.
pub fn lasso_cd(a: &DMatrix<f64>, b: &[f64], rho: f64, beta: &mut [f64]) -> usize {
    let p = b.len();
    for sweep in 1..=MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let mut z = b[j];
            for l in 0..p {
                if l != j {
                    z -= a[(j, l)] * beta[l];
                }
            }
            let new = soft_threshold(z, rho) / a[(j, j)];
            max_change = max_change.max((new - beta[j]).abs());
            beta[j] = new;
        }
        if max_change < CD_TOL {
            return sweep;
        }
    }
    log::warn!("coordinate descent hit the sweep limit");
    MAX_SWEEPS
}

/// Relative slack under which `|z| = ρ` counts as a zero coefficient. HR
/// trees sit exactly on the lasso KKT boundary for their non-edges, so
/// without it rounding noise decides those entries.
const TIE_SLACK: f64 = 1e-6;

#[inline]
fn soft_threshold(z: f64, rho: f64) -> f64 {
    if z.abs() <= rho * (1.0 + TIE_SLACK) {
        0.0
    } else if z > 0.0 {
        z - rho
    } else {
        z + rho
    }
}

/// Warm-start state of one base learner on one `Σ^(m)`.
#[derive(Debug, Clone)]
enum BaseState {
    /// Row `ℓ` holds the coefficients of `ℓ` regressed on the others.
    Ns { s: DMatrix<f64>, coef: DMatrix<f64> },
    /// Friedman et al. block coordinate descent on `W = S + ρI`.
    Glasso { s: DMatrix<f64>, w: DMatrix<f64>, coef: DMatrix<f64> },
}

impl BaseState {
    fn new(learner: Learner, s: DMatrix<f64>) -> Self {
        let p = s.nrows();
        match learner {
            Learner::NeighborhoodSelection => BaseState::Ns { coef: DMatrix::zeros(p, p), s },
            Learner::GraphicalLasso => BaseState::Glasso { w: s.clone(), coef: DMatrix::zeros(p, p), s },
        }
    }

    /// Support pattern (symmetric, "or" rule) at penalty `rho`.
    fn support(&mut self, rho: f64) -> Vec<(usize, usize)> {
        match self {
            BaseState::Ns { s, coef } => {
                let p = s.nrows();
                for l in 0..p {
                    let others: Vec<usize> = (0..p).filter(|&x| x != l).collect();
                    let a = submatrix(s, &others, &others);
                    let b: Vec<f64> = others.iter().map(|&x| s[(x, l)]).collect();
                    let mut beta: Vec<f64> = others.iter().map(|&x| coef[(l, x)]).collect();
                    lasso_cd(&a, &b, rho, &mut beta);
                    for (&x, v) in others.iter().zip(beta) {
                        coef[(l, x)] = v;
                    }
                }
                or_pattern(coef)
            }
            BaseState::Glasso { s, w, coef } => {
                glasso(s, w, coef, rho);
                or_pattern(coef)
            }
        }
    }
}

fn or_pattern(coef: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let p = coef.nrows();
    let mut out = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if coef[(a, b)] != 0.0 || coef[(b, a)] != 0.0 {
                out.push((a, b));
            }
        }
    }
    out
}

/// Graphical lasso; column `j` of `coef` holds the lasso coefficients of
/// `j` on the other variables (support of `Θ_{·j}`).
fn glasso(s: &DMatrix<f64>, w: &mut DMatrix<f64>, coef: &mut DMatrix<f64>, rho: f64) {
    let p = s.nrows();
    for i in 0..p {
        w[(i, i)] = s[(i, i)] + rho;
    }
    if p == 1 {
        return;
    }
    let scale = (0..p).map(|i| s[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let others: Vec<usize> = (0..p).filter(|&x| x != j).collect();
            let a = submatrix(w, &others, &others);
            let b: Vec<f64> = others.iter().map(|&x| s[(x, j)]).collect();
            let mut beta: Vec<f64> = others.iter().map(|&x| coef[(x, j)]).collect();
            lasso_cd(&a, &b, rho, &mut beta);
            for (r, &x) in others.iter().enumerate() {
                coef[(x, j)] = beta[r];
                let new: f64 = (0..others.len()).map(|c| a[(r, c)] * beta[c]).sum();
                max_change = max_change.max((new - w[(x, j)]).abs());
                w[(x, j)] = new;
                w[(j, x)] = new;
            }
        }
        if max_change < CD_TOL * scale {
            return;
        }
    }
    log::warn!("graphical lasso hit the sweep limit");
}

/// Edges voted by at least `⌈(d-2)/2⌉` base nodes. With `d = 2` there is
/// nothing to vote on and the single pair is kept.
fn majority(d: usize, votes: &DMatrix<usize>) -> Graph {
    let threshold = (d.saturating_sub(2)).div_ceil(2);
    let mut g = Graph::empty(d);
    for i in 0..d {
        for j in i + 1..d {
            if votes[(i, j)] >= threshold {
                g.add_edge(i, j).expect("indices in range");
            }
        }
    }
    g
}

/// Per-base-node learner states for a penalty path over one estimate.
#[derive(Debug, Clone)]
pub struct EgLearner {
    d: usize,
    learner: Learner,
    states: Vec<BaseState>,
}

impl EgLearner {
    pub fn new(gamma: &VariogramMatrix, learner: Learner) -> Result<Self> {
        let d = gamma.dim();
        let states = (0..d)
            .map(|m| sigma_k(gamma.matrix(), m).map(|s| BaseState::new(learner, s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { d, learner, states })
    }

    pub fn learner(&self) -> Learner {
        self.learner
    }

    /// Graph at penalty `rho`, warm-started from the previous call.
    pub fn fit(&mut self, rho: f64) -> Graph {
        let d = self.d;
        let mut votes = DMatrix::<usize>::zeros(d, d);
        for (m, state) in self.states.iter_mut().enumerate() {
            let idx: Vec<usize> = (0..d).filter(|&i| i != m).collect();
            for (a, b) in state.support(rho) {
                let (i, j) = (idx[a], idx[b]);
                votes[(i, j)] += 1;
                votes[(j, i)] += 1;
            }
        }
        majority(d, &votes)
    }
}

/// EGlearn with neighbourhood selection at a single penalty.
pub fn neighborhood_selection(gamma: &VariogramMatrix, rho: f64) -> Result<Graph> {
    Ok(EgLearner::new(gamma, Learner::NeighborhoodSelection)?.fit(rho))
}

/// EGlearn with the graphical lasso at a single penalty.
pub fn graphical_lasso(gamma: &VariogramMatrix, rho: f64) -> Result<Graph> {
    Ok(EgLearner::new(gamma, Learner::GraphicalLasso)?.fit(rho))
}

/// `max_m max_{ℓ≠j} |Σ^(m)_ℓj|`: both learners return the empty graph at
/// or above this penalty.
pub fn rho_max(gamma: &VariogramMatrix) -> f64 {
    let d = gamma.dim();
    let mut best: f64 = 0.0;
    for m in 0..d {
        let s = sigma_from_gamma(gamma.matrix(), m);
        for a in 0..s.nrows() {
            for b in 0..a {
                best = best.max(s[(a, b)].abs());
            }
        }
    }
    best
}

/// `len` log-spaced values from `ρ_max · ratio` to `ρ_max`, increasing.
pub fn rho_grid(gamma: &VariogramMatrix, len: usize, ratio: f64) -> Vec<f64> {
    let top = rho_max(gamma);
    if len <= 1 {
        return vec![top];
    }
    let (lo, hi) = ((top * ratio).ln(), top.ln());
    (0..len).map(|i| (lo + (hi - lo) * i as f64 / (len - 1) as f64).exp()).collect()
}

/// Completed HR model on a learned graph.
#[derive(Debug, Clone)]
pub struct GraphEstimate {
    pub graph: Graph,
    pub gamma: VariogramMatrix,
    pub theta: PrecisionMatrix,
    pub rho: Option<f64>,
    /// Largest `|Θ_ij|` over non-edges.
    pub residual: f64,
    /// Sweeps used by the iterative completion (zero when exact).
    pub iterations: usize,
}

fn max_nonedge_theta(theta: &DMatrix<f64>, graph: &Graph) -> f64 {
    graph.non_edges().iter().map(|&(i, j)| theta[(i, j)].abs()).fold(0.0, f64::max)
}

/// Conditional covariance `Σ_{a,R} Σ_RR^{-1} Σ_{R,b}`.
fn conditional_cross(sigma: &DMatrix<f64>, a: usize, b: usize, r: &[usize]) -> Result<f64> {
    if r.is_empty() {
        return Ok(0.0);
    }
    let srr = submatrix(sigma, r, r);
    let chol = Cholesky::new(srr).ok_or(Error::CompletionFailed { iterations: 0, residual: f64::NAN })?;
    let sa = DVector::from_iterator(r.len(), r.iter().map(|&x| sigma[(a, x)]));
    let sb = DVector::from_iterator(r.len(), r.iter().map(|&x| sigma[(x, b)]));
    Ok(sa.dot(&chol.solve(&sb)))
}

/// `Σ^(k)` as a full `d x d` matrix (row and column `k` zero).
fn sigma_full(g: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = g.nrows();
    DMatrix::from_fn(d, d, |i, j| 0.5 * (g[(i, k)] + g[(j, k)] - g[(i, j)]))
}

/// Fills the non-edges of `Γ̂` so that `Γ̂^G = Γ̂` on edges and `Θ̂^G` is zero
/// off the graph. Chordal graphs are completed exactly along a perfect
/// elimination order; other graphs by cyclic one-entry updates from the
/// input matrix.
pub fn complete_variogram(gamma: &VariogramMatrix, graph: &Graph) -> Result<GraphEstimate> {
    let d = gamma.dim();
    if graph.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: graph.dim() });
    }
    if !graph.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    let (g, iterations) = match graph.perfect_elimination_order() {
        Some(order) => (complete_chordal(gamma.matrix(), graph, &order)?, 0),
        None => complete_iterative(gamma.matrix(), graph)?,
    };
    let completed = VariogramMatrix::new(g).map_err(|_| Error::CompletionFailed { iterations, residual: f64::NAN })?;
    let theta = completed.to_precision();
    let residual = max_nonedge_theta(theta.matrix(), graph);
    if residual >= COMPLETION_TOL {
        return Err(Error::CompletionFailed { iterations, residual });
    }
    Ok(GraphEstimate { graph: graph.clone(), gamma: completed, theta, rho: None, residual, iterations })
}

fn complete_chordal(g0: &DMatrix<f64>, graph: &Graph, order: &[usize]) -> Result<DMatrix<f64>> {
    let d = g0.nrows();
    let mut g = DMatrix::zeros(d, d);
    for (i, j) in graph.edges() {
        g[(i, j)] = g0[(i, j)];
        g[(j, i)] = g0[(i, j)];
    }
    for p in 1..d {
        let v = order[p];
        let earlier = &order[..p];
        let clique: Vec<usize> = earlier.iter().copied().filter(|&u| graph.has_edge(u, v)).collect();
        let k = clique[0];
        let rest: Vec<usize> = clique[1..].to_vec();
        // Σ^(k) on the already completed block plus v
        let sigma = sigma_full(&g, k);
        for &u in earlier {
            if u == v || graph.has_edge(u, v) {
                continue;
            }
            let s = conditional_cross(&sigma, v, u, &rest)?;
            let val = g[(v, k)] + g[(u, k)] - 2.0 * s;
            g[(v, u)] = val;
            g[(u, v)] = val;
        }
    }
    Ok(g)
}

fn complete_iterative(g0: &DMatrix<f64>, graph: &Graph) -> Result<(DMatrix<f64>, usize)> {
    let d = g0.nrows();
    let non_edges = graph.non_edges();
    let mut g = g0.clone();
    let mut residual = f64::INFINITY;
    for sweep in 1..=MAX_SWEEPS {
        for &(i, j) in &non_edges {
            let k = (0..d).find(|&x| x != i && x != j).expect("d >= 3 for a non-edge in a connected graph");
            let sigma = sigma_full(&g, k);
            let rest: Vec<usize> = (0..d).filter(|&x| x != i && x != j && x != k).collect();
            let s = conditional_cross(&sigma, i, j, &rest)
                .map_err(|_| Error::CompletionFailed { iterations: sweep, residual })?;
            let val = g[(i, k)] + g[(j, k)] - 2.0 * s;
            g[(i, j)] = val;
            g[(j, i)] = val;
        }
        let theta = match VariogramMatrix::new(g.clone()) {
            Ok(v) => v.to_precision(),
            Err(_) => return Err(Error::CompletionFailed { iterations: sweep, residual }),
        };
        residual = max_nonedge_theta(theta.matrix(), graph);
        if residual < COMPLETION_TOL {
            return Ok((g, sweep));
        }
    }
    Err(Error::CompletionFailed { iterations: MAX_SWEEPS, residual })
}

/// `-2 (log|Θ̂|₊ + ½ tr(Γ̂ Θ̂)) + pen`, with `pen = 2|E|` (AIC) or
/// `log(n q)|E|` (BIC). Smaller is better.
pub fn pseudo_loglik_ic(
    gamma_hat: &DMatrix<f64>,
    estimate: &GraphEstimate,
    n: usize,
    q: f64,
    criterion: Criterion,
) -> Result<f64> {
    let theta = estimate.theta.matrix();
    if gamma_hat.shape() != theta.shape() {
        return Err(Error::DimensionMismatch { expected: theta.nrows(), got: gamma_hat.nrows() });
    }
    let log_pdet = estimate.theta.log_pdet();
    if !log_pdet.is_finite() {
        return Err(Error::InvalidPrecision("pseudo-determinant is not positive".into()));
    }
    let trace = (gamma_hat * theta).trace();
    let edges = estimate.graph.n_edges() as f64;
    let pen = match criterion {
        Criterion::Aic => 2.0 * edges,
        Criterion::Bic => (n as f64 * q).ln() * edges,
    };
    Ok(-2.0 * (log_pdet + 0.5 * trace) + pen)
}

/// One grid point of a penalty path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub rho: f64,
    pub graph: Graph,
    /// `None` when the graph is disconnected or completion failed.
    pub estimate: Option<GraphEstimate>,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct PenaltyPath {
    pub learner: Learner,
    /// Increasing in `rho`.
    pub points: Vec<PathPoint>,
}

impl PenaltyPath {
    /// Index of the point minimizing the criterion, if any is finite.
    pub fn select(&self, criterion: Criterion) -> Option<usize> {
        let score = |p: &PathPoint| match criterion {
            Criterion::Aic => p.aic,
            Criterion::Bic => p.bic,
        };
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| score(p).is_finite())
            .min_by(|a, b| score(a.1).total_cmp(&score(b.1)))
            .map(|(i, _)| i)
    }
}

/// Runs a learner along `grid` (any order; fitted from the largest penalty
/// down with warm starts), completing and scoring every graph.
pub fn penalty_path(
    gamma: &VariogramMatrix,
    learner: Learner,
    grid: &[f64],
    n: usize,
    q: f64,
) -> Result<PenaltyPath> {
    let mut eg = EgLearner::new(gamma, learner)?;
    let mut rhos = grid.to_vec();
    rhos.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::with_capacity(rhos.len());
    let mut prev_edges = 0usize;
    for (idx, &rho) in rhos.iter().enumerate() {
        let graph = eg.fit(rho);
        if idx > 0 && graph.n_edges() < prev_edges {
            log::debug!("{} path: edge count dropped from {prev_edges} to {} at rho = {rho}", learner.label(), graph.n_edges());
        }
        prev_edges = graph.n_edges();
        let estimate = match complete_variogram(gamma, &graph) {
            Ok(mut e) => {
                e.rho = Some(rho);
                Some(e)
            }
            Err(Error::DisconnectedGraph) => None,
            Err(e) => {
                log::warn!("completion failed at rho = {rho}: {e}");
                None
            }
        };
        let (aic, bic) = match &estimate {
            Some(e) => (
                pseudo_loglik_ic(gamma.matrix(), e, n, q, Criterion::Aic)?,
                pseudo_loglik_ic(gamma.matrix(), e, n, q, Criterion::Bic)?,
            ),
            None => (f64::INFINITY, f64::INFINITY),
        };
        points.push(PathPoint { rho, graph, estimate, aic, bic });
    }
    points.reverse();
    Ok(PenaltyPath { learner, points })
}

/// `Γ` of a tree metric: the sum of edge weights along tree paths.
pub fn tree_metric(tree: &Graph, edge_gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = tree.dim();
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a + 1..d {
            let path = tree.tree_path(a, b).ok_or(Error::DisconnectedGraph)?;
            let v: f64 = path.iter().map(|&(i, j)| edge_gamma[(i, j)]).sum();
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hr::{gamma_from_sigma, theta_from_variogram};
    use crate::linalg::drop_index;
    use crate::rng::stream;
    use rand::Rng;

    fn laplacian(d: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(d, d);
        for &(i, j, w) in edges {
            t[(i, j)] -= w;
            t[(j, i)] -= w;
            t[(i, i)] += w;
            t[(j, j)] += w;
        }
        t
    }

    fn random_gamma(d: usize, seed: u64) -> VariogramMatrix {
        let mut rng = stream(seed, 0);
        let x = DMatrix::from_fn(d, d + 2, |_, _| rng.random::<f64>() - 0.5);
        let sigma = &x * x.transpose();
        VariogramMatrix::new(gamma_from_sigma(&sigma)).unwrap()
    }

    #[test]
    fn sigma_k_examples() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0]);
        assert_eq!(sigma_k(&g, 0).unwrap()[(0, 0)], 1.5);
        for seed in 0..5 {
            let gamma = random_gamma(5, seed);
            let theta = theta_from_variogram(gamma.matrix()).unwrap();
            for m in 0..5 {
                let inv = drop_index(theta.matrix(), m).try_inverse().unwrap();
                assert!((inv - sigma_k(gamma.matrix(), m).unwrap()).abs().max() < 1e-9);
            }
        }
        let bad = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 9.0, 1.0, 0.0, 1.0, 9.0, 1.0, 0.0]);
        assert!(matches!(sigma_k(&bad, 1), Err(Error::RequiresProjection(1))));
    }

    #[test]
    fn lasso_matches_soft_threshold_on_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let mut beta = vec![0.0; 2];
        lasso_cd(&a, &[3.0, -0.5], 1.0, &mut beta);
        assert!((beta[0] - 1.0).abs() < 1e-12);
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn extreme_penalties() {
        let gamma = random_gamma(5, 3);
        for learner in [Learner::NeighborhoodSelection, Learner::GraphicalLasso] {
            let mut eg = EgLearner::new(&gamma, learner).unwrap();
            assert_eq!(eg.fit(rho_max(&gamma) * 1.0001).n_edges(), 0);
            assert_eq!(eg.fit(0.0).n_edges(), 10);
        }
    }

    #[test]
    fn noiseless_tree_recovery() {
        let theta = laplacian(4, &[(0, 1, 3.0), (1, 2, 2.5), (1, 3, 4.0)]);
        let gamma = PrecisionMatrix::new(theta).unwrap().to_variogram();
        let truth = Graph::from_edges(4, [(0, 1), (1, 2), (1, 3)]).unwrap();
        let rho = 0.05 * rho_max(&gamma);
        assert_eq!(neighborhood_selection(&gamma, rho).unwrap(), truth);
        // Σ^(m) of a tree has equal off-diagonal blocks along paths, so the
        // glasso shrinks every entry alike and keeps the complete graph here
        assert!(graphical_lasso(&gamma, rho).unwrap().n_edges() >= truth.n_edges());
    }

    #[test]
    fn completion_complete_graph_is_identity() {
        let gamma = random_gamma(5, 4);
        let est = complete_variogram(&gamma, &Graph::complete(5)).unwrap();
        assert!((est.gamma.matrix() - gamma.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn completion_tree_path_sums() {
        let gamma = random_gamma(6, 5);
        let tree = Graph::from_edges(6, [(0, 1), (1, 2), (1, 3), (3, 4), (4, 5)]).unwrap();
        let est = complete_variogram(&gamma, &tree).unwrap();
        let expected = tree_metric(&tree, gamma.matrix()).unwrap();
        assert!((est.gamma.matrix() - expected).abs().max() < 1e-8);
        assert!(est.residual < 1e-8);
        // idempotence
        let again = complete_variogram(&est.gamma, &tree).unwrap();
        assert!((again.gamma.matrix() - est.gamma.matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn path3_closed_form_matches_iterative() {
        let gamma = random_gamma(3, 6);
        let path = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let est = complete_variogram(&gamma, &path).unwrap();
        let g = gamma.matrix();
        assert!((est.gamma.get(0, 2) - (g[(0, 1)] + g[(1, 2)])).abs() < 1e-12);
        let (iter, _) = complete_iterative(g, &path).unwrap();
        assert!((iter[(0, 2)] - est.gamma.get(0, 2)).abs() < 1e-8);
        assert!(est.theta.get(0, 2).abs() < 1e-8);
    }

    #[test]
    fn cycle_completion_converges() {
        let gamma = random_gamma(6, 7);
        let cycle = Graph::from_edges(6, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        assert!(cycle.perfect_elimination_order().is_none());
        let est = complete_variogram(&gamma, &cycle).unwrap();
        for (i, j) in cycle.edges() {
            assert!((est.gamma.get(i, j) - gamma.get(i, j)).abs() < 1e-8);
        }
        assert!(est.residual < 1e-8);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let gamma = random_gamma(4, 8);
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(complete_variogram(&gamma, &g), Err(Error::DisconnectedGraph)));
    }

    #[test]
    fn information_criteria() {
        let gamma = random_gamma(4, 9);
        let full = complete_variogram(&gamma, &Graph::complete(4)).unwrap();
        let n = 1000;
        let q = 2f64.exp() / n as f64;
        let aic = pseudo_loglik_ic(gamma.matrix(), &full, n, q, Criterion::Aic).unwrap();
        let bic = pseudo_loglik_ic(gamma.matrix(), &full, n, q, Criterion::Bic).unwrap();
        assert!((aic - bic).abs() < 1e-10);
        // same fit term, fewer edges wins
        let mut sparse = full.clone();
        sparse.graph = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let aic_sparse = pseudo_loglik_ic(gamma.matrix(), &sparse, n, q, Criterion::Aic).unwrap();
        assert!(aic_sparse < aic);
    }

    #[test]
    fn grid_and_path() {
        let gamma = random_gamma(5, 10);
        let grid = rho_grid(&gamma, GRID_LEN, GRID_RATIO);
        assert_eq!(grid.len(), 32);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!((grid[31] - rho_max(&gamma)).abs() < 1e-12);
        let path = penalty_path(&gamma, Learner::NeighborhoodSelection, &grid, 1000, 0.1).unwrap();
        assert_eq!(path.points.len(), 32);
        assert!(path.points.windows(2).all(|w| w[0].rho < w[1].rho));
        assert!(path.points[31].estimate.is_none());
        assert!(path.select(Criterion::Aic).is_some());
    }
}
