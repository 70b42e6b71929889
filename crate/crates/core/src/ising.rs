//! Zero-field Ising models on `{-1,1}^d`, the orthant weights they induce,
//! and exact or Gibbs-sampled pairwise moments.
//!
//! Orthants are indexed by a `u32` bit mask: bit `i` is set iff `o_i = +1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest dimension for which the `2^d` state space is enumerated.
pub const MAX_ENUM_DIM: usize = 25;

#[inline]
pub fn orthant_sign(orthant: u32, i: usize) -> f64 {
    if (orthant >> i) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Signs of an orthant index as a vector of `±1`.
pub fn orthant_signs(orthant: u32, d: usize) -> Vec<i8> {
    (0..d).map(|i| if (orthant >> i) & 1 == 1 { 1 } else { -1 }).collect()
}

/// Orthant index of a vector (`sgn(0) = +1`).
pub fn orthant_of(x: &[f64]) -> u32 {
    x.iter().enumerate().fold(0u32, |acc, (i, &v)| if v >= 0.0 { acc | (1 << i) } else { acc })
}

/// `o_i o_j` for an orthant index.
#[inline]
fn pair_sign(s: u32, i: usize, j: usize) -> f64 {
    if ((s >> i) ^ (s >> j)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_enum(d: usize) -> Result<()> {
    if d > MAX_ENUM_DIM {
        Err(Error::DimensionTooLarge { d, max: MAX_ENUM_DIM })
    } else {
        Ok(())
    }
}

/// Symmetric interaction matrix supported on an edge set, zero fields.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    graph: Graph,
    edges: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl IsingModel {
    /// Interactions on `graph`; `values` follow the graph's lexicographic edge
    /// order.
    pub fn new(graph: Graph, values: Vec<f64>) -> Result<Self> {
        let edges = graph.edge_vec();
        if values.len() != edges.len() {
            return Err(Error::DimensionMismatch { expected: edges.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite Ising interaction".into()));
        }
        Ok(Self { graph, edges, values })
    }

    /// From `(i, j, ψ_ij)` triples (zero-based).
    pub fn from_triples(d: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let graph = Graph::from_edges(d, triples.iter().map(|&(i, j, _)| (i, j)))?;
        let mut values = vec![0.0; graph.n_edges()];
        let edges = graph.edge_vec();
        for &(i, j, v) in triples {
            let key = if i < j { (i, j) } else { (j, i) };
            let pos = edges.binary_search(&key).expect("edge present");
            values[pos] = v;
        }
        Self::new(graph, values)
    }

    pub fn zero(graph: Graph) -> Self {
        let m = graph.n_edges();
        Self::new(graph, vec![0.0; m]).expect("zero interactions are valid")
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.graph.clone(), values)
    }

    /// `ψ_ij`, zero off the edge set.
    pub fn psi(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).map(|p| self.values[p]).unwrap_or(0.0)
    }

    /// `Σ_{(i,j)∈E} ψ_ij o_i o_j` for an orthant index.
    pub fn energy(&self, s: u32) -> f64 {
        self.edges
            .iter()
            .zip(&self.values)
            .map(|(&(i, j), &v)| v * pair_sign(s, i, j))
            .sum()
    }

    /// Neighbour lists with interaction values.
    fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut nb = vec![Vec::new(); self.dim()];
        for (&(i, j), &v) in self.edges.iter().zip(&self.values) {
            nb[i].push((j, v));
            nb[j].push((i, v));
        }
        nb
    }
}

/// Nonnegative weights on the `2^d` orthants.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthantWeights {
    d: usize,
    gamma: Vec<f64>,
}

impl OrthantWeights {
    /// Direct assignment; validates the marginal constraint to `1e-9`.
    pub fn new(d: usize, gamma: Vec<f64>) -> Result<Self> {
        check_enum(d)?;
        if gamma.len() != 1usize << d {
            return Err(Error::DimensionMismatch { expected: 1 << d, got: gamma.len() });
        }
        if gamma.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidSpec("orthant weights must be finite and nonnegative".into()));
        }
        let w = Self { d, gamma };
        let err = w.max_marginal_error();
        if err > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "orthant weights violate the marginal constraint by {err:e}"
            )));
        }
        Ok(w)
    }

    /// The symmetric choice `γ_o = 2^{1-d}`.
    pub fn symmetric(d: usize) -> Result<Self> {
        check_enum(d)?;
        Ok(Self { d, gamma: vec![2f64.powi(1 - d as i32); 1 << d] })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn get(&self, orthant: u32) -> f64 {
        self.gamma[orthant as usize]
    }

    /// `Σ_{o: o_i = a} γ_o` for every `i` and `a ∈ {-1, +1}` (as `[minus, plus]`).
    pub fn marginal_sums(&self) -> Vec<[f64; 2]> {
        let mut sums = vec![[0.0; 2]; self.d];
        for (s, &g) in self.gamma.iter().enumerate() {
            for (i, pair) in sums.iter_mut().enumerate() {
                pair[(s >> i) & 1] += g;
            }
        }
        sums
    }

    pub fn max_marginal_error(&self) -> f64 {
        self.marginal_sums()
            .iter()
            .flat_map(|p| p.iter().map(|v| (v - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    pub fn total_mass(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Mass of the bivariate positive-association set,
    /// `m_ij = Σ_{o: o_i o_j = 1} γ_o / 2`.
    pub fn pair_agreement(&self, i: usize, j: usize) -> f64 {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(s, _)| pair_sign(*s as u32, i, j) > 0.0)
            .map(|(_, g)| g)
            .sum::<f64>()
            * 0.5
    }
}

/// Energies of all states with the top spin fixed to `+1` (the model is
/// invariant under global sign flip).
fn half_energies(psi: &IsingModel) -> Vec<f64> {
    let d = psi.dim();
    if d == 0 {
        return vec![0.0];
    }
    let top = 1u32 << (d - 1);
    (0..top).map(|s| psi.energy(s | top)).collect()
}

/// `log C(Ψ) = log Σ_o exp(Σ ψ_ij o_i o_j)`.
pub fn log_partition(psi: &IsingModel) -> Result<f64> {
    check_enum(psi.dim())?;
    let e = half_energies(psi);
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = e.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln() + std::f64::consts::LN_2)
}

/// Ising orthant weights `γ_o = 2 exp(Σ ψ_ij o_i o_j) / C(Ψ)`.
pub fn ising_weights(psi: &IsingModel) -> Result<OrthantWeights> {
    let d = psi.dim();
    check_enum(d)?;
    let log_c = log_partition(psi)?;
    let gamma = (0..(1u32 << d)).map(|s| 2.0 * (psi.energy(s) - log_c).exp()).collect();
    Ok(OrthantWeights { d, gamma })
}

/// Exact `E_Ψ[B_i B_j]` for every edge of `Ψ`, by enumeration.
pub fn exact_moments(psi: &IsingModel) -> Result<Vec<f64>> {
    Ok(exact_moments_and_log_partition(psi)?.0)
}

/// Edge moments together with `log C(Ψ)` from a single enumeration pass.
pub fn exact_moments_and_log_partition(psi: &IsingModel) -> Result<(Vec<f64>, f64)> {
    let d = psi.dim();
    check_enum(d)?;
    let m = psi.edges().len();
    if d == 0 {
        return Ok((vec![0.0; m], 0.0));
    }
    let top = 1u32 << (d - 1);
    let shift: f64 = psi.values().iter().map(|v| v.abs()).sum();
    let mut z = 0.0;
    let mut acc = vec![0.0; m];
    for s in 0..top {
        let s = s | top;
        let w = (psi.energy(s) - shift).exp();
        z += w;
        for (a, &(i, j)) in acc.iter_mut().zip(psi.edges()) {
            *a += w * pair_sign(s, i, j);
        }
    }
    let moments = acc.into_iter().map(|a| a / z).collect();
    Ok((moments, shift + z.ln() + std::f64::consts::LN_2))
}

/// Exact inverse-CDF sampler for the Rademacher vector with
/// `P(B = o) = γ_o / 2`.
#[derive(Debug, Clone)]
pub struct RademacherSampler {
    d: usize,
    cdf: Vec<f64>,
}

impl RademacherSampler {
    pub fn new(weights: &OrthantWeights) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .as_slice()
            .iter()
            .map(|g| {
                acc += 0.5 * g;
                acc
            })
            .collect();
        let total = *cdf.last().unwrap();
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Self { d: weights.dim(), cdf }
    }

    pub fn from_ising(psi: &IsingModel) -> Result<Self> {
        Ok(Self::new(&ising_weights(psi)?))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Draws an orthant index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u32
    }
}

/// Draws `o ∈ {-1,1}^d` from the Ising model.
pub fn sample_rademacher<R: Rng + ?Sized>(psi: &IsingModel, rng: &mut R) -> Result<Vec<i8>> {
    let sampler = RademacherSampler::from_ising(psi)?;
    Ok(orthant_signs(sampler.sample(rng), psi.dim()))
}

/// Monte Carlo moment estimates with batch-means standard errors.
#[derive(Debug, Clone)]
pub struct GibbsMoments {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

/// Default burn-in in sweeps of `d` site updates: `10 d √samples`.
pub fn default_burn_in(d: usize, samples: usize) -> usize {
    (10.0 * d as f64 * (samples as f64).sqrt()).ceil() as usize
}

/// Random-scan single-site Gibbs sampler. Retains one state every `d` site
/// updates after `burn_in` sweeps (default [`default_burn_in`]).
pub fn gibbs_moments<R: Rng + ?Sized>(
    psi: &IsingModel,
    samples: usize,
    burn_in: Option<usize>,
    rng: &mut R,
) -> GibbsMoments {
    let d = psi.dim();
    let m = psi.edges().len();
    let samples = samples.max(1);
    let nb = psi.neighbours();
    let mut state: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let update = |state: &mut Vec<f64>, rng: &mut R| {
        let i = rng.random_range(0..d);
        let field: f64 = nb[i].iter().map(|&(j, v)| v * state[j]).sum();
        // P(o_i = +1 | rest) = 1 / (1 + exp(-2h))
        let p = 1.0 / (1.0 + (-2.0 * field).exp());
        state[i] = if rng.random::<f64>() < p { 1.0 } else { -1.0 };
    };
    if d == 0 {
        return GibbsMoments { mean: vec![0.0; m], std_err: vec![0.0; m], samples };
    }
    let burn = burn_in.unwrap_or_else(|| default_burn_in(d, samples));
    for _ in 0..burn * d {
        update(&mut state, rng);
    }
    let n_batches = ((samples as f64).sqrt().floor() as usize).clamp(1, samples);
    let batch_len = samples / n_batches;
    let mut sum = vec![0.0; m];
    let mut batch = vec![0.0; m];
    let mut batch_means: Vec<Vec<f64>> = Vec::with_capacity(n_batches);
    let mut in_batch = 0;
    for _ in 0..samples {
        for _ in 0..d {
            update(&mut state, rng);
        }
        for (e, &(i, j)) in psi.edges().iter().enumerate() {
            let v = state[i] * state[j];
            sum[e] += v;
            batch[e] += v;
        }
        in_batch += 1;
        if in_batch == batch_len && batch_means.len() < n_batches {
            batch_means.push(batch.iter().map(|b| b / batch_len as f64).collect());
            batch.iter_mut().for_each(|b| *b = 0.0);
            in_batch = 0;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / samples as f64).collect();
    let std_err = (0..m)
        .map(|e| {
            let b = batch_means.len();
            if b < 2 {
                return f64::NAN;
            }
            let bm: f64 = batch_means.iter().map(|v| v[e]).sum::<f64>() / b as f64;
            let var = batch_means.iter().map(|v| (v[e] - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
            (var / b as f64).sqrt()
        })
        .collect();
    GibbsMoments { mean, std_err, samples }
}
