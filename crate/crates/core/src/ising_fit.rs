//! Ising asymmetry estimation on a fixed graph: covariance targets from the
//! χ̂ sign components and L1-penalized moment matching by ADAM ascent.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ising::{exact_moments_and_log_partition, gibbs_moments, ising_weights, IsingModel, OrthantWeights};
use crate::levy::IncrementPanel;
use crate::variogram::{chi_components, ChiComponents, PanelRanks};

/// Per-edge targets `â_ij` for `E[B_i B_j]`.
#[derive(Debug, Clone)]
pub struct CovTargets {
    pub edges: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub components: Vec<ChiComponents>,
}

/// `â_ij = (χ̂^{++} + χ̂^{--} - χ̂^{+-} - χ̂^{-+}) / χ̂_ij` on every edge.
pub fn cov_targets(panel: &IncrementPanel, graph: &Graph, k: usize) -> Result<CovTargets> {
    if graph.dim() != panel.dim() {
        return Err(Error::DimensionMismatch { expected: panel.dim(), got: graph.dim() });
    }
    let ranks = PanelRanks::new(panel);
    let edges = graph.edge_vec();
    let mut values = Vec::with_capacity(edges.len());
    let mut components = Vec::with_capacity(edges.len());
    for &(i, j) in &edges {
        let c = chi_components(&ranks, i, j, k)?;
        values.push(c.a_hat().ok_or(Error::NoTailDependence(i, j))?);
        components.push(c);
    }
    Ok(CovTargets { edges, values, components })
}

/// Targets given directly, e.g. exact model moments.
pub fn targets_from_values(graph: &Graph, values: Vec<f64>) -> Result<CovTargets> {
    let edges = graph.edge_vec();
    if values.len() != edges.len() {
        return Err(Error::DimensionMismatch { expected: edges.len(), got: values.len() });
    }
    let zero = ChiComponents { pp: 0.0, pm: 0.0, mp: 0.0, mm: 0.0 };
    Ok(CovTargets { components: vec![zero; edges.len()], edges, values })
}

/// Empirical `m̂_ij = (χ̂^{++} + χ̂^{--}) / χ̂_ij`.
pub fn empirical_m(panel: &IncrementPanel, i: usize, j: usize, k: usize) -> Result<f64> {
    chi_components(&PanelRanks::new(panel), i, j, k)?.m_hat().ok_or(Error::NoTailDependence(i, j))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// L1 penalty `v`.
    pub penalty: f64,
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iter: usize,
    /// Stop when the sub-gradient norm falls below this.
    pub grad_tol: f64,
    /// Largest dimension using exact moments; Gibbs above.
    pub exact_max_dim: usize,
    pub gibbs_samples: usize,
    /// `|ψ̂|` above this is flagged as a boundary escape.
    pub flag_threshold: f64,
    /// Consecutive objective decreases treated as divergence.
    pub divergence_window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            penalty: 0.05,
            step: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iter: 500,
            grad_tol: 1e-3,
            exact_max_dim: 16,
            gibbs_samples: 5000,
            flag_threshold: 10.0,
            divergence_window: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Penalized objective; NaN when moments come from Gibbs sampling.
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct IsingFit {
    pub psi: IsingModel,
    pub targets: Vec<f64>,
    /// Model moments `E_Ψ̂[B_i B_j]` at the returned estimate.
    pub fitted: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Some `|ψ̂_ij|` exceeds the flag threshold.
    pub flagged: bool,
}

impl IsingFit {
    pub fn weights(&self) -> Result<OrthantWeights> {
        weights_from_fit(&self.psi)
    }
}

/// Minimal-norm element of the sub-differential of
/// `Σ t ψ - log C(ψ) - v‖ψ‖₁` per coordinate.
fn subgradient(psi: &[f64], targets: &[f64], moments: &[f64], v: f64) -> Vec<f64> {
    psi.iter()
        .zip(targets.iter().zip(moments))
        .map(|(&p, (&t, &m))| {
            let g = t - m;
            if p > 0.0 {
                g - v
            } else if p < 0.0 {
                g + v
            } else if g > v {
                g - v
            } else if g < -v {
                g + v
            } else {
                0.0
            }
        })
        .collect()
}

fn moments<R: Rng + ?Sized>(model: &IsingModel, opts: &FitOptions, rng: &mut R) -> Result<(Vec<f64>, Option<f64>)> {
    if model.dim() <= opts.exact_max_dim {
        let (m, log_c) = exact_moments_and_log_partition(model)?;
        Ok((m, Some(log_c)))
    } else {
        Ok((gibbs_moments(model, opts.gibbs_samples, None, rng).mean, None))
    }
}

/// Maximizes `Σ_E â_ij ψ_ij - log C(Ψ) - v Σ_E |ψ_ij|` over `Ψ` supported
/// on the graph by ADAM, starting from `Ψ = 0`.
pub fn fit_psi<R: Rng + ?Sized>(
    targets: &CovTargets,
    graph: &Graph,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<IsingFit> {
    if targets.edges != graph.edge_vec() {
        return Err(Error::InvalidSpec("targets do not match the graph's edges".into()));
    }
    if !(opts.penalty >= 0.0) {
        return Err(Error::InvalidConfig(format!("penalty must be nonnegative, got {}", opts.penalty)));
    }
    let p = targets.values.len();
    let mut psi = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut trace = Vec::new();
    let mut last_obj = f64::NEG_INFINITY;
    let mut decreases = 0usize;
    let mut converged = false;
    let mut model = IsingModel::zero(graph.clone());
    let mut fitted;
    let mut iter = 0usize;
    loop {
        let (mom, log_c) = moments(&model, opts, rng)?;
        fitted = mom;
        let g = subgradient(&psi, &targets.values, &fitted, opts.penalty);
        let grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let objective = match log_c {
            Some(lc) => {
                targets.values.iter().zip(&psi).map(|(t, p)| t * p).sum::<f64>()
                    - lc
                    - opts.penalty * psi.iter().map(|p| p.abs()).sum::<f64>()
            }
            None => f64::NAN,
        };
        trace.push(TraceRow { iter, objective, grad_norm });
        if log_c.is_some() {
            if objective < last_obj {
                decreases += 1;
                if decreases >= opts.divergence_window {
                    return Err(Error::OptimizationDiverged(iter));
                }
            } else {
                decreases = 0;
            }
            last_obj = objective;
        }
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }
        if iter >= opts.max_iter {
            break;
        }
        iter += 1;
        let t = iter as i32;
        let c1 = 1.0 - opts.beta1.powi(t);
        let c2 = 1.0 - opts.beta2.powi(t);
        for e in 0..p {
            m1[e] = opts.beta1 * m1[e] + (1.0 - opts.beta1) * g[e];
            m2[e] = opts.beta2 * m2[e] + (1.0 - opts.beta2) * g[e] * g[e];
            let next = psi[e] + opts.step * (m1[e] / c1) / ((m2[e] / c2).sqrt() + opts.eps);
            // crossing zero lands on zero so the penalty can hold it there
            psi[e] = if opts.penalty > 0.0 && psi[e] != 0.0 && next.signum() != psi[e].signum() { 0.0 } else { next };
        }
        model = model.with_values(psi.clone())?;
    }
    let flagged = psi.iter().any(|p| p.abs() > opts.flag_threshold);
    if flagged {
        log::warn!("Ising fit has |psi| above {}; moment equations may have no solution", opts.flag_threshold);
    }
    Ok(IsingFit { psi: model, targets: targets.values.clone(), fitted, trace, converged, flagged })
}

/// Orthant weights of a fitted Ising model.
pub fn weights_from_fit(psi: &IsingModel) -> Result<OrthantWeights> {
    ising_weights(psi)
}

/// Model-implied `m_ij = Σ_{o: o_i o_j = 1} γ_o / 2`.
pub fn implied_m(weights: &OrthantWeights, i: usize, j: usize) -> f64 {
    weights.pair_agreement(i, j)
}
