//! Monte Carlo study harness: random Barabási–Albert graphs, random IHR
//! models on them, and graph/Ising recovery scored across replications.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::eglearn::{penalty_path, rho_grid, Criterion, Learner, PenaltyPath, GRID_LEN, GRID_RATIO};
use crate::error::{Error, Result};
use crate::graph::{f1_score, mst_graph, Graph, MstKind};
use crate::hr::{project_cnd, variogram_from_theta};
use crate::io::fmt_g;
use crate::ising::IsingModel;
use crate::ising_fit::{cov_targets, fit_psi, FitOptions};
use crate::levy::{simulate_increments, IncrementPanel, ProcessSpec, DEFAULT_EPSILON};
use crate::rng::cell_stream;
use crate::variogram::{chi_hat_matrix, gamma_hat};

/// Retries allowed when a random model fails validation.
pub const MAX_GENERATION_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum Method {
    #[serde(rename = "MST-Gamma")]
    MstGamma,
    #[serde(rename = "MST-chi")]
    MstChi,
    #[serde(rename = "NS-path")]
    NsPath,
    #[serde(rename = "Glasso-path")]
    GlassoPath,
    #[serde(rename = "NS-AIC")]
    NsAic,
    #[serde(rename = "NS-BIC")]
    NsBic,
    #[serde(rename = "Glasso-AIC")]
    GlassoAic,
    #[serde(rename = "Glasso-BIC")]
    GlassoBic,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::MstGamma,
        Method::MstChi,
        Method::NsPath,
        Method::GlassoPath,
        Method::NsAic,
        Method::NsBic,
        Method::GlassoAic,
        Method::GlassoBic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::MstGamma => "MST-Gamma",
            Method::MstChi => "MST-chi",
            Method::NsPath => "NS-path",
            Method::GlassoPath => "Glasso-path",
            Method::NsAic => "NS-AIC",
            Method::NsBic => "NS-BIC",
            Method::GlassoAic => "Glasso-AIC",
            Method::GlassoBic => "Glasso-BIC",
        }
    }

    fn learner(self) -> Option<Learner> {
        match self {
            Method::NsPath | Method::NsAic | Method::NsBic => Some(Learner::NeighborhoodSelection),
            Method::GlassoPath | Method::GlassoAic | Method::GlassoBic => Some(Learner::GraphicalLasso),
            _ => None,
        }
    }

    fn is_path(self) -> bool {
        matches!(self, Method::NsPath | Method::GlassoPath)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiRegime {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default = "default_family")]
    pub family: String,
    pub d: usize,
    pub attachment: usize,
}

fn default_family() -> String {
    "barabasi_albert".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub theta_range: [f64; 2],
    pub psi_regime: PsiRegime,
    /// Union of intervals `ψ_ij` is drawn from uniformly.
    pub psi_intervals: Vec<[f64; 2]>,
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            theta_range: [2.0, 5.0],
            psi_regime: PsiRegime::Asymmetric,
            psi_intervals: vec![[-0.6, -0.2], [0.2, 0.6]],
            alpha: 1.5,
            c_plus: 1.0,
            c_minus: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub delta: f64,
    pub epsilon: f64,
    /// `q_n = n^{-q_exponent}`; the χ̂ and Ising targets use `k = ⌊n q_n⌋`.
    pub q_exponent: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { delta: 0.01, epsilon: DEFAULT_EPSILON, q_exponent: 0.3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Fixed penalty grid; when absent each data set gets a log-spaced grid
    /// below its own `ρ_max`.
    pub rho_grid: Option<Vec<f64>>,
    pub grid_len: usize,
    pub grid_ratio: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { rho_grid: None, grid_len: GRID_LEN, grid_ratio: GRID_RATIO }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsingConfig {
    pub enabled: bool,
    pub penalty: f64,
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for IsingConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self { enabled: false, penalty: f.penalty, step: f.step, max_iter: f.max_iter, grad_tol: f.grad_tol }
    }
}

impl IsingConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            penalty: self.penalty,
            step: self.step,
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub replications: usize,
    pub n: Vec<usize>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    pub graph: GraphConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub ising: IsingConfig,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Keys of a study configuration, as shown by `--help`.
pub const STUDY_KEYS: &str = "\
seed, replications, n (list), methods (list of MST-Gamma, MST-chi, NS-path, Glasso-path, NS-AIC, NS-BIC, \
Glasso-AIC, Glasso-BIC; default all), graph.family (barabasi_albert), graph.d, graph.attachment (1 or 2), \
model.theta_range [2,5], model.psi_regime (symmetric|asymmetric), model.psi_intervals [[-0.6,-0.2],[0.2,0.6]], \
model.alpha 1.5, model.c_plus 1, model.c_minus 1, sampling.delta 0.01, sampling.epsilon 1e-3, \
sampling.q_exponent 0.3, selection.rho_grid (optional list), selection.grid_len 32, selection.grid_ratio 1e-3, \
ising.enabled false, ising.penalty 0.05, ising.step 0.05, ising.max_iter 500, ising.grad_tol 1e-3";

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 100) {
            return bad("n must be a nonempty list of sample sizes >= 100".into());
        }
        if self.graph.family != "barabasi_albert" {
            return bad(format!("unknown graph family {:?}", self.graph.family));
        }
        if self.graph.d < 3 {
            return bad("graph.d must be at least 3".into());
        }
        if !matches!(self.graph.attachment, 1 | 2) {
            return bad(format!("graph.attachment must be 1 or 2, got {}", self.graph.attachment));
        }
        let [lo, hi] = self.model.theta_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("model.theta_range [{lo}, {hi}] must satisfy 0 < lo <= hi"));
        }
        if self.model.psi_regime == PsiRegime::Asymmetric {
            if self.model.psi_intervals.is_empty() {
                return bad("model.psi_intervals must not be empty".into());
            }
            if self.model.psi_intervals.iter().any(|[a, b]| !(a.is_finite() && b.is_finite() && a <= b)) {
                return bad("model.psi_intervals entries must be finite [lo, hi] with lo <= hi".into());
            }
            if self.model.psi_intervals.iter().all(|[a, b]| a == b) && self.model.psi_intervals.len() > 1 {
                return bad("model.psi_intervals has zero total length".into());
            }
        }
        if !(self.model.alpha > 0.0 && self.model.alpha < 2.0) {
            return bad(format!("model.alpha must lie in (0, 2), got {}", self.model.alpha));
        }
        if !(self.model.c_plus > 0.0 && self.model.c_minus > 0.0) {
            return bad("model.c_plus and model.c_minus must be positive".into());
        }
        if !(self.sampling.delta > 0.0 && self.sampling.epsilon > 0.0) {
            return bad("sampling.delta and sampling.epsilon must be positive".into());
        }
        if !(self.sampling.q_exponent > 0.0 && self.sampling.q_exponent < 1.0) {
            return bad("sampling.q_exponent must lie in (0, 1)".into());
        }
        match &self.selection.rho_grid {
            Some(g) if g.is_empty() || g.iter().any(|&r| !(r > 0.0) || !r.is_finite()) => {
                return bad("selection.rho_grid must be a nonempty list of positive penalties".into());
            }
            None if self.selection.grid_len < 2 || !(self.selection.grid_ratio > 0.0 && self.selection.grid_ratio < 1.0) => {
                return bad("selection.grid_len must be >= 2 and grid_ratio in (0, 1)".into());
            }
            _ => {}
        }
        if !(self.ising.penalty >= 0.0 && self.ising.step > 0.0) {
            return bad("ising.penalty must be >= 0 and ising.step > 0".into());
        }
        Ok(())
    }

    fn grid_len(&self) -> usize {
        self.selection.rho_grid.as_ref().map_or(self.selection.grid_len, Vec::len)
    }

    fn q(&self, n: usize) -> f64 {
        (n as f64).powf(-self.sampling.q_exponent)
    }

    fn k(&self, n: usize) -> usize {
        ((n as f64 * self.q(n)).floor() as usize).max(1)
    }
}

/// Barabási–Albert graph: node `t` attaches to `min(a, t)` distinct earlier
/// nodes chosen with probability proportional to degree (uniformly while
/// all degrees are zero).
pub fn gen_barabasi_albert<R: Rng + ?Sized>(d: usize, a: usize, rng: &mut R) -> Result<Graph> {
    if !matches!(a, 1 | 2) {
        return Err(Error::InvalidConfig(format!("attachment must be 1 or 2, got {a}")));
    }
    if d < 3 {
        return Err(Error::InvalidConfig(format!("graph needs at least 3 nodes, got {d}")));
    }
    let mut g = Graph::empty(d);
    let mut degree = vec![0usize; d];
    for t in 1..d {
        let m = a.min(t);
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        if degree[..t].iter().all(|&x| x == 0) {
            chosen.extend(sample_indices(rng, t, m));
        } else {
            while chosen.len() < m {
                let total: usize = (0..t).filter(|v| !chosen.contains(v)).map(|v| degree[v]).sum();
                let mut u = rng.random_range(0..total);
                let v = (0..t)
                    .filter(|v| !chosen.contains(v))
                    .find(|&v| {
                        if u < degree[v] {
                            true
                        } else {
                            u -= degree[v];
                            false
                        }
                    })
                    .expect("degree mass covers the draw");
                chosen.push(v);
            }
        }
        for v in chosen {
            g.add_edge(v, t)?;
            degree[v] += 1;
            degree[t] += 1;
        }
    }
    Ok(g)
}

fn draw_psi<R: Rng + ?Sized>(intervals: &[[f64; 2]], rng: &mut R) -> f64 {
    let total: f64 = intervals.iter().map(|[a, b]| b - a).sum();
    if total == 0.0 {
        return intervals[rng.random_range(0..intervals.len())][0];
    }
    let mut u = rng.random::<f64>() * total;
    for &[a, b] in intervals {
        if u <= b - a {
            return a + u;
        }
        u -= b - a;
    }
    intervals[intervals.len() - 1][1]
}

/// Random IHR model on `graph`: `Θ` is the weighted Laplacian with edge
/// weights uniform on `theta_range`, `ψ_ij` uniform on the configured
/// intervals (zero in the symmetric regime).
pub fn gen_model<R: Rng + ?Sized>(graph: &Graph, model: &ModelConfig, rng: &mut R) -> Result<ProcessSpec> {
    if !graph.is_connected() {
        return Err(Error::DisconnectedGraph);
    }
    if !(model.alpha > 0.0 && model.alpha < 2.0) || !(model.c_plus > 0.0 && model.c_minus > 0.0) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 2) and scales must be positive".into()));
    }
    let d = graph.dim();
    let [lo, hi] = model.theta_range;
    for _ in 0..MAX_GENERATION_RETRIES {
        let mut theta = DMatrix::zeros(d, d);
        for (i, j) in graph.edges() {
            let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
            theta[(i, j)] = -w;
            theta[(j, i)] = -w;
            theta[(i, i)] += w;
            theta[(j, j)] += w;
        }
        let values: Vec<f64> = match model.psi_regime {
            PsiRegime::Symmetric => vec![0.0; graph.n_edges()],
            PsiRegime::Asymmetric => (0..graph.n_edges()).map(|_| draw_psi(&model.psi_intervals, rng)).collect(),
        };
        let built = variogram_from_theta(&theta).and_then(|gamma| {
            let psi = IsingModel::new(graph.clone(), values)?;
            ProcessSpec::new(gamma, psi, vec![model.alpha; d], vec![model.c_plus; d], vec![model.c_minus; d], vec![0.0; d])
        });
        match built {
            Ok(spec) => return Ok(spec),
            Err(e) => log::debug!("model draw rejected: {e}"),
        }
    }
    Err(Error::GenerationFailed(MAX_GENERATION_RETRIES))
}

/// One row per attempted cell. Path methods have one cell per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub rep: usize,
    pub n: usize,
    pub method: Method,
    pub rho_index: Option<usize>,
    pub rho: Option<f64>,
    pub n_edges: Option<usize>,
    pub f1: Option<f64>,
    /// Exit-code class and message of a failed cell.
    pub error: Option<(i32, String)>,
}

/// Fitted `ψ̂` on one true edge, fitting on the true graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRow {
    pub rep: usize,
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub psi_true: f64,
    pub psi_hat: Option<f64>,
    pub target: Option<f64>,
    pub flagged: bool,
    pub error: Option<(i32, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub rep: usize,
    pub n: usize,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub psi_rows: Vec<PsiRow>,
    pub timing: Vec<TimingRow>,
    /// True graph of each replication (`None` if generation failed).
    pub truths: Vec<Option<Graph>>,
}

fn err_pair(e: &Error) -> (i32, String) {
    (e.exit_code(), e.to_string().replace(['\n', ','], ";"))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

impl StudyResult {
    /// Deterministic results table.
    pub fn results_csv(&self) -> String {
        let mut s = String::from("rep,n,method,rho_index,rho,n_edges,f1,status,error_code,error\n");
        for r in &self.rows {
            let (status, code, msg) = match &r.error {
                None => ("ok", String::new(), String::new()),
                Some((c, m)) => ("error", c.to_string(), m.clone()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{status},{code},{msg}",
                r.rep,
                r.n,
                r.method.label(),
                opt(&r.rho_index),
                r.rho.map_or(String::new(), fmt_g),
                opt(&r.n_edges),
                r.f1.map_or(String::new(), fmt_g),
            );
        }
        s
    }

    pub fn psi_csv(&self) -> String {
        let mut s = String::from("rep,n,i,j,psi_true,psi_hat,target,flag,status,error_code,error\n");
        for r in &self.psi_rows {
            let (status, code, msg) = match &r.error {
                None => ("ok", String::new(), String::new()),
                Some((c, m)) => ("error", c.to_string(), m.clone()),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{status},{code},{msg}",
                r.rep,
                r.n,
                r.i + 1,
                r.j + 1,
                fmt_g(r.psi_true),
                r.psi_hat.map_or(String::new(), fmt_g),
                r.target.map_or(String::new(), fmt_g),
                u8::from(r.flagged),
            );
        }
        s
    }

    /// Wall-clock runtimes; kept apart from the deterministic tables.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("rep,n,stage,seconds\n");
        for t in &self.timing {
            let _ = writeln!(s, "{},{},{},{}", t.rep, t.n, t.stage, fmt_g(t.seconds));
        }
        s
    }

    /// F1 scores of successful rows for `method` at `n` (path methods: at
    /// grid index `rho_index`).
    pub fn f1_values(&self, method: Method, n: usize, rho_index: Option<usize>) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.n == n && r.rho_index == rho_index)
            .filter_map(|r| r.f1)
            .collect()
    }
}

struct UnitOutput {
    rows: Vec<StudyRow>,
    psi_rows: Vec<PsiRow>,
    timing: Vec<TimingRow>,
}

struct Unit<'a> {
    cfg: &'a StudyConfig,
    rep: usize,
    n: usize,
    out: UnitOutput,
}

impl Unit<'_> {
    fn row(&self, method: Method, rho_index: Option<usize>) -> StudyRow {
        StudyRow { rep: self.rep, n: self.n, method, rho_index, rho: None, n_edges: None, f1: None, error: None }
    }

    fn fail_method(&mut self, method: Method, e: &Error) {
        self.fail_method_with(method, err_pair(e));
    }

    fn fail_method_with(&mut self, method: Method, err: (i32, String)) {
        let indices: Vec<Option<usize>> =
            if method.is_path() { (0..self.cfg.grid_len()).map(Some).collect() } else { vec![None] };
        for idx in indices {
            let mut r = self.row(method, idx);
            r.error = Some(err.clone());
            self.out.rows.push(r);
        }
    }

    fn fail_all(&mut self, truth: Option<&ProcessSpec>, e: &Error) {
        for &m in &self.cfg.methods {
            self.fail_method(m, e);
        }
        if self.cfg.ising.enabled {
            if let Some(psi) = truth.and_then(|s| s.psi()) {
                for (&(i, j), &v) in psi.edges().iter().zip(psi.values()) {
                    self.out.psi_rows.push(PsiRow {
                        rep: self.rep,
                        n: self.n,
                        i,
                        j,
                        psi_true: v,
                        psi_hat: None,
                        target: None,
                        flagged: false,
                        error: Some(err_pair(e)),
                    });
                }
            }
        }
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.out.timing.push(TimingRow {
            rep: self.rep,
            n: self.n,
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

fn run_unit(cfg: &StudyConfig, rep: usize, n_idx: usize, spec: &Result<ProcessSpec>) -> UnitOutput {
    let n = cfg.n[n_idx];
    let mut u = Unit { cfg, rep, n, out: UnitOutput { rows: Vec::new(), psi_rows: Vec::new(), timing: Vec::new() } };
    let spec = match spec {
        Ok(s) => s,
        Err(e) => {
            u.fail_all(None, e);
            return u.out;
        }
    };
    let truth = spec.psi().map(|p| p.graph().clone()).expect("generated specs carry an Ising model");
    let mut rng = cell_stream(cfg.seed, rep as u64, 1 + n_idx as u64);
    let t0 = Instant::now();
    let panel = match simulate_increments(spec, n, cfg.sampling.delta, cfg.sampling.epsilon, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            u.fail_all(Some(spec), &e);
            return u.out;
        }
    };
    u.time("simulate", t0);
    let (q, k) = (cfg.q(n), cfg.k(n));
    let t0 = Instant::now();
    let est = match gamma_hat(&panel, q) {
        Ok(e) => e,
        Err(e) => {
            u.fail_all(Some(spec), &e);
            return u.out;
        }
    };
    let projected = project_cnd(&est.gamma);
    u.time("estimate-variogram", t0);

    let mut paths: [Option<Result<PenaltyPath>>; 2] = [None, None];
    for &method in &cfg.methods {
        let t0 = Instant::now();
        match method {
            Method::MstGamma | Method::MstChi => {
                let fitted = if method == Method::MstGamma {
                    mst_graph(&est.gamma, MstKind::Gamma)
                } else {
                    chi_hat_matrix(&panel, k).and_then(|c| mst_graph(&c, MstKind::Chi))
                };
                match fitted {
                    Ok(g) => {
                        let mut r = u.row(method, None);
                        r.n_edges = Some(g.n_edges());
                        r.f1 = Some(f1_score(&truth, &g));
                        u.out.rows.push(r);
                    }
                    Err(e) => u.fail_method(method, &e),
                }
            }
            _ => {
                let learner = method.learner().expect("path-based method");
                let slot = usize::from(learner == Learner::GraphicalLasso);
                if paths[slot].is_none() {
                    let grid = cfg
                        .selection
                        .rho_grid
                        .clone()
                        .unwrap_or_else(|| rho_grid(&projected, cfg.selection.grid_len, cfg.selection.grid_ratio));
                    paths[slot] = Some(penalty_path(&projected, learner, &grid, n, q));
                }
                let path = match paths[slot].as_ref().expect("path computed") {
                    Ok(p) => p.clone(),
                    Err(e) => {
                        u.fail_method_with(method, err_pair(e));
                        u.time(method.label(), t0);
                        continue;
                    }
                };
                if method.is_path() {
                    for (idx, p) in path.points.iter().enumerate() {
                        let mut r = u.row(method, Some(idx));
                        r.rho = Some(p.rho);
                        r.n_edges = Some(p.graph.n_edges());
                        r.f1 = Some(f1_score(&truth, &p.graph));
                        u.out.rows.push(r);
                    }
                } else {
                    let crit = if matches!(method, Method::NsAic | Method::GlassoAic) { Criterion::Aic } else { Criterion::Bic };
                    match path.select(crit) {
                        Some(idx) => {
                            let p = &path.points[idx];
                            let mut r = u.row(method, None);
                            r.rho = Some(p.rho);
                            r.n_edges = Some(p.graph.n_edges());
                            r.f1 = Some(f1_score(&truth, &p.graph));
                            u.out.rows.push(r);
                        }
                        None => u.fail_method(method, &Error::DisconnectedGraph),
                    }
                }
            }
        }
        u.time(method.label(), t0);
    }

    if cfg.ising.enabled {
        let t0 = Instant::now();
        let psi_rows = fit_true_graph(cfg, rep, n_idx, spec, &truth, &panel, k);
        u.out.psi_rows.extend(psi_rows);
        u.time("fit-ising", t0);
    }
    u.out
}

fn fit_true_graph(
    cfg: &StudyConfig,
    rep: usize,
    n_idx: usize,
    spec: &ProcessSpec,
    truth: &Graph,
    panel: &IncrementPanel,
    k: usize,
) -> Vec<PsiRow> {
    let n = cfg.n[n_idx];
    let psi = spec.psi().expect("generated specs carry an Ising model");
    let mut rng = cell_stream(cfg.seed, rep as u64, (1 << 16) + n_idx as u64);
    let fit = cov_targets(panel, truth, k).and_then(|t| fit_psi(&t, truth, &cfg.ising.fit_options(), &mut rng));
    psi.edges()
        .iter()
        .zip(psi.values())
        .enumerate()
        .map(|(e, (&(i, j), &v))| {
            let mut row = PsiRow { rep, n, i, j, psi_true: v, psi_hat: None, target: None, flagged: false, error: None };
            match &fit {
                Ok(f) => {
                    row.psi_hat = Some(f.psi.values()[e]);
                    row.target = Some(f.targets[e]);
                    row.flagged = f.flagged;
                }
                Err(err) => row.error = Some(err_pair(err)),
            }
            row
        })
        .collect()
}

/// Runs the full factorial design. Models are drawn per replication (shared
/// across sample sizes); each `(replication, n)` unit has its own random
/// stream, so results do not depend on scheduling.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let specs: Vec<Result<ProcessSpec>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = cell_stream(cfg.seed, rep as u64, 0);
            let g = gen_barabasi_albert(cfg.graph.d, cfg.graph.attachment, &mut rng)?;
            gen_model(&g, &cfg.model, &mut rng)
        })
        .collect();
    let units: Vec<(usize, usize)> =
        (0..cfg.replications).flat_map(|r| (0..cfg.n.len()).map(move |i| (r, i))).collect();
    let outputs: Vec<UnitOutput> = units.par_iter().map(|&(rep, i)| run_unit(cfg, rep, i, &specs[rep])).collect();
    let mut result = StudyResult {
        rows: Vec::new(),
        psi_rows: Vec::new(),
        timing: Vec::new(),
        truths: specs.iter().map(|s| s.as_ref().ok().and_then(|s| s.psi()).map(|p| p.graph().clone())).collect(),
    };
    for o in outputs {
        result.rows.extend(o.rows);
        result.psi_rows.extend(o.psi_rows);
        result.timing.extend(o.timing);
    }
    Ok(result)
}

/// Number of result rows a complete study produces.
pub fn expected_rows(cfg: &StudyConfig) -> usize {
    let per_unit: usize = cfg.methods.iter().map(|m| if m.is_path() { cfg.grid_len() } else { 1 }).sum();
    per_unit * cfg.replications * cfg.n.len()
}
