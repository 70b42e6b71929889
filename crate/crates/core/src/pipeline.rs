//! End-to-end fit on an increment panel: variogram estimate, graph
//! selection, completion, Ising fit, and comparison tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;

use crate::eglearn::{complete_variogram, penalty_path, rho_grid, Criterion, GraphEstimate, Learner, PenaltyPath};
use crate::error::{Error, Result};
use crate::graph::{f1_score, mst_graph, Graph, MstKind};
use crate::hr::{chi_from_gamma, project_cnd};
use crate::io::{edges_to_text, fmt_g, matrix_to_csv, read_panel, weights_to_csv};
use crate::ising::OrthantWeights;
use crate::ising_fit::{cov_targets, fit_psi, implied_m, FitOptions, IsingFit};
use crate::levy::IncrementPanel;
use crate::variogram::{chi_components, gamma_hat, ChiComponents, PanelRanks, VariogramEstimate};

pub const MIN_ROWS: usize = 100;

/// Reads a panel; with `levels` the file holds process values and rows are
/// differenced. Rejects panels that are too small or have a constant column.
pub fn load_panel(path: &Path, levels: bool, delta: f64) -> Result<IncrementPanel> {
    let raw = read_panel(path, delta)?;
    let panel = if levels { difference(&raw)? } else { raw };
    check_panel(&panel)?;
    Ok(panel)
}

pub fn difference(levels: &IncrementPanel) -> Result<IncrementPanel> {
    let (n, d) = (levels.n(), levels.dim());
    if n < 2 {
        return Err(Error::InsufficientData("need at least two level rows to difference".into()));
    }
    let x = levels.data();
    let data = DMatrix::from_fn(n - 1, d, |s, c| x[(s + 1, c)] - x[(s, c)]);
    IncrementPanel::new(levels.names().to_vec(), data, levels.delta())
}

pub fn check_panel(panel: &IncrementPanel) -> Result<()> {
    if panel.dim() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 columns, got {}", panel.dim())));
    }
    if panel.n() < MIN_ROWS {
        return Err(Error::InsufficientData(format!("need at least {MIN_ROWS} rows, got {}", panel.n())));
    }
    for (c, name) in panel.names().iter().enumerate() {
        let col = panel.column(c);
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::DegenerateColumn(name.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitDataOptions {
    /// `q_n = n^{-q_exponent}`; tail count `k = ⌊n q_n⌋`.
    pub q_exponent: f64,
    pub learner: Learner,
    pub criterion: Criterion,
    pub grid: Option<Vec<f64>>,
    pub grid_len: usize,
    pub grid_ratio: f64,
    pub fit: FitOptions,
    /// Known graph, used only to fill the F1 column of the penalty path.
    pub truth: Option<Graph>,
}

impl Default for FitDataOptions {
    fn default() -> Self {
        Self {
            q_exponent: 0.3,
            learner: Learner::NeighborhoodSelection,
            criterion: Criterion::Bic,
            grid: None,
            grid_len: crate::eglearn::GRID_LEN,
            grid_ratio: crate::eglearn::GRID_RATIO,
            fit: FitOptions::default(),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiRow {
    pub i: usize,
    pub j: usize,
    pub edge: bool,
    pub empirical: f64,
    /// From the completed variogram on the selected graph.
    pub implied: f64,
    /// From the completed variogram on the Γ̂ spanning tree.
    pub implied_tree: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MRow {
    pub i: usize,
    pub j: usize,
    pub edge: bool,
    pub implied: f64,
    /// `(χ̂^{++} + χ̂^{--}) / χ̂`; NaN without tail dependence.
    pub empirical: f64,
    pub a_hat: f64,
}

impl MRow {
    /// `m̂ - (1 + â)/2`, zero up to rounding.
    pub fn identity_gap(&self) -> f64 {
        self.empirical - 0.5 * (1.0 + self.a_hat)
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub names: Vec<String>,
    pub n: usize,
    pub q: f64,
    pub k: usize,
    pub variogram: VariogramEstimate,
    pub path: PenaltyPath,
    pub selected: usize,
    pub estimate: GraphEstimate,
    pub tree: GraphEstimate,
    pub ising: IsingFit,
    pub weights: OrthantWeights,
    pub chi_rows: Vec<ChiRow>,
    pub m_rows: Vec<MRow>,
    pub truth: Option<Graph>,
}

impl FitReport {
    /// Mean absolute implied-minus-empirical χ over all pairs, for the
    /// selected graph and for the spanning tree.
    pub fn chi_mad(&self) -> (f64, f64) {
        let n = self.chi_rows.len() as f64;
        let g = self.chi_rows.iter().map(|r| (r.implied - r.empirical).abs()).sum::<f64>() / n;
        let t = self.chi_rows.iter().map(|r| (r.implied_tree - r.empirical).abs()).sum::<f64>() / n;
        (g, t)
    }
}

fn pooled_m(c: &ChiComponents) -> f64 {
    let p = c.pooled();
    if p > 0.0 {
        (c.pp + c.mm) / p
    } else {
        f64::NAN
    }
}

/// Γ̂ → projection → penalty path → IC selection → completion → Ψ̂.
pub fn fit_data<R: Rng + ?Sized>(panel: &IncrementPanel, opts: &FitDataOptions, rng: &mut R) -> Result<FitReport> {
    check_panel(panel)?;
    let (n, d) = (panel.n(), panel.dim());
    let q = (n as f64).powf(-opts.q_exponent);
    let k = ((n as f64 * q).floor() as usize).max(1);
    let variogram = gamma_hat(panel, q)?;
    let projected = project_cnd(&variogram.gamma);
    let grid = opts.grid.clone().unwrap_or_else(|| rho_grid(&projected, opts.grid_len, opts.grid_ratio));
    let path = penalty_path(&projected, opts.learner, &grid, n, q)?;
    let selected = path.select(opts.criterion).ok_or(Error::DisconnectedGraph)?;
    let estimate = path.points[selected].estimate.clone().ok_or(Error::DisconnectedGraph)?;
    let tree = complete_variogram(&projected, &mst_graph(&variogram.gamma, MstKind::Gamma)?)?;

    let targets = cov_targets(panel, &estimate.graph, k)?;
    let ising = fit_psi(&targets, &estimate.graph, &opts.fit, rng)?;
    let weights = ising.weights()?;

    let ranks = PanelRanks::new(panel);
    let mut chi_rows = Vec::new();
    let mut m_rows = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let c = chi_components(&ranks, i, j, k)?;
            let edge = estimate.graph.has_edge(i, j);
            chi_rows.push(ChiRow {
                i,
                j,
                edge,
                empirical: c.pooled(),
                implied: chi_from_gamma(estimate.gamma.get(i, j))?,
                implied_tree: chi_from_gamma(tree.gamma.get(i, j))?,
            });
            m_rows.push(MRow {
                i,
                j,
                edge,
                implied: implied_m(&weights, i, j),
                empirical: pooled_m(&c),
                a_hat: c.a_hat().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(FitReport {
        names: panel.names().to_vec(),
        n,
        q,
        k,
        variogram,
        path,
        selected,
        estimate,
        tree,
        ising,
        weights,
        chi_rows,
        m_rows,
        truth: opts.truth.clone(),
    })
}

pub fn diagnostics_csv(est: &VariogramEstimate) -> String {
    let mut s = String::from("i,j,m,o,n_Jo,S_size,cell_value\n");
    for c in &est.cells {
        let o: String = (0..3).map(|b| if (c.orthant >> b) & 1 == 1 { '+' } else { '-' }).collect();
        let _ = writeln!(s, "{},{},{},{o},{},{},{}", c.i + 1, c.j + 1, c.m + 1, c.n_jo, c.s_size, fmt_g(c.value));
    }
    s
}

pub fn penalty_path_csv(path: &PenaltyPath, truth: Option<&Graph>) -> String {
    let mut s = String::from("rho,n_edges,AIC,BIC,F1\n");
    for p in &path.points {
        let f1 = truth.map_or(String::new(), |t| fmt_g(f1_score(t, &p.graph)));
        let _ = writeln!(s, "{},{},{},{},{f1}", fmt_g(p.rho), p.graph.n_edges(), fmt_g(p.aic), fmt_g(p.bic));
    }
    s
}

pub fn psi_fit_csv(fit: &IsingFit, threshold: f64) -> String {
    let mut s = String::from("i,j,psi_hat,target,fitted_moment,flag\n");
    for (e, &(i, j)) in fit.psi.edges().iter().enumerate() {
        let psi = fit.psi.values()[e];
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            i + 1,
            j + 1,
            fmt_g(psi),
            fmt_g(fit.targets[e]),
            fmt_g(fit.fitted[e]),
            u8::from(psi.abs() > threshold)
        );
    }
    s
}

pub fn trace_csv(fit: &IsingFit) -> String {
    let mut s = String::from("iter,objective,grad_norm\n");
    for t in &fit.trace {
        let _ = writeln!(s, "{},{},{}", t.iter, fmt_g(t.objective), fmt_g(t.grad_norm));
    }
    s
}

fn chi_compare_csv(rows: &[ChiRow]) -> String {
    let mut s = String::from("i,j,edge,chi_empirical,chi_implied,chi_implied_tree\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.i + 1,
            r.j + 1,
            u8::from(r.edge),
            fmt_g(r.empirical),
            fmt_g(r.implied),
            fmt_g(r.implied_tree)
        );
    }
    s
}

fn m_compare_csv(rows: &[MRow]) -> String {
    let mut s = String::from("i,j,edge,m_implied,m_empirical,a_hat,identity_gap\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.i + 1,
            r.j + 1,
            u8::from(r.edge),
            fmt_g(r.implied),
            fmt_g(r.empirical),
            fmt_g(r.a_hat),
            fmt_g(r.identity_gap())
        );
    }
    s
}

/// Files written by [`write_report`].
pub const REPORT_FILES: [&str; 10] = [
    "gamma_hat.csv",
    "gamma_hat_raw.csv",
    "graph.edges",
    "psi_fit.csv",
    "psi_trace.csv",
    "weights.csv",
    "chi_compare.csv",
    "m_compare.csv",
    "penalty_path.csv",
    "diagnostics.csv",
];

/// `gamma_hat.csv` holds the completed variogram on the selected graph and
/// `gamma_hat_raw.csv` the unprojected estimate.
pub fn write_report(report: &FitReport, dir: &Path, flag_threshold: f64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let contents = [
        matrix_to_csv(report.estimate.gamma.matrix()),
        matrix_to_csv(&report.variogram.gamma),
        edges_to_text(&report.estimate.graph),
        psi_fit_csv(&report.ising, flag_threshold),
        trace_csv(&report.ising),
        weights_to_csv(&report.weights),
        chi_compare_csv(&report.chi_rows),
        m_compare_csv(&report.m_rows),
        penalty_path_csv(&report.path, report.truth.as_ref()),
        diagnostics_csv(&report.variogram),
    ];
    let mut written = Vec::with_capacity(REPORT_FILES.len());
    for (name, text) in REPORT_FILES.iter().zip(contents) {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}
