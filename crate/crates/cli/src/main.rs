use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ihr::eglearn::{complete_variogram, penalty_path, rho_grid, Criterion, Learner, GRID_LEN, GRID_RATIO};
use ihr::hr::{project_cnd, VariogramMatrix};
use ihr::io::{edges_from_text, edges_to_text, matrix_to_csv, read_matrix, read_spec, weights_to_csv, write_panel, SPEC_KEYS};
use ihr::ising_fit::{cov_targets, fit_psi, FitOptions};
use ihr::levy::simulate_increments;
use ihr::pipeline::{
    diagnostics_csv, fit_data, load_panel, penalty_path_csv, psi_fit_csv, trace_csv, write_report, FitDataOptions,
};
use ihr::rng::stream;
use ihr::study::{run_study, StudyConfig, STUDY_KEYS};
use ihr::variogram::gamma_hat;
use ihr::{Error, Result};

const SIMULATE_ABOUT: &str = "\
Simulate i.i.d. increments of an Ising-Husler-Reiss Levy process on a grid of spacing delta.

Jumps are generated as a compound Poisson process: only jumps whose standardized magnitude \
max_i |x_i| exceeds epsilon are kept. Smaller jumps are dropped and no compensating drift or \
Gaussian correction is added, so the marginal bodies carry an uncompensated drift that grows as \
epsilon shrinks relative to delta. Rank-based estimators (variogram, chi, Ising targets) are \
unaffected by it; only the ratio delta/epsilon matters for them.";

#[derive(Parser)]
#[command(name = "ihr", version, about = "Ising-Husler-Reiss Levy processes: simulation, estimation, graph learning")]
struct Cli {
    /// Base seed for all random streams (overrides seeds in configuration files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(about = "Simulate an increment panel from a TOML specification", long_about = SIMULATE_ABOUT,
              after_help = format!("Specification keys: {SPEC_KEYS}"))]
    Simulate(SimulateArgs),
    /// Orthant-conditioned variogram estimate of a panel.
    EstimateVariogram(EstimateArgs),
    /// Penalty path, information-criterion selection and completion.
    LearnGraph(LearnArgs),
    /// Fit Ising interactions on a given graph.
    FitIsing(FitIsingArgs),
    #[command(about = "Run a simulation study from a TOML configuration",
              after_help = format!("Configuration keys (dotted keys are TOML sections): {STUDY_KEYS}"))]
    RunStudy(StudyArgs),
    /// Full pipeline on a data panel.
    FitData(FitDataArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML process specification
    #[arg(long)]
    spec: PathBuf,
    /// Overrides `n` of the specification.
    #[arg(long)]
    n: Option<usize>,
    /// Overrides `delta` (time step)
    #[arg(long)]
    delta: Option<f64>,
    /// Overrides `epsilon` (jump truncation level)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value = "increments.csv")]
    output: String,
}

#[derive(Args)]
struct PanelArgs {
    /// CSV with a header row and one numeric row per time point.
    #[arg(long)]
    panel: PathBuf,
    /// The file holds process levels; difference consecutive rows.
    #[arg(long)]
    levels: bool,
    /// Tail fraction exponent: q = n^-q_exponent.
    #[arg(long, default_value_t = 0.3)]
    q_exponent: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    panel: PanelArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Ns,
    Glasso,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Args)]
struct SelectionArgs {
    #[arg(long, value_enum, default_value = "ns")]
    learner: LearnerArg,
    #[arg(long, value_enum, default_value = "bic")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = GRID_LEN)]
    grid_len: usize,
    #[arg(long, default_value_t = GRID_RATIO)]
    grid_ratio: f64,
    /// Known edge list (1-based `i j` lines); fills the F1 column of penalty_path.csv.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    /// Variogram matrix CSV (for example gamma_hat_raw.csv); projected before learning.
    #[arg(long)]
    gamma: PathBuf,
    /// Sample size behind the estimate (enters the BIC penalty).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    q_exponent: f64,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Args)]
struct IsingArgs {
    /// L1 penalty on the interactions.
    #[arg(long, default_value_t = FitOptions::default().penalty)]
    penalty: f64,
    #[arg(long, default_value_t = FitOptions::default().step)]
    step: f64,
    #[arg(long, default_value_t = FitOptions::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = FitOptions::default().grad_tol)]
    grad_tol: f64,
    /// Interactions above this magnitude are flagged as likely non-existent solutions.
    #[arg(long, default_value_t = FitOptions::default().flag_threshold)]
    flag_threshold: f64,
}

impl IsingArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            penalty: self.penalty,
            step: self.step,
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            flag_threshold: self.flag_threshold,
            ..FitOptions::default()
        }
    }
}

#[derive(Args)]
struct FitIsingArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Edge list, 1-based `i j` lines.
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    ising: IsingArgs,
}

#[derive(Args)]
struct StudyArgs {
    /// TOML study configuration
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct FitDataArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[command(flatten)]
    selection: SelectionArgs,
    #[command(flatten)]
    ising: IsingArgs,
}

impl SelectionArgs {
    fn learner(&self) -> Learner {
        match self.learner {
            LearnerArg::Ns => Learner::NeighborhoodSelection,
            LearnerArg::Glasso => Learner::GraphicalLasso,
        }
    }

    fn criterion(&self) -> Criterion {
        match self.criterion {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
        }
    }

    fn truth(&self, d: usize) -> Result<Option<ihr::graph::Graph>> {
        self.truth.as_ref().map(|p| edges_from_text(&fs::read_to_string(p)?, d)).transpose()
    }
}

fn write(dir: &Path, name: &str, text: String) -> Result<()> {
    fs::write(dir.join(name), text)?;
    log::info!("wrote {}", dir.join(name).display());
    Ok(())
}

fn q_of(n: usize, exponent: f64) -> Result<f64> {
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::InvalidConfig(format!("q exponent must lie in (0, 1), got {exponent}")));
    }
    Ok((n as f64).powf(-exponent))
}

fn simulate(args: &SimulateArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = read_spec(&args.spec)?;
    let n = args.n.unwrap_or(cfg.n);
    let delta = args.delta.unwrap_or(cfg.delta);
    let eps = args.epsilon.unwrap_or(cfg.epsilon);
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let panel = simulate_increments(&cfg.spec, n, delta, eps, &mut stream(seed, 0))?;
    write_panel(&out.join(&args.output), &panel)
}

fn estimate(args: &EstimateArgs, out: &Path) -> Result<()> {
    let panel = load_panel(&args.panel.panel, args.panel.levels, 1.0)?;
    let est = gamma_hat(&panel, q_of(panel.n(), args.panel.q_exponent)?)?;
    write(out, "gamma_hat_raw.csv", matrix_to_csv(&est.gamma))?;
    write(out, "gamma_hat.csv", matrix_to_csv(project_cnd(&est.gamma).matrix()))?;
    write(out, "diagnostics.csv", diagnostics_csv(&est))
}

fn learn(args: &LearnArgs, out: &Path) -> Result<()> {
    let raw = read_matrix(&args.gamma)?;
    if raw.nrows() != raw.ncols() {
        return Err(Error::Parse { line: 1, msg: format!("variogram must be square, got {}x{}", raw.nrows(), raw.ncols()) });
    }
    let gamma: VariogramMatrix = project_cnd(&raw);
    let sel = &args.selection;
    let q = q_of(args.n, args.q_exponent)?;
    let grid = rho_grid(&gamma, sel.grid_len, sel.grid_ratio);
    let path = penalty_path(&gamma, sel.learner(), &grid, args.n, q)?;
    let truth = sel.truth(gamma.dim())?;
    write(out, "penalty_path.csv", penalty_path_csv(&path, truth.as_ref()))?;
    let idx = path.select(sel.criterion()).ok_or(Error::DisconnectedGraph)?;
    let graph = &path.points[idx].graph;
    let est = complete_variogram(&gamma, graph)?;
    write(out, "graph.edges", edges_to_text(graph))?;
    write(out, "gamma_hat.csv", matrix_to_csv(est.gamma.matrix()))
}

fn fit_ising(args: &FitIsingArgs, seed: u64, out: &Path) -> Result<()> {
    let panel = load_panel(&args.panel.panel, args.panel.levels, 1.0)?;
    let graph = edges_from_text(&fs::read_to_string(&args.graph)?, panel.dim())?;
    let q = q_of(panel.n(), args.panel.q_exponent)?;
    let k = ((panel.n() as f64 * q).floor() as usize).max(1);
    let targets = cov_targets(&panel, &graph, k)?;
    let opts = args.ising.options();
    let fit = fit_psi(&targets, &graph, &opts, &mut stream(seed, 1))?;
    write(out, "psi_fit.csv", psi_fit_csv(&fit, opts.flag_threshold))?;
    write(out, "psi_trace.csv", trace_csv(&fit))?;
    write(out, "weights.csv", weights_to_csv(&fit.weights()?))
}

fn study(args: &StudyArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = StudyConfig::read(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = run_study(&cfg)?;
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} study cells failed; see the status column", result.rows.len());
    }
    write(out, "study_results.csv", result.results_csv())?;
    if cfg.ising.enabled {
        write(out, "study_psi.csv", result.psi_csv())?;
    }
    write(out, "study_timing.csv", result.timing_csv())
}

fn fit_data_cmd(args: &FitDataArgs, seed: u64, out: &Path) -> Result<()> {
    let panel = load_panel(&args.panel.panel, args.panel.levels, 1.0)?;
    let opts = FitDataOptions {
        q_exponent: args.panel.q_exponent,
        learner: args.selection.learner(),
        criterion: args.selection.criterion(),
        grid: None,
        grid_len: args.selection.grid_len,
        grid_ratio: args.selection.grid_ratio,
        fit: args.ising.options(),
        truth: args.selection.truth(panel.dim())?,
    };
    q_of(panel.n(), opts.q_exponent)?;
    let report = fit_data(&panel, &opts, &mut stream(seed, 1))?;
    let (mad_graph, mad_tree) = report.chi_mad();
    log::info!("selected {} edges; mean |chi implied - chi empirical|: graph {mad_graph:.4}, tree {mad_tree:.4}", report.estimate.graph.n_edges());
    write_report(&report, out, opts.fit.flag_threshold)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, out),
        Command::EstimateVariogram(a) => estimate(a, out),
        Command::LearnGraph(a) => learn(a, out),
        Command::FitIsing(a) => fit_ising(a, seed, out),
        Command::RunStudy(a) => study(a, cli.seed, out),
        Command::FitData(a) => fit_data_cmd(a, seed, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
