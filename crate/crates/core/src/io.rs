//! Plain-text formats: matrices as header-less CSV, graphs as 1-based edge
//! lists, increment panels as CSV with a header row, and the TOML process
//! specification.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hr::VariogramMatrix;
use crate::ising::{IsingModel, OrthantWeights};
use crate::levy::{IncrementPanel, ProcessSpec, DEFAULT_EPSILON};

/// C-style `%.12g`.
pub fn fmt_g(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, msg: format!("not a number: {:?}", tok.trim()) })
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_g(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|t| parse_f64(t, idx + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse { line: idx + 1, msg: format!("expected {} fields, got {}", first.len(), row.len()) });
            }
        }
        rows.push(row);
    }
    let (r, c) = (rows.len(), rows.first().map_or(0, |x| x.len()));
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

/// One `i j` line per edge, 1-based, `i < j`.
pub fn edges_to_text(g: &Graph) -> String {
    g.edges().fold(String::new(), |mut s, (i, j)| {
        let _ = writeln!(s, "{} {}", i + 1, j + 1);
        s
    })
}

fn parse_index(tok: &str, line: usize) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(Error::Parse { line, msg: format!("invalid 1-based index {tok:?}") }),
    }
}

pub fn edges_from_text(text: &str, d: usize) -> Result<Graph> {
    let mut g = Graph::empty(d);
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 2 {
            return Err(Error::Parse { line: idx + 1, msg: "expected `i j`".into() });
        }
        let (i, j) = (parse_index(toks[0], idx + 1)?, parse_index(toks[1], idx + 1)?);
        g.add_edge(i, j).map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
    }
    Ok(g)
}

/// One `i j psi` line per edge, 1-based.
pub fn psi_to_text(psi: &IsingModel) -> String {
    psi.edges().iter().zip(psi.values()).fold(String::new(), |mut s, (&(i, j), &v)| {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, fmt_g(v));
        s
    })
}

pub fn psi_from_text(text: &str, d: usize) -> Result<IsingModel> {
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::Parse { line: idx + 1, msg: "expected `i j psi`".into() });
        }
        let (i, j) = (parse_index(toks[0], idx + 1)?, parse_index(toks[1], idx + 1)?);
        if i >= d || j >= d || i == j {
            return Err(Error::Parse { line: idx + 1, msg: format!("edge ({}, {}) invalid for d = {d}", i + 1, j + 1) });
        }
        triples.push((i, j, parse_f64(toks[2], idx + 1)?));
    }
    IsingModel::from_triples(d, &triples)
}

pub fn panel_to_csv(panel: &IncrementPanel) -> String {
    let mut out = panel.names().join(",");
    out.push('\n');
    let data = panel.data();
    for s in 0..panel.n() {
        let row: Vec<String> = (0..panel.dim()).map(|c| fmt_g(data[(s, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Header row of names, then numeric rows. Line numbers in errors are
/// 1-based file lines.
pub fn panel_from_csv(text: &str, delta: f64) -> Result<IncrementPanel> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let d = names.len();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != d {
            return Err(Error::Parse { line: idx + 1, msg: format!("expected {d} fields, got {}", toks.len()) });
        }
        let row = toks.iter().map(|t| parse_f64(t, idx + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse { line: idx + 1, msg: format!("non-finite value {v}") });
        }
        rows.push(row);
    }
    let n = rows.len();
    IncrementPanel::new(names, DMatrix::from_fn(n, d, |s, c| rows[s][c]), delta)
}

pub fn write_panel(path: &Path, panel: &IncrementPanel) -> Result<()> {
    fs::write(path, panel_to_csv(panel))?;
    Ok(())
}

pub fn read_panel(path: &Path, delta: f64) -> Result<IncrementPanel> {
    panel_from_csv(&fs::read_to_string(path)?, delta)
}

/// `orthant,gamma` rows; the orthant is a string of `1` (+) and `0` (-)
/// for components `1..d`.
pub fn weights_to_csv(w: &OrthantWeights) -> String {
    let mut out = String::from("orthant,gamma\n");
    for (s, &g) in w.as_slice().iter().enumerate() {
        let bits: String = (0..w.dim()).map(|i| if (s >> i) & 1 == 1 { '1' } else { '0' }).collect();
        let _ = writeln!(out, "{bits},{}", fmt_g(g));
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, d: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; d]),
            ScalarOrVec::Vec(v) if v.len() == d => Ok(v.clone()),
            ScalarOrVec::Vec(v) => Err(Error::InvalidConfig(format!("{name} has length {}, expected {d}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    d: usize,
    gamma: PathBuf,
    psi: Option<PathBuf>,
    alpha: Option<ScalarOrVec>,
    c_plus: Option<ScalarOrVec>,
    c_minus: Option<ScalarOrVec>,
    tau: Option<ScalarOrVec>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    n: Option<usize>,
    seed: Option<u64>,
}

/// Process specification plus simulation settings read from TOML.
#[derive(Debug, Clone)]
pub struct SpecConfig {
    pub spec: ProcessSpec,
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    pub seed: Option<u64>,
}

/// Keys accepted in a specification file.
pub const SPEC_KEYS: &str = "d (integer), gamma (path to d x d variogram CSV), psi (optional path to \
`i j psi` edge list, 1-based; absent means symmetric weights), alpha, c_plus, c_minus, tau (number or \
list of d numbers; defaults 1.5, 1, 1, 0), epsilon (default 1e-3), delta (default 0.01), n (default 1000), seed";

/// Parses a specification; relative paths resolve against `base_dir`.
pub fn spec_from_toml(text: &str, base_dir: &Path) -> Result<SpecConfig> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let d = raw.d;
    if d == 0 {
        return Err(Error::InvalidConfig("d must be positive".into()));
    }
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    let gm = read_matrix(&resolve(&raw.gamma))?;
    if gm.nrows() != d || gm.ncols() != d {
        return Err(Error::InvalidConfig(format!("gamma is {}x{}, expected {d}x{d}", gm.nrows(), gm.ncols())));
    }
    let gamma = VariogramMatrix::new(gm).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let psi = match &raw.psi {
        Some(p) => psi_from_text(&fs::read_to_string(resolve(p))?, d)?,
        None => IsingModel::zero(Graph::empty(d)),
    };
    let get = |v: &Option<ScalarOrVec>, default: f64, name: &str| match v {
        Some(v) => v.expand(d, name),
        None => Ok(vec![default; d]),
    };
    let spec = ProcessSpec::new(
        gamma,
        psi,
        get(&raw.alpha, 1.5, "alpha")?,
        get(&raw.c_plus, 1.0, "c_plus")?,
        get(&raw.c_minus, 1.0, "c_minus")?,
        get(&raw.tau, 0.0, "tau")?,
    )?;
    Ok(SpecConfig {
        spec,
        epsilon: raw.epsilon.unwrap_or(DEFAULT_EPSILON),
        delta: raw.delta.unwrap_or(0.01),
        n: raw.n.unwrap_or(1000),
        seed: raw.seed,
    })
}

pub fn read_spec(path: &Path) -> Result<SpecConfig> {
    let text = fs::read_to_string(path)?;
    spec_from_toml(&text, path.parent().unwrap_or(Path::new(".")))
}
