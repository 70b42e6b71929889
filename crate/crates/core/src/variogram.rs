//! Orthant-conditioned empirical variogram and empirical Lévy correlation
//! components from an increment panel. Everything here is rank based.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy::IncrementPanel;

/// `q_n = n^{-3/10}`.
pub fn default_q(n: usize) -> f64 {
    (n as f64).powf(-0.3)
}

/// `k = ⌊n^{0.7}⌋`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(0.7).floor() as usize).max(1)
}

/// Right-continuous ECDF of `values` at `x`.
pub fn orthant_ecdf(values: &[f64], x: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySubsample);
    }
    Ok(values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64)
}

/// `#{t: v_t ≤ v_s}` for every `s`.
fn ecdf_counts(values: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values.iter().map(|v| sorted.partition_point(|s| s <= v)).collect()
}

fn has_ties(values: &[f64]) -> bool {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// One `(i, j, m, o)` cell of the estimator. `orthant` packs the signs of
/// `(D_i, D_j, D_m)` as bits 0, 1, 2 (set for `+1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub i: usize,
    pub j: usize,
    pub m: usize,
    pub orthant: u8,
    /// `n^{J,o}`, rows in the orthant with no zero entry.
    pub n_jo: usize,
    /// `|S^{J,o}_m|`.
    pub s_size: usize,
    /// Scaled empirical variance, zero when `s_size < 2`.
    pub value: f64,
}

impl CellEstimate {
    /// `n^{J,o}/n` if the cell produced an estimate, else zero.
    pub fn weight(&self, n: usize) -> f64 {
        if self.s_size < 2 {
            0.0
        } else {
            self.n_jo as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariogramEstimate {
    pub gamma: DMatrix<f64>,
    pub cells: Vec<CellEstimate>,
    pub n: usize,
    pub q: f64,
}

fn sign_bit(v: f64) -> Option<u8> {
    if v > 0.0 {
        Some(1)
    } else if v < 0.0 {
        Some(0)
    } else {
        None
    }
}

/// Sample variance with denominator `|S| + 1`.
fn scaled_variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() + 1) as f64
}

/// Estimates for all eight orthants of `J = (i, j, m)`.
///
/// Within an orthant subsample the ECDFs are those of `o_ℓ D_ℓ = |D_ℓ|`, so
/// that large values mean extreme in the orthant's direction. The
/// conditioning set keeps rows with `F̂_m > 1 - q`, which are the
/// `⌊q n^{J,o}⌋` largest `|D_m|`.
pub fn gamma_hat_cells(panel: &IncrementPanel, i: usize, j: usize, m: usize, q: f64) -> [CellEstimate; 8] {
    let (ci, cj, cm) = (panel.column(i), panel.column(j), panel.column(m));
    let mut groups: [Vec<usize>; 8] = Default::default();
    for s in 0..panel.n() {
        if let (Some(a), Some(b), Some(c)) = (sign_bit(ci[s]), sign_bit(cj[s]), sign_bit(cm[s])) {
            groups[(a | (b << 1) | (c << 2)) as usize].push(s);
        }
    }
    std::array::from_fn(|o| {
        let rows = &groups[o];
        let n_jo = rows.len();
        let mut cell = CellEstimate { i, j, m, orthant: o as u8, n_jo, s_size: 0, value: 0.0 };
        if n_jo == 0 {
            return cell;
        }
        let abs = |c: &[f64]| rows.iter().map(|&s| c[s].abs()).collect::<Vec<f64>>();
        let fi = ecdf_counts(&abs(ci));
        let fj = ecdf_counts(&abs(cj));
        let fm = ecdf_counts(&abs(cm));
        let keep = n_jo - (q * n_jo as f64).floor() as usize;
        let top = (n_jo + 1) as f64;
        let sample: Vec<f64> = (0..n_jo)
            .filter(|&r| fm[r] > keep)
            .map(|r| (top - fi[r] as f64).ln() - (top - fj[r] as f64).ln())
            .collect();
        cell.s_size = sample.len();
        if sample.len() >= 2 {
            cell.value = scaled_variance(&sample);
        }
        cell
    })
}

/// Single cell `(i, j, m, o)` with `o` the sign triple of `(D_i, D_j, D_m)`.
pub fn gamma_hat_cell(
    panel: &IncrementPanel,
    i: usize,
    j: usize,
    m: usize,
    o: [i8; 3],
    q: f64,
) -> CellEstimate {
    let bit = |s: i8| u8::from(s > 0);
    let idx = bit(o[0]) | (bit(o[1]) << 1) | (bit(o[2]) << 2);
    gamma_hat_cells(panel, i, j, m, q)[idx as usize]
}

/// `Γ̂_ij = (1/d) Σ_m Σ_o (n^{J,o}/n) Γ̂^{(m,o)}_ij`. Cells without an
/// estimate contribute zero. The result is not projected.
pub fn gamma_hat(panel: &IncrementPanel, q: f64) -> Result<VariogramEstimate> {
    let (n, d) = (panel.n(), panel.dim());
    if n < 10 {
        return Err(Error::InsufficientData(format!("need at least 10 rows, got {n}")));
    }
    if d < 2 {
        return Err(Error::InsufficientData("need at least two columns".into()));
    }
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::InvalidConfig(format!("threshold fraction q = {q} outside (0, 1/2]")));
    }
    for (c, name) in panel.names().iter().enumerate() {
        if has_ties(panel.column(c)) {
            log::warn!("column {name} has tied values; ECDFs use plain right-continuous counts");
        }
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let per_pair: Vec<Vec<CellEstimate>> = pairs
        .par_iter()
        .map(|&(i, j)| (0..d).flat_map(|m| gamma_hat_cells(panel, i, j, m, q)).collect())
        .collect();
    let mut gamma = DMatrix::zeros(d, d);
    let mut cells = Vec::with_capacity(pairs.len() * d * 8);
    for (&(i, j), pc) in pairs.iter().zip(per_pair) {
        let v: f64 = pc.iter().map(|c| c.weight(n) * c.value).sum::<f64>() / d as f64;
        gamma[(i, j)] = v;
        gamma[(j, i)] = v;
        cells.extend(pc);
    }
    Ok(VariogramEstimate { gamma, cells, n, q })
}

/// Full-panel ECDF counts for every column, reused by the χ̂ estimators.
#[derive(Debug, Clone)]
pub struct PanelRanks {
    n: usize,
    counts: Vec<Vec<usize>>,
}

impl PanelRanks {
    pub fn new(panel: &IncrementPanel) -> Self {
        let counts = (0..panel.dim()).map(|c| ecdf_counts(panel.column(c))).collect();
        Self { n: panel.n(), counts }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// `o F̂(D_t) - 1{o = 1} + k/(2n) > 0`, in exact integer arithmetic.
    #[inline]
    fn extreme(&self, col: usize, t: usize, o: i8, k: usize) -> bool {
        let c = self.counts[col][t];
        if o > 0 {
            2 * c + k > 2 * self.n
        } else {
            2 * c < k
        }
    }
}

/// The four sign components `χ̂^{(o1,o2)}_ij` of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiComponents {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl ChiComponents {
    /// Pooled `χ̂_ij`, the sum of the four components.
    pub fn pooled(&self) -> f64 {
        self.pp + self.mm + self.pm + self.mp
    }

    /// `â = (χ̂^{++} + χ̂^{--} - χ̂^{+-} - χ̂^{-+}) / χ̂`.
    pub fn a_hat(&self) -> Option<f64> {
        let p = self.pooled();
        (p > 0.0).then(|| (self.pp + self.mm - self.pm - self.mp) / p)
    }

    /// `m̂ = (χ̂^{++} + χ̂^{--}) / χ̂`, computed as `(1 + â)/2`.
    pub fn m_hat(&self) -> Option<f64> {
        self.a_hat().map(|a| 0.5 * (1.0 + a))
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::InvalidK { k, n })
    } else {
        Ok(())
    }
}

pub fn chi_components(ranks: &PanelRanks, i: usize, j: usize, k: usize) -> Result<ChiComponents> {
    check_k(k, ranks.n)?;
    let mut counts = [0usize; 4];
    for t in 0..ranks.n {
        for (slot, (o1, o2)) in [(1, 1), (1, -1), (-1, 1), (-1, -1)].into_iter().enumerate() {
            if ranks.extreme(i, t, o1, k) && ranks.extreme(j, t, o2, k) {
                counts[slot] += 1;
            }
        }
    }
    let kf = k as f64;
    Ok(ChiComponents {
        pp: counts[0] as f64 / kf,
        pm: counts[1] as f64 / kf,
        mp: counts[2] as f64 / kf,
        mm: counts[3] as f64 / kf,
    })
}

/// `χ̂^{(o1,o2)}_ij` with `o1, o2 ∈ {-1, +1}`.
pub fn chi_hat(panel: &IncrementPanel, i: usize, j: usize, o1: i8, o2: i8, k: usize) -> Result<f64> {
    let c = chi_components(&PanelRanks::new(panel), i, j, k)?;
    Ok(match (o1 > 0, o2 > 0) {
        (true, true) => c.pp,
        (true, false) => c.pm,
        (false, true) => c.mp,
        (false, false) => c.mm,
    })
}

/// Pooled `χ̂` for every pair, unit diagonal.
pub fn chi_hat_matrix(panel: &IncrementPanel, k: usize) -> Result<DMatrix<f64>> {
    let ranks = PanelRanks::new(panel);
    let d = panel.dim();
    let mut chi = DMatrix::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let v = chi_components(&ranks, i, j, k)?.pooled();
            chi[(i, j)] = v;
            chi[(j, i)] = v;
        }
    }
    Ok(chi)
}
