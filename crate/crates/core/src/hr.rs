//! Hüsler–Reiss parametrizations: variogram and precision matrices, the
//! symmetric exponent-measure density on the positive orthant, and the
//! conversion between variogram entries and tail (Lévy) correlation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::linalg::{helmert_basis, is_symmetric, max_abs, sorted_eigen, symmetrize};

/// Relative eigenvalue threshold below which a direction counts as kernel.
pub const KERNEL_REL_TOL: f64 = 1e-10;
/// Positivity floor applied to off-diagonal entries by [`project_cnd`].
pub const GAMMA_FLOOR: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric, zero-diagonal, strictly conditionally negative definite matrix
/// with positive off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct VariogramMatrix(DMatrix<f64>);

/// Positive semidefinite HR precision matrix of rank `d - 1` with the
/// one-vector in its kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix(DMatrix<f64>);

/// `U^T A U` for the Helmert basis `U`, i.e. `A` restricted to `1^⊥`.
fn reduce(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = helmert_basis(a.nrows());
    let r = symmetrize(&(u.transpose() * a * &u));
    (u, r)
}

/// Checks that a reduced symmetric matrix is positive definite up to the
/// relative kernel threshold. Returns the smallest and largest eigenvalue.
fn reduced_spectrum(r: &DMatrix<f64>) -> (f64, f64) {
    if r.nrows() == 0 {
        return (f64::INFINITY, 0.0);
    }
    let (vals, _) = sorted_eigen(r);
    (vals[0], *vals.last().unwrap())
}

impl VariogramMatrix {
    /// Validates `m` against all variogram invariants. A `1 x 1` zero matrix
    /// is accepted as the degenerate univariate case.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if !m.is_square() || d == 0 {
            return Err(Error::InvalidVariogram(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVariogram("non-finite entry".into()));
        }
        if !is_symmetric(&m, SYMMETRY_TOL) {
            return Err(Error::InvalidVariogram("matrix is not symmetric".into()));
        }
        let scale = max_abs(&m).max(1.0);
        for i in 0..d {
            if m[(i, i)].abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidVariogram(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..i {
                if m[(i, j)] <= 0.0 {
                    return Err(Error::InvalidVariogram(format!(
                        "off-diagonal entry ({i},{j}) is not positive"
                    )));
                }
            }
        }
        let mut m = symmetrize(&m);
        m.fill_diagonal(0.0);
        let (_, r) = reduce(&(&m * -0.5));
        let (lo, hi) = reduced_spectrum(&r);
        if d > 1 && !(lo > KERNEL_REL_TOL * hi && hi > 0.0) {
            return Err(Error::InvalidVariogram(format!(
                "not strictly conditionally negative definite (eigenvalue range [{lo:e}, {hi:e}])"
            )));
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Precision matrix `(P (-Γ/2) P)^+`.
    pub fn to_precision(&self) -> PrecisionMatrix {
        let (u, r) = reduce(&(&self.0 * -0.5));
        PrecisionMatrix(pinv_from_reduced(&u, &r))
    }

    /// Covariance `Σ^(k)` with entries `(Γ_ik + Γ_jk - Γ_ij)/2`, `i, j ≠ k`.
    pub fn sigma_k(&self, k: usize) -> DMatrix<f64> {
        sigma_from_gamma(&self.0, k)
    }

    /// Variogram of the marginal on `idx` (HR models are closed under
    /// marginalization).
    pub fn marginal(&self, idx: &[usize]) -> Result<Self> {
        Self::new(crate::linalg::submatrix(&self.0, idx, idx))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.0 * c)
    }
}

/// `(Γ_ik + Γ_jk - Γ_ij)/2` over `i, j ≠ k`, without validation.
pub(crate) fn sigma_from_gamma(g: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = g.nrows();
    let idx: Vec<usize> = (0..d).filter(|&i| i != k).collect();
    DMatrix::from_fn(d - 1, d - 1, |a, b| {
        let (i, j) = (idx[a], idx[b]);
        0.5 * (g[(i, k)] + g[(j, k)] - g[(i, j)])
    })
}

/// Pseudo-inverse `U R^{-1} U^T` for a positive definite reduced matrix `R`.
fn pinv_from_reduced(u: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    if r.nrows() == 0 {
        return DMatrix::zeros(u.nrows(), u.nrows());
    }
    let rinv = Cholesky::new(r.clone())
        .map(|c| c.inverse())
        .unwrap_or_else(|| r.clone().try_inverse().expect("reduced matrix is invertible"));
    symmetrize(&(u * rinv * u.transpose()))
}

impl PrecisionMatrix {
    /// Validates symmetry, `Θ1 = 0` and rank `d - 1` positive semidefiniteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        if !m.is_square() || d == 0 {
            return Err(Error::InvalidPrecision("expected a non-empty square matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPrecision("non-finite entry".into()));
        }
        if !is_symmetric(&m, SYMMETRY_TOL) {
            return Err(Error::InvalidPrecision("matrix is not symmetric".into()));
        }
        let scale = max_abs(&m).max(1.0);
        let row_sum = m.column_sum().abs().max();
        if row_sum > 1e-10 * scale {
            return Err(Error::InvalidPrecision(format!(
                "one-vector is not in the kernel (max |Θ1| = {row_sum:e})"
            )));
        }
        let m = symmetrize(&m);
        let (_, r) = reduce(&m);
        let (lo, hi) = reduced_spectrum(&r);
        if d > 1 && !(hi > 0.0 && lo > KERNEL_REL_TOL * hi) {
            return Err(Error::InvalidPrecision(format!(
                "rank is not d - 1 or matrix is indefinite (eigenvalue range [{lo:e}, {hi:e}])"
            )));
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Variogram `Γ_ij = Σ_ii + Σ_jj - 2Σ_ij` with `Σ = Θ^+`.
    pub fn to_variogram(&self) -> VariogramMatrix {
        let (u, r) = reduce(&self.0);
        let sigma = pinv_from_reduced(&u, &r);
        VariogramMatrix(gamma_from_sigma(&sigma))
    }

    /// Pseudo-determinant: product of the `d - 1` nonzero eigenvalues, on the
    /// log scale.
    pub fn log_pdet(&self) -> f64 {
        let (_, r) = reduce(&self.0);
        if r.nrows() == 0 {
            return 0.0;
        }
        match Cholesky::new(r.clone()) {
            Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }

    /// `r_Θ = -Θ Γ 1 / (2d)`, the linear term of the log-density.
    pub fn r_theta(&self) -> DVector<f64> {
        let d = self.dim();
        let g = self.to_variogram();
        -(&self.0 * g.matrix() * DVector::from_element(d, 1.0)) / (2.0 * d as f64)
    }
}

pub(crate) fn gamma_from_sigma(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            0.0
        } else {
            sigma[(i, i)] + sigma[(j, j)] - 2.0 * sigma[(i, j)]
        }
    })
}

/// Validating free-function form of [`VariogramMatrix::to_precision`].
pub fn theta_from_variogram(gamma: &DMatrix<f64>) -> Result<PrecisionMatrix> {
    Ok(VariogramMatrix::new(gamma.clone())?.to_precision())
}

/// Validating free-function form of [`PrecisionMatrix::to_variogram`].
pub fn variogram_from_theta(theta: &DMatrix<f64>) -> Result<VariogramMatrix> {
    Ok(PrecisionMatrix::new(theta.clone())?.to_variogram())
}

/// Cached `Σ^(k)` factorizations for evaluating the HR exponent density on
/// `(0,∞)^d` through its Gaussian representation around coordinate `k`.
#[derive(Debug, Clone)]
pub struct HrDensity {
    gamma: DMatrix<f64>,
    factors: Vec<Option<Cholesky<f64, Dyn>>>,
    log_norm: Vec<f64>,
}

impl HrDensity {
    pub fn new(gamma: &VariogramMatrix) -> Self {
        let d = gamma.dim();
        let mut factors = Vec::with_capacity(d);
        let mut log_norm = Vec::with_capacity(d);
        for k in 0..d {
            let s = gamma.sigma_k(k);
            let chol = Cholesky::new(s);
            let ln = match &chol {
                Some(c) => {
                    let log_det: f64 = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    -0.5 * ((d - 1) as f64 * (2.0 * std::f64::consts::PI).ln() + log_det)
                }
                None => f64::NAN,
            };
            factors.push(chol);
            log_norm.push(ln);
        }
        Self { gamma: gamma.matrix().clone(), factors, log_norm }
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// `g(x) = φ_{d-1}(x̃; Σ^(k)) x_k^{-2} ∏_{i≠k} x_i^{-1}` with
    /// `x̃_i = log(x_i/x_k) + Γ_ik/2`. `k` is zero-based.
    pub fn eval(&self, x: &[f64], k: usize) -> Result<f64> {
        Ok(self.log_eval(x, k)?.exp())
    }

    pub fn log_eval(&self, x: &[f64], k: usize) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if k >= d {
            return Err(Error::Domain(format!("base index {k} out of range for d = {d}")));
        }
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("density is defined on the open positive orthant".into()));
        }
        let chol = self.factors[k]
            .as_ref()
            .ok_or_else(|| Error::InvalidVariogram(format!("Σ^({k}) is not positive definite")))?;
        let xk = x[k];
        let z = DVector::from_iterator(
            d - 1,
            (0..d).filter(|&i| i != k).map(|i| (x[i] / xk).ln() + 0.5 * self.gamma[(i, k)]),
        );
        let quad = if d > 1 {
            let w = chol.l().solve_lower_triangular(&z).expect("triangular solve");
            w.norm_squared()
        } else {
            0.0
        };
        let log_jac: f64 = -2.0 * xk.ln() - (0..d).filter(|&i| i != k).map(|i| x[i].ln()).sum::<f64>();
        Ok(self.log_norm[k] - 0.5 * quad + log_jac)
    }
}

/// Single-shot evaluation of the HR exponent density (zero-based `k`).
pub fn hr_exponent_density(x: &[f64], gamma: &VariogramMatrix, k: usize) -> Result<f64> {
    HrDensity::new(gamma).eval(x, k)
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function, `p ∈ (0,1)`.
pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Tail correlation implied by a variogram entry, `2 - 2Φ(√Γ/2)`.
pub fn chi_from_gamma(gamma_ij: f64) -> Result<f64> {
    if !(gamma_ij > 0.0) || !gamma_ij.is_finite() {
        return Err(Error::Domain(format!("variogram entry must be positive, got {gamma_ij}")));
    }
    // 2(1 - Φ(s)) = erfc(s / √2)
    Ok(erfc(gamma_ij.sqrt() / (2.0 * std::f64::consts::SQRT_2)))
}

/// Inverse of [`chi_from_gamma`]: `Γ = (2 Φ^{-1}(1 - χ/2))^2`.
pub fn gamma_from_chi(chi: f64) -> Result<f64> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::Domain(format!("tail correlation must lie in (0,1), got {chi}")));
    }
    let mut x = erfc_inv(chi);
    // Newton polish against the more accurate erfc
    for _ in 0..2 {
        let deriv = -2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        x -= (erfc(x) - chi) / deriv;
    }
    let s = std::f64::consts::SQRT_2 * x;
    Ok(4.0 * s * s)
}

/// Projects a symmetric zero-diagonal matrix onto the strictly conditionally
/// negative definite cone by clipping the spectrum of `P(-M/2)P` and flooring
/// off-diagonal entries at [`GAMMA_FLOOR`]. Valid inputs are returned as is.
pub fn project_cnd(m: &DMatrix<f64>) -> VariogramMatrix {
    let d = m.nrows();
    let mut m = symmetrize(m);
    m.fill_diagonal(0.0);
    for v in m.iter_mut() {
        if !v.is_finite() {
            *v = GAMMA_FLOOR;
        }
    }
    if let Ok(valid) = VariogramMatrix::new(m.clone()) {
        return valid;
    }
    if d == 1 {
        return VariogramMatrix(DMatrix::zeros(1, 1));
    }
    let mut current = m;
    for _ in 0..50 {
        let (u, r) = reduce(&(&current * -0.5));
        let (vals, vecs) = sorted_eigen(&r);
        let top = vals.last().copied().unwrap_or(0.0).max(0.0);
        let floor = 1e-8 * top;
        let clipped: Vec<f64> = vals.iter().map(|&l| l.max(floor)).collect();
        let r_clip = &vecs * DMatrix::from_diagonal(&DVector::from_vec(clipped)) * vecs.transpose();
        let sigma = symmetrize(&(&u * r_clip * u.transpose()));
        let mut g = gamma_from_sigma(&sigma);
        for i in 0..d {
            for j in 0..d {
                if i != j && g[(i, j)] < GAMMA_FLOOR {
                    g[(i, j)] = GAMMA_FLOOR;
                }
            }
        }
        if let Ok(valid) = VariogramMatrix::new(g.clone()) {
            return valid;
        }
        current = g;
    }
    // Adding c(11^T - I) shifts the reduced spectrum by c/2.
    let mut shift = GAMMA_FLOOR;
    loop {
        let g = DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { current[(i, j)] + shift });
        if let Ok(valid) = VariogramMatrix::new(g) {
            return valid;
        }
        shift *= 2.0;
    }
}
