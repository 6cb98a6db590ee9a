//! Multivariate Gaussian algebra on Cholesky factors.
//!
//! The covariance is `Sigma = L L^T` with `L` lower triangular. Diagonal
//! entries of `L` are stored as raw values mapped through softplus, so
//! gradient steps can never drive them non-positive.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::store::TensorStore;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: `ln(e^y - 1)` for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inv needs a positive argument");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Lower-triangular Cholesky factor with a softplus-parameterized diagonal.
///
/// Raw parameter order (also the flat layout): the `d` raw diagonal entries,
/// then the strictly-lower entries row by row.
#[derive(Debug, Clone)]
pub struct CholFactor {
    dim: usize,
    raw_diag: Vec<f64>,
    below: Vec<f64>,
}

impl CholFactor {
    /// Isotropic factor `L = std * I`.
    pub fn isotropic(dim: usize, std: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("Gaussian dimension must be positive".into()));
        }
        if !(std > 0.0) {
            return Err(Error::InvalidConfig("initial std must be positive".into()));
        }
        Ok(Self {
            dim,
            raw_diag: vec![softplus_inv(std); dim],
            below: vec![0.0; dim * (dim - 1) / 2],
        })
    }

    /// Rebuilds raw parameters from an explicit lower-triangular matrix.
    /// The diagonal must be strictly positive.
    pub fn from_matrix(l: &Array2<f64>) -> Result<Self> {
        let dim = l.nrows();
        if l.ncols() != dim {
            return Err(Error::ShapeMismatch("Cholesky factor must be square".into()));
        }
        let mut raw_diag = Vec::with_capacity(dim);
        let mut below = Vec::with_capacity(dim * (dim - 1) / 2);
        for i in 0..dim {
            if !(l[(i, i)] > 0.0) {
                return Err(Error::InvalidConfig("Cholesky diagonal must be strictly positive".into()));
            }
            raw_diag.push(softplus_inv(l[(i, i)]));
            for j in 0..i {
                below.push(l[(i, j)]);
            }
        }
        Ok(Self { dim, raw_diag, below })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Materializes the lower-triangular matrix `L`.
    pub fn matrix(&self) -> Array2<f64> {
        let mut l = Array2::zeros((self.dim, self.dim));
        let mut k = 0;
        for i in 0..self.dim {
            for j in 0..i {
                l[(i, j)] = self.below[k];
                k += 1;
            }
            l[(i, i)] = softplus(self.raw_diag[i]);
        }
        l
    }

    pub fn sum_log_diag(&self) -> f64 {
        self.raw_diag.iter().map(|&r| softplus(r).ln()).sum()
    }

    /// Maps a gradient w.r.t. the matrix `L` (lower triangle used) onto the
    /// raw parameters, chaining the softplus on the diagonal.
    pub fn matrix_grad_to_raw(&self, dl: &Array2<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_params());
        for i in 0..self.dim {
            out[i] += dl[(i, i)] * sigmoid(self.raw_diag[i]);
        }
        let mut k = self.dim;
        for i in 0..self.dim {
            for j in 0..i {
                out[k] += dl[(i, j)];
                k += 1;
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.dim + self.below.len()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend(&self.raw_diag);
        out.extend(&self.below);
    }

    pub fn read_flat(&mut self, data: &[f64]) -> Result<usize> {
        let n = self.n_params();
        if data.len() < n {
            return Err(Error::ShapeMismatch("flat vector too short for Cholesky factor".into()));
        }
        self.raw_diag.copy_from_slice(&data[..self.dim]);
        self.below.copy_from_slice(&data[self.dim..n]);
        Ok(n)
    }

    pub fn save_into(&self, store: &mut TensorStore, prefix: &str) {
        let mut flat = Vec::with_capacity(self.n_params());
        self.write_flat(&mut flat);
        store.insert_meta(format!("{prefix}.dim"), self.dim.to_string());
        store.insert_vec(format!("{prefix}.raw"), &flat);
    }

    pub fn load_from(store: &TensorStore, prefix: &str) -> Result<Self> {
        let dim: usize = store
            .meta(&format!("{prefix}.dim"))?
            .parse()
            .map_err(|_| Error::Parse("bad Cholesky dim header".into()))?;
        let flat = store.get_vec(&format!("{prefix}.raw"))?;
        let mut chol = Self::isotropic(dim, 1.0)?;
        if flat.len() != chol.n_params() {
            return Err(Error::Checkpoint("Cholesky parameter count mismatch".into()));
        }
        chol.read_flat(&flat)?;
        Ok(chol)
    }
}

/// KL divergence split into its mean and covariance contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlParts {
    pub mean_part: f64,
    pub cov_part: f64,
    pub total: f64,
}

/// A Gaussian `N(mean, L L^T)`.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    pub mean: Array1<f64>,
    pub chol: CholFactor,
}

impl GaussianParams {
    pub fn new(mean: Array1<f64>, chol: CholFactor) -> Result<Self> {
        if mean.len() != chol.dim() {
            return Err(Error::ShapeMismatch(format!(
                "mean dim {} does not match Cholesky dim {}",
                mean.len(),
                chol.dim()
            )));
        }
        Ok(Self { mean, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, x: ArrayView1<f64>) -> Result<f64> {
        let l = self.chol.matrix();
        log_prob_impl(&self.mean.view(), &l, self.chol.sum_log_diag(), &x)
    }

    /// Log-density together with its gradients w.r.t. the mean and the
    /// matrix `L` (lower triangle only).
    pub fn log_prob_with_grads(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>, Array2<f64>)> {
        let l = self.chol.matrix();
        log_prob_grads_impl(&self.mean.view(), &l, self.chol.sum_log_diag(), &x)
    }

    /// `H = d/2 (1 + ln 2 pi) + sum_i ln L_ii`.
    pub fn entropy(&self) -> f64 {
        entropy_impl(self.dim(), self.chol.sum_log_diag())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let l = self.chol.matrix();
        sample_impl(&self.mean.view(), &l, rng)
    }

    /// `KL(self || old)` split into mean and covariance parts.
    pub fn kl(&self, old: &GaussianParams) -> Result<KlParts> {
        if self.dim() != old.dim() {
            return Err(Error::ShapeMismatch("KL between Gaussians of different dimension".into()));
        }
        let l_new = self.chol.matrix();
        let l_old = old.chol.matrix();
        Ok(kl_parts(
            &self.mean.view(),
            &l_new,
            self.chol.sum_log_diag(),
            &old.mean.view(),
            &l_old,
            old.chol.sum_log_diag(),
        ))
    }
}

/// Solves `L z = v` by forward substitution.
pub fn solve_lower(l: &Array2<f64>, v: &ArrayView1<f64>) -> Array1<f64> {
    let d = v.len();
    let mut z = Array1::zeros(d);
    for i in 0..d {
        let mut s = v[i];
        for j in 0..i {
            s -= l[(i, j)] * z[j];
        }
        z[i] = s / l[(i, i)];
    }
    z
}

/// Solves `L^T w = z` by back substitution.
pub fn solve_lower_transpose(l: &Array2<f64>, z: &ArrayView1<f64>) -> Array1<f64> {
    let d = z.len();
    let mut w = Array1::zeros(d);
    for i in (0..d).rev() {
        let mut s = z[i];
        for j in (i + 1)..d {
            s -= l[(j, i)] * w[j];
        }
        w[i] = s / l[(i, i)];
    }
    w
}

pub(crate) fn entropy_impl(dim: usize, sum_log_diag: f64) -> f64 {
    0.5 * dim as f64 * (1.0 + LN_2PI) + sum_log_diag
}

/// Entropy of a Gaussian with the given Cholesky factor.
pub fn gaussian_entropy_of(chol: &CholFactor) -> f64 {
    entropy_impl(chol.dim(), chol.sum_log_diag())
}

pub(crate) fn log_prob_impl(
    mean: &ArrayView1<f64>,
    l: &Array2<f64>,
    sum_log_diag: f64,
    x: &ArrayView1<f64>,
) -> Result<f64> {
    check_finite_log_prob_inputs(mean, x, l.nrows())?;
    let v = x - mean;
    let z = solve_lower(l, &v.view());
    let quad: f64 = z.iter().map(|zi| zi * zi).sum();
    Ok(-0.5 * (x.len() as f64) * LN_2PI - sum_log_diag - 0.5 * quad)
}

pub(crate) fn log_prob_grads_impl(
    mean: &ArrayView1<f64>,
    l: &Array2<f64>,
    sum_log_diag: f64,
    x: &ArrayView1<f64>,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    check_finite_log_prob_inputs(mean, x, l.nrows())?;
    let d = x.len();
    let v = x - mean;
    let z = solve_lower(l, &v.view());
    let quad: f64 = z.iter().map(|zi| zi * zi).sum();
    let logp = -0.5 * (d as f64) * LN_2PI - sum_log_diag - 0.5 * quad;

    // d logp / d mean = L^{-T} z.
    let w = solve_lower_transpose(l, &z.view());

    // d logp / d L = w z^T (lower triangle) - diag(1 / L_ii).
    let mut dl = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            dl[(i, j)] = w[i] * z[j];
        }
        dl[(i, i)] -= 1.0 / l[(i, i)];
    }
    Ok((logp, w, dl))
}

pub(crate) fn sample_impl<R: Rng + ?Sized>(
    mean: &ArrayView1<f64>,
    l: &Array2<f64>,
    rng: &mut R,
) -> Array1<f64> {
    let d = mean.len();
    let z: Array1<f64> = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut out = mean.to_owned();
    for i in 0..d {
        for j in 0..=i {
            out[i] += l[(i, j)] * z[j];
        }
    }
    out
}

/// KL between `N(mu_n, L_n L_n^T)` and `N(mu_o, L_o L_o^T)`:
/// `mean_part = 1/2 ||L_o^{-1} (mu_n - mu_o)||^2`,
/// `cov_part  = 1/2 (||L_o^{-1} L_n||_F^2 - d + 2 sum ln L_o,ii - 2 sum ln L_n,ii)`.
pub fn kl_parts(
    mean_new: &ArrayView1<f64>,
    l_new: &Array2<f64>,
    sum_log_diag_new: f64,
    mean_old: &ArrayView1<f64>,
    l_old: &Array2<f64>,
    sum_log_diag_old: f64,
) -> KlParts {
    let d = mean_new.len();
    let diff = mean_new - mean_old;
    let z = solve_lower(l_old, &diff.view());
    let mean_part = 0.5 * z.iter().map(|zi| zi * zi).sum::<f64>();

    // tr(Sigma_o^{-1} Sigma_n) = ||L_o^{-1} L_n||_F^2, column by column.
    let mut trace = 0.0;
    for j in 0..d {
        let col = l_new.column(j).to_owned();
        let y = solve_lower(l_old, &col.view());
        trace += y.iter().map(|yi| yi * yi).sum::<f64>();
    }
    let cov_part = 0.5 * (trace - d as f64 + 2.0 * sum_log_diag_old - 2.0 * sum_log_diag_new);
    KlParts { mean_part, cov_part, total: mean_part + cov_part }
}

fn check_finite_log_prob_inputs(mean: &ArrayView1<f64>, x: &ArrayView1<f64>, dim: usize) -> Result<()> {
    if x.len() != dim || mean.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "Gaussian of dim {dim} evaluated at point of dim {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gaussian log_prob input".into()));
    }
    Ok(())
}
