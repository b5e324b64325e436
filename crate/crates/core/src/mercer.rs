//! Nyström eigendecomposition of a kernel on `[0, T]` and the reproducing
//! kernel Hilbert space built on it.
//!
//! The integral operator `(T_K u)(t) = ∫ K(t,s) u(s) ds` is discretized with
//! trapezoidal weights `w` and symmetrized as `W^{1/2} K W^{1/2}`, which is
//! Hermitian whenever `K` is sesquilinear. Eigenvectors `v_n` of that matrix map
//! back to L²-normalized eigenfunctions `phi_n(t_i) = v_n(i) / sqrt(w_i)`.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::{CorrelationKernel, DiscreteBathSpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;

pub const DEFAULT_TRUNC_TOL: f64 = 1e-10;
/// Eigenvalues below `-NEGATIVE_TOL * lambda_1` mean the kernel is not PSD.
pub const NEGATIVE_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MercerBasis {
    grid: TimeGrid,
    eigenvalues: Vec<f64>,
    /// Row `n` holds `phi_n(t_i)` across the grid.
    eigenfunctions: Array2<Complex64>,
    /// Sum of the eigenvalues that were discarded by truncation.
    discarded: f64,
}

/// An element `u(t) = sum_n u_n phi_n(t)` of the RKHS, stored by its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsElement {
    pub coefficients: Vec<Complex64>,
}

impl RkhsElement {
    pub fn zeros(rank: usize) -> Self {
        Self {
            coefficients: vec![Complex64::new(0.0, 0.0); rank],
        }
    }

    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval(&self, basis: &MercerBasis, t: f64) -> Result<Complex64> {
        check_rank(self, basis)?;
        let phi = basis.eigenfunctions_at(t)?;
        Ok(self.coefficients.iter().zip(&phi).map(|(u, p)| u * p).sum())
    }
}

/// Kernel matrix `K(t_i, t_j)` on the grid. Stationary kernels are tabulated by lag.
pub fn kernel_matrix(kernel: &impl CorrelationKernel, grid: &TimeGrid) -> Result<Array2<Complex64>> {
    let n = grid.n_points();
    let pts = grid.points();
    if kernel.is_stationary() {
        let dt = grid.dt();
        // lag index m = i - j + (n - 1)
        let lags: Vec<Complex64> = (0..2 * n - 1)
            .map(|m| kernel.eval((m as f64 - (n - 1) as f64) * dt, 0.0))
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| lags[i + n - 1 - j]))
    } else {
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| kernel.eval(pts[i], pts[j])).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
    }
}

pub fn mercer_decompose(kernel: &impl CorrelationKernel, grid: &TimeGrid, trunc_tol: f64) -> Result<MercerBasis> {
    if !(trunc_tol > 0.0 && trunc_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "trunc_tol must lie in (0,1), got {trunc_tol}"
        )));
    }
    let k = kernel_matrix(kernel, grid)?;
    decompose_matrix(&k, grid, trunc_tol)
}

/// Mercer basis on the running horizon `[0, t]`.
pub fn causal_basis(kernel: &impl CorrelationKernel, t: f64, n_points: usize, trunc_tol: f64) -> Result<MercerBasis> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "running horizon must be positive, got {t}"
        )));
    }
    mercer_decompose(kernel, &TimeGrid::new(t, n_points)?, trunc_tol)
}

fn decompose_matrix(k: &Array2<Complex64>, grid: &TimeGrid, trunc_tol: f64) -> Result<MercerBasis> {
    let n = grid.n_points();
    let scale = k.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::KernelZero);
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            asym = asym.max((k[(i, j)] - k[(j, i)].conj()).norm());
        }
    }
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(asym / scale));
    }

    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let real = k.iter().all(|z| z.im == 0.0);
    let (values, vectors) = if real {
        let m = Array2::from_shape_fn((n, n), |(i, j)| sqrt_w[i] * k[(i, j)].re * sqrt_w[j]);
        let (w, v) = linalg::eigh_real(&m)?;
        (w, v.mapv(|x| Complex64::new(x, 0.0)))
    } else {
        let m = Array2::from_shape_fn((n, n), |(i, j)| sqrt_w[i] * k[(i, j)] * sqrt_w[j]);
        let eig = linalg::eigh_complex(&m)?;
        (eig.values, eig.vectors)
    };

    let largest = values[n - 1];
    if !(largest > 0.0) {
        return Err(Error::KernelZero);
    }
    if values[0] < -NEGATIVE_TOL * largest {
        return Err(Error::NotPositiveSemidefinite {
            eigenvalue: values[0],
            largest,
        });
    }
    let cutoff = trunc_tol * largest;
    let kept: Vec<usize> = (0..n).rev().filter(|&idx| values[idx] >= cutoff).collect();
    let discarded = (0..n)
        .filter(|&idx| values[idx] < cutoff)
        .map(|idx| values[idx].max(0.0))
        .sum();

    let mut eigenfunctions = Array2::zeros((kept.len(), n));
    for (row, &idx) in kept.iter().enumerate() {
        let col = vectors.column(idx);
        let (pivot, _) = col.iter().enumerate().fold(
            (0, -1.0),
            |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best },
        );
        let phase = col[pivot].conj() / col[pivot].norm();
        for i in 0..n {
            eigenfunctions[(row, i)] = col[i] * phase / sqrt_w[i];
        }
    }
    Ok(MercerBasis {
        grid: *grid,
        eigenvalues: kept.iter().map(|&idx| values[idx]).collect(),
        eigenfunctions,
        discarded,
    })
}

impl MercerBasis {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Descending eigenvalues `lambda_n`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &Array2<Complex64> {
        &self.eigenfunctions
    }

    /// Sum of the truncated tail eigenvalues.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    /// `phi_n(t)` for every `n`; linear interpolation between grid nodes.
    pub fn eigenfunctions_at(&self, t: f64) -> Result<Vec<Complex64>> {
        let (i, frac) = self.grid.bracket(t)?;
        Ok((0..self.rank())
            .map(|n| {
                let a = self.eigenfunctions[(n, i)];
                let b = self.eigenfunctions[(n, i + 1)];
                a + (b - a) * frac
            })
            .collect())
    }

    /// Truncated Mercer sum `sum_n lambda_n phi_n(t) phi_n(s)^*`.
    pub fn reconstruct(&self, t: f64, s: f64) -> Result<Complex64> {
        let pt = self.eigenfunctions_at(t)?;
        let ps = self.eigenfunctions_at(s)?;
        Ok((0..self.rank())
            .map(|n| self.eigenvalues[n] * pt[n] * ps[n].conj())
            .sum())
    }

    /// Causal reconstruction on a running-horizon basis:
    /// `K(t,s) theta(t - s) = sum_n lambda_n(t) phi_n(t;t) phi_n(s;t)^*`, with `t` the horizon.
    pub fn causal_reconstruct(&self, s: f64) -> Result<Complex64> {
        self.reconstruct(self.grid.horizon(), s)
    }

    /// `sum_n phi_n(t_i) phi_n(t_j)^*`; at full rank this is `delta_ij / w_i`.
    pub fn delta_surrogate(&self, i: usize, j: usize) -> Complex64 {
        (0..self.rank())
            .map(|n| self.eigenfunctions[(n, i)] * self.eigenfunctions[(n, j)].conj())
            .sum()
    }

    /// Discrete L² Gram matrix `sum_i w_i phi_n(t_i)^* phi_m(t_i)`.
    pub fn l2_gram(&self) -> Array2<Complex64> {
        let w = self.grid.weights();
        let r = self.rank();
        Array2::from_shape_fn((r, r), |(n, m)| {
            (0..self.grid.n_points())
                .map(|i| w[i] * self.eigenfunctions[(n, i)].conj() * self.eigenfunctions[(m, i)])
                .sum()
        })
    }

    /// Coefficients of `u` sampled on the grid: `u_n = sum_i w_i phi_n(t_i)^* u(t_i)`.
    pub fn project(&self, samples: &[Complex64]) -> Result<RkhsElement> {
        if samples.len() != self.grid.n_points() {
            return Err(Error::LengthMismatch {
                expected: self.grid.n_points(),
                found: samples.len(),
            });
        }
        let w = self.grid.weights();
        let coefficients = (0..self.rank())
            .map(|n| {
                samples
                    .iter()
                    .enumerate()
                    .map(|(i, u)| w[i] * self.eigenfunctions[(n, i)].conj() * u)
                    .sum()
            })
            .collect();
        Ok(RkhsElement { coefficients })
    }
}

fn check_rank(u: &RkhsElement, basis: &MercerBasis) -> Result<()> {
    if u.rank() != basis.rank() {
        return Err(Error::BasisMismatch(format!(
            "element has rank {} but basis has rank {}",
            u.rank(),
            basis.rank()
        )));
    }
    Ok(())
}

/// `<u, v>_H = sum_n u_n^* v_n / lambda_n`.
pub fn rkhs_inner(u: &RkhsElement, v: &RkhsElement, basis: &MercerBasis) -> Result<Complex64> {
    check_rank(u, basis)?;
    check_rank(v, basis)?;
    Ok(u.coefficients
        .iter()
        .zip(&v.coefficients)
        .zip(basis.eigenvalues())
        .map(|((a, b), l)| a.conj() * b / l)
        .sum())
}

/// Representer `k_t` with coefficients `lambda_n phi_n(t)^*`.
pub fn representer(basis: &MercerBasis, t: f64) -> Result<RkhsElement> {
    let phi = basis.eigenfunctions_at(t)?;
    Ok(RkhsElement {
        coefficients: phi.iter().zip(basis.eigenvalues()).map(|(p, l)| l * p.conj()).collect(),
    })
}

/// The element `zeta(f)^*` of the trajectory space, `c_n = <pi_n | f>`.
pub fn embed_feature(f: &[Complex64], spec: &DiscreteBathSpec, basis: &MercerBasis) -> Result<RkhsElement> {
    if f.len() != spec.mode_count() {
        return Err(Error::LengthMismatch {
            expected: spec.mode_count(),
            found: f.len(),
        });
    }
    // zeta_t(f)^* = <g_t | f> = sum_k conj(g_t(k)) f_k
    let conj_zeta: Vec<Complex64> = basis
        .grid
        .points()
        .iter()
        .map(|&t| spec.feature(t).iter().zip(f).map(|(g, fk)| g.conj() * fk).sum())
        .collect();
    basis.project(&conj_zeta)
}
