//! Complex Gaussian trajectories `zeta_t(f) = <f | g_t>` and their statistics.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bath::DiscreteBathSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::mercer::MercerBasis;
use crate::rng::{Domain, GaussianStream};
use crate::stats;

/// How a trajectory is read between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    /// Constant `values[i]` on `[t_i, t_{i+1})`; used for white noise.
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrajectory {
    grid: TimeGrid,
    values: Vec<Complex64>,
    interpolation: Interpolation,
}

impl ComplexTrajectory {
    pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::LengthMismatch {
                expected: grid.n_points(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid,
            values,
            interpolation: Interpolation::Linear,
        })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n_points()],
            interpolation: Interpolation::Linear,
        }
    }

    pub fn constant(grid: TimeGrid, value: Complex64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_points()],
            interpolation: Interpolation::Linear,
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self {
            grid,
            values,
            interpolation: Interpolation::Linear,
        }
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Value inside cell `[t_i, t_{i+1}]` at relative position `frac in [0, 1]`.
    pub fn in_cell(&self, i: usize, frac: f64) -> Complex64 {
        match self.interpolation {
            Interpolation::Hold => self.values[i],
            Interpolation::Linear => self.values[i] + (self.values[i + 1] - self.values[i]) * frac,
        }
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        let (i, frac) = self.grid.bracket(t)?;
        Ok(self.in_cell(i, frac))
    }

    /// Pointwise sum; both trajectories must share a grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self {
            grid: self.grid,
            values,
            interpolation: self.interpolation,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSample {
    pub f: Vec<Complex64>,
    pub seed: u64,
    pub index: u64,
}

/// Independent unit circular Gaussians, one per mode, addressed by `(seed, index, k)`.
pub fn sample_amplitudes(spec: &DiscreteBathSpec, seed: u64, index: u64) -> AmplitudeSample {
    let mut f = vec![Complex64::new(0.0, 0.0); spec.mode_count()];
    GaussianStream::new(seed, Domain::Amplitudes, index).fill(&mut f);
    AmplitudeSample { f, seed, index }
}

/// Tabulated features `g_k e^{i(omega_k - omega_0) t_i}` for fast repeated synthesis.
#[derive(Debug, Clone)]
pub struct TrajectoryMap {
    grid: TimeGrid,
    /// Row `i` holds the shifted couplings at `t_i`.
    table: Array2<Complex64>,
}

impl TrajectoryMap {
    pub fn new(spec: &DiscreteBathSpec, grid: &TimeGrid) -> Self {
        let pts = grid.points();
        let m = spec.mode_count();
        let table = Array2::from_shape_fn((grid.n_points(), m), |(i, k)| {
            spec.couplings()[k] * Complex64::from_polar(1.0, spec.shifted_frequency(k) * pts[i])
        });
        Self { grid: *grid, table }
    }

    pub fn mode_count(&self) -> usize {
        self.table.ncols()
    }

    pub fn trajectory(&self, f: &[Complex64]) -> Result<ComplexTrajectory> {
        if f.len() != self.mode_count() {
            return Err(Error::LengthMismatch {
                expected: self.mode_count(),
                found: f.len(),
            });
        }
        let values = self
            .table
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(f).map(|(g, fk)| g * fk.conj()).sum())
            .collect();
        ComplexTrajectory::new(self.grid, values)
    }
}

/// `zeta(t_i) = sum_k g_k e^{i(omega_k - omega_0) t_i} f_k^*`.
pub fn trajectory_from_amplitudes(
    spec: &DiscreteBathSpec,
    f: &AmplitudeSample,
    grid: &TimeGrid,
) -> Result<ComplexTrajectory> {
    TrajectoryMap::new(spec, grid).trajectory(&f.f)
}

/// Karhunen-Loève synthesis `zeta(t_i) = sum_n c_n^* phi_n(t_i)^*`, `E|c_n|^2 = lambda_n`.
pub fn sample_trajectory_kl(basis: &MercerBasis, seed: u64, index: u64) -> ComplexTrajectory {
    let mut stream = GaussianStream::new(seed, Domain::KarhunenLoeve, index);
    let c: Vec<Complex64> = basis
        .eigenvalues()
        .iter()
        .map(|l| stream.complex_normal() * l.sqrt())
        .collect();
    let phi = basis.eigenfunctions();
    let n = basis.grid().n_points();
    let values = (0..n)
        .map(|i| c.iter().enumerate().map(|(m, cn)| (cn * phi[(m, i)]).conj()).sum())
        .collect();
    ComplexTrajectory {
        grid: *basis.grid(),
        values,
        interpolation: Interpolation::Linear,
    }
}

/// Complex white noise of intensity `rate` held constant on each cell:
/// cell values are `CN(0, rate / dt)` so that `∫ zeta dt` over a cell has variance `rate dt`.
pub fn sample_white_noise(rate: f64, grid: &TimeGrid, seed: u64, index: u64) -> ComplexTrajectory {
    let scale = (rate / grid.dt()).sqrt();
    let mut stream = GaussianStream::new(seed, Domain::WhiteNoise, index);
    let mut values: Vec<Complex64> = (0..grid.n_points() - 1)
        .map(|_| stream.complex_normal() * scale)
        .collect();
    values.push(*values.last().unwrap_or(&Complex64::new(0.0, 0.0)));
    ComplexTrajectory {
        grid: *grid,
        values,
        interpolation: Interpolation::Hold,
    }
}

/// Direct-mode batch for indices `first..first + count`, generated in parallel.
pub fn sample_batch(
    spec: &DiscreteBathSpec,
    grid: &TimeGrid,
    seed: u64,
    first: u64,
    count: usize,
) -> Vec<ComplexTrajectory> {
    let map = TrajectoryMap::new(spec, grid);
    (0..count as u64)
        .into_par_iter()
        .map(|j| {
            let f = sample_amplitudes(spec, seed, first + j);
            map.trajectory(&f.f).expect("amplitude length matches the map")
        })
        .collect()
}

/// Monte-Carlo estimates of `C(t_i, t_j) = E[zeta_i zeta_j^*]` and of the
/// pseudo-covariance `E[zeta_i zeta_j]`, with per-component standard errors.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub grid: TimeGrid,
    pub n_samples: usize,
    pub covariance: Array2<Complex64>,
    pub covariance_stderr: Array2<Complex64>,
    pub pseudo: Array2<Complex64>,
    pub pseudo_stderr: Array2<Complex64>,
}

impl CovarianceEstimate {
    /// `sqrt(se_re^2 + se_im^2)` of a covariance entry.
    pub fn stderr(&self, i: usize, j: usize) -> f64 {
        self.covariance_stderr[(i, j)].norm()
    }
}

pub fn empirical_covariance(trajectories: &[ComplexTrajectory]) -> Result<CovarianceEstimate> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidArgument("no trajectories supplied".into()))?;
    let grid = first.grid;
    if trajectories.iter().any(|z| !z.grid.same_as(&grid)) {
        return Err(Error::GridMismatch);
    }
    let n = grid.n_points();
    let nn = n * n;
    let m = stats::accumulate(trajectories.len(), 4 * nn, |r, buf| {
        let z = &trajectories[r].values;
        for i in 0..n {
            for j in 0..n {
                let c = z[i] * z[j].conj();
                let p = z[i] * z[j];
                let at = i * n + j;
                buf[at] = c.re;
                buf[nn + at] = c.im;
                buf[2 * nn + at] = p.re;
                buf[3 * nn + at] = p.im;
            }
        }
        Ok(())
    })?;
    let mean = m.mean();
    let se = m.stderr();
    let pick = |v: &[f64], off: usize| {
        Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new(v[off + i * n + j], v[off + nn + i * n + j])
        })
    };
    Ok(CovarianceEstimate {
        grid,
        n_samples: trajectories.len(),
        covariance: pick(&mean, 0),
        covariance_stderr: pick(&se, 0),
        pseudo: pick(&mean, 2 * nn),
        pseudo_stderr: pick(&se, 2 * nn),
    })
}
