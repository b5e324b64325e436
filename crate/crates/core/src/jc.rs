//! Exact Jaynes-Cummings trajectory states.
//!
//! The two-level system uses the ordered basis `(|e>, |g>)` and the coupling
//! `L = |g><e|`. The excited amplitude obeys `lambda'(t) = -∫_0^t K(t,tau) lambda(tau) dtau`
//! and the trajectory state is
//! `Psi_t = c_e0 lambda(t) |e> + (c_g0 + c_e0 ∫_0^t zeta lambda) |g>`.

use ndarray::{array, Array2};
use num_complex::Complex64;

use crate::bath::{CorrelationKernel, KernelHandle};
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, TimeGrid};
use crate::sampler::ComplexTrajectory;

/// Default endpoint tolerance for the step-halving self-check.
pub const DEFAULT_STEP_TOL: f64 = 1e-4;
pub const MIN_PERTURBATION: f64 = 1e-8;
pub const MAX_PERTURBATION: f64 = 1e-2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMethod {
    Volterra,
    Dyson(usize),
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
    pub method: LambdaMethod,
}

impl LambdaSolution {
    pub fn at(&self, i: usize) -> Complex64 {
        self.values[i]
    }
}

/// Pairwise kernel access on a uniform grid; stationary kernels are tabulated by lag.
struct GridKernel<'a, K: CorrelationKernel> {
    kernel: &'a K,
    grid: TimeGrid,
    lags: Option<Vec<Complex64>>,
}

impl<'a, K: CorrelationKernel> GridKernel<'a, K> {
    fn new(kernel: &'a K, grid: &TimeGrid) -> Result<Self> {
        let lags = if kernel.is_stationary() {
            let dt = grid.dt();
            Some(
                (0..grid.n_points())
                    .map(|m| kernel.eval(m as f64 * dt, 0.0))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            kernel,
            grid: *grid,
            lags,
        })
    }

    /// `K(t_n, t_j)` for `j <= n`.
    fn lower(&self, n: usize, j: usize) -> Result<Complex64> {
        match &self.lags {
            Some(l) => Ok(l[n - j]),
            None => self.kernel.eval(self.grid.point(n), self.grid.point(j)),
        }
    }
}

/// Implicit trapezoid for `lambda' = -∫_0^t K lambda` with trapezoidal memory.
fn volterra_raw(kernel: &impl CorrelationKernel, grid: &TimeGrid) -> Result<Vec<Complex64>> {
    let n_pts = grid.n_points();
    let dt = grid.dt();
    let gk = GridKernel::new(kernel, grid)?;
    let mut lam = Vec::with_capacity(n_pts);
    lam.push(ONE);
    let mut deriv_prev = ZERO;
    let mut row = Vec::with_capacity(n_pts);
    for n in 1..n_pts {
        row.clear();
        for j in 0..=n {
            row.push(gk.lower(n, j)?);
        }
        // memory sum without the unknown endpoint
        let mut known = 0.5 * row[0] * lam[0];
        for j in 1..n {
            known += row[j] * lam[j];
        }
        let known = -dt * known;
        let knn = row[n];
        let lam_n = (lam[n - 1] + 0.5 * dt * (deriv_prev + known)) / (1.0 + 0.25 * dt * dt * knn);
        deriv_prev = known - 0.5 * dt * knn * lam_n;
        lam.push(lam_n);
    }
    Ok(lam)
}

/// Volterra solve with a step-halving self-check against a grid of twice the step.
pub fn solve_lambda_volterra_with(
    kernel: &impl CorrelationKernel,
    grid: &TimeGrid,
    step_tol: f64,
) -> Result<LambdaSolution> {
    let values = volterra_raw(kernel, grid)?;
    if grid.n_points() >= 5 {
        let coarse = TimeGrid::new(grid.horizon(), (grid.n_points() - 1) / 2 + 1)?;
        let coarse_end = *volterra_raw(kernel, &coarse)?.last().expect("non-empty");
        let change = (coarse_end - values[grid.n_points() - 1]).norm();
        if change > 10.0 * step_tol {
            return Err(Error::StepSizeTooLarge { change });
        }
    }
    Ok(LambdaSolution {
        grid: *grid,
        values,
        method: LambdaMethod::Volterra,
    })
}

pub fn solve_lambda_volterra(handle: &KernelHandle, grid: &TimeGrid) -> Result<LambdaSolution> {
    match handle {
        KernelHandle::Markov { rate } => Ok(markov_lambda(*rate, grid)),
        _ => solve_lambda_volterra_with(handle, grid, DEFAULT_STEP_TOL),
    }
}

/// `lambda(t) = exp(-rate t / 2)`.
pub fn markov_lambda(rate: f64, grid: &TimeGrid) -> LambdaSolution {
    let values = grid
        .points()
        .iter()
        .map(|t| Complex64::new((-0.5 * rate * t).exp(), 0.0))
        .collect();
    LambdaSolution {
        grid: *grid,
        values,
        method: LambdaMethod::ClosedForm,
    }
}

/// Analytic `lambda(t)` where one is available: a Markov kernel, a single
/// discrete mode, or the exponential kernel.
pub fn closed_form_lambda(handle: &KernelHandle, grid: &TimeGrid) -> Option<LambdaSolution> {
    let pts = grid.points();
    let values: Vec<Complex64> = match handle {
        KernelHandle::Markov { rate } => return Some(markov_lambda(*rate, grid)),
        KernelHandle::Discrete(spec) if spec.mode_count() == 1 => {
            // lambda'' + i d lambda' + |g|^2 lambda = 0
            let d = spec.shifted_frequency(0);
            let w = (spec.couplings()[0].norm_sqr() + 0.25 * d * d).sqrt();
            if w == 0.0 {
                vec![ONE; pts.len()]
            } else {
                pts.iter()
                    .map(|&t| {
                        Complex64::from_polar(1.0, -0.5 * d * t)
                            * Complex64::new((w * t).cos(), 0.5 * d / w * (w * t).sin())
                    })
                    .collect()
            }
        }
        KernelHandle::Exponential { amplitude, decay } => {
            // lambda'' + kappa lambda' + A lambda = 0
            let disc = Complex64::new(decay * decay - 4.0 * amplitude, 0.0).sqrt();
            if disc.norm() < 1e-12 * decay {
                pts.iter()
                    .map(|&t| Complex64::new((1.0 + 0.5 * decay * t) * (-0.5 * decay * t).exp(), 0.0))
                    .collect()
            } else {
                let r1 = 0.5 * (-decay + disc);
                let r2 = 0.5 * (-decay - disc);
                pts.iter()
                    .map(|&t| Complex64::new(((r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1)).re, 0.0))
                    .collect()
            }
        }
        KernelHandle::Discrete(_) | KernelHandle::Brownian => return None,
    };
    Some(LambdaSolution {
        grid: *grid,
        values,
        method: LambdaMethod::ClosedForm,
    })
}

/// Iterated integrals `I_0..=I_{k_max}` with
/// `I_{k+1}(t) = ∫_0^t dsigma ∫_0^sigma K(sigma,tau) I_k(tau) dtau`.
pub fn dyson_terms(handle: &KernelHandle, grid: &TimeGrid, k_max: usize) -> Result<Vec<Vec<Complex64>>> {
    let pts = grid.points();
    if let KernelHandle::Markov { rate } = handle {
        let mut terms = vec![vec![ONE; pts.len()]];
        for k in 1..=k_max {
            let prev = &terms[k - 1];
            let next = pts
                .iter()
                .zip(prev)
                .map(|(t, p)| p * (0.5 * rate * t) / k as f64)
                .collect();
            terms.push(next);
        }
        return Ok(terms);
    }
    let dt = grid.dt();
    let gk = GridKernel::new(handle, grid)?;
    let n_pts = grid.n_points();
    let mut kmat = Vec::with_capacity(n_pts * (n_pts + 1) / 2);
    for n in 0..n_pts {
        for j in 0..=n {
            kmat.push(gk.lower(n, j)?);
        }
    }
    let mut terms = vec![vec![ONE; n_pts]];
    for k in 0..k_max {
        let prev = &terms[k];
        let inner: Vec<Complex64> = (0..n_pts)
            .map(|n| {
                if n == 0 {
                    return ZERO;
                }
                let r = &kmat[n * (n + 1) / 2..n * (n + 1) / 2 + n + 1];
                let mut s = 0.5 * (r[0] * prev[0] + r[n] * prev[n]);
                for j in 1..n {
                    s += r[j] * prev[j];
                }
                dt * s
            })
            .collect();
        terms.push(cumulative_trapezoid(&inner, dt));
    }
    Ok(terms)
}

/// `sum_{k <= k_max} (-1)^k I_k`.
pub fn dyson_partial_sum(handle: &KernelHandle, grid: &TimeGrid, k_max: usize) -> Result<LambdaSolution> {
    let terms = dyson_terms(handle, grid, k_max)?;
    let mut values = vec![ZERO; grid.n_points()];
    for (k, term) in terms.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for (v, x) in values.iter_mut().zip(term) {
            *v += sign * x;
        }
    }
    Ok(LambdaSolution {
        grid: *grid,
        values,
        method: LambdaMethod::Dyson(k_max),
    })
}

/// Memory term `∫_0^{t_n} K(t_n, tau) lambda(tau) dtau` by trapezoid.
pub fn memory_integral(kernel: &impl CorrelationKernel, lam: &LambdaSolution, n: usize) -> Result<Complex64> {
    if n == 0 {
        return Ok(ZERO);
    }
    let g = &lam.grid;
    let tn = g.point(n);
    let mut s = 0.5 * (kernel.eval(tn, 0.0)? * lam.values[0] + kernel.eval(tn, tn)? * lam.values[n]);
    for j in 1..n {
        s += kernel.eval(tn, g.point(j))? * lam.values[j];
    }
    Ok(g.dt() * s)
}

/// `|lambda(t)|^2 + ∬_0^t lambda(tau) lambda(sigma)^* K(sigma, tau)` at every node.
/// For the Markov kind the double integral collapses to `rate ∫_0^t |lambda|^2`.
pub fn norm_balance(handle: &KernelHandle, lam: &LambdaSolution) -> Result<Vec<f64>> {
    let g = lam.grid;
    let dt = g.dt();
    if let KernelHandle::Markov { rate } = handle {
        let sq: Vec<Complex64> = lam.values.iter().map(|l| Complex64::new(l.norm_sqr(), 0.0)).collect();
        let cum = cumulative_trapezoid(&sq, dt);
        return Ok(sq.iter().zip(&cum).map(|(a, c)| a.re + rate * c.re).collect());
    }
    let gk = GridKernel::new(handle, &g)?;
    let l = &lam.values;
    // A_ij = K(t_j, t_i) lambda_i lambda_j^*; only the lower triangle i >= j is formed.
    let mut full = 0.0;
    let mut col0 = ZERO;
    let mut out = Vec::with_capacity(g.n_points());
    for n in 0..g.n_points() {
        let mut row_sum = ZERO;
        let mut a_n0 = ZERO;
        let mut a_nn = ZERO;
        for j in 0..=n {
            let a = gk.lower(n, j)?.conj() * l[n] * l[j].conj();
            if j == 0 {
                a_n0 = a;
            }
            if j == n {
                a_nn = a;
            }
            row_sum += a;
        }
        full += 2.0 * row_sum.re - a_nn.re;
        col0 += a_n0;
        let a00 = (gk.lower(0, 0)? * l[0] * l[0].conj()).re;
        let double = if n == 0 {
            0.0
        } else {
            dt * dt * (full - col0.re - row_sum.re + 0.25 * (a00 + a_nn.re + 2.0 * a_n0.re))
        };
        out.push(l[n].norm_sqr() + double);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JcTrajectoryState {
    pub initial: [Complex64; 2],
    /// `(c_e(t_i), c_g(t_i))` at every node.
    pub amplitudes: Vec<[Complex64; 2]>,
}

fn check_grids(lam: &LambdaSolution, zeta: &ComplexTrajectory) -> Result<()> {
    if !lam.grid.same_as(zeta.grid()) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn check_index(grid: &TimeGrid, t_index: usize) -> Result<()> {
    if t_index >= grid.n_points() {
        return Err(Error::InvalidArgument(format!(
            "time index {t_index} outside grid of {} points",
            grid.n_points()
        )));
    }
    Ok(())
}

/// `J(t_n) = ∫_0^{t_n} zeta lambda` by trapezoid.
fn source_integral(lam: &LambdaSolution, zeta: &[Complex64], n: usize) -> Complex64 {
    if n == 0 {
        return ZERO;
    }
    let l = &lam.values;
    let mut s = 0.5 * (zeta[0] * l[0] + zeta[n] * l[n]);
    for j in 1..n {
        s += zeta[j] * l[j];
    }
    lam.grid.dt() * s
}

/// Closed-form trajectory state at `t_index`.
pub fn jc_state(
    initial: [Complex64; 2],
    lam: &LambdaSolution,
    zeta: &ComplexTrajectory,
    t_index: usize,
) -> Result<[Complex64; 2]> {
    check_grids(lam, zeta)?;
    check_index(&lam.grid, t_index)?;
    Ok(state_from(
        initial,
        lam.values[t_index],
        source_integral(lam, zeta.values(), t_index),
    ))
}

fn state_from(initial: [Complex64; 2], lam: Complex64, source: Complex64) -> [Complex64; 2] {
    [initial[0] * lam, initial[1] + initial[0] * source]
}

/// Trajectory state at every node, accumulating the source integral once.
pub fn jc_states(initial: [Complex64; 2], lam: &LambdaSolution, zeta: &ComplexTrajectory) -> Result<JcTrajectoryState> {
    check_grids(lam, zeta)?;
    let prod: Vec<Complex64> = zeta.values().iter().zip(&lam.values).map(|(z, l)| z * l).collect();
    let source = cumulative_trapezoid(&prod, lam.grid.dt());
    let amplitudes = lam
        .values
        .iter()
        .zip(&source)
        .map(|(l, s)| state_from(initial, *l, *s))
        .collect();
    Ok(JcTrajectoryState { initial, amplitudes })
}

/// `U_t = |g><g| + lambda |e><e| + J |g><e|` in the `(e, g)` basis.
pub fn jc_propagator(lam: &LambdaSolution, zeta: &ComplexTrajectory, t_index: usize) -> Result<Array2<Complex64>> {
    check_grids(lam, zeta)?;
    check_index(&lam.grid, t_index)?;
    let j = source_integral(lam, zeta.values(), t_index);
    Ok(array![[lam.values[t_index], ZERO], [j, ONE]])
}

fn check_perturbation(eps: f64) -> Result<()> {
    if !(MIN_PERTURBATION..=MAX_PERTURBATION).contains(&eps) {
        return Err(Error::PerturbationScale(eps));
    }
    Ok(())
}

/// Hat bump of half-width `width` cells centred on node `center`.
fn hat(center: usize, width: usize, i: usize) -> f64 {
    let d = center.abs_diff(i) as f64 / width as f64;
    (1.0 - d).max(0.0)
}

/// Gateaux derivative of `Psi_{t_index}` along a unit-area hat bump centred on
/// `center`, i.e. a discrete `delta Psi_t / delta zeta_tau` at `tau = t_center`.
/// The bump is normalized by its area inside `[0, t]` when that is nonzero.
pub fn gateaux_derivative(
    initial: [Complex64; 2],
    lam: &LambdaSolution,
    zeta: &ComplexTrajectory,
    t_index: usize,
    center: usize,
    bump_width: usize,
    eps: f64,
) -> Result<[Complex64; 2]> {
    check_perturbation(eps)?;
    check_grids(lam, zeta)?;
    check_index(&lam.grid, t_index)?;
    check_index(&lam.grid, center)?;
    if bump_width == 0 {
        return Err(Error::InvalidArgument("bump width must be at least one cell".into()));
    }
    let g = lam.grid;
    let w = g.weights();
    let dt = g.dt();
    let inside: f64 = if t_index == 0 {
        0.0
    } else {
        (0..=t_index)
            .map(|i| {
                let wi = if i == 0 || i == t_index { 0.5 * dt } else { dt };
                wi * hat(center, bump_width, i)
            })
            .sum()
    };
    let total: f64 = w
        .iter()
        .enumerate()
        .map(|(i, wi)| wi * hat(center, bump_width, i))
        .sum();
    let area = if inside > 0.0 { inside } else { total };
    let z = zeta.values();
    let bumped = |sign: f64| -> Vec<Complex64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| v + sign * eps * hat(center, bump_width, i))
            .collect()
    };
    let plus = source_integral(lam, &bumped(1.0), t_index);
    let minus = source_integral(lam, &bumped(-1.0), t_index);
    let lt = lam.values[t_index];
    let sp = state_from(initial, lt, plus);
    let sm = state_from(initial, lt, minus);
    let scale = 1.0 / (2.0 * eps * area);
    Ok([(sp[0] - sm[0]) * scale, (sp[1] - sm[1]) * scale])
}

/// Norm of `dPsi/dt - [L zeta_t Psi - L^† ∫_0^t K(t,tau) delta Psi_t/delta zeta_tau dtau]`
/// at an interior node, with the time derivative by central difference.
#[allow(clippy::too_many_arguments)]
pub fn ds_residual(
    kernel: &impl CorrelationKernel,
    initial: [Complex64; 2],
    lam: &LambdaSolution,
    zeta: &ComplexTrajectory,
    t_index: usize,
    bump_width: usize,
    eps: f64,
) -> Result<f64> {
    check_perturbation(eps)?;
    check_grids(lam, zeta)?;
    let g = lam.grid;
    if t_index == 0 || t_index + 1 >= g.n_points() {
        return Err(Error::NotInterior {
            index: t_index,
            n_points: g.n_points(),
        });
    }
    let dt = g.dt();
    let before = jc_state(initial, lam, zeta, t_index - 1)?;
    let after = jc_state(initial, lam, zeta, t_index + 1)?;
    let now = jc_state(initial, lam, zeta, t_index)?;
    let lhs = [(after[0] - before[0]) / (2.0 * dt), (after[1] - before[1]) / (2.0 * dt)];

    let tn = g.point(t_index);
    let mut memory = ZERO;
    for j in 0..=t_index {
        let d = gateaux_derivative(initial, lam, zeta, t_index, j, bump_width, eps)?;
        let wj = if j == 0 || j == t_index { 0.5 * dt } else { dt };
        memory += wj * kernel.eval(tn, g.point(j))? * d[1];
    }
    // L Psi = c_e |g>,  L^† v = <g|v> |e>
    let rhs = [-memory, zeta.values()[t_index] * now[0]];
    Ok(((lhs[0] - rhs[0]).norm_sqr() + (lhs[1] - rhs[1]).norm_sqr()).sqrt())
}
