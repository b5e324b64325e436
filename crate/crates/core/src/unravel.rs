//! Trajectory propagation and Monte-Carlo reduction to system density matrices.

use ndarray::Array2;
use num_complex::Complex64;

use crate::bath::DiscreteBathSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jc::{self, LambdaSolution};
use crate::linalg::adjoint;
use crate::rng::{Domain, GaussianStream};
use crate::sampler::{sample_amplitudes, sample_white_noise, ComplexTrajectory, TrajectoryMap};
use crate::stats;

pub const MAX_MARKOV_DIM: usize = 16;
const HERMITIAN_TOL: f64 = 1e-12;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// System Hamiltonian `H`, coupling `L` and Markov damping rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub hamiltonian: Array2<Complex64>,
    pub coupling: Array2<Complex64>,
    pub damping_rate: f64,
}

impl SystemModel {
    pub fn new(hamiltonian: Array2<Complex64>, coupling: Array2<Complex64>, damping_rate: f64) -> Result<Self> {
        let d = hamiltonian.nrows();
        if d == 0 || hamiltonian.ncols() != d || coupling.dim() != (d, d) {
            return Err(Error::InvalidModel(format!(
                "hamiltonian {:?} and coupling {:?} must be equal square matrices",
                hamiltonian.dim(),
                coupling.dim()
            )));
        }
        let asym = hamiltonian
            .indexed_iter()
            .map(|((i, j), h)| (h - hamiltonian[(j, i)].conj()).norm())
            .fold(0.0, f64::max);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        if !(damping_rate >= 0.0 && damping_rate.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "damping rate must be >= 0, got {damping_rate}"
            )));
        }
        Ok(Self {
            hamiltonian,
            coupling,
            damping_rate,
        })
    }

    /// Two-level model in the `(|e>, |g>)` basis with `H = 0` and `L = |g><e|`.
    pub fn jaynes_cummings(damping_rate: f64) -> Result<Self> {
        let mut l = Array2::zeros((2, 2));
        l[(1, 0)] = ONE;
        Self::new(Array2::zeros((2, 2)), l, damping_rate)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// `-iH - (rate/2) L^† L`.
    pub fn drift(&self) -> Array2<Complex64> {
        let ldl = adjoint(&self.coupling).dot(&self.coupling);
        self.hamiltonian.mapv(|h| -Complex64::i() * h) - ldl.mapv(|x| 0.5 * self.damping_rate * x)
    }
}

fn apply(m: &Array2<Complex64>, v: &[Complex64], out: &mut [Complex64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = m.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

struct MarkovStepper {
    drift: Array2<Complex64>,
    coupling: Array2<Complex64>,
}

impl MarkovStepper {
    fn rhs(&self, zeta: Complex64, psi: &[Complex64], out: &mut [Complex64]) {
        let d = psi.len();
        let mut lpsi = vec![ZERO; d];
        apply(&self.drift, psi, out);
        apply(&self.coupling, psi, &mut lpsi);
        for (o, l) in out.iter_mut().zip(&lpsi) {
            *o += zeta * l;
        }
    }

    /// Advance over cell `i` with `sub` RK4 substeps.
    fn cell(&self, zeta: &ComplexTrajectory, i: usize, sub: usize, psi: &mut Vec<Complex64>) {
        let d = psi.len();
        let h = zeta.grid().dt() / sub as f64;
        let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; d], vec![ZERO; d], vec![ZERO; d], vec![ZERO; d]);
        let mut tmp = vec![ZERO; d];
        for s in 0..sub {
            let f0 = s as f64 / sub as f64;
            let fm = (s as f64 + 0.5) / sub as f64;
            let f1 = (s as f64 + 1.0) / sub as f64;
            let (z0, zm, z1) = (zeta.in_cell(i, f0), zeta.in_cell(i, fm), zeta.in_cell(i, f1));
            self.rhs(z0, psi, &mut k1);
            for j in 0..d {
                tmp[j] = psi[j] + 0.5 * h * k1[j];
            }
            self.rhs(zm, &tmp, &mut k2);
            for j in 0..d {
                tmp[j] = psi[j] + 0.5 * h * k2[j];
            }
            self.rhs(zm, &tmp, &mut k3);
            for j in 0..d {
                tmp[j] = psi[j] + h * k3[j];
            }
            self.rhs(z1, &tmp, &mut k4);
            for j in 0..d {
                psi[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
    }
}

fn markov_checks(model: &SystemModel, phi: &[Complex64]) -> Result<()> {
    if !(model.damping_rate > 0.0) {
        return Err(Error::InvalidModel(
            "Markov propagation needs a positive damping rate".into(),
        ));
    }
    if model.dim() > MAX_MARKOV_DIM {
        return Err(Error::InvalidModel(format!(
            "system dimension {} exceeds {MAX_MARKOV_DIM}",
            model.dim()
        )));
    }
    if phi.len() != model.dim() {
        return Err(Error::LengthMismatch {
            expected: model.dim(),
            found: phi.len(),
        });
    }
    Ok(())
}

fn markov_run(model: &SystemModel, zeta: &ComplexTrajectory, phi: &[Complex64], sub: usize) -> Vec<Vec<Complex64>> {
    let stepper = MarkovStepper {
        drift: model.drift(),
        coupling: model.coupling.clone(),
    };
    let mut psi = phi.to_vec();
    let mut out = Vec::with_capacity(zeta.grid().n_points());
    out.push(psi.clone());
    for i in 0..zeta.grid().n_points() - 1 {
        stepper.cell(zeta, i, sub, &mut psi);
        out.push(psi.clone());
    }
    out
}

/// RK4 integration of `dPsi/dt = (-iH - (rate/2) L^† L + L zeta_t) Psi` on the
/// trajectory grid, without the step-halving self-check.
pub fn markov_propagate_unchecked(
    model: &SystemModel,
    zeta: &ComplexTrajectory,
    phi: &[Complex64],
) -> Result<Vec<Vec<Complex64>>> {
    markov_checks(model, phi)?;
    Ok(markov_run(model, zeta, phi, 1))
}

/// As [`markov_propagate_unchecked`], rejecting grids where halving the step
/// moves the final state by more than `10 * step_tol`.
pub fn markov_propagate_with(
    model: &SystemModel,
    zeta: &ComplexTrajectory,
    phi: &[Complex64],
    step_tol: f64,
) -> Result<Vec<Vec<Complex64>>> {
    markov_checks(model, phi)?;
    let states = markov_run(model, zeta, phi, 1);
    let fine = markov_run(model, zeta, phi, 2);
    let change = states
        .last()
        .zip(fine.last())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
        .unwrap_or(0.0);
    if change > 10.0 * step_tol {
        return Err(Error::StepSizeTooLarge { change });
    }
    Ok(states)
}

pub fn markov_propagate(
    model: &SystemModel,
    zeta: &ComplexTrajectory,
    phi: &[Complex64],
) -> Result<Vec<Vec<Complex64>>> {
    markov_propagate_with(model, zeta, phi, jc::DEFAULT_STEP_TOL)
}

fn lindblad_rhs(
    model: &SystemModel,
    ld: &Array2<Complex64>,
    ldl: &Array2<Complex64>,
    rho: &Array2<Complex64>,
) -> Array2<Complex64> {
    let i = Complex64::i();
    let h = &model.hamiltonian;
    let l = &model.coupling;
    let comm = h.dot(rho) - rho.dot(h);
    let jump = l.dot(rho).dot(ld);
    let anti = ldl.dot(rho) + rho.dot(ldl);
    comm.mapv(|z| -i * z) + (jump - anti.mapv(|z| 0.5 * z)).mapv(|z| model.damping_rate * z)
}

/// Lindblad evolution of `|phi><phi|` by RK4 with `substeps` steps per grid cell.
pub fn lindblad_evolve(
    model: &SystemModel,
    phi: &[Complex64],
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Vec<Array2<Complex64>>> {
    let d = model.dim();
    if phi.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            found: phi.len(),
        });
    }
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    let ld = adjoint(&model.coupling);
    let ldl = ld.dot(&model.coupling);
    let h = grid.dt() / substeps as f64;
    let mut rho = Array2::from_shape_fn((d, d), |(i, j)| phi[i] * phi[j].conj());
    let mut out = Vec::with_capacity(grid.n_points());
    out.push(rho.clone());
    for _ in 1..grid.n_points() {
        for _ in 0..substeps {
            let k1 = lindblad_rhs(model, &ld, &ldl, &rho);
            let k2 = lindblad_rhs(model, &ld, &ldl, &(&rho + &k1.mapv(|z| 0.5 * h * z)));
            let k3 = lindblad_rhs(model, &ld, &ldl, &(&rho + &k2.mapv(|z| 0.5 * h * z)));
            let k4 = lindblad_rhs(model, &ld, &ldl, &(&rho + &k3.mapv(|z| h * z)));
            rho = &rho + &(k1 + k2.mapv(|z| 2.0 * z) + k3.mapv(|z| 2.0 * z) + k4).mapv(|z| h / 6.0 * z);
        }
        out.push(rho.clone());
    }
    Ok(out)
}

/// Which trajectory equation is averaged.
#[derive(Debug, Clone)]
pub enum ModelKind {
    /// Exact Jaynes-Cummings states driven by direct-mode trajectories.
    JcNonMarkov {
        spec: DiscreteBathSpec,
        lambda: LambdaSolution,
    },
    /// Markov trajectories driven by complex white noise of intensity `damping_rate`.
    Markov { model: SystemModel },
}

#[derive(Debug, Clone)]
pub struct ReducedStateSeries {
    pub grid: TimeGrid,
    pub dim: usize,
    pub n_samples: usize,
    pub matrices: Vec<Array2<Complex64>>,
    /// Standard errors of the real and imaginary parts, packed as `re + i im`.
    pub stderr: Vec<Array2<Complex64>>,
    /// Mean and standard error of the trajectory norm `||Psi_t||^2`.
    pub norm_mean: Vec<f64>,
    pub norm_stderr: Vec<f64>,
}

impl ReducedStateSeries {
    /// `sqrt(se_re^2 + se_im^2)` for entry `(i, j)` at node `n`.
    pub fn combined_stderr(&self, n: usize, i: usize, j: usize) -> f64 {
        self.stderr[n][(i, j)].norm()
    }

    pub fn trace(&self, n: usize) -> Complex64 {
        self.matrices[n].diag().sum()
    }
}

fn add_outer(psi: &[Complex64], n: usize, d: usize, buf: &mut [f64]) {
    let base = n * (2 * d * d + 1);
    let mut norm = 0.0;
    for i in 0..d {
        norm += psi[i].norm_sqr();
        for j in 0..d {
            let r = psi[i] * psi[j].conj();
            buf[base + 2 * (i * d + j)] = r.re;
            buf[base + 2 * (i * d + j) + 1] = r.im;
        }
    }
    buf[base + 2 * d * d] = norm;
}

/// Average `|Psi_t><Psi_t|` over `n_traj` trajectories with seeds `(seed, 0..n_traj)`.
pub fn mc_reduced_state(
    kind: &ModelKind,
    phi: &[Complex64],
    n_traj: usize,
    seed: u64,
    grid: &TimeGrid,
) -> Result<ReducedStateSeries> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let n_pts = grid.n_points();
    let d = match kind {
        ModelKind::JcNonMarkov { lambda, .. } => {
            if !lambda.grid.same_as(grid) {
                return Err(Error::GridMismatch);
            }
            2
        }
        ModelKind::Markov { model } => model.dim(),
    };
    if phi.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            found: phi.len(),
        });
    }
    let stride = 2 * d * d + 1;
    let moments = match kind {
        ModelKind::JcNonMarkov { spec, lambda } => {
            let map = TrajectoryMap::new(spec, grid);
            let initial = [phi[0], phi[1]];
            stats::accumulate(n_traj, n_pts * stride, |r, buf| {
                let f = sample_amplitudes(spec, seed, r as u64);
                let zeta = map.trajectory(&f.f)?;
                let states = jc::jc_states(initial, lambda, &zeta)?;
                for (n, psi) in states.amplitudes.iter().enumerate() {
                    add_outer(psi, n, 2, buf);
                }
                Ok(())
            })?
        }
        ModelKind::Markov { model } => {
            markov_checks(model, phi)?;
            stats::accumulate(n_traj, n_pts * stride, |r, buf| {
                let zeta = sample_white_noise(model.damping_rate, grid, seed, r as u64);
                for (n, psi) in markov_run(model, &zeta, phi, 1).iter().enumerate() {
                    add_outer(psi, n, d, buf);
                }
                Ok(())
            })?
        }
    };
    let mean = moments.mean();
    let se = moments.stderr();
    let unpack = |v: &[f64], n: usize| {
        Array2::from_shape_fn((d, d), |(i, j)| {
            let at = n * stride + 2 * (i * d + j);
            Complex64::new(v[at], v[at + 1])
        })
    };
    Ok(ReducedStateSeries {
        grid: *grid,
        dim: d,
        n_samples: n_traj,
        matrices: (0..n_pts).map(|n| unpack(&mean, n)).collect(),
        stderr: (0..n_pts).map(|n| unpack(&se, n)).collect(),
        norm_mean: (0..n_pts).map(|n| mean[n * stride + 2 * d * d]).collect(),
        norm_stderr: (0..n_pts).map(|n| se[n * stride + 2 * d * d]).collect(),
    })
}

/// Monte-Carlo check of the shifted-trajectory form of the memory term.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedFormResidual {
    /// `E_xi[xi_t^* L^† Psi_t(zeta + xi)]` in the `(e, g)` basis.
    pub estimate: [Complex64; 2],
    /// Standard errors of the estimate, `re + i im` packed.
    pub stderr: [Complex64; 2],
    /// `L^† ∫_0^t K(t,tau) delta Psi_t / delta zeta_tau dtau` by quadrature.
    pub memory: [Complex64; 2],
    pub difference: [Complex64; 2],
}

impl ShiftedFormResidual {
    /// Largest component deviation in units of its standard error.
    pub fn max_sigma(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..2 {
            for (d, s) in [
                (self.difference[k].re, self.stderr[k].re),
                (self.difference[k].im, self.stderr[k].im),
            ] {
                if d != 0.0 {
                    worst = worst.max(if s > 0.0 { d.abs() / s } else { f64::INFINITY });
                }
            }
        }
        worst
    }
}

#[allow(clippy::too_many_arguments)]
pub fn shifted_form_residual(
    spec: &DiscreteBathSpec,
    lam: &LambdaSolution,
    zeta: &ComplexTrajectory,
    initial: [Complex64; 2],
    t_index: usize,
    n_shift: usize,
    seed: u64,
) -> Result<ShiftedFormResidual> {
    let grid = lam.grid;
    if !grid.same_as(zeta.grid()) {
        return Err(Error::GridMismatch);
    }
    if t_index == 0 || t_index + 1 >= grid.n_points() {
        return Err(Error::NotInterior {
            index: t_index,
            n_points: grid.n_points(),
        });
    }
    let sub = grid.prefix(t_index)?;
    let lam_t = LambdaSolution {
        grid: sub,
        values: lam.values[..=t_index].to_vec(),
        method: lam.method,
    };
    let base = ComplexTrajectory::new(sub, zeta.values()[..=t_index].to_vec())?;
    let map = TrajectoryMap::new(spec, &sub);
    let m = stats::accumulate(n_shift, 4, |r, buf| {
        let mut f = vec![ZERO; spec.mode_count()];
        GaussianStream::new(seed, Domain::Shift, r as u64).fill(&mut f);
        let xi = map.trajectory(&f)?;
        let shifted = base.add(&xi)?;
        let psi = jc::jc_state(initial, &lam_t, &shifted, t_index)?;
        let w = xi.values()[t_index].conj();
        // L^† Psi = <g|Psi> |e>
        let e = w * psi[1];
        buf[0] = e.re;
        buf[1] = e.im;
        Ok(())
    })?;
    let mean = m.mean();
    let se = m.stderr();
    let estimate = [Complex64::new(mean[0], mean[1]), ZERO];
    let memory = [initial[0] * jc::memory_integral(spec, lam, t_index)?, ZERO];
    Ok(ShiftedFormResidual {
        estimate,
        stderr: [Complex64::new(se[0], se[1]), ZERO],
        memory,
        difference: [estimate[0] - memory[0], ZERO],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::KernelHandle;
    use crate::jc::solve_lambda_volterra;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn expm(a: &Array2<Complex64>) -> Array2<Complex64> {
        let norm = a.iter().map(|z| z.norm()).sum::<f64>();
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = a.mapv(|z| z / 2f64.powi(s));
        let d = a.nrows();
        let mut term = Array2::<Complex64>::eye(d);
        let mut sum = term.clone();
        for k in 1..30 {
            term = term.dot(&scaled).mapv(|z| z / k as f64);
            sum = sum + &term;
        }
        for _ in 0..s {
            sum = sum.dot(&sum);
        }
        sum
    }

    #[test]
    fn lindblad_jc_decay() {
        let model = SystemModel::jaynes_cummings(0.8).unwrap();
        let grid = TimeGrid::new(3.0, 301).unwrap();
        let phi = [c(0.6, 0.0), c(0.0, 0.8)];
        let rhos = lindblad_evolve(&model, &phi, &grid, 2).unwrap();
        for (t, r) in grid.points().iter().zip(&rhos) {
            assert!((r[(0, 0)].re - 0.36 * (-0.8 * t).exp()).abs() < 1e-9);
            assert!((r[(0, 1)] - c(0.0, -0.48) * (-0.4 * t).exp()).norm() < 1e-9);
            assert!((r[(0, 0)] + r[(1, 1)] - 1.0).norm() < 1e-12);
        }
    }

    fn random_matrix(d: usize, seed: u64) -> Array2<Complex64> {
        let mut s = GaussianStream::new(seed, Domain::Aux, 0);
        Array2::from_shape_fn((d, d), |_| s.complex_normal())
    }

    #[test]
    fn unitary_limit_matches_exponential() {
        let a = random_matrix(3, 1);
        let h = (&a + &adjoint(&a)).mapv(|z| 0.5 * z);
        let model = SystemModel::new(h.clone(), Array2::zeros((3, 3)), 1.0).unwrap();
        let grid = TimeGrid::new(2.0, 801).unwrap();
        let phi = vec![c(0.6, 0.0), c(0.0, 0.8), ZERO];
        let states = markov_propagate(&model, &ComplexTrajectory::zeros(grid), &phi).unwrap();
        let u = expm(&h.mapv(|z| -Complex64::i() * z * 2.0));
        let expect: Vec<Complex64> = (0..3).map(|i| (0..3).map(|j| u[(i, j)] * phi[j]).sum()).collect();
        for (x, y) in states[800].iter().zip(&expect) {
            assert!((x - y).norm() < 1e-8);
        }
    }

    #[test]
    fn jc_markov_decay() {
        let model = SystemModel::jaynes_cummings(1.3).unwrap();
        let grid = TimeGrid::new(3.0, 301).unwrap();
        let states = markov_propagate(&model, &ComplexTrajectory::zeros(grid), &[ONE, ZERO]).unwrap();
        for (t, s) in grid.points().iter().zip(&states) {
            assert!((s[0].re - (-0.65 * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_noise_matches_exponential() {
        let a = random_matrix(3, 2);
        let h = (&a + &adjoint(&a)).mapv(|z| 0.25 * z);
        let l = random_matrix(3, 3).mapv(|z| 0.5 * z);
        let model = SystemModel::new(h, l.clone(), 0.7).unwrap();
        let z0 = c(0.3, -0.4);
        let grid = TimeGrid::new(1.5, 601).unwrap();
        let phi = vec![ONE, c(0.0, 0.5), c(-0.2, 0.1)];
        let states = markov_propagate(&model, &ComplexTrajectory::constant(grid, z0), &phi).unwrap();
        let gen = model.drift() + l.mapv(|x| z0 * x);
        let u = expm(&gen.mapv(|z| z * 1.5));
        for i in 0..3 {
            let expect: Complex64 = (0..3).map(|j| u[(i, j)] * phi[j]).sum();
            assert!((states[600][i] - expect).norm() < 1e-8);
        }
    }

    #[test]
    fn markov_guards() {
        let model = SystemModel::jaynes_cummings(0.0).unwrap();
        let grid = TimeGrid::new(1.0, 11).unwrap();
        assert!(markov_propagate(&model, &ComplexTrajectory::zeros(grid), &[ONE, ZERO]).is_err());
        let model = SystemModel::jaynes_cummings(200.0).unwrap();
        assert!(matches!(
            markov_propagate(&model, &ComplexTrajectory::zeros(grid), &[ONE, ZERO]),
            Err(Error::StepSizeTooLarge { .. })
        ));
        let bad = Array2::from_shape_fn((2, 2), |(i, j)| c(0.0, (i + 2 * j) as f64));
        assert!(matches!(
            SystemModel::new(bad, Array2::zeros((2, 2)), 1.0),
            Err(Error::NotHermitian(_))
        ));
    }

    fn two_mode() -> (DiscreteBathSpec, TimeGrid, LambdaSolution) {
        let spec = DiscreteBathSpec::from_real(&[0.5, -0.8], &[0.7, 0.5]).unwrap();
        let grid = TimeGrid::new(4.0, 81).unwrap();
        let fine = TimeGrid::new(4.0, 1601).unwrap();
        let lam_fine = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &fine).unwrap();
        let lam = LambdaSolution {
            grid,
            values: (0..81).map(|i| lam_fine.values[20 * i]).collect(),
            method: lam_fine.method,
        };
        (spec, grid, lam)
    }

    #[test]
    fn jc_excited_population_is_lambda_squared() {
        let (spec, grid, lam) = two_mode();
        let kind = ModelKind::JcNonMarkov {
            spec,
            lambda: lam.clone(),
        };
        let rho = mc_reduced_state(&kind, &[ONE, ZERO], 10_000, 3, &grid).unwrap();
        for n in 0..grid.n_points() {
            assert!((rho.matrices[n][(0, 0)].re - lam.values[n].norm_sqr()).abs() < 1e-12);
            let dn = (rho.norm_mean[n] - 1.0).abs();
            assert!(dn <= 4.0 * rho.norm_stderr[n] + 1e-12, "n={n}");
        }
        let again = mc_reduced_state(&kind, &[ONE, ZERO], 10_000, 3, &grid).unwrap();
        assert_eq!(rho.matrices, again.matrices);
    }

    #[test]
    fn single_trajectory_is_rank_one() {
        let (spec, grid, lam) = two_mode();
        let kind = ModelKind::JcNonMarkov { spec, lambda: lam };
        let rho = mc_reduced_state(&kind, &[c(0.6, 0.0), c(0.0, 0.8)], 1, 9, &grid).unwrap();
        let m = &rho.matrices[60];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        assert!(det.norm() < 1e-14);
        assert!((rho.trace(60).re - rho.norm_mean[60]).abs() < 1e-14);
    }

    #[test]
    fn markov_ensemble_matches_lindblad_decay() {
        let gamma = 1.0;
        let model = SystemModel::jaynes_cummings(gamma).unwrap();
        let grid = TimeGrid::new(2.0, 201).unwrap();
        let kind = ModelKind::Markov { model };
        let rho = mc_reduced_state(&kind, &[ONE, ZERO], 4000, 5, &grid).unwrap();
        for n in (0..201).step_by(20) {
            let t = grid.point(n);
            assert!((rho.matrices[n][(0, 0)].re - (-gamma * t).exp()).abs() < 1e-8);
            let d = rho.matrices[n][(1, 1)].re - (1.0 - (-gamma * t).exp());
            assert!(d.abs() <= 5.0 * rho.stderr[n][(1, 1)].re + 1e-12, "n={n}: {d}");
        }
    }

    #[test]
    fn shifted_form_single_mode() {
        let spec = DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap();
        let grid = TimeGrid::new(2.0, 401).unwrap();
        let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid).unwrap();
        let t_index = 200;
        for b in 0..10 {
            let f = sample_amplitudes(&spec, 77, b);
            let zeta = crate::sampler::trajectory_from_amplitudes(&spec, &f, &grid).unwrap();
            let r = shifted_form_residual(&spec, &lam, &zeta, [ONE, ZERO], t_index, 20_000, 5 + b).unwrap();
            assert!((r.memory[0].re - 1f64.sin()).abs() < 1e-5);
            assert!(r.max_sigma() < 5.0, "base {b}: {:?}", r);
        }
        let zeta = ComplexTrajectory::zeros(grid);
        let r = shifted_form_residual(&spec, &lam, &zeta, [ZERO, ONE], t_index, 100, 1).unwrap();
        assert_eq!(r.memory, [ZERO, ZERO]);
    }
}
