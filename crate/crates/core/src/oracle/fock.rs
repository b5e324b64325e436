use ndarray::Array2;
use num_complex::Complex64;

use crate::bath::DiscreteBathSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::adjoint;
use crate::unravel::SystemModel;

pub const MAX_TOTAL_DIM: usize = 20_000;
pub const DEFAULT_LEAK_TOL: f64 = 1e-6;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Product Fock space truncated at `n_max` quanta per mode. Total-space
/// index is `s * bath_dim + b`, with mode 0 the most significant digit of `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockTruncation {
    n_max: usize,
    mode_count: usize,
    sys_dim: usize,
    bath_dim: usize,
    /// `occupation[b * mode_count + k]`
    occupation: Vec<usize>,
    strides: Vec<usize>,
}

impl FockTruncation {
    pub fn new(n_max: usize, mode_count: usize, sys_dim: usize) -> Result<Self> {
        if n_max == 0 || mode_count == 0 || sys_dim == 0 {
            return Err(Error::InvalidArgument(
                "n_max, mode count and system dimension must be positive".into(),
            ));
        }
        let levels = n_max + 1;
        let bath_dim = (0..mode_count).try_fold(1usize, |acc, _| acc.checked_mul(levels));
        let total = bath_dim.and_then(|b| b.checked_mul(sys_dim));
        let (bath_dim, total) = match (bath_dim, total) {
            (Some(b), Some(t)) if t <= MAX_TOTAL_DIM => (b, t),
            (_, t) => return Err(Error::TruncationTooLarge(t.unwrap_or(usize::MAX))),
        };
        let _ = total;
        let mut strides = vec![1; mode_count];
        for k in (0..mode_count.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * levels;
        }
        let mut occupation = vec![0; bath_dim * mode_count];
        for b in 0..bath_dim {
            for k in 0..mode_count {
                occupation[b * mode_count + k] = (b / strides[k]) % levels;
            }
        }
        Ok(Self {
            n_max,
            mode_count,
            sys_dim,
            bath_dim,
            occupation,
            strides,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    pub fn bath_dim(&self) -> usize {
        self.bath_dim
    }

    pub fn total_dim(&self) -> usize {
        self.sys_dim * self.bath_dim
    }

    pub fn occupation(&self, b: usize, k: usize) -> usize {
        self.occupation[b * self.mode_count + k]
    }

    pub fn quanta(&self, b: usize) -> usize {
        (0..self.mode_count).map(|k| self.occupation(b, k)).sum()
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    /// Bath index with the given occupations.
    pub fn bath_index(&self, occupations: &[usize]) -> usize {
        occupations.iter().zip(&self.strides).map(|(n, s)| n * s).sum()
    }

    /// `phi ⊗ |vac>`.
    pub fn product_vacuum(&self, phi: &[Complex64]) -> Result<Vec<Complex64>> {
        if phi.len() != self.sys_dim {
            return Err(Error::LengthMismatch {
                expected: self.sys_dim,
                found: phi.len(),
            });
        }
        let mut v = vec![ZERO; self.total_dim()];
        for (s, p) in phi.iter().enumerate() {
            v[s * self.bath_dim] = *p;
        }
        Ok(v)
    }

    /// Total-space indices whose bath part carries at most `n_max - 1` quanta.
    pub fn restricted_indices(&self) -> Vec<usize> {
        (0..self.total_dim())
            .filter(|&i| self.quanta(i % self.bath_dim) < self.n_max)
            .collect()
    }
}

/// Truncated `Z(t) = sum_k g_k e^{i(omega_k - omega_0) t} a_k^†` on the bath space.
pub fn z_matrix(spec: &DiscreteBathSpec, trunc: &FockTruncation, t: f64) -> Result<Array2<Complex64>> {
    check_modes(spec, trunc)?;
    let bd = trunc.bath_dim();
    let mut z = Array2::zeros((bd, bd));
    for b in 0..bd {
        for k in 0..trunc.mode_count() {
            let n = trunc.occupation(b, k);
            if n < trunc.n_max() {
                let zk = spec.couplings()[k] * Complex64::from_polar(1.0, spec.shifted_frequency(k) * t);
                z[(b + trunc.stride(k), b)] += zk * ((n + 1) as f64).sqrt();
            }
        }
    }
    Ok(z)
}

fn check_modes(spec: &DiscreteBathSpec, trunc: &FockTruncation) -> Result<()> {
    if spec.mode_count() != trunc.mode_count() {
        return Err(Error::LengthMismatch {
            expected: trunc.mode_count(),
            found: spec.mode_count(),
        });
    }
    Ok(())
}

/// Matrix-free `-i Upsilon_t = -i H ⊗ I + L ⊗ Z(t) - L^† ⊗ Z(t)^†`.
#[derive(Debug, Clone)]
pub struct InteractionGenerator {
    pub trunc: FockTruncation,
    minus_i_h: Array2<Complex64>,
    l: Array2<Complex64>,
    l_dag: Array2<Complex64>,
    couplings: Vec<Complex64>,
    shifted: Vec<f64>,
}

/// Generator of the interaction-picture total dynamics.
pub fn build_interaction_generator(
    model: &SystemModel,
    spec: &DiscreteBathSpec,
    trunc: &FockTruncation,
) -> Result<InteractionGenerator> {
    check_modes(spec, trunc)?;
    if model.dim() != trunc.sys_dim() {
        return Err(Error::LengthMismatch {
            expected: trunc.sys_dim(),
            found: model.dim(),
        });
    }
    Ok(InteractionGenerator {
        trunc: trunc.clone(),
        minus_i_h: model.hamiltonian.mapv(|h| -Complex64::i() * h),
        l: model.coupling.clone(),
        l_dag: adjoint(&model.coupling),
        couplings: spec.couplings().to_vec(),
        shifted: (0..spec.mode_count()).map(|k| spec.shifted_frequency(k)).collect(),
    })
}

impl InteractionGenerator {
    fn z_coefficients(&self, t: f64) -> Vec<Complex64> {
        self.couplings
            .iter()
            .zip(&self.shifted)
            .map(|(g, w)| g * Complex64::from_polar(1.0, w * t))
            .collect()
    }

    /// `y = -i Upsilon_t x`; returns the norm of the part of `L ⊗ Z(t) x` pushed
    /// above the truncation.
    pub fn apply(&self, t: f64, x: &[Complex64], y: &mut [Complex64]) -> f64 {
        let tr = &self.trunc;
        let (d, bd, m) = (tr.sys_dim(), tr.bath_dim(), tr.mode_count());
        let z = self.z_coefficients(t);
        let mut zx = vec![ZERO; d * bd];
        let mut zdx = vec![ZERO; d * bd];
        for s in 0..d {
            let row = &x[s * bd..(s + 1) * bd];
            for b in 0..bd {
                let v = row[b];
                if v == ZERO {
                    continue;
                }
                for k in 0..m {
                    let n = tr.occupation(b, k);
                    if n < tr.n_max() {
                        zx[s * bd + b + tr.stride(k)] += z[k] * ((n + 1) as f64).sqrt() * v;
                    }
                    if n > 0 {
                        zdx[s * bd + b - tr.stride(k)] += z[k].conj() * (n as f64).sqrt() * v;
                    }
                }
            }
        }
        let mut flux = 0.0;
        let top = ((tr.n_max() + 1) as f64).sqrt();
        for s in 0..d {
            for b in 0..bd {
                let mut acc = ZERO;
                let mut lx = ZERO;
                for r in 0..d {
                    acc += self.minus_i_h[(s, r)] * x[r * bd + b] + self.l[(s, r)] * zx[r * bd + b]
                        - self.l_dag[(s, r)] * zdx[r * bd + b];
                    lx += self.l[(s, r)] * x[r * bd + b];
                }
                y[s * bd + b] = acc;
                if lx != ZERO {
                    for k in 0..m {
                        if tr.occupation(b, k) == tr.n_max() {
                            flux += (z[k] * top * lx).norm_sqr();
                        }
                    }
                }
            }
        }
        flux.sqrt()
    }

    pub fn to_dense(&self, t: f64) -> Array2<Complex64> {
        let n = self.trunc.total_dim();
        let mut a = Array2::zeros((n, n));
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            self.apply(t, &e, &mut col);
            for i in 0..n {
                a[(i, j)] = col[i];
            }
            e[j] = ZERO;
        }
        a
    }

    /// One RK4 step from `t` of length `h`; returns the midpoint-rule flux integral.
    pub(crate) fn rk4_step(&self, t: f64, h: f64, psi: &mut [Complex64], work: &mut Rk4Work) -> f64 {
        let n = psi.len();
        let f1 = self.apply(t, psi, &mut work.k1);
        for i in 0..n {
            work.tmp[i] = psi[i] + 0.5 * h * work.k1[i];
        }
        let f2 = self.apply(t + 0.5 * h, &work.tmp, &mut work.k2);
        for i in 0..n {
            work.tmp[i] = psi[i] + 0.5 * h * work.k2[i];
        }
        let f3 = self.apply(t + 0.5 * h, &work.tmp, &mut work.k3);
        for i in 0..n {
            work.tmp[i] = psi[i] + h * work.k3[i];
        }
        let f4 = self.apply(t + h, &work.tmp, &mut work.k4);
        for i in 0..n {
            psi[i] += h / 6.0 * (work.k1[i] + 2.0 * work.k2[i] + 2.0 * work.k3[i] + work.k4[i]);
        }
        h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    }
}

pub(crate) struct Rk4Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Work {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![ZERO; n],
            k2: vec![ZERO; n],
            k3: vec![ZERO; n],
            k4: vec![ZERO; n],
            tmp: vec![ZERO; n],
        }
    }
}

/// Total state at every grid node with the truncation leakage estimate.
#[derive(Debug, Clone)]
pub struct TotalEvolution {
    pub grid: TimeGrid,
    pub trunc: FockTruncation,
    pub states: Vec<Vec<Complex64>>,
    /// `max(1 - ||Psi||^2, (∫ ||flux above n_max|| dt)^2)` up to each node.
    pub leakage: Vec<f64>,
}

impl TotalEvolution {
    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().copied().fold(0.0, f64::max)
    }
}

pub fn propagate_total_unchecked(
    model: &SystemModel,
    spec: &DiscreteBathSpec,
    trunc: &FockTruncation,
    phi: &[Complex64],
    grid: &TimeGrid,
) -> Result<TotalEvolution> {
    let gen = build_interaction_generator(model, spec, trunc)?;
    let mut psi = trunc.product_vacuum(phi)?;
    let norm0: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mut work = Rk4Work::new(psi.len());
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_points());
    let mut leakage = Vec::with_capacity(grid.n_points());
    let mut flux = 0.0;
    states.push(psi.clone());
    leakage.push(0.0);
    for i in 0..grid.n_points() - 1 {
        flux += gen.rk4_step(grid.point(i), dt, &mut psi, &mut work);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        leakage.push((norm0 - norm).max(flux * flux));
        states.push(psi.clone());
    }
    Ok(TotalEvolution {
        grid: *grid,
        trunc: trunc.clone(),
        states,
        leakage,
    })
}

/// Propagate `phi ⊗ |vac>`; fails when leakage exceeds `leak_tol`.
pub fn propagate_total(
    model: &SystemModel,
    spec: &DiscreteBathSpec,
    trunc: &FockTruncation,
    phi: &[Complex64],
    grid: &TimeGrid,
    leak_tol: f64,
) -> Result<TotalEvolution> {
    let evo = propagate_total_unchecked(model, spec, trunc, phi, grid)?;
    let leak = evo.max_leakage();
    if leak > leak_tol {
        return Err(Error::Leakage(leak));
    }
    Ok(evo)
}

/// Time-ordered propagators `U_{t_i}` on the full truncated space.
pub fn propagate_unitary(gen: &InteractionGenerator, grid: &TimeGrid) -> Result<Vec<Array2<Complex64>>> {
    const MAX_DENSE: usize = 1024;
    let n = gen.trunc.total_dim();
    if n > MAX_DENSE {
        return Err(Error::TruncationTooLarge(n));
    }
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let mut work = Rk4Work::new(n);
    let to_matrix = |cols: &[Vec<Complex64>]| Array2::from_shape_fn((n, n), |(i, j)| cols[j][i]);
    let mut out = Vec::with_capacity(grid.n_points());
    out.push(to_matrix(&cols));
    for i in 0..grid.n_points() - 1 {
        for c in cols.iter_mut() {
            gen.rk4_step(grid.point(i), grid.dt(), c, &mut work);
        }
        out.push(to_matrix(&cols));
    }
    Ok(out)
}

/// Partial trace over the bath: `rho_{s s'} = sum_b psi_{s b} psi_{s' b}^*`.
pub fn reduced_density(state: &[Complex64], trunc: &FockTruncation) -> Result<Array2<Complex64>> {
    if state.len() != trunc.total_dim() {
        return Err(Error::LengthMismatch {
            expected: trunc.total_dim(),
            found: state.len(),
        });
    }
    let (d, bd) = (trunc.sys_dim(), trunc.bath_dim());
    Ok(Array2::from_shape_fn((d, d), |(s, r)| {
        (0..bd).map(|b| state[s * bd + b] * state[r * bd + b].conj()).sum()
    }))
}

/// Amplitudes of the single-excitation sector for `L = |g><e|`.
#[derive(Debug, Clone)]
pub struct SectorSolution {
    pub grid: TimeGrid,
    pub excited: Vec<Complex64>,
    /// `modes[i][k]` is the amplitude of `|g, 1_k>` at `t_i`.
    pub modes: Vec<Vec<Complex64>>,
}

fn sector_run(spec: &DiscreteBathSpec, grid: &TimeGrid, sub: usize) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
    let m = spec.mode_count();
    let g = spec.couplings();
    let w: Vec<f64> = (0..m).map(|k| spec.shifted_frequency(k)).collect();
    let rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| {
        let mut de = ZERO;
        for k in 0..m {
            let ph = Complex64::from_polar(1.0, w[k] * t);
            de -= g[k].conj() * ph.conj() * y[1 + k];
            out[1 + k] = g[k] * ph * y[0];
        }
        out[0] = de;
    };
    let n = m + 1;
    let mut y = vec![ZERO; n];
    y[0] = Complex64::new(1.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
        vec![ZERO; n],
    );
    let h = grid.dt() / sub as f64;
    let mut excited = vec![y[0]];
    let mut modes = vec![y[1..].to_vec()];
    for i in 0..grid.n_points() - 1 {
        for s in 0..sub {
            let t = grid.point(i) + s as f64 * h;
            rhs(t, &y, &mut k1);
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * h * k1[j];
            }
            rhs(t + 0.5 * h, &tmp, &mut k2);
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * h * k2[j];
            }
            rhs(t + 0.5 * h, &tmp, &mut k3);
            for j in 0..n {
                tmp[j] = y[j] + h * k3[j];
            }
            rhs(t + h, &tmp, &mut k4);
            for j in 0..n {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        excited.push(y[0]);
        modes.push(y[1..].to_vec());
    }
    (excited, modes)
}

/// Exact sector ODE `c_e' = -sum_k g_k^* e^{-i w_k t} c_k`, `c_k' = g_k e^{i w_k t} c_e`.
pub fn single_excitation_propagate(spec: &DiscreteBathSpec, grid: &TimeGrid) -> Result<SectorSolution> {
    let (excited, modes) = sector_run(spec, grid, 1);
    let (fine, _) = sector_run(spec, grid, 2);
    let change = (excited[excited.len() - 1] - fine[fine.len() - 1]).norm();
    if change > 10.0 * crate::jc::DEFAULT_STEP_TOL {
        return Err(Error::StepSizeTooLarge { change });
    }
    Ok(SectorSolution {
        grid: *grid,
        excited,
        modes,
    })
}

/// Truncated exponential vector `e^f = ⊗_k sum_{n <= n_max} f_k^n / sqrt(n!) |n>`.
pub fn exponential_vector(f: &[Complex64], trunc: &FockTruncation) -> Result<Vec<Complex64>> {
    if f.len() != trunc.mode_count() {
        return Err(Error::LengthMismatch {
            expected: trunc.mode_count(),
            found: f.len(),
        });
    }
    let levels = trunc.n_max() + 1;
    let per_mode: Vec<Vec<Complex64>> = f
        .iter()
        .map(|fk| {
            let mut v = Vec::with_capacity(levels);
            let mut term = Complex64::new(1.0, 0.0);
            for n in 0..levels {
                if n > 0 {
                    term *= fk / (n as f64).sqrt();
                }
                v.push(term);
            }
            v
        })
        .collect();
    Ok((0..trunc.bath_dim())
        .map(|b| {
            (0..trunc.mode_count())
                .map(|k| per_mode[k][trunc.occupation(b, k)])
                .product()
        })
        .collect())
}

/// `<e^f | Psi>` as a system vector; requires `||f||^2 <= n_max / 4`.
pub fn bargmann_project(state: &[Complex64], f: &[Complex64], trunc: &FockTruncation) -> Result<Vec<Complex64>> {
    let norm_sq: f64 = f.iter().map(|z| z.norm_sqr()).sum();
    if norm_sq > trunc.n_max() as f64 / 4.0 {
        return Err(Error::AmplitudeTooLarge {
            norm_sq,
            n_max: trunc.n_max(),
        });
    }
    if state.len() != trunc.total_dim() {
        return Err(Error::LengthMismatch {
            expected: trunc.total_dim(),
            found: state.len(),
        });
    }
    let ef = exponential_vector(f, trunc)?;
    let bd = trunc.bath_dim();
    Ok((0..trunc.sys_dim())
        .map(|s| (0..bd).map(|b| ef[b].conj() * state[s * bd + b]).sum())
        .collect())
}
