use ndarray::{s, Array2};
use num_complex::Complex64;

use super::fock::{build_interaction_generator, exponential_vector, propagate_unitary, z_matrix, FockTruncation};
use crate::bath::DiscreteBathSpec;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{adjoint, spectral_norm};
use crate::rng::{Domain, GaussianStream};
use crate::stats;
use crate::unravel::SystemModel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `<vac| Z_t^† Z_s |vac>`, `<Z_t Z_s>`, `<Z_t^† Z_s^†>`, `<Z_t Z_s^†>` in that order.
pub fn two_point_vacuum(spec: &DiscreteBathSpec, trunc: &FockTruncation, t: f64, s: f64) -> Result<[Complex64; 4]> {
    let zt = z_matrix(spec, trunc, t)?;
    let zs = z_matrix(spec, trunc, s)?;
    let (ztd, zsd) = (adjoint(&zt), adjoint(&zs));
    let vac = |m: Array2<Complex64>| m[(0, 0)];
    Ok([
        vac(ztd.dot(&zs)),
        vac(zt.dot(&zs)),
        vac(ztd.dot(&zsd)),
        vac(zt.dot(&zsd)),
    ])
}

fn restricted_bath(trunc: &FockTruncation) -> Vec<usize> {
    (0..trunc.bath_dim())
        .filter(|&b| trunc.quanta(b) < trunc.n_max())
        .collect()
}

fn columns(m: &Array2<Complex64>, idx: &[usize]) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), idx.len()), |(i, j)| m[(i, idx[j])])
}

fn block(m: &Array2<Complex64>, idx: &[usize]) -> Array2<Complex64> {
    Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| m[(idx[i], idx[j])])
}

/// `||([Z_t^†, Z_s] - K(t,s) I) P||` with `P` onto bath states of at most `n_max - 1` quanta.
pub fn ccr_residual(spec: &DiscreteBathSpec, trunc: &FockTruncation, t: f64, s: f64) -> Result<f64> {
    let zt = z_matrix(spec, trunc, t)?;
    let zs = z_matrix(spec, trunc, s)?;
    let ztd = adjoint(&zt);
    let mut c = ztd.dot(&zs) - zs.dot(&ztd);
    let k = spec.kernel(t, s);
    for i in 0..c.nrows() {
        c[(i, i)] -= k;
    }
    spectral_norm(&columns(&c, &restricted_bath(trunc)))
}

fn lift_system(x: &Array2<Complex64>, trunc: &FockTruncation) -> Array2<Complex64> {
    let bd = trunc.bath_dim();
    let n = trunc.total_dim();
    let mut out = Array2::zeros((n, n));
    for ((s, r), v) in x.indexed_iter() {
        if *v != ZERO {
            for b in 0..bd {
                out[(s * bd + b, r * bd + b)] = *v;
            }
        }
    }
    out
}

fn lift_bath(z: &Array2<Complex64>, trunc: &FockTruncation) -> Array2<Complex64> {
    let bd = trunc.bath_dim();
    let n = trunc.total_dim();
    let mut out = Array2::zeros((n, n));
    for s in 0..trunc.sys_dim() {
        out.slice_mut(s![s * bd..(s + 1) * bd, s * bd..(s + 1) * bd]).assign(z);
    }
    out
}

fn commutator(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    a.dot(b) - b.dot(a)
}

/// Heisenberg-picture operators `j_t(X) = U_t^† (X ⊗ I) U_t` on a time grid.
#[derive(Debug, Clone)]
pub struct OperatorHistory {
    pub grid: TimeGrid,
    pub trunc: FockTruncation,
    pub model: SystemModel,
    pub spec: DiscreteBathSpec,
    pub unitaries: Vec<Array2<Complex64>>,
}

impl OperatorHistory {
    pub fn new(model: &SystemModel, spec: &DiscreteBathSpec, trunc: &FockTruncation, grid: &TimeGrid) -> Result<Self> {
        let generator = build_interaction_generator(model, spec, trunc)?;
        Ok(Self {
            grid: *grid,
            trunc: trunc.clone(),
            model: model.clone(),
            spec: spec.clone(),
            unitaries: propagate_unitary(&generator, grid)?,
        })
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.grid.n_points() {
            return Err(Error::InvalidArgument(format!("time index {n} outside grid")));
        }
        Ok(())
    }

    fn check_system(&self, x: &Array2<Complex64>) -> Result<()> {
        let d = self.trunc.sys_dim();
        if x.dim() != (d, d) {
            return Err(Error::InvalidModel(format!("system operator must be {d}x{d}")));
        }
        Ok(())
    }

    fn heisenberg(&self, n: usize, op: &Array2<Complex64>) -> Array2<Complex64> {
        let u = &self.unitaries[n];
        adjoint(u).dot(op).dot(u)
    }

    /// `j_{t_n}(X)` on the total space.
    pub fn j(&self, n: usize, x: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.check_index(n)?;
        self.check_system(x)?;
        Ok(self.heisenberg(n, &lift_system(x, &self.trunc)))
    }

    /// `Z_out(t_n)^†`.
    pub fn z_out_dag(&self, n: usize) -> Result<Array2<Complex64>> {
        self.check_index(n)?;
        let zd = adjoint(&z_matrix(&self.spec, &self.trunc, self.grid.point(n))?);
        Ok(self.heisenberg(n, &lift_bath(&zd, &self.trunc)))
    }

    /// `||(Z_out^† - Z_in^† - ∫_0^t K(t,tau) j_tau(L) dtau) P||` at node `n`.
    pub fn io_residual(&self, n: usize) -> Result<f64> {
        let tn = self.grid.point(n);
        let zin = lift_bath(&adjoint(&z_matrix(&self.spec, &self.trunc, tn)?), &self.trunc);
        let mut d = self.z_out_dag(n)? - zin;
        let l = lift_system(&self.model.coupling, &self.trunc);
        let dt = self.grid.dt();
        for j in 0..=n {
            if n == 0 {
                break;
            }
            let w = if j == 0 || j == n { 0.5 * dt } else { dt };
            let k = self.spec.kernel(tn, self.grid.point(j));
            d = d - self.heisenberg(j, &l).mapv(|v| v * k * w);
        }
        spectral_norm(&columns(&d, &self.trunc.restricted_indices()))
    }

    /// Largest of `||[j_t(X), Z_out^†] P||` and `||P [j_t(X), Z_out] P||`.
    pub fn equal_time_commutator(&self, n: usize, x: &Array2<Complex64>) -> Result<f64> {
        let jx = self.j(n, x)?;
        let zd = self.z_out_dag(n)?;
        let z = adjoint(&zd);
        let idx = self.trunc.restricted_indices();
        let a = spectral_norm(&columns(&commutator(&jx, &zd), &idx))?;
        let b = spectral_norm(&block(&commutator(&jx, &z), &idx))?;
        Ok(a.max(b))
    }

    /// Pointwise `|d<j_t(X)>/dt - rhs(t)|` at interior nodes for `phi ⊗ vac`, where
    /// `rhs = <j_t(-i[X,H])> + ∫ K(t,tau) <j_t([L^†,X]) j_tau(L)> + ∫ K(t,tau)^* <j_tau(L^†) j_t([X,L])>`.
    pub fn ehrenfest_residual(&self, x: &Array2<Complex64>, phi: &[Complex64]) -> Result<Vec<f64>> {
        self.check_system(x)?;
        let n_pts = self.grid.n_points();
        if n_pts < 3 {
            return Err(Error::InvalidGrid("need at least three nodes".into()));
        }
        let psi0 = self.trunc.product_vacuum(phi)?;
        let psi0 = ndarray::Array1::from_vec(psi0);
        let h = &self.model.hamiltonian;
        let l = &self.model.coupling;
        let ld = adjoint(l);
        let i = Complex64::i();
        let x_h = commutator(x, h).mapv(|v| -i * v);
        let ldx = commutator(&ld, x);
        let xl = commutator(x, l);
        let tr = &self.trunc;
        let (x_t, x_h_t, ldx_t, xl_t, l_t) = (
            lift_system(x, tr),
            lift_system(&x_h, tr),
            lift_system(&ldx, tr),
            lift_system(&xl, tr),
            lift_system(l, tr),
        );
        let inner = |a: &ndarray::Array1<Complex64>, b: &ndarray::Array1<Complex64>| -> Complex64 {
            a.iter().zip(b).map(|(p, q)| p.conj() * q).sum()
        };
        // v_tau = j_tau(L) psi0
        let v: Vec<ndarray::Array1<Complex64>> = (0..n_pts).map(|j| self.heisenberg(j, &l_t).dot(&psi0)).collect();
        let expect = |n: usize, op: &Array2<Complex64>| inner(&psi0, &self.heisenberg(n, op).dot(&psi0));
        let dt = self.grid.dt();
        let mut out = Vec::with_capacity(n_pts - 2);
        for n in 1..n_pts - 1 {
            let lhs = (expect(n + 1, &x_t) - expect(n - 1, &x_t)) / (2.0 * dt);
            let tn = self.grid.point(n);
            // <j_t([L^†,X]) v> = <j_t([L^†,X]^†) psi0 | v>
            let a = self.heisenberg(n, &adjoint(&ldx_t)).dot(&psi0);
            let w = self.heisenberg(n, &xl_t).dot(&psi0);
            let mut mem = ZERO;
            for j in 0..=n {
                let wt = if j == 0 || j == n { 0.5 * dt } else { dt };
                let k = self.spec.kernel(tn, self.grid.point(j));
                mem += wt * (k * inner(&a, &v[j]) + k.conj() * inner(&v[j], &w));
            }
            let rhs = expect(n, &x_h_t) + mem;
            out.push((lhs - rhs).norm());
        }
        Ok(out)
    }
}

/// Monte-Carlo estimate of `E_f[<Phi|e^f><e^f|Psi>]` over unit circular Gaussian `f`,
/// returning the mean and the `re + i im` packed standard error.
pub fn resolution_of_identity_mc(
    phi: &[Complex64],
    psi: &[Complex64],
    trunc: &FockTruncation,
    n_samples: usize,
    seed: u64,
) -> Result<(Complex64, Complex64)> {
    let bd = trunc.bath_dim();
    if phi.len() != bd || psi.len() != bd {
        return Err(Error::LengthMismatch {
            expected: bd,
            found: phi.len().max(psi.len()),
        });
    }
    let m = stats::accumulate(n_samples, 2, |r, buf| {
        let mut f = vec![ZERO; trunc.mode_count()];
        GaussianStream::new(seed, Domain::Aux, r as u64).fill(&mut f);
        let ef = exponential_vector(&f, trunc)?;
        let left: Complex64 = phi.iter().zip(&ef).map(|(p, e)| p.conj() * e).sum();
        let right: Complex64 = ef.iter().zip(psi).map(|(e, p)| e.conj() * p).sum();
        let v = left * right;
        buf[0] = v.re;
        buf[1] = v.im;
        Ok(())
    })?;
    let (mean, se) = (m.mean(), m.stderr());
    Ok((Complex64::new(mean[0], mean[1]), Complex64::new(se[0], se[1])))
}
