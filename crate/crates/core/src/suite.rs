//! The end-to-end acceptance checks, shared by `qsd verify` and the
//! `acceptance` test target.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::bath::{windowed_parseval, BrownianKernel, DiscreteBathSpec, KernelHandle};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::jc::{
    ds_residual, dyson_partial_sum, gateaux_derivative, jc_state, markov_lambda, norm_balance, solve_lambda_volterra,
};
use crate::mercer::{embed_feature, mercer_decompose, representer, rkhs_inner, RkhsElement, DEFAULT_TRUNC_TOL};
use crate::oracle::{
    bargmann_project, propagate_total, reduced_density, single_excitation_propagate, two_point_vacuum, FockTruncation,
    OperatorHistory, DEFAULT_LEAK_TOL,
};
use crate::rng::{Domain, GaussianStream};
use crate::sampler::{sample_amplitudes, trajectory_from_amplitudes, ComplexTrajectory, TrajectoryMap};
use crate::scenario::{bundled, BUNDLED};
use crate::unravel::{markov_propagate, mc_reduced_state, shifted_form_residual, ModelKind, SystemModel};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Quadrature accuracy folded into Monte-Carlo standard errors when an
/// estimator has zero sampling variance.
pub const NUMERICAL_FLOOR: f64 = 1e-7;

pub const CRITERIA: [(u32, &str); 11] = [
    (1, "mercer_brownian"),
    (2, "markov_relaxation"),
    (3, "single_resonant_mode"),
    (4, "exponential_kernel"),
    (5, "bargmann_cross_validation"),
    (6, "unravelling_statistics"),
    (7, "rkhs_suite"),
    (8, "operator_identities"),
    (9, "trajectory_equation"),
    (10, "shifted_form"),
    (11, "norm_conservation"),
];

/// One measured quantity with its pinned tolerance; passes when `value <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Part {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    /// Wall-clock parts are excluded from the deterministic CSV report.
    pub timing: bool,
}

impl Part {
    fn new(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            value,
            tolerance,
            timing: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub parts: Vec<Part>,
    pub error: Option<String>,
    pub elapsed_s: f64,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.parts.is_empty() && self.parts.iter().all(Part::passed)
    }

    /// `PASS|FAIL <id> <name>` followed by each measured part.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("{verdict} {:>2} {}", self.id, self.name);
        if let Some(e) = &self.error {
            s.push_str(&format!(" error: {e}"));
        }
        for p in &self.parts {
            let mark = if p.passed() { "" } else { " !" };
            s.push_str(&format!(" | {} {:.3e} <= {:.1e}{mark}", p.label, p.value, p.tolerance));
        }
        s
    }
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn random_normalized(seed: u64, index: u64) -> [Complex64; 2] {
    let mut s = GaussianStream::new(seed, Domain::Aux, index);
    let (a, b) = (s.complex_normal(), s.complex_normal());
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    [a / n, b / n]
}

fn jc() -> SystemModel {
    SystemModel::jaynes_cummings(0.0).expect("valid model")
}

fn mercer_brownian(_seed: u64) -> Result<Vec<Part>> {
    let grid = TimeGrid::new(1.0, 2000)?;
    let basis = mercer_decompose(&BrownianKernel, &grid, DEFAULT_TRUNC_TOL)?;
    let pts = grid.points();
    let w = grid.weights();
    let mut parts = Vec::new();
    let mut eig_err = 0.0f64;
    let mut fn_err = 0.0f64;
    for n in 0..5 {
        let nu = PI * (n as f64 + 0.5);
        eig_err = eig_err.max((basis.eigenvalues()[n] - 1.0 / (nu * nu)).abs() * nu * nu);
        let reference: Vec<f64> = pts.iter().map(|t| 2f64.sqrt() * (nu * t).sin()).collect();
        let overlap: Complex64 = (0..pts.len())
            .map(|i| w[i] * reference[i] * basis.eigenfunctions()[(n, i)])
            .sum();
        let phase = Complex64::from_polar(1.0, -overlap.arg());
        let dev = max_abs((0..pts.len()).map(|i| (basis.eigenfunctions()[(n, i)] * phase - reference[i]).norm()));
        fn_err = fn_err.max(dev);
    }
    parts.push(Part::new("eigenvalue_rel_err", eig_err, 1e-3));
    parts.push(Part::new("eigenfunction_max_dev", fn_err, 1e-2));
    Ok(parts)
}

fn markov_relaxation(_seed: u64) -> Result<Vec<Part>> {
    let rate = 1.5;
    let grid = TimeGrid::new(6.0, 3001)?;
    let exact = |t: f64| (-0.5 * rate * t).exp();
    let closed = markov_lambda(rate, &grid);
    let closed_err = max_abs(
        grid.points()
            .iter()
            .zip(&closed.values)
            .map(|(t, l)| (l - exact(*t)).norm()),
    );
    let model = SystemModel::jaynes_cummings(rate)?;
    let states = markov_propagate(&model, &ComplexTrajectory::zeros(grid), &[ONE, ZERO])?;
    let prop_err = max_abs(
        grid.points()
            .iter()
            .zip(&states)
            .map(|(t, s)| (s[0] - exact(*t)).norm()),
    );
    let short = TimeGrid::new(2.0 / rate, 1001)?;
    let dyson = dyson_partial_sum(&KernelHandle::markov(rate)?, &short, 20)?;
    let dyson_err = max_abs(
        short
            .points()
            .iter()
            .zip(&dyson.values)
            .map(|(t, l)| (l - exact(*t)).norm()),
    );
    Ok(vec![
        Part::new("closed_form_err", closed_err, 0.0),
        Part::new("propagate_err", prop_err, 1e-8),
        Part::new("dyson20_err", dyson_err, 1e-8),
    ])
}

fn single_resonant_mode(_seed: u64) -> Result<Vec<Part>> {
    let g = 1.3;
    let spec = DiscreteBathSpec::from_real(&[0.7], &[g])?.with_detuning(0.7);
    let handle = KernelHandle::Discrete(spec.clone());
    let grid = TimeGrid::new(2.0 * PI / g, 8001)?;
    let lam = solve_lambda_volterra(&handle, &grid)?;
    let vol_err = max_abs(
        grid.points()
            .iter()
            .zip(&lam.values)
            .map(|(t, l)| (l - (g * t).cos()).norm()),
    );
    let sector = single_excitation_propagate(&spec, &grid)?;
    let sec_err = max_abs(sector.excited.iter().zip(&lam.values).map(|(a, b)| (a - b).norm()));
    let unit = TimeGrid::new(1.0, 2001)?;
    let dyson = dyson_partial_sum(&handle, &unit, 8)?;
    let dyson_err = max_abs(
        unit.points()
            .iter()
            .zip(&dyson.values)
            .map(|(t, l)| (l - (g * t).cos()).norm()),
    );
    Ok(vec![
        Part::new("volterra_vs_cos", vol_err, 1e-6),
        Part::new("sector_vs_volterra", sec_err, 1e-6),
        Part::new("dyson8_vs_cos", dyson_err, 1e-6),
    ])
}

fn exponential_kernel(_seed: u64) -> Result<Vec<Part>> {
    let (a, kappa) = (2.0, 0.5);
    let handle = KernelHandle::exponential(a, kappa)?;
    let grid = TimeGrid::new(10.0 / kappa, 8001)?;
    let lam = solve_lambda_volterra(&handle, &grid)?;
    // lambda'' + kappa lambda' + a lambda = 0, lambda(0) = 1, lambda'(0) = 0
    let disc = Complex64::new(kappa * kappa - 4.0 * a, 0.0).sqrt();
    let (r1, r2) = (0.5 * (-kappa + disc), 0.5 * (-kappa - disc));
    let exact = |t: f64| ((r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1)).re;
    let err = max_abs(
        grid.points()
            .iter()
            .zip(&lam.values)
            .map(|(t, l)| (l - exact(*t)).norm()),
    );
    Ok(vec![Part::new("volterra_vs_oscillator", err, 1e-5)])
}

fn bargmann_cross_validation(seed: u64) -> Result<Vec<Part>> {
    let spec = DiscreteBathSpec::new(vec![1.4], vec![Complex64::new(0.8, 0.5)], 1.0)?;
    let grid = TimeGrid::new(4.0, 4001)?;
    let trunc = FockTruncation::new(4, 1, 2)?;
    let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid)?;
    let map = TrajectoryMap::new(&spec, &grid);
    let phi = random_normalized(seed, 500);
    let evo = propagate_total(&jc(), &spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL)?;
    let mut stream = GaussianStream::new(seed, Domain::Aux, 501);
    let mut worst = 0.0f64;
    for j in 0..10 {
        let f = vec![0.5 * stream.complex_normal()];
        let zeta = map.trajectory(&f)?;
        let u = stream.complex_normal().re.abs().fract();
        let n = 1 + ((grid.n_points() - 2) as f64 * u) as usize;
        let n = if j == 0 { grid.n_points() - 1 } else { n };
        let proj = bargmann_project(&evo.states[n], &f, &trunc)?;
        let exact = jc_state(phi, &lam, &zeta, n)?;
        worst = worst.max((proj[0] - exact[0]).norm()).max((proj[1] - exact[1]).norm());
    }
    Ok(vec![Part::new("projection_vs_trajectory_state", worst, 1e-6)])
}

fn unravelling_statistics(seed: u64) -> Result<Vec<Part>> {
    let sc = bundled("jc_two_mode").expect("bundled");
    let spec = sc.discrete().expect("discrete bath").clone();
    let grid = sc.grid;
    let lam = solve_lambda_volterra(&sc.kernel, &grid)?;
    let phi = [ONE, ZERO];
    let series = mc_reduced_state(
        &ModelKind::JcNonMarkov {
            spec: spec.clone(),
            lambda: lam.clone(),
        },
        &phi,
        10_000,
        seed,
        &grid,
    )?;
    let trunc = FockTruncation::new(1, spec.mode_count(), 2)?;
    let evo = propagate_total(&jc(), &spec, &trunc, &phi, &grid, DEFAULT_LEAK_TOL)?;
    let floor = NUMERICAL_FLOOR * NUMERICAL_FLOOR;
    let mut rho_sigma = 0.0f64;
    let mut ee_sigma = 0.0f64;
    let mut norm_sigma = 0.0f64;
    for n in 0..grid.n_points() {
        let exact = reduced_density(&evo.states[n], &trunc)?;
        for i in 0..2 {
            for j in 0..2 {
                let se = series.combined_stderr(n, i, j);
                let z = (series.matrices[n][(i, j)] - exact[(i, j)]).norm() / (se * se + floor).sqrt();
                rho_sigma = rho_sigma.max(z);
            }
        }
        let se = series.combined_stderr(n, 0, 0);
        ee_sigma =
            ee_sigma.max((series.matrices[n][(0, 0)].re - lam.values[n].norm_sqr()).abs() / (se * se + floor).sqrt());
        let se = series.norm_stderr[n];
        norm_sigma = norm_sigma.max((series.norm_mean[n] - 1.0).abs() / (se * se + floor).sqrt());
    }
    Ok(vec![
        Part::new("rho_vs_oracle_sigma", rho_sigma, 5.0),
        Part::new("rho_ee_vs_lambda_sigma", ee_sigma, 4.0),
        Part::new("norm_sigma", norm_sigma, 4.0),
    ])
}

fn rkhs_suite(seed: u64) -> Result<Vec<Part>> {
    let spec = DiscreteBathSpec::new(
        vec![0.3, 1.1, 2.0],
        vec![
            Complex64::new(0.7, 0.1),
            Complex64::new(0.4, -0.3),
            Complex64::new(0.5, 0.0),
        ],
        0.8,
    )?;
    let grid = TimeGrid::new(6.0, 1201)?;
    let basis = mercer_decompose(&KernelHandle::Discrete(spec.clone()), &grid, DEFAULT_TRUNC_TOL)?;
    let mut stream = GaussianStream::new(seed, Domain::Aux, 700);
    let pts = grid.points();
    let pick = |s: &mut GaussianStream| (s.complex_normal().re.abs().fract() * (pts.len() - 1) as f64) as usize;

    let mut repro = 0.0f64;
    for _ in 0..20 {
        let u = RkhsElement {
            coefficients: (0..basis.rank()).map(|_| stream.complex_normal()).collect(),
        };
        let t = pts[pick(&mut stream)];
        let lhs = rkhs_inner(&representer(&basis, t)?, &u, &basis)?;
        repro = repro.max((lhs - u.eval(&basis, t)?).norm());
    }

    let mut iso = 0.0f64;
    for _ in 0..50 {
        let f1: Vec<Complex64> = (0..3).map(|_| stream.complex_normal()).collect();
        let f2: Vec<Complex64> = (0..3).map(|_| stream.complex_normal()).collect();
        let exact: Complex64 = f1.iter().zip(&f2).map(|(a, b)| a.conj() * b).sum();
        let h = rkhs_inner(
            &embed_feature(&f1, &spec, &basis)?,
            &embed_feature(&f2, &spec, &basis)?,
            &basis,
        )?;
        iso = iso.max((h - exact).norm());
    }

    let mut gram = 0.0f64;
    for _ in 0..50 {
        let (t, s) = (pts[pick(&mut stream)], pts[pick(&mut stream)]);
        let h = rkhs_inner(&representer(&basis, t)?, &representer(&basis, s)?, &basis)?;
        gram = gram.max((h - spec.kernel(t, s)).norm());
    }
    let gram_tol = 1e-8 + basis.discarded_weight();

    // shifted frequencies 2 pi m / P on a period P sampled at M points
    let period = 4.0;
    let m = 64;
    let omega0 = 0.25;
    let harmonics = [1.0, -2.0, 3.0, 5.0];
    let freqs: Vec<f64> = harmonics.iter().map(|h| omega0 + 2.0 * PI * h / period).collect();
    let gs = vec![
        Complex64::new(0.9, 0.2),
        Complex64::new(0.3, 0.0),
        Complex64::new(0.5, -0.4),
        Complex64::new(0.2, 0.6),
    ];
    let pspec = DiscreteBathSpec::new(freqs, gs, omega0)?;
    let pgrid = TimeGrid::new(period * (m - 1) as f64 / m as f64, m)?;
    let mut parseval = 0.0f64;
    for r in 0..5 {
        let f = sample_amplitudes(&pspec, seed, 800 + r);
        let zeta = trajectory_from_amplitudes(&pspec, &f, &pgrid)?;
        let exact: f64 = f.f.iter().map(|z| z.norm_sqr()).sum();
        parseval = parseval.max((windowed_parseval(&pspec, zeta.values(), period)? - exact).abs());
    }
    Ok(vec![
        Part::new("reproducing_property", repro, 1e-8),
        Part::new("isometry", iso, 1e-6),
        Part::new("representer_gram", gram, gram_tol),
        Part::new("parseval_inverse_kernel", parseval, 1e-8),
    ])
}

fn operator_identities(_seed: u64) -> Result<Vec<Part>> {
    let spec = DiscreteBathSpec::new(vec![1.2], vec![Complex64::new(0.9, 0.3)], 1.0)?;
    let trunc = FockTruncation::new(3, 1, 2)?;
    let grid = TimeGrid::new(1.0, 1001)?;
    let hist = OperatorHistory::new(&jc(), &spec, &trunc, &grid)?;
    let mut io = 0.0f64;
    let mut comm = 0.0f64;
    let x = ndarray::array![[ONE, ZERO], [ZERO, ZERO]];
    for n in [0, 250, 500, 750, 1000] {
        io = io.max(hist.io_residual(n)?);
        comm = comm.max(hist.equal_time_commutator(n, &x)?);
    }
    let mut two_point = 0.0f64;
    for (t, s) in [(0.0, 0.0), (0.3, 0.9), (1.0, 0.2), (0.7, 0.7)] {
        let v = two_point_vacuum(&spec, &trunc, t, s)?;
        two_point = two_point
            .max((v[0] - spec.kernel(t, s)).norm())
            .max(max_abs(v[1..].iter().map(|z| z.norm())));
    }
    let ehrenfest = max_abs(hist.ehrenfest_residual(&x, &[ONE, ZERO])?.into_iter());
    Ok(vec![
        Part::new("input_output", io, 1e-5),
        Part::new("equal_time_commutator", comm, 1e-6),
        Part::new("two_point_vacuum", two_point, 1e-12),
        Part::new("ehrenfest_excited", ehrenfest, 1e-5),
    ])
}

fn trajectory_equation(seed: u64) -> Result<Vec<Part>> {
    let sc = bundled("jc_two_mode").expect("bundled");
    let spec = sc.discrete().expect("discrete bath").clone();
    let grid = TimeGrid::new(2.0, 2001)?;
    let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid)?;
    let mut residual = 0.0f64;
    let mut acausal = 0.0f64;
    for r in 0..5u64 {
        let f = sample_amplitudes(&spec, seed, 900 + r);
        let zeta = trajectory_from_amplitudes(&spec, &f, &grid)?;
        let phi = random_normalized(seed, 950 + r);
        for n in [200, 700, 1300, 1999] {
            residual = residual.max(ds_residual(&spec, phi, &lam, &zeta, n, 1, 1e-6)?);
            for center in [n + 1, n + 2, (n + 2000) / 2, 2000] {
                if center > n && center < grid.n_points() {
                    let d = gateaux_derivative(phi, &lam, &zeta, n, center, 1, 1e-6)?;
                    acausal = acausal.max(d[0].norm()).max(d[1].norm());
                }
            }
        }
    }
    Ok(vec![
        Part::new("ds_residual", residual, 1e-4),
        Part::new("future_derivative", acausal, 0.0),
    ])
}

fn shifted_form(seed: u64) -> Result<Vec<Part>> {
    let sc = bundled("jc_two_mode").expect("bundled");
    let spec = sc.discrete().expect("discrete bath").clone();
    let grid = TimeGrid::new(2.0, 401)?;
    let lam = solve_lambda_volterra(&KernelHandle::Discrete(spec.clone()), &grid)?;
    let f = sample_amplitudes(&spec, seed, 1000);
    let zeta = trajectory_from_amplitudes(&spec, &f, &grid)?;
    let res = shifted_form_residual(&spec, &lam, &zeta, [ONE, ZERO], 300, 100_000, seed)?;
    Ok(vec![Part::new("max_sigma", res.max_sigma(), 5.0)])
}

fn norm_conservation(_seed: u64) -> Result<Vec<Part>> {
    let mut parts = Vec::new();
    for (name, _) in BUNDLED {
        let sc = bundled(name).expect("bundled");
        let lam = solve_lambda_volterra(&sc.kernel, &sc.grid)?;
        let bal = norm_balance(&sc.kernel, &lam)?;
        parts.push(Part::new(name, max_abs(bal.iter().map(|b| (b - 1.0).abs())), 1e-6));
    }
    Ok(parts)
}

fn runtime_limit(id: u32) -> Option<f64> {
    match id {
        1 => Some(30.0),
        3 => Some(10.0),
        6 => Some(120.0),
        _ => None,
    }
}

/// Run criterion `id` (1 to 11) with the given master seed.
pub fn criterion(id: u32, seed: u64) -> Criterion {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| n.to_string())
        .unwrap_or_else(|| format!("unknown_{id}"));
    let start = Instant::now();
    let outcome = match id {
        1 => mercer_brownian(seed),
        2 => markov_relaxation(seed),
        3 => single_resonant_mode(seed),
        4 => exponential_kernel(seed),
        5 => bargmann_cross_validation(seed),
        6 => unravelling_statistics(seed),
        7 => rkhs_suite(seed),
        8 => operator_identities(seed),
        9 => trajectory_equation(seed),
        10 => shifted_form(seed),
        11 => norm_conservation(seed),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let (mut parts, error) = match outcome {
        Ok(p) => (p, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    if let Some(limit) = runtime_limit(id) {
        parts.push(Part {
            label: "runtime_s".into(),
            value: elapsed_s,
            tolerance: limit,
            timing: true,
        });
    }
    Criterion {
        id,
        name,
        parts,
        error,
        elapsed_s,
    }
}

pub fn run_all(seed: u64) -> Vec<Criterion> {
    CRITERIA.iter().map(|(id, _)| criterion(*id, seed)).collect()
}
