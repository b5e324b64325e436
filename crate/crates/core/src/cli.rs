//! Batch front end: `qsd <command> --scenario <file> --out <dir>`.
//!
//! Every command writes LF-terminated CSV files with 17 significant digits and
//! a `manifest.json` holding the scenario echo, seed, grid, versions and the
//! SHA-256 of every file written.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bath::{inverse_kernel_eval, quadrature_commutators, thermal_double, CorrelationKernel, KernelHandle};
use crate::error::Error;
use crate::grid::TimeGrid;
use crate::jc::{closed_form_lambda, dyson_partial_sum, norm_balance, solve_lambda_volterra, LambdaSolution};
use crate::mercer::{mercer_decompose, MercerBasis};
use crate::oracle::{
    propagate_total, reduced_density, single_excitation_propagate, two_point_vacuum, FockTruncation, OperatorHistory,
};
use crate::sampler::{empirical_covariance, sample_batch, sample_trajectory_kl, sample_white_noise, ComplexTrajectory};
use crate::scenario::{ConfigError, Scenario, SystemKind};
use crate::suite;
use crate::unravel::{lindblad_evolve, mc_reduced_state, ModelKind, ReducedStateSeries};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "QSD_OUT";

/// Largest grid on which the Dyson series is tabulated (its kernel table is quadratic in the grid).
pub const MAX_DYSON_POINTS: usize = 4001;
/// Largest total dimension for which the oracle command evaluates operator identities.
pub const MAX_IDENTITY_DIM: usize = 64;
/// Nodes used for the operator-identity residuals.
pub const IDENTITY_POINTS: usize = 1001;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0} verification checks failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 2,
            Self::Numerical(_) | Self::Io { .. } | Self::ChecksFailed(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Kernel,
    Mercer,
    Sample,
    Lambda,
    Unravel,
    Oracle,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kernel => "kernel",
            Self::Mercer => "mercer",
            Self::Sample => "sample",
            Self::Lambda => "lambda",
            Self::Unravel => "unravel",
            Self::Oracle => "oracle",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (default: $QSD_OUT/<name>/<command>, else ./qsd-out/<name>/<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `[run] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for trajectory batches.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum CommandArgs {
    /// Tabulate K, the inverse kernel G and quadrature commutators.
    Kernel(RunArgs),
    /// Mercer spectrum and eigenfunctions.
    Mercer(RunArgs),
    /// Trajectory batch and empirical covariance.
    Sample(RunArgs),
    /// lambda(t) by Volterra and Dyson, with the norm balance.
    Lambda(RunArgs),
    /// Monte-Carlo reduced state.
    Unravel(RunArgs),
    /// Truncated-Fock reference propagation and identity residuals.
    Oracle(RunArgs),
    /// Run the acceptance checks and write a pass/fail report.
    Verify(RunArgs),
}

impl CommandArgs {
    pub fn split(&self) -> (Command, &RunArgs) {
        match self {
            Self::Kernel(a) => (Command::Kernel, a),
            Self::Mercer(a) => (Command::Mercer, a),
            Self::Sample(a) => (Command::Sample, a),
            Self::Lambda(a) => (Command::Lambda, a),
            Self::Unravel(a) => (Command::Unravel, a),
            Self::Oracle(a) => (Command::Oracle, a),
            Self::Verify(a) => (Command::Verify, a),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qsd", version, about = "Stochastic unravelling of open quantum dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

/// Options shared by every command once the scenario is loaded.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub quiet: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: Command,
    pub out: PathBuf,
    pub files: Vec<FileRecord>,
    pub extra: Value,
    pub criteria: Vec<suite::Criterion>,
}

/// Formats `x` with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    name: String,
    body: String,
    width: usize,
}

impl Csv {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            body: format!("{}\n", header.join(",")),
            width: header.len(),
        }
    }

    fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<FileRecord>,
    quiet: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl Artifacts {
    fn new(dir: &Path, quiet: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            quiet,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn csv(&mut self, csv: Csv) -> Result<(), CliError> {
        self.write(&csv.name, csv.body.as_bytes())
    }
}

fn grid_json(g: &TimeGrid) -> Value {
    json!({ "horizon": g.horizon(), "n_points": g.n_points(), "dt": g.dt() })
}

fn subgrid(horizon: f64, points: usize) -> Result<TimeGrid, CliError> {
    Ok(TimeGrid::new(horizon, points)?)
}

fn pointwise(sc: &Scenario) -> Result<(), CliError> {
    if !sc.kernel.is_pointwise() {
        return Err(CliError::Numerical(Error::DeltaKernel));
    }
    Ok(())
}

fn run_kernel(sc: &Scenario, _opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    pointwise(sc)?;
    let g = subgrid(sc.grid.horizon(), sc.run.kernel_points)?;
    let pts = g.points();
    let mut k = Csv::new("kernel.csv", &["t", "s", "re_K", "im_K"]);
    let mut q = Csv::new("commutators.csv", &["t", "s", "im_xx", "im_xy", "commuting"]);
    for &t in &pts {
        for &s in &pts {
            let v = sc.kernel.eval(t, s)?;
            k.row(&[num(t), num(s), num(v.re), num(v.im)]);
            let c = quadrature_commutators(&sc.kernel, t, s)?;
            q.row(&[
                num(t),
                num(s),
                num(c.xx.im),
                num(c.xy.im),
                (c.commuting as u8).to_string(),
            ]);
        }
    }
    art.csv(k)?;
    art.csv(q)?;
    let mut extra = json!({ "kernel_points": g.n_points() });
    if let Some(spec) = sc.discrete() {
        if spec.is_faithful() {
            let mut gcsv = Csv::new("inverse_kernel.csv", &["t", "s", "re_G", "im_G"]);
            for &t in &pts {
                for &s in &pts {
                    let v = inverse_kernel_eval(spec, t, s)?;
                    gcsv.row(&[num(t), num(s), num(v.re), num(v.im)]);
                }
            }
            art.csv(gcsv)?;
        } else {
            extra["inverse_kernel"] = json!("skipped: unfaithful coupling");
        }
        if let Some(kt) = sc.temperature {
            let pair = thermal_double(spec, kt)?;
            let mut th = Csv::new(
                "thermal_kernel.csv",
                &["t", "s", "re_K_spont", "im_K_spont", "re_K_stim", "im_K_stim"],
            );
            for &t in &pts {
                for &s in &pts {
                    let a = pair.spontaneous.kernel(t, s);
                    let b = pair.stimulated.kernel(t, s);
                    th.row(&[num(t), num(s), num(a.re), num(a.im), num(b.re), num(b.im)]);
                }
            }
            art.csv(th)?;
            extra["temperature"] = json!(kt);
        }
    }
    Ok(extra)
}

fn mercer_basis(sc: &Scenario, points: usize) -> Result<MercerBasis, CliError> {
    let g = subgrid(sc.grid.horizon(), points)?;
    Ok(mercer_decompose(&sc.kernel, &g, sc.run.trunc_tol)?)
}

fn run_mercer(sc: &Scenario, _opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    pointwise(sc)?;
    let basis = mercer_basis(sc, sc.run.mercer_points)?;
    let horizon = sc.grid.horizon();
    let mut spec = Csv::new("spectrum.csv", &["n", "lambda", "lambda_reference"]);
    for (n, l) in basis.eigenvalues().iter().enumerate() {
        let reference = match sc.kernel {
            KernelHandle::Brownian => {
                let w = std::f64::consts::PI * (n as f64 + 0.5) / horizon;
                1.0 / (w * w)
            }
            _ => f64::NAN,
        };
        spec.row(&[n.to_string(), num(*l), num(reference)]);
    }
    art.csv(spec)?;
    let mut ef = Csv::new("eigenfunctions.csv", &["n", "t", "re_phi", "im_phi"]);
    let pts = basis.grid().points();
    for n in 0..sc.run.n_eig.min(basis.rank()) {
        for (i, t) in pts.iter().enumerate() {
            let v = basis.eigenfunctions()[(n, i)];
            ef.row(&[n.to_string(), num(*t), num(v.re), num(v.im)]);
        }
    }
    art.csv(ef)?;
    let mut recon = 0.0f64;
    for (i, &t) in pts.iter().enumerate().step_by((pts.len() / 50).max(1)) {
        for &s in pts.iter().skip(i % 7).step_by((pts.len() / 50).max(1)) {
            recon = recon.max((basis.reconstruct(t, s)? - sc.kernel.eval(t, s)?).norm());
        }
    }
    Ok(json!({
        "mercer_points": pts.len(),
        "rank": basis.rank(),
        "discarded_weight": basis.discarded_weight(),
        "max_reconstruction_error": recon,
    }))
}

fn trajectories(sc: &Scenario, grid: &TimeGrid, seed: u64, count: usize) -> Result<Vec<ComplexTrajectory>, CliError> {
    Ok(match &sc.kernel {
        KernelHandle::Discrete(spec) => sample_batch(spec, grid, seed, 0, count),
        KernelHandle::Markov { rate } => (0..count as u64)
            .map(|j| sample_white_noise(*rate, grid, seed, j))
            .collect(),
        _ => {
            let basis = mercer_decompose(&sc.kernel, grid, sc.run.trunc_tol)?;
            (0..count as u64)
                .map(|j| sample_trajectory_kl(&basis, seed, j))
                .collect()
        }
    })
}

fn run_sample(sc: &Scenario, opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    let traj_grid = match sc.kernel {
        KernelHandle::Discrete(_) | KernelHandle::Markov { .. } => sc.grid,
        _ => subgrid(sc.grid.horizon(), sc.run.mercer_points)?,
    };
    let batch = trajectories(sc, &traj_grid, opts.seed, sc.run.n_samples)?;
    let mut tcsv = Csv::new("trajectories.csv", &["index", "t", "re_zeta", "im_zeta"]);
    let pts = traj_grid.points();
    for (j, z) in batch.iter().enumerate() {
        for (t, v) in pts.iter().zip(z.values()) {
            tcsv.row(&[j.to_string(), num(*t), num(v.re), num(v.im)]);
        }
    }
    art.csv(tcsv)?;
    let cgrid = subgrid(sc.grid.horizon(), sc.run.kernel_points)?;
    let cov_batch = trajectories(sc, &cgrid, opts.seed, sc.run.n_traj)?;
    let est = empirical_covariance(&cov_batch)?;
    let mut c = Csv::new(
        "covariance.csv",
        &["t", "s", "re_C", "im_C", "stderr", "re_Kstar", "im_Kstar"],
    );
    let cp = cgrid.points();
    let mut worst_sigma = 0.0f64;
    for (i, &t) in cp.iter().enumerate() {
        for (j, &s) in cp.iter().enumerate() {
            let reference = match sc.kernel {
                KernelHandle::Markov { rate } => {
                    let last = cp.len() - 1;
                    let same_cell = i == j || (i.max(j) == last && i.min(j) == last - 1);
                    Complex64::new(if same_cell { rate / cgrid.dt() } else { 0.0 }, 0.0)
                }
                _ => sc.kernel.eval(t, s)?.conj(),
            };
            let v = est.covariance[(i, j)];
            let se = est.stderr(i, j);
            if se > 0.0 {
                worst_sigma = worst_sigma.max((v - reference).norm() / se);
            }
            c.row(&[
                num(t),
                num(s),
                num(v.re),
                num(v.im),
                num(se),
                num(reference.re),
                num(reference.im),
            ]);
        }
    }
    art.csv(c)?;
    Ok(json!({
        "n_samples": sc.run.n_samples,
        "n_traj": sc.run.n_traj,
        "trajectory_points": traj_grid.n_points(),
        "covariance_points": cgrid.n_points(),
        "max_deviation_sigma": worst_sigma,
    }))
}

fn lambda_csv(name: &str, lam: &LambdaSolution, reference: Option<&LambdaSolution>) -> Csv {
    let mut csv = Csv::new(name, &["t", "re_lambda", "im_lambda", "abs_lambda", "abs_reference"]);
    for (i, (t, l)) in lam.grid.points().iter().zip(&lam.values).enumerate() {
        let r = reference.map_or(f64::NAN, |r| r.values[i].norm());
        csv.row(&[num(*t), num(l.re), num(l.im), num(l.norm()), num(r)]);
    }
    csv
}

fn run_lambda(sc: &Scenario, opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    let lam = solve_lambda_volterra(&sc.kernel, &sc.grid)?;
    let exact = closed_form_lambda(&sc.kernel, &sc.grid);
    art.csv(lambda_csv("lambda.csv", &lam, exact.as_ref()))?;
    let bal = norm_balance(&sc.kernel, &lam)?;
    let mut ncsv = Csv::new("norm.csv", &["t", "norm_balance"]);
    for (t, b) in sc.grid.points().iter().zip(&bal) {
        ncsv.row(&[num(*t), num(*b)]);
    }
    art.csv(ncsv)?;
    let mut extra = json!({
        "method": format!("{:?}", lam.method),
        "max_norm_defect": bal.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max),
    });
    if let Some(e) = &exact {
        extra["max_closed_form_error"] = json!(lam
            .values
            .iter()
            .zip(&e.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max));
    }
    let k_max = sc.run.k_max;
    if k_max > 0 {
        let markov = matches!(sc.kernel, KernelHandle::Markov { .. });
        if markov || sc.grid.n_points() <= MAX_DYSON_POINTS {
            let dyson = dyson_partial_sum(&sc.kernel, &sc.grid, k_max)?;
            art.csv(lambda_csv("dyson.csv", &dyson, exact.as_ref()))?;
            extra["dyson_k_max"] = json!(k_max);
            extra["max_dyson_vs_volterra"] = json!(dyson
                .values
                .iter()
                .zip(&lam.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max));
        } else {
            extra["dyson"] = json!(format!("skipped: grid exceeds {MAX_DYSON_POINTS} points"));
            if !opts.quiet {
                eprintln!("dyson series skipped: grid exceeds {MAX_DYSON_POINTS} points");
            }
        }
    }
    Ok(extra)
}

fn rho_csv(
    grid: &TimeGrid,
    matrices: &[Array2<Complex64>],
    stderr: Option<&ReducedStateSeries>,
    reference: Option<&[Array2<Complex64>]>,
) -> Csv {
    let mut csv = Csv::new(
        "rho.csv",
        &[
            "t",
            "i",
            "j",
            "re_rho",
            "im_rho",
            "stderr",
            "re_reference",
            "im_reference",
        ],
    );
    let d = matrices.first().map_or(0, |m| m.nrows());
    for (n, t) in grid.points().iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                let v = matrices[n][(i, j)];
                let se = stderr.map_or(0.0, |s| s.combined_stderr(n, i, j));
                let r = reference.map_or(Complex64::new(f64::NAN, f64::NAN), |r| r[n][(i, j)]);
                csv.row(&[
                    num(*t),
                    i.to_string(),
                    j.to_string(),
                    num(v.re),
                    num(v.im),
                    num(se),
                    num(r.re),
                    num(r.im),
                ]);
            }
        }
    }
    csv
}

/// `rho_ee = |lambda|^2 |c_e|^2`, `rho_eg = lambda c_e c_g^*`.
fn jc_reference(lam: &LambdaSolution, phi: &[Complex64]) -> Vec<Array2<Complex64>> {
    lam.values
        .iter()
        .map(|l| {
            let ee = l.norm_sqr() * phi[0].norm_sqr();
            let eg = l * phi[0] * phi[1].conj();
            ndarray::array![
                [Complex64::new(ee, 0.0), eg],
                [eg.conj(), Complex64::new(1.0 - ee, 0.0)]
            ]
        })
        .collect()
}

fn is_jc(sc: &Scenario) -> bool {
    sc.file.system.model == SystemKind::Jc
}

fn run_unravel(sc: &Scenario, opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    let (kind, reference, label) = match &sc.kernel {
        KernelHandle::Discrete(spec) if is_jc(sc) => {
            let lam = solve_lambda_volterra(&sc.kernel, &sc.grid)?;
            let reference = jc_reference(&lam, &sc.initial);
            (
                ModelKind::JcNonMarkov {
                    spec: spec.clone(),
                    lambda: lam,
                },
                reference,
                "jc_non_markov",
            )
        }
        KernelHandle::Markov { .. } => {
            let reference = lindblad_evolve(&sc.system, &sc.initial, &sc.grid, 4)?;
            (
                ModelKind::Markov {
                    model: sc.system.clone(),
                },
                reference,
                "markov",
            )
        }
        _ => {
            return Err(CliError::Usage(
                "unravel needs a discrete or continuum bath with model = \"jc\", or a markov bath".into(),
            ))
        }
    };
    let series = mc_reduced_state(&kind, &sc.initial, sc.run.n_traj, opts.seed, &sc.grid)?;
    art.csv(rho_csv(&sc.grid, &series.matrices, Some(&series), Some(&reference)))?;
    let mut ncsv = Csv::new("norm.csv", &["t", "norm_mean", "norm_stderr"]);
    for (n, t) in sc.grid.points().iter().enumerate() {
        ncsv.row(&[num(*t), num(series.norm_mean[n]), num(series.norm_stderr[n])]);
    }
    art.csv(ncsv)?;
    let mut worst = 0.0f64;
    for n in 0..sc.grid.n_points() {
        for i in 0..series.dim {
            for j in 0..series.dim {
                let se = series.combined_stderr(n, i, j).hypot(suite::NUMERICAL_FLOOR);
                worst = worst.max((series.matrices[n][(i, j)] - reference[n][(i, j)]).norm() / se);
            }
        }
    }
    Ok(json!({ "model": label, "n_traj": sc.run.n_traj, "max_deviation_sigma": worst }))
}

fn run_oracle(sc: &Scenario, _opts: &RunOptions, art: &mut Artifacts) -> Result<Value, CliError> {
    let spec = sc
        .discrete()
        .ok_or_else(|| CliError::Usage("oracle needs a discrete or continuum bath".into()))?;
    let d = sc.system.dim();
    let trunc = FockTruncation::new(sc.run.n_max, spec.mode_count(), d)?;
    let evo = propagate_total(&sc.system, spec, &trunc, &sc.initial, &sc.grid, sc.run.leak_tol)?;
    let rhos = evo
        .states
        .iter()
        .map(|s| reduced_density(s, &trunc))
        .collect::<Result<Vec<_>, _>>()?;
    let jc = is_jc(sc);
    let lam = if jc {
        Some(solve_lambda_volterra(&sc.kernel, &sc.grid)?)
    } else {
        None
    };
    let reference = lam.as_ref().map(|l| jc_reference(l, &sc.initial));
    art.csv(rho_csv(&sc.grid, &rhos, None, reference.as_deref()))?;
    let mut leak = Csv::new("leakage.csv", &["t", "leakage"]);
    for (t, l) in sc.grid.points().iter().zip(&evo.leakage) {
        leak.row(&[num(*t), num(*l)]);
    }
    art.csv(leak)?;
    let mut extra = json!({
        "n_max": trunc.n_max(),
        "total_dim": trunc.total_dim(),
        "max_leakage": evo.max_leakage(),
    });
    if let Some(lam) = &lam {
        let sector = single_excitation_propagate(spec, &sc.grid)?;
        let sol = LambdaSolution {
            grid: sc.grid,
            values: sector.excited.clone(),
            method: lam.method,
        };
        art.csv(lambda_csv("sector.csv", &sol, Some(lam)))?;
        extra["max_sector_vs_volterra"] = json!(sector
            .excited
            .iter()
            .zip(&lam.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max));
    }
    if trunc.total_dim() <= MAX_IDENTITY_DIM {
        let last = (sc.grid.n_points() - 1).min(IDENTITY_POINTS - 1);
        let g = sc.grid.prefix(last)?;
        let hist = OperatorHistory::new(&sc.system, spec, &trunc, &g)?;
        let mut x = Array2::zeros((d, d));
        x[(0, 0)] = Complex64::new(1.0, 0.0);
        let mut res = Csv::new("residuals.csv", &["check", "t", "value"]);
        for k in 0..5 {
            let n = k * last / 4;
            let t = g.point(n);
            res.row(&["input_output".into(), num(t), num(hist.io_residual(n)?)]);
            res.row(&[
                "equal_time_commutator".into(),
                num(t),
                num(hist.equal_time_commutator(n, &x)?),
            ]);
            let v = two_point_vacuum(spec, &trunc, t, 0.0)?;
            let tp = (v[0] - spec.kernel(t, 0.0))
                .norm()
                .max(v[1].norm())
                .max(v[2].norm())
                .max(v[3].norm());
            res.row(&["two_point_vacuum".into(), num(t), num(tp)]);
        }
        if g.n_points() >= 3 {
            for (n, r) in hist.ehrenfest_residual(&x, &sc.initial)?.iter().enumerate() {
                res.row(&["ehrenfest".into(), num(g.point(n + 1)), num(*r)]);
            }
        }
        art.csv(res)?;
        extra["identity_points"] = json!(g.n_points());
    } else {
        extra["residuals"] = json!(format!("skipped: total dimension exceeds {MAX_IDENTITY_DIM}"));
    }
    Ok(extra)
}

fn run_verify(
    sc: &Scenario,
    opts: &RunOptions,
    art: &mut Artifacts,
) -> Result<(Value, Vec<suite::Criterion>), CliError> {
    let criteria = suite::run_all(opts.seed);
    let mut checks = Csv::new("checks.csv", &["id", "name", "part", "value", "tolerance", "passed"]);
    for c in &criteria {
        if !opts.quiet {
            println!("{}", c.summary());
        }
        if let Some(e) = &c.error {
            checks.row(&[
                c.id.to_string(),
                c.name.clone(),
                format!("\"error: {}\"", e.replace('"', "'")),
                num(f64::NAN),
                num(0.0),
                "0".into(),
            ]);
        }
        for p in c.parts.iter().filter(|p| !p.timing) {
            checks.row(&[
                c.id.to_string(),
                c.name.clone(),
                p.label.clone(),
                num(p.value),
                num(p.tolerance),
                (p.passed() as u8).to_string(),
            ]);
        }
    }
    // scenario-specific checks
    let lam = solve_lambda_volterra(&sc.kernel, &sc.grid)?;
    let exact = closed_form_lambda(&sc.kernel, &sc.grid);
    art.csv(lambda_csv("lambda.csv", &lam, exact.as_ref()))?;
    let bal = norm_balance(&sc.kernel, &lam)?;
    let defect = bal.iter().map(|b| (b - 1.0).abs()).fold(0.0, f64::max);
    let mut scenario_parts = vec![suite::Part {
        label: "norm_balance".into(),
        value: defect,
        tolerance: 1e-6,
        timing: false,
    }];
    if let Some(e) = &exact {
        let err = lam
            .values
            .iter()
            .zip(&e.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        scenario_parts.push(suite::Part {
            label: "closed_form_lambda".into(),
            value: err,
            tolerance: 1e-6,
            timing: false,
        });
    }
    if let (Some(spec), true) = (sc.discrete(), is_jc(sc)) {
        if spec.mode_count() <= 8 {
            let sector = single_excitation_propagate(spec, &sc.grid)?;
            let err = sector
                .excited
                .iter()
                .zip(&lam.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            scenario_parts.push(suite::Part {
                label: "sector_vs_volterra".into(),
                value: err,
                tolerance: 1e-6,
                timing: false,
            });
        }
    }
    let scenario_check = suite::Criterion {
        id: 0,
        name: format!("scenario_{}", sc.name),
        parts: scenario_parts,
        error: None,
        elapsed_s: 0.0,
    };
    if !opts.quiet {
        println!("{}", scenario_check.summary());
    }
    for p in &scenario_check.parts {
        checks.row(&[
            "0".into(),
            scenario_check.name.clone(),
            p.label.clone(),
            num(p.value),
            num(p.tolerance),
            (p.passed() as u8).to_string(),
        ]);
    }
    art.csv(checks)?;
    let mut all = criteria;
    all.push(scenario_check);
    let report = json!({
        "seed": opts.seed,
        "passed": all.iter().all(|c| c.passed()),
        "criteria": all,
    });
    art.write(
        "report.json",
        format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable")).as_bytes(),
    )?;
    let failed = all.iter().filter(|c| !c.passed()).count();
    Ok((json!({ "failed": failed, "criteria": all.len() }), all))
}

fn write_manifest(
    sc: &Scenario,
    command: Command,
    opts: &RunOptions,
    art: &mut Artifacts,
    extra: &Value,
) -> Result<(), CliError> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "tool": "qsd",
        "versions": { "qsd-core": env!("CARGO_PKG_VERSION"), "manifest_format": 1 },
        "command": command.name(),
        "scenario_name": sc.name,
        "scenario_text": sc.source,
        "scenario": sc.file,
        "seed": opts.seed,
        "threads": opts.threads,
        "grid": grid_json(&sc.grid),
        "created_unix": created,
        "files": art.files,
        "results": extra,
    });
    let path = art.dir.join("manifest.json");
    let text = format!("{}\n", serde_json::to_string_pretty(&manifest).expect("serializable"));
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn dispatch(command: Command, sc: &Scenario, opts: &RunOptions) -> Result<RunReport, CliError> {
    let mut art = Artifacts::new(&opts.out, opts.quiet)?;
    let mut criteria = Vec::new();
    let extra = match command {
        Command::Kernel => run_kernel(sc, opts, &mut art)?,
        Command::Mercer => run_mercer(sc, opts, &mut art)?,
        Command::Sample => run_sample(sc, opts, &mut art)?,
        Command::Lambda => run_lambda(sc, opts, &mut art)?,
        Command::Unravel => run_unravel(sc, opts, &mut art)?,
        Command::Oracle => run_oracle(sc, opts, &mut art)?,
        Command::Verify => {
            let (extra, c) = run_verify(sc, opts, &mut art)?;
            criteria = c;
            extra
        }
    };
    write_manifest(sc, command, opts, &mut art, &extra)?;
    let report = RunReport {
        command,
        out: opts.out.clone(),
        files: art.files,
        extra,
        criteria,
    };
    if command == Command::Verify {
        let failed = report.criteria.iter().filter(|c| !c.passed()).count();
        if failed > 0 {
            return Err(CliError::ChecksFailed(failed));
        }
    }
    Ok(report)
}

/// Run `command` on a loaded scenario, honouring the thread cap.
pub fn run(command: Command, sc: &Scenario, opts: &RunOptions) -> Result<RunReport, CliError> {
    match opts.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(command, sc, opts))
        }
        None => dispatch(command, sc, opts),
    }
}

pub fn default_out(scenario_name: &str, command: Command) -> PathBuf {
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("qsd-out"));
    root.join(scenario_name).join(command.name())
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let (command, a) = cli.command.split();
    let result = Scenario::load(&a.scenario).map_err(CliError::from).and_then(|sc| {
        let opts = RunOptions {
            out: a.out.clone().unwrap_or_else(|| default_out(&sc.name, command)),
            seed: a.seed.unwrap_or(sc.run.seed),
            threads: a.threads,
            quiet: a.quiet,
        };
        run(command, &sc, &opts)
    });
    match result {
        Ok(report) => {
            if !a.quiet {
                let mut s = String::new();
                let _ = write!(
                    s,
                    "{} ok: {} files in {}",
                    command.name(),
                    report.files.len(),
                    report.out.display()
                );
                eprintln!("{s}");
            }
            0
        }
        Err(e) => {
            eprintln!("qsd {}: {e}", command.name());
            e.exit_code()
        }
    }
}
