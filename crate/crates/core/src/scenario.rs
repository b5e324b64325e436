//! Scenario files: flat sectioned key-value text (`[bath]`, `[system]`,
//! `[grid]`, `[run]`) parsed with TOML syntax, unknown keys rejected.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::{discretize_continuum, ContinuumBathSpec, DiscreteBathSpec, KernelHandle, SpectralDensity};
use crate::grid::TimeGrid;
use crate::unravel::SystemModel;

/// A configuration problem, pointing at the offending line and field when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathKind {
    Discrete,
    Continuum,
    Markov,
    Exponential,
    Brownian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub kind: BathKind,
    pub frequencies: Option<Vec<f64>>,
    pub couplings: Option<Vec<f64>>,
    pub couplings_im: Option<Vec<f64>>,
    pub detuning: Option<f64>,
    pub family: Option<String>,
    pub eta: Option<f64>,
    pub cutoff: Option<f64>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub omega_max: Option<f64>,
    pub n_modes: Option<usize>,
    pub rate: Option<f64>,
    pub amplitude: Option<f64>,
    pub decay: Option<f64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[default]
    Jc,
    Matrix,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default)]
    pub model: SystemKind,
    pub dim: Option<usize>,
    pub hamiltonian_re: Option<Vec<f64>>,
    pub hamiltonian_im: Option<Vec<f64>>,
    pub coupling_re: Option<Vec<f64>>,
    pub coupling_im: Option<Vec<f64>>,
    pub initial_re: Option<Vec<f64>>,
    pub initial_im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub n_traj: usize,
    pub n_max: usize,
    pub k_max: usize,
    pub n_samples: usize,
    pub n_eig: usize,
    pub kernel_points: usize,
    pub mercer_points: usize,
    pub trunc_tol: f64,
    pub leak_tol: f64,
    pub n_shift: usize,
    pub eps: f64,
    pub bump_width: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_traj: 10_000,
            n_max: 3,
            k_max: 8,
            n_samples: 16,
            n_eig: 10,
            kernel_points: 101,
            mercer_points: 501,
            trunc_tol: crate::mercer::DEFAULT_TRUNC_TOL,
            leak_tol: crate::oracle::DEFAULT_LEAK_TOL,
            n_shift: 10_000,
            eps: 1e-6,
            bump_width: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub bath: BathSection,
    #[serde(default)]
    pub system: SystemSection,
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub file: ScenarioFile,
    pub kernel: KernelHandle,
    pub temperature: Option<f64>,
    pub system: SystemModel,
    pub initial: Vec<Complex64>,
    pub grid: TimeGrid,
    pub run: RunSection,
    pub source: String,
}

fn key_line(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

struct Ctx<'a> {
    source: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: key_line(self.source, section, key),
            field: if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            },
            message: message.into(),
        }
    }

    fn need<T: Clone>(&self, value: &Option<T>, section: &str, key: &str, why: &str) -> Result<T, ConfigError> {
        value
            .clone()
            .ok_or_else(|| self.err(section, key, format!("required {why}")))
    }
}

fn complex_vec(re: &[f64], im: Option<&Vec<f64>>) -> Option<Vec<Complex64>> {
    match im {
        Some(im) if im.len() != re.len() => None,
        Some(im) => Some(re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect()),
        None => Some(re.iter().map(|a| Complex64::new(*a, 0.0)).collect()),
    }
}

fn build_kernel(ctx: &Ctx, b: &BathSection) -> Result<KernelHandle, ConfigError> {
    let why = |k: BathKind| format!("for kind = \"{}\"", format!("{k:?}").to_lowercase());
    let detuning = b.detuning.unwrap_or(0.0);
    match b.kind {
        BathKind::Discrete => {
            let freqs = ctx.need(&b.frequencies, "bath", "frequencies", &why(b.kind))?;
            let gs = ctx.need(&b.couplings, "bath", "couplings", &why(b.kind))?;
            let gs = complex_vec(&gs, b.couplings_im.as_ref())
                .ok_or_else(|| ctx.err("bath", "couplings_im", "length differs from couplings"))?;
            DiscreteBathSpec::new(freqs, gs, detuning)
                .map(KernelHandle::Discrete)
                .map_err(|e| ctx.err("bath", "frequencies", e.to_string()))
        }
        BathKind::Continuum => {
            let family = ctx.need(&b.family, "bath", "family", &why(b.kind))?;
            let eta = ctx.need(&b.eta, "bath", "eta", &why(b.kind))?;
            let density = match family.as_str() {
                "ohmic" => SpectralDensity::Ohmic {
                    eta,
                    cutoff: ctx.need(&b.cutoff, "bath", "cutoff", "for ohmic")?,
                },
                "lorentzian" => SpectralDensity::Lorentzian {
                    eta,
                    center: ctx.need(&b.center, "bath", "center", "for lorentzian")?,
                    width: ctx.need(&b.width, "bath", "width", "for lorentzian")?,
                },
                "flat" => SpectralDensity::Flat {
                    eta,
                    omega_max: ctx.need(&b.omega_max, "bath", "omega_max", "for flat")?,
                },
                other => {
                    return Err(ctx.err(
                        "bath",
                        "family",
                        format!("unknown family \"{other}\" (ohmic, lorentzian, flat)"),
                    ))
                }
            };
            let n_modes = ctx.need(&b.n_modes, "bath", "n_modes", &why(b.kind))?;
            let omega_max = ctx.need(&b.omega_max, "bath", "omega_max", &why(b.kind))?;
            discretize_continuum(&ContinuumBathSpec::new(density), n_modes, omega_max)
                .map(|s| KernelHandle::Discrete(s.with_detuning(detuning)))
                .map_err(|e| ctx.err("bath", "family", e.to_string()))
        }
        BathKind::Markov => {
            let rate = ctx.need(&b.rate, "bath", "rate", &why(b.kind))?;
            KernelHandle::markov(rate).map_err(|e| ctx.err("bath", "rate", e.to_string()))
        }
        BathKind::Exponential => {
            let a = ctx.need(&b.amplitude, "bath", "amplitude", &why(b.kind))?;
            let k = ctx.need(&b.decay, "bath", "decay", &why(b.kind))?;
            KernelHandle::exponential(a, k).map_err(|e| ctx.err("bath", "decay", e.to_string()))
        }
        BathKind::Brownian => Ok(KernelHandle::Brownian),
    }
}

fn square(
    ctx: &Ctx,
    re: &Option<Vec<f64>>,
    im: &Option<Vec<f64>>,
    d: usize,
    key: &str,
) -> Result<Array2<Complex64>, ConfigError> {
    let re = ctx.need(re, "system", &format!("{key}_re"), "for model = \"matrix\"")?;
    if re.len() != d * d {
        return Err(ctx.err(
            "system",
            &format!("{key}_re"),
            format!("expected {} entries (row-major {d}x{d}), found {}", d * d, re.len()),
        ));
    }
    let v = complex_vec(&re, im.as_ref())
        .ok_or_else(|| ctx.err("system", &format!("{key}_im"), format!("length differs from {key}_re")))?;
    Ok(Array2::from_shape_vec((d, d), v).expect("length checked"))
}

fn build_system(ctx: &Ctx, s: &SystemSection, rate: f64) -> Result<(SystemModel, Vec<Complex64>), ConfigError> {
    let model = match s.model {
        SystemKind::Jc => {
            for (key, present) in [
                ("dim", s.dim.is_some()),
                ("hamiltonian_re", s.hamiltonian_re.is_some()),
                ("coupling_re", s.coupling_re.is_some()),
            ] {
                if present {
                    return Err(ctx.err("system", key, "only allowed with model = \"matrix\""));
                }
            }
            SystemModel::jaynes_cummings(rate).map_err(|e| ctx.err("system", "model", e.to_string()))?
        }
        SystemKind::Matrix => {
            let d = ctx.need(&s.dim, "system", "dim", "for model = \"matrix\"")?;
            if d == 0 {
                return Err(ctx.err("system", "dim", "must be at least 1"));
            }
            let h = square(ctx, &s.hamiltonian_re, &s.hamiltonian_im, d, "hamiltonian")?;
            let l = square(ctx, &s.coupling_re, &s.coupling_im, d, "coupling")?;
            SystemModel::new(h, l, rate).map_err(|e| ctx.err("system", "hamiltonian_re", e.to_string()))?
        }
    };
    let d = model.dim();
    let initial = match &s.initial_re {
        None => {
            if s.initial_im.is_some() {
                return Err(ctx.err("system", "initial_im", "given without initial_re"));
            }
            let mut v = vec![Complex64::new(0.0, 0.0); d];
            v[0] = Complex64::new(1.0, 0.0);
            v
        }
        Some(re) => {
            if re.len() != d {
                return Err(ctx.err(
                    "system",
                    "initial_re",
                    format!("expected {d} entries, found {}", re.len()),
                ));
            }
            let v = complex_vec(re, s.initial_im.as_ref())
                .ok_or_else(|| ctx.err("system", "initial_im", "length differs from initial_re"))?;
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(ctx.err(
                    "system",
                    "initial_re",
                    format!("initial state must be normalized, |phi|^2 = {norm}"),
                ));
            }
            v
        }
    };
    Ok((model, initial))
}

impl Scenario {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let file: ScenarioFile = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            ConfigError {
                line,
                field: "scenario".into(),
                message: e.message().to_string(),
            }
        })?;
        let ctx = Ctx { source };
        if file.name.trim().is_empty() {
            return Err(ctx.err("", "name", "must not be empty"));
        }
        let kernel = build_kernel(&ctx, &file.bath)?;
        if let Some(kt) = file.bath.temperature {
            if !matches!(file.bath.kind, BathKind::Discrete | BathKind::Continuum) {
                return Err(ctx.err("bath", "temperature", "only discrete or continuum baths can be thermal"));
            }
            if !(kt > 0.0 && kt.is_finite()) {
                return Err(ctx.err("bath", "temperature", format!("must be positive, got {kt}")));
            }
        }
        let rate = match kernel {
            KernelHandle::Markov { rate } => rate,
            _ => 0.0,
        };
        let (system, initial) = build_system(&ctx, &file.system, rate)?;
        let grid = TimeGrid::new(file.grid.horizon, file.grid.n_points)
            .map_err(|e| ctx.err("grid", "n_points", e.to_string()))?;
        let r = &file.run;
        if !(r.trunc_tol > 0.0 && r.trunc_tol < 1.0) {
            return Err(ctx.err("run", "trunc_tol", "must lie in (0, 1)"));
        }
        if !(r.leak_tol > 0.0) {
            return Err(ctx.err("run", "leak_tol", "must be positive"));
        }
        for (key, v) in [
            ("n_traj", r.n_traj),
            ("n_samples", r.n_samples),
            ("n_shift", r.n_shift),
            ("kernel_points", r.kernel_points),
            ("mercer_points", r.mercer_points),
        ] {
            if v == 0 {
                return Err(ctx.err("run", key, "must be at least 1"));
            }
        }
        Ok(Self {
            name: file.name.clone(),
            kernel,
            temperature: file.bath.temperature,
            system,
            initial,
            grid,
            run: file.run.clone(),
            file,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn discrete(&self) -> Option<&DiscreteBathSpec> {
        match &self.kernel {
            KernelHandle::Discrete(s) => Some(s),
            _ => None,
        }
    }
}

/// The scenarios shipped with the crate, as `(name, source)`.
pub const BUNDLED: [(&str, &str); 5] = [
    ("jc_one_mode", include_str!("../scenarios/jc_one_mode.toml")),
    ("jc_two_mode", include_str!("../scenarios/jc_two_mode.toml")),
    ("markov_jc", include_str!("../scenarios/markov_jc.toml")),
    ("exponential", include_str!("../scenarios/exponential.toml")),
    ("ohmic", include_str!("../scenarios/ohmic.toml")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| Scenario::parse(s).expect("bundled scenario parses"))
}
