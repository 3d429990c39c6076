//! Run configuration, pipeline orchestration, sweeps and result bundles.
//!
//! Energies are in units of the lead coupling scale (`J = 1` unless a lead
//! says otherwise), times in units of `1/J`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bath::{
    corr_xxz_hp, magnon_edge_kernel, quadrature_kernel, write_kernel_csv, BathSpec, CorrelationKernel,
    HalfFourierOptions, Lead, Polarization,
};
use crate::born::{born_current, integrate_born, kubo_current, BornOptions, CurrentTrace};
use crate::error::{Error, Result};
use crate::junction::JunctionSpec;
use crate::linalg::{CMatrix, C64};
use crate::oracle::{
    ensemble_average, evolve_unitary, trajectory_ids, AbsorberSpec, BasisSelection, ChainSpec, JunctionInit,
    OracleOptions,
};
use crate::spectral::{
    asymptotic_current, rectification, rectification_from_means, spectral_function, stationary_pi_kernel,
    RectificationReport,
};
use crate::steady::{steady_state, GeneratorKind, SteadyReport};

/// Minimum eigenvalue below which a steady state is reported as non-positive.
pub const NEGATIVITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Correlations,
    Born,
    Kubo,
    Steady,
    Spectral,
    Rectify,
    Oracle,
    Sweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Correlations => "correlations",
            Mode::Born => "born",
            Mode::Kubo => "kubo",
            Mode::Steady => "steady",
            Mode::Spectral => "spectral",
            Mode::Rectify => "rectify",
            Mode::Oracle => "oracle",
            Mode::Sweep => "sweep",
        }
    }
}

/// Lead correlator used by the reduced dynamics.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelChoice {
    /// `exp(4i Jz t) J0(4 J t)`.
    #[default]
    Hp,
    /// Thermal XX correlator by quadrature; `mu` is measured relative to the
    /// lead's own polarisation, so both leads use the same occupations.
    Numeric,
    /// Exact single-magnon return amplitude of a finite lead.
    Edge { sites: usize },
    WhiteNoise { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSettings {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        Self { dt: 0.05, horizon: 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BornSettings {
    pub dt: f64,
    pub horizon: f64,
    pub memory: Option<f64>,
    pub trace_tol: f64,
}

impl Default for BornSettings {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 20.0, memory: None, trace_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KuboSettings {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for KuboSettings {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    Redfield,
    Lindblad,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadySettings {
    pub generator: GeneratorChoice,
    pub fourier: HalfFourierOptions,
    pub degeneracy_tol: f64,
}

impl Default for SteadySettings {
    fn default() -> Self {
        Self { generator: GeneratorChoice::Both, fourier: HalfFourierOptions::default(), degeneracy_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSettings {
    pub dt: f64,
    pub horizon: f64,
    pub damping: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        Self { dt: 0.05, horizon: 400.0, damping: 0.01, omega_min: -8.0, omega_max: 8.0, points: 321 }
    }
}

impl SpectralSettings {
    fn omegas(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.omega_min];
        }
        let step = (self.omega_max - self.omega_min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.omega_min + k as f64 * step).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectifyMethod {
    /// Global Redfield steady state.
    Steady,
    Born,
    Kubo,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifySettings {
    pub method: RectifyMethod,
    /// Averaging window for time-dependent methods; defaults to the method's horizon.
    pub horizon: Option<f64>,
}

impl Default for RectifySettings {
    fn default() -> Self {
        Self { method: RectifyMethod::Steady, horizon: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub n_left: usize,
    pub n_right: usize,
    pub options: OracleOptions,
    /// Absorbers on both leads; runs the closed chain and the absorbed ensemble.
    pub absorbers: Option<AbsorberSpec>,
    pub trajectories: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            n_left: 8,
            n_right: 8,
            options: OracleOptions::new(0.05, 3.0, BasisSelection::Sector),
            absorbers: None,
            trajectories: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the run configuration, e.g. `left.jz`.
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub mode: Mode,
    pub axes: Vec<SweepAxis>,
    /// Cartesian product of the axes; otherwise the axes are zipped.
    #[serde(default = "yes")]
    pub cartesian: bool,
}

fn yes() -> bool {
    true
}

fn default_left() -> BathSpec {
    BathSpec::polarized(1.0, 0.0, Polarization::Up)
}

fn default_right() -> BathSpec {
    BathSpec::polarized(1.0, 0.0, Polarization::Down)
}

fn default_junction() -> JunctionSpec {
    JunctionSpec { j_s: 0.01, delta: 0.01, jz_sys: 0.0, gamma: 0.01 }
}

/// A complete, self-describing run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mode: Mode,
    #[serde(default = "default_left")]
    pub left: BathSpec,
    #[serde(default = "default_right")]
    pub right: BathSpec,
    #[serde(default = "default_junction")]
    pub junction: JunctionSpec,
    #[serde(default)]
    pub init: JunctionInit,
    #[serde(default)]
    pub kernel: KernelChoice,
    #[serde(default)]
    pub correlations: CorrelationSettings,
    #[serde(default)]
    pub born: BornSettings,
    #[serde(default)]
    pub kubo: KuboSettings,
    #[serde(default)]
    pub steady: SteadySettings,
    #[serde(default)]
    pub spectral: SpectralSettings,
    #[serde(default)]
    pub rectify: RectifySettings,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl RunSpec {
    /// Defaults for `mode`.
    pub fn new(mode: Mode) -> Self {
        serde_json::from_value(serde_json::json!({ "mode": mode.name() })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: RunSpec = serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Set `key` (dotted path) to `value`; the value is parsed as JSON and
    /// falls back to a plain string.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let v = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        self.with_value(key, v)
    }

    pub fn with_value(&self, key: &str, value: Value) -> Result<Self> {
        let mut tree = serde_json::to_value(self)?;
        set_path(&mut tree, key, value)?;
        serde_json::from_value(tree).map_err(|e| Error::invalid(format!("override {key}: {e}")))
    }

    /// Check every field and report all problems together.
    pub fn validate(&self) -> Result<()> {
        let mut p = self.junction.problems();
        p.extend(self.left.problems("left"));
        p.extend(self.right.problems("right"));
        p.check(self.init.amplitudes().is_ok(), || "init: amplitudes need 4 entries and nonzero norm".into());
        match &self.kernel {
            KernelChoice::Edge { sites } => p.check(*sites > 0, || "kernel.sites must be positive".into()),
            KernelChoice::WhiteNoise { weight } => p.non_negative("kernel.weight", *weight),
            _ => {}
        }
        p.positive("correlations.dt", self.correlations.dt);
        p.positive("correlations.horizon", self.correlations.horizon);
        p.positive("born.dt", self.born.dt);
        p.positive("born.horizon", self.born.horizon);
        if let Some(m) = self.born.memory {
            p.positive("born.memory", m);
        }
        p.positive("kubo.dt", self.kubo.dt);
        p.positive("kubo.horizon", self.kubo.horizon);
        p.positive("steady.fourier.damping", self.steady.fourier.damping);
        p.positive("steady.fourier.dt", self.steady.fourier.dt);
        p.positive("spectral.dt", self.spectral.dt);
        p.positive("spectral.horizon", self.spectral.horizon);
        p.positive("spectral.damping", self.spectral.damping);
        p.finite("spectral.omega_min", self.spectral.omega_min);
        p.finite("spectral.omega_max", self.spectral.omega_max);
        p.check(self.spectral.points >= 1, || "spectral.points must be at least 1".into());
        p.check(self.spectral.omega_max >= self.spectral.omega_min, || {
            "spectral.omega_max must not be below spectral.omega_min".into()
        });
        if let Some(h) = self.rectify.horizon {
            p.positive("rectify.horizon", h);
        }
        p.check(self.oracle.trajectories != 1, || "oracle.trajectories must be 0 or at least 2".into());
        p.check(self.oracle.trajectories == 0 || self.oracle.absorbers.is_some(), || {
            "oracle.trajectories needs oracle.absorbers".into()
        });
        match (&self.sweep, self.mode) {
            (None, Mode::Sweep) => p.check(false, || "mode sweep needs a sweep section".into()),
            (Some(s), _) => {
                p.check(s.mode != Mode::Sweep, || "sweep.mode cannot itself be sweep".into());
                p.check(!s.axes.is_empty(), || "sweep.axes must not be empty".into());
                for a in &s.axes {
                    p.check(!a.values.is_empty(), || format!("sweep axis {} has no values", a.key));
                }
                if !s.cartesian {
                    let n = s.axes.first().map_or(0, |a| a.values.len());
                    p.check(s.axes.iter().all(|a| a.values.len() == n), || {
                        "zipped sweep axes must have equal lengths".into()
                    });
                }
            }
            _ => {}
        }
        p.into_result()
    }

    fn chain(&self) -> ChainSpec {
        ChainSpec {
            n_left: self.oracle.n_left,
            n_right: self.oracle.n_right,
            left: self.left.clone(),
            right: self.right.clone(),
            junction: self.junction.clone(),
            init: self.init.clone(),
        }
    }

    fn rho0(&self) -> Result<CMatrix> {
        junction_density(&self.init)
    }

    fn with_delta(&self, delta: f64) -> Self {
        let mut s = self.clone();
        s.junction.delta = delta;
        s
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("override key `{key}` is malformed")));
    }
    for (i, part) in parts.iter().enumerate() {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("override key `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one part")
}

/// One output file and its checksum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Result of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub params: BTreeMap<String, Value>,
    pub summary: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub spec: RunSpec,
    pub artifacts: Vec<Artifact>,
    pub wall_seconds: f64,
    pub steps: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub summary: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<SweepPoint>,
}

/// Writes files below an output directory and remembers their checksums.
struct Output {
    root: PathBuf,
    prefix: String,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(root: &Path, prefix: &str) -> Result<Self> {
        fs::create_dir_all(root.join(prefix))?;
        Ok(Self { root: root.to_path_buf(), prefix: prefix.to_string(), artifacts: Vec::new() })
    }

    fn detached() -> Self {
        Self { root: PathBuf::new(), prefix: String::new(), artifacts: Vec::new() }
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let rel = if self.prefix.is_empty() { name.to_string() } else { format!("{}/{name}", self.prefix) };
        fs::write(self.root.join(&rel), bytes)?;
        self.artifacts.push(Artifact {
            path: rel,
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write(name, &buf)
    }
}

/// Sampled lead kernels shared between sweep points with equal parameters.
#[derive(Default)]
pub struct KernelCache {
    map: Mutex<HashMap<String, Arc<CorrelationKernel>>>,
}

impl KernelCache {
    fn get(&self, spec: &BathSpec, choice: &KernelChoice, dt: f64, n: usize) -> Result<CorrelationKernel> {
        let key = format!("{}|{}|{dt:e}|{n}", serde_json::to_string(spec)?, serde_json::to_string(choice)?);
        if let Some(k) = self.map.lock().expect("cache lock").get(&key) {
            return Ok((**k).clone());
        }
        let kernel = match choice {
            KernelChoice::Hp => spec.hp_kernel(),
            KernelChoice::WhiteNoise { weight } => CorrelationKernel::WhiteNoise { weight: C64::new(*weight, 0.0) },
            KernelChoice::Numeric => quadrature_kernel(spec, dt, n, false)?,
            KernelChoice::Edge { sites } => magnon_edge_kernel(spec, *sites, dt, n)?,
        };
        self.map.lock().expect("cache lock").insert(key, Arc::new(kernel.clone()));
        Ok(kernel)
    }

    fn leads(&self, spec: &RunSpec, dt: f64, horizon: f64) -> Result<[Lead; 2]> {
        let n = (horizon / dt).ceil() as usize + 2;
        let l = self.get(&spec.left, &spec.kernel, dt, n)?;
        let r = self.get(&spec.right, &spec.kernel, dt, n)?;
        Ok([Lead::with_kernel(spec.left.clone(), l), Lead::with_kernel(spec.right.clone(), r)])
    }
}

/// Mutable state of one pipeline execution.
struct Context<'a> {
    out: Output,
    cache: &'a KernelCache,
    steps: BTreeMap<String, u64>,
    warnings: Vec<String>,
    summary: BTreeMap<String, f64>,
}

impl Context<'_> {
    fn step_count(&mut self, key: &str, n: usize) {
        *self.steps.entry(key.to_string()).or_default() += n as u64;
    }

    fn steady_hygiene(&mut self, label: &str, r: &SteadyReport) {
        for w in &r.warnings {
            self.warnings.push(format!("{label}: {w}"));
        }
        if r.min_eigenvalue < -NEGATIVITY_TOL {
            self.warnings.push(format!("{label}: steady state has negative eigenvalue {:.3e}", r.min_eigenvalue));
        }
    }
}

/// Execute a configuration, writing artifacts and `manifest.json` below `out`.
pub fn run(spec: &RunSpec, out: &Path) -> Result<ResultBundle> {
    spec.validate()?;
    let start = Instant::now();
    let cache = KernelCache::default();
    let mut bundle = if spec.mode == Mode::Sweep {
        sweep(spec, out, &cache)?
    } else {
        let mut ctx = Context {
            out: Output::new(out, "")?,
            cache: &cache,
            steps: BTreeMap::new(),
            warnings: Vec::new(),
            summary: BTreeMap::new(),
        };
        execute(spec, spec.mode, &mut ctx)?;
        ResultBundle {
            spec: spec.clone(),
            artifacts: ctx.out.artifacts,
            wall_seconds: 0.0,
            steps: ctx.steps,
            warnings: ctx.warnings,
            summary: ctx.summary,
            points: Vec::new(),
        }
    };
    for w in &bundle.warnings {
        log::warn!("{w}");
    }
    bundle.wall_seconds = start.elapsed().as_secs_f64();
    let mut manifest = Output::new(out, "")?;
    manifest.json("manifest.json", &bundle)?;
    Ok(bundle)
}

fn execute(spec: &RunSpec, mode: Mode, ctx: &mut Context) -> Result<()> {
    ctx.out.json("config.json", spec)?;
    match mode {
        Mode::Correlations => run_correlations(spec, ctx),
        Mode::Born => {
            let trace = born_trace(spec, ctx)?;
            ctx.out.csv("born_current.csv", |w| trace.write_csv(w))?;
            summarize_trace(spec.born.horizon, &trace, ctx)
        }
        Mode::Kubo => {
            let trace = kubo_trace(spec, ctx)?;
            ctx.out.csv("kubo_current.csv", |w| trace.write_csv(w))?;
            summarize_trace(spec.kubo.horizon, &trace, ctx)
        }
        Mode::Steady => run_steady(spec, ctx).map(|_| ()),
        Mode::Spectral => run_spectral(spec, ctx),
        Mode::Rectify => run_rectify(spec, ctx),
        Mode::Oracle => run_oracle(spec, ctx),
        Mode::Sweep => Err(Error::invalid("nested sweeps are not supported")),
    }
}

fn run_correlations(spec: &RunSpec, ctx: &mut Context) -> Result<()> {
    let c = &spec.correlations;
    let n = (c.horizon / c.dt).round() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * c.dt).collect();
    for (name, bath) in [("left", &spec.left), ("right", &spec.right)] {
        let kernel = ctx.cache.get(bath, &spec.kernel, c.dt, n)?;
        let values = kernel.samples(c.dt, n)?;
        let hp = corr_xxz_hp(bath, &times)?;
        let dev = values.iter().zip(&hp).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ctx.summary.insert(format!("{name}_max_deviation_from_hp"), dev);
        ctx.out.csv(&format!("correlations_{name}.csv"), |w| write_kernel_csv(w, &times, &values))?;
    }
    ctx.step_count("correlation_samples", 2 * n);
    Ok(())
}

fn born_trace(spec: &RunSpec, ctx: &mut Context) -> Result<CurrentTrace> {
    let b = &spec.born;
    let leads = ctx.cache.leads(spec, b.dt, b.horizon)?;
    let opts = BornOptions { dt: b.dt, horizon: b.horizon, memory: b.memory, trace_tol: b.trace_tol };
    let history = integrate_born(&spec.rho0()?, &spec.junction, &leads, &opts)?;
    ctx.warnings.extend(history.warnings.iter().map(|w| format!("born: {w}")));
    ctx.step_count("born_steps", history.times.len() - 1);
    Ok(born_current(&history))
}

fn kubo_trace(spec: &RunSpec, ctx: &mut Context) -> Result<CurrentTrace> {
    let k = &spec.kubo;
    let leads = ctx.cache.leads(spec, k.dt, k.horizon)?;
    let trace = kubo_current(&spec.rho0()?, &spec.junction, &leads, k.dt, k.horizon)?;
    ctx.step_count("kubo_steps", trace.times.len() - 1);
    Ok(trace)
}

fn summarize_trace(horizon: f64, trace: &CurrentTrace, ctx: &mut Context) -> Result<()> {
    let mean = trace.time_average(horizon)?;
    ctx.summary.insert("current".into(), mean);
    ctx.summary.insert("final_current".into(), *trace.total.last().unwrap_or(&0.0));
    let peak = trace.total.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    ctx.summary.insert("peak_current".into(), peak);
    Ok(())
}

fn steady_leads(spec: &RunSpec, ctx: &Context) -> Result<[Lead; 2]> {
    let f = &spec.steady.fourier;
    ctx.cache.leads(spec, f.dt, f.horizon())
}

/// Redfield and/or Lindblad steady states; returns the Redfield report when computed.
fn run_steady(spec: &RunSpec, ctx: &mut Context) -> Result<Option<SteadyReport>> {
    let leads = steady_leads(spec, ctx)?;
    let s = &spec.steady;
    let kinds: &[GeneratorKind] = match s.generator {
        GeneratorChoice::Redfield => &[GeneratorKind::Redfield],
        GeneratorChoice::Lindblad => &[GeneratorKind::Lindblad],
        GeneratorChoice::Both => &[GeneratorKind::Redfield, GeneratorKind::Lindblad],
    };
    let mut redfield = None;
    for &kind in kinds {
        let (_, report) = steady_state(kind, &spec.junction, &leads, &s.fourier, s.degeneracy_tol)?;
        let label = match kind {
            GeneratorKind::Redfield => "redfield",
            GeneratorKind::Lindblad => "lindblad",
        };
        ctx.steady_hygiene(label, &report);
        ctx.out.json(&format!("steady_{label}.json"), &report)?;
        if let Some(c) = &report.currents {
            ctx.summary.insert(format!("current_{label}"), c.total);
        }
        ctx.summary.insert(format!("residual_{label}"), report.residual);
        ctx.summary.insert(format!("trace_error_{label}"), report.trace_error);
        ctx.summary.insert(format!("min_eigenvalue_{label}"), report.min_eigenvalue);
        if kind == GeneratorKind::Redfield {
            redfield = Some(report);
        }
    }
    let primary = ctx.summary.get("current_redfield").or_else(|| ctx.summary.get("current_lindblad")).copied();
    if let Some(c) = primary {
        ctx.summary.insert("current".into(), c);
    }
    Ok(redfield)
}

fn run_spectral(spec: &RunSpec, ctx: &mut Context) -> Result<()> {
    let mut steady_spec = spec.clone();
    steady_spec.steady.generator = GeneratorChoice::Redfield;
    let rho = run_steady(&steady_spec, ctx)?.expect("redfield requested").rho;
    let sp = &spec.spectral;
    let n = (sp.horizon / sp.dt).round() as usize + 1;
    let leads = ctx.cache.leads(spec, sp.dt, sp.horizon)?;
    let kernel = stationary_pi_kernel(&rho, &spec.junction, &leads, sp.dt, n)?;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * sp.dt).collect();
    let values = kernel.samples(sp.dt, n)?;
    ctx.out.csv("pi_kernel.csv", |w| write_kernel_csv(w, &times, &values))?;
    let series = spectral_function(&kernel, sp.damping, &sp.omegas())?;
    ctx.out.csv("spectral.csv", |w| series.write_csv(w))?;
    let a0 = spectral_function(&kernel, sp.damping, &[0.0])?.a[0];
    ctx.summary.insert("a0".into(), a0);
    ctx.summary.insert("asymptotic_current".into(), asymptotic_current(a0, spec.junction.gamma));
    ctx.step_count("spectral_points", sp.points);
    Ok(())
}

fn rectify_pair(spec: &RunSpec, ctx: &mut Context) -> Result<RectificationReport> {
    let delta = spec.junction.delta;
    let plus = spec.with_delta(delta);
    let minus = spec.with_delta(-delta);
    match spec.rectify.method {
        RectifyMethod::Steady => {
            let mut s = |x: &RunSpec, tag: &str| -> Result<f64> {
                let leads = steady_leads(x, ctx)?;
                let st = &x.steady;
                let (_, r) = steady_state(GeneratorKind::Redfield, &x.junction, &leads, &st.fourier, st.degeneracy_tol)?;
                ctx.steady_hygiene(&format!("redfield ({tag})"), &r);
                ctx.out.json(&format!("steady_redfield_{tag}.json"), &r)?;
                Ok(r.currents.map_or(0.0, |c| c.total))
            };
            let a = s(&plus, "plus")?;
            let b = s(&minus, "minus")?;
            rectification_from_means(delta, f64::INFINITY, a, b)
        }
        RectifyMethod::Born | RectifyMethod::Kubo | RectifyMethod::Oracle => {
            let (name, default_horizon) = match spec.rectify.method {
                RectifyMethod::Born => ("born", spec.born.horizon),
                RectifyMethod::Kubo => ("kubo", spec.kubo.horizon),
                _ => ("oracle", spec.oracle.options.horizon),
            };
            let horizon = spec.rectify.horizon.unwrap_or(default_horizon);
            let mut traces = Vec::new();
            for (x, tag) in [(&plus, "plus"), (&minus, "minus")] {
                let t = match spec.rectify.method {
                    RectifyMethod::Born => born_trace(x, ctx)?,
                    RectifyMethod::Kubo => kubo_trace(x, ctx)?,
                    _ => oracle_trace(x, ctx)?,
                };
                ctx.out.csv(&format!("{name}_current_{tag}.csv"), |w| t.write_csv(w))?;
                traces.push(t);
            }
            rectification(&traces[0], &traces[1], delta, horizon)
        }
    }
}

fn run_rectify(spec: &RunSpec, ctx: &mut Context) -> Result<()> {
    let report = rectify_pair(spec, ctx)?;
    ctx.out.json("rectification.json", &report)?;
    ctx.summary.insert("r".into(), report.r);
    ctx.summary.insert("diode".into(), report.diode);
    ctx.summary.insert("current_plus".into(), report.mean_plus);
    ctx.summary.insert("current_minus".into(), report.mean_minus);
    Ok(())
}

fn oracle_trace(spec: &RunSpec, ctx: &mut Context) -> Result<CurrentTrace> {
    let chain = spec.chain();
    let run = evolve_unitary(&chain, &spec.oracle.options)?;
    ctx.step_count("oracle_samples", run.times.len() - 1);
    Ok(run.junction_trace(&chain))
}

/// Max |current| on the outermost bond of the left lead for `t >= t_from`.
fn boundary_peak(times: &[f64], rows: &[Vec<f64>], t_from: f64) -> f64 {
    times.iter().zip(rows).filter(|(t, _)| **t >= t_from).map(|(_, r)| r[0].abs()).fold(0.0, f64::max)
}

/// Time by which the front from the junction has reached the outer end of the left lead.
pub fn reflection_time(n_left: usize, j: f64) -> f64 {
    n_left as f64 / (4.0 * j) + 0.5 / j
}

fn run_oracle(spec: &RunSpec, ctx: &mut Context) -> Result<()> {
    let chain = spec.chain();
    let o = &spec.oracle;
    let run = evolve_unitary(&chain, &o.options)?;
    ctx.step_count("oracle_samples", run.times.len() - 1);
    ctx.out.csv("oracle_heatmap.csv", |w| run.write_heatmap_csv(w))?;
    let trace = run.junction_trace(&chain);
    ctx.out.csv("oracle_current.csv", |w| trace.write_csv(w))?;
    summarize_trace(o.options.horizon, &trace, ctx)?;
    let drift = run.magnetisation.iter().map(|m| (m - run.magnetisation[0]).abs()).fold(0.0, f64::max);
    ctx.summary.insert("magnetisation_drift".into(), drift);
    if let (Some(abs), true) = (o.absorbers, o.trajectories >= 2) {
        let ids = trajectory_ids(spec.seed, o.trajectories);
        let ens = ensemble_average(&chain, &[Some(abs), Some(abs)], &o.options, &ids)?;
        ctx.step_count("trajectories", o.trajectories);
        ctx.out.csv("oracle_heatmap_absorbed.csv", |w| ens.write_heatmap_csv(w))?;
        ctx.out.csv("oracle_heatmap_absorbed_stderr.csv", |w| {
            crate::oracle::write_heatmap(w, &ens.times, &ens.bond_stderr)
        })?;
        ctx.out.csv("oracle_current_absorbed.csv", |w| {
            use std::io::Write;
            writeln!(w, "t,total,stderr")?;
            for k in 0..ens.times.len() {
                writeln!(w, "{:.10e},{:.16e},{:.16e}", ens.times[k], ens.junction_mean[k], ens.junction_stderr[k])?;
            }
            Ok(())
        })?;
        if o.n_left > 0 {
            let t_r = reflection_time(o.n_left, spec.left.j);
            let off = boundary_peak(&run.times, &run.bond_currents, t_r);
            let on = boundary_peak(&ens.times, &ens.bond_mean, t_r);
            ctx.summary.insert("boundary_current_closed".into(), off);
            ctx.summary.insert("boundary_current_absorbed".into(), on);
            ctx.summary.insert("boundary_suppression".into(), off / on.max(f64::MIN_POSITIVE));
        }
    }
    Ok(())
}

fn sweep_points(s: &SweepSpec) -> Vec<Vec<(String, Value)>> {
    if s.cartesian {
        let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for axis in &s.axes {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for p in &points {
                for v in &axis.values {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    next.push(q);
                }
            }
            points = next;
        }
        points
    } else {
        let n = s.axes[0].values.len();
        (0..n).map(|i| s.axes.iter().map(|a| (a.key.clone(), a.values[i].clone())).collect()).collect()
    }
}

fn sweep(spec: &RunSpec, out: &Path, cache: &KernelCache) -> Result<ResultBundle> {
    let s = spec.sweep.as_ref().expect("validated");
    let mut base = spec.clone();
    base.mode = s.mode;
    base.sweep = None;
    let points = sweep_points(s);
    // resolve every point first so configuration errors abort the sweep
    let specs: Vec<RunSpec> = points
        .iter()
        .map(|p| p.iter().try_fold(base.clone(), |acc, (k, v)| acc.with_value(k, v.clone())))
        .collect::<Result<_>>()?;
    let results: Vec<(SweepPoint, Vec<Artifact>, BTreeMap<String, u64>, Vec<String>)> = specs
        .par_iter()
        .enumerate()
        .map(|(i, point_spec)| {
            let params: BTreeMap<String, Value> = points[i].iter().cloned().collect();
            let prefix = format!("point_{i:04}");
            let mut ctx = match Output::new(out, &prefix) {
                Ok(o) => Context {
                    out: o,
                    cache,
                    steps: BTreeMap::new(),
                    warnings: Vec::new(),
                    summary: BTreeMap::new(),
                },
                Err(e) => {
                    let p = SweepPoint { index: i, params, summary: BTreeMap::new(), error: Some(e.to_string()) };
                    return (p, Vec::new(), BTreeMap::new(), Vec::new());
                }
            };
            let error = point_spec.validate().and_then(|_| execute(point_spec, s.mode, &mut ctx)).err();
            let warnings = ctx.warnings.iter().map(|w| format!("{prefix}: {w}")).collect();
            let point = SweepPoint { index: i, params, summary: ctx.summary, error: error.map(|e| e.to_string()) };
            (point, ctx.out.artifacts, ctx.steps, warnings)
        })
        .collect();
    let mut bundle = ResultBundle {
        spec: spec.clone(),
        artifacts: Vec::new(),
        wall_seconds: 0.0,
        steps: BTreeMap::new(),
        warnings: Vec::new(),
        summary: BTreeMap::new(),
        points: Vec::new(),
    };
    for (point, artifacts, steps, warnings) in results {
        bundle.artifacts.extend(artifacts);
        for (k, v) in steps {
            *bundle.steps.entry(k).or_default() += v;
        }
        bundle.warnings.extend(warnings);
        if let Some(e) = &point.error {
            bundle.warnings.push(format!("point {} failed: {e}", point.index));
        }
        bundle.points.push(point);
    }
    let failed = bundle.points.iter().filter(|p| p.error.is_some()).count();
    bundle.summary.insert("points".into(), bundle.points.len() as f64);
    bundle.summary.insert("failed_points".into(), failed as f64);
    let mut top = Output::new(out, "")?;
    top.json("config.json", spec)?;
    top.csv("sweep.csv", |w| write_sweep_table(w, s, &bundle.points))?;
    let pairs = delta_pairs(&bundle.points);
    if !pairs.is_empty() {
        top.csv("sweep_rectification.csv", |w| write_pairs(w, &pairs))?;
        bundle.summary.insert("rectification_pairs".into(), pairs.len() as f64);
    }
    bundle.artifacts.extend(top.artifacts);
    Ok(bundle)
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_sweep_table(w: &mut Vec<u8>, s: &SweepSpec, points: &[SweepPoint]) -> Result<()> {
    use std::io::Write;
    let mut keys: Vec<String> = points.iter().flat_map(|p| p.summary.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(s.axes.iter().map(|a| a.key.clone()));
    header.extend(keys.iter().cloned());
    header.push("error".into());
    writeln!(w, "{}", header.join(","))?;
    for p in points {
        let mut row = vec![p.index.to_string()];
        row.extend(s.axes.iter().map(|a| value_text(&p.params[&a.key])));
        row.extend(keys.iter().map(|k| p.summary.get(k).map_or(String::new(), |v| format!("{v:.16e}"))));
        row.push(p.error.as_deref().map_or(String::new(), |e| format!("\"{}\"", e.replace('"', "'"))));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Rectification for every pair of points that differ only in the sign of `junction.delta`.
fn delta_pairs(points: &[SweepPoint]) -> Vec<(BTreeMap<String, Value>, RectificationReport)> {
    let key = "junction.delta";
    let mut out = Vec::new();
    for p in points {
        let Some(d) = p.params.get(key).and_then(Value::as_f64) else { continue };
        if d <= 0.0 {
            continue;
        }
        let partner = points.iter().find(|q| {
            q.params.get(key).and_then(Value::as_f64) == Some(-d)
                && q.params.iter().all(|(k, v)| k == key || p.params.get(k) == Some(v))
        });
        let (Some(q), Some(&a)) = (partner, p.summary.get("current")) else { continue };
        let Some(&b) = q.summary.get("current") else { continue };
        if let Ok(r) = rectification_from_means(d, f64::INFINITY, a, b) {
            let mut params = p.params.clone();
            params.remove(key);
            out.push((params, r));
        }
    }
    out
}

fn write_pairs(w: &mut Vec<u8>, pairs: &[(BTreeMap<String, Value>, RectificationReport)]) -> Result<()> {
    use std::io::Write;
    let keys: Vec<String> = pairs[0].0.keys().cloned().collect();
    let mut header: Vec<String> = keys.clone();
    header.extend(["delta", "current_plus", "current_minus", "r", "diode"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for (params, r) in pairs {
        let mut row: Vec<String> = keys.iter().map(|k| params.get(k).map_or(String::new(), value_text)).collect();
        row.extend([r.delta, r.mean_plus, r.mean_minus, r.r, r.diode].map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Steady state of one generator for a run configuration, without writing files.
pub fn steady_for(spec: &RunSpec, kind: GeneratorKind) -> Result<SteadyReport> {
    spec.validate()?;
    let cache = KernelCache::default();
    let f = &spec.steady.fourier;
    let leads = cache.leads(spec, f.dt, f.horizon())?;
    steady_state(kind, &spec.junction, &leads, f, spec.steady.degeneracy_tol).map(|(_, r)| r)
}

/// Junction current trace of a time-dependent method, without writing files.
pub fn trace_for(spec: &RunSpec, method: RectifyMethod) -> Result<CurrentTrace> {
    spec.validate()?;
    let cache = KernelCache::default();
    let mut ctx = Context {
        out: Output::detached(),
        cache: &cache,
        steps: BTreeMap::new(),
        warnings: Vec::new(),
        summary: BTreeMap::new(),
    };
    match method {
        RectifyMethod::Born => born_trace(spec, &mut ctx),
        RectifyMethod::Kubo => kubo_trace(spec, &mut ctx),
        RectifyMethod::Oracle => oracle_trace(spec, &mut ctx),
        RectifyMethod::Steady => Err(Error::invalid("the steady method has no time trace")),
    }
}

/// Pure junction state as a density matrix.
pub fn junction_density(init: &JunctionInit) -> Result<CMatrix> {
    let a = init.amplitudes()?;
    Ok(CMatrix::from_fn(4, 4, |r, c| a[r] * a[c].conj()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for mode in [Mode::Correlations, Mode::Born, Mode::Steady, Mode::Oracle] {
            let s = RunSpec::new(mode);
            let back = RunSpec::from_json(&s.to_json()).unwrap();
            assert_eq!(s, back);
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let s = RunSpec::new(Mode::Steady)
            .with_override("left.jz", "0.9")
            .unwrap()
            .with_override("steady.generator", "lindblad")
            .unwrap()
            .with_override("oracle.absorbers", r#"{"gamma_b": 0.5, "amplitude": 3}"#)
            .unwrap();
        assert_eq!(s.left.jz, 0.9);
        assert_eq!(s.steady.generator, GeneratorChoice::Lindblad);
        assert_eq!(s.oracle.absorbers.unwrap().amplitude, 3.0);
        assert!(matches!(s.with_override("left.nonsense", "1"), Err(Error::Validation(_))));
        assert!(matches!(s.with_override("left..j", "1"), Err(Error::Validation(_))));
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut s = RunSpec::new(Mode::Born);
        s.born.dt = -1.0;
        s.left.j = 0.0;
        s.junction.gamma = f64::NAN;
        match s.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cartesian_and_zipped_points() {
        let axis = |k: &str, v: Vec<f64>| SweepAxis { key: k.into(), values: v.into_iter().map(Value::from).collect() };
        let s = SweepSpec { mode: Mode::Steady, axes: vec![axis("a", vec![1.0, 2.0]), axis("b", vec![3.0, 4.0])], cartesian: true };
        assert_eq!(sweep_points(&s).len(), 4);
        let z = SweepSpec { cartesian: false, ..s };
        let p = sweep_points(&z);
        assert_eq!(p.len(), 2);
        assert_eq!(p[1][1].1, Value::from(4.0));
    }

    #[test]
    fn density_of_init() {
        let rho = junction_density(&JunctionInit::UpDown).unwrap();
        assert_eq!(rho[(2, 2)], C64::new(1.0, 0.0));
        assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
