//! Time-nonlocal Born master equation and its linear-response (Kubo) limit.
//!
//! Everything is in the interaction picture with respect to `H_S`. The memory
//! integral of lead `i` is carried by
//! `A_h(t) = int_0^t C_h(t - t') S~^dag(t') rho~(t') dt'` and
//! `A_p(t) = int_0^t C_p(t - t') S~(t') rho~(t') dt'`, and the lead contributes
//! `D_i = -4 gamma^2 ([S~, A_h] + [S~^dag, A_p]) + h.c.` to `d rho~ / dt`.

use std::io::Write;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::bath::Lead;
use crate::error::{Error, Result};
use crate::junction::{JunctionOperators, JunctionSpec, Side};
use crate::linalg::{eigensystem, hermitian_eigenvalues, CMatrix, C64, ZERO};

pub type M4 = Matrix4<C64>;

pub(crate) fn to_m4(m: &CMatrix) -> M4 {
    M4::from_fn(|i, j| m[(i, j)])
}

pub(crate) fn to_dyn(m: &M4) -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

fn tr_prod(a: &M4, b: &M4) -> C64 {
    let mut acc = ZERO;
    for i in 0..4 {
        for k in 0..4 {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Interaction-picture junction operators on demand.
#[derive(Clone, Debug)]
pub(crate) struct Rotating {
    energies: [f64; 4],
    v: M4,
    s_eig: [M4; 2],
    z_eig: [M4; 2],
}

impl Rotating {
    pub fn new(junction: &JunctionSpec) -> Result<Self> {
        let ops = JunctionOperators::new(junction)?;
        let es = eigensystem(&ops.h, 0.0)?;
        let v = to_m4(es.vectors());
        let vd = v.adjoint();
        let e = es.energies();
        let s_eig = [vd * to_m4(ops.s[0].matrix()) * v, vd * to_m4(ops.s[1].matrix()) * v];
        let z_eig = [vd * to_m4(ops.z[0].matrix()) * v, vd * to_m4(ops.z[1].matrix()) * v];
        Ok(Self { energies: [e[0], e[1], e[2], e[3]], v, s_eig, z_eig })
    }

    fn rotate(&self, op: &M4, t: f64) -> M4 {
        let ph = M4::from_fn(|a, b| op[(a, b)] * C64::from_polar(1.0, (self.energies[a] - self.energies[b]) * t));
        self.v * ph * self.v.adjoint()
    }

    /// `S~_i(t) = exp(i H t) S_i exp(-i H t)`.
    pub fn s(&self, side: usize, t: f64) -> M4 {
        self.rotate(&self.s_eig[side], t)
    }

    pub fn z(&self, side: usize, t: f64) -> M4 {
        self.rotate(&self.z_eig[side], t)
    }

    /// Frequencies and weights of `tr{S~_i(tau) Y}` (or with `S~_i^dag`):
    /// `sum_ab exp(i (E_a - E_b) tau) X_ab (V^dag Y V)_ba`.
    pub fn correlation_terms(&self, side: usize, dagger: bool, y: &M4) -> Vec<(f64, C64)> {
        let x = if dagger { self.s_eig[side].adjoint() } else { self.s_eig[side] };
        let ye = self.v.adjoint() * y * self.v;
        let mut out = Vec::with_capacity(16);
        for a in 0..4 {
            for b in 0..4 {
                let w = x[(a, b)] * ye[(b, a)];
                if w.norm() > 0.0 {
                    out.push((self.energies[a] - self.energies[b], w));
                }
            }
        }
        out
    }

    /// Schrodinger-picture state from an interaction-picture one.
    pub fn to_schrodinger(&self, rho: &M4, t: f64) -> M4 {
        let vd = self.v.adjoint();
        let inner = vd * rho * self.v;
        let ph = M4::from_fn(|a, b| inner[(a, b)] * C64::from_polar(1.0, -(self.energies[a] - self.energies[b]) * t));
        self.v * ph * vd
    }
}

/// Step size, horizon and failure thresholds of the Born integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BornOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Memory cutoff; `None` keeps the full history.
    #[serde(default)]
    pub memory: Option<f64>,
    #[serde(default = "default_trace_tol")]
    pub trace_tol: f64,
}

fn default_trace_tol() -> f64 {
    1e-6
}

impl BornOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self { dt, horizon, memory: None, trace_tol: default_trace_tol() }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Largest energy scale that the time step must resolve.
fn energy_scale(junction: &JunctionSpec, leads: &[Lead; 2]) -> f64 {
    let mut s = junction.j_s.abs().max(junction.delta.abs());
    for l in leads {
        s = s.max(l.spec.j);
    }
    s
}

fn validate(junction: &JunctionSpec, leads: &[Lead; 2], opts: &BornOptions, rho0: &CMatrix) -> Result<()> {
    let mut p = junction.problems();
    p.extend(leads[0].spec.problems("left"));
    p.extend(leads[1].spec.problems("right"));
    p.positive("dt", opts.dt);
    p.positive("horizon", opts.horizon);
    if let Some(m) = opts.memory {
        p.positive("memory", m);
    }
    let scale = energy_scale(junction, leads);
    if opts.dt > 0.0 && scale > 0.0 {
        p.check(opts.dt <= 0.02 / scale * (1.0 + 1e-12), || {
            format!("dt = {} must not exceed 0.02 / {scale} to resolve the fastest scale", opts.dt)
        });
    }
    p.check(opts.steps() <= 5_000_000, || format!("{} steps exceed the history limit", opts.steps()));
    p.check(rho0.nrows() == 4 && rho0.ncols() == 4, || "initial state must be 4x4".into());
    if rho0.nrows() == 4 && rho0.ncols() == 4 {
        p.check((rho0 - rho0.adjoint()).norm() < 1e-10, || "initial state must be Hermitian".into());
        p.check((rho0.trace() - C64::new(1.0, 0.0)).norm() < 1e-10, || "initial state must have unit trace".into());
        p.check(hermitian_eigenvalues(rho0)[0] > -1e-10, || "initial state must be positive".into());
    }
    p.into_result()
}

/// Kernel samples for both channels of both leads on the step grid.
#[derive(Clone, Debug)]
pub(crate) struct ChannelSamples {
    pub hole: [Option<Vec<C64>>; 2],
    pub particle: [Option<Vec<C64>>; 2],
}

impl ChannelSamples {
    pub fn new(leads: &[Lead; 2], dt: f64, n: usize) -> Result<Self> {
        let get = |k: &Option<crate::bath::CorrelationKernel>| k.as_ref().map(|k| k.samples(dt, n)).transpose();
        Ok(Self {
            hole: [get(&leads[0].correlations.hole)?, get(&leads[1].correlations.hole)?],
            particle: [get(&leads[0].correlations.particle)?, get(&leads[1].correlations.particle)?],
        })
    }
}

/// Stored interaction-picture trajectory with the quantities the memory sums need.
#[derive(Clone, Debug)]
pub struct MemoryHistory {
    pub dt: f64,
    pub gamma: f64,
    pub times: Vec<f64>,
    /// Interaction-picture states `rho~(t_k)`.
    pub rho: Vec<M4>,
    /// `tr{Z~_i(t) D_i(t)}`: rate of change of `Z_i` due to lead `i`.
    pub dissipator_current: [Vec<f64>; 2],
    pub warnings: Vec<String>,
    pub(crate) rot: Rotating,
    pub(crate) kernels: ChannelSamples,
    memory_steps: usize,
}

impl MemoryHistory {
    /// Schrodinger-picture density matrix at step `k`.
    pub fn state(&self, k: usize) -> CMatrix {
        to_dyn(&self.rot.to_schrodinger(&self.rho[k], self.times[k]))
    }

    /// `<Z_i>(t_k)`.
    pub fn magnetisation(&self, side: Side, k: usize) -> f64 {
        tr_prod(&self.rot.z(side.index(), self.times[k]), &self.rho[k]).re
    }
}

struct Channel {
    side: usize,
    /// true: hole channel, Y = S~^dag rho~; false: particle channel, Y = S~ rho~.
    hole: bool,
    c: Vec<C64>,
    y: Vec<M4>,
}

impl Channel {
    fn y_of(&self, s: &M4, rho: &M4) -> M4 {
        if self.hole {
            s.adjoint() * rho
        } else {
            s * rho
        }
    }

    /// Memory sum at step `n` without its `k = n` endpoint.
    fn partial(&self, n: usize, dt: f64, memory: usize) -> M4 {
        if n == 0 {
            return M4::zeros();
        }
        let start = n.saturating_sub(memory);
        let mut acc = M4::zeros();
        for k in start..n {
            let w = if k == start { 0.5 } else { 1.0 };
            acc += self.y[k] * (self.c[n - k] * w);
        }
        acc * C64::new(dt, 0.0)
    }

    fn endpoint(&self, y: &M4, n: usize, dt: f64) -> M4 {
        if n == 0 {
            M4::zeros()
        } else {
            y * (self.c[0] * (0.5 * dt))
        }
    }
}

fn dissipator(s: &M4, a: &M4, hole: bool, g2: f64) -> M4 {
    let c = if hole { s * a - a * s } else { s.adjoint() * a - a * s.adjoint() };
    let c = c * C64::new(-4.0 * g2, 0.0);
    c + c.adjoint()
}

/// Integrate the Born master equation from `rho0` (Schrodinger picture at t = 0)
/// with a trapezoid memory sum and a Heun predictor-corrector step.
pub fn integrate_born(
    rho0: &CMatrix,
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    opts: &BornOptions,
) -> Result<MemoryHistory> {
    validate(junction, leads, opts, rho0)?;
    let dt = opts.dt;
    let steps = opts.steps();
    let memory = opts.memory.map(|m| (m / dt).round() as usize).unwrap_or(usize::MAX);
    let rot = Rotating::new(junction)?;
    let kernels = ChannelSamples::new(leads, dt, steps + 1)?;
    let g2 = junction.gamma * junction.gamma;

    let mut channels: Vec<Channel> = Vec::new();
    for side in 0..2 {
        if let Some(c) = &kernels.hole[side] {
            channels.push(Channel { side, hole: true, c: c.clone(), y: Vec::with_capacity(steps + 1) });
        }
        if let Some(c) = &kernels.particle[side] {
            channels.push(Channel { side, hole: false, c: c.clone(), y: Vec::with_capacity(steps + 1) });
        }
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut rhos = Vec::with_capacity(steps + 1);
    let mut dcur = [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)];
    let mut warnings = Vec::new();

    // Right-hand side given per-channel endpoint-free sums and a trial state at step n.
    let rhs = |channels: &[Channel], partials: &[M4], rho: &M4, n: usize, s_now: &[M4; 2]| -> ([M4; 2], M4) {
        let mut per_side = [M4::zeros(), M4::zeros()];
        for (ch, p) in channels.iter().zip(partials) {
            let y = ch.y_of(&s_now[ch.side], rho);
            let a = p + ch.endpoint(&y, n, dt);
            per_side[ch.side] += dissipator(&s_now[ch.side], &a, ch.hole, g2);
        }
        let total = per_side[0] + per_side[1];
        (per_side, total)
    };

    let mut rho = to_m4(rho0);
    let s_now = [rot.s(0, 0.0), rot.s(1, 0.0)];
    let zeros: Vec<M4> = vec![M4::zeros(); channels.len()];
    let (mut parts_now, mut f_now) = rhs(&channels, &zeros, &rho, 0, &s_now);
    for ch in channels.iter_mut() {
        let y = ch.y_of(&s_now[ch.side], &rho);
        ch.y.push(y);
    }
    let record = |t: f64, parts: &[M4; 2], rho: &M4, times: &mut Vec<f64>, rhos: &mut Vec<M4>, dcur: &mut [Vec<f64>; 2]| {
        times.push(t);
        rhos.push(*rho);
        for side in 0..2 {
            dcur[side].push(tr_prod(&rot.z(side, t), &parts[side]).re);
        }
    };
    record(0.0, &parts_now, &rho, &mut times, &mut rhos, &mut dcur);
    let mut negative_reported = false;

    for n in 0..steps {
        let t1 = (n + 1) as f64 * dt;
        let s_next = [rot.s(0, t1), rot.s(1, t1)];
        let partials: Vec<M4> = channels.iter().map(|c| c.partial(n + 1, dt, memory)).collect();
        let rho_pred = rho + f_now * C64::new(dt, 0.0);
        let (_, f_pred) = rhs(&channels, &partials, &rho_pred, n + 1, &s_next);
        rho += (f_now + f_pred) * C64::new(0.5 * dt, 0.0);
        let (parts, f) = rhs(&channels, &partials, &rho, n + 1, &s_next);
        for ch in channels.iter_mut() {
            let y = ch.y_of(&s_next[ch.side], &rho);
            ch.y.push(y);
        }
        parts_now = parts;
        f_now = f;
        record(t1, &parts_now, &rho, &mut times, &mut rhos, &mut dcur);

        let drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
        if !drift.is_finite() {
            return Err(Error::NonFinite("Born state"));
        }
        if drift > opts.trace_tol {
            return Err(Error::TraceDrift { time: t1, drift });
        }
        if !negative_reported && (n + 1) % 64 == 0 {
            let min = hermitian_eigenvalues(&to_dyn(&rho))[0];
            if min < -1e-6 {
                negative_reported = true;
                let msg = format!("Born state has negative eigenvalue {min:.3e} at t = {t1}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(MemoryHistory {
        dt,
        gamma: junction.gamma,
        times,
        rho: rhos,
        dissipator_current: dcur,
        warnings,
        rot,
        kernels,
        memory_steps: memory,
    })
}

/// How a current trace was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentMethod {
    Born,
    Kubo,
    Oracle,
}

/// Junction current series. `total = (left - right) / 2`, where `left` is the
/// rate at which the left lead raises `<Z_L>` and `right` the rate at which the
/// right lead raises `<Z_R>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentTrace {
    pub method: CurrentMethod,
    pub times: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub total: Vec<f64>,
}

impl CurrentTrace {
    pub fn new(method: CurrentMethod, times: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Self {
        let total = left.iter().zip(&right).map(|(l, r)| 0.5 * (l - r)).collect();
        Self { method, times, left, right, total }
    }

    /// Trapezoid time average of `total` over `[0, t_max]`.
    pub fn time_average(&self, t_max: f64) -> Result<f64> {
        let n = self.times.iter().take_while(|&&t| t <= t_max * (1.0 + 1e-12)).count();
        if n < 2 {
            return Err(Error::invalid(format!("trace has fewer than two samples up to t = {t_max}")));
        }
        let mut acc = 0.0;
        for k in 1..n {
            acc += 0.5 * (self.total[k] + self.total[k - 1]) * (self.times[k] - self.times[k - 1]);
        }
        Ok(acc / (self.times[n - 1] - self.times[0]))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,left,right,total")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.10e},{:.16e},{:.16e},{:.16e}",
                self.times[k], self.left[k], self.right[k], self.total[k]
            )?;
        }
        Ok(())
    }
}

/// Current from the stored history via the two-time correlation route:
/// `I_i(t) = 16 gamma^2 int_0^t Re[C_h s_h - C_p s_p] dt'` with
/// `s_h = tr{S~(t) S~^dag(t') rho~(t')}` and `s_p = tr{S~^dag(t) S~(t') rho~(t')}`.
pub fn born_current(history: &MemoryHistory) -> CurrentTrace {
    let n = history.times.len();
    let dt = history.dt;
    let g2 = history.gamma * history.gamma;
    let rot = &history.rot;
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for side in 0..2 {
        let hole = history.kernels.hole[side].as_ref();
        let part = history.kernels.particle[side].as_ref();
        if hole.is_none() && part.is_none() {
            continue;
        }
        let s: Vec<M4> = history.times.iter().map(|&t| rot.s(side, t)).collect();
        // S~^dag(t') rho~(t') and S~(t') rho~(t')
        let yh: Vec<M4> = s.iter().zip(&history.rho).map(|(s, r)| s.adjoint() * r).collect();
        let yp: Vec<M4> = s.iter().zip(&history.rho).map(|(s, r)| s * r).collect();
        for m in 1..n {
            let start = m.saturating_sub(history.memory_steps);
            let sd = s[m].adjoint();
            let mut acc = 0.0;
            for k in start..=m {
                let w = if k == start || k == m { 0.5 } else { 1.0 };
                let mut v = ZERO;
                if let Some(c) = hole {
                    v += c[m - k] * tr_prod(&s[m], &yh[k]);
                }
                if let Some(c) = part {
                    v -= c[m - k] * tr_prod(&sd, &yp[k]);
                }
                acc += w * v.re;
            }
            out[side][m] = 16.0 * g2 * acc * dt;
        }
    }
    let [left, right] = out;
    CurrentTrace::new(CurrentMethod::Born, history.times.clone(), left, right)
}

/// Linear-response current: the Born current with `rho~(t')` replaced by the
/// initial junction state.
///
/// When `rho0` commutes with `H_S` the two-time correlators depend only on the
/// time difference and the cost is linear in the number of steps.
pub fn kubo_current(
    rho0: &CMatrix,
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    dt: f64,
    horizon: f64,
) -> Result<CurrentTrace> {
    kubo_impl(rho0, junction, leads, dt, horizon, false)
}

fn kubo_impl(
    rho0: &CMatrix,
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    dt: f64,
    horizon: f64,
    force_general: bool,
) -> Result<CurrentTrace> {
    let opts = BornOptions::new(dt, horizon);
    validate(junction, leads, &opts, rho0)?;
    let steps = opts.steps();
    let rot = Rotating::new(junction)?;
    let kernels = ChannelSamples::new(leads, dt, steps + 1)?;
    let ops = JunctionOperators::new(junction)?;
    let g2 = junction.gamma * junction.gamma;
    let r0 = to_m4(rho0);
    let h = to_m4(ops.h.matrix());
    let stationary = !force_general && (h * r0 - r0 * h).norm() <= 1e-12 * h.norm().max(1.0);
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut out = [vec![0.0; steps + 1], vec![0.0; steps + 1]];
    for side in 0..2 {
        let hole = kernels.hole[side].as_ref();
        let part = kernels.particle[side].as_ref();
        if hole.is_none() && part.is_none() {
            continue;
        }
        let s0 = rot.s(side, 0.0);
        if stationary {
            // g_h(tau) = tr{S~(tau) S^dag rho0}, g_p(tau) = tr{S~^dag(tau) S rho0}
            let yh = s0.adjoint() * r0;
            let yp = s0 * r0;
            let integrand: Vec<f64> = times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let st = rot.s(side, t);
                    let mut v = ZERO;
                    if let Some(c) = hole {
                        v += c[k] * tr_prod(&st, &yh);
                    }
                    if let Some(c) = part {
                        v -= c[k] * tr_prod(&st.adjoint(), &yp);
                    }
                    v.re
                })
                .collect();
            let mut acc = 0.0;
            for m in 1..=steps {
                acc += 0.5 * (integrand[m] + integrand[m - 1]) * dt;
                out[side][m] = 16.0 * g2 * acc;
            }
        } else {
            let s: Vec<M4> = times.iter().map(|&t| rot.s(side, t)).collect();
            let yh: Vec<M4> = s.iter().map(|s| s.adjoint() * r0).collect();
            let yp: Vec<M4> = s.iter().map(|s| s * r0).collect();
            for m in 1..=steps {
                let sd = s[m].adjoint();
                let mut acc = 0.0;
                for k in 0..=m {
                    let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                    let mut v = ZERO;
                    if let Some(c) = hole {
                        v += c[m - k] * tr_prod(&s[m], &yh[k]);
                    }
                    if let Some(c) = part {
                        v -= c[m - k] * tr_prod(&sd, &yp[k]);
                    }
                    acc += w * v.re;
                }
                out[side][m] = 16.0 * g2 * acc * dt;
            }
        }
    }
    let [left, right] = out;
    Ok(CurrentTrace::new(CurrentMethod::Kubo, times, left, right))
}
