//! Lead correlation functions, decay rates and damped half-line transforms.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Problems, Result};
use crate::linalg::{C64, I, ZERO};
use crate::special::{bessel_j0, integrate};

/// Direction in which a lead is fully polarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Up,
    Down,
}

impl Polarization {
    pub fn flipped(self) -> Self {
        match self {
            Polarization::Up => Polarization::Down,
            Polarization::Down => Polarization::Up,
        }
    }
}

/// Parameters of one XXZ lead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    /// In-plane coupling J.
    pub j: f64,
    /// Anisotropy Jz.
    #[serde(default)]
    pub jz: f64,
    /// Chemical potential of the fermionic (XX) description.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Inverse temperature; `"inf"` in JSON for zero temperature.
    #[serde(default = "default_beta", with = "crate::serde_inf")]
    pub beta: f64,
    pub polarization: Polarization,
}

fn default_mu() -> f64 {
    100.0
}

fn default_beta() -> f64 {
    f64::INFINITY
}

impl BathSpec {
    pub fn polarized(j: f64, jz: f64, polarization: Polarization) -> Self {
        Self { j, jz, mu: default_mu(), beta: f64::INFINITY, polarization }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        self.problems(name).into_result()
    }

    pub(crate) fn problems(&self, name: &str) -> Problems {
        let mut p = Problems::default();
        p.positive(&format!("{name}.j"), self.j);
        p.finite(&format!("{name}.jz"), self.jz);
        p.finite(&format!("{name}.mu"), self.mu);
        p.check(self.beta > 0.0 && !self.beta.is_nan(), || {
            format!("{name}.beta must be positive (or \"inf\"), got {}", self.beta)
        });
        p
    }

    /// Holstein-Primakoff kernel `exp(4i Jz t) J0(4 J t)`.
    pub fn hp_kernel(&self) -> CorrelationKernel {
        CorrelationKernel::Bessel { j: self.j, jz: self.jz }
    }
}

/// How a kernel was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    AnalyticBessel,
    Quadrature,
    Tabulated,
    WhiteNoise,
}

/// A two-time lead correlation function `C(tau)`, tau >= 0.
#[derive(Clone, Debug, PartialEq)]
pub enum CorrelationKernel {
    /// `exp(4i Jz tau) J0(4 J tau)`.
    Bessel { j: f64, jz: f64 },
    /// Memoryless kernel whose half-line integral equals `weight`.
    WhiteNoise { weight: C64 },
    /// Samples at `tau_k = k * dt`.
    Sampled { kind: KernelKind, dt: f64, values: Vec<C64> },
}

impl CorrelationKernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            CorrelationKernel::Bessel { .. } => KernelKind::AnalyticBessel,
            CorrelationKernel::WhiteNoise { .. } => KernelKind::WhiteNoise,
            CorrelationKernel::Sampled { kind, .. } => *kind,
        }
    }

    /// Kernel values on `k * dt` for `k = 0..n`.
    ///
    /// A white-noise kernel is represented by a single spike whose trapezoid
    /// weight reproduces its half-line integral.
    pub fn samples(&self, dt: f64, n: usize) -> Result<Vec<C64>> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("kernel sampling step must be positive, got {dt}")));
        }
        match self {
            CorrelationKernel::Bessel { j, jz } => Ok((0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    C64::from_polar(bessel_j0(4.0 * j * t), 4.0 * jz * t)
                })
                .collect()),
            CorrelationKernel::WhiteNoise { weight } => {
                let mut v = vec![ZERO; n];
                if n > 0 {
                    v[0] = weight * (2.0 / dt);
                }
                Ok(v)
            }
            CorrelationKernel::Sampled { dt: step, values, .. } => {
                let ratio = dt / step;
                let stride = ratio.round();
                if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
                    return Err(Error::invalid(format!(
                        "sampled kernel step {step} does not divide requested step {dt}"
                    )));
                }
                let stride = stride as usize;
                let need = (n.max(1) - 1) * stride + 1;
                if n > 0 && values.len() < need {
                    return Err(Error::invalid(format!(
                        "sampled kernel covers {} points, {} needed",
                        values.len(),
                        need
                    )));
                }
                Ok((0..n).map(|k| values[k * stride]).collect())
            }
        }
    }

    /// Longest horizon available (infinite for closed forms).
    pub fn horizon(&self) -> f64 {
        match self {
            CorrelationKernel::Sampled { dt, values, .. } => dt * (values.len().max(1) - 1) as f64,
            _ => f64::INFINITY,
        }
    }
}

/// Correlators of one lead seen by the adjacent junction spin.
///
/// `hole` is `<B^dag(tau) B>` (nonzero for an up lead) and `particle` is
/// `<B(tau) B^dag>` (nonzero for a down lead).
#[derive(Clone, Debug, PartialEq)]
pub struct LeadCorrelations {
    pub hole: Option<CorrelationKernel>,
    pub particle: Option<CorrelationKernel>,
}

impl LeadCorrelations {
    /// Assign `kernel` to the channel selected by the polarization.
    pub fn polarized(polarization: Polarization, kernel: CorrelationKernel) -> Self {
        match polarization {
            Polarization::Up => Self { hole: Some(kernel), particle: None },
            Polarization::Down => Self { hole: None, particle: Some(kernel) },
        }
    }

    /// Holstein-Primakoff lead.
    pub fn hp(spec: &BathSpec) -> Self {
        Self::polarized(spec.polarization, spec.hp_kernel())
    }
}

/// A lead: its parameters and the correlators seen by the junction.
#[derive(Clone, Debug, PartialEq)]
pub struct Lead {
    pub spec: BathSpec,
    pub correlations: LeadCorrelations,
}

impl Lead {
    /// Lead described by the Holstein-Primakoff kernel.
    pub fn hp(spec: BathSpec) -> Self {
        let correlations = LeadCorrelations::hp(&spec);
        Self { spec, correlations }
    }

    /// Lead with a custom kernel in the channel fixed by its polarization.
    pub fn with_kernel(spec: BathSpec, kernel: CorrelationKernel) -> Self {
        let correlations = LeadCorrelations::polarized(spec.polarization, kernel);
        Self { spec, correlations }
    }
}

/// `G(t) = exp(4i Jz t) J0(4 J t)` at each time.
pub fn corr_xxz_hp(spec: &BathSpec, times: &[f64]) -> Result<Vec<C64>> {
    spec.validate("bath")?;
    Ok(times
        .iter()
        .map(|&t| C64::from_polar(bessel_j0(4.0 * spec.j * t), 4.0 * spec.jz * t))
        .collect())
}

fn fermi(omega: f64, mu: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        if omega < mu {
            1.0
        } else if omega > mu {
            0.0
        } else {
            0.5
        }
    } else {
        let x = beta * (omega - mu);
        if x > 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        }
    }
}

/// Thermal XX-lead correlator by adaptive quadrature over the band.
///
/// `G(t) = (1/pi) int_0^pi n(4J cos th) exp(i (4J cos th + 4Jz) t) d th`
/// with Fermi occupations `n`; reduces to `exp(4iJz t) J0(4Jt)` when the band
/// is full. With `complement` the occupations are replaced by `1 - n`.
pub fn corr_xx_numeric_channel(spec: &BathSpec, times: &[f64], complement: bool) -> Result<Vec<C64>> {
    spec.validate("bath")?;
    let (j, jz, mu, beta) = (spec.j, spec.jz, spec.mu, spec.beta);
    let mut breaks = Vec::new();
    if beta.is_infinite() && mu.abs() < 4.0 * j {
        breaks.push((mu / (4.0 * j)).acos());
    }
    times
        .iter()
        .map(|&t| {
            let f = |th: f64| {
                let w = 4.0 * j * th.cos();
                let n = fermi(w, mu, beta);
                let occ = if complement { 1.0 - n } else { n };
                C64::from_polar(occ, w * t)
            };
            let q = integrate(f, 0.0, PI, &breaks, 1e-13, 1e-13, 20_000)?;
            Ok(q.value / PI * C64::from_polar(1.0, 4.0 * jz * t))
        })
        .collect()
}

/// Hole-channel thermal XX correlator `<B^dag(t) B>`.
pub fn corr_xx_numeric(spec: &BathSpec, times: &[f64]) -> Result<Vec<C64>> {
    corr_xx_numeric_channel(spec, times, false)
}

/// Sampled quadrature kernel on `k * dt`, `k = 0..n`.
pub fn quadrature_kernel(spec: &BathSpec, dt: f64, n: usize, complement: bool) -> Result<CorrelationKernel> {
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let values = corr_xx_numeric_channel(spec, &times, complement)?;
    Ok(CorrelationKernel::Sampled { kind: KernelKind::Quadrature, dt, values })
}

/// Exact single-magnon return amplitude at the contact site of a finite
/// polarized lead of `sites` spins, sampled on `k * dt`, `k = 0..n`.
///
/// The contact site is an end of an open chain, so its magnon energy is
/// `-2 Jz` while bulk sites sit at `-4 Jz`; nearest-neighbour hopping is `2J`.
pub fn magnon_edge_kernel(spec: &BathSpec, sites: usize, dt: f64, n: usize) -> Result<CorrelationKernel> {
    spec.validate("bath")?;
    if sites == 0 {
        return Err(Error::invalid("a lead needs at least one site"));
    }
    let mut h = nalgebra::DMatrix::<f64>::zeros(sites, sites);
    for r in 0..sites {
        let bonds = usize::from(r > 0) + usize::from(r + 1 < sites);
        h[(r, r)] = -2.0 * spec.jz * bonds as f64;
        if r + 1 < sites {
            h[(r, r + 1)] = 2.0 * spec.j;
            h[(r + 1, r)] = 2.0 * spec.j;
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h, 1e-15, 100_000)
        .ok_or(Error::EigenNonConvergence)?;
    let weights: Vec<f64> = (0..sites).map(|m| eig.eigenvectors[(0, m)].powi(2)).collect();
    let values = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            weights
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(&w, &e)| C64::from_polar(w, -e * t))
                .sum()
        })
        .collect();
    Ok(CorrelationKernel::Sampled { kind: KernelKind::Tabulated, dt, values })
}

/// A decay rate together with a proximity flag for the band-edge singularity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateValue {
    pub value: C64,
    pub near_singular: bool,
}

/// Closed-form rate `gamma^2 int_0^inf exp(i omega tau - eps tau) G(tau) d tau`
/// for the Holstein-Primakoff kernel.
///
/// Equal to `i gamma^2 / (sqrt(z - 4J) sqrt(z + 4J))` with `z = 4Jz + omega + i eps`
/// and principal roots of each factor, which keeps `Re >= 0` on the whole real axis.
pub fn decay_rate(omega: f64, spec: &BathSpec, gamma: f64, eps: f64) -> Result<RateValue> {
    let mut p = spec.problems("bath");
    p.finite("omega", omega);
    p.finite("gamma", gamma);
    p.positive("epsilon", eps);
    p.into_result()?;
    let z = C64::new(4.0 * spec.jz + omega, eps);
    let edge = 4.0 * spec.j;
    let value = I * gamma * gamma / ((z - edge).sqrt() * (z + edge).sqrt());
    let dist = (z.re - edge).abs().min((z.re + edge).abs());
    Ok(RateValue { value, near_singular: dist <= 10.0 * eps })
}

/// Options for [`half_fourier`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfFourierOptions {
    /// Damping `eta` of `exp(-eta tau)`.
    pub damping: f64,
    /// Integration horizon; `None` picks `20 / eta`.
    pub horizon: Option<f64>,
    pub dt: f64,
    /// Accepted running-integral fluctuation over the last tenth of the
    /// horizon, relative to the result.
    pub tail_rel_tol: f64,
}

impl Default for HalfFourierOptions {
    fn default() -> Self {
        Self { damping: 1e-3, horizon: None, dt: 0.01, tail_rel_tol: 1e-2 }
    }
}

impl HalfFourierOptions {
    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(20.0 / self.damping)
    }
}

/// `int_0^T exp(i omega tau - eta tau) C(tau) d tau` by the trapezoid rule with
/// the leading Euler-Maclaurin end correction.
pub fn half_fourier(kernel: &CorrelationKernel, omega: f64, opts: &HalfFourierOptions) -> Result<C64> {
    let samples = HalfFourierSamples::new(kernel, opts)?;
    samples.transform(omega)
}

/// Kernel samples cached for repeated transforms at different frequencies.
#[derive(Clone, Debug)]
pub struct HalfFourierSamples {
    values: Vec<C64>,
    dt: f64,
    damping: f64,
    tail_rel_tol: f64,
    white: Option<C64>,
}

impl HalfFourierSamples {
    pub fn new(kernel: &CorrelationKernel, opts: &HalfFourierOptions) -> Result<Self> {
        let mut p = Problems::default();
        p.positive("damping", opts.damping);
        p.positive("dt", opts.dt);
        p.positive("horizon", opts.horizon());
        p.into_result()?;
        if let CorrelationKernel::WhiteNoise { weight } = kernel {
            return Ok(Self {
                values: Vec::new(),
                dt: opts.dt,
                damping: opts.damping,
                tail_rel_tol: opts.tail_rel_tol,
                white: Some(*weight),
            });
        }
        let horizon = opts.horizon().min(kernel.horizon());
        let n = (horizon / opts.dt).round() as usize + 1;
        if n < 8 {
            return Err(Error::invalid("half-line transform needs at least 8 samples"));
        }
        let values = kernel.samples(opts.dt, n)?;
        Ok(Self { values, dt: opts.dt, damping: opts.damping, tail_rel_tol: opts.tail_rel_tol, white: None })
    }

    pub fn transform(&self, omega: f64) -> Result<C64> {
        if let Some(w) = self.white {
            return Ok(w);
        }
        let limit = PI / self.dt;
        if omega.abs() > limit {
            return Err(Error::BeyondNyquist { omega, limit });
        }
        let n = self.values.len();
        let dt = self.dt;
        let rate = C64::new(-self.damping, omega);
        let step = (rate * dt).exp();
        let tail_start = n - n / 10;
        let mut phase = C64::new(1.0, 0.0);
        let mut f = [ZERO; 3];
        let mut sum = ZERO;
        let mut running_at_tail = ZERO;
        let mut tail_dev: f64 = 0.0;
        let mut last = [ZERO; 3];
        for (k, &c) in self.values.iter().enumerate() {
            if k % 1024 == 0 {
                phase = (rate * (k as f64 * dt)).exp();
            }
            let v = c * phase;
            if k < 3 {
                f[k] = v;
            }
            last.rotate_left(1);
            last[2] = v;
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            sum += v * w;
            if k >= tail_start {
                // running integral up to t_k with trapezoid closing weight
                let running = (sum - v * (w - 0.5)) * dt;
                if k == tail_start {
                    running_at_tail = running;
                }
                tail_dev = tail_dev.max((running - running_at_tail).norm());
            }
            phase *= step;
        }
        // one-sided second-order derivative estimates at both ends
        let d0 = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
        let dn = (3.0 * last[2] - 4.0 * last[1] + last[0]) / (2.0 * dt);
        let value = sum * dt - (dn - d0) * (dt * dt / 12.0);
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::NonFinite("half-line transform"));
        }
        if tail_dev > self.tail_rel_tol * value.norm() {
            return Err(Error::HorizonTooShort { tail: tail_dev, tol: self.tail_rel_tol * value.norm() });
        }
        Ok(value)
    }
}

/// Closed-form zero-frequency spectral weight of the XXZ lead,
/// `Re{[2 pi (J^2 - Jz^2)]^(-1/2)} / 2`.
///
/// Returns `(value, singular)`; at `|Jz| = J` the value is infinite and flagged.
pub fn a_xxz_zero(spec: &BathSpec) -> Result<(f64, bool)> {
    spec.validate("bath")?;
    let d = 2.0 * PI * (spec.j * spec.j - spec.jz * spec.jz);
    if d == 0.0 {
        return Ok((f64::INFINITY, true));
    }
    let v = C64::new(d, 0.0).sqrt().inv().re / 2.0;
    Ok((v, false))
}

/// Write `t, re, im` rows.
pub fn write_kernel_csv<W: Write>(mut w: W, times: &[f64], values: &[C64]) -> Result<()> {
    writeln!(w, "t,re,im")?;
    for (t, v) in times.iter().zip(values) {
        writeln!(w, "{t:.10e},{:.16e},{:.16e}", v.re, v.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn up(j: f64, jz: f64) -> BathSpec {
        BathSpec::polarized(j, jz, Polarization::Up)
    }

    #[test]
    fn hp_kernel_at_zero_and_jz_phase() {
        let g = corr_xxz_hp(&up(1.0, 0.0), &[0.0, 0.5]).unwrap();
        assert_eq!(g[0], C64::new(1.0, 0.0));
        assert!((g[1].re - 0.223_890_779_141_235_67).abs() < 1e-15);
        let g1 = corr_xxz_hp(&up(1.0, 0.3), &[0.5]).unwrap()[0];
        let expect = C64::from_polar(1.0, 4.0 * 0.3 * 0.5) * g[1];
        assert!((g1 - expect).norm() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_j() {
        assert!(matches!(corr_xxz_hp(&up(0.0, 0.0), &[0.0]), Err(Error::Validation(_))));
        assert!(matches!(corr_xxz_hp(&up(-1.0, 0.0), &[0.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn full_band_quadrature_reduces_to_bessel() {
        let spec = up(1.0, 0.0);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.7).collect();
        let q = corr_xx_numeric(&spec, &times).unwrap();
        for (t, v) in times.iter().zip(&q) {
            assert!((v - C64::new(bessel_j0(4.0 * t), 0.0)).norm() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn empty_band_gives_zero_and_complement_is_full() {
        let mut spec = up(1.0, 0.0);
        spec.mu = -100.0;
        let q = corr_xx_numeric(&spec, &[0.0, 1.0]).unwrap();
        assert!(q.iter().all(|v| v.norm() < 1e-14));
        let c = corr_xx_numeric_channel(&spec, &[1.0], true).unwrap();
        assert!((c[0].re - bessel_j0(4.0)).abs() < 1e-10);
    }

    #[test]
    fn half_filled_zero_temperature_at_t0() {
        let mut spec = up(1.0, 0.0);
        spec.mu = 0.0;
        let q = corr_xx_numeric(&spec, &[0.0]).unwrap();
        assert!((q[0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_reference_values() {
        let r = decay_rate(0.0, &up(1.0, 0.0), 1.0, 1e-12).unwrap();
        assert!((r.value - C64::new(0.25, 0.0)).norm() < 1e-9);
        assert!(!r.near_singular);
        // outside the band the rate is purely imaginary
        let r = decay_rate(0.0, &up(1.0, 1.5), 1.0, 1e-12).unwrap();
        assert!(r.value.re.abs() < 1e-9);
        // at the band edge the flag is raised
        let r = decay_rate(0.0, &up(1.0, 1.0), 1.0, 1e-6).unwrap();
        assert!(r.near_singular);
        assert!(r.value.norm() > 10.0);
    }

    #[test]
    fn decay_rate_real_part_nonnegative_on_both_band_sides() {
        for &w in &[-7.9, -6.0, -4.0, -1.0, 0.0, 2.0, 3.9, 5.0, -9.0] {
            let r = decay_rate(w, &up(1.0, 0.0), 0.1, 1e-6).unwrap();
            assert!(r.value.re >= 0.0, "omega = {w}: {}", r.value);
        }
    }

    #[test]
    fn half_fourier_matches_closed_form() {
        let spec = up(1.0, 0.4);
        let opts = HalfFourierOptions { damping: 0.02, ..Default::default() };
        let samples = HalfFourierSamples::new(&spec.hp_kernel(), &opts).unwrap();
        for &w in &[-3.0, -1.6, 0.0, 0.5, 2.0] {
            let num = samples.transform(w).unwrap();
            let exact = decay_rate(w, &spec, 1.0, 0.02).unwrap().value;
            assert!((num - exact).norm() < 1e-6 * exact.norm().max(1.0), "omega {w}: {num} vs {exact}");
        }
    }

    #[test]
    fn half_fourier_of_white_noise_is_its_weight() {
        let k = CorrelationKernel::WhiteNoise { weight: C64::new(0.3, 0.1) };
        let v = half_fourier(&k, 1.7, &HalfFourierOptions::default()).unwrap();
        assert_eq!(v, C64::new(0.3, 0.1));
    }

    #[test]
    fn half_fourier_rejects_short_horizon_and_nyquist() {
        let k = up(1.0, 0.0).hp_kernel();
        let opts = HalfFourierOptions { damping: 1e-4, horizon: Some(20.0), ..Default::default() };
        assert!(matches!(half_fourier(&k, 0.0, &opts), Err(Error::HorizonTooShort { .. })));
        let opts = HalfFourierOptions { damping: 0.1, ..Default::default() };
        assert!(matches!(half_fourier(&k, 400.0, &opts), Err(Error::BeyondNyquist { .. })));
    }

    #[test]
    fn a_xxz_zero_values() {
        let (v, s) = a_xxz_zero(&up(1.0, 0.0)).unwrap();
        assert!((v - 0.5 / (2.0 * PI).sqrt()).abs() < 1e-15 && !s);
        let (v, s) = a_xxz_zero(&up(1.0, 1.0)).unwrap();
        assert!(v.is_infinite() && s);
        let (v, _) = a_xxz_zero(&up(1.0, 1.5)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn edge_kernel_bulk_limit_and_single_site() {
        // Jz = 0: the edge of a long chain returns 2 J1(4t)/(4t), not J0(4t)
        let spec = up(1.0, 0.0);
        let k = magnon_edge_kernel(&spec, 200, 0.05, 101).unwrap();
        let v = k.samples(0.05, 101).unwrap();
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        // J1 via J1 = -J0' with a central difference
        let t = 5.0;
        let x = 4.0 * t;
        let j1 = -(bessel_j0(x + 1e-5) - bessel_j0(x - 1e-5)) / 2e-5;
        assert!((v[100].re - 2.0 * j1 / x).abs() < 1e-8);
        let one = magnon_edge_kernel(&up(1.0, 0.7), 1, 0.1, 5).unwrap();
        assert!(one.samples(0.1, 5).unwrap().iter().all(|c| (c - C64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn sampled_kernel_stride_and_coverage() {
        let k = CorrelationKernel::Sampled {
            kind: KernelKind::Tabulated,
            dt: 0.01,
            values: (0..101).map(|i| C64::new(i as f64, 0.0)).collect(),
        };
        let s = k.samples(0.02, 51).unwrap();
        assert_eq!(s[50], C64::new(100.0, 0.0));
        assert!(k.samples(0.02, 52).is_err());
        assert!(k.samples(0.015, 3).is_err());
    }

    #[test]
    fn beta_serialises_infinity() {
        let spec = up(1.0, 0.2);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"inf\""));
        let back: BathSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
