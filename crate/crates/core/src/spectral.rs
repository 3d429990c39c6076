//! Stationary current kernel, its spectral function and rectification metrics.

use serde::{Deserialize, Serialize};

use crate::bath::{CorrelationKernel, HalfFourierOptions, HalfFourierSamples, KernelKind, Lead};
use crate::born::{to_m4, CurrentTrace, Rotating};
use crate::error::{Error, Problems, Result};
use crate::linalg::{CMatrix, C64, I, ZERO};

/// Tabulate `Pi(tau) = (Pi_L(tau) - Pi_R(tau)) / 2` for a stationary junction state,
/// with `Pi_i(tau) = -2i Re[C_p(tau) s_p(tau) - C_h(tau) s_h(tau)]`,
/// `s_h = tr{S~_i(tau) S_i^dag rho}` and `s_p = tr{S~_i^dag(tau) S_i rho}`.
///
/// The long-time Born current is `-8i gamma^2 int_0^inf Pi(tau) d tau`.
pub fn stationary_pi_kernel(
    rho: &CMatrix,
    junction: &crate::junction::JunctionSpec,
    leads: &[Lead; 2],
    dt: f64,
    n: usize,
) -> Result<CorrelationKernel> {
    let mut p = junction.problems();
    p.positive("dt", dt);
    p.check(n >= 2, || "kernel needs at least two samples".into());
    p.check(rho.nrows() == 4 && rho.ncols() == 4, || "state must be 4x4".into());
    p.into_result()?;
    let rot = Rotating::new(junction)?;
    let r = to_m4(rho);
    let mut values = vec![ZERO; n];
    for (side, sign) in [(0usize, 0.5), (1usize, -0.5)] {
        let lead = &leads[side];
        let s0 = rot.s(side, 0.0);
        let hole_terms = rot.correlation_terms(side, false, &(s0.adjoint() * r));
        let part_terms = rot.correlation_terms(side, true, &(s0 * r));
        let hole = lead.correlations.hole.as_ref().map(|k| k.samples(dt, n)).transpose()?;
        let part = lead.correlations.particle.as_ref().map(|k| k.samples(dt, n)).transpose()?;
        let eval = |terms: &[(f64, C64)], t: f64| -> C64 {
            terms.iter().map(|&(w, c)| c * C64::from_polar(1.0, w * t)).sum()
        };
        for (k, v) in values.iter_mut().enumerate() {
            let t = k as f64 * dt;
            let mut x = ZERO;
            if let Some(c) = &part {
                x += c[k] * eval(&part_terms, t);
            }
            if let Some(c) = &hole {
                x -= c[k] * eval(&hole_terms, t);
            }
            *v += -2.0 * I * x.re * sign;
        }
    }
    Ok(CorrelationKernel::Sampled { kind: KernelKind::Tabulated, dt, values })
}

/// Spectral function of a tabulated kernel on a frequency grid.
///
/// `Pi(omega) = int_0^T exp(i omega tau - eta tau) Pi(tau) d tau` and
/// `A(omega) = Im Pi(omega)`, so that the asymptotic current is `8 gamma^2 A(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSeries {
    pub damping: f64,
    pub omega: Vec<f64>,
    pub a: Vec<f64>,
    pub re: Vec<f64>,
}

impl SpectralSeries {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "omega,a,re")?;
        for k in 0..self.omega.len() {
            writeln!(w, "{:.10e},{:.16e},{:.16e}", self.omega[k], self.a[k], self.re[k])?;
        }
        Ok(())
    }
}

pub fn spectral_function(kernel: &CorrelationKernel, damping: f64, omegas: &[f64]) -> Result<SpectralSeries> {
    let dt = match kernel {
        CorrelationKernel::Sampled { dt, .. } => *dt,
        _ => return Err(Error::invalid("spectral function needs a tabulated kernel")),
    };
    let limit = std::f64::consts::PI / dt;
    if let Some(&w) = omegas.iter().find(|w| w.abs() > limit) {
        return Err(Error::BeyondNyquist { omega: w, limit });
    }
    let opts = HalfFourierOptions { damping, horizon: Some(kernel.horizon()), dt, tail_rel_tol: f64::INFINITY };
    let samples = HalfFourierSamples::new(kernel, &opts)?;
    let mut a = Vec::with_capacity(omegas.len());
    let mut re = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let v = samples.transform(w)?;
        a.push(v.im);
        re.push(v.re);
    }
    Ok(SpectralSeries { damping, omega: omegas.to_vec(), a, re })
}

/// `I(inf) = 8 gamma^2 A(0)`.
pub fn asymptotic_current(a_zero: f64, gamma: f64) -> f64 {
    8.0 * gamma * gamma * a_zero
}

/// Rectification of a pair of runs with opposite staggered field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectificationReport {
    pub delta: f64,
    pub horizon: f64,
    /// Time-averaged current with `+Delta`.
    pub mean_plus: f64,
    /// Time-averaged current with `-Delta`.
    pub mean_minus: f64,
    /// `(I_+ - I_-) / (I_+ + I_-)`.
    pub r: f64,
    /// Current in the favoured direction times `|R|`.
    pub diode: f64,
}

/// Build a report from already averaged currents.
pub fn rectification_from_means(delta: f64, horizon: f64, plus: f64, minus: f64) -> Result<RectificationReport> {
    let mut p = Problems::default();
    p.finite("mean current (+Delta)", plus);
    p.finite("mean current (-Delta)", minus);
    p.into_result()?;
    let denom = plus + minus;
    if denom.abs() <= 1e-14 * plus.abs().max(minus.abs()).max(f64::MIN_POSITIVE) || denom == 0.0 {
        return Err(Error::UndefinedRectification { plus, minus });
    }
    let r = (plus - minus) / denom;
    let favoured = if r >= 0.0 { plus } else { minus };
    Ok(RectificationReport { delta, horizon, mean_plus: plus, mean_minus: minus, r, diode: favoured * r.abs() })
}

/// `R_Delta` and the diode factor from paired current traces averaged over `[0, T]`.
pub fn rectification(plus: &CurrentTrace, minus: &CurrentTrace, delta: f64, horizon: f64) -> Result<RectificationReport> {
    let a = plus.time_average(horizon)?;
    let b = minus.time_average(horizon)?;
    rectification_from_means(delta, horizon, a, b)
}

/// Linear-response rectification `Delta / sqrt(J_S^2 + Delta^2)` at the Heisenberg
/// point in the long-time limit.
pub fn kubo_rectification_closed(j_s: f64, delta: f64) -> f64 {
    let n = (j_s * j_s + delta * delta).sqrt();
    if n == 0.0 {
        0.0
    } else {
        delta / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::CurrentMethod;
    use proptest::prelude::*;

    fn trace(v: f64) -> CurrentTrace {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        CurrentTrace::new(CurrentMethod::Kubo, times, vec![2.0 * v; 11], vec![0.0; 11])
    }

    #[test]
    fn closed_form_values() {
        assert!((kubo_rectification_closed(0.01, 0.01) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(kubo_rectification_closed(0.01, 0.0), 0.0);
        assert_eq!(kubo_rectification_closed(0.0, 0.0), 0.0);
        assert_eq!(kubo_rectification_closed(0.0, 0.3), 1.0);
    }

    #[test]
    fn rectification_of_equal_runs_is_zero() {
        let r = rectification(&trace(0.3), &trace(0.3), 0.01, 10.0).unwrap();
        assert_eq!(r.r, 0.0);
        assert_eq!(r.diode, 0.0);
    }

    #[test]
    fn vanishing_currents_are_undefined() {
        assert!(matches!(
            rectification(&trace(0.0), &trace(0.0), 0.01, 10.0),
            Err(Error::UndefinedRectification { .. })
        ));
    }

    #[test]
    fn nyquist_guard() {
        let k = CorrelationKernel::Sampled { kind: KernelKind::Tabulated, dt: 0.1, values: vec![ZERO; 100] };
        assert!(matches!(spectral_function(&k, 0.1, &[40.0]), Err(Error::BeyondNyquist { .. })));
    }

    proptest! {
        #[test]
        fn rectification_antisymmetric_and_bounded(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            prop_assume!(a + b > 1e-6);
            let fwd = rectification_from_means(0.1, 1.0, a, b).unwrap();
            let rev = rectification_from_means(-0.1, 1.0, b, a).unwrap();
            prop_assert!((fwd.r + rev.r).abs() < 1e-14);
            prop_assert!(fwd.r.abs() <= 1.0 + 1e-15);
            prop_assert!(fwd.diode >= 0.0);
        }
    }
}
