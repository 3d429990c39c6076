use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use spinjunction::bath::{
    a_xxz_zero, corr_xx_numeric, corr_xxz_hp, decay_rate, half_fourier, BathSpec, CorrelationKernel, HalfFourierOptions,
    KernelKind, Polarization,
};
use spinjunction::linalg::C64;
use spinjunction::special::bessel_j0;

fn lead(jz: f64) -> BathSpec {
    BathSpec::polarized(1.0, jz, Polarization::Up)
}

#[test]
fn numeric_correlator_against_bessel_series() {
    let spec = lead(0.0);
    let times: Vec<f64> = (0..=100).map(|k| 0.5 * k as f64).collect();
    let g = corr_xx_numeric(&spec, &times).unwrap();
    for (t, v) in times.iter().zip(&g) {
        assert!((v - C64::new(bessel_j0(4.0 * t), 0.0)).norm() < 1e-6, "t = {t}");
    }
    assert!((corr_xx_numeric(&spec, &[0.0]).unwrap()[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    // power series J0(2) = sum (-1)^k / (k!)^2
    let mut series = 0.0;
    let mut term = 1.0;
    for k in 0..30 {
        series += term;
        term *= -1.0 / ((k + 1) as f64).powi(2);
    }
    assert!((corr_xxz_hp(&spec, &[0.5]).unwrap()[0].re - series).abs() < 1e-12);
}

#[test]
fn long_time_power_law() {
    let t = 10.0;
    let g = corr_xx_numeric(&lead(0.0), &[t]).unwrap()[0].re;
    let envelope = 1.0 / (2.0 * PI * t).sqrt();
    let asym = (PI / 4.0 - 4.0 * t).cos() * envelope;
    // relative to the envelope: t = 10 sits close to a node of the cosine
    assert!((g - asym).abs() < 0.03 * envelope, "{g} vs {asym}");
}

#[test]
fn anisotropy_enters_as_a_phase() {
    let g = corr_xxz_hp(&lead(1.0), &[0.5]).unwrap()[0];
    let want = C64::from_polar(bessel_j0(2.0), 2.0);
    assert!((g - want).norm() < 1e-14);
}

#[test]
fn rate_at_the_heisenberg_point_grows_like_inverse_root_eps() {
    let spec = lead(1.0);
    let a = decay_rate(0.0, &spec, 1.0, 1e-4).unwrap();
    let b = decay_rate(0.0, &spec, 1.0, 1e-6).unwrap();
    assert!(a.near_singular && b.near_singular);
    assert_relative_eq!(b.value.norm() / a.value.norm(), 10.0, max_relative = 1e-3);
}

#[test]
fn rate_outside_the_band_is_a_pure_shift() {
    for jz in [1.5, -1.5] {
        let r = decay_rate(0.0, &lead(jz), 1.0, 1e-12).unwrap();
        assert!(r.value.re.abs() < 1e-9 * r.value.im.abs());
        assert!(!r.near_singular);
    }
}

#[test]
fn constant_kernel_transform() {
    let k = CorrelationKernel::Sampled { kind: KernelKind::Tabulated, dt: 0.01, values: vec![C64::new(1.0, 0.0); 40_001] };
    let eta = 0.05;
    let opts = HalfFourierOptions { damping: eta, horizon: Some(400.0), dt: 0.01, tail_rel_tol: 1e-2 };
    for w in [0.0, 0.3, -1.2] {
        let got = half_fourier(&k, w, &opts).unwrap();
        let want = C64::new(1.0, 0.0) / C64::new(eta, -w);
        assert!((got - want).norm() < 1e-6 * want.norm(), "omega = {w}");
    }
}

#[test]
fn bessel_transform_at_zero_frequency_short_horizon() {
    let opts = HalfFourierOptions { damping: 1e-3, horizon: Some(2000.0), dt: 0.01, tail_rel_tol: 1e-2 };
    let v = half_fourier(&lead(0.0).hp_kernel(), 0.0, &opts).unwrap();
    assert!((v - C64::new(0.25, 0.0)).norm() < 1e-3 * 0.25);
}

// The default horizon 20/eta leaves an exp(-20) tail, so only the
// discretisation error remains.
#[test]
fn bessel_transform_matches_closed_rate() {
    let opts = HalfFourierOptions { damping: 1e-3, horizon: None, dt: 0.01, tail_rel_tol: 1e-2 };
    for jz in [0.0, 0.5] {
        let spec = lead(jz);
        let k = spec.hp_kernel();
        for w in [-2.5, -0.7, 0.0, 0.4, 1.9] {
            let hf = half_fourier(&k, w, &opts).unwrap();
            let cf = decay_rate(w, &spec, 1.0, 1e-3).unwrap().value;
            assert!((hf - cf).norm() < 1e-6 * cf.norm(), "jz {jz} omega {w}: {hf} vs {cf}");
        }
    }
}

#[test]
fn transform_converges_as_damping_shrinks() {
    let spec = lead(0.0);
    let k = spec.hp_kernel();
    let at = |eta: f64| {
        let o = HalfFourierOptions { damping: eta, horizon: Some(20.0 / eta), dt: 0.01, tail_rel_tol: 1.0 };
        half_fourier(&k, 0.0, &o).unwrap().re
    };
    let exact = 0.25;
    let (e2, e3) = ((at(1e-2) - exact).abs(), (at(1e-3) - exact).abs());
    assert!(e3 < e2);
    assert!(e3 < 1e-3 * exact);
}

#[test]
fn zero_frequency_weight_rises_then_vanishes() {
    let v = |jz: f64| a_xxz_zero(&lead(jz)).unwrap();
    assert!((v(0.0).0 - 1.0 / (2.0 * (2.0 * PI).sqrt())).abs() < 1e-12);
    assert_eq!(v(1.5).0, 0.0);
    let (inf, flag) = v(1.0);
    assert!(inf.is_infinite() && flag);
    let grid: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64 * 0.999).collect();
    for w in grid.windows(2) {
        assert!(v(w[1]).0 > v(w[0]).0);
    }
    assert!(v(0.9999).0 > 10.0);
}

proptest! {
    #[test]
    fn hp_kernel_conjugation_symmetry(jz in -2.0..2.0f64, t in 0.0..30.0f64) {
        let g = corr_xxz_hp(&lead(jz), &[t]).unwrap()[0];
        let unphased = g * C64::from_polar(1.0, -4.0 * jz * t);
        prop_assert!(unphased.im.abs() < 1e-14);
        prop_assert!(g.norm() <= 1.0 + 1e-14);
    }

    #[test]
    fn decay_rate_never_gains(omega in -10.0..10.0f64, jz in -2.0..2.0f64, eps in 1e-6..1e-1f64) {
        let r = decay_rate(omega, &lead(jz), 1.0, eps).unwrap();
        prop_assert!(r.value.re >= -1e-12);
    }
}
