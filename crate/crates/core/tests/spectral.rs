use spinjunction::bath::{BathSpec, Lead, Polarization};
use spinjunction::junction::{JunctionOperators, JunctionSpec};
use spinjunction::linalg::C64;
use spinjunction::pipeline::{steady_for, Mode, RunSpec};
use spinjunction::spectral::{asymptotic_current, rectification_from_means, spectral_function, stationary_pi_kernel};
use spinjunction::steady::GeneratorKind;

fn spec(jz: f64) -> RunSpec {
    let mut s = RunSpec::new(Mode::Spectral);
    s.left.jz = jz;
    s.right.jz = jz;
    s
}

fn leads(s: &RunSpec) -> [Lead; 2] {
    [Lead::hp(s.left.clone()), Lead::hp(s.right.clone())]
}

const DT: f64 = 0.05;
const N: usize = 8001;

fn a_of(s: &RunSpec, omegas: &[f64]) -> Vec<f64> {
    let rho = steady_for(s, GeneratorKind::Redfield).unwrap().rho;
    let k = stationary_pi_kernel(&rho, &s.junction, &leads(s), DT, N).unwrap();
    spectral_function(&k, 0.01, omegas).unwrap().a
}

#[test]
fn kernel_carries_no_coupling_factor() {
    let s = spec(0.5);
    let rho = steady_for(&s, GeneratorKind::Redfield).unwrap().rho;
    let weak = stationary_pi_kernel(&rho, &s.junction, &leads(&s), DT, 200).unwrap();
    let strong = JunctionSpec { gamma: 0.3, ..s.junction.clone() };
    let other = stationary_pi_kernel(&rho, &strong, &leads(&s), DT, 200).unwrap();
    assert_eq!(weak, other);
}

#[test]
fn unbiased_symmetric_junction_has_no_kernel() {
    let mut s = spec(0.5);
    s.junction.delta = 0.0;
    s.right.polarization = Polarization::Up;
    let rho = steady_for(&s, GeneratorKind::Redfield).unwrap().rho;
    let k = stationary_pi_kernel(&rho, &s.junction, &leads(&s), DT, 400).unwrap();
    for v in k.samples(DT, 400).unwrap() {
        assert!(v.norm() < 1e-14);
    }
}

#[test]
fn kernel_at_zero_lag_from_operator_averages() {
    let s = spec(0.9);
    let rho = steady_for(&s, GeneratorKind::Redfield).unwrap().rho;
    let k = stationary_pi_kernel(&rho, &s.junction, &leads(&s), DT, 4).unwrap();
    let ops = JunctionOperators::new(&s.junction).unwrap();
    let avg = |m: &spinjunction::linalg::CMatrix| (m * &rho).trace().re;
    let (sl, sr) = (ops.s[0].matrix(), ops.s[1].matrix());
    // up lead on the left (hole channel), down lead on the right (particle channel)
    let pi_l = C64::new(0.0, 2.0 * avg(&(sl * sl.adjoint())));
    let pi_r = C64::new(0.0, -2.0 * avg(&(sr.adjoint() * sr)));
    let want = (pi_l - pi_r) * 0.5;
    let got = k.samples(DT, 1).unwrap()[0];
    assert!((got - want).norm() < 1e-14, "{got} vs {want}");
}

#[test]
fn gapped_beyond_the_heisenberg_point() {
    let omegas: Vec<f64> = (-16..=16).map(|k| 0.25 * k as f64).collect();
    let a = a_of(&spec(1.5), &omegas);
    let outside = omegas.iter().zip(&a).filter(|(w, _)| w.abs() >= 2.5).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let inside = omegas.iter().zip(&a).filter(|(w, _)| w.abs() <= 1.0).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    assert!(inside < 1e-2 * outside, "inside {inside:.3e}, outside {outside:.3e}");
    let gapless = a_of(&spec(0.5), &[0.0])[0];
    assert!(gapless > 0.0);
    assert!(a_of(&spec(1.5), &[0.0])[0] < 1e-2 * gapless);
}

#[test]
fn zero_frequency_weight_gives_the_steady_current() {
    for jz in [0.0, 0.5, 0.9] {
        let s = spec(jz);
        let a0 = a_of(&s, &[0.0])[0];
        let i_gme = steady_for(&s, GeneratorKind::Redfield).unwrap().currents.unwrap().total;
        let i_pi = asymptotic_current(a0, s.junction.gamma);
        assert!((i_pi - i_gme).abs() < 0.1 * i_gme, "jz {jz}: {i_pi} vs {i_gme}");
    }
}

#[test]
fn conductivity_nonnegative_in_the_weak_coupling_regime() {
    for jz in [0.0, 0.3, 0.6, 0.9, 0.99, 1.2, 1.5] {
        for delta in [0.01, -0.01] {
            let mut s = spec(jz);
            s.junction.delta = delta;
            assert!(a_of(&s, &[0.0])[0] >= -1e-8, "jz {jz} delta {delta}");
        }
    }
}

#[test]
fn blocked_reverse_direction_is_perfect_rectification() {
    let r = rectification_from_means(0.01, 10.0, 0.3, 0.0).unwrap();
    assert_eq!(r.r, 1.0);
    assert_eq!(r.diode, 0.3);
}

#[test]
fn mirror_reverses_the_spectral_function() {
    let s = spec(0.5);
    let mut m = s.clone();
    m.left = BathSpec { polarization: Polarization::Down, ..s.left.clone() };
    m.right = BathSpec { polarization: Polarization::Up, ..s.right.clone() };
    m.junction.delta = -s.junction.delta;
    let a = a_of(&s, &[0.0, 0.7]);
    let b = a_of(&m, &[0.0, 0.7]);
    for (x, y) in a.iter().zip(&b) {
        assert!((x + y).abs() < 1e-10 * x.abs());
    }
}
