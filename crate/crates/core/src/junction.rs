//! The two-spin junction: Hamiltonian, coupling operators and jump operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Problems, Result};
use crate::linalg::{embed, eigensystem, pauli, CMatrix, EigenSystem, HilbertSpace, Operator, C64, I};

/// Junction parameters. `gamma` is the junction-lead coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    /// In-plane coupling between the two junction spins.
    pub j_s: f64,
    /// Staggered field: `+Delta` on the left spin, `-Delta` on the right.
    #[serde(default)]
    pub delta: f64,
    /// Anisotropy between the junction spins.
    #[serde(default)]
    pub jz_sys: f64,
    pub gamma: f64,
}

impl JunctionSpec {
    pub fn validate(&self) -> Result<()> {
        self.problems().into_result()
    }

    pub(crate) fn problems(&self) -> Problems {
        let mut p = Problems::default();
        p.finite("junction.j_s", self.j_s);
        p.finite("junction.delta", self.delta);
        p.finite("junction.jz_sys", self.jz_sys);
        p.non_negative("junction.gamma", self.gamma);
        p
    }

    /// Same junction with the staggered field reversed.
    pub fn mirrored_field(&self) -> Self {
        Self { delta: -self.delta, ..self.clone() }
    }
}

/// Which lead a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }
}

/// `H_S = 2 J_S (s_L s_R^dag + h.c.) + Delta (Z_L - Z_R) + Jz_sys Z_L Z_R`.
pub fn build_hs(spec: &JunctionSpec) -> Result<Operator> {
    spec.validate()?;
    let sp = HilbertSpace::junction();
    let sl = embed(&pauli::sigma(), "L", &sp)?;
    let sr = embed(&pauli::sigma(), "R", &sp)?;
    let zl = embed(&pauli::z(), "L", &sp)?;
    let zr = embed(&pauli::z(), "R", &sp)?;
    let hop = &sl * &sr.dagger();
    let hop = &hop + &hop.dagger();
    let h = &(&(&hop * (2.0 * spec.j_s)) + &(&(&zl - &zr) * spec.delta)) + &(&(&zl * &zr) * spec.jz_sys);
    Ok(h)
}

/// Junction operators used by the dynamics modules.
#[derive(Clone, Debug)]
pub struct JunctionOperators {
    pub space: HilbertSpace,
    pub h: Operator,
    /// Lowering operator of the junction spin touching each lead.
    pub s: [Operator; 2],
    pub z: [Operator; 2],
}

impl JunctionOperators {
    pub fn new(spec: &JunctionSpec) -> Result<Self> {
        let space = HilbertSpace::junction();
        let h = build_hs(spec)?;
        let s = [embed(&pauli::sigma(), "L", &space)?, embed(&pauli::sigma(), "R", &space)?];
        let z = [embed(&pauli::z(), "L", &space)?, embed(&pauli::z(), "R", &space)?];
        Ok(Self { space, h, s, z })
    }
}

/// One spectrally resolved coupling operator `K_alpha(omega)`.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    pub side: Side,
    /// `0` for `K_0 = S + S^dag`, `1` for `K_1 = i (S^dag - S)`.
    pub alpha: usize,
    pub omega: f64,
    pub op: CMatrix,
}

/// All nonzero `K_alpha(omega) = sum_{E' - E = omega} P(E) K_alpha P(E')`.
#[derive(Clone, Debug)]
pub struct JumpOperatorSet {
    pub eigen: EigenSystem,
    pub frequencies: Vec<f64>,
    pub ops: Vec<JumpOperator>,
    /// Largest norm of any zero-frequency component (zero for generic spectra).
    pub zero_frequency_norm: f64,
}

/// Hermitian couplings `K_0, K_1` of one side.
pub fn coupling_components(s: &CMatrix) -> [CMatrix; 2] {
    let sd = s.adjoint();
    [s + &sd, (&sd - s) * I]
}

/// Decompose the side couplings into Bohr-frequency components of `H_S`.
pub fn build_jump_operators(spec: &JunctionSpec, degeneracy_tol: f64) -> Result<JumpOperatorSet> {
    let ops = JunctionOperators::new(spec)?;
    let eigen = eigensystem(&ops.h, degeneracy_tol)?;
    let frequencies = eigen.frequencies();
    let mut out = Vec::new();
    let mut zero_norm: f64 = 0.0;
    for side in Side::BOTH {
        let ks = coupling_components(ops.s[side.index()].matrix());
        for (alpha, k) in ks.iter().enumerate() {
            let mut parts = vec![CMatrix::zeros(4, 4); frequencies.len()];
            for a in eigen.levels() {
                for b in eigen.levels() {
                    let w = b.energy - a.energy;
                    let idx = frequencies
                        .iter()
                        .position(|&f| (f - w).abs() <= degeneracy_tol)
                        .ok_or_else(|| Error::invalid("Bohr frequency grouping is inconsistent"))?;
                    parts[idx] += &a.projector * k * &b.projector;
                }
            }
            for (idx, op) in parts.into_iter().enumerate() {
                let w = frequencies[idx];
                let n = op.norm();
                if w.abs() <= degeneracy_tol {
                    zero_norm = zero_norm.max(n);
                }
                if n > 1e-13 {
                    out.push(JumpOperator { side, alpha, omega: w, op });
                }
            }
        }
    }
    Ok(JumpOperatorSet { eigen, frequencies, ops: out, zero_frequency_norm: zero_norm })
}

/// Spin-current operator `-4i gamma (B S^dag - S B^dag)` on the two-site
/// space `[bath, junction]`.
pub fn current_operator(gamma: f64) -> Result<Operator> {
    let sp = HilbertSpace::new(["B", "S"])?;
    let b = embed(&pauli::sigma(), "B", &sp)?;
    let s = embed(&pauli::sigma(), "S", &sp)?;
    let x = &b * &s.dagger();
    Ok((&x - &x.dagger()).scale(C64::new(0.0, -4.0 * gamma)))
}

/// `<S_L(t) S_L^dag(0)>` in the junction state `|down down>`:
/// `exp(2i Jz_sys t) [cos(2 Omega t) - i Delta sin(2 Omega t) / Omega]`,
/// `Omega = sqrt(Delta^2 + J_S^2)`.
pub fn system_corr_down(t: f64, spec: &JunctionSpec) -> C64 {
    let omega = (spec.delta * spec.delta + spec.j_s * spec.j_s).sqrt();
    let (c, s_over) = if omega > 0.0 {
        ((2.0 * omega * t).cos(), (2.0 * omega * t).sin() / omega)
    } else {
        (1.0, 2.0 * t)
    };
    C64::from_polar(1.0, 2.0 * spec.jz_sys * t) * (C64::new(c, 0.0) - I * spec.delta * s_over)
}

/// Density matrix of a computational basis state of the junction (`|bL bR>`).
pub fn basis_state(index: usize) -> Result<Operator> {
    crate::linalg::basis_projector(&HilbertSpace::junction(), index)
}

/// `|down down>`.
pub fn down_down() -> Operator {
    basis_state(0).expect("index in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_product;
    use proptest::prelude::*;

    fn spec(j_s: f64, delta: f64, jz: f64) -> JunctionSpec {
        JunctionSpec { j_s, delta, jz_sys: jz, gamma: 0.01 }
    }

    #[test]
    fn delta_only_hamiltonian_is_diagonal() {
        let h = build_hs(&spec(0.0, 0.3, 0.0)).unwrap();
        let d: Vec<f64> = (0..4).map(|i| h.matrix()[(i, i)].re).collect();
        assert_eq!(d, vec![0.0, -0.6, 0.6, 0.0]);
        assert!((h.matrix() - CMatrix::from_diagonal(&h.matrix().diagonal())).norm() == 0.0);
    }

    #[test]
    fn hopping_couples_single_flip_states() {
        let h = build_hs(&spec(0.25, 0.0, 0.0)).unwrap();
        assert_eq!(h.matrix()[(1, 2)], C64::new(0.5, 0.0));
        assert_eq!(h.matrix()[(2, 1)], C64::new(0.5, 0.0));
    }

    #[test]
    fn current_operator_trace_norm() {
        let j = current_operator(0.3).unwrap();
        assert!(j.is_hermitian(1e-15));
        let t = trace_product(j.matrix(), j.matrix()).re;
        assert!((t - 32.0 * 0.09).abs() < 1e-12);
    }

    #[test]
    fn system_correlator_matches_dense_propagation() {
        for s in [spec(0.01, 0.01, 0.0), spec(0.3, -0.2, 0.7), spec(0.0, 0.0, 0.4), spec(0.5, 0.0, 0.0)] {
            let ops = JunctionOperators::new(&s).unwrap();
            let es = eigensystem(&ops.h, 1e-12).unwrap();
            let rho = down_down();
            for &t in &[0.0, 0.7, 3.3, 41.0] {
                let st = es.heisenberg(ops.s[0].matrix(), t);
                let num = trace_product(&(st * ops.s[0].matrix().adjoint()), rho.matrix());
                let closed = system_corr_down(t, &s);
                assert!((num - closed).norm() < 1e-12, "{s:?} t={t}: {num} vs {closed}");
            }
        }
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let r = build_hs(&JunctionSpec { j_s: f64::NAN, delta: 0.0, jz_sys: 0.0, gamma: -1.0 });
        match r {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn hamiltonian_hermitian_and_conserves_magnetisation(
            j_s in -2.0..2.0f64, delta in -2.0..2.0f64, jz in -2.0..2.0f64
        ) {
            let s = spec(j_s, delta, jz);
            let ops = JunctionOperators::new(&s).unwrap();
            prop_assert!(ops.h.is_hermitian(1e-14));
            let m = &ops.z[0] + &ops.z[1];
            prop_assert!(ops.h.commutator(&m).norm() < 1e-13);
        }

        #[test]
        fn jump_operators_resolve_couplings(
            j_s in 0.05..1.0f64, delta in 0.05..1.0f64, jz in -1.0..1.0f64
        ) {
            let s = spec(j_s, delta, jz);
            let set = build_jump_operators(&s, 1e-9).unwrap();
            let ops = JunctionOperators::new(&s).unwrap();
            for side in Side::BOTH {
                let ks = coupling_components(ops.s[side.index()].matrix());
                for (alpha, k) in ks.iter().enumerate() {
                    let sum: CMatrix = set.ops.iter()
                        .filter(|o| o.side == side && o.alpha == alpha)
                        .map(|o| o.op.clone())
                        .sum();
                    prop_assert!((sum - k).norm() < 1e-11);
                }
            }
            for o in &set.ops {
                // [H, K(omega)] = -omega K(omega)
                let c = ops.h.matrix() * &o.op - &o.op * ops.h.matrix() + &o.op * C64::new(o.omega, 0.0);
                prop_assert!(c.norm() < 1e-10);
            }
            prop_assert!(set.zero_frequency_norm < 1e-12);
        }
    }
}
