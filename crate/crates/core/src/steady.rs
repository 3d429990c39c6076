//! Markovian generators (global Redfield and local Lindblad) and their steady states.
//!
//! Density matrices are vectorised row-major, `vec(rho)[4 i + j] = rho[i][j]`,
//! so that `vec(A X B) = (A kron B^T) vec(X)`.

use serde::{Deserialize, Serialize};

use crate::bath::{HalfFourierOptions, HalfFourierSamples, Lead};
use crate::error::{Error, Result};
use crate::junction::{build_jump_operators, JunctionOperators, JunctionSpec, Side};
use crate::linalg::{hermitian_eigenvalues, CMatrix, C64, I, ONE, ZERO};
use crate::repr::{complex_pairs, matrix_pairs};

const DIM: usize = 4;

/// Which master equation a generator represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Redfield,
    Lindblad,
}

/// A 16x16 Liouvillian with its per-lead dissipators kept apart for current evaluation.
#[derive(Clone, Debug)]
pub struct Superoperator {
    pub kind: GeneratorKind,
    pub matrix: CMatrix,
    pub hamiltonian: CMatrix,
    pub dissipators: [CMatrix; 2],
    pub warnings: Vec<String>,
}

fn left(a: &CMatrix) -> CMatrix {
    a.kronecker(&CMatrix::identity(DIM, DIM))
}

fn right(b: &CMatrix) -> CMatrix {
    CMatrix::identity(DIM, DIM).kronecker(&b.transpose())
}

fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(&b.transpose())
}

pub fn vectorize(rho: &CMatrix) -> nalgebra::DVector<C64> {
    let n = rho.nrows();
    nalgebra::DVector::from_iterator(n * n, (0..n * n).map(|k| rho[(k / n, k % n)]))
}

pub fn unvectorize(v: &nalgebra::DVector<C64>) -> CMatrix {
    let n = (v.len() as f64).sqrt().round() as usize;
    CMatrix::from_fn(n, n, |i, j| v[n * i + j])
}

/// Apply a superoperator to a density matrix.
pub fn apply(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    unvectorize(&(l * vectorize(rho)))
}

fn commutator_super(h: &CMatrix) -> CMatrix {
    (left(h) - right(h)) * (-I)
}

/// Half-line transforms of the hole and particle correlators of one lead.
struct LeadRates {
    hole: Option<HalfFourierSamples>,
    particle: Option<HalfFourierSamples>,
}

impl LeadRates {
    fn new(lead: &Lead, opts: &HalfFourierOptions) -> Result<Self> {
        let mk = |k: &Option<crate::bath::CorrelationKernel>| {
            k.as_ref().map(|k| HalfFourierSamples::new(k, opts)).transpose()
        };
        Ok(Self { hole: mk(&lead.correlations.hole)?, particle: mk(&lead.correlations.particle)? })
    }

    /// `(C_h(omega), C_p(omega))`.
    fn at(&self, omega: f64) -> Result<(C64, C64)> {
        let h = self.hole.as_ref().map(|s| s.transform(omega)).transpose()?.unwrap_or(ZERO);
        let p = self.particle.as_ref().map(|s| s.transform(omega)).transpose()?.unwrap_or(ZERO);
        Ok((h, p))
    }
}

fn singular_warnings(lead: &Lead, side: Side, omegas: &[f64], eta: f64, out: &mut Vec<String>) {
    let edge = 4.0 * lead.spec.j;
    for &w in omegas {
        let x = 4.0 * lead.spec.jz + w;
        let d = (x - edge).abs().min((x + edge).abs());
        if d <= 10.0 * eta {
            out.push(format!(
                "{} lead: rate at omega = {w:.6} lies within {d:.2e} of the band edge (damping {eta:.1e})",
                side.label()
            ));
        }
    }
}

/// Global (non-secular) Redfield generator built on the eigenbasis of `H_S`.
///
/// Rates `Gamma_{a a'}(omega')` are damped half-line transforms of the lead
/// correlators at the frequency of `K_{a'}(omega')`.
pub fn build_redfield_global(
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    opts: &HalfFourierOptions,
    degeneracy_tol: f64,
) -> Result<Superoperator> {
    junction.validate()?;
    let ops = JunctionOperators::new(junction)?;
    let set = build_jump_operators(junction, degeneracy_tol)?;
    let g2 = junction.gamma * junction.gamma;
    let mut warnings = Vec::new();
    let mut dissipators = [CMatrix::zeros(16, 16), CMatrix::zeros(16, 16)];
    for side in Side::BOTH {
        let lead = &leads[side.index()];
        let rates = LeadRates::new(lead, opts)?;
        let side_ops: Vec<_> = set.ops.iter().filter(|o| o.side == side).collect();
        let mut omegas: Vec<f64> = side_ops.iter().map(|o| o.omega).collect();
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        singular_warnings(lead, side, &omegas, opts.damping, &mut warnings);
        let mut cache: Vec<(f64, [[C64; 2]; 2])> = Vec::new();
        let d = &mut dissipators[side.index()];
        for b in &side_ops {
            let gamma_row = match cache.iter().find(|(w, _)| *w == b.omega) {
                Some((_, g)) => *g,
                None => {
                    let (ch, cp) = rates.at(b.omega)?;
                    let diag = (cp + ch) * g2;
                    let off = (cp - ch) * g2;
                    let g = [[diag, I * off], [-I * off, diag]];
                    cache.push((b.omega, g));
                    g
                }
            };
            for a in &side_ops {
                let g = gamma_row[a.alpha][b.alpha];
                if g == ZERO {
                    continue;
                }
                let ad = a.op.adjoint();
                let bd = b.op.adjoint();
                // Gamma (A^dag B rho - B rho A^dag) + h.c.
                let term = (left(&(&ad * &b.op)) - sandwich(&b.op, &ad)) * g
                    + (right(&(&bd * &a.op)) - sandwich(&a.op, &bd)) * g.conj();
                *d -= term;
            }
        }
    }
    let hamiltonian = commutator_super(ops.h.matrix());
    let matrix = &hamiltonian + &dissipators[0] + &dissipators[1];
    Ok(Superoperator { kind: GeneratorKind::Redfield, matrix, hamiltonian, dissipators, warnings })
}

/// Local Lindblad generator with `Gamma_h = 4 gamma^2 C_h(0)` and
/// `Gamma_p = 4 gamma^2 C_p(0)` acting on each junction spin separately.
pub fn build_lindblad_local(
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    opts: &HalfFourierOptions,
) -> Result<Superoperator> {
    junction.validate()?;
    let ops = JunctionOperators::new(junction)?;
    let g2 = junction.gamma * junction.gamma;
    let mut warnings = Vec::new();
    let mut dissipators = [CMatrix::zeros(16, 16), CMatrix::zeros(16, 16)];
    for side in Side::BOTH {
        let lead = &leads[side.index()];
        singular_warnings(lead, side, &[0.0], opts.damping, &mut warnings);
        let (ch, cp) = LeadRates::new(lead, opts)?.at(0.0)?;
        let (gh, gp) = (ch * (4.0 * g2), cp * (4.0 * g2));
        let s = ops.s[side.index()].matrix();
        let sd = s.adjoint();
        let d = &mut dissipators[side.index()];
        // Gamma_p (S^dag S rho - S rho S^dag) + h.c.
        *d -= (left(&(&sd * s)) - sandwich(s, &sd)) * gp + (right(&(&sd * s)) - sandwich(s, &sd)) * gp.conj();
        // Gamma_h (S S^dag rho - S^dag rho S) + h.c.
        *d -= (left(&(s * &sd)) - sandwich(&sd, s)) * gh + (right(&(s * &sd)) - sandwich(&sd, s)) * gh.conj();
    }
    let hamiltonian = commutator_super(ops.h.matrix());
    let matrix = &hamiltonian + &dissipators[0] + &dissipators[1];
    Ok(Superoperator { kind: GeneratorKind::Lindblad, matrix, hamiltonian, dissipators, warnings })
}

/// Steady state and diagnostics of one generator.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyReport {
    pub kind: GeneratorKind,
    #[serde(serialize_with = "matrix_pairs")]
    pub rho: CMatrix,
    /// `||L vec(rho)||`.
    pub residual: f64,
    /// `|tr rho - 1|`.
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    /// Second-smallest singular value of the generator.
    pub spectral_gap: f64,
    /// Eigenvalues of the generator.
    #[serde(serialize_with = "complex_pairs")]
    pub spectrum: Vec<C64>,
    pub currents: Option<SteadyCurrents>,
    pub warnings: Vec<String>,
}

/// Spin currents carried by the steady state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyCurrents {
    pub left: f64,
    pub right: f64,
    /// `(left - right) / 2`.
    pub total: f64,
}

/// Null vector of the generator, Hermitised and trace normalised.
pub fn solve_steady(l: &Superoperator) -> Result<SteadyReport> {
    let m = &l.matrix;
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), false, true, 1e-15, 100_000)
        .ok_or(Error::EigenNonConvergence)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sv = |k: usize| svd.singular_values[order[k]];
    let null_vec = |k: usize| {
        let row = v_t.row(order[k]);
        nalgebra::DVector::from_iterator(row.len(), row.iter().map(|c| c.conj()))
    };
    let degenerate_tol = 1e-10 * scale;
    if sv(1) <= degenerate_tol {
        let basis = (0..order.len())
            .take_while(|&k| sv(k) <= degenerate_tol)
            .map(|k| unvectorize(&null_vec(k)))
            .collect();
        return Err(Error::DegenerateSteadySpace { basis });
    }
    let raw = unvectorize(&null_vec(0));
    let herm = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    let tr = herm.trace();
    if tr.norm() < 1e-300 {
        return Err(Error::NonFinite("steady-state trace"));
    }
    let rho = herm / tr;
    let residual = (m * vectorize(&rho)).norm();
    let trace_error = (rho.trace() - ONE).norm();
    let eig = hermitian_eigenvalues(&rho);
    let min_eigenvalue = eig[0];
    let (_, t) = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 100_000)
        .ok_or(Error::EigenNonConvergence)?
        .unpack();
    let mut spectrum: Vec<C64> = t.diagonal().iter().copied().collect();
    spectrum.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let mut warnings = l.warnings.clone();
    let neg_tol = match l.kind {
        GeneratorKind::Lindblad => -1e-10,
        GeneratorKind::Redfield => -1e-6,
    };
    if min_eigenvalue < 0.0 {
        let msg = format!("{:?} steady state has negative eigenvalue {min_eigenvalue:.3e}", l.kind);
        if min_eigenvalue < neg_tol {
            log::warn!("{msg}");
        }
        warnings.push(msg);
    }
    Ok(SteadyReport {
        kind: l.kind,
        rho,
        residual,
        trace_error,
        min_eigenvalue,
        spectral_gap: sv(1),
        spectrum,
        currents: None,
        warnings,
    })
}

/// `I_i = tr{Z_i D_i[rho]}` for each lead and `I = (I_L - I_R) / 2`.
pub fn steady_current(rho: &CMatrix, l: &Superoperator) -> Result<SteadyCurrents> {
    let ops = JunctionOperators::new(&JunctionSpec { j_s: 0.0, delta: 0.0, jz_sys: 0.0, gamma: 0.0 })?;
    let cur = |side: Side| {
        let drho = apply(&l.dissipators[side.index()], rho);
        (ops.z[side.index()].matrix() * drho).trace().re
    };
    let (left, right) = (cur(Side::Left), cur(Side::Right));
    Ok(SteadyCurrents { left, right, total: 0.5 * (left - right) })
}

/// Build a generator, solve for its steady state and attach the currents.
pub fn steady_state(
    kind: GeneratorKind,
    junction: &JunctionSpec,
    leads: &[Lead; 2],
    opts: &HalfFourierOptions,
    degeneracy_tol: f64,
) -> Result<(Superoperator, SteadyReport)> {
    let l = match kind {
        GeneratorKind::Redfield => build_redfield_global(junction, leads, opts, degeneracy_tol)?,
        GeneratorKind::Lindblad => build_lindblad_local(junction, leads, opts)?,
    };
    let mut report = solve_steady(&l)?;
    report.currents = Some(steady_current(&report.rho, &l)?);
    Ok((l, report))
}
