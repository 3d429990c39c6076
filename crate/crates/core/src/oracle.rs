//! State-vector reference simulation of the junction between finite XXZ leads.
//!
//! Sites are ordered left to right: left lead (contact last), `S_L`, `S_R`,
//! right lead (contact first). Site `i` of an `n`-site chain is bit `n - 1 - i`
//! of a configuration, so with no lead sites the basis coincides with the
//! dense two-spin convention. A set bit is spin up.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, Polarization};
use crate::born::{CurrentMethod, CurrentTrace};
use crate::error::{Error, Problems, Result};
use crate::junction::JunctionSpec;
use crate::linalg::{C64, ZERO};

pub const MAX_SITES: usize = 24;

/// Initial state of the two junction spins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JunctionInit {
    #[default]
    DownDown,
    DownUp,
    UpDown,
    UpUp,
    /// Amplitudes `[re, im]` on `|00>, |01>, |10>, |11>` (normalised on use).
    Amplitudes(Vec<[f64; 2]>),
}

impl JunctionInit {
    /// Normalised amplitudes on `|00>, |01>, |10>, |11>`.
    pub fn amplitudes(&self) -> Result<[C64; 4]> {
        let mut a = [ZERO; 4];
        match self {
            JunctionInit::DownDown => a[0] = C64::new(1.0, 0.0),
            JunctionInit::DownUp => a[1] = C64::new(1.0, 0.0),
            JunctionInit::UpDown => a[2] = C64::new(1.0, 0.0),
            JunctionInit::UpUp => a[3] = C64::new(1.0, 0.0),
            JunctionInit::Amplitudes(v) => {
                if v.len() != 4 {
                    return Err(Error::invalid(format!("junction amplitudes need 4 entries, got {}", v.len())));
                }
                for (k, p) in v.iter().enumerate() {
                    a[k] = C64::new(p[0], p[1]);
                }
                let n: f64 = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::invalid("junction amplitudes must have nonzero finite norm"));
                }
                for c in a.iter_mut() {
                    *c /= n;
                }
            }
        }
        Ok(a)
    }
}

/// Junction plus finite leads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n_left: usize,
    pub n_right: usize,
    pub left: BathSpec,
    pub right: BathSpec,
    pub junction: JunctionSpec,
    #[serde(default)]
    pub init: JunctionInit,
}

impl ChainSpec {
    pub fn sites(&self) -> usize {
        self.n_left + 2 + self.n_right
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = self.junction.problems();
        p.extend(self.left.problems("left"));
        p.extend(self.right.problems("right"));
        p.into_result()?;
        if self.sites() > MAX_SITES {
            return Err(Error::ChainTooLarge { sites: self.sites(), limit: MAX_SITES });
        }
        self.init.amplitudes().map(|_| ())
    }

    pub fn left_junction(&self) -> usize {
        self.n_left
    }

    pub fn right_junction(&self) -> usize {
        self.n_left + 1
    }

    /// Bond index of the left contact (`B_L - S_L`), if there is a left lead.
    pub fn left_contact_bond(&self) -> Option<usize> {
        (self.n_left > 0).then(|| self.n_left - 1)
    }

    /// Bond index of the right contact (`S_R - B_R`), if there is a right lead.
    pub fn right_contact_bond(&self) -> Option<usize> {
        (self.n_right > 0).then_some(self.n_left + 1)
    }

    /// Lead that site `i` belongs to.
    pub fn lead_of(&self, i: usize) -> Option<Polarization> {
        if i < self.n_left {
            Some(self.left.polarization)
        } else if i >= self.n_left + 2 && i < self.sites() {
            Some(self.right.polarization)
        } else {
            None
        }
    }

    /// Nearest-neighbour bonds with hopping `t` (matrix element `2t`) and `Jz`.
    pub fn bonds(&self) -> Vec<Bond> {
        let mut out = Vec::new();
        for i in 0..self.sites() - 1 {
            let (t, zz) = if i + 1 < self.n_left {
                (self.left.j, self.left.jz)
            } else if i + 1 == self.n_left {
                (self.junction.gamma, 0.0)
            } else if i == self.n_left {
                (self.junction.j_s, self.junction.jz_sys)
            } else if i == self.n_left + 1 {
                (self.junction.gamma, 0.0)
            } else {
                (self.right.j, self.right.jz)
            };
            out.push(Bond { i, t, zz });
        }
        out
    }

    /// Hamiltonian terms of the whole chain.
    pub fn terms(&self) -> Vec<Term> {
        let mut terms = Vec::new();
        for b in self.bonds() {
            if b.t != 0.0 {
                terms.push(Term::Hop { i: b.i, j: b.i + 1, amp: 2.0 * b.t });
            }
            if b.zz != 0.0 {
                terms.push(Term::ZZ { i: b.i, j: b.i + 1, amp: b.zz });
            }
        }
        if self.junction.delta != 0.0 {
            terms.push(Term::Field { i: self.left_junction(), amp: self.junction.delta });
            terms.push(Term::Field { i: self.right_junction(), amp: -self.junction.delta });
        }
        terms
    }

    /// Polarised reference configuration of the leads (junction bits cleared).
    fn lead_reference(&self) -> u32 {
        let n = self.sites();
        let mut c = 0u32;
        for i in 0..n {
            if self.lead_of(i) == Some(Polarization::Up) {
                c |= bit(n, i);
            }
        }
        c
    }
}

/// One nearest-neighbour bond `(i, i + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub t: f64,
    pub zz: f64,
}

/// Hamiltonian building blocks on spin-1/2 sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Term {
    /// `amp (s_i s_j^dag + s_i^dag s_j)`.
    Hop { i: usize, j: usize, amp: f64 },
    /// `amp Z_i Z_j`.
    ZZ { i: usize, j: usize, amp: f64 },
    /// `amp Z_i`.
    Field { i: usize, amp: f64 },
}

#[inline]
fn bit(n: usize, i: usize) -> u32 {
    1u32 << (n - 1 - i)
}

#[inline]
fn z_of(c: u32, n: usize, i: usize) -> f64 {
    if c & bit(n, i) != 0 {
        1.0
    } else {
        -1.0
    }
}

/// Which configurations to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisSelection {
    Full,
    /// Magnetisation sector of the initial state.
    Sector,
    /// At most this many lead spins flipped away from their polarisation.
    Excitations(usize),
}

/// Sorted list of retained configurations.
#[derive(Clone, Debug)]
pub struct Basis {
    sites: usize,
    states: Vec<u32>,
    full: bool,
}

impl Basis {
    pub fn full(sites: usize) -> Result<Self> {
        if sites == 0 || sites > MAX_SITES {
            return Err(Error::ChainTooLarge { sites, limit: MAX_SITES });
        }
        Ok(Self { sites, states: (0..1u32 << sites).collect(), full: true })
    }

    pub fn from_states(sites: usize, mut states: Vec<u32>) -> Self {
        states.sort_unstable();
        states.dedup();
        let full = states.len() == 1usize << sites;
        Self { sites, states, full }
    }

    /// Basis for a chain; `Sector` requires the initial state to have definite magnetisation.
    pub fn for_chain(spec: &ChainSpec, selection: BasisSelection) -> Result<Self> {
        spec.validate()?;
        let n = spec.sites();
        match selection {
            BasisSelection::Full => Self::full(n),
            BasisSelection::Sector => {
                let amps = spec.init.amplitudes()?;
                let ups: Vec<u32> = (0..4usize)
                    .filter(|&k| amps[k].norm() > 0.0)
                    .map(|k| (k as u32).count_ones())
                    .collect();
                if ups.iter().any(|&u| u != ups[0]) {
                    return Err(Error::invalid(
                        "junction initial state mixes magnetisation sectors; use the full or excitation basis",
                    ));
                }
                let target = spec.lead_reference().count_ones() + ups[0];
                let states = (0..1u32 << n).filter(|c| c.count_ones() == target).collect();
                Ok(Self { sites: n, states, full: false })
            }
            BasisSelection::Excitations(k) => {
                let reference = spec.lead_reference();
                let lead_sites: Vec<usize> = (0..n).filter(|&i| spec.lead_of(i).is_some()).collect();
                let mut states = Vec::new();
                let mut flips: Vec<u32> = vec![0];
                // all subsets of lead sites with at most k elements
                let mut frontier: Vec<(u32, usize)> = vec![(0, 0)];
                for _ in 0..k {
                    let mut next = Vec::new();
                    for &(mask, start) in &frontier {
                        for (pos, &i) in lead_sites.iter().enumerate().skip(start) {
                            let m = mask | bit(n, i);
                            flips.push(m);
                            next.push((m, pos + 1));
                        }
                    }
                    frontier = next;
                }
                let (l, r) = (bit(n, spec.left_junction()), bit(n, spec.right_junction()));
                for f in flips {
                    for j in [0, l, r, l | r] {
                        states.push((reference ^ f) | j);
                    }
                }
                Ok(Self::from_states(n, states))
            }
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    #[inline]
    pub fn index(&self, c: u32) -> Option<usize> {
        if self.full {
            Some(c as usize)
        } else {
            self.states.binary_search(&c).ok()
        }
    }
}

/// Real symmetric Hamiltonian in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    norm_bound: f64,
}

impl SparseHamiltonian {
    pub fn build(basis: &Basis, terms: &[Term]) -> Result<Self> {
        let n = basis.sites();
        for t in terms {
            let ok = match *t {
                Term::Hop { i, j, .. } | Term::ZZ { i, j, .. } => i < n && j < n && i != j,
                Term::Field { i, .. } => i < n,
            };
            if !ok {
                return Err(Error::invalid(format!("term {t:?} refers to a site outside the {n}-site chain")));
            }
        }
        let dim = basis.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(u32, f64)> = Vec::new();
        for (r, &c) in basis.states().iter().enumerate() {
            row.clear();
            let mut diag = 0.0;
            for t in terms {
                match *t {
                    Term::ZZ { i, j, amp } => diag += amp * z_of(c, n, i) * z_of(c, n, j),
                    Term::Field { i, amp } => diag += amp * z_of(c, n, i),
                    Term::Hop { i, j, amp } => {
                        let (bi, bj) = (bit(n, i), bit(n, j));
                        if ((c & bi) != 0) != ((c & bj) != 0) {
                            if let Some(k) = basis.index(c ^ bi ^ bj) {
                                row.push((k as u32, amp));
                            }
                        }
                    }
                }
            }
            if diag != 0.0 {
                row.push((r as u32, diag));
            }
            row.sort_unstable_by_key(|e| e.0);
            for &(k, v) in row.iter() {
                match cols.last() {
                    Some(&last) if last == k && vals.len() > row_ptr[r] => {
                        *vals.last_mut().expect("nonempty") += v;
                    }
                    _ => {
                        cols.push(k);
                        vals.push(v);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        let norm_bound = (0..dim)
            .map(|r| (row_ptr[r]..row_ptr[r + 1]).map(|k| vals[k].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self { dim, row_ptr, cols, vals, norm_bound })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            y[r] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }

    /// Upper bound on the spectral radius (largest absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Build the sparse chain Hamiltonian on a basis.
pub fn build_chain_hamiltonian(spec: &ChainSpec, basis: &Basis) -> Result<SparseHamiltonian> {
    spec.validate()?;
    if basis.sites() != spec.sites() {
        return Err(Error::DimensionMismatch { expected: spec.sites(), found: basis.sites() });
    }
    SparseHamiltonian::build(basis, &spec.terms())
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Short-iterative Lanczos propagator with an a-posteriori error estimate.
#[derive(Clone, Debug)]
pub struct Krylov {
    pub max_dim: usize,
    pub tol: f64,
    basis: Vec<Vec<C64>>,
    w: Vec<C64>,
    backup: Vec<C64>,
}

impl Krylov {
    pub fn new(dim: usize, max_dim: usize, tol: f64) -> Self {
        Self { max_dim: max_dim.max(2), tol, basis: Vec::new(), w: vec![ZERO; dim], backup: vec![ZERO; dim] }
    }

    /// One step `psi <- exp(-i H dt) psi`; `Err(estimate)` when the Krylov space is too small.
    fn try_step(&mut self, h: &SparseHamiltonian, psi: &mut [C64], dt: f64) -> std::result::Result<(), f64> {
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok(());
        }
        let dim = psi.len();
        if self.basis.is_empty() {
            self.basis.push(vec![ZERO; dim]);
        }
        for (v, p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *v = p / beta0;
        }
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let scale = h.norm_bound().max(1e-300);
        for j in 0..self.max_dim {
            h.matvec(&self.basis[j], &mut self.w);
            let a = dot(&self.basis[j], &self.w).re;
            alpha.push(a);
            // full reorthogonalisation
            for k in 0..=j {
                let c = dot(&self.basis[k], &self.w);
                for (x, v) in self.w.iter_mut().zip(&self.basis[k]) {
                    *x -= c * v;
                }
            }
            let b = norm(&self.w);
            let m = j + 1;
            let coeffs = expm_tridiag(&alpha, &beta, dt);
            let estimate = b * coeffs[m - 1].norm() * beta0;
            let happy = b <= 1e-13 * scale;
            if estimate <= self.tol || happy {
                for x in psi.iter_mut() {
                    *x = ZERO;
                }
                for (k, c) in coeffs.iter().enumerate() {
                    let c = c * beta0;
                    for (x, v) in psi.iter_mut().zip(&self.basis[k]) {
                        *x += c * v;
                    }
                }
                return Ok(());
            }
            if m == self.max_dim {
                return Err(estimate);
            }
            beta.push(b);
            if self.basis.len() <= m {
                self.basis.push(vec![ZERO; dim]);
            }
            for (v, x) in self.basis[m].iter_mut().zip(&self.w) {
                *v = x / b;
            }
        }
        unreachable!("loop returns on the last Krylov dimension")
    }

    /// Propagate by `dt`, subdividing until every substep meets the tolerance.
    pub fn step(&mut self, h: &SparseHamiltonian, psi: &mut [C64], dt: f64, time: f64) -> Result<()> {
        let mut remaining = dt;
        let mut sub = dt;
        let mut t = time;
        let mut halvings = 0;
        while remaining > 0.0 {
            let d = sub.min(remaining);
            self.backup.copy_from_slice(psi);
            match self.try_step(h, psi, d) {
                Ok(()) => {
                    remaining -= d;
                    t += d;
                    if remaining <= 1e-14 * dt {
                        break;
                    }
                }
                Err(est) => {
                    psi.copy_from_slice(&self.backup);
                    halvings += 1;
                    if halvings > 30 {
                        return Err(Error::StepErrorBudget { time: t, estimate: est, tol: self.tol });
                    }
                    sub = d / 2.0;
                }
            }
        }
        Ok(())
    }
}

/// First column of `exp(-i T dt)` for the symmetric tridiagonal `T`.
fn expm_tridiag(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        t[(k, k)] = alpha[k];
        if k + 1 < m {
            t[(k, k + 1)] = beta[k];
            t[(k + 1, k)] = beta[k];
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(t);
    (0..m)
        .map(|i| {
            (0..m)
                .map(|l| {
                    let q = eig.eigenvectors[(i, l)] * eig.eigenvectors[(0, l)];
                    C64::from_polar(q, -eig.eigenvalues[l] * dt)
                })
                .sum()
        })
        .collect()
}

/// Product initial state: polarised leads and the requested junction state.
pub fn initial_state(spec: &ChainSpec, basis: &Basis) -> Result<Vec<C64>> {
    let n = spec.sites();
    let amps = spec.init.amplitudes()?;
    let reference = spec.lead_reference();
    let mut psi = vec![ZERO; basis.len()];
    for (k, a) in amps.iter().enumerate() {
        if a.norm() == 0.0 {
            continue;
        }
        let mut c = reference;
        if k & 2 != 0 {
            c |= bit(n, spec.left_junction());
        }
        if k & 1 != 0 {
            c |= bit(n, spec.right_junction());
        }
        let idx = basis
            .index(c)
            .ok_or_else(|| Error::invalid("initial state is not contained in the selected basis"))?;
        psi[idx] = *a;
    }
    Ok(psi)
}

/// `<psi| 4 i t (s_i^dag s_{i+1} - s_{i+1}^dag s_i) |psi>`: rightward current on bond `(i, i+1)`.
pub fn bond_current(basis: &Basis, psi: &[C64], i: usize, t: f64) -> f64 {
    let n = basis.sites();
    let (bi, bj) = (bit(n, i), bit(n, i + 1));
    let mut x = ZERO;
    for (k, &c) in basis.states().iter().enumerate() {
        // c has site i down and i+1 up; s_i^dag s_{i+1} moves the up spin left
        if c & bi == 0 && c & bj != 0 {
            if let Some(k2) = basis.index(c ^ bi ^ bj) {
                x += psi[k2].conj() * psi[k];
            }
        }
    }
    -8.0 * t * x.im
}

/// Currents on every bond of the chain.
pub fn bond_currents(spec: &ChainSpec, basis: &Basis, psi: &[C64]) -> Vec<f64> {
    spec.bonds().iter().map(|b| bond_current(basis, psi, b.i, b.t)).collect()
}

/// `<Z_i>` for every site.
pub fn site_magnetisations(basis: &Basis, psi: &[C64]) -> Vec<f64> {
    let n = basis.sites();
    (0..n)
        .map(|i| basis.states().iter().zip(psi).map(|(&c, a)| z_of(c, n, i) * a.norm_sqr()).sum())
        .collect()
}

/// Time step, horizon and accuracy of oracle runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleOptions {
    /// Sampling interval of recorded observables.
    pub dt: f64,
    pub horizon: f64,
    /// Per-step Krylov error tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_krylov")]
    pub krylov_dim: usize,
    /// Stochastic integration step for trajectories.
    #[serde(default = "default_sde_step")]
    pub sde_step: f64,
    pub basis: BasisSelection,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_krylov() -> usize {
    30
}

fn default_sde_step() -> f64 {
    1e-3
}

impl OracleOptions {
    pub fn new(dt: f64, horizon: f64, basis: BasisSelection) -> Self {
        Self { dt, horizon, tol: default_tol(), krylov_dim: default_krylov(), sde_step: default_sde_step(), basis }
    }

    fn validate(&self) -> Result<()> {
        let mut p = Problems::default();
        p.positive("oracle.dt", self.dt);
        p.positive("oracle.horizon", self.horizon);
        p.positive("oracle.tol", self.tol);
        p.positive("oracle.sde_step", self.sde_step);
        p.check(self.krylov_dim >= 2, || "oracle.krylov_dim must be at least 2".into());
        if self.dt > 0.0 && self.sde_step > 0.0 {
            let r = self.dt / self.sde_step;
            p.check((r - r.round()).abs() < 1e-9 * r && r.round() >= 1.0, || {
                format!("oracle.dt = {} must be a multiple of oracle.sde_step = {}", self.dt, self.sde_step)
            });
        }
        p.into_result()
    }

    fn samples(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Observables recorded along one oracle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub times: Vec<f64>,
    /// `bond_currents[k][b]`: current on bond `b` at time `k`.
    pub bond_currents: Vec<Vec<f64>>,
    pub magnetisation: Vec<f64>,
    pub norm: Vec<f64>,
    pub dim: usize,
}

impl OracleRun {
    fn with_capacity(n: usize, dim: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            bond_currents: Vec::with_capacity(n),
            magnetisation: Vec::with_capacity(n),
            norm: Vec::with_capacity(n),
            dim,
        }
    }

    fn record(&mut self, t: f64, spec: &ChainSpec, basis: &Basis, psi: &[C64]) {
        let n = basis.sites();
        self.times.push(t);
        self.bond_currents.push(bond_currents(spec, basis, psi));
        self.magnetisation.push(
            basis
                .states()
                .iter()
                .zip(psi)
                .map(|(&c, a)| (2.0 * c.count_ones() as f64 - n as f64) * a.norm_sqr())
                .sum(),
        );
        self.norm.push(norm(psi));
    }

    /// Junction currents: `left` is the current into `S_L` from the left contact,
    /// `right` the current into `S_R` from the right contact.
    pub fn junction_trace(&self, spec: &ChainSpec) -> CurrentTrace {
        let pick = |bond: Option<usize>, sign: f64| -> Vec<f64> {
            self.bond_currents.iter().map(|b| bond.map_or(0.0, |i| sign * b[i])).collect()
        };
        CurrentTrace::new(
            CurrentMethod::Oracle,
            self.times.clone(),
            pick(spec.left_contact_bond(), 1.0),
            pick(spec.right_contact_bond(), -1.0),
        )
    }

    /// Bond-current heatmap: rows are times, columns bonds.
    pub fn write_heatmap_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_heatmap(&mut w, &self.times, &self.bond_currents)
    }
}

pub(crate) fn write_heatmap<W: Write>(w: &mut W, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let nb = rows.first().map_or(0, |r| r.len());
    write!(w, "t")?;
    for b in 0..nb {
        write!(w, ",bond{b}")?;
    }
    writeln!(w)?;
    for (t, row) in times.iter().zip(rows) {
        write!(w, "{t:.10e}")?;
        for v in row {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Exact unitary evolution of the closed chain.
pub fn evolve_unitary(spec: &ChainSpec, opts: &OracleOptions) -> Result<OracleRun> {
    evolve_unitary_with(spec, opts, |_, _, _| {})
}

/// Unitary evolution calling `observe(t, basis, psi)` at every sample time.
pub fn evolve_unitary_with<F: FnMut(f64, &Basis, &[C64])>(
    spec: &ChainSpec,
    opts: &OracleOptions,
    mut observe: F,
) -> Result<OracleRun> {
    opts.validate()?;
    let basis = Basis::for_chain(spec, opts.basis)?;
    let h = build_chain_hamiltonian(spec, &basis)?;
    let mut psi = initial_state(spec, &basis)?;
    let mut kry = Krylov::new(basis.len(), opts.krylov_dim, opts.tol);
    let n = opts.samples();
    let mut run = OracleRun::with_capacity(n + 1, basis.len());
    run.record(0.0, spec, &basis, &psi);
    observe(0.0, &basis, &psi);
    for k in 0..n {
        let t = k as f64 * opts.dt;
        kry.step(&h, &mut psi, opts.dt, t)?;
        let t1 = (k + 1) as f64 * opts.dt;
        run.record(t1, spec, &basis, &psi);
        observe(t1, &basis, &psi);
    }
    Ok(run)
}

/// Absorbing boundary profile `zeta(r) = amplitude * exp(-gamma_b r)`, `r = 0` at the outer end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberSpec {
    pub gamma_b: f64,
    pub amplitude: f64,
    /// Number of absorbing sites; `None` means `ceil(3 / gamma_b)`.
    #[serde(default)]
    pub sites: Option<usize>,
}

impl Default for AbsorberSpec {
    fn default() -> Self {
        Self { gamma_b: 0.5, amplitude: 8.0, sites: None }
    }
}

impl AbsorberSpec {
    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::default();
        p.positive("absorber.gamma_b", self.gamma_b);
        p.non_negative("absorber.amplitude", self.amplitude);
        if let Some(s) = self.sites {
            p.check(s > 0, || "absorber.sites must be positive".into());
        }
        p.into_result()
    }

    pub fn range(&self) -> usize {
        self.sites.unwrap_or_else(|| (3.0 / self.gamma_b).ceil() as usize)
    }

    pub fn zeta(&self, r: usize) -> f64 {
        self.amplitude * (-self.gamma_b * r as f64).exp()
    }
}

/// `sqrt(rate) s_i^dag` (raising) or `sqrt(rate) s_i` on one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalJump {
    pub site: usize,
    pub raising: bool,
    pub rate: f64,
}

/// Jump operators of the absorbers on both leads: raising on an up lead, lowering on a down lead.
pub fn absorber_jumps(spec: &ChainSpec, absorbers: &[Option<AbsorberSpec>; 2]) -> Result<Vec<LocalJump>> {
    let mut out = Vec::new();
    let n = spec.sites();
    for (side, abs) in absorbers.iter().enumerate() {
        let Some(a) = abs else { continue };
        a.validate()?;
        let (len, pol) = if side == 0 { (spec.n_left, spec.left.polarization) } else { (spec.n_right, spec.right.polarization) };
        for r in 0..a.range().min(len) {
            let site = if side == 0 { r } else { n - 1 - r };
            let rate = a.zeta(r);
            if rate > 0.0 {
                out.push(LocalJump { site, raising: pol == Polarization::Up, rate });
            }
        }
    }
    Ok(out)
}

/// Precomputed action of one jump operator on the basis.
struct JumpAction {
    amp: f64,
    /// `(source, target)` index pairs with `J |source> = amp |target>`.
    pairs: Vec<(u32, u32)>,
    /// Indices where `J^dag J = amp^2`.
    active: Vec<u32>,
}

fn jump_action(basis: &Basis, j: &LocalJump) -> JumpAction {
    let n = basis.sites();
    let b = bit(n, j.site);
    let mut pairs = Vec::new();
    let mut active = Vec::new();
    for (k, &c) in basis.states().iter().enumerate() {
        let can = if j.raising { c & b == 0 } else { c & b != 0 };
        if can {
            active.push(k as u32);
            if let Some(k2) = basis.index(c ^ b) {
                pairs.push((k as u32, k2 as u32));
            }
        }
    }
    JumpAction { amp: j.rate.sqrt(), pairs, active }
}

/// Identifies one trajectory: a base seed and an index within the ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryId {
    pub seed: u64,
    pub index: u64,
}

fn wiener_stream(id: TrajectoryId, jump: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
    rng.set_stream(id.index.wrapping_mul(1 << 16).wrapping_add(jump as u64));
    rng
}

/// A chain, basis, Hamiltonian and jump operators ready for stochastic runs.
pub struct StochasticSystem {
    pub spec: ChainSpec,
    pub basis: Basis,
    pub h: SparseHamiltonian,
    pub jumps: Vec<LocalJump>,
    actions: Vec<JumpAction>,
}

impl StochasticSystem {
    pub fn new(spec: &ChainSpec, absorbers: &[Option<AbsorberSpec>; 2], selection: BasisSelection) -> Result<Self> {
        let basis = Basis::for_chain(spec, selection)?;
        let h = build_chain_hamiltonian(spec, &basis)?;
        let jumps = absorber_jumps(spec, absorbers)?;
        if !jumps.is_empty() && selection == BasisSelection::Sector {
            return Err(Error::invalid(
                "absorbers change the magnetisation; use the full or excitation basis for trajectories",
            ));
        }
        Ok(Self::from_parts(spec.clone(), basis, h, jumps))
    }

    pub fn from_parts(spec: ChainSpec, basis: Basis, h: SparseHamiltonian, jumps: Vec<LocalJump>) -> Self {
        let actions = jumps.iter().map(|j| jump_action(&basis, j)).collect();
        Self { spec, basis, h, jumps, actions }
    }

    /// Unitary Krylov step followed by the Ito update
    /// `psi += sum_r (-J_r^dag J_r / 2 dt + J_r dQ_r) psi`, `dQ_r = <J_r + J_r^dag> dt + dW_r`,
    /// and renormalisation.
    fn step(
        &self,
        kry: &mut Krylov,
        psi: &mut [C64],
        scratch: &mut [C64],
        dt: f64,
        t: f64,
        rngs: &mut [ChaCha8Rng],
    ) -> Result<()> {
        kry.step(&self.h, psi, dt, t)?;
        if self.actions.is_empty() {
            return Ok(());
        }
        scratch.iter_mut().for_each(|x| *x = ZERO);
        for (act, rng) in self.actions.iter().zip(rngs.iter_mut()) {
            let mut ex = ZERO;
            for &(s, d) in &act.pairs {
                ex += psi[d as usize].conj() * psi[s as usize];
            }
            let mean = 2.0 * act.amp * ex.re;
            let dw: f64 = StandardNormal.sample(rng);
            let dq = mean * dt + dw * dt.sqrt();
            let damp = -0.5 * act.amp * act.amp * dt;
            for &k in &act.active {
                scratch[k as usize] += psi[k as usize] * damp;
            }
            for &(s, d) in &act.pairs {
                scratch[d as usize] += psi[s as usize] * (act.amp * dq);
            }
        }
        for (p, d) in psi.iter_mut().zip(scratch.iter()) {
            *p += d;
        }
        let nrm = norm(psi);
        if !(nrm >= 1e-6) {
            return Err(Error::NormCollapse { time: t + dt, norm: nrm });
        }
        psi.iter_mut().for_each(|x| *x /= nrm);
        Ok(())
    }

    /// One trajectory from `psi0`, sampling observables every `opts.dt`.
    pub fn run(&self, psi0: &[C64], opts: &OracleOptions, id: TrajectoryId) -> Result<OracleRun> {
        opts.validate()?;
        let mut psi = psi0.to_vec();
        let mut scratch = vec![ZERO; psi.len()];
        let mut kry = Krylov::new(psi.len(), opts.krylov_dim, opts.tol);
        let mut rngs: Vec<ChaCha8Rng> = (0..self.actions.len()).map(|j| wiener_stream(id, j)).collect();
        let per = (opts.dt / opts.sde_step).round() as usize;
        let n = opts.samples();
        let mut run = OracleRun::with_capacity(n + 1, psi.len());
        run.record(0.0, &self.spec, &self.basis, &psi);
        for k in 0..n {
            for s in 0..per {
                let t = k as f64 * opts.dt + s as f64 * opts.sde_step;
                self.step(&mut kry, &mut psi, &mut scratch, opts.sde_step, t, &mut rngs)?;
            }
            run.record((k + 1) as f64 * opts.dt, &self.spec, &self.basis, &psi);
        }
        Ok(run)
    }
}

/// Single stochastic trajectory of the chain with absorbers.
pub fn evolve_trajectory(
    spec: &ChainSpec,
    absorbers: &[Option<AbsorberSpec>; 2],
    opts: &OracleOptions,
    id: TrajectoryId,
) -> Result<OracleRun> {
    let sys = StochasticSystem::new(spec, absorbers, opts.basis)?;
    let psi0 = initial_state(spec, &sys.basis)?;
    sys.run(&psi0, opts, id)
}

/// Ensemble statistics of bond and junction currents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub ids: Vec<TrajectoryId>,
    pub times: Vec<f64>,
    /// `[time][bond]`.
    pub bond_mean: Vec<Vec<f64>>,
    pub bond_stderr: Vec<Vec<f64>>,
    pub junction_mean: Vec<f64>,
    pub junction_stderr: Vec<f64>,
    #[serde(skip)]
    pub runs: Vec<OracleRun>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn write_heatmap_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_heatmap(&mut w, &self.times, &self.bond_mean)
    }
}

/// Consecutive trajectory ids `(seed, 0..m)`.
pub fn trajectory_ids(seed: u64, m: usize) -> Vec<TrajectoryId> {
    (0..m as u64).map(|index| TrajectoryId { seed, index }).collect()
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

/// Run every trajectory (in parallel) and reduce in id order, so the result
/// does not depend on the thread count.
pub fn ensemble_average(
    spec: &ChainSpec,
    absorbers: &[Option<AbsorberSpec>; 2],
    opts: &OracleOptions,
    ids: &[TrajectoryId],
) -> Result<TrajectoryEnsemble> {
    if ids.len() < 2 {
        return Err(Error::invalid("an ensemble needs at least two trajectories"));
    }
    let sys = StochasticSystem::new(spec, absorbers, opts.basis)?;
    let psi0 = initial_state(spec, &sys.basis)?;
    let runs: Vec<OracleRun> = ids.par_iter().map(|&id| sys.run(&psi0, opts, id)).collect::<Result<_>>()?;
    let times = runs[0].times.clone();
    let nb = runs[0].bond_currents[0].len();
    let mut bond_mean = Vec::with_capacity(times.len());
    let mut bond_stderr = Vec::with_capacity(times.len());
    let mut junction_mean = Vec::with_capacity(times.len());
    let mut junction_stderr = Vec::with_capacity(times.len());
    let traces: Vec<CurrentTrace> = runs.iter().map(|r| r.junction_trace(spec)).collect();
    let mut buf = vec![0.0; runs.len()];
    for k in 0..times.len() {
        let mut mrow = Vec::with_capacity(nb);
        let mut srow = Vec::with_capacity(nb);
        for b in 0..nb {
            for (x, r) in buf.iter_mut().zip(&runs) {
                *x = r.bond_currents[k][b];
            }
            let (m, s) = mean_and_stderr(&buf);
            mrow.push(m);
            srow.push(s);
        }
        bond_mean.push(mrow);
        bond_stderr.push(srow);
        for (x, tr) in buf.iter_mut().zip(&traces) {
            *x = tr.total[k];
        }
        let (m, s) = mean_and_stderr(&buf);
        junction_mean.push(m);
        junction_stderr.push(s);
    }
    Ok(TrajectoryEnsemble {
        ids: ids.to_vec(),
        times,
        bond_mean,
        bond_stderr,
        junction_mean,
        junction_stderr,
        runs,
    })
}

/// Dense matrix of `exp(-i H t)` applied to a vector, for small checks.
pub fn dense_evolve(h: &DMatrix<f64>, psi: &[C64], t: f64) -> Vec<C64> {
    let eig = nalgebra::linalg::SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let x = DVector::from_column_slice(psi);
    let n = psi.len();
    let mut coeff = vec![ZERO; n];
    for l in 0..n {
        let c: C64 = (0..n).map(|i| x[i] * v[(i, l)]).sum();
        coeff[l] = c * C64::from_polar(1.0, -eig.eigenvalues[l] * t);
    }
    (0..n).map(|i| (0..n).map(|l| coeff[l] * v[(i, l)]).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::junction::build_hs;

    fn spec(n_left: usize, n_right: usize, gamma: f64) -> ChainSpec {
        ChainSpec {
            n_left,
            n_right,
            left: BathSpec::polarized(1.0, 0.7, Polarization::Up),
            right: BathSpec::polarized(1.0, 0.3, Polarization::Down),
            junction: JunctionSpec { j_s: 0.4, delta: 0.25, jz_sys: 0.6, gamma },
            init: JunctionInit::UpDown,
        }
    }

    #[test]
    fn bare_junction_matches_dense_hamiltonian() {
        let s = spec(0, 0, 0.0);
        let b = Basis::for_chain(&s, BasisSelection::Full).unwrap();
        let h = build_chain_hamiltonian(&s, &b).unwrap().to_dense();
        let d = build_hs(&s.junction).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((d.matrix()[(r, c)] - C64::new(h[(r, c)], 0.0)).norm() < 1e-14, "{r} {c}");
            }
        }
    }

    #[test]
    fn sparse_is_symmetric_and_conserves_magnetisation() {
        let s = spec(2, 3, 0.5);
        let b = Basis::for_chain(&s, BasisSelection::Full).unwrap();
        let h = build_chain_hamiltonian(&s, &b).unwrap().to_dense();
        assert_eq!(h, h.transpose());
        for r in 0..b.len() {
            for c in 0..b.len() {
                if h[(r, c)] != 0.0 {
                    assert_eq!(b.states()[r].count_ones(), b.states()[c].count_ones());
                }
            }
        }
    }

    #[test]
    fn krylov_matches_dense_propagation() {
        let s = spec(2, 2, 0.5);
        let b = Basis::for_chain(&s, BasisSelection::Sector).unwrap();
        let h = build_chain_hamiltonian(&s, &b).unwrap();
        let psi0 = initial_state(&s, &b).unwrap();
        let exact = dense_evolve(&h.to_dense(), &psi0, 2.3);
        let mut psi = psi0.clone();
        let mut k = Krylov::new(b.len(), 12, 1e-12);
        k.step(&h, &mut psi, 2.3, 0.0).unwrap();
        let err: f64 = psi.iter().zip(&exact).map(|(a, e)| (a - e).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn bond_currents_obey_continuity() {
        let mut s = spec(3, 3, 0.6);
        s.init = JunctionInit::Amplitudes(vec![[0.3, 0.0], [0.5, 0.2], [0.1, -0.4], [0.6, 0.0]]);
        let b = Basis::for_chain(&s, BasisSelection::Full).unwrap();
        let h = build_chain_hamiltonian(&s, &b).unwrap().to_dense();
        let psi = dense_evolve(&h, &initial_state(&s, &b).unwrap(), 0.8);
        let eps = 1e-5;
        let zp = site_magnetisations(&b, &dense_evolve(&h, &psi, eps));
        let zm = site_magnetisations(&b, &dense_evolve(&h, &psi, -eps));
        let j = bond_currents(&s, &b, &psi);
        for i in 0..s.sites() {
            let dz = (zp[i] - zm[i]) / (2.0 * eps);
            let inflow = if i > 0 { j[i - 1] } else { 0.0 };
            let outflow = if i + 1 < s.sites() { j[i] } else { 0.0 };
            assert!((dz - (inflow - outflow)).abs() < 1e-6, "site {i}: {dz} vs {}", inflow - outflow);
        }
    }

    #[test]
    fn excitation_basis_contains_initial_state_and_is_sorted() {
        let s = spec(4, 4, 0.1);
        let b = Basis::for_chain(&s, BasisSelection::Excitations(2)).unwrap();
        // 4 junction states times (1 + 8 + 28) lead patterns
        assert_eq!(b.len(), 4 * 37);
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
        let psi = initial_state(&s, &b).unwrap();
        assert!((norm(&psi) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_sector_initial_state_is_rejected() {
        let mut s = spec(1, 1, 0.1);
        s.init = JunctionInit::Amplitudes(vec![[1.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(Basis::for_chain(&s, BasisSelection::Sector), Err(Error::Validation(_))));
        assert!(Basis::for_chain(&s, BasisSelection::Full).is_ok());
    }

    #[test]
    fn oversized_chain_is_rejected() {
        let s = spec(12, 11, 0.1);
        assert!(matches!(s.validate(), Err(Error::ChainTooLarge { sites: 25, .. })));
    }

    #[test]
    fn absorber_profile() {
        let a = AbsorberSpec { gamma_b: 0.5, amplitude: 4.0, sites: None };
        assert_eq!(a.range(), 6);
        let s = spec(8, 3, 0.1);
        let jumps = absorber_jumps(&s, &[Some(a), Some(a)]).unwrap();
        assert_eq!(jumps.len(), 9);
        assert_eq!(jumps[0], LocalJump { site: 0, raising: true, rate: 4.0 });
        assert_eq!(jumps[6].site, s.sites() - 1);
        assert!(!jumps[6].raising);
        assert!((jumps[1].rate - 4.0 * (-0.5f64).exp()).abs() < 1e-15);
    }
}
