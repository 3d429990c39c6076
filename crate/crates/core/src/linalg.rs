//! Dense operators on small spin-1/2 registers.
//!
//! Site 0 is the most significant tensor factor, so for two sites `L, R` the
//! basis order is `|00>, |01>, |10>, |11>` with the left spin written first.
//! A local basis state `|1>` is spin up (`Z|1> = +|1>`), and the lowering
//! operator is `sigma = |0><1|`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Single-site matrices.
pub mod pauli {
    use super::*;

    /// Lowering operator `|0><1|`.
    pub fn sigma() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
    }

    /// Raising operator `|1><0|`.
    pub fn sigma_dag() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
    }

    /// `Z = sigma^dag sigma - sigma sigma^dag`, i.e. `diag(-1, +1)`.
    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE])
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }
}

/// Ordered list of labelled spin-1/2 sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    labels: Vec<String>,
}

impl HilbertSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("a Hilbert space needs at least one site"));
        }
        if labels.len() > 12 {
            return Err(Error::invalid(format!(
                "dense operators support at most 12 sites, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate site label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// The two-spin junction space `[L, R]`.
    pub fn junction() -> Self {
        Self { labels: vec!["L".into(), "R".into()] }
    }

    pub fn sites(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownSite(label.to_string()))
    }
}

/// A square matrix tied to a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if matrix.nrows() != d { matrix.nrows() } else { matrix.ncols() },
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::identity(d, d) }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::zeros(d, d) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `tr(self * rho)`.
    pub fn expectation(&self, rho: &Operator) -> C64 {
        trace_product(&self.matrix, &rho.matrix)
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        self.same_space(other);
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
        }
    }

    pub fn anticommutator(&self, other: &Operator) -> Self {
        self.same_space(other);
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix + &other.matrix * &self.matrix,
        }
    }

    /// Frobenius norm of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { space: self.space.clone(), matrix: &self.matrix * c }
    }

    fn same_space(&self, other: &Operator) {
        assert_eq!(self.space, other.space, "operators live on different spaces");
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator { space: self.space.clone(), matrix: &self.matrix * &rhs.matrix }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-ONE)
    }
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Lift a single-site 2x2 operator to the full space.
pub fn embed(local: &CMatrix, site: &str, space: &HilbertSpace) -> Result<Operator> {
    let idx = space.index_of(site)?;
    embed_at(local, idx, space)
}

/// Lift a single-site 2x2 operator acting on site `idx`.
pub fn embed_at(local: &CMatrix, idx: usize, space: &HilbertSpace) -> Result<Operator> {
    if local.nrows() != 2 || local.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: local.nrows() });
    }
    if idx >= space.sites() {
        return Err(Error::UnknownSite(format!("#{idx}")));
    }
    let id = pauli::identity();
    let mut m = CMatrix::identity(1, 1);
    for s in 0..space.sites() {
        m = kron(&m, if s == idx { local } else { &id });
    }
    Operator::new(space.clone(), m)
}

/// One degenerate eigenvalue group of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct EnergyLevel {
    pub energy: f64,
    pub multiplicity: usize,
    pub projector: CMatrix,
}

/// Spectral decomposition of a Hermitian operator with degenerate levels grouped.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    energies: Vec<f64>,
    vectors: CMatrix,
    levels: Vec<EnergyLevel>,
    tol: f64,
}

impl EigenSystem {
    /// All eigenvalues in ascending order (with repetitions).
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::energies`].
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn levels(&self) -> &[EnergyLevel] {
        &self.levels
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.tol
    }

    /// Distinct Bohr frequencies `E' - E` over all level pairs, ascending.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut w: Vec<f64> = Vec::new();
        for a in &self.levels {
            for b in &self.levels {
                w.push(b.energy - a.energy);
            }
        }
        w.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::new();
        for x in w {
            match out.last() {
                Some(&y) if (x - y).abs() <= self.tol => {}
                _ => out.push(x),
            }
        }
        out
    }

    /// `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let d = self.vectors.nrows();
        let mut vd = self.vectors.clone();
        for (j, &e) in self.energies.iter().enumerate() {
            let ph = C64::from_polar(1.0, -e * t);
            for i in 0..d {
                vd[(i, j)] *= ph;
            }
        }
        vd * self.vectors.adjoint()
    }

    /// Heisenberg-picture operator `exp(iHt) A exp(-iHt)`.
    pub fn heisenberg(&self, a: &CMatrix, t: f64) -> CMatrix {
        let u = self.propagator(t);
        u.adjoint() * a * u
    }
}

/// Diagonalise a Hermitian operator and group levels closer than `degeneracy_tol`.
pub fn eigensystem(h: &Operator, degeneracy_tol: f64) -> Result<EigenSystem> {
    let scale = h.norm().max(1.0);
    let defect = h.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(Error::NotHermitian { defect });
    }
    if !(degeneracy_tol >= 0.0) {
        return Err(Error::invalid("degeneracy tolerance must be non-negative"));
    }
    let herm = (h.matrix() + h.matrix().adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(herm, 1e-15, 100_000)
        .ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let d = order.len();
    let energies: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    let mut vectors = CMatrix::zeros(d, d);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(k));
    }

    let mut levels = Vec::new();
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && energies[end] - energies[end - 1] <= degeneracy_tol {
            end += 1;
        }
        let block = vectors.columns(start, end - start);
        let projector = block * block.adjoint();
        let energy = energies[start..end].iter().sum::<f64>() / (end - start) as f64;
        levels.push(EnergyLevel { energy, multiplicity: end - start, projector });
        start = end;
    }
    Ok(EigenSystem { energies, vectors, levels, tol: degeneracy_tol })
}

/// Heisenberg-picture operator `exp(iHt) A exp(-iHt)`.
pub fn heisenberg(a: &Operator, h: &Operator, t: f64) -> Result<Operator> {
    if a.space() != h.space() {
        return Err(Error::DimensionMismatch { expected: h.space().dim(), found: a.space().dim() });
    }
    let es = eigensystem(h, 0.0)?;
    Operator::new(a.space().clone(), es.heisenberg(a.matrix(), t))
}

/// Projector `|psi><psi|` for a computational basis state.
pub fn basis_projector(space: &HilbertSpace, index: usize) -> Result<Operator> {
    let d = space.dim();
    if index >= d {
        return Err(Error::invalid(format!("basis index {index} out of range for dimension {d}")));
    }
    let mut m = CMatrix::zeros(d, d);
    m[(index, index)] = ONE;
    Operator::new(space.clone(), m)
}

/// Hermitian eigenvalues of a density matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut v: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Trace distance `||A - B||_1 / 2` for Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two() -> HilbertSpace {
        HilbertSpace::junction()
    }

    #[test]
    fn local_algebra() {
        let s = pauli::sigma();
        let sd = pauli::sigma_dag();
        assert_eq!(&sd * &s - &s * &sd, pauli::z());
        assert_eq!(&s * &s, CMatrix::zeros(2, 2));
        assert_eq!(pauli::z()[(1, 1)], ONE);
    }

    #[test]
    fn embed_orders_left_first() {
        let sp = two();
        let zl = embed(&pauli::z(), "L", &sp).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| zl.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![-1.0, -1.0, 1.0, 1.0]);
        let zr = embed(&pauli::z(), "R", &sp).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| zr.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![-1.0, 1.0, -1.0, 1.0]);
        let sl = embed(&pauli::sigma(), "L", &sp).unwrap();
        let sr = embed(&pauli::sigma(), "R", &sp).unwrap();
        assert_eq!(sl.commutator(&sr).norm(), 0.0);
    }

    #[test]
    fn unknown_site_is_reported() {
        assert!(matches!(embed(&pauli::z(), "Q", &two()), Err(Error::UnknownSite(_))));
    }

    #[test]
    fn heisenberg_at_zero_is_identity_map() {
        let sp = two();
        let h = &embed(&pauli::x(), "L", &sp).unwrap() + &embed(&pauli::z(), "R", &sp).unwrap();
        let a = embed(&pauli::sigma(), "L", &sp).unwrap();
        let a0 = heisenberg(&a, &h, 0.0).unwrap();
        assert!((a0.matrix() - a.matrix()).norm() < 1e-14);
    }

    #[test]
    fn heisenberg_matches_taylor_series() {
        let sp = two();
        let h = &(&embed(&pauli::x(), "L", &sp).unwrap() * 0.7)
            + &(&embed(&pauli::z(), "R", &sp).unwrap() * -0.3);
        let a = embed(&pauli::sigma(), "L", &sp).unwrap();
        let t = 0.4;
        // exp(-iHt) via a long Taylor series
        let mut u = CMatrix::identity(4, 4);
        let mut term = CMatrix::identity(4, 4);
        for k in 1..40 {
            term = &term * h.matrix() * C64::new(0.0, -t / k as f64);
            u += &term;
        }
        let expect = u.adjoint() * a.matrix() * &u;
        let got = heisenberg(&a, &h, t).unwrap();
        assert!((got.matrix() - expect).norm() < 1e-12);
    }

    #[test]
    fn eigensystem_groups_degenerate_levels() {
        let sp = two();
        let h = &embed(&pauli::z(), "L", &sp).unwrap() + &embed(&pauli::z(), "R", &sp).unwrap();
        let es = eigensystem(&h, 1e-9).unwrap();
        assert_eq!(es.energies(), &[-2.0, 0.0, 0.0, 2.0]);
        assert_eq!(es.levels().len(), 3);
        assert_eq!(es.levels()[1].multiplicity, 2);
        let total: CMatrix = es.levels().iter().map(|l| l.projector.clone()).sum();
        assert!((total - CMatrix::identity(4, 4)).norm() < 1e-12);
        assert_eq!(es.frequencies(), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn eigensystem_rejects_non_hermitian() {
        let sp = two();
        let a = embed(&pauli::sigma(), "L", &sp).unwrap();
        assert!(matches!(eigensystem(&a, 1e-9), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn operator_dimension_checked() {
        assert!(matches!(
            Operator::new(two(), CMatrix::zeros(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trace_distance_of_orthogonal_states_is_one() {
        let sp = two();
        let a = basis_projector(&sp, 0).unwrap();
        let b = basis_projector(&sp, 3).unwrap();
        assert_relative_eq!(trace_distance(a.matrix(), b.matrix()), 1.0, epsilon = 1e-14);
    }
}
