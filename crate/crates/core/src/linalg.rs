//! Fixed-size complex linear algebra on the qubit (2) and ququart (4) spaces.
//!
//! Basis ordering for the ququart is `|aH>, |aV>, |bH>, |bV>`, i.e. index
//! `2 * path + polarization`. Under the Kronecker product `kron(A, B)` the
//! first factor therefore acts on the path (spatial mode a/b) and the second
//! on the polarization (H/V).

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance used when an operator is required to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket2(pub [C64; 2]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket4(pub [C64; 4]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Op2(pub [[C64; 2]; 2]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Op4(pub [[C64; 4]; 4]);

impl Ket2 {
    pub const H: Ket2 = Ket2([ONE, ZERO]);
    pub const V: Ket2 = Ket2([ZERO, ONE]);

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Ket4 {
    pub fn basis(index: usize) -> Ket4 {
        let mut amps = [ZERO; 4];
        amps[index] = ONE;
        Ket4(amps)
    }

    /// `a ⊗ b` with `a` the path factor and `b` the polarization factor.
    pub fn product(a: &Ket2, b: &Ket2) -> Ket4 {
        Ket4([a.0[0] * b.0[0], a.0[0] * b.0[1], a.0[1] * b.0[0], a.0[1] * b.0[1]])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Ket4 {
        let n = self.norm();
        Ket4(self.0.map(|a| a / n))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Ket4) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|self><self|`.
    pub fn projector(&self) -> Op4 {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = self.0[r] * self.0[c].conj();
            }
        }
        Op4(m)
    }

    /// `|<self|other>|`, the overlap modulo global phase.
    pub fn overlap(&self, other: &Ket4) -> f64 {
        self.inner(other).norm()
    }
}

impl Op2 {
    pub fn identity() -> Op2 {
        Op2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn scale(&self, s: C64) -> Op2 {
        Op2(self.0.map(|row| row.map(|x| x * s)))
    }

    pub fn adjoint(&self) -> Op2 {
        let m = &self.0;
        Op2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn apply(&self, v: &Ket2) -> Ket2 {
        let m = &self.0;
        Ket2([
            m[0][0] * v.0[0] + m[0][1] * v.0[1],
            m[1][0] * v.0[0] + m[1][1] * v.0[1],
        ])
    }

    pub fn max_abs_diff(&self, other: &Op2) -> f64 {
        let mut d = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) < tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&Op2::identity()) < tol
    }
}

impl Mul for Op2 {
    type Output = Op2;

    fn mul(self, rhs: Op2) -> Op2 {
        let mut m = [[ZERO; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c];
            }
        }
        Op2(m)
    }
}

impl Op4 {
    pub fn zero() -> Op4 {
        Op4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Op4 {
        let mut m = [[ZERO; 4]; 4];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = ONE;
        }
        Op4(m)
    }

    pub fn from_real_diagonal(d: [f64; 4]) -> Op4 {
        let mut m = Op4::zero();
        for (k, v) in d.into_iter().enumerate() {
            m.0[k][k] = C64::new(v, 0.0);
        }
        m
    }

    pub fn scale(&self, s: f64) -> Op4 {
        Op4(self.0.map(|row| row.map(|x| x * s)))
    }

    pub fn adjoint(&self) -> Op4 {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = self.0[c][r].conj();
            }
        }
        Op4(m)
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|k| self.0[k][k]).sum()
    }

    pub fn apply(&self, v: &Ket4) -> Ket4 {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|c| self.0[r][c] * v.0[c]).sum();
        }
        Ket4(out)
    }

    /// `<v|A|v>` (not divided by `<v|v>`).
    pub fn sandwich(&self, v: &Ket4) -> C64 {
        v.inner(&self.apply(v))
    }

    pub fn max_abs_diff(&self, other: &Op4) -> f64 {
        let mut d = 0.0f64;
        for r in 0..4 {
            for c in 0..4 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&Op4::identity()) < tol
    }

    /// `A rho A^dagger`.
    pub fn conjugate(&self, rho: &Op4) -> Op4 {
        *self * *rho * self.adjoint()
    }
}

impl Mul for Op4 {
    type Output = Op4;

    fn mul(self, rhs: Op4) -> Op4 {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        Op4(m)
    }
}

impl Add for Op4 {
    type Output = Op4;

    fn add(self, rhs: Op4) -> Op4 {
        let mut m = self.0;
        for (r, row) in m.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry += rhs.0[r][c];
            }
        }
        Op4(m)
    }
}

impl Sub for Op4 {
    type Output = Op4;

    fn sub(self, rhs: Op4) -> Op4 {
        self + rhs.scale(-1.0)
    }
}

/// `a ⊗ b`; `a` acts on the path qubit, `b` on the polarization qubit.
pub fn kron(a: &Op2, b: &Op2) -> Op4 {
    let mut m = [[ZERO; 4]; 4];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = a.0[r / 2][c / 2] * b.0[r % 2][c % 2];
        }
    }
    Op4(m)
}

/// A 4x4 density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix4(Op4);

impl DensityMatrix4 {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const MIN_EIGENVALUE: f64 = -1e-8;

    pub fn new(op: Op4) -> Result<DensityMatrix4> {
        let defect = op.hermiticity_defect();
        if defect >= Self::HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: defect });
        }
        let tr = op.trace();
        if (tr - ONE).norm() >= Self::TRACE_TOL {
            return Err(Error::Validation(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let eig = eig_hermitian(&op)?;
        if eig.values[0] < Self::MIN_EIGENVALUE {
            return Err(Error::Validation(format!(
                "density matrix has negative eigenvalue {:.3e}",
                eig.values[0]
            )));
        }
        Ok(DensityMatrix4(op))
    }

    /// Skips validation; for values produced by trace-preserving maps of
    /// already-valid states.
    pub(crate) fn from_op_unchecked(op: Op4) -> DensityMatrix4 {
        DensityMatrix4(op)
    }

    pub fn from_ket(ket: &Ket4) -> DensityMatrix4 {
        DensityMatrix4(ket.normalized().projector())
    }

    pub fn maximally_mixed() -> DensityMatrix4 {
        DensityMatrix4(Op4::identity().scale(0.25))
    }

    pub fn op(&self) -> &Op4 {
        &self.0
    }

    /// Real diagonal entry `<k|rho|k>`.
    pub fn population(&self, k: usize) -> f64 {
        self.0 .0[k][k].re
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Option<Pauli> {
        Self::ALL.get(k).copied()
    }

    pub fn matrix(self) -> Op2 {
        match self {
            Pauli::I => Op2::identity(),
            Pauli::X => Op2([[ZERO, ONE], [ONE, ZERO]]),
            Pauli::Y => Op2([[ZERO, -I], [I, ZERO]]),
            Pauli::Z => Op2([[ONE, ZERO], [ZERO, -ONE]]),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// Two-qubit Pauli string `first ⊗ second`. The first factor acts on the
/// path qubit and the second on the polarization qubit, so `"ZX"` is
/// `Z_path ⊗ X_polarization`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    pub first: Pauli,
    pub second: Pauli,
}

impl PauliString {
    pub const fn new(first: Pauli, second: Pauli) -> PauliString {
        PauliString { first, second }
    }

    pub fn matrix(&self) -> Op4 {
        kron(&self.first.matrix(), &self.second.matrix())
    }

    pub fn is_identity(&self) -> bool {
        self.first == Pauli::I && self.second == Pauli::I
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.first.symbol(), self.second.symbol())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<PauliString> {
        let mut chars = s.trim().chars();
        let parsed = match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Pauli::from_symbol(a).zip(Pauli::from_symbol(b)),
            _ => None,
        };
        parsed
            .map(|(a, b)| PauliString::new(a, b))
            .ok_or_else(|| Error::Validation(format!("invalid two-qubit Pauli string {s:?}")))
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Spectral decomposition with eigenvalues in nondecreasing order;
/// `vectors[k]` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: [f64; 4],
    pub vectors: [Ket4; 4],
}

impl Eigen {
    pub fn ground_energy(&self) -> f64 {
        self.values[0]
    }

    pub fn ground_state(&self) -> Ket4 {
        self.vectors[0]
    }

    pub fn reconstruct(&self) -> Op4 {
        self.values
            .iter()
            .zip(self.vectors.iter())
            .fold(Op4::zero(), |acc, (&e, v)| acc + v.projector().scale(e))
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn eig_hermitian(op: &Op4) -> Result<Eigen> {
    let defect = op.hermiticity_defect();
    if defect >= HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: defect });
    }
    // symmetrize away the sub-tolerance defect
    let mut a = (*op + op.adjoint()).scale(0.5);
    let mut v = Op4::identity();

    let scale = a
        .0
        .iter()
        .flatten()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..4)
            .flat_map(|r| (0..4).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a.0[r][c].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a.0[p][q];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                // Phase so that the (p, q) entry becomes real and positive,
                // then a real symmetric rotation annihilates it.
                let phase = apq / mag;
                let app = a.0[p][p].re;
                let aqq = a.0[q][q].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let mut g = Op4::identity();
                g.0[p][p] = C64::new(c, 0.0);
                g.0[p][q] = C64::new(s, 0.0);
                g.0[q][p] = -phase.conj() * s;
                g.0[q][q] = phase.conj() * c;

                a = g.adjoint() * a * g;
                a.0[p][q] = ZERO;
                a.0[q][p] = ZERO;
                v = v * g;
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| a.0[i][i].re.total_cmp(&a.0[j][j].re));
    let values = order.map(|k| a.0[k][k].re);
    let vectors = order.map(|k| Ket4([v.0[0][k], v.0[1][k], v.0[2][k], v.0[3][k]]));
    Ok(Eigen { values, vectors })
}

/// `Tr(op rho)` for Hermitian `op`.
pub fn expectation(op: &Op4, rho: &DensityMatrix4) -> Result<f64> {
    let defect = op.hermiticity_defect();
    if defect >= HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: defect });
    }
    Ok((*op * *rho.op()).trace().re)
}

/// `<psi|op|psi>` for a normalized ket; the Rayleigh quotient without the
/// denominator.
pub fn expectation_pure(op: &Op4, psi: &Ket4) -> f64 {
    op.sandwich(psi).re
}
