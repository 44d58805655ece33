//! Simulated quantum processing unit: Pauli noise on the prepared ququart,
//! projective measurement in a product Z/X eigenbasis, readout confusion and
//! finite-shot sampling.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, DensityMatrix4, Ket2, Ket4, Op4, Pauli, PauliString, C64};

/// Two-qubit Pauli channel. `probs[j][k]` is the probability that Pauli `j`
/// hits the polarization qubit while Pauli `k` hits the path qubit (indices
/// in `I, X, Y, Z` order).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliChannel {
    probs: [[f64; 4]; 4],
}

impl PauliChannel {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(probs: [[f64; 4]; 4]) -> Result<Self> {
        if probs.iter().flatten().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation(
                "Pauli channel probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().flatten().sum();
        if (total - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Validation(format!(
                "Pauli channel probabilities sum to {total}, expected 1"
            )));
        }
        Ok(PauliChannel { probs })
    }

    pub fn identity() -> Self {
        let mut probs = [[0.0; 4]; 4];
        probs[0][0] = 1.0;
        PauliChannel { probs }
    }

    /// Uncorrelated channels: `p[j][k] = polarization[j] * path[k]`.
    pub fn product(polarization: [f64; 4], path: [f64; 4]) -> Result<Self> {
        let probs = std::array::from_fn(|j| std::array::from_fn(|k| polarization[j] * path[k]));
        Self::new(probs)
    }

    pub fn probs(&self) -> &[[f64; 4]; 4] {
        &self.probs
    }

    /// Kraus operator for the pair `(j, k)` in the ququart basis.
    pub fn kraus(j: usize, k: usize) -> Op4 {
        let pol = Pauli::from_index(j).expect("index in 0..4").matrix();
        let path = Pauli::from_index(k).expect("index in 0..4").matrix();
        kron(&path, &pol)
    }

    /// Heisenberg-picture damping of a Pauli string: the channel maps
    /// `<P>` to `factor * <P>`.
    pub fn pauli_fidelity(&self, string: PauliString) -> f64 {
        let mut f = 0.0;
        for (j, row) in self.probs.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                let pol = Pauli::from_index(j).unwrap();
                let path = Pauli::from_index(k).unwrap();
                let sign = anticommute_sign(path, string.first) * anticommute_sign(pol, string.second);
                f += p * sign;
            }
        }
        f
    }
}

fn anticommute_sign(a: Pauli, b: Pauli) -> f64 {
    if a == Pauli::I || b == Pauli::I || a == b {
        1.0
    } else {
        -1.0
    }
}

/// Depolarizing noise of strength `lambda` on the polarization qubit only:
/// `rho -> (1 - lambda) rho + lambda I/2`.
pub fn depolarizing_polarization(lambda: f64) -> Result<PauliChannel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "[0, 1]",
        });
    }
    let mut probs = [[0.0; 4]; 4];
    probs[0][0] = 1.0 - 0.75 * lambda;
    for row in probs.iter_mut().skip(1) {
        row[0] = 0.25 * lambda;
    }
    PauliChannel::new(probs)
}

pub fn apply_channel(rho: &DensityMatrix4, ch: &PauliChannel) -> DensityMatrix4 {
    let mut out = Op4::zero();
    for (j, row) in ch.probs.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            out = out + PauliChannel::kraus(j, k).conjugate(rho.op()).scale(p);
        }
    }
    DensityMatrix4::from_op_unchecked(out)
}

/// Column-stochastic 4x4 matrix; `entries[out][input]`, so `q = M p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix(pub [[f64; 4]; 4]);

impl StochasticMatrix {
    pub fn identity() -> Self {
        StochasticMatrix(std::array::from_fn(|r| {
            std::array::from_fn(|c| if r == c { 1.0 } else { 0.0 })
        }))
    }

    /// Validated left-stochastic matrix (entries in `[0, 1]`, unit column
    /// sums within `tol`).
    pub fn left_stochastic(entries: [[f64; 4]; 4], tol: f64) -> Result<Self> {
        let m = StochasticMatrix(entries);
        if !m.is_left_stochastic(tol) {
            return Err(Error::Validation(format!(
                "matrix is not left stochastic: {entries:?}"
            )));
        }
        Ok(m)
    }

    pub fn column_sums(&self) -> [f64; 4] {
        std::array::from_fn(|c| (0..4).map(|r| self.0[r][c]).sum())
    }

    pub fn row_sums(&self) -> [f64; 4] {
        self.0.map(|row| row.iter().sum())
    }

    pub fn is_left_stochastic(&self, tol: f64) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|&x| x.is_finite() && (-tol..=1.0 + tol).contains(&x))
            && self.column_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.is_left_stochastic(tol) && self.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn apply(&self, p: &ProbVector) -> ProbVector {
        ProbVector(std::array::from_fn(|r| (0..4).map(|c| self.0[r][c] * p.0[c]).sum()))
    }

    pub fn matmul(&self, rhs: &StochasticMatrix) -> StochasticMatrix {
        StochasticMatrix(std::array::from_fn(|r| {
            std::array::from_fn(|c| (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum())
        }))
    }
}

/// Four outcome probabilities of one measurement setting. Not necessarily
/// valid: raw mitigated vectors may leave the simplex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(pub [f64; 4]);

impl ProbVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|&p| p.is_finite() && p >= -tol) && (self.sum() - 1.0).abs() <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeHistogram {
    pub counts: [u64; 4],
    pub shots: u64,
}

impl OutcomeHistogram {
    pub fn frequencies(&self) -> ProbVector {
        let m = self.shots as f64;
        ProbVector(self.counts.map(|c| c as f64 / m))
    }
}

/// A nondegenerate product-basis measurement. Outcome `l = 2 i + j` where `i`
/// and `j` index the +1/-1 eigenstates of the first and second factors.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSetting {
    pub basis_setting: PauliString,
    pub eigenkets: [Ket4; 4],
    /// Eigenvalue of each covered non-identity string on each outcome.
    pub sign_table: BTreeMap<PauliString, [f64; 4]>,
}

fn single_qubit_eigenkets(p: Pauli) -> [Ket2; 2] {
    let h = FRAC_1_SQRT_2;
    match p {
        Pauli::Z => [Ket2::H, Ket2::V],
        Pauli::X => [
            Ket2([C64::new(h, 0.0), C64::new(h, 0.0)]),
            Ket2([C64::new(h, 0.0), C64::new(-h, 0.0)]),
        ],
        _ => unreachable!("only Z and X bases are supported"),
    }
}

pub fn setting_for_group(basis: PauliString) -> Result<MeasurementSetting> {
    let supported = |p: Pauli| matches!(p, Pauli::Z | Pauli::X);
    if !supported(basis.first) || !supported(basis.second) {
        return Err(Error::UnsupportedBasis(basis));
    }
    let a = single_qubit_eigenkets(basis.first);
    let b = single_qubit_eigenkets(basis.second);
    let eigenkets = std::array::from_fn(|l| Ket4::product(&a[l / 2], &b[l % 2]));

    let signs = |p: Pauli, bit: usize| if p == Pauli::I || bit == 0 { 1.0 } else { -1.0 };
    let mut sign_table = BTreeMap::new();
    for first in [Pauli::I, basis.first] {
        for second in [Pauli::I, basis.second] {
            let s = PauliString::new(first, second);
            if s.is_identity() {
                continue;
            }
            let row = std::array::from_fn(|l| signs(first, l / 2) * signs(second, l % 2));
            sign_table.insert(s, row);
        }
    }
    Ok(MeasurementSetting {
        basis_setting: basis,
        eigenkets,
        sign_table,
    })
}

pub fn ideal_probs(rho: &DensityMatrix4, setting: &MeasurementSetting) -> ProbVector {
    ProbVector(
        setting
            .eigenkets
            .map(|phi| rho.op().sandwich(&phi).re.max(0.0)),
    )
}

/// Multinomial draw by inverse CDF, one uniform per shot.
pub fn sample_outcomes(p: &ProbVector, shots: u64, seed: u64) -> OutcomeHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = p.sum();
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (c, &pi) in cdf.iter_mut().zip(p.0.iter()) {
        acc += pi.max(0.0) / total;
        *c = acc;
    }
    let mut counts = [0u64; 4];
    for _ in 0..shots {
        let u: f64 = rng.gen();
        // the last bin absorbs any rounding slack in the cdf
        let bin = cdf[..3].iter().position(|&c| u < c).unwrap_or(3);
        counts[bin] += 1;
    }
    OutcomeHistogram { counts, shots }
}

/// Expectation of each covered string under outcome distribution `p`.
pub fn pauli_expectations(p: &ProbVector, setting: &MeasurementSetting) -> BTreeMap<PauliString, f64> {
    setting
        .sign_table
        .iter()
        .map(|(&s, signs)| (s, signs.iter().zip(p.0.iter()).map(|(a, b)| a * b).sum()))
        .collect()
}

/// Sample means of the covered strings, each in `[-1, 1]`.
pub fn estimate_paulis(hist: &OutcomeHistogram, setting: &MeasurementSetting) -> BTreeMap<PauliString, f64> {
    pauli_expectations(&hist.frequencies(), setting)
}

/// Hoeffding tail bound `2 exp(-M t^2 / 2)` for a mean of M variables in
/// `{-1, +1}`, clamped to 1.
pub fn hoeffding_bound(shots: u64, t: f64) -> f64 {
    (2.0 * (-(shots as f64) * t * t / 2.0).exp()).min(1.0)
}

/// SplitMix64 finalizer; derives independent stream seeds from a base seed.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, &s| mix(acc ^ mix(s)))
}
