//! Error mitigation by confusion-matrix inversion.
//!
//! For a Pauli channel followed by a noisy detector, the outcome
//! distribution of a measurement setting obeys `q = Lambda Delta p = Gamma p`
//! with `Delta` doubly stochastic. `Gamma` is estimated per setting by
//! preparing each eigenstate, letting it pass the noisy pipeline and
//! measuring, and is then inverted on measured distributions.
//!
//! Orientation: `entries[outcome][prepared]`, so `q = Gamma p` holds as a
//! matrix-vector product and columns sum to one.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DensityMatrix4, PauliString};
use crate::qpu::{
    apply_channel, derive_seed, ideal_probs, sample_outcomes, setting_for_group,
    MeasurementSetting, PauliChannel, ProbVector, StochasticMatrix,
};

pub const STOCHASTIC_TOL: f64 = 1e-9;
pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-10;
/// `|det Gamma|` at or below this is treated as singular.
pub const SINGULAR_DET: f64 = 1e-10;
/// Entries of `Gamma^-1 p` down to this are floating-point noise, not a
/// departure from the simplex.
pub const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMatrix {
    pub setting: PauliString,
    pub entries: StochasticMatrix,
}

impl GammaMatrix {
    pub fn identity(setting: PauliString) -> Self {
        GammaMatrix {
            setting,
            entries: StochasticMatrix::identity(),
        }
    }

    pub fn is_left_stochastic(&self) -> bool {
        self.entries.is_left_stochastic(STOCHASTIC_TOL)
    }

    pub fn determinant(&self) -> f64 {
        lu_solve(&self.entries.0, &[0.0; 4]).1
    }

    pub fn to_record(&self) -> GammaRecord {
        let m = &self.entries.0;
        GammaRecord {
            setting: self.setting,
            entries: (0..16).map(|k| m[k % 4][k / 4]).collect(),
        }
    }

    pub fn from_record(rec: &GammaRecord) -> Result<Self> {
        if rec.entries.len() != 16 {
            return Err(Error::Validation(format!(
                "gamma for {} has {} entries, expected 16",
                rec.setting,
                rec.entries.len()
            )));
        }
        let entries: [[f64; 4]; 4] =
            std::array::from_fn(|r| std::array::from_fn(|c| rec.entries[4 * c + r]));
        let entries = StochasticMatrix::left_stochastic(entries, STOCHASTIC_TOL)?;
        Ok(GammaMatrix {
            setting: rec.setting,
            entries,
        })
    }
}

/// On-disk form of a confusion matrix: setting label plus the 16 entries in
/// column-major order (column = prepared eigenstate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRecord {
    pub setting: PauliString,
    pub entries: Vec<f64>,
}

pub fn write_gammas_json<W: Write>(writer: W, gammas: &[GammaMatrix]) -> Result<()> {
    let records: Vec<GammaRecord> = gammas.iter().map(GammaMatrix::to_record).collect();
    serde_json::to_writer_pretty(writer, &records)?;
    Ok(())
}

pub fn read_gammas_json<R: Read>(reader: R) -> Result<Vec<GammaMatrix>> {
    let records: Vec<GammaRecord> = serde_json::from_reader(reader)?;
    records.iter().map(GammaMatrix::from_record).collect()
}

pub fn load_gammas(path: impl AsRef<Path>) -> Result<Vec<GammaMatrix>> {
    read_gammas_json(std::fs::File::open(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TomographyShots {
    /// Exact outcome probabilities in place of relative frequencies.
    Analytic,
    Finite(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TomographyConfig {
    pub shots_per_eigenstate: TomographyShots,
    pub seed: u64,
}

impl TomographyConfig {
    pub const DEFAULT_SHOTS: u64 = 10_000;

    pub fn sampled(shots: u64, seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Validation("tomography needs at least one shot".into()));
        }
        Ok(TomographyConfig {
            shots_per_eigenstate: TomographyShots::Finite(shots),
            seed,
        })
    }

    pub fn analytic() -> Self {
        TomographyConfig {
            shots_per_eigenstate: TomographyShots::Analytic,
            seed: 0,
        }
    }
}

/// Outcome distribution after preparing eigenket `k` of `setting` and
/// sending it through the channel and detector.
fn eigenstate_response(
    channel: &PauliChannel,
    detector: &StochasticMatrix,
    setting: &MeasurementSetting,
    k: usize,
) -> ProbVector {
    let rho = DensityMatrix4::from_ket(&setting.eigenkets[k]);
    detector.apply(&ideal_probs(&apply_channel(&rho, channel), setting))
}

/// The channel's action on outcome probabilities,
/// `Delta[l][k] = <phi_l| N(|phi_k><phi_k|) |phi_l>`.
pub fn transition_matrix(channel: &PauliChannel, setting: &MeasurementSetting) -> StochasticMatrix {
    let identity = StochasticMatrix::identity();
    let cols: [ProbVector; 4] =
        std::array::from_fn(|k| eigenstate_response(channel, &identity, setting, k));
    StochasticMatrix(std::array::from_fn(|l| std::array::from_fn(|k| cols[k].0[l])))
}

/// Exact `Gamma = Lambda Delta`.
pub fn analytic_gamma(
    channel: &PauliChannel,
    detector: &StochasticMatrix,
    setting: &MeasurementSetting,
) -> Result<GammaMatrix> {
    let delta = transition_matrix(channel, setting);
    if !delta.is_doubly_stochastic(DOUBLY_STOCHASTIC_TOL) {
        return Err(Error::Validation(format!(
            "channel transition matrix for {} is not doubly stochastic",
            setting.basis_setting
        )));
    }
    Ok(GammaMatrix {
        setting: setting.basis_setting,
        entries: detector.matmul(&delta),
    })
}

/// Detector tomography: column `k` holds the relative outcome frequencies
/// observed after preparing eigenstate `k`.
pub fn tomography(
    channel: &PauliChannel,
    detector: &StochasticMatrix,
    setting: &MeasurementSetting,
    cfg: &TomographyConfig,
) -> GammaMatrix {
    let cols: [ProbVector; 4] = std::array::from_fn(|k| {
        let q = eigenstate_response(channel, detector, setting, k);
        match cfg.shots_per_eigenstate {
            TomographyShots::Analytic => q,
            TomographyShots::Finite(shots) => {
                let seed = derive_seed(cfg.seed, &[setting_index(setting.basis_setting), k as u64]);
                sample_outcomes(&q, shots, seed).frequencies()
            }
        }
    });
    GammaMatrix {
        setting: setting.basis_setting,
        entries: StochasticMatrix(std::array::from_fn(|l| std::array::from_fn(|k| cols[k].0[l]))),
    }
}

fn setting_index(basis: PauliString) -> u64 {
    (basis.first.index() * 4 + basis.second.index()) as u64
}

/// Tomography of every setting in `bases`, one independent stream each.
pub fn tomography_all(
    channel: &PauliChannel,
    detectors: &[StochasticMatrix],
    bases: &[PauliString],
    cfg: &TomographyConfig,
) -> Result<Vec<GammaMatrix>> {
    bases
        .par_iter()
        .zip(detectors.par_iter())
        .map(|(&b, det)| Ok(tomography(channel, det, &setting_for_group(b)?, cfg)))
        .collect()
}

/// Gaussian elimination with partial pivoting. Returns the solution of
/// `m x = rhs` together with `det m`.
fn lu_solve(m: &[[f64; 4]; 4], rhs: &[f64; 4]) -> ([f64; 4], f64) {
    let mut a = *m;
    let mut b = *rhs;
    let mut det = 1.0;
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return ([f64::NAN; 4], 0.0);
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in (col + 1)..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = ((r + 1)..4).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    (x, det)
}

/// A confusion matrix checked for invertibility, ready to mitigate many
/// distributions.
#[derive(Clone, Debug)]
pub struct Mitigator {
    gamma: GammaMatrix,
    inverse: [[f64; 4]; 4],
}

impl Mitigator {
    pub fn new(gamma: GammaMatrix) -> Result<Self> {
        let m = &gamma.entries.0;
        let det = lu_solve(m, &[0.0; 4]).1;
        if !det.is_finite() || det.abs() <= SINGULAR_DET {
            return Err(Error::SingularGamma {
                setting: gamma.setting,
                det,
            });
        }
        let cols: [[f64; 4]; 4] = std::array::from_fn(|k| {
            let mut e = [0.0; 4];
            e[k] = 1.0;
            lu_solve(m, &e).0
        });
        let inverse = std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r]));
        Ok(Mitigator { gamma, inverse })
    }

    pub fn gamma(&self) -> &GammaMatrix {
        &self.gamma
    }

    /// Raw `Gamma^-1 p`, possibly outside the simplex.
    pub fn invert(&self, p: &ProbVector) -> [f64; 4] {
        std::array::from_fn(|r| (0..4).map(|c| self.inverse[r][c] * p.0[c]).sum())
    }

    pub fn apply(&self, p: &ProbVector) -> ProbVector {
        let raw = self.invert(p);
        let sum: f64 = raw.iter().sum();
        if raw.iter().all(|&x| x >= -NEGATIVE_TOL) && (sum - 1.0).abs() <= STOCHASTIC_TOL {
            let clipped = raw.map(|x| x.max(0.0));
            let s: f64 = clipped.iter().sum();
            ProbVector(clipped.map(|x| x / s))
        } else {
            project_simplex(raw)
        }
    }
}

pub fn mitigate(gamma: &GammaMatrix, p_exp: &ProbVector) -> Result<ProbVector> {
    Ok(Mitigator::new(*gamma)?.apply(p_exp))
}

/// Euclidean projection onto `{p >= 0, sum p = 1}` by sorting and
/// thresholding.
pub fn project_simplex(v: [f64; 4]) -> ProbVector {
    let mut u = v;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    ProbVector(v.map(|x| (x - theta).max(0.0)))
}
