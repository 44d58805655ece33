//! The VQE loop end to end, plus the experiments built on it: dissociation
//! curves, noise sweeps and optimizer benchmarks.
//!
//! Each evaluation prepares the ququart, sends it through the channel once,
//! then measures the four settings (optionally sampling shots and mitigating
//! the histograms) and combines the Pauli estimates into an energy.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{prepare_ququart, random_angles, WaveplateAngles};
use crate::error::{Error, Result};
use crate::hamiltonian::{combine_expectations, find_distance, standard_groups, MolecularHamiltonian};
use crate::linalg::DensityMatrix4;
use crate::optim::{is_success, minimize, Method, ObjectiveFn, OptResult, OptimizerConfig, TracePoint};
use crate::qem::{
    analytic_gamma, tomography, GammaMatrix, GammaRecord, Mitigator, TomographyConfig, STOCHASTIC_TOL,
};
use crate::qpu::{
    apply_channel, depolarizing_polarization, derive_seed, ideal_probs, pauli_expectations, sample_outcomes,
    setting_for_group, MeasurementSetting, PauliChannel, StochasticMatrix,
};

/// Seed streams derived from a run seed.
const STREAM_START: u64 = 1;
const STREAM_SHOTS: u64 = 2;
const STREAM_TOMOGRAPHY: u64 = 3;
const STREAM_BENCH: u64 = 4;
const STREAM_EXPECTED: u64 = 5;

/// Number of lowest trace energies averaged into the final estimate.
pub const FIVE_MINIMUM: usize = 5;

/// Nelder-Mead's evaluation cap in the optimizer benchmark; its slowest runs
/// otherwise take thousands of evaluations.
pub const NELDER_MEAD_BENCH_CAP: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Finite shots per setting.
    Sampled,
    /// Exact outcome probabilities.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Depolarizing noise of strength `lambda` on the polarization qubit.
    Depolarizing { lambda: f64 },
    /// Full Pauli channel, `probs[j][k]` for polarization Pauli `j` and path
    /// Pauli `k`.
    Pauli { probs: [[f64; 4]; 4] },
}

impl NoiseSpec {
    pub fn channel(&self) -> Result<PauliChannel> {
        match self {
            NoiseSpec::Depolarizing { lambda } => depolarizing_polarization(*lambda),
            NoiseSpec::Pauli { probs } => PauliChannel::new(*probs),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            NoiseSpec::Depolarizing { lambda } => Some(*lambda),
            NoiseSpec::Pauli { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSource {
    /// Exact `Lambda Delta` from the configured channel and detector.
    Analytic,
    /// Fresh detector tomography with this many shots per eigenstate.
    Tomography { shots: u64 },
    /// Matrices from an earlier tomography, one per setting.
    Provided { gammas: Vec<GammaRecord> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeConfig {
    pub distance: f64,
    pub shots_per_setting: u64,
    pub noise: Option<NoiseSpec>,
    /// Detector confusion matrices in setting order ZZ, ZX, XZ, XX.
    pub detector: Option<[StochasticMatrix; 4]>,
    pub qem_enabled: bool,
    pub gamma_source: GammaSource,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for VqeConfig {
    fn default() -> Self {
        VqeConfig {
            distance: 0.9,
            shots_per_setting: 4000,
            noise: None,
            detector: None,
            qem_enabled: false,
            gamma_source: GammaSource::Tomography {
                shots: TomographyConfig::DEFAULT_SHOTS,
            },
            optimizer: OptimizerConfig::default(),
            seed: 0,
            mode: Mode::Sampled,
        }
    }
}

impl VqeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots_per_setting == 0 {
            return Err(Error::Validation("shots per setting must be at least 1".into()));
        }
        if !self.distance.is_finite() {
            return Err(Error::Validation("distance must be finite".into()));
        }
        self.optimizer.validate()?;
        self.channel()?;
        if let Some(dets) = &self.detector {
            for d in dets {
                StochasticMatrix::left_stochastic(d.0, STOCHASTIC_TOL)?;
            }
        }
        if let GammaSource::Tomography { shots: 0 } = self.gamma_source {
            return Err(Error::Validation("tomography needs at least one shot".into()));
        }
        if self.qem_enabled {
            if let Some(NoiseSpec::Depolarizing { lambda }) = self.noise {
                if lambda >= 1.0 {
                    return Err(Error::OutOfRange {
                        name: "lambda",
                        value: lambda,
                        range: "[0, 1) with error mitigation",
                    });
                }
            }
        }
        Ok(())
    }

    pub fn channel(&self) -> Result<PauliChannel> {
        self.noise
            .as_ref()
            .map_or_else(|| Ok(PauliChannel::identity()), NoiseSpec::channel)
    }

    fn detectors(&self) -> [StochasticMatrix; 4] {
        self.detector.unwrap_or([StochasticMatrix::identity(); 4])
    }
}

/// Energy estimator with everything that does not depend on the angles
/// prepared once.
pub struct EnergyObjective {
    h: MolecularHamiltonian,
    channel: PauliChannel,
    settings: Vec<MeasurementSetting>,
    detectors: [StochasticMatrix; 4],
    mitigators: Option<Vec<Mitigator>>,
    shots: u64,
    mode: Mode,
    seed: u64,
}

impl EnergyObjective {
    /// `gammas` are required, one per setting in group order, when
    /// mitigation is enabled.
    pub fn new(h: &MolecularHamiltonian, cfg: &VqeConfig, gammas: Option<&[GammaMatrix]>) -> Result<Self> {
        cfg.validate()?;
        let groups = standard_groups();
        let settings = groups
            .iter()
            .map(|g| setting_for_group(g.basis_setting))
            .collect::<Result<Vec<_>>>()?;
        // every term must be covered by some setting
        let covered = settings
            .iter()
            .flat_map(|s| s.sign_table.keys().map(|&k| (k, 0.0)))
            .collect();
        combine_expectations(h, &covered)?;

        let mitigators = if cfg.qem_enabled {
            let gammas = gammas.ok_or_else(|| Error::Validation("mitigation needs one Gamma per setting".into()))?;
            let ordered = settings
                .iter()
                .map(|s| {
                    gammas
                        .iter()
                        .find(|g| g.setting == s.basis_setting)
                        .cloned()
                        .ok_or_else(|| Error::Validation(format!("no Gamma for setting {}", s.basis_setting)))
                        .and_then(Mitigator::new)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(ordered)
        } else {
            None
        };

        Ok(EnergyObjective {
            h: h.clone(),
            channel: cfg.channel()?,
            settings,
            detectors: cfg.detectors(),
            mitigators,
            shots: cfg.shots_per_setting,
            mode: cfg.mode,
            seed: cfg.seed,
        })
    }

    /// Energy at `theta`. `eval_index` selects the shot stream in sampled
    /// mode so that every evaluation draws fresh, reproducible shots.
    pub fn energy(&self, theta: &WaveplateAngles, eval_index: u64) -> f64 {
        let rho = apply_channel(&DensityMatrix4::from_ket(&prepare_ququart(theta)), &self.channel);
        let mut estimates = std::collections::BTreeMap::new();
        for (s, setting) in self.settings.iter().enumerate() {
            let p = self.detectors[s].apply(&ideal_probs(&rho, setting));
            let p = match self.mode {
                Mode::Analytic => p,
                Mode::Sampled => {
                    let seed = derive_seed(self.seed, &[STREAM_SHOTS, eval_index, s as u64]);
                    sample_outcomes(&p, self.shots, seed).frequencies()
                }
            };
            let p = match &self.mitigators {
                Some(m) => m[s].apply(&p),
                None => p,
            };
            estimates.extend(pauli_expectations(&p, setting));
        }
        combine_expectations(&self.h, &estimates).expect("coverage checked at construction")
    }

    /// Shots spent per evaluation (zero in analytic mode).
    pub fn shots_per_evaluation(&self) -> u64 {
        match self.mode {
            Mode::Analytic => 0,
            Mode::Sampled => self.shots * self.settings.len() as u64,
        }
    }
}

/// One-shot evaluation of the pipeline at `theta`.
pub fn energy_objective(
    theta: &WaveplateAngles,
    h: &MolecularHamiltonian,
    cfg: &VqeConfig,
    gammas: Option<&[GammaMatrix]>,
) -> Result<f64> {
    Ok(EnergyObjective::new(h, cfg, gammas)?.energy(theta, 0))
}

/// The matrices used for mitigation under `cfg`, in setting order.
pub fn prepare_gammas(cfg: &VqeConfig) -> Result<Vec<GammaMatrix>> {
    let channel = cfg.channel()?;
    let detectors = cfg.detectors();
    let groups = standard_groups();
    match &cfg.gamma_source {
        GammaSource::Analytic => groups
            .iter()
            .zip(&detectors)
            .map(|(g, d)| analytic_gamma(&channel, d, &setting_for_group(g.basis_setting)?))
            .collect(),
        GammaSource::Tomography { shots } => {
            let tcfg = TomographyConfig::sampled(*shots, derive_seed(cfg.seed, &[STREAM_TOMOGRAPHY]))?;
            groups
                .iter()
                .zip(&detectors)
                .map(|(g, d)| Ok(tomography(&channel, d, &setting_for_group(g.basis_setting)?, &tcfg)))
                .collect()
        }
        GammaSource::Provided { gammas } => gammas.iter().map(GammaMatrix::from_record).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeRunResult {
    pub config: VqeConfig,
    pub trace: Vec<TracePoint>,
    pub gammas: Option<Vec<GammaRecord>>,
    pub best_theta: Vec<f64>,
    pub best_energy: f64,
    pub n_evals: usize,
    pub total_shots: u64,
    pub converged: bool,
    pub final_energy: f64,
    pub final_std: f64,
    pub oracle_e0: f64,
    pub success: bool,
}

/// Mean and population standard deviation of the `FIVE_MINIMUM` lowest
/// values (all of them if there are fewer).
pub fn five_minimum(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.truncate(FIVE_MINIMUM);
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the optimizer on `objective` from `theta0`, giving every evaluation
/// its own shot stream.
fn optimize(objective: &EnergyObjective, theta0: &WaveplateAngles, opt: &OptimizerConfig) -> Result<OptResult> {
    let mut counter = 0u64;
    let mut f = ObjectiveFn::new(|x: &[f64]| {
        let theta = WaveplateAngles::from_slice(x).expect("optimizer keeps six finite angles");
        let e = objective.energy(&theta, counter);
        counter += 1;
        e
    });
    minimize(&mut f, theta0.as_slice(), opt)
}

pub fn run_vqe(h: &MolecularHamiltonian, cfg: &VqeConfig) -> Result<VqeRunResult> {
    cfg.validate()?;
    let gammas = if cfg.qem_enabled {
        Some(prepare_gammas(cfg)?)
    } else {
        None
    };
    let objective = EnergyObjective::new(h, cfg, gammas.as_deref())?;
    let theta0 = random_angles(derive_seed(cfg.seed, &[STREAM_START]));
    let result = optimize(&objective, &theta0, &cfg.optimizer)?;

    let values: Vec<f64> = result.trace.iter().map(|p| p.value).collect();
    let (final_energy, final_std) = five_minimum(&values);
    let oracle_e0 = h.ground_energy();
    Ok(VqeRunResult {
        config: VqeConfig {
            distance: h.distance,
            ..cfg.clone()
        },
        success: is_success(&result, oracle_e0),
        best_theta: result.best_theta,
        best_energy: result.best_value,
        n_evals: result.n_evals,
        total_shots: objective.shots_per_evaluation() * result.n_evals as u64,
        converged: result.converged,
        trace: result.trace,
        gammas: gammas.map(|g| g.iter().map(GammaMatrix::to_record).collect()),
        final_energy,
        final_std,
        oracle_e0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub energy: f64,
    pub std: f64,
    pub oracle: f64,
    pub success: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub rows: Vec<CurveRow>,
}

/// One run per distance; run `i` (in the order given) uses seed
/// `cfg.seed + i`. Rows are sorted by distance.
pub fn dissociation_curve(table: &[MolecularHamiltonian], distances: &[f64], cfg: &VqeConfig) -> Result<CurveResult> {
    let hs = distances
        .iter()
        .map(|&r| find_distance(table, r).cloned())
        .collect::<Result<Vec<_>>>()?;
    let mut rows = hs
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let run_cfg = VqeConfig {
                distance: h.distance,
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let run = run_vqe(h, &run_cfg)?;
            Ok(CurveRow {
                r: h.distance,
                energy: run.final_energy,
                std: run.final_std,
                oracle: run.oracle_e0,
                success: run.success,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.r.total_cmp(&b.r));
    Ok(CurveResult { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub lambda_std: f64,
    #[serde(rename = "E_unmitigated")]
    pub e_unmitigated: f64,
    #[serde(rename = "E_mitigated")]
    pub e_mitigated: f64,
    #[serde(rename = "E_expected_noisy")]
    pub e_expected_noisy: f64,
    pub oracle: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Number of independent tomographies behind each `lambda_std`.
pub const LAMBDA_TOMOGRAPHY_REPEATS: u64 = 10;

/// Depolarizing strength read off a ZZ-setting confusion matrix: the
/// polarization bit flips with probability `lambda / 2`.
pub fn lambda_from_gamma(gamma: &GammaMatrix) -> f64 {
    let e = &gamma.entries.0;
    let flip: f64 = (0..4).map(|k| e[k ^ 1][k]).sum::<f64>() / 4.0;
    2.0 * flip
}

/// Minimum over the angles of the exact noisy energy without mitigation,
/// by multistart Powell at a tight tolerance.
pub fn expected_noisy_minimum(h: &MolecularHamiltonian, channel: &PauliChannel, seed: u64) -> Result<f64> {
    const STARTS: u64 = 8;
    let cfg = VqeConfig {
        noise: Some(NoiseSpec::Pauli { probs: *channel.probs() }),
        mode: Mode::Analytic,
        qem_enabled: false,
        ..Default::default()
    };
    let objective = EnergyObjective::new(h, &cfg, None)?;
    let opt = OptimizerConfig {
        method: Method::Powell,
        ftol: 1e-12,
        max_evals: 5000,
        initial_step: 0.5,
        seed,
    };
    let mut best = f64::INFINITY;
    for start in 0..STARTS {
        let theta0 = random_angles(derive_seed(seed, &[STREAM_EXPECTED, start]));
        best = best.min(optimize(&objective, &theta0, &opt)?.best_value);
    }
    Ok(best)
}

/// Paired runs with and without mitigation at each depolarizing strength.
/// Both runs of a pair share the seed, so they start from the same angles.
pub fn noise_sweep(h: &MolecularHamiltonian, lambdas: &[f64], cfg: &VqeConfig) -> Result<SweepResult> {
    for &lambda in lambdas {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::OutOfRange {
                name: "lambda",
                value: lambda,
                range: "[0, 1]",
            });
        }
        if lambda >= 1.0 && cfg.qem_enabled {
            return Err(Error::OutOfRange {
                name: "lambda",
                value: lambda,
                range: "[0, 1) with error mitigation",
            });
        }
    }
    let zz = setting_for_group(standard_groups()[0].basis_setting)?;
    let mut rows = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let base = VqeConfig {
                distance: h.distance,
                noise: Some(NoiseSpec::Depolarizing { lambda }),
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let unmitigated = run_vqe(
                h,
                &VqeConfig {
                    qem_enabled: false,
                    ..base.clone()
                },
            )?;
            let mitigated = if lambda < 1.0 {
                run_vqe(
                    h,
                    &VqeConfig {
                        qem_enabled: true,
                        ..base.clone()
                    },
                )?
                .final_energy
            } else {
                f64::NAN
            };

            let channel = base.channel()?;
            let shots = match cfg.gamma_source {
                GammaSource::Tomography { shots } => shots,
                _ => TomographyConfig::DEFAULT_SHOTS,
            };
            let estimates = (0..LAMBDA_TOMOGRAPHY_REPEATS)
                .map(|rep| {
                    let tcfg = TomographyConfig::sampled(shots, derive_seed(base.seed, &[STREAM_TOMOGRAPHY, 1, rep]))?;
                    let det = base.detectors()[0];
                    Ok(lambda_from_gamma(&tomography(&channel, &det, &zz, &tcfg)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let lambda_std = (estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt();

            Ok(SweepRow {
                lambda,
                lambda_std,
                e_unmitigated: unmitigated.final_energy,
                e_mitigated: mitigated,
                e_expected_noisy: expected_noisy_minimum(h, &channel, base.seed)?,
                oracle: unmitigated.oracle_e0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(SweepResult { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub optimizer: Method,
    #[serde(rename = "P_S")]
    pub p_s: f64,
    pub mean_evals: f64,
    pub median_evals: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTrial {
    pub optimizer: Method,
    pub trial: u64,
    pub best_energy: f64,
    pub n_evals: usize,
    pub success: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub trials: Vec<BenchTrial>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `trials` runs of each optimizer from common seeded starting points.
/// Nelder-Mead is capped at `NELDER_MEAD_BENCH_CAP` evaluations, the others
/// at `cfg.optimizer.max_evals`.
pub fn optimizer_benchmark(
    h: &MolecularHamiltonian,
    trials: u64,
    methods: &[Method],
    cfg: &VqeConfig,
) -> Result<BenchResult> {
    if trials == 0 {
        return Err(Error::Validation("benchmark needs at least one trial".into()));
    }
    let gammas = if cfg.qem_enabled {
        Some(prepare_gammas(cfg)?)
    } else {
        None
    };
    let objective = EnergyObjective::new(h, cfg, gammas.as_deref())?;
    let e0 = h.ground_energy();

    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| (0..trials).map(move |t| (m, t)))
        .collect();
    let mut trial_rows = jobs
        .par_iter()
        .map(|&(method, trial)| {
            let opt = OptimizerConfig {
                method,
                max_evals: if method == Method::NelderMead {
                    NELDER_MEAD_BENCH_CAP
                } else {
                    cfg.optimizer.max_evals
                },
                ..cfg.optimizer
            };
            let theta0 = random_angles(derive_seed(cfg.seed, &[STREAM_BENCH, trial]));
            let r = optimize(&objective, &theta0, &opt)?;
            Ok(BenchTrial {
                optimizer: method,
                trial,
                best_energy: r.best_value,
                n_evals: r.n_evals,
                success: is_success(&r, e0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    trial_rows.sort_by_key(|t| (t.optimizer, t.trial));

    let rows = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&BenchTrial> = trial_rows.iter().filter(|t| t.optimizer == m).collect();
            let n = mine.len() as f64;
            let mut evals: Vec<f64> = mine.iter().map(|t| t.n_evals as f64).collect();
            BenchRow {
                optimizer: m,
                p_s: mine.iter().filter(|t| t.success).count() as f64 / n,
                mean_evals: evals.iter().sum::<f64>() / n,
                median_evals: median(&mut evals),
            }
        })
        .collect();
    Ok(BenchResult {
        rows,
        trials: trial_rows,
    })
}

pub const CURVE_CSV_HEADER: [&str; 5] = ["R", "energy", "std", "oracle", "success"];
pub const SWEEP_CSV_HEADER: [&str; 6] = [
    "lambda",
    "lambda_std",
    "E_unmitigated",
    "E_mitigated",
    "E_expected_noisy",
    "oracle",
];
pub const BENCH_CSV_HEADER: [&str; 4] = ["optimizer", "P_S", "mean_evals", "median_evals"];
pub const TRIALS_CSV_HEADER: [&str; 5] = ["optimizer", "trial", "best_energy", "n_evals", "success"];
pub const TRACE_CSV_HEADER: [&str; 8] = ["eval", "energy", "H1", "Q1", "H2", "Q2", "H3", "Q3"];

/// Writes `header` and then one record per row. The header is written even
/// when there are no rows.
pub fn write_csv<W: Write, T: Serialize>(writer: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_CSV_HEADER)?;
    for (i, p) in trace.iter().enumerate() {
        let mut rec = vec![i.to_string(), p.value.to_string()];
        rec.extend(p.theta.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
