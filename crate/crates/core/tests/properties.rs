use proptest::prelude::*;
use proptest::sample::select;

use qqvqe::ansatz::{prepare_ququart, WaveplateAngles};
use qqvqe::driver::{five_minimum, run_vqe, EnergyObjective, Mode, NoiseSpec, VqeConfig};
use qqvqe::hamiltonian::{builtin_table, standard_groups};
use qqvqe::linalg::{eig_hermitian, DensityMatrix4, Ket4, C64};
use qqvqe::optim::{minimize, Method, ObjectiveFn, OptimizerConfig};
use qqvqe::qem::{analytic_gamma, mitigate, project_simplex, tomography, transition_matrix, TomographyConfig};
use qqvqe::qpu::{
    apply_channel, estimate_paulis, hoeffding_bound, ideal_probs, pauli_expectations, sample_outcomes,
    setting_for_group, MeasurementSetting, PauliChannel, ProbVector, StochasticMatrix,
};

fn angles() -> impl Strategy<Value = WaveplateAngles> {
    prop::array::uniform6(-10.0..10.0f64).prop_map(WaveplateAngles)
}

fn ket() -> impl Strategy<Value = Ket4> {
    prop::array::uniform8(-1.0..1.0f64)
        .prop_filter("nonzero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|a| Ket4(std::array::from_fn(|i| C64::new(a[2 * i], a[2 * i + 1]))).normalized())
}

/// Mixture of two random pure states.
fn state() -> impl Strategy<Value = DensityMatrix4> {
    (ket(), ket(), 0.0..1.0f64).prop_map(|(a, b, w)| {
        let op = a.projector().scale(w) + b.projector().scale(1.0 - w);
        DensityMatrix4::new(op).expect("mixture of pure states is a state")
    })
}

/// Random Pauli channel, weighted towards the identity so that most draws
/// are comfortably invertible.
fn channel() -> impl Strategy<Value = PauliChannel> {
    (prop::array::uniform16(0.0..1.0f64), 0.0..16.0f64).prop_map(|(w, id)| {
        let total: f64 = w.iter().sum::<f64>() + id;
        let mut probs: [[f64; 4]; 4] = std::array::from_fn(|j| std::array::from_fn(|k| w[4 * j + k] / total));
        probs[0][0] += id / total;
        let s: f64 = probs.iter().flatten().sum();
        probs[0][0] += 1.0 - s;
        PauliChannel::new(probs).expect("normalized weights")
    })
}

/// Left-stochastic detector response close to the identity.
fn detector() -> impl Strategy<Value = StochasticMatrix> {
    (prop::array::uniform16(0.0..1.0f64), 0.0..0.3f64).prop_map(|(w, eps)| {
        let mut e = [[0.0; 4]; 4];
        for k in 0..4 {
            let col: f64 = (0..4).map(|l| w[4 * l + k]).sum();
            for l in 0..4 {
                e[l][k] = eps * w[4 * l + k] / col + if l == k { 1.0 - eps } else { 0.0 };
            }
        }
        StochasticMatrix(e)
    })
}

fn setting() -> impl Strategy<Value = MeasurementSetting> {
    select(standard_groups()).prop_map(|g| setting_for_group(g.basis_setting).unwrap())
}

fn prob_vector() -> impl Strategy<Value = ProbVector> {
    prop::array::uniform4(0.0..1.0f64)
        .prop_filter("nonzero", |a| a.iter().sum::<f64>() > 1e-3)
        .prop_map(|a| {
            let s: f64 = a.iter().sum();
            ProbVector(a.map(|x| x / s))
        })
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn prepared_state_is_normalized(theta in angles()) {
        prop_assert!((prepare_ququart(&theta).norm() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn channel_preserves_trace_hermiticity_and_positivity(rho in state(), ch in channel()) {
        let out = apply_channel(&rho, &ch);
        prop_assert!((out.op().trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(out.op().hermiticity_defect() < 1e-12);
        let eig = eig_hermitian(out.op()).unwrap();
        prop_assert!(eig.values[0] > -1e-12, "min eigenvalue {}", eig.values[0]);
    }

    #[test]
    fn transition_matrix_is_doubly_stochastic(ch in channel(), s in setting()) {
        prop_assert!(transition_matrix(&ch, &s).is_doubly_stochastic(1e-10));
    }

    #[test]
    fn gamma_is_left_stochastic(ch in channel(), det in detector(), s in setting(), seed in any::<u64>()) {
        let exact = analytic_gamma(&ch, &det, &s).unwrap();
        prop_assert!(exact.is_left_stochastic());
        let sampled = tomography(&ch, &det, &s, &TomographyConfig::sampled(500, seed).unwrap());
        prop_assert!(sampled.is_left_stochastic());
        prop_assert!(sampled.entries.0.iter().flatten().all(|&x| x >= 0.0));
    }

    #[test]
    fn simplex_projection_is_optimal(v in prop::array::uniform4(-3.0..3.0f64), others in prop::collection::vec(prob_vector(), 32)) {
        let p = project_simplex(v).0;
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // KKT: p = max(v - tau, 0) for one threshold tau
        let support: Vec<usize> = (0..4).filter(|&i| p[i] > 0.0).collect();
        prop_assert!(!support.is_empty());
        let tau = v[support[0]] - p[support[0]];
        for i in 0..4 {
            if p[i] > 0.0 {
                prop_assert!((v[i] - p[i] - tau).abs() < 1e-12);
            } else {
                prop_assert!(v[i] <= tau + 1e-12);
            }
        }
        let d = dist2(&v, &p);
        for q in &others {
            prop_assert!(d <= dist2(&v, &q.0) + 1e-12);
        }
    }

    #[test]
    fn mitigation_recovers_ideal_probabilities(rho in state(), ch in channel(), det in detector(), s in setting()) {
        let gamma = analytic_gamma(&ch, &det, &s).unwrap();
        prop_assume!(gamma.determinant().abs() > 1e-6);
        let ideal = ideal_probs(&rho, &s);
        let observed = det.apply(&ideal_probs(&apply_channel(&rho, &ch), &s));
        let recovered = mitigate(&gamma, &observed).unwrap();
        for (a, b) in recovered.0.iter().zip(ideal.0.iter()) {
            prop_assert!((a - b).abs() < 1e-8, "{:?} vs {:?}", recovered, ideal);
        }
    }

    #[test]
    fn hoeffding_bound_is_monotone_probability(m in 1u64..100_000, dm in 1u64..1000, t in 0.0..2.0f64, dt in 0.0..1.0f64) {
        let b = hoeffding_bound(m, t);
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(hoeffding_bound(m + dm, t) <= b);
        prop_assert!(hoeffding_bound(m, t + dt) <= b);
    }

    #[test]
    fn five_minimum_uses_the_five_smallest(values in prop::collection::vec(-100.0..100.0f64, 1..60)) {
        let (mean, std) = five_minimum(&values);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let lowest = &sorted[..sorted.len().min(5)];
        let n = lowest.len() as f64;
        let m = lowest.iter().sum::<f64>() / n;
        let sd = (lowest.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        prop_assert!((mean - m).abs() < 1e-9);
        prop_assert!((std - sd).abs() < 1e-9);
        prop_assert!(mean >= sorted[0] - 1e-9 && mean <= lowest[lowest.len() - 1] + 1e-9);
    }

    #[test]
    fn noisy_energy_respects_variational_bound(theta in angles(), ch in channel(), row in 0usize..10) {
        let h = &builtin_table()[row];
        let cfg = VqeConfig {
            distance: h.distance,
            noise: Some(NoiseSpec::Pauli { probs: *ch.probs() }),
            mode: Mode::Analytic,
            ..Default::default()
        };
        let e = EnergyObjective::new(h, &cfg, None).unwrap().energy(&theta, 0);
        prop_assert!(e >= h.ground_energy() - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pauli_estimates_are_unbiased(p in prob_vector(), s in setting(), seed in any::<u64>()) {
        const DRAWS: u64 = 64;
        const SHOTS: u64 = 500;
        let exact = pauli_expectations(&p, &s);
        let mut mean = exact.clone();
        mean.values_mut().for_each(|v| *v = 0.0);
        for d in 0..DRAWS {
            for (k, v) in estimate_paulis(&sample_outcomes(&p, SHOTS, seed.wrapping_add(d)), &s) {
                *mean.get_mut(&k).unwrap() += v / DRAWS as f64;
            }
        }
        // each estimate lies in [-1, 1]; five standard errors of the pooled mean
        let tol = 5.0 / ((DRAWS * SHOTS) as f64).sqrt();
        for (k, v) in &exact {
            prop_assert!((mean[k] - v).abs() < tol, "{k}: {} vs {v}", mean[k]);
        }
    }

    #[test]
    fn optimizer_trace_invariants(
        method in select(Method::ALL.to_vec()),
        center in prop::array::uniform6(-2.0..2.0f64),
        x0 in prop::array::uniform6(-2.0..2.0f64),
        max_evals in 1usize..200,
    ) {
        let f = |x: &[f64]| -> f64 {
            x.iter().zip(&center).enumerate().map(|(i, (a, c))| (i as f64 + 1.0) * (a - c).powi(2)).sum::<f64>()
                + (x[0] * x[1]).sin()
        };
        let cfg = OptimizerConfig { method, max_evals, ..Default::default() };
        let mut obj = ObjectiveFn::new(f);
        let r = minimize(&mut obj, &x0, &cfg).unwrap();
        prop_assert_eq!(r.n_evals, r.trace.len());
        prop_assert_eq!(r.n_evals, obj.evals());
        prop_assert!(r.n_evals <= max_evals);
        let running = r.running_min();
        prop_assert!(running.windows(2).all(|w| w[1] <= w[0]));
        let min = r.trace.iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.best_value, min);
        prop_assert_eq!(*running.last().unwrap(), min);

        let again = minimize(&mut ObjectiveFn::new(f), &x0, &cfg).unwrap();
        prop_assert_eq!(r, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn converged_final_energy_is_near_the_trace_minimum(seed in any::<u64>(), row in 0usize..10) {
        let h = &builtin_table()[row];
        let cfg = VqeConfig { distance: h.distance, mode: Mode::Analytic, seed, ..Default::default() };
        let run = run_vqe(h, &cfg).unwrap();
        prop_assume!(run.converged);
        let min = run.trace.iter().map(|t| t.value).fold(f64::INFINITY, f64::min);
        prop_assert!(run.final_energy >= min);
        prop_assert!(run.final_energy <= min + cfg.optimizer.ftol, "{} vs min {}", run.final_energy, min);
    }
}
