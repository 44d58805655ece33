//! Waveplate-parameterized ququart preparation.
//!
//! A horizontally polarized photon passes H1 and Q1, then a polarizing beam
//! displacer sends the H component into path `a` and the V component into
//! path `b`. The displaced beam leaves the displacer horizontally polarized,
//! so both paths enter their own waveplate pair (H2, Q2 on `a`; H3, Q3 on
//! `b`) as `|H>` scaled by the routed amplitude.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{Ket2, Ket4, Op2, C64};

/// Six waveplate angles in radians, ordered `(H1, Q1, H2, Q2, H3, Q3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveplateAngles(pub [f64; 6]);

impl WaveplateAngles {
    pub const LEN: usize = 6;

    pub fn zeros() -> Self {
        WaveplateAngles([0.0; 6])
    }

    /// Accepts any slice of length six with finite entries.
    pub fn from_slice(theta: &[f64]) -> Option<Self> {
        let arr: [f64; 6] = theta.try_into().ok()?;
        arr.iter().all(|t| t.is_finite()).then_some(WaveplateAngles(arr))
    }

    /// Angles reduced to the optical period `[0, pi)`.
    pub fn canonical(&self) -> Self {
        WaveplateAngles(self.0.map(|t| t.rem_euclid(PI)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpticalElementKind {
    HalfWaveplate,
    QuarterWaveplate,
    BeamDisplacer,
}

impl OpticalElementKind {
    /// Jones matrix of a rotated waveplate; `None` for the beam displacer,
    /// which changes the mode structure instead of acting on one mode.
    pub fn jones(self, theta: f64) -> Option<Op2> {
        match self {
            OpticalElementKind::HalfWaveplate => Some(hwp(theta)),
            OpticalElementKind::QuarterWaveplate => Some(qwp(theta)),
            OpticalElementKind::BeamDisplacer => None,
        }
    }
}

/// Half-wave plate with fast axis at `theta` from horizontal.
pub fn hwp(theta: f64) -> Op2 {
    let (s, c) = (2.0 * theta).sin_cos();
    Op2([
        [C64::new(c, 0.0), C64::new(s, 0.0)],
        [C64::new(s, 0.0), C64::new(-c, 0.0)],
    ])
}

/// Quarter-wave plate with fast axis at `theta` from horizontal.
pub fn qwp(theta: f64) -> Op2 {
    let (s, c) = theta.sin_cos();
    let off = C64::new(1.0, -1.0) * (s * c);
    Op2([
        [C64::new(c * c, s * s), off],
        [off, C64::new(s * s, c * c)],
    ])
    .scale(C64::from_polar(1.0, -FRAC_PI_4))
}

fn waveplate_pair(half: f64, quarter: f64) -> Op2 {
    qwp(quarter) * hwp(half)
}

pub fn prepare_ququart(angles: &WaveplateAngles) -> Ket4 {
    let [h1, q1, h2, q2, h3, q3] = angles.0;
    let split = waveplate_pair(h1, q1).apply(&Ket2::H);
    let a = waveplate_pair(h2, q2).apply(&Ket2::H);
    let b = waveplate_pair(h3, q3).apply(&Ket2::H);
    Ket4([
        split.0[0] * a.0[0],
        split.0[0] * a.0[1],
        split.0[1] * b.0[0],
        split.0[1] * b.0[1],
    ])
}

/// Six i.i.d. angles uniform on `[0, pi)`.
pub fn random_angles(seed: u64) -> WaveplateAngles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WaveplateAngles(std::array::from_fn(|_| rng.gen_range(0.0..PI)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8};

    use super::*;

    const ONE: C64 = C64::new(1.0, 0.0);
    const ZERO: C64 = C64::new(0.0, 0.0);

    fn assert_op_close(a: &Op2, b: &Op2, tol: f64) {
        assert!(a.max_abs_diff(b) < tol, "{a:?} != {b:?}");
    }

    #[test]
    fn hwp_examples() {
        assert_op_close(&hwp(0.0), &Op2([[ONE, ZERO], [ZERO, -ONE]]), 1e-15);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        assert_op_close(&hwp(FRAC_PI_8), &Op2([[h, h], [h, -h]]), 1e-15);
        assert_op_close(&hwp(FRAC_PI_4), &Op2([[ZERO, ONE], [ONE, ZERO]]), 1e-15);
    }

    #[test]
    fn qwp_examples() {
        let phase = C64::from_polar(1.0, -FRAC_PI_4);
        let want = Op2([[phase, ZERO], [ZERO, phase * C64::new(0.0, 1.0)]]);
        assert_op_close(&qwp(0.0), &want, 1e-15);

        let circ = qwp(FRAC_PI_4).apply(&Ket2::H);
        assert!((circ.0[0].norm_sqr() - 0.5).abs() < 1e-15);
        assert!((circ.0[1].norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_quarter_plates_make_a_half_plate() {
        let theta = 0.3;
        let qq = qwp(theta) * qwp(theta);
        let h = hwp(theta);
        // compare up to global phase using a nonzero reference entry
        let phase = h.0[0][0] / qq.0[0][0];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert_op_close(&qq.scale(phase), &h, 1e-12);
    }

    #[test]
    fn waveplates_are_unitary() {
        for k in 0..200 {
            let theta = -7.0 + 0.07 * k as f64;
            assert!(hwp(theta).is_unitary(1e-12));
            assert!(qwp(theta).is_unitary(1e-12));
        }
        assert!(OpticalElementKind::BeamDisplacer.jones(0.1).is_none());
        assert_eq!(
            OpticalElementKind::HalfWaveplate.jones(0.2),
            Some(hwp(0.2))
        );
    }

    #[test]
    fn zero_angles_prepare_a_h() {
        let psi = prepare_ququart(&WaveplateAngles::zeros());
        assert!(psi.overlap(&Ket4::basis(0)) > 1.0 - 1e-12);
    }

    #[test]
    fn h1_at_pi_over_8_splits_evenly_between_paths() {
        let mut theta = [0.0; 6];
        theta[0] = FRAC_PI_8;
        let psi = prepare_ququart(&WaveplateAngles(theta));
        let mags: Vec<f64> = psi.0.iter().map(|a| a.norm_sqr()).collect();
        for (got, want) in mags.iter().zip([0.5, 0.0, 0.5, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // Q1 at 0 leaves a relative phase of i on path b.
        let rel = psi.0[2] / psi.0[0];
        assert!((rel - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn three_half_plates_give_uniform_magnitudes() {
        let theta = [FRAC_PI_8, 0.0, FRAC_PI_8, 0.0, FRAC_PI_8, 0.0];
        let psi = prepare_ququart(&WaveplateAngles(theta));
        // pipeline oracle: (1, i, i, -1) / 2 up to global phase
        let i = C64::new(0.0, 1.0);
        let want = Ket4([ONE * 0.5, i * 0.5, i * 0.5, -ONE * 0.5]);
        assert!(psi.overlap(&want) > 1.0 - 1e-12);
        for a in psi.0 {
            assert!((a.norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn random_angles_are_seeded() {
        assert_eq!(random_angles(11), random_angles(11));
        assert_ne!(random_angles(11), random_angles(12));
        let a = random_angles(5);
        assert!(a.0.iter().all(|&t| (0.0..PI).contains(&t)));
    }

    #[test]
    fn canonical_wraps_into_period() {
        let a = WaveplateAngles([-0.1, PI, 2.0 * PI + 0.5, 0.0, 1.0, -PI]).canonical();
        assert!(a.0.iter().all(|&t| (0.0..PI).contains(&t)));
        assert!((a.0[0] - (PI - 0.1)).abs() < 1e-12);
        assert!((a.0[2] - 0.5).abs() < 1e-12);
    }
}
