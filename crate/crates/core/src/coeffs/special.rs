//! BDIA and EDICT written as two-step bidirectional explicit methods.

use serde::Serialize;

use super::Belm2Coeffs;
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

/// Weights under which the generic two-step scaled update reproduces the
/// BDIA update at step `i` (`1 <= i <= N - 1`).
pub fn bdia_as_belm(gamma: f64, schedule: &NoiseSchedule, i: usize) -> Result<Belm2Coeffs> {
    check_gamma(gamma)?;
    if i == 0 || i >= schedule.steps() {
        return Err(BelmError::Config(format!(
            "two-step update needs 1 <= i <= N - 1, got i = {i} with N = {}",
            schedule.steps()
        )));
    }
    let grid = schedule.grid();
    let ratio = gamma * schedule.alpha(i + 1) / schedule.alpha(i - 1);
    Ok(Belm2Coeffs {
        a1: 1.0 - ratio,
        a2: ratio,
        b1: -1.0 - ratio * grid.h(i + 1) / grid.h(i),
    })
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(BelmError::Config(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )))
    }
}

pub(crate) fn check_mix(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(BelmError::Config(format!(
            "mixing weight p must lie in (0, 1), got {p}"
        )))
    }
}

/// The four sub-updates of one coupled step, named by the state they write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdictPhase {
    /// `x_inter` from `x_i` and `eps(y_i)`.
    XInter,
    /// `y_inter` from `y_i` and `eps(x_inter)`.
    YInter,
    /// `x_{i-1}`, mixing `x_inter` and `y_inter`.
    XMix,
    /// `y_{i-1}`, mixing `y_inter` and `x_{i-1}`.
    YMix,
}

impl EdictPhase {
    /// Phase that writes interleaved index `j`.
    pub fn of(j: i64) -> Self {
        match j.rem_euclid(4) {
            2 => Self::XInter,
            1 => Self::YInter,
            0 => Self::XMix,
            _ => Self::YMix,
        }
    }

    /// Outer schedule step `i` whose update writes interleaved index `j`.
    pub fn step_of(j: i64) -> usize {
        let offset = if Self::of(j) == Self::YMix { 2 } else { 1 };
        (j.div_euclid(4) + offset) as usize
    }
}

/// Single sequence `z` that interleaves the coupled states of every step:
/// `z_{4i} = x_i`, `z_{4i-1} = y_i`, `z_{4i-2} = x_inter`, `z_{4i-3} = y_inter`,
/// for indices `-1 ..= 4N`. Some step sizes of this grid are zero, so it is
/// not a [`NoiseSchedule`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdictInterleaved {
    /// `alphas[j + 1]` belongs to `z_j`.
    alphas: Vec<f64>,
    sbar: Vec<f64>,
}

impl EdictInterleaved {
    pub fn new(schedule: &NoiseSchedule) -> Self {
        let n = schedule.steps() as i64;
        let (alphas, sbar) = (-1..=4 * n)
            .map(|j| {
                let q = j.div_euclid(4);
                let at = |i: i64| (schedule.alpha(i as usize), schedule.sbar(i as usize));
                match j.rem_euclid(4) {
                    0 | 1 => at(q),
                    3 => at(q + 1),
                    _ => {
                        let (hi, lo) = (at(q + 1), at(q));
                        ((hi.0 * lo.0).sqrt(), 0.5 * (hi.1 + lo.1))
                    }
                }
            })
            .unzip();
        Self { alphas, sbar }
    }

    /// Largest interleaved index, `4N`.
    pub fn top(&self) -> i64 {
        self.alphas.len() as i64 - 2
    }

    pub fn alpha(&self, j: i64) -> f64 {
        self.alphas[(j + 1) as usize]
    }

    pub fn sbar(&self, j: i64) -> f64 {
        self.sbar[(j + 1) as usize]
    }

    /// `sbar_j - sbar_{j-1}`; zero across the mixing sub-updates.
    pub fn h(&self, j: i64) -> f64 {
        self.sbar(j) - self.sbar(j - 1)
    }
}

/// Weights `(a1, a2, b1)` of the generic two-step scaled update
/// `zbar_j = a2 zbar_{j+2} + a1 zbar_{j+1} + b1 h_{j+1} eps(z_{j+1})`
/// on the interleaved grid, for `-1 <= j <= 4N - 2`.
pub fn edict_phase_coeffs(p: f64, schedule: &NoiseSchedule, j: i64) -> Result<Belm2Coeffs> {
    check_mix(p)?;
    let top = 4 * schedule.steps() as i64;
    if j < -1 || j > top - 2 {
        return Err(BelmError::Config(format!(
            "interleaved index {j} outside -1..={}",
            top - 2
        )));
    }
    let i = EdictPhase::step_of(j);
    let root = (schedule.alpha(i - 1) / schedule.alpha(i)).sqrt();
    Ok(match EdictPhase::of(j) {
        EdictPhase::XInter => Belm2Coeffs {
            a1: 0.0,
            a2: root,
            b1: -2.0 * root,
        },
        EdictPhase::YInter => Belm2Coeffs {
            a1: 0.0,
            a2: 1.0,
            b1: -2.0,
        },
        EdictPhase::XMix => Belm2Coeffs {
            a1: 1.0 - p,
            a2: p / root,
            b1: 0.0,
        },
        EdictPhase::YMix => Belm2Coeffs {
            a1: 1.0 - p,
            a2: p,
            b1: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::belm2_optimal;

    #[test]
    fn bdia_gamma_zero_is_ddim() {
        let s = NoiseSchedule::vp_linear(10, 1e-3, 0.05).unwrap();
        for i in 1..10 {
            assert_eq!(bdia_as_belm(0.0, &s, i).unwrap(), Belm2Coeffs::DDIM);
        }
    }

    #[test]
    fn bdia_gamma_one_equal_steps_is_optimal() {
        let s = NoiseSchedule::unit_alpha(&[0.0, 0.5, 1.0, 1.5]).unwrap();
        for i in 1..3 {
            let c = bdia_as_belm(1.0, &s, i).unwrap();
            assert_eq!(c, belm2_optimal(0.5, 0.5).unwrap());
        }
        assert!(bdia_as_belm(0.5, &s, 3).is_err());
        assert!(bdia_as_belm(1.5, &s, 1).is_err());
    }

    #[test]
    fn phase_classification() {
        assert_eq!(EdictPhase::of(6), EdictPhase::XInter);
        assert_eq!(EdictPhase::of(5), EdictPhase::YInter);
        assert_eq!(EdictPhase::of(4), EdictPhase::XMix);
        assert_eq!(EdictPhase::of(3), EdictPhase::YMix);
        assert_eq!(EdictPhase::of(-1), EdictPhase::YMix);
        // step 2 writes z_6, z_5, z_4, z_3
        for j in 3..=6 {
            assert_eq!(EdictPhase::step_of(j), 2);
        }
        assert_eq!(EdictPhase::step_of(-1), 1);
        assert_eq!(EdictPhase::step_of(2), 1);
    }

    #[test]
    fn phase_weights() {
        let s = NoiseSchedule::vp_linear(6, 0.01, 0.1).unwrap();
        let p = 0.93;
        // z_{4l-3} is a y_inter update
        let c = edict_phase_coeffs(p, &s, 4 * 2 - 3).unwrap();
        assert_eq!((c.a1, c.a2, c.b1), (0.0, 1.0, -2.0));
        // z_{4l} is x_l, mixed from step l + 1
        let l = 2;
        let c = edict_phase_coeffs(p, &s, 4 * l as i64).unwrap();
        assert_eq!(c.a1, 1.0 - p);
        let want = p * s.alpha(l + 1).sqrt() / s.alpha(l).sqrt();
        assert!((c.a2 - want).abs() < 1e-15);
        assert_eq!(c.b1, 0.0);
        for j in -1..=4 * 6 - 2 {
            for p in [0.01, 0.5, 0.99] {
                assert!(edict_phase_coeffs(p, &s, j).unwrap().a2 != 0.0);
            }
        }
        assert!(edict_phase_coeffs(1.0, &s, 0).is_err());
        assert!(edict_phase_coeffs(0.5, &s, 23).is_err());
    }

    #[test]
    fn interleaved_grid_layout() {
        let s = NoiseSchedule::vp_linear(3, 0.05, 0.2).unwrap();
        let z = EdictInterleaved::new(&s);
        assert_eq!(z.top(), 12);
        for i in 1..=3_i64 {
            let iu = i as usize;
            assert_eq!(z.alpha(4 * i), s.alpha(iu));
            assert_eq!(z.alpha(4 * i - 1), s.alpha(iu));
            assert_eq!(z.alpha(4 * i - 3), s.alpha(iu - 1));
            assert!((z.alpha(4 * i - 2) - (s.alpha(iu) * s.alpha(iu - 1)).sqrt()).abs() < 1e-16);
            let mid = 0.5 * (s.sbar(iu) + s.sbar(iu - 1));
            assert!((z.sbar(4 * i - 2) - mid).abs() < 1e-16);
            assert_eq!(z.h(4 * i - 3), 0.0);
            assert_eq!(z.h(4 * i), 0.0);
        }
        assert_eq!(z.alpha(-1), 1.0);
        assert_eq!(z.sbar(0), s.sbar(0));
    }
}
