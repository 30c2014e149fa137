use proptest::prelude::*;

use super::*;
use crate::coeffs::{bdia_as_belm, edict_phase_coeffs, BelmKCoeffs, EdictInterleaved};
use crate::predictor::{
    AnalyticProblem, ConstantPredictor, GaussianProblem, PolynomialProblem, SyntheticPredictor,
};
use crate::rng;

const EPS: f64 = f64::EPSILON;

fn unit(sbar: &[f64]) -> NoiseSchedule {
    NoiseSchedule::unit_alpha(sbar).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
        / scale
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

#[test]
fn ddim_examples() {
    let s = unit(&[0.5, 1.0]);
    assert_eq!(
        ddim_step(&ConstantPredictor::zero(1), &s, &[2.0], 1),
        vec![2.0]
    );
    assert_eq!(
        ddim_step(&ConstantPredictor::uniform(1.0, 1), &s, &[2.0], 1),
        vec![1.5]
    );
    let s = NoiseSchedule::from_tables(vec![0.9, 0.8], vec![0.19_f64.sqrt(), 0.6]).unwrap();
    let out = ddim_step(&ConstantPredictor::uniform(0.5, 1), &s, &[1.0], 1)[0];
    // hand substitution: 1.125 + (sqrt(0.19) - 0.675) / 2
    assert!((out - 1.00544).abs() < 1e-5);
    assert!((out - (1.125 + (0.19_f64.sqrt() - 0.675) / 2.0)).abs() < 1e-15);
}

#[test]
fn ddim_inversion_mismatch() {
    let s = unit(&[0.5, 1.0]);
    assert_eq!(
        ddim_invert_step(&ConstantPredictor::zero(2), &s, &[2.0, -3.0], 1),
        vec![2.0, -3.0]
    );

    let s = NoiseSchedule::vp_linear(10, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(3, 4, &s);
    let x = [0.4, -1.1, 0.9, 2.0];
    let back = ddim_step(&p, &s, &ddim_invert_step(&p, &s, &x, 5), 5);
    assert!(max_abs_diff(&back, &x) > 1e-6);

    let c = ConstantPredictor {
        value: vec![0.3, -0.7, 1.9, 0.0],
    };
    let back = ddim_step(&c, &s, &ddim_invert_step(&c, &s, &x, 5), 5);
    assert!(max_abs_diff(&back, &x) < 1e-13);
}

#[test]
fn edict_examples() {
    let s = unit(&[0.5, 1.0]);
    let zero = ConstantPredictor::zero(1);
    let (x, y) = edict_step(&zero, &s, 0.93, &[1.5], &[1.5], 1).unwrap();
    assert_eq!((x, y), (vec![1.5], vec![1.5]));
    let (x, y) = edict_step(&zero, &s, 0.5, &[2.0], &[0.0], 1).unwrap();
    assert_eq!((x.clone(), y.clone()), (vec![1.0], vec![0.5]));
    let (x0, y0) = edict_invert_step(&zero, &s, 0.5, &x, &y, 1).unwrap();
    assert!((x0[0] - 2.0).abs() < 1e-13 && y0[0].abs() < 1e-13);
    assert!(edict_step(&zero, &s, 1.0, &[0.0], &[0.0], 1).is_err());
}

#[test]
fn bdia_examples() {
    let s = NoiseSchedule::vp_linear(12, 1e-3, 0.05).unwrap();
    let p = SyntheticPredictor::new(5, 3, &s);
    let x_ip1 = [0.3, -0.8, 1.2];
    let x_i = [0.1, 0.5, -0.4];
    for i in 1..12 {
        let a = bdia_step(&p, &s, 0.0, &x_ip1, &x_i, i).unwrap();
        let b = ddim_step(&p, &s, &x_i, i);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    let fwd = bdia_step(&p, &s, 0.5, &x_ip1, &x_i, 6).unwrap();
    let back = bdia_invert_step(&p, &s, 0.5, &fwd, &x_i, 6).unwrap();
    assert!(max_rel(&back, &x_ip1) < 1e-12);
    assert!(matches!(
        bdia_invert_step(&p, &s, 0.0, &fwd, &x_i, 6),
        Err(BelmError::NotInvertible(_))
    ));

    // gamma = 1, unit alpha: x_{i+1} = x_{i-1} + (sigma_{i+1} - sigma_{i-1}) eps(x_i)
    let s = unit(&[0.0, 0.4, 1.0, 1.5]);
    let p = SyntheticPredictor::new(5, 3, &s);
    let out = bdia_invert_step(&p, &s, 1.0, &x_ip1, &x_i, 2).unwrap();
    let eps = p.eval(&x_i, 2);
    for k in 0..3 {
        assert!((out[k] - (x_ip1[k] + 1.1 * eps[k])).abs() < 1e-14);
    }
}

#[test]
fn bdia_gamma_one_equals_obelm2_on_equal_unit_steps() {
    let s = unit(&[0.0, 0.25, 0.5, 0.75, 1.0]);
    let p = SyntheticPredictor::new(9, 2, &s);
    for i in 1..4 {
        let a = bdia_step(&p, &s, 1.0, &[0.7, -0.2], &[0.1, 0.3], i).unwrap();
        let b = obelm2_step(&p, &s, &[0.7, -0.2], &[0.1, 0.3], i).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-13);
    }
}

#[test]
fn bdia_matches_generic_two_step_with_mapped_weights() {
    let s = NoiseSchedule::vp_linear(15, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(2, 4, &s);
    let mut r = rng::stream(11, 0);
    for gamma in [0.0, 0.3, 0.5, 1.0] {
        for i in 1..15 {
            let x_ip1 = rng::normal_vec(&mut r, 4);
            let x_i = rng::normal_vec(&mut r, 4);
            let direct = bdia_step(&p, &s, gamma, &x_ip1, &x_i, i).unwrap();
            let c = bdia_as_belm(gamma, &s, i).unwrap().into_k();
            let xb_i: Vec<f64> = x_i.iter().map(|v| v / s.alpha(i)).collect();
            let xb_ip1: Vec<f64> = x_ip1.iter().map(|v| v / s.alpha(i + 1)).collect();
            let h = s.sbar(i) - s.sbar(i - 1);
            let slope: Vec<f64> = p.eval(&x_i, i).iter().map(|e| h * e).collect();
            let generic: Vec<f64> = belm_step_xbar(&c, &[&xb_i, &xb_ip1], &[&slope])
                .iter()
                .map(|v| v * s.alpha(i - 1))
                .collect();
            assert!(
                max_abs_diff(&direct, &generic) < 1e-13,
                "gamma {gamma}, i {i}"
            );
        }
    }
}

#[test]
fn edict_matches_generic_interleaved_updates() {
    let s = NoiseSchedule::vp_linear(8, 1e-3, 0.08).unwrap();
    let p = SyntheticPredictor::new(4, 3, &s);
    let z_grid = EdictInterleaved::new(&s);
    let mut r = rng::stream(12, 0);
    let mix = 0.93;
    for i in 1..=8_usize {
        let x = rng::normal_vec(&mut r, 3);
        let y = rng::normal_vec(&mut r, 3);
        let (x_direct, y_direct) = edict_step(&p, &s, mix, &x, &y, i).unwrap();
        // z_{4i} = x_i, z_{4i-1} = y_i, then four updates write z_{4i-2} .. z_{4i-5}
        let top = 4 * i as i64;
        let mut z = std::collections::HashMap::new();
        z.insert(top, x.clone());
        z.insert(top - 1, y.clone());
        for j in (top - 5..=top - 2).rev() {
            let c = edict_phase_coeffs(mix, &s, j).unwrap().into_k();
            let bar = |m: i64| -> Vec<f64> { z[&m].iter().map(|v| v / z_grid.alpha(m)).collect() };
            let h = z_grid.h(j + 1);
            let slope: Vec<f64> = p.eval(&z[&(j + 1)], i).iter().map(|e| h * e).collect();
            let out: Vec<f64> = belm_step_xbar(&c, &[&bar(j + 1), &bar(j + 2)], &[&slope])
                .iter()
                .map(|v| v * z_grid.alpha(j))
                .collect();
            z.insert(j, out);
        }
        assert!(
            max_abs_diff(&z[&(top - 4)], &x_direct) < 1e-13,
            "x at step {i}"
        );
        assert!(
            max_abs_diff(&z[&(top - 5)], &y_direct) < 1e-13,
            "y at step {i}"
        );
    }
}

#[test]
fn obelm2_examples() {
    let s = unit(&[0.0, 1.0, 2.0]);
    let zero = ConstantPredictor::zero(1);
    let one = ConstantPredictor::uniform(1.0, 1);
    assert_eq!(
        obelm2_step(&zero, &s, &[0.0], &[1.0], 1).unwrap(),
        vec![0.0]
    );
    assert_eq!(
        obelm2_step(&one, &s, &[0.0], &[1.0], 1).unwrap(),
        vec![-2.0]
    );
    assert_eq!(
        obelm2_invert_step(&zero, &s, &[0.0], &[5.0], 1).unwrap(),
        vec![0.0]
    );

    // xbar(sbar) = sbar^2 on the grid (1, 2, 3)
    let s = unit(&[1.0, 2.0, 3.0]);
    let quad = PolynomialProblem::new(vec![0.0, 0.0, 1.0], 1, s.clone()).unwrap();
    assert_eq!(quad.eval(&[4.0], 1), vec![4.0]);
    let out = obelm2_step(&quad, &s, &[9.0], &[4.0], 1).unwrap();
    assert!((out[0] - 1.0).abs() < 1e-14);
    let back = obelm2_invert_step(&quad, &s, &[1.0], &[4.0], 1).unwrap();
    assert!((back[0] - 9.0).abs() < 1e-14);
}

#[test]
fn obelm2_matches_direct_x_space_formulas() {
    let s = NoiseSchedule::vp_linear(20, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(8, 4, &s);
    let mut r = rng::stream(13, 0);
    for i in 1..20 {
        let (h_i, h_ip1) = (s.sbar(i) - s.sbar(i - 1), s.sbar(i + 1) - s.sbar(i));
        let (a_m, a_0, a_p) = (s.alpha(i - 1), s.alpha(i), s.alpha(i + 1));
        let x_ip1 = rng::normal_vec(&mut r, 4);
        let x_i = rng::normal_vec(&mut r, 4);
        let eps = p.eval(&x_i, i);
        let q = h_i * h_i / (h_ip1 * h_ip1);
        let direct: Vec<f64> = (0..4)
            .map(|k| {
                q * (a_m / a_p) * x_ip1[k] + (1.0 - q) * (a_m / a_0) * x_i[k]
                    - h_i * (h_i + h_ip1) / h_ip1 * a_m * eps[k]
            })
            .collect();
        let via = obelm2_step(&p, &s, &x_ip1, &x_i, i).unwrap();
        assert!(max_abs_diff(&direct, &via) < 1e-13);

        let x_im1 = via;
        let inv = 1.0 / q;
        let direct_inv: Vec<f64> = (0..4)
            .map(|k| {
                inv * (a_p / a_m) * x_im1[k]
                    + (1.0 - inv) * (a_p / a_0) * x_i[k]
                    + h_ip1 * (h_i + h_ip1) / h_i * a_p * eps[k]
            })
            .collect();
        let via_inv = obelm2_invert_step(&p, &s, &x_im1, &x_i, i).unwrap();
        assert!(
            max_abs_diff(&direct_inv, &via_inv)
                < 1e-13 * direct_inv.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
        );
    }
}

#[test]
fn sample_examples() {
    let s = NoiseSchedule::vp_linear(2, 0.01, 0.02)
        .unwrap()
        .subsample(1)
        .unwrap();
    let p = SyntheticPredictor::new(1, 2, &s);
    let t = sample(Method::Obelm2, &p, &s, &[0.5, -0.5]).unwrap();
    assert_eq!(t.states[0], ddim_step(&p, &s, &[0.5, -0.5], 1));

    let s = unit(&[0.0, 0.3, 0.7, 1.2, 2.0]);
    let zero = ConstantPredictor::zero(2);
    for m in [
        Method::Ddim,
        Method::Obelm2,
        Method::Bdia { gamma: 0.5 },
        Method::Edict { p: 0.93 },
    ] {
        let t = sample(m, &zero, &s, &[1.0, -2.0]).unwrap();
        assert!(t.states.iter().all(|x| x == &vec![1.0, -2.0]), "{m}");
    }
    // three-step weights are large on this uneven grid, so constancy holds to rounding
    let t = sample(Method::Obelm3, &zero, &s, &[1.0, -2.0]).unwrap();
    assert!(t
        .states
        .iter()
        .all(|x| max_abs_diff(x, &[1.0, -2.0]) < 1e-12));
    assert!(matches!(
        sample(Method::Ddim, &zero, &s, &[1.0]),
        Err(BelmError::Config(_))
    ));
}

#[test]
fn sample_tracks_gaussian_flow() {
    let s = NoiseSchedule::vp_linear_strided(1000, 50, 1e-4, 0.02).unwrap();
    let g = GaussianProblem::new(1.0, 3, s.clone()).unwrap();
    let x_n = [0.8, -1.3, 0.2];
    let exact = g.flow(&x_n, 50, 0);
    // envelopes measured on this grid with a 3x margin
    let cases = [
        (Method::Ddim, 1e-1),
        (Method::Obelm2, 1e-2),
        (Method::Bdia { gamma: 0.5 }, 5e-2),
        (Method::Edict { p: 0.93 }, 1e-1),
    ];
    for (m, envelope) in cases {
        let t = sample(m, &g, &s, &x_n).unwrap();
        let err = max_rel(t.data_end(), &exact);
        assert!(err < envelope, "{m}: {err:e}");
    }
}

#[test]
fn obelm3_is_accurate_on_short_runs_and_diverges_on_long_ones() {
    let s = NoiseSchedule::vp_linear(5, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 4, &s);
    let x_n = [0.3, -1.2, 0.7, 1.9];
    let t = sample(Method::Obelm3, &p, &s, &x_n).unwrap();
    let back = invert(Method::Obelm3, &p, &s, &InversionSeed::from_trajectory(&t)).unwrap();
    assert!(max_rel(back.noise_end(), &x_n) < 1e-10);

    // the equal-step root near -9.9 amplifies rounding and bootstrap error
    let s = NoiseSchedule::vp_linear(50, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 4, &s);
    let t = sample(Method::Obelm3, &p, &s, &x_n).unwrap();
    assert!(t.data_end().iter().any(|v| v.abs() > 1e10));
    let s = NoiseSchedule::vp_linear(400, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 4, &s);
    assert!(matches!(
        sample(Method::Obelm3, &p, &s, &x_n),
        Err(BelmError::NumericalFailure(_))
    ));
    let s = NoiseSchedule::vp_linear(10_001, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 4, &s);
    assert!(matches!(
        sample(Method::Obelm3, &p, &s, &x_n),
        Err(BelmError::Config(_))
    ));
}

#[test]
fn quadratic_problems_are_integrated_exactly() {
    let s = NoiseSchedule::geometric(200, 0.01, 5.0).unwrap();
    let quad = PolynomialProblem::new(vec![0.5, -1.0, 0.75], 2, s.clone()).unwrap();
    let x_n = vec![1.0, 2.0];
    // starting values on the exact solution; a DDIM bootstrap would add an O(h^2) offset
    let starts = vec![x_n.clone(), quad.flow(&x_n, 200, 199)];
    let t = sample_from_starts(Method::Obelm2, &quad, &s, starts).unwrap();
    for i in 0..=200 {
        let exact = quad.flow(&x_n, 200, i);
        assert!(max_abs_diff(&t.states[i], &exact) < 1e-12, "index {i}");
    }
}

#[test]
fn roundtrips_of_exact_methods() {
    let s = NoiseSchedule::vp_linear(20, 1e-4, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 4, &s);
    let x_n = [0.3, -1.2, 0.7, 1.9];
    for m in [
        Method::Obelm2,
        Method::Bdia { gamma: 0.5 },
        Method::Edict { p: 0.93 },
    ] {
        let t = sample(m, &p, &s, &x_n).unwrap();
        let back = invert(m, &p, &s, &InversionSeed::from_trajectory(&t)).unwrap();
        assert!(!back.approximate);
        assert!(max_rel(back.noise_end(), &x_n) < 1e-10, "{m}");
    }
    assert!(matches!(
        invert(
            Method::Bdia { gamma: 0.0 },
            &p,
            &s,
            &InversionSeed::new(x_n.to_vec())
        ),
        Err(BelmError::NotInvertible(_))
    ));
}

#[test]
fn ddim_roundtrip_is_visibly_inexact() {
    let s = NoiseSchedule::vp_linear(10, 1e-4, 0.02).unwrap();
    let g = GaussianProblem::new(1.0, 4, s.clone()).unwrap();
    let x_n = [0.3, -1.2, 0.7, 1.9];
    let t = sample(Method::Ddim, &g, &s, &x_n).unwrap();
    let back = invert(Method::Ddim, &g, &s, &InversionSeed::from_trajectory(&t)).unwrap();
    let ddim_err = max_rel(back.noise_end(), &x_n);
    assert!(ddim_err > 1e-4, "{ddim_err:e}");

    let t = sample(Method::Obelm2, &g, &s, &x_n).unwrap();
    let back = invert(
        Method::Obelm2,
        &g,
        &s,
        &InversionSeed::new(t.states[0].clone()),
    )
    .unwrap();
    assert!(back.approximate);
    let approx_err = max_rel(back.noise_end(), &x_n);
    assert!(approx_err < ddim_err, "{approx_err:e} vs {ddim_err:e}");
}

#[test]
fn trajectory_csv_and_seed_roundtrip() {
    let s = NoiseSchedule::vp_linear(5, 1e-3, 0.02).unwrap();
    let p = SyntheticPredictor::new(1, 2, &s);
    let t = sample(Method::Edict { p: 0.9 }, &p, &s, &[0.1, 0.2]).unwrap();
    let csv = t.to_csv();
    assert!(csv.starts_with("step_index,sbar,x_0,x_1,y_0,y_1\n"));
    assert_eq!(csv.lines().count(), 7);
    let seed = InversionSeed::from_csv(&csv).unwrap();
    assert_eq!(seed.x0, t.states[0]);
    assert_eq!(seed.y0.as_ref(), Some(&t.aux.as_ref().unwrap()[0]));
    assert_eq!(seed.x1.as_ref(), Some(&t.states[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_step_reversal_is_exact_to_rounding(
        a in prop::collection::vec(-3.0..3.0_f64, 2..=4),
        b_seed in any::<u64>(),
        top in prop_oneof![-3.0..-0.1_f64, 0.1..3.0_f64],
    ) {
        let k = a.len() + 1;
        let mut coeffs = BelmKCoeffs { a: a.clone(), b: Vec::new() };
        coeffs.a.truncate(k - 1);
        coeffs.a.push(top);
        let mut r = rng::stream(b_seed, 0);
        coeffs.b = rng::normal_vec(&mut r, k - 1);
        let states: Vec<Vec<f64>> = (0..k).map(|_| rng::normal_vec(&mut r, 3)).collect();
        let slopes: Vec<Vec<f64>> = (0..k - 1).map(|_| rng::normal_vec(&mut r, 3)).collect();
        let st: Vec<&[f64]> = states.iter().map(|v| v.as_slice()).collect();
        let sl: Vec<&[f64]> = slopes.iter().map(|v| v.as_slice()).collect();
        let lower = belm_step_xbar(&coeffs, &st, &sl);
        let back = belm_reverse_xbar(&coeffs, &lower, &st[..k - 1], &sl);
        for m in 0..3 {
            // operand scale of the reversed formula, divided by |a_k|
            let mut scale = lower[m].abs();
            for j in 0..k - 1 {
                scale += (coeffs.a[j] * states[j][m]).abs() + (coeffs.b[j] * slopes[j][m]).abs();
            }
            scale += (top * states[k - 1][m]).abs();
            scale /= top.abs();
            prop_assert!((back[m] - states[k - 1][m]).abs() <= 4.0 * EPS * scale,
                "component {m}: {} vs {}", back[m], states[k - 1][m]);
        }
    }

    #[test]
    fn invert_sample_and_sample_invert_are_identities(
        seed in 0u64..1000,
        n in 2usize..30,
        which in 0usize..3,
    ) {
        let m = [Method::Obelm2, Method::Bdia { gamma: 0.7 }, Method::Edict { p: 0.9 }][which];
        let s = NoiseSchedule::vp_linear(n.max(3), 1e-4, 0.02).unwrap();
        let p = SyntheticPredictor::new(seed, 3, &s);
        let x_n = rng::normal_vec(&mut rng::stream(seed, 1), 3);
        let t = sample(m, &p, &s, &x_n).unwrap();
        let back = invert(m, &p, &s, &InversionSeed::from_trajectory(&t)).unwrap();
        let tol = 4.0 * EPS * s.steps() as f64 * 1e3;
        prop_assert!(max_rel(back.noise_end(), &x_n) < tol);

        let x0 = rng::normal_vec(&mut rng::stream(seed, 2), 3);
        let mut init = InversionSeed::new(x0.clone());
        init.x1 = Some(rng::normal_vec(&mut rng::stream(seed, 3), 3));
        init.x2 = Some(rng::normal_vec(&mut rng::stream(seed, 4), 3));
        init.y0 = Some(rng::normal_vec(&mut rng::stream(seed, 5), 3));
        let up = invert(m, &p, &s, &init).unwrap();
        let starts: Vec<Vec<f64>> = match m {
            Method::Edict { .. } => vec![up.states[s.steps()].clone(), up.aux.as_ref().unwrap()[s.steps()].clone()],
            _ => (0..m.history()).map(|j| up.states[s.steps() - j].clone()).collect(),
        };
        let down = sample_from_starts(m, &p, &s, starts).unwrap();
        prop_assert!(max_rel(down.data_end(), &x0) < tol);
    }

    #[test]
    fn zero_predictor_trajectories_scale_linearly(c in -5.0..5.0_f64, which in 0usize..5) {
        let m = [Method::Ddim, Method::Obelm2, Method::Bdia { gamma: 0.4 }, Method::Edict { p: 0.8 }, Method::Obelm3][which];
        // the three-step method amplifies rounding by about 10x per step
        let tol = if m == Method::Obelm3 { 1e-3 } else { 1e-14 };
        let s = NoiseSchedule::vp_linear(12, 1e-3, 0.05).unwrap();
        let zero = ConstantPredictor::zero(2);
        let base = sample(m, &zero, &s, &[1.0, -0.5]).unwrap();
        let scaled = sample(m, &zero, &s, &[c, -0.5 * c]).unwrap();
        for (u, v) in base.states.iter().zip(&scaled.states) {
            for (a, b) in u.iter().zip(v) {
                prop_assert!((c * a - b).abs() <= tol * (1.0 + b.abs()));
            }
        }
    }
}
