use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use threetank::akf::{self, AkfConfig, AkfState, QEstimator};
use threetank::harness::{generate_reference, read_csv, write_csv, Segment, SimRecord};
use threetank::linmodel::{self, DiscreteModel};
use threetank::nalgebra::{Complex, DMatrix, DVector};
use threetank::tracking;
use threetank::{OperatingPoint, PlantParams};

fn augmented() -> tracking::AugmentedModel {
    let (_, dm) = linmodel::linearize(&PlantParams::default(), &OperatingPoint::default(), 1.0).unwrap();
    tracking::augment(&dm).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn placed_spectrum_matches_request(
        base in 0.5..0.85f64,
        gaps in prop::collection::vec(0.01..0.03f64, 4),
    ) {
        let mut poles = vec![base];
        for g in gaps {
            poles.push(poles.last().unwrap() + g);
        }
        let want: Vec<Complex<f64>> = poles.iter().map(|&p| Complex::new(p, 0.0)).collect();
        let am = augmented();
        let gain = tracking::place_poles(&am, &want).unwrap();
        let got = tracking::closed_loop_poles(&am, &gain);
        prop_assert!(tracking::spectrum_distance(&got, &want) < 1e-8);
    }

    #[test]
    fn placed_spectrum_with_conjugate_pair(re in 0.7..0.95f64, im in 0.01..0.1f64) {
        let want = vec![
            Complex::new(re, im),
            Complex::new(re, -im),
            Complex::new(0.9, 0.0),
            Complex::new(0.93, 0.0),
            Complex::new(0.96, 0.0),
        ];
        let am = augmented();
        let gain = tracking::place_poles(&am, &want).unwrap();
        let got = tracking::closed_loop_poles(&am, &gain);
        prop_assert!(tracking::spectrum_distance(&got, &want) < 1e-8);
    }

    #[test]
    fn clamped_spectrum_stays_in_band(entries in prop::collection::vec(-1e-3..1e-3f64, 9)) {
        let m = DMatrix::from_vec(3, 3, entries);
        let sym = (&m + m.transpose()) * 0.5;
        let (lo, hi) = (1e-8, 5e-4);
        let c = akf::clamp_eigenvalues(&sym, lo, hi);
        prop_assert!((&c - c.transpose()).amax() == 0.0);
        for l in c.symmetric_eigenvalues().iter() {
            prop_assert!(*l >= lo - 1e-18 && *l <= hi + 1e-18, "{l}");
        }
    }

    #[test]
    fn filter_covariance_stays_symmetric_positive(seed in any::<u64>(), est in 0usize..3) {
        let (_, dm) = linmodel::linearize(&PlantParams::default(), &OperatingPoint::default(), 1.0).unwrap();
        let mut cfg = AkfConfig::isotropic(3, 10.0, 1e-8, 2.5e-5);
        cfg.window = 5;
        cfg.estimator = [QEstimator::IncrementWindow, QEstimator::ResidualGain, QEstimator::Fixed][est];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = AkfState::new(DVector::zeros(3), &cfg).unwrap();
        let u = DVector::zeros(2);
        for _ in 0..60 {
            let y = DVector::from_fn(3, |_, _| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            st = akf::akf_step(&st, &dm, &u, &y, &cfg).unwrap();
            prop_assert!((&st.p - st.p.transpose()).amax() == 0.0);
            prop_assert!(st.p.clone().cholesky().is_some());
            prop_assert!(st.residuals.len() <= cfg.window && st.increments.len() <= cfg.window);
        }
    }

    #[test]
    fn reference_is_right_continuous(levels in prop::collection::vec(0.0..0.62f64, 1..6), probe in 0.0..1000.0f64) {
        let segs: Vec<Segment> = levels.iter().enumerate().map(|(i, &l)| Segment::new(100.0 * i as f64, l)).collect();
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(generate_reference(&segs, s.t), s.level);
            if i > 0 {
                prop_assert_eq!(generate_reference(&segs, s.t - 1e-9), segs[i - 1].level);
            }
        }
        let idx = ((probe / 100.0).floor() as usize).min(segs.len() - 1);
        prop_assert_eq!(generate_reference(&segs, probe), segs[idx].level);
    }

    #[test]
    fn csv_round_trip_is_lossless(
        vals in prop::collection::vec(-1.0..1.0f64, 16),
        opt in prop::collection::vec(any::<bool>(), 4),
        sat in any::<[bool; 2]>(),
    ) {
        let rec = SimRecord {
            t: vals[0].abs() * 1e3,
            h: [vals[1], vals[2], vals[3]],
            y: [vals[4], vals[5], vals[6]],
            y_r: opt[0].then_some([vals[7], vals[8]]),
            u: [vals[9] * 1e-4, vals[10] * 1e-4],
            zeta: opt[1].then_some([vals[11] * 1e-3, vals[12]]),
            x_hat: opt[2].then_some([vals[13], vals[14], vals[15]]),
            z: opt[3].then_some([vals[0], vals[1]]),
            saturated: sat,
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&rec), &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![rec]);
    }
}

#[test]
fn innovations_are_white_for_a_matched_model() {
    let dm = DiscreteModel {
        a_d: DMatrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.9]),
        b_d: DMatrix::zeros(2, 1),
        c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        t_s: 1.0,
    };
    let (q, r) = (1e-3, 1e-2);
    let cfg = AkfConfig {
        q0: DMatrix::identity(2, 2) * q,
        r: DMatrix::from_element(1, 1, r),
        estimator: QEstimator::Fixed,
        ..AkfConfig::isotropic(2, 1.0, q, r)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = DVector::zeros(2);
    let mut st = AkfState::new(DVector::zeros(2), &cfg).unwrap();
    let u = DVector::zeros(1);
    let mut nu = Vec::new();
    for k in 0..4000 {
        x = &dm.a_d * &x + DVector::from_fn(2, |_, _| q.sqrt() * n());
        let y = &dm.c * &x + DVector::from_element(1, r.sqrt() * n());
        let pred = akf::predict(&st, &dm, &u);
        let s = (&dm.c * &pred.p * dm.c.transpose())[(0, 0)] + r;
        let innov = (&y - &dm.c * &pred.x)[0];
        st = akf::update(&pred, &y, &dm.c, &cfg.r).unwrap();
        if k >= 100 {
            nu.push(innov / s.sqrt());
        }
    }
    let len = nu.len() as f64;
    let var = nu.iter().map(|v| v * v).sum::<f64>() / len;
    assert!((var - 1.0).abs() < 0.1, "normalised innovation variance {var}");
    let bound = 3.0 / len.sqrt();
    for lag in 1..=5 {
        let rho = nu.iter().zip(&nu[lag..]).map(|(a, b)| a * b).sum::<f64>() / len / var;
        assert!(rho.abs() < bound, "lag {lag}: {rho} exceeds {bound}");
    }
}
