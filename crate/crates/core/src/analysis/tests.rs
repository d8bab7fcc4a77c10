use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn factors(k: usize) -> Vec<Factor> {
    (0..k).map(|i| Factor::new(format!("f{i}"), 0.0, 1.0)).collect()
}

#[test]
fn two_factor_design_enumerates_corners_in_order() {
    let d = build_design(&factors(2)).unwrap();
    assert_eq!(d.coded, vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]);
}

#[test]
fn coded_levels_map_linearly_to_values() {
    let d = build_design(&[Factor::new("stdg.kappa1", 1.0, 100.0)]).unwrap();
    assert_eq!(d.values(0), vec![1.0]);
    assert_eq!(d.values(1), vec![100.0]);
    assert_eq!(Factor::new("x", 1.0, 100.0).value(0.0), 50.5);
}

#[test]
fn three_factor_design_has_eight_unique_runs() {
    let d = build_design(&factors(3)).unwrap();
    assert_eq!(d.runs(), 8);
    for i in 0..8 {
        for j in 0..i {
            assert_ne!(d.coded[i], d.coded[j]);
        }
    }
}

#[test]
fn bad_designs_are_rejected() {
    assert!(build_design(&[]).is_err());
    assert!(build_design(&[Factor::new("a", 1.0, 1.0)]).is_err());
    assert!(build_design(&[Factor::new("a", 0.0, 1.0), Factor::new("a", 0.0, 2.0)]).is_err());
    assert!(build_design(&[Factor::new("a", f64::NAN, 1.0)]).is_err());
}

#[test]
fn one_factor_line_is_fitted_exactly() {
    let d = build_design(&factors(1)).unwrap();
    let fit = fit_regression(&d, &[0.0, 2.0]).unwrap();
    assert_eq!(fit.coefficients, vec![1.0, 1.0]);
    assert_eq!(fit.sst, 2.0);
    assert_eq!(fit.sse, 0.0);
    assert_eq!(fit.r2, Some(1.0));
    assert_eq!(fit.contributions.unwrap(), vec![0.0, 100.0]);
}

#[test]
fn known_second_order_model_is_recovered() {
    let d = build_design(&factors(4)).unwrap();
    let terms = Term::all(4);
    assert_eq!(terms.len(), 1 + 4 + 6);
    let truth: Vec<f64> = (0..terms.len()).map(|i| 0.37 * i as f64 - 1.1 + (i % 3) as f64 * 0.01).collect();
    let y: Vec<f64> = d.coded.iter().map(|x| terms.iter().zip(&truth).map(|(t, a)| a * t.eval(x)).sum()).collect();
    let fit = fit_regression(&d, &y).unwrap();
    for (a, b) in fit.coefficients.iter().zip(&truth) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert!(fit.sse < 1e-20);
    assert_abs_diff_eq!(fit.r2.unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fit.sst, fit.sst_coefficients, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.contributions.unwrap().iter().sum::<f64>(), 100.0, epsilon = 1e-9);
}

#[test]
fn r2_matches_normal_equations() {
    let d = build_design(&factors(4)).unwrap();
    let terms = Term::all(4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y: Vec<f64> = (0..d.runs()).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let fit = fit_regression(&d, &y).unwrap();

    let x = DMatrix::from_fn(d.runs(), terms.len(), |r, c| terms[c].eval(&d.coded[r]));
    let yv = DVector::from_vec(y.clone());
    let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &yv)).unwrap();
    let resid = &yv - &x * &beta;
    let mean = yv.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = 1.0 - resid.norm_squared() / sst;
    assert_abs_diff_eq!(fit.r2.unwrap(), r2, epsilon = 1e-9);
    for (a, b) in fit.coefficients.iter().zip(beta.iter()) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
    }
    let total: f64 = fit.contributions.unwrap().iter().sum();
    assert!(total < 100.0 && total > 0.0);
    assert_abs_diff_eq!(total, 100.0 * r2, epsilon = 1e-9);
}

#[test]
fn constant_responses_are_degenerate() {
    let d = build_design(&factors(2)).unwrap();
    let fit = fit_regression(&d, &[3.0; 4]).unwrap();
    assert!(fit.degenerate());
    assert!(fit.contributions.is_none());
    assert_eq!(fit.coefficients[0], 3.0);
    assert!(matches!(fit_regression(&d, &[1.0; 3]), Err(AnalysisError::ResponseCount { expected: 4, got: 3 })));
}

#[test]
fn student_t_interval() {
    let ci = summarize_replications(&[0.0, 2.0]);
    assert_eq!(ci.mean, 1.0);
    assert_abs_diff_eq!(ci.half_width.unwrap(), 12.706204736, epsilon = 1e-6);

    let same = summarize_replications(&[4.2; 10]);
    assert_eq!(same.half_width, Some(0.0));
    assert_eq!(summarize_replications(&[1.0]).half_width, None);
}

#[test]
fn interval_shrinks_with_sample_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<f64> = (0..6400).map(|_| rng.gen::<f64>()).collect();
    let small = summarize_replications(&draws[..100]).half_width.unwrap();
    let large = summarize_replications(&draws).half_width.unwrap();
    // 64x the samples: about 1/8 the width.
    let ratio = small / large;
    assert!((6.5..9.5).contains(&ratio), "{ratio}");
}

#[test]
fn grid_is_a_cartesian_product() {
    let g = grid_points(&[vec![1.0, 2.0], vec![0.05, 0.1, 0.2]]);
    assert_eq!(g.len(), 6);
    assert_eq!(g[0], vec![1.0, 0.05]);
    assert_eq!(g[2], vec![1.0, 0.2]);
    assert_eq!(g[3], vec![2.0, 0.05]);
}

proptest! {
    #[test]
    fn fit_ignores_run_order(ys in prop::collection::vec(-100.0f64..100.0, 8), perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle()) {
        let d = build_design(&factors(3)).unwrap();
        let fit = fit_regression(&d, &ys).unwrap();
        let shuffled = FactorialDesign {
            factors: d.factors.clone(),
            coded: perm.iter().map(|&i| d.coded[i].clone()).collect(),
        };
        let ys2: Vec<f64> = perm.iter().map(|&i| ys[i]).collect();
        let fit2 = fit_regression(&shuffled, &ys2).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&fit2.coefficients) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!((fit.sse - fit2.sse).abs() <= 1e-7 * (1.0 + fit.sst));
    }

    #[test]
    fn r2_and_contributions_are_bounded(ys in prop::collection::vec(-1e3f64..1e3, 16)) {
        let d = build_design(&factors(4)).unwrap();
        let fit = fit_regression(&d, &ys).unwrap();
        if let (Some(r2), Some(c)) = (fit.r2, fit.contributions) {
            prop_assert!((0.0..=1.0).contains(&r2));
            prop_assert!(c.iter().all(|v| *v >= 0.0));
            prop_assert!(c.iter().sum::<f64>() <= 100.0 + 1e-9);
        }
    }
}
