mod common;

use proptest::prelude::*;

use infofair::information::{check_calibration, information_content};
use infofair::lp::LpStatus;
use infofair::optimize::{build_lp, spec_matrix};
use infofair::refinement::is_refinement;
use infofair::synth::{
    generated_scopes, random_calibrated_predictor, random_population, random_refinement, GeneratorParams,
};
use infofair::{Group, GroupProfile, ImpactParams, Rational, Scalar, Scopes};

fn params(seed: u64, cells: usize) -> GeneratorParams {
    let mut p = GeneratorParams::new(seed);
    p.cells_per_group = cells;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_selects_requested_rate(seed in any::<u64>(), cells in 1usize..7, num in 0i64..=64) {
        let pop = random_population::<Rational>(&params(seed, cells)).unwrap();
        let z = random_calibrated_predictor(&pop, cells, seed, Scopes::PerGroup).unwrap();
        let beta = Rational::from_ratio(num, 64);
        for g in Group::ALL {
            let profile = GroupProfile::new(&pop, &z, g).unwrap();
            let t = profile.threshold_for_rate(&beta);
            let (selected, pos) = profile.selected(|v| t.select(v));
            prop_assert_eq!(&selected, &beta);
            prop_assert_eq!(profile.positive_at(&beta), pos.clone());
            // Matching the positives again lands on the same rate or a smaller
            // one with the same positive mass.
            let back = profile.rate_for_positive(&pos);
            prop_assert!(back <= beta);
            prop_assert_eq!(profile.positive_at(&back), pos.clone());
            let neg = beta.clone() - pos;
            let fwd = profile.rate_for_negative(&neg);
            prop_assert!(fwd >= beta);
            prop_assert_eq!(fwd.clone() - profile.positive_at(&fwd), neg);
        }
    }

    #[test]
    fn generated_predictors_are_calibrated_refinements(seed in any::<u64>(), cells in 1usize..8, coarse in 0usize..6) {
        let pop = random_population::<f64>(&params(seed, cells)).unwrap();
        let z = random_calibrated_predictor(&pop, coarse, seed.rotate_left(7), Scopes::PerGroup).unwrap();
        let zp = random_refinement(&pop, &z, seed.rotate_left(13), Scopes::PerGroup).unwrap();
        for scope in generated_scopes(&pop) {
            prop_assert!(check_calibration(&pop, &z, scope, 1e-12).unwrap().is_calibrated);
            prop_assert!(check_calibration(&pop, &zp, scope, 1e-12).unwrap().is_calibrated);
            prop_assert!(is_refinement(&pop, &z, &zp, scope, 1e-12).unwrap().is_refinement);
            let (i, ip) = (information_content(&pop, &z, scope).unwrap(), information_content(&pop, &zp, scope).unwrap());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&i));
            prop_assert!(ip >= i - 1e-12);
            if zp.scores() == z.scores() {
                prop_assert!((ip - i).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn lp_optimum_is_feasible(seed in any::<u64>(), cells in 1usize..5, which in 0usize..12, tau in 1u32..10) {
        let pop = random_population::<f64>(&params(seed, cells)).unwrap();
        let z = random_calibrated_predictor(&pop, cells, seed, Scopes::PerGroup).unwrap();
        let tau = f64::from(tau) / 10.0;
        let spec = spec_matrix(ImpactParams::new(tau, tau / 2.0), 0.1, 0.0, 0.0, (1.0, 1.0, 1.0))[which];
        let form = build_lp(&pop, &z, &spec).unwrap();
        let sol = form.lp.solve();
        prop_assert!(sol.status != LpStatus::IterationLimit);
        if sol.status == LpStatus::Optimal {
            prop_assert!(form.lp.max_violation(&sol.values) <= 1e-9);
            let direct: f64 = form.lp.objective.iter().zip(&sol.values).map(|(c, x)| c * x).sum();
            prop_assert!((direct - sol.objective.unwrap()).abs() <= 1e-12);
            if let Some(best) = common::vertex_enumeration(&with_finite_bounds(&form.lp)) {
                prop_assert!((best - sol.objective.unwrap()).abs() <= 1e-9);
            }
        }
    }
}

/// The auxiliary disparity variable has no upper bound; every disparity is
/// at most 1, so capping it at 2 keeps the optimum.
fn with_finite_bounds(lp: &infofair::lp::LinearProgram<f64>) -> infofair::lp::LinearProgram<f64> {
    let mut out = lp.clone();
    for v in &mut out.variables {
        v.hi.get_or_insert(2.0);
    }
    out
}
