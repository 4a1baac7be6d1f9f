mod common;

use common::{entropy, kernel_basis, max_over_kernel, random_instance, toy_support};
use laserlab_core::distributions::{marginals_of, symmetrize, SupportDistribution, SymmetryGroup};
use laserlab_core::laser_engine::{classic_bound, refined_bound};
use laserlab_core::solver::heuristics::{self, heuristic3, start_points};
use laserlab_core::solver::pipeline::{evaluate_gamma, full_pipeline_gamma, PipelineConfig};
use laserlab_core::solver::simplex::SimplexProgram;
use laserlab_core::solver::{
    fit_marginals, heuristic_gamma, max_entropy_with_marginals, solve_problem1, FitOptions, HeuristicKind,
    HeuristicOptions,
};
use laserlab_core::tensor_core::{build_cw, Support};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cw_support(q: usize) -> Support {
    Support::new(build_cw(q).block_support().into_iter().collect()).unwrap()
}

/// `τ ln q` on the middle triples, 0 on the corners.
fn cw_values(support: &Support, q: u32, tau: f64) -> Vec<f64> {
    support
        .triples()
        .iter()
        .map(|t| if t.contains(&2) { 0.0 } else { tau * (q as f64).ln() })
        .collect()
}

#[test]
fn product_form_and_kernel_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut small_kernels = 0;
    for _ in 0..100 {
        let (support, alpha) = random_instance(&mut rng, 12);
        let m = marginals_of(&support, &alpha);
        let fit = fit_marginals(&support, None, &m, &FitOptions::default()).unwrap();
        // Rebuild β* from the side factors alone.
        let pot: Vec<f64> = (0..support.len())
            .map(|s| fit.log_potential(&support, None, s))
            .collect();
        let z: f64 = pot.iter().map(|p| p.exp()).sum();
        for s in 0..support.len() {
            assert!((pot[s].exp() / z - fit.weights[s]).abs() <= 1e-7);
        }
        assert!(fit.product_form_defect(&support, None) <= 1e-7);
        let basis = kernel_basis(&support);
        if let Some(brute) = max_over_kernel(&alpha, &basis, &|w| entropy(w)) {
            small_kernels += 1;
            assert!(
                (entropy(&fit.weights) - brute).abs() <= 1e-6,
                "fit {} brute {brute}",
                entropy(&fit.weights)
            );
        }
    }
    assert!(small_kernels >= 20, "only {small_kernels} instances had a small kernel");
}

#[test]
fn problem2_dominates_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let (support, alpha) = random_instance(&mut rng, 10);
        let best = max_entropy_with_marginals(&support, &marginals_of(&support, &alpha)).unwrap();
        let basis = kernel_basis(&support);
        for _ in 0..200 {
            let mut p = alpha.clone();
            for k in &basis {
                let c: f64 = rng.random_range(-0.2..0.2);
                p.iter_mut().zip(k).for_each(|(x, v)| *x += c * v);
            }
            if p.iter().all(|&x| x >= 0.0) {
                assert!(entropy(&p) <= best.objective + 1e-8);
            }
        }
    }
}

#[test]
fn problem1_matches_kernel_oracle_and_beats_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut compared = 0;
    for _ in 0..40 {
        let (support, alpha) = random_instance(&mut rng, 8);
        let lv: Vec<f64> = (0..support.len()).map(|_| rng.random_range(0.0..2.0)).collect();
        let m = marginals_of(&support, &alpha);
        let res = solve_problem1(&support, &lv, &m).unwrap();
        assert!(res.kkt_residual <= 1e-9);
        let objective = |w: &[f64]| {
            w.iter().zip(&lv).map(|(a, v)| a * v).sum::<f64>()
                + marginals_of(&support, w).log_alpha_b()
                + 0.5 * entropy(w)
        };
        let basis = kernel_basis(&support);
        if let Some(brute) = max_over_kernel(&alpha, &basis, &objective) {
            compared += 1;
            assert!(
                (res.objective - brute).abs() <= 1e-8,
                "solver {} brute {brute}",
                res.objective
            );
        }
        for _ in 0..250 {
            let mut p = alpha.clone();
            for k in &basis {
                let c: f64 = rng.random_range(-0.3..0.3);
                p.iter_mut().zip(k).for_each(|(x, v)| *x += c * v);
            }
            if p.iter().all(|&x| x >= 0.0) {
                assert!(objective(&p) <= res.objective + 1e-9);
            }
        }
    }
    assert!(compared >= 10);
}

#[test]
fn cw_first_power_marginals_pin_the_distribution() {
    let s = cw_support(4);
    assert!(kernel_basis(&s).is_empty());
    let alpha: Vec<f64> = vec![0.1, 0.2, 0.15, 0.25, 0.05, 0.25];
    let r = max_entropy_with_marginals(&s, &marginals_of(&s, &alpha)).unwrap();
    for (a, b) in alpha.iter().zip(r.distribution.weights()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn point_mass_marginals() {
    let s = toy_support();
    let mut w = vec![0.0; 6];
    w[2] = 1.0;
    let r = max_entropy_with_marginals(&s, &marginals_of(&s, &w)).unwrap();
    assert!((r.distribution.weights()[2] - 1.0).abs() < 1e-12);
    assert!(r.objective.abs() < 1e-12);
}

#[test]
fn toy_support_refined_and_classic() {
    let s = toy_support();
    let alpha = SupportDistribution::new(&s, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0]).unwrap();
    let lv = vec![0.0; 6];
    // The kernel is one line: +c on even permutations, -c on odd ones.
    let basis = kernel_basis(&s);
    assert_eq!(basis.len(), 1);
    let uniform = vec![1.0 / 6.0; 6];
    let brute = max_over_kernel(&uniform, &basis, &|w| entropy(w)).unwrap();
    assert!((brute - 6f64.ln()).abs() < 1e-12);
    let solver = max_entropy_with_marginals(&s, &marginals_of(&s, alpha.weights())).unwrap();
    assert!((solver.objective - 6f64.ln()).abs() < 1e-12);
    let refined = refined_bound(&s, &lv, &alpha, solver.objective).unwrap().exp();
    let classic = classic_bound(&s, &lv, &alpha, solver.objective).unwrap().exp();
    assert!((refined - 3.0 / 2f64.sqrt()).abs() < 1e-9);
    assert!((classic - 1.5).abs() < 1e-9);
}

#[test]
fn toy_support_best_bound_is_three() {
    let s = toy_support();
    let out = full_pipeline_gamma(&s, &[0.0; 6], &PipelineConfig::default(), None).unwrap();
    assert!((out.best.log_bound - 3f64.ln()).abs() < 1e-9);
    let uneven = evaluate_gamma(
        &s,
        &[0.0; 6],
        &[0.5, 0.25, 0.25, 0.0, 0.0, 0.0],
        "x",
        &FitOptions::default(),
    )
    .unwrap();
    assert!(uneven.log_bound < out.best.log_bound);
}

#[test]
fn heuristic1_is_a_problem2_fixed_point() {
    let s = toy_support();
    let lv = [0.3, 0.1, 0.0, 0.2, 0.0, 0.1];
    let r = heuristic_gamma(HeuristicKind::H1, &s, &lv, None, None, &HeuristicOptions::default()).unwrap();
    let again = max_entropy_with_marginals(&s, &marginals_of(&s, r.distribution.weights())).unwrap();
    for (a, b) in r.distribution.weights().iter().zip(again.distribution.weights()) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn heuristic3_at_zero_is_heuristic2() {
    let s = cw_support(6);
    let lv = cw_values(&s, 6, 0.8);
    let h2 = heuristic_gamma(HeuristicKind::H2, &s, &lv, None, None, &HeuristicOptions::default()).unwrap();
    let h3 = heuristic_gamma(
        HeuristicKind::H3,
        &s,
        &lv,
        Some(0.0),
        None,
        &HeuristicOptions::default(),
    )
    .unwrap();
    assert!((h2.objective - h3.objective).abs() < 1e-7);
    for (a, b) in h2.distribution.weights().iter().zip(h3.distribution.weights()) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn heuristic2_matches_symmetric_grid() {
    let q = 6;
    let tau = 0.8;
    let s = cw_support(q as usize);
    let lv = cw_values(&s, q, tau);
    let h2 = heuristic_gamma(HeuristicKind::H2, &s, &lv, None, None, &HeuristicOptions::default()).unwrap();
    let grid = common::cw1_symmetric_bound(q, tau);
    // Heuristic 2 drops the entropy term, which is constant on a singleton
    // D_γ, so its objective is the t = 1 bound.
    assert!((h2.objective - grid).abs() < 1e-6, "{} vs {grid}", h2.objective);
    assert!(
        h2.kkt_residual <= 1e-9,
        "gap {:e} weights {:?}",
        h2.kkt_residual,
        h2.distribution.weights()
    );
}

#[test]
fn heuristic3_entropy_is_monotone_in_lambda() {
    let s = toy_support();
    let lv = [0.4, 0.1, 0.0, 0.2, 0.3, 0.1];
    for seed in 0..4u64 {
        let start = start_points(s.len(), None, 2, seed, None).pop().unwrap();
        let mut last = f64::INFINITY;
        for l in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            let r = heuristic3(&s, &lv, l, std::slice::from_ref(&start), None, 3_000);
            let h = entropy(&r.weights);
            assert!(h <= last + 1e-6, "seed {seed} lambda {l}: {h} after {last}");
            last = h;
        }
    }
}

#[test]
fn symmetrizing_concave_outputs_never_hurts() {
    let s = cw_support(5);
    let lv = cw_values(&s, 5, 0.75);
    let group = SymmetryGroup::full_roles(&s).unwrap();
    for (mu, kind) in [(0.0, HeuristicKind::H2), (0.5, HeuristicKind::H4)] {
        let r = heuristic_gamma(kind, &s, &lv, None, None, &HeuristicOptions::default()).unwrap();
        let sym = symmetrize(&r.distribution, &group).unwrap();
        let program = SimplexProgram::new(&s, &lv, 1.0 / 3.0, mu);
        assert!(program.value(sym.weights()) >= program.value(r.distribution.weights()) - 1e-9);
    }
    let _ = heuristics::heuristic2(&s, &lv);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn problem2_residual_and_dominance(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (support, alpha) = random_instance(&mut rng, 12);
        let r = max_entropy_with_marginals(&support, &marginals_of(&support, &alpha)).unwrap();
        prop_assert!(r.kkt_residual <= 1e-9);
        prop_assert!(r.objective >= entropy(&alpha) - 1e-10);
        let back = marginals_of(&support, r.distribution.weights());
        prop_assert!(back.max_abs_diff(&marginals_of(&support, &alpha)) <= 1e-9);
    }

    #[test]
    fn refined_dominates_classic(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (support, alpha) = random_instance(&mut rng, 12);
        let lv: Vec<f64> = (0..support.len()).map(|_| rng.random_range(-1.0..3.0)).collect();
        let a = SupportDistribution::new(&support, alpha.clone()).unwrap();
        let beta = max_entropy_with_marginals(&support, &marginals_of(&support, &alpha)).unwrap();
        let max_n = beta.objective.max(entropy(&alpha));
        prop_assert!(refined_bound(&support, &lv, &a, max_n).unwrap() >= classic_bound(&support, &lv, &a, max_n).unwrap());
    }
}
