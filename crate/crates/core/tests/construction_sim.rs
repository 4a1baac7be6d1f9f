mod common;

use std::collections::HashSet;

use common::mean_se;
use laserlab_core::construction_sim::behrend::{max_progression_free_size, practical_floor};
use laserlab_core::construction_sim::pipeline::cw_default_counts;
use laserlab_core::construction_sim::power_mean::mean_floor;
use laserlab_core::construction_sim::zero_out::max_diagonal_subset;
use laserlab_core::construction_sim::{
    behrend_set, free_hard_instance, greedy_hard_instance, power_mean_select, random_zero_out, BlockSupport,
    GreedyOptions, PipelineSetup,
};
use laserlab_core::numeric::is_prime;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// For every ordered pair `(a, c)` the third term `b = 2c - a` is fixed, so
/// this is exhaustive in `O(|A|^2)`.
fn no_three_term_progression(modulus: u64, elements: &[u64]) -> bool {
    let set: HashSet<u64> = elements.iter().copied().collect();
    if set.len() != elements.len() || elements.iter().any(|&x| x >= modulus) {
        return false;
    }
    for &a in elements {
        for &c in elements {
            let b = (2 * c + 2 * modulus - a) % modulus;
            if set.contains(&b) && !(a == c && b == c) {
                return false;
            }
        }
    }
    true
}

/// Largest progression-free subset by plain subset enumeration.
fn brute_max_progression_free(modulus: u64) -> usize {
    (0u32..1 << modulus)
        .filter(|mask| {
            let elems: Vec<u64> = (0..modulus).filter(|i| mask & (1 << i) != 0).collect();
            no_three_term_progression(modulus, &elems)
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap()
}

#[test]
fn behrend_small_cases() {
    assert_eq!(behrend_set(1).unwrap().elements, vec![0]);
    let five = behrend_set(5).unwrap();
    assert!(five.len() >= 2 && no_three_term_progression(5, &five.elements));
    assert!(no_three_term_progression(5, &[1, 2]));
    assert!(!no_three_term_progression(5, &[0, 1, 2]));
    assert!(behrend_set(0).is_err());
}

#[test]
fn behrend_sets_are_progression_free() {
    let moduli: Vec<u64> = (1..=500).chain([1_000, 10_000]).collect();
    moduli.par_iter().for_each(|&m| {
        let s = behrend_set(m).unwrap();
        assert!(no_three_term_progression(m, &s.elements), "M = {m}");
        if m >= 100 {
            assert!(
                s.len() >= practical_floor(m),
                "M = {m}: {} < {}",
                s.len(),
                practical_floor(m)
            );
            assert!(s.len() as f64 >= (m as f64).powf(0.6));
        }
    });
}

#[test]
fn exhaustive_optimum_agrees_with_enumeration() {
    for m in 1..=16 {
        assert_eq!(
            max_progression_free_size(m).unwrap(),
            brute_max_progression_free(m),
            "M = {m}"
        );
    }
}

#[test]
fn behrend_is_within_half_of_optimum() {
    (1..=60u64).into_par_iter().for_each(|m| {
        let best = max_progression_free_size(m).unwrap();
        let got = behrend_set(m).unwrap().len();
        assert!(2 * got >= best, "M = {m}: {got} vs optimum {best}");
    });
}

#[test]
fn zero_out_without_off_diagonal_keeps_everything() {
    let bs = BlockSupport::new(7, vec![]).unwrap();
    assert_eq!(random_zero_out(&bs, 1, 0).unwrap().kept, (0..7).collect::<Vec<_>>());
}

/// Largest diagonal subset by plain enumeration.
fn brute_max_diagonal(bs: &BlockSupport) -> usize {
    (0u32..1 << bs.n)
        .filter(|mask| bs.off_diag.iter().all(|t| t.iter().any(|&v| mask & (1 << v) == 0)))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap()
}

fn valid(bs: &BlockSupport, kept: &[u32]) -> bool {
    let inside: HashSet<u32> = kept.iter().copied().collect();
    bs.off_diag.iter().all(|t| !t.iter().all(|v| inside.contains(v)))
}

#[test]
fn zero_out_single_triple() {
    let bs = BlockSupport::new(3, vec![[0, 1, 2]]).unwrap();
    assert_eq!(brute_max_diagonal(&bs), 2);
    assert_eq!(max_diagonal_subset(&bs).unwrap().len(), 2);
    let r = random_zero_out(&bs, 200, 9).unwrap();
    assert_eq!(r.m_used, 1.0);
    assert_eq!(r.kept.len(), 2);
    assert!(valid(&bs, &r.kept));
}

#[test]
fn zero_out_meets_the_expectation_floor() {
    let runs: Vec<(f64, bool)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let bs = BlockSupport::random(300, 4.0, seed).unwrap();
            let r = random_zero_out(&bs, 1, seed).unwrap();
            (r.kept.len() as f64, valid(&bs, &r.kept))
        })
        .collect();
    assert!(runs.iter().all(|r| r.1));
    let sizes: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (mean, se) = mean_se(&sizes);
    let floor = 2.0 * 300.0 / (3.0 * 12f64.sqrt());
    assert!((floor - 57.735).abs() < 1e-3);
    assert!(mean >= floor - 3.0 * se, "mean {mean} (se {se}) below {floor}");
}

#[test]
fn greedy_respects_budget() {
    let (bs, stats) = greedy_hard_instance(64, 1, 1, &GreedyOptions::default()).unwrap();
    assert!(bs.off_diag.len() <= 64);
    assert_eq!(stats.triples, bs.off_diag.len());
    assert!(bs.off_diag.iter().all(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]));
}

#[test]
fn greedy_covers_its_target_size() {
    let (bs, stats) = greedy_hard_instance(128, 4, 2, &GreedyOptions::default()).unwrap();
    assert!(bs.off_diag.len() <= 4 * 128);
    let s = stats.s_target;
    assert!(s <= 128);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let hits = (0..1000)
        .filter(|_| {
            let subset: Vec<u32> = sample(&mut rng, 128, s).iter().map(|v| v as u32).collect();
            !valid(&bs, &subset)
        })
        .count();
    assert!(hits >= 990, "{hits} of 1000 subsets of size {s} contain a triple");
}

#[test]
fn greedy_instances_cap_the_zero_out() {
    for seed in 0..5 {
        let (bs, _) = greedy_hard_instance(20, 1, seed, &GreedyOptions::default()).unwrap();
        let ceiling = brute_max_diagonal(&bs);
        let r = random_zero_out(&bs, 50, seed).unwrap();
        assert!(r.kept.len() <= ceiling);
        assert!(valid(&bs, &r.kept));
    }
}

fn pairwise_free(bs: &BlockSupport) -> bool {
    let sets: Vec<HashSet<u32>> = bs.off_diag.iter().map(|t| t.iter().copied().collect()).collect();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if sets[i].intersection(&sets[j]).count() > 1 {
                return false;
            }
        }
    }
    true
}

#[test]
fn free_instances() {
    let (bs, stats) = free_hard_instance(600, 10, 4, &GreedyOptions::default()).unwrap();
    assert_eq!(bs.n, 600);
    assert!(pairwise_free(&bs));
    assert!(stats.drawn <= 2 * 10 * 600, "{} drawn", stats.drawn);
    assert!(bs.off_diag.len() <= stats.drawn);
    for seed in 0..5 {
        let (bs, _) = free_hard_instance(60, 3, seed, &GreedyOptions::default()).unwrap();
        assert!(pairwise_free(&bs));
    }
}

fn multinomial(parts: &[u64]) -> u128 {
    // Product of binomials, each computed by the exact running formula.
    let mut total = 0u64;
    let mut out = 1u128;
    for &k in parts {
        for i in 1..=k {
            total += 1;
            out = out * total as u128 / i as u128;
        }
    }
    out
}

#[test]
fn pipeline_counts_match_multinomials() {
    for n in [6u64, 12] {
        let setup = PipelineSetup::cw_default(2, n).unwrap();
        let counts = cw_default_counts(n).unwrap();
        // Support order (0,0,2), (0,1,1), (0,2,0), (1,0,1), (1,1,0), (2,0,0):
        // X sees labels 0 and 1, Y only 0, Z labels 2 and 1.
        let side = multinomial(&[n / 6, 5 * n / 6]);
        assert_eq!(setup.n_b, side * side);
        assert_eq!(setup.n_alpha, multinomial(&counts).pow(3));
        assert!(is_prime(setup.modulus()));
        assert!(setup.modulus() >= ((100.0 * setup.r).ceil() as u64).max(5));
        assert!(!is_prime(setup.modulus() - 1) || setup.modulus() - 1 < ((100.0 * setup.r).ceil() as u64).max(5));
    }
    assert_eq!(PipelineSetup::cw_default(2, 12).unwrap().n_b, 4356);
}

#[test]
fn pipeline_invariants_and_expectations() {
    let setup = PipelineSetup::cw_default(2, 12).unwrap();
    let runs: Vec<_> = (0..500u64)
        .into_par_iter()
        .map(|s| setup.run(1_000 + s).unwrap())
        .collect();
    for r in &runs {
        assert_eq!(r.linearity_violations, 0);
        assert!(r.block_disjoint);
        assert!(r.l_bound_holds());
        assert!(r.c1_prime <= r.c1);
        assert!(r.l as u64 <= r.c1_prime);
    }
    let c1: Vec<f64> = runs.iter().map(|r| r.c1 as f64).collect();
    let c3: Vec<f64> = runs.iter().map(|r| r.c3 as f64).collect();
    for (xs, want) in [(c1, setup.expected_c1()), (c3, setup.expected_c3())] {
        let (mean, se) = mean_se(&xs);
        assert!((mean - want).abs() <= 3.0 * se, "mean {mean} se {se} expected {want}");
    }
}

#[test]
fn power_mean_examples() {
    assert_eq!(power_mean_select(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0);
    assert_eq!(power_mean_select(&[3.5], &[0.1]).unwrap(), 0);
    assert!(power_mean_select(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    assert!(power_mean_select(&[1.0], &[1.0, 1.0]).is_err());
}

#[test]
fn power_mean_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let c = rng.random_range(1..12);
        let a: Vec<f64> = (0..c).map(|_| rng.random_range(1e-3..1e3)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(1e-3..1e3)).collect();
        let i = power_mean_select(&a, &b).unwrap();
        let got = a[i].powf(1.5) / b[i].sqrt();
        let ma = a.iter().sum::<f64>() / c as f64;
        let mb = b.iter().sum::<f64>() / c as f64;
        let floor = ma.powf(1.5) / mb.sqrt();
        assert!(got >= floor * (1.0 - 1e-12), "{got} < {floor}");
        assert!((mean_floor(&a, &b) - floor).abs() <= 1e-12 * floor);
    }
}

proptest! {
    #[test]
    fn zero_out_output_is_always_valid(n in 6usize..40, m in 0.5f64..6.0, seed in any::<u64>(), trials in 1usize..5) {
        let bs = BlockSupport::random(n, m, seed).unwrap();
        let r = random_zero_out(&bs, trials, seed).unwrap();
        prop_assert!(valid(&bs, &r.kept));
        prop_assert!(r.kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn free_instances_are_free(n in 12usize..80, m in 2usize..5, seed in any::<u64>()) {
        let (bs, _) = free_hard_instance(n, m, seed, &GreedyOptions::default()).unwrap();
        prop_assert!(pairwise_free(&bs));
    }
}
