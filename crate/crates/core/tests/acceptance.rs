//! Release acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{cw1_grid_omega, entropy, kernel_basis, max_over_kernel, mean_se, random_instance, toy_support};
use laserlab_core::construction_sim::behrend::max_progression_free_size;
use laserlab_core::construction_sim::{behrend_set, random_zero_out, BlockSupport, PipelineSetup};
use laserlab_core::distributions::{marginals_of, ratio_drift_check, round_to_grid, SupportDistribution};
use laserlab_core::laser_engine::{
    analyze_cw, classic_bound, omega_bound, refined_bound, schonhage_tau, verify_table, EngineConfig, OmegaResult,
    ValueTable,
};
use laserlab_core::solver::{fit_marginals, max_entropy_with_marginals, FitOptions, DEFAULT_SEED};
use laserlab_core::tensor_core::{MatMulShape, Support};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn omega(q: u32, t: u32, seed: u64) -> OmegaResult {
    let mut cfg = EngineConfig::default();
    cfg.pipeline.seed = seed;
    omega_bound(q, t, 1e-8, &cfg).expect("omega bisection")
}

fn table_json(r: &OmegaResult) -> String {
    ValueTable::from_analysis(&r.analysis, &EngineConfig::default())
        .to_json()
        .unwrap()
}

fn strassen() -> Outcome {
    let tau = schonhage_tau(&[MatMulShape::new(2, 2, 2).unwrap()], 7.0).unwrap();
    let w = 3.0 * tau;
    outcome((w - 2.807355).abs() <= 1e-6, format!("3 tau = {w:.9}"))
}

fn cw_first() -> Outcome {
    let r = omega(6, 1, DEFAULT_SEED);
    let oracle = cw1_grid_omega(6);
    let pass = r.certified && (r.omega_bound - 2.3872).abs() <= 2e-3 && (r.omega_bound - oracle).abs() <= 2e-3;
    outcome(
        pass,
        format!(
            "omega <= {:.10}, grid oracle {oracle:.10}, certified {}",
            r.omega_bound, r.certified
        ),
    )
}

fn cw_second() -> Outcome {
    let r = omega(6, 2, DEFAULT_SEED);
    let kkt = r.analysis.max_kkt();
    let pass = r.certified && (r.omega_bound - 2.3755).abs() <= 1e-3 && kkt <= 1e-9;
    outcome(
        pass,
        format!(
            "omega <= {:.10}, max KKT residual {kkt:.2e}, certified {}",
            r.omega_bound, r.certified
        ),
    )
}

fn cw_fourth() -> Outcome {
    let a = omega(5, 4, DEFAULT_SEED);
    let b = omega(5, 4, 0x5eed_0002);
    let gap = (a.omega_bound - b.omega_bound).abs();
    let pass = a.certified && b.certified && (a.omega_bound - 2.3730).abs() <= 5e-4 && gap <= 1e-5;
    outcome(
        pass,
        format!(
            "omega <= {:.10} and {:.10} across seed sets (gap {gap:.1e})",
            a.omega_bound, b.omega_bound
        ),
    )
}

fn substitutes() -> Outcome {
    // (a) fuzz with Problem-2 maxima from the solver.
    let violations: usize = (0..100_000u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let (s, w) = random_instance(&mut rng, 12);
            let lv: Vec<f64> = (0..s.len()).map(|_| rng.random_range(0.0..3.0)).collect();
            let alpha = SupportDistribution::new(&s, w).unwrap();
            let Ok(best) = max_entropy_with_marginals(&s, &marginals_of(&s, alpha.weights())) else {
                return 1;
            };
            match (
                refined_bound(&s, &lv, &alpha, best.objective),
                classic_bound(&s, &lv, &alpha, best.objective),
            ) {
                (Ok(r), Ok(c)) if r >= c => 0,
                _ => 1,
            }
        })
        .sum();
    // (b) doubling the power.
    let cfg = EngineConfig::default();
    let mut worst_product = f64::INFINITY;
    for q in [5u32, 6] {
        for tau in [0.75, 0.7915, 0.85] {
            let v: Vec<f64> = [1, 2, 4]
                .iter()
                .map(|&t| analyze_cw(q, t, tau, &cfg).unwrap())
                .collect();
            worst_product = worst_product.min(v[1] - 2.0 * v[0]).min(v[2] - 2.0 * v[1]);
        }
    }
    // (c) monotone in τ.
    let mut worst_step = f64::INFINITY;
    for t in [1u32, 2, 4] {
        let vals: Vec<f64> = (0..50)
            .into_par_iter()
            .map(|k| analyze_cw(5, t, 2.0 / 3.0 + (1.0 / 3.0) * k as f64 / 49.0, &cfg).unwrap())
            .collect();
        for w in vals.windows(2) {
            worst_step = worst_step.min(w[1] - w[0]);
        }
    }
    let pass = violations == 0 && worst_product >= -1e-6 && worst_step >= -1e-9;
    outcome(
        pass,
        format!(
            "(a) {violations} violations in 1e5, (b) min product margin {worst_product:.3e}, (c) min tau step {worst_step:.3e}"
        ),
    )
}

fn toy() -> Outcome {
    let s = toy_support();
    let w = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0];
    let alpha = SupportDistribution::new(&s, w.to_vec()).unwrap();
    let solved = max_entropy_with_marginals(&s, &marginals_of(&s, &w)).unwrap().objective;
    let brute = max_over_kernel(&w, &kernel_basis(&s), &|p| entropy(p)).unwrap();
    let r = refined_bound(&s, &[0.0; 6], &alpha, solved).unwrap().exp();
    let c = classic_bound(&s, &[0.0; 6], &alpha, solved).unwrap().exp();
    let pass = (r - 3.0 / 2f64.sqrt()).abs() <= 1e-9 && (c - 1.5).abs() <= 1e-9 && (solved - brute).abs() <= 1e-9;
    outcome(
        pass,
        format!("refined {r:.12}, classic {c:.12}, max beta_N solver {solved:.12} vs grid {brute:.12}"),
    )
}

fn product_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_entry, mut worst_brute, mut compared) = (0f64, 0f64, 0);
    for _ in 0..100 {
        let (s, alpha) = random_instance(&mut rng, 12);
        let fit = fit_marginals(&s, None, &marginals_of(&s, &alpha), &FitOptions::default()).unwrap();
        let pot: Vec<f64> = (0..s.len()).map(|i| fit.log_potential(&s, None, i)).collect();
        let z: f64 = pot.iter().map(|p| p.exp()).sum();
        for i in 0..s.len() {
            worst_entry = worst_entry.max((pot[i].exp() / z - fit.weights[i]).abs());
        }
        if let Some(brute) = max_over_kernel(&alpha, &kernel_basis(&s), &|p| entropy(p)) {
            compared += 1;
            worst_brute = worst_brute.max((entropy(&fit.weights) - brute).abs());
        }
    }
    let pass = worst_entry <= 1e-7 && worst_brute <= 1e-6 && compared > 0;
    outcome(
        pass,
        format!("max entry error {worst_entry:.2e}, max brute gap {worst_brute:.2e} on {compared} small kernels"),
    )
}

fn zero_out() -> Outcome {
    let runs: Vec<(f64, bool)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let bs = BlockSupport::random(300, 4.0, seed).unwrap();
            let kept = random_zero_out(&bs, 1, seed).unwrap().kept;
            let inside: HashSet<u32> = kept.iter().copied().collect();
            let ok = bs.off_diag.iter().all(|t| !t.iter().all(|v| inside.contains(v)));
            (kept.len() as f64, ok)
        })
        .collect();
    let valid = runs.iter().all(|r| r.1);
    let (mean, se) = mean_se(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let floor = 600.0 / (3.0 * 12f64.sqrt());
    outcome(
        valid && mean >= floor - 3.0 * se,
        format!("mean |I| {mean:.2} (se {se:.2}), floor {floor:.3}, all valid {valid}"),
    )
}

fn progression_free(m: u64, elements: &[u64]) -> bool {
    let set: HashSet<u64> = elements.iter().copied().collect();
    elements.iter().all(|&a| {
        elements.iter().all(|&c| {
            let b = (2 * c + 2 * m - a) % m;
            !set.contains(&b) || (a == c && b == c)
        })
    })
}

fn salem_spencer() -> Outcome {
    let moduli: Vec<u64> = (1..=500).chain([1_000, 10_000]).collect();
    let bad: Vec<u64> = moduli
        .par_iter()
        .filter(|&&m| !progression_free(m, &behrend_set(m).unwrap().elements))
        .copied()
        .collect();
    let short: Vec<u64> = (1..=60u64)
        .into_par_iter()
        .filter(|&m| 2 * behrend_set(m).unwrap().len() < max_progression_free_size(m).unwrap())
        .collect();
    let big = behrend_set(10_000).unwrap().len();
    outcome(
        bad.is_empty() && short.is_empty(),
        format!("invalid at {bad:?}, below half optimum at {short:?}, |A| = {big} at M = 10^4"),
    )
}

fn pipeline() -> Outcome {
    let setup = PipelineSetup::cw_default(2, 12).unwrap();
    let runs: Vec<_> = (0..500u64)
        .into_par_iter()
        .map(|k| setup.run(DEFAULT_SEED + k).unwrap())
        .collect();
    let linear = runs.iter().all(|r| r.linearity_violations == 0);
    let disjoint = runs.iter().all(|r| r.block_disjoint);
    let (c1, se1) = mean_se(&runs.iter().map(|r| r.c1 as f64).collect::<Vec<_>>());
    let (c3, se3) = mean_se(&runs.iter().map(|r| r.c3 as f64).collect::<Vec<_>>());
    let (e1, e3) = (setup.expected_c1(), setup.expected_c3());
    let pass = linear && disjoint && (c1 - e1).abs() <= 3.0 * se1 && (c3 - e3).abs() <= 3.0 * se3;
    outcome(
        pass,
        format!("E[C1] {c1:.3} vs {e1:.3} (se {se1:.3}), E[C3] {c3:.2} vs {e3:.2} (se {se3:.2}), linear {linear}, disjoint {disjoint}"),
    )
}

fn grid_rounding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    let mut drift_failures = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=50usize);
        let n = rng.random_range(50..=10_000u64);
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let s = Support::new((0..len as u32).map(|i| [i, 0, 0]).collect()).unwrap();
        let alpha = SupportDistribution::new(&s, w.clone()).unwrap();
        let r = round_to_grid(&s, &alpha, n).unwrap();
        let ok = r.counts.iter().sum::<u64>() == n
            && r.counts
                .iter()
                .zip(&w)
                .zip(r.distribution.weights())
                .all(|((&c, &x), &y)| y == c as f64 / n as f64 && (c as f64 - x * n as f64).abs() < 1.0 + 1e-9);
        failures += usize::from(!ok);
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
        let d = ratio_drift_check(&s, &alpha, &r.distribution, &values, n).unwrap();
        drift_failures += usize::from(!d.within_bounds());
    }
    outcome(
        failures == 0 && drift_failures == 0,
        format!("{failures} postcondition and {drift_failures} drift failures in 1e4 cases"),
    )
}

fn determinism() -> Outcome {
    let a = table_json(&omega(6, 1, DEFAULT_SEED));
    let b = table_json(&omega(6, 1, DEFAULT_SEED));
    let r2 = omega(6, 2, DEFAULT_SEED);
    let c = table_json(&r2);
    let d = table_json(&omega(6, 2, DEFAULT_SEED));
    let checks = verify_table(&ValueTable::from_json(&c).unwrap()).unwrap();
    let failed = checks.iter().filter(|c| !c.pass).count();
    outcome(
        a == b && c == d && failed == 0,
        format!(
            "identical t=1 {}, identical t=2 {}, {failed} of {} entries fail verify",
            a == b,
            c == d,
            checks.len()
        ),
    )
}

type Check = (u32, &'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let checks: [Check; 12] = [
        (1, "Strassen anchor", strassen, Duration::from_secs(1)),
        (2, "CW first power", cw_first, Duration::from_secs(10)),
        (3, "CW second power", cw_second, Duration::from_secs(120)),
        (4, "CW fourth power", cw_fourth, Duration::from_secs(2 * 30 * 60)),
        (5, "substitute properties", substitutes, Duration::MAX),
        (6, "refined vs classic separation", toy, Duration::MAX),
        (7, "max-entropy product form", product_form, Duration::MAX),
        (8, "random zeroing out", zero_out, Duration::from_secs(60)),
        (9, "progression-free sets", salem_spencer, Duration::MAX),
        (10, "pipeline simulation", pipeline, Duration::from_secs(300)),
        (11, "grid rounding", grid_rounding, Duration::MAX),
        (12, "determinism", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (id, name, run, limit) in checks {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took < limit;
        failed += usize::from(!pass);
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {limit:?})")
        };
        println!(
            "criterion {id:>2} {}: {name}: {}; {:.2?}{budget}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
