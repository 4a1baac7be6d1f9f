//! `simulate` subcommands: each seed runs on its own, results are collected
//! in seed order so the output does not depend on scheduling.

use std::time::Instant;

use anyhow::Result;
use clap::{Subcommand, ValueEnum};
use laserlab_core::construction_sim::behrend::practical_floor;
use laserlab_core::construction_sim::hard::is_free;
use laserlab_core::construction_sim::pipeline::{cw_default_counts, DEFAULT_TRIPLE_CAP};
use laserlab_core::construction_sim::{
    behrend_set, free_hard_instance, greedy_hard_instance, is_progression_free, random_zero_out, BlockSupport,
    GreedyOptions, HardInstanceStats, PipelineSetup, PipelineStats,
};
use laserlab_core::distributions::{round_to_grid, SupportDistribution};
use laserlab_core::solver::DEFAULT_SEED;
use laserlab_core::tensor_core::{build_cw, Support};
use rayon::prelude::*;
use serde::Serialize;

use crate::{config_error, failure, Format, GlobalOpts};

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Progression-free set in Z_M.
    Behrend {
        #[arg(long = "M", id = "modulus")]
        modulus: u64,
    },
    /// Random zeroing out of random block supports.
    ZeroOut {
        #[arg(long)]
        n: usize,
        /// Off-diagonal triples per block.
        #[arg(long)]
        m: f64,
        /// Number of seeds.
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        /// First seed; run k uses `seed + k`.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Trials per run; the best one is kept.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Supports on which random zeroing out cannot do much better.
    HardInstance {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, value_enum, default_value_t = HardKind::Greedy)]
        kind: HardKind,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Training subsets per size for the greedy construction.
        #[arg(long, default_value_t = 2_000)]
        samples: usize,
    },
    /// Hashing, pruning and zeroing out on CW_q at block level.
    Pipeline {
        #[arg(long)]
        q: u32,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 500)]
        seeds: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Distribution on the six CW block triples; defaults to mass on
        /// (0,0,2) and (1,0,1) with counts n/6 and 5n/6.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Cap on enumerated block triples.
        #[arg(long, default_value_t = DEFAULT_TRIPLE_CAP)]
        cap: u128,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HardKind {
    Greedy,
    Free,
}

/// Mean and standard error of the mean.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn json_lines<T: Serialize>(runs: &[T], summary: &impl Serialize) -> Result<String> {
    let mut s = String::new();
    for r in runs {
        s += &serde_json::to_string(r)?;
        s.push('\n');
    }
    s += &serde_json::to_string(&serde_json::json!({ "summary": summary }))?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct Statistic {
    statistic: &'static str,
    runs: usize,
    mean: f64,
    stderr: f64,
    expected: Option<f64>,
    /// `(mean - expected) / stderr`.
    z: Option<f64>,
}

impl Statistic {
    fn new(statistic: &'static str, xs: &[f64], expected: Option<f64>) -> Statistic {
        let (mean, stderr) = mean_se(xs);
        let z = expected.map(|e| if stderr > 0.0 { (mean - e) / stderr } else { 0.0 });
        Statistic {
            statistic,
            runs: xs.len(),
            mean,
            stderr,
            expected,
            z,
        }
    }
}

fn stats_csv(rows: &[Statistic]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn seeds_of(seed: u64, count: u64) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(config_error("need at least one seed"));
    }
    Ok((0..count).map(|k| seed.wrapping_add(k)).collect())
}

pub fn run(g: &GlobalOpts, cmd: &SimulateCommand) -> Result<String> {
    match cmd {
        SimulateCommand::Behrend { modulus } => behrend(g, *modulus),
        SimulateCommand::ZeroOut {
            n,
            m,
            seeds,
            seed,
            trials,
        } => zero_out(g, *n, *m, &seeds_of(*seed, *seeds)?, *trials),
        SimulateCommand::HardInstance {
            n,
            m,
            kind,
            seeds,
            seed,
            samples,
        } => hard_instance(g, *n, *m, *kind, &seeds_of(*seed, *seeds)?, *samples),
        SimulateCommand::Pipeline {
            q,
            n,
            seeds,
            seed,
            alpha,
            cap,
        } => pipeline(g, *q, *n, &seeds_of(*seed, *seeds)?, alpha.as_deref(), *cap),
    }
}

#[derive(Serialize)]
struct BehrendRecord {
    modulus: u64,
    size: usize,
    practical_floor: usize,
    progression_free: bool,
    elements: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

fn behrend(g: &GlobalOpts, modulus: u64) -> Result<String> {
    if modulus == 0 {
        return Err(config_error("M must be at least 1"));
    }
    let started = Instant::now();
    let set = behrend_set(modulus)?;
    let rec = BehrendRecord {
        modulus,
        size: set.len(),
        practical_floor: practical_floor(modulus),
        progression_free: is_progression_free(&set),
        elements: set.elements.clone(),
        wall_time_ms: g.timing.then(|| started.elapsed().as_millis() as u64),
    };
    let out = match g.format {
        Format::Json => serde_json::to_string(&rec)? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["modulus", "size", "practical_floor", "progression_free"])?;
            w.write_record([
                rec.modulus.to_string(),
                rec.size.to_string(),
                rec.practical_floor.to_string(),
                rec.progression_free.to_string(),
            ])?;
            String::from_utf8(w.into_inner()?)?
        }
        Format::Text => format!(
            "M = {}: |A| = {} (M^0.6 = {}), progression-free: {}\n{:?}\n",
            rec.modulus,
            rec.size,
            rec.practical_floor,
            if rec.progression_free { "yes" } else { "NO" },
            rec.elements
        ),
    };
    if !rec.progression_free {
        print!("{out}");
        return Err(failure(3, "emitted set contains a progression"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ZeroOutRecord {
    seed: u64,
    n: usize,
    m: f64,
    triples: usize,
    p: f64,
    kept: usize,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

fn zero_out(g: &GlobalOpts, n: usize, m: f64, seeds: &[u64], trials: usize) -> Result<String> {
    if n < 3 || !(m > 0.0) || trials == 0 {
        return Err(config_error("need n >= 3, m > 0 and at least one trial"));
    }
    let records = seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let bs = BlockSupport::random(n, m, seed)?;
            let r = random_zero_out(&bs, trials, seed ^ 0x9e37_79b9_7f4a_7c15)?;
            Ok(ZeroOutRecord {
                seed,
                n,
                m,
                triples: bs.off_diag.len(),
                p: r.p,
                kept: r.kept.len(),
                valid: bs.is_diagonal_on(&r.kept),
                wall_time_ms: g.timing.then(|| started.elapsed().as_millis() as u64),
            })
        })
        .collect::<laserlab_core::Result<Vec<_>>>()?;
    let kept: Vec<f64> = records.iter().map(|r| r.kept as f64).collect();
    let floor = 2.0 * n as f64 / (3.0 * (3.0 * m.max(1.0)).sqrt());
    let stat = Statistic::new("kept", &kept, Some(floor));
    let all_valid = records.iter().all(|r| r.valid);
    let out = match g.format {
        Format::Json => json_lines(
            &records,
            &serde_json::json!({ "kept": &stat, "bound": floor, "all_valid": all_valid, "trials": trials }),
        )?,
        Format::Csv => stats_csv(&[stat])?,
        Format::Text => format!(
            "n = {n}, m = {m}, {} seeds, best of {trials}: mean |I| = {:.3} +/- {:.3}\n\
             bound 2n/(3 sqrt(3m)) = {:.3}; mean - 3 se {} the bound\n\
             every output valid: {}\n",
            records.len(),
            stat.mean,
            stat.stderr,
            floor,
            if stat.mean + 3.0 * stat.stderr >= floor {
                "reaches"
            } else {
                "misses"
            },
            if all_valid { "yes" } else { "NO" }
        ),
    };
    if !all_valid {
        print!("{out}");
        return Err(failure(3, "a zeroing out left an off-diagonal triple"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct HardRecord {
    seed: u64,
    kind: HardKind,
    #[serde(flatten)]
    stats: HardInstanceStats,
    free: bool,
    zero_out_kept: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

fn hard_instance(g: &GlobalOpts, n: usize, m: usize, kind: HardKind, seeds: &[u64], samples: usize) -> Result<String> {
    let opts = GreedyOptions {
        samples,
        ..GreedyOptions::default()
    };
    let records = seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let (bs, stats) = match kind {
                HardKind::Greedy => greedy_hard_instance(n, m, seed, &opts)?,
                HardKind::Free => {
                    let (bs, f) = free_hard_instance(n, m, seed, &opts)?;
                    (bs, f.hard)
                }
            };
            let z = random_zero_out(&bs, 1, seed)?;
            Ok(HardRecord {
                seed,
                kind,
                free: is_free(&bs),
                zero_out_kept: z.kept.len(),
                stats,
                wall_time_ms: g.timing.then(|| started.elapsed().as_millis() as u64),
            })
        })
        .collect::<laserlab_core::Result<Vec<_>>>()?;
    Ok(match g.format {
        Format::Json => records
            .iter()
            .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
            .collect::<serde_json::Result<String>>()?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "seed",
                "kind",
                "n",
                "m",
                "triples",
                "s_natural_log",
                "s_log2",
                "s_target",
                "s_effective",
                "coverage_at_target",
                "free",
                "zero_out_kept",
            ])?;
            for r in &records {
                w.write_record([
                    r.seed.to_string(),
                    format!("{:?}", r.kind).to_lowercase(),
                    r.stats.n.to_string(),
                    r.stats.m.to_string(),
                    r.stats.triples.to_string(),
                    r.stats.s_natural_log.to_string(),
                    r.stats.s_log2.to_string(),
                    r.stats.s_target.to_string(),
                    r.stats.s_effective.to_string(),
                    r.stats.coverage_at_target.to_string(),
                    r.free.to_string(),
                    r.zero_out_kept.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
        Format::Text => records
            .iter()
            .map(|r| {
                let mut s = format!(
                    "seed {}: {} triples (budget {}), s_target = {} with coverage {:.3}, \
                     s_effective = {}, n ln n/sqrt m = {:.1}, n log2 n/sqrt m = {:.1}, free: {}, \
                     zero-out kept {}\n",
                    r.seed,
                    r.stats.triples,
                    r.stats.m * r.stats.n,
                    r.stats.s_target,
                    r.stats.coverage_at_target,
                    r.stats.s_effective,
                    r.stats.s_natural_log,
                    r.stats.s_log2,
                    r.free,
                    r.zero_out_kept
                );
                for w in &r.stats.warnings {
                    s += &format!("  warning: {w}\n");
                }
                s
            })
            .collect(),
    })
}

fn pipeline(g: &GlobalOpts, q: u32, n: u64, seeds: &[u64], alpha: Option<&[f64]>, cap: u128) -> Result<String> {
    if q == 0 || n == 0 {
        return Err(config_error("need q >= 1 and n >= 1"));
    }
    let support = Support::new(build_cw(q as usize).block_support().into_iter().collect())?;
    let counts = match alpha {
        None => {
            if !n.is_multiple_of(6) {
                return Err(config_error(
                    "the default distribution needs n divisible by 6; pass --alpha",
                ));
            }
            cw_default_counts(n)?
        }
        Some(a) => {
            let dist = SupportDistribution::new(&support, a.to_vec())?;
            round_to_grid(&support, &dist, n)?.counts
        }
    };
    let setup = PipelineSetup::new(q, &support, &counts, cap)?;
    let mut runs: Vec<PipelineStats> = seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let mut s = setup.run(seed)?;
            s.wall_time_ms = g.timing.then(|| started.elapsed().as_millis() as u64);
            Ok(s)
        })
        .collect::<laserlab_core::Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);
    let col = |f: fn(&PipelineStats) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let stats = vec![
        Statistic::new("c1", &col(|r| r.c1 as f64), Some(setup.expected_c1())),
        Statistic::new("c2", &col(|r| r.c2 as f64), None),
        Statistic::new("c3", &col(|r| r.c3 as f64), Some(setup.expected_c3())),
        Statistic::new("c1_prime", &col(|r| r.c1_prime as f64), None),
        Statistic::new("l", &col(|r| r.l as f64), None),
    ];
    let violations: u64 = runs.iter().map(|r| r.linearity_violations).sum();
    let disjoint = runs.iter().all(|r| r.block_disjoint);
    let l_ok = runs.iter().all(|r| r.l_bound_holds());
    let out = match g.format {
        Format::Json => json_lines(
            &runs,
            &serde_json::json!({
                "statistics": &stats,
                "modulus": setup.modulus(),
                "set_size": setup.set().len(),
                "n_b": setup.n_b,
                "n_alpha": setup.n_alpha,
                "n_t": setup.n_t,
                "linearity_violations": violations,
                "block_disjoint": disjoint,
                "l_bound_holds": l_ok,
            }),
        )?,
        Format::Csv => stats_csv(&stats)?,
        Format::Text => {
            let mut s = format!(
                "q = {q}, n = {n}, {} seeds: N_B = {}, N_alpha = {}, N_T = {}, M = {}, |A| = {}\n",
                runs.len(),
                setup.n_b,
                setup.n_alpha,
                setup.n_t,
                setup.modulus(),
                setup.set().len()
            );
            s += "statistic        mean     stderr   expected        z\n";
            for st in &stats {
                s += &format!(
                    "{:<10} {:>10.4} {:>10.4} {:>10} {:>8}\n",
                    st.statistic,
                    st.mean,
                    st.stderr,
                    st.expected.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into()),
                    st.z.map(|z| format!("{z:.2}")).unwrap_or_else(|| "-".into())
                );
            }
            s += &format!(
                "hash linearity violations: {violations}; blocks disjoint in every run: {}; L floor holds: {}\n",
                if disjoint { "yes" } else { "NO" },
                if l_ok { "yes" } else { "NO" }
            );
            s
        }
    };
    if violations > 0 || !disjoint {
        print!("{out}");
        return Err(failure(3, "pipeline invariant violated"));
    }
    Ok(out)
}
