//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! numbers. Set `ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::process::ExitCode;
use std::time::Instant;

use abbm::abbm::{build_bell_configuration, slope_estimate, symmetric_pair, CollisionScheme};
use abbm::bbm::{simulate_bbm, BBMParams};
use abbm::config::{make_configuration, validate_ordered, Color, NEGATIVE, POSITIVE};
use abbm::couplings::{
    derivative_differences, martingale_differences, projection_count, simulate_conservative, simulate_enhanced,
    sup_t_exp_neg_t, tv_tau, EnhancedOptions,
};
use abbm::crossing::normal_cdf;
use abbm::experiments::{default_workers, replica_map, run_scenario, EngineKind, InitialSpec, Scenario};
use abbm::lattice::{enumerate_discrete_abrw, simulate_abrw, simulate_discrete_abrw, DiscreteRule, LatticeConfig};
use abbm::martingales::{log_additive_martingale, log_truncated_martingale, truncation_gap, ColorFilter};
use abbm::stats::{chi_square_gof, geometric_pmf, mean_se, median, proportion, sign_test};
use abbm::{block_count, simulate_abbm, RandomStream};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn workers() -> usize {
    default_workers()
}

fn martingale_mean() -> Outcome {
    let times = vec![2.0, 4.0, 6.0];
    let lambdas = [0.0, 0.5, 1.0];
    let params = BBMParams::with_times(6.0, times.clone()).without_events();
    let init = make_configuration(&[(POSITIVE, 0.0)], 0.0).unwrap();
    let n = 10_000;
    let values = replica_map(n, workers(), |i| {
        let mut rng = RandomStream::new(101, i);
        let traj = simulate_bbm(&init, &params, &mut rng).unwrap();
        traj.snapshots
            .iter()
            .flat_map(|c| lambdas.map(|l| log_additive_martingale(c, l, ColorFilter::All).exp()))
            .collect::<Vec<f64>>()
    })
    .unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (ti, t) in times.iter().enumerate() {
        for (li, l) in lambdas.iter().enumerate() {
            let col: Vec<f64> = values.iter().map(|v| v[ti * lambdas.len() + li]).collect();
            let (m, se) = mean_se(&col);
            let z = (m - 1.0) / se;
            pass &= z.abs() <= 3.0;
            parts.push(format!("t={t} l={l}: {m:.4} (z={z:+.2})"));
        }
    }
    outcome(pass, parts.join("; "))
}

fn yule_oracle() -> Outcome {
    let p = (-3.0f64).exp();
    let params = BBMParams::with_times(3.0, vec![0.0, 3.0]).without_events();
    let single = make_configuration(&[(POSITIVE, 0.0)], 0.0).unwrap();
    let counts: Vec<u64> = replica_map(100_000, workers(), |i| {
        let mut rng = RandomStream::new(102, i);
        simulate_bbm(&single, &params, &mut rng).unwrap().last().unwrap().len() as u64
    })
    .unwrap();
    let bbm = chi_square_gof(&counts, geometric_pmf(p), 1, 0.01).unwrap();

    let pair = make_configuration(&[(NEGATIVE, -1.0), (POSITIVE, 1.0)], 0.0).unwrap();
    let conservative: Vec<(u64, u64)> = replica_map(20_000, workers(), |i| {
        let mut rng = RandomStream::new(103, i);
        let traj = simulate_conservative(&pair, &params, CollisionScheme::default(), &mut rng).unwrap();
        let last = traj.last().unwrap();
        (projection_count(last, 1) as u64, projection_count(last, -1) as u64)
    })
    .unwrap();
    let plus: Vec<u64> = conservative.iter().map(|c| c.0).collect();
    let minus: Vec<u64> = conservative.iter().map(|c| c.1).collect();
    let cp = chi_square_gof(&plus, geometric_pmf(p), 1, 0.01).unwrap();
    let cm = chi_square_gof(&minus, geometric_pmf(p), 1, 0.01).unwrap();
    let merges = conservative.iter().filter(|c| c.0 + c.1 > 0).count();
    let pass = bbm.outcome.passes() && cp.outcome.passes() && cm.outcome.passes() && merges > 0;
    outcome(
        pass,
        format!(
            "BBM chi2={:.2} dof={} p={:.3}; conservative (+ and neutral) p={:.3}, (- and neutral) p={:.3}",
            bbm.outcome.statistic, bbm.dof, bbm.outcome.p_value, cp.outcome.p_value, cm.outcome.p_value
        ),
    )
}

fn max_speed() -> Outcome {
    let times = vec![4.0, 8.0, 12.0];
    let params = BBMParams::with_times(12.0, times.clone()).without_events();
    let init = make_configuration(&[(POSITIVE, 0.0)], 0.0).unwrap();
    let ratios: Vec<Vec<f64>> = replica_map(1000, workers(), |i| {
        let mut rng = RandomStream::new(104, i);
        let traj = simulate_bbm(&init, &params, &mut rng).unwrap();
        assert!(!traj.truncated);
        traj.snapshots
            .iter()
            .map(|c| c.positions().fold(f64::NEG_INFINITY, f64::max) / c.time)
            .collect()
    })
    .unwrap();
    let means: Vec<(f64, f64)> = (0..times.len())
        .map(|k| mean_se(&ratios.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let increasing = means.windows(2).all(|w| w[1].0 > w[0].0);
    let below = ratios.iter().filter(|r| r[2] <= SQRT_2).count() as f64 / ratios.len() as f64;
    let pass = increasing && below >= 0.95;
    outcome(
        pass,
        format!(
            "mean M/t = {:.4}, {:.4}, {:.4}; fraction M(12)/12 <= sqrt2: {below:.3}",
            means[0].0, means[1].0, means[2].0
        ),
    )
}

fn two_particle() -> Outcome {
    let target = 2.0 * (1.0 - normal_cdf(1.0 / SQRT_2));
    let init = make_configuration(&[(NEGATIVE, -0.5), (POSITIVE, 0.5)], 0.0).unwrap();
    let params = BBMParams::with_times(1.0, vec![0.0, 1.0]).suppressed().without_events();
    let n = 100_000;
    let estimate = |scheme: CollisionScheme, seed: u64| {
        let hits = replica_map(n, workers(), |i| {
            let mut rng = RandomStream::new(seed, i);
            simulate_abbm(&init, &params, scheme, &mut rng)
                .unwrap()
                .last()
                .unwrap()
                .is_empty()
        })
        .unwrap()
        .into_iter()
        .filter(|&h| h)
        .count();
        proportion(hits, n as usize)
    };
    let mut parts = Vec::new();
    let mut last = (0.0, 0.0);
    for (k, dt) in [0.1, 0.01, 0.001].into_iter().enumerate() {
        last = estimate(CollisionScheme::bridge(dt), 105 + k as u64);
        parts.push(format!("dt={dt}: {:.4}", last.0));
    }
    let exact = estimate(CollisionScheme::ExactPair, 108);
    parts.push(format!("exact_pair: {:.4}", exact.0));
    let pass = (last.0 - target).abs() <= 3.0 * last.1 && (exact.0 - target).abs() <= 3.0 * exact.1;
    outcome(pass, format!("target {target:.4}; {}", parts.join(", ")))
}

/// Per-replica facts shared by the coexistence, slope and ordering criteria.
struct PairRun {
    coexisting: bool,
    truncated: bool,
    slope: f64,
    ordered: bool,
    k_monotone: bool,
}

fn pair_runs(a_values: &[f64], replicas: u64, horizon: f64) -> Vec<Vec<PairRun>> {
    let params = BBMParams::new(horizon).without_events();
    a_values
        .iter()
        .enumerate()
        .map(|(block, &a)| {
            let init = symmetric_pair(a).unwrap();
            replica_map(replicas, workers(), |i| {
                let mut rng = RandomStream::new(109, ((block as u64) << 32) | i);
                let traj = simulate_abbm(&init, &params, CollisionScheme::default(), &mut rng).unwrap();
                let est = slope_estimate(&traj).unwrap();
                let ks: Vec<usize> = traj.snapshots.iter().map(block_count).collect();
                PairRun {
                    coexisting: est.coexisting,
                    truncated: traj.truncated,
                    slope: est.slope,
                    ordered: traj.snapshots.iter().all(validate_ordered),
                    k_monotone: ks.windows(2).all(|w| w[1] <= w[0]),
                }
            })
            .unwrap()
        })
        .collect()
}

fn coexistence(a_values: &[f64], runs: &[Vec<PairRun>]) -> Outcome {
    let stats: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| proportion(r.iter().filter(|x| x.coexisting).count(), r.len()))
        .collect();
    let positive = stats.iter().all(|s| s.0 > 0.0);
    let monotone = stats
        .windows(2)
        .all(|w| w[1].0 - w[0].0 >= -1.96 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let truncated: usize = runs.iter().flatten().filter(|x| x.truncated).count();
    let detail = a_values
        .iter()
        .zip(&stats)
        .map(|(a, s)| format!("a={a}: {:.4} +- {:.4}", s.0, 1.96 * s.1))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        positive && monotone,
        format!("{detail}; truncated replicas {truncated}"),
    )
}

fn slopes(runs: &[Vec<PairRun>]) -> Outcome {
    let conditioned: Vec<f64> = runs
        .iter()
        .flatten()
        .filter(|r| r.coexisting && !r.truncated)
        .map(|r| r.slope)
        .collect();
    let bound = SQRT_2 + 0.1;
    let inside = conditioned.iter().all(|s| s.abs() <= bound);
    let (lo, hi) = conditioned
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
    let test = sign_test(&conditioned, 0.01).unwrap();
    outcome(
        inside && test.passes(),
        format!(
            "{} conditioned slopes in [{lo:.3}, {hi:.3}], median {:.4}, sign test p={:.3}",
            conditioned.len(),
            median(&conditioned),
            test.p_value
        ),
    )
}

fn ordering(runs: &[Vec<PairRun>]) -> Outcome {
    let all: Vec<&PairRun> = runs.iter().flatten().collect();
    let order_bad = all.iter().filter(|r| !r.ordered).count();
    let k_bad = all.iter().filter(|r| !r.k_monotone).count();
    outcome(
        order_bad == 0 && k_bad == 0,
        format!(
            "{} replicas: {order_bad} order violations, {k_bad} block-count increases",
            all.len()
        ),
    )
}

fn coupling_identity() -> Outcome {
    let params = BBMParams::new(4.0);
    let runs = 300;
    let results = replica_map(runs, workers(), |i| {
        let init = symmetric_pair(0.25 + (i % 4) as f64 * 0.25).unwrap();
        let mut rng = RandomStream::new(110, i);
        let opts = EnhancedOptions {
            retain_neutrals: i % 2 == 1,
            stop_at_tau2: false,
        };
        let run = simulate_enhanced(&init, &params, CollisionScheme::default(), opts, &mut rng).unwrap();
        let additive = [0.0, 0.5, 1.0, SQRT_2]
            .iter()
            .map(|&l| martingale_differences(&run, l).max_residual())
            .fold(0.0, f64::max);
        let derivative = derivative_differences(&run).max_residual();
        (additive, derivative, run.chi(), run.trajectory.snapshots.len())
    })
    .unwrap();
    let add = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let der = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let points: usize = results.iter().map(|r| r.3).sum();
    let cases = results.iter().filter(|r| r.2 != 0).count();
    outcome(
        add < 1e-9 && der < 1e-9,
        format!("{runs} runs, {points} time points, {cases} with a mark: max residual additive {add:.2e}, derivative {der:.2e}"),
    )
}

fn tv_bound() -> Outcome {
    let exact = sup_t_exp_neg_t() == (-1.0f64).exp();
    let params = BBMParams::new(50.0).without_events();
    let opts = EnhancedOptions {
        retain_neutrals: false,
        stop_at_tau2: true,
    };
    let init = symmetric_pair(0.5).unwrap();
    let pairs = replica_map(100_000, workers(), |i| {
        let mut rng = RandomStream::new(111, i);
        let run = simulate_enhanced(&init, &params, CollisionScheme::default(), opts, &mut rng).unwrap();
        (run.tau1, run.tau2)
    })
    .unwrap();
    let bins = 100;
    let tv = tv_tau(&pairs, bins);
    let infinite = pairs.iter().filter(|p| p.0.is_infinite()).count();
    let bound = (-1.0f64).exp() + 0.02;
    outcome(
        exact && tv.tv <= bound,
        format!(
            "sup t e^-t exact: {exact}; TV = {:.4} ({bins} bins of width {:.3}, {infinite} runs with tau1 = inf), bound {bound:.4}",
            tv.tv, tv.bin_width
        ),
    )
}

fn truncated_martingale() -> Outcome {
    let times = vec![4.0, 7.0, 10.0];
    let params = BBMParams::with_times(10.0, times.clone()).without_events();
    let init = make_configuration(&[(POSITIVE, 0.0)], 0.0).unwrap();
    let (lambda, epsilon) = (0.5, 0.2);
    let gaps: Vec<Vec<f64>> = replica_map(400, workers(), |i| {
        let mut rng = RandomStream::new(112, i);
        let traj = simulate_bbm(&init, &params, &mut rng).unwrap();
        traj.snapshots
            .iter()
            .map(|c| {
                truncation_gap(
                    log_additive_martingale(c, lambda, ColorFilter::All),
                    log_truncated_martingale(c, lambda, epsilon),
                )
            })
            .collect()
    })
    .unwrap();
    let medians: Vec<f64> = (0..times.len())
        .map(|k| median(&gaps.iter().map(|g| g[k]).collect::<Vec<_>>()))
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && medians[2] < 0.05,
        format!(
            "median gap at t=4,7,10: {:.4}, {:.4}, {:.4}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn multi_type() -> Outcome {
    let params = BBMParams::new(8.0).without_events();
    let results = replica_map(2000, workers(), |i| {
        let rng0 = RandomStream::new(113, i);
        let bell = build_bell_configuration(3, 2, 0.1, &mut rng0.split(1)).unwrap();
        let mut rng = rng0;
        let traj = simulate_abbm(&bell.configuration, &params, CollisionScheme::default(), &mut rng).unwrap();
        let last = traj.last().unwrap();
        (
            bell.labels.iter().all(|&l| last.count(Color::Typed(l)) > 0),
            traj.truncated,
        )
    })
    .unwrap();
    let alive = results.iter().filter(|r| r.0).count();
    let truncated = results.iter().filter(|r| r.1).count();
    let (f, se) = proportion(alive, results.len());
    outcome(
        alive > 0,
        format!(
            "all three types alive at T=8: {f:.4} +- {:.4}; truncated {truncated}",
            1.96 * se
        ),
    )
}

fn lattice() -> Outcome {
    let one = |e: &[(i64, Color, u64)]| {
        LatticeConfig::from_entries(1, &e.iter().map(|&(x, c, n)| ((x, 0), c, n)).collect::<Vec<_>>()).unwrap()
    };
    let two = |e: &[((i64, i64), Color, u64)]| LatticeConfig::from_entries(2, e).unwrap();
    let move_only = DiscreteRule::move_only();
    let branching = DiscreteRule {
        branch_probability: 0.3,
    };
    let corpus = [
        (one(&[(0, POSITIVE, 1), (2, NEGATIVE, 1)]), 1, move_only),
        (one(&[(0, POSITIVE, 1), (2, NEGATIVE, 1)]), 2, move_only),
        (one(&[(0, POSITIVE, 1), (1, NEGATIVE, 1)]), 2, branching),
        (one(&[(0, POSITIVE, 1)]), 2, branching),
        (two(&[((0, 0), POSITIVE, 1), ((1, 1), NEGATIVE, 1)]), 1, move_only),
        (two(&[((0, 0), POSITIVE, 1), ((1, 0), NEGATIVE, 1)]), 1, branching),
    ];
    // Every outcome is its own 3 SE comparison, so the corpus is kept to a
    // couple of hundred outcomes at most.
    let n = 20_000u64;
    let mut worst: f64 = 0.0;
    let mut outcomes = 0;
    let mut ok = true;
    let mut pearson = Vec::new();
    for (idx, (start, steps, rule)) in corpus.iter().enumerate() {
        let exact = enumerate_discrete_abrw(start, *steps, *rule).unwrap();
        let mut freq = std::collections::BTreeMap::new();
        let mut rng = RandomStream::new(114, idx as u64);
        for _ in 0..n {
            *freq
                .entry(simulate_discrete_abrw(start, *steps, *rule, &mut rng).unwrap())
                .or_insert(0u64) += 1;
        }
        ok &= freq.keys().all(|k| exact.contains_key(k));
        let mut chi = 0.0;
        for (k, &p) in &exact {
            let f = freq.get(k).copied().unwrap_or(0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let z = if se > 0.0 {
                (f - p).abs() / se
            } else if f == p {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
            outcomes += 1;
            chi += (f - p).powi(2) * n as f64 / p;
        }
        let dof = (exact.len() - 1).max(1) as f64;
        pearson.push(format!("{:.2}", 1.0 - ChiSquared::new(dof).unwrap().cdf(chi)));
    }
    let start = one(&[(-2, NEGATIVE, 1), (2, POSITIVE, 1)]);
    let params = BBMParams::with_times(6.0, vec![0.0, 6.0]);
    let coexist = replica_map(500, workers(), |i| {
        let mut rng = RandomStream::new(115, i);
        simulate_abrw(&start, &params, &mut rng)
            .unwrap()
            .last()
            .unwrap()
            .coexisting()
    })
    .unwrap()
    .into_iter()
    .filter(|&c| c)
    .count();
    let pass = ok && worst <= 3.0 && coexist > 0;
    outcome(
        pass,
        format!(
            "{} instances, {outcomes} outcomes, max |z| = {worst:.2} (Pearson p per instance: {}); 1D coexistence at T=6: {coexist}/500",
            corpus.len(),
            pearson.join(" ")
        ),
    )
}

fn determinism() -> Outcome {
    let s = Scenario {
        name: "determinism".into(),
        engine: EngineKind::Abbm,
        initial: InitialSpec::SymmetricPair { a: 1.0 },
        params: BBMParams::new(5.0),
        scheme: CollisionScheme::default(),
        lambdas: vec![0.5, 1.0],
        replicas: 48,
        master_seed: 116,
        enhanced: EnhancedOptions::default(),
    };
    let csv = |w| {
        let mut out = Vec::new();
        run_scenario(&s, w).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let (a, b) = (csv(1), csv(8));
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let a_values = [0.5, 1.0, 2.0];
    let runs = pair_runs(&a_values, 2000, 8.0);

    let criteria: Vec<Criterion> = vec![
        ("martingale mean conservation", Box::new(martingale_mean)),
        ("Yule oracle", Box::new(yule_oracle)),
        ("max speed", Box::new(max_speed)),
        ("two-particle annihilation oracle", Box::new(two_particle)),
        (
            "coexistence positivity and monotonicity",
            Box::new(|| coexistence(&a_values, &runs)),
        ),
        ("slope support and symmetry", Box::new(|| slopes(&runs))),
        (
            "order preservation and interface monotonicity",
            Box::new(|| ordering(&runs)),
        ),
        ("coupling identity", Box::new(coupling_identity)),
        ("TV bound", Box::new(tv_bound)),
        ("truncated martingale", Box::new(truncated_martingale)),
        ("multi-type survival", Box::new(multi_type)),
        ("lattice enumeration agreement", Box::new(lattice)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let start = Instant::now();
        let o = f();
        failed += !o.pass as usize;
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
