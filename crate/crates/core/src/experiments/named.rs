//! The named experiments behind the CLI `experiment` subcommand.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::abbm::{simulate_abbm, slope_estimate, symmetric_pair, CollisionScheme};
use crate::bbm::{simulate_bbm, BBMParams};
use crate::config::{make_configuration, Color, NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::event::{EventKind, Trajectory};
use crate::experiments::{replica_map, InitialSpec};
use crate::martingales::{derivative_martingale, empirical_f, q_statistic};
use crate::rng::{RandomStream, ALGORITHM_ID};
use crate::stats::{median, proportion, sign_test, TestOutcome, DEFAULT_SIGNIFICANCE};

/// Settings shared by every named experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Common {
    pub seed: u64,
    pub replicas: u64,
    pub workers: usize,
    pub horizon: f64,
    pub scheme: CollisionScheme,
    pub population_cap: usize,
}

impl Common {
    pub fn params(&self) -> BBMParams {
        BBMParams {
            population_cap: self.population_cap,
            ..BBMParams::new(self.horizon)
        }
    }

    /// Stream for replica `i` of sub-experiment `block`.
    pub fn stream(&self, block: u64, i: u64) -> RandomStream {
        RandomStream::new(self.seed, (block << 32) | i)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentMeta<'a, T: Serialize> {
    pub experiment: &'a str,
    pub common: &'a Common,
    pub algorithm_id: &'static str,
    pub scheme: &'static str,
    pub dt: Option<f64>,
    pub crate_version: &'static str,
    pub details: T,
}

impl<'a, T: Serialize> ExperimentMeta<'a, T> {
    pub fn new(experiment: &'a str, common: &'a Common, details: T) -> Self {
        Self {
            experiment,
            common,
            algorithm_id: ALGORITHM_ID,
            scheme: common.scheme.name(),
            dt: common.scheme.dt(),
            crate_version: env!("CARGO_PKG_VERSION"),
            details,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoexistenceRow {
    pub a: f64,
    pub horizon: f64,
    pub replicas: u64,
    pub coexisting: u64,
    pub truncated: u64,
    pub frequency: f64,
    pub se: f64,
}

/// Frequency of both types alive at the horizon from `-a, +a`, for each `a`.
/// Truncated replicas are judged on their last snapshot and counted separately.
pub fn coexistence_vs_a(common: &Common, a_values: &[f64]) -> Result<Vec<CoexistenceRow>> {
    let params = common.params().without_events();
    let mut rows = Vec::new();
    for (block, &a) in a_values.iter().enumerate() {
        let init = symmetric_pair(a)?;
        let outcomes = replica_map(common.replicas, common.workers, |i| {
            let mut rng = common.stream(block as u64, i);
            simulate_abbm(&init, &params, common.scheme, &mut rng).map(|t| {
                let last = t.last().expect("trajectory has a snapshot");
                (last.count(NEGATIVE) > 0 && last.count(POSITIVE) > 0, t.truncated)
            })
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let coexisting = outcomes.iter().filter(|o| o.0).count();
        let truncated = outcomes.iter().filter(|o| o.1).count() as u64;
        let (frequency, se) = proportion(coexisting, outcomes.len());
        rows.push(CoexistenceRow {
            a,
            horizon: common.horizon,
            replicas: common.replicas,
            coexisting: coexisting as u64,
            truncated,
            frequency,
            se,
        });
    }
    Ok(rows)
}

pub fn write_coexistence<W: Write>(rows: &[CoexistenceRow], mut w: W) -> Result<()> {
    writeln!(w, "a,T,replicas,coexisting,truncated,frequency,se")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.a, r.horizon, r.replicas, r.coexisting, r.truncated, r.frequency, r.se
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeRow {
    pub replica: u64,
    pub coexisting: bool,
    pub truncated: bool,
    pub slope: f64,
    pub last_quarter: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
    /// Slopes of replicas that coexist at the horizon and were not truncated.
    pub conditioned: Vec<f64>,
    pub excluded: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Two-sided sign test for median zero, when there are conditioned samples.
    pub sign_test: Option<TestOutcome>,
}

pub fn slope_distribution(common: &Common, initial: &InitialSpec) -> Result<SlopeReport> {
    let params = common.params().without_events();
    let rows = replica_map(common.replicas, common.workers, |i| -> Result<SlopeRow> {
        let rng0 = common.stream(0, i);
        let init = initial.build(&rng0)?;
        let mut rng = rng0;
        let traj = simulate_abbm(&init, &params, common.scheme, &mut rng)?;
        let est = slope_estimate(&traj)?;
        Ok(SlopeRow {
            replica: i,
            coexisting: est.coexisting,
            truncated: traj.truncated,
            slope: est.slope,
            last_quarter: est.last_quarter,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let conditioned: Vec<f64> = rows
        .iter()
        .filter(|r| r.coexisting && !r.truncated)
        .map(|r| r.slope)
        .collect();
    let excluded = rows.len() - conditioned.len();
    Ok(SlopeReport {
        median: median(&conditioned),
        min: conditioned.iter().copied().fold(f64::INFINITY, f64::min),
        max: conditioned.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sign_test: sign_test(&conditioned, DEFAULT_SIGNIFICANCE).ok(),
        rows,
        conditioned,
        excluded,
    })
}

pub fn write_slopes<W: Write>(report: &SlopeReport, mut w: W) -> Result<()> {
    writeln!(w, "replica,coexisting,truncated,slope,last_quarter")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.replica, r.coexisting as u8, r.truncated as u8, r.slope, r.last_quarter
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HitRow {
    pub replica: u64,
    pub annihilations: usize,
    /// Negatives removed at the interface.
    pub left_hits: usize,
    /// Positives removed at the interface.
    pub right_hits: usize,
}

/// Hits on the interface from each side, counted from the colors of the
/// particles removed in each annihilation.
pub fn count_hits(traj: &Trajectory) -> Result<(usize, usize, usize)> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::param("trajectory has no snapshots"))?;
    let mut colors: HashMap<u64, Color> = first.particles.iter().map(|p| (p.id, p.color)).collect();
    let (mut n, mut left, mut right) = (0, 0, 0);
    for e in &traj.events {
        match e.kind {
            EventKind::Branch { parent, child } => {
                let c = colors[&parent];
                colors.insert(child, c);
            }
            EventKind::Annihilate { a, b, .. } => {
                n += 1;
                for id in [a, b] {
                    match colors[&id] {
                        c if c == NEGATIVE => left += 1,
                        c if c == POSITIVE => right += 1,
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    Ok((n, left, right))
}

pub fn interface_hits(common: &Common, initial: &InitialSpec) -> Result<Vec<HitRow>> {
    let params = common.params();
    replica_map(common.replicas, common.workers, |i| -> Result<HitRow> {
        let rng0 = common.stream(0, i);
        let init = initial.build(&rng0)?;
        let mut rng = rng0;
        let traj = simulate_abbm(&init, &params, common.scheme, &mut rng)?;
        let (annihilations, left_hits, right_hits) = count_hits(&traj)?;
        Ok(HitRow {
            replica: i,
            annihilations,
            left_hits,
            right_hits,
        })
    })?
    .into_iter()
    .collect()
}

pub fn write_hits<W: Write>(rows: &[HitRow], mut w: W) -> Result<()> {
    writeln!(w, "replica,annihilations,left_hits,right_hits")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.replica, r.annihilations, r.left_hits, r.right_hits)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeRow {
    pub replica: u64,
    pub d_t: f64,
    /// `F_T(x)` on the report grid.
    pub f: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeReport {
    pub xs: Vec<f64>,
    pub rows: Vec<EdgeRow>,
    /// Least-squares fit of `F_T(x) ~ exp(-C D(T) e^{-sqrt2 x})` over replicas and grid.
    pub c_hat: f64,
    pub mean_f: Vec<f64>,
    pub truncated: usize,
}

/// Single-type BBM from the origin: the fraction of time the maximum sits
/// below its centring plus `x`, and the derivative martingale at the horizon.
pub fn edge_statistics(common: &Common, xs: &[f64]) -> Result<EdgeReport> {
    let params = common.params().without_events();
    let init = make_configuration(&[(POSITIVE, 0.0)], 0.0)?;
    let runs = replica_map(common.replicas, common.workers, |i| -> Result<(EdgeRow, bool)> {
        let mut rng = common.stream(0, i);
        let traj = simulate_bbm(&init, &params, &mut rng)?;
        let mut samples = Vec::new();
        for c in traj.snapshots.iter().filter(|c| c.time > 0.0) {
            let m = c.positions().fold(f64::NEG_INFINITY, f64::max);
            samples.push((c.time, q_statistic(m, c.time)?));
        }
        let last = traj.last().expect("trajectory has a snapshot");
        Ok((
            EdgeRow {
                replica: i,
                d_t: derivative_martingale(last),
                f: xs.iter().map(|&x| empirical_f(&samples, x)).collect(),
            },
            traj.truncated,
        ))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let truncated = runs.iter().filter(|r| r.1).count();
    let rows: Vec<EdgeRow> = runs.into_iter().map(|r| r.0).collect();
    let loss = |log_c: f64| {
        let c = log_c.exp();
        rows.iter()
            .map(|r| {
                xs.iter()
                    .zip(&r.f)
                    .map(|(&x, &f)| (f - (-c * r.d_t * (-std::f64::consts::SQRT_2 * x).exp()).exp()).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
    };
    let c_hat = golden_section(loss, -12.0, 12.0, 1e-8).exp();
    let n = rows.len().max(1) as f64;
    let mean_f = (0..xs.len())
        .map(|k| rows.iter().map(|r| r.f[k]).sum::<f64>() / n)
        .collect();
    Ok(EdgeReport {
        xs: xs.to_vec(),
        rows,
        c_hat,
        mean_f,
        truncated,
    })
}

pub fn write_edges<W: Write>(report: &EdgeReport, mut w: W) -> Result<()> {
    write!(w, "replica,D_T")?;
    for x in &report.xs {
        write!(w, ",F_{x}")?;
    }
    writeln!(w, ",fit_at_0")?;
    for r in &report.rows {
        write!(w, "{},{}", r.replica, r.d_t)?;
        for f in &r.f {
            write!(w, ",{f}")?;
        }
        writeln!(w, ",{}", (-report.c_hat * r.d_t).exp())?;
    }
    Ok(())
}

/// Minimiser of a unimodal function on `[lo, hi]`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}
