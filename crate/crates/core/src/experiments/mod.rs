//! Scenario files, the replica farm and result files.

pub mod export;
pub mod named;

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abbm::{
    build_bell_configuration, interface, simulate_abbm, slope_estimate, symmetric_pair, two_block_configuration,
    CollisionScheme,
};
use crate::bbm::{max_displacement, simulate_bbm, BBMParams};
use crate::config::{make_configuration, Color, Configuration, NEGATIVE, POSITIVE};
use crate::couplings::{simulate_conservative, simulate_enhanced, EnhancedOptions};
use crate::error::{Error, Result};
use crate::event::Trajectory;
use crate::lattice::{simulate_abrw, LatticeConfig, SiteEntry};
use crate::martingales::{log_additive_martingale, ColorFilter};
use crate::rng::{RandomStream, ALGORITHM_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Bbm,
    Abbm,
    Conservative,
    Enhanced,
    Lattice,
}

impl EngineKind {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Scenario(format!("unknown engine {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Explicit { particles: Vec<(Color, f64)> },
    SymmetricPair { a: f64 },
    Bell { k: u32, m: u32, epsilon: f64 },
    TwoBlock { a: u32, b: u32, n: u32, spread: f64 },
    Lattice { dimension: u8, sites: Vec<SiteEntry> },
}

/// Salt for the stream that places random initial particles, kept apart
/// from the dynamics stream.
const INITIAL_SALT: u64 = 0x1a17_1a11;

impl InitialSpec {
    pub fn build(&self, rng: &RandomStream) -> Result<Configuration> {
        let mut init_rng = rng.split(INITIAL_SALT);
        match self {
            InitialSpec::Explicit { particles } => make_configuration(particles, 0.0),
            InitialSpec::SymmetricPair { a } => symmetric_pair(*a),
            InitialSpec::Bell { k, m, epsilon } => {
                Ok(build_bell_configuration(*k, *m, *epsilon, &mut init_rng)?.configuration)
            }
            InitialSpec::TwoBlock { a, b, n, spread } => two_block_configuration(*a, *b, *n, *spread, &mut init_rng),
            InitialSpec::Lattice { .. } => Err(Error::Scenario("lattice start used with a continuum engine".into())),
        }
    }

    pub fn build_lattice(&self) -> Result<LatticeConfig> {
        let InitialSpec::Lattice { dimension, sites } = self else {
            return Err(Error::Scenario("lattice engine needs a lattice start".into()));
        };
        let entries: Vec<_> = sites
            .iter()
            .map(|s| ((s.x, s.y.unwrap_or(0)), s.color, s.count))
            .collect();
        LatticeConfig::from_entries(*dimension, &entries)
    }
}

fn default_replicas() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub engine: EngineKind,
    pub initial: InitialSpec,
    pub params: BBMParams,
    #[serde(default)]
    pub scheme: CollisionScheme,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub enhanced: EnhancedOptions,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Scenario("replicas must be positive".into()));
        }
        self.params.validate(0.0)?;
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Scenario("lambdas must be finite".into()));
        }
        let lattice_start = matches!(self.initial, InitialSpec::Lattice { .. });
        if lattice_start != (self.engine == EngineKind::Lattice) {
            return Err(Error::Scenario("lattice engine and lattice start go together".into()));
        }
        Ok(())
    }
}

/// Runs `f` on replica indices `0..n` with `workers` threads; results come
/// back in index order whatever the scheduling.
pub fn replica_map<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Summary of one replica; one row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaRow {
    pub replica: u64,
    pub time: f64,
    pub truncated: bool,
    pub terminated_at: Option<f64>,
    pub n: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_neutral: usize,
    pub n_marked: usize,
    pub coexisting: bool,
    pub interface: f64,
    pub blocks: usize,
    pub collisions: usize,
    pub max_position: f64,
    pub slope: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub chi: i32,
    /// `ln W_lambda(T)` for each scenario lambda.
    pub log_w: Vec<f64>,
}

const FIXED_COLUMNS: &str = "replica,time,truncated,terminated_at,n,n_positive,n_negative,n_neutral,n_marked,\
coexisting,interface,blocks,collisions,max_position,slope,tau1,tau2,chi";

impl ReplicaRow {
    fn empty(replica: u64) -> Self {
        Self {
            replica,
            time: 0.0,
            truncated: false,
            terminated_at: None,
            n: 0,
            n_positive: 0,
            n_negative: 0,
            n_neutral: 0,
            n_marked: 0,
            coexisting: false,
            interface: f64::NAN,
            blocks: 0,
            collisions: 0,
            max_position: f64::NEG_INFINITY,
            slope: f64::NAN,
            tau1: f64::NAN,
            tau2: f64::NAN,
            chi: 0,
            log_w: Vec::new(),
        }
    }

    fn from_trajectory(replica: u64, traj: &Trajectory, lambdas: &[f64]) -> Result<Self> {
        let last = traj.last().ok_or_else(|| Error::param("trajectory has no snapshots"))?;
        let state = interface(last);
        let slope = if last.time > 0.0 {
            slope_estimate(traj)?.slope
        } else {
            f64::NAN
        };
        Ok(Self {
            time: last.time,
            truncated: traj.truncated,
            terminated_at: traj.terminated_at,
            n: last.len(),
            n_positive: last.count(POSITIVE),
            n_negative: last.count(NEGATIVE),
            n_neutral: last.particles.iter().filter(|p| p.color.is_neutral()).count(),
            n_marked: last.particles.iter().filter(|p| p.marked).count(),
            coexisting: state.both_alive(),
            interface: state.i,
            blocks: state.k,
            collisions: traj.collision_count(),
            max_position: max_displacement(last),
            slope,
            log_w: lambdas
                .iter()
                .map(|&l| log_additive_martingale(last, l, ColorFilter::All))
                .collect(),
            ..Self::empty(replica)
        })
    }

    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.replica,
            self.time,
            self.truncated as u8,
            opt(self.terminated_at),
            self.n,
            self.n_positive,
            self.n_negative,
            self.n_neutral,
            self.n_marked,
            self.coexisting as u8,
            self.interface,
            self.blocks,
            self.collisions,
            self.max_position,
            self.slope,
            self.tau1,
            self.tau2,
            self.chi
        );
        for w in &self.log_w {
            s.push(',');
            s.push_str(&w.to_string());
        }
        s
    }
}

/// Runs one replica of a scenario on its own stream.
pub fn run_replica(s: &Scenario, replica: u64) -> Result<ReplicaRow> {
    let mut rng = RandomStream::new(s.master_seed, replica);
    if s.engine == EngineKind::Lattice {
        let init = s.initial.build_lattice()?;
        let traj = simulate_abrw(&init, &s.params, &mut rng)?;
        let last = traj.last().cloned().unwrap_or(init);
        let (pos, neg) = (last.count(POSITIVE) as usize, last.count(NEGATIVE) as usize);
        return Ok(ReplicaRow {
            time: traj.times.last().copied().unwrap_or(0.0),
            truncated: traj.truncated,
            n: pos + neg,
            n_positive: pos,
            n_negative: neg,
            coexisting: last.coexisting(),
            ..ReplicaRow::empty(replica)
        });
    }
    let init = s.initial.build(&rng)?;
    match s.engine {
        EngineKind::Bbm => ReplicaRow::from_trajectory(replica, &simulate_bbm(&init, &s.params, &mut rng)?, &s.lambdas),
        EngineKind::Abbm => ReplicaRow::from_trajectory(
            replica,
            &simulate_abbm(&init, &s.params, s.scheme, &mut rng)?,
            &s.lambdas,
        ),
        EngineKind::Conservative => ReplicaRow::from_trajectory(
            replica,
            &simulate_conservative(&init, &s.params, s.scheme, &mut rng)?,
            &s.lambdas,
        ),
        EngineKind::Enhanced => {
            let run = simulate_enhanced(&init, &s.params, s.scheme, s.enhanced, &mut rng)?;
            Ok(ReplicaRow {
                tau1: run.tau1,
                tau2: run.tau2,
                chi: run.chi(),
                ..ReplicaRow::from_trajectory(replica, &run.trajectory, &s.lambdas)?
            })
        }
        EngineKind::Lattice => unreachable!("handled above"),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub algorithm_id: &'static str,
    pub scheme: &'static str,
    pub dt: Option<f64>,
    pub replicas: u64,
    pub truncated_replicas: u64,
    pub crate_version: &'static str,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<ReplicaRow>,
    pub meta: Meta,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = FIXED_COLUMNS.to_string();
        for l in &self.meta.scenario.lambdas {
            header.push_str(&format!(",log_W_{l}"));
        }
        writeln!(w, "{header}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    /// Writes `results.csv` and `meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(std::io::BufWriter::new(fs::File::create(dir.join("results.csv"))?))?;
        write_meta(dir, &self.meta)
    }
}

pub fn write_meta<T: Serialize>(dir: &Path, meta: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn run_scenario(s: &Scenario, workers: usize) -> Result<ExperimentResult> {
    s.validate()?;
    let rows = replica_map(s.replicas, workers, |i| run_replica(s, i))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let truncated_replicas = rows.iter().filter(|r| r.truncated).count() as u64;
    Ok(ExperimentResult {
        meta: Meta {
            scenario: s.clone(),
            master_seed: s.master_seed,
            algorithm_id: ALGORITHM_ID,
            scheme: s.scheme.name(),
            dt: s.scheme.dt(),
            replicas: s.replicas,
            truncated_replicas,
            crate_version: env!("CARGO_PKG_VERSION"),
        },
        rows,
    })
}
