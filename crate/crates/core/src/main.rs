use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use abbm::abbm::DEFAULT_DT;
use abbm::bbm::BBMParams;
use abbm::config::{NEGATIVE, POSITIVE};
use abbm::couplings::{derivative_differences, martingale_differences, simulate_enhanced, sup_t_exp_neg_t};
use abbm::crossing::normal_cdf;
use abbm::experiments::export::{export_interface, export_lattice, export_spacetime};
use abbm::experiments::named::{self, Common, ExperimentMeta};
use abbm::experiments::{default_workers, run_scenario, write_meta, EngineKind, InitialSpec, Scenario};
use abbm::lattice::{enumerate_discrete_abrw, simulate_abrw, DiscreteRule, LatticeConfig};
use abbm::martingales::{MartingaleTrace, DEFAULT_WINDOW_EPSILON};
use abbm::{simulate_abbm, simulate_bbm, CollisionScheme, Error, RandomStream, Result, Trajectory};

#[derive(Parser)]
#[command(name = "abbm", version, about = "Annihilating branching Brownian motion laboratory")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Defaults to the number of available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// `bridge`, `bridge:<dt>` or `exact_pair`.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

impl CommonArgs {
    fn scheme(&self) -> Result<CollisionScheme> {
        let dt = self.dt.unwrap_or(DEFAULT_DT);
        match &self.scheme {
            Some(s) => CollisionScheme::parse(s, dt),
            None => Ok(CollisionScheme::bridge(dt)),
        }
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }

    fn named(&self, replicas: u64, horizon: f64) -> Result<Common> {
        Ok(Common {
            seed: self.seed,
            replicas: self.replicas.unwrap_or(replicas),
            workers: self.workers(),
            horizon: self.horizon.unwrap_or(horizon),
            scheme: self.scheme()?,
            population_cap: abbm::bbm::DEFAULT_POPULATION_CAP,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write results.csv and meta.json.
    Simulate {
        /// Scenario JSON file; without it a symmetric ABBM pair is run.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "abbm")]
        engine: String,
        /// Half-distance of the default symmetric pair.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Lambdas whose additive martingale is reported.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
    /// Run a named experiment.
    Experiment {
        name: ExperimentName,
        /// Pair half-distances for coexistence_vs_a, or the pair for other experiments.
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
        /// Start from the two-block configuration `a_count,b_count,n`.
        #[arg(long, value_delimiter = ',')]
        two_block: Vec<u32>,
    },
    /// Print closed-form and enumeration checks.
    Oracle,
    /// Export one replica for plotting.
    Export {
        kind: ExportKind,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        replica: u64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ExperimentName {
    CoexistenceVsA,
    SlopeDistribution,
    InterfaceHits,
    EdgeStatistics,
    ExportSpacetime,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ExportKind {
    Spacetime,
    Interface,
    Events,
    Martingale,
    Ztrace,
    Lattice,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn default_scenario(args: &CommonArgs, engine: &str, a: f64, lambdas: Vec<f64>) -> Result<Scenario> {
    let engine = EngineKind::parse(engine)?;
    let initial = match engine {
        EngineKind::Lattice => InitialSpec::Lattice {
            dimension: 1,
            sites: vec![
                abbm::lattice::SiteEntry {
                    x: -2,
                    y: None,
                    color: NEGATIVE,
                    count: 1,
                },
                abbm::lattice::SiteEntry {
                    x: 2,
                    y: None,
                    color: POSITIVE,
                    count: 1,
                },
            ],
        },
        EngineKind::Bbm => InitialSpec::Explicit {
            particles: vec![(POSITIVE, 0.0)],
        },
        _ => InitialSpec::SymmetricPair { a },
    };
    Ok(Scenario {
        name: "default".into(),
        engine,
        initial,
        params: BBMParams::new(args.horizon.unwrap_or(4.0)),
        scheme: args.scheme()?,
        lambdas,
        replicas: args.replicas.unwrap_or(1),
        master_seed: args.seed,
        enhanced: Default::default(),
    })
}

fn load_scenario(args: &CommonArgs, path: &Path) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    s.master_seed = args.seed;
    if let Some(r) = args.replicas {
        s.replicas = r;
    }
    if let Some(h) = args.horizon {
        s.params = BBMParams {
            population_cap: s.params.population_cap,
            ..BBMParams::new(h)
        };
    }
    if args.scheme.is_some() || args.dt.is_some() {
        s.scheme = args.scheme()?;
    }
    s.validate()?;
    Ok(s)
}

fn single_trajectory(s: &Scenario, replica: u64) -> Result<Trajectory> {
    let mut rng = RandomStream::new(s.master_seed, replica);
    let init = s.initial.build(&rng)?;
    match s.engine {
        EngineKind::Bbm => simulate_bbm(&init, &s.params, &mut rng),
        EngineKind::Abbm => simulate_abbm(&init, &s.params, s.scheme, &mut rng),
        EngineKind::Conservative => abbm::couplings::simulate_conservative(&init, &s.params, s.scheme, &mut rng),
        EngineKind::Enhanced => Ok(simulate_enhanced(&init, &s.params, s.scheme, s.enhanced, &mut rng)?.trajectory),
        EngineKind::Lattice => Err(Error::Scenario("use `export lattice` for lattice scenarios".into())),
    }
}

fn pair_or_blocks(a: &[f64], two_block: &[u32]) -> Result<InitialSpec> {
    match two_block {
        [] => Ok(InitialSpec::SymmetricPair {
            a: a.first().copied().unwrap_or(1.0),
        }),
        &[a, b, n] => Ok(InitialSpec::TwoBlock { a, b, n, spread: 0.5 }),
        _ => Err(Error::InvalidParameter("--two-block takes a_count,b_count,n".into())),
    }
}

fn experiment(args: &CommonArgs, name: ExperimentName, a: &[f64], two_block: &[u32]) -> Result<()> {
    let out = &args.out;
    match name {
        ExperimentName::CoexistenceVsA => {
            let common = args.named(2000, 8.0)?;
            let a_values = if a.is_empty() { vec![0.5, 1.0, 2.0] } else { a.to_vec() };
            let rows = named::coexistence_vs_a(&common, &a_values)?;
            named::write_coexistence(&rows, create(out, "results.csv")?)?;
            for r in &rows {
                println!(
                    "a={} coexistence={:.4} se={:.4} truncated={}",
                    r.a, r.frequency, r.se, r.truncated
                );
            }
            write_meta(out, &ExperimentMeta::new("coexistence_vs_a", &common, &a_values))
        }
        ExperimentName::SlopeDistribution => {
            let common = args.named(2000, 8.0)?;
            let initial = pair_or_blocks(a, two_block)?;
            let report = named::slope_distribution(&common, &initial)?;
            named::write_slopes(&report, create(out, "results.csv")?)?;
            println!(
                "conditioned={} excluded={} median={:.4} min={:.4} max={:.4}",
                report.conditioned.len(),
                report.excluded,
                report.median,
                report.min,
                report.max
            );
            if let Some(t) = report.sign_test {
                println!("sign test p={:.4}", t.p_value);
            }
            let details = serde_json::json!({ "initial": initial, "sign_test": report.sign_test,
                "median": report.median, "excluded": report.excluded });
            write_meta(out, &ExperimentMeta::new("slope_distribution", &common, details))
        }
        ExperimentName::InterfaceHits => {
            let common = args.named(100, 6.0)?;
            let initial = pair_or_blocks(a, two_block)?;
            let rows = named::interface_hits(&common, &initial)?;
            named::write_hits(&rows, create(out, "results.csv")?)?;
            let balanced = rows
                .iter()
                .all(|r| r.left_hits == r.annihilations && r.right_hits == r.annihilations);
            let total: usize = rows.iter().map(|r| r.annihilations).sum();
            println!("runs={} annihilations={} balanced={}", rows.len(), total, balanced);
            write_meta(out, &ExperimentMeta::new("interface_hits", &common, &initial))
        }
        ExperimentName::EdgeStatistics => {
            let common = args.named(200, 8.0)?;
            let xs: Vec<f64> = (-12..=12).map(|k| k as f64 * 0.25).collect();
            let report = named::edge_statistics(&common, &xs)?;
            named::write_edges(&report, create(out, "results.csv")?)?;
            println!("C_hat={:.6} truncated={}", report.c_hat, report.truncated);
            let details = serde_json::json!({ "xs": xs, "c_hat": report.c_hat, "mean_f": report.mean_f });
            write_meta(out, &ExperimentMeta::new("edge_statistics", &common, details))
        }
        ExperimentName::ExportSpacetime => {
            let common = args.named(1, 6.0)?;
            let initial = pair_or_blocks(a, two_block)?;
            let rng0 = common.stream(0, 0);
            let init = initial.build(&rng0)?;
            let mut rng = rng0;
            let traj = simulate_abbm(&init, &common.params(), common.scheme, &mut rng)?;
            let rows = export_spacetime(&traj, create(out, "spacetime.csv")?)?;
            export_interface(&traj, create(out, "interface.csv")?)?;
            println!("spacetime rows={rows}");
            write_meta(out, &ExperimentMeta::new("export_spacetime", &common, &initial))
        }
    }
}

fn oracle() -> Result<()> {
    let pair = 2.0 * (1.0 - normal_cdf(1.0 / 2f64.sqrt()));
    println!("two-particle annihilation, gap 1, horizon 1: {pair:.6}");
    println!("sup t e^-t: {:.6}", sup_t_exp_neg_t());
    for k in 1..=5u32 {
        let p = (-3f64).exp() * (1.0 - (-3f64).exp()).powi(k as i32 - 1);
        println!("P(N(3) = {k}) = {p:.6}");
    }
    let start = LatticeConfig::from_entries(1, &[((0, 0), POSITIVE, 1), ((2, 0), NEGATIVE, 1)])?;
    for steps in 0..=2 {
        let dist = enumerate_discrete_abrw(&start, steps, DiscreteRule::move_only())?;
        let empty = dist.get(&LatticeConfig::new(1)?).copied().unwrap_or(0.0);
        println!(
            "lattice (+0, -2) move-only, {steps} steps: {} outcomes, P(empty) = {empty}",
            dist.len()
        );
    }
    Ok(())
}

fn export(args: &CommonArgs, kind: ExportKind, scenario: Option<&Path>, replica: u64, lambda: f64) -> Result<()> {
    let out = &args.out;
    let s = match scenario {
        Some(p) => load_scenario(args, p)?,
        None if matches!(kind, ExportKind::Lattice) => default_scenario(args, "lattice", 1.0, vec![])?,
        None if matches!(kind, ExportKind::Ztrace) => default_scenario(args, "enhanced", 1.0, vec![])?,
        None if matches!(kind, ExportKind::Martingale) => default_scenario(args, "bbm", 1.0, vec![])?,
        None => default_scenario(args, "abbm", 1.0, vec![])?,
    };
    match kind {
        ExportKind::Spacetime => {
            let rows = export_spacetime(&single_trajectory(&s, replica)?, create(out, "spacetime.csv")?)?;
            println!("spacetime rows={rows}");
        }
        ExportKind::Interface => export_interface(&single_trajectory(&s, replica)?, create(out, "interface.csv")?)?,
        ExportKind::Events => single_trajectory(&s, replica)?.write_events_csv(create(out, "events.csv")?)?,
        ExportKind::Martingale => {
            let trace =
                MartingaleTrace::from_trajectory(&single_trajectory(&s, replica)?, lambda, DEFAULT_WINDOW_EPSILON);
            trace.write_csv(create(out, "martingale.csv")?)?;
        }
        ExportKind::Ztrace => {
            if s.engine != EngineKind::Enhanced {
                return Err(Error::Scenario("ztrace needs the enhanced engine".into()));
            }
            let mut rng = RandomStream::new(s.master_seed, replica);
            let init = s.initial.build(&rng)?;
            let run = simulate_enhanced(&init, &s.params, s.scheme, s.enhanced, &mut rng)?;
            martingale_differences(&run, lambda).write_csv(create(out, "ztrace.csv")?)?;
            derivative_differences(&run).write_csv(create(out, "ztrace_derivative.csv")?)?;
        }
        ExportKind::Lattice => {
            let mut rng = RandomStream::new(s.master_seed, replica);
            let traj = simulate_abrw(&s.initial.build_lattice()?, &s.params, &mut rng)?;
            export_lattice(&traj, create(out, "lattice.json")?)?;
        }
    }
    write_meta(
        out,
        &serde_json::json!({ "export": kind.to_possible_value().map(|v| v.get_name().to_string()), "replica": replica,
        "lambda": lambda, "scenario": s, "algorithm_id": abbm::ALGORITHM_ID }),
    )
}

fn run(cli: Cli) -> Result<()> {
    let args = &cli.common;
    match cli.command {
        Command::Simulate {
            scenario,
            engine,
            a,
            lambda,
        } => {
            let s = match scenario {
                Some(p) => load_scenario(args, &p)?,
                None => default_scenario(args, &engine, a, lambda)?,
            };
            let result = run_scenario(&s, args.workers())?;
            result.write(&args.out)?;
            println!("{} replicas written to {}", result.rows.len(), args.out.display());
            Ok(())
        }
        Command::Experiment { name, a, two_block } => experiment(args, name, &a, &two_block),
        Command::Oracle => oracle(),
        Command::Export {
            kind,
            scenario,
            replica,
            lambda,
        } => export(args, kind, scenario.as_deref(), replica, lambda),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
