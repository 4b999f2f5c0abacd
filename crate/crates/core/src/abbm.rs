//! Annihilating branching Brownian motion, interface statistics and the
//! standard initial configurations.

use serde::{Deserialize, Serialize};

use crate::bbm::BBMParams;
use crate::config::{make_configuration, trivial_position, Color, Configuration, Particle, NEGATIVE, POSITIVE};
use crate::crossing::{bridge_crossing_probability, sample_first_passage, GAP_VARIANCE};
use crate::engine::{self, Dynamics, Kind, Reaction};
use crate::error::{Error, Result};
use crate::event::{Event, EventKind, Trajectory};
use crate::rng::RandomStream;

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionScheme {
    /// Substeps of length at most `dt` with Brownian-bridge crossing tests.
    Bridge { dt: f64 },
    /// Exact first-passage sampling; two particles, no branching.
    ExactPair,
}

impl Default for CollisionScheme {
    fn default() -> Self {
        CollisionScheme::Bridge { dt: DEFAULT_DT }
    }
}

impl CollisionScheme {
    pub fn bridge(dt: f64) -> Self {
        CollisionScheme::Bridge { dt }
    }

    pub fn dt(&self) -> Option<f64> {
        match *self {
            CollisionScheme::Bridge { dt } => Some(dt),
            CollisionScheme::ExactPair => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CollisionScheme::Bridge { .. } => "bridge",
            CollisionScheme::ExactPair => "exact_pair",
        }
    }

    /// Parses `bridge`, `bridge:<dt>` or `exact_pair`.
    pub fn parse(s: &str, default_dt: f64) -> Result<Self> {
        match s.split_once(':') {
            None if s == "bridge" => Ok(Self::bridge(default_dt)),
            None if s == "exact_pair" => Ok(CollisionScheme::ExactPair),
            Some(("bridge", dt)) => dt
                .parse()
                .map(Self::bridge)
                .map_err(|_| Error::param(format!("bad dt in scheme {s:?}"))),
            _ => Err(Error::param(format!("unknown collision scheme {s:?}"))),
        }
    }

    pub(crate) fn bridge_dt(&self) -> Result<f64> {
        match *self {
            CollisionScheme::Bridge { dt } if dt > 0.0 && dt.is_finite() => Ok(dt),
            CollisionScheme::Bridge { dt } => Err(Error::param(format!("dt must be positive, got {dt}"))),
            CollisionScheme::ExactPair => Err(Error::InadmissibleScheme(
                "exact_pair only supports two-particle systems without branching".into(),
            )),
        }
    }
}

/// Typed particles of distinct labels annihilate; everything else is inert.
struct Annihilation;

impl Dynamics for Annihilation {
    fn interacts(&self, a: Kind, b: Kind) -> bool {
        a.0.is_typed() && b.0.is_typed() && a.0 != b.0
    }
    fn react(&mut self, _: Kind, _: Kind) -> Reaction {
        Reaction::Annihilate { residue: None }
    }
    fn inert(&self, k: Kind) -> bool {
        !k.0.is_typed()
    }
}

pub(crate) fn check_nontrivial(initial: &Configuration) -> Result<()> {
    match trivial_position(initial) {
        Some(x) => Err(Error::TrivialConfiguration(x)),
        None => Ok(()),
    }
}

pub fn simulate_abbm(
    initial: &Configuration,
    params: &BBMParams,
    scheme: CollisionScheme,
    rng: &mut RandomStream,
) -> Result<Trajectory> {
    params.validate(initial.time)?;
    check_nontrivial(initial)?;
    if scheme == CollisionScheme::ExactPair {
        return exact_pair(initial, params, rng);
    }
    let dt = scheme.bridge_dt()?;
    Ok(engine::run(initial, &params.settings(dt), &mut Annihilation, rng))
}

fn exact_pair(initial: &Configuration, params: &BBMParams, rng: &mut RandomStream) -> Result<Trajectory> {
    let ps = &initial.particles;
    let admissible = params.suppress_branching
        && ps.len() == 2
        && ps[0].color.is_typed()
        && ps[1].color.is_typed()
        && ps[0].color != ps[1].color;
    if !admissible {
        return Err(Error::InadmissibleScheme(
            "exact_pair needs exactly two opposite typed particles and suppressed branching".into(),
        ));
    }
    let (left, right) = (ps[0], ps[1]);
    let t0 = initial.time;
    let d = right.position - left.position;
    let tau = t0 + sample_first_passage(d, GAP_VARIANCE, rng);
    let mut times = params.observation_times.clone();
    times.dedup();

    // Gaps at the observation times before the hit.
    let gaps: Vec<f64> = if tau <= params.horizon {
        // First-passage bridge of the gap: a Bessel-3 bridge to 0 at tau,
        // i.e. the norm of a 3D Brownian bridge.
        let mut v = [d, 0.0, 0.0];
        let mut tv = t0;
        let mut out = Vec::new();
        for &t in times.iter().take_while(|&&t| t < tau) {
            if t > tv {
                let span = tau - tv;
                let w = (tau - t) / span;
                let sd = (GAP_VARIANCE * (t - tv) * (tau - t) / span).sqrt();
                for c in v.iter_mut() {
                    *c = *c * w + sd * rng.normal();
                }
                tv = t;
            }
            out.push((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
        }
        out
    } else {
        // The hit lies beyond the horizon: a Brownian gap path that avoids 0
        // on [t0, horizon], by rejection.
        let mut grid: Vec<f64> = times.clone();
        if grid.last() != Some(&params.horizon) {
            grid.push(params.horizon);
        }
        loop {
            let mut g = d;
            let mut prev = t0;
            let mut out = Vec::with_capacity(grid.len());
            let mut ok = true;
            for &t in &grid {
                if t > prev {
                    let next = g + (GAP_VARIANCE * (t - prev)).sqrt() * rng.normal();
                    if rng.uniform() < bridge_crossing_probability(g, next, t - prev, GAP_VARIANCE) {
                        ok = false;
                        break;
                    }
                    g = next;
                    prev = t;
                }
                out.push(g);
            }
            if ok {
                out.truncate(times.len());
                break out;
            }
        }
    };

    let mut traj = Trajectory::default();
    let mut mid = 0.5 * (left.position + right.position);
    let mut tm = t0;
    let mut advance_mid = |t: f64, rng: &mut RandomStream| {
        if t > tm {
            mid += (0.5 * (t - tm)).sqrt() * rng.normal();
            tm = t;
        }
        mid
    };
    let mut hit_logged = false;
    for (k, &t) in times.iter().enumerate() {
        if t >= tau && !hit_logged {
            let location = advance_mid(tau, rng);
            hit_logged = true;
            if params.record_events {
                traj.events.push(Event {
                    time: tau,
                    kind: EventKind::Annihilate {
                        a: left.id,
                        b: right.id,
                        location,
                    },
                });
            }
        }
        if t < tau {
            let m = advance_mid(t, rng);
            let g = gaps[k];
            traj.snapshots.push(Configuration {
                time: t,
                particles: vec![
                    Particle {
                        position: m - 0.5 * g,
                        ..left
                    },
                    Particle {
                        position: m + 0.5 * g,
                        ..right
                    },
                ],
            });
        } else {
            traj.snapshots.push(Configuration::empty(t));
        }
    }
    if !hit_logged && tau <= params.horizon {
        let location = advance_mid(tau, rng);
        if params.record_events {
            traj.events.push(Event {
                time: tau,
                kind: EventKind::Annihilate {
                    a: left.id,
                    b: right.id,
                    location,
                },
            });
        }
    }
    Ok(traj)
}

/// The empty interval between the negative and the positive block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceState {
    /// Rightmost negative, `-inf` if none.
    pub i_minus: f64,
    /// Leftmost positive, `+inf` if none.
    pub i_plus: f64,
    /// Midpoint; `+inf` with no positives, `-inf` with no negatives, NaN with neither.
    pub i: f64,
    pub k: usize,
}

impl InterfaceState {
    pub fn both_alive(&self) -> bool {
        self.i_minus.is_finite() && self.i_plus.is_finite()
    }
}

pub fn interface(c: &Configuration) -> InterfaceState {
    let i_minus = c
        .particles
        .iter()
        .rev()
        .find(|p| p.color == NEGATIVE)
        .map_or(f64::NEG_INFINITY, |p| p.position);
    let i_plus = c
        .particles
        .iter()
        .find(|p| p.color == POSITIVE)
        .map_or(f64::INFINITY, |p| p.position);
    let i = match (i_minus.is_finite(), i_plus.is_finite()) {
        (true, true) => 0.5 * (i_minus + i_plus),
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => f64::NAN,
    };
    InterfaceState {
        i_minus,
        i_plus,
        i,
        k: block_count(c),
    }
}

/// Number of maximal same-typed runs minus one (neutrals ignored), at least 0.
pub fn block_count(c: &Configuration) -> usize {
    let mut runs: usize = 0;
    let mut current = None;
    for l in c.particles.iter().filter_map(|p| p.color.label()) {
        if current != Some(l) {
            runs += 1;
            current = Some(l);
        }
    }
    runs.saturating_sub(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    /// `I(T)/T`; infinite when a type is extinct at the horizon.
    pub slope: f64,
    /// Mean of `I(t)/t` over the last quarter of the observation times.
    pub last_quarter: f64,
    /// Both types alive at the horizon; the estimate is meaningful only then.
    pub coexisting: bool,
    pub horizon: f64,
}

pub fn slope_estimate(traj: &Trajectory) -> Result<SlopeEstimate> {
    let last = traj.last().ok_or_else(|| Error::param("trajectory has no snapshots"))?;
    let horizon = last.time;
    if !(horizon > 0.0) {
        return Err(Error::param("slope needs a positive horizon"));
    }
    let state = interface(last);
    let cutoff = 0.75 * horizon;
    let tail: Vec<f64> = traj
        .snapshots
        .iter()
        .filter(|c| c.time >= cutoff && c.time > 0.0)
        .map(|c| interface(c).i / c.time)
        .collect();
    let last_quarter = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(SlopeEstimate {
        slope: state.i / horizon,
        last_quarter,
        coexisting: state.both_alive(),
        horizon,
    })
}

/// One negative at `-a`, one positive at `+a`.
pub fn symmetric_pair(a: f64) -> Result<Configuration> {
    if !(a > 0.0) {
        return Err(Error::param(format!("pair half-distance must be positive, got {a}")));
    }
    make_configuration(&[(NEGATIVE, -a), (POSITIVE, a)], 0.0)
}

#[derive(Clone, Debug)]
pub struct BellConfiguration {
    pub configuration: Configuration,
    /// Type labels in increasing order.
    pub labels: Vec<i32>,
    pub counts: Vec<u64>,
    pub centers: Vec<f64>,
    /// Target speed of each type.
    pub speeds: Vec<f64>,
}

/// Bell-shaped multi-type start: with `l = k/2` and `delta = (l+1) ln m`,
/// type `i` gets `m^(l^2 - i^2)` particles uniformly within `epsilon` of
/// `sqrt(2) i delta`. Labels run over `±1..±l`, plus 0 when `k` is odd.
pub fn build_bell_configuration(k: u32, m: u32, epsilon: f64, rng: &mut RandomStream) -> Result<BellConfiguration> {
    if k < 2 {
        return Err(Error::param(format!("bell configuration needs k >= 2, got {k}")));
    }
    if m < 2 {
        return Err(Error::param(format!("bell configuration needs m >= 2, got {m}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let l = (k / 2) as i32;
    let delta = (l + 1) as f64 * (m as f64).ln();
    let labels: Vec<i32> = (-l..=l).filter(|&i| i != 0 || k % 2 == 1).collect();
    let mut counts = Vec::new();
    let mut centers = Vec::new();
    let mut speeds = Vec::new();
    let mut entries = Vec::new();
    for &i in &labels {
        let exponent = (l * l - i * i) as u32;
        let n = (m as u64)
            .checked_pow(exponent)
            .filter(|&n| n <= 50_000_000)
            .ok_or_else(|| Error::param(format!("type {i} would need m^{exponent} particles")))?;
        let center = std::f64::consts::SQRT_2 * i as f64 * delta;
        for _ in 0..n {
            entries.push((Color::Typed(i), center + epsilon * (2.0 * rng.uniform() - 1.0)));
        }
        counts.push(n);
        centers.push(center);
        speeds.push(std::f64::consts::SQRT_2 * i as f64 / (l + 1) as f64);
    }
    Ok(BellConfiguration {
        configuration: make_configuration(&entries, 0.0)?,
        labels,
        counts,
        centers,
        speeds,
    })
}

/// `a n` negatives uniformly within `spread / 2` of -1 and `b n` positives
/// within `spread / 2` of +1. The interface then tends to move at speed
/// `log(a/b) / 2`.
pub fn two_block_configuration(a: u32, b: u32, n: u32, spread: f64, rng: &mut RandomStream) -> Result<Configuration> {
    if a == 0 || b == 0 || n == 0 {
        return Err(Error::param("two-block counts must be positive"));
    }
    if !(spread > 0.0 && spread < 2.0) {
        return Err(Error::param(format!("spread must lie in (0, 2), got {spread}")));
    }
    let mut entries = Vec::with_capacity(((a + b) * n) as usize);
    for _ in 0..a * n {
        entries.push((NEGATIVE, -1.0 + spread * (rng.uniform() - 0.5)));
    }
    for _ in 0..b * n {
        entries.push((POSITIVE, 1.0 + spread * (rng.uniform() - 0.5)));
    }
    make_configuration(&entries, 0.0)
}

pub fn two_block_target(a: u32, b: u32) -> f64 {
    0.5 * (a as f64 / b as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_nontrivial;

    fn cfg(entries: &[(Color, f64)]) -> Configuration {
        make_configuration(entries, 0.0).unwrap()
    }

    #[test]
    fn interface_examples() {
        let s = interface(&cfg(&[(NEGATIVE, -2.0), (NEGATIVE, -1.0), (POSITIVE, 3.0)]));
        assert_eq!((s.i_minus, s.i_plus, s.i, s.k), (-1.0, 3.0, 1.0, 1));
        let s = interface(&cfg(&[(NEGATIVE, -1.0)]));
        assert_eq!((s.i_plus, s.i), (f64::INFINITY, f64::INFINITY));
        assert_eq!(interface(&cfg(&[(NEGATIVE, -1.0), (POSITIVE, 1.0)])).i, 0.0);
        assert!(interface(&Configuration::empty(0.0)).i.is_nan());
    }

    #[test]
    fn block_counts() {
        assert_eq!(
            block_count(&cfg(&[(POSITIVE, -1.0), (NEGATIVE, 0.0), (POSITIVE, 1.0)])),
            2
        );
        assert_eq!(
            block_count(&cfg(&[(NEGATIVE, -2.0), (NEGATIVE, -1.0), (POSITIVE, 1.0)])),
            1
        );
        assert_eq!(block_count(&Configuration::empty(0.0)), 0);
        assert_eq!(block_count(&cfg(&[(POSITIVE, 0.0), (POSITIVE, 2.0)])), 0);
    }

    #[test]
    fn slope_from_flat_interface() {
        let traj = Trajectory {
            snapshots: vec![
                cfg(&[(NEGATIVE, -1.0), (POSITIVE, 1.0)]),
                Configuration {
                    time: 10.0,
                    ..cfg(&[(NEGATIVE, -1.0), (POSITIVE, 1.0)])
                },
            ],
            ..Default::default()
        };
        let s = slope_estimate(&traj).unwrap();
        assert_eq!(s.slope, 0.0);
        assert!(s.coexisting);
    }

    #[test]
    fn bell_counts_and_centres() {
        let mut rng = RandomStream::new(1, 0);
        let b = build_bell_configuration(7, 2, 0.1, &mut rng).unwrap();
        assert_eq!(b.labels, vec![-3, -2, -1, 0, 1, 2, 3]);
        assert_eq!(b.counts, vec![1, 32, 256, 512, 256, 32, 1]);
        let delta = 4.0 * 2f64.ln();
        for (idx, &i) in b.labels.iter().enumerate() {
            assert!((b.centers[idx] - 2f64.sqrt() * i as f64 * delta).abs() < 1e-12);
            assert!((b.speeds[idx] - 2f64.sqrt() * i as f64 / 4.0).abs() < 1e-12);
        }
        assert_eq!(b.configuration.len(), 1090);
        assert!(validate_nontrivial(&b.configuration));

        let two = build_bell_configuration(2, 2, 0.1, &mut rng).unwrap();
        assert_eq!(two.labels, vec![-1, 1]);
        assert_eq!(two.counts, vec![1, 1]);
        assert!((two.centers[1] - 2f64.sqrt() * 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(build_bell_configuration(1, 2, 0.1, &mut rng).is_err());
    }

    #[test]
    fn trivial_start_rejected() {
        let mut rng = RandomStream::new(1, 0);
        let c = cfg(&[(NEGATIVE, 0.0), (POSITIVE, 0.0)]);
        let r = simulate_abbm(&c, &BBMParams::new(1.0), CollisionScheme::default(), &mut rng);
        assert!(matches!(r, Err(Error::TrivialConfiguration(_))));
    }

    #[test]
    fn exact_pair_admissibility() {
        let mut rng = RandomStream::new(1, 0);
        let c = cfg(&[(NEGATIVE, 0.0), (POSITIVE, 1.0)]);
        assert!(simulate_abbm(&c, &BBMParams::new(1.0), CollisionScheme::ExactPair, &mut rng).is_err());
        let t = simulate_abbm(
            &c,
            &BBMParams::new(1.0).suppressed(),
            CollisionScheme::ExactPair,
            &mut rng,
        )
        .unwrap();
        assert_eq!(t.snapshots.len(), 64);
        assert!(t.snapshots.iter().all(|s| s.is_sorted()));
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(
            CollisionScheme::parse("bridge", 0.01).unwrap(),
            CollisionScheme::bridge(0.01)
        );
        assert_eq!(
            CollisionScheme::parse("bridge:0.001", 0.01).unwrap(),
            CollisionScheme::bridge(0.001)
        );
        assert_eq!(
            CollisionScheme::parse("exact_pair", 0.01).unwrap(),
            CollisionScheme::ExactPair
        );
        assert!(CollisionScheme::parse("euler", 0.01).is_err());
    }

    #[test]
    fn two_block_shape() {
        let mut rng = RandomStream::new(2, 0);
        let c = two_block_configuration(54, 20, 1, 0.2, &mut rng).unwrap();
        assert_eq!(c.count(NEGATIVE), 54);
        assert_eq!(c.count(POSITIVE), 20);
        assert!(crate::config::validate_ordered(&c));
        assert!((two_block_target(54, 20) - 0.4966).abs() < 1e-3);
    }
}
