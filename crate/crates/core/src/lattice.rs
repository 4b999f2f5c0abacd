//! Annihilating branching random walks on `Z` and `Z^2`.
//!
//! Each site holds a signed count: `n > 0` means `n` positive particles,
//! `n < 0` means `|n|` negative ones. Opposite particles arriving at a site
//! cancel pairwise, which in this encoding is plain addition.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::bbm::BBMParams;
use crate::config::{Color, NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub type Site = (i64, i64);

/// Limit on the number of leaves expanded by [`enumerate_discrete_abrw`].
pub const MAX_LEAVES: u64 = 10_000_000;
pub const MAX_ENUMERATION_STEPS: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeConfig {
    pub dimension: u8,
    /// Nonzero signed counts only.
    pub sites: BTreeMap<Site, i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SiteEntry {
    pub x: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<i64>,
    pub color: Color,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LatticeSnapshot {
    pub time: f64,
    pub sites: Vec<SiteEntry>,
}

impl LatticeConfig {
    pub fn new(dimension: u8) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::param(format!(
                "lattice dimension must be 1 or 2, got {dimension}"
            )));
        }
        Ok(Self {
            dimension,
            sites: BTreeMap::new(),
        })
    }

    /// Builds a configuration from `(site, color, count)` entries, cancelling
    /// opposite particles that share a site.
    pub fn from_entries(dimension: u8, entries: &[(Site, Color, u64)]) -> Result<Self> {
        let mut c = Self::new(dimension)?;
        for &(site, color, count) in entries {
            if dimension == 1 && site.1 != 0 {
                return Err(Error::param("one-dimensional sites need y = 0"));
            }
            c.add(site, sign_of(color)? * count as i64);
        }
        Ok(c)
    }

    pub fn add(&mut self, site: Site, charge: i64) {
        let v = self.sites.entry(site).or_insert(0);
        *v += charge;
        if *v == 0 {
            self.sites.remove(&site);
        }
    }

    pub fn count(&self, color: Color) -> u64 {
        let want = if color == POSITIVE { 1 } else { -1 };
        self.sites
            .values()
            .filter(|&&v| v.signum() == want)
            .map(|v| v.unsigned_abs())
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.sites.values().map(|v| v.unsigned_abs()).sum()
    }

    /// `#+ - #-`.
    pub fn charge(&self) -> i64 {
        self.sites.values().sum()
    }

    pub fn coexisting(&self) -> bool {
        self.count(POSITIVE) > 0 && self.count(NEGATIVE) > 0
    }

    /// `(site, color, count)` per occupied site.
    pub fn occupancy(&self) -> Vec<(Site, Color, u64)> {
        self.sites
            .iter()
            .map(|(&s, &v)| (s, if v > 0 { POSITIVE } else { NEGATIVE }, v.unsigned_abs()))
            .collect()
    }

    pub fn snapshot(&self, time: f64) -> LatticeSnapshot {
        let sites = self
            .occupancy()
            .into_iter()
            .map(|((x, y), color, count)| SiteEntry {
                x,
                y: (self.dimension == 2).then_some(y),
                color,
                count,
            })
            .collect();
        LatticeSnapshot { time, sites }
    }

    fn neighbours(&self) -> &'static [Site] {
        if self.dimension == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[(-1, 0), (1, 0), (0, -1), (0, 1)]
        }
    }
}

fn sign_of(color: Color) -> Result<i64> {
    match color {
        c if c == POSITIVE => Ok(1),
        c if c == NEGATIVE => Ok(-1),
        Color::Typed(i) => Err(Error::UnknownType(i)),
        Color::Neutral(..) => Err(Error::param("lattice particles are typed")),
    }
}

impl LatticeSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Clone, Debug)]
pub struct LatticeTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<LatticeConfig>,
    pub truncated: bool,
    pub jumps: u64,
    pub branchings: u64,
}

impl LatticeTrajectory {
    pub fn last(&self) -> Option<&LatticeConfig> {
        self.snapshots.last()
    }

    pub fn snapshots_json(&self) -> Vec<LatticeSnapshot> {
        self.times
            .iter()
            .zip(&self.snapshots)
            .map(|(&t, c)| c.snapshot(t))
            .collect()
    }
}

/// Particle list with per-site index so a uniform particle can be drawn.
struct Population {
    particles: Vec<(Site, i64)>,
    at: HashMap<Site, Vec<usize>>,
}

impl Population {
    fn new(c: &LatticeConfig) -> Self {
        let mut p = Self {
            particles: Vec::new(),
            at: HashMap::new(),
        };
        for (&s, &v) in &c.sites {
            for _ in 0..v.unsigned_abs() {
                p.push(s, v.signum());
            }
        }
        p
    }

    fn push(&mut self, site: Site, sign: i64) {
        self.at.entry(site).or_default().push(self.particles.len());
        self.particles.push((site, sign));
    }

    fn remove(&mut self, idx: usize) {
        let (site, _) = self.particles[idx];
        let list = self.at.get_mut(&site).expect("particle missing from its site");
        let pos = list
            .iter()
            .position(|&i| i == idx)
            .expect("index missing from its site");
        list.swap_remove(pos);
        if list.is_empty() {
            self.at.remove(&site);
        }
        let last = self.particles.len() - 1;
        if idx != last {
            let moved = self.particles[last].0;
            let l = self.at.get_mut(&moved).expect("moved particle missing");
            let p = l.iter().position(|&i| i == last).expect("moved index missing");
            l[p] = idx;
        }
        self.particles.swap_remove(idx);
    }

    fn occupant_sign(&self, site: Site) -> i64 {
        self.at.get(&site).map_or(0, |l| self.particles[l[0]].1)
    }

    fn config(&self, dimension: u8) -> LatticeConfig {
        let mut sites = BTreeMap::new();
        for &(s, sign) in &self.particles {
            *sites.entry(s).or_insert(0) += sign;
        }
        LatticeConfig { dimension, sites }
    }
}

/// Continuous-time ABRW: every particle jumps to a uniform neighbour at rate 1
/// and splits in two on its site at rate 1. A particle arriving on a site held
/// by the opposite type annihilates with one of them.
pub fn simulate_abrw(initial: &LatticeConfig, params: &BBMParams, rng: &mut RandomStream) -> Result<LatticeTrajectory> {
    params.validate(0.0)?;
    let dim = initial.dimension;
    let mut pop = Population::new(initial);
    let branch_rate = if params.suppress_branching {
        0.0
    } else {
        params.branching_rate()
    };
    let neighbours = initial.neighbours();
    let mut traj = LatticeTrajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        truncated: false,
        jumps: 0,
        branchings: 0,
    };
    let mut t = 0.0;
    let mut next_obs = 0;
    let times = &params.observation_times;
    loop {
        let n = pop.particles.len();
        let rate = n as f64 * (1.0 + branch_rate);
        let dt = if n == 0 { f64::INFINITY } else { rng.exp1() / rate };
        let t_next = t + dt;
        while next_obs < times.len() && times[next_obs] <= t_next.min(params.horizon) {
            traj.times.push(times[next_obs]);
            traj.snapshots.push(pop.config(dim));
            next_obs += 1;
        }
        if t_next > params.horizon {
            break;
        }
        t = t_next;
        let idx = rng.below(n);
        let (site, sign) = pop.particles[idx];
        if rng.uniform() * (1.0 + branch_rate) < branch_rate {
            pop.push(site, sign);
            traj.branchings += 1;
            if pop.particles.len() > params.population_cap {
                traj.truncated = true;
                break;
            }
        } else {
            let d = neighbours[rng.below(neighbours.len())];
            let target = (site.0 + d.0, site.1 + d.1);
            traj.jumps += 1;
            pop.remove(idx);
            if pop.occupant_sign(target) == -sign {
                let victim = pop.at[&target][0];
                pop.remove(victim);
            } else {
                pop.push(target, sign);
            }
        }
    }
    Ok(traj)
}

/// Discrete-time dynamics: each step every particle independently splits in
/// place with probability `branch_probability` or otherwise moves to a uniform
/// neighbour; sites are then resolved by cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRule {
    pub branch_probability: f64,
}

impl DiscreteRule {
    pub fn move_only() -> Self {
        Self {
            branch_probability: 0.0,
        }
    }

    fn actions(&self, dimension: u8) -> Vec<(Option<Site>, f64)> {
        let nbrs: &[Site] = if dimension == 1 {
            &[(-1, 0), (1, 0)]
        } else {
            &[(-1, 0), (1, 0), (0, -1), (0, 1)]
        };
        let pm = (1.0 - self.branch_probability) / nbrs.len() as f64;
        let mut a: Vec<(Option<Site>, f64)> = nbrs.iter().map(|&d| (Some(d), pm)).collect();
        if self.branch_probability > 0.0 {
            a.push((None, self.branch_probability));
        }
        a
    }

    fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.branch_probability) {
            Ok(())
        } else {
            Err(Error::param(format!(
                "branch probability {} outside [0,1]",
                self.branch_probability
            )))
        }
    }
}

fn apply_step(c: &LatticeConfig, particles: &[(Site, i64)], choices: &[Option<Site>]) -> LatticeConfig {
    let mut next = LatticeConfig {
        dimension: c.dimension,
        sites: BTreeMap::new(),
    };
    for (&(s, sign), choice) in particles.iter().zip(choices) {
        match choice {
            Some(d) => next.add((s.0 + d.0, s.1 + d.1), sign),
            None => next.add(s, 2 * sign),
        }
    }
    next
}

fn particle_list(c: &LatticeConfig) -> Vec<(Site, i64)> {
    c.sites
        .iter()
        .flat_map(|(&s, &v)| std::iter::repeat_n((s, v.signum()), v.unsigned_abs() as usize))
        .collect()
}

/// Exact law of the configuration after `steps` discrete steps, by expanding
/// every joint choice of actions.
pub fn enumerate_discrete_abrw(
    initial: &LatticeConfig,
    steps: u32,
    rule: DiscreteRule,
) -> Result<BTreeMap<LatticeConfig, f64>> {
    rule.validate()?;
    if steps > MAX_ENUMERATION_STEPS {
        return Err(Error::param(format!(
            "at most {MAX_ENUMERATION_STEPS} enumeration steps"
        )));
    }
    let actions = rule.actions(initial.dimension);
    let mut dist = BTreeMap::from([(initial.clone(), 1.0)]);
    let mut leaves: u64 = 0;
    for _ in 0..steps {
        let mut next: BTreeMap<LatticeConfig, f64> = BTreeMap::new();
        for (c, p) in &dist {
            let particles = particle_list(c);
            let count = (actions.len() as u64)
                .checked_pow(particles.len() as u32)
                .filter(|&k| leaves.saturating_add(k) <= MAX_LEAVES)
                .ok_or(Error::TreeTooLarge { limit: MAX_LEAVES })?;
            leaves += count;
            let mut digits = vec![0usize; particles.len()];
            for _ in 0..count {
                let choices: Vec<Option<Site>> = digits.iter().map(|&d| actions[d].0).collect();
                let weight: f64 = digits.iter().map(|&d| actions[d].1).product();
                *next.entry(apply_step(c, &particles, &choices)).or_insert(0.0) += p * weight;
                for d in digits.iter_mut() {
                    *d += 1;
                    if *d < actions.len() {
                        break;
                    }
                    *d = 0;
                }
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// One sample of the discrete chain, for Monte Carlo checks against the enumeration.
pub fn simulate_discrete_abrw(
    initial: &LatticeConfig,
    steps: u32,
    rule: DiscreteRule,
    rng: &mut RandomStream,
) -> Result<LatticeConfig> {
    rule.validate()?;
    let actions = rule.actions(initial.dimension);
    let mut c = initial.clone();
    for _ in 0..steps {
        let particles = particle_list(&c);
        let choices: Vec<Option<Site>> = particles
            .iter()
            .map(|_| {
                let mut u = rng.uniform();
                for &(a, w) in &actions {
                    if u < w {
                        return a;
                    }
                    u -= w;
                }
                actions.last().expect("nonempty action set").0
            })
            .collect();
        c = apply_step(&c, &particles, &choices);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(entries: &[(i64, Color)]) -> LatticeConfig {
        let e: Vec<(Site, Color, u64)> = entries.iter().map(|&(x, c)| ((x, 0), c, 1)).collect();
        LatticeConfig::from_entries(1, &e).unwrap()
    }

    #[test]
    fn same_site_cancels() {
        let c = line(&[(0, POSITIVE), (0, NEGATIVE)]);
        assert_eq!(c.total(), 0);
        let c = LatticeConfig::from_entries(1, &[((3, 0), POSITIVE, 3), ((3, 0), NEGATIVE, 1)]).unwrap();
        assert_eq!(c.occupancy(), vec![((3, 0), POSITIVE, 2)]);
        assert!(LatticeConfig::new(3).is_err());
        assert!(LatticeConfig::from_entries(1, &[((0, 1), POSITIVE, 1)]).is_err());
        assert!(LatticeConfig::from_entries(1, &[((0, 0), Color::Typed(2), 1)]).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let c = line(&[(0, POSITIVE), (2, NEGATIVE)]);
        let d0 = enumerate_discrete_abrw(&c, 0, DiscreteRule::move_only()).unwrap();
        assert_eq!(d0.len(), 1);
        assert_eq!(d0[&c], 1.0);
        let d1 = enumerate_discrete_abrw(&c, 1, DiscreteRule::move_only()).unwrap();
        let empty = LatticeConfig::new(1).unwrap();
        assert!((d1[&empty] - 0.25).abs() < 1e-15);
        assert!((d1.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_limit() {
        let many = LatticeConfig::from_entries(2, &[((0, 0), POSITIVE, 12)]).unwrap();
        let rule = DiscreteRule {
            branch_probability: 0.5,
        };
        assert!(matches!(
            enumerate_discrete_abrw(&many, 1, rule),
            Err(Error::TreeTooLarge { .. })
        ));
        assert!(enumerate_discrete_abrw(&many, 5, rule).is_err());
    }

    #[test]
    fn move_only_conserves_charge() {
        let c = line(&[(0, POSITIVE), (1, NEGATIVE), (3, NEGATIVE), (6, POSITIVE)]);
        let d = enumerate_discrete_abrw(&c, 3, DiscreteRule::move_only()).unwrap();
        assert!(d.keys().all(|k| k.charge() == c.charge()));
        let params = BBMParams::new(5.0).suppressed();
        let mut rng = RandomStream::new(21, 0);
        let traj = simulate_abrw(&c, &params, &mut rng).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.charge() == c.charge()));
    }

    #[test]
    fn monte_carlo_matches_enumeration() {
        let c = line(&[(0, POSITIVE), (1, NEGATIVE)]);
        let rule = DiscreteRule {
            branch_probability: 0.3,
        };
        let exact = enumerate_discrete_abrw(&c, 2, rule).unwrap();
        let n = 20_000;
        let mut freq: BTreeMap<LatticeConfig, usize> = BTreeMap::new();
        let mut rng = RandomStream::new(22, 0);
        for _ in 0..n {
            *freq
                .entry(simulate_discrete_abrw(&c, 2, rule, &mut rng).unwrap())
                .or_insert(0) += 1;
        }
        for (k, &p) in &exact {
            let f = freq.get(k).copied().unwrap_or(0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * se + 1e-12, "{k:?}: {f} vs {p}");
        }
        assert!(freq.keys().all(|k| exact.contains_key(k)));
    }

    #[test]
    fn single_type_mean_growth() {
        let c = line(&[(0, POSITIVE)]);
        let params = BBMParams::new(2.0);
        let n = 4000;
        let mut rng = RandomStream::new(23, 0);
        let counts: Vec<f64> = (0..n)
            .map(|_| simulate_abrw(&c, &params, &mut rng).unwrap().last().unwrap().total() as f64)
            .collect();
        let (m, se) = crate::stats::mean_se(&counts);
        assert!((m - 2f64.exp()).abs() < 4.0 * se, "{m} {se}");
    }

    #[test]
    fn snapshot_json_shape() {
        let c = LatticeConfig::from_entries(2, &[((1, -2), NEGATIVE, 2)]).unwrap();
        let json = c.snapshot(0.5).to_json().unwrap();
        assert_eq!(json, r#"{"time":0.5,"sites":[{"x":1,"y":-2,"color":-1,"count":2}]}"#);
        let c = line(&[(4, POSITIVE)]);
        assert_eq!(
            c.snapshot(0.0).to_json().unwrap(),
            r#"{"time":0.0,"sites":[{"x":4,"color":1,"count":1}]}"#
        );
    }

    #[test]
    fn grid_snapshots() {
        let c = line(&[(-2, NEGATIVE), (2, POSITIVE)]);
        let params = BBMParams::new(3.0);
        let mut rng = RandomStream::new(24, 0);
        let traj = simulate_abrw(&c, &params, &mut rng).unwrap();
        assert_eq!(traj.times, params.observation_times);
        assert_eq!(traj.snapshots[0], c);
    }
}
