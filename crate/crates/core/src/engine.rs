//! Shared particle engine.
//!
//! Particles run independent Brownian motions and carry independent rate-1
//! branching clocks. The superposed clock is kept at rate `slots.len()`;
//! rings landing on dead slots are discarded, which thins the process down to
//! the live population exactly.
//!
//! Particles that cannot take part in any reaction are advanced lazily (one
//! Gaussian draw per branching or observation). When some pair of live kinds
//! can react, the reactive particles advance in substeps of length at most
//! `dt`: endpoints are sampled first, then every reactive pair that could
//! plausibly have met is tested with the Brownian-bridge crossing probability.
//! Flagged crossings and clock rings are executed in time order inside the
//! substep; a particle that changes (or is born) mid-substep has its pairs
//! re-tested on the remaining fraction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::config::{sort_particles, Color, Configuration, Particle};
use crate::crossing::{bridge_crossing_probability, sample_bridge_crossing_time, GAP_VARIANCE};
use crate::event::{Event, EventKind, Trajectory};
use crate::rng::RandomStream;

/// Color plus mark flag; everything the reaction rules look at.
pub(crate) type Kind = (Color, bool);

/// Pairs whose crossing exponent `d1 d2 / dt` exceeds this are skipped.
const CROSSING_CUTOFF: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Reaction {
    /// Both particles disappear. A residue, if any, is left inert at the contact point.
    Annihilate { residue: Option<Kind> },
    /// Both disappear and a new inert particle of `kind` appears at the contact point.
    Merge { kind: Kind },
    /// `survivor` carries on along its own path as a fresh particle of `kind`;
    /// the other disappears, optionally leaving an inert residue.
    Continue {
        survivor: Side,
        kind: Kind,
        residue: Option<Kind>,
        transfer: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum RingAction {
    Branch,
    Ignore,
    /// Create a copy of the ringing particle with a different kind (the
    /// enhanced coupling's first marked particle).
    Copy(Kind),
}

pub(crate) trait Dynamics {
    fn interacts(&self, a: Kind, b: Kind) -> bool;
    fn react(&mut self, a: Kind, b: Kind) -> Reaction;
    /// A kind that never reacts with anything.
    fn inert(&self, k: Kind) -> bool;
    fn on_ring(&mut self, _time: f64, _kind: Kind) -> RingAction {
        RingAction::Branch
    }
    fn should_stop(&self, _census: &Census) -> bool {
        false
    }
}

/// Live-particle counts per kind.
#[derive(Clone, Debug, Default)]
pub(crate) struct Census {
    counts: Vec<(Kind, usize)>,
    total: usize,
}

impl Census {
    pub(crate) fn total(&self) -> usize {
        self.total
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (Kind, usize)> + '_ {
        self.counts.iter().copied().filter(|&(_, n)| n > 0)
    }

    /// Returns true when the set of present kinds changed.
    fn add(&mut self, k: Kind) -> bool {
        self.total += 1;
        match self.counts.iter_mut().find(|(c, _)| *c == k) {
            Some((_, n)) => {
                *n += 1;
                *n == 1
            }
            None => {
                self.counts.push((k, 1));
                true
            }
        }
    }

    fn remove(&mut self, k: Kind) -> bool {
        self.total -= 1;
        let entry = self
            .counts
            .iter_mut()
            .find(|(c, _)| *c == k)
            .expect("removing a kind that is not present");
        entry.1 -= 1;
        entry.1 == 0
    }

    fn interaction_possible<D: Dynamics>(&self, dynamics: &D) -> bool {
        let present: Vec<Kind> = self.iter().map(|(k, _)| k).collect();
        present
            .iter()
            .enumerate()
            .any(|(i, &a)| present[i + 1..].iter().any(|&b| dynamics.interacts(a, b)))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Settings {
    pub horizon: f64,
    pub observation_times: Vec<f64>,
    pub population_cap: usize,
    pub branching: bool,
    pub record_events: bool,
    pub dt: f64,
}

#[derive(Clone, Debug)]
struct Slot {
    id: u64,
    kind: Kind,
    /// Position at time `tx` (segment start while stepping).
    x: f64,
    tx: f64,
    /// Position at the end of the current substep; stepping only.
    end: f64,
    alive: bool,
    stepped: bool,
    /// One bit per kind for the cell filter; all ones when the kind table is full.
    kbit: u64,
    version: u32,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    time: f64,
    a: usize,
    b: usize,
    va: u32,
    vb: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Reversed so that BinaryHeap pops the earliest candidate.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.a.cmp(&self.a))
            .then(other.b.cmp(&self.b))
    }
}

struct Engine<'a, D: Dynamics> {
    dynamics: &'a mut D,
    rng: &'a mut RandomStream,
    settings: &'a Settings,
    slots: Vec<Slot>,
    dead: usize,
    census: Census,
    interactions: bool,
    traj: Trajectory,
    next_id: u64,
    next_ring: f64,
    stopped: bool,
    // Per-substep scratch.
    reactive: Vec<usize>,
    order: Vec<usize>,
    kinds: Vec<Kind>,
    sorted_x: Vec<f64>,
    extras: Vec<usize>,
    heap: BinaryHeap<Candidate>,
    substep_end: f64,
    reach: f64,
}

pub(crate) fn run<D: Dynamics>(
    initial: &Configuration,
    settings: &Settings,
    dynamics: &mut D,
    rng: &mut RandomStream,
) -> Trajectory {
    let t0 = initial.time;
    let mut engine = Engine {
        dynamics,
        rng,
        settings,
        slots: Vec::with_capacity(initial.len() * 4),
        dead: 0,
        census: Census::default(),
        interactions: false,
        traj: Trajectory::default(),
        next_id: initial.max_id().map_or(0, |m| m + 1),
        next_ring: f64::INFINITY,
        stopped: false,
        reactive: Vec::new(),
        order: Vec::new(),
        kinds: Vec::new(),
        sorted_x: Vec::new(),
        extras: Vec::new(),
        heap: BinaryHeap::new(),
        substep_end: t0,
        reach: 0.0,
    };
    for p in &initial.particles {
        engine.census.add((p.color, p.marked));
        let kbit = engine.bit_of((p.color, p.marked));
        engine.slots.push(Slot {
            id: p.id,
            kind: (p.color, p.marked),
            x: p.position,
            tx: t0,
            end: p.position,
            alive: true,
            stepped: false,
            kbit,
            version: 0,
        });
    }
    engine.interactions = engine.census.interaction_possible(engine.dynamics);
    engine.main_loop(t0);
    engine.traj
}

impl<'a, D: Dynamics> Engine<'a, D> {
    fn main_loop(&mut self, start: f64) {
        let obs = &self.settings.observation_times;
        let horizon = self.settings.horizon;
        let mut k = 0;
        let mut t = start;
        while k < obs.len() && obs[k] <= t {
            self.snapshot(t);
            k += 1;
        }
        self.check_stop();
        self.redraw_ring(t);
        while !self.stopped && t < horizon {
            let target = obs.get(k).copied().unwrap_or(horizon).min(horizon);
            let stepping = self.interactions;
            let t1 = if stepping {
                (t + self.settings.dt).min(target)
            } else {
                target
            };
            t = self.advance(t, t1, stepping);
            if self.stopped {
                self.traj.terminated_at = Some(t);
                break;
            }
            self.compact();
            self.redraw_ring(t);
            while k < obs.len() && obs[k] <= t {
                self.snapshot(t);
                k += 1;
            }
        }
    }

    fn redraw_ring(&mut self, t: f64) {
        let n = self.slots.len();
        self.next_ring = if self.settings.branching && n > 0 {
            t + self.rng.exp1() / n as f64
        } else {
            f64::INFINITY
        };
    }

    fn check_stop(&mut self) {
        if self.census.total() > self.settings.population_cap {
            self.traj.truncated = true;
            self.stopped = true;
        }
        if self.dynamics.should_stop(&self.census) {
            self.stopped = true;
        }
    }

    /// Advances from `t0` to `t1`, or to an earlier time when the dynamics
    /// stop or reactions become possible during a lazy stretch.
    fn advance(&mut self, t0: f64, t1: f64, stepping: bool) -> f64 {
        self.substep_end = t1;
        self.heap.clear();
        self.extras.clear();
        if stepping {
            self.begin_substep(t0, t1);
        }
        loop {
            let next_collision = self.heap.peek().map_or(f64::INFINITY, |c| c.time);
            if self.next_ring <= t1 && self.next_ring < next_collision {
                let r = self.next_ring;
                let kinds_changed = self.ring(r, stepping);
                if self.stopped {
                    return r;
                }
                self.redraw_ring(r);
                if !stepping && kinds_changed && self.interactions {
                    return r;
                }
            } else if next_collision <= t1 {
                let c = self.heap.pop().expect("peeked");
                self.collide(c);
                if self.stopped {
                    return c.time;
                }
            } else {
                break;
            }
        }
        if stepping {
            for s in self.slots.iter_mut() {
                if s.alive && s.stepped {
                    s.x = s.end;
                    s.tx = t1;
                }
                s.stepped = false;
            }
        }
        t1
    }

    fn begin_substep(&mut self, t0: f64, t1: f64) {
        let h = t1 - t0;
        let sqrt_h = h.sqrt();
        let dynamics = &*self.dynamics;
        let mut reactive = std::mem::take(&mut self.reactive);
        reactive.clear();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut max_disp: f64 = 0.0;
        for (i, s) in self.slots.iter_mut().enumerate() {
            if !s.alive || dynamics.inert(s.kind) {
                continue;
            }
            if s.tx < t0 {
                s.x += (t0 - s.tx).sqrt() * self.rng.normal();
                s.tx = t0;
            }
            s.stepped = true;
            s.end = s.x + sqrt_h * self.rng.normal();
            max_disp = max_disp.max((s.end - s.x).abs());
            lo = lo.min(s.x);
            hi = hi.max(s.x);
            reactive.push(i);
        }
        self.reach = (CROSSING_CUTOFF * h).sqrt() + 2.0 * max_disp;
        self.order.clear();
        self.sorted_x.clear();

        // Cells at least one reach wide. Only cells near a cell whose
        // neighbourhood holds two reactive kinds can produce candidates.
        let n = reactive.len();
        let span = hi - lo;
        let mut width = self.reach;
        if span / width > (2 * n + 8) as f64 {
            width = span / (2 * n + 8) as f64;
        }
        let cells = (span / width) as usize + 1;
        let inv = 1.0 / width;
        let cell: Vec<u32> = reactive
            .iter()
            .map(|&i| (((self.slots[i].x - lo) * inv) as usize).min(cells - 1) as u32)
            .collect();
        let mut mask = vec![0u64; cells];
        for (&i, &c) in reactive.iter().zip(&cell) {
            mask[c as usize] |= self.slots[i].kbit;
        }
        let near = |v: &[u64], c: usize| {
            let mut m = v[c];
            if c > 0 {
                m |= v[c - 1];
            }
            if c + 1 < cells {
                m |= v[c + 1];
            }
            m
        };
        let mixed: Vec<bool> = (0..cells).map(|c| near(&mask, c).count_ones() >= 2).collect();
        let hot: Vec<bool> = (0..cells)
            .map(|c| mixed[c] || (c > 0 && mixed[c - 1]) || (c + 1 < cells && mixed[c + 1]))
            .collect();
        let mut keys: Vec<(f64, usize)> = reactive
            .iter()
            .zip(&cell)
            .filter(|&(_, &c)| hot[c as usize])
            .map(|(&i, _)| (self.slots[i].x, i))
            .collect();
        keys.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.order.extend(keys.iter().map(|k| k.1));
        self.sorted_x.extend(keys.iter().map(|k| k.0));
        self.reactive = reactive;
        let slots = &self.slots;

        // Runs of equal kind are skipped wholesale: same-kind pairs never react.
        let n = self.order.len();
        let mut run_end = vec![0usize; n];
        for k in (0..n).rev() {
            run_end[k] = if k + 1 < n && slots[self.order[k + 1]].kind == slots[self.order[k]].kind {
                run_end[k + 1]
            } else {
                k + 1
            };
        }
        for k in 0..n {
            let a = self.order[k];
            let (xa, ka) = (self.slots[a].x, self.slots[a].kind);
            let mut m = k + 1;
            while m < n {
                let b = self.order[m];
                if self.slots[b].x - xa >= self.reach {
                    break;
                }
                if self.slots[b].kind == ka {
                    m = run_end[m];
                    continue;
                }
                if self.dynamics.interacts(ka, self.slots[b].kind) {
                    self.test_pair(a, b, t0);
                }
                m += 1;
            }
        }
    }

    /// Tests one pair over `[s, substep_end]`, both segments starting at `s`.
    fn test_pair(&mut self, a: usize, b: usize, s: f64) {
        let t1 = self.substep_end;
        let (sa, sb) = (&self.slots[a], &self.slots[b]);
        let (left, right) = if sa.x <= sb.x { (sa, sb) } else { (sb, sa) };
        let d1 = right.x - left.x;
        let d2 = right.end - left.end;
        let dur = t1 - s;
        let (va, vb) = (sa.version, sb.version);
        let crossed_surely = d2 <= 0.0 || d1 <= 0.0;
        if !crossed_surely {
            if d1 * d2 / dur > CROSSING_CUTOFF {
                return;
            }
            let p = bridge_crossing_probability(d1, d2, dur, GAP_VARIANCE);
            if self.rng.uniform() >= p {
                return;
            }
        }
        let offset = if d1 <= 0.0 {
            0.0
        } else {
            let u = self.rng.uniform_open();
            sample_bridge_crossing_time(d1, d2, dur, GAP_VARIANCE, u)
        };
        self.heap.push(Candidate {
            time: (s + offset).min(t1),
            a,
            b,
            va,
            vb,
        });
    }

    /// Re-tests every reactive neighbour of `p`, whose segment starts at `s`.
    fn retest_neighbours(&mut self, p: usize, s: f64) {
        let xp = self.slots[p].x;
        let lo = xp - self.reach;
        let hi = xp + self.reach;
        let start = self.sorted_x.partition_point(|&x| x < lo);
        let mut k = start;
        while k < self.order.len() && self.sorted_x[k] <= hi {
            let q = self.order[k];
            self.try_neighbour(p, q, s);
            k += 1;
        }
        for e in 0..self.extras.len() {
            let q = self.extras[e];
            self.try_neighbour(p, q, s);
        }
    }

    fn try_neighbour(&mut self, p: usize, q: usize, s: f64) {
        if p == q {
            return;
        }
        let (kp, sq) = (self.slots[p].kind, &self.slots[q]);
        if !sq.alive || !sq.stepped || !self.dynamics.interacts(kp, sq.kind) {
            return;
        }
        self.split_segment(q, s);
        self.test_pair(p, q, s);
    }

    /// Pins a stepped particle's path at time `s` by sampling its bridge.
    fn split_segment(&mut self, i: usize, s: f64) {
        let t1 = self.substep_end;
        let slot = &self.slots[i];
        if slot.tx >= s {
            return;
        }
        let span = t1 - slot.tx;
        let x = if span <= 0.0 {
            slot.end
        } else {
            let w = (s - slot.tx) / span;
            let var = (s - slot.tx) * (t1 - s) / span;
            slot.x + w * (slot.end - slot.x) + var.max(0.0).sqrt() * self.rng.normal()
        };
        let slot = &mut self.slots[i];
        slot.x = x;
        slot.tx = s;
    }

    /// Position of particle `i` at time `s`, pinning it there.
    fn pin(&mut self, i: usize, s: f64) -> f64 {
        if self.slots[i].stepped {
            self.split_segment(i, s);
        } else {
            let slot = &self.slots[i];
            let dtau = s - slot.tx;
            if dtau > 0.0 {
                let x = slot.x + dtau.sqrt() * self.rng.normal();
                let slot = &mut self.slots[i];
                slot.x = x;
                slot.tx = s;
            }
        }
        self.slots[i].x
    }

    fn lerp(&self, i: usize, s: f64) -> f64 {
        let slot = &self.slots[i];
        let span = self.substep_end - slot.tx;
        if span <= 0.0 {
            return slot.end;
        }
        slot.x + (slot.end - slot.x) * ((s - slot.tx) / span).clamp(0.0, 1.0)
    }

    fn bit_of(&mut self, k: Kind) -> u64 {
        let idx = match self.kinds.iter().position(|&c| c == k) {
            Some(i) => i,
            None => {
                self.kinds.push(k);
                self.kinds.len() - 1
            }
        };
        if idx < 64 {
            1 << idx
        } else {
            u64::MAX
        }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn log(&mut self, time: f64, kind: EventKind) {
        if self.settings.record_events {
            self.traj.events.push(Event { time, kind });
        }
    }

    /// Returns true when the set of present kinds changed.
    fn ring(&mut self, r: f64, stepping: bool) -> bool {
        let idx = self.rng.below(self.slots.len());
        if !self.slots[idx].alive {
            return false;
        }
        let kind = self.slots[idx].kind;
        let child_kind = match self.dynamics.on_ring(r, kind) {
            RingAction::Ignore => {
                self.check_stop();
                return false;
            }
            RingAction::Branch => kind,
            RingAction::Copy(k) => k,
        };
        let x = self.pin(idx, r);
        let parent = self.slots[idx].id;
        let child = self.fresh_id();
        self.traj.lineage.push((child, parent));
        let event = if child_kind == kind {
            EventKind::Branch { parent, child }
        } else {
            EventKind::Tau1MarkCreated {
                source: parent,
                marked: child,
            }
        };
        self.log(r, event);
        let reactive = stepping && !self.dynamics.inert(child_kind);
        let end = if reactive {
            x + (self.substep_end - r).max(0.0).sqrt() * self.rng.normal()
        } else {
            x
        };
        let ci = self.slots.len();
        let kbit = self.bit_of(child_kind);
        self.slots.push(Slot {
            id: child,
            kind: child_kind,
            x,
            tx: r,
            end,
            alive: true,
            stepped: reactive,
            kbit,
            version: 0,
        });
        let changed = self.census.add(child_kind);
        if changed {
            self.interactions = self.census.interaction_possible(self.dynamics);
        }
        if reactive {
            self.retest_neighbours(ci, r);
            self.extras.push(ci);
        }
        self.check_stop();
        changed
    }

    fn kill(&mut self, i: usize) -> bool {
        let slot = &mut self.slots[i];
        slot.alive = false;
        slot.stepped = false;
        slot.version = slot.version.wrapping_add(1);
        self.dead += 1;
        self.census.remove(slot.kind)
    }

    /// Puts a new inert particle in the (dead) slot `i`.
    fn place_inert(&mut self, i: usize, kind: Kind, x: f64, t: f64) -> (u64, bool) {
        let id = self.fresh_id();
        let kbit = self.bit_of(kind);
        let slot = &mut self.slots[i];
        slot.id = id;
        slot.kind = kind;
        slot.kbit = kbit;
        slot.x = x;
        slot.tx = t;
        slot.end = x;
        slot.alive = true;
        slot.stepped = false;
        slot.version = slot.version.wrapping_add(1);
        self.dead -= 1;
        (id, self.census.add(kind))
    }

    fn collide(&mut self, c: Candidate) {
        let (a, b) = (c.a, c.b);
        {
            let (sa, sb) = (&self.slots[a], &self.slots[b]);
            if !sa.alive || !sb.alive || sa.version != c.va || sb.version != c.vb {
                return;
            }
        }
        let s = c.time;
        let loc = 0.5 * (self.lerp(a, s) + self.lerp(b, s));
        let (ida, idb) = (self.slots[a].id, self.slots[b].id);
        let (ka, kb) = (self.slots[a].kind, self.slots[b].kind);
        let mut changed = false;
        match self.dynamics.react(ka, kb) {
            Reaction::Annihilate { residue } => {
                changed |= self.kill(a);
                changed |= self.kill(b);
                match residue {
                    Some(k) => {
                        let (new_id, ch) = self.place_inert(a, k, loc, s);
                        changed |= ch;
                        self.traj.lineage.push((new_id, ida));
                        self.log(
                            s,
                            EventKind::MergeToNeutral {
                                a: ida,
                                b: idb,
                                new_id,
                                location: loc,
                            },
                        );
                    }
                    None => self.log(
                        s,
                        EventKind::Annihilate {
                            a: ida,
                            b: idb,
                            location: loc,
                        },
                    ),
                }
            }
            Reaction::Merge { kind } => {
                changed |= self.kill(a);
                changed |= self.kill(b);
                let (new_id, ch) = self.place_inert(a, kind, loc, s);
                changed |= ch;
                self.traj.lineage.push((new_id, ida));
                self.log(
                    s,
                    EventKind::MergeToNeutral {
                        a: ida,
                        b: idb,
                        new_id,
                        location: loc,
                    },
                );
            }
            Reaction::Continue {
                survivor,
                kind,
                residue,
                transfer,
            } => {
                let (keep, gone) = match survivor {
                    Side::First => (a, b),
                    Side::Second => (b, a),
                };
                let (keep_id, gone_id) = (self.slots[keep].id, self.slots[gone].id);
                changed |= self.kill(gone);
                if let Some(k) = residue {
                    let (rid, ch) = self.place_inert(gone, k, loc, s);
                    changed |= ch;
                    self.traj.lineage.push((rid, gone_id));
                }
                let new_id = self.fresh_id();
                changed |= self.census.remove(self.slots[keep].kind);
                changed |= self.census.add(kind);
                let inert = self.dynamics.inert(kind);
                let kbit = self.bit_of(kind);
                {
                    let slot = &mut self.slots[keep];
                    slot.id = new_id;
                    slot.kind = kind;
                    slot.kbit = kbit;
                    slot.x = loc;
                    slot.tx = s;
                    slot.version = slot.version.wrapping_add(1);
                    if inert {
                        slot.stepped = false;
                        slot.end = loc;
                    }
                }
                self.traj.lineage.push((new_id, keep_id));
                let event = if transfer {
                    EventKind::MarkTransfer {
                        from: gone_id,
                        to: keep_id,
                        marked: new_id,
                        location: loc,
                    }
                } else {
                    EventKind::MergeToNeutral {
                        a: gone_id,
                        b: keep_id,
                        new_id,
                        location: loc,
                    }
                };
                self.log(s, event);
                if !inert {
                    self.retest_neighbours(keep, s);
                }
            }
        }
        if changed {
            self.interactions = self.census.interaction_possible(self.dynamics);
        }
        self.check_stop();
    }

    fn compact(&mut self) {
        if self.dead == 0 {
            return;
        }
        self.slots.retain(|s| s.alive);
        self.dead = 0;
    }

    fn snapshot(&mut self, t: f64) {
        let mut particles = Vec::with_capacity(self.census.total());
        for i in 0..self.slots.len() {
            if !self.slots[i].alive {
                continue;
            }
            let x = self.pin(i, t);
            let s = &self.slots[i];
            particles.push(Particle {
                id: s.id,
                color: s.kind.0,
                position: x,
                marked: s.kind.1,
            });
        }
        sort_particles(&mut particles);
        self.traj.snapshots.push(Configuration { time: t, particles });
    }
}
