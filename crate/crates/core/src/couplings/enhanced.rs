//! Enhanced coupling with marked particles.
//!
//! Before the first branching every clock ring is swallowed except that the
//! first ring of an active particle (time `tau1`) spawns a marked copy; its
//! sign fixes the case. Afterwards everything branches and the marked
//! particles follow the case rules. The two projections `xi_prime` and
//! `xi_double_prime` are then ABBM and ABBM with its first branching
//! suppressed.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::abbm::{check_nontrivial, CollisionScheme};
use crate::bbm::BBMParams;
use crate::config::{Color, Configuration, Particle, NEUTRAL};
use crate::engine::{self, Census, Dynamics, Kind, Reaction, RingAction, Side};
use crate::error::{Error, Result};
use crate::event::Trajectory;
use crate::martingales::{hat_lambda, SignedLogSum};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkCase {
    /// No branching has happened yet.
    Undecided,
    /// The first marked particle is positive.
    Positive,
    /// The first marked particle is negative.
    Negative,
}

impl MarkCase {
    pub fn chi(self) -> i32 {
        match self {
            MarkCase::Undecided => 0,
            MarkCase::Positive => 1,
            MarkCase::Negative => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancedOptions {
    /// Keep unmarked neutrals (inert, branching) instead of deleting them.
    pub retain_neutrals: bool,
    /// End the run at the second branching time.
    pub stop_at_tau2: bool,
}

#[derive(Clone, Debug)]
pub struct EnhancedRun {
    pub trajectory: Trajectory,
    /// Infinite if no branching happened.
    pub tau1: f64,
    pub tau2: f64,
    pub case: MarkCase,
    /// Active particle count at each snapshot.
    pub mu: Vec<usize>,
}

impl EnhancedRun {
    pub fn chi(&self) -> i32 {
        self.case.chi()
    }

    /// The case as seen at time `t`.
    pub fn case_at(&self, t: f64) -> MarkCase {
        if t >= self.tau1 {
            self.case
        } else {
            MarkCase::Undecided
        }
    }
}

/// Unmarked typed particles and marked neutrals.
pub fn is_active(p: &Particle) -> bool {
    kind_active((p.color, p.marked))
}

fn kind_active(k: Kind) -> bool {
    k.0.is_typed() != k.1
}

pub fn active_count(c: &Configuration) -> usize {
    c.particles.iter().filter(|p| is_active(p)).count()
}

struct Marking {
    sign: i32,
    tau1: f64,
    tau2: f64,
    options: EnhancedOptions,
}

impl Marking {
    fn residue(&self) -> Option<Kind> {
        self.options.retain_neutrals.then_some((NEUTRAL, false))
    }

    /// Which of the two kinds plays which role, if they interact.
    fn rule(&self, a: Kind, b: Kind) -> Option<Rule> {
        match (a, b) {
            ((Color::Typed(i), false), (Color::Typed(j), false)) if i == -j => Some(Rule::Unmarked),
            ((Color::Typed(i), true), (Color::Typed(j), false)) if self.sign != 0 && i == self.sign && j == -i => {
                Some(Rule::MarkedMeetsOpposite)
            }
            ((Color::Neutral(..), true), (Color::Typed(j), false)) if self.sign != 0 && j == self.sign => {
                Some(Rule::NeutralMeetsSame)
            }
            _ => None,
        }
    }
}

enum Rule {
    Unmarked,
    /// Marked particle of the case sign against an unmarked opposite one.
    MarkedMeetsOpposite,
    /// Marked neutral against an unmarked particle of the case sign.
    NeutralMeetsSame,
}

impl Dynamics for Marking {
    fn interacts(&self, a: Kind, b: Kind) -> bool {
        self.rule(a, b).is_some() || self.rule(b, a).is_some()
    }

    fn react(&mut self, a: Kind, b: Kind) -> Reaction {
        let (rule, other) = match self.rule(a, b) {
            Some(r) => (r, Side::Second),
            None => (
                self.rule(b, a).expect("react called on a non-interacting pair"),
                Side::First,
            ),
        };
        match rule {
            Rule::Unmarked => Reaction::Annihilate {
                residue: self.residue(),
            },
            Rule::MarkedMeetsOpposite => Reaction::Continue {
                survivor: other,
                kind: (NEUTRAL, true),
                residue: None,
                transfer: false,
            },
            Rule::NeutralMeetsSame => Reaction::Continue {
                survivor: other,
                kind: (Color::Typed(self.sign), true),
                residue: self.residue(),
                transfer: true,
            },
        }
    }

    fn inert(&self, k: Kind) -> bool {
        k.0.is_neutral() && !k.1
    }

    fn on_ring(&mut self, time: f64, kind: Kind) -> RingAction {
        if self.sign == 0 {
            let Color::Typed(s) = kind.0 else {
                return RingAction::Ignore;
            };
            if kind.1 {
                return RingAction::Ignore;
            }
            self.sign = s;
            self.tau1 = time;
            return RingAction::Copy((kind.0, true));
        }
        if self.tau2.is_infinite() && kind_active(kind) {
            self.tau2 = time;
        }
        RingAction::Branch
    }

    fn should_stop(&self, census: &Census) -> bool {
        // Without active kinds no later ring can set tau1 or tau2.
        self.options.stop_at_tau2 && (self.tau2.is_finite() || !census.iter().any(|(k, _)| kind_active(k)))
    }
}

/// Runs the enhanced coupling from a two-type configuration of unmarked particles.
pub fn simulate_enhanced(
    initial: &Configuration,
    params: &BBMParams,
    scheme: CollisionScheme,
    options: EnhancedOptions,
    rng: &mut RandomStream,
) -> Result<EnhancedRun> {
    params.validate(initial.time)?;
    check_nontrivial(initial)?;
    let two_type = initial
        .particles
        .iter()
        .all(|p| !p.marked && matches!(p.color, Color::Typed(1) | Color::Typed(-1)));
    if !two_type {
        return Err(Error::param(
            "enhanced coupling needs unmarked particles of types +1 and -1",
        ));
    }
    let dt = scheme.bridge_dt()?;
    let mut dynamics = Marking {
        sign: 0,
        tau1: f64::INFINITY,
        tau2: f64::INFINITY,
        options,
    };
    let trajectory = engine::run(initial, &params.settings(dt), &mut dynamics, rng);
    let case = match dynamics.sign {
        0 => MarkCase::Undecided,
        s if s > 0 => MarkCase::Positive,
        _ => MarkCase::Negative,
    };
    let mu = trajectory.snapshots.iter().map(active_count).collect();
    Ok(EnhancedRun {
        trajectory,
        tau1: dynamics.tau1,
        tau2: dynamics.tau2,
        case,
        mu,
    })
}

/// Unmarked and marked typed particles, marks dropped.
pub fn xi_prime(c: &Configuration) -> Configuration {
    let particles = c
        .particles
        .iter()
        .filter(|p| p.color.is_typed())
        .map(|p| Particle { marked: false, ..*p })
        .collect();
    Configuration::from_particles(c.time, particles)
}

/// Unmarked typed particles plus marked neutrals recoloured with the sign
/// opposite to the case. Marked typed particles are dropped.
pub fn xi_double_prime(c: &Configuration, case: MarkCase) -> Configuration {
    let particles = c
        .particles
        .iter()
        .filter_map(|p| match (p.color, p.marked) {
            (Color::Typed(_), false) => Some(*p),
            (Color::Neutral(..), true) if case != MarkCase::Undecided => Some(Particle {
                color: Color::Typed(-case.chi()),
                marked: false,
                ..*p
            }),
            _ => None,
        })
        .collect();
    Configuration::from_particles(c.time, particles)
}

/// The marked particles.
pub fn marked_part(c: &Configuration) -> Configuration {
    c.filtered(|p| p.marked)
}

/// One time point of the martingale-difference identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZRow {
    pub time: f64,
    pub z_prime: f64,
    pub z_double_prime: f64,
    pub w_hat: f64,
    pub chi: i32,
    /// `|Z' - Z'' - chi W_hat|` relative to the largest term magnitude.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ZTrace {
    /// `None` for the derivative version.
    pub lambda: Option<f64>,
    pub rows: Vec<ZRow>,
}

impl ZTrace {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,lambda,Z_prime,Z_doubleprime,W_hat,chi")?;
        let lambda = self.lambda.unwrap_or(SQRT_2);
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.time, lambda, r.z_prime, r.z_double_prime, r.w_hat, r.chi
            )?;
        }
        Ok(())
    }
}

/// Charge-weighted sum of per-particle terms `(sign, ln magnitude)`.
fn charged_sum(c: &Configuration, term: impl Fn(&Particle) -> Option<(f64, f64)>) -> SignedLogSum {
    let mut acc = SignedLogSum::default();
    for p in &c.particles {
        let charge = match p.color {
            Color::Typed(1) => 1.0,
            Color::Typed(-1) => -1.0,
            _ => continue,
        };
        if let Some((sign, log_mag)) = term(p) {
            acc.add(charge * sign, log_mag);
        }
    }
    acc
}

fn z_rows(run: &EnhancedRun, term: impl Fn(&Particle, f64) -> Option<(f64, f64)>) -> Vec<ZRow> {
    run.trajectory
        .snapshots
        .iter()
        .map(|c| {
            let case = run.case_at(c.time);
            let chi = case.chi();
            let t = c.time;
            // Each side is summed from its own projected particle set.
            let zp = charged_sum(&xi_prime(c), |p| term(p, t));
            let zpp = charged_sum(&xi_double_prime(c, case), |p| term(p, t));
            let marked = Configuration::from_particles(
                t,
                c.particles
                    .iter()
                    .filter(|p| p.marked)
                    .map(|p| Particle {
                        color: Color::Typed(1),
                        ..*p
                    })
                    .collect(),
            );
            let wh = charged_sum(&marked, |p| term(p, t));
            let (a, b, w) = (zp.value(), zpp.value(), wh.value());
            let scale = [zp.log_scale(), zpp.log_scale(), wh.log_scale()]
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let residual = if scale == f64::NEG_INFINITY {
                0.0
            } else {
                (a - b - chi as f64 * w).abs() / scale.exp()
            };
            ZRow {
                time: t,
                z_prime: a,
                z_double_prime: b,
                w_hat: w,
                chi,
                residual,
            }
        })
        .collect()
}

/// `Z'` and `Z''` (additive martingale differences of the two projections)
/// and the marked-particle martingale `W_hat` at every snapshot.
pub fn martingale_differences(run: &EnhancedRun, lambda: f64) -> ZTrace {
    let rate = hat_lambda(lambda);
    ZTrace {
        lambda: Some(lambda),
        rows: z_rows(run, |p, t| Some((1.0, lambda * p.position - rate * t))),
    }
}

/// Same identity for the derivative martingale.
pub fn derivative_differences(run: &EnhancedRun) -> ZTrace {
    ZTrace {
        lambda: None,
        rows: z_rows(run, |p, t| {
            let w = SQRT_2 * t - p.position;
            (w != 0.0).then(|| (w.signum(), w.abs().ln() + SQRT_2 * p.position - 2.0 * t))
        }),
    }
}
