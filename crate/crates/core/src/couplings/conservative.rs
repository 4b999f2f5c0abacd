//! Conservative coupling: colliding typed particles merge into a neutral.

use crate::abbm::{check_nontrivial, CollisionScheme};
use crate::bbm::BBMParams;
use crate::config::{Color, Configuration};
use crate::engine::{self, Dynamics, Kind, Reaction};
use crate::error::{Error, Result};
use crate::event::Trajectory;
use crate::martingales::{log_additive_martingale, ColorFilter};
use crate::rng::RandomStream;

struct Merging;

impl Dynamics for Merging {
    fn interacts(&self, a: Kind, b: Kind) -> bool {
        a.0.is_typed() && b.0.is_typed() && a.0 != b.0
    }
    fn react(&mut self, a: Kind, b: Kind) -> Reaction {
        let (Color::Typed(i), Color::Typed(j)) = (a.0, b.0) else {
            unreachable!("only typed particles merge")
        };
        Reaction::Merge {
            kind: (Color::Neutral(i.min(j), i.max(j)), false),
        }
    }
    fn inert(&self, k: Kind) -> bool {
        k.0.is_neutral()
    }
}

/// BBM for every particle; typed `i != j` meeting at `x` become one neutral
/// `{i, j}` at `x`, which keeps moving and branching but never interacts.
pub fn simulate_conservative(
    initial: &Configuration,
    params: &BBMParams,
    scheme: CollisionScheme,
    rng: &mut RandomStream,
) -> Result<Trajectory> {
    params.validate(initial.time)?;
    check_nontrivial(initial)?;
    if initial.particles.iter().any(|p| p.color.is_neutral() || p.marked) {
        return Err(Error::param(
            "conservative coupling starts from unmarked typed particles only",
        ));
    }
    let dt = scheme.bridge_dt()?;
    Ok(engine::run(initial, &params.settings(dt), &mut Merging, rng))
}

/// `W^i_lambda(t)`: the additive martingale of type `i` plus every neutral containing `i`.
pub fn projection_martingale(c: &Configuration, i: i32, lambda: f64) -> Result<f64> {
    if !c.particles.iter().any(|p| p.color.involves(i)) {
        return Err(Error::UnknownType(i));
    }
    Ok(log_additive_martingale(c, lambda, ColorFilter::Projection(i)).exp())
}

/// Number of particles in the type-`i` projection.
pub fn projection_count(c: &Configuration, i: i32) -> usize {
    c.particles.iter().filter(|p| p.color.involves(i)).count()
}

/// Deletes every neutral particle.
pub fn strip_neutrals(c: &Configuration) -> Configuration {
    c.filtered(|p| p.color.is_typed())
}
