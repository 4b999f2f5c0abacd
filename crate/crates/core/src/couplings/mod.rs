//! Couplings between annihilating and non-annihilating dynamics.

pub mod conservative;
pub mod enhanced;

pub use conservative::{projection_count, projection_martingale, simulate_conservative, strip_neutrals};
pub use enhanced::{
    active_count, derivative_differences, is_active, marked_part, martingale_differences, simulate_enhanced,
    xi_double_prime, xi_prime, EnhancedOptions, EnhancedRun, MarkCase, ZRow, ZTrace,
};

use crate::abbm::{check_nontrivial, CollisionScheme};
use crate::bbm::BBMParams;
use crate::config::Configuration;
use crate::engine::{self, Dynamics, Kind, Reaction, RingAction};
use crate::error::Result;
use crate::event::Trajectory;
use crate::rng::RandomStream;
use crate::stats::{empirical_tv, TvEstimate};

struct SkipFirst {
    skipped: bool,
}

impl Dynamics for SkipFirst {
    fn interacts(&self, a: Kind, b: Kind) -> bool {
        a.0.is_typed() && b.0.is_typed() && a.0 != b.0
    }
    fn react(&mut self, _: Kind, _: Kind) -> Reaction {
        Reaction::Annihilate { residue: None }
    }
    fn inert(&self, k: Kind) -> bool {
        !k.0.is_typed()
    }
    fn on_ring(&mut self, _: f64, _: Kind) -> RingAction {
        if self.skipped {
            RingAction::Branch
        } else {
            self.skipped = true;
            RingAction::Ignore
        }
    }
}

/// ABBM in which the first clock ring produces no offspring.
pub fn simulate_abbm_skip_first(
    initial: &Configuration,
    params: &BBMParams,
    scheme: CollisionScheme,
    rng: &mut RandomStream,
) -> Result<Trajectory> {
    params.validate(initial.time)?;
    check_nontrivial(initial)?;
    let dt = scheme.bridge_dt()?;
    Ok(engine::run(
        initial,
        &params.settings(dt),
        &mut SkipFirst { skipped: false },
        rng,
    ))
}

/// Total variation between the laws of `tau1` and `tau2` from paired samples,
/// on `bins` equal bins plus a bucket for infinite values.
pub fn tv_tau(samples: &[(f64, f64)], bins: usize) -> TvEstimate {
    let (a, b): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    empirical_tv(&a, &b, bins)
}

/// `sup_{t >= 0} t e^{-t}`; the derivative `(1 - t) e^{-t}` vanishes at `t = 1`.
pub fn sup_t_exp_neg_t() -> f64 {
    let t = 1.0f64;
    t * (-t).exp()
}
