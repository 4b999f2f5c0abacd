//! Brownian first-passage and bridge-crossing laws.
//!
//! All functions take the variance rate `sigma2` of the process whose zero
//! crossing matters. The gap between two independent standard Brownian
//! particles has `sigma2 = 2`.

use statrs::function::erf::erfc;

use crate::rng::RandomStream;

/// Variance rate of the gap between two independent standard Brownian motions.
pub const GAP_VARIANCE: f64 = 2.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Asymptotic series of the Mills ratio.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Probability that a bridge of variance rate `sigma2`, pinned at `d1 > 0`
/// at the start and `d2` after `duration`, touches zero in between.
pub fn bridge_crossing_probability(d1: f64, d2: f64, duration: f64, sigma2: f64) -> f64 {
    if d1 <= 0.0 || d2 <= 0.0 {
        return 1.0;
    }
    if duration <= 0.0 {
        return 0.0;
    }
    (-2.0 * d1 * d2 / (sigma2 * duration)).exp()
}

/// `P(first passage <= s, hit)` for the same bridge, for `0 <= s <= duration`.
///
/// Equals the crossing probability at `s = duration`, and 1 there when `d2 <= 0`.
pub fn bridge_crossing_cdf(d1: f64, d2: f64, duration: f64, sigma2: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= duration {
        return bridge_crossing_probability(d1, d2, duration, sigma2);
    }
    let r = duration - s;
    let sd = (sigma2 * s * r / duration).sqrt();
    let m_direct = (d1 * r + d2 * s) / duration;
    let m_image = (-d1 * r + d2 * s) / duration;
    let survive_direct = normal_cdf(-m_direct / sd);
    let log_weight = -2.0 * d1 * d2 / (sigma2 * duration);
    let image = (log_weight + ln_normal_cdf(m_image / sd)).exp();
    (survive_direct + image).clamp(0.0, 1.0)
}

/// Inverse-transform sample of the crossing time (relative to the bridge start)
/// conditional on the bridge crossing zero. `u` is uniform on (0, 1).
pub fn sample_bridge_crossing_time(d1: f64, d2: f64, duration: f64, sigma2: f64, u: f64) -> f64 {
    if d1 <= 0.0 {
        return 0.0;
    }
    let total = bridge_crossing_cdf(d1, d2, duration, sigma2, duration);
    if !(total > 0.0) {
        return duration;
    }
    let target = u * total;
    let (mut lo, mut hi) = (0.0, duration);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bridge_crossing_cdf(d1, d2, duration, sigma2, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * duration {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact first-passage time to zero from `d > 0` (Lévy law):
/// `d^2 / (sigma2 Z^2)` with `Z` standard normal.
pub fn sample_first_passage(d: f64, sigma2: f64, rng: &mut RandomStream) -> f64 {
    let z = rng.normal();
    if z == 0.0 {
        return f64::INFINITY;
    }
    d * d / (sigma2 * z * z)
}

/// `P(first passage from d to zero <= t)` for a driftless Brownian motion.
pub fn first_passage_cdf(d: f64, sigma2: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    2.0 * (1.0 - normal_cdf(d / (sigma2 * t).sqrt()))
}

/// Position at time `s` of a Brownian bridge from `(t0, x0)` to `(t1, x1)`.
pub fn sample_bridge_point(x0: f64, t0: f64, x1: f64, t1: f64, s: f64, sigma2: f64, rng: &mut RandomStream) -> f64 {
    let span = t1 - t0;
    if span <= 0.0 {
        return x1;
    }
    let w = (s - t0) / span;
    let mean = x0 + w * (x1 - x0);
    let var = sigma2 * (s - t0) * (t1 - s) / span;
    mean + var.max(0.0).sqrt() * rng.normal()
}
