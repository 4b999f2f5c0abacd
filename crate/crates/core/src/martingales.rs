//! Additive and derivative martingales, evaluated in log space.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bbm::max_displacement;
use crate::config::{Color, Configuration, Particle};
use crate::error::{Error, Result};
use crate::event::Trajectory;

pub const DEFAULT_WINDOW_EPSILON: f64 = 0.1;

pub fn hat_lambda(lambda: f64) -> f64 {
    1.0 + 0.5 * lambda * lambda
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    acc: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.acc = self.acc * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.acc += (v - self.max).exp();
        }
    }

    /// `ln` of the sum; `-inf` when empty.
    pub fn ln(&self) -> f64 {
        if self.acc == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// Signed sum kept as two log-space accumulators.
#[derive(Clone, Copy, Debug, Default)]
pub struct SignedLogSum {
    pub pos: LogSumExp,
    pub neg: LogSumExp,
}

impl SignedLogSum {
    /// Adds `sign * exp(log_mag)`.
    pub fn add(&mut self, sign: f64, log_mag: f64) {
        if sign > 0.0 {
            self.pos.add(log_mag);
        } else if sign < 0.0 {
            self.neg.add(log_mag);
        }
    }

    pub fn value(&self) -> f64 {
        let (p, n) = (self.pos.ln(), self.neg.ln());
        if p == f64::NEG_INFINITY && n == f64::NEG_INFINITY {
            return 0.0;
        }
        let m = p.max(n);
        m.exp() * ((p - m).exp() - (n - m).exp())
    }

    /// `ln` of the larger of the two parts, a scale for relative comparisons.
    pub fn log_scale(&self) -> f64 {
        self.pos.ln().max(self.neg.ln())
    }
}

/// Which particles a functional sums over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorFilter {
    All,
    /// Typed particles of one label.
    Typed(i32),
    /// Type `i` together with every neutral tag containing `i`.
    Projection(i32),
    Neutral,
}

impl ColorFilter {
    pub fn matches(&self, p: &Particle) -> bool {
        match *self {
            ColorFilter::All => true,
            ColorFilter::Typed(i) => p.color == Color::Typed(i),
            ColorFilter::Projection(i) => p.color.involves(i),
            ColorFilter::Neutral => p.color.is_neutral(),
        }
    }
}

/// `ln sum exp(lambda x_j)` over the particles kept by `keep`.
pub(crate) fn log_exp_sum<'a>(particles: impl IntoIterator<Item = &'a Particle>, lambda: f64) -> f64 {
    let mut acc = LogSumExp::default();
    for p in particles {
        acc.add(lambda * p.position);
    }
    acc.ln()
}

/// `ln W_lambda(t)`; `-inf` when no particle passes the filter.
pub fn log_additive_martingale(c: &Configuration, lambda: f64, filter: ColorFilter) -> f64 {
    -hat_lambda(lambda) * c.time + log_exp_sum(c.particles.iter().filter(|p| filter.matches(p)), lambda)
}

/// `W_lambda(t) = exp(-hat_lambda t) sum exp(lambda x_j)`.
pub fn additive_martingale(c: &Configuration, lambda: f64, filter: ColorFilter) -> f64 {
    log_additive_martingale(c, lambda, filter).exp()
}

/// Half-width of the window around `lambda t`; infinite at `t <= 0`.
pub fn window_halfwidth(t: f64, epsilon: f64) -> f64 {
    if t > 0.0 {
        t.powf(0.5 + epsilon)
    } else {
        f64::INFINITY
    }
}

/// `ln` of the additive martingale restricted to `|x - lambda t| < t^(1/2 + epsilon)`.
pub fn log_truncated_martingale(c: &Configuration, lambda: f64, epsilon: f64) -> f64 {
    let t = c.time;
    let half = window_halfwidth(t, epsilon);
    let centre = lambda * t;
    -hat_lambda(lambda) * t
        + log_exp_sum(
            c.particles.iter().filter(|p| (p.position - centre).abs() < half),
            lambda,
        )
}

pub fn truncated_martingale(c: &Configuration, lambda: f64, epsilon: f64) -> f64 {
    log_truncated_martingale(c, lambda, epsilon).exp()
}

/// `(W - Wbar) / W` from the two logs; 0 when `W = 0`.
pub fn truncation_gap(log_w: f64, log_w_bar: f64) -> f64 {
    if log_w == f64::NEG_INFINITY {
        return 0.0;
    }
    -(log_w_bar - log_w).exp_m1()
}

/// Signed accumulator of `exp(-2t) (sqrt2 t - x) exp(sqrt2 x)` over `particles`.
pub(crate) fn derivative_terms<'a>(particles: impl IntoIterator<Item = &'a Particle>, t: f64) -> SignedLogSum {
    let mut acc = SignedLogSum::default();
    for p in particles {
        let w = SQRT_2 * t - p.position;
        if w != 0.0 {
            acc.add(w.signum(), w.abs().ln() + SQRT_2 * p.position - 2.0 * t);
        }
    }
    acc
}

/// `D(t) = exp(-2t) sum (sqrt2 t - x_j) exp(sqrt2 x_j)`.
pub fn derivative_martingale(c: &Configuration) -> f64 {
    derivative_terms(&c.particles, c.time).value()
}

/// `Q(t) = M - sqrt2 t + 3/(2 sqrt2) ln t`.
pub fn q_statistic(m: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param(format!("Q(t) needs t > 0, got {t}")));
    }
    Ok(m - SQRT_2 * t + 1.5 / SQRT_2 * t.ln())
}

/// Time average of `1{Q(t) <= x}` with the observation grid as the Riemann
/// partition: each sample `(t_k, Q_k)` weighs `t_k - t_{k-1}` (the first
/// weighs `t_0`, or 1 when every time is 0).
pub fn empirical_f(samples: &[(f64, f64)], x: f64) -> f64 {
    let mut total = 0.0;
    let mut below = 0.0;
    let mut prev = 0.0;
    for &(t, q) in samples {
        let w = t - prev;
        prev = t;
        total += w;
        if q <= x {
            below += w;
        }
    }
    if total > 0.0 {
        below / total
    } else if samples.is_empty() {
        0.0
    } else {
        samples.iter().filter(|&&(_, q)| q <= x).count() as f64 / samples.len() as f64
    }
}

/// Indicator that some particle moved a distance of at least 1 within a
/// window of length `delta`, judged between observation times at most
/// `delta` apart (descendants are compared with their ancestor's position).
/// Averaging over replicas gives the probability of a speedy particle.
pub fn speedy_fraction(traj: &Trajectory, delta: f64) -> Result<f64> {
    let snaps = &traj.snapshots;
    let tol = 1e-9 * delta.max(1.0);
    if snaps.windows(2).any(|w| w[1].time - w[0].time > delta + tol) {
        return Err(Error::param(format!("observation spacing exceeds delta = {delta}")));
    }
    for (k, start) in snaps.iter().enumerate() {
        let at_start: HashMap<u64, f64> = start.particles.iter().map(|p| (p.id, p.position)).collect();
        for later in snaps[k + 1..].iter().take_while(|s| s.time - start.time <= delta + tol) {
            for p in &later.particles {
                let mut id = p.id;
                let origin = loop {
                    if let Some(&x) = at_start.get(&id) {
                        break Some(x);
                    }
                    match traj.parent_of(id) {
                        Some(parent) => id = parent,
                        None => break None,
                    }
                };
                if let Some(x0) = origin {
                    if (p.position - x0).abs() >= 1.0 {
                        return Ok(1.0);
                    }
                }
            }
        }
    }
    Ok(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub log_w: f64,
    pub log_w_bar: f64,
    pub d: f64,
    pub n: usize,
    pub m: f64,
    /// NaN at `t = 0`.
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTrace {
    pub lambda: f64,
    pub epsilon_window: f64,
    pub rows: Vec<TraceRow>,
}

impl MartingaleTrace {
    pub fn from_trajectory(traj: &Trajectory, lambda: f64, epsilon: f64) -> Self {
        let rows = traj
            .snapshots
            .iter()
            .map(|c| {
                let m = max_displacement(c);
                TraceRow {
                    time: c.time,
                    log_w: log_additive_martingale(c, lambda, ColorFilter::All),
                    log_w_bar: log_truncated_martingale(c, lambda, epsilon),
                    d: derivative_martingale(c),
                    n: c.len(),
                    m,
                    q: q_statistic(m, c.time).unwrap_or(f64::NAN),
                }
            })
            .collect();
        Self {
            lambda,
            epsilon_window: epsilon,
            rows,
        }
    }

    /// `(t, Q(t))` for `t > 0`.
    pub fn q_samples(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.time > 0.0)
            .map(|r| (r.time, r.q))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,lambda,log_W,log_Wbar,D,N,M,Q")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.time, self.lambda, r.log_w, r.log_w_bar, r.d, r.n, r.m, r.q
            )?;
        }
        Ok(())
    }
}
