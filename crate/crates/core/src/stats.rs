//! Small estimators and tests used by the experiments and the acceptance suite.

use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;
/// Smallest expected count per bin in the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;

/// Sample mean and normal-approximation halfwidth at `confidence`.
pub fn mean_ci(samples: &[f64], confidence: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param(format!("confidence must lie in (0,1), got {confidence}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let (mean, se) = mean_se(samples);
    Ok((mean, z * se))
}

/// Mean and standard error; the error is 0 for fewer than two samples.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of the non-NaN values; NaN when there are none.
pub fn median(samples: &[f64]) -> f64 {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Proportion and its binomial standard error.
pub fn proportion(successes: usize, n: usize) -> (f64, f64) {
    let p = successes as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    pub bins: usize,
    pub bin_width: f64,
}

/// Histogram total variation `1/2 sum |p_a - p_b|` on `bins` equal bins
/// spanning the finite values of both samples, plus one bucket for `+inf`.
/// NaN values are ignored.
pub fn empirical_tv(a: &[f64], b: &[f64], bins: usize) -> TvEstimate {
    let bins = bins.max(1);
    let finite = a.iter().chain(b).copied().filter(|x| x.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let histogram = |s: &[f64]| {
        let mut h = vec![0usize; bins + 1];
        let mut n = 0usize;
        for &x in s {
            if x.is_nan() {
                continue;
            }
            n += 1;
            let idx = if x == f64::INFINITY {
                bins
            } else {
                (((x - lo) / width) as usize).min(bins - 1)
            };
            h[idx] += 1;
        }
        (h, n)
    };
    let (ha, na) = histogram(a);
    let (hb, nb) = histogram(b);
    let tv = match (na, nb) {
        (0, 0) => 0.0,
        (0, _) | (_, 0) => 1.0,
        _ => {
            0.5 * ha
                .iter()
                .zip(&hb)
                .map(|(&x, &y)| (x as f64 / na as f64 - y as f64 / nb as f64).abs())
                .sum::<f64>()
        }
    };
    TvEstimate {
        tv,
        bins,
        bin_width: width,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    /// Rejection threshold for the statistic, where one exists.
    pub critical: f64,
    pub p_value: f64,
    pub significance: f64,
    pub reject: bool,
}

impl TestOutcome {
    pub fn passes(&self) -> bool {
        !self.reject
    }
}

/// Asymptotic two-sample Kolmogorov-Smirnov test.
pub fn two_sample_ks(a: &[f64], b: &[f64], significance: f64) -> Result<TestOutcome> {
    let got = a.len().min(b.len());
    if got < 30 {
        return Err(Error::TooFewSamples { needed: 30, got });
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let scale = ((n * m) as f64 / (n + m) as f64).sqrt();
    let critical = (-(significance / 2.0).ln() / 2.0).sqrt() / scale;
    let p_value = kolmogorov_tail(d * scale);
    Ok(TestOutcome {
        statistic: d,
        critical,
        p_value,
        significance,
        reject: d > critical,
    })
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
pub fn ks_uniform(samples: &[f64], significance: f64) -> Result<TestOutcome> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::TooFewSamples { needed: 30, got: n });
    }
    let mut u = samples.to_vec();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
        .fold(0.0, f64::max);
    let scale = (n as f64).sqrt();
    let critical = (-(significance / 2.0).ln() / 2.0).sqrt() / scale;
    Ok(TestOutcome {
        statistic: d,
        critical,
        p_value: kolmogorov_tail(d * scale),
        significance,
        reject: d > critical,
    })
}

/// `P(K > x)` for the Kolmogorov distribution.
fn kolmogorov_tail(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareOutcome {
    pub outcome: TestOutcome,
    pub dof: usize,
    /// Lower edges of the bins; the last bin is `k >= edges.last()`.
    pub edges: Vec<u64>,
    pub observed: Vec<usize>,
    pub expected: Vec<f64>,
}

/// Chi-square goodness of fit of integer samples to `pmf` on `first..`.
/// Adjacent values are pooled until every bin expects at least
/// [`MIN_EXPECTED`] counts, and the tail `k >= K` forms the last bin.
pub fn chi_square_gof(
    samples: &[u64],
    pmf: impl Fn(u64) -> f64,
    first: u64,
    significance: f64,
) -> Result<ChiSquareOutcome> {
    let n = samples.len() as f64;
    if n < 2.0 * MIN_EXPECTED {
        return Err(Error::TooFewSamples {
            needed: 2 * MIN_EXPECTED as usize,
            got: samples.len(),
        });
    }
    let mut edges = vec![first];
    let mut expected = Vec::new();
    let mut acc = 0.0;
    let mut used = 0.0;
    let mut k = first;
    loop {
        let pk = pmf(k);
        acc += pk;
        k += 1;
        let tail = (1.0 - used - acc).max(0.0);
        if acc * n >= MIN_EXPECTED && tail * n >= MIN_EXPECTED {
            expected.push(acc * n);
            used += acc;
            acc = 0.0;
            edges.push(k);
        } else if tail * n < MIN_EXPECTED {
            break;
        }
        if k - first > 1_000_000 {
            return Err(Error::param("pmf tail does not decay"));
        }
    }
    // Everything from the last edge onwards is the tail bin.
    expected.push((1.0 - used).max(0.0) * n);
    let mut observed = vec![0usize; edges.len()];
    for &s in samples {
        if s < first {
            return Err(Error::param(format!("sample {s} below the support start {first}")));
        }
        let idx = edges.partition_point(|&e| e <= s) - 1;
        observed[idx] += 1;
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = edges.len().saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::param(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - significance);
    Ok(ChiSquareOutcome {
        outcome: TestOutcome {
            statistic,
            critical,
            p_value: 1.0 - dist.cdf(statistic),
            significance,
            reject: statistic > critical,
        },
        dof,
        edges,
        observed,
        expected,
    })
}

/// Exact two-sided sign test for median zero; zeros are dropped.
pub fn sign_test(samples: &[f64], significance: f64) -> Result<TestOutcome> {
    let pos = samples.iter().filter(|&&x| x > 0.0).count() as u64;
    let neg = samples.iter().filter(|&&x| x < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let binom = Binomial::new(0.5, n).map_err(|e| Error::param(e.to_string()))?;
    let small = pos.min(neg);
    let p_value = (2.0 * binom.cdf(small)).min(1.0);
    Ok(TestOutcome {
        statistic: pos as f64 - neg as f64,
        critical: f64::NAN,
        p_value,
        significance,
        reject: p_value < significance,
    })
}

/// Geometric law `P(N = k) = p (1 - p)^(k - 1)`, `k >= 1`.
pub fn geometric_pmf(p: f64) -> impl Fn(u64) -> f64 {
    move |k| if k == 0 { 0.0 } else { p * (1.0 - p).powi(k as i32 - 1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn mean_ci_examples() {
        assert_eq!(mean_ci(&[1.0; 4], 0.95).unwrap(), (1.0, 0.0));
        let alt: Vec<f64> = (0..20_000).map(|i| (i % 2) as f64).collect();
        assert!((mean_ci(&alt, 0.95).unwrap().0 - 0.5).abs() < 1e-12);
        assert!(matches!(mean_ci(&[1.0], 0.95), Err(Error::TooFewSamples { .. })));
        let mut rng = RandomStream::new(5, 0);
        let e: Vec<f64> = (0..100_000).map(|_| rng.exp1()).collect();
        let (m, se) = mean_se(&e);
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn tv_examples() {
        let a = [0.1, 0.5, 0.9, f64::INFINITY];
        assert_eq!(empirical_tv(&a, &a, 10).tv, 0.0);
        assert_eq!(empirical_tv(&[0.0, 0.1], &[5.0, 6.0], 10).tv, 1.0);
        assert_eq!(empirical_tv(&[1.0], &[f64::INFINITY], 10).tv, 1.0);
        let b = [0.3, 0.2, f64::INFINITY, f64::INFINITY];
        assert_eq!(empirical_tv(&a, &b, 7).tv, empirical_tv(&b, &a, 7).tv);
    }

    #[test]
    fn tv_exp_gamma() {
        let mut rng = RandomStream::new(6, 0);
        let n = 1_000_000;
        let a: Vec<f64> = (0..n).map(|_| rng.exp1()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.exp1() + rng.exp1()).collect();
        let tv = empirical_tv(&a, &b, 200).tv;
        assert!((tv - (-1.0f64).exp()).abs() < 0.01, "{tv}");
    }

    #[test]
    fn ks_calibration_and_power() {
        let mut rng = RandomStream::new(7, 0);
        let mut passes = 0;
        for _ in 0..500 {
            let a: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
            passes += two_sample_ks(&a, &b, 0.01).unwrap().passes() as usize;
        }
        assert!(passes >= 490, "{passes}");
        let a: Vec<f64> = (0..100).map(|_| rng.exp1()).collect();
        let b: Vec<f64> = (0..100).map(|_| 1.0 + rng.exp1()).collect();
        assert!(two_sample_ks(&a, &b, 0.01).unwrap().reject);
        assert!(matches!(
            two_sample_ks(&a[..29], &b, 0.01),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ks_uniform_examples() {
        let mut rng = RandomStream::new(9, 0);
        let u: Vec<f64> = (0..2000).map(|_| rng.uniform()).collect();
        assert!(ks_uniform(&u, 0.01).unwrap().passes());
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        assert!(ks_uniform(&sq, 0.01).unwrap().reject);
    }

    #[test]
    fn ks_statistic_by_hand() {
        let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 + 10.0).collect();
        assert!((two_sample_ks(&a, &b, 0.01).unwrap().statistic - 0.25).abs() < 1e-12);
    }

    #[test]
    fn chi_square_geometric() {
        let mut rng = RandomStream::new(8, 0);
        let p: f64 = 0.2;
        let draw = |rng: &mut RandomStream| 1 + (rng.uniform_open().ln() / (1.0 - p).ln()).floor() as u64;
        let s: Vec<u64> = (0..5000).map(|_| draw(&mut rng)).collect();
        let r = chi_square_gof(&s, geometric_pmf(p), 1, 0.01).unwrap();
        assert!(r.outcome.passes(), "{r:?}");
        assert!(r.expected.iter().all(|&e| e >= MIN_EXPECTED));
        assert_eq!(r.observed.iter().sum::<usize>(), s.len());
        assert!((r.expected.iter().sum::<f64>() - s.len() as f64).abs() < 1e-6);
        let wrong = chi_square_gof(&s, geometric_pmf(0.25), 1, 0.01).unwrap();
        assert!(wrong.outcome.reject);
    }

    #[test]
    fn sign_test_examples() {
        let sym: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(sign_test(&sym, 0.01).unwrap().passes());
        let skew: Vec<f64> = (0..100).map(|i| if i % 10 == 0 { -1.0 } else { 1.0 }).collect();
        assert!(sign_test(&skew, 0.01).unwrap().reject);
        assert!(sign_test(&[0.0], 0.01).is_err());
    }
}
