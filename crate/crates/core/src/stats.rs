//! Running moments, replication-based confidence intervals and the
//! Kolmogorov-Smirnov distance.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{PollingError, Result};

/// Running count, mean and centered sum of squares (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    /// Combines two disjoint sample sets (Chan et al.).
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        Moments {
            count: n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    /// Inverse of [`merge`](Self::merge): removes a subset that was merged in.
    pub fn without(&self, part: &Moments) -> Moments {
        if part.count == 0 {
            return *self;
        }
        let n = self.count - part.count;
        if n == 0 {
            return Moments::default();
        }
        let (nt, np, nr) = (self.count as f64, part.count as f64, n as f64);
        let mean = (nt * self.mean - np * part.mean) / nr;
        let delta = part.mean - mean;
        Moments {
            count: n,
            mean,
            m2: (self.m2 - part.m2 - delta * delta * np * nr / nt).max(0.0),
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Squared coefficient of variation, `None` when the mean is zero.
    pub fn scv(&self) -> Option<f64> {
        if self.mean == 0.0 || self.count == 0 {
            None
        } else {
            Some(self.variance() / (self.mean * self.mean))
        }
    }
}

pub fn pooled(parts: &[Moments]) -> Moments {
    parts.iter().fold(Moments::default(), |acc, m| acc.merge(m))
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile_975(dof: u64) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(1.959_963_984_540_054)
}

/// Point estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.half_width
    }

    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.value + self.half_width >= lo && self.value - self.half_width <= hi
    }
}

/// Mean and scv of a pooled sample with replication-based 95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScvEstimate {
    pub count: u64,
    pub mean: Estimate,
    pub scv: Estimate,
}

/// Pools per-replication moments. The mean interval is the t-interval over
/// replication means; the scv interval uses the leave-one-replication-out
/// jackknife.
pub fn estimate_scv(replications: &[Moments]) -> Result<ScvEstimate> {
    let reps: Vec<Moments> = replications.iter().copied().filter(|m| m.count > 0).collect();
    if reps.len() < 2 {
        return Err(PollingError::InsufficientSamples(format!(
            "need at least two non-empty replications, got {}",
            reps.len()
        )));
    }
    let total = pooled(&reps);
    let scv = total
        .scv()
        .ok_or_else(|| PollingError::Numerical("scv undefined for zero mean".into()))?;
    let r = reps.len() as f64;
    let t = t_quantile_975(reps.len() as u64 - 1);

    let rep_means = Moments::from_slice(&reps.iter().map(|m| m.mean).collect::<Vec<_>>());
    let mean_hw = t * (rep_means.variance() / r).sqrt();

    let loo: Vec<f64> = reps
        .iter()
        .map(|m| total.without(m).scv().unwrap_or(scv))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / r;
    let jk_var = (r - 1.0) / r * loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>();

    Ok(ScvEstimate {
        count: total.count,
        mean: Estimate {
            value: total.mean,
            half_width: mean_hw,
        },
        scv: Estimate {
            value: scv,
            half_width: t * jk_var.sqrt(),
        },
    })
}

/// [`estimate_scv`] on a raw sample split into `batches` contiguous batches.
pub fn estimate_scv_samples(samples: &[f64], batches: usize) -> Result<ScvEstimate> {
    if batches < 2 || samples.len() < batches {
        return Err(PollingError::InsufficientSamples(format!(
            "{} samples cannot form {batches} batches",
            samples.len()
        )));
    }
    let size = samples.len() / batches;
    let parts: Vec<Moments> = (0..batches)
        .map(|b| {
            let end = if b + 1 == batches { samples.len() } else { (b + 1) * size };
            Moments::from_slice(&samples[b * size..end])
        })
        .collect();
    estimate_scv(&parts)
}

/// t-interval over independent replication values.
pub fn mean_interval(values: &[f64]) -> Estimate {
    let m = Moments::from_slice(values);
    let hw = if values.len() < 2 {
        f64::INFINITY
    } else {
        t_quantile_975(values.len() as u64 - 1) * (m.variance() / values.len() as f64).sqrt()
    };
    Estimate {
        value: m.mean,
        half_width: hw,
    }
}

/// Sup-distance between the empirical CDF of `samples` and `cdf`.
/// Sorts `samples` in place.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn merge_and_remove_are_inverse() {
        let a = Moments::from_slice(&[1.0, 2.0, 4.0, 8.0]);
        let b = Moments::from_slice(&[3.0, 5.0, 7.0]);
        let all = Moments::from_slice(&[1.0, 2.0, 4.0, 8.0, 3.0, 5.0, 7.0]);
        let m = a.merge(&b);
        assert_eq!(m.count, all.count);
        assert!((m.mean - all.mean).abs() < 1e-14);
        assert!((m.m2 - all.m2).abs() < 1e-12);
        let back = m.without(&b);
        assert!((back.mean - a.mean).abs() < 1e-14);
        assert!((back.m2 - a.m2).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_have_zero_scv() {
        let reps = vec![Moments::from_slice(&[2.5; 10]); 4];
        let e = estimate_scv(&reps).unwrap();
        assert_eq!(e.scv.value, 0.0);
        assert_eq!(e.scv.half_width, 0.0);
    }

    #[test]
    fn zero_mean_is_flagged() {
        let reps = vec![Moments::from_slice(&[0.0; 5]); 3];
        assert!(matches!(estimate_scv(&reps), Err(PollingError::Numerical(_))));
        assert!(estimate_scv(&reps[..1]).is_err());
    }

    #[test]
    fn exponential_scv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..1_000_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let e = estimate_scv_samples(&xs, 20).unwrap();
        assert!((0.98..=1.02).contains(&e.scv.value), "{e:?}");
        assert!(e.scv.contains(1.0) || (e.scv.value - 1.0).abs() < 3.0 * e.scv.half_width);
    }

    #[test]
    fn uniform_scv_is_one_third() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let e = estimate_scv_samples(&xs, 20).unwrap();
        assert!((e.scv.value - 1.0 / 3.0).abs() < 0.005, "{e:?}");
    }

    #[test]
    fn t_quantiles() {
        assert!((t_quantile_975(1) - 12.706).abs() < 1e-3);
        assert!((t_quantile_975(199) - 1.972).abs() < 1e-3);
    }

    #[test]
    fn ks_of_uniform_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_distance(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.01, "{d}");
        let mut shifted: Vec<f64> = xs.iter().map(|x| x * 0.5).collect();
        assert!(ks_distance(&mut shifted, |x| x.clamp(0.0, 1.0)) > 0.45);
    }
}
