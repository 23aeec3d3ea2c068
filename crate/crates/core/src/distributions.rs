//! Closed family of nonnegative time distributions used for interarrival,
//! service and switch-over times.
//!
//! Every variant has closed-form first two moments, a closed-form
//! Laplace-Stieltjes transform (LST) and a sampler. [`fit_phase_type`] maps a
//! `(mean, scv)` pair onto the minimal-phase member of the family that matches
//! both moments exactly.

use num_complex::Complex64;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Deterministic {
        value: f64,
    },
    Exponential {
        rate: f64,
    },
    Erlang {
        phases: u32,
        rate: f64,
    },
    /// Erlang(`phases_low`) with probability `prob_low`, otherwise
    /// Erlang(`phases_high`), both with the same phase rate.
    MixedErlang {
        phases_low: u32,
        phases_high: u32,
        prob_low: f64,
        rate: f64,
    },
    Hyperexp2 {
        prob1: f64,
        rate1: f64,
        rate2: f64,
    },
}

/// First two moments of a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub mean: f64,
    pub scv: f64,
    pub second_moment: f64,
}

impl MomentPair {
    pub fn from_mean_second(mean: f64, second_moment: f64) -> Self {
        let var = (second_moment - mean * mean).max(0.0);
        let scv = if mean > 0.0 { var / (mean * mean) } else { 0.0 };
        MomentPair {
            mean,
            scv,
            second_moment,
        }
    }

    pub fn variance(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).max(0.0)
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and positive, got {x}")))
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0,1], got {p}")))
    }
}

impl DistributionSpec {
    pub fn exponential_with_mean(mean: f64) -> Self {
        DistributionSpec::Exponential { rate: 1.0 / mean }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Deterministic { value } => {
                if value.is_finite() && value >= 0.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("deterministic value must be >= 0, got {value}")))
                }
            }
            DistributionSpec::Exponential { rate } => positive("rate", rate),
            DistributionSpec::Erlang { phases, rate } => {
                if phases == 0 {
                    return Err(invalid("Erlang phase count must be >= 1"));
                }
                positive("rate", rate)
            }
            DistributionSpec::MixedErlang {
                phases_low,
                phases_high,
                prob_low,
                rate,
            } => {
                if phases_low == 0 {
                    return Err(invalid("mixed Erlang phase counts must be >= 1"));
                }
                if phases_high != phases_low + 1 {
                    return Err(invalid("mixed Erlang requires phases_high = phases_low + 1"));
                }
                probability("prob_low", prob_low)?;
                positive("rate", rate)
            }
            DistributionSpec::Hyperexp2 {
                prob1,
                rate1,
                rate2,
            } => {
                probability("prob1", prob1)?;
                positive("rate1", rate1)?;
                positive("rate2", rate2)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().mean
    }

    /// Closed-form first two moments.
    pub fn moments(&self) -> MomentPair {
        match *self {
            DistributionSpec::Deterministic { value } => MomentPair {
                mean: value,
                scv: 0.0,
                second_moment: value * value,
            },
            DistributionSpec::Exponential { rate } => MomentPair {
                mean: 1.0 / rate,
                scv: 1.0,
                second_moment: 2.0 / (rate * rate),
            },
            DistributionSpec::Erlang { phases, rate } => {
                let k = f64::from(phases);
                MomentPair {
                    mean: k / rate,
                    scv: 1.0 / k,
                    second_moment: k * (k + 1.0) / (rate * rate),
                }
            }
            DistributionSpec::MixedErlang {
                phases_low,
                prob_low: p,
                rate,
                ..
            } => {
                let lo = f64::from(phases_low);
                let hi = lo + 1.0;
                let mean = (p * lo + (1.0 - p) * hi) / rate;
                let second = (p * lo * (lo + 1.0) + (1.0 - p) * hi * (hi + 1.0)) / (rate * rate);
                MomentPair::from_mean_second(mean, second)
            }
            DistributionSpec::Hyperexp2 {
                prob1: p,
                rate1,
                rate2,
            } => {
                let mean = p / rate1 + (1.0 - p) / rate2;
                let second = 2.0 * p / (rate1 * rate1) + 2.0 * (1.0 - p) / (rate2 * rate2);
                MomentPair::from_mean_second(mean, second)
            }
        }
    }

    /// Laplace-Stieltjes transform `E[exp(-s X)]`, valid for `Re(s) >= 0`.
    pub fn lst(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            DistributionSpec::Deterministic { value } => (-s * value).exp(),
            DistributionSpec::Exponential { rate } => rate / (s + rate),
            DistributionSpec::Erlang { phases, rate } => (rate / (s + rate)).powu(phases),
            DistributionSpec::MixedErlang {
                phases_low,
                prob_low,
                rate,
                ..
            } => {
                let base = rate / (s + rate);
                let lo = base.powu(phases_low);
                lo * (prob_low * one + (1.0 - prob_low) * base)
            }
            DistributionSpec::Hyperexp2 {
                prob1,
                rate1,
                rate2,
            } => prob1 * rate1 / (s + rate1) + (1.0 - prob1) * rate2 / (s + rate2),
        }
    }

    /// Derivative of [`lst`](Self::lst) with respect to `s`.
    pub fn lst_derivative(&self, s: Complex64) -> Complex64 {
        match *self {
            DistributionSpec::Deterministic { value } => -value * (-s * value).exp(),
            DistributionSpec::Exponential { rate } => -rate / ((s + rate) * (s + rate)),
            DistributionSpec::Erlang { phases, rate } => erlang_lst_derivative(phases, rate, s),
            DistributionSpec::MixedErlang {
                phases_low,
                phases_high,
                prob_low,
                rate,
            } => {
                prob_low * erlang_lst_derivative(phases_low, rate, s)
                    + (1.0 - prob_low) * erlang_lst_derivative(phases_high, rate, s)
            }
            DistributionSpec::Hyperexp2 {
                prob1,
                rate1,
                rate2,
            } => {
                -prob1 * rate1 / ((s + rate1) * (s + rate1))
                    - (1.0 - prob1) * rate2 / ((s + rate2) * (s + rate2))
            }
        }
    }

    pub fn lst_real(&self, s: f64) -> f64 {
        self.lst(Complex64::new(s, 0.0)).re
    }

    pub fn is_exponential(&self) -> bool {
        matches!(
            self,
            DistributionSpec::Exponential { .. } | DistributionSpec::Erlang { phases: 1, .. }
        )
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, DistributionSpec::Deterministic { .. })
    }

    /// Same law with every variate multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            DistributionSpec::Deterministic { value } => DistributionSpec::Deterministic {
                value: value * factor,
            },
            DistributionSpec::Exponential { rate } => DistributionSpec::Exponential {
                rate: rate / factor,
            },
            DistributionSpec::Erlang { phases, rate } => DistributionSpec::Erlang {
                phases,
                rate: rate / factor,
            },
            DistributionSpec::MixedErlang {
                phases_low,
                phases_high,
                prob_low,
                rate,
            } => DistributionSpec::MixedErlang {
                phases_low,
                phases_high,
                prob_low,
                rate: rate / factor,
            },
            DistributionSpec::Hyperexp2 {
                prob1,
                rate1,
                rate2,
            } => DistributionSpec::Hyperexp2 {
                prob1,
                rate1: rate1 / factor,
                rate2: rate2 / factor,
            },
        }
    }

    /// Draws one variate.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Deterministic { value } => value,
            DistributionSpec::Exponential { rate } => exp1(rng) / rate,
            DistributionSpec::Erlang { phases, rate } => gamma_int(rng, phases) / rate,
            DistributionSpec::MixedErlang {
                phases_low,
                phases_high,
                prob_low,
                rate,
            } => {
                let k = if rng.random::<f64>() < prob_low {
                    phases_low
                } else {
                    phases_high
                };
                gamma_int(rng, k) / rate
            }
            DistributionSpec::Hyperexp2 {
                prob1,
                rate1,
                rate2,
            } => {
                let rate = if rng.random::<f64>() < prob1 {
                    rate1
                } else {
                    rate2
                };
                exp1(rng) / rate
            }
        }
    }
}

fn erlang_lst_derivative(phases: u32, rate: f64, s: Complex64) -> Complex64 {
    let k = f64::from(phases);
    let base = rate / (s + rate);
    -k * base.powu(phases) / (s + rate)
}

/// Unit-rate exponential by inversion; `1 - U` lies in (0, 1].
#[inline]
fn exp1<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Sum of `k` unit-rate exponentials.
#[inline]
fn gamma_int<R: rand::Rng + ?Sized>(rng: &mut R, k: u32) -> f64 {
    let mut total = 0.0;
    let mut prod = 1.0;
    for i in 0..k {
        prod *= 1.0 - rng.random::<f64>();
        // flush before the product can underflow
        if i % 16 == 15 {
            total -= prod.ln();
            prod = 1.0;
        }
    }
    total - prod.ln()
}

/// Two-moment phase-type fit.
///
/// * `scv == 0`: deterministic.
/// * `scv < 1`: mixture of Erlang(k-1) and Erlang(k) with a common rate, where
///   `1/k <= scv <= 1/(k-1)`; pure Erlang(k) when `scv == 1/k`.
/// * `scv == 1`: exponential.
/// * `scv > 1`: two-phase hyperexponential with balanced means.
pub fn fit_phase_type(mean: f64, scv: f64) -> Result<DistributionSpec> {
    positive("mean", mean)?;
    if !scv.is_finite() || scv < 0.0 {
        return Err(invalid(format!("scv must be finite and >= 0, got {scv}")));
    }
    if scv == 0.0 {
        return Ok(DistributionSpec::Deterministic { value: mean });
    }
    if scv == 1.0 {
        return Ok(DistributionSpec::Exponential { rate: 1.0 / mean });
    }
    if scv > 1.0 {
        let root = ((scv - 1.0) / (scv + 1.0)).sqrt();
        let p1 = 0.5 * (1.0 + root);
        let p2 = 1.0 - p1;
        return Ok(DistributionSpec::Hyperexp2 {
            prob1: p1,
            rate1: 2.0 * p1 / mean,
            rate2: 2.0 * p2 / mean,
        });
    }
    let inv = 1.0 / scv;
    let nearest = inv.round();
    // scv = 1/k up to representation error: pure Erlang
    if (inv - nearest).abs() <= 1e-9 * inv {
        let k = nearest as u32;
        return Ok(DistributionSpec::Erlang {
            phases: k,
            rate: f64::from(k) / mean,
        });
    }
    let k = inv.ceil();
    let p = (k * scv - (k * (1.0 + scv) - k * k * scv).sqrt()) / (1.0 + scv);
    let k = k as u32;
    Ok(DistributionSpec::MixedErlang {
        phases_low: k - 1,
        phases_high: k,
        prob_low: p,
        rate: (f64::from(k) - p) / mean,
    })
}
