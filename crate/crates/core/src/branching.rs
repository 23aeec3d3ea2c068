//! Exact analytics for branching-type polling systems with Poisson arrivals.
//!
//! The joint queue-length vector at successive polling instants is a
//! multi-type branching process with immigration. A visit to `Q_i` replaces
//! each of the `X_i` customers found there by an i.i.d. population with PGF
//! `h_i`; the following switch-over adds Poisson arrivals. Differentiating
//! both steps once and twice at `z = 1` gives affine maps on the mean vector
//! and covariance matrix, whose composition over one cycle has a unique fixed
//! point when `rho < 1`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, PollingError, Result};
use crate::model::{Discipline, QueueSpec, SystemSpec, VisitOrder};
use crate::twoqueue::busy_period_lst;

const TOLERANCE: f64 = 1e-12;
const MAX_CYCLES: usize = 1_000_000;

type Matrix = Vec<Vec<f64>>;

/// First two moments of the M/G/1 busy period started by one customer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BusyPeriodMoments {
    pub mean: f64,
    pub second_moment: f64,
}

pub fn busy_period_moments(queue: &QueueSpec) -> BusyPeriodMoments {
    let b = queue.service.moments();
    let rho = queue.load();
    BusyPeriodMoments {
        mean: b.mean / (1.0 - rho),
        second_moment: b.second_moment / (1.0 - rho).powi(3),
    }
}

/// Derivatives of the offspring PGF `h_i` at `z = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringMoments {
    pub queue: usize,
    /// `d h_i / d z_j`
    pub first: Vec<f64>,
    /// `d^2 h_i / d z_j d z_k`
    pub second: Matrix,
}

impl OffspringMoments {
    /// Covariance matrix of the offspring population of one customer.
    pub fn covariance(&self) -> Matrix {
        let n = self.first.len();
        let a = &self.first;
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let diag = if j == k { a[j] } else { 0.0 };
                        self.second[j][k] + diag - a[j] * a[k]
                    })
                    .collect()
            })
            .collect()
    }
}

fn branching_queue(spec: &SystemSpec, i: usize) -> Result<&QueueSpec> {
    let q = spec
        .queues()
        .get(i)
        .ok_or_else(|| invalid(format!("queue {i} out of range")))?;
    if q.discipline.is_branching() {
        Ok(q)
    } else {
        Err(PollingError::NotBranching { queue: i })
    }
}

/// `Phi_i = 1 - d h_i / d z_i` at `z = 1`: 1 for exhaustive, `1 - rho_i` for gated.
pub fn exhaustiveness(spec: &SystemSpec, i: usize) -> Result<f64> {
    let q = branching_queue(spec, i)?;
    Ok(match q.discipline {
        Discipline::Exhaustive => 1.0,
        _ => 1.0 - q.load(),
    })
}

fn require_poisson(spec: &SystemSpec) -> Result<()> {
    if spec.queues().iter().all(QueueSpec::has_poisson_arrivals) {
        Ok(())
    } else {
        Err(invalid("exact branching analytics require Poisson arrivals"))
    }
}

pub fn offspring_moments(spec: &SystemSpec, i: usize) -> Result<OffspringMoments> {
    require_poisson(spec)?;
    let q = branching_queue(spec, i)?;
    let mut lambda = spec.arrival_rates();
    let (m1, m2) = match q.discipline {
        Discipline::Exhaustive => {
            lambda[i] = 0.0;
            let bp = busy_period_moments(q);
            (bp.mean, bp.second_moment)
        }
        _ => {
            let b = q.service.moments();
            (b.mean, b.second_moment)
        }
    };
    Ok(OffspringMoments {
        queue: i,
        first: lambda.iter().map(|l| l * m1).collect(),
        second: lambda
            .iter()
            .map(|lj| lambda.iter().map(|lk| lj * lk * m2).collect())
            .collect(),
    })
}

/// Mean and covariance of the joint queue length at polling instants of one queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitMoments {
    pub queue: usize,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl VisitMoments {
    /// scv of the own queue length at its polling instants.
    pub fn own_scv(&self) -> Option<f64> {
        let m = self.mean[self.queue];
        (m > 0.0).then(|| self.covariance[self.queue][self.queue] / (m * m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSolution {
    /// Mean joint queue length at `Q_1` polling instants.
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    /// `Var[X_1] / E[X_1]^2`; `None` when `E[X_1] = 0`.
    pub scv_at_q1: Option<f64>,
    /// Moments at the polling instants of every queue.
    pub visit_start: Vec<VisitMoments>,
    pub cycles: usize,
}

struct VisitStep {
    queue: usize,
    offspring: Vec<f64>,
    offspring_cov: Matrix,
    immigration_mean: Vec<f64>,
    immigration_cov: Matrix,
}

impl VisitStep {
    fn apply(&self, mean: &mut [f64], cov: &mut Matrix) {
        let n = mean.len();
        let i = self.queue;
        let a = &self.offspring;
        let mi = mean[i];
        // M = I with column i replaced by a
        let col = |j: usize| a[j] - if j == i { 1.0 } else { 0.0 };
        // MC: rows j -> C[j][*] + col(j) * C[i][*]
        let ci = cov[i].clone();
        for (j, row) in cov.iter_mut().enumerate() {
            let c = col(j);
            for (k, x) in row.iter_mut().enumerate() {
                *x += c * ci[k];
            }
        }
        // (MC)M^T: columns k -> X[*][k] + col(k) * X[*][i]
        for row in cov.iter_mut() {
            let xi = row[i];
            for (k, x) in row.iter_mut().enumerate() {
                *x += col(k) * xi;
            }
        }
        for j in 0..n {
            mean[j] += mi * col(j);
            for k in 0..n {
                cov[j][k] += mi * self.offspring_cov[j][k];
            }
        }
        for j in 0..n {
            mean[j] += self.immigration_mean[j];
            for k in 0..n {
                cov[j][k] += self.immigration_cov[j][k];
            }
        }
        for j in 0..n {
            for k in 0..j {
                let s = 0.5 * (cov[j][k] + cov[k][j]);
                cov[j][k] = s;
                cov[k][j] = s;
            }
        }
    }
}

fn visit_steps(spec: &SystemSpec) -> Result<Vec<VisitStep>> {
    require_poisson(spec)?;
    if spec.visit_order() != VisitOrder::Cyclic {
        return Err(invalid("moment recursion requires cyclic visit order"));
    }
    let lambda = spec.arrival_rates();
    (0..spec.n())
        .map(|i| {
            let off = offspring_moments(spec, i)?;
            let s = spec.switchovers()[i].moments();
            let immigration_mean = lambda.iter().map(|l| l * s.mean).collect();
            let immigration_cov = (0..lambda.len())
                .map(|j| {
                    (0..lambda.len())
                        .map(|k| {
                            let diag = if j == k { lambda[j] * s.mean } else { 0.0 };
                            diag + lambda[j] * lambda[k] * s.variance()
                        })
                        .collect()
                })
                .collect();
            Ok(VisitStep {
                queue: i,
                offspring_cov: off.covariance(),
                offspring: off.first,
                immigration_mean,
                immigration_cov,
            })
        })
        .collect()
}

/// Fixed point of the cycle map on (mean, covariance) at `Q_1` polling instants.
pub fn polling_moments(spec: &SystemSpec) -> Result<MomentSolution> {
    let n = spec.n();
    polling_moments_from(spec, vec![0.0; n], vec![vec![0.0; n]; n])
}

/// As [`polling_moments`], iterating from the given starting moments.
pub fn polling_moments_from(
    spec: &SystemSpec,
    mut mean: Vec<f64>,
    mut cov: Matrix,
) -> Result<MomentSolution> {
    let steps = visit_steps(spec)?;
    let n = spec.n();
    if mean.len() != n || cov.len() != n || cov.iter().any(|r| r.len() != n) {
        return Err(invalid("starting moments have the wrong dimension"));
    }
    let mut cycles = 0;
    loop {
        let (prev_mean, prev_cov) = (mean.clone(), cov.clone());
        for step in &steps {
            step.apply(&mut mean, &mut cov);
        }
        cycles += 1;
        let scale = mean
            .iter()
            .chain(cov.iter().flatten())
            .fold(1.0f64, |acc, x| acc.max(x.abs()));
        let change = mean
            .iter()
            .zip(&prev_mean)
            .chain(cov.iter().flatten().zip(prev_cov.iter().flatten()))
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if !change.is_finite() {
            return Err(PollingError::Numerical("moment recursion diverged".into()));
        }
        if change <= TOLERANCE * scale {
            break;
        }
        if cycles >= MAX_CYCLES {
            return Err(PollingError::Numerical(format!(
                "moment recursion did not converge in {MAX_CYCLES} cycles"
            )));
        }
    }

    let mut visit_start = Vec::with_capacity(n);
    let (mut m, mut c) = (mean.clone(), cov.clone());
    for step in &steps {
        visit_start.push(VisitMoments {
            queue: step.queue,
            mean: m.clone(),
            covariance: c.clone(),
        });
        step.apply(&mut m, &mut c);
    }
    let scv_at_q1 = visit_start[0].own_scv();
    Ok(MomentSolution {
        mean,
        covariance: cov,
        scv_at_q1,
        visit_start,
        cycles,
    })
}

/// Limiting law of `W_i / S` as deterministic switch-over times grow:
/// `scale * U` with `U` uniform on `[support_low, support_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub scale: f64,
    pub support_low: f64,
    pub support_high: f64,
}

impl LimitLaw {
    fn endpoints(&self) -> (f64, f64) {
        (self.scale * self.support_low, self.scale * self.support_high)
    }

    pub fn mean(&self) -> f64 {
        let (lo, hi) = self.endpoints();
        0.5 * (lo + hi)
    }

    pub fn variance(&self) -> f64 {
        let (lo, hi) = self.endpoints();
        (hi - lo).powi(2) / 12.0
    }

    pub fn scv(&self) -> f64 {
        let (lo, hi) = self.endpoints();
        (hi - lo).powi(2) / (3.0 * (hi + lo).powi(2))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.endpoints();
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

pub fn limit_law(spec: &SystemSpec, i: usize) -> Result<LimitLaw> {
    let phi = exhaustiveness(spec, i)?;
    if !spec.switchovers().iter().all(|s| s.is_deterministic()) {
        return Err(invalid("the switch-over limit law needs deterministic switch-over times"));
    }
    let loads = spec.loads();
    if !(loads.mean_total_switchover > 0.0) {
        return Err(invalid("the switch-over limit law needs E[S] > 0"));
    }
    Ok(LimitLaw {
        scale: (1.0 - loads.rho_i[i]) / (1.0 - loads.rho),
        support_low: (1.0 - phi) / phi,
        support_high: 1.0 / phi,
    })
}

/// scv of `X_1` at `Q_1` polling instants with every switch-over time
/// multiplied by each factor in turn.
pub fn scv_decay_ratio(spec: &SystemSpec, factors: &[f64]) -> Result<Vec<f64>> {
    if !spec.switchovers().iter().all(|s| s.is_deterministic()) {
        return Err(invalid("scv decay is defined for deterministic switch-over times"));
    }
    factors
        .iter()
        .map(|&f| {
            let scaled = spec.with_scaled_switchovers(f)?;
            polling_moments(&scaled)?
                .scv_at_q1
                .ok_or_else(|| PollingError::Numerical("zero mean queue length".into()))
        })
        .collect()
}

/// PGF of the joint queue length at `Q_1` polling instants at a real point of
/// `[0,1]^N`, by unrolling the visit and switch-over relations `depth` cycles
/// back and truncating the remaining factor to 1.
pub fn pgf_truncated(spec: &SystemSpec, z: &[f64], depth: usize) -> Result<f64> {
    require_poisson(spec)?;
    let n = spec.n();
    if z.len() != n || z.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(invalid("PGF argument must lie in [0,1]^N"));
    }
    for i in 0..n {
        branching_queue(spec, i)?;
    }
    let lambda = spec.arrival_rates();
    let mut z = z.to_vec();
    let mut value = 1.0;
    for _ in 0..depth {
        for i in (0..n).rev() {
            let arg: f64 = lambda.iter().zip(&z).map(|(l, zj)| l * (1.0 - zj)).sum();
            value *= spec.switchovers()[i].lst_real(arg);
            let q = &spec.queues()[i];
            z[i] = match q.discipline {
                Discipline::Exhaustive => {
                    let others = arg - lambda[i] * (1.0 - z[i]);
                    busy_period_lst(&q.service, lambda[i], Complex64::new(others, 0.0))?.re
                }
                _ => q.service.lst_real(arg),
            };
        }
    }
    Ok(value)
}
