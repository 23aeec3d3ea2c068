//! Polling-system parameterization and derived load quantities.

use serde::{Deserialize, Serialize};

use crate::distributions::{fit_phase_type, DistributionSpec};
use crate::error::{invalid, PollingError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Discipline {
    Exhaustive,
    Gated,
    /// At most `k` customers per visit; `k = 1` is 1-limited.
    KLimited { k: u32 },
}

impl Discipline {
    pub fn is_branching(&self) -> bool {
        !matches!(self, Discipline::KLimited { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisitOrder {
    #[default]
    Cyclic,
    LongestQueue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    /// Renewal interarrival law; `None` means the queue receives no arrivals.
    #[serde(default)]
    pub interarrival: Option<DistributionSpec>,
    pub service: DistributionSpec,
    pub discipline: Discipline,
}

impl QueueSpec {
    pub fn new(interarrival: DistributionSpec, service: DistributionSpec, discipline: Discipline) -> Self {
        QueueSpec {
            interarrival: Some(interarrival),
            service,
            discipline,
        }
    }

    pub fn arrival_rate(&self) -> f64 {
        self.interarrival.map_or(0.0, |d| 1.0 / d.mean())
    }

    pub fn load(&self) -> f64 {
        self.arrival_rate() * self.service.mean()
    }

    /// Poisson arrivals (or none at all).
    pub fn has_poisson_arrivals(&self) -> bool {
        self.interarrival.map_or(true, |d| d.is_exponential())
    }

    fn validate(&self, index: usize) -> Result<()> {
        if let Some(a) = &self.interarrival {
            a.validate()?;
            if !(a.mean() > 0.0) {
                return Err(invalid(format!("queue {index}: interarrival mean must be positive")));
            }
        }
        self.service.validate()?;
        if !(self.service.mean() > 0.0) {
            return Err(invalid(format!("queue {index}: mean service time must be positive")));
        }
        if let Discipline::KLimited { k: 0 } = self.discipline {
            return Err(invalid(format!("queue {index}: k-limited requires k >= 1")));
        }
        Ok(())
    }
}

/// Load quantities that follow in closed form from a [`SystemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub rho_i: Vec<f64>,
    pub rho: f64,
    pub mean_total_switchover: f64,
    pub mean_cycle: f64,
}

/// A validated, immutable polling system.
///
/// Construction rejects unstable parameter sets, so every consumer may assume
/// `rho < 1` and the mean-cycle condition for k-limited queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemSpec", into = "RawSystemSpec")]
pub struct SystemSpec {
    queues: Vec<QueueSpec>,
    switchovers: Vec<DistributionSpec>,
    visit_order: VisitOrder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSystemSpec {
    pub queues: Vec<QueueSpec>,
    pub switchovers: Vec<DistributionSpec>,
    #[serde(default)]
    pub visit_order: VisitOrder,
}

impl TryFrom<RawSystemSpec> for SystemSpec {
    type Error = PollingError;

    fn try_from(raw: RawSystemSpec) -> Result<Self> {
        SystemSpec::new(raw.queues, raw.switchovers, raw.visit_order)
    }
}

impl From<SystemSpec> for RawSystemSpec {
    fn from(spec: SystemSpec) -> Self {
        RawSystemSpec {
            queues: spec.queues,
            switchovers: spec.switchovers,
            visit_order: spec.visit_order,
        }
    }
}

impl SystemSpec {
    pub fn new(
        queues: Vec<QueueSpec>,
        switchovers: Vec<DistributionSpec>,
        visit_order: VisitOrder,
    ) -> Result<Self> {
        if queues.is_empty() {
            return Err(invalid("a polling system needs at least one queue"));
        }
        if switchovers.len() != queues.len() {
            return Err(invalid(format!(
                "expected {} switch-over distributions, got {}",
                queues.len(),
                switchovers.len()
            )));
        }
        for (i, q) in queues.iter().enumerate() {
            q.validate(i)?;
        }
        for s in &switchovers {
            s.validate()?;
        }
        let spec = SystemSpec {
            queues,
            switchovers,
            visit_order,
        };
        let loads = spec.compute_loads();
        if !(loads.rho < 1.0) {
            return Err(PollingError::Unstable(format!(
                "total load rho = {} must be below 1",
                loads.rho
            )));
        }
        for (i, q) in spec.queues.iter().enumerate() {
            if let Discipline::KLimited { k } = q.discipline {
                let per_cycle = q.arrival_rate() * loads.mean_cycle;
                if !(per_cycle < f64::from(k)) {
                    return Err(PollingError::Unstable(format!(
                        "queue {i}: {per_cycle} arrivals per mean cycle exceed the limit k = {k}"
                    )));
                }
            }
        }
        Ok(spec)
    }

    /// Symmetric system with identical queues and switch-over laws.
    pub fn symmetric(
        n: usize,
        queue: QueueSpec,
        switchover: DistributionSpec,
        visit_order: VisitOrder,
    ) -> Result<Self> {
        SystemSpec::new(vec![queue; n], vec![switchover; n], visit_order)
    }

    pub fn queues(&self) -> &[QueueSpec] {
        &self.queues
    }

    pub fn switchovers(&self) -> &[DistributionSpec] {
        &self.switchovers
    }

    pub fn visit_order(&self) -> VisitOrder {
        self.visit_order
    }

    pub fn n(&self) -> usize {
        self.queues.len()
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        self.queues.iter().map(QueueSpec::arrival_rate).collect()
    }

    pub fn loads(&self) -> Loads {
        self.compute_loads()
    }

    fn compute_loads(&self) -> Loads {
        let rho_i: Vec<f64> = self.queues.iter().map(QueueSpec::load).collect();
        let rho = rho_i.iter().sum::<f64>();
        let mean_total_switchover = self.switchovers.iter().map(DistributionSpec::mean).sum::<f64>();
        Loads {
            rho_i,
            rho,
            mean_total_switchover,
            mean_cycle: mean_total_switchover / (1.0 - rho),
        }
    }

    /// Second moment of the total switch-over time per cycle (independent `S_i`).
    pub fn total_switchover_second_moment(&self) -> f64 {
        let mean = self.compute_loads().mean_total_switchover;
        let var: f64 = self.switchovers.iter().map(|s| s.moments().variance()).sum();
        var + mean * mean
    }

    /// Copy with every switch-over time multiplied by `factor`.
    pub fn with_scaled_switchovers(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(invalid(format!("switch-over multiplier must be positive, got {factor}")));
        }
        SystemSpec::new(
            self.queues.clone(),
            self.switchovers.iter().map(|s| s.scaled(factor)).collect(),
            self.visit_order,
        )
    }

    pub fn with_visit_order(&self, visit_order: VisitOrder) -> Self {
        SystemSpec {
            visit_order,
            ..self.clone()
        }
    }
}

/// `(rho_i, rho, E[S], E[C])` for a validated system.
pub fn derived_loads(spec: &SystemSpec) -> Loads {
    spec.loads()
}

/// Asymmetric parameterization through the imbalance ratios of the arrival
/// rates and mean service times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceParams {
    pub n: usize,
    pub rho: f64,
    pub imbalance_arrival: f64,
    pub imbalance_service: f64,
    pub scv_arrival: f64,
}

impl ImbalanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("imbalance parameterization needs N >= 1"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if !(self.imbalance_arrival >= 1.0 && self.imbalance_service >= 1.0) {
            return Err(invalid("imbalance ratios must be >= 1"));
        }
        if !(self.scv_arrival > 0.0 && self.scv_arrival.is_finite()) {
            return Err(invalid("interarrival scv must be positive"));
        }
        Ok(())
    }

    /// Exhaustive cyclic system with exponential service and phase-type
    /// interarrival times fitted to `scv_arrival`.
    pub fn exhaustive_system(&self, switchover: DistributionSpec) -> Result<SystemSpec> {
        let (lambda, service) = rates_from_imbalance(self)?;
        let queues = lambda
            .iter()
            .zip(&service)
            .map(|(&l, &b)| {
                Ok(QueueSpec::new(
                    fit_phase_type(1.0 / l, self.scv_arrival)?,
                    DistributionSpec::exponential_with_mean(b),
                    Discipline::Exhaustive,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        SystemSpec::new(queues, vec![switchover; self.n], VisitOrder::Cyclic)
    }
}

/// Arrival rates and mean service times from imbalance ratios.
///
/// Both sequences are arithmetic progressions; `lambda_1` is the largest rate
/// and `E[B_1]` the smallest mean service time. Rates average to one and the
/// service scale is fixed by `sum lambda_i E[B_i] = rho`.
pub fn rates_from_imbalance(p: &ImbalanceParams) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let n = p.n;
    if n == 1 && (p.imbalance_arrival != 1.0 || p.imbalance_service != 1.0) {
        return Err(invalid("a single queue cannot have imbalance other than 1"));
    }
    let lambda_min = 2.0 / (1.0 + p.imbalance_arrival);
    let lambda_max = p.imbalance_arrival * lambda_min;
    let step = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    let lambda: Vec<f64> = (0..n)
        .map(|i| lambda_max + (lambda_min - lambda_max) * step(i))
        .collect();
    let shape: Vec<f64> = (0..n)
        .map(|i| 1.0 + (p.imbalance_service - 1.0) * step(i))
        .collect();
    let weight: f64 = lambda.iter().zip(&shape).map(|(l, u)| l * u).sum();
    if !(weight > 0.0) {
        return Err(invalid("infeasible imbalance parameters"));
    }
    let scale = p.rho / weight;
    let service: Vec<f64> = shape.iter().map(|u| u * scale).collect();
    if lambda.iter().chain(&service).any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(invalid("imbalance parameters admit no positive solution"));
    }
    Ok((lambda, service))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(mean: f64) -> DistributionSpec {
        DistributionSpec::exponential_with_mean(mean)
    }

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::Deterministic { value: v }
    }

    fn table1(s: f64) -> SystemSpec {
        SystemSpec::symmetric(
            3,
            QueueSpec::new(exp(1.0), exp(0.25), Discipline::Exhaustive),
            det(s),
            VisitOrder::Cyclic,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_loads() {
        let l = derived_loads(&table1(1.0));
        assert_eq!(l.rho_i, vec![0.25; 3]);
        assert_eq!(l.rho, 0.75);
    }

    #[test]
    fn empty_single_queue() {
        let spec = SystemSpec::new(
            vec![QueueSpec {
                interarrival: None,
                service: exp(1.0),
                discipline: Discipline::Gated,
            }],
            vec![det(2.0)],
            VisitOrder::Cyclic,
        )
        .unwrap();
        let l = derived_loads(&spec);
        assert_eq!(l.rho, 0.0);
        assert_eq!(l.mean_cycle, l.mean_total_switchover);
    }

    #[test]
    fn cycle_time_arithmetic() {
        let l = derived_loads(&table1(10.0));
        assert_eq!(l.mean_total_switchover, 30.0);
        assert!((l.mean_cycle - 120.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unstable() {
        let err = SystemSpec::symmetric(
            2,
            QueueSpec::new(exp(1.0), exp(0.5), Discipline::Gated),
            det(1.0),
            VisitOrder::Cyclic,
        )
        .unwrap_err();
        assert!(matches!(err, PollingError::Unstable(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rejects_overloaded_one_limited() {
        // rho = 0.5, E[S] = 2 -> E[C] = 4, lambda_2 E[C] = 1.2 > 1
        let q1 = QueueSpec::new(exp(1.0 / 0.2), exp(1.0), Discipline::Exhaustive);
        let q2 = QueueSpec::new(exp(1.0 / 0.3), exp(1.0), Discipline::KLimited { k: 1 });
        let err = SystemSpec::new(vec![q1.clone(), q2], vec![det(1.0); 2], VisitOrder::Cyclic).unwrap_err();
        assert!(matches!(err, PollingError::Unstable(_)));
        let q2 = QueueSpec::new(exp(1.0 / 0.3), exp(1.0), Discipline::KLimited { k: 2 });
        assert!(SystemSpec::new(vec![q1, q2], vec![det(1.0); 2], VisitOrder::Cyclic).is_ok());
    }

    #[test]
    fn rejects_malformed() {
        assert!(SystemSpec::new(vec![], vec![], VisitOrder::Cyclic).is_err());
        let q = QueueSpec::new(exp(1.0), exp(0.1), Discipline::KLimited { k: 0 });
        assert!(SystemSpec::new(vec![q], vec![det(1.0)], VisitOrder::Cyclic).is_err());
        let q = QueueSpec::new(exp(1.0), exp(0.1), Discipline::Gated);
        assert!(SystemSpec::new(vec![q], vec![det(1.0), det(1.0)], VisitOrder::Cyclic).is_err());
    }

    fn params(ia: f64, ib: f64) -> ImbalanceParams {
        ImbalanceParams {
            n: 3,
            rho: 0.75,
            imbalance_arrival: ia,
            imbalance_service: ib,
            scv_arrival: 1.0,
        }
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn imbalance_examples() {
        let (l, b) = rates_from_imbalance(&params(1.0, 1.0)).unwrap();
        assert!(close(&l, &[1.0, 1.0, 1.0]) && close(&b, &[0.25, 0.25, 0.25]));
        let (l, b) = rates_from_imbalance(&params(3.0, 1.0)).unwrap();
        assert!(close(&l, &[1.5, 1.0, 0.5]) && close(&b, &[0.25, 0.25, 0.25]));
        let (l, b) = rates_from_imbalance(&params(3.0, 3.0)).unwrap();
        assert!(close(&l, &[1.5, 1.0, 0.5]) && close(&b, &[0.15, 0.30, 0.45]));
    }

    #[test]
    fn imbalance_infeasible() {
        let mut p = params(3.0, 1.0);
        p.n = 1;
        assert!(rates_from_imbalance(&p).is_err());
        p.imbalance_arrival = 0.5;
        assert!(rates_from_imbalance(&p).is_err());
        let mut p = params(1.0, 1.0);
        p.rho = 1.0;
        assert!(rates_from_imbalance(&p).is_err());
    }

    #[test]
    fn imbalance_system_is_stable() {
        let spec = params(3.0, 3.0).exhaustive_system(det(100.0)).unwrap();
        let l = spec.loads();
        assert!((l.rho - 0.75).abs() < 1e-12);
        assert_eq!(l.mean_total_switchover, 300.0);
    }

    #[test]
    fn scaled_switchovers_reject_zero() {
        assert!(table1(1.0).with_scaled_switchovers(0.0).is_err());
        let s = table1(1.0).with_scaled_switchovers(10.0).unwrap();
        assert_eq!(s.loads().mean_total_switchover, 30.0);
    }
}
