//! Transform machinery for two-queue systems where `Q_2` is 1-limited.
//!
//! With `Q_1` exhaustive the joint queue-length PGF `F_1(z1, z2)` at `Q_1`
//! polling instants follows in closed form: along the curve `z1 = g(z2)`,
//! where `g(z2) = pi_1(lambda_2 (1 - z2))` is the PGF of the `Q_2` arrivals
//! during the busy period generated by one `Q_1` customer, the functional
//! equation collapses to a scalar relation for `psi(z2) = F_1(g(z2), z2)`.
//! The single unknown `C = F_1(g(0), 0)` follows from `psi(1) = 1`.
//!
//! With `Q_1` gated no solution is known; [`g1l_residual`] measures how well
//! an empirical PGF satisfies the functional equation, and [`pcl_g1l`] checks
//! simulated mean waiting times against the pseudo-conservation law.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{invalid, PollingError, Result};
use crate::model::{Discipline, SystemSpec, VisitOrder};
use crate::stats::Moments;

const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_CAP: usize = 100_000;
/// Largest admissible |C_analytic - C_numerical|.
pub const CONSTANT_AGREEMENT: f64 = 1e-6;
/// Below this distance from a removable singularity the limiting form is used.
const SINGULAR_EPS: f64 = 1e-8;
const DISK_SLACK: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Complex value together with its derivative along one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: Complex64,
    pub deriv: Complex64,
}

impl Dual {
    pub fn constant(value: Complex64) -> Self {
        Dual {
            value,
            deriv: c(0.0),
        }
    }

    pub fn variable(value: Complex64) -> Self {
        Dual {
            value,
            deriv: c(1.0),
        }
    }

    fn real(x: f64) -> Self {
        Dual::constant(c(x))
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            value: self.value + o.value,
            deriv: self.deriv + o.deriv,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            value: self.value - o.value,
            deriv: self.deriv - o.deriv,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            value: self.value * o.value,
            deriv: self.deriv * o.value + self.value * o.deriv,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            value: self.value / o.value,
            deriv: (self.deriv * o.value - self.value * o.deriv) / (o.value * o.value),
        }
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            value: self * o.value,
            deriv: self * o.deriv,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

fn lst(d: &DistributionSpec, s: Dual) -> Dual {
    Dual {
        value: d.lst(s.value),
        deriv: d.lst_derivative(s.value) * s.deriv,
    }
}

/// LST of the M/G/1 busy period, the root of `pi = beta(s + lambda (1 - pi))`
/// with `|pi| <= 1`, by plain fixed-point iteration from 1.
pub fn busy_period_lst(service: &DistributionSpec, lambda: f64, s: Complex64) -> Result<Complex64> {
    let mut pi = c(1.0);
    for _ in 0..FIXED_POINT_CAP {
        let next = service.lst(s + lambda * (1.0 - pi));
        if (next - pi).norm() <= FIXED_POINT_TOL {
            return Ok(next);
        }
        pi = next;
    }
    Err(PollingError::Numerical(format!(
        "busy-period transform did not converge at s = {s}"
    )))
}

/// Busy-period LST and its derivative, propagated through `s`.
pub fn busy_period_lst_dual(service: &DistributionSpec, lambda: f64, s: Dual) -> Result<Dual> {
    let pi = busy_period_lst(service, lambda, s.value)?;
    let b1 = service.lst_derivative(s.value + lambda * (1.0 - pi));
    Ok(Dual {
        value: pi,
        deriv: b1 / (1.0 + lambda * b1) * s.deriv,
    })
}

/// Two-queue cyclic system with Poisson arrivals, `Q_1` exhaustive or gated
/// and `Q_2` 1-limited.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoQueueSpec {
    system: SystemSpec,
    pub lambda1: f64,
    pub lambda2: f64,
    pub service1: DistributionSpec,
    pub service2: DistributionSpec,
    pub switch1: DistributionSpec,
    pub switch2: DistributionSpec,
    pub q1_discipline: Discipline,
}

impl TwoQueueSpec {
    pub fn new(system: SystemSpec) -> Result<Self> {
        if system.n() != 2 {
            return Err(invalid("two-queue analysis needs exactly two queues"));
        }
        if system.visit_order() != VisitOrder::Cyclic {
            return Err(invalid("two-queue analysis needs cyclic visit order"));
        }
        let (q1, q2) = (&system.queues()[0], &system.queues()[1]);
        if !(q1.has_poisson_arrivals() && q2.has_poisson_arrivals()) {
            return Err(invalid("two-queue analysis needs Poisson arrivals"));
        }
        if !matches!(q1.discipline, Discipline::Exhaustive | Discipline::Gated) {
            return Err(invalid("Q1 must be exhaustive or gated"));
        }
        if q2.discipline != (Discipline::KLimited { k: 1 }) {
            return Err(invalid("Q2 must be 1-limited"));
        }
        // the system constructor already enforced rho < 1 and lambda_2 E[C] < 1
        Ok(TwoQueueSpec {
            lambda1: q1.arrival_rate(),
            lambda2: q2.arrival_rate(),
            service1: q1.service,
            service2: q2.service,
            switch1: system.switchovers()[0],
            switch2: system.switchovers()[1],
            q1_discipline: q1.discipline,
            system,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// `lambda_1 (1 - z1) + lambda_2 (1 - z2)`
    fn arg(&self, z1: Dual, z2: Dual) -> Dual {
        self.lambda1 * (Dual::real(1.0) - z1) + self.lambda2 * (Dual::real(1.0) - z2)
    }

    fn arg_c(&self, z1: Complex64, z2: Complex64) -> Complex64 {
        self.lambda1 * (1.0 - z1) + self.lambda2 * (1.0 - z2)
    }
}

/// PGF in `z2` of the `Q_2` population replacing one `Q_1` customer during a
/// `Q_1` visit.
pub trait VisitOffspring {
    fn eval(&self, z2: Dual) -> Result<Dual>;
}

/// Arrivals to `Q_2` during an exhaustive `Q_1` busy period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusyPeriodOffspring {
    pub service1: DistributionSpec,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl VisitOffspring for BusyPeriodOffspring {
    fn eval(&self, z2: Dual) -> Result<Dual> {
        let s = self.lambda2 * (Dual::real(1.0) - z2);
        busy_period_lst_dual(&self.service1, self.lambda1, s)
    }
}

impl<F: Fn(Dual) -> Result<Dual>> VisitOffspring for F {
    fn eval(&self, z2: Dual) -> Result<Dual> {
        self(z2)
    }
}

/// Normalization constant `C = F_1(g(0), 0)`, from the analytic derivative
/// route together with the extrapolated numerical limit it was checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationConstant {
    pub value: f64,
    pub numerical_limit: f64,
}

/// Anything that can be evaluated as a joint PGF on the closed unit bidisk.
pub trait JointPgf {
    fn eval(&self, z1: Complex64, z2: Complex64) -> Result<Complex64>;
}

impl<F: Fn(Complex64, Complex64) -> Result<Complex64>> JointPgf for F {
    fn eval(&self, z1: Complex64, z2: Complex64) -> Result<Complex64> {
        self(z1, z2)
    }
}

fn check_disk(z1: Complex64, z2: Complex64) -> Result<()> {
    if z1.norm() <= 1.0 + DISK_SLACK && z2.norm() <= 1.0 + DISK_SLACK {
        Ok(())
    } else {
        Err(PollingError::Domain(z1.to_string(), z2.to_string()))
    }
}

/// Exact joint PGF of the exhaustive/1-limited system at `Q_1` polling instants.
#[derive(Debug, Clone)]
pub struct E1lSolution<G = BusyPeriodOffspring> {
    spec: TwoQueueSpec,
    offspring: G,
    constant: NormalizationConstant,
}

struct PsiParts {
    /// `sigma_1(g, 0) sigma_2(g, z2)`
    a: Dual,
    /// `z2 - beta_2(g, z2)`
    num: Dual,
    /// `z2 - beta_2 sigma_2 sigma_1 (g, z2)`
    den: Dual,
}

impl E1lSolution<BusyPeriodOffspring> {
    pub fn new(spec: &TwoQueueSpec) -> Result<Self> {
        if spec.q1_discipline != Discipline::Exhaustive {
            return Err(invalid("the closed-form solution needs Q1 exhaustive"));
        }
        let g = BusyPeriodOffspring {
            service1: spec.service1,
            lambda1: spec.lambda1,
            lambda2: spec.lambda2,
        };
        E1lSolution::with_offspring(spec, g)
    }
}

impl<G: VisitOffspring> E1lSolution<G> {
    /// Solution with an arbitrary `Q_1` visit offspring PGF `g(z2)` in place
    /// of the busy-period form.
    pub fn with_offspring(spec: &TwoQueueSpec, offspring: G) -> Result<Self> {
        let mut sol = E1lSolution {
            spec: spec.clone(),
            offspring,
            constant: NormalizationConstant {
                value: f64::NAN,
                numerical_limit: f64::NAN,
            },
        };
        let analytic = sol.constant_analytic()?;
        let numerical = sol.constant_numerical()?;
        if !((analytic - numerical).abs() <= CONSTANT_AGREEMENT) {
            return Err(PollingError::Numerical(format!(
                "normalization constant routes disagree: {analytic} vs {numerical}"
            )));
        }
        if !(analytic > 0.0 && analytic <= 1.0 + 1e-12) {
            return Err(PollingError::Numerical(format!(
                "normalization constant {analytic} outside (0, 1]"
            )));
        }
        sol.constant = NormalizationConstant {
            value: analytic,
            numerical_limit: numerical,
        };
        Ok(sol)
    }

    pub fn constant(&self) -> NormalizationConstant {
        self.constant
    }

    pub fn spec(&self) -> &TwoQueueSpec {
        &self.spec
    }

    /// The offspring PGF `g(z2)`.
    pub fn offspring(&self, z2: Complex64) -> Result<Complex64> {
        Ok(self.offspring.eval(Dual::constant(z2))?.value)
    }

    fn psi_parts(&self, z2: Dual) -> Result<PsiParts> {
        let sp = &self.spec;
        let g = self.offspring.eval(z2)?;
        let star = sp.arg(g, z2);
        let beta2 = lst(&sp.service2, star);
        let sigma2 = lst(&sp.switch2, star);
        let sigma1 = lst(&sp.switch1, star);
        let sigma1_empty = lst(&sp.switch1, sp.arg(g, Dual::real(0.0)));
        Ok(PsiParts {
            a: sigma1_empty * sigma2,
            num: z2 - beta2,
            den: z2 - beta2 * sigma2 * sigma1,
        })
    }

    /// L'Hopital at `z2 = 1` with exact derivatives.
    fn constant_analytic(&self) -> Result<f64> {
        let p = self.psi_parts(Dual::variable(c(1.0)))?;
        if p.num.value.norm() > 1e-10 || p.den.value.norm() > 1e-10 {
            return Err(PollingError::Numerical(
                "numerator and denominator must vanish at z2 = 1".into(),
            ));
        }
        if p.num.deriv.norm() < 1e-14 {
            return Err(PollingError::Numerical("degenerate limit at z2 = 1".into()));
        }
        Ok((p.den.deriv / (p.a.value * p.num.deriv)).re)
    }

    /// Limit of `A N / D` as `z2 -> 1^-`, by polynomial extrapolation in the
    /// step over a halving sequence (Neville).
    fn constant_numerical(&self) -> Result<f64> {
        const LEVELS: usize = 8;
        let mut hs = Vec::with_capacity(LEVELS);
        let mut table = Vec::with_capacity(LEVELS);
        let mut h = 0.1;
        for _ in 0..LEVELS {
            let p = self.psi_parts(Dual::constant(c(1.0 - h)))?;
            hs.push(h);
            table.push((p.a.value * p.num.value / p.den.value).re);
            h *= 0.5;
        }
        for level in 1..LEVELS {
            for i in (level..LEVELS).rev() {
                let (h_far, h_near) = (hs[i - level], hs[i]);
                table[i] = (h_far * table[i] - h_near * table[i - 1]) / (h_far - h_near);
            }
        }
        let ratio = table[LEVELS - 1];
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(PollingError::Numerical("extrapolated limit is not positive".into()));
        }
        Ok(1.0 / ratio)
    }

    fn psi_dual(&self, z2: Dual) -> Result<Dual> {
        let p = self.psi_parts(z2)?;
        Ok(self.constant.value * (p.a * p.num / p.den))
    }

    /// `psi(z2) = F_1(g(z2), z2)`.
    pub fn psi(&self, z2: Complex64) -> Result<Complex64> {
        if (z2 - 1.0).norm() < SINGULAR_EPS {
            return Ok(c(1.0));
        }
        Ok(self.psi_dual(Dual::constant(z2))?.value)
    }

    /// `F_1(z1, z2)` on the closed unit bidisk.
    pub fn eval(&self, z1: Complex64, z2: Complex64) -> Result<Complex64> {
        check_disk(z1, z2)?;
        let sp = &self.spec;
        let cst = self.constant.value;
        let t = sp.arg_c(z1, z2);
        let beta2 = sp.service2.lst(t);
        let sigma2 = sp.switch2.lst(t);
        let sigma1_empty = sp.switch1.lst(sp.arg_c(z1, c(0.0)));
        let tail = cst * sigma2 * sigma1_empty;
        if z2.norm() < SINGULAR_EPS {
            // the bracket vanishes at z2 = 0; divide by z2 via its derivative there
            let w = Dual::variable(c(0.0));
            let sigma1 = lst(&sp.switch1, sp.arg(Dual::constant(z1), w));
            let bracket_slope = (sigma1 * self.psi_dual(w)?).deriv;
            return Ok(beta2 * sigma2 * bracket_slope + tail);
        }
        let sigma1 = sp.switch1.lst(t);
        let bracket = sigma1 * self.psi(z2)? - cst * sigma1_empty;
        Ok(beta2 * sigma2 / z2 * bracket + tail)
    }

    pub fn eval_real(&self, z1: f64, z2: f64) -> Result<f64> {
        Ok(self.eval(c(z1), c(z2))?.re)
    }

    /// Mean queue lengths `(E[X_1], E[X_2])` at `Q_1` polling instants from
    /// one-sided numerical derivatives at `(1, 1)` with Richardson extrapolation.
    pub fn mean_queue_lengths(&self) -> Result<[f64; 2]> {
        let first = self.derivative_at_one(|h| self.eval_real(1.0 - h, 1.0))?;
        let second = self.derivative_at_one(|h| self.eval_real(1.0, 1.0 - h))?;
        Ok([first, second])
    }

    fn derivative_at_one(&self, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        const LEVELS: usize = 6;
        let mut hs = Vec::with_capacity(LEVELS);
        let mut table = Vec::with_capacity(LEVELS);
        let mut h = 0.01;
        for _ in 0..LEVELS {
            hs.push(h);
            table.push((1.0 - f(h)?) / h);
            h *= 0.5;
        }
        for level in 1..LEVELS {
            for i in (level..LEVELS).rev() {
                let (h_far, h_near) = (hs[i - level], hs[i]);
                table[i] = (h_far * table[i] - h_near * table[i - 1]) / (h_far - h_near);
            }
        }
        Ok(table[LEVELS - 1])
    }
}

impl<G: VisitOffspring> JointPgf for E1lSolution<G> {
    fn eval(&self, z1: Complex64, z2: Complex64) -> Result<Complex64> {
        E1lSolution::eval(self, z1, z2)
    }
}

/// Normalization constant `C` of the exhaustive/1-limited solution.
pub fn e1l_constant_c(spec: &TwoQueueSpec) -> Result<NormalizationConstant> {
    Ok(E1lSolution::new(spec)?.constant())
}

/// `F_1(z1, z2)` of the exhaustive/1-limited system.
pub fn e1l_eval(spec: &TwoQueueSpec, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    check_disk(z1, z2)?;
    E1lSolution::new(spec)?.eval(z1, z2)
}

const CONTOUR_RADIUS: f64 = 0.5;
const CONTOUR_POINTS: usize = 128;
const CONTOUR_SWITCH: f64 = 1e-3;

/// Right-hand side of the combined functional equation for `F_1` with `Q_2`
/// 1-limited and visit offspring `h1`. Near `z2 = 0` the removable singularity
/// is resolved by the Cauchy integral of the regular part over `|w| = 0.5`.
pub fn functional_rhs<F, H>(spec: &TwoQueueSpec, pgf: &F, h1: H, z1: Complex64, z2: Complex64) -> Result<Complex64>
where
    F: JointPgf + ?Sized,
    H: Fn(Complex64, Complex64) -> Result<Complex64>,
{
    check_disk(z1, z2)?;
    let sigma1_empty = spec.switch1.lst(spec.arg_c(z1, c(0.0)));
    let empty_term = sigma1_empty * pgf.eval(h1(z1, c(0.0))?, c(0.0))?;
    let bracket = |w: Complex64| -> Result<Complex64> {
        let s1 = spec.switch1.lst(spec.arg_c(z1, w));
        Ok(s1 * pgf.eval(h1(z1, w)?, w)? - empty_term)
    };
    let t = spec.arg_c(z1, z2);
    let front = spec.service2.lst(t) * spec.switch2.lst(t);
    let quotient = if z2.norm() < CONTOUR_SWITCH {
        let mut acc = c(0.0);
        for k in 0..CONTOUR_POINTS {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / CONTOUR_POINTS as f64;
            let w = Complex64::from_polar(CONTOUR_RADIUS, theta);
            // (1/2 pi i) \oint q(w) / (w - z2) dw with q(w) = bracket(w) / w
            acc += bracket(w)? / (w - z2);
        }
        acc / CONTOUR_POINTS as f64
    } else {
        bracket(z2)? / z2
    };
    Ok(front * quotient + spec.switch2.lst(t) * empty_term)
}

/// Empirical joint PGF of `(X_1, X_2)` at `Q_1` polling instants, grouped by
/// replication for jackknife standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPgf {
    groups: Vec<Vec<((u32, u32), u64)>>,
    group_counts: Vec<u64>,
    total: u64,
}

impl EmpiricalPgf {
    /// Each group is a list of `[n1, n2, ...]` observations; only the first two
    /// coordinates are used.
    pub fn from_groups(groups: &[Vec<Vec<u32>>]) -> Result<Self> {
        let mut out = Vec::with_capacity(groups.len());
        let mut counts = Vec::with_capacity(groups.len());
        for g in groups {
            let mut hist: HashMap<(u32, u32), u64> = HashMap::new();
            for obs in g {
                if obs.len() < 2 {
                    return Err(invalid("joint observations need two coordinates"));
                }
                *hist.entry((obs[0], obs[1])).or_default() += 1;
            }
            let mut hist: Vec<_> = hist.into_iter().collect();
            hist.sort_unstable();
            counts.push(g.len() as u64);
            out.push(hist);
        }
        let total = counts.iter().sum();
        if out.len() < 2 || counts.iter().any(|&n| n == 0) {
            return Err(PollingError::InsufficientSamples(
                "empirical PGF needs at least two non-empty groups".into(),
            ));
        }
        Ok(EmpiricalPgf {
            groups: out,
            group_counts: counts,
            total,
        })
    }

    pub fn sample_count(&self) -> u64 {
        self.total
    }

    fn group_sums(&self, z1: Complex64, z2: Complex64) -> Vec<Complex64> {
        self.groups
            .iter()
            .map(|hist| {
                hist.iter()
                    .map(|&((n1, n2), k)| k as f64 * z1.powu(n1) * z2.powu(n2))
                    .sum()
            })
            .collect()
    }

    /// Evaluator that leaves out group `g` (or none).
    fn view(&self, skip: Option<usize>) -> impl Fn(Complex64, Complex64) -> Result<Complex64> + '_ {
        move |z1, z2| {
            let sums = self.group_sums(z1, z2);
            let (mut s, mut n) = (sums.iter().sum::<Complex64>(), self.total);
            if let Some(g) = skip {
                s -= sums[g];
                n -= self.group_counts[g];
            }
            Ok(s / n as f64)
        }
    }

    /// Jackknife standard error of `F(z1, z2)` (modulus of the complex spread).
    pub fn std_error(&self, z1: Complex64, z2: Complex64) -> f64 {
        let sums = self.group_sums(z1, z2);
        let total: Complex64 = sums.iter().sum();
        let loo: Vec<Complex64> = sums
            .iter()
            .zip(&self.group_counts)
            .map(|(s, n)| (total - s) / (self.total - n) as f64)
            .collect();
        jackknife_se(&loo)
    }
}

impl JointPgf for EmpiricalPgf {
    fn eval(&self, z1: Complex64, z2: Complex64) -> Result<Complex64> {
        self.view(None)(z1, z2)
    }
}

fn jackknife_se(loo: &[Complex64]) -> f64 {
    let g = loo.len() as f64;
    let mean: Complex64 = loo.iter().sum::<Complex64>() / g;
    ((g - 1.0) / g * loo.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `|LHS - RHS|`
    pub residual: f64,
    /// Jackknife standard error of `LHS - RHS`.
    pub std_error: f64,
    /// Jackknife standard error of the empirical PGF at the point.
    pub pgf_std_error: f64,
    pub samples: u64,
}

fn gated_h1(spec: &TwoQueueSpec) -> impl Fn(Complex64, Complex64) -> Result<Complex64> + '_ {
    move |z1, z2| Ok(spec.service1.lst(spec.arg_c(z1, z2)))
}

/// Residual of the gated/1-limited functional equation for an empirical PGF.
pub fn g1l_residual(pgf: &EmpiricalPgf, spec: &TwoQueueSpec, z1: Complex64, z2: Complex64) -> Result<ResidualReport> {
    if spec.q1_discipline != Discipline::Gated {
        return Err(invalid("the gated residual needs Q1 gated"));
    }
    if pgf.sample_count() < 2 {
        return Err(PollingError::InsufficientSamples("empirical PGF is empty".into()));
    }
    let h1 = gated_h1(spec);
    let diff = |skip: Option<usize>| -> Result<Complex64> {
        let f = pgf.view(skip);
        Ok(f.eval(z1, z2)? - functional_rhs(spec, &f, &h1, z1, z2)?)
    };
    let full = diff(None)?;
    let loo = (0..pgf.groups.len())
        .map(|g| diff(Some(g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport {
        residual: full.norm(),
        std_error: jackknife_se(&loo),
        pgf_std_error: pgf.std_error(z1, z2),
        samples: pgf.sample_count(),
    })
}

/// Residual of the same functional equation for an arbitrary PGF and visit
/// offspring `h1`.
pub fn functional_residual<F, H>(spec: &TwoQueueSpec, pgf: &F, h1: H, z1: Complex64, z2: Complex64) -> Result<f64>
where
    F: JointPgf + ?Sized,
    H: Fn(Complex64, Complex64) -> Result<Complex64>,
{
    Ok((pgf.eval(z1, z2)? - functional_rhs(spec, pgf, h1, z1, z2)?).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PclReport {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// Pseudo-conservation law of the gated/1-limited system for given mean
/// waiting times.
pub fn pcl_g1l(spec: &TwoQueueSpec, mean_w1: f64, mean_w2: f64) -> Result<PclReport> {
    if spec.q1_discipline != Discipline::Gated {
        return Err(invalid("this conservation law holds for Q1 gated"));
    }
    let loads = spec.system.loads();
    let (rho1, rho2, rho) = (loads.rho_i[0], loads.rho_i[1], loads.rho);
    let es = loads.mean_total_switchover;
    let coef = 1.0 - spec.lambda2 * es / (1.0 - rho);
    if !(coef > 0.0) {
        return Err(PollingError::Unstable(format!(
            "lambda_2 E[S] = {} must stay below 1 - rho = {}",
            spec.lambda2 * es,
            1.0 - rho
        )));
    }
    let lhs = rho1 * mean_w1 + rho2 * coef * mean_w2;
    let residual_service = spec.lambda1 * spec.service1.moments().second_moment
        + spec.lambda2 * spec.service2.moments().second_moment;
    let mut rhs = rho * residual_service / (2.0 * (1.0 - rho))
        + es / (2.0 * (1.0 - rho)) * (rho * rho + rho1 * rho1 + rho2 * rho2);
    if es > 0.0 {
        rhs += rho * spec.system.total_switchover_second_moment() / (2.0 * es);
    }
    let relative_gap = if rhs == 0.0 { (lhs - rhs).abs() } else { (lhs - rhs).abs() / rhs };
    Ok(PclReport {
        lhs,
        rhs,
        relative_gap,
    })
}

/// Mean waiting time per queue from replication moments.
pub fn mean_waits(waits: &[Vec<Moments>]) -> Vec<f64> {
    waits
        .iter()
        .map(|reps| crate::stats::pooled(reps).mean)
        .collect()
}
