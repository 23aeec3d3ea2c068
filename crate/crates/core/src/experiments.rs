//! Batch experiments behind the command-line runner.
//!
//! Each `run_*` function returns typed results; [`run`] dispatches on an
//! [`ExperimentConfig`] and renders a [`Report`] with one CSV row per cell.
//! Every row repeats the full parameter tuple and the master seed.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::branching::{limit_law, polling_moments, LimitLaw};
use crate::config::{
    Custom, E1lEval, ExperimentConfig, Experiment, G1lResidual, ImbalanceTable, LimitSweep, OutputFormat, PclCheck,
    SymmetricTable,
};
use crate::distributions::{fit_phase_type, DistributionSpec};
use crate::error::{PollingError, Result};
use crate::model::{Discipline, ImbalanceParams, QueueSpec, SystemSpec, VisitOrder};
use crate::simulate::{self, SimConfig, SimResult};
use crate::stats::{ks_distance, mean_interval, Estimate, ScvEstimate};
use crate::twoqueue::{functional_residual, g1l_residual, pcl_g1l, E1lSolution, EmpiricalPgf, PclReport, ResidualReport, TwoQueueSpec};

/// Tabular output of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub pretty: String,
}

impl Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| PollingError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Pretty => Ok(self.pretty.clone()),
        }
    }

    /// Writes to `out`, or stdout when `None`. Nothing is written unless
    /// rendering succeeded.
    pub fn write(&self, format: OutputFormat, out: Option<&Path>) -> Result<()> {
        let text = self.render(format)?;
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn sim_columns() -> Vec<&'static str> {
    vec!["experiment", "master_seed", "replications", "cycles", "warmup"]
}

fn sim_values(name: &str, cfg: &SimConfig) -> Vec<String> {
    vec![
        name.to_string(),
        cfg.master_seed.to_string(),
        cfg.replications.to_string(),
        cfg.cycles_per_replication.to_string(),
        cfg.warmup_cycles.to_string(),
    ]
}

fn order_name(order: VisitOrder) -> &'static str {
    match order {
        VisitOrder::Cyclic => "cyclic",
        VisitOrder::LongestQueue => "longest-queue",
    }
}

/// Run lengths shortened by `divisor` for long switch-over times.
pub fn shortened(cfg: &SimConfig, divisor: u64) -> SimConfig {
    let mut out = cfg.clone();
    if divisor > 1 {
        out.cycles_per_replication = (cfg.cycles_per_replication / divisor).max(2);
        out.warmup_cycles = (cfg.warmup_cycles / divisor).min(out.cycles_per_replication - 1);
    }
    out
}

/// One cell of a symmetric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub visit_order: VisitOrder,
    pub switchover: f64,
    pub scv_arrival: f64,
    pub sim: SimConfig,
    /// Scaled polling-instant number at `Q_1`.
    pub polling: ScvEstimate,
    /// Exact scv for Poisson arrivals under cyclic order.
    pub analytic_scv: Option<f64>,
}

impl TableCell {
    /// Value printed in the table: analytic where available.
    pub fn reported(&self) -> f64 {
        self.analytic_scv.unwrap_or(self.polling.scv.value)
    }
}

pub fn symmetric_system(t: &SymmetricTable, switchover: f64, scv: f64, order: VisitOrder) -> Result<SystemSpec> {
    let queue = QueueSpec::new(
        fit_phase_type(1.0, scv)?,
        DistributionSpec::exponential_with_mean(t.mean_service),
        Discipline::Exhaustive,
    );
    SystemSpec::symmetric(t.queues, queue, DistributionSpec::Deterministic { value: switchover }, order)
}

fn run_symmetric(t: &SymmetricTable, sim: &SimConfig, order: VisitOrder) -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for &s in &t.switchovers {
        let cfg = if s >= t.long_switchover { shortened(sim, t.long_cycle_divisor) } else { sim.clone() };
        for &scv in &t.scvs {
            let spec = symmetric_system(t, s, scv, order)?;
            let res = simulate::run(&spec, &cfg)?;
            let analytic_scv = if order == VisitOrder::Cyclic && spec.queues().iter().all(QueueSpec::has_poisson_arrivals) {
                polling_moments(&spec)?.scv_at_q1
            } else {
                None
            };
            cells.push(TableCell {
                visit_order: order,
                switchover: s,
                scv_arrival: scv,
                sim: cfg.clone(),
                polling: res.scaled_polling_estimate()?,
                analytic_scv,
            });
        }
    }
    Ok(cells)
}

/// Symmetric exhaustive system under cyclic order.
pub fn run_table1(t: &SymmetricTable, sim: &SimConfig) -> Result<Vec<TableCell>> {
    run_symmetric(t, sim, VisitOrder::Cyclic)
}

/// Symmetric exhaustive system with the server moving to the longest queue.
pub fn run_table3(t: &SymmetricTable, sim: &SimConfig) -> Result<Vec<TableCell>> {
    run_symmetric(t, sim, VisitOrder::LongestQueue)
}

fn table_report(name: &str, cells: &[TableCell]) -> Report {
    let mut columns = sim_columns();
    columns.extend([
        "visit_order",
        "switchover",
        "scv_arrival",
        "samples",
        "mean_scaled",
        "mean_ci",
        "scv_sim",
        "scv_ci",
        "scv_analytic",
        "scv_reported",
    ]);
    let rows = cells
        .iter()
        .map(|c| {
            let mut r = sim_values(name, &c.sim);
            r.extend([
                order_name(c.visit_order).to_string(),
                num(c.switchover),
                num(c.scv_arrival),
                c.polling.count.to_string(),
                num(c.polling.mean.value),
                num(c.polling.mean.half_width),
                num(c.polling.scv.value),
                num(c.polling.scv.half_width),
                opt(c.analytic_scv),
                num(c.reported()),
            ]);
            r
        })
        .collect();

    let mut scvs: Vec<f64> = Vec::new();
    let mut switchovers: Vec<f64> = Vec::new();
    for c in cells {
        if !scvs.contains(&c.scv_arrival) {
            scvs.push(c.scv_arrival);
        }
        if !switchovers.contains(&c.switchover) {
            switchovers.push(c.switchover);
        }
    }
    let mut pretty = String::new();
    let title = cells.first().map_or("", |c| order_name(c.visit_order));
    let _ = writeln!(pretty, "{title}  (scv of the scaled number at Q1 polling instants; * analytic)");
    let _ = write!(pretty, "{:<10}", "");
    for scv in &scvs {
        let _ = write!(pretty, "{:>22}", format!("c2_A={scv}"));
    }
    let _ = writeln!(pretty);
    for s in &switchovers {
        let _ = write!(pretty, "{:<10}", format!("S_i={s}"));
        for scv in &scvs {
            let cell = cells.iter().find(|c| c.switchover == *s && c.scv_arrival == *scv);
            let text = match cell {
                Some(c) if c.analytic_scv.is_some() => format!("{:.3}*", c.reported()),
                Some(c) => format!("{:.3} ±{:.4}", c.polling.scv.value, c.polling.scv.half_width),
                None => String::new(),
            };
            let _ = write!(pretty, "{text:>22}");
        }
        let _ = writeln!(pretty);
    }
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        pretty,
    }
}

/// One row of the asymmetric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceRow {
    pub params: ImbalanceParams,
    pub switchover: f64,
    pub sim: SimConfig,
    pub wait: ScvEstimate,
    pub polling: ScvEstimate,
    pub analytic_polling_scv: Option<f64>,
}

impl ImbalanceRow {
    pub fn reported_polling_scv(&self) -> f64 {
        self.analytic_polling_scv.unwrap_or(self.polling.scv.value)
    }
}

/// Asymmetric exhaustive cyclic systems parameterized by imbalance ratios.
pub fn run_table2(t: &ImbalanceTable, sim: &SimConfig) -> Result<Vec<ImbalanceRow>> {
    let cfg = if t.switchover >= t.long_switchover { shortened(sim, t.long_cycle_divisor) } else { sim.clone() };
    let mut rows = Vec::new();
    for &scv in &t.scvs {
        for &[ia, ib] in &t.imbalances {
            let params = ImbalanceParams {
                n: t.queues,
                rho: t.rho,
                imbalance_arrival: ia,
                imbalance_service: ib,
                scv_arrival: scv,
            };
            let spec = params.exhaustive_system(DistributionSpec::Deterministic { value: t.switchover })?;
            let res = simulate::run(&spec, &cfg)?;
            let analytic_polling_scv = if spec.queues().iter().all(QueueSpec::has_poisson_arrivals) {
                polling_moments(&spec)?.scv_at_q1
            } else {
                None
            };
            rows.push(ImbalanceRow {
                params,
                switchover: t.switchover,
                sim: cfg.clone(),
                wait: res.wait_estimate(0)?,
                polling: res.scaled_polling_estimate()?,
                analytic_polling_scv,
            });
        }
    }
    Ok(rows)
}

fn table2_report(rows: &[ImbalanceRow]) -> Report {
    let mut columns = sim_columns();
    columns.extend([
        "queues",
        "rho",
        "switchover",
        "scv_arrival",
        "imbalance_arrival",
        "imbalance_service",
        "wait_samples",
        "wait_mean",
        "wait_mean_ci",
        "wait_scv",
        "wait_scv_ci",
        "polling_scv_sim",
        "polling_scv_ci",
        "polling_scv_analytic",
    ]);
    let csv_rows = rows
        .iter()
        .map(|r| {
            let mut v = sim_values("table2", &r.sim);
            v.extend([
                r.params.n.to_string(),
                num(r.params.rho),
                num(r.switchover),
                num(r.params.scv_arrival),
                num(r.params.imbalance_arrival),
                num(r.params.imbalance_service),
                r.wait.count.to_string(),
                num(r.wait.mean.value),
                num(r.wait.mean.half_width),
                num(r.wait.scv.value),
                num(r.wait.scv.half_width),
                num(r.polling.scv.value),
                num(r.polling.scv.half_width),
                opt(r.analytic_polling_scv),
            ]);
            v
        })
        .collect();
    let mut pretty = String::from("cyclic  (* analytic)\n");
    let _ = writeln!(pretty, "{:>6} {:>4} {:>4} {:>18} {:>18}", "c2_A", "I_A", "I_B", "c2_W1", "c2_P");
    for r in rows {
        let p = match r.analytic_polling_scv {
            Some(a) => format!("{a:.3}*"),
            None => format!("{:.3} ±{:.4}", r.polling.scv.value, r.polling.scv.half_width),
        };
        let _ = writeln!(
            pretty,
            "{:>6} {:>4} {:>4} {:>18} {:>18}",
            r.params.scv_arrival,
            r.params.imbalance_arrival,
            r.params.imbalance_service,
            format!("{:.3} ±{:.4}", r.wait.scv.value, r.wait.scv.half_width),
            p
        );
    }
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows: csv_rows,
        pretty,
    }
}

/// Switch-over multiplier step of a limit sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub multiplier: f64,
    pub total_switchover: f64,
    pub sim: SimConfig,
    pub law: Option<LimitLaw>,
    /// Kolmogorov-Smirnov distance of `W_1 / E[S]` from the limit law.
    pub ks: Option<f64>,
    pub scaled_wait: ScvEstimate,
    pub polling: ScvEstimate,
    pub analytic_polling_scv: Option<f64>,
    pub wait_samples: usize,
}

/// Measured cycles shrink in proportion to the multiplier, with a floor of 20
/// per replication. The warmup keeps at least 20 cycles (or the configured
/// warmup if smaller): the transient from an empty start lasts a fixed number
/// of cycles whatever the switch-over scale.
pub fn sweep_config(sim: &SimConfig, multiplier: f64) -> SimConfig {
    let mut cfg = sim.clone();
    let m = multiplier.max(1.0);
    let warmup = ((sim.warmup_cycles as f64 / m) as u64).max(sim.warmup_cycles.min(20));
    let measured = (sim.cycles_per_replication.saturating_sub(sim.warmup_cycles) as f64 / m) as u64;
    cfg.warmup_cycles = warmup;
    cfg.cycles_per_replication = warmup + measured.max(20);
    cfg
}

pub fn run_limit_sweep(s: &LimitSweep, sim: &SimConfig) -> Result<Vec<LimitRow>> {
    let base = s.system.resolve()?;
    let queue = sim.record_queue;
    let mut rows = Vec::new();
    for &m in &s.multipliers {
        let spec = base.with_scaled_switchovers(m)?;
        let mut cfg = sweep_config(sim, m);
        let loads = spec.loads();
        let q = &spec.queues()[queue];
        let measured = (cfg.cycles_per_replication - cfg.warmup_cycles) as f64;
        let expected_waits = q.arrival_rate() * loads.mean_cycle * measured;
        let stride = (expected_waits / s.wait_samples_per_replication.max(1) as f64).floor().max(1.0);
        cfg.wait_sample_stride = Some(stride as u64);
        let res = simulate::run(&spec, &cfg)?;
        let law = if spec.switchovers().iter().all(DistributionSpec::is_deterministic) && q.discipline.is_branching() {
            Some(limit_law(&spec, queue)?)
        } else {
            None
        };
        let es = loads.mean_total_switchover;
        let mut scaled: Vec<f64> = res.wait_samples.iter().map(|w| w / es).collect();
        let wait_samples = scaled.len();
        let ks = match &law {
            Some(l) if !scaled.is_empty() => Some(ks_distance(&mut scaled, |x| l.cdf(x))),
            _ => None,
        };
        let analytic_polling_scv = if spec.visit_order() == VisitOrder::Cyclic
            && spec.queues().iter().all(|q| q.has_poisson_arrivals() && q.discipline.is_branching())
            && queue == 0
        {
            polling_moments(&spec)?.scv_at_q1
        } else {
            None
        };
        rows.push(LimitRow {
            multiplier: m,
            total_switchover: es,
            sim: cfg,
            law,
            ks,
            scaled_wait: res.scaled_wait_estimate(queue)?,
            polling: res.scaled_polling_estimate()?,
            analytic_polling_scv,
            wait_samples,
        });
    }
    Ok(rows)
}

fn limit_report(rows: &[LimitRow]) -> Report {
    let mut columns = sim_columns();
    columns.extend([
        "multiplier",
        "total_switchover",
        "law_scale",
        "law_low",
        "law_high",
        "law_mean",
        "ks_samples",
        "ks",
        "scaled_wait_mean",
        "scaled_wait_mean_ci",
        "wait_scv",
        "wait_scv_ci",
        "polling_scv_sim",
        "polling_scv_ci",
        "polling_scv_analytic",
        "polling_scv_times_s",
    ]);
    let csv_rows = rows
        .iter()
        .map(|r| {
            let mut v = sim_values("limit-sweep", &r.sim);
            v.extend([
                num(r.multiplier),
                num(r.total_switchover),
                opt(r.law.map(|l| l.scale)),
                opt(r.law.map(|l| l.support_low)),
                opt(r.law.map(|l| l.support_high)),
                opt(r.law.map(|l| l.mean())),
                r.wait_samples.to_string(),
                opt(r.ks),
                num(r.scaled_wait.mean.value),
                num(r.scaled_wait.mean.half_width),
                num(r.scaled_wait.scv.value),
                num(r.scaled_wait.scv.half_width),
                num(r.polling.scv.value),
                num(r.polling.scv.half_width),
                opt(r.analytic_polling_scv),
                num(r.polling.scv.value * r.total_switchover),
            ]);
            v
        })
        .collect();
    let mut pretty = String::new();
    let _ = writeln!(
        pretty,
        "{:>10} {:>10} {:>9} {:>16} {:>10} {:>12}",
        "multiplier", "E[S]", "KS", "E[W1]/E[S]", "c2_W1", "c2_P"
    );
    for r in rows {
        let _ = writeln!(
            pretty,
            "{:>10} {:>10} {:>9} {:>16} {:>10.4} {:>12.5}",
            r.multiplier,
            r.total_switchover,
            r.ks.map_or("-".to_string(), |k| format!("{k:.4}")),
            format!("{:.4} ±{:.4}", r.scaled_wait.mean.value, r.scaled_wait.mean.half_width),
            r.scaled_wait.scv.value,
            r.polling.scv.value
        );
    }
    let decreasing = rows.windows(2).all(|w| match (w[0].ks, w[1].ks) {
        (Some(a), Some(b)) => b <= a,
        _ => true,
    });
    let _ = writeln!(pretty, "KS distance monotonically decreasing: {decreasing}");
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows: csv_rows,
        pretty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PclResult {
    pub sim: SimConfig,
    pub mean_waits: [Estimate; 2],
    pub report: PclReport,
}

pub fn run_pcl_check(p: &PclCheck, sim: &SimConfig) -> Result<PclResult> {
    let spec = TwoQueueSpec::new(p.system.resolve()?)?;
    let res = simulate::run(spec.system(), sim)?;
    let w = [res.wait_estimate(0)?.mean, res.wait_estimate(1)?.mean];
    Ok(PclResult {
        sim: sim.clone(),
        report: pcl_g1l(&spec, w[0].value, w[1].value)?,
        mean_waits: w,
    })
}

fn pcl_report(r: &PclResult) -> Report {
    let mut columns = sim_columns();
    columns.extend(["mean_w1", "mean_w1_ci", "mean_w2", "mean_w2_ci", "lhs", "rhs", "relative_gap"]);
    let mut v = sim_values("pcl-check", &r.sim);
    v.extend([
        num(r.mean_waits[0].value),
        num(r.mean_waits[0].half_width),
        num(r.mean_waits[1].value),
        num(r.mean_waits[1].half_width),
        num(r.report.lhs),
        num(r.report.rhs),
        num(r.report.relative_gap),
    ]);
    let pretty = format!(
        "E[W1] = {:.4} ±{:.4}\nE[W2] = {:.4} ±{:.4}\nlhs = {:.6}\nrhs = {:.6}\nrelative gap = {:.5}\n",
        r.mean_waits[0].value,
        r.mean_waits[0].half_width,
        r.mean_waits[1].value,
        r.mean_waits[1].half_width,
        r.report.lhs,
        r.report.rhs,
        r.report.relative_gap
    );
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows: vec![v],
        pretty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub z1: f64,
    pub z2: f64,
    pub value: f64,
    /// Self-residual of the functional equation with `h_1 = g`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E1lResult {
    pub sim: SimConfig,
    pub constant: f64,
    pub constant_numerical: f64,
    pub grid: Vec<GridPoint>,
    pub max_residual: f64,
    pub analytic_means: [f64; 2],
    pub simulated_means: Option<[Estimate; 2]>,
}

/// Per-replication means of the first two coordinates of the joint
/// polling-instant samples, with t-intervals.
pub fn joint_mean_estimates(res: &SimResult) -> Result<[Estimate; 2]> {
    let mut per_rep = [Vec::new(), Vec::new()];
    for rep in &res.polling_samples {
        if rep.is_empty() {
            continue;
        }
        for (k, out) in per_rep.iter_mut().enumerate() {
            out.push(rep.iter().map(|x| x[k] as f64).sum::<f64>() / rep.len() as f64);
        }
    }
    if per_rep[0].len() < 2 {
        return Err(PollingError::InsufficientSamples(
            "joint polling samples need two replications".into(),
        ));
    }
    Ok([mean_interval(&per_rep[0]), mean_interval(&per_rep[1])])
}

pub fn run_e1l_eval(e: &E1lEval, sim: &SimConfig) -> Result<E1lResult> {
    let spec = TwoQueueSpec::new(e.system.resolve()?)?;
    let sol = E1lSolution::new(&spec)?;
    let g = |_: Complex64, z2: Complex64| sol.offspring(z2);
    let mut grid = Vec::with_capacity(e.grid * e.grid);
    for i in 0..e.grid {
        for j in 0..e.grid {
            let z1 = i as f64 / (e.grid - 1) as f64;
            let z2 = j as f64 / (e.grid - 1) as f64;
            let (c1, c2) = (Complex64::new(z1, 0.0), Complex64::new(z2, 0.0));
            grid.push(GridPoint {
                z1,
                z2,
                value: sol.eval(c1, c2)?.re,
                residual: functional_residual(&spec, &sol, g, c1, c2)?,
            });
        }
    }
    let max_residual = grid.iter().map(|p| p.residual).fold(0.0, f64::max);
    let simulated_means = if e.simulate {
        let mut cfg = sim.clone();
        cfg.record_queue = 0;
        cfg.keep_polling_samples = true;
        Some(joint_mean_estimates(&simulate::run(spec.system(), &cfg)?)?)
    } else {
        None
    };
    let k = sol.constant();
    Ok(E1lResult {
        sim: sim.clone(),
        constant: k.value,
        constant_numerical: k.numerical_limit,
        grid,
        max_residual,
        analytic_means: sol.mean_queue_lengths()?,
        simulated_means,
    })
}

fn e1l_report(r: &E1lResult) -> Report {
    let mut columns = sim_columns();
    columns.extend(["z1", "z2", "f1", "residual", "constant"]);
    let rows = r
        .grid
        .iter()
        .map(|p| {
            let mut v = sim_values("e1l-eval", &r.sim);
            v.extend([num(p.z1), num(p.z2), num(p.value), num(p.residual), num(r.constant)]);
            v
        })
        .collect();
    let mut pretty = format!(
        "C = {:.12} (numerical limit {:.12})\nmax self-residual on grid = {:.3e}\n",
        r.constant, r.constant_numerical, r.max_residual
    );
    for k in 0..2 {
        let _ = write!(pretty, "E[X{}] at Q1 polling instants: {:.5}", k + 1, r.analytic_means[k]);
        if let Some(s) = &r.simulated_means {
            let _ = write!(pretty, "  (simulated {:.5} ±{:.5})", s[k].value, s[k].half_width);
        }
        let _ = writeln!(pretty);
    }
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        pretty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub z1: f64,
    pub z2: f64,
    pub report: ResidualReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G1lResult {
    pub sim: SimConfig,
    pub rows: Vec<ResidualRow>,
}

pub fn run_g1l_residual(g: &G1lResidual, sim: &SimConfig) -> Result<G1lResult> {
    let spec = TwoQueueSpec::new(g.system.resolve()?)?;
    let mut cfg = sim.clone();
    cfg.record_queue = 0;
    cfg.keep_polling_samples = true;
    let res = simulate::run(spec.system(), &cfg)?;
    let pgf = EmpiricalPgf::from_groups(&res.polling_samples)?;
    let rows = g
        .points
        .iter()
        .map(|&[z1, z2]| {
            Ok(ResidualRow {
                z1,
                z2,
                report: g1l_residual(&pgf, &spec, Complex64::new(z1, 0.0), Complex64::new(z2, 0.0))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(G1lResult { sim: cfg, rows })
}

fn g1l_report(r: &G1lResult) -> Report {
    let mut columns = sim_columns();
    columns.extend(["z1", "z2", "samples", "residual", "residual_se", "pgf_se"]);
    let rows = r
        .rows
        .iter()
        .map(|p| {
            let mut v = sim_values("g1l-residual", &r.sim);
            v.extend([
                num(p.z1),
                num(p.z2),
                p.report.samples.to_string(),
                num(p.report.residual),
                num(p.report.std_error),
                num(p.report.pgf_std_error),
            ]);
            v
        })
        .collect();
    let mut pretty = format!("{:>6} {:>6} {:>12} {:>12} {:>12}\n", "z1", "z2", "residual", "resid. SE", "PGF SE");
    for p in &r.rows {
        let _ = writeln!(
            pretty,
            "{:>6} {:>6} {:>12.3e} {:>12.3e} {:>12.3e}",
            p.z1, p.z2, p.report.residual, p.report.std_error, p.report.pgf_std_error
        );
    }
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        pretty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueRow {
    pub queue: usize,
    pub arrival_rate: f64,
    pub load: f64,
    pub wait: Option<ScvEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomResult {
    pub sim: SimConfig,
    pub queues: Vec<QueueRow>,
    pub polling: ScvEstimate,
    pub analytic_polling_mean: Option<f64>,
    pub analytic_polling_scv: Option<f64>,
}

pub fn run_custom(c: &Custom, sim: &SimConfig) -> Result<CustomResult> {
    let spec = c.system.resolve()?;
    let res = simulate::run(&spec, sim)?;
    let loads = spec.loads();
    let queues = spec
        .queues()
        .iter()
        .enumerate()
        .map(|(i, q)| QueueRow {
            queue: i,
            arrival_rate: q.arrival_rate(),
            load: loads.rho_i[i],
            wait: res.wait_estimate(i).ok(),
        })
        .collect();
    let analytic = if sim.record_queue == 0
        && spec.visit_order() == VisitOrder::Cyclic
        && spec.queues().iter().all(|q| q.has_poisson_arrivals() && q.discipline.is_branching())
    {
        Some(polling_moments(&spec)?)
    } else {
        None
    };
    Ok(CustomResult {
        sim: sim.clone(),
        queues,
        polling: res.polling_estimate()?,
        analytic_polling_mean: analytic.as_ref().map(|a| a.mean[0]),
        analytic_polling_scv: analytic.and_then(|a| a.scv_at_q1),
    })
}

fn custom_report(r: &CustomResult) -> Report {
    let mut columns = sim_columns();
    columns.extend([
        "record_queue",
        "queue",
        "arrival_rate",
        "load",
        "wait_samples",
        "wait_mean",
        "wait_mean_ci",
        "wait_scv",
        "wait_scv_ci",
        "polling_mean",
        "polling_mean_ci",
        "polling_scv",
        "polling_scv_ci",
        "polling_mean_analytic",
        "polling_scv_analytic",
    ]);
    let rows = r
        .queues
        .iter()
        .map(|q| {
            let mut v = sim_values("custom", &r.sim);
            let w = q.wait.as_ref();
            v.extend([
                r.sim.record_queue.to_string(),
                q.queue.to_string(),
                num(q.arrival_rate),
                num(q.load),
                w.map_or("0".into(), |w| w.count.to_string()),
                opt(w.map(|w| w.mean.value)),
                opt(w.map(|w| w.mean.half_width)),
                opt(w.map(|w| w.scv.value)),
                opt(w.map(|w| w.scv.half_width)),
                num(r.polling.mean.value),
                num(r.polling.mean.half_width),
                num(r.polling.scv.value),
                num(r.polling.scv.half_width),
                opt(r.analytic_polling_mean),
                opt(r.analytic_polling_scv),
            ]);
            v
        })
        .collect();
    let mut pretty = format!("{:>5} {:>8} {:>8} {:>20} {:>18}\n", "queue", "lambda", "rho_i", "E[W]", "c2_W");
    for q in &r.queues {
        let (m, s) = match &q.wait {
            Some(w) => (
                format!("{:.4} ±{:.4}", w.mean.value, w.mean.half_width),
                format!("{:.4} ±{:.4}", w.scv.value, w.scv.half_width),
            ),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(pretty, "{:>5} {:>8.4} {:>8.4} {m:>20} {s:>18}", q.queue + 1, q.arrival_rate, q.load);
    }
    let _ = writeln!(
        pretty,
        "polling instants of Q{}: mean {:.4} ±{:.4}, scv {:.4} ±{:.4}",
        r.sim.record_queue + 1,
        r.polling.mean.value,
        r.polling.mean.half_width,
        r.polling.scv.value,
        r.polling.scv.half_width
    );
    if let (Some(m), Some(s)) = (r.analytic_polling_mean, r.analytic_polling_scv) {
        let _ = writeln!(pretty, "exact: mean {m:.4}, scv {s:.4}");
    }
    Report {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        pretty,
    }
}

/// Runs the configured experiment and renders its report.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let sim = &cfg.sim;
    Ok(match &cfg.experiment {
        Experiment::Table1(t) => table_report("table1", &run_table1(t, sim)?),
        Experiment::Table3(t) => table_report("table3", &run_table3(t, sim)?),
        Experiment::Table2(t) => table2_report(&run_table2(t, sim)?),
        Experiment::LimitSweep(s) => limit_report(&run_limit_sweep(s, sim)?),
        Experiment::PclCheck(p) => pcl_report(&run_pcl_check(p, sim)?),
        Experiment::E1lEval(e) => e1l_report(&run_e1l_eval(e, sim)?),
        Experiment::G1lResidual(g) => g1l_report(&run_g1l_residual(g, sim)?),
        Experiment::Custom(c) => custom_report(&run_custom(c, sim)?),
    })
}
