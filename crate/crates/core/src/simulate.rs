//! Discrete-event simulation of a single-server polling system.
//!
//! The server is the only active entity: arrival streams are independent
//! renewal processes, so each queue's arrivals are materialized lazily up to
//! the current server epoch whenever the server needs to look at that queue.
//! This processes every event in time order while touching only the queue
//! being served. An arrival whose epoch equals a server epoch is admitted after
//! the server event at that epoch.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{invalid, PollingError, Result};
use crate::model::{Discipline, SystemSpec, VisitOrder};
use crate::stats::{estimate_scv, Moments, ScvEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub master_seed: u64,
    pub replications: usize,
    /// Total server cycles per replication, warmup included. A cycle is `N`
    /// visits, which for cyclic order is one return to `Q_1`.
    pub cycles_per_replication: u64,
    pub warmup_cycles: u64,
    /// Queue whose polling instants (and waiting-time samples) are recorded.
    pub record_queue: usize,
    /// Keep the joint queue-length vector at every recorded polling instant.
    pub keep_polling_samples: bool,
    /// Keep every `k`-th waiting time of the recorded queue.
    pub wait_sample_stride: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            master_seed: 1,
            replications: 200,
            cycles_per_replication: 5_000,
            warmup_cycles: 500,
            record_queue: 0,
            keep_polling_samples: false,
            wait_sample_stride: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("at least one replication is required"));
        }
        if self.cycles_per_replication <= self.warmup_cycles {
            return Err(invalid(format!(
                "cycles per replication ({}) must exceed warmup cycles ({})",
                self.cycles_per_replication, self.warmup_cycles
            )));
        }
        if self.record_queue >= spec.n() {
            return Err(invalid(format!(
                "record queue {} out of range for {} queues",
                self.record_queue,
                spec.n()
            )));
        }
        if self.wait_sample_stride == Some(0) {
            return Err(invalid("wait sample stride must be positive"));
        }
        Ok(())
    }
}

/// Post-warmup statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub index: usize,
    /// Waiting times per queue.
    pub waits: Vec<Moments>,
    /// Service completions per queue.
    pub completions: Vec<u64>,
    /// Queue length of the recorded queue at its polling instants.
    pub polling: Moments,
    /// Time between consecutive polling instants of the recorded queue.
    pub cycle: Moments,
    /// Largest number of customers served in a single visit, per queue.
    pub max_served_per_visit: Vec<u64>,
    /// Largest queue length left behind at a visit end, per queue.
    pub max_left_at_visit_end: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_total_switchover: f64,
    pub record_queue: usize,
    pub replications: Vec<ReplicationSummary>,
    /// Joint queue lengths at recorded polling instants, per replication
    /// (empty unless requested).
    pub polling_samples: Vec<Vec<Vec<u32>>>,
    /// Thinned waiting times of the recorded queue, in replication order
    /// (empty unless requested).
    pub wait_samples: Vec<f64>,
}

impl SimResult {
    pub fn wait_moments(&self, queue: usize) -> Vec<Moments> {
        self.replications.iter().map(|r| r.waits[queue]).collect()
    }

    pub fn polling_moments(&self) -> Vec<Moments> {
        self.replications.iter().map(|r| r.polling).collect()
    }

    pub fn wait_estimate(&self, queue: usize) -> Result<ScvEstimate> {
        estimate_scv(&self.wait_moments(queue))
    }

    /// Queue length of the recorded queue at its polling instants.
    pub fn polling_estimate(&self) -> Result<ScvEstimate> {
        estimate_scv(&self.polling_moments())
    }

    /// Same as [`polling_estimate`](Self::polling_estimate) for the queue
    /// length divided by `E[S]`; the scv is the unscaled one.
    pub fn scaled_polling_estimate(&self) -> Result<ScvEstimate> {
        let mut est = self.polling_estimate()?;
        est.mean.value /= self.mean_total_switchover;
        est.mean.half_width /= self.mean_total_switchover;
        Ok(est)
    }

    /// Waiting time of `queue` divided by `E[S]`; the scv is the unscaled one.
    pub fn scaled_wait_estimate(&self, queue: usize) -> Result<ScvEstimate> {
        let mut est = self.wait_estimate(queue)?;
        est.mean.value /= self.mean_total_switchover;
        est.mean.half_width /= self.mean_total_switchover;
        Ok(est)
    }

    pub fn cycle_estimate(&self) -> Result<ScvEstimate> {
        estimate_scv(&self.replications.iter().map(|r| r.cycle).collect::<Vec<_>>())
    }

    pub fn total_completions(&self, queue: usize) -> u64 {
        self.replications.iter().map(|r| r.completions[queue]).sum()
    }

    pub fn total_waits(&self, queue: usize) -> u64 {
        self.replications.iter().map(|r| r.waits[queue].count).sum()
    }
}

/// Runs all replications of `spec` under `cfg`. Results depend only on
/// `(spec, cfg)`, not on the number of worker threads.
pub fn run(spec: &SystemSpec, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate(spec)?;
    let outputs = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| Engine::new(spec, cfg, rep).run())
        .collect::<Vec<_>>();

    let mut replications = Vec::with_capacity(outputs.len());
    let mut polling_samples = Vec::new();
    let mut wait_samples = Vec::new();
    for out in outputs {
        if out.summary.polling.count == 0 {
            return Err(PollingError::InsufficientSamples(format!(
                "replication {} recorded no polling instants of queue {} after warmup",
                out.summary.index, cfg.record_queue
            )));
        }
        replications.push(out.summary);
        if cfg.keep_polling_samples {
            polling_samples.push(out.polling_samples);
        }
        wait_samples.extend(out.wait_samples);
    }
    Ok(SimResult {
        mean_total_switchover: spec.loads().mean_total_switchover,
        record_queue: cfg.record_queue,
        replications,
        polling_samples,
        wait_samples,
    })
}

struct ReplicationOutput {
    summary: ReplicationSummary,
    polling_samples: Vec<Vec<u32>>,
    wait_samples: Vec<f64>,
}

struct Engine<'a> {
    spec: &'a SystemSpec,
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    /// Arrival epochs of waiting customers, FIFO.
    queues: Vec<VecDeque<f64>>,
    next_arrival: Vec<f64>,
    interarrival: Vec<Option<DistributionSpec>>,
    /// All switch-over times vanish, so an empty system idles until the next arrival.
    idle_jumps: bool,
    now: f64,
    out: ReplicationOutput,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a SystemSpec, cfg: &'a SimConfig, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
        rng.set_stream(index as u64);
        let n = spec.n();
        let interarrival: Vec<Option<DistributionSpec>> =
            spec.queues().iter().map(|q| q.interarrival).collect();
        let next_arrival = interarrival
            .iter()
            .map(|a| a.map_or(f64::INFINITY, |d| d.sample(&mut rng)))
            .collect();
        Engine {
            spec,
            cfg,
            rng,
            queues: vec![VecDeque::new(); n],
            next_arrival,
            interarrival,
            idle_jumps: spec.loads().mean_total_switchover == 0.0,
            now: 0.0,
            out: ReplicationOutput {
                summary: ReplicationSummary {
                    index,
                    waits: vec![Moments::default(); n],
                    completions: vec![0; n],
                    polling: Moments::default(),
                    cycle: Moments::default(),
                    max_served_per_visit: vec![0; n],
                    max_left_at_visit_end: vec![0; n],
                },
                polling_samples: Vec::new(),
                wait_samples: Vec::new(),
            },
        }
    }

    /// Admits every arrival to queue `i` with epoch strictly before `t`.
    #[inline]
    fn admit(&mut self, i: usize, t: f64) {
        let Some(dist) = self.interarrival[i] else {
            return;
        };
        while self.next_arrival[i] < t {
            let a = self.next_arrival[i];
            self.queues[i].push_back(a);
            self.next_arrival[i] = a + dist.sample(&mut self.rng);
        }
    }

    fn admit_all(&mut self, t: f64) {
        for i in 0..self.queues.len() {
            self.admit(i, t);
        }
    }

    /// Starts service of the head customer of queue `i`; returns false if empty.
    #[inline]
    fn serve_one(&mut self, i: usize, measuring: bool, wait_counter: &mut u64) -> bool {
        let Some(arrived) = self.queues[i].pop_front() else {
            return false;
        };
        let wait = self.now - arrived;
        self.now += self.spec.queues()[i].service.sample(&mut self.rng);
        if measuring {
            let s = &mut self.out.summary;
            s.waits[i].push(wait);
            s.completions[i] += 1;
            if i == self.cfg.record_queue {
                if let Some(stride) = self.cfg.wait_sample_stride {
                    if *wait_counter % stride == 0 {
                        self.out.wait_samples.push(wait);
                    }
                    *wait_counter += 1;
                }
            }
        }
        true
    }

    /// With zero switch-over times and every queue empty, moves the clock to
    /// the next arrival, admits it and returns its queue.
    fn idle_until_arrival(&mut self) -> Option<usize> {
        self.admit_all(self.now);
        if self.queues.iter().any(|q| !q.is_empty()) {
            return None;
        }
        let (j, &t) = self
            .next_arrival
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let dist = self.interarrival[j]?;
        self.now = self.now.max(t);
        self.queues[j].push_back(t);
        self.next_arrival[j] = t + dist.sample(&mut self.rng);
        Some(j)
    }

    fn run(mut self) -> ReplicationOutput {
        let n = self.spec.n();
        let total_visits = self.cfg.cycles_per_replication * n as u64;
        let warmup_visits = self.cfg.warmup_cycles * n as u64;
        let record = self.cfg.record_queue;
        let mut wait_counter = 0u64;
        let mut last_poll: Option<f64> = None;
        let mut current = 0usize;

        for visit in 0..total_visits {
            let measuring = visit >= warmup_visits;
            if current == record {
                self.admit_all(self.now);
                if measuring {
                    let len = self.queues[record].len();
                    self.out.summary.polling.push(len as f64);
                    if self.cfg.keep_polling_samples {
                        self.out
                            .polling_samples
                            .push(self.queues.iter().map(|q| q.len() as u32).collect());
                    }
                    if let Some(prev) = last_poll {
                        self.out.summary.cycle.push(self.now - prev);
                    }
                    last_poll = Some(self.now);
                }
            } else {
                self.admit(current, self.now);
            }

            let mut served = 0u64;
            match self.spec.queues()[current].discipline {
                Discipline::Exhaustive => loop {
                    self.admit(current, self.now);
                    if !self.serve_one(current, measuring, &mut wait_counter) {
                        break;
                    }
                    served += 1;
                },
                Discipline::Gated => {
                    let gate = self.queues[current].len();
                    for _ in 0..gate {
                        self.serve_one(current, measuring, &mut wait_counter);
                    }
                    served = gate as u64;
                }
                Discipline::KLimited { k } => {
                    for _ in 0..k {
                        self.admit(current, self.now);
                        if !self.serve_one(current, measuring, &mut wait_counter) {
                            break;
                        }
                        served += 1;
                    }
                }
            }

            let next = match self.spec.visit_order() {
                VisitOrder::Cyclic => (current + 1) % n,
                VisitOrder::LongestQueue => {
                    self.admit_all(self.now);
                    longest_queue(&self.queues)
                }
            };
            if measuring {
                self.admit(current, self.now);
                let s = &mut self.out.summary;
                s.max_served_per_visit[current] = s.max_served_per_visit[current].max(served);
                let left = self.queues[current].len() as u64;
                s.max_left_at_visit_end[current] = s.max_left_at_visit_end[current].max(left);
            }
            self.now += self.spec.switchovers()[current].sample(&mut self.rng);
            current = next;
            if self.idle_jumps {
                if let Some(j) = self.idle_until_arrival() {
                    current = j;
                }
            }
        }
        self.out
    }
}

/// Index of the longest queue; ties go to the lowest index.
fn longest_queue(queues: &[VecDeque<f64>]) -> usize {
    let mut best = 0;
    for (i, q) in queues.iter().enumerate().skip(1) {
        if q.len() > queues[best].len() {
            best = i;
        }
    }
    best
}
