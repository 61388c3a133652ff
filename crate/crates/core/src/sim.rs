//! Event-driven simulation of the whole system.
//!
//! Resources process tasks against the ground-truth processing time
//! functions; the scheduler only sees estimates. Every arrival and every
//! received solution triggers a scheduling round, after which newly
//! dispatched tasks start and running tasks receive changed quality
//! requests immediately.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::estimator::{curve_params, EstimationMode, Estimator, Method, TrainingObservation, DEFAULT_RETRAIN_EVERY};
use crate::model::{
    check_feasible, completion_time_with, PiecewiseLinearPTF, QualityTrace, Resource, ResourceId, SolutionState,
    TaskId, Time,
};
use crate::rng::{substream, Stream};
use crate::scheduler::{Reaction, Scheduler, TaskView};
use crate::workload::{Scenario, WorkloadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    #[serde(flatten)]
    pub control: ControlConfig,
    pub estimation: EstimationMode,
    pub method: Method,
    /// Feed finished runs back into the estimator.
    pub online_retrain: bool,
    pub retrain_every: usize,
    /// Seed of the scheduler's own random stream (tie-breaks, random control).
    pub seed: u64,
    pub floor_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            control: ControlConfig::default(),
            estimation: EstimationMode::Full,
            method: Method::knn(),
            online_retrain: false,
            retrain_every: DEFAULT_RETRAIN_EVERY,
            seed: 1,
            floor_ms: 1.0,
        }
    }
}

/// Everything a config file may set, as one flat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub workload: WorkloadConfig,
    #[serde(flatten)]
    pub control: ControlConfig,
    pub estimation: EstimationMode,
    pub method: Method,
    pub online_retrain: bool,
    pub retrain_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            workload: WorkloadConfig::default(),
            control: sim.control,
            estimation: sim.estimation,
            method: sim.method,
            online_retrain: sim.online_retrain,
            retrain_every: sim.retrain_every,
        }
    }
}

impl RunConfig {
    /// Parses a flat TOML table; unknown keys and invalid values are all
    /// reported together.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let known = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut problems: Vec<String> =
            table.keys().filter(|k| !known.contains_key(*k)).map(|k| format!("unknown key `{k}`")).collect();
        let config: RunConfig = match table.try_into() {
            Ok(c) => c,
            Err(e) => {
                problems.push(e.to_string());
                return Err(Error::InvalidConfig(problems));
            }
        };
        if let Err(p) = config.validate() {
            problems.extend(p);
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if let Err(p) = self.workload.validate() {
            problems.extend(p);
        }
        if let Err(p) = self.control.validate() {
            problems.extend(p);
        }
        if self.retrain_every == 0 {
            problems.push("retrain_every must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            control: self.control,
            estimation: self.estimation,
            method: self.method,
            online_retrain: self.online_retrain,
            retrain_every: self.retrain_every,
            seed: self.workload.seed,
            floor_ms: self.workload.floor_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub arrival: Time,
    pub start: Time,
    pub completion: Time,
    pub resource_id: ResourceId,
    pub requested_response: Time,
    pub achieved_quality: f64,
    pub normalized_lateness: f64,
    pub final_requested_quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    TaskArrival,
    TaskStart,
    TaskCompletion,
    QualityUpdateApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: Time,
    pub kind: EventKind,
    pub task: TaskId,
    pub resource: Option<ResourceId>,
    pub quality: Option<f64>,
}

/// Wall-clock cost of one scheduling round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSample {
    pub time: Time,
    pub pending: usize,
    pub policy_us: f64,
    pub control_us: f64,
}

#[derive(Debug, Clone)]
pub struct RunningTaskState {
    pub task: TaskId,
    pub resource: ResourceId,
    pub start: Time,
    pub trace: QualityTrace,
    pub requested: f64,
    pub target_completion: Time,
    version: u64,
}

/// Records a new requested quality at `t` and recomputes when the task
/// will finish. If the work already done covers `q`, that is `t` itself.
pub fn apply_quality_update(
    running: &mut RunningTaskState,
    truth: &PiecewiseLinearPTF,
    speed: f64,
    q: f64,
    t: Time,
) -> Time {
    debug_assert!(t >= running.start);
    running.trace.set(t, q);
    running.requested = q;
    running.target_completion = completion_time_with(truth, speed, running.start, &running.trace).max(t);
    running.target_completion
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One per task, ordered by task id.
    pub records: Vec<TaskRecord>,
    pub events: Vec<EventRecord>,
    pub runtime: Vec<RuntimeSample>,
    /// Realized assignment, start times and quality traces.
    pub solution: SolutionState,
    /// Ground-truth reads made on behalf of the scheduler.
    pub truth_reads: u64,
    pub retrains: usize,
}

/// The only way the scheduler side learns about processing times.
struct EstimationFacade<'a> {
    scenario: &'a Scenario,
    mode: EstimationMode,
    estimator: Estimator,
    truth_reads: u64,
}

impl EstimationFacade<'_> {
    fn estimate(&mut self, id: TaskId) -> Result<PiecewiseLinearPTF> {
        let instance = &self.scenario.tasks[id].task.instance;
        match self.mode {
            EstimationMode::Measured => {
                self.truth_reads += 1;
                Ok(instance.true_ptf)
            }
            mode => self.estimator.estimate(mode, &instance.features, instance.wct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Arrival(TaskId),
    Completion(TaskId, u64),
}

pub fn run(scenario: &Scenario, config: &SimConfig, offline: &[TrainingObservation]) -> Result<RunOutput> {
    config.control.validate().map_err(Error::InvalidConfig)?;
    scenario.validate()?;
    let n = scenario.tasks.len();
    let resources: &[Resource] = &scenario.resources;

    let estimator =
        Estimator::new(config.method, config.floor_ms, offline.to_vec()).with_retrain_every(config.retrain_every);
    let mut facade = EstimationFacade { scenario, mode: config.estimation, estimator, truth_reads: 0 };
    let mut scheduler = Scheduler::new(resources.to_vec(), config.control, substream(config.seed, Stream::Control));

    let mut queue: BinaryHeap<Reverse<(Time, u64, Pending)>> = BinaryHeap::with_capacity(2 * n);
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<_>, time: Time, what: Pending| {
        queue.push(Reverse((time, seq, what)));
        seq += 1;
    };
    for st in &scenario.tasks {
        push(&mut queue, st.task.arrival, Pending::Arrival(st.task.id));
    }

    let mut running: Vec<Option<RunningTaskState>> = vec![None; resources.len()];
    let mut records: Vec<Option<TaskRecord>> = vec![None; n];
    let mut solution = SolutionState::with_tasks(n);
    let mut events = Vec::with_capacity(4 * n);
    let mut runtime = Vec::with_capacity(2 * n);
    let mut retrains = 0;
    let mut versions = 0u64;

    while let Some(Reverse((t, _, what))) = queue.pop() {
        let reaction = match what {
            Pending::Arrival(i) => {
                let task = &scenario.tasks[i].task;
                let estimate = facade.estimate(i)?;
                let view = TaskView {
                    id: i,
                    arrival: task.arrival,
                    requested_response: task.requested_response,
                    estimate,
                    tie_key: scheduler.draw_tie_key(),
                };
                events.push(EventRecord {
                    time: t,
                    kind: EventKind::TaskArrival,
                    task: i,
                    resource: None,
                    quality: None,
                });
                scheduler.on_task_arrival(view, t)?
            }
            Pending::Completion(i, version) => {
                let Some(j) = solution.resource_of[i] else {
                    return Err(Error::Invariant { time: t, message: format!("completion of unstarted task {i}") });
                };
                if running[j].as_ref().is_none_or(|r| r.task != i || r.version != version) {
                    continue; // superseded by a later quality update
                }
                let state = running[j].take().expect("checked above");
                let st = &scenario.tasks[i];
                let speed = resources[j].speed;
                let work = (t - state.start) as f64 * speed;
                let achieved = st.task.instance.true_ptf.quality_for_work(work);
                records[i] = Some(TaskRecord {
                    task_id: i,
                    arrival: st.task.arrival,
                    start: state.start,
                    completion: t,
                    resource_id: j,
                    requested_response: st.task.requested_response,
                    achieved_quality: achieved,
                    normalized_lateness: (t - st.task.due()) as f64 / st.task.requested_response as f64,
                    final_requested_quality: state.requested,
                });
                solution.quality_of[i] = state.trace;
                events.push(EventRecord {
                    time: t,
                    kind: EventKind::TaskCompletion,
                    task: i,
                    resource: Some(j),
                    quality: Some(achieved),
                });

                // only full-quality runs reveal where quality 1 lies
                if config.online_retrain && config.estimation != EstimationMode::Measured && achieved >= 1.0 {
                    if let Some(seen) = st.profile.truncated(work) {
                        let reported = seen.on_resource(speed);
                        if let Ok(params) = curve_params(&reported, speed, st.task.instance.wct) {
                            let obs = TrainingObservation { features: st.task.instance.features.clone(), params };
                            if facade.estimator.observe(obs) {
                                retrains += 1;
                            }
                        }
                    }
                }
                scheduler.on_solution_received(i, t)?
            }
        };

        runtime.push(RuntimeSample {
            time: t,
            pending: reaction.pending,
            policy_us: reaction.policy_time.as_secs_f64() * 1e6,
            control_us: reaction.control_time.as_secs_f64() * 1e6,
        });
        propagate(
            t,
            &reaction,
            &scheduler,
            scenario,
            &mut running,
            &mut solution,
            &mut events,
            &mut versions,
            |time, p| push(&mut queue, time, p),
        )?;
    }

    let records: Vec<TaskRecord> = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| Error::Invariant { time: Time::MAX, message: format!("task {i} never completed") })
        })
        .collect::<Result<_>>()?;
    let feasibility = check_feasible(&solution, &scenario.tasks(), resources);
    if !feasibility.is_feasible() {
        return Err(Error::Invariant {
            time: Time::MAX,
            message: format!("realized schedule is infeasible: {:?}", feasibility.violations),
        });
    }
    Ok(RunOutput { records, events, runtime, solution, truth_reads: facade.truth_reads, retrains })
}

/// Starts newly dispatched tasks and forwards changed quality requests to
/// running ones.
#[allow(clippy::too_many_arguments)]
fn propagate(
    t: Time,
    reaction: &Reaction,
    scheduler: &Scheduler,
    scenario: &Scenario,
    running: &mut [Option<RunningTaskState>],
    solution: &mut SolutionState,
    events: &mut Vec<EventRecord>,
    versions: &mut u64,
    mut schedule: impl FnMut(Time, Pending),
) -> Result<()> {
    let state = &scheduler.state;
    for &(i, j) in &reaction.dispatched {
        if let Some(other) = &running[j] {
            return Err(Error::Invariant {
                time: t,
                message: format!("task {i} dispatched to resource {j} which still runs task {}", other.task),
            });
        }
        let start = state.solution.start_of[i].unwrap_or(t);
        if start != t {
            return Err(Error::Invariant {
                time: t,
                message: format!("task {i} dispatched with planned start {start}"),
            });
        }
        let q = state.requested_quality(i, t).unwrap_or(1.0);
        let trace = QualityTrace::constant(t, q);
        let truth = &scenario.tasks[i].task.instance.true_ptf;
        let target = completion_time_with(truth, scenario.resources[j].speed, t, &trace);
        *versions += 1;
        running[j] = Some(RunningTaskState {
            task: i,
            resource: j,
            start: t,
            trace: trace.clone(),
            requested: q,
            target_completion: target,
            version: *versions,
        });
        solution.assign(i, j, t, trace);
        schedule(target, Pending::Completion(i, *versions));
        events.push(EventRecord { time: t, kind: EventKind::TaskStart, task: i, resource: Some(j), quality: Some(q) });
    }

    for (j, slot) in running.iter_mut().enumerate() {
        let Some(run) = slot else { continue };
        if run.start == t && reaction.dispatched.iter().any(|&(i, _)| i == run.task) {
            continue;
        }
        let Some(q) = state.requested_quality(run.task, t) else { continue };
        if q == run.requested {
            continue;
        }
        let truth = &scenario.tasks[run.task].task.instance.true_ptf;
        let target = apply_quality_update(run, truth, scenario.resources[j].speed, q, t);
        *versions += 1;
        run.version = *versions;
        schedule(target, Pending::Completion(run.task, *versions));
        events.push(EventRecord {
            time: t,
            kind: EventKind::QualityUpdateApplied,
            task: run.task,
            resource: Some(j),
            quality: Some(q),
        });
    }
    Ok(())
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(w: W, records: &[TaskRecord]) -> Result<()> {
    if records.is_empty() {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RECORD_COLUMNS)?;
        out.flush()?;
        return Ok(());
    }
    write_csv(w, records)
}

pub const RECORD_COLUMNS: [&str; 9] = [
    "task_id",
    "arrival",
    "start",
    "completion",
    "resource_id",
    "requested_response",
    "achieved_quality",
    "normalized_lateness",
    "final_requested_quality",
];

pub fn read_records<R: Read>(r: R) -> Result<Vec<TaskRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        return Err(Error::Parse(format!("records file must have the columns {}", RECORD_COLUMNS.join(","))));
    }
    Ok(reader.deserialize().collect::<std::result::Result<Vec<TaskRecord>, _>>()?)
}

pub fn write_events<W: Write>(w: W, events: &[EventRecord]) -> Result<()> {
    write_csv(w, events)
}

pub fn write_runtime<W: Write>(w: W, samples: &[RuntimeSample]) -> Result<()> {
    write_csv(w, samples)
}
