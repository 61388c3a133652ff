//! Quality control: given a fixed schedule, choose the requested solution
//! quality of every scheduled task so that the average normalized lateness
//! is pushed towards zero.
//!
//! Two proposed controllers are implemented, plus the comparison baselines:
//!
//! * **bisection** searches one global quality for all scheduled tasks;
//! * **individual** compresses, per resource, the tasks with the largest
//!   contribution to the lateness first, using a linear model of the
//!   processing time `q * estimate(1)`;
//! * **naive** stops the longest-running tasks first;
//! * **max / min / random** fix each task's quality once.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{estimated_completion_time, Resource, ResourceId, Schedule, TaskId, Time};
use crate::scheduler::SchedulerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Max,
    Min,
    Random,
    Naive,
    Bisection,
    Individual,
}

impl ControlMode {
    pub const ALL: [ControlMode; 6] = [
        ControlMode::Max,
        ControlMode::Min,
        ControlMode::Random,
        ControlMode::Naive,
        ControlMode::Bisection,
        ControlMode::Individual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::Max => "max",
            ControlMode::Min => "min",
            ControlMode::Random => "random",
            ControlMode::Naive => "naive",
            ControlMode::Bisection => "bisection",
            ControlMode::Individual => "individual",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, ControlMode::Max | ControlMode::Min | ControlMode::Random)
    }
}

impl FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Parse(format!("unknown control mode `{s}`")))
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    #[serde(rename = "control")]
    pub mode: ControlMode,
    pub min_quality: f64,
    pub max_iters: u32,
    /// Band around zero in which the individual control stops compressing.
    pub epsilon: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { mode: ControlMode::Bisection, min_quality: 0.2, max_iters: 30, epsilon: 1e-6 }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if !(self.min_quality > 0.0 && self.min_quality <= 1.0) {
            problems.push(format!("min_quality must lie in (0, 1], got {}", self.min_quality));
        }
        if self.max_iters < 1 {
            problems.push("max_iters must be at least 1".to_string());
        }
        if !(self.epsilon > 0.0) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Runs the configured controller after a new schedule was built.
pub fn apply(
    t: Time,
    state: &mut SchedulerState,
    sch: &Schedule,
    resources: &[Resource],
    config: &ControlConfig,
    static_quality: &[f64],
) {
    match config.mode {
        ControlMode::Max | ControlMode::Min | ControlMode::Random => {
            recompute_with(t, sch, state, resources, |i| static_quality[i]);
        }
        ControlMode::Bisection => {
            bisection_control(t, state, sch, resources, config);
        }
        ControlMode::Individual => {
            for j in 0..resources.len() {
                individual_control(t, state, sch, j, resources, config);
            }
        }
        ControlMode::Naive => {
            naive_control(t, state, sch, resources, config);
        }
    }
}

/// Quality fixed once per task by the static baselines.
pub fn static_control<R: Rng + ?Sized>(mode: ControlMode, min_quality: f64, rng: &mut R) -> f64 {
    match mode {
        ControlMode::Min => min_quality,
        ControlMode::Random => rng.random_range(min_quality..=1.0),
        _ => 1.0,
    }
}

/// Sets `Q_i(t)` of every scheduled task from `quality`, re-chains the
/// planned start times and returns the average normalized lateness of the
/// scheduled tasks (0 if there are none).
pub fn recompute_with(
    t: Time,
    sch: &Schedule,
    state: &mut SchedulerState,
    resources: &[Resource],
    mut quality: impl FnMut(TaskId) -> f64,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, list) in sch.per_resource.iter().enumerate() {
        let mut earliest: Time = 0;
        for (k, &i) in list.iter().enumerate() {
            let q = quality(i);
            state.set_quality(i, t, q);
            if k != 0 {
                state.solution.start_of[i] = Some(earliest);
            }
            let start = state.solution.start_of[i].expect("scheduled task without start");
            let view = state.task(i);
            earliest = estimated_completion_time(&view.estimate, &resources[j], start, q);
            if k == 0 {
                earliest = earliest.max(t);
            }
            sum += (earliest - view.due()) as f64 / view.requested_response as f64;
        }
        count += list.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// One global quality for every scheduled task.
pub fn schedule_recomputation(
    t: Time,
    sch: &Schedule,
    q: f64,
    state: &mut SchedulerState,
    resources: &[Resource],
) -> f64 {
    recompute_with(t, sch, state, resources, |_| q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BisectionBranch {
    /// Full quality already meets the due dates on average.
    FullQuality,
    /// Even the minimum quality is late on average.
    MinQuality,
    Bisected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome {
    pub branch: BisectionBranch,
    pub quality: f64,
    /// Average normalized lateness at `quality`.
    pub lateness: f64,
}

/// Bisection on the global quality over `[min_quality, 1]`. The final
/// midpoint is kept even if its lateness is slightly positive.
pub fn bisection_control(
    t: Time,
    state: &mut SchedulerState,
    sch: &Schedule,
    resources: &[Resource],
    config: &ControlConfig,
) -> BisectionOutcome {
    let lateness = schedule_recomputation(t, sch, 1.0, state, resources);
    if lateness <= 0.0 {
        return BisectionOutcome { branch: BisectionBranch::FullQuality, quality: 1.0, lateness };
    }
    let lateness = schedule_recomputation(t, sch, config.min_quality, state, resources);
    if lateness >= 0.0 {
        return BisectionOutcome { branch: BisectionBranch::MinQuality, quality: config.min_quality, lateness };
    }
    let (mut lb, mut ub, mut q, mut lateness) = (config.min_quality, 1.0, 1.0, 1.0);
    for _ in 0..config.max_iters {
        if lateness > 0.0 {
            ub = q;
        } else {
            lb = q;
        }
        q = (lb + ub) / 2.0;
        lateness = schedule_recomputation(t, sch, q, state, resources);
    }
    BisectionOutcome { branch: BisectionBranch::Bisected, quality: q, lateness }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskWeight {
    pub task: TaskId,
    pub weight: f64,
}

/// Linear decomposition of one resource's average normalized lateness:
/// `sum(q_i * w_i) + cons`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceWeights {
    /// In schedule order.
    pub weights: Vec<TaskWeight>,
    pub cons: f64,
    /// Idle gap between the head task's full-quality estimated completion
    /// and `t`, when its solution is overdue.
    pub phantom: Option<Time>,
}

pub fn task_weights(
    t: Time,
    sch: &Schedule,
    resource: ResourceId,
    state: &SchedulerState,
    resources: &[Resource],
) -> Option<ResourceWeights> {
    let list = &sch.per_resource[resource];
    let &first = list.first()?;
    let speed = resources[resource].speed;
    let n = list.len() as f64;
    let s_first = state.solution.start_of[first].expect("head task without start");
    let head_done = estimated_completion_time(&state.task(first).estimate, &resources[resource], s_first, 1.0);
    let phantom = (t >= head_done).then(|| t - head_done);
    let offset = s_first + phantom.unwrap_or(0);

    // suffix sums of 1/r over the schedule order
    let mut suffix = vec![0.0; list.len() + 1];
    for k in (0..list.len()).rev() {
        suffix[k] = suffix[k + 1] + 1.0 / state.task(list[k]).requested_response as f64;
    }
    let mut cons = 0.0;
    let weights = list
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let view = state.task(i);
            cons += (offset - view.due()) as f64 / (n * view.requested_response as f64);
            TaskWeight { task: i, weight: view.estimate.max() as f64 / (speed * n) * suffix[k] }
        })
        .collect();
    Some(ResourceWeights { weights, cons, phantom })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualOutcome {
    /// Requested quality per task, in schedule order.
    pub qualities: Vec<(TaskId, f64)>,
    pub phantom: Option<Time>,
    /// Average normalized lateness of the linear model after compression.
    pub lateness: f64,
}

/// Quality floor of a running task: its progress under the linear model.
fn progress_floor(t: Time, start: Time, speed: f64, full: u64, min_quality: f64) -> f64 {
    let progress = ((t - start) as f64 * speed / full as f64).min(1.0);
    min_quality.max(progress)
}

/// Greedy per-resource compression in decreasing weight order.
pub fn individual_control(
    t: Time,
    state: &mut SchedulerState,
    sch: &Schedule,
    resource: ResourceId,
    resources: &[Resource],
    config: &ControlConfig,
) -> Option<IndividualOutcome> {
    let ResourceWeights { weights, cons, phantom } = task_weights(t, sch, resource, state, resources)?;
    let list = &sch.per_resource[resource];
    let speed = resources[resource].speed;
    let n = weights.len();

    let mut q = vec![1.0f64; n];
    let mut total: f64 = weights.iter().map(|w| w.weight).sum();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].weight.total_cmp(&weights[a].weight).then(a.cmp(&b)));

    for k in order {
        if total + cons <= config.epsilon {
            break;
        }
        if k == 0 && phantom.is_some() {
            continue;
        }
        let lower = if k == 0 {
            let start = state.solution.start_of[list[0]].expect("head task without start");
            progress_floor(t, start, speed, state.task(list[0]).estimate.max(), config.min_quality)
        } else {
            config.min_quality
        };
        let w = weights[k].weight;
        let others = total - q[k] * w;
        let target = ((-cons - others) / w).max(lower).min(1.0);
        q[k] = target;
        total = others + target * w;
    }

    // re-chain start times with the chosen qualities
    let mut earliest: Time = 0;
    for (k, &i) in list.iter().enumerate() {
        state.set_quality(i, t, q[k]);
        if k != 0 {
            state.solution.start_of[i] = Some(earliest);
        }
        let start = state.solution.start_of[i].expect("scheduled task without start");
        earliest = estimated_completion_time(&state.task(i).estimate, &resources[resource], start, q[k]);
        if k == 0 {
            earliest = earliest.max(t);
        }
    }

    Some(IndividualOutcome { qualities: list.iter().copied().zip(q).collect(), phantom, lateness: total + cons })
}

/// Baseline: while the schedule is late on average, drop the quality of
/// the running task that has been processed the longest to its floor.
/// Returns the final average normalized lateness.
pub fn naive_control(
    t: Time,
    state: &mut SchedulerState,
    sch: &Schedule,
    resources: &[Resource],
    config: &ControlConfig,
) -> f64 {
    let mut current: Vec<(TaskId, f64)> = sch
        .tasks()
        .map(|i| {
            let q = if state.is_processing(i) { state.requested_quality(i, t).unwrap_or(1.0) } else { 1.0 };
            (i, q)
        })
        .collect();
    current.sort_unstable_by_key(|&(i, _)| i);
    let lookup = |cur: &[(TaskId, f64)], i: TaskId| cur[cur.binary_search_by_key(&i, |&(id, _)| id).unwrap()].1;

    // running heads, longest elapsed first
    let mut running: Vec<(Time, ResourceId, TaskId)> = sch
        .per_resource
        .iter()
        .enumerate()
        .filter_map(|(j, list)| list.first().map(|&i| (j, i)))
        .filter(|&(_, i)| state.is_processing(i))
        .map(|(j, i)| (t - state.solution.start_of[i].unwrap(), j, i))
        .collect();
    running.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut lateness = recompute_with(t, sch, state, resources, |i| lookup(&current, i));
    for (elapsed, j, i) in running {
        if lateness <= 0.0 {
            break;
        }
        let floor =
            progress_floor(t, t - elapsed, resources[j].speed, state.task(i).estimate.max(), config.min_quality);
        let pos = current.binary_search_by_key(&i, |&(id, _)| id).unwrap();
        current[pos].1 = current[pos].1.min(floor);
        lateness = recompute_with(t, sch, state, resources, |i| lookup(&current, i));
    }
    lateness
}
