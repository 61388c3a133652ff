//! Domain types of the scheduling problem and the pure evaluators defined
//! on them: completion time under a time-varying quality, lateness, the
//! realized solution quality, feasibility and the two run-level averages.
//!
//! Time is an integer number of milliseconds everywhere. Every conversion
//! from real-valued work to time is an explicit ceiling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Time = i64;
pub type TaskId = usize;
pub type ResourceId = usize;

/// Number of quality endpoints of a piecewise-linear processing time function.
pub const ENDPOINTS: usize = 10;

/// Tolerance used when rounding real-valued durations up to whole
/// milliseconds, so that `0.35 * 100.0 = 35.000000000000004` counts as 35.
const CEIL_SLACK: f64 = 1e-9;

/// Quality of the `k`-th endpoint (0-based): 0.1, 0.2, ..., 1.0.
#[inline]
pub fn endpoint_quality(k: usize) -> f64 {
    (k + 1) as f64 / ENDPOINTS as f64
}

#[inline]
pub(crate) fn ceil_ms(x: f64) -> Time {
    (x - CEIL_SLACK).ceil() as Time
}

/// Smallest whole number of milliseconds `d` such that `d * speed >= work`.
pub fn work_duration(work: u64, speed: f64) -> Time {
    let work = work as f64;
    let mut d = (work / speed).ceil().max(0.0) as Time;
    while d > 0 && (d - 1) as f64 * speed >= work {
        d -= 1;
    }
    while (d as f64) * speed < work {
        d += 1;
    }
    d
}

/// Normalized processing time as a function of quality, stored as the
/// processing times at the ten endpoints 0.1, ..., 1.0. Below 0.1 the
/// function runs linearly from the origin; evaluations are floored at 1 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct PiecewiseLinearPTF {
    values: [u64; ENDPOINTS],
}

impl PiecewiseLinearPTF {
    pub fn new(values: [u64; ENDPOINTS]) -> Result<Self> {
        if values[0] < 1 {
            return Err(Error::InvalidPtf(format!("first endpoint must be at least 1 ms, got {}", values[0])));
        }
        if let Some(k) = values.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPtf(format!(
                "values must be strictly increasing, but endpoint {} is {} and endpoint {} is {}",
                k + 1,
                values[k],
                k + 2,
                values[k + 1]
            )));
        }
        Ok(Self { values })
    }

    /// Builds a valid function from arbitrary real-valued endpoint estimates:
    /// floor at `floor_ms`, running maximum, +1 ms nudges for ties, rounding.
    pub fn from_estimates(raw: &[f64; ENDPOINTS], floor_ms: f64) -> Self {
        let floor_ms = floor_ms.max(1.0);
        let mut adjusted = [0.0f64; ENDPOINTS];
        let mut prev = f64::NEG_INFINITY;
        for (slot, &x) in adjusted.iter_mut().zip(raw) {
            let x = if x.is_finite() { x } else { floor_ms };
            // running maximum, then at least one ms above the previous endpoint
            let v = x.max(floor_ms).max(prev + 1.0);
            *slot = v;
            prev = v;
        }
        let mut values = [0u64; ENDPOINTS];
        let mut last = 0u64;
        for (slot, x) in values.iter_mut().zip(adjusted) {
            let v = (x.round() as u64).max(last + 1);
            *slot = v;
            last = v;
        }
        Self { values }
    }

    /// Linear function from the origin to `max_ms` at quality 1.
    pub fn linear(max_ms: f64, floor_ms: f64) -> Self {
        let raw = std::array::from_fn(|k| max_ms * endpoint_quality(k));
        Self::from_estimates(&raw, floor_ms)
    }

    pub fn values(&self) -> &[u64; ENDPOINTS] {
        &self.values
    }

    /// Maximum normalized processing time, i.e. the value at quality 1.
    pub fn max(&self) -> u64 {
        self.values[ENDPOINTS - 1]
    }

    /// Continuous (unrounded) interpolated work at quality `q`.
    pub fn work_at(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let pos = q * ENDPOINTS as f64;
        if pos <= 1.0 {
            return self.values[0] as f64 * pos;
        }
        // between endpoint k-1 (quality k/10) and endpoint k (quality (k+1)/10)
        let k = (pos.floor() as usize).min(ENDPOINTS - 1);
        let lo = self.values[k - 1] as f64;
        let hi = self.values[k] as f64;
        lo + (pos - k as f64) * (hi - lo)
    }

    /// Normalized processing time at quality `q`, rounded up to whole ms and
    /// floored at 1 ms. `q` is clamped to [0, 1]; see [`eval_ptf`] for the
    /// checked variant.
    pub fn at(&self, q: f64) -> u64 {
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&q), "quality {q} out of range");
        (ceil_ms(self.work_at(q)).max(1)) as u64
    }

    /// Largest quality whose required work does not exceed `work`, i.e. the
    /// inverse used by the realized solution quality. Returns 0 when not even
    /// the 1 ms floor is covered.
    pub fn quality_for_work(&self, work: f64) -> f64 {
        let w = (work + CEIL_SLACK).floor();
        if w < 1.0 {
            return 0.0;
        }
        if w >= self.max() as f64 {
            return 1.0;
        }
        let first = self.values[0] as f64;
        if w < first {
            return 0.1 * w / first;
        }
        // values[k] <= w < values[k + 1]
        let k = self.values.partition_point(|&v| (v as f64) <= w) - 1;
        let lo = self.values[k] as f64;
        let hi = self.values[k + 1] as f64;
        (endpoint_quality(k) + 0.1 * (w - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

impl TryFrom<Vec<u64>> for PiecewiseLinearPTF {
    type Error = Error;

    fn try_from(v: Vec<u64>) -> Result<Self> {
        let values: [u64; ENDPOINTS] = v
            .try_into()
            .map_err(|v: Vec<u64>| Error::InvalidPtf(format!("expected {ENDPOINTS} endpoints, got {}", v.len())))?;
        Self::new(values)
    }
}

impl From<PiecewiseLinearPTF> for Vec<u64> {
    fn from(p: PiecewiseLinearPTF) -> Self {
        p.values.to_vec()
    }
}

/// Checked evaluation of a processing time function.
pub fn eval_ptf(ptf: &PiecewiseLinearPTF, q: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::QualityDomain(q));
    }
    Ok(ptf.at(q))
}

/// A problem instance: its feature vector, its (hidden) ground-truth
/// processing time function and the normalized worst case processing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub features: Vec<f64>,
    #[serde(rename = "ptf")]
    pub true_ptf: PiecewiseLinearPTF,
    pub wct: u64,
}

impl Instance {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.features.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.features.len() });
        }
        if self.true_ptf.max() > self.wct {
            return Err(Error::InvalidPtf(format!(
                "instance {}: maximum processing time {} exceeds the worst case {}",
                self.id,
                self.true_ptf.max(),
                self.wct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub arrival: Time,
    pub requested_response: Time,
    pub instance: Instance,
}

impl Task {
    pub fn due(&self) -> Time {
        self.arrival + self.requested_response
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    pub speed: f64,
}

/// Requested quality over time: piecewise constant and right-continuous.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityTrace {
    segments: Vec<(Time, f64)>,
}

impl QualityTrace {
    pub fn constant(from: Time, q: f64) -> Self {
        Self { segments: vec![(from, q)] }
    }

    pub fn from_segments(segments: Vec<(Time, f64)>) -> Result<Self> {
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Parse("trace times must be strictly increasing".into()));
        }
        if let Some(&(_, q)) = segments.iter().find(|(_, q)| !(0.0..=1.0).contains(q)) {
            return Err(Error::QualityDomain(q));
        }
        Ok(Self { segments })
    }

    /// Sets the quality from time `t` on. Setting twice at the same instant
    /// keeps only the later value.
    pub fn set(&mut self, t: Time, q: f64) {
        match self.segments.last_mut() {
            Some(last) if last.0 == t => last.1 = q,
            Some(last) if last.1 == q => {}
            Some(last) => {
                debug_assert!(last.0 < t, "trace updates must move forward in time");
                self.segments.push((t, q));
            }
            None => self.segments.push((t, q)),
        }
    }

    /// Drops the history and restarts the trace at `t`.
    pub fn reset(&mut self, t: Time, q: f64) {
        self.segments.clear();
        self.segments.push((t, q));
    }

    pub fn segments(&self) -> &[(Time, f64)] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Quality in force at `t`. Before the first segment, the first value.
    pub fn at(&self, t: Time) -> f64 {
        let idx = self.segments.partition_point(|&(from, _)| from <= t);
        match idx {
            0 => self.segments.first().map_or(1.0, |s| s.1),
            i => self.segments[i - 1].1,
        }
    }

    pub fn last_quality(&self) -> Option<f64> {
        self.segments.last().map(|s| s.1)
    }
}

/// First instant `t >= start` at which the work done at `speed` covers the
/// work requested by `trace(t)`. Solved segment by segment in closed form.
pub fn completion_time_with(ptf: &PiecewiseLinearPTF, speed: f64, start: Time, trace: &QualityTrace) -> Time {
    let segs = trace.segments();
    if segs.is_empty() {
        return start + work_duration(ptf.max(), speed);
    }
    // index of the segment in force at `start`
    let first = segs.partition_point(|&(from, _)| from <= start).saturating_sub(1);
    for i in first..segs.len() {
        let seg_start = segs[i].0.max(start);
        let seg_end = segs.get(i + 1).map(|s| s.0);
        let candidate = (start + work_duration(ptf.at(segs[i].1), speed)).max(seg_start);
        match seg_end {
            Some(end) if candidate >= end => continue,
            _ => return candidate,
        }
    }
    unreachable!("the last trace segment is unbounded")
}

pub fn completion_time(task: &Task, resource: &Resource, start: Time, trace: &QualityTrace) -> Time {
    completion_time_with(&task.instance.true_ptf, resource.speed, start, trace)
}

pub fn lateness(task: &Task, resource: &Resource, start: Time, trace: &QualityTrace) -> Time {
    completion_time(task, resource, start, trace) - task.due()
}

/// Realized quality: the best quality whose work has been done by completion.
pub fn solution_quality(task: &Task, resource: &Resource, start: Time, trace: &QualityTrace) -> f64 {
    let done = completion_time(task, resource, start, trace);
    task.instance.true_ptf.quality_for_work((done - start) as f64 * resource.speed)
}

/// `start + ceil(estimate(q) / speed)`.
pub fn estimated_completion_time(estimate: &PiecewiseLinearPTF, resource: &Resource, start: Time, q: f64) -> Time {
    start + work_duration(estimate.at(q), resource.speed)
}

/// Assignment, start time and requested quality trace of every task.
/// `None` plays the role of the "uninitialized" marker.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolutionState {
    pub resource_of: Vec<Option<ResourceId>>,
    pub start_of: Vec<Option<Time>>,
    pub quality_of: Vec<QualityTrace>,
}

impl SolutionState {
    pub fn with_tasks(n: usize) -> Self {
        let mut s = Self::default();
        s.ensure(n);
        s
    }

    pub fn len(&self) -> usize {
        self.resource_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resource_of.is_empty()
    }

    /// Grows the vectors so that task ids below `n` are addressable.
    pub fn ensure(&mut self, n: usize) {
        if self.resource_of.len() < n {
            self.resource_of.resize(n, None);
            self.start_of.resize(n, None);
            self.quality_of.resize(n, QualityTrace::default());
        }
    }

    pub fn assign(&mut self, task: TaskId, resource: ResourceId, start: Time, trace: QualityTrace) {
        self.ensure(task + 1);
        self.resource_of[task] = Some(resource);
        self.start_of[task] = Some(start);
        self.quality_of[task] = trace;
    }
}

/// For each resource, the ordered list of tasks assigned to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub per_resource: Vec<Vec<TaskId>>,
}

impl Schedule {
    pub fn empty(resources: usize) -> Self {
        Self { per_resource: vec![Vec::new(); resources] }
    }

    pub fn num_tasks(&self) -> usize {
        self.per_resource.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.per_resource.iter().all(Vec::is_empty)
    }

    /// Copy of this schedule keeping only one resource's list.
    pub fn only(&self, resource: ResourceId) -> Self {
        let mut s = Self::empty(self.per_resource.len());
        s.per_resource[resource] = self.per_resource[resource].clone();
        s
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.per_resource.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Unassigned(TaskId),
    NoStart(TaskId),
    NoQuality(TaskId),
    StartsBeforeArrival { task: TaskId, start: Time, arrival: Time },
    Overlap { resource: ResourceId, first: TaskId, second: TaskId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks assignment, start, arrival and non-overlap conditions. `tasks[i]`
/// must describe task id `i` of the solution.
pub fn check_feasible(solution: &SolutionState, tasks: &[Task], resources: &[Resource]) -> Feasibility {
    let mut violations = Vec::new();
    let mut per_resource: Vec<Vec<(Time, Time, TaskId)>> = vec![Vec::new(); resources.len()];
    for (i, task) in tasks.iter().enumerate() {
        let resource = solution.resource_of.get(i).copied().flatten();
        let start = solution.start_of.get(i).copied().flatten();
        let trace = solution.quality_of.get(i).filter(|t| !t.is_empty());
        let Some(j) = resource else {
            violations.push(Violation::Unassigned(i));
            continue;
        };
        let Some(s) = start else {
            violations.push(Violation::NoStart(i));
            continue;
        };
        if s < task.arrival {
            violations.push(Violation::StartsBeforeArrival { task: i, start: s, arrival: task.arrival });
        }
        let Some(trace) = trace else {
            violations.push(Violation::NoQuality(i));
            continue;
        };
        let c = completion_time(task, &resources[j], s, trace);
        per_resource[j].push((s, c, i));
    }
    for (j, mut intervals) in per_resource.into_iter().enumerate() {
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[0].1 > w[1].0 {
                violations.push(Violation::Overlap { resource: j, first: w[0].2, second: w[1].2 });
            }
        }
    }
    Feasibility { violations }
}

fn assigned(solution: &SolutionState, i: TaskId) -> Result<(ResourceId, Time, &QualityTrace)> {
    match (
        solution.resource_of.get(i).copied().flatten(),
        solution.start_of.get(i).copied().flatten(),
        solution.quality_of.get(i),
    ) {
        (Some(j), Some(s), Some(q)) => Ok((j, s, q)),
        _ => Err(Error::Infeasible(format!("task {i} is not scheduled"))),
    }
}

/// Mean realized solution quality; 0 for an empty task set.
pub fn avg_solution_quality(solution: &SolutionState, tasks: &[Task], resources: &[Resource]) -> Result<f64> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, task) in tasks.iter().enumerate() {
        let (j, s, trace) = assigned(solution, i)?;
        sum += solution_quality(task, &resources[j], s, trace);
    }
    Ok(sum / tasks.len() as f64)
}

/// Mean of lateness divided by requested response time; 0 for no tasks.
pub fn avg_normalized_lateness(solution: &SolutionState, tasks: &[Task], resources: &[Resource]) -> Result<f64> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, task) in tasks.iter().enumerate() {
        let (j, s, trace) = assigned(solution, i)?;
        sum += lateness(task, &resources[j], s, trace) as f64 / task.requested_response as f64;
    }
    Ok(sum / tasks.len() as f64)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let p = linear(100);
        assert_eq!(eval_ptf(&p, 1.0).unwrap(), 100);
        assert_eq!(eval_ptf(&p, 0.35).unwrap(), 35);
        assert_eq!(eval_ptf(&p, 0.0).unwrap(), 1);
        assert_eq!(eval_ptf(&p, 0.05).unwrap(), 5);
        assert!(matches!(eval_ptf(&p, 1.2), Err(Error::QualityDomain(_))));
        assert!(matches!(eval_ptf(&p, -0.1), Err(Error::QualityDomain(_))));
    }

    #[test]
    fn construction_rejects_non_increasing() {
        assert!(PiecewiseLinearPTF::new([1, 2, 3, 4, 5, 6, 7, 8, 9, 9]).is_err());
        assert!(PiecewiseLinearPTF::new([0, 2, 3, 4, 5, 6, 7, 8, 9, 10]).is_err());
        assert!(PiecewiseLinearPTF::try_from(vec![1, 2, 3]).is_err());
    }

    #[test]
    fn from_estimates_monotone_fix() {
        let raw = [5.0, 3.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0];
        let p = PiecewiseLinearPTF::from_estimates(&raw, 1.0);
        assert_eq!(p.values(), &[5, 6, 7, 8, 9, 10, 11, 12, 13, 14]);
        let p = PiecewiseLinearPTF::from_estimates(&[0.2; ENDPOINTS], 1.0);
        assert_eq!(p.values(), &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    }

    #[test]
    fn work_duration_is_exact_ceiling() {
        assert_eq!(work_duration(20, 100.0), 1);
        assert_eq!(work_duration(90, 2.0), 45);
        assert_eq!(work_duration(90, 3.0), 30);
        assert_eq!(work_duration(100, 1.0), 100);
        assert_eq!(work_duration(7, 2.5), 3);
    }

    #[test]
    fn completion_time_examples() {
        let t = task(0, 0, 100, linear(100));
        let r = Resource { id: 0, speed: 1.0 };
        assert_eq!(completion_time(&t, &r, 5, &QualityTrace::constant(5, 1.0)), 105);
        let trace = QualityTrace::from_segments(vec![(0, 1.0), (30, 0.4)]).unwrap();
        assert_eq!(completion_time(&t, &r, 0, &trace), 40);
        assert!((solution_quality(&t, &r, 0, &trace) - 0.4).abs() < 1e-12);
        // lowering below the work already done completes at the update instant
        let trace = QualityTrace::from_segments(vec![(0, 1.0), (60, 0.4)]).unwrap();
        assert_eq!(completion_time(&t, &r, 0, &trace), 60);
        assert!((solution_quality(&t, &r, 0, &trace) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn three_task_worked_example() {
        let (tasks, resources, sol) = three_tasks();
        assert_eq!(completion_time(&tasks[1], &resources[0], 10, &sol.quality_of[1]), 100);
        assert_eq!(lateness(&tasks[0], &resources[0], 0, &sol.quality_of[0]), 0);
        assert_eq!(lateness(&tasks[2], &resources[1], 0, &sol.quality_of[2]), -10);
        assert!(check_feasible(&sol, &tasks, &resources).is_feasible());
        let nl = avg_normalized_lateness(&sol, &tasks, &resources).unwrap();
        assert!((nl - (-0.1296)).abs() < 1e-4, "{nl}");
        assert_eq!(avg_solution_quality(&sol, &tasks, &resources).unwrap(), 1.0);
    }

    #[test]
    fn estimated_completion_examples() {
        let p = linear(100);
        let fast = Resource { id: 0, speed: 100.0 };
        assert_eq!(estimated_completion_time(&p, &fast, 7, 0.2), 8);
        let unit = Resource { id: 0, speed: 1.0 };
        assert_eq!(estimated_completion_time(&p, &unit, 0, 1.0), 100);
        let two = Resource { id: 0, speed: 2.0 };
        assert_eq!(estimated_completion_time(&linear(90), &two, 0, 1.0), 45);
    }

    #[test]
    fn quality_saturates_when_work_exceeds_max() {
        let t = task(0, 0, 100, linear(100));
        let fast = Resource { id: 0, speed: 100.0 };
        let trace = QualityTrace::constant(0, 0.2);
        assert_eq!(completion_time(&t, &fast, 0, &trace), 1);
        assert_eq!(solution_quality(&t, &fast, 0, &trace), 1.0);
    }

    #[test]
    fn feasibility_violations() {
        let (tasks, resources, mut sol) = three_tasks();
        sol.resource_of[2] = None;
        let f = check_feasible(&sol, &tasks, &resources);
        assert_eq!(f.violations, vec![Violation::Unassigned(2)]);

        let (mut tasks, resources, sol) = three_tasks();
        tasks[2].arrival = 5;
        let f = check_feasible(&sol, &tasks, &resources);
        assert!(matches!(f.violations[..], [Violation::StartsBeforeArrival { task: 2, .. }]));

        let (tasks, resources, mut sol) = three_tasks();
        sol.start_of[1] = Some(5);
        let f = check_feasible(&sol, &tasks, &resources);
        assert!(matches!(f.violations[..], [Violation::Overlap { resource: 0, first: 0, second: 1 }]));
    }

    #[test]
    fn empty_averages_are_zero() {
        let sol = SolutionState::default();
        assert_eq!(avg_normalized_lateness(&sol, &[], &[]).unwrap(), 0.0);
        assert_eq!(avg_solution_quality(&sol, &[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn trace_updates() {
        let mut tr = QualityTrace::constant(0, 1.0);
        tr.set(10, 0.5);
        tr.set(10, 0.6);
        tr.set(20, 0.6);
        assert_eq!(tr.segments(), &[(0, 1.0), (10, 0.6)]);
        assert_eq!(tr.at(9), 1.0);
        assert_eq!(tr.at(10), 0.6);
    }

    fn arb_ptf() -> impl Strategy<Value = PiecewiseLinearPTF> {
        proptest::collection::vec(1u64..500, ENDPOINTS).prop_map(|steps| {
            let mut acc = 0;
            let values = std::array::from_fn(|k| {
                acc += steps[k];
                acc
            });
            PiecewiseLinearPTF::new(values).unwrap()
        })
    }

    /// Per-millisecond simulation of a constant-quality run.
    fn brute_completion(ptf: &PiecewiseLinearPTF, speed: f64, start: Time, trace: &QualityTrace) -> Time {
        let mut t = start;
        loop {
            if (t - start) as f64 * speed >= ptf.at(trace.at(t)) as f64 {
                return t;
            }
            t += 1;
        }
    }

    proptest! {
        #[test]
        fn eval_is_monotone(p in arb_ptf(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.at(lo) <= p.at(hi));
        }

        #[test]
        fn constant_trace_closed_form(p in arb_ptf(), q in 0.0f64..=1.0, speed in 0.5f64..4.0, start in 0i64..1000) {
            let r = Resource { id: 0, speed };
            let c = completion_time_with(&p, speed, start, &QualityTrace::constant(start, q));
            prop_assert_eq!(c, start + (p.at(q) as f64 / speed - 1e-9).ceil() as Time);
            prop_assert_eq!(c, estimated_completion_time(&p, &r, start, q));
        }

        #[test]
        fn realized_quality_covers_request(p in arb_ptf(), q in 0.0f64..=1.0, speed in 0.5f64..4.0) {
            let t = task(0, 0, 100, p);
            let r = Resource { id: 0, speed };
            let trace = QualityTrace::constant(0, q);
            prop_assert!(solution_quality(&t, &r, 0, &trace) >= q - 1e-9);
        }

        #[test]
        fn segment_solver_matches_per_ms_scan(
            p in proptest::collection::vec(1u64..60, ENDPOINTS).prop_map(|s| {
                let mut acc = 0;
                PiecewiseLinearPTF::new(std::array::from_fn(|k| { acc += s[k]; acc })).unwrap()
            }),
            speed in 0.5f64..3.0,
            updates in proptest::collection::vec((1i64..200, 0.0f64..=1.0), 0..5),
        ) {
            let mut trace = QualityTrace::constant(0, 1.0);
            let mut t = 0;
            for (dt, q) in updates {
                t += dt;
                trace.set(t, q);
            }
            prop_assert_eq!(completion_time_with(&p, speed, 0, &trace), brute_completion(&p, speed, 0, &trace));
        }
    }
}
