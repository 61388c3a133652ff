//! Central scheduler: pending-task bookkeeping and the Earliest Due Date +
//! Minimal Completion Time policy.
//!
//! The scheduler never sees ground-truth processing times. Each task enters
//! as a [`TaskView`] carrying only what the scheduling system may know at
//! arrival: timing data and the *estimated* processing time function.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{self, ControlConfig};
use crate::error::{Error, Result};
use crate::model::{
    estimated_completion_time, PiecewiseLinearPTF, Resource, ResourceId, Schedule, SolutionState, TaskId, Time,
};
use crate::rng::StreamRng;

/// The scheduler-side view of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub id: TaskId,
    pub arrival: Time,
    pub requested_response: Time,
    pub estimate: PiecewiseLinearPTF,
    /// Last-resort random tie-break key, drawn once per task.
    pub tie_key: u64,
}

impl TaskView {
    pub fn due(&self) -> Time {
        self.arrival + self.requested_response
    }
}

#[derive(Debug, Clone, Default)]
pub struct SchedulerState {
    tasks: Vec<Option<TaskView>>,
    pub pending: BTreeSet<TaskId>,
    pub being_processed: Vec<bool>,
    pub solution: SolutionState,
    pub schedule: Schedule,
}

impl SchedulerState {
    pub fn new(resources: usize) -> Self {
        Self { schedule: Schedule::empty(resources), ..Default::default() }
    }

    /// # Panics
    /// If the task never arrived.
    pub fn task(&self, id: TaskId) -> &TaskView {
        self.tasks[id].as_ref().expect("unknown task")
    }

    pub fn knows(&self, id: TaskId) -> bool {
        self.tasks.get(id).is_some_and(Option::is_some)
    }

    pub fn is_processing(&self, id: TaskId) -> bool {
        self.being_processed.get(id).copied().unwrap_or(false)
    }

    /// Requested quality of a task at `t`, if the control has set one.
    pub fn requested_quality(&self, id: TaskId, t: Time) -> Option<f64> {
        self.solution.quality_of.get(id).filter(|tr| !tr.is_empty()).map(|tr| tr.at(t))
    }

    /// Records `Q_i(t) = q`. For a task that has not started yet the past
    /// of its trace is irrelevant and gets dropped.
    pub fn set_quality(&mut self, id: TaskId, t: Time, q: f64) {
        let started = self.is_processing(id);
        let trace = &mut self.solution.quality_of[id];
        if started && !trace.is_empty() {
            trace.set(t, q);
        } else {
            trace.reset(t, q);
        }
    }

    pub fn insert(&mut self, view: TaskView) -> Result<()> {
        let id = view.id;
        if self.knows(id) {
            return Err(Error::DuplicateArrival(id));
        }
        if self.tasks.len() <= id {
            self.tasks.resize(id + 1, None);
            self.being_processed.resize(id + 1, false);
        }
        self.solution.ensure(id + 1);
        self.tasks[id] = Some(view);
        self.being_processed[id] = false;
        self.pending.insert(id);
        Ok(())
    }

    pub fn remove(&mut self, id: TaskId) -> Result<()> {
        if !self.is_processing(id) || !self.pending.contains(&id) {
            return Err(Error::UnknownCompletion(id));
        }
        self.being_processed[id] = false;
        self.pending.remove(&id);
        Ok(())
    }
}

/// EDD selection + MCT assignment. Running tasks stay pinned at the head of
/// their resource; every other pending task is placed, in due-date order, on
/// the resource that would finish it earliest at full quality. A task that
/// lands first on an idle resource is marked as being processed.
pub fn edd_mct(t: Time, state: &mut SchedulerState, resources: &[Resource]) -> Schedule {
    let m = resources.len();
    let mut earliest = vec![0 as Time; m];
    let mut sch = Schedule::empty(m);

    for &i in &state.pending {
        if state.being_processed[i] {
            let j = state.solution.resource_of[i].expect("running task without resource");
            let s = state.solution.start_of[i].expect("running task without start");
            earliest[j] = estimated_completion_time(&state.task(i).estimate, &resources[j], s, 1.0);
            sch.per_resource[j].push(i);
        }
    }
    for e in &mut earliest {
        *e = (*e).max(t);
    }

    let mut sorted: Vec<&TaskView> =
        state.pending.iter().filter(|&&i| !state.being_processed[i]).map(|&i| state.task(i)).collect();
    sorted.sort_by_key(|v| (v.due(), v.estimate.max(), v.arrival, v.tie_key));
    let sorted: Vec<TaskId> = sorted.into_iter().map(|v| v.id).collect();

    for i in sorted {
        let estimate = state.task(i).estimate;
        let (j, completion) = (0..m)
            .map(|j| (j, estimated_completion_time(&estimate, &resources[j], earliest[j], 1.0)))
            .min_by_key(|&(j, c)| (c, j))
            .expect("at least one resource");
        state.solution.resource_of[i] = Some(j);
        state.solution.start_of[i] = Some(earliest[j]);
        earliest[j] = completion;
        if sch.per_resource[j].is_empty() {
            state.being_processed[i] = true;
        }
        sch.per_resource[j].push(i);
    }

    state.schedule = sch.clone();
    sch
}

/// What one scheduling round decided.
#[derive(Debug, Clone, Default)]
pub struct Reaction {
    /// Tasks that started processing in this round, with their resource.
    pub dispatched: Vec<(TaskId, ResourceId)>,
    pub pending: usize,
    pub policy_time: Duration,
    pub control_time: Duration,
}

/// Scheduler with its policy and quality control, driven by events.
#[derive(Debug)]
pub struct Scheduler {
    pub state: SchedulerState,
    resources: Vec<Resource>,
    control: ControlConfig,
    rng: StreamRng,
    static_quality: Vec<f64>,
}

impl Scheduler {
    pub fn new(resources: Vec<Resource>, control: ControlConfig, rng: StreamRng) -> Self {
        Self { state: SchedulerState::new(resources.len()), resources, control, rng, static_quality: Vec::new() }
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn control(&self) -> &ControlConfig {
        &self.control
    }

    /// Draws a fresh random tie-break key from the scheduler's stream.
    pub fn draw_tie_key(&mut self) -> u64 {
        self.rng.random()
    }

    pub fn on_task_arrival(&mut self, view: TaskView, t: Time) -> Result<Reaction> {
        let id = view.id;
        self.state.insert(view)?;
        if self.static_quality.len() <= id {
            self.static_quality.resize(id + 1, 1.0);
        }
        self.static_quality[id] = control::static_control(self.control.mode, self.control.min_quality, &mut self.rng);
        Ok(self.reschedule(t))
    }

    pub fn on_solution_received(&mut self, id: TaskId, t: Time) -> Result<Reaction> {
        self.state.remove(id)?;
        Ok(self.reschedule(t))
    }

    fn reschedule(&mut self, t: Time) -> Reaction {
        let before: Vec<bool> = self.state.being_processed.clone();
        let clock = Instant::now();
        let sch = edd_mct(t, &mut self.state, &self.resources);
        let policy_time = clock.elapsed();

        let clock = Instant::now();
        control::apply(t, &mut self.state, &sch, &self.resources, &self.control, &self.static_quality);
        let control_time = clock.elapsed();

        let dispatched = sch
            .per_resource
            .iter()
            .enumerate()
            .filter_map(|(j, list)| list.first().map(|&i| (i, j)))
            .filter(|&(i, _)| !before.get(i).copied().unwrap_or(false))
            .collect();
        Reaction { dispatched, pending: self.state.pending.len(), policy_time, control_time }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::control::ControlMode;
    use crate::model::fixtures::linear;
    use crate::rng::{substream, Stream};

    pub fn view(id: TaskId, arrival: Time, response: Time, est_max: u64) -> TaskView {
        TaskView { id, arrival, requested_response: response, estimate: linear(est_max), tie_key: id as u64 }
    }

    pub fn resources(speeds: &[f64]) -> Vec<Resource> {
        speeds.iter().enumerate().map(|(id, &speed)| Resource { id, speed }).collect()
    }

    #[test]
    fn edd_then_mct() {
        let res = resources(&[1.0, 2.0]);
        let mut st = SchedulerState::new(2);
        st.insert(view(0, 0, 10, 10)).unwrap(); // A, due 10
        st.insert(view(1, 0, 5, 10)).unwrap(); // B, due 5
        let sch = edd_mct(0, &mut st, &res);
        assert_eq!(sch.per_resource, vec![vec![0], vec![1]]);
        assert_eq!(st.solution.start_of[0], Some(0));
        assert_eq!(st.solution.start_of[1], Some(0));
        assert!(st.being_processed[0] && st.being_processed[1]);
    }

    #[test]
    fn empty_pending_gives_empty_schedule() {
        let res = resources(&[1.0, 2.0]);
        let mut st = SchedulerState::new(2);
        assert!(edd_mct(0, &mut st, &res).is_empty());
    }

    #[test]
    fn running_task_is_pinned() {
        let res = resources(&[1.0]);
        let mut st = SchedulerState::new(1);
        st.insert(view(0, 0, 100, 50)).unwrap();
        edd_mct(0, &mut st, &res);
        st.insert(view(1, 0, 10, 10)).unwrap();
        let sch = edd_mct(0, &mut st, &res);
        // the earlier-due newcomer queues behind the running task
        assert_eq!(sch.per_resource, vec![vec![0, 1]]);
        assert_eq!(st.solution.start_of[1], Some(50));
        assert!(!st.being_processed[1]);

        let res = resources(&[1.0, 1.0]);
        let mut st = SchedulerState::new(2);
        st.insert(view(0, 0, 100, 50)).unwrap();
        edd_mct(0, &mut st, &res);
        st.insert(view(1, 0, 10, 10)).unwrap();
        let sch = edd_mct(0, &mut st, &res);
        assert_eq!(sch.per_resource, vec![vec![0], vec![1]]);
        assert_eq!(st.solution.start_of[1], Some(0));
    }

    #[test]
    fn equal_due_dates_prefer_shorter_tasks() {
        let res = resources(&[1.0]);
        let mut st = SchedulerState::new(1);
        st.insert(view(0, 0, 1000, 10)).unwrap(); // occupies the resource
        edd_mct(0, &mut st, &res);
        st.insert(view(1, 0, 500, 90)).unwrap();
        st.insert(view(2, 0, 500, 30)).unwrap();
        st.insert(view(3, 0, 500, 60)).unwrap();
        let sch = edd_mct(0, &mut st, &res);
        assert_eq!(sch.per_resource[0], vec![0, 2, 3, 1]);
    }

    #[test]
    fn never_starts_in_the_past() {
        let res = resources(&[1.0, 3.0]);
        let mut st = SchedulerState::new(2);
        st.insert(view(0, 0, 100, 30)).unwrap();
        edd_mct(0, &mut st, &res);
        // the running task's estimated completion (10) lies in the past at t = 40
        st.insert(view(1, 40, 100, 30)).unwrap();
        st.insert(view(2, 40, 100, 30)).unwrap();
        edd_mct(40, &mut st, &res);
        for i in [1, 2] {
            assert!(st.solution.start_of[i].unwrap() >= 40);
        }
    }

    #[test]
    fn protocol_errors() {
        let mut s = Scheduler::new(
            resources(&[1.0]),
            ControlConfig { mode: ControlMode::Max, ..Default::default() },
            substream(1, Stream::Control),
        );
        s.on_task_arrival(view(0, 0, 10, 10), 0).unwrap();
        assert!(matches!(s.on_task_arrival(view(0, 0, 10, 10), 0), Err(Error::DuplicateArrival(0))));
        assert!(matches!(s.on_solution_received(7, 0), Err(Error::UnknownCompletion(7))));
    }

    #[test]
    fn event_flow() {
        let mut s = Scheduler::new(
            resources(&[1.0]),
            ControlConfig { mode: ControlMode::Max, ..Default::default() },
            substream(1, Stream::Control),
        );
        let r = s.on_task_arrival(view(0, 0, 100, 30), 0).unwrap();
        assert_eq!(r.dispatched, vec![(0, 0)]);
        assert_eq!(s.state.pending.len(), 1);
        let r = s.on_task_arrival(view(1, 5, 100, 30), 5).unwrap();
        assert!(r.dispatched.is_empty());
        assert_eq!(s.state.solution.start_of[1], Some(30));
        // the solution arrives late; the queued task starts now, not at its plan
        let r = s.on_solution_received(0, 42).unwrap();
        assert_eq!(r.dispatched, vec![(1, 0)]);
        assert_eq!(s.state.solution.start_of[1], Some(42));
        let r = s.on_solution_received(1, 72).unwrap();
        assert!(r.dispatched.is_empty());
        assert!(s.state.schedule.is_empty());
        assert_eq!(r.pending, 0);
    }
}
