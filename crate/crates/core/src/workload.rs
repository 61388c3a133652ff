//! Synthetic scenarios: rostering-like instances with anytime objective
//! curves, client arrival streams, requested response times and resources.
//!
//! Instances are described by the number of employees, the roster length in
//! days, the weekly workload of the employees and the coverage (required
//! shifts relative to what the workload allows). The regression only sees
//! `[employees, days, required shifts, employees * days]`; workload,
//! coverage and noise act as hidden factors. Each instance carries an
//! objective curve of an imagined anytime run: nothing until a first roster
//! is constructed at `t0`, then exponential improvement whose slope drops to
//! 5 % of its initial value at the threshold time `M`, followed by a flat
//! tail up to the worst case time. The ground-truth processing time
//! function is the estimator pipeline applied to that curve.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{curve_params, ObjectiveCurve, TrainingObservation};
use crate::model::{Instance, PiecewiseLinearPTF, Resource, Task, Time};
use crate::rng::{item_stream, substream, Stream, StreamRng};

pub const FEATURE_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub num_resources: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Upper bounds (ms) of the maximum processing time of all groups but
    /// the last, which is unbounded.
    pub group_thresholds_ms: Vec<u64>,
    pub task_counts: Vec<usize>,
    pub clients_per_group: usize,
    /// Mean gap between two requests of the same client.
    pub mean_inter_arrival_ms: f64,
    /// Offline training and held-out test instances, drawn independently of
    /// the scenario.
    pub train_size: usize,
    pub test_size: usize,
    /// Lower bound of every estimated processing time.
    pub floor_ms: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_resources: 20,
            speed_min: 1.0,
            speed_max: 3.0,
            group_thresholds_ms: vec![2_000, 20_000],
            task_counts: vec![500, 510, 420],
            clients_per_group: 6,
            mean_inter_arrival_ms: 100.0,
            train_size: 300,
            test_size: 200,
            floor_ms: 1.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.num_resources == 0 {
            problems.push("num_resources must be positive".to_string());
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max && self.speed_max.is_finite()) {
            problems.push(format!(
                "speed range must satisfy 0 < speed_min <= speed_max, got [{}, {}]",
                self.speed_min, self.speed_max
            ));
        }
        if self.task_counts.len() != self.group_thresholds_ms.len() + 1 {
            problems.push(format!(
                "{} group thresholds define {} groups, but {} task counts are given",
                self.group_thresholds_ms.len(),
                self.group_thresholds_ms.len() + 1,
                self.task_counts.len()
            ));
        }
        if self.task_counts.contains(&0) {
            problems.push("all task counts must be positive".to_string());
        }
        if self.group_thresholds_ms.windows(2).any(|w| w[0] >= w[1]) || self.group_thresholds_ms.first() == Some(&0) {
            problems.push("group thresholds must be positive and strictly increasing".to_string());
        }
        if self.clients_per_group == 0 {
            problems.push("clients_per_group must be positive".to_string());
        }
        if !(self.mean_inter_arrival_ms > 0.0 && self.mean_inter_arrival_ms.is_finite()) {
            problems.push("mean_inter_arrival_ms must be positive".to_string());
        }
        if !(self.floor_ms >= 1.0) {
            problems.push("floor_ms must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn num_groups(&self) -> usize {
        self.task_counts.len()
    }

    pub fn total_tasks(&self) -> usize {
        self.task_counts.iter().sum()
    }

    /// Group of an instance with the given maximum processing time.
    pub fn group_of(&self, max_ms: u64) -> usize {
        self.group_thresholds_ms.partition_point(|&b| b < max_ms)
    }
}

/// An instance together with the objective curve its run would record on a
/// resource of speed 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDraw {
    pub instance: Instance,
    pub profile: ObjectiveCurve,
}

impl InstanceDraw {
    pub fn observation(&self) -> TrainingObservation {
        let params = curve_params(&self.profile, 1.0, self.instance.wct).expect("profiles are valid by construction");
        TrainingObservation { features: self.instance.features.clone(), params }
    }
}

/// Draws one synthetic instance; `id` only labels it.
pub fn draw_instance<R: Rng + ?Sized>(id: u64, rng: &mut R) -> InstanceDraw {
    let employees = rng.random_range(5..=30) as f64;
    let days = [7.0, 14.0, 31.0][rng.random_range(0..3)];
    let weekly_hours = [20.0, 40.0][rng.random_range(0..2)];
    let coverage: f64 = rng.random_range(0.7..1.3);
    let required = (coverage * employees * days * weekly_hours / 56.0).round().max(1.0);

    let noise = Normal::new(0.0, 0.25).expect("valid deviation").sample(rng);
    let threshold_ms = (250.0f64.ln()
        + 1.6 * (employees * days / 35.0).ln()
        + 0.8 * coverage.ln()
        + if weekly_hours > 30.0 { 0.3 } else { 0.0 }
        + noise)
        .exp()
        .max(20.0);
    let start_ms = threshold_ms * rng.random_range(0.05..0.3);
    let horizon_ms = start_ms + (threshold_ms - start_ms) * rng.random_range(1.2..2.0);
    let wct = horizon_ms.ceil() as u64;

    // improvement rate chosen so that the slope at the threshold time is 5 %
    // of the initial slope
    let rate = 20.0f64.ln() / (threshold_ms - start_ms);
    let value = |t: f64| 1.0 - (-(t - start_ms) * rate).exp();
    let samples = rng.random_range(40..=80);
    let mut times: Vec<u64> = (0..samples)
        .map(|_| rng.random_range(start_ms..horizon_ms).round() as u64)
        .chain([start_ms.round() as u64, threshold_ms.round() as u64])
        .filter(|&t| t as f64 >= start_ms.round() && t <= wct)
        .collect();
    times.sort_unstable();
    times.dedup();
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(times.len());
    for t in times {
        let v = value(t as f64).max(0.0);
        if points.last().is_none_or(|&(_, last)| v > last) {
            points.push((t as f64, v));
        }
    }
    let profile = ObjectiveCurve::new(points).expect("strictly increasing by construction");
    let params = curve_params(&profile, 1.0, wct).expect("profile within the worst case time");
    let instance = Instance {
        id,
        features: vec![employees, days, required, employees * days],
        true_ptf: PiecewiseLinearPTF::from_estimates(&params, 1.0),
        wct,
    };
    InstanceDraw { instance, profile }
}

/// Draws instances until every group holds its task count; surplus draws of
/// full groups are dropped. Returned per group, in draw order.
pub fn generate_instances(config: &WorkloadConfig, rng: &mut StreamRng) -> Vec<Vec<InstanceDraw>> {
    let mut groups: Vec<Vec<InstanceDraw>> = vec![Vec::new(); config.num_groups()];
    let mut id = 0u64;
    while groups.iter().zip(&config.task_counts).any(|(g, &n)| g.len() < n) {
        let mut item = item_stream(rng.random(), id);
        let draw = draw_instance(id, &mut item);
        id += 1;
        let g = config.group_of(draw.instance.true_ptf.max());
        if groups[g].len() < config.task_counts[g] {
            groups[g].push(draw);
        }
        if id > 1_000_000 {
            panic!("instance family cannot fill the configured groups");
        }
    }
    groups
}

/// Requested response time: uniform over [1.5 k, 3 k] seconds where k is the
/// 1-second bin of the maximum processing time.
pub fn assign_requested_response<R: Rng + ?Sized>(max_ms: u64, rng: &mut R) -> Time {
    let k = max_ms.div_ceil(1000).max(1) as f64;
    (rng.random_range(1.5 * k..=3.0 * k) * 1000.0).round() as Time
}

/// One arrival: time, group and client (numbered within the group).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: Time,
    pub group: usize,
    pub client: usize,
}

/// Independent exponential request streams per client. A group's requests
/// stop once its task count is reached.
pub fn generate_arrivals(config: &WorkloadConfig, rng: &mut StreamRng) -> Vec<Arrival> {
    let gap = Exp::new(1.0 / config.mean_inter_arrival_ms).expect("positive mean");
    let mut all = Vec::with_capacity(config.total_tasks());
    for (group, &count) in config.task_counts.iter().enumerate() {
        let mut group_arrivals = Vec::with_capacity(count * config.clients_per_group);
        for client in 0..config.clients_per_group {
            let mut clock = 0.0f64;
            for _ in 0..count {
                clock += gap.sample(rng);
                group_arrivals.push(Arrival { time: clock.round() as Time, group, client });
            }
        }
        group_arrivals.sort_by_key(|a| (a.time, a.client));
        group_arrivals.truncate(count);
        all.extend(group_arrivals);
    }
    all.sort_by_key(|a| (a.time, a.group, a.client));
    all
}

pub fn generate_resources(config: &WorkloadConfig, rng: &mut StreamRng) -> Vec<Resource> {
    (0..config.num_resources)
        .map(|id| Resource { id, speed: rng.random_range(config.speed_min..=config.speed_max) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTask {
    #[serde(flatten)]
    pub task: Task,
    pub group: usize,
    pub client: usize,
    /// Objective curve the run records at speed 1.
    pub profile: ObjectiveCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: WorkloadConfig,
    pub resources: Vec<Resource>,
    /// Ordered by arrival; `task.id` is the position in this list.
    pub tasks: Vec<ScenarioTask>,
}

impl Scenario {
    pub fn tasks(&self) -> Vec<Task> {
        self.tasks.iter().map(|t| t.task.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resources.is_empty() {
            return Err(Error::InvalidConfig(vec!["scenario has no resources".into()]));
        }
        if let Some(r) = self.resources.iter().enumerate().find(|(i, r)| r.id != *i || !(r.speed > 0.0)) {
            return Err(Error::InvalidConfig(vec![format!(
                "resource {} must have id {} and a positive speed",
                r.1.id, r.0
            )]));
        }
        let mut last = Time::MIN;
        for (i, t) in self.tasks.iter().enumerate() {
            let task = &t.task;
            if task.id != i {
                return Err(Error::InvalidConfig(vec![format!("task at position {i} has id {}", task.id)]));
            }
            if task.arrival < last {
                return Err(Error::InvalidConfig(vec![format!("task {i} arrives before its predecessor")]));
            }
            if task.requested_response <= 0 {
                return Err(Error::InvalidConfig(vec![format!("task {i} has a non-positive response time")]));
            }
            task.instance.validate(FEATURE_DIM.min(task.instance.features.len()).max(1))?;
            last = task.arrival;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let s: Scenario = serde_json::from_reader(r)?;
        s.validate()?;
        Ok(s)
    }
}

pub fn generate_scenario(config: &WorkloadConfig) -> Result<Scenario> {
    config.validate().map_err(Error::InvalidConfig)?;
    let mut groups = generate_instances(config, &mut substream(config.seed, Stream::Instances));
    let resources = generate_resources(config, &mut substream(config.seed, Stream::Speeds));
    let arrivals = generate_arrivals(config, &mut substream(config.seed, Stream::Arrivals));
    let mut response_rng = substream(config.seed, Stream::ResponseTimes);

    // each group's instances are handed out in a shuffled order
    let mut shuffle_rng = substream(config.seed ^ 0x5eed, Stream::Instances);
    for g in &mut groups {
        g.shuffle(&mut shuffle_rng);
    }
    let mut next = vec![0usize; groups.len()];
    let tasks = arrivals
        .into_iter()
        .enumerate()
        .map(|(id, a)| {
            let draw = groups[a.group][next[a.group]].clone();
            next[a.group] += 1;
            let requested_response = assign_requested_response(draw.instance.true_ptf.max(), &mut response_rng);
            ScenarioTask {
                task: Task { id, arrival: a.time, requested_response, instance: draw.instance },
                group: a.group,
                client: a.client,
                profile: draw.profile,
            }
        })
        .collect();
    Ok(Scenario { config: config.clone(), resources, tasks })
}

/// Offline training and test observations, from a stream independent of
/// the scenario's instances.
pub fn generate_training(config: &WorkloadConfig) -> (Vec<TrainingObservation>, Vec<TrainingObservation>) {
    let mut rng = substream(config.seed, Stream::Training);
    let mut all: Vec<TrainingObservation> = (0..config.train_size + config.test_size)
        .map(|i| {
            let mut item = item_stream(rng.random(), i as u64);
            draw_instance(i as u64, &mut item).observation()
        })
        .collect();
    let test = all.split_off(config.train_size);
    (all, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small() -> WorkloadConfig {
        WorkloadConfig { task_counts: vec![30, 20, 10], num_resources: 4, ..Default::default() }
    }

    #[test]
    fn instance_features_and_truth() {
        let mut rng = StreamRng::seed_from_u64(5);
        for id in 0..500 {
            let d = draw_instance(id, &mut rng);
            let f = &d.instance.features;
            assert!((5.0..=30.0).contains(&f[0]) && f[0].fract() == 0.0);
            assert!([7.0, 14.0, 31.0].contains(&f[1]));
            assert_eq!(f[3], f[0] * f[1]);
            d.instance.validate(FEATURE_DIM).unwrap();
            let obs = d.observation();
            assert_eq!(PiecewiseLinearPTF::from_estimates(&obs.params, 1.0), d.instance.true_ptf);
        }
    }

    #[test]
    fn scenario_is_deterministic_and_consistent() {
        let cfg = small();
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_json(&mut ja).unwrap();
        b.write_json(&mut jb).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(Scenario::read_json(ja.as_slice()).unwrap(), a);

        assert_eq!(a.tasks.len(), 60);
        assert!(a.tasks.windows(2).all(|w| w[0].task.arrival <= w[1].task.arrival));
        for (g, &n) in cfg.task_counts.iter().enumerate() {
            assert_eq!(a.tasks.iter().filter(|t| t.group == g).count(), n);
        }
        for t in &a.tasks {
            let max = t.task.instance.true_ptf.max();
            assert_eq!(cfg.group_of(max), t.group);
            let k = max.div_ceil(1000) as Time;
            assert!((1500 * k..=3000 * k).contains(&t.task.requested_response));
        }
        let other = generate_scenario(&WorkloadConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(other.resources, a.resources);
    }

    #[test]
    fn resources_follow_the_config() {
        let cfg = WorkloadConfig::default();
        let r = generate_resources(&cfg, &mut substream(1, Stream::Speeds));
        assert_eq!(r.len(), 20);
        assert!(r.iter().all(|r| (1.0..=3.0).contains(&r.speed)));
        assert_eq!(r, generate_resources(&cfg, &mut substream(1, Stream::Speeds)));
    }

    #[test]
    fn response_time_bins() {
        let mut rng = StreamRng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!((1500..=3000).contains(&assign_requested_response(500, &mut rng)));
            assert!((4500..=9000).contains(&assign_requested_response(2500, &mut rng)));
        }
    }

    #[test]
    fn arrival_streams() {
        let cfg = WorkloadConfig::default();
        let arrivals = generate_arrivals(&cfg, &mut substream(3, Stream::Arrivals));
        assert_eq!(arrivals.len(), 1430);
        assert!(arrivals.windows(2).all(|w| w[0].time <= w[1].time));

        // per-client gaps, measured on a long stream of one client
        let one = WorkloadConfig { task_counts: vec![500], group_thresholds_ms: vec![], clients_per_group: 1, ..cfg };
        let a = generate_arrivals(&one, &mut substream(3, Stream::Arrivals));
        let mean = a.last().unwrap().time as f64 / a.len() as f64;
        assert!((mean - 100.0).abs() < 10.0, "{mean}");
    }

    #[test]
    fn groups_partition_by_maximum() {
        let cfg = WorkloadConfig::default();
        assert_eq!(cfg.group_of(1), 0);
        assert_eq!(cfg.group_of(2_000), 0);
        assert_eq!(cfg.group_of(2_001), 1);
        assert_eq!(cfg.group_of(20_000), 1);
        assert_eq!(cfg.group_of(20_001), 2);
    }

    #[test]
    fn validation_lists_every_problem() {
        let bad = WorkloadConfig {
            num_resources: 0,
            speed_min: 3.0,
            speed_max: 1.0,
            task_counts: vec![0, 1],
            clients_per_group: 0,
            ..Default::default()
        };
        let problems = bad.validate().unwrap_err();
        assert_eq!(problems.len(), 5, "{problems:?}");
        assert!(WorkloadConfig::default().validate().is_ok());
    }

    #[test]
    fn training_sets() {
        let cfg = WorkloadConfig { train_size: 30, test_size: 20, ..Default::default() };
        let (train, test) = generate_training(&cfg);
        assert_eq!((train.len(), test.len()), (30, 20));
        assert_eq!(generate_training(&cfg).0, train);
    }
}
