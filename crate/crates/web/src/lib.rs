//! Browser bindings for the scheduling library.
//!
//! Every export takes plain numbers or a JSON string and returns a JSON
//! string. Failures come back as `{"error": "..."}` so the page never has to
//! catch exceptions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use anysched::control::{bisection_control, schedule_recomputation, BisectionBranch, ControlConfig, ControlMode};
use anysched::estimator::{approximate, ingest_curve, trim_tail, EstimationMode, ObjectiveCurve};
use anysched::metrics::{pending_series, summarize};
use anysched::model::endpoint_quality;
use anysched::scheduler::{edd_mct, SchedulerState, TaskView};
use anysched::sim::{run, SimConfig};
use anysched::workload::{generate_scenario, generate_training, WorkloadConfig};
use anysched::{PiecewiseLinearPTF, Resource};

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
struct PtfEstimate {
    /// Points left after the flat tail is cut, in normalized time.
    trimmed: Vec<(f64, f64)>,
    kept: usize,
    endpoints: [f64; 10],
    ptf: [u64; 10],
}

/// Reduces an objective curve `[[time_ms, value], ...]` recorded on a
/// resource of the given speed to a processing time function.
#[wasm_bindgen]
pub fn estimate_ptf(points_json: &str, speed: f64, wct: u32) -> String {
    respond((|| {
        let points: Vec<(f64, f64)> = serde_json::from_str(points_json).map_err(|e| e.to_string())?;
        let curve = ObjectiveCurve::new(points).map_err(|e| e.to_string())?;
        let normalized = ingest_curve(&curve, speed, u64::from(wct)).map_err(|e| e.to_string())?;
        let (trimmed, kept) = trim_tail(&normalized);
        let endpoints = approximate(&trimmed).map_err(|e| e.to_string())?;
        let ptf = PiecewiseLinearPTF::from_estimates(&endpoints, 1.0);
        Ok(PtfEstimate { trimmed: trimmed.points().to_vec(), kept, endpoints, ptf: *ptf.values() })
    })())
}

/// Processing time of a function given as ten endpoints at quality `q`.
#[wasm_bindgen]
pub fn evaluate_ptf(endpoints_json: &str, q: f64) -> String {
    respond((|| {
        let values: [u64; 10] = serde_json::from_str(endpoints_json).map_err(|e| e.to_string())?;
        let ptf = PiecewiseLinearPTF::new(values).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&q) {
            return Err(format!("quality {q} is outside [0, 1]"));
        }
        Ok(json!({ "q": q, "time": ptf.at(q), "work": ptf.work_at(q) }))
    })())
}

#[derive(Serialize)]
struct BisectionStep {
    iteration: u32,
    quality: f64,
    lateness: f64,
}

#[derive(Serialize)]
struct BisectionTrace {
    /// Average normalized lateness of the schedule at evenly spaced qualities.
    curve: Vec<(f64, f64)>,
    steps: Vec<BisectionStep>,
    branch: &'static str,
    quality: f64,
    lateness: f64,
    /// Task ids per resource in schedule order.
    schedule: Vec<Vec<usize>>,
}

/// Random pending batch scheduled by EDD+MCT, the lateness it would have at
/// each global quality, and the midpoints bisection visits.
#[wasm_bindgen]
pub fn bisection_trace(seed: u32, tasks: usize, resources: usize, min_quality: f64) -> String {
    respond((|| {
        if tasks == 0 || resources == 0 {
            return Err("need at least one task and one resource".to_string());
        }
        let config = ControlConfig { mode: ControlMode::Bisection, min_quality, ..Default::default() };
        config.validate().map_err(|p| p.join("; "))?;
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
        let res: Vec<Resource> = (0..resources).map(|id| Resource { id, speed: rng.random_range(1.0..3.0) }).collect();
        let mut state = SchedulerState::new(resources);
        let per_resource = tasks as f64 / resources as f64;
        for id in 0..tasks {
            let max = rng.random_range(200..2_000u64);
            let estimate = PiecewiseLinearPTF::new(std::array::from_fn(|k| {
                // convex: quality gets more expensive towards the top
                let q = endpoint_quality(k);
                ((max as f64) * q * q).round().max((k + 1) as f64) as u64
            }))
            .map_err(|e| e.to_string())?;
            let response = (rng.random_range(0.2..0.8) * (per_resource + 1.0) * 250.0) as i64 + 1;
            state
                .insert(TaskView { id, arrival: 0, requested_response: response, estimate, tie_key: id as u64 })
                .map_err(|e| e.to_string())?;
        }
        let sch = edd_mct(0, &mut state, &res);
        let curve = (0..=40)
            .map(|i| {
                let q = min_quality + (1.0 - min_quality) * i as f64 / 40.0;
                (q, schedule_recomputation(0, &sch, q, &mut state, &res))
            })
            .collect();
        let mut steps = Vec::new();
        let mut last = None;
        for iteration in 0..=config.max_iters {
            let o = bisection_control(0, &mut state, &sch, &res, &ControlConfig { max_iters: iteration, ..config });
            if o.branch != BisectionBranch::Bisected {
                last = Some(o);
                break;
            }
            if iteration > 0 {
                steps.push(BisectionStep { iteration, quality: o.quality, lateness: o.lateness });
            }
            last = Some(o);
        }
        let o = last.expect("at least one round");
        let branch = match o.branch {
            BisectionBranch::FullQuality => "full-quality",
            BisectionBranch::MinQuality => "min-quality",
            BisectionBranch::Bisected => "bisected",
        };
        Ok(BisectionTrace {
            curve,
            steps,
            branch,
            quality: o.quality,
            lateness: o.lateness,
            schedule: sch.per_resource.clone(),
        })
    })())
}

#[derive(Serialize)]
struct TaskPoint {
    id: usize,
    completion: i64,
    lateness: f64,
    quality: f64,
}

#[derive(Serialize)]
struct DemoRun {
    control: String,
    tasks: usize,
    avg_quality: f64,
    avg_lateness: f64,
    max_lateness: f64,
    pending: Vec<(i64, usize)>,
    completions: Vec<TaskPoint>,
}

/// Small end-to-end simulation: `tasks` requests spread over three groups on
/// `resources` machines.
#[wasm_bindgen]
pub fn simulate_demo(seed: u32, tasks: usize, resources: usize, control: &str, estimation: &str) -> String {
    respond((|| {
        let mode: ControlMode = control.parse().map_err(|e: anysched::Error| e.to_string())?;
        let estimation: EstimationMode = estimation.parse().map_err(|e: anysched::Error| e.to_string())?;
        if tasks > 2_000 {
            return Err("at most 2000 tasks in the browser".to_string());
        }
        let workload = WorkloadConfig {
            seed: u64::from(seed),
            num_resources: resources,
            task_counts: vec![tasks / 2, tasks - tasks / 2 - tasks / 5, tasks / 5],
            train_size: 120,
            test_size: 0,
            ..Default::default()
        };
        let scenario = generate_scenario(&workload).map_err(|e| e.to_string())?;
        let (train, _) = generate_training(&workload);
        let config = SimConfig {
            control: ControlConfig { mode, ..Default::default() },
            estimation,
            seed: u64::from(seed),
            ..Default::default()
        };
        let out = run(&scenario, &config, &train).map_err(|e| e.to_string())?;
        let m = summarize(&out.records).map_err(|e| e.to_string())?;
        let mut completions: Vec<TaskPoint> = out
            .records
            .iter()
            .map(|r| TaskPoint {
                id: r.task_id,
                completion: r.completion,
                lateness: r.normalized_lateness,
                quality: r.achieved_quality,
            })
            .collect();
        completions.sort_by_key(|p| (p.completion, p.id));
        Ok(DemoRun {
            control: mode.to_string(),
            tasks: m.tasks,
            avg_quality: m.avg_solution_quality,
            avg_lateness: m.avg_normalized_lateness,
            max_lateness: m.max_normalized_lateness,
            pending: pending_series(&out.records),
            completions,
        })
    })())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn linear_curve_gives_even_endpoints() {
        let points: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 * 100.0, i as f64)).collect();
        let v = parse(&estimate_ptf(&serde_json::to_string(&points).unwrap(), 1.0, 2_000));
        let ptf: Vec<u64> = serde_json::from_value(v["ptf"].clone()).unwrap();
        assert_eq!(ptf, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
        assert_eq!(v["kept"], 11);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(parse(&estimate_ptf("not json", 1.0, 10))["error"].is_string());
        assert!(parse(&evaluate_ptf("[1,2,3]", 0.5))["error"].is_string());
        assert!(parse(&evaluate_ptf("[10,20,30,40,50,60,70,80,90,100]", 1.5))["error"].is_string());
        assert!(parse(&simulate_demo(1, 10, 2, "fastest", "full"))["error"].is_string());
        assert!(parse(&bisection_trace(1, 0, 2, 0.2))["error"].is_string());
    }

    #[test]
    fn evaluate_interpolates() {
        let v = parse(&evaluate_ptf("[10,20,30,40,50,60,70,80,90,100]", 0.55));
        assert_eq!(v["time"], 55);
    }

    #[test]
    fn bisection_steps_close_in_on_the_root() {
        let v = parse(&bisection_trace(3, 40, 3, 0.2));
        assert_eq!(v["branch"], "bisected");
        let steps = v["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 30);
        let q = v["quality"].as_f64().unwrap();
        // the root sits where the lateness curve changes sign
        let curve: Vec<(f64, f64)> = serde_json::from_value(v["curve"].clone()).unwrap();
        let crossing = curve.windows(2).find(|w| w[0].1 <= 0.0 && w[1].1 > 0.0).unwrap();
        assert!(q >= crossing[0].0 - 1e-9 && q <= crossing[1].0 + 1e-9, "{q} outside {crossing:?}");
    }

    #[test]
    fn demo_run_covers_every_task() {
        let v = parse(&simulate_demo(2, 60, 3, "individual", "full"));
        assert_eq!(v["tasks"], 60);
        assert_eq!(v["completions"].as_array().unwrap().len(), 60);
        let again = simulate_demo(2, 60, 3, "individual", "full");
        assert_eq!(v, parse(&again));
    }
}
