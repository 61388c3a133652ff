//! Run statistics and estimation error tables.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{ape, estimate, linear_estimate, EstimationMode, RegressionModel, TrainingObservation};
use crate::model::{endpoint_quality, PiecewiseLinearPTF, Time, ENDPOINTS};
use crate::sim::TaskRecord;

/// Probabilities at which distributions are summarized.
pub const QUANTILES: [f64; 6] = [0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

/// Quantile of ascending `sorted` data, interpolating linearly between the
/// two closest ranks.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64]) -> [f64; QUANTILES.len()] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    QUANTILES.map(|p| quantile(&sorted, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub tasks: usize,
    pub avg_solution_quality: f64,
    pub avg_normalized_lateness: f64,
    pub max_normalized_lateness: f64,
    pub quality_quantiles: [f64; QUANTILES.len()],
    pub lateness_quantiles: [f64; QUANTILES.len()],
    /// Number of pending tasks after all events at each event time.
    pub pending: Vec<(Time, usize)>,
}

impl RunMetrics {
    pub fn max_pending(&self) -> usize {
        self.pending.iter().map(|p| p.1).max().unwrap_or(0)
    }

    /// `(metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("tasks".to_string(), self.tasks as f64),
            ("avg_solution_quality".to_string(), self.avg_solution_quality),
            ("avg_normalized_lateness".to_string(), self.avg_normalized_lateness),
            ("max_normalized_lateness".to_string(), self.max_normalized_lateness),
            ("max_pending".to_string(), self.max_pending() as f64),
        ];
        for (p, v) in QUANTILES.iter().zip(&self.quality_quantiles) {
            rows.push((format!("solution_quality_q{p}"), *v));
        }
        for (p, v) in QUANTILES.iter().zip(&self.lateness_quantiles) {
            rows.push((format!("normalized_lateness_q{p}"), *v));
        }
        rows
    }
}

pub fn summarize(records: &[TaskRecord]) -> Result<RunMetrics> {
    if records.is_empty() {
        return Err(Error::Empty("task records"));
    }
    let n = records.len() as f64;
    let quality: Vec<f64> = records.iter().map(|r| r.achieved_quality).collect();
    let lateness: Vec<f64> = records.iter().map(|r| r.normalized_lateness).collect();
    Ok(RunMetrics {
        tasks: records.len(),
        avg_solution_quality: quality.iter().sum::<f64>() / n,
        avg_normalized_lateness: lateness.iter().sum::<f64>() / n,
        max_normalized_lateness: lateness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        quality_quantiles: quantiles(&quality),
        lateness_quantiles: quantiles(&lateness),
        pending: pending_series(records),
    })
}

/// A task is pending from its arrival until its completion.
pub fn pending_series(records: &[TaskRecord]) -> Vec<(Time, usize)> {
    let mut deltas: Vec<(Time, i64)> = Vec::with_capacity(2 * records.len());
    for r in records {
        deltas.push((r.arrival, 1));
        deltas.push((r.completion, -1));
    }
    deltas.sort_unstable();
    let mut series: Vec<(Time, usize)> = Vec::new();
    let mut count = 0i64;
    for (t, d) in deltas {
        count += d;
        match series.last_mut() {
            Some(last) if last.0 == t => last.1 = count as usize,
            _ => series.push((t, count as usize)),
        }
    }
    series
}

/// APE quantiles per quality endpoint: `table[k][p]` is quantile `QUANTILES[p]`
/// of the errors at quality `0.1 (k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApeTable {
    pub table: [[f64; QUANTILES.len()]; ENDPOINTS],
}

pub fn estimation_report(
    model: &RegressionModel,
    test: &[TrainingObservation],
    mode: EstimationMode,
    floor_ms: f64,
) -> Result<ApeTable> {
    if test.is_empty() {
        return Err(Error::Empty("test observations"));
    }
    let mut errors: Vec<Vec<f64>> = (0..ENDPOINTS).map(|_| Vec::with_capacity(test.len())).collect();
    for o in test {
        let truth = PiecewiseLinearPTF::from_estimates(&o.params, floor_ms);
        // the worst case time only matters for an untrained model
        let wct = truth.max();
        let est = match mode {
            EstimationMode::Linear => linear_estimate(Some(model), &o.features, wct, floor_ms)?,
            _ => estimate(Some(model), &o.features, wct, floor_ms)?,
        };
        for (k, e) in errors.iter_mut().enumerate() {
            e.push(ape(&truth, &est, endpoint_quality(k)));
        }
    }
    Ok(ApeTable { table: std::array::from_fn(|k| quantiles(&errors[k])) })
}

fn quantile_header(first: &str) -> Vec<String> {
    std::iter::once(first.to_string()).chain(QUANTILES.iter().map(|p| format!("q{p}"))).collect()
}

pub fn write_ape_table<W: Write>(w: W, table: &ApeTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(quantile_header("quality"))?;
    for (k, row) in table.table.iter().enumerate() {
        out.write_record(
            std::iter::once(format!("{:.1}", endpoint_quality(k))).chain(row.iter().map(|v| v.to_string())),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(w: W, metrics: &RunMetrics) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "value"])?;
    for (name, value) in metrics.rows() {
        out.write_record([name, value.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pending<W: Write>(w: W, series: &[(Time, usize)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "pending"])?;
    for (t, n) in series {
        out.write_record([t.to_string(), n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CompletionRow {
    completion: Time,
    task_id: usize,
    normalized_lateness: f64,
    achieved_quality: f64,
}

/// Lateness and quality against completion time, ordered by completion.
pub fn write_completions<W: Write>(w: W, records: &[TaskRecord]) -> Result<()> {
    let mut rows: Vec<CompletionRow> = records
        .iter()
        .map(|r| CompletionRow {
            completion: r.completion,
            task_id: r.task_id,
            normalized_lateness: r.normalized_lateness,
            achieved_quality: r.achieved_quality,
        })
        .collect();
    rows.sort_by_key(|r| (r.completion, r.task_id));
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{train, Method};
    use crate::model::{avg_normalized_lateness, fixtures};
    use proptest::prelude::*;

    fn record(id: usize, arrival: Time, completion: Time, response: Time, quality: f64) -> TaskRecord {
        TaskRecord {
            task_id: id,
            arrival,
            start: arrival,
            completion,
            resource_id: 0,
            requested_response: response,
            achieved_quality: quality,
            normalized_lateness: (completion - arrival - response) as f64 / response as f64,
            final_requested_quality: quality,
        }
    }

    #[test]
    fn three_task_realized_lateness() {
        let (tasks, resources, solution) = fixtures::three_tasks();
        let records: Vec<TaskRecord> = tasks
            .iter()
            .map(|t| {
                let j = solution.resource_of[t.id].unwrap();
                let s = solution.start_of[t.id].unwrap();
                let c = crate::model::completion_time(t, &resources[j], s, &solution.quality_of[t.id]);
                record(t.id, t.arrival, c, t.requested_response, 1.0)
            })
            .collect();
        let m = summarize(&records).unwrap();
        assert!((m.avg_normalized_lateness + 0.1296).abs() < 1e-4);
        let direct = avg_normalized_lateness(&solution, &tasks, &resources).unwrap();
        assert!((m.avg_normalized_lateness - direct).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_quantiles() {
        let records: Vec<_> = (0..5).map(|i| record(i, 0, 150, 100, 0.7)).collect();
        let m = summarize(&records).unwrap();
        assert!(m.lateness_quantiles.iter().all(|&q| q == 0.5));
        assert!(m.quality_quantiles.iter().all(|&q| q == 0.7));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn quantile_interpolates_between_ranks() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 1.0), 4.0);
    }

    #[test]
    fn pending_counts() {
        let records = vec![record(0, 0, 10, 5, 1.0), record(1, 5, 20, 5, 1.0), record(2, 10, 12, 5, 1.0)];
        assert_eq!(pending_series(&records), vec![(0, 1), (5, 2), (10, 2), (12, 1), (20, 0)]);
    }

    #[test]
    fn ape_table_of_a_memorizing_model_is_zero() {
        let data: Vec<TrainingObservation> = (1..20)
            .map(|i| TrainingObservation {
                features: vec![i as f64, (i % 3) as f64],
                params: std::array::from_fn(|k| (i * 10 * (k + 1)) as f64),
            })
            .collect();
        let m = train(&data, Method::Knn { k: 1 }).unwrap();
        let t = estimation_report(&m, &data, EstimationMode::Full, 1.0).unwrap();
        assert!(t.table.iter().flatten().all(|&v| v == 0.0));
        let mut buf = Vec::new();
        write_ape_table(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quality,q0.05,q0.25,q0.5,q0.75,q0.95,q1\n0.1,0,"));
    }

    #[test]
    fn metrics_csv_is_stable() {
        let records: Vec<_> = (0..7).map(|i| record(i, i as Time, 40 + i as Time, 30, 0.5)).collect();
        let m = summarize(&records).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_metrics(&mut a, &m).unwrap();
        write_metrics(&mut b, &summarize(&records).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("metric,value\ntasks,7\n"));
    }

    /// Order statistic by brute force: smallest value with at least
    /// `ceil(p (n - 1)) + 1` elements at or below it, and the one below.
    fn oracle(values: &[f64], p: f64) -> f64 {
        let n = values.len();
        let rank_of = |x: f64| values.iter().filter(|&&v| v < x).count();
        let h = (n - 1) as f64 * p;
        let pick = |r: usize| {
            *values.iter().find(|&&x| rank_of(x) <= r && values.iter().filter(|&&v| v <= x).count() > r).unwrap()
        };
        let (lo, hi) = (pick(h.floor() as usize), pick(h.ceil() as usize));
        lo + (h - h.floor()) * (hi - lo)
    }

    proptest! {
        #[test]
        fn quantiles_match_order_statistics(values in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
            let q = quantiles(&values);
            for (i, &p) in QUANTILES.iter().enumerate() {
                prop_assert!((q[i] - oracle(&values, p)).abs() < 1e-9);
            }
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
