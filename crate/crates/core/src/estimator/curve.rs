//! Objective curves and their reduction to ten processing-time parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{endpoint_quality, ENDPOINTS};

/// Relative slope below which the tail of a curve is cut.
pub const TAIL_THRESHOLD: f64 = 0.05;

/// Best objective value found over time, `(time_ms, value)` pairs with both
/// coordinates strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ObjectiveCurve {
    points: Vec<(f64, f64)>,
}

impl ObjectiveCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("objective curve"));
        }
        if points.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite() || t < 0.0) {
            return Err(Error::Parse("objective curve points must be finite with non-negative times".into()));
        }
        if let Some(k) = points.windows(2).position(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) {
            return Err(Error::Parse(format!(
                "objective curve must be strictly increasing in time and value (points {} and {})",
                k,
                k + 1
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The part of the curve recorded up to `time` (inclusive), if any.
    pub fn truncated(&self, time: f64) -> Option<Self> {
        let n = self.points.partition_point(|&(t, _)| t <= time);
        (n > 0).then(|| Self { points: self.points[..n].to_vec() })
    }

    /// Times divided by `speed`: what a resource of that speed records.
    pub fn on_resource(&self, speed: f64) -> Self {
        Self { points: self.points.iter().map(|&(t, v)| (t / speed, v)).collect() }
    }
}

impl TryFrom<Vec<(f64, f64)>> for ObjectiveCurve {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ObjectiveCurve> for Vec<(f64, f64)> {
    fn from(c: ObjectiveCurve) -> Self {
        c.points
    }
}

/// Rescales recorded times to normalized processing time and drops points
/// past the normalized worst case processing time.
pub fn ingest_curve(curve: &ObjectiveCurve, speed: f64, wct: u64) -> Result<ObjectiveCurve> {
    let points: Vec<(f64, f64)> =
        curve.points.iter().map(|&(t, v)| (t * speed, v)).take_while(|&(t, _)| t <= wct as f64).collect();
    if points.is_empty() {
        return Err(Error::Discarded(format!("every point lies beyond the worst case time {wct} ms")));
    }
    Ok(ObjectiveCurve { points })
}

/// Cuts the flat tail: keeps the prefix through the end of the last segment
/// whose slope exceeds `TAIL_THRESHOLD` times the steepest slope. Returns the
/// kept curve and the number of kept points.
pub fn trim_tail(curve: &ObjectiveCurve) -> (ObjectiveCurve, usize) {
    let p = &curve.points;
    if p.len() < 2 {
        return (curve.clone(), p.len());
    }
    let slopes: Vec<f64> = p.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = TAIL_THRESHOLD * max;
    // the steepest segment is always above the threshold since max > 0
    let last = slopes.iter().rposition(|&s| s > threshold).unwrap_or(slopes.len() - 1);
    let kept = last + 2;
    (ObjectiveCurve { points: p[..kept].to_vec() }, kept)
}

/// Samples the min-max normalized curve at qualities 0.1, ..., 1.0. Ties
/// after sampling are pushed apart by 1 ms.
pub fn approximate(curve: &ObjectiveCurve) -> Result<[f64; ENDPOINTS]> {
    let p = &curve.points;
    if p.len() < 2 {
        return Err(Error::Discarded("a single point carries no quality progression".into()));
    }
    let (lo, hi) = (p[0].1, p[p.len() - 1].1);
    if hi <= lo {
        return Err(Error::Discarded("flat objective curve".into()));
    }
    let rho: Vec<f64> = p.iter().map(|&(_, v)| (v - lo) / (hi - lo)).collect();
    let mut psi = [0.0; ENDPOINTS];
    for (k, slot) in psi.iter_mut().enumerate() {
        let q = endpoint_quality(k);
        // first point whose normalized value reaches q; the last one always does
        let j = rho.iter().position(|&r| r >= q - 1e-12).unwrap_or(p.len() - 1);
        *slot = if j == 0 || rho[j] <= q {
            p[j].0
        } else {
            let (t0, t1) = (p[j - 1].0, p[j].0);
            t0 + (q - rho[j - 1]) / (rho[j] - rho[j - 1]) * (t1 - t0)
        };
    }
    for k in 1..ENDPOINTS {
        if psi[k] <= psi[k - 1] {
            psi[k] = psi[k - 1] + 1.0;
        }
    }
    Ok(psi)
}

/// The full reduction of one run: ingest, cut the tail, approximate.
pub fn curve_params(curve: &ObjectiveCurve, speed: f64, wct: u64) -> Result<[f64; ENDPOINTS]> {
    let normalized = ingest_curve(curve, speed, wct)?;
    let (trimmed, _) = trim_tail(&normalized);
    approximate(&trimmed)
}

/// Curve that is exactly the piecewise-linear function through the origin
/// and `(psi_k, 0.1 (k + 1))`, valued in `[0, 1]`.
pub fn curve_through(psi: &[f64; ENDPOINTS]) -> ObjectiveCurve {
    let mut points = vec![(0.0, 0.0)];
    points.extend(psi.iter().enumerate().map(|(k, &t)| (t, endpoint_quality(k))));
    ObjectiveCurve { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[(f64, f64)]) -> ObjectiveCurve {
        ObjectiveCurve::new(points.to_vec()).unwrap()
    }

    #[test]
    fn ingest_examples() {
        let c = curve(&[(10.0, 1.0), (20.0, 2.0), (30.0, 3.0)]);
        let times: Vec<f64> = ingest_curve(&c, 2.0, 50).unwrap().points().iter().map(|p| p.0).collect();
        assert_eq!(times, vec![20.0, 40.0]);
        assert_eq!(ingest_curve(&c, 1.0, 50).unwrap(), c);
        assert!(matches!(ingest_curve(&c, 1.0, 5), Err(Error::Discarded(_))));
    }

    #[test]
    fn trim_examples() {
        let (t, k) = trim_tail(&curve(&[(0.0, 0.0), (1.0, 10.0), (2.0, 11.0), (3.0, 11.1)]));
        assert_eq!(t.points(), &[(0.0, 0.0), (1.0, 10.0), (2.0, 11.0)]);
        assert_eq!(k, 3);

        let line = curve(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 5.0)]);
        assert_eq!(trim_tail(&line), (line.clone(), 4));
        let two = curve(&[(0.0, 0.0), (9.0, 0.1)]);
        assert_eq!(trim_tail(&two).1, 2);
        let one = curve(&[(3.0, 1.0)]);
        assert_eq!(trim_tail(&one), (one.clone(), 1));
    }

    #[test]
    fn trim_keeps_a_late_recovery() {
        // slopes 10, 0.1, 5: the flat middle stays because a steep one follows
        let c = curve(&[(0.0, 0.0), (1.0, 10.0), (2.0, 10.1), (3.0, 15.1), (4.0, 15.2)]);
        assert_eq!(trim_tail(&c).1, 4);
    }

    #[test]
    fn approximate_examples() {
        let psi = approximate(&curve(&[(0.0, 0.0), (100.0, 1.0)])).unwrap();
        for (k, p) in psi.iter().enumerate() {
            assert!((p - 10.0 * (k + 1) as f64).abs() < 1e-9);
        }

        let psi = approximate(&curve(&[(0.0, 0.0), (50.0, 0.9), (100.0, 1.0)])).unwrap();
        assert!((psi[8] - 50.0).abs() < 1e-9);
        assert!((psi[9] - 100.0).abs() < 1e-9);
        for (k, &p) in psi.iter().enumerate().take(8) {
            let expect = 50.0 * (k + 1) as f64 / 9.0;
            assert!((p - expect).abs() < 1e-9, "{k}: {p}");
        }
        assert!((psi[0] - 5.6).abs() < 0.05 && (psi[7] - 44.4).abs() < 0.05);
    }

    #[test]
    fn approximate_nudges_steps_and_rejects_flat() {
        // one jump from 0 to 1 at t = 5: every endpoint samples the same time
        let psi = approximate(&curve(&[(0.0, 0.0), (5.0, 1.0)])).unwrap();
        assert!(psi.windows(2).all(|w| w[1] > w[0]));
        let step = approximate(&curve(&[(0.0, 0.0), (5.0, 0.95), (6.0, 1.0)])).unwrap();
        assert!(step.windows(2).all(|w| w[1] >= w[0] + 1.0 - 1e-9 || w[1] > w[0]));
        assert!(matches!(approximate(&curve(&[(1.0, 2.0)])), Err(Error::Discarded(_))));
    }

    #[test]
    fn curve_validation_and_truncation() {
        assert!(ObjectiveCurve::new(vec![]).is_err());
        assert!(ObjectiveCurve::new(vec![(0.0, 1.0), (1.0, 1.0)]).is_err());
        assert!(ObjectiveCurve::new(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
        let c = curve(&[(0.0, 0.0), (10.0, 1.0), (20.0, 2.0)]);
        assert_eq!(c.truncated(10.0).unwrap().len(), 2);
        assert!(curve(&[(5.0, 0.0)]).truncated(4.0).is_none());
        assert_eq!(c.on_resource(2.0).points()[2], (10.0, 2.0));
    }

    fn arb_psi() -> impl Strategy<Value = [f64; ENDPOINTS]> {
        proptest::collection::vec(1u64..500, ENDPOINTS).prop_map(|steps| {
            let mut acc = 0.0;
            std::array::from_fn(|k| {
                acc += steps[k] as f64;
                acc
            })
        })
    }

    proptest! {
        #[test]
        fn pipeline_recovers_exact_curves(psi in arb_psi()) {
            // linear segments whose slopes differ by at most 500x may still be
            // cut as a flat tail; only assert when no segment is that flat
            let c = curve_through(&psi);
            let (trimmed, _) = trim_tail(&c);
            prop_assume!(trimmed.len() == c.len());
            let got = approximate(&trimmed).unwrap();
            for k in 0..ENDPOINTS {
                prop_assert!((got[k] - psi[k]).abs() <= 1.0);
            }
        }

        #[test]
        fn trim_output_is_a_prefix_containing_the_steepest_segment(
            steps in proptest::collection::vec((0.1f64..50.0, 0.01f64..50.0), 1..30)
        ) {
            let mut points = vec![(0.0, 0.0)];
            for (dt, dv) in steps {
                let (t, v) = *points.last().unwrap();
                points.push((t + dt, v + dv));
            }
            let c = curve(&points);
            let (trimmed, kept) = trim_tail(&c);
            prop_assert_eq!(trimmed.len(), kept);
            prop_assert_eq!(trimmed.points(), &c.points()[..kept]);
            let slopes: Vec<f64> = c.points().windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
            let steepest = slopes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            prop_assert!(kept >= steepest + 2);
        }
    }
}
