//! Per-endpoint regression from instance features to processing-time
//! parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PiecewiseLinearPTF, ENDPOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingObservation {
    pub features: Vec<f64>,
    /// Normalized processing times at qualities 0.1, ..., 1.0.
    pub params: [f64; ENDPOINTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-feature mean and sample standard deviation. With a single row every
/// deviation is 0 and features pass through unscaled.
pub fn fit_zscore(rows: &[Vec<f64>]) -> Result<ZScore> {
    let first = rows.first().ok_or(Error::Empty("training features"))?;
    let d = first.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std = (0..d)
        .map(|j| {
            if rows.len() < 2 {
                return 0.0;
            }
            let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(ZScore { mean, std })
}

pub fn apply_zscore(norm: &ZScore, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != norm.mean.len() {
        return Err(Error::DimensionMismatch { expected: norm.mean.len(), got: x.len() });
    }
    Ok(x.iter()
        .zip(norm.mean.iter().zip(&norm.std))
        .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { v })
        .collect())
}

/// Regression method, written as `knn`, `knn:<k>`, `tree` or
/// `tree:<min_branch>:<min_leaf>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Knn { k: usize },
    Tree { min_branch: usize, min_leaf: usize },
}

impl Method {
    pub const fn knn() -> Self {
        Method::Knn { k: 7 }
    }

    pub const fn tree() -> Self {
        Method::Tree { min_branch: 10, min_leaf: 1 }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown regression method `{name}`"));
        let mut parts = name.split(':');
        let num = |p: Option<&str>, default: usize| -> Result<usize> {
            p.map_or(Ok(default), |s| s.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad))
        };
        let method = match parts.next() {
            Some("knn") => Method::Knn { k: num(parts.next(), 7)? },
            Some("tree") => Method::Tree { min_branch: num(parts.next(), 10)?, min_leaf: num(parts.next(), 1)? },
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(method)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Knn { k } => write!(f, "knn:{k}"),
            Method::Tree { min_branch, min_leaf } => write!(f, "tree:{min_branch}:{min_leaf}"),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Knn {
    k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<[f64; ENDPOINTS]>,
}

impl Knn {
    fn predict(&self, q: &[f64]) -> [f64; ENDPOINTS] {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, x)| (x.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out = [0.0; ENDPOINTS];
        for &(_, i) in &dist[..k] {
            for (o, y) in out.iter_mut().zip(&self.y[i]) {
                *o += y;
            }
        }
        out.map(|s| s / k as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Regression tree grown by least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn fit(x: &[Vec<f64>], y: &[f64], min_branch: usize, min_leaf: usize) -> Self {
        let mut tree = Tree { nodes: Vec::new() };
        let mut idx: Vec<usize> = (0..y.len()).collect();
        tree.grow(x, y, &mut idx, min_branch, min_leaf.max(1));
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: &mut [usize], min_branch: usize, min_leaf: usize) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        if n < min_branch || n < 2 * min_leaf {
            return id;
        }
        let parent_sse: f64 = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let dim = x[idx[0]].len();
        #[allow(clippy::needless_range_loop)]
        for f in 0..dim {
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            let total: f64 = idx.iter().map(|&i| y[i]).sum();
            let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
            let (mut sum, mut sq) = (0.0, 0.0);
            for split in 1..n {
                let yi = y[idx[split - 1]];
                sum += yi;
                sq += yi * yi;
                let (lo, hi) = (x[idx[split - 1]][f], x[idx[split]][f]);
                if split < min_leaf || n - split < min_leaf || lo == hi {
                    continue;
                }
                let (nl, nr) = (split as f64, (n - split) as f64);
                let sse = (sq - sum * sum / nl) + ((total_sq - sq) - (total - sum).powi(2) / nr);
                if best.is_none_or(|b| sse < b.0) {
                    best = Some((sse, f, (lo + hi) / 2.0));
                }
            }
        }
        let Some((sse, feature, threshold)) = best else { return id };
        if sse >= parent_sse - 1e-12 * parent_sse.max(1.0) {
            return id;
        }
        let cut = partition(idx, |i| x[i][feature] <= threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(x, y, l, min_branch, min_leaf);
        let right = self.grow(x, y, r, min_branch, min_leaf);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn predict(&self, q: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if q[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    #[cfg(test)]
    fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let cut = yes.len();
    for (slot, v) in idx.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    cut
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Submodels {
    Knn(Knn),
    Tree(Vec<Tree>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    method: Method,
    normalization: ZScore,
    submodels: Submodels,
}

impl RegressionModel {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn normalization(&self) -> &ZScore {
        &self.normalization
    }

    pub fn dim(&self) -> usize {
        self.normalization.mean.len()
    }

    /// Raw per-endpoint predictions, before any monotone correction.
    pub fn predict(&self, features: &[f64]) -> Result<[f64; ENDPOINTS]> {
        let q = apply_zscore(&self.normalization, features)?;
        Ok(match &self.submodels {
            Submodels::Knn(knn) => knn.predict(&q),
            Submodels::Tree(trees) => std::array::from_fn(|k| trees[k].predict(&q)),
        })
    }

    /// Prediction of the quality-1 endpoint only.
    pub fn predict_max(&self, features: &[f64]) -> Result<f64> {
        let q = apply_zscore(&self.normalization, features)?;
        Ok(match &self.submodels {
            Submodels::Knn(knn) => knn.predict(&q)[ENDPOINTS - 1],
            Submodels::Tree(trees) => trees[ENDPOINTS - 1].predict(&q),
        })
    }
}

pub fn train(observations: &[TrainingObservation], method: Method) -> Result<RegressionModel> {
    let need = match method {
        Method::Knn { k } => k.max(1),
        Method::Tree { .. } => 1,
    };
    if observations.len() < need {
        return Err(Error::TooFewObservations { have: observations.len(), need });
    }
    let raw: Vec<Vec<f64>> = observations.iter().map(|o| o.features.clone()).collect();
    let normalization = fit_zscore(&raw)?;
    let x = raw.iter().map(|r| apply_zscore(&normalization, r)).collect::<Result<Vec<_>>>()?;
    let submodels = match method {
        Method::Knn { k } => Submodels::Knn(Knn { k, x, y: observations.iter().map(|o| o.params).collect() }),
        Method::Tree { min_branch, min_leaf } => Submodels::Tree(
            (0..ENDPOINTS)
                .map(|k| {
                    let y: Vec<f64> = observations.iter().map(|o| o.params[k]).collect();
                    Tree::fit(&x, &y, min_branch, min_leaf)
                })
                .collect(),
        ),
    };
    Ok(RegressionModel { method, normalization, submodels })
}

/// Estimated processing time function of an unseen instance. Without a
/// model the function is linear up to the worst case time.
pub fn estimate(
    model: Option<&RegressionModel>,
    features: &[f64],
    wct: u64,
    floor_ms: f64,
) -> Result<PiecewiseLinearPTF> {
    match model {
        Some(m) => Ok(PiecewiseLinearPTF::from_estimates(&m.predict(features)?, floor_ms)),
        None => Ok(PiecewiseLinearPTF::linear(wct as f64, floor_ms)),
    }
}

/// Like [`estimate`], but only the maximum is predicted and the function is
/// linear from the origin to it.
pub fn linear_estimate(
    model: Option<&RegressionModel>,
    features: &[f64],
    wct: u64,
    floor_ms: f64,
) -> Result<PiecewiseLinearPTF> {
    match model {
        Some(m) => Ok(PiecewiseLinearPTF::linear(m.predict_max(features)?, floor_ms)),
        None => Ok(PiecewiseLinearPTF::linear(wct as f64, floor_ms)),
    }
}

/// Absolute percentage error of the estimate at quality `q`.
pub fn ape(truth: &PiecewiseLinearPTF, est: &PiecewiseLinearPTF, q: f64) -> f64 {
    let t = truth.at(q) as f64;
    (est.at(q) as f64 - t).abs() / t * 100.0
}
