//! Open-loop evaluation metrics over flattened trajectories.

use serde::Serialize;

use crate::bridge::Trajectory;
use crate::error::{Error, Result};
use crate::num::{lit, Real};

/// Mean squared error over all `2H` components.
pub fn mse<R: Real>(pred: &Trajectory<R>, gt: &Trajectory<R>) -> Result<R> {
    pred.check_shape(gt)?;
    let sum = pred
        .flat()
        .iter()
        .zip(gt.flat())
        .fold(R::zero(), |s, (&p, &g)| s + (p - g) * (p - g));
    Ok(sum / lit::<R>(pred.dim() as f64))
}

/// Cosine similarity of the flattened vectors; errors on an all-zero ground
/// truth, where the quantity is undefined.
pub fn cos_sim<R: Real>(pred: &Trajectory<R>, gt: &Trajectory<R>) -> Result<R> {
    pred.check_shape(gt)?;
    let gt_norm = gt.l2_norm();
    if gt_norm == R::zero() {
        return Err(Error::InvalidConfig(
            "cosine similarity undefined for all-zero ground truth".into(),
        ));
    }
    let pred_norm = pred.l2_norm();
    if pred_norm == R::zero() {
        return Err(Error::InvalidConfig(
            "cosine similarity undefined for all-zero prediction".into(),
        ));
    }
    let dot = pred
        .flat()
        .iter()
        .zip(gt.flat())
        .fold(R::zero(), |s, (&p, &g)| s + p * g);
    Ok(dot / (pred_norm * gt_norm))
}

/// Final displacement error: Euclidean distance between last waypoints.
pub fn fde<R: Real>(pred: &Trajectory<R>, gt: &Trajectory<R>) -> Result<R> {
    pred.check_shape(gt)?;
    let p = pred.last_waypoint();
    let g = gt.last_waypoint();
    let dx = p[0] - g[0];
    let dy = p[1] - g[1];
    Ok((dx * dx + dy * dy).sqrt())
}

/// Metrics for one generated trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub mse: f64,
    pub cos_sim: f64,
    pub fde: f64,
}

/// Aggregate evaluation over a set of (prediction, ground truth) pairs.
/// Aggregates are plain means over the per-sample records.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mse: f64,
    pub cos_sim: f64,
    pub fde: f64,
    pub nfe: usize,
    pub per_sample: Vec<SampleMetrics>,
}

impl EvalReport {
    pub fn from_pairs(pairs: &[(Trajectory, Trajectory)], nfe: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Dataset("evaluation set is empty".into()));
        }
        let mut per_sample = Vec::with_capacity(pairs.len());
        for (index, (pred, gt)) in pairs.iter().enumerate() {
            per_sample.push(SampleMetrics {
                index,
                mse: mse(pred, gt)?,
                cos_sim: cos_sim(pred, gt)?,
                fde: fde(pred, gt)?,
            });
        }
        let n = per_sample.len() as f64;
        Ok(Self {
            mse: per_sample.iter().map(|m| m.mse).sum::<f64>() / n,
            cos_sim: per_sample.iter().map(|m| m.cos_sim).sum::<f64>() / n,
            fde: per_sample.iter().map(|m| m.fde).sum::<f64>() / n,
            nfe,
            per_sample,
        })
    }
}
