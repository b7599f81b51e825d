#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{run_tracking, Trajectory};
use crate::config::with_override;
use crate::error::Result;
use crate::model::TwinConfig;

/// Tracking outcome for one value of the swept key.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub rmse_deg: Vec<f64>,
    pub mean_rmse_deg: f64,
    pub max_rmse_deg: f64,
}

fn run_one(base: &TwinConfig, key: &str, value: &str, trajectory: &Trajectory) -> Result<SweepRow> {
    let cfg = with_override(base, key, value)?;
    let r = run_tracking(&cfg, trajectory)?;
    let rmse_deg = (1..=cfg.robot.n())
        .map(|i| r.metric(&format!("rmse_joint{i}_deg")).unwrap_or(f64::NAN))
        .collect();
    Ok(SweepRow {
        value: value.to_string(),
        rmse_deg,
        mean_rmse_deg: r.metric("mean_rmse_deg").unwrap_or(f64::NAN),
        max_rmse_deg: r.metric("max_rmse_deg").unwrap_or(f64::NAN),
    })
}

/// One tracking run per value of `key`, in input order. Runs are
/// independent and use the rayon pool when the `parallel` feature is on.
pub fn sweep(base: &TwinConfig, key: &str, values: &[String], trajectory: &Trajectory) -> Result<Vec<SweepRow>> {
    #[cfg(feature = "parallel")]
    {
        values
            .par_iter()
            .map(|v| run_one(base, key, v, trajectory))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(base, key, values, trajectory)
    }
}

/// Same as [`sweep`] on the calling thread.
pub fn sweep_sequential(
    base: &TwinConfig,
    key: &str,
    values: &[String],
    trajectory: &Trajectory,
) -> Result<Vec<SweepRow>> {
    values.iter().map(|v| run_one(base, key, v, trajectory)).collect()
}
