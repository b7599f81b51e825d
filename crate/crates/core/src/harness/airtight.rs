use super::{ExperimentKind, ExperimentResult, Log};
use crate::error::Result;
use crate::model::TwinConfig;
use crate::sim::Twin;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaircaseStep {
    /// Desired supply pressure, bar.
    pub p_sd: f64,
    /// Evaluated hold after the settling window, s.
    pub hold_s: f64,
}

/// Supply set-point profile. Each step is commanded for `settle_s` before
/// its hold window starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Staircase {
    pub steps: Vec<StaircaseStep>,
    pub settle_s: f64,
}

impl Staircase {
    /// Steps of `increment` bar up to `top`, each held for `hold_s`.
    pub fn uniform(increment: f64, top: f64, hold_s: f64, settle_s: f64) -> Self {
        let count = (top / increment).round() as usize;
        let steps = (1..=count)
            .map(|k| StaircaseStep {
                p_sd: (k as f64 * increment).min(top),
                hold_s,
            })
            .collect();
        Self { steps, settle_s }
    }

    /// 0.25 bar steps up to 1.5 bar, 5 s settling plus 20 s hold each. Only
    /// a stand-in for the measured profile.
    pub fn stand_in() -> Self {
        Self::uniform(0.25, 1.5, 20.0, 5.0)
    }

    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| self.settle_s + s.hold_s).sum()
    }
}

/// Leak test of the supply line with every valve closed.
///
/// Starts from a vented line, walks the staircase and reports the final line
/// pressure and the largest set-point deviation inside the hold windows.
pub fn run_airtightness(config: &TwinConfig, staircase: &Staircase) -> Result<ExperimentResult> {
    let n2 = 2 * config.robot.n();
    let mut twin = Twin::with_pressures(config.clone(), vec![0.0; n2], 0.0)?;
    let closed = twin.all_closed();
    let dt = twin.dt();
    let initial = twin.state.p_s;

    let mut log = Log::new(vec!["t_s".into(), "ps_d_bar".into(), "ps_bar".into()]);
    log.push_row(&[0.0, 0.0, initial]);

    let mut max_dev: f64 = 0.0;
    let mut final_dev: f64 = 0.0;
    let mut max_ps = initial;
    for step in &staircase.steps {
        twin.p_source_d = step.p_sd;
        let settle = (staircase.settle_s / dt).round() as u64;
        let hold = (step.hold_s / dt).round() as u64;
        let mut dev: f64 = 0.0;
        for k in 0..settle + hold {
            twin.step_open_loop(&closed)?;
            let p_s = twin.state.p_s;
            max_ps = max_ps.max(p_s);
            if k >= settle {
                dev = dev.max((p_s - step.p_sd).abs());
            }
            log.push_row(&[twin.state.t, step.p_sd, p_s]);
        }
        max_dev = max_dev.max(dev);
        final_dev = dev;
    }

    let mut r = ExperimentResult::new(ExperimentKind::Airtightness, log);
    r.set("final_ps_bar", twin.state.p_s);
    r.set("final_ps_d_bar", staircase.steps.last().map_or(0.0, |s| s.p_sd));
    r.set("final_hold_max_dev_bar", final_dev);
    r.set("max_hold_dev_bar", max_dev);
    r.set("max_ps_bar", max_ps);
    if let Some(p) = config.robot.supply.leak_plateau() {
        r.set("leak_plateau_bar", p);
    }
    r.note("profile", "stand-in staircase, not the measured profile");
    Ok(r)
}
