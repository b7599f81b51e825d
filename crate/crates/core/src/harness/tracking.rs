use super::{ExperimentKind, ExperimentResult, Log};
use crate::control::Commands;
use crate::dynamics::encoder_read;
use crate::error::{Error, Result};
use crate::model::TwinConfig;
use crate::sim::Twin;

/// Alternating ramps between `±amplitude`: ramp up from zero, hold, ramp
/// down through zero to `-amplitude`, hold, and so on. Joint `i` (0-based)
/// starts `i·phase_s` later and rests at zero until then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSuite {
    /// rad
    pub amplitude: f64,
    /// rad/s
    pub rate: f64,
    pub hold_s: f64,
    pub duration_s: f64,
    pub phase_s: f64,
}

impl Default for RampSuite {
    /// ±15° at 5°/s with 5 s holds over 120 s, 2 s phase shift per joint.
    fn default() -> Self {
        Self {
            amplitude: 15f64.to_radians(),
            rate: 5f64.to_radians(),
            hold_s: 5.0,
            duration_s: 120.0,
            phase_s: 2.0,
        }
    }
}

impl RampSuite {
    fn eval_joint(&self, joint: usize, t: f64) -> f64 {
        let mut local = t - joint as f64 * self.phase_s;
        if local <= 0.0 {
            return 0.0;
        }
        let a = self.amplitude;
        let (mut from, mut to) = (0.0, a);
        loop {
            let ramp = (to - from).abs() / self.rate;
            if local < ramp {
                return from + (to - from) * (local / ramp);
            }
            local -= ramp;
            if local < self.hold_s {
                return to;
            }
            local -= self.hold_s;
            (from, to) = (to, -to);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Ramps(RampSuite),
    /// Fixed set points held for `duration_s`.
    Constant { q: Vec<f64>, duration_s: f64 },
    /// Per joint `(t, q)` knots, linearly interpolated and held beyond the
    /// ends.
    Waypoints {
        knots: Vec<Vec<(f64, f64)>>,
        duration_s: f64,
    },
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match self {
            Trajectory::Ramps(r) => r.duration_s,
            Trajectory::Constant { duration_s, .. } | Trajectory::Waypoints { duration_s, .. } => *duration_s,
        }
    }

    pub fn eval(&self, t: f64, n: usize, out: &mut [f64]) {
        for (i, q) in out.iter_mut().enumerate().take(n) {
            *q = match self {
                Trajectory::Ramps(r) => r.eval_joint(i, t),
                Trajectory::Constant { q, .. } => q[i],
                Trajectory::Waypoints { knots, .. } => interpolate(&knots[i], t),
            };
        }
    }

    /// Largest set-point magnitude of joint `i`.
    fn peak(&self, i: usize) -> f64 {
        match self {
            Trajectory::Ramps(r) => r.amplitude.abs(),
            Trajectory::Constant { q, .. } => q[i].abs(),
            Trajectory::Waypoints { knots, .. } => knots[i].iter().fold(0.0, |m, k| m.max(k.1.abs())),
        }
    }

    fn joints(&self) -> Option<usize> {
        match self {
            Trajectory::Ramps(_) => None,
            Trajectory::Constant { q, .. } => Some(q.len()),
            Trajectory::Waypoints { knots, .. } => Some(knots.len()),
        }
    }

    /// Rejects trajectories that do not fit the chain or leave `±q_max`.
    pub fn check(&self, config: &TwinConfig) -> Result<()> {
        let n = config.robot.n();
        if let Some(m) = self.joints() {
            if m != n {
                return Err(Error::config(format!("trajectory has {m} joints, chain has {n}")));
            }
        }
        if let Trajectory::Waypoints { knots, .. } = self {
            if knots.iter().any(|k| k.is_empty() || k.windows(2).any(|w| w[1].0 <= w[0].0)) {
                return Err(Error::config("waypoint times must be strictly increasing"));
            }
        }
        for (i, a) in config.robot.actuators.iter().enumerate() {
            let peak = self.peak(i);
            if peak > a.q_max {
                return Err(Error::config(format!(
                    "trajectory reaches {:.2} deg on joint {}, beyond q_max = {:.2} deg",
                    peak.to_degrees(),
                    i + 1,
                    a.q_max.to_degrees()
                )));
            }
        }
        if !(self.duration() >= 0.0) {
            return Err(Error::config("trajectory duration must be >= 0"));
        }
        Ok(())
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    if t <= first.0 {
        return first.1;
    }
    for w in knots.windows(2) {
        let ((t0, q0), (t1, q1)) = (w[0], w[1]);
        if t <= t1 {
            return q0 + (q1 - q0) * (t - t0) / (t1 - t0);
        }
    }
    knots[knots.len() - 1].1
}

/// Root-mean-square difference of two equally long series.
pub fn rmse_deg(desired: &[f64], measured: &[f64]) -> f64 {
    let n = desired.len().min(measured.len());
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = desired.iter().zip(measured).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq / n as f64).sqrt()
}

/// Closed-loop trajectory tracking with the chain's own control
/// architecture.
///
/// Logs one row per control cycle (including t = 0) with the encoder
/// reading, the set point, all bellows pressures, the line pressure and the
/// valve commands. RMSE is computed over every logged row.
pub fn run_tracking(config: &TwinConfig, trajectory: &Trajectory) -> Result<ExperimentResult> {
    trajectory.check(config)?;
    let mut twin = Twin::new(config.clone())?;
    let n = twin.n();
    let steps = (trajectory.duration() / twin.dt()).round() as u64;

    let modular = matches!(twin.config.robot.variant(), crate::model::Variant::Modular);
    let mut names = vec!["t_s".to_string()];
    names.extend((1..=n).map(|i| format!("q{i}_deg")));
    names.extend((1..=n).map(|i| format!("qd{i}_deg")));
    names.extend((1..=n).flat_map(|i| [format!("p{i}1_bar"), format!("p{i}2_bar")]));
    names.push("ps_bar".into());
    if modular {
        names.extend((1..=n).flat_map(|i| [format!("u{i}1"), format!("u{i}2")]));
    } else {
        names.extend((1..=n).flat_map(|i| [format!("pd{i}1_bar"), format!("pd{i}2_bar")]));
    }
    let mut log = Log::new(names);

    let mut q_d = vec![0.0; n];
    let mut row = Vec::with_capacity(log.names.len());
    let mut sq_err = vec![0.0; n];
    for _ in 0..=steps {
        trajectory.eval(twin.state.t, n, &mut q_d);
        let t = twin.state.t;
        let measured: Vec<f64> = twin.state.q.iter().map(|&q| encoder_read(q).to_degrees()).collect();
        let (p, p_s) = (twin.state.p.clone(), twin.state.p_s);
        let cmds = twin.step(&q_d)?;

        row.clear();
        row.push(t);
        row.extend(&measured);
        row.extend(q_d.iter().map(|q| q.to_degrees()));
        for i in 0..n {
            let e = q_d[i].to_degrees() - measured[i];
            sq_err[i] += e * e;
        }
        row.extend(&p);
        row.push(p_s);
        match cmds {
            Commands::Valves { u, .. } => row.extend(u.iter().map(|&x| x as f64)),
            Commands::Pressures(p) => row.extend(p),
        }
        log.push_row(&row);
    }

    let rows = log.len() as f64;
    let rmse: Vec<f64> = sq_err.iter().map(|s| (s / rows).sqrt()).collect();
    let mean = rmse.iter().sum::<f64>() / n as f64;

    let mut r = ExperimentResult::new(ExperimentKind::Tracking, log);
    for (i, e) in rmse.iter().enumerate() {
        r.set(&format!("rmse_joint{}_deg", i + 1), *e);
    }
    r.set("mean_rmse_deg", mean);
    r.set("max_rmse_deg", rmse.iter().fold(0.0, |m: f64, e| m.max(*e)));
    let switches: u64 = twin.state.switch_count.iter().sum();
    if modular {
        r.set("valve_transitions", switches as f64);
    }
    r.note("variant", crate::config::variant_name(twin.config.robot.variant()));
    if let Trajectory::Ramps(_) = trajectory {
        r.note("profile", "stand-in ramp suite, not the measured profile");
    }
    Ok(r)
}
