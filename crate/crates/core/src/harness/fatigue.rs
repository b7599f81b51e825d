use std::fmt;

use super::{ExperimentKind, ExperimentResult, Log};
use crate::config::kind_name;
use crate::error::{Error, Result};
use crate::model::{BellowsSpec, ValveSpec};
use crate::pneumatics::{binary_valve_flow, bellows_pressure_step};

/// Load protocol of the long-term test: full working pressure, then vent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueProtocol {
    pub pressurize_s: u64,
    pub vent_s: u64,
    /// Pressure trace of this many cycles, `None` for pure accounting.
    pub trace_cycles: Option<u64>,
}

impl Default for FatigueProtocol {
    fn default() -> Self {
        Self {
            pressurize_s: 10,
            vent_s: 10,
            trace_cycles: None,
        }
    }
}

impl FatigueProtocol {
    pub fn cycle_s(&self) -> u64 {
        self.pressurize_s + self.vent_s
    }
}

/// Whole-second duration split into hours, minutes and seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lifetime {
    pub total_s: u64,
}

impl Lifetime {
    pub fn hours(&self) -> u64 {
        self.total_s / 3600
    }

    pub fn minutes(&self) -> u64 {
        self.total_s % 3600 / 60
    }

    pub fn seconds(&self) -> u64 {
        self.total_s % 60
    }
}

impl fmt::Display for Lifetime {
    /// `72 h 36 min`, `175 h 0 min`, `7 min 54 s`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, m, s) = (self.hours(), self.minutes(), self.seconds());
        if h > 0 {
            write!(f, "{h} h {m} min")?;
            if s > 0 {
                write!(f, " {s} s")?;
            }
            Ok(())
        } else {
            write!(f, "{m} min {s} s")
        }
    }
}

/// Cycle accounting of a bellows lifetime test.
///
/// Lifetime is `cycles · cycle length + partial`, where `partial` is the time
/// into the cycle during which the bellows tore (zero for cast bellows that
/// failed at a cycle boundary or were still intact).
pub fn run_fatigue(bellows: &BellowsSpec, protocol: &FatigueProtocol) -> Result<ExperimentResult> {
    if protocol.pressurize_s == 0 || protocol.vent_s == 0 {
        return Err(Error::config("pressurize and vent durations must be positive"));
    }
    let life = bellows.fatigue;
    let partial = life.partial_s.round() as u64;
    if partial >= protocol.cycle_s() {
        return Err(Error::config(format!(
            "failure offset {partial} s does not fit a {} s cycle",
            protocol.cycle_s()
        )));
    }
    let lifetime = Lifetime {
        total_s: life.cycles * protocol.cycle_s() + partial,
    };

    let log = match protocol.trace_cycles {
        Some(k) => pressure_trace(bellows, protocol, k)?,
        None => Log::default(),
    };
    let mut r = ExperimentResult::new(ExperimentKind::Fatigue, log);
    r.set("cycles_to_failure", life.cycles as f64);
    r.set("lifetime_s", lifetime.total_s as f64);
    r.set("lifetime_h", lifetime.total_s as f64 / 3600.0);
    r.set("hours", lifetime.hours() as f64);
    r.set("minutes", lifetime.minutes() as f64);
    r.set("seconds", lifetime.seconds() as f64);
    r.set("p_max_bar", bellows.p_max);
    r.set("runout", if life.runout { 1.0 } else { 0.0 });
    r.note("bellows_kind", kind_name(bellows.kind));
    r.note("lifetime", lifetime.to_string());
    r.note(
        "status",
        if life.runout {
            "still usable when the test stopped"
        } else {
            "failed"
        },
    );
    Ok(r)
}

/// Pressure of one bellows driven by a default microvalve from a line held
/// at `p_max`, sampled every 10 ms.
fn pressure_trace(bellows: &BellowsSpec, protocol: &FatigueProtocol, cycles: u64) -> Result<Log> {
    let ValveSpec::Binary { conductance, .. } = ValveSpec::default_binary() else {
        unreachable!("default microvalve is binary")
    };
    let dt = 0.001;
    let per_cycle = protocol.cycle_s() * 1000;
    let on = protocol.pressurize_s * 1000;
    let mut log = Log::new(vec!["t_s".into(), "cycle".into(), "u".into(), "p_bar".into()]);
    let mut p = 0.0;
    for k in 0..cycles * per_cycle {
        let u = u8::from(k % per_cycle < on);
        if k % 10 == 0 {
            log.push_row(&[k as f64 * dt, (k / per_cycle) as f64, u as f64, p]);
        }
        let (qi, qv) = binary_valve_flow(u, bellows.p_max, p, conductance)?;
        p = bellows_pressure_step(p, qi - qv, bellows.volume, dt);
    }
    Ok(log)
}

/// Operating hours until a microvalve reaches `cycles` switching cycles,
/// assuming one cycle per PWM period.
pub fn valve_wear_hours(cycles: f64, f_pwm: f64) -> f64 {
    cycles / (f_pwm * 3600.0)
}
