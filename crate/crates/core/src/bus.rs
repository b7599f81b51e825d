//! Capacity of the daisy-chained I2C bus behind the EtherCAT gateway.
//!
//! The gateway is only modelled as a fixed cycle boundary at `f_s`; within
//! every cycle the controller polls the targets round-robin, one full
//! read+write transaction each.

use crate::model::Variant;

#[derive(Debug, Clone, PartialEq)]
pub struct BusConfig {
    /// bit/s, 400 kbit/s in I2C fast mode.
    pub bit_rate: u64,
    /// Bits per read+write transaction including address, R/W, ACK and
    /// framing overhead. 33 makes fast mode at 1 kHz carry exactly twelve
    /// targets.
    pub bits_per_target: u64,
    /// Controller sampling frequency, Hz.
    pub f_s: f64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            bit_rate: 400_000,
            bits_per_target: 33,
            f_s: 1000.0,
        }
    }
}

impl BusConfig {
    /// Duration of one target transaction, s.
    pub fn transaction_time(&self) -> f64 {
        self.bits_per_target as f64 / self.bit_rate as f64
    }
}

/// Targets that fit into one sampling cycle.
pub fn max_targets(cfg: &BusConfig) -> u64 {
    (cfg.bit_rate as f64 / (cfg.bits_per_target as f64 * cfg.f_s)).floor() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub max_targets: u64,
    /// Whether `n` targets fit at the requested sampling frequency.
    pub feasible: bool,
    /// Sampling frequency the schedule actually runs at, Hz. Equal to the
    /// requested one when feasible, otherwise the highest frequency that
    /// still fits all targets.
    pub f_s: f64,
    /// Time from cycle start until each target's transaction completes, s.
    pub data_age: Vec<f64>,
    /// Busy fraction of one cycle.
    pub utilization: f64,
}

/// Round-robin schedule for `n` targets.
pub fn schedule(n: u64, cfg: &BusConfig) -> ScheduleReport {
    let cap = max_targets(cfg);
    let feasible = n <= cap;
    let f_s = if feasible {
        cfg.f_s
    } else {
        cfg.bit_rate as f64 / (n as f64 * cfg.bits_per_target as f64)
    };
    let tx = cfg.transaction_time();
    ScheduleReport {
        max_targets: cap,
        feasible,
        f_s,
        data_age: (1..=n).map(|k| k as f64 * tx).collect(),
        utilization: n as f64 * cfg.bits_per_target as f64 * f_s / cfg.bit_rate as f64,
    }
}

/// Conductors and pneumatic tubes routed through the body of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireCount {
    pub wires: u64,
    pub tubes: u64,
}

/// Modular chains share two bus lines, three power lines and one supply
/// tube; semi-modular chains carry every encoder cable (three conductors)
/// and two bellows tubes per actuator.
pub fn wire_count(n: u64, variant: Variant) -> WireCount {
    match variant {
        Variant::Modular => WireCount { wires: 5, tubes: 1 },
        Variant::SemiModular => WireCount {
            wires: 3 * n,
            tubes: 2 * n,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bit_rate: u64, bits: u64, f_s: f64) -> BusConfig {
        BusConfig {
            bit_rate,
            bits_per_target: bits,
            f_s,
        }
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(max_targets(&BusConfig::default()), 12);
        assert_eq!(max_targets(&cfg(400_000, 33, 2000.0)), 6);
        assert_eq!(max_targets(&cfg(100_000, 40, 1000.0)), 2);
    }

    #[test]
    fn schedule_examples() {
        let d = BusConfig::default();
        let r = schedule(12, &d);
        assert!(r.feasible);
        assert!((r.utilization - 0.99).abs() < 1e-12);
        assert!((schedule(3, &d).utilization - 0.2475).abs() < 1e-12);

        let r = schedule(20, &d);
        assert!(!r.feasible);
        assert!((r.f_s - 606.0606).abs() < 1e-3);
        assert!((r.utilization - 1.0).abs() < 1e-12);
        assert_eq!(r.data_age.len(), 20);
    }

    #[test]
    fn data_age_grows_along_the_schedule() {
        let r = schedule(4, &BusConfig::default());
        assert!((r.data_age[0] - 33.0 / 400_000.0).abs() < 1e-18);
        assert!(r.data_age.windows(2).all(|w| w[1] > w[0]));
        assert!(*r.data_age.last().unwrap() <= 1.0 / r.f_s);
    }

    #[test]
    fn wire_examples() {
        assert_eq!(wire_count(12, Variant::Modular), WireCount { wires: 5, tubes: 1 });
        assert_eq!(wire_count(1, Variant::Modular), WireCount { wires: 5, tubes: 1 });
        assert_eq!(wire_count(5, Variant::SemiModular), WireCount { wires: 15, tubes: 10 });
    }
}
