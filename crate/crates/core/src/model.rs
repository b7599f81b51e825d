//! Domain types shared by every subsystem: actuator presets, chain
//! configuration, controller gains and the simulation state container.
//!
//! Pressures are gauge pressures in bar (atmosphere = 0). Everything else is
//! SI: metres, kilograms, seconds, radians.

use crate::bus::BusConfig;
use crate::control::PiState;
use crate::error::{Error, Result, Violation};

/// Half of the 37 degree joint range, in radians.
pub const DEFAULT_Q_MAX: f64 = 0.3229;

/// Default simulation step matching the 1 kHz test bench.
pub const DEFAULT_DT: f64 = 0.001;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// External proportional valves, tubes routed through the body.
    SemiModular,
    /// Integrated binary microvalves on a shared supply line.
    Modular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellowsKind {
    Printed,
    Cast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointAxis {
    /// Planar chain, every joint axis parallel.
    Aligned,
    /// Snake layout with consecutive axes at 90 degrees.
    AlternatingOrthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseOrientation {
    /// Chain points straight up at q = 0.
    VerticalUp,
    /// Chain is a horizontal cantilever at q = 0.
    Horizontal,
}

/// Observed lifetime of a bellows under the 10 s pressurise / 10 s vent
/// protocol.
///
/// `cycles` counts completed load cycles; `partial_s` is how far into the
/// following cycle the bellows tore. A `runout` specimen was still intact
/// when the test stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueLife {
    pub cycles: u64,
    pub partial_s: f64,
    pub runout: bool,
}

impl FatigueLife {
    pub const fn failed_after(cycles: u64, partial_s: f64) -> Self {
        Self {
            cycles,
            partial_s,
            runout: false,
        }
    }

    pub const fn runout(cycles: u64) -> Self {
        Self {
            cycles,
            partial_s: 0.0,
            runout: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellowsSpec {
    pub kind: BellowsKind,
    /// Maximum working pressure, bar.
    pub p_max: f64,
    /// Torque per bellows pressure difference, N·m/bar.
    pub g_tau: f64,
    /// Elastic joint stiffness at zero pressure, N·m/rad.
    pub k0: f64,
    /// Stiffening per bar of mean bellows pressure, N·m/(rad·bar).
    pub k1: f64,
    /// Viscous joint damping, N·m·s/rad.
    pub damping: f64,
    /// Bellows air volume, m³.
    pub volume: f64,
    pub fatigue: FatigueLife,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValveSpec {
    Proportional {
        /// Inner pressure loop time constant, s.
        tau_pv: f64,
        /// Output pressure resolution, bar.
        resolution: f64,
        /// Transport delay added per actuator stage along the tube run, s.
        dead_time_per_stage: f64,
    },
    Binary {
        /// Volumetric flow per bar of pressure difference, m³/(s·bar).
        conductance: f64,
        f_pwm: f64,
        /// Rated switching cycles.
        switching_life: f64,
        /// Cycle count after which internal leakage has been observed.
        degradation_threshold: f64,
    },
}

impl ValveSpec {
    pub fn default_proportional() -> Self {
        ValveSpec::Proportional {
            tau_pv: 0.05,
            resolution: 0.005,
            dead_time_per_stage: 0.01,
        }
    }

    /// Microvalve with a conductance that fills a 30 ml modular bellows from
    /// vent to 95 % of a 0.3 bar line in 0.15 s:
    /// `G = V·ln 20 / (0.15 s · 1 bar)`, a 50 ms bellows time constant.
    pub fn default_binary() -> Self {
        ValveSpec::Binary {
            conductance: 5.99146455e-4,
            f_pwm: 100.0,
            switching_life: 5.0e8,
            degradation_threshold: 1.0e8,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, ValveSpec::Binary { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorSpec {
    pub variant: Variant,
    pub diameter: f64,
    pub height: f64,
    pub mass: f64,
    pub q_max: f64,
    pub bellows: BellowsSpec,
    pub valve: ValveSpec,
    pub joint_axis: JointAxis,
}

/// Torque gain that makes full differential pressure hold the joint exactly
/// at its limit: `g_tau·p_max = (k0 + k1·p_max/2)·q_max`.
///
/// The quotient is nudged by a few ulps when needed so that the identity
/// holds bit-exactly in floating point.
pub fn calibrated_torque_gain(k0: f64, k1: f64, p_max: f64, q_max: f64) -> f64 {
    let holding = (k0 + k1 * (p_max / 2.0)) * q_max;
    let mut g = holding / p_max;
    if g * p_max == holding {
        return g;
    }
    let candidates = (1..=8).flat_map(|k| [k as i64, -(k as i64)]);
    for step in candidates {
        let c = f64::from_bits((g.to_bits() as i64 + step) as u64);
        if c * p_max == holding {
            g = c;
            return g;
        }
    }
    g
}

impl BellowsSpec {
    pub fn calibrated_gain(&self, q_max: f64) -> f64 {
        calibrated_torque_gain(self.k0, self.k1, self.p_max, q_max)
    }
}

/// One of the four stock actuator builds.
pub fn preset(variant: Variant, kind: BellowsKind) -> ActuatorSpec {
    let (diameter, height, mass, volume) = match variant {
        Variant::SemiModular => (0.082, 0.052, 0.150, 4.0e-5),
        Variant::Modular => (0.066, 0.094, 0.163, 3.0e-5),
    };
    let (p_max, fatigue) = match (variant, kind) {
        // 7 min 54 s
        (Variant::SemiModular, BellowsKind::Printed) => (0.35, FatigueLife::failed_after(23, 14.0)),
        // 72 h 36 min
        (Variant::SemiModular, BellowsKind::Cast) => (0.5, FatigueLife::failed_after(13068, 0.0)),
        // 15 min 2 s
        (Variant::Modular, BellowsKind::Printed) => (0.3, FatigueLife::failed_after(45, 2.0)),
        // still usable after 175 h
        (Variant::Modular, BellowsKind::Cast) => (0.3, FatigueLife::runout(31500)),
    };
    let (k0, k1, damping) = (0.4, 0.5, 0.05);
    let q_max = DEFAULT_Q_MAX;
    let bellows = BellowsSpec {
        kind,
        p_max,
        g_tau: calibrated_torque_gain(k0, k1, p_max, q_max),
        k0,
        k1,
        damping,
        volume,
        fatigue,
    };
    let valve = match variant {
        Variant::SemiModular => ValveSpec::default_proportional(),
        Variant::Modular => ValveSpec::default_binary(),
    };
    ActuatorSpec {
        variant,
        diameter,
        height,
        mass,
        q_max,
        bellows,
        valve,
        joint_axis: JointAxis::Aligned,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplySpec {
    /// Desired (regulated) supply pressure, bar.
    pub p_source_d: f64,
    /// Flow limit of the regulated source, m³/s.
    pub q_src_max: f64,
    /// Leakage conductance of the central line, m³/(s·bar).
    pub g_leak: f64,
    pub line_volume: f64,
    /// Pressure regulator time constant, s.
    pub tau_src: f64,
}

impl SupplySpec {
    /// Airtight line fed by a stiff regulator.
    pub fn airtight(p_source_d: f64) -> Self {
        Self {
            p_source_d,
            q_src_max: 1.0e-3,
            g_leak: 0.0,
            line_volume: 2.0e-4,
            tau_src: 0.02,
        }
    }

    /// Early design iteration with a leaking split frame. The source flow
    /// limit over the leak conductance pins the line at 0.3 bar.
    pub fn early_design(p_source_d: f64) -> Self {
        Self {
            q_src_max: 6.0e-6,
            g_leak: 2.0e-5,
            ..Self::airtight(p_source_d)
        }
    }

    /// Line pressure at which a saturated source exactly feeds the leak.
    pub fn leak_plateau(&self) -> Option<f64> {
        (self.g_leak > 0.0).then(|| self.q_src_max / self.g_leak)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub actuators: Vec<ActuatorSpec>,
    pub supply: SupplySpec,
    pub base_orientation: BaseOrientation,
    pub dt: f64,
    pub gravity: f64,
}

impl RobotConfig {
    /// Homogeneous chain of `n` stock actuators. Modular chains feed the
    /// line at the bellows working pressure, semi-modular chains run their
    /// proportional valves off a 1 bar line.
    pub fn homogeneous(variant: Variant, kind: BellowsKind, n: usize) -> Self {
        let spec = preset(variant, kind);
        let p_source = match variant {
            Variant::SemiModular => 1.0,
            Variant::Modular => spec.bellows.p_max,
        };
        Self {
            actuators: vec![spec; n],
            supply: SupplySpec::airtight(p_source),
            base_orientation: BaseOrientation::VerticalUp,
            dt: DEFAULT_DT,
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn n(&self) -> usize {
        self.actuators.len()
    }

    /// Variant of the chain. Mixed chains are rejected by [`validate`].
    pub fn variant(&self) -> Variant {
        self.actuators
            .first()
            .map(|a| a.variant)
            .unwrap_or(Variant::Modular)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiGains {
    /// bar/rad (semi-modular) or duty/rad (modular).
    pub kp: f64,
    pub ki: f64,
    pub out_min: f64,
    pub out_max: f64,
    pub integ_min: f64,
    pub integ_max: f64,
}

impl PiGains {
    /// Shipped gains. The semi-modular output is the desired pressure
    /// difference in bar, the modular output is the duty offset of the first
    /// valve around `d_stiff / 2`.
    pub fn default_for(variant: Variant, p_max: f64) -> Self {
        match variant {
            Variant::SemiModular => Self {
                kp: 0.9,
                ki: 1.8,
                out_min: -p_max,
                out_max: p_max,
                integ_min: -p_max,
                integ_max: p_max,
            },
            Variant::Modular => Self {
                kp: 18.0,
                ki: 18.0,
                out_min: -0.5,
                out_max: 0.5,
                integ_min: -0.5,
                integ_max: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub gains: PiGains,
    /// Mean bellows pressure; `None` means half of each joint's `p_max`.
    pub p_stiff: Option<f64>,
    pub d_stiff: f64,
}

impl ControlConfig {
    pub fn default_for(robot: &RobotConfig) -> Self {
        let p_max = robot
            .actuators
            .first()
            .map(|a| a.bellows.p_max)
            .unwrap_or(0.3);
        Self {
            gains: PiGains::default_for(robot.variant(), p_max),
            p_stiff: None,
            d_stiff: 1.0,
        }
    }

    pub fn p_stiff_for(&self, spec: &ActuatorSpec) -> f64 {
        self.p_stiff.unwrap_or(spec.bellows.p_max / 2.0)
    }
}

/// Everything a config file describes.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinConfig {
    pub robot: RobotConfig,
    pub control: ControlConfig,
    pub bus: BusConfig,
}

impl TwinConfig {
    pub fn stock(variant: Variant, kind: BellowsKind, n: usize) -> Self {
        let robot = RobotConfig::homogeneous(variant, kind, n);
        let control = ControlConfig::default_for(&robot);
        Self {
            robot,
            control,
            bus: BusConfig::default(),
        }
    }
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self::stock(Variant::Modular, BellowsKind::Printed, 3)
    }
}

/// Valve commands held in the state: binary states for microvalves or
/// desired pressures for proportional valves.
#[derive(Debug, Clone, PartialEq)]
pub enum ValveCommands {
    Binary(Vec<u8>),
    Pressure(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// `[p_11, p_12, ..., p_n1, p_n2]`, bar.
    pub p: Vec<f64>,
    pub p_s: f64,
    pub commands: ValveCommands,
    pub integ: Vec<PiState>,
    pub switch_count: Vec<u64>,
}

impl RobotState {
    /// Chain at rest at q = 0 with both bellows of every joint at `p_rest`
    /// and the line at `p_s`.
    pub fn at_rest(n: usize, variant: Variant, p_rest: f64, p_s: f64) -> Self {
        let commands = match variant {
            Variant::Modular => ValveCommands::Binary(vec![0; 2 * n]),
            Variant::SemiModular => ValveCommands::Pressure(vec![p_rest; 2 * n]),
        };
        Self {
            t: 0.0,
            q: vec![0.0; n],
            qdot: vec![0.0; n],
            p: vec![p_rest; 2 * n],
            p_s,
            commands,
            integ: vec![PiState::default(); n],
            switch_count: vec![0; 2 * n],
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Pressure difference of joint `i` (0-based).
    pub fn delta_p(&self, i: usize) -> f64 {
        self.p[2 * i] - self.p[2 * i + 1]
    }

    pub fn mean_p(&self, i: usize) -> f64 {
        (self.p[2 * i] + self.p[2 * i + 1]) / 2.0
    }
}

fn check_positive(out: &mut Vec<Violation>, field: String, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(Violation::new(field, format!("must be > 0 (got {v})")));
    }
}

fn check_non_negative(out: &mut Vec<Violation>, field: String, v: f64) {
    if !(v.is_finite() && v >= 0.0) {
        out.push(Violation::new(field, format!("must be >= 0 (got {v})")));
    }
}

/// Checks every type invariant; an empty list means the config is usable.
pub fn validate(config: &RobotConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.actuators.is_empty() {
        out.push(Violation::new("robot.n", "must be >= 1"));
    }
    check_positive(&mut out, "sim.dt".into(), config.dt);
    check_non_negative(&mut out, "sim.gravity".into(), config.gravity);

    let variant = config.variant();
    for (i, a) in config.actuators.iter().enumerate() {
        let pre = format!("joint.{}", i + 1);
        if a.variant != variant {
            out.push(Violation::new(
                format!("{pre}.variant"),
                "all actuators of a chain must share one variant",
            ));
        }
        check_positive(&mut out, format!("{pre}.actuator.diameter"), a.diameter);
        check_positive(&mut out, format!("{pre}.actuator.height"), a.height);
        check_positive(&mut out, format!("{pre}.actuator.mass"), a.mass);
        check_positive(&mut out, format!("{pre}.actuator.q_max"), a.q_max);

        let b = &a.bellows;
        check_positive(&mut out, format!("{pre}.bellows.p_max"), b.p_max);
        check_positive(&mut out, format!("{pre}.bellows.g_tau"), b.g_tau);
        check_positive(&mut out, format!("{pre}.bellows.k0"), b.k0);
        check_non_negative(&mut out, format!("{pre}.bellows.k1"), b.k1);
        check_positive(&mut out, format!("{pre}.bellows.damping"), b.damping);
        check_positive(&mut out, format!("{pre}.bellows.volume"), b.volume);
        check_non_negative(&mut out, format!("{pre}.bellows.fatigue_partial_s"), b.fatigue.partial_s);
        if b.fatigue.cycles == 0 && b.fatigue.partial_s == 0.0 {
            out.push(Violation::new(
                format!("{pre}.bellows.fatigue_cycles"),
                "fatigue life must be > 0",
            ));
        }

        match (&a.valve, a.variant) {
            (
                ValveSpec::Proportional {
                    tau_pv,
                    resolution,
                    dead_time_per_stage,
                },
                Variant::SemiModular,
            ) => {
                check_positive(&mut out, format!("{pre}.valve.tau_pv"), *tau_pv);
                check_non_negative(&mut out, format!("{pre}.valve.resolution"), *resolution);
                check_non_negative(
                    &mut out,
                    format!("{pre}.valve.dead_time_per_stage"),
                    *dead_time_per_stage,
                );
            }
            (
                ValveSpec::Binary {
                    conductance,
                    f_pwm,
                    switching_life,
                    degradation_threshold,
                },
                Variant::Modular,
            ) => {
                check_positive(&mut out, format!("{pre}.valve.conductance"), *conductance);
                check_positive(&mut out, format!("{pre}.valve.f_pwm"), *f_pwm);
                check_positive(&mut out, format!("{pre}.valve.switching_life"), *switching_life);
                check_positive(
                    &mut out,
                    format!("{pre}.valve.degradation_threshold"),
                    *degradation_threshold,
                );
            }
            (_, Variant::SemiModular) => out.push(Violation::new(
                format!("{pre}.valve.kind"),
                "semi-modular actuators use proportional valves",
            )),
            (_, Variant::Modular) => out.push(Violation::new(
                format!("{pre}.valve.kind"),
                "modular actuators use binary valves",
            )),
        }
    }

    let s = &config.supply;
    check_non_negative(&mut out, "supply.p_source_d".into(), s.p_source_d);
    check_non_negative(&mut out, "supply.q_src_max".into(), s.q_src_max);
    check_non_negative(&mut out, "supply.g_leak".into(), s.g_leak);
    check_positive(&mut out, "supply.line_volume".into(), s.line_volume);
    check_positive(&mut out, "supply.tau_src".into(), s.tau_src);
    out
}

/// Validates robot, controller and bus settings together.
pub fn validate_twin(config: &TwinConfig) -> Vec<Violation> {
    let mut out = validate(&config.robot);
    let g = &config.control.gains;
    check_non_negative(&mut out, "control.kp".into(), g.kp);
    check_non_negative(&mut out, "control.ki".into(), g.ki);
    if !(g.out_min < g.out_max) {
        out.push(Violation::new("control.out_min", "must be < control.out_max"));
    }
    if !(g.integ_min <= g.integ_max) {
        out.push(Violation::new("control.integ_min", "must be <= control.integ_max"));
    }
    if let Some(p) = config.control.p_stiff {
        for (i, a) in config.robot.actuators.iter().enumerate() {
            if !(0.0..=a.bellows.p_max).contains(&p) {
                out.push(Violation::new(
                    "control.p_stiff",
                    format!("must lie in [0, p_max] of joint {}", i + 1),
                ));
            }
        }
    }
    if !(0.0..=2.0).contains(&config.control.d_stiff) {
        out.push(Violation::new("control.d_stiff", "must lie in [0, 2]"));
    }
    let b = &config.bus;
    if b.bit_rate == 0 {
        out.push(Violation::new("bus.bit_rate", "must be > 0"));
    }
    if b.bits_per_target == 0 {
        out.push(Violation::new("bus.bits_per_target", "must be > 0"));
    }
    check_positive(&mut out, "bus.f_s".into(), b.f_s);
    out
}

/// Returns the config if it is valid, otherwise every violation.
pub fn ensure_valid(config: &TwinConfig) -> Result<()> {
    let v = validate_twin(config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v))
    }
}
