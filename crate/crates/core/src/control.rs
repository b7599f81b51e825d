//! Joint-angle control for both robot variants.
//!
//! Every joint runs its own PI controller with conditional-integration
//! anti-windup. The semi-modular architecture turns the PI output into a
//! desired pressure difference split symmetrically around the stiffness
//! pressure; the modular architecture turns it into complementary PWM duty
//! cycles for the two microvalves.

use crate::dynamics::encoder_read;
use crate::error::{Error, Result};
use crate::model::{ControlConfig, PiGains, RobotConfig, RobotState, ValveCommands, ValveSpec, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    pub integ: f64,
    pub saturated: bool,
}

/// One PI update. Returns the clamped command and the next state.
///
/// The integrator is frozen whenever the unclamped command is saturated and
/// the error would push it further into saturation.
pub fn pi_step(e: f64, st: PiState, g: &PiGains, dt: f64) -> (f64, PiState) {
    let p = g.kp * e;
    let trial = (st.integ + g.ki * e * dt).clamp(g.integ_min, g.integ_max);
    let raw = p + trial;
    let deepens = (raw > g.out_max && e > 0.0) || (raw < g.out_min && e < 0.0);
    let integ = if deepens { st.integ.clamp(g.integ_min, g.integ_max) } else { trial };
    let unclamped = p + integ;
    let cmd = unclamped.clamp(g.out_min, g.out_max);
    (
        cmd,
        PiState {
            integ,
            saturated: cmd != unclamped,
        },
    )
}

/// Splits a desired pressure difference half-and-half around `p_stiff`.
pub fn split_pressures(dp_d: f64, p_stiff: f64, p_max: f64) -> (f64, f64) {
    (
        (p_stiff + dp_d / 2.0).clamp(0.0, p_max),
        (p_stiff - dp_d / 2.0).clamp(0.0, p_max),
    )
}

/// Second valve duty as the complement of the first with respect to `d_stiff`.
pub fn split_duties(d1: f64, d_stiff: f64) -> (f64, f64) {
    let d1 = d1.clamp(0.0, 1.0);
    (d1, (d_stiff - d1).clamp(0.0, 1.0))
}

/// Leading-edge PWM: the valve is open for the first `d` of every period.
pub fn pwm_sample(d: f64, t: f64, f_pwm: f64) -> u8 {
    let phase = t * f_pwm;
    // snap away float noise so k·dt lands exactly on its sample slot
    let mut frac = ((phase - phase.floor()) * 1e9).round() / 1e9;
    if frac >= 1.0 {
        frac = 0.0;
    }
    u8::from(frac < d)
}

/// Architecture-specific output of one control cycle.
#[derive(Debug, Clone, PartialEq)]
pub enum Commands {
    /// Desired bellows pressures, `[p_11d, p_12d, ...]`.
    Pressures(Vec<f64>),
    /// Binary valve states plus the duty cycles they were sampled from.
    Valves { u: Vec<u8>, duties: Vec<f64> },
}

/// Runs one control cycle for all joints at time `state.t`.
///
/// Reads the encoders, updates the integrators in `state.integ`, writes the
/// new valve commands into `state.commands` and counts microvalve switching
/// transitions.
pub fn control_cycle(
    q_d: &[f64],
    state: &mut RobotState,
    control: &ControlConfig,
    robot: &RobotConfig,
) -> Result<Commands> {
    let n = robot.n();
    if q_d.len() != n || state.n() != n || state.integ.len() != n {
        return Err(Error::config(format!(
            "dimension mismatch: {} setpoints, {} joints in state, {} actuators",
            q_d.len(),
            state.n(),
            n
        )));
    }
    let dt = robot.dt;
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        let e = q_d[i] - encoder_read(state.q[i]);
        let (cmd, st) = pi_step(e, state.integ[i], &control.gains, dt);
        state.integ[i] = st;
        outputs.push(cmd);
    }

    match robot.variant() {
        Variant::SemiModular => {
            let p_d: Vec<f64> = outputs
                .iter()
                .zip(&robot.actuators)
                .flat_map(|(&dp, a)| {
                    let (p1, p2) = split_pressures(dp, control.p_stiff_for(a), a.bellows.p_max);
                    [p1, p2]
                })
                .collect();
            state.commands = ValveCommands::Pressure(p_d.clone());
            Ok(Commands::Pressures(p_d))
        }
        Variant::Modular => {
            let mut duties = Vec::with_capacity(2 * n);
            let mut u = Vec::with_capacity(2 * n);
            for (&off, a) in outputs.iter().zip(&robot.actuators) {
                let f_pwm = match a.valve {
                    ValveSpec::Binary { f_pwm, .. } => f_pwm,
                    ValveSpec::Proportional { .. } => {
                        return Err(Error::config("modular actuator without binary valve"))
                    }
                };
                let (d1, d2) = split_duties(control.d_stiff / 2.0 + off, control.d_stiff);
                duties.extend([d1, d2]);
                u.extend([pwm_sample(d1, state.t, f_pwm), pwm_sample(d2, state.t, f_pwm)]);
            }
            if let ValveCommands::Binary(prev) = &state.commands {
                for (j, (&a, &b)) in prev.iter().zip(&u).enumerate() {
                    if a != b {
                        state.switch_count[j] += 1;
                    }
                }
            }
            state.commands = ValveCommands::Binary(u.clone());
            Ok(Commands::Valves { u, duties })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TwinConfig;

    fn gains(kp: f64, ki: f64, lim: f64) -> PiGains {
        PiGains {
            kp,
            ki,
            out_min: -lim,
            out_max: lim,
            integ_min: -lim,
            integ_max: lim,
        }
    }

    #[test]
    fn zero_error_zero_command() {
        let (c, s) = pi_step(0.0, PiState::default(), &gains(2.0, 1.0, 1.0), 0.001);
        assert_eq!(c, 0.0);
        assert_eq!(s.integ, 0.0);
    }

    #[test]
    fn pure_proportional() {
        let (c, _) = pi_step(0.1, PiState::default(), &gains(2.0, 0.0, 1.0), 0.001);
        assert!((c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn integrator_stops_when_saturated() {
        let g = gains(0.0, 1.0, 0.5);
        let mut st = PiState::default();
        let mut c = 0.0;
        for _ in 0..2000 {
            (c, st) = pi_step(1.0, st, &g, 0.001);
            assert!(st.integ <= 0.5);
        }
        assert_eq!(c, 0.5);
        let frozen = st.integ;
        (_, st) = pi_step(1.0, st, &g, 0.001);
        assert_eq!(st.integ, frozen);
        // error reversal unwinds immediately
        (_, st) = pi_step(-1.0, st, &g, 0.001);
        assert!(st.integ < frozen);
    }

    #[test]
    fn pressure_split_examples() {
        let (a, b) = split_pressures(0.10, 0.175, 0.35);
        assert!((a - 0.225).abs() < 1e-15 && (b - 0.125).abs() < 1e-15);
        assert_eq!(split_pressures(0.0, 0.2, 0.35), (0.2, 0.2));
        assert_eq!(split_pressures(0.5, 0.175, 0.35), (0.35, 0.0));
    }

    #[test]
    fn duty_split_examples() {
        let (a, b) = split_duties(0.7, 1.0);
        assert_eq!(a, 0.7);
        assert!((b - 0.3).abs() < 1e-15);
        assert_eq!(split_duties(0.5, 1.0), (0.5, 0.5));
        assert_eq!(split_duties(1.3, 1.0), (1.0, 0.0));
    }

    #[test]
    fn pwm_examples() {
        assert_eq!(pwm_sample(0.25, 0.002, 100.0), 1);
        assert_eq!(pwm_sample(0.25, 0.0026, 100.0), 0);
        for k in 0..1000 {
            let t = k as f64 * 0.001;
            assert_eq!(pwm_sample(1.0, t, 100.0), 1);
            assert_eq!(pwm_sample(0.0, t, 100.0), 0);
        }
    }

    #[test]
    fn zero_error_gives_neutral_commands() {
        let cfg = TwinConfig::stock(Variant::SemiModular, crate::model::BellowsKind::Printed, 3);
        let mut s = RobotState::at_rest(3, Variant::SemiModular, 0.175, 1.0);
        let c = control_cycle(&[0.0; 3], &mut s, &cfg.control, &cfg.robot).unwrap();
        assert_eq!(c, Commands::Pressures(vec![0.175; 6]));

        let cfg = TwinConfig::default();
        let mut s = RobotState::at_rest(3, Variant::Modular, 0.15, 0.3);
        let Commands::Valves { duties, .. } = control_cycle(&[0.0; 3], &mut s, &cfg.control, &cfg.robot).unwrap() else {
            panic!("modular chain must emit valve states")
        };
        assert_eq!(duties, vec![0.5; 6]);
    }

    #[test]
    fn step_sign_follows_error() {
        let cfg = TwinConfig::stock(Variant::SemiModular, crate::model::BellowsKind::Printed, 3);
        let mut s = RobotState::at_rest(3, Variant::SemiModular, 0.175, 1.0);
        let Commands::Pressures(p) = control_cycle(&[0.1, -0.1, 0.0], &mut s, &cfg.control, &cfg.robot).unwrap() else {
            unreachable!()
        };
        assert!(p[0] - p[1] > 0.0);
        assert!(p[2] - p[3] < 0.0);
        assert_eq!(p[4], p[5]);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let cfg = TwinConfig::default();
        let mut s = RobotState::at_rest(3, Variant::Modular, 0.15, 0.3);
        assert!(matches!(
            control_cycle(&[0.0; 2], &mut s, &cfg.control, &cfg.robot),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn switch_transitions_are_counted() {
        let cfg = TwinConfig::default();
        let mut s = RobotState::at_rest(3, Variant::Modular, 0.15, 0.3);
        for k in 0..100 {
            s.t = k as f64 * 0.001;
            control_cycle(&[0.0; 3], &mut s, &cfg.control, &cfg.robot).unwrap();
        }
        // d = 0.5 over ten periods: one rising and one falling edge each
        assert!(s.switch_count.iter().all(|&c| c == 20));
    }
}
