//! Pneumatic network: regulated supply line with leakage, proportional
//! valves with an inner pressure loop, 3/2-way binary microvalves and
//! lumped bellows volumes.
//!
//! Flows are volumetric at the reference pressure (m³/s) and follow a linear
//! conductance law. Line and bellows are isothermal lumped capacitances
//! `V / P_REF`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{RobotConfig, SupplySpec, ValveSpec, Variant};

/// Reference pressure of the lumped capacitances, bar.
pub const P_REF: f64 = 1.0;

/// Flow through one 3/2-way microvalve.
///
/// Open (`u = 1`): port 1 connects supply to bellows, flow reverses when the
/// bellows is above the line. Closed (`u = 0`): port 1 is blocked and the
/// bellows vents to atmosphere through ports 2 and 3.
///
/// Returns `(q_in, q_vent)`.
pub fn binary_valve_flow(u: u8, p_s: f64, p_b: f64, conductance: f64) -> Result<(f64, f64)> {
    if conductance < 0.0 {
        return Err(Error::config(format!(
            "valve conductance must be non-negative (got {conductance})"
        )));
    }
    Ok(if u != 0 {
        (conductance * (p_s - p_b), 0.0)
    } else {
        (0.0, conductance * p_b)
    })
}

/// Fixed transport delay in whole simulation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buf: VecDeque<f64>,
}

impl DelayLine {
    /// Delay of `dead_time` rounded to whole steps of `dt`, pre-filled with
    /// `initial` (the command assumed to have been held before t = 0).
    pub fn new(dead_time: f64, dt: f64, initial: f64) -> Self {
        let steps = (dead_time / dt).round().max(0.0) as usize;
        Self {
            buf: std::iter::repeat_n(initial, steps).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.buf.len()
    }

    /// Pushes the current command and returns the one issued `steps()` ago.
    pub fn push(&mut self, cmd: f64) -> f64 {
        if self.buf.is_empty() {
            return cmd;
        }
        self.buf.push_back(cmd);
        self.buf.pop_front().unwrap_or(cmd)
    }
}

/// Continuous inner state and quantized outlet pressure of a proportional
/// valve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValveOutput {
    pub inner: f64,
    pub output: f64,
}

/// Rounds to the nearest multiple of `resolution` (no-op for 0).
pub fn quantize(p: f64, resolution: f64) -> f64 {
    if resolution > 0.0 {
        (p / resolution).round() * resolution
    } else {
        p
    }
}

/// One step of a proportional pressure valve: first-order tracking of the
/// delayed command followed by output quantization.
///
/// The lag integrates on the unquantized `inner` value; quantizing the state
/// itself would freeze the valve whenever one step moves less than half a
/// resolution increment.
pub fn proportional_valve_step(
    inner: f64,
    p_d: f64,
    tau_pv: f64,
    resolution: f64,
    dt: f64,
    history: &mut DelayLine,
) -> Result<ValveOutput> {
    if tau_pv <= 0.0 {
        return Err(Error::config(format!("tau_pv must be > 0 (got {tau_pv})")));
    }
    let delayed = history.push(p_d);
    let inner = inner + (dt / tau_pv) * (delayed - inner);
    Ok(ValveOutput {
        inner,
        output: quantize(inner, resolution),
    })
}

/// Line pressure after one step plus the flows that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyStep {
    pub p_s: f64,
    pub q_src: f64,
    pub q_leak: f64,
    /// Rate of change of the volume stored in the line.
    pub q_store: f64,
}

/// Regulated, flow-limited source feeding a leaky line of fixed volume.
///
/// `draw` is the total (signed) flow taken by the valves.
pub fn supply_step(p_s: f64, p_source_d: f64, draw: f64, spec: &SupplySpec, dt: f64) -> SupplyStep {
    let capacitance = spec.line_volume / P_REF;
    let q_src = ((p_source_d - p_s) / spec.tau_src * capacitance).min(spec.q_src_max);
    let q_leak = spec.g_leak * p_s;
    let q_store = q_src - q_leak - draw;
    SupplyStep {
        p_s: p_s + dt * q_store / capacitance,
        q_src,
        q_leak,
        q_store,
    }
}

/// Explicit Euler update of one bellows volume, never below vent pressure.
pub fn bellows_pressure_step(p_b: f64, q_net: f64, volume: f64, dt: f64) -> f64 {
    (p_b + dt * q_net * P_REF / volume).max(0.0)
}

/// Flows of one network step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowReport {
    pub q_src: f64,
    pub q_leak: f64,
    pub q_store: f64,
    /// Signed supply-to-bellows flows, negative when a bellows back-feeds.
    pub q_in: Vec<f64>,
    /// Flows vented to atmosphere.
    pub q_vent: Vec<f64>,
}

impl FlowReport {
    /// Line balance `q_src - q_leak - Σq_in - q_store`, relative to the
    /// largest term.
    pub fn relative_residual(&self) -> f64 {
        let drawn: f64 = self.q_in.iter().sum();
        let scale = [self.q_src, self.q_leak, self.q_store, drawn]
            .iter()
            .chain(self.q_in.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let r = self.q_src - self.q_leak - drawn - self.q_store;
        if scale == 0.0 {
            r.abs()
        } else {
            r.abs() / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PropValveState {
    inner: f64,
    delay: DelayLine,
}

/// Valve-side state of the whole pneumatic network. Bellows and line
/// pressures live in [`RobotState`](crate::model::RobotState).
#[derive(Debug, Clone, PartialEq)]
pub struct PneumaticNetwork {
    valves: Vec<PropValveState>,
}

impl PneumaticNetwork {
    /// Proportional valves start settled at `p_rest` with their delay lines
    /// holding that command; joint `i` (1-based) sees `i` stages of dead time.
    pub fn new(config: &RobotConfig, p_rest: &[f64]) -> Self {
        let valves = match config.variant() {
            Variant::Modular => Vec::new(),
            Variant::SemiModular => config
                .actuators
                .iter()
                .enumerate()
                .flat_map(|(i, a)| {
                    let per_stage = match a.valve {
                        ValveSpec::Proportional {
                            dead_time_per_stage, ..
                        } => dead_time_per_stage,
                        ValveSpec::Binary { .. } => 0.0,
                    };
                    let dead = (i + 1) as f64 * per_stage;
                    [2 * i, 2 * i + 1].map(|j| PropValveState {
                        inner: p_rest[j],
                        delay: DelayLine::new(dead, config.dt, p_rest[j]),
                    })
                })
                .collect(),
        };
        Self { valves }
    }

    /// Steps microvalve-driven bellows and the line. `u` holds one binary
    /// state per bellows.
    pub fn step_binary(
        &self,
        config: &RobotConfig,
        u: &[u8],
        p: &mut [f64],
        p_s: &mut f64,
        p_source_d: f64,
    ) -> Result<FlowReport> {
        let dt = config.dt;
        let mut q_in = vec![0.0; p.len()];
        let mut q_vent = vec![0.0; p.len()];
        for (j, pb) in p.iter_mut().enumerate() {
            let a = &config.actuators[j / 2];
            let g = match a.valve {
                ValveSpec::Binary { conductance, .. } => conductance,
                ValveSpec::Proportional { .. } => {
                    return Err(Error::config("binary step on a proportional valve"))
                }
            };
            let (qi, qv) = binary_valve_flow(u[j], *p_s, *pb, g)?;
            q_in[j] = qi;
            q_vent[j] = qv;
            *pb = bellows_pressure_step(*pb, qi - qv, a.bellows.volume, dt);
        }
        let draw: f64 = q_in.iter().sum();
        let s = supply_step(*p_s, p_source_d, draw, &config.supply, dt);
        *p_s = s.p_s;
        Ok(FlowReport {
            q_src: s.q_src,
            q_leak: s.q_leak,
            q_store: s.q_store,
            q_in,
            q_vent,
        })
    }

    /// Steps proportional-valve-driven bellows and the line. Valve outlets
    /// cannot exceed the line pressure; the flow each bellows takes is
    /// inferred from its volume change.
    pub fn step_proportional(
        &mut self,
        config: &RobotConfig,
        p_d: &[f64],
        p: &mut [f64],
        p_s: &mut f64,
        p_source_d: f64,
    ) -> Result<FlowReport> {
        let dt = config.dt;
        let mut q_in = vec![0.0; p.len()];
        let mut q_vent = vec![0.0; p.len()];
        for (j, pb) in p.iter_mut().enumerate() {
            let a = &config.actuators[j / 2];
            let (tau_pv, resolution) = match a.valve {
                ValveSpec::Proportional {
                    tau_pv, resolution, ..
                } => (tau_pv, resolution),
                ValveSpec::Binary { .. } => {
                    return Err(Error::config("proportional step on a binary valve"))
                }
            };
            let v = &mut self.valves[j];
            let out = proportional_valve_step(v.inner, p_d[j], tau_pv, resolution, dt, &mut v.delay)?;
            v.inner = out.inner;
            let next = out.output.clamp(0.0, p_s.max(0.0));
            let q = (next - *pb) * a.bellows.volume / (P_REF * dt);
            if q >= 0.0 {
                q_in[j] = q;
            } else {
                q_vent[j] = -q;
            }
            *pb = next;
        }
        let draw: f64 = q_in.iter().sum();
        let s = supply_step(*p_s, p_source_d, draw, &config.supply, dt);
        *p_s = s.p_s;
        Ok(FlowReport {
            q_src: s.q_src,
            q_leak: s.q_leak,
            q_store: s.q_store,
            q_in,
            q_vent,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BellowsKind, SupplySpec};

    const G: f64 = 6.70945473e-5;

    #[test]
    fn closed_valve_vents() {
        assert_eq!(binary_valve_flow(0, 1.0, 0.2, G).unwrap(), (0.0, G * 0.2));
    }

    #[test]
    fn open_valve_without_difference_is_still() {
        assert_eq!(binary_valve_flow(1, 1.0, 1.0, G).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn open_valve_is_linear() {
        let (qi, qv) = binary_valve_flow(1, 0.5, 0.2, G).unwrap();
        assert!((qi - G * 0.3).abs() < 1e-20);
        assert_eq!(qv, 0.0);
        // back-feed
        let (qi, _) = binary_valve_flow(1, 0.2, 0.5, G).unwrap();
        assert!(qi < 0.0);
    }

    #[test]
    fn negative_conductance_rejected() {
        assert!(binary_valve_flow(1, 0.5, 0.2, -1.0).is_err());
    }

    #[test]
    fn proportional_fixed_point() {
        for dead in [0.0, 0.01, 0.05] {
            let mut h = DelayLine::new(dead, 0.001, 0.2);
            let mut inner = 0.2;
            for _ in 0..200 {
                let o = proportional_valve_step(inner, 0.2, 0.05, 0.005, 0.001, &mut h).unwrap();
                assert_eq!(o.output, 0.2);
                inner = o.inner;
            }
        }
    }

    #[test]
    fn proportional_step_response_reaches_95_percent_after_three_tau() {
        let (tau, dt, dead) = (0.05, 0.001, 0.01);
        let mut h = DelayLine::new(dead, dt, 0.0);
        let mut inner = 0.0;
        let mut trace = Vec::new();
        for _ in 0..400 {
            let o = proportional_valve_step(inner, 0.35, tau, 0.0, dt, &mut h).unwrap();
            inner = o.inner;
            trace.push(o.output);
        }
        // output still at rest while the command is in transit
        assert!(trace[..10].iter().all(|&p| p == 0.0));
        assert!(trace[10] > 0.0);
        // k-th step after the delay has left 1 - (1 - dt/tau)^k of the gap
        let k = (3.0 * tau / dt) as usize;
        assert!(trace[9 + k] >= 0.95 * 0.35);
        let analytic = 0.35 * (1.0 - (-3.0f64).exp());
        assert!((trace[9 + k] - analytic).abs() < 0.01 * 0.35);
    }

    #[test]
    fn nonpositive_tau_rejected() {
        let mut h = DelayLine::new(0.0, 0.001, 0.0);
        assert!(proportional_valve_step(0.0, 0.1, 0.0, 0.005, 0.001, &mut h).is_err());
    }

    #[test]
    fn quantized_output_is_on_grid() {
        let mut h = DelayLine::new(0.0, 0.001, 0.0);
        let mut inner = 0.0;
        for _ in 0..300 {
            let o = proportional_valve_step(inner, 0.1234, 0.05, 0.005, 0.001, &mut h).unwrap();
            inner = o.inner;
            let k = o.output / 0.005;
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert!((inner - 0.1234).abs() < 0.01);
    }

    #[test]
    fn airtight_supply_converges_monotonically() {
        let spec = SupplySpec::airtight(1.5);
        let mut p = 0.0;
        for _ in 0..2000 {
            let next = supply_step(p, 1.5, 0.0, &spec, 0.001).p_s;
            assert!(next >= p && next <= 1.5);
            p = next;
        }
        assert!((p - 1.5).abs() < 1e-9);
    }

    #[test]
    fn leaky_supply_settles_at_flow_balance() {
        let spec = SupplySpec::early_design(1.5);
        let mut p = 0.0;
        for _ in 0..200_000 {
            p = supply_step(p, 1.5, 0.0, &spec, 0.001).p_s;
        }
        // q_src_max = G_leak · p*
        assert!((p - spec.q_src_max / spec.g_leak).abs() < 1e-6);
    }

    #[test]
    fn draw_matching_source_keeps_line_constant() {
        let spec = SupplySpec::airtight(1.0);
        let p = 0.8;
        let s0 = supply_step(p, 1.0, 0.0, &spec, 0.001);
        let s = supply_step(p, 1.0, s0.q_src, &spec, 0.001);
        assert_eq!(s.p_s, p);
    }

    #[test]
    fn bellows_ramp_and_hold() {
        assert_eq!(bellows_pressure_step(0.2, 0.0, 3e-5, 0.001), 0.2);
        let mut p = 0.0;
        for _ in 0..100 {
            p = bellows_pressure_step(p, 1e-6, 3e-5, 0.001);
        }
        let slope = 1e-6 * P_REF / 3e-5;
        assert!((p - slope * 0.1).abs() < 1e-12);
        assert_eq!(bellows_pressure_step(0.0, -1.0, 3e-5, 0.001), 0.0);
    }

    #[test]
    fn venting_bellows_halves_at_the_analytic_half_life() {
        let (v, dt) = (3e-5, 1e-4);
        let tau = v / (G * P_REF);
        let mut p = 0.3;
        let mut t = 0.0;
        while p > 0.15 {
            let (_, qv) = binary_valve_flow(0, 1.0, p, G).unwrap();
            let next = bellows_pressure_step(p, -qv, v, dt);
            assert!(next <= p);
            p = next;
            t += dt;
        }
        let half_life = tau * std::f64::consts::LN_2;
        assert!((t - half_life).abs() / half_life < 1e-3, "{t} vs {half_life}");
    }

    #[test]
    fn default_conductance_fill_time() {
        let a = crate::model::preset(Variant::Modular, BellowsKind::Cast);
        let ValveSpec::Binary { conductance, .. } = a.valve else {
            unreachable!()
        };
        let dt = 1e-6;
        let (mut p, mut t) = (0.0, 0.0);
        while p < 0.95 * 0.3 {
            let (q_in, _) = binary_valve_flow(1, 0.3, p, conductance).unwrap();
            p = bellows_pressure_step(p, q_in, a.bellows.volume, dt);
            t += dt;
        }
        assert!((t - 0.15).abs() < 1e-4, "{t}");
    }

    #[test]
    fn delay_line_shifts_by_whole_steps() {
        let mut d = DelayLine::new(0.02, 0.001, -1.0);
        assert_eq!(d.steps(), 20);
        let out: Vec<f64> = (0..25).map(|k| d.push(k as f64)).collect();
        assert_eq!(out[19], -1.0);
        assert_eq!(out[20], 0.0);
        assert_eq!(out[24], 4.0);
    }
}
