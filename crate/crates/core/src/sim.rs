//! Fixed-step closed-loop simulation of one robot.
//!
//! One step at time `t_k = k·dt`: control cycle on the encoder readings,
//! pneumatic network update, bellows torques on the new pressures, chain
//! dynamics. Everything is sequential and deterministic.

use crate::control::{control_cycle, Commands};
use crate::dynamics::{bellows_torque, step_dynamics, ChainModel};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, RobotState, TwinConfig, ValveCommands, Variant};
use crate::pneumatics::{FlowReport, PneumaticNetwork};

#[derive(Debug, Clone)]
pub struct Twin {
    pub config: TwinConfig,
    pub model: ChainModel,
    pub state: RobotState,
    /// Desired supply pressure currently commanded to the regulator.
    pub p_source_d: f64,
    pub last_flows: FlowReport,
    network: PneumaticNetwork,
    steps: u64,
}

/// Bellows pressure each joint rests at with zero control error.
pub fn neutral_pressures(config: &TwinConfig) -> Vec<f64> {
    let r = &config.robot;
    r.actuators
        .iter()
        .flat_map(|a| {
            let p = match r.variant() {
                Variant::SemiModular => config.control.p_stiff_for(a),
                Variant::Modular => (config.control.d_stiff / 2.0).min(1.0) * r.supply.p_source_d,
            };
            [p, p]
        })
        .collect()
}

impl Twin {
    /// Chain at rest at q = 0, bellows at their neutral pressures and the
    /// line settled at its set point.
    pub fn new(config: TwinConfig) -> Result<Self> {
        let p = neutral_pressures(&config);
        let p_s = config.robot.supply.p_source_d;
        Self::with_pressures(config, p, p_s)
    }

    /// Chain at rest at q = 0 with given bellows and line pressures.
    pub fn with_pressures(config: TwinConfig, p: Vec<f64>, p_s: f64) -> Result<Self> {
        ensure_valid(&config)?;
        let n = config.robot.n();
        if p.len() != 2 * n {
            return Err(Error::config(format!("expected {} bellows pressures, got {}", 2 * n, p.len())));
        }
        let variant = config.robot.variant();
        let mut state = RobotState::at_rest(n, variant, 0.0, p_s);
        if let ValveCommands::Pressure(pd) = &mut state.commands {
            pd.clone_from(&p);
        }
        state.p = p;
        Ok(Self {
            model: ChainModel::from_config(&config.robot),
            network: PneumaticNetwork::new(&config.robot, &state.p),
            p_source_d: config.robot.supply.p_source_d,
            last_flows: FlowReport::default(),
            state,
            config,
            steps: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.config.robot.n()
    }

    pub fn dt(&self) -> f64 {
        self.config.robot.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One closed-loop step towards the joint set points `q_d`.
    pub fn step(&mut self, q_d: &[f64]) -> Result<Commands> {
        let cmds = control_cycle(q_d, &mut self.state, &self.config.control, &self.config.robot)?;
        self.advance_plant(&cmds)?;
        Ok(cmds)
    }

    /// One open-loop step with externally chosen valve commands.
    pub fn step_open_loop(&mut self, cmds: &Commands) -> Result<()> {
        let n2 = 2 * self.n();
        match cmds {
            Commands::Pressures(p) if p.len() == n2 => {
                self.state.commands = ValveCommands::Pressure(p.clone());
            }
            Commands::Valves { u, .. } if u.len() == n2 => {
                self.state.commands = ValveCommands::Binary(u.clone());
            }
            _ => return Err(Error::config("open-loop command dimension mismatch")),
        }
        self.advance_plant(cmds)
    }

    /// Commands that close every valve: microvalves venting, proportional
    /// valves commanded to vent pressure.
    pub fn all_closed(&self) -> Commands {
        let n2 = 2 * self.n();
        match self.config.robot.variant() {
            Variant::Modular => Commands::Valves {
                u: vec![0; n2],
                duties: vec![0.0; n2],
            },
            Variant::SemiModular => Commands::Pressures(vec![0.0; n2]),
        }
    }

    fn advance_plant(&mut self, cmds: &Commands) -> Result<()> {
        let robot = &self.config.robot;
        let s = &mut self.state;
        self.last_flows = match cmds {
            Commands::Valves { u, .. } => {
                if robot.variant() != Variant::Modular {
                    return Err(Error::config("binary valve commands on a semi-modular chain"));
                }
                self.network.step_binary(robot, u, &mut s.p, &mut s.p_s, self.p_source_d)?
            }
            Commands::Pressures(p_d) => {
                if robot.variant() != Variant::SemiModular {
                    return Err(Error::config("pressure commands on a modular chain"));
                }
                self.network
                    .step_proportional(robot, p_d, &mut s.p, &mut s.p_s, self.p_source_d)?
            }
        };
        let tau: Vec<f64> = robot
            .actuators
            .iter()
            .enumerate()
            .map(|(i, a)| bellows_torque(s.p[2 * i], s.p[2 * i + 1], s.q[i], 0.0, &a.bellows))
            .collect();
        // damping is applied implicitly by the integrator
        step_dynamics(s, &tau, &self.model, robot.dt)?;
        if !s.p_s.is_finite() || s.p.iter().any(|p| !p.is_finite()) {
            return Err(Error::Fault {
                t: s.t,
                detail: "non-finite pressure".into(),
            });
        }
        self.steps += 1;
        s.t = self.steps as f64 * robot.dt;
        Ok(())
    }
}
