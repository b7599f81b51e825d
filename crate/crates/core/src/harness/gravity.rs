use crate::dynamics::{gravity_torques, ChainModel};
use crate::model::{BaseOrientation, RobotConfig, TwinConfig};

/// Longest chain tried when looking for the stacking limit.
pub const MAX_STACK_SEARCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMargin {
    /// Largest bellows torque, `g_tau·p_max`, N·m.
    pub available: f64,
    /// Gravity load magnitude at q = 0, N·m.
    pub load: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GravityMargin {
    pub orientation: BaseOrientation,
    pub joints: Vec<JointMargin>,
    /// Longest chain (last actuator repeated) whose joints all keep a
    /// positive margin. `None` when no limit was found up to
    /// [`MAX_STACK_SEARCH`].
    pub max_stackable: Option<usize>,
}

impl GravityMargin {
    pub fn all_positive(&self) -> bool {
        self.joints.iter().all(|j| j.margin > 0.0)
    }
}

fn joint_margins(robot: &RobotConfig, orientation: BaseOrientation) -> Vec<JointMargin> {
    let model = ChainModel::with_orientation(robot, orientation);
    let tau = gravity_torques(&vec![0.0; robot.n()], &model);
    robot
        .actuators
        .iter()
        .zip(tau)
        .map(|(a, t)| {
            let available = a.bellows.g_tau * a.bellows.p_max;
            let load = t.abs();
            JointMargin {
                available,
                load,
                margin: available - load,
            }
        })
        .collect()
}

/// Torque margin of every joint against gravity with the chain straight at
/// q = 0 in the given orientation.
pub fn gravity_margin(config: &TwinConfig, orientation: BaseOrientation) -> GravityMargin {
    let robot = &config.robot;
    let joints = joint_margins(robot, orientation);

    let mut longer = robot.clone();
    let mut max_stackable = None;
    if let Some(last) = robot.actuators.last().cloned() {
        longer.actuators.truncate(1);
        for n in 1..=MAX_STACK_SEARCH {
            if n > 1 {
                let next = robot.actuators.get(n - 1).cloned().unwrap_or_else(|| last.clone());
                longer.actuators.push(next);
            }
            if joint_margins(&longer, orientation).iter().any(|j| j.margin <= 0.0) {
                max_stackable = Some(n - 1);
                break;
            }
        }
    }

    GravityMargin {
        orientation,
        joints,
        max_stackable,
    }
}
