//! Antagonistic bellows torque and planar serial-chain dynamics.
//!
//! Each actuator is a rigid link of length `height` with its mass lumped at
//! mid-height. Joint `i` sits at the base of link `i`. Absolute link angles
//! are measured from the base direction (straight up or horizontal) and
//! accumulate along the chain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{BaseOrientation, BellowsSpec, RobotConfig, RobotState};

/// Hall encoder resolution, degrees.
pub const ENCODER_RESOLUTION_DEG: f64 = 0.09;

/// Joint torque produced by one antagonistic bellows pair.
///
/// Actuation follows the pressure difference; the joint spring stiffens with
/// the mean pressure.
pub fn bellows_torque(p1: f64, p2: f64, q: f64, qdot: f64, spec: &BellowsSpec) -> f64 {
    let mean = (p1 + p2) / 2.0;
    spec.g_tau * (p1 - p2) - (spec.k0 + spec.k1 * mean) * q - spec.damping * qdot
}

/// Joint stiffness `-dτ/dq` at a given mean pressure.
pub fn joint_stiffness(mean_p: f64, spec: &BellowsSpec) -> f64 {
    spec.k0 + spec.k1 * mean_p
}

/// Quantizes an angle to the nearest encoder step, half away from zero.
pub fn encoder_read(q: f64) -> f64 {
    // f64::round rounds half away from zero
    let steps = (q.to_degrees() / ENCODER_RESOLUTION_DEG).round();
    (steps * ENCODER_RESOLUTION_DEG).to_radians()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub com_offsets: Vec<f64>,
    pub q_max: Vec<f64>,
    /// Viscous joint damping, N·m·s/rad.
    pub damping: Vec<f64>,
    pub gravity: f64,
    pub base: BaseOrientation,
}

/// Positions of every joint and every lumped mass for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPose {
    pub joints: Vec<[f64; 2]>,
    pub masses: Vec<[f64; 2]>,
}

impl ChainModel {
    /// Links taken from the actuator specs. Alternating-orthogonal axes are
    /// treated as a planar chain, the worst-case gravity projection.
    pub fn from_config(config: &RobotConfig) -> Self {
        Self::with_orientation(config, config.base_orientation)
    }

    pub fn with_orientation(config: &RobotConfig, base: BaseOrientation) -> Self {
        let a = &config.actuators;
        Self {
            masses: a.iter().map(|x| x.mass).collect(),
            lengths: a.iter().map(|x| x.height).collect(),
            com_offsets: a.iter().map(|x| x.height / 2.0).collect(),
            q_max: a.iter().map(|x| x.q_max).collect(),
            damping: a.iter().map(|x| x.bellows.damping).collect(),
            gravity: config.gravity,
            base,
        }
    }

    /// `n` identical undamped links.
    pub fn uniform(n: usize, mass: f64, length: f64, gravity: f64, base: BaseOrientation) -> Self {
        Self {
            masses: vec![mass; n],
            lengths: vec![length; n],
            com_offsets: vec![length / 2.0; n],
            q_max: vec![f64::INFINITY; n],
            damping: vec![0.0; n],
            gravity,
            base,
        }
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub(crate) fn base_dir(&self) -> [f64; 2] {
        match self.base {
            BaseOrientation::VerticalUp => [0.0, 1.0],
            BaseOrientation::Horizontal => [1.0, 0.0],
        }
    }

    pub fn pose(&self, q: &[f64]) -> ChainPose {
        let [bx, by] = self.base_dir();
        let mut joints = Vec::with_capacity(self.n());
        let mut masses = Vec::with_capacity(self.n());
        let (mut x, mut y, mut phi) = (0.0, 0.0, 0.0);
        for i in 0..self.n() {
            phi += q[i];
            let (s, c) = phi.sin_cos();
            let (dx, dy) = (bx * c - by * s, bx * s + by * c);
            joints.push([x, y]);
            masses.push([x + self.com_offsets[i] * dx, y + self.com_offsets[i] * dy]);
            x += self.lengths[i] * dx;
            y += self.lengths[i] * dy;
        }
        ChainPose { joints, masses }
    }

    /// Gravitational potential energy, zero at the base height.
    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        let pose = self.pose(q);
        self.masses
            .iter()
            .zip(&pose.masses)
            .map(|(m, r)| m * self.gravity * r[1])
            .sum()
    }

    /// Joint-space inertia of the lumped point masses.
    pub fn mass_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let pose = self.pose(q);
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let r = pose.masses[j];
            for a in 0..=j {
                let da = [r[0] - pose.joints[a][0], r[1] - pose.joints[a][1]];
                for b in 0..=j {
                    let db = [r[0] - pose.joints[b][0], r[1] - pose.joints[b][1]];
                    m[(a, b)] += self.masses[j] * (da[0] * db[0] + da[1] * db[1]);
                }
            }
        }
        m
    }
}

/// Gravity load on every joint: the torque the actuators must supply to hold
/// the pose, `∂V/∂q`.
///
/// Tip-to-base recursion over distal mass and first moment, so each joint
/// costs O(1).
pub fn gravity_torques(q: &[f64], model: &ChainModel) -> Vec<f64> {
    let pose = model.pose(q);
    let mut out = vec![0.0; model.n()];
    let (mut mass, mut moment) = (0.0, 0.0);
    for i in (0..model.n()).rev() {
        mass += model.masses[i];
        moment += model.masses[i] * pose.masses[i][0];
        out[i] = model.gravity * (moment - mass * pose.joints[i][0]);
    }
    out
}

/// Coriolis and centrifugal torques `h(q, q̇)`, so that the equations of
/// motion read `M·q̈ + h + τ_g = τ`.
///
/// Each lumped mass sees the centripetal acceleration of every link below
/// it, `-Σ l_k·φ̇_k²·e(φ_k)`; `h_a` is that acceleration mapped back through
/// the Jacobian column of joint `a`.
pub fn velocity_torques(q: &[f64], qdot: &[f64], model: &ChainModel) -> Vec<f64> {
    let n = model.n();
    let pose = model.pose(q);
    let [bx, by] = model.base_dir();
    let (mut phi, mut rate) = (0.0, 0.0);
    let mut dirs = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    for i in 0..n {
        phi += q[i];
        rate += qdot[i];
        let (s, c) = phi.sin_cos();
        dirs.push([bx * c - by * s, bx * s + by * c]);
        rates.push(rate);
    }
    let mut h = vec![0.0; n];
    let mut acc = [0.0; 2];
    for j in 0..n {
        // centripetal acceleration of mass j
        let w2 = rates[j] * rates[j];
        let cj = [
            acc[0] - model.com_offsets[j] * w2 * dirs[j][0],
            acc[1] - model.com_offsets[j] * w2 * dirs[j][1],
        ];
        let r = pose.masses[j];
        for a in 0..=j {
            let d = [r[0] - pose.joints[a][0], r[1] - pose.joints[a][1]];
            // Jacobian column of joint a for mass j is d rotated by +90°
            h[a] += model.masses[j] * (-d[1] * cj[0] + d[0] * cj[1]);
        }
        acc[0] -= model.lengths[j] * w2 * dirs[j][0];
        acc[1] -= model.lengths[j] * w2 * dirs[j][1];
    }
    h
}

/// Kinetic energy `½ q̇ᵀ M q̇`.
pub fn kinetic_energy(q: &[f64], qdot: &[f64], model: &ChainModel) -> f64 {
    let m = model.mass_matrix(q);
    let v = DVector::from_column_slice(qdot);
    0.5 * v.dot(&(&m * &v))
}

/// Semi-implicit Euler step of the chain under actuator torques `tau_act`
/// (bellows pressure and spring torque, without damping).
///
/// The model's viscous damping is taken at the new velocity,
/// `(M + dt·C)·q̇' = M·q̇ + dt·(τ − h − τ_g)`. The distal links have so
/// little inertia that an explicit damping term would diverge at 1 ms.
///
/// Joints that would pass their limit stop inelastically. Within the step
/// they are driven onto the limit and the other joints are solved with that
/// motion prescribed; the impact then removes their velocity, with the
/// remaining joints keeping the momentum the stop does not absorb.
pub fn step_dynamics(state: &mut RobotState, tau_act: &[f64], model: &ChainModel, dt: f64) -> Result<()> {
    let n = model.n();
    if tau_act.len() != n || state.q.len() != n {
        return Err(Error::config("torque/state dimension mismatch"));
    }
    let t = state.t;
    let grav = gravity_torques(&state.q, model);
    let h = velocity_torques(&state.q, &state.qdot, model);
    let m = model.mass_matrix(&state.q);
    let momentum = &m * DVector::from_column_slice(&state.qdot);
    let b = DVector::from_fn(n, |i, _| momentum[i] + dt * (tau_act[i] - grav[i] - h[i]));
    let mut md = m.clone();
    for i in 0..n {
        md[(i, i)] += dt * model.damping[i];
    }

    // limit each stopped joint lands on
    let mut stop: Vec<Option<f64>> = vec![None; n];
    let mut qdot = vec![0.0; n];
    loop {
        for i in 0..n {
            if let Some(lim) = stop[i] {
                qdot[i] = (lim - state.q[i]) / dt;
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| stop[i].is_none()).collect();
        let rhs = DVector::from_fn(free.len(), |r, _| {
            let i = free[r];
            b[i] - (0..n).filter(|&j| stop[j].is_some()).map(|j| md[(i, j)] * qdot[j]).sum::<f64>()
        });
        for (k, v) in solve_sub(&md, &free, rhs, t)?.iter().enumerate() {
            qdot[free[k]] = *v;
        }
        let mut hit = false;
        for &i in &free {
            let q = state.q[i] + dt * qdot[i];
            if !(q.is_finite() && qdot[i].is_finite()) {
                return Err(Error::Fault {
                    t,
                    detail: format!("joint {} diverged (q = {q}, qdot = {})", i + 1, qdot[i]),
                });
            }
            if q.abs() > model.q_max[i] {
                stop[i] = Some(model.q_max[i].copysign(q));
                hit = true;
            }
        }
        if !hit {
            break;
        }
    }

    let free: Vec<usize> = (0..n).filter(|&i| stop[i].is_none()).collect();
    let mut after = qdot.clone();
    if free.len() < n {
        // impulse from the stops: free joints take over the coupled momentum
        let rhs = DVector::from_fn(free.len(), |r, _| {
            let i = free[r];
            (0..n).filter(|&j| stop[j].is_some()).map(|j| m[(i, j)] * qdot[j]).sum::<f64>()
        });
        for (k, v) in solve_sub(&m, &free, rhs, t)?.iter().enumerate() {
            after[free[k]] += *v;
        }
    }
    for i in 0..n {
        match stop[i] {
            Some(lim) => {
                state.q[i] = lim;
                state.qdot[i] = 0.0;
            }
            None => {
                state.q[i] += dt * qdot[i];
                state.qdot[i] = after[i];
            }
        }
    }
    Ok(())
}

/// Solves the block of `m` on the joints in `idx` against `rhs`.
fn solve_sub(m: &DMatrix<f64>, idx: &[usize], rhs: DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if idx.is_empty() {
        return Ok(rhs);
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])]);
    sub.cholesky().map(|c| c.solve(&rhs)).ok_or_else(|| Error::Fault {
        t,
        detail: "mass matrix is not positive definite".into(),
    })
}
