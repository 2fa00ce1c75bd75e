//! Sagittal-plane quadruped dynamics.
//!
//! The robot is a floating base (x, z, pitch) carrying four two-link legs
//! whose hips all lie in the same vertical plane; front and hind pairs share
//! a hip position but are actuated independently. Generalized coordinates
//! are `[x, z, pitch, hip_0, knee_0, .., hip_3, knee_3]`.
//!
//! Equations of motion are assembled by projecting each body's Newton-Euler
//! equations through its Jacobian, `M(q) qdd = tau + sum J_c^T f_c - b(q, qd)`,
//! and integrated with semi-implicit Euler. Ground contact is a penalty
//! spring-damper on the foot points with a stick/slip Coulomb friction anchor.
//!
//! Angles are right-handed about +y: positive pitch lowers the nose.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::{forward_kinematics, inverse_kinematics, LegGeometry};
use crate::terrain::{Ground, TerrainSpec, GAP_FLOOR};
use crate::{NUM_JOINTS, NUM_LEGS};

/// Number of generalized coordinates.
pub const NDOF: usize = 3 + NUM_JOINTS;
const NBODIES: usize = 1 + 2 * NUM_LEGS;

/// Base height below which the robot counts as fallen (m).
pub const FALL_HEIGHT: f64 = 0.15;

type Vec2 = [f64; 2];
type MassMatrix = SMatrix<f64, NDOF, NDOF>;
type GenVec = SVector<f64, NDOF>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotModel {
    pub base_mass: f64,
    /// Pitch inertia of the base about its centre of mass (kg m^2).
    pub base_inertia: f64,
    pub thigh_mass: f64,
    pub thigh_inertia: f64,
    /// Distance from the hip to the thigh centre of mass along the link (m).
    pub thigh_com: f64,
    pub shank_mass: f64,
    pub shank_inertia: f64,
    /// Distance from the knee to the shank centre of mass along the link (m).
    pub shank_com: f64,
    pub legs: LegGeometry,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub gravity: f64,
    /// Integration substeps per physics step.
    pub substeps: usize,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_mass: 7.2,
            base_inertia: 0.10,
            thigh_mass: 1.0,
            thigh_inertia: 0.004,
            thigh_com: 0.05,
            shank_mass: 0.2,
            shank_inertia: 0.0012,
            shank_com: 0.1,
            legs: LegGeometry::default(),
            kp: 100.0,
            kd: 2.0,
            torque_limit: 33.5,
            friction: 0.8,
            contact_stiffness: 1e4,
            contact_damping: 100.0,
            tangential_stiffness: 1e4,
            tangential_damping: 50.0,
            gravity: 9.81,
            substeps: 2,
        }
    }
}

impl RobotModel {
    pub fn total_mass(&self) -> f64 {
        self.base_mass + NUM_LEGS as f64 * (self.thigh_mass + self.shank_mass)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("robot.base_mass", self.base_mass),
            ("robot.base_inertia", self.base_inertia),
            ("robot.thigh_mass", self.thigh_mass),
            ("robot.thigh_inertia", self.thigh_inertia),
            ("robot.shank_mass", self.shank_mass),
            ("robot.shank_inertia", self.shank_inertia),
            ("robot.torque_limit", self.torque_limit),
            ("robot.contact_stiffness", self.contact_stiffness),
            ("robot.tangential_stiffness", self.tangential_stiffness),
            ("robot.gravity", self.gravity),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be finite and > 0"));
            }
        }
        let non_negative = [
            ("robot.kp", self.kp),
            ("robot.kd", self.kd),
            ("robot.friction", self.friction),
            ("robot.contact_damping", self.contact_damping),
            ("robot.tangential_damping", self.tangential_damping),
            ("robot.thigh_com", self.thigh_com),
            ("robot.shank_com", self.shank_com),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be finite and >= 0"));
            }
        }
        if self.substeps == 0 {
            return Err(Error::config("robot.substeps", "must be >= 1"));
        }
        self.legs.validate()
    }

    fn body_mass(&self, b: usize) -> f64 {
        match b {
            0 => self.base_mass,
            b if b % 2 == 1 => self.thigh_mass,
            _ => self.shank_mass,
        }
    }

    fn body_inertia(&self, b: usize) -> f64 {
        match b {
            0 => self.base_inertia,
            b if b % 2 == 1 => self.thigh_inertia,
            _ => self.shank_inertia,
        }
    }
}

/// Which solid face a foot is pushing against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Top,
    /// Vertical wall facing -x (the gap lies behind the foot).
    WallFacingBack,
    /// Vertical wall facing +x (the gap lies ahead of the foot).
    WallFacingForward,
    GapFloor,
}

impl Face {
    fn normal(self) -> Vec2 {
        match self {
            Face::Top | Face::GapFloor => [0.0, 1.0],
            Face::WallFacingBack => [-1.0, 0.0],
            Face::WallFacingForward => [1.0, 0.0],
        }
    }
}

/// Friction stick point for a foot in contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub point: Vec2,
    pub face: Face,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Base `[x, z, pitch]`.
    pub base_pos: [f64; 3],
    /// Base `[vx, vz, pitch_rate]` in the world frame.
    pub base_vel: [f64; 3],
    /// Joint angles, hip and knee per leg.
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub contact: [bool; NUM_LEGS],
    /// Normal contact force per foot (N).
    pub normal_force: [f64; NUM_LEGS],
    /// Tangential (friction) force per foot (N).
    pub friction_force: [f64; NUM_LEGS],
    /// Foot is over a gap and below ground level.
    pub foot_in_gap: [bool; NUM_LEGS],
    pub anchors: [Option<Anchor>; NUM_LEGS],
    pub time: f64,
}

/// World-frame kinematics of every body at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Kinematics {
    pub hips: [Vec2; NUM_LEGS],
    pub knees: [Vec2; NUM_LEGS],
    pub feet: [Vec2; NUM_LEGS],
    /// Centres of mass: base, then thigh/shank per leg.
    coms: [Vec2; NBODIES],
    base: Vec2,
}

#[inline]
fn rot(a: f64, v: Vec2) -> Vec2 {
    let (s, c) = a.sin_cos();
    [v[0] * c + v[1] * s, -v[0] * s + v[1] * c]
}

/// Derivative of a rotated vector with respect to its angle.
#[inline]
fn perp(v: Vec2) -> Vec2 {
    [v[1], -v[0]]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl SimState {
    /// Robot standing with every foot at the given hip-frame position,
    /// lowered so the lowest foot touches `z = 0`.
    pub fn standing(model: &RobotModel, feet: &[(f64, f64); NUM_LEGS], x: f64) -> Result<Self> {
        let mut q = [0.0; NUM_JOINTS];
        let mut lowest: f64 = 0.0;
        for (i, &(fx, fz)) in feet.iter().enumerate() {
            let a = inverse_kinematics(fx, fz, &model.legs)?;
            q[2 * i] = a.hip;
            q[2 * i + 1] = a.knee;
            let (_, z) = forward_kinematics(a.hip, a.knee, &model.legs);
            lowest = lowest.min(z);
        }
        Ok(Self {
            base_pos: [x, -lowest, 0.0],
            base_vel: [0.0; 3],
            q,
            qd: [0.0; NUM_JOINTS],
            contact: [false; NUM_LEGS],
            normal_force: [0.0; NUM_LEGS],
            friction_force: [0.0; NUM_LEGS],
            foot_in_gap: [false; NUM_LEGS],
            anchors: [None; NUM_LEGS],
            time: 0.0,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos
            .iter()
            .chain(&self.base_vel)
            .chain(&self.q)
            .chain(&self.qd)
            .all(|v| v.is_finite())
    }

    pub fn coords(&self) -> GenVec {
        let mut g = GenVec::zeros();
        g.fixed_rows_mut::<3>(0).copy_from_slice(&self.base_pos);
        g.fixed_rows_mut::<NUM_JOINTS>(3).copy_from_slice(&self.q);
        g
    }

    pub fn velocities(&self) -> GenVec {
        let mut g = GenVec::zeros();
        g.fixed_rows_mut::<3>(0).copy_from_slice(&self.base_vel);
        g.fixed_rows_mut::<NUM_JOINTS>(3).copy_from_slice(&self.qd);
        g
    }

    pub fn kinematics(&self, model: &RobotModel) -> Kinematics {
        let base = [self.base_pos[0], self.base_pos[1]];
        let pitch = self.base_pos[2];
        let mut k = Kinematics {
            hips: [[0.0; 2]; NUM_LEGS],
            knees: [[0.0; 2]; NUM_LEGS],
            feet: [[0.0; 2]; NUM_LEGS],
            coms: [[0.0; 2]; NBODIES],
            base,
        };
        k.coms[0] = base;
        let g = &model.legs;
        for i in 0..NUM_LEGS {
            let hip = add(base, rot(pitch, [g.hip_x[i], 0.0]));
            let a1 = pitch + self.q[2 * i];
            let a2 = a1 + self.q[2 * i + 1];
            let knee = add(hip, rot(a1, [0.0, -g.l1]));
            k.hips[i] = hip;
            k.knees[i] = knee;
            k.feet[i] = add(knee, rot(a2, [0.0, -g.l2]));
            k.coms[1 + 2 * i] = add(hip, rot(a1, [0.0, -model.thigh_com]));
            k.coms[2 + 2 * i] = add(knee, rot(a2, [0.0, -model.shank_com]));
        }
        k
    }

    /// Absolute angular rates of every body.
    fn body_rates(&self) -> [f64; NBODIES] {
        let w0 = self.base_vel[2];
        let mut w = [w0; NBODIES];
        for i in 0..NUM_LEGS {
            w[1 + 2 * i] = w0 + self.qd[2 * i];
            w[2 + 2 * i] = w0 + self.qd[2 * i] + self.qd[2 * i + 1];
        }
        w
    }

    /// World positions of the feet.
    pub fn feet(&self, model: &RobotModel) -> [Vec2; NUM_LEGS] {
        self.kinematics(model).feet
    }

    pub fn foot_velocities(&self, model: &RobotModel) -> [Vec2; NUM_LEGS] {
        let k = self.kinematics(model);
        let qd = self.velocities();
        std::array::from_fn(|i| {
            let jac = point_jacobian(&k, 2 + 2 * i, k.feet[i]);
            jac.apply(&qd)
        })
    }

    /// Centre of mass of the whole robot.
    pub fn com(&self, model: &RobotModel) -> Vec2 {
        let k = self.kinematics(model);
        let mut acc = [0.0; 2];
        for b in 0..NBODIES {
            acc = add(acc, scale(k.coms[b], model.body_mass(b)));
        }
        scale(acc, 1.0 / model.total_mass())
    }

    /// Kinetic and potential (relative to z = 0) energy.
    pub fn energy(&self, model: &RobotModel) -> (f64, f64) {
        let k = self.kinematics(model);
        let qd = self.velocities();
        let rates = self.body_rates();
        let mut kin = 0.0;
        let mut pot = 0.0;
        for b in 0..NBODIES {
            let v = point_jacobian(&k, b, k.coms[b]).apply(&qd);
            let m = model.body_mass(b);
            kin += 0.5 * (m * dot(v, v) + model.body_inertia(b) * rates[b] * rates[b]);
            pot += m * model.gravity * k.coms[b][1];
        }
        (kin, pot)
    }

    /// Forward velocity and pitch rate in the body frame: `[v_forward, v_up, pitch_rate]`.
    pub fn body_velocity(&self) -> [f64; 3] {
        let v = rot(-self.base_pos[2], [self.base_vel[0], self.base_vel[1]]);
        [v[0], v[1], self.base_vel[2]]
    }

    fn set_from(&mut self, g: &GenVec, gd: &GenVec) {
        self.base_pos.copy_from_slice(g.fixed_rows::<3>(0).as_slice());
        self.q.copy_from_slice(g.fixed_rows::<NUM_JOINTS>(3).as_slice());
        self.base_vel.copy_from_slice(gd.fixed_rows::<3>(0).as_slice());
        self.qd.copy_from_slice(gd.fixed_rows::<NUM_JOINTS>(3).as_slice());
    }
}

/// Jacobian of a point rigidly attached to body `b`: only the x, z, pitch
/// and the joints between the base and the body have non-zero columns.
struct PointJacobian {
    /// Columns for pitch, hip, knee (the latter two only if in-chain).
    cols: [Vec2; 3],
    leg: Option<usize>,
    /// Number of leg joints in the chain (0, 1 or 2).
    depth: usize,
}

impl PointJacobian {
    fn apply(&self, qd: &GenVec) -> Vec2 {
        let mut v = [qd[0], qd[1]];
        v = add(v, scale(self.cols[0], qd[2]));
        if let Some(i) = self.leg {
            for d in 0..self.depth {
                v = add(v, scale(self.cols[1 + d], qd[3 + 2 * i + d]));
            }
        }
        v
    }

    /// Generalized force of a world force `f` applied at the point.
    fn add_transpose(&self, f: Vec2, out: &mut GenVec) {
        out[0] += f[0];
        out[1] += f[1];
        out[2] += dot(self.cols[0], f);
        if let Some(i) = self.leg {
            for d in 0..self.depth {
                out[3 + 2 * i + d] += dot(self.cols[1 + d], f);
            }
        }
    }

    fn indices(&self) -> ([usize; 5], usize) {
        let mut idx = [0, 1, 2, 0, 0];
        let mut n = 3;
        if let Some(i) = self.leg {
            for d in 0..self.depth {
                idx[n] = 3 + 2 * i + d;
                n += 1;
            }
        }
        (idx, n)
    }

    fn column(&self, slot: usize) -> Vec2 {
        match slot {
            0 => [1.0, 0.0],
            1 => [0.0, 1.0],
            s => self.cols[s - 2],
        }
    }
}

fn point_jacobian(k: &Kinematics, body: usize, p: Vec2) -> PointJacobian {
    let mut cols = [[0.0; 2]; 3];
    cols[0] = perp(sub(p, k.base));
    if body == 0 {
        return PointJacobian {
            cols,
            leg: None,
            depth: 0,
        };
    }
    let leg = (body - 1) / 2;
    let depth = if body % 2 == 1 { 1 } else { 2 };
    cols[1] = perp(sub(p, k.hips[leg]));
    if depth == 2 {
        cols[2] = perp(sub(p, k.knees[leg]));
    }
    PointJacobian {
        cols,
        leg: Some(leg),
        depth,
    }
}

/// Velocity-product acceleration of a body point (acceleration with `qdd = 0`).
fn bias_acceleration(k: &Kinematics, body: usize, p: Vec2, rates: &[f64; NBODIES]) -> Vec2 {
    if body == 0 {
        return [0.0; 2];
    }
    let leg = (body - 1) / 2;
    let w0 = rates[0];
    let w1 = rates[1 + 2 * leg];
    let mut a = scale(sub(k.hips[leg], k.base), -w0 * w0);
    if body % 2 == 1 {
        a = add(a, scale(sub(p, k.hips[leg]), -w1 * w1));
    } else {
        let w2 = rates[2 + 2 * leg];
        a = add(a, scale(sub(k.knees[leg], k.hips[leg]), -w1 * w1));
        a = add(a, scale(sub(p, k.knees[leg]), -w2 * w2));
    }
    a
}

/// Joint PD torque, clamped to the torque limit.
pub fn pd_torque(
    q_des: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    model: &RobotModel,
) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|j| {
        let tau = model.kp * (q_des[j] - q[j]) - model.kd * qd[j];
        tau.clamp(-model.torque_limit, model.torque_limit)
    })
}

/// Robot has fallen: base height strictly below 15 cm.
pub fn fall_check(state: &SimState) -> bool {
    state.base_pos[1] < FALL_HEIGHT
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContactForce {
    pub force: Vec2,
    pub normal: f64,
    pub tangential: f64,
}

/// Penetration face and depth of a point, if it is inside solid ground.
pub fn penetration(terrain: &TerrainSpec, p: Vec2) -> Option<(Face, f64)> {
    let [x, z] = p;
    match terrain.ground_query(x) {
        Ground::Surface { height } => {
            if z >= height {
                return None;
            }
            let mut best = (Face::Top, height - z);
            if z > GAP_FLOOR {
                let (left, right) = terrain.walls_around(x);
                if let Some(e) = left {
                    let d = x - e;
                    if d < best.1 {
                        best = (Face::WallFacingBack, d);
                    }
                }
                if let Some(s) = right {
                    let d = s - x;
                    if d < best.1 {
                        best = (Face::WallFacingForward, d);
                    }
                }
            }
            Some(best)
        }
        Ground::Gap { .. } => (z < GAP_FLOOR).then(|| (Face::GapFloor, GAP_FLOOR - z)),
    }
}

/// Spring-damper normal force with stick/slip Coulomb friction.
pub fn contact_force(
    terrain: &TerrainSpec,
    model: &RobotModel,
    p: Vec2,
    v: Vec2,
    anchor: &mut Option<Anchor>,
) -> ContactForce {
    let Some((face, depth)) = penetration(terrain, p) else {
        *anchor = None;
        return ContactForce::default();
    };
    let n = face.normal();
    let t = [n[1], -n[0]];
    let vn = dot(v, n);
    let normal = (model.contact_stiffness * depth - model.contact_damping * vn).max(0.0);
    let a = match anchor {
        Some(a) if a.face == face => *a,
        _ => Anchor { point: p, face },
    };
    let disp = dot(sub(p, a.point), t);
    let mut ft = -model.tangential_stiffness * disp - model.tangential_damping * dot(v, t);
    let limit = model.friction * normal;
    let mut a = a;
    if ft.abs() > limit {
        ft = limit.copysign(ft);
        // slide the anchor so the spring alone carries the limit force
        a.point = add(p, scale(t, ft / model.tangential_stiffness));
    }
    *anchor = Some(a);
    ContactForce {
        force: add(scale(n, normal), scale(t, ft)),
        normal,
        tangential: ft,
    }
}

/// Generalized accelerations for the given state, torques and contact forces.
fn accelerations(
    state: &SimState,
    k: &Kinematics,
    model: &RobotModel,
    torque: &[f64; NUM_JOINTS],
    foot_forces: &[Vec2; NUM_LEGS],
) -> Result<GenVec> {
    let rates = state.body_rates();
    let mut m = MassMatrix::zeros();
    let mut rhs = GenVec::zeros();
    for (j, tau) in torque.iter().enumerate() {
        rhs[3 + j] = *tau;
    }
    for b in 0..NBODIES {
        let mass = model.body_mass(b);
        let p = k.coms[b];
        let jac = point_jacobian(k, b, p);
        let (idx, n) = jac.indices();
        for r in 0..n {
            let cr = jac.column(r);
            for c in r..n {
                let v = mass * dot(cr, jac.column(c));
                m[(idx[r], idx[c])] += v;
                if r != c {
                    m[(idx[c], idx[r])] += v;
                }
            }
        }
        // rotational inertia: angular rate is the sum of pitch and chain joint rates
        let inertia = model.body_inertia(b);
        for r in 2..n {
            for c in 2..n {
                m[(idx[r], idx[c])] += inertia;
            }
        }
        let bias = bias_acceleration(k, b, p, &rates);
        let f = [-mass * bias[0], -mass * (model.gravity + bias[1])];
        jac.add_transpose(f, &mut rhs);
    }
    for (i, f) in foot_forces.iter().enumerate() {
        if f[0] != 0.0 || f[1] != 0.0 {
            point_jacobian(k, 2 + 2 * i, k.feet[i]).add_transpose(*f, &mut rhs);
        }
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::PhysicsFault("mass matrix not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Advances the simulation by `dt` with joint torques held constant.
pub fn step_physics(
    state: &SimState,
    torque: &[f64; NUM_JOINTS],
    terrain: &TerrainSpec,
    model: &RobotModel,
    dt: f64,
) -> Result<SimState> {
    if !state.is_finite() {
        return Err(Error::PhysicsFault("non-finite state".into()));
    }
    let h = dt / model.substeps as f64;
    let mut s = *state;
    let mut g = s.coords();
    let mut gd = s.velocities();
    for _ in 0..model.substeps {
        let k = s.kinematics(model);
        let mut forces = [[0.0; 2]; NUM_LEGS];
        for i in 0..NUM_LEGS {
            let v = point_jacobian(&k, 2 + 2 * i, k.feet[i]).apply(&gd);
            let c = contact_force(terrain, model, k.feet[i], v, &mut s.anchors[i]);
            forces[i] = c.force;
            s.normal_force[i] = c.normal;
            s.friction_force[i] = c.tangential;
            s.contact[i] = c.normal > 0.0;
        }
        let qdd = accelerations(&s, &k, model, torque, &forces)?;
        gd += qdd * h;
        g += gd * h;
        s.set_from(&g, &gd);
    }
    s.time = state.time + dt;
    if !s.is_finite() {
        return Err(Error::PhysicsFault(format!("non-finite state at t = {:.3}", s.time)));
    }
    let feet = s.feet(model);
    for i in 0..NUM_LEGS {
        s.foot_in_gap[i] = feet[i][1] < 0.0 && terrain.gap_index(feet[i][0]).is_some();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Gap;

    fn model() -> RobotModel {
        RobotModel::default()
    }

    #[test]
    fn pd_torque_cases() {
        let m = model();
        let q = [0.3; NUM_JOINTS];
        let zero = [0.0; NUM_JOINTS];
        assert_eq!(pd_torque(&q, &q, &zero, &m), [0.0; NUM_JOINTS]);
        let des = [0.4; NUM_JOINTS];
        let t = pd_torque(&des, &q, &zero, &m);
        assert!(t.iter().all(|v| (v - 10.0).abs() < 1e-9));
        let t = pd_torque(&[100.0; NUM_JOINTS], &q, &zero, &m);
        assert!(t.iter().all(|&v| v == m.torque_limit));
        let t = pd_torque(&[-100.0; NUM_JOINTS], &q, &zero, &m);
        assert!(t.iter().all(|&v| v == -m.torque_limit));
    }

    #[test]
    fn fall_check_is_strict() {
        let mut s = SimState::standing(&model(), &[(0.0, -0.25); 4], 0.0).unwrap();
        s.base_pos[1] = 0.14;
        assert!(fall_check(&s));
        s.base_pos[1] = 0.30;
        assert!(!fall_check(&s));
        s.base_pos[1] = 0.15;
        assert!(!fall_check(&s));
    }

    #[test]
    fn standing_pose_touches_ground() {
        let m = model();
        let s = SimState::standing(&m, &[(0.0, -0.25); 4], 0.0).unwrap();
        assert!((s.base_pos[1] - 0.25).abs() < 1e-12);
        for f in s.feet(&m) {
            assert!(f[1].abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let m = model();
        let mut s = SimState::standing(&m, &[(0.05, -0.22), (-0.03, -0.25), (0.0, -0.3), (0.02, -0.2)], 0.3)
            .unwrap();
        s.base_pos[2] = 0.2;
        let qd = [0.3, -0.2, 0.7, 1.0, -2.0, 0.5, 0.4, -0.6, 0.9, 1.1, -0.3];
        s.base_vel.copy_from_slice(&qd[..3]);
        s.qd.copy_from_slice(&qd[3..]);
        let v = s.foot_velocities(&m);
        let h = 1e-7;
        let mut fwd = s;
        for j in 0..3 {
            fwd.base_pos[j] += h * qd[j];
        }
        for j in 0..NUM_JOINTS {
            fwd.q[j] += h * qd[3 + j];
        }
        let f0 = s.feet(&m);
        let f1 = fwd.feet(&m);
        for i in 0..NUM_LEGS {
            for a in 0..2 {
                let fd = (f1[i][a] - f0[i][a]) / h;
                assert!((fd - v[i][a]).abs() < 1e-5, "leg {i} axis {a}: {fd} vs {}", v[i][a]);
            }
        }
    }

    #[test]
    fn mass_matrix_is_consistent_with_kinetic_energy() {
        let m = model();
        let mut s = SimState::standing(&m, &[(0.0, -0.25); 4], 0.0).unwrap();
        s.base_vel = [0.4, -0.1, 0.8];
        s.qd = [1.0, -1.0, 0.5, 0.2, -0.3, 0.6, 0.1, 0.0];
        let (ke, _) = s.energy(&m);
        // the same quantity through the assembled mass matrix
        let k = s.kinematics(&m);
        let rates = s.body_rates();
        let mut mm = MassMatrix::zeros();
        for b in 0..NBODIES {
            let jac = point_jacobian(&k, b, k.coms[b]);
            let (idx, n) = jac.indices();
            for r in 0..n {
                for c in 0..n {
                    mm[(idx[r], idx[c])] += m.body_mass(b) * dot(jac.column(r), jac.column(c));
                    if r >= 2 && c >= 2 {
                        mm[(idx[r], idx[c])] += m.body_inertia(b);
                    }
                }
            }
        }
        let _ = rates;
        let qd = s.velocities();
        let ke2 = 0.5 * (qd.transpose() * mm * qd)[(0, 0)];
        assert!((ke - ke2).abs() < 1e-12);
    }

    #[test]
    fn contact_over_gap_does_not_push() {
        let terrain = TerrainSpec {
            gaps: vec![Gap { start: 1.0, end: 1.2 }],
            total_length: 3.0,
            seed: 0,
        };
        let m = model();
        let mut anchor = None;
        let c = contact_force(&terrain, &m, [1.1, -0.05], [0.0, -1.0], &mut anchor);
        assert_eq!(c.normal, 0.0);
        assert!(anchor.is_none());
        let c = contact_force(&terrain, &m, [0.5, -0.004], [0.0, 0.0], &mut anchor);
        assert!((c.normal - 40.0).abs() < 1e-9);
        assert!(anchor.is_some());
    }

    #[test]
    fn wall_contact_pushes_horizontally() {
        let terrain = TerrainSpec {
            gaps: vec![Gap { start: 1.0, end: 1.2 }],
            total_length: 3.0,
            seed: 0,
        };
        let m = model();
        let mut anchor = None;
        // foot moved from inside the gap into the far wall
        let c = contact_force(&terrain, &m, [1.202, -0.05], [0.5, 0.0], &mut anchor);
        assert!(c.force[0] < 0.0);
        assert_eq!(anchor.unwrap().face, Face::WallFacingBack);
        // and into the near wall from the gap side
        let mut anchor = None;
        let c = contact_force(&terrain, &m, [0.998, -0.05], [-0.5, 0.0], &mut anchor);
        assert!(c.force[0] > 0.0);
    }

    #[test]
    fn friction_is_bounded_by_cone() {
        let terrain = TerrainSpec::flat();
        let m = model();
        let mut anchor = Some(Anchor {
            point: [0.0, 0.0],
            face: Face::Top,
        });
        let c = contact_force(&terrain, &m, [0.2, -0.003], [3.0, -0.1], &mut anchor);
        assert!(c.normal > 0.0);
        assert!(c.tangential.abs() <= m.friction * c.normal + 1e-12);
    }

    #[test]
    fn foot_over_gap_never_touches() {
        let m = model();
        let terrain = TerrainSpec {
            gaps: vec![Gap { start: -1.0, end: 1.0 }],
            total_length: 3.0,
            seed: 0,
        };
        // whole robot over a wide gap, falling
        let mut s = SimState::standing(&m, &[(0.0, -0.25); 4], 0.0).unwrap();
        let torque = [0.0; NUM_JOINTS];
        let mut saw_in_gap = false;
        for _ in 0..200 {
            s = step_physics(&s, &torque, &terrain, &m, 1e-3).unwrap();
            assert!(!s.contact.iter().any(|&c| c));
            saw_in_gap |= s.foot_in_gap.iter().all(|&g| g);
        }
        assert!(saw_in_gap);
    }

    #[test]
    fn non_finite_state_faults() {
        let m = model();
        let mut s = SimState::standing(&m, &[(0.0, -0.25); 4], 0.0).unwrap();
        s.qd[3] = f64::NAN;
        assert!(step_physics(&s, &[0.0; NUM_JOINTS], &TerrainSpec::flat(), &m, 1e-3).is_err());
    }

    #[test]
    fn step_is_deterministic() {
        let m = model();
        let s = SimState::standing(&m, &[(0.02, -0.25); 4], 0.0).unwrap();
        let tau = [1.0, -2.0, 0.5, 0.3, -0.2, 0.1, 2.0, -1.0];
        let a = step_physics(&s, &tau, &TerrainSpec::flat(), &m, 1e-3).unwrap();
        let b = step_physics(&s, &tau, &TerrainSpec::flat(), &m, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fast_foot_registers_penetration() {
        // 5 m/s downward at 1 ms: the foot moves 5 mm per step
        let m = model();
        let mut s = SimState::standing(&m, &[(0.0, -0.25); 4], 0.0).unwrap();
        s.base_pos[1] += 0.002;
        s.base_vel[1] = -5.0;
        let s1 = step_physics(&s, &[0.0; NUM_JOINTS], &TerrainSpec::flat(), &m, 1e-3).unwrap();
        let s2 = step_physics(&s1, &[0.0; NUM_JOINTS], &TerrainSpec::flat(), &m, 1e-3).unwrap();
        assert!(s2.contact.iter().all(|&c| c));
    }
}
