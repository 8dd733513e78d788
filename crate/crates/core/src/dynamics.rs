//! Joint-space dynamics of a tree of rigid plates connected by 1-DOF
//! revolute joints.
//!
//! The mesh is a kinematic tree rooted at an actuated base hinge. Each step
//! assembles the joint-space mass matrix from per-body Jacobians, adds the
//! velocity-product bias and external COM forces, and solves for joint
//! accelerations. Joint spring-damper torques (including hard-stop
//! penalties) are handled linearly-implicitly: their stiffness and damping
//! are folded into the left-hand side scaled by dt^2 and dt, which keeps
//! stiff stop penalties stable at the fixed step size.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

use crate::geometry::FeatherMesh;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("bodies must be topologically ordered (body {body} has parent {parent})")]
    BadOrdering { body: usize, parent: usize },
    #[error("joint-space mass matrix is not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("model must contain at least one body")]
    Empty,
}

/// Spring-damper law of a revolute joint, with optional travel limits
/// enforced by a penalty spring past the limit.
#[derive(Debug, Clone, Copy)]
pub struct JointLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub lower_limit: Option<f64>,
    pub upper_limit: Option<f64>,
    pub stop_stiffness: f64,
    pub stop_damping: f64,
}

impl JointLaw {
    /// Torque at (q, qd) plus the stiffness/damping actually active there,
    /// for the implicit left-hand-side terms.
    fn torque_and_gains(&self, q: f64, qd: f64) -> (f64, f64, f64) {
        let mut torque = -self.stiffness * q - self.damping * qd;
        let mut k = self.stiffness;
        let mut d = self.damping;
        let violation = match (self.lower_limit, self.upper_limit) {
            (Some(lo), _) if q < lo => Some(q - lo),
            (_, Some(hi)) if q > hi => Some(q - hi),
            _ => None,
        };
        if let Some(v) = violation {
            torque += -self.stop_stiffness * v - self.stop_damping * qd;
            k += self.stop_stiffness;
            d += self.stop_damping;
        }
        (torque, k, d)
    }
}

/// Rigid plate attached to its parent by a revolute joint at the body-frame
/// origin. `axis` is expressed in the parent frame at the rest pose (frames
/// are parallel at q = 0) and is invariant under the joint's own rotation.
#[derive(Debug, Clone)]
pub struct Body {
    pub parent: Option<usize>,
    pub anchor_in_parent: Vector3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub com: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub mass: f64,
    pub area: f64,
    pub volume: f64,
    pub inertia_com: Vector3<f64>,
    pub half_span: f64,
    pub half_chord: f64,
    pub joint: JointLaw,
}

/// Joint positions and velocities, one entry per body/joint.
#[derive(Debug, Clone)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl JointState {
    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            qd: vec![0.0; n],
        }
    }
}

/// How joint 0 (the base hinge) is driven during a solve.
#[derive(Debug, Clone, Copy)]
pub enum RootDrive {
    /// Base angle follows a prescribed trajectory; its acceleration for the
    /// current step is supplied and the joint is removed from the unknowns.
    Prescribed { qdd: f64 },
    /// Base hinge is an ordinary passive joint (used by tests).
    Free,
}

struct BodyKinematics {
    rot: Matrix3<f64>,
    pos: Vector3<f64>,
    omega: Vector3<f64>,
    vel_origin: Vector3<f64>,
    omegad_vp: Vector3<f64>,
    acc_origin_vp: Vector3<f64>,
    axis_world: Vector3<f64>,
    com_world: Vector3<f64>,
    vel_com: Vector3<f64>,
    acc_com_vp: Vector3<f64>,
    normal_world: Vector3<f64>,
    inertia_world: Matrix3<f64>,
}

impl BodyKinematics {
    fn zero() -> Self {
        Self {
            rot: Matrix3::identity(),
            pos: Vector3::zeros(),
            omega: Vector3::zeros(),
            vel_origin: Vector3::zeros(),
            omegad_vp: Vector3::zeros(),
            acc_origin_vp: Vector3::zeros(),
            axis_world: Vector3::zeros(),
            com_world: Vector3::zeros(),
            vel_com: Vector3::zeros(),
            acc_com_vp: Vector3::zeros(),
            normal_world: Vector3::zeros(),
            inertia_world: Matrix3::zeros(),
        }
    }
}

/// Tree multibody solver. Owns per-step workspaces so stepping allocates
/// nothing.
pub struct TreeDynamics {
    bodies: Vec<Body>,
    /// Joints on the path root -> body, ascending, per body.
    ancestors: Vec<Vec<usize>>,
    kin: Vec<BodyKinematics>,
    // Per-body Jacobian columns for its ancestors (flat, offset-indexed).
    jv: Vec<Vector3<f64>>,
    jw: Vec<Vector3<f64>>,
    iw_jw: Vec<Vector3<f64>>,
    anc_offset: Vec<usize>,
    // Solver workspaces.
    h: Vec<f64>,
    rhs: Vec<f64>,
    qdd: Vec<f64>,
    acc_com: Vec<Vector3<f64>>,
    /// Whether the last forward pass folded the root acceleration into the
    /// velocity-product terms (prescribed root).
    qdd_root_in_vp: bool,
}

impl TreeDynamics {
    pub fn new(bodies: Vec<Body>) -> Result<Self, DynamicsError> {
        if bodies.is_empty() {
            return Err(DynamicsError::Empty);
        }
        for (i, b) in bodies.iter().enumerate() {
            if let Some(p) = b.parent {
                if p >= i {
                    return Err(DynamicsError::BadOrdering { body: i, parent: p });
                }
            }
        }
        let n = bodies.len();
        let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(n);
        for (i, b) in bodies.iter().enumerate() {
            let mut path = match b.parent {
                Some(p) => ancestors[p].clone(),
                None => Vec::new(),
            };
            path.push(i);
            ancestors.push(path);
        }
        let mut anc_offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for a in &ancestors {
            anc_offset.push(total);
            total += a.len();
        }
        anc_offset.push(total);
        Ok(Self {
            bodies,
            ancestors,
            kin: (0..n).map(|_| BodyKinematics::zero()).collect(),
            jv: vec![Vector3::zeros(); total],
            jw: vec![Vector3::zeros(); total],
            iw_jw: vec![Vector3::zeros(); total],
            anc_offset,
            h: vec![0.0; n * n],
            rhs: vec![0.0; n],
            qdd: vec![0.0; n],
            acc_com: vec![Vector3::zeros(); n],
            qdd_root_in_vp: false,
        })
    }

    pub fn from_mesh(mesh: &FeatherMesh) -> Result<Self, DynamicsError> {
        let bodies = mesh
            .elements
            .iter()
            .zip(&mesh.joints)
            .map(|(e, j)| Body {
                parent: j.parent_element,
                anchor_in_parent: e.anchor_in_parent,
                axis: Unit::new_normalize(j.axis),
                com: e.com,
                normal: Unit::new_normalize(e.normal),
                mass: e.mass_kg,
                area: e.area_m2,
                volume: e.volume_m3,
                inertia_com: e.inertia_com,
                half_span: e.span_m / 2.0,
                half_chord: e.chord_m / 2.0,
                joint: JointLaw {
                    stiffness: j.stiffness_nm_rad,
                    damping: j.damping_nms_rad,
                    lower_limit: j.lower_limit_rad,
                    upper_limit: j.upper_limit_rad,
                    stop_stiffness: j.stop_stiffness_nm_rad,
                    stop_damping: j.stop_damping_nms_rad,
                },
            })
            .collect();
        Self::new(bodies)
    }

    pub fn n_bodies(&self) -> usize {
        self.bodies.len()
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    /// Forward pass: world pose, velocity and velocity-product acceleration
    /// of every body. With a prescribed root, its current acceleration is
    /// folded into the velocity-product terms so the later solve only sees
    /// the free joints.
    pub fn forward_kinematics(&mut self, state: &JointState, root: RootDrive) {
        let n = self.bodies.len();
        self.qdd_root_in_vp = matches!(root, RootDrive::Prescribed { .. });
        for i in 0..n {
            let b = &self.bodies[i];
            let (p_rot, p_pos, p_omega, p_vel, p_omegad, p_acc) = match b.parent {
                Some(p) => {
                    let k = &self.kin[p];
                    (k.rot, k.pos, k.omega, k.vel_origin, k.omegad_vp, k.acc_origin_vp)
                }
                None => (
                    Matrix3::identity(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                    Vector3::zeros(),
                ),
            };
            let axis_world = p_rot * b.axis.into_inner();
            let rot = p_rot
                * Rotation3::from_axis_angle(&b.axis, state.q[i]).matrix();
            let arm = p_rot * b.anchor_in_parent;
            let pos = p_pos + arm;
            let omega = p_omega + axis_world * state.qd[i];
            let vel_origin = p_vel + p_omega.cross(&arm);
            let mut omegad = p_omegad + p_omega.cross(&(axis_world * state.qd[i]));
            if i == 0 {
                if let RootDrive::Prescribed { qdd } = root {
                    omegad += axis_world * qdd;
                }
            }
            let acc_origin =
                p_acc + p_omegad.cross(&arm) + p_omega.cross(&p_omega.cross(&arm));

            let com_arm = rot * b.com;
            let com_world = pos + com_arm;
            let vel_com = vel_origin + omega.cross(&com_arm);
            let acc_com_vp = acc_origin
                + omegad.cross(&com_arm)
                + omega.cross(&omega.cross(&com_arm));
            let inertia_world =
                rot * Matrix3::from_diagonal(&b.inertia_com) * rot.transpose();

            self.kin[i] = BodyKinematics {
                rot,
                pos,
                omega,
                vel_origin,
                omegad_vp: omegad,
                acc_origin_vp: acc_origin,
                axis_world,
                com_world,
                vel_com,
                acc_com_vp,
                normal_world: rot * b.normal.into_inner(),
                inertia_world,
            };
        }

        // Jacobian columns: for body i and ancestor joint j,
        // Jw = axis_j, Jv = axis_j x (com_i - anchor_j).
        for i in 0..n {
            let com = self.kin[i].com_world;
            let off = self.anc_offset[i];
            for (slot, &j) in self.ancestors[i].iter().enumerate() {
                let axis = self.kin[j].axis_world;
                self.jw[off + slot] = axis;
                self.jv[off + slot] = axis.cross(&(com - self.kin[j].pos));
                self.iw_jw[off + slot] = self.kin[i].inertia_world * axis;
            }
        }
    }

    /// Solve for joint accelerations given external COM forces. Joint
    /// spring/damper/stop torques are computed internally and treated
    /// linearly-implicitly with step `dt` (pass dt = 0 for a purely explicit
    /// evaluation). `forward_kinematics` must have run for this state.
    pub fn solve_accelerations(
        &mut self,
        state: &JointState,
        forces: &[Vector3<f64>],
        dt: f64,
        root: RootDrive,
    ) -> Result<&[f64], DynamicsError> {
        let n = self.bodies.len();
        debug_assert_eq!(forces.len(), n);
        let skip_root = matches!(root, RootDrive::Prescribed { .. });
        let n_free = if skip_root { n - 1 } else { n };
        let map = |j: usize| if skip_root { j - 1 } else { j };

        self.h[..n_free * n_free].fill(0.0);
        self.rhs[..n_free].fill(0.0);

        for i in 0..n {
            let b = &self.bodies[i];
            let k = &self.kin[i];
            let off = self.anc_offset[i];
            let anc = &self.ancestors[i];
            // Gyroscopic + velocity-product inertial terms of this body.
            let lin_bias = b.mass * k.acc_com_vp - forces[i];
            let ang_bias =
                k.inertia_world * k.omegad_vp + k.omega.cross(&(k.inertia_world * k.omega));
            for (sj, &j) in anc.iter().enumerate() {
                if skip_root && j == 0 {
                    continue;
                }
                let row = map(j);
                self.rhs[row] -=
                    self.jv[off + sj].dot(&lin_bias) + self.jw[off + sj].dot(&ang_bias);
                for (sk, &kk) in anc.iter().enumerate().take(sj + 1) {
                    if skip_root && kk == 0 {
                        continue;
                    }
                    let col = map(kk);
                    let v = b.mass * self.jv[off + sj].dot(&self.jv[off + sk])
                        + self.jw[off + sj].dot(&self.iw_jw[off + sk]);
                    self.h[row * n_free + col] += v;
                }
            }
        }

        // Implicit joint spring/damper terms.
        for j in 0..n {
            if skip_root && j == 0 {
                continue;
            }
            let row = map(j);
            let (torque, k_act, d_act) = self.bodies[j].joint.torque_and_gains(
                state.q[j],
                state.qd[j],
            );
            self.rhs[row] += torque - dt * k_act * state.qd[j];
            self.h[row * n_free + row] += dt * d_act + dt * dt * k_act;
        }

        // Solve H_ff qdd = rhs in place (lower-triangle LDL^T).
        self.qdd[..n_free].copy_from_slice(&self.rhs[..n_free]);
        ldlt_solve(&mut self.h, n_free, &mut self.qdd[..n_free])?;

        if skip_root {
            // Shift solved values into joint slots; slot 0 carries the
            // prescribed acceleration.
            for j in (1..n).rev() {
                self.qdd[j] = self.qdd[j - 1];
            }
            self.qdd[0] = match root {
                RootDrive::Prescribed { qdd } => qdd,
                RootDrive::Free => unreachable!(),
            };
        }
        Ok(&self.qdd[..n])
    }

    /// COM linear accelerations consistent with the last solve.
    pub fn com_accelerations(&mut self) -> &[Vector3<f64>] {
        let n = self.bodies.len();
        for i in 0..n {
            let mut a = self.kin[i].acc_com_vp;
            let off = self.anc_offset[i];
            for (slot, &j) in self.ancestors[i].iter().enumerate() {
                // The prescribed root's qdd is already inside acc_com_vp.
                if j == 0 && self.qdd_root_in_vp {
                    continue;
                }
                a += self.jv[off + slot] * self.qdd[j];
            }
            self.acc_com[i] = a;
        }
        &self.acc_com
    }

    /// Semi-implicit Euler: velocity first, then position with the new
    /// velocity. The root slot is skipped when prescribed; assign it
    /// externally from the trajectory.
    pub fn integrate(&self, state: &mut JointState, dt: f64, skip_root: bool) {
        let start = if skip_root { 1 } else { 0 };
        for j in start..self.bodies.len() {
            state.qd[j] += dt * self.qdd[j];
            state.q[j] += dt * state.qd[j];
        }
    }

    pub fn com_world(&self, i: usize) -> Vector3<f64> {
        self.kin[i].com_world
    }

    pub fn com_velocity(&self, i: usize) -> Vector3<f64> {
        self.kin[i].vel_com
    }

    pub fn normal_world(&self, i: usize) -> Vector3<f64> {
        self.kin[i].normal_world
    }

    pub fn joint_anchor_world(&self, i: usize) -> Vector3<f64> {
        self.kin[i].pos
    }

    /// Total kinetic energy at the last forward-kinematics state.
    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .zip(&self.kin)
            .map(|(b, k)| {
                0.5 * b.mass * k.vel_com.norm_squared()
                    + 0.5 * k.omega.dot(&(k.inertia_world * k.omega))
            })
            .sum()
    }

    /// World-space corners of plate `i` (for visualization).
    pub fn element_corners(&self, i: usize) -> [Vector3<f64>; 4] {
        let b = &self.bodies[i];
        let k = &self.kin[i];
        let ex = k.rot * Vector3::new(b.half_span, 0.0, 0.0);
        let ey = k.rot * Vector3::new(0.0, b.half_chord, 0.0);
        let c = k.com_world;
        [c - ex - ey, c + ex - ey, c + ex + ey, c - ex + ey]
    }
}

/// In-place LDL^T factorization and solve on the lower triangle of a
/// row-major n x n matrix.
fn ldlt_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<(), DynamicsError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            let l = a[j * n + k];
            d -= l * l * a[k * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(DynamicsError::NotPositiveDefinite { pivot: j });
        }
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k] * a[k * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v;
    }
    for i in 0..n {
        b[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const G: f64 = 9.81;

    fn plate_body(
        parent: Option<usize>,
        anchor: Vector3<f64>,
        axis: Vector3<f64>,
        span: f64,
        chord: f64,
        mass: f64,
        joint: JointLaw,
    ) -> Body {
        let h = 1e-3;
        Body {
            parent,
            anchor_in_parent: anchor,
            axis: Unit::new_normalize(axis),
            com: Vector3::new(span / 2.0, 0.0, 0.0),
            normal: Unit::new_normalize(Vector3::z()),
            mass,
            area: span * chord,
            volume: span * chord * h,
            inertia_com: Vector3::new(
                mass * (chord * chord + h * h) / 12.0,
                mass * (span * span + h * h) / 12.0,
                mass * (span * span + chord * chord) / 12.0,
            ),
            half_span: span / 2.0,
            half_chord: chord / 2.0,
            joint,
        }
    }

    fn passive() -> JointLaw {
        JointLaw {
            stiffness: 0.0,
            damping: 0.0,
            lower_limit: None,
            upper_limit: None,
            stop_stiffness: 0.0,
            stop_damping: 0.0,
        }
    }

    fn gravity_forces(dynamics: &TreeDynamics) -> Vec<Vector3<f64>> {
        dynamics
            .bodies()
            .iter()
            .map(|b| Vector3::new(0.0, 0.0, -b.mass * G))
            .collect()
    }

    /// Free pendulum: small-oscillation period matches 2 pi sqrt(I_pivot / (m g d)).
    #[test]
    fn pendulum_small_oscillation_period() {
        let span = 0.3;
        let mass = 0.2;
        let body = plate_body(
            None,
            Vector3::zeros(),
            Vector3::y(),
            span,
            0.02,
            mass,
            passive(),
        );
        let i_pivot = body.inertia_com.y + mass * (span / 2.0) * (span / 2.0);
        let expected_period =
            2.0 * std::f64::consts::PI * (i_pivot / (mass * G * span / 2.0)).sqrt();

        let mut dyn_ = TreeDynamics::new(vec![body]).unwrap();
        let mut state = JointState::zeros(1);
        // Hang straight down (+y axis: q = pi/2 points the tip at -z),
        // offset by a small angle.
        let hang = std::f64::consts::FRAC_PI_2;
        state.q[0] = hang + 0.01;
        let dt = 1e-5;
        // Time the first two zero crossings of (q - hang).
        let mut crossings = Vec::new();
        let mut prev = state.q[0] - hang;
        for step in 1..400_000 {
            dyn_.forward_kinematics(&state, RootDrive::Free);
            let forces = gravity_forces(&dyn_);
            dyn_.solve_accelerations(&state, &forces, 0.0, RootDrive::Free)
                .unwrap();
            dyn_.integrate(&mut state, dt, false);
            let cur = state.q[0] - hang;
            if prev > 0.0 && cur <= 0.0 {
                crossings.push(step as f64 * dt);
                if crossings.len() == 2 {
                    break;
                }
            }
            prev = cur;
        }
        assert_eq!(crossings.len(), 2);
        let period = crossings[1] - crossings[0];
        assert_relative_eq!(period, expected_period, max_relative = 1e-3);
    }

    /// Two-plate chain released from horizontal: initial accelerations match
    /// the hand-assembled 2x2 planar solve.
    #[test]
    fn two_plate_initial_accelerations_match_hand_solve() {
        let a = 0.1;
        let b = 0.05;
        let m = 0.03;
        let bodies = vec![
            plate_body(None, Vector3::zeros(), Vector3::y(), a, b, m, passive()),
            plate_body(
                Some(0),
                Vector3::new(a, 0.0, 0.0),
                Vector3::y(),
                a,
                b,
                m,
                passive(),
            ),
        ];
        let iyy = bodies[0].inertia_com.y;
        let mut dyn_ = TreeDynamics::new(bodies).unwrap();
        let state = JointState::zeros(2);
        dyn_.forward_kinematics(&state, RootDrive::Free);
        let forces = gravity_forces(&dyn_);
        let qdd = dyn_
            .solve_accelerations(&state, &forces, 0.0, RootDrive::Free)
            .unwrap()
            .to_vec();

        // Hand-assembled planar mass matrix and gravity torques (axes +y,
        // positive q pitches the tip down, so gravity drives q positive).
        let h00 = iyy + m * (a / 2.0) * (a / 2.0) + iyy + m * (1.5 * a) * (1.5 * a);
        let h01 = iyy + m * (1.5 * a) * (a / 2.0);
        let h11 = iyy + m * (a / 2.0) * (a / 2.0);
        let t0 = m * G * (a / 2.0) + m * G * (1.5 * a);
        let t1 = m * G * (a / 2.0);
        let det = h00 * h11 - h01 * h01;
        let expected0 = (h11 * t0 - h01 * t1) / det;
        let expected1 = (-h01 * t0 + h00 * t1) / det;

        assert_relative_eq!(qdd[0], expected0, max_relative = 1e-10);
        assert_relative_eq!(qdd[1], expected1, max_relative = 1e-10);
    }

    /// With no forces and no springs the chain conserves kinetic energy up
    /// to the integrator's bounded oscillation.
    #[test]
    fn free_chain_energy_bounded() {
        let bodies = vec![
            plate_body(None, Vector3::zeros(), Vector3::y(), 0.1, 0.05, 0.02, passive()),
            plate_body(
                Some(0),
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::x(),
                0.1,
                0.05,
                0.02,
                passive(),
            ),
            plate_body(
                Some(1),
                Vector3::new(0.1, 0.0, 0.0),
                Vector3::y(),
                0.1,
                0.05,
                0.02,
                passive(),
            ),
        ];
        let mut dyn_ = TreeDynamics::new(bodies).unwrap();
        let mut state = JointState::zeros(3);
        state.qd = vec![1.3, -0.7, 2.1];
        dyn_.forward_kinematics(&state, RootDrive::Free);
        let e0 = dyn_.kinetic_energy();
        let zero = vec![Vector3::zeros(); 3];
        let dt = 1e-5;
        for _ in 0..20_000 {
            dyn_.forward_kinematics(&state, RootDrive::Free);
            dyn_.solve_accelerations(&state, &zero, 0.0, RootDrive::Free)
                .unwrap();
            dyn_.integrate(&mut state, dt, false);
        }
        dyn_.forward_kinematics(&state, RootDrive::Free);
        let e1 = dyn_.kinetic_energy();
        assert_relative_eq!(e1, e0, max_relative = 0.02);
    }

    /// COM accelerations from the solve agree with a finite difference of
    /// COM velocities across one small step.
    #[test]
    fn com_acceleration_matches_finite_difference() {
        let spring = JointLaw {
            stiffness: 0.05,
            damping: 0.001,
            lower_limit: None,
            upper_limit: None,
            stop_stiffness: 0.0,
            stop_damping: 0.0,
        };
        let bodies = vec![
            plate_body(None, Vector3::zeros(), Vector3::y(), 0.06, 0.04, 0.01, spring),
            plate_body(
                Some(0),
                Vector3::new(0.06, 0.0, 0.0),
                Vector3::y(),
                0.06,
                0.04,
                0.01,
                spring,
            ),
        ];
        let mut dyn_ = TreeDynamics::new(bodies).unwrap();
        let mut state = JointState {
            q: vec![0.2, -0.3],
            qd: vec![0.5, 1.0],
        };
        let dt = 1e-6;
        dyn_.forward_kinematics(&state, RootDrive::Free);
        let v_before: Vec<_> = (0..2).map(|i| dyn_.com_velocity(i)).collect();
        let forces = gravity_forces(&dyn_);
        dyn_.solve_accelerations(&state, &forces, dt, RootDrive::Free)
            .unwrap();
        let acc: Vec<_> = dyn_.com_accelerations().to_vec();
        dyn_.integrate(&mut state, dt, false);
        dyn_.forward_kinematics(&state, RootDrive::Free);
        for i in 0..2 {
            let fd = (dyn_.com_velocity(i) - v_before[i]) / dt;
            let scale = acc[i].norm().max(1.0);
            assert!(
                (fd - acc[i]).norm() <= 1e-2 * scale,
                "body {i}: fd={fd:?} acc={:?}",
                acc[i]
            );
        }
    }

    /// A one-way joint pressed toward its stop settles at a tiny penetration
    /// and never dives deep past the limit, despite the stiff penalty and a
    /// step size that would blow up an explicit treatment.
    #[test]
    fn hard_stop_settles_with_stiff_penalty() {
        let strip = 0.04; // N m / rad
        let joint = JointLaw {
            stiffness: strip * 0.01,
            damping: 1e-4,
            lower_limit: Some(0.0),
            upper_limit: Some(2.0),
            stop_stiffness: strip * 1e3,
            stop_damping: strip * 10.0,
        };
        // Plate pushed down against the stop by gravity (axis -y so positive
        // q is up; gravity drives q negative into the stop).
        let body = plate_body(None, Vector3::zeros(), -Vector3::y(), 0.05, 0.03, 0.02, joint);
        let mut dyn_ = TreeDynamics::new(vec![body]).unwrap();
        let mut state = JointState::zeros(1);
        state.q[0] = 0.3;
        let dt = 2e-4;
        let mut min_q: f64 = f64::MAX;
        for _ in 0..20_000 {
            dyn_.forward_kinematics(&state, RootDrive::Free);
            let forces = gravity_forces(&dyn_);
            dyn_.solve_accelerations(&state, &forces, dt, RootDrive::Free)
                .unwrap();
            dyn_.integrate(&mut state, dt, false);
            assert!(state.q[0].is_finite() && state.qd[0].is_finite());
            min_q = min_q.min(state.q[0]);
        }
        // Settles pressed on the stop: small negative penetration only.
        assert!(state.q[0] <= 1e-3, "q = {}", state.q[0]);
        assert!(min_q > -0.02, "min q = {min_q}");
        assert!(state.qd[0].abs() < 1e-3);
    }

    /// Prescribed root: the reported root slot carries the prescribed
    /// acceleration and distal joints still respond to it.
    #[test]
    fn prescribed_root_drives_distal_joint() {
        let bodies = vec![
            plate_body(None, Vector3::zeros(), Vector3::y(), 0.08, 0.04, 0.02, passive()),
            plate_body(
                Some(0),
                Vector3::new(0.08, 0.0, 0.0),
                Vector3::y(),
                0.08,
                0.04,
                0.02,
                passive(),
            ),
        ];
        let mut dyn_ = TreeDynamics::new(bodies).unwrap();
        let state = JointState::zeros(2);
        let root_qdd = 5.0;
        dyn_.forward_kinematics(&state, RootDrive::Prescribed { qdd: root_qdd });
        let zero = vec![Vector3::zeros(); 2];
        let qdd = dyn_
            .solve_accelerations(&state, &zero, 0.0, RootDrive::Prescribed { qdd: root_qdd })
            .unwrap();
        assert_abs_diff_eq!(qdd[0], root_qdd);
        // The distal joint is dragged opposite the base spin-up (it lags).
        assert!(qdd[1] < 0.0, "qdd = {qdd:?}");
    }

    #[test]
    fn rejects_bad_ordering() {
        let bodies = vec![
            plate_body(Some(0), Vector3::zeros(), Vector3::y(), 0.1, 0.1, 0.1, passive()),
        ];
        assert!(matches!(
            TreeDynamics::new(bodies),
            Err(DynamicsError::BadOrdering { .. })
        ));
    }
}
