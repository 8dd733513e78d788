//! Time-stepping of a feather mesh under prescribed root actuation in still
//! fluid, with quasi-steady drag and added-mass loading per element.
//!
//! Each element carries four lumped external forces: gravity, buoyancy,
//! normal-direction quadratic drag, and an added-mass reaction proportional
//! to the normal acceleration. The added-mass term uses the previous step's
//! acceleration (explicit lagging), a first-order approximation that avoids
//! coupling the fluid term into the mass matrix. The recorded thrust is the
//! vertical component of the root constraint force: the sum over elements of
//! external force minus mass times COM acceleration.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::StrokeController;
use crate::dynamics::{DynamicsError, JointState, RootDrive, TreeDynamics};
use crate::geometry::FeatherMesh;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("fluid config values must be strictly positive and finite")]
    InvalidFluidConfig,
    #[error("sim config requires dt_s > 0 and cycles >= transient_cycles + 1")]
    InvalidSimConfig,
    #[error("controller period must be positive")]
    InvalidController,
    #[error("element state is not finite")]
    NonFiniteState,
    #[error("simulation unstable at step {step} (t = {t_s:.6} s): {what}; try a smaller dt_s")]
    Unstable { step: usize, t_s: f64, what: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Fluid and gravity constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidConfig {
    #[serde(default = "default_fluid_density")]
    pub fluid_density_kg_m3: f64,
    /// Flat plate normal to flow.
    #[serde(default = "default_drag_coefficient")]
    pub drag_coefficient: f64,
    #[serde(default = "default_added_mass")]
    pub added_mass_coefficient: f64,
    #[serde(default = "default_gravity")]
    pub gravity_m_s2: f64,
}

fn default_fluid_density() -> f64 {
    1000.0
}
fn default_drag_coefficient() -> f64 {
    1.28
}
fn default_added_mass() -> f64 {
    1.0
}
fn default_gravity() -> f64 {
    9.81
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self {
            fluid_density_kg_m3: default_fluid_density(),
            drag_coefficient: default_drag_coefficient(),
            added_mass_coefficient: default_added_mass(),
            gravity_m_s2: default_gravity(),
        }
    }
}

impl FluidConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let vals = [
            self.fluid_density_kg_m3,
            self.drag_coefficient,
            self.added_mass_coefficient,
            self.gravity_m_s2,
        ];
        if vals.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::InvalidFluidConfig)
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    /// Stroke periods to simulate.
    pub cycles: usize,
    /// Leading cycles excluded from metrics.
    #[serde(default = "default_transient")]
    pub transient_cycles: usize,
    /// Abort threshold for any joint speed.
    #[serde(default = "default_speed_cap")]
    pub max_joint_speed_rad_s: f64,
}

fn default_dt() -> f64 {
    2e-4
}
fn default_transient() -> usize {
    1
}
fn default_speed_cap() -> f64 {
    500.0
}

impl SimConfig {
    pub fn new(cycles: usize) -> Self {
        Self {
            dt_s: default_dt(),
            cycles,
            transient_cycles: default_transient(),
            max_joint_speed_rad_s: default_speed_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dt_s > 0.0
            && self.dt_s.is_finite()
            && self.cycles >= self.transient_cycles + 1
            && self.max_joint_speed_rad_s > 0.0
        {
            Ok(())
        } else {
            Err(SimError::InvalidSimConfig)
        }
    }
}

/// Kinematic snapshot of one element, as consumed by [`external_force`].
/// Velocity is relative to the fluid; `normal_accel` is the previous step's
/// COM acceleration projected on the plate normal.
#[derive(Debug, Clone, Copy)]
pub struct ElementState {
    pub mass_kg: f64,
    pub area_m2: f64,
    pub volume_m3: f64,
    pub normal: Vector3<f64>,
    pub velocity_m_s: Vector3<f64>,
    pub normal_accel_m_s2: f64,
}

/// Total lumped external force on one element: gravity + buoyancy +
/// quadratic normal drag + added mass.
pub fn external_force(
    element: &ElementState,
    fluid: &FluidConfig,
) -> Result<Vector3<f64>, SimError> {
    let finite = element.mass_kg.is_finite()
        && element.area_m2.is_finite()
        && element.volume_m3.is_finite()
        && element.normal.iter().all(|v| v.is_finite())
        && element.velocity_m_s.iter().all(|v| v.is_finite())
        && element.normal_accel_m_s2.is_finite();
    if !finite {
        return Err(SimError::NonFiniteState);
    }
    let up = Vector3::z();
    let gravity = -element.mass_kg * fluid.gravity_m_s2 * up;
    let buoyancy = fluid.fluid_density_kg_m3 * element.volume_m3 * fluid.gravity_m_s2 * up;
    let v_n = element.normal.dot(&element.velocity_m_s);
    let drag = -0.5
        * fluid.fluid_density_kg_m3
        * fluid.drag_coefficient
        * element.area_m2
        * v_n.abs()
        * v_n
        * element.normal;
    let added_mass = -fluid.fluid_density_kg_m3
        * fluid.added_mass_coefficient
        * element.volume_m3
        * element.normal_accel_m_s2
        * element.normal;
    Ok(gravity + buoyancy + drag + added_mass)
}

/// Time series of the vertical root reaction force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrustTrace {
    pub times_s: Vec<f64>,
    pub thrust_N: Vec<f64>,
    pub period_s: f64,
    /// Sample index starting each cycle; the final entry is the trace length.
    pub cycle_boundaries: Vec<usize>,
    pub transient_cycles: usize,
}

impl ThrustTrace {
    pub fn dt(&self) -> f64 {
        self.times_s.get(1).copied().unwrap_or(0.0) - self.times_s.first().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.thrust_N.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thrust_N.is_empty()
    }

    /// Sample range covering the post-transient whole cycles.
    pub fn post_transient_range(&self) -> std::ops::Range<usize> {
        let start = self
            .cycle_boundaries
            .get(self.transient_cycles)
            .copied()
            .unwrap_or(self.len());
        let end = self.cycle_boundaries.last().copied().unwrap_or(self.len());
        start..end
    }

    pub fn cycle_index_of(&self, sample: usize) -> usize {
        match self.cycle_boundaries.binary_search(&sample) {
            Ok(c) => c.min(self.cycle_boundaries.len().saturating_sub(2)),
            Err(c) => c - 1,
        }
    }

    /// CSV rows `t_s,thrust_N,cycle_index` with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,thrust_N,cycle_index")?;
        for (i, (t, f)) in self.times_s.iter().zip(&self.thrust_N).enumerate() {
            writeln!(w, "{},{},{}", t, f, self.cycle_index_of(i))?;
        }
        Ok(())
    }
}

/// Extra per-step recordings, off by default.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecordOptions {
    /// Record every one-way hinge angle each sample.
    pub fold_angles: bool,
}

/// One-way hinge angles over time, joint-major inner dimension.
#[derive(Debug, Clone)]
pub struct FoldTrace {
    pub joint_indices: Vec<usize>,
    pub times_s: Vec<f64>,
    pub angles_rad: Vec<Vec<f64>>,
}

pub struct SimRun {
    pub trace: ThrustTrace,
    pub fold: Option<FoldTrace>,
}

/// Step-level simulation driver. Owns all state; stepping does not allocate.
pub struct Simulation {
    dynamics: TreeDynamics,
    controller: StrokeController,
    fluid: FluidConfig,
    config: SimConfig,
    state: JointState,
    one_way_joints: Vec<usize>,
    forces: Vec<Vector3<f64>>,
    prev_acc: Vec<Vector3<f64>>,
    fluid_velocity: Vector3<f64>,
    prev_root_qd: f64,
    step_index: usize,
    frozen: bool,
}

/// One step's outputs.
#[derive(Debug, Clone, Copy)]
pub struct StepSample {
    pub t_s: f64,
    pub thrust_N: f64,
}

impl Simulation {
    pub fn new(
        mesh: &FeatherMesh,
        controller: StrokeController,
        fluid: FluidConfig,
        config: SimConfig,
    ) -> Result<Self, SimError> {
        fluid.validate()?;
        config.validate()?;
        if !(controller.period_s() > 0.0) {
            return Err(SimError::InvalidController);
        }
        let dynamics = TreeDynamics::from_mesh(mesh)?;
        let n = dynamics.n_bodies();
        let mut state = JointState::zeros(n);
        state.q[0] = controller.angle_at(0.0);
        Ok(Self {
            dynamics,
            controller,
            fluid,
            config,
            state,
            one_way_joints: mesh.one_way_joints(),
            forces: vec![Vector3::zeros(); n],
            prev_acc: vec![Vector3::zeros(); n],
            fluid_velocity: Vector3::zeros(),
            prev_root_qd: 0.0,
            step_index: 0,
            frozen: false,
        })
    }

    /// Fluid velocity in the simulation frame (used by the swim model to
    /// feed the body's rail velocity back as ambient flow).
    pub fn set_fluid_velocity(&mut self, v: Vector3<f64>) {
        self.fluid_velocity = v;
    }

    /// Stop driving the root: it holds its current angle from now on.
    pub fn freeze_actuation(&mut self) {
        self.frozen = true;
        self.state.qd[0] = 0.0;
        self.prev_root_qd = 0.0;
    }

    pub fn time_s(&self) -> f64 {
        self.step_index as f64 * self.config.dt_s
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn controller(&self) -> &StrokeController {
        &self.controller
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Advance one step; returns the thrust sample for the step's start time.
    pub fn step(&mut self) -> Result<StepSample, SimError> {
        let dt = self.config.dt_s;
        let t = self.time_s();

        // Discrete root trajectory: the velocity that carries q exactly onto
        // the waveform at the next sample, and its backward-difference
        // acceleration.
        let (q_next, root_qd) = if self.frozen {
            (self.state.q[0], 0.0)
        } else {
            let q_next = self.controller.angle_at(t + dt);
            ((q_next), (q_next - self.controller.angle_at(t)) / dt)
        };
        let root_qdd = (root_qd - self.prev_root_qd) / dt;
        self.prev_root_qd = root_qd;
        self.state.qd[0] = root_qd;

        let root = RootDrive::Prescribed { qdd: root_qdd };
        self.dynamics.forward_kinematics(&self.state, root);

        for i in 0..self.dynamics.n_bodies() {
            let b = &self.dynamics.bodies()[i];
            let normal = self.dynamics.normal_world(i);
            let element = ElementState {
                mass_kg: b.mass,
                area_m2: b.area,
                volume_m3: b.volume,
                normal,
                velocity_m_s: self.dynamics.com_velocity(i) - self.fluid_velocity,
                normal_accel_m_s2: normal.dot(&self.prev_acc[i]),
            };
            self.forces[i] = external_force(&element, &self.fluid).map_err(|_| {
                SimError::Unstable {
                    step: self.step_index,
                    t_s: t,
                    what: "non-finite element state".into(),
                }
            })?;
        }

        self.dynamics
            .solve_accelerations(&self.state, &self.forces, dt, root)?;
        let mut thrust = 0.0;
        {
            let acc = self.dynamics.com_accelerations();
            for (i, a) in acc.iter().enumerate() {
                let m = self.dynamics.bodies()[i].mass;
                thrust += self.forces[i].z - m * a.z;
                self.prev_acc[i] = *a;
            }
        }

        self.dynamics.integrate(&mut self.state, dt, true);
        self.state.q[0] = q_next;
        self.step_index += 1;

        // Instability detection.
        let mut max_speed = 0.0f64;
        for j in 0..self.state.q.len() {
            if !self.state.q[j].is_finite() || !self.state.qd[j].is_finite() {
                return Err(SimError::Unstable {
                    step: self.step_index,
                    t_s: t,
                    what: format!("non-finite state at joint {j}"),
                });
            }
            max_speed = max_speed.max(self.state.qd[j].abs());
        }
        if max_speed > self.config.max_joint_speed_rad_s {
            return Err(SimError::Unstable {
                step: self.step_index,
                t_s: t,
                what: format!(
                    "joint speed {max_speed:.1} rad/s exceeds cap {:.1}",
                    self.config.max_joint_speed_rad_s
                ),
            });
        }

        Ok(StepSample { t_s: t, thrust_N: thrust })
    }

    /// Current angles of the one-way hinges (empty for a plain feather).
    pub fn fold_angles(&self) -> Vec<f64> {
        self.one_way_joints
            .iter()
            .map(|&j| self.state.q[j])
            .collect()
    }

    pub fn one_way_joints(&self) -> &[usize] {
        &self.one_way_joints
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.state.q
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.dynamics.kinetic_energy()
    }

    /// World-space corners of every plate (visualization).
    pub fn element_quads(&self) -> Vec<[Vector3<f64>; 4]> {
        (0..self.dynamics.n_bodies())
            .map(|i| self.dynamics.element_corners(i))
            .collect()
    }

    pub fn n_steps_for(&self, cycles: usize) -> usize {
        (cycles as f64 * self.controller.period_s() / self.config.dt_s).round() as usize
    }
}

/// Run the configured number of cycles and collect the thrust trace.
pub fn simulate(
    mesh: &FeatherMesh,
    controller: StrokeController,
    fluid: FluidConfig,
    config: SimConfig,
) -> Result<ThrustTrace, SimError> {
    Ok(simulate_recorded(mesh, controller, fluid, config, RecordOptions::default())?.trace)
}

/// As [`simulate`], optionally recording one-way hinge angles.
pub fn simulate_recorded(
    mesh: &FeatherMesh,
    controller: StrokeController,
    fluid: FluidConfig,
    config: SimConfig,
    record: RecordOptions,
) -> Result<SimRun, SimError> {
    let mut sim = Simulation::new(mesh, controller, fluid, config)?;
    let n_steps = sim.n_steps_for(config.cycles);
    let period = controller.period_s();
    let dt = config.dt_s;

    let mut times = Vec::with_capacity(n_steps);
    let mut thrust = Vec::with_capacity(n_steps);
    let mut fold = record.fold_angles.then(|| FoldTrace {
        joint_indices: sim.one_way_joints().to_vec(),
        times_s: Vec::with_capacity(n_steps),
        angles_rad: Vec::with_capacity(n_steps),
    });

    for _ in 0..n_steps {
        if let Some(f) = fold.as_mut() {
            f.times_s.push(sim.time_s());
            f.angles_rad.push(sim.fold_angles());
        }
        let sample = sim.step()?;
        times.push(sample.t_s);
        thrust.push(sample.thrust_N);
    }

    let cycle_boundaries = (0..=config.cycles)
        .map(|c| ((c as f64 * period / dt).round() as usize).min(n_steps))
        .collect();
    Ok(SimRun {
        trace: ThrustTrace {
            times_s: times,
            thrust_N: thrust,
            period_s: period,
            cycle_boundaries,
            transient_cycles: config.transient_cycles,
        },
        fold,
    })
}
