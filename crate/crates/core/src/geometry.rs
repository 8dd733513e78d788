//! Parametric feather morphologies and their discretization into
//! plate-element meshes with asymmetric (one-way) hinge joints.
//!
//! Conventions: every element frame has x along the span (outboard), y along
//! the chord, z along the plate normal. At the rest pose all frames are
//! parallel, the sheet lies in the x-y plane, and each element's origin sits
//! on its inboard hinge line. The actuated root hinge is joint 0 at the world
//! origin, axis -y, so a positive root angle pitches the span tip upward.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("length_m, width_m and thickness_m must be positive and finite")]
    NonPositiveDimensions,
    #[error("material_density_kg_m3 must be positive and finite")]
    InvalidDensity,
    #[error("chordwise flaps require 0 < spine_width_m < width_m (spine={spine_width_m}, width={width_m})")]
    InvalidSpineWidth { spine_width_m: f64, width_m: f64 },
    #[error("spanwise flaps require 0 < root_length_m < length_m (root={root_length_m}, length={length_m})")]
    InvalidRootLength { root_length_m: f64, length_m: f64 },
    #[error("spanwise_elements must be at least 2 (got {0})")]
    TooFewElements(usize),
    #[error("cannot place the spanwise hinge at {requested_m} m with {elements} elements of length {element_length_m} m; achievable hinge positions: {achievable}")]
    HingePlacement {
        requested_m: f64,
        elements: usize,
        element_length_m: f64,
        achievable: String,
    },
}

/// Feather outline variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatherKind {
    /// Rectangular sheet, no folding flaps.
    Plain,
    /// Central spine with left/right flap panels hinged along its edges.
    ChordwiseFlaps,
    /// Distal span section hinged at `root_length_m` from the root.
    SpanwiseFlaps,
}

/// Default spine width for chordwise-flap feathers (meters).
pub const DEFAULT_SPINE_WIDTH_M: f64 = 0.01;
/// Default sheet thickness (meters).
pub const DEFAULT_THICKNESS_M: f64 = 0.0004;
/// Default sheet density, polypropylene (kg/m^3).
pub const DEFAULT_SHEET_DENSITY: f64 = 905.0;

/// Parametric description of a feather. All feathers unfold to a rectangle
/// `length_m` x `width_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatherGeometry {
    pub kind: FeatherKind,
    pub length_m: f64,
    pub width_m: f64,
    /// Spine width; meaningful only for `ChordwiseFlaps`.
    #[serde(default = "default_spine_width")]
    pub spine_width_m: f64,
    /// Hinge distance from the root; meaningful only for `SpanwiseFlaps`.
    #[serde(default)]
    pub root_length_m: f64,
    #[serde(default = "default_thickness")]
    pub thickness_m: f64,
    #[serde(default = "default_density")]
    pub material_density_kg_m3: f64,
}

fn default_spine_width() -> f64 {
    DEFAULT_SPINE_WIDTH_M
}
fn default_thickness() -> f64 {
    DEFAULT_THICKNESS_M
}
fn default_density() -> f64 {
    DEFAULT_SHEET_DENSITY
}

impl FeatherGeometry {
    pub fn plain(length_m: f64, width_m: f64) -> Self {
        Self {
            kind: FeatherKind::Plain,
            length_m,
            width_m,
            spine_width_m: DEFAULT_SPINE_WIDTH_M,
            root_length_m: 0.0,
            thickness_m: DEFAULT_THICKNESS_M,
            material_density_kg_m3: DEFAULT_SHEET_DENSITY,
        }
    }

    pub fn chordwise(length_m: f64, width_m: f64, spine_width_m: f64) -> Self {
        Self {
            kind: FeatherKind::ChordwiseFlaps,
            spine_width_m,
            ..Self::plain(length_m, width_m)
        }
    }

    pub fn spanwise(length_m: f64, width_m: f64, root_length_m: f64) -> Self {
        Self {
            kind: FeatherKind::SpanwiseFlaps,
            root_length_m,
            ..Self::plain(length_m, width_m)
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let dims = [self.length_m, self.width_m, self.thickness_m];
        if !dims.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(GeometryError::NonPositiveDimensions);
        }
        if !(self.material_density_kg_m3 > 0.0 && self.material_density_kg_m3.is_finite()) {
            return Err(GeometryError::InvalidDensity);
        }
        match self.kind {
            FeatherKind::Plain => {}
            FeatherKind::ChordwiseFlaps => {
                if !(self.spine_width_m > 0.0 && self.spine_width_m < self.width_m) {
                    return Err(GeometryError::InvalidSpineWidth {
                        spine_width_m: self.spine_width_m,
                        width_m: self.width_m,
                    });
                }
            }
            FeatherKind::SpanwiseFlaps => {
                if !(self.root_length_m > 0.0 && self.root_length_m < self.length_m) {
                    return Err(GeometryError::InvalidRootLength {
                        root_length_m: self.root_length_m,
                        length_m: self.length_m,
                    });
                }
            }
        }
        Ok(())
    }

    /// Mass of the unfolded sheet.
    pub fn sheet_mass_kg(&self) -> f64 {
        self.material_density_kg_m3 * self.length_m * self.width_m * self.thickness_m
    }
}

/// Dimensionless morphology descriptors: WR = w / w_spine, LR = l / l_root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioDescriptor {
    pub width_ratio: f64,
    pub length_ratio: f64,
}

/// Morphology ratios of a geometry. Ratios not applicable to the kind are 1.
pub fn ratio_of(geometry: &FeatherGeometry) -> Result<RatioDescriptor, GeometryError> {
    geometry.validate()?;
    Ok(RatioDescriptor {
        width_ratio: match geometry.kind {
            FeatherKind::ChordwiseFlaps => geometry.width_m / geometry.spine_width_m,
            _ => 1.0,
        },
        length_ratio: match geometry.kind {
            FeatherKind::SpanwiseFlaps => geometry.length_m / geometry.root_length_m,
            _ => 1.0,
        },
    })
}

/// Joint stiffness/damping derivation and one-way hinge tuning.
///
/// Two-way joint stiffness comes from the Euler-Bernoulli bending stiffness
/// of the sheet strip spanned by the hinge: k = E * (b h^3 / 12) / L, where
/// b is the hinge-line length and L the bending segment length. One-way
/// hinges keep a small fraction of that stiffness in the free direction
/// (the tape joint) and a large multiple past the hard stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Young's modulus of the sheet (Pa). Polypropylene default.
    pub youngs_modulus_pa: f64,
    /// Stiffness-proportional damping: c = damping_s * k.
    pub damping_s: f64,
    /// One-way hinge free-direction stiffness, as a fraction of the strip stiffness.
    pub one_way_free_scale: f64,
    /// Hard-stop penalty stiffness, as a multiple of the strip stiffness.
    pub hard_stop_scale: f64,
    /// Free rotation limit of one-way hinges (radians past the flat pose).
    pub one_way_upper_limit_rad: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self {
            youngs_modulus_pa: 1.5e9,
            damping_s: 0.01,
            one_way_free_scale: 0.01,
            hard_stop_scale: 1e3,
            one_way_upper_limit_rad: 120.0 * std::f64::consts::PI / 180.0,
        }
    }
}

impl MaterialModel {
    /// Bending stiffness of a sheet strip: hinge line length `b`, bending
    /// segment length `l_seg`, thickness `h`.
    fn strip_stiffness(&self, b: f64, l_seg: f64, h: f64) -> f64 {
        self.youngs_modulus_pa * b * h * h * h / 12.0 / l_seg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    /// Flexible two-way joint: linear spring-damper about the flat pose.
    Flexible,
    /// One-way hinge: hard stop at the coplanar pose (lower limit 0), free
    /// rotation up to the upper limit.
    OneWay,
}

/// Rotational joint connecting `parent_element` (None = ground) to
/// `child_element`. The axis is expressed in the parent frame at the rest
/// pose and is invariant under the joint's own rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeJoint {
    pub parent_element: Option<usize>,
    pub child_element: usize,
    pub axis: Vector3<f64>,
    pub stiffness_nm_rad: f64,
    pub damping_nms_rad: f64,
    pub lower_limit_rad: Option<f64>,
    pub upper_limit_rad: Option<f64>,
    pub stop_stiffness_nm_rad: f64,
    pub stop_damping_nms_rad: f64,
    pub kind: JointKind,
}

/// Rigid rectangular plate element. The frame origin is the inboard hinge
/// anchor; `anchor_in_parent` locates it in the parent element frame (world
/// frame for the root element).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateElement {
    pub anchor_in_parent: Vector3<f64>,
    pub com: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Extents along local x (span) and y (chord).
    pub span_m: f64,
    pub chord_m: f64,
    pub thickness_m: f64,
    pub mass_kg: f64,
    pub area_m2: f64,
    pub volume_m3: f64,
    /// Principal inertia about the COM in the body frame.
    pub inertia_com: Vector3<f64>,
}

impl PlateElement {
    fn new(
        anchor_in_parent: Vector3<f64>,
        com: Vector3<f64>,
        span_m: f64,
        chord_m: f64,
        thickness_m: f64,
        density: f64,
    ) -> Self {
        let area = span_m * chord_m;
        let volume = area * thickness_m;
        let mass = density * area * thickness_m;
        let (dx, dy, h) = (span_m, chord_m, thickness_m);
        let inertia_com = Vector3::new(
            mass * (dy * dy + h * h) / 12.0,
            mass * (dx * dx + h * h) / 12.0,
            mass * (dx * dx + dy * dy) / 12.0,
        );
        Self {
            anchor_in_parent,
            com,
            normal: Vector3::z(),
            span_m,
            chord_m,
            thickness_m,
            mass_kg: mass,
            area_m2: area,
            volume_m3: volume,
            inertia_com,
        }
    }
}

/// Discretized feather: plate elements joined in a tree by hinge joints.
/// `joints[i]` is the inboard joint of `elements[i]`, so the two lists are
/// index-aligned and parents always precede children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatherMesh {
    pub geometry: FeatherGeometry,
    pub spanwise_elements: usize,
    pub elements: Vec<PlateElement>,
    pub joints: Vec<HingeJoint>,
    pub root_joint_index: usize,
}

impl FeatherMesh {
    pub fn total_mass_kg(&self) -> f64 {
        self.elements.iter().map(|e| e.mass_kg).sum()
    }

    pub fn total_area_m2(&self) -> f64 {
        self.elements.iter().map(|e| e.area_m2).sum()
    }

    pub fn total_volume_m3(&self) -> f64 {
        self.elements.iter().map(|e| e.volume_m3).sum()
    }

    /// Indices of one-way hinges, in joint order.
    pub fn one_way_joints(&self) -> Vec<usize> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.kind == JointKind::OneWay)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("mesh serializes")
    }
}

/// Discretize a geometry into `spanwise_elements` stations.
pub fn build_mesh(
    geometry: &FeatherGeometry,
    spanwise_elements: usize,
) -> Result<FeatherMesh, GeometryError> {
    build_mesh_with(geometry, spanwise_elements, &MaterialModel::default())
}

/// Default spanwise resolution used by the harness.
pub const DEFAULT_SPANWISE_ELEMENTS: usize = 8;

pub fn build_mesh_with(
    geometry: &FeatherGeometry,
    spanwise_elements: usize,
    material: &MaterialModel,
) -> Result<FeatherMesh, GeometryError> {
    geometry.validate()?;
    if spanwise_elements < 2 {
        return Err(GeometryError::TooFewElements(spanwise_elements));
    }
    let n = spanwise_elements;
    let el = geometry.length_m / n as f64;
    let h = geometry.thickness_m;
    let rho = geometry.material_density_kg_m3;

    let mut elements = Vec::new();
    let mut joints = Vec::new();

    // Spanwise chain along x. `chain_width` is the chord of the chain
    // elements (full width for plain/spanwise, spine width for chordwise).
    // `one_way_at` marks the chain joint that becomes a one-way hinge.
    let chain_width = match geometry.kind {
        FeatherKind::ChordwiseFlaps => geometry.spine_width_m,
        _ => geometry.width_m,
    };
    let one_way_at = match geometry.kind {
        FeatherKind::SpanwiseFlaps => Some(snap_hinge_index(geometry, n, el)?),
        _ => None,
    };

    let k_chain = material.strip_stiffness(chain_width, el, h);
    for k in 0..n {
        let anchor = if k == 0 {
            Vector3::zeros()
        } else {
            Vector3::new(el, 0.0, 0.0)
        };
        elements.push(PlateElement::new(
            anchor,
            Vector3::new(el / 2.0, 0.0, 0.0),
            el,
            chain_width,
            h,
            rho,
        ));
        let one_way = one_way_at == Some(k);
        // Root hinge about -y: positive angle pitches the tip up. Interior
        // hinges about +y: positive angle folds the distal section down,
        // which is the free direction of the spanwise one-way hinge.
        let axis = if k == 0 {
            -Vector3::y()
        } else {
            Vector3::y()
        };
        joints.push(make_joint(
            if k == 0 { None } else { Some(k - 1) },
            k,
            axis,
            k_chain,
            one_way,
            material,
        ));
    }

    if geometry.kind == FeatherKind::ChordwiseFlaps {
        // One rigid flap panel per station per side, hinged along the spine
        // edge (axis along the span). Axis signs make the fold angle positive
        // in the free (upstroke) direction for both sides.
        let flap_width = (geometry.width_m - geometry.spine_width_m) / 2.0;
        let k_flap = material.strip_stiffness(el, flap_width, h);
        for k in 0..n {
            for (side, axis) in [(1.0, -Vector3::x()), (-1.0, Vector3::x())] {
                let child = elements.len();
                elements.push(PlateElement::new(
                    Vector3::new(el / 2.0, side * geometry.spine_width_m / 2.0, 0.0),
                    Vector3::new(0.0, side * flap_width / 2.0, 0.0),
                    el,
                    flap_width,
                    h,
                    rho,
                ));
                joints.push(make_joint(Some(k), child, axis, k_flap, true, material));
            }
        }
    }

    Ok(FeatherMesh {
        geometry: *geometry,
        spanwise_elements,
        elements,
        joints,
        root_joint_index: 0,
    })
}

fn make_joint(
    parent: Option<usize>,
    child: usize,
    axis: Vector3<f64>,
    strip_stiffness: f64,
    one_way: bool,
    material: &MaterialModel,
) -> HingeJoint {
    let stop_stiffness = material.hard_stop_scale * strip_stiffness;
    let stiffness = if one_way {
        material.one_way_free_scale * strip_stiffness
    } else {
        strip_stiffness
    };
    HingeJoint {
        parent_element: parent,
        child_element: child,
        axis,
        stiffness_nm_rad: stiffness,
        damping_nms_rad: material.damping_s * stiffness,
        lower_limit_rad: one_way.then_some(0.0),
        upper_limit_rad: one_way.then_some(material.one_way_upper_limit_rad),
        stop_stiffness_nm_rad: stop_stiffness,
        stop_damping_nms_rad: material.damping_s * stop_stiffness,
        kind: if one_way {
            JointKind::OneWay
        } else {
            JointKind::Flexible
        },
    }
}

/// Snap the requested spanwise hinge position to the nearest element
/// boundary. Boundaries interior to the span are at k * el for k in 1..n;
/// a request farther than el/2 from every boundary is an error.
fn snap_hinge_index(
    geometry: &FeatherGeometry,
    n: usize,
    el: f64,
) -> Result<usize, GeometryError> {
    let idx = (geometry.root_length_m / el).round() as i64;
    if idx < 1 || idx as usize >= n {
        let achievable = (1..n)
            .map(|k| format!("{:.6}", k as f64 * el))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(GeometryError::HingePlacement {
            requested_m: geometry.root_length_m,
            elements: n,
            element_length_m: el,
            achievable,
        });
    }
    Ok(idx as usize)
}
