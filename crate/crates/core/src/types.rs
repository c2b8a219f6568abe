//! Domain model shared by every subsystem, plus object compatibility checks.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{self, Vec2};

/// Lower reset limit: every dimension strictly below this (mm).
pub const LOWER_MAX_DIM_MM: f64 = 200.0;
/// Lower reset limit on mass, inclusive (g).
pub const LOWER_MAX_MASS_G: f64 = 1000.0;
/// Swap arm limit on width and depth, inclusive (mm).
pub const SWAP_MAX_FOOTPRINT_MM: f64 = 75.0;
/// Swap arm limit on mass, inclusive (g).
pub const SWAP_MAX_MASS_G: f64 = 500.0;

/// Maps any finite angle into `[0, 360)`.
pub fn normalize_deg(theta: f64) -> f64 {
    let r = theta.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Maps any finite angle into `(-180, 180]`.
pub fn normalize_deg_signed(theta: f64) -> f64 {
    let r = normalize_deg(theta);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Shortest signed rotation taking `from` onto `to`, in `(-180, 180]`.
pub fn angle_diff_deg(to: f64, from: f64) -> f64 {
    normalize_deg_signed(to - from)
}

/// Planar object pose on the rig table. `theta` is kept in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_deg(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// End-effector pose. Angles are deviations from the nominal gripper
/// orientation of the grasp type, kept in `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose6D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose6D {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll: normalize_deg_signed(roll),
            pitch: normalize_deg_signed(pitch),
            yaw: normalize_deg_signed(yaw),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], z: a[2], roll: a[3], pitch: a[4], yaw: a[5] }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unrecognised {kind} `{value}`")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

macro_rules! text_enum {
    ($name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ParseEnumError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(ParseEnumError { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    RectPrism,
    TriPrism,
    Cylinder,
    Cone,
}

text_enum!(Shape, "shape", {
    RectPrism => "rect_prism",
    TriPrism => "tri_prism",
    Cylinder => "cylinder",
    Cone => "cone",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraspType {
    Top,
    Side,
}

text_enum!(GraspType, "grasp type", {
    Top => "top",
    Side => "side",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbAxis {
    XTrans,
    YTrans,
    ZTrans,
    XRot,
    YRot,
    ZRot,
}

text_enum!(PerturbAxis, "perturbation axis", {
    XTrans => "x_trans",
    YTrans => "y_trans",
    ZTrans => "z_trans",
    XRot => "x_rot",
    YRot => "y_rot",
    ZRot => "z_rot",
});

impl PerturbAxis {
    /// Rotational axes carry degrees, translational ones millimeters.
    pub fn is_rotation(&self) -> bool {
        matches!(self, PerturbAxis::XRot | PerturbAxis::YRot | PerturbAxis::ZRot)
    }

    pub fn unit(&self) -> &'static str {
        if self.is_rotation() {
            "deg"
        } else {
            "mm"
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectError {
    #[error("object `{0}`: footprint must be a convex polygon with at least three vertices")]
    NotConvex(String),
    #[error("object `{id}`: footprint centroid is {offset:.3e} mm from the origin")]
    OffCenter { id: String, offset: f64 },
    #[error("object `{id}`: {field} must be positive and finite")]
    NonPositive { id: String, field: &'static str },
    #[error("object id must be nonempty")]
    EmptyId,
}

/// A graspable object and the fittings that decide which reset features it supports.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub mass: f64,
    /// Convex, counter-clockwise, centroid at the origin (mm).
    pub footprint: Vec<Vec2>,
    pub has_base_insert_receptacle: bool,
    pub has_swap_magnet: bool,
    pub orientation_magnet_offset: f64,
}

impl ObjectSpec {
    /// Checks the type invariants and orients the footprint counter-clockwise.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        shape: Shape,
        width: f64,
        depth: f64,
        height: f64,
        mass: f64,
        footprint: Vec<Vec2>,
        has_base_insert_receptacle: bool,
        has_swap_magnet: bool,
        orientation_magnet_offset: f64,
    ) -> Result<Self, ObjectError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ObjectError::EmptyId);
        }
        for (field, v) in [("width", width), ("depth", depth), ("height", height), ("mass", mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ObjectError::NonPositive { id, field });
            }
        }
        let mut footprint = footprint;
        if footprint.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) || !geometry::is_convex(&footprint) {
            return Err(ObjectError::NotConvex(id));
        }
        if geometry::signed_area(&footprint) < 0.0 {
            footprint.reverse();
        }
        let offset = geometry::centroid(&footprint).norm();
        if offset > 1e-6 {
            return Err(ObjectError::OffCenter { id, offset });
        }
        Ok(Self {
            id,
            shape,
            width,
            depth,
            height,
            mass,
            footprint,
            has_base_insert_receptacle,
            has_swap_magnet,
            orientation_magnet_offset,
        })
    }

    /// 40 × 40 × 105 mm rectangular prism.
    pub fn standard_rect() -> Self {
        let h = 20.0;
        let fp = vec![Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
        Self::new("rect", Shape::RectPrism, 40.0, 40.0, 105.0, 150.0, fp, true, true, 12.0)
            .expect("standard rect is valid")
    }

    /// Isosceles triangle, 50 mm base and 50 mm height, apex toward +y.
    pub fn standard_tri() -> Self {
        let b = 50.0;
        let h = 50.0;
        let fp = vec![Vec2::new(-b / 2.0, -h / 3.0), Vec2::new(b / 2.0, -h / 3.0), Vec2::new(0.0, 2.0 * h / 3.0)];
        Self::new("tri", Shape::TriPrism, 50.0, 50.0, 105.0, 150.0, fp, true, true, 12.0)
            .expect("standard tri is valid")
    }

    /// 40 mm diameter cylinder approximated by a regular 32-gon.
    pub fn standard_cyl() -> Self {
        let fp = geometry::regular_polygon(32, 20.0);
        Self::new("cyl", Shape::Cylinder, 40.0, 40.0, 105.0, 150.0, fp, true, true, 12.0)
            .expect("standard cylinder is valid")
    }

    /// Cone with a 40 mm base (32-gon) tapering to a point at 105 mm.
    pub fn standard_cone() -> Self {
        let fp = geometry::regular_polygon(32, 20.0);
        Self::new("cone", Shape::Cone, 40.0, 40.0, 105.0, 150.0, fp, true, true, 12.0).expect("standard cone is valid")
    }

    /// The four shipped objects in library order.
    pub fn standard_set() -> Vec<ObjectSpec> {
        vec![Self::standard_rect(), Self::standard_tri(), Self::standard_cyl(), Self::standard_cone()]
    }

    /// Footprint scale of the horizontal cross-section at height `z` above the base.
    pub fn section_scale(&self, z: f64) -> f64 {
        match self.shape {
            Shape::Cone => (1.0 - z / self.height).clamp(0.0, 1.0),
            _ => 1.0,
        }
    }

    /// Cross-section polygon at height `z`, body frame.
    pub fn cross_section(&self, z: f64) -> Vec<Vec2> {
        let k = self.section_scale(z);
        self.footprint.iter().map(|p| *p * k).collect()
    }

    /// Upward tilt of the side faces from vertical, in degrees.
    pub fn side_taper_deg(&self) -> f64 {
        match self.shape {
            Shape::Cone => {
                let r = geometry::extent_along(&self.footprint, Vec2::new(1.0, 0.0)) / 2.0;
                (r / self.height).atan().to_degrees()
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    Width,
    Depth,
    Height,
    Mass,
    NoBaseReceptacle,
    NoSwapMagnet,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::Width => "width",
            Violation::Depth => "depth",
            Violation::Height => "height",
            Violation::Mass => "mass",
            Violation::NoBaseReceptacle => "missing base insert receptacle",
            Violation::NoSwapMagnet => "missing swap magnet",
        })
    }
}

/// Outcome of a compatibility check. Empty means compatible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, v: Violation) -> bool {
        self.violations.contains(&v)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "violations: {}", parts.join(", "))
    }
}

/// Can the object ride the lower reset (string, cone and platform)?
pub fn validate_lower_compat(obj: &ObjectSpec) -> Verdict {
    let mut violations = Vec::new();
    if obj.width >= LOWER_MAX_DIM_MM {
        violations.push(Violation::Width);
    }
    if obj.depth >= LOWER_MAX_DIM_MM {
        violations.push(Violation::Depth);
    }
    if obj.height >= LOWER_MAX_DIM_MM {
        violations.push(Violation::Height);
    }
    if obj.mass > LOWER_MAX_MASS_G {
        violations.push(Violation::Mass);
    }
    if !obj.has_base_insert_receptacle {
        violations.push(Violation::NoBaseReceptacle);
    }
    Verdict { violations }
}

/// Can the swap arm move the object? Implies lower compatibility.
pub fn validate_swap_compat(obj: &ObjectSpec) -> Verdict {
    let mut verdict = validate_lower_compat(obj);
    let v = &mut verdict.violations;
    if obj.width > SWAP_MAX_FOOTPRINT_MM && !v.contains(&Violation::Width) {
        v.push(Violation::Width);
    }
    if obj.depth > SWAP_MAX_FOOTPRINT_MM && !v.contains(&Violation::Depth) {
        v.push(Violation::Depth);
    }
    if obj.mass > SWAP_MAX_MASS_G && !v.contains(&Violation::Mass) {
        v.push(Violation::Mass);
    }
    if !obj.has_swap_magnet {
        v.push(Violation::NoSwapMagnet);
    }
    verdict
}

/// One grasp trial as requested by the experimenter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub trial_id: u32,
    pub object_id: String,
    pub object_angle: f64,
    pub grasp_type: GraspType,
    pub perturb_axis: PerturbAxis,
    /// Millimeters for translations, degrees for rotations.
    pub perturb_value: f64,
    pub collect_data: bool,
}

/// A gripper opening reading at a simulated instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperSample {
    pub t_ms: u64,
    pub opening: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Completed,
    Aborted { reason: String },
}

impl TrialStatus {
    pub fn is_aborted(&self) -> bool {
        matches!(self, TrialStatus::Aborted { .. })
    }
}

/// Everything recorded about one trial.
///
/// Completed records carry a nonempty, time-ordered gripper trajectory and
/// `success` equals [`trajectory_success`] of it. Aborted records may have
/// an empty trajectory and are never successful.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub status: TrialStatus,
    pub reset_pose: Pose2D,
    pub grasp_pose: Pose6D,
    pub gripper_trajectory: Vec<GripperSample>,
    pub success: bool,
    pub transport_target_offset: f64,
    pub session_ref: String,
    pub wall_ticks: u64,
}

impl TrialRecord {
    /// Placeholder record for a trial that never reached evaluation.
    pub fn aborted(spec: TrialSpec, reason: impl Into<String>, session_ref: &str) -> Self {
        Self {
            spec,
            status: TrialStatus::Aborted { reason: reason.into() },
            reset_pose: Pose2D::default(),
            grasp_pose: Pose6D::default(),
            gripper_trajectory: Vec::new(),
            success: false,
            transport_target_offset: 0.0,
            session_ref: session_ref.to_string(),
            wall_ticks: 0,
        }
    }
}

/// The grasp holds iff the gripper never reads fully closed.
pub fn trajectory_success(traj: &[GripperSample], min_read_closed: f64) -> bool {
    !traj.is_empty() && traj.iter().all(|s| s.opening >= min_read_closed)
}

/// Strictly increasing sample times.
pub fn trajectory_is_monotonic(traj: &[GripperSample]) -> bool {
    traj.windows(2).all(|w| w[0].t_ms < w[1].t_ms)
}
