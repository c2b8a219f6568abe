//! Scripted parallel-jaw arm: grasp planning, a geometric closure oracle and
//! the lift-and-transport executor that produces gripper trajectories.
//!
//! Closure is quasi-static. The jaws sweep a strip `pad_length` wide across the
//! object's horizontal cross-section; whatever lies inside the strip and
//! between the open jaws is what they close on. In-plane misalignment between
//! the closing axis and a face pair is absorbed by the object pivoting on its
//! insert as the jaws close, so only out-of-plane angles load the contacts in
//! shear.

use thiserror::Error;

use crate::geometry::{self, Vec2, AREA_EPS};
use crate::types::{GraspType, GripperSample, ObjectSpec, PerturbAxis, Pose2D, Pose6D, TrialSpec};

pub const SAMPLE_PERIOD_MS: u64 = 100;
pub const CLOSE_SPEED_MM_S: f64 = 100.0;
pub const LIFT_MS: u64 = 500;
pub const TRANSPORT_MM: f64 = 250.0;
pub const TRANSPORT_SPEED_MM_S: f64 = 100.0;

/// Axis/grasp pairs the shipped trial matrix exercises.
pub const SUPPORTED: &[(GraspType, PerturbAxis)] = &[
    (GraspType::Top, PerturbAxis::XTrans),
    (GraspType::Top, PerturbAxis::YTrans),
    (GraspType::Top, PerturbAxis::XRot),
    (GraspType::Top, PerturbAxis::YRot),
    (GraspType::Top, PerturbAxis::ZRot),
    (GraspType::Side, PerturbAxis::XTrans),
    (GraspType::Side, PerturbAxis::XRot),
    (GraspType::Side, PerturbAxis::ZRot),
];

pub fn is_supported(grasp: GraspType, axis: PerturbAxis) -> bool {
    SUPPORTED.contains(&(grasp, axis))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{axis} perturbation is not defined for {grasp} grasps")]
    UnsupportedCombination { grasp: GraspType, axis: PerturbAxis },
    #[error("perturbation value {0} is not finite")]
    InvalidValue(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid gripper model: {0}")]
pub struct GripperModelError(&'static str);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperModel {
    pub max_opening: f64,
    pub pad_length: f64,
    pub pad_height: f64,
    /// Openings below this read as fully closed.
    pub min_read_closed: f64,
    pub friction_mu: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self { max_opening: 85.0, pad_length: 40.0, pad_height: 20.0, min_read_closed: 3.0, friction_mu: 0.65 }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GripperModelError> {
        let all = [self.max_opening, self.pad_length, self.pad_height, self.min_read_closed, self.friction_mu];
        if !all.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(GripperModelError("all parameters must be positive"));
        }
        if self.min_read_closed >= self.max_opening {
            return Err(GripperModelError("min_read_closed must be below max_opening"));
        }
        Ok(())
    }

    /// Largest contact angle friction can hold, degrees.
    pub fn friction_angle_deg(&self) -> f64 {
        self.friction_mu.atan().to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPlan {
    /// Gripper frame at closure.
    pub pose: Pose6D,
    /// Unit closing direction projected onto the table.
    pub closing_axis: Vec2,
    pub grasp_type: GraspType,
    /// Tilt of the approach against gravity, degrees.
    pub approach_tilt: f64,
}

impl GraspPlan {
    /// Angle of the closing axis out of the horizontal plane, degrees.
    pub fn closing_elevation(&self) -> f64 {
        let c = rotate3(&self.pose, nominal_closing(self.grasp_type));
        c[2].abs().min(1.0).asin().to_degrees()
    }
}

fn nominal_closing(grasp: GraspType) -> [f64; 3] {
    match grasp {
        GraspType::Top => [1.0, 0.0, 0.0],
        GraspType::Side => [0.0, 1.0, 0.0],
    }
}

fn nominal_approach(grasp: GraspType) -> [f64; 3] {
    match grasp {
        GraspType::Top => [0.0, 0.0, -1.0],
        GraspType::Side => [1.0, 0.0, 0.0],
    }
}

/// Applies Rz(yaw)·Ry(pitch)·Rx(roll) to `v`.
fn rotate3(pose: &Pose6D, v: [f64; 3]) -> [f64; 3] {
    let (sr, cr) = pose.roll.to_radians().sin_cos();
    let (sp, cp) = pose.pitch.to_radians().sin_cos();
    let (sy, cy) = pose.yaw.to_radians().sin_cos();
    let [x, y, z] = v;
    let (y, z) = (cr * y - sr * z, sr * y + cr * z);
    let (x, z) = (cp * x + sp * z, -sp * x + cp * z);
    let (x, y) = (cy * x - sy * y, sy * x + cy * y);
    [x, y, z]
}

/// Nominal centered grasp with the single perturbation of `spec` applied.
pub fn plan_grasp(
    spec: &TrialSpec,
    obj: &ObjectSpec,
    obj_pose: Pose2D,
    _g: &GripperModel,
) -> Result<GraspPlan, PlanError> {
    let (grasp, axis, v) = (spec.grasp_type, spec.perturb_axis, spec.perturb_value);
    if !is_supported(grasp, axis) {
        return Err(PlanError::UnsupportedCombination { grasp, axis });
    }
    if !v.is_finite() {
        return Err(PlanError::InvalidValue(v));
    }
    let mut p = [obj_pose.x, obj_pose.y, obj.height / 2.0, 0.0, 0.0, 0.0];
    match axis {
        PerturbAxis::XTrans => p[0] += v,
        PerturbAxis::YTrans => p[1] += v,
        PerturbAxis::ZTrans => p[2] += v,
        PerturbAxis::XRot => p[3] = v,
        PerturbAxis::YRot => p[4] = v,
        PerturbAxis::ZRot => p[5] = v,
    }
    let pose = Pose6D::new(p[0], p[1], p[2], p[3], p[4], p[5]);
    let c = rotate3(&pose, nominal_closing(grasp));
    let planar = Vec2::new(c[0], c[1]);
    let closing_axis = if planar.norm() > 1e-9 {
        planar.normalized()
    } else {
        let n = nominal_closing(grasp);
        Vec2::new(n[0], n[1]).rotated_deg(pose.yaw)
    };
    let a = rotate3(&pose, nominal_approach(grasp));
    let approach_tilt = match grasp {
        GraspType::Top => (-a[2]).clamp(-1.0, 1.0).acos().to_degrees(),
        GraspType::Side => a[2].abs().min(1.0).asin().to_degrees(),
    };
    Ok(GraspPlan { pose, closing_axis, grasp_type: grasp, approach_tilt })
}

/// Cross-section the pads meet first: the lower pad edge, clamped to the object.
fn contact_section(plan: &GraspPlan, obj: &ObjectSpec, obj_pose: Pose2D, g: &GripperModel) -> Vec<Vec2> {
    let z = (plan.pose.z - g.pad_height / 2.0).clamp(0.0, obj.height);
    geometry::transform(&obj.cross_section(z), obj_pose.position(), obj_pose.theta)
}

/// Extent along the closing axis of the object section inside the pad sweep, mm.
pub fn closure_width(plan: &GraspPlan, obj: &ObjectSpec, obj_pose: Pose2D, g: &GripperModel) -> f64 {
    let section = contact_section(plan, obj, obj_pose, g);
    let c = Vec2::new(plan.pose.x, plan.pose.y);
    let a = plan.closing_axis;
    let p = a.perp();
    let half_pad = g.pad_length / 2.0;
    let half_open = g.max_opening / 2.0;
    let mut region = section;
    for (n, half) in [(p, half_pad), (-p, half_pad), (a, half_open), (-a, half_open)] {
        region = geometry::clip_half_plane(&region, n, n.dot(c) + half);
    }
    if geometry::signed_area(&region).abs() <= AREA_EPS {
        0.0
    } else {
        geometry::extent_along(&region, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    NothingGrasped,
    Slip,
    Tilt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspOutcome {
    pub success: bool,
    pub failure: Option<FailureMode>,
    pub closure_width: f64,
    pub trajectory: Vec<GripperSample>,
    pub duration_ms: u64,
    /// Where the object comes to rest.
    pub final_object_pose: Pose2D,
    /// Distance of the resting object from the transport target.
    pub transport_target_offset: f64,
}

/// Closes, lifts and carries the object to the transport target, sampling the
/// gripper opening every [`SAMPLE_PERIOD_MS`] from `clock_ms`.
pub fn execute_grasp_and_transport(
    plan: &GraspPlan,
    obj: &ObjectSpec,
    obj_pose: Pose2D,
    g: &GripperModel,
    clock_ms: u64,
) -> GraspOutcome {
    let w = closure_width(plan, obj, obj_pose, g);
    let limit = g.friction_angle_deg();
    let failure = if w < g.min_read_closed {
        Some(FailureMode::NothingGrasped)
    } else if plan.closing_elevation() + obj.side_taper_deg() > limit {
        Some(FailureMode::Slip)
    } else if plan.approach_tilt > limit {
        Some(FailureMode::Tilt)
    } else {
        None
    };

    let step_mm = CLOSE_SPEED_MM_S * SAMPLE_PERIOD_MS as f64 / 1000.0;
    let held = w.max(0.0);
    let mut traj = Vec::new();
    let mut k: u64 = 0;
    let mut push = |k: &mut u64, opening: f64| {
        traj.push(GripperSample { t_ms: clock_ms + *k * SAMPLE_PERIOD_MS, opening });
        *k += 1;
    };
    let mut opening = g.max_opening;
    push(&mut k, opening);
    while opening > held {
        opening = (opening - step_mm).max(held);
        push(&mut k, opening);
    }
    for _ in 0..LIFT_MS / SAMPLE_PERIOD_MS {
        push(&mut k, held);
    }
    let transport_ms = (TRANSPORT_MM / TRANSPORT_SPEED_MM_S * 1000.0) as u64;
    let transport_steps = transport_ms / SAMPLE_PERIOD_MS;
    let drops = matches!(failure, Some(FailureMode::Slip | FailureMode::Tilt));
    for i in 1..=transport_steps {
        let opening = if drops && 2 * i > transport_steps { 0.0 } else { held };
        push(&mut k, opening);
    }
    let duration_ms = (k - 1) * SAMPLE_PERIOD_MS;

    let (carried, offset) = match failure {
        None => (TRANSPORT_MM, 0.0),
        Some(FailureMode::NothingGrasped) => (0.0, TRANSPORT_MM),
        Some(_) => (TRANSPORT_MM / 2.0, TRANSPORT_MM / 2.0),
    };
    GraspOutcome {
        success: crate::types::trajectory_success(&traj, g.min_read_closed),
        failure,
        closure_width: w,
        trajectory: traj,
        duration_ms,
        final_object_pose: Pose2D::new(obj_pose.x + carried, obj_pose.y, obj_pose.theta),
        transport_target_offset: offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::trajectory_is_monotonic;
    use proptest::prelude::*;

    fn spec(grasp: GraspType, axis: PerturbAxis, v: f64) -> TrialSpec {
        TrialSpec {
            trial_id: 1,
            object_id: "rect".into(),
            object_angle: 0.0,
            grasp_type: grasp,
            perturb_axis: axis,
            perturb_value: v,
            collect_data: false,
        }
    }

    fn plan(grasp: GraspType, axis: PerturbAxis, v: f64) -> GraspPlan {
        plan_grasp(&spec(grasp, axis, v), &ObjectSpec::standard_rect(), Pose2D::default(), &GripperModel::default())
            .unwrap()
    }

    fn width(grasp: GraspType, axis: PerturbAxis, v: f64) -> f64 {
        closure_width(&plan(grasp, axis, v), &ObjectSpec::standard_rect(), Pose2D::default(), &GripperModel::default())
    }

    fn run(obj: &ObjectSpec, grasp: GraspType, axis: PerturbAxis, v: f64) -> GraspOutcome {
        let g = GripperModel::default();
        let p = plan_grasp(&spec(grasp, axis, v), obj, Pose2D::default(), &g).unwrap();
        execute_grasp_and_transport(&p, obj, Pose2D::default(), &g, 1000)
    }

    #[test]
    fn centered_cube_width() {
        assert!((width(GraspType::Top, PerturbAxis::XTrans, 0.0) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn offset_pad_strip_overlap() {
        assert_eq!(width(GraspType::Top, PerturbAxis::YTrans, 50.0), 0.0);
        assert!((width(GraspType::Top, PerturbAxis::YTrans, 30.0) - 40.0).abs() < 1e-9);
        // strip edge touching the face encloses no area
        assert_eq!(width(GraspType::Top, PerturbAxis::YTrans, 40.0), 0.0);
    }

    #[test]
    fn translation_is_additive() {
        let p = plan(GraspType::Top, PerturbAxis::YTrans, 30.0);
        assert_eq!((p.pose.x, p.pose.y, p.pose.z), (0.0, 30.0, 52.5));
        assert_eq!((p.pose.roll, p.pose.pitch, p.pose.yaw), (0.0, 0.0, 0.0));
        assert_eq!(p.approach_tilt, 0.0);
    }

    #[test]
    fn top_pitch_tilts_approach() {
        let p = plan(GraspType::Top, PerturbAxis::YRot, 33.0);
        assert!((p.approach_tilt - 33.0).abs() < 1e-9);
        assert!((p.closing_elevation() - 33.0).abs() < 1e-9);
    }

    #[test]
    fn side_yaw_spins_closing_axis() {
        let p = plan(GraspType::Side, PerturbAxis::ZRot, 60.0);
        let expect = Vec2::new(0.0, 1.0).rotated_deg(60.0);
        assert!((p.closing_axis - expect).norm() < 1e-12);
        assert_eq!(p.approach_tilt, 0.0);
    }

    #[test]
    fn unsupported_pairs_rejected() {
        let g = GripperModel::default();
        let rect = ObjectSpec::standard_rect();
        for (grasp, axis) in [
            (GraspType::Top, PerturbAxis::ZTrans),
            (GraspType::Side, PerturbAxis::YTrans),
            (GraspType::Side, PerturbAxis::YRot),
        ] {
            assert_eq!(
                plan_grasp(&spec(grasp, axis, 1.0), &rect, Pose2D::default(), &g),
                Err(PlanError::UnsupportedCombination { grasp, axis })
            );
        }
    }

    #[test]
    fn pitch_boundary_at_friction_angle() {
        let rect = ObjectSpec::standard_rect();
        assert!(run(&rect, GraspType::Top, PerturbAxis::YRot, 30.0).success);
        let fail = run(&rect, GraspType::Top, PerturbAxis::YRot, 40.0);
        assert!(!fail.success);
        assert_eq!(fail.failure, Some(FailureMode::Slip));
        assert!(fail.trajectory.last().unwrap().opening < 3.0);
    }

    #[test]
    fn empty_grasp_reads_closed() {
        let out = run(&ObjectSpec::standard_rect(), GraspType::Top, PerturbAxis::YTrans, 50.0);
        assert!(!out.success);
        assert_eq!(out.failure, Some(FailureMode::NothingGrasped));
        assert!(out.trajectory.last().unwrap().opening < 3.0);
        assert_eq!(out.final_object_pose, Pose2D::default());
    }

    #[test]
    fn nominal_grasps_succeed_on_all_objects() {
        for obj in ObjectSpec::standard_set() {
            for grasp in [GraspType::Top, GraspType::Side] {
                let out = run(&obj, grasp, PerturbAxis::XTrans, 0.0);
                assert!(out.success, "{} {grasp}", obj.id);
                assert!((out.final_object_pose.x - TRANSPORT_MM).abs() < 1e-9);
                assert_eq!(out.transport_target_offset, 0.0);
            }
        }
    }

    #[test]
    fn trajectory_layout() {
        let out = run(&ObjectSpec::standard_rect(), GraspType::Top, PerturbAxis::XTrans, 0.0);
        let t = &out.trajectory;
        assert_eq!(t[0], GripperSample { t_ms: 1000, opening: 85.0 });
        // 45 mm of closing at 10 mm per sample, then lift and transport
        assert_eq!(t.len(), 1 + 5 + 5 + 25);
        assert_eq!(out.duration_ms, 3500);
        assert!(trajectory_is_monotonic(t));
    }

    #[test]
    fn cone_taper_lowers_pitch_limit() {
        let cone = ObjectSpec::standard_cone();
        assert!(run(&cone, GraspType::Top, PerturbAxis::YRot, 20.0).success);
        assert!(!run(&cone, GraspType::Top, PerturbAxis::YRot, 25.0).success);
        assert!(run(&cone, GraspType::Top, PerturbAxis::XRot, 30.0).success);
    }

    proptest! {
        #[test]
        fn success_matches_trajectory(v in 0.0f64..90.0, axis in 0usize..8, obj in 0usize..4, theta in 0.0f64..360.0) {
            let (grasp, axis) = SUPPORTED[axis];
            let obj = &ObjectSpec::standard_set()[obj];
            let g = GripperModel::default();
            let pose = Pose2D::new(0.0, 0.0, theta);
            let p = plan_grasp(&spec(grasp, axis, v), obj, pose, &g).unwrap();
            let out = execute_grasp_and_transport(&p, obj, pose, &g, 0);
            let min = out.trajectory.iter().map(|s| s.opening).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(out.success, min >= g.min_read_closed);
            prop_assert!(trajectory_is_monotonic(&out.trajectory));
        }

        #[test]
        fn width_invariant_under_half_turn(dx in -60.0f64..60.0, dy in -60.0f64..60.0, yaw in -90.0f64..90.0, theta in 0.0f64..360.0, obj in 0usize..4) {
            let obj = &ObjectSpec::standard_set()[obj];
            let g = GripperModel::default();
            let mut p = plan(GraspType::Top, PerturbAxis::ZRot, yaw);
            p.pose.x = dx;
            p.pose.y = dy;
            let a = closure_width(&p, obj, Pose2D::new(0.0, 0.0, theta), &g);
            let mut q = p;
            q.pose.x = -dx;
            q.pose.y = -dy;
            q.closing_axis = -p.closing_axis;
            let b = closure_width(&q, obj, Pose2D::new(0.0, 0.0, theta + 180.0), &g);
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}
