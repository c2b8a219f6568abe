use crate::record::{Record, RecordError, Value};
use crate::types::{GripperSample, Pose2D, Pose6D, TrialRecord, TrialSpec, TrialStatus};

fn invalid(key: &str, message: impl Into<String>) -> RecordError {
    RecordError::Invalid { key: key.to_string(), message: message.into() }
}

fn parse_enum<T: std::str::FromStr>(rec: &Record, key: &str) -> Result<T, RecordError>
where
    T::Err: std::fmt::Display,
{
    rec.str(key)?.parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

pub fn trial_to_record(rec: &TrialRecord) -> Record {
    let s = &rec.spec;
    let mut r = Record::new()
        .with("id", Value::U(s.trial_id as u64))
        .with("object", Value::S(s.object_id.clone()))
        .with("angle", Value::F(s.object_angle))
        .with("grasp", Value::S(s.grasp_type.as_str().into()))
        .with("axis", Value::S(s.perturb_axis.as_str().into()))
        .with("value", Value::F(s.perturb_value))
        .with("collect", Value::B(s.collect_data));
    match &rec.status {
        TrialStatus::Completed => r.push("status", Value::S("completed".into())),
        TrialStatus::Aborted { reason } => {
            r.push("status", Value::S("aborted".into())).push("reason", Value::S(reason.clone()))
        }
    };
    let p = &rec.reset_pose;
    r.push("reset", Value::FL(vec![p.x, p.y, p.theta]));
    r.push("grasp_pose", Value::FL(rec.grasp_pose.to_array().to_vec()));
    r.push("traj_t", Value::UL(rec.gripper_trajectory.iter().map(|s| s.t_ms).collect()));
    r.push("traj_open", Value::FL(rec.gripper_trajectory.iter().map(|s| s.opening).collect()));
    r.push("success", Value::B(rec.success));
    r.push("offset", Value::F(rec.transport_target_offset));
    r.push("session", Value::S(rec.session_ref.clone()));
    r.push("ticks", Value::U(rec.wall_ticks));
    r
}

pub fn trial_from_record(r: &Record) -> Result<TrialRecord, RecordError> {
    let id = r.u64("id")?;
    let spec = TrialSpec {
        trial_id: u32::try_from(id).map_err(|_| invalid("id", "out of range"))?,
        object_id: r.str("object")?.to_string(),
        object_angle: r.f64("angle")?,
        grasp_type: parse_enum(r, "grasp")?,
        perturb_axis: parse_enum(r, "axis")?,
        perturb_value: r.f64("value")?,
        collect_data: r.bool("collect")?,
    };
    let status = match r.str("status")? {
        "completed" => TrialStatus::Completed,
        "aborted" => TrialStatus::Aborted { reason: r.str("reason")?.to_string() },
        other => return Err(invalid("status", format!("unknown status `{other}`"))),
    };
    let reset = r.f64_list("reset")?;
    let [x, y, theta] = reset else {
        return Err(invalid("reset", "expected 3 values"));
    };
    let pose: [f64; 6] =
        r.f64_list("grasp_pose")?.try_into().map_err(|_| invalid("grasp_pose", "expected 6 values"))?;
    let ts = r.u64_list("traj_t")?;
    let openings = r.f64_list("traj_open")?;
    if ts.len() != openings.len() {
        return Err(invalid("traj_open", "length differs from traj_t"));
    }
    Ok(TrialRecord {
        spec,
        status,
        reset_pose: Pose2D { x: *x, y: *y, theta: *theta },
        grasp_pose: Pose6D::from_array(pose),
        gripper_trajectory: ts.iter().zip(openings).map(|(&t_ms, &opening)| GripperSample { t_ms, opening }).collect(),
        success: r.bool("success")?,
        transport_target_offset: r.f64("offset")?,
        session_ref: r.str("session")?.to_string(),
        wall_ticks: r.u64("ticks")?,
    })
}
