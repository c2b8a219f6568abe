use std::fs::{self, OpenOptions};
use std::io::Write;

use proptest::prelude::*;

use super::*;
use crate::types::{GraspType, GripperSample, PerturbAxis, Pose2D, Pose6D, TrialSpec, TrialStatus};

fn spec(id: u32) -> TrialSpec {
    TrialSpec {
        trial_id: id,
        object_id: "rect".into(),
        object_angle: 15.0,
        grasp_type: GraspType::Top,
        perturb_axis: PerturbAxis::XTrans,
        perturb_value: 12.5,
        collect_data: true,
    }
}

fn completed(id: u32) -> TrialRecord {
    TrialRecord {
        spec: spec(id),
        status: TrialStatus::Completed,
        reset_pose: Pose2D::new(0.1, -0.2, 15.0),
        grasp_pose: Pose6D::new(12.5, 0.0, 50.0, 0.0, 0.0, 15.0),
        gripper_trajectory: vec![GripperSample { t_ms: 0, opening: 85.0 }, GripperSample { t_ms: 100, opening: 40.0 }],
        success: true,
        transport_target_offset: 0.0,
        session_ref: "s".into(),
        wall_ticks: 42,
    }
}

fn header() -> SessionHeader {
    SessionHeader::new(7, 0)
}

#[test]
fn write_then_read() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("session");
    let mut w = SessionWriter::create(&root, header(), Durability::Flush).unwrap();
    w.record_channel("gripper_state", 0, &Record::new().with("opening", Value::F(85.0))).unwrap();
    w.record_channel("gripper_state", 100, &Record::new().with("opening", Value::F(40.0))).unwrap();
    w.write_trial_record(&completed(1)).unwrap();
    let aborted = TrialRecord::aborted(spec(2), "device fault: tether limit", "s");
    w.write_trial_record(&aborted).unwrap();
    w.close().unwrap();

    let s = read_session(&root).unwrap();
    assert!(s.closed);
    assert_eq!(s.header, header());
    assert_eq!(s.trials, vec![completed(1), aborted]);
    let ch = s.channel("gripper_state").unwrap();
    assert_eq!(ch.time_range(), Some((0, 100)));
    assert_eq!(ch.entries[1].1.f64("opening").unwrap(), 40.0);
    assert_eq!(s.truncations, 0);
}

#[test]
fn session_id_is_deterministic() {
    assert_eq!(SessionHeader::new(7, 0), SessionHeader::new(7, 0));
    assert_ne!(SessionHeader::new(7, 0).session_id, SessionHeader::new(8, 0).session_id);
}

#[test]
fn timestamp_regression_is_rejected_and_nothing_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    let p = Record::new().with("x", Value::F(1.0));
    w.record_channel("arm_state", 100, &p).unwrap();
    w.record_channel("arm_state", 100, &p).unwrap();
    let err = w.record_channel("arm_state", 50, &p).unwrap_err();
    assert!(matches!(err, LogError::TimestampRegression { t: 50, last: 100, .. }));
    // other channels keep their own clocks
    w.record_channel("object_pose", 50, &p).unwrap();
    let s = read_session(dir.path()).unwrap();
    assert_eq!(s.channel("arm_state").unwrap().entries.len(), 2);
    assert!(!s.closed);
}

#[test]
fn duplicate_trial_and_closed_session() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Sync).unwrap();
    w.write_trial_record(&completed(3)).unwrap();
    assert!(matches!(w.write_trial_record(&completed(3)), Err(LogError::DuplicateTrialId(3))));
    w.close().unwrap();
    assert!(matches!(w.write_trial_record(&completed(4)), Err(LogError::SessionClosed)));
    assert!(matches!(w.record_channel("arm_state", 0, &Record::new()), Err(LogError::SessionClosed)));
    assert!(matches!(w.close(), Err(LogError::SessionClosed)));
}

#[test]
fn bad_channel_names() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    for name in ["", "Top", "../x", "a b", "manifest.log", "trials"] {
        assert!(matches!(w.record_channel(name, 0, &Record::new()), Err(LogError::InvalidChannel(_))));
    }
}

#[test]
fn refuses_nonempty_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk"), "x").unwrap();
    assert!(matches!(SessionWriter::create(dir.path(), header(), Durability::Flush), Err(LogError::Exists(_))));
}

#[test]
fn truncated_tail_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    w.write_trial_record(&completed(1)).unwrap();
    w.record_channel("top_cam", 5, &Record::new().with("frame", Value::U(1))).unwrap();
    drop(w);
    // simulate a kill mid-write in two files
    let line = trial_to_record(&completed(2)).to_line();
    let mut f = OpenOptions::new().append(true).open(dir.path().join(TRIALS)).unwrap();
    f.write_all(&line.as_bytes()[..line.len() / 2]).unwrap();
    let mut f = OpenOptions::new().append(true).open(dir.path().join("top_cam.log")).unwrap();
    f.write_all(b"t:u=9 fra").unwrap();

    let s = read_session(dir.path()).unwrap();
    assert_eq!(s.trials, vec![completed(1)]);
    assert_eq!(s.channel("top_cam").unwrap().entries.len(), 1);
    assert!(s.channel("top_cam").unwrap().truncated);
    assert_eq!(s.truncations, 2);
    assert!(!s.closed);
}

#[test]
fn corrupt_complete_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    w.write_trial_record(&completed(1)).unwrap();
    drop(w);
    let mut f = OpenOptions::new().append(true).open(dir.path().join(TRIALS)).unwrap();
    f.write_all(b"id:u=oops\n").unwrap();
    assert!(matches!(read_session(dir.path()), Err(LogError::CorruptRecord { line: 2, .. })));
}

#[test]
fn index_must_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    w.write_trial_record(&completed(1)).unwrap();
    drop(w);
    let mut f = OpenOptions::new().append(true).open(dir.path().join(MANIFEST)).unwrap();
    f.write_all(b"kind:s=trial id:u=9 offset:u=0\n").unwrap();
    assert!(matches!(read_session(dir.path()), Err(LogError::CorruptManifest(_))));
}

#[test]
fn missing_channel_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
    w.record_channel("wrist_cam", 0, &Record::new()).unwrap();
    drop(w);
    fs::remove_file(dir.path().join("wrist_cam.log")).unwrap();
    assert!(matches!(
        read_session(dir.path()),
        Err(LogError::MissingChannelFile(f)) if f == "wrist_cam.log"
    ));
}

#[test]
fn not_a_session() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_session(dir.path()), Err(LogError::CorruptManifest(_))));
    fs::write(dir.path().join(MANIFEST), "kind:s=closed\n").unwrap();
    assert!(matches!(read_session(dir.path()), Err(LogError::CorruptManifest(_))));
}

fn arb_record() -> impl Strategy<Value = TrialRecord> {
    (
        any::<u32>(),
        "[a-z_ %,=]{1,12}",
        -180.0..180.0f64,
        prop::sample::select(GraspType::ALL.to_vec()),
        prop::sample::select(PerturbAxis::ALL.to_vec()),
        -100.0..100.0f64,
        prop::collection::vec((0u64..10_000, 0.0..85.0f64), 0..20),
        any::<bool>(),
        prop::option::of("[ -~]{0,30}"),
    )
        .prop_map(|(id, object, angle, grasp, axis, value, traj, success, abort)| {
            let mut r = completed(id);
            r.spec.object_id = object;
            r.spec.object_angle = angle;
            r.spec.grasp_type = grasp;
            r.spec.perturb_axis = axis;
            r.spec.perturb_value = value;
            r.gripper_trajectory = traj.into_iter().map(|(t_ms, opening)| GripperSample { t_ms, opening }).collect();
            r.success = success;
            if let Some(reason) = abort {
                r.status = TrialStatus::Aborted { reason };
            }
            r
        })
}

proptest! {
    #[test]
    fn trial_lines_are_lossless_and_single_line(rec in arb_record()) {
        let line = trial_to_record(&rec).to_line();
        prop_assert!(!line.contains('\n'));
        let back = trial_from_record(&Record::parse(&line).unwrap()).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn any_prefix_reads_back_as_a_prefix(n in 1usize..6, cut in 0usize..4000) {
        let dir = tempfile::tempdir().unwrap();
        let mut w = SessionWriter::create(dir.path(), header(), Durability::Flush).unwrap();
        let recs: Vec<_> = (0..n as u32).map(completed).collect();
        for r in &recs {
            w.write_trial_record(r).unwrap();
        }
        drop(w);
        let path = dir.path().join(TRIALS);
        let bytes = fs::read(&path).unwrap();
        let keep = cut.min(bytes.len());
        fs::write(&path, &bytes[..keep]).unwrap();
        // the manifest may index trials past the cut; only the trial file is checked here
        let text = String::from_utf8(bytes[..keep].to_vec()).unwrap();
        let (lines, _) = complete_lines(&text);
        let parsed: Vec<_> = lines
            .iter()
            .map(|(_, l)| trial_from_record(&Record::parse(l).unwrap()).unwrap())
            .collect();
        prop_assert_eq!(&parsed[..], &recs[..parsed.len()]);
    }
}
