use proptest::prelude::*;

use super::*;
use crate::datalog::{read_session, Durability, SessionHeader};
use crate::device::{Device, DeviceConfig};
use crate::protocol::PipeEnd;
use crate::rig::{FaultRule, InProcRig, Rig};
use crate::types::{GraspType, PerturbAxis};

struct Harness {
    orch: Orchestrator<PipeEnd, PipeEnd>,
    log: SessionWriter,
    _dir: tempfile::TempDir,
}

fn harness_with(cfg: DeviceConfig, faults: &[FaultRule], seed: u64) -> Harness {
    let device = Device::new(cfg, ObjectLibrary::standard()).unwrap();
    let mut rig = Rig::new(device, GripperModel::default());
    for f in faults {
        rig = rig.with_fault(*f);
    }
    // server threads exit on their own when the orchestrator's ends drop
    let (device_end, arm_end, _threads) = InProcRig::spawn(rig.shared()).into_parts();
    let orch = Orchestrator::new(
        ActionClient::new(device_end),
        ActionClient::new(arm_end),
        ObjectLibrary::standard(),
        GripperModel::default(),
        seed,
    );
    let dir = tempfile::tempdir().unwrap();
    let log = SessionWriter::create(dir.path().join("s"), SessionHeader::new(seed, 0), Durability::Flush).unwrap();
    Harness { orch, log, _dir: dir }
}

fn harness() -> Harness {
    harness_with(DeviceConfig::default(), &[], 7)
}

fn spec(id: u32, object: &str, axis: PerturbAxis, value: f64) -> TrialSpec {
    TrialSpec {
        trial_id: id,
        object_id: object.into(),
        object_angle: 0.0,
        grasp_type: GraspType::Top,
        perturb_axis: axis,
        perturb_value: value,
        collect_data: true,
    }
}

#[test]
fn nominal_trial_succeeds_near_center() {
    let mut h = harness();
    let run = h.orch.run_trial(&spec(1, "rect", PerturbAxis::YRot, 0.0), &mut h.log).unwrap();
    assert!(run.record.success);
    assert_eq!(run.record.status, TrialStatus::Completed);
    assert!(run.record.reset_pose.x.abs() < 0.5 && run.record.reset_pose.y.abs() < 0.5);
    assert!(crate::types::angle_diff_deg(run.record.reset_pose.theta, 0.0).abs() < 10.0);
    assert_eq!(run.record.transport_target_offset, 0.0);
    assert_eq!(run.trace, TrialPhase::ORDER.to_vec());
    assert_eq!(run.goals, vec![OpCode::LowerReset, OpCode::Grasp]);
    assert!(run.feedback.contains(&Stage::ObjectSeated));
    assert!(run.feedback.contains(&Stage::Transported));
    assert!(run.record.wall_ticks > 0);
}

#[test]
fn one_swap_per_object_change() {
    let mut h = harness();
    let run = h.orch.run_trial(&spec(1, "tri", PerturbAxis::XTrans, 0.0), &mut h.log).unwrap();
    assert_eq!(run.goals, vec![OpCode::Home, OpCode::Swap, OpCode::LowerReset, OpCode::Grasp]);
    let run = h.orch.run_trial(&spec(2, "tri", PerturbAxis::XTrans, 5.0), &mut h.log).unwrap();
    assert!(!run.goals.contains(&OpCode::Swap));
    let run = h.orch.run_trial(&spec(3, "cone", PerturbAxis::XTrans, 0.0), &mut h.log).unwrap();
    assert_eq!(run.goals.iter().filter(|&&g| g == OpCode::Swap).count(), 1);
    assert!(!run.goals.contains(&OpCode::Home));
}

#[test]
fn failed_grasp_is_recorded_not_aborted() {
    let mut h = harness();
    let run = h.orch.run_trial(&spec(1, "rect", PerturbAxis::YRot, 90.0), &mut h.log).unwrap();
    assert!(!run.record.success);
    assert_eq!(run.record.status, TrialStatus::Completed);
    assert!(run.record.transport_target_offset > 0.0);
    // the object was dropped away from center; the next reset recovers it
    let run = h.orch.run_trial(&spec(2, "rect", PerturbAxis::YRot, 0.0), &mut h.log).unwrap();
    assert!(run.record.success);
}

#[test]
fn device_fault_aborts_and_is_recorded() {
    let rule = FaultRule { op: OpCode::LowerReset, nth: 1 };
    let mut h = harness_with(DeviceConfig::default(), &[rule], 7);
    let abort = h.orch.run_trial(&spec(1, "rect", PerturbAxis::XTrans, 0.0), &mut h.log).unwrap_err();
    assert!(matches!(abort.fault, TrialFault::Device { op: OpCode::LowerReset, detail: Detail::Injected }));
    assert_eq!(abort.run.trace, vec![TrialPhase::SwapIfNeeded, TrialPhase::Reset, TrialPhase::Aborted]);
    assert!(is_legal_trace(&abort.run.trace));
    assert!(abort.run.record.status.is_aborted());
    assert!(!abort.run.record.success);
    let s = read_session(h.log.root()).unwrap();
    assert_eq!(s.trials, vec![abort.run.record.clone()]);
}

#[test]
fn missing_object_aborts() {
    let mut h = harness();
    let abort = h.orch.run_trial(&spec(1, "mug", PerturbAxis::XTrans, 0.0), &mut h.log).unwrap_err();
    assert!(matches!(abort.fault, TrialFault::ObjectUnavailable(_)));
}

#[test]
fn unsupported_combination_aborts_in_planning() {
    let mut h = harness();
    let mut s = spec(1, "rect", PerturbAxis::YTrans, 10.0);
    s.grasp_type = GraspType::Side;
    let abort = h.orch.run_trial(&s, &mut h.log).unwrap_err();
    assert!(matches!(abort.fault, TrialFault::Plan(_)));
    assert_eq!(abort.run.trace.last(), Some(&TrialPhase::Aborted));
    assert_eq!(abort.run.trace[abort.run.trace.len() - 2], TrialPhase::PlanGrasp);
}

fn nominal_batch(n: u32) -> Vec<TrialSpec> {
    (1..=n).map(|i| spec(i, "rect", PerturbAxis::YRot, 0.0)).collect()
}

#[test]
fn abort_policy_stops_at_first_fault() {
    let rule = FaultRule { op: OpCode::LowerReset, nth: 3 };
    let mut h = harness_with(DeviceConfig::default(), &[rule], 7);
    let mut acked = Vec::new();
    let summary =
        h.orch.run_batch(&nominal_batch(6), &mut h.log, FaultPolicy::AbortOnFault, |r| acked.push(r.spec.trial_id));
    assert_eq!((summary.completed, summary.aborted, summary.unrun), (2, 1, 3));
    assert!(summary.stopped.is_some());
    assert_eq!(acked, vec![1, 2, 3]);
}

#[test]
fn skip_policy_continues() {
    let rule = FaultRule { op: OpCode::Grasp, nth: 2 };
    let mut h = harness_with(DeviceConfig::default(), &[rule], 7);
    let summary = h.orch.run_batch(&nominal_batch(5), &mut h.log, FaultPolicy::SkipOnFault, |_| {});
    assert_eq!((summary.completed, summary.aborted, summary.unrun), (4, 1, 0));
    assert_eq!(summary.success_count, 4);
    h.log.close().unwrap();
    let s = read_session(h.log.root()).unwrap();
    assert_eq!(s.trials.len(), 5);
    assert!(s.trials[1].status.is_aborted());
}

#[test]
fn batches_are_deterministic() {
    let specs: Vec<_> = [
        ("rect", PerturbAxis::XTrans, 12.0),
        ("tri", PerturbAxis::YRot, 40.0),
        ("cyl", PerturbAxis::XRot, 20.0),
        ("rect", PerturbAxis::ZRot, 30.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, (o, a, v))| spec(i as u32 + 1, o, *a, *v))
    .collect();
    let run = || {
        let mut h = harness();
        let summary = h.orch.run_batch(&specs, &mut h.log, FaultPolicy::AbortOnFault, |_| {});
        h.log.close().unwrap();
        let root = h.log.root().to_path_buf();
        let files: Vec<_> = ["manifest", "trials.log", "gripper_state.log", "top_cam.log"]
            .iter()
            .map(|f| std::fs::read(root.join(f)).unwrap())
            .collect();
        (summary, files)
    };
    assert_eq!(run(), run());
}

#[test]
fn channels_are_written_only_when_collecting() {
    let mut h = harness();
    let mut s = spec(1, "rect", PerturbAxis::YRot, 0.0);
    s.collect_data = false;
    h.orch.run_trial(&s, &mut h.log).unwrap();
    assert!(read_session(h.log.root()).unwrap().channels.is_empty());
    s.trial_id = 2;
    s.collect_data = true;
    let run = h.orch.run_trial(&s, &mut h.log).unwrap();
    let session = read_session(h.log.root()).unwrap();
    for ch in ["gripper_state", "arm_state", "object_pose", "top_cam", "side_cam", "wrist_cam"] {
        assert!(session.channel(ch).is_some(), "{ch}");
    }
    assert_eq!(session.channel("gripper_state").unwrap().entries.len(), run.record.gripper_trajectory.len());
}

#[test]
fn legal_traces() {
    use TrialPhase::*;
    assert!(is_legal_trace(&[]));
    assert!(is_legal_trace(&TrialPhase::ORDER));
    assert!(is_legal_trace(&[Aborted]));
    assert!(is_legal_trace(&[SwapIfNeeded, Reset, PlanGrasp, Aborted]));
    assert!(!is_legal_trace(&[Reset, SwapIfNeeded]));
    assert!(!is_legal_trace(&[SwapIfNeeded, Reset, Evaluate]));
    assert!(!is_legal_trace(&[SwapIfNeeded, Aborted, Reset]));
    let mut done_then_abort = TrialPhase::ORDER.to_vec();
    done_then_abort.push(Aborted);
    assert!(!is_legal_trace(&done_then_abort));
}

proptest! {
    #[test]
    fn legal_traces_are_prefix_closed(n in 0usize..=7, abort in any::<bool>()) {
        let mut t = TrialPhase::ORDER[..n].to_vec();
        if abort && n < 7 {
            t.push(TrialPhase::Aborted);
        }
        prop_assert!(is_legal_trace(&t));
        for k in 0..t.len() {
            prop_assert!(is_legal_trace(&t[..k]));
        }
    }
}
