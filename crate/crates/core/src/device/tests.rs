use super::*;
use crate::geometry::Vec2;
use crate::types::{ObjectSpec, Shape};
use proptest::prelude::*;

fn device(cfg: DeviceConfig) -> Device {
    Device::new(cfg, ObjectLibrary::standard()).unwrap()
}

fn homed(cfg: DeviceConfig) -> Device {
    let mut d = device(cfg);
    d.home_platform().unwrap();
    d.run_until_idle().unwrap();
    d.home_upper().unwrap();
    d.run_until_idle().unwrap();
    d
}

fn stages(events: &[DeviceEvent]) -> Vec<Stage> {
    events
        .iter()
        .filter_map(|e| match e {
            DeviceEvent::StageCompleted { stage, .. } => Some(*stage),
            _ => None,
        })
        .collect()
}

#[test]
fn fresh_device_state() {
    let s = Device::with_defaults().read_state();
    assert_eq!(s.lower.cone, ConePhase::Lowered);
    assert!(!s.lower.platform_homed);
    assert!(!s.upper.homed.x && !s.upper.homed.z && !s.upper.homed.yaw);
    assert!(!s.estop);
    assert_eq!(s.clock_ms, 0);
}

#[test]
fn cone_reaches_limit_within_tick() {
    let mut d = Device::with_defaults();
    d.command_cone(true).unwrap();
    d.tick(2500).unwrap();
    assert_eq!(d.state().lower.cone, ConePhase::Raising);
    assert_eq!(d.state().lower.cone_height, 25.0);
    let ev = d.tick(1000).unwrap();
    assert_eq!(d.state().lower.cone, ConePhase::Raised);
    assert_eq!(d.state().lower.cone_height, 30.0);
    // 5 mm at 10 mm/s: the switch closes half way through the tick
    assert!(ev.contains(&DeviceEvent::ConeLimit { at_ms: 3000.0 }));
    assert!(!d.is_busy());
}

#[test]
fn zero_tick_rejected() {
    let mut d = Device::with_defaults();
    assert_eq!(d.tick(0), Err(DeviceError::InvalidTick));
    assert_eq!(d.state().clock_ms, 0);
}

#[test]
fn estop_freezes_everything_but_clock() {
    let mut d = homed(DeviceConfig::default());
    d.rotate_platform(90.0).unwrap();
    d.tick(1000).unwrap();
    d.set_estop(true);
    let before = d.read_state();
    for dt in [1, 100, 5000] {
        d.tick(dt).unwrap();
    }
    let mut after = d.read_state();
    assert_eq!(after.clock_ms, before.clock_ms + 5101);
    after.clock_ms = before.clock_ms;
    assert_eq!(after, before);
    assert_eq!(d.rotate_platform(10.0), Err(DeviceError::EstopEngaged));
    assert_eq!(d.home_platform(), Err(DeviceError::EstopEngaged));
    assert_eq!(d.command_magnet(true), Err(DeviceError::EstopEngaged));
}

#[test]
fn estop_mid_rotation_freezes_at_current_angle() {
    let mut d = homed(DeviceConfig::default());
    d.rotate_platform(90.0).unwrap();
    d.tick(1000).unwrap();
    let ev = d.set_estop(true);
    assert!(matches!(ev.as_slice(), [DeviceEvent::JobFinished { result: Err(DeviceError::EstopEngaged), .. }]));
    assert_eq!(d.state().lower.platform_angle, 30.0);
    assert_eq!(d.state().lower.encoder_ticks, 30);
}

#[test]
fn estop_release_requires_rehoming() {
    let mut d = homed(DeviceConfig::default());
    d.set_estop(true);
    d.set_estop(false);
    assert!(!d.state().lower.platform_homed);
    assert!(!d.state().upper.homed.all());
    assert_eq!(d.rotate_platform(45.0), Err(DeviceError::NotHomed));
    assert_eq!(d.swap_object(1), Err(DeviceError::NotHomed));
    d.home_platform().unwrap();
    d.run_until_idle().unwrap();
    d.rotate_platform(45.0).unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.state().lower.platform_angle, 45.0);
}

#[test]
fn homing_from_arbitrary_angle() {
    let cfg = DeviceConfig { platform_start_deg: 123.4, ..DeviceConfig::default() };
    let mut d = device(cfg);
    d.home_platform().unwrap();
    let ev = d.run_until_idle().unwrap();
    let s = d.state();
    assert_eq!(s.lower.platform_angle, 0.0);
    assert!(s.lower.platform_homed);
    assert_eq!(s.lower.encoder_ticks, 0);
    assert!((s.lower.platform_travel - 236.6).abs() < 1e-9);
    assert!(ev.iter().any(|e| matches!(e, DeviceEvent::HallTriggered { .. })));
}

#[test]
fn homing_from_zero_is_immediate() {
    let mut d = Device::with_defaults();
    d.home_platform().unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.state().lower.platform_angle, 0.0);
    assert_eq!(d.state().lower.platform_travel, 0.0);
}

#[test]
fn rotation_quantizes_to_encoder() {
    let mut d = homed(DeviceConfig::default());
    d.rotate_platform(45.0).unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.state().lower.platform_angle, 45.0);
    assert_eq!(d.state().lower.encoder_ticks, 45);

    let cfg = DeviceConfig { encoder_deg_per_tick: 2.0, ..DeviceConfig::default() };
    let mut d = homed(cfg);
    d.rotate_platform(45.0).unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.state().lower.platform_angle, 44.0);
    assert_eq!(d.state().lower.encoder_ticks, 22);
}

#[test]
fn rotation_to_current_angle_takes_no_time() {
    let mut d = homed(DeviceConfig::default());
    d.rotate_platform(0.0).unwrap();
    let ev = d.tick(1).unwrap();
    let finished = ev.iter().find_map(|e| match e {
        DeviceEvent::JobFinished { at_ms, result, .. } => Some((*at_ms, result.clone())),
        _ => None,
    });
    assert_eq!(finished, Some((d.state().clock_ms as f64 - 1.0, Ok(()))));
}

#[test]
fn rotation_requires_homing() {
    let mut d = Device::with_defaults();
    assert_eq!(d.rotate_platform(45.0), Err(DeviceError::NotHomed));
}

#[test]
fn rotation_time_matches_rate() {
    let mut d = homed(DeviceConfig::default());
    let t0 = d.state().clock_ms as f64;
    d.rotate_platform(270.0).unwrap();
    let ev = d.run_until_idle().unwrap();
    // shortest path is -90 degrees at 30 deg/s
    let done = ev
        .iter()
        .find_map(|e| match e {
            DeviceEvent::JobFinished { at_ms, .. } => Some(*at_ms),
            _ => None,
        })
        .unwrap();
    assert!((done - t0 - 3000.0).abs() < 1e-6);
    assert_eq!(d.state().lower.platform_travel, 90.0);
}

fn raise_cone(d: &mut Device) {
    d.command_cone(true).unwrap();
    d.run_until_idle().unwrap();
}

#[test]
fn retract_within_tether_limit() {
    let mut d = Device::with_defaults();
    d.displace_object(Pose2D::new(300.0, 400.0, 10.0)).unwrap();
    raise_cone(&mut d);
    d.retract_string().unwrap();
    let mut last = d.state().lower.string_out;
    assert_eq!(last, 500.0);
    while d.is_busy() {
        d.tick(100).unwrap();
        let out = d.state().lower.string_out;
        assert!(out < last);
        last = out;
    }
    let s = d.state();
    assert!(s.lower.string_home);
    assert_eq!((s.object_pose.x, s.object_pose.y), (0.0, 0.0));
    assert_eq!(s.object_pose.theta, 10.0);
}

#[test]
fn retract_beyond_tether_limit() {
    let mut d = Device::with_defaults();
    d.displace_object(Pose2D::new(400.0, 400.0, 0.0)).unwrap();
    raise_cone(&mut d);
    let before = d.read_state();
    match d.retract_string() {
        Err(DeviceError::TetherLimit { distance }) => {
            assert!((distance - 565.685424949238).abs() < 1e-9)
        }
        other => panic!("expected TetherLimit, got {other:?}"),
    }
    assert_eq!(d.read_state(), before);
}

#[test]
fn retract_at_home_is_immediate() {
    let mut d = Device::with_defaults();
    raise_cone(&mut d);
    d.retract_string().unwrap();
    let ev = d.tick(1).unwrap();
    assert!(!d.is_busy());
    assert!(!ev.iter().any(|e| matches!(e, DeviceEvent::CopperShort { .. })));
    assert!(d.state().lower.string_home);
}

#[test]
fn retract_needs_raised_cone() {
    let mut d = Device::with_defaults();
    assert_eq!(d.retract_string(), Err(DeviceError::ConeNotRaised));
}

#[test]
fn noiseless_reset_is_exact() {
    let mut d = device(DeviceConfig::noiseless());
    d.displace_object(Pose2D::new(120.0, -40.0, 200.0)).unwrap();
    d.lower_reset(0.0, 99).unwrap();
    let ev = d.run_until_idle().unwrap();
    assert_eq!(d.state().object_pose, Pose2D::new(0.0, 0.0, 0.0));
    assert_eq!(
        stages(&ev),
        [
            Stage::ConeRaised,
            Stage::StringHome,
            Stage::ConeLowered,
            Stage::PlatformHomed,
            Stage::PlatformRotated,
            Stage::ObjectSeated
        ]
    );
}

#[test]
fn reset_lands_near_target() {
    let mut d = Device::with_defaults();
    d.lower_reset(30.0, 7).unwrap();
    d.run_until_idle().unwrap();
    let s = d.state();
    assert_eq!(s.lower.platform_angle, 30.0);
    assert!(s.object_pose.x.abs() < 0.15 && s.object_pose.y.abs() < 0.15);
    assert!(angle_diff_deg(s.object_pose.theta, 30.0).abs() < 6.0);
    assert_eq!(s.lower.cone, ConePhase::Lowered);
}

#[test]
fn reset_is_deterministic_per_seed() {
    let run = |seed| {
        let mut d = Device::with_defaults();
        d.displace_object(Pose2D::new(50.0, 20.0, 0.0)).unwrap();
        d.lower_reset(45.0, seed).unwrap();
        d.run_until_idle().unwrap();
        d.read_state()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).object_pose, run(6).object_pose);
}

#[test]
fn elapsed_time_independent_of_tick_size() {
    let finish = |dt| {
        let mut d = Device::with_defaults();
        d.displace_object(Pose2D::new(123.0, 45.0, 0.0)).unwrap();
        d.lower_reset(60.0, 1).unwrap();
        let mut at = None;
        while d.is_busy() {
            for e in d.tick(dt).unwrap() {
                if let DeviceEvent::JobFinished { at_ms, .. } = e {
                    at = Some(at_ms);
                }
            }
        }
        (at.unwrap(), d.read_state().object_pose)
    };
    let (a, pa) = finish(7);
    let (b, pb) = finish(1000);
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    assert_eq!(pa, pb);
}

#[test]
fn stage_deadline_times_out() {
    let cfg = DeviceConfig { stage_deadline_ms: 2000, ..DeviceConfig::default() };
    let mut d = device(cfg);
    d.displace_object(Pose2D::new(300.0, 0.0, 0.0)).unwrap();
    d.lower_reset(0.0, 0).unwrap();
    // raising the cone alone takes 3 s
    assert_eq!(d.run_until_idle(), Err(DeviceError::SequenceTimeout));
    assert!(!d.is_busy());
}

#[test]
fn reset_needs_an_object() {
    let cfg = DeviceConfig { initial_platform: None, ..DeviceConfig::default() };
    let mut d = device(cfg);
    assert_eq!(d.lower_reset(0.0, 0), Err(DeviceError::NoObject));
}

#[test]
fn busy_device_rejects_commands() {
    let mut d = Device::with_defaults();
    d.lower_reset(0.0, 0).unwrap();
    assert_eq!(d.home_platform(), Err(DeviceError::Busy));
    let ev = d.abort().unwrap();
    assert!(matches!(ev, DeviceEvent::JobFinished { result: Err(DeviceError::Cancelled), .. }));
    d.home_platform().unwrap();
}

#[test]
fn swap_exchanges_objects() {
    let mut d = homed(DeviceConfig::noiseless());
    let inventory = d.state().object_inventory();
    d.swap_object(2).unwrap();
    let ev = d.run_until_idle().unwrap();
    let s = d.state();
    assert_eq!(s.object_on_platform.as_deref(), Some("cyl"));
    assert_eq!(s.storage_slots[0].as_deref(), Some("rect"));
    assert_eq!(s.storage_slots[2], None);
    assert_eq!(s.object_inventory(), inventory);
    assert!(!s.upper.magnet_on);
    assert_eq!(s.upper.holding, None);
    assert!(!s.lower.platform_homed);
    assert_eq!(s.lower.cone, ConePhase::Raised);
    assert_eq!(
        stages(&ev),
        [
            Stage::ConeRaised,
            Stage::StringHome,
            Stage::ArmLifted,
            Stage::ArmOverObject,
            Stage::ObjectDecoupled,
            Stage::ObjectStored,
            Stage::ObjectPicked,
            Stage::ObjectPlaced,
            Stage::ArmRetracted
        ]
    );
    // the new object resets like any other
    d.lower_reset(20.0, 3).unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.state().object_pose, Pose2D::new(0.0, 0.0, 20.0));
}

#[test]
fn swap_guards_leave_state_unchanged() {
    let mut d = homed(DeviceConfig::default());
    let before = d.read_state();
    assert_eq!(d.swap_object(0), Err(DeviceError::SlotEmpty(0)));
    assert_eq!(d.swap_object(9), Err(DeviceError::InvalidSlot(9)));
    assert_eq!(d.read_state(), before);

    let cfg = DeviceConfig {
        initial_slots: vec![Some("rect".into()), Some("tri".into()), Some("cyl".into())],
        initial_platform: Some("cone".into()),
        storage_slots: 3,
        ..DeviceConfig::default()
    };
    let mut d = homed(cfg);
    assert_eq!(d.swap_object(1), Err(DeviceError::NoFreeSlot));

    let d = Device::with_defaults();
    let mut d = d;
    assert_eq!(d.swap_object(1), Err(DeviceError::NotHomed));
}

#[test]
fn heavy_object_is_not_swappable() {
    let fp = vec![Vec2::new(-20.0, -20.0), Vec2::new(20.0, -20.0), Vec2::new(20.0, 20.0), Vec2::new(-20.0, 20.0)];
    let heavy = ObjectSpec::new("heavy", Shape::RectPrism, 40.0, 40.0, 105.0, 600.0, fp, true, true, 12.0).unwrap();
    let mut objects = ObjectSpec::standard_set();
    objects.push(heavy);
    let cfg = DeviceConfig { initial_slots: vec![None, Some("heavy".into())], ..DeviceConfig::default() };
    let mut d = Device::new(cfg, ObjectLibrary::new(objects)).unwrap();
    d.home_upper().unwrap();
    d.run_until_idle().unwrap();
    assert_eq!(d.swap_object(1), Err(DeviceError::SwapIncompatible("heavy".into())));
}

#[test]
fn magnet_command_picks_from_slot() {
    let mut d = homed(DeviceConfig::default());
    d.command_axis(ArmAxis::X, d.config().slot_x(1)).unwrap();
    d.run_until_idle().unwrap();
    d.command_axis(ArmAxis::Z, d.config().pick_depth_mm).unwrap();
    d.run_until_idle().unwrap();
    d.command_magnet(true).unwrap();
    assert!(d.state().upper.magnet_on);
    assert_eq!(d.state().upper.holding.as_deref(), Some("tri"));
    assert_eq!(d.state().storage_slots[1], None);
}

#[test]
fn unhomed_axis_rejects_moves() {
    let mut d = Device::with_defaults();
    assert_eq!(d.command_axis(ArmAxis::X, 10.0), Err(DeviceError::NotHomed));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estop_freeze_holds_for_any_ticks(start in 0.0f64..360.0, ticks in proptest::collection::vec(1u64..3000, 1..20), at in 1u64..4000) {
        let cfg = DeviceConfig {
            platform_start_deg: start,
            ..DeviceConfig::default()
        };
        let mut d = device(cfg);
        d.displace_object(Pose2D::new(80.0, -60.0, 0.0)).unwrap();
        d.lower_reset(200.0, 1).unwrap();
        d.tick(at).unwrap();
        d.set_estop(true);
        let before = d.read_state();
        let mut total = 0;
        for dt in ticks {
            d.tick(dt).unwrap();
            total += dt;
        }
        let mut after = d.read_state();
        prop_assert_eq!(after.clock_ms, before.clock_ms + total);
        after.clock_ms = before.clock_ms;
        prop_assert_eq!(after, before);
    }

    #[test]
    fn homing_converges_within_one_revolution(start in 0.0f64..360.0) {
        let cfg = DeviceConfig {
            platform_start_deg: start,
            ..DeviceConfig::default()
        };
        let mut d = device(cfg);
        d.home_platform().unwrap();
        d.run_until_idle().unwrap();
        prop_assert_eq!(d.state().lower.platform_angle, 0.0);
        prop_assert!(d.state().lower.platform_travel <= 360.0);
    }

    #[test]
    fn rotation_lands_on_tick(target in -720.0f64..720.0) {
        let mut d = homed(DeviceConfig::default());
        d.rotate_platform(target).unwrap();
        d.run_until_idle().unwrap();
        let a = d.state().lower.platform_angle;
        prop_assert_eq!(a.fract(), 0.0);
        prop_assert!(angle_diff_deg(a, target).abs() <= 0.5);
    }
}
