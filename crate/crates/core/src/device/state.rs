use crate::types::Pose2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConePhase {
    Lowered,
    Raising,
    Raised,
    Lowering,
}

impl ConePhase {
    pub fn code(self) -> u8 {
        match self {
            ConePhase::Lowered => 0,
            ConePhase::Raising => 1,
            ConePhase::Raised => 2,
            ConePhase::Lowering => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ConePhase::Lowered,
            1 => ConePhase::Raising,
            2 => ConePhase::Raised,
            3 => ConePhase::Lowering,
            _ => return None,
        })
    }
}

/// Cone, string and platform.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerState {
    pub cone: ConePhase,
    pub cone_height: f64,
    /// Paid-out string length; 0 means fully retracted.
    pub string_out: f64,
    /// Copper plates shorted by the insert.
    pub string_home: bool,
    pub platform_angle: f64,
    pub platform_homed: bool,
    pub hall_triggered: bool,
    pub encoder_ticks: i64,
    /// Odometer of all platform rotation, degrees.
    pub platform_travel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AxisFlags {
    pub x: bool,
    pub z: bool,
    pub yaw: bool,
}

impl AxisFlags {
    pub fn all(&self) -> bool {
        self.x && self.z && self.yaw
    }

    pub fn bits(&self) -> u8 {
        (self.x as u8) | ((self.z as u8) << 1) | ((self.yaw as u8) << 2)
    }

    pub fn from_bits(b: u8) -> Self {
        Self { x: b & 1 != 0, z: b & 2 != 0, yaw: b & 4 != 0 }
    }
}

/// Overhead swap arm. `z` is the descent below the top limit switch.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperState {
    pub x: f64,
    pub z: f64,
    pub yaw: f64,
    pub magnet_on: bool,
    pub holding: Option<String>,
    pub homed: AxisFlags,
}

/// Full observable state of the rig.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub lower: LowerState,
    pub upper: UpperState,
    pub estop: bool,
    pub object_pose: Pose2D,
    pub object_on_platform: Option<String>,
    /// Indexed by slot number.
    pub storage_slots: Vec<Option<String>>,
    pub clock_ms: u64,
}

impl DeviceState {
    /// Every object id on the platform, in storage or on the arm, sorted.
    pub fn object_inventory(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .object_on_platform
            .iter()
            .chain(self.storage_slots.iter().flatten())
            .chain(self.upper.holding.iter())
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn slot_of(&self, object_id: &str) -> Option<usize> {
        self.storage_slots.iter().position(|s| s.as_deref() == Some(object_id))
    }

    /// Planar distance of the object from the cone axis.
    pub fn object_distance(&self) -> f64 {
        self.object_pose.x.hypot(self.object_pose.y)
    }
}
