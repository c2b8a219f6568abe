//! Byte-addressed registers of the two microcontrollers, backed by the simulated device.
//!
//! | MCU  | addr | access | meaning |
//! |------|------|--------|---------|
//! | Nano | 0x01 | rw | cone: write 1 raise, 2 lower; read phase code |
//! | Nano | 0x02 | rw | string: write 1 retract, 2 release; read 1 when home |
//! | Nano | 0x10 | r  | status: bit0 cone up, bit1 copper short, bit2 cone down, bit7 e-stop |
//! | Nano | 0x11 | r  | hall flag |
//! | Nano | 0x12 | r  | encoder count, u16 |
//! | Mega | 0x01..0x03 | rw | x, z, yaw target, u16 mm or degrees |
//! | Mega | 0x04 | rw | magnet on/off |
//! | Mega | 0x10 | r  | limit switches: bit0 x, bit1 z, bit2 yaw |

use std::fmt;

use thiserror::Error;

use crate::device::{ArmAxis, Device, DeviceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mcu {
    /// Lower reset controller.
    Nano,
    /// Swap arm controller.
    Mega,
}

impl fmt::Display for Mcu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegisterError {
    #[error("{mcu} register {addr:#04x} is read-only")]
    ReadOnlyRegister { mcu: Mcu, addr: u8 },
    #[error("{mcu} has no register {addr:#04x}")]
    UnknownRegister { mcu: Mcu, addr: u8 },
    #[error("emergency stop engaged")]
    EstopEngaged,
    #[error("register {addr:#04x} takes {expected} bytes, got {got}")]
    InvalidLength { addr: u8, expected: usize, got: usize },
    #[error("invalid value {value} for register {addr:#04x}")]
    InvalidValue { addr: u8, value: u16 },
    #[error(transparent)]
    Device(DeviceError),
}

impl From<DeviceError> for RegisterError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::EstopEngaged => RegisterError::EstopEngaged,
            other => RegisterError::Device(other),
        }
    }
}

struct Reg {
    addr: u8,
    width: usize,
    writable: bool,
}

const NANO: &[Reg] = &[
    Reg { addr: 0x01, width: 1, writable: true },
    Reg { addr: 0x02, width: 1, writable: true },
    Reg { addr: 0x10, width: 1, writable: false },
    Reg { addr: 0x11, width: 1, writable: false },
    Reg { addr: 0x12, width: 2, writable: false },
];

const MEGA: &[Reg] = &[
    Reg { addr: 0x01, width: 2, writable: true },
    Reg { addr: 0x02, width: 2, writable: true },
    Reg { addr: 0x03, width: 2, writable: true },
    Reg { addr: 0x04, width: 1, writable: true },
    Reg { addr: 0x10, width: 1, writable: false },
];

fn lookup(mcu: Mcu, addr: u8) -> Result<&'static Reg, RegisterError> {
    let map = match mcu {
        Mcu::Nano => NANO,
        Mcu::Mega => MEGA,
    };
    map.iter().find(|r| r.addr == addr).ok_or(RegisterError::UnknownRegister { mcu, addr })
}

fn axis_of(addr: u8) -> ArmAxis {
    match addr {
        0x01 => ArmAxis::X,
        0x02 => ArmAxis::Z,
        _ => ArmAxis::Yaw,
    }
}

/// Reads or writes one register. Reads return the register bytes
/// (little-endian); writes return an empty acknowledgement.
pub fn register_access(
    dev: &mut Device,
    access: Access,
    mcu: Mcu,
    addr: u8,
    value: &[u8],
) -> Result<Vec<u8>, RegisterError> {
    match access {
        Access::Read => register_read(dev, mcu, addr),
        Access::Write => register_write(dev, mcu, addr, value).map(|()| Vec::new()),
    }
}

/// Status reads always succeed, e-stop or not.
pub fn register_read(dev: &Device, mcu: Mcu, addr: u8) -> Result<Vec<u8>, RegisterError> {
    lookup(mcu, addr)?;
    let s = dev.state();
    let tol = 1e-6;
    Ok(match (mcu, addr) {
        (Mcu::Nano, 0x01) => vec![s.lower.cone.code()],
        (Mcu::Nano, 0x02) => vec![s.lower.string_home as u8],
        (Mcu::Nano, 0x10) => {
            use crate::device::ConePhase;
            let mut b = 0u8;
            if s.lower.cone == ConePhase::Raised {
                b |= 1;
            }
            if s.lower.string_home {
                b |= 1 << 1;
            }
            if s.lower.cone == ConePhase::Lowered {
                b |= 1 << 2;
            }
            if s.estop {
                b |= 1 << 7;
            }
            vec![b]
        }
        (Mcu::Nano, 0x11) => vec![s.lower.hall_triggered as u8],
        (Mcu::Nano, 0x12) => (s.lower.encoder_ticks.rem_euclid(1 << 16) as u16).to_le_bytes().to_vec(),
        (Mcu::Mega, 0x01..=0x03) => {
            let v = match axis_of(addr) {
                ArmAxis::X => s.upper.x,
                ArmAxis::Z => s.upper.z,
                ArmAxis::Yaw => s.upper.yaw,
            };
            (v.round().clamp(0.0, u16::MAX as f64) as u16).to_le_bytes().to_vec()
        }
        (Mcu::Mega, 0x04) => vec![s.upper.magnet_on as u8],
        (Mcu::Mega, 0x10) => {
            let u = &s.upper;
            let b = (u.x.abs() < tol) as u8 | ((u.z.abs() < tol) as u8) << 1 | ((u.yaw.abs() < tol) as u8) << 2;
            vec![b]
        }
        _ => unreachable!("lookup succeeded"),
    })
}

/// Command writes fail while the e-stop is engaged.
pub fn register_write(dev: &mut Device, mcu: Mcu, addr: u8, value: &[u8]) -> Result<(), RegisterError> {
    let reg = lookup(mcu, addr)?;
    if !reg.writable {
        return Err(RegisterError::ReadOnlyRegister { mcu, addr });
    }
    if value.len() != reg.width {
        return Err(RegisterError::InvalidLength { addr, expected: reg.width, got: value.len() });
    }
    if dev.state().estop {
        return Err(RegisterError::EstopEngaged);
    }
    let v = if reg.width == 2 { u16::from_le_bytes([value[0], value[1]]) } else { value[0] as u16 };
    let invalid = RegisterError::InvalidValue { addr, value: v };
    match (mcu, addr) {
        (Mcu::Nano, 0x01) => match v {
            1 => dev.command_cone(true)?,
            2 => dev.command_cone(false)?,
            _ => return Err(invalid),
        },
        (Mcu::Nano, 0x02) => match v {
            1 => dev.command_retract()?,
            // the winch releases passively; nothing moves
            2 => {}
            _ => return Err(invalid),
        },
        (Mcu::Mega, 0x01..=0x03) => dev.command_axis(axis_of(addr), v as f64)?,
        (Mcu::Mega, 0x04) => match v {
            0 => dev.command_magnet(false)?,
            1 => dev.command_magnet(true)?,
            _ => return Err(invalid),
        },
        _ => unreachable!("only writable registers reach here"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pose2D;

    #[test]
    fn copper_short_sets_status_bit() {
        let mut d = Device::with_defaults();
        d.displace_object(Pose2D::new(100.0, 0.0, 0.0)).unwrap();
        assert_eq!(register_read(&d, Mcu::Nano, 0x10).unwrap()[0] & 0b10, 0);
        register_write(&mut d, Mcu::Nano, 0x01, &[1]).unwrap();
        d.run_until_idle().unwrap();
        register_write(&mut d, Mcu::Nano, 0x02, &[1]).unwrap();
        d.run_until_idle().unwrap();
        let status = register_read(&d, Mcu::Nano, 0x10).unwrap()[0];
        assert_eq!(status & 0b11, 0b11);
    }

    #[test]
    fn status_registers_are_read_only() {
        let mut d = Device::with_defaults();
        for (mcu, addr) in [(Mcu::Nano, 0x10), (Mcu::Nano, 0x11), (Mcu::Nano, 0x12), (Mcu::Mega, 0x10)] {
            let width = if addr == 0x12 { 2 } else { 1 };
            assert_eq!(
                register_access(&mut d, Access::Write, mcu, addr, &vec![0; width]),
                Err(RegisterError::ReadOnlyRegister { mcu, addr })
            );
        }
    }

    #[test]
    fn unknown_addresses_rejected() {
        let mut d = Device::with_defaults();
        assert_eq!(
            register_access(&mut d, Access::Read, Mcu::Nano, 0x05, &[]),
            Err(RegisterError::UnknownRegister { mcu: Mcu::Nano, addr: 0x05 })
        );
        assert!(matches!(register_write(&mut d, Mcu::Mega, 0x20, &[1]), Err(RegisterError::UnknownRegister { .. })));
    }

    #[test]
    fn magnet_register_drives_device() {
        let mut d = Device::with_defaults();
        register_write(&mut d, Mcu::Mega, 0x04, &[1]).unwrap();
        assert!(d.state().upper.magnet_on);
        assert_eq!(register_read(&d, Mcu::Mega, 0x04).unwrap(), [1]);
    }

    #[test]
    fn estop_blocks_writes_not_reads() {
        let mut d = Device::with_defaults();
        d.set_estop(true);
        assert_eq!(register_write(&mut d, Mcu::Mega, 0x04, &[1]), Err(RegisterError::EstopEngaged));
        assert_eq!(register_write(&mut d, Mcu::Nano, 0x01, &[1]), Err(RegisterError::EstopEngaged));
        assert_eq!(register_read(&d, Mcu::Nano, 0x10).unwrap()[0] & 0x80, 0x80);
        for addr in [0x01, 0x02, 0x11, 0x12] {
            assert!(register_read(&d, Mcu::Nano, addr).is_ok());
        }
    }

    #[test]
    fn axis_target_needs_homing_and_width() {
        let mut d = Device::with_defaults();
        assert_eq!(
            register_write(&mut d, Mcu::Mega, 0x01, &[100, 0]),
            Err(RegisterError::Device(DeviceError::NotHomed))
        );
        assert!(matches!(
            register_write(&mut d, Mcu::Mega, 0x01, &[100]),
            Err(RegisterError::InvalidLength { expected: 2, got: 1, .. })
        ));
        d.home_upper().unwrap();
        d.run_until_idle().unwrap();
        register_write(&mut d, Mcu::Mega, 0x01, &300u16.to_le_bytes()).unwrap();
        d.run_until_idle().unwrap();
        assert_eq!(register_read(&d, Mcu::Mega, 0x01).unwrap(), 300u16.to_le_bytes());
        assert_eq!(register_read(&d, Mcu::Mega, 0x10).unwrap(), [0b110]);
    }
}
