use thiserror::Error;

use crate::record::{parse_document, Record, RecordError, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("{0}")]
    Invalid(String),
}

/// Rates, geometry, noise and initial loadout of the simulated rig.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub cone_rate_mm_s: f64,
    /// Cone lift above the table when raised.
    pub cone_stroke_mm: f64,
    pub winch_rate_mm_s: f64,
    pub platform_rate_deg_s: f64,
    pub arm_linear_rate_mm_s: f64,
    pub arm_yaw_rate_deg_s: f64,
    pub encoder_deg_per_tick: f64,
    pub sigma_xy_mm: f64,
    pub sigma_theta_deg: f64,
    pub tether_limit_mm: f64,
    /// Any single sequence stage running longer than this fails the job.
    pub stage_deadline_ms: u64,
    /// Default step used when a caller drives the device to completion.
    pub tick_ms: u64,
    /// Platform angle relative to the hall datum at power-on.
    pub platform_start_deg: f64,
    pub arm_start: [f64; 3],
    pub pick_depth_mm: f64,
    pub platform_x_mm: f64,
    pub slot_x0_mm: f64,
    pub slot_pitch_mm: f64,
    pub storage_slots: usize,
    pub initial_platform: Option<String>,
    pub initial_slots: Vec<Option<String>>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            cone_rate_mm_s: 10.0,
            cone_stroke_mm: 30.0,
            winch_rate_mm_s: 100.0,
            platform_rate_deg_s: 30.0,
            arm_linear_rate_mm_s: 50.0,
            arm_yaw_rate_deg_s: 45.0,
            encoder_deg_per_tick: 1.0,
            sigma_xy_mm: 0.05,
            sigma_theta_deg: 2.0,
            tether_limit_mm: 500.0,
            stage_deadline_ms: 60_000,
            tick_ms: 100,
            platform_start_deg: 0.0,
            arm_start: [0.0, 0.0, 0.0],
            pick_depth_mm: 80.0,
            platform_x_mm: 200.0,
            slot_x0_mm: 50.0,
            slot_pitch_mm: 100.0,
            storage_slots: 4,
            initial_platform: Some("rect".into()),
            initial_slots: vec![None, Some("tri".into()), Some("cyl".into()), Some("cone".into())],
        }
    }
}

impl DeviceConfig {
    /// Configuration with zero reset noise.
    pub fn noiseless() -> Self {
        Self { sigma_xy_mm: 0.0, sigma_theta_deg: 0.0, ..Self::default() }
    }

    pub fn ticks_per_rev(&self) -> i64 {
        (360.0 / self.encoder_deg_per_tick).round() as i64
    }

    pub fn slot_x(&self, slot: usize) -> f64 {
        self.slot_x0_mm + self.slot_pitch_mm * slot as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("cone_rate", self.cone_rate_mm_s),
            ("cone_stroke", self.cone_stroke_mm),
            ("winch_rate", self.winch_rate_mm_s),
            ("platform_rate", self.platform_rate_deg_s),
            ("arm_linear_rate", self.arm_linear_rate_mm_s),
            ("arm_yaw_rate", self.arm_yaw_rate_deg_s),
            ("encoder_deg_per_tick", self.encoder_deg_per_tick),
            ("tether_limit", self.tether_limit_mm),
            ("pick_depth", self.pick_depth_mm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma_xy_mm >= 0.0 && self.sigma_theta_deg >= 0.0) {
            return Err(ConfigError::Invalid("noise sigmas must be non-negative".into()));
        }
        let ticks = 360.0 / self.encoder_deg_per_tick;
        if (ticks - ticks.round()).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "encoder resolution {} does not divide a revolution",
                self.encoder_deg_per_tick
            )));
        }
        if self.tick_ms == 0 || self.stage_deadline_ms == 0 {
            return Err(ConfigError::Invalid("tick and deadline must be nonzero".into()));
        }
        if self.initial_slots.len() > self.storage_slots {
            return Err(ConfigError::Invalid("more initial slot entries than slots".into()));
        }
        Ok(())
    }

    /// Parses a device configuration document. Unspecified keys keep their defaults.
    ///
    /// ```text
    /// kind:s=device cone_rate:f=10 sigma_xy:f=0.05 slots:u=4
    /// kind:s=loadout platform:s=rect slots:sl=-,tri,cyl,cone
    /// ```
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let records = parse_document(text).map_err(|(line, source)| ConfigError::Record { line, source })?;
        for (line, rec) in records {
            let err = |source| ConfigError::Record { line, source };
            match rec.str("kind").map_err(err)? {
                "device" => cfg.apply_device(&rec).map_err(err)?,
                "loadout" => {
                    cfg.initial_platform = match rec.get("platform") {
                        Some(_) => empty_to_none(rec.str("platform").map_err(err)?),
                        None => cfg.initial_platform,
                    };
                    if rec.contains("slots") {
                        cfg.initial_slots =
                            rec.str_list("slots").map_err(err)?.iter().map(|s| empty_to_none(s)).collect();
                    }
                }
                other => return Err(ConfigError::Invalid(format!("line {line}: unexpected record kind `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_device(&mut self, r: &Record) -> Result<(), RecordError> {
        self.cone_rate_mm_s = r.f64_or("cone_rate", self.cone_rate_mm_s)?;
        self.cone_stroke_mm = r.f64_or("cone_stroke", self.cone_stroke_mm)?;
        self.winch_rate_mm_s = r.f64_or("winch_rate", self.winch_rate_mm_s)?;
        self.platform_rate_deg_s = r.f64_or("platform_rate", self.platform_rate_deg_s)?;
        self.arm_linear_rate_mm_s = r.f64_or("arm_linear_rate", self.arm_linear_rate_mm_s)?;
        self.arm_yaw_rate_deg_s = r.f64_or("arm_yaw_rate", self.arm_yaw_rate_deg_s)?;
        self.encoder_deg_per_tick = r.f64_or("encoder_deg_per_tick", self.encoder_deg_per_tick)?;
        self.sigma_xy_mm = r.f64_or("sigma_xy", self.sigma_xy_mm)?;
        self.sigma_theta_deg = r.f64_or("sigma_theta", self.sigma_theta_deg)?;
        self.tether_limit_mm = r.f64_or("tether_limit", self.tether_limit_mm)?;
        self.stage_deadline_ms = r.u64_or("stage_deadline_ms", self.stage_deadline_ms)?;
        self.tick_ms = r.u64_or("tick_ms", self.tick_ms)?;
        self.platform_start_deg = r.f64_or("platform_start", self.platform_start_deg)?;
        self.pick_depth_mm = r.f64_or("pick_depth", self.pick_depth_mm)?;
        self.platform_x_mm = r.f64_or("platform_x", self.platform_x_mm)?;
        self.slot_x0_mm = r.f64_or("slot_x0", self.slot_x0_mm)?;
        self.slot_pitch_mm = r.f64_or("slot_pitch", self.slot_pitch_mm)?;
        self.storage_slots = r.u64_or("slots", self.storage_slots as u64)? as usize;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let dev = Record::new()
            .with("kind", Value::S("device".into()))
            .with("cone_rate", Value::F(self.cone_rate_mm_s))
            .with("cone_stroke", Value::F(self.cone_stroke_mm))
            .with("winch_rate", Value::F(self.winch_rate_mm_s))
            .with("platform_rate", Value::F(self.platform_rate_deg_s))
            .with("arm_linear_rate", Value::F(self.arm_linear_rate_mm_s))
            .with("arm_yaw_rate", Value::F(self.arm_yaw_rate_deg_s))
            .with("encoder_deg_per_tick", Value::F(self.encoder_deg_per_tick))
            .with("sigma_xy", Value::F(self.sigma_xy_mm))
            .with("sigma_theta", Value::F(self.sigma_theta_deg))
            .with("tether_limit", Value::F(self.tether_limit_mm))
            .with("stage_deadline_ms", Value::U(self.stage_deadline_ms))
            .with("tick_ms", Value::U(self.tick_ms))
            .with("platform_start", Value::F(self.platform_start_deg))
            .with("pick_depth", Value::F(self.pick_depth_mm))
            .with("platform_x", Value::F(self.platform_x_mm))
            .with("slot_x0", Value::F(self.slot_x0_mm))
            .with("slot_pitch", Value::F(self.slot_pitch_mm))
            .with("slots", Value::U(self.storage_slots as u64));
        let loadout = Record::new()
            .with("kind", Value::S("loadout".into()))
            .with("platform", Value::S(self.initial_platform.clone().unwrap_or_else(|| "-".into())))
            .with(
                "slots",
                Value::SL(self.initial_slots.iter().map(|s| s.clone().unwrap_or_else(|| "-".into())).collect()),
            );
        format!("{}\n{}\n", dev.to_line(), loadout.to_line())
    }
}

/// `-` marks an empty position in loadout records.
fn empty_to_none(s: &str) -> Option<String> {
    if s == "-" || s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}
