//! Trial-matrix configuration and generation.
//!
//! A config file is a record document:
//!
//! ```text
//! kind:s=matrix samples:u=15 objects:sl=rect,tri,cyl,cone
//! kind:s=row axis:s=x_trans lo:f=0 hi:f=30 grasp:s=top angles.rect:fl=0,15,30,45 angles.tri:fl=0,20 ...
//! ```
//!
//! Every row must list angles for every object. Translations are in
//! millimeters and rotations in degrees.

use thiserror::Error;

use crate::library::ObjectLibrary;
use crate::record::{parse_document, Record, RecordError, Value};
use crate::types::{GraspType, PerturbAxis, TrialSpec};

pub const DEFAULT_SAMPLES: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("invalid trial matrix: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub perturb_axis: PerturbAxis,
    pub grasp_type: GraspType,
    pub range_lo: f64,
    pub range_hi: f64,
    /// Object angles in degrees, parallel to [`TrialMatrixConfig::objects`].
    pub angles: Vec<Vec<f64>>,
}

impl MatrixRow {
    /// `n` equally spaced values from `range_lo` to `range_hi` inclusive.
    pub fn values(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.range_lo],
            _ => {
                let step = (self.range_hi - self.range_lo) / (n - 1) as f64;
                (0..n).map(|k| self.range_lo + k as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrixConfig {
    pub objects: Vec<String>,
    pub samples_per_config: usize,
    pub rows: Vec<MatrixRow>,
}

impl TrialMatrixConfig {
    pub fn parse(text: &str) -> Result<Self, MatrixError> {
        let records = parse_document(text).map_err(|(line, source)| MatrixError::Record { line, source })?;
        let mut header: Option<(Vec<String>, usize)> = None;
        let mut rows = Vec::new();
        for (line, rec) in records {
            let at = |source| MatrixError::Record { line, source };
            match rec.str("kind").map_err(at)? {
                "matrix" if header.is_none() => {
                    let objects = rec.str_list("objects").map_err(at)?.to_vec();
                    let samples = rec.u64_or("samples", DEFAULT_SAMPLES as u64).map_err(at)? as usize;
                    header = Some((objects, samples));
                }
                "matrix" => return Err(MatrixError::InvalidConfig(format!("line {line}: second matrix header"))),
                "row" => {
                    let Some((objects, _)) = &header else {
                        return Err(MatrixError::InvalidConfig(format!("line {line}: row before matrix header")));
                    };
                    rows.push(parse_row(&rec, objects).map_err(at)?);
                }
                other => {
                    return Err(MatrixError::InvalidConfig(format!("line {line}: unknown record kind `{other}`")));
                }
            }
        }
        let (objects, samples_per_config) =
            header.ok_or_else(|| MatrixError::InvalidConfig("missing matrix header".into()))?;
        let cfg = Self { objects, samples_per_config, rows };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = Record::new()
            .with("kind", Value::S("matrix".into()))
            .with("samples", Value::U(self.samples_per_config as u64))
            .with("objects", Value::SL(self.objects.clone()))
            .to_line();
        out.push('\n');
        for row in &self.rows {
            let mut r = Record::new()
                .with("kind", Value::S("row".into()))
                .with("axis", Value::S(row.perturb_axis.as_str().into()))
                .with("lo", Value::F(row.range_lo))
                .with("hi", Value::F(row.range_hi))
                .with("grasp", Value::S(row.grasp_type.as_str().into()));
            for (obj, angles) in self.objects.iter().zip(&row.angles) {
                r.push(format!("angles.{obj}"), Value::FL(angles.clone()));
            }
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        let bad = |m: String| Err(MatrixError::InvalidConfig(m));
        if self.objects.is_empty() {
            return bad("no objects".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if self.objects[..i].contains(o) {
                return bad(format!("object `{o}` listed twice"));
            }
        }
        if self.samples_per_config == 0 {
            return bad("samples must be at least 1".into());
        }
        for (i, row) in self.rows.iter().enumerate() {
            let n = i + 1;
            if !(row.range_lo.is_finite() && row.range_hi.is_finite()) || row.range_lo >= row.range_hi {
                return bad(format!("row {n}: range {}..{} is not increasing", row.range_lo, row.range_hi));
            }
            if row.angles.len() != self.objects.len() {
                return bad(format!("row {n}: angle lists do not match the object list"));
            }
            if let Some(k) = row.angles.iter().position(|a| a.is_empty()) {
                return bad(format!("row {n}: no angles for `{}`", self.objects[k]));
            }
            if row.angles.iter().flatten().any(|a| !a.is_finite()) {
                return bad(format!("row {n}: non-finite angle"));
            }
        }
        Ok(())
    }

    /// Checks that every object exists in `library`.
    pub fn check_objects(&self, library: &ObjectLibrary) -> Result<(), MatrixError> {
        match self.objects.iter().find(|o| !library.contains(o)) {
            Some(o) => Err(MatrixError::InvalidConfig(format!("unknown object `{o}`"))),
            None => Ok(()),
        }
    }

    /// Number of specs [`generate_table_trials`] emits for `row`.
    pub fn row_len(&self, row: &MatrixRow) -> usize {
        row.angles.iter().map(Vec::len).sum::<usize>() * self.samples_per_config
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(|r| self.row_len(r)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the row and object a spec belongs to.
    pub fn cell_of(&self, spec: &TrialSpec) -> Option<(usize, usize)> {
        let obj = self.objects.iter().position(|o| *o == spec.object_id)?;
        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        let row = self.rows.iter().position(|r| {
            r.perturb_axis == spec.perturb_axis
                && r.grasp_type == spec.grasp_type
                && r.angles[obj].iter().any(|&a| tol(a, spec.object_angle))
                && spec.perturb_value >= r.range_lo - 1e-9
                && spec.perturb_value <= r.range_hi + 1e-9
        })?;
        Some((row, obj))
    }
}

fn parse_row(rec: &Record, objects: &[String]) -> Result<MatrixRow, RecordError> {
    let parse = |key: &str| -> Result<String, RecordError> { Ok(rec.str(key)?.to_string()) };
    let invalid = |key: &str, e: String| RecordError::Invalid { key: key.to_string(), message: e };
    let perturb_axis =
        parse("axis")?.parse().map_err(|e: crate::types::ParseEnumError| invalid("axis", e.to_string()))?;
    let grasp_type =
        parse("grasp")?.parse().map_err(|e: crate::types::ParseEnumError| invalid("grasp", e.to_string()))?;
    let angles =
        objects.iter().map(|o| rec.f64_list(&format!("angles.{o}")).map(<[f64]>::to_vec)).collect::<Result<_, _>>()?;
    Ok(MatrixRow { perturb_axis, grasp_type, range_lo: rec.f64("lo")?, range_hi: rec.f64("hi")?, angles })
}

/// Expands the matrix in row, object, angle, value order with ids from 1.
pub fn generate_table_trials(cfg: &TrialMatrixConfig) -> Result<Vec<TrialSpec>, MatrixError> {
    cfg.validate()?;
    let mut specs = Vec::with_capacity(cfg.len());
    for row in &cfg.rows {
        let values = row.values(cfg.samples_per_config);
        for (obj, angles) in cfg.objects.iter().zip(&row.angles) {
            for &angle in angles {
                for &v in &values {
                    specs.push(TrialSpec {
                        trial_id: specs.len() as u32 + 1,
                        object_id: obj.clone(),
                        object_angle: angle,
                        grasp_type: row.grasp_type,
                        perturb_axis: row.perturb_axis,
                        perturb_value: v,
                        collect_data: true,
                    });
                }
            }
        }
    }
    Ok(specs)
}
