//! Trial CSV: header required, columns in the order of [`HEADER`].

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::library::ObjectLibrary;
use crate::types::TrialSpec;

pub const HEADER: [&str; 7] =
    ["trial_id", "object", "object_angle_deg", "grasp_type", "perturb_axis", "perturb_value", "collect_data"];

/// Accepted object angles, degrees, exclusive.
pub const MAX_ABS_ANGLE_DEG: f64 = 360.0;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },
    #[error("line {line}: unknown object `{object}`")]
    UnknownObject { line: u64, object: String },
    #[error("line {line}: object angle {angle} outside (-360, 360)")]
    AngleOutOfRange { line: u64, angle: f64 },
    #[error("line {line}: trial id {id} already used")]
    DuplicateTrialId { line: u64, id: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn csv_err(e: csv::Error) -> CsvError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(e) => CsvError::Io(e),
        csv::ErrorKind::UnequalLengths { len, expected_len, .. } => CsvError::Parse {
            line,
            column: len as usize,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Utf8 { err, .. } => {
            CsvError::Parse { line, column: err.field() + 1, message: "invalid UTF-8".into() }
        }
        other => CsvError::Parse { line, column: 0, message: format!("{other:?}") },
    }
}

pub fn load_trial_csv(path: impl AsRef<Path>, library: &ObjectLibrary) -> Result<Vec<TrialSpec>, CsvError> {
    read_trial_csv(std::fs::File::open(path)?, library)
}

pub fn read_trial_csv(input: impl Read, library: &ObjectLibrary) -> Result<Vec<TrialSpec>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != HEADER {
        let column = got.iter().zip(HEADER).position(|(g, h)| *g != h).unwrap_or(got.len().min(HEADER.len())) + 1;
        return Err(CsvError::Parse { line: 1, column, message: format!("header must be `{}`", HEADER.join(",")) });
    }

    let mut specs = Vec::new();
    let mut ids = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let bad = |i: usize, what: &str| CsvError::Parse {
            line,
            column: i + 1,
            message: format!("{} `{}`: {what}", HEADER[i], field(i)),
        };
        let trial_id: u32 = field(0).parse().map_err(|_| bad(0, "expected an unsigned integer"))?;
        let object_id = field(1).to_string();
        let object_angle: f64 = field(2).parse().map_err(|_| bad(2, "expected a number"))?;
        let grasp_type = field(3).parse().map_err(|_| bad(3, "expected top or side"))?;
        let perturb_axis = field(4).parse().map_err(|_| bad(4, "expected an axis such as x_trans or y_rot"))?;
        let perturb_value: f64 = field(5).parse().map_err(|_| bad(5, "expected a number"))?;
        if !perturb_value.is_finite() {
            return Err(bad(5, "must be finite"));
        }
        let collect_data = match field(6) {
            "true" => true,
            "false" => false,
            _ => return Err(bad(6, "expected true or false")),
        };
        if !library.contains(&object_id) {
            return Err(CsvError::UnknownObject { line, object: object_id });
        }
        if object_angle.is_nan() || object_angle.abs() >= MAX_ABS_ANGLE_DEG {
            return Err(CsvError::AngleOutOfRange { line, angle: object_angle });
        }
        if !ids.insert(trial_id) {
            return Err(CsvError::DuplicateTrialId { line, id: trial_id });
        }
        specs.push(TrialSpec {
            trial_id,
            object_id,
            object_angle,
            grasp_type,
            perturb_axis,
            perturb_value,
            collect_data,
        });
    }
    Ok(specs)
}

pub fn write_trial_csv(specs: &[TrialSpec], out: impl Write) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for s in specs {
        w.write_record([
            s.trial_id.to_string(),
            s.object_id.clone(),
            s.object_angle.to_string(),
            s.grasp_type.to_string(),
            s.perturb_axis.to_string(),
            s.perturb_value.to_string(),
            s.collect_data.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::matrix::{generate_table_trials, TrialMatrixConfig};
    use crate::types::{GraspType, PerturbAxis};

    const HEAD: &str = "trial_id,object,object_angle_deg,grasp_type,perturb_axis,perturb_value,collect_data\n";

    fn read(body: &str) -> Result<Vec<TrialSpec>, CsvError> {
        read_trial_csv(format!("{HEAD}{body}").as_bytes(), &ObjectLibrary::standard())
    }

    #[test]
    fn parses_a_row() {
        let specs = read("1,rect,45,top,y_rot,33,true\n").unwrap();
        assert_eq!(
            specs,
            vec![TrialSpec {
                trial_id: 1,
                object_id: "rect".into(),
                object_angle: 45.0,
                grasp_type: GraspType::Top,
                perturb_axis: PerturbAxis::YRot,
                perturb_value: 33.0,
                collect_data: true,
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read("").unwrap().is_empty());
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        assert!(matches!(
            read("1,rect,0,top,x_trans,0,true\n2,sphere,0,top,x_trans,0,true\n"),
            Err(CsvError::UnknownObject { line: 3, ref object }) if object == "sphere"
        ));
        assert!(matches!(read("1,rect,400,top,x_trans,0,true\n"), Err(CsvError::AngleOutOfRange { line: 2, .. })));
        assert!(matches!(
            read("4,rect,0,top,x_trans,0,true\n4,tri,0,top,x_trans,0,true\n"),
            Err(CsvError::DuplicateTrialId { line: 3, id: 4 })
        ));
        assert!(matches!(read("1,rect,0,diagonal,x_trans,0,true\n"), Err(CsvError::Parse { line: 2, column: 4, .. })));
        assert!(matches!(read("1,rect,0,top,x_trans,0,yes\n"), Err(CsvError::Parse { line: 2, column: 7, .. })));
        assert!(matches!(read("1,rect,0\n"), Err(CsvError::Parse { line: 2, .. })));
    }

    #[test]
    fn header_is_required() {
        let err = read_trial_csv("1,rect,45,top,y_rot,33,true\n".as_bytes(), &ObjectLibrary::standard()).unwrap_err();
        assert!(matches!(err, CsvError::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn generated_matrix_survives_export() {
        let cfg = TrialMatrixConfig::parse(crate::DATASET_MATRIX).unwrap();
        let specs = generate_table_trials(&cfg).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&specs, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1021);
        assert_eq!(read_trial_csv(&buf[..], &ObjectLibrary::standard()).unwrap(), specs);
    }
}
