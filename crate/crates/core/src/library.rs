//! Object library files: one `kind:s=object` record per object.

use thiserror::Error;

use crate::geometry::Vec2;
use crate::record::{parse_document, Record, RecordError, Value};
use crate::types::{ObjectError, ObjectSpec, Shape};

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("line {line}: {source}")]
    Object { line: usize, source: ObjectError },
    #[error("line {line}: duplicate object id `{id}`")]
    Duplicate { line: usize, id: String },
    #[error("line {line}: unexpected record kind `{kind}`")]
    UnexpectedKind { line: usize, kind: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectLibrary {
    objects: Vec<ObjectSpec>,
}

impl ObjectLibrary {
    pub fn new(objects: Vec<ObjectSpec>) -> Self {
        Self { objects }
    }

    /// The four shipped objects.
    pub fn standard() -> Self {
        Self::new(ObjectSpec::standard_set())
    }

    pub fn get(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, LibraryError> {
        let records = parse_document(text).map_err(|(line, source)| LibraryError::Record { line, source })?;
        let mut objects: Vec<ObjectSpec> = Vec::new();
        for (line, rec) in records {
            let kind = rec.str("kind").map_err(|source| LibraryError::Record { line, source })?;
            if kind != "object" {
                return Err(LibraryError::UnexpectedKind { line, kind: kind.to_string() });
            }
            let obj = object_from_record(&rec, line)?;
            if objects.iter().any(|o| o.id == obj.id) {
                return Err(LibraryError::Duplicate { line, id: obj.id });
            }
            objects.push(obj);
        }
        Ok(Self { objects })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for o in &self.objects {
            out.push_str(&object_to_record(o).to_line());
            out.push('\n');
        }
        out
    }
}

pub fn object_to_record(o: &ObjectSpec) -> Record {
    let fp: Vec<f64> = o.footprint.iter().flat_map(|p| [p.x, p.y]).collect();
    Record::new()
        .with("kind", Value::S("object".into()))
        .with("id", Value::S(o.id.clone()))
        .with("shape", Value::S(o.shape.as_str().into()))
        .with("width", Value::F(o.width))
        .with("depth", Value::F(o.depth))
        .with("height", Value::F(o.height))
        .with("mass", Value::F(o.mass))
        .with("footprint", Value::FL(fp))
        .with("receptacle", Value::B(o.has_base_insert_receptacle))
        .with("swap_magnet", Value::B(o.has_swap_magnet))
        .with("magnet_offset", Value::F(o.orientation_magnet_offset))
}

fn object_from_record(rec: &Record, line: usize) -> Result<ObjectSpec, LibraryError> {
    let r = |e| LibraryError::Record { line, source: e };
    let shape: Shape = rec.str("shape").map_err(r)?.parse().map_err(|e: crate::types::ParseEnumError| {
        LibraryError::Record { line, source: RecordError::Invalid { key: "shape".into(), message: e.to_string() } }
    })?;
    let fp = rec.f64_list("footprint").map_err(r)?;
    if fp.len() % 2 != 0 {
        return Err(LibraryError::Record {
            line,
            source: RecordError::Invalid { key: "footprint".into(), message: "odd number of coordinates".into() },
        });
    }
    let footprint = fp.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
    ObjectSpec::new(
        rec.str("id").map_err(r)?,
        shape,
        rec.f64("width").map_err(r)?,
        rec.f64("depth").map_err(r)?,
        rec.f64("height").map_err(r)?,
        rec.f64("mass").map_err(r)?,
        footprint,
        rec.bool("receptacle").map_err(r)?,
        rec.bool("swap_magnet").map_err(r)?,
        rec.f64_or("magnet_offset", 0.0).map_err(r)?,
    )
    .map_err(|source| LibraryError::Object { line, source })
}
