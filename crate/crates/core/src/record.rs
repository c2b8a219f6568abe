//! Line-delimited, self-describing text records.
//!
//! One record per line, fields separated by a single space:
//!
//! ```text
//! record := field (' ' field)*
//! field  := key ':' tag '=' value
//! key    := [A-Za-z0-9_.-]+
//! tag    := 'u' | 'i' | 'f' | 'b' | 's' | 'ul' | 'fl' | 'sl'
//! ```
//!
//! `u`/`i` are 64-bit integers, `f` is an f64 in shortest round-trip decimal
//! form, `b` is `true`/`false`, `s` is a percent-escaped string and the `*l`
//! tags are comma-separated lists of the scalar kind (empty value = empty
//! list). In strings, `%`, space, comma, `=`, and control bytes are escaped
//! as `%XX`. Blank lines and lines starting with `#` are ignored by [`parse_document`].

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    U(u64),
    I(i64),
    F(f64),
    B(bool),
    S(String),
    UL(Vec<u64>),
    FL(Vec<f64>),
    SL(Vec<String>),
}

impl Value {
    fn tag(&self) -> &'static str {
        match self {
            Value::U(_) => "u",
            Value::I(_) => "i",
            Value::F(_) => "f",
            Value::B(_) => "b",
            Value::S(_) => "s",
            Value::UL(_) => "ul",
            Value::FL(_) => "fl",
            Value::SL(_) => "sl",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("field `{key}` is not of type {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("field `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Ordered key/value record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Record {
    fields: Vec<(String, Value)>,
}

fn needs_escape(b: u8) -> bool {
    b == b'%' || b == b' ' || b == b',' || b == b'=' || b < 0x20 || b == 0x7f
}

fn escape(s: &str) -> String {
    let mut out = Vec::with_capacity(s.len());
    for b in s.bytes() {
        if needs_escape(b) {
            out.extend_from_slice(format!("%{b:02X}").as_bytes());
        } else {
            out.push(b);
        }
    }
    String::from_utf8(out).expect("escaping only rewrites ASCII bytes")
}

fn unescape(s: &str, column: usize) -> Result<String, RecordError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| RecordError::Syntax { column: column + i, message: "bad escape".into() })?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| RecordError::Syntax { column, message: "invalid UTF-8 in string".into() })
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    let empty = v.is_empty();
    v.split(',').filter(move |_| !empty)
}

fn parse_value(tag: &str, raw: &str, column: usize) -> Result<Value, RecordError> {
    let bad = |what: &str| RecordError::Syntax { column, message: format!("invalid {what} `{raw}`") };
    Ok(match tag {
        "u" => Value::U(raw.parse().map_err(|_| bad("unsigned"))?),
        "i" => Value::I(raw.parse().map_err(|_| bad("integer"))?),
        "f" => Value::F(raw.parse().map_err(|_| bad("float"))?),
        "b" => match raw {
            "true" => Value::B(true),
            "false" => Value::B(false),
            _ => return Err(bad("boolean")),
        },
        "s" => Value::S(unescape(raw, column)?),
        "ul" => {
            Value::UL(split_list(raw).map(|x| x.parse().map_err(|_| bad("unsigned list"))).collect::<Result<_, _>>()?)
        }
        "fl" => Value::FL(split_list(raw).map(|x| x.parse().map_err(|_| bad("float list"))).collect::<Result<_, _>>()?),
        "sl" => Value::SL(split_list(raw).map(|x| unescape(x, column)).collect::<Result<_, _>>()?),
        other => return Err(RecordError::Syntax { column, message: format!("unknown tag `{other}`") }),
    })
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-')
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a field. Keys must match `[A-Za-z0-9_.-]+`.
    pub fn push(&mut self, key: impl Into<String>, value: Value) -> &mut Self {
        let key = key.into();
        debug_assert!(valid_key(&key), "invalid record key `{key}`");
        self.fields.push((key, value));
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: Value) -> Self {
        self.push(key, value);
        self
    }

    pub fn fields(&self) -> &[(String, Value)] {
        &self.fields
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    fn require(&self, key: &str) -> Result<&Value, RecordError> {
        self.get(key).ok_or_else(|| RecordError::Missing(key.to_string()))
    }

    fn wrong(key: &str, expected: &'static str) -> RecordError {
        RecordError::WrongType { key: key.to_string(), expected }
    }

    pub fn u64(&self, key: &str) -> Result<u64, RecordError> {
        match self.require(key)? {
            Value::U(v) => Ok(*v),
            _ => Err(Self::wrong(key, "u")),
        }
    }

    pub fn i64(&self, key: &str) -> Result<i64, RecordError> {
        match self.require(key)? {
            Value::I(v) => Ok(*v),
            Value::U(v) => i64::try_from(*v).map_err(|_| Self::wrong(key, "i")),
            _ => Err(Self::wrong(key, "i")),
        }
    }

    /// Reads a float; integer-tagged values are accepted and widened.
    pub fn f64(&self, key: &str) -> Result<f64, RecordError> {
        match self.require(key)? {
            Value::F(v) => Ok(*v),
            Value::U(v) => Ok(*v as f64),
            Value::I(v) => Ok(*v as f64),
            _ => Err(Self::wrong(key, "f")),
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool, RecordError> {
        match self.require(key)? {
            Value::B(v) => Ok(*v),
            _ => Err(Self::wrong(key, "b")),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str, RecordError> {
        match self.require(key)? {
            Value::S(v) => Ok(v),
            _ => Err(Self::wrong(key, "s")),
        }
    }

    pub fn u64_list(&self, key: &str) -> Result<&[u64], RecordError> {
        match self.require(key)? {
            Value::UL(v) => Ok(v),
            _ => Err(Self::wrong(key, "ul")),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<&[f64], RecordError> {
        match self.require(key)? {
            Value::FL(v) => Ok(v),
            _ => Err(Self::wrong(key, "fl")),
        }
    }

    pub fn str_list(&self, key: &str) -> Result<&[String], RecordError> {
        match self.require(key)? {
            Value::SL(v) => Ok(v),
            _ => Err(Self::wrong(key, "sl")),
        }
    }

    /// Optional float with a fallback.
    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, RecordError> {
        if self.contains(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, RecordError> {
        if self.contains(key) {
            self.u64(key)
        } else {
            Ok(default)
        }
    }

    /// Serializes without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(k);
            out.push(':');
            out.push_str(v.tag());
            out.push('=');
            match v {
                Value::U(x) => {
                    let _ = write!(out, "{x}");
                }
                Value::I(x) => {
                    let _ = write!(out, "{x}");
                }
                Value::F(x) => {
                    let _ = write!(out, "{x}");
                }
                Value::B(x) => {
                    let _ = write!(out, "{x}");
                }
                Value::S(x) => out.push_str(&escape(x)),
                Value::UL(xs) => {
                    for (j, x) in xs.iter().enumerate() {
                        if j > 0 {
                            out.push(',');
                        }
                        let _ = write!(out, "{x}");
                    }
                }
                Value::FL(xs) => {
                    for (j, x) in xs.iter().enumerate() {
                        if j > 0 {
                            out.push(',');
                        }
                        let _ = write!(out, "{x}");
                    }
                }
                Value::SL(xs) => {
                    for (j, x) in xs.iter().enumerate() {
                        if j > 0 {
                            out.push(',');
                        }
                        out.push_str(&escape(x));
                    }
                }
            }
        }
        out
    }

    /// Parses one line (no trailing newline).
    pub fn parse(line: &str) -> Result<Record, RecordError> {
        let mut fields = Vec::new();
        let mut column = 1;
        for token in line.split(' ') {
            if token.is_empty() {
                return Err(RecordError::Syntax { column, message: "empty field".into() });
            }
            let (head, raw) = token
                .split_once('=')
                .ok_or_else(|| RecordError::Syntax { column, message: "expected `key:tag=value`".into() })?;
            let (key, tag) = head
                .split_once(':')
                .ok_or_else(|| RecordError::Syntax { column, message: "expected `key:tag`".into() })?;
            if !valid_key(key) {
                return Err(RecordError::Syntax { column, message: format!("invalid key `{key}`") });
            }
            let value = parse_value(tag, raw, column + head.len() + 1)?;
            fields.push((key.to_string(), value));
            column += token.len() + 1;
        }
        Ok(Record { fields })
    }
}

/// Parses a whole document, skipping blank and `#` lines. Errors carry the 1-based line number.
pub fn parse_document(text: &str) -> Result<Vec<(usize, Record)>, (usize, RecordError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| Record::parse(l.trim_end_matches('\r')).map(|r| (i + 1, r)).map_err(|e| (i + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_round_trip() {
        let r = Record::new()
            .with("kind", Value::S("object".into()))
            .with("id", Value::S("odd name, with = signs%".into()))
            .with("mass", Value::F(150.0))
            .with("small", Value::F(0.1 + 0.2))
            .with("n", Value::U(7))
            .with("delta", Value::I(-3))
            .with("ok", Value::B(true))
            .with("fp", Value::FL(vec![-20.0, 1.5e-9, 3.0]))
            .with("t", Value::UL(vec![]))
            .with("names", Value::SL(vec!["a b".into(), "ü".into()]));
        let line = r.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(Record::parse(&line).unwrap(), r);
    }

    #[test]
    fn readable_floats() {
        let r = Record::new().with("w", Value::F(40.0)).with("z", Value::F(-0.0));
        assert_eq!(r.to_line(), "w:f=40 z:f=-0");
        let back = Record::parse("w:f=40 z:f=-0").unwrap();
        assert!(back.f64("z").unwrap().is_sign_negative());
    }

    #[test]
    fn syntax_errors_report_column() {
        let err = Record::parse("a:u=1 b:u=x").unwrap_err();
        assert!(matches!(err, RecordError::Syntax { column: 11, .. }), "{err:?}");
        assert!(Record::parse("a:q=1").is_err());
        assert!(Record::parse("a:u=1  b:u=2").is_err());
        assert!(Record::parse("novalue").is_err());
        assert!(Record::parse("s:s=%G1").is_err());
    }

    #[test]
    fn typed_accessors() {
        let r = Record::parse("a:u=3 b:f=2.5 c:s=x").unwrap();
        assert_eq!(r.f64("a").unwrap(), 3.0);
        assert!(matches!(r.u64("b"), Err(RecordError::WrongType { .. })));
        assert!(matches!(r.str("zz"), Err(RecordError::Missing(_))));
        assert_eq!(r.f64_or("zz", 9.0).unwrap(), 9.0);
    }

    #[test]
    fn document_skips_comments() {
        let doc = "# header\n\nk:u=1\n  # indented comment\nk:u=2\n";
        let recs = parse_document(doc).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].0, 5);
        let err = parse_document("k:u=1\nbroken\n").unwrap_err();
        assert_eq!(err.0, 2);
    }

    proptest! {
        #[test]
        fn floats_round_trip_bit_exact(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let r = Record::new().with("x", Value::F(x));
            let back = Record::parse(&r.to_line()).unwrap();
            prop_assert_eq!(back.f64("x").unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn strings_round_trip(s in "\\PC*") {
            let r = Record::new().with("s", Value::S(s.clone()));
            let back = Record::parse(&r.to_line()).unwrap();
            prop_assert_eq!(back.str("s").unwrap(), s.as_str());
        }
    }
}
