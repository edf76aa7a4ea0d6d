//! Deterministic JSON: fixed key order (struct declaration order), two-space
//! indentation, and every float printed with 17 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

pub const SCHEMA_VERSION: u32 = 1;

/// Pretty formatter whose floats are `{:.16e}`.
struct FixedFloat<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value`; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, FixedFloat(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Probe {
        b: f64,
        a: Vec<f64>,
        nan: f64,
    }

    #[test]
    fn floats_have_seventeen_digits_and_round_trip() {
        let p = Probe {
            b: 0.1,
            a: vec![1.0, -2.5e-300],
            nan: f64::NAN,
        };
        let s = to_json(&p);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.find("\"b\"").unwrap() < s.find("\"a\"").unwrap());
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["b"].as_f64().unwrap(), 0.1);
        assert_eq!(v["a"][1].as_f64().unwrap(), -2.5e-300);
        assert!(v["nan"].is_null());
        assert_eq!(s, to_json(&p));
    }
}
