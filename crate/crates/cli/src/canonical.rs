//! Canonical JSON: keys sorted, floats with a fixed number of significant
//! digits, non-finite floats as `null`. Identical inputs give identical bytes.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Digits after the point in scientific notation.
pub const FLOAT_DIGITS: usize = 12;

pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // folds -0.0 into 0.0
        return format!("{:.*e}", FLOAT_DIGITS, 0.0);
    }
    format!("{:.*e}", FLOAT_DIGITS, v)
}

struct Canonical<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for Canonical<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_float(v).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes through `serde_json::Value`, whose maps are key-ordered.
pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        Canonical {
            inner: PrettyFormatter::new(),
        },
    );
    v.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let mut m = HashMap::new();
        m.insert("zeta", 1.0 / 3.0);
        m.insert("alpha", -0.0);
        m.insert("mid", f64::NAN);
        let s = to_canonical_string(&m).unwrap();
        let a = s.find("alpha").unwrap();
        assert!(a < s.find("mid").unwrap() && s.find("mid").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("3.333333333333e-1"));
        assert!(s.contains("\"alpha\": 0.000000000000e0"));
        assert!(s.contains("\"mid\": null"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!((back["zeta"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn integers_stay_integers() {
        let s = to_canonical_string(&vec![1u32, 2, 3]).unwrap();
        assert!(!s.contains('e'));
    }
}
