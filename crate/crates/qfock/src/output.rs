//! Report serialization: JSON with fixed field order and CSV with CRLF line endings.
//! Floats are written with 17 significant digits so that files round-trip bit for bit.

use std::io::Write;
use std::path::Path;

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// `x` with 17 significant digits; `inf`, `-inf` and `nan` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// An `f64` serialized through [`fmt_f64`]: a JSON number when finite, a string otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F64(pub f64);

impl Serialize for F64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_str(&fmt_f64(self.0))
        }
    }
}

impl From<f64> for F64 {
    fn from(x: f64) -> Self {
        F64(x)
    }
}

pub fn floats(xs: &[f64]) -> Vec<F64> {
    xs.iter().copied().map(F64).collect()
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `value` as pretty JSON to `out`, or to stdout.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    sink(out)?.write_all(to_json(value)?.as_bytes())?;
    Ok(())
}

pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Writes an RFC 4180 table to `out`, or to stdout.
pub fn write_csv(header: &[String], rows: &[Vec<String>], out: Option<&Path>) -> Result<()> {
    sink(out)?.write_all(to_csv(header, rows)?.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        b: F64,
        a: F64,
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0, -0.0, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn json_keeps_field_order_and_handles_poles() {
        let s = serde_json::to_string(&Row {
            b: F64(0.5),
            a: F64(f64::INFINITY),
        })
        .unwrap();
        assert_eq!(s, r#"{"b":5.0000000000000000e-1,"a":"inf"}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["b"].as_f64(), Some(0.5));
    }

    #[test]
    fn csv_uses_crlf_and_quotes() {
        let s = to_csv(&["x".into(), "note".into()], &[vec![fmt_f64(1.0), "a,b".into()]]).unwrap();
        assert_eq!(s, "x,note\r\n1.0000000000000000e0,\"a,b\"\r\n");
    }
}
