//! JSON serialization with full-precision floats.
//!
//! Checkpoints and datasets must round-trip f64 values exactly, so we emit
//! every float with 17 significant digits instead of serde_json's shortest
//! representation.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io;

struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // 16 digits after the point in scientific notation = 17 significant
        // digits, enough to reconstruct any f64 bit pattern.
        write!(writer, "{:.16e}", value)
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.8e}", value)
    }
}

/// Serialize `value` as JSON with 17-significant-digit floats.
pub fn to_string_full<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    // Formatter output is ASCII.
    Ok(String::from_utf8(out).expect("json output is utf8"))
}

/// Serialize to a writer with 17-significant-digit floats.
pub fn to_writer_full<W: io::Write, T: Serialize>(writer: W, value: &T) -> serde_json::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, FullPrecision);
    value.serialize(&mut ser)
}
