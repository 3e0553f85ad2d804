//! Number formatting for reports: `%g`-style output with a fixed count of
//! significant digits, and a JSON formatter built on it.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Significant digits of floating-point numbers in JSON output.
pub const JSON_DIGITS: usize = 17;
/// Default significant digits in CSV and TSV output.
pub const TABLE_DIGITS: usize = 6;

/// Format `v` with `digits` significant digits, trailing zeros removed,
/// switching to exponent notation outside `[1e-4, 10^digits)` like C's `%g`.
pub fn sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Compact or pretty JSON with every float printed by [`sig`]. Non-finite
/// values become `null`.
struct SigFormatter<F> {
    inner: F,
    digits: usize,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for SigFormatter<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            let s = sig(value, self.digits);
            if s.contains(['.', 'e']) {
                w.write_all(s.as_bytes())
            } else {
                write!(w, "{s}.0")
            }
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

pub fn to_json<T: Serialize>(value: &T, pretty: bool) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    if pretty {
        let fmt = SigFormatter {
            inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
            digits: JSON_DIGITS,
        };
        value.serialize(&mut Serializer::with_formatter(&mut buf, fmt))?;
    } else {
        let fmt = SigFormatter {
            inner: serde_json::ser::CompactFormatter,
            digits: JSON_DIGITS,
        };
        value.serialize(&mut Serializer::with_formatter(&mut buf, fmt))?;
    }
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}
