//! JSON and CSV artifacts with reals written at 17 significant digits.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::Result;
use crate::integrator::Trajectory;

/// Formats a real as `d.dddddddddddddddde±x` (17 significant digits).
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Compact JSON formatter that writes every finite real with
/// [`format_real`]. Non-finite reals become `null` (serde_json does that
/// before reaching the formatter).
#[derive(Debug, Default, Clone, Copy)]
pub struct RealFormatter;

impl Formatter for RealFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_real(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn write_null<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        CompactFormatter.write_null(writer)
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RealFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Trajectory as CSV: `t,y_1,…,y_n,H,iters`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.states.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",y_{i}");
    }
    out.push_str(",H,iters\n");
    for n in 0..traj.len() {
        out.push_str(&format_real(traj.times[n]));
        for v in &traj.states[n] {
            out.push(',');
            out.push_str(&format_real(*v));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            format_real(traj.energies[n]),
            traj.iteration_counts[n]
        );
    }
    out
}

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so a failed run never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = std::fs::write(&tmp, contents).and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}
