//! Deterministic artifact formatting: fixed 12-significant-digit numbers and
//! the CSV/JSON writers behind the command-line front end.
//!
//! Every number printed through this module renders identically across
//! platforms and runs, so artifact files can be compared byte-for-byte in
//! golden tests.  Non-finite values appear as `NaN`/`inf` in CSV and as
//! `null` in JSON (which has no representation for them).

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::duality::DualityReport;
use crate::error::{Error, Result};
use crate::simulate::PathEnsemble;
use crate::verify::{HjbSolution, SurfacePoint};

/// Formats a float with at most 12 significant digits, using positional
/// notation for moderate exponents and scientific notation otherwise.
/// Trailing zeros are trimmed (`0.5`, not `0.500000000000`), and the result
/// re-parses to a value that formats back to the same string.
pub fn format_sig12(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v.is_sign_positive() { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponential float format");
    let exp: i32 = exp.parse().expect("float exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let digits = digits.trim_end_matches('0');
    let body = if (-4..=14).contains(&exp) {
        positional(digits, exp)
    } else {
        let (head, tail) = digits.split_at(1);
        if tail.is_empty() {
            format!("{head}e{exp}")
        } else {
            format!("{head}.{tail}e{exp}")
        }
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Lays out mantissa digits `d1 d2 … dn` (value d1.d2…dn × 10^exp) in
/// positional notation.
fn positional(digits: &str, exp: i32) -> String {
    if exp >= 0 {
        let point = exp as usize + 1;
        if point >= digits.len() {
            let mut s = digits.to_string();
            s.push_str(&"0".repeat(point - digits.len()));
            s
        } else {
            format!("{}.{}", &digits[..point], &digits[point..])
        }
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

/// Serializes a report to pretty JSON with 12-significant-digit numbers,
/// sorted object keys and a trailing newline.
pub fn json_string_sig12<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    render_json(&mut out, &tree, 0);
    out.push('\n');
    Ok(out)
}

/// Writes a report as deterministic JSON; see [`json_string_sig12`].
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = json_string_sig12(value)?;
    fs::write(path, text)?;
    Ok(())
}

fn render_json(out: &mut String, v: &Value, depth: usize) {
    const INDENT: &str = "  ";
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                match n.as_f64() {
                    Some(f) if f.is_finite() => out.push_str(&format_sig12(f)),
                    _ => out.push_str("null"),
                }
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"))
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&INDENT.repeat(depth + 1));
                render_json(out, item, depth + 1);
            }
            out.push('\n');
            out.push_str(&INDENT.repeat(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&INDENT.repeat(depth + 1));
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push_str(": ");
                render_json(out, item, depth + 1);
            }
            out.push('\n');
            out.push_str(&INDENT.repeat(depth));
            out.push('}');
        }
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

/// Writes the per-S duality scan: `s,h_constrained,biconjugate,gap,gamma_star`.
pub fn write_duality_csv(path: &Path, report: &DualityReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["s", "h_constrained", "biconjugate", "gap", "gamma_star"])?;
    for i in 0..report.s_grid.len() {
        w.write_record([
            format_sig12(report.s_grid[i]),
            format_sig12(report.h_constrained[i]),
            format_sig12(report.biconjugate[i]),
            format_sig12(report.gap[i]),
            format_sig12(report.gamma_star[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one scanned value surface: `z,<key>,mean,std_error`, where `key`
/// names the second coordinate (`gamma` or `s`).
pub fn write_surface_csv(path: &Path, key: &str, surface: &[SurfacePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["z", key, "mean", "std_error"])?;
    for p in surface {
        w.write_record([
            format_sig12(p.z),
            format_sig12(p.key),
            format_sig12(p.mean),
            format_sig12(p.std_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one recorded trace of an ensemble: `t,x,y,qv,cost,k_a`.
pub fn write_trace_csv(path: &Path, ens: &PathEnsemble, path_index: usize) -> Result<()> {
    let trace = ens.traces.get(path_index).ok_or_else(|| {
        Error::config(format!(
            "path {path_index} was not recorded; increase record_paths (currently {} traces)",
            ens.traces.len()
        ))
    })?;
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "y", "qv", "cost", "k_a"])?;
    for i in 0..ens.time.len() {
        w.write_record([
            format_sig12(ens.time[i]),
            format_sig12(trace.x[i]),
            format_sig12(trace.y[i]),
            format_sig12(trace.qv[i]),
            format_sig12(trace.cost[i]),
            format_sig12(trace.k_a[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the HJB cost-to-go curve: `t,b`.
pub fn write_hjb_csv(path: &Path, sol: &HjbSolution) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "b"])?;
    for (&t, &b) in sol.t.iter().zip(&sol.b) {
        w.write_record([format_sig12(t), format_sig12(b)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
// Reference constants are kept verbatim at full printed precision.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[test]
    fn format_sig12_positional_cases() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(-0.0), "0");
        assert_eq!(format_sig12(0.5), "0.5");
        assert_eq!(format_sig12(-1.0), "-1");
        assert_eq!(format_sig12(1.5811388300841897), "1.58113883008");
        assert_eq!(format_sig12(-4.8604879304466749), "-4.86048793045");
        assert_eq!(format_sig12(4.0 / 27.0), "0.148148148148");
        assert_eq!(format_sig12(123456.789), "123456.789");
        assert_eq!(format_sig12(1e-4), "0.0001");
        assert_eq!(format_sig12(100.0), "100");
    }

    #[test]
    fn format_sig12_scientific_and_special_cases() {
        assert_eq!(format_sig12(1e-7), "1e-7");
        assert_eq!(format_sig12(-2.5e-9), "-2.5e-9");
        assert_eq!(format_sig12(1e15), "1e15");
        assert_eq!(format_sig12(1e14), "100000000000000");
        assert_eq!(format_sig12(f64::NAN), "NaN");
        assert_eq!(format_sig12(f64::INFINITY), "inf");
        assert_eq!(format_sig12(f64::NEG_INFINITY), "-inf");
        // Carry across the mantissa: 0.99999999999995 rounds up to 1.
        assert_eq!(format_sig12(0.99999999999995), "1");
    }

    #[test]
    fn format_sig12_is_idempotent_under_reparse() {
        for &v in &[
            0.63245553203367587,
            -2.5,
            1.5811388300841897,
            -0.85185185185185185,
            3.333e-5,
            9.87654321e11,
            -1.23456789012e-17,
        ] {
            let s = format_sig12(v);
            let reparsed: f64 = s.parse().unwrap();
            assert_eq!(format_sig12(reparsed), s, "value {v}");
        }
    }

    #[derive(Serialize)]
    struct Demo {
        name: String,
        value: f64,
        missing: f64,
        count: u64,
        flags: Vec<bool>,
    }

    #[test]
    fn json_formatting_is_deterministic_and_rounded() {
        let demo = Demo {
            name: "cell \"a\"".to_string(),
            value: 0.63245553203367587,
            missing: f64::NAN,
            count: 3,
            flags: vec![true, false],
        };
        let a = json_string_sig12(&demo).unwrap();
        let b = json_string_sig12(&demo).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("0.632455532034"), "{a}");
        assert!(a.contains("\"missing\": null"), "{a}");
        assert!(a.contains("\"count\": 3"), "{a}");
        assert!(a.ends_with("}\n"), "{a}");
        // Round-trips as valid JSON.
        let back: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(back["flags"][1], Value::Bool(false));
    }

    #[test]
    fn csv_writers_produce_stable_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let surface = vec![
            SurfacePoint { z: 0.5, key: -2.5, mean: -4.8604879304466749, std_error: 0.01 },
            SurfacePoint { z: 0.5, key: -2.0, mean: f64::NAN, std_error: f64::NAN },
        ];
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_surface_csv(&p1, "gamma", &surface).unwrap();
        write_surface_csv(&p2, "gamma", &surface).unwrap();
        let a = fs::read(&p1).unwrap();
        assert_eq!(a, fs::read(&p2).unwrap());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("z,gamma,mean,std_error\n"), "{text}");
        assert!(text.contains("0.5,-2.5,-4.86048793045,0.01"), "{text}");
        assert!(text.contains("NaN"), "{text}");
    }

    #[test]
    fn trace_csv_requires_recorded_path() {
        let ens = PathEnsemble {
            time: vec![0.0, 1.0],
            dt: 1.0,
            y0: 0.0,
            y0_level: 0.0,
            summaries: Vec::new(),
            traces: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let err = write_trace_csv(&dir.path().join("t.csv"), &ens, 0).unwrap_err();
        assert!(err.to_string().contains("record_paths"), "{err}");
    }
}
