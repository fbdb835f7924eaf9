//! Writers for run reports: JSON, CSV and a Markdown summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::dynamics::ScanRecord;
use crate::error::Result;
use crate::pipeline::RunReport;

pub const SCAN_CSV_HEADER: [&str; 9] =
    ["variant", "s", "eps", "tau", "t", "theta_index", "value", "ratio_linear", "ratio_sqrt"];

/// Float with 17 significant digits; non-finite values become `null`.
fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => write!(out, "{i}").unwrap(),
            (_, Some(u)) => write!(out, "{u}").unwrap(),
            _ => out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            // short numeric rows stay on one line
            if items.len() <= 8 && items.iter().all(|x| x.is_number() || x.is_null()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key encodes"));
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Deterministic pretty JSON with sorted keys and fixed float formatting.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json maps NaN and infinities to null on the way in
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn float_field(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Scan records as CSV with the fixed header.
pub fn scan_csv(records: &[ScanRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCAN_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.variant.name().to_string(),
            float_field(r.s),
            float_field(r.eps),
            float_field(r.tau),
            float_field(r.t),
            r.theta_index.to_string(),
            float_field(r.value),
            float_field(r.ratio_linear),
            float_field(r.ratio_sqrt),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

fn germ_csv(report: &RunReport) -> Result<Option<String>> {
    let Some(germ) = &report.germ else { return Ok(None) };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta_index", "theta", "branch", "gamma", "mu", "nu", "n_norm", "n0_norm", "n_scalar"])?;
    for (i, r) in germ.scan.records.iter().enumerate() {
        let theta = r.theta.iter().map(|x| float_field(*x)).collect::<Vec<_>>().join(" ");
        for b in 0..r.gammas.len() {
            w.write_record([
                i.to_string(),
                theta.clone(),
                b.to_string(),
                float_field(r.gammas[b]),
                r.mus.get(b).map(|x| float_field(*x)).unwrap_or_default(),
                r.nus.get(b).map(|x| float_field(*x)).unwrap_or_default(),
                float_field(r.n_norm),
                float_field(r.n0_norm),
                r.n_scalar.map(float_field).unwrap_or_default(),
            ])?;
        }
    }
    Ok(Some(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8")))
}

fn bands_csv(report: &RunReport) -> Result<Option<String>> {
    let Some(bands) = &report.bands else { return Ok(None) };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "band", "value"])?;
    for (t, row) in bands.ts.iter().zip(&bands.bands) {
        for (j, e) in row.iter().enumerate() {
            w.write_record([float_field(*t), (j + 1).to_string(), float_field(*e)])?;
        }
    }
    Ok(Some(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8")))
}

/// Markdown summary with the pass/fail table.
pub fn summary_markdown(report: &RunReport) -> String {
    let mut s = String::new();
    let title = report.scenario.as_deref().unwrap_or("selftest");
    writeln!(s, "# homog run: {title}\n").unwrap();
    if let (Some(c), Some(m)) = (report.cutoff, report.modes) {
        writeln!(s, "cutoff {c}, {m} modes\n").unwrap();
    }
    let stages: Vec<&str> = report.stages.iter().map(|st| st.name()).collect();
    writeln!(s, "stages: {}\n", stages.join(", ")).unwrap();
    if let Some(e) = &report.effective {
        writeln!(s, "g0 = {:?}\n", e.g0.re).unwrap();
    }
    if let Some(b) = &report.bands {
        writeln!(s, "lowest band above the germ: {:.6e} (floor c_* r0^2 = {:.6e})\n", b.min_upper_band, b.gap_floor).unwrap();
    }
    if let Some(sc) = &report.scan {
        for ((sv, lin), (_, sq)) in sc.spread_linear.iter().zip(&sc.spread_sqrt) {
            writeln!(s, "scan s = {sv}: ratio spread linear {lin:.4}, sqrt {sq:.4}").unwrap();
        }
        s.push('\n');
    }
    if let Some(p) = &report.probe {
        for note in &p.skipped {
            writeln!(s, "skipped {note}").unwrap();
        }
    }
    writeln!(s, "| check | stage | value | tolerance | result |").unwrap();
    writeln!(s, "|---|---|---|---|---|").unwrap();
    for c in &report.checks {
        writeln!(
            s,
            "| {} | {} | {:.6e} | {} {:.3e} | {} |",
            c.name.replace('|', "\\|"),
            c.stage.name(),
            c.value,
            c.relation.symbol(),
            c.tolerance,
            if c.passed { "pass" } else { "FAIL" }
        )
        .unwrap();
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    writeln!(s, "\n{passed}/{} checks passed", report.checks.len()).unwrap();
    s
}

fn timing_json(report: &RunReport) -> Result<String> {
    let map: std::collections::BTreeMap<&str, f64> = report.timings.iter().map(|(st, t)| (st.name(), *t)).collect();
    to_json(&map)
}

/// Writes report.json, summary.md, timing.json and the CSV tables into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), to_json(report)?)?;
    fs::write(dir.join("summary.md"), summary_markdown(report))?;
    fs::write(dir.join("timing.json"), timing_json(report)?)?;
    if let Some(scan) = &report.scan {
        fs::write(dir.join("scan_sup.csv"), scan_csv(&scan.sup)?)?;
        if !report.scan_cells.is_empty() {
            fs::write(dir.join("scan.csv"), scan_csv(&report.scan_cells)?)?;
        }
    }
    if let Some(g) = germ_csv(report)? {
        fs::write(dir.join("germ.csv"), g)?;
    }
    if let Some(b) = bands_csv(report)? {
        fs::write(dir.join("bands.csv"), b)?;
    }
    Ok(())
}
