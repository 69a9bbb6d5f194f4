//! Survival-curve CSV files and a small self-contained log-log SVG chart.
//!
//! CSV layout: `#`-prefixed header comments (tool version, then one
//! `# key: value` line per entry, config as JSON), a column header, and one
//! row per horizon. Floats use Rust's shortest round-trip formatting so a
//! file read back reproduces the curve bit for bit.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::montecarlo::{CurveKind, ExponentFit, SurvivalCurve};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CURVE_COLUMNS: &str = "horizon,survivors,trials,p_hat,ci_low,ci_high";
pub const FIT_COLUMNS: &str = "slope,stderr,r2,fit_lo,fit_hi";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn kind_name(kind: CurveKind) -> &'static str {
    match kind {
        CurveKind::Time => "time",
        CurveKind::Excursion => "excursion",
        CurveKind::Duration => "duration",
    }
}

/// Header comment block: version, curve kind, capped count and `config`.
pub fn header(curve: &SurvivalCurve, config: &serde_json::Value) -> String {
    format!(
        "# persist-walk {VERSION}\n# kind: {}\n# capped: {}\n# config: {}\n",
        kind_name(curve.kind),
        curve.capped,
        config
    )
}

/// The data rows (column header included), without comments.
pub fn body(curve: &SurvivalCurve) -> String {
    let mut out = String::new();
    out.push_str(CURVE_COLUMNS);
    out.push('\n');
    for i in 0..curve.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            curve.horizons[i], curve.survivors[i], curve.trials, curve.p_hat[i], curve.ci_low[i], curve.ci_high[i]
        );
    }
    out
}

pub fn write_curve<W: Write>(mut out: W, curve: &SurvivalCurve, config: &serde_json::Value) -> io::Result<()> {
    out.write_all(header(curve, config).as_bytes())?;
    out.write_all(body(curve).as_bytes())
}

/// Curve rows with the fit appended as trailing columns on every row.
pub fn write_fitted<W: Write>(
    mut out: W,
    curve: &SurvivalCurve,
    fit: &ExponentFit,
    config: &serde_json::Value,
) -> io::Result<()> {
    out.write_all(header(curve, config).as_bytes())?;
    writeln!(out, "{CURVE_COLUMNS},{FIT_COLUMNS}")?;
    for i in 0..curve.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            curve.horizons[i],
            curve.survivors[i],
            curve.trials,
            curve.p_hat[i],
            curve.ci_low[i],
            curve.ci_high[i],
            fit.slope,
            fit.stderr,
            fit.r_squared,
            fit.fit_range.0,
            fit.fit_range.1
        )?;
    }
    Ok(())
}

/// A curve read back from CSV together with its comment lines.
#[derive(Clone, Debug)]
pub struct CurveFile {
    pub curve: SurvivalCurve,
    pub comments: Vec<String>,
}

pub fn read_curve<R: BufRead>(input: R) -> Result<CurveFile, ReportError> {
    let mut comments = Vec::new();
    let mut kind = CurveKind::Time;
    let mut capped = 0u64;
    let mut seen_header = false;
    let (mut horizons, mut survivors) = (Vec::new(), Vec::new());
    let mut trials = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let err = |msg: String| ReportError::Parse { line: lineno, msg };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            let c = c.trim();
            if let Some(k) = c.strip_prefix("kind:") {
                kind = match k.trim() {
                    "time" => CurveKind::Time,
                    "excursion" => CurveKind::Excursion,
                    "duration" => CurveKind::Duration,
                    other => return Err(err(format!("unknown curve kind {other:?}"))),
                };
            } else if let Some(k) = c.strip_prefix("capped:") {
                capped = k.trim().parse().map_err(|e| err(format!("capped: {e}")))?;
            }
            comments.push(c.to_string());
            continue;
        }
        if !seen_header {
            if !trimmed.starts_with(CURVE_COLUMNS) {
                return Err(err(format!("expected header {CURVE_COLUMNS:?}")));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() < 6 {
            return Err(err(format!("expected at least 6 columns, found {}", cols.len())));
        }
        let int = |i: usize| cols[i].trim().parse::<u64>().map_err(|e| err(format!("column {}: {e}", i + 1)));
        horizons.push(int(0)?);
        survivors.push(int(1)?);
        let t = int(2)?;
        if *trials.get_or_insert(t) != t {
            return Err(err("trials differ between rows".into()));
        }
    }
    if !seen_header {
        return Err(ReportError::Parse { line: 0, msg: "missing column header".into() });
    }
    let curve = SurvivalCurve::from_counts(kind, horizons, survivors, trials.unwrap_or(0), capped);
    Ok(CurveFile { curve, comments })
}

/// Log-log chart of `p̂` with confidence bars and an optional fitted line.
pub fn svg_chart(curve: &SurvivalCurve, fit: Option<&ExponentFit>, title: &str) -> String {
    let (w, h) = (640.0, 440.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let pts: Vec<(f64, f64, f64, f64)> = (0..curve.len())
        .filter(|&i| curve.p_hat[i] > 0.0)
        .map(|i| {
            (
                (curve.horizons[i] as f64).log10(),
                curve.p_hat[i].log10(),
                curve.ci_low[i].max(curve.p_hat[i] * 1e-3).log10(),
                curve.ci_high[i].log10(),
            )
        })
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor();
    let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().max(x0 + 1.0);
    let y0 = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min).floor();
    let y1 = pts.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max).ceil().max(y0 + 1.0);
    let px = |v: f64| ml + (v - x0) / (x1 - x0) * (w - ml - mr);
    let py = |v: f64| h - mb - (v - y0) / (y1 - y0) * (h - mt - mb);

    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(d as f64);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, h - mb, h - mb + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"#, h - mb + 18.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(d as f64);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{ml}" y2="{y:.1}" stroke="black"/>"#, ml - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"#, ml - 8.0, y + 4.0);
    }
    let axis = match curve.kind {
        CurveKind::Time => "t",
        CurveKind::Excursion => "k",
        CurveKind::Duration => "n",
    };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{axis}</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">survival</text>"#,
        h / 2.0,
        h / 2.0
    );
    for p in &pts {
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#888"/>"##,
            py(p.2),
            py(p.3),
            x = px(p.0)
        );
    }
    let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.0), py(p.1))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f4e9a" stroke-width="1.5"/>"##, line.join(" "));
    if let Some(f) = fit {
        let (a, b) = ((f.fit_range.0 as f64).log10(), (f.fit_range.1 as f64).log10());
        let y = |v: f64| (f.intercept + f.slope * v * std::f64::consts::LN_10) / std::f64::consts::LN_10;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#c0392b" stroke-dasharray="6 4"/>"##,
            px(a),
            py(y(a)),
            px(b),
            py(y(b))
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">slope {:.4} ± {:.4}</text>"#,
            w - mr - 8.0,
            mt + 18.0,
            f.slope,
            f.stderr
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::fit_exponent;

    fn curve() -> SurvivalCurve {
        let horizons: Vec<u64> = (0..12).map(|k| 1 << k).collect();
        let survivors = horizons.iter().map(|&h| (100_000.0 / (h as f64).sqrt()) as u64).collect();
        SurvivalCurve::from_counts(CurveKind::Excursion, horizons, survivors, 100_000, 3)
    }

    #[test]
    fn csv_round_trip() {
        let c = curve();
        let mut buf = Vec::new();
        write_curve(&mut buf, &c, &serde_json::json!({"seed": 1})).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# persist-walk "));
        assert!(text.contains("# config: {\"seed\":1}"));
        let back = read_curve(text.as_bytes()).unwrap();
        assert_eq!(back.curve, c);
    }

    #[test]
    fn fitted_file_reads_back() {
        let c = curve();
        let f = fit_exponent(&c, 1, 2048).unwrap();
        let mut buf = Vec::new();
        write_fitted(&mut buf, &c, &f, &serde_json::json!({})).unwrap();
        let back = read_curve(buf.as_slice()).unwrap();
        assert_eq!(back.curve, c);
    }

    #[test]
    fn malformed_rows() {
        assert!(read_curve("1,2,3\n".as_bytes()).is_err());
        let bad = format!("{CURVE_COLUMNS}\n1,2,x,0.1,0,1\n");
        assert!(matches!(read_curve(bad.as_bytes()), Err(ReportError::Parse { line: 2, .. })));
    }

    #[test]
    fn svg_is_well_formed() {
        let c = curve();
        let f = fit_exponent(&c, 1, 2048).unwrap();
        let s = svg_chart(&c, Some(&f), "a < b");
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("polyline") && s.contains("a &lt; b") && s.contains("slope"));
    }
}
