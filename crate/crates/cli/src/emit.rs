//! Byte-stable JSON, CSV and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Integral values print as integers, everything else with 17 significant
/// digits.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    format!("{v:.16e}")
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => write!(out, "{i}").unwrap(),
            (None, Some(u)) => write!(out, "{u}").unwrap(),
            _ => {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.is_finite() {
                    out.push_str(&num(f));
                } else {
                    out.push_str("null");
                }
            }
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

/// Compact JSON with sorted keys and fixed float formatting.
pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("reports serialize");
    let mut out = String::new();
    write_value(&mut out, &v);
    out
}

pub struct Csv {
    header: Vec<String>,
    rows: Vec<String>,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.header.len());
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.rows.push(line.join(","));
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

pub enum Cell {
    N(f64),
    I(i64),
    T(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::N(v) => num(*v),
            Cell::I(v) => v.to_string(),
            Cell::T(s) if s.contains(',') || s.contains('"') => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::T(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn nums(values: &[f64]) -> Vec<Cell> {
    values.iter().map(|v| Cell::N(*v)).collect()
}

/// Files of one run, written only when `--out` was given.
pub struct OutDir {
    dir: Option<PathBuf>,
}

impl OutDir {
    pub fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf) })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            let p = d.join(name);
            fs::write(&p, contents).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = json(value);
        s.push('\n');
        self.write(name, &s)
    }
}

pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub class: &'static str,
}

pub struct Marker {
    pub at: (f64, f64),
    pub label: String,
}

const W: f64 = 800.0;
const H: f64 = 600.0;
const PAD: f64 = 50.0;

/// Phase portrait on a fixed 800×600 canvas.
pub fn svg(x_label: &str, y_label: &str, lines: &[Polyline], markers: &[Marker]) -> String {
    let pts = lines.iter().flat_map(|l| l.points.iter()).chain(markers.iter().map(|m| &m.at));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600">"#).unwrap();
    s.push_str("<style>polyline{fill:none;stroke-width:1.2}.forward{stroke:#1f5fa8}.backward{stroke:#b5462f;stroke-dasharray:4 3}text{font:12px sans-serif}</style>\n");
    writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 15.0).unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    for (v, anchor, x, y) in [(x0, "start", PAD, H - PAD + 15.0), (x1, "end", W - PAD, H - PAD + 15.0)] {
        writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, short(v)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, short(y0)).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, PAD + 10.0, short(y1)).unwrap();
    for l in lines {
        let coords: Vec<String> = l
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if coords.len() > 1 {
            writeln!(s, r#"<polyline class="{}" points="{}"/>"#, l.class, coords.join(" ")).unwrap();
        }
    }
    for m in markers {
        let (x, y) = (sx(m.at.0), sy(m.at.1));
        writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="#222"/>"##).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 7.0, y - 7.0, m.label).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_floats_print_as_integers() {
        assert_eq!(json(&serde_json::json!({"roots": [1.0, 2.0]})), r#"{"roots":[1,2]}"#);
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn csv_quotes_commas() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[Cell::T("x,y".into()), Cell::N(2.5)]);
        assert_eq!(c.render(), "a,b\n\"x,y\",2.5000000000000000e0\n");
    }
}
