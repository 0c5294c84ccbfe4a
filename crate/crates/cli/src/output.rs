use std::fs;
use std::path::PathBuf;

use ptia_core::plot::line_chart;
use ptia_core::{Error, Result};

use crate::{Context, Format};

/// Four significant digits for display summaries.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.3e}");
    let exp: i32 = sci[sci.find('e').map_or(0, |k| k + 1)..]
        .parse()
        .unwrap_or(0);
    if (-3..4).contains(&exp) {
        let decimals = (3 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows
            .push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// A chart to render when svg output is requested.
pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub fn write_file(ctx: &Context, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&ctx.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", ctx.out.display())))?;
    let path = ctx.out.join(name);
    fs::write(&path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Writes `<stem>.csv` and/or `<stem>.svg` according to `--format`.
pub fn emit(ctx: &Context, stem: &str, table: &Table, chart: Option<Chart<'_>>) -> Result<()> {
    for f in &ctx.formats {
        match f {
            Format::Csv => {
                write_file(ctx, &format!("{stem}.csv"), &table.to_csv())?;
            }
            Format::Svg => {
                if let Some(c) = &chart {
                    let svg = line_chart(c.title, c.x_label, c.y_label, &c.points);
                    write_file(ctx, &format!("{stem}.svg"), &svg)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(5.101e-6), "5.101e-6");
        assert_eq!(sig4(50_500.0), "5.050e4");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(0.0876), "0.08760");
        assert_eq!(sig4(1234.4), "1234");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(0.99999999), "1.000");
        assert_eq!(sig4(9.99999), "10.00");
        assert_eq!(sig4(40504.2), "4.050e4");
    }

    #[test]
    fn round_trip_numbers() {
        for x in [
            0.0,
            4.2e-6,
            2.6022803280328035e-15,
            1.44,
            5063.0,
            1e300,
            -3.5e-9,
        ] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(4.2e-6), "4.2e-6");
        assert_eq!(num(27.5), "27.5");
    }
}
