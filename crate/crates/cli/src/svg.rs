//! Heatmaps rendered directly from CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Piecewise-linear colour map on `[0, 1]`.
pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    let c: Vec<u8> = (0..3).map(|d| (STOPS[k][d] + f * (STOPS[k + 1][d] - STOPS[k][d])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Which columns of a CSV file to plot.
#[derive(Debug, Clone)]
pub struct HeatmapSpec<'a> {
    pub x: &'a str,
    pub y: &'a str,
    pub value: &'a str,
    /// Keep only rows where this column equals the value.
    pub filter: Option<(&'a str, f64)>,
    pub title: &'a str,
}

/// Values on the tensor grid `xs × ys`, `grid[ix][iy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_grid(csv_path: &Path, spec: &HeatmapSpec<'_>) -> Result<Grid> {
    let mut reader = csv::Reader::from_path(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("column '{name}' missing in {}", csv_path.display()))
    };
    let (cx, cy, cv) = (col(spec.x)?, col(spec.y)?, col(spec.value)?);
    let filter = spec.filter.map(|(name, v)| col(name).map(|c| (c, v))).transpose()?;
    let mut cells: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let key = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let num = |c: usize| -> Result<f64> { Ok(record[c].parse::<f64>()?) };
        if let Some((c, v)) = filter {
            if num(c)? != v {
                continue;
            }
        }
        let (x, y) = (num(cx)?, num(cy)?);
        xs.push(x);
        ys.push(y);
        cells.insert((key(x), key(y)), num(cv)?);
    }
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (xs, ys) = (sorted(xs), sorted(ys));
    if xs.len() < 2 || ys.len() < 2 {
        bail!("{} has too few rows for a heatmap", csv_path.display());
    }
    let values = xs
        .iter()
        .map(|&x| ys.iter().map(|&y| *cells.get(&(key(x), key(y))).unwrap_or(&f64::NAN)).collect())
        .collect();
    Ok(Grid { xs, ys, values })
}

pub fn render(grid: &Grid, title: &str, x_label: &str, y_label: &str) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, top, pw, ph) = (70.0, 40.0, 460.0, 380.0);
    let finite = grid.values.iter().flatten().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (nx, ny) = (grid.xs.len(), grid.ys.len());
    let (cw, ch) = (pw / nx as f64, ph / ny as f64);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for (i, col) in grid.values.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            let fill = if v.is_finite() { color((v - lo) / span) } else { "#cccccc".into() };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                left + i as f64 * cw,
                top + ph - (j + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let (x0, x1) = (grid.xs[0], grid.xs[nx - 1]);
    let (y0, y1) = (grid.ys[0], grid.ys[ny - 1]);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.2}</text>"#,
            left + f * pw,
            top + ph + 16.0,
            x0 + f * (x1 - x0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.2}</text>"#,
            left - 6.0,
            top + ph - f * ph + 4.0,
            y0 + f * (y1 - y0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    // legend
    let lx = left + pw + 20.0;
    let bands = 50;
    for k in 0..bands {
        let f = k as f64 / bands as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            top + ph - (f + 1.0 / bands as f64) * ph,
            ph / bands as f64 + 0.05,
            color(f + 0.5 / bands as f64)
        );
    }
    let _ = writeln!(s, r#"<rect x="{lx}" y="{top}" width="18" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11">{:.2}</text>"#,
            lx + 24.0,
            top + ph - f * ph + 4.0,
            lo + f * (hi - lo)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn heatmap_from_csv(csv_path: &Path, spec: &HeatmapSpec<'_>, svg_path: &Path) -> Result<()> {
    let grid = read_grid(csv_path, spec)?;
    std::fs::write(svg_path, render(&grid, spec.title, spec.x, spec.y))
        .with_context(|| format!("writing {}", svg_path.display()))
}
