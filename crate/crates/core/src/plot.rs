//! SVG charts for the CSV artifacts: λ-ablation curves, evaluation bars,
//! trajectory traces, and learning curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Ablation,
    EvalReport,
    Trajectory,
    Metrics,
    AttackCurve,
}

impl CsvKind {
    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            CsvKind::Ablation => &crate::pipeline::SWEEP_COLUMNS,
            CsvKind::EvalReport => &crate::eval::REPORT_COLUMNS,
            CsvKind::Trajectory => &crate::run::TRAJECTORY_COLUMNS,
            CsvKind::Metrics => &crate::run::METRICS_COLUMNS,
            CsvKind::AttackCurve => &crate::run::CURVE_COLUMNS,
        }
    }

    /// Picks the chart kind from a distinguishing column of the header.
    pub fn detect(headers: &[String]) -> Option<CsvKind> {
        let has = |c: &str| headers.iter().any(|h| h == c);
        if has("lambda") {
            Some(CsvKind::Ablation)
        } else if has("scenario") {
            Some(CsvKind::EvalReport)
        } else if has("agent") {
            Some(CsvKind::Trajectory)
        } else if has("episode_return") {
            Some(CsvKind::Metrics)
        } else if has("team_return") {
            Some(CsvKind::AttackCurve)
        } else {
            None
        }
    }
}

/// A parsed CSV with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub kind: CsvKind,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(path.to_path_buf())
            }
            _ => Error::Csv(e),
        })?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::Schema(format!("{} is empty", path.display())));
        }
        let kind = CsvKind::detect(&headers).ok_or_else(|| {
            Error::Schema(format!(
                "{}: unrecognized columns {headers:?}",
                path.display()
            ))
        })?;
        for c in kind.required_columns() {
            if !headers.iter().any(|h| h == c) {
                return Err(Error::Schema(format!("{}: missing column `{c}`", path.display())));
            }
        }
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Schema(format!("{} has no data rows", path.display())));
        }
        Ok(Table { kind, headers, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.headers.iter().position(|h| h == name).expect("validated column")
    }

    fn text(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.col(name)]
    }

    /// Numeric cell; empty cells are `None`.
    fn num(&self, row: usize, name: &str) -> Result<Option<f64>> {
        let s = self.text(row, name);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::Schema(format!("column `{name}` row {}: `{s}` is not a number", row + 1)))
    }

    fn nums(&self, name: &str) -> Result<Vec<Option<f64>>> {
        (0..self.rows.len()).map(|r| self.num(r, name)).collect()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

impl Frame {
    fn new(xs: (f64, f64), ys: (f64, f64)) -> Frame {
        let (x0, x1) = padded(xs.0, xs.1);
        let (y0, y1) = padded(ys.0, ys.1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Svg {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
"#,
            W / 2.0,
            escape(title)
        );
        Svg { body }
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str, xticks: &[(f64, String)]) {
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = writeln!(
            self.body,
            r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let y = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
            let py = f.py(y);
            let _ = writeln!(
                self.body,
                r##"<line x1="{}" y1="{py}" x2="{l}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
                l - 4.0,
                l - 6.0,
                py + 4.0,
                tick(y)
            );
        }
        for (x, label) in xticks {
            let px = f.px(*x);
            let _ = writeln!(
                self.body,
                r#"<line x1="{px}" y1="{b}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
                b + 4.0,
                b + 18.0,
                escape(label)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 16.0,
            escape(xlabel)
        );
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.join(" ")
        );
    }

    fn whisker(&mut self, x: f64, y_lo: f64, y_hi: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<path d="M{x},{y_lo} L{x},{y_hi} M{},{y_lo} L{},{y_lo} M{},{y_hi} L{},{y_hi}" stroke="{color}"/>"#,
            x - 4.0,
            x + 4.0,
            x - 4.0,
            x + 4.0
        );
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
    }

    fn star(&mut self, x: f64, y: f64, color: &str) {
        let pts: Vec<String> = (0..10)
            .map(|k| {
                let r = if k % 2 == 0 { 8.0 } else { 3.5 };
                let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
                format!("{:.2},{:.2}", x + r * a.cos(), y + r * a.sin())
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polygon class="final-position" points="{}" fill="{color}" stroke="black" stroke-width="0.5"/>"#,
            pts.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (k, (label, color)) in entries.iter().enumerate() {
            let y = MARGIN + 4.0 + 16.0 * k as f64;
            let x = W - MARGIN - 120.0;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                y - 9.0,
                x + 14.0,
                y,
                escape(label)
            );
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Cooperative and attacked means against log10 λ; λ = 0 sits one decade
/// left of the smallest positive value.
pub fn ablation_svg(t: &Table) -> Result<String> {
    let lambda: Vec<f64> = t.nums("lambda")?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let min_pos = lambda.iter().copied().filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    let base = if min_pos.is_finite() { min_pos.log10() - 1.0 } else { 0.0 };
    let lx: Vec<f64> = lambda.iter().map(|&l| if l > 0.0 { l.log10() } else { base }).collect();
    let series = [
        ("cooperative", "cooperative_mean", "cooperative_ci95_halfwidth"),
        ("attacked", "attacked_mean", "attacked_ci95_halfwidth"),
    ];
    let mut data = Vec::new();
    for (label, m, c) in series {
        let means = t.nums(m)?;
        let cis = t.nums(c)?;
        let mut pts: Vec<(f64, f64, f64)> = lx
            .iter()
            .zip(means.iter().zip(&cis))
            .filter_map(|(&x, (m, c))| m.map(|m| (x, m, c.unwrap_or(0.0))))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        data.push((label, pts));
    }
    let xs = range(lx.iter().copied());
    let ys = range(data.iter().flat_map(|(_, p)| p.iter().flat_map(|&(_, m, c)| [m - c, m + c])));
    let f = Frame::new(xs, ys);
    let mut svg = Svg::new("Return vs shaping coefficient");
    let ticks: Vec<(f64, String)> = lambda
        .iter()
        .zip(&lx)
        .map(|(&l, &x)| (x, if l > 0.0 { format!("{l:.0e}") } else { "0".into() }))
        .collect();
    svg.axes(&f, "lambda (log scale)", "mean return", &ticks);
    for (k, (_, pts)) in data.iter().enumerate() {
        let color = PALETTE[k];
        svg.polyline(&pts.iter().map(|&(x, m, _)| (f.px(x), f.py(m))).collect::<Vec<_>>(), color);
        for &(x, m, c) in pts {
            svg.whisker(f.px(x), f.py(m - c), f.py(m + c), color);
            svg.dot(f.px(x), f.py(m), color);
        }
    }
    svg.legend(&[("cooperative", PALETTE[0]), ("attacked", PALETTE[1])]);
    Ok(svg.finish())
}

/// Bars with CI whiskers; each entry is `(label, mean, halfwidth)`.
pub fn bars_svg(title: &str, bars: &[(String, f64, f64)]) -> String {
    let ys = range(bars.iter().flat_map(|(_, m, c)| [m - c, m + c, 0.0]));
    let n = bars.len().max(1) as f64;
    let f = Frame::new((0.0, n), ys);
    let mut svg = Svg::new(title);
    let ticks: Vec<(f64, String)> = bars
        .iter()
        .enumerate()
        .map(|(i, (l, _, _))| (i as f64 + 0.5, l.clone()))
        .collect();
    svg.axes(&f, "", "mean return", &ticks);
    let zero = f.py(0.0);
    let width = (W - 2.0 * MARGIN) / n * 0.6;
    for (i, (_, m, c)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let x = f.px(i as f64 + 0.5);
        let y = f.py(*m);
        let _ = writeln!(
            svg.body,
            r#"<rect x="{}" y="{}" width="{width}" height="{}" fill="{color}" fill-opacity="0.7"/>"#,
            x - width / 2.0,
            y.min(zero),
            (y - zero).abs()
        );
        svg.whisker(x, f.py(m - c), f.py(m + c), "black");
    }
    svg.finish()
}

pub fn eval_svg(t: &Table) -> Result<String> {
    let mut bars = Vec::new();
    for r in 0..t.rows.len() {
        let label = if t.text(r, "scenario") == "aggregate" {
            "aggregate".to_string()
        } else {
            format!("s{} {}", t.text(r, "defender_seed"), t.text(r, "partition"))
        };
        let m = t.num(r, "mean_return")?.unwrap_or(f64::NAN);
        let c = t.num(r, "ci95_halfwidth")?.unwrap_or(0.0);
        bars.push((label, m, c));
    }
    let scen = t.text(0, "scenario").to_string();
    Ok(bars_svg(&format!("{scen} evaluation"), &bars))
}

/// Aggregate rows of several evaluation reports side by side.
pub fn comparison_svg(tables: &[(String, Table)]) -> Result<String> {
    let mut bars = Vec::new();
    for (name, t) in tables {
        for r in 0..t.rows.len() {
            if t.text(r, "scenario") == "aggregate" {
                let m = t.num(r, "mean_return")?.unwrap_or(f64::NAN);
                let c = t.num(r, "ci95_halfwidth")?.unwrap_or(0.0);
                bars.push((name.clone(), m, c));
            }
        }
    }
    Ok(bars_svg("Cooperative vs attacked", &bars))
}

pub fn trajectory_svg(t: &Table) -> Result<String> {
    let mut paths: Vec<Vec<(u64, f64, f64)>> = Vec::new();
    for r in 0..t.rows.len() {
        let bad = |c: &str| Error::Schema(format!("column `{c}` row {} is empty", r + 1));
        let step = t.num(r, "step")?.ok_or_else(|| bad("step"))? as u64;
        let agent = t.num(r, "agent")?.ok_or_else(|| bad("agent"))? as usize;
        let x = t.num(r, "x")?.ok_or_else(|| bad("x"))?;
        let y = t.num(r, "y")?.ok_or_else(|| bad("y"))?;
        if paths.len() <= agent {
            paths.resize(agent + 1, Vec::new());
        }
        paths[agent].push((step, x, y));
    }
    let f = Frame::new((-1.0, 1.0), (-1.0, 1.0));
    let mut svg = Svg::new("Agent trajectories");
    let ticks: Vec<(f64, String)> = [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&v| (v, format!("{v}"))).collect();
    svg.axes(&f, "x", "y", &ticks);
    for (i, p) in paths.iter_mut().enumerate() {
        if p.is_empty() {
            continue;
        }
        p.sort_by_key(|s| s.0);
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = p.iter().map(|&(_, x, y)| (f.px(x), f.py(y))).collect();
        svg.dot(pts[0].0, pts[0].1, color);
        svg.polyline(&pts, color);
        let last = pts[pts.len() - 1];
        svg.star(last.0, last.1, color);
    }
    Ok(svg.finish())
}

fn curve_svg(t: &Table, title: &str, y: &str) -> Result<String> {
    let xs = t.nums("epoch")?;
    let ys = t.nums(y)?;
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(&ys)
        .filter_map(|(x, y)| Some((x.as_ref().copied()?, y.as_ref().copied()?)))
        .collect();
    if pts.is_empty() {
        return Err(Error::Schema(format!("column `{y}` has no values")));
    }
    let f = Frame::new(range(pts.iter().map(|p| p.0)), range(pts.iter().map(|p| p.1)));
    let mut svg = Svg::new(title);
    let ticks: Vec<(f64, String)> = (0..=4)
        .map(|k| {
            let x = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
            (x, format!("{x:.0}"))
        })
        .collect();
    svg.axes(&f, "epoch", y, &ticks);
    svg.polyline(&pts.iter().map(|&(x, y)| (f.px(x), f.py(y))).collect::<Vec<_>>(), PALETTE[0]);
    Ok(svg.finish())
}

/// Renders every CSV to `<out_dir>/<stem>.svg`; two or more evaluation
/// reports also yield `comparison.svg`.
pub fn plot_files(paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if paths.is_empty() {
        return Err(Error::Invalid("no CSV files given".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut reports = Vec::new();
    for p in paths {
        let t = Table::read(p)?;
        let svg = match t.kind {
            CsvKind::Ablation => ablation_svg(&t)?,
            CsvKind::EvalReport => eval_svg(&t)?,
            CsvKind::Trajectory => trajectory_svg(&t)?,
            CsvKind::Metrics => curve_svg(&t, "Training return", "episode_return")?,
            CsvKind::AttackCurve => curve_svg(&t, "Team return under attack training", "team_return")?,
        };
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
        let out = out_dir.join(format!("{stem}.svg"));
        fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
        written.push(out);
        if t.kind == CsvKind::EvalReport {
            reports.push((stem.to_string(), t));
        }
    }
    if reports.len() >= 2 {
        let out = out_dir.join("comparison.svg");
        fs::write(&out, comparison_svg(&reports)?).map_err(|e| Error::io(&out, e))?;
        written.push(out);
    }
    Ok(written)
}
