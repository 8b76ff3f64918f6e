use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use clap::ValueEnum;

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Panel {
    SelectionAccuracy,
    RankingAccuracy,
    Sensitivity,
    Specificity,
}

impl Panel {
    pub fn column(self) -> &'static str {
        match self {
            Panel::SelectionAccuracy => "selection_accuracy",
            Panel::RankingAccuracy => "ranking_accuracy",
            Panel::Sensitivity => "sensitivity",
            Panel::Specificity => "specificity",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Panel::SelectionAccuracy => "Feature selection accuracy",
            Panel::RankingAccuracy => "Probability of correct ranking",
            Panel::Sensitivity => "Sensitivity",
            Panel::Specificity => "Specificity",
        }
    }
}

impl FromStr for Panel {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        <Panel as ValueEnum>::from_str(s, false).map_err(|_| CliError::Config(format!("unknown panel {s:?}")))
    }
}

/// Points `(n_events, value)` per method, in first-appearance method order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads a results CSV and keeps rows matching `rho` (all rows when `None`).
pub fn load_series(csv_bytes: &[u8], panel: Panel, rho: Option<f64>) -> Result<Vec<Series>> {
    let mut r = csv::Reader::from_reader(csv_bytes);
    let headers = r.headers().map_err(|e| CliError::Runtime(format!("unreadable CSV header: {e}")))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Runtime(format!("CSV has no `{name}` column")))
    };
    let (c_events, c_method, c_rho, c_value) = (col("n_events")?, col("method")?, col("rho")?, col(panel.column())?);
    let mut order: Vec<String> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("bad CSV record {}: {e}", line + 2)))?;
        let num = |c: usize| -> Result<Option<f64>> {
            match &rec[c] {
                "NA" | "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| CliError::Runtime(format!("bad number {s:?} in CSV record {}", line + 2))),
            }
        };
        if let Some(want) = rho {
            match num(c_rho)? {
                Some(v) if (v - want).abs() < 1e-9 => {}
                _ => continue,
            }
        }
        let (Some(x), Some(y)) = (num(c_events)?, num(c_value)?) else { continue };
        let method = rec[c_method].to_string();
        if !by_method.contains_key(&method) {
            order.push(method.clone());
        }
        by_method.entry(method).or_default().push((x, y));
    }
    if order.is_empty() {
        return Err(CliError::NoData(match rho {
            Some(v) => format!("no `{}` values for rho = {v}", panel.column()),
            None => format!("no `{}` values", panel.column()),
        }));
    }
    Ok(order
        .into_iter()
        .map(|method| {
            let mut points = by_method.remove(&method).unwrap_or_default();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { method, points }
        })
        .collect())
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 560.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 400.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1.0);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

/// Line chart with the y axis fixed to [0, 1]. A series with one point is
/// drawn as a marker only.
pub fn render_svg(series: &[Series], panel: Panel, rho: Option<f64>) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut xmin, mut xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if xmin == xmax {
        xmin -= 1.0;
        xmax += 1.0;
    }
    let pad = 0.05 * (xmax - xmin);
    let (xmin, xmax) = (xmin - pad, xmax + pad);
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (RIGHT - LEFT);
    let sy = |y: f64| BOTTOM - y.clamp(0.0, 1.0) * (BOTTOM - TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = match rho {
        Some(r) => format!("{} (rho = {r})", panel.title()),
        None => panel.title().to_string(),
    };
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, (LEFT + RIGHT) / 2.0);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}"/></g>"#
    );
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py}" x2="{RIGHT}" y2="{py}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{y:.1}</text>"##,
            LEFT - 6.0,
            py + 4.0
        );
    }
    for t in nice_ticks(xmin, xmax) {
        let px = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{px}" y1="{BOTTOM}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{t}</text>"#,
            BOTTOM + 5.0,
            BOTTOM + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Total number of events</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        panel.column()
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="series" data-method="{}">"#, ser.method);
        if ser.points.len() > 1 {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        for &(x, y) in &ser.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            RIGHT + 20.0,
            RIGHT + 42.0,
            RIGHT + 48.0,
            ly + 4.0,
            ser.method
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
