//! Static SVG line and bar charts.
//!
//! Every chart embeds the exact values it draws as JSON inside
//! `<metadata id="chart-data">`, so a chart can be checked against the
//! report it came from with [`extract_data`].

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Line,
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub name: String,
    /// One entry per label; `None` leaves a gap.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartData {
    pub title: String,
    pub kind: ChartKind,
    pub labels: Vec<String>,
    pub series: Vec<ChartSeries>,
}

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#377eb8", "#d95f02", "#7570b3", "#e7298a", "#66a61e"];
const DATA_OPEN: &str = "<metadata id=\"chart-data\"><![CDATA[";
const DATA_CLOSE: &str = "]]></metadata>";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn y_range(data: &ChartData) -> (f64, f64) {
    let values = data.series.iter().flat_map(|s| s.values.iter().flatten().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if data.kind == ChartKind::Bar {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Renders `data`; identical input gives identical bytes.
pub fn render(data: &ChartData) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let (lo, hi) = y_range(data);
    let y_of = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);
    let n = data.labels.len().max(1);

    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
    )
    .unwrap();
    let json = serde_json::to_string(data).expect("chart data serializes");
    // a literal "]]>" inside the JSON would close the CDATA section early
    writeln!(s, "{DATA_OPEN}{}{DATA_CLOSE}", json.replace("]]>", "]]]]><![CDATA[>")).unwrap();
    writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        LEFT + plot_w / 2.0,
        escape(&data.title)
    )
    .unwrap();

    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        writeln!(s, "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>", LEFT + plot_w)
            .unwrap();
        writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, y + 4.0, format_tick(v))
            .unwrap();
    }
    writeln!(s, "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.2}\" stroke=\"black\"/>", TOP + plot_h)
        .unwrap();
    writeln!(
        s,
        "<line x1=\"{LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    )
    .unwrap();

    match data.kind {
        ChartKind::Line => {
            let x_of = |i: usize| if n == 1 { LEFT + plot_w / 2.0 } else { LEFT + plot_w * i as f64 / (n - 1) as f64 };
            for (si, series) in data.series.iter().enumerate() {
                let color = PALETTE[si % PALETTE.len()];
                let mut run: Vec<String> = Vec::new();
                let flush = |run: &mut Vec<String>, s: &mut String| {
                    if !run.is_empty() {
                        writeln!(
                            s,
                            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                            run.join(" ")
                        )
                        .unwrap();
                        run.clear();
                    }
                };
                for (i, v) in series.values.iter().enumerate() {
                    match v {
                        Some(v) if v.is_finite() => run.push(format!("{:.2},{:.2}", x_of(i), y_of(*v))),
                        _ => flush(&mut run, &mut s),
                    }
                }
                flush(&mut run, &mut s);
            }
            let ticks: Vec<usize> = if n <= 1 { vec![0] } else { vec![0, (n - 1) / 2, n - 1] };
            let mut last = usize::MAX;
            for i in ticks {
                if i == last || i >= data.labels.len() {
                    continue;
                }
                last = i;
                writeln!(
                    s,
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                    x_of(i),
                    TOP + plot_h + 18.0,
                    escape(&data.labels[i])
                )
                .unwrap();
            }
        }
        ChartKind::Bar => {
            let groups = data.series.len().max(1) as f64;
            let slot = plot_w / n as f64;
            let bar = slot * 0.8 / groups;
            let zero = y_of(0.0);
            for (si, series) in data.series.iter().enumerate() {
                let color = PALETTE[si % PALETTE.len()];
                for (i, v) in series.values.iter().enumerate() {
                    let Some(v) = v.filter(|v| v.is_finite()) else { continue };
                    let x = LEFT + slot * i as f64 + slot * 0.1 + bar * si as f64;
                    let (top, h) = if v >= 0.0 { (y_of(v), zero - y_of(v)) } else { (zero, y_of(v) - zero) };
                    writeln!(
                        s,
                        "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{bar:.2}\" height=\"{h:.2}\" fill=\"{color}\"/>"
                    )
                    .unwrap();
                }
            }
            for (i, label) in data.labels.iter().enumerate() {
                let x = LEFT + slot * (i as f64 + 0.5);
                let y = TOP + plot_h + 14.0;
                writeln!(s, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"end\" transform=\"rotate(-35 {x:.2} {y:.2})\">{}</text>", escape(label))
                    .unwrap();
            }
        }
    }

    for (si, series) in data.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let y = TOP + 10.0 + 18.0 * si as f64;
        let x = WIDTH - RIGHT + 16.0;
        writeln!(s, "<rect x=\"{x}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>", y - 10.0).unwrap();
        writeln!(s, "<text x=\"{}\" y=\"{y:.2}\">{}</text>", x + 18.0, escape(&series.name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Recovers the embedded data table from a rendered chart.
pub fn extract_data(svg: &str) -> Option<ChartData> {
    let start = svg.find(DATA_OPEN)? + DATA_OPEN.len();
    let end = start + svg[start..].find("</metadata>")?;
    let body = svg[start..end].strip_suffix("]]>")?.replace("]]]]><![CDATA[>", "]]>");
    serde_json::from_str(&body).ok()
}
