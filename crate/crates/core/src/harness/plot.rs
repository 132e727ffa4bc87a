//! Plain SVG line plots.

use std::fmt::Write as _;

use super::EpisodeLog;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 720.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Policies in order of first appearance.
fn policies<'a>(logs: &[&'a EpisodeLog]) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for l in logs {
        if !out.contains(&l.header.policy.as_str()) {
            out.push(&l.header.policy);
        }
    }
    out
}

/// Per-step (mean, min, max) of `value` over the logs of one policy.
fn step_stats(logs: &[&EpisodeLog], policy: &str, value: impl Fn(&super::StepRow) -> f64) -> Vec<(f64, f64, f64)> {
    let runs: Vec<&EpisodeLog> = logs.iter().copied().filter(|l| l.header.policy == policy).collect();
    let len = runs.iter().map(|l| l.rows.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().filter_map(|l| l.rows.get(i)).map(&value).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi)
        })
        .collect()
}

struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Panel {
    fn new(x: f64, y: f64, w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if (b - a).abs() < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        Panel { x, y, w, h, xr: widen(xr), yr: widen(yr) }
    }

    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, s: &mut String, x_label: &str, y_label: &str) {
        let (x0, y0, x1, y1) = (self.x, self.y + self.h, self.x + self.w, self.y);
        writeln!(s, r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##, self.w, self.h)
            .unwrap();
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = self.xr.0 + t * (self.xr.1 - self.xr.0);
            let yv = self.yr.0 + t * (self.yr.1 - self.yr.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            writeln!(s, r##"<line x1="{xp:.2}" y1="{y0:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#444"/>"##, y0 + 4.0).unwrap();
            writeln!(s, r#"<text x="{xp:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#, y0 + 15.0, tick(xv))
                .unwrap();
            writeln!(s, r##"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="#444"/>"##, x0 - 4.0).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, x0 - 6.0, yp + 3.0, tick(yv))
                .unwrap();
        }
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, y0 + 30.0, escape(x_label))
            .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            x0 - 45.0,
            (y0 + y1) / 2.0,
            x0 - 45.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        )
        .unwrap();
    }

    fn polyline(&self, s: &mut String, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#, coords.join(" ")).unwrap();
    }

    fn band(&self, s: &mut String, lo: &[(f64, f64)], hi: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = lo
            .iter()
            .chain(hi.iter().rev())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, coords.join(" ")).unwrap();
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn open(height: f64, title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#)
        .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    s
}

fn legend(s: &mut String, names: &[&str], x: f64, y: f64) {
    for (i, name) in names.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        writeln!(s, r#"<line x1="{x:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="{c}" stroke-width="3"/>"#, x + 18.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, x + 24.0, yy + 4.0, escape(name)).unwrap();
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Cumulative environment reward against step: per-policy mean line and
/// min/max band over episodes.
pub fn cumulative_reward_svg(logs: &[&EpisodeLog], title: &str) -> String {
    let names = policies(logs);
    let stats: Vec<Vec<(f64, f64, f64)>> = names.iter().map(|p| step_stats(logs, p, |r| r.cumulative_reward)).collect();
    let steps = stats.iter().map(Vec::len).max().unwrap_or(0) as f64;
    let yr = range(stats.iter().flatten().flat_map(|&(_, lo, hi)| [lo, hi]).chain([0.0]));
    let height = 420.0;
    let panel = Panel::new(70.0, 40.0, WIDTH - 230.0, height - 100.0, (0.0, steps), yr);
    let mut s = open(height, title);
    panel.axes(&mut s, "step", "cumulative reward");
    for (i, st) in stats.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let at = |k: usize| (k + 1) as f64;
        let lo: Vec<(f64, f64)> = st.iter().enumerate().map(|(k, v)| (at(k), v.1)).collect();
        let hi: Vec<(f64, f64)> = st.iter().enumerate().map(|(k, v)| (at(k), v.2)).collect();
        let mean: Vec<(f64, f64)> = st.iter().enumerate().map(|(k, v)| (at(k), v.0)).collect();
        if !st.is_empty() {
            panel.band(&mut s, &lo, &hi, c);
            panel.polyline(&mut s, &mean, c);
        }
    }
    legend(&mut s, &names, WIDTH - 150.0, 60.0);
    s.push_str("</svg>\n");
    s
}

/// Mean chosen rollouts, gamma, t-test level (log scale) and depth per step.
pub fn parameter_trajectory_svg(logs: &[&EpisodeLog], title: &str) -> String {
    let names = policies(logs);
    type Getter = fn(&super::StepRow) -> f64;
    let params: [(&str, Getter); 4] = [
        ("rollouts", |r| r.rollouts as f64),
        ("gamma", |r| r.gamma),
        ("log10 t-test", |r| r.ttest.log10()),
        ("depth", |r| r.depth as f64),
    ];
    let panel_h = 150.0;
    let height = 60.0 + 4.0 * (panel_h + 50.0);
    let mut s = open(height, title);
    for (j, (label, get)) in params.iter().enumerate() {
        let stats: Vec<Vec<(f64, f64, f64)>> = names.iter().map(|p| step_stats(logs, p, get)).collect();
        let steps = stats.iter().map(Vec::len).max().unwrap_or(0) as f64;
        let yr = range(stats.iter().flatten().map(|v| v.0));
        let panel = Panel::new(70.0, 40.0 + j as f64 * (panel_h + 50.0), WIDTH - 230.0, panel_h, (0.0, steps), yr);
        panel.axes(&mut s, "step", label);
        for (i, st) in stats.iter().enumerate() {
            if !st.is_empty() {
                let mean: Vec<(f64, f64)> = st.iter().enumerate().map(|(k, v)| ((k + 1) as f64, v.0)).collect();
                panel.polyline(&mut s, &mean, PALETTE[i % PALETTE.len()]);
            }
        }
    }
    legend(&mut s, &names, WIDTH - 150.0, 60.0);
    s.push_str("</svg>\n");
    s
}
