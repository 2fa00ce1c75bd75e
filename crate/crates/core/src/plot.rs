//! Minimal SVG line and bar charts.

use std::fmt::Write as _;

use crate::trace::EpisodeTrace;
use crate::LEG_NAMES;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            x,
            y,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Shaded x intervals.
    pub bands: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Stacked panels sharing the x axis.
pub fn panels_svg(title: &str, x_label: &str, panels: &[Panel]) -> String {
    let (w, ph, left, right, top) = (820.0, 180.0, 70.0, 150.0, 40.0);
    let gap = 30.0;
    let h = top + panels.len() as f64 * (ph + gap) + 30.0;
    let (x0, x1) = range(panels.iter().flat_map(|p| p.series.iter().flat_map(|s| s.x.iter().copied())));
    let pw = w - left - right;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
        w / 2.0,
        esc(title)
    );
    for (k, p) in panels.iter().enumerate() {
        let ptop = top + k as f64 * (ph + gap);
        let (y0, y1) = range(p.series.iter().flat_map(|s| s.y.iter().copied()));
        let sy = |y: f64| ptop + ph - (y - y0) / (y1 - y0) * ph;
        for &(a, b) in &p.bands {
            let (a, b) = (a.max(x0), b.min(x1));
            if b > a {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{ptop}" width="{:.2}" height="{ph}" fill="#bbbbbb" opacity="0.35"/>"##,
                    sx(a),
                    sx(b) - sx(a)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{ptop}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in 0..=4 {
            let yv = y0 + (y1 - y0) * t as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 4.0,
                sy(yv) + 4.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
            ptop + ph / 2.0,
            ptop + ph / 2.0,
            esc(&p.y_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-weight="bold">{}</text>"#,
            left + 4.0,
            ptop + 13.0,
            esc(&p.title)
        );
        for (i, ser) in p.series.iter().enumerate() {
            let c = COLORS[i % COLORS.len()];
            let pts: Vec<String> = ser
                .x
                .iter()
                .zip(&ser.y)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{c}" stroke-width="1.3" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = ptop + 14.0 + 14.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                left + pw + 10.0,
                left + pw + 28.0,
                left + pw + 32.0,
                ly + 4.0,
                esc(&ser.name)
            );
        }
    }
    let base = top + panels.len() as f64 * (ph + gap) - gap;
    for t in 0..=5 {
        let xv = x0 + (x1 - x0) * t as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            sx(xv),
            base + 14.0,
            fmt_tick(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        base + 28.0,
        esc(x_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Vertical bars with optional error whiskers.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64, Option<f64>)]) -> String {
    let n = bars.len().max(1);
    let (left, top, ph) = (70.0, 40.0, 300.0);
    let bw = 36.0;
    let w = left + n as f64 * (bw + 14.0) + 30.0;
    let h = top + ph + 110.0;
    let hi = bars
        .iter()
        .map(|(_, v, e)| v + e.unwrap_or(0.0))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let lo = bars
        .iter()
        .map(|(_, v, _)| *v)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::min);
    let sy = |y: f64| top + ph - (y - lo) / (hi - lo) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
        w / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        sy(0.0),
        w - 20.0,
        sy(0.0)
    );
    for t in 0..=4 {
        let yv = lo + (hi - lo) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            sy(yv) + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        esc(y_label)
    );
    for (i, (label, v, err)) in bars.iter().enumerate() {
        let x = left + 10.0 + i as f64 * (bw + 14.0);
        let v = if v.is_finite() { *v } else { 0.0 };
        let (ya, yb) = (sy(v.max(0.0)), sy(v.min(0.0)));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{ya:.2}" width="{bw}" height="{:.2}" fill="{}"/>"#,
            (yb - ya).max(0.5),
            COLORS[0]
        );
        if let Some(e) = err {
            let cx = x + bw / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                sy(v + e),
                sy(v - e)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            x + bw / 2.0,
            ya - 4.0,
            fmt_tick(v)
        );
        let lx = x + bw / 2.0;
        let ly = top + ph + 14.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly}" transform="rotate(40 {lx:.2} {ly})">{}</text>"#,
            esc(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Time intervals during which any foot is above a gap.
pub fn gap_time_bands(trace: &EpisodeTrace) -> Vec<(f64, f64)> {
    let mut bands = Vec::new();
    let mut open: Option<f64> = None;
    let dt = match trace.rows.as_slice() {
        [a, b, ..] => b.time - a.time,
        _ => 0.0,
    };
    for r in &trace.rows {
        let over = r.over_gap.iter().any(|&g| g);
        match (over, open) {
            (true, None) => open = Some(r.time - dt),
            (false, Some(t0)) => {
                bands.push((t0, r.time - dt));
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(t0), Some(last)) = (open, trace.rows.last()) {
        bands.push((t0, last.time));
    }
    bands
}

/// Body velocity, foot positions and one limb's drive signals over time.
pub fn rollout_svg(trace: &EpisodeTrace, limb: usize, title: &str) -> String {
    let t: Vec<f64> = trace.rows.iter().map(|r| r.time).collect();
    let col = |f: &dyn Fn(&crate::trace::TraceRow) -> f64| -> Vec<f64> { trace.rows.iter().map(f).collect() };
    let bands = gap_time_bands(trace);
    let per_leg = |name: &str, f: &dyn Fn(&crate::trace::TraceRow, usize) -> f64| -> Vec<Series> {
        (0..LEG_NAMES.len())
            .map(|i| Series::new(format!("{name} {}", LEG_NAMES[i]), t.clone(), col(&|r| f(r, i))))
            .collect()
    };
    let panels = vec![
        Panel {
            title: "body velocity".into(),
            y_label: "m/s, rad/s".into(),
            series: vec![
                Series::new("forward", t.clone(), col(&|r| r.base_vel[0])),
                Series::new("vertical", t.clone(), col(&|r| r.base_vel[1])),
                Series::new("pitch rate", t.clone(), col(&|r| r.base_vel[2])),
            ],
            bands: bands.clone(),
        },
        Panel {
            title: "foot x".into(),
            y_label: "m".into(),
            series: per_leg("x", &|r, i| r.foot_x[i]),
            bands: bands.clone(),
        },
        Panel {
            title: "foot z".into(),
            y_label: "m".into(),
            series: per_leg("z", &|r, i| r.foot_z[i]),
            bands: bands.clone(),
        },
        Panel {
            title: format!("drive, limb {}", LEG_NAMES[limb]),
            y_label: "mu, omega [Hz]".into(),
            series: vec![
                Series::new("mu", t.clone(), col(&|r| r.mu[limb])),
                Series::new("omega", t.clone(), col(&|r| r.omega[limb])),
                Series::new("amplitude r", t.clone(), col(&|r| r.r[limb])),
            ],
            bands: bands.clone(),
        },
        Panel {
            title: format!("offsets, limb {}", LEG_NAMES[limb]),
            y_label: "m".into(),
            series: vec![
                Series::new("x_off", t.clone(), col(&|r| r.x_off[limb])),
                Series::new("z_off", t.clone(), col(&|r| r.z_off[limb])),
            ],
            bands,
        },
    ];
    panels_svg(title, "time [s]", &panels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed() {
        let p = Panel {
            title: "a<b".into(),
            y_label: "y".into(),
            series: vec![Series::new("s", vec![0.0, 1.0, 2.0], vec![1.0, f64::NAN, 3.0])],
            bands: vec![(0.5, 1.5)],
        };
        let svg = panels_svg("t", "x", &[p]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn bar_chart_handles_negative_and_missing() {
        let svg = bar_chart_svg(
            "t",
            "y",
            &[("a".into(), 3.0, Some(0.5)), ("b".into(), -1.0, None), ("c".into(), f64::NAN, None)],
        );
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(!svg.contains("NaN"));
    }
}
