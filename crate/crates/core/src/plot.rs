//! Minimal standalone SVG figures.

use std::fmt::Write;

use crate::simulation::{ErrorMap, ErrorStats};

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Viridis-like ramp, `t` in [0, 1].
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .map(|(lo, hi)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
}

/// Per-waypoint 2D error std of every method, log-scaled.
pub fn trajectory_svg(stats: &ErrorStats) -> String {
    let (w, h) = (800.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let t_max = stats.times.last().copied().unwrap_or(1.0).max(1e-9);
    let logs = |m: usize| -> Vec<f64> {
        (0..stats.times.len())
            .map(|k| stats.cells[k][m].err_std_2d().log10())
            .collect()
    };
    let all: Vec<Vec<f64>> = (0..stats.methods.len()).map(logs).collect();
    let (lo, hi) = finite_range(all.iter().flatten().copied()).unwrap_or((-3.0, 0.0));
    let (lo, hi) = (lo.floor(), hi.ceil());
    let sx = |t: f64| left + t / t_max * pw;
    let sy = |v: f64| top + (hi - v) / (hi - lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    let mut e = lo as i32;
    while e as f64 <= hi {
        let y = sy(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
        e += 1;
    }
    for i in 0..=5 {
        let t = t_max * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{t:.1}</text>"#,
            sx(t),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">time (s)</text>"#,
        left + pw / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">2D error std (m)</text>"#,
        top + ph / 2.0
    );
    for (m, series) in all.iter().enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        // break the polyline at missing cells
        let mut seg: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for (k, v) in series.iter().enumerate() {
            if v.is_finite() {
                seg.push(format!("{:.1},{:.1}", sx(stats.times[k]), sy(*v)));
            } else {
                flush(&mut seg, &mut s);
            }
        }
        flush(&mut seg, &mut s);
        let ly = top + 16.0 + 20.0 * m as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(stats.methods[m].name())
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One heat panel per (family, axis); shared log colour scale, grey for
/// infeasible cells.
pub fn error_map_svg(map: &ErrorMap) -> String {
    let xs = map.grid.xs();
    let ys = map.grid.ys();
    let cell = 6.0;
    let pw = cell * xs.len() as f64;
    let ph = cell * ys.len() as f64;
    let gap = 30.0;
    let (left, top) = (40.0, 40.0);
    let n = map.families.len() * 2;
    let legend_w = 90.0;
    let w = left + n as f64 * (pw + gap) + legend_w;
    let h = top + ph + 50.0;
    let (lo, hi) = finite_range(
        map.cells
            .iter()
            .filter(|c| c.feasible)
            .flat_map(|c| [c.std_x.log10(), c.std_y.log10()]),
    )
    .unwrap_or((-3.0, 0.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
    let ix = |x: f64| ((x - map.grid.x_min) / map.grid.resolution).round() as usize;
    let iy = |y: f64| ((y - map.grid.y_min) / map.grid.resolution).round() as usize;
    for (fi, family) in map.families.iter().enumerate() {
        for axis in 0..2 {
            let ox = left + (fi * 2 + axis) as f64 * (pw + gap);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{} {}</text>"#,
                ox + pw / 2.0,
                top - 10.0,
                escape(family.name()),
                if axis == 0 { "x" } else { "y" }
            );
            for c in map.cells_for(*family) {
                let v = if axis == 0 { c.std_x } else { c.std_y };
                let fill = if c.feasible && v.is_finite() {
                    ramp((v.log10() - lo) / (hi - lo))
                } else {
                    "#bbbbbb".to_string()
                };
                // far range at the top
                let px = ox + ix(c.x) as f64 * cell;
                let py = top + ph - (iy(c.y) + 1) as f64 * cell;
                let _ = writeln!(
                    s,
                    r#"<rect x="{px:.1}" y="{py:.1}" width="{cell}" height="{cell}" fill="{fill}"/>"#
                );
            }
        }
    }
    let lx = w - legend_w + 10.0;
    for i in 0..20 {
        let t = 1.0 - i as f64 / 19.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="16" height="{:.1}" fill="{}"/>"#,
            top + i as f64 * ph / 20.0,
            ph / 20.0 + 0.5,
            ramp(t)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{}">{:.2e} m</text>"#, lx + 20.0, top + 8.0, 10f64.powf(hi));
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{:.2e} m</text>"#, lx + 20.0, top + ph, 10f64.powf(lo));
    s.push_str("</svg>\n");
    s
}
