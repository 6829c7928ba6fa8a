use std::fmt::Write;

use mppac::learn::TraceRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// A static plot of both bounds, scaled by `r_max`, against time.
pub fn convergence_plot(trace: &[TraceRow], r_max: f64) -> String {
    let scale = if r_max > 0.0 { r_max } else { 1.0 };
    let t_max = trace.iter().map(|r| r.time_s).fold(0.0, f64::max).max(1e-9);
    let x = |t: f64| MARGIN + t / t_max * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v / scale).clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN);
    let line = |pick: fn(&TraceRow) -> f64| {
        trace
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.time_s), y(pick(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let yy = y(v * scale);
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            yy + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{:.0}" font-size="11">0</text><text x="{x1}" y="{:.0}" font-size="11" text-anchor="end">{t_max:.3} s</text>"#,
        y0 + 16.0,
        y0 + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}" font-size="12" text-anchor="middle">time (s)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.0}" font-size="12" transform="rotate(-90 14 {:.0})" text-anchor="middle">value / r_max</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke-width="1.5" style="stroke:#1f77b4"/>"#,
        line(|r| r.upper)
    );
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke-width="1.5" style="stroke:#d62728"/>"#,
        line(|r| r.lower)
    );
    let _ = writeln!(s, "</svg>");
    s
}
