use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

/// Line plot of `(label, color, points)` series in a shared box.
pub fn line_plot(title: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = header(W, H);
    let _ = writeln!(s, "<text x=\"{PAD}\" y=\"20\" font-size=\"14\">{title}</text>");
    let _ = writeln!(s, "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", W - 2.0 * PAD, H - 2.0 * PAD);
    let _ = writeln!(s, "<text x=\"{PAD}\" y=\"{}\" font-size=\"10\">{x0:.3}</text>", H - PAD + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"10\">{x1:.3}</text>", W - PAD - 30.0, H - PAD + 14.0);
    let _ = writeln!(s, "<text x=\"2\" y=\"{}\" font-size=\"10\">{y0:.3}</text>", H - PAD);
    let _ = writeln!(s, "<text x=\"2\" y=\"{}\" font-size=\"10\">{y1:.3}</text>", PAD + 4.0);
    for (i, (label, color, data)) in series.iter().enumerate() {
        let path: Vec<String> = data.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", path.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{label}</text>", W - PAD - 120.0, PAD + 16.0 + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

/// Polar curves `(r, θ)` in a disk scaled to the largest radius.
pub fn polar_plot(title: &str, series: &[(&str, &str, Vec<(f64, f64)>)]) -> String {
    let rmax = series.iter().flat_map(|s| s.2.iter().map(|p| p.0)).fold(1e-12, f64::max);
    let (cx, cy, rad) = (H / 2.0, H / 2.0 + 10.0, H / 2.0 - PAD);
    let mut s = header(H + 140.0, H + 20.0);
    let _ = writeln!(s, "<text x=\"10\" y=\"20\" font-size=\"14\">{title}</text>");
    let _ = writeln!(s, "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"{rad}\" fill=\"none\" stroke=\"grey\"/>");
    for (i, (label, color, data)) in series.iter().enumerate() {
        let path: Vec<String> = data
            .iter()
            .map(|&(r, t)| format!("{:.2},{:.2}", cx + rad * r / rmax * t.cos(), cy - rad * r / rmax * t.sin()))
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", path.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{label}</text>", H + 10.0, PAD + 14.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

fn header(w: f64, h: f64) -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n")
}
