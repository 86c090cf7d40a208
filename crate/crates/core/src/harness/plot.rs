//! Minimal SVG line plots with a logarithmic y axis.

use std::fmt::Write as _;
use std::path::Path;

use super::aggregate::AggregateResult;
use crate::error::{Error, Result};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Reference decay lines anchored at the initial gradient norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// `g0 · exp(−k/κ)`
    Kap,
    /// `g0 · exp(−k/√κ)`
    SqrtKap,
}

impl Baseline {
    pub fn value(self, k: usize, g0: f64, kappa: f64) -> f64 {
        let rate = match self {
            Baseline::Kap => kappa,
            Baseline::SqrtKap => kappa.sqrt(),
        };
        g0 * (-(k as f64) / rate).exp()
    }

    pub fn label(self) -> &'static str {
        match self {
            Baseline::Kap => "KAP",
            Baseline::SqrtKap => "SQRT-KAP",
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn usable(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Gradient norm against iteration for each aggregate, plus baselines.
/// Curves of methods whose runs all diverged end in a cross.
pub fn render_svg(aggs: &[AggregateResult], baselines: &[Baseline], kappa: f64, title: &str) -> Result<String> {
    if aggs.is_empty() || aggs.iter().any(|a| a.rows.is_empty()) {
        return Err(Error::invalid("nothing to plot"));
    }
    let k_max = aggs.iter().filter_map(|a| a.rows.last()).map(|r| r.k).max().unwrap_or(0).max(1);
    let values = aggs.iter().flat_map(|a| a.rows.iter().map(|r| r.mean_grad_norm)).filter(|v| usable(*v));
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return Err(Error::invalid("no positive finite values to plot"));
    }
    let mut y_lo = lo.log10().floor();
    let mut y_hi = hi.log10().ceil();
    if y_hi <= y_lo {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |k: f64| LEFT + pw * k / k_max as f64;
    let sy = |v: f64| TOP + ph * (y_hi - v.log10()) / (y_hi - y_lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    // decade ticks, thinned so at most ~12 labels appear
    let decades = (y_hi - y_lo) as i64;
    let step = (decades / 12 + 1).max(1);
    let mut e = y_lo as i64;
    while e <= y_hi as i64 {
        let y = sy(10f64.powi(e as i32));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, LEFT - 6.0, y + 4.0);
        e += step;
    }
    for i in 0..=5 {
        let k = k_max as f64 * i as f64 / 5.0;
        let x = sx(k);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 20.0, k.round());
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">gradient norm</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let mut legend: Vec<(String, String, bool)> = Vec::new();
    let floor = 10f64.powf(y_lo);
    let g0 = aggs[0].initial_grad_norm();
    for (i, b) in baselines.iter().enumerate() {
        let pts: Vec<String> = (0..=200)
            .map(|j| (k_max as f64 * j as f64 / 200.0).round() as usize)
            .map(|k| (k, b.value(k, g0, kappa)))
            .take_while(|(_, v)| *v >= floor)
            .map(|(k, v)| format!("{:.2},{:.2}", sx(k as f64), sy(v)))
            .collect();
        let color = if i == 0 { "#555555" } else { "#999999" };
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-dasharray="6,4" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        legend.push((b.label().to_string(), color.to_string(), true));
    }

    for (i, agg) in aggs.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = agg
            .rows
            .iter()
            .take_while(|r| r.mean_grad_norm.is_finite())
            .filter(|r| usable(r.mean_grad_norm))
            .map(|r| (sx(r.k as f64), sy(r.mean_grad_norm)))
            .collect();
        let joined: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            joined.join(" ")
        );
        let mut label = agg.label.clone();
        if agg.all_diverged() {
            if let Some(&(x, y)) = pts.last() {
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="{color}" stroke-width="2.5"/>"#,
                    x - 6.0, y - 6.0, x + 6.0, y + 6.0, x - 6.0, y + 6.0, x + 6.0, y - 6.0
                );
            }
            label.push_str(" (diverged)");
        }
        legend.push((label, color.to_string(), false));
    }

    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = LEFT + pw + 15.0;
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 25.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 32.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(
    aggs: &[AggregateResult],
    baselines: &[Baseline],
    kappa: f64,
    title: &str,
    out: impl AsRef<Path>,
) -> Result<()> {
    let svg = render_svg(aggs, baselines, kappa, title)?;
    let out = out.as_ref();
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::aggregate::AggregateRow;

    fn agg(label: &str, vals: &[f64], diverged: bool) -> AggregateResult {
        AggregateResult {
            label: label.into(),
            rows: vals
                .iter()
                .enumerate()
                .map(|(k, &v)| AggregateRow {
                    k: 10 * k,
                    mean_grad_norm: v,
                    mean_dist: v,
                    n_runs: 1,
                    n_diverged: usize::from(diverged),
                })
                .collect(),
        }
    }

    #[test]
    fn baseline_anchor() {
        assert_eq!(Baseline::Kap.value(0, 3.5, 100.0), 3.5);
        assert_eq!(Baseline::SqrtKap.value(0, 3.5, 100.0), 3.5);
        let v = Baseline::SqrtKap.value(50, 2.0, 100.0);
        assert!((v - 2.0 * (-5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_rejected() {
        assert!(render_svg(&[], &[], 10.0, "t").is_err());
        assert!(render_svg(&[agg("a", &[], false)], &[], 10.0, "t").is_err());
    }

    #[test]
    fn marks_diverged_curves_and_escapes() {
        let svg = render_svg(
            &[agg("a<b", &[1.0, 0.1, 0.01], false), agg("c&d", &[1.0, 50.0, f64::INFINITY], true)],
            &[Baseline::Kap, Baseline::SqrtKap],
            10.0,
            "demo",
        )
        .unwrap();
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("c&amp;d (diverged)"));
        assert!(svg.contains("<path"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
