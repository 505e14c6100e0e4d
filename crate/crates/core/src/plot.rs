//! Hand-written SVG: accuracy versus openness, 2-D embedding scatter and
//! precision-recall curves. Coordinates are printed with two decimals so
//! re-runs produce identical files.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::detgeom::PrPoint;
use crate::losses::LossKind;
use crate::openset::SummaryRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn loss_color(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Softmax => "#7f7f7f",
        LossKind::Triplet => "#1f77b4",
        LossKind::ReciprocalTriplet => "#2ca02c",
        LossKind::SoftmaxTriplet => "#ff7f0e",
        LossKind::SoftmaxReciprocalTriplet => "#d62728",
        LossKind::Contrastive => "#9467bd",
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear map from data range onto the plot frame.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: &[f64], yticks: &[f64]) {
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    for &t in xticks {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            tick_label(t)
        );
    }
    for &t in yticks {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// Mean accuracy (percent) against openness, one polyline per loss kind with
/// min/max whiskers at every ratio.
pub fn openness_svg(rows: &[SummaryRow]) -> String {
    let mut kinds: Vec<LossKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.loss_kind) {
            kinds.push(r.loss_kind);
        }
    }
    let frame = Frame {
        x: (0.0, 1.0),
        y: (0.0, 100.0),
    };
    let mut out = String::new();
    open(&mut out, "Accuracy vs openness");
    axes(
        &mut out,
        &frame,
        "openness (fraction of identities withheld from training)",
        "accuracy (%)",
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        &[0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
    );
    for &kind in &kinds {
        let color = loss_color(kind);
        let mut pts: Vec<&SummaryRow> = rows.iter().filter(|r| r.loss_kind == kind).collect();
        pts.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
        let coords: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", frame.px(r.ratio), frame.py(100.0 * r.mean)))
            .collect();
        let _ = writeln!(out, r#"<g class="series" data-loss="{kind}">"#);
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for r in &pts {
            let x = frame.px(r.ratio);
            let (lo, hi) = (frame.py(100.0 * r.min), frame.py(100.0 * r.max));
            let _ = writeln!(
                out,
                r#"<path class="whisker" d="M{x:.2},{lo:.2}V{hi:.2}M{:.2},{lo:.2}H{:.2}M{:.2},{hi:.2}H{:.2}" stroke="{color}" fill="none"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x - 4.0,
                x + 4.0,
                x - 4.0,
                x + 4.0,
                frame.py(100.0 * r.mean)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let entries: Vec<(String, &str)> = kinds
        .iter()
        .map(|&k| (k.to_string(), loss_color(k)))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

fn padded_range(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// 2-D scatter of projected embeddings. Identities in `unknown` are drawn as
/// hollow circles.
pub fn scatter_svg(
    title: &str,
    points: &[(f64, f64)],
    labels: &[u32],
    unknown: &BTreeSet<u32>,
) -> String {
    let frame = Frame {
        x: padded_range(points.iter().map(|p| p.0)),
        y: padded_range(points.iter().map(|p| p.1)),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, "component 1", "component 2", &[], &[]);
    let mut ids: Vec<u32> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    for (&(x, y), &label) in points.iter().zip(labels) {
        let color = PALETTE[label as usize % PALETTE.len()];
        let fill = if unknown.contains(&label) { "none" } else { color };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}" stroke="{color}" data-identity="{label}"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    let entries: Vec<(String, &str)> = ids
        .iter()
        .take(16)
        .map(|&id| {
            let tag = if unknown.contains(&id) { " (unseen)" } else { "" };
            (format!("identity {id}{tag}"), PALETTE[id as usize % PALETTE.len()])
        })
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Precision against recall, starting from `(0, 1)`.
pub fn pr_curve_svg(curve: &[PrPoint], ap: f64) -> String {
    let frame = Frame {
        x: (0.0, 1.0),
        y: (0.0, 1.0),
    };
    let mut out = String::new();
    open(&mut out, &format!("Precision-recall (AP {ap:.4})"));
    let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
    axes(&mut out, &frame, "recall", "precision", &ticks, &ticks);
    let mut coords = vec![format!("{:.2},{:.2}", frame.px(0.0), frame.py(1.0))];
    coords.extend(
        curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.px(p.recall), frame.py(p.precision))),
    );
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        coords.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kind: LossKind, ratio: f64, mean: f64) -> SummaryRow {
        SummaryRow {
            loss_kind: kind,
            ratio,
            mean,
            min: mean - 0.05,
            max: mean + 0.05,
            reps: 3,
        }
    }

    #[test]
    fn openness_plot_has_one_polyline_per_loss() {
        let rows = vec![
            row(LossKind::Softmax, 0.25, 0.7),
            row(LossKind::Softmax, 0.5, 0.45),
            row(LossKind::Triplet, 0.25, 0.9),
            row(LossKind::Triplet, 0.5, 0.85),
        ];
        let svg = openness_svg(&rows);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(lines, 2);
        assert_eq!(svg, openness_svg(&rows));
    }

    #[test]
    fn scatter_and_pr_parse() {
        let svg = scatter_svg(
            "t<1>",
            &[(0.0, 1.0), (2.0, -1.0)],
            &[3, 4],
            &BTreeSet::from([4]),
        );
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 2);
        let pr = pr_curve_svg(
            &[PrPoint {
                confidence: 0.9,
                precision: 1.0,
                recall: 0.5,
            }],
            0.5,
        );
        assert!(roxmltree::Document::parse(&pr).is_ok());
    }
}
