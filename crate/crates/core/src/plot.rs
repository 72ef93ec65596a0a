//! Deterministic SVG rendering of training curves, confusion matrices and ROC curves.

use std::fmt::Write;

use crate::metrics::{fmt2, ConfusionMatrix, RocCurve};
use crate::trainer::EpochLog;

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: u32,
    height: u32,
}

impl Svg {
    fn new(width: u32, height: u32) -> Self {
        Self { body: String::new(), width, height }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: bool) {
        let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"{dash}/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="#333"/>"##
        );
    }

    fn polyline(&mut self, series: &str, points: &[(f64, f64)], stroke: &str, dash: bool) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if dash { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline data-series="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash} points="{}"/>"#,
            escape(series),
            pts.join(" ")
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Plot frame mapping data coordinates onto a pixel rectangle.
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = if self.x.1 > self.x.0 { (x - self.x.0) / (self.x.1 - self.x.0) } else { 0.5 };
        let fy = if self.y.1 > self.y.0 { (y - self.y.0) / (self.y.1 - self.y.0) } else { 0.5 };
        (self.left + fx * self.width, self.top + (1.0 - fy) * self.height)
    }

    fn axes(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        svg.line(l, t + h, l + w, t + h, "#333", false);
        svg.line(l, t, l, t + h, "#333", false);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (_, py) = self.map(self.x.0, yv);
            svg.line(l - 4.0, py, l, py, "#333", false);
            svg.text(l - 6.0, py + 4.0, "end", 10, &fmt2(yv));
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let (px, _) = self.map(xv, self.y.0);
            svg.line(px, t + h, px, t + h + 4.0, "#333", false);
            svg.text(px, t + h + 16.0, "middle", 10, &format!("{xv:.0}"));
        }
        svg.text(l + w / 2.0, t - 8.0, "middle", 13, title);
        svg.text(l + w / 2.0, t + h + 32.0, "middle", 11, xlabel);
        svg.text(l - 40.0, t + h / 2.0, "middle", 11, ylabel);
    }
}

fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(&str, &str, bool)]) {
    for (i, (name, color, dash)) in entries.iter().enumerate() {
        let yy = y + 14.0 * i as f64;
        svg.line(x, yy, x + 18.0, yy, color, *dash);
        svg.text(x + 22.0, yy + 4.0, "start", 10, name);
    }
}

/// Loss and accuracy against epoch, train and validation series side by side.
pub fn training_curves(model: &str, logs: &[EpochLog]) -> String {
    let mut svg = Svg::new(760, 320);
    let n = logs.len().max(1) as f64;
    let max_loss = logs
        .iter()
        .flat_map(|l| [l.train_loss, l.val_loss])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-3);
    type Series = fn(&EpochLog) -> (f64, f64);
    let panels: [(&str, &str, (f64, f64), Series); 2] = [
        ("loss", "Loss", (0.0, max_loss), |l| (l.train_loss, l.val_loss)),
        ("accuracy", "Accuracy", (0.0, 1.0), |l| (l.train_accuracy, l.val_accuracy)),
    ];
    for (p, (key, label, yr, get)) in panels.into_iter().enumerate() {
        let frame = Frame { left: 70.0 + 370.0 * p as f64, top: 40.0, width: 290.0, height: 220.0, x: (1.0, n), y: yr };
        frame.axes(&mut svg, &format!("{model} {label}"), "Epoch", label);
        let train: Vec<_> = logs.iter().map(|l| frame.map(l.epoch as f64, get(l).0)).collect();
        let val: Vec<_> = logs.iter().map(|l| frame.map(l.epoch as f64, get(l).1)).collect();
        svg.polyline(&format!("train_{key}"), &train, PALETTE[0], false);
        svg.polyline(&format!("val_{key}"), &val, PALETTE[1], true);
        legend(&mut svg, frame.left + frame.width - 90.0, frame.top + 10.0, &[
            ("train", PALETTE[0], false),
            ("validation", PALETTE[1], true),
        ]);
    }
    svg.finish()
}

/// 2×2 grid of counts; rows are the true class, columns the prediction, covid19 first.
pub fn confusion_matrix(model: &str, cm: &ConfusionMatrix) -> String {
    let mut svg = Svg::new(360, 320);
    let cells = [[cm.tp, cm.fn_], [cm.fp, cm.tn]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let names = ["covid19", "normal"];
    let (x0, y0, s) = (120.0, 70.0, 100.0);
    svg.text(x0 + s, 30.0, "middle", 14, &format!("{model} confusion matrix"));
    svg.text(x0 + s, 55.0, "middle", 11, "Predicted");
    svg.text(30.0, y0 + s, "middle", 11, "True");
    for (r, row) in cells.iter().enumerate() {
        svg.text(x0 - 8.0, y0 + s * r as f64 + s / 2.0 + 4.0, "end", 11, names[r]);
        for (c, &v) in row.iter().enumerate() {
            let shade = 255 - (175.0 * v as f64 / max).round() as u8;
            let fill = format!("rgb({shade},{shade},255)");
            let (x, y) = (x0 + s * c as f64, y0 + s * r as f64);
            svg.rect(x, y, s, s, &fill);
            svg.text(x + s / 2.0, y + s / 2.0 + 6.0, "middle", 18, &v.to_string());
        }
    }
    for (c, name) in names.iter().enumerate() {
        svg.text(x0 + s * c as f64 + s / 2.0, y0 + 2.0 * s + 18.0, "middle", 11, name);
    }
    svg.finish()
}

/// One or more ROC curves with the chance diagonal and AUC in the legend.
pub fn roc_curves(title: &str, curves: &[(&str, &RocCurve)]) -> String {
    let mut svg = Svg::new(460, 400);
    let frame = Frame { left: 70.0, top: 40.0, width: 300.0, height: 300.0, x: (0.0, 1.0), y: (0.0, 1.0) };
    frame.axes(&mut svg, title, "False positive rate", "True positive rate");
    let (a, b) = (frame.map(0.0, 0.0), frame.map(1.0, 1.0));
    svg.line(a.0, a.1, b.0, b.1, "#999", true);
    let mut entries = Vec::new();
    let labels: Vec<String> = curves.iter().map(|(name, c)| format!("{name} (AUC = {})", fmt2(c.auc))).collect();
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<_> = c.points.iter().map(|p| frame.map(p.fpr, p.tpr)).collect();
        svg.polyline(name, &pts, color, false);
        entries.push((labels[i].as_str(), color, false));
    }
    legend(&mut svg, frame.left + 120.0, frame.top + frame.height - 14.0 * entries.len() as f64, &entries);
    svg.finish()
}
