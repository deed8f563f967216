//! SVG renders: a scene with its forecast, and per-class boxplots of the
//! evaluation metrics. Output is plain text with fixed number formatting, so
//! identical inputs give identical bytes.

use std::fmt::Write;

use crate::geometry::{BBox, Point};
use crate::scene::{Role, Scene};
use crate::train::{Aggregates, EvalReport, Summary};

const WIDTH: f64 = 800.0;
const PAD: f64 = 10.0;

fn role_class(role: Role) -> &'static str {
    match role {
        Role::Agent => "agent",
        Role::Av => "ego",
        Role::Other => "other",
    }
}

const STYLE: &str = "<style>\
.drivable{fill:#e8e8e8;stroke:#c8c8c8;stroke-width:0.5}\
.track{fill:none;stroke-width:2}\
.agent{stroke:#d62728}.ego{stroke:#2ca02c}.other{stroke:#1f77b4}\
.prediction{fill:none;stroke:#ff7f0e;stroke-width:2;stroke-dasharray:6 3}\
.target{fill:#9467bd}\
.box{fill:#c6dbef;stroke:#08519c}.box.baseline{fill:#fdd0a2;stroke:#a63603}\
.whisker,.median{stroke:#000;stroke-width:1.5}\
text{font-family:sans-serif;font-size:12px}\
</style>";

struct View {
    min: Point,
    scale: f64,
    height: f64,
}

impl View {
    fn fit(points: &[Point]) -> Self {
        let b = if points.is_empty() { BBox::of(&[Point::ORIGIN]) } else { BBox::of(points) };
        let min = Point::new(b.min.x - PAD, b.min.y - PAD);
        let (w, h) = (b.max.x - b.min.x + 2.0 * PAD, b.max.y - b.min.y + 2.0 * PAD);
        let scale = WIDTH / w.max(h);
        Self { min, scale, height: h * scale }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, self.height - (p.y - self.min.y) * self.scale)
    }

    fn points(&self, pts: &[Point]) -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = self.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Drivable area, one polyline per track (all known frames), the forecast
/// and the goal points. Coordinates are global.
pub fn scene_svg(scene: &Scene, prediction: Option<&[Point]>, targets: Option<&[Point]>) -> String {
    let mut all: Vec<Point> = scene.tracks().iter().flat_map(|t| t.positions().iter().copied()).collect();
    all.extend(prediction.unwrap_or_default());
    all.extend(targets.unwrap_or_default());
    let view = View::fit(&all);
    let b = BBox::of(&all);
    let center = Point::new(0.5 * (b.min.x + b.max.x), 0.5 * (b.min.y + b.max.y));
    let half = 0.5 * (b.max.x - b.min.x).max(b.max.y - b.min.y) + PAD;
    let area = scene.map().crop(center, half);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{:.0}\" viewBox=\"0 0 {WIDTH:.2} {:.2}\">\n{STYLE}\n",
        view.height, view.height
    );
    let _ = writeln!(s, "<title>{}</title>", scene.scene_id);
    for poly in area.polygons() {
        let _ = writeln!(s, "<polygon class=\"drivable\" points=\"{}\"/>", view.points(poly.vertices()));
    }
    for t in scene.tracks() {
        let _ = writeln!(
            s,
            "<polyline class=\"track {}\" data-track=\"{}\" points=\"{}\"/>",
            role_class(t.role),
            t.track_id,
            view.points(t.positions())
        );
    }
    if let Some(pred) = prediction {
        let mut line = vec![scene.agent_last_observed()];
        line.extend_from_slice(pred);
        let _ = writeln!(s, "<polyline class=\"prediction\" points=\"{}\"/>", view.points(&line));
    }
    for p in targets.unwrap_or_default() {
        let (x, y) = view.map(*p);
        let _ = writeln!(s, "<circle class=\"target\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\"/>");
    }
    let legend = [("agent", "agent"), ("ego", "ego"), ("other", "others"), ("prediction", "prediction"), ("target", "goal points")];
    for (i, (class, label)) in legend.iter().enumerate() {
        let y = 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, "<text class=\"legend {class}\" x=\"8\" y=\"{y:.0}\">{label}</text>");
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Ade,
    Fde,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ade => "ade",
            Metric::Fde => "fde",
        }
    }

    fn pick(self, a: &crate::train::Aggregate) -> Summary {
        match self {
            Metric::Ade => a.ade,
            Metric::Fde => a.fde,
        }
    }
}

fn groups(a: &Aggregates, metric: Metric) -> Vec<(&'static str, Summary)> {
    [("overall", &a.overall), ("straight", &a.straight), ("curve", &a.curve)]
        .into_iter()
        .filter_map(|(n, g)| g.as_ref().map(|g| (n, metric.pick(g))))
        .collect()
}

/// One box (quartiles, median, min/max whiskers) per class present, for the
/// model and, when the report has one, the constant-velocity baseline.
pub fn boxplot_svg(report: &EvalReport, metric: Metric) -> String {
    let mut series: Vec<(String, &'static str, Summary)> = Vec::new();
    for (name, sum) in groups(&report.aggregates, metric) {
        series.push((format!("model {name}"), "box", sum));
    }
    if let Some(b) = &report.baseline {
        for (name, sum) in groups(&b.aggregates, metric) {
            series.push((format!("cv {name}"), "box baseline", sum));
        }
    }
    let (h, top, bottom, left) = (400.0, 30.0, 50.0, 50.0);
    let slot = 90.0;
    let width = left + slot * series.len().max(1) as f64 + 20.0;
    let ymax = series.iter().map(|(_, _, s)| s.max).fold(0.0, f64::max).max(1e-9) * 1.05;
    let y = |v: f64| top + (h - top - bottom) * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = write!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{h:.0}\">\n{STYLE}\n");
    let _ = writeln!(s, "<text x=\"{left:.0}\" y=\"18\">{} [m]</text>", metric.name().to_uppercase());
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"4\" y=\"{:.2}\">{v:.2}</text>", y(v) + 4.0);
    }
    for (i, (label, class, sum)) in series.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let (x0, x1) = (cx - 25.0, cx + 25.0);
        let _ = writeln!(s, "<line class=\"whisker\" x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\"/>", y(sum.min), y(sum.max));
        let _ = writeln!(
            s,
            "<rect class=\"{class}\" x=\"{x0:.2}\" y=\"{:.2}\" width=\"50.00\" height=\"{:.2}\"/>",
            y(sum.q3),
            (y(sum.q1) - y(sum.q3)).max(0.0)
        );
        let _ = writeln!(s, "<line class=\"median\" x1=\"{x0:.2}\" y1=\"{:.2}\" x2=\"{x1:.2}\" y2=\"{:.2}\"/>", y(sum.median), y(sum.median));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">{label}</text>", x0 - 10.0, h - bottom + 20.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_synthetic_scene, ScenarioKind};
    use crate::train::SceneResult;
    use crate::preprocess::Curvature;

    #[test]
    fn scene_elements() {
        let s = generate_synthetic_scene(2, ScenarioKind::TurnWithTraffic);
        let pred = s.agent_future();
        let targets = vec![pred[29]; 32];
        let svg = scene_svg(&s, Some(&pred), Some(&targets));
        assert_eq!(svg.matches("<polyline class=\"track ").count(), s.tracks().len());
        assert_eq!(svg.matches("<polyline class=\"prediction\"").count(), 1);
        assert_eq!(svg.matches("<circle class=\"target\"").count(), 32);
        assert!(svg.contains("<polygon class=\"drivable\""));
        assert_eq!(svg, scene_svg(&s, Some(&pred), Some(&targets)));
        let bare = scene_svg(&s, None, None);
        assert!(!bare.contains("prediction\" points") && !bare.contains("<circle"));
    }

    #[test]
    fn boxes_per_present_class() {
        let rows = (0..5).map(|i| SceneResult { scene_id: format!("s{i}"), label: Curvature::Straight, ade: i as f64, fde: 2.0 * i as f64 });
        let r = EvalReport::from_rows(rows.collect(), None);
        let svg = boxplot_svg(&r, Metric::Fde);
        assert_eq!(svg.matches("<rect class=\"box\"").count(), 2);
        assert!(svg.contains("FDE [m]"));
    }
}
