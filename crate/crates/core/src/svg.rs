//! Minimal static SVG emission for the report figures.
//!
//! Plots are artifacts, not interfaces, so a small hand-rolled builder
//! avoids any plotting-stack dependency. Coordinates are formatted with
//! fixed precision, keeping output byte-deterministic.

/// Linear map from a data domain onto a pixel range.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub d0: f64,
    pub d1: f64,
    pub r0: f64,
    pub r1: f64,
}

impl Scale {
    pub fn new(d0: f64, d1: f64, r0: f64, r1: f64) -> Self {
        Scale { d0, d1, r0, r1 }
    }

    pub fn map(&self, v: f64) -> f64 {
        if self.d1 == self.d0 {
            return 0.5 * (self.r0 + self.r1);
        }
        self.r0 + (v - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// SVG document builder.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            fmt(width),
            fmt(height)
        ));
        Svg { width, height, body }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            fmt(x1), fmt(y1), fmt(x2), fmt(y2), fmt(width)
        ));
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"/>\n",
            fmt(x), fmt(y), fmt(w), fmt(h)
        ));
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, opacity: f64) {
        self.body.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"{}\"/>\n",
            fmt(cx), fmt(cy), fmt(r), fmt(opacity)
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let pts: Vec<String> =
            points.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            pts.join(" "),
            fmt(width)
        ));
    }

    /// Filled band between an upper and a (reversed) lower boundary.
    pub fn band(&mut self, upper: &[(f64, f64)], lower: &[(f64, f64)], fill: &str, opacity: f64) {
        if upper.is_empty() || lower.is_empty() {
            return;
        }
        let mut pts: Vec<String> =
            upper.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
        pts.extend(lower.iter().rev().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))));
        self.body.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{fill}\" fill-opacity=\"{}\" stroke=\"none\"/>\n",
            pts.join(" "),
            fmt(opacity)
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\">{escaped}</text>\n",
            fmt(x), fmt(y), fmt(size)
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            fmt(self.width),
            fmt(self.height),
            fmt(self.width),
            fmt(self.height),
            self.body
        )
    }
}

/// Blue-white-red diverging color for heatmaps, `v` in [-1, 1].
pub fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        let t = v;
        (255.0, 255.0 - 155.0 * t, 255.0 - 205.0 * t)
    } else {
        let t = -v;
        (255.0 - 205.0 * t, 255.0 - 155.0 * t, 255.0)
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

/// Sequential color for occupancy heatmaps, `v` in [0, 1].
pub fn sequential_color(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = 255.0 - 205.0 * t;
    let g = 255.0 - 130.0 * t;
    let b = 255.0 - 35.0 * t;
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn produces_well_formed_document() {
        let mut svg = Svg::new(100.0, 50.0);
        svg.line(0.0, 0.0, 100.0, 50.0, "black", 1.0);
        svg.text(10.0, 10.0, 9.0, "a < b & c");
        let doc = svg.finish();
        assert!(doc.starts_with("<svg"));
        assert!(doc.ends_with("</svg>\n"));
        assert!(doc.contains("&lt;"));
        assert_eq!(doc.matches("<line").count(), 1);
    }

    #[test]
    fn scale_maps_linearly() {
        let s = Scale::new(0.0, 10.0, 0.0, 100.0);
        assert_eq!(s.map(5.0), 50.0);
        let flipped = Scale::new(0.0, 1.0, 100.0, 0.0);
        assert_eq!(flipped.map(0.25), 75.0);
    }

    #[test]
    fn identical_input_identical_bytes() {
        let build = || {
            let mut svg = Svg::new(10.0, 10.0);
            svg.circle(1.0, 2.0, 0.5, "red", 0.7);
            svg.finish()
        };
        assert_eq!(build(), build());
    }
}
