//! Minimal SVG 1.1 writer for scatter and line plots.

use std::fmt::Write as _;

/// A plot canvas mapping a data rectangle onto a fixed-size image.
pub struct Plot {
    width: f64,
    height: f64,
    margin: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
}

impl Plot {
    pub fn new(width: f64, height: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let mut p = Plot { width, height, margin: 40.0, x_range, y_range, body: String::new() };
        p.frame();
        p
    }

    fn sx(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        self.margin + (x - a) / (b - a) * (self.width - 2.0 * self.margin)
    }

    fn sy(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        self.height - self.margin - (y - a) / (b - a) * (self.height - 2.0 * self.margin)
    }

    fn scale(&self) -> f64 {
        (self.width - 2.0 * self.margin) / (self.x_range.1 - self.x_range.0)
    }

    fn frame(&mut self) {
        let (m, w, h) = (self.margin, self.width, self.height);
        let _ = writeln!(
            self.body,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        let labels = [
            (m, h - m + 15.0, "middle", self.x_range.0),
            (w - m, h - m + 15.0, "middle", self.x_range.1),
            (m - 5.0, h - m, "end", self.y_range.0),
            (m - 5.0, m + 4.0, "end", self.y_range.1),
        ];
        for (x, y, anchor, v) in labels {
            let _ = writeln!(
                self.body,
                r#"<text x="{x:.1}" y="{y:.1}" font-size="10" text-anchor="{anchor}">{v}</text>"#
            );
        }
    }

    pub fn points(&mut self, pts: &[(f64, f64)], radius: f64, color: &str, opacity: f64) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{color}" fill-opacity="{opacity}"/>"#,
                self.sx(x),
                self.sy(y)
            );
        }
    }

    /// Outline of a circle given in data coordinates.
    pub fn circle(&mut self, center: (f64, f64), radius: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            self.sx(center.0),
            self.sy(center.1),
            radius * self.scale()
        );
    }

    pub fn marker(&mut self, at: (f64, f64), color: &str) {
        let (x, y) = (self.sx(at.0), self.sy(at.1));
        let _ = writeln!(
            self.body,
            r#"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="{color}" stroke-width="2"/>"#,
            x - 5.0,
            y - 5.0,
            x + 5.0,
            y + 5.0,
            x - 5.0,
            y + 5.0,
            x + 5.0,
            y - 5.0
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        self.points(pts, 3.0, color, 1.0);
    }

    /// Text at a pixel position measured from the top-left corner.
    pub fn label(&mut self, x: f64, y: f64, text: &str, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="12" fill="{color}">{}</text>"#,
            escape(text)
        );
    }

    pub fn render(&self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\">\n{}</svg>\n",
            self.width, self.height, self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let mut p = Plot::new(200.0, 200.0, (-1.0, 1.0), (-1.0, 1.0));
        p.points(&[(0.0, 0.0)], 1.0, "blue", 0.5);
        p.circle((0.0, 0.0), 0.5, "red");
        p.label(10.0, 10.0, "a<b", "black");
        let s = p.render();
        assert!(s.starts_with("<?xml"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        // centre of the data box maps to the centre of the image
        assert!(s.contains(r#"cx="100.00" cy="100.00""#));
    }
}
