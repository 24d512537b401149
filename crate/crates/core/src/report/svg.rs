//! Minimal static SVG emission. No external renderer; coordinates are
//! formatted with fixed precision so identical inputs give identical bytes.

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n",
            fmt(x), fmt(y), fmt(w), fmt(h)
        ));
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            fmt(x1), fmt(y1), fmt(x2), fmt(y2), fmt(width)
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let mut coords = String::new();
        for (x, y) in points {
            coords.push_str(&format!("{},{} ", fmt(*x), fmt(*y)));
        }
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            coords.trim_end(),
            fmt(width)
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{}</text>\n",
            fmt(x), fmt(y), fmt(size),
            escape(content)
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            fmt(self.width), fmt(self.height), fmt(self.width), fmt(self.height), self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps a data rectangle onto a pixel rectangle (y axis flipped).
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub px: f64,
    pub py: f64,
    pub pw: f64,
    pub ph: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = if self.x_max > self.x_min {
            (x - self.x_min) / (self.x_max - self.x_min)
        } else {
            0.5
        };
        let sy = if self.y_max > self.y_min {
            (y - self.y_min) / (self.y_max - self.y_min)
        } else {
            0.5
        };
        (self.px + sx * self.pw, self.py + (1.0 - sy) * self.ph)
    }
}
