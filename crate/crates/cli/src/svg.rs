//! Minimal hand-emitted SVG line charts for PR/ROC curves and histogram
//! reports. CSV stays the authoritative output; these are for eyeballs.

pub const PALETTE: [&str; 6] = ["#31688e", "#d1862d", "#3f9b6e", "#8a4f9e", "#c24f4f", "#657083"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Dashed stroke, used for chance/reference lines.
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, color: &'static str, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), color, points, dashed: false }
    }
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
}

impl Chart {
    /// Unit-square chart, the shape of PR and ROC plots.
    pub fn unit(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Chart {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            series: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let (x0, y0) = (LEFT, TOP);
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let (xmin, xmax) = pad_range(self.x_range);
        let (ymin, ymax) = pad_range(self.y_range);
        let px = |x: f64| x0 + (x - xmin) / (xmax - xmin) * pw;
        let py = |y: f64| y0 + ph - (y - ymin) / (ymax - ymin) * ph;

        let mut out = String::with_capacity(4096);
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             font-family=\"sans-serif\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            x0 + pw / 2.0,
            escape(&self.title)
        ));

        // Gridlines and tick labels at the quarter points.
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = xmin + f * (xmax - xmin);
            let yv = ymin + f * (ymax - ymin);
            let gx = px(xv);
            let gy = py(yv);
            out.push_str(&format!(
                "<line x1=\"{gx:.2}\" y1=\"{y0:.2}\" x2=\"{gx:.2}\" y2=\"{:.2}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                y0 + ph
            ));
            out.push_str(&format!(
                "<line x1=\"{x0:.2}\" y1=\"{gy:.2}\" x2=\"{:.2}\" y2=\"{gy:.2}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                x0 + pw
            ));
            out.push_str(&format!(
                "<text x=\"{gx:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                y0 + ph + 16.0,
                tick_label(xv, xmax - xmin)
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                x0 - 6.0,
                gy + 4.0,
                tick_label(yv, ymax - ymin)
            ));
        }

        out.push_str(&format!(
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" \
             fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            x0 + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
            y0 + ph / 2.0,
            y0 + ph / 2.0,
            escape(&self.y_label)
        ));

        for s in &self.series {
            let pts: String = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2} ", px(x), py(y)))
                .collect();
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
                pts.trim_end(),
                s.color
            ));
        }
        for (i, s) in self.series.iter().enumerate() {
            let ly = y0 + 14.0 + i as f64 * 16.0;
            let lx = x0 + pw - 150.0;
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            out.push_str(&format!(
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
                 stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
                lx + 22.0,
                s.color
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>\n",
                lx + 28.0,
                ly + 4.0,
                escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn pad_range((min, max): (f64, f64)) -> (f64, f64) {
    if max > min {
        (min, max)
    } else {
        (min, min + 1.0)
    }
}

fn tick_label(v: f64, range: f64) -> String {
    if range >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_labels() {
        let mut chart = Chart::unit("ROC", "false positive rate", "true positive rate");
        chart.series.push(Series::new("image", PALETTE[0], vec![(0.0, 0.0), (0.2, 0.9), (1.0, 1.0)]));
        let mut chance = Series::new("chance", PALETTE[5], vec![(0.0, 0.0), (1.0, 1.0)]);
        chance.dashed = true;
        chart.series.push(chance);
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("false positive rate"));
        assert!(svg.contains("0.25"));
    }

    #[test]
    fn corner_points_land_on_the_plot_frame() {
        let mut chart = Chart::unit("t", "x", "y");
        chart.series.push(Series::new("s", PALETTE[0], vec![(0.0, 0.0), (1.0, 1.0)]));
        let svg = chart.render();
        // x=0,y=0 maps to the lower-left corner of the plot rect (y = 540 - 48).
        assert!(svg.contains("64.00,492.00"), "{svg}");
        // x=1,y=1 maps to the upper-right corner.
        assert!(svg.contains("704.00,36.00"), "{svg}");
    }

    #[test]
    fn labels_are_escaped_and_wide_ranges_get_integer_ticks() {
        let mut chart = Chart::unit("a < b", "bins", "count");
        chart.x_range = (0.0, 255.0);
        chart.y_range = (0.0, 40.0);
        chart.series.push(Series::new("g", PALETTE[1], vec![(0.0, 3.0), (255.0, 7.0)]));
        let svg = chart.render();
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains(">191<"));
    }
}
