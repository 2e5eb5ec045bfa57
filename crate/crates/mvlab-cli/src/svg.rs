//! Self-contained SVG log-log plots: error curve with standard-error bars
//! and the fitted power law annotated with its slope.

use mvlab::experiments::{RateFit, SweepResult};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;

struct LogAxes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl LogAxes {
    fn x(&self, v: f64) -> f64 {
        let t = (v.ln() - self.x_min) / (self.x_max - self.x_min);
        MARGIN + t * (W - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        let t = (v.ln() - self.y_min) / (self.y_max - self.y_min);
        H - MARGIN - t * (H - 2.0 * MARGIN)
    }
}

/// Log-log plot of the aggregate means against the abscissa, with the fitted
/// line when available.
pub fn loglog_plot(result: &SweepResult, fit: Option<&RateFit>, x_label: &str) -> String {
    let points: Vec<(f64, f64)> = result
        .aggregates
        .iter()
        .filter(|a| a.n_ok > 0 && a.mean > 0.0)
        .map(|a| (a.x, a.mean))
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\" stroke=\"none\"/>\n"
    ));
    if points.len() < 2 {
        svg.push_str("<text x=\"50%\" y=\"50%\" text-anchor=\"middle\">not enough data</text>\n</svg>\n");
        return svg;
    }
    let pad = 0.15;
    let axes = LogAxes {
        x_min: points.iter().map(|p| p.0.ln()).fold(f64::INFINITY, f64::min) - pad,
        x_max: points.iter().map(|p| p.0.ln()).fold(f64::NEG_INFINITY, f64::max) + pad,
        y_min: points.iter().map(|p| p.1.ln()).fold(f64::INFINITY, f64::min) - pad,
        y_max: points.iter().map(|p| p.1.ln()).fold(f64::NEG_INFINITY, f64::max) + pad,
    };

    // Frame and labels.
    svg.push_str(&format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#444\"/>\n",
        M = MARGIN,
        w = W - 2.0 * MARGIN,
        h = H - 2.0 * MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} (log)</text>\n",
        W / 2.0,
        H - 18.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">mean error (log)</text>\n",
        H / 2.0,
        H / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\">{} | {}</text>\n",
        W / 2.0,
        escape(&result.label),
        escape(&result.model)
    ));

    // Tick labels at the data points.
    for (x, _) in &points {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#444\">{:.3e}</text>\n",
            axes.x(*x),
            H - MARGIN + 16.0,
            x
        ));
    }

    // Fitted line across the frame.
    if let Some(fit) = fit {
        let y_at = |lx: f64| (fit.intercept + fit.slope * lx).exp();
        let x0 = axes.x_min.exp();
        let x1 = axes.x_max.exp();
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#c44\" stroke-width=\"1.5\"/>\n",
            axes.x(x0),
            axes.y(y_at(axes.x_min)),
            axes.x(x1),
            axes.y(y_at(axes.x_max)),
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"46\" text-anchor=\"middle\" fill=\"#c44\">slope {:.3} (R^2 {:.3})</text>\n",
            W / 2.0,
            fit.slope,
            fit.r_squared
        ));
    }

    // Standard-error bars and data points.
    for agg in result.aggregates.iter().filter(|a| a.n_ok > 0 && a.mean > 0.0) {
        if agg.std_error.is_finite() && agg.std_error > 0.0 {
            let lo = (agg.mean - agg.std_error).max(agg.mean * 1e-3);
            let hi = agg.mean + agg.std_error;
            svg.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#26a\" stroke-width=\"1\"/>\n",
                axes.y(lo),
                axes.y(hi),
                x = axes.x(agg.x),
            ));
        }
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"#26a\"/>\n",
            axes.x(agg.x),
            axes.y(agg.mean)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
