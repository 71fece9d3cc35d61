//! Feature plots: signed horizontal bars per explained case, as monospace
//! text or SVG.

use crate::explain::Explanation;

const BAR_WIDTH: usize = 20;

/// Render explanations as a monospace text plot. Bars grow left for
/// negative weights and right for positive ones around a central axis.
pub fn feature_plot_text(explanations: &[Explanation]) -> String {
    let mut out = String::new();
    for (i, e) in explanations.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "Case: {}  Label: {}  Probability: {:.3}  Explanation Fit: {:.3}\n",
            e.case, e.label, e.probability, e.explanation_fit
        ));
        let max_abs = e
            .features
            .iter()
            .map(|f| f.weight.abs())
            .fold(0.0_f64, f64::max);
        let name_width = e.features.iter().map(|f| f.name.len()).max().unwrap_or(0);
        for f in &e.features {
            let frac = if max_abs > 0.0 {
                f.weight.abs() / max_abs
            } else {
                0.0
            };
            let len = (frac * BAR_WIDTH as f64).round() as usize;
            let (left, right) = if f.weight < 0.0 {
                (format!("{:>BAR_WIDTH$}", "#".repeat(len)), " ".repeat(0))
            } else {
                (" ".repeat(BAR_WIDTH), "#".repeat(len))
            };
            out.push_str(&format!(
                "  {:<name_width$} {}|{:<BAR_WIDTH$} {:+.4}\n",
                f.name, left, right, f.weight
            ));
        }
    }
    out
}

/// Render explanations as a minimal SVG document.
pub fn feature_plot_svg(explanations: &[Explanation]) -> String {
    let row_h = 18;
    let header_h = 24;
    let label_w = 220;
    let plot_w = 300;
    let width = label_w + plot_w + 80;

    let mut height = 10;
    for e in explanations {
        height += header_h + row_h * e.features.len() + 12;
    }

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    let mut y = 10;
    for e in explanations {
        y += header_h;
        svg.push_str(&format!(
            "  <text x=\"10\" y=\"{y}\" font-weight=\"bold\">Case: {} Label: {} Probability: {:.3} Fit: {:.3}</text>\n",
            xml_escape(&e.case), xml_escape(&e.label), e.probability, e.explanation_fit
        ));
        let max_abs = e
            .features
            .iter()
            .map(|f| f.weight.abs())
            .fold(0.0_f64, f64::max);
        let axis_x = label_w + plot_w / 2;
        for f in &e.features {
            y += row_h;
            let half = (plot_w / 2) as f64;
            let len = if max_abs > 0.0 {
                (f.weight.abs() / max_abs * half).round() as i64
            } else {
                0
            };
            let (x0, fill) = if f.weight < 0.0 {
                (axis_x as i64 - len, "#c0392b")
            } else {
                (axis_x as i64, "#2980b9")
            };
            svg.push_str(&format!(
                "  <text x=\"10\" y=\"{y}\">{}</text>\n",
                xml_escape(&f.name)
            ));
            svg.push_str(&format!(
                "  <rect x=\"{x0}\" y=\"{}\" width=\"{len}\" height=\"10\" fill=\"{fill}\"/>\n",
                y - 9
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{y}\">{:+.4}</text>\n",
                label_w + plot_w + 8,
                f.weight
            ));
        }
        y += 12;
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{Explanation, FeatureWeight};

    fn sample() -> Vec<Explanation> {
        vec![Explanation {
            case: "1".into(),
            label: ">8".into(),
            probability: 0.97,
            explanation_fit: 0.61,
            features: vec![
                FeatureWeight { name: "fee_per_hr".into(), weight: -0.23 },
                FeatureWeight { name: "purpose_Work".into(), weight: 0.08 },
            ],
        }]
    }

    #[test]
    fn text_plot_contains_fields_and_bars() {
        let s = feature_plot_text(&sample());
        assert!(s.contains("Case: 1"));
        assert!(s.contains("Label: >8"));
        assert!(s.contains("fee_per_hr"));
        assert!(s.contains('#'));
        assert!(s.contains("-0.2300"));
    }

    #[test]
    fn svg_plot_escapes_labels() {
        let s = feature_plot_svg(&sample());
        assert!(s.starts_with("<svg"));
        assert!(s.contains("&gt;8"));
        assert!(!s.contains("Label: >8 "));
    }
}
