use std::path::Path;

use anyhow::anyhow;
use plotters::prelude::*;

use super::pipeline::{Condition, ConditionResult};

fn color(c: Condition) -> RGBColor {
    match c {
        Condition::Primitives => BLACK,
        Condition::RandomMacros => GREEN,
        Condition::Huffman => RED,
        Condition::Lzw => BLUE,
    }
}

/// Mean return per episode, one line per condition, as SVG.
pub fn plot_mean_curves(path: &Path, title: &str, conditions: &[ConditionResult]) -> anyhow::Result<()> {
    let episodes = conditions.iter().map(|c| c.mean_curve.len()).max().unwrap_or(0).max(1);
    let values = conditions.iter().flat_map(|c| c.mean_curve.iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (-1.0, 0.0) };
    let pad = ((hi - lo) * 0.05).max(1.0);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..episodes as f64, (lo - pad)..(hi + pad))
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("episode")
        .y_desc("mean return")
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for c in conditions {
        let col = color(c.condition);
        chart
            .draw_series(LineSeries::new(
                c.mean_curve.iter().enumerate().map(|(i, v)| (i as f64, *v)),
                col.stroke_width(2),
            ))
            .map_err(|e| anyhow!("{e}"))?
            .label(c.condition.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], col.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}
