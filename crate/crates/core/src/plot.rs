//! SVG rendering of evaluation reports.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{AblationReport, EvalReport, ModeClass, SweepTable};
use crate::stats::BoxStats;

const SIZE: (u32, u32) = (720, 480);
const EVEN: RGBColor = RGBColor(31, 119, 180);
const ODD: RGBColor = RGBColor(255, 127, 14);

fn draw_err<E: std::error::Error + Send + Sync>(e: DrawingAreaErrorKind<E>) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// One labeled box per group.
pub fn boxplot_svg(path: &Path, title: &str, y_label: &str, groups: &[(String, BoxStats, RGBColor)]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let hi = groups
        .iter()
        .map(|(_, b, _)| b.whisker_hi)
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.1;
    let n = groups.len().max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d(-0.5f64..n as f64 - 0.5, 0.0..hi)
        .map_err(draw_err)?;
    let labels: Vec<String> = groups.iter().map(|(l, _, _)| l.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                labels.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc(y_label)
        .draw()
        .map_err(draw_err)?;
    for (i, (_, b, color)) in groups.iter().enumerate() {
        let x = i as f64;
        let w = 0.3;
        let style = color.stroke_width(2);
        chart
            .draw_series([
                Rectangle::new([(x - w, b.q1), (x + w, b.q3)], color.mix(0.25).filled()),
                Rectangle::new([(x - w, b.q1), (x + w, b.q3)], style),
            ])
            .map_err(draw_err)?;
        let lines = [
            vec![(x - w, b.median), (x + w, b.median)],
            vec![(x, b.q3), (x, b.whisker_hi)],
            vec![(x, b.q1), (x, b.whisker_lo)],
            vec![(x - w / 2.0, b.whisker_hi), (x + w / 2.0, b.whisker_hi)],
            vec![(x - w / 2.0, b.whisker_lo), (x + w / 2.0, b.whisker_lo)],
        ];
        chart
            .draw_series(lines.into_iter().map(|l| PathElement::new(l, style)))
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}

/// RMSE box per method.
pub fn report_svg(path: &Path, report: &EvalReport) -> Result<()> {
    let palette = [EVEN, ODD, RGBColor(44, 160, 44), RGBColor(214, 39, 40)];
    let groups: Vec<_> = report
        .summary
        .iter()
        .enumerate()
        .map(|(i, (m, b))| (m.clone(), *b, palette[i % palette.len()]))
        .collect();
    boxplot_svg(path, "Wavefront RMSE", "RMSE (µm)", &groups)
}

/// Per-class error boxes for each plane count.
pub fn ablation_svg(path: &Path, report: &AblationReport) -> Result<()> {
    let groups: Vec<_> = report
        .entries
        .iter()
        .map(|e| {
            let color = match e.class {
                ModeClass::Even => EVEN,
                ModeClass::Odd => ODD,
            };
            (format!("{} n_z={}", e.class.name(), e.n_z), e.stats, color)
        })
        .collect();
    boxplot_svg(path, &format!("Plane ablation ({})", report.method), "RMSE (µm)", &groups)
}

/// Introduced-mode response against ground truth, with non-introduced modes
/// in gray.
pub fn sweep_svg(path: &Path, table: &SweepTable) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let lim = table
        .rows
        .iter()
        .flat_map(|r| r.predicted.iter().map(|(_, a)| a.abs()).chain([r.amplitude.abs()]))
        .fold(0.0f64, f64::max)
        .max(1e-3)
        * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("a{} sweep ({})", table.mode, table.method), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d(-lim..lim, -lim..lim)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("true amplitude (µm)")
        .y_desc("predicted amplitude (µm)")
        .draw()
        .map_err(draw_err)?;
    chart
        .draw_series([PathElement::new(vec![(-lim, -lim), (lim, lim)], BLACK.mix(0.4))])
        .map_err(draw_err)?;
    chart
        .draw_series(table.rows.iter().flat_map(|r| {
            r.predicted
                .iter()
                .filter(|&(m, _)| m != table.mode)
                .map(move |(_, a)| Circle::new((r.amplitude, a), 2, RGBColor(150, 150, 150).filled()))
        }))
        .map_err(draw_err)?;
    chart
        .draw_series(
            table
                .rows
                .iter()
                .map(|r| Circle::new((r.amplitude, r.predicted.get(table.mode)), 4, EVEN.filled())),
        )
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}
