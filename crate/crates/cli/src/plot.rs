//! SVG summaries of experiment reports.

use std::fmt::Display;
use std::path::Path;

use plotters::prelude::*;

use hrdepth::analysis::{ExperimentKind, ExperimentReport};

use crate::commands::CliError;

const SIZE: (u32, u32) = (800, 500);
const HIST_BINS: usize = 40;

fn fail<E: Display>(e: E) -> CliError {
    CliError::Config(format!("cannot draw plot: {e}"))
}

/// `(lo, hi)` padded by 5% so points do not sit on the frame.
fn padded(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

type Series = (&'static str, RGBColor, Vec<(f64, f64)>);

/// Line-and-marker chart with a logarithmic x axis.
fn log_x_chart(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[Series]) -> Result<(), CliError> {
    let xs = series.iter().flat_map(|s| s.2.iter().map(|p| p.0));
    let x_lo = xs.clone().fold(f64::INFINITY, f64::min);
    let x_hi = xs.fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = padded(series.iter().flat_map(|s| s.2.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x_lo * 0.8..x_hi * 1.25).log_scale(), y_lo..y_hi)
        .map_err(fail)?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(fail)?;
    for (label, color, pts) in series {
        let color = *color;
        chart
            .draw_series(LineSeries::new(pts.clone(), color))
            .map_err(fail)?
            .label(*label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart.draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled()))).map_err(fail)?;
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(fail)?;
    root.present().map_err(fail)
}

fn histogram(path: &Path, title: &str, values: &[f64], marks: &[(&str, f64, RGBColor)]) -> Result<(), CliError> {
    let (lo, hi) = padded(values.iter().copied().chain(marks.iter().map(|m| m.1)));
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = [0u32; HIST_BINS];
    for v in values {
        let bin = (((v - lo) / width) as usize).min(HIST_BINS - 1);
        counts[bin] += 1;
    }
    let top = f64::from(counts.iter().copied().max().unwrap_or(1)) * 1.1;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(lo..hi, 0.0..top)
        .map_err(fail)?;
    chart.configure_mesh().x_desc("sqrt(n) (D_n - D)").y_desc("replications").draw().map_err(fail)?;
    chart
        .draw_series(counts.iter().enumerate().map(|(i, c)| {
            let x0 = lo + i as f64 * width;
            Rectangle::new([(x0, 0.0), (x0 + width, f64::from(*c))], BLUE.mix(0.4).filled())
        }))
        .map_err(fail)?;
    for (label, x, color) in marks {
        let color = *color;
        chart
            .draw_series(LineSeries::new(vec![(*x, 0.0), (*x, top)], color.stroke_width(2)))
            .map_err(fail)?
            .label(*label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(fail)?;
    root.present().map_err(fail)
}

fn bars(path: &Path, title: &str, bars: &[f64], oracle: Option<f64>) -> Result<(), CliError> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..3.0, 0.0..1.05)
        .map_err(fail)?;
    chart.configure_mesh().x_desc("query (1 = h1, 2 = h2)").y_desc("P(X above h)").draw().map_err(fail)?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, p)| {
            let x = i as f64 + 1.0;
            Rectangle::new([(x - 0.3, 0.0), (x + 0.3, *p)], BLUE.mix(0.5).filled())
        }))
        .map_err(fail)?;
    if let Some(g) = oracle {
        chart
            .draw_series(LineSeries::new(vec![(0.0, g), (3.0, g)], RED))
            .map_err(fail)?
            .label("oracle gap")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(fail)?;
    }
    root.present().map_err(fail)
}

/// Draw the summary chart of `report` to `path`.
pub fn report(r: &ExperimentReport, path: &Path) -> Result<(), CliError> {
    let title = format!("{:?} (seed {}, {})", r.kind, r.seed, &r.config_hash[..12]);
    match r.kind {
        ExperimentKind::ZeroTrend => {
            let mut series: Vec<Series> =
                vec![("empirical", BLUE, r.trend.iter().map(|t| (t.m as f64, t.depth)).collect())];
            let oracle: Vec<(f64, f64)> = r.trend.iter().filter_map(|t| t.oracle.map(|o| (t.m as f64, o))).collect();
            if !oracle.is_empty() {
                series.push(("grid oracle", RED, oracle));
            }
            log_x_chart(path, &title, "grid steps m", "depth", &series)
        }
        ExperimentKind::Consistency | ExperimentKind::Subset | ExperimentKind::Rate => {
            let y = if r.kind == ExperimentKind::Rate { "sqrt(n) sup |D_n - D|" } else { "sup |D_n - D|" };
            let series: Vec<Series> = vec![
                ("median", BLUE, r.rows.iter().map(|row| (row.n as f64, row.median)).collect()),
                ("95th percentile", RED, r.rows.iter().map(|row| (row.n as f64, row.q95)).collect()),
            ];
            log_x_chart(path, &title, "sample size n", y, &series)
        }
        ExperimentKind::LimitLaw => {
            let values: Vec<f64> = r.per_rep.iter().map(|s| s.value).collect();
            let (mean, oracle) = r.limit_law.as_ref().map_or((0.0, 0.0), |l| (l.mean, l.oracle_mean));
            histogram(path, &title, &values, &[("sample mean", mean, BLACK), ("limit mean", oracle, RED)])
        }
        ExperimentKind::C2Gap => {
            let g = r.gap.as_ref().ok_or_else(|| fail("report has no gap estimate"))?;
            bars(path, &title, &[g.p1, g.p2], g.oracle)
        }
    }
}
