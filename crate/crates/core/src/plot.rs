//! SVG charts of metric CSVs: mean across seeds with a min/max band.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{read_rows, MetricRow};

/// Which metric a chart shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MinRate,
    SumRate,
}

impl Metric {
    fn value(self, r: &MetricRow) -> f64 {
        match self {
            Metric::MinRate => r.avg_min_rate,
            Metric::SumRate => r.avg_sum_rate,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::MinRate => "average min-rate (bps/Hz)",
            Metric::SumRate => "average sum-rate (bps/Hz)",
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Metric::MinRate => "min_rate",
            Metric::SumRate => "sum_rate",
        }
    }
}

/// Per-x statistics across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// One line per (scheme, regime). The x axis is the sweep value when the rows
/// span several sweep points, otherwise the episode.
pub fn band_series(rows: &[MetricRow], metric: Metric) -> BTreeMap<String, Vec<BandPoint>> {
    let by_sweep = rows
        .iter()
        .any(|r| rows.first().is_some_and(|f| f.sweep_value != r.sweep_value));
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let x = if by_sweep { r.sweep_value } else { r.episode as f64 };
        groups
            .entry(format!("{} ({})", r.scheme, r.regime))
            .or_default()
            .entry(x.to_bits())
            .or_default()
            .push(metric.value(r));
    }
    groups
        .into_iter()
        .map(|(name, points)| {
            let mut band: Vec<BandPoint> = points
                .into_iter()
                .map(|(bits, v)| BandPoint {
                    x: f64::from_bits(bits),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
                .collect();
            band.sort_by(|a, b| a.x.total_cmp(&b.x));
            (name, band)
        })
        .collect()
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn render(path: &Path, title: &str, x_label: &str, metric: Metric, series: &BTreeMap<String, Vec<BandPoint>>) -> Result<()> {
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y1 = y1.max(p.max);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let y1 = if y1 > 0.0 { y1 * 1.05 } else { 1.0 };

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, 0.0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(metric.label())
        .draw()
        .map_err(plot_err)?;

    for (i, (name, band)) in series.iter().enumerate() {
        let color = Palette99::pick(i);
        let mut outline: Vec<(f64, f64)> = band.iter().map(|p| (p.x, p.max)).collect();
        outline.extend(band.iter().rev().map(|p| (p.x, p.min)));
        chart
            .draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(band.iter().map(|p| (p.x, p.mean)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Renders `<stem>_min_rate.svg` and `<stem>_sum_rate.svg` for each CSV.
/// Every input is read and checked before anything is written.
pub fn render_plots(csvs: &[PathBuf], out_dir: &Path, x_label: Option<&str>) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::with_capacity(csvs.len());
    for path in csvs {
        let rows = read_rows(path)?;
        if rows.is_empty() {
            return Err(Error::Plot(format!("{} has no data rows", path.display())));
        }
        inputs.push((path, rows));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (path, rows) in inputs {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("metrics");
        let by_sweep = rows.iter().any(|r| r.sweep_value != rows[0].sweep_value);
        let label = x_label.unwrap_or(if by_sweep { "sweep value" } else { "episode" });
        for metric in [Metric::MinRate, Metric::SumRate] {
            let out = out_dir.join(format!("{stem}_{}.svg", metric.suffix()));
            render(&out, stem, label, metric, &band_series(&rows, metric))?;
            written.push(out);
        }
    }
    Ok(written)
}
