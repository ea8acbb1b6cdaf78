//! SVG figures: accuracy curves from a sweep table and spike rasters.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use sea_core::SpikeTrainSample;

use crate::error::{Error, Result};
use crate::sweep::{read_csv, ResultRow};

#[derive(Debug, Clone, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    /// Keep only rows of this experiment.
    pub experiment: Option<String>,
    /// Keep only rows of this perturbation kind.
    pub perturb_kind: Option<String>,
    /// Horizontal reference at chance level.
    pub chance: Option<f64>,
    /// Dashed horizontal reference at the MLP accuracy of the smallest x.
    pub mlp_reference: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub model: String,
    pub points: Vec<Point>,
}

/// What was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub series: Vec<Series>,
    /// Series drawn with a min/max band of non-zero width somewhere.
    pub bands: usize,
    /// Series drawn as a lone marker.
    pub single_points: usize,
    /// Dashed MLP reference level, if drawn.
    pub mlp_reference: Option<f64>,
}

/// Groups rows by (variant, model) and aggregates seeds per x value.
/// Rows without accuracy (failed runs) are left out.
pub fn curves(rows: &[ResultRow], spec: &PlotSpec) -> Result<Vec<Series>> {
    let keep = |r: &&ResultRow| {
        r.accuracy.is_some()
            && spec.experiment.as_ref().map_or(true, |e| &r.experiment == e)
            && spec.perturb_kind.as_ref().map_or(true, |k| &r.perturb_kind == k)
    };
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let mut x_of: BTreeMap<u64, f64> = BTreeMap::new();
    for r in rows.iter().filter(keep) {
        // order x values numerically through their bit patterns (all ≥ 0)
        let key = r.perturb_value.to_bits();
        x_of.insert(key, r.perturb_value);
        groups
            .entry((r.variant.clone(), r.model.clone()))
            .or_default()
            .entry(key)
            .or_default()
            .push(r.accuracy.expect("filtered"));
    }
    if groups.is_empty() {
        return Err(Error::Plot("no rows match the selection".into()));
    }
    let variants: std::collections::BTreeSet<&String> = groups.keys().map(|(v, _)| v).collect();
    let multi = variants.len() > 1;
    let mut out: Vec<Series> = groups
        .iter()
        .map(|((variant, model), by_x)| {
            let mut points: Vec<Point> = by_x
                .iter()
                .map(|(k, accs)| Point {
                    x: x_of[k],
                    mean: accs.iter().sum::<f64>() / accs.len() as f64,
                    min: accs.iter().copied().fold(f64::INFINITY, f64::min),
                    max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    n: accs.len(),
                })
                .collect();
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            Series {
                name: if multi { format!("{variant}/{model}") } else { model.clone() },
                model: model.clone(),
                points,
            }
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

fn x_range(series: &[Series]) -> (f64, f64) {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.x));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

pub fn emit_curves(csv: &Path, spec: &PlotSpec, out: &Path) -> Result<CurveSummary> {
    let rows = read_csv(csv)?;
    draw_curves(&rows, spec, out)
}

pub fn draw_curves(rows: &[ResultRow], spec: &PlotSpec, out: &Path) -> Result<CurveSummary> {
    let series = curves(rows, spec)?;
    let (x0, x1) = x_range(&series);
    let root = SVGBackend::new(out, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(&spec.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, 0.0..1.0)?;
    chart
        .configure_mesh()
        .x_desc(spec.x_label.as_str())
        .y_desc("test accuracy")
        .draw()?;

    let mut summary = CurveSummary {
        series: series.clone(),
        bands: 0,
        single_points: 0,
        mlp_reference: None,
    };
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        if s.points.len() == 1 {
            let p = &s.points[0];
            chart
                .draw_series(std::iter::once(Circle::new((p.x, p.mean), 4, color.filled())))?
                .label(s.name.as_str())
                .legend(move |(x, y)| Circle::new((x + 10, y), 4, color.filled()));
            summary.single_points += 1;
            continue;
        }
        if s.points.iter().any(|p| p.max > p.min) {
            let mut outline: Vec<(f64, f64)> = s.points.iter().map(|p| (p.x, p.max)).collect();
            outline.extend(s.points.iter().rev().map(|p| (p.x, p.min)));
            chart.draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))?;
            summary.bands += 1;
        }
        chart
            .draw_series(LineSeries::new(s.points.iter().map(|p| (p.x, p.mean)), color.stroke_width(2)))?
            .label(s.name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart.draw_series(s.points.iter().map(|p| Circle::new((p.x, p.mean), 3, color.filled())))?;
    }
    if let Some(c) = spec.chance {
        chart
            .draw_series(LineSeries::new([(x0, c), (x1, c)], BLACK.mix(0.5)))?
            .label("chance")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK.mix(0.5)));
    }
    if spec.mlp_reference {
        if let Some(level) = series.iter().find(|s| s.model == "mlp").map(|s| s.points[0].mean) {
            chart
                .draw_series(DashedLineSeries::new([(x0, level), (x1, level)], 8, 6, RED.stroke_width(2)))?
                .label("MLP baseline")
                .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
            summary.mlp_reference = Some(level);
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterSummary {
    pub clean_events: usize,
    pub perturbed_events: usize,
}

/// Event raster of one sample (black), optionally overlaid with a perturbed
/// version of it (red).
pub fn raster_dump(
    sample: &SpikeTrainSample,
    perturbed: Option<&SpikeTrainSample>,
    title: &str,
    out: &Path,
) -> Result<RasterSummary> {
    if let Some(p) = perturbed {
        if p.num_neurons() != sample.num_neurons() {
            return Err(Error::Plot("perturbed sample has a different neuron count".into()));
        }
    }
    let events = |s: &SpikeTrainSample| -> Vec<(f64, f64)> {
        s.neurons()
            .iter()
            .enumerate()
            .flat_map(|(i, train)| train.iter().map(move |&t| (t, i as f64)))
            .collect()
    };
    let root = SVGBackend::new(out, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let t_max = sample.duration_ms().max(1.0);
    let n = sample.num_neurons().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_max, -0.5..n - 0.5)?;
    chart.configure_mesh().x_desc("time (ms)").y_desc("neuron").draw()?;
    let clean = events(sample);
    chart.draw_series(clean.iter().map(|&p| Circle::new(p, 2, BLACK.filled())))?;
    let mut summary = RasterSummary {
        clean_events: clean.len(),
        perturbed_events: 0,
    };
    if let Some(p) = perturbed {
        let pert = events(p);
        chart.draw_series(pert.iter().map(|&p| Circle::new(p, 2, RED.mix(0.8).filled())))?;
        summary.perturbed_events = pert.len();
    }
    root.present()?;
    Ok(summary)
}
