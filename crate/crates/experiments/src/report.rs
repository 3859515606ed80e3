//! SVG figures and their underlying CSV tables.

use std::path::{Path, PathBuf};

use ar_surrogate::training::TrainLog;
use plotters::prelude::*;

use crate::create_dir;
use crate::error::{ExpError, IoContext, Result};
use crate::layout::{FIELDS_DIR, MSE_CURVES_CSV, SWEEP_CSV, TRAINLOGS_DIR, WEIGHTS_DIR};

/// Stroke width of data series; axes and grid lines use 1.
pub const SERIES_STROKE: u32 = 2;

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn plot_err(e: impl std::fmt::Display) -> ExpError {
    ExpError::Plot(e.to_string())
}

fn series_color(i: usize) -> RGBColor {
    PALETTE[i % PALETTE.len()]
}

/// Adaptive-weight evolution: one polyline per `w_i` plus one for `k_e`.
pub fn weight_evolution_svg(title: &str, log: &TrainLog) -> Result<String> {
    let m = log.records.first().map_or(0, |r| r.weights.len());
    let last_epoch = log.records.last().map_or(1, |r| r.epoch.max(1)) as f64;
    let y_max = log.records.iter().map(|r| r.k_e).fold(1.0, f64::max) * 1.05;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 16))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..last_epoch, 0.0..y_max)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc("weight / k_e")
            .draw()
            .map_err(plot_err)?;
        for i in 0..m {
            let color = series_color(i);
            chart
                .draw_series(LineSeries::new(
                    log.records.iter().map(|r| (r.epoch as f64, r.weights[i])),
                    color.stroke_width(SERIES_STROKE),
                ))
                .map_err(plot_err)?
                .label(format!("w_{}", i + 1))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart
            .draw_series(LineSeries::new(
                log.records.iter().map(|r| (r.epoch as f64, r.k_e)),
                BLACK.stroke_width(SERIES_STROKE),
            ))
            .map_err(plot_err)?
            .label("k_e")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Time-varying MSE per named series on a log axis. Non-finite and
/// non-positive values are skipped.
pub fn mse_curves_svg(title: &str, series: &[(String, Vec<f64>)]) -> Result<String> {
    let values = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo / 2.0, hi * 2.0) } else { (1e-12, 1.0) };
    let horizon = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2) as f64;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 16))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(64)
            .build_cartesian_2d(1.0..horizon, (lo..hi).log_scale())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("rollout step")
            .y_desc("MSE")
            .y_label_formatter(&|v| format!("{v:.0e}"))
            .draw()
            .map_err(plot_err)?;
        for (i, (name, curve)) in series.iter().enumerate() {
            let color = series_color(i);
            chart
                .draw_series(LineSeries::new(
                    curve
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v.is_finite() && **v > 0.0)
                        .map(|(s, v)| ((s + 1) as f64, *v)),
                    color.stroke_width(SERIES_STROKE),
                ))
                .map_err(plot_err)?
                .label(name.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperLeft)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Blue-white-red map of `v / scale` clamped to `[-1, 1]`.
fn diverging(v: f64, scale: f64) -> RGBColor {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: u8, w: f64| (255.0 + (c as f64 - 255.0) * w).round() as u8;
    if t >= 0.0 {
        RGBColor(fade(178, t), fade(24, t), fade(43, t))
    } else {
        RGBColor(fade(33, -t), fade(102, -t), fade(172, -t))
    }
}

/// Side-by-side ground truth and prediction on a shared color scale.
/// Both slices are row-major `[y][x]`.
pub fn field_map_svg(title: &str, nx: usize, ny: usize, truth: &[f64], prediction: &[f64]) -> Result<String> {
    let scale = truth
        .iter()
        .chain(prediction)
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (840, 440)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let root = root.titled(title, ("sans-serif", 16)).map_err(plot_err)?;
        let panels = root.split_evenly((1, 2));
        for (panel, (name, values)) in panels.iter().zip([("truth", truth), ("prediction", prediction)]) {
            let mut chart = ChartBuilder::on(panel)
                .caption(name, ("sans-serif", 14))
                .margin(8)
                .build_cartesian_2d(0..nx, 0..ny)
                .map_err(plot_err)?;
            chart
                .draw_series((0..ny).flat_map(|j| {
                    (0..nx).map(move |i| {
                        Rectangle::new([(i, j), (i + 1, j + 1)], diverging(values[j * nx + i], scale).filled())
                    })
                }))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn parse_field_csv(text: &str) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut xs = Vec::new();
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ExpError::Format(format!("bad field row {row:?}")))
        };
        xs.push(num(0)?);
        truth.push(num(2)?);
        pred.push(num(3)?);
    }
    let nx = xs.iter().skip(1).position(|&x| x == xs[0]).map_or(xs.len(), |p| p + 1);
    if nx == 0 || truth.len() % nx != 0 {
        return Err(ExpError::Format("field table is not a full grid".into()));
    }
    Ok((nx, truth.len() / nx, truth, pred))
}

fn parse_curves_csv(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_owned).collect();
    let mut series: Vec<(String, Vec<f64>)> = names.into_iter().map(|n| (n, Vec::new())).collect();
    for row in reader.records() {
        let row = row?;
        for (k, (_, values)) in series.iter_mut().enumerate() {
            values.push(row.get(k + 1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN));
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
}

/// Render the figures of an `evaluate` output directory into `out`.
///
/// Fails with [`ExpError::NoResults`] before touching `out` when `results`
/// holds no sweep table.
pub fn cmd_report(results: &Path, out: &Path) -> Result<ReportOutcome> {
    let sweep = results.join(SWEEP_CSV);
    if !sweep.is_file() {
        return Err(ExpError::NoResults(results.to_path_buf()));
    }
    let mut outcome = ReportOutcome::default();
    create_dir(out)?;
    let mut emit = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        ar_surrogate::write_atomic(&path, bytes)?;
        outcome.files.push(path);
        Ok(())
    };
    emit(out.join(SWEEP_CSV), &std::fs::read(&sweep).at(&sweep)?)?;

    let fields = csv_files(&results.join(FIELDS_DIR))?;
    if !fields.is_empty() {
        create_dir(&out.join(FIELDS_DIR))?;
    }
    for path in fields {
        let text = std::fs::read_to_string(&path).at(&path)?;
        let (nx, ny, truth, pred) = parse_field_csv(&text)?;
        let label = stem(&path);
        let svg = field_map_svg(&format!("final snapshot: {label}"), nx, ny, &truth, &pred)?;
        emit(out.join(FIELDS_DIR).join(format!("{label}.svg")), svg.as_bytes())?;
        emit(out.join(FIELDS_DIR).join(format!("{label}.csv")), text.as_bytes())?;
    }

    let logs = csv_files(&results.join(TRAINLOGS_DIR))?;
    let mut weights_dir_ready = false;
    for path in logs {
        let text = std::fs::read_to_string(&path).at(&path)?;
        let log = TrainLog::from_csv(&text)?;
        if log.records.first().is_none_or(|r| r.weights.len() < 2) {
            continue;
        }
        if !weights_dir_ready {
            create_dir(&out.join(WEIGHTS_DIR))?;
            weights_dir_ready = true;
        }
        let label = stem(&path);
        let svg = weight_evolution_svg(&format!("loss weights: {label}"), &log)?;
        emit(out.join(WEIGHTS_DIR).join(format!("{label}.svg")), svg.as_bytes())?;
        emit(out.join(WEIGHTS_DIR).join(format!("{label}.csv")), text.as_bytes())?;
    }

    let curves = results.join(MSE_CURVES_CSV);
    if curves.is_file() {
        let text = std::fs::read_to_string(&curves).at(&curves)?;
        let svg = mse_curves_svg("test rollout MSE", &parse_curves_csv(&text)?)?;
        emit(out.join("mse_curves.svg"), svg.as_bytes())?;
        emit(out.join(MSE_CURVES_CSV), text.as_bytes())?;
    }
    Ok(outcome)
}
