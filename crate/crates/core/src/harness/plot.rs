//! SVG figures: trajectory panel with the target formation, and MAE per round.

use std::ops::Range;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use super::transcript::Transcript;
use crate::geometry::Vec2;
use crate::metrics::{target_positions, MetricsError, SUCCESS_MARGIN};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("drawing {path}: {message}")]
    Draw { path: PathBuf, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Target formation drawn around the final centroid.
pub fn target_overlay(transcript: &Transcript) -> Result<Vec<Vec2>, PlotError> {
    let spec = transcript
        .header
        .config
        .formation_spec()
        .map_err(|e| PlotError::Draw {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
    let last = transcript.trajectory().pop().unwrap_or_default();
    let anchor = Vec2::centroid(&last).unwrap_or_default();
    Ok(target_positions(&spec, anchor)?)
}

/// Square axis ranges covering every trajectory point and the overlay.
pub fn trajectory_bounds(transcript: &Transcript, overlay: &[Vec2]) -> (Range<f64>, Range<f64>) {
    let points = transcript
        .trajectory()
        .into_iter()
        .flatten()
        .chain(overlay.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if !x0.is_finite() {
        return (-1.0..1.0, -1.0..1.0);
    }
    let half = ((x1 - x0).max(y1 - y0) / 2.0).max(1.0) * 1.08;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    (cx - half..cx + half, cy - half..cy + half)
}

/// Companion path for the MAE figure: `run.svg` becomes `run.mae.svg`.
pub fn mae_path(trajectory_path: &Path) -> PathBuf {
    let stem = trajectory_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot");
    trajectory_path.with_file_name(format!("{stem}.mae.svg"))
}

/// Writes the trajectory figure to `out` and the MAE figure next to it.
pub fn plot_transcript(
    transcript: &Transcript,
    out: &Path,
) -> Result<(PathBuf, PathBuf), PlotError> {
    let mae_out = mae_path(out);
    plot_trajectory(transcript, out)?;
    plot_mae(transcript, &mae_out)?;
    Ok((out.to_path_buf(), mae_out))
}

fn draw_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> PlotError + '_ {
    move |e| PlotError::Draw {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn plot_trajectory(transcript: &Transcript, out: &Path) -> Result<(), PlotError> {
    let err = draw_err(out);
    let overlay = target_overlay(transcript)?;
    let (xr, yr) = trajectory_bounds(transcript, &overlay);
    let trajectory = transcript.trajectory();
    let ids = transcript.agent_ids();
    let config = &transcript.header.config;

    let root = SVGBackend::new(out, (720, 720)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let caption = format!(
        "{} trial {} ({}, d = {})",
        config.name,
        transcript.header.trial,
        config.formation.shape,
        config.formation.desired_distance
    );
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(44)
        .build_cartesian_2d(xr, yr)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("x")
        .y_desc("y")
        .draw()
        .map_err(|e| err(&e))?;

    for (k, id) in ids.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let path: Vec<(f64, f64)> = trajectory
            .iter()
            .map(|round| (round[k].x, round[k].y))
            .collect();
        chart
            .draw_series(LineSeries::new(path.clone(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(format!("agent {id}"))
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
            });
        chart
            .draw_series(path.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| err(&e))?;
        if let Some(&start) = path.first() {
            chart
                .draw_series(std::iter::once(TriangleMarker::new(
                    start,
                    6,
                    color.filled(),
                )))
                .map_err(|e| err(&e))?;
        }
    }
    chart
        .draw_series(
            overlay
                .iter()
                .map(|p| Cross::new((p.x, p.y), 6, BLACK.stroke_width(2))),
        )
        .map_err(|e| err(&e))?
        .label("target formation")
        .legend(|(x, y)| Cross::new((x + 8, y), 5, BLACK.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

pub fn plot_mae(transcript: &Transcript, out: &Path) -> Result<(), PlotError> {
    let err = draw_err(out);
    let series = transcript.metrics();
    let points: Vec<(f64, f64)> = series
        .rounds
        .iter()
        .map(|r| (f64::from(r.round), r.mae))
        .collect();
    let last_round = points.last().map_or(1.0, |p| p.0.max(1.0));
    let top = points
        .iter()
        .map(|p| p.1)
        .fold(SUCCESS_MARGIN * 1.5, f64::max)
        * 1.05;

    let root = SVGBackend::new(out, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!(
                "MAE, {} trial {}",
                transcript.header.config.name, transcript.header.trial
            ),
            ("sans-serif", 18),
        )
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..last_round, 0.0..top)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("round")
        .y_desc("MAE")
        .draw()
        .map_err(|e| err(&e))?;
    chart
        .draw_series(LineSeries::new(points.clone(), BLUE.stroke_width(2)))
        .map_err(|e| err(&e))?
        .label("MAE")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE.stroke_width(2)));
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
        .map_err(|e| err(&e))?;
    chart
        .draw_series(DashedLineSeries::new(
            vec![(0.0, SUCCESS_MARGIN), (last_round, SUCCESS_MARGIN)],
            8,
            5,
            RED.stroke_width(2),
        ))
        .map_err(|e| err(&e))?
        .label(format!("desired MAE ({SUCCESS_MARGIN} margin)"))
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
