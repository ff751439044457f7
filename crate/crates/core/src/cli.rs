//! Experiment dispatch behind the command-line interface.

use std::path::PathBuf;

use serde::Serialize;

use crate::bounds::{localization_bound, reduce_referenced, snr_bound, BoundReport};
use crate::config::{Experiment, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    noise_limit_for_bound, run_far_field_demo, run_snr_sweep, run_spatial_hit_rate, run_tracking,
    Setup, TrackingMethod, TrackingScenario,
};
use crate::geometry::Point;
use crate::io::{fmt, grid_csv, reconstruction_csv, trajectory_csv, CsvTable, GeometryDocument, Manifest, OutputDir, ARTIFACT_VERSION};
use crate::linalg::Covariance;
use crate::measurement::{noise_sigma, snr_of, to_decibels};

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub directory: PathBuf,
    pub files: Vec<String>,
    /// Text for standard output (the bound report).
    pub stdout: Option<String>,
}

/// Runs the configured experiment on a pool of `config.workers` threads.
pub fn dispatch(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let name = config.experiment.name();
    pool.install(|| run(config)).map_err(|e| e.context(format!("{name} failed")))
}

fn run(config: &RunConfig) -> Result<Outcome> {
    let mut out = OutputDir::prepare(&config.output_dir, config.experiment.name(), config.overwrite)?;
    let setup = Setup::build(&config.geometry)?;
    log::info!(
        "forward grid {} nodes, inverse grid {} nodes, {} sensors",
        setup.forward.node_count(),
        setup.inverse.node_count(),
        setup.inverse.sensor_count()
    );
    let prior = config.model.prior.covariance(setup.inverse.node_count())?;
    let stdout = match config.experiment {
        Experiment::Demo => demo(config, &setup, &prior, &mut out)?,
        Experiment::Track => track(config, &setup, &prior, &mut out)?,
        Experiment::Hitmap => hitmap(config, &setup, &prior, &mut out)?,
        Experiment::SnrSweep => sweep(config, &setup, &prior, &mut out)?,
        Experiment::Bound => bound(config, &setup, &prior, &mut out)?,
        Experiment::ForwardDump => forward_dump(&setup, &mut out)?,
    };
    let mut files = out.files().to_vec();
    files.push("manifest.json".into());
    let manifest = Manifest {
        experiment: config.experiment.name(),
        version: ARTIFACT_VERSION,
        seed: config.seed,
        config,
        files: files.clone(),
    };
    out.write_json("manifest.json", &manifest)?;
    Ok(Outcome {
        directory: out.path().to_path_buf(),
        files,
        stdout,
    })
}

fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

fn pct_label(p: f64) -> String {
    format!("{}pct", fmt(p))
}

fn demo(config: &RunConfig, setup: &Setup, prior: &Covariance, out: &mut OutputDir) -> Result<Option<String>> {
    let r = run_far_field_demo(setup, &config.model, prior, point(config.demo.source), config.seed)?;
    let g = setup.inverse.geometry();
    out.write_csv("bmne.csv", &reconstruction_csv(g, &r.noisy.bmne.normalized()))?;
    out.write_csv("sloreta.csv", &reconstruction_csv(g, &r.noisy.sloreta.normalized()))?;
    out.write_csv("bmne_noiseless.csv", &reconstruction_csv(g, &r.noiseless.bmne.normalized()))?;
    out.write_csv("sloreta_noiseless.csv", &reconstruction_csv(g, &r.noiseless.sloreta.normalized()))?;
    out.write_json("summary.json", &r.summary(setup))?;
    Ok(None)
}

fn track(config: &RunConfig, setup: &Setup, prior: &Covariance, out: &mut OutputDir) -> Result<Option<String>> {
    let scenario = TrackingScenario::from_config(&config.tracking, config.model.noise_percent)?;
    let r = run_tracking(
        setup,
        &scenario,
        prior,
        config.tracking.process_noise_ratio,
        config.seed,
        &TrackingMethod::ALL,
    )?;
    let g = setup.inverse.geometry();

    let mut truth = CsvTable::new(&["t", "far", "near"]);
    for (i, t) in r.times.iter().enumerate() {
        truth.row(&[fmt(*t), fmt(r.true_far[i]), fmt(r.true_near[i])]);
    }
    out.write_csv("true_tracks.csv", &truth)?;

    let mut loc = CsvTable::new(&["method", "step", "t", "argmax", "argmax_x", "argmax_y", "argmin", "argmin_x", "argmin_y"]);
    let mut tracks = CsvTable::new(&["method", "t", "near", "far"]);
    for m in &r.methods {
        for l in &m.localizations {
            let (a, b) = (g.nodes()[l.argmax], g.nodes()[l.argmin]);
            loc.row(&[
                m.method.name().into(),
                l.step.to_string(),
                fmt(l.t),
                l.argmax.to_string(),
                fmt(a.x),
                fmt(a.y),
                l.argmin.to_string(),
                fmt(b.x),
                fmt(b.y),
            ]);
        }
        for (i, t) in r.times.iter().enumerate() {
            tracks.row(&[m.method.name().into(), fmt(*t), fmt(m.near_track[i]), fmt(m.far_track[i])]);
        }
        out.write_csv(&format!("trajectory_{}.csv", m.method.name()), &trajectory_csv(&r.times, &m.states))?;
    }
    out.write_csv("localizations.csv", &loc)?;
    out.write_csv("tracks.csv", &tracks)?;
    out.write_json("summary.json", &r)?;
    Ok(None)
}

#[derive(Serialize)]
struct HitmapSummary {
    noise_percent: f64,
    samples: usize,
    nodes: usize,
    nodes_above_0_9: usize,
    fraction_above_0_9: f64,
    bound_violations: Vec<usize>,
}

fn hitmap(config: &RunConfig, setup: &Setup, prior: &Covariance, out: &mut OutputDir) -> Result<Option<String>> {
    let mut summaries = Vec::new();
    for &p in &config.hitmap.noise_levels {
        let map = run_spatial_hit_rate(
            setup,
            prior,
            p,
            config.model.min_model_noise_percent,
            config.hitmap.samples,
            config.seed,
        )?;
        let rates = map.rates();
        let bounds = map.bounds();
        let hits: Vec<f64> = map.nodes.iter().map(|t| t.hits as f64).collect();
        let near: Vec<f64> = map.nodes.iter().map(|t| t.hits_within_mesh as f64).collect();
        let hw: Vec<f64> = map.nodes.iter().map(|t| t.wilson_half_width).collect();
        let snrb: Vec<f64> = map.nodes.iter().map(|t| t.snr_bound).collect();
        let theta: Vec<f64> = map.nodes.iter().map(|t| t.theta).collect();
        let table = grid_csv(
            setup.inverse.geometry(),
            &[
                ("hits", &hits),
                ("hits_within_mesh", &near),
                ("rate", &rates),
                ("wilson_half_width", &hw),
                ("bound", &bounds),
                ("snr_bound", &snrb),
                ("theta", &theta),
            ],
        );
        out.write_csv(&format!("hitmap_{}.csv", pct_label(p)), &table)?;
        summaries.push(HitmapSummary {
            noise_percent: p,
            samples: map.samples,
            nodes: map.nodes.len(),
            nodes_above_0_9: map.nodes_above(0.9),
            fraction_above_0_9: map.fraction_above(0.9),
            bound_violations: map.bound_violations(),
        });
    }
    out.write_json("summary.json", &summaries)?;
    Ok(None)
}

fn sweep(config: &RunConfig, setup: &Setup, prior: &Covariance, out: &mut OutputDir) -> Result<Option<String>> {
    let s = &config.snr_sweep;
    let points: Vec<Point> = s.points.iter().map(|p| point(*p)).collect();
    let r = run_snr_sweep(
        setup,
        prior,
        &points,
        &s.noise_grid,
        config.model.min_model_noise_percent,
        s.samples,
        config.seed,
        s.divergence_threshold,
    )?;
    let mut t = CsvTable::new(&["point_x", "point_y", "node", "noise_percent", "snr_db", "rate", "wilson_half_width", "bound", "snr_bound"]);
    for c in &r.curves {
        for tr in &c.trials {
            t.row(&[
                fmt(c.point[0]),
                fmt(c.point[1]),
                c.node.to_string(),
                fmt(tr.noise_percent),
                fmt(to_decibels(tr.snr)),
                fmt(tr.rate),
                fmt(tr.wilson_half_width),
                fmt(tr.bound),
                fmt(tr.snr_bound),
            ]);
        }
    }
    out.write_csv("curves.csv", &t)?;
    let limit = noise_limit_for_bound(&setup.inverse, prior, s.bound_target)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        divergence_points: Vec<Option<f64>>,
        divergence_strictly_decreasing: bool,
        bound_noise_limit: &'a crate::experiments::NoiseLimit,
        curves: &'a [crate::experiments::SweepCurve],
    }
    out.write_json(
        "summary.json",
        &Summary {
            divergence_points: r.divergence_points(),
            divergence_strictly_decreasing: r.divergence_strictly_decreasing(),
            bound_noise_limit: &limit,
            curves: &r.curves,
        },
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct BoundOutput {
    node: usize,
    node_position: [f64; 2],
    noise_percent: f64,
    sigma: f64,
    snr_db: f64,
    eigen: BoundReport,
    snr: BoundReport,
}

fn bound(config: &RunConfig, setup: &Setup, prior: &Covariance, out: &mut OutputDir) -> Result<Option<String>> {
    let l = &setup.inverse;
    let k = l.geometry().nearest_node(&point(config.bound.node_at));
    let p = config.model.noise_percent;
    let sigma = noise_sigma(&l.column(k), p)?;
    if sigma == 0.0 {
        return Err(Error::InfiniteSnr);
    }
    let scaled = prior.sqrt()?.right_multiply(l.entries());
    let (reduced, c) = reduce_referenced(&scaled, &Covariance::scaled(l.sensor_count(), sigma * sigma))?;
    let eigen = localization_bound(k, &reduced, &c, None)?;
    let snr = reduced.column(k).norm_squared() / (sigma * sigma);
    let report = BoundOutput {
        node: k,
        node_position: [l.geometry().nodes()[k].x, l.geometry().nodes()[k].y],
        noise_percent: p,
        sigma,
        snr_db: to_decibels(snr_of(l, k, p)?),
        snr: snr_bound(k, &reduced, &c, snr)?,
        eigen,
    };
    out.write_json("report.json", &report)?;
    Ok(Some(serde_json::to_string_pretty(&report)?))
}

fn forward_dump(setup: &Setup, out: &mut OutputDir) -> Result<Option<String>> {
    out.write_json("forward_geometry.json", &GeometryDocument::from_system(&setup.forward))?;
    out.write_json("inverse_geometry.json", &GeometryDocument::from_system(&setup.inverse))?;
    Ok(None)
}
