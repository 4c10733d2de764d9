//! The `run`, `simulate` and `compare` pipelines.
//!
//! A run directory holds `config.toml` (the effective configuration),
//! `truth.*`, `data.csv`, and one sub-directory per solver (`am/`, `wam/`)
//! with `convergence.csv` and `image.*`. The `wam/` directory also holds a
//! tree manifest for the initial tree and after every expansion, the
//! unclamped image and `clamp.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use wamct::record::{first_reaching, load_csv, save_csv};
use wamct::{
    build_system_matrix, rasterize_phantom, simulate_counts, AlternatingMinimization, AmOptions,
    AttenuationImage, ConvergenceRecord, ImageGrid, ScanGeometry, SystemMatrix, TransmissionData,
    WaveletAm, WaveletCoefficients,
};

use crate::config::{ImageFormat, RunConfig};
use crate::image_io::{read_raw, write_pgm, write_raw, Volume};

#[derive(Debug, Serialize, Deserialize)]
struct DataRow {
    ray: usize,
    incident: f64,
    counts: f64,
}

/// Geometry, system matrix, truth and simulated data for one config.
pub struct Problem {
    pub geometry: ScanGeometry,
    pub h: SystemMatrix,
    pub truth: AttenuationImage,
    pub data: TransmissionData,
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let geometry = config.scan_geometry()?;
        let h = build_system_matrix(&geometry).context("building the system matrix")?;
        let truth = rasterize_phantom(&config.phantom_spec(), &geometry.grid).context("phantom")?;
        let data = simulate_counts(&truth, &h, &config.simulation_spec()).context("simulation")?;
        Ok(Problem {
            geometry,
            h,
            truth,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub am_final: Option<f64>,
    pub wam_final: Option<f64>,
}

fn volume(grid: &ImageGrid, values: Vec<f64>) -> Volume {
    Volume {
        nx: grid.nx,
        ny: grid.ny,
        nz: grid.nz,
        values,
    }
}

pub fn write_image(dir: &Path, stem: &str, v: &Volume, formats: &[ImageFormat]) -> Result<()> {
    if formats.contains(&ImageFormat::Raw) {
        write_raw(&dir.join(format!("{stem}.raw")), v)?;
    }
    if formats.contains(&ImageFormat::Pgm) {
        for z in 0..v.nz {
            write_pgm(
                &dir.join(format!("{stem}_z{z}.pgm")),
                v.slice(z),
                v.nx,
                v.ny,
            )?;
        }
    }
    Ok(())
}

fn write_inputs(config: &RunConfig, problem: &Problem, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), config.to_toml()?)?;
    let truth = volume(&problem.geometry.grid, problem.truth.values.clone());
    // the truth is always kept losslessly so runs can be compared against it
    let mut formats = config.output.formats.clone();
    if !formats.contains(&ImageFormat::Raw) {
        formats.push(ImageFormat::Raw);
    }
    write_image(out, "truth", &truth, &formats)?;
    let mut w = csv::Writer::from_path(out.join("data.csv"))?;
    for (ray, (&incident, &counts)) in problem
        .data
        .incident()
        .iter()
        .zip(problem.data.counts())
        .enumerate()
    {
        w.serialize(DataRow {
            ray,
            incident,
            counts,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Build the problem and write the configuration, truth and data only.
pub fn simulate(config: &RunConfig) -> Result<PathBuf> {
    let problem = Problem::build(config)?;
    let out = config.output.directory.clone();
    write_inputs(config, &problem, &out)?;
    Ok(out)
}

pub fn run_experiment(config: &RunConfig) -> Result<RunSummary> {
    let problem = Problem::build(config)?;
    let out = config.output.directory.clone();
    write_inputs(config, &problem, &out)?;
    let grid = problem.geometry.grid;
    let formats = &config.output.formats;
    let mut summary = RunSummary {
        directory: out.clone(),
        am_final: None,
        wam_final: None,
    };

    if config.solver.algorithm.runs_am() {
        let dir = out.join("am");
        std::fs::create_dir_all(&dir)?;
        let am = AlternatingMinimization::new(&problem.h, &problem.data, AmOptions::default())?;
        let mut state = am.init_state(&vec![config.solver.init.max(0.0); problem.h.cols()])?;
        let result = am.run(
            &mut state,
            config.solver.am_iterations,
            config.output.log_every,
        );
        let records = result
            .with_context(|| format!("AM solver failed at iteration {}", state.iteration + 1))?;
        save_csv(&records, dir.join("convergence.csv"))?;
        write_image(&dir, "image", &volume(&grid, state.mu.clone()), formats)?;
        summary.am_final = records.last().map(|r| r.objective);
    }

    if config.solver.algorithm.runs_wam() {
        let dir = out.join("wam");
        std::fs::create_dir_all(&dir)?;
        let wam = WaveletAm::with_column_cap(
            &problem.h,
            &problem.data,
            grid,
            config.solver.levels,
            config.solver.column_cache,
        )?;
        let init = (config.solver.init != 0.0)
            .then(|| {
                WaveletCoefficients::from_image(
                    *wam.layout(),
                    &vec![config.solver.init; grid.len()],
                )
            })
            .transpose()?;
        let mut state = wam.init_state(init)?;
        std::fs::write(dir.join("tree_iter0000.txt"), state.tree.to_manifest())?;
        let result = wam.run(
            &mut state,
            config.solver.wam_iterations,
            &config.schedule(),
            config.output.log_every,
        );
        let run = result.with_context(|| {
            format!(
                "wavelet AM solver failed at iteration {}",
                state.iteration + 1
            )
        })?;
        save_csv(&run.records, dir.join("convergence.csv"))?;
        for e in &run.expansions {
            std::fs::write(
                dir.join(format!("tree_iter{:04}.txt", e.iteration)),
                e.tree.to_manifest(),
            )?;
        }
        let raw = wam.raw_image(&state)?;
        let (image, report) = wam.final_image(&state)?;
        write_image(&dir, "image", &volume(&grid, image.values), formats)?;
        write_raw(&dir.join("image_unclamped.raw"), &volume(&grid, raw.values))?;
        std::fs::write(
            dir.join("clamp.txt"),
            format!(
                "clipped_voxels = {}\nmax_clipped = {:e}\ntotal_clipped = {:e}\nactive_coefficients = {}\ncoefficient_updates = {}\n",
                report.clipped,
                report.max,
                report.total,
                state.active().len(),
                state.counters.coefficient_updates
            ),
        )?;
        summary.wam_final = run.records.last().map(|r| r.objective);
    }
    Ok(summary)
}

/// First logged iteration and time at which a run reaches an objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub iter: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub final_a: f64,
    pub final_b: f64,
    /// Lower of the two final objectives.
    pub target: f64,
    pub crossing_a: Option<Crossing>,
    pub crossing_b: Option<Crossing>,
    /// Higher of the two final objectives.
    pub upper_target: f64,
    pub upper_crossing_a: Option<Crossing>,
    pub upper_crossing_b: Option<Crossing>,
    pub max_abs_difference: f64,
    pub rmse_a: Option<f64>,
    pub rmse_b: Option<f64>,
}

fn crossing(records: &[ConvergenceRecord], target: f64) -> Option<Crossing> {
    first_reaching(records, target).map(|r| Crossing {
        iter: r.iter,
        elapsed_s: r.elapsed_s,
    })
}

fn find_truth(dir: &Path) -> Option<PathBuf> {
    [dir.join("truth.raw"), dir.join("..").join("truth.raw")]
        .into_iter()
        .find(|p| p.is_file())
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

fn fmt_crossing(c: Option<Crossing>) -> String {
    match c {
        Some(c) => format!("iter {} at {:.6} s", c.iter, c.elapsed_s),
        None => "never".into(),
    }
}

/// Compare two solver directories (each with `convergence.csv` and
/// `image.raw`) and write `report.txt` plus the difference image `b - a`.
pub fn compare_runs(dir_a: &Path, dir_b: &Path, out: &Path) -> Result<CompareReport> {
    let load = |dir: &Path| -> Result<(Vec<ConvergenceRecord>, Volume)> {
        let records = load_csv(dir.join("convergence.csv"))
            .with_context(|| format!("reading {}", dir.join("convergence.csv").display()))?;
        ensure!(
            !records.is_empty(),
            "{} has an empty convergence log",
            dir.display()
        );
        Ok((records, read_raw(&dir.join("image.raw"))?))
    };
    let (log_a, img_a) = load(dir_a)?;
    let (log_b, img_b) = load(dir_b)?;
    ensure!(
        img_a.same_shape(&img_b),
        "image dimensions differ: {}x{}x{} vs {}x{}x{}",
        img_a.nx,
        img_a.ny,
        img_a.nz,
        img_b.nx,
        img_b.ny,
        img_b.nz
    );

    let final_a = log_a.last().unwrap().objective;
    let final_b = log_b.last().unwrap().objective;
    let target = final_a.min(final_b);
    let upper_target = final_a.max(final_b);
    let difference: Vec<f64> = img_b
        .values
        .iter()
        .zip(&img_a.values)
        .map(|(b, a)| b - a)
        .collect();
    let max_abs_difference = difference.iter().fold(0.0f64, |m, d| m.max(d.abs()));

    let truth_for = |dir: &Path, img: &Volume| -> Result<Option<f64>> {
        match find_truth(dir) {
            Some(p) => {
                let t = read_raw(&p)?;
                ensure!(
                    t.same_shape(img),
                    "{} does not match the image dimensions",
                    p.display()
                );
                Ok(Some(rmse(&img.values, &t.values)))
            }
            None => Ok(None),
        }
    };
    let report = CompareReport {
        final_a,
        final_b,
        target,
        crossing_a: crossing(&log_a, target),
        crossing_b: crossing(&log_b, target),
        upper_target,
        upper_crossing_a: crossing(&log_a, upper_target),
        upper_crossing_b: crossing(&log_b, upper_target),
        max_abs_difference,
        rmse_a: truth_for(dir_a, &img_a)?,
        rmse_b: truth_for(dir_b, &img_b)?,
    };

    std::fs::create_dir_all(out)?;
    let diff = Volume {
        values: difference,
        ..img_a
    };
    write_image(
        out,
        "difference",
        &diff,
        &[ImageFormat::Raw, ImageFormat::Pgm],
    )?;
    let mut text = String::new();
    writeln!(text, "run_a = {}", dir_a.display())?;
    writeln!(text, "run_b = {}", dir_b.display())?;
    writeln!(text, "final_objective_a = {final_a:e}")?;
    writeln!(text, "final_objective_b = {final_b:e}")?;
    writeln!(text, "lower_final_objective = {target:e}")?;
    writeln!(
        text,
        "a_reaches_lower = {}",
        fmt_crossing(report.crossing_a)
    )?;
    writeln!(
        text,
        "b_reaches_lower = {}",
        fmt_crossing(report.crossing_b)
    )?;
    writeln!(text, "higher_final_objective = {upper_target:e}")?;
    writeln!(
        text,
        "a_reaches_higher = {}",
        fmt_crossing(report.upper_crossing_a)
    )?;
    writeln!(
        text,
        "b_reaches_higher = {}",
        fmt_crossing(report.upper_crossing_b)
    )?;
    writeln!(text, "max_abs_difference = {max_abs_difference:e}")?;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:e}"));
    writeln!(text, "rmse_a = {}", opt(report.rmse_a))?;
    writeln!(text, "rmse_b = {}", opt(report.rmse_b))?;
    std::fs::write(out.join("report.txt"), text)?;
    Ok(report)
}
