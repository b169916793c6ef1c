use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use vqr_core::convex::{
    check_relaxed_spec, contact_curve, default_contact_tol, default_mass_floor, write_contact_csv,
};
use vqr_core::measures::{center, load_sample, make_grid, save_sample, DiscreteSample, UGrid};
use vqr_core::qr1d::{
    conditional_quantile_curves, equivalence_report, kb_scan, quasi_spec_check, uqr_report, LevelGrid,
};
use vqr_core::solution::{check_solution, Qr1dFile, SolutionFile, TransportFile};
use vqr_core::synthetic::{gen_synthetic, SyntheticSpec};
use vqr_core::transport::barycentric_map;
use vqr_core::vqr::{objective_scale, solve_vqr_entropic, solve_vqr_exact, Backend, VqrSolution};
use vqr_core::{Result, VqrError};

use crate::config::{Command, RunConfig};

/// What a command produced, as reported on stdout.
#[derive(Debug, Serialize)]
pub struct Outcome {
    pub command: String,
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.command != Command::Check {
        std::fs::create_dir_all(&cfg.output)?;
    }
    match cfg.command {
        Command::Vq => run_vq(cfg),
        Command::Vqr => run_vqr(cfg),
        Command::Qr1d => run_qr1d(cfg),
        Command::Equiv => run_equiv(cfg),
        Command::Check => run_check(cfg),
        Command::Gen => run_gen(cfg),
    }
}

fn input(cfg: &RunConfig) -> Result<&Path> {
    cfg.input
        .as_deref()
        .ok_or_else(|| VqrError::Validation("--input is required".into()))
}

fn load_centered(cfg: &RunConfig) -> Result<DiscreteSample> {
    let raw = load_sample(input(cfg)?, None)?;
    if !raw.is_centered() {
        info!("centering covariates");
    }
    Ok(center(&raw))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn names(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}

fn solve(cfg: &RunConfig, sample: &DiscreteSample, grid: &UGrid) -> Result<VqrSolution> {
    let tol = cfg.solver_tol();
    match cfg.backend {
        Backend::Exact => solve_vqr_exact(sample, grid, tol),
        Backend::Entropic => {
            let eps = cfg
                .epsilon
                .unwrap_or_else(|| 0.01 * objective_scale(sample, grid).max(f64::MIN_POSITIVE));
            info!("entropic backend with epsilon {eps}");
            solve_vqr_entropic(sample, grid, eps, cfg.max_iter, tol)
        }
    }
}

fn run_vq(cfg: &RunConfig) -> Result<Outcome> {
    let sample = load_sample(input(cfg)?, None)?.with_covariates(&[]);
    let grid = make_grid(sample.dim(), cfg.grid_size)?;
    let sol = solve(cfg, &sample, &grid)?;
    let solution = cfg.output.join("solution.json");
    SolutionFile::Vq(TransportFile::new(&sol, &grid, &sample, cfg.solver_tol())).save(&solution)?;

    let map = barycentric_map(&sol.coupling, &grid, &sample);
    let curves = cfg.output.join("curves.csv");
    let header: Vec<String> = names("u", grid.dim()).chain(names("q", sample.dim())).collect();
    write_rows(
        &curves,
        &header,
        (0..grid.m()).map(|i| [grid.level(i), map.row(i)].concat()),
    )?;
    Ok(Outcome {
        command: "vq".into(),
        pass: true,
        files: vec![solution, curves],
        summary: serde_json::json!({
            "value": sol.value,
            "backend": sol.backend,
            "residual": sol.residuals.max(),
        }),
    })
}

fn run_vqr(cfg: &RunConfig) -> Result<Outcome> {
    let sample = load_centered(cfg)?;
    let grid = make_grid(sample.dim(), cfg.grid_size)?;
    let sol = solve(cfg, &sample, &grid)?;
    let mut files = Vec::new();

    let solution = cfg.output.join("solution.json");
    SolutionFile::Vqr(TransportFile::new(&sol, &grid, &sample, cfg.solver_tol())).save(&solution)?;
    files.push(solution);

    let report = check_relaxed_spec(
        &sol,
        &sample,
        &grid,
        default_contact_tol(sol.value),
        default_mass_floor(&grid, &sample),
    )?;
    if !report.pass && sol.backend == Backend::Exact {
        warn!("contact conditions fail on {} support atoms", report.violations().count());
    }
    let contact_json = cfg.output.join("contact.json");
    write_json(&contact_json, &report)?;
    files.push(contact_json);

    let queries: Vec<Vec<f64>> = if cfg.x_query.is_empty() {
        vec![vec![0.0; sample.n_covariates()]]
    } else {
        cfg.x_query
            .iter()
            .map(|x| x.iter().zip(sample.x_mean()).map(|(v, m)| v - m).collect())
            .collect()
    };
    let contacts = queries
        .iter()
        .map(|x| contact_curve(&sol, &sample, &grid, x))
        .collect::<Result<Vec<_>>>()?;
    let contact_csv = cfg.output.join("contact.csv");
    write_contact_csv(&contact_csv, &contacts)?;
    files.push(contact_csv);

    if grid.dim() == 1 && grid.m() >= 2 {
        let curves = conditional_quantile_curves(&sol, &sample, &grid, &queries)?;
        for c in curves.iter().filter(|c| !c.decreasing_at.is_empty()) {
            warn!("quantile curve at x = {:?} decreases at {} levels", c.x, c.decreasing_at.len());
        }
        let path = cfg.output.join("curves.csv");
        let header: Vec<String> = names("x", sample.n_covariates())
            .chain(["t".to_string(), "q".to_string()])
            .collect();
        let x_mean = sample.x_mean();
        let rows = curves.iter().flat_map(|c| {
            c.t.iter().zip(&c.q).map(move |(t, q)| {
                let mut row: Vec<f64> = c.x.iter().zip(x_mean).map(|(v, m)| v + m).collect();
                row.extend([*t, *q]);
                row
            })
        });
        write_rows(&path, &header, rows)?;
        files.push(path);
    }
    Ok(Outcome {
        command: "vqr".into(),
        pass: true,
        files,
        summary: serde_json::json!({
            "value": sol.value,
            "backend": sol.backend,
            "residuals": sol.residuals,
            "contact_pass": report.pass,
            "max_envelope_gap": report.max_envelope_gap,
            "max_young_gap": report.max_young_gap,
        }),
    })
}

fn run_qr1d(cfg: &RunConfig) -> Result<Outcome> {
    let sample = load_centered(cfg)?;
    let levels = match &cfg.levels {
        Some(t) => LevelGrid::from_levels(t.clone())?,
        None => LevelGrid::midpoint(cfg.grid_size)?,
    };
    let tol = cfg.solver_tol();
    let model = kb_scan(&sample, &levels.t, tol)?;
    let quasi_spec = quasi_spec_check(&model, &sample);
    if !quasi_spec.pass {
        warn!("quasi-specification fails at {} (level, atom) pairs", quasi_spec.violations.len());
    }
    let uqr = uqr_report(&model, &sample, levels.len())?;

    let curves = cfg.output.join("curves.csv");
    let header: Vec<String> = ["t".to_string(), "alpha".to_string()]
        .into_iter()
        .chain(names("beta", sample.n_covariates()))
        .collect();
    write_rows(
        &curves,
        &header,
        (0..model.t.len()).map(|k| [&[model.t[k], model.alpha[k]][..], model.beta.row(k)].concat()),
    )?;
    let summary = serde_json::json!({
        "levels": model.t.len(),
        "quasi_spec": quasi_spec.pass,
        "ks_distance": uqr.ks_distance,
        "ks_bound": uqr.ks_bound,
        "uniform": uqr.uniform,
        "max_bin_residual": uqr.max_bin_residual,
    });
    let solution = cfg.output.join("solution.json");
    SolutionFile::Qr1d(Qr1dFile {
        tol,
        model,
        quasi_spec,
        uqr,
        sample,
    })
    .save(&solution)?;
    Ok(Outcome {
        command: "qr1d".into(),
        pass: true,
        files: vec![solution, curves],
        summary,
    })
}

fn run_equiv(cfg: &RunConfig) -> Result<Outcome> {
    let sample = load_centered(cfg)?;
    let report = equivalence_report(&sample, cfg.grid_size, cfg.solver_tol())?;
    if !report.pass {
        warn!("transport and monotone values differ by {}", report.gap);
    }
    let path = cfg.output.join("equiv.json");
    write_json(&path, &report)?;
    Ok(Outcome {
        command: "equiv".into(),
        pass: report.pass,
        files: vec![path],
        summary: serde_json::to_value(&report)?,
    })
}

fn run_check(cfg: &RunConfig) -> Result<Outcome> {
    let file = SolutionFile::load(input(cfg)?)?;
    let report = check_solution(&file, cfg.tol)?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        warn!("{} = {} exceeds {}", c.name, c.value, c.bound);
    }
    Ok(Outcome {
        command: "check".into(),
        pass: report.pass,
        files: Vec::new(),
        summary: serde_json::to_value(&report)?,
    })
}

fn run_gen(cfg: &RunConfig) -> Result<Outcome> {
    let spec = SyntheticSpec::preset(&cfg.preset, cfg.n, cfg.seed)?;
    let (sample, meta) = gen_synthetic(&spec)?;
    let data = cfg.output.join("data.csv");
    save_sample(&data, &sample)?;
    let generator = cfg.output.join("generator.json");
    write_json(&generator, &meta)?;
    Ok(Outcome {
        command: "gen".into(),
        pass: true,
        files: vec![data, generator],
        summary: serde_json::json!({
            "n": sample.n(),
            "preset": cfg.preset,
            "seed": cfg.seed,
            "stratified": meta.stratified,
        }),
    })
}
