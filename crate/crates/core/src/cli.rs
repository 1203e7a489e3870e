//! The `sgflow` command-line tool.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analytic::{ellipse_reference, steady_state};
use crate::config::{DensitySpec, EllipseSpec, EnsembleFile, RunConfig, SteadySpec};
use crate::domain::{DomainSpec, PhysicalDomain, PlanarDomain, PlanarDomainSpec};
use crate::dual::{solve_transport_weights_2d, solve_w_star, SolverOptions};
use crate::dynamics::{conservation_report, simulate, ConservationReport, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::measures::{quantize_density, w1_along, w1_distance, QuantizeOptions};
use crate::model::{PhysicalConstants, SeedEnsemble, SimulationConfig, Vec3, WeightVector};
use crate::tessellation::{build_diagram, Backend, BackendKind, PlanarBackend};

const FORMATS: &str = "\
Output files (written to --out, each replaced atomically):
  simulate          trajectory.csv  columns t,i,z1,z2,z3,C1,C2,C3,E,newton_iters; one row per (time, seed)
                    report.json     conservation diagnostics and run summary
                    on failure both get a .partial suffix and hold everything before the failure
  solve-dual        dual.json       {w, G, residual, iters, gap}
  tessellate        diagram.json    cells with seed, weight, mass, volume, centroid and polytope pieces
  tessellate-2d     diagram2d.json  cells with seed, weight, area and polygon rings
  quantize          ensemble.json   {positions, masses}
  w1 A B            w1.json         {distance, coupling_nnz}; A and B are ensemble files
  validate-ellipse  ellipse.csv     columns t,z1,z2,z3,z1_ref,z2_ref,z3_ref,error
  validate-steady   steady.csv      columns n,t,w1

Exit status: 0 success, 1 invalid input or failed validation, 2 solver failure.";

#[derive(Parser, Debug)]
#[command(name = "sgflow", version, about = "Semi-geostrophic flow by semi-discrete optimal transport", after_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for every randomised input.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for cell integration.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the integration scheme.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the seed dynamics.
    Simulate,
    /// Maximise the dual functional for fixed seeds.
    SolveDual,
    /// Build the tessellation at given or optimal weights.
    Tessellate,
    /// Equal-area tessellation of a vertical slice.
    #[command(name = "tessellate-2d")]
    Tessellate2d,
    /// Discretise a density into a seed ensemble.
    Quantize,
    /// Exact W1 distance between two ensemble files.
    W1 { a: PathBuf, b: PathBuf },
    /// Compare a single seed against its elliptic orbit.
    ValidateEllipse,
    /// Check that quantised resting states drift less as N grows.
    ValidateSteady,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Exact,
    Grid,
}

/// Parses `argv` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } | Error::SimulationAborted { .. } => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        // Fails only if a pool already exists, as in repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let ctx = Context { cfg, out: cli.out.clone(), seed: cli.seed, backend: cli.backend };
    match &cli.command {
        Command::Simulate => ctx.simulate(),
        Command::SolveDual => ctx.solve_dual(),
        Command::Tessellate => ctx.tessellate(),
        Command::Tessellate2d => ctx.tessellate_2d(),
        Command::Quantize => ctx.quantize(),
        Command::W1 { a, b } => ctx.w1(a, b),
        Command::ValidateEllipse => ctx.validate_ellipse(),
        Command::ValidateSteady => ctx.validate_steady(),
    }
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    backend: Option<BackendArg>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    status: &'a str,
    error: Option<String>,
    backend: &'a str,
    seeds: usize,
    records: usize,
    final_time: f64,
    newton_iterations: usize,
    constants: PhysicalConstants,
    simulation: &'a SimulationConfig,
    conservation: Option<ConservationReport>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn kind(&self) -> BackendKind {
        match self.backend {
            Some(BackendArg::Grid) => BackendKind::Grid,
            Some(BackendArg::Exact) => BackendKind::Exact,
            None => BackendKind::default(),
        }
    }

    fn physical_domain(&self) -> Result<PhysicalDomain> {
        PhysicalDomain::new(self.cfg.domain()?.clone(), &self.cfg.constants())
    }

    fn backend_for(&self, domain: PhysicalDomain) -> Result<Backend> {
        Backend::new(domain, self.kind(), &self.cfg.simulation)
    }

    fn solver_options(&self) -> SolverOptions {
        let s = &self.cfg.simulation;
        SolverOptions { tol: s.newton_tol, max_iter: s.newton_max_iter }
    }

    fn simulate(&self) -> Result<i32> {
        let b = self.backend_for(self.physical_domain()?)?;
        let e = self.cfg.ensemble(self.seed)?;
        let sim = &self.cfg.simulation;
        let (rec, err) = match simulate(sim, &e, &b) {
            Ok(r) => (r, None),
            Err(f) => (f.record, Some(f.error)),
        };
        let summary = SimulationSummary {
            status: if err.is_none() { "ok" } else { "failed" },
            error: err.as_ref().map(|e| e.to_string()),
            backend: b.tag(),
            seeds: e.len(),
            records: rec.len(),
            final_time: rec.times.last().copied().unwrap_or(0.0),
            newton_iterations: rec.newton_iters.iter().sum(),
            constants: *b.constants(),
            simulation: sim,
            conservation: (!rec.is_empty()).then(|| conservation_report(&rec)),
        };
        let suffix = if err.is_some() { ".partial" } else { "" };
        write_atomic(&self.path(&format!("trajectory.csv{suffix}")), rec.to_csv().as_bytes())?;
        write_json(&self.path(&format!("report.json{suffix}")), &summary)?;
        match err {
            None => Ok(0),
            Some(e) => Err(e),
        }
    }

    fn solve_dual(&self) -> Result<i32> {
        let b = self.backend_for(self.physical_domain()?)?;
        let e = self.cfg.ensemble(self.seed)?;
        let rep = solve_w_star(&b, &e, self.cfg.weights.as_deref(), &self.solver_options())?;
        write_json(
            &self.path("dual.json"),
            &json!({
                "w": rep.w_star,
                "G": rep.g_value,
                "residual": rep.mass_residual,
                "iters": rep.iterations,
                "gap": rep.gap,
            }),
        )?;
        Ok(0)
    }

    fn tessellate(&self) -> Result<i32> {
        let b = self.backend_for(self.physical_domain()?)?;
        let e = self.cfg.ensemble(self.seed)?;
        let w = match &self.cfg.weights {
            Some(w) => WeightVector::new(w.clone())?,
            None => solve_w_star(&b, &e, None, &self.solver_options())?.w_star.into(),
        };
        write_json(&self.path("diagram.json"), &build_diagram(&b, &w, &e)?.export())?;
        Ok(0)
    }

    fn tessellate_2d(&self) -> Result<i32> {
        let k = self.cfg.constants();
        let spec = self.cfg.planar_domain.clone().unwrap_or(PlanarDomainSpec::Rect { lo: [0.0, 0.0], hi: [1.0, 1.0], segments: 1024 });
        let b = PlanarBackend::new(PlanarDomain::new(spec, &k)?);
        let (y, m) = self.cfg.planar_seeds(self.seed)?;
        let (w, cells) = solve_transport_weights_2d(&b, &y, &m, 1e-12, self.cfg.simulation.newton_max_iter)?;
        let total = b.domain().area;
        let err = cells.areas.iter().zip(&m).map(|(a, mi)| (a / total - mi).abs()).fold(0.0, f64::max);
        write_json(&self.path("diagram2d.json"), &json!({ "max_area_error": err, "cells": b.export(&w, &y, &cells) }))?;
        Ok(0)
    }

    fn quantize(&self) -> Result<i32> {
        let q = self.cfg.quantize.as_ref().ok_or_else(|| Error::Config("quantize needs a `quantize` section".into()))?;
        let mut opts = QuantizeOptions::new(q.n);
        opts.eta = q.eta;
        let e = match &q.density {
            DensitySpec::Steady => {
                let s = steady_state(&self.physical_domain()?)?;
                quantize_density(s.lo, s.hi, |x| s.density(x), &opts)?
            }
            other => {
                let (lo, hi) = match (q.lo, q.hi) {
                    (Some(lo), Some(hi)) => (Vec3::from(lo), Vec3::from(hi)),
                    _ => {
                        let d = self.physical_domain()?;
                        (d.x_lo, d.x_hi)
                    }
                };
                quantize_density(lo, hi, |x| other.evaluate(x), &opts)?
            }
        };
        write_json(&self.path("ensemble.json"), &EnsembleFile::from_ensemble(&e))?;
        Ok(0)
    }

    fn w1(&self, a: &Path, b: &Path) -> Result<i32> {
        let read = |p: &Path| -> Result<SeedEnsemble> {
            let f: EnsembleFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            f.to_ensemble()
        };
        let (d, coupling) = w1_distance(&read(a)?, &read(b)?)?;
        let out = json!({ "distance": d, "coupling_nnz": coupling.nnz() });
        println!("{out}");
        write_json(&self.path("w1.json"), &out)?;
        Ok(0)
    }

    fn validate_ellipse(&self) -> Result<i32> {
        let spec = self.cfg.ellipse.clone().unwrap_or(EllipseSpec {
            a: 1.0,
            b: 1.0,
            h: 1.0,
            z_bar: [0.1, 0.0, 10.0],
            periods: 1.0,
            position_tol: 1e-6,
        });
        let k = self.cfg.constants();
        let d = PhysicalDomain::centred_box(spec.a, spec.b, spec.h, &k)?;
        let r = ellipse_reference(&d, Vec3::from(spec.z_bar))?;
        let b = self.backend_for(d)?;
        let sim = SimulationConfig { tau: spec.periods * r.params.period, ..self.cfg.simulation.clone() };
        let e = SeedEnsemble::uniform(vec![r.params.z_bar])?;
        let rec = simulate(&sim, &e, &b).map_err(|f| f.error)?;
        let mut csv = String::from("t,z1,z2,z3,z1_ref,z2_ref,z3_ref,error\n");
        let mut err = 0.0f64;
        for (t, z) in rec.times.iter().zip(&rec.positions) {
            let (z, zr) = (z[0], r.position(*t));
            let e = (z - zr).norm();
            err = err.max(e);
            let _ = writeln!(csv, "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{e:.17e}", z.x, z.y, z.z, zr.x, zr.y, zr.z);
        }
        write_atomic(&self.path("ellipse.csv"), csv.as_bytes())?;
        let rep = conservation_report(&rec);
        let rows = [
            ("orbit error", err, spec.position_tol),
            ("height drift", rep.z3_drift, 1e-12),
            ("energy drift", rep.energy_drift, 1e-9),
        ];
        let p = &r.params;
        println!("period {:.12}  A {:.12}  B {:.12}  omega {:.12}", p.period, p.a_coef, p.b_coef, p.omega);
        println!("validity margins: height {:.6e}  oscillation {:.6e}", p.height_margin, p.oscillation_margin);
        Ok(print_table(&rows))
    }

    fn validate_steady(&self) -> Result<i32> {
        let d = match &self.cfg.domain {
            Some(_) => self.physical_domain()?,
            None => PhysicalDomain::new(DomainSpec::Box { lo: [0.0, 0.0, 1.0], hi: [1.0, 1.0, 1.8] }, &self.cfg.constants())?,
        };
        let sizes = self.cfg.steady.clone().unwrap_or(SteadySpec { sizes: vec![50, 100, 200] }).sizes;
        let s = steady_state(&d)?;
        let b = self.backend_for(d)?;
        let mut csv = String::from("n,t,w1\n");
        let mut sups: Vec<(usize, f64)> = vec![];
        for n in sizes {
            let e = quantize_density(s.lo, s.hi, |x| s.density(x), &QuantizeOptions::new(n))?;
            let rec: TrajectoryRecord = simulate(&self.cfg.simulation, &e, &b).map_err(|f| f.error)?;
            let start = vec![rec.positions[0].clone(); rec.len()];
            let w = w1_along(&rec.positions, e.masses(), &start, e.masses())?;
            for (t, v) in rec.times.iter().zip(&w) {
                let _ = writeln!(csv, "{},{t:.17e},{v:.17e}", e.len());
            }
            sups.push((e.len(), w.iter().cloned().fold(0.0, f64::max)));
        }
        write_atomic(&self.path("steady.csv"), csv.as_bytes())?;
        println!("ell* {:.12}", s.ell_star);
        // Each row passes when the drift is below that of the previous size.
        let rows: Vec<(String, f64, f64)> = sups
            .iter()
            .enumerate()
            .map(|(i, (n, v))| (format!("sup W1 at N={n}"), *v, if i == 0 { f64::INFINITY } else { sups[i - 1].1 }))
            .collect();
        let rows: Vec<(&str, f64, f64)> = rows.iter().map(|(a, b, c)| (a.as_str(), *b, *c)).collect();
        Ok(print_table(&rows))
    }
}

/// Prints `name value bound margin PASS|FAIL` rows; 1 if any row fails.
fn print_table(rows: &[(&str, f64, f64)]) -> i32 {
    let mut ok = true;
    println!("{:<22} {:>12} {:>12} {:>12}  result", "check", "value", "bound", "margin");
    for (name, v, bound) in rows {
        let pass = v <= bound;
        ok &= pass;
        println!("{name:<22} {v:>12.3e} {bound:>12.3e} {:>12.3e}  {}", bound - v, if pass { "PASS" } else { "FAIL" });
    }
    if ok {
        0
    } else {
        1
    }
}
