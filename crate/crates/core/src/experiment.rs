//! Command runner behind the `tblab` binary: every subcommand writes its
//! CSV artifacts plus a manifest into the configured output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::basis::Reduction;
use crate::config::{ExperimentConfig, InitialKind, RegimeKind};
use crate::dnls;
use crate::error::Error;
use crate::gpe::{self, conservation_table};
use crate::harness::{self, paired_run, perturbation_decay, PairedRun, PairedRunConfig, SweepResult};
use crate::io::{fmt_f64, Table};
use crate::model::{LatticeModel, SemiclassicalParams};
use crate::spectral::compute_band_data;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bands,
    Basis,
    Simulate,
    Diagnose,
    SweepModel1,
    SweepModel2,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Basis => "basis",
            Command::Simulate => "simulate",
            Command::Diagnose => "diagnose",
            Command::SweepModel1 => "sweep-model1",
            Command::SweepModel2 => "sweep-model2",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const ACCEPTANCE: i32 = 3;
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Config(_) | Error::InvalidModel(_) | Error::InvalidParams(_) | Error::Resolution { .. } => exit::CONFIG,
            _ => exit::NUMERICAL,
        }
    }
}

fn stage<T>(name: &'static str, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn accepted(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.accepted() {
            exit::SUCCESS
        } else {
            exit::ACCEPTANCE
        }
    }
}

/// Collects artifacts; all file writes go through here.
struct Writer {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, table: &Table) -> Result<(), StageError> {
        self.text(name, &table.to_csv())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), StageError> {
        let path = self.dir.join(name);
        stage("write", fs::write(&path, text).map_err(Error::from))?;
        self.artifacts.push(path);
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `command`, then writes `manifest.txt` (also when the run fails).
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Outcome, StageError> {
    let start = Instant::now();
    let dir = config.output_dir.clone();
    stage("output", fs::create_dir_all(&dir).map_err(Error::from))?;
    let mut writer = Writer { dir: dir.clone(), artifacts: Vec::new() };
    let mut checks = Vec::new();
    let result = writer
        .text("config.txt", &config.to_text())
        .and_then(|_| dispatch(command, config, &mut writer, &mut checks));
    let status = match &result {
        Ok(()) if checks.iter().all(|c| c.passed) => "OK".to_string(),
        Ok(()) => "ACCEPTANCE_FAILED".to_string(),
        Err(e) => format!("FAILED {e}"),
    };
    write_manifest(&dir, command, config, &writer.artifacts, &checks, &status, start.elapsed().as_secs_f64())?;
    result.map(|_| Outcome { artifacts: writer.artifacts, checks })
}

fn write_manifest(
    dir: &Path,
    command: Command,
    config: &ExperimentConfig,
    artifacts: &[PathBuf],
    checks: &[Check],
    status: &str,
    wall: f64,
) -> Result<(), StageError> {
    let mut text = String::new();
    text.push_str(&format!("command = {}\n", command.name()));
    text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("config_sha256 = {}\n", sha256_hex(config.to_text().as_bytes())));
    text.push_str(&format!("wall_time_s = {wall:.3}\n"));
    text.push_str(&format!("status = {status}\n"));
    for c in checks {
        text.push_str(&format!(
            "check = {} {} {}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    for a in artifacts {
        let bytes = stage("manifest", fs::read(a).map_err(Error::from))?;
        let name = a.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        text.push_str(&format!("artifact = {name} {}\n", sha256_hex(&bytes)));
    }
    stage("manifest", fs::write(dir.join("manifest.txt"), text).map_err(Error::from))
}

fn dispatch(
    command: Command,
    config: &ExperimentConfig,
    writer: &mut Writer,
    checks: &mut Vec<Check>,
) -> Result<(), StageError> {
    let model = stage("model", config.model())?;
    match command {
        Command::Bands => bands(config, &model, writer),
        Command::Basis => basis(config, &model, writer),
        Command::Simulate => simulate(config, &model, writer, false),
        Command::Diagnose => simulate(config, &model, writer, true),
        Command::SweepModel1 => {
            let r = stage("sweep", harness::run_model1_sweep(&model, &config.sweep()))?;
            write_sweep(&r, writer)?;
            checks.extend(model1_checks(&r));
            Ok(())
        }
        Command::SweepModel2 => {
            let r = stage("sweep", harness::run_model2_sweep(&model, &config.sweep()))?;
            write_sweep(&r, writer)?;
            checks.extend(model2_checks(&r));
            Ok(())
        }
    }
}

fn bands(config: &ExperimentConfig, model: &LatticeModel, writer: &mut Writer) -> Result<(), StageError> {
    let params = stage("params", config.params(config.hbar))?.linear();
    let b = stage("bands", compute_band_data(model, &params, 2))?;
    let mut t = Table::new(&["k", "E1", "E2"]);
    for (j, k) in b.quasimomenta.iter().enumerate() {
        t.push_floats(&[*k, b.bands[0].energies[j], b.bands[1].energies[j]]);
    }
    writer.write("bands.csv", &t)?;
    let mut e = Table::new(&["E1_bottom", "E1_top", "E2_bottom", "gap"]);
    e.push_floats(&[b.e1_bottom(), b.e1_top(), b.e2_bottom(), b.gap()]);
    writer.write("band_edges.csv", &e)
}

fn basis(config: &ExperimentConfig, model: &LatticeModel, writer: &mut Writer) -> Result<(), StageError> {
    let params = stage("params", config.params(config.hbar))?;
    let r = stage("basis", Reduction::build(model, &params))?;
    let c = &r.coefficients;
    let mut head = Table::new(&["hbar", "lambda1", "beta", "C1", "S0", "gap", "residual_norm", "gram_condition"]);
    head.push_floats(&[params.hbar, c.lambda1, c.beta, c.c1, c.s0, r.bands.gap(), c.residual_norm(), r.basis.gram_condition]);
    writer.write("coefficients.csv", &head)?;
    let mut sites = Table::new(&["site", "chi"]);
    for (i, chi) in c.chi.iter().enumerate() {
        sites.push_raw(vec![i.to_string(), fmt_f64(*chi)]);
    }
    writer.write("sites.csv", &sites)?;
    let n = r.basis.len();
    let mut header = vec!["x".to_string()];
    for i in 0..n {
        header.push(format!("re_u{i}"));
        header.push(format!("im_u{i}"));
    }
    let mut grid = Table::new(&header);
    for (p, x) in model.grid().x().iter().enumerate() {
        let mut row = vec![*x];
        for u in &r.basis.functions {
            row.push(u[p].re);
            row.push(u[p].im);
        }
        grid.push_floats(&row);
    }
    writer.write("basis.csv", &grid)
}

/// Random amplitudes on the central `sites` sites from the config seed.
pub fn random_amplitudes(num_sites: usize, sites: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = num_sites / 2;
    let half = (sites / 2) as isize;
    let mut g = vec![Complex64::new(0.0, 0.0); num_sites];
    for d in -half..=half {
        let i = (centre as isize + d).rem_euclid(num_sites as isize) as usize;
        g[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let s = dnls::l2(&g);
    g.iter_mut().for_each(|z| *z /= s);
    g
}

fn resolved_params(config: &ExperimentConfig, reduction: &Reduction) -> crate::Result<SemiclassicalParams> {
    let p = config.params(config.hbar)?;
    match config.regime {
        RegimeKind::Model2 => p.resolve_model2(reduction.coefficients.beta),
        _ => Ok(p),
    }
}

fn simulate(config: &ExperimentConfig, model: &LatticeModel, writer: &mut Writer, diagnose: bool) -> Result<(), StageError> {
    let first = stage("params", config.params(config.hbar))?;
    let reduction = stage("basis", Reduction::build(model, &first))?;
    let params = stage("params", resolved_params(config, &reduction))?;
    let dt = config.dt_scale * params.hbar / model.max_linear_potential(params.f).max(1.0);
    let amplitudes = match config.initial {
        InitialKind::Gaussian => None,
        InitialKind::Random => Some(random_amplitudes(reduction.basis.len(), config.initial_sites, config.seed)),
    };
    let run_cfg = PairedRunConfig {
        final_time: config.final_time,
        dt,
        sample_stride: config.sample_stride,
        max_steps: Some(config.max_steps),
        sites: config.initial_sites,
        sigma: config.initial_sigma,
        amplitudes,
    };
    let run = stage("propagate", paired_run(model, &reduction, &params, &run_cfg))?;
    writer.write("conservation.csv", &conservation_table(&run.conservation))?;
    writer.write("lattice_trajectory.csv", &run.lattice.table())?;
    writer.write("lattice_summary.csv", &run.lattice.summary_table())?;
    writer.write("errors.csv", &run.table())?;
    writer.write("snapshot_final.csv", &gpe::snapshot_table(model.grid(), &run.final_field))?;
    if diagnose {
        writer.write("diagnostics.csv", &diagnostics_table(&reduction, &run))?;
        let mut decay = Table::new(&["distance", "max_abs_W"]);
        for (d, w) in perturbation_decay(&reduction.coefficients) {
            decay.push_raw(vec![d.to_string(), fmt_f64(w)]);
        }
        writer.write("perturbation_decay.csv", &decay)?;
    }
    Ok(())
}

fn diagnostics_table(reduction: &Reduction, run: &PairedRun) -> Table {
    let c = &reduction.coefficients;
    let nan = f64::NAN;
    let (a, b) = run.remainder_regression().map_or((nan, nan), |f| (f.intercept, f.slope));
    let mut t = Table::new(&["quantity", "value"]);
    let rows: Vec<(&str, f64)> = vec![
        ("hbar", run.hbar),
        ("F", run.params.f),
        ("eta", run.params.eta),
        ("lambda", run.lambda()),
        ("beta", c.beta),
        ("residual_norm", c.residual_norm()),
        ("offdiag_W_norm", c.off_diagonal_perturbation_norm()),
        ("max_err_total", run.max_err_total()),
        ("max_err_perp", run.max_err_perp()),
        ("max_err_amp", run.max_err_amp()),
        ("max_identity_residual", run.max_identity_residual()),
        ("triangle_holds", if run.triangle_holds() { 1.0 } else { 0.0 }),
        ("remainder_offset_a", a),
        ("remainder_slope_b", b),
        ("remainder_slope_over_hbar_lambda", b / (run.hbar * run.lambda())),
        ("cubic_perp_ratio", run.cubic_perp_ratio().unwrap_or(nan)),
        ("derivative_ratio", run.derivative_ratio(c.beta).unwrap_or(nan)),
        ("max_mass_drift", run.max_mass_drift),
        ("max_energy_drift", run.max_energy_drift),
        ("lattice_norm_drift", run.lattice.norm_drift),
    ];
    for (k, v) in rows {
        t.push_raw(vec![k.to_string(), fmt_f64(v)]);
    }
    t
}

fn write_sweep(r: &SweepResult, writer: &mut Writer) -> Result<(), StageError> {
    writer.write("sweep.csv", &r.table())?;
    writer.write("fit.csv", &r.fit_table())?;
    let mut extra = Table::new(&[
        "hbar", "gap", "short_window_err", "linear_err", "grad_scaled", "sup_scaled", "max_mass_drift",
        "max_identity_residual",
    ]);
    for p in &r.points {
        extra.push_floats(&[
            p.hbar,
            p.gap,
            p.short_window_err.unwrap_or(f64::NAN),
            p.linear_err.unwrap_or(f64::NAN),
            p.max_grad_norm * p.hbar.sqrt(),
            p.max_sup_norm * p.hbar.powf(0.25),
            p.max_mass_drift,
            p.max_identity_residual,
        ]);
    }
    writer.write("sweep_details.csv", &extra)
}

/// Slope at least 0.4 and `err <= 3 C hbar^0.4` with `C` from the largest hbar.
pub fn model1_checks(r: &SweepResult) -> Vec<Check> {
    let mut out = vec![Check {
        name: "sweep_complete".into(),
        passed: r.all_ok(),
        detail: format!("{} of {} points", r.successful().count(), r.points.len()),
    }];
    out.push(match r.fit {
        Some(f) => Check {
            name: "model1_slope".into(),
            passed: f.slope >= 0.4 && r.power_bound_holds(0.4, 3.0),
            detail: format!("slope={:.4} stderr={:.4}", f.slope, f.stderr),
        },
        None => Check { name: "model1_slope".into(), passed: false, detail: "no fit".into() },
    });
    out
}

/// Negative slope in `1/hbar` at 95% confidence and the `psi_perp` bound.
pub fn model2_checks(r: &SweepResult) -> Vec<Check> {
    let mut out = vec![Check {
        name: "sweep_complete".into(),
        passed: r.all_ok(),
        detail: format!("{} of {} points", r.successful().count(), r.points.len()),
    }];
    out.push(match r.fit {
        Some(f) => Check {
            name: "model2_slope".into(),
            passed: f.negative_with_confidence(0.95),
            detail: format!("slope={:.4} halfwidth95={:.4}", f.slope, f.slope_halfwidth(0.95)),
        },
        None => Check { name: "model2_slope".into(), passed: false, detail: "no fit".into() },
    });
    out.push(Check {
        name: "model2_perp_bound".into(),
        passed: r.perp_bound_holds(3.0),
        detail: format!("c={:?}", r.perp_constant),
    });
    out
}
