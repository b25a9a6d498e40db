//! Paired PDE / lattice runs, the reduction error functional, remainder
//! diagnostics and the hbar sweeps for both scaling regimes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{LocalizedBasis, Reduction, TightBindingCoefficients};
use crate::dnls::{self, l2, LatticeState, Trajectory};
use crate::error::{Error, Result};
use crate::fit::{fit_line, fit_log_inverse, fit_loglog, LineFit};
use crate::gpe::{self, ConservationReport, PropagatorConfig};
use crate::grid::{FieldState, Grid};
use crate::io::{fmt_f64, Table};
use crate::model::{LatticeModel, SemiclassicalParams};
use crate::spectral::BandData;

/// Tolerance of the orthogonal decomposition `total^2 = perp^2 + amp^2`.
pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// Fraction of `S_0` used as `rho` in every Agmon-type bound.
pub const RHO_FRACTION: f64 = 0.15;

/// `<u_n, psi>` for every site, rotated by `e^{i Lambda_1 tau / hbar}`.
pub fn project_amplitudes(psi: &FieldState, basis: &LocalizedBasis, lambda1: f64, hbar: f64) -> Vec<Complex64> {
    let lab = LatticeState::new(psi.tau, basis.coefficients(&psi.values));
    dnls::apply_gauge(&lab, lambda1, hbar).amplitudes
}

/// `||Pi psi - sum_n <u_n, psi> u_n||`.
pub fn reconstruction_residual(psi: &[Complex64], basis: &LocalizedBasis, bands: &BandData) -> f64 {
    let p = bands.project(psi);
    let s = basis.synthesize(&basis.coefficients(psi));
    let d: Vec<Complex64> = p.iter().zip(&s).map(|(a, b)| a - b).collect();
    basis.grid.norm(&d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionError {
    pub tau: f64,
    /// `||e^{i Lambda_1 tau/hbar} psi - sum_n g_n u_n||`.
    pub total: f64,
    /// `||Pi_perp psi||`.
    pub perp: f64,
    /// `||c - g||`.
    pub amp: f64,
    /// `|total^2 - perp^2 - amp^2|`.
    pub identity_residual: f64,
}

/// Error functional at a common time. `g` lives in the rotating frame.
pub fn reduction_error(
    psi: &FieldState,
    g: &LatticeState,
    basis: &LocalizedBasis,
    bands: &BandData,
    lambda1: f64,
    hbar: f64,
) -> Result<ReductionError> {
    let grid = &basis.grid;
    grid.check_len(psi.values.len())?;
    if (psi.tau - g.tau).abs() > 1e-9 * psi.tau.abs().max(1.0) {
        return Err(Error::TimeMismatch { field: psi.tau, lattice: g.tau });
    }
    if g.amplitudes.len() != basis.len() {
        return Err(Error::GridMismatch { expected: basis.len(), got: g.amplitudes.len() });
    }
    let phase = Complex64::from_polar(1.0, lambda1 * psi.tau / hbar);
    let model = basis.synthesize(&g.amplitudes);
    let diff: Vec<Complex64> = psi.values.iter().zip(&model).map(|(p, m)| phase * p - m).collect();
    let total = grid.norm(&diff);
    let p1 = bands.project(&psi.values);
    let perp_vec: Vec<Complex64> = psi.values.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let perp = grid.norm(&perp_vec);
    let c = project_amplitudes(psi, basis, lambda1, hbar);
    let dc: Vec<Complex64> = c.iter().zip(&g.amplitudes).map(|(a, b)| a - b).collect();
    let amp = l2(&dc);
    let identity_residual = (total * total - perp * perp - amp * amp).abs();
    Ok(ReductionError { tau: psi.tau, total, perp, amp, identity_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderDiagnostics {
    pub tau: f64,
    pub r1: f64,
    /// `F ||r_2||`.
    pub r2: f64,
    /// `F ||r_3||`.
    pub r3: f64,
    /// `|eta| ||r_4||`.
    pub r4: f64,
    /// `||r||` assembled directly from the field.
    pub total: f64,
    /// `||A||` with `A = r_4 - B`, the part of `r_4` driven by `psi_perp`.
    pub cubic_perp: f64,
}

impl RemainderDiagnostics {
    pub fn triangle_holds(&self) -> bool {
        self.total <= (self.r1 + self.r2 + self.r3 + self.r4) * (1.0 + 1e-9) + 1e-14
    }
}

fn matvec(m: &DMatrix<Complex64>, c: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * c[j]).sum()).collect()
}

/// Splits `r_n = r_1 + F r_2 + F r_3 + eta r_4` for the field `psi`; `c`
/// must be `<u_n, psi>` in the same frame as `psi`.
pub fn remainder_diagnostics(
    psi: &FieldState,
    c: &[Complex64],
    basis: &LocalizedBasis,
    bands: &BandData,
    coeffs: &TightBindingCoefficients,
    model: &LatticeModel,
    params: &SemiclassicalParams,
) -> Result<RemainderDiagnostics> {
    let grid = &basis.grid;
    grid.check_len(psi.values.len())?;
    let n = basis.len();
    let w = model.perturbation();

    let r1 = matvec(&coeffs.residual, c);
    let mut off = coeffs.perturbation.clone();
    for i in 0..n {
        off[(i, i)] = Complex64::new(0.0, 0.0);
    }
    let r2 = matvec(&off, c);

    let p1 = bands.project(&psi.values);
    let perp: Vec<Complex64> = psi.values.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let w_perp: Vec<Complex64> = perp.iter().zip(w).map(|(z, v)| z * v).collect();
    let r3 = basis.coefficients(&w_perp);

    let cubic: Vec<Complex64> = psi.values.iter().map(|z| z * z.norm_sqr()).collect();
    let cubic_c = basis.coefficients(&cubic);
    let r4: Vec<Complex64> = cubic_c
        .iter()
        .zip(c)
        .map(|(q, ci)| q - coeffs.c1 * ci.norm_sqr() * ci)
        .collect();
    let band_part = basis.synthesize(c);
    let cubic1: Vec<Complex64> = band_part.iter().map(|z| z * z.norm_sqr()).collect();
    let a: Vec<Complex64> = cubic_c.iter().zip(basis.coefficients(&cubic1)).map(|(x, y)| x - y).collect();

    // full remainder: <u_n, (H_B - Lambda_1 + F W + eta |psi|^2) psi> - G_n(c)
    let h = crate::spectral::assemble_hamiltonian(model, &params.linear())?;
    let hpsi = h.apply(&psi.values);
    let full: Vec<Complex64> = hpsi
        .iter()
        .zip(psi.values.iter().zip(w))
        .zip(&cubic)
        .map(|((hp, (p, v)), q)| hp - coeffs.lambda1 * p + params.f * v * p + params.eta * q)
        .collect();
    let lhs = basis.coefficients(&full);
    let g = dnls::lattice_operator(c, coeffs, params);
    let r: Vec<Complex64> = lhs.iter().zip(&g).map(|(x, y)| x - y).collect();

    Ok(RemainderDiagnostics {
        tau: psi.tau,
        r1: l2(&r1),
        r2: params.f * l2(&r2),
        r3: params.f * l2(&r3),
        r4: params.eta.abs() * l2(&r4),
        total: l2(&r),
        cubic_perp: l2(&a),
    })
}

/// `<u_n, conj(u_m) u_l u_j>` for all index quadruples.
pub fn quartic_overlaps(basis: &LocalizedBasis) -> Vec<Complex64> {
    let n = basis.len();
    let u = &basis.functions;
    let dx = basis.grid.dx();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n * n * n];
    for a in 0..n {
        for m in 0..n {
            let pair: Vec<Complex64> = u[a].iter().zip(&u[m]).map(|(x, y)| (x * y).conj()).collect();
            for l in 0..n {
                for j in 0..n {
                    let s: Complex64 = pair.iter().zip(u[l].iter().zip(&u[j])).map(|(p, (x, y))| p * x * y).sum();
                    out[((a * n + m) * n + l) * n + j] = s * dx;
                }
            }
        }
    }
    out
}

/// `B_n = sum* <u_n, conj(u_m) u_l u_j> conj(c_m) c_l c_j`, the starred sum
/// omitting `j = l = m = n`, by exhaustive enumeration.
pub fn cubic_offsite_sum(basis: &LocalizedBasis, c: &[Complex64]) -> Vec<Complex64> {
    let n = basis.len();
    let q = quartic_overlaps(basis);
    (0..n)
        .map(|a| {
            let mut s = Complex64::new(0.0, 0.0);
            for m in 0..n {
                for l in 0..n {
                    for j in 0..n {
                        if m == a && l == a && j == a {
                            continue;
                        }
                        s += q[((a * n + m) * n + l) * n + j] * c[m].conj() * c[l] * c[j];
                    }
                }
            }
            s
        })
        .collect()
}

/// Decay of `max |<u_n, W u_m>|` with the ring distance `|n - m|`.
pub fn perturbation_decay(coeffs: &TightBindingCoefficients) -> Vec<(usize, f64)> {
    let n = coeffs.num_sites();
    (1..=n / 2)
        .map(|d| {
            let m = (0..n)
                .map(|i| coeffs.perturbation[(i, (i + d) % n)].norm())
                .fold(0.0, f64::max);
            (d, m)
        })
        .collect()
}

/// Normalised Gaussian `g_n ~ exp(-(n - N/2)^2 / (2 sigma^2))` on the
/// `sites` sites around the centre.
pub fn gaussian_amplitudes(num_sites: usize, sites: usize, sigma: f64) -> Vec<Complex64> {
    let centre = num_sites / 2;
    let half = (sites / 2) as isize;
    let mut g = vec![Complex64::new(0.0, 0.0); num_sites];
    for d in -half..=half {
        let i = (centre as isize + d).rem_euclid(num_sites as isize) as usize;
        g[i] = Complex64::new((-(d * d) as f64 / (2.0 * sigma * sigma)).exp(), 0.0);
    }
    let s = l2(&g);
    g.iter_mut().for_each(|z| *z /= s);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRunConfig {
    pub final_time: f64,
    /// PDE step before rounding to fit the sample grid.
    pub dt: f64,
    /// PDE steps between samples.
    pub sample_stride: usize,
    /// Deterministic cap on PDE steps; the window is truncated beyond it.
    pub max_steps: Option<usize>,
    pub sites: usize,
    pub sigma: f64,
    /// Explicit `g(0)`; overrides the Gaussian when set.
    pub amplitudes: Option<Vec<Complex64>>,
}

impl PairedRunConfig {
    pub fn new(final_time: f64, dt: f64) -> Self {
        Self { final_time, dt, sample_stride: 50, max_steps: None, sites: 5, sigma: 1.0, amplitudes: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub error: ReductionError,
    pub remainder: RemainderDiagnostics,
    /// `hbar ||c'||` from central differences (NaN at the end points).
    pub hbar_cdot: f64,
    pub grad_norm: f64,
    pub sup_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PairedRun {
    pub hbar: f64,
    pub params: SemiclassicalParams,
    pub requested_time: f64,
    pub final_time: f64,
    pub truncated: bool,
    pub dt: f64,
    pub steps: usize,
    pub samples: Vec<Sample>,
    pub lattice: Trajectory,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub conservation: Vec<ConservationReport>,
    pub final_field: FieldState,
}

impl PairedRun {
    fn max_of(&self, f: impl Fn(&Sample) -> f64) -> f64 {
        self.samples.iter().map(f).filter(|v| v.is_finite()).fold(0.0, f64::max)
    }

    pub fn max_err_total(&self) -> f64 {
        self.max_of(|s| s.error.total)
    }

    pub fn max_err_perp(&self) -> f64 {
        self.max_of(|s| s.error.perp)
    }

    pub fn max_err_amp(&self) -> f64 {
        self.max_of(|s| s.error.amp)
    }

    /// Largest error over samples with `tau <= window`.
    pub fn max_err_total_until(&self, window: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.error.tau <= window * (1.0 + 1e-12))
            .map(|s| s.error.total)
            .fold(0.0, f64::max)
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.max_of(|s| s.error.identity_residual)
    }

    pub fn max_grad_norm(&self) -> f64 {
        self.max_of(|s| s.grad_norm)
    }

    pub fn max_sup_norm(&self) -> f64 {
        self.max_of(|s| s.sup_norm)
    }

    pub fn triangle_holds(&self) -> bool {
        self.samples.iter().all(|s| s.remainder.triangle_holds())
    }

    /// `lambda = F / hbar + |eta| hbar^(-3/2)`.
    pub fn lambda(&self) -> f64 {
        let h = self.hbar;
        self.params.f / h + self.params.eta.abs() * h.powf(-1.5)
    }

    /// `max ||A|| hbar^(1/2) / ||psi_perp||` over samples with `||psi_perp|| > 1e-12`.
    pub fn cubic_perp_ratio(&self) -> Option<f64> {
        let h = self.hbar;
        self.samples
            .iter()
            .filter(|s| s.error.perp > 1e-12)
            .map(|s| s.remainder.cubic_perp * h.sqrt() / s.error.perp)
            .reduce(f64::max)
    }

    /// `max hbar ||c'|| / max(beta, hbar lambda, ||r||)`.
    pub fn derivative_ratio(&self, beta: f64) -> Option<f64> {
        let hl = self.hbar * self.lambda();
        self.samples
            .iter()
            .filter(|s| s.hbar_cdot.is_finite())
            .map(|s| s.hbar_cdot / beta.max(hl).max(s.remainder.total))
            .reduce(f64::max)
    }

    /// Regression `||r|| = a + b' ||psi_perp||` over the samples.
    pub fn remainder_regression(&self) -> Option<LineFit> {
        let x: Vec<f64> = self.samples.iter().map(|s| s.error.perp).collect();
        let y: Vec<f64> = self.samples.iter().map(|s| s.remainder.total).collect();
        fit_line(&x, &y).ok()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "tau", "err_total", "err_perp", "err_amp", "r1", "r2", "r3", "r4", "r_total", "hbar_cdot",
            "grad_norm", "sup_norm",
        ]);
        for s in &self.samples {
            t.push_floats(&[
                s.error.tau,
                s.error.total,
                s.error.perp,
                s.error.amp,
                s.remainder.r1,
                s.remainder.r2,
                s.remainder.r3,
                s.remainder.r4,
                s.remainder.total,
                s.hbar_cdot,
                s.grad_norm,
                s.sup_norm,
            ]);
        }
        t
    }
}

/// Propagates `psi_0 = sum g_n(0) u_n` under the PDE and `g(0)` under the
/// lattice equation, comparing at every sample.
pub fn paired_run(
    model: &LatticeModel,
    reduction: &Reduction,
    params: &SemiclassicalParams,
    config: &PairedRunConfig,
) -> Result<PairedRun> {
    if !params.is_resolved() {
        return Err(Error::InvalidParams("model-2 parameters must be resolved before propagation".into()));
    }
    let basis = &reduction.basis;
    let bands = &reduction.bands;
    let coeffs = &reduction.coefficients;
    let hbar = params.hbar;
    let stride = config.sample_stride.max(1);

    let mut chunks = ((config.final_time / (config.dt * stride as f64)) - 1e-9).ceil().max(1.0) as usize;
    let mut truncated = false;
    if let Some(cap) = config.max_steps {
        let cap_chunks = (cap / stride).max(1);
        if chunks > cap_chunks {
            chunks = cap_chunks;
            truncated = true;
        }
    }
    let steps = chunks * stride;
    let dt = if truncated { config.dt } else { config.final_time / steps as f64 };
    let final_time = dt * steps as f64;
    let sample_dt = dt * stride as f64;

    let g0 = match &config.amplitudes {
        Some(a) if a.len() == basis.len() => {
            let s = l2(a);
            a.iter().map(|z| z / s).collect()
        }
        Some(a) => return Err(Error::GridMismatch { expected: basis.len(), got: a.len() }),
        None => gaussian_amplitudes(basis.len(), config.sites, config.sigma),
    };
    let psi0 = FieldState::new(0.0, basis.synthesize(&g0));
    let lattice = dnls::integrate_sampled(
        &LatticeState::new(0.0, g0),
        coeffs,
        params,
        sample_dt,
        chunks,
        dnls::default_dt(coeffs, params),
    )?;

    let pcfg = PropagatorConfig::new(dt, final_time, stride, 1e-8)?;
    let mut samples = Vec::with_capacity(chunks + 1);
    let mut amps: Vec<Vec<Complex64>> = Vec::with_capacity(chunks + 1);
    let grid: &Grid = model.grid();
    let mut index = 0usize;
    let (final_field, monitor) = gpe::propagate(&psi0, model, params, &pcfg, None, |psi| {
        let g = &lattice.states[index];
        let mut psi_t = psi.clone();
        psi_t.tau = g.tau;
        let error = reduction_error(&psi_t, g, basis, bands, coeffs.lambda1, hbar)?;
        // remainder in the rotating frame, where the lattice operator is written
        let phase = Complex64::from_polar(1.0, coeffs.lambda1 * psi_t.tau / hbar);
        let rotated = FieldState::new(psi_t.tau, psi.values.iter().map(|z| z * phase).collect());
        let c = basis.coefficients(&rotated.values);
        let remainder = remainder_diagnostics(&rotated, &c, basis, bands, coeffs, model, params)?;
        samples.push(Sample {
            error,
            remainder,
            hbar_cdot: f64::NAN,
            grad_norm: grid.gradient_norm(&psi.values),
            sup_norm: grid.sup_norm(&psi.values),
        });
        amps.push(c);
        index += 1;
        Ok(())
    })?;

    for i in 1..samples.len().saturating_sub(1) {
        let d: Vec<Complex64> = amps[i + 1].iter().zip(&amps[i - 1]).map(|(a, b)| (a - b) / (2.0 * sample_dt)).collect();
        samples[i].hbar_cdot = hbar * l2(&d);
    }

    Ok(PairedRun {
        hbar,
        params: *params,
        requested_time: config.final_time,
        final_time,
        truncated,
        dt,
        steps,
        samples,
        lattice,
        max_mass_drift: monitor.max_mass_drift(),
        max_energy_drift: monitor.max_energy_drift(),
        conservation: monitor.reports.clone(),
        final_field,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Strictly decreasing.
    pub hbars: Vec<f64>,
    pub k_f: f64,
    pub k_eta: f64,
    /// Model-2 window `T = k_T hbar / beta`.
    pub k_t: f64,
    /// Model-1 window `T = hbar^(-gamma)`.
    pub gamma: f64,
    /// PDE step `dt_scale hbar / max(1, max|V + F W|)`.
    pub dt_scale: f64,
    pub sample_stride: usize,
    pub max_steps: Option<usize>,
    pub sites: usize,
    pub sigma: f64,
    /// Also run the `k_eta = 0` comparison (model 1).
    pub comparisons: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            hbars: vec![0.14, 0.12, 0.10, 0.08, 0.06],
            k_f: 1.0,
            k_eta: 1.0,
            k_t: 1.0,
            gamma: 0.5,
            dt_scale: 0.01,
            sample_stride: 250,
            max_steps: Some(2_000_000),
            sites: 5,
            sigma: 1.0,
            comparisons: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hbars.len() < crate::fit::MIN_FIT_POINTS {
            return Err(Error::TooFewPoints { needed: crate::fit::MIN_FIT_POINTS, got: self.hbars.len() });
        }
        if self.hbars.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("hbar list must be strictly decreasing".into()));
        }
        if !(self.dt_scale > 0.0) {
            return Err(Error::Config("dt_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn run_config(&self, model: &LatticeModel, params: &SemiclassicalParams, final_time: f64) -> PairedRunConfig {
        let dt = self.dt_scale * params.hbar / model.max_linear_potential(params.f).max(1.0);
        PairedRunConfig {
            final_time,
            dt,
            sample_stride: self.sample_stride,
            max_steps: self.max_steps,
            sites: self.sites,
            sigma: self.sigma,
            amplitudes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub hbar: f64,
    pub f: f64,
    pub eta: f64,
    pub beta: f64,
    pub c1: f64,
    pub s0: f64,
    pub gap: f64,
    pub requested_window: f64,
    pub t_window: f64,
    pub truncated: bool,
    pub max_err_total: f64,
    pub max_err_perp: f64,
    pub max_err_amp: f64,
    pub max_grad_norm: f64,
    pub max_sup_norm: f64,
    pub max_mass_drift: f64,
    pub max_identity_residual: f64,
    pub triangle_holds: bool,
    /// Model 1: max error over `tau <= 1` (the `gamma = 0` window).
    /// Model 2: max error over the model-1 window `hbar^(-gamma)`.
    pub short_window_err: Option<f64>,
    /// Model 1: max error of the `k_eta = 0` run.
    pub linear_err: Option<f64>,
    pub cubic_perp_ratio: Option<f64>,
    pub derivative_ratio: Option<f64>,
    pub remainder_fit: Option<(f64, f64)>,
    pub failure: Option<String>,
}

impl SweepPoint {
    fn failed(hbar: f64, message: String) -> Self {
        Self {
            hbar,
            f: f64::NAN,
            eta: f64::NAN,
            beta: f64::NAN,
            c1: f64::NAN,
            s0: f64::NAN,
            gap: f64::NAN,
            requested_window: f64::NAN,
            t_window: f64::NAN,
            truncated: false,
            max_err_total: f64::NAN,
            max_err_perp: f64::NAN,
            max_err_amp: f64::NAN,
            max_grad_norm: f64::NAN,
            max_sup_norm: f64::NAN,
            max_mass_drift: f64::NAN,
            max_identity_residual: f64::NAN,
            triangle_holds: false,
            short_window_err: None,
            linear_err: None,
            cubic_perp_ratio: None,
            derivative_ratio: None,
            remainder_fit: None,
            failure: Some(message),
        }
    }

    fn from_run(reduction: &Reduction, run: &PairedRun) -> Self {
        let c = &reduction.coefficients;
        Self {
            hbar: run.hbar,
            f: run.params.f,
            eta: run.params.eta,
            beta: c.beta,
            c1: c.c1,
            s0: c.s0,
            gap: reduction.bands.gap(),
            requested_window: run.requested_time,
            t_window: run.final_time,
            truncated: run.truncated,
            max_err_total: run.max_err_total(),
            max_err_perp: run.max_err_perp(),
            max_err_amp: run.max_err_amp(),
            max_grad_norm: run.max_grad_norm(),
            max_sup_norm: run.max_sup_norm(),
            max_mass_drift: run.max_mass_drift,
            max_identity_residual: run.max_identity_residual(),
            triangle_holds: run.triangle_holds(),
            short_window_err: None,
            linear_err: None,
            cubic_perp_ratio: run.cubic_perp_ratio(),
            derivative_ratio: run.derivative_ratio(c.beta),
            remainder_fit: run.remainder_regression().map(|f| (f.intercept, f.slope)),
            failure: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Model1,
    Model2,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub points: Vec<SweepPoint>,
    /// Model 1: `log err` vs `log hbar`. Model 2: `log err` vs `1/hbar`.
    pub fit: Option<LineFit>,
    /// Model 2: `max ||psi_perp|| e^{(S_0 - rho)/hbar}` at the largest hbar.
    pub perp_constant: Option<f64>,
}

impl SweepResult {
    pub fn successful(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.ok())
    }

    pub fn all_ok(&self) -> bool {
        self.points.iter().all(SweepPoint::ok)
    }

    /// Error prefactor at the largest hbar for the bound `err <= C hbar^s`.
    pub fn power_constant(&self, exponent: f64) -> Option<f64> {
        let p = self.successful().next()?;
        Some(p.max_err_total / p.hbar.powf(exponent))
    }

    /// Every point obeys `err <= factor C hbar^s` with `C` from the largest hbar.
    pub fn power_bound_holds(&self, exponent: f64, factor: f64) -> bool {
        match self.power_constant(exponent) {
            Some(c) => self.successful().all(|p| p.max_err_total <= factor * c * p.hbar.powf(exponent)),
            None => false,
        }
    }

    /// Every point obeys `||psi_perp|| <= factor c e^{-(S_0 - rho)/hbar}`.
    pub fn perp_bound_holds(&self, factor: f64) -> bool {
        match self.perp_constant {
            Some(c) => self.successful().all(|p| {
                let rho = RHO_FRACTION * p.s0;
                p.max_err_perp <= factor * c * (-(p.s0 - rho) / p.hbar).exp()
            }),
            None => false,
        }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "hbar", "F", "eta", "beta", "C1", "S0", "T_window", "max_err_total", "max_err_perp", "max_err_amp",
            "truncated", "status",
        ]);
        for p in &self.points {
            let mut row: Vec<String> = [p.hbar, p.f, p.eta, p.beta, p.c1, p.s0, p.t_window, p.max_err_total, p.max_err_perp, p.max_err_amp]
                .iter()
                .map(|&v| fmt_f64(v))
                .collect();
            row.push(if p.truncated { "1".into() } else { "0".into() });
            row.push(match &p.failure {
                None => "ok".into(),
                Some(m) => format!("failed: {}", m.replace([',', '\n'], ";")),
            });
            t.push_raw(row);
        }
        t
    }

    pub fn fit_table(&self) -> Table {
        let mut t = Table::new(&["slope", "intercept", "stderr"]);
        if let Some(f) = self.fit {
            t.push_floats(&[f.slope, f.intercept, f.stderr]);
        }
        t
    }
}

/// Runs `job` over the hbar grid on a rayon pool sized by `TBLAB_WORKERS`
/// (rayon's default otherwise); results keep the input order.
pub fn run_parallel<T, F>(hbars: &[f64], job: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    let workers = std::env::var("TBLAB_WORKERS").ok().and_then(|s| s.trim().parse::<usize>().ok());
    let run = || hbars.par_iter().map(|&h| job(h)).collect::<Vec<T>>();
    match workers.and_then(|w| rayon::ThreadPoolBuilder::new().num_threads(w).build().ok()) {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

fn model1_point(model: &LatticeModel, config: &SweepConfig, hbar: f64) -> Result<(Reduction, PairedRun, SweepPoint)> {
    let params = SemiclassicalParams::model1(hbar, config.k_f, config.k_eta)?;
    let reduction = Reduction::build(model, &params)?;
    let window = hbar.powf(-config.gamma);
    let run = paired_run(model, &reduction, &params, &config.run_config(model, &params, window))?;
    let mut point = SweepPoint::from_run(&reduction, &run);
    // the gamma = 0 window is the tau <= 1 prefix of the same trajectory
    point.short_window_err = Some(run.max_err_total_until(1.0));
    if config.comparisons {
        let lin = SemiclassicalParams::model1(hbar, config.k_f, 0.0)?;
        let lrun = paired_run(model, &reduction, &lin, &config.run_config(model, &lin, window))?;
        point.linear_err = Some(lrun.max_err_total());
    }
    Ok((reduction, run, point))
}

/// Model-1 sweep: `F = k_F hbar^2`, `eta = k_eta hbar^2`, `T = hbar^(-gamma)`.
pub fn run_model1_sweep(model: &LatticeModel, config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let points = run_parallel(&config.hbars, |h| match model1_point(model, config, h) {
        Ok((_, _, p)) => p,
        Err(e) => SweepPoint::failed(h, e.to_string()),
    });
    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.ok()).collect();
    let fit = fit_loglog(
        &ok.iter().map(|p| p.hbar).collect::<Vec<_>>(),
        &ok.iter().map(|p| p.max_err_total).collect::<Vec<_>>(),
    )
    .ok();
    Ok(SweepResult { kind: SweepKind::Model1, points, fit, perp_constant: None })
}

pub fn model2_point(model: &LatticeModel, config: &SweepConfig, hbar: f64) -> Result<SweepPoint> {
    let first = SemiclassicalParams::model2(hbar, config.k_f, config.k_eta)?;
    let reduction = Reduction::build(model, &first)?;
    let params = first.resolve_model2(reduction.coefficients.beta)?;
    let window = config.k_t * hbar / reduction.coefficients.beta;
    let run = paired_run(model, &reduction, &params, &config.run_config(model, &params, window))?;
    let mut point = SweepPoint::from_run(&reduction, &run);
    point.short_window_err = Some(run.max_err_total_until(hbar.powf(-config.gamma)));
    Ok(point)
}

/// Model-2 sweep: beta first, then `F = k_F beta`, `eta = k_eta hbar^(1/2) beta`,
/// `T = k_T hbar / beta` capped at `max_steps` PDE steps.
pub fn run_model2_sweep(model: &LatticeModel, config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let points = run_parallel(&config.hbars, |h| match model2_point(model, config, h) {
        Ok(p) => p,
        Err(e) => SweepPoint::failed(h, e.to_string()),
    });
    let ok: Vec<&SweepPoint> = points.iter().filter(|p| p.ok()).collect();
    let fit = fit_log_inverse(
        &ok.iter().map(|p| p.hbar).collect::<Vec<_>>(),
        &ok.iter().map(|p| p.max_err_total).collect::<Vec<_>>(),
    )
    .ok();
    let perp_constant = ok
        .first()
        .map(|p| p.max_err_perp * ((1.0 - RHO_FRACTION) * p.s0 / p.hbar).exp());
    Ok(SweepResult { kind: SweepKind::Model2, points, fit, perp_constant })
}
