//! Split-step Fourier propagation of
//! `i hbar psi_tau = -hbar^2 psi_xx + V psi + F W psi + eta |psi|^2 psi`
//! in the lab frame, with conservation and a priori norm monitors.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};
use crate::io::Table;
use crate::model::{LatticeModel, SemiclassicalParams};
use crate::spectral::BandData;

/// Largest admissible `dt max|V + F W| / hbar`.
pub const PHASE_RULE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub final_time: f64,
    /// Steps between monitor evaluations.
    pub monitor_stride: usize,
    /// Allowed relative energy drift; larger drifts are flagged.
    pub drift_tolerance: f64,
}

impl PropagatorConfig {
    pub fn new(dt: f64, final_time: f64, monitor_stride: usize, drift_tolerance: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("time step must be positive, got {dt}")));
        }
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidParams(format!("final time must be positive, got {final_time}")));
        }
        if monitor_stride == 0 {
            return Err(Error::InvalidParams("monitor stride must be at least 1".into()));
        }
        Ok(Self { dt, final_time, monitor_stride, drift_tolerance })
    }

    /// `0.05 hbar / max(1, max|V + F W|)`.
    pub fn default_dt(model: &LatticeModel, params: &SemiclassicalParams) -> f64 {
        0.05 * params.hbar / model.max_linear_potential(params.f).max(1.0)
    }

    pub fn with_default_dt(
        model: &LatticeModel,
        params: &SemiclassicalParams,
        final_time: f64,
        monitor_stride: usize,
    ) -> Result<Self> {
        Self::new(Self::default_dt(model, params), final_time, monitor_stride, 1e-8)
    }

    /// Number of steps; the step is shrunk so they land exactly on `final_time`.
    pub fn num_steps(&self) -> usize {
        ((self.final_time / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn effective_dt(&self) -> f64 {
        self.final_time / self.num_steps() as f64
    }

    pub fn check_phase_rule(&self, model: &LatticeModel, params: &SemiclassicalParams) -> Result<()> {
        let ratio = self.dt * model.max_linear_potential(params.f) / params.hbar;
        if ratio > PHASE_RULE {
            return Err(Error::TimeStep { ratio });
        }
        Ok(())
    }
}

/// `hbar^2 ||psi_x||^2 + <V psi, psi> + F <W psi, psi> + eta/2 ||psi||_4^4`.
pub fn energy(psi: &[Complex64], model: &LatticeModel, params: &SemiclassicalParams) -> f64 {
    let grid = model.grid();
    let g = grid.gradient_norm(psi);
    let dx = grid.dx();
    let lin: f64 = psi
        .iter()
        .zip(model.potential().iter().zip(model.perturbation()))
        .map(|(z, (v, w))| (v + params.f * w) * z.norm_sqr())
        .sum::<f64>()
        * dx;
    params.hbar * params.hbar * g * g + lin + 0.5 * params.eta * grid.l4_pow4(psi)
}

/// One Strang step without the precomputed propagator.
pub fn step(
    psi: &FieldState,
    dt: f64,
    model: &LatticeModel,
    params: &SemiclassicalParams,
) -> Result<FieldState> {
    let config = PropagatorConfig::new(dt, dt, 1, f64::INFINITY)?;
    config.check_phase_rule(model, params)?;
    let mut prop = Propagator::new(model, params, dt)?;
    let mut out = psi.clone();
    prop.advance(&mut out, 1)?;
    Ok(out)
}

/// Strang splitting with precomputed kinetic phases. Consecutive half
/// potential steps are fused because the phase step leaves `|psi|` fixed.
pub struct Propagator {
    grid: Grid,
    hbar: f64,
    eta: f64,
    dt: f64,
    linear: Vec<f64>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
    steps_taken: usize,
}

impl Propagator {
    pub fn new(model: &LatticeModel, params: &SemiclassicalParams, dt: f64) -> Result<Self> {
        params.validate()?;
        let grid = model.grid().clone();
        let hbar = params.hbar;
        let linear = model
            .potential()
            .iter()
            .zip(model.perturbation())
            .map(|(v, w)| v + params.f * w)
            .collect();
        let kinetic = grid
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0, -hbar * k * k * dt))
            .collect();
        let scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
        Ok(Self { grid, hbar, eta: params.eta, dt, linear, kinetic, scratch, steps_taken: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn phase(&self, psi: &mut [Complex64], fraction: f64) {
        let c = -fraction * self.dt / self.hbar;
        for (z, u) in psi.iter_mut().zip(&self.linear) {
            let theta = c * (u + self.eta * z.norm_sqr());
            *z *= Complex64::from_polar(1.0, theta);
        }
    }

    fn kinetic(&mut self, psi: &mut [Complex64]) {
        self.grid.fft_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.kinetic).for_each(|(z, k)| *z *= k);
        self.grid.ifft_with_scratch(psi, &mut self.scratch);
    }

    /// Advances `state` by `steps` full Strang steps.
    pub fn advance(&mut self, state: &mut FieldState, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        self.grid.check_len(state.values.len())?;
        let psi = &mut state.values;
        self.phase(psi, 0.5);
        for s in 0..steps {
            self.kinetic(psi);
            self.phase(psi, if s + 1 == steps { 0.5 } else { 1.0 });
            // cheap finiteness probe every 64 steps and at the end
            if (s % 64 == 63 || s + 1 == steps) && !psi.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { step: self.steps_taken + s + 1 });
            }
        }
        self.steps_taken += steps;
        state.tau += steps as f64 * self.dt;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub tau: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub grad_norm: f64,
    pub sup_norm: f64,
    /// `||Pi_perp psi||` when band data is attached to the monitor.
    pub perp_norm: Option<f64>,
    pub grad_flag: bool,
    pub sup_flag: bool,
    pub drift_flag: bool,
}

/// Monitors relative to the initial state. The a priori constants default
/// to `||psi_0'|| hbar^(1/2)` and `||psi_0||_inf hbar^(1/4)`.
pub struct Monitor<'a> {
    model: &'a LatticeModel,
    params: SemiclassicalParams,
    bands: Option<&'a BandData>,
    mass0: f64,
    energy0: f64,
    pub grad_constant: f64,
    pub sup_constant: f64,
    drift_tolerance: f64,
    pub reports: Vec<ConservationReport>,
}

impl<'a> Monitor<'a> {
    pub fn new(
        psi0: &FieldState,
        model: &'a LatticeModel,
        params: &SemiclassicalParams,
        bands: Option<&'a BandData>,
        drift_tolerance: f64,
    ) -> Self {
        let grid = model.grid();
        let h = params.hbar;
        let mut m = Self {
            model,
            params: *params,
            bands,
            mass0: grid.norm(&psi0.values),
            energy0: energy(&psi0.values, model, params),
            grad_constant: grid.gradient_norm(&psi0.values) * h.sqrt(),
            sup_constant: grid.sup_norm(&psi0.values) * h.powf(0.25),
            drift_tolerance,
            reports: Vec::new(),
        };
        m.record(psi0);
        m
    }

    /// Replaces the reference constants, e.g. with values fitted at a larger hbar.
    pub fn with_constants(mut self, grad_constant: f64, sup_constant: f64) -> Self {
        self.grad_constant = grad_constant;
        self.sup_constant = sup_constant;
        for r in &mut self.reports {
            let h = self.params.hbar;
            r.grad_flag = r.grad_norm * h.sqrt() > 3.0 * grad_constant;
            r.sup_flag = r.sup_norm * h.powf(0.25) > 3.0 * sup_constant;
        }
        self
    }

    pub fn evaluate(&self, psi: &FieldState) -> ConservationReport {
        let grid = self.model.grid();
        let h = self.params.hbar;
        let mass = grid.norm(&psi.values);
        let e = energy(&psi.values, self.model, &self.params);
        let energy_drift = if self.energy0 != 0.0 {
            (e - self.energy0).abs() / self.energy0.abs()
        } else {
            (e - self.energy0).abs()
        };
        let grad_norm = grid.gradient_norm(&psi.values);
        let sup_norm = grid.sup_norm(&psi.values);
        let perp_norm = self.bands.map(|b| {
            let p = b.project(&psi.values);
            let d: Vec<Complex64> = psi.values.iter().zip(&p).map(|(a, b)| a - b).collect();
            grid.norm(&d)
        });
        ConservationReport {
            tau: psi.tau,
            mass_drift: (mass - self.mass0).abs(),
            energy_drift,
            grad_norm,
            sup_norm,
            perp_norm,
            grad_flag: grad_norm * h.sqrt() > 3.0 * self.grad_constant,
            sup_flag: sup_norm * h.powf(0.25) > 3.0 * self.sup_constant,
            drift_flag: energy_drift > self.drift_tolerance,
        }
    }

    pub fn record(&mut self, psi: &FieldState) -> ConservationReport {
        let r = self.evaluate(psi);
        self.reports.push(r);
        r
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.reports.iter().map(|r| r.mass_drift).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.reports.iter().map(|r| r.energy_drift).fold(0.0, f64::max)
    }

    pub fn max_grad_norm(&self) -> f64 {
        self.reports.iter().map(|r| r.grad_norm).fold(0.0, f64::max)
    }

    pub fn max_sup_norm(&self) -> f64 {
        self.reports.iter().map(|r| r.sup_norm).fold(0.0, f64::max)
    }

    pub fn any_flag(&self) -> bool {
        self.reports.iter().any(|r| r.grad_flag || r.sup_flag || r.drift_flag)
    }

    pub fn table(&self) -> Table {
        conservation_table(&self.reports)
    }
}

/// `tau, mass_drift, energy_drift, grad_norm, sup_norm`.
pub fn conservation_table(reports: &[ConservationReport]) -> Table {
    let mut t = Table::new(&["tau", "mass_drift", "energy_drift", "grad_norm", "sup_norm"]);
    for r in reports {
        t.push_floats(&[r.tau, r.mass_drift, r.energy_drift, r.grad_norm, r.sup_norm]);
    }
    t
}

/// Runs the configured propagation, monitoring every `monitor_stride` steps.
/// `on_sample` sees the state at every monitor time, including `tau = 0`.
pub fn propagate<'a, C>(
    psi0: &FieldState,
    model: &'a LatticeModel,
    params: &SemiclassicalParams,
    config: &PropagatorConfig,
    bands: Option<&'a BandData>,
    mut on_sample: C,
) -> Result<(FieldState, Monitor<'a>)>
where
    C: FnMut(&FieldState) -> Result<()>,
{
    config.check_phase_rule(model, params)?;
    model.grid().check_len(psi0.values.len())?;
    let total = config.num_steps();
    let dt = config.effective_dt();
    let mut prop = Propagator::new(model, params, dt)?;
    let mut state = psi0.clone();
    let mut monitor = Monitor::new(psi0, model, params, bands, config.drift_tolerance);
    on_sample(&state)?;
    let mut done = 0;
    while done < total {
        let n = config.monitor_stride.min(total - done);
        prop.advance(&mut state, n)?;
        done += n;
        // keep tau on the exact grid of step times
        state.tau = psi0.tau + done as f64 * dt;
        monitor.record(&state);
        on_sample(&state)?;
    }
    Ok((state, monitor))
}

/// Grid snapshot: `x, re, im` per row.
pub fn snapshot_table(grid: &Grid, psi: &FieldState) -> Table {
    let mut t = Table::new(&["x", "re", "im"]);
    for (x, z) in grid.x().iter().zip(&psi.values) {
        t.push_floats(&[*x, z.re, z.im]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Perturbation, Potential};
    use crate::spectral::compute_band_data;
    use std::f64::consts::PI;

    fn free_model() -> LatticeModel {
        LatticeModel::new(1.0, 8, 32, Potential::Constant { value: 0.0 }, Perturbation::Zero).unwrap()
    }

    #[test]
    fn plane_wave_is_exact() {
        let m = free_model();
        let g = m.grid();
        let h = 0.3;
        let p = SemiclassicalParams::custom(h, 0.0, 0.0).unwrap();
        let k = 2.0 * PI * 5.0 / g.length();
        let psi: Vec<Complex64> = g.x().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let dt = 0.01;
        let out = step(&FieldState::new(0.0, psi.clone()), dt, &m, &p).unwrap();
        for (z, x) in out.values.iter().zip(g.x()) {
            let exact = Complex64::from_polar(1.0, k * x - h * k * k * dt);
            assert!((z - exact).norm() < 1e-10);
        }
    }

    #[test]
    fn phase_rule_enforced() {
        let m = LatticeModel::new(1.0, 8, 64, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Zero).unwrap();
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let psi = FieldState::new(0.0, vec![Complex64::new(1.0, 0.0); m.grid().len()]);
        assert!(matches!(step(&psi, 0.02, &m, &p), Err(Error::TimeStep { .. })));
        assert!(step(&psi, 0.005, &m, &p).is_ok());
        let d = PropagatorConfig::default_dt(&m, &p);
        assert!((d - 0.005).abs() < 1e-15);
    }

    #[test]
    fn nan_reports_step() {
        let m = free_model();
        let p = SemiclassicalParams::custom(0.3, 0.0, 0.0).unwrap();
        let mut psi = vec![Complex64::new(0.0, 0.0); m.grid().len()];
        psi[3] = Complex64::new(f64::NAN, 0.0);
        let mut prop = Propagator::new(&m, &p, 0.01).unwrap();
        let mut s = FieldState::new(0.0, psi);
        assert!(matches!(prop.advance(&mut s, 5), Err(Error::NonFinite { step: 5 })));
    }

    #[test]
    fn energy_homogeneity_and_rayleigh_quotient() {
        let m = LatticeModel::new(1.0, 8, 128, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Cos { amplitude: 1.0 }).unwrap();
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let b = compute_band_data(&m, &p, 2).unwrap();
        let phi = &b.first().states[0];
        let e = energy(phi, &m, &p);
        assert!((e - b.first().energies[0]).abs() < 1e-8);
        let q = SemiclassicalParams::custom(0.1, 0.3, 0.0).unwrap();
        let double: Vec<Complex64> = phi.iter().map(|z| z * 2.0).collect();
        assert!((energy(&double, &m, &q) - 4.0 * energy(phi, &m, &q)).abs() < 1e-10);
    }

    #[test]
    fn bloch_state_is_stationary() {
        let m = LatticeModel::new(1.0, 8, 128, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Zero).unwrap();
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let b = compute_band_data(&m, &p, 2).unwrap();
        let phi = b.first().states[2].clone();
        let cfg = PropagatorConfig::new(0.002, 1.0, 50, 1e-8).unwrap();
        let (end, mon) = propagate(&FieldState::new(0.0, phi.clone()), &m, &p, &cfg, Some(&b), |_| Ok(())).unwrap();
        assert!((end.tau - 1.0).abs() < 1e-12);
        assert!((m.grid().inner(&phi, &end.values).norm() - 1.0).abs() < 1e-8);
        assert!(mon.reports[0].perp_norm.unwrap() < 1e-10);
        let r = mon.reports.last().unwrap();
        assert!(!mon.any_flag(), "{r:?}");
        assert!(mon.max_mass_drift() < 1e-12);
    }
}
