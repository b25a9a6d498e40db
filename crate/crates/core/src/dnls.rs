//! Tight-binding lattice equation on the `N`-site ring,
//! `i hbar g_n' = -beta (g_{n+1} + g_{n-1}) + F chi_n g_n + eta C1 |g_n|^2 g_n`.

use num_complex::Complex64;

use crate::basis::TightBindingCoefficients;
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::SemiclassicalParams;

pub const NORM_DRIFT_LIMIT: f64 = 1e-10;
pub const MAX_HALVINGS: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub tau: f64,
    pub amplitudes: Vec<Complex64>,
}

impl LatticeState {
    pub fn new(tau: f64, amplitudes: Vec<Complex64>) -> Self {
        Self { tau, amplitudes }
    }

    pub fn norm(&self) -> f64 {
        l2(&self.amplitudes)
    }
}

pub fn l2(g: &[Complex64]) -> f64 {
    g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `G_n(g) = -beta (g_{n+1} + g_{n-1}) + F chi_n g_n + eta C1 |g_n|^2 g_n`.
pub fn lattice_operator(g: &[Complex64], coeffs: &TightBindingCoefficients, params: &SemiclassicalParams) -> Vec<Complex64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            let hop = g[(i + 1) % n] + g[(i + n - 1) % n];
            -coeffs.beta * hop + (params.f * coeffs.chi[i] + params.eta * coeffs.c1 * g[i].norm_sqr()) * g[i]
        })
        .collect()
}

/// `(1 / i hbar) G(g)`.
pub fn dnls_rhs(g: &LatticeState, coeffs: &TightBindingCoefficients, params: &SemiclassicalParams) -> Vec<Complex64> {
    let s = Complex64::new(0.0, -1.0 / params.hbar);
    lattice_operator(&g.amplitudes, coeffs, params).into_iter().map(|z| s * z).collect()
}

/// `0.1 hbar / max(beta, F max|chi|, |eta| C1)`.
pub fn default_dt(coeffs: &TightBindingCoefficients, params: &SemiclassicalParams) -> f64 {
    let chi = coeffs.chi.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let rate = coeffs.beta.max(params.f * chi).max(params.eta.abs() * coeffs.c1);
    if rate > 0.0 {
        0.1 * params.hbar / rate
    } else {
        f64::INFINITY
    }
}

/// Multiplies every amplitude by `e^{i Lambda_1 tau / hbar}`.
pub fn apply_gauge(g: &LatticeState, lambda1: f64, hbar: f64) -> LatticeState {
    let phase = Complex64::from_polar(1.0, lambda1 * g.tau / hbar);
    LatticeState::new(g.tau, g.amplitudes.iter().map(|z| z * phase).collect())
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<LatticeState>,
    /// Internal RK4 step actually used.
    pub dt: f64,
    pub halvings: u32,
    /// `max_tau | ||g(tau)|| - ||g(0)|| |`.
    pub norm_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &LatticeState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn table(&self) -> Table {
        let n = self.states.first().map_or(0, |s| s.amplitudes.len());
        let mut header = vec!["tau".to_string()];
        for i in 0..n {
            header.push(format!("re_g{i}"));
            header.push(format!("im_g{i}"));
        }
        let mut t = Table::new(&header);
        for s in &self.states {
            let mut row = vec![s.tau];
            for z in &s.amplitudes {
                row.push(z.re);
                row.push(z.im);
            }
            t.push_floats(&row);
        }
        t
    }

    /// `tau, norm_drift, mean_site, site_variance, edge_amplitude`.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["tau", "norm_drift", "mean_site", "site_variance", "edge_amplitude"]);
        let n0 = self.states.first().map_or(0.0, |s| s.norm());
        for s in &self.states {
            let (mean, var) = population_moments(&s.amplitudes);
            t.push_floats(&[s.tau, (s.norm() - n0).abs(), mean, var, edge_amplitude(&s.amplitudes)]);
        }
        t
    }
}

/// Mean and variance of the site index under `|g_n|^2 / ||g||^2`.
pub fn population_moments(g: &[Complex64]) -> (f64, f64) {
    let total: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let mean = g.iter().enumerate().map(|(i, z)| i as f64 * z.norm_sqr()).sum::<f64>() / total;
    let var = g
        .iter()
        .enumerate()
        .map(|(i, z)| (i as f64 - mean).powi(2) * z.norm_sqr())
        .sum::<f64>()
        / total;
    (mean, var)
}

/// `max(|g_0|, |g_{N-1}|)`, the sites adjacent to the ring seam.
pub fn edge_amplitude(g: &[Complex64]) -> f64 {
    match g {
        [] => 0.0,
        [a] => a.norm(),
        [a, .., b] => a.norm().max(b.norm()),
    }
}

fn rk4_step(g: &mut Vec<Complex64>, dt: f64, coeffs: &TightBindingCoefficients, params: &SemiclassicalParams, buf: &mut [Vec<Complex64>; 5]) {
    let s = Complex64::new(0.0, -1.0 / params.hbar);
    let f = |x: &[Complex64]| -> Vec<Complex64> {
        lattice_operator(x, coeffs, params).into_iter().map(|z| s * z).collect()
    };
    let n = g.len();
    let [k1, k2, k3, k4, tmp] = buf;
    *k1 = f(g);
    for i in 0..n {
        tmp[i] = g[i] + 0.5 * dt * k1[i];
    }
    *k2 = f(tmp);
    for i in 0..n {
        tmp[i] = g[i] + 0.5 * dt * k2[i];
    }
    *k3 = f(tmp);
    for i in 0..n {
        tmp[i] = g[i] + dt * k3[i];
    }
    *k4 = f(tmp);
    for i in 0..n {
        g[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Fixed-step RK4 without the drift guard; returns the state every
/// `stride` steps, starting with `g0`.
pub fn rk4_fixed(
    g0: &LatticeState,
    coeffs: &TightBindingCoefficients,
    params: &SemiclassicalParams,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<LatticeState>> {
    let n = g0.amplitudes.len();
    if n != coeffs.num_sites() {
        return Err(Error::GridMismatch { expected: coeffs.num_sites(), got: n });
    }
    let stride = stride.max(1);
    let mut g = g0.amplitudes.clone();
    let zero = vec![Complex64::new(0.0, 0.0); n];
    let mut buf = [zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero];
    let mut out = vec![g0.clone()];
    for s in 1..=steps {
        rk4_step(&mut g, dt, coeffs, params, &mut buf);
        if s % stride == 0 || s == steps {
            if !g.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { step: s });
            }
            if s % stride == 0 {
                out.push(LatticeState::new(g0.tau + s as f64 * dt, g.clone()));
            }
        }
    }
    Ok(out)
}

/// RK4 with outputs every `output_dt` for `outputs` intervals. The internal
/// step starts at the largest divisor of `output_dt` not exceeding `dt_max`
/// and is halved (up to six times) until the norm drift is below `1e-10`.
pub fn integrate_sampled(
    g0: &LatticeState,
    coeffs: &TightBindingCoefficients,
    params: &SemiclassicalParams,
    output_dt: f64,
    outputs: usize,
    dt_max: f64,
) -> Result<Trajectory> {
    if !(output_dt > 0.0) || !(dt_max > 0.0) {
        return Err(Error::InvalidParams("time steps must be positive".into()));
    }
    let base = if dt_max.is_finite() { (output_dt / dt_max - 1e-9).ceil().max(1.0) as usize } else { 1 };
    let n0 = g0.norm();
    let mut last_drift = f64::NAN;
    for halvings in 0..=MAX_HALVINGS {
        let sub = base << halvings;
        let dt = output_dt / sub as f64;
        let states = rk4_fixed(g0, coeffs, params, dt, sub * outputs, sub)?;
        // rk4_fixed stamps tau as g0.tau + s dt; re-stamp on the output grid
        let states: Vec<LatticeState> = states
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.tau = g0.tau + i as f64 * output_dt;
                s
            })
            .collect();
        let drift = states.iter().map(|s| (s.norm() - n0).abs()).fold(0.0, f64::max);
        if drift <= NORM_DRIFT_LIMIT {
            return Ok(Trajectory { states, dt, halvings, norm_drift: drift });
        }
        last_drift = drift;
    }
    Err(Error::NormDrift { drift: last_drift, halvings: MAX_HALVINGS })
}

/// Trajectory on `[tau_0, tau_0 + T]` with output at every step of size
/// `dt` (shrunk to divide `T`); halved steps still report on that grid.
pub fn integrate(
    g0: &LatticeState,
    coeffs: &TightBindingCoefficients,
    params: &SemiclassicalParams,
    final_time: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(final_time > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParams("final time and step must be positive".into()));
    }
    let steps = ((final_time / dt) - 1e-9).ceil().max(1.0) as usize;
    integrate_sampled(g0, coeffs, params, final_time / steps as f64, steps, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(n: usize, beta: f64, chi: f64, c1: f64) -> TightBindingCoefficients {
        TightBindingCoefficients::from_parts(0.3, beta, vec![chi; n], c1)
    }

    fn delta(n: usize, at: usize) -> Vec<Complex64> {
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        g[at] = Complex64::new(1.0, 0.0);
        g
    }

    #[test]
    fn rhs_of_free_lattice_vanishes() {
        let c = coeffs(6, 0.0, 0.0, 1.0);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let g = LatticeState::new(0.0, vec![Complex64::new(0.3, 0.2); 6]);
        assert!(dnls_rhs(&g, &c, &p).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn hopping_stencil_wraps() {
        let c = coeffs(6, 0.02, 0.0, 1.0);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let r = dnls_rhs(&LatticeState::new(0.0, delta(6, 0)), &c, &p);
        for (i, z) in r.iter().enumerate() {
            let expect = if i == 1 || i == 5 { 0.02 / 0.1 } else { 0.0 };
            assert!((z.norm() - expect).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn pure_phase_rotation() {
        let c = coeffs(5, 0.0, 0.0, 1.7);
        let p = SemiclassicalParams::custom(0.2, 0.0, 0.4).unwrap();
        let g0: Vec<Complex64> = (0..5).map(|i| Complex64::new(0.1 * i as f64, 0.2)).collect();
        let tr = integrate(&LatticeState::new(0.0, g0.clone()), &c, &p, 1.0, 0.01).unwrap();
        let end = tr.last();
        for (a, b) in end.amplitudes.iter().zip(&g0) {
            let exact = b * Complex64::from_polar(1.0, -0.4 * 1.7 * b.norm_sqr() * 1.0 / 0.2);
            assert!((a - exact).norm() < 1e-10);
        }
    }

    #[test]
    fn gauge_group_property() {
        let g = LatticeState::new(0.7, vec![Complex64::new(0.6, 0.8), Complex64::new(0.0, 1.0)]);
        let once = apply_gauge(&g, 0.3, 0.1);
        assert!((once.norm() - g.norm()).abs() < 1e-15);
        let twice = apply_gauge(&once, 0.3, 0.1);
        let g2 = apply_gauge(&LatticeState::new(1.4, g.amplitudes.clone()), 0.3, 0.1);
        for (a, b) in twice.amplitudes.iter().zip(&g2.amplitudes) {
            assert!((a - b).norm() < 1e-13);
        }
        let zero = apply_gauge(&LatticeState::new(0.0, g.amplitudes.clone()), 0.3, 0.1);
        assert_eq!(zero.amplitudes, g.amplitudes);
    }

    #[test]
    fn drift_guard_halves() {
        let c = coeffs(8, 0.05, 0.0, 1.0);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let tr = integrate(&LatticeState::new(0.0, delta(8, 4)), &c, &p, 2.0, 0.2).unwrap();
        assert!(tr.halvings > 0);
        assert!(tr.norm_drift <= NORM_DRIFT_LIMIT);
        assert_eq!(tr.states.len(), 11);
        assert!((tr.last().tau - 2.0).abs() < 1e-12);
    }

    #[test]
    fn moments_of_delta() {
        let (m, v) = population_moments(&delta(8, 3));
        assert_eq!((m, v), (3.0, 0.0));
        assert_eq!(edge_amplitude(&delta(8, 7)), 1.0);
    }
}
