//! Bloch operator `H_B = -hbar^2 d^2/dx^2 + V`, its first bands and the
//! first-band projector.
//!
//! The global pseudospectral operator on `N M` points is block diagonal in
//! the quasimomenta `k_j = 2 pi j / (N a)`: block `j` couples exactly the
//! global modes `2 pi m / a + k_j`, `m = -M/2 .. M/2-1`. Band data are
//! therefore computed from `N` dense `M x M` cell problems and the resulting
//! Bloch states are exact eigenvectors of the global discrete operator.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::basis;
use crate::eigen::hermitian_eigen;
use crate::error::{Error, Result};
use crate::grid::{FieldState, Grid};
use crate::model::{LatticeModel, SemiclassicalParams};

/// Pseudospectral Schrödinger operator `-hbar^2 d^2/dx^2 + U(x)`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: Grid,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
}

impl Hamiltonian {
    pub fn new(grid: &Grid, hbar: f64, potential: Vec<f64>) -> Result<Self> {
        grid.check_len(potential.len())?;
        let kinetic = grid.wavenumbers().iter().map(|k| hbar * hbar * k * k).collect();
        Ok(Self { grid: grid.clone(), kinetic, potential })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Kinetic symbol `hbar^2 k^2` in FFT order.
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut hat = u.to_vec();
        self.grid.fft(&mut hat);
        hat.iter_mut().zip(&self.kinetic).for_each(|(z, t)| *z *= t);
        self.grid.ifft(&mut hat);
        hat.iter_mut()
            .zip(u.iter().zip(&self.potential))
            .for_each(|(h, (ui, v))| *h += ui * v);
        hat
    }

    /// `<u, H u>`.
    pub fn expectation(&self, u: &[Complex64]) -> f64 {
        self.grid.inner(u, &self.apply(u)).re
    }
}

/// Bloch operator of the lattice model (no perturbation).
pub fn assemble_hamiltonian(model: &LatticeModel, params: &SemiclassicalParams) -> Result<Hamiltonian> {
    params.validate()?;
    model.grid().check_resolution(params.hbar)?;
    Hamiltonian::new(model.grid(), params.hbar, model.potential().to_vec())
}

/// One band sampled on the quasimomentum grid.
#[derive(Debug, Clone)]
pub struct Band {
    pub energies: Vec<f64>,
    /// Normalised Bloch states on the full grid, one per quasimomentum.
    pub states: Vec<Vec<Complex64>>,
}

impl Band {
    pub fn bottom(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn top(&self) -> f64 {
        self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct BandData {
    pub grid: Grid,
    pub quasimomenta: Vec<f64>,
    /// `bands[0]` is the first band.
    pub bands: Vec<Band>,
}

impl BandData {
    pub fn first(&self) -> &Band {
        &self.bands[0]
    }

    pub fn e1_bottom(&self) -> f64 {
        self.bands[0].bottom()
    }

    pub fn e1_top(&self) -> f64 {
        self.bands[0].top()
    }

    pub fn e2_bottom(&self) -> f64 {
        self.bands[1].bottom()
    }

    pub fn gap(&self) -> f64 {
        self.e2_bottom() - self.e1_top()
    }

    /// `Pi psi` onto the first band.
    pub fn project(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for phi in &self.bands[0].states {
            let c = self.grid.inner(phi, psi);
            out.iter_mut().zip(phi).for_each(|(o, p)| *o += c * p);
        }
        out
    }
}

/// Splits a state into its first-band part and the complement.
pub fn project_band(psi: &FieldState, band: &BandData) -> Result<(FieldState, FieldState)> {
    band.grid.check_len(psi.values.len())?;
    let psi1 = band.project(&psi.values);
    let perp = psi.values.iter().zip(&psi1).map(|(a, b)| a - b).collect();
    Ok((FieldState::new(psi.tau, psi1), FieldState::new(psi.tau, perp)))
}

/// Lowest `num_bands` (at least 2) bands of `H_B` on the quasimomentum grid.
pub fn compute_band_data(
    model: &LatticeModel,
    params: &SemiclassicalParams,
    num_bands: usize,
) -> Result<BandData> {
    let num_bands = num_bands.max(2);
    params.validate()?;
    let grid = model.grid();
    grid.check_resolution(params.hbar)?;
    let n = grid.num_cells();
    let m = grid.points_per_cell();
    if num_bands > m {
        return Err(Error::InvalidParams(format!("cannot resolve {num_bands} bands with {m} modes")));
    }
    let a = grid.cell_size();
    let hbar = params.hbar;

    // potential Fourier coefficients on one cell
    let mut vhat: Vec<Complex64> =
        model.potential()[..m].iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut vhat);
    vhat.iter_mut().for_each(|z| *z /= m as f64);
    let cell_inverse = planner.plan_fft_inverse(m);

    let mode = |q: usize| -> f64 {
        let l = if q < m / 2 { q as f64 } else { q as f64 - m as f64 };
        2.0 * PI * l / a
    };

    let quasimomenta: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / (n as f64 * a)).collect();
    let mut energies = vec![vec![0.0; n]; num_bands];
    let mut states = vec![vec![Vec::new(); n]; num_bands];

    for j in 0..=n / 2 {
        let k = quasimomenta[j];
        let h = DMatrix::from_fn(m, m, |r, c| {
            let mut z = vhat[(r + m - c) % m];
            if r == c {
                let g = mode(r) + k;
                z += hbar * hbar * g * g;
            }
            z
        });
        let (values, vectors) = hermitian_eigen(h)?;
        for b in 0..num_bands {
            energies[b][j] = values[b];
            let mut cell: Vec<Complex64> = vectors.column(b).iter().copied().collect();
            cell_inverse.process(&mut cell);
            let mut phi: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let y = i as f64 * grid.dx();
                    Complex64::from_polar(1.0, k * y) * cell[i % m]
                })
                .collect();
            let nrm = grid.norm(&phi);
            phi.iter_mut().for_each(|z| *z /= nrm);
            states[b][j] = phi;
        }
    }
    // k_{N-j} = -k_j modulo the reciprocal lattice; V real gives conjugate states
    for j in n / 2 + 1..n {
        for b in 0..num_bands {
            energies[b][j] = energies[b][n - j];
            states[b][j] = states[b][n - j].iter().map(|z| z.conj()).collect();
        }
    }

    let reference = if model.check_wells().is_ok() {
        basis::build_single_well(model, params, grid.central_site())
            .ok()
            .map(|w| w.ground_state)
    } else {
        None
    };
    for band in states.iter_mut() {
        for phi in band.iter_mut() {
            fix_gauge(grid, phi, reference.as_deref());
        }
    }

    let bands: Vec<Band> = energies
        .into_iter()
        .zip(states)
        .map(|(energies, states)| Band { energies, states })
        .collect();
    let data = BandData { grid: grid.clone(), quasimomenta, bands };
    let gap = data.gap();
    let scale = data.e2_bottom().abs().max(hbar * hbar);
    if gap <= 1e-10 * scale {
        return Err(Error::EmptyGap { gap });
    }
    Ok(data)
}

/// Makes `<chi, phi>` real positive; when that overlap vanishes, makes
/// `phi(0)` real positive, and failing that the largest sample.
fn fix_gauge(grid: &Grid, phi: &mut [Complex64], reference: Option<&[f64]>) {
    let mut z = Complex64::new(0.0, 0.0);
    if let Some(chi) = reference {
        z = phi.iter().zip(chi).map(|(p, c)| p * c).sum::<Complex64>() * grid.dx();
    }
    if z.norm() < 1e-12 {
        z = phi[grid.site_index(grid.central_site())].conj();
        let scale = grid.sup_norm(phi);
        if z.norm() < 1e-10 * scale {
            let imax = (0..phi.len())
                .max_by(|&a, &b| phi[a].norm().total_cmp(&phi[b].norm()))
                .unwrap_or(0);
            z = phi[imax].conj();
        }
    }
    let rot = z.conj() / z.norm();
    phi.iter_mut().for_each(|p| *p *= rot);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Perturbation, Potential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sin2(n: usize, m: usize) -> LatticeModel {
        LatticeModel::new(1.0, n, m, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Zero).unwrap()
    }

    fn random_state(grid: &Grid, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<Complex64> = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n = grid.norm(&u);
        u.iter_mut().for_each(|z| *z /= n);
        u
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let model = sin2(8, 64);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let h = assemble_hamiltonian(&model, &p).unwrap();
        let g = model.grid();
        let u = random_state(g, 1);
        let v = random_state(g, 2);
        let lhs = g.inner(&h.apply(&u), &v);
        let rhs = g.inner(&u, &h.apply(&v));
        assert!((lhs - rhs).norm() < 1e-10, "{}", (lhs - rhs).norm());
    }

    #[test]
    fn free_plane_wave_eigenvalue() {
        let model = LatticeModel::new(1.0, 8, 64, Potential::Constant { value: 0.0 }, Perturbation::Zero).unwrap();
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let h = assemble_hamiltonian(&model, &p).unwrap();
        let g = model.grid();
        let k = 2.0 * PI * 5.0 / g.length();
        let u: Vec<Complex64> = g.x().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let hu = h.apply(&u);
        for (a, b) in hu.iter().zip(&u) {
            assert!((a - b * (0.01 * k * k)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_shift_moves_expectation() {
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let base = sin2(8, 64);
        let g = base.grid();
        let h0 = assemble_hamiltonian(&base, &p).unwrap();
        let shifted: Vec<f64> = base.potential().iter().map(|v| v + 0.7).collect();
        let h1 = Hamiltonian::new(g, 0.1, shifted).unwrap();
        let u: Vec<Complex64> = random_state(g, 3).iter().map(|z| z * 2.0).collect();
        let d = h1.expectation(&u) - h0.expectation(&u);
        assert!((d - 0.7 * g.norm_sqr(&u)).abs() < 1e-10);
    }

    #[test]
    fn coarse_grid_rejected() {
        let model = sin2(8, 16);
        let p = SemiclassicalParams::custom(0.01, 0.0, 0.0).unwrap();
        assert!(matches!(assemble_hamiltonian(&model, &p), Err(Error::Resolution { .. })));
    }

    #[test]
    fn free_bands_have_empty_gap() {
        let model = LatticeModel::new(1.0, 8, 64, Potential::Constant { value: 0.0 }, Perturbation::Zero).unwrap();
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        assert!(matches!(compute_band_data(&model, &p, 2), Err(Error::EmptyGap { .. })));
    }

    #[test]
    fn bloch_states_are_orthonormal_eigenvectors() {
        let model = sin2(8, 64);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let bands = compute_band_data(&model, &p, 2).unwrap();
        let h = assemble_hamiltonian(&model, &p).unwrap();
        let g = model.grid();
        let all: Vec<&Vec<Complex64>> = bands.bands.iter().flat_map(|b| b.states.iter()).collect();
        for (i, u) in all.iter().enumerate() {
            for (j, v) in all.iter().enumerate() {
                let z = g.inner(u, v);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((z - expect).norm() < 1e-10, "{i} {j} {z}");
            }
        }
        for band in &bands.bands {
            for (e, phi) in band.energies.iter().zip(&band.states) {
                let r: Vec<Complex64> = h.apply(phi).iter().zip(phi.iter()).map(|(a, b)| a - b * e).collect();
                assert!(g.norm(&r) < 1e-9);
            }
        }
        assert!(bands.e1_bottom() <= bands.e1_top());
        assert!(bands.gap() > 0.0);
    }

    #[test]
    fn projector_properties() {
        let model = sin2(8, 64);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let bands = compute_band_data(&model, &p, 2).unwrap();
        let g = model.grid();

        let phi0 = FieldState::new(0.0, bands.first().states[0].clone());
        let (p1, perp) = project_band(&phi0, &bands).unwrap();
        assert!(g.norm(&perp.values) < 1e-12);
        let d: Vec<Complex64> = p1.values.iter().zip(&phi0.values).map(|(a, b)| a - b).collect();
        assert!(g.norm(&d) < 1e-12);

        let second = FieldState::new(0.0, bands.bands[1].states[3].clone());
        let (p1, _) = project_band(&second, &bands).unwrap();
        assert!(g.norm(&p1.values) < 1e-10);

        let psi = FieldState::new(0.0, random_state(g, 4));
        let (p1, perp) = project_band(&psi, &bands).unwrap();
        let pyth = g.norm_sqr(&psi.values) - g.norm_sqr(&p1.values) - g.norm_sqr(&perp.values);
        assert!(pyth.abs() < 1e-12);
        let pp = bands.project(&p1.values);
        let d: Vec<Complex64> = pp.iter().zip(&p1.values).map(|(a, b)| a - b).collect();
        assert!(g.norm(&d) < 1e-12);
    }

    #[test]
    fn gauge_gives_positive_reference_overlap() {
        let model = sin2(8, 64);
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let bands = compute_band_data(&model, &p, 2).unwrap();
        let well = basis::build_single_well(&model, &p, model.grid().central_site()).unwrap();
        let chi: Vec<Complex64> = well.ground_state.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for phi in &bands.first().states {
            let z = model.grid().inner(&chi, phi);
            assert!(z.re > 0.0 && z.im.abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn band_edges_independent_of_cell_count() {
        let p = SemiclassicalParams::custom(0.1, 0.0, 0.0).unwrap();
        let b8 = compute_band_data(&sin2(8, 64), &p, 2).unwrap();
        let b16 = compute_band_data(&sin2(16, 64), &p, 2).unwrap();
        assert!((b8.e1_bottom() - b16.e1_bottom()).abs() < 1e-8);
        assert!((b8.e1_top() - b16.e1_top()).abs() < 1e-8);
        assert!((b8.e2_bottom() - b16.e2_bottom()).abs() < 1e-8);
    }

    #[test]
    fn band_edges_converge_under_refinement() {
        let p = SemiclassicalParams::custom(0.05, 0.0, 0.0).unwrap();
        let coarse = compute_band_data(&sin2(4, 128), &p, 2).unwrap();
        let fine = compute_band_data(&sin2(4, 256), &p, 2).unwrap();
        assert!((coarse.e1_bottom() - fine.e1_bottom()).abs() < 1e-8);
    }
}
