//! Localized orthonormal basis of the first-band subspace and the
//! tight-binding coefficients extracted from it.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::eigen::{inverse_sqrt, lobpcg_lowest};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{LatticeModel, SemiclassicalParams};
use crate::spectral::{assemble_hamiltonian, BandData, Hamiltonian};

const WELL_RESIDUAL_TOL: f64 = 1e-10;

/// Ground state of the single-well operator `-hbar^2 d^2/dx^2 + V_n`.
#[derive(Debug, Clone)]
pub struct SingleWellProblem {
    pub site: usize,
    /// `V` on the closed cell of `site`, `max V` everywhere else.
    pub filled_potential: Vec<f64>,
    /// `Lambda_1`.
    pub energy: f64,
    /// Real, normalised, positive ground state.
    pub ground_state: Vec<f64>,
    pub residual: f64,
    /// False when `Lambda_1` lies above the barrier top.
    pub below_barrier: bool,
}

fn periodic_offset(i: usize, centre: usize, len: usize) -> usize {
    let d = (i + len - centre) % len;
    d.min(len - d)
}

/// Keeps the well of `site` and raises the core of every other well,
/// `|x - x_m| < a/4`, to the potential level at a quarter cell.
pub fn filled_potential(model: &LatticeModel, site: usize) -> Vec<f64> {
    let grid = model.grid();
    let len = grid.len();
    let cell = grid.points_per_cell();
    let half = cell / 2;
    let quarter = cell / 4;
    let centre = grid.site_index(site);
    let v = model.potential();
    let level = v[quarter];
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let own = periodic_offset(i, centre, len) <= half;
            let in_core = (i % cell).min(cell - i % cell) < quarter;
            if !own && in_core {
                x.max(level)
            } else {
                x
            }
        })
        .collect()
}

pub fn build_single_well(
    model: &LatticeModel,
    params: &SemiclassicalParams,
    site: usize,
) -> Result<SingleWellProblem> {
    model.check_wells()?;
    params.validate()?;
    let grid = model.grid();
    grid.check_resolution(params.hbar)?;
    let hbar = params.hbar;
    let site = site % grid.num_cells();
    let potential = filled_potential(model, site);
    let h = Hamiltonian::new(grid, hbar, potential.clone())?;
    let top = model.max_potential();
    let shift = top.max(hbar);

    let to_complex = |u: &[f64]| -> Vec<Complex64> { u.iter().map(|&v| Complex64::new(v, 0.0)).collect() };
    let apply = |u: &[f64]| -> Vec<f64> { h.apply(&to_complex(u)).iter().map(|z| z.re).collect() };
    let kinetic = h.kinetic_symbol().to_vec();
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut hat = to_complex(r);
        grid.fft(&mut hat);
        hat.iter_mut().zip(&kinetic).for_each(|(z, t)| *z /= t + shift);
        grid.ifft(&mut hat);
        hat.iter().map(|z| z.re).collect()
    };

    // harmonic guess from the curvature at the well bottom
    let v = model.potential();
    let len = grid.len();
    let dx = grid.dx();
    let curvature = ((v[1] + v[len - 1] - 2.0 * v[0]) / (dx * dx)).max(1e-12);
    let omega = (0.5 * curvature).sqrt();
    let centre = grid.site_index(site);
    let initial: Vec<f64> = (0..len)
        .map(|i| {
            let d = periodic_offset(i, centre, len) as f64 * dx;
            (-omega * d * d / (2.0 * hbar)).exp()
        })
        .collect();

    let pair = lobpcg_lowest(apply, precondition, initial, dx, WELL_RESIDUAL_TOL, 3000)?;
    let mut ground_state = pair.vector;
    if ground_state[centre] < 0.0 {
        ground_state.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(SingleWellProblem {
        site,
        filled_potential: potential,
        energy: pair.value,
        ground_state,
        residual: pair.residual,
        below_barrier: pair.value < top,
    })
}

/// Ground states of all `N` single-well problems.
pub fn build_all_wells(model: &LatticeModel, params: &SemiclassicalParams) -> Result<Vec<SingleWellProblem>> {
    (0..model.grid().num_cells())
        .map(|n| build_single_well(model, params, n))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LocalizedBasis {
    pub grid: Grid,
    /// `u_n`, one per lattice site.
    pub functions: Vec<Vec<Complex64>>,
    /// `Lambda_1` of the single-well problems.
    pub lambda1: f64,
    /// `max |<u_n, u_m> - delta_nm|`.
    pub gram_residual: f64,
    /// Condition number of the Gram matrix of the projected well states.
    pub gram_condition: f64,
    /// `||u_c - psi_c||` at the central site.
    pub seed_distance: f64,
}

impl LocalizedBasis {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `sum_n c_n u_n`.
    pub fn synthesize(&self, amplitudes: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (c, u) in amplitudes.iter().zip(&self.functions) {
            out.iter_mut().zip(u).for_each(|(o, ui)| *o += c * ui);
        }
        out
    }

    /// `<u_n, psi>` for all `n`.
    pub fn coefficients(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.functions.iter().map(|u| self.grid.inner(u, psi)).collect()
    }
}

/// Löwdin-orthonormalised band projections of the well ground states.
pub fn construct_basis(band: &BandData, wells: &[SingleWellProblem]) -> Result<LocalizedBasis> {
    let grid = &band.grid;
    let n = grid.num_cells();
    if wells.len() != n {
        return Err(Error::InvalidModel(format!("need {n} well states, got {}", wells.len())));
    }
    for w in wells {
        grid.check_len(w.ground_state.len())?;
    }
    let lambda1 = wells[0].energy;

    let seeds: Vec<Vec<Complex64>> = wells
        .iter()
        .map(|w| w.ground_state.iter().map(|&v| Complex64::new(v, 0.0)).collect())
        .collect();
    let projected: Vec<Vec<Complex64>> = seeds.iter().map(|s| band.project(s)).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| grid.inner(&projected[i], &projected[j]));
    let (s, condition) = inverse_sqrt(&gram)?;

    let functions: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut u = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (i, v) in projected.iter().enumerate() {
                let c = s[(i, j)];
                u.iter_mut().zip(v).for_each(|(o, vi)| *o += c * vi);
            }
            u
        })
        .collect();

    let mut gram_residual: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let z = grid.inner(&functions[i], &functions[j]);
            let expect = if i == j { 1.0 } else { 0.0 };
            gram_residual = gram_residual.max((z - expect).norm());
        }
    }
    let c = grid.central_site();
    let diff: Vec<Complex64> = functions[c].iter().zip(&seeds[c]).map(|(a, b)| a - b).collect();
    Ok(LocalizedBasis {
        grid: grid.clone(),
        functions,
        lambda1,
        gram_residual,
        gram_condition: condition,
        seed_distance: grid.norm(&diff),
    })
}

/// Constants of the lattice equation plus the residual matrices used by
/// the remainder diagnostics.
#[derive(Debug, Clone)]
pub struct TightBindingCoefficients {
    pub lambda1: f64,
    pub beta: f64,
    /// `<u_n, W u_n>`.
    pub chi: Vec<f64>,
    /// `||u_0||_4^4`.
    pub c1: f64,
    pub s0: f64,
    /// `H_nm = <u_n, H_B u_m>`.
    pub hamiltonian: DMatrix<Complex64>,
    /// `H - Lambda_1 I + beta (nearest-neighbour ring adjacency)`.
    pub residual: DMatrix<Complex64>,
    /// `<u_n, W u_m>`.
    pub perturbation: DMatrix<Complex64>,
}

impl TightBindingCoefficients {
    /// Coefficients for a bare lattice; residual matrices are zero.
    pub fn from_parts(lambda1: f64, beta: f64, chi: Vec<f64>, c1: f64) -> Self {
        let n = chi.len();
        let zero = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        Self {
            lambda1,
            beta,
            chi,
            c1,
            s0: 0.0,
            hamiltonian: zero.clone(),
            residual: zero.clone(),
            perturbation: zero,
        }
    }

    pub fn num_sites(&self) -> usize {
        self.chi.len()
    }

    /// Max row sum of `|D~_nm|`, an l2 operator-norm bound for a Hermitian matrix.
    pub fn residual_norm(&self) -> f64 {
        max_row_sum(&self.residual)
    }

    /// Max row sum of the off-diagonal part of `<u_n, W u_m>`.
    pub fn off_diagonal_perturbation_norm(&self) -> f64 {
        let mut m = self.perturbation.clone();
        for i in 0..m.nrows() {
            m[(i, i)] = Complex64::new(0.0, 0.0);
        }
        max_row_sum(&m)
    }
}

fn max_row_sum(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn ring_adjacent(n: usize, i: usize, j: usize) -> bool {
    (i + 1) % n == j || (j + 1) % n == i
}

pub fn extract_coefficients(
    basis: &LocalizedBasis,
    _band: &BandData,
    model: &LatticeModel,
    params: &SemiclassicalParams,
) -> Result<TightBindingCoefficients> {
    let grid = model.grid();
    let n = basis.len();
    let h = assemble_hamiltonian(model, &params.linear())?;
    let mut functions = basis.functions.clone();

    let mut hamiltonian = matrix_elements(grid, &functions, |u| h.apply(u));
    let mut beta = -hamiltonian[(0, 1)].re;
    if beta <= 0.0 {
        // flip every function to a positive lobe at its own well bottom
        for (site, u) in functions.iter_mut().enumerate() {
            let z = u[grid.site_index(site)];
            if z.norm() > 0.0 {
                let rot = z.conj() / z.norm();
                u.iter_mut().for_each(|v| *v *= rot);
            }
        }
        hamiltonian = matrix_elements(grid, &functions, |u| h.apply(u));
        beta = -hamiltonian[(0, 1)].re;
        if beta <= 0.0 {
            return Err(Error::GaugeFailure { beta });
        }
    }

    let lambda1 = basis.lambda1;
    let residual = DMatrix::from_fn(n, n, |i, j| {
        let mut z = hamiltonian[(i, j)];
        if i == j {
            z -= lambda1;
        }
        if ring_adjacent(n, i, j) {
            z += beta;
        }
        z
    });

    let w = model.perturbation();
    let perturbation = matrix_elements(grid, &functions, |u| {
        u.iter().zip(w).map(|(a, b)| a * b).collect()
    });
    let chi = (0..n).map(|i| perturbation[(i, i)].re).collect();
    let c1 = grid.l4_pow4(&functions[0]);
    Ok(TightBindingCoefficients {
        lambda1,
        beta,
        chi,
        c1,
        s0: agmon_distance(model),
        hamiltonian,
        residual,
        perturbation,
    })
}

fn matrix_elements<F>(grid: &Grid, functions: &[Vec<Complex64>], op: F) -> DMatrix<Complex64>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let n = functions.len();
    let images: Vec<Vec<Complex64>> = functions.iter().map(|u| op(u)).collect();
    let mut m = DMatrix::from_fn(n, n, |i, j| grid.inner(&functions[i], &images[j]));
    // symmetrise round-off
    for i in 0..n {
        for j in i..n {
            let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// `S_0 = int_{x_n}^{x_{n+1}} sqrt(V - V_min) dx`, composite Simpson on the grid.
pub fn agmon_distance(model: &LatticeModel) -> f64 {
    let grid = model.grid();
    let m = grid.points_per_cell();
    let v = model.potential();
    let vmin = model.min_potential();
    let f = |i: usize| (v[i % v.len()] - vmin).max(0.0).sqrt();
    let mut s = f(0) + f(m);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) };
    }
    s * grid.dx() / 3.0
}

/// Band data, wells, basis and coefficients for one parameter point.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub bands: BandData,
    pub wells: Vec<SingleWellProblem>,
    pub basis: LocalizedBasis,
    pub coefficients: TightBindingCoefficients,
}

impl Reduction {
    pub fn build(model: &LatticeModel, params: &SemiclassicalParams) -> Result<Self> {
        let linear = params.linear();
        let bands = crate::spectral::compute_band_data(model, &linear, 2)?;
        let wells = build_all_wells(model, &linear)?;
        let lambda = wells[0].energy;
        if let Some(w) = wells.iter().find(|w| (w.energy - lambda).abs() > 1e-10) {
            return Err(Error::EigenSolver(format!(
                "single-well energy at site {} differs from site 0 by {:.3e}",
                w.site,
                (w.energy - lambda).abs()
            )));
        }
        let basis = construct_basis(&bands, &wells)?;
        let coefficients = extract_coefficients(&basis, &bands, model, &linear)?;
        Ok(Self { bands, wells, basis, coefficients })
    }
}
