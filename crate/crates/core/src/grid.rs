//! Uniform periodic grid over `num_cells` lattice cells with FFT helpers.
//!
//! The domain is `[-N a / 2, N a / 2)`. Grid point `i` sits at
//! `x_i = -N a / 2 + i dx` with `dx = a / M`, so the centre of lattice site
//! `n` is grid index `n M`. All inner products carry the quadrature weight
//! `dx`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Grid {
    cell_size: f64,
    num_cells: usize,
    points_per_cell: usize,
    dx: f64,
    x: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("cell_size", &self.cell_size)
            .field("num_cells", &self.num_cells)
            .field("points_per_cell", &self.points_per_cell)
            .finish()
    }
}

impl Grid {
    pub fn new(cell_size: f64, num_cells: usize, points_per_cell: usize) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidModel(format!("cell size must be positive, got {cell_size}")));
        }
        if num_cells < 4 || num_cells % 2 != 0 {
            return Err(Error::InvalidModel(format!(
                "N must be even and at least 4, got {num_cells}"
            )));
        }
        if points_per_cell < 4 || points_per_cell % 2 != 0 {
            return Err(Error::InvalidModel(format!(
                "grid points per cell must be even and at least 4, got {points_per_cell}"
            )));
        }
        let len = num_cells * points_per_cell;
        let length = cell_size * num_cells as f64;
        let dx = cell_size / points_per_cell as f64;
        let x = (0..len).map(|i| -0.5 * length + i as f64 * dx).collect();
        let wavenumbers = (0..len)
            .map(|i| {
                let l = if i < len / 2 { i as f64 } else { i as f64 - len as f64 };
                2.0 * PI * l / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        Ok(Self {
            cell_size,
            num_cells,
            points_per_cell,
            dx,
            x,
            wavenumbers,
            forward,
            inverse,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn points_per_cell(&self) -> usize {
        self.points_per_cell
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.cell_size * self.num_cells as f64
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Grid index of the bottom of well `site`.
    pub fn site_index(&self, site: usize) -> usize {
        (site % self.num_cells) * self.points_per_cell
    }

    pub fn site_position(&self, site: usize) -> f64 {
        self.x[self.site_index(site)]
    }

    /// Site whose well bottom is at `x = 0`.
    pub fn central_site(&self) -> usize {
        self.num_cells / 2
    }

    /// Unnormalised forward transform in place.
    pub fn fft(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Normalised inverse transform in place.
    pub fn ifft(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn fft_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(data, scratch);
    }

    pub fn ifft_with_scratch(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, scratch);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// `<u, v> = sum conj(u) v dx`.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        debug_assert_eq!(u.len(), v.len());
        let s: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
        s * self.dx
    }

    pub fn norm_sqr(&self, u: &[Complex64]) -> f64 {
        u.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn norm(&self, u: &[Complex64]) -> f64 {
        self.norm_sqr(u).sqrt()
    }

    pub fn l4_pow4(&self, u: &[Complex64]) -> f64 {
        u.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * self.dx
    }

    pub fn sup_norm(&self, u: &[Complex64]) -> f64 {
        u.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `||d u / dx||` via spectral differentiation.
    pub fn gradient_norm(&self, u: &[Complex64]) -> f64 {
        let mut hat = u.to_vec();
        self.fft(&mut hat);
        let s: f64 = hat
            .iter()
            .zip(&self.wavenumbers)
            .map(|(z, k)| k * k * z.norm_sqr())
            .sum();
        (s * self.dx / self.len() as f64).sqrt()
    }

    /// Translate a grid function by `sites` lattice cells (periodic).
    pub fn shift_sites(&self, u: &[Complex64], sites: isize) -> Vec<Complex64> {
        let len = self.len() as isize;
        let shift = (sites * self.points_per_cell as isize).rem_euclid(len) as usize;
        let mut out = u.to_vec();
        out.rotate_right(shift);
        out
    }

    pub fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::GridMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    /// Enforces `dx <= sqrt(hbar) / 8`.
    pub fn check_resolution(&self, hbar: f64) -> Result<()> {
        let limit = hbar.sqrt() / 8.0;
        if self.dx > limit {
            return Err(Error::Resolution { dx: self.dx, limit });
        }
        Ok(())
    }
}

/// Complex samples on the grid at time `tau`.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub tau: f64,
    pub values: Vec<Complex64>,
}

impl FieldState {
    pub fn new(tau: f64, values: Vec<Complex64>) -> Self {
        Self { tau, values }
    }

    pub fn norm(&self, grid: &Grid) -> f64 {
        grid.norm(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_cell_count() {
        assert!(Grid::new(1.0, 7, 32).is_err());
        assert!(Grid::new(1.0, 2, 32).is_err());
        assert!(Grid::new(1.0, 8, 32).is_ok());
    }

    #[test]
    fn site_zero_is_the_domain_start() {
        let g = Grid::new(1.0, 8, 16).unwrap();
        assert_eq!(g.site_position(0), -4.0);
        assert_eq!(g.site_position(g.central_site()), 0.0);
    }

    #[test]
    fn gradient_of_plane_wave() {
        let g = Grid::new(1.0, 8, 32).unwrap();
        let k = 2.0 * PI * 3.0 / g.length();
        let u: Vec<Complex64> = g.x().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let n = g.norm(&u);
        assert!((g.gradient_norm(&u) - k * n).abs() < 1e-10);
    }

    #[test]
    fn shift_round_trip() {
        let g = Grid::new(1.0, 4, 8).unwrap();
        let u: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let v = g.shift_sites(&g.shift_sites(&u, 3), -3);
        assert_eq!(u, v);
        assert_eq!(g.shift_sites(&u, 1)[8], u[0]);
    }

    #[test]
    fn resolution_rule() {
        let g = Grid::new(1.0, 8, 64).unwrap();
        assert!(g.check_resolution(0.1).is_ok());
        assert!(g.check_resolution(1e-4).is_err());
    }
}
