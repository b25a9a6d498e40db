//! Physical setting: periodic potential, bounded perturbation and the
//! semiclassical parameter regime.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Built-in periodic potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `amplitude * sin^2(pi x / a)`
    Sin2 { amplitude: f64 },
    /// `amplitude * (1 - cos(2 pi x / a)) / 2`
    CosLattice { amplitude: f64 },
    /// Flat potential; degenerate test configuration with no gaps.
    Constant { value: f64 },
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Sin2 { .. } => "sin2",
            Potential::CosLattice { .. } => "cos-lattice",
            Potential::Constant { .. } => "const",
        }
    }

    pub fn eval(&self, x: f64, cell_size: f64) -> f64 {
        match *self {
            Potential::Sin2 { amplitude } => amplitude * (PI * x / cell_size).sin().powi(2),
            Potential::CosLattice { amplitude } => {
                amplitude * 0.5 * (1.0 - (2.0 * PI * x / cell_size).cos())
            }
            Potential::Constant { value } => value,
        }
    }
}

/// Built-in bounded perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Zero,
    /// `amplitude * cos(2 pi x / (N a))`
    Cos { amplitude: f64 },
    /// `amplitude * tanh(x / width)`
    Tanh { amplitude: f64, width: f64 },
}

impl Perturbation {
    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::Zero => "none",
            Perturbation::Cos { .. } => "w-cos",
            Perturbation::Tanh { .. } => "w-tanh",
        }
    }

    pub fn eval(&self, x: f64, domain_length: f64) -> f64 {
        match *self {
            Perturbation::Zero => 0.0,
            Perturbation::Cos { amplitude } => amplitude * (2.0 * PI * x / domain_length).cos(),
            Perturbation::Tanh { amplitude, width } => amplitude * (x / width).tanh(),
        }
    }
}

/// Lattice geometry plus sampled `V` and `W`.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    grid: Grid,
    potential_kind: Potential,
    perturbation_kind: Perturbation,
    potential: Vec<f64>,
    perturbation: Vec<f64>,
}

impl LatticeModel {
    pub fn new(
        cell_size: f64,
        num_cells: usize,
        points_per_cell: usize,
        potential: Potential,
        perturbation: Perturbation,
    ) -> Result<Self> {
        let grid = Grid::new(cell_size, num_cells, points_per_cell)?;
        if let Perturbation::Tanh { width, .. } = perturbation {
            if !(width > 0.0) {
                return Err(Error::InvalidModel("w-tanh width must be positive".into()));
            }
        }
        // sample one cell and tile so that V is bit-exactly periodic on the grid
        let m = grid.points_per_cell();
        let cell: Vec<f64> = grid.x()[..m].iter().map(|&x| potential.eval(x, cell_size)).collect();
        let v: Vec<f64> = (0..grid.len()).map(|i| cell[i % m]).collect();
        let scale = cell.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (i, &x) in grid.x().iter().enumerate() {
            let d = (potential.eval(x, cell_size) - v[i]).abs();
            if d > 1e-12 * scale {
                return Err(Error::InvalidModel(format!(
                    "potential is not a-periodic (mismatch {d:.3e} at x = {x})"
                )));
            }
        }
        let w: Vec<f64> = grid
            .x()
            .iter()
            .map(|&x| perturbation.eval(x, grid.length()))
            .collect();
        let model = Self {
            grid,
            potential_kind: potential,
            perturbation_kind: perturbation,
            potential: v,
            perturbation: w,
        };
        if model.perturbation.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("perturbation must be bounded".into()));
        }
        Ok(model)
    }

    /// Checks that `V` has its unique per-cell minimum `0` at the cell centre.
    pub fn check_wells(&self) -> Result<()> {
        let m = self.grid.points_per_cell();
        let v = &self.potential;
        let scale = self.max_potential().abs().max(1.0);
        if v[0].abs() > 1e-12 * scale {
            return Err(Error::InvalidModel(format!(
                "potential minimum must be 0 at the cell centre, got {:.3e}",
                v[0]
            )));
        }
        // cell 0 spans offsets -m/2 .. m/2 around index 0
        for off in 1..=m / 2 {
            let right = v[off];
            let left = v[v.len() - off];
            if right <= v[0] || left <= v[0] {
                return Err(Error::InvalidModel(
                    "potential must have a single strict minimum per cell".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn perturbation(&self) -> &[f64] {
        &self.perturbation
    }

    pub fn potential_kind(&self) -> Potential {
        self.potential_kind
    }

    pub fn perturbation_kind(&self) -> Perturbation {
        self.perturbation_kind
    }

    pub fn max_potential(&self) -> f64 {
        self.potential.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_potential(&self) -> f64 {
        self.potential.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_perturbation(&self) -> f64 {
        self.perturbation.iter().fold(0.0, |a, w| a.max(w.abs()))
    }

    pub fn min_perturbation(&self) -> f64 {
        self.perturbation.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max |V + F W|` over the grid.
    pub fn max_linear_potential(&self, f: f64) -> f64 {
        self.potential
            .iter()
            .zip(&self.perturbation)
            .fold(0.0, |a, (v, w)| a.max((v + f * w).abs()))
    }
}

/// Parameter regime selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `F = k_F hbar^2`, `eta = k_eta hbar^2`.
    Model1 { k_f: f64, k_eta: f64 },
    /// `F = k_F beta`, `eta = k_eta hbar^(1/2) beta`; needs beta first.
    Model2 { k_f: f64, k_eta: f64 },
    Custom,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Model1 { .. } => "model1",
            Regime::Model2 { .. } => "model2",
            Regime::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiclassicalParams {
    pub hbar: f64,
    pub f: f64,
    pub eta: f64,
    pub regime: Regime,
    resolved: bool,
}

impl SemiclassicalParams {
    pub fn custom(hbar: f64, f: f64, eta: f64) -> Result<Self> {
        let p = Self { hbar, f, eta, regime: Regime::Custom, resolved: true };
        p.validate()?;
        Ok(p)
    }

    pub fn model1(hbar: f64, k_f: f64, k_eta: f64) -> Result<Self> {
        let p = Self {
            hbar,
            f: k_f * hbar * hbar,
            eta: k_eta * hbar * hbar,
            regime: Regime::Model1 { k_f, k_eta },
            resolved: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// First pass of the model-2 set-up: `F` and `eta` stay zero until
    /// [`SemiclassicalParams::resolve_model2`] is called with beta.
    pub fn model2(hbar: f64, k_f: f64, k_eta: f64) -> Result<Self> {
        let p = Self {
            hbar,
            f: 0.0,
            eta: 0.0,
            regime: Regime::Model2 { k_f, k_eta },
            resolved: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn resolve_model2(&self, beta: f64) -> Result<Self> {
        match self.regime {
            Regime::Model2 { k_f, k_eta } => {
                let p = Self {
                    f: k_f * beta,
                    eta: k_eta * self.hbar.sqrt() * beta,
                    resolved: true,
                    ..*self
                };
                p.validate()?;
                Ok(p)
            }
            _ => Ok(*self),
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.resolved
    }

    /// Same regime at `F = eta = 0`, used for the linear band problem.
    pub fn linear(&self) -> Self {
        Self { f: 0.0, eta: 0.0, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar <= 1.0) {
            return Err(Error::InvalidParams(format!("hbar must lie in (0, 1], got {}", self.hbar)));
        }
        if !(self.f >= 0.0) || !self.f.is_finite() {
            return Err(Error::InvalidParams(format!("F must be finite and >= 0, got {}", self.f)));
        }
        if !self.eta.is_finite() {
            return Err(Error::InvalidParams("eta must be finite".into()));
        }
        if let Regime::Model1 { k_f, .. } | Regime::Model2 { k_f, .. } = self.regime {
            if k_f < 0.0 {
                return Err(Error::InvalidParams("k_F must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Physical inputs of the dimensional GPE
/// `i hb psi_t = -hb^2/(2m) psi_xx + V/eps psi + a1 W psi + a2 |psi|^2 psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub planck: f64,
    pub mass: f64,
    pub epsilon: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Rescaled quantities driving the semiclassical equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescaled {
    pub hbar: f64,
    pub f: f64,
    pub eta: f64,
    /// `tau / t`.
    pub time_factor: f64,
}

impl PhysicalConstants {
    /// Maps to `hbar = hb sqrt(eps / 2m)`, `F = a1 eps`, `eta = a2 eps`.
    ///
    /// Multiplying the dimensional equation by `eps = 2 m hbar^2 / hb^2`
    /// gives the semiclassical form exactly when `tau = eps hb t / hbar`,
    /// which is the time factor returned here.
    pub fn rescale(&self) -> Result<Rescaled> {
        if !(self.planck > 0.0 && self.mass > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidParams("planck, mass and epsilon must be positive".into()));
        }
        let hbar = self.planck * (self.epsilon / (2.0 * self.mass)).sqrt();
        let eps = 2.0 * self.mass * hbar * hbar / (self.planck * self.planck);
        Ok(Rescaled {
            hbar,
            f: self.alpha1 * eps,
            eta: self.alpha2 * eps,
            time_factor: eps * self.planck / hbar,
        })
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model1" => Ok(Regime::Model1 { k_f: 1.0, k_eta: 1.0 }),
            "model2" => Ok(Regime::Model2 { k_f: 1.0, k_eta: 1.0 }),
            "custom" => Ok(Regime::Custom),
            other => Err(Error::InvalidParams(format!("unknown model '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin2_and_cos_lattice_agree() {
        for &x in &[0.0, 0.1, 0.37, 0.5, 1.3] {
            let a = Potential::Sin2 { amplitude: 1.0 }.eval(x, 1.0);
            let b = Potential::CosLattice { amplitude: 1.0 }.eval(x, 1.0);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn model_validates_wells() {
        let m = LatticeModel::new(1.0, 8, 32, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Zero)
            .unwrap();
        m.check_wells().unwrap();
        assert!((m.max_potential() - 1.0).abs() < 1e-12);
        let flat = LatticeModel::new(1.0, 8, 32, Potential::Constant { value: 0.0 }, Perturbation::Zero)
            .unwrap();
        assert!(flat.check_wells().is_err());
    }

    #[test]
    fn model1_scaling() {
        let p = SemiclassicalParams::model1(0.1, 2.0, 3.0).unwrap();
        assert!((p.f - 0.02).abs() < 1e-15);
        assert!((p.eta - 0.03).abs() < 1e-15);
        assert!(SemiclassicalParams::model1(0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn model2_two_pass() {
        let p = SemiclassicalParams::model2(0.04, 1.0, 1.0).unwrap();
        assert!(!p.is_resolved());
        let q = p.resolve_model2(1e-3).unwrap();
        assert!(q.is_resolved());
        assert!((q.f - 1e-3).abs() < 1e-18);
        assert!((q.eta - 0.2e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hbar() {
        assert!(SemiclassicalParams::custom(0.0, 0.0, 0.0).is_err());
        assert!(SemiclassicalParams::custom(1.5, 0.0, 0.0).is_err());
        assert!(SemiclassicalParams::custom(0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn rescaling_is_consistent() {
        let c = PhysicalConstants { planck: 2.0, mass: 0.5, epsilon: 0.01, alpha1: 3.0, alpha2: -1.0 };
        let r = c.rescale().unwrap();
        assert!((r.hbar - 2.0 * (0.01f64).sqrt()).abs() < 1e-14);
        assert!((r.f - 0.03).abs() < 1e-14);
        assert!((r.eta + 0.01).abs() < 1e-14);
        // kinetic prefactor: eps hb^2/(2m) must equal hbar^2
        assert!((0.01 * 4.0 / 1.0 - r.hbar * r.hbar).abs() < 1e-14);
        // i hb eps d/dt = i hbar d/dtau
        assert!((r.time_factor * r.hbar - 0.01 * 2.0).abs() < 1e-14);
    }
}
