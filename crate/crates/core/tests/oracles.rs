//! Independent numerical oracles for the band structure and the
//! tight-binding coefficients.

use nalgebra::DMatrix;

use tblab::basis::Reduction;
use tblab::fit::{fit_log_inverse, fit_loglog};
use tblab::model::{LatticeModel, Perturbation, Potential, SemiclassicalParams};
use tblab::spectral::compute_band_data;

fn model(cells: usize, ppc: usize) -> LatticeModel {
    LatticeModel::new(1.0, cells, ppc, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Cos { amplitude: 1.0 }).unwrap()
}

/// Eigenvalues of `-hbar^2 d^2 + sin^2(pi x)` on Bloch waves `e^{i(2 pi m + theta) x}`.
/// With `sin^2 = 1/2 - (e^{2 pi i x} + e^{-2 pi i x}) / 4` the matrix is tridiagonal.
fn hill_levels(hbar: f64, theta: f64) -> Vec<f64> {
    let modes = 41;
    let half = (modes / 2) as f64;
    let mut a = DMatrix::<f64>::zeros(modes, modes);
    for i in 0..modes {
        let k = 2.0 * std::f64::consts::PI * (i as f64 - half) + theta;
        a[(i, i)] = hbar * hbar * k * k + 0.5;
        if i + 1 < modes {
            a[(i, i + 1)] = -0.25;
            a[(i + 1, i)] = -0.25;
        }
    }
    let mut e: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

#[test]
fn band_edges_match_the_hill_matrix() {
    let pi = std::f64::consts::PI;
    for hbar in [0.14, 0.1] {
        let b = compute_band_data(&model(8, 128), &SemiclassicalParams::custom(hbar, 0.0, 0.0).unwrap(), 2).unwrap();
        let periodic = hill_levels(hbar, 0.0);
        let anti = hill_levels(hbar, pi);
        assert!((b.e1_bottom() - periodic[0]).abs() < 1e-8, "{} vs {}", b.e1_bottom(), periodic[0]);
        assert!((b.e1_top() - anti[0]).abs() < 1e-8);
        assert!((b.e2_bottom() - anti[1]).abs() < 1e-8);
    }
}

#[test]
fn hopping_is_a_quarter_of_the_band_width() {
    // nearest-neighbour band: E(k) = Lambda - 2 beta cos k
    for hbar in [0.12, 0.1, 0.08] {
        let r = Reduction::build(&model(8, 128), &SemiclassicalParams::custom(hbar, 0.0, 0.0).unwrap()).unwrap();
        let width = r.bands.e1_top() - r.bands.e1_bottom();
        let beta = r.coefficients.beta;
        assert!(beta > 0.0);
        assert!((4.0 * beta / width - 1.0).abs() < 0.01, "hbar {hbar}: 4 beta / width = {}", 4.0 * beta / width);
    }
}

#[test]
fn residual_hamiltonian_decays_faster_than_hopping() {
    let hbars = [0.12, 0.1, 0.08, 0.07];
    let m = model(8, 128);
    let (mut d, mut b) = (Vec::new(), Vec::new());
    for &h in &hbars {
        let r = Reduction::build(&m, &SemiclassicalParams::custom(h, 0.0, 0.0).unwrap()).unwrap();
        d.push(r.coefficients.residual_norm());
        b.push(r.coefficients.beta);
        // stationary band state has no off-band component and H_nm depends on n - m only
        let hm = &r.coefficients.hamiltonian;
        for i in 0..8 {
            let j = (i + 1) % 8;
            assert!((hm[(i, j)] - hm[(0, 1)]).norm() < 1e-8);
        }
    }
    let fd = fit_log_inverse(&hbars, &d).unwrap();
    let fb = fit_log_inverse(&hbars, &b).unwrap();
    let s0 = 2.0 / std::f64::consts::PI;
    assert!(fd.slope < -s0 && fd.slope < fb.slope, "residual slope {} vs hopping slope {}", fd.slope, fb.slope);
}

/// Below the reference grid the harmonic limits `C1 ~ hbar^{-1/2}` and
/// `gap ~ hbar` are reached.
#[test]
fn scaling_limits_at_small_hbar() {
    let hbars = [0.03, 0.025, 0.02, 0.015];
    let m = model(8, 256);
    let mut c1 = Vec::new();
    let mut gap = Vec::new();
    for &h in &hbars {
        let r = Reduction::build(&m, &SemiclassicalParams::custom(h, 0.0, 0.0).unwrap()).unwrap();
        c1.push(r.coefficients.c1);
        gap.push(r.bands.gap());
    }
    let fc = fit_loglog(&hbars, &c1).unwrap();
    let fg = fit_loglog(&hbars, &gap).unwrap();
    assert!((fc.slope + 0.5).abs() < 0.05, "C1 slope {}", fc.slope);
    assert!((fg.slope - 1.0).abs() < 0.15, "gap slope {}", fg.slope);
}
