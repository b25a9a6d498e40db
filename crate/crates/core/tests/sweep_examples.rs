//! Worked examples of the reduction harness on the reference lattice.

use std::sync::OnceLock;

use tblab::basis::Reduction;
use tblab::harness::{paired_run, run_model1_sweep, PairedRunConfig, SweepConfig, SweepResult};
use tblab::model::{LatticeModel, Perturbation, Potential, SemiclassicalParams};

fn reference() -> LatticeModel {
    LatticeModel::new(1.0, 16, 256, Potential::Sin2 { amplitude: 1.0 }, Perturbation::Cos { amplitude: 1.0 }).unwrap()
}

fn sweep() -> &'static SweepResult {
    static R: OnceLock<SweepResult> = OnceLock::new();
    R.get_or_init(|| run_model1_sweep(&reference(), &SweepConfig::default()).unwrap())
}

#[test]
fn unit_window_errors_are_smaller() {
    for p in sweep().successful() {
        let short = p.short_window_err.unwrap();
        assert!(short < p.max_err_total, "hbar {}: {short:.3e} vs {:.3e}", p.hbar, p.max_err_total);
    }
}

#[test]
fn linear_runs_are_no_worse_than_nonlinear_runs() {
    let bad: Vec<String> = sweep()
        .successful()
        .filter(|p| p.linear_err.unwrap() > p.max_err_total)
        .map(|p| format!("hbar {}: linear {:.3e} > nonlinear {:.3e}", p.hbar, p.linear_err.unwrap(), p.max_err_total))
        .collect();
    assert!(bad.is_empty(), "{}", bad.join("; "));
}

#[test]
fn error_at_hbar_012_under_the_fitted_square_root_bound() {
    let r = sweep();
    let first = r.successful().next().unwrap();
    let c_fit = first.max_err_total / first.hbar.sqrt();
    let p = r.successful().find(|p| (p.hbar - 0.12).abs() < 1e-12).unwrap();
    assert!(p.max_err_total <= c_fit * 0.12f64.sqrt());
}

#[test]
fn linear_band_error_is_bounded_by_the_residual_hamiltonian() {
    let model = reference();
    let hbar = 0.1;
    let params = SemiclassicalParams::custom(hbar, 0.0, 0.0).unwrap();
    let red = Reduction::build(&model, &params).unwrap();
    let mut cfg = PairedRunConfig::new(20.0, 0.01 * hbar);
    cfg.sample_stride = 500;
    let run = paired_run(&model, &red, &params, &cfg).unwrap();
    let d = red.coefficients.residual_norm();
    for s in &run.samples {
        let bound = d * s.error.tau / hbar + 1e-9;
        assert!(s.error.amp <= bound, "tau {}: {:.3e} > {:.3e}", s.error.tau, s.error.amp, bound);
        // only the O(dt^2) offset of the split-step invariant subspace
        assert!(s.error.perp < 1e-5, "tau {}: perp {:.3e}", s.error.tau, s.error.perp);
    }
}
