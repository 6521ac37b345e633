#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use strata_wave::function_space::CoefficientFunction;
use strata_wave::solver::{self, ContinuationOptions, ContinuationState};
use strata_wave::strip::{StripGrid, WaveParameters};

pub const TWO_PI: f64 = 2.0 * PI;

/// Classical RK4 with step doubling and Richardson extrapolation; the step
/// adapts to keep the local difference between one full step and two half
/// steps below `tol`.
pub fn rk4_oracle(
    f: impl Fn(f64, &[f64; 2]) -> [f64; 2],
    t0: f64,
    y0: [f64; 2],
    t1: f64,
    tol: f64,
) -> [f64; 2] {
    let step = |t: f64, y: &[f64; 2], h: f64| -> [f64; 2] {
        let add = |a: &[f64; 2], b: &[f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, &add(y, &k1, h / 2.0));
        let k3 = f(t + h / 2.0, &add(y, &k2, h / 2.0));
        let k4 = f(t + h, &add(y, &k3, h));
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let (mut t, mut y) = (t0, y0);
    let mut h = (t1 - t0) / 64.0;
    while t < t1 {
        h = h.min(t1 - t);
        let full = step(t, &y, h);
        let half = step(t + h / 2.0, &step(t, &y, h / 2.0), h / 2.0);
        let err = (full[0] - half[0]).abs().max((full[1] - half[1]).abs());
        if err <= tol || h < 1e-12 {
            t += h;
            for i in 0..2 {
                y[i] = half[i] + (half[i] - full[i]) / 15.0;
            }
            if err < tol / 64.0 {
                h *= 2.0;
            }
        } else {
            h /= 2.0;
        }
    }
    y
}

/// Gravity waves over a shear flow with `ρ = 1 - 0.1p`, `β = 0.3`, with the
/// depth `d` made consistent with the bifurcating laminar flow (`d = H(0)` at `κ*`).
pub fn stratified_params(p0: f64) -> WaveParameters {
    let mut p = WaveParameters::homogeneous(1.0, 0.0, -p0, TWO_PI, p0).unwrap();
    p.rho = CoefficientFunction::polynomial(vec![1.0, -0.1], p0).unwrap();
    p.beta = CoefficientFunction::constant(0.3, p0).unwrap();
    for _ in 0..30 {
        let ks = solver::bifurcation_kappa(&p, None).unwrap();
        let prof = solver::solve_laminar(&p, &[p0, 0.0], ks).unwrap();
        p.d = prof.h[1];
    }
    p
}

pub const WAVE_P0: f64 = -0.25;
pub const WAVE_TARGETS: [f64; 4] = [1e-3, 2e-3, 4e-3, 1e-2];

/// The amplitude-1e-2 wave on an `nq × np` grid, with `Q` filled into the
/// returned parameters.
pub fn wave(nq: usize, np: usize) -> (ContinuationState, WaveParameters) {
    let params = stratified_params(WAVE_P0);
    wave_with(&params, nq, np, &WAVE_TARGETS)
}

pub fn wave_with(
    params: &WaveParameters,
    nq: usize,
    np: usize,
    targets: &[f64],
) -> (ContinuationState, WaveParameters) {
    let grid: Arc<StripGrid> = StripGrid::new(nq, np, params.lambda, params.p0).unwrap();
    let branch =
        solver::continuation_run(&grid, params, targets, &ContinuationOptions::default()).unwrap();
    assert!(branch.failure.is_none(), "{:?}", branch.failure);
    let st = branch.states.last().unwrap().clone();
    let mut p = params.clone();
    p.q_head = st.q_head;
    (st, p)
}

/// Samples of `f` at `n` equispaced points of `[0, Λ)`.
pub fn periodic_samples(n: usize, lambda: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n).map(|j| f(lambda * j as f64 / n as f64)).collect()
}
