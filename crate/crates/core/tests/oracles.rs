mod common;

use common::*;
use nalgebra::DMatrix;
use strata_wave::function_space::CoefficientFunction;
use strata_wave::inequality::{majorant_product, MajorantRule, MajorantSequence};
use strata_wave::regularity::{field_derivative, holder_norm_periodic};
use strata_wave::solver;
use strata_wave::strip::{self, HeightField, StripGrid, WaveParameters};

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn homogeneous_laminar_profile_matches_closed_form() {
    // H'' = -β H'^3 gives H'^{-2} = κ^{-2} + 2β(p - p0)
    let (p0, kappa, beta) = (-1.0, 1.3, 0.4);
    let mut params = WaveParameters::homogeneous(1.0, 0.0, 1.0, TWO_PI, p0).unwrap();
    params.beta = CoefficientFunction::constant(beta, p0).unwrap();
    let nodes: Vec<f64> = (0..=20).map(|i| p0 * (1.0 - i as f64 / 20.0)).collect();
    let prof = solver::solve_laminar(&params, &nodes, kappa).unwrap();
    let w = |p: f64| (kappa.powi(-2) + 2.0 * beta * (p - p0)).sqrt();
    for (i, &p) in nodes.iter().enumerate() {
        let h = (w(p) - 1.0 / kappa) / beta;
        assert!(
            (prof.h[i] - h).abs() < 1e-12,
            "H({p}) = {} vs {h}",
            prof.h[i]
        );
        assert!((prof.hp[i] - 1.0 / w(p)).abs() < 1e-12);
    }
    let q = 2.0 * prof.h[20] + w(0.0).powi(2);
    assert!((prof.q_head - q).abs() < 1e-12);
}

#[test]
fn stratified_laminar_profile_matches_rk4() {
    let p0 = -0.5;
    let params = stratified_params(p0);
    let kappa = 1.1;
    let nodes: Vec<f64> = (0..=8).map(|i| p0 * (1.0 - i as f64 / 8.0)).collect();
    let prof = solver::solve_laminar(&params, &nodes, kappa).unwrap();
    let rhs = |p: f64, y: &[f64; 2]| {
        let rho_p = params.rho.eval_derivative(1, p).unwrap();
        let beta = params.beta.eval(p).unwrap();
        [
            y[1],
            -(beta - params.g * (y[0] - params.d) * rho_p) * y[1].powi(3),
        ]
    };
    for (i, &p) in nodes.iter().enumerate().skip(1) {
        let y = rk4_oracle(rhs, p0, [0.0, kappa], p, 1e-14);
        assert!((prof.h[i] - y[0]).abs() < 1e-11);
        assert!((prof.hp[i] - y[1]).abs() < 1e-11);
    }
}

#[test]
fn residual_of_a_trigonometric_ansatz() {
    // h = κ(p - p0) + ε cos q (p - p0), constant ρ so the gravity source drops
    let (p0, kappa, eps, beta, sigma, g, q_head) = (-1.0, 1.2, 0.05, 0.3, 0.2, 1.5, 2.7);
    let mut params = WaveParameters::homogeneous(g, sigma, 1.0, TWO_PI, p0).unwrap();
    params.beta = CoefficientFunction::constant(beta, p0).unwrap();
    params.q_head = q_head;
    let grid = StripGrid::new(32, 12, TWO_PI, p0).unwrap();
    let h = HeightField::from_fn(grid.clone(), |q, p| (kappa + eps * q.cos()) * (p - p0));
    let r = strip::residual(&h, &params).unwrap();

    for (r_i, i) in (1..grid.np - 1).enumerate() {
        let s = grid.p[i] - p0;
        for (j, &q) in grid.q.iter().enumerate() {
            let hp = kappa + eps * q.cos();
            let hq = -eps * q.sin() * s;
            let hpq = -eps * q.sin();
            let hqq = -eps * q.cos() * s;
            let want = -2.0 * hp * hq * hpq + hp * hp * hqq + beta * hp.powi(3);
            assert!(
                (r.interior[(r_i, j)] - want).abs() < 1e-12,
                "interior ({i},{j})"
            );
        }
    }
    for (j, &q) in grid.q.iter().enumerate() {
        let s = -p0;
        let (h, hp) = ((kappa + eps * q.cos()) * s, kappa + eps * q.cos());
        let (hq, hqq) = (-eps * q.sin() * s, -eps * q.cos() * s);
        let curv = hqq / (1.0 + hq * hq).powf(1.5);
        let want = 1.0 + hq * hq + (2.0 * g * h - 2.0 * sigma * curv - q_head) * hp * hp;
        assert!((r.surface[j] - want).abs() < 1e-12, "surface {j}");
    }
    assert!(max_abs(r.bed) < 1e-15);
}

#[test]
fn linearization_matches_central_differences() {
    let params = stratified_params(WAVE_P0);
    let grid = StripGrid::new(16, 10, TWO_PI, WAVE_P0).unwrap();
    let ks = solver::bifurcation_kappa(&params, None).unwrap();
    let (lam, q) = solver::laminar_field(&grid, &params, ks).unwrap();
    let mut params = params;
    params.q_head = q;
    let p0 = WAVE_P0;
    let bump = HeightField::from_fn(grid.clone(), |q, p| {
        0.02 * (q.cos() + 0.3 * (2.0 * q).sin()) * (p - p0)
    });
    let h = HeightField::new(grid.clone(), &lam.values + &bump.values).unwrap();
    let phi =
        HeightField::from_fn(grid.clone(), |q, p| ((3.0 * q).cos() + p * p) * (p - p0)).values;
    let dq = 0.7;

    let lin = strip::linearize(&h, &params, true).unwrap();
    let exact = lin.apply(&phi, dq);
    let eps = 1e-4;
    let shifted = |s: f64| {
        let mut p = params.clone();
        p.q_head += s * dq;
        strip::residual(
            &HeightField::new(grid.clone(), &h.values + &phi * s).unwrap(),
            &p,
        )
        .unwrap()
    };
    let (plus, minus) = (shifted(eps), shifted(-eps));
    let fd_int = (&plus.interior - &minus.interior) / (2.0 * eps);
    let scale = exact
        .interior
        .amax()
        .max(max_abs(exact.surface.iter().copied()));
    assert!((&fd_int - &exact.interior).amax() / scale <= 1e-5);
    let fd_surf = plus
        .surface
        .iter()
        .zip(&minus.surface)
        .map(|(a, b)| (a - b) / (2.0 * eps));
    let err = max_abs(fd_surf.zip(&exact.surface).map(|(a, b)| a - b));
    assert!(err / scale <= 1e-5);

    // the dense matrix reproduces the operator
    let mut x = phi.transpose().as_slice().to_vec();
    x.push(dq);
    let y = lin.dense() * nalgebra::DVector::from_vec(x);
    let (np, nq) = (grid.np, grid.nq);
    for i in 1..np - 1 {
        for j in 0..nq {
            assert!((y[i * nq + j] - exact.interior[(i - 1, j)]).abs() < 1e-10);
        }
    }
    for j in 0..nq {
        assert!((y[(np - 1) * nq + j] - exact.surface[j]).abs() < 1e-10);
    }
}

/// Sup norm plus the largest periodic Hölder quotient over all node pairs.
fn brute_holder(f: &[f64], mu: f64) -> f64 {
    let n = f.len();
    let h = TWO_PI / n as f64;
    let mut quot = 0.0f64;
    for a in 0..n {
        for b in 0..a {
            let k = (a - b).min(n - (a - b));
            quot = quot.max((f[a] - f[b]).abs() / (k as f64 * h).powf(mu));
        }
    }
    max_abs(f.iter().copied()) + quot
}

#[test]
fn periodic_holder_norm_of_sine() {
    let (n, mu) = (256, 0.5);
    let f = periodic_samples(n, TWO_PI, f64::sin);
    let df = periodic_samples(n, TWO_PI, f64::cos);
    let got = holder_norm_periodic(&f, TWO_PI, 0, mu).unwrap();
    let want = brute_holder(&f, mu);
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    // the pair sup is within O(h^2) of max over δ of 2 sin(δ/2) / δ^μ
    let cont = (1..100_000)
        .map(|k| {
            let d = std::f64::consts::PI * k as f64 / 1e5;
            2.0 * (d / 2.0).sin() / d.powf(mu)
        })
        .fold(0.0, f64::max);
    assert!((got - 1.0 - cont).abs() < 1e-3);

    // k = 1 adds sup |sin'| and takes the quotient of the derivative
    let got1 = holder_norm_periodic(&f, TWO_PI, 1, mu).unwrap();
    let want1 = 1.0 + brute_holder(&df, mu);
    assert!((got1 - want1).abs() < 1e-9, "{got1} vs {want1}");
}

fn sup_norms(grid: &StripGrid, values: &DMatrix<f64>, order: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for n in 0..=order {
        for a1 in 0..=n {
            let d = field_derivative(grid, values, (a1, n - a1)).unwrap();
            out.push((a1, n - a1, d.amax()));
        }
    }
    out
}

#[test]
fn product_rule_a_dominates_measured_derivatives() {
    let grid = StripGrid::new(48, 24, TWO_PI, -1.0).unwrap();
    let u = DMatrix::from_fn(grid.np, grid.nq, |_, j| grid.q[j].sin());
    let v = DMatrix::from_fn(grid.np, grid.nq, |i, j| grid.q[j].cos() * grid.p[i].exp());
    let uv = u.component_mul(&v);
    let norms = sup_norms(&grid, &uv, 12);
    // ∂_q^a ∂_p^b (½ sin 2q e^p) has sup norm 2^{a-1} on p <= 0. The
    // coefficient filter limits the p-derivatives, so the spectral values
    // are compared where they are accurate and the exact ones cover the rest.
    let exact: Vec<(usize, usize, f64)> = norms
        .iter()
        .map(|&(a1, a2, _)| (a1, a2, 2f64.powi(a1 as i32 - 1)))
        .collect();
    let accurate: Vec<(usize, usize, f64)> = norms.iter().copied().filter(|n| n.1 <= 4).collect();
    for &(a1, _, m) in &accurate {
        let want = 2f64.powi(a1 as i32 - 1);
        assert!((m - want).abs() <= 1e-6 * want, "{a1}: {m} vs {want}");
    }
    // sup norms of every derivative of u and v are at most 1, so both lie in
    // their classes with H1 = H2 = 1, s = 1 and low-order norm 1
    let su = MajorantSequence::new(1.0, 1.0, 2, 1.0, 1.0).unwrap();
    let sv = MajorantSequence::new(1.0, 1.0, 1, 1.0, 1.0).unwrap();
    assert!(su.dominates(&sup_norms(&grid, &u, 12)));
    assert!(sv.dominates(&sup_norms(&grid, &v, 12)));
    let (out, c) = majorant_product(&su, &sv, None, MajorantRule::A).unwrap();
    assert_eq!(out.offset, 1);
    assert!(c.is_finite() && c >= 1.0);
    assert!(out.dominates(&accurate));
    assert!(out.dominates(&exact));
}

#[test]
fn rule_d_shifts_the_power_of_h1() {
    let h = 3.0;
    let s = MajorantSequence::new(h, h, 2, 1.0, 0.5).unwrap();
    let (out, c) = majorant_product(&s, &s, Some(&s), MajorantRule::D).unwrap();
    assert_eq!((out.offset, out.h1_offset), (1, 2));
    // bound = c H1^{α1-2} H2^{α2} (|α|-2)! for |α| >= 2
    for (a1, a2) in [(2usize, 0usize), (3, 0), (0, 4), (5, 2), (7, 7)] {
        let n = a1 + a2;
        let fact: f64 = (1..=n - 2).map(|k| k as f64).product();
        let want = c * h.powi(a1 as i32 - 2) * h.powi(a2 as i32) * fact;
        assert!((out.bound((a1, a2)) - want).abs() <= 1e-12 * want);
    }
    // H1 times the product is an A_1 sequence in the usual sense
    let lifted = MajorantSequence {
        h1_offset: 1,
        scale: out.scale,
        ..out
    };
    for alpha in [(3usize, 1usize), (6, 0), (2, 9)] {
        assert!((h * out.bound(alpha) - lifted.bound(alpha)).abs() <= 1e-12 * lifted.bound(alpha));
    }
}
