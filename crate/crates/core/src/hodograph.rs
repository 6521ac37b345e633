//! Inverse of the semi-hodograph map: streamlines, free surface, velocity and
//! the pseudo-stream function on physical grids.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::function_space::CoefficientFunction;
use crate::spectral;
use crate::strip::{self, HeightField};

/// Curve `y = h(x, p_level) - d` sampled at the grid's `q` nodes.
#[derive(Debug, Clone, Serialize)]
pub struct PhysicalStreamline {
    pub p_level: f64,
    pub x_samples: Vec<f64>,
    pub y_samples: Vec<f64>,
}

/// Streamline at an arbitrary level; off-node levels are interpolated with
/// the Chebyshev basis of the grid.
pub fn streamline(h: &HeightField, p_level: f64, d: f64) -> Result<PhysicalStreamline> {
    let g = &h.grid;
    if !(p_level >= g.p0 && p_level <= 0.0) {
        return Err(WaveError::Domain {
            p: p_level,
            p0: g.p0,
        });
    }
    let row = spectral::barycentric_row(&g.p, &g.p_weights, p_level);
    let y_samples = (0..g.nq)
        .map(|j| {
            let v: f64 = (0..g.np).map(|i| row[i] * h.values[(i, j)]).sum();
            v - d
        })
        .collect();
    Ok(PhysicalStreamline {
        p_level,
        x_samples: g.q.clone(),
        y_samples,
    })
}

/// Free surface `η(x) = h(x, 0) - d`.
pub fn reconstruct_surface(h: &HeightField, d: f64) -> PhysicalStreamline {
    streamline(h, 0.0, d).expect("p = 0 is always in range")
}

/// Velocity samples at the physical images `(q_j, h(q_j, p_i) - d)` of the nodes.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// `u = c - 1/(√ρ h_p)`, `v = -h_q/(√ρ h_p)` for a wave travelling with speed `c`.
pub fn velocity_field(
    h: &HeightField,
    rho: &CoefficientFunction,
    c: f64,
    d: f64,
) -> Result<VelocityField> {
    let g = &h.grid;
    let hp = h.hp();
    strip::ensure_no_stagnation(&hp)?;
    let hq = h.hq();
    let sqrt_rho: Vec<f64> =
        g.p.iter()
            .map(|&p| rho.eval(p).map(f64::sqrt))
            .collect::<Result<_>>()?;
    let (np, nq) = (g.np, g.nq);
    Ok(VelocityField {
        x: DMatrix::from_fn(np, nq, |_, j| g.q[j]),
        y: DMatrix::from_fn(np, nq, |i, j| h.values[(i, j)] - d),
        u: DMatrix::from_fn(np, nq, |i, j| c - 1.0 / (sqrt_rho[i] * hp[(i, j)])),
        v: DMatrix::from_fn(np, nq, |i, j| -hq[(i, j)] / (sqrt_rho[i] * hp[(i, j)])),
    })
}

/// Inverts `p ↦ h(x, p) - d` column by column.
pub struct PsiInverter<'a> {
    h: &'a HeightField,
    d: f64,
    row_coeffs: Vec<Vec<Complex64>>,
}

impl<'a> PsiInverter<'a> {
    pub fn new(h: &'a HeightField, d: f64) -> Self {
        let row_coeffs = (0..h.grid.np)
            .map(|i| spectral::fourier_coefficients(&h.row(i)))
            .collect();
        PsiInverter { h, d, row_coeffs }
    }

    fn column(&self, x: f64) -> Vec<f64> {
        let g = &self.h.grid;
        let xr = x.rem_euclid(g.lambda);
        let dq = g.lambda / g.nq as f64;
        let j = (xr / dq).round() as usize;
        if j < g.nq && (xr - j as f64 * dq).abs() <= 1e-14 * g.lambda {
            return self.h.column(j);
        }
        self.row_coeffs
            .iter()
            .map(|c| spectral::trig_interpolate(c, g.lambda, xr))
            .collect()
    }

    /// `ψ(x, y)`, or `None` outside the fluid.
    pub fn psi(&self, x: f64, y: f64) -> Option<f64> {
        let g = &self.h.grid;
        let col = self.column(x);
        let target = y + self.d;
        let top = col[g.np - 1];
        if target == 0.0 {
            return Some(-g.p0);
        }
        if target < 0.0 || target > top {
            return None;
        }
        if target == top {
            return Some(0.0);
        }
        let f = |p: f64| spectral::barycentric_eval(&g.p, &g.p_weights, &col, p) - target;
        // bracket on the node values first, the column is monotone in p
        let k = col.partition_point(|&v| v < target).clamp(1, g.np - 1);
        let (mut a, mut b) = (g.p[k - 1], g.p[k]);
        if col[k - 1] == target {
            return Some(-a);
        }
        let mut fa = f(a);
        while b - a > 1e-13 * (1.0 + a.abs()) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm == 0.0 {
                return Some(-m);
            }
            if (fa < 0.0) == (fm < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        // Newton polish with the interpolant's derivative
        let dcol: Vec<f64> = (0..g.np)
            .map(|i| (0..g.np).map(|ii| g.dp[(i, ii)] * col[ii]).sum())
            .collect();
        let mut p = 0.5 * (a + b);
        for _ in 0..3 {
            let slope = spectral::barycentric_eval(&g.p, &g.p_weights, &dcol, p);
            if slope <= 0.0 {
                break;
            }
            let next = (p - f(p) / slope).clamp(g.p0, 0.0);
            if next == p {
                break;
            }
            p = next;
        }
        Some(-p)
    }
}

/// `ψ(x, y)` at a single point, `None` outside the fluid.
pub fn psi_at(h: &HeightField, d: f64, x: f64, y: f64) -> Option<f64> {
    PsiInverter::new(h, d).psi(x, y)
}

/// `ψ` on the rectangular grid `xs × ys`; entry `(iy, ix)` is `NaN` outside the fluid.
pub fn reconstruct_psi(h: &HeightField, d: f64, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
    let inv = PsiInverter::new(h, d);
    DMatrix::from_fn(ys.len(), xs.len(), |iy, ix| {
        inv.psi(xs[ix], ys[iy]).unwrap_or(f64::NAN)
    })
}

/// Largest `|ψ(q_j, h(q_j, p_i) - d) + p_i|` over all nodes.
pub fn round_trip_error(h: &HeightField, d: f64) -> f64 {
    let inv = PsiInverter::new(h, d);
    let g = &h.grid;
    let mut worst = 0.0f64;
    for i in 0..g.np {
        for j in 0..g.nq {
            let err = match inv.psi(g.q[j], h.values[(i, j)] - d) {
                Some(psi) => (psi + g.p[i]).abs(),
                None => f64::INFINITY,
            };
            worst = worst.max(err);
        }
    }
    worst
}

/// CSV with columns `p_level,x,y`.
pub fn streamlines_csv(lines: &[PhysicalStreamline]) -> String {
    let mut out = String::from("p_level,x,y\n");
    for s in lines {
        for (x, y) in s.x_samples.iter().zip(&s.y_samples) {
            let _ = writeln!(out, "{},{},{}", s.p_level, x, y);
        }
    }
    out
}

/// CSV with columns `x,y,psi`; exterior points carry `NaN`.
pub fn psi_csv(xs: &[f64], ys: &[f64], psi: &DMatrix<f64>) -> String {
    let mut out = String::from("x,y,psi\n");
    for (iy, y) in ys.iter().enumerate() {
        for (ix, x) in xs.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", x, y, psi[(iy, ix)]);
        }
    }
    out
}
