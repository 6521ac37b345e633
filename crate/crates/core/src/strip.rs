//! The fixed-strip boundary-value problem: collocation grid, height field,
//! physical parameters, residuals and their exact linearization.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};
use crate::function_space::{probe_grid, CoefficientFunction, DEFAULT_PROBE_POINTS};
use crate::spectral;

/// Smallest admissible `h_p` at a node.
pub const STAGNATION_FLOOR: f64 = 1e-6;

pub const DEFAULT_NQ: usize = 64;
pub const DEFAULT_NP: usize = 32;
pub const DEFAULT_LAMBDA: f64 = 2.0 * std::f64::consts::PI;

/// `d` applied along rows after subtracting each row's first value, so a
/// row that is constant in `q` has derivative exactly zero.
fn q_apply(values: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let shifted = DMatrix::from_fn(values.nrows(), values.ncols(), |i, j| {
        values[(i, j)] - values[(i, 0)]
    });
    shifted * d.transpose()
}

/// Serializable description of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nq: usize,
    pub np: usize,
    pub lambda: f64,
    pub p0: f64,
}

/// Fourier nodes in `q` times Chebyshev–Lobatto nodes in `p`, with the
/// differentiation matrices of both directions.
#[derive(Debug, Clone)]
pub struct StripGrid {
    pub nq: usize,
    pub np: usize,
    pub lambda: f64,
    pub p0: f64,
    pub q: Vec<f64>,
    /// Ascending, `p[0] = p0`, `p[np-1] = 0`.
    pub p: Vec<f64>,
    pub p_weights: Vec<f64>,
    pub dq: DMatrix<f64>,
    pub dqq: DMatrix<f64>,
    pub dp: DMatrix<f64>,
    pub dpp: DMatrix<f64>,
}

impl StripGrid {
    pub fn new(nq: usize, np: usize, lambda: f64, p0: f64) -> Result<Arc<Self>> {
        if nq < 4 || nq % 2 != 0 {
            return Err(WaveError::InvalidInput(format!(
                "N_q = {nq} must be even and >= 4"
            )));
        }
        if np < 4 {
            return Err(WaveError::InvalidInput(format!("N_p = {np} must be >= 4")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(WaveError::InvalidInput(format!(
                "wavelength {lambda} must be > 0"
            )));
        }
        if !(p0 < 0.0) || !p0.is_finite() {
            return Err(WaveError::InvalidInput(format!("p0 = {p0} must be < 0")));
        }
        let p = spectral::chebyshev_nodes(np, p0);
        let p_weights = spectral::chebyshev_weights(np);
        let (dp, dpp) = spectral::chebyshev_diff_matrices(np, p0);
        Ok(Arc::new(StripGrid {
            nq,
            np,
            lambda,
            p0,
            q: spectral::fourier_nodes(nq, lambda),
            p,
            p_weights,
            dq: spectral::fourier_d1(nq, lambda),
            dqq: spectral::fourier_d2(nq, lambda),
            dp,
            dpp,
        }))
    }

    pub fn from_spec(spec: GridSpec) -> Result<Arc<Self>> {
        Self::new(spec.nq, spec.np, spec.lambda, spec.p0)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            nq: self.nq,
            np: self.np,
            lambda: self.lambda,
            p0: self.p0,
        }
    }

    /// Wavenumber of the first mode, `2π/Λ`.
    pub fn k1(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }

    pub fn surface_row(&self) -> usize {
        self.np - 1
    }
}

/// Samples `h(q_j, p_i)` stored as an `np x nq` matrix (row `i` is the level `p_i`).
#[derive(Debug, Clone)]
pub struct HeightField {
    pub grid: Arc<StripGrid>,
    pub values: DMatrix<f64>,
}

impl HeightField {
    pub fn new(grid: Arc<StripGrid>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.np || values.ncols() != grid.nq {
            return Err(WaveError::InvalidInput(format!(
                "field is {}x{}, grid is {}x{}",
                values.nrows(),
                values.ncols(),
                grid.np,
                grid.nq
            )));
        }
        Ok(HeightField { grid, values })
    }

    pub fn from_fn(grid: Arc<StripGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DMatrix::from_fn(grid.np, grid.nq, |i, j| f(grid.q[j], grid.p[i]));
        HeightField { grid, values }
    }

    /// q-independent field from a profile on the p-nodes.
    pub fn from_profile(grid: Arc<StripGrid>, profile: &[f64]) -> Result<Self> {
        if profile.len() != grid.np {
            return Err(WaveError::InvalidInput(
                "profile length differs from N_p".into(),
            ));
        }
        let values = DMatrix::from_fn(grid.np, grid.nq, |i, _| profile[i]);
        Ok(HeightField { grid, values })
    }

    pub fn surface(&self) -> Vec<f64> {
        self.values
            .row(self.grid.surface_row())
            .iter()
            .copied()
            .collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// `h` minus the linear interpolant of its bed and surface values,
    /// column by column, and the slope of that interpolant. Differentiating
    /// the remainder keeps the round-off proportional to the nonlinear part
    /// of `h`; a linear profile is differentiated exactly.
    fn split_linear(&self) -> (DMatrix<f64>, Vec<f64>) {
        let g = &self.grid;
        let top = g.np - 1;
        let slopes: Vec<f64> = (0..g.nq)
            .map(|j| (self.values[(top, j)] - self.values[(0, j)]) / -g.p0)
            .collect();
        let rest = DMatrix::from_fn(g.np, g.nq, |i, j| {
            self.values[(i, j)] - (self.values[(0, j)] + slopes[j] * (g.p[i] - g.p0))
        });
        (rest, slopes)
    }

    pub fn hp(&self) -> DMatrix<f64> {
        let (rest, slopes) = self.split_linear();
        let mut hp = &self.grid.dp * rest;
        for (j, s) in slopes.iter().enumerate() {
            hp.column_mut(j).add_scalar_mut(*s);
        }
        hp
    }

    pub fn hq(&self) -> DMatrix<f64> {
        q_apply(&self.values, &self.grid.dq)
    }

    pub fn derivatives(&self) -> FieldDerivatives {
        let g = &self.grid;
        let (rest, _) = self.split_linear();
        let hq = q_apply(&self.values, &g.dq);
        let hp = self.hp();
        FieldDerivatives {
            hqq: q_apply(&self.values, &g.dqq),
            hpq: q_apply(&hp, &g.dq),
            hpp: &g.dpp * &rest,
            h: self.values.clone(),
            hq,
            hp,
        }
    }

    pub fn min_max_hp(&self) -> (f64, f64) {
        let hp = self.hp();
        (hp.min(), hp.max())
    }

    /// Bed row zero, `h_p` above the stagnation floor everywhere, and the
    /// trigonometric interpolant reproducing the samples.
    pub fn check_invariants(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(WaveError::InvalidInput("non-finite height value".into()));
        }
        if self.values.row(0).iter().any(|&v| v != 0.0) {
            return Err(WaveError::InvalidInput(
                "bed row of h is not identically zero".into(),
            ));
        }
        ensure_no_stagnation(&self.hp())?;
        let scale = self.values.amax().max(1.0);
        for i in 0..self.grid.np {
            let row = self.row(i);
            let c = spectral::fourier_coefficients(&row);
            for (j, &q) in self.grid.q.iter().enumerate() {
                let v = spectral::trig_interpolate(&c, self.grid.lambda, q);
                if (v - row[j]).abs() > 1e-10 * scale {
                    return Err(WaveError::InvalidInput(
                        "spectral representation inconsistent with samples".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn ensure_no_stagnation(hp: &DMatrix<f64>) -> Result<()> {
    let min_hp = hp.min();
    if !(min_hp >= STAGNATION_FLOOR) {
        return Err(WaveError::Stagnation {
            min_hp,
            floor: STAGNATION_FLOOR,
        });
    }
    Ok(())
}

/// `h` and its derivatives up to second order at every node.
#[derive(Debug, Clone)]
pub struct FieldDerivatives {
    pub h: DMatrix<f64>,
    pub hq: DMatrix<f64>,
    pub hp: DMatrix<f64>,
    pub hqq: DMatrix<f64>,
    pub hpq: DMatrix<f64>,
    pub hpp: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Capillary,
    Gravity,
    CapillaryGravity,
}

/// Physical constants and coefficient functions of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveParameters {
    pub g: f64,
    pub sigma: f64,
    /// Bernoulli head.
    #[serde(rename = "Q", default)]
    pub q_head: f64,
    pub d: f64,
    pub rho: CoefficientFunction,
    pub beta: CoefficientFunction,
    pub lambda: f64,
    pub p0: f64,
}

impl WaveParameters {
    /// Homogeneous, irrotational flow: `ρ ≡ 1`, `β ≡ 0`.
    pub fn homogeneous(g: f64, sigma: f64, d: f64, lambda: f64, p0: f64) -> Result<Self> {
        let params = WaveParameters {
            g,
            sigma,
            q_head: 0.0,
            d,
            rho: CoefficientFunction::constant(1.0, p0)?,
            beta: CoefficientFunction::constant(0.0, p0)?,
            lambda,
            p0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn regime(&self) -> Result<Regime> {
        match (self.g > 0.0, self.sigma > 0.0) {
            (true, false) => Ok(Regime::Gravity),
            (false, true) => Ok(Regime::Capillary),
            (true, true) => Ok(Regime::CapillaryGravity),
            (false, false) => Err(WaveError::InvalidInput(
                "g and sigma cannot both vanish".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.g,
            self.sigma,
            self.q_head,
            self.d,
            self.lambda,
            self.p0,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(WaveError::InvalidInput("non-finite parameter".into()));
        }
        if self.g < 0.0 {
            return Err(WaveError::InvalidInput(format!(
                "g = {} must be >= 0",
                self.g
            )));
        }
        if self.sigma < 0.0 {
            return Err(WaveError::InvalidInput(format!(
                "sigma = {} must be >= 0",
                self.sigma
            )));
        }
        self.regime()?;
        if !(self.d > 0.0) {
            return Err(WaveError::InvalidInput(format!(
                "depth d = {} must be > 0",
                self.d
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(WaveError::InvalidInput(format!(
                "wavelength {} must be > 0",
                self.lambda
            )));
        }
        if !(self.p0 < 0.0) {
            return Err(WaveError::InvalidInput(format!(
                "p0 = {} must be < 0",
                self.p0
            )));
        }
        for (name, f) in [("rho", &self.rho), ("beta", &self.beta)] {
            f.validate()?;
            if f.p0 != self.p0 {
                return Err(WaveError::InvalidInput(format!(
                    "{name} is declared on [{}, 0] but p0 = {}",
                    f.p0, self.p0
                )));
            }
        }
        for p in probe_grid(self.p0, DEFAULT_PROBE_POINTS) {
            if !(self.rho.eval(p)? > 0.0) {
                return Err(WaveError::InvalidInput(format!(
                    "density is not positive at p = {p}"
                )));
            }
        }
        Ok(())
    }

    /// `ρ`, `ρ_p` and `β` sampled on the p-nodes.
    pub fn sample(&self, grid: &StripGrid) -> Result<CoefficientSamples> {
        let mut s = CoefficientSamples {
            rho: Vec::with_capacity(grid.np),
            rho_p: Vec::with_capacity(grid.np),
            beta: Vec::with_capacity(grid.np),
        };
        for &p in &grid.p {
            s.rho.push(self.rho.eval(p)?);
            s.rho_p.push(self.rho.eval_derivative(1, p)?);
            s.beta.push(self.beta.eval(p)?);
        }
        Ok(s)
    }

    /// Check that the grid and parameters describe the same strip.
    pub fn check_grid(&self, grid: &StripGrid) -> Result<()> {
        if grid.p0 != self.p0 || grid.lambda != self.lambda {
            return Err(WaveError::InvalidInput(format!(
                "grid (Λ = {}, p0 = {}) does not match parameters (Λ = {}, p0 = {})",
                grid.lambda, grid.p0, self.lambda, self.p0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSamples {
    pub rho: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Residual of the full system split by equation type.
#[derive(Debug, Clone)]
pub struct Residual {
    /// Interior equation on rows `1..np-1`, stored as `(np-2) x nq`.
    pub interior: DMatrix<f64>,
    /// Surface condition on the row `p = 0`.
    pub surface: Vec<f64>,
    /// Bed condition `h = 0` on `p = p0`.
    pub bed: Vec<f64>,
}

impl Residual {
    pub fn max_norm(&self) -> f64 {
        self.interior
            .amax()
            .max(self.surface.iter().fold(0.0, |a, v| a.max(v.abs())))
            .max(self.bed.iter().fold(0.0, |a, v| a.max(v.abs())))
    }
}

fn interior_from(
    dv: &FieldDerivatives,
    params: &WaveParameters,
    c: &CoefficientSamples,
) -> DMatrix<f64> {
    let (np, nq) = dv.h.shape();
    DMatrix::from_fn(np - 2, nq, |r, j| {
        let i = r + 1;
        let (h, hq, hp) = (dv.h[(i, j)], dv.hq[(i, j)], dv.hp[(i, j)]);
        let source = c.beta[i] - params.g * (h - params.d) * c.rho_p[i];
        (1.0 + hq * hq) * dv.hpp[(i, j)] - 2.0 * hp * hq * dv.hpq[(i, j)]
            + hp * hp * dv.hqq[(i, j)]
            + source * hp * hp * hp
    })
}

fn surface_from(
    dv: &FieldDerivatives,
    params: &WaveParameters,
    c: &CoefficientSamples,
) -> Vec<f64> {
    let i = dv.h.nrows() - 1;
    (0..dv.h.ncols())
        .map(|j| {
            let (h, hq, hp, hqq) = (dv.h[(i, j)], dv.hq[(i, j)], dv.hp[(i, j)], dv.hqq[(i, j)]);
            let curv = hqq / (1.0 + hq * hq).powf(1.5);
            1.0 + hq * hq
                + (2.0 * params.g * c.rho[i] * h - 2.0 * params.sigma * curv - params.q_head)
                    * hp
                    * hp
        })
        .collect()
}

/// Pointwise residual of the interior equation on the interior nodes.
pub fn interior_residual(h: &HeightField, params: &WaveParameters) -> Result<DMatrix<f64>> {
    params.check_grid(&h.grid)?;
    let dv = h.derivatives();
    ensure_no_stagnation(&dv.hp)?;
    let c = params.sample(&h.grid)?;
    Ok(interior_from(&dv, params, &c))
}

/// Pointwise residual of the dynamic surface condition; with `σ = 0` this is
/// the gravity form.
pub fn surface_residual(h: &HeightField, params: &WaveParameters) -> Result<Vec<f64>> {
    params.check_grid(&h.grid)?;
    let dv = h.derivatives();
    ensure_no_stagnation(&dv.hp)?;
    let c = params.sample(&h.grid)?;
    Ok(surface_from(&dv, params, &c))
}

/// All three residual blocks.
pub fn residual(h: &HeightField, params: &WaveParameters) -> Result<Residual> {
    params.check_grid(&h.grid)?;
    let dv = h.derivatives();
    ensure_no_stagnation(&dv.hp)?;
    let c = params.sample(&h.grid)?;
    Ok(residual_from(&dv, params, &c))
}

pub(crate) fn residual_from(
    dv: &FieldDerivatives,
    params: &WaveParameters,
    c: &CoefficientSamples,
) -> Residual {
    Residual {
        interior: interior_from(dv, params, c),
        surface: surface_from(dv, params, c),
        bed: dv.h.row(0).iter().copied().collect(),
    }
}

/// `h_qq / (1 + h_q^2)^{3/2}` on the surface row.
pub fn curvature_term(h: &HeightField) -> Vec<f64> {
    curvature_of_trace(&h.surface(), h.grid.lambda)
}

/// Curvature expression of a periodic trace sampled on equispaced nodes.
pub fn curvature_of_trace(trace: &[f64], lambda: f64) -> Vec<f64> {
    let d1 = spectral::fourier_derivative(trace, lambda, 1);
    let d2 = spectral::fourier_derivative(trace, lambda, 2);
    d1.iter()
        .zip(&d2)
        .map(|(&hq, &hqq)| hqq / (1.0 + hq * hq).powf(1.5))
        .collect()
}

/// Coefficients of the Fréchet derivative of the residual at a given field.
///
/// Interior rows act as
/// `a_pp φ_pp + a_pq φ_pq + a_qq φ_qq + a_p φ_p + a_q φ_q + a_0 φ`,
/// surface rows as `s_qq φ_qq + s_q φ_q + s_p φ_p + s_0 φ (+ s_Q δQ)`,
/// bed rows as `φ`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub grid: Arc<StripGrid>,
    pub a_pp: DMatrix<f64>,
    pub a_pq: DMatrix<f64>,
    pub a_qq: DMatrix<f64>,
    pub a_p: DMatrix<f64>,
    pub a_q: DMatrix<f64>,
    pub a_0: DMatrix<f64>,
    pub s_qq: Vec<f64>,
    pub s_q: Vec<f64>,
    pub s_p: Vec<f64>,
    pub s_0: Vec<f64>,
    /// Derivative of the surface rows with respect to `Q`, present when `Q` is an unknown.
    pub q_column: Option<Vec<f64>>,
}

/// Exact Fréchet derivative of `residual` with respect to `h` (and `Q`).
pub fn linearize(
    h: &HeightField,
    params: &WaveParameters,
    q_unknown: bool,
) -> Result<Linearization> {
    params.check_grid(&h.grid)?;
    let dv = h.derivatives();
    ensure_no_stagnation(&dv.hp)?;
    let c = params.sample(&h.grid)?;
    Ok(linearize_from(&h.grid, &dv, params, &c, q_unknown))
}

pub(crate) fn linearize_from(
    grid: &Arc<StripGrid>,
    dv: &FieldDerivatives,
    params: &WaveParameters,
    c: &CoefficientSamples,
    q_unknown: bool,
) -> Linearization {
    let (np, nq) = (grid.np, grid.nq);
    let g = params.g;
    let mut lin = Linearization {
        grid: grid.clone(),
        a_pp: DMatrix::zeros(np, nq),
        a_pq: DMatrix::zeros(np, nq),
        a_qq: DMatrix::zeros(np, nq),
        a_p: DMatrix::zeros(np, nq),
        a_q: DMatrix::zeros(np, nq),
        a_0: DMatrix::zeros(np, nq),
        s_qq: vec![0.0; nq],
        s_q: vec![0.0; nq],
        s_p: vec![0.0; nq],
        s_0: vec![0.0; nq],
        q_column: None,
    };
    for i in 1..np - 1 {
        for j in 0..nq {
            let (h, hq, hp) = (dv.h[(i, j)], dv.hq[(i, j)], dv.hp[(i, j)]);
            let (hqq, hpq, hpp) = (dv.hqq[(i, j)], dv.hpq[(i, j)], dv.hpp[(i, j)]);
            let source = c.beta[i] - g * (h - params.d) * c.rho_p[i];
            lin.a_pp[(i, j)] = 1.0 + hq * hq;
            lin.a_pq[(i, j)] = -2.0 * hp * hq;
            lin.a_qq[(i, j)] = hp * hp;
            lin.a_p[(i, j)] = -2.0 * hq * hpq + 2.0 * hp * hqq + 3.0 * source * hp * hp;
            lin.a_q[(i, j)] = 2.0 * hq * hpp - 2.0 * hp * hpq;
            lin.a_0[(i, j)] = -g * c.rho_p[i] * hp * hp * hp;
        }
    }
    let i = np - 1;
    let rho = c.rho[i];
    let sigma = params.sigma;
    for j in 0..nq {
        let (h, hq, hp, hqq) = (dv.h[(i, j)], dv.hq[(i, j)], dv.hp[(i, j)], dv.hqq[(i, j)]);
        let w = 1.0 + hq * hq;
        let curv = hqq / w.powf(1.5);
        lin.s_qq[j] = -2.0 * sigma * hp * hp / w.powf(1.5);
        lin.s_q[j] = 2.0 * hq + 6.0 * sigma * hp * hp * hqq * hq / w.powf(2.5);
        lin.s_p[j] = 2.0 * (2.0 * g * rho * h - 2.0 * sigma * curv - params.q_head) * hp;
        lin.s_0[j] = 2.0 * g * rho * hp * hp;
    }
    if q_unknown {
        lin.q_column = Some((0..nq).map(|j| -dv.hp[(i, j)].powi(2)).collect());
    }
    lin
}

impl Linearization {
    /// Action on a perturbation `φ` (and `δQ`, ignored without a Q column).
    pub fn apply(&self, phi: &DMatrix<f64>, dq: f64) -> Residual {
        let g = &self.grid;
        let (np, nq) = (g.np, g.nq);
        let phi_q = phi * g.dq.transpose();
        let phi_qq = phi * g.dqq.transpose();
        let phi_p = &g.dp * phi;
        let phi_pq = &phi_p * g.dq.transpose();
        let phi_pp = &g.dpp * phi;
        let interior = DMatrix::from_fn(np - 2, nq, |r, j| {
            let i = r + 1;
            self.a_pp[(i, j)] * phi_pp[(i, j)]
                + self.a_pq[(i, j)] * phi_pq[(i, j)]
                + self.a_qq[(i, j)] * phi_qq[(i, j)]
                + self.a_p[(i, j)] * phi_p[(i, j)]
                + self.a_q[(i, j)] * phi_q[(i, j)]
                + self.a_0[(i, j)] * phi[(i, j)]
        });
        let i = np - 1;
        let surface = (0..nq)
            .map(|j| {
                let mut v = self.s_qq[j] * phi_qq[(i, j)]
                    + self.s_q[j] * phi_q[(i, j)]
                    + self.s_p[j] * phi_p[(i, j)]
                    + self.s_0[j] * phi[(i, j)];
                if let Some(col) = &self.q_column {
                    v += col[j] * dq;
                }
                v
            })
            .collect();
        Residual {
            interior,
            surface,
            bed: phi.row(0).iter().copied().collect(),
        }
    }

    /// Dense matrix of the full (unreduced) system. Unknown and equation
    /// `(i, j)` sit at index `i * nq + j`; the optional Q column is last.
    pub fn dense(&self) -> DMatrix<f64> {
        let g = &self.grid;
        let (np, nq) = (g.np, g.nq);
        let n = np * nq;
        let cols = n + usize::from(self.q_column.is_some());
        let mut m = DMatrix::zeros(n, cols);
        for j in 0..nq {
            m[(j, j)] = 1.0;
        }
        for i in 1..np - 1 {
            for j in 0..nq {
                let row = i * nq + j;
                for ii in 0..np {
                    let dp = g.dp[(i, ii)];
                    let dpp = g.dpp[(i, ii)];
                    m[(row, ii * nq + j)] += self.a_pp[(i, j)] * dpp + self.a_p[(i, j)] * dp;
                    for jj in 0..nq {
                        m[(row, ii * nq + jj)] += self.a_pq[(i, j)] * dp * g.dq[(j, jj)];
                    }
                }
                for jj in 0..nq {
                    m[(row, i * nq + jj)] +=
                        self.a_qq[(i, j)] * g.dqq[(j, jj)] + self.a_q[(i, j)] * g.dq[(j, jj)];
                }
                m[(row, row)] += self.a_0[(i, j)];
            }
        }
        let i = np - 1;
        for j in 0..nq {
            let row = i * nq + j;
            for jj in 0..nq {
                m[(row, i * nq + jj)] +=
                    self.s_qq[j] * g.dqq[(j, jj)] + self.s_q[j] * g.dq[(j, jj)];
            }
            for ii in 0..np {
                m[(row, ii * nq + j)] += self.s_p[j] * g.dp[(i, ii)];
            }
            m[(row, row)] += self.s_0[j];
            if let Some(col) = &self.q_column {
                m[(row, n)] = col[j];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laminar_params(p0: f64) -> WaveParameters {
        WaveParameters::homogeneous(1.0, 0.0, 1.0, 2.0 * PI, p0).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = StripGrid::new(16, 9, 2.0 * PI, -1.0).unwrap();
        assert_eq!(g.p[0], -1.0);
        assert_eq!(g.p[8], 0.0);
        assert!(g.p.windows(2).all(|w| w[0] < w[1]));
        assert!(StripGrid::new(15, 9, 1.0, -1.0).is_err());
        assert!(StripGrid::new(16, 9, 1.0, 0.5).is_err());
    }

    #[test]
    fn linear_laminar_field_has_zero_residual() {
        let kappa = 1.0;
        let p0 = -1.0;
        let grid = StripGrid::new(16, 12, 2.0 * PI, p0).unwrap();
        let h = HeightField::from_fn(grid, |_, p| kappa * (p - p0));
        let mut params = laminar_params(p0);
        params.q_head = -2.0 * params.g * p0 * kappa + 1.0 / (kappa * kappa);
        let r = residual(&h, &params).unwrap();
        assert!(r.max_norm() < 1e-13, "{}", r.max_norm());
        // with σ > 0 the flat surface gives the same residual
        params.sigma = 0.3;
        let r2 = surface_residual(&h, &params).unwrap();
        for (a, b) in r.surface.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(h.check_invariants().is_ok());
    }

    #[test]
    fn stagnation_is_rejected() {
        let grid = StripGrid::new(8, 6, 2.0 * PI, -1.0).unwrap();
        let h = HeightField::from_fn(grid, |_, p| -(p + 1.0) * 0.5);
        let params = laminar_params(-1.0);
        assert!(matches!(
            interior_residual(&h, &params),
            Err(WaveError::Stagnation { .. })
        ));
    }

    #[test]
    fn perturbed_ansatz_matches_hand_expansion() {
        // h = κ(p-p0) + ε cos(q)(p-p0): h_pp = 0, h_qq = -ε cos q (p-p0),
        // h_p = κ + ε cos q, h_q = -ε sin q (p-p0), h_pq = -ε sin q.
        let (kappa, eps, p0) = (1.2, 0.05, -1.0);
        let grid = StripGrid::new(16, 10, 2.0 * PI, p0).unwrap();
        let h = HeightField::from_fn(grid.clone(), |q, p| (kappa + eps * q.cos()) * (p - p0));
        let mut params = laminar_params(p0);
        params.q_head = 2.7;
        params.sigma = 0.07;
        let interior = interior_residual(&h, &params).unwrap();
        let surface = surface_residual(&h, &params).unwrap();
        for r in 0..grid.np - 2 {
            let p = grid.p[r + 1];
            let z = p - p0;
            for (j, &q) in grid.q.iter().enumerate() {
                let hp = kappa + eps * q.cos();
                let hq = -eps * q.sin() * z;
                let hpq = -eps * q.sin();
                let hqq = -eps * q.cos() * z;
                let expect = -2.0 * hp * hq * hpq + hp * hp * hqq;
                assert!((interior[(r, j)] - expect).abs() < 1e-12);
            }
        }
        let z = -p0;
        for (j, &q) in grid.q.iter().enumerate() {
            let hp = kappa + eps * q.cos();
            let hq = -eps * q.sin() * z;
            let hqq = -eps * q.cos() * z;
            let h0 = hp * z;
            let curv = hqq / (1.0 + hq * hq).powf(1.5);
            let expect = 1.0 + hq * hq + (2.0 * h0 - 2.0 * 0.07 * curv - 2.7) * hp * hp;
            assert!((surface[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_examples() {
        let lambda = 2.0 * PI;
        let q = spectral::fourier_nodes(32, lambda);
        let flat = vec![0.3; 32];
        assert!(curvature_of_trace(&flat, lambda)
            .iter()
            .all(|v| v.abs() < 1e-15));
        let cosq: Vec<f64> = q.iter().map(|x| x.cos()).collect();
        assert!((curvature_of_trace(&cosq, lambda)[0] + 1.0).abs() < 1e-13);
        let small: Vec<f64> = q.iter().map(|x| 0.1 * x.cos()).collect();
        // at q = π/2: h_q = -0.1, h_qq = 0
        let c = curvature_of_trace(&small, lambda)[8];
        let expect = 0.0 / (1.0f64 + 0.01).powf(1.5);
        assert!((c - expect).abs() < 1e-14);
        let c = curvature_of_trace(&small, lambda)[4];
        let (hq, hqq) = (-0.1 * (PI / 4.0).sin(), -0.1 * (PI / 4.0).cos());
        assert!((c - hqq / (1.0 + hq * hq).powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn linearization_of_laminar_reduces_to_mode_operator() {
        // β = 0, ρ = 1, h = κ(p-p0): interior of L on e^{ikq}ψ(p) is ψ'' - k²κ²ψ.
        let (kappa, p0) = (1.3, -0.8);
        let grid = StripGrid::new(16, 14, 2.0 * PI, p0).unwrap();
        let h = HeightField::from_fn(grid.clone(), |_, p| kappa * (p - p0));
        let params = laminar_params(p0);
        let lin = linearize(&h, &params, false).unwrap();
        let k = 3.0;
        let psi = |p: f64| (p - p0) * (2.0 * p).exp();
        let psi2 = |p: f64| (4.0 + 4.0 * (p - p0)) * (2.0 * p).exp();
        let phi = DMatrix::from_fn(grid.np, grid.nq, |i, j| {
            (k * grid.q[j]).cos() * psi(grid.p[i])
        });
        let out = lin.apply(&phi, 0.0);
        for r in 0..grid.np - 2 {
            let p = grid.p[r + 1];
            for j in 0..grid.nq {
                let expect = (k * grid.q[j]).cos() * (psi2(p) - k * k * kappa * kappa * psi(p));
                assert!((out.interior[(r, j)] - expect).abs() < 1e-9);
            }
        }
        let zero = lin.apply(&DMatrix::zeros(grid.np, grid.nq), 0.0);
        assert_eq!(zero.max_norm(), 0.0);
    }

    #[test]
    fn dense_matrix_agrees_with_action() {
        let p0 = -0.6;
        let grid = StripGrid::new(8, 6, 2.0 * PI, p0).unwrap();
        let h = HeightField::from_fn(grid.clone(), |q, p| {
            (1.1 + 0.1 * q.cos()) * (p - p0) + 0.02 * (p - p0).powi(2) * q.sin()
        });
        let mut params = laminar_params(p0);
        params.sigma = 0.2;
        params.q_head = 2.0;
        params.beta = CoefficientFunction::constant(0.3, p0).unwrap();
        params.rho = CoefficientFunction::polynomial(vec![1.0, -0.1], p0).unwrap();
        let lin = linearize(&h, &params, true).unwrap();
        let phi = DMatrix::from_fn(grid.np, grid.nq, |i, j| {
            ((i * 3 + j * 5) % 7) as f64 * 0.1 - 0.3
        });
        let dq = 0.37;
        let act = lin.apply(&phi, dq);
        let m = lin.dense();
        let mut x = nalgebra::DVector::zeros(grid.np * grid.nq + 1);
        for i in 0..grid.np {
            for j in 0..grid.nq {
                x[i * grid.nq + j] = phi[(i, j)];
            }
        }
        x[grid.np * grid.nq] = dq;
        let y = m * x;
        for j in 0..grid.nq {
            assert!((y[j] - act.bed[j]).abs() < 1e-12);
            assert!((y[(grid.np - 1) * grid.nq + j] - act.surface[j]).abs() < 1e-10);
        }
        for r in 0..grid.np - 2 {
            for j in 0..grid.nq {
                assert!((y[(r + 1) * grid.nq + j] - act.interior[(r, j)]).abs() < 1e-9);
            }
        }
    }
}
