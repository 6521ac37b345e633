//! Laminar profiles, the bifurcation point of the first mode, damped Newton on
//! the even (crest-symmetric) reduction of the collocation system, and
//! amplitude continuation.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::ode::{self, Tolerance};
use crate::strip::{
    self, CoefficientSamples, HeightField, StripGrid, WaveParameters, STAGNATION_FLOOR,
};

/// Laminar solution `H(p)` sampled on a set of `p` levels.
#[derive(Debug, Clone, Serialize)]
pub struct LaminarProfile {
    pub kappa: f64,
    pub p: Vec<f64>,
    pub h: Vec<f64>,
    pub hp: Vec<f64>,
    /// Bernoulli head of the flat-surface flow.
    pub q_head: f64,
}

fn clamp_p(p: f64, p0: f64) -> f64 {
    p.clamp(p0, 0.0)
}

/// Integrates `H'' = -(β - g(H - d)ρ_p) H'^3`, `H(p0) = 0`, `H'(p0) = κ`, and
/// reads `Q` off the flat-surface condition.
pub fn solve_laminar(
    params: &WaveParameters,
    p_nodes: &[f64],
    kappa0: f64,
) -> Result<LaminarProfile> {
    params.validate()?;
    if !(kappa0 > 0.0) || !kappa0.is_finite() {
        return Err(WaveError::InvalidInput(format!(
            "kappa0 = {kappa0} must be > 0"
        )));
    }
    let p0 = params.p0;
    if p_nodes.first() != Some(&p0) || p_nodes.iter().any(|&p| p > 0.0) {
        return Err(WaveError::InvalidInput(
            "p levels must start at p0 and stay in [p0, 0]".into(),
        ));
    }
    // integrate the deviation (u, v) = (H - κ(p - p0), H' - κ) from the
    // initial tangent line, which is exactly zero when H'' vanishes
    let mut stagnated = f64::INFINITY;
    let sol = ode::integrate(
        |p, y, dy| {
            let p = clamp_p(p, p0);
            let (rho_p, beta) = match (params.rho.eval_derivative(1, p), params.beta.eval(p)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return false,
            };
            let h = kappa0 * (p - p0) + y[0];
            let hp = kappa0 + y[1];
            dy[0] = y[1];
            dy[1] = -(beta - params.g * (h - params.d) * rho_p) * hp.powi(3);
            if hp < STAGNATION_FLOOR {
                stagnated = stagnated.min(hp);
                return false;
            }
            hp < 1e8 && dy[1].is_finite()
        },
        p0,
        &[0.0, 0.0],
        p_nodes,
        Tolerance::default(),
    );
    let sol = match sol {
        Ok(s) => s,
        Err(e) => {
            if stagnated.is_finite() {
                return Err(WaveError::Stagnation {
                    min_hp: stagnated,
                    floor: STAGNATION_FLOOR,
                });
            }
            return Err(e);
        }
    };
    let h: Vec<f64> = sol
        .iter()
        .zip(p_nodes)
        .map(|(y, &p)| kappa0 * (p - p0) + y[0])
        .collect();
    let hp: Vec<f64> = sol.iter().map(|y| kappa0 + y[1]).collect();
    let (h_top, hp_top) = (*h.last().unwrap(), *hp.last().unwrap());
    let top = *p_nodes.last().unwrap();
    let q_head = 2.0 * params.g * params.rho.eval(top)? * h_top + 1.0 / (hp_top * hp_top);
    Ok(LaminarProfile {
        kappa: kappa0,
        p: p_nodes.to_vec(),
        h,
        hp,
        q_head,
    })
}

/// Laminar profile on the grid as a height field, together with its `Q`.
pub fn laminar_field(
    grid: &Arc<StripGrid>,
    params: &WaveParameters,
    kappa: f64,
) -> Result<(HeightField, f64)> {
    params.check_grid(grid)?;
    let prof = solve_laminar(params, &grid.p, kappa)?;
    let field = HeightField::from_profile(grid.clone(), &prof.h)?;
    Ok((field, prof.q_head))
}

/// Dispersion function of mode `k` (wavenumber, not index) at the laminar
/// flow with slope `κ`; a zero marks a bifurcation point.
pub fn dispersion(params: &WaveParameters, kappa: f64, k: f64) -> Result<f64> {
    let p0 = params.p0;
    let sol = ode::integrate(
        |p, y, dy| {
            let p = clamp_p(p, p0);
            let (rho_p, beta) = match (params.rho.eval_derivative(1, p), params.beta.eval(p)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return false,
            };
            let hp = y[1];
            let source = beta - params.g * (y[0] - params.d) * rho_p;
            dy[0] = hp;
            dy[1] = -source * hp.powi(3);
            dy[2] = y[3];
            dy[3] = -3.0 * source * hp * hp * y[3]
                + (k * k * hp * hp + params.g * rho_p * hp.powi(3)) * y[2];
            hp > STAGNATION_FLOOR && hp < 1e8 && y[2].abs() < 1e200
        },
        p0,
        &[0.0, kappa, 0.0, 1.0],
        &[0.0],
        Tolerance::default(),
    )?;
    let y = &sol[0];
    let rho0 = params.rho.eval(0.0)?;
    Ok((params.g * rho0 + params.sigma * k * k) * y[1].powi(3) * y[2] - y[3])
}

/// Laminar slope `κ*` at which the first mode `2π/Λ` bifurcates. Scans a
/// log grid on `[0.05, 20]` and bisects the sign change nearest to `hint`
/// (the smallest root without a hint).
pub fn bifurcation_kappa(params: &WaveParameters, hint: Option<f64>) -> Result<f64> {
    let k1 = 2.0 * std::f64::consts::PI / params.lambda;
    let (lo, hi, n) = (0.05f64, 20.0f64, 240usize);
    let grid: Vec<f64> = (0..=n)
        .map(|i| lo * (hi / lo).powf(i as f64 / n as f64))
        .collect();
    let values: Vec<Option<f64>> = grid
        .iter()
        .map(|&k| dispersion(params, k, k1).ok())
        .collect();
    let mut brackets = Vec::new();
    for i in 0..n {
        if let (Some(a), Some(b)) = (values[i], values[i + 1]) {
            if a == 0.0 {
                brackets.push((grid[i], grid[i]));
            } else if a * b < 0.0 {
                brackets.push((grid[i], grid[i + 1]));
            }
        }
    }
    let chosen = match hint {
        Some(h) => brackets.iter().copied().min_by(|x, y| {
            let dx = (x.0.ln() + x.1.ln()) / 2.0 - h.ln();
            let dy = (y.0.ln() + y.1.ln()) / 2.0 - h.ln();
            dx.abs().total_cmp(&dy.abs())
        }),
        None => brackets.first().copied(),
    };
    let (mut a, mut b) = chosen.ok_or_else(|| {
        WaveError::InvalidInput("no bifurcation point of the first mode for κ in [0.05, 20]".into())
    })?;
    if a == b {
        return Ok(a);
    }
    let mut fa = dispersion(params, a, k1)?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = dispersion(params, m, k1)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Discrete null vector of the laminar linearization restricted to the first
/// cosine mode, normalized to `ψ(0) = 1`.
pub fn first_mode_profile(laminar: &HeightField, params: &WaveParameters) -> Result<Vec<f64>> {
    let grid = &laminar.grid;
    let lin = strip::linearize(laminar, params, false)?;
    let np = grid.np;
    let k = grid.k1();
    let mut m = DMatrix::zeros(np, np);
    m[(0, 0)] = 1.0;
    for i in 1..np - 1 {
        for ii in 0..np {
            m[(i, ii)] = lin.a_pp[(i, 0)] * grid.dpp[(i, ii)] + lin.a_p[(i, 0)] * grid.dp[(i, ii)];
        }
        m[(i, i)] += -k * k * lin.a_qq[(i, 0)] + lin.a_0[(i, 0)];
    }
    let top = np - 1;
    for ii in 0..np {
        m[(top, ii)] = lin.s_p[0] * grid.dp[(top, ii)];
    }
    m[(top, top)] += lin.s_0[0] - k * k * lin.s_qq[0];
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let psi: Vec<f64> = v_t.row(imin).iter().copied().collect();
    let top_val = psi[top];
    if top_val.abs() < 1e-14 {
        return Err(WaveError::InvalidInput(
            "first mode vanishes at the surface".into(),
        ));
    }
    Ok(psi.iter().map(|v| v / top_val).collect())
}

/// Which scalar closes the Newton system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Constraint {
    /// `Q` is held at `params.q_head`.
    QFixed,
    /// `Q` is an unknown and the first cosine amplitude of the surface is pinned.
    AmplitudePin(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Pivot ratio below which the Jacobian is declared singular.
    pub singular_ratio: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 25,
            max_halvings: 8,
            singular_ratio: 1e-13,
        }
    }
}

/// A converged point on the solution branch.
#[derive(Debug, Clone)]
pub struct ContinuationState {
    pub h: HeightField,
    pub q_head: f64,
    /// First cosine coefficient of the surface trace.
    pub amplitude: f64,
    /// Accepted continuation steps from the laminar flow.
    pub step_count: usize,
    pub residual_norm: f64,
    /// Max-norm residual before each Newton iteration and after the last.
    pub residual_history: Vec<f64>,
    /// `max r_{k+1} / r_k^2` over the last three Newton steps.
    pub quadratic_constant: Option<f64>,
}

impl ContinuationState {
    pub fn newton_iterations(&self) -> usize {
        self.residual_history.len().saturating_sub(1)
    }
}

/// First cosine amplitude `(2/N) Σ η_j cos(2π j / N)` of a periodic trace.
pub fn first_mode_amplitude(trace: &[f64]) -> f64 {
    let n = trace.len();
    let w = 2.0 * std::f64::consts::PI / n as f64;
    2.0 / n as f64
        * trace
            .iter()
            .enumerate()
            .map(|(j, v)| v * (w * j as f64).cos())
            .sum::<f64>()
}

/// Even part `(h(q) + h(-q))/2` of every row; removes all sine modes.
pub fn symmetrize(values: &DMatrix<f64>) -> DMatrix<f64> {
    let nq = values.ncols();
    DMatrix::from_fn(values.nrows(), nq, |i, j| {
        0.5 * (values[(i, j)] + values[(i, (nq - j) % nq)])
    })
}

/// Collocation system restricted to fields even in `q`. Unknowns are `h` at
/// `q`-indices `0..=nq/2` on rows `1..np` (the bed row is fixed at zero),
/// plus `Q` when the amplitude is pinned.
struct ReducedSystem<'a> {
    grid: Arc<StripGrid>,
    params: WaveParameters,
    coeffs: CoefficientSamples,
    constraint: Constraint,
    m: usize,
    dq_fold: DMatrix<f64>,
    dqq_fold: DMatrix<f64>,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl<'a> ReducedSystem<'a> {
    fn new(grid: Arc<StripGrid>, params: &WaveParameters, constraint: Constraint) -> Result<Self> {
        let nq = grid.nq;
        let m = nq / 2 + 1;
        let fold = |d: &DMatrix<f64>| {
            DMatrix::from_fn(m, m, |j, c| {
                if c == 0 || c == nq / 2 {
                    d[(j, c)]
                } else {
                    d[(j, c)] + d[(j, nq - c)]
                }
            })
        };
        Ok(ReducedSystem {
            coeffs: params.sample(&grid)?,
            dq_fold: fold(&grid.dq),
            dqq_fold: fold(&grid.dqq),
            params: params.clone(),
            constraint,
            m,
            grid,
            _marker: std::marker::PhantomData,
        })
    }

    fn q_unknown(&self) -> bool {
        matches!(self.constraint, Constraint::AmplitudePin(_))
    }

    fn size(&self) -> usize {
        (self.grid.np - 1) * self.m + usize::from(self.q_unknown())
    }

    fn pack(&self, values: &DMatrix<f64>, q_head: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.size());
        for i in 1..self.grid.np {
            for c in 0..self.m {
                x[(i - 1) * self.m + c] = values[(i, c)];
            }
        }
        if self.q_unknown() {
            x[self.size() - 1] = q_head;
        }
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (DMatrix<f64>, f64) {
        let nq = self.grid.nq;
        let values = DMatrix::from_fn(self.grid.np, nq, |i, j| {
            if i == 0 {
                0.0
            } else {
                x[(i - 1) * self.m + j.min(nq - j)]
            }
        });
        let q = if self.q_unknown() {
            x[self.size() - 1]
        } else {
            self.params.q_head
        };
        (values, q)
    }

    fn params_with(&self, q_head: f64) -> WaveParameters {
        let mut p = self.params.clone();
        p.q_head = q_head;
        p
    }

    /// Reduced residual vector; `Err` on stagnation.
    fn residual(&self, x: &DVector<f64>) -> Result<(DVector<f64>, HeightField, f64)> {
        let (values, q) = self.unpack(x);
        let field = HeightField::new(self.grid.clone(), values)?;
        let dv = field.derivatives();
        strip::ensure_no_stagnation(&dv.hp)?;
        let res = strip::residual_from(&dv, &self.params_with(q), &self.coeffs);
        let np = self.grid.np;
        let mut f = DVector::zeros(self.size());
        for i in 1..np - 1 {
            for c in 0..self.m {
                f[(i - 1) * self.m + c] = res.interior[(i - 1, c)];
            }
        }
        for c in 0..self.m {
            f[(np - 2) * self.m + c] = res.surface[c];
        }
        if let Constraint::AmplitudePin(a) = self.constraint {
            f[self.size() - 1] = first_mode_amplitude(&field.surface()) - a;
        }
        Ok((f, field, q))
    }

    fn jacobian(&self, field: &HeightField, q: f64) -> faer::Mat<f64> {
        let g = &self.grid;
        let (np, nq, m) = (g.np, g.nq, self.m);
        let dv = field.derivatives();
        let lin =
            strip::linearize_from(g, &dv, &self.params_with(q), &self.coeffs, self.q_unknown());
        let n = self.size();
        let mut jac = faer::Mat::<f64>::zeros(n, n);
        let col = |i: usize, c: usize| (i - 1) * m + c;
        for i in 1..np - 1 {
            for j in 0..m {
                let row = col(i, j);
                let (app, apq, aqq) = (lin.a_pp[(i, j)], lin.a_pq[(i, j)], lin.a_qq[(i, j)]);
                let (ap, aq, a0) = (lin.a_p[(i, j)], lin.a_q[(i, j)], lin.a_0[(i, j)]);
                for ii in 1..np {
                    let dp = g.dp[(i, ii)];
                    jac[(row, col(ii, j))] += app * g.dpp[(i, ii)] + ap * dp;
                    if apq != 0.0 {
                        for c in 0..m {
                            jac[(row, col(ii, c))] += apq * dp * self.dq_fold[(j, c)];
                        }
                    }
                }
                for c in 0..m {
                    jac[(row, col(i, c))] +=
                        aqq * self.dqq_fold[(j, c)] + aq * self.dq_fold[(j, c)];
                }
                jac[(row, row)] += a0;
            }
        }
        let top = np - 1;
        for j in 0..m {
            let row = col(top, j);
            for c in 0..m {
                jac[(row, col(top, c))] +=
                    lin.s_qq[j] * self.dqq_fold[(j, c)] + lin.s_q[j] * self.dq_fold[(j, c)];
            }
            for ii in 1..np {
                jac[(row, col(ii, j))] += lin.s_p[j] * g.dp[(top, ii)];
            }
            jac[(row, row)] += lin.s_0[j];
            if let Some(qc) = &lin.q_column {
                jac[(row, n - 1)] = qc[j];
            }
        }
        if self.q_unknown() {
            let w = 2.0 * std::f64::consts::PI / nq as f64;
            for c in 0..m {
                let mult = if c == 0 || c == nq / 2 { 1.0 } else { 2.0 };
                jac[(n - 1, col(top, c))] = 2.0 / nq as f64 * mult * (w * c as f64).cos();
            }
        }
        jac
    }
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// `max r_{k+1}/r_k^2` over the last three pairs above the round-off floor.
/// Pairs landing within a decade of the final residual are taken to be at the
/// floor, where the ratio measures rounding rather than the iteration.
pub(crate) fn quadratic_constant(history: &[f64]) -> Option<f64> {
    let floor = 10.0 * history.last().copied()?;
    let pairs: Vec<f64> = history
        .windows(2)
        .filter(|w| w[1] > floor && w[0] > 0.0)
        .map(|w| w[1] / (w[0] * w[0]))
        .collect();
    let tail = &pairs[pairs.len().saturating_sub(3)..];
    tail.iter().copied().reduce(f64::max)
}

/// Damped Newton iteration for the collocation system. The initial field is
/// replaced by its even part (this pins the phase: every sine mode is zero);
/// `params.q_head` is the fixed or initial `Q`.
pub fn newton_solve(
    h0: &HeightField,
    params: &WaveParameters,
    constraint: Constraint,
    opts: &NewtonOptions,
) -> Result<ContinuationState> {
    params.validate()?;
    params.check_grid(&h0.grid)?;
    let sys = ReducedSystem::new(h0.grid.clone(), params, constraint)?;
    let mut x = sys.pack(&symmetrize(&h0.values), params.q_head);
    let (mut f, mut field, mut q) = sys.residual(&x)?;
    let mut r = max_norm(&f);
    let mut history = vec![r];
    let mut iter = 0usize;
    while r > opts.tol {
        if iter >= opts.max_iter || !r.is_finite() {
            return Err(WaveError::Divergence { history });
        }
        iter += 1;
        let jac = sys.jacobian(&field, q);
        let lu = jac.partial_piv_lu();
        let u = lu.U();
        let (mut umin, mut umax) = (f64::INFINITY, 0.0f64);
        for k in 0..u.nrows() {
            let d = u[(k, k)].abs();
            umin = umin.min(d);
            umax = umax.max(d);
        }
        let ratio = umin / umax;
        if !(ratio > opts.singular_ratio) {
            return Err(WaveError::BifurcationPoint { pivot_ratio: ratio });
        }
        let rhs = faer::Mat::<f64>::from_fn(f.len(), 1, |i, _| f[i]);
        let dx = lu.solve(&rhs);
        let step = DVector::from_fn(f.len(), |i, _| dx[(i, 0)]);
        let mut t = 1.0;
        let mut accepted = None;
        let mut stagnated = None;
        for _ in 0..=opts.max_halvings {
            let trial = &x - &step * t;
            match sys.residual(&trial) {
                Ok((ft, fieldt, qt)) => {
                    let rt = max_norm(&ft);
                    if rt <= (1.0 - 1e-4 * t) * r || rt <= opts.tol {
                        accepted = Some((trial, ft, fieldt, qt, rt));
                        break;
                    }
                }
                Err(e @ WaveError::Stagnation { .. }) => stagnated = Some(e),
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        match accepted {
            Some((xt, ft, fieldt, qt, rt)) => {
                x = xt;
                f = ft;
                field = fieldt;
                q = qt;
                r = rt;
                history.push(r);
            }
            None => {
                if let Some(e) = stagnated {
                    return Err(e);
                }
                return Err(WaveError::Divergence { history });
            }
        }
    }
    let amplitude = first_mode_amplitude(&field.surface());
    Ok(ContinuationState {
        quadratic_constant: quadratic_constant(&history),
        h: field,
        q_head: q,
        amplitude,
        step_count: 0,
        residual_norm: r,
        residual_history: history,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions {
    pub newton: NewtonOptions,
    /// Preferred laminar slope for the bifurcation point.
    pub kappa_hint: Option<f64>,
    pub max_bisections: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            newton: NewtonOptions::default(),
            kappa_hint: None,
            max_bisections: 6,
        }
    }
}

/// Result of a continuation run. `failure` is set when the run stopped early;
/// `states` then holds the partial branch.
#[derive(Debug, Clone)]
pub struct Branch {
    pub kappa_star: f64,
    pub laminar_q: f64,
    pub states: Vec<ContinuationState>,
    pub failure: Option<WaveError>,
}

/// Follows the branch bifurcating from the laminar flow at `κ*` through the
/// requested surface amplitudes.
pub fn continuation_run(
    grid: &Arc<StripGrid>,
    params: &WaveParameters,
    amplitude_targets: &[f64],
    opts: &ContinuationOptions,
) -> Result<Branch> {
    params.validate()?;
    params.check_grid(grid)?;
    if amplitude_targets
        .iter()
        .any(|a| !(a.is_finite() && *a >= 0.0))
    {
        return Err(WaveError::InvalidInput(
            "amplitude targets must be finite and >= 0".into(),
        ));
    }
    if amplitude_targets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(WaveError::InvalidInput(
            "amplitude targets must be strictly increasing".into(),
        ));
    }
    if amplitude_targets.first().is_some_and(|&a| a > 1e-2) {
        return Err(WaveError::InvalidInput(
            "the first amplitude target must be <= 1e-2".into(),
        ));
    }
    let kappa_star = bifurcation_kappa(params, opts.kappa_hint)?;
    let (laminar, q_star) = laminar_field(grid, params, kappa_star)?;
    let mut base = params.clone();
    base.q_head = q_star;
    let psi = first_mode_profile(&laminar, &base)?;
    let k1 = grid.k1();

    let laminar_state = ContinuationState {
        residual_norm: strip::residual(&laminar, &base)?.max_norm(),
        h: laminar.clone(),
        q_head: q_star,
        amplitude: 0.0,
        step_count: 0,
        residual_history: Vec::new(),
        quadratic_constant: None,
    };
    // accepted points (amplitude, field, Q) used by the secant predictor
    let mut path: Vec<(f64, DMatrix<f64>, f64)> = vec![(0.0, laminar.values.clone(), q_star)];
    let mut states = Vec::new();
    let mut steps = 0usize;

    for &target in amplitude_targets {
        if target == 0.0 {
            states.push(laminar_state.clone());
            continue;
        }
        let mut next = target;
        let mut bisections = 0usize;
        loop {
            let (a_cur, ref h_cur, q_cur) = *path.last().expect("path starts at laminar");
            let (pred, q_pred) = if path.len() == 1 {
                let v = DMatrix::from_fn(grid.np, grid.nq, |i, j| {
                    h_cur[(i, j)] + next * psi[i] * (k1 * grid.q[j]).cos()
                });
                (v, q_cur)
            } else {
                let (a_prev, ref h_prev, q_prev) = path[path.len() - 2];
                let t = (next - a_cur) / (a_cur - a_prev);
                (h_cur + (h_cur - h_prev) * t, q_cur + (q_cur - q_prev) * t)
            };
            let mut p = base.clone();
            p.q_head = q_pred;
            let guess = HeightField::new(grid.clone(), pred)?;
            match newton_solve(&guess, &p, Constraint::AmplitudePin(next), &opts.newton) {
                Ok(mut st) => {
                    steps += 1;
                    st.step_count = steps;
                    path.push((st.amplitude, st.h.values.clone(), st.q_head));
                    if next == target {
                        states.push(st);
                        break;
                    }
                    next = target;
                }
                Err(e) => {
                    bisections += 1;
                    if bisections > opts.max_bisections {
                        return Ok(Branch {
                            kappa_star,
                            laminar_q: q_star,
                            states,
                            failure: Some(e),
                        });
                    }
                    next = a_cur + 0.5 * (next - a_cur);
                }
            }
        }
    }
    Ok(Branch {
        kappa_star,
        laminar_q: q_star,
        states,
        failure: None,
    })
}

/// `0 < min h_p` and `max h_p <= 1/δ` at every node.
pub fn check_no_stagnation(h: &HeightField, delta: f64) -> bool {
    let (lo, hi) = h.min_max_hp();
    delta > 0.0 && lo > 0.0 && hi <= 1.0 / delta
}
