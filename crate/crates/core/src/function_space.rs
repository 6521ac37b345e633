//! Streamline coefficient functions: the Bernoulli function and the density.
//!
//! Every kind has a closed derivative recurrence, so high-order Gevrey
//! diagnostics never go through finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WaveError};

/// Highest derivative order `eval_derivative` accepts.
pub const ORDER_CAP: usize = 60;

/// Default number of probe points for sup-norm estimates on `[p0, 0]`.
pub const DEFAULT_PROBE_POINTS: usize = 257;

/// Step of the Gevrey index search lattice used by `estimate_gevrey_constants`.
pub const GEVREY_S_STEP: f64 = 0.05;

const GEVREY_S_MAX: f64 = 6.0;

/// Relative tolerance on the bound ratio; absorbs the rounding of log-space evaluation.
const RATIO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    /// `coeffs = [c]`.
    Constant,
    /// `sum c_i p^i`.
    Polynomial,
    /// Truncated power series `sum c_i (p - p0)^i`.
    Series,
    /// `sum a_i exp(b_i p)`, coefficients stored as pairs `[a_0, b_0, a_1, b_1, ...]`.
    Exponential,
    /// `sum a_i / (z_i - p)`, pairs `[a_0, z_0, ...]`, every pole outside `[p0, 0]`.
    Rational,
}

/// A real function on `[p0, 0]` with exact derivatives of every order up to `ORDER_CAP`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFunction {
    pub kind: FunctionKind,
    pub coeffs: Vec<f64>,
    pub p0: f64,
    #[serde(default, rename = "s", skip_serializing_if = "Option::is_none")]
    pub declared_gevrey_index: Option<f64>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub declared_constant: Option<f64>,
}

impl CoefficientFunction {
    pub fn new(kind: FunctionKind, coeffs: Vec<f64>, p0: f64) -> Result<Self> {
        let f = CoefficientFunction {
            kind,
            coeffs,
            p0,
            declared_gevrey_index: None,
            declared_constant: None,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn constant(c: f64, p0: f64) -> Result<Self> {
        Self::new(FunctionKind::Constant, vec![c], p0)
    }

    pub fn polynomial(coeffs: Vec<f64>, p0: f64) -> Result<Self> {
        Self::new(FunctionKind::Polynomial, coeffs, p0)
    }

    pub fn series(coeffs: Vec<f64>, p0: f64) -> Result<Self> {
        Self::new(FunctionKind::Series, coeffs, p0)
    }

    /// `a * exp(b p)`.
    pub fn exponential(a: f64, b: f64, p0: f64) -> Result<Self> {
        Self::new(FunctionKind::Exponential, vec![a, b], p0)
    }

    /// `a / (z - p)`.
    pub fn rational(a: f64, z: f64, p0: f64) -> Result<Self> {
        Self::new(FunctionKind::Rational, vec![a, z], p0)
    }

    pub fn with_declared_gevrey(mut self, s: f64, m: f64) -> Result<Self> {
        self.declared_gevrey_index = Some(s);
        self.declared_constant = Some(m);
        self.validate()?;
        Ok(self)
    }

    /// Checks the invariants; called by every constructor and after deserialization.
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 < 0.0) || !self.p0.is_finite() {
            return Err(WaveError::InvalidInput(format!(
                "domain [p0, 0] requires finite p0 < 0, got {}",
                self.p0
            )));
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(WaveError::InvalidInput("non-finite coefficient".into()));
        }
        match self.kind {
            FunctionKind::Constant => {
                if self.coeffs.len() != 1 {
                    return Err(WaveError::InvalidInput(
                        "constant kind takes exactly one coefficient".into(),
                    ));
                }
            }
            FunctionKind::Polynomial | FunctionKind::Series => {
                if self.coeffs.is_empty() {
                    return Err(WaveError::InvalidInput(
                        "polynomial and series kinds need at least one coefficient".into(),
                    ));
                }
            }
            FunctionKind::Exponential | FunctionKind::Rational => {
                if self.coeffs.is_empty() || self.coeffs.len() % 2 != 0 {
                    return Err(WaveError::InvalidInput(
                        "exponential and rational kinds take coefficient pairs".into(),
                    ));
                }
            }
        }
        if self.kind == FunctionKind::Rational {
            let margin = 1e-6 * self.p0.abs();
            for pair in self.coeffs.chunks(2) {
                let z = pair[1];
                let dist = if z > 0.0 {
                    z
                } else if z < self.p0 {
                    self.p0 - z
                } else {
                    0.0
                };
                if dist <= margin {
                    return Err(WaveError::InvalidInput(format!(
                        "rational pole at {z} is not bounded away from [{}, 0]",
                        self.p0
                    )));
                }
            }
        }
        if let Some(s) = self.declared_gevrey_index {
            if !(s >= 1.0) {
                return Err(WaveError::InvalidInput(format!(
                    "declared Gevrey index {s} < 1"
                )));
            }
        }
        if let Some(m) = self.declared_constant {
            if !(m > 0.0) {
                return Err(WaveError::InvalidInput(format!(
                    "declared constant {m} must be > 0"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: f64) -> Result<f64> {
        self.eval_derivative(0, p)
    }

    /// Exact `k`-th derivative at `p`.
    pub fn eval_derivative(&self, k: usize, p: f64) -> Result<f64> {
        if !(p >= self.p0 && p <= 0.0) {
            return Err(WaveError::Domain { p, p0: self.p0 });
        }
        if k > ORDER_CAP {
            return Err(WaveError::UnsupportedOrder { k, cap: ORDER_CAP });
        }
        Ok(self.derivative_unchecked(k, p))
    }

    fn derivative_unchecked(&self, k: usize, p: f64) -> f64 {
        match self.kind {
            FunctionKind::Constant => {
                if k == 0 {
                    self.coeffs[0]
                } else {
                    0.0
                }
            }
            FunctionKind::Polynomial => poly_derivative(&self.coeffs, k, p),
            FunctionKind::Series => poly_derivative(&self.coeffs, k, p - self.p0),
            FunctionKind::Exponential => self
                .coeffs
                .chunks(2)
                .map(|ab| ab[0] * ab[1].powi(k as i32) * (ab[1] * p).exp())
                .sum(),
            FunctionKind::Rational => {
                let kf = factorial(k);
                self.coeffs
                    .chunks(2)
                    .map(|az| az[0] * kf / (az[1] - p).powi(k as i32 + 1))
                    .sum()
            }
        }
    }

    /// `a f + b g` for functions of the same kind on the same domain.
    pub fn linear_combination(a: f64, f: &Self, b: f64, g: &Self) -> Result<Self> {
        if f.kind != g.kind || f.p0 != g.p0 {
            return Err(WaveError::InvalidInput(
                "linear combination needs matching kind and domain".into(),
            ));
        }
        let coeffs = match f.kind {
            FunctionKind::Constant | FunctionKind::Polynomial | FunctionKind::Series => {
                let n = f.coeffs.len().max(g.coeffs.len());
                (0..n)
                    .map(|i| {
                        a * f.coeffs.get(i).copied().unwrap_or(0.0)
                            + b * g.coeffs.get(i).copied().unwrap_or(0.0)
                    })
                    .collect()
            }
            FunctionKind::Exponential | FunctionKind::Rational => {
                let scale = |c: &[f64], w: f64| -> Vec<f64> {
                    c.chunks(2).flat_map(|pr| [w * pr[0], pr[1]]).collect()
                };
                let mut v = scale(&f.coeffs, a);
                v.extend(scale(&g.coeffs, b));
                v
            }
        };
        Self::new(f.kind, coeffs, f.p0)
    }

    /// Equispaced probe grid of `n` points on `[p0, 0]`, endpoints included.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        probe_grid(self.p0, n)
    }

    /// `sup |f^(k)|` over the probe grid, for `k = 0..=k_max`.
    pub fn derivative_sups(&self, k_max: usize, probe: &[f64]) -> Result<Vec<f64>> {
        (0..=k_max)
            .map(|k| {
                probe.iter().try_fold(0.0f64, |acc, &p| {
                    Ok(acc.max(self.eval_derivative(k, p)?.abs()))
                })
            })
            .collect()
    }
}

pub fn probe_grid(p0: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![p0];
    }
    (0..n)
        .map(|i| p0 * (1.0 - i as f64 / (n - 1) as f64))
        .collect()
}

fn poly_derivative(c: &[f64], k: usize, t: f64) -> f64 {
    if k >= c.len() {
        return 0.0;
    }
    // Horner on the coefficients of the k-th derivative.
    let mut acc = 0.0;
    for i in (k..c.len()).rev() {
        acc = acc * t + c[i] * falling_factorial(i, k);
    }
    acc
}

fn falling_factorial(n: usize, k: usize) -> f64 {
    ((n - k + 1)..=n).fold(1.0, |acc, j| acc * j as f64)
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

pub(crate) fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

/// Outcome of a Gevrey bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GevreyCheck {
    pub holds: bool,
    /// Largest `|f^(k)(p)| / (M^(k+1) (k!)^s)` seen.
    pub worst_ratio: f64,
    pub worst_k: usize,
    pub worst_p: f64,
}

/// Checks `sup_grid |f^(k)| <= M^(k+1) (k!)^s` for every `k <= k_max`.
pub fn verify_gevrey_bound(
    f: &CoefficientFunction,
    s: f64,
    m: f64,
    k_max: usize,
    probe: &[f64],
) -> Result<GevreyCheck> {
    if probe.is_empty() {
        return Err(WaveError::InvalidInput("empty probe grid".into()));
    }
    if !(s >= 1.0) || !(m > 0.0) {
        return Err(WaveError::InvalidInput(format!(
            "need s >= 1 and M > 0, got s = {s}, M = {m}"
        )));
    }
    let ln_m = m.ln();
    let mut worst = GevreyCheck {
        holds: true,
        worst_ratio: 0.0,
        worst_k: 0,
        worst_p: probe[0],
    };
    for k in 0..=k_max {
        let ln_bound = (k as f64 + 1.0) * ln_m + s * ln_factorial(k);
        for &p in probe {
            let d = f.eval_derivative(k, p)?.abs();
            if d == 0.0 {
                continue;
            }
            let ratio = (d.ln() - ln_bound).exp();
            if ratio > worst.worst_ratio {
                worst.worst_ratio = ratio;
                worst.worst_k = k;
                worst.worst_p = p;
            }
        }
    }
    worst.holds = worst.worst_ratio <= 1.0 + RATIO_TOL;
    Ok(worst)
}

/// Fitted Gevrey data for a coefficient function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GevreyEstimate {
    pub s_hat: f64,
    pub m_hat: f64,
    /// Mean of `ln(M^(k+1) (k!)^s) - ln sup|f^(k)|` over the non-zero orders.
    pub mean_log_slack: f64,
    /// Set when every derivative vanishes on the probe grid.
    pub degenerate: bool,
}

/// Fits `(s, M)` on the lattice `s = 1, 1.05, ...`: for each `s` the least
/// admissible `M` is exact, and the `s` with the smallest mean log-slack wins
/// (ties go to the smaller `s`).
pub fn estimate_gevrey_constants(f: &CoefficientFunction, k_max: usize) -> Result<GevreyEstimate> {
    if k_max < 5 {
        return Err(WaveError::InvalidInput(format!("k_max = {k_max} < 5")));
    }
    let probe = f.probe_grid(DEFAULT_PROBE_POINTS);
    let sups = f.derivative_sups(k_max, &probe)?;
    let data: Vec<(f64, f64, f64)> = sups
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(k, &a)| (k as f64 + 1.0, ln_factorial(k), a.ln()))
        .collect();
    if data.is_empty() {
        return Ok(GevreyEstimate {
            s_hat: 1.0,
            m_hat: f64::MIN_POSITIVE,
            mean_log_slack: 0.0,
            degenerate: true,
        });
    }
    let steps = ((GEVREY_S_MAX - 1.0) / GEVREY_S_STEP).round() as usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..=steps {
        let s = 1.0 + i as f64 * GEVREY_S_STEP;
        let ln_m = data
            .iter()
            .map(|&(kp1, lf, la)| (la - s * lf) / kp1)
            .fold(f64::NEG_INFINITY, f64::max);
        let slack = data
            .iter()
            .map(|&(kp1, lf, la)| kp1 * ln_m + s * lf - la)
            .sum::<f64>()
            / data.len() as f64;
        if best.map_or(true, |(_, _, b)| slack < b - 1e-12) {
            best = Some((s, ln_m, slack));
        }
    }
    let (s_hat, ln_m, slack) = best.expect("lattice is nonempty");
    Ok(GevreyEstimate {
        s_hat,
        m_hat: ln_m.exp(),
        mean_log_slack: slack,
        degenerate: false,
    })
}
