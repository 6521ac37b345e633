//! Exact checks of the combinatorial inequalities behind the Leibniz
//! estimates, a majorant calculus for factorial-type derivative bounds, and
//! empirical product-stability checks on sampled periodic functions.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Result, WaveError};
use crate::function_space::ln_factorial;
use crate::regularity::{holder_norm_periodic, FILTER_REL};
use crate::spectral;

/// Rational lower bound for `π²` (`π² = 9.8696044010893...`).
pub const PI_SQ_LOWER: (u64, u64) = (9_869_604_401, 1_000_000_000);

fn big_factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

fn big_binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k as u64 {
        acc = acc * (n as u64 - i) / (i + 1);
    }
    acc
}

/// `C(α, β) <= C(|α|, |β|)` in exact integer arithmetic.
pub fn verify_binomial_dominance(alpha: (usize, usize), beta: (usize, usize)) -> Result<bool> {
    if beta.0 > alpha.0 || beta.1 > alpha.1 {
        return Err(WaveError::InvalidInput(format!(
            "β = {beta:?} is not <= α = {alpha:?}"
        )));
    }
    let lhs = big_binomial(alpha.0, beta.0) * big_binomial(alpha.1, beta.1);
    Ok(lhs <= big_binomial(alpha.0 + alpha.1, beta.0 + beta.1))
}

/// `(m!)^{s-1} (n!)^{s-1} <= ((m+n)!)^{s-1}`. For `s >= 1` the power is
/// monotone, so the check reduces to `m! n! <= (m+n)!` on big integers.
pub fn verify_factorial_superadditivity(m: usize, n: usize, s: f64) -> Result<bool> {
    if !(s >= 1.0) {
        return Err(WaveError::InvalidInput(format!("s = {s} must be >= 1")));
    }
    if s == 1.0 {
        return Ok(true);
    }
    Ok(big_factorial(m) * big_factorial(n) <= big_factorial(m + n))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SumCheck {
    pub sum: f64,
    pub bound: f64,
    pub ok: bool,
}

impl SumCheck {
    /// `bound / sum`; infinite for an empty sum.
    pub fn margin(&self) -> f64 {
        if self.sum == 0.0 {
            f64::INFINITY
        } else {
            self.bound / self.sum
        }
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::INFINITY)
}

/// Whether `value <= factor * π²` using the rational lower bound of `π²`.
fn below_pi_sq(value: &BigRational, factor: u64) -> bool {
    let bound = BigRational::new(
        BigInt::from(PI_SQ_LOWER.0) * BigInt::from(factor),
        BigInt::from(PI_SQ_LOWER.1),
    );
    *value <= bound
}

/// `Σ_{0<j<m} m^k / (j^k (m-j)^k) <= 2^k π²` for `k ∈ {2, 3}`, summed exactly.
pub fn verify_kernel_sum(m: usize, k: u32) -> Result<SumCheck> {
    if m < 1 || !(2..=3).contains(&k) {
        return Err(WaveError::InvalidInput(format!(
            "need m >= 1 and k in {{2, 3}}, got m = {m}, k = {k}"
        )));
    }
    let mk = BigInt::from(m as u64).pow(k);
    let mut denoms = Vec::with_capacity(m);
    for j in 1..m {
        denoms.push((BigInt::from(j as u64) * BigInt::from((m - j) as u64)).pow(k));
    }
    let lcm = denoms.iter().fold(BigInt::one(), |acc, d| acc.lcm(d));
    let num: BigInt = denoms.iter().map(|d| &lcm / d).sum::<BigInt>() * mk;
    let value = BigRational::new(num, lcm);
    Ok(SumCheck {
        sum: rational_to_f64(&value),
        bound: 2f64.powi(k as i32) * std::f64::consts::PI.powi(2),
        ok: below_pi_sq(&value, 1 << k),
    })
}

/// The four sums over `β <= α`, `0 < |β| < |α|`, with terms depending only
/// on `b = |β|`: `n²/(b³(n-b)²)`, `n²/(b²(n-b)²)`, `n/(b³(n-b))` and
/// `n³/(b⁴(n-b)³)`, bounded by `8π²`, `8π²n`, `8π²` and `8π²`.
pub fn verify_lemma_sums(alpha: (usize, usize)) -> Result<[SumCheck; 4]> {
    let n = alpha.0 + alpha.1;
    if n < 2 {
        return Err(WaveError::InvalidInput(format!("|α| = {n} must be >= 2")));
    }
    // number of β <= α with |β| = b
    let count = |b: usize| -> u64 {
        let lo = b.saturating_sub(alpha.1);
        let hi = b.min(alpha.0);
        if hi >= lo {
            (hi - lo + 1) as u64
        } else {
            0
        }
    };
    // (power of n, power of b, power of n-b, bound factor of 8π²)
    let shapes: [(u32, u32, u32, u64); 4] = [
        (2, 3, 2, 8),
        (2, 2, 2, 8 * n as u64),
        (1, 3, 1, 8),
        (3, 4, 3, 8),
    ];
    let mut out = [SumCheck {
        sum: 0.0,
        bound: 0.0,
        ok: true,
    }; 4];
    for (slot, &(pn, pb, pc, factor)) in out.iter_mut().zip(&shapes) {
        let denoms: Vec<(u64, BigInt)> = (1..n)
            .filter_map(|b| {
                let c = count(b);
                (c > 0).then(|| {
                    (
                        c,
                        BigInt::from(b as u64).pow(pb) * BigInt::from((n - b) as u64).pow(pc),
                    )
                })
            })
            .collect();
        let lcm = denoms.iter().fold(BigInt::one(), |acc, (_, d)| acc.lcm(d));
        let num: BigInt = denoms
            .iter()
            .map(|(c, d)| (&lcm / d) * BigInt::from(*c))
            .sum::<BigInt>()
            * BigInt::from(n as u64).pow(pn);
        let value = BigRational::new(num, lcm);
        *slot = SumCheck {
            sum: rational_to_f64(&value),
            bound: factor as f64 * std::f64::consts::PI.powi(2),
            ok: below_pi_sq(&value, factor),
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRow {
    pub id: String,
    pub range: String,
    pub ok: bool,
    /// Smallest `bound / value` over the checks in the row (`∞` when every value is zero).
    pub worst_margin: f64,
}

/// One row per `α` with `2 <= |α| <= alpha_max` (the four sums, binomial
/// dominance for every `β <= α` and factorial superadditivity for every
/// split of `|α|`), then one row per `(m, k)` kernel sum with `2 <= m <= m_max`.
pub fn lemma_table(alpha_max: usize, m_max: usize) -> Result<Vec<VerdictRow>> {
    let mut rows = Vec::new();
    for n in 2..=alpha_max {
        for a2 in 0..=n {
            let alpha = (n - a2, a2);
            let sums = verify_lemma_sums(alpha)?;
            let mut ok = sums.iter().all(|s| s.ok);
            let mut margin = sums
                .iter()
                .map(SumCheck::margin)
                .fold(f64::INFINITY, f64::min);
            for b1 in 0..=alpha.0 {
                for b2 in 0..=alpha.1 {
                    ok &= verify_binomial_dominance(alpha, (b1, b2))?;
                }
            }
            for b in 0..=n {
                ok &= verify_factorial_superadditivity(b, n - b, 2.0)?;
            }
            if !ok {
                margin = margin.min(0.0);
            }
            rows.push(VerdictRow {
                id: "lemma-sums".into(),
                range: format!("alpha=({},{})", alpha.0, alpha.1),
                ok,
                worst_margin: margin,
            });
        }
    }
    for k in [2u32, 3] {
        for m in 2..=m_max {
            let c = verify_kernel_sum(m, k)?;
            rows.push(VerdictRow {
                id: format!("kernel-sum-k{k}"),
                range: format!("m={m}"),
                ok: c.ok,
                worst_margin: c.margin(),
            });
        }
    }
    Ok(rows)
}

/// Bound `‖∂^α f‖ <= scale · H1^{α₁-e} H2^{α₂} ((|α|-j-1)!)^s` for
/// `|α| >= j+1`, where `j = offset` and `e = h1_offset` (equal to `j`
/// unless a rule shifts the power of `H1`), and `‖∂^α f‖ <= low_order_norm`
/// for `|α| <= j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorantSequence {
    pub h1: f64,
    pub h2: f64,
    pub offset: usize,
    pub h1_offset: usize,
    pub s: f64,
    pub low_order_norm: f64,
    pub scale: f64,
}

impl MajorantSequence {
    pub fn new(h1: f64, h2: f64, offset: usize, s: f64, low_order_norm: f64) -> Result<Self> {
        if !(h1 >= 1.0 && h2 >= h1) {
            return Err(WaveError::InvalidInput(format!(
                "need H2 >= H1 >= 1, got H1 = {h1}, H2 = {h2}"
            )));
        }
        if offset > 3 {
            return Err(WaveError::InvalidInput(format!(
                "offset {offset} must be <= 3"
            )));
        }
        if !(s >= 1.0) || !(low_order_norm >= 0.0) {
            return Err(WaveError::InvalidInput(
                "need s >= 1 and a nonnegative low-order norm".into(),
            ));
        }
        Ok(MajorantSequence {
            h1,
            h2,
            offset,
            h1_offset: offset,
            s,
            low_order_norm,
            scale: 1.0,
        })
    }

    /// The bound for `∂^α`.
    pub fn bound(&self, alpha: (usize, usize)) -> f64 {
        let n = alpha.0 + alpha.1;
        if n <= self.offset {
            return self.low_order_norm;
        }
        self.scale
            * self.h1.powi(alpha.0 as i32 - self.h1_offset as i32)
            * self.h2.powi(alpha.1 as i32)
            * (self.s * ln_factorial(n - self.offset - 1)).exp()
    }

    /// `true` when every `(α₁, α₂, norm)` lies under the bound (relative slack 1e-12).
    pub fn dominates(&self, norms: &[(usize, usize, f64)]) -> bool {
        norms
            .iter()
            .all(|&(a1, a2, v)| v <= self.bound((a1, a2)) * (1.0 + 1e-12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MajorantRule {
    /// `A₂ · A₁ → A₁`; with a third factor in `A₂`, `A₂ · A₁ · A₂ → A₁`.
    A,
    /// `A₂ · A₁ · A₁ → A₀`.
    B,
    /// `A₂ · A₂ · A₀ → A₀`.
    C,
    /// `A₂ · A₂ · A₂`: the product times `H1` lies in `A₁`.
    D,
    /// `A₃ · A₂ → A₂`.
    E,
}

fn falling(x: usize, r: usize) -> f64 {
    if r > x {
        return f64::INFINITY;
    }
    (ln_factorial(x) - ln_factorial(x - r)).exp()
}

fn zeta(k: usize) -> f64 {
    // tail of Σ 1/m^k bounded by the integral from N
    let n = 100_000usize;
    let head: f64 = (1..n).map(|m| (m as f64).powi(-(k as i32))).sum();
    head + (n as f64).powi(1 - k as i32) / (k as f64 - 1.0) + (n as f64).powi(-(k as i32))
}

/// Sum bound selector; `None` when the factorial kernel sum diverges.
fn z(x: usize, y: usize) -> Option<f64> {
    if x >= 2 {
        Some(zeta(x))
    } else if y >= 2 {
        Some(zeta(y))
    } else if x == 1 && y == 1 {
        Some(1.0)
    } else {
        None
    }
}

struct PairKernel {
    hh: f64,
    hl: f64,
    lh: f64,
    ll: f64,
}

fn pair_kernel(ju: usize, jv: usize, jo: usize) -> Result<PairKernel> {
    if jo > ju.min(jv) {
        return Err(WaveError::RuleViolation(format!(
            "A_{ju} · A_{jv} cannot be placed in A_{jo}"
        )));
    }
    let (r, ru, rv) = (jo + 1, ju + 1, jv + 1);
    let cu = (ru as f64).powi(ru as i32) / (ln_factorial(ru)).exp();
    let cv = (rv as f64).powi(rv as i32) / (ln_factorial(rv)).exp();
    let tail = match (z(ru - r, rv), z(ru, rv - r)) {
        (Some(a), Some(b)) => cu * cv * 2f64.powi(r as i32 - 1) * (a + b),
        _ => {
            return Err(WaveError::RuleViolation(format!(
                "A_{ju} · A_{jv} → A_{jo}: factorial kernel sum is unbounded"
            )))
        }
    };
    let k_hh = |n: usize| -> f64 {
        if n < ru + rv {
            return 0.0;
        }
        (ru..=n - rv)
            .map(|b| falling(n, r) / (falling(b, ru) * falling(n - b, rv)))
            .sum()
    };
    let n0 = ru + rv + 200;
    let exact = (r..=n0).map(k_hh).fold(0.0, f64::max);
    let hh = exact.max(tail);
    // u high, v low: n - b <= jv
    let k_mixed = |n: usize, jh: usize, jl: usize| -> f64 {
        (0..=jl.min(n))
            .filter(|&t| n - t > jh)
            .map(|t| {
                let b = n - t;
                (ln_binomial(n, t) + ln_factorial(b - jh - 1) - ln_factorial(n - jo - 1)).exp()
            })
            .sum()
    };
    let hl = (r..=n0).map(|n| k_mixed(n, ju, jv)).fold(0.0, f64::max);
    let lh = (r..=n0).map(|n| k_mixed(n, jv, ju)).fold(0.0, f64::max);
    let ll = (r..=ju + jv)
        .map(|n| {
            (n.saturating_sub(jv)..=ju.min(n))
                .map(|b| (ln_binomial(n, b) - ln_factorial(n - jo - 1)).exp())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(PairKernel { hh, hl, lh, ll })
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Product of two majorants, landing in class `A_jo`.
fn pair(u: &MajorantSequence, v: &MajorantSequence, jo: usize) -> Result<MajorantSequence> {
    if u.h1_offset != u.offset || v.h1_offset != v.offset {
        return Err(WaveError::RuleViolation(
            "shifted H1 powers cannot be multiplied further".into(),
        ));
    }
    let k = pair_kernel(u.offset, v.offset, jo)?;
    let (nu, nv) = (u.low_order_norm, v.low_order_norm);
    let c = u.scale * v.scale * k.hh + u.scale * nv * k.hl + nu * v.scale * k.lh + nu * nv * k.ll;
    Ok(MajorantSequence {
        h1: u.h1,
        h2: u.h2,
        offset: jo,
        h1_offset: jo,
        s: u.s,
        low_order_norm: 2f64.powi(jo as i32) * nu * nv,
        scale: c,
    })
}

fn expect_offset(f: &MajorantSequence, j: usize, name: &str) -> Result<()> {
    if f.offset != j || f.h1_offset != j {
        return Err(WaveError::RuleViolation(format!(
            "{name} must lie in A_{j}, got A_{}",
            f.offset
        )));
    }
    Ok(())
}

/// Applies one of the product rules. The returned sequence carries the
/// computed constant as its `scale`; that constant is a supremum over all
/// orders, not a maximum over a finite range.
pub fn majorant_product(
    u: &MajorantSequence,
    v: &MajorantSequence,
    w: Option<&MajorantSequence>,
    rule: MajorantRule,
) -> Result<(MajorantSequence, f64)> {
    let same =
        |a: &MajorantSequence, b: &MajorantSequence| a.h1 == b.h1 && a.h2 == b.h2 && a.s == b.s;
    if !same(u, v) || w.is_some_and(|w| !same(u, w)) {
        return Err(WaveError::RuleViolation(
            "factors must share H1, H2 and s".into(),
        ));
    }
    let need_w = |name: &str| -> Result<&MajorantSequence> {
        w.ok_or_else(|| WaveError::RuleViolation(format!("rule {name} needs a third factor")))
    };
    let out = match rule {
        MajorantRule::A => {
            expect_offset(u, 2, "u")?;
            expect_offset(v, 1, "v")?;
            let uv = pair(u, v, 1)?;
            match w {
                Some(w) => {
                    expect_offset(w, 2, "w")?;
                    pair(&uv, w, 1)?
                }
                None => uv,
            }
        }
        MajorantRule::B => {
            let w = need_w("b")?;
            expect_offset(u, 2, "u")?;
            expect_offset(v, 1, "v")?;
            expect_offset(w, 1, "w")?;
            pair(&pair(u, v, 1)?, w, 0)?
        }
        MajorantRule::C => {
            let w = need_w("c")?;
            expect_offset(u, 2, "u")?;
            expect_offset(v, 2, "v")?;
            expect_offset(w, 0, "w")?;
            pair(&pair(u, v, 2)?, w, 0)?
        }
        MajorantRule::D => {
            let w = need_w("d")?;
            expect_offset(u, 2, "u")?;
            expect_offset(v, 2, "v")?;
            expect_offset(w, 2, "w")?;
            let chain = pair(&pair(u, v, 2)?, w, 2)?;
            // (|α|-3)! <= (|α|-2)! for |α| >= 3; |α| = 2 is covered by the
            // second-order Leibniz expansion of the triple product
            let low2 = 9.0 * u.low_order_norm * v.low_order_norm * w.low_order_norm;
            MajorantSequence {
                offset: 1,
                h1_offset: 2,
                scale: chain.scale.max(low2),
                low_order_norm: 3.0 * u.low_order_norm * v.low_order_norm * w.low_order_norm,
                ..chain
            }
        }
        MajorantRule::E => {
            expect_offset(u, 3, "u")?;
            expect_offset(v, 2, "v")?;
            pair(u, v, 2)?
        }
    };
    Ok((out, out.scale))
}

/// `A_j ⊂ A_{j-1}`: the same function with constant `max(scale, low_order_norm)`.
pub fn relax_offset(f: &MajorantSequence) -> Result<MajorantSequence> {
    if f.offset == 0 || f.h1_offset != f.offset {
        return Err(WaveError::RuleViolation(
            "cannot relax A_0 or a shifted sequence".into(),
        ));
    }
    Ok(MajorantSequence {
        offset: f.offset - 1,
        h1_offset: f.offset - 1,
        scale: f.scale.max(f.low_order_norm),
        ..*f
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LeibnizMode {
    /// Triple product `u v w` under the hypothesis `‖∂^k u_j‖ <= H^{k-ℓ}(k-ℓ-1)!`.
    Triple,
    /// `(1+u²)^{-3/2}` under the hypothesis on `∂^k(u²)`.
    Composite,
}

#[derive(Debug, Clone, Serialize)]
pub struct LeibnizReport {
    pub mode: LeibnizMode,
    pub hypothesis_holds: bool,
    /// First order where the hypothesis failed.
    pub hypothesis_failure: Option<usize>,
    pub conclusion_holds: bool,
    /// Triple mode: `max_k ‖∂^k(uvw)‖ / ((Σ‖u_j‖_{ℓ+1,μ} + 1)³ H^{k-ℓ} (k-ℓ-1)!)`.
    /// Composite mode: `max_k ‖∂^k (1+u²)^{-3/2}‖ / (C₀² H̃^{k-2} (k-3)!)`.
    pub measured_constant: f64,
    pub worst_k: usize,
    pub c0: Option<f64>,
    pub h_tilde: Option<f64>,
}

fn filtered_derivative(f: &[f64], lambda: f64, k: usize) -> Vec<f64> {
    let cmax = spectral::fourier_coefficients(f)
        .iter()
        .fold(0.0f64, |m, c| m.max(c.norm()));
    spectral::fourier_derivative_filtered(f, lambda, k, FILTER_REL * cmax)
}

fn sup_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn check_samples(fs: &[&[f64]], k_max: usize) -> Result<usize> {
    let n = fs[0].len();
    if fs.iter().any(|f| f.len() != n) {
        return Err(WaveError::InvalidInput("sample lengths differ".into()));
    }
    if k_max > n / 4 {
        return Err(WaveError::Resolution {
            direction: "q",
            requested: k_max,
            limit: n / 4,
        });
    }
    Ok(n)
}

/// Triple-product check with sup norms for `∂^k` and the discrete
/// `‖·‖_{ℓ+1,μ}` (μ = 1/2) for the low-order factor.
pub fn empirical_leibniz_check(
    u: &[f64],
    v: &[f64],
    w: &[f64],
    lambda: f64,
    h: f64,
    ell: usize,
    k_max: usize,
) -> Result<LeibnizReport> {
    if !(ell == 1 || ell == 2) || !(h >= 1.0) {
        return Err(WaveError::InvalidInput(
            "need ℓ in {1, 2} and H >= 1".into(),
        ));
    }
    check_samples(&[u, v, w], k_max)?;
    let mu = 0.5;
    let mut hypothesis_failure = None;
    for k in ell + 1..=k_max {
        let bound = h.powi((k - ell) as i32) * ln_factorial(k - ell - 1).exp();
        for f in [u, v, w] {
            if sup_abs(&filtered_derivative(f, lambda, k)) > bound * (1.0 + 1e-10) {
                hypothesis_failure.get_or_insert(k);
            }
        }
    }
    let low = holder_norm_periodic(u, lambda, ell + 1, mu)?
        + holder_norm_periodic(v, lambda, ell + 1, mu)?
        + holder_norm_periodic(w, lambda, ell + 1, mu)?
        + 1.0;
    let prod: Vec<f64> = (0..u.len()).map(|i| u[i] * v[i] * w[i]).collect();
    let (mut measured, mut worst_k) = (0.0f64, ell + 1);
    for k in ell + 1..=k_max {
        let lhs = sup_abs(&filtered_derivative(&prod, lambda, k));
        let ratio =
            lhs / (low.powi(3) * h.powi((k - ell) as i32) * ln_factorial(k - ell - 1).exp());
        if ratio > measured {
            measured = ratio;
            worst_k = k;
        }
    }
    Ok(LeibnizReport {
        mode: LeibnizMode::Triple,
        hypothesis_holds: hypothesis_failure.is_none(),
        hypothesis_failure,
        conclusion_holds: measured.is_finite(),
        measured_constant: measured,
        worst_k,
        c0: None,
        h_tilde: None,
    })
}

/// Composite check for `(1+u²)^{-3/2}` with `C₀` and `H̃` taken as the
/// smallest values allowed by their defining inequalities, given `c_star`.
/// Norms are the discrete `‖·‖_{0,μ}` and `‖·‖_{2,μ}` with μ = 1/2.
pub fn empirical_composite_check(
    u: &[f64],
    lambda: f64,
    c_star: f64,
    k_max: usize,
) -> Result<LeibnizReport> {
    if !(c_star >= 1.0) {
        return Err(WaveError::InvalidInput("C_* must be >= 1".into()));
    }
    if k_max < 3 {
        return Err(WaveError::InvalidInput("k_max must be >= 3".into()));
    }
    check_samples(&[u], k_max)?;
    let mu = 0.5;
    let u2: Vec<f64> = u.iter().map(|x| x * x).collect();
    let inv1: Vec<f64> = u2.iter().map(|x| 1.0 / (1.0 + x)).collect();
    let inv32: Vec<f64> = u2.iter().map(|x| (1.0 + x).powf(-1.5)).collect();
    let du2 = filtered_derivative(&u2, lambda, 1);
    let c0 = c_star
        * (2.0 * holder_norm_periodic(&inv1, lambda, 2, mu)?
            + 2.0 * holder_norm_periodic(&inv32, lambda, 2, mu)?
            + holder_norm_periodic(&du2, lambda, 2, mu)?
            + 1.0)
            .powi(6);
    let norm0 = |f: &[f64], k: usize| -> Result<f64> {
        let d = filtered_derivative(f, lambda, k);
        holder_norm_periodic(&d, lambda, 0, mu)
    };
    let h_tilde = 2.0 * c0 * c0 + norm0(&inv1, 3)? + norm0(&inv32, 3)?;
    let mut hypothesis_failure = None;
    let (mut measured, mut worst_k) = (0.0f64, 3);
    for k in 3..=k_max {
        let scale = h_tilde.powi(k as i32 - 2) * ln_factorial(k - 3).exp();
        if norm0(&u2, k)? > c0 * scale * (1.0 + 1e-10) {
            hypothesis_failure.get_or_insert(k);
        }
        let ratio = norm0(&inv32, k)? / (c0 * c0 * scale);
        if ratio > measured {
            measured = ratio;
            worst_k = k;
        }
    }
    Ok(LeibnizReport {
        mode: LeibnizMode::Composite,
        hypothesis_holds: hypothesis_failure.is_none(),
        hypothesis_failure,
        conclusion_holds: measured <= 1.0,
        measured_constant: measured,
        worst_k,
        c0: Some(c0),
        h_tilde: Some(h_tilde),
    })
}
