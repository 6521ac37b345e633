//! Differentiation and interpolation on the periodic Fourier grid and on
//! Chebyshev–Lobatto nodes.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Equispaced nodes `q_j = j Λ / N` on `[0, Λ)`.
pub fn fourier_nodes(n: usize, lambda: f64) -> Vec<f64> {
    (0..n).map(|j| lambda * j as f64 / n as f64).collect()
}

/// First-derivative collocation matrix for even `n` on a period of length `lambda`.
pub fn fourier_d1(n: usize, lambda: f64) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let scale = 2.0 * PI / lambda;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as isize - k as isize;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            scale * 0.5 * sign / (d as f64 * h / 2.0).tan()
        }
    })
}

/// Second-derivative collocation matrix for even `n`.
pub fn fourier_d2(n: usize, lambda: f64) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let scale = (2.0 * PI / lambda).powi(2);
    let nf = n as f64;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            scale * (-nf * nf / 12.0 - 1.0 / 6.0)
        } else {
            let d = j as isize - k as isize;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let s = (d as f64 * h / 2.0).sin();
            -scale * 0.5 * sign / (s * s)
        }
    })
}

/// Signed integer wavenumber of FFT bin `k` for length `n`.
pub fn wavenumber(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Normalised complex Fourier coefficients `c_k = (1/N) sum_j f_j e^{-2πi jk/N}`.
pub fn fourier_coefficients(data: &[f64]) -> Vec<Complex64> {
    let n = data.len();
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

fn from_coefficients(mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let n = coeffs.len();
    inverse(n).process(&mut coeffs);
    coeffs.iter().map(|c| c.re).collect()
}

/// Spectral derivative of order `order` of periodic samples via the Fourier
/// multiplier `(i k 2π/Λ)^order`. The Nyquist mode is dropped for odd orders.
pub fn fourier_derivative(data: &[f64], lambda: f64, order: usize) -> Vec<f64> {
    fourier_derivative_filtered(data, lambda, order, 0.0)
}

/// As `fourier_derivative`, but modes with `|c_k| <= floor` (absolute) are
/// zeroed before the multiplier is applied. With `floor > 0` this keeps
/// round-off in the tail of the spectrum from being amplified by `k^order`.
pub fn fourier_derivative_filtered(
    data: &[f64],
    lambda: f64,
    order: usize,
    floor: f64,
) -> Vec<f64> {
    if order == 0 && floor <= 0.0 {
        return data.to_vec();
    }
    let mut c = fourier_coefficients(data);
    if floor > 0.0 {
        c.iter_mut()
            .filter(|ck| ck.norm() <= floor)
            .for_each(|ck| *ck = Complex64::new(0.0, 0.0));
    }
    coefficient_derivative(c, lambda, order)
}

/// Applies `(i k 2π/Λ)^order` to normalised coefficients and transforms back.
/// The Nyquist mode is dropped for odd orders and kept real otherwise.
pub fn coefficient_derivative(mut c: Vec<Complex64>, lambda: f64, order: usize) -> Vec<f64> {
    let n = c.len();
    let omega = 2.0 * PI / lambda;
    if order > 0 {
        for (k, ck) in c.iter_mut().enumerate() {
            if n % 2 == 0 && k == n / 2 && order % 2 == 1 {
                *ck = Complex64::new(0.0, 0.0);
                continue;
            }
            let kw = wavenumber(k, n) as f64 * omega;
            *ck *= Complex64::new(0.0, kw).powu(order as u32);
        }
    }
    if n % 2 == 0 {
        let ny = n / 2;
        c[ny] = Complex64::new(c[ny].re, 0.0);
    }
    from_coefficients(c)
}

/// Evaluates the trigonometric interpolant of periodic samples at `x`.
pub fn trig_interpolate(coeffs: &[Complex64], lambda: f64, x: f64) -> f64 {
    let n = coeffs.len();
    let omega = 2.0 * PI / lambda;
    let mut acc = coeffs[0].re;
    let half = n / 2;
    for k in 1..n.div_ceil(2) {
        let e = Complex64::from_polar(1.0, k as f64 * omega * x);
        acc += 2.0 * (coeffs[k] * e).re;
    }
    if n % 2 == 0 {
        acc += coeffs[half].re * (half as f64 * omega * x).cos();
    }
    acc
}

/// Spectral resampling of periodic samples onto `m` equispaced points.
pub fn fourier_resample(data: &[f64], m: usize) -> Vec<f64> {
    let n = data.len();
    let c = fourier_coefficients(data);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let kmax = (n.min(m)) / 2;
    for k in 0..=kmax {
        let nyquist_src = n % 2 == 0 && k == n / 2;
        let nyquist_dst = m % 2 == 0 && k == m / 2;
        if k == 0 {
            out[0] = c[0];
        } else if nyquist_src || nyquist_dst {
            // split the real Nyquist content evenly between ±k when growing,
            // fold both halves into the real Nyquist bin when shrinking
            if nyquist_src && !nyquist_dst {
                out[k] = c[k] * 0.5;
                out[m - k] = c[k] * 0.5;
            } else if nyquist_dst && !nyquist_src {
                out[k] = Complex64::new((c[k] + c[n - k]).re, 0.0);
            } else {
                out[k] = c[k];
            }
        } else {
            out[k] = c[k];
            out[m - k] = c[n - k];
        }
    }
    from_coefficients(out)
}

/// Chebyshev–Lobatto nodes on `[p0, 0]`, ascending, with exact endpoints.
pub fn chebyshev_nodes(n: usize, p0: f64) -> Vec<f64> {
    assert!(n >= 2, "need at least two Chebyshev nodes");
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == 0 {
                p0
            } else if i == n - 1 {
                0.0
            } else {
                // p0 (1 + cos θ) / 2 without the cancellation near p = 0
                p0 * (0.5 * PI * i as f64 / m).cos().powi(2)
            }
        })
        .collect()
}

/// First and second derivative matrices on `chebyshev_nodes(n, p0)`. Node
/// differences use the product-of-sines form and the diagonals are negative
/// row sums, so constants are differentiated to exactly zero and the second
/// derivative avoids the round-off growth of squaring the first.
pub fn chebyshev_diff_matrices(n: usize, p0: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(n >= 2, "need at least two Chebyshev nodes");
    let m = (n - 1) as f64;
    let w = chebyshev_weights(n);
    let dx = |i: usize, j: usize| {
        let (a, b) = (i as f64, j as f64);
        2.0 * (0.5 * PI * (a + b) / m).sin() * (0.5 * PI * (a - b) / m).sin()
    };
    let mut d1 = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let v = (w[j] / w[i]) / dx(i, j);
            d1[(i, j)] = v;
            diag -= v;
        }
        d1[(i, i)] = diag;
    }
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let v = 2.0 * d1[(i, j)] * (d1[(i, i)] - 1.0 / dx(i, j));
            d2[(i, j)] = v;
            diag -= v;
        }
        d2[(i, i)] = diag;
    }
    // x = 1 - 2p/p0
    let s = -2.0 / p0;
    (d1 * s, d2 * (s * s))
}

/// Barycentric weights of the Chebyshev–Lobatto nodes.
pub fn chebyshev_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect()
}

/// First-derivative matrix of the polynomial interpolant through `nodes`.
pub fn barycentric_d1(nodes: &[f64], weights: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (weights[j] / weights[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Interpolation row: `f(x) ≈ sum_j row[j] f(nodes[j])`.
pub fn barycentric_row(nodes: &[f64], weights: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut row = vec![0.0; n];
    if let Some(j) = nodes.iter().position(|&t| t == x) {
        row[j] = 1.0;
        return row;
    }
    let mut denom = 0.0;
    for j in 0..n {
        let t = weights[j] / (x - nodes[j]);
        row[j] = t;
        denom += t;
    }
    row.iter_mut().for_each(|r| *r /= denom);
    row
}

pub fn barycentric_eval(nodes: &[f64], weights: &[f64], values: &[f64], x: f64) -> f64 {
    barycentric_row(nodes, weights, x)
        .iter()
        .zip(values)
        .map(|(a, b)| a * b)
        .sum()
}

/// Chebyshev coefficients `a_k` of the interpolant through values on the
/// ascending Lobatto nodes of `chebyshev_nodes`.
pub fn chebyshev_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let m = n - 1;
    // node i sits at x = cos(π (m - i) / m)
    (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for (i, v) in values.iter().enumerate() {
                let l = m - i;
                let w = if l == 0 || l == m { 0.5 } else { 1.0 };
                acc += w * v * (PI * ((k * l) % (2 * m)) as f64 / m as f64).cos();
            }
            let scale = if k == 0 || k == m { 1.0 } else { 2.0 };
            scale * acc / m as f64
        })
        .collect()
}

/// Values on the ascending Lobatto nodes of the series `sum a_k T_k`.
pub fn chebyshev_values(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let m = n - 1;
    (0..n)
        .map(|i| {
            let l = m - i;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a * (PI * ((k * l) % (2 * m)) as f64 / m as f64).cos())
                .sum()
        })
        .collect()
}

/// Coefficients of `d/dx` of a Chebyshev series on `[-1, 1]`.
pub fn chebyshev_derivative_coeffs(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut b = vec![0.0; n];
    if n < 2 {
        return b;
    }
    for k in (1..n).rev() {
        let next = if k + 1 < n { b[k + 1] } else { 0.0 };
        b[k - 1] = next + 2.0 * k as f64 * a[k];
    }
    b[0] *= 0.5;
    b
}

/// `order`-th `p`-derivative on the nodes of `chebyshev_nodes(n, p0)`.
/// Coefficients with `|a_k| <= rel_floor * max |a|` are dropped first.
pub fn chebyshev_derivative_filtered(
    values: &[f64],
    p0: f64,
    order: usize,
    rel_floor: f64,
) -> Vec<f64> {
    let mut a = chebyshev_coefficients(values);
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rel_floor > 0.0 {
        a.iter_mut().for_each(|v| {
            if v.abs() <= rel_floor * amax {
                *v = 0.0
            }
        });
    }
    // p = p0 (1 - x) / 2, so d/dp = (-2 / p0) d/dx
    let scale = -2.0 / p0;
    for _ in 0..order {
        a = chebyshev_derivative_coeffs(&a);
        a.iter_mut().for_each(|v| *v *= scale);
    }
    chebyshev_values(&a)
}

#[cfg(test)]
mod tests {

    #[test]
    fn chebyshev_transform_round_trip_and_derivative() {
        let p0 = -0.7;
        let n = 18;
        let p = chebyshev_nodes(n, p0);
        let f: Vec<f64> = p.iter().map(|&x| (2.0 * x).exp()).collect();
        let back = chebyshev_values(&chebyshev_coefficients(&f));
        assert!(max_abs_diff(&f, &back) < 1e-14);
        let d3 = chebyshev_derivative_filtered(&f, p0, 3, 0.0);
        let exact: Vec<f64> = p.iter().map(|&x| 8.0 * (2.0 * x).exp()).collect();
        assert!(max_abs_diff(&d3, &exact) < 1e-8);
    }
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn fourier_matrices_differentiate_band_limited_data() {
        let n = 32;
        let lambda = 3.0;
        let w = 2.0 * PI / lambda;
        let q = fourier_nodes(n, lambda);
        let f: Vec<f64> = q
            .iter()
            .map(|&x| (3.0 * w * x).sin() + (w * x).cos())
            .collect();
        let df: Vec<f64> = q
            .iter()
            .map(|&x| 3.0 * w * (3.0 * w * x).cos() - w * (w * x).sin())
            .collect();
        let d2f: Vec<f64> = q
            .iter()
            .map(|&x| -9.0 * w * w * (3.0 * w * x).sin() - w * w * (w * x).cos())
            .collect();
        let fv = nalgebra::DVector::from_vec(f.clone());
        let d1 = fourier_d1(n, lambda) * &fv;
        let d2 = fourier_d2(n, lambda) * &fv;
        assert!(max_abs_diff(d1.as_slice(), &df) < 1e-12);
        assert!(max_abs_diff(d2.as_slice(), &d2f) < 1e-11);
        assert!(max_abs_diff(&fourier_derivative(&f, lambda, 1), &df) < 1e-12);
        assert!(max_abs_diff(&fourier_derivative(&f, lambda, 2), &d2f) < 1e-11);
    }

    #[test]
    fn d2_matrix_equals_fft_second_derivative_including_nyquist() {
        let n = 16;
        let data: Vec<f64> = (0..n).map(|j| ((j * 7 + 3) % 11) as f64 - 5.0).collect();
        let via_matrix = fourier_d2(n, 2.0 * PI) * nalgebra::DVector::from_vec(data.clone());
        let via_fft = fourier_derivative(&data, 2.0 * PI, 2);
        assert!(max_abs_diff(via_matrix.as_slice(), &via_fft) < 1e-11);
        let via_matrix = fourier_d1(n, 2.0 * PI) * nalgebra::DVector::from_vec(data.clone());
        let via_fft = fourier_derivative(&data, 2.0 * PI, 1);
        assert!(max_abs_diff(via_matrix.as_slice(), &via_fft) < 1e-11);
    }

    #[test]
    fn trig_interpolation_and_resampling() {
        let n = 16;
        let lambda = 2.0 * PI;
        let f = |x: f64| 1.0 + (2.0 * x).cos() - 0.5 * (5.0 * x).sin();
        let data: Vec<f64> = fourier_nodes(n, lambda).iter().map(|&x| f(x)).collect();
        let c = fourier_coefficients(&data);
        for x in [0.1, 1.7, 4.4] {
            assert!((trig_interpolate(&c, lambda, x) - f(x)).abs() < 1e-13);
        }
        let fine = fourier_resample(&data, 64);
        let expect: Vec<f64> = fourier_nodes(64, lambda).iter().map(|&x| f(x)).collect();
        assert!(max_abs_diff(&fine, &expect) < 1e-13);
        let back = fourier_resample(&fine, n);
        assert!(max_abs_diff(&back, &data) < 1e-13);
    }

    #[test]
    fn chebyshev_nodes_and_differentiation() {
        let p0 = -0.7;
        let nodes = chebyshev_nodes(20, p0);
        assert_eq!(nodes[0], p0);
        assert_eq!(nodes[19], 0.0);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        let w = chebyshev_weights(20);
        let d = barycentric_d1(&nodes, &w);
        let f: Vec<f64> = nodes.iter().map(|&p| (2.0 * p).exp()).collect();
        let df = &d * nalgebra::DVector::from_vec(f.clone());
        for (i, &p) in nodes.iter().enumerate() {
            assert!((df[i] - 2.0 * (2.0 * p).exp()).abs() < 1e-11);
        }
        let x = -0.3337;
        assert!((barycentric_eval(&nodes, &w, &f, x) - (2.0 * x).exp()).abs() < 1e-13);
    }
}
