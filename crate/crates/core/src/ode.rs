//! Adaptive Dormand–Prince 5(4) integrator for the laminar and mode ODEs.

use crate::error::{Result, WaveError};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Error control settings.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-13,
            atol: 1e-14,
            max_steps: 200_000,
        }
    }
}

/// Integrates `y' = f(t, y)` from `t0` and reports the state at every
/// requested time in `outputs` (ascending, all `>= t0`). The right-hand side
/// returns `false` to signal that the state left its admissible region.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    tol: Tolerance,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut out = Vec::with_capacity(outputs.len());
    let span = outputs.last().map_or(0.0, |&e| (e - t0).abs()).max(1e-300);
    let mut h = 1e-3 * span;
    let mut steps = 0usize;
    if !f(t, &y, &mut k[0]) {
        return Err(WaveError::BlowUp(format!("inadmissible state at t = {t}")));
    }
    for &target in outputs {
        if target < t {
            return Err(WaveError::InvalidInput(
                "output times must be ascending".into(),
            ));
        }
        while t < target {
            steps += 1;
            if steps > tol.max_steps {
                return Err(WaveError::BlowUp(format!(
                    "step budget exhausted at t = {t}"
                )));
            }
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            let mut ok = true;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for r in 0..s {
                        acc += hs * A[s][r] * k[r][i];
                    }
                    tmp[i] = acc;
                }
                if !f(t + C[s] * hs, &tmp, &mut k[s]) {
                    ok = false;
                    break;
                }
            }
            let mut err = 0.0f64;
            if ok {
                for i in 0..n {
                    let mut y5 = y[i];
                    let mut e = 0.0;
                    for s in 0..7 {
                        y5 += hs * B5[s] * k[s][i];
                        e += hs * (B5[s] - B4[s]) * k[s][i];
                    }
                    tmp[i] = y5;
                    let sc = tol.atol + tol.rtol * y[i].abs().max(y5.abs());
                    err = err.max((e / sc).abs());
                }
                if !err.is_finite() {
                    ok = false;
                }
            }
            if !ok {
                h = hs * 0.25;
                if h < 1e-14 * span {
                    return Err(WaveError::BlowUp(format!("step size underflow at t = {t}")));
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                y.copy_from_slice(&tmp);
                // first-same-as-last: stage 7 is the derivative at the new point
                let (first, rest) = k.split_at_mut(6);
                first[0].copy_from_slice(&rest[0]);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = hs * factor;
            if h < 1e-14 * span {
                return Err(WaveError::BlowUp(format!("step size underflow at t = {t}")));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let ts: Vec<f64> = (1..=10).map(|i| i as f64 * 0.7).collect();
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                true
            },
            0.0,
            &[0.0, 1.0],
            &ts,
            Tolerance::default(),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&sol) {
            assert!((y[0] - t.sin()).abs() < 1e-11);
            assert!((y[1] - t.cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn finite_time_blow_up_is_reported() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let r = integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                y[0].abs() < 1e12
            },
            0.0,
            &[1.0],
            &[2.0],
            Tolerance::default(),
        );
        assert!(matches!(r, Err(WaveError::BlowUp(_))));
    }
}
