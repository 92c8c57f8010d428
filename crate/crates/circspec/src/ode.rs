//! Adaptive embedded Runge-Kutta 5(4) for complex matrix ODEs.
//!
//! Integrates `X'(t) = rhs(t, X)` with the Dormand-Prince tableau,
//! columns advanced jointly as one matrix state. Used for fundamental
//! solutions `X' = A(t) X` and for the adjoint sweep `W' = -W A(t)`
//! that evaluates `U(t, xi)` at many quadrature nodes in one pass.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Tolerances for the embedded integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: 0.1,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
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

/// Integrate `X' = rhs(t, X)` from `t0` to `t1` (either direction).
///
/// Returns the final state and an accumulated local-error estimate.
pub fn integrate_matrix_ode<F>(
    rhs: F,
    t0: f64,
    t1: f64,
    x0: CMatrix,
    settings: &IntegrationSettings,
) -> Result<(CMatrix, f64)>
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok((x0, 0.0));
    }
    let dir = span.signum();
    let span_abs = span.abs();
    let mut t = t0;
    let mut x = x0;
    let mut h = dir * settings.max_step.min(span_abs);
    let mut err_acc = 0.0_f64;
    let mut k: Vec<CMatrix> = Vec::with_capacity(7);
    let h_min = 1e-14 * span_abs.max(1.0);
    let mut steps = 0usize;
    loop {
        if (t - t1) * dir >= 0.0 {
            break;
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        k.clear();
        k.push(rhs(t, &x));
        for i in 0..6 {
            let mut stage = x.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[i][j];
                if a != 0.0 {
                    stage += kj * Complex64::new(a * h, 0.0);
                }
            }
            k.push(rhs(t + C[i + 1] * h, &stage));
        }
        let mut x_new = x.clone();
        let mut err_mat = CMatrix::zeros(x.nrows(), x.ncols());
        for (i, ki) in k.iter().enumerate() {
            if B5[i] != 0.0 {
                x_new += ki * Complex64::new(B5[i] * h, 0.0);
            }
            let db = B5[i] - B4[i];
            if db != 0.0 {
                err_mat += ki * Complex64::new(db * h, 0.0);
            }
        }
        let err_abs = err_mat.norm();
        let scale = settings.atol + settings.rtol * x.norm().max(x_new.norm());
        let err_ratio = err_abs / scale;
        if err_ratio <= 1.0 {
            t += h;
            x = x_new;
            err_acc += err_abs;
            steps += 1;
            if steps > 2_000_000 {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
        }
        let factor = if err_ratio > 0.0 {
            (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() > settings.max_step {
            h = dir * settings.max_step;
        }
        if h.abs() < h_min {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step size underflow ({} < {h_min})", h.abs()),
            });
        }
    }
    Ok((x, err_acc))
}

/// Integrate through a monotone sequence of checkpoints, returning the
/// state at each. Checkpoints must progress in the direction from `t0`.
pub fn integrate_with_checkpoints<F>(
    rhs: F,
    t0: f64,
    checkpoints: &[f64],
    x0: CMatrix,
    settings: &IntegrationSettings,
) -> Result<(Vec<CMatrix>, f64)>
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut t = t0;
    let mut x = x0;
    let mut err = 0.0;
    for &tc in checkpoints {
        let (xc, e) = integrate_matrix_ode(&rhs, t, tc, x, settings)?;
        err += e;
        out.push(xc.clone());
        x = xc;
        t = tc;
    }
    Ok((out, err))
}
