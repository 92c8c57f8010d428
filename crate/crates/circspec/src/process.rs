//! 1-periodic evolutionary processes from finite-dimensional periodic
//! systems.
//!
//! `propagate` produces `U(t, s)` for `t >= s` by integrating the
//! matrix ODE `X' = A(tau) X`, after reducing via 1-periodicity
//! (`U(t+1, s+1) = U(t, s)`) and splitting whole periods off as powers
//! of the monodromy operator. Constant and diagonal-heat systems carry
//! closed forms; `propagate_integrated` forces the Runge-Kutta route on
//! every kind so the closed forms stay independently checkable.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::funcspace::{wrap_angle, TrigPolynomial, UnitCircleSet};
use crate::ode::{integrate_matrix_ode, CMatrix, IntegrationSettings};

/// Eigenvalues with `||mu| - 1|` below this count as unit-circle points.
pub const CIRCLE_TOL: f64 = 1e-6;

/// Spectral gaps below this flag resonance.
pub const RESONANCE_TOL: f64 = 1e-4;

/// Coefficient family `A(t)` of the linear equation.
#[derive(Clone, Debug)]
pub enum SystemKind {
    /// Dense `A(t)` with entries given as scalar trig polynomials whose
    /// frequencies are integer multiples of `2 pi` (period 1), row-major.
    General { entries: Vec<TrigPolynomial> },
    /// Autonomous `A(t) = A`.
    Constant { matrix: CMatrix },
    /// Dirichlet-Laplacian Galerkin truncation on sine modes:
    /// `A(t) = diag(-1, -4, ..., -n^2) + a(t) I`. The coefficient `b`
    /// rides along for the quadratic perturbation.
    Heat {
        n_modes: usize,
        a: TrigPolynomial,
        b: TrigPolynomial,
    },
}

/// A 1-periodic linear system together with integration tolerances.
#[derive(Clone, Debug)]
pub struct PeriodicSystem {
    dim: usize,
    kind: SystemKind,
    integ: IntegrationSettings,
}

impl PeriodicSystem {
    pub fn general(
        dim: usize,
        entries: Vec<TrigPolynomial>,
        integ: IntegrationSettings,
    ) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} system, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for e in &entries {
            if e.dim() != 1 {
                return Err(Error::InvalidInput(
                    "system entries must be scalar trig polynomials".into(),
                ));
            }
            if !e.is_one_periodic() {
                return Err(Error::InvalidInput(
                    "entry frequencies must be integer multiples of 2*pi (period 1)".into(),
                ));
            }
        }
        Ok(Self {
            dim,
            kind: SystemKind::General { entries },
            integ,
        })
    }

    pub fn constant(matrix: CMatrix, integ: IntegrationSettings) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput("constant matrix must be square".into()));
        }
        Ok(Self {
            dim: matrix.nrows(),
            kind: SystemKind::Constant { matrix },
            integ,
        })
    }

    pub fn heat(
        n_modes: usize,
        a: TrigPolynomial,
        b: TrigPolynomial,
        integ: IntegrationSettings,
    ) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidInput("heat system needs n_modes >= 1".into()));
        }
        if a.dim() != 1 || b.dim() != 1 {
            return Err(Error::InvalidInput(
                "heat coefficients a(t), b(t) must be scalar".into(),
            ));
        }
        if !a.is_one_periodic() || !b.is_one_periodic() {
            return Err(Error::InvalidInput(
                "heat coefficients must have period 1".into(),
            ));
        }
        Ok(Self {
            dim: n_modes,
            kind: SystemKind::Heat { n_modes, a, b },
            integ,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn integ(&self) -> &IntegrationSettings {
        &self.integ
    }

    /// Evaluate the coefficient matrix `A(t)`.
    pub fn coefficient_at(&self, t: f64) -> CMatrix {
        match &self.kind {
            SystemKind::Constant { matrix } => matrix.clone(),
            SystemKind::General { entries } => {
                let d = self.dim;
                CMatrix::from_fn(d, d, |i, j| entries[i * d + j].eval(t)[0])
            }
            SystemKind::Heat { n_modes, a, .. } => {
                let av = a.eval(t)[0];
                CMatrix::from_fn(*n_modes, *n_modes, |i, j| {
                    if i == j {
                        let n = (i + 1) as f64;
                        Complex64::new(-n * n, 0.0) + av
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
        }
    }
}

/// `U(t, s)` with accuracy metadata.
#[derive(Clone, Debug)]
pub struct EvolutionOperator {
    pub s: f64,
    pub t: f64,
    pub matrix: CMatrix,
    pub err_est: f64,
}

/// Exact `int_s^t` of a scalar trig polynomial.
pub(crate) fn trig_integral(a: &TrigPolynomial, s: f64, t: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for m in a.modes() {
        let c = m.coeff[0];
        if m.omega == 0.0 {
            acc += c * (t - s);
        } else {
            let iw = Complex64::new(0.0, m.omega);
            acc += c * ((iw * t).exp() - (iw * s).exp()) / iw;
        }
    }
    acc
}

fn heat_closed_form(n_modes: usize, a: &TrigPolynomial, s: f64, t: f64) -> CMatrix {
    let factor = trig_integral(a, s, t).exp();
    CMatrix::from_fn(n_modes, n_modes, |i, j| {
        if i == j {
            let n = (i + 1) as f64;
            factor * (-n * n * (t - s)).exp()
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn matrix_power(q: &CMatrix, mut n: u64) -> CMatrix {
    let mut result = CMatrix::identity(q.nrows(), q.ncols());
    let mut base = q.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    result
}

/// Integrate `X' = A(tau) X` over `[s, t]` after periodicity reduction.
fn propagate_rk(sys: &PeriodicSystem, s: f64, t: f64) -> Result<EvolutionOperator> {
    let rhs = |tau: f64, x: &CMatrix| sys.coefficient_at(tau) * x;
    let dim = sys.dim();
    // shift so the start lies in [0, 1); U is 1-periodic
    let k0 = s.floor();
    let s1 = s - k0;
    let t1 = t - k0;
    let whole = (t1 - s1).floor() as u64;
    let mut err = 0.0;
    let matrix = if whole == 0 {
        let (m, e) = integrate_matrix_ode(rhs, s1, t1, CMatrix::identity(dim, dim), &sys.integ)?;
        err += e;
        m
    } else {
        let (q, eq) =
            integrate_matrix_ode(rhs, s1, s1 + 1.0, CMatrix::identity(dim, dim), &sys.integ)?;
        err += eq * whole as f64;
        let whole_part = matrix_power(&q, whole);
        let head_start = s1 + whole as f64;
        let (head, eh) =
            integrate_matrix_ode(rhs, head_start, t1, CMatrix::identity(dim, dim), &sys.integ)?;
        err += eh;
        head * whole_part
    };
    Ok(EvolutionOperator {
        s,
        t,
        matrix,
        err_est: err,
    })
}

/// `U(t, s)` for `t >= s`, using the kind's closed form when one exists.
pub fn propagate(sys: &PeriodicSystem, s: f64, t: f64) -> Result<EvolutionOperator> {
    if t < s {
        return Err(Error::TimeReversed { s, t });
    }
    if t == s {
        return Ok(EvolutionOperator {
            s,
            t,
            matrix: CMatrix::identity(sys.dim(), sys.dim()),
            err_est: 0.0,
        });
    }
    match &sys.kind {
        SystemKind::Constant { matrix } => {
            let m = (matrix * Complex64::new(t - s, 0.0)).exp();
            Ok(EvolutionOperator {
                s,
                t,
                matrix: m,
                err_est: 1e-14 * (t - s).max(1.0),
            })
        }
        SystemKind::Heat { n_modes, a, .. } => Ok(EvolutionOperator {
            s,
            t,
            matrix: heat_closed_form(*n_modes, a, s, t),
            err_est: 1e-15,
        }),
        SystemKind::General { .. } => propagate_rk(sys, s, t),
    }
}

/// `U(t, s)` by numerical integration regardless of kind; the
/// cross-check route for the closed forms.
pub fn propagate_integrated(sys: &PeriodicSystem, s: f64, t: f64) -> Result<EvolutionOperator> {
    if t < s {
        return Err(Error::TimeReversed { s, t });
    }
    if t == s {
        return Ok(EvolutionOperator {
            s,
            t,
            matrix: CMatrix::identity(sys.dim(), sys.dim()),
            err_est: 0.0,
        });
    }
    propagate_rk(sys, s, t)
}

/// Monodromy operator `P(t) = U(t, t-1)` with its eigenvalue data.
#[derive(Clone, Debug)]
pub struct Monodromy {
    pub anchor_t: f64,
    pub matrix: CMatrix,
    pub eigenvalues: Vec<Complex64>,
    /// Angles of eigenvalues within `CIRCLE_TOL` of the unit circle.
    pub unit_circle_part: UnitCircleSet,
    pub err_est: f64,
}

impl Monodromy {
    /// Eigen-decompose a given period map.
    pub fn from_matrix(anchor_t: f64, matrix: CMatrix, err_est: f64) -> Result<Self> {
        let eigenvalues: Vec<Complex64> = matrix
            .clone()
            .schur()
            .eigenvalues()
            .ok_or_else(|| {
                Error::InvalidInput("eigenvalue computation did not converge".into())
            })?
            .iter()
            .copied()
            .collect();
        let on_circle: Vec<(f64, f64)> = eigenvalues
            .iter()
            .filter(|mu| (mu.norm() - 1.0).abs() < CIRCLE_TOL)
            .map(|mu| (wrap_angle(mu.arg()), 1.0))
            .collect();
        let unit_circle_part = UnitCircleSet::from_scored_angles(&on_circle, 1e-9)?;
        Ok(Self {
            anchor_t,
            matrix,
            eigenvalues,
            unit_circle_part,
            err_est,
        })
    }
}

/// `P(anchor_t) = U(anchor_t, anchor_t - 1)`.
pub fn monodromy(sys: &PeriodicSystem, anchor_t: f64) -> Result<Monodromy> {
    let ev = propagate(sys, anchor_t - 1.0, anchor_t)?;
    Monodromy::from_matrix(anchor_t, ev.matrix, ev.err_est)
}

/// Minimum distance between the eigenvalues of `P` and the unit-circle
/// points `e^{i theta}` for `theta` in `freqs`. Infinite when either
/// side is empty.
pub fn spectral_gap(p: &Monodromy, freqs: &UnitCircleSet) -> f64 {
    let mut gap = f64::INFINITY;
    for mu in &p.eigenvalues {
        for &theta in freqs.angles() {
            let d = (mu - Complex64::from_polar(1.0, theta)).norm();
            gap = gap.min(d);
        }
    }
    gap
}
