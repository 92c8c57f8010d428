//! Bounded mild solutions of the linear equation.
//!
//! The mild-solution identity `u(t) = U(t, s) u(s) + int_s^t U(t, xi) f(xi) d xi`
//! is equivalent to `u` being a common fixed point of the affine
//! semigroup `(T^h_f)`. Restricting the unit-time fixed-point equation
//! `u = P(.) S(-1) u + G f` to a single forcing mode `a e^{i omega t}`
//! and writing `u_omega(t) = e^{i omega t} p(t)` with a 1-periodic
//! envelope `p` turns it into a pointwise linear solve
//!
//! ```text
//! (I - e^{-i omega} P(t)) p(t) = e^{-i omega t} (G a e^{i omega .})(t),
//! ```
//!
//! well-posed whenever `e^{i omega}` keeps a positive distance from the
//! eigenvalues of the monodromy operator. The solver samples each
//! envelope on a uniform grid over one period, interpolates
//! trigonometrically, and certifies the assembled solution against the
//! mild identity at seeded random time pairs.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::funcspace::{sup_norm, FuncRef, GridFunction, Signal, TrigPolynomial, UnitCircleSet};
use crate::ode::{integrate_with_checkpoints, CMatrix};
use crate::par::map_indexed;
use crate::process::{
    monodromy, propagate, spectral_gap, Monodromy, PeriodicSystem, SystemKind, RESONANCE_TOL,
};
use crate::quad::{gauss_legendre_on, simpson_weights};
use crate::spectrum::{circular_spectrum, ResolventSettings};

/// Window and step used for finite-window norm estimates in reports.
const NORM_WINDOW: (f64, f64) = (0.0, 32.0);
const NORM_STEP: f64 = 1.0 / 64.0;

/// Numerical policy for the linear solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverSettings {
    /// Envelope samples per period.
    pub m_env: usize,
    /// Certification threshold for the mild-identity residual.
    pub resid_tol: f64,
    /// Per-mode condition-number cap; beyond it the solve counts as
    /// resonant.
    pub cond_cap: f64,
    /// Quadrature refinement tolerance.
    pub quad_tol: f64,
    /// Gauss-Legendre nodes per unit length before refinement.
    pub base_nodes: usize,
    /// Random time pairs used by certification.
    pub cert_pairs: usize,
    /// Seed for the certification pairs.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            m_env: 64,
            resid_tol: 1e-6,
            cond_cap: 1e8,
            quad_tol: 1e-10,
            base_nodes: 32,
            cert_pairs: 20,
            seed: 0,
        }
    }
}

/// One 1-periodic envelope: uniform samples on `[0, 1)` plus their
/// trigonometric interpolation coefficients.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub omega: f64,
    pub samples: Vec<DVector<Complex64>>,
    /// Fourier coefficients for harmonics `m - M/2`, `m = 0..M`.
    fourier: Vec<DVector<Complex64>>,
}

impl Envelope {
    pub fn from_samples(omega: f64, samples: Vec<DVector<Complex64>>) -> Result<Self> {
        let m_env = samples.len();
        if m_env < 2 {
            return Err(Error::InvalidInput(
                "envelope needs at least 2 samples".into(),
            ));
        }
        let dim = samples[0].len();
        let mut fourier = Vec::with_capacity(m_env);
        let half = (m_env / 2) as i64;
        for m_idx in 0..m_env {
            let m = m_idx as i64 - half;
            let mut coeff = DVector::from_element(dim, Complex64::new(0.0, 0.0));
            for (j, s) in samples.iter().enumerate() {
                let phase = Complex64::from_polar(
                    1.0,
                    -crate::funcspace::TAU * m as f64 * j as f64 / m_env as f64,
                );
                coeff.zip_apply(s, |out, v| *out += phase * v);
            }
            fourier.push(coeff / Complex64::new(m_env as f64, 0.0));
        }
        Ok(Self {
            omega,
            samples,
            fourier,
        })
    }

    /// Trigonometric interpolation; 1-periodic by construction.
    pub fn value_at(&self, t: f64) -> DVector<Complex64> {
        let m_env = self.fourier.len();
        let half = (m_env / 2) as i64;
        let dim = self.fourier[0].len();
        let mut v = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for (m_idx, c) in self.fourier.iter().enumerate() {
            let m = m_idx as i64 - half;
            let phase = Complex64::from_polar(1.0, crate::funcspace::TAU * m as f64 * t);
            v.zip_apply(c, |out, cj| *out += phase * cj);
        }
        v
    }

    /// Fourier coefficient of harmonic `m` (zero outside the stored
    /// band).
    pub fn harmonic(&self, m: i64) -> Option<&DVector<Complex64>> {
        let m_env = self.fourier.len() as i64;
        let half = m_env / 2;
        let idx = m + half;
        if idx < 0 || idx >= m_env {
            None
        } else {
            Some(&self.fourier[idx as usize])
        }
    }
}

/// Certification summary attached to a solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Sup of the mild-identity gap over the certification pairs.
    pub residual: f64,
    /// Minimum eigenvalue distance to the forcing angles.
    pub gap: f64,
    /// Worst condition number of `(I - e^{-i omega} P(t_j))` per mode.
    pub mode_conds: Vec<f64>,
    /// Picard iterations; 0 for a direct solve.
    pub iterations: usize,
    /// Finite-window estimate of `||u||`.
    pub u_norm: f64,
    /// Finite-window estimate of `||f||`.
    pub f_norm: f64,
    /// Gap fell in `(resonance_tol, 10 resonance_tol)`.
    pub near_resonance: bool,
    pub seed: u64,
}

impl SolveReport {
    pub fn empty(seed: u64) -> Self {
        Self {
            residual: 0.0,
            gap: f64::INFINITY,
            mode_conds: Vec::new(),
            iterations: 0,
            u_norm: 0.0,
            f_norm: 0.0,
            near_resonance: false,
            seed,
        }
    }
}

/// `u(t) = sum_k e^{i omega_k t} p_k(t)` with 1-periodic envelopes.
#[derive(Clone, Debug)]
pub struct MildSolution {
    freqs: Vec<f64>,
    envelopes: Vec<Envelope>,
    dim: usize,
    report: SolveReport,
}

impl MildSolution {
    pub fn from_envelopes(
        envelopes: Vec<Envelope>,
        dim: usize,
        report: SolveReport,
    ) -> Result<Self> {
        for e in &envelopes {
            if e.samples[0].len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.samples[0].len(),
                });
            }
        }
        Ok(Self {
            freqs: envelopes.iter().map(|e| e.omega).collect(),
            envelopes,
            dim,
            report,
        })
    }

    pub fn zero(dim: usize, report: SolveReport) -> Self {
        Self {
            freqs: Vec::new(),
            envelopes: Vec::new(),
            dim,
            report,
        }
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn envelopes(&self) -> &[Envelope] {
        &self.envelopes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn report(&self) -> &SolveReport {
        &self.report
    }

    pub fn set_report(&mut self, report: SolveReport) {
        self.report = report;
    }

    pub fn eval(&self, t: f64) -> DVector<Complex64> {
        let mut v = DVector::from_element(self.dim, Complex64::new(0.0, 0.0));
        for e in &self.envelopes {
            let phase = Complex64::from_polar(1.0, e.omega * t);
            let p = e.value_at(t);
            v.zip_apply(&p, |out, pj| *out += phase * pj);
        }
        v
    }

    /// Expand into an exact trig polynomial, keeping envelope harmonics
    /// `|m| <= m_cap`; returns the polynomial and the sup-norm bound of
    /// the dropped harmonics.
    pub fn to_trig_polynomial(&self, m_cap: i64) -> Result<(TrigPolynomial, f64)> {
        let mut modes = Vec::new();
        let mut dropped = 0.0;
        for e in &self.envelopes {
            let m_env = e.fourier.len() as i64;
            let half = m_env / 2;
            for m_idx in 0..m_env {
                let m = m_idx - half;
                let c = &e.fourier[m_idx as usize];
                if m.abs() <= m_cap {
                    modes.push(crate::funcspace::Mode {
                        omega: e.omega + crate::funcspace::TAU * m as f64,
                        coeff: c.clone(),
                    });
                } else {
                    dropped += c.norm();
                }
            }
        }
        Ok((TrigPolynomial::new(self.dim, modes)?, dropped))
    }
}

impl Signal for MildSolution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64) -> Result<DVector<Complex64>> {
        Ok(MildSolution::eval(self, t))
    }
}

/// `U(t_hi, node)` for every node in `nodes_asc` (ascending, all
/// `<= t_hi`), plus the accumulated integration error.
///
/// Closed-form kinds evaluate directly; the general kind integrates the
/// adjoint equation `W'(xi) = -W(xi) A(xi)` once from `t_hi` downward,
/// visiting all nodes in a single sweep.
pub(crate) fn evolution_to_endpoint(
    sys: &PeriodicSystem,
    t_hi: f64,
    nodes_asc: &[f64],
) -> Result<(Vec<CMatrix>, f64)> {
    match sys.kind() {
        SystemKind::Constant { .. } | SystemKind::Heat { .. } => {
            let mut out = Vec::with_capacity(nodes_asc.len());
            let mut err = 0.0;
            for &xi in nodes_asc {
                let ev = propagate(sys, xi, t_hi)?;
                err += ev.err_est;
                out.push(ev.matrix);
            }
            Ok((out, err))
        }
        SystemKind::General { .. } => {
            let dim = sys.dim();
            let desc: Vec<f64> = nodes_asc.iter().rev().copied().collect();
            let rhs = |xi: f64, w: &CMatrix| -(w * sys.coefficient_at(xi));
            let (states, err) = integrate_with_checkpoints(
                rhs,
                t_hi,
                &desc,
                CMatrix::identity(dim, dim),
                sys.integ(),
            )?;
            Ok((states.into_iter().rev().collect(), err))
        }
    }
}

/// `(G g)(t) = int_{t-h}^{t} U(t, xi) g(xi) d xi` for smooth signals,
/// by Gauss-Legendre quadrature with doubling refinement.
fn apply_g_smooth(
    sys: &PeriodicSystem,
    g: &dyn Signal,
    h: f64,
    t: f64,
    settings: &SolverSettings,
) -> Result<DVector<Complex64>> {
    let mut n = ((settings.base_nodes as f64 * h).ceil() as usize).max(8);
    let mut prev: Option<DVector<Complex64>> = None;
    for _ in 0..5 {
        let (nodes, weights) = gauss_legendre_on(t - h, t, n);
        let (states, _) = evolution_to_endpoint(sys, t, &nodes)?;
        let mut acc = DVector::from_element(sys.dim(), Complex64::new(0.0, 0.0));
        for ((xi, w), u_mat) in nodes.iter().zip(&weights).zip(&states) {
            let val = u_mat * g.eval(*xi)?;
            acc += val * Complex64::new(*w, 0.0);
        }
        if let Some(p) = &prev {
            if (&acc - p).norm() < settings.quad_tol * (1.0 + acc.norm()) {
                return Ok(acc);
            }
        }
        prev = Some(acc);
        n *= 2;
    }
    Ok(prev.expect("at least one quadrature round"))
}

/// Same integral along the sample grid of `g` (composite Simpson); the
/// endpoints `t - h` and `t` must land on the grid.
fn apply_g_grid(
    sys: &PeriodicSystem,
    g: &GridFunction,
    h: f64,
    t: f64,
) -> Result<DVector<Complex64>> {
    let j_hi = g.index_of(t)?;
    let j_lo = g.index_of(t - h)?;
    if j_hi - j_lo < 2 {
        return Err(Error::WindowTooShort(
            "grid quadrature needs at least 2 sample intervals".into(),
        ));
    }
    let count = j_hi - j_lo;
    let even = count - count % 2;
    let nodes: Vec<f64> = (j_lo..=j_hi).map(|j| g.time_at(j)).collect();
    let (states, _) = evolution_to_endpoint(sys, t, &nodes)?;
    let w = simpson_weights(even, g.dt());
    let mut acc = DVector::from_element(sys.dim(), Complex64::new(0.0, 0.0));
    for (idx, &wj) in w.iter().enumerate() {
        let val = &states[idx] * &g.samples()[j_lo + idx];
        acc += val * Complex64::new(wj, 0.0);
    }
    if even < count {
        for idx in [count - 1, count] {
            let val = &states[idx] * &g.samples()[j_lo + idx];
            acc += val * Complex64::new(0.5 * g.dt(), 0.0);
        }
    }
    Ok(acc)
}

/// The integral operator `G` over history length `h`.
pub fn apply_g(
    sys: &PeriodicSystem,
    g: FuncRef<'_>,
    h: f64,
    t: f64,
    settings: &SolverSettings,
) -> Result<DVector<Complex64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(
            "history length h must be positive".into(),
        ));
    }
    if g.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: g.dim(),
        });
    }
    match g {
        FuncRef::Trig(f) => apply_g_smooth(sys, f, h, t, settings),
        FuncRef::Grid(gr) => apply_g_grid(sys, gr, h, t),
    }
}

/// One affine-semigroup step:
/// `(T^h_f g)(t) = U(t, t-h) g(t-h) + int_{t-h}^t U(t, xi) f(xi) d xi`.
pub fn apply_tfh(
    sys: &PeriodicSystem,
    f: FuncRef<'_>,
    g: &dyn Signal,
    h: f64,
    t: f64,
    settings: &SolverSettings,
) -> Result<DVector<Complex64>> {
    if h < 0.0 {
        return Err(Error::InvalidInput(
            "semigroup parameter h must be >= 0".into(),
        ));
    }
    if h == 0.0 {
        return g.eval(t);
    }
    let ev = propagate(sys, t - h, t)?;
    let carried = &ev.matrix * g.eval(t - h)?;
    let forced = match f {
        FuncRef::Trig(fp) => apply_g_smooth(sys, fp, h, t, settings)?,
        FuncRef::Grid(gr) => apply_g_grid(sys, gr, h, t)?,
    };
    Ok(carried + forced)
}

/// Per-envelope-point data: the monodromy matrix `P(t_j)` and the mode
/// integrals `b_k(t_j) = (G a_k e^{i omega_k .})(t_j)`.
struct PointData {
    p: CMatrix,
    b: Vec<DVector<Complex64>>,
}

fn envelope_point_data(
    sys: &PeriodicSystem,
    t_j: f64,
    modes: &[(f64, DVector<Complex64>)],
    settings: &SolverSettings,
) -> Result<PointData> {
    let mut n = settings.base_nodes.max(8);
    let mut prev_b: Option<Vec<DVector<Complex64>>> = None;
    let mut p_mat = CMatrix::identity(sys.dim(), sys.dim());
    for round in 0..5 {
        let (mut nodes, weights) = gauss_legendre_on(t_j - 1.0, t_j, n);
        // the endpoint t_j - 1 rides along as the first checkpoint so
        // the same sweep yields P(t_j)
        nodes.insert(0, t_j - 1.0);
        let (states, _) = evolution_to_endpoint(sys, t_j, &nodes)?;
        p_mat = states[0].clone();
        let mut b: Vec<DVector<Complex64>> = Vec::with_capacity(modes.len());
        for (omega, coeff) in modes {
            let mut acc = DVector::from_element(sys.dim(), Complex64::new(0.0, 0.0));
            for ((xi, w), u_mat) in nodes[1..].iter().zip(&weights).zip(&states[1..]) {
                let phase = Complex64::from_polar(1.0, omega * xi) * Complex64::new(*w, 0.0);
                acc += (u_mat * coeff) * phase;
            }
            b.push(acc);
        }
        let converged = prev_b
            .as_ref()
            .map(|pb| {
                let scale = 1.0 + b.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
                pb.iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0_f64, f64::max)
                    < settings.quad_tol * scale
            })
            .unwrap_or(false);
        prev_b = Some(b);
        if converged || round == 4 {
            break;
        }
        n *= 2;
    }
    Ok(PointData {
        p: p_mat,
        b: prev_b.expect("at least one quadrature round"),
    })
}

fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Spectral gap between a monodromy operator and a list of forcing
/// frequencies (taken as circle angles). Infinite for no frequencies.
pub fn gap_for_frequencies(p: &Monodromy, freqs: &[f64]) -> f64 {
    if freqs.is_empty() {
        return f64::INFINITY;
    }
    let angles: Vec<f64> = freqs
        .iter()
        .map(|&w| crate::funcspace::wrap_angle(w))
        .collect();
    let set = UnitCircleSet::from_angles(&angles, 1e-9).expect("angle set");
    spectral_gap(p, &set)
}

/// Direct solve of the linear equation for trig-polynomial forcing.
///
/// Requires a positive spectral gap between the monodromy eigenvalues
/// and the forcing angles; certifies the result against the mild
/// identity before returning it.
pub fn solve_linear(
    sys: &PeriodicSystem,
    f: &TrigPolynomial,
    settings: &SolverSettings,
) -> Result<MildSolution> {
    if f.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: f.dim(),
        });
    }
    let mono = monodromy(sys, 0.0)?;
    let freqs = f.frequencies();
    let gap = gap_for_frequencies(&mono, &freqs);
    if gap <= RESONANCE_TOL {
        return Err(Error::Resonance(format!(
            "spectral gap {gap} at or below the resonance tolerance {RESONANCE_TOL}"
        )));
    }
    let near_resonance = gap < 10.0 * RESONANCE_TOL;
    if f.is_zero() {
        let mut report = SolveReport::empty(settings.seed);
        report.gap = gap;
        return Ok(MildSolution::zero(sys.dim(), report));
    }
    let modes: Vec<(f64, DVector<Complex64>)> = f
        .modes()
        .iter()
        .map(|m| (m.omega, m.coeff.clone()))
        .collect();
    let m_env = settings.m_env;
    let points: Vec<Result<(Vec<DVector<Complex64>>, Vec<f64>)>> = map_indexed(m_env, |j| {
        let t_j = j as f64 / m_env as f64;
        let data = envelope_point_data(sys, t_j, &modes, settings)?;
        let mut values = Vec::with_capacity(modes.len());
        let mut conds = Vec::with_capacity(modes.len());
        for ((omega, _), b_k) in modes.iter().zip(&data.b) {
            let rot = Complex64::from_polar(1.0, -omega);
            let mut m = -(&data.p * rot);
            for i in 0..m.nrows() {
                m[(i, i)] += Complex64::new(1.0, 0.0);
            }
            let cond = condition_number(&m);
            if !cond.is_finite() || cond > settings.cond_cap {
                return Err(Error::Resonance(format!(
                    "mode omega = {omega}: envelope system condition {cond} exceeds cap {}",
                    settings.cond_cap
                )));
            }
            conds.push(cond);
            let rhs = b_k * Complex64::from_polar(1.0, -omega * t_j);
            let sol = m.lu().solve(&rhs).ok_or_else(|| {
                Error::Resonance(format!("mode omega = {omega}: singular envelope system"))
            })?;
            values.push(sol);
        }
        Ok((values, conds))
    });
    let mut per_point = Vec::with_capacity(m_env);
    for p in points {
        per_point.push(p?);
    }
    let mut mode_conds = vec![0.0_f64; modes.len()];
    for (_, conds) in &per_point {
        for (k, c) in conds.iter().enumerate() {
            mode_conds[k] = mode_conds[k].max(*c);
        }
    }
    let mut envelopes = Vec::with_capacity(modes.len());
    for (k, (omega, _)) in modes.iter().enumerate() {
        let samples: Vec<DVector<Complex64>> =
            per_point.iter().map(|(vals, _)| vals[k].clone()).collect();
        envelopes.push(Envelope::from_samples(*omega, samples)?);
    }
    let mut u =
        MildSolution::from_envelopes(envelopes, sys.dim(), SolveReport::empty(settings.seed))?;
    let resid = residual(
        sys,
        &u,
        FuncRef::Trig(f),
        settings.cert_pairs,
        settings.seed,
        settings,
    )?;
    if resid >= settings.resid_tol {
        return Err(Error::CertificationFailure(format!(
            "mild-identity residual {resid} at or above tolerance {}",
            settings.resid_tol
        )));
    }
    let mut u_norm: f64 = 0.0;
    let mut t = NORM_WINDOW.0;
    while t <= NORM_WINDOW.1 {
        u_norm = u_norm.max(MildSolution::eval(&u, t).norm());
        t += NORM_STEP;
    }
    let f_norm = sup_norm(FuncRef::Trig(f), NORM_WINDOW, NORM_STEP)?;
    u.set_report(SolveReport {
        residual: resid,
        gap,
        mode_conds,
        iterations: 0,
        u_norm,
        f_norm,
        near_resonance,
        seed: settings.seed,
    });
    Ok(u)
}

/// Sup of the mild-identity gap over `n_pairs` seeded random `(s, t)`
/// pairs with `t - s` in `(0, 3]`.
pub fn residual(
    sys: &PeriodicSystem,
    u: &dyn Signal,
    f: FuncRef<'_>,
    n_pairs: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..n_pairs)
        .map(|_| {
            let s: f64 = rng.random_range(-1.0..2.0);
            let delta: f64 = rng.random_range(1e-3..=3.0);
            (s, s + delta)
        })
        .collect();
    let gaps: Vec<Result<f64>> = map_indexed(pairs.len(), |i| {
        let (s, t) = pairs[i];
        let ev = propagate(sys, s, t)?;
        let carried = &ev.matrix * u.eval(s)?;
        let forced = match f {
            FuncRef::Trig(fp) => apply_g_smooth(sys, fp, t - s, t, settings)?,
            FuncRef::Grid(gr) => apply_g_grid(sys, gr, t - s, t)?,
        };
        Ok((u.eval(t)? - carried - forced).norm())
    });
    let mut sup: f64 = 0.0;
    for g in gaps {
        sup = sup.max(g?);
    }
    Ok(sup)
}

/// Outcome of the spectral-inclusion check `sigma(u) subset sigma(f)`.
#[derive(Clone, Debug)]
pub struct InclusionReport {
    pub detected: UnitCircleSet,
    pub allowed: UnitCircleSet,
    /// Detected angles farther than the angular resolution from every
    /// allowed angle.
    pub excess: Vec<f64>,
    pub holds: bool,
}

/// Render the solution over a long window, run the grid spectrum
/// detector on it, and compare against the forcing angles. Violations
/// are reported, not thrown.
pub fn verify_spectral_inclusion(
    u: &MildSolution,
    f: &TrigPolynomial,
    settings: &ResolventSettings,
) -> Result<InclusionReport> {
    settings.validate()?;
    let window = 2.0 * settings.max_terms as f64 + 8.0;
    let dt = 1.0 / 64.0;
    let n = (window / dt) as usize + 1;
    let detected = if u.envelopes.is_empty() {
        UnitCircleSet::empty(settings.angular_resolution())
    } else {
        let grid = GridFunction::from_fn(0.0, dt, n, |t| MildSolution::eval(u, t))?;
        circular_spectrum(FuncRef::Grid(&grid), settings)?.spectrum
    };
    let allowed_angles: Vec<f64> = f
        .frequencies()
        .iter()
        .map(|&w| crate::funcspace::wrap_angle(w))
        .collect();
    let allowed = if allowed_angles.is_empty() {
        UnitCircleSet::empty(settings.angular_resolution())
    } else {
        UnitCircleSet::from_angles(&allowed_angles, settings.angular_resolution())?
    };
    let excess: Vec<f64> = detected
        .angles()
        .iter()
        .copied()
        .filter(|&a| {
            allowed
                .min_distance(a)
                .map(|d| d >= settings.angular_resolution())
                .unwrap_or(true)
        })
        .collect();
    Ok(InclusionReport {
        holds: excess.is_empty(),
        detected,
        allowed,
        excess,
    })
}

/// Least-squares projection of a sampled function onto the modes
/// `e^{i omega_k t}`: the preprocessing step that turns general bounded
/// forcing into trig-polynomial form. Returns the projected polynomial
/// and the largest pointwise defect over the samples.
pub fn project_onto_modes(
    g: &GridFunction,
    freqs: &[f64],
) -> Result<(TrigPolynomial, f64)> {
    let n = g.len();
    if freqs.is_empty() {
        let defect = g
            .samples()
            .iter()
            .map(|s| s.norm())
            .fold(0.0_f64, f64::max);
        return Ok((TrigPolynomial::zero(g.dim()), defect));
    }
    let k = freqs.len();
    // Gram matrix of the mode family on the sample grid; the constant
    // step makes each entry a geometric sum with a closed form.
    let gram = CMatrix::from_fn(k, k, |a, b| {
        let delta = freqs[b] - freqs[a];
        let phase0 = Complex64::from_polar(1.0, delta * g.t0());
        let step = Complex64::from_polar(1.0, delta * g.dt());
        if (step - Complex64::new(1.0, 0.0)).norm() < 1e-12 {
            Complex64::new(n as f64, 0.0) * phase0
        } else {
            phase0 * (Complex64::new(1.0, 0.0) - step.powu(n as u32))
                / (Complex64::new(1.0, 0.0) - step)
        }
    });
    let lu = gram.lu();
    let mut mode_coeffs = vec![DVector::from_element(g.dim(), Complex64::new(0.0, 0.0)); k];
    for coord in 0..g.dim() {
        let mut rhs = DVector::from_element(k, Complex64::new(0.0, 0.0));
        for (j, s) in g.samples().iter().enumerate() {
            let t = g.time_at(j);
            for (a, &w) in freqs.iter().enumerate() {
                rhs[a] += Complex64::from_polar(1.0, -w * t) * s[coord];
            }
        }
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidInput("mode family is numerically degenerate".into()))?;
        for (a, c) in sol.iter().enumerate() {
            mode_coeffs[a][coord] = *c;
        }
    }
    let modes: Vec<crate::funcspace::Mode> = freqs
        .iter()
        .zip(mode_coeffs)
        .map(|(&omega, coeff)| crate::funcspace::Mode { omega, coeff })
        .collect();
    let poly = TrigPolynomial::new(g.dim(), modes)?;
    let mut defect: f64 = 0.0;
    for (j, s) in g.samples().iter().enumerate() {
        defect = defect.max((s - poly.eval(g.time_at(j))).norm());
    }
    Ok((poly, defect))
}

/// Apply `T^1_f` to a sampled function `n` times; each application
/// consumes one unit of window on the left.
pub fn iterate_t1(
    sys: &PeriodicSystem,
    f: &TrigPolynomial,
    g0: &GridFunction,
    n: usize,
    settings: &SolverSettings,
) -> Result<GridFunction> {
    if g0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: g0.dim(),
        });
    }
    if g0.window_length() < n as f64 + 2.0 {
        return Err(Error::WindowTooShort(format!(
            "need window length >= {}, got {}",
            n as f64 + 2.0,
            g0.window_length()
        )));
    }
    if n == 0 {
        return Ok(g0.clone());
    }
    let steps = (1.0 / g0.dt()).round();
    if (steps * g0.dt() - 1.0).abs() > 1e-9 {
        return Err(Error::NonCommensurateShift {
            tau: 1.0,
            dt: g0.dt(),
        });
    }
    let steps = steps as usize;
    // P(t) repeats with period 1, so one matrix per grid residue
    let p_cache: Vec<Result<CMatrix>> = map_indexed(steps, |r| {
        let t = g0.time_at(steps + r);
        Ok(propagate(sys, t - 1.0, t)?.matrix)
    });
    let p_cache: Vec<CMatrix> = p_cache.into_iter().collect::<Result<_>>()?;
    // (G f)(t) for every grid time that can appear on the left
    let gf: Vec<Result<DVector<Complex64>>> = map_indexed(g0.len(), |j| {
        if j < steps {
            Ok(DVector::from_element(sys.dim(), Complex64::new(0.0, 0.0)))
        } else {
            apply_g_smooth(sys, f, 1.0, g0.time_at(j), settings)
        }
    });
    let gf: Vec<DVector<Complex64>> = gf.into_iter().collect::<Result<_>>()?;

    let mut start = 0usize; // index into g0's timeline where the iterate begins
    let mut cur: Vec<DVector<Complex64>> = g0.samples().to_vec();
    for _ in 0..n {
        let new_start = start + steps;
        let mut next = Vec::with_capacity(g0.len() - new_start);
        for j in new_start..g0.len() {
            let prev = &cur[j - steps - start];
            let val = &p_cache[j % steps] * prev + &gf[j];
            next.push(val);
        }
        cur = next;
        start = new_start;
    }
    GridFunction::new(g0.time_at(start), g0.dt(), cur)
}
