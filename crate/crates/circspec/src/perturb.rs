//! Small nonlinear perturbations of the linear equation.
//!
//! The nonlinearity enters as a superposition (Nemytsky) operator
//! `g -> H(., g(.))` with `H(t, 0) = 0`, 1-periodic in `t`, and locally
//! Lipschitz with a nondecreasing modulus `l(r)`. The solver estimates
//! the gain `rho` of the linear solution operator over the working
//! frequency set, radially cuts `H` off at the ball of radius
//! `2 rho M` (`M = ||f||`), and Picard-iterates
//! `w <- solve_linear(f + eps H_M(w))`. For `eps` below the admissible
//! threshold the iteration contracts; at the fixed point the cut-off
//! must be inactive, so `w` solves the uncut equation, and the final
//! iterate is certified against the mild identity like any linear
//! solve.
//!
//! Nonlinearities act on exact trig polynomials. Products generate sums
//! of frequencies, so expansions are projected onto a finite frequency
//! module (integer combinations of the forcing frequencies plus
//! `2 pi Z`) and the dropped mass is reported.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::funcspace::{sup_norm, FuncRef, Mode, TrigPolynomial, FREQ_TOL, TAU};
use crate::par::map_indexed;
use crate::process::{monodromy, PeriodicSystem, RESONANCE_TOL};
use crate::quad::gauss_legendre_on;
use crate::solver::{
    evolution_to_endpoint, gap_for_frequencies, residual, solve_linear, MildSolution,
    SolverSettings,
};

/// Window and step for the finite-window sup-norm estimates used by the
/// cut-off and the bound checks.
const CUTOFF_WINDOW: (f64, f64) = (0.0, 32.0);
const CUTOFF_STEP: f64 = 1.0 / 64.0;

pub const DEFAULT_M_CAP: i64 = 3;
pub const DEFAULT_ORDER_CAP: u32 = 3;
pub const DEFAULT_MAX_MODES: usize = 1024;

/// One monomial term `coeff_i(t) * x_i^power` acting coordinatewise.
#[derive(Clone, Debug)]
pub struct PolyTerm {
    pub power: u32,
    /// Vector-valued 1-periodic coefficient; coordinate `i` multiplies
    /// `x_i^power`.
    pub coeff: TrigPolynomial,
}

/// The concrete nonlinearity.
#[derive(Clone, Debug)]
pub enum NemytskyKind {
    /// `H(t, x)_i = sum_terms coeff_i(t) x_i^power`.
    Polynomial { terms: Vec<PolyTerm> },
    /// `b(t) w^2` on the Galerkin sine basis: states are evaluated on a
    /// collocation grid of `4 n_modes` points, squared pointwise, and
    /// projected back onto the first `n_modes` sine coefficients.
    HeatQuadratic {
        n_modes: usize,
        b: TrigPolynomial,
        /// `tensor[n][p][q]`: sine coefficient `n` of `sin(p x) sin(q x)`.
        tensor: Vec<Vec<Vec<f64>>>,
        /// Bilinear gain: `||Q(c, d)|| <= gain ||c|| ||d||`.
        gain: f64,
    },
}

/// A superposition operator with its Lipschitz modulus.
#[derive(Clone, Debug)]
pub struct NemytskyMap {
    dim: usize,
    kind: NemytskyKind,
    /// `l(r) = sum_i lip[i] r^i`, nondecreasing on `r >= 0`.
    lip: Vec<f64>,
}

impl NemytskyMap {
    pub fn polynomial(dim: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        let mut lip = vec![0.0_f64];
        for term in &terms {
            if term.power == 0 {
                return Err(Error::InvalidInput(
                    "polynomial terms need power >= 1 so that H(t, 0) = 0".into(),
                ));
            }
            if term.coeff.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: term.coeff.dim(),
                });
            }
            if !term.coeff.is_one_periodic() {
                return Err(Error::InvalidInput(
                    "term coefficients must have period 1".into(),
                ));
            }
            // coordinatewise bound on the r-ball:
            // |c_i(t)| |x^p - y^p| <= p C r^{p-1} |x - y|
            let mut c_max = 0.0_f64;
            for i in 0..dim {
                c_max = c_max.max(term.coeff.coordinate(i)?.coeff_norm_sum());
            }
            let p = term.power as usize;
            if lip.len() < p {
                lip.resize(p, 0.0);
            }
            lip[p - 1] += p as f64 * c_max;
        }
        Ok(Self {
            dim,
            kind: NemytskyKind::Polynomial { terms },
            lip,
        })
    }

    /// Build the quadratic heat nonlinearity on `n_modes` sine modes.
    pub fn heat_quadratic(n_modes: usize, b: TrigPolynomial) -> Result<Self> {
        if b.dim() != 1 {
            return Err(Error::InvalidInput("b(t) must be scalar".into()));
        }
        if !b.is_one_periodic() {
            return Err(Error::InvalidInput("b(t) must have period 1".into()));
        }
        if n_modes == 0 {
            return Err(Error::InvalidInput("need n_modes >= 1".into()));
        }
        let m = 4 * n_modes;
        // collocation points x_j = j pi / m, j = 1..m-1
        let eval = DMatrix::<f64>::from_fn(m - 1, n_modes, |j, p| {
            ((j + 1) as f64 * (p + 1) as f64 * std::f64::consts::PI / m as f64).sin()
        });
        let mut tensor = vec![vec![vec![0.0; n_modes]; n_modes]; n_modes];
        for p in 0..n_modes {
            for q in 0..n_modes {
                for n in 0..n_modes {
                    let mut acc = 0.0;
                    for j in 0..m - 1 {
                        acc += eval[(j, p)] * eval[(j, q)] * eval[(j, n)];
                    }
                    tensor[n][p][q] = acc * 2.0 / m as f64;
                }
            }
        }
        // ||Q(c, d)||_2 <= ||proj||_2 ||E c||_inf ||E d||_2
        //              <= ||proj||_2 ||E||_2^2 ||c|| ||d||
        let proj = eval.transpose() * (2.0 / m as f64);
        let e_norm = eval.singular_values().max();
        let p_norm = proj.singular_values().max();
        let gain = p_norm * e_norm * e_norm;
        let b_sup = b.coeff_norm_sum();
        let lip = vec![0.0, 2.0 * b_sup * gain];
        Ok(Self {
            dim: n_modes,
            kind: NemytskyKind::HeatQuadratic {
                n_modes,
                b,
                tensor,
                gain,
            },
            lip,
        })
    }

    /// Replace the derived Lipschitz modulus with explicit polynomial
    /// coefficients.
    pub fn with_lip(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidInput(
                "Lipschitz modulus coefficients must be nonnegative".into(),
            ));
        }
        self.lip = coeffs;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NemytskyKind {
        &self.kind
    }

    pub fn lip_coeffs(&self) -> &[f64] {
        &self.lip
    }

    /// `l(r)`: local Lipschitz constant on the closed `r`-ball.
    pub fn lip_modulus(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for &c in &self.lip {
            acc += c * pow;
            pow *= r;
        }
        acc
    }

    /// Direct evaluation `H(t, x)`; the pointwise oracle for the trig
    /// expansion route.
    pub fn apply_pointwise(&self, t: f64, x: &DVector<Complex64>) -> DVector<Complex64> {
        match &self.kind {
            NemytskyKind::Polynomial { terms } => {
                let mut out = DVector::from_element(self.dim, Complex64::new(0.0, 0.0));
                for term in terms {
                    let coeff = term.coeff.eval(t);
                    for i in 0..self.dim {
                        out[i] += coeff[i] * x[i].powu(term.power);
                    }
                }
                out
            }
            NemytskyKind::HeatQuadratic { b, tensor, .. } => {
                let bv = b.eval(t)[0];
                let mut out = DVector::from_element(self.dim, Complex64::new(0.0, 0.0));
                for n in 0..self.dim {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for p in 0..self.dim {
                        for q in 0..self.dim {
                            acc += Complex64::new(tensor[n][p][q], 0.0) * x[p] * x[q];
                        }
                    }
                    out[n] = bv * acc;
                }
                out
            }
        }
    }
}

/// Finite truncation of the frequency module generated by a base set:
/// all `sum n_k omega_k + 2 pi m` with `sum |n_k| <= q`, `|m| <= m_cap`.
#[derive(Clone, Debug)]
pub struct FrequencyModule {
    elements: Vec<f64>,
    q: u32,
    m_cap: i64,
}

impl FrequencyModule {
    pub fn generate(base: &[f64], q: u32, m_cap: i64, max_modes: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("combination order must be >= 1".into()));
        }
        let mut base_dedup: Vec<f64> = Vec::new();
        for &w in base {
            if !base_dedup.iter().any(|&v| (v - w).abs() <= FREQ_TOL) {
                base_dedup.push(w);
            }
        }
        fn rec(base: &[f64], i: usize, budget: i64, acc: f64, out: &mut Vec<f64>) {
            if i == base.len() {
                out.push(acc);
                return;
            }
            for k in -budget..=budget {
                rec(base, i + 1, budget - k.abs(), acc + k as f64 * base[i], out);
            }
        }
        let mut sums = Vec::new();
        rec(&base_dedup, 0, q as i64, 0.0, &mut sums);
        let mut elements = Vec::with_capacity(sums.len() * (2 * m_cap as usize + 1));
        for s in sums {
            for m in -m_cap..=m_cap {
                elements.push(s + m as f64 * TAU);
            }
        }
        elements.sort_by(f64::total_cmp);
        elements.dedup_by(|a, b| (*a - *b).abs() <= FREQ_TOL);
        if elements.len() > max_modes {
            return Err(Error::ModuleOverflow {
                got: elements.len(),
                cap: max_modes,
            });
        }
        Ok(Self { elements, q, m_cap })
    }

    pub fn elements(&self) -> &[f64] {
        &self.elements
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn m_cap(&self) -> i64 {
        self.m_cap
    }

    /// Nearest module element within tolerance, if any.
    pub fn snap(&self, omega: f64) -> Option<f64> {
        let idx = self.elements.partition_point(|&e| e < omega);
        let lo = idx.saturating_sub(1);
        let hi = (idx + 1).min(self.elements.len());
        let mut best: Option<f64> = None;
        for &e in &self.elements[lo..hi] {
            if (e - omega).abs() <= 1e-9
                && best
                    .map(|b| (e - omega).abs() < (b - omega).abs())
                    .unwrap_or(true)
            {
                best = Some(e);
            }
        }
        best
    }

    pub fn contains(&self, omega: f64) -> bool {
        self.snap(omega).is_some()
    }

    /// Keep modes whose frequency lies in the module (snapped to the
    /// canonical element); return the kept polynomial and the summed
    /// coefficient norm of everything dropped.
    pub fn project(&self, poly: &TrigPolynomial) -> Result<(TrigPolynomial, f64)> {
        let mut kept = Vec::new();
        let mut dropped = 0.0;
        for m in poly.modes() {
            match self.snap(m.omega) {
                Some(e) => kept.push(Mode {
                    omega: e,
                    coeff: m.coeff.clone(),
                }),
                None => dropped += m.coeff.norm(),
            }
        }
        Ok((TrigPolynomial::new(poly.dim(), kept)?, dropped))
    }
}

/// A trig-polynomial expansion of `H(t, g(t))` with its truncation
/// defect (sup-norm bound of the dropped modes).
#[derive(Clone, Debug)]
pub struct NemytskyExpansion {
    pub poly: TrigPolynomial,
    pub truncation_defect: f64,
    /// The input was radially rescaled by the cut-off before `H`.
    pub cutoff_engaged: bool,
}

fn expand_in_module(
    h: &NemytskyMap,
    g: &TrigPolynomial,
    module: &FrequencyModule,
) -> Result<NemytskyExpansion> {
    if g.dim() != h.dim {
        return Err(Error::DimensionMismatch {
            expected: h.dim,
            got: g.dim(),
        });
    }
    for w in g.frequencies() {
        if !module.contains(w) {
            return Err(Error::InvalidInput(format!(
                "input frequency {w} lies outside the working module"
            )));
        }
    }
    let dim = h.dim;
    let mut modes: Vec<Mode> = Vec::new();
    let push_scalar = |i: usize, poly: &TrigPolynomial, modes: &mut Vec<Mode>| {
        for m in poly.modes() {
            let mut coeff = DVector::from_element(dim, Complex64::new(0.0, 0.0));
            coeff[i] = m.coeff[0];
            modes.push(Mode {
                omega: m.omega,
                coeff,
            });
        }
    };
    match &h.kind {
        NemytskyKind::Polynomial { terms } => {
            for i in 0..dim {
                let g_i = g.coordinate(i)?;
                for term in terms {
                    let mut pow = g_i.clone();
                    for _ in 1..term.power {
                        pow = pow.mul_scalar(&g_i)?;
                    }
                    let contrib = term.coeff.coordinate(i)?.mul_scalar(&pow)?;
                    push_scalar(i, &contrib, &mut modes);
                }
            }
        }
        NemytskyKind::HeatQuadratic { tensor, b, .. } => {
            let coords: Vec<TrigPolynomial> =
                (0..dim).map(|i| g.coordinate(i)).collect::<Result<_>>()?;
            for p in 0..dim {
                for q in p..dim {
                    let prod = coords[p].mul_scalar(&coords[q])?;
                    let weighted = b.mul_scalar(&prod)?;
                    let sym = if p == q { 1.0 } else { 2.0 };
                    for n in 0..dim {
                        let t_npq = tensor[n][p][q] * sym;
                        if t_npq != 0.0 {
                            let contrib = weighted.scale(Complex64::new(t_npq, 0.0));
                            push_scalar(n, &contrib, &mut modes);
                        }
                    }
                }
            }
        }
    }
    let raw = TrigPolynomial::new(dim, modes)?;
    let (poly, truncation_defect) = module.project(&raw)?;
    Ok(NemytskyExpansion {
        poly,
        truncation_defect,
        cutoff_engaged: false,
    })
}

/// Expand `H(t, g(t))` as a trig polynomial over the module generated
/// by `g`'s own frequencies at combination order `order_cap`.
pub fn nemytsky_apply(
    h: &NemytskyMap,
    g: &TrigPolynomial,
    order_cap: u32,
) -> Result<NemytskyExpansion> {
    let module = FrequencyModule::generate(
        &g.frequencies(),
        order_cap,
        DEFAULT_M_CAP,
        DEFAULT_MAX_MODES,
    )?;
    expand_in_module(h, g, &module)
}

fn cutoff_in_module(
    h: &NemytskyMap,
    g: &TrigPolynomial,
    bound: f64,
    module: &FrequencyModule,
) -> Result<NemytskyExpansion> {
    let sup = sup_norm(FuncRef::Trig(g), CUTOFF_WINDOW, CUTOFF_STEP)?;
    if sup <= bound {
        expand_in_module(h, g, module)
    } else {
        let scaled = g.scale(Complex64::new(bound / sup, 0.0));
        let mut expansion = expand_in_module(h, &scaled, module)?;
        expansion.cutoff_engaged = true;
        Ok(expansion)
    }
}

/// The cut-off superposition operator `H_M`: apply `H` directly inside
/// the ball of radius `bound`, otherwise to the radially rescaled
/// input.
pub fn cutoff_apply(
    h: &NemytskyMap,
    g: &TrigPolynomial,
    bound: f64,
    order_cap: u32,
) -> Result<NemytskyExpansion> {
    let module = FrequencyModule::generate(
        &g.frequencies(),
        order_cap,
        DEFAULT_M_CAP,
        DEFAULT_MAX_MODES,
    )?;
    cutoff_in_module(h, g, bound, &module)
}

/// Gain estimate for the linear solution operator over a frequency set.
#[derive(Clone, Debug)]
pub struct RhoEstimate {
    /// `max over (omega, t_j)` of
    /// `||(I - e^{-i omega} P(t_j))^{-1}|| * ||G_omega||`; a lower
    /// estimate of the true operator norm.
    pub rho: f64,
    /// `||G_omega||` per probed frequency.
    pub mode_gains: Vec<f64>,
    /// Envelope grid points probed.
    pub probe_points: usize,
}

/// Estimate `rho = ||L^{-1}||` over the working frequencies by probing
/// the per-mode solve at the envelope grid points.
pub fn estimate_rho(
    sys: &PeriodicSystem,
    freqs: &[f64],
    settings: &SolverSettings,
) -> Result<RhoEstimate> {
    let mono = monodromy(sys, 0.0)?;
    let gap = gap_for_frequencies(&mono, freqs);
    if gap <= RESONANCE_TOL {
        return Err(Error::Resonance(format!(
            "cannot estimate the solution gain: spectral gap {gap} at or below {RESONANCE_TOL}"
        )));
    }
    let m_env = settings.m_env;
    let dim = sys.dim();
    let per_point: Vec<Result<(Vec<f64>, Vec<f64>)>> = map_indexed(m_env, |j| {
        let t_j = j as f64 / m_env as f64;
        let n = settings.base_nodes.max(8) * 2;
        let (mut nodes, weights) = gauss_legendre_on(t_j - 1.0, t_j, n);
        nodes.insert(0, t_j - 1.0);
        let (states, _) = evolution_to_endpoint(sys, t_j, &nodes)?;
        let p = &states[0];
        let mut inv_norms = Vec::with_capacity(freqs.len());
        let mut gains = Vec::with_capacity(freqs.len());
        for &omega in freqs {
            // mode-wise G action as a matrix on the state space
            let mut b_mat = crate::ode::CMatrix::zeros(dim, dim);
            for ((xi, w), u_mat) in nodes[1..].iter().zip(&weights).zip(&states[1..]) {
                let phase = Complex64::from_polar(1.0, omega * xi) * Complex64::new(*w, 0.0);
                b_mat += u_mat * phase;
            }
            let q_mat = b_mat * Complex64::from_polar(1.0, -omega * t_j);
            let gain = q_mat.singular_values().max();
            let rot = Complex64::from_polar(1.0, -omega);
            let mut m = -(p * rot);
            for i in 0..dim {
                m[(i, i)] += Complex64::new(1.0, 0.0);
            }
            let smin = m.singular_values().min();
            let inv_norm = if smin > 0.0 { 1.0 / smin } else { f64::INFINITY };
            inv_norms.push(inv_norm);
            gains.push(gain);
        }
        Ok((inv_norms, gains))
    });
    let mut mode_gains = vec![0.0_f64; freqs.len()];
    let mut rho = 0.0_f64;
    let mut per_freq_inv = vec![0.0_f64; freqs.len()];
    for point in per_point {
        let (inv, gains) = point?;
        for k in 0..freqs.len() {
            mode_gains[k] = mode_gains[k].max(gains[k]);
            per_freq_inv[k] = per_freq_inv[k].max(inv[k]);
        }
    }
    for k in 0..freqs.len() {
        rho = rho.max(per_freq_inv[k] * mode_gains[k]);
    }
    if !rho.is_finite() {
        return Err(Error::Resonance(
            "singular envelope system while estimating the gain".into(),
        ));
    }
    Ok(RhoEstimate {
        rho,
        mode_gains,
        probe_points: m_env,
    })
}

/// Admissible perturbation threshold `1 / (4 rho l(2 rho M))`; infinite
/// when the modulus vanishes there (linear nonlinearity).
pub fn epsilon_threshold(rho: f64, h: &NemytskyMap, m_norm: f64) -> f64 {
    let l = h.lip_modulus(2.0 * rho * m_norm);
    if l <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (4.0 * rho * l)
    }
}

/// Controls for the Picard solve.
#[derive(Clone, Debug)]
pub struct PerturbOptions {
    /// Solve even when `epsilon` exceeds the admissible threshold.
    pub force: bool,
    /// Stop when the step sup-norm over the envelope grid drops below
    /// this.
    pub picard_tol: f64,
    pub max_iterations: usize,
    /// Combination order `q` of the working frequency module.
    pub order_cap: u32,
    /// Envelope harmonics `|m| <= m_cap` kept when re-expanding
    /// iterates.
    pub m_cap: i64,
    pub max_modes: usize,
    pub solver: SolverSettings,
    /// Added to the first iterate; probes local uniqueness.
    pub initial_offset: Option<TrigPolynomial>,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self {
            force: false,
            picard_tol: 1e-8,
            max_iterations: 200,
            order_cap: DEFAULT_ORDER_CAP,
            m_cap: DEFAULT_M_CAP,
            max_modes: DEFAULT_MAX_MODES,
            solver: SolverSettings::default(),
            initial_offset: None,
        }
    }
}

/// Outcome metadata for a perturbed solve.
#[derive(Clone, Debug)]
pub struct PerturbReport {
    pub rho: f64,
    /// `M = ||f||` finite-window estimate.
    pub m_norm: f64,
    pub epsilon: f64,
    pub epsilon_0: f64,
    pub iterations: usize,
    /// Sup of observed step ratios; below 1 on success.
    pub contraction_factor: f64,
    /// Finite-window estimate of `||w||`.
    pub final_norm: f64,
    /// `||w|| <= 2 rho M`.
    pub bound_ok: bool,
    /// Largest module-truncation defect seen across iterations.
    pub truncation_defect: f64,
    /// Mild residual of `w` against `f + eps H(., w)`.
    pub residual: f64,
    pub seed: u64,
}

fn envelope_value(u: &MildSolution, omega: f64, t: f64) -> DVector<Complex64> {
    for e in u.envelopes() {
        if (e.omega - omega).abs() <= FREQ_TOL {
            return e.value_at(t);
        }
    }
    DVector::from_element(u.dim(), Complex64::new(0.0, 0.0))
}

/// Distance between two solutions: sup over the envelope grid of the
/// per-frequency envelope differences.
fn solution_distance(a: &MildSolution, b: &MildSolution, m_env: usize) -> f64 {
    let mut freqs: Vec<f64> = a.freqs().to_vec();
    for &w in b.freqs() {
        if !freqs.iter().any(|&x| (x - w).abs() <= FREQ_TOL) {
            freqs.push(w);
        }
    }
    let mut sup: f64 = 0.0;
    for j in 0..m_env {
        let t = j as f64 / m_env as f64;
        for &w in &freqs {
            let pa = envelope_value(a, w, t);
            let pb = envelope_value(b, w, t);
            sup = sup.max((pa - pb).norm());
        }
    }
    sup
}

/// Solve `u' = A(t) u + eps H(t, u) + f` for a bounded mild solution by
/// Picard iteration on the cut-off problem.
pub fn solve_perturbed(
    sys: &PeriodicSystem,
    f: &TrigPolynomial,
    h: &NemytskyMap,
    epsilon: f64,
    opts: &PerturbOptions,
) -> Result<(MildSolution, PerturbReport)> {
    if h.dim() != sys.dim() || f.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: h.dim(),
        });
    }
    let module = FrequencyModule::generate(
        &f.frequencies(),
        opts.order_cap,
        opts.m_cap,
        opts.max_modes,
    )?;
    let rho_est = estimate_rho(sys, module.elements(), &opts.solver)?;
    let rho = rho_est.rho;
    let m_norm = sup_norm(FuncRef::Trig(f), CUTOFF_WINDOW, CUTOFF_STEP)?;
    let epsilon_0 = epsilon_threshold(rho, h, m_norm);
    if !(epsilon.abs() < epsilon_0) && !opts.force {
        return Err(Error::EpsilonTooLarge {
            epsilon,
            threshold: epsilon_0,
        });
    }
    let bound = 2.0 * rho * m_norm;
    let w0 = solve_linear(sys, f, &opts.solver)?;
    if epsilon == 0.0 {
        let mut report0 = w0.report().clone();
        report0.iterations = 1;
        let final_norm = report0.u_norm;
        let residual0 = report0.residual;
        let seed = report0.seed;
        let mut w = w0;
        w.set_report(report0);
        return Ok((
            w,
            PerturbReport {
                rho,
                m_norm,
                epsilon,
                epsilon_0,
                iterations: 1,
                contraction_factor: 0.0,
                final_norm,
                bound_ok: final_norm <= bound * (1.0 + 1e-6),
                truncation_defect: 0.0,
                residual: residual0,
                seed,
            },
        ));
    }

    let mut w = w0;
    let mut iterations = 1usize;
    let mut prev_step: Option<f64> = None;
    let mut contraction_factor = 0.0_f64;
    let mut nondecreasing_streak = 0usize;
    let mut truncation_defect = 0.0_f64;
    let mut last_cutoff = false;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        let (mut w_trig, drop_env) = w.to_trig_polynomial(opts.m_cap)?;
        if it == 0 {
            if let Some(offset) = &opts.initial_offset {
                w_trig = w_trig.add(offset)?;
            }
        }
        let (w_proj, drop_mod) = module.project(&w_trig)?;
        truncation_defect = truncation_defect.max(drop_env + drop_mod);
        let expansion = cutoff_in_module(h, &w_proj, bound, &module)?;
        truncation_defect = truncation_defect.max(expansion.truncation_defect);
        last_cutoff = expansion.cutoff_engaged;
        let forcing = f.add(&expansion.poly.scale(Complex64::new(epsilon, 0.0)))?;
        let w_next = solve_linear(sys, &forcing, &opts.solver)?;
        let step = solution_distance(&w_next, &w, opts.solver.m_env);
        if let Some(prev) = prev_step {
            if prev > 0.0 {
                let ratio = step / prev;
                contraction_factor = contraction_factor.max(ratio);
                if ratio >= 1.0 {
                    nondecreasing_streak += 1;
                    if nondecreasing_streak >= 3 {
                        return Err(Error::IterationDiverged(format!(
                            "step ratio >= 1 for 3 consecutive iterations (last step {step})"
                        )));
                    }
                } else {
                    nondecreasing_streak = 0;
                }
            }
        }
        prev_step = Some(step);
        w = w_next;
        iterations += 1;
        if step < opts.picard_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationDiverged(format!(
            "no convergence within {} iterations (last step {:?})",
            opts.max_iterations, prev_step
        )));
    }
    if last_cutoff {
        let (w_trig, _) = w.to_trig_polynomial(opts.m_cap)?;
        let sup = sup_norm(FuncRef::Trig(&w_trig), CUTOFF_WINDOW, CUTOFF_STEP)?;
        return Err(Error::CutoffActiveAtFixedPoint { norm: sup, bound });
    }
    // certify the fixed point against its own expanded forcing
    let (w_trig, _) = w.to_trig_polynomial(opts.m_cap)?;
    let (w_proj, _) = module.project(&w_trig)?;
    let expansion = expand_in_module(h, &w_proj, &module)?;
    let final_forcing = f.add(&expansion.poly.scale(Complex64::new(epsilon, 0.0)))?;
    let final_residual = residual(
        sys,
        &w,
        FuncRef::Trig(&final_forcing),
        opts.solver.cert_pairs,
        opts.solver.seed,
        &opts.solver,
    )?;
    let mut final_norm: f64 = 0.0;
    let mut t = CUTOFF_WINDOW.0;
    while t <= CUTOFF_WINDOW.1 {
        final_norm = final_norm.max(MildSolution::eval(&w, t).norm());
        t += CUTOFF_STEP;
    }
    let bound_ok = final_norm <= bound * (1.0 + 1e-6);
    let mut report = w.report().clone();
    report.iterations = iterations;
    report.residual = final_residual;
    w.set_report(report);
    Ok((
        w,
        PerturbReport {
            rho,
            m_norm,
            epsilon,
            epsilon_0,
            iterations,
            contraction_factor,
            final_norm,
            bound_ok,
            truncation_defect,
            residual: final_residual,
            seed: opts.solver.seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{CMatrix, IntegrationSettings};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square_map(dim: usize) -> NemytskyMap {
        let coeff = TrigPolynomial::constant(DVector::from_element(dim, c(1.0, 0.0)));
        NemytskyMap::polynomial(dim, vec![PolyTerm { power: 2, coeff }]).unwrap()
    }

    fn scalar_decay_system() -> PeriodicSystem {
        PeriodicSystem::constant(
            CMatrix::from_element(1, 1, c(-1.0, 0.0)),
            IntegrationSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn square_of_constant() {
        let h = square_map(1);
        let g = TrigPolynomial::scalar(&[(0.0, c(0.7, 0.0))]);
        let out = nemytsky_apply(&h, &g, 2).unwrap();
        assert_eq!(out.poly.modes().len(), 1);
        assert_abs_diff_eq!(out.poly.modes()[0].omega, 0.0, epsilon = 1e-12);
        assert!((out.poly.modes()[0].coeff[0] - c(0.49, 0.0)).norm() < 1e-14);
        assert_eq!(out.truncation_defect, 0.0);
    }

    #[test]
    fn square_of_single_mode_doubles_frequency() {
        let h = square_map(1);
        let g = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0))]);
        let out = nemytsky_apply(&h, &g, 2).unwrap();
        assert_eq!(out.poly.modes().len(), 1);
        assert_abs_diff_eq!(out.poly.modes()[0].omega, 2.0, epsilon = 1e-12);
        assert!((out.poly.modes()[0].coeff[0] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn periodic_coefficient_splits_modes() {
        // H(t, x) = sin(2 pi t) x on g = e^{i sqrt2 t}
        let sin_coeff = TrigPolynomial::scalar(&[(TAU, c(0.0, -0.5)), (-TAU, c(0.0, 0.5))]);
        let h = NemytskyMap::polynomial(
            1,
            vec![PolyTerm {
                power: 1,
                coeff: sin_coeff,
            }],
        )
        .unwrap();
        let w = std::f64::consts::SQRT_2;
        let g = TrigPolynomial::scalar(&[(w, c(1.0, 0.0))]);
        let out = nemytsky_apply(&h, &g, 2).unwrap();
        assert_eq!(out.poly.modes().len(), 2);
        let lo = &out.poly.modes()[0];
        let hi = &out.poly.modes()[1];
        assert_abs_diff_eq!(lo.omega, w - TAU, epsilon = 1e-9);
        assert_abs_diff_eq!(hi.omega, w + TAU, epsilon = 1e-9);
        assert!((hi.coeff[0] - c(0.0, -0.5)).norm() < 1e-14);
        assert!((lo.coeff[0] - c(0.0, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn expansion_matches_pointwise_oracle() {
        let h = square_map(1);
        let g = TrigPolynomial::scalar(&[(0.0, c(0.3, 0.0)), (1.0, c(0.5, -0.2))]);
        let out = nemytsky_apply(&h, &g, 2).unwrap();
        for &t in &[0.0, 0.4, 1.7, -0.9] {
            let direct = h.apply_pointwise(t, &g.eval(t));
            let expanded = out.poly.eval(t);
            assert!((direct - expanded).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_identity_inside_ball() {
        let h = square_map(1);
        let g = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let plain = nemytsky_apply(&h, &g, 2).unwrap();
        let cut = cutoff_apply(&h, &g, 1.0, 2).unwrap();
        assert!(!cut.cutoff_engaged);
        assert_eq!(plain.poly.modes().len(), cut.poly.modes().len());
        assert!((plain.poly.modes()[0].coeff[0] - cut.poly.modes()[0].coeff[0]).norm() < 1e-14);
    }

    #[test]
    fn cutoff_rescales_outside_ball() {
        let h = square_map(1);
        let bound = 0.8;
        let g = TrigPolynomial::scalar(&[(0.0, c(2.0 * bound, 0.0))]);
        let cut = cutoff_apply(&h, &g, bound, 2).unwrap();
        assert!(cut.cutoff_engaged);
        // H applied to the rescaled constant: bound^2
        assert!((cut.poly.modes()[0].coeff[0] - c(bound * bound, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cutoff_of_zero_is_zero() {
        let h = square_map(1);
        let g = TrigPolynomial::zero(1);
        let cut = cutoff_apply(&h, &g, 1.0, 2).unwrap();
        assert!(cut.poly.is_zero());
    }

    #[test]
    fn rho_of_scalar_decay_at_zero_frequency() {
        let sys = scalar_decay_system();
        let est = estimate_rho(&sys, &[0.0], &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(est.rho, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn rho_of_scalar_decay_at_unit_frequency() {
        let sys = scalar_decay_system();
        let est = estimate_rho(&sys, &[1.0], &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(est.rho, 1.0 / 2.0_f64.sqrt(), epsilon = 1e-8);
        let both = estimate_rho(&sys, &[0.0, 1.0], &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(both.rho, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn rho_rejects_resonance() {
        let sys =
            PeriodicSystem::constant(CMatrix::zeros(1, 1), IntegrationSettings::default())
                .unwrap();
        assert!(matches!(
            estimate_rho(&sys, &[0.0], &SolverSettings::default()),
            Err(Error::Resonance(_))
        ));
    }

    #[test]
    fn threshold_examples() {
        // l(r) = r
        let h = square_map(1).with_lip(vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(epsilon_threshold(1.0, &h, 1.0), 0.125, epsilon = 1e-15);
        // l = 0: purely linear map, any epsilon admissible
        let linear = square_map(1).with_lip(vec![]).unwrap();
        assert!(epsilon_threshold(1.0, &linear, 1.0).is_infinite());
        // l identically 1
        let flat = square_map(1).with_lip(vec![1.0]).unwrap();
        assert_abs_diff_eq!(epsilon_threshold(2.0, &flat, 0.5), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn zero_epsilon_reduces_to_linear_solve() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let (w, rep) = solve_perturbed(&sys, &f, &h, 0.0, &PerturbOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        let linear = solve_linear(&sys, &f, &SolverSettings::default()).unwrap();
        for &t in &[0.0, 0.6, 2.2] {
            assert!((MildSolution::eval(&w, t) - MildSolution::eval(&linear, t)).norm() < 1e-14);
        }
    }

    #[test]
    fn logistic_fixed_point() {
        // u' = -u + eps u^2 + 0.5; the bounded solution is the constant
        // 10 (1 - sqrt(0.9)) for eps = 0.05
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let (w, rep) = solve_perturbed(&sys, &f, &h, 0.05, &PerturbOptions::default()).unwrap();
        let expected = 10.0 * (1.0 - 0.9_f64.sqrt());
        for &t in &[0.0, 1.3] {
            assert!(
                (MildSolution::eval(&w, t)[0] - c(expected, 0.0)).norm() < 1e-6,
                "fixed point off at t = {t}"
            );
        }
        assert!(rep.bound_ok);
        assert!(rep.contraction_factor < 1.0);
        assert!(rep.residual < 1e-5);
        assert!(rep.iterations >= 3);
    }

    #[test]
    fn oversized_epsilon_rejected() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let opts = PerturbOptions::default();
        let module =
            FrequencyModule::generate(&f.frequencies(), opts.order_cap, opts.m_cap, 1024).unwrap();
        let rho = estimate_rho(&sys, module.elements(), &opts.solver)
            .unwrap()
            .rho;
        let eps0 = epsilon_threshold(rho, &h, 0.5);
        assert!(matches!(
            solve_perturbed(&sys, &f, &h, 10.0 * eps0, &opts),
            Err(Error::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn contraction_factor_within_predicted_margin() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let eps = 0.05;
        let (_, rep) = solve_perturbed(&sys, &f, &h, eps, &PerturbOptions::default()).unwrap();
        let predicted = rep.rho * eps * 2.0 * h.lip_modulus(2.0 * rep.rho * rep.m_norm);
        assert!(
            rep.contraction_factor <= predicted + 0.05,
            "observed {} vs predicted {predicted}",
            rep.contraction_factor
        );
    }

    #[test]
    fn restart_converges_to_same_fixed_point() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let opts = PerturbOptions::default();
        let (w_ref, rep) = solve_perturbed(&sys, &f, &h, 0.05, &opts).unwrap();
        let offset = TrigPolynomial::scalar(&[(0.0, c(0.1 * rep.rho * rep.m_norm, 0.0))]);
        let mut restarted = opts.clone();
        restarted.initial_offset = Some(offset);
        let (w_alt, _) = solve_perturbed(&sys, &f, &h, 0.05, &restarted).unwrap();
        for &t in &[0.0, 0.9] {
            let d = (MildSolution::eval(&w_ref, t) - MildSolution::eval(&w_alt, t)).norm();
            assert!(d < 10.0 * opts.picard_tol, "fixed points differ by {d}");
        }
    }

    #[test]
    fn epsilon_continuity_is_monotone() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let opts = PerturbOptions::default();
        let (w0, rep0) = solve_perturbed(&sys, &f, &h, 0.0, &opts).unwrap();
        let eps0 = rep0.epsilon_0;
        let mut prev = 0.0;
        for factor in [1e-3, 1e-2] {
            let eps = factor * eps0;
            let (w, _) = solve_perturbed(&sys, &f, &h, eps, &opts).unwrap();
            let d = (MildSolution::eval(&w, 0.3) - MildSolution::eval(&w0, 0.3)).norm();
            assert!(d >= prev, "distance shrank as epsilon grew");
            prev = d;
        }
    }

    #[test]
    fn inverse_lemma_norm_bound() {
        let sys = scalar_decay_system();
        let f = TrigPolynomial::scalar(&[(0.0, c(0.5, 0.0))]);
        let h = square_map(1);
        let eps = 0.05;
        let (_, rep) = solve_perturbed(&sys, &f, &h, eps, &PerturbOptions::default()).unwrap();
        let denom = 1.0 / rep.rho - eps * 2.0 * h.lip_modulus(2.0 * rep.rho * rep.m_norm);
        assert!(denom > 0.0);
        assert!(rep.final_norm <= rep.m_norm / denom + 1e-9);
    }

    #[test]
    fn heat_tensor_matches_analytic_projection() {
        // (2/pi) int_0^pi sin(px) sin(qx) sin(nx) dx via fine Simpson
        let n_modes = 3;
        let h =
            NemytskyMap::heat_quadratic(n_modes, TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]))
                .unwrap();
        let NemytskyKind::HeatQuadratic { tensor, .. } = h.kind() else {
            panic!("wrong kind");
        };
        let steps = 4000;
        let dx = std::f64::consts::PI / steps as f64;
        for p in 0..n_modes {
            for q in 0..n_modes {
                for n in 0..n_modes {
                    let mut acc = 0.0;
                    for j in 0..=steps {
                        let x = j as f64 * dx;
                        let w = if j == 0 || j == steps {
                            1.0
                        } else if j % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        acc += w
                            * ((p + 1) as f64 * x).sin()
                            * ((q + 1) as f64 * x).sin()
                            * ((n + 1) as f64 * x).sin();
                    }
                    let exact = acc * dx / 3.0 * 2.0 / std::f64::consts::PI;
                    // the margin-2 collocation grid aliases the top
                    // self-products (content at 3 n_modes) at the
                    // few-per-mille level
                    assert!(
                        (tensor[n][p][q] - exact).abs() < 5e-3,
                        "tensor[{n}][{p}][{q}] = {} vs {exact}",
                        tensor[n][p][q]
                    );
                }
            }
        }
    }

    #[test]
    fn heat_quadratic_expansion_matches_pointwise() {
        let n_modes = 3;
        let b = TrigPolynomial::scalar(&[(TAU, c(0.0, -0.25)), (-TAU, c(0.0, 0.25))]);
        let h = NemytskyMap::heat_quadratic(n_modes, b).unwrap();
        let g = TrigPolynomial::new(
            n_modes,
            vec![
                Mode {
                    omega: 0.0,
                    coeff: DVector::from_vec(vec![c(0.4, 0.0), c(0.1, 0.0), c(0.0, 0.0)]),
                },
                Mode {
                    omega: 1.0,
                    coeff: DVector::from_vec(vec![c(0.0, 0.2), c(0.3, 0.0), c(0.05, 0.0)]),
                },
            ],
        )
        .unwrap();
        let module = FrequencyModule::generate(&[0.0, 1.0], 2, 2, 1024).unwrap();
        let out = expand_in_module(&h, &g, &module).unwrap();
        assert_eq!(out.truncation_defect, 0.0);
        for &t in &[0.0, 0.3, 1.1] {
            let direct = h.apply_pointwise(t, &g.eval(t));
            let expanded = out.poly.eval(t);
            assert!(
                (direct.clone() - expanded.clone()).norm() < 1e-10,
                "mismatch at t = {t}: {} vs {}",
                direct.norm(),
                expanded.norm()
            );
        }
    }

    #[test]
    fn module_generation_and_projection() {
        let module = FrequencyModule::generate(&[1.0], 2, 1, 1024).unwrap();
        assert!(module.contains(2.0));
        assert!(module.contains(1.0 - TAU));
        assert!(!module.contains(3.0));
        let poly = TrigPolynomial::scalar(&[(2.0, c(1.0, 0.0)), (3.0, c(0.5, 0.0))]);
        let (kept, dropped) = module.project(&poly).unwrap();
        assert_eq!(kept.modes().len(), 1);
        assert_abs_diff_eq!(dropped, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn module_overflow_guard() {
        assert!(matches!(
            FrequencyModule::generate(&[1.0, std::f64::consts::SQRT_2, 2.6, 3.9], 3, 3, 64),
            Err(Error::ModuleOverflow { .. })
        ));
    }
}
