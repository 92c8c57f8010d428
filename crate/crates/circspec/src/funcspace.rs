//! Representations of bounded functions on the real line.
//!
//! Two concrete carriers are provided: [`TrigPolynomial`] for exact
//! finite sums `sum_k a_k e^{i omega_k t}` and [`GridFunction`] for
//! uniformly sampled data on a finite window. [`UnitCircleSet`] holds
//! finite sets of unit-circle angles with detection scores and a metric
//! membership rule. The translation operator acts on both carriers.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Frequencies closer than this are treated as equal and their
/// coefficients merged.
pub const FREQ_TOL: f64 = 1e-9;

/// Relative (to `dt`) tolerance for deciding whether a time lands on a
/// sample grid.
pub(crate) const GRID_TOL: f64 = 1e-6;

pub const TAU: f64 = std::f64::consts::TAU;

/// Shortest angular distance between two angles, in `[0, pi]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Reduce an angle to `[0, 2*pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One frequency component of a trigonometric polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub omega: f64,
    pub coeff: DVector<Complex64>,
}

/// Exact finite sum `sum_k coeff_k e^{i omega_k t}` with values in C^dim.
///
/// Construction sorts modes by frequency, merges modes closer than
/// [`FREQ_TOL`] by summing coefficients, and drops exactly-zero
/// coefficients. An empty mode list represents the zero function.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPolynomial {
    dim: usize,
    modes: Vec<Mode>,
}

impl TrigPolynomial {
    pub fn new(dim: usize, modes: Vec<Mode>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for m in &modes {
            if m.coeff.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.coeff.len(),
                });
            }
            if !m.omega.is_finite() {
                return Err(Error::InvalidInput("non-finite frequency".into()));
            }
        }
        let mut modes = modes;
        modes.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        let mut merged: Vec<Mode> = Vec::with_capacity(modes.len());
        for m in modes {
            match merged.last_mut() {
                Some(last) if (m.omega - last.omega).abs() <= FREQ_TOL => {
                    last.coeff += &m.coeff;
                }
                _ => merged.push(m),
            }
        }
        merged.retain(|m| m.coeff.iter().any(|c| c.norm_sqr() > 0.0));
        Ok(Self { dim, modes: merged })
    }

    /// The zero function in C^dim.
    pub fn zero(dim: usize) -> Self {
        Self { dim, modes: Vec::new() }
    }

    /// Constant function with the given value.
    pub fn constant(value: DVector<Complex64>) -> Self {
        let dim = value.len();
        Self::new(dim, vec![Mode { omega: 0.0, coeff: value }]).expect("constant mode")
    }

    /// Scalar (dim 1) polynomial from `(omega, coefficient)` pairs.
    pub fn scalar(modes: &[(f64, Complex64)]) -> Self {
        let modes = modes
            .iter()
            .map(|&(omega, c)| Mode {
                omega,
                coeff: DVector::from_element(1, c),
            })
            .collect();
        Self::new(1, modes).expect("scalar modes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    /// `sum_k coeff_k e^{i omega_k t}`.
    pub fn eval(&self, t: f64) -> DVector<Complex64> {
        let mut v = DVector::from_element(self.dim, Complex64::new(0.0, 0.0));
        for m in &self.modes {
            let phase = Complex64::from_polar(1.0, m.omega * t);
            v.zip_apply(&m.coeff, |out, c| *out += phase * c);
        }
        v
    }

    /// `S(tau)`: multiplies each coefficient by `e^{i omega tau}`.
    pub fn translate(&self, tau: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                omega: m.omega,
                coeff: &m.coeff * Complex64::from_polar(1.0, m.omega * tau),
            })
            .collect();
        Self { dim: self.dim, modes }
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                omega: m.omega,
                coeff: &m.coeff * alpha,
            })
            .collect();
        Self::new(self.dim, modes).expect("scaled modes")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        Self::new(self.dim, modes)
    }

    /// `sum_k ||coeff_k||`, an upper bound for the sup norm over R.
    pub fn coeff_norm_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.coeff.norm()).sum()
    }

    /// Scalar polynomial carrying coordinate `i` of every mode.
    pub fn coordinate(&self, i: usize) -> Result<Self> {
        if i >= self.dim {
            return Err(Error::InvalidInput(format!(
                "coordinate {i} out of range for dim {}",
                self.dim
            )));
        }
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                omega: m.omega,
                coeff: DVector::from_element(1, m.coeff[i]),
            })
            .collect();
        Self::new(1, modes)
    }

    /// Pointwise product of two scalar polynomials; frequencies add.
    pub fn mul_scalar(&self, other: &Self) -> Result<Self> {
        if self.dim != 1 || other.dim != 1 {
            return Err(Error::InvalidInput(
                "mul_scalar requires scalar polynomials".into(),
            ));
        }
        let mut modes = Vec::with_capacity(self.modes.len() * other.modes.len());
        for a in &self.modes {
            for b in &other.modes {
                modes.push(Mode {
                    omega: a.omega + b.omega,
                    coeff: DVector::from_element(1, a.coeff[0] * b.coeff[0]),
                });
            }
        }
        Self::new(1, modes)
    }

    /// True when every frequency is an integer multiple of `2*pi`, i.e.
    /// the function has period 1.
    pub fn is_one_periodic(&self) -> bool {
        self.modes.iter().all(|m| {
            let k = (m.omega / TAU).round();
            (m.omega - k * TAU).abs() <= 1e-9 * (1.0 + m.omega.abs())
        })
    }
}

/// Uniform samples of a bounded function on a finite window.
///
/// No implicit periodic extension: any operation needing values outside
/// `[t0, t0 + (n-1) dt]` fails instead of extrapolating.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    t0: f64,
    dt: f64,
    samples: Vec<DVector<Complex64>>,
}

impl GridFunction {
    pub fn new(t0: f64, dt: f64, samples: Vec<DVector<Complex64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput("sample step must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        let dim = samples[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("samples must be nonempty vectors".into()));
        }
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        Ok(Self { t0, dt, samples })
    }

    /// Sample `f` at `t0 + j dt` for `j = 0..n`.
    pub fn from_fn<F>(t0: f64, dt: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DVector<Complex64>,
    {
        let samples = (0..n).map(|j| f(t0 + j as f64 * dt)).collect();
        Self::new(t0, dt, samples)
    }

    pub fn sample_trig(f: &TrigPolynomial, t0: f64, dt: f64, n: usize) -> Result<Self> {
        Self::from_fn(t0, dt, n, |t| f.eval(t))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.samples.len() - 1) as f64 * self.dt
    }

    pub fn window_length(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    pub fn time_at(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn samples(&self) -> &[DVector<Complex64>] {
        &self.samples
    }

    /// Index of the sample at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.dt;
        let j = x.round();
        if (x - j).abs() > GRID_TOL {
            return Err(Error::OffGridTime { t });
        }
        if j < 0.0 || j >= self.samples.len() as f64 {
            return Err(Error::WindowOutOfDomain {
                lo: t,
                hi: t,
                dom_lo: self.t0,
                dom_hi: self.t_end(),
            });
        }
        Ok(j as usize)
    }

    pub fn value_at(&self, t: f64) -> Result<&DVector<Complex64>> {
        Ok(&self.samples[self.index_of(t)?])
    }

    /// `S(tau)` on the grid. `tau` must be an integer multiple of `dt`;
    /// the window shrinks by `|tau|` because no extrapolation is done.
    pub fn translate(&self, tau: f64) -> Result<Self> {
        let k = (tau / self.dt).round();
        if (tau - k * self.dt).abs() > 1e-12 * self.dt.max(tau.abs()) {
            return Err(Error::NonCommensurateShift { tau, dt: self.dt });
        }
        let k = k as i64;
        let n = self.samples.len() as i64;
        if k.unsigned_abs() as i64 >= n - 1 {
            return Err(Error::WindowTooShort(format!(
                "shift by {tau} leaves fewer than 2 samples"
            )));
        }
        let (t0, samples) = if k >= 0 {
            (self.t0, self.samples[k as usize..].to_vec())
        } else {
            let m = (-k) as usize;
            (
                self.t0 + m as f64 * self.dt,
                self.samples[..self.samples.len() - m].to_vec(),
            )
        };
        Self::new(t0, self.dt, samples)
    }

    /// Largest sample norm over the sub-window `[lo, hi]`.
    pub fn sup_norm(&self, lo: f64, hi: f64, dt_probe: f64) -> Result<f64> {
        let tol = GRID_TOL * self.dt;
        if lo > hi {
            return Err(Error::InvalidInput("empty window".into()));
        }
        if lo < self.t0 - tol || hi > self.t_end() + tol {
            return Err(Error::WindowOutOfDomain {
                lo,
                hi,
                dom_lo: self.t0,
                dom_hi: self.t_end(),
            });
        }
        let j_lo = ((lo - self.t0) / self.dt).ceil().max(0.0) as usize;
        let j_hi = (((hi - self.t0) / self.dt).floor() as usize).min(self.samples.len() - 1);
        let stride = (dt_probe / self.dt).round().max(1.0) as usize;
        let mut sup: f64 = 0.0;
        let mut j = j_lo;
        while j <= j_hi {
            sup = sup.max(self.samples[j].norm());
            j += stride;
        }
        sup = sup.max(self.samples[j_hi].norm());
        Ok(sup)
    }
}

/// Borrowed view of either bounded-function carrier.
#[derive(Clone, Copy)]
pub enum FuncRef<'a> {
    Trig(&'a TrigPolynomial),
    Grid(&'a GridFunction),
}

impl<'a> From<&'a TrigPolynomial> for FuncRef<'a> {
    fn from(f: &'a TrigPolynomial) -> Self {
        FuncRef::Trig(f)
    }
}

impl<'a> From<&'a GridFunction> for FuncRef<'a> {
    fn from(g: &'a GridFunction) -> Self {
        FuncRef::Grid(g)
    }
}

impl FuncRef<'_> {
    pub fn dim(&self) -> usize {
        match self {
            FuncRef::Trig(f) => f.dim(),
            FuncRef::Grid(g) => g.dim(),
        }
    }
}

/// A bounded function that can be evaluated pointwise. Grid-backed
/// signals only answer on their sample grid. Implementations are
/// immutable values, safe to probe from many threads at once.
pub trait Signal: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> Result<DVector<Complex64>>;
}

impl Signal for TrigPolynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64) -> Result<DVector<Complex64>> {
        Ok(TrigPolynomial::eval(self, t))
    }
}

impl Signal for GridFunction {
    fn dim(&self) -> usize {
        GridFunction::dim(self)
    }

    fn eval(&self, t: f64) -> Result<DVector<Complex64>> {
        self.value_at(t).cloned()
    }
}

impl Signal for FuncRef<'_> {
    fn dim(&self) -> usize {
        FuncRef::dim(self)
    }

    fn eval(&self, t: f64) -> Result<DVector<Complex64>> {
        match self {
            FuncRef::Trig(f) => Signal::eval(*f, t),
            FuncRef::Grid(g) => Signal::eval(*g, t),
        }
    }
}

/// Finite-window sup-norm estimate: the max of `||g(t)||` over probe
/// points `lo, lo + dt_probe, ..., hi`.
pub fn sup_norm(g: FuncRef<'_>, window: (f64, f64), dt_probe: f64) -> Result<f64> {
    let (lo, hi) = window;
    if !(dt_probe > 0.0) {
        return Err(Error::InvalidInput("probe step must be positive".into()));
    }
    if lo > hi {
        return Err(Error::InvalidInput("empty window".into()));
    }
    match g {
        FuncRef::Grid(g) => g.sup_norm(lo, hi, dt_probe),
        FuncRef::Trig(f) => {
            let n = ((hi - lo) / dt_probe).floor() as usize;
            let mut sup: f64 = 0.0;
            for j in 0..=n {
                sup = sup.max(f.eval(lo + j as f64 * dt_probe).norm());
            }
            sup = sup.max(f.eval(hi).norm());
            Ok(sup)
        }
    }
}

/// Samples of `sin(1 / (2 + cos t + cos sqrt(2) t))`, the classical
/// example of an almost automorphic function that is not uniformly
/// continuous. Values lie in `[-1, 1]`; the denominator stays positive.
pub fn make_levitan(window: (f64, f64), dt: f64) -> Result<GridFunction> {
    let (lo, hi) = window;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    if hi <= lo {
        return Err(Error::InvalidInput("empty window".into()));
    }
    let n = ((hi - lo) / dt).floor() as usize + 1;
    GridFunction::from_fn(lo, dt, n.max(2), |t| {
        let denom = 2.0 + t.cos() + (std::f64::consts::SQRT_2 * t).cos();
        DVector::from_element(1, Complex64::new((1.0 / denom).sin(), 0.0))
    })
}

/// Finite set of unit-circle angles with per-angle detection scores.
///
/// Angles are kept sorted in `[0, 2*pi)` with consecutive entries at
/// least `angular_resolution` apart; membership is metric.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitCircleSet {
    angles: Vec<f64>,
    scores: Vec<f64>,
    angular_resolution: f64,
}

impl UnitCircleSet {
    /// Build from `(angle, score)` pairs. Angles are wrapped to
    /// `[0, 2*pi)`; clusters closer than the resolution merge, keeping
    /// the entry with the highest score.
    pub fn from_scored_angles(pairs: &[(f64, f64)], angular_resolution: f64) -> Result<Self> {
        if !(angular_resolution > 0.0) {
            return Err(Error::InvalidInput(
                "angular resolution must be positive".into(),
            ));
        }
        let mut items: Vec<(f64, f64)> = pairs
            .iter()
            .map(|&(a, s)| (wrap_angle(a), s))
            .collect();
        items.sort_by(|x, y| x.0.total_cmp(&y.0));
        // merge clusters, including across the 0 / 2*pi seam
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(items.len());
        for (a, s) in items {
            match merged.last_mut() {
                Some(last) if a - last.0 < angular_resolution => {
                    if s > last.1 {
                        *last = (a, s);
                    }
                }
                _ => merged.push((a, s)),
            }
        }
        while merged.len() > 1 {
            let first = merged[0];
            let last = *merged.last().unwrap();
            if circular_distance(first.0, last.0) < angular_resolution {
                if last.1 > first.1 {
                    merged[0] = (first.0, last.1);
                }
                merged.pop();
            } else {
                break;
            }
        }
        let (angles, scores) = merged.into_iter().unzip();
        Ok(Self {
            angles,
            scores,
            angular_resolution,
        })
    }

    pub fn from_angles(angles: &[f64], angular_resolution: f64) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = angles.iter().map(|&a| (a, 1.0)).collect();
        Self::from_scored_angles(&pairs, angular_resolution)
    }

    pub fn empty(angular_resolution: f64) -> Self {
        Self {
            angles: Vec::new(),
            scores: Vec::new(),
            angular_resolution,
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn angular_resolution(&self) -> f64 {
        self.angular_resolution
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    /// Metric membership: true when some listed angle is closer than
    /// the angular resolution.
    pub fn contains(&self, theta: f64) -> bool {
        self.min_distance(theta)
            .map(|d| d < self.angular_resolution)
            .unwrap_or(false)
    }

    /// Distance from `theta` to the nearest listed angle.
    pub fn min_distance(&self, theta: f64) -> Option<f64> {
        let theta = wrap_angle(theta);
        self.angles
            .iter()
            .map(|&a| circular_distance(a, theta))
            .min_by(f64::total_cmp)
    }

    /// Symmetric Hausdorff distance in angle metric. Empty vs nonempty
    /// is infinite; empty vs empty is zero.
    pub fn hausdorff_distance(&self, other: &Self) -> f64 {
        match (self.is_empty(), other.is_empty()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => f64::INFINITY,
            (false, false) => {
                let one_way = |from: &Self, to: &Self| {
                    from.angles
                        .iter()
                        .map(|&a| to.min_distance(a).unwrap())
                        .fold(0.0_f64, f64::max)
                };
                one_way(self, other).max(one_way(other, self))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_constant_function() {
        let f = TrigPolynomial::new(
            2,
            vec![Mode {
                omega: 0.0,
                coeff: DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            }],
        )
        .unwrap();
        let v = f.eval(5.0);
        assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eval_half_turn() {
        let f = TrigPolynomial::scalar(&[(std::f64::consts::PI, c(1.0, 0.0))]);
        let v = f.eval(1.0);
        assert_abs_diff_eq!(v[0].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eval_sqrt2_period() {
        let w = std::f64::consts::SQRT_2;
        let f = TrigPolynomial::scalar(&[(w, c(1.0, 0.0))]);
        let a = f.eval(0.0);
        let b = f.eval(TAU / w);
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn translate_constant_invariant() {
        let f = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let g = f.translate(7.0);
        assert_eq!(f, g);
    }

    #[test]
    fn translate_half_turn_flips_sign() {
        let f = TrigPolynomial::scalar(&[(std::f64::consts::PI, c(1.0, 0.0))]);
        let g = f.translate(1.0);
        assert_abs_diff_eq!(g.modes()[0].coeff[0].re, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn translate_grid_off_grid_errors() {
        let g = GridFunction::from_fn(0.0, 0.1, 20, |_| DVector::from_element(1, c(1.0, 0.0)))
            .unwrap();
        match g.translate(0.25) {
            Err(Error::NonCommensurateShift { .. }) => {}
            other => panic!("expected NonCommensurateShift, got {other:?}"),
        }
    }

    #[test]
    fn translate_grid_shrinks_window() {
        let g = GridFunction::from_fn(0.0, 0.5, 10, |t| DVector::from_element(1, c(t, 0.0)))
            .unwrap();
        let h = g.translate(1.0).unwrap();
        assert_eq!(h.len(), 8);
        assert_abs_diff_eq!(h.t0(), 0.0, epsilon = 1e-15);
        // h(t) = g(t + 1)
        assert_abs_diff_eq!(h.value_at(0.0).unwrap()[0].re, 1.0, epsilon = 1e-15);
        let neg = g.translate(-1.0).unwrap();
        assert_eq!(neg.len(), 8);
        assert_abs_diff_eq!(neg.t0(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(neg.value_at(1.0).unwrap()[0].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sup_norm_constant_vector() {
        let f = TrigPolynomial::constant(DVector::from_vec(vec![c(3.0, 0.0), c(4.0, 0.0)]));
        let n = sup_norm(FuncRef::Trig(&f), (0.0, 10.0), 0.5).unwrap();
        assert_abs_diff_eq!(n, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn sup_norm_unit_oscillation() {
        let f = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0))]);
        let n = sup_norm(FuncRef::Trig(&f), (0.0, 10.0), 0.01).unwrap();
        assert!((0.999..=1.0).contains(&n), "sup = {n}");
    }

    #[test]
    fn sup_norm_two_mode_peak() {
        let f = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0)), (TAU, c(1.0, 0.0))]);
        let n = sup_norm(FuncRef::Trig(&f), (0.0, 1.0), 0.01).unwrap();
        assert!((1.99..=2.0 + 1e-12).contains(&n), "sup = {n}");
    }

    #[test]
    fn sup_norm_grid_window_check() {
        let g = GridFunction::from_fn(0.0, 0.1, 11, |_| DVector::from_element(1, c(1.0, 0.0)))
            .unwrap();
        assert!(matches!(
            sup_norm(FuncRef::Grid(&g), (0.5, 2.0), 0.1),
            Err(Error::WindowOutOfDomain { .. })
        ));
    }

    #[test]
    fn levitan_values() {
        let g = make_levitan((0.0, 50.0), 0.01).unwrap();
        // value at t = 0 is sin(1/4)
        assert_abs_diff_eq!(
            g.value_at(0.0).unwrap()[0].re,
            (0.25_f64).sin(),
            epsilon = 1e-15
        );
        for (j, s) in g.samples().iter().enumerate() {
            let v = s[0].re;
            assert!((-1.0..=1.0).contains(&v), "sample {j} out of range");
            let t = g.time_at(j);
            assert!(2.0 + t.cos() + (std::f64::consts::SQRT_2 * t).cos() > 0.0);
        }
    }

    #[test]
    fn translation_group_law_exact_on_trig() {
        let f = TrigPolynomial::scalar(&[
            (0.7, c(1.0, -0.3)),
            (std::f64::consts::SQRT_2, c(0.2, 0.5)),
        ]);
        let lhs = f.translate(0.3).translate(1.1);
        let rhs = f.translate(1.4);
        for (a, b) in lhs.modes().iter().zip(rhs.modes()) {
            assert_abs_diff_eq!((a.coeff[0] - b.coeff[0]).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn forward_backward_shift_is_identity() {
        let f = TrigPolynomial::scalar(&[(1.3, c(0.4, 0.9)), (-2.0, c(1.0, 0.0))]);
        let g = f.translate(1.0).translate(-1.0);
        for (a, b) in f.modes().iter().zip(g.modes()) {
            assert_abs_diff_eq!((a.coeff[0] - b.coeff[0]).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_group_law_commensurate() {
        let f = TrigPolynomial::scalar(&[(1.1, c(1.0, 0.0))]);
        let g = GridFunction::sample_trig(&f, 0.0, 0.25, 41).unwrap();
        let lhs = g.translate(0.5).unwrap().translate(0.75).unwrap();
        let rhs = g.translate(1.25).unwrap();
        // compare on the common window
        let lo = lhs.t0().max(rhs.t0());
        let hi = lhs.t_end().min(rhs.t_end());
        let mut t = lo;
        while t <= hi + 1e-12 {
            let a = lhs.value_at(t).unwrap();
            let b = rhs.value_at(t).unwrap();
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
            t += 0.25;
        }
    }

    #[test]
    fn unit_circle_set_merges_and_wraps() {
        let s = UnitCircleSet::from_scored_angles(
            &[(0.0, 1.0), (TAU - 1e-4, 2.0), (1.0, 0.5)],
            1e-2,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(0.0));
        assert!(s.contains(1.0));
        assert!(!s.contains(2.0));
        assert_abs_diff_eq!(s.scores()[0], 2.0, epsilon = 0.0);
    }

    #[test]
    fn hausdorff_distance_basics() {
        let a = UnitCircleSet::from_angles(&[0.0, 1.0], 1e-3).unwrap();
        let b = UnitCircleSet::from_angles(&[0.1, 1.0], 1e-3).unwrap();
        assert_abs_diff_eq!(a.hausdorff_distance(&b), 0.1, epsilon = 1e-12);
        let e = UnitCircleSet::empty(1e-3);
        assert_eq!(e.hausdorff_distance(&e), 0.0);
        assert!(a.hausdorff_distance(&e).is_infinite());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_scalar_poly() -> impl Strategy<Value = TrigPolynomial> {
            proptest::collection::vec((-8.0..8.0f64, -2.0..2.0f64, -2.0..2.0f64), 1..5).prop_map(
                |modes| {
                    let modes: Vec<(f64, Complex64)> = modes
                        .into_iter()
                        .map(|(w, re, im)| (w, Complex64::new(re, im)))
                        .collect();
                    TrigPolynomial::scalar(&modes)
                },
            )
        }

        proptest! {
            #[test]
            fn translate_matches_shifted_eval(f in arb_scalar_poly(),
                                              t in -5.0..5.0f64,
                                              tau in -5.0..5.0f64) {
                let lhs = f.translate(tau).eval(t);
                let rhs = f.eval(t + tau);
                prop_assert!((lhs - rhs).norm() < 1e-10);
            }

            #[test]
            fn sup_norm_below_coefficient_sum(f in arb_scalar_poly()) {
                let bound = f.coeff_norm_sum();
                let sup = sup_norm(FuncRef::Trig(&f), (0.0, 20.0), 0.05).unwrap();
                prop_assert!(sup <= bound + 1e-9);
            }

            #[test]
            fn group_law_on_trig(f in arb_scalar_poly(),
                                 tau1 in -3.0..3.0f64,
                                 tau2 in -3.0..3.0f64,
                                 t in -2.0..2.0f64) {
                let lhs = f.translate(tau1).translate(tau2).eval(t);
                let rhs = f.translate(tau1 + tau2).eval(t);
                prop_assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }
}
