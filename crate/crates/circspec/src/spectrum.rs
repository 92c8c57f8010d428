//! The transform `R(lambda, S) g`, circular-spectrum detection, and the
//! Carleman transform/spectrum.
//!
//! A point `e^{i theta}` on the unit circle belongs to the circular
//! spectrum of `g` when the transform blows up as `lambda` approaches
//! the circle at angle `theta`. Numerically we fit the growth exponent
//! `s` in `||R((1+delta) e^{i theta}, S) g|| ~ delta^{-s}` over a ladder
//! of radial offsets and flag angles whose fitted exponent clears a
//! threshold: a simple pole fits `s ~ 1`, a regular point `s ~ 0`.
//!
//! Trigonometric polynomials are eigenvector sums of the translation,
//! so their transform has the closed form
//! `sum_k a_k e^{i omega_k t} / (lambda - e^{i omega_k})` and their
//! spectrum is read off exactly; sampled functions go through the
//! truncated Neumann series and are reported as detected, not certified.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::funcspace::{
    circular_distance, wrap_angle, FuncRef, GridFunction, TrigPolynomial, UnitCircleSet, TAU,
};
use crate::par::map_indexed;
use crate::quad;

/// `lambda` must keep this distance from the unit circle.
pub const CIRCLE_EXCLUSION: f64 = 1e-6;

/// Numerical policy for resolvent probing and spectrum detection.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSettings {
    /// Truncation tolerance for the Neumann series tail.
    pub series_tol: f64,
    /// Cap on the number of series terms (one unit translation each).
    pub max_terms: usize,
    /// Distances from the unit circle, strictly decreasing.
    pub radial_deltas: Vec<f64>,
    /// Number of equispaced angles probed on the circle.
    pub angle_grid: usize,
    /// Fitted exponent at or above which an angle counts as spectral.
    pub blowup_threshold: f64,
}

impl Default for ResolventSettings {
    fn default() -> Self {
        Self {
            series_tol: 1e-10,
            max_terms: 80,
            radial_deltas: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            angle_grid: 720,
            blowup_threshold: 0.5,
        }
    }
}

impl ResolventSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_tol > 0.0) {
            return Err(Error::InvalidInput("series_tol must be positive".into()));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidInput("max_terms must be positive".into()));
        }
        if self.radial_deltas.is_empty() {
            return Err(Error::InvalidInput("radial_deltas must be nonempty".into()));
        }
        for pair in self.radial_deltas.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::InvalidInput(
                    "radial_deltas must be strictly decreasing".into(),
                ));
            }
        }
        if self.radial_deltas.iter().any(|&d| !(d > 0.0) || d >= 0.5) {
            return Err(Error::InvalidInput(
                "radial deltas must lie in (0, 0.5)".into(),
            ));
        }
        if self.angle_grid < 8 {
            return Err(Error::InvalidInput("angle_grid must be at least 8".into()));
        }
        Ok(())
    }

    pub fn angular_resolution(&self) -> f64 {
        TAU / self.angle_grid as f64
    }
}

/// How a spectrum report was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumMethod {
    ClosedForm,
    Neumann,
}

impl SpectrumMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrumMethod::ClosedForm => "closed_form",
            SpectrumMethod::Neumann => "neumann",
        }
    }
}

/// Fitted blow-up exponent at one probed angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleProbe {
    pub theta: f64,
    pub exponent: f64,
}

/// Detected circular spectrum plus the full per-angle exponent profile.
#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub spectrum: UnitCircleSet,
    pub per_angle: Vec<AngleProbe>,
    pub method: SpectrumMethod,
}

fn check_off_circle(lambda: Complex64) -> Result<f64> {
    let modulus = lambda.norm();
    if (modulus - 1.0).abs() <= CIRCLE_EXCLUSION {
        return Err(Error::LambdaOnCircle { modulus });
    }
    Ok(modulus)
}

/// Closed form `(R(lambda, S) g)(t) = sum_k a_k e^{i omega_k t} / (lambda - e^{i omega_k})`.
pub fn closed_form_resolvent(
    g: &TrigPolynomial,
    lambda: Complex64,
    t: f64,
) -> Result<DVector<Complex64>> {
    check_off_circle(lambda)?;
    let mut v = DVector::from_element(g.dim(), Complex64::new(0.0, 0.0));
    for m in g.modes() {
        let pole = lambda - Complex64::from_polar(1.0, m.omega);
        let factor = Complex64::from_polar(1.0, m.omega * t) / pole;
        v.zip_apply(&m.coeff, |out, c| *out += factor * c);
    }
    Ok(v)
}

/// Number of Neumann terms needed to push the geometric tail bound
/// below `tol`, before the `max_terms` cap.
fn tail_terms(modulus: f64, g_norm: f64, tol: f64) -> usize {
    let q = if modulus > 1.0 { modulus } else { 1.0 / modulus };
    let gap = (modulus - 1.0).abs();
    if g_norm == 0.0 {
        return 1;
    }
    let needed = (g_norm / (tol * gap)).ln() / q.ln();
    if needed <= 1.0 {
        1
    } else if needed >= 1e9 {
        usize::MAX
    } else {
        needed.ceil() as usize
    }
}

/// Truncated Neumann series for a sampled function.
///
/// Outside the circle the series walks forward along the grid,
/// `sum_n lambda^{-(n+1)} g(t + n)`; inside it walks backward,
/// `-sum_n lambda^n g(t - n - 1)`. Fails if the needed translates
/// leave the window before the tail bound reaches `series_tol` or the
/// `max_terms` cap.
pub fn neumann_resolvent(
    g: &GridFunction,
    lambda: Complex64,
    t: f64,
    settings: &ResolventSettings,
) -> Result<DVector<Complex64>> {
    let modulus = check_off_circle(lambda)?;
    let g_norm = g
        .samples()
        .iter()
        .map(|s| s.norm())
        .fold(0.0_f64, f64::max);
    let n_terms = tail_terms(modulus, g_norm, settings.series_tol).min(settings.max_terms);
    let mut acc = DVector::from_element(g.dim(), Complex64::new(0.0, 0.0));
    if modulus > 1.0 {
        let last = t + (n_terms - 1) as f64;
        if last > g.t_end() + 1e-9 {
            return Err(Error::WindowTooShort(format!(
                "Neumann series needs samples up to t = {last}, window ends at {}",
                g.t_end()
            )));
        }
        let inv = Complex64::new(1.0, 0.0) / lambda;
        let mut coef = inv;
        for n in 0..n_terms {
            let sample = g.value_at(t + n as f64)?;
            acc.zip_apply(sample, |out, s| *out += coef * s);
            coef *= inv;
        }
    } else {
        let first = t - n_terms as f64;
        if first < g.t0() - 1e-9 {
            return Err(Error::WindowTooShort(format!(
                "Neumann series needs samples down to t = {first}, window starts at {}",
                g.t0()
            )));
        }
        let mut coef = Complex64::new(-1.0, 0.0);
        for n in 0..n_terms {
            let sample = g.value_at(t - (n as f64) - 1.0)?;
            acc.zip_apply(sample, |out, s| *out += coef * s);
            coef *= lambda;
        }
    }
    Ok(acc)
}

/// `(R(lambda, S) g)(t)` for either carrier.
pub fn resolvent_apply(
    g: FuncRef<'_>,
    lambda: Complex64,
    t: f64,
    settings: &ResolventSettings,
) -> Result<DVector<Complex64>> {
    match g {
        FuncRef::Trig(f) => closed_form_resolvent(f, lambda, t),
        FuncRef::Grid(gr) => neumann_resolvent(gr, lambda, t, settings),
    }
}

/// Probe times used to estimate `sup_t ||R(lambda, S) g (t)||` for
/// smooth inputs.
fn trig_probe_times() -> Vec<f64> {
    (0..=64).map(|j| j as f64 * 0.25).collect()
}

/// On-grid probe times whose forward translates up to `reach` units
/// stay inside the window.
fn grid_probe_times(g: &GridFunction, reach: f64) -> Result<Vec<f64>> {
    let usable = g.window_length() - reach;
    if usable < 0.0 {
        return Err(Error::WindowTooShort(format!(
            "window of length {} cannot host probes needing {reach} forward units",
            g.window_length()
        )));
    }
    let count = 8usize;
    let mut ts = Vec::with_capacity(count);
    for i in 0..count {
        let t_raw = g.t0() + usable * i as f64 / (count - 1) as f64;
        let j = ((t_raw - g.t0()) / g.dt()).floor().max(0.0) as usize;
        let t = g.time_at(j.min(g.len() - 1));
        if ts.last().map(|&p| p < t).unwrap_or(true) {
            ts.push(t);
        }
    }
    Ok(ts)
}

fn profile_at_angle(
    g: FuncRef<'_>,
    theta: f64,
    deltas: &[f64],
    probe_ts: &[f64],
    settings: &ResolventSettings,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let lambda = Complex64::from_polar(1.0 + delta, theta);
        let mut sup: f64 = 0.0;
        for &t in probe_ts {
            let v = resolvent_apply(g, lambda, t, settings)?;
            sup = sup.max(v.norm());
        }
        out.push((delta, sup));
    }
    Ok(out)
}

/// Finite-window estimates of `||R((1+delta) e^{i theta}, S) g||` over
/// the delta ladder.
pub fn resolvent_norm_profile(
    g: FuncRef<'_>,
    theta: f64,
    settings: &ResolventSettings,
) -> Result<Vec<(f64, f64)>> {
    settings.validate()?;
    match g {
        FuncRef::Trig(_) => profile_at_angle(g, theta, &settings.radial_deltas, &trig_probe_times(), settings),
        FuncRef::Grid(gr) => {
            let (deltas, reach) = usable_deltas(gr, settings)?;
            let ts = grid_probe_times(gr, reach)?;
            profile_at_angle(g, theta, &deltas, &ts, settings)
        }
    }
}

/// Least-squares slope of `ln(norm)` against `ln(1/delta)`.
fn fit_exponent(profile: &[(f64, f64)]) -> f64 {
    let n = profile.len() as f64;
    if profile.len() < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = profile.iter().map(|&(d, _)| d.ln()).collect();
    let ys: Vec<f64> = profile.iter().map(|&(_, v)| v.max(1e-300).ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let var: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if var == 0.0 {
        return 0.0;
    }
    -(cov / var)
}

/// Radial deltas that the truncated series can actually resolve on this
/// window: the term count reaches at least `2 / ln(1 + delta)` so the
/// geometric sum captures most of the `1/delta` mass. Returns the
/// usable ladder and the forward reach (in time units) the probes need.
fn usable_deltas(g: &GridFunction, settings: &ResolventSettings) -> Result<(Vec<f64>, f64)> {
    let g_norm = g
        .samples()
        .iter()
        .map(|s| s.norm())
        .fold(0.0_f64, f64::max);
    let mut usable = Vec::new();
    let mut reach = 0usize;
    for &delta in &settings.radial_deltas {
        let modulus = 1.0 + delta;
        let n_terms = tail_terms(modulus, g_norm, settings.series_tol).min(settings.max_terms);
        if n_terms as f64 * modulus.ln() >= 2.0 {
            usable.push(delta);
            reach = reach.max(n_terms);
        }
    }
    if usable.len() < 2 {
        return Err(Error::WindowTooShort(format!(
            "window/max_terms resolve {} of {} radial deltas; need at least 2",
            usable.len(),
            settings.radial_deltas.len()
        )));
    }
    Ok((usable, reach as f64))
}

/// Detect the circular spectrum.
///
/// Trigonometric polynomials bypass detection: the spectrum is exactly
/// the set of mode angles, and the per-angle exponent profile is still
/// computed from the closed form so every spectral angle carries its
/// fitted blow-up exponent. Sampled inputs run the truncated Neumann
/// series over the angle grid and cluster contiguous flagged angles.
pub fn circular_spectrum(g: FuncRef<'_>, settings: &ResolventSettings) -> Result<SpectrumReport> {
    settings.validate()?;
    let resolution = settings.angular_resolution();
    match g {
        FuncRef::Trig(f) => {
            let exact: Vec<f64> = f
                .modes()
                .iter()
                .map(|m| wrap_angle(m.omega))
                .collect();
            let mut probe_angles: Vec<f64> = (0..settings.angle_grid)
                .map(|i| i as f64 * resolution)
                .collect();
            probe_angles.extend(exact.iter().copied());
            probe_angles.sort_by(f64::total_cmp);
            probe_angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let ts = trig_probe_times();
            let probes = map_indexed(probe_angles.len(), |i| {
                let theta = probe_angles[i];
                let profile = profile_at_angle(g, theta, &settings.radial_deltas, &ts, settings)
                    .expect("closed-form profile cannot fail off the circle");
                AngleProbe {
                    theta,
                    exponent: fit_exponent(&profile),
                }
            });
            let scored: Vec<(f64, f64)> = exact
                .iter()
                .map(|&a| {
                    let exponent = probes
                        .iter()
                        .filter(|p| circular_distance(p.theta, a) < 1e-9)
                        .map(|p| p.exponent)
                        .fold(0.0_f64, f64::max);
                    (a, exponent)
                })
                .collect();
            Ok(SpectrumReport {
                spectrum: UnitCircleSet::from_scored_angles(&scored, resolution)?,
                per_angle: probes,
                method: SpectrumMethod::ClosedForm,
            })
        }
        FuncRef::Grid(gr) => {
            if gr.window_length() < 2.0 * settings.max_terms as f64 {
                return Err(Error::WindowTooShort(format!(
                    "grid spectrum needs window length >= {}, got {}",
                    2.0 * settings.max_terms as f64,
                    gr.window_length()
                )));
            }
            let (deltas, reach) = usable_deltas(gr, settings)?;
            let ts = grid_probe_times(gr, reach)?;
            let probes: Vec<Result<AngleProbe>> = map_indexed(settings.angle_grid, |i| {
                let theta = i as f64 * resolution;
                let profile = profile_at_angle(g, theta, &deltas, &ts, settings)?;
                Ok(AngleProbe {
                    theta,
                    exponent: fit_exponent(&profile),
                })
            });
            let probes: Vec<AngleProbe> = probes.into_iter().collect::<Result<_>>()?;
            let spectrum = cluster_flagged(&probes, settings.blowup_threshold, resolution, true)?;
            Ok(SpectrumReport {
                spectrum,
                per_angle: probes,
                method: SpectrumMethod::Neumann,
            })
        }
    }
}

/// Group contiguous above-threshold probes and keep the peak of each
/// cluster. `wrap` joins clusters across the end of a circular grid.
fn cluster_flagged(
    probes: &[AngleProbe],
    threshold: f64,
    resolution: f64,
    wrap: bool,
) -> Result<UnitCircleSet> {
    let flags: Vec<bool> = probes.iter().map(|p| p.exponent >= threshold).collect();
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for (p, &on) in probes.iter().zip(&flags) {
        if on {
            current = Some(match current {
                Some((_, s)) if p.exponent > s => (p.theta, p.exponent),
                Some(keep) => keep,
                None => (p.theta, p.exponent),
            });
        } else if let Some(peak) = current.take() {
            clusters.push(peak);
        }
    }
    if let Some(peak) = current.take() {
        // run touching the end of the grid: merge with a run touching
        // the start, which wraps around the circle
        if wrap && flags[0] && !clusters.is_empty() && flags[flags.len() - 1] {
            let first = clusters[0];
            if peak.1 > first.1 {
                clusters[0] = peak;
            }
        } else {
            clusters.push(peak);
        }
    }
    UnitCircleSet::from_scored_angles(&clusters, resolution)
}

/// Value of the Carleman transform with a reported tail bound.
#[derive(Clone, Debug)]
pub struct CarlemanValue {
    pub value: DVector<Complex64>,
    /// `||u|| e^{-|Re lambda| T} / |Re lambda|`, the discarded tail.
    pub tail_bound: f64,
    /// Where the quadrature actually stopped (window edge or horizon).
    pub integrated_to: f64,
}

/// Closed form `sum_k a_k / (lambda - i omega_k)` for trig inputs; the
/// independent oracle for the quadrature route.
pub fn carleman_closed_form(u: &TrigPolynomial, lambda: Complex64) -> Result<DVector<Complex64>> {
    if lambda.re == 0.0 {
        return Err(Error::LambdaOnImaginaryAxis { re: lambda.re });
    }
    let mut v = DVector::from_element(u.dim(), Complex64::new(0.0, 0.0));
    for m in u.modes() {
        let denom = lambda - Complex64::new(0.0, m.omega);
        v.zip_apply(&m.coeff, |out, c| *out += c / denom);
    }
    Ok(v)
}

/// Composite-Simpson Carleman transform.
///
/// `Re lambda > 0` integrates `e^{-lambda t} u(t)` over `[0, T]`;
/// `Re lambda < 0` integrates `-e^{lambda t} u(-t)`. Grid inputs are
/// integrated to their window edge when that comes before the horizon,
/// with the truncation point reported; they are never padded.
pub fn carleman_transform(
    u: FuncRef<'_>,
    lambda: Complex64,
    horizon: f64,
) -> Result<CarlemanValue> {
    if lambda.re == 0.0 {
        return Err(Error::LambdaOnImaginaryAxis { re: lambda.re });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let positive = lambda.re > 0.0;
    match u {
        FuncRef::Trig(f) => {
            let content = lambda.im.abs()
                + f.modes()
                    .iter()
                    .map(|m| m.omega.abs())
                    .fold(0.0_f64, f64::max)
                + lambda.re.abs();
            let mut n = ((horizon * (2.0 + content)).ceil() as usize).clamp(64, 1 << 14);
            if n % 2 == 1 {
                n += 1;
            }
            let mut prev: Option<DVector<Complex64>> = None;
            let mut value = DVector::from_element(f.dim(), Complex64::new(0.0, 0.0));
            for _ in 0..8 {
                value = simpson_carleman_trig(f, lambda, horizon, n, positive);
                if let Some(p) = &prev {
                    if (&value - p).norm() < 1e-12 * (1.0 + value.norm()) {
                        break;
                    }
                }
                prev = Some(value.clone());
                if n >= (1 << 20) {
                    break;
                }
                n *= 2;
            }
            let g_norm = f.coeff_norm_sum();
            Ok(CarlemanValue {
                value,
                tail_bound: g_norm * (-lambda.re.abs() * horizon).exp() / lambda.re.abs(),
                integrated_to: horizon,
            })
        }
        FuncRef::Grid(g) => {
            let j_zero = g.index_of(0.0)?;
            let (value, reached) = if positive {
                let t_reach = horizon.min(g.t_end());
                let j_end = g.index_of(g.time_at(((t_reach / g.dt()).floor() as usize + j_zero).min(g.len() - 1)))?;
                simpson_carleman_grid(g, lambda, j_zero, j_end, 1.0)?
            } else {
                let t_reach = horizon.min(-g.t0());
                if t_reach <= 0.0 {
                    return Err(Error::WindowOutOfDomain {
                        lo: -horizon,
                        hi: 0.0,
                        dom_lo: g.t0(),
                        dom_hi: g.t_end(),
                    });
                }
                let j_low = j_zero - ((t_reach / g.dt()).floor() as usize).min(j_zero);
                simpson_carleman_grid(g, lambda, j_zero, j_low, -1.0)?
            };
            let g_norm = g
                .samples()
                .iter()
                .map(|s| s.norm())
                .fold(0.0_f64, f64::max);
            Ok(CarlemanValue {
                value,
                tail_bound: g_norm * (-lambda.re.abs() * reached).exp() / lambda.re.abs(),
                integrated_to: reached,
            })
        }
    }
}

fn simpson_carleman_trig(
    f: &TrigPolynomial,
    lambda: Complex64,
    horizon: f64,
    n: usize,
    positive: bool,
) -> DVector<Complex64> {
    let h = horizon / n as f64;
    let w = quad::simpson_weights(n, h);
    let mut acc = DVector::from_element(f.dim(), Complex64::new(0.0, 0.0));
    for (j, &wj) in w.iter().enumerate() {
        let tau = j as f64 * h;
        let term = if positive {
            (-lambda * tau).exp() * Complex64::new(wj, 0.0)
        } else {
            -(lambda * tau).exp() * Complex64::new(wj, 0.0)
        };
        let sample = if positive { f.eval(tau) } else { f.eval(-tau) };
        acc.zip_apply(&sample, |out, s| *out += term * s);
    }
    acc
}

/// Simpson along the sample grid from index `j_zero` toward `j_far`
/// (`sign` +1 forward in time, -1 backward). Odd trailing interval
/// handled with one trapezoid panel.
fn simpson_carleman_grid(
    g: &GridFunction,
    lambda: Complex64,
    j_zero: usize,
    j_far: usize,
    sign: f64,
) -> Result<(DVector<Complex64>, f64)> {
    let count = j_far.abs_diff(j_zero);
    if count < 2 {
        return Err(Error::WindowTooShort(
            "Carleman quadrature needs at least 2 sample intervals past 0".into(),
        ));
    }
    let h = g.dt();
    let even = count - (count % 2);
    let w = quad::simpson_weights(even, h);
    let mut acc = DVector::from_element(g.dim(), Complex64::new(0.0, 0.0));
    let idx = |step: usize| -> usize {
        if j_far >= j_zero {
            j_zero + step
        } else {
            j_zero - step
        }
    };
    for (step, &wj) in w.iter().enumerate() {
        let tau = step as f64 * h;
        let weight = if sign > 0.0 {
            (-lambda * tau).exp() * Complex64::new(wj, 0.0)
        } else {
            -(lambda * tau).exp() * Complex64::new(wj, 0.0)
        };
        let sample = &g.samples()[idx(step)];
        acc.zip_apply(sample, |out, s| *out += weight * s);
    }
    if even < count {
        // trapezoid on the last interval
        for (step, factor) in [(count - 1, 0.5 * h), (count, 0.5 * h)] {
            let tau = step as f64 * h;
            let weight = if sign > 0.0 {
                (-lambda * tau).exp() * Complex64::new(factor, 0.0)
            } else {
                -(lambda * tau).exp() * Complex64::new(factor, 0.0)
            };
            let sample = &g.samples()[idx(step)];
            acc.zip_apply(sample, |out, s| *out += weight * s);
        }
    }
    Ok((acc, count as f64 * h))
}

/// Fitted blow-up exponent at one probed real frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyProbe {
    pub xi: f64,
    pub exponent: f64,
}

/// Carleman-spectrum detection report.
#[derive(Clone, Debug)]
pub struct CarlemanReport {
    pub frequencies: Vec<f64>,
    pub scores: Vec<f64>,
    pub per_freq: Vec<FrequencyProbe>,
}

/// Detect the Carleman spectrum inside `[range.0, range.1]`.
///
/// A frequency `xi` is flagged when
/// `||u_hat(delta + i xi)|| + ||u_hat(-delta + i xi)||` grows like
/// `delta^{-s}` with `s` at or above the blow-up threshold. Trig inputs
/// use the exact transform; grid inputs use quadrature to the window
/// edge, restricted to deltas the truncated integral can resolve.
pub fn carleman_spectrum(
    u: FuncRef<'_>,
    range: (f64, f64),
    settings: &ResolventSettings,
    horizon: f64,
) -> Result<CarlemanReport> {
    settings.validate()?;
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::InvalidInput("empty frequency range".into()));
    }
    let step = settings.angular_resolution();
    let mut grid: Vec<f64> = Vec::new();
    let mut xi = lo;
    while xi <= hi + 1e-12 {
        grid.push(xi);
        xi += step;
    }
    if let FuncRef::Trig(f) = u {
        for m in f.modes() {
            if m.omega >= lo && m.omega <= hi {
                grid.push(m.omega);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let deltas: Vec<f64> = match u {
        FuncRef::Trig(_) => settings.radial_deltas.clone(),
        FuncRef::Grid(g) => {
            let reach_pos = horizon.min(g.t_end());
            let reach_neg = horizon.min(-g.t0());
            let reach = reach_pos.min(reach_neg);
            if reach <= 0.0 {
                return Err(Error::WindowOutOfDomain {
                    lo: -horizon,
                    hi: horizon,
                    dom_lo: g.t0(),
                    dom_hi: g.t_end(),
                });
            }
            let usable: Vec<f64> = settings
                .radial_deltas
                .iter()
                .copied()
                .filter(|&d| d * reach >= 2.0)
                .collect();
            if usable.len() < 2 {
                return Err(Error::WindowTooShort(format!(
                    "window reach {reach} resolves {} of {} deltas; need at least 2",
                    usable.len(),
                    settings.radial_deltas.len()
                )));
            }
            usable
        }
    };

    let probes: Vec<Result<FrequencyProbe>> = map_indexed(grid.len(), |i| {
        let xi = grid[i];
        let mut profile = Vec::with_capacity(deltas.len());
        for &delta in &deltas {
            let lp = Complex64::new(delta, xi);
            let lm = Complex64::new(-delta, xi);
            let norm = match u {
                FuncRef::Trig(f) => {
                    carleman_closed_form(f, lp)?.norm() + carleman_closed_form(f, lm)?.norm()
                }
                FuncRef::Grid(_) => {
                    carleman_transform(u, lp, horizon)?.value.norm()
                        + carleman_transform(u, lm, horizon)?.value.norm()
                }
            };
            profile.push((delta, norm));
        }
        Ok(FrequencyProbe {
            xi,
            exponent: fit_exponent(&profile),
        })
    });
    let probes: Vec<FrequencyProbe> = probes.into_iter().collect::<Result<_>>()?;

    // cluster contiguous flagged probes on the real line
    let mut frequencies = Vec::new();
    let mut scores = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for p in &probes {
        if p.exponent >= settings.blowup_threshold {
            current = Some(match current {
                Some((x, s)) if s >= p.exponent => (x, s),
                _ => (p.xi, p.exponent),
            });
        } else if let Some((x, s)) = current.take() {
            frequencies.push(x);
            scores.push(s);
        }
    }
    if let Some((x, s)) = current {
        frequencies.push(x);
        scores.push(s);
    }
    Ok(CarlemanReport {
        frequencies,
        scores,
        per_freq: probes,
    })
}

/// Side-by-side comparison of the two spectra of a trig polynomial.
#[derive(Clone, Debug)]
pub struct SpectraComparison {
    pub circular: UnitCircleSet,
    pub carleman_frequencies: Vec<f64>,
    /// `e^{i xi}` for each detected Carleman frequency.
    pub carleman_angles: UnitCircleSet,
    pub hausdorff: f64,
    pub consistent: bool,
}

/// Check `sigma(g) = closure(e^{i sp(g)})` on a trig polynomial: both
/// detectors run, the Carleman frequencies are wrapped onto the circle,
/// and the Hausdorff angular distance is reported.
pub fn compare_spectra(
    g: &TrigPolynomial,
    settings: &ResolventSettings,
) -> Result<SpectraComparison> {
    let circular = circular_spectrum(FuncRef::Trig(g), settings)?.spectrum;
    let (lo, hi) = g
        .modes()
        .iter()
        .map(|m| m.omega)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
            (lo.min(w), hi.max(w))
        });
    let range = if g.is_zero() {
        (-1.0, 1.0)
    } else {
        (lo - 1.0, hi + 1.0)
    };
    let carleman = carleman_spectrum(FuncRef::Trig(g), range, settings, 50.0)?;
    let scored: Vec<(f64, f64)> = carleman
        .frequencies
        .iter()
        .zip(&carleman.scores)
        .map(|(&xi, &s)| (wrap_angle(xi), s))
        .collect();
    let carleman_angles =
        UnitCircleSet::from_scored_angles(&scored, settings.angular_resolution())?;
    let hausdorff = circular.hausdorff_distance(&carleman_angles);
    Ok(SpectraComparison {
        consistent: hausdorff <= settings.angular_resolution(),
        circular,
        carleman_frequencies: carleman.frequencies,
        carleman_angles,
        hausdorff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn settings() -> ResolventSettings {
        ResolventSettings::default()
    }

    #[test]
    fn resolvent_of_constant_at_two() {
        let g = TrigPolynomial::constant(DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        let v = closed_form_resolvent(&g, c(2.0, 0.0), 3.7).unwrap();
        assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1].norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn resolvent_of_half_turn_mode() {
        let g = TrigPolynomial::scalar(&[(std::f64::consts::PI, c(1.0, 0.0))]);
        let v = closed_form_resolvent(&g, c(2.0, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(v[0].re, 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn neumann_matches_closed_form() {
        let w = std::f64::consts::SQRT_2;
        let f = TrigPolynomial::scalar(&[(w, c(1.0, 0.0))]);
        let grid = GridFunction::sample_trig(&f, 0.0, 0.1, 2200).unwrap();
        let mut s = settings();
        s.max_terms = 300;
        let lambda = c(1.5, 0.0);
        let t = 0.7;
        let neumann = neumann_resolvent(&grid, lambda, t, &s).unwrap();
        let closed = closed_form_resolvent(&f, lambda, t).unwrap();
        assert!((neumann - closed).norm() <= 1e-8);
    }

    #[test]
    fn neumann_inside_circle_matches_closed_form() {
        let f = TrigPolynomial::scalar(&[(1.0, c(0.7, 0.2))]);
        let grid = GridFunction::sample_trig(&f, -150.0, 0.125, 2600).unwrap();
        let mut s = settings();
        s.max_terms = 200;
        let lambda = c(0.3, 0.4); // |lambda| = 0.5
        let t = 2.0;
        let neumann = neumann_resolvent(&grid, lambda, t, &s).unwrap();
        let closed = closed_form_resolvent(&f, lambda, t).unwrap();
        assert!((neumann - closed).norm() <= 1e-8);
    }

    #[test]
    fn lambda_on_circle_rejected() {
        let g = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        assert!(matches!(
            closed_form_resolvent(&g, Complex64::from_polar(1.0 + 1e-9, 0.3), 0.0),
            Err(Error::LambdaOnCircle { .. })
        ));
    }

    #[test]
    fn profile_pole_at_zero_is_one_over_delta() {
        let g = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let profile = resolvent_norm_profile(FuncRef::Trig(&g), 0.0, &settings()).unwrap();
        for &(delta, norm) in &profile {
            assert_abs_diff_eq!(norm, 1.0 / delta, epsilon = 1e-9 / delta);
        }
    }

    #[test]
    fn profile_away_from_pole_is_bounded() {
        let g = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let profile =
            resolvent_norm_profile(FuncRef::Trig(&g), std::f64::consts::PI, &settings()).unwrap();
        for &(delta, norm) in &profile {
            // closed form: 1 / (2 + delta)
            assert_abs_diff_eq!(norm, 1.0 / (2.0 + delta), epsilon = 1e-12);
        }
    }

    #[test]
    fn profile_respects_resolvent_norm_bound() {
        let g = TrigPolynomial::scalar(&[(1.0, c(0.8, 0.1)), (2.5, c(0.0, 0.6))]);
        let s = settings();
        let bound_norm = g.coeff_norm_sum();
        for theta in [0.0, 1.0, 2.2, 4.0] {
            let profile = resolvent_norm_profile(FuncRef::Trig(&g), theta, &s).unwrap();
            for &(delta, norm) in &profile {
                assert!(
                    norm <= bound_norm / delta + s.series_tol,
                    "norm {norm} exceeds bound at delta {delta}"
                );
            }
        }
    }

    #[test]
    fn spectrum_of_constant_is_angle_zero() {
        let g = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let rep = circular_spectrum(FuncRef::Trig(&g), &settings()).unwrap();
        assert_eq!(rep.spectrum.len(), 1);
        assert_abs_diff_eq!(rep.spectrum.angles()[0], 0.0, epsilon = 1e-12);
        assert_eq!(rep.method, SpectrumMethod::ClosedForm);
        assert!(rep.spectrum.scores()[0] >= settings().blowup_threshold);
    }

    #[test]
    fn spectrum_sqrt2_and_tau_modes() {
        let w = std::f64::consts::SQRT_2;
        let g = TrigPolynomial::scalar(&[(w, c(1.0, 0.0)), (TAU, c(1.0, 0.0))]);
        let rep = circular_spectrum(FuncRef::Trig(&g), &settings()).unwrap();
        let angles = rep.spectrum.angles();
        assert_eq!(angles.len(), 2);
        assert!(rep.spectrum.contains(0.0));
        assert!(rep.spectrum.contains(w));
    }

    #[test]
    fn spectrum_of_zero_is_empty() {
        let g = TrigPolynomial::zero(2);
        let rep = circular_spectrum(FuncRef::Trig(&g), &settings()).unwrap();
        assert!(rep.spectrum.is_empty());
    }

    #[test]
    fn grid_spectrum_detects_single_pole() {
        let f = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0))]);
        let grid = GridFunction::sample_trig(&f, 0.0, 0.25, 1000).unwrap();
        let mut s = settings();
        s.angle_grid = 360;
        s.max_terms = 80;
        let rep = circular_spectrum(FuncRef::Grid(&grid), &s).unwrap();
        assert_eq!(rep.method, SpectrumMethod::Neumann);
        assert_eq!(rep.spectrum.len(), 1, "angles: {:?}", rep.spectrum.angles());
        assert!(circular_distance(rep.spectrum.angles()[0], 1.0) < 2.0 * s.angular_resolution());
    }

    #[test]
    fn grid_spectrum_window_too_short() {
        let f = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0))]);
        let grid = GridFunction::sample_trig(&f, 0.0, 0.25, 100).unwrap();
        assert!(matches!(
            circular_spectrum(FuncRef::Grid(&grid), &settings()),
            Err(Error::WindowTooShort(_))
        ));
    }

    #[test]
    fn carleman_of_constant() {
        let u = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let closed = carleman_closed_form(&u, c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(closed[0].re, 1.0, epsilon = 1e-14);
        let quadrature = carleman_transform(FuncRef::Trig(&u), c(1.0, 0.0), 50.0).unwrap();
        assert!((quadrature.value[0] - closed[0]).norm() <= quadrature.tail_bound + 1e-8);
    }

    #[test]
    fn carleman_oscillating_mode() {
        let u = TrigPolynomial::scalar(&[(2.0, c(1.0, 0.0))]);
        let closed = carleman_closed_form(&u, c(1.0, 0.0)).unwrap();
        let expected = c(1.0, 0.0) / c(1.0, -2.0);
        assert_abs_diff_eq!((closed[0] - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn carleman_quadrature_agrees_with_closed_form() {
        let u = TrigPolynomial::scalar(&[(1.3, c(0.5, 0.5)), (-0.7, c(0.2, 0.0))]);
        let lambda = c(0.5, 0.0);
        let closed = carleman_closed_form(&u, lambda).unwrap();
        let q = carleman_transform(FuncRef::Trig(&u), lambda, 60.0).unwrap();
        let diff = (q.value - closed).norm();
        assert!(
            diff <= q.tail_bound + 1e-8,
            "difference {diff} vs tail {}",
            q.tail_bound
        );
    }

    #[test]
    fn carleman_negative_real_part() {
        // u(t) = e^{2 i t}: for Re lambda < 0 the transform is
        // -int_0^inf e^{lambda t} e^{-2 i t} dt = 1 / (lambda - 2 i)
        let u = TrigPolynomial::scalar(&[(2.0, c(1.0, 0.0))]);
        let lambda = c(-1.0, 0.0);
        let closed = carleman_closed_form(&u, lambda).unwrap();
        let q = carleman_transform(FuncRef::Trig(&u), lambda, 60.0).unwrap();
        assert!((q.value.clone() - closed).norm() <= q.tail_bound + 1e-8);
    }

    #[test]
    fn carleman_rejects_imaginary_axis() {
        let u = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        assert!(matches!(
            carleman_transform(FuncRef::Trig(&u), c(0.0, 1.0), 50.0),
            Err(Error::LambdaOnImaginaryAxis { .. })
        ));
    }

    #[test]
    fn carleman_spectrum_single_mode() {
        let u = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0))]);
        let rep = carleman_spectrum(FuncRef::Trig(&u), (-4.0, 4.0), &settings(), 50.0).unwrap();
        assert_eq!(rep.frequencies.len(), 1, "{:?}", rep.frequencies);
        assert_abs_diff_eq!(rep.frequencies[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn carleman_spectrum_zero_function_empty() {
        let u = TrigPolynomial::zero(1);
        let rep = carleman_spectrum(FuncRef::Trig(&u), (-2.0, 2.0), &settings(), 50.0).unwrap();
        assert!(rep.frequencies.is_empty());
    }

    #[test]
    fn carleman_spectrum_two_modes() {
        let u = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0)), (-3.0, c(0.5, 0.5))]);
        let rep = carleman_spectrum(FuncRef::Trig(&u), (-5.0, 5.0), &settings(), 50.0).unwrap();
        assert_eq!(rep.frequencies.len(), 2, "{:?}", rep.frequencies);
        assert_abs_diff_eq!(rep.frequencies[0], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rep.frequencies[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn compare_spectra_single_mode() {
        let g = TrigPolynomial::scalar(&[(std::f64::consts::FRAC_PI_3, c(1.0, 0.0))]);
        let cmp = compare_spectra(&g, &settings()).unwrap();
        assert!(cmp.consistent, "hausdorff = {}", cmp.hausdorff);
        assert_abs_diff_eq!(cmp.hausdorff, 0.0, epsilon = 1e-9);
        assert_eq!(cmp.circular.len(), 1);
    }

    #[test]
    fn compare_spectra_constant() {
        let g = TrigPolynomial::scalar(&[(0.0, c(1.0, 0.0))]);
        let cmp = compare_spectra(&g, &settings()).unwrap();
        assert!(cmp.consistent);
        assert!(cmp.circular.contains(0.0));
        assert!(cmp.carleman_angles.contains(0.0));
    }

    #[test]
    fn compare_spectra_wrapped_frequency() {
        // omega = 1 and omega = 1 + 2 pi land on the same circle angle
        // but are two distinct Carleman frequencies.
        let g = TrigPolynomial::scalar(&[(1.0, c(1.0, 0.0)), (1.0 + TAU, c(1.0, 0.0))]);
        let cmp = compare_spectra(&g, &settings()).unwrap();
        assert_eq!(cmp.circular.len(), 1);
        assert_eq!(cmp.carleman_frequencies.len(), 2);
        assert!(cmp.consistent, "hausdorff = {}", cmp.hausdorff);
    }

    #[test]
    fn resolvent_identity_on_closed_forms() {
        // R(lambda) g - R(mu) g = (mu - lambda) R(lambda) R(mu) g.
        // R(mu, S) g is itself a trig polynomial, so both routes are exact.
        let g = TrigPolynomial::scalar(&[(0.9, c(1.0, 0.0)), (2.7, c(0.3, -0.4))]);
        for (lm, mm) in [(1.3, 1.7), (1.3, 0.6), (1.7, 0.6)] {
            let lambda = Complex64::from_polar(lm, 0.4);
            let mu = Complex64::from_polar(mm, 2.0);
            for &t in &[0.0, 0.7, 3.1] {
                let r_lambda = closed_form_resolvent(&g, lambda, t).unwrap();
                let r_mu = closed_form_resolvent(&g, mu, t).unwrap();
                // nest: R(mu) g as a trig polynomial
                let nested_modes: Vec<(f64, Complex64)> = g
                    .modes()
                    .iter()
                    .map(|m| {
                        (
                            m.omega,
                            m.coeff[0] / (mu - Complex64::from_polar(1.0, m.omega)),
                        )
                    })
                    .collect();
                let r_mu_poly = TrigPolynomial::scalar(&nested_modes);
                let r_l_r_mu = closed_form_resolvent(&r_mu_poly, lambda, t).unwrap();
                let lhs = &r_lambda - &r_mu;
                let rhs = &r_l_r_mu * (mu - lambda);
                assert!((lhs - rhs).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn translation_resolvent_identity() {
        // lambda R(lambda, S) S(-1) g = R(lambda, S) g + S(-1) g
        let g = TrigPolynomial::scalar(&[(1.1, c(0.5, 0.2)), (-0.4, c(1.0, 0.0))]);
        let shifted = g.translate(-1.0);
        for lm in [1.5, 0.6] {
            let lambda = Complex64::from_polar(lm, 1.0);
            for &t in &[0.0, 1.3, -2.0] {
                let lhs = closed_form_resolvent(&shifted, lambda, t).unwrap() * lambda;
                let rhs = closed_form_resolvent(&g, lambda, t).unwrap() + shifted.eval(t);
                assert!((lhs - rhs).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_operator_shrinks_spectrum() {
        // sigma(A g) is contained in sigma(g) for a fixed matrix A
        let g = TrigPolynomial::new(
            2,
            vec![
                crate::funcspace::Mode {
                    omega: 0.8,
                    coeff: DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]),
                },
                crate::funcspace::Mode {
                    omega: 2.0,
                    coeff: DVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]),
                },
            ],
        )
        .unwrap();
        // A kills the second coordinate entirely
        let a_g = TrigPolynomial::new(
            2,
            g.modes()
                .iter()
                .map(|m| crate::funcspace::Mode {
                    omega: m.omega,
                    coeff: DVector::from_vec(vec![m.coeff[0], c(0.0, 0.0)]),
                })
                .collect(),
        )
        .unwrap();
        let s = settings();
        let spec_g = circular_spectrum(FuncRef::Trig(&g), &s).unwrap().spectrum;
        let spec_ag = circular_spectrum(FuncRef::Trig(&a_g), &s).unwrap().spectrum;
        for &a in spec_ag.angles() {
            assert!(spec_g.contains(a));
        }
    }

    #[test]
    fn resolvent_linearity() {
        let g = TrigPolynomial::scalar(&[(0.5, c(1.0, 0.0))]);
        let h = TrigPolynomial::scalar(&[(1.9, c(0.0, 1.0))]);
        let alpha = c(0.7, -0.1);
        let beta = c(-0.2, 0.9);
        let combo = g.scale(alpha).add(&h.scale(beta)).unwrap();
        let lambda = c(1.4, 0.3);
        for &t in &[0.0, 2.2] {
            let lhs = closed_form_resolvent(&combo, lambda, t).unwrap();
            let rhs = closed_form_resolvent(&g, lambda, t).unwrap() * alpha
                + closed_form_resolvent(&h, lambda, t).unwrap() * beta;
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
