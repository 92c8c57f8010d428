//! File schemas and report serialization.
//!
//! JSON reports print every float with 17 significant digits through a
//! custom formatter, so identical runs produce byte-identical files and
//! values round-trip exactly. Writes go to a temporary file first and
//! are renamed into place.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{GridFunction, Mode, TrigPolynomial};
use crate::ode::{CMatrix, IntegrationSettings};
use crate::perturb::{NemytskyMap, PerturbReport, PolyTerm};
use crate::process::{Monodromy, PeriodicSystem, SystemKind};
use crate::solver::{Envelope, MildSolution, SolveReport};
use crate::spectrum::{SpectraComparison, SpectrumReport};

/// serde_json formatter printing floats as `d.dddddddddddddddde[+-]exp`
/// (17 significant digits; exact round trip).
#[derive(Clone, Copy, Debug, Default)]
pub struct Float17Formatter;

impl serde_json::ser::Formatter for Float17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with the fixed float format.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Float17Formatter);
    value.serialize(&mut ser)?;
    String::from_utf8(out).map_err(|e| Error::InvalidInput(format!("non-utf8 json: {e}")))
}

/// Write `contents` to `path` atomically (temp file, then rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    write_atomic(path, &s)
}

// ---------------------------------------------------------------------
// bounded functions

/// `{"dim": int, "modes": [{"omega": float, "re": [..], "im": [..]}]}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrigPolyJson {
    pub dim: usize,
    pub modes: Vec<TrigModeJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrigModeJson {
    pub omega: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TrigPolyJson {
    pub fn from_domain(f: &TrigPolynomial) -> Self {
        Self {
            dim: f.dim(),
            modes: f
                .modes()
                .iter()
                .map(|m| TrigModeJson {
                    omega: m.omega,
                    re: m.coeff.iter().map(|c| c.re).collect(),
                    im: m.coeff.iter().map(|c| c.im).collect(),
                })
                .collect(),
        }
    }

    pub fn to_domain(&self) -> Result<TrigPolynomial> {
        let mut modes = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            if m.re.len() != self.dim || m.im.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "mode at omega {} carries {}/{} components for dim {}",
                    m.omega,
                    m.re.len(),
                    m.im.len(),
                    self.dim
                )));
            }
            let coeff = DVector::from_iterator(
                self.dim,
                m.re.iter()
                    .zip(&m.im)
                    .map(|(&re, &im)| Complex64::new(re, im)),
            );
            modes.push(Mode {
                omega: m.omega,
                coeff,
            });
        }
        TrigPolynomial::new(self.dim, modes)
    }
}

pub fn read_trig_json(path: &Path) -> Result<TrigPolynomial> {
    let text = std::fs::read_to_string(path)?;
    let json: TrigPolyJson = serde_json::from_str(&text)?;
    json.to_domain()
}

pub fn write_trig_json(path: &Path, f: &TrigPolynomial) -> Result<()> {
    write_json(path, &TrigPolyJson::from_domain(f))
}

/// CSV header `t,re_0,im_0,...,re_{d-1),im_{d-1}`; `#` lines are
/// comments. Rows must advance with a constant positive step.
pub fn write_grid_csv(path: &Path, g: &GridFunction, comments: &[&str]) -> Result<()> {
    let mut out = String::new();
    for line in comments {
        out.push_str(&format!("# {line}\n"));
    }
    out.push('t');
    for i in 0..g.dim() {
        out.push_str(&format!(",re_{i},im_{i}"));
    }
    out.push('\n');
    for (j, sample) in g.samples().iter().enumerate() {
        out.push_str(&format!("{:.16e}", g.time_at(j)));
        for v in sample.iter() {
            out.push_str(&format!(",{:.16e},{:.16e}", v.re, v.im));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read_grid_csv(path: &Path) -> Result<GridFunction> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || headers.len() % 2 == 0 || &headers[0] != "t" {
        return Err(Error::InvalidInput(format!(
            "expected header t,re_0,im_0,...; got {} columns",
            headers.len()
        )));
    }
    let dim = (headers.len() - 1) / 2;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "row {} has {} fields, expected {}",
                times.len() + 1,
                record.len(),
                headers.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad float {s:?}: {e}")))
        };
        times.push(parse(&record[0])?);
        let mut v = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        for i in 0..dim {
            v[i] = Complex64::new(parse(&record[1 + 2 * i])?, parse(&record[2 + 2 * i])?);
        }
        samples.push(v);
    }
    if times.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 samples".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("time column must increase".into()));
    }
    for (j, &t) in times.iter().enumerate() {
        if (t - (times[0] + j as f64 * dt)).abs() > 1e-6 * dt {
            return Err(Error::InvalidInput(format!(
                "non-uniform time step at row {j}: t = {t}"
            )));
        }
    }
    GridFunction::new(times[0], dt, samples)
}

// ---------------------------------------------------------------------
// systems

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarModeJson {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntryJson {
    pub row: usize,
    pub col: usize,
    pub modes: Vec<ScalarModeJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatJson {
    pub n_modes: usize,
    pub a: TrigPolyJson,
    pub b: TrigPolyJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegJson {
    pub rtol: f64,
    pub atol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

/// `{"dim", "kind", "entries"|"constant"|"heat", "integ"}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemJson {
    pub dim: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<EntryJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat: Option<HeatJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integ: Option<IntegJson>,
}

impl SystemJson {
    pub fn from_domain(sys: &PeriodicSystem) -> Self {
        let integ = Some(IntegJson {
            rtol: sys.integ().rtol,
            atol: sys.integ().atol,
            max_step: Some(sys.integ().max_step),
        });
        match sys.kind() {
            SystemKind::General { entries } => {
                let d = sys.dim();
                let mut out = Vec::new();
                for (idx, poly) in entries.iter().enumerate() {
                    let modes: Vec<ScalarModeJson> = poly
                        .modes()
                        .iter()
                        .map(|m| ScalarModeJson {
                            omega: m.omega,
                            re: m.coeff[0].re,
                            im: m.coeff[0].im,
                        })
                        .collect();
                    if !modes.is_empty() {
                        out.push(EntryJson {
                            row: idx / d,
                            col: idx % d,
                            modes,
                        });
                    }
                }
                Self {
                    dim: d,
                    kind: "general".into(),
                    entries: Some(out),
                    constant: None,
                    heat: None,
                    integ,
                }
            }
            SystemKind::Constant { matrix } => Self {
                dim: sys.dim(),
                kind: "constant".into(),
                entries: None,
                constant: Some(
                    (0..matrix.nrows())
                        .map(|i| (0..matrix.ncols()).map(|j| matrix[(i, j)].re).collect())
                        .collect(),
                ),
                heat: None,
                integ,
            },
            SystemKind::Heat { n_modes, a, b } => Self {
                dim: sys.dim(),
                kind: "heat".into(),
                entries: None,
                constant: None,
                heat: Some(HeatJson {
                    n_modes: *n_modes,
                    a: TrigPolyJson::from_domain(a),
                    b: TrigPolyJson::from_domain(b),
                }),
                integ,
            },
        }
    }

    pub fn to_domain(&self) -> Result<PeriodicSystem> {
        let mut integ = IntegrationSettings::default();
        if let Some(ij) = &self.integ {
            integ.rtol = ij.rtol;
            integ.atol = ij.atol;
            if let Some(ms) = ij.max_step {
                integ.max_step = ms;
            }
        }
        match self.kind.as_str() {
            "general" => {
                let entries_json = self.entries.as_ref().ok_or_else(|| {
                    Error::InvalidInput("general system needs \"entries\"".into())
                })?;
                let d = self.dim;
                let mut entries = vec![TrigPolynomial::zero(1); d * d];
                for e in entries_json {
                    if e.row >= d || e.col >= d {
                        return Err(Error::InvalidInput(format!(
                            "entry ({}, {}) outside a {d}x{d} system",
                            e.row, e.col
                        )));
                    }
                    let modes: Vec<(f64, Complex64)> = e
                        .modes
                        .iter()
                        .map(|m| (m.omega, Complex64::new(m.re, m.im)))
                        .collect();
                    entries[e.row * d + e.col] = TrigPolynomial::scalar(&modes);
                }
                PeriodicSystem::general(d, entries, integ)
            }
            "constant" => {
                let rows = self.constant.as_ref().ok_or_else(|| {
                    Error::InvalidInput("constant system needs \"constant\"".into())
                })?;
                if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(Error::InvalidInput(format!(
                        "constant matrix must be {0}x{0}",
                        self.dim
                    )));
                }
                let m = CMatrix::from_fn(self.dim, self.dim, |i, j| {
                    Complex64::new(rows[i][j], 0.0)
                });
                PeriodicSystem::constant(m, integ)
            }
            "heat" => {
                let h = self
                    .heat
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("heat system needs \"heat\"".into()))?;
                PeriodicSystem::heat(h.n_modes, h.a.to_domain()?, h.b.to_domain()?, integ)
            }
            other => Err(Error::InvalidInput(format!("unknown system kind {other:?}"))),
        }
    }
}

pub fn read_system_json(path: &Path) -> Result<PeriodicSystem> {
    let text = std::fs::read_to_string(path)?;
    let json: SystemJson = serde_json::from_str(&text)?;
    json.to_domain()
}

pub fn write_system_json(path: &Path, sys: &PeriodicSystem) -> Result<()> {
    write_json(path, &SystemJson::from_domain(sys))
}

// ---------------------------------------------------------------------
// nonlinearities

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub power: u32,
    pub coeff: TrigPolyJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipJson {
    pub poly_coeffs: Vec<f64>,
}

/// `{"kind": "polynomial"|"heat_quadratic", "terms": [..], "lip": {..}}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearityJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip: Option<LipJson>,
}

impl NonlinearityJson {
    /// Build the map; `heat_quadratic` pulls `n_modes` and `b(t)` from
    /// the system, which must be of heat kind.
    pub fn to_domain(&self, sys: &PeriodicSystem) -> Result<NemytskyMap> {
        let map = match self.kind.as_str() {
            "polynomial" => {
                let terms_json = self.terms.as_ref().ok_or_else(|| {
                    Error::InvalidInput("polynomial nonlinearity needs \"terms\"".into())
                })?;
                let mut terms = Vec::with_capacity(terms_json.len());
                for t in terms_json {
                    terms.push(PolyTerm {
                        power: t.power,
                        coeff: t.coeff.to_domain()?,
                    });
                }
                NemytskyMap::polynomial(sys.dim(), terms)?
            }
            "heat_quadratic" => match sys.kind() {
                SystemKind::Heat { n_modes, b, .. } => {
                    NemytskyMap::heat_quadratic(*n_modes, b.clone())?
                }
                _ => {
                    return Err(Error::InvalidInput(
                        "heat_quadratic nonlinearity requires a heat-kind system".into(),
                    ))
                }
            },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown nonlinearity kind {other:?}"
                )))
            }
        };
        match &self.lip {
            Some(l) => map.with_lip(l.poly_coeffs.clone()),
            None => Ok(map),
        }
    }
}

pub fn read_nonlinearity_json(path: &Path, sys: &PeriodicSystem) -> Result<NemytskyMap> {
    let text = std::fs::read_to_string(path)?;
    let json: NonlinearityJson = serde_json::from_str(&text)?;
    json.to_domain(sys)
}

// ---------------------------------------------------------------------
// reports

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngleProbeJson {
    pub theta: f64,
    pub exponent: f64,
}

/// `{"method", "angular_resolution", "spectrum": [..], "per_angle": [..]}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReportJson {
    pub method: String,
    pub angular_resolution: f64,
    pub spectrum: Vec<f64>,
    pub per_angle: Vec<AngleProbeJson>,
}

impl SpectrumReportJson {
    pub fn from_domain(rep: &SpectrumReport) -> Self {
        Self {
            method: rep.method.as_str().into(),
            angular_resolution: rep.spectrum.angular_resolution(),
            spectrum: rep.spectrum.angles().to_vec(),
            per_angle: rep
                .per_angle
                .iter()
                .map(|p| AngleProbeJson {
                    theta: p.theta,
                    exponent: p.exponent,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

/// Monodromy report: matrix as row-major re/im arrays plus eigendata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonodromyJson {
    pub anchor_t: f64,
    pub dim: usize,
    pub matrix_re: Vec<f64>,
    pub matrix_im: Vec<f64>,
    pub eigenvalues: Vec<ComplexJson>,
    pub unit_circle_angles: Vec<f64>,
    pub err_est: f64,
}

impl MonodromyJson {
    pub fn from_domain(p: &Monodromy) -> Self {
        let d = p.matrix.nrows();
        let mut matrix_re = Vec::with_capacity(d * d);
        let mut matrix_im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                matrix_re.push(p.matrix[(i, j)].re);
                matrix_im.push(p.matrix[(i, j)].im);
            }
        }
        Self {
            anchor_t: p.anchor_t,
            dim: d,
            matrix_re,
            matrix_im,
            eigenvalues: p
                .eigenvalues
                .iter()
                .map(|e| ComplexJson { re: e.re, im: e.im })
                .collect(),
            unit_circle_angles: p.unit_circle_part.angles().to_vec(),
            err_est: p.err_est,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReportJson {
    pub residual: f64,
    pub gap: f64,
    pub mode_conds: Vec<f64>,
    pub iterations: usize,
    pub u_norm: f64,
    pub f_norm: f64,
    pub near_resonance: bool,
    pub seed: u64,
}

impl SolveReportJson {
    pub fn from_domain(r: &SolveReport) -> Self {
        Self {
            residual: r.residual,
            gap: r.gap,
            mode_conds: r.mode_conds.clone(),
            iterations: r.iterations,
            u_norm: r.u_norm,
            f_norm: r.f_norm,
            near_resonance: r.near_resonance,
            seed: r.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeJson {
    pub omega: f64,
    /// One row per envelope sample: `[re_0, im_0, ..., re_{d-1}, im_{d-1}]`.
    pub samples: Vec<Vec<f64>>,
}

/// `{"freqs", "envelopes", "report"}` plus the state dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    pub freqs: Vec<f64>,
    pub dim: usize,
    pub envelopes: Vec<EnvelopeJson>,
    pub report: SolveReportJson,
}

impl SolutionJson {
    pub fn from_domain(u: &MildSolution) -> Self {
        Self {
            freqs: u.freqs().to_vec(),
            dim: u.dim(),
            envelopes: u
                .envelopes()
                .iter()
                .map(|e| EnvelopeJson {
                    omega: e.omega,
                    samples: e
                        .samples
                        .iter()
                        .map(|s| s.iter().flat_map(|c| [c.re, c.im]).collect())
                        .collect(),
                })
                .collect(),
            report: SolveReportJson::from_domain(u.report()),
        }
    }

    pub fn to_domain(&self) -> Result<MildSolution> {
        let mut envelopes = Vec::with_capacity(self.envelopes.len());
        for e in &self.envelopes {
            let mut samples = Vec::with_capacity(e.samples.len());
            for row in &e.samples {
                if row.len() != 2 * self.dim {
                    return Err(Error::InvalidInput(format!(
                        "envelope sample carries {} floats, expected {}",
                        row.len(),
                        2 * self.dim
                    )));
                }
                samples.push(DVector::from_iterator(
                    self.dim,
                    row.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])),
                ));
            }
            envelopes.push(Envelope::from_samples(e.omega, samples)?);
        }
        let report = SolveReport {
            residual: self.report.residual,
            gap: self.report.gap,
            mode_conds: self.report.mode_conds.clone(),
            iterations: self.report.iterations,
            u_norm: self.report.u_norm,
            f_norm: self.report.f_norm,
            near_resonance: self.report.near_resonance,
            seed: self.report.seed,
        };
        MildSolution::from_envelopes(envelopes, self.dim, report)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbReportJson {
    pub rho: f64,
    pub m_norm: f64,
    pub epsilon: f64,
    pub epsilon_0: f64,
    pub iterations: usize,
    pub contraction_factor: f64,
    pub final_norm: f64,
    pub bound_ok: bool,
    pub truncation_defect: f64,
    pub residual: f64,
    pub seed: u64,
}

impl PerturbReportJson {
    pub fn from_domain(r: &PerturbReport) -> Self {
        Self {
            rho: r.rho,
            m_norm: r.m_norm,
            epsilon: r.epsilon,
            epsilon_0: r.epsilon_0,
            iterations: r.iterations,
            contraction_factor: r.contraction_factor,
            final_norm: r.final_norm,
            bound_ok: r.bound_ok,
            truncation_defect: r.truncation_defect,
            residual: r.residual,
            seed: r.seed,
        }
    }
}

/// Comparison report for the two spectra of a smooth input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonJson {
    pub circular: Vec<f64>,
    pub carleman_frequencies: Vec<f64>,
    pub carleman_angles: Vec<f64>,
    pub hausdorff: f64,
    pub consistent: bool,
}

impl ComparisonJson {
    pub fn from_domain(c: &SpectraComparison) -> Self {
        Self {
            circular: c.circular.angles().to_vec(),
            carleman_frequencies: c.carleman_frequencies.clone(),
            carleman_angles: c.carleman_angles.angles().to_vec(),
            hausdorff: c.hausdorff,
            consistent: c.consistent,
        }
    }
}
