//! JSON artifacts: designs, certificates and command reports. Floats are
//! written with 17 significant digits so every value reads back bit for bit.

use std::io::{self, Write};

use dopt_core::relax::{CertificateScope, DualCertificate};
use dopt_core::{Design, DenseMatrix, FactorPoint, ModelKind, ModelSpec};
use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};

/// Pretty printer that writes `f64` as `{:.16e}`.
pub struct Digits17 {
    inner: PrettyFormatter<'static>,
}

impl Default for Digits17 {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::new(),
        }
    }
}

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes with [`Digits17`] and a trailing newline.
pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct ModelJson {
    pub kind: String,
    pub factors: usize,
    pub levels: u32,
    #[serde(default)]
    pub m: Option<usize>,
    /// `L^F`, or null when it does not fit in 64 bits.
    #[serde(default)]
    pub n: Option<u64>,
}

impl ModelJson {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        Self {
            kind: spec.kind().as_str().to_string(),
            factors: spec.factors(),
            levels: spec.levels(),
            m: Some(spec.row_dim()),
            n: spec.row_count(),
        }
    }

    pub fn to_spec(&self) -> dopt_core::Result<ModelSpec> {
        let kind: ModelKind = self.kind.parse()?;
        ModelSpec::new(kind, self.factors, self.levels)
    }
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct SupportEntry {
    pub levels: Vec<u32>,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct DesignJson {
    pub model: ModelJson,
    pub budget: u64,
    /// Sorted by encoded row index.
    pub support: Vec<SupportEntry>,
    pub ldet: f64,
}

impl DesignJson {
    pub fn new(spec: &ModelSpec, design: &Design, ldet: f64) -> Self {
        Self {
            model: ModelJson::from_spec(spec),
            budget: design.budget(),
            support: design
                .iter()
                .map(|(p, k)| SupportEntry {
                    levels: p.0.clone(),
                    multiplicity: k,
                })
                .collect(),
            ldet,
        }
    }

    pub fn to_design(&self) -> dopt_core::Result<(ModelSpec, Design)> {
        let spec = self.model.to_spec()?;
        let design = Design::from_pairs(
            &spec,
            self.support
                .iter()
                .map(|e| (FactorPoint(e.levels.clone()), e.multiplicity)),
        )?;
        if design.budget() != self.budget {
            return Err(dopt_core::Error::InvalidDesign(format!(
                "multiplicities sum to {}, budget says {}",
                design.budget(),
                self.budget
            )));
        }
        Ok((spec, design))
    }
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct CertificateJson {
    /// Row-major `m × m`.
    pub theta: Vec<f64>,
    pub tau: f64,
    pub scope: String,
    pub bound: f64,
    pub s: u64,
    pub model: ModelJson,
}

impl CertificateJson {
    pub fn new(spec: &ModelSpec, s: u64, cert: &DualCertificate) -> Self {
        Self {
            theta: cert.theta.as_slice().to_vec(),
            tau: cert.tau,
            scope: match cert.scope {
                CertificateScope::Pool => "pool",
                CertificateScope::Full => "full",
            }
            .to_string(),
            bound: cert.upper_bound,
            s,
            model: ModelJson::from_spec(spec),
        }
    }

    pub fn theta_matrix(&self) -> dopt_core::Result<DenseMatrix> {
        let m = self.model.to_spec()?.row_dim();
        DenseMatrix::from_row_major(m, m, self.theta.clone())
    }
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct TraceJson {
    pub initial_ldet: f64,
    pub iterations: usize,
    pub skipped_singular: usize,
    pub iteration_cap_hit: bool,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct LocalSearchReport {
    #[serde(flatten)]
    pub design: DesignJson,
    pub trace: TraceJson,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct BoundJson {
    pub model: ModelJson,
    pub budget: u64,
    pub bound: f64,
    pub relax_value: f64,
    pub rounds: usize,
    pub pool_size_final: usize,
    pub converged: bool,
    pub round_cap_hit: bool,
    pub relax_converged: bool,
    pub kw_gap: f64,
    pub certificate: CertificateJson,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct ProofJson {
    /// `optimal`, `node-cap` or `time-cap`.
    pub status: String,
    pub optimal_ldet: f64,
    pub nodes_explored: usize,
    pub final_gap: f64,
    pub upper_bound: f64,
    pub root_bound: f64,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct SolveJson {
    #[serde(flatten)]
    pub design: DesignJson,
    pub proof: ProofJson,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct CheckJson {
    pub name: String,
    pub instance: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct VerifyJson {
    pub passed: bool,
    pub checks: Vec<CheckJson>,
}
