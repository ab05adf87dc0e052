//! Response-surface instances and the implicit design matrix.
//!
//! Rows are identified by factor points `α ∈ {0,…,L−1}^F`. The canonical row
//! order is little-endian base `L`: `ℓ = Σ_k α_k L^k`, so factor 0 is the
//! fastest-moving digit. Row expansion follows
//!
//! - linear: `(1; α_1,…,α_F)`
//! - quadratic: `(1; α_1,…,α_F; α_1²,…,α_F²; α_1α_2, α_1α_3,…,α_{F−1}α_F)`
//!
//! with cross terms in lexicographic `(i, j)`, `i < j` order. No algorithm
//! needs `n = L^F` itself; it is kept only when it fits in a `u64`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Default row cap for [`ModelSpec::materialize_dense`].
pub const DEFAULT_MATERIALIZE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Linear,
    Quadratic,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "quadratic" => Ok(ModelKind::Quadratic),
            other => Err(Error::InvalidInstance(format!(
                "unknown model kind `{other}` (expected linear|quadratic)"
            ))),
        }
    }
}

/// Implicit design matrix of a full linear or quadratic response-surface
/// model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    kind: ModelKind,
    factors: usize,
    levels: u32,
    row_dim: usize,
    row_count: Option<u64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, factors: usize, levels: u32) -> Result<Self> {
        if factors < 1 {
            return Err(Error::InvalidInstance(String::from("factors must be >= 1")));
        }
        if levels < 2 {
            return Err(Error::InvalidInstance(String::from("levels must be >= 2")));
        }
        let row_dim = match kind {
            ModelKind::Linear => 1 + factors,
            ModelKind::Quadratic => 1 + 2 * factors + factors * (factors - 1) / 2,
        };
        let row_count = u32::try_from(factors)
            .ok()
            .and_then(|f| u64::from(levels).checked_pow(f));
        Ok(Self {
            kind,
            factors,
            levels,
            row_dim,
            row_count,
        })
    }

    pub fn linear(factors: usize, levels: u32) -> Result<Self> {
        Self::new(ModelKind::Linear, factors, levels)
    }

    pub fn quadratic(factors: usize, levels: u32) -> Result<Self> {
        Self::new(ModelKind::Quadratic, factors, levels)
    }

    /// Parses `kind=linear|quadratic factors=F levels=L` (any order, any
    /// whitespace between pairs).
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut factors = None;
        let mut levels = None;
        for pair in text.split_whitespace() {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidInstance(format!("expected key=value, got `{pair}`"))
            })?;
            let bad = |what: &str| Error::InvalidInstance(format!("bad {what} `{value}`"));
            match key {
                "kind" | "model" => kind = Some(value.parse::<ModelKind>()?),
                "factors" | "F" => factors = Some(value.parse::<usize>().map_err(|_| bad("factors"))?),
                "levels" | "L" => levels = Some(value.parse::<u32>().map_err(|_| bad("levels"))?),
                other => {
                    return Err(Error::InvalidInstance(format!("unknown key `{other}`")));
                }
            }
        }
        let missing = |k: &str| Error::InvalidInstance(format!("missing `{k}=`"));
        Self::new(
            kind.ok_or_else(|| missing("kind"))?,
            factors.ok_or_else(|| missing("factors"))?,
            levels.ok_or_else(|| missing("levels"))?,
        )
    }

    #[inline]
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    #[inline]
    pub fn factors(&self) -> usize {
        self.factors
    }

    #[inline]
    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// `m`, the length of an expanded row.
    #[inline]
    pub fn row_dim(&self) -> usize {
        self.row_dim
    }

    /// `n = L^F`, or `None` when it does not fit in a `u64`.
    #[inline]
    pub fn row_count(&self) -> Option<u64> {
        self.row_count
    }

    #[inline]
    pub fn is_astronomical(&self) -> bool {
        self.row_count.is_none()
    }

    /// Advisory notes about unusual but accepted instances.
    pub fn notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.kind == ModelKind::Linear && self.levels != 2 {
            notes.push(format!(
                "linear models normally use L=2; with L={} only the extreme levels 0 and {} can enter an optimal design",
                self.levels,
                self.levels - 1
            ));
        }
        notes
    }

    pub fn check_point(&self, point: &FactorPoint) -> Result<()> {
        if point.0.len() != self.factors {
            return Err(Error::InvalidPoint(format!(
                "expected {} factors, got {}",
                self.factors,
                point.0.len()
            )));
        }
        if let Some(&bad) = point.0.iter().find(|&&a| a >= self.levels) {
            return Err(Error::InvalidPoint(format!(
                "level {bad} outside 0..{}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn encode(&self, point: &FactorPoint) -> Result<u64> {
        self.check_point(point)?;
        if self.row_count.is_none() {
            return Err(Error::AstronomicalIndex);
        }
        let l = u64::from(self.levels);
        Ok(point
            .0
            .iter()
            .rev()
            .fold(0u64, |acc, &a| acc * l + u64::from(a)))
    }

    pub fn decode(&self, index: u64) -> Result<FactorPoint> {
        let rows = self.row_count.ok_or(Error::AstronomicalIndex)?;
        if index >= rows {
            return Err(Error::IndexOutOfRange { index, rows });
        }
        let l = u64::from(self.levels);
        let mut rest = index;
        let levels = (0..self.factors)
            .map(|_| {
                let digit = (rest % l) as u32;
                rest /= l;
                digit
            })
            .collect();
        Ok(FactorPoint(levels))
    }

    pub fn expand(&self, point: &FactorPoint) -> Result<RowVector> {
        self.check_point(point)?;
        let mut out = alloc::vec![0.0; self.row_dim];
        self.expand_into(&point.0, &mut out);
        Ok(RowVector(out))
    }

    /// Writes the expanded row of `levels` into `out` (length `m`). Levels
    /// are not range-checked.
    pub fn expand_into(&self, levels: &[u32], out: &mut [f64]) {
        let f = self.factors;
        debug_assert_eq!(levels.len(), f);
        debug_assert_eq!(out.len(), self.row_dim);
        out[0] = 1.0;
        for (k, &a) in levels.iter().enumerate() {
            out[1 + k] = f64::from(a);
        }
        if self.kind == ModelKind::Quadratic {
            for (k, &a) in levels.iter().enumerate() {
                let a = f64::from(a);
                out[1 + f + k] = a * a;
            }
            let mut idx = 1 + 2 * f;
            for i in 0..f {
                let ai = f64::from(levels[i]);
                for &aj in &levels[i + 1..] {
                    out[idx] = ai * f64::from(aj);
                    idx += 1;
                }
            }
        }
    }

    /// Position of the cross term `α_i α_j` (`i < j`, zero-based) in an
    /// expanded quadratic row.
    #[inline]
    pub fn cross_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.factors);
        let f = self.factors;
        1 + 2 * f + i * (2 * f - i - 1) / 2 + (j - i - 1)
    }

    /// Full `n × m` design matrix, row `ℓ` being the expansion of
    /// `decode(ℓ)`. Only for reference checks on small instances.
    pub fn materialize_dense(&self, cap: u64) -> Result<DenseMatrix> {
        let rows = match self.row_count {
            Some(n) if n <= cap => n,
            Some(n) => {
                return Err(Error::TooLargeToMaterialize {
                    rows: format!("{n}"),
                    cap,
                })
            }
            None => {
                return Err(Error::TooLargeToMaterialize {
                    rows: format!("{}^{}", self.levels, self.factors),
                    cap,
                })
            }
        };
        let m = self.row_dim;
        let mut data = alloc::vec![0.0; rows as usize * m];
        for (index, chunk) in data.chunks_exact_mut(m).enumerate() {
            let point = self.decode(index as u64)?;
            self.expand_into(&point.0, chunk);
        }
        DenseMatrix::from_row_major(rows as usize, m, data)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={} factors={} levels={}",
            self.kind, self.factors, self.levels
        )
    }
}

/// Levels `α_1..α_F` of one experiment.
///
/// Ordering follows the canonical row index (the last factor is the most
/// significant digit), which stays meaningful when `L^F` overflows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorPoint(pub Vec<u32>);

impl FactorPoint {
    pub fn zeros(factors: usize) -> Self {
        FactorPoint(alloc::vec![0; factors])
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for FactorPoint {
    fn from(v: Vec<u32>) -> Self {
        FactorPoint(v)
    }
}

impl Ord for FactorPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.iter().rev().cmp(other.0.iter().rev()))
    }
}

impl PartialOrd for FactorPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FactorPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// An expanded row `v` of the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RowVector(pub Vec<f64>);

impl RowVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl core::ops::Deref for RowVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Integer design: multiplicities on a sparse support, kept in canonical
/// row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    support: BTreeMap<FactorPoint, u32>,
    budget: u64,
}

impl Design {
    /// Builds a design from `(point, multiplicity)` pairs. Repeated points
    /// accumulate; zero multiplicities are dropped.
    pub fn from_pairs<I>(spec: &ModelSpec, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FactorPoint, u32)>,
    {
        let mut support = BTreeMap::new();
        let mut budget = 0u64;
        for (point, mult) in pairs {
            spec.check_point(&point)?;
            if mult == 0 {
                continue;
            }
            budget += u64::from(mult);
            *support.entry(point).or_insert(0) += mult;
        }
        if budget == 0 {
            return Err(Error::InvalidDesign(String::from("empty design")));
        }
        Ok(Self { support, budget })
    }

    /// `s`, the total number of experiments.
    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    pub fn multiplicity(&self, point: &FactorPoint) -> u32 {
        self.support.get(point).copied().unwrap_or(0)
    }

    /// Support in canonical row order.
    pub fn iter(&self) -> impl Iterator<Item = (&FactorPoint, u32)> + '_ {
        self.support.iter().map(|(p, &k)| (p, k))
    }

    pub fn points(&self) -> impl Iterator<Item = &FactorPoint> + '_ {
        self.support.keys()
    }

    /// Moves one unit of multiplicity from `leave` to `enter`.
    pub fn exchange(&mut self, leave: &FactorPoint, enter: &FactorPoint) -> Result<()> {
        match self.support.get_mut(leave) {
            Some(k) if *k > 1 => *k -= 1,
            Some(_) => {
                self.support.remove(leave);
            }
            None => {
                return Err(Error::InvalidDesign(format!("{leave} is not in the support")));
            }
        }
        *self.support.entry(enter.clone()).or_insert(0) += 1;
        Ok(())
    }

    /// Expanded support rows with their multiplicities.
    pub fn rows(&self, spec: &ModelSpec) -> Result<(Vec<RowVector>, Vec<u32>)> {
        let mut rows = Vec::with_capacity(self.support.len());
        let mut mults = Vec::with_capacity(self.support.len());
        for (p, &k) in &self.support {
            rows.push(spec.expand(p)?);
            mults.push(k);
        }
        Ok((rows, mults))
    }

    pub fn info(&self, spec: &ModelSpec) -> Result<crate::infomat::InfoMatrix> {
        let (rows, mults) = self.rows(spec)?;
        crate::infomat::InfoMatrix::build(spec.row_dim(), &rows, &mults)
    }
}
