//! Pricing oracle: maximize `v(α)ᵀ Q v(α)` over every implicit row.
//!
//! `Q` is symmetric PSD (`M⁻¹` in local search, `Θ` in separation). For the
//! linear model the objective is a convex function of `α`, so only the `2^F`
//! box vertices `α ∈ {0, L−1}^F` are visited, in Gray-code order so that each
//! step flips one coordinate. The quadratic model is enumerated exhaustively
//! in row order, updating the handful of entries of `v` (and `Q v`) that a
//! change of one factor touches.
//!
//! The candidate space is cut into fixed-size chunks that start from a fresh
//! evaluation. Chunks are independent, so the answer does not depend on how
//! many workers process them. Ties go to the smallest row index.
//!
//! [`price_corrected`] evaluates several forms `Q + w_j u_j u_jᵀ` in a single
//! sweep; the exchange scan of local search uses it to price every leaving
//! row at once.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::{FactorPoint, ModelKind, ModelSpec};
use crate::linalg::{dot, DenseMatrix};

/// Default cap on the number of quadratic-model rows enumerated per call.
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;
/// Largest `F` the linear-model vertex enumeration accepts.
pub const MAX_LINEAR_FACTORS: usize = 40;

const CHUNK: u64 = 1 << 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Quadratic model: largest `L^F` enumerated.
    pub cap: u64,
    /// Number of distinct best rows returned per form.
    pub top_k: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            top_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub point: FactorPoint,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub best_point: FactorPoint,
    pub best_value: f64,
    /// Candidates examined.
    pub evaluated: u64,
    /// Up to `top_k` best distinct rows, best first; `top[0]` is the
    /// maximizer.
    pub top: Vec<Candidate>,
}

/// A rank-one correction `weight · (uᵀv)²` added to the base form.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub u: Vec<f64>,
    pub weight: f64,
}

/// Exact maximizer of `vᵀQv` over all implicit rows.
pub fn price(spec: &ModelSpec, q: &DenseMatrix, opts: &OracleOptions) -> Result<PricingResult> {
    match spec.kind() {
        ModelKind::Linear => price_linear_vertices(spec, q, opts),
        ModelKind::Quadratic => price_quadratic_enumerate(spec, q, opts),
    }
}

/// Linear model: Gray-code enumeration of the `2^F` box vertices.
pub fn price_linear_vertices(
    spec: &ModelSpec,
    q: &DenseMatrix,
    opts: &OracleOptions,
) -> Result<PricingResult> {
    if spec.kind() != ModelKind::Linear {
        return Err(Error::InvalidInstance(format!(
            "vertex pricing needs the linear model, got {}",
            spec.kind()
        )));
    }
    single(spec, q, opts)
}

/// Quadratic model: odometer enumeration of all `L^F` rows.
pub fn price_quadratic_enumerate(
    spec: &ModelSpec,
    q: &DenseMatrix,
    opts: &OracleOptions,
) -> Result<PricingResult> {
    if spec.kind() != ModelKind::Quadratic {
        return Err(Error::InvalidInstance(format!(
            "quadratic enumeration needs the quadratic model, got {}",
            spec.kind()
        )));
    }
    single(spec, q, opts)
}

fn single(spec: &ModelSpec, q: &DenseMatrix, opts: &OracleOptions) -> Result<PricingResult> {
    let mut out = sweep(spec, q, &[], opts)?;
    Ok(out.pop().expect("one form"))
}

/// Maximizes `vᵀQv + w_j (u_jᵀv)²` separately for every term `j`, in one
/// pass over the rows. Returns one result per term, in order.
pub fn price_corrected(
    spec: &ModelSpec,
    q: &DenseMatrix,
    terms: &[RankOneTerm],
    opts: &OracleOptions,
) -> Result<Vec<PricingResult>> {
    if terms.is_empty() {
        return Ok(Vec::new());
    }
    sweep(spec, q, terms, opts)
}

/// Number of rows the oracle would visit, or a capacity error.
pub fn candidate_count(spec: &ModelSpec, opts: &OracleOptions) -> Result<u64> {
    Ok(Space::new(spec, opts)?.total)
}

#[derive(Debug, Clone, Copy)]
enum Walk {
    /// Gray-code over vertex masks; bit `k` set means `α_k = L−1`.
    Vertices,
    /// Row index order.
    Odometer,
}

#[derive(Debug, Clone, Copy)]
struct Space {
    walk: Walk,
    total: u64,
}

impl Space {
    fn new(spec: &ModelSpec, opts: &OracleOptions) -> Result<Self> {
        match spec.kind() {
            ModelKind::Linear => {
                if spec.factors() > MAX_LINEAR_FACTORS {
                    return Err(Error::OracleCapacity(format!(
                        "linear vertex enumeration supports F <= {MAX_LINEAR_FACTORS}, got F={}",
                        spec.factors()
                    )));
                }
                Ok(Self {
                    walk: Walk::Vertices,
                    total: 1u64 << spec.factors(),
                })
            }
            ModelKind::Quadratic => match spec.row_count() {
                Some(n) if n <= opts.cap => Ok(Self {
                    walk: Walk::Odometer,
                    total: n,
                }),
                _ => Err(Error::OracleCapacity(format!(
                    "{}^{} rows exceeds the enumeration cap {}",
                    spec.levels(),
                    spec.factors(),
                    opts.cap
                ))),
            },
        }
    }

    fn point(&self, spec: &ModelSpec, key: u64) -> FactorPoint {
        match self.walk {
            Walk::Vertices => {
                let hi = spec.levels() - 1;
                FactorPoint(
                    (0..spec.factors())
                        .map(|k| if key >> k & 1 == 1 { hi } else { 0 })
                        .collect(),
                )
            }
            Walk::Odometer => spec.decode(key).expect("key below row count"),
        }
    }
}

#[inline]
fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Best-first list of at most `k` `(value, key)` pairs. Higher value wins;
/// equal values go to the smaller key.
#[derive(Debug, Clone)]
struct TopK {
    k: usize,
    items: Vec<(f64, u64)>,
}

#[inline]
fn beats(a: (f64, u64), b: (f64, u64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, value: f64, key: u64) {
        if value.is_nan() {
            return;
        }
        if self.items.len() == self.k {
            match self.items.last() {
                Some(&last) if beats((value, key), last) => {}
                _ => return,
            }
        }
        let pos = self
            .items
            .iter()
            .position(|&it| beats((value, key), it))
            .unwrap_or(self.items.len());
        self.items.insert(pos, (value, key));
        self.items.truncate(self.k);
    }

    /// Smallest value that can still enter.
    #[inline]
    fn floor(&self) -> f64 {
        if self.items.len() < self.k {
            f64::NEG_INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for (v, key) in other.items {
            self.offer(v, key);
        }
        self
    }
}

/// Incremental evaluation state for one chunk.
struct Kernel<'a> {
    spec: &'a ModelSpec,
    q: &'a DenseMatrix,
    /// `u_j[i]` stored at `i * terms + j`.
    ut: &'a [f64],
    weights: &'a [f64],
    levels: Vec<u32>,
    v: Vec<f64>,
    /// `Q v`
    w: Vec<f64>,
    /// `vᵀ Q v`
    d: f64,
    /// `u_jᵀ v`
    c: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(spec: &'a ModelSpec, q: &'a DenseMatrix, ut: &'a [f64], weights: &'a [f64]) -> Self {
        let m = spec.row_dim();
        Self {
            spec,
            q,
            ut,
            weights,
            levels: vec![0; spec.factors()],
            v: vec![0.0; m],
            w: vec![0.0; m],
            d: 0.0,
            c: vec![0.0; weights.len()],
        }
    }

    fn reset(&mut self, levels: &[u32]) {
        self.levels.copy_from_slice(levels);
        self.spec.expand_into(&self.levels, &mut self.v);
        for (i, wi) in self.w.iter_mut().enumerate() {
            *wi = dot(self.q.row(i), &self.v);
        }
        self.d = dot(&self.v, &self.w);
        let t = self.weights.len();
        for (j, cj) in self.c.iter_mut().enumerate() {
            *cj = self.v.iter().enumerate().map(|(i, vi)| vi * self.ut[i * t + j]).sum();
        }
    }

    /// `v[i] += delta`, keeping `w` and `c` in step (not `d`).
    #[inline]
    fn shift(&mut self, i: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.v[i] += delta;
        for (wk, &qik) in self.w.iter_mut().zip(self.q.row(i)) {
            *wk += delta * qik;
        }
        let t = self.weights.len();
        for (cj, &uij) in self.c.iter_mut().zip(&self.ut[i * t..(i + 1) * t]) {
            *cj += delta * uij;
        }
    }

    /// Linear model: flip coordinate `k` between 0 and `hi`.
    #[inline]
    fn flip(&mut self, k: usize, hi: u32) {
        let i = 1 + k;
        let delta = if self.levels[k] == 0 {
            self.levels[k] = hi;
            f64::from(hi)
        } else {
            self.levels[k] = 0;
            -f64::from(hi)
        };
        let w_i = self.w[i];
        let q_ii = self.q.get(i, i);
        self.shift(i, delta);
        self.d += 2.0 * delta * w_i + delta * delta * q_ii;
    }

    /// Quadratic model: set factor `k` to `b`, updating the linear, square
    /// and cross entries it touches.
    fn set_factor(&mut self, k: usize, b: u32) {
        let a = self.levels[k];
        if a == b {
            return;
        }
        let f = self.spec.factors();
        let (af, bf) = (f64::from(a), f64::from(b));
        let step = bf - af;
        self.shift(1 + k, step);
        self.shift(1 + f + k, bf * bf - af * af);
        for j in 0..f {
            if j == k {
                continue;
            }
            let idx = if j < k {
                self.spec.cross_index(j, k)
            } else {
                self.spec.cross_index(k, j)
            };
            let aj = f64::from(self.levels[j]);
            self.shift(idx, step * aj);
        }
        self.levels[k] = b;
        self.d = dot(&self.v, &self.w);
    }

    /// Odometer step to the next row index.
    fn advance(&mut self) {
        let top = self.spec.levels() - 1;
        let mut k = 0;
        while k < self.levels.len() && self.levels[k] == top {
            self.set_factor(k, 0);
            k += 1;
        }
        if k < self.levels.len() {
            self.set_factor(k, self.levels[k] + 1);
        }
    }

    #[inline]
    fn value(&self, j: usize) -> f64 {
        if self.weights.is_empty() {
            self.d
        } else {
            self.d + self.weights[j] * self.c[j] * self.c[j]
        }
    }
}

/// Fresh evaluation of every form at one row.
fn evaluate_fresh(
    spec: &ModelSpec,
    q: &DenseMatrix,
    terms: &[RankOneTerm],
    point: &FactorPoint,
) -> Vec<f64> {
    let mut v = vec![0.0; spec.row_dim()];
    spec.expand_into(point.levels(), &mut v);
    let d = q.quad_form(&v);
    if terms.is_empty() {
        vec![d]
    } else {
        terms
            .iter()
            .map(|t| {
                let c = dot(&t.u, &v);
                d + t.weight * c * c
            })
            .collect()
    }
}

/// Walks keys `[start, end)` of the candidate space, calling `visit` with
/// each row key and the kernel positioned at that row.
fn walk_chunk<F>(kernel: &mut Kernel<'_>, space: &Space, start: u64, end: u64, mut visit: F)
where
    F: FnMut(u64, &Kernel<'_>),
{
    let spec = kernel.spec;
    match space.walk {
        Walk::Vertices => {
            let hi = spec.levels() - 1;
            let mask = gray(start);
            let levels: Vec<u32> = (0..spec.factors())
                .map(|k| if mask >> k & 1 == 1 { hi } else { 0 })
                .collect();
            kernel.reset(&levels);
            visit(mask, kernel);
            for i in (start + 1)..end {
                kernel.flip(i.trailing_zeros() as usize, hi);
                visit(gray(i), kernel);
            }
        }
        Walk::Odometer => {
            let point = spec.decode(start).expect("chunk start below row count");
            kernel.reset(point.levels());
            visit(start, kernel);
            for i in (start + 1)..end {
                kernel.advance();
                visit(i, kernel);
            }
        }
    }
}

fn sweep(
    spec: &ModelSpec,
    q: &DenseMatrix,
    terms: &[RankOneTerm],
    opts: &OracleOptions,
) -> Result<Vec<PricingResult>> {
    let m = spec.row_dim();
    if q.rows() != m || q.cols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: q.rows(),
        });
    }
    if let Some(t) = terms.iter().find(|t| t.u.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: t.u.len(),
        });
    }
    let space = Space::new(spec, opts)?;
    let k = opts.top_k.max(1);
    let forms = terms.len().max(1);
    let weights: Vec<f64> = terms.iter().map(|t| t.weight).collect();
    let mut ut = vec![0.0; m * terms.len()];
    for (j, t) in terms.iter().enumerate() {
        for (i, &x) in t.u.iter().enumerate() {
            ut[i * terms.len() + j] = x;
        }
    }

    let chunks = space.total.div_ceil(CHUNK);
    let run = |chunk: u64| -> Vec<TopK> {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(space.total);
        let mut kernel = Kernel::new(spec, q, &ut, &weights);
        let mut tops = vec![TopK::new(k); forms];
        // k-th best value per form; a cheap branch-free test gates `offer`
        let mut floor = vec![f64::NEG_INFINITY; forms];
        walk_chunk(&mut kernel, &space, start, end, |key, kern| {
            let d = kern.d;
            let hit = if kern.weights.is_empty() {
                d >= floor[0]
            } else {
                kern.c
                    .iter()
                    .zip(kern.weights)
                    .zip(&floor)
                    .fold(false, |hit, ((&c, &w), &f)| hit | (d + w * c * c >= f))
            };
            if hit {
                for (j, top) in tops.iter_mut().enumerate() {
                    let value = kern.value(j);
                    if value >= floor[j] {
                        top.offer(value, key);
                        floor[j] = top.floor();
                    }
                }
            }
        });
        // Re-rank the survivors on fresh values so chunk results depend on
        // the row alone.
        let keys: Vec<u64> = {
            let mut keys: Vec<u64> = tops.iter().flat_map(|t| t.items.iter().map(|x| x.1)).collect();
            keys.sort_unstable();
            keys.dedup();
            keys
        };
        let fresh: Vec<(u64, Vec<f64>)> = keys
            .into_iter()
            .map(|key| (key, evaluate_fresh(spec, q, terms, &space.point(spec, key))))
            .collect();
        tops.iter()
            .enumerate()
            .map(|(j, t)| {
                let mut out = TopK::new(k);
                for &(_, key) in &t.items {
                    let vals = &fresh.iter().find(|(k2, _)| *k2 == key).expect("key").1;
                    out.offer(vals[j], key);
                }
                out
            })
            .collect()
    };
    let merge = |a: Vec<TopK>, b: Vec<TopK>| -> Vec<TopK> {
        a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    };

    #[cfg(feature = "parallel")]
    let merged = {
        use rayon::prelude::*;
        (0..chunks)
            .into_par_iter()
            .map(run)
            .reduce(|| vec![TopK::new(k); forms], merge)
    };
    #[cfg(not(feature = "parallel"))]
    let merged = (0..chunks).map(run).fold(vec![TopK::new(k); forms], merge);

    merged
        .into_iter()
        .map(|top| {
            let list: Vec<Candidate> = top
                .items
                .iter()
                .map(|&(value, key)| Candidate {
                    point: space.point(spec, key),
                    value,
                })
                .collect();
            let best = list.first().cloned().ok_or_else(|| {
                Error::OracleCapacity(alloc::string::String::from("no finite candidate value"))
            })?;
            Ok(PricingResult {
                best_point: best.point,
                best_value: best.value,
                evaluated: space.total,
                top: list,
            })
        })
        .collect()
}
