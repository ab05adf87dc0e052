//! Natural continuous relaxation over a row pool, its closed-form dual
//! certificate, and the row-generation loop that makes the bound valid for
//! the full implicit instance.
//!
//! For weights `x̃` on a pool with `B(x̃) = Σ x̃_i v_i v_iᵀ ≻ 0`, the pair
//! `Θ = B(x̃)⁻¹`, `τ = max_i v_iᵀΘv_i` is dual feasible on the pool, and
//! `−ldet Θ + τs − m` bounds the relaxation from above. Pricing `Θ` over
//! every implicit row lifts `τ` to the full instance, which yields a valid
//! upper bound for the integer problem at any point of the loop.
//!
//! The restricted problem is solved by Frank-Wolfe with pairwise away steps:
//! each step moves weight from the support row with the smallest gradient
//! `g_i = v_iᵀB⁻¹v_i` to the row with the largest, with the exact line search
//! available in closed form because `det(B + δ(v_t v_tᵀ − v_a v_aᵀ)) / det B`
//! is a quadratic in `δ`. The same step handles per-row bounds
//! `l_i ≤ x_i ≤ u_i`, which is how branch-and-bound nodes are relaxed.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::infomat::InfoMatrix;
use crate::instance::{FactorPoint, ModelSpec};
use crate::linalg::{dot, orthonormal_basis, DenseMatrix};
use crate::localsearch::initial_points;
use crate::oracle::{self, OracleOptions};

pub const DEFAULT_EPS_KW: f64 = 1e-6;
pub const DEFAULT_EPS_DROP: f64 = 1e-9;
pub const DEFAULT_TOP_K: usize = 5;
/// Relative margin by which a priced row must beat `τ` to count as a
/// violation.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Rows of the restriction: distinct factor points with cached expansions.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPool {
    spec: ModelSpec,
    points: Vec<FactorPoint>,
    rows: Vec<Vec<f64>>,
    index: BTreeMap<FactorPoint, usize>,
}

impl RowPool {
    pub fn new(spec: &ModelSpec) -> Self {
        Self {
            spec: spec.clone(),
            points: Vec::new(),
            rows: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn from_points<I>(spec: &ModelSpec, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = FactorPoint>,
    {
        let mut pool = Self::new(spec);
        for p in points {
            pool.insert(p)?;
        }
        Ok(pool)
    }

    /// Pool holding the rows of the local-search starting design.
    pub fn initial(spec: &ModelSpec) -> Result<Self> {
        Self::from_points(spec, initial_points(spec)?)
    }

    /// Adds `point`; returns `false` if it was already present.
    pub fn insert(&mut self, point: FactorPoint) -> Result<bool> {
        if self.index.contains_key(&point) {
            return Ok(false);
        }
        let row = self.spec.expand(&point)?.0;
        self.index.insert(point.clone(), self.points.len());
        self.points.push(point);
        self.rows.push(row);
        Ok(true)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[FactorPoint] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn position(&self, point: &FactorPoint) -> Option<usize> {
        self.index.get(point).copied()
    }

    pub fn contains(&self, point: &FactorPoint) -> bool {
        self.index.contains_key(point)
    }

    /// Keeps rows whose flag is set, preserving order.
    fn retain(&mut self, keep: &[bool]) {
        let mut k = keep.iter();
        let mut it = keep.iter();
        self.points.retain(|_| *k.next().unwrap());
        self.rows.retain(|_| *it.next().unwrap());
        self.index = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
    }

    fn weighted_info(&self, x: &[f64]) -> Result<InfoMatrix> {
        InfoMatrix::from_weighted_rows(
            self.spec.row_dim(),
            self.rows.iter().zip(x).map(|(r, &w)| (r.as_slice(), w)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxSolution {
    /// `x̃`, aligned with the pool order at solve time.
    pub weights: Vec<f64>,
    pub budget: f64,
    /// `ldet B(x̃)` from a fresh factorization.
    pub ldet_value: f64,
    /// Duality gap per unit of budget; with no node bounds this is the
    /// Kiefer-Wolfowitz gap `max_i g_i − m/s`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RelaxSolution {
    pub fn weight_of(&self, pool: &RowPool, point: &FactorPoint) -> f64 {
        pool.position(point).map_or(0.0, |i| self.weights[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    /// Stop once the gap is at most this.
    pub eps_kw: f64,
    pub max_iterations: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            eps_kw: DEFAULT_EPS_KW,
            max_iterations: 500_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateScope {
    /// Dual feasible for the pool rows.
    Pool,
    /// Dual feasible for every implicit row.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub theta: DenseMatrix,
    pub tau: f64,
    pub scope: CertificateScope,
    /// `−ldet Θ + τs − m`
    pub upper_bound: f64,
    /// `ldet Θ`
    pub ldet_theta: f64,
    pub budget: f64,
}

impl DualCertificate {
    /// Rebuilds the bound from `(Θ, τ, s)`.
    pub fn objective(ldet_theta: f64, tau: f64, s: f64, m: usize) -> f64 {
        -ldet_theta + tau * s - m as f64
    }
}

/// Solves the relaxation over `pool` with budget `s` from uniform weights.
pub fn solve_restricted(pool: &RowPool, s: f64, opts: &RelaxOptions) -> Result<RelaxSolution> {
    if !(s > 0.0) || pool.is_empty() {
        return Err(Error::RankDeficient);
    }
    let x0 = vec![s / pool.len() as f64; pool.len()];
    solve_restricted_from(pool, s, x0, opts)
}

/// Same, warm-started at `x0` (which must sum to `s` and give `B(x0) ≻ 0`).
pub fn solve_restricted_from(
    pool: &RowPool,
    s: f64,
    x0: Vec<f64>,
    opts: &RelaxOptions,
) -> Result<RelaxSolution> {
    let lo = vec![0.0; pool.len()];
    let hi = vec![s; pool.len()];
    pairwise_frank_wolfe(pool, s, &lo, &hi, x0, opts)
}

/// `max_i v_iᵀB(x̃)⁻¹v_i − m/s` over the pool, from a fresh factorization.
pub fn kw_gap(pool: &RowPool, sol: &RelaxSolution) -> Result<f64> {
    let info = pool.weighted_info(&sol.weights)?;
    let max_g = (0..pool.len())
        .map(|i| info.quad_form(pool.row(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(max_g - pool.spec.row_dim() as f64 / sol.budget)
}

/// Closed-form dual point from primal weights: `Θ = B(x̃)⁻¹`,
/// `τ = max_{i∈pool} v_iᵀΘv_i`.
pub fn dual_certificate(pool: &RowPool, sol: &RelaxSolution) -> Result<DualCertificate> {
    let info = pool.weighted_info(&sol.weights)?;
    let tau = (0..pool.len())
        .map(|i| info.quad_form(pool.row(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    let m = pool.spec.row_dim();
    let ldet_theta = -info.ldet();
    Ok(DualCertificate {
        theta: info.inverse(),
        tau,
        scope: CertificateScope::Pool,
        upper_bound: DualCertificate::objective(ldet_theta, tau, sol.budget, m),
        ldet_theta,
        budget: sol.budget,
    })
}

/// Lifts a pool certificate to the full instance: `τ ← max(τ, q*)` with
/// `q* = max_ℓ v_ℓᵀΘv_ℓ` from the oracle. Returns the certificate and `q*`.
pub fn complete_certificate(
    spec: &ModelSpec,
    cert: &DualCertificate,
    oracle_opts: &OracleOptions,
) -> Result<(DualCertificate, f64)> {
    let priced = oracle::price(spec, &cert.theta, oracle_opts)?;
    let tau = cert.tau.max(priced.best_value);
    Ok((
        DualCertificate {
            theta: cert.theta.clone(),
            tau,
            scope: CertificateScope::Full,
            upper_bound: DualCertificate::objective(cert.ldet_theta, tau, cert.budget, spec.row_dim()),
            ldet_theta: cert.ldet_theta,
            budget: cert.budget,
        },
        priced.best_value,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    pub relax: RelaxOptions,
    pub oracle: OracleOptions,
    /// Rows added per pricing round.
    pub top_k: usize,
    /// Row-adding rounds allowed; `Some(0)` bounds from the initial pool.
    pub max_rounds: Option<usize>,
    /// Drop non-initial pool rows whose weight falls below `eps_drop`.
    pub drop: bool,
    pub eps_drop: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            relax: RelaxOptions::default(),
            oracle: OracleOptions::default(),
            top_k: DEFAULT_TOP_K,
            max_rounds: Some(1000),
            drop: true,
            eps_drop: DEFAULT_EPS_DROP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub relax_value: f64,
    /// Full-scope bound from this round's certificate.
    pub bound: f64,
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Valid upper bound on the integer optimum.
    pub bound: f64,
    /// Relaxation value on the final pool.
    pub relax_value: f64,
    /// Pricing calls made.
    pub rounds: usize,
    pub pool_size_final: usize,
    /// Full-scope certificate that achieves `bound`.
    pub certificate: DualCertificate,
    /// No violated row was left when the loop stopped.
    pub converged: bool,
    /// The round cap stopped the loop.
    pub round_cap_hit: bool,
    /// Final restricted solve met its gap tolerance.
    pub relax_converged: bool,
    /// Final per-budget gap `(bound − relax_value)/s` of the last round.
    pub kw_gap: f64,
    pub pool: Vec<FactorPoint>,
    pub weights: Vec<f64>,
    pub history: Vec<RoundRecord>,
}

/// Row-generation natural bound for the full instance with budget `s`.
pub fn natural_bound_rowgen(spec: &ModelSpec, s: u64, opts: &BoundOptions) -> Result<BoundReport> {
    let m = spec.row_dim();
    if s < m as u64 {
        return Err(Error::Infeasible { budget: s, rows: m });
    }
    let pool = RowPool::initial(spec)?;
    let pinned = pool.len();
    let out = rowgen(spec, s as f64, pool, pinned, &NodeBounds::default(), opts)?;
    let RowgenOutcome::Solved(out) = out else {
        return Err(Error::RankDeficient);
    };
    let best = out.best_round;
    Ok(BoundReport {
        bound: out.best_bound,
        relax_value: out.relax_value,
        rounds: out.rounds,
        pool_size_final: out.pool.len(),
        certificate: DualCertificate {
            theta: best.theta,
            tau: best.tau,
            scope: CertificateScope::Full,
            upper_bound: out.best_bound,
            ldet_theta: best.ldet_theta,
            budget: s as f64,
        },
        converged: out.converged,
        round_cap_hit: out.round_cap_hit,
        relax_converged: out.relax_converged,
        kw_gap: out.last_gap,
        pool: out.pool.points().to_vec(),
        weights: out.weights,
        history: out.history,
    })
}

/// Integer bounds on pool rows imposed by branching. Rows not listed are
/// free in `[0, s]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeBounds {
    bounds: BTreeMap<FactorPoint, (u32, u32)>,
}

impl NodeBounds {
    pub fn get(&self, point: &FactorPoint) -> Option<(u32, u32)> {
        self.bounds.get(point).copied()
    }

    /// Intersects the bounds of `point` with `[lo, hi]`.
    pub fn tighten(&mut self, point: &FactorPoint, lo: u32, hi: u32) {
        let e = self.bounds.entry(point.clone()).or_insert((0, u32::MAX));
        e.0 = e.0.max(lo);
        e.1 = e.1.min(hi);
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FactorPoint, (u32, u32))> + '_ {
        self.bounds.iter().map(|(p, &b)| (p, b))
    }

    pub fn lower_sum(&self) -> u64 {
        self.bounds.values().map(|&(l, _)| u64::from(l)).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.bounds.values().all(|&(l, u)| l <= u)
    }
}

/// Relaxation of a branch-and-bound node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeRelaxation {
    /// No feasible weights give a nonsingular information matrix.
    Infeasible,
    Solved(NodeSolution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolution {
    /// Valid upper bound for every integer design within the node bounds.
    pub bound: f64,
    pub relax_value: f64,
    pub pool: RowPool,
    pub weights: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Row-generation bound under node bounds, warm-starting from `pool`.
pub fn node_bound(
    spec: &ModelSpec,
    s: u64,
    pool: RowPool,
    bounds: &NodeBounds,
    opts: &BoundOptions,
) -> Result<NodeRelaxation> {
    let pinned = 0;
    match rowgen(spec, s as f64, pool, pinned, bounds, opts)? {
        RowgenOutcome::Infeasible => Ok(NodeRelaxation::Infeasible),
        RowgenOutcome::Solved(out) => Ok(NodeRelaxation::Solved(NodeSolution {
            bound: out.best_bound,
            relax_value: out.relax_value,
            pool: out.pool,
            weights: out.weights,
            rounds: out.rounds,
            converged: out.converged && out.relax_converged,
        })),
    }
}

struct RoundCert {
    theta: DenseMatrix,
    tau: f64,
    ldet_theta: f64,
}

struct Solved {
    best_bound: f64,
    best_round: RoundCert,
    relax_value: f64,
    rounds: usize,
    pool: RowPool,
    weights: Vec<f64>,
    converged: bool,
    round_cap_hit: bool,
    relax_converged: bool,
    last_gap: f64,
    history: Vec<RoundRecord>,
}

enum RowgenOutcome {
    Infeasible,
    Solved(Solved),
}

/// Per-row box for the pool under node bounds.
fn pool_box(pool: &RowPool, bounds: &NodeBounds, s: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut lo = vec![0.0; pool.len()];
    let mut hi = vec![s; pool.len()];
    let mut explicit = vec![false; pool.len()];
    for (i, p) in pool.points().iter().enumerate() {
        if let Some((l, u)) = bounds.get(p) {
            lo[i] = f64::from(l);
            hi[i] = f64::from(u).min(s);
            explicit[i] = true;
        }
    }
    (lo, hi, explicit)
}

/// `max Σ y_i g_i` over `Σ y = s`, `lo ≤ y ≤ hi`: start at `lo`, then fill
/// by decreasing gradient. `extra` is an optional free row `(g, cap)`.
fn box_lp(g: &[f64], lo: &[f64], hi: &[f64], s: f64, extra: Option<f64>) -> f64 {
    let mut value: f64 = g.iter().zip(lo).map(|(a, b)| a * b).sum();
    let mut rest = s - lo.iter().sum::<f64>();
    let mut order: Vec<(f64, f64)> = g
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&gi, (&l, &u))| (gi, u - l))
        .filter(|&(_, cap)| cap > 0.0)
        .collect();
    if let Some(ge) = extra {
        order.push((ge, s));
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (gi, cap) in order {
        if rest <= 0.0 {
            break;
        }
        let take = cap.min(rest);
        value += take * gi;
        rest -= take;
    }
    value
}

fn rowgen(
    spec: &ModelSpec,
    s: f64,
    mut pool: RowPool,
    pinned: usize,
    bounds: &NodeBounds,
    opts: &BoundOptions,
) -> Result<RowgenOutcome> {
    let m = spec.row_dim();
    if !bounds.is_consistent() || bounds.lower_sum() as f64 > s {
        return Ok(RowgenOutcome::Infeasible);
    }
    for (p, _) in bounds.iter() {
        pool.insert(p.clone())?;
    }
    let explicit_count = bounds.len();
    let oracle_k = explicit_count + opts.top_k.max(1);
    let is_free = |p: &FactorPoint| bounds.get(p).is_none();

    // Fixed point: x = lo is the only candidate.
    if bounds.lower_sum() as f64 == s {
        let (lo, _, _) = pool_box(&pool, bounds, s);
        return Ok(match pool.weighted_info(&lo) {
            Ok(info) => RowgenOutcome::Solved(Solved {
                best_bound: info.ldet(),
                best_round: RoundCert {
                    theta: info.inverse(),
                    tau: f64::NAN,
                    ldet_theta: -info.ldet(),
                },
                relax_value: info.ldet(),
                rounds: 0,
                pool,
                weights: lo,
                converged: true,
                round_cap_hit: false,
                relax_converged: true,
                last_gap: 0.0,
                history: Vec::new(),
            }),
            Err(Error::RankDeficient) => RowgenOutcome::Infeasible,
            Err(e) => return Err(e),
        });
    }

    if !ensure_free_row(spec, &mut pool, bounds, &opts.oracle)? {
        // every row is bounded; capacity is what it is
        let (lo, hi, _) = pool_box(&pool, bounds, s);
        let cap: f64 = hi.iter().zip(&lo).map(|(u, l)| u - l).sum();
        if cap < s - lo.iter().sum::<f64>() {
            return Ok(RowgenOutcome::Infeasible);
        }
    }
    if !ensure_span(spec, &mut pool, bounds, &opts.oracle)? {
        return Ok(RowgenOutcome::Infeasible);
    }

    let (lo, hi, _) = pool_box(&pool, bounds, s);
    let mut x = water_fill(&lo, &hi, s);
    let mut best: Option<(f64, RoundCert)> = None;
    let mut history = Vec::new();
    let mut rounds = 0;
    let mut added_rounds = 0;
    loop {
        let (lo, hi, explicit) = pool_box(&pool, bounds, s);
        let sol = pairwise_frank_wolfe(&pool, s, &lo, &hi, x, &opts.relax)?;
        let info = pool.weighted_info(&sol.weights)?;
        let g: Vec<f64> = (0..pool.len()).map(|i| info.quad_form(pool.row(i))).collect();
        let theta = info.inverse();
        let tau = g
            .iter()
            .zip(sol.weights.iter().zip(&hi))
            .filter(|&(_, (&xi, &ui))| xi < ui)
            .map(|(&gi, _)| gi)
            .fold(f64::NEG_INFINITY, f64::max);

        let priced = oracle::price(
            spec,
            &theta,
            &OracleOptions {
                top_k: oracle_k,
                ..opts.oracle
            },
        )?;
        rounds += 1;
        let free_best = priced.top.iter().find(|c| is_free(&c.point)).map(|c| c.value);
        let lp = box_lp(&g, &lo, &hi, s, free_best);
        let ldet_theta = -info.ldet();
        let bound = -ldet_theta - m as f64 + lp;
        let pool_lp = box_lp(&g, &lo, &hi, s, None);
        let last_gap = (lp - pool_lp + pool_lp - m as f64) / s;
        history.push(RoundRecord {
            relax_value: info.ldet(),
            bound,
            pool_size: pool.len(),
        });
        if best.as_ref().is_none_or(|(b, _)| bound < *b) {
            let tau_full = free_best.map_or(tau, |f| f.max(tau));
            best = Some((
                bound,
                RoundCert {
                    theta,
                    tau: tau_full,
                    ldet_theta,
                },
            ));
        }

        let threshold = tau * (1.0 + VIOLATION_TOL);
        let entering: Vec<FactorPoint> = priced
            .top
            .iter()
            .filter(|c| c.value > threshold && is_free(&c.point) && !pool.contains(&c.point))
            .take(opts.top_k.max(1))
            .map(|c| c.point.clone())
            .collect();
        let converged = entering.is_empty();
        let cap_hit = !converged && opts.max_rounds.is_some_and(|r| added_rounds >= r);
        if converged || cap_hit {
            let (best_bound, best_round) = best.expect("at least one round");
            return Ok(RowgenOutcome::Solved(Solved {
                best_bound,
                best_round,
                relax_value: sol.ldet_value,
                rounds,
                pool,
                weights: sol.weights,
                converged,
                round_cap_hit: cap_hit,
                relax_converged: sol.converged,
                last_gap,
                history,
            }));
        }
        added_rounds += 1;

        let mut weights = sol.weights;
        if opts.drop {
            let keep: Vec<bool> = (0..pool.len())
                .map(|i| i < pinned || explicit[i] || weights[i] >= opts.eps_drop)
                .collect();
            if keep.iter().any(|k| !k) {
                let mut it = keep.iter();
                weights.retain(|_| *it.next().unwrap());
                // dropped mass is below eps_drop per row; renormalize to s
                let total: f64 = weights.iter().sum();
                let lo_now: Vec<f64> = {
                    let mut p2 = pool.clone();
                    p2.retain(&keep);
                    pool_box(&p2, bounds, s).0
                };
                let free_total: f64 = total - lo_now.iter().sum::<f64>();
                let want = s - lo_now.iter().sum::<f64>();
                if free_total > 0.0 {
                    for (w, l) in weights.iter_mut().zip(&lo_now) {
                        *w = l + (*w - l) * want / free_total;
                    }
                }
                pool.retain(&keep);
            }
        }
        for p in entering {
            pool.insert(p)?;
            weights.push(0.0);
        }
        x = weights;
    }
}

/// Makes sure the pool has a row without explicit bounds (one can absorb
/// any leftover budget). Returns `false` if no such row exists at all.
fn ensure_free_row(
    spec: &ModelSpec,
    pool: &mut RowPool,
    bounds: &NodeBounds,
    oracle_opts: &OracleOptions,
) -> Result<bool> {
    if pool.points().iter().any(|p| bounds.get(p).is_none()) {
        return Ok(true);
    }
    let q = DenseMatrix::identity(spec.row_dim());
    let priced = oracle::price(
        spec,
        &q,
        &OracleOptions {
            top_k: bounds.len() + 1,
            ..*oracle_opts
        },
    )?;
    match priced.top.into_iter().find(|c| bounds.get(&c.point).is_none()) {
        Some(c) => {
            pool.insert(c.point)?;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Adds rows until the rows allowed positive weight span `ℝ^m`, pricing
/// the projector onto the orthogonal complement of their span. Returns
/// `false` when no admissible row leaves the span.
fn ensure_span(
    spec: &ModelSpec,
    pool: &mut RowPool,
    bounds: &NodeBounds,
    oracle_opts: &OracleOptions,
) -> Result<bool> {
    let m = spec.row_dim();
    loop {
        let allowed = (0..pool.len()).filter(|&i| bounds.get(&pool.points()[i]).is_none_or(|(_, u)| u > 0));
        let basis = orthonormal_basis(m, allowed.map(|i| pool.row(i)), 1e-9);
        if basis.len() == m {
            return Ok(true);
        }
        let mut q = DenseMatrix::identity(m);
        for b in &basis {
            q.add_outer(-1.0, b);
        }
        let priced = oracle::price(
            spec,
            &q,
            &OracleOptions {
                top_k: bounds.len() + 1,
                ..*oracle_opts
            },
        )?;
        let next = priced
            .top
            .into_iter()
            .find(|c| bounds.get(&c.point).is_none() && c.value > 1e-8);
        match next {
            Some(c) if !pool.contains(&c.point) => {
                pool.insert(c.point)?;
            }
            _ => return Ok(false),
        }
    }
}

/// Feasible start: each row at its lower bound, the remaining budget
/// spread as evenly as the upper bounds allow.
fn water_fill(lo: &[f64], hi: &[f64], s: f64) -> Vec<f64> {
    let mut x = lo.to_vec();
    let mut rest = s - lo.iter().sum::<f64>();
    let mut open: Vec<usize> = (0..lo.len()).filter(|&i| hi[i] > lo[i]).collect();
    while rest > 0.0 && !open.is_empty() {
        let share = rest / open.len() as f64;
        let mut next = Vec::with_capacity(open.len());
        for &i in &open {
            let room = hi[i] - x[i];
            if room <= share {
                x[i] = hi[i];
                rest -= room;
            } else {
                next.push(i);
            }
        }
        if next.len() == open.len() {
            for &i in &next {
                x[i] += share;
            }
            rest = 0.0;
        }
        open = next;
    }
    x
}

/// Iterations between fresh refactorizations of `B(x)`.
const REFRESH_EVERY: usize = 64;

struct FwState {
    binv: DenseMatrix,
    g: Vec<f64>,
}

fn fresh_state(pool: &RowPool, x: &[f64]) -> Result<FwState> {
    let info = pool.weighted_info(x)?;
    let g = (0..pool.len()).map(|i| info.quad_form(pool.row(i))).collect();
    Ok(FwState {
        binv: info.inverse(),
        g,
    })
}

/// Pairwise Frank-Wolfe on `{Σ x = s, lo ≤ x ≤ hi}` maximizing
/// `ldet B(x)`.
fn pairwise_frank_wolfe(
    pool: &RowPool,
    s: f64,
    lo: &[f64],
    hi: &[f64],
    mut x: Vec<f64>,
    opts: &RelaxOptions,
) -> Result<RelaxSolution> {
    let m = pool.spec.row_dim();
    let p = pool.len();
    let mut st = fresh_state(pool, &x)?;
    let slack = 1e-14 * s;
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut ut = vec![0.0; m];
    let mut ua = vec![0.0; m];
    let mut ht = vec![0.0; p];
    let mut ha = vec![0.0; p];
    while iterations < opts.max_iterations {
        let lp = box_lp(&st.g, lo, hi, s, None);
        let inner: f64 = x.iter().zip(&st.g).map(|(a, b)| a * b).sum();
        gap = (lp - inner) / s;
        if gap <= opts.eps_kw {
            converged = true;
            break;
        }
        let mut t = usize::MAX;
        let mut a = usize::MAX;
        for i in 0..p {
            if x[i] < hi[i] - slack && (t == usize::MAX || st.g[i] > st.g[t]) {
                t = i;
            }
            if x[i] > lo[i] + slack && (a == usize::MAX || st.g[i] < st.g[a]) {
                a = i;
            }
        }
        if t == usize::MAX || a == usize::MAX || t == a || st.g[t] <= st.g[a] {
            converged = gap <= opts.eps_kw;
            break;
        }
        let vt = pool.row(t);
        let va = pool.row(a);
        for i in 0..m {
            ut[i] = dot(st.binv.row(i), vt);
            ua[i] = dot(st.binv.row(i), va);
        }
        let qtt = st.g[t];
        let qaa = st.g[a];
        let qta = dot(&ut, va);
        let det_coef = qtt * qaa - qta * qta;
        let step_max = (hi[t] - x[t]).min(x[a] - lo[a]);
        let step = if det_coef > 0.0 {
            ((qtt - qaa) / (2.0 * det_coef)).min(step_max)
        } else {
            step_max
        };
        if !(step > 0.0) {
            break;
        }
        // ratio det B' / det B = r(δ)
        let r = 1.0 + step * (qtt - qaa) - step * step * det_coef;
        if !(r > 0.0) {
            break;
        }
        x[t] += step;
        if step == x[a] - lo[a] {
            x[a] = lo[a];
        } else {
            x[a] -= step;
        }
        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            st = fresh_state(pool, &x)?;
            continue;
        }
        // Woodbury with U = [v_t v_a], C = diag(δ, −δ):
        // S = C⁻¹ + UᵀB⁻¹U, B'⁻¹ = B⁻¹ − Z S⁻¹ Zᵀ with Z = [u_t u_a].
        let s11 = 1.0 / step + qtt;
        let s22 = -1.0 / step + qaa;
        let s12 = qta;
        let det_s = s11 * s22 - s12 * s12;
        let (i11, i22, i12) = (s22 / det_s, s11 / det_s, -s12 / det_s);
        for i in 0..m {
            let row = st.binv.row_mut(i);
            let (zt, za) = (ut[i], ua[i]);
            let ct = i11 * zt + i12 * za;
            let ca = i12 * zt + i22 * za;
            for j in 0..m {
                row[j] -= ct * ut[j] + ca * ua[j];
            }
        }
        for i in 0..p {
            ht[i] = dot(&ut, pool.row(i));
            ha[i] = dot(&ua, pool.row(i));
        }
        for i in 0..p {
            let (a1, a2) = (ht[i], ha[i]);
            st.g[i] -= i11 * a1 * a1 + 2.0 * i12 * a1 * a2 + i22 * a2 * a2;
        }
    }
    let info = pool.weighted_info(&x)?;
    let g: Vec<f64> = (0..p).map(|i| info.quad_form(pool.row(i))).collect();
    let lp = box_lp(&g, lo, hi, s, None);
    let inner: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
    let fresh_gap = (lp - inner) / s;
    let _ = gap;
    Ok(RelaxSolution {
        weights: x,
        budget: s,
        ldet_value: info.ldet(),
        gap: fresh_gap,
        iterations,
        converged: converged && fresh_gap <= opts.eps_kw * 1.01 + 1e-12,
    })
}
