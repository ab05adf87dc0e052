//! Exchange local search with oracle-generated entering rows.
//!
//! A move takes one unit of multiplicity off a support point `j` and puts
//! it on a row `v` that is never listed explicitly: with `M = B − v_j v_jᵀ`,
//! `ldet(M + vvᵀ) = ldet M + log(1 + vᵀM⁻¹v)`, so the best entering row for
//! `j` maximizes `vᵀM⁻¹v`, which is a pricing problem. Since
//! `M⁻¹ = B⁻¹ + B⁻¹v_j v_jᵀB⁻¹ / (1 − v_jᵀB⁻¹v_j)`, all leaving rows are
//! priced together as rank-one corrections of `B⁻¹` in one oracle sweep.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::infomat::InfoMatrix;
use crate::instance::{Design, FactorPoint, ModelKind, ModelSpec};
use crate::math;
use crate::oracle::{self, OracleOptions, RankOneTerm};

pub const DEFAULT_EPS_IMP: f64 = 1e-8;

/// Refactorize from the design after this many incremental moves.
const REBUILD_EVERY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeMove {
    pub leave: FactorPoint,
    pub enter: FactorPoint,
    pub delta_ldet: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// `ldet` after the move.
    pub ldet: f64,
    pub mv: ExchangeMove,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub initial_ldet: f64,
    pub iterations: Vec<TraceStep>,
    /// Leaving rows skipped because `B − v_j v_jᵀ` was singular, summed
    /// over all scans.
    pub skipped_singular: usize,
    /// True when `max_iterations` stopped the search.
    pub iteration_cap_hit: bool,
    /// Perturbed restarts run after the first descent.
    pub restarts: usize,
}

impl SearchTrace {
    pub fn final_ldet(&self) -> f64 {
        self.iterations.last().map_or(self.initial_ldet, |s| s.ldet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchOptions {
    pub max_iterations: Option<usize>,
    /// Relative improvement a move must exceed: `Δ > eps_imp · max(1, |ldet|)`.
    pub eps_imp: f64,
    pub oracle: OracleOptions,
    /// Extra descents from seeded perturbations of the start design.
    pub restarts: usize,
    pub seed: u64,
    /// Start here instead of [`initial_design`].
    pub initial: Option<Design>,
}

impl Default for LocalSearchOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            eps_imp: DEFAULT_EPS_IMP,
            oracle: OracleOptions::default(),
            restarts: 0,
            seed: 0,
            initial: None,
        }
    }
}

/// Points of the starting design, before multiplicities: `0` and the unit
/// vectors `e_i`, plus `2e_i` and `e_i + e_j` for the quadratic model. The
/// expanded rows form an invertible `m × m` matrix.
pub fn initial_points(spec: &ModelSpec) -> Result<Vec<FactorPoint>> {
    let f = spec.factors();
    if spec.kind() == ModelKind::Quadratic && spec.levels() < 3 {
        return Err(Error::QuadraticNeedsThreeLevels);
    }
    let unit = |i: usize, a: u32| {
        let mut p = FactorPoint::zeros(f);
        p.0[i] = a;
        p
    };
    let mut points = Vec::with_capacity(spec.row_dim());
    points.push(FactorPoint::zeros(f));
    points.extend((0..f).map(|i| unit(i, 1)));
    if spec.kind() == ModelKind::Quadratic {
        points.extend((0..f).map(|i| unit(i, 2)));
        for i in 0..f {
            for j in (i + 1)..f {
                let mut p = unit(i, 1);
                p.0[j] = 1;
                points.push(p);
            }
        }
    }
    points.sort();
    Ok(points)
}

/// Starting design with budget `s`: every initial point gets `⌊s/m⌋`, and
/// the `s mod m` points earliest in row order get one more.
pub fn initial_design(spec: &ModelSpec, s: u64) -> Result<Design> {
    let points = initial_points(spec)?;
    let m = spec.row_dim();
    if s < m as u64 {
        return Err(Error::Infeasible { budget: s, rows: m });
    }
    let base = s / m as u64;
    let extra = (s % m as u64) as usize;
    let base = u32::try_from(base)
        .map_err(|_| Error::InvalidDesign(alloc::format!("budget {s} too large")))?;
    Design::from_pairs(
        spec,
        points
            .into_iter()
            .enumerate()
            .map(|(i, p)| (p, base + u32::from(i < extra))),
    )
}

/// Gain of replacing `v_j` by the best entering row: `ldet M + log(1 + q) −
/// ldet B`.
pub fn exchange_gain(ldet_b: f64, ldet_m: f64, q: f64) -> f64 {
    ldet_m + math::ln_1p(q) - ldet_b
}

/// Outcome of pricing one leaving row.
#[derive(Debug, Clone, PartialEq)]
pub enum LeaveScan {
    /// `B − v_j v_jᵀ` is singular; the removal is inadmissible.
    Singular { leave: FactorPoint },
    Priced {
        leave: FactorPoint,
        /// `ldet(B − v_j v_jᵀ)`
        ldet_without: f64,
        /// Maximizer of `vᵀM⁻¹v` over all rows.
        enter: FactorPoint,
        /// Its value.
        value: f64,
    },
}

/// Prices every support point of `design` as the leaving row. Entries are
/// in support order.
pub fn exchange_scan(
    spec: &ModelSpec,
    design: &Design,
    info: &InfoMatrix,
    oracle_opts: &OracleOptions,
) -> Result<Vec<LeaveScan>> {
    let m = spec.row_dim();
    let mut terms = Vec::new();
    let mut slots = Vec::new();
    let mut v = alloc::vec![0.0; m];
    for point in design.points() {
        spec.expand_into(point.levels(), &mut v);
        match info.rank_one_downdate(&v) {
            Ok(without) => {
                let u = info.solve(&v);
                let d = crate::linalg::dot(&u, &v);
                terms.push(RankOneTerm {
                    u,
                    weight: 1.0 / (1.0 - d),
                });
                slots.push((point.clone(), Some(without.ldet())));
            }
            Err(Error::Singular { .. }) => slots.push((point.clone(), None)),
            Err(e) => return Err(e),
        }
    }
    let base = info.inverse();
    let priced = oracle::price_corrected(spec, &base, &terms, oracle_opts)?;
    let mut priced = priced.into_iter();
    Ok(slots
        .into_iter()
        .map(|(leave, ldet_without)| match ldet_without {
            None => LeaveScan::Singular { leave },
            Some(ldet_without) => {
                let r = priced.next().expect("one result per admissible leave");
                LeaveScan::Priced {
                    leave,
                    ldet_without,
                    enter: r.best_point,
                    value: r.best_value,
                }
            }
        })
        .collect())
}

/// Best improving exchange over all leaving rows, with the number of
/// singular removals skipped.
pub fn best_exchange(
    spec: &ModelSpec,
    design: &Design,
    info: &InfoMatrix,
    opts: &LocalSearchOptions,
) -> Result<(Option<ExchangeMove>, usize)> {
    let scan = exchange_scan(spec, design, info, &opts.oracle)?;
    let threshold = opts.eps_imp * info.ldet().abs().max(1.0);
    let mut skipped = 0;
    let mut best: Option<ExchangeMove> = None;
    for entry in scan {
        match entry {
            LeaveScan::Singular { .. } => skipped += 1,
            LeaveScan::Priced {
                leave,
                ldet_without,
                enter,
                value,
            } => {
                if enter == leave {
                    continue;
                }
                let gain = exchange_gain(info.ldet(), ldet_without, value);
                if gain > threshold && best.as_ref().is_none_or(|b| gain > b.delta_ldet) {
                    best = Some(ExchangeMove {
                        leave,
                        enter,
                        delta_ldet: gain,
                    });
                }
            }
        }
    }
    Ok((best, skipped))
}

/// Repeated best exchanges from the start design until none improves.
pub fn local_search(
    spec: &ModelSpec,
    s: u64,
    opts: &LocalSearchOptions,
) -> Result<(Design, SearchTrace)> {
    let m = spec.row_dim();
    if s < m as u64 {
        return Err(Error::Infeasible { budget: s, rows: m });
    }
    let start = match &opts.initial {
        Some(d) if d.budget() != s => {
            return Err(Error::InvalidDesign(alloc::format!(
                "start design has budget {}, expected {s}",
                d.budget()
            )))
        }
        Some(d) => d.clone(),
        None => initial_design(spec, s)?,
    };
    let (mut best_design, mut best_trace) = descend(spec, start.clone(), opts)?;
    if opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let perturbed = perturb(spec, &start, &mut rng)?;
            let (d, t) = descend(spec, perturbed, opts)?;
            let margin = opts.eps_imp * best_trace.final_ldet().abs().max(1.0);
            if t.final_ldet() > best_trace.final_ldet() + margin {
                best_design = d;
                best_trace = t;
            }
        }
        best_trace.restarts = opts.restarts;
    }
    Ok((best_design, best_trace))
}

fn descend(spec: &ModelSpec, mut design: Design, opts: &LocalSearchOptions) -> Result<(Design, SearchTrace)> {
    let mut info = design.info(spec)?;
    let mut trace = SearchTrace {
        initial_ldet: info.ldet(),
        ..Default::default()
    };
    loop {
        if opts.max_iterations.is_some_and(|cap| trace.iterations.len() >= cap) {
            trace.iteration_cap_hit = true;
            break;
        }
        let (mv, skipped) = best_exchange(spec, &design, &info, opts)?;
        trace.skipped_singular += skipped;
        let Some(mv) = mv else { break };
        design.exchange(&mv.leave, &mv.enter)?;
        if (trace.iterations.len() + 1).is_multiple_of(REBUILD_EVERY) {
            info = design.info(spec)?;
        } else {
            let leave = spec.expand(&mv.leave)?;
            let enter = spec.expand(&mv.enter)?;
            info = info.rank_one_downdate(&leave)?.rank_one_update(&enter)?;
        }
        trace.iterations.push(TraceStep {
            ldet: info.ldet(),
            mv,
        });
    }
    Ok((design, trace))
}

/// Moves about a quarter of the budget to uniformly drawn rows, keeping
/// only moves that leave the design nonsingular.
fn perturb(spec: &ModelSpec, start: &Design, rng: &mut ChaCha8Rng) -> Result<Design> {
    let mut design = start.clone();
    let moves = (design.budget() / 4).max(1);
    let levels = u64::from(spec.levels());
    for _ in 0..moves {
        let support: Vec<FactorPoint> = design.points().cloned().collect();
        let leave = &support[(rng.next_u64() % support.len() as u64) as usize];
        let enter = FactorPoint(
            (0..spec.factors())
                .map(|_| (rng.next_u64() % levels) as u32)
                .collect(),
        );
        let mut trial = design.clone();
        trial.exchange(leave, &enter)?;
        if trial.info(spec).is_ok() {
            design = trial;
        }
    }
    Ok(design)
}
