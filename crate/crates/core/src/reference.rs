//! Dense brute-force answers for small instances. Everything here
//! materializes the full row matrix and recomputes from scratch, so it
//! shares no incremental machinery with the fast paths it checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::infomat::InfoMatrix;
use crate::instance::{Design, FactorPoint, ModelSpec};
use crate::linalg::DenseMatrix;

/// Largest row count the dense scans accept.
pub const PRICE_CAP: u64 = 100_000;
/// Largest number of multisets `brute_force_optimum` enumerates.
pub const MULTISET_CAP: u64 = 10_000_000;
/// Largest row count for `dense_relaxation`.
pub const RELAXATION_CAP: u64 = 10_000;
pub const RELAXATION_GAP: f64 = 1e-8;

fn dense_rows(spec: &ModelSpec, cap: u64) -> Result<DenseMatrix> {
    spec.materialize_dense(cap).map_err(|e| match e {
        Error::TooLargeToMaterialize { rows, cap } => {
            Error::ReferenceCapacity(alloc::format!("{rows} rows exceed the dense cap of {cap}"))
        }
        e => e,
    })
}

/// Maximizer of `vᵀQv` over every row, scanning in index order and keeping
/// the first of equal values.
pub fn brute_force_price(spec: &ModelSpec, q: &DenseMatrix) -> Result<(FactorPoint, f64)> {
    let m = spec.row_dim();
    if q.rows() != m || q.cols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: q.rows(),
        });
    }
    let rows = dense_rows(spec, PRICE_CAP)?;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..rows.rows() {
        let v = q.quad_form(rows.row(i));
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok((spec.decode(best.0 as u64)?, best.1))
}

/// `C(n + s − 1, s)`, saturating.
pub fn multiset_count(n: u64, s: u64) -> u64 {
    let mut c: u128 = 1;
    for i in 0..s {
        c = c * u128::from(n + i) / u128::from(i + 1);
        if c > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    c as u64
}

/// Exact optimum by enumerating every multiset of `s` rows. Ties within
/// `1e-12` keep the first multiset in lexicographic index order.
pub fn brute_force_optimum(spec: &ModelSpec, s: u64) -> Result<(Design, f64)> {
    let m = spec.row_dim();
    if s < m as u64 {
        return Err(Error::Infeasible { budget: s, rows: m });
    }
    let n = spec.row_count().ok_or(Error::AstronomicalIndex)?;
    let count = multiset_count(n, s);
    if count > MULTISET_CAP {
        return Err(Error::ReferenceCapacity(alloc::format!(
            "{count} multisets exceed the cap of {MULTISET_CAP}"
        )));
    }
    let rows = dense_rows(spec, PRICE_CAP)?;
    let s = s as usize;
    let mut pick = vec![0usize; s];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let info = InfoMatrix::from_weighted_rows(m, pick.iter().map(|&i| (rows.row(i), 1.0)));
        if let Ok(info) = info {
            let v = info.ldet();
            if best.as_ref().is_none_or(|(_, b)| v > b + 1e-12) {
                best = Some((pick.clone(), v));
            }
        }
        // next nondecreasing sequence
        let Some(k) = (0..s).rev().find(|&k| pick[k] + 1 < n as usize) else {
            break;
        };
        let next = pick[k] + 1;
        for p in &mut pick[k..] {
            *p = next;
        }
    }
    let (pick, ldet) = best.ok_or(Error::RankDeficient)?;
    let mut counts: alloc::collections::BTreeMap<usize, u32> = Default::default();
    for i in pick {
        *counts.entry(i).or_default() += 1;
    }
    let design = Design::from_pairs(
        spec,
        counts
            .into_iter()
            .map(|(i, k)| Ok((spec.decode(i as u64)?, k)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok((design, ldet))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseRelaxation {
    /// One weight per row, in index order, summing to `s`.
    pub weights: Vec<f64>,
    pub value: f64,
    pub kw_gap: f64,
    pub iterations: usize,
}

/// Natural relaxation over all rows by Frank-Wolfe with Wolfe-Atwood away
/// steps, refactorizing `B(x)` every iteration, to a KW gap of `1e-8`.
pub fn dense_relaxation(spec: &ModelSpec, s: f64) -> Result<DenseRelaxation> {
    let m = spec.row_dim();
    let rows = dense_rows(spec, RELAXATION_CAP)?;
    let n = rows.rows();
    let mut x = vec![s / n as f64; n];
    let info_of = |x: &[f64]| {
        InfoMatrix::from_weighted_rows(m, (0..n).map(|i| (rows.row(i), x[i])))
    };
    let mf = m as f64;
    let mut iterations = 0;
    loop {
        let info = info_of(&x)?;
        let q: Vec<f64> = (0..n).map(|i| info.quad_form(rows.row(i))).collect();
        let (t, qt) = q
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        let (a, qa) = q
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, _)| x[i] > 0.0)
            .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
        let gap = qt - mf / s;
        if gap <= RELAXATION_GAP || iterations >= 10_000_000 {
            return Ok(DenseRelaxation {
                weights: x,
                value: info.ldet(),
                kw_gap: gap,
                iterations,
            });
        }
        iterations += 1;
        // x ← (1 − α)x + α s e_j, optimal α = (sq − m)/(m(sq − 1))
        let toward = s * qt - mf;
        let away = mf - s * qa;
        let is_away = away > toward;
        let (j, sq) = if is_away { (a, s * qa) } else { (t, s * qt) };
        let alpha_min = -x[j] / (s - x[j]);
        // an away row with sq ≤ 1 gains all the way to removal
        let alpha = if is_away && sq <= 1.0 {
            alpha_min
        } else {
            (sq - mf) / (mf * (sq - 1.0))
        };
        let alpha = alpha.clamp(alpha_min, 1.0);
        for w in x.iter_mut() {
            *w *= 1.0 - alpha;
        }
        if alpha == alpha_min {
            x[j] = 0.0;
        } else {
            x[j] += alpha * s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeCheck {
    /// Largest `ldet` gain over every single exchange, recomputed densely.
    pub best_gain: f64,
    pub best_move: Option<(FactorPoint, FactorPoint)>,
    /// No exchange beats `eps_imp · max(1, |ldet B|)`.
    pub is_local_optimum: bool,
}

/// Tries every (support point, row) exchange with a fresh factorization.
pub fn exchange_local_optimum_check(
    spec: &ModelSpec,
    design: &Design,
    eps_imp: f64,
) -> Result<ExchangeCheck> {
    let m = spec.row_dim();
    let rows = dense_rows(spec, PRICE_CAP)?;
    let base = design.info(spec)?.ldet();
    let (drows, mults) = design.rows(spec)?;
    let mut best_gain = f64::NEG_INFINITY;
    let mut best_move = None;
    for (j, leave) in design.points().enumerate() {
        for e in 0..rows.rows() {
            let mut weighted: Vec<(&[f64], f64)> = drows
                .iter()
                .zip(&mults)
                .enumerate()
                .map(|(k, (r, &c))| (r.as_slice(), f64::from(c) - f64::from(u8::from(k == j))))
                .collect();
            weighted.push((rows.row(e), 1.0));
            let Ok(info) = InfoMatrix::from_weighted_rows(m, weighted) else {
                continue;
            };
            let gain = info.ldet() - base;
            if gain > best_gain {
                best_gain = gain;
                best_move = Some((leave.clone(), spec.decode(e as u64)?));
            }
        }
    }
    Ok(ExchangeCheck {
        best_gain,
        best_move,
        is_local_optimum: !(best_gain > eps_imp * base.abs().max(1.0)),
    })
}

/// `max_i (v_iᵀΘv_i − τ)` over every row.
pub fn certificate_violation(spec: &ModelSpec, theta: &DenseMatrix, tau: f64) -> Result<f64> {
    let rows = dense_rows(spec, PRICE_CAP)?;
    Ok((0..rows.rows())
        .map(|i| theta.quad_form(rows.row(i)) - tau)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `−ldet Θ + τs − m` with `Θ` factorized afresh.
pub fn certificate_objective(theta: &DenseMatrix, tau: f64, s: f64) -> Result<f64> {
    let info = InfoMatrix::from_matrix(theta)?;
    Ok(-info.ldet() + tau * s - theta.rows() as f64)
}
