//! Cross-checks of the fast paths against the dense reference answers, and
//! independent validation of certificate files.

use dopt_core::bnb::{solve_exact, SolveOptions};
use dopt_core::localsearch::{local_search, LocalSearchOptions, DEFAULT_EPS_IMP};
use dopt_core::oracle::{self, OracleOptions};
use dopt_core::reference::{
    brute_force_optimum, brute_force_price, certificate_violation, dense_relaxation,
    exchange_local_optimum_check, multiset_count, MULTISET_CAP, RELAXATION_CAP,
};
use dopt_core::relax::{natural_bound_rowgen, BoundOptions, RelaxOptions};
use dopt_core::{DenseMatrix, Error, InfoMatrix, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::json::{CertificateJson, CheckJson};

/// Dual constraints may be violated by at most this.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Relative tolerance on `bound = −ldet Θ + τs − m`.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Instances the bare `verify` command checks.
pub fn default_suite() -> Vec<(ModelSpec, u64)> {
    vec![
        (ModelSpec::linear(2, 2).unwrap(), 4),
        (ModelSpec::linear(3, 2).unwrap(), 6),
        (ModelSpec::linear(2, 3).unwrap(), 5),
        (ModelSpec::quadratic(2, 3).unwrap(), 7),
    ]
}

/// `GᵀG` with entries of `G` uniform in `[−1, 1]`.
pub fn random_psd(m: usize, rng: &mut impl Rng) -> DenseMatrix {
    let mut q = DenseMatrix::zeros(m, m);
    for _ in 0..m {
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        q.add_outer(1.0, &g);
    }
    q
}

fn check(name: &str, spec: &ModelSpec, s: u64, passed: bool, detail: String) -> CheckJson {
    CheckJson {
        name: name.to_string(),
        instance: format!("{spec} s={s}"),
        passed,
        detail,
    }
}

/// Fails with a capacity error when the dense references cannot run.
pub fn ensure_reference_capacity(spec: &ModelSpec) -> dopt_core::Result<()> {
    match spec.row_count() {
        Some(n) if n <= RELAXATION_CAP => Ok(()),
        _ => Err(Error::ReferenceCapacity(format!(
            "{spec} has more than {RELAXATION_CAP} rows"
        ))),
    }
}

/// Runs every cross-check on one instance.
pub fn check_instance(spec: &ModelSpec, s: u64, seed: u64) -> dopt_core::Result<Vec<CheckJson>> {
    ensure_reference_capacity(spec)?;
    let m = spec.row_dim();
    let mut out = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut point_mismatch = None;
    for _ in 0..20 {
        let q = random_psd(m, &mut rng);
        let fast = oracle::price(spec, &q, &OracleOptions::default())?;
        let (p, v) = brute_force_price(spec, &q)?;
        worst = worst.max((fast.best_value - v).abs() / v.abs().max(1.0));
        if fast.best_point != p && point_mismatch.is_none() {
            point_mismatch = Some(format!("oracle {} vs dense {}", fast.best_point, p));
        }
    }
    out.push(check(
        "oracle-vs-dense",
        spec,
        s,
        worst <= 1e-9 && point_mismatch.is_none(),
        point_mismatch.unwrap_or_else(|| format!("max relative value error {worst:.3e}")),
    ));

    let (ls_design, ls_trace) = local_search(spec, s, &LocalSearchOptions::default())?;
    let ls = ls_trace.final_ldet();

    let brute = if multiset_count(spec.row_count().unwrap_or(u64::MAX), s) <= MULTISET_CAP {
        Some(brute_force_optimum(spec, s)?.1)
    } else {
        None
    };
    let local = exchange_local_optimum_check(spec, &ls_design, DEFAULT_EPS_IMP)?;
    let ls_ok = brute.is_some_and(|b| ls >= b - 1e-6) || local.is_local_optimum;
    out.push(check(
        "local-search",
        spec,
        s,
        ls_ok,
        format!(
            "ldet {ls:.12}, best single exchange gain {:.3e}{}",
            local.best_gain,
            brute.map_or(String::new(), |b| format!(", optimum {b:.12}"))
        ),
    ));

    let exact = solve_exact(spec, s, &SolveOptions::default())?;
    let exact_ldet = exact.proof.optimal_ldet;
    match brute {
        Some(b) => out.push(check(
            "exact-vs-enumeration",
            spec,
            s,
            exact.proof.is_optimal() && (exact_ldet - b).abs() <= 1e-6,
            format!("branch-and-bound {exact_ldet:.12}, enumeration {b:.12}"),
        )),
        None => out.push(check(
            "exact-vs-enumeration",
            spec,
            s,
            true,
            "skipped: too many multisets".to_string(),
        )),
    }

    let bound_opts = BoundOptions {
        relax: RelaxOptions {
            eps_kw: 1e-7,
            ..RelaxOptions::default()
        },
        ..BoundOptions::default()
    };
    let bound = natural_bound_rowgen(spec, s, &bound_opts)?;
    let dense = dense_relaxation(spec, s as f64)?;
    let diff = (bound.bound - dense.value).abs();
    out.push(check(
        "bound-vs-dense-relaxation",
        spec,
        s,
        diff <= 1e-5 && bound.kw_gap <= 1e-6,
        format!(
            "bound {:.12}, dense {:.12}, kw gap {:.3e}",
            bound.bound, dense.value, bound.kw_gap
        ),
    ));

    let cert = CertificateJson::new(spec, s, &bound.certificate);
    let problems = certificate_problems(&cert)?;
    out.push(check(
        "certificate",
        spec,
        s,
        problems.is_empty(),
        if problems.is_empty() {
            "dual feasible on every row".to_string()
        } else {
            problems.join("; ")
        },
    ));

    out.push(check(
        "sandwich",
        spec,
        s,
        ls <= exact_ldet + 1e-6 && exact_ldet <= bound.bound + 1e-6,
        format!(
            "local {ls:.9} <= exact {exact_ldet:.9} <= bound {:.9}",
            bound.bound
        ),
    ));
    Ok(out)
}

/// Everything wrong with a certificate, empty when it is valid. Dual
/// feasibility is checked over every implicit row through the oracle, and
/// densely as well when the instance is small.
pub fn certificate_problems(cert: &CertificateJson) -> dopt_core::Result<Vec<String>> {
    let spec = cert.model.to_spec()?;
    let m = spec.row_dim();
    let mut problems = Vec::new();
    if cert.scope != "full" {
        problems.push(format!("scope is {:?}, not \"full\"", cert.scope));
    }
    let theta = cert.theta_matrix()?;
    let asym = theta.max_asymmetry();
    if asym > 1e-12 * theta.frobenius_norm().max(1.0) {
        problems.push(format!("theta is not symmetric (max asymmetry {asym:.3e})"));
    }
    let info = match InfoMatrix::from_matrix(&theta) {
        Ok(info) => info,
        Err(_) => {
            problems.push("theta is not positive definite".to_string());
            return Ok(problems);
        }
    };
    let s = cert.s as f64;
    let expected = -info.ldet() + cert.tau * s - m as f64;
    if (expected - cert.bound).abs() > IDENTITY_TOL * expected.abs().max(1.0) {
        problems.push(format!(
            "bound {:.16e} differs from -ldet(theta) + tau*s - m = {expected:.16e}",
            cert.bound
        ));
    }
    let priced = oracle::price(&spec, &theta, &OracleOptions::default())?;
    if priced.best_value - cert.tau > FEASIBILITY_TOL {
        problems.push(format!(
            "row {} violates the dual constraint: v'(theta)v = {:.16e} > tau = {:.16e}",
            priced.best_point, priced.best_value, cert.tau
        ));
    }
    if spec.row_count().is_some_and(|n| n <= RELAXATION_CAP) {
        let dense = certificate_violation(&spec, &theta, cert.tau)?;
        if dense > FEASIBILITY_TOL && priced.best_value - cert.tau <= FEASIBILITY_TOL {
            problems.push(format!("dense scan finds a violation of {dense:.3e}"));
        }
    }
    Ok(problems)
}
