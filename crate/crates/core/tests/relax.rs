use dopt_core::localsearch::{local_search, LocalSearchOptions};
use dopt_core::oracle::OracleOptions;
use dopt_core::reference::{brute_force_optimum, certificate_violation, dense_relaxation};
use dopt_core::relax::{
    complete_certificate, dual_certificate, kw_gap, natural_bound_rowgen, solve_restricted, BoundOptions,
    CertificateScope, RelaxOptions, RowPool,
};
use dopt_core::{InfoMatrix, ModelSpec};
use proptest::prelude::*;

fn tiny_instances() -> Vec<(ModelSpec, u64)> {
    let mut out = Vec::new();
    for f in 1..=3 {
        let spec = ModelSpec::linear(f, 2).unwrap();
        let m = spec.row_dim() as u64;
        out.extend((m..=m + 3).map(|s| (spec.clone(), s)));
    }
    let spec = ModelSpec::linear(2, 3).unwrap();
    out.extend((3..=6).map(|s| (spec.clone(), s)));
    let spec = ModelSpec::quadratic(2, 3).unwrap();
    out.extend((6..=9).map(|s| (spec.clone(), s)));
    out
}

#[test]
fn bound_dominates_the_integer_optimum() {
    for (spec, s) in tiny_instances() {
        let r = natural_bound_rowgen(&spec, s, &BoundOptions::default()).unwrap();
        let (_, best) = brute_force_optimum(&spec, s).unwrap();
        assert!(r.bound >= best - 1e-8, "{spec} s={s}: {} < {best}", r.bound);
        let (_, t) = local_search(&spec, s, &LocalSearchOptions::default()).unwrap();
        assert!(r.bound >= t.final_ldet() - 1e-8);
    }
}

#[test]
fn full_certificates_hold_on_every_row() {
    let mut cases = tiny_instances();
    cases.push((ModelSpec::quadratic(3, 3).unwrap(), 14));
    cases.push((ModelSpec::quadratic(5, 3).unwrap(), 30));
    cases.push((ModelSpec::linear(5, 3).unwrap(), 9));
    for (spec, s) in cases {
        let r = natural_bound_rowgen(&spec, s, &BoundOptions::default()).unwrap();
        let c = &r.certificate;
        assert_eq!(c.scope, CertificateScope::Full);
        let viol = certificate_violation(&spec, &c.theta, c.tau).unwrap();
        assert!(viol <= 1e-8, "{spec} s={s}: violation {viol}");
        let ldet_theta = InfoMatrix::from_matrix(&c.theta).unwrap().ldet();
        let objective = -ldet_theta + c.tau * s as f64 - spec.row_dim() as f64;
        assert!((objective - r.bound).abs() <= 1e-9 * r.bound.abs().max(1.0));
    }
}

#[test]
fn rowgen_reaches_the_dense_relaxation() {
    let opts = BoundOptions {
        relax: RelaxOptions {
            eps_kw: 1e-7,
            ..RelaxOptions::default()
        },
        ..BoundOptions::default()
    };
    for (spec, s) in [
        (ModelSpec::quadratic(3, 3).unwrap(), 12),
        (ModelSpec::quadratic(4, 3).unwrap(), 20),
        (ModelSpec::linear(6, 3).unwrap(), 10),
    ] {
        let r = natural_bound_rowgen(&spec, s, &opts).unwrap();
        let d = dense_relaxation(&spec, s as f64).unwrap();
        assert!((r.bound - d.value).abs() <= 1e-5, "{spec} s={s}: {} vs {}", r.bound, d.value);
        assert!(r.kw_gap <= 1e-6);
        assert!(r.bound >= r.relax_value - 1e-8);
        assert!(r.bound - r.relax_value <= s as f64 * 1e-7 + 1e-6);
    }
}

#[test]
fn pool_value_never_drops_across_rounds() {
    let spec = ModelSpec::quadratic(4, 3).unwrap();
    let r = natural_bound_rowgen(&spec, 18, &BoundOptions::default()).unwrap();
    assert!(r.history.len() > 1);
    for w in r.history.windows(2) {
        assert!(w[1].relax_value >= w[0].relax_value - 1e-8);
    }
    for h in &r.history {
        assert!(h.bound >= h.relax_value - 1e-8);
        assert!(h.bound >= r.bound);
    }
}

#[test]
fn zero_rounds_still_gives_a_valid_bound() {
    let spec = ModelSpec::quadratic(3, 3).unwrap();
    let capped = natural_bound_rowgen(
        &spec,
        15,
        &BoundOptions {
            max_rounds: Some(0),
            ..BoundOptions::default()
        },
    )
    .unwrap();
    let full = natural_bound_rowgen(&spec, 15, &BoundOptions::default()).unwrap();
    assert_eq!(capped.rounds, 1);
    assert!(capped.round_cap_hit);
    assert!(capped.bound >= full.bound - 1e-9);
    let viol = certificate_violation(&spec, &capped.certificate.theta, capped.certificate.tau).unwrap();
    assert!(viol <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn restricted_solutions_satisfy_their_invariants(extra in prop::collection::vec(0u64..81, 0..12), s in 15u64..40) {
        let spec = ModelSpec::quadratic(4, 3).unwrap();
        let mut pool = RowPool::initial(&spec).unwrap();
        for i in extra {
            pool.insert(spec.decode(i).unwrap()).unwrap();
        }
        let sol = solve_restricted(&pool, s as f64, &RelaxOptions::default()).unwrap();
        prop_assert!(sol.weights.iter().all(|&w| w >= 0.0));
        prop_assert!((sol.weights.iter().sum::<f64>() - s as f64).abs() <= 1e-10);
        let gap = kw_gap(&pool, &sol).unwrap();
        prop_assert!(gap >= -1e-9);
        prop_assert!(!sol.converged || gap <= 1e-6 * 1.01 + 1e-12);

        let cert = dual_certificate(&pool, &sol).unwrap();
        let m = spec.row_dim() as f64;
        prop_assert!((cert.upper_bound - sol.ldet_value - (cert.tau * s as f64 - m)).abs() <= 1e-9 * sol.ldet_value.abs().max(1.0));
        let (full, q) = complete_certificate(&spec, &cert, &OracleOptions::default()).unwrap();
        prop_assert!(full.tau >= cert.tau && full.tau >= q);
        prop_assert!(full.upper_bound >= cert.upper_bound - 1e-12);
    }
}
