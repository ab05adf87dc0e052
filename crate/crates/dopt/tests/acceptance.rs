//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! show.

use std::process::Command;
use std::time::{Duration, Instant};

use dopt::verify::random_psd;
use dopt_core::bnb::{solve_exact, SolveOptions};
use dopt_core::localsearch::{local_search, LocalSearchOptions, DEFAULT_EPS_IMP};
use dopt_core::oracle::{self, OracleOptions};
use dopt_core::reference::{
    brute_force_optimum, brute_force_price, certificate_violation, dense_relaxation, exchange_local_optimum_check,
};
use dopt_core::relax::{natural_bound_rowgen, BoundOptions, RelaxOptions};
use dopt_core::{DenseMatrix, Error, InfoMatrix, ModelKind, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn instance_shape() -> Outcome {
    let spec = ModelSpec::quadratic(3, 3).unwrap();
    if spec.row_count() != Some(27) || spec.row_dim() != 10 {
        return Err(format!("n={:?} m={}", spec.row_count(), spec.row_dim()));
    }
    let limit = Duration::from_secs(5);
    let mut slowest = (Duration::ZERO, "");
    for s in 10..=20 {
        let t = Instant::now();
        local_search(&spec, s, &LocalSearchOptions::default()).map_err(|e| e.to_string())?;
        let ls = t.elapsed();
        let t = Instant::now();
        natural_bound_rowgen(&spec, s, &BoundOptions::default()).map_err(|e| e.to_string())?;
        let b = t.elapsed();
        if ls >= limit || b >= limit {
            return Err(format!("s={s}: local search {ls:?}, bound {b:?}"));
        }
        slowest = slowest.max((ls, "local search")).max((b, "bound"));
    }
    Ok(format!("n=27 m=10, s=10..20, slowest run {:?} ({})", slowest.0, slowest.1))
}

fn determinant_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let m = rng.random_range(3..=50);
        let mut b = random_psd(m, &mut rng);
        for i in 0..m {
            b.set(i, i, b.get(i, i) + 1e-3);
        }
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let info = InfoMatrix::from_matrix(&b).map_err(|e| format!("pair {k}: {e}"))?;
        let mut bv = b.clone();
        bv.add_outer(1.0, &v);
        let lhs = InfoMatrix::from_matrix(&bv).map_err(|e| format!("pair {k}: {e}"))?.ldet() - info.ldet();
        let rhs = info.quad_form(&v).ln_1p();
        let err = (lhs - rhs).abs() / rhs.abs().max(1.0);
        worst = worst.max(err);
    }
    if worst <= 1e-9 {
        Ok(format!("1000 pairs, m in 3..=50, worst relative error {worst:.2e}"))
    } else {
        Err(format!("worst relative error {worst:.2e}"))
    }
}

/// Every (kind, F, L) with `L^F ≤ 3^6`.
fn small_instances() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for kind in [ModelKind::Linear, ModelKind::Quadratic] {
        let min_l = if kind == ModelKind::Quadratic { 3 } else { 2 };
        for f in 1usize..=9 {
            for l in min_l.. {
                if u64::from(l).pow(f as u32) > 729 {
                    break;
                }
                out.push(ModelSpec::new(kind, f, l).unwrap());
            }
        }
    }
    out
}

fn oracle_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = small_instances();
    let mut worst = 0.0f64;
    let mut calls = 0;
    for spec in &specs {
        for _ in 0..200 {
            let q = random_psd(spec.row_dim(), &mut rng);
            let fast = oracle::price(spec, &q, &OracleOptions::default()).map_err(|e| e.to_string())?;
            let (p, v) = brute_force_price(spec, &q).map_err(|e| e.to_string())?;
            if fast.best_point != p {
                return Err(format!("{spec}: oracle point {} vs dense {p}", fast.best_point));
            }
            worst = worst.max(rel(fast.best_value, v));
            calls += 1;
        }
    }
    if worst <= 1e-9 {
        Ok(format!("{} instances, {calls} matrices, worst relative error {worst:.2e}", specs.len()))
    } else {
        Err(format!("worst relative error {worst:.2e}"))
    }
}

fn vertex_restriction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut count = 0;
    for l in [3u32, 4] {
        for f in 1..=6 {
            let spec = ModelSpec::linear(f, l).unwrap();
            for _ in 0..100 {
                let q = random_psd(spec.row_dim(), &mut rng);
                let vert = oracle::price_linear_vertices(&spec, &q, &OracleOptions::default())
                    .map_err(|e| e.to_string())?;
                let (_, all) = brute_force_price(&spec, &q).map_err(|e| e.to_string())?;
                worst = worst.max(rel(vert.best_value, all));
                count += 1;
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("{count} matrices over L in {{3,4}}, F <= 6; worst relative gap {worst:.2e}"))
    } else {
        Err(format!("vertex maximum misses the grid maximum by {worst:.2e}"))
    }
}

fn local_search_micro() -> Outcome {
    let mut optimal = 0;
    let mut local = Vec::new();
    for f in 1..=2 {
        let spec = ModelSpec::linear(f, 2).unwrap();
        for s in spec.row_dim() as u64..=5 {
            let (d, t) = local_search(&spec, s, &LocalSearchOptions::default()).map_err(|e| e.to_string())?;
            let (_, best) = brute_force_optimum(&spec, s).map_err(|e| e.to_string())?;
            if t.final_ldet() >= best - 1e-6 {
                optimal += 1;
                continue;
            }
            let check = exchange_local_optimum_check(&spec, &d, DEFAULT_EPS_IMP).map_err(|e| e.to_string())?;
            if !check.is_local_optimum {
                return Err(format!("F={f} s={s}: neither optimal nor locally optimal"));
            }
            local.push(format!("F={f} s={s}"));
        }
    }
    Ok(format!(
        "{optimal} instances at the enumerated optimum, {} at a verified local optimum{}",
        local.len(),
        if local.is_empty() { String::new() } else { format!(" ({})", local.join(", ")) }
    ))
}

fn tiny_instances() -> Vec<(ModelSpec, u64)> {
    let mut out = Vec::new();
    for spec in [
        ModelSpec::linear(1, 2).unwrap(),
        ModelSpec::linear(2, 2).unwrap(),
        ModelSpec::linear(3, 2).unwrap(),
        ModelSpec::linear(2, 3).unwrap(),
        ModelSpec::quadratic(1, 4).unwrap(),
        ModelSpec::quadratic(2, 3).unwrap(),
    ] {
        let m = spec.row_dim() as u64;
        out.extend((m..=m + 3).map(|s| (spec.clone(), s)));
    }
    out
}

fn duality_sandwich() -> Outcome {
    let mut cases: Vec<(ModelSpec, u64, bool)> = tiny_instances().into_iter().map(|(p, s)| (p, s, true)).collect();
    let welch = ModelSpec::quadratic(3, 3).unwrap();
    cases.extend((10..=20).map(|s| (welch.clone(), s, false)));
    cases.push((ModelSpec::linear(5, 2).unwrap(), 9, false));
    let mut exact_matches = 0;
    for (spec, s, tiny) in &cases {
        let err = |e: Error| format!("{spec} s={s}: {e}");
        let (_, t) = local_search(spec, *s, &LocalSearchOptions::default()).map_err(err)?;
        let exact = solve_exact(spec, *s, &SolveOptions::default()).map_err(err)?;
        let bound = natural_bound_rowgen(spec, *s, &BoundOptions::default()).map_err(err)?;
        let (ls, ex, ub) = (t.final_ldet(), exact.proof.optimal_ldet, bound.bound);
        if !exact.proof.is_optimal() || ls > ex + 1e-6 || ex > ub + 1e-6 {
            return Err(format!("{spec} s={s}: local {ls} exact {ex} bound {ub}"));
        }
        if *tiny {
            let (_, best) = brute_force_optimum(spec, *s).map_err(err)?;
            if (best - ex).abs() > 1e-9 {
                return Err(format!("{spec} s={s}: exact {ex} vs enumeration {best}"));
            }
            exact_matches += 1;
        }
    }
    Ok(format!(
        "{} instances ordered local <= exact <= bound; {exact_matches} tiny ones equal enumeration",
        cases.len()
    ))
}

fn certificate_feasibility() -> Outcome {
    let specs = [
        ModelSpec::linear(3, 2).unwrap(),
        ModelSpec::linear(7, 2).unwrap(),
        ModelSpec::linear(5, 3).unwrap(),
        ModelSpec::quadratic(2, 3).unwrap(),
        ModelSpec::quadratic(3, 3).unwrap(),
        ModelSpec::quadratic(5, 3).unwrap(),
        ModelSpec::quadratic(3, 5).unwrap(),
        ModelSpec::quadratic(2, 15).unwrap(),
    ];
    let mut worst_viol = f64::NEG_INFINITY;
    let mut worst_identity = 0.0f64;
    let mut count = 0;
    for spec in &specs {
        let m = spec.row_dim() as u64;
        for s in [m, m + 3, 2 * m] {
            let r = natural_bound_rowgen(spec, s, &BoundOptions::default()).map_err(|e| e.to_string())?;
            let c = &r.certificate;
            let viol = certificate_violation(spec, &c.theta, c.tau).map_err(|e| e.to_string())?;
            let ldet_theta = InfoMatrix::from_matrix(&c.theta).map_err(|e| e.to_string())?.ldet();
            let objective = -ldet_theta + c.tau * s as f64 - m as f64;
            worst_viol = worst_viol.max(viol);
            worst_identity = worst_identity.max(rel(objective, c.upper_bound));
            count += 1;
        }
    }
    if worst_viol <= 1e-8 && worst_identity <= 1e-9 {
        Ok(format!(
            "{count} certificates; max v'Tv - tau = {worst_viol:.2e}, bound identity error {worst_identity:.2e}"
        ))
    } else {
        Err(format!("max violation {worst_viol:.2e}, identity error {worst_identity:.2e}"))
    }
}

fn rowgen_vs_dense() -> Outcome {
    let opts = BoundOptions {
        relax: RelaxOptions {
            eps_kw: 1e-7,
            ..RelaxOptions::default()
        },
        ..BoundOptions::default()
    };
    let welch = ModelSpec::quadratic(3, 3).unwrap();
    let mut cases: Vec<(ModelSpec, u64)> = (10..=20).map(|s| (welch.clone(), s)).collect();
    cases.extend([
        (ModelSpec::quadratic(5, 3).unwrap(), 30),
        (ModelSpec::quadratic(4, 5).unwrap(), 25),
        (ModelSpec::linear(10, 2).unwrap(), 20),
        (ModelSpec::linear(6, 4).unwrap(), 12),
        (ModelSpec::quadratic(2, 100).unwrap(), 9),
    ]);
    let mut worst_diff = 0.0f64;
    let mut worst_gap = 0.0f64;
    for (spec, s) in &cases {
        let r = natural_bound_rowgen(spec, *s, &opts).map_err(|e| e.to_string())?;
        let d = dense_relaxation(spec, *s as f64).map_err(|e| e.to_string())?;
        worst_diff = worst_diff.max((r.bound - d.value).abs());
        worst_gap = worst_gap.max(r.kw_gap);
    }
    if worst_diff <= 1e-5 && worst_gap <= 1e-6 {
        Ok(format!(
            "{} instances (eps_kw 1e-7); max |bound - dense| {worst_diff:.2e}, max KW gap {worst_gap:.2e}",
            cases.len()
        ))
    } else {
        Err(format!("max |bound - dense| {worst_diff:.2e}, max KW gap {worst_gap:.2e}"))
    }
}

fn scale_demonstration() -> Outcome {
    let spec = ModelSpec::linear(20, 2).unwrap();
    // no dense object of size n may exist
    let q = DenseMatrix::identity(spec.row_dim());
    if spec.materialize_dense(dopt_core::instance::DEFAULT_MATERIALIZE_CAP).is_ok()
        || brute_force_price(&spec, &q).is_ok()
        || dense_relaxation(&spec, 50.0).is_ok()
    {
        return Err("a dense n-row object was allowed".to_string());
    }
    let t = Instant::now();
    let (_, trace) = local_search(&spec, 50, &LocalSearchOptions::default()).map_err(|e| e.to_string())?;
    let ls_time = t.elapsed();
    let b = natural_bound_rowgen(&spec, 50, &BoundOptions::default()).map_err(|e| e.to_string())?;
    let total = t.elapsed();
    let ls = trace.final_ldet();
    let gap = (b.bound - ls) / b.bound.abs();
    let line = format!(
        "n=2^20 s=50: local {ls:.6} ({ls_time:.1?}), bound {:.6} ({} rounds), relative gap {gap:.3e}, total {total:.1?}",
        b.bound, b.rounds
    );
    if total < Duration::from_secs(60) && b.bound >= ls {
        Ok(line)
    } else {
        Err(line)
    }
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["local-search", "--model", "quadratic", "--factors", "4", "--budget", "20", "--seed", "5", "--restarts", "3"],
        &["local-search", "--model", "linear", "--factors", "15", "--budget", "24"],
        &["bound", "--model", "quadratic", "--factors", "5", "--budget", "30"],
        &["solve", "--model", "quadratic", "--factors", "3", "--budget", "13", "--seed", "1"],
    ];
    for args in runs {
        let out = |threads: &str| {
            Command::new(env!("CARGO_BIN_EXE_dopt"))
                .arg("--threads")
                .arg(threads)
                .args(args)
                .output()
                .map_err(|e| e.to_string())
        };
        let one = out("1")?;
        let four = out("4")?;
        if one.status.code() != Some(0) || one.stdout.is_empty() {
            return Err(format!("{}: exit {:?}", args.join(" "), one.status.code()));
        }
        if one.stdout != four.stdout {
            return Err(format!("{}: output differs between 1 and 4 threads", args.join(" ")));
        }
    }
    Ok(format!("{} commands byte-identical with --threads 1 and 4", runs.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("instance shape and runtime", instance_shape),
        ("determinant lemma", determinant_lemma),
        ("oracle exactness", oracle_exactness),
        ("vertex restriction", vertex_restriction),
        ("local search at micro scale", local_search_micro),
        ("duality sandwich", duality_sandwich),
        ("certificate feasibility", certificate_feasibility),
        ("row generation vs dense relaxation", rowgen_vs_dense),
        ("scale demonstration", scale_demonstration),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
