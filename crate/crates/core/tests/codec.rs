use dopt_core::{FactorPoint, ModelKind, ModelSpec};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (prop::bool::ANY, 1usize..=7, 2u32..=6).prop_filter_map("quadratic needs L >= 3", |(quad, f, l)| {
        let kind = if quad { ModelKind::Quadratic } else { ModelKind::Linear };
        if quad && l < 3 {
            return None;
        }
        ModelSpec::new(kind, f, l).ok()
    })
}

proptest! {
    #[test]
    fn decode_then_encode_is_identity(spec in spec_strategy(), raw in any::<u64>()) {
        let n = spec.row_count().unwrap();
        let idx = raw % n;
        let p = spec.decode(idx).unwrap();
        prop_assert_eq!(spec.encode(&p).unwrap(), idx);
        prop_assert!(p.0.iter().all(|&a| a < spec.levels()));
    }

    #[test]
    fn point_order_matches_index_order(spec in spec_strategy(), a in any::<u64>(), b in any::<u64>()) {
        let n = spec.row_count().unwrap();
        let (a, b) = (a % n, b % n);
        let (pa, pb) = (spec.decode(a).unwrap(), spec.decode(b).unwrap());
        prop_assert_eq!(pa.cmp(&pb), a.cmp(&b));
    }

    #[test]
    fn expanded_rows_follow_the_layout(spec in spec_strategy(), raw in any::<u64>()) {
        let p = spec.decode(raw % spec.row_count().unwrap()).unwrap();
        let row = spec.expand(&p).unwrap();
        let f = spec.factors();
        prop_assert_eq!(row.len(), spec.row_dim());
        prop_assert_eq!(row[0], 1.0);
        for i in 0..f {
            prop_assert_eq!(row[1 + i], f64::from(p.0[i]));
        }
        if spec.kind() == ModelKind::Quadratic {
            for i in 0..f {
                prop_assert_eq!(row[1 + f + i], f64::from(p.0[i] * p.0[i]));
                for j in i + 1..f {
                    prop_assert_eq!(row[spec.cross_index(i, j)], f64::from(p.0[i] * p.0[j]));
                }
            }
        }
    }
}

#[test]
fn dimensions() {
    for f in 1..=8 {
        let q = ModelSpec::quadratic(f, 3).unwrap();
        assert_eq!(q.row_dim(), 1 + 2 * f + f * (f - 1) / 2);
        assert_eq!(ModelSpec::linear(f, 2).unwrap().row_dim(), f + 1);
    }
    let welch = ModelSpec::quadratic(3, 3).unwrap();
    assert_eq!((welch.row_count(), welch.row_dim()), (Some(27), 10));
}

#[test]
fn astronomical_instances_refuse_indices() {
    let spec = ModelSpec::linear(70, 2).unwrap();
    assert!(spec.is_astronomical());
    assert!(spec.decode(0).is_err());
    assert!(spec.encode(&FactorPoint(vec![0; 70])).is_err());
    // rows still expand
    assert_eq!(spec.expand(&FactorPoint(vec![1; 70])).unwrap().len(), 71);
}

#[test]
fn cross_terms_are_lexicographic() {
    let spec = ModelSpec::quadratic(4, 3).unwrap();
    let order: Vec<usize> = (0..4)
        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
        .map(|(i, j)| spec.cross_index(i, j))
        .collect();
    assert_eq!(order, (9..15).collect::<Vec<_>>());
}
