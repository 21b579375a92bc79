mod common;

use bikecast::data::{aggregate_availability, trips_to_demand, window_and_split, RawSnapshotRecord, Scaler, SplitSizes, TripRecord};
use bikecast::eval::{evaluate, ha_forecast, station_histogram, ReportMeta, HISTOGRAM_BIN_WIDTH};
use bikecast::graph::{
    chebyshev_basis, eaam_matrix, gaussian_kernel_adjacency, pearson_adjacency, AdjacencyCategory, AdjacencyKind,
    AdjacencyMatrix, Station,
};
use bikecast::model::{tam_forward, ModelConfig, StgcnModel};
use bikecast::tensor::{Parameter, ParamStore, Tape, Tensor, Var};
use bikecast::train::{adam_step, AdamConfig, AdamState};
use chrono::{TimeDelta, TimeZone, Utc};
use common::dense;
use proptest::prelude::*;
use std::sync::Arc;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(lo..hi, len).prop_map(move |v| Tensor::new(shape.clone(), v).unwrap())
}

/// Symmetric non-negative weights with zero diagonal; some entries zero.
fn weights(n: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n * n).prop_map(move |v| {
        Tensor::from_fn(vec![n, n], |k| {
            let (i, j) = (k / n, k % n);
            match i.cmp(&j) {
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Less => v[i * n + j],
                std::cmp::Ordering::Greater => v[j * n + i],
            }
        })
    })
}

fn stations(n: usize) -> Vec<Station> {
    (0..n)
        .map(|i| Station {
            id: format!("{}", i + 1),
            latitude: 53.3,
            longitude: -6.2 + i as f64 * 1e-3,
        })
        .collect()
}

fn meta() -> ReportMeta {
    ReportMeta {
        model: "ST-GCN".into(),
        adjacency: "euclidean".into(),
        config_hash: String::new(),
        split: "test".into(),
    }
}

fn small_model(n: usize, w: &Tensor, attention: bool, seed: u64) -> StgcnModel {
    let mut cfg = ModelConfig::new(n, 8, 2, 2, 1).with_attention(attention);
    cfg.widths = [4, 3, 4];
    cfg.blocks = 1;
    StgcnModel::new(cfg, &AdjacencyMatrix::fixed(w.clone(), AdjacencyCategory::Spatial), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crop_of_concat_is_identity(a in tensor(vec![2, 3, 4], -5.0, 5.0), b in tensor(vec![2, 2, 4], -5.0, 5.0)) {
        let tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let cat = Var::concat(&[va, vb], 1).unwrap();
        prop_assert_eq!(&*cat.slice(1, 0, 3).unwrap().value(), &a);
        prop_assert_eq!(&*cat.slice(1, 3, 2).unwrap().value(), &b);
    }

    #[test]
    fn softmax_rows_sum_to_one(x in tensor(vec![4, 6], -30.0, 30.0)) {
        let tape = Tape::new();
        let s = tape.constant(x).softmax(1).unwrap().value().clone();
        for i in 0..4 {
            let sum: f64 = (0..6).map(|j| s.at(&[i, j])).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_finite(x in tensor(vec![1, 8, 3, 2], -3.0, 3.0), w in weights(3), seed in 0u64..100) {
        let mut model = small_model(3, &w, true, seed);
        let tape = Tape::new();
        let bound = model.params.bind(&tape, true);
        let y = model.forward(&tape, &bound, tape.constant(x)).unwrap();
        prop_assert!(y.value().is_finite());
        let g = y.abs().sum().backward().unwrap();
        model.params.load_grads(&bound, &g);
        for (_, p) in model.params.iter() {
            let grad = p.grad.as_ref().unwrap();
            prop_assert_eq!(grad.shape(), p.value.shape());
            prop_assert!(grad.is_finite());
        }
    }

    #[test]
    fn kernel_adjacency_symmetric_unit_range(pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 2..9)) {
        let n = pts.len();
        let d = Tensor::from_fn(vec![n, n], |k| {
            let (a, b) = (pts[k / n], pts[k % n]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        });
        let w = gaussian_kernel_adjacency(&d, 0.2, 0.368).unwrap();
        let again = gaussian_kernel_adjacency(&d, 0.2, 0.368).unwrap();
        prop_assert_eq!(&w, &again);
        prop_assert!(w.is_symmetric());
        for i in 0..n {
            prop_assert_eq!(w.w.at(&[i, i]), 0.0);
            for j in 0..n {
                let v = w.w.at(&[i, j]);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn pearson_adjacency_symmetric_unit_range(series in tensor(vec![5, 20], -2.0, 2.0)) {
        let w = pearson_adjacency(&series, 0.05).unwrap();
        prop_assert_eq!(&w, &pearson_adjacency(&series, 0.05).unwrap());
        prop_assert!(w.is_symmetric());
        for i in 0..5 {
            prop_assert_eq!(w.w.at(&[i, i]), 0.0);
            for j in 0..5 {
                prop_assert!((0.0..=1.0).contains(&w.w.at(&[i, j])));
            }
        }
    }

    #[test]
    fn eaam_rows_are_distributions(e1 in tensor(vec![6, 3], -4.0, 4.0), e2 in tensor(vec![6, 3], -4.0, 4.0)) {
        let w = eaam_matrix(&e1, &e2).unwrap().w;
        for i in 0..6 {
            let row: Vec<f64> = (0..6).map(|j| w.at(&[i, j])).collect();
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_basis_invariants(w in weights(5), k in 1usize..5) {
        let b = chebyshev_basis(&w, k).unwrap();
        prop_assert_eq!(b.order(), k);
        prop_assert_eq!(&b.terms[0], &Tensor::eye(5));
        prop_assert!(b.terms.iter().all(|t| t.is_finite()));
        let lap = dense::laplacian(w.data(), 5);
        let scaled: Vec<f64> = lap.iter().zip(dense::eye(5)).map(|(l, e)| 2.0 * l / b.lambda_max - e).collect();
        if k >= 2 {
            prop_assert!(b.terms[1].data().iter().zip(&scaled).all(|(a, s)| (a - s).abs() < 1e-12));
        }
        for j in 2..k {
            let rec = dense::matmul(&scaled, b.terms[j - 1].data(), 5);
            for (idx, r) in rec.iter().enumerate() {
                let want = 2.0 * r - b.terms[j - 2].data()[idx];
                prop_assert!((b.terms[j].data()[idx] - want).abs() < 1e-10);
            }
        }
        let m = nalgebra::DMatrix::from_row_slice(5, 5, &scaled);
        for ev in m.symmetric_eigen().eigenvalues.iter() {
            prop_assert!(*ev >= -1.0 - 1e-6 && *ev <= 1.0 + 1e-6, "eigenvalue {}", ev);
        }
    }

    #[test]
    fn attention_strictly_inside_unit_interval(x1 in tensor(vec![2, 5, 3, 4], -10.0, 10.0), x2 in tensor(vec![2, 3, 3, 2], -10.0, 10.0)) {
        let tape = Tape::new();
        let a = tam_forward(tape.constant(x1), tape.constant(x2)).unwrap().value().clone();
        prop_assert_eq!(a.shape(), &[2, 3, 3, 1]);
        prop_assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn permutation_equivariance(x in tensor(vec![2, 8, 4, 2], -2.0, 2.0), w in weights(4), perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
        let model = small_model(4, &w, true, 3);
        let wp = Tensor::from_fn(vec![4, 4], |k| w.at(&[perm[k / 4], perm[k % 4]]));
        let permuted = StgcnModel::from_parts(model.config.clone(), model.params.clone(), wp).unwrap();
        let xp = Tensor::from_fn(vec![2, 8, 4, 2], |k| {
            let (rest, c) = (k / 2, k % 2);
            let (bt, i) = (rest / 4, rest % 4);
            x.data()[(bt * 4 + perm[i]) * 2 + c]
        });
        let y = model.predict(&x).unwrap();
        let yp = permuted.predict(&xp).unwrap();
        for bt in 0..4 {
            for i in 0..4 {
                let got = yp.data()[bt * 4 + i];
                let want = y.data()[bt * 4 + perm[i]];
                prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
            }
        }
    }

    #[test]
    fn output_shape_depends_only_on_config(b in 1usize..5, scale in 0.0..100.0f64, w in weights(3)) {
        let model = small_model(3, &w, true, 1);
        let x = Tensor::full(vec![b, 8, 3, 2], scale);
        let y = model.predict(&x).unwrap();
        prop_assert_eq!(y.shape(), &[b, 2, 3, 1]);
    }

    #[test]
    fn adam_zero_gradients_keep_parameters(v in tensor(vec![3, 2], -5.0, 5.0), steps in 1usize..20, lr in 1e-5..1.0f64) {
        let mut store = ParamStore::new();
        store.insert("p", Parameter::new(v.clone()));
        let mut state = AdamState::default();
        for _ in 0..steps {
            store.get_mut("p").unwrap().grad = Some(Tensor::zeros(vec![3, 2]));
            adam_step(&mut store, &mut state, &AdamConfig::default(), lr, 0.0).unwrap();
        }
        prop_assert_eq!(&store.get("p").unwrap().value, &v);
        let back: AdamState = serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
        prop_assert_eq!(back, state);
    }

    #[test]
    fn scaler_roundtrip(panel in tensor(vec![10, 3, 2], -50.0, 50.0)) {
        let s = Scaler::fit(&panel, 6).unwrap();
        let back = s.inverse(&s.transform(&panel).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&panel).unwrap() < 1e-9);
    }

    #[test]
    fn station_decomposition_and_histogram(p in tensor(vec![7, 2, 5, 1], 0.0, 20.0), t in tensor(vec![7, 2, 5, 1], 0.0, 20.0)) {
        let r = evaluate(&p, &t, &stations(5), meta()).unwrap();
        let total: usize = r.per_station.iter().map(|s| s.count).sum();
        let weighted: f64 = r.per_station.iter().map(|s| s.mae * s.count as f64).sum::<f64>() / total as f64;
        prop_assert!((weighted - r.overall_mae).abs() < 1e-9);
        let hist = station_histogram(&r, HISTOGRAM_BIN_WIDTH);
        prop_assert_eq!(hist.iter().map(|b| b.count).sum::<usize>(), 5);
        for s in &r.per_station {
            let bin = hist.iter().find(|b| b.stations.contains(&s.id)).unwrap();
            prop_assert!(bin.lower <= s.mae && s.mae < bin.upper);
        }
    }

    #[test]
    fn ha_invariant_to_history_order(h in tensor(vec![2, 6, 3, 1], 0.0, 30.0), perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
        let shuffled = Tensor::from_fn(vec![2, 6, 3, 1], |k| {
            let (b, rest) = (k / 18, k % 18);
            let (t, i) = (rest / 3, rest % 3);
            h.data()[b * 18 + perm[t] * 3 + i]
        });
        let a = ha_forecast(&h, 4).unwrap();
        let b = ha_forecast(&shuffled, 4).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn windows_never_cross_splits(train in 20usize..40, val in 16usize..30, test in 16usize..30, m in 1usize..8, n in 1usize..8) {
        let t_len = train + val + test;
        let raw = Arc::new(Tensor::from_fn(vec![t_len, 2, 1], |k| k as f64));
        let splits = window_and_split(raw.clone(), raw, SplitSizes { train, val, test }, m, n, 1).unwrap();
        let bounds = [(0, train), (train, train + val), (train + val, t_len)];
        for (set, (lo, hi)) in [&splits.train, &splits.val, &splits.test].into_iter().zip(bounds) {
            prop_assert_eq!(set.len(), hi - lo - m - n + 1);
            for i in 0..set.len() {
                let ((a, _), (_, d)) = set.time_ranges(i);
                prop_assert!(a >= lo && d <= hi);
            }
        }
    }

    #[test]
    fn availability_ignores_record_order(readings in prop::collection::vec((0usize..3, 0i64..60, 0u32..40), 30..60), seed in any::<u64>()) {
        let t0 = Utc.with_ymd_and_hms(2020, 7, 1, 0, 0, 0).unwrap();
        let mut records: Vec<RawSnapshotRecord> = readings
            .iter()
            .map(|&(s, minute, bikes)| RawSnapshotRecord {
                timestamp: t0 + TimeDelta::minutes(minute),
                station_id: format!("{}", s + 1),
                available_bikes: bikes,
                latitude: 53.3,
                longitude: -6.2 + s as f64 * 1e-3,
            })
            .collect();
        // every station appears in every bin
        for s in 0..3 {
            for b in 0..4 {
                records.push(RawSnapshotRecord {
                    timestamp: t0 + TimeDelta::minutes(15 * b),
                    station_id: format!("{}", s + 1),
                    available_bikes: 5,
                    latitude: 53.3,
                    longitude: -6.2 + s as f64 * 1e-3,
                });
            }
        }
        let a = aggregate_availability(&records, TimeDelta::minutes(15)).unwrap();
        let mut shuffled = records.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let b = aggregate_availability(&shuffled, TimeDelta::minutes(15)).unwrap();
        prop_assert!(a.values.max_abs_diff(&b.values).unwrap() < 1e-12);
        prop_assert_eq!(a.timestamps, b.timestamps);
    }

    #[test]
    fn demand_totals_match_kept_trips(trips in prop::collection::vec((0usize..5, 0usize..5, 0i64..120, 0i64..30), 10..40), k in 1usize..5) {
        let t0 = Utc.with_ymd_and_hms(2020, 7, 1, 0, 0, 0).unwrap();
        let records: Vec<TripRecord> = trips
            .iter()
            .map(|&(a, b, start, dur)| TripRecord {
                pickup_station: format!("{}", a + 1),
                dropoff_station: format!("{}", b + 1),
                pickup_time: t0 + TimeDelta::minutes(start),
                dropoff_time: t0 + TimeDelta::minutes(start + dur),
            })
            .collect();
        let mentioned: std::collections::HashSet<&String> =
            records.iter().flat_map(|t| [&t.pickup_station, &t.dropoff_station]).collect();
        prop_assume!(k <= mentioned.len());
        // a kept set with no trip between its members is a reported error
        let d = trips_to_demand(&records, TimeDelta::minutes(30), k, None);
        prop_assume!(d.is_ok());
        let d = d.unwrap();
        let kept: std::collections::HashSet<&String> = d.station_ids.iter().collect();
        let expected = records
            .iter()
            .filter(|t| kept.contains(&t.pickup_station) && kept.contains(&t.dropoff_station))
            .count() as f64;
        let channel_total = |c: usize| d.values.data().iter().skip(c).step_by(2).sum::<f64>();
        prop_assert_eq!(channel_total(0), expected);
        prop_assert_eq!(channel_total(1), expected);
    }
}

#[test]
fn all_zero_adjacency_basis_is_identity_based() {
    let b = chebyshev_basis(&Tensor::zeros(vec![4, 4]), 3).unwrap();
    assert!(b.terms.iter().all(|t| t.is_finite()));
    // L = I has λ_max = 1, so L̃ = I and every T_k = I
    for t in &b.terms {
        assert!(t.max_abs_diff(&Tensor::eye(4)).unwrap() < 1e-12);
    }
    assert_eq!(AdjacencyKind::ALL.len(), 6);
}
