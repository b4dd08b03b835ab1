//! Property tests over randomly drawn models.

use bmmpp::canonical::{canonical_to_mmpp, mmpp_to_canonical, moments_to_model, solve_batch_split};
use bmmpp::counting::count_distribution;
use bmmpp::descriptors::{batch_pmf, cov_corr_tb, describe, moment_set, rho_t, time_moment};
use bmmpp::likelihood::loglik;
use bmmpp::linalg::ones;
use bmmpp::model::make_iid_batch;
use bmmpp::queue::{g_matrix_for, queue_length_at_departures, service_rate_for};
use bmmpp::simulate::{sample_random_model, simulate_trace};
use bmmpp::trace_io::{aggregate_format1, aggregate_format2, RawPacketTrace};
use bmmpp::{BmmppModel, InitialPhase, ModelBounds, ProbParam, QueueSpec, RhoKind, RngSpec, Trace};
use proptest::prelude::*;

fn model(k: usize, seed: u64) -> BmmppModel {
    let mut rng = RngSpec::new(seed, 7).rng();
    sample_random_model(k, &mut rng, &ModelBounds::default()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn descriptors_invariant_under_state_swap(k in 1usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        let a = describe(&m).unwrap();
        let b = describe(&m.permute_states()).unwrap();
        for ((n, x), (_, y)) in a.rows().iter().zip(b.rows()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-6), "{n}: {x} vs {y}");
        }
    }

    #[test]
    fn normalized_order_is_idempotent(k in 1usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        let once = m.normalize_state_order();
        prop_assert_eq!(once.normalize_state_order(), once.clone());
        prop_assert!(once.x() + once.y() >= once.r() + once.u());
    }

    #[test]
    fn inter_event_correlation_is_nonnegative(k in 1usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        for lag in 1..4 {
            prop_assert!(rho_t(&m, lag).unwrap() >= -1e-15);
        }
    }

    #[test]
    fn batch_pmf_sums_to_one(k in 1usize..6, seed in any::<u64>()) {
        let p = batch_pmf(&model(k, seed)).unwrap();
        prop_assert_eq!(p.len(), k);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_and_probability_round_trips(k in 1usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        prop_assert_eq!(BmmppModel::from_json(&m.to_json()).unwrap(), m.clone());
        let p: ProbParam = m.to_prob_params();
        let back = BmmppModel::from_prob_params(&p).unwrap();
        prop_assert!((back.d0() - m.d0()).abs().max() < 1e-12 * m.d0().abs().max());
    }

    #[test]
    fn moments_determine_the_model(k in 2usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        let ms = moment_set(&m).unwrap();
        let back = moments_to_model(&ms, k).unwrap();
        prop_assert!(moment_set(&back).unwrap().max_rel_diff(&ms, 1e-3) < 1e-8);
    }

    #[test]
    fn canonical_round_trip(seed in any::<u64>()) {
        let mmpp = model(1, seed).embedded_mmpp();
        let c = mmpp_to_canonical(&mmpp).unwrap();
        let back = canonical_to_mmpp(&c).unwrap().as_bmmpp();
        let m = mmpp.as_bmmpp();
        for r in 1..4 {
            prop_assert!(rel(time_moment(&back, r).unwrap(), time_moment(&m, r).unwrap()) < 1e-10);
        }
        prop_assert!((rho_t(&back, 1).unwrap() - rho_t(&m, 1).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn iid_batches_have_proportional_rows(seed in any::<u64>(), w in prop::collection::vec(0.01f64..1.0, 2..5)) {
        let s: f64 = w.iter().sum();
        let pmf: Vec<f64> = w.iter().map(|v| v / s).collect();
        let mmpp = model(1, seed).embedded_mmpp();
        let m = make_iid_batch(&mmpp, &pmf).unwrap();
        let rates = m.event_rates();
        for d in m.batch_diagonals() {
            prop_assert!((d[1] * rates[0] - d[0] * rates[1]).abs() <= 1e-12 * rates[0].max(rates[1]).powi(2));
        }
        prop_assert!(cov_corr_tb(&m).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn batch_split_respects_budgets(k in 2usize..5, seed in any::<u64>()) {
        let m = model(k, seed);
        let sub = m.sub_bmmpp2(1).unwrap();
        let ms = moment_set(&sub).unwrap();
        if let Ok((w, q)) = solve_batch_split(m.d0(), ms.beta1[0], ms.eta[0]) {
            let rates = m.event_rates();
            prop_assert!(w >= 0.0 && w <= rates[0] * (1.0 + 1e-9));
            prop_assert!(q >= 0.0 && q <= rates[1] * (1.0 + 1e-9));
            prop_assert!(rel(w, m.w(1)) < 1e-6 || (w - m.w(1)).abs() < 1e-9 * rates[0]);
        }
    }

    #[test]
    fn count_mass_within_eps(k in 1usize..4, seed in any::<u64>(), t in 0.01f64..3.0) {
        let m = model(k, seed);
        let eps = 1e-9;
        let cd = count_distribution(&m, t, eps).unwrap();
        prop_assert!(cd.truncation_mass < eps);
        prop_assert!(cd.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn g_is_stochastic_when_stable(k in 1usize..4, seed in any::<u64>(), rho in 0.1f64..0.9) {
        let m = model(k, seed);
        let spec = QueueSpec::with_service_rate(service_rate_for(&m, rho, RhoKind::Customer).unwrap());
        let g = g_matrix_for(&m, &spec).unwrap();
        let rows = g * ones();
        prop_assert!((rows[0] - 1.0).abs() < 1e-8 && (rows[1] - 1.0).abs() < 1e-8);
        let d = queue_length_at_departures(&m, &spec).unwrap();
        let s: f64 = d.z.iter().sum();
        prop_assert!(s >= 1.0 - spec.eps && s <= 1.0 + 1e-8);
    }

    #[test]
    fn loglik_invariant_under_state_swap(k in 1usize..4, seed in any::<u64>()) {
        let m = model(k, seed);
        let tr = simulate_trace(&m, 50, RngSpec::new(seed, 1), InitialPhase::StationaryPhi).unwrap();
        let a = loglik(&m, &tr).unwrap().loglik;
        let b = loglik(&m.permute_states(), &tr).unwrap().loglik;
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn trace_csv_round_trip(k in 1usize..5, seed in any::<u64>()) {
        let tr = simulate_trace(&model(k, seed), 40, RngSpec::new(seed, 2), InitialPhase::StationaryPhi).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.t, tr.t);
        prop_assert_eq!(back.b, tr.b);
    }

    #[test]
    fn aggregation_conserves_packets(gaps in prop::collection::vec(1e-6f64..2e-3, 1..300), sizes in prop::collection::vec(64.0f64..1518.0, 300)) {
        let mut acc = 0.0;
        let ts: Vec<f64> = gaps.iter().map(|g| { acc += g; (acc * 1e6).round() / 1e6 }).collect();
        let raw = RawPacketTrace::new(ts, sizes[..gaps.len()].to_vec()).unwrap();
        if let Ok(f1) = aggregate_format1(&raw, 1e-3, usize::MAX) {
            prop_assert!(f1.trace.len() <= raw.len());
            prop_assert_eq!(f1.trace.b.iter().sum::<usize>(), raw.len());
        }
        prop_assert_eq!(aggregate_format2(&raw, 100.0).unwrap().trace.len(), raw.len());
    }
}
