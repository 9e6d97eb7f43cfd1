use ndarray::{Array2, Array3};
use proptest::prelude::*;

use sfl_sim::model::{uplink_rate, LinkState, SystemParams};
use sfl_sim::optimizer::bandwidth::{solve_bandwidth, BandwidthClient, BandwidthOutcome};
use sfl_sim::optimizer::budget::{max_tokens, TokenClient};
use sfl_sim::optimizer::power::{min_power, solve_power, uplink_energy};
use sfl_sim::oracle::concave_non_decreasing;
use sfl_sim::tokens::{
    batch_importance, select_and_merge, ActivationBatch, AttentionScores, ImportanceProfile,
};

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn scores_strategy(b: usize, n: usize) -> impl Strategy<Value = AttentionScores> {
    prop::collection::vec(0.01f64..10.0, b * n).prop_map(move |raw| {
        let mut s = Array2::from_shape_vec((b, n), raw).unwrap();
        for mut row in s.outer_iter_mut() {
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        AttentionScores { scores: s }
    })
}

fn batch_strategy(b: usize, n: usize, d: usize) -> impl Strategy<Value = ActivationBatch> {
    prop::collection::vec(-5.0f64..5.0, b * (n + 1) * d).prop_map(move |raw| {
        ActivationBatch::new(Array3::from_shape_vec((b, n + 1, d), raw).unwrap()).unwrap()
    })
}

proptest! {
    #[test]
    fn energy_increases_with_power(
        bits in log_uniform(1e3, 1e9),
        w in log_uniform(1e3, 1e8),
        gain in log_uniform(1e-14, 1e-6),
        p1 in log_uniform(1e-6, 1.0),
        ratio in 1.001f64..10.0,
    ) {
        let params = SystemParams::default();
        let l = LinkState { gain };
        let e1 = uplink_energy(bits, w, p1, l, &params);
        let e2 = uplink_energy(bits, w, p1 * ratio, l, &params);
        prop_assert!(e2 > e1);
    }

    #[test]
    fn rate_concave_in_bandwidth(
        w in log_uniform(1e3, 1e8),
        gain in log_uniform(1e-13, 1e-7),
    ) {
        let params = SystemParams::default();
        let l = LinkState { gain };
        let h = w * 1e-2;
        let r = |x| uplink_rate(x, 0.2, l, &params).unwrap();
        prop_assert!(r(w + h) >= r(w));
        prop_assert!(r(w + h) - 2.0 * r(w) + r(w - h) <= 1e-9 * r(w));
    }

    #[test]
    fn solved_power_is_feasible(
        bits in log_uniform(1e4, 1e8),
        w in log_uniform(1e4, 1e7),
        gain in log_uniform(1e-12, 1e-8),
        deadline in log_uniform(1e-2, 1e2),
        e_max in log_uniform(1e-3, 1.0),
    ) {
        let params = SystemParams { energy_budget: e_max, ..SystemParams::default() };
        let l = LinkState { gain };
        if let Some(p) = solve_power(bits, w, l, deadline, &params, 1e-9).power() {
            prop_assert!(p > 0.0 && p <= params.max_power);
            prop_assert!(uplink_energy(bits, w, p, l, &params) <= e_max * (1.0 + 1e-9));
            prop_assert!(p >= min_power(bits, w, l, deadline, &params));
        }
    }

    #[test]
    fn bandwidth_split_fits_and_meets_bound(
        gains in prop::collection::vec(log_uniform(1e-11, 1e-8), 1..5),
        bits in log_uniform(1e5, 5e7),
    ) {
        let params = SystemParams { total_bandwidth: 20e6, energy_budget: 10.0, ..SystemParams::default() };
        let clients: Vec<_> = gains.iter().map(|&g| BandwidthClient {
            bits, power: 0.2, link: LinkState { gain: g }, standing: 1e3, base_latency: 0.0,
        }).collect();
        if let BandwidthOutcome::Allocated { bandwidth, tau } = solve_bandwidth(&clients, &params, 1.0, 1e-6) {
            prop_assert!(bandwidth.iter().sum::<f64>() <= params.total_bandwidth);
            for (c, &w) in clients.iter().zip(&bandwidth) {
                let r = uplink_rate(w, c.power, c.link, &params).unwrap();
                prop_assert!(c.bits / r <= tau * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn token_cap_monotone_in_bound(
        rate in log_uniform(1e5, 1e9),
        tau in log_uniform(1e-3, 10.0),
        grow in 1.0f64..4.0,
    ) {
        let params = SystemParams { energy_budget: 1e9, ..SystemParams::default() };
        let c = TokenClient { rate, power: 0.2, standing: 1e9, base_latency: 0.0 };
        let a = max_tokens(&c, tau, &params);
        let b = max_tokens(&c, tau * grow, &params);
        match (a, b) {
            (Some(x), Some(y)) => prop_assert!(y >= x),
            (Some(_), None) => prop_assert!(false, "larger bound lost feasibility"),
            _ => {}
        }
        if let Some(k) = b {
            prop_assert!((k + 2) as f64 * params.bits_per_token() / rate <= tau * grow * (1.0 + 1e-9));
        }
    }

    #[test]
    fn importance_prefix_is_concave(scores in scores_strategy(6, 12)) {
        let prof = batch_importance(&scores);
        prop_assert!(concave_non_decreasing(prof.prefix()));
        prop_assert!((prof.prefix()[12] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn importance_invariant_to_sample_order(scores in scores_strategy(5, 9), shift in 1usize..5) {
        let a = batch_importance(&scores);
        let mut rolled = scores.scores.clone();
        for b in 0..5 {
            rolled.row_mut(b).assign(&scores.scores.row((b + shift) % 5));
        }
        let b = batch_importance(&AttentionScores { scores: rolled });
        // rank-wise sums in a different order may round differently before snapping
        for (x, y) in a.alpha_bar().iter().zip(b.alpha_bar()) {
            prop_assert!((x - y).abs() <= 2.0f64.powi(-31));
        }
    }

    #[test]
    fn from_ranked_rejects_increasing(v in prop::collection::vec(0.0f64..1.0, 2..20)) {
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(ImportanceProfile::from_ranked(sorted.clone()).is_ok());
        sorted.reverse();
        let strictly_up = sorted.windows(2).any(|w| w[1] - w[0] > 1e-6);
        if strictly_up {
            prop_assert!(ImportanceProfile::from_ranked(sorted).is_err());
        }
    }

    #[test]
    fn merge_keeps_cls_and_shape(
        (batch, scores, k) in (1usize..=7).prop_flat_map(|k| {
            (batch_strategy(3, 7, 4), scores_strategy(3, 7), Just(k))
        })
    ) {
        let r = select_and_merge(&batch, &scores, k).unwrap();
        prop_assert_eq!(r.values.shape(), &[3, k + 2, 4]);
        for b in 0..3 {
            for d in 0..4 {
                prop_assert_eq!(r.values[[b, 0, d]].to_bits(), batch.values[[b, 0, d]].to_bits());
            }
            for (slot, &t) in r.selected[b].iter().enumerate() {
                for d in 0..4 {
                    prop_assert_eq!(r.values[[b, slot + 1, d]].to_bits(), batch.values[[b, t, d]].to_bits());
                }
            }
        }
    }
}
