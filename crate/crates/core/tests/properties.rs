use elect_core::ddc::{ddc_stop, fire_index, smoothed_deltas, DdcConfig};
use elect_core::denoiser::{cfg_combine, GuidanceConfig};
use elect_core::elct;
use elect_core::relevance::{relevance_map, soft_background_weight, RelevanceAccumulator, StepWindow};
use elect_core::rng::{seed_noise, SeededRng};
use elect_core::schedule::{make_schedule, ScheduleKind};
use elect_core::scoring::{rank_candidates, BisReport};
use elect_core::stats::iqr_clamp_normalize;
use elect_core::Tensor;
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let len: usize = shape.iter().product();
    prop::collection::vec(-50.0f32..50.0, len).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn latent() -> impl Strategy<Value = Tensor> {
    (1usize..4, 2usize..7, 2usize..7).prop_flat_map(|(c, h, w)| tensor(vec![1, c, h, w]))
}

proptest! {
    #[test]
    fn normalized_map_in_unit_interval_and_order_preserving(v in prop::collection::vec(-1e3f32..1e3, 1..200)) {
        let m = Tensor::new(vec![v.len()], v.clone()).unwrap();
        let out = iqr_clamp_normalize(&m).unwrap();
        prop_assert!(out.data().iter().all(|x| (0.0..=1.0).contains(x)));
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] <= v[j] {
                    prop_assert!(out.data()[i] <= out.data()[j]);
                }
            }
        }
    }

    #[test]
    fn relevance_map_bounds_and_zero_on_equal(a in latent(), seed in any::<u64>()) {
        let b = Tensor::from_fn(a.shape(), |k| a.data()[k] + SeededRng::at(seed, k as u64).uniform(-1.0, 1.0) as f32).unwrap();
        let m = relevance_map(&a, &b).unwrap();
        let (_, h, w) = a.channels_hw().unwrap();
        prop_assert_eq!(m.shape(), &[h, w]);
        prop_assert!(m.data().iter().all(|x| (0.0..=1.0).contains(x)));
        let z = relevance_map(&a, &a).unwrap();
        prop_assert!(z.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn soft_weight_pointwise(v in prop::collection::vec(0.0f32..=1.0, 1..64)) {
        let m = Tensor::new(vec![1, v.len()], v.clone()).unwrap();
        let w = soft_background_weight(&m).unwrap();
        for (x, y) in v.iter().zip(w.data()) {
            prop_assert_eq!(*y, 1.0 - x * x);
        }
    }

    #[test]
    fn mean_map_invariant_to_order_and_relabelling(
        maps in prop::collection::vec(prop::collection::vec(0.0f32..=1.0, 6), 2..6),
        shift in 0usize..5,
    ) {
        let n = maps.len();
        let w = StepWindow::leading(10, 2);
        let t = |v: &Vec<f32>| Tensor::new(vec![2, 3], v.clone()).unwrap();

        let mut fwd = RelevanceAccumulator::new(n, w);
        for step in [10, 9] {
            for (i, m) in maps.iter().enumerate() {
                fwd.accumulate(i, &t(m), step).unwrap();
            }
        }
        let mut rev = RelevanceAccumulator::new(n, w);
        for step in [9, 10] {
            for (i, m) in maps.iter().enumerate().rev() {
                rev.accumulate(i, &t(m), step).unwrap();
            }
        }
        prop_assert!(fwd.mean_map().unwrap().bit_eq(&rev.mean_map().unwrap()));

        let mut rot = RelevanceAccumulator::new(n, w);
        for step in [10, 9] {
            for i in 0..n {
                rot.accumulate(i, &t(&maps[(i + shift) % n]), step).unwrap();
            }
        }
        let d = fwd.mean_map().unwrap().max_abs_diff(&rot.mean_map().unwrap()).unwrap();
        prop_assert!(d < 1e-6);
    }

    #[test]
    fn elct_round_trip_is_bit_exact(t in latent()) {
        let bytes = elct::encode(&t).unwrap();
        prop_assert_eq!(bytes.len(), elct::encoded_len(t.shape()));
        prop_assert!(elct::decode(&bytes).unwrap().bit_eq(&t));
    }

    #[test]
    fn tweedie_inverts_noising_everywhere(seed in any::<u64>(), t in 1usize..=100, rf in any::<bool>()) {
        let kind = if rf { ScheduleKind::RectifiedFlow } else { ScheduleKind::Ddim };
        let s = make_schedule(kind, 100).unwrap();
        let z0 = seed_noise(seed, &[1, 2, 4, 4]).unwrap();
        let eps = seed_noise(seed ^ 1, &[1, 2, 4, 4]).unwrap();
        let pred = if rf { eps.sub(&z0).unwrap() } else { eps.clone() };
        let back = s.tweedie(&s.add_noise(&z0, &eps, t).unwrap(), &pred, t).unwrap();
        let num: f64 = back.data().iter().zip(z0.data()).map(|(&a, &b)| ((a - b) as f64).powi(2)).sum();
        let den: f64 = z0.data().iter().map(|&b| (b as f64).powi(2)).sum();
        prop_assert!((num / den).sqrt() <= 1e-5);
    }

    #[test]
    fn guidance_reduces_to_branches(a in tensor(vec![8]), b in tensor(vec![8]), c in tensor(vec![8])) {
        let only_text = GuidanceConfig { image_scale: 1.0, text_scale: 1.0 };
        prop_assert!(cfg_combine(&a, &b, &c, &only_text).unwrap().max_abs_diff(&c).unwrap() <= 1e-5);
        let none = GuidanceConfig { image_scale: 0.0, text_scale: 0.0 };
        prop_assert!(cfg_combine(&a, &b, &c, &none).unwrap().bit_eq(&a));
    }

    #[test]
    fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let reports: Vec<BisReport> = scores.iter().enumerate()
            .map(|(i, &score)| BisReport { candidate_id: i, t: 60, score, map: None })
            .collect();
        let order = rank_candidates(&reports).unwrap();
        let mut seen = order.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            prop_assert!(scores[w[0]] < scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn constant_decrease_never_fires(start in 1.0f64..100.0, step in 1e-3f64..1.0, len in 2usize..100) {
        let scores: Vec<f64> = (0..len).map(|k| start - step * k as f64).collect();
        let cfg = DdcConfig::default();
        prop_assert!(!ddc_stop(&scores, &cfg));
    }

    #[test]
    fn smoothed_deltas_are_nonnegative(scores in prop::collection::vec(-10.0f64..10.0, 2..60), window in 1usize..8) {
        let d = smoothed_deltas(&scores, window);
        prop_assert_eq!(d.len(), scores.len() - 1);
        prop_assert!(d.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn noise_is_a_pure_function_of_seed(seed in any::<u64>()) {
        let a = seed_noise(seed, &[1, 4, 3, 3]).unwrap();
        let b = seed_noise(seed, &[1, 4, 3, 3]).unwrap();
        prop_assert!(a.bit_eq(&b));
        prop_assert!(a.data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn geometric_trace_fires_at_derived_index() {
    // smoothed deltas 1, 1/2, 1/4, ...: the ratio to the running max is
    // 2^-k, first below 0.1 at k = 4
    let d: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
    assert_eq!(fire_index(&d, 0.1, 0), Some(4));
    assert_eq!(fire_index(&d, 0.01, 0), Some(7));
}

proptest! {
    #[test]
    fn guidance_is_affine_in_the_branch_predictions(
        a in tensor(vec![1, 1, 3, 3]),
        b in tensor(vec![1, 1, 3, 3]),
        c in tensor(vec![1, 1, 3, 3]),
        lambda in -4.0f32..4.0,
        si in 0.0f64..3.0,
        st in 0.0f64..10.0,
    ) {
        let g = GuidanceConfig { image_scale: si, text_scale: st };
        let base = cfg_combine(&a, &b, &c, &g).unwrap();
        let scaled = cfg_combine(&a.scale(lambda).unwrap(), &b.scale(lambda).unwrap(), &c.scale(lambda).unwrap(), &g).unwrap();
        let expect = base.scale(lambda).unwrap();
        let tol = 1e-4 * (1.0 + expect.data().iter().fold(0.0f32, |m, v| m.max(v.abs())));
        prop_assert!(scaled.max_abs_diff(&expect).unwrap() <= tol);
    }
}
