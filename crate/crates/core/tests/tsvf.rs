mod common;

use proptest::prelude::*;
use weaktrace::network::compile;
use weaktrace::statespace::{inner_product, projector, Amplitude};
use weaktrace::tsvf::{presence_map, Postselection, Preselection, TwoStateVector, PRESENCE_ETA};

proptest! {
    #[test]
    fn overlap_is_the_same_at_every_cut(net in common::random()) {
        let n = net.network();
        let plan = compile(&n).unwrap();
        let all = TwoStateVector::all(&plan, &common::source(&n), &common::likeliest(&n)).unwrap();
        let first = inner_product(&all[0].backward, &all[0].forward).unwrap();
        for t in &all {
            prop_assert!((inner_product(&t.backward, &t.forward).unwrap() - first).norm() <= 1e-12);
        }
    }

    #[test]
    fn weak_values_sum_to_one(net in common::random()) {
        let n = net.network();
        let plan = compile(&n).unwrap();
        for t in TwoStateVector::all(&plan, &common::source(&n), &common::likeliest(&n)).unwrap() {
            let sum: Amplitude = t.path_weak_values().unwrap().iter().map(|(_, w)| w).sum();
            prop_assert!((sum - 1.0).norm() <= 1e-10, "{}: {}", t.stage, sum);
        }
    }

    #[test]
    fn weak_values_are_linear(
        net in common::random(),
        mask1 in any::<u8>(),
        mask2 in any::<u8>(),
        (ar, ai, br, bi) in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
    ) {
        let n = net.network();
        let plan = compile(&n).unwrap();
        let (alpha, beta) = (Amplitude::new(ar, ai), Amplitude::new(br, bi));
        for t in TwoStateVector::all(&plan, &common::source(&n), &common::likeliest(&n)).unwrap() {
            let names: Vec<&str> = t.basis().names().collect();
            let pick = |mask: u8| -> Vec<&str> {
                names.iter().enumerate().filter(|(i, _)| mask & (1 << (i % 8)) != 0).map(|(_, s)| *s).collect()
            };
            let o1 = projector(&pick(mask1), t.basis()).unwrap();
            let o2 = projector(&pick(mask2), t.basis()).unwrap();
            let combo = o1.scaled(alpha).add(&o2.scaled(beta)).unwrap();
            let lhs = t.weak_value(&combo).unwrap();
            let rhs = alpha * t.weak_value(&o1).unwrap() + beta * t.weak_value(&o2).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn time_reversal_conjugates_weak_values(net in common::random()) {
        let n = net.network();
        let plan = compile(&n).unwrap();
        let (pre, post) = (common::source(&n), common::likeliest(&n));
        let back = plan.reversed();
        let pre_r = Preselection::new(post.amps().to_vec()).unwrap();
        let post_r = Postselection::new("source", pre.amps().to_vec()).unwrap();
        for t in TwoStateVector::all(&plan, &pre, &post).unwrap() {
            let r = TwoStateVector::at(&back, &pre_r, &post_r, &t.stage).unwrap();
            for (arm, w) in t.path_weak_values().unwrap() {
                let v = r.path_weak_value(&arm).unwrap();
                prop_assert!((v - w.conj()).norm() <= 1e-12, "{} {}: {} vs {}", t.stage, arm, v, w);
            }
        }
    }

    #[test]
    fn presence_ignores_global_phases(net in common::random(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let n = net.network();
        let (pre, post) = (common::source(&n), common::likeliest(&n));
        for cut in n.cuts() {
            let plain = presence_map(&n, &pre, &post, &cut.name, PRESENCE_ETA).unwrap();
            let turned = presence_map(&n, &pre.with_global_phase(a), &post.with_global_phase(b), &cut.name, PRESENCE_ETA).unwrap();
            for arm in &cut.arms {
                prop_assert_eq!(plain.get(arm), turned.get(arm), "{} {}", cut.name, arm);
            }
        }
    }
}
