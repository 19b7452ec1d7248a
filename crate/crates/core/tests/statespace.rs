mod common;

use proptest::prelude::*;
use weaktrace::network::compile;
use weaktrace::statespace::{apply, gaussian_overlap, inner_product, projector, Amplitude, Basis, Operator, PureState};

fn state(n: usize) -> impl Strategy<Value = PureState> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n).prop_map(move |v| {
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let amps = v.into_iter().map(|(re, im)| Amplitude::new(re, im)).collect();
        PureState::new(Basis::arms(&names).unwrap(), amps).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (PureState, PureState)> {
    (1usize..6).prop_flat_map(|n| (state(n), state(n)))
}

proptest! {
    #[test]
    fn inner_product_is_conjugate_symmetric((a, b) in pair()) {
        let ab = inner_product(&a, &b).unwrap();
        let ba = inner_product(&b, &a).unwrap();
        prop_assert!((ab - ba.conj()).norm() <= 1e-15);
    }

    #[test]
    fn stage_operators_preserve_norm(net in common::random(), amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4)) {
        let plan = compile(&net.network()).unwrap();
        for (k, op) in plan.ops().iter().enumerate() {
            prop_assert!(op.is_unitary(1e-12));
            let basis = plan.cuts()[k].basis.clone();
            let v: Vec<Amplitude> = amps.iter().cycle().take(basis.len()).map(|&(r, i)| Amplitude::new(r, i)).collect();
            let s = PureState::new(basis, v).unwrap();
            let out = apply(op, &s).unwrap();
            prop_assert!((out.norm_sqr() - s.norm_sqr()).abs() <= 1e-12);
        }
    }

    #[test]
    fn projectors_are_idempotent_and_complementary(n in 1usize..7, mask in any::<u8>()) {
        let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let basis = Basis::arms(&names).unwrap();
        let (inside, outside): (Vec<_>, Vec<_>) = names.iter().enumerate().partition(|(i, _)| mask & (1 << i) != 0);
        let inside: Vec<&String> = inside.into_iter().map(|(_, s)| s).collect();
        let outside: Vec<&String> = outside.into_iter().map(|(_, s)| s).collect();
        let p = projector(&inside, &basis).unwrap();
        let q = projector(&outside, &basis).unwrap();
        prop_assert!(p.mul(&p).unwrap().approx_eq(&p, 0.0));
        prop_assert!(p.add(&q).unwrap().approx_eq(&Operator::identity(basis), 0.0));
    }

    #[test]
    fn gaussian_overlap_symmetric_and_decreasing(d1 in -3.0..3.0f64, d2 in -3.0..3.0f64, extra in 1e-3..2.0f64, sigma in 0.5..2.0f64) {
        let g = gaussian_overlap(d1, d2, sigma).unwrap();
        prop_assert_eq!(g, gaussian_overlap(d2, d1, sigma).unwrap());
        let gap = (d1 - d2).abs();
        let farther = gaussian_overlap(d1, d1 + gap + extra, sigma).unwrap();
        prop_assert!(farther < g);
    }
}
