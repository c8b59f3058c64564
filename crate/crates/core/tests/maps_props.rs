use discord_gate::linalg::{haar_unitary, is_psd, RandomSource};
use discord_gate::maps::{
    apply_map, choi_matrix, hermitian_basis, induced_map, is_cp, kraus_from_vqd, map_properties,
};
use discord_gate::states::{decompose, evolve, generate_state, is_vqd, StateKind, StateParams};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    prop::sample::select(vec![(2, 2), (2, 3), (3, 2), (3, 3)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn induced_map_reproduces_reduced_dynamics(seed in any::<u64>(), (ds, db) in dims()) {
        let mut rng = RandomSource::new(seed, 0);
        let s = generate_state(StateKind::SlGeneric, &StateParams::new(ds, db), &mut rng).unwrap();
        let d = decompose(&s);
        let u = haar_unitary(ds * db, &mut rng);
        let m = induced_map(&d, &u).unwrap();
        let got = apply_map(&m, &s.reduced_system()).unwrap();
        prop_assert!((got - evolve(&s, &u).unwrap()).norm() <= 1e-10);
        for h in hermitian_basis(ds) {
            let y = apply_map(&m, &h).unwrap();
            prop_assert!((&y - y.adjoint()).norm() * 0.5 <= 1e-10 * y.norm().max(1.0));
        }
    }

    #[test]
    fn classical_states_give_cp_maps(seed in any::<u64>(), (ds, db) in dims(), cq in any::<bool>()) {
        let kind = if cq { StateKind::Cq } else { StateKind::Product };
        let mut rng = RandomSource::new(seed, 1);
        let s = generate_state(kind, &StateParams::new(ds, db), &mut rng).unwrap();
        let d = decompose(&s);
        let v = is_vqd(&d).unwrap();
        let form = v.form().expect("classical family");
        for _ in 0..20 {
            let u = haar_unitary(ds * db, &mut rng);
            let m = induced_map(&d, &u).unwrap();
            prop_assert!(is_cp(&m, 1e-9).unwrap().is_cp);
            let k = kraus_from_vqd(form, &u).unwrap();
            let diff = (k.superoperator() - m.superoperator()).norm();
            prop_assert!(diff <= 1e-9, "superoperators differ by {}", diff);
            prop_assert!(is_psd(&choi_matrix(&k).matrix, 1e-10).unwrap().is_psd);
            prop_assert!(map_properties(&k).trace_deviation <= 1e-10);
        }
    }
}
