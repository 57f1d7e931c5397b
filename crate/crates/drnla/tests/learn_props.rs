//! Properties of dynamic learning: everything learned holds on every sample,
//! octagonal bounds are attained, and results are deterministic.

use drnla::interp::State;
use drnla::learn::{learn, learn_octagons, SampleSet};
use drnla::polylib::rat;
use proptest::prelude::*;

const VARS: [&str; 3] = ["a", "b", "c"];

fn arb_samples() -> impl Strategy<Value = SampleSet> {
    prop::collection::vec(prop::collection::vec(-50i64..=50, VARS.len()), 1..20).prop_map(
        |rows| {
            let states = rows.into_iter().map(|vals| {
                VARS.iter()
                    .map(|v| v.to_string())
                    .zip(vals)
                    .collect::<State>()
            });
            SampleSet::new(VARS.iter().map(|v| v.to_string()).collect(), states)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn learned_atoms_hold_on_every_sample(s in arb_samples()) {
        let learned = learn(&s).unwrap();
        for atom in &learned {
            for row in s.rows() {
                prop_assert!(atom.holds_int(row), "{} fails on {:?}", atom, row);
            }
        }
    }

    #[test]
    fn octagonal_bounds_are_attained(s in arb_samples()) {
        for atom in learn_octagons(&s) {
            let attained = s.rows().any(|row| atom.term.eval_int(row) == rat(0));
            prop_assert!(attained, "bound {} never tight", atom);
        }
    }

    #[test]
    fn learning_is_deterministic(s in arb_samples()) {
        prop_assert_eq!(learn(&s).unwrap(), learn(&s).unwrap());
    }
}
