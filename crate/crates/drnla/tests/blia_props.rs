//! Properties of the constraint formula language: normalization and
//! simplification preserve integer semantics, simplification never grows the
//! formula past its normal form, and the text form re-parses faithfully.

use drnla::constraints::{blia_text, eval_blia, nnf, parse_blia, simplify, Blia};
use drnla::interp::State;
use drnla::polylib::{rat, LinAtom, LinTerm, Rel};
use proptest::prelude::*;

const VARS: [&str; 3] = ["x", "y", "z"];

fn arb_atom() -> impl Strategy<Value = LinAtom> {
    (
        prop::collection::vec(-4i64..=4, VARS.len()),
        -4i64..=4,
        prop_oneof![Just(Rel::Eq), Just(Rel::Le), Just(Rel::Lt)],
    )
        .prop_map(|(coeffs, c, rel)| {
            let mut t = LinTerm::constant(rat(c));
            for (v, k) in VARS.iter().zip(coeffs) {
                t.set_coeff(v, rat(k));
            }
            LinAtom::new(t, rel)
        })
}

fn arb_blia() -> impl Strategy<Value = Blia> {
    let leaf = prop_oneof![
        1 => Just(Blia::True),
        1 => Just(Blia::False),
        8 => arb_atom().prop_map(Blia::Atom),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|b| Blia::Not(Box::new(b))),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Blia::And),
            prop::collection::vec(inner, 1..4).prop_map(Blia::Or),
        ]
    })
}

fn grid_points() -> Vec<State> {
    let mut out = Vec::new();
    for x in -5..=5 {
        for y in -5..=5 {
            for z in -5..=5 {
                out.push(State::from([
                    ("x".to_string(), x),
                    ("y".to_string(), y),
                    ("z".to_string(), z),
                ]));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn normalization_and_simplification_preserve_semantics(b in arb_blia()) {
        let n = nnf(&b);
        let s = simplify(&b);
        for point in grid_points() {
            let reference = eval_blia(&b, &point).unwrap();
            prop_assert_eq!(eval_blia(&n, &point).unwrap(), reference, "nnf at {:?}", point);
            prop_assert_eq!(eval_blia(&s, &point).unwrap(), reference, "simplify at {:?}", point);
        }
    }

    #[test]
    fn simplification_never_grows_the_normal_form(b in arb_blia()) {
        prop_assert!(simplify(&b).atom_count() <= nnf(&b).atom_count());
    }

    #[test]
    fn text_form_reparses_equivalently(b in arb_blia()) {
        let s = simplify(&b);
        let text = blia_text(&s);
        let vars: Vec<String> = VARS.iter().map(|v| v.to_string()).collect();
        let parsed = parse_blia(&text, &vars).unwrap();
        for point in grid_points() {
            prop_assert_eq!(
                eval_blia(&parsed, &point).unwrap(),
                eval_blia(&s, &point).unwrap(),
                "reparse of {} differs at {:?}", text, point
            );
        }
    }
}
