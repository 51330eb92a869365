use lasalle_core::expr::{parse, BinOp, Func};
use lasalle_core::{Environment, Expr};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        prop_oneof![
            Just(0.0),
            Just(1.0),
            Just(0.5),
            (0u32..1000).prop_map(f64::from),
            (0.0f64..1e6),
            (1e-300f64..1e-3),
            (1e15f64..1e300),
        ]
        .prop_map(Expr::Num),
        prop_oneof![Just("x1"), Just("x2"), Just("eps"), Just("a_b")].prop_map(Expr::var),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    let ops = prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Pow),
    ];
    leaf().prop_recursive(6, 48, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (ops.clone(), inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (0..Func::ALL.len(), prop::collection::vec(inner, 2)).prop_map(|(i, mut args)| {
                let f = Func::ALL[i];
                args.truncate(f.arity());
                Expr::Call(f, args)
            }),
        ]
    })
}

fn env() -> Environment {
    Environment::from_pairs([("x1", 0.75), ("x2", -1.25), ("eps", 0.5), ("a_b", 3.0)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn printing_then_parsing_rebuilds_the_tree(e in tree()) {
        let text = e.to_string();
        let back = parse(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "printed as {}", text);
    }

    #[test]
    fn evaluation_is_pure(e in tree()) {
        let env = env();
        let first = e.evaluate(&env).unwrap();
        let second = e.evaluate(&env).unwrap();
        prop_assert_eq!(first.to_bits(), second.to_bits());
    }

    #[test]
    fn compiled_and_tree_evaluation_agree(e in tree()) {
        let env = env();
        let state = ["x1".to_string(), "x2".to_string()];
        let params = ["eps".to_string(), "a_b".to_string()];
        let compiled = e.compile(&state, &params).unwrap();
        let direct = e.evaluate(&env).unwrap();
        let fast = compiled.eval(&[0.75, -1.25], &[0.5, 3.0]);
        prop_assert!(direct.to_bits() == fast.to_bits() || (direct.is_nan() && fast.is_nan()));
    }
}
