use delaybound_scenario::expr::{parse, Expr, Func, Op, Pos};
use proptest::prelude::*;

#[test]
fn documented_examples() {
    assert_eq!(parse("1").unwrap().eval(0.0), 1.0);
    assert_eq!(parse("-1 + 0.5*sin(t)").unwrap().eval(0.0), -1.0);
    let v = parse("exp(-t^2)").unwrap().eval(1.0);
    assert!((v - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn unicode_operators() {
    let a = parse("2 × t − 1 ÷ 4").unwrap();
    let b = parse("2 * t - 1 / 4").unwrap();
    assert_eq!(a, b);
}

#[test]
fn errors_name_the_offending_token() {
    let e = parse("1 + foo(t)").unwrap_err();
    assert!(e.msg.contains("foo"), "{e}");
    assert_eq!(e.pos.col, 5);
    assert!(parse("sin(t").is_err());
    assert!(parse("max(t)").is_err());
    assert!(parse("").is_err());
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::Var),
        (-1e6..1e6f64).prop_map(Expr::Const),
        (0u32..100).prop_map(|k| Expr::Const(k as f64)),
        (1e-12..1e-3f64).prop_map(Expr::Const),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    let ops = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow];
    let unary = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt, Func::Abs];
    leaf().prop_recursive(6, 48, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (0..ops.len(), inner.clone(), inner.clone())
                .prop_map(move |(k, a, b)| Expr::Bin(ops[k], Box::new(a), Box::new(b), Pos::default())),
            (0..unary.len(), inner.clone()).prop_map(move |(k, a)| Expr::Call(unary[k], vec![a], Pos::default())),
            (any::<bool>(), inner.clone(), inner).prop_map(|(m, a, b)| {
                Expr::Call(if m { Func::Min } else { Func::Max }, vec![a, b], Pos::default())
            }),
        ]
    })
}

/// Negative constants print as negations, so compare after folding signs.
fn canonical(e: &Expr) -> Expr {
    match e {
        Expr::Const(c) if *c < 0.0 => Expr::Neg(Box::new(Expr::Const(-c))),
        Expr::Neg(a) => Expr::Neg(Box::new(canonical(a))),
        Expr::Bin(op, a, b, p) => Expr::Bin(*op, Box::new(canonical(a)), Box::new(canonical(b)), *p),
        Expr::Call(f, args, p) => Expr::Call(*f, args.iter().map(canonical).collect(), *p),
        e => e.clone(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn printed_trees_reparse(e in tree()) {
        let text = e.to_string();
        let back = parse(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(canonical(&back), canonical(&e), "{}", text);
        let (x, y) = (e.eval(0.7), back.eval(0.7));
        prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()), "{} vs {}", x, y);
    }
}
