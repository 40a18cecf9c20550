use netpot::solver::{effective_resistance, harmonic_measure};
use netpot::{generate, random_network, Ball, GeneratorSpec, GreenOperator, Network, Tolerances, VertexId};
use proptest::prelude::*;

fn line(conductances: &[f64]) -> Network {
    generate(GeneratorSpec::Line { conductances: conductances.to_vec() }, None).unwrap()
}

/// Series resistance of the line between `a <= b`.
fn series(conductances: &[f64], a: i64, b: i64) -> f64 {
    let len = conductances.len() as i64;
    (a..b).map(|n| 1.0 / conductances[n.rem_euclid(len) as usize]).sum()
}

fn conductances() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..5.0, 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn line_resistance_is_parallel_series(c in conductances(), radius in 1usize..40) {
        let r = radius as i64;
        let (left, right) = (series(&c, -r, 0), series(&c, 0, r));
        let want = left * right / (left + right);
        let got: f64 = effective_resistance(&line(&c), radius, &Tolerances::default()).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn line_green_density_matches_interval_formula(c in conductances(), radius in 2usize..30, a in 1i64..30, b in 1i64..30) {
        let r = radius as i64;
        let (x, y) = (a.min(r - 1), b.min(r - 1));
        let op = GreenOperator::<f64>::new(&line(&c), radius, &Tolerances::default()).unwrap();
        let (lo, hi) = (x.min(y), x.max(y));
        let want = series(&c, 0, lo) * series(&c, hi, r) / series(&c, 0, r);
        let got = op.green_density(&VertexId::Int(x), &VertexId::Int(y)).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        let mirrored = op.green_density(&VertexId::Int(-x), &VertexId::Int(y)).unwrap();
        prop_assert!(mirrored.abs() <= 1e-15);
    }

    #[test]
    fn line_harmonic_measure_is_resistance_ratio(c in conductances(), radius in 2usize..30, a in 1i64..30) {
        let r = radius as i64;
        let v = a.min(r - 1);
        let op = GreenOperator::<f64>::new(&line(&c), radius, &Tolerances::default()).unwrap();
        let k = harmonic_measure(op.killed_system()).unwrap();
        let ball = op.ball();
        let (vi, far, near) = (ball.locate(&VertexId::Int(v)).unwrap(), ball.locate(&VertexId::Int(r)).unwrap(), ball.locate(&VertexId::Int(-r)).unwrap());
        let want = series(&c, 0, v) / series(&c, 0, r);
        prop_assert!((k.get(vi, far).unwrap() - want).abs() <= 1e-12);
        prop_assert!(k.get(vi, near).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn green_density_is_symmetric(seed in 0u64..1000, index in 0u64..20, radius in 1usize..4) {
        let net = random_network(seed, index, 40);
        let ball = Ball::<f64>::extract(&net, radius).unwrap();
        prop_assume!(!ball.exhausted());
        let op = GreenOperator::<f64>::new(&net, radius, &Tolerances::default()).unwrap();
        for x in 0..ball.len() {
            for y in 0..x {
                let (a, b) = (op.green_density_at(x, y).unwrap(), op.green_density_at(y, x).unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn harmonic_measure_is_substochastic(seed in 0u64..1000, radius in 2usize..6) {
        let net = generate(GeneratorSpec::RandomConductanceGrid { seed, low: 0.2, high: 5.0 }, None).unwrap();
        let op = GreenOperator::<f64>::new(&net, radius, &Tolerances::default()).unwrap();
        let k = harmonic_measure(op.killed_system()).unwrap();
        let ball = op.ball();
        for v in ball.interior() {
            let total = k.row_sum(v);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&total));
            for w in ball.sphere() {
                prop_assert!(k.get(v, w).unwrap() >= -1e-15);
            }
        }
    }

    #[test]
    fn green_density_grows_with_the_ball(seed in 0u64..1000, radius in 1usize..6) {
        let net = generate(GeneratorSpec::RandomConductanceGrid { seed, low: 0.2, high: 5.0 }, None).unwrap();
        let x = VertexId::Pair(1, 0);
        let g = |r: usize| GreenOperator::<f64>::new(&net, r, &Tolerances::default()).unwrap().green_density(&x, &x).unwrap();
        let (small, large) = (g(radius + 1), g(radius + 2));
        prop_assert!(large >= small - 1e-12, "{small} then {large}");
    }
}
