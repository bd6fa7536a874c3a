use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfib_core::autodiff::{grad_check, OpKind, Tape, Var};
use rfib_core::Tensor;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

/// Reduces an arbitrary-shape node to a scalar with fixed non-uniform
/// weights, so every output coordinate contributes differently.
fn weighted_sum(t: &mut Tape, v: Var) -> rfib_core::Result<Var> {
    let n = t.value(v).len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 + 0.37 * i as f64).collect();
    let wv = t.constant(Tensor::new(t.shape(v).to_vec(), w)?);
    let p = t.mul(v, wv)?;
    t.sum(p)
}

fn unary(kind: OpKind) -> impl Fn(&mut Tape, &[Var]) -> rfib_core::Result<Var> {
    move |t, p| {
        let y = t.apply(kind, &[p[0]])?;
        weighted_sum(t, y)
    }
}

fn binary(kind: OpKind) -> impl Fn(&mut Tape, &[Var]) -> rfib_core::Result<Var> {
    move |t, p| {
        let y = t.apply(kind, &[p[0], p[1]])?;
        weighted_sum(t, y)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elementwise_binary_gradients(a in matrix(2, 3, -2.0, 2.0), b in matrix(2, 3, -2.0, 2.0)) {
        for kind in [OpKind::Add, OpKind::Sub, OpKind::Mul] {
            let err = grad_check(binary(kind), &[a.clone(), b.clone()], 1e-5).unwrap();
            prop_assert!(err <= 1e-6, "{kind:?}: {err}");
        }
    }

    #[test]
    fn matmul_gradient(a in matrix(3, 2, -2.0, 2.0), b in matrix(2, 4, -2.0, 2.0)) {
        let err = grad_check(binary(OpKind::MatMul), &[a, b], 1e-5).unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn smooth_unary_gradients(a in matrix(2, 3, -2.0, 2.0)) {
        for kind in [OpKind::Exp, OpKind::Tanh, OpKind::Sigmoid, OpKind::Square, OpKind::Sum, OpKind::Mean] {
            let err = grad_check(unary(kind), std::slice::from_ref(&a), 1e-5).unwrap();
            prop_assert!(err <= 1e-6, "{kind:?}: {err}");
        }
    }

    #[test]
    fn log_gradient(a in matrix(2, 3, 0.1, 5.0)) {
        let err = grad_check(unary(OpKind::Log), &[a], 1e-5).unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn relu_gradient_away_from_kink(
        a in matrix(2, 3, 0.01, 2.0),
        signs in prop::collection::vec(any::<bool>(), 6),
    ) {
        let data: Vec<f64> = a.data().iter().zip(&signs).map(|(v, s)| if *s { *v } else { -*v }).collect();
        let a = Tensor::matrix(2, 3, data).unwrap();
        let err = grad_check(unary(OpKind::Relu), &[a], 1e-5).unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn broadcast_gradient(row in matrix(1, 4, -2.0, 2.0)) {
        let err = grad_check(unary(OpKind::Broadcast { rows: 3 }), &[row], 1e-5).unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn forward_values_ignore_recording(a in matrix(3, 3, -1.5, 1.5), b in matrix(3, 3, -1.5, 1.5)) {
        let build = |t: &mut Tape| {
            let x = t.leaf(a.clone());
            let y = t.leaf(b.clone());
            let m = t.matmul(x, y).unwrap();
            let s = t.sigmoid(m).unwrap();
            let e = t.tanh(s).unwrap();
            let sq = t.square(e).unwrap();
            t.mean(sq).unwrap()
        };
        let mut rec = Tape::new();
        let mut inf = Tape::inference();
        let r1 = build(&mut rec);
        let r2 = build(&mut inf);
        prop_assert_eq!(rec.value(r1), inf.value(r2));
    }
}

/// `mean((relu(x W1 + b1) W2 + b2)^2)` over a fixed input batch.
fn mlp_loss(x: &Tensor) -> impl Fn(&mut Tape, &[Var]) -> rfib_core::Result<Var> + '_ {
    move |t, p| {
        let xv = t.constant(x.clone());
        let h = t.matmul(xv, p[0])?;
        let h = t.add_row(h, p[1])?;
        let h = t.relu(h)?;
        let o = t.matmul(h, p[2])?;
        let o = t.add_row(o, p[3])?;
        let sig = t.sigmoid(o)?;
        let l = t.square(sig)?;
        t.mean(l)
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..5 {
        let x = random(6, 4, &mut rng);
        let params = [random(4, 5, &mut rng), random(1, 5, &mut rng), random(5, 2, &mut rng), random(1, 2, &mut rng)];
        let err = grad_check(mlp_loss(&x), &params, 1e-5).unwrap();
        assert!(err <= 1e-5, "{err}");
    }
}

#[test]
fn repeated_backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(5, 3, &mut rng);
    let params = [random(3, 4, &mut rng), random(1, 4, &mut rng), random(4, 1, &mut rng), random(1, 1, &mut rng)];
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = mlp_loss(&x)(&mut tape, &vars).unwrap();
    let g1 = tape.backward(root).unwrap();
    let g2 = tape.backward(root).unwrap();
    for v in vars {
        assert_eq!(g1.get(v), g2.get(v));
    }
}

#[test]
fn apply_checks_arity() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(1.0));
    assert!(tape.apply(OpKind::Add, &[a]).is_err());
    assert!(tape.apply(OpKind::Exp, &[a, a]).is_err());
}
