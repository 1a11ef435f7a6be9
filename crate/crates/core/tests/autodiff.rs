use proptest::prelude::*;
use stgen::autodiff::{finite_difference, grad_check, AdError, Tape, Tensor, Var};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

type UnaryOp = fn(&mut Tape, Var) -> Result<Var, AdError>;
type BinaryOp = fn(&mut Tape, Var, Var) -> Result<Var, AdError>;

fn tensor(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::new(vec![rows, cols], data[..rows * cols].to_vec()).unwrap()
}

/// Weighted sum so every output element carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var) -> Result<Var, AdError> {
    let shape = tape.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = tape.constant(w)?;
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn check_unary(op: UnaryOp, x: &Tensor) -> f64 {
    grad_check(
        |tape, x| {
            let y = op(tape, x)?;
            weighted_sum(tape, y)
        },
        x,
        STEP,
    )
    .unwrap()
}

/// Both operands are halves of one parameter, so both gradients are checked.
fn check_binary(op: BinaryOp, a: &Tensor, b: &Tensor) -> f64 {
    let (r, c) = (a.rows(), a.cols());
    let mut joined = Vec::with_capacity(2 * r * c);
    for i in 0..r {
        joined.extend_from_slice(a.row(i));
        joined.extend_from_slice(b.row(i));
    }
    let x = Tensor::new(vec![r, 2 * c], joined).unwrap();
    grad_check(
        |tape, x| {
            let a = tape.slice(x, 0, c)?;
            let b = tape.slice(x, c, 2 * c)?;
            let y = op(tape, a, b)?;
            weighted_sum(tape, y)
        },
        &x,
        STEP,
    )
    .unwrap()
}

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smooth_unary_gradients(v in values(12, -2.0, 2.0), r in 1usize..4) {
        let x = tensor(r, 3, &v);
        let ops: [UnaryOp; 6] = [Tape::tanh, Tape::sigmoid, Tape::exp, Tape::softplus, Tape::square, Tape::neg];
        for op in ops {
            prop_assert!(check_unary(op, &x) < TOL);
        }
        prop_assert!(check_unary(|t, x| t.scale(x, -2.5), &x) < TOL);
        prop_assert!(check_unary(|t, x| t.add_scalar(x, 0.7), &x) < TOL);
        prop_assert!(check_unary(Tape::sum_cols, &x) < TOL);
        prop_assert!(check_unary(Tape::mean, &x) < TOL);
        prop_assert!(check_unary(Tape::sum, &x) < TOL);
    }

    #[test]
    fn positive_domain_gradients(v in values(12, 0.1, 3.0), r in 1usize..4) {
        let x = tensor(r, 3, &v);
        prop_assert!(check_unary(Tape::log, &x) < TOL);
        prop_assert!(check_unary(Tape::sqrt, &x) < TOL);
    }

    #[test]
    fn kinked_gradients_away_from_kink(v in values(12, 0.05, 2.0), signs in prop::collection::vec(any::<bool>(), 12)) {
        let data: Vec<f64> = v.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -*x }).collect();
        let x = tensor(4, 3, &data);
        prop_assert!(check_unary(Tape::relu, &x) < TOL);
        prop_assert!(check_unary(|t, x| t.clamp_min(x, 0.0), &x) < TOL);
    }

    #[test]
    fn binary_gradients(a in values(6, -2.0, 2.0), b in values(6, 0.2, 2.0)) {
        let a = tensor(2, 3, &a);
        let b = tensor(2, 3, &b);
        prop_assert!(check_binary(Tape::add, &a, &b) < TOL);
        prop_assert!(check_binary(Tape::sub, &a, &b) < TOL);
        prop_assert!(check_binary(Tape::mul, &a, &b) < TOL);
        prop_assert!(check_binary(Tape::div, &a, &b) < TOL);
        prop_assert!(check_binary(|t, a, b| t.concat(&[a, b]), &a, &b) < TOL);
    }

    #[test]
    fn minimum_gradient_away_from_ties(a in values(6, -2.0, 2.0), gap in values(6, 0.05, 1.0), flip in prop::collection::vec(any::<bool>(), 6)) {
        let b: Vec<f64> = a.iter().zip(&gap).zip(&flip).map(|((x, g), f)| if *f { x + g } else { x - g }).collect();
        prop_assert!(check_binary(Tape::minimum, &tensor(2, 3, &a), &tensor(2, 3, &b)) < TOL);
    }

    #[test]
    fn matmul_gradients(a in values(6, -1.0, 1.0), b in values(12, -1.0, 1.0)) {
        let left = tensor(2, 3, &a);
        let right = Tensor::new(vec![3, 4], b.clone()).unwrap();
        let err = grad_check(|t, x| {
            let r = t.constant(right.clone())?;
            let y = t.matmul(x, r)?;
            weighted_sum(t, y)
        }, &left, STEP).unwrap();
        prop_assert!(err < TOL);
        let err = grad_check(|t, w| {
            let l = t.constant(left.clone())?;
            let y = t.matmul(l, w)?;
            weighted_sum(t, y)
        }, &right, STEP).unwrap();
        prop_assert!(err < TOL);
    }

    #[test]
    fn broadcast_row_gradients(m in values(12, 0.5, 1.5), row in values(3, 0.5, 1.5)) {
        let full = tensor(4, 3, &m);
        let row = tensor(1, 3, &row);
        let ops: [BinaryOp; 4] = [Tape::add, Tape::sub, Tape::mul, Tape::div];
        for op in ops {
            let err = grad_check(|t, r| {
                let f = t.constant(full.clone())?;
                let y = op(t, f, r)?;
                weighted_sum(t, y)
            }, &row, STEP).unwrap();
            prop_assert!(err < TOL);
            let err = grad_check(|t, f| {
                let r = t.constant(row.clone())?;
                let y = op(t, r, f)?;
                weighted_sum(t, y)
            }, &full, STEP).unwrap();
            prop_assert!(err < TOL);
        }
    }

    #[test]
    fn gradient_is_linear(v in values(6, -1.5, 1.5), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = tensor(2, 3, &v);
        let grad_of = |coef: (f64, f64)| {
            let mut tape = Tape::new();
            let p = tape.param(x.clone()).unwrap();
            let f = tape.tanh(p).unwrap();
            let f = weighted_sum(&mut tape, f).unwrap();
            let g = tape.square(p).unwrap();
            let g = tape.sum(g).unwrap();
            let f = tape.scale(f, coef.0).unwrap();
            let g = tape.scale(g, coef.1).unwrap();
            let y = tape.add(f, g).unwrap();
            tape.backward(y).unwrap();
            tape.grad(p)
        };
        let combined = grad_of((a, b));
        let gf = grad_of((1.0, 0.0));
        let gg = grad_of((0.0, 1.0));
        for i in 0..6 {
            let want = a * gf.data()[i] + b * gg.data()[i];
            prop_assert!((combined.data()[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn concat_then_slice_is_identity(a in values(6, -5.0, 5.0), b in values(4, -5.0, 5.0)) {
        let mut tape = Tape::new();
        let x = tape.constant(tensor(2, 3, &a)).unwrap();
        let y = tape.constant(tensor(2, 2, &b)).unwrap();
        let c = tape.concat(&[x, y]).unwrap();
        let back_x = tape.slice(c, 0, 3).unwrap();
        let back_y = tape.slice(c, 3, 5).unwrap();
        prop_assert_eq!(tape.value(back_x), tape.value(x));
        prop_assert_eq!(tape.value(back_y), tape.value(y));
    }
}

#[test]
fn forward_values() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()).unwrap();
    let b = tape.constant(Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap()).unwrap();
    let m = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(m).data(), &[17.0, 39.0]);
    let s = tape.sum_cols(a).unwrap();
    assert_eq!(tape.value(s).shape(), &[2, 1]);
    assert_eq!(tape.value(s).data(), &[3.0, 7.0]);
    let mean = tape.mean(a).unwrap();
    assert_eq!(tape.value(mean).item(), 2.5);
    let sp = tape.softplus(a).unwrap();
    assert!((tape.value(sp).data()[0] - (1.0 + 1f64.exp()).ln()).abs() < 1e-15);
}

#[test]
fn kink_conventions() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.0, 0.0])).unwrap();
    let r = tape.relu(x).unwrap();
    let s = tape.sqrt(x).unwrap();
    let t = tape.add(r, s).unwrap();
    let y = tape.sum(t).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).data(), &[0.0, 0.0]);
}

#[test]
fn shape_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = tape.constant(Tensor::zeros(&[3, 2])).unwrap();
    assert!(matches!(tape.add(a, b), Err(AdError::Shape { .. })));
    assert!(matches!(tape.matmul(a, a), Err(AdError::Shape { .. })));
    assert!(tape.matmul(a, b).is_ok());
    assert!(matches!(tape.slice(a, 2, 5), Err(AdError::Slice { .. })));
    assert!(matches!(Tensor::new(vec![2, 2], vec![1.0]), Err(AdError::DataLength { .. })));
}

#[test]
fn non_finite_is_reported() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![-1.0])).unwrap();
    assert!(matches!(tape.log(a), Err(AdError::NonFinite { .. })));
    let big = tape.constant(Tensor::vector(vec![1000.0])).unwrap();
    assert!(matches!(tape.exp(big), Err(AdError::NonFinite { .. })));
}

#[test]
fn backward_needs_scalar() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let b = tape.square(a).unwrap();
    assert!(matches!(tape.backward(b), Err(AdError::NonScalarLoss(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut tape = Tape::new();
    let p = tape.param(Tensor::vector(vec![2.0])).unwrap();
    let c = tape.constant(Tensor::vector(vec![3.0])).unwrap();
    let y = tape.mul(p, c).unwrap();
    let y = tape.sum(y).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(p).data(), &[3.0]);
    assert_eq!(tape.grad(c).data(), &[0.0]);
}

#[test]
fn shared_subexpression_accumulates() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.5])).unwrap();
    let y = tape.mul(x, x).unwrap();
    let z = tape.add(y, x).unwrap();
    let z = tape.sum(z).unwrap();
    tape.backward(z).unwrap();
    assert_eq!(tape.grad(x).data(), &[4.0]);
}

#[test]
fn finite_difference_of_quadratic() {
    let x = Tensor::vector(vec![1.0, -2.0]);
    let g = finite_difference(
        |t, x| {
            let s = t.square(x)?;
            t.sum(s)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!((g.data()[0] - 2.0).abs() < 1e-8 && (g.data()[1] + 4.0).abs() < 1e-8);
    assert!(finite_difference(|t, x| t.sum(x), &x, 0.1).is_err());
}
