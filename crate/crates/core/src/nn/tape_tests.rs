use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor<f64> {
    let data = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[m, n], data).unwrap()
}

/// Central finite differences of `build` (which must end in a scalar)
/// against the tape's adjoints for every input entry.
fn grad_check(
    inputs: Vec<Tensor<f64>>,
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let eval = |inputs: &[Tensor<f64>]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
        let l = build(&mut t, &vs);
        t.value(l).item()
    };
    let h = 1e-5;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).map(<[f64]>::to_vec).unwrap_or(vec![0.0; input.len()]);
        for idx in 0..input.len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[idx] += h;
            let mut minus = inputs.clone();
            minus[k].data_mut()[idx] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                err < 1e-4 || (a - numeric).abs() < 1e-8,
                "input {k} entry {idx}: analytic {a} numeric {numeric}"
            );
        }
    }
}

/// Reduces any matrix to a scalar through a fixed random weighting so every
/// output entry carries a distinct adjoint.
fn project(tape: &mut Tape<f64>, v: Var, seed: u64) -> Var {
    let (m, n) = (tape.value(v).rows(), tape.value(v).cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(rand_tensor(&mut rng, m, n));
    let p = tape.mul(v, w).unwrap();
    tape.sum(p)
}

#[test]
fn relu_and_sigmoid_values() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::from_vec(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = t.relu(x);
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = t.constant(Tensor::scalar(0.0));
    let s = t.sigmoid(z);
    assert_eq!(t.value(s).item(), 0.5);
}

#[test]
fn sum_gradient_is_ones() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap().with_grad());
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0; 4]);
}

#[test]
fn second_backward_accumulates() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::from_vec(&[1, 2], vec![1.0, -3.0]).unwrap().with_grad());
    let y = t.mul(x, x).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0, -6.0]);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[4.0, -12.0]);
    t.zero_grad();
    assert!(t.grad(x).is_none());
}

#[test]
fn disconnected_and_non_scalar_losses_are_rejected() {
    let mut t = Tape::<f64>::new();
    let c = t.constant(Tensor::scalar(1.0));
    assert!(matches!(t.backward(c), Err(NnError::DisconnectedLoss)));
    let x = t.leaf(Tensor::zeros(&[2, 2]).with_grad());
    assert!(matches!(t.backward(x), Err(NnError::ShapeMismatch(_))));
}

#[test]
fn shape_errors() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    assert!(t.matmul(a, b).is_err());
    let c = t.constant(Tensor::zeros(&[3, 2]));
    assert!(t.add(a, c).is_err());
    assert!(t.row_gather(a, &[2]).is_err());
    assert!(t.row_scatter_add(a, &[0], 4).is_err());
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Tape::<f64>::new();
    let mut x = rand_tensor(&mut rng, 5, 4);
    x.data_mut()[0] = 800.0;
    let v = t.constant(x);
    let s = t.softmax_rows(v);
    for r in 0..5 {
        let row = t.value(s).row(r);
        assert!(row.iter().all(|&p| p >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dropout_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::filled(&[100, 100], 2.0));
    assert_eq!(t.dropout(x, 0.0, &mut rng), x);
    let z = t.dropout(x, 1.0, &mut rng);
    assert!(t.value(z).data().iter().all(|&v| v == 0.0));
    let d = t.dropout(x, 0.3, &mut rng);
    let mean = t.value(d).data().iter().sum::<f64>() / 10_000.0;
    assert!((mean - 2.0).abs() < 0.02 * 2.0, "mean {mean}");
}

#[test]
fn gradcheck_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (m, k, n) in [(1, 1, 1), (3, 4, 2), (2, 5, 3)] {
        let a = rand_tensor(&mut rng, m, k);
        let b = rand_tensor(&mut rng, k, n);
        grad_check(vec![a, b], |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            project(t, y, 1)
        });
    }
}

#[test]
fn gradcheck_elementwise_and_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, 3, 4);
    let b = rand_tensor(&mut rng, 3, 4);
    let bias = rand_tensor(&mut rng, 1, 4);
    let s = rand_tensor(&mut rng, 3, 1);
    grad_check(vec![a, b, bias, s], |t, v| {
        let x = t.add(v[0], v[1]).unwrap();
        let x = t.mul(x, v[0]).unwrap();
        let x = t.sub(x, v[1]).unwrap();
        let x = t.add_row(x, v[2]).unwrap();
        let x = t.mul_col(x, v[3]).unwrap();
        let x = t.affine(x, 0.7, -0.2);
        let x = t.one_minus(x);
        let x = t.sigmoid(x);
        project(t, x, 2)
    });
}

#[test]
fn gradcheck_relu_softmax_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = rand_tensor(&mut rng, 4, 3);
    let b = rand_tensor(&mut rng, 4, 2);
    grad_check(vec![a, b], |t, v| {
        let r = t.relu(v[0]);
        let c = t.concat(&[r, v[1], v[0]]).unwrap();
        let s = t.softmax_rows(c);
        let m = t.mean_rows(s);
        project(t, m, 3)
    });
}

#[test]
fn gradcheck_gather_scatter_spmm() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = rand_tensor(&mut rng, 5, 3);
    grad_check(vec![a], |t, v| {
        let g = t.row_gather(v[0], &[4, 0, 0, 2]).unwrap();
        let s = t.row_scatter_add(g, &[1, 1, 3, 0], 6).unwrap();
        let mut map = SparseRows::new(2);
        map.push(0, 1, 0.5);
        map.push(0, 3, -1.5);
        map.push(1, 5, 2.0);
        map.push(1, 1, 0.25);
        let y = t.spmm(Arc::new(map), s).unwrap();
        project(t, y, 4)
    });
}

#[test]
fn gradcheck_dropout_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = rand_tensor(&mut rng, 3, 3);
    grad_check(vec![a], |t, v| {
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let d = t.dropout(v[0], 0.5, &mut r);
        project(t, d, 5)
    });
}

#[test]
fn gradcheck_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let logits = rand_tensor(&mut rng, 4, 3);
    grad_check(vec![logits.clone()], |t, v| {
        t.cross_entropy(v[0], &[0, 2, 3], &[1, 0, 2]).unwrap()
    });
    let targets = vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    grad_check(vec![logits], |t, v| {
        t.bce_with_logits(v[0], &[1, 3], &targets).unwrap()
    });
    let a = rand_tensor(&mut rng, 5, 3);
    let b = rand_tensor(&mut rng, 5, 3);
    grad_check(vec![a.clone(), b.clone()], |t, v| t.abs_cosine_mean(v[0], v[1]).unwrap());
    let c = rand_tensor(&mut rng, 5, 2);
    grad_check(vec![a, c], |t, v| t.cross_cov(v[0], v[1]).unwrap());
}

#[test]
fn visits_each_node_once_in_reverse() {
    // a diamond: y = x*x + x*x reuses x four times
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::scalar(3.0).with_grad());
    let p = t.mul(x, x).unwrap();
    let q = t.mul(x, x).unwrap();
    let y = t.add(p, q).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[12.0]);
}
