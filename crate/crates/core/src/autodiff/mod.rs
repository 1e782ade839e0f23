//! Minimal reverse-mode autodiff over dense f32 tensors, with an Adam
//! optimizer, finite-difference gradient checking and bit-exact checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod real;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport, LossGraph};
pub use real::Real;
pub use tape::{Tape, TensorId};
pub use tensor::{ParamId, ParamStore, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.input(vec![1, 2], vec![0.0, 0.0]);
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.data(y), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_stay_positive() {
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.input(vec![3, 4], (0..12).map(|i| (i as f32 - 6.0) * 13.7).collect());
        let y = tape.softmax(x).unwrap();
        for row in tape.data(y).chunks(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn matmul_identity_returns_input() {
        let mut tape: Tape<f32> = Tape::new();
        let eye = tape.input(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let a = tape.input(vec![3, 3], vec![2., -1., 0.5, 3., 7., -2., 0.1, 0.2, 0.3]);
        let out = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.data(out), tape.data(a));
    }

    #[test]
    fn tanh_backward_at_zero_is_one() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::param(vec![1], vec![0.0]).unwrap());
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.tanh(x).unwrap();
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn sum_loss_gradient_is_ones() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::param(vec![2, 3], vec![0.3; 6]).unwrap());
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.param(&store, id);
        let loss = tape.sum_all(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn mean_of_squares_gradient_matches_hand_derivation() {
        // loss = mean(x*x) for x=[1,2]: d/dx_i = 2*x_i/2 = x_i.
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::param(vec![2], vec![1.0, 2.0]).unwrap());
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.param(&store, id);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.mean_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let id = store.register("x", Tensor::param(vec![2], vec![1.0, 2.0]).unwrap());
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.param(&store, id);
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn fan_out_accumulates_exactly() {
        // loss = sum(x*a) + sum(x*b) must equal the sum of separate grads bitwise.
        let xv = vec![0.7, -1.3, 2.2];
        let av = vec![1.0, 2.0, 3.0];
        let bv = vec![-0.5, 0.25, 4.0];

        let run = |with_a: bool, with_b: bool| -> Vec<f32> {
            let mut store = ParamStore::new();
            let id = store.register("x", Tensor::param(vec![3], xv.clone()).unwrap());
            let mut tape: Tape<f32> = Tape::new();
            let x = tape.param(&store, id);
            let a = tape.input(vec![3], av.clone());
            let b = tape.input(vec![3], bv.clone());
            let mut terms = Vec::new();
            if with_a {
                let xa = tape.mul(x, a).unwrap();
                terms.push(tape.sum_all(xa).unwrap());
            }
            if with_b {
                let xb = tape.mul(x, b).unwrap();
                terms.push(tape.sum_all(xb).unwrap());
            }
            let loss = if terms.len() == 2 {
                tape.add(terms[0], terms[1]).unwrap()
            } else {
                terms[0]
            };
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().to_vec()
        };

        let both = run(true, true);
        let only_a = run(true, false);
        let only_b = run(false, true);
        for i in 0..3 {
            assert_eq!(both[i], only_a[i] + only_b[i]);
        }
    }

    #[test]
    fn shape_mismatch_is_reported_with_op_name() {
        let mut tape: Tape<f32> = Tape::new();
        let a = tape.input(vec![2, 3], vec![0.0; 6]);
        let b = tape.input(vec![2, 2], vec![0.0; 4]);
        match tape.matmul(a, b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_output_is_a_numeric_fault() {
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.input(vec![1], vec![-1.0]);
        assert!(matches!(tape.log(x), Err(Error::NumericFault { .. })));
    }

    #[test]
    fn embedding_rows_gather_and_scatter() {
        let mut store = ParamStore::new();
        let id = store.register(
            "emb",
            Tensor::param(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap(),
        );
        let mut tape: Tape<f32> = Tape::new();
        let table = tape.param(&store, id);
        let rows = tape.embed(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.data(rows), &[5., 6., 1., 2., 5., 6.]);
        let loss = tape.sum_all(rows).unwrap();
        tape.backward(loss).unwrap();
        // Row 2 used twice, row 1 never.
        assert_eq!(tape.grad(table).unwrap(), &[1., 1., 0., 0., 2., 2.]);
    }

    #[test]
    fn concat_splits_gradient_back() {
        let mut store = ParamStore::new();
        let ida = store.register("a", Tensor::param(vec![2, 2], vec![1.0; 4]).unwrap());
        let idb = store.register("b", Tensor::param(vec![2, 1], vec![2.0; 2]).unwrap());
        let mut tape: Tape<f32> = Tape::new();
        let a = tape.param(&store, ida);
        let b = tape.param(&store, idb);
        let cat = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.shape(cat), &[2, 3]);
        let w = tape.input(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let prod = tape.mul(cat, w).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1., 2., 4., 5.]);
        assert_eq!(tape.grad(b).unwrap(), &[3., 6.]);
    }
}
