//! Reverse-mode differentiation engine and model layer primitives.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    attention_support, gat_attention, gcn_layer, gcn_norm_adjacency, glorot_init, glorot_with,
    multi_head, Activation, GatHead, HeadMode,
};
pub use optim::{adagrad_step, AdagradState};
pub use tape::{instance_norm_value, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::graph_from_edges;
    use crate::seeds;
    use rand::Rng;
    use std::rc::Rc;

    /// Reduce `x` (m x n) to a scalar via a fixed seeded probe:
    /// `ones^T (x p)`. The probe depends only on the seed and x's width, so
    /// repeated evaluations at perturbed inputs see the same reduction.
    fn reduce(tape: &mut Tape<f64>, x: Var, seed: u64) -> Var {
        let mut rng = seeds::rng(seed, "probe");
        let cols = tape.value(x).cols();
        let p = Tensor::from_fn(cols, 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let pv = tape.leaf(p, false);
        let xp = tape.matmul(x, pv).unwrap();
        let ones = tape.leaf(Tensor::from_fn(1, tape.value(xp).rows(), |_, _| 1.0), false);
        tape.matmul(ones, xp).unwrap()
    }

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut rng = seeds::rng(seed, "rand-tensor");
        Tensor::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn instance_norm_two_point_column() {
        let x = Tensor::column(vec![3.0f64, 1.0]);
        let y = instance_norm_value(&x, &[true, true], 0.0f64).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((y.get(1, 0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn instance_norm_constant_column_is_zero() {
        let x = Tensor::from_fn(5, 2, |_, j| if j == 0 { 4.0 } else { 7.5 });
        let y = instance_norm_value(&x, &[true; 5], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_norm_statistics_on_random_input() {
        let x = rand_tensor(50, 64, 5);
        let eps = 1e-5;
        let y = instance_norm_value(&x, &[true; 50], eps).unwrap();
        for j in 0..64 {
            let mean: f64 = (0..50).map(|i| y.get(i, j)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-6, "column {j} mean {mean}");
            let var: f64 = (0..50).map(|i| (y.get(i, j) - mean).powi(2)).sum::<f64>() / 50.0;
            let mu: f64 = (0..50).map(|i| x.get(i, j)).sum::<f64>() / 50.0;
            let sigma2: f64 = (0..50).map(|i| (x.get(i, j) - mu).powi(2)).sum::<f64>() / 50.0;
            let expect = sigma2 / (sigma2 + eps);
            assert!((var - expect).abs() < 1e-4, "column {j}: {var} vs {expect}");
        }
    }

    #[test]
    fn instance_norm_skips_padded_rows() {
        let x = Tensor::from_fn(4, 1, |i, _| [3.0f64, 1.0, 99.0, -99.0][i]);
        let y = instance_norm_value(&x, &[true, true, false, false], 0.0).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((y.get(1, 0) + 1.0).abs() < 1e-12);
        assert_eq!(y.get(2, 0), 0.0);
        assert_eq!(y.get(3, 0), 0.0);
    }

    #[test]
    fn instance_norm_rejects_all_padded() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(3, 2), true);
        assert!(tape.instance_norm(x, Rc::new(vec![false; 3]), 1e-5).is_err());
    }

    #[test]
    fn instance_norm_shift_invariant_at_zero_eps() {
        let x = rand_tensor(10, 4, 7);
        let mut shifted = x.clone();
        for i in 0..10 {
            for j in 0..4 {
                shifted.set(i, j, x.get(i, j) + (j as f64 + 1.0) * 10.0);
            }
        }
        let a = instance_norm_value(&x, &[true; 10], 0.0).unwrap();
        let b = instance_norm_value(&shifted, &[true; 10], 0.0).unwrap();
        for (u, v) in a.data().iter().zip(b.data().iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn gcn_norm_three_path_hand_values() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let a = gcn_norm_adjacency::<f64>(&g, &[false; 3]);
        assert!((a.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-12);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-12);
        assert!((a.get(2, 2) - 0.5).abs() < 1e-12);
        assert_eq!(a.get(0, 2), 0.0);
        // symmetry
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn gcn_norm_isolated_vertex_is_identity_row() {
        let g = graph_from_edges(1, &[]);
        let a = gcn_norm_adjacency::<f64>(&g, &[false]);
        assert_eq!(a.get(0, 0), 1.0);
        // padded vertices behave the same way
        let g2 = graph_from_edges(2, &[(0, 1)]).pad_to(3);
        let a2 = gcn_norm_adjacency::<f64>(&g2, &[false, false, true]);
        assert_eq!(a2.get(2, 2), 1.0);
        assert_eq!(a2.get(2, 0), 0.0);
        assert_eq!(a2.get(0, 2), 0.0);
    }

    #[test]
    fn gcn_layer_identity_composition() {
        let g = graph_from_edges(3, &[]);
        let mut tape = Tape::<f64>::new();
        let h0 = rand_tensor(3, 3, 9);
        let h = tape.leaf(h0.clone(), false);
        // isolated vertices: Anorm = I
        let anorm = tape.leaf(gcn_norm_adjacency(&g, &[false; 3]), false);
        let w = tape.leaf(Tensor::from_fn(3, 3, |i, j| f64::from(u8::from(i == j))), false);
        let b = tape.leaf(Tensor::zeros(1, 3), false);
        let out = gcn_layer(&mut tape, h, anorm, w, b, Activation::Identity).unwrap();
        assert_eq!(tape.value(out).data(), h0.data());
    }

    #[test]
    fn gcn_layer_zero_params_elu_is_zero() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(3, 4, 2), false);
        let anorm = tape.leaf(gcn_norm_adjacency(&g, &[false; 3]), false);
        let w = tape.leaf(Tensor::zeros(2, 4), false);
        let b = tape.leaf(Tensor::zeros(1, 2), false);
        let out = gcn_layer(&mut tape, h, anorm, w, b, Activation::Elu).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_layer_gradients_match_finite_differences() {
        let g = graph_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        let anorm_t = gcn_norm_adjacency::<f64>(&g, &[false; 5]);
                let inputs = vec![rand_tensor(5, 3, 41), rand_tensor(4, 3, 43), rand_tensor(1, 4, 47)];
        let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
            let mut tape = Tape::<f64>::new();
            let h = tape.leaf(ins[0].clone(), true);
            let w = tape.leaf(ins[1].clone(), true);
            let b = tape.leaf(ins[2].clone(), true);
            let anorm = tape.leaf(anorm_t.clone(), false);
            let out = gcn_layer(&mut tape, h, anorm, w, b, Activation::Elu)?;
            let s = reduce(&mut tape, out, 31);
            let grads = tape.backward(s)?;
            Ok((
                tape.value(s).item(),
                vec![
                    grads.get(h, ins[0].shape()),
                    grads.get(w, ins[1].shape()),
                    grads.get(b, ins[2].shape()),
                ],
            ))
        };
        let (_, analytic) = run(&inputs).unwrap();
        let report = grad_check(
            |ins| run(ins).map(|(v, _)| v),
            &inputs,
            &analytic,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    fn k4_support() -> (crate::graph::Graph, Rc<Vec<Vec<usize>>>) {
        let g = graph_from_edges(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]);
        let sup = attention_support(&g, &[false; 4]);
        (g, sup)
    }

    #[test]
    fn gat_zero_attention_vector_is_uniform() {
        let (_, sup) = k4_support();
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(4, 3, 3), false);
        let w = tape.leaf(rand_tensor(2, 3, 5), false);
        let c = tape.leaf(Tensor::zeros(4, 1), false);
        let head = gat_attention(&mut tape, h, &sup, w, c, 0.2).unwrap();
        let a = tape.value(head.coefficients);
        for (i, s) in sup.iter().enumerate() {
            for &j in s {
                assert!((a.get(i, j) - 1.0 / s.len() as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_self_loop_only_vertex_attends_to_itself() {
        let g = graph_from_edges(3, &[(0, 1)]); // vertex 2 isolated
        let sup = attention_support(&g, &[false; 3]);
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(3, 3, 13), false);
        let w = tape.leaf(rand_tensor(2, 3, 17), false);
        let c = tape.leaf(rand_tensor(4, 1, 19), false);
        let head = gat_attention(&mut tape, h, &sup, w, c, 0.2).unwrap();
        assert!((tape.value(head.coefficients).get(2, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gat_rows_sum_to_one_and_zero_off_support() {
        let (_, sup) = k4_support();
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(4, 5, 23), false);
        let w = tape.leaf(rand_tensor(3, 5, 29), false);
        let c = tape.leaf(rand_tensor(6, 1, 31), false);
        let head = gat_attention(&mut tape, h, &sup, w, c, 0.2).unwrap();
        let a = tape.value(head.coefficients);
        for (i, s) in sup.iter().enumerate() {
            let mut row_sum = 0.0;
            for j in 0..4 {
                if s.contains(&j) {
                    row_sum += a.get(i, j);
                } else {
                    assert_eq!(a.get(i, j), 0.0);
                }
            }
            assert!((row_sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gat_order_preserving_across_rows() {
        // coefficient ranking over shared support columns must agree with the
        // per-vertex score for every pair of rows
        for draw in 0..25u64 {
            let (_, sup) = k4_support();
            let mut tape = Tape::<f64>::new();
            let h = tape.leaf(rand_tensor(4, 4, 100 + draw), false);
            let w = tape.leaf(rand_tensor(3, 4, 200 + draw), false);
            let c = tape.leaf(rand_tensor(6, 1, 300 + draw), false);
            let head = gat_attention(&mut tape, h, &sup, w, c, 0.2).unwrap();
            let a = tape.value(head.coefficients).clone();
            let score = tape.value(head.scores).clone();
            for i in 0..4 {
                for i2 in 0..4 {
                    for &j in &sup[i] {
                        for &k in &sup[i] {
                            if sup[i2].contains(&j) && sup[i2].contains(&k) {
                                let lhs = a.get(i, j) > a.get(i, k);
                                let rhs = a.get(i2, j) > a.get(i2, k);
                                let by_score = score.get(j, 0) > score.get(k, 0);
                                assert_eq!(lhs, by_score);
                                assert_eq!(rhs, by_score);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gat_gradients_match_finite_differences() {
        let (g, sup) = k4_support();
        let _ = g;
                let inputs = vec![rand_tensor(4, 3, 71), rand_tensor(2, 3, 73), rand_tensor(4, 1, 79)];
        let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
            let mut tape = Tape::<f64>::new();
            let h = tape.leaf(ins[0].clone(), true);
            let w = tape.leaf(ins[1].clone(), true);
            let c = tape.leaf(ins[2].clone(), true);
            let head = gat_attention(&mut tape, h, &sup, w, c, 0.2)?;
            let z = tape.matmul(head.coefficients, head.projection)?;
            let s = reduce(&mut tape, z, 61);
            let grads = tape.backward(s)?;
            Ok((
                tape.value(s).item(),
                vec![
                    grads.get(h, ins[0].shape()),
                    grads.get(w, ins[1].shape()),
                    grads.get(c, ins[2].shape()),
                ],
            ))
        };
        let (_, analytic) = run(&inputs).unwrap();
        let report = grad_check(|ins| run(ins).map(|(v, _)| v), &inputs, &analytic, 1e-5, 1e-4)
            .unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn multi_head_single_concat_equals_one_head() {
        let (_, sup) = k4_support();
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(4, 3, 83), false);
        let w = tape.leaf(rand_tensor(2, 3, 89), false);
        let c = tape.leaf(rand_tensor(4, 1, 97), false);
        let b = tape.leaf(rand_tensor(1, 2, 101), false);
        let (out, _) = multi_head(
            &mut tape,
            h,
            &sup,
            &[(w, c)],
            b,
            HeadMode::Concat,
            Activation::Elu,
            0.2,
        )
        .unwrap();
        // manual single head
        let head = gat_attention(&mut tape, h, &sup, w, c, 0.2).unwrap();
        let z = tape.matmul(head.coefficients, head.projection).unwrap();
        let zb = tape.add_row_vec(z, b).unwrap();
        let manual = tape.elu(zb);
        for (a, m) in tape
            .value(out)
            .data()
            .iter()
            .zip(tape.value(manual).data().iter())
        {
            assert!((a - m).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_head_identical_heads_average_equals_one() {
        let (_, sup) = k4_support();
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(4, 3, 103), false);
        let w = tape.leaf(rand_tensor(2, 3, 107), false);
        let c = tape.leaf(rand_tensor(4, 1, 109), false);
        let b = tape.leaf(Tensor::zeros(1, 2), false);
        let (avg, _) = multi_head(
            &mut tape,
            h,
            &sup,
            &[(w, c), (w, c), (w, c)],
            b,
            HeadMode::Average,
            Activation::Identity,
            0.2,
        )
        .unwrap();
        let (one, _) = multi_head(
            &mut tape,
            h,
            &sup,
            &[(w, c)],
            b,
            HeadMode::Average,
            Activation::Identity,
            0.2,
        )
        .unwrap();
        for (a, m) in tape
            .value(avg)
            .data()
            .iter()
            .zip(tape.value(one).data().iter())
        {
            assert!((a - m).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_head_concat_width() {
        let (_, sup) = k4_support();
        let mut tape = Tape::<f64>::new();
        let h = tape.leaf(rand_tensor(4, 6, 113), false);
        let heads: Vec<(Var, Var)> = (0..8)
            .map(|k| {
                let w = tape.leaf(rand_tensor(16, 6, 200 + k), false);
                let c = tape.leaf(rand_tensor(32, 1, 300 + k), false);
                (w, c)
            })
            .collect();
        let b = tape.leaf(Tensor::zeros(1, 128), false);
        let (out, _) = multi_head(
            &mut tape,
            h,
            &sup,
            &heads,
            b,
            HeadMode::Concat,
            Activation::Elu,
            0.2,
        )
        .unwrap();
        assert_eq!(tape.value(out).shape(), (4, 128));
    }

    #[test]
    fn activation_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::column(vec![0.0, -1.0, -20.0, 2.0]), false);
        let e = tape.elu(x);
        assert_eq!(tape.value(e).get(0, 0), 0.0);
        assert!((tape.value(e).get(1, 0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
        assert!((tape.value(e).get(2, 0) + 1.0).abs() < 1e-8);
        assert_eq!(tape.value(e).get(3, 0), 2.0);
        let l = tape.leaky_relu(x, 0.2);
        assert!((tape.value(l).get(1, 0) + 0.2).abs() < 1e-12);
        assert_eq!(tape.value(l).get(3, 0), 2.0);
    }

    #[test]
    fn activation_gradients() {
        for kind in [Activation::Elu, Activation::LeakyRelu(0.2)] {
            let inputs = vec![Tensor::column(vec![0.5, -0.5])];
                        let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
                let mut tape = Tape::<f64>::new();
                let x = tape.leaf(ins[0].clone(), true);
                let y = kind.apply(&mut tape, x);
                let s = reduce(&mut tape, y, 11);
                let grads = tape.backward(s)?;
                Ok((tape.value(s).item(), vec![grads.get(x, ins[0].shape())]))
            };
            let (_, analytic) = run(&inputs).unwrap();
            let report =
                grad_check(|ins| run(ins).map(|(v, _)| v), &inputs, &analytic, 1e-6, 1e-6)
                    .unwrap();
            assert!(report.passed, "{kind:?}: max rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut tape = Tape::<f64>::new();
        let mut rng = seeds::rng(1, "dropout-test");
        let x = tape.leaf(rand_tensor(4, 4, 1), false);
        let y = tape.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_statistics() {
        let mut tape = Tape::<f64>::new();
        let mut rng = seeds::rng(2, "dropout-test");
        let x = tape.leaf(Tensor::from_fn(1000, 1000, |_, _| 1.0), false);
        let y = tape.dropout(x, 0.2, &mut rng).unwrap();
        let data = tape.value(y).data();
        let survivors = data.iter().filter(|&&v| v != 0.0).count() as f64 / data.len() as f64;
        assert!((survivors - 0.8).abs() < 0.002, "survivor fraction {survivors}");
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn nll_equal_logits_is_ln2() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::new(1, 2, vec![0.3, 0.3]).unwrap(), false);
        let loss = tape.nll_loss(z, Rc::new(vec![1])).unwrap();
        assert!((tape.value(loss).item() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_saturated_logits_near_zero() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::new(1, 2, vec![0.0, 20.0]).unwrap(), false);
        let loss = tape.nll_loss(z, Rc::new(vec![1])).unwrap();
        assert!(tape.value(loss).item() < 1e-8);
    }

    #[test]
    fn nll_matches_hand_computation() {
        let zs = [(0.7, -0.2, 0usize), (-1.3, 0.4, 1), (0.05, 0.0, 0)];
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(
            Tensor::new(3, 2, zs.iter().flat_map(|&(a, b, _)| [a, b]).collect()).unwrap(),
            false,
        );
        let labels: Vec<usize> = zs.iter().map(|&(_, _, y)| y).collect();
        let loss = tape.nll_loss(z, Rc::new(labels)).unwrap();
        let mut expect = 0.0;
        for &(a, b, y) in &zs {
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            expect += lse - if y == 0 { a } else { b };
        }
        expect /= 3.0;
        assert!((tape.value(loss).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient_check() {
        let inputs = vec![rand_tensor(3, 2, 303)];
        let labels = Rc::new(vec![0usize, 1, 1]);
        let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
            let mut tape = Tape::<f64>::new();
            let z = tape.leaf(ins[0].clone(), true);
            let loss = tape.nll_loss(z, Rc::clone(&labels))?;
            let grads = tape.backward(loss)?;
            Ok((tape.value(loss).item(), vec![grads.get(z, ins[0].shape())]))
        };
        let (_, analytic) = run(&inputs).unwrap();
        let report =
            grad_check(|ins| run(ins).map(|(v, _)| v), &inputs, &analytic, 1e-5, 1e-6).unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn instance_norm_gradient_check() {
        let valid = Rc::new(vec![true, true, true, false, true]);
        let inputs = vec![rand_tensor(5, 3, 307)];
                let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(ins[0].clone(), true);
            let y = tape.instance_norm(x, Rc::clone(&valid), 1e-5)?;
            let s = reduce(&mut tape, y, 11);
            let grads = tape.backward(s)?;
            Ok((tape.value(s).item(), vec![grads.get(x, ins[0].shape())]))
        };
        let (_, analytic) = run(&inputs).unwrap();
        let report =
            grad_check(|ins| run(ins).map(|(v, _)| v), &inputs, &analytic, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn unfold_conv_arithmetic() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(rand_tensor(80, 3, 313), false);
        let u = tape.unfold1d(x, 5, 5).unwrap();
        assert_eq!(tape.value(u).shape(), (16, 15));
        let u2 = tape.unfold1d(u, 1, 1).unwrap();
        assert_eq!(tape.value(u2).shape(), (16, 15));
    }

    #[test]
    fn unfold_gradient_check() {
        let inputs = vec![rand_tensor(10, 2, 317)];
                let run = |ins: &[Tensor<f64>]| -> crate::error::Result<(f64, Vec<Tensor<f64>>)> {
            let mut tape = Tape::<f64>::new();
            let x = tape.leaf(ins[0].clone(), true);
            let u = tape.unfold1d(x, 4, 2)?;
            let s = reduce(&mut tape, u, 33);
            let grads = tape.backward(s)?;
            Ok((tape.value(s).item(), vec![grads.get(x, ins[0].shape())]))
        };
        let (_, analytic) = run(&inputs).unwrap();
        let report =
            grad_check(|ins| run(ins).map(|(v, _)| v), &inputs, &analytic, 1e-5, 1e-6).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn glorot_bound_and_moments() {
        let w = glorot_init::<f64>(3, 3, 5);
        assert!(w.data().iter().all(|&x| (-1.0..=1.0).contains(&x)));
        assert_eq!(w.shape(), (3, 3));

        let mut rng = seeds::rng(6, "glorot-moments");
        let big = glorot_with::<f64>(500, 200, 40, 60, &mut rng);
        let mean: f64 = big.data().iter().sum::<f64>() / big.len() as f64;
        let var: f64 = big.data().iter().map(|&x| (x - mean).powi(2)).sum::<f64>()
            / big.len() as f64;
        let expect = 2.0 / (40.0 + 60.0);
        assert!((var - expect).abs() / expect < 0.03, "variance {var} vs {expect}");
    }

    #[test]
    fn glorot_deterministic() {
        let a = glorot_init::<f32>(7, 5, 99);
        let b = glorot_init::<f32>(7, 5, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn grad_check_quadratic_and_negative_control() {
        let inputs = vec![Tensor::column(vec![1.0, 2.0])];
        let eval = |ins: &[Tensor<f64>]| -> crate::error::Result<f64> {
            Ok(ins[0].data().iter().map(|&x| x * x).sum())
        };
        let analytic = vec![Tensor::column(vec![2.0, 4.0])];
        let report = grad_check(eval, &inputs, &analytic, 1e-5, 1e-6).unwrap();
        assert!(report.passed);

        // corrupt one term by 10%: the check must fail
        let corrupted = vec![Tensor::column(vec![2.2, 4.0])];
        let report = grad_check(eval, &inputs, &corrupted, 1e-5, 1e-4).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, (0, 0));
    }
}
