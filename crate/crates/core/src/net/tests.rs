use super::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_421() -> NetworkSpec {
    NetworkSpec::new(vec![4, 2, 1], 0..2).unwrap()
}

/// W1 = [[0.5,-0.25,1,2],[1,1,-1,0.5]], b1 = [0.1,0.8], W2 = [[2,-0.5]], b2 = [0.3].
fn params_421() -> Parameters {
    let spec = spec_421();
    let mut p = Parameters::zeros(&spec);
    p.layers[0].weights = vec![0.5, -0.25, 1.0, 2.0, 1.0, 1.0, -1.0, 0.5];
    p.layers[0].biases = vec![0.1, 0.8];
    p.layers[1].weights = vec![2.0, -0.5];
    p.layers[1].biases = vec![0.3];
    p
}

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
}

#[test]
fn spec_validation_rejects_bad_shapes() {
    assert!(NetworkSpec::new(vec![4], 0..1).is_err());
    assert!(NetworkSpec::new(vec![4, 0, 2], 0..1).is_err());
    assert!(NetworkSpec::new(vec![4, 2], 2..2).is_err());
    assert!(NetworkSpec::new(vec![4, 2], 3..5).is_err());
    assert!(NetworkSpec::new(vec![4, 2], 0..2).is_ok());
}

#[test]
fn encoding_mode_follows_slice_width() {
    assert_eq!(NetworkSpec::new(vec![4, 2], 0..1).unwrap().encoding_mode(), EncodingMode::SignedBinary);
    assert_eq!(NetworkSpec::new(vec![4, 2], 0..2).unwrap().encoding_mode(), EncodingMode::OneHot);
    assert_eq!(NetworkSpec::new(vec![8, 2], 3..7).unwrap().encoding_mode(), EncodingMode::OneHot);
}

#[test]
fn assemble_input_places_each_part() {
    let spec = NetworkSpec::new(vec![5, 2], 1..3).unwrap();
    let input = spec.assemble_input(&[10.0, 20.0, 30.0], &[1.0, 0.0]).unwrap();
    assert_eq!(input, vec![10.0, 1.0, 0.0, 20.0, 30.0]);
    assert!(spec.assemble_input(&[10.0], &[1.0, 0.0]).is_err());
    assert!(spec.assemble_input(&[10.0, 20.0, 30.0], &[1.0]).is_err());
    let positions: Vec<usize> = spec.nonsensitive_positions().collect();
    assert_eq!(positions, vec![0, 3, 4]);
}

#[test]
fn forward_zero_weights_propagates_biases() {
    let spec = NetworkSpec::new(vec![3, 2, 2], 0..1).unwrap();
    let mut p = Parameters::zeros(&spec);
    p.layers[0].biases = vec![0.7, -0.4];
    p.layers[1].biases = vec![0.25, 0.5];
    let trace = forward(&spec, &p, &[5.0, -5.0], &[1.0]).unwrap();
    assert_eq!(trace.pre[0], vec![0.7, -0.4]);
    assert_eq!(trace.post[0], vec![0.7, 0.0]);
    assert_eq!(trace.output(), &[0.25, 0.5]);
}

#[test]
fn identity_layer_reproduces_input() {
    let spec = NetworkSpec::new(vec![3, 3], 0..1).unwrap();
    let mut p = Parameters::zeros(&spec);
    for i in 0..3 {
        *p.layers[0].weight_mut(i, i) = 1.0;
    }
    let trace = forward(&spec, &p, &[2.5, -7.0], &[-1.0]).unwrap();
    assert_eq!(trace.output(), &[-1.0, 2.5, -7.0]);
}

#[test]
fn forward_hand_fixture_is_exact() {
    let spec = spec_421();
    let p = params_421();
    let trace = forward(&spec, &p, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
    assert_eq!(trace.input, vec![1.0, 0.0, 0.5, -1.0]);
    assert_close(trace.pre[0][0], -0.9, 1e-12);
    assert_close(trace.pre[0][1], 0.8, 1e-12);
    assert_eq!(trace.post[0][0], 0.0);
    assert_close(trace.post[0][1], 0.8, 1e-12);
    assert_close(trace.output()[0], -0.1, 1e-12);
}

#[test]
fn backward_hand_fixture_is_exact() {
    let spec = spec_421();
    let p = params_421();
    let trace = forward(&spec, &p, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
    let grad = backward(&spec, &p, &trace, 1).unwrap();

    let z: f64 = -0.1;
    let d = 1.0 / (1.0 + (-z).exp());
    assert_close(grad.layers[1].weights[0], 0.0, 1e-15);
    assert_close(grad.layers[1].weights[1], d * 0.8, 1e-15);
    assert_close(grad.layers[1].biases[0], d, 1e-15);

    let d1 = -0.5 * d;
    assert_eq!(grad.layers[0].row(0), &[0.0; 4]);
    assert_close(grad.layers[0].weight(1, 0), d1, 1e-15);
    assert_close(grad.layers[0].weight(1, 1), 0.0, 1e-15);
    assert_close(grad.layers[0].weight(1, 2), d1 * 0.5, 1e-15);
    assert_close(grad.layers[0].weight(1, 3), -d1, 1e-15);
    assert_eq!(grad.layers[0].biases[0], 0.0);
    assert_close(grad.layers[0].biases[1], d1, 1e-15);
}

#[test]
fn predict_breaks_ties_toward_lowest_class() {
    let spec = NetworkSpec::new(vec![2, 3], 0..1).unwrap();
    let p = Parameters::zeros(&spec);
    let trace = forward(&spec, &p, &[1.0], &[1.0]).unwrap();
    assert_eq!(trace.output(), &[0.0, 0.0, 0.0]);
    assert_eq!(predict(&spec, &trace), 1);

    let single = NetworkSpec::new(vec![2, 1], 0..1).unwrap();
    let zero = Parameters::zeros(&single);
    let trace = forward(&single, &zero, &[1.0], &[1.0]).unwrap();
    assert_eq!(predict(&single, &trace), 1);

    let mut pos = Parameters::zeros(&single);
    pos.layers[0].biases = vec![0.5];
    let trace = forward(&single, &pos, &[1.0], &[1.0]).unwrap();
    assert_eq!(predict(&single, &trace), 2);
}

#[test]
fn loss_at_zero_parameters_is_log_class_count() {
    for k in [2usize, 3, 4, 7] {
        let spec = NetworkSpec::new(vec![3, k], 0..1).unwrap();
        let p = Parameters::zeros(&spec);
        let trace = forward(&spec, &p, &[0.3, -0.8], &[1.0]).unwrap();
        for label in 1..=k {
            assert_close(loss(&spec, &trace, label).unwrap(), (k as f64).ln(), 1e-12);
        }
    }
}

#[test]
fn single_output_loss_matches_two_logit_form() {
    // z = 1 against label 2 must give ln(1 + e^-1).
    let spec = NetworkSpec::new(vec![2, 1], 0..1).unwrap();
    let mut p = Parameters::zeros(&spec);
    p.layers[0].biases = vec![1.0];
    let trace = forward(&spec, &p, &[0.0], &[1.0]).unwrap();
    assert_close(loss(&spec, &trace, 2).unwrap(), 0.3132616875182228, 1e-12);
    assert_close(loss(&spec, &trace, 1).unwrap(), 1.0 + 0.3132616875182228, 1e-12);

    let wide = NetworkSpec::new(vec![2, 2], 0..1).unwrap();
    let mut q = Parameters::zeros(&wide);
    q.layers[0].biases = vec![0.0, 1.0];
    let trace2 = forward(&wide, &q, &[0.0], &[1.0]).unwrap();
    assert_close(loss(&wide, &trace2, 2).unwrap(), 0.3132616875182228, 1e-12);
}

#[test]
fn loss_rejects_out_of_range_labels() {
    let spec = NetworkSpec::new(vec![2, 3], 0..1).unwrap();
    let p = Parameters::zeros(&spec);
    let trace = forward(&spec, &p, &[1.0], &[1.0]).unwrap();
    assert!(loss(&spec, &trace, 0).is_err());
    assert!(loss(&spec, &trace, 4).is_err());
}

fn random_net(seed: u64, sizes: Vec<usize>) -> (NetworkSpec, Parameters, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::new(sizes, 0..2).unwrap();
    let mut p = Parameters::zeros(&spec);
    for layer in &mut p.layers {
        for w in &mut layer.weights {
            *w = rng.gen_range(-1.0..1.0);
        }
        for b in &mut layer.biases {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let x: Vec<f64> =
        (0..spec.nonsensitive_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (spec, p, x, vec![1.0, 0.0])
}

#[test]
fn gradient_matches_central_differences() {
    let (spec, p, x, s) = random_net(7, vec![5, 4, 3, 2]);
    let trace = forward(&spec, &p, &x, &s).unwrap();
    // Keep the check away from ReLU kinks so finite differences are valid.
    for pre in &trace.pre[..spec.depth() - 1] {
        for &v in pre {
            assert!(v.abs() > 1e-3, "fixture slices a ReLU kink, pick another seed");
        }
    }
    let label = 2;
    let grad = backward(&spec, &p, &trace, label).unwrap();

    let h = 1e-5;
    let probe = |mutate: &mut dyn FnMut(&mut Parameters, f64)| -> f64 {
        let mut eval = |delta: f64| -> f64 {
            let mut q = p.clone();
            mutate(&mut q, delta);
            let t = forward(&spec, &q, &x, &s).unwrap();
            loss(&spec, &t, label).unwrap()
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    };

    for l in 0..spec.depth() {
        for idx in 0..p.layers[l].weights.len() {
            let numeric = probe(&mut |q, d| q.layers[l].weights[idx] += d);
            let exact = grad.layers[l].weights[idx];
            let scale = exact.abs().max(numeric.abs()).max(1e-4);
            assert!(
                (numeric - exact).abs() / scale <= 1e-4,
                "weight [{l}][{idx}]: numeric {numeric}, exact {exact}"
            );
        }
        for idx in 0..p.layers[l].biases.len() {
            let numeric = probe(&mut |q, d| q.layers[l].biases[idx] += d);
            let exact = grad.layers[l].biases[idx];
            let scale = exact.abs().max(numeric.abs()).max(1e-4);
            assert!(
                (numeric - exact).abs() / scale <= 1e-4,
                "bias [{l}][{idx}]: numeric {numeric}, exact {exact}"
            );
        }
    }
}

#[test]
fn output_seed_gradient_is_jacobian_row() {
    let (spec, p, x, s) = random_net(11, vec![4, 3, 2]);
    let trace = forward(&spec, &p, &x, &s).unwrap();
    let mut grad = GradientSet::zeros(&spec);
    backward_seeded_into(&spec, &p, &trace, &[1.0, 0.0], &mut grad).unwrap();

    let h = 1e-5;
    let idx = 1; // one representative weight in layer 0
    let numeric = {
        let eval = |delta: f64| -> f64 {
            let mut q = p.clone();
            q.layers[0].weights[idx] += delta;
            forward(&spec, &q, &x, &s).unwrap().output()[0]
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    };
    assert_close(grad.layers[0].weights[idx], numeric, 1e-6);
}

#[test]
fn backward_rejects_stale_trace() {
    let spec = spec_421();
    let mut p = params_421();
    let trace = forward(&spec, &p, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
    let grad = backward(&spec, &p, &trace, 1).unwrap();
    p.apply_update(&grad, 0.1).unwrap();
    let err = backward(&spec, &p, &trace, 1).unwrap_err();
    assert!(matches!(err, Error::StaleTrace { .. }));
}

#[test]
fn apply_update_moves_against_gradient_and_bumps_version() {
    let spec = spec_421();
    let mut p = params_421();
    let before = p.clone();
    let trace = forward(&spec, &p, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
    let grad = backward(&spec, &p, &trace, 1).unwrap();
    p.apply_update(&grad, 0.25).unwrap();
    assert_eq!(p.version, before.version + 1);
    for l in 0..spec.depth() {
        for i in 0..p.layers[l].weights.len() {
            assert_close(
                p.layers[l].weights[i],
                before.layers[l].weights[i] - 0.25 * grad.layers[l].weights[i],
                1e-15,
            );
        }
    }
}

#[test]
fn apply_update_rejects_non_finite_result() {
    let spec = spec_421();
    let mut p = params_421();
    let mut grad = GradientSet::zeros(&spec);
    grad.layers[0].weights[0] = f64::INFINITY;
    assert!(matches!(p.apply_update(&grad, 1.0), Err(Error::NonFinite { layer: 0 })));
}

#[test]
fn forward_is_deterministic() {
    let (spec, p, x, s) = random_net(23, vec![6, 5, 4, 3]);
    let a = forward(&spec, &p, &x, &s).unwrap();
    let b = forward(&spec, &p, &x, &s).unwrap();
    assert_eq!(a, b);
}

#[test]
fn subnetwork_output_indexes_all_layers() {
    let spec = spec_421();
    let p = params_421();
    let trace = forward(&spec, &p, &[0.5, -1.0], &[1.0, 0.0]).unwrap();
    assert_eq!(subnetwork_output(&spec, &trace, 0, 3).unwrap(), -1.0);
    assert_eq!(subnetwork_output(&spec, &trace, 1, 0).unwrap(), 0.0);
    assert_close(subnetwork_output(&spec, &trace, 1, 1).unwrap(), 0.8, 1e-12);
    assert_close(subnetwork_output(&spec, &trace, 2, 0).unwrap(), -0.1, 1e-12);
    assert!(matches!(
        subnetwork_output(&spec, &trace, 1, 2),
        Err(Error::NeuronIndex { layer: 1, index: 2 })
    ));
    assert!(matches!(
        subnetwork_output(&spec, &trace, 3, 0),
        Err(Error::NeuronIndex { layer: 3, index: 0 })
    ));
}

#[test]
fn class_probabilities_form_a_distribution() {
    let (spec, p, x, s) = random_net(31, vec![4, 3]);
    let trace = forward(&spec, &p, &x, &s).unwrap();
    let probs = class_probabilities(&spec, &trace);
    assert_eq!(probs.len(), spec.num_classes());
    assert_close(probs.iter().sum::<f64>(), 1.0, 1e-12);
    assert!(probs.iter().all(|&p| p > 0.0));
}

#[test]
fn checkpoint_binary_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let spec = spec_421();
    let mut p = params_421();
    p.layers[0].weights[0] = -0.0;
    p.layers[0].weights[1] = f64::MIN_POSITIVE / 4.0;
    p.version = 42;
    save_checkpoint_binary(&path, &spec, &p).unwrap();
    let (spec2, p2) = load_checkpoint(&path).unwrap();
    assert_eq!(spec2, spec);
    assert_eq!(p2.version, 42);
    for (a, b) in p.layers.iter().zip(&p2.layers) {
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.biases.iter().zip(&b.biases) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn checkpoint_text_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    let spec = spec_421();
    let mut p = params_421();
    p.layers[1].weights[0] = 0.1 + 0.2; // not exactly 0.3
    p.layers[1].weights[1] = -0.0;
    p.version = 7;
    save_checkpoint_text(&path, &spec, &p).unwrap();
    let (spec2, p2) = load_checkpoint(&path).unwrap();
    assert_eq!(spec2, spec);
    assert_eq!(p2.version, 7);
    for (a, b) in p.layers.iter().zip(&p2.layers) {
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn checkpoint_loader_rejects_damage() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_421();
    let p = params_421();

    let path = dir.path().join("trunc.ckpt");
    save_checkpoint_binary(&path, &spec, &p).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));

    let path = dir.path().join("trailing.ckpt");
    let mut extended = bytes.clone();
    extended.extend_from_slice(&[0u8; 8]);
    std::fs::write(&path, &extended).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));

    let path = dir.path().join("garbage.txt");
    std::fs::write(&path, "not a checkpoint\n").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn loss_is_nonnegative(bias in proptest::collection::vec(-10.0f64..10.0, 3), label in 1usize..=3) {
            let spec = NetworkSpec::new(vec![2, 3], 0..1).unwrap();
            let mut p = Parameters::zeros(&spec);
            p.layers[0].biases = bias;
            let trace = forward(&spec, &p, &[0.0], &[1.0]).unwrap();
            let l = loss(&spec, &trace, label).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert!(l.is_finite());
        }

        #[test]
        fn predicted_class_has_maximal_probability(bias in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let spec = NetworkSpec::new(vec![2, 4], 0..1).unwrap();
            let mut p = Parameters::zeros(&spec);
            p.layers[0].biases = bias;
            let trace = forward(&spec, &p, &[0.0], &[1.0]).unwrap();
            let probs = class_probabilities(&spec, &trace);
            let predicted = predict(&spec, &trace);
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(probs[predicted - 1] >= max - 1e-12);
        }

        #[test]
        fn shortest_float_formatting_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let text = format!("{v}");
            let back: f64 = text.parse().unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits());
        }
    }
}
