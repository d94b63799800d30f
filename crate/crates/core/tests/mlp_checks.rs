use alphasens::data::{standardize, Dataset};
use alphasens::error::Error;
use alphasens::mlp::{dataset_jacobian, train, Activation, MlpModel, Optimizer, TrainConfig};
use alphasens::oracle::finite_diff_jacobian;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Straightforward forward pass read directly off the JSON document.
fn reference_forward(doc: &str, x: &[f64]) -> Vec<f64> {
    let v: Value = serde_json::from_str(doc).unwrap();
    let sizes: Vec<usize> = v["sizes"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap() as usize).collect();
    let act = v["activation"].as_str().unwrap().to_string();
    let mut a = x.to_vec();
    for l in 0..sizes.len() - 1 {
        let w: Vec<f64> = v["weights"][l].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let b: Vec<f64> = v["biases"][l].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let mut z = vec![0.0; sizes[l + 1]];
        for o in 0..sizes[l + 1] {
            z[o] = b[o];
            for i in 0..sizes[l] {
                z[o] += w[o * sizes[l] + i] * a[i];
            }
            if l + 2 < sizes.len() {
                z[o] = match act.as_str() {
                    "tanh" => z[o].tanh(),
                    "sigmoid" => 1.0 / (1.0 + (-z[o]).exp()),
                    "softplus" => (1.0 + z[o].exp()).ln(),
                    _ => unreachable!(),
                };
            }
        }
        a = z;
    }
    a
}

const ACTIVATIONS: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Softplus];

fn random_model(rng: &mut ChaCha8Rng, seed: u64) -> MlpModel {
    let n_in = rng.gen_range(1..=6);
    let depth = rng.gen_range(1..=2);
    let mut sizes = vec![n_in];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=16));
    }
    sizes.push(rng.gen_range(1..=3));
    MlpModel::new_random(&sizes, ACTIVATIONS[rng.gen_range(0..3)], seed).unwrap()
}

#[test]
fn forward_matches_independent_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..30 {
        let model = random_model(&mut rng, seed);
        let doc = model.to_json();
        let x: Vec<f64> = (0..model.n_inputs()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ours = model.forward(&x).unwrap();
        let theirs = reference_forward(&doc, &x);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100 {
        let model = random_model(&mut rng, seed);
        let x: Vec<f64> = (0..model.n_inputs()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let analytic = model.input_jacobian(&x).unwrap();
        let numeric = finite_diff_jacobian(|z: &[f64]| model.forward(z).unwrap(), &x, 1e-5).unwrap();
        assert_eq!(analytic.dim(), numeric.dim());
        for (a, b) in analytic.iter().zip(numeric.iter()) {
            assert!((a - b).abs() <= 1e-6, "model {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn parameter_gradient_matches_central_differences_on_five_parameter_net() {
    // sizes [2, 1, 1]: 2 + 1 weights/bias in layer one, 1 + 1 in layer two
    for act in ACTIVATIONS {
        let model = MlpModel::new_random(&[2, 1, 1], act, 3).unwrap();
        assert_eq!(model.n_parameters(), 5);
        let features = ndarray::array![[0.5, -1.0], [1.5, 0.25], [-0.7, 2.0], [0.0, 0.3]];
        let targets = ndarray::array![[0.2], [0.9], [-0.4], [0.1]];
        let (_, grad) = model.loss_and_gradient(features.view(), targets.view()).unwrap();
        let base = model.parameters();
        let h = 1e-6;
        for i in 0..5 {
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                let mut p = base.clone();
                p[i] += delta;
                m.set_parameters(&p).unwrap();
                m.loss_and_gradient(features.view(), targets.view()).unwrap().0
            };
            let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            assert!((grad[i] - numeric).abs() <= 1e-6, "{act:?} param {i}: {} vs {numeric}", grad[i]);
        }
    }
}

#[test]
fn dataset_jacobian_slices() {
    let model = MlpModel::from_parts(&[2, 1], Activation::Tanh, vec![vec![3.0, -1.5]], vec![vec![0.2]]).unwrap();
    let ds = Dataset::with_default_names(ndarray::array![[0.1, 0.2], [5.0, -3.0], [0.0, 0.0]]).unwrap();
    let jac = dataset_jacobian(&model, &ds).unwrap();
    assert_eq!((jac.n_samples(), jac.n_outputs(), jac.n_features()), (3, 1, 2));
    for i in 0..3 {
        assert_eq!(jac.values()[[i, 0, 0]], 3.0);
        assert_eq!(jac.values()[[i, 0, 1]], -1.5);
    }
    let single = Dataset::with_default_names(ndarray::array![[0.4, -0.9]]).unwrap();
    let deep = MlpModel::new_random(&[2, 5, 2], Activation::Sigmoid, 8).unwrap();
    let jac = dataset_jacobian(&deep, &single).unwrap();
    let direct = deep.input_jacobian(&[0.4, -0.9]).unwrap();
    assert_eq!(jac.values().index_axis(ndarray::Axis(0), 0), direct);
}

#[test]
fn linear_model_fits_linear_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Array2::from_shape_fn((400, 3), |_| rng.gen_range(-1.0..1.0));
    let w = [0.7, -1.3, 0.4];
    let y: Array1<f64> =
        x.rows().into_iter().map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5).collect();
    let ds = Dataset::with_default_names(x).unwrap().with_target(y, "y").unwrap();
    let model = MlpModel::new_random(&[3, 1], Activation::Tanh, 0).unwrap();
    let config = TrainConfig { epochs: 300, batch_size: 32, learning_rate: 1e-2, optimizer: Optimizer::Adam, seed: 1 };
    let (fitted, trace) = train(&model, &ds, &config).unwrap();
    assert!(*trace.last().unwrap() < 1e-6, "final mse {}", trace.last().unwrap());
    assert!(trace.last().unwrap() <= &trace[0]);
    let p = fitted.parameters();
    for (a, b) in p[..3].iter().zip(&w) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((200, 2), |_| rng.gen_range(-1.0..1.0));
    let y: Array1<f64> = x.rows().into_iter().map(|r| (r[0] * 2.0_f64).sin() + r[1] * r[1]).collect();
    let ds = Dataset::with_default_names(x).unwrap().with_target(y, "y").unwrap();
    let (ds, _) = standardize(&ds).unwrap();
    let model = MlpModel::new_random(&[2, 8, 1], Activation::Tanh, 4).unwrap();
    let config = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let (a, ta) = train(&model, &ds, &config).unwrap();
    let (b, tb) = train(&model, &ds, &config).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ta, tb);
    assert!(ta.last().unwrap() <= &ta[0]);
}

#[test]
fn save_load_save_is_byte_identical() {
    let model = MlpModel::new_random(&[4, 7, 3, 2], Activation::Softplus, 21).unwrap();
    let first = model.to_json();
    let second = MlpModel::from_json(&first).unwrap().to_json();
    assert_eq!(first, second);
}

#[test]
fn truncated_document_is_a_schema_error() {
    let text = MlpModel::new_random(&[2, 3, 1], Activation::Tanh, 0).unwrap().to_json();
    let cut = &text[..text.len() / 2];
    assert!(matches!(MlpModel::from_json(cut), Err(Error::SchemaError { .. })));
    let missing_biases = r#"{"version":1,"sizes":[1,1],"activation":"tanh","weights":[[1.0]]}"#;
    match MlpModel::from_json(missing_biases) {
        Err(Error::SchemaError { path, .. }) => assert!(path.contains("biases")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn documented_example_model() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/docs/example_model.json")).unwrap();
    let model = MlpModel::from_json(&text).unwrap();
    let x = [0.3, -1.1, 2.0];
    let y = model.forward(&x).unwrap();
    assert!((y[0] - 1.2697616830364307).abs() <= 1e-12, "{}", y[0]);
    let jac = model.input_jacobian(&x).unwrap();
    let expected = [0.8472530965815551, -0.37656813276416184, -0.08023711241613782];
    for (a, b) in jac.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-12);
    }
}
