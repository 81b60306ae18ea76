//! Public-API behaviour of networks and optimizers.

use camo_nn::{Architecture, ConvSpec, Network, NnError, Optimizer, RmsProp, Sgd};

fn arch() -> Architecture {
    Architecture {
        name: "test-net".into(),
        channels: 1,
        height: 8,
        width: 8,
        input_pool: 1,
        convs: vec![ConvSpec::new(4, 3, 2), ConvSpec::new(4, 3, 1)],
        outputs: 1,
    }
}

/// Left half bright for class 1, right half bright for class 0.
fn sample(class: usize, shade: f64) -> Vec<f64> {
    (0..64)
        .map(|i| {
            let left = i % 8 < 4;
            if left == (class == 1) {
                shade
            } else {
                0.1
            }
        })
        .collect()
}

fn squared_loss(net: &Network, data: &[(Vec<f64>, f64)]) -> f64 {
    data.iter()
        .map(|(x, y)| (net.forward(x).unwrap().outputs()[0] - y).powi(2))
        .sum::<f64>()
        / data.len() as f64
}

fn fit<O: Optimizer>(opt: &mut O, steps: usize) -> (f64, f64) {
    let mut net = Network::new(arch(), 3).unwrap();
    let data: Vec<(Vec<f64>, f64)> = (0..8)
        .map(|i| (sample(i % 2, 0.6 + 0.05 * i as f64), (i % 2) as f64))
        .collect();
    let before = squared_loss(&net, &data);
    for _ in 0..steps {
        let mut grads = vec![0.0; net.param_count()];
        for (x, y) in &data {
            let trace = net.forward(x).unwrap();
            let d_out = 2.0 * (trace.outputs()[0] - y) / data.len() as f64;
            net.backward(&trace, &[d_out], &mut grads, false).unwrap();
        }
        opt.step(net.params_mut(), &grads);
    }
    (before, squared_loss(&net, &data))
}

#[test]
fn sgd_and_rmsprop_fit_a_separable_task() {
    let n = Network::new(arch(), 3).unwrap().param_count();
    let (before, after) = fit(&mut Sgd { lr: 0.05 }, 300);
    assert!(after < 0.25 * before, "SGD: {before} -> {after}");
    let (before, after) = fit(&mut RmsProp::new(3e-3, n), 300);
    assert!(after < 0.25 * before, "RMSProp: {before} -> {after}");
}

#[test]
fn parameters_round_trip_through_from_params() {
    let net = Network::new(arch(), 11).unwrap();
    let copy = Network::from_params(arch(), net.params().to_vec()).unwrap();
    let x = sample(1, 0.9);
    assert_eq!(net.forward(&x).unwrap().outputs(), copy.forward(&x).unwrap().outputs());
    assert_eq!(net.fingerprint(), copy.fingerprint());
    assert_ne!(net.fingerprint(), Network::new(arch(), 12).unwrap().fingerprint());
}

#[test]
fn shape_errors_are_reported() {
    let net = Network::new(arch(), 0).unwrap();
    assert!(matches!(net.forward(&[0.0; 10]), Err(NnError::InputLength { expected: 64, actual: 10 })));
    assert!(matches!(
        Network::from_params(arch(), vec![0.0; 3]),
        Err(NnError::ParamCount { actual: 3, .. })
    ));
    let trace = net.forward(&sample(0, 0.5)).unwrap();
    let mut grads = vec![0.0; net.param_count()];
    assert!(matches!(
        net.backward(&trace, &[1.0, 2.0], &mut grads, false),
        Err(NnError::OutputGradient { expected: 1, actual: 2 })
    ));
    let mut bad = arch();
    bad.convs[0].kernel = 2;
    assert!(matches!(Network::new(bad, 0), Err(NnError::Architecture(_))));
}
