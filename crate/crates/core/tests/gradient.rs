//! Input-gradient and forward-pass checks against independent oracles.

#![allow(clippy::needless_range_loop)]

use cadex::nnet::{Activation, Layer, Network, PROB_FLOOR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line scalar re-evaluation of a one-hidden-layer network.
fn reference_forward(net: &Network, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h, o) = (&net.layers()[0], &net.layers()[1]);
    let mut pre = vec![0.0; h.outputs];
    let mut hidden = vec![0.0; h.outputs];
    for j in 0..h.outputs {
        let mut s = h.bias[j];
        for i in 0..h.inputs {
            s += h.weights[j * h.inputs + i] * x[i];
        }
        pre[j] = s;
        hidden[j] = if s > 0.0 { s } else { 0.0 };
    }
    let mut z = [0.0; 2];
    for k in 0..2 {
        let mut s = o.bias[k];
        for j in 0..o.inputs {
            s += o.weights[k * o.inputs + j] * hidden[j];
        }
        z[k] = s;
    }
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    (vec![e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])], pre)
}

fn reference_loss(net: &Network, x: &[f64], target: usize) -> f64 {
    -reference_forward(net, x).0[target].max(PROB_FLOOR).ln()
}

fn random_net(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Network {
    let mut layer = |i: usize, o: usize, act| {
        let mut l = Layer::zeros(i, o, act);
        l.weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-0.5..0.5));
        l
    };
    let h = layer(inputs, hidden, Activation::Relu);
    let o = layer(hidden, 2, Activation::Softmax);
    Network::new(vec![h, o]).unwrap()
}

/// Largest relative error between backprop and central differences over
/// `trials` random (network, input, target) triples. Triples with a hidden
/// pre-activation within 1e-3 of the ReLU kink are redrawn.
pub fn max_gradient_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < trials {
        let inputs = rng.gen_range(1..=20);
        let hidden = rng.gen_range(1..=16);
        let net = random_net(&mut rng, inputs, hidden);
        let x: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target = rng.gen_range(0..2);
        if reference_forward(&net, &x).1.iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let g = net.grad_input(&x, target).unwrap();
        for i in 0..inputs {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd =
                (reference_loss(&net, &xp, target) - reference_loss(&net, &xm, target)) / (2.0 * h);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        }
        done += 1;
    }
    worst
}

#[test]
fn backprop_matches_central_differences() {
    let worst = max_gradient_error(200, 1);
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn forward_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let inputs = rng.gen_range(1..=30);
        let hidden = rng.gen_range(1..=20);
        let net = random_net(&mut rng, inputs, hidden);
        let x: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = net.forward(&x).unwrap();
        let (r, _) = reference_forward(&net, &x);
        assert!((p[0] - r[0]).abs() < 1e-12 && (p[1] - r[1]).abs() < 1e-12);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let target = rng.gen_range(0..2);
        let l = net.loss(&x, target).unwrap();
        assert!((l - reference_loss(&net, &x, target)).abs() < 1e-12);
    }
}

#[test]
fn first_order_taylor_prediction_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 50 {
        let net = random_net(&mut rng, 6, 8);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if reference_forward(&net, &x).1.iter().any(|z| z.abs() < 1e-2) {
            continue;
        }
        let g = net.grad_input(&x, 0).unwrap();
        // Scale the input by (1 + eps): the loss change should match g . (eps x).
        let eps = 1e-4;
        let xs: Vec<f64> = x.iter().map(|v| v * (1.0 + eps)).collect();
        let actual = net.loss(&xs, 0).unwrap() - net.loss(&x, 0).unwrap();
        let predicted: f64 = g.iter().zip(&x).map(|(gi, xi)| gi * xi * eps).sum();
        assert!(
            (actual - predicted).abs() <= 1e-3 * predicted.abs().max(1e-8) + 1e-10,
            "actual {actual} predicted {predicted}"
        );
        checked += 1;
    }
}
