//! Backprop against central finite differences, computed here independently
//! of the library's own checker, over random small networks.

use emogan_core::linalg::Matrix;
use emogan_core::nn::{loss_bce, loss_categorical, loss_mse, Activation, Mlp};
use emogan_core::priors::one_hot_matrix;
use emogan_core::rng::{seeded, Rng};
use rand::Rng as _;

type Loss = fn(&Matrix, &Matrix) -> (f64, Matrix);

fn mse(out: &Matrix, target: &Matrix) -> (f64, Matrix) {
    loss_mse(out, target).unwrap()
}

fn bce(out: &Matrix, target: &Matrix) -> (f64, Matrix) {
    loss_bce(out, target.data()).unwrap()
}

fn nll(out: &Matrix, target: &Matrix) -> (f64, Matrix) {
    loss_categorical(out, target).unwrap()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.5..1.5))
            .collect(),
    )
    .unwrap()
}

fn target_for(output: Activation, rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    match output {
        Activation::Sigmoid if cols == 1 => Matrix::from_vec(
            rows,
            1,
            (0..rows).map(|_| f64::from(rng.random_bool(0.5))).collect(),
        )
        .unwrap(),
        Activation::Softmax => {
            let ids: Vec<usize> = (0..rows).map(|_| rng.random_range(0..cols)).collect();
            one_hot_matrix(&ids, cols)
        }
        _ => random_matrix(rows, cols, rng),
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter.
fn worst_error(net: &Mlp, x: &Matrix, target: &Matrix, loss: Loss) -> f64 {
    let (out, cache) = net.forward(x).unwrap();
    let (_, upstream) = loss(&out, target);
    let (grads, _) = net.backward(&cache, &upstream).unwrap();
    let value = |n: &Mlp| loss(&n.predict(x).unwrap(), target).0;

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for li in 0..net.layers().len() {
        let (rows, cols) = net.layers()[li].weight.shape();
        let n_bias = net.layers()[li].bias.len();
        for p in 0..rows * cols + n_bias {
            // The smaller error of two step sizes: a kink or roundoff can spoil one.
            let err = [1e-5, 1e-6]
                .iter()
                .map(|&h| {
                    let mut eval_at = |delta: f64| {
                        let layer = &mut probe.layers_mut()[li];
                        let slot = if p < rows * cols {
                            &mut layer.weight.data_mut()[p]
                        } else {
                            &mut layer.bias[p - rows * cols]
                        };
                        let orig = *slot;
                        *slot = orig + delta;
                        let v = value(&probe);
                        let layer = &mut probe.layers_mut()[li];
                        let slot = if p < rows * cols {
                            &mut layer.weight.data_mut()[p]
                        } else {
                            &mut layer.bias[p - rows * cols]
                        };
                        *slot = orig;
                        v
                    };
                    let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
                    let analytic = if p < rows * cols {
                        grads.layers[li].weight.data()[p]
                    } else {
                        grads.layers[li].bias[p - rows * cols]
                    };
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(err);
        }
    }
    worst
}

fn random_net(hidden: Activation, output: Activation, out_dim: usize, rng: &mut Rng) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(2..=5)];
    for _ in 0..depth {
        dims.push(rng.random_range(2..=6));
    }
    dims.push(out_dim);
    let mut acts = vec![hidden; dims.len() - 2];
    acts.push(output);
    let mut net = Mlp::new(&dims, &acts, rng).unwrap();
    for layer in net.layers_mut() {
        for b in layer.bias.iter_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    net
}

#[test]
fn every_activation_and_loss_pair_over_random_networks() {
    let hiddens = [Activation::Relu, Activation::Sigmoid, Activation::Linear];
    let heads: [(Activation, usize, Loss); 5] = [
        (Activation::Linear, 3, mse),
        (Activation::Relu, 2, mse),
        (Activation::Sigmoid, 2, mse),
        (Activation::Sigmoid, 1, bce),
        (Activation::Softmax, 4, nll),
    ];
    let mut rng = seeded(20);
    let mut networks = 0;
    for hidden in hiddens {
        for &(output, out_dim, loss) in &heads {
            for _ in 0..2 {
                let net = random_net(hidden, output, out_dim, &mut rng);
                let n = rng.random_range(1..=6);
                let x = random_matrix(n, net.input_dim().unwrap(), &mut rng);
                let target = target_for(output, n, out_dim, &mut rng);
                let err = worst_error(&net, &x, &target, loss);
                assert!(
                    err < 1e-4,
                    "{hidden:?} hidden, {output:?} head: relative error {err}"
                );
                networks += 1;
            }
        }
    }
    assert!(networks >= 20);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = seeded(3);
    let net = random_net(Activation::Sigmoid, Activation::Linear, 2, &mut rng);
    let x = random_matrix(3, net.input_dim().unwrap(), &mut rng);
    let target = random_matrix(3, 2, &mut rng);
    let (out, cache) = net.forward(&x).unwrap();
    let (_, up) = loss_mse(&out, &target).unwrap();
    let (_, dx) = net.backward(&cache, &up).unwrap();
    let h = 1e-6;
    for i in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (mse(&net.predict(&plus).unwrap(), &target).0
            - mse(&net.predict(&minus).unwrap(), &target).0)
            / (2.0 * h);
        let a = dx.data()[i];
        assert!(
            (a - numeric).abs() <= 1e-6 * a.abs().max(1.0),
            "{a} vs {numeric}"
        );
    }
}
