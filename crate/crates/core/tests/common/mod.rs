//! Finite-difference gradient oracle shared by the integration tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfmsep::neuralnet::MlpModel;
use tfmsep::spectral::FeatureStats;
use twofloat::TwoFloat;

const STATS: FeatureStats = FeatureStats {
    mean: 0.0,
    std: 1.0,
    epsilon: 1e-10,
};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

/// exp in double-double: Taylor series on x / 2^12, then repeated squaring.
fn dd_exp(x: TwoFloat) -> TwoFloat {
    let mut r = x / 4096.0;
    let (mut term, mut sum) = (TwoFloat::from(1.0), TwoFloat::from(1.0));
    for k in 1..24 {
        term = term * r / k as f64;
        sum += term;
    }
    r = sum;
    for _ in 0..12 {
        r = r * r;
    }
    r
}

/// Parameters lifted to double-double, in `parameters_mut` order.
fn lift(model: &mut MlpModel) -> Vec<Vec<TwoFloat>> {
    model
        .parameters_mut()
        .iter()
        .map(|t| t.iter().map(|&v| TwoFloat::from(v)).collect())
        .collect()
}

/// Independent double-double forward pass and MSE, so that the central
/// difference is limited by h rather than by float64 cancellation.
fn loss(sizes: &[usize], params: &[Vec<TwoFloat>], x: &Array2<f64>, t: &Array2<f64>) -> TwoFloat {
    let layers = sizes.len() - 1;
    let mut total = TwoFloat::from(0.0);
    for (row, target) in x.rows().into_iter().zip(t.rows()) {
        let mut act: Vec<TwoFloat> = row.iter().map(|&v| TwoFloat::from(v)).collect();
        for l in 0..layers {
            let (w, b) = (&params[2 * l], &params[2 * l + 1]);
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            act = (0..n_out)
                .map(|j| {
                    let mut z = b[j];
                    for i in 0..n_in {
                        z += act[i] * w[i * n_out + j];
                    }
                    if l + 1 < layers {
                        TwoFloat::from(1.0) / (dd_exp(-z) + 1.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        for (y, &t) in act.iter().zip(target) {
            let d = *y - t;
            total += d * d;
        }
    }
    total / t.len() as f64
}

/// Worst relative error between backprop and central differences.
pub fn worst_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(&[8, 6, 6, 4], STATS, seed).unwrap();
    for layer in model.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    let x = random(3, 8, &mut rng);
    let t = random(3, 4, &mut rng);
    let (grads, _) = model.backward(x.view(), t.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.as_slices().iter().map(|g| g.to_vec()).collect();

    let sizes = [8, 6, 6, 4];
    let mut params = lift(&mut model);
    let reference = model.mse(x.view(), t.view()).unwrap();
    assert!((loss(&sizes, &params, &x, &t).hi() - reference).abs() < 1e-13 * reference.max(1.0));
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (tensor, expected) in analytic.iter().enumerate() {
        for (i, &a) in expected.iter().enumerate() {
            let original = params[tensor][i];
            params[tensor][i] = original + h;
            let up = loss(&sizes, &params, &x, &t);
            params[tensor][i] = original - h;
            let down = loss(&sizes, &params, &x, &t);
            params[tensor][i] = original;
            let numeric = ((up - down) / (2.0 * h)).hi();
            let scale = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}
