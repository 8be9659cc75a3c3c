//! Central finite-difference gradient checking.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;

use super::dense::Mlp;
use super::params::ParamVector;
use crate::error::Result;
use crate::rng::Rng;

/// Anything whose trainable state is a list of [`ParamVector`]s.
pub trait Parameterized {
    fn param_vectors(&self) -> Vec<&ParamVector>;
    fn param_vectors_mut(&mut self) -> Vec<&mut ParamVector>;
}

impl Parameterized for Mlp {
    fn param_vectors(&self) -> Vec<&ParamVector> {
        vec![self.params()]
    }

    fn param_vectors_mut(&mut self) -> Vec<&mut ParamVector> {
        vec![self.params_mut()]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check at most this many randomly chosen coordinates (all when `None`).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient produced by `analytic` (which must leave the
/// gradient buffers populated for the loss computed by `loss`) against
/// central differences of `loss`. Returns the maximum relative error.
pub fn grad_check<M, A, L>(model: &mut M, analytic: A, mut loss: L, opts: GradCheckOptions) -> Result<f64>
where
    M: Parameterized,
    A: FnOnce(&mut M) -> Result<()>,
    L: FnMut(&M) -> Result<f64>,
{
    for p in model.param_vectors_mut() {
        p.zero_grad();
    }
    analytic(model)?;
    let grads: Vec<f64> = model
        .param_vectors()
        .iter()
        .flat_map(|p| p.grads().iter().copied())
        .collect();
    let sizes: Vec<usize> = model.param_vectors().iter().map(|p| p.len()).collect();
    let total = grads.len();
    let coords: Vec<usize> = match opts.max_coords {
        Some(k) if k < total => {
            let mut rng = Rng::seed_from_u64(opts.seed);
            let mut idx = sample(&mut rng, total, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };

    let mut worst: f64 = 0.0;
    for flat in coords {
        let (vec_idx, local) = locate(&sizes, flat);
        let original = model.param_vectors()[vec_idx].values()[local];
        model.param_vectors_mut()[vec_idx].values_mut()[local] = original + opts.step;
        let plus = loss(model)?;
        model.param_vectors_mut()[vec_idx].values_mut()[local] = original - opts.step;
        let minus = loss(model)?;
        model.param_vectors_mut()[vec_idx].values_mut()[local] = original;
        let numeric = (plus - minus) / (2.0 * opts.step);
        worst = worst.max(relative_error(grads[flat], numeric));
    }
    for p in model.param_vectors_mut() {
        p.zero_grad();
    }
    Ok(worst)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &n) in sizes.iter().enumerate() {
        if flat < n {
            return (i, flat);
        }
        flat -= n;
    }
    panic!("coordinate out of range");
}

/// Gradient check of an [`Mlp`] under a per-sample loss
/// `loss_fn(y_i) -> (ℓ_i, dℓ_i/dy_i)`; the total loss is the batch mean.
pub fn grad_check_mlp<F>(net: &mut Mlp, input: ArrayView2<f64>, loss_fn: F) -> Result<f64>
where
    F: Fn(ArrayView1<f64>) -> (f64, Array1<f64>),
{
    let input = input.to_owned();
    let batch = input.nrows() as f64;
    grad_check(
        net,
        |net| {
            let y = net.forward_train(input.view())?;
            let mut g = Array2::zeros(y.raw_dim());
            for (row, mut grow) in y.rows().into_iter().zip(g.rows_mut()) {
                grow.assign(&loss_fn(row).1);
            }
            net.backward(g.view())?;
            Ok(())
        },
        |net| {
            let y = net.forward(input.view())?;
            Ok(y.rows().into_iter().map(|r| loss_fn(r).0).sum::<f64>() / batch)
        },
        GradCheckOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::Array2;
    use rand::{Rng as _, SeedableRng};

    fn quadratic(y: ArrayView1<f64>) -> (f64, Array1<f64>) {
        (y.iter().map(|v| v * v).sum(), y.mapv(|v| 2.0 * v))
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn linear_quadratic_is_nearly_exact() {
        let mut rng = Rng::seed_from_u64(5);
        let mut net = Mlp::new(&[3, 2], Activation::Identity, Activation::Identity, &mut rng);
        let err = grad_check_mlp(&mut net, random_input(4, 3, 1).view(), quadratic).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn tanh_mlp() {
        for seed in 0..5 {
            let mut rng = Rng::seed_from_u64(seed);
            let mut net = Mlp::new(&[4, 8, 1], Activation::Tanh, Activation::Identity, &mut rng);
            let err = grad_check_mlp(&mut net, random_input(5, 4, seed + 10).view(), quadratic).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn softplus_head() {
        let mut rng = Rng::seed_from_u64(7);
        let mut net = Mlp::new(&[3, 6, 2], Activation::Tanh, Activation::Softplus, &mut rng);
        let loss = |y: ArrayView1<f64>| {
            let l = y[0].ln() + 0.5 * y[1] * y[1];
            (l, ndarray::arr1(&[1.0 / y[0], y[1]]))
        };
        let err = grad_check_mlp(&mut net, random_input(6, 3, 2).view(), loss).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn relu_mlp_away_from_kinks() {
        let mut rng = Rng::seed_from_u64(11);
        let mut net = Mlp::new(&[3, 10, 2], Activation::Relu, Activation::Identity, &mut rng);
        let err = grad_check_mlp(&mut net, random_input(4, 3, 4).view(), quadratic).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
