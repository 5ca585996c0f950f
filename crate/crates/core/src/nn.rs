//! Dense layers with exact reverse-mode gradients.
//!
//! A layer computes `y = act(W x + b)` with `W` stored row-major as
//! `out_dim x in_dim`. Layers flagged `nonneg` keep every weight `>= 0`: they
//! are initialised inside `(0, 1/sqrt(fan_in))` and projected back onto the
//! non-negative orthant after every gradient step. A chain of such layers with
//! monotone activations is monotone non-decreasing in every input.
//!
//! Forward passes return a [`GradientTape`] holding each layer's input and
//! output; [`backward`] consumes it to accumulate parameter gradients and to
//! return the gradient with respect to the network input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    nonneg: bool,
    activation: Activation,
    /// Row-major, `out_dim x in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), or U(0, 1/sqrt(fan_in))
    /// for non-negative layers. Biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        nonneg: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| {
                let u: f64 = rng.random();
                if nonneg {
                    // (0, bound]: 1 - u excludes 0.
                    (1.0 - u) * bound
                } else {
                    (2.0 * u - 1.0) * bound
                }
            })
            .collect();
        let bias = (0..out_dim)
            .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
            .collect();
        Self {
            in_dim,
            out_dim,
            nonneg,
            activation,
            weights,
            bias,
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        nonneg: bool,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension {
                expected: in_dim * out_dim,
                actual: weights.len(),
                context: "layer weights",
            });
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension {
                expected: out_dim,
                actual: bias.len(),
                context: "layer bias",
            });
        }
        if nonneg && weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config(
                "negative weight in a non-negative layer".into(),
            ));
        }
        Ok(Self {
            in_dim,
            out_dim,
            nonneg,
            activation,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Mutable parameter access for tests and finite-difference checks.
    /// Does not re-project non-negative layers.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// Flat parameter access: weights first (row-major), then biases.
    pub fn param_mut(&mut self, p: usize) -> &mut f64 {
        let nw = self.weights.len();
        if p < nw {
            &mut self.weights[p]
        } else {
            &mut self.bias[p - nw]
        }
    }

    pub fn param(&self, p: usize) -> f64 {
        let nw = self.weights.len();
        if p < nw {
            self.weights[p]
        } else {
            self.bias[p - nw]
        }
    }

    /// Shifts the biases so that inputs averaging `mean` give zero mean
    /// pre-activation. Non-negative layers fed by sigmoid outputs otherwise
    /// start deep in saturation, since none of their terms cancel.
    pub fn center_bias(&mut self, mean: f64) {
        for (o, b) in self.bias.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *b -= mean * row.iter().sum::<f64>();
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| self.activation.apply(b + dot(row, x)))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Dimension {
                expected: self.in_dim,
                actual: x.len(),
                context: "layer input",
            });
        }
        Ok(self.apply(x))
    }
}

/// Dot product with four independent accumulators, so the additions do not
/// form one serial dependency chain.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (a4, a_rest) = a.split_at(a.len() - a.len() % 4);
    let (b4, b_rest) = b.split_at(a4.len());
    let mut acc = [0.0; 4];
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = a_rest.iter().zip(b_rest).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Gradient accumulator shaped like one [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn for_stack(layers: &[DenseLayer]) -> Vec<Self> {
        layers.iter().map(Self::zeros_like).collect()
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.bias.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|g| g.is_finite())
    }
}

/// Cached activations from one forward pass through a layer stack.
#[derive(Debug, Clone)]
pub struct GradientTape {
    shapes: Vec<(usize, usize)>,
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    fn matches(&self, layers: &[DenseLayer]) -> bool {
        self.shapes.len() == layers.len()
            && self
                .shapes
                .iter()
                .zip(layers)
                .all(|(&(i, o), l)| i == l.in_dim && o == l.out_dim)
    }
}

/// Runs `x` through `layers`, recording what [`backward`] needs.
pub fn forward(layers: &[DenseLayer], x: &[f64]) -> Result<(Vec<f64>, GradientTape)> {
    let mut activations = Vec::with_capacity(layers.len() + 1);
    activations.push(x.to_vec());
    for layer in layers {
        let next = layer.forward(activations.last().expect("non-empty"))?;
        activations.push(next);
    }
    let out = activations.last().cloned().unwrap_or_default();
    let shapes = layers.iter().map(|l| (l.in_dim, l.out_dim)).collect();
    Ok((
        out,
        GradientTape {
            shapes,
            activations,
        },
    ))
}

/// Forward pass without recording.
pub fn predict(layers: &[DenseLayer], x: &[f64]) -> Result<Vec<f64>> {
    let mut cur = x.to_vec();
    for layer in layers {
        cur = layer.forward(&cur)?;
    }
    Ok(cur)
}

/// Accumulates `d loss / d params` into `grads` and returns `d loss / d input`.
pub fn backward(
    layers: &[DenseLayer],
    tape: &GradientTape,
    output_grad: &[f64],
    grads: &mut [LayerGrads],
) -> Result<Vec<f64>> {
    backward_impl(layers, tape, output_grad, grads, true)
}

/// Like [`backward`] but skips the input gradient of the first layer.
pub fn backward_params(
    layers: &[DenseLayer],
    tape: &GradientTape,
    output_grad: &[f64],
    grads: &mut [LayerGrads],
) -> Result<()> {
    backward_impl(layers, tape, output_grad, grads, false).map(|_| ())
}

fn backward_impl(
    layers: &[DenseLayer],
    tape: &GradientTape,
    output_grad: &[f64],
    grads: &mut [LayerGrads],
    want_input_grad: bool,
) -> Result<Vec<f64>> {
    if !tape.matches(layers) || grads.len() != layers.len() {
        return Err(Error::StaleTape);
    }
    if output_grad.len() != tape.output().len() {
        return Err(Error::Dimension {
            expected: tape.output().len(),
            actual: output_grad.len(),
            context: "output gradient",
        });
    }
    let mut upstream = output_grad.to_vec();
    for (l, layer) in layers.iter().enumerate().rev() {
        let x = &tape.activations[l];
        let y = &tape.activations[l + 1];
        let delta: Vec<f64> = upstream
            .iter()
            .zip(y)
            .map(|(&g, &yo)| g * layer.activation.derivative_from_output(yo))
            .collect();
        let g = &mut grads[l];
        for (o, &d) in delta.iter().enumerate() {
            g.bias[o] += d;
            if d == 0.0 {
                continue;
            }
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (gw, &xi) in row.iter_mut().zip(x) {
                *gw += d * xi;
            }
        }
        if l == 0 && !want_input_grad {
            return Ok(Vec::new());
        }
        let mut down = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (di, &w) in down.iter_mut().zip(row) {
                *di += d * w;
            }
        }
        upstream = down;
    }
    Ok(upstream)
}

/// `w <- w - lr * grad`, then projection onto `w >= 0` for non-negative
/// layers. Leaves the layer untouched if the gradient is not finite.
pub fn sgd_step(layer: &mut DenseLayer, grads: &LayerGrads, lr: f64) -> Result<()> {
    check_lr(lr)?;
    if !grads.is_finite() {
        return Err(Error::NonFiniteGradient { layer: 0 });
    }
    apply_step(layer, grads, lr);
    Ok(())
}

/// Steps a whole stack; validates every gradient before touching any layer.
pub fn sgd_step_stack(layers: &mut [DenseLayer], grads: &[LayerGrads], lr: f64) -> Result<()> {
    check_lr(lr)?;
    if grads.len() != layers.len() {
        return Err(Error::StaleTape);
    }
    if let Some(layer) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { layer });
    }
    for (layer, g) in layers.iter_mut().zip(grads) {
        apply_step(layer, g, lr);
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "learning rate must be positive, got {lr}"
        )))
    }
}

fn apply_step(layer: &mut DenseLayer, grads: &LayerGrads, lr: f64) {
    for (w, g) in layer.weights.iter_mut().zip(&grads.weights) {
        *w -= lr * g;
        if layer.nonneg && *w < 0.0 {
            *w = 0.0;
        }
    }
    for (b, g) in layer.bias.iter_mut().zip(&grads.bias) {
        *b -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(n: usize) -> DenseLayer {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        DenseLayer::from_parts(n, n, false, Activation::Identity, w, vec![0.0; n]).unwrap()
    }

    #[test]
    fn identity_forward() {
        let (y, _) = forward(&[identity_layer(2)], &[1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let l =
            DenseLayer::from_parts(3, 2, false, Activation::Sigmoid, vec![0.0; 6], vec![0.0; 2])
                .unwrap();
        let (y, _) = forward(&[l], &[0.3, -2.0, 5.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
    }

    #[test]
    fn sigmoid_of_two() {
        let l =
            DenseLayer::from_parts(1, 1, false, Activation::Sigmoid, vec![2.0], vec![0.0]).unwrap();
        let (y, _) = forward(&[l], &[1.0]).unwrap();
        assert_relative_eq!(y[0], 1.0 / (1.0 + (-2.0f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(y[0], 0.8808, epsilon = 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        assert!(matches!(
            forward(&[identity_layer(2)], &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn identity_layer_gradient_is_input_outer_product() {
        let layers = [identity_layer(2)];
        let x = [3.0, -1.5];
        let (_, tape) = forward(&layers, &x).unwrap();
        let mut grads = LayerGrads::for_stack(&layers);
        // loss = sum(outputs)
        let dx = backward(&layers, &tape, &[1.0, 1.0], &mut grads).unwrap();
        assert_eq!(grads[0].weights, vec![3.0, -1.5, 3.0, -1.5]);
        assert_eq!(grads[0].bias, vec![1.0, 1.0]);
        assert_eq!(dx, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layers = vec![
            DenseLayer::init(4, 3, false, Activation::Sigmoid, &mut rng),
            DenseLayer::init(3, 2, true, Activation::Sigmoid, &mut rng),
        ];
        let (_, tape) = forward(&layers, &[0.1, 0.2, -0.3, 1.0]).unwrap();
        let mut grads = LayerGrads::for_stack(&layers);
        backward(&layers, &tape, &[0.0, 0.0], &mut grads).unwrap();
        assert!(grads
            .iter()
            .all(|g| g.weights.iter().chain(&g.bias).all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layers = vec![
            DenseLayer::init(3, 4, false, Activation::Sigmoid, &mut rng),
            DenseLayer::init(4, 1, true, Activation::Sigmoid, &mut rng),
        ];
        let x = [0.5, -1.0, 1.0];
        let (_, tape) = forward(&layers, &x).unwrap();
        let mut once = LayerGrads::for_stack(&layers);
        backward(&layers, &tape, &[0.7], &mut once).unwrap();
        let mut twice = LayerGrads::for_stack(&layers);
        backward(&layers, &tape, &[0.7], &mut twice).unwrap();
        backward(&layers, &tape, &[0.7], &mut twice).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            for (x1, x2) in a
                .weights
                .iter()
                .chain(&a.bias)
                .zip(b.weights.iter().chain(&b.bias))
            {
                assert_eq!(2.0 * x1, *x2);
            }
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = vec![DenseLayer::init(3, 2, false, Activation::Sigmoid, &mut rng)];
        let b = vec![DenseLayer::init(2, 2, false, Activation::Sigmoid, &mut rng)];
        let (_, tape) = forward(&a, &[1.0, 0.0, -1.0]).unwrap();
        let mut grads = LayerGrads::for_stack(&b);
        assert!(matches!(
            backward(&b, &tape, &[1.0, 1.0], &mut grads),
            Err(Error::StaleTape)
        ));
    }

    #[test]
    fn sgd_step_plain_and_projected() {
        let mut l = DenseLayer::from_parts(1, 1, false, Activation::Identity, vec![1.0], vec![0.0])
            .unwrap();
        let g = LayerGrads {
            weights: vec![0.5],
            bias: vec![0.0],
        };
        sgd_step(&mut l, &g, 1.0).unwrap();
        assert_eq!(l.weights(), &[0.5]);

        let mut l =
            DenseLayer::from_parts(1, 1, true, Activation::Identity, vec![0.1], vec![0.0]).unwrap();
        let g = LayerGrads {
            weights: vec![1.0],
            bias: vec![0.0],
        };
        sgd_step(&mut l, &g, 1.0).unwrap();
        assert_eq!(l.weights(), &[0.0]);
    }

    #[test]
    fn sgd_step_rejects_nan() {
        let mut l = DenseLayer::from_parts(1, 1, false, Activation::Identity, vec![1.0], vec![0.0])
            .unwrap();
        let g = LayerGrads {
            weights: vec![f64::NAN],
            bias: vec![0.0],
        };
        assert!(matches!(
            sgd_step(&mut l, &g, 1.0),
            Err(Error::NonFiniteGradient { .. })
        ));
        assert_eq!(l.weights(), &[1.0]);
        let zero = LayerGrads::zeros_like(&l);
        assert!(sgd_step(&mut l, &zero, 0.0).is_err());
    }

    #[test]
    fn nonneg_init_is_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = DenseLayer::init(16, 8, true, Activation::Sigmoid, &mut rng);
        let bound = 0.25;
        assert!(l.weights().iter().all(|&w| w > 0.0 && w <= bound));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut layers = vec![
                DenseLayer::init(5, 6, false, Activation::Sigmoid, &mut rng),
                DenseLayer::init(6, 1, true, Activation::Sigmoid, &mut rng),
            ];
            for t in 0..50 {
                let x: Vec<f64> = (0..5).map(|i| ((i + t) % 3) as f64 - 1.0).collect();
                let (y, tape) = forward(&layers, &x).unwrap();
                let target = (t % 2) as f64;
                let mut grads = LayerGrads::for_stack(&layers);
                backward(&layers, &tape, &[y[0] - target], &mut grads).unwrap();
                sgd_step_stack(&mut layers, &grads, 0.1).unwrap();
            }
            layers
        };
        assert_eq!(run(), run());
    }

    /// Central finite differences of `loss = sum_k c_k y_k` over every parameter.
    fn check_gradients(layers: &mut [DenseLayer], x: &[f64], coef: &[f64]) {
        let loss = |layers: &[DenseLayer]| -> f64 {
            predict(layers, x)
                .unwrap()
                .iter()
                .zip(coef)
                .map(|(y, c)| y * c)
                .sum()
        };
        let (_, tape) = forward(layers, x).unwrap();
        let mut grads = LayerGrads::for_stack(layers);
        let dx = backward(layers, &tape, coef, &mut grads).unwrap();
        let h = 1e-5;
        let close = |analytic: f64, numeric: f64| {
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / scale <= 1e-4,
                "analytic {analytic} vs numeric {numeric}"
            );
        };
        for l in 0..layers.len() {
            for p in 0..layers[l].n_params() {
                let nw = layers[l].weights.len();
                let orig = layers[l].param(p);
                *layers[l].param_mut(p) = orig + h;
                let up = loss(layers);
                *layers[l].param_mut(p) = orig - h;
                let down = loss(layers);
                *layers[l].param_mut(p) = orig;
                let analytic = if p < nw {
                    grads[l].weights[p]
                } else {
                    grads[l].bias[p - nw]
                };
                close(analytic, (up - down) / (2.0 * h));
            }
        }
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let up: f64 = predict(layers, &xp)
                .unwrap()
                .iter()
                .zip(coef)
                .map(|(y, c)| y * c)
                .sum();
            xp[i] = x[i] - h;
            let down: f64 = predict(layers, &xp)
                .unwrap()
                .iter()
                .zip(coef)
                .map(|(y, c)| y * c)
                .sum();
            xp[i] = x[i];
            close(dx[i], (up - down) / (2.0 * h));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gradients_match_finite_differences(
            seed in any::<u64>(),
            dims in proptest::collection::vec(1usize..=8, 2..=4),
            nonneg in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layers: Vec<DenseLayer> = dims
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let act = if i % 2 == 0 { Activation::Sigmoid } else { Activation::Identity };
                    DenseLayer::init(w[0], w[1], nonneg, act, &mut rng)
                })
                .collect();
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let coef: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            check_gradients(&mut layers, &x, &coef);
        }

        #[test]
        fn nonneg_sigmoid_chain_is_monotone(
            seed in any::<u64>(),
            bumps in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers = vec![
                DenseLayer::init(6, 5, true, Activation::Sigmoid, &mut rng),
                DenseLayer::init(5, 4, true, Activation::Sigmoid, &mut rng),
                DenseLayer::init(4, 3, true, Activation::Sigmoid, &mut rng),
            ];
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let xp: Vec<f64> = x.iter().zip(&bumps).map(|(a, b)| a + b).collect();
            let y = predict(&layers, &x).unwrap();
            let yp = predict(&layers, &xp).unwrap();
            for (a, b) in y.iter().zip(&yp) {
                prop_assert!(b >= a);
            }
        }
    }
}
