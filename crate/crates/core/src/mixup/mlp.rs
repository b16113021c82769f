//! Small fully connected network with ReLU hidden layers and a linear output,
//! with hand-written backpropagation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// One affine layer, `out = W·in + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Dimension(format!(
                "bias has {} entries, weights have {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn apply(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .row_iter()
                .zip(&self.bias)
                .map(|(w, &b)| b + crate::linalg::dot(w, input)),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layers: Vec<Dense<T>>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache<T> {
    /// `inputs[l]` is the input to layer `l`; the last entry is the logits.
    pub activations: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn logits(&self) -> &[T] {
        self.activations.last().expect("non-empty cache")
    }
}

/// Gradient buffers mirroring the layer shapes.
#[derive(Debug, Clone)]
pub(crate) struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.outputs(), l.inputs()),
                    bias: vec![T::zero(); l.outputs()],
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights = Matrix::zeros(l.weights.rows(), l.weights.cols());
            l.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }
}

impl<T: Scalar> MlpModel<T> {
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} takes {}",
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || classes == 0 || hidden.contains(&0) {
            return Err(Error::Dimension("layer widths must be positive".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(classes);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-bound..bound)))
                    .collect();
                Dense {
                    weights: Matrix::new(fan_out, fan_in, data).expect("shape"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub(crate) fn forward_cached(&self, input: &[T], cache: &mut ForwardCache<T>) {
        let depth = self.layers.len();
        cache.activations.resize_with(depth + 1, Vec::new);
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(l + 1);
            let out = &mut rest[0];
            layer.apply(&done[l], out);
            if l + 1 < depth {
                for v in out.iter_mut() {
                    *v = v.max(T::zero());
                }
            }
        }
    }

    /// Logits for one input row.
    pub fn logits(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache);
        Ok(cache.activations.pop().expect("logits"))
    }

    /// Output of the last hidden layer (the input itself for a single-layer net).
    pub fn penultimate(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache);
        let n = cache.activations.len();
        Ok(cache.activations.swap_remove(n - 2))
    }

    /// Logits for every row.
    pub fn logits_batch(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        self.map_rows(inputs, self.class_count(), |c| c.logits().to_vec())
    }

    /// Penultimate features for every row.
    pub fn penultimate_batch(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        let width = self.layers.last().expect("non-empty").inputs();
        self.map_rows(inputs, width, |c| {
            c.activations[c.activations.len() - 2].clone()
        })
    }

    fn map_rows(
        &self,
        inputs: &Matrix<T>,
        width: usize,
        pick: impl Fn(&ForwardCache<T>) -> Vec<T>,
    ) -> Result<Matrix<T>> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "inputs have width {}, network expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let mut out = Matrix::zeros(inputs.rows(), width);
        let mut cache = ForwardCache::default();
        for (i, r) in inputs.row_iter().enumerate() {
            self.forward_cached(r, &mut cache);
            out.row_mut(i).copy_from_slice(&pick(&cache));
        }
        Ok(out)
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Accumulates parameter gradients for upstream gradient `grad_logits`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &[T],
        grads: &mut Gradients<T>,
    ) {
        let mut delta = grad_logits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d == T::zero() {
                    continue;
                }
                for (w, &x) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let layer = &self.layers[l];
            let mut next = vec![T::zero(); layer.inputs()];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (n, &w) in next.iter_mut().zip(layer.weights.row(o)) {
                    *n += d * w;
                }
            }
            // ReLU derivative at the previous layer's output
            for (n, &a) in next.iter_mut().zip(input) {
                if a <= T::zero() {
                    *n = T::zero();
                }
            }
            delta = next;
        }
    }

    /// `p ← p − lr·(g·scale + wd·p)` for every parameter.
    pub(crate) fn sgd_step(&mut self, grads: &Gradients<T>, scale: T, lr: T, weight_decay: T) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            let wdata = layer.weights.as_slice().to_vec();
            let updated: Vec<T> = wdata
                .iter()
                .zip(g.weights.as_slice())
                .map(|(&p, &gp)| p - lr * (gp * scale + weight_decay * p))
                .collect();
            layer.weights =
                Matrix::new(layer.weights.rows(), layer.weights.cols(), updated).expect("shape");
            for (b, &gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b = *b - lr * (gb * scale + weight_decay * *b);
            }
        }
    }

    /// `self ← decay·self + (1 − decay)·other`.
    pub(crate) fn ema_from(&mut self, other: &MlpModel<T>, decay: T) {
        let keep = T::one() - decay;
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            let updated: Vec<T> = mine
                .weights
                .as_slice()
                .iter()
                .zip(theirs.weights.as_slice())
                .map(|(&a, &b)| decay * a + keep * b)
                .collect();
            mine.weights =
                Matrix::new(mine.weights.rows(), mine.weights.cols(), updated).expect("shape");
            for (a, &b) in mine.bias.iter_mut().zip(&theirs.bias) {
                *a = decay * *a + keep * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> MlpModel<f64> {
        MlpModel::init(3, &[5, 4], 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn shapes_chain() {
        let m = net();
        assert_eq!(m.input_dim(), 3);
        assert_eq!(m.class_count(), 2);
        assert_eq!(m.logits(&[0.1, 0.2, 0.3]).unwrap().len(), 2);
        assert_eq!(m.penultimate(&[0.1, 0.2, 0.3]).unwrap().len(), 4);
        assert!(m.logits(&[0.1]).is_err());
        let bad = MlpModel::from_layers(vec![
            Dense::new(Matrix::<f64>::zeros(4, 3), vec![0.0; 4]).unwrap(),
            Dense::new(Matrix::zeros(2, 5), vec![0.0; 2]).unwrap(),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let model = net();
        let x = [0.3, -0.7, 1.1];
        let target = [0.0, 1.0];
        let loss = |m: &MlpModel<f64>| {
            let z = m.logits(&x).unwrap();
            crate::softmax::log_sum_exp(&z) - z.iter().zip(&target).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut cache = ForwardCache::default();
        model.forward_cached(&x, &mut cache);
        let mut p = cache.logits().to_vec();
        crate::softmax::softmax_in_place(&mut p);
        let g: Vec<f64> = p.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grads = Gradients::zeros_like(&model);
        model.backward(&cache, &g, &mut grads);

        let h = 1e-6;
        for l in 0..model.layers.len() {
            for idx in 0..model.layers[l].weights.as_slice().len() {
                let (r, c) = (
                    idx / model.layers[l].inputs(),
                    idx % model.layers[l].inputs(),
                );
                let mut plus = model.clone();
                plus.layers[l].weights[(r, c)] += h;
                let mut minus = model.clone();
                minus.layers[l].weights[(r, c)] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((fd - grads.layers[l].weights[(r, c)]).abs() < 1e-6);
            }
            for o in 0..model.layers[l].outputs() {
                let mut plus = model.clone();
                plus.layers[l].bias[o] += h;
                let mut minus = model.clone();
                minus.layers[l].bias[o] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((fd - grads.layers[l].bias[o]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let mut model = net();
        let before = model.clone();
        let mut grads = Gradients::zeros_like(&model);
        let mut cache = ForwardCache::default();
        model.forward_cached(&[1.0, 2.0, 3.0], &mut cache);
        model.backward(&cache, &[0.5, -0.5], &mut grads);
        model.sgd_step(&grads, 1.0, 0.0, 1e-5);
        assert_eq!(model, before);
    }
}
