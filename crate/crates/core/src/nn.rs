//! Dense feed-forward networks: ReLU hidden layers, identity or softmax output,
//! MSE loss and plain gradient descent.
//!
//! Parameters flatten layer by layer, weights (row-major, `out x in`) before
//! biases.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    output: OutputActivation,
}

/// Number of parameters of a net with the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid("a network needs at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be positive: {layer_sizes:?}")));
    }
    Ok(())
}

impl DenseNet {
    pub fn zeros(layer_sizes: &[usize], output: OutputActivation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    /// He-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output)?;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let bound = (6.0 / layer_sizes[l] as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_flat(layer_sizes: &[usize], output: OutputActivation, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output)?;
        net.set_flat(params)?;
        Ok(net)
    }

    /// Overwrites all parameters from a flat vector.
    pub fn set_flat(&mut self, params: &[f64]) -> Result<()> {
        let d = self.param_count();
        if params.len() != d {
            return Err(Error::Shape {
                expected: d,
                got: params.len(),
            });
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            b.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layer_sizes)
    }

    /// Weight matrix of layer `l`, row-major with shape `(sizes[l+1], sizes[l])`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `z = W x + b`. Zero inputs are skipped, which keeps one-hot inputs cheap
    /// without changing the accumulation order.
    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let n_in = self.layer_sizes[l];
        let w = &self.weights[l];
        let mut z = self.biases[l].clone();
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        if nnz * 4 < n_in {
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += w[j * n_in + i] * xi;
                }
            }
        } else {
            for (zj, row) in z.iter_mut().zip(w.chunks_exact(n_in)) {
                let mut acc = *zj;
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                *zj = acc;
            }
        }
        z
    }

    /// Runs every layer and returns the layer inputs (`a_0 = x`, ...) and the
    /// final pre-activation output.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n_layers = self.weights.len();
        let mut inputs = Vec::with_capacity(n_layers);
        inputs.push(x.to_vec());
        for l in 0..n_layers - 1 {
            let mut z = self.affine(l, &inputs[l]);
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
            inputs.push(z);
        }
        let out = self.affine(n_layers - 1, &inputs[n_layers - 1]);
        (inputs, out)
    }

    /// Output-layer values before the output activation.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers - 1 {
            h = self.affine(l, &h);
            for v in h.iter_mut() {
                *v = v.max(0.0);
            }
        }
        Ok(self.affine(n_layers - 1, &h))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        Ok(match self.output {
            OutputActivation::Identity => z,
            OutputActivation::Softmax => softmax(&z),
        })
    }

    /// Per-layer output deltas `dL/dz_l` for the MSE loss, computed with the
    /// current weights. Returns the loss and the layer inputs alongside.
    fn backward(&self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if self.output != OutputActivation::Identity {
            return Err(Error::invalid("backpropagation is only defined for identity-output nets"));
        }
        self.check_input(x)?;
        if target.len() != self.output_dim() {
            return Err(Error::Shape {
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        let (inputs, out) = self.forward_cached(x);
        let loss = mse_loss(&out, target)?;
        let m = out.len() as f64;
        let n_layers = self.weights.len();

        let mut deltas = vec![Vec::new(); n_layers];
        deltas[n_layers - 1] = out.iter().zip(target).map(|(y, t)| 2.0 * (y - t) / m).collect();
        for l in (0..n_layers).rev() {
            if deltas[l].iter().any(|d| !d.is_finite()) {
                return Err(Error::Numeric {
                    layer: l,
                    what: "gradient".into(),
                });
            }
            if l == 0 {
                break;
            }
            let n_in = self.layer_sizes[l];
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (j, &dj) in deltas[l].iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let row = &w[j * n_in..(j + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += wi * dj;
                }
            }
            // relu' on the hidden layer that fed layer l
            for (p, a) in prev.iter_mut().zip(&inputs[l]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            deltas[l - 1] = prev;
        }
        Ok((loss, inputs, deltas))
    }

    /// MSE loss and its gradient with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (loss, inputs, deltas) = self.backward(x, target)?;
        let mut grad = Vec::with_capacity(self.param_count());
        for (a, delta) in inputs.iter().zip(&deltas) {
            for &dj in delta {
                grad.extend(a.iter().map(|ai| dj * ai));
            }
            grad.extend_from_slice(delta);
        }
        Ok((loss, grad))
    }

    /// One in-place gradient-descent step on the MSE loss. Returns the loss
    /// measured before the update. On error the net is left untouched.
    pub fn sgd_step(&mut self, x: &[f64], target: &[f64], lr: f64) -> Result<f64> {
        let (loss, inputs, deltas) = self.backward(x, target)?;
        if lr == 0.0 {
            return Ok(loss);
        }
        for (l, (a, delta)) in inputs.iter().zip(&deltas).enumerate() {
            let n_in = self.layer_sizes[l];
            let w = &mut self.weights[l];
            let nz: Vec<usize> = (0..n_in).filter(|&i| a[i] != 0.0).collect();
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let row = &mut w[j * n_in..(j + 1) * n_in];
                for &i in &nz {
                    row[i] -= lr * dj * a[i];
                }
            }
            for (b, dj) in self.biases[l].iter_mut().zip(delta) {
                *b -= lr * dj;
            }
        }
        Ok(loss)
    }

    /// Pure form of [`DenseNet::sgd_step`]: returns the updated net and the
    /// pre-update loss.
    pub fn backprop_step(&self, x: &[f64], target: &[f64], lr: f64) -> Result<(DenseNet, f64)> {
        if !(lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {lr}")));
        }
        let mut next = self.clone();
        let loss = next.sgd_step(x, target, lr)?;
        Ok((next, loss))
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}
