//! Fixed-topology multilayer perceptron with a manual reverse-mode tape.
//!
//! Layer `k` computes `z = x Wᵀ + b` followed by its activation. Weights are
//! stored row-major with shape `(out, in)` in the net's [`ParamStore`] under
//! `"<name>.l<k>.weight"` and `"<name>.l<k>.bias"`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::{ParamEntry, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Linear => {}
        }
    }

    /// Multiplies `grad` in place by the activation derivative, given the
    /// post-activation `a` (`relu(z) > 0` exactly when `z > 0`).
    fn backprop(self, grad: &mut Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(a).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Linear => {}
        }
    }
}

#[derive(Debug, Clone)]
struct Tape {
    /// Post-activations; `acts[0]` is the input.
    acts: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct Net {
    name: String,
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: ParamStore,
    tape: Option<Tape>,
}

impl Net {
    /// Builds a net with weights and biases drawn uniformly from `±1/√fan_in`.
    ///
    /// `activations` has one entry per layer, i.e. `sizes.len() - 1`.
    pub fn new<R: Rng + ?Sized>(
        name: impl Into<String>,
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        let name = name.into();
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Topology(format!(
                "{name}: layer sizes {sizes:?} need length >= 2 and every size >= 1"
            )));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Topology(format!(
                "{name}: {} activations for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        let mut params = ParamStore::new();
        for (k, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            let bias = (0..fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            params.insert(
                format!("{name}.l{k}.weight"),
                ParamEntry::new(vec![fan_out, fan_in], weight),
            );
            params.insert(format!("{name}.l{k}.bias"), ParamEntry::new(vec![fan_out], bias));
        }
        Ok(Net {
            name,
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params,
            tape: None,
        })
    }

    /// Builds a net from explicit per-layer `(weight, bias)` arrays.
    pub fn from_layers(
        name: impl Into<String>,
        layers: &[(Array2<f64>, Array1<f64>)],
        activations: &[Activation],
    ) -> Result<Self> {
        let name = name.into();
        if layers.is_empty() || activations.len() != layers.len() {
            return Err(Error::Topology(format!("{name}: bad layer list")));
        }
        let mut sizes = vec![layers[0].0.ncols()];
        let mut params = ParamStore::new();
        for (k, (w, b)) in layers.iter().enumerate() {
            if w.ncols() != *sizes.last().unwrap() || w.nrows() != b.len() {
                return Err(Error::Topology(format!("{name}: layer {k} shapes do not chain")));
            }
            sizes.push(w.nrows());
            params.insert(
                format!("{name}.l{k}.weight"),
                ParamEntry::new(vec![w.nrows(), w.ncols()], w.iter().copied().collect()),
            );
            params.insert(
                format!("{name}.l{k}.bias"),
                ParamEntry::new(vec![b.len()], b.to_vec()),
            );
        }
        Ok(Net {
            name,
            sizes,
            activations: activations.to_vec(),
            params,
            tape: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = self.params.get(&format!("{}.l{k}.weight", self.name)).unwrap();
        let b = self.params.get(&format!("{}.l{k}.bias", self.name)).unwrap();
        let w = ArrayView2::from_shape((w.shape[0], w.shape[1]), &w.values).unwrap();
        (w, ArrayView1::from(&b.values))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.sizes[0] {
            return Err(Error::Dimension {
                layer: format!("{}.l0 input", self.name),
                expected: self.sizes[0],
                got: cols,
            });
        }
        Ok(())
    }

    fn run(&self, input: ArrayView2<'_, f64>, record: bool) -> Result<(Array2<f64>, Option<Tape>)> {
        self.check_input(input.ncols())?;
        let mut tape = record.then(|| Tape {
            acts: vec![input.to_owned()],
        });
        let mut x = input.to_owned();
        for (k, act) in self.activations.iter().enumerate() {
            let (w, b) = self.layer(k);
            let mut z = x.dot(&w.t());
            z += &b;
            act.apply(&mut z);
            if let Some(t) = tape.as_mut() {
                t.acts.push(z.clone());
            }
            x = z;
        }
        Ok((x, tape))
    }

    /// Batched forward pass (one row per sample), recording the tape for
    /// a following [`Net::backward_batch`].
    pub fn forward_batch(&mut self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (out, tape) = self.run(input, true)?;
        self.tape = tape;
        Ok(out)
    }

    /// Forward pass without touching the tape.
    pub fn infer_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.run(input, false)?.0)
    }

    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        Ok(self.infer_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn backward(&mut self, output_grad: &[f64]) -> Result<Vec<f64>> {
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).unwrap();
        Ok(self.backward_batch(g)?.into_raw_vec_and_offset().0)
    }

    /// Accumulates `∂(Σ output_grad ⊙ output)/∂θ` into the parameter gradients
    /// and returns the gradient with respect to the recorded input.
    pub fn backward_batch(&mut self, output_grad: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.backprop(output_grad, true)
    }

    /// Like [`Net::backward_batch`] but leaves parameter gradients untouched.
    pub fn input_grad_batch(&mut self, output_grad: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.backprop(output_grad, false)
    }

    fn backprop(&mut self, output_grad: ArrayView2<'_, f64>, accumulate: bool) -> Result<Array2<f64>> {
        let tape = self.tape.take().ok_or_else(|| Error::NoForward {
            net: self.name.clone(),
        })?;
        let rows = tape.acts[0].nrows();
        if output_grad.ncols() != self.output_dim() || output_grad.nrows() != rows {
            let layer = format!("{}.l{} output", self.name, self.activations.len() - 1);
            return Err(Error::Dimension {
                layer,
                expected: self.output_dim(),
                got: output_grad.ncols(),
            });
        }
        let mut grad = output_grad.to_owned();
        for k in (0..self.activations.len()).rev() {
            self.activations[k].backprop(&mut grad, &tape.acts[k + 1]);
            let input_grad = grad.dot(&self.layer(k).0);
            if accumulate {
                let dw = grad.t().dot(&tape.acts[k]);
                let db = grad.sum_axis(Axis(0));
                let name = &self.name;
                let w = self.params.get_mut(&format!("{name}.l{k}.weight")).unwrap();
                w.grads.iter_mut().zip(dw.iter()).for_each(|(g, d)| *g += d);
                let b = self.params.get_mut(&format!("{name}.l{k}.bias")).unwrap();
                b.grads.iter_mut().zip(db.iter()).for_each(|(g, d)| *g += d);
            }
            grad = input_grad;
        }
        Ok(grad)
    }

    /// `θ′ ← τθ + (1−τ)θ′` for every parameter of `self` (the target).
    pub fn soft_update_from(&mut self, source: &Net, tau: f64) -> Result<()> {
        if self.sizes != source.sizes || self.activations != source.activations {
            return Err(Error::Topology(format!(
                "soft update {} <- {}: {:?} vs {:?}",
                self.name, source.name, self.sizes, source.sizes
            )));
        }
        let src: Vec<&ParamEntry> = source.params.iter().map(|(_, e)| e).collect();
        for ((_, dst), src) in self.params.iter_mut().zip(src) {
            if tau == 1.0 {
                dst.values.copy_from_slice(&src.values);
            } else {
                // Incremental form keeps a target that already equals its source fixed.
                for (d, s) in dst.values.iter_mut().zip(&src.values) {
                    *d += tau * (s - *d);
                }
            }
        }
        Ok(())
    }

    /// Copy of this net under a new name (parameter names are re-prefixed).
    pub fn renamed(&self, name: impl Into<String>) -> Net {
        let name = name.into();
        let mut params = ParamStore::new();
        for (k, e) in self.params.iter() {
            let suffix = &k[self.name.len()..];
            let mut e = e.clone();
            e.grads.iter_mut().for_each(|g| *g = 0.0);
            e.adam_m.iter_mut().for_each(|g| *g = 0.0);
            e.adam_v.iter_mut().for_each(|g| *g = 0.0);
            e.step_count = 0;
            params.insert(format!("{name}{suffix}"), e);
        }
        Net {
            name,
            sizes: self.sizes.clone(),
            activations: self.activations.clone(),
            params,
            tape: None,
        }
    }
}
