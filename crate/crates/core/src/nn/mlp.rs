use ndarray::{Array2, ArrayView2};

use super::params::{ParamId, ParamStore};
use super::tape::{Gradients, Slot, Tape, Var};
use crate::error::{Error, Result};
use crate::noise::RngStream;
use crate::real::Real;

/// A dense stack: affine → SiLU for every hidden layer, affine readout.
///
/// `widths` lists every layer width including input and output, so
/// `[784, 512, 10]` has one hidden layer. Parameters live in a
/// [`ParamStore`] under `"{prefix}.{layer}.weight"` (`in × out`) and
/// `"{prefix}.{layer}.bias"` (`1 × out`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    prefix: String,
    widths: Vec<usize>,
}

/// Nodes recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Var,
    pub output: Var,
    pre_activations: Vec<Var>,
    weights: Vec<Var>,
}

impl Mlp {
    pub fn new(prefix: &str, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "an MLP needs at least two non-zero widths, got {widths:?}"
            )));
        }
        Ok(Self { prefix: prefix.to_owned(), widths: widths.to_vec() })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn weight_name(&self, l: usize) -> String {
        format!("{}.{l}.weight", self.prefix)
    }

    fn bias_name(&self, l: usize) -> String {
        format!("{}.{l}.bias", self.prefix)
    }

    /// He-normal weights, N(0, 2/fan_in); zero biases.
    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut RngStream) -> Result<()> {
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || T::cast(std * rng.next_gauss()));
            store.insert(&self.weight_name(l), w)?;
            store.insert(&self.bias_name(l), Array2::zeros((1, fan_out)))?;
        }
        Ok(())
    }

    /// Looks up `(weight, bias)` ids per layer, checking every shape.
    pub fn layer_ids<T: Real>(&self, store: &ParamStore<T>) -> Result<Vec<(ParamId, ParamId)>> {
        (0..self.n_layers())
            .map(|l| {
                let lookup = |name: String, dims: (usize, usize)| {
                    let id = store
                        .id(&name)
                        .ok_or_else(|| Error::ShapeMismatch(format!("missing parameter {name}")))?;
                    if store.get(id).dim() != dims {
                        return Err(Error::ShapeMismatch(format!(
                            "{name} has shape {:?}, expected {dims:?}",
                            store.get(id).dim()
                        )));
                    }
                    Ok(id)
                };
                Ok((
                    lookup(self.weight_name(l), (self.widths[l], self.widths[l + 1]))?,
                    lookup(self.bias_name(l), (1, self.widths[l + 1]))?,
                ))
            })
            .collect()
    }

    /// Records the forward pass on `tape` starting from node `input`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        slot: Slot,
        store: &ParamStore<T>,
        input: Var,
    ) -> Result<MlpTrace> {
        let width = tape.value(input).ncols();
        if width != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "{}: input width {width}, expected {}",
                self.prefix,
                self.input_width()
            )));
        }
        let ids = self.layer_ids(store)?;
        let mut h = input;
        let mut pre_activations = Vec::with_capacity(ids.len());
        let mut weights = Vec::with_capacity(ids.len());
        for (l, &(wid, bid)) in ids.iter().enumerate() {
            let w = tape.param(slot, store, wid);
            let b = tape.param(slot, store, bid);
            let xw = tape.matmul(h, w);
            let a = tape.add_row(xw, b);
            pre_activations.push(a);
            weights.push(w);
            h = if l + 1 < ids.len() { tape.silu(a) } else { a };
        }
        Ok(MlpTrace { input, output: h, pre_activations, weights })
    }

    /// Records the vector–Jacobian product `seedᵀ · ∂output/∂input` as
    /// differentiable ops, so the result can itself be differentiated with
    /// respect to the parameters.
    pub fn record_input_vjp<T: Real>(&self, tape: &mut Tape<T>, trace: &MlpTrace, seed: Var) -> Var {
        let n = trace.weights.len();
        let mut delta = seed;
        for l in (0..n).rev() {
            if l + 1 < n {
                let d = tape.silu_prime(trace.pre_activations[l]);
                delta = tape.mul(delta, d);
            }
            delta = tape.matmul_bt(delta, trace.weights[l]);
        }
        delta
    }
}

/// One recorded forward pass through an [`Mlp`], ready for backward.
#[derive(Debug)]
pub struct MlpPass<T> {
    pub tape: Tape<T>,
    pub slot: Slot,
    pub trace: MlpTrace,
}

impl<T: Real> MlpPass<T> {
    pub fn output(&self) -> &Array2<T> {
        self.tape.value(self.trace.output)
    }

    /// Parameter gradients and the input gradient for the given output
    /// cotangent. Fails with `TapeConsumed` on a second call.
    pub fn backward(
        &mut self,
        store: &ParamStore<T>,
        output_grad: ArrayView2<T>,
    ) -> Result<(ParamStore<T>, Array2<T>)> {
        let mut grads: Gradients<T> = self.tape.backward(self.trace.output, output_grad)?;
        let input_grad = grads
            .wrt(self.trace.input)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(self.tape.value(self.trace.input).raw_dim()));
        Ok((grads.take_store(self.slot, store), input_grad))
    }
}

/// Forward pass of the MLP described by `widths` (parameter prefix `"mlp"`).
pub fn mlp_forward<T: Real>(
    params: &ParamStore<T>,
    input: ArrayView2<T>,
    widths: &[usize],
) -> Result<MlpPass<T>> {
    let mlp = Mlp::new("mlp", widths)?;
    let mut tape = Tape::new();
    let slot = tape.bind();
    let x = tape.input(input.to_owned());
    let trace = mlp.forward(&mut tape, slot, params, x)?;
    Ok(MlpPass { tape, slot, trace })
}

/// Gradient with respect to the parameters of `⟨∇_y f(y), v⟩`, summed over
/// rows, for a scalar-output network `f`.
pub fn grad_of_input_grad<T: Real>(
    mlp: &Mlp,
    params: &ParamStore<T>,
    y: ArrayView2<T>,
    v: ArrayView2<T>,
) -> Result<ParamStore<T>> {
    if mlp.output_width() != 1 {
        return Err(Error::ShapeMismatch("grad_of_input_grad needs a scalar-output network".into()));
    }
    if y.dim() != v.dim() {
        return Err(Error::ShapeMismatch(format!("y {:?} vs v {:?}", y.dim(), v.dim())));
    }
    let mut tape = Tape::new();
    let slot = tape.bind();
    let yv = tape.constant(y.to_owned());
    let trace = mlp.forward(&mut tape, slot, params, yv)?;
    let ones = tape.constant(Array2::ones((y.nrows(), 1)));
    let grad_y = mlp.record_input_vjp(&mut tape, &trace, ones);
    let vv = tape.constant(v.to_owned());
    let prod = tape.mul(grad_y, vv);
    let total = tape.sum_all(prod);
    let mut grads = tape.backward(total, Array2::ones((1, 1)).view())?;
    Ok(grads.take_store(slot, params))
}
