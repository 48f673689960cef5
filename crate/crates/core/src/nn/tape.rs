//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in exact reverse recording order, so
//! gradient accumulation is deterministic. Derivative-of-derivative
//! computations are expressed by recording the first-order backward pass as
//! ordinary ops (see [`SiluPrime`](Tape::silu_prime) and
//! [`Tape::matmul_bt`]); a single reverse sweep then yields second-order
//! quantities.

use std::collections::HashMap;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use super::activation::{sigmoid, silu, silu_prime, silu_second, softplus};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::real::Real;

/// Handle to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a parameter store bound to a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    Square(Var),
    Abs(Var),
    Exp(Var),
    Sigmoid(Var),
    Softplus(Var),
    Silu(Var),
    SiluPrime(Var),
    SliceCols(Var, usize, usize),
    SumRows(Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    slots: Vec<HashMap<ParamId, Var>>,
    consumed: bool,
}

/// Result of a backward sweep: one optional gradient per node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
    params: Vec<HashMap<ParamId, Var>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to a node, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Array2<T>> {
        self.grads[v.0].as_ref()
    }

    /// Moves out the gradients for every entry of `store` (zeros where
    /// unused), laid out like `store`.
    pub fn take_store(&mut self, slot: Slot, store: &ParamStore<T>) -> ParamStore<T> {
        let mut out = ParamStore::new();
        let bound = &self.params[slot.0];
        for (id, (name, value)) in store.ids().zip(store.iter()) {
            let g = bound.get(&id).and_then(|v| self.grads[v.0].take());
            let g = g.unwrap_or_else(|| Array2::zeros(value.raw_dim()));
            out.insert(name, g).expect("names in a store are unique");
        }
        out
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), slots: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input (its gradient is reported by backward).
    pub fn input(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant: no gradient flows into it.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a parameter store; parameters are then read with [`Tape::param`].
    pub fn bind(&mut self) -> Slot {
        self.slots.push(HashMap::new());
        Slot(self.slots.len() - 1)
    }

    /// Reads a parameter; repeated reads of the same entry share one node.
    pub fn param(&mut self, slot: Slot, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.slots[slot.0].get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, true);
        self.slots[slot.0].insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMulBT(a, b), ng)
    }

    /// Adds a `1 × m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a 1×m row");
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: operand shapes differ"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let value = self.value(a).mapv(|x| scale * x + shift);
        let ng = self.ng(a);
        self.push(value, Op::Affine(a, scale), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).mapv(f);
        let ng = self.ng(a);
        self.push(value, op, ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, silu, Op::Silu(a))
    }

    /// Elementwise SiLU derivative, itself differentiable.
    pub fn silu_prime(&mut self, a: Var) -> Var {
        self.unary(a, silu_prime, Op::SiluPrime(a))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceCols(a, start, end), ng)
    }

    /// Per-row sums as an `n × 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(value, Op::SumRows(a), ng)
    }

    /// Sum of all entries as a `1 × 1` matrix.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    /// Reverse sweep from `output`, seeded with `seed` (same shape as the
    /// output). A tape supports exactly one backward pass.
    pub fn backward(&mut self, output: Var, seed: ArrayView2<T>) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if seed.dim() != self.value(output).dim() {
            return Err(Error::ShapeMismatch(format!(
                "seed {:?} vs output {:?}",
                seed.dim(),
                self.value(output).dim()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Array2<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.to_owned());

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, params: self.slots.clone() })
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Array2<T>,
        g: &Array2<T>,
        grads: &mut [Option<Array2<T>>],
    ) {
        let mut acc = |v: Var, delta: Array2<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        let elementwise = |a: Var, d: fn(T, T, T) -> T| {
            let mut out_g = Array2::zeros(g.raw_dim());
            Zip::from(&mut out_g)
                .and(g)
                .and(val(a))
                .and(out)
                .for_each(|o, &gi, &x, &y| *o = d(gi, x, y));
            out_g
        };
        match *op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                if ng(a) {
                    acc(a, g.dot(&val(b).t()));
                }
                if ng(b) {
                    acc(b, val(a).t().dot(g));
                }
            }
            Op::MatMulBT(a, b) => {
                if ng(a) {
                    acc(a, g.dot(val(b)));
                }
                if ng(b) {
                    acc(b, g.t().dot(val(a)));
                }
            }
            Op::AddRow(a, row) => {
                if ng(row) {
                    acc(row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                acc(a, g.clone());
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                if ng(b) {
                    acc(b, g.mapv(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if ng(a) {
                    acc(a, g * val(b));
                }
                if ng(b) {
                    acc(b, g * val(a));
                }
            }
            Op::Affine(a, scale) => acc(a, g.mapv(|x| x * scale)),
            Op::Square(a) => acc(a, elementwise(a, |gi, x, _| gi * (x + x))),
            Op::Abs(a) => acc(
                a,
                elementwise(a, |gi, x, _| {
                    if x > T::zero() {
                        gi
                    } else if x < T::zero() {
                        -gi
                    } else {
                        T::zero()
                    }
                }),
            ),
            Op::Exp(a) => acc(a, elementwise(a, |gi, _, y| gi * y)),
            Op::Sigmoid(a) => acc(a, elementwise(a, |gi, _, y| gi * y * (T::one() - y))),
            Op::Softplus(a) => acc(a, elementwise(a, |gi, x, _| gi * sigmoid(x))),
            Op::Silu(a) => acc(a, elementwise(a, |gi, x, _| gi * silu_prime(x))),
            Op::SiluPrime(a) => acc(a, elementwise(a, |gi, x, _| gi * silu_second(x))),
            Op::SliceCols(a, start, end) => {
                let mut full = Array2::zeros(val(a).raw_dim());
                full.slice_mut(s![.., start..end]).assign(g);
                acc(a, full);
            }
            Op::SumRows(a) => {
                let mut full = Array2::zeros(val(a).raw_dim());
                full += g;
                acc(a, full);
            }
            Op::SumAll(a) => acc(a, Array2::from_elem(val(a).raw_dim(), g[[0, 0]])),
        }
    }
}
