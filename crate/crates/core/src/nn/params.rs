use ndarray::Array2;

use crate::error::{Error, Result};
use crate::real::Real;

/// Index of an entry in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named 2-D parameter arrays, in insertion order.
///
/// Biases are stored as `1 × n` rows. The same type doubles as a gradient
/// buffer (see [`ParamStore::zeros_like`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Array2<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }

    pub fn insert(&mut self, name: &str, value: Array2<T>) -> Result<ParamId> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::InvalidParameter(format!("duplicate parameter name {name}")));
        }
        self.names.push(name.to_owned());
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Array2<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Array2<T>> {
        self.values.iter_mut()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
        }
    }

    pub fn same_layout<U: Real>(&self, other: &ParamStore<U>) -> bool {
        self.names == other.names
            && self.values.iter().zip(&other.values).all(|(a, b)| a.dim() == b.dim())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| v.mapv(|x| U::cast(x.as_f64()))).collect(),
        }
    }

    /// Appends every entry of `other`.
    pub fn extend(&mut self, other: &ParamStore<T>) -> Result<()> {
        for (name, v) in other.iter() {
            self.insert(name, v.clone())?;
        }
        Ok(())
    }

    /// The entries whose names start with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> Self {
        let mut out = Self::new();
        for (name, v) in self.iter().filter(|(n, _)| n.starts_with(prefix)) {
            out.names.push(name.to_owned());
            out.values.push(v.clone());
        }
        out
    }

    /// All values flattened in storage order.
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: T, other: &Self) {
        assert!(self.same_layout(other), "axpy on mismatched stores");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.scaled_add(scale, b);
        }
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
