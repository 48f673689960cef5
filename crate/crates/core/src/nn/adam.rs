use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::real::Real;

/// Adam with bias correction; defaults β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One in-place update of `params` against `grads` (descent direction).
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.m) {
            return Err(Error::ShapeMismatch("adam: parameter/gradient layouts differ".into()));
        }
        self.t += 1;
        let t = self.t as i32;
        let b1 = T::cast(self.beta1);
        let b2 = T::cast(self.beta2);
        let one = T::one();
        let c1 = T::cast(1.0 - self.beta1.powi(t));
        let c2 = T::cast(1.0 - self.beta2.powi(t));
        let lr = T::cast(self.lr);
        let eps = T::cast(self.eps);
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id);
            let m = self.m.get_mut(id);
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (one - b1) * g);
            let v = self.v.get_mut(id);
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (one - b2) * g * g);
            let (m, v) = (self.m.get(id), self.v.get(id));
            ndarray::Zip::from(params.get_mut(id))
                .and(m)
                .and(v)
                .for_each(|p, &m, &v| *p -= lr * (m / c1) / ((v / c2).sqrt() + eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", array![[v]]).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(1.25);
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p, &scalar(0.0)).unwrap();
        assert_eq!(p.flatten(), vec![1.25]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        for g in [3.0, -0.02, 1e4] {
            let mut p = scalar(0.0);
            let mut adam = AdamState::new(&p, 1e-3);
            adam.step(&mut p, &scalar(g)).unwrap();
            let want = -1e-3 * g / (g.abs() + 1e-8);
            assert!((p.flatten()[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn minimizes_quadratic() {
        // Oracle: the scalar recursion written out directly.
        let (mut w, mut m, mut v) = (1.0f64, 0.0, 0.0);
        for t in 1..=200 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p, 0.1);
        for _ in 0..200 {
            let g = scalar(2.0 * p.flatten()[0]);
            adam.step(&mut p, &g).unwrap();
        }
        let got = p.flatten()[0];
        assert!((got - w).abs() < 1e-12);
        assert!(got.abs() < 1e-3, "w = {got}");
    }

    #[test]
    fn layout_mismatch() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p, 0.1);
        let mut g = ParamStore::new();
        g.insert("w", array![[1.0, 2.0]]).unwrap();
        assert!(matches!(adam.step(&mut p, &g), Err(Error::ShapeMismatch(_))));
    }
}
