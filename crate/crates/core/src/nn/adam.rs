use super::{NnError, ParamStore, Scalar};

/// Adam with bias correction. Moments are kept per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr: T::of_f64(lr),
            beta1: T::of_f64(0.9),
            beta2: T::of_f64(0.999),
            eps: T::of_f64(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: usize) -> Option<(&[T], &[T])> {
        Some((self.m.get(id)?, self.v.get(id)?))
    }

    /// Applies one update from the gradients stored on each parameter.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<(), NnError> {
        if self.m.is_empty() {
            for (_, t) in params.iter() {
                self.m.push(vec![T::zero(); t.len()]);
                self.v.push(vec![T::zero(); t.len()]);
            }
        }
        if self.m.len() != params.len() {
            return Err(NnError::ShapeMismatch(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for (id, p) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            if m.len() != p.len() {
                return Err(NnError::ShapeMismatch(format!("moment size for tensor {id}")));
            }
            let Some(g) = p.grad.take() else { continue };
            if g.len() != p.len() {
                return Err(NnError::ShapeMismatch(format!("gradient size for tensor {id}")));
            }
            let data = p.data_mut();
            for k in 0..data.len() {
                m[k] = self.beta1 * m[k] + (T::one() - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (T::one() - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_leaves_params_and_moments() {
        let mut s = scalar_store(1.5);
        let mut opt = Adam::new(0.1);
        s.get_mut(0).grad = Some(vec![0.0]);
        opt.step(&mut s).unwrap();
        assert_eq!(s.get(0).item(), 1.5);
        assert_eq!(opt.moments(0).unwrap(), (&[0.0][..], &[0.0][..]));
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // m̂ = g, v̂ = g², update = lr * g / (|g| + eps)
        for g in [3.0, -0.25] {
            let mut s = scalar_store(0.0);
            let mut opt = Adam::new(0.01);
            s.get_mut(0).grad = Some(vec![g]);
            opt.step(&mut s).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((s.get(0).item() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = scalar_store(1.0);
        let mut opt = Adam::new(0.05);
        for _ in 0..500 {
            let x = s.get(0).item();
            s.get_mut(0).grad = Some(vec![2.0 * x]);
            opt.step(&mut s).unwrap();
        }
        assert!(s.get(0).item().abs() < 1e-2, "x = {}", s.get(0).item());
    }
}
