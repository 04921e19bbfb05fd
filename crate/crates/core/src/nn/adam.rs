use super::tensor::Real;

/// Moment estimates for bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments for parameters of the given lengths.
    pub fn new(param_lens: &[usize]) -> Self {
        Self {
            m: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn cast<U: Real>(&self) -> AdamState<U> {
        use super::tensor::cast_slice;
        AdamState {
            m: self.m.iter().map(|x| cast_slice(x)).collect(),
            v: self.v.iter().map(|x| cast_slice(x)).collect(),
            t: self.t,
            beta1: U::from_f64(self.beta1.to_f64().unwrap()).unwrap(),
            beta2: U::from_f64(self.beta2.to_f64().unwrap()).unwrap(),
            eps: U::from_f64(self.eps.to_f64().unwrap()).unwrap(),
        }
    }
}

/// One Adam update over every parameter group; `t` advances once per call.
pub fn adam_step<T: Real>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>, lr: T) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter group");
    assert_eq!(params.len(), state.m.len(), "optimizer state built for a different model");
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        assert_eq!(p.len(), g.len(), "gradient length");
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}
