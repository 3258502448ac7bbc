//! Adam.
//!
//! Moments live in the [`ParamStore`] next to each trainable entry so that a
//! checkpoint captures the optimizer completely; [`AdamState`] only holds the
//! hyperparameters and the shared step counter.

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }
}

impl AdamState {
    pub fn with_lr(lr: f64) -> Self {
        AdamState {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::config(format!(
                "invalid Adam hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// One update of every trainable entry, then zeroes the gradients.
///
/// Fails without touching anything if the store has no trainable entries or
/// any gradient is non-finite.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, state: &mut AdamState) -> Result<()> {
    state.validate()?;
    let ids: Vec<_> = store.trainable_ids().collect();
    if ids.is_empty() {
        return Err(Error::contract(
            "adam_step: store has no trainable parameters",
        ));
    }
    for &id in &ids {
        if let Some(k) = store.grad(id).iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} is non-finite at index {k}",
                store.name(id)
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (tb1, tb2, lr, eps) = (T::lit(b1), T::lit(b2), state.lr, state.eps);
    for id in ids {
        let (theta, grad, m, v) = store.adam_view(id);
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = tb1 * m[i] + (T::one() - tb1) * g;
            v[i] = tb2 * v[i] + (T::one() - tb2) * g * g;
            let m_hat = m[i].as_f64() / c1;
            let v_hat = v[i].as_f64() / c2;
            theta[i] = theta[i] - T::lit(lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
    store.zero_grads();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamKind;

    fn store(values: Vec<f64>) -> (ParamStore<f64>, crate::model::ParamId) {
        let mut s = ParamStore::new();
        let n = values.len();
        let id = s.insert("w", &[n], values, ParamKind::Trainable).unwrap();
        s.insert("running", &[1], vec![3.0], ParamKind::Buffer)
            .unwrap();
        (s, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = store(vec![0.0, 0.0]);
        s.grad_mut(id).copy_from_slice(&[2.5, -0.1]);
        let mut st = AdamState::default();
        adam_step(&mut s, &mut st).unwrap();
        let v = s.value(id);
        assert!((v[0] + 1e-3 * 2.5 / (2.5 + 1e-8)).abs() < 1e-15);
        assert!((v[1] - 1e-3 * 0.1 / (0.1 + 1e-8)).abs() < 1e-15);
        assert!(s.grad(id).iter().all(|&g| g == 0.0));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut s, id) = store(vec![0.3, -7.0]);
        let mut st = AdamState::default();
        for _ in 0..5 {
            adam_step(&mut s, &mut st).unwrap();
        }
        assert_eq!(s.value(id), &[0.3, -7.0]);
    }

    #[test]
    fn buffers_are_untouched() {
        let (mut s, _) = store(vec![1.0]);
        let b = s.id("running").unwrap();
        adam_step(&mut s, &mut AdamState::default()).unwrap();
        assert_eq!(s.value(b), &[3.0]);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut s, id) = store(vec![1.0]);
        s.grad_mut(id)[0] = f64::NAN;
        let mut st = AdamState::default();
        assert!(matches!(
            adam_step(&mut s, &mut st),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(st.t, 0);
        let mut empty = ParamStore::<f64>::new();
        assert!(matches!(
            adam_step(&mut empty, &mut st),
            Err(Error::Contract(_))
        ));
    }
}
