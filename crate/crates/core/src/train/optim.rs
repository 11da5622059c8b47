//! AdamW with per-parameter weight decay.

use serde::{Deserialize, Serialize};

use crate::model::{Gradients, Matrix, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `weight_decay` unless `name` contains one of `exempt`, then exactly 0.
pub fn decay_for(name: &str, weight_decay: f64, exempt: &[String]) -> f64 {
    if exempt.iter().any(|e| name.contains(e.as_str())) {
        0.0
    } else {
        weight_decay
    }
}

#[derive(Clone, Debug)]
struct Slot<T> {
    m: Matrix<T>,
    v: Matrix<T>,
    weight_decay: f64,
    trainable: bool,
}

#[derive(Clone, Debug)]
pub struct AdamW<T> {
    config: AdamWConfig,
    step: u64,
    slots: Vec<Slot<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// One slot per parameter. Frozen parameters keep their values.
    pub fn new(
        params: &ParamStore<T>,
        config: AdamWConfig,
        weight_decay: f64,
        exempt: &[String],
        trainable: impl Fn(ParamId) -> bool,
    ) -> Self {
        let slots = params
            .iter()
            .map(|(id, p)| Slot {
                m: Matrix::zeros(p.value.rows(), p.value.cols()),
                v: Matrix::zeros(p.value.rows(), p.value.cols()),
                weight_decay: decay_for(&p.name, weight_decay, exempt),
                trainable: trainable(id),
            })
            .collect();
        Self { config, step: 0, slots }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Decay coefficient applied to `id`.
    pub fn weight_decay(&self, id: ParamId) -> f64 {
        self.slots[id.index()].weight_decay
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.slots[id.index()].trainable
    }

    /// Decoupled decay `p -= lr * wd * p`, then the bias-corrected Adam
    /// update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.eps);
        for (i, slot) in self.slots.iter_mut().enumerate() {
            if !slot.trainable {
                continue;
            }
            let id = ParamId(i);
            let Some(g) = grads.get(id) else { continue };
            let decay = T::one() - lr * T::of(slot.weight_decay);
            let p = params.value_mut(id);
            let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
            for (k, (w, &g)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = b1 * m[k] + one_b1 * g;
                v[k] = b2 * v[k] + one_b2 * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w = *w * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exempt() -> Vec<String> {
        ["bias", "ln_1", "ln_2"].map(String::from).to_vec()
    }

    #[test]
    fn exemption_by_substring() {
        assert_eq!(decay_for("encoder.h.0.attn.c_attn.bias", 0.1, &exempt()), 0.0);
        assert_eq!(decay_for("encoder.h.3.ln_2.weight", 0.1, &exempt()), 0.0);
        assert_eq!(decay_for("encoder.h.3.mlp.c_fc.weight", 0.1, &exempt()), 0.1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::<f64>::new();
        let w = store.insert("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]));
        let b = store.insert("b.bias", Matrix::from_vec(1, 1, vec![1.0]));
        let mut opt = AdamW::new(&store, AdamWConfig::default(), 0.1, &exempt(), |_| true);
        let mut grads = Gradients::empty(store.len());
        grads.accumulate_into(w, Matrix::from_vec(1, 2, vec![0.5, -2.0]));
        grads.accumulate_into(b, Matrix::from_vec(1, 1, vec![3.0]));
        opt.step(&mut store, &grads);
        let lr = 1e-4;
        // with bias correction the first Adam step is lr * sign(g)
        let expect_w0 = 1.0 * (1.0 - lr * 0.1) - lr * 0.5 / (0.5 + 1e-8);
        assert!((store.value(w).data()[0] - expect_w0).abs() < 1e-12);
        assert!((store.value(b).data()[0] - (1.0 - lr * 3.0 / (3.0 + 1e-8))).abs() < 1e-12);
        assert_eq!(opt.weight_decay(b), 0.0);
        assert_eq!(opt.weight_decay(w), 0.1);
    }

    #[test]
    fn missing_gradient_and_frozen_params_are_untouched() {
        let mut store = ParamStore::<f32>::new();
        let a = store.insert("a", Matrix::filled(2, 2, 1.0));
        let f = store.insert("f", Matrix::filled(1, 1, 1.0));
        let mut opt = AdamW::new(&store, AdamWConfig::default(), 0.1, &[], |id| id != f);
        let mut grads = Gradients::empty(store.len());
        grads.accumulate_into(f, Matrix::filled(1, 1, 1.0));
        opt.step(&mut store, &grads);
        assert_eq!(store.value(a), &Matrix::filled(2, 2, 1.0));
        assert_eq!(store.value(f), &Matrix::filled(1, 1, 1.0));
    }
}
