use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParamSet};
use super::{AdError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed, named parameter group.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    /// Creates zeroed moments for each named parameter.
    pub fn new<'a>(config: AdamConfig, params: &ParamSet, names: impl IntoIterator<Item = &'a String>) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for name in names {
            if let Some(p) = params.get(name) {
                m.insert(name.clone(), Tensor::zeros(p.shape()));
                v.insert(name.clone(), Tensor::zeros(p.shape()));
            }
        }
        Self { step: 0, lr: config.lr, beta1: config.beta1, beta2: config.beta2, eps: config.eps, m, v }
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.m.keys()
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.v.get(name)
    }

    /// Updates every parameter of the group in place. Fails before touching
    /// anything when a gradient is missing; consumes the gradients.
    pub fn apply(&mut self, params: &mut ParamSet, mut grads: ParamGrads) -> Result<(), AdError> {
        for name in self.m.keys() {
            let p = params.get(name).ok_or_else(|| AdError::Contract(format!("unknown parameter `{name}`")))?;
            let g = grads.get(name).ok_or_else(|| AdError::MissingGrad(name.clone()))?;
            if g.shape() != p.shape() {
                return Err(AdError::Shape {
                    op: "adam",
                    detail: format!("`{name}` grad {:?} vs param {:?}", g.shape(), p.shape()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, m) in self.m.iter_mut() {
            let g = grads.remove(name).expect("checked above");
            let v = self.v.get_mut(name).expect("moments share keys");
            let p = params.get_mut(name).expect("checked above");
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, gi) in g.data().iter().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.insert(name, Tensor::scalar(value));
        ps
    }

    fn grad(name: &str, g: f64) -> ParamGrads {
        let mut gs = ParamGrads::default();
        gs.insert(name.to_string(), Tensor::scalar(g));
        gs
    }

    #[test]
    fn first_step_is_lr_over_one_plus_eps() {
        let mut ps = single("w", 0.0);
        let names: Vec<String> = ps.names().cloned().collect();
        let mut adam = AdamState::new(AdamConfig::default(), &ps, &names);
        adam.apply(&mut ps, grad("w", 1.0)).unwrap();
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((ps.get("w").unwrap().data()[0] - expected).abs() < 1e-18);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single("w", 1.25);
        let names: Vec<String> = ps.names().cloned().collect();
        let mut adam = AdamState::new(AdamConfig::default(), &ps, &names);
        for _ in 0..3 {
            adam.apply(&mut ps, grad("w", 0.0)).unwrap();
        }
        assert_eq!(ps.get("w").unwrap().data()[0], 1.25);
        assert_eq!(adam.step, 3);
    }

    #[test]
    fn equal_grads_equal_updates() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::vector(vec![0.5, -1.0]));
        ps.insert("b", Tensor::vector(vec![0.5, -1.0]));
        let names: Vec<String> = ps.names().cloned().collect();
        let mut adam = AdamState::new(AdamConfig::default(), &ps, &names);
        let mut gs = ParamGrads::default();
        gs.insert("a".into(), Tensor::vector(vec![0.3, -7.0]));
        gs.insert("b".into(), Tensor::vector(vec![0.3, -7.0]));
        adam.apply(&mut ps, gs).unwrap();
        assert_eq!(ps.get("a"), ps.get("b"));
    }

    #[test]
    fn missing_grad_is_an_error_and_changes_nothing() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::scalar(1.0));
        ps.insert("b", Tensor::scalar(2.0));
        let names: Vec<String> = ps.names().cloned().collect();
        let mut adam = AdamState::new(AdamConfig::default(), &ps, &names);
        let before = ps.clone();
        let err = adam.apply(&mut ps, grad("a", 1.0)).unwrap_err();
        assert!(matches!(err, AdError::MissingGrad(n) if n == "b"));
        assert_eq!(ps, before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn params_outside_the_group_are_untouched() {
        let mut ps = ParamSet::new();
        ps.insert("gen/w", Tensor::scalar(1.0));
        ps.insert("dis/w", Tensor::scalar(1.0));
        let names: Vec<String> = ps.names_with_prefix("gen/").cloned().collect();
        let mut adam = AdamState::new(AdamConfig::default(), &ps, &names);
        adam.apply(&mut ps, grad("gen/w", 1.0)).unwrap();
        assert_eq!(ps.get("dis/w").unwrap().data()[0], 1.0);
        assert!(ps.get("gen/w").unwrap().data()[0] < 1.0);
    }
}
