use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{bail, Result};

static NEXT_SET_ID: AtomicU64 = AtomicU64::new(1);

/// Named collection of trainable tensors.
///
/// Insertion order is preserved; it fixes the layout of checkpoints and of
/// optimizer state. Each set carries a process-unique id that ties tape
/// bindings back to it; clones get a fresh id.
#[derive(Debug)]
pub struct ParamSet {
    id: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
            names: self.names.clone(),
            tensors: self.tensors.clone(),
            index: self.index.clone(),
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape() && a.data() == b.data())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            bail!(Usage, "duplicate parameter `{name}`");
        }
        if !tensor.is_finite() {
            bail!(Numeric, "parameter `{name}` has non-finite entries");
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|s| &self.tensors[s])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slot(name).map(|s| &mut self.tensors[s])
    }

    /// Tensor by name; a missing name is a programming error in the model
    /// code that owns the set.
    pub fn expect(&self, name: &str) -> &Tensor {
        self.get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing"))
    }

    pub(crate) fn tensor_at(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub(crate) fn tensor_at_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn has_grads(&self) -> bool {
        !self.tensors.is_empty() && self.tensors.iter().all(|t| t.grad().is_some())
    }

    pub(crate) fn ensure_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad_mut();
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.set_grad(None);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Flattened copy of all values, in insertion order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Flattened copy of all gradients; missing gradients read as zero.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| match t.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; t.len()],
            })
            .collect()
    }

    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            t.quantize_f32();
        }
    }

    /// Replaces the value of an existing tensor, keeping its shape.
    pub fn assign(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let Some(t) = self.get_mut(name) else {
            bail!(Usage, "parameter `{name}` not in set");
        };
        if t.len() != data.len() {
            bail!(
                Config,
                "parameter `{name}` has {} values, got {}",
                t.len(),
                data.len()
            );
        }
        t.data_mut().copy_from_slice(data);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascend,
    Descend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        }
    }
}

/// Plain gradient step `p <- p +/- rate * grad(p)`, then zeroes the grads.
pub fn grad_step(params: &mut ParamSet, rate: f64, direction: Direction) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        bail!(Argument, "learning rate must be finite and >= 0, got {rate}");
    }
    if !params.has_grads() {
        bail!(Usage, "grad_step called before gradients were populated");
    }
    let s = direction.sign() * rate;
    for (name, t) in params.iter_mut() {
        let g = t.take_grad().expect("checked above");
        for (v, gi) in t.data_mut().iter_mut().zip(&g) {
            *v += s * gi;
        }
        if !t.is_finite() {
            bail!(Numeric, "parameter `{name}` became non-finite");
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(crate::Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Gradient-step optimizer over one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub rate: f64,
    step: u64,
    // Adam moments, one buffer per parameter tensor.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, rate: f64) -> Self {
        Self {
            kind,
            rate,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn sgd(rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, rate)
    }

    pub fn adam(rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, rate)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one step using the populated grads, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet, direction: Direction) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => {
                grad_step(params, self.rate, direction)?;
                self.step += 1;
                Ok(())
            }
            OptimizerKind::Adam => self.adam_step(params, direction),
        }
    }

    fn adam_step(&mut self, params: &mut ParamSet, direction: Direction) -> Result<()> {
        if !params.has_grads() {
            bail!(Usage, "optimizer step called before gradients were populated");
        }
        if self.m.is_empty() {
            self.m = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            bail!(Usage, "optimizer state does not match parameter set");
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - BETA1.powf(t);
        let c2 = 1.0 - BETA2.powf(t);
        let s = direction.sign() * self.rate;
        for (i, (name, p)) in params.iter_mut().enumerate() {
            let g = p.take_grad().expect("checked above");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w += s * mh / (vh.sqrt() + ADAM_EPS);
            }
            if !p.is_finite() {
                bail!(Numeric, "parameter `{name}` became non-finite");
            }
        }
        Ok(())
    }

    /// Moment buffers for checkpointing: `(step, first moments, second moments)`.
    pub fn state(&self) -> (u64, &[Vec<f64>], &[Vec<f64>]) {
        (self.step, &self.m, &self.v)
    }

    pub fn restore(&mut self, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) {
        self.step = step;
        self.m = m;
        self.v = v;
    }

    pub fn quantize_f32(&mut self) {
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            for x in buf.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(value: f64, grad: Option<f64>) -> ParamSet {
        let mut set = ParamSet::new();
        let mut t = Tensor::scalar(value);
        t.set_grad(grad.map(|g| vec![g]));
        set.insert("p", t).unwrap();
        set
    }

    #[test]
    fn descend_step() {
        let mut set = one(1.0, Some(2.0));
        grad_step(&mut set, 0.5, Direction::Descend).unwrap();
        assert_eq!(set.expect("p").data(), &[0.0]);
        assert!(set.expect("p").grad().is_none());
    }

    #[test]
    fn zero_rate_leaves_params_unchanged() {
        let mut set = one(1.25, Some(-7.0));
        grad_step(&mut set, 0.0, Direction::Ascend).unwrap();
        assert_eq!(set.expect("p").data(), &[1.25]);
    }

    #[test]
    fn missing_grads_is_usage_error() {
        let mut set = one(1.0, None);
        assert!(matches!(
            grad_step(&mut set, 0.1, Direction::Descend),
            Err(crate::Error::Usage(_))
        ));
        let mut opt = Optimizer::adam(0.1);
        assert!(opt.step(&mut set, Direction::Descend).is_err());
    }

    #[test]
    fn adam_moves_against_gradient_when_descending() {
        let mut set = one(1.0, Some(3.0));
        let mut opt = Optimizer::adam(0.01);
        opt.step(&mut set, Direction::Descend).unwrap();
        // The first Adam step has magnitude ~rate regardless of scale.
        let p = set.expect("p").data()[0];
        assert!((p - 0.99).abs() < 1e-6);
    }

    #[test]
    fn clones_get_fresh_ids() {
        let a = one(1.0, None);
        let b = a.clone();
        assert_ne!(a.id(), b.id());
        assert_eq!(a, b);
    }
}
