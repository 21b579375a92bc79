use super::{Gradients, Result, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Projection applied to a parameter after every optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Clamp { min: f64, max: f64 },
}

impl Constraint {
    pub fn apply(&self, t: &mut Tensor) {
        match *self {
            Constraint::Clamp { min, max } => {
                t.data_mut().iter_mut().for_each(|x| *x = x.clamp(min, max))
            }
        }
    }
}

/// A named learnable tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Option<Tensor>,
    pub requires_grad: bool,
    pub constraint: Option<Constraint>,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        Self {
            value,
            grad: None,
            requires_grad: true,
            constraint: None,
        }
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        c.apply(&mut self.value);
        self.constraint = Some(c);
        self
    }
}

/// Parameters keyed by canonical dotted name (e.g. `block0.sgc.theta`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Parameter) {
        self.params.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`. Parameters with
    /// `requires_grad == false`, or all of them when `track` is false, enter
    /// as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, track: bool) -> BoundParams<'t> {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| (name.clone(), tape.leaf(p.value.clone(), track && p.requires_grad)))
            .collect();
        BoundParams { vars }
    }

    /// Copies gradients from a backward pass into each parameter's `grad`.
    pub fn load_grads(&mut self, bound: &BoundParams<'_>, grads: &Gradients) {
        for (name, p) in self.params.iter_mut() {
            p.grad = match bound.vars.get(name) {
                Some(&v) if p.requires_grad => Some(grads.get(v)),
                _ => None,
            };
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(|p| p.grad = None);
    }

    pub fn apply_constraints(&mut self) {
        for p in self.params.values_mut() {
            if let Some(c) = p.constraint {
                c.apply(&mut p.value);
            }
        }
    }

    /// Copies values (not gradients) from `other` for every shared name.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (name, p) in self.params.iter_mut() {
            if let Some(src) = other.params.get(name) {
                p.value = src.value.clone();
            }
        }
    }
}

/// Tape leaves for one forward pass, looked up by parameter name.
#[derive(Debug)]
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t>)> {
        self.vars.iter()
    }
}
