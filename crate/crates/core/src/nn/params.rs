use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tape::{Gradients, Tape, Var};
use super::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    /// Id of the `index`-th entry in store order.
    pub fn from_index(index: usize) -> Self {
        Self(index)
    }
}

#[derive(Clone, Debug)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    trainable: bool,
}

/// Named weights plus non-trainable buffers (batch-norm running statistics).
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal { std: f64 },
    Uniform { bound: f64 },
    /// He initialization, `std = sqrt(2 / fan)`.
    Kaiming { fan: usize },
}

impl Init {
    fn sample<T: Scalar>(self, shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match self {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal { std } => {
                let d = Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::Kaiming { fan } => {
                let d = Normal::new(0.0, (2.0 / fan as f64).sqrt()).expect("valid std");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Init::Uniform { bound } => {
                let d = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        Tensor::from_f64(shape.to_vec(), &values)
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    fn insert(&mut self, name: String, value: Tensor<T>, trainable: bool) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn add_param(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        let value = init.sample(shape, rng);
        self.insert(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.insert(name.into(), value, false)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.entries[index].trainable
    }

    /// Number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, bool)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value, e.trainable))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|e| &mut e.value)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    /// Places every entry on the tape. Trainable entries require gradients
    /// when `trainable` is set; buffers never do.
    pub fn bind<'s>(&'s self, tape: &mut Tape<T>, trainable: bool) -> Bound<'s, T> {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.value.clone(), trainable && e.trainable))
            .collect();
        Bound { store: self, vars }
    }

    /// Copies values from `other` for every name present in both stores.
    /// Shapes must agree. Returns the names that were not found in `other`.
    pub fn load_matching(&mut self, other: &ParamStore<T>) -> Result<Vec<String>, String> {
        let mut missing = Vec::new();
        for e in &mut self.entries {
            match other.entries.iter().find(|o| o.name == e.name) {
                Some(o) if o.value.shape() == e.value.shape() => e.value = o.value.clone(),
                Some(o) => {
                    return Err(format!(
                        "shape mismatch for {}: {:?} vs {:?}",
                        e.name,
                        e.value.shape(),
                        o.value.shape()
                    ))
                }
                None => missing.push(e.name.clone()),
            }
        }
        Ok(missing)
    }

    pub(crate) fn from_named(named: Vec<(String, Tensor<T>, bool)>) -> Self {
        Self {
            entries: named
                .into_iter()
                .map(|(name, value, trainable)| Entry {
                    name,
                    value,
                    trainable,
                })
                .collect(),
        }
    }
}

/// A store's entries placed on a tape.
pub struct Bound<'s, T> {
    store: &'s ParamStore<T>,
    vars: Vec<Var>,
}

impl<T: Scalar> Bound<'_, T> {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        self.store.get(id)
    }

    /// Gradients aligned with store entries; `None` for buffers and for
    /// parameters the loss does not depend on.
    pub fn grads(&self, g: &Gradients<T>) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|&v| g.get(v).cloned()).collect()
    }
}
