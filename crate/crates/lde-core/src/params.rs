//! Named parameter store shared by all model modules.
//!
//! Parameters live outside any tape; each training step binds them as the
//! first leaves of a fresh tape (`load_into`), so a [`ParamId`] doubles as
//! the leaf's node index. Freezing flips the `trainable` flag, which both
//! stops the optimizer from touching the tensor and prunes the backward
//! sweep through it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param<E> {
    pub name: String,
    pub value: Tensor<E>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<E> {
    params: Vec<Param<E>>,
}

impl<E: Real> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<E>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// He-uniform initialized weight: bound = sqrt(6 / fan_in).
    pub fn add_he_uniform(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Vec<usize>>,
        fan_in: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let bound = libm::sqrt(6.0 / fan_in as f64);
        self.add(name, Tensor::uniform(shape, -bound, bound, rng))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: impl Into<Vec<usize>>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_filled(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Vec<usize>>,
        v: E,
    ) -> ParamId {
        self.add(name, Tensor::filled(shape, v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<E> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<E> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<E>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<E>)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total scalar count, optionally restricted to a name prefix.
    pub fn count_scalars(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    /// Set the trainable flag for every parameter whose name starts with
    /// `prefix`; returns how many were touched.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in self.params.iter_mut() {
            if p.name.starts_with(prefix) {
                p.trainable = trainable;
                n += 1;
            }
        }
        n
    }

    /// Bind every parameter as a leaf of a fresh tape, in id order. The tape
    /// must be empty so that `Var` indices coincide with [`ParamId`]s.
    pub fn load_into(&self, tape: &mut Tape<E>) -> Result<()> {
        if !tape.is_empty() {
            return Err(Error::invalid("load_into", "tape must be empty"));
        }
        for p in &self.params {
            tape.leaf(p.value.clone().requires_grad(p.trainable));
        }
        Ok(())
    }

    /// Tape variable for a parameter previously bound by `load_into`.
    pub fn var(&self, id: ParamId) -> Var {
        Var(id.0)
    }

    pub fn to_f64(&self) -> ParamStore<f64> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.to_f64(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ids_match_tape_vars() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("a", Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
        let b = store.add("b", Tensor::from_vec(vec![1], vec![3.0]).unwrap());
        let mut tape = Tape::new();
        store.load_into(&mut tape).unwrap();
        assert_eq!(tape.value(store.var(a)).data, vec![1.0, 2.0]);
        assert_eq!(tape.value(store.var(b)).data, vec![3.0]);
    }

    #[test]
    fn freezing_by_prefix() {
        let mut store = ParamStore::<f32>::new();
        store.add_zeros("dis.w", [2]);
        store.add_zeros("enh.w", [2]);
        let n = store.set_trainable("dis.", false);
        assert_eq!(n, 1);
        assert!(!store.get(store.by_name("dis.w").unwrap()).trainable);
        assert!(store.get(store.by_name("enh.w").unwrap()).trainable);
    }

    #[test]
    fn scalar_counts_partition() {
        let mut store = ParamStore::<f32>::new();
        store.add_zeros("dis.a", [4]);
        store.add_zeros("dis.b", [3]);
        store.add_zeros("enh.a", [5]);
        assert_eq!(store.count_scalars(""), 12);
        assert_eq!(
            store.count_scalars("dis.") + store.count_scalars("enh."),
            store.count_scalars("")
        );
    }
}
