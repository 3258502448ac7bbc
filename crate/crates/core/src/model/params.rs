use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Whether an entry is optimized or only carried along (batch-norm running
/// statistics).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

/// Handle to one entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    kind: ParamKind,
}

/// Named registry of every array a network owns, in insertion order.
///
/// Trainable entries carry a gradient accumulator and Adam first/second
/// moments of the same length; buffers carry only their values. Names are
/// hierarchical, e.g. `enc1/conv2/weight`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    values: Vec<Vec<T>>,
    grads: Vec<Vec<T>>,
    adam_m: Vec<Vec<T>>,
    adam_v: Vec<Vec<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            adam_m: Vec::new(),
            adam_v: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: &[usize],
        values: Vec<T>,
        kind: ParamKind,
    ) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::shape(format!(
                "parameter {name:?}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        let id = self.entries.len();
        let aux = match kind {
            ParamKind::Trainable => len,
            ParamKind::Buffer => 0,
        };
        self.entries.push(Entry {
            name: name.to_string(),
            shape: shape.to_vec(),
            kind,
        });
        self.index.insert(name.to_string(), id);
        self.values.push(values);
        self.grads.push(vec![T::zero(); aux]);
        self.adam_m.push(vec![T::zero(); aux]);
        self.adam_v.push(vec![T::zero(); aux]);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids()
            .filter(|&id| self.kind(id) == ParamKind::Trainable)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.grads[id.0]
    }

    /// Two distinct values, mutably.
    pub fn values_pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        let [x, y] = self
            .values
            .get_disjoint_mut([a.0, b.0])
            .expect("distinct, in-range parameter ids");
        (x, y)
    }

    /// Two distinct gradient accumulators, mutably.
    pub fn grads_pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        let [x, y] = self
            .grads
            .get_disjoint_mut([a.0, b.0])
            .expect("distinct, in-range parameter ids");
        (x, y)
    }

    /// Value, gradient and both Adam moments of one trainable entry.
    pub fn adam_view(&mut self, id: ParamId) -> (&mut [T], &mut [T], &mut [T], &mut [T]) {
        let i = id.0;
        (
            &mut self.values[i],
            &mut self.grads[i],
            &mut self.adam_m[i],
            &mut self.adam_v[i],
        )
    }

    pub fn adam_moments(&self, id: ParamId) -> (&[T], &[T]) {
        (&self.adam_m[id.0], &self.adam_v[id.0])
    }

    pub fn set_adam_moments(&mut self, id: ParamId, m: Vec<T>, v: Vec<T>) -> Result<()> {
        let len = self.grads[id.0].len();
        if m.len() != len || v.len() != len {
            return Err(Error::shape(format!(
                "adam moments for {:?} must have {len} entries",
                self.name(id)
            )));
        }
        self.adam_m[id.0] = m;
        self.adam_v[id.0] = v;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    /// Number of trainable entries.
    pub fn trainable_count_entries(&self) -> usize {
        self.trainable_ids().count()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.trainable_ids().map(|id| self.values[id.0].len()).sum()
    }

    /// All trainable values concatenated in store order.
    pub fn flat_values(&self) -> Vec<T> {
        self.trainable_ids()
            .flat_map(|id| self.values[id.0].iter().copied())
            .collect()
    }

    /// All trainable gradients concatenated in store order.
    pub fn flat_grads(&self) -> Vec<T> {
        self.trainable_ids()
            .flat_map(|id| self.grads[id.0].iter().copied())
            .collect()
    }

    /// Overwrites the trainable values from a [`flat_values`](Self::flat_values) layout.
    pub fn set_flat_values(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.trainable_count() {
            return Err(Error::shape(format!(
                "{} flat values for {} trainable scalars",
                flat.len(),
                self.trainable_count()
            )));
        }
        let mut at = 0;
        let ids: Vec<ParamId> = self.trainable_ids().collect();
        for id in ids {
            let v = &mut self.values[id.0];
            let n = v.len();
            v.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Checks that `other` has the same names, shapes and kinds in the same order.
    pub fn check_layout<U: Scalar>(&self, other: &ParamStore<U>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::config(format!(
                "parameter layout mismatch: {} entries vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a != b {
                return Err(Error::config(format!(
                    "parameter layout mismatch at {:?} {:?} vs {:?} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Same layout and contents converted to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let conv = |vs: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            vs.iter()
                .map(|v| v.iter().map(|&x| U::lit(x.as_f64())).collect())
                .collect()
        };
        ParamStore {
            entries: self.entries.clone(),
            index: self.index.clone(),
            values: conv(&self.values),
            grads: conv(&self.grads),
            adam_m: conv(&self.adam_m),
            adam_v: conv(&self.adam_v),
        }
    }
}
