use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::matrix::{DenseMatrix, Scalar};

/// One named tensor with its gradient and Adam moment buffers.
///
/// The gradient starts out unallocated; `ParamStore::zero_grads` must run
/// before any backward pass or optimizer step.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: DenseMatrix<T>,
    pub grad: Option<DenseMatrix<T>>,
    pub adam_m: DenseMatrix<T>,
    pub adam_v: DenseMatrix<T>,
    /// Frozen tensors are skipped by the optimizer (e.g. fixed pretrained embeddings).
    pub frozen: bool,
}

/// Named parameter tensors plus optimizer state. Iteration order is always
/// sorted by name, which keeps reductions and checkpoints reproducible.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
    step: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new(), step: 0 }
    }

    pub fn insert(&mut self, name: &str, value: DenseMatrix<T>) {
        let (r, c) = (value.rows(), value.cols());
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: None,
                adam_m: DenseMatrix::zeros(r, c),
                adam_v: DenseMatrix::zeros(r, c),
                frozen: false,
            },
        );
    }

    /// Insert a tensor with seeded uniform init in ±1/sqrt(fan_in).
    pub fn insert_uniform(&mut self, name: &str, rows: usize, cols: usize, seed: u64) {
        let fan_in = cols.max(1);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let data: Vec<T> = (0..rows * cols)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        self.insert(name, DenseMatrix::from_vec(rows, cols, data).expect("sized init"));
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, DenseMatrix::zeros(rows, cols));
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        self.param_mut(name)?.frozen = true;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))
    }

    pub fn value(&self, name: &str) -> Result<&DenseMatrix<T>> {
        Ok(&self.param(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut DenseMatrix<T>> {
        Ok(&mut self.param_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&DenseMatrix<T>> {
        self.param(name)?
            .grad
            .as_ref()
            .ok_or_else(|| Error::State(format!("gradient of '{name}' is uninitialized")))
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut DenseMatrix<T>> {
        self.param_mut(name)?
            .grad
            .as_mut()
            .ok_or_else(|| Error::State(format!("gradient of '{name}' is uninitialized")))
    }

    /// Allocate (or reset) every gradient buffer to zero.
    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            match &mut p.grad {
                Some(g) => g.fill(T::ZERO),
                None => p.grad = Some(DenseMatrix::zeros(p.value.rows(), p.value.cols())),
            }
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<T>)> {
        self.params.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.params.iter()
    }

    /// Convert every tensor to another scalar type (used to lift f32 models
    /// into f64 for finite-difference checking). Optimizer state is reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, p) in &self.params {
            out.insert(name, p.value.map_into::<U>());
            if p.frozen {
                out.freeze(name).expect("param just inserted");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grads_start_uninitialized() {
        let mut store = ParamStore::<f32>::new();
        store.insert_zeros("w", 2, 2);
        assert!(store.grad("w").is_err());
        store.zero_grads();
        assert!(store.grad("w").is_ok());
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut store = ParamStore::<f64>::new();
        store.insert_uniform("w", 16, 25, 7);
        let bound = 1.0 / 5.0;
        assert!(store.value("w").unwrap().as_slice().iter().all(|v| v.abs() <= bound));
        // Seeded: same seed, same values.
        let mut store2 = ParamStore::<f64>::new();
        store2.insert_uniform("w", 16, 25, 7);
        assert_eq!(store.value("w").unwrap(), store2.value("w").unwrap());
    }

    #[test]
    fn names_iterate_sorted() {
        let mut store = ParamStore::<f32>::new();
        store.insert_zeros("b", 1, 1);
        store.insert_zeros("a", 1, 1);
        let names: Vec<_> = store.names().collect();
        assert_eq!(names, vec!["a", "b"]);
    }
}
