//! Black-box access to tensor entries and spatial fibers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::htensor::HTensor;

/// Scalar-valued function on multi-indices.
pub trait EntryOracle: Sync {
    fn mode_sizes(&self) -> Vec<usize>;
    fn entry(&self, idx: &[usize]) -> Result<f64>;

    /// Hint that `idx` will be queried soon; lets expensive oracles work on
    /// the batch in parallel. Has no observable effect on entry values.
    fn prefetch(&self, _idx: &[Vec<usize>]) -> Result<()> {
        Ok(())
    }
}

impl<T: EntryOracle + ?Sized> EntryOracle for &T {
    fn mode_sizes(&self) -> Vec<usize> {
        (**self).mode_sizes()
    }

    fn entry(&self, idx: &[usize]) -> Result<f64> {
        (**self).entry(idx)
    }

    fn prefetch(&self, idx: &[Vec<usize>]) -> Result<()> {
        (**self).prefetch(idx)
    }
}

/// Memoizing wrapper. Only the first query of an index is counted, and the
/// total count is bounded by `budget`.
pub struct CachedOracle<O> {
    inner: O,
    sizes: Vec<usize>,
    cache: RwLock<HashMap<Vec<usize>, f64>>,
    count: AtomicUsize,
    budget: usize,
    max_abs: Mutex<f64>,
}

impl<O: EntryOracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        Self::with_budget(inner, usize::MAX)
    }

    pub fn with_budget(inner: O, budget: usize) -> Self {
        let sizes = inner.mode_sizes();
        CachedOracle {
            inner,
            sizes,
            cache: RwLock::new(HashMap::new()),
            count: AtomicUsize::new(0),
            budget,
            max_abs: Mutex::new(0.0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    /// Largest magnitude among the entries fetched so far.
    pub fn max_abs(&self) -> f64 {
        *self.max_abs.lock().unwrap()
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        if let Some(&v) = self.cache.read().unwrap().get(idx) {
            return Ok(v);
        }
        if idx.len() != self.sizes.len() || idx.iter().zip(&self.sizes).any(|(j, n)| j >= n) {
            return invalid(format!("index {idx:?} outside {:?}", self.sizes));
        }
        if self.evaluations() >= self.budget {
            return Err(Error::Budget(format!(
                "entry budget of {} evaluations exhausted",
                self.budget
            )));
        }
        let v = self.inner.entry(idx)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("oracle returned {v} at {idx:?}")));
        }
        let mut cache = self.cache.write().unwrap();
        if cache.insert(idx.to_vec(), v).is_none() {
            self.count.fetch_add(1, Ordering::SeqCst);
            let mut m = self.max_abs.lock().unwrap();
            *m = m.max(v.abs());
        }
        Ok(v)
    }
}

impl<O: EntryOracle> EntryOracle for CachedOracle<O> {
    fn mode_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn entry(&self, idx: &[usize]) -> Result<f64> {
        self.get(idx)
    }

    fn prefetch(&self, idx: &[Vec<usize>]) -> Result<()> {
        let missing: Vec<Vec<usize>> = {
            let cache = self.cache.read().unwrap();
            idx.iter().filter(|i| !cache.contains_key(*i)).cloned().collect()
        };
        if missing.is_empty() {
            Ok(())
        } else {
            self.inner.prefetch(&missing)
        }
    }
}

/// Closure-backed oracle.
pub struct FnOracle<F> {
    sizes: Vec<usize>,
    f: F,
}

impl<F: Fn(&[usize]) -> f64 + Sync> FnOracle<F> {
    pub fn new(sizes: Vec<usize>, f: F) -> Self {
        FnOracle { sizes, f }
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync> EntryOracle for FnOracle<F> {
    fn mode_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn entry(&self, idx: &[usize]) -> Result<f64> {
        Ok((self.f)(idx))
    }
}

/// Entries of a hierarchical tensor, for self-reproduction tests.
pub struct HTensorOracle<'a>(pub &'a HTensor);

impl EntryOracle for HTensorOracle<'_> {
    fn mode_sizes(&self) -> Vec<usize> {
        self.0.mode_sizes().to_vec()
    }

    fn entry(&self, idx: &[usize]) -> Result<f64> {
        self.0.entry(idx)
    }
}

/// Tensor over `J_1 x ... x J_{d-1} x J_d` accessed one spatial fiber
/// (all of mode `d` at a fixed parametric index) at a time.
pub trait FiberOracle: Sync {
    fn param_sizes(&self) -> Vec<usize>;
    fn fiber_len(&self) -> usize;
    fn fiber(&self, param: &[usize]) -> Result<Vec<f64>>;
}

/// Exposes the last mode of an entry oracle as fibers.
pub struct EntryFibers<O>(pub O);

impl<O: EntryOracle> FiberOracle for EntryFibers<O> {
    fn param_sizes(&self) -> Vec<usize> {
        let s = self.0.mode_sizes();
        s[..s.len() - 1].to_vec()
    }

    fn fiber_len(&self) -> usize {
        *self.0.mode_sizes().last().unwrap()
    }

    fn fiber(&self, param: &[usize]) -> Result<Vec<f64>> {
        let mut idx = param.to_vec();
        idx.push(0);
        let last = idx.len() - 1;
        (0..self.fiber_len())
            .map(|i| {
                idx[last] = i;
                self.0.entry(&idx)
            })
            .collect()
    }
}

/// Memoizing fiber store with a counter of distinct fibers fetched.
pub struct FiberCache<'a> {
    inner: &'a dyn FiberOracle,
    sizes: Vec<usize>,
    len: usize,
    store: RwLock<HashMap<Vec<usize>, Arc<Vec<f64>>>>,
    count: AtomicUsize,
}

impl<'a> FiberCache<'a> {
    pub fn new(inner: &'a dyn FiberOracle) -> Self {
        FiberCache {
            sizes: inner.param_sizes(),
            len: inner.fiber_len(),
            inner,
            store: RwLock::new(HashMap::new()),
            count: AtomicUsize::new(0),
        }
    }

    pub fn param_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn fiber_len(&self) -> usize {
        self.len
    }

    /// Number of distinct fibers fetched so far.
    pub fn fetched(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn get(&self, param: &[usize]) -> Result<Arc<Vec<f64>>> {
        if let Some(f) = self.store.read().unwrap().get(param) {
            return Ok(Arc::clone(f));
        }
        if param.len() != self.sizes.len() || param.iter().zip(&self.sizes).any(|(j, n)| j >= n) {
            return invalid(format!("fiber index {param:?} outside {:?}", self.sizes));
        }
        let fiber = self.inner.fiber(param)?;
        if fiber.len() != self.len {
            return Err(Error::Numeric(format!(
                "fiber has length {}, expected {}",
                fiber.len(),
                self.len
            )));
        }
        if let Some(bad) = fiber.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite fiber entry {bad} at {param:?}")));
        }
        let fiber = Arc::new(fiber);
        let mut store = self.store.write().unwrap();
        let entry = store.entry(param.to_vec()).or_insert_with(|| {
            self.count.fetch_add(1, Ordering::SeqCst);
            Arc::clone(&fiber)
        });
        Ok(Arc::clone(entry))
    }

    /// Fetches many fibers, possibly in parallel; the result order follows
    /// `params` regardless of completion order.
    pub fn get_many(&self, params: &[Vec<usize>]) -> Result<Vec<Arc<Vec<f64>>>> {
        params.par_iter().map(|p| self.get(p)).collect()
    }
}

/// Entry `(j, k)` equals `V[:, k] . X(j, :)`; the projected vector of every
/// parametric index is computed once.
pub struct ReducedOracle<'a, 'b> {
    fibers: &'b FiberCache<'a>,
    basis: &'b DMatrix<f64>,
    projected: RwLock<HashMap<Vec<usize>, Arc<Vec<f64>>>>,
}

impl<'a, 'b> ReducedOracle<'a, 'b> {
    pub fn new(fibers: &'b FiberCache<'a>, basis: &'b DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != fibers.fiber_len() {
            return invalid(format!(
                "basis has {} rows, fibers have length {}",
                basis.nrows(),
                fibers.fiber_len()
            ));
        }
        Ok(ReducedOracle {
            fibers,
            basis,
            projected: RwLock::new(HashMap::new()),
        })
    }

    fn projected(&self, param: &[usize]) -> Result<Arc<Vec<f64>>> {
        if let Some(p) = self.projected.read().unwrap().get(param) {
            return Ok(Arc::clone(p));
        }
        let fiber = self.fibers.get(param)?;
        let coeffs: Vec<f64> = self
            .basis
            .column_iter()
            .map(|c| c.iter().zip(fiber.iter()).map(|(a, b)| a * b).sum())
            .collect();
        let coeffs = Arc::new(coeffs);
        self.projected
            .write()
            .unwrap()
            .insert(param.to_vec(), Arc::clone(&coeffs));
        Ok(coeffs)
    }
}

impl EntryOracle for ReducedOracle<'_, '_> {
    fn mode_sizes(&self) -> Vec<usize> {
        let mut s = self.fibers.param_sizes().to_vec();
        s.push(self.basis.ncols());
        s
    }

    fn entry(&self, idx: &[usize]) -> Result<f64> {
        let (param, k) = idx.split_at(idx.len() - 1);
        let coeffs = self.projected(param)?;
        coeffs
            .get(k[0])
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("reduced index {} out of range", k[0])))
    }

    fn prefetch(&self, idx: &[Vec<usize>]) -> Result<()> {
        let mut params: Vec<Vec<usize>> = idx.iter().map(|i| i[..i.len() - 1].to_vec()).collect();
        params.sort_unstable();
        params.dedup();
        self.fibers.get_many(&params).map(|_| ())
    }
}

/// Builds the reduced oracle `M_{d}(Y) = V^T M_{d}(X)`.
pub fn reduce_oracle<'a, 'b>(
    fibers: &'b FiberCache<'a>,
    basis: &'b DMatrix<f64>,
) -> Result<ReducedOracle<'a, 'b>> {
    ReducedOracle::new(fibers, basis)
}
