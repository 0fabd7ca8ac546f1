//! Named parameter tensors with per-tensor Adam state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::scalar::Scalar;

/// Default Adam moment decays.
pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
/// Default Adam denominator guard.
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
struct Slot<S: Scalar> {
    value: DenseMatrix<S>,
    grad: DenseMatrix<S>,
    grad_populated: bool,
    moment1: DenseMatrix<S>,
    moment2: DenseMatrix<S>,
    step: u64,
}

/// All trainable tensors of a model, keyed by name, each carrying a gradient
/// buffer and Adam moments of matching shape.
#[derive(Clone, Debug)]
pub struct ParamStore<S: Scalar> {
    slots: BTreeMap<String, Slot<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { slots: BTreeMap::new() }
    }

    /// Register a tensor under a unique name.
    pub fn register(&mut self, name: &str, value: DenseMatrix<S>) -> Result<()> {
        if self.slots.contains_key(name) {
            return Err(Error::State(format!("parameter '{name}' already registered")));
        }
        let (r, c) = (value.rows(), value.cols());
        self.slots.insert(
            name.to_string(),
            Slot {
                value,
                grad: DenseMatrix::zeros(r, c),
                grad_populated: false,
                moment1: DenseMatrix::zeros(r, c),
                moment2: DenseMatrix::zeros(r, c),
                step: 0,
            },
        );
        Ok(())
    }

    /// Register a matrix initialized Xavier-uniform with bound
    /// `sqrt(6 / (rows + cols))`.
    pub fn register_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut SeededRng) -> Result<()> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        self.register(name, rng.uniform_matrix(rows, cols, bound))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&DenseMatrix<S>> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseMatrix<S>> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))
    }

    /// Gradient buffer for accumulation; marks the gradient populated.
    pub fn grad_mut(&mut self, name: &str) -> Result<&mut DenseMatrix<S>> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))?;
        slot.grad_populated = true;
        Ok(&mut slot.grad)
    }

    pub fn grad(&self, name: &str) -> Result<&DenseMatrix<S>> {
        self.slots
            .get(name)
            .map(|s| &s.grad)
            .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))
    }

    /// `grad[name] += alpha * delta`
    pub fn accumulate_grad(&mut self, name: &str, alpha: S, delta: &DenseMatrix<S>) -> Result<()> {
        self.grad_mut(name)?.axpy(alpha, delta)
    }

    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad.fill(S::zero());
            slot.grad_populated = false;
        }
    }

    /// Sum of squared parameter values over the named tensors.
    pub fn squared_norm_of(&self, names: &[&str]) -> Result<S> {
        let mut total = S::zero();
        for name in names {
            total += self.get(name)?.squared_norm();
        }
        Ok(total)
    }

    /// One Adam step with bias correction over every registered tensor.
    /// Errors if any tensor's gradient was never populated.
    pub fn adam_step(&mut self, lr: f64, betas: (f64, f64), eps: f64) -> Result<()> {
        let names: Vec<String> = self.slots.keys().cloned().collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        self.adam_step_names(&refs, lr, betas, eps)
    }

    /// Adam step restricted to the named tensors (phase-local updates).
    pub fn adam_step_names(&mut self, names: &[&str], lr: f64, betas: (f64, f64), eps: f64) -> Result<()> {
        for name in names {
            let populated = self
                .slots
                .get(*name)
                .ok_or_else(|| Error::State(format!("unknown parameter '{name}'")))?
                .grad_populated;
            if !populated {
                return Err(Error::State(format!("missing gradient for '{name}'")));
            }
        }
        let (b1, b2) = (S::from_f64(betas.0), S::from_f64(betas.1));
        let (lr, eps) = (S::from_f64(lr), S::from_f64(eps));
        let one = S::one();
        for name in names {
            let slot = self.slots.get_mut(*name).expect("checked above");
            slot.step += 1;
            let bc1 = one - b1.powi(slot.step as i32);
            let bc2 = one - b2.powi(slot.step as i32);
            for i in 0..slot.value.data().len() {
                let g = slot.grad.data()[i];
                let m = b1 * slot.moment1.data()[i] + (one - b1) * g;
                let v = b2 * slot.moment2.data()[i] + (one - b2) * g * g;
                slot.moment1.data_mut()[i] = m;
                slot.moment2.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                let value = &mut slot.value.data_mut()[i];
                *value -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Snapshot of the parameter values, keyed by name.
    pub fn values(&self) -> BTreeMap<String, DenseMatrix<S>> {
        self.slots
            .iter()
            .map(|(k, s)| (k.clone(), s.value.clone()))
            .collect()
    }
}

/// Central-difference gradients `(L(x+h) - L(x-h)) / 2h` of `loss` with
/// respect to every registered tensor. Run in 64-bit mode; `h` should be in
/// `[1e-6, 1e-4]`.
pub fn finite_diff_grad<S, F>(
    loss: F,
    store: &mut ParamStore<S>,
    h: f64,
) -> Result<BTreeMap<String, DenseMatrix<S>>>
where
    S: Scalar,
    F: Fn(&ParamStore<S>) -> Result<S>,
{
    let h_s = S::from_f64(h);
    let two_h = S::from_f64(2.0 * h);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut grads = BTreeMap::new();
    for name in names {
        let len = store.get(&name)?.data().len();
        let (rows, cols) = {
            let m = store.get(&name)?;
            (m.rows(), m.cols())
        };
        let mut grad = DenseMatrix::zeros(rows, cols);
        for i in 0..len {
            let orig = store.get(&name)?.data()[i];
            store.get_mut(&name)?.data_mut()[i] = orig + h_s;
            let up = loss(store)?;
            store.get_mut(&name)?.data_mut()[i] = orig - h_s;
            let down = loss(store)?;
            store.get_mut(&name)?.data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while probing '{name}'[{i}]"
                )));
            }
            grad.data_mut()[i] = (up - down) / two_h;
        }
        grads.insert(name, grad);
    }
    Ok(grads)
}

/// Relative L2 error between an analytic gradient map and a reference,
/// concatenated over all tensors.
pub fn grad_relative_error<S: Scalar>(
    analytic: &BTreeMap<String, DenseMatrix<S>>,
    reference: &BTreeMap<String, DenseMatrix<S>>,
) -> f64 {
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (name, a) in analytic {
        let r = &reference[name];
        for (x, y) in a.data().iter().zip(r.data()) {
            let d = x.as_f64() - y.as_f64();
            diff_sq += d * d;
            ref_sq += y.as_f64() * y.as_f64();
        }
    }
    diff_sq.sqrt() / ref_sq.sqrt().max(1e-12)
}
