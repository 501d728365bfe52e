use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{dim_err, Result, TensorError};
use crate::Float;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static NAN_GUARD: AtomicBool = AtomicBool::new(false);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Enables or disables the non-finite check run on every op output.
pub fn set_nan_guard(enabled: bool) {
    NAN_GUARD.store(enabled, Ordering::Relaxed);
}

pub fn nan_guard_enabled() -> bool {
    NAN_GUARD.load(Ordering::Relaxed)
}

/// Suspends graph recording on the current thread until dropped.
#[must_use = "graph recording resumes as soon as the guard is dropped"]
pub struct NoGradGuard {
    prev: bool,
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Maps the output gradient to one optional gradient per input.
/// Arguments: output gradient, the op's inputs, the op's output values.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&[T], &[Tensor<T>], &[T]) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct Node<T: Float> {
    op: &'static str,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Inner<T: Float> {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

/// Dense row-major tensor. Cloning is cheap and shares storage; values are
/// never mutated after construction.
pub struct Tensor<T: Float = f32>(Arc<Inner<T>>);

impl<T: Float> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self(Arc::clone(&self.0))
    }
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad);
        if let Some(node) = &self.0.node {
            s.field("op", &node.op);
        }
        if self.numel() <= 16 {
            s.field("data", &self.0.data.as_slice());
        }
        s.finish()
    }
}

impl<T: Float> Tensor<T> {
    fn make(shape: Vec<usize>, data: Arc<Vec<T>>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        Self(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            node,
        }))
    }

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return dim_err(
                "from_vec",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            );
        }
        Ok(Self::make(shape.to_vec(), Arc::new(data), false, None))
    }

    /// Trainable leaf.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Self::from_vec(data, shape)?.requires_grad_(true))
    }

    pub fn scalar(v: T) -> Self {
        Self::make(Vec::new(), Arc::new(vec![v]), false, None)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self::make(shape.to_vec(), Arc::new(vec![v; n]), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// A fresh leaf sharing this tensor's values, with the given grad flag.
    pub fn requires_grad_(&self, requires_grad: bool) -> Self {
        Self::make(self.0.shape.clone(), Arc::clone(&self.0.data), requires_grad, None)
    }

    /// A fresh non-tracking leaf sharing this tensor's values.
    pub fn detach(&self) -> Self {
        self.requires_grad_(false)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.to_vec()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.0.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Name of the op that produced this tensor, if it was recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    /// True when gradients can flow into or through this tensor.
    pub fn tracks_grad(&self) -> bool {
        self.0.requires_grad || self.0.node.is_some()
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.lock().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock() = None;
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.0.data)
    }

    /// Output of a primitive op. The graph node is attached only when
    /// recording is enabled and some input tracks gradients.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<T>,
        shape: Vec<usize>,
        inputs: &[&Tensor<T>],
        backward: impl Fn(&[T], &[Tensor<T>], &[T]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_op_shared(op, Arc::new(data), shape, inputs, backward)
    }

    pub(crate) fn from_op_shared(
        op: &'static str,
        data: Arc<Vec<T>>,
        shape: Vec<usize>,
        inputs: &[&Tensor<T>],
        backward: impl Fn(&[T], &[Tensor<T>], &[T]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if nan_guard_enabled() {
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op, index });
            }
        }
        let record = is_grad_enabled() && inputs.iter().any(|t| t.tracks_grad());
        let node = record.then(|| Node {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Ok(Self::make(shape, data, false, node))
    }

    /// Reverse-mode sweep from a one-element tensor. Leaf gradients are
    /// accumulated (`+=`) into whatever they already hold.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward() needs a single-element tensor, got shape {:?}",
                self.shape()
            )));
        }
        if !self.tracks_grad() {
            return Ok(());
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);

        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            let Some(node) = &t.0.node else {
                t.accumulate_grad(&g);
                continue;
            };
            let input_grads = (node.backward)(&g, &node.inputs, &t.0.data);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op);
            for (input, grad) in node.inputs.iter().zip(input_grads) {
                let Some(grad) = grad else { continue };
                if !input.tracks_grad() {
                    continue;
                }
                debug_assert_eq!(grad.len(), input.numel(), "{} grad size", node.op);
                if input.is_leaf() {
                    input.accumulate_grad(&grad);
                } else {
                    match pending.get_mut(&input.id()) {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, b)| *a += *b),
                        None => {
                            pending.insert(input.id(), grad);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate_grad(&self, g: &[T]) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.lock();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += *b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Post-order over the recorded graph (inputs before consumers).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.node {
                for input in &node.inputs {
                    if input.tracks_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f32>::from_vec(vec![1.0; 5], &[2, 3]).is_err());
        let t = Tensor::<f32>::from_vec(vec![1.0; 6], &[2, 3]).unwrap();
        assert_eq!(t.numel(), 6);
    }

    #[test]
    fn backward_on_vector_is_contract_error() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(x.backward(), Err(TensorError::Contract(_))));
    }

    #[test]
    fn no_grad_guard_restores() {
        assert!(is_grad_enabled());
        {
            let _g = no_grad();
            assert!(!is_grad_enabled());
        }
        assert!(is_grad_enabled());
    }
}
