//! Dense tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are immutable values. Forward operations on tensors that require
//! gradients record a DAG; [`Tensor::backward`] walks it in reverse
//! topological order and accumulates `∂loss/∂leaf` into every
//! gradient-tracked leaf. Reductions run in a fixed row-major order, so
//! results are bit-reproducible across runs.

mod adam;
#[cfg(test)]
mod grad_tests;
mod kernels;
mod ops;
mod param;

pub mod gradcheck;

pub use adam::{adam_step, AdamState};
pub use ops::Activation;
pub use param::{checksum_all, Param};

use crate::error::{Error, Result};
use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

/// Element type for all numerics; `f64` unless the `f32` feature is set.
#[cfg(feature = "f32")]
pub type Real = f32;
#[cfg(not(feature = "f32"))]
pub type Real = f64;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn = Box<dyn Fn(&[Real]) + Send + Sync>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<Real>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<Real>>>,
    /// Gradient-tracked inputs, kept for topological ordering.
    parents: Vec<Tensor>,
    /// Accumulates input gradients given this node's output gradient.
    backward: Option<BackwardFn>,
}

/// An n-dimensional array, optionally tracked for gradients.
#[derive(Clone)]
pub struct Tensor {
    node: Arc<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn leaf(data: Vec<Real>, shape: Vec<usize>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                parents: Vec::new(),
                backward: None,
            }),
        })
    }

    /// A constant (non-tracked) tensor.
    pub fn from_vec(data: Vec<Real>, shape: &[usize]) -> Result<Tensor> {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// A gradient-tracked leaf.
    pub fn var(data: Vec<Real>, shape: &[usize]) -> Result<Tensor> {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Self::leaf(vec![0.0; numel], shape.to_vec(), false).expect("consistent by construction")
    }

    pub fn full(shape: &[usize], value: Real) -> Tensor {
        let numel = shape.iter().product();
        Self::leaf(vec![value; numel], shape.to_vec(), false).expect("consistent by construction")
    }

    pub fn scalar(value: Real) -> Tensor {
        Self::leaf(vec![value], vec![1], false).expect("consistent by construction")
    }

    /// Standard-normal samples drawn sequentially from `rng`.
    pub fn randn(shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor {
        use rand::Rng as _;
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.sample::<Real, _>(rand_distr::StandardNormal))
            .collect();
        Self::leaf(data, shape.to_vec(), false).expect("consistent by construction")
    }

    /// Wraps `data` as an op output. `inputs` lists every operand; only the
    /// gradient-tracked ones are recorded, and `make_bw` is not even called
    /// when nothing upstream needs gradients.
    pub(crate) fn from_op<F>(
        shape: Vec<usize>,
        data: Vec<Real>,
        inputs: &[&Tensor],
        make_bw: F,
    ) -> Tensor
    where
        F: FnOnce() -> BackwardFn,
    {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let (parents, backward) = if requires_grad {
            let parents = inputs
                .iter()
                .filter(|t| t.requires_grad())
                .map(|t| (*t).clone())
                .collect();
            (parents, Some(make_bw()))
        } else {
            (Vec::new(), None)
        };
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                parents,
                backward,
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[Real] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<Real> {
        self.node.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> Real {
        assert_eq!(self.numel(), 1, "item() requires a scalar tensor");
        self.node.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<Real>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    /// Removes and returns the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<Real>> {
        self.node.grad.lock().expect("grad lock").take()
    }

    pub fn is_finite(&self) -> bool {
        self.node.data.iter().all(|v| v.is_finite())
    }

    /// Adds `f`'s output into this tensor's gradient buffer (no-op for
    /// untracked tensors).
    pub(crate) fn accumulate_grad(&self, f: impl FnOnce(&mut [Real])) {
        if !self.node.requires_grad {
            return;
        }
        let mut guard = self.node.grad.lock().expect("grad lock");
        let g = guard.get_or_insert_with(|| vec![0.0; self.node.data.len()]);
        f(g);
    }

    /// Reverse-mode pass from a scalar loss: every gradient-tracked leaf
    /// reachable from `self` receives its accumulated `∂self/∂leaf`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.node.requires_grad {
            // Loss depends on no tracked leaf; all gradients are zero.
            return Ok(());
        }
        self.accumulate_grad(|g| g[0] += 1.0);
        for t in topo_order(self) {
            if let Some(bw) = &t.node.backward {
                let guard = t.node.grad.lock().expect("grad lock");
                if let Some(g) = guard.as_ref() {
                    // A node never lists itself as a parent, so the
                    // accumulations inside `bw` touch other mutexes only.
                    bw(g);
                }
            }
        }
        Ok(())
    }
}

/// Nodes ordered so every consumer appears before its inputs.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    struct Frame {
        t: Tensor,
        next_parent: usize,
    }
    let mut visited: HashSet<u64> = HashSet::new();
    let mut order: Vec<Tensor> = Vec::new();
    let mut stack = Vec::new();
    visited.insert(root.node.id);
    stack.push(Frame {
        t: root.clone(),
        next_parent: 0,
    });
    while let Some(frame) = stack.last_mut() {
        if frame.next_parent < frame.t.node.parents.len() {
            let p = frame.t.node.parents[frame.next_parent].clone();
            frame.next_parent += 1;
            if visited.insert(p.node.id) {
                stack.push(Frame {
                    t: p,
                    next_parent: 0,
                });
            }
        } else {
            order.push(stack.pop().expect("frame present").t);
        }
    }
    order.reverse();
    order
}
