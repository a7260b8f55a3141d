//! Define-by-run computation graph.
//!
//! A [`Tape`] records every op as a node holding its forward value and a
//! vector-Jacobian product closure. The graph is rebuilt for every step; the
//! tape owns all intermediate values until it is dropped.

use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node in a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Everything a VJP closure may read.
pub struct VjpCtx<'a, T: Scalar> {
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
    /// Upstream gradient, same length as `output`.
    pub grad: &'a [T],
    /// Whether each input needs a gradient. Closures may return `None` for
    /// inputs that do not.
    pub wants: Vec<bool>,
}

pub type VjpFn<T> = Box<dyn Fn(&VjpCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    vjp: Option<VjpFn<T>>,
    needs_grad: bool,
    grad: Option<Vec<T>>,
    param: Option<ParamId>,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    record: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            record: true,
        }
    }

    /// A tape that never records backward closures. Used for inference and
    /// for frozen sub-models.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor<T>, needs_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            vjp: None,
            needs_grad: needs_grad && self.record,
            grad: None,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false, None)
    }

    /// Free leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true, None)
    }

    /// Registers a parameter from `store` (once per tape) and returns its node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push_leaf(store.get(id).clone(), true, Some(id));
        self.params.insert(id, v);
        v
    }

    /// Looks a parameter up by name.
    pub fn param_named(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        let id = store.id(name).ok_or_else(|| AutodiffError::Invalid {
            op: "param",
            detail: format!("unknown parameter {name}"),
        })?;
        Ok(self.param(store, id))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Records an op. `vjp` is dropped when no input needs a gradient.
    pub fn push_op(&mut self, value: Tensor<T>, inputs: Vec<Var>, vjp: VjpFn<T>) -> Var {
        let needs_grad = self.record && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            inputs,
            vjp: if needs_grad { Some(vjp) } else { None },
            needs_grad,
            grad: None,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate into leaves
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(vjp) = &node.vjp {
                let ctx = VjpCtx {
                    inputs: node.inputs.iter().map(|v| &self.nodes[v.0].value).collect(),
                    output: &node.value,
                    grad: &g,
                    wants: node.inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect(),
                };
                let input_grads = vjp(&ctx);
                debug_assert_eq!(input_grads.len(), node.inputs.len());
                for (inp, gi) in node.inputs.iter().zip(input_grads) {
                    let Some(gi) = gi else { continue };
                    if !self.nodes[inp.0].needs_grad {
                        continue;
                    }
                    debug_assert_eq!(gi.len(), self.nodes[inp.0].value.numel());
                    match &mut grads[inp.0] {
                        Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += *b),
                        slot @ None => *slot = Some(gi),
                    }
                }
            } else if node.needs_grad {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Gradients of every parameter registered on this tape, indexed by
    /// [`ParamId`]. Unused parameters get `None`.
    pub fn param_grads(&self, n_params: usize) -> Vec<Option<Vec<T>>> {
        let mut out: Vec<Option<Vec<T>>> = (0..n_params).map(|_| None).collect();
        for node in &self.nodes {
            if let (Some(id), Some(g)) = (node.param, &node.grad) {
                if id.0 < n_params {
                    out[id.0] = Some(g.clone());
                }
            }
        }
        out
    }
}
