//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded on a [`Tape`] as they are evaluated. Every node
//! only refers to nodes created before it, so the tape is already in
//! topological order and the backward sweep is a single reverse pass.
//!
//! ```
//! use rfib_core::autodiff::Tape;
//! use rfib_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = tape.square(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), Some(6.0));
//! ```
//!
//! The primitive set is fixed: `add`, `sub`, `mul`, `matmul`, `exp`, `log`,
//! `tanh`, `relu`, `sigmoid`, `sum`, `mean`, `square` and row broadcasting.
//! Helpers such as [`Tape::scale`] or [`Tape::clamp_max`] are compositions
//! of those primitives with constant leaves.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive operations understood by the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    MatMul,
    Exp,
    Log,
    Tanh,
    Relu,
    Sigmoid,
    Sum,
    Mean,
    Square,
    /// Repeat a `[1, n]` or `[n]` row `rows` times into a `[rows, n]` matrix.
    Broadcast { rows: usize },
}

impl OpKind {
    fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Square => "square",
            OpKind::Broadcast { .. } => "broadcast",
        }
    }

    fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    /// `None` for leaves and for nodes on a non-recording tape.
    op: Option<(OpKind, [usize; 2])>,
}

/// A recording of a computation, in creation (= topological) order.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that evaluates forward values but keeps no backward rules.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input. Leaves receive adjoints like any other node.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: None });
        Var(self.nodes.len() - 1)
    }

    /// Alias of [`Tape::leaf`] used for values that are not optimized.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Evaluates one primitive and records it.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != kind.arity() {
            return Err(Error::InvalidArgument(format!(
                "{} takes {} inputs, got {}",
                kind.name(),
                kind.arity(),
                inputs.len()
            )));
        }
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|v| &self.nodes[v.0].value);
        let value = forward(kind, a, b)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: kind.name() });
        }
        let parents = [inputs[0].0, inputs.get(1).map_or(usize::MAX, |v| v.0)];
        self.nodes.push(Node {
            value,
            op: self.recording.then_some((kind, parents)),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Square, &[a])
    }

    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var> {
        self.apply(OpKind::Broadcast { rows }, &[row])
    }

    /// `x + bias` with a `[1, n]` bias repeated over the rows of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let rows = match self.shape(x) {
            [r, _] => *r,
            other => {
                return Err(Error::ShapeMismatch {
                    op: "add_row",
                    lhs: other.to_vec(),
                    rhs: self.shape(bias).to_vec(),
                })
            }
        };
        let b = self.broadcast_rows(bias, rows)?;
        self.add(x, b)
    }

    fn filled_like(&mut self, a: Var, value: f64) -> Var {
        let t = Tensor::full(self.shape(a).to_vec(), value);
        self.constant(t)
    }

    /// `c * a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.filled_like(a, c);
        self.mul(a, k)
    }

    /// `a + c` for a constant `c`.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.filled_like(a, c);
        self.add(a, k)
    }

    /// `c - a` for a constant `c`.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Result<Var> {
        let k = self.filled_like(a, c);
        self.sub(k, a)
    }

    /// `min(a, c)`, written as `c - relu(c - a)`.
    pub fn clamp_max(&mut self, a: Var, c: f64) -> Result<Var> {
        let gap = self.rsub_scalar(c, a)?;
        let r = self.relu(gap)?;
        self.rsub_scalar(c, r)
    }

    /// `max(a, c)`, written as `c + relu(a - c)`.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Result<Var> {
        let excess = self.add_scalar(a, -c)?;
        let r = self.relu(excess)?;
        self.add_scalar(r, c)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::NotRecording);
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adjoints[root.0] = Some(Tensor::full(root_value.shape().to_vec(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adjoints[i].take() else {
                continue;
            };
            if let Some((kind, [p0, p1])) = self.nodes[i].op {
                let out = &self.nodes[i].value;
                let a = &self.nodes[p0].value;
                let b = (p1 != usize::MAX).then(|| &self.nodes[p1].value);
                let (ga, gb) = backward_rule(kind, &g, out, a, b)?;
                accumulate(&mut adjoints[p0], ga)?;
                if let Some(gb) = gb {
                    accumulate(&mut adjoints[p1], gb)?;
                }
            }
            adjoints[i] = Some(g);
        }
        Ok(Gradients { adjoints })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn forward(kind: OpKind, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let name = kind.name();
    Ok(match kind {
        OpKind::Add => a.zip_map(b.unwrap(), name, |x, y| x + y)?,
        OpKind::Sub => a.zip_map(b.unwrap(), name, |x, y| x - y)?,
        OpKind::Mul => a.zip_map(b.unwrap(), name, |x, y| x * y)?,
        OpKind::MatMul => a.matmul(b.unwrap())?,
        OpKind::Exp => a.map(f64::exp),
        OpKind::Log => {
            if a.data().iter().any(|&v| v <= 0.0) {
                return Err(Error::NonFinite { op: name });
            }
            a.map(f64::ln)
        }
        OpKind::Tanh => a.map(f64::tanh),
        OpKind::Relu => a.map(|v| v.max(0.0)),
        OpKind::Sigmoid => a.map(sigmoid),
        OpKind::Sum => Tensor::scalar(a.sum()),
        OpKind::Mean => Tensor::scalar(a.sum() / a.len() as f64),
        OpKind::Square => a.map(|v| v * v),
        OpKind::Broadcast { rows } => {
            let cols = match a.shape() {
                [1, c] | [c] => *c,
                other => {
                    return Err(Error::ShapeMismatch {
                        op: name,
                        lhs: other.to_vec(),
                        rhs: vec![1, 0],
                    })
                }
            };
            if rows == 0 {
                return Err(Error::InvalidArgument("broadcast to zero rows".into()));
            }
            Tensor::matrix(rows, cols, a.data().repeat(rows))?
        }
    })
}

/// Local adjoint rule: given the upstream adjoint `g` of the output, return
/// the contributions to each input's adjoint.
fn backward_rule(
    kind: OpKind,
    g: &Tensor,
    out: &Tensor,
    a: &Tensor,
    b: Option<&Tensor>,
) -> Result<(Tensor, Option<Tensor>)> {
    let name = kind.name();
    Ok(match kind {
        OpKind::Add => (g.clone(), Some(g.clone())),
        OpKind::Sub => (g.clone(), Some(g.map(|v| -v))),
        OpKind::Mul => {
            let b = b.unwrap();
            (g.zip_map(b, name, |g, b| g * b)?, Some(g.zip_map(a, name, |g, a| g * a)?))
        }
        OpKind::MatMul => {
            let b = b.unwrap();
            let ga = g.matmul(&b.transpose()?)?;
            let gb = a.transpose()?.matmul(g)?;
            (ga, Some(gb))
        }
        OpKind::Exp => (g.zip_map(out, name, |g, y| g * y)?, None),
        OpKind::Log => (g.zip_map(a, name, |g, x| g / x)?, None),
        OpKind::Tanh => (g.zip_map(out, name, |g, y| g * (1.0 - y * y))?, None),
        OpKind::Relu => (
            g.zip_map(a, name, |g, x| if x > 0.0 { g } else { 0.0 })?,
            None,
        ),
        OpKind::Sigmoid => (g.zip_map(out, name, |g, y| g * y * (1.0 - y))?, None),
        OpKind::Sum => {
            let g = g.item().unwrap();
            (Tensor::full(a.shape().to_vec(), g), None)
        }
        OpKind::Mean => {
            let g = g.item().unwrap() / a.len() as f64;
            (Tensor::full(a.shape().to_vec(), g), None)
        }
        OpKind::Square => (g.zip_map(a, name, |g, x| 2.0 * x * g)?, None),
        OpKind::Broadcast { rows } => {
            let cols = a.len();
            let mut acc = vec![0.0; cols];
            for r in 0..rows {
                for (s, v) in acc.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                    *s += v;
                }
            }
            (Tensor::new(a.shape().to_vec(), acc)?, None)
        }
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, with zeros for nodes the root does not depend on.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::scalar(0.0))
    }

    /// Adjoint of `v` shaped like `like`, zero-filled when unreachable.
    pub fn wrt_like(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros_like(like))
    }
}

/// Compares reverse-mode gradients of `f` at `params` with central
/// differences of step `step`.
///
/// Returns the largest `|analytic - numeric| / max(1, |analytic|)` over every
/// coordinate of every parameter tensor.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape
            .value(out)
            .item()
            .ok_or_else(|| Error::NonScalarRoot(tape.shape(out).to_vec()))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check probe" });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt_like(*var, &params[k]);
        for j in 0..params[k].len() {
            let orig = params[k].data()[j];
            probe[k].data_mut()[j] = orig + step;
            let up = eval(&probe)?;
            probe[k].data_mut()[j] = orig - step;
            let down = eval(&probe)?;
            probe[k].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
