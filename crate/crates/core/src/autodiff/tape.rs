//! Reverse-mode autodiff over a recorded tape. Forward values are
//! computed eagerly as ops are applied; `backward` walks the tape in
//! reverse and accumulates adjoints by summation across fan-out.

use ndarray::ArrayView2;

use super::tensor::{Shape, TensorValue};
use crate::error::{Error, Result};

/// Handle to a node on a tape. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    Square,
    Sqrt,
    MatMul,
    Transpose,
    Sum { axis: Option<usize> },
    Mean { axis: Option<usize> },
    Max,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    Reshape { from: Shape },
    Broadcast { from: Shape },
    Softmax { axis: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softplus => "softplus",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Max => "max",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Broadcast { .. } => "broadcast",
            Op::Softmax { .. } => "softmax",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: TensorValue,
}

/// Append-only computation record. Inputs always reference earlier
/// indices, so the node list is topologically ordered by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &TensorValue {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: TensorValue) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: TensorValue) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    fn record(&mut self, op: Op, inputs: Vec<NodeId>) -> Result<NodeId> {
        let in_vals: Vec<&TensorValue> = inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
        let value = eval_op(&op, &in_vals)?;
        Ok(self.push(op, inputs, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add, vec![a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub, vec![a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul, vec![a, b])
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Div, vec![a, b])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Neg, vec![a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp, vec![a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log, vec![a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh, vec![a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sigmoid, vec![a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Softplus, vec![a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Square, vec![a])
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sqrt, vec![a])
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul, vec![a, b])
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Transpose, vec![a])
    }
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum { axis: None }, vec![a])
    }
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.record(Op::Sum { axis: Some(axis) }, vec![a])
    }
    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Mean { axis: None }, vec![a])
    }
    pub fn mean_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.record(Op::Mean { axis: Some(axis) }, vec![a])
    }
    pub fn max_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Max, vec![a])
    }
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.record(Op::Concat { axis }, inputs.to_vec())
    }
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        self.record(Op::Slice { axis, start, end }, vec![a])
    }
    pub fn reshape(&mut self, a: NodeId, shape: impl Into<Shape>) -> Result<NodeId> {
        let from = self.nodes[a.0].value.shape().clone();
        let target: Shape = shape.into();
        if target.num_elements() != from.num_elements() {
            return Err(Error::shape(format!(
                "reshape: cannot view {:?} as {:?}",
                from.dims(),
                target.dims()
            )));
        }
        let data = self.nodes[a.0].value.data().to_vec();
        let value = TensorValue::new(target, data)?;
        Ok(self.push(Op::Reshape { from }, vec![a], value))
    }
    pub fn broadcast(&mut self, a: NodeId, shape: impl Into<Shape>) -> Result<NodeId> {
        let from = self.nodes[a.0].value.shape().clone();
        let target: Shape = shape.into();
        let value = self.nodes[a.0].value.broadcast_to(&target)?;
        Ok(self.push(Op::Broadcast { from }, vec![a], value))
    }
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.record(Op::Softmax { axis }, vec![a])
    }

    /// Convenience: record a fresh constant and add/mul it in.
    pub fn constant(&mut self, value: TensorValue) -> NodeId {
        self.leaf(value)
    }
    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.leaf(TensorValue::scalar(v))
    }

    /// Recompute every non-leaf value from the recorded ops and check it
    /// matches the stored value bit-exactly.
    pub fn replay_matches(&self) -> Result<bool> {
        for node in &self.nodes {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let in_vals: Vec<&TensorValue> =
                node.inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
            let recomputed = eval_op(&node.op, &in_vals)?;
            if recomputed != node.value {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Reverse sweep from a scalar `root`. Returns one gradient slot per
    /// node; nodes unreachable from the root get a zero gradient.
    pub fn backward(&self, root: NodeId) -> Result<Vec<TensorValue>> {
        let root_val = &self.nodes[root.0].value;
        if root_val.data().len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                root_val.shape().dims()
            )));
        }
        let mut grads: Vec<Option<TensorValue>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(TensorValue::filled(root_val.shape().clone(), 1.0));

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf) {
                let in_vals: Vec<&TensorValue> =
                    node.inputs.iter().map(|&j| &self.nodes[j.0].value).collect();
                let in_grads = backward_op(&node.op, &in_vals, &node.value, &g)?;
                for (input, ig) in node.inputs.iter().zip(in_grads) {
                    match &mut grads[input.0] {
                        Some(acc) => {
                            let summed = acc.zip_broadcast(&ig, |a, b| a + b)?;
                            *acc = summed;
                        }
                        slot @ None => *slot = Some(ig),
                    }
                }
            }
            grads[i] = Some(g);
        }

        Ok(grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.unwrap_or_else(|| TensorValue::zeros(self.nodes[i].value.shape().clone())))
            .collect())
    }
}

fn mat_dims(v: &TensorValue, op: &str) -> Result<(usize, usize)> {
    let d = v.shape().dims();
    if d.len() != 2 {
        return Err(Error::shape(format!("{op}: expected rank-2 tensor, got {:?}", d)));
    }
    Ok((d[0], d[1]))
}

fn matmul_values(a: &TensorValue, b: &TensorValue) -> Result<TensorValue> {
    let (m, k) = mat_dims(a, "matmul")?;
    let (k2, n) = mat_dims(b, "matmul")?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul: inner dims disagree, {:?} x {:?}",
            a.shape().dims(),
            b.shape().dims()
        )));
    }
    let av = ArrayView2::from_shape((m, k), a.data()).expect("checked shape");
    let bv = ArrayView2::from_shape((k2, n), b.data()).expect("checked shape");
    let c = av.dot(&bv);
    let (data, offset) = c.into_raw_vec_and_offset();
    debug_assert_eq!(offset, Some(0));
    TensorValue::new(vec![m, n], data)
}

fn transpose_value(a: &TensorValue) -> Result<TensorValue> {
    let (m, n) = mat_dims(a, "transpose")?;
    let src = a.data();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = src[i * n + j];
        }
    }
    TensorValue::new(vec![n, m], data)
}

/// Splits dims at `axis` into (outer, len, inner) extents.
fn axis_split(dims: &[usize], axis: usize, op: &str) -> Result<(usize, usize, usize)> {
    if axis >= dims.len() {
        return Err(Error::shape(format!("{op}: axis {axis} out of range for {:?}", dims)));
    }
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    Ok((outer, dims[axis], inner))
}

fn reduce_axis(a: &TensorValue, axis: usize, mean: bool, op: &str) -> Result<TensorValue> {
    let dims = a.shape().dims();
    let (outer, n, inner) = axis_split(dims, axis, op)?;
    let mut out_dims = dims.to_vec();
    out_dims.remove(axis);
    let mut out = vec![0.0; outer * inner];
    let src = a.data();
    for o in 0..outer {
        for j in 0..n {
            let base = (o * n + j) * inner;
            let obase = o * inner;
            for i in 0..inner {
                out[obase + i] += src[base + i];
            }
        }
    }
    if mean {
        let scale = 1.0 / n as f64;
        for v in &mut out {
            *v *= scale;
        }
    }
    TensorValue::new(out_dims, out)
}

/// Adjoint of an axis reduction: repeats `g` along the removed axis.
fn expand_axis(g: &TensorValue, in_dims: &[usize], axis: usize, scale: f64) -> Result<TensorValue> {
    let (outer, n, inner) = axis_split(in_dims, axis, "expand")?;
    let src = g.data();
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for j in 0..n {
            let base = (o * n + j) * inner;
            let gbase = o * inner;
            for i in 0..inner {
                out[base + i] = src[gbase + i] * scale;
            }
        }
    }
    TensorValue::new(in_dims.to_vec(), out)
}

fn softmax_value(a: &TensorValue, axis: usize) -> Result<TensorValue> {
    let dims = a.shape().dims();
    let (outer, n, inner) = axis_split(dims, axis, "softmax")?;
    let src = a.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                m = m.max(src[at(j)]);
            }
            let mut z = 0.0;
            for j in 0..n {
                let e = (src[at(j)] - m).exp();
                out[at(j)] = e;
                z += e;
            }
            for j in 0..n {
                out[at(j)] /= z;
            }
        }
    }
    TensorValue::new(dims.to_vec(), out)
}

fn eval_op(op: &Op, inputs: &[&TensorValue]) -> Result<TensorValue> {
    let name = op.name();
    match op {
        Op::Leaf => Err(Error::contract("leaf nodes carry no op")),
        Op::Add => inputs[0].zip_broadcast(inputs[1], |a, b| a + b),
        Op::Sub => inputs[0].zip_broadcast(inputs[1], |a, b| a - b),
        Op::Mul => inputs[0].zip_broadcast(inputs[1], |a, b| a * b),
        Op::Div => inputs[0].zip_broadcast(inputs[1], |a, b| a / b),
        Op::Neg => Ok(inputs[0].map(|v| -v)),
        Op::Exp => Ok(inputs[0].map(f64::exp)),
        Op::Log => {
            if inputs[0].data().iter().any(|&v| v < 0.0) {
                return Err(Error::domain("log of negative input"));
            }
            Ok(inputs[0].map(f64::ln))
        }
        Op::Tanh => Ok(inputs[0].map(f64::tanh)),
        Op::Sigmoid => Ok(inputs[0].map(stable_sigmoid)),
        Op::Softplus => Ok(inputs[0].map(stable_softplus)),
        Op::Square => Ok(inputs[0].map(|v| v * v)),
        Op::Sqrt => {
            if inputs[0].data().iter().any(|&v| v < 0.0) {
                return Err(Error::domain("sqrt of negative input"));
            }
            Ok(inputs[0].map(f64::sqrt))
        }
        Op::MatMul => matmul_values(inputs[0], inputs[1]),
        Op::Transpose => transpose_value(inputs[0]),
        Op::Sum { axis: None } => Ok(TensorValue::scalar(inputs[0].data().iter().sum())),
        Op::Sum { axis: Some(ax) } => reduce_axis(inputs[0], *ax, false, name),
        Op::Mean { axis: None } => {
            let n = inputs[0].data().len();
            if n == 0 {
                return Err(Error::contract("mean of empty tensor"));
            }
            Ok(TensorValue::scalar(inputs[0].data().iter().sum::<f64>() / n as f64))
        }
        Op::Mean { axis: Some(ax) } => reduce_axis(inputs[0], *ax, true, name),
        Op::Max => {
            let m = inputs[0]
                .data()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(TensorValue::scalar(m))
        }
        Op::Concat { axis } => {
            let first = inputs[0].shape().dims();
            let (.., inner0) = axis_split(first, *axis, name)?;
            let mut total_axis = 0;
            for v in inputs {
                let d = v.shape().dims();
                if d.len() != first.len()
                    || d[..*axis] != first[..*axis]
                    || d[*axis + 1..] != first[*axis + 1..]
                {
                    return Err(Error::shape(format!(
                        "concat: incompatible shapes {:?} vs {:?} on axis {axis}",
                        first, d
                    )));
                }
                total_axis += d[*axis];
            }
            let mut out_dims = first.to_vec();
            out_dims[*axis] = total_axis;
            let (outer, _, inner) = axis_split(&out_dims, *axis, name)?;
            debug_assert_eq!(inner, inner0);
            let mut out = vec![0.0; outer * total_axis * inner];
            for o in 0..outer {
                let mut offset = 0;
                for v in inputs {
                    let n_v = v.shape().dims()[*axis];
                    let chunk = n_v * inner;
                    let src = &v.data()[o * chunk..(o + 1) * chunk];
                    let dst = (o * total_axis + offset) * inner;
                    out[dst..dst + chunk].copy_from_slice(src);
                    offset += n_v;
                }
            }
            TensorValue::new(out_dims, out)
        }
        Op::Slice { axis, start, end } => {
            let dims = a_dims(inputs[0]);
            let (outer, n, inner) = axis_split(&dims, *axis, name)?;
            if *start >= *end || *end > n {
                return Err(Error::shape(format!(
                    "slice: range {start}..{end} invalid for axis extent {n}"
                )));
            }
            let len = end - start;
            let mut out_dims = dims.clone();
            out_dims[*axis] = len;
            let mut out = vec![0.0; outer * len * inner];
            let src = inputs[0].data();
            for o in 0..outer {
                let sbase = (o * n + start) * inner;
                let dbase = o * len * inner;
                out[dbase..dbase + len * inner].copy_from_slice(&src[sbase..sbase + len * inner]);
            }
            TensorValue::new(out_dims, out)
        }
        Op::Reshape { .. } | Op::Broadcast { .. } => {
            Err(Error::contract("reshape/broadcast are recorded directly"))
        }
        Op::Softmax { axis } => softmax_value(inputs[0], *axis),
    }
}

fn a_dims(v: &TensorValue) -> Vec<usize> {
    v.shape().dims().to_vec()
}

fn backward_op(
    op: &Op,
    inputs: &[&TensorValue],
    out: &TensorValue,
    g: &TensorValue,
) -> Result<Vec<TensorValue>> {
    let reduce = |full: TensorValue, to: &TensorValue| full.reduce_to_shape(to.shape());
    match op {
        Op::Leaf => Ok(vec![]),
        Op::Add => Ok(vec![reduce(g.clone(), inputs[0])?, reduce(g.clone(), inputs[1])?]),
        Op::Sub => Ok(vec![
            reduce(g.clone(), inputs[0])?,
            reduce(g.map(|v| -v), inputs[1])?,
        ]),
        Op::Mul => {
            let da = g.zip_broadcast(inputs[1], |gv, b| gv * b)?;
            let db = g.zip_broadcast(inputs[0], |gv, a| gv * a)?;
            Ok(vec![reduce(da, inputs[0])?, reduce(db, inputs[1])?])
        }
        Op::Div => {
            let da = g.zip_broadcast(inputs[1], |gv, b| gv / b)?;
            let db_full = g
                .zip_broadcast(inputs[0], |gv, a| gv * a)?
                .zip_broadcast(inputs[1], |num, b| -num / (b * b))?;
            Ok(vec![reduce(da, inputs[0])?, reduce(db_full, inputs[1])?])
        }
        Op::Neg => Ok(vec![g.map(|v| -v)]),
        Op::Exp => Ok(vec![g.zip_broadcast(out, |gv, y| gv * y)?]),
        Op::Log => Ok(vec![g.zip_broadcast(inputs[0], |gv, x| gv / x)?]),
        Op::Tanh => Ok(vec![g.zip_broadcast(out, |gv, y| gv * (1.0 - y * y))?]),
        Op::Sigmoid => Ok(vec![g.zip_broadcast(out, |gv, y| gv * y * (1.0 - y))?]),
        Op::Softplus => Ok(vec![g.zip_broadcast(inputs[0], |gv, x| gv * stable_sigmoid(x))?]),
        Op::Square => Ok(vec![g.zip_broadcast(inputs[0], |gv, x| gv * 2.0 * x)?]),
        Op::Sqrt => Ok(vec![g.zip_broadcast(out, |gv, y| gv / (2.0 * y))?]),
        Op::MatMul => {
            let bt = transpose_value(inputs[1])?;
            let at = transpose_value(inputs[0])?;
            Ok(vec![matmul_values(g, &bt)?, matmul_values(&at, g)?])
        }
        Op::Transpose => Ok(vec![transpose_value(g)?]),
        Op::Sum { axis: None } => {
            Ok(vec![TensorValue::filled(inputs[0].shape().clone(), g.data()[0])])
        }
        Op::Sum { axis: Some(ax) } => Ok(vec![expand_axis(g, inputs[0].shape().dims(), *ax, 1.0)?]),
        Op::Mean { axis: None } => {
            let n = inputs[0].data().len() as f64;
            Ok(vec![TensorValue::filled(inputs[0].shape().clone(), g.data()[0] / n)])
        }
        Op::Mean { axis: Some(ax) } => {
            let n = inputs[0].shape().dims()[*ax] as f64;
            Ok(vec![expand_axis(g, inputs[0].shape().dims(), *ax, 1.0 / n)?])
        }
        Op::Max => {
            // Subgradient: route to the first argmax.
            let mut grad = TensorValue::zeros(inputs[0].shape().clone());
            let target = out.data()[0];
            if let Some(pos) = inputs[0].data().iter().position(|&v| v == target) {
                grad.data_mut()[pos] = g.data()[0];
            }
            Ok(vec![grad])
        }
        Op::Concat { axis } => {
            let mut grads = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for v in inputs {
                let n_v = v.shape().dims()[*axis];
                let sliced = eval_op(
                    &Op::Slice { axis: *axis, start: offset, end: offset + n_v },
                    &[g],
                )?;
                grads.push(sliced);
                offset += n_v;
            }
            Ok(grads)
        }
        Op::Slice { axis, start, end } => {
            let dims = inputs[0].shape().dims().to_vec();
            let (outer, n, inner) = axis_split(&dims, *axis, "slice-backward")?;
            let len = end - start;
            let mut grad = TensorValue::zeros(dims.clone());
            let gd = g.data();
            let out_data = grad.data_mut();
            for o in 0..outer {
                let dbase = (o * n + start) * inner;
                let sbase = o * len * inner;
                out_data[dbase..dbase + len * inner]
                    .copy_from_slice(&gd[sbase..sbase + len * inner]);
            }
            Ok(vec![grad])
        }
        Op::Reshape { from } => {
            Ok(vec![TensorValue::new(from.clone(), g.data().to_vec())?])
        }
        Op::Broadcast { from } => Ok(vec![g.reduce_to_shape(from)?]),
        Op::Softmax { axis } => {
            // dx = y * (g - sum(g*y, axis))
            let gy = g.zip_broadcast(out, |gv, y| gv * y)?;
            let s = reduce_axis(&gy, *axis, false, "softmax-backward")?;
            let dims = out.shape().dims();
            let mut s_dims = dims.to_vec();
            s_dims[*axis] = 1;
            let s_keep = TensorValue::new(s_dims, s.into_data())?;
            let centered = g.zip_broadcast(&s_keep, |gv, sv| gv - sv)?;
            Ok(vec![centered.zip_broadcast(out, |c, y| c * y)?])
        }
    }
}
