//! Dense n-dimensional f64 arrays with row-major storage and
//! numpy-style trailing-dimension broadcasting.

use crate::error::{Error, Result};

/// Ordered list of positive extents. Rank 0 is a scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn num_elements(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    /// Row-major strides, in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![0; self.0.len()];
        let mut acc = 1;
        for i in (0..self.0.len()).rev() {
            strides[i] = acc;
            acc *= self.0[i];
        }
        strides
    }

    /// Broadcast shape of `self` and `other` with trailing alignment,
    /// or an error when some aligned pair of extents disagrees and
    /// neither is 1.
    pub fn broadcast_with(&self, other: &Shape) -> Result<Shape> {
        let rank = self.rank().max(other.rank());
        let mut dims = vec![0; rank];
        for i in 0..rank {
            let a = dim_from_right(&self.0, rank - 1 - i);
            let b = dim_from_right(&other.0, rank - 1 - i);
            dims[i] = if a == b {
                a
            } else if a == 1 {
                b
            } else if b == 1 {
                a
            } else {
                return Err(Error::shape(format!(
                    "cannot broadcast shapes {:?} and {:?}",
                    self.0, other.0
                )));
            };
        }
        Ok(Shape(dims))
    }
}

fn dim_from_right(dims: &[usize], from_right: usize) -> usize {
    if from_right < dims.len() {
        dims[dims.len() - 1 - from_right]
    } else {
        1
    }
}

impl From<Vec<usize>> for Shape {
    fn from(dims: Vec<usize>) -> Self {
        Shape(dims)
    }
}

impl From<&[usize]> for Shape {
    fn from(dims: &[usize]) -> Self {
        Shape(dims.to_vec())
    }
}

/// A dense tensor: shape plus flat row-major f64 data.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    shape: Shape,
    data: Vec<f64>,
}

impl TensorValue {
    pub fn new(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.num_elements() != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape.dims(),
                shape.num_elements(),
                data.len()
            )));
        }
        Ok(TensorValue { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        TensorValue { shape: Shape::scalar(), data: vec![v] }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        let shape = shape.into();
        let n = shape.num_elements();
        TensorValue { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: impl Into<Shape>, v: f64) -> Self {
        let shape = shape.into();
        let n = shape.num_elements();
        TensorValue { shape, data: vec![v; n] }
    }

    /// Row-major matrix constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        TensorValue::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        TensorValue { shape: Shape(vec![n]), data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = TensorValue::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.rank() == 0
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::contract("expected a scalar tensor"))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TensorValue {
        TensorValue {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combine with trailing-alignment broadcasting.
    pub fn zip_broadcast(&self, other: &TensorValue, f: impl Fn(f64, f64) -> f64) -> Result<TensorValue> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(TensorValue { shape: self.shape.clone(), data });
        }
        let out_shape = self.shape.broadcast_with(&other.shape)?;
        let n = out_shape.num_elements();
        let out_dims = out_shape.dims().to_vec();
        let a_idx = BroadcastIndexer::new(&self.shape, &out_dims);
        let b_idx = BroadcastIndexer::new(&other.shape, &out_dims);
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; out_dims.len()];
        for _ in 0..n {
            data.push(f(self.data[a_idx.offset(&idx)], other.data[b_idx.offset(&idx)]));
            increment_index(&mut idx, &out_dims);
        }
        Ok(TensorValue { shape: out_shape, data })
    }

    /// Materialize `self` at a larger broadcast-compatible shape.
    pub fn broadcast_to(&self, target: &Shape) -> Result<TensorValue> {
        if &self.shape == target {
            return Ok(self.clone());
        }
        let joined = self.shape.broadcast_with(target)?;
        if &joined != target {
            return Err(Error::shape(format!(
                "cannot broadcast {:?} to {:?}",
                self.shape.dims(),
                target.dims()
            )));
        }
        let dims = target.dims().to_vec();
        let indexer = BroadcastIndexer::new(&self.shape, &dims);
        let n = target.num_elements();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(self.data[indexer.offset(&idx)]);
            increment_index(&mut idx, &dims);
        }
        Ok(TensorValue { shape: target.clone(), data })
    }

    /// Sum-reduce a gradient in broadcast shape back down to `target`,
    /// the adjoint of `broadcast_to`.
    pub fn reduce_to_shape(&self, target: &Shape) -> Result<TensorValue> {
        if &self.shape == target {
            return Ok(self.clone());
        }
        let dims = self.shape.dims().to_vec();
        let indexer = BroadcastIndexer::new(target, &dims);
        let mut out = TensorValue::zeros(target.clone());
        let mut idx = vec![0usize; dims.len()];
        for &v in &self.data {
            out.data[indexer.offset(&idx)] += v;
            increment_index(&mut idx, &dims);
        }
        Ok(out)
    }
}

/// Maps a multi-index in the broadcast output shape to a flat offset in
/// a (smaller) input tensor, treating broadcast axes as stride 0.
struct BroadcastIndexer {
    strides: Vec<usize>,
}

impl BroadcastIndexer {
    fn new(shape: &Shape, out_dims: &[usize]) -> Self {
        let in_dims = shape.dims();
        let in_strides = shape.strides();
        let mut strides = vec![0usize; out_dims.len()];
        let offset = out_dims.len() - in_dims.len();
        for i in 0..in_dims.len() {
            strides[offset + i] = if in_dims[i] == 1 { 0 } else { in_strides[i] };
        }
        BroadcastIndexer { strides }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }
}

fn increment_index(idx: &mut [usize], dims: &[usize]) {
    for i in (0..dims.len()).rev() {
        idx[i] += 1;
        if idx[i] < dims[i] {
            return;
        }
        idx[i] = 0;
    }
}
