//! Strided multidimensional array model.
//!
//! A [`Shape`] is an ordered list of `(extent, stride)` pairs stored
//! innermost-first: dimension 0 varies fastest under row-major construction
//! and the highest dimension is the one consumed by the higher-order
//! functions. Strides count elements, not bytes.
//!
//! The three layout operations only rewrite the descriptor list, they never
//! move data:
//!
//! * [`Shape::subdiv`] splits dimension `d` into an inner block of `b`
//!   elements and an outer dimension of `e_d / b` blocks,
//! * [`Shape::flatten`] merges dimensions `d` and `d + 1` back together,
//! * [`Shape::flip`] swaps two dimensions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("invalid extent {0}: extents must be at least 1")]
    InvalidExtent(i64),
    #[error("invalid stride {0}: strides must be at least 1")]
    InvalidStride(i64),
    #[error("block size {block} does not divide extent {extent} of dimension {dim}")]
    NotDivisible { dim: usize, block: usize, extent: usize },
    #[error("dimension {dim} out of range for rank {rank}")]
    DimOutOfRange { dim: usize, rank: usize },
    #[error("index {index} out of range for extent {extent} (dimension {dim})")]
    IndexOutOfRange { dim: usize, index: usize, extent: usize },
    #[error("index has {got} coordinates, shape has rank {rank}")]
    RankMismatch { got: usize, rank: usize },
    #[error("dimensions {dim} and {next} are not contiguous: stride {stride} != {expected}")]
    NotFlattenable { dim: usize, next: usize, stride: usize, expected: usize },
    #[error("shape {0} maps two indices to the same offset")]
    Aliasing(String),
    #[error("view needs {needed} elements but the buffer holds {len}")]
    BufferTooSmall { needed: usize, len: usize },
    #[error("cannot slice a scalar view")]
    ScalarSlice,
    #[error("malformed shape syntax: {0}")]
    Syntax(String),
}

pub type Result<T, E = LayoutError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dim {
    pub extent: usize,
    pub stride: usize,
}

impl Dim {
    pub fn new(extent: usize, stride: usize) -> Result<Self> {
        if extent == 0 {
            return Err(LayoutError::InvalidExtent(0));
        }
        if stride == 0 {
            return Err(LayoutError::InvalidStride(0));
        }
        Ok(Dim { extent, stride })
    }
}

/// Ordered dimension descriptors, innermost first. The empty shape is a scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Shape {
    dims: Vec<Dim>,
}

/// Above this element count the exact aliasing check is skipped when the
/// cheap sorted-stride test already fails.
const EXACT_ALIAS_LIMIT: usize = 1 << 22;

impl Shape {
    pub fn scalar() -> Self {
        Shape { dims: Vec::new() }
    }

    /// Validating constructor: rejects zero extents/strides and aliasing layouts.
    pub fn new(dims: Vec<(usize, usize)>) -> Result<Self> {
        let dims = dims
            .into_iter()
            .map(|(e, s)| Dim::new(e, s))
            .collect::<Result<Vec<_>>>()?;
        let shape = Shape { dims };
        if !shape.is_injective() {
            return Err(LayoutError::Aliasing(shape.to_string()));
        }
        Ok(shape)
    }

    /// Row-major layout from innermost-first extents.
    pub fn row_major(extents: &[usize]) -> Result<Self> {
        let mut stride = 1usize;
        let mut dims = Vec::with_capacity(extents.len());
        for &e in extents {
            if e == 0 {
                return Err(LayoutError::InvalidExtent(0));
            }
            dims.push(Dim { extent: e, stride });
            stride *= e;
        }
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.extent).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.dims.iter().map(|d| d.extent).product()
    }

    /// Largest linear offset reachable through this shape.
    pub fn max_offset(&self) -> usize {
        self.dims.iter().map(|d| (d.extent - 1) * d.stride).sum()
    }

    pub fn outermost(&self) -> Option<Dim> {
        self.dims.last().copied()
    }

    /// Shape with the outermost dimension removed.
    pub fn inner(&self) -> Shape {
        let mut dims = self.dims.clone();
        dims.pop();
        Shape { dims }
    }

    /// `self` with `outer` appended as the new outermost dimension.
    pub fn with_outer(&self, outer: Dim) -> Shape {
        let mut dims = self.dims.clone();
        dims.push(outer);
        Shape { dims }
    }

    pub fn is_injective(&self) -> bool {
        let mut live: Vec<Dim> = self.dims.iter().copied().filter(|d| d.extent > 1).collect();
        live.sort_by_key(|d| d.stride);
        let mut reach = 0usize;
        let mut nested = true;
        for d in &live {
            if d.stride <= reach {
                nested = false;
                break;
            }
            reach += (d.extent - 1) * d.stride;
        }
        if nested {
            return true;
        }
        let n = self.num_elements();
        if n > EXACT_ALIAS_LIMIT {
            return false;
        }
        let mut seen = HashSet::with_capacity(n);
        self.offsets().all(|o| seen.insert(o))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d >= self.rank() {
            Err(LayoutError::DimOutOfRange { dim: d, rank: self.rank() })
        } else {
            Ok(())
        }
    }

    pub fn subdiv(&self, d: usize, b: usize) -> Result<Shape> {
        self.check_dim(d)?;
        let Dim { extent, stride } = self.dims[d];
        if b == 0 || extent % b != 0 {
            return Err(LayoutError::NotDivisible { dim: d, block: b, extent });
        }
        let mut dims = Vec::with_capacity(self.rank() + 1);
        dims.extend_from_slice(&self.dims[..d]);
        dims.push(Dim { extent: b, stride });
        dims.push(Dim { extent: extent / b, stride: b * stride });
        dims.extend_from_slice(&self.dims[d + 1..]);
        Ok(Shape { dims })
    }

    pub fn flatten(&self, d: usize) -> Result<Shape> {
        if d + 1 >= self.rank() {
            return Err(LayoutError::DimOutOfRange { dim: d + 1, rank: self.rank() });
        }
        let lo = self.dims[d];
        let hi = self.dims[d + 1];
        if hi.stride != lo.extent * lo.stride {
            return Err(LayoutError::NotFlattenable {
                dim: d,
                next: d + 1,
                stride: hi.stride,
                expected: lo.extent * lo.stride,
            });
        }
        let mut dims = Vec::with_capacity(self.rank() - 1);
        dims.extend_from_slice(&self.dims[..d]);
        dims.push(Dim { extent: lo.extent * hi.extent, stride: lo.stride });
        dims.extend_from_slice(&self.dims[d + 2..]);
        Ok(Shape { dims })
    }

    pub fn flip(&self, d1: usize, d2: usize) -> Result<Shape> {
        self.check_dim(d1)?;
        self.check_dim(d2)?;
        let mut dims = self.dims.clone();
        dims.swap(d1, d2);
        Ok(Shape { dims })
    }

    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.rank() {
            return Err(LayoutError::RankMismatch { got: idx.len(), rank: self.rank() });
        }
        let mut off = 0;
        for (k, (&i, d)) in idx.iter().zip(&self.dims).enumerate() {
            if i >= d.extent {
                return Err(LayoutError::IndexOutOfRange { dim: k, index: i, extent: d.extent });
            }
            off += i * d.stride;
        }
        Ok(off)
    }

    /// All reachable offsets in logical order (dimension 0 fastest).
    pub fn offsets(&self) -> Offsets<'_> {
        Offsets {
            shape: self,
            idx: vec![0; self.rank()],
            offset: 0,
            done: false,
        }
    }
}

pub struct Offsets<'a> {
    shape: &'a Shape,
    idx: Vec<usize>,
    offset: usize,
    done: bool,
}

impl Iterator for Offsets<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.done {
            return None;
        }
        let current = self.offset;
        let dims = self.shape.dims();
        let mut k = 0;
        loop {
            if k == dims.len() {
                self.done = true;
                break;
            }
            self.idx[k] += 1;
            self.offset += dims[k].stride;
            if self.idx[k] < dims[k].extent {
                break;
            }
            self.offset -= dims[k].stride * dims[k].extent;
            self.idx[k] = 0;
            k += 1;
        }
        Some(current)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({},{})", d.extent, d.stride)?;
        }
        write!(f, ")")
    }
}

impl FromStr for Shape {
    type Err = LayoutError;

    /// Parses `((e0,s0),(e1,s1),...)`; whitespace is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| LayoutError::Syntax(s.to_string()))?;
        if body.is_empty() {
            return Ok(Shape::scalar());
        }
        let mut pairs = Vec::new();
        let mut rest = body;
        loop {
            let inner = rest
                .strip_prefix('(')
                .ok_or_else(|| LayoutError::Syntax(s.to_string()))?;
            let close = inner.find(')').ok_or_else(|| LayoutError::Syntax(s.to_string()))?;
            let (e, st) = inner[..close]
                .split_once(',')
                .ok_or_else(|| LayoutError::Syntax(s.to_string()))?;
            let e: i64 = e.parse().map_err(|_| LayoutError::Syntax(s.to_string()))?;
            let st: i64 = st.parse().map_err(|_| LayoutError::Syntax(s.to_string()))?;
            if e < 1 {
                return Err(LayoutError::InvalidExtent(e));
            }
            if st < 1 {
                return Err(LayoutError::InvalidStride(st));
            }
            pairs.push((e as usize, st as usize));
            rest = &inner[close + 1..];
            if rest.is_empty() {
                break;
            }
            rest = rest
                .strip_prefix(',')
                .ok_or_else(|| LayoutError::Syntax(s.to_string()))?;
        }
        Shape::new(pairs)
    }
}

/// One step of a layout chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutOp {
    Subdiv { dim: usize, block: usize },
    Flatten { dim: usize },
    Flip { a: usize, b: usize },
}

impl LayoutOp {
    pub fn apply(&self, s: &Shape) -> Result<Shape> {
        match *self {
            LayoutOp::Subdiv { dim, block } => s.subdiv(dim, block),
            LayoutOp::Flatten { dim } => s.flatten(dim),
            LayoutOp::Flip { a, b } => s.flip(a, b),
        }
    }

    /// Like [`LayoutOp::apply`], but a flatten of dims whose strides do not
    /// merge applies to a contiguous copy of the array instead.
    pub fn apply_logical(&self, s: &Shape) -> Result<Shape> {
        match self.apply(s) {
            Err(LayoutError::NotFlattenable { .. }) => self.apply(&Shape::row_major(&s.extents())?),
            r => r,
        }
    }

    /// Highest dimension index the op touches (before application).
    pub fn max_dim(&self) -> usize {
        match *self {
            LayoutOp::Subdiv { dim, .. } => dim,
            LayoutOp::Flatten { dim } => dim + 1,
            LayoutOp::Flip { a, b } => a.max(b),
        }
    }
}

impl fmt::Display for LayoutOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayoutOp::Subdiv { dim, block } => write!(f, "subdiv {dim} {block}"),
            LayoutOp::Flatten { dim } => write!(f, "flatten {dim}"),
            LayoutOp::Flip { a, b } => write!(f, "flip {a} {b}"),
        }
    }
}

/// Applies a chain, first element first.
pub fn apply_chain(shape: &Shape, chain: &[LayoutOp]) -> Result<Shape> {
    chain.iter().try_fold(shape.clone(), |s, op| op.apply(&s))
}

/// Formats a chain as nested application, e.g. `flip 1 2 (subdiv 0 2 A)`.
pub fn format_chain(name: &str, chain: &[LayoutOp]) -> String {
    chain.iter().fold(name.to_string(), |acc, op| {
        if acc.contains(' ') {
            format!("{op} ({acc})")
        } else {
            format!("{op} {acc}")
        }
    })
}

/// A shape laid over a shared linear buffer.
#[derive(Debug, Clone)]
pub struct View<T> {
    buffer: Arc<[T]>,
    offset: usize,
    shape: Shape,
}

impl<T: Copy> View<T> {
    pub fn new(buffer: Arc<[T]>, offset: usize, shape: Shape) -> Result<Self> {
        let needed = offset + shape.max_offset() + 1;
        if needed > buffer.len() {
            return Err(LayoutError::BufferTooSmall { needed, len: buffer.len() });
        }
        Ok(View { buffer, offset, shape })
    }

    /// Contiguous row-major view over freshly owned data.
    pub fn from_vec(data: Vec<T>, extents: &[usize]) -> Result<Self> {
        let shape = Shape::row_major(extents)?;
        View::new(data.into(), 0, shape)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn buffer(&self) -> &Arc<[T]> {
        &self.buffer
    }

    pub fn with_shape(&self, shape: Shape) -> Result<Self> {
        View::new(self.buffer.clone(), self.offset, shape)
    }

    /// Applies `op`, copying into row-major order first when a flatten
    /// cannot be expressed by strides alone.
    pub fn relayout(&self, op: LayoutOp) -> Result<View<T>> {
        match op.apply(&self.shape) {
            Ok(shape) => self.with_shape(shape),
            Err(LayoutError::NotFlattenable { .. }) => {
                let dense = View::from_vec(self.to_vec(), &self.shape.extents())?;
                let shape = op.apply(&dense.shape)?;
                dense.with_shape(shape)
            }
            Err(e) => Err(e),
        }
    }

    pub fn outer_slice(&self, i: usize) -> Result<View<T>> {
        let outer = self.shape.outermost().ok_or(LayoutError::ScalarSlice)?;
        if i >= outer.extent {
            return Err(LayoutError::IndexOutOfRange {
                dim: self.shape.rank() - 1,
                index: i,
                extent: outer.extent,
            });
        }
        Ok(View {
            buffer: self.buffer.clone(),
            offset: self.offset + i * outer.stride,
            shape: self.shape.inner(),
        })
    }

    pub fn get(&self, idx: &[usize]) -> Result<T> {
        Ok(self.buffer[self.offset + self.shape.linear_index(idx)?])
    }

    /// Element of a rank-0 view.
    pub fn scalar(&self) -> Option<T> {
        self.shape.is_scalar().then(|| self.buffer[self.offset])
    }

    /// Elements in logical order (dimension 0 fastest).
    pub fn to_vec(&self) -> Vec<T> {
        self.shape.offsets().map(|o| self.buffer[self.offset + o]).collect()
    }
}
