//! Block-structured vectors, box constraint sets, Euclidean projection and
//! the linear output map `y = Cx`.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{check_len, spectral_norm};
use crate::{Error, Result};

/// Partition of the `n` inputs and `m` outputs across `N` agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutDims", into = "LayoutDims")]
pub struct BlockLayout {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    input_offsets: Vec<usize>,
    output_offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct LayoutDims {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
}

impl TryFrom<LayoutDims> for BlockLayout {
    type Error = Error;
    fn try_from(d: LayoutDims) -> Result<Self> {
        BlockLayout::new(d.input_dims, d.output_dims)
    }
}

impl From<BlockLayout> for LayoutDims {
    fn from(l: BlockLayout) -> Self {
        LayoutDims {
            input_dims: l.input_dims,
            output_dims: l.output_dims,
        }
    }
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    let mut out = Vec::with_capacity(dims.len() + 1);
    out.push(0);
    for d in dims {
        acc += d;
        out.push(acc);
    }
    out
}

impl BlockLayout {
    pub fn new(input_dims: Vec<usize>, output_dims: Vec<usize>) -> Result<Self> {
        if input_dims.is_empty() {
            return Err(Error::InvalidLayout("at least one agent is required".into()));
        }
        if input_dims.len() != output_dims.len() {
            return Err(Error::InvalidLayout(format!(
                "{} input blocks but {} output blocks",
                input_dims.len(),
                output_dims.len()
            )));
        }
        if let Some(i) = input_dims.iter().position(|d| *d == 0) {
            return Err(Error::InvalidLayout(format!("agent {i} has an empty input block")));
        }
        if let Some(i) = output_dims.iter().position(|d| *d == 0) {
            return Err(Error::InvalidLayout(format!("agent {i} has an empty output block")));
        }
        Ok(Self {
            input_offsets: offsets(&input_dims),
            output_offsets: offsets(&output_dims),
            input_dims,
            output_dims,
        })
    }

    /// `agents` agents each owning `n_i` inputs and `m_i` outputs.
    pub fn uniform(agents: usize, n_i: usize, m_i: usize) -> Result<Self> {
        Self::new(vec![n_i; agents], vec![m_i; agents])
    }

    pub fn agents(&self) -> usize {
        self.input_dims.len()
    }

    pub fn n(&self) -> usize {
        *self.input_offsets.last().unwrap()
    }

    pub fn m(&self) -> usize {
        *self.output_offsets.last().unwrap()
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn input_range(&self, i: usize) -> Range<usize> {
        self.input_offsets[i]..self.input_offsets[i + 1]
    }

    pub fn output_range(&self, i: usize) -> Range<usize> {
        self.output_offsets[i]..self.output_offsets[i + 1]
    }

    pub fn check_agent(&self, i: usize) -> Result<()> {
        if i < self.agents() {
            Ok(())
        } else {
            Err(Error::InvalidAgent {
                index: i,
                agents: self.agents(),
            })
        }
    }
}

/// Axis-aligned box `{x : lower <= x <= upper}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_len("box bounds", lower.len(), upper.len())?;
        for (index, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite(format!("box bound {index}")));
            }
            if lo > hi {
                return Err(Error::EmptyBox {
                    index,
                    lower: *lo,
                    upper: *hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lower), DVector::from_element(n, upper))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Index and value of the first coordinate outside the box.
    pub fn first_violation(&self, v: &DVector<f64>) -> Option<(usize, f64)> {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .position(|(x, (lo, hi))| !(*lo <= *x && *x <= *hi))
            .map(|j| (j, v[j]))
    }

    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("project_box", self.dim(), v.len())?;
        let mut out = v.clone();
        self.clamp_range(0, out.as_mut_slice());
        Ok(out)
    }

    /// Clamps `v` onto the coordinates `offset..offset + v.len()` of the box.
    pub fn clamp_range(&self, offset: usize, v: &mut [f64]) {
        for (j, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lower[offset + j], self.upper[offset + j]);
        }
    }

    /// Corner-to-corner distance, which is the diameter of a box.
    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    pub fn restrict(&self, range: Range<usize>) -> BoxSet {
        BoxSet {
            lower: self.lower.rows(range.start, range.len()).into_owned(),
            upper: self.upper.rows(range.start, range.len()).into_owned(),
        }
    }

    /// Maps `u ∈ [0,1]^n` affinely onto the box.
    pub fn lerp(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|j| self.lower[j] + u[j] * (self.upper[j] - self.lower[j])),
        )
    }
}

/// Componentwise clamp of `v` onto `set`.
pub fn project_box(v: &DVector<f64>, set: &BoxSet) -> Result<DVector<f64>> {
    set.project(v)
}

pub fn diameter(set: &BoxSet) -> f64 {
    set.diameter()
}

/// Per-block Euclidean projection onto `X_i`.
///
/// Implementations must satisfy the orthogonal-projection inequality
/// `(z - v)ᵀ(z - w) <= 0` for `z = Π(v)` and every `w` in the block set.
/// The box projector is the only implementation shipped; the trait is the
/// hook for other polyhedral block sets.
pub trait BlockProjector: Send + Sync {
    fn project_block(&self, block: usize, v: &mut [f64]);
}

/// Projection onto the blocks of a [`BoxSet`].
#[derive(Clone, Debug)]
pub struct BoxProjector {
    set: BoxSet,
    layout: BlockLayout,
}

impl BoxProjector {
    pub fn new(set: BoxSet, layout: BlockLayout) -> Result<Self> {
        check_len("box projector", layout.n(), set.dim())?;
        Ok(Self { set, layout })
    }

    pub fn shared(set: BoxSet, layout: BlockLayout) -> Result<Arc<dyn BlockProjector>> {
        Ok(Arc::new(Self::new(set, layout)?))
    }
}

impl BlockProjector for BoxProjector {
    fn project_block(&self, block: usize, v: &mut [f64]) {
        let range = self.layout.input_range(block);
        debug_assert_eq!(range.len(), v.len());
        self.set.clamp_range(range.start, v);
    }
}

/// The output matrix `C` with cached column blocks `C_i`, row blocks
/// `C_{i*}` and spectral norm.
#[derive(Clone, Debug)]
pub struct OutputMap {
    matrix: DMatrix<f64>,
    col_blocks: Vec<DMatrix<f64>>,
    row_blocks: Vec<DMatrix<f64>>,
    norm: f64,
}

impl OutputMap {
    pub fn new(matrix: DMatrix<f64>, layout: &BlockLayout) -> Result<Self> {
        check_len("output map rows", layout.m(), matrix.nrows())?;
        check_len("output map columns", layout.n(), matrix.ncols())?;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output map".into()));
        }
        let col_blocks = (0..layout.agents())
            .map(|i| {
                let r = layout.input_range(i);
                matrix.columns(r.start, r.len()).into_owned()
            })
            .collect();
        let row_blocks = (0..layout.agents())
            .map(|i| {
                let r = layout.output_range(i);
                matrix.rows(r.start, r.len()).into_owned()
            })
            .collect();
        let norm = spectral_norm(&matrix);
        Ok(Self {
            matrix,
            col_blocks,
            row_blocks,
            norm,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `C_i`, the `m × n_i` column block acting on agent `i`'s inputs.
    pub fn col_block(&self, i: usize) -> &DMatrix<f64> {
        &self.col_blocks[i]
    }

    /// `C_{i*}`, the `m_i × n` row block producing agent `i`'s outputs.
    pub fn row_block(&self, i: usize) -> &DMatrix<f64> {
        &self.row_blocks[i]
    }

    /// Cached spectral norm `‖C‖`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
}
