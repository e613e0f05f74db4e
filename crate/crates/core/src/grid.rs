//! Regular-grid scalar fields with implicit Freudenthal connectivity.
//!
//! Vertices are numbered x-fastest, then y, then z. Every quad (2D) is split
//! along its `(i, j) -> (i + 1, j + 1)` diagonal and every cube (3D) into six
//! tetrahedra sharing the main diagonal, so the 1-ring of an interior vertex
//! has 6 (2D) or 14 (3D) members. The triangulation is a flag complex: two
//! neighbors of a vertex span a link edge exactly when they are neighbors of
//! each other, which is what the critical point classification relies on.

use std::cmp::Ordering;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbor offsets of the 2D Freudenthal stencil, in cyclic order around the vertex.
const OFFSETS_2D: [[isize; 3]; 6] = [
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [-1, 0, 0],
    [-1, -1, 0],
    [0, -1, 0],
];

/// Neighbor offsets of the 3D Freudenthal stencil: every nonzero vector of
/// `{0,1}^3` and its negation.
const OFFSETS_3D: [[isize; 3]; 14] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
    [-1, 0, 0],
    [0, -1, 0],
    [0, 0, -1],
    [-1, -1, 0],
    [-1, 0, -1],
    [0, -1, -1],
    [-1, -1, -1],
];

pub const MAX_NEIGHBORS: usize = 14;

/// True when `d` is an edge vector of the Freudenthal triangulation.
pub(crate) fn is_edge_offset(d: [isize; 3]) -> bool {
    let nonzero = d.iter().any(|&c| c != 0);
    let in_unit = d.iter().all(|&c| (-1..=1).contains(&c));
    let same_sign = d.iter().all(|&c| c >= 0) || d.iter().all(|&c| c <= 0);
    nonzero && in_unit && same_sign
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    ndim: usize,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    bbox_diagonal: f64,
}

impl GridTopology {
    /// Builds a 2D or 3D grid. `dims`, `spacing` and `origin` must have the same length.
    pub fn new(dims: &[usize], spacing: &[f64], origin: &[f64]) -> Result<Self> {
        let ndim = dims.len();
        if !(2..=3).contains(&ndim) {
            return Err(Error::BadDimension(ndim));
        }
        if spacing.len() != ndim || origin.len() != ndim {
            return Err(Error::BadDimension(spacing.len().max(origin.len())));
        }
        let mut d = [1usize; 3];
        let mut s = [1.0f64; 3];
        let mut o = [0.0f64; 3];
        for axis in 0..ndim {
            if dims[axis] < 2 {
                return Err(Error::BadExtent { axis, extent: dims[axis] });
            }
            if !(spacing[axis] > 0.0 && spacing[axis].is_finite()) {
                return Err(Error::BadSpacing { axis, spacing: spacing[axis] });
            }
            d[axis] = dims[axis];
            s[axis] = spacing[axis];
            o[axis] = origin[axis];
        }
        let bbox_diagonal = (0..ndim)
            .map(|a| ((d[a] - 1) as f64 * s[a]).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(GridTopology { ndim, dims: d, spacing: s, origin: o, bbox_diagonal })
    }

    /// Unit-spaced grid anchored at the origin.
    pub fn unit(dims: &[usize]) -> Result<Self> {
        let ones = vec![1.0; dims.len()];
        let zeros = vec![0.0; dims.len()];
        Self::new(dims, &ones, &zeros)
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.ndim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.ndim]
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bbox_diagonal
    }

    pub fn vertex_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Grid coordinates `(i, j, k)` of vertex `v` (`k = 0` in 2D).
    #[inline]
    pub fn delinearize(&self, v: usize) -> [usize; 3] {
        let i = v % self.dims[0];
        let rest = v / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn linearize(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Physical position of vertex `v`.
    pub fn position(&self, v: usize) -> [f64; 3] {
        let c = self.delinearize(v);
        let mut p = [0.0; 3];
        for a in 0..self.ndim {
            p[a] = self.origin[a] + c[a] as f64 * self.spacing[a];
        }
        p
    }

    /// Squared physical distance between two vertices divided by the squared bbox diagonal.
    pub fn normalized_sq_distance(&self, u: usize, v: usize) -> f64 {
        let (a, b) = (self.delinearize(u), self.delinearize(v));
        let mut sum = 0.0;
        for axis in 0..self.ndim {
            let d = (a[axis] as f64 - b[axis] as f64) * self.spacing[axis];
            sum += d * d;
        }
        sum / (self.bbox_diagonal * self.bbox_diagonal)
    }

    fn offsets(&self) -> &'static [[isize; 3]] {
        if self.ndim == 2 {
            &OFFSETS_2D
        } else {
            &OFFSETS_3D
        }
    }

    /// 1-ring of `v` with the offset of each neighbor, clipped at the boundary.
    #[inline]
    pub(crate) fn ring(&self, v: usize) -> Ring {
        let c = self.delinearize(v);
        let mut ring = Ring { ids: [0; MAX_NEIGHBORS], offsets: [[0; 3]; MAX_NEIGHBORS], len: 0 };
        'outer: for off in self.offsets() {
            let mut n = [0usize; 3];
            for a in 0..3 {
                let x = c[a] as isize + off[a];
                if x < 0 || x >= self.dims[a] as isize {
                    continue 'outer;
                }
                n[a] = x as usize;
            }
            ring.ids[ring.len] = self.linearize(n);
            ring.offsets[ring.len] = *off;
            ring.len += 1;
        }
        ring
    }

    /// Neighbors of `v` in the implicit triangulation.
    pub fn neighbors(&self, v: usize) -> Result<Neighbors> {
        let count = self.vertex_count();
        if v >= count {
            return Err(Error::VertexOutOfRange { vertex: v, count });
        }
        Ok(self.neighbors_unchecked(v))
    }

    #[inline]
    pub(crate) fn neighbors_unchecked(&self, v: usize) -> Neighbors {
        let ring = self.ring(v);
        Neighbors { ids: ring.ids, len: ring.len }
    }
}

/// Neighbor list stored inline.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors {
    ids: [usize; MAX_NEIGHBORS],
    len: usize,
}

impl Deref for Neighbors {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.ids[..self.len]
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ring {
    pub ids: [usize; MAX_NEIGHBORS],
    pub offsets: [[isize; 3]; MAX_NEIGHBORS],
    pub len: usize,
}

/// Strict total order on vertices: `(f(u), u) < (f(v), v)` lexicographically.
#[inline]
pub fn vertex_cmp(values: &[f64], u: usize, v: usize) -> Ordering {
    match values[u].partial_cmp(&values[v]) {
        Some(Ordering::Equal) | None => u.cmp(&v),
        Some(o) => o,
    }
}

/// Vertex ids sorted ascending under [`vertex_cmp`].
pub fn sorted_vertices(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| vertex_cmp(values, a, b));
    order
}

/// `rank[v]` = position of `v` in the ascending vertex order.
pub(crate) fn ranks(order: &[usize]) -> Vec<usize> {
    let mut rank = vec![0; order.len()];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    rank
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldGrid {
    topology: GridTopology,
    values: Vec<f64>,
    member_id: usize,
}

impl ScalarFieldGrid {
    pub fn new(topology: GridTopology, values: Vec<f64>, member_id: usize) -> Result<Self> {
        let expected = topology.vertex_count();
        if values.len() != expected {
            return Err(Error::FieldSize { expected, got: values.len() });
        }
        if let Some(v) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(v));
        }
        Ok(ScalarFieldGrid { topology, values, member_id })
    }

    /// Builds a field by evaluating `f` at every vertex position.
    pub fn from_fn(topology: GridTopology, member_id: usize, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..topology.vertex_count()).map(|v| f(topology.position(v))).collect();
        Self::new(topology, values, member_id)
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn member_id(&self) -> usize {
        self.member_id
    }

    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn with_member_id(mut self, id: usize) -> Self {
        self.member_id = id;
        self
    }

    /// Pointwise `a * f + b`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        let values = self.values.iter().map(|&x| a * x + b).collect();
        Self::new(self.topology, values, self.member_id)
    }

    pub fn negated(&self) -> Self {
        ScalarFieldGrid {
            topology: self.topology,
            values: self.values.iter().map(|x| -x).collect(),
            member_id: self.member_id,
        }
    }

    /// Compares two vertices under the field's total order.
    pub fn total_order(&self, u: usize, v: usize) -> Ordering {
        vertex_cmp(&self.values, u, v)
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = min_max(&self.values);
        hi - lo
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    topology: GridTopology,
    members: Vec<ScalarFieldGrid>,
}

impl Ensemble {
    /// Member ids are reassigned to list positions.
    pub fn new(members: Vec<ScalarFieldGrid>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let topology = first.topology;
        if members.iter().any(|m| m.topology != topology) {
            return Err(Error::TopologyMismatch);
        }
        let members = members.into_iter().enumerate().map(|(i, m)| m.with_member_id(i)).collect();
        Ok(Ensemble { topology, members })
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn members(&self) -> &[ScalarFieldGrid] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, id: usize) -> Result<&ScalarFieldGrid> {
        self.members.get(id).ok_or(Error::UnknownMember(id))
    }

    /// New ensemble made of the given members, renumbered from 0.
    pub fn subset(&self, ids: &[usize]) -> Result<Ensemble> {
        let members = ids.iter().map(|&i| self.member(i).cloned()).collect::<Result<Vec<_>>>()?;
        Ensemble::new(members)
    }
}
