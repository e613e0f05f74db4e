//! Critical point classification and extremum persistence pairing.
//!
//! Minimum-saddle pairs come from an ascending sweep over the vertex order
//! with a union-find on the sub-level set: when a vertex joins several
//! components, every component except the one with the oldest (lowest)
//! minimum dies there. Saddle-maximum pairs run the same sweep in descending
//! order. The surviving extremum is paired with the opposite global extremum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{is_edge_offset, ranks, sorted_vertices, vertex_cmp, Ensemble, ScalarFieldGrid};
use crate::union_find::DisjointSet;

/// Largest grid accepted by [`brute_force_pairs`].
pub const ORACLE_VERTEX_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriticalType {
    Minimum,
    Maximum,
    Saddle,
    Regular,
    /// 3D saddle whose lower or upper link has three or more components.
    Degenerate,
}

impl CriticalType {
    pub fn is_saddle_kind(self) -> bool {
        matches!(self, CriticalType::Saddle | CriticalType::Degenerate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairKind {
    MinSaddle,
    SaddleMax,
}

impl PairKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::MinSaddle => "min_saddle",
            PairKind::SaddleMax => "saddle_max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub kind: PairKind,
    pub extremum_vertex: usize,
    /// Merge vertex of the sweep, or the opposite global extremum for the global pair.
    pub paired_vertex: usize,
    pub birth: f64,
    pub death: f64,
    pub persistence_raw: f64,
    /// `persistence_raw` over the ensemble-wide maximum; 0 until normalized.
    pub persistence: f64,
}

impl PersistencePair {
    fn new(kind: PairKind, values: &[f64], extremum: usize, paired: usize) -> Self {
        let (birth, death) = match kind {
            PairKind::MinSaddle => (values[extremum], values[paired]),
            PairKind::SaddleMax => (values[paired], values[extremum]),
        };
        PersistencePair {
            kind,
            extremum_vertex: extremum,
            paired_vertex: paired,
            birth,
            death,
            persistence_raw: death - birth,
            persistence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub member_id: usize,
    pub pairs: Vec<PersistencePair>,
    pub field_range: f64,
    /// Divisor applied by [`normalize_diagrams`], if any.
    pub scale: Option<f64>,
}

impl PersistenceDiagram {
    pub fn is_normalized(&self) -> bool {
        self.scale.is_some()
    }

    pub fn pairs_of(&self, kind: PairKind) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.kind == kind)
    }

    pub fn max_persistence_raw(&self) -> f64 {
        self.pairs.iter().map(|p| p.persistence_raw).fold(0.0, f64::max)
    }

    /// Sets normalized persistences to `persistence_raw / scale`.
    pub fn normalize_by(&mut self, scale: f64) -> Result<()> {
        if !(scale > 0.0) {
            return Err(Error::ZeroPersistence);
        }
        for p in &mut self.pairs {
            p.persistence = p.persistence_raw / scale;
        }
        self.scale = Some(scale);
        Ok(())
    }
}

/// Counts connected components of the neighbors of `v` selected by `keep`,
/// using link edges (pairs of neighbors that are themselves adjacent).
fn link_components(field: &ScalarFieldGrid, v: usize, keep: impl Fn(usize) -> bool) -> usize {
    let ring = field.topology().ring(v);
    let mut ds = DisjointSet::new(ring.len);
    let mut selected = [false; crate::grid::MAX_NEIGHBORS];
    for a in 0..ring.len {
        selected[a] = keep(ring.ids[a]);
    }
    let mut components = selected[..ring.len].iter().filter(|&&s| s).count();
    for a in 0..ring.len {
        if !selected[a] {
            continue;
        }
        for b in (a + 1)..ring.len {
            if !selected[b] {
                continue;
            }
            let (oa, ob) = (ring.offsets[a], ring.offsets[b]);
            let diff = [oa[0] - ob[0], oa[1] - ob[1], oa[2] - ob[2]];
            if is_edge_offset(diff) && ds.find(a) != ds.find(b) {
                ds.union(a, b);
                components -= 1;
            }
        }
    }
    components
}

/// Classifies `v` from the connectivity of its lower and upper links.
pub fn classify_vertex(field: &ScalarFieldGrid, v: usize) -> Result<CriticalType> {
    let count = field.topology().vertex_count();
    if v >= count {
        return Err(Error::VertexOutOfRange { vertex: v, count });
    }
    let values = field.values();
    let lower = link_components(field, v, |u| vertex_cmp(values, u, v).is_lt());
    let upper = link_components(field, v, |u| vertex_cmp(values, u, v).is_gt());
    Ok(match (lower, upper) {
        (0, _) => CriticalType::Minimum,
        (_, 0) => CriticalType::Maximum,
        (1, 1) => CriticalType::Regular,
        (l, u) if field.topology().ndim() == 3 && (l >= 3 || u >= 3) => CriticalType::Degenerate,
        _ => CriticalType::Saddle,
    })
}

/// Classification of every vertex.
pub fn classify_all(field: &ScalarFieldGrid) -> Vec<CriticalType> {
    (0..field.topology().vertex_count())
        .map(|v| classify_vertex(field, v).expect("vertex in range"))
        .collect()
}

/// Vertices in sweep order for `kind`: ascending for minima, descending for maxima.
fn sweep_order(values: &[f64], kind: PairKind) -> Vec<usize> {
    let mut order = sorted_vertices(values);
    if kind == PairKind::SaddleMax {
        order.reverse();
    }
    order
}

/// Extremum-saddle pairs of `field` following the Elder rule.
pub fn extremum_pairs(field: &ScalarFieldGrid, kind: PairKind) -> Vec<PersistencePair> {
    let values = field.values();
    let topo = field.topology();
    let order = sweep_order(values, kind);
    let rank = ranks(&order);
    let mut ds = DisjointSet::new(order.len());
    // oldest[root] = sweep-first vertex of the component
    let mut oldest = vec![usize::MAX; order.len()];
    let mut pairs = Vec::new();
    let mut roots: Vec<usize> = Vec::with_capacity(crate::grid::MAX_NEIGHBORS);

    for (step, &v) in order.iter().enumerate() {
        roots.clear();
        for &u in topo.neighbors_unchecked(v).iter() {
            if rank[u] < step {
                let r = ds.find(u);
                if !roots.contains(&r) {
                    roots.push(r);
                }
            }
        }
        if roots.is_empty() {
            oldest[v] = v;
            continue;
        }
        // survivor first, then the dying components from oldest to youngest
        roots.sort_unstable_by_key(|&r| rank[oldest[r]]);
        let survivor = oldest[roots[0]];
        for &r in &roots[1..] {
            pairs.push(PersistencePair::new(kind, values, oldest[r], v));
        }
        let mut root = ds.union(roots[0], v);
        for &r in &roots[1..] {
            root = ds.union(root, r);
        }
        oldest[root] = survivor;
    }

    let last = *order.last().expect("grid has vertices");
    let root = ds.find(last);
    pairs.push(PersistencePair::new(kind, values, oldest[root], last));
    pairs
}

/// Reference pairing by explicit component tracking: after each vertex of the
/// sweep, the sub-level set is flood-filled from scratch and the set of
/// component representatives (oldest vertex per component) is compared with
/// the previous step. Quadratic, for testing only.
pub fn brute_force_pairs(field: &ScalarFieldGrid, kind: PairKind) -> Result<Vec<PersistencePair>> {
    let topo = field.topology();
    let n = topo.vertex_count();
    if n > ORACLE_VERTEX_LIMIT {
        return Err(Error::OracleGuard { limit: ORACLE_VERTEX_LIMIT, count: n });
    }
    let values = field.values();
    let order = sweep_order(values, kind);
    let rank = ranks(&order);

    let representatives = |step: usize| -> Vec<usize> {
        let mut seen = vec![false; n];
        let mut reps = Vec::new();
        let mut stack = Vec::new();
        for &start in &order[..=step] {
            if seen[start] {
                continue;
            }
            // `start` is the sweep-first vertex of its component
            seen[start] = true;
            stack.push(start);
            while let Some(x) = stack.pop() {
                for &y in topo.neighbors_unchecked(x).iter() {
                    if rank[y] <= step && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            reps.push(start);
        }
        reps
    };

    let mut pairs = Vec::new();
    let mut previous: Vec<usize> = Vec::new();
    for (step, &v) in order.iter().enumerate() {
        let current = representatives(step);
        let mut died: Vec<usize> = previous.iter().copied().filter(|r| !current.contains(r)).collect();
        died.sort_unstable_by_key(|&r| rank[r]);
        for r in died {
            pairs.push(PersistencePair::new(kind, values, r, v));
        }
        previous = current;
    }
    let last = *order.last().expect("grid has vertices");
    debug_assert_eq!(previous.len(), 1);
    pairs.push(PersistencePair::new(kind, values, previous[0], last));
    Ok(pairs)
}

/// Both kinds of extremum pairs, unnormalized.
pub fn compute_diagram(field: &ScalarFieldGrid) -> PersistenceDiagram {
    let mut pairs = extremum_pairs(field, PairKind::MinSaddle);
    pairs.extend(extremum_pairs(field, PairKind::SaddleMax));
    PersistenceDiagram { member_id: field.member_id(), pairs, field_range: field.range(), scale: None }
}

/// One diagram per member, computed in parallel.
pub fn compute_diagrams(ensemble: &Ensemble) -> Vec<PersistenceDiagram> {
    ensemble.members().par_iter().map(compute_diagram).collect()
}

/// Largest raw persistence over all diagrams.
pub fn max_persistence(diagrams: &[PersistenceDiagram]) -> f64 {
    diagrams.iter().map(|d| d.max_persistence_raw()).fold(0.0, f64::max)
}

/// Normalizes every pair by the largest raw persistence found in the whole
/// ensemble, so normalized values are comparable across members.
pub fn normalize_diagrams(mut diagrams: Vec<PersistenceDiagram>) -> Result<Vec<PersistenceDiagram>> {
    if diagrams.iter().all(|d| d.pairs.is_empty()) {
        return Err(Error::EmptyEnsemble);
    }
    let pmax = max_persistence(&diagrams);
    for d in &mut diagrams {
        d.normalize_by(pmax)?;
    }
    Ok(diagrams)
}
