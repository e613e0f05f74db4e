//! Comparison method: cluster persistent extrema of the training members
//! directly in the plane and use each cluster's convex hull as its region.

use serde::{Deserialize, Serialize};

use crate::atlas::{check_threshold, persistent_extrema, MemberPrediction, PredictedExtremum, PredictionReport};
use crate::error::{Error, Result};
use crate::grid::{Ensemble, GridTopology, ScalarFieldGrid};
use crate::hull::{ConvexHull, Point};
use crate::mandatory::ExtremumKind;
use crate::map_space::{
    generalized_eigs, knn_graph, laplacian, lloyd_medoids, raw_distances, suggest_k, DistanceMatrix, DEFAULT_KNN,
};
use crate::pmap::ExtremumKinds;
use crate::topology::compute_diagram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullRegion {
    pub kind: ExtremumKind,
    pub region_id: i32,
    /// Training extrema the hull was built from.
    pub points: Vec<Point>,
    pub hull: ConvexHull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullBaseline {
    pub topology: GridTopology,
    pub kinds: ExtremumKinds,
    pub regions: Vec<HullRegion>,
    /// Containment tolerance: half a grid cell.
    pub eps: f64,
}

impl HullBaseline {
    pub fn region_at(&self, kind: ExtremumKind, p: Point) -> Option<i32> {
        self.regions.iter().find(|r| r.kind == kind && r.hull.contains(p, self.eps)).map(|r| r.region_id)
    }

    pub fn cluster_count(&self, kind: ExtremumKind) -> usize {
        self.regions.iter().filter(|r| r.kind == kind).count()
    }
}

fn planar(topology: &GridTopology, v: usize) -> Point {
    let p = topology.position(v);
    [p[0], p[1]]
}

/// Spectral clustering of points on their Euclidean distances with the
/// eigengap-suggested cluster count.
pub fn cluster_points(points: &[Point], seed: u64) -> Result<Vec<usize>> {
    match points.len() {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![0]),
        _ => {}
    }
    let n = points.len();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let matrix = DistanceMatrix::from_raw(n, raw_distances(&refs))?;
    let eigs = generalized_eigs(&laplacian(&knn_graph(&matrix, DEFAULT_KNN.min(n - 1))?)?)?;
    let k = suggest_k(&eigs.values);
    let dims = (k.max(2) - 1).min(n - 1);
    let coords: Vec<Vec<f64>> = (0..n).map(|x| (1..=dims).map(|i| eigs.vectors[i][x]).collect()).collect();
    Ok(lloyd_medoids(&coords, k, seed)?.labels)
}

/// Hull regions from all training extrema of the selected kinds whose raw
/// persistence exceeds `threshold` times their member's field range.
pub fn baseline_convex_hulls(
    train: &Ensemble,
    kinds: ExtremumKinds,
    threshold: f64,
    seed: u64,
) -> Result<HullBaseline> {
    check_threshold(threshold)?;
    let topology = *train.topology();
    if topology.ndim() != 2 {
        return Err(Error::NotPlanar);
    }
    let mut pooled: Vec<(ExtremumKind, Point)> = Vec::new();
    for f in train.members() {
        for (kind, v, _) in persistent_extrema(&compute_diagram(f), kinds, threshold) {
            pooled.push((kind, planar(&topology, v)));
        }
    }
    let mut regions = Vec::new();
    for kind in [ExtremumKind::Minimum, ExtremumKind::Maximum] {
        let points: Vec<Point> = pooled.iter().filter(|(k, _)| *k == kind).map(|(_, p)| *p).collect();
        let labels = cluster_points(&points, seed)?;
        let k = labels.iter().max().map_or(0, |m| m + 1);
        for c in 0..k {
            let members: Vec<Point> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
            regions.push(HullRegion {
                kind,
                region_id: c as i32 + 1,
                hull: ConvexHull::new(&members),
                points: members,
            });
        }
    }
    let spacing = topology.spacing();
    let eps = 0.5 * spacing[0].max(spacing[1]);
    Ok(HullBaseline { topology, kinds, regions, eps })
}

/// Point-in-hull test of every persistent extremum of the test members.
pub fn baseline_predict(baseline: &HullBaseline, tests: &[ScalarFieldGrid], threshold: f64) -> Result<PredictionReport> {
    check_threshold(threshold)?;
    let mut members = Vec::with_capacity(tests.len());
    for test in tests {
        if *test.topology() != baseline.topology {
            return Err(Error::TopologyMismatch);
        }
        let extrema = persistent_extrema(&compute_diagram(test), baseline.kinds, threshold)
            .into_iter()
            .map(|(kind, vertex, persistence_raw)| PredictedExtremum {
                kind,
                vertex,
                persistence_raw,
                region_id: baseline.region_at(kind, planar(&baseline.topology, vertex)),
            })
            .collect();
        members.push(MemberPrediction { member_id: test.member_id(), cluster: None, extrema });
    }
    Ok(PredictionReport::from_members(members))
}
