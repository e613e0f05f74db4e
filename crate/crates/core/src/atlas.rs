//! End-to-end atlas construction and held-out prediction.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ensemble, GridTopology, ScalarFieldGrid};
use crate::mandatory::{cluster_summary, ClusterSummary, ExtremumKind};
use crate::map_space::{
    distance_matrix, embed, generalized_eigs, knn_graph, l2_distance, laplacian, lloyd_medoids, suggest_k,
    Clustering, DistanceMatrix, SpectralEmbedding, DEFAULT_KNN,
};
use crate::pmap::{compute_map, ensemble_maps, ExtremumKinds, MapParams, PersistenceMap, DEFAULT_CULL, DEFAULT_GAMMA};
use crate::topology::{compute_diagram, PairKind, PersistenceDiagram};

pub const DEFAULT_PERSISTENCE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KChoice {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KChoice::Auto);
        }
        s.parse().map(KChoice::Fixed).map_err(|_| format!("expected a positive integer or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtlasConfig {
    pub gamma: f64,
    pub cull: f64,
    /// `None` uses the default of 5, clamped to `n - 1`.
    pub knn: Option<usize>,
    pub kinds: ExtremumKinds,
    pub k: KChoice,
    pub seed: u64,
    /// `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        AtlasConfig {
            gamma: DEFAULT_GAMMA,
            cull: DEFAULT_CULL,
            knn: None,
            kinds: ExtremumKinds::BOTH,
            k: KChoice::Auto,
            seed: 0,
            threads: None,
        }
    }
}

impl AtlasConfig {
    pub fn map_params(&self) -> MapParams {
        MapParams { gamma: self.gamma, kinds: self.kinds, cull: self.cull }
    }

    pub fn knn_for(&self, n: usize) -> usize {
        self.knn.unwrap_or_else(|| DEFAULT_KNN.min(n.saturating_sub(1)))
    }

    pub fn validate(&self) -> Result<()> {
        self.map_params().validate()?;
        if let Some(0) = self.threads {
            return Err(Error::BadThreads(0));
        }
        Ok(())
    }
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::BadThreads(0)),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().map_err(|_| Error::BadThreads(t))?;
            Ok(pool.install(f))
        }
    }
}

/// Wall-clock seconds per stage: persistence maps, distance matrix,
/// embedding, clustering, mandatory critical points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub pm: f64,
    pub dm: f64,
    pub e: f64,
    pub c: f64,
    pub mcp: f64,
}

/// Region ids per vertex, one layer per cluster (regions of different
/// clusters may overlap). `layers[c][v]` is 0 outside every region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLayers {
    pub layers: Vec<Vec<i32>>,
    pub likelihood: Vec<Vec<f32>>,
}

impl LabelLayers {
    fn compose(summaries: &[ClusterSummary], kind: ExtremumKind, vertex_count: usize) -> LabelLayers {
        let mut layers = vec![vec![0; vertex_count]; summaries.len()];
        let mut likelihood = vec![vec![0.0; vertex_count]; summaries.len()];
        for (c, s) in summaries.iter().enumerate() {
            for r in s.regions(kind) {
                for (&v, &p) in r.component.iter().zip(&r.likelihood) {
                    layers[c][v] = r.region_id;
                    likelihood[c][v] = p as f32;
                }
            }
        }
        LabelLayers { layers, likelihood }
    }

    /// Vertex sets per region id, ascending by id.
    pub fn decode(&self) -> Vec<(i32, Vec<usize>)> {
        let mut out: Vec<(i32, Vec<usize>)> = Vec::new();
        for layer in &self.layers {
            for (v, &id) in layer.iter().enumerate() {
                if id == 0 {
                    continue;
                }
                match out.iter_mut().find(|(r, _)| *r == id) {
                    Some((_, vs)) => vs.push(v),
                    None => out.push((id, vec![v])),
                }
            }
        }
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Atlas {
    pub config: AtlasConfig,
    pub topology: GridTopology,
    pub member_count: usize,
    pub diagrams: Vec<PersistenceDiagram>,
    pub maps: Vec<PersistenceMap>,
    /// Ensemble-wide maximum raw persistence used for normalization.
    pub pmax: f64,
    pub distances: DistanceMatrix,
    pub knn: usize,
    pub embedding: SpectralEmbedding,
    pub suggested_k: usize,
    pub clustering: Clustering,
    pub summaries: Vec<ClusterSummary>,
    pub minima_labels: LabelLayers,
    pub maxima_labels: LabelLayers,
    pub timings: Timings,
}

impl Atlas {
    pub fn k(&self) -> usize {
        self.clustering.k
    }

    pub fn labels(&self, kind: ExtremumKind) -> &LabelLayers {
        match kind {
            ExtremumKind::Minimum => &self.minima_labels,
            ExtremumKind::Maximum => &self.maxima_labels,
        }
    }

    /// Region of `cluster` and `kind` containing `v`, if any.
    pub fn region_at(&self, cluster: usize, kind: ExtremumKind, v: usize) -> Option<i32> {
        let id = self.labels(kind).layers[cluster][v];
        (id != 0).then_some(id)
    }
}

/// Builds the atlas: diagrams and maps, distance matrix, spectral
/// embedding, clustering and per-cluster mandatory critical points.
pub fn build_atlas(ensemble: &Ensemble, config: &AtlasConfig) -> Result<Atlas> {
    config.validate()?;
    with_threads(config.threads, || build(ensemble, config))?
}

fn build(ensemble: &Ensemble, config: &AtlasConfig) -> Result<Atlas> {
    let n = ensemble.len();
    let needed = if config.k == KChoice::Auto { 4 } else { 2 };
    if n < needed {
        return Err(Error::TooFewMembers { needed, got: n });
    }
    if let KChoice::Fixed(k) = config.k {
        if k < 1 || k > n {
            return Err(Error::BadK { k, n });
        }
    }
    let mut timings = Timings::default();

    let clock = Instant::now();
    let (diagrams, maps) = ensemble_maps(ensemble, &config.map_params())?;
    let pmax = diagrams[0].scale.expect("normalized");
    timings.pm = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let distances = distance_matrix(&maps)?;
    timings.dm = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let knn = config.knn_for(n);
    let eigs = generalized_eigs(&laplacian(&knn_graph(&distances, knn)?)?)?;
    let suggested_k = suggest_k(&eigs.values);
    let k = match config.k {
        KChoice::Auto => suggested_k,
        KChoice::Fixed(k) => k,
    };
    let mut embedding = embed(&eigs, (k.max(2) - 1).min(n - 1))?;
    embedding.knn = Some(knn);
    timings.e = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut clustering = lloyd_medoids(&embedding.coords, k, config.seed)?;
    clustering.suggested_k = Some(suggested_k);
    timings.c = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let summaries = (0..k)
        .into_par_iter()
        .map(|c| cluster_summary(ensemble, c, &clustering.members_of(c)))
        .collect::<Result<Vec<_>>>()?;
    let count = ensemble.topology().vertex_count();
    let minima_labels = LabelLayers::compose(&summaries, ExtremumKind::Minimum, count);
    let maxima_labels = LabelLayers::compose(&summaries, ExtremumKind::Maximum, count);
    timings.mcp = clock.elapsed().as_secs_f64();

    Ok(Atlas {
        config: *config,
        topology: *ensemble.topology(),
        member_count: n,
        diagrams,
        maps,
        pmax,
        distances,
        knn,
        embedding,
        suggested_k,
        clustering,
        summaries,
        minima_labels,
        maxima_labels,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedExtremum {
    pub kind: ExtremumKind,
    pub vertex: usize,
    pub persistence_raw: f64,
    /// Region hit, `None` for a miss.
    pub region_id: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberPrediction {
    pub member_id: usize,
    /// Cluster the member was assigned to, if the method uses one.
    pub cluster: Option<usize>,
    pub extrema: Vec<PredictedExtremum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub members: Vec<MemberPrediction>,
    pub hits: usize,
    pub total: usize,
    /// `hits / total`, or 1 when nothing was tested.
    pub hit_rate: f64,
}

impl PredictionReport {
    pub fn from_members(members: Vec<MemberPrediction>) -> Self {
        let all = members.iter().flat_map(|m| &m.extrema);
        let total = all.clone().count();
        let hits = all.filter(|e| e.region_id.is_some()).count();
        let hit_rate = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
        PredictionReport { members, hits, total, hit_rate }
    }
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::BadThreshold(threshold))
    }
}

pub(crate) fn extremum_kind(kind: PairKind) -> ExtremumKind {
    match kind {
        PairKind::MinSaddle => ExtremumKind::Minimum,
        PairKind::SaddleMax => ExtremumKind::Maximum,
    }
}

/// Extrema of `field` of the selected kinds whose raw persistence exceeds
/// `threshold` times the field range.
pub fn persistent_extrema(
    diagram: &PersistenceDiagram,
    kinds: ExtremumKinds,
    threshold: f64,
) -> Vec<(ExtremumKind, usize, f64)> {
    let cut = threshold * diagram.field_range;
    diagram
        .pairs
        .iter()
        .filter(|p| kinds.includes(p.kind) && p.persistence_raw > cut)
        .map(|p| (extremum_kind(p.kind), p.extremum_vertex, p.persistence_raw))
        .collect()
}

/// Assigns the test member to the cluster of the training member whose
/// persistence map is nearest, then looks up each persistent extremum in
/// that cluster's regions of the same kind.
pub fn predict(atlas: &Atlas, test: &ScalarFieldGrid, threshold: f64) -> Result<MemberPrediction> {
    check_threshold(threshold)?;
    if *test.topology() != atlas.topology {
        return Err(Error::TopologyMismatch);
    }
    let mut diagram = compute_diagram(test);
    diagram.normalize_by(atlas.pmax)?;
    let map = compute_map(&atlas.topology, &diagram, &atlas.config.map_params())?;
    let nearest = atlas
        .maps
        .iter()
        .map(|m| l2_distance(&m.phi, &map.phi))
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
        .0;
    let cluster = atlas.clustering.labels[nearest];
    let extrema = persistent_extrema(&diagram, atlas.config.kinds, threshold)
        .into_iter()
        .map(|(kind, vertex, persistence_raw)| PredictedExtremum {
            kind,
            vertex,
            persistence_raw,
            region_id: atlas.region_at(cluster, kind, vertex),
        })
        .collect();
    Ok(MemberPrediction { member_id: test.member_id(), cluster: Some(cluster), extrema })
}

/// [`predict`] for every test member.
pub fn predict_all(atlas: &Atlas, tests: &[ScalarFieldGrid], threshold: f64) -> Result<PredictionReport> {
    with_threads(atlas.config.threads, || {
        tests.par_iter().map(|t| predict(atlas, t, threshold)).collect::<Result<Vec<_>>>()
    })?
    .map(PredictionReport::from_members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mandatory::{mandatory_maxima, mandatory_minima, envelopes};
    use crate::rng::SplitMix64;

    /// Two families of 24 x 24 fields with a hill at different sites.
    fn two_family_ensemble(per_family: usize, seed: u64) -> (Ensemble, Vec<usize>) {
        let g = GridTopology::unit(&[24, 24]).unwrap();
        let mut members = Vec::new();
        let mut labels = Vec::new();
        for family in 0..2 {
            for i in 0..per_family {
                let mut rng = SplitMix64::substream(seed, (family * per_family + i) as u64);
                let (cx, cy) = if family == 0 { (6.0, 6.0) } else { (17.0, 16.0) };
                let (cx, cy) = (cx + rng.uniform(-0.5, 0.5), cy + rng.uniform(-0.5, 0.5));
                let values = (0..g.vertex_count())
                    .map(|v| {
                        let [x, y, _] = g.position(v);
                        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                        (-d2 / 18.0).exp() - 0.3 * (-((x - 12.0).powi(2) + (y - 3.0).powi(2)) / 30.0).exp()
                            + 0.01 * rng.uniform(-1.0, 1.0)
                    })
                    .collect();
                members.push(ScalarFieldGrid::new(g, values, 0).unwrap());
                labels.push(family);
            }
        }
        (Ensemble::new(members).unwrap(), labels)
    }

    #[test]
    fn recovers_two_families() {
        let (ensemble, truth) = two_family_ensemble(6, 1);
        let atlas = build_atlas(&ensemble, &AtlasConfig::default()).unwrap();
        assert_eq!(atlas.suggested_k, 2);
        assert_eq!(crate::map_space::adjusted_rand_index(&atlas.clustering.labels, &truth), 1.0);
        for s in &atlas.summaries {
            assert_eq!(s.appearance_probability, 0.5);
            for r in s.mandatory_minima.iter().chain(&s.mandatory_maxima) {
                for &m in &s.members {
                    assert!(!r.witnesses(ensemble.member(m).unwrap()).is_empty());
                }
            }
        }
    }

    #[test]
    fn label_layers_decode_to_summaries() {
        let (ensemble, _) = two_family_ensemble(5, 2);
        let atlas = build_atlas(&ensemble, &AtlasConfig { k: KChoice::Fixed(2), ..Default::default() }).unwrap();
        for kind in [ExtremumKind::Minimum, ExtremumKind::Maximum] {
            let mut expected: Vec<(i32, Vec<usize>)> = atlas
                .summaries
                .iter()
                .flat_map(|s| s.regions(kind).iter().map(|r| (r.region_id, r.component.clone())))
                .collect();
            expected.sort_by_key(|(id, _)| *id);
            assert_eq!(atlas.labels(kind).decode(), expected);
        }
    }

    #[test]
    fn single_cluster_equals_direct_extraction() {
        let (ensemble, _) = two_family_ensemble(3, 3);
        let atlas = build_atlas(&ensemble, &AtlasConfig { k: KChoice::Fixed(1), ..Default::default() }).unwrap();
        let all: Vec<usize> = (0..ensemble.len()).collect();
        let env = envelopes(&ensemble, &all, 0).unwrap();
        let strip = |rs: &[crate::mandatory::MandatoryExtremum]| {
            rs.iter().map(|r| (r.component.clone(), r.interval)).collect::<Vec<_>>()
        };
        assert_eq!(strip(&atlas.summaries[0].mandatory_minima), strip(&mandatory_minima(&env)));
        assert_eq!(strip(&atlas.summaries[0].mandatory_maxima), strip(&mandatory_maxima(&env)));
        assert_eq!(atlas.summaries[0].appearance_probability, 1.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (ensemble, _) = two_family_ensemble(4, 4);
        let a = build_atlas(&ensemble, &AtlasConfig { threads: Some(1), ..Default::default() }).unwrap();
        let b = build_atlas(&ensemble, &AtlasConfig { threads: Some(3), ..Default::default() }).unwrap();
        assert_eq!(a.clustering.labels, b.clustering.labels);
        assert_eq!(a.minima_labels, b.minima_labels);
        assert_eq!(a.maxima_labels, b.maxima_labels);
        assert_eq!(a.distances, b.distances);
        assert!(a.maps.iter().zip(&b.maps).all(|(x, y)| x.phi == y.phi));
    }

    #[test]
    fn training_members_predict_into_their_regions() {
        let (ensemble, _) = two_family_ensemble(5, 5);
        let atlas = build_atlas(&ensemble, &AtlasConfig::default()).unwrap();
        let report = predict_all(&atlas, ensemble.members(), 0.2).unwrap();
        assert!(report.total > 0);
        assert_eq!(report.hit_rate, 1.0);
        for (m, p) in report.members.iter().enumerate() {
            assert_eq!(p.cluster, Some(atlas.clustering.labels[m]));
        }
    }

    #[test]
    fn high_threshold_keeps_only_global_pairs() {
        let (ensemble, _) = two_family_ensemble(3, 6);
        let atlas = build_atlas(&ensemble, &AtlasConfig { k: KChoice::Fixed(2), ..Default::default() }).unwrap();
        let p = predict(&atlas, ensemble.member(0).unwrap(), 0.999).unwrap();
        assert_eq!(p.extrema.len(), 2);
        let f = ensemble.member(0).unwrap();
        let order = crate::grid::sorted_vertices(f.values());
        let mut vertices: Vec<usize> = p.extrema.iter().map(|e| e.vertex).collect();
        vertices.sort();
        let mut expected = vec![order[0], *order.last().unwrap()];
        expected.sort();
        assert_eq!(vertices, expected);
    }

    #[test]
    fn validation_errors() {
        let (ensemble, _) = two_family_ensemble(2, 7);
        let fixed = |k| AtlasConfig { k: KChoice::Fixed(k), ..Default::default() };
        assert!(matches!(build_atlas(&ensemble, &fixed(0)), Err(Error::BadK { .. })));
        assert!(matches!(build_atlas(&ensemble, &fixed(5)), Err(Error::BadK { .. })));
        let small = ensemble.subset(&[0, 1, 2]).unwrap();
        assert!(matches!(build_atlas(&small, &AtlasConfig::default()), Err(Error::TooFewMembers { .. })));
        let bad_knn = AtlasConfig { knn: Some(4), ..fixed(2) };
        assert!(matches!(build_atlas(&ensemble, &bad_knn), Err(Error::BadKnn { .. })));
        let bad_gamma = AtlasConfig { gamma: 0.0, ..fixed(2) };
        assert!(matches!(build_atlas(&ensemble, &bad_gamma), Err(Error::BadGamma(_))));
        let atlas = build_atlas(&ensemble, &fixed(2)).unwrap();
        assert!(matches!(predict(&atlas, ensemble.member(0).unwrap(), 1.0), Err(Error::BadThreshold(_))));
        let other = ScalarFieldGrid::new(GridTopology::unit(&[4, 4]).unwrap(), vec![0.0; 16], 0).unwrap();
        assert!(matches!(predict(&atlas, &other, 0.2), Err(Error::TopologyMismatch)));

        let g = GridTopology::unit(&[4, 4]).unwrap();
        let flat = Ensemble::new(vec![ScalarFieldGrid::new(g, vec![1.0; 16], 0).unwrap(); 4]).unwrap();
        assert!(matches!(build_atlas(&flat, &AtlasConfig::default()), Err(Error::ZeroPersistence)));
    }

    #[test]
    fn k_choice_parsing() {
        assert_eq!("auto".parse::<KChoice>(), Ok(KChoice::Auto));
        assert_eq!("3".parse::<KChoice>(), Ok(KChoice::Fixed(3)));
        assert!("x".parse::<KChoice>().is_err());
    }
}
