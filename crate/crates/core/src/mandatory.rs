//! Mandatory extrema of a set of fields: regions, with value intervals, in
//! which every member must have a local extremum of the given kind.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sorted_vertices, vertex_cmp, Ensemble, GridTopology, ScalarFieldGrid};
use crate::union_find::DisjointSet;

/// Region ids are `cluster_id * REGION_STRIDE + local_index + 1`; 0 means "no region".
pub const REGION_STRIDE: i32 = 10_000;

pub fn region_id(cluster_id: usize, local_index: usize) -> i32 {
    cluster_id as i32 * REGION_STRIDE + local_index as i32 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

impl ExtremumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtremumKind::Minimum => "min",
            ExtremumKind::Maximum => "max",
        }
    }
}

/// Pointwise lower and upper bounds `f-`, `f+` over a set of members.
#[derive(Debug, Clone)]
pub struct EnvelopePair {
    pub lower: ScalarFieldGrid,
    pub upper: ScalarFieldGrid,
    pub cluster_id: usize,
    /// Number of members the envelope was built from.
    pub m: usize,
}

impl EnvelopePair {
    pub fn topology(&self) -> &GridTopology {
        self.lower.topology()
    }

    /// `(-f+, -f-)`: maxima of the original become minima of this one.
    pub fn negated(&self) -> EnvelopePair {
        EnvelopePair {
            lower: self.upper.negated(),
            upper: self.lower.negated(),
            cluster_id: self.cluster_id,
            m: self.m,
        }
    }
}

pub fn envelopes(ensemble: &Ensemble, member_ids: &[usize], cluster_id: usize) -> Result<EnvelopePair> {
    let members = member_ids.iter().map(|&id| ensemble.member(id)).collect::<Result<Vec<_>>>()?;
    envelope_of(&members, cluster_id)
}

pub fn envelope_of(members: &[&ScalarFieldGrid], cluster_id: usize) -> Result<EnvelopePair> {
    let first = members.first().ok_or(Error::EmptyMemberSet)?;
    let topology = *first.topology();
    if members.iter().any(|f| *f.topology() != topology) {
        return Err(Error::TopologyMismatch);
    }
    let mut lower = first.values().to_vec();
    let mut upper = lower.clone();
    for f in &members[1..] {
        for (v, &x) in f.values().iter().enumerate() {
            lower[v] = lower[v].min(x);
            upper[v] = upper[v].max(x);
        }
    }
    Ok(EnvelopePair {
        lower: ScalarFieldGrid::new(topology, lower, cluster_id)?,
        upper: ScalarFieldGrid::new(topology, upper, cluster_id)?,
        cluster_id,
        m: members.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MandatoryExtremum {
    pub kind: ExtremumKind,
    /// Vertex ids, ascending.
    pub component: Vec<usize>,
    /// Closed critical interval `[low, high]` in field units.
    pub interval: [f64; 2],
    /// Envelope extremum that generated the region.
    pub generator: usize,
    /// Isovalue the component was extracted at.
    pub isovalue: f64,
    /// Per component vertex, aligned with `component`.
    pub likelihood: Vec<f64>,
    pub region_id: i32,
}

impl MandatoryExtremum {
    pub fn contains(&self, v: usize) -> bool {
        self.component.binary_search(&v).is_ok()
    }

    pub fn in_interval(&self, x: f64) -> bool {
        self.interval[0] <= x && x <= self.interval[1]
    }

    /// Local extrema of `field` of this region's kind lying in the region
    /// with value inside the interval. Empty means the guarantee is violated.
    pub fn witnesses(&self, field: &ScalarFieldGrid) -> Vec<usize> {
        self.component
            .iter()
            .copied()
            .filter(|&v| is_local_extremum(field, v, self.kind) && self.in_interval(field.value(v)))
            .collect()
    }
}

fn is_local_extremum(field: &ScalarFieldGrid, v: usize, kind: ExtremumKind) -> bool {
    let values = field.values();
    let below = |u: usize| vertex_cmp(values, u, v).is_lt();
    let nbrs = field.topology().neighbors_unchecked(v);
    match kind {
        ExtremumKind::Minimum => nbrs.iter().all(|&u| !below(u)),
        ExtremumKind::Maximum => nbrs.iter().all(|&u| below(u)),
    }
}

/// Local minima of `field` under its total order, ascending.
fn local_minima(field: &ScalarFieldGrid) -> Vec<usize> {
    sorted_vertices(field.values())
        .into_iter()
        .filter(|&v| is_local_extremum(field, v, ExtremumKind::Minimum))
        .collect()
}

/// Connected component of `{v : active(v)}` containing `seed`, ascending.
fn flood(topology: &GridTopology, seed: usize, active: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut seen = vec![false; topology.vertex_count()];
    let mut queue = VecDeque::from([seed]);
    seen[seed] = true;
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        out.push(v);
        for &u in topology.neighbors_unchecked(v).iter() {
            if !seen[u] && active(u) {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    out.sort_unstable();
    out
}

fn region(env: &EnvelopePair, generator: usize, component: Vec<usize>) -> MandatoryExtremum {
    let isovalue = env.upper.value(generator);
    let low = component.iter().map(|&v| env.lower.value(v)).fold(f64::INFINITY, f64::min);
    let high = component.iter().map(|&v| env.upper.value(v)).fold(f64::INFINITY, f64::min);
    MandatoryExtremum {
        kind: ExtremumKind::Minimum,
        component,
        interval: [low, high],
        generator,
        isovalue,
        likelihood: Vec::new(),
        region_id: 0,
    }
}

/// For each minimum `m` of `f+` in ascending order, the component of
/// `{f- <= f+(m)}` containing `m`, unless that component already holds a
/// region reported at a lower isovalue.
///
/// The sub-level sets of `f-` are grown incrementally with a union-find, so
/// each vertex is flooded at most once over all reported regions.
pub fn mandatory_minima(env: &EnvelopePair) -> Vec<MandatoryExtremum> {
    let topology = env.topology();
    let lower = env.lower.values();
    let order = sorted_vertices(lower);
    let n = topology.vertex_count();
    let mut sets = DisjointSet::new(n);
    let mut active = vec![false; n];
    let mut reported = vec![false; n];
    let mut next = 0;
    let mut out = Vec::new();

    for m in local_minima(&env.upper) {
        let iso = env.upper.value(m);
        while next < n && lower[order[next]] <= iso {
            let v = order[next];
            active[v] = true;
            for &u in topology.neighbors_unchecked(v).iter() {
                if active[u] {
                    let flag = reported[sets.find(u)] | reported[sets.find(v)];
                    let root = sets.union(u, v);
                    reported[root] = flag;
                }
            }
            next += 1;
        }
        let root = sets.find(m);
        if reported[root] {
            continue;
        }
        reported[root] = true;
        let component = flood(topology, m, |u| active[u]);
        out.push(region(env, m, component));
    }
    out
}

/// Direct evaluation of [`mandatory_minima`]: one flood fill per `f+`
/// minimum, skipping components that overlap an earlier region.
pub fn mandatory_minima_naive(env: &EnvelopePair) -> Vec<MandatoryExtremum> {
    let topology = env.topology();
    let mut taken = vec![false; topology.vertex_count()];
    let mut out = Vec::new();
    for m in local_minima(&env.upper) {
        let iso = env.upper.value(m);
        let component = flood(topology, m, |u| env.lower.value(u) <= iso);
        if component.iter().any(|&v| taken[v]) {
            continue;
        }
        component.iter().for_each(|&v| taken[v] = true);
        out.push(region(env, m, component));
    }
    out
}

/// Minima of the negated envelope, mapped back to maxima.
pub fn mandatory_maxima(env: &EnvelopePair) -> Vec<MandatoryExtremum> {
    mandatory_minima(&env.negated())
        .into_iter()
        .map(|mut r| {
            r.kind = ExtremumKind::Maximum;
            r.interval = [-r.interval[1], -r.interval[0]];
            r.isovalue = -r.isovalue;
            r
        })
        .collect()
}

/// Fraction of members whose value at each component vertex lies in the
/// closed interval, aligned with `region.component`.
pub fn likelihood(members: &[&ScalarFieldGrid], region: &MandatoryExtremum) -> Vec<f64> {
    let m = members.len() as f64;
    region
        .component
        .iter()
        .map(|&v| members.iter().filter(|f| region.in_interval(f.value(v))).count() as f64 / m)
        .collect()
}

pub fn appearance_probability(m: usize, n: usize) -> Result<f64> {
    if m == 0 || m > n {
        return Err(Error::BadK { k: m, n });
    }
    Ok(m as f64 / n as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub members: Vec<usize>,
    pub mandatory_minima: Vec<MandatoryExtremum>,
    pub mandatory_maxima: Vec<MandatoryExtremum>,
    pub appearance_probability: f64,
}

impl ClusterSummary {
    pub fn regions(&self, kind: ExtremumKind) -> &[MandatoryExtremum] {
        match kind {
            ExtremumKind::Minimum => &self.mandatory_minima,
            ExtremumKind::Maximum => &self.mandatory_maxima,
        }
    }
}

/// Mandatory minima and maxima of one cluster with likelihoods and region ids.
pub fn cluster_summary(ensemble: &Ensemble, cluster_id: usize, member_ids: &[usize]) -> Result<ClusterSummary> {
    let members = member_ids.iter().map(|&id| ensemble.member(id)).collect::<Result<Vec<_>>>()?;
    let env = envelope_of(&members, cluster_id)?;
    let (mut minima, mut maxima) = rayon::join(|| mandatory_minima(&env), || mandatory_maxima(&env));
    for regions in [&mut minima, &mut maxima] {
        for (i, r) in regions.iter_mut().enumerate() {
            r.likelihood = likelihood(&members, r);
            r.region_id = region_id(cluster_id, i);
        }
    }
    Ok(ClusterSummary {
        cluster_id,
        members: member_ids.to_vec(),
        mandatory_minima: minima,
        mandatory_maxima: maxima,
        appearance_probability: appearance_probability(member_ids.len(), ensemble.len())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::topology::{classify_all, CriticalType};

    /// 3 x 2 grid, values given per column and constant along y.
    fn columns(cols: [f64; 3]) -> ScalarFieldGrid {
        let g = GridTopology::unit(&[3, 2]).unwrap();
        let values = (0..6).map(|v| cols[v % 3]).collect();
        ScalarFieldGrid::new(g, values, 0).unwrap()
    }

    fn env(fields: &[ScalarFieldGrid]) -> EnvelopePair {
        envelope_of(&fields.iter().collect::<Vec<_>>(), 0).unwrap()
    }

    fn random_ensemble(dims: &[usize], m: usize, seed: u64) -> Vec<ScalarFieldGrid> {
        let g = GridTopology::unit(dims).unwrap();
        let mut rng = SplitMix64::new(seed);
        (0..m)
            .map(|i| {
                let values = (0..g.vertex_count()).map(|_| rng.uniform(0.0, 1.0)).collect();
                ScalarFieldGrid::new(g, values, i).unwrap()
            })
            .collect()
    }

    /// Smooth-ish member: shared low-frequency pattern plus per-member noise.
    fn correlated_ensemble(m: usize, seed: u64) -> Vec<ScalarFieldGrid> {
        let g = GridTopology::unit(&[16, 16]).unwrap();
        let mut rng = SplitMix64::new(seed);
        (0..m)
            .map(|i| {
                let shift = rng.uniform(-0.5, 0.5);
                let values = (0..g.vertex_count())
                    .map(|v| {
                        let [x, y, _] = g.position(v);
                        (x * 0.6 + shift).sin() * (y * 0.5).cos() + 0.3 * rng.uniform(-1.0, 1.0)
                    })
                    .collect();
                ScalarFieldGrid::new(g, values, i).unwrap()
            })
            .collect()
    }

    #[test]
    fn envelope_examples() {
        let e = env(&[columns([0.0, 1.0, 2.0]), columns([2.0, 1.0, 0.0])]);
        assert_eq!(&e.lower.values()[..3], &[0.0, 1.0, 0.0]);
        assert_eq!(&e.upper.values()[..3], &[2.0, 1.0, 2.0]);
        assert_eq!(e.m, 2);

        let f = columns([3.0, 1.0, 2.0]);
        let single = env(&[f.clone()]);
        assert_eq!(single.lower.values(), f.values());
        assert_eq!(single.upper.values(), f.values());

        assert!(matches!(envelope_of(&[], 0), Err(Error::EmptyMemberSet)));
    }

    #[test]
    fn one_region_when_sublevel_set_is_connected() {
        let e = env(&[columns([0.0, 1.0, 2.0]), columns([2.0, 1.0, 0.0])]);
        let minima = mandatory_minima(&e);
        assert_eq!(minima.len(), 1);
        assert_eq!(minima[0].component, (0..6).collect::<Vec<_>>());
        assert_eq!(minima[0].interval, [0.0, 1.0]);

        // the maxima of f- sit in the middle column and f+ >= 1 everywhere
        let maxima = mandatory_maxima(&e);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].component, (0..6).collect::<Vec<_>>());
        assert_eq!(maxima[0].interval, [1.0, 2.0]);
    }

    #[test]
    fn two_regions_when_sublevel_set_splits() {
        let e = env(&[columns([0.0, 5.0, 1.0]), columns([1.0, 5.0, 0.0])]);
        let minima = mandatory_minima(&e);
        assert_eq!(minima.len(), 2);
        assert_eq!(minima[0].component, vec![0, 3]);
        assert_eq!(minima[1].component, vec![2, 5]);
        assert!(minima.iter().all(|r| r.interval == [0.0, 1.0]));

        let maxima = mandatory_maxima(&e);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].component, vec![1, 4]);
        assert_eq!(maxima[0].interval, [5.0, 5.0]);
    }

    #[test]
    fn single_member_regions_match_extrema() {
        for seed in 0..10 {
            let f = random_ensemble(&[9, 7], 1, seed).pop().unwrap();
            let e = env(&[f.clone()]);
            let types = classify_all(&f);
            let count = |t: CriticalType| types.iter().filter(|&&x| x == t).count();
            let minima = mandatory_minima(&e);
            let maxima = mandatory_maxima(&e);
            assert_eq!(minima.len(), count(CriticalType::Minimum));
            assert_eq!(maxima.len(), count(CriticalType::Maximum));
            for r in minima.iter().chain(&maxima) {
                assert_eq!(r.component, vec![r.generator]);
                assert_eq!(r.interval[0], r.interval[1]);
                let members = [&f];
                assert_eq!(likelihood(&members, r), vec![1.0]);
            }
            let global = sorted_vertices(f.values())[0];
            let r = minima.iter().find(|r| r.contains(global)).unwrap();
            assert_eq!(r.interval, [f.value(global), f.value(global)]);
        }
    }

    #[test]
    fn union_find_extraction_matches_naive_flood_fill() {
        for seed in 0..30 {
            let fields = if seed % 2 == 0 {
                random_ensemble(&[12, 10], 2 + seed as usize % 4, seed)
            } else {
                correlated_ensemble(3 + seed as usize % 5, seed)
            };
            let e = env(&fields);
            assert_eq!(mandatory_minima(&e), mandatory_minima_naive(&e));
            let neg = e.negated();
            assert_eq!(mandatory_minima(&neg), mandatory_minima_naive(&neg));
        }
        let fields = random_ensemble(&[5, 5, 4], 3, 99);
        let e = env(&fields);
        assert_eq!(mandatory_minima(&e), mandatory_minima_naive(&e));
    }

    #[test]
    fn maxima_are_negated_minima() {
        for seed in 0..10 {
            let fields = correlated_ensemble(4, seed);
            let e = env(&fields);
            let negated_fields: Vec<_> = fields.iter().map(|f| f.negated()).collect();
            let direct = mandatory_maxima(&e);
            let via_negation = mandatory_minima(&env(&negated_fields));
            assert_eq!(direct.len(), via_negation.len());
            for (a, b) in direct.iter().zip(&via_negation) {
                assert_eq!(a.component, b.component);
                assert_eq!(a.interval, [-b.interval[1], -b.interval[0]]);
            }
        }
    }

    #[test]
    fn guarantee_and_disjointness() {
        for seed in 0..40 {
            let fields = if seed % 2 == 0 {
                random_ensemble(&[10, 10], 2 + seed as usize % 4, seed)
            } else {
                correlated_ensemble(2 + seed as usize % 6, seed)
            };
            let e = env(&fields);
            for regions in [mandatory_minima(&e), mandatory_maxima(&e)] {
                let mut owner = vec![false; e.topology().vertex_count()];
                for r in &regions {
                    assert!(r.interval[0] <= r.interval[1]);
                    for &v in &r.component {
                        assert!(!owner[v], "regions overlap");
                        owner[v] = true;
                    }
                    for f in &fields {
                        assert!(!r.witnesses(f).is_empty(), "seed {seed}: member without extremum");
                    }
                }
            }
        }
    }

    #[test]
    fn components_are_connected() {
        let fields = correlated_ensemble(5, 3);
        let e = env(&fields);
        for r in mandatory_minima(&e) {
            let inside = |u: usize| r.contains(u);
            assert_eq!(flood(e.topology(), r.component[0], inside), r.component);
        }
    }

    #[test]
    fn removing_a_member_tightens_envelopes() {
        let fields = random_ensemble(&[6, 6], 5, 8);
        let all = env(&fields);
        let fewer = env(&fields[1..]);
        for v in 0..36 {
            assert!(fewer.lower.value(v) >= all.lower.value(v));
            assert!(fewer.upper.value(v) <= all.upper.value(v));
        }
    }

    #[test]
    fn likelihood_examples() {
        let g = GridTopology::unit(&[2, 2]).unwrap();
        let fields: Vec<_> =
            [0.2, 0.5, 1.5, 2.0].iter().map(|&x| ScalarFieldGrid::new(g, vec![x, 9.0, 9.0, 9.0], 0).unwrap()).collect();
        let members: Vec<_> = fields.iter().collect();
        let mut r = MandatoryExtremum {
            kind: ExtremumKind::Minimum,
            component: vec![0],
            interval: [0.0, 1.0],
            generator: 0,
            isovalue: 1.0,
            likelihood: vec![],
            region_id: 0,
        };
        assert_eq!(likelihood(&members, &r), vec![0.5]);
        r.interval = [0.0, 3.0];
        assert_eq!(likelihood(&members, &r), vec![1.0]);
        r.interval = [1.5, 1.5];
        assert_eq!(likelihood(&members, &r), vec![0.25]);
    }

    #[test]
    fn appearance_probabilities() {
        assert_eq!(appearance_probability(9, 45).unwrap(), 0.2);
        assert_eq!(appearance_probability(45, 45).unwrap(), 1.0);
        assert!(appearance_probability(0, 4).is_err());
        assert!(appearance_probability(5, 4).is_err());
        let sizes = [3, 5, 2, 7];
        let total: f64 = sizes.iter().map(|&m| appearance_probability(m, 17).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cluster_summary_ids() {
        let ensemble = Ensemble::new(correlated_ensemble(6, 1)).unwrap();
        let s = cluster_summary(&ensemble, 2, &[1, 3, 4]).unwrap();
        assert_eq!(s.appearance_probability, 0.5);
        for (i, r) in s.mandatory_minima.iter().enumerate() {
            assert_eq!(r.region_id, 2 * REGION_STRIDE + i as i32 + 1);
            assert_eq!(r.likelihood.len(), r.component.len());
            assert!(r.likelihood.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
