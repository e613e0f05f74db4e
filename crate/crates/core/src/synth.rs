//! Deterministic synthetic ensembles with ground-truth trend labels.
//!
//! Site centers are given as fractions of the domain along each axis and
//! bump widths as fractions of the shortest axis extent. Each member draws
//! from its own SplitMix64 substream keyed by `(seed, member index)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ensemble, GridTopology, ScalarFieldGrid};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthKind {
    GaussianTrends,
    Fig3Quartet,
    TwoSiteTrends,
}

/// Isotropic Gaussian bump; negative amplitudes make pits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub sigma: f64,
}

impl Site {
    pub fn new(center: &[f64], amplitude: f64, sigma: f64) -> Self {
        Site { center: center.to_vec(), amplitude, sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub sites: Vec<Site>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub dims: Vec<usize>,
    pub trends: Vec<Trend>,
    pub members_per_trend: Vec<usize>,
    /// Standard deviation of the uniform site displacement along each axis,
    /// as a fraction of the axis extent.
    pub jitter_sigma: f64,
    /// Half-width of the uniform noise, as a fraction of the largest site amplitude.
    pub noise_amp: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub ensemble: Ensemble,
    pub labels: Vec<usize>,
}

/// Splits `total` members over `trends` as evenly as possible, larger shares last.
pub fn balanced_sizes(total: usize, trends: usize) -> Vec<usize> {
    (0..trends).map(|t| total / trends + usize::from(t >= trends - total % trends)).collect()
}

impl SynthSpec {
    /// Three trends of hills and pits; each trend has its own global
    /// maximum and minimum locations.
    pub fn gaussians(dims: &[usize], members: usize, jitter_sigma: f64, noise_amp: f64, seed: u64) -> Self {
        let trends = vec![
            Trend {
                sites: vec![
                    Site::new(&[0.25, 0.25], 1.0, 0.08),
                    Site::new(&[0.72, 0.70], 0.6, 0.08),
                    Site::new(&[0.72, 0.28], -0.8, 0.08),
                ],
            },
            Trend {
                sites: vec![
                    Site::new(&[0.75, 0.72], 1.0, 0.08),
                    Site::new(&[0.28, 0.70], -1.0, 0.08),
                    Site::new(&[0.50, 0.25], 0.6, 0.08),
                ],
            },
            Trend {
                sites: vec![
                    Site::new(&[0.30, 0.72], 1.0, 0.08),
                    Site::new(&[0.70, 0.30], 0.6, 0.08),
                    Site::new(&[0.50, 0.50], -0.9, 0.08),
                ],
            },
        ];
        SynthSpec {
            kind: SynthKind::GaussianTrends,
            dims: dims.to_vec(),
            trends,
            members_per_trend: balanced_sizes(members, 3),
            jitter_sigma,
            noise_amp,
            seed,
        }
    }

    /// Two trends whose features never co-occur: one hill at site A or at site B.
    pub fn two_site(dims: &[usize], members_per_trend: usize, jitter_sigma: f64, noise_amp: f64, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::TwoSiteTrends,
            dims: dims.to_vec(),
            trends: vec![
                Trend { sites: vec![Site::new(&[0.28, 0.30], 1.0, 0.1)] },
                Trend { sites: vec![Site::new(&[0.72, 0.68], 1.0, 0.1)] },
            ],
            members_per_trend: vec![members_per_trend; 2],
            jitter_sigma,
            noise_amp,
            seed,
        }
    }

    pub fn member_count(&self) -> usize {
        self.members_per_trend.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadSynthSpec(m.to_string()));
        if self.trends.len() != self.members_per_trend.len() {
            return bad("members_per_trend must have one entry per trend");
        }
        match self.kind {
            SynthKind::GaussianTrends if self.trends.len() < 2 => return bad("need at least 2 trends"),
            SynthKind::TwoSiteTrends if self.trends.len() != 2 => return bad("need exactly 2 trends"),
            _ => {}
        }
        if self.kind != SynthKind::Fig3Quartet && self.members_per_trend.iter().any(|&m| m < 2) {
            return bad("need at least 2 members per trend");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter must be non-negative");
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp.is_finite()) {
            return bad("noise amplitude must be non-negative");
        }
        let ndim = self.dims.len();
        for site in self.trends.iter().flat_map(|t| &t.sites) {
            if site.center.len() != ndim {
                return bad("site center dimension differs from grid dimension");
            }
            if !(site.sigma > 0.0) || !site.amplitude.is_finite() {
                return bad("site sigma must be positive and amplitude finite");
            }
        }
        Ok(())
    }

    fn topology(&self) -> Result<GridTopology> {
        GridTopology::unit(&self.dims)
    }

    fn max_amplitude(&self) -> f64 {
        self.trends.iter().flat_map(|t| &t.sites).map(|s| s.amplitude.abs()).fold(0.0, f64::max)
    }
}

/// Physical extent of the grid along each axis.
fn extents(g: &GridTopology) -> Vec<f64> {
    g.dims().iter().zip(g.spacing()).map(|(&n, &h)| (n - 1) as f64 * h).collect()
}

fn bump(p: [f64; 3], center: &[f64], amplitude: f64, sigma: f64) -> f64 {
    let d2: f64 = center.iter().enumerate().map(|(a, c)| (p[a] - c).powi(2)).sum();
    amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
}

/// One member: jittered sites of `trend` plus uniform noise.
fn member(spec: &SynthSpec, g: &GridTopology, trend: &Trend, index: usize) -> Result<ScalarFieldGrid> {
    let mut rng = SplitMix64::substream(spec.seed, index as u64);
    let ext = extents(g);
    let min_ext = ext.iter().copied().fold(f64::INFINITY, f64::min);
    let half_width = 3f64.sqrt() * spec.jitter_sigma;
    let placed: Vec<(Vec<f64>, f64, f64)> = trend
        .sites
        .iter()
        .map(|s| {
            let center = s
                .center
                .iter()
                .zip(&ext)
                .enumerate()
                .map(|(a, (&c, &e))| g.origin()[a] + (c + rng.uniform(-half_width, half_width)) * e)
                .collect();
            (center, s.amplitude, s.sigma * min_ext)
        })
        .collect();
    let noise = spec.noise_amp * spec.max_amplitude();
    let values = (0..g.vertex_count())
        .map(|v| {
            let p = g.position(v);
            let signal: f64 = placed.iter().map(|(c, a, s)| bump(p, c, *a, *s)).sum();
            signal + if noise > 0.0 { rng.uniform(-noise, noise) } else { 0.0 }
        })
        .collect();
    ScalarFieldGrid::new(*g, values, index)
}

fn generate_trends(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let g = spec.topology()?;
    let labels: Vec<usize> =
        spec.members_per_trend.iter().enumerate().flat_map(|(t, &m)| std::iter::repeat(t).take(m)).collect();
    let members = labels
        .par_iter()
        .enumerate()
        .map(|(i, &t)| member(spec, &g, &spec.trends[t], i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutput { ensemble: Ensemble::new(members)?, labels })
}

/// Members of each trend are sums of jittered bumps at the trend's sites
/// plus uniform noise; labels are trend indices, members grouped by trend.
pub fn gen_gaussian_trends(spec: &SynthSpec) -> Result<SynthOutput> {
    if spec.kind != SynthKind::GaussianTrends {
        return Err(Error::BadSynthSpec("expected a GaussianTrends spec".into()));
    }
    generate_trends(spec)
}

pub fn gen_two_site_trends(spec: &SynthSpec) -> Result<SynthOutput> {
    if spec.kind != SynthKind::TwoSiteTrends {
        return Err(Error::BadSynthSpec("expected a TwoSiteTrends spec".into()));
    }
    let a = &spec.trends[0].sites;
    let b = &spec.trends[1].sites;
    if a.iter().any(|s| b.iter().any(|t| t.center == s.center)) {
        return Err(Error::BadSynthSpec("the two trends must use distinct sites".into()));
    }
    generate_trends(spec)
}

/// Quartet with `f0` two hills, `f1 = f0 + noise`, `f2 = f0 + slope` and
/// `f3 = f0 + narrow extra hill`. In raw L2 the extra hill is the smallest
/// change and the noise the largest; in persistence maps of maxima the
/// slope is the smallest and the extra hill the largest.
pub fn gen_fig3_quartet(dims: &[usize], seed: u64) -> Result<[ScalarFieldGrid; 4]> {
    if dims.len() != 2 || dims.iter().any(|&d| d < 64) {
        return Err(Error::BadSynthSpec("the quartet needs a 2D grid of at least 64 x 64".into()));
    }
    let g = GridTopology::unit(dims)?;
    let ext = extents(&g);
    let min_ext = ext[0].min(ext[1]);
    let at = |fx: f64, fy: f64| [fx * ext[0], fy * ext[1]];
    let base = move |p: [f64; 3]| {
        bump(p, &at(0.3, 0.35), 1.0, 0.1 * min_ext) + bump(p, &at(0.68, 0.62), 0.8, 0.1 * min_ext)
    };
    let mut rng = SplitMix64::substream(seed, 1);
    let noise: Vec<f64> = (0..g.vertex_count()).map(|_| rng.uniform(-FIG3_NOISE, FIG3_NOISE)).collect();

    let f0 = ScalarFieldGrid::from_fn(g, 0, base)?;
    let f1 = ScalarFieldGrid::new(g, f0.values().iter().zip(&noise).map(|(a, b)| a + b).collect(), 1)?;
    let f2 = ScalarFieldGrid::from_fn(g, 2, |p| base(p) + FIG3_SLOPE * (p[0] / ext[0] + 0.5 * p[1] / ext[1]))?;
    let hill = at(0.75, 0.2);
    let f3 = ScalarFieldGrid::from_fn(g, 3, |p| base(p) + bump(p, &hill, FIG3_HILL, FIG3_HILL_SIGMA))?;
    Ok([f0, f1, f2, f3])
}

const FIG3_NOISE: f64 = 0.07;
const FIG3_SLOPE: f64 = 0.035;
const FIG3_HILL: f64 = 0.7;
/// In grid cells.
const FIG3_HILL_SIGMA: f64 = 2.0;

/// Dispatches on `spec.kind`. For the quartet, `dims` and `seed` are used
/// and the labels are `0..4`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    match spec.kind {
        SynthKind::GaussianTrends => gen_gaussian_trends(spec),
        SynthKind::TwoSiteTrends => gen_two_site_trends(spec),
        SynthKind::Fig3Quartet => {
            let fields = gen_fig3_quartet(&spec.dims, spec.seed)?;
            Ok(SynthOutput { ensemble: Ensemble::new(fields.to_vec())?, labels: vec![0, 1, 2, 3] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmap::{ensemble_maps, ExtremumKinds, MapParams};

    #[test]
    fn gaussians_sizes_and_labels() {
        let out = gen_gaussian_trends(&SynthSpec::gaussians(&[32, 32], 100, 0.03, 0.03, 0)).unwrap();
        assert_eq!(out.ensemble.len(), 100);
        assert_eq!(balanced_sizes(100, 3), vec![33, 33, 34]);
        for t in 0..3 {
            assert_eq!(out.labels.iter().filter(|&&l| l == t).count(), [33, 33, 34][t]);
        }
    }

    #[test]
    fn reproducible() {
        let spec = SynthSpec::gaussians(&[24, 20], 9, 0.05, 0.05, 42);
        let a = gen_gaussian_trends(&spec).unwrap();
        let b = gen_gaussian_trends(&spec).unwrap();
        assert_eq!(a.ensemble, b.ensemble);
        let c = gen_gaussian_trends(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.ensemble, c.ensemble);
    }

    #[test]
    fn no_variation_gives_identical_members_and_zero_map_distances() {
        let out = gen_gaussian_trends(&SynthSpec::gaussians(&[24, 24], 6, 0.0, 0.0, 1)).unwrap();
        for (i, a) in out.ensemble.members().iter().enumerate() {
            for (j, b) in out.ensemble.members().iter().enumerate() {
                if out.labels[i] == out.labels[j] {
                    assert_eq!(a.values(), b.values());
                }
            }
        }
        let (_, maps) = ensemble_maps(&out.ensemble, &MapParams::default()).unwrap();
        let d = crate::map_space::distance_matrix(&maps).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(d.get(i, j) == 0.0, out.labels[i] == out.labels[j]);
            }
        }
    }

    #[test]
    fn small_noise_leaves_one_surviving_pair_per_site() {
        let mut spec = SynthSpec::gaussians(&[64, 64], 6, 0.02, 0.004, 3);
        for t in &mut spec.trends {
            t.sites.retain(|s| s.amplitude > 0.0);
        }
        let out = gen_gaussian_trends(&spec).unwrap();
        let params = MapParams { kinds: ExtremumKinds::MAXIMA, ..Default::default() };
        let (diagrams, _) = ensemble_maps(&out.ensemble, &params).unwrap();
        for (d, &t) in diagrams.iter().zip(&out.labels) {
            let surviving = d
                .pairs_of(crate::topology::PairKind::SaddleMax)
                .filter(|p| p.persistence >= params.cull)
                .count();
            assert_eq!(surviving, spec.trends[t].sites.len());
        }
    }

    #[test]
    fn two_site_members_have_one_hill() {
        let spec = SynthSpec::two_site(&[32, 32], 6, 0.02, 0.0, 0);
        let out = gen_two_site_trends(&spec).unwrap();
        assert_eq!(out.labels, [vec![0; 6], vec![1; 6]].concat());
        let g = *out.ensemble.topology();
        for (f, &l) in out.ensemble.members().iter().zip(&out.labels) {
            let top = crate::grid::sorted_vertices(f.values()).pop().unwrap();
            let [x, y, _] = g.position(top);
            assert_eq!(x < 16.0 && y < 16.0, l == 0);
        }
        let mut same = spec.clone();
        same.trends[1] = same.trends[0].clone();
        assert!(gen_two_site_trends(&same).is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SynthSpec::gaussians(&[16, 16], 9, 0.0, 0.0, 0);
        spec.members_per_trend = vec![1, 4, 4];
        assert!(matches!(gen_gaussian_trends(&spec), Err(Error::BadSynthSpec(_))));
        let mut spec = SynthSpec::gaussians(&[16, 16], 9, 0.0, 0.0, 0);
        spec.trends.truncate(1);
        spec.members_per_trend.truncate(1);
        assert!(gen_gaussian_trends(&spec).is_err());
        let spec = SynthSpec::gaussians(&[16, 16, 16], 9, 0.0, 0.0, 0);
        assert!(gen_gaussian_trends(&spec).is_err());
        assert!(gen_fig3_quartet(&[32, 32], 0).is_err());
    }
}
