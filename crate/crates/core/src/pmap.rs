//! Persistence maps: for every vertex `v`,
//! `phi(v) = sum_c P(c) * exp(-|v - c|^2 / (2 (gamma P(c))^2))`
//! over the extrema `c` of the surviving pairs, with distances measured in
//! units of the grid's bounding-box diagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ensemble, GridTopology};
use crate::topology::{compute_diagrams, normalize_diagrams, PairKind, PersistenceDiagram};

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_CULL: f64 = 0.01;

/// Beyond this exponent `exp(-x)` is exactly `0.0` in f64, so skipping those
/// terms leaves every sum bit-identical to full evaluation.
const UNDERFLOW_EXPONENT: f64 = 746.0;

/// Which extremum families contribute to a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremumKinds {
    pub minima: bool,
    pub maxima: bool,
}

impl ExtremumKinds {
    pub const BOTH: ExtremumKinds = ExtremumKinds { minima: true, maxima: true };
    pub const MINIMA: ExtremumKinds = ExtremumKinds { minima: true, maxima: false };
    pub const MAXIMA: ExtremumKinds = ExtremumKinds { minima: false, maxima: true };

    pub fn includes(&self, kind: PairKind) -> bool {
        match kind {
            PairKind::MinSaddle => self.minima,
            PairKind::SaddleMax => self.maxima,
        }
    }

    pub fn selected(&self) -> impl Iterator<Item = PairKind> + '_ {
        [PairKind::MinSaddle, PairKind::SaddleMax].into_iter().filter(|k| self.includes(*k))
    }

    pub fn name(&self) -> &'static str {
        match (self.minima, self.maxima) {
            (true, true) => "both",
            (true, false) => "minima",
            (false, true) => "maxima",
            (false, false) => "none",
        }
    }
}

impl Default for ExtremumKinds {
    fn default() -> Self {
        ExtremumKinds::BOTH
    }
}

impl std::str::FromStr for ExtremumKinds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" | "all" | "minima,maxima" | "maxima,minima" => Ok(ExtremumKinds::BOTH),
            "minima" | "min" => Ok(ExtremumKinds::MINIMA),
            "maxima" | "max" => Ok(ExtremumKinds::MAXIMA),
            _ => Err(Error::NoKinds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub gamma: f64,
    pub kinds: ExtremumKinds,
    /// Pairs whose normalized persistence is below this value are ignored.
    pub cull: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams { gamma: DEFAULT_GAMMA, kinds: ExtremumKinds::BOTH, cull: DEFAULT_CULL }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::BadGamma(self.gamma));
        }
        if !(0.0..1.0).contains(&self.cull) {
            return Err(Error::BadCull(self.cull));
        }
        if !self.kinds.minima && !self.kinds.maxima {
            return Err(Error::NoKinds);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceMap {
    pub member_id: usize,
    pub topology: GridTopology,
    pub phi: Vec<f64>,
    pub params: MapParams,
}

/// Gaussian splat of one extremum.
struct Splat {
    center: [usize; 3],
    amplitude: f64,
    /// `1 / (2 sigma^2)` in normalized units
    inv_two_sigma_sq: f64,
    lo: [usize; 3],
    hi: [usize; 3],
}

fn splats(topology: &GridTopology, diagram: &PersistenceDiagram, params: &MapParams, kind: PairKind) -> Vec<Splat> {
    let diag = topology.bbox_diagonal();
    let dims = topology.dims();
    diagram
        .pairs_of(kind)
        .filter(|p| p.persistence > 0.0 && p.persistence >= params.cull)
        .map(|p| {
            let sigma = params.gamma * p.persistence;
            let center = topology.delinearize(p.extremum_vertex);
            let reach = (2.0 * UNDERFLOW_EXPONENT).sqrt() * sigma * diag;
            let mut lo = [0; 3];
            let mut hi = [0; 3];
            for a in 0..topology.ndim() {
                let cells = (reach / topology.spacing()[a]).ceil();
                let cells = if cells.is_finite() && cells < dims[a] as f64 { cells as usize } else { dims[a] };
                lo[a] = center[a].saturating_sub(cells);
                hi[a] = (center[a] + cells).min(dims[a] - 1);
            }
            Splat { center, amplitude: p.persistence, inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma), lo, hi }
        })
        .collect()
}

/// Adds the contributions of `splats`, in order, to one x-line of the grid.
fn accumulate_line(topology: &GridTopology, splats: &[Splat], j: usize, k: usize, line: &mut [f64]) {
    let diag_sq = topology.bbox_diagonal() * topology.bbox_diagonal();
    let s = topology.spacing();
    for sp in splats {
        if j < sp.lo[1] || j > sp.hi[1] || k < sp.lo[2] || k > sp.hi[2] {
            continue;
        }
        let dy = (j as f64 - sp.center[1] as f64) * s[1];
        let dz = if topology.ndim() == 3 { (k as f64 - sp.center[2] as f64) * s[2] } else { 0.0 };
        for i in sp.lo[0]..=sp.hi[0] {
            let dx = (i as f64 - sp.center[0] as f64) * s[0];
            let d2 = (dx * dx + dy * dy + dz * dz) / diag_sq;
            line[i] += sp.amplitude * (-d2 * sp.inv_two_sigma_sq).exp();
        }
    }
}

fn evaluate(topology: &GridTopology, splats: &[Splat]) -> Vec<f64> {
    let nx = topology.dims()[0];
    let ny = topology.dims()[1];
    let mut phi = vec![0.0; topology.vertex_count()];
    phi.par_chunks_mut(nx).enumerate().for_each(|(row, line)| {
        accumulate_line(topology, splats, row % ny, row / ny, line);
    });
    phi
}

/// Persistence map of one member from its normalized diagram.
///
/// Minima and maxima are summed separately and added at the end, so the map
/// for both kinds equals the sum of the single-kind maps exactly.
pub fn compute_map(topology: &GridTopology, diagram: &PersistenceDiagram, params: &MapParams) -> Result<PersistenceMap> {
    params.validate()?;
    if !diagram.is_normalized() {
        return Err(Error::NotNormalized(diagram.member_id));
    }
    let mut phi = vec![0.0; topology.vertex_count()];
    for kind in [PairKind::MinSaddle, PairKind::SaddleMax] {
        let partial = if params.kinds.includes(kind) {
            evaluate(topology, &splats(topology, diagram, params, kind))
        } else {
            vec![0.0; phi.len()]
        };
        if kind == PairKind::MinSaddle {
            phi = partial;
        } else {
            phi.iter_mut().zip(partial).for_each(|(a, b)| *a += b);
        }
    }
    Ok(PersistenceMap { member_id: diagram.member_id, topology: *topology, phi, params: *params })
}

/// Maps for all diagrams, in parallel across members.
pub fn compute_maps(
    topology: &GridTopology,
    diagrams: &[PersistenceDiagram],
    params: &MapParams,
) -> Result<Vec<PersistenceMap>> {
    diagrams.par_iter().map(|d| compute_map(topology, d, params)).collect()
}

/// Ensemble-normalized diagrams followed by the map of one member.
pub fn map_for_member(ensemble: &Ensemble, member_id: usize, params: &MapParams) -> Result<PersistenceMap> {
    ensemble.member(member_id)?;
    let diagrams = normalize_diagrams(compute_diagrams(ensemble))?;
    compute_map(ensemble.topology(), &diagrams[member_id], params)
}

/// Diagrams and maps of every member of an ensemble.
pub fn ensemble_maps(ensemble: &Ensemble, params: &MapParams) -> Result<(Vec<PersistenceDiagram>, Vec<PersistenceMap>)> {
    params.validate()?;
    let diagrams = normalize_diagrams(compute_diagrams(ensemble))?;
    let maps = compute_maps(ensemble.topology(), &diagrams, params)?;
    Ok((diagrams, maps))
}
