//! On-disk formats. Binary blobs are little-endian and x-fastest; CSV files
//! use CRLF line ends and 17 significant digits; PGM rasters are 16-bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atlas::{Atlas, LabelLayers};
use crate::error::{Error, Result};
use crate::grid::{min_max, Ensemble, GridTopology, ScalarFieldGrid};
use crate::map_space::DistanceMatrix;
use crate::pmap::PersistenceMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "float32" => Ok(Dtype::F32),
            "f64" | "float64" => Ok(Dtype::F64),
            _ => Err(Error::BadDtype(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub id: usize,
    pub path: PathBuf,
}

/// JSON description of an ensemble; member paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub spacing: Option<Vec<f64>>,
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
    pub dtype: String,
    #[serde(default = "little")]
    pub endianness: String,
    /// `"field"` for ensembles, `"pmap"` for persistence maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub members: Vec<ManifestMember>,
}

fn little() -> String {
    "little".to_string()
}

impl EnsembleManifest {
    pub fn for_topology(topology: &GridTopology, dtype: Dtype, kind: &str, paths: Vec<PathBuf>) -> Self {
        EnsembleManifest {
            dims: topology.dims().to_vec(),
            spacing: Some(topology.spacing().to_vec()),
            origin: Some(topology.origin().to_vec()),
            dtype: dtype.as_str().to_string(),
            endianness: little(),
            kind: Some(kind.to_string()),
            members: paths.into_iter().enumerate().map(|(id, path)| ManifestMember { id, path }).collect(),
        }
    }

    pub fn topology(&self) -> Result<GridTopology> {
        let ndim = self.dims.len();
        let spacing = self.spacing.clone().unwrap_or_else(|| vec![1.0; ndim]);
        let origin = self.origin.clone().unwrap_or_else(|| vec![0.0; ndim]);
        GridTopology::new(&self.dims, &spacing, &origin)
    }

    pub fn dtype(&self) -> Result<Dtype> {
        self.dtype.parse()
    }

    pub fn is_pmap(&self) -> bool {
        self.kind.as_deref() == Some("pmap")
    }
}

pub fn read_manifest(path: &Path) -> Result<EnsembleManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: EnsembleManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest { path: path.to_path_buf(), message: e.to_string() })?;
    if manifest.endianness != "little" {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            message: format!("unsupported endianness {:?}", manifest.endianness),
        });
    }
    manifest.dtype()?;
    for (position, m) in manifest.members.iter().enumerate() {
        if m.id != position {
            return Err(Error::NonContiguousIds { position, id: m.id });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &EnsembleManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn decode(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    }
}

fn encode(values: &[f64], dtype: Dtype) -> Vec<u8> {
    match dtype {
        Dtype::F32 => values.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect(),
        Dtype::F64 => values.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

/// Reads one blob of `topology.vertex_count()` values.
pub fn read_field_raw(path: &Path, topology: &GridTopology, dtype: Dtype, member: usize) -> Result<Vec<f64>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingBlob { member, path: path.to_path_buf() })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    let expected = (topology.vertex_count() * dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::BlobSize { member, path: path.to_path_buf(), expected, got: bytes.len() as u64 });
    }
    Ok(decode(&bytes, dtype))
}

pub fn write_raw(values: &[f64], path: &Path, dtype: Dtype) -> Result<()> {
    fs::write(path, encode(values, dtype)).map_err(|e| Error::io(path, e))
}

pub fn write_field_raw(field: &ScalarFieldGrid, path: &Path, dtype: Dtype) -> Result<()> {
    write_raw(field.values(), path, dtype)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads every member blob listed in the manifest, widened to f64.
pub fn read_ensemble(manifest_path: &Path) -> Result<Ensemble> {
    let manifest = read_manifest(manifest_path)?;
    let topology = manifest.topology()?;
    let dtype = manifest.dtype()?;
    let dir = manifest_dir(manifest_path);
    let members = manifest
        .members
        .iter()
        .map(|m| {
            let values = read_field_raw(&dir.join(&m.path), &topology, dtype, m.id)?;
            ScalarFieldGrid::new(topology, values, m.id)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

/// Writes `member_XXX.raw` blobs and `manifest.json` into `dir`; returns the manifest path.
pub fn write_ensemble(ensemble: &Ensemble, dir: &Path, dtype: Dtype) -> Result<PathBuf> {
    create_dir(dir)?;
    let width = digits(ensemble.len());
    let mut paths = Vec::with_capacity(ensemble.len());
    for (i, f) in ensemble.members().iter().enumerate() {
        let name = PathBuf::from(format!("member_{i:0width$}.raw"));
        write_field_raw(f, &dir.join(&name), dtype)?;
        paths.push(name);
    }
    let manifest_path = dir.join("manifest.json");
    write_manifest(&EnsembleManifest::for_topology(ensemble.topology(), dtype, "field", paths), &manifest_path)?;
    Ok(manifest_path)
}

/// Writes `pmap_XXX.raw` (f64) and `pmaps.json`; returns the manifest path.
pub fn write_pmaps(maps: &[PersistenceMap], dir: &Path) -> Result<PathBuf> {
    let first = maps.first().ok_or(Error::EmptyEnsemble)?;
    create_dir(dir)?;
    let width = digits(maps.len());
    let mut paths = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let name = PathBuf::from(format!("pmap_{i:0width$}.raw"));
        write_raw(&m.phi, &dir.join(&name), Dtype::F64)?;
        paths.push(name);
    }
    let path = dir.join("pmaps.json");
    write_manifest(&EnsembleManifest::for_topology(&first.topology, Dtype::F64, "pmap", paths), &path)?;
    Ok(path)
}

/// Reads a manifest's blobs as plain vectors (used for persistence maps).
pub fn read_vectors(manifest_path: &Path) -> Result<(EnsembleManifest, Vec<Vec<f64>>)> {
    let manifest = read_manifest(manifest_path)?;
    let topology = manifest.topology()?;
    let dtype = manifest.dtype()?;
    let dir = manifest_dir(manifest_path);
    let vectors = manifest
        .members
        .iter()
        .map(|m| read_field_raw(&dir.join(&m.path), &topology, dtype, m.id))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, vectors))
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// 17 significant digits: enough to re-parse every f64 exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

/// Writes rows of strings, the first row being the header if any.
pub fn write_csv_rows(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header-less numeric matrix.
pub fn write_csv_matrix(rows: &[Vec<f64>], path: &Path) -> Result<()> {
    write_csv_rows(path, rows.iter().map(|r| r.iter().map(|&x| format_f64(x)).collect()))
}

pub fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Csv { path: path.to_path_buf(), message: format!("bad number {s:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_distances(matrix: &DistanceMatrix, path: &Path) -> Result<()> {
    write_csv_matrix(&matrix.rows(), path)
}

pub fn read_distances(path: &Path) -> Result<DistanceMatrix> {
    DistanceMatrix::from_normalized(&read_csv_matrix(path)?)
}

/// `member_id,<column>` table of integer labels.
pub fn write_labels(labels: &[usize], column: &str, path: &Path) -> Result<()> {
    let header = vec!["member_id".to_string(), column.to_string()];
    write_csv_rows(path, std::iter::once(header).chain(labels.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()])))
}

pub fn write_ground_truth(labels: &[usize], path: &Path) -> Result<()> {
    write_labels(labels, "trend", path)
}

/// Maps `[min, max]` linearly onto `[0, 65535]`, rounding half to even.
/// A constant field maps to all zeros.
pub fn pgm_levels(values: &[f64]) -> Vec<u16> {
    let (lo, hi) = min_max(values);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values.iter().map(|&x| ((x - lo) / (hi - lo) * 65535.0).round_ties_even() as u16).collect()
}

/// Binary 16-bit PGM (P5, maxval 65535). Samples are big-endian as the
/// format requires; row `y = 0` comes first.
pub fn write_pgm(field: &ScalarFieldGrid, path: &Path) -> Result<()> {
    let topology = field.topology();
    if topology.ndim() != 2 {
        return Err(Error::NotPlanar);
    }
    let [w, h] = [topology.dims()[0], topology.dims()[1]];
    let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
    bytes.extend(pgm_levels(field.values()).iter().flat_map(|v| v.to_be_bytes()));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let text = serde_json::to_string_pretty(value)?;
    writeln!(file, "{text}").map_err(|e| Error::io(path, e))
}

fn write_label_layers(labels: &LabelLayers, ids: &Path, likelihood: &Path) -> Result<()> {
    let ids_bytes: Vec<u8> = labels.layers.iter().flatten().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(ids, ids_bytes).map_err(|e| Error::io(ids, e))?;
    let p_bytes: Vec<u8> = labels.likelihood.iter().flatten().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(likelihood, p_bytes).map_err(|e| Error::io(likelihood, e))
}

pub fn embedding_rows(atlas: &Atlas) -> Vec<Vec<String>> {
    let n_d = atlas.embedding.n_d;
    let header = std::iter::once("member_id".to_string()).chain((1..=n_d).map(|i| format!("psi_{i}"))).collect();
    std::iter::once(header)
        .chain(atlas.embedding.coords.iter().enumerate().map(|(x, c)| {
            std::iter::once(x.to_string()).chain(c.iter().map(|&v| format_f64(v))).collect()
        }))
        .collect()
}

pub fn write_eigenvalues(values: &[f64], path: &Path) -> Result<()> {
    let header = vec!["index".to_string(), "eigenvalue".to_string()];
    write_csv_rows(
        path,
        std::iter::once(header).chain(values.iter().enumerate().map(|(i, &l)| vec![i.to_string(), format_f64(l)])),
    )
}

/// Rows `k, delta_k` for `k = 1..n-1`.
pub fn write_eigengaps(gaps: &[f64], path: &Path) -> Result<()> {
    let header = vec!["k".to_string(), "eigengap".to_string()];
    write_csv_rows(
        path,
        std::iter::once(header).chain(gaps.iter().enumerate().map(|(i, &g)| vec![(i + 1).to_string(), format_f64(g)])),
    )
}

pub fn summary_json(atlas: &Atlas) -> serde_json::Value {
    let clusters: Vec<_> = atlas
        .summaries
        .iter()
        .map(|s| {
            let regions: Vec<_> = s
                .mandatory_minima
                .iter()
                .chain(&s.mandatory_maxima)
                .map(|r| {
                    json!({
                        "region_id": r.region_id,
                        "kind": r.kind.as_str(),
                        "interval": r.interval,
                        "vertex_count": r.component.len(),
                        "generator": r.generator,
                    })
                })
                .collect();
            json!({
                "cluster_id": s.cluster_id,
                "size": s.members.len(),
                "members": s.members,
                "medoid": atlas.clustering.medoids[s.cluster_id],
                "appearance_probability": s.appearance_probability,
                "mandatory_minima": s.mandatory_minima.len(),
                "mandatory_maxima": s.mandatory_maxima.len(),
                "regions": regions,
            })
        })
        .collect();
    let c = &atlas.config;
    json!({
        "member_count": atlas.member_count,
        "k": atlas.k(),
        "suggested_k": atlas.suggested_k,
        "knn": atlas.knn,
        "n_d": atlas.embedding.n_d,
        "gamma": c.gamma,
        "cull": c.cull,
        "kinds": c.kinds.name(),
        "seed": c.seed,
        "pmax": atlas.pmax,
        "objective": atlas.clustering.objective(),
        "lloyd_iterations": atlas.clustering.iterations,
        "clusters": clusters,
    })
}

/// Writes every atlas artifact into `dir` together with an `atlas.json` index.
pub fn write_atlas(atlas: &Atlas, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_label_layers(&atlas.minima_labels, &dir.join("labels_min.raw"), &dir.join("likelihood_min.raw"))?;
    write_label_layers(&atlas.maxima_labels, &dir.join("labels_max.raw"), &dir.join("likelihood_max.raw"))?;
    write_csv_rows(&dir.join("embedding.csv"), embedding_rows(atlas))?;
    write_eigenvalues(&atlas.embedding.eigenvalues, &dir.join("eigenvalues.csv"))?;
    write_eigengaps(&atlas.embedding.eigengaps, &dir.join("eigengaps.csv"))?;
    write_distances(&atlas.distances, &dir.join("distances.csv"))?;
    write_labels(&atlas.clustering.labels, "label", &dir.join("clusters.csv"))?;
    write_json(&summary_json(atlas), &dir.join("summary.json"))?;

    let t = &atlas.topology;
    let k = atlas.k();
    let n = atlas.member_count;
    let raster = |file: &str, dtype: &str, what: &str| {
        json!({ "file": file, "format": "raw", "dtype": dtype, "shape": [k, t.vertex_count()], "layers": k, "description": what })
    };
    let table = |file: &str, header: bool, what: &str| json!({ "file": file, "format": "csv", "header": header, "description": what });
    let index = json!({
        "endianness": "little",
        "dims": t.dims(),
        "spacing": t.spacing(),
        "origin": t.origin(),
        "vertex_count": t.vertex_count(),
        "layout": "x-fastest; one layer per cluster, layer c at offset c * vertex_count",
        "region_id": "cluster_id * 10000 + local_index + 1; 0 outside every region",
        "artifacts": [
            raster("labels_min.raw", "i32", "mandatory minimum region ids"),
            raster("labels_max.raw", "i32", "mandatory maximum region ids"),
            raster("likelihood_min.raw", "f32", "fraction of cluster members inside the critical interval"),
            raster("likelihood_max.raw", "f32", "fraction of cluster members inside the critical interval"),
            table("embedding.csv", true, "member_id, psi_1..psi_n_d"),
            table("eigenvalues.csv", true, "generalized Laplacian eigenvalues, ascending"),
            table("eigengaps.csv", true, "eigengap delta_k for k = 1..n-1"),
            json!({ "file": "distances.csv", "format": "csv", "header": false, "shape": [n, n],
                    "description": "normalized L2 distances between persistence maps" }),
            table("clusters.csv", true, "member_id, cluster label"),
            json!({ "file": "summary.json", "format": "json", "description": "per-cluster regions and probabilities" }),
        ],
    });
    write_json(&index, &dir.join("atlas.json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_atlas, AtlasConfig, KChoice};
    use crate::rng::SplitMix64;

    fn small_ensemble(m: usize) -> Ensemble {
        let g = GridTopology::new(&[5, 4], &[0.5, 2.0], &[1.0, -1.0]).unwrap();
        let mut rng = SplitMix64::new(11);
        let members = (0..m)
            .map(|i| ScalarFieldGrid::new(g, (0..20).map(|_| rng.uniform(-1.0, 1.0)).collect(), i).unwrap())
            .collect();
        Ensemble::new(members).unwrap()
    }

    #[test]
    fn ensemble_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let e = small_ensemble(3);
        let manifest = write_ensemble(&e, dir.path(), Dtype::F64).unwrap();
        assert_eq!(read_ensemble(&manifest).unwrap(), e);

        let m32 = write_ensemble(&e, &dir.path().join("f32"), Dtype::F32).unwrap();
        let back = read_ensemble(&m32).unwrap();
        for (a, b) in back.members().iter().zip(e.members()) {
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| *x == (*y as f32) as f64));
        }
    }

    #[test]
    fn two_member_three_by_three_manifest() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            let values: Vec<f64> = (0..9).map(|v| (v * (i + 1)) as f64).collect();
            write_raw(&values, &dir.path().join(format!("f{i}.bin")), Dtype::F64).unwrap();
        }
        let text = r#"{"dims":[3,3],"dtype":"f64","members":[{"id":0,"path":"f0.bin"},{"id":1,"path":"f1.bin"}]}"#;
        let path = dir.path().join("m.json");
        fs::write(&path, text).unwrap();
        let e = read_ensemble(&path).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.member(1).unwrap().value(4), 8.0);
    }

    #[test]
    fn manifest_errors_name_the_member() {
        let dir = tempfile::tempdir().unwrap();
        let e = small_ensemble(3);
        let manifest = write_ensemble(&e, dir.path(), Dtype::F64).unwrap();

        let blob = dir.path().join("member_001.raw");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 1]).unwrap();
        match read_ensemble(&manifest) {
            Err(Error::BlobSize { member: 1, expected: 160, got: 159, .. }) => {}
            other => panic!("{other:?}"),
        }
        fs::remove_file(&blob).unwrap();
        assert!(matches!(read_ensemble(&manifest), Err(Error::MissingBlob { member: 1, .. })));

        let mut m = read_manifest(&manifest).unwrap();
        m.dtype = "int8".into();
        write_manifest(&m, &manifest).unwrap();
        assert!(matches!(read_ensemble(&manifest), Err(Error::BadDtype(_))));

        let mut m = EnsembleManifest::for_topology(e.topology(), Dtype::F64, "field", vec!["a".into(), "b".into()]);
        m.members[1].id = 2;
        write_manifest(&m, &manifest).unwrap();
        assert!(matches!(read_ensemble(&manifest), Err(Error::NonContiguousIds { position: 1, id: 2 })));

        assert!(matches!(read_ensemble(&dir.path().join("nope.json")), Err(Error::Io { .. })));
        fs::write(&manifest, "{ not json").unwrap();
        assert!(matches!(read_ensemble(&manifest), Err(Error::Manifest { .. })));
    }

    #[test]
    fn csv_matrix_format_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![vec![0.0, 0.1, 1.0 / 3.0], vec![0.1, 0.0, 2.0e-300], vec![1.0 / 3.0, 2.0e-300, 0.0]];
        write_csv_matrix(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.split("\r\n").filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 3));
        assert_eq!(read_csv_matrix(&path).unwrap(), rows);
        assert_eq!(read_distances(&path).unwrap().get(0, 2), 1.0 / 3.0);
    }

    #[test]
    fn pgm_mapping() {
        assert_eq!(pgm_levels(&[0.0, 1.0, 2.0]), vec![0, 32768, 65535]);
        assert_eq!(pgm_levels(&[3.0, 3.0]), vec![0, 0]);

        let dir = tempfile::tempdir().unwrap();
        let g = GridTopology::unit(&[3, 2]).unwrap();
        let f = ScalarFieldGrid::new(g, vec![0.0, 1.0, 2.0, 2.0, 1.0, 0.0], 0).unwrap();
        let path = dir.path().join("f.pgm");
        write_pgm(&f, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..header.len() + 4], &[0, 0, 0x80, 0x00]);
        assert_eq!(bytes.len(), header.len() + 12);
    }

    #[test]
    fn atlas_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridTopology::unit(&[12, 12]).unwrap();
        let members = (0..6)
            .map(|i| {
                let c = if i < 3 { 3.0 } else { 8.0 };
                ScalarFieldGrid::from_fn(g, i, |[x, y, _]| (-((x - c).powi(2) + (y - c).powi(2)) / 6.0).exp() + 0.01 * i as f64 * x)
                    .unwrap()
            })
            .collect();
        let e = Ensemble::new(members).unwrap();
        let atlas = build_atlas(&e, &AtlasConfig { k: KChoice::Fixed(2), ..Default::default() }).unwrap();
        write_atlas(&atlas, dir.path()).unwrap();
        let size = |f: &str| fs::metadata(dir.path().join(f)).unwrap().len();
        assert_eq!(size("labels_min.raw"), 2 * 144 * 4);
        assert_eq!(size("likelihood_max.raw"), 2 * 144 * 4);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        for c in summary["clusters"].as_array().unwrap() {
            let p = c["appearance_probability"].as_f64().unwrap();
            assert_eq!(p, c["size"].as_f64().unwrap() / 6.0);
        }
        let index: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("atlas.json")).unwrap()).unwrap();
        assert_eq!(index["endianness"], "little");
        for a in index["artifacts"].as_array().unwrap() {
            assert!(dir.path().join(a["file"].as_str().unwrap()).exists());
        }
        let d = read_distances(&dir.path().join("distances.csv")).unwrap();
        assert_eq!(d.rows(), atlas.distances.rows());
        let clusters = fs::read_to_string(dir.path().join("clusters.csv")).unwrap();
        assert!(clusters.starts_with("member_id,label\r\n0,"));
    }
}
