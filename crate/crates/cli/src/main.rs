//! `patlas`: command-line front-end for the persistence atlas pipeline.
//!
//! Exit codes: 0 on success, 1 on invalid input (`ERROR:<code>:` on stderr),
//! 2 on file-system failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use persistence_atlas::atlas::{
    build_atlas, predict_all, with_threads, AtlasConfig, KChoice, DEFAULT_PERSISTENCE_THRESHOLD,
};
use persistence_atlas::baseline::{baseline_convex_hulls, baseline_predict};
use persistence_atlas::io::{
    self, create_dir, format_f64, read_distances, read_ensemble, read_manifest, read_vectors, write_csv_rows,
    write_distances, write_eigengaps, write_eigenvalues, write_ensemble, write_ground_truth, write_labels,
    write_pmaps, Dtype,
};
use persistence_atlas::map_space::{
    distance_matrix, embed, generalized_eigs, knn_graph, laplacian, lloyd_medoids, raw_distances, suggest_k,
    DistanceMatrix, DEFAULT_KNN,
};
use persistence_atlas::pmap::{ensemble_maps, ExtremumKinds, MapParams, DEFAULT_CULL, DEFAULT_GAMMA};
use persistence_atlas::synth::{self, SynthSpec};
use persistence_atlas::topology::{compute_diagrams, normalize_diagrams};
use persistence_atlas::{Ensemble, Error, Result};

#[derive(Parser)]
#[command(name = "patlas", version, about = "Persistence atlas of ensemble scalar fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ensemble with ground-truth labels
    Synth(SynthArgs),
    /// Persistence diagrams of every member
    Diagram(StageArgs),
    /// Persistence maps of every member
    Pmap(PmapArgs),
    /// Normalized L2 distances between persistence maps
    Distances(PmapArgs),
    /// Laplacian eigenmap of the members
    Embed(EmbedArgs),
    /// Cluster the members in the eigenmap
    Cluster(ClusterArgs),
    /// Full pipeline: maps, embedding, clustering, mandatory critical points
    Atlas(AtlasArgs),
    /// Predict the regions of held-out members' persistent extrema
    Predict(PredictArgs),
    /// Convex-hull baseline evaluated on held-out members
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Ensemble manifest (JSON)
    #[arg(long)]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    /// Worker threads (default: PA_THREADS or all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct MapFlags {
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_CULL)]
    cull: f64,
    /// both, minima or maxima
    #[arg(long, default_value = "both")]
    kinds: String,
}

impl MapFlags {
    fn params(&self) -> Result<MapParams> {
        let p = MapParams { gamma: self.gamma, cull: self.cull, kinds: self.kinds.parse()? };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct PmapArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[command(flatten)]
    map: MapFlags,
}

#[derive(Args)]
struct GraphFlags {
    /// Nearest neighbors per member (default 5, at most n - 1)
    #[arg(long)]
    knn: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    pmap: PmapArgs,
    #[command(flatten)]
    graph: GraphFlags,
    /// Embedding dimension
    #[arg(long, default_value_t = 2)]
    ndim: usize,
}

#[derive(Args)]
struct ClusterFlags {
    /// Cluster count or "auto"
    #[arg(long, default_value = "auto")]
    k: KChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    pmap: PmapArgs,
    #[command(flatten)]
    graph: GraphFlags,
    #[command(flatten)]
    cluster: ClusterFlags,
}

#[derive(Args)]
struct AtlasArgs {
    #[command(flatten)]
    pmap: PmapArgs,
    #[command(flatten)]
    graph: GraphFlags,
    #[command(flatten)]
    cluster: ClusterFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    atlas: AtlasArgs,
    /// Manifest of the held-out members
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PERSISTENCE_THRESHOLD)]
    persistence_threshold: f64,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "both")]
    kinds: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PERSISTENCE_THRESHOLD)]
    persistence_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Gaussians,
    Fig3,
    TwoSite,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "gaussians")]
    preset: Preset,
    /// Grid points per axis (square grids)
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Total members (gaussians) or members per trend (two-site)
    #[arg(long)]
    members: Option<usize>,
    #[arg(long, default_value_t = 0.03)]
    jitter: f64,
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "f64")]
    dtype: String,
    /// Also write a 16-bit PGM of every member
    #[arg(long)]
    pgm: bool,
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("PA_THREADS") {
        Ok(s) if !s.trim().is_empty() && s.trim() != "auto" => {
            s.trim().parse().map(Some).map_err(|_| Error::BadThreads(0))
        }
        _ => Ok(None),
    }
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Distances from an ensemble manifest, a persistence-map manifest or a CSV matrix.
fn load_distances(input: &Path, map: &MapFlags) -> Result<DistanceMatrix> {
    if is_csv(input) {
        return read_distances(input);
    }
    let manifest = read_manifest(input)?;
    if manifest.is_pmap() {
        let (_, vectors) = read_vectors(input)?;
        if vectors.len() < 2 {
            return Err(Error::TooFewMembers { needed: 2, got: vectors.len() });
        }
        let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
        return DistanceMatrix::from_raw(vectors.len(), raw_distances(&refs));
    }
    let ensemble = read_ensemble(input)?;
    let (_, maps) = ensemble_maps(&ensemble, &map.params()?)?;
    distance_matrix(&maps)
}

fn knn_for(flag: Option<usize>, n: usize) -> usize {
    flag.unwrap_or_else(|| DEFAULT_KNN.min(n.saturating_sub(1)))
}

fn atlas_config(a: &AtlasArgs) -> Result<AtlasConfig> {
    let map = a.pmap.map.params()?;
    Ok(AtlasConfig {
        gamma: map.gamma,
        cull: map.cull,
        knn: a.graph.knn,
        kinds: map.kinds,
        k: a.cluster.k,
        seed: a.cluster.seed,
        threads: None,
    })
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let dtype: Dtype = a.dtype.parse()?;
    let dims = [a.size, a.size];
    let spec = match a.preset {
        Preset::Gaussians => SynthSpec::gaussians(&dims, a.members.unwrap_or(100), a.jitter, a.noise, a.seed),
        Preset::TwoSite => SynthSpec::two_site(&dims, a.members.unwrap_or(6), a.jitter, a.noise, a.seed),
        Preset::Fig3 => SynthSpec {
            kind: synth::SynthKind::Fig3Quartet,
            dims: dims.to_vec(),
            trends: Vec::new(),
            members_per_trend: Vec::new(),
            jitter_sigma: 0.0,
            noise_amp: 0.0,
            seed: a.seed,
        },
    };
    let out = synth::generate(&spec)?;
    let manifest = write_ensemble(&out.ensemble, &a.output, dtype)?;
    write_ground_truth(&out.labels, &a.output.join("ground_truth.csv"))?;
    if a.pgm {
        for (i, f) in out.ensemble.members().iter().enumerate() {
            io::write_pgm(f, &a.output.join(format!("member_{i:03}.pgm")))?;
        }
    }
    emit(json!({ "members": out.ensemble.len(), "manifest": manifest, "dims": dims }));
    Ok(())
}

fn run_diagram(a: &StageArgs) -> Result<()> {
    let ensemble = read_ensemble(&a.input)?;
    let diagrams = normalize_diagrams(compute_diagrams(&ensemble))?;
    create_dir(&a.output)?;
    let header = ["member_id", "kind", "extremum_vertex", "paired_vertex", "birth", "death", "persistence_raw", "persistence"]
        .map(String::from)
        .to_vec();
    let rows = diagrams.iter().flat_map(|d| {
        d.pairs.iter().map(move |p| {
            vec![
                d.member_id.to_string(),
                p.kind.as_str().to_string(),
                p.extremum_vertex.to_string(),
                p.paired_vertex.to_string(),
                format_f64(p.birth),
                format_f64(p.death),
                format_f64(p.persistence_raw),
                format_f64(p.persistence),
            ]
        })
    });
    write_csv_rows(&a.output.join("diagrams.csv"), std::iter::once(header).chain(rows))?;
    let pairs: usize = diagrams.iter().map(|d| d.pairs.len()).sum();
    emit(json!({ "members": diagrams.len(), "pairs": pairs, "pmax": diagrams[0].scale }));
    Ok(())
}

fn run_pmap(a: &PmapArgs) -> Result<()> {
    let ensemble = read_ensemble(&a.stage.input)?;
    let (_, maps) = ensemble_maps(&ensemble, &a.map.params()?)?;
    let manifest = write_pmaps(&maps, &a.stage.output)?;
    emit(json!({ "members": maps.len(), "manifest": manifest }));
    Ok(())
}

fn run_distances(a: &PmapArgs) -> Result<()> {
    let matrix = load_distances(&a.stage.input, &a.map)?;
    create_dir(&a.stage.output)?;
    write_distances(&matrix, &a.stage.output.join("distances.csv"))?;
    emit(json!({ "members": matrix.n(), "raw_max": matrix.raw_max() }));
    Ok(())
}

fn run_embed(a: &EmbedArgs) -> Result<()> {
    let matrix = load_distances(&a.pmap.stage.input, &a.pmap.map)?;
    let n = matrix.n();
    let eigs = generalized_eigs(&laplacian(&knn_graph(&matrix, knn_for(a.graph.knn, n))?)?)?;
    let e = embed(&eigs, a.ndim)?;
    let out = &a.pmap.stage.output;
    create_dir(out)?;
    let header = std::iter::once("member_id".to_string()).chain((1..=e.n_d).map(|i| format!("psi_{i}"))).collect();
    let rows = e.coords.iter().enumerate().map(|(x, c)| std::iter::once(x.to_string()).chain(c.iter().map(|&v| format_f64(v))).collect());
    write_csv_rows(&out.join("embedding.csv"), std::iter::once(header).chain(rows))?;
    write_eigenvalues(&e.eigenvalues, &out.join("eigenvalues.csv"))?;
    write_eigengaps(&e.eigengaps, &out.join("eigengaps.csv"))?;
    emit(json!({ "suggested_k": e.suggested_k(), "eigengaps": e.eigengaps }));
    Ok(())
}

fn run_cluster(a: &ClusterArgs) -> Result<()> {
    let matrix = load_distances(&a.pmap.stage.input, &a.pmap.map)?;
    let n = matrix.n();
    if let KChoice::Fixed(k) = a.cluster.k {
        if k < 1 || k > n {
            return Err(Error::BadK { k, n });
        }
    }
    let eigs = generalized_eigs(&laplacian(&knn_graph(&matrix, knn_for(a.graph.knn, n))?)?)?;
    let suggested = suggest_k(&eigs.values);
    let k = match a.cluster.k {
        KChoice::Auto => suggested,
        KChoice::Fixed(k) => k,
    };
    let e = embed(&eigs, (k.max(2) - 1).min(n - 1))?;
    let c = lloyd_medoids(&e.coords, k, a.cluster.seed)?;
    create_dir(&a.pmap.stage.output)?;
    write_labels(&c.labels, "label", &a.pmap.stage.output.join("clusters.csv"))?;
    emit(json!({ "suggested_k": suggested, "k_used": k, "eigengaps": e.eigengaps, "objective": c.objective() }));
    Ok(())
}

fn run_atlas(a: &AtlasArgs) -> Result<()> {
    let ensemble = read_ensemble(&a.pmap.stage.input)?;
    let atlas = build_atlas(&ensemble, &atlas_config(a)?)?;
    io::write_atlas(&atlas, &a.pmap.stage.output)?;
    let t = atlas.timings;
    emit(json!({
        "suggested_k": atlas.suggested_k,
        "k_used": atlas.k(),
        "eigengaps": atlas.embedding.eigengaps,
        "timings": { "pm": t.pm, "dm": t.dm, "e": t.e, "c": t.c, "mcp": t.mcp },
    }));
    Ok(())
}

fn prediction_rows(report: &persistence_atlas::atlas::PredictionReport) -> Vec<Vec<String>> {
    let header = ["member_id", "cluster", "kind", "vertex", "persistence_raw", "region_id"].map(String::from).to_vec();
    std::iter::once(header)
        .chain(report.members.iter().flat_map(|m| {
            m.extrema.iter().map(move |e| {
                vec![
                    m.member_id.to_string(),
                    m.cluster.map_or(String::new(), |c| c.to_string()),
                    e.kind.as_str().to_string(),
                    e.vertex.to_string(),
                    format_f64(e.persistence_raw),
                    e.region_id.map_or("MISS".to_string(), |r| r.to_string()),
                ]
            })
        }))
        .collect()
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let train = read_ensemble(&a.atlas.pmap.stage.input)?;
    let test = read_ensemble(&a.test)?;
    let atlas = build_atlas(&train, &atlas_config(&a.atlas)?)?;
    let report = predict_all(&atlas, test.members(), a.persistence_threshold)?;
    let out = &a.atlas.pmap.stage.output;
    io::write_atlas(&atlas, out)?;
    write_csv_rows(&out.join("prediction.csv"), prediction_rows(&report))?;
    emit(json!({ "k_used": atlas.k(), "hits": report.hits, "total": report.total, "hit_rate": report.hit_rate }));
    Ok(())
}

fn run_baseline(a: &BaselineArgs) -> Result<()> {
    let kinds: ExtremumKinds = a.kinds.parse()?;
    let train = read_ensemble(&a.stage.input)?;
    let test: Ensemble = read_ensemble(&a.test)?;
    let baseline = baseline_convex_hulls(&train, kinds, a.persistence_threshold, a.seed)?;
    let report = baseline_predict(&baseline, test.members(), a.persistence_threshold)?;
    create_dir(&a.stage.output)?;
    let hulls = serde_json::to_string_pretty(&baseline)?;
    let path = a.stage.output.join("baseline_hulls.json");
    std::fs::write(&path, hulls + "\n").map_err(|e| Error::Io { path, source: e })?;
    write_csv_rows(&a.stage.output.join("baseline_prediction.csv"), prediction_rows(&report))?;
    emit(json!({ "regions": baseline.regions.len(), "hits": report.hits, "total": report.total, "hit_rate": report.hit_rate }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let pool = match &cli.command {
        Command::Synth(a) => a.threads,
        Command::Diagram(a) => a.threads,
        Command::Pmap(a) | Command::Distances(a) => a.stage.threads,
        Command::Embed(a) => a.pmap.stage.threads,
        Command::Cluster(a) => a.pmap.stage.threads,
        Command::Atlas(a) => a.pmap.stage.threads,
        Command::Predict(a) => a.atlas.pmap.stage.threads,
        Command::Baseline(a) => a.stage.threads,
    };
    with_threads(threads(pool)?, move || match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Diagram(a) => run_diagram(a),
        Command::Pmap(a) => run_pmap(a),
        Command::Distances(a) => run_distances(a),
        Command::Embed(a) => run_embed(a),
        Command::Cluster(a) => run_cluster(a),
        Command::Atlas(a) => run_atlas(a),
        Command::Predict(a) => run_predict(a),
        Command::Baseline(a) => run_baseline(a),
    })?
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("ERROR:USAGE: {first}");
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR:{}: {e}", e.code());
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
