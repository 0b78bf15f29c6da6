//! Command-line driver: one subcommand per pipeline plus a synthetic scene
//! generator. All outputs are deterministic for a given input set, config,
//! and seed, at any parallelism level.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use svmap::error::{Error, Result};
use svmap::formats::{
    load_landcover, load_pano_metadata, load_registry, object_feature, read_jsonl,
    save_landcover, save_pano_metadata, slice_feature, tree_feature, write_geojson, write_jsonl,
    DetectionRecord, OutputMeta, PanoEntry, TrunkObsRecord,
};
use svmap::geo::{GeoPoint, PanoramaPose};
use svmap::synthetic::{
    project_billboard, project_cylinder, render_landcover, NoiseGen, SceneSpec,
};
use svmap::tacheometry::{
    localize_detection, merge_observations, DimensionRegistry, LocatedObject,
    DEFAULT_MERGE_RADIUS_M,
};
use svmap::triangulation::{
    aggregate_tree, candidate_pairs, diameter_from_pair, match_by_depth, plan_thumbnails,
    triangulate, DiameterMode, StereoPair, TriangulatedTree, TrunkObservation,
    DEFAULT_MATCH_DISTANCE_M,
};
use svmap::width::{measure_widths, SliceFilters, WidthConfig};

#[derive(Parser)]
#[command(name = "svmap", version, about = "Street-level imagery measurement pipelines")]
struct Cli {
    /// Worker threads for batch stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure land-cover widths along scanlines perpendicular to the street.
    Width(WidthArgs),
    /// Localize known-dimension detections around their panoramas.
    Localize(LocalizeArgs),
    /// List the stereo thumbnail pairs for adjacent panoramas.
    Pair(PairArgs),
    /// Triangulate trunk observations and measure diameters.
    Diameter(DiameterArgs),
    /// Generate a synthetic scene with ground-truth observation files.
    Synth(SynthArgs),
    /// Merge repeated object observations within a linkage radius.
    Merge(MergeArgs),
}

#[derive(Args)]
struct WidthArgs {
    /// Land-cover raster (8-bit PNG or PGM).
    #[arg(long)]
    raster: PathBuf,
    /// Georeferencing sidecar JSON (default: raster path + .json).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Target land-cover class name.
    #[arg(long)]
    class: String,
    #[arg(long, default_value_t = svmap::width::DEFAULT_INTERVAL_M)]
    interval_m: f64,
    #[arg(long, default_value_t = svmap::width::DEFAULT_KERNEL_PX)]
    kernel_px: usize,
    #[arg(long, default_value_t = svmap::width::DEFAULT_MIN_COVER_RATIO)]
    min_cover_ratio: f64,
    /// Comma-separated touching classes that keep a slice valid.
    #[arg(long)]
    allow_touching: Option<String>,
    #[arg(long)]
    min_length_m: Option<f64>,
    #[arg(long)]
    max_length_m: Option<f64>,
    /// Output GeoJSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Panorama metadata JSONL.
    #[arg(long)]
    panos: PathBuf,
    /// Detections JSONL.
    #[arg(long)]
    detections: PathBuf,
    /// Dimension registry JSON (default: built-in stop-sign registry).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Output GeoJSON path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the located objects as JSONL (input format of `merge`).
    #[arg(long)]
    objects_out: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// Panorama metadata JSONL.
    #[arg(long)]
    panos: PathBuf,
    /// Output JSONL of thumbnail pairs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiameterArgs {
    /// Panorama metadata JSONL.
    #[arg(long)]
    panos: PathBuf,
    /// Trunk observations JSONL.
    #[arg(long)]
    observations: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Tangent)]
    mode: ModeArg,
    /// Same-tree matching distance between coarse positions, meters.
    #[arg(long, default_value_t = DEFAULT_MATCH_DISTANCE_M)]
    match_distance_m: f64,
    /// Output GeoJSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tangent,
    ExactCylinder,
}

impl From<ModeArg> for DiameterMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tangent => DiameterMode::Tangent,
            ModeArg::ExactCylinder => DiameterMode::ExactCylinder,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    resolution_m: f64,
    /// Side length of the rendered land-cover map, meters.
    #[arg(long, default_value_t = 100.0)]
    extent_m: f64,
    /// Street heading recorded on the raster, degrees.
    #[arg(long, default_value_t = 0.0)]
    raster_heading_deg: f64,
    /// Override the scene's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MergeArgs {
    /// Located objects JSONL (from `localize --objects-out`).
    #[arg(long)]
    objects: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MERGE_RADIUS_M)]
    radius_m: f64,
    /// Output GeoJSON path.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not set thread pool size: {e}");
        }
    }
    let result = match cli.command {
        Command::Width(args) => run_width(&args),
        Command::Localize(args) => run_localize(&args),
        Command::Pair(args) => run_pair(&args),
        Command::Diameter(args) => run_diameter(&args),
        Command::Synth(args) => run_synth(&args),
        Command::Merge(args) => run_merge(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Schema { .. } => 2,
                Error::Io { .. } => 4,
                _ => 3,
            })
        }
    }
}

fn sorted_key(p: &GeoPoint) -> (u64, u64) {
    // total order on coordinates for deterministic feature ordering
    (p.lat.to_bits(), p.lon.to_bits())
}

fn run_width(args: &WidthArgs) -> Result<()> {
    let sidecar = args
        .sidecar
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.json", args.raster.display())));
    let raster = load_landcover(&args.raster, &sidecar)?;
    let mut config = WidthConfig::new(args.class.clone());
    config.interval_m = args.interval_m;
    config.kernel_px = args.kernel_px;
    config.filters = SliceFilters {
        min_cover_ratio: args.min_cover_ratio,
        allowed_touching: match &args.allow_touching {
            Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
            None => SliceFilters::default().allowed_touching,
        },
        min_length_m: args.min_length_m,
        max_length_m: args.max_length_m,
    };
    let slices = measure_widths(&raster, &config)?;
    let source = args
        .raster
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.raster.display().to_string());
    let features = slices
        .iter()
        .map(|s| slice_feature(s, &raster.center, &source))
        .collect::<Result<Vec<_>>>()?;
    let mut meta = OutputMeta::new(json!({
        "command": "width",
        "class": args.class,
        "interval_m": config.interval_m,
        "kernel_px": config.kernel_px,
        "min_cover_ratio": config.filters.min_cover_ratio,
        "allowed_touching": config.filters.allowed_touching,
        "min_length_m": config.filters.min_length_m,
        "max_length_m": config.filters.max_length_m,
    }));
    meta.hash_input(&args.raster)?;
    meta.hash_input(&sidecar)?;
    write_geojson(features, &meta, &args.out)
}

fn pose_index(entries: &[PanoEntry]) -> BTreeMap<&str, &PanoramaPose> {
    entries
        .iter()
        .map(|e| (e.pose.pano_id.as_str(), &e.pose))
        .collect()
}

fn run_localize(args: &LocalizeArgs) -> Result<()> {
    use rayon::prelude::*;

    let entries = load_pano_metadata(&args.panos)?;
    let poses = pose_index(&entries);
    let detections: Vec<DetectionRecord> = read_jsonl(&args.detections)?;
    let registry = match &args.registry {
        Some(path) => load_registry(path)?,
        None => DimensionRegistry::builtin(),
    };

    let results: Vec<Result<LocatedObject>> = detections
        .par_iter()
        .map(|det| {
            let pano_id = det.pano_id()?;
            let pose = poses.get(pano_id).ok_or_else(|| {
                Error::InvalidDetection(format!("unknown panorama {pano_id}"))
            })?;
            localize_detection(pose, &det.class, &det.pixel_box()?, &registry)
        })
        .collect();

    let mut objects = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(obj) => objects.push(obj),
            Err(e) => {
                failures += 1;
                log::warn!("detection skipped: {e}");
            }
        }
    }
    if !detections.is_empty() && objects.is_empty() {
        return Err(Error::DegenerateGeometry(format!(
            "all {failures} detections failed"
        )));
    }
    objects.sort_by(|a, b| {
        (a.source_pano.as_str(), sorted_key(&a.position))
            .cmp(&(b.source_pano.as_str(), sorted_key(&b.position)))
    });
    if let Some(path) = &args.objects_out {
        write_jsonl(&objects, path)?;
    }
    let mut meta = OutputMeta::new(json!({
        "command": "localize",
        "registry": args.registry.as_ref().map(|p| p.display().to_string()),
        "skipped": failures,
    }));
    meta.hash_input(&args.panos)?;
    meta.hash_input(&args.detections)?;
    if let Some(path) = &args.registry {
        meta.hash_input(path)?;
    }
    write_geojson(objects.iter().map(object_feature).collect(), &meta, &args.out)
}

fn run_pair(args: &PairArgs) -> Result<()> {
    let entries = load_pano_metadata(&args.panos)?;
    let mut records = Vec::new();
    for pair in entries.windows(2) {
        let (rear, front) = (&pair[0], &pair[1]);
        if !rear.same_sequence(front) {
            continue;
        }
        for (front_thumb, rear_thumb) in candidate_pairs(&rear.pose, &front.pose, 1)? {
            records.push(json!({
                "rear_pano": rear.pose.pano_id,
                "front_pano": front.pose.pano_id,
                "rear_thumbnail": rear_thumb,
                "front_thumbnail": front_thumb,
            }));
        }
    }
    write_jsonl(&records, &args.out)
}

fn cluster_observations(
    observations: &[TrunkObservation],
    max_dist_m: f64,
) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..observations.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..observations.len() {
        for j in (i + 1)..observations.len() {
            if match_by_depth(&observations[i], &observations[j], max_dist_m) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..observations.len() {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(i);
    }
    clusters.into_values().collect()
}

fn run_diameter(args: &DiameterArgs) -> Result<()> {
    use rayon::prelude::*;

    let entries = load_pano_metadata(&args.panos)?;
    let poses = pose_index(&entries);
    let records: Vec<TrunkObsRecord> = read_jsonl(&args.observations)?;
    let observations: Vec<TrunkObservation> = records
        .iter()
        .map(|r| {
            let pose = poses.get(r.pano_id.as_str()).ok_or_else(|| {
                Error::InvalidObservation(format!("unknown panorama {}", r.pano_id))
            })?;
            r.resolve(pose)
        })
        .collect::<Result<_>>()?;

    let mode: DiameterMode = args.mode.into();
    let clusters = cluster_observations(&observations, args.match_distance_m);
    let trees: Vec<Result<TriangulatedTree>> = clusters
        .par_iter()
        .map(|members| {
            let mut measurements = Vec::new();
            for (mi, &i) in members.iter().enumerate() {
                for &j in &members[mi + 1..] {
                    let (a, b) = (&observations[i], &observations[j]);
                    if a.pano_id == b.pano_id {
                        continue;
                    }
                    let pair = StereoPair::new(
                        poses[a.pano_id.as_str()],
                        a.clone(),
                        poses[b.pano_id.as_str()],
                        b.clone(),
                    )?;
                    let mut tree = triangulate(&pair)?;
                    diameter_from_pair(&pair, &mut tree, mode)?;
                    measurements.push(tree);
                }
            }
            aggregate_tree(&measurements)
        })
        .collect();

    let mut measured = Vec::new();
    let mut failures = 0usize;
    for t in trees {
        match t {
            Ok(tree) => measured.push(tree),
            Err(e) => {
                failures += 1;
                log::warn!("tree skipped: {e}");
            }
        }
    }
    if !observations.is_empty() && measured.is_empty() {
        return Err(Error::DegenerateGeometry(format!(
            "all {failures} trees failed"
        )));
    }
    measured.sort_by_key(|t| sorted_key(&t.position));
    let mut meta = OutputMeta::new(json!({
        "command": "diameter",
        "mode": match args.mode { ModeArg::Tangent => "tangent", ModeArg::ExactCylinder => "exact_cylinder" },
        "match_distance_m": args.match_distance_m,
        "skipped": failures,
    }));
    meta.hash_input(&args.panos)?;
    meta.hash_input(&args.observations)?;
    write_geojson(measured.iter().map(tree_feature).collect(), &meta, &args.out)
}

fn run_merge(args: &MergeArgs) -> Result<()> {
    let objects: Vec<LocatedObject> = read_jsonl(&args.objects)?;
    let mut merged = merge_observations(&objects, args.radius_m)?;
    merged.sort_by_key(|o| sorted_key(&o.position));
    let mut meta = OutputMeta::new(json!({
        "command": "merge",
        "radius_m": args.radius_m,
    }));
    meta.hash_input(&args.objects)?;
    write_geojson(merged.iter().map(object_feature).collect(), &meta, &args.out)
}

/// Choose the standard thumbnail (if any) whose frustum contains the given
/// world azimuth, preferring the most head-on view.
fn thumbnail_for_azimuth(
    pose: &PanoramaPose,
    az_deg: f64,
) -> Option<svmap::projection::ThumbnailSpec> {
    plan_thumbnails(pose)
        .into_iter()
        .filter_map(|spec| {
            let center = svmap::geo::wrap_360(pose.heading_deg + spec.heading_offset_deg);
            let off = svmap::geo::signed_arc(center, az_deg).abs();
            // stay clear of the frustum edge so both tangents fit
            (off < spec.hfov_deg / 2.0 - 5.0).then_some((spec, off))
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(spec, _)| spec)
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.scene)
        .map_err(|e| Error::io(args.scene.display().to_string(), e))?;
    let scene: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| Error::schema(args.scene.display().to_string(), e.to_string()))?;
    scene.validate()?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    let out = |name: &str| args.out_dir.join(name);
    let mut noise = NoiseGen::new(scene.noise, args.seed.unwrap_or(scene.seed));

    // panorama metadata
    let entries: Vec<PanoEntry> = scene
        .cameras
        .iter()
        .enumerate()
        .map(|(i, pose)| PanoEntry {
            pose: pose.clone(),
            sequence_id: Some("synth".into()),
            seq_index: Some(i as u32),
        })
        .collect();
    save_pano_metadata(&entries, &out("panos.jsonl"))?;

    // land-cover raster
    if !scene.ribbons.is_empty() {
        let raster = render_landcover(
            &scene,
            args.resolution_m,
            args.extent_m,
            args.raster_heading_deg,
        )?;
        save_landcover(&raster, &out("landcover.png"), &out("landcover.png.json"))?;
    }

    // billboard detections (panorama-frame boxes)
    let mut detections = Vec::new();
    for pose in &scene.cameras {
        for billboard in &scene.billboards {
            let proj = match project_billboard(pose, billboard) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("billboard skipped for {}: {e}", pose.pano_id);
                    continue;
                }
            };
            detections.push(DetectionRecord {
                pano_id: Some(pose.pano_id.clone()),
                thumbnail_spec: None,
                class: billboard.class.clone(),
                col_min: proj.pixel_box.col_min,
                row_min: proj.pixel_box.row_min,
                col_max: proj.pixel_box.col_max,
                row_max: proj.pixel_box.row_max,
                confidence: Some(1.0),
            });
        }
    }
    write_jsonl(&detections, &out("detections.jsonl"))?;

    // cylinder (trunk) observations on the standard thumbnails
    let mut observations = Vec::new();
    for pose in &scene.cameras {
        for cylinder in &scene.cylinders {
            let proj = match project_cylinder(pose, cylinder) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("cylinder skipped for {}: {e}", pose.pano_id);
                    continue;
                }
            };
            let Some(spec) = thumbnail_for_azimuth(pose, proj.az_center_deg) else {
                continue;
            };
            observations.push(TrunkObsRecord {
                pano_id: pose.pano_id.clone(),
                thumbnail_spec: spec,
                az_left_deg: Some(svmap::geo::wrap_360(noise.jitter_angle(proj.az_left_deg))),
                az_right_deg: Some(svmap::geo::wrap_360(noise.jitter_angle(proj.az_right_deg))),
                col_left: None,
                col_right: None,
                row_measure: None,
                depth_m: Some(noise.jitter_depth(proj.depth_m)),
            });
        }
    }
    write_jsonl(&observations, &out("observations.jsonl"))?;
    Ok(())
}
