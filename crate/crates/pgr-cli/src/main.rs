//! Command-line pipelines over the removal, oracle, codec, and
//! evaluation building blocks. Every command is deterministic given its
//! inputs, configuration, and seed; data outputs are written atomically.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pgr_core::cloud::PointCloud;
use pgr_core::codec::{
    decode_frame, encode_frame, measure_bpp, read_bitstream, write_bitstream, CodecConfig,
    GEOMETRY_SCALES,
};
use pgr_core::eval::{
    bd_metric, bench_pipeline, from_codec_units, join_curve, rate_sweep, read_metric_table,
    read_rate_table, to_codec_units, write_rate_table, Preprocessor, SweepFrame, SweepRow,
};
use pgr_core::grid::{build_grid, GridSpec};
use pgr_core::io;
use pgr_core::oracle::{apply_oracle, OracleConfig};
use pgr_core::pgr::{
    apply_pgr, filter_cloud, keep_mask, load_config, named_config, removal_phase, RemovalConfig,
    CONFIG_NAMES,
};
use pgr_core::synth::{synthesize_scene, GroundModel, SceneRecipe};

#[derive(Parser)]
#[command(
    name = "pgr",
    about = "Pillar-based ground removal, octree geometry coding, and rate evaluation for LiDAR frames",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic frames with ground masks and box annotations.
    Synth(SynthArgs),
    /// Remove ground points from frames with the pillar pipeline.
    Remove(RemoveArgs),
    /// Remove labeled ground points, restoring those near annotated boxes.
    Oracle(OracleArgs),
    /// Encode frames into octree bitstreams.
    Encode(EncodeArgs),
    /// Decode octree bitstreams back into frames.
    Decode(DecodeArgs),
    /// Tabulate mean bits per point across geometry scales.
    Sweep(SweepArgs),
    /// Benchmark the sequential removal pipeline.
    Bench(BenchArgs),
    /// Bjontegaard delta between two rate tables joined with metrics.
    Bd(BdArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of frames to generate.
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Base seed; frame i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scene: SceneArgs,
}

#[derive(Args, Clone)]
struct SceneArgs {
    /// Ground model: flat, slope:<gx>,<gy>, or curb:<height>,<edge_x>.
    #[arg(long, default_value = "flat")]
    ground: String,
    /// Radius of the ground disk in meters.
    #[arg(long, default_value_t = 40.0)]
    extent: f64,
    /// Ground points per square meter.
    #[arg(long, default_value_t = 3.0)]
    ground_density: f64,
    /// Object shell points per square meter.
    #[arg(long, default_value_t = 60.0)]
    object_density: f64,
    /// Gaussian noise stddev on ground heights, meters.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 4)]
    cars: usize,
    #[arg(long, default_value_t = 3)]
    pedestrians: usize,
    #[arg(long, default_value_t = 2)]
    cyclists: usize,
}

impl SceneArgs {
    fn recipe(&self) -> Result<SceneRecipe> {
        Ok(SceneRecipe {
            ground: parse_ground(&self.ground)?,
            extent: self.extent,
            ground_density: self.ground_density,
            object_density: self.object_density,
            noise_std: self.noise,
            cars: self.cars,
            pedestrians: self.pedestrians,
            cyclists: self.cyclists,
        })
    }
}

fn parse_ground(s: &str) -> Result<GroundModel> {
    if s == "flat" {
        return Ok(GroundModel::Flat);
    }
    if let Some(rest) = s.strip_prefix("slope:") {
        let (gx, gy) = rest
            .split_once(',')
            .context("slope needs two comma-separated gradients")?;
        return Ok(GroundModel::Slope {
            grade_x: gx.parse().context("bad slope gradient")?,
            grade_y: gy.parse().context("bad slope gradient")?,
        });
    }
    if let Some(rest) = s.strip_prefix("curb:") {
        let (h, edge) = rest.split_once(',').context("curb needs height,edge_x")?;
        return Ok(GroundModel::Curb {
            height: h.parse().context("bad curb height")?,
            edge_x: edge.parse().context("bad curb edge")?,
        });
    }
    bail!("unknown ground model {s:?}; expected flat, slope:<gx>,<gy>, or curb:<h>,<edge_x>")
}

#[derive(Args)]
struct RemoveArgs {
    /// Input frame files (glob pattern).
    #[arg(long)]
    input: String,
    /// Preset name or a TOML configuration file.
    #[arg(long, default_value = "pgr-c0-kitti")]
    config: String,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for frame-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Skip the restoration phase.
    #[arg(long)]
    no_restoration: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Input frame files (glob pattern); masks and boxes pair by stem.
    #[arg(long)]
    input: String,
    /// Extension factor for box scaling.
    #[arg(long)]
    ef: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input frame files (glob pattern).
    #[arg(long)]
    input: String,
    /// Geometry scale in (0, 1].
    #[arg(long)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input bitstream files (glob pattern).
    #[arg(long)]
    input: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Input frame files (glob pattern). Omit to use synthetic frames.
    #[arg(long)]
    input: Option<String>,
    /// Number of synthetic frames when no input is given.
    #[arg(long, default_value_t = 4)]
    synth_frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    scene: SceneArgs,
    /// Preprocessors to sweep; repeatable (none, pgr:<cfg>, oracle:<EF>).
    #[arg(long = "pre", default_values_t = [String::from("none")])]
    preprocessors: Vec<String>,
    /// Comma-separated geometry scales; defaults to the six standard ones.
    #[arg(long)]
    scales: Option<String>,
    /// Output rate table (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Target points per synthetic frame.
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 6)]
    frames: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "pgr-c0-kitti")]
    config: String,
    /// Print per-stage timings.
    #[arg(long)]
    stage_breakdown: bool,
}

#[derive(Args)]
struct BdArgs {
    /// Anchor rate table (CSV from `sweep`).
    #[arg(long)]
    anchor: PathBuf,
    /// Metric table (scale,metric) joined onto the anchor.
    #[arg(long)]
    anchor_metric: PathBuf,
    /// Test rate table.
    #[arg(long)]
    test: PathBuf,
    /// Metric table joined onto the test curve.
    #[arg(long)]
    test_metric: PathBuf,
    /// Keep only rows with this preprocessor label (when a table mixes several).
    #[arg(long)]
    anchor_pre: Option<String>,
    #[arg(long)]
    test_pre: Option<String>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Remove(args) => cmd_remove(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Bd(args) => cmd_bd(args),
    }
}

/// Expand a glob pattern into a sorted file list; empty matches are an error.
fn collect_inputs(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob pattern {pattern:?}"))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no frames match {pattern:?}");
    }
    Ok(files)
}

fn resolve_config(spec: &str) -> Result<RemovalConfig> {
    match named_config(spec) {
        Ok(cfg) => Ok(cfg),
        Err(err) => {
            if Path::new(spec).is_file() {
                Ok(load_config(spec)?)
            } else if spec.ends_with(".toml") {
                bail!("config file {spec:?} not found");
            } else {
                Err(err).with_context(|| format!("presets: {}", CONFIG_NAMES.join(", ")))
            }
        }
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}", stem_of(path)))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    Ok(builder.build()?)
}

/// Delete everything written so far when a batch fails partway.
struct OutputTracker {
    written: Vec<PathBuf>,
    keep: bool,
}

impl OutputTracker {
    fn new() -> Self {
        OutputTracker {
            written: Vec::new(),
            keep: false,
        }
    }

    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn commit(mut self) {
        self.keep = true;
    }
}

impl Drop for OutputTracker {
    fn drop(&mut self) {
        if !self.keep {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let recipe = args.scene.recipe()?;
    let mut tracker = OutputTracker::new();
    for i in 0..args.frames {
        let seed = args.seed + i as u64;
        let (mut cloud, mask, boxes) = synthesize_scene(&recipe.spec(seed), seed)?;
        let stem = format!("frame_{i:04}");
        cloud.set_frame_id(stem.clone());
        let frame_path = args.out.join(format!("{stem}.bin"));
        io::save_frame_binary(&cloud, &frame_path)?;
        tracker.record(frame_path);
        let mask_path = args.out.join(format!("{stem}.mask.txt"));
        io::save_ground_mask(&mask, &mask_path)?;
        tracker.record(mask_path);
        let boxes_path = args.out.join(format!("{stem}.boxes.csv"));
        io::save_boxes(&boxes, &boxes_path)?;
        tracker.record(boxes_path);
        println!(
            "{stem}: {} points ({} ground, {} object), {} boxes",
            cloud.len(),
            mask.count_ground(),
            cloud.len() - mask.count_ground(),
            boxes.len()
        );
    }
    tracker.commit();
    Ok(())
}

struct RemoveRow {
    frame: String,
    cloud: PointCloud,
    points_in: usize,
    points_kept: usize,
    pillars: usize,
    retained: usize,
    restored: usize,
}

fn run_removal(
    cloud: &PointCloud,
    cfg: &RemovalConfig,
    no_restoration: bool,
) -> pgr_core::Result<RemoveRow> {
    let (mask, pillars, retained, restored) = if no_restoration {
        let spec = GridSpec::anchored(cloud, cfg.resolution)?;
        let grid = build_grid(cloud, spec)?;
        let phi = removal_phase(&grid, cfg)?;
        let mask = keep_mask(&grid, &phi, &vec![false; grid.len()])?;
        let retained = phi.iter().filter(|&&p| p).count();
        (mask, grid.len(), retained, 0)
    } else {
        let out = apply_pgr(cloud, cfg)?;
        (
            out.mask,
            out.summary.pillars_total,
            out.summary.pillars_retained,
            out.summary.pillars_restored,
        )
    };
    let filtered = filter_cloud(cloud, &mask)?;
    Ok(RemoveRow {
        frame: cloud.frame_id().to_string(),
        points_in: cloud.len(),
        points_kept: filtered.len(),
        cloud: filtered,
        pillars,
        retained,
        restored,
    })
}

fn write_summary(rows: &[RemoveRow], path: &Path) -> Result<()> {
    let mut text = String::from("frame,points_in,points_kept,pillars,retained,restored\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.frame, r.points_in, r.points_kept, r.pillars, r.retained, r.restored
        ));
    }
    io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn cmd_remove(args: RemoveArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    let cfg = resolve_config(&args.config)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let pool = thread_pool(args.workers)?;

    let clouds: Vec<PointCloud> = inputs
        .iter()
        .map(io::load_frame_binary)
        .collect::<pgr_core::Result<_>>()?;
    let rows: Vec<RemoveRow> = pool.install(|| {
        use rayon::prelude::*;
        clouds
            .par_iter()
            .map(|cloud| run_removal(cloud, &cfg, args.no_restoration))
            .collect::<pgr_core::Result<_>>()
    })?;

    let mut tracker = OutputTracker::new();
    for (input, row) in inputs.iter().zip(&rows) {
        let out_path = args.out.join(format!("{}.bin", stem_of(input)));
        io::save_frame_binary(&row.cloud, &out_path)?;
        tracker.record(out_path);
        println!(
            "{}: kept {}/{} points ({} pillars, {} retained, {} restored)",
            row.frame, row.points_kept, row.points_in, row.pillars, row.retained, row.restored
        );
    }
    let summary = args.out.join("removal_summary.csv");
    write_summary(&rows, &summary)?;
    tracker.record(summary);
    tracker.commit();
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    let cfg = OracleConfig::new(args.ef)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut tracker = OutputTracker::new();
    for input in &inputs {
        let cloud = io::load_frame_binary(input)?;
        let mask_path = sidecar(input, ".mask.txt");
        let boxes_path = sidecar(input, ".boxes.csv");
        let ground = io::load_ground_mask(&mask_path)?;
        let boxes = io::load_boxes(&boxes_path)?;
        let mask = apply_oracle(&cloud, &ground, &boxes, cfg)?;
        let filtered = filter_cloud(&cloud, &mask)?;
        let out_path = args.out.join(format!("{}.bin", stem_of(input)));
        io::save_frame_binary(&filtered, &out_path)?;
        tracker.record(out_path);
        println!(
            "{}: kept {}/{} points (EF {})",
            stem_of(input),
            filtered.len(),
            cloud.len(),
            args.ef
        );
    }
    tracker.commit();
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    let codec = CodecConfig::new(args.scale)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut tracker = OutputTracker::new();
    for input in &inputs {
        let cloud = io::load_frame_binary(input)?;
        let stream = encode_frame(&to_codec_units(&cloud), codec)?;
        let out_path = args.out.join(format!("{}.pcb", stem_of(input)));
        write_bitstream(&stream, &out_path)?;
        tracker.record(out_path);
        let bpp = if cloud.is_empty() {
            f64::NAN
        } else {
            measure_bpp(&stream)?
        };
        println!(
            "{}: {} points -> {} cells, {} bytes, {bpp:.3} bpp",
            stem_of(input),
            cloud.len(),
            stream.n_cells,
            stream.size_bytes()
        );
    }
    tracker.commit();
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let inputs = collect_inputs(&args.input)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut tracker = OutputTracker::new();
    for input in &inputs {
        let stream = read_bitstream(input)?;
        let cloud = from_codec_units(&decode_frame(&stream)?);
        let out_path = args.out.join(format!("{}.bin", stem_of(input)));
        io::save_frame_binary(&cloud, &out_path)?;
        tracker.record(out_path);
        println!("{}: {} points", stem_of(input), cloud.len());
    }
    tracker.commit();
    Ok(())
}

fn load_sweep_frames(args: &SweepArgs) -> Result<Vec<SweepFrame>> {
    if let Some(pattern) = &args.input {
        let inputs = collect_inputs(pattern)?;
        inputs
            .iter()
            .map(|input| {
                let cloud = io::load_frame_binary(input)?;
                let mask_path = sidecar(input, ".mask.txt");
                let ground = if mask_path.is_file() {
                    Some(io::load_ground_mask(&mask_path)?)
                } else {
                    None
                };
                let boxes_path = sidecar(input, ".boxes.csv");
                let boxes = if boxes_path.is_file() {
                    io::load_boxes(&boxes_path)?
                } else {
                    Vec::new()
                };
                Ok(SweepFrame {
                    cloud,
                    ground,
                    boxes,
                })
            })
            .collect::<pgr_core::Result<_>>()
            .map_err(Into::into)
    } else {
        let recipe = args.scene.recipe()?;
        (0..args.synth_frames)
            .map(|i| {
                let seed = args.seed + i as u64;
                let (cloud, ground, boxes) = synthesize_scene(&recipe.spec(seed), seed)?;
                Ok(SweepFrame {
                    cloud,
                    ground: Some(ground),
                    boxes,
                })
            })
            .collect()
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let scales: Vec<f64> = match &args.scales {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().context("bad scale list"))
            .collect::<Result<_>>()?,
        None => GEOMETRY_SCALES.to_vec(),
    };
    let frames = load_sweep_frames(&args)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for spec in &args.preprocessors {
        let pre = Preprocessor::parse(spec)?;
        rows.extend(rate_sweep(&frames, &pre, &scales)?);
    }
    write_rate_table(&rows, &args.out)?;
    println!("scale,bpp,preprocessor,frames");
    for r in &rows {
        println!("{},{},{},{}", r.scale, r.bpp, r.preprocessor, r.frames);
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = resolve_config(&args.config)?;
    let base = SceneRecipe::default();
    let extent = 70.0;
    // Aim the ground density at the requested point budget after the
    // default object proxies are accounted for.
    let object_points = 11_000.0;
    let density = ((args.points as f64 - object_points).max(0.0)
        / (std::f64::consts::PI * extent * extent))
        .max(0.01);
    let recipe = SceneRecipe {
        extent,
        ground_density: density,
        ..base
    };
    let frames: Vec<PointCloud> = (0..args.frames)
        .map(|i| {
            let seed = args.seed + i as u64;
            Ok(synthesize_scene(&recipe.spec(seed), seed)?.0)
        })
        .collect::<Result<_>>()?;
    for (i, f) in frames.iter().enumerate() {
        println!("frame {i}: {} points", f.len());
    }
    let report = bench_pipeline(&frames, &cfg, args.reps)?;
    println!(
        "machine: {} logical cores, {} {}",
        std::thread::available_parallelism().map_or(0, |n| n.get()),
        std::env::consts::ARCH,
        std::env::consts::OS
    );
    println!(
        "processed {} frames ({} points) in {:.3} s: {:.1} fps, {:.2} ms/frame",
        report.frames_processed,
        report.points_total,
        report.wall_seconds,
        report.fps,
        1e3 * report.wall_seconds / report.frames_processed as f64
    );
    if args.stage_breakdown {
        let per = |s: f64| 1e3 * s / report.frames_processed as f64;
        println!(
            "stage grid:        {:.2} ms/frame",
            per(report.grid_seconds)
        );
        println!(
            "stage removal:     {:.2} ms/frame",
            per(report.removal_seconds)
        );
        println!(
            "stage restoration: {:.2} ms/frame",
            per(report.restoration_seconds)
        );
        println!(
            "stage mask:        {:.2} ms/frame",
            per(report.mask_seconds)
        );
    }
    Ok(())
}

fn cmd_bd(args: BdArgs) -> Result<()> {
    let filter = |rows: Vec<SweepRow>, pre: &Option<String>| -> Vec<SweepRow> {
        match pre {
            Some(label) => rows
                .into_iter()
                .filter(|r| &r.preprocessor == label)
                .collect(),
            None => rows,
        }
    };
    let anchor_rows = filter(read_rate_table(&args.anchor)?, &args.anchor_pre);
    let test_rows = filter(read_rate_table(&args.test)?, &args.test_pre);
    let anchor = join_curve(&anchor_rows, &read_metric_table(&args.anchor_metric)?)?;
    let test = join_curve(&test_rows, &read_metric_table(&args.test_metric)?)?;
    let bd = bd_metric(&anchor, &test)?;
    println!("BD metric (test vs anchor): {bd:.6}");
    Ok(())
}
