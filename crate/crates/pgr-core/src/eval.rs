//! Evaluation quantities: per-class point preservation, rate sweeps over
//! geometry scales, Bjontegaard deltas between rate curves, and a
//! sequential throughput benchmark of the removal pipeline.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use crate::cloud::{points_in_box, Box3D, ClassLabel, GroundMask, PointCloud};
use crate::codec::{encode_frame_with_original_count, measure_bpp, CodecConfig};
use crate::error::{Error, Result};
use crate::grid::{build_grid, GridSpec};
use crate::oracle::{apply_oracle, OracleConfig};
use crate::pgr::{
    filter_cloud, keep_mask, named_config, removal_phase, restoration_phase, KeepMask,
    RemovalConfig,
};

/// Kept/total counters for one point population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassStats {
    pub points_total: usize,
    pub points_kept: usize,
}

impl ClassStats {
    /// Kept fraction; absent when the population is empty.
    pub fn fraction(&self) -> Option<f64> {
        (self.points_total > 0).then(|| self.points_kept as f64 / self.points_total as f64)
    }
}

/// How much of each object class (points inside the class's boxes) and of
/// the whole frame a keep mask preserves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreservationReport {
    /// Only classes that have at least one box appear here.
    pub per_class: BTreeMap<ClassLabel, ClassStats>,
    pub overall: ClassStats,
}

impl PreservationReport {
    pub fn class_fraction(&self, label: ClassLabel) -> Option<f64> {
        self.per_class.get(&label).and_then(|s| s.fraction())
    }

    pub fn overall_fraction(&self) -> Option<f64> {
        self.overall.fraction()
    }
}

/// Count kept points inside the union of each class's boxes (unscaled)
/// and over the whole frame.
///
/// For orientation: on full-scale urban captures the default
/// `pgr-c0-kitti` configuration typically keeps 99.98% or more of the
/// points of each object class while preserving only 75-85% of the
/// frame overall, i.e. the removed quarter is almost entirely ground.
pub fn preservation_report(
    cloud: &PointCloud,
    mask: &KeepMask,
    boxes: &[Box3D],
) -> Result<PreservationReport> {
    if mask.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: mask.len(),
        });
    }
    let mut per_class = BTreeMap::new();
    let mut classes: Vec<ClassLabel> = boxes.iter().map(|b| b.class_label).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut member = vec![false; cloud.len()];
    for label in classes {
        member.iter_mut().for_each(|m| *m = false);
        for b in boxes.iter().filter(|b| b.class_label == label) {
            for i in points_in_box(cloud, b, 1.0) {
                member[i] = true;
            }
        }
        let mut stats = ClassStats::default();
        for (i, &inside) in member.iter().enumerate() {
            if inside {
                stats.points_total += 1;
                stats.points_kept += usize::from(mask.is_kept(i));
            }
        }
        per_class.insert(label, stats);
    }
    Ok(PreservationReport {
        per_class,
        overall: ClassStats {
            points_total: cloud.len(),
            points_kept: mask.count_kept(),
        },
    })
}

/// Ordered (bits-per-point, metric) pairs with strictly increasing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    points: Vec<(f64, f64)>,
}

impl RateCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = 0.0;
        for &(bpp, metric) in &points {
            if !(bpp.is_finite() && bpp > 0.0) {
                return Err(Error::validation(format!(
                    "bpp must be positive, got {bpp}"
                )));
            }
            if !metric.is_finite() {
                return Err(Error::validation("metric must be finite"));
            }
            if bpp <= prev {
                return Err(Error::validation("bpp values must be strictly increasing"));
            }
            prev = bpp;
        }
        Ok(RateCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Cubic fitted to metric as a function of centered log10(bpp).
struct LogCubic {
    coeffs: [f64; 4],
    x_mean: f64,
    x_min: f64,
    x_max: f64,
}

impl LogCubic {
    fn fit(curve: &RateCurve) -> Result<Self> {
        if curve.points.len() < 4 {
            return Err(Error::CurveArity {
                needed: 4,
                got: curve.points.len(),
            });
        }
        let xs: Vec<f64> = curve.points.iter().map(|&(b, _)| b.log10()).collect();
        let ys: Vec<f64> = curve.points.iter().map(|&(_, m)| m).collect();
        let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let centered: Vec<f64> = xs.iter().map(|x| x - x_mean).collect();

        // Least-squares cubic via the 4x4 normal equations; with exactly
        // four points this interpolates.
        let mut pow_sums = [0.0f64; 7];
        let mut rhs = [0.0f64; 4];
        for (&x, &y) in centered.iter().zip(&ys) {
            let mut p = 1.0;
            for (k, sum) in pow_sums.iter_mut().enumerate() {
                *sum += p;
                if k < 4 {
                    rhs[k] += p * y;
                }
                p *= x;
            }
        }
        let mut a = [[0.0f64; 5]; 4];
        for (r, row) in a.iter_mut().enumerate() {
            for (c, slot) in row.iter_mut().take(4).enumerate() {
                *slot = pow_sums[r + c];
            }
            row[4] = rhs[r];
        }
        let coeffs = solve4(&mut a)?;
        Ok(LogCubic {
            coeffs,
            x_mean,
            x_min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            x_max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Definite integral over [lo, hi] in uncentered log-rate coordinates.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let [c0, c1, c2, c3] = self.coeffs;
            x * (c0 + x * (c1 / 2.0 + x * (c2 / 3.0 + x * c3 / 4.0)))
        };
        anti(hi - self.x_mean) - anti(lo - self.x_mean)
    }
}

/// Gaussian elimination with partial pivoting on an augmented 4x5 system.
#[allow(clippy::needless_range_loop)]
fn solve4(a: &mut [[f64; 5]; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::validation("degenerate rate curve fit"));
        }
        a.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0f64; 4];
    for row in (0..4).rev() {
        let mut acc = a[row][4];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Bjontegaard delta of `test` against `anchor`: the average vertical gap
/// between the two cubic fits of metric vs log10(bpp), integrated over
/// the common log-rate interval. Positive favors `test`.
pub fn bd_metric(anchor: &RateCurve, test: &RateCurve) -> Result<f64> {
    let fa = LogCubic::fit(anchor)?;
    let ft = LogCubic::fit(test)?;
    let lo = fa.x_min.max(ft.x_min);
    let hi = fa.x_max.min(ft.x_max);
    if lo >= hi {
        return Err(Error::CurveOverlap);
    }
    Ok((ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}

/// Preprocessing pipelines a sweep can apply before encoding.
#[derive(Debug, Clone)]
pub enum Preprocessor {
    /// Encode the frame as-is.
    None,
    /// Pillar-based removal with the given configuration.
    Pgr {
        label: String,
        config: RemovalConfig,
    },
    /// Label-driven removal with box-extension restoration.
    Oracle(OracleConfig),
}

impl Preprocessor {
    /// Parse `none`, `pgr:<preset-or-toml-path>`, or `oracle:<EF>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Preprocessor::None);
        }
        if let Some(rest) = s.strip_prefix("pgr:") {
            let config = match named_config(rest) {
                Ok(c) => c,
                Err(e) => {
                    if Path::new(rest).is_file() {
                        crate::pgr::load_config(rest)?
                    } else {
                        return Err(e);
                    }
                }
            };
            return Ok(Preprocessor::Pgr {
                label: s.to_string(),
                config,
            });
        }
        if let Some(rest) = s.strip_prefix("oracle:") {
            let ef: f64 = rest
                .parse()
                .map_err(|_| Error::validation(format!("invalid extension factor {rest:?}")))?;
            return Ok(Preprocessor::Oracle(OracleConfig::new(ef)?));
        }
        Err(Error::UnknownName {
            name: s.to_string(),
            valid: vec![
                "none".into(),
                "pgr:<preset or config.toml>".into(),
                "oracle:<extension factor>".into(),
            ],
        })
    }

    pub fn label(&self) -> String {
        match self {
            Preprocessor::None => "none".into(),
            Preprocessor::Pgr { label, .. } => label.clone(),
            Preprocessor::Oracle(cfg) => format!("oracle:{}", cfg.extension_factor),
        }
    }

    /// Run the pipeline on one frame, returning the surviving points.
    pub fn apply(&self, frame: &SweepFrame) -> Result<PointCloud> {
        match self {
            Preprocessor::None => Ok(frame.cloud.clone()),
            Preprocessor::Pgr { config, .. } => {
                let out = crate::pgr::apply_pgr(&frame.cloud, config)?;
                filter_cloud(&frame.cloud, &out.mask)
            }
            Preprocessor::Oracle(cfg) => {
                let ground = frame.ground.as_ref().ok_or_else(|| {
                    Error::validation("oracle preprocessing needs a ground mask per frame")
                })?;
                let mask = apply_oracle(&frame.cloud, ground, &frame.boxes, *cfg)?;
                filter_cloud(&frame.cloud, &mask)
            }
        }
    }
}

/// Millimeters per meter. Geometry codecs run on integer-unit
/// (millimeter-like) coordinates at scale factors in this range, so
/// sweeps convert frames from meters before encoding.
pub const CODEC_UNITS_PER_METER: f64 = 1000.0;

/// Meter-unit frame expressed in codec (millimeter) units.
pub fn to_codec_units(cloud: &PointCloud) -> PointCloud {
    scale_coordinates(cloud, CODEC_UNITS_PER_METER)
}

/// Codec-unit (millimeter) frame back in meters.
pub fn from_codec_units(cloud: &PointCloud) -> PointCloud {
    scale_coordinates(cloud, 1.0 / CODEC_UNITS_PER_METER)
}

fn scale_coordinates(cloud: &PointCloud, factor: f64) -> PointCloud {
    let mut out = PointCloud::with_capacity(cloud.frame_id(), cloud.attribute_arity(), cloud.len());
    for i in 0..cloud.len() {
        let [x, y, z] = cloud.point(i);
        out.push(x * factor, y * factor, z * factor, cloud.attributes_of(i));
    }
    out
}

/// One frame plus the side data some preprocessors need.
#[derive(Debug, Clone)]
pub struct SweepFrame {
    pub cloud: PointCloud,
    pub ground: Option<GroundMask>,
    pub boxes: Vec<Box3D>,
}

impl SweepFrame {
    pub fn bare(cloud: PointCloud) -> Self {
        SweepFrame {
            cloud,
            ground: None,
            boxes: Vec::new(),
        }
    }
}

/// One row of a rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scale: f64,
    pub bpp: f64,
    pub preprocessor: String,
    pub frames: usize,
}

/// Mean bits per point across `frames` for every geometry scale, after
/// running `pre`. Preprocessing happens in meters; coordinates then
/// convert to codec units for encoding. The bpp denominator is always
/// the frame's original point count. Returns an empty table for an
/// empty frame list.
pub fn rate_sweep(
    frames: &[SweepFrame],
    pre: &Preprocessor,
    scales: &[f64],
) -> Result<Vec<SweepRow>> {
    for (i, &s) in scales.iter().enumerate() {
        CodecConfig::new(s)?;
        if scales[..i].contains(&s) {
            return Err(Error::validation(format!("duplicate scale {s}")));
        }
    }
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let processed: Vec<(PointCloud, u64)> = frames
        .iter()
        .map(|f| Ok((to_codec_units(&pre.apply(f)?), f.cloud.len() as u64)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let cfg = CodecConfig::new(scale)?;
        let mut sum = 0.0;
        for (cloud, n_orig) in &processed {
            let stream = encode_frame_with_original_count(cloud, cfg, *n_orig)?;
            sum += measure_bpp(&stream)?;
        }
        rows.push(SweepRow {
            scale,
            bpp: sum / processed.len() as f64,
            preprocessor: pre.label(),
            frames: processed.len(),
        });
    }
    Ok(rows)
}

/// Write a rate table: `scale,bpp,preprocessor,frames`.
pub fn write_rate_table(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("scale,bpp,preprocessor,frames\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.scale, r.bpp, r.preprocessor, r.frames
        ));
    }
    crate::io::write_atomic(path, out.as_bytes())
}

/// Read a rate table written by [`write_rate_table`].
pub fn read_rate_table(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "scale,bpp,preprocessor,frames" {
                return Err(Error::parse(path, 1, "bad rate table header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected 4 columns"));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad number {s:?}")))
        };
        rows.push(SweepRow {
            scale: parse(fields[0])?,
            bpp: parse(fields[1])?,
            preprocessor: fields[2].to_string(),
            frames: fields[3]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, "bad frame count"))?,
        });
    }
    Ok(rows)
}

/// Read an external metric table: `scale,metric` with a header line.
pub fn read_metric_table(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "scale,metric" {
                return Err(Error::parse(path, 1, "bad metric table header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let Some((a, b)) = line.split_once(',') else {
            return Err(Error::parse(path, i + 1, "expected 2 columns"));
        };
        let scale = a
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad scale {a:?}")))?;
        let metric = b
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad metric {b:?}")))?;
        out.push((scale, metric));
    }
    Ok(out)
}

/// Join rate rows with (scale, metric) pairs into a curve ordered by bpp.
pub fn join_curve(rows: &[SweepRow], metrics: &[(f64, f64)]) -> Result<RateCurve> {
    let mut points = Vec::with_capacity(rows.len());
    for row in rows {
        let metric = metrics
            .iter()
            .find(|(s, _)| *s == row.scale)
            .map(|&(_, m)| m)
            .ok_or_else(|| Error::validation(format!("no metric entry for scale {}", row.scale)))?;
        points.push((row.bpp, metric));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    RateCurve::new(points)
}

/// Timing of the sequential removal pipeline.
#[derive(Debug, Clone, Copy)]
pub struct BenchReport {
    pub frames_processed: usize,
    pub points_total: u64,
    pub wall_seconds: f64,
    pub fps: f64,
    pub grid_seconds: f64,
    pub removal_seconds: f64,
    pub restoration_seconds: f64,
    pub mask_seconds: f64,
}

impl BenchReport {
    pub fn stage_sum(&self) -> f64 {
        self.grid_seconds + self.removal_seconds + self.restoration_seconds + self.mask_seconds
    }
}

/// Process frames one by one (no frame-level parallelism) `repetitions`
/// times, timing each stage. Frames are already in memory; file I/O never
/// enters the timed region.
pub fn bench_pipeline(
    frames: &[PointCloud],
    cfg: &RemovalConfig,
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::validation("repetitions must be at least 1"));
    }
    cfg.validate()?;
    let mut grid_s = 0.0;
    let mut removal_s = 0.0;
    let mut restoration_s = 0.0;
    let mut mask_s = 0.0;
    let mut points_total = 0u64;

    let wall_start = Instant::now();
    for _ in 0..repetitions {
        for cloud in frames {
            let t = Instant::now();
            let spec = GridSpec::anchored(cloud, cfg.resolution)?;
            let grid = build_grid(cloud, spec)?;
            grid_s += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let phi = removal_phase(&grid, cfg)?;
            removal_s += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let restored = restoration_phase(&grid, &phi, cfg)?;
            restoration_s += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let mask = keep_mask(&grid, &phi, &restored)?;
            let filtered = filter_cloud(cloud, &mask)?;
            mask_s += t.elapsed().as_secs_f64();

            std::hint::black_box(&filtered);
            points_total += cloud.len() as u64;
        }
    }
    let wall = wall_start.elapsed().as_secs_f64();
    let n = frames.len() * repetitions;
    Ok(BenchReport {
        frames_processed: n,
        points_total,
        wall_seconds: wall,
        fps: n as f64 / wall,
        grid_seconds: grid_s,
        removal_seconds: removal_s,
        restoration_seconds: restoration_s,
        mask_seconds: mask_s,
    })
}
