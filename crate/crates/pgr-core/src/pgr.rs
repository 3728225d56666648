//! Pillar-based ground removal: the removal and restoration phases and the
//! per-point keep mask they produce.
//!
//! A pillar is declared ground (removed) when its internal height spread
//! stays at or below `delta_minmax` and its floor sits less than
//! `delta_env` above the lowest point in the square neighborhood of
//! half-side `er`. A removed pillar is restored when some retained pillar
//! lies within a range-dependent Chessboard distance of its center. Both
//! phases run exactly once per frame; restored pillars never trigger
//! further restoration.
//!
//! Only geometry enters the decision; attributes ride along untouched.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::grid::{build_grid, pillar_chessboard_distance, window_cells, GridSpec, PillarGrid};

/// One entry of the range-adaptive restoration schedule: pillars whose
/// horizontal range is below `max_range` use `delta_res`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestoreRule {
    /// Upper range bound in meters; `inf` for the last rule.
    pub max_range: f64,
    /// Restoration Chessboard radius in meters.
    pub delta_res: f64,
}

/// All thresholds and radii of the removal pipeline, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalConfig {
    /// Pillar side length.
    pub resolution: f64,
    /// Maximum in-pillar height spread of a ground pillar.
    pub delta_minmax: f64,
    /// Half side length of the neighborhood used for the ground baseline.
    pub er: f64,
    /// Maximum elevation of a ground pillar's floor above the baseline.
    pub delta_env: f64,
    /// Ordered by strictly increasing `max_range`; last entry unbounded.
    pub restore_rules: Vec<RestoreRule>,
}

/// Names accepted by [`named_config`].
pub const CONFIG_NAMES: [&str; 6] = [
    "pgr-c0-kitti",
    "pgr-c0-waymo",
    "pgr-c1",
    "pgr-c2",
    "pgr-c3",
    "pgr-c4",
];

/// Resolve a named parameter preset. `pgr-c0-kitti` and `pgr-c0-waymo` are
/// the per-dataset defaults; `pgr-c1`..`pgr-c4` are the robustness
/// variations, each changing only the listed values relative to c0.
pub fn named_config(name: &str) -> Result<RemovalConfig> {
    let mut cfg = RemovalConfig {
        resolution: 0.4,
        delta_minmax: 0.4,
        er: 1.8,
        delta_env: 0.4,
        restore_rules: vec![
            RestoreRule {
                max_range: 30.0,
                delta_res: 1.8,
            },
            RestoreRule {
                max_range: f64::INFINITY,
                delta_res: 5.4,
            },
        ],
    };
    match name {
        "pgr-c0-kitti" => {}
        "pgr-c0-waymo" => cfg.restore_rules[0].delta_res = 2.2,
        "pgr-c1" => cfg.er = 1.4,
        "pgr-c2" => cfg.restore_rules[0].delta_res = 1.4,
        "pgr-c3" => cfg.delta_minmax = 0.6,
        "pgr-c4" => {
            cfg.er = 0.6;
            cfg.delta_minmax = 0.35;
            cfg.restore_rules[0].delta_res = 1.6;
            cfg.restore_rules[1].delta_res = 5.2;
        }
        _ => {
            return Err(Error::UnknownName {
                name: name.into(),
                valid: CONFIG_NAMES.iter().map(|s| s.to_string()).collect(),
            })
        }
    }
    Ok(cfg)
}

impl RemovalConfig {
    pub fn validate(&self) -> Result<()> {
        for (label, v) in [
            ("resolution", self.resolution),
            ("delta_minmax", self.delta_minmax),
            ("er", self.er),
            ("delta_env", self.delta_env),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!(
                    "{label} must be positive and finite, got {v}"
                )));
            }
        }
        if self.restore_rules.is_empty() {
            return Err(Error::validation("restore_rules must not be empty"));
        }
        let mut prev = 0.0;
        for rule in &self.restore_rules {
            if !(rule.delta_res > 0.0 && rule.delta_res.is_finite()) {
                return Err(Error::validation(format!(
                    "delta_res must be positive and finite, got {}",
                    rule.delta_res
                )));
            }
            if rule.max_range <= prev {
                return Err(Error::validation(
                    "restore_rules must have strictly increasing max_range",
                ));
            }
            prev = rule.max_range;
        }
        if self.restore_rules.last().unwrap().max_range.is_finite() {
            return Err(Error::validation(
                "last restore rule must be unbounded (max_range = inf)",
            ));
        }
        Ok(())
    }

    /// Restoration radius for a pillar at horizontal range `range_2d`:
    /// the first rule whose `max_range` exceeds it.
    pub fn delta_res_for(&self, range_2d: f64) -> f64 {
        self.restore_rules
            .iter()
            .find(|r| r.max_range > range_2d)
            .map(|r| r.delta_res)
            .unwrap_or_else(|| self.restore_rules.last().unwrap().delta_res)
    }
}

/// Load a removal configuration from a TOML file mirroring
/// [`RemovalConfig`]'s fields.
pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<RemovalConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RemovalConfig =
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Save a removal configuration as TOML readable by [`load_config`].
pub fn save_config(cfg: &RemovalConfig, path: impl AsRef<std::path::Path>) -> Result<()> {
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| Error::validation(format!("config serialization failed: {e}")))?;
    crate::io::write_atomic(path, text.as_bytes())
}

/// Per-pillar outcome of the two phases. `restored` is only ever set on
/// pillars with `phi` false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PillarDecisions {
    /// True = retained as non-ground by the removal phase.
    pub phi: Vec<bool>,
    /// True = brought back by the restoration phase.
    pub restored: Vec<bool>,
}

impl PillarDecisions {
    pub fn kept(&self, pillar: usize) -> bool {
        self.phi[pillar] || self.restored[pillar]
    }
}

/// Per-point selection mask; true = the point survives preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepMask(Vec<bool>);

impl KeepMask {
    pub fn new(flags: Vec<bool>) -> Self {
        KeepMask(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count_kept(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }
}

/// Frame-level counters reported next to the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgrSummary {
    pub points_total: usize,
    pub points_kept: usize,
    pub pillars_total: usize,
    pub pillars_retained: usize,
    pub pillars_restored: usize,
    /// Stage counters; the pipeline is not recursive, so both are 1.
    pub removal_passes: u32,
    pub restoration_passes: u32,
}

/// Everything [`apply_pgr`] produces for one frame.
#[derive(Debug, Clone)]
pub struct PgrOutput {
    pub mask: KeepMask,
    pub decisions: PillarDecisions,
    pub summary: PgrSummary,
}

/// Removal phase: per-pillar retention flags.
///
/// A pillar keeps `phi = false` (ground) exactly when its height spread is
/// at most `delta_minmax` and its floor sits strictly less than
/// `delta_env` above the lowest point of its `er` neighborhood; any other
/// pillar gets `phi = true`.
pub fn removal_phase(grid: &PillarGrid, cfg: &RemovalConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    if grid.spec().resolution != cfg.resolution {
        return Err(Error::validation(format!(
            "grid resolution {} does not match config resolution {}",
            grid.spec().resolution,
            cfg.resolution
        )));
    }
    let w = window_cells(cfg.er, cfg.resolution);
    let baselines = neighborhood_minima(grid, w);
    let mut phi = Vec::with_capacity(grid.len());
    for (i, pillar) in grid.pillars().iter().enumerate() {
        let spread_ok = pillar.z_max - pillar.z_min <= cfg.delta_minmax;
        if !spread_ok {
            phi.push(true);
            continue;
        }
        let env_ok = pillar.z_min - baselines[i] < cfg.delta_env;
        phi.push(!env_ok);
    }
    Ok(phi)
}

/// Local ground baseline per pillar: the lowest `z_min` in the square
/// window of `w` cells, the pillar's own cell included. The dense path
/// runs a separable sliding-window minimum over the occupied rectangle;
/// the minima are identical to the per-pillar scan.
fn neighborhood_minima(grid: &PillarGrid, w: i64) -> Vec<f64> {
    let pillars = grid.pillars();
    if let Some(dense) = grid.dense_index() {
        let (sx, sy) = (dense.span_x, dense.span_y);
        let mut field = vec![f64::INFINITY; sx * sy];
        for (slot, &p) in dense.slots.iter().enumerate() {
            if p != crate::grid::EMPTY_SLOT {
                field[slot] = pillars[p as usize].z_min;
            }
        }
        let w = w as usize;
        // Minimum over the y-window of each row...
        let mut row_min = vec![f64::INFINITY; sx * sy];
        for x in 0..sx {
            let row = &field[x * sy..(x + 1) * sy];
            let out = &mut row_min[x * sy..(x + 1) * sy];
            for y in 0..sy {
                let mut m = f64::INFINITY;
                for v in &row[y.saturating_sub(w)..(y + w + 1).min(sy)] {
                    m = m.min(*v);
                }
                out[y] = m;
            }
        }
        // ...then over the x-window of those minima.
        let mut result = vec![f64::NAN; pillars.len()];
        for (slot, &p) in dense.slots.iter().enumerate() {
            if p == crate::grid::EMPTY_SLOT {
                continue;
            }
            let (x, y) = (slot / sy, slot % sy);
            let mut m = f64::INFINITY;
            for nx in x.saturating_sub(w)..(x + w + 1).min(sx) {
                m = m.min(row_min[nx * sy + y]);
            }
            result[p as usize] = m;
        }
        result
    } else {
        pillars
            .iter()
            .map(|pillar| {
                let mut baseline = f64::INFINITY;
                for dx in -w..=w {
                    for dy in -w..=w {
                        if let Some(j) = grid.pillar_index((pillar.cell.0 + dx, pillar.cell.1 + dy))
                        {
                            baseline = baseline.min(pillars[j].z_min);
                        }
                    }
                }
                baseline
            })
            .collect()
    }
}

/// Restoration phase: flags for removed pillars that sit within the
/// range-dependent Chessboard radius of at least one retained pillar.
/// Retained pillars get `restored = false`.
pub fn restoration_phase(
    grid: &PillarGrid,
    phi: &[bool],
    cfg: &RemovalConfig,
) -> Result<Vec<bool>> {
    cfg.validate()?;
    if phi.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: phi.len(),
        });
    }
    let pillars = grid.pillars();
    let retained = RetainedCounts::build(grid, phi);
    let mut restored = vec![false; grid.len()];
    for (i, pillar) in pillars.iter().enumerate() {
        if phi[i] {
            continue;
        }
        let delta = cfg.delta_res_for(pillar.range_2d);
        // Any pillar passing the distance test has a cell offset of at
        // most ceil(delta / resolution) on both axes, so the window scan
        // sees every candidate the all-pairs formulation would. Cells
        // within the inner window pass the distance test with a full
        // resolution step to spare, so a hit there needs no scan; only
        // the boundary ring needs the exact comparison.
        let w = (delta / cfg.resolution).ceil() as i64;
        let w_inner = ((delta - 1e-6) / cfg.resolution).floor() as i64;
        if let Some(counts) = &retained {
            if counts.window_count(pillar.cell, w) == 0 {
                continue;
            }
            if w_inner >= 0 && counts.window_count(pillar.cell, w_inner) > 0 {
                restored[i] = true;
                continue;
            }
        }
        'search: for dx in -w..=w {
            for dy in -w..=w {
                let Some(j) = grid.pillar_index((pillar.cell.0 + dx, pillar.cell.1 + dy)) else {
                    continue;
                };
                if phi[j] && pillar_chessboard_distance(pillar, &pillars[j]) <= delta {
                    restored[i] = true;
                    break 'search;
                }
            }
        }
    }
    Ok(restored)
}

/// 2D prefix sums of retained pillars over the occupied rectangle; lets
/// restoration reject open-ground windows in constant time before the
/// exact distance scan.
struct RetainedCounts {
    min: (i64, i64),
    span_x: usize,
    span_y: usize,
    prefix: Vec<u32>,
}

impl RetainedCounts {
    fn build(grid: &PillarGrid, phi: &[bool]) -> Option<Self> {
        let dense = grid.dense_index()?;
        let (sx, sy) = (dense.span_x, dense.span_y);
        let mut prefix = vec![0u32; (sx + 1) * (sy + 1)];
        for x in 0..sx {
            for y in 0..sy {
                let here = match dense.slots[x * sy + y] {
                    crate::grid::EMPTY_SLOT => 0,
                    p => u32::from(phi[p as usize]),
                };
                prefix[(x + 1) * (sy + 1) + (y + 1)] =
                    here + prefix[x * (sy + 1) + (y + 1)] + prefix[(x + 1) * (sy + 1) + y]
                        - prefix[x * (sy + 1) + y];
            }
        }
        Some(RetainedCounts {
            min: dense.min,
            span_x: sx,
            span_y: sy,
            prefix,
        })
    }

    /// Retained pillars within `w` cells of `cell` on both axes.
    fn window_count(&self, cell: (i64, i64), w: i64) -> u32 {
        let x0 = (cell.0 - w - self.min.0).clamp(0, self.span_x as i64) as usize;
        let x1 = (cell.0 + w - self.min.0 + 1).clamp(0, self.span_x as i64) as usize;
        let y0 = (cell.1 - w - self.min.1).clamp(0, self.span_y as i64) as usize;
        let y1 = (cell.1 + w - self.min.1 + 1).clamp(0, self.span_y as i64) as usize;
        let sy1 = self.span_y + 1;
        self.prefix[x1 * sy1 + y1] + self.prefix[x0 * sy1 + y0]
            - self.prefix[x0 * sy1 + y1]
            - self.prefix[x1 * sy1 + y0]
    }
}

/// Expand per-pillar decisions into a per-point keep mask.
pub fn keep_mask(grid: &PillarGrid, phi: &[bool], restored: &[bool]) -> Result<KeepMask> {
    if phi.len() != grid.len() || restored.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: phi.len().min(restored.len()),
        });
    }
    let mut flags = vec![false; grid.n_points()];
    for (i, pillar) in grid.pillars().iter().enumerate() {
        if phi[i] || restored[i] {
            for &p in &pillar.point_indices {
                flags[p as usize] = true;
            }
        }
    }
    Ok(KeepMask(flags))
}

/// Run the full pipeline on one frame: grid build, removal, restoration,
/// mask. Single pass; no stage iterates to a fixpoint.
pub fn apply_pgr(cloud: &PointCloud, cfg: &RemovalConfig) -> Result<PgrOutput> {
    cfg.validate()?;
    let spec = GridSpec::anchored(cloud, cfg.resolution)?;
    let grid = build_grid(cloud, spec)?;
    let phi = removal_phase(&grid, cfg)?;
    let restored = restoration_phase(&grid, &phi, cfg)?;
    let mask = keep_mask(&grid, &phi, &restored)?;
    let summary = PgrSummary {
        points_total: cloud.len(),
        points_kept: mask.count_kept(),
        pillars_total: grid.len(),
        pillars_retained: phi.iter().filter(|&&p| p).count(),
        pillars_restored: restored.iter().filter(|&&r| r).count(),
        removal_passes: 1,
        restoration_passes: 1,
    };
    Ok(PgrOutput {
        mask,
        decisions: PillarDecisions { phi, restored },
        summary,
    })
}

/// Select the masked points, preserving order and attributes.
pub fn filter_cloud(cloud: &PointCloud, mask: &KeepMask) -> Result<PointCloud> {
    if mask.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: mask.len(),
        });
    }
    let mut out =
        PointCloud::with_capacity(cloud.frame_id(), cloud.attribute_arity(), mask.count_kept());
    for i in 0..cloud.len() {
        if mask.is_kept(i) {
            let [x, y, z] = cloud.point(i);
            out.push(x, y, z, cloud.attributes_of(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;

    fn cloud_from(points: &[(f64, f64, f64)]) -> PointCloud {
        let mut c = PointCloud::new("t", 0);
        for &(x, y, z) in points {
            c.push(x, y, z, &[]);
        }
        c
    }

    fn grid_of(points: &[(f64, f64, f64)], resolution: f64) -> PillarGrid {
        let cloud = cloud_from(points);
        let spec = GridSpec::anchored(&cloud, resolution).unwrap();
        build_grid(&cloud, spec).unwrap()
    }

    fn c0() -> RemovalConfig {
        named_config("pgr-c0-kitti").unwrap()
    }

    #[test]
    fn flat_pillar_at_local_minimum_is_ground() {
        let grid = grid_of(&[(0.1, 0.1, 0.0), (0.2, 0.2, 0.0)], 0.4);
        let phi = removal_phase(&grid, &c0()).unwrap();
        assert_eq!(phi, vec![false]);
    }

    #[test]
    fn tall_pillar_is_retained_regardless_of_baseline() {
        // Height spread 0.5 m exceeds delta_minmax = 0.4 m.
        let grid = grid_of(&[(0.1, 0.1, 0.0), (0.2, 0.2, 0.5)], 0.4);
        let phi = removal_phase(&grid, &c0()).unwrap();
        assert_eq!(phi, vec![true]);
    }

    #[test]
    fn flat_car_roof_is_retained_by_the_environment_condition() {
        // Roof pillar: spread 0.05 m but floor 1.5 m above the ground
        // pillar two cells away (within er = 1.8 m).
        let grid = grid_of(&[(0.1, 0.1, 1.5), (0.2, 0.2, 1.55), (0.9, 0.1, 0.0)], 0.4);
        let roof = grid.pillar_index((0, 0)).unwrap();
        let ground = grid.pillar_index((2, 0)).unwrap();
        let phi = removal_phase(&grid, &c0()).unwrap();
        assert!(phi[roof]);
        assert!(!phi[ground]);
    }

    #[test]
    fn boundary_semantics_spread_le_env_strict() {
        let cfg = c0();
        // Spread exactly delta_minmax passes Eq-style condition (<=); a
        // floor exactly delta_env above the baseline fails the strict (<).
        let grid = grid_of(&[(0.1, 0.1, 0.0), (0.2, 0.2, 0.4)], 0.4);
        assert_eq!(removal_phase(&grid, &cfg).unwrap(), vec![false]);

        let grid = grid_of(&[(0.1, 0.1, 0.4), (0.9, 0.1, 0.0)], 0.4);
        let high = grid.pillar_index((0, 0)).unwrap();
        let low = grid.pillar_index((2, 0)).unwrap();
        let phi = removal_phase(&grid, &cfg).unwrap();
        assert!(phi[high], "floor exactly delta_env above baseline stays");
        assert!(!phi[low]);
    }

    #[test]
    fn removed_pillar_next_to_retained_is_restored() {
        // Tall pillar at cell (0,0); flat ground pillar 0.4 m away.
        let grid = grid_of(&[(0.1, 0.1, 0.0), (0.2, 0.2, 1.0), (0.5, 0.1, 0.0)], 0.4);
        let cfg = c0();
        let phi = removal_phase(&grid, &cfg).unwrap();
        let restored = restoration_phase(&grid, &phi, &cfg).unwrap();
        let tall = grid.pillar_index((0, 0)).unwrap();
        let flat = grid.pillar_index((1, 0)).unwrap();
        assert!(phi[tall] && !phi[flat]);
        assert!(restored[flat]);
        assert!(!restored[tall], "retained pillars never get the flag");
    }

    #[test]
    fn nothing_restored_without_retained_pillars() {
        let grid = grid_of(&[(0.1, 0.1, 0.0), (3.0, 3.0, 0.0)], 0.4);
        let cfg = c0();
        let phi = removal_phase(&grid, &cfg).unwrap();
        assert!(phi.iter().all(|&p| !p));
        let restored = restoration_phase(&grid, &phi, &cfg).unwrap();
        assert!(restored.iter().all(|&r| !r));
    }

    #[test]
    fn restoration_matches_all_pairs_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let n = rng.random_range(5..200);
            let pts: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| {
                    (
                        rng.random_range(-20.0..20.0),
                        rng.random_range(-20.0..20.0),
                        rng.random_range(0.0..1.2),
                    )
                })
                .collect();
            let grid = grid_of(&pts, 0.4);
            let cfg = c0();
            let phi = removal_phase(&grid, &cfg).unwrap();
            let restored = restoration_phase(&grid, &phi, &cfg).unwrap();
            for (i, pi) in grid.pillars().iter().enumerate() {
                let expected = !phi[i]
                    && grid.pillars().iter().enumerate().any(|(j, pj)| {
                        phi[j]
                            && pillar_chessboard_distance(pi, pj) <= cfg.delta_res_for(pi.range_2d)
                    });
                assert_eq!(restored[i], expected, "pillar {i}");
            }
        }
    }

    #[test]
    fn empty_cloud_empty_mask() {
        let out = apply_pgr(&cloud_from(&[]), &c0()).unwrap();
        assert!(out.mask.is_empty());
        assert_eq!(out.summary.pillars_total, 0);
        assert_eq!(out.summary.removal_passes, 1);
        assert_eq!(out.summary.restoration_passes, 1);
    }

    #[test]
    fn open_flat_ground_is_fully_removed() {
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                pts.push((i as f64 * 0.5, j as f64 * 0.5, 0.0));
            }
        }
        let out = apply_pgr(&cloud_from(&pts), &c0()).unwrap();
        assert_eq!(out.mask.count_kept(), 0);
        assert_eq!(out.summary.pillars_retained, 0);
        assert_eq!(out.summary.pillars_restored, 0);
    }

    #[test]
    fn car_on_flat_ground_survives_intact() {
        use crate::cloud::{points_in_box, Box3D, ClassLabel};
        use crate::synth::{synthesize_scene, GroundModel, ObjectProxy, SyntheticSceneSpec};
        let car = Box3D::new(5.0, 2.0, 0.75, 4.2, 1.8, 1.5, 0.7, ClassLabel::Car).unwrap();
        let spec = SyntheticSceneSpec {
            ground: GroundModel::Flat,
            objects: vec![ObjectProxy {
                shape: car.clone(),
                density: 60.0,
            }],
            noise_std: 0.02,
            extent: 25.0,
            ground_density: 3.0,
        };
        let (cloud, _, _) = synthesize_scene(&spec, 77).unwrap();
        let out = apply_pgr(&cloud, &c0()).unwrap();
        for i in points_in_box(&cloud, &car, 1.0) {
            assert!(out.mask.is_kept(i), "car-box point {i} was removed");
        }
        assert!(
            out.mask.count_kept() < cloud.len(),
            "open ground must shrink the frame"
        );
    }

    #[test]
    fn filter_cloud_identity_and_empty() {
        let mut cloud = PointCloud::new("t", 1);
        cloud.push(1.0, 2.0, 3.0, &[0.5]);
        cloud.push(4.0, 5.0, 6.0, &[0.6]);
        let all = KeepMask::new(vec![true, true]);
        let none = KeepMask::new(vec![false, false]);
        assert_eq!(filter_cloud(&cloud, &all).unwrap(), cloud);
        assert!(filter_cloud(&cloud, &none).unwrap().is_empty());
        let wrong = KeepMask::new(vec![true]);
        assert!(matches!(
            filter_cloud(&cloud, &wrong),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn named_configs_carry_the_published_values() {
        let c0 = named_config("pgr-c0-kitti").unwrap();
        assert_eq!(c0.resolution, 0.4);
        assert_eq!(c0.delta_minmax, 0.4);
        assert_eq!(c0.er, 1.8);
        assert_eq!(c0.delta_env, 0.4);
        assert_eq!(c0.restore_rules[0].max_range, 30.0);
        assert_eq!(c0.restore_rules[0].delta_res, 1.8);
        assert_eq!(c0.restore_rules[1].delta_res, 5.4);
        assert!(c0.restore_rules[1].max_range.is_infinite());

        assert_eq!(
            named_config("pgr-c0-waymo").unwrap().restore_rules[0].delta_res,
            2.2
        );
        assert_eq!(named_config("pgr-c1").unwrap().er, 1.4);
        assert_eq!(
            named_config("pgr-c2").unwrap().restore_rules[0].delta_res,
            1.4
        );
        assert_eq!(named_config("pgr-c3").unwrap().delta_minmax, 0.6);
        let c4 = named_config("pgr-c4").unwrap();
        assert_eq!(
            (
                c4.er,
                c4.delta_minmax,
                c4.restore_rules[0].delta_res,
                c4.restore_rules[1].delta_res
            ),
            (0.6, 0.35, 1.6, 5.2)
        );

        match named_config("bogus") {
            Err(Error::UnknownName { valid, .. }) => {
                assert_eq!(valid.len(), CONFIG_NAMES.len());
            }
            other => panic!("expected lookup error, got {other:?}"),
        }
    }

    #[test]
    fn delta_res_selection_uses_the_pillar_range() {
        let cfg = c0();
        assert_eq!(cfg.delta_res_for(0.0), 1.8);
        assert_eq!(cfg.delta_res_for(29.99), 1.8);
        assert_eq!(cfg.delta_res_for(30.0), 5.4);
        assert_eq!(cfg.delta_res_for(80.0), 5.4);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let cfg = named_config("pgr-c0-waymo").unwrap();
        save_config(&cfg, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
    }

    #[test]
    fn config_validation_rejects_bad_rule_order() {
        let mut cfg = c0();
        cfg.restore_rules[0].max_range = 40.0;
        cfg.restore_rules[1].max_range = 30.0;
        assert!(cfg.validate().is_err());
        let mut cfg = c0();
        cfg.restore_rules.truncate(1);
        assert!(cfg.validate().is_err(), "last rule must be unbounded");
    }

    fn random_scene(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|_| {
                (
                    rng.random_range(-15.0..15.0),
                    rng.random_range(-15.0..15.0),
                    rng.random_range(0.0..2.0),
                )
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn vertical_translation_leaves_the_mask_unchanged(seed in 0u64..1000, dz in -30.0f64..30.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = random_scene(&mut rng, 300);
            let cloud = cloud_from(&pts);
            let cfg = c0();
            let base = apply_pgr(&cloud, &cfg).unwrap();
            let lifted = apply_pgr(&cloud.translated(0.0, 0.0, dz), &cfg).unwrap();
            prop_assert_eq!(base.mask, lifted.mask);
        }

        #[test]
        fn resolution_multiple_shift_leaves_the_mask_unchanged(
            seed in 0u64..1000,
            kx in -50i64..50,
            ky in -50i64..50,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = random_scene(&mut rng, 300);
            let cloud = cloud_from(&pts);
            // The restoration radius switches on absolute range at 30 m, so
            // the invariant needs a single range-free rule: a shift may
            // legitimately move pillars across the band otherwise.
            let mut cfg = c0();
            cfg.restore_rules = vec![RestoreRule { max_range: f64::INFINITY, delta_res: 1.8 }];
            let base = apply_pgr(&cloud, &cfg).unwrap();
            let moved = cloud.translated(kx as f64 * cfg.resolution, ky as f64 * cfg.resolution, 0.0);
            let shifted = apply_pgr(&moved, &cfg).unwrap();
            prop_assert_eq!(base.mask, shifted.mask);
        }

        #[test]
        fn larger_delta_minmax_only_clears_phi(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = random_scene(&mut rng, 250);
            let grid = grid_of(&pts, 0.4);
            let cfg_small = c0();
            let mut cfg_large = c0();
            cfg_large.delta_minmax = 0.9;
            let phi_small = removal_phase(&grid, &cfg_small).unwrap();
            let phi_large = removal_phase(&grid, &cfg_large).unwrap();
            for (s, l) in phi_small.iter().zip(&phi_large) {
                // phi can flip retained -> removed, never the reverse.
                prop_assert!(*s || !*l);
            }
        }

        #[test]
        fn larger_delta_res_never_shrinks_the_kept_set(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts = random_scene(&mut rng, 250);
            let cloud = cloud_from(&pts);
            let base_cfg = c0();
            let mut wide_cfg = base_cfg.clone();
            for rule in &mut wide_cfg.restore_rules {
                rule.delta_res *= 1.8;
            }
            let base = apply_pgr(&cloud, &base_cfg).unwrap();
            let wide = apply_pgr(&cloud, &wide_cfg).unwrap();
            for i in 0..cloud.len() {
                prop_assert!(!base.mask.is_kept(i) || wide.mask.is_kept(i));
            }
        }
    }
}
