//! 2D pillar grid over a frame.
//!
//! A pillar is the vertical column above one square grid cell; it owns the
//! indices of the points whose (x, y) fall in that cell plus the height
//! extrema the removal conditions operate on. Points exactly on a cell
//! boundary belong to the higher-index cell (floor semantics).

use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Largest dense lookup table the grid keeps alongside the cell map.
/// Frames spanning a wider cell rectangle fall back to hash lookups.
const DENSE_CELL_LIMIT: usize = 1 << 22;

/// Square-cell grid geometry: side length and anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Pillar side length in meters.
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridSpec {
    pub fn new(resolution: f64, origin_x: f64, origin_y: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::validation(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(Error::validation("grid origin must be finite"));
        }
        Ok(Self {
            resolution,
            origin_x,
            origin_y,
        })
    }

    /// Spec with the origin anchored at the frame's minimum x/y rounded
    /// down to a resolution multiple. Empty frames anchor at (0, 0).
    pub fn anchored(cloud: &PointCloud, resolution: f64) -> Result<Self> {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        for i in 0..cloud.len() {
            let p = cloud.point(i);
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
        }
        if cloud.is_empty() {
            return Self::new(resolution, 0.0, 0.0);
        }
        let snap = |v: f64| (v / resolution).floor() * resolution;
        Self::new(resolution, snap(min_x), snap(min_y))
    }

    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin_x) / self.resolution).floor() as i64,
            ((y - self.origin_y) / self.resolution).floor() as i64,
        )
    }

    #[inline]
    pub fn cell_center(&self, cell: (i64, i64)) -> (f64, f64) {
        (
            self.origin_x + (cell.0 as f64 + 0.5) * self.resolution,
            self.origin_y + (cell.1 as f64 + 0.5) * self.resolution,
        )
    }
}

/// One occupied grid cell.
#[derive(Debug, Clone)]
pub struct Pillar {
    pub cell: (i64, i64),
    /// Indices into the source frame; never empty.
    pub point_indices: Vec<u32>,
    pub z_min: f64,
    pub z_max: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// Horizontal distance of the pillar center from the sensor origin.
    pub range_2d: f64,
}

/// All occupied pillars of a frame, ordered by cell (ix, then iy).
#[derive(Debug, Clone)]
pub struct PillarGrid {
    spec: GridSpec,
    pillars: Vec<Pillar>,
    index: HashMap<(i64, i64), u32>,
    dense: Option<DenseIndex>,
    n_points: usize,
}

/// Row-major cell-to-pillar table over the occupied bounding rectangle.
#[derive(Debug, Clone)]
pub(crate) struct DenseIndex {
    pub(crate) min: (i64, i64),
    pub(crate) span_x: usize,
    pub(crate) span_y: usize,
    pub(crate) slots: Vec<u32>,
}

pub(crate) const EMPTY_SLOT: u32 = u32::MAX;

impl DenseIndex {
    #[inline]
    pub(crate) fn get(&self, cell: (i64, i64)) -> Option<u32> {
        let rx = cell.0.wrapping_sub(self.min.0);
        let ry = cell.1.wrapping_sub(self.min.1);
        if rx < 0 || ry < 0 || rx as usize >= self.span_x || ry as usize >= self.span_y {
            return None;
        }
        let slot = self.slots[rx as usize * self.span_y + ry as usize];
        (slot != EMPTY_SLOT).then_some(slot)
    }
}

impl PillarGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Number of occupied pillars (M).
    pub fn len(&self) -> usize {
        self.pillars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pillars.is_empty()
    }

    /// Point count of the source frame.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn pillars(&self) -> &[Pillar] {
        &self.pillars
    }

    pub fn pillar_at(&self, cell: (i64, i64)) -> Option<&Pillar> {
        self.pillar_index(cell).map(|i| &self.pillars[i])
    }

    pub fn pillar_index(&self, cell: (i64, i64)) -> Option<usize> {
        match &self.dense {
            Some(d) => d.get(cell).map(|i| i as usize),
            None => self.index.get(&cell).map(|&i| i as usize),
        }
    }

    /// Dense cell table, when the occupied rectangle is small enough.
    pub(crate) fn dense_index(&self) -> Option<&DenseIndex> {
        self.dense.as_ref()
    }

    /// Pillar index of the point's cell. Every in-range point has one.
    pub fn pillar_of_point(&self, x: f64, y: f64) -> Option<usize> {
        self.pillar_index(self.spec.cell_of(x, y))
    }
}

/// Partition a frame into pillars. Every point lands in exactly one pillar;
/// cells with no points are absent.
pub fn build_grid(cloud: &PointCloud, spec: GridSpec) -> Result<PillarGrid> {
    if let Some(i) = cloud.first_non_finite() {
        return Err(Error::Data {
            index: i,
            reason: "non-finite coordinate".into(),
        });
    }
    let n = cloud.len();
    let mut cells = Vec::with_capacity(n);
    let mut min = (i64::MAX, i64::MAX);
    let mut max = (i64::MIN, i64::MIN);
    for i in 0..n {
        let p = cloud.point(i);
        let cell = spec.cell_of(p[0], p[1]);
        min = (min.0.min(cell.0), min.1.min(cell.1));
        max = (max.0.max(cell.0), max.1.max(cell.1));
        cells.push(cell);
    }

    if n == 0 {
        return Ok(PillarGrid {
            spec,
            pillars: Vec::new(),
            index: HashMap::new(),
            dense: None,
            n_points: 0,
        });
    }

    let area = (max.0 as i128 - min.0 as i128 + 1)
        .checked_mul(max.1 as i128 - min.1 as i128 + 1)
        .filter(|&a| a <= DENSE_CELL_LIMIT as i128);

    let mut index: HashMap<(i64, i64), u32> = HashMap::new();
    let mut pillars: Vec<Pillar>;
    let mut dense = None;

    if let Some(area) = area {
        // Dense path: count per cell, lay pillars out in (ix, iy) order,
        // then scatter the points, which keeps input order per pillar.
        let area = area as usize;
        let span_x = (max.0 - min.0) as usize + 1;
        let span_y = (max.1 - min.1) as usize + 1;
        let slot_of =
            |cell: (i64, i64)| (cell.0 - min.0) as usize * span_y + (cell.1 - min.1) as usize;
        let mut counts = vec![0u32; area];
        for cell in &cells {
            counts[slot_of(*cell)] += 1;
        }
        let mut slots = vec![EMPTY_SLOT; area];
        pillars = Vec::new();
        for (slot, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let cell = (
                min.0 + (slot / span_y) as i64,
                min.1 + (slot % span_y) as i64,
            );
            slots[slot] = pillars.len() as u32;
            let (center_x, center_y) = spec.cell_center(cell);
            pillars.push(Pillar {
                cell,
                point_indices: Vec::with_capacity(count as usize),
                z_min: f64::INFINITY,
                z_max: f64::NEG_INFINITY,
                center_x,
                center_y,
                range_2d: center_x.hypot(center_y),
            });
        }
        for (i, cell) in cells.iter().enumerate() {
            let p = &mut pillars[slots[slot_of(*cell)] as usize];
            p.point_indices.push(i as u32);
            let z = cloud.zs()[i];
            p.z_min = p.z_min.min(z);
            p.z_max = p.z_max.max(z);
        }
        dense = Some(DenseIndex {
            min,
            span_x,
            span_y,
            slots,
        });
    } else {
        // Sparse fallback: group by sorted cell.
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_unstable_by_key(|&i| cells[i as usize]);
        pillars = Vec::new();
        for &i in &order {
            let cell = cells[i as usize];
            let z = cloud.zs()[i as usize];
            match pillars.last_mut() {
                Some(last) if last.cell == cell => {
                    last.point_indices.push(i);
                    last.z_min = last.z_min.min(z);
                    last.z_max = last.z_max.max(z);
                }
                _ => {
                    let (center_x, center_y) = spec.cell_center(cell);
                    pillars.push(Pillar {
                        cell,
                        point_indices: vec![i],
                        z_min: z,
                        z_max: z,
                        center_x,
                        center_y,
                        range_2d: center_x.hypot(center_y),
                    });
                }
            }
        }
        // Restore original point order inside each pillar.
        for p in &mut pillars {
            p.point_indices.sort_unstable();
        }
        index.reserve(pillars.len());
        for (i, p) in pillars.iter().enumerate() {
            index.insert(p.cell, i as u32);
        }
    }

    Ok(PillarGrid {
        spec,
        pillars,
        index,
        dense,
        n_points: n,
    })
}

/// Cell radius of a square window of physical half-side `radius`.
#[inline]
pub(crate) fn window_cells(radius: f64, resolution: f64) -> i64 {
    (radius / resolution).floor() as i64
}

/// Height of the lowest point in the square neighborhood of `cell`:
/// all pillars within `floor(radius / resolution)` cells on both axes,
/// the queried pillar included.
pub fn neighborhood_min_z(grid: &PillarGrid, cell: (i64, i64), radius: f64) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::validation(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if grid.pillar_index(cell).is_none() {
        return Err(Error::CellNotFound(cell.0, cell.1));
    }
    let w = window_cells(radius, grid.spec.resolution);
    let mut min_z = f64::INFINITY;
    for dx in -w..=w {
        for dy in -w..=w {
            if let Some(i) = grid.pillar_index((cell.0 + dx, cell.1 + dy)) {
                min_z = min_z.min(grid.pillars[i].z_min);
            }
        }
    }
    Ok(min_z)
}

/// Chessboard (L-infinity) distance between two pillar centers.
pub fn pillar_chessboard_distance(a: &Pillar, b: &Pillar) -> f64 {
    (a.center_x - b.center_x)
        .abs()
        .max((a.center_y - b.center_y).abs())
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

    fn default_spec() -> GridSpec {
        GridSpec::new(0.4, 0.0, 0.0).unwrap()
    }

    #[test]
    fn single_point_single_pillar() {
        let cloud = cloud_from(&[(0.1, 0.1, 0.0)]);
        let grid = build_grid(&cloud, default_spec()).unwrap();
        assert_eq!(grid.len(), 1);
        let p = &grid.pillars()[0];
        assert_eq!(p.cell, (0, 0));
        assert_eq!(p.z_min, 0.0);
        assert_eq!(p.z_max, 0.0);
        assert_eq!(p.center_x, 0.2);
        assert_eq!(p.center_y, 0.2);
    }

    #[test]
    fn empty_cloud_empty_grid() {
        let grid = build_grid(&cloud_from(&[]), default_spec()).unwrap();
        assert!(grid.is_empty());
        assert_eq!(grid.n_points(), 0);
    }

    #[test]
    fn non_finite_coordinate_is_a_data_error() {
        let mut cloud = PointCloud::new("t", 0);
        cloud.push(0.0, 0.0, 0.0, &[]);
        cloud.push(f64::NAN, 0.0, 0.0, &[]);
        match build_grid(&cloud, default_spec()) {
            Err(Error::Data { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn random_points_match_brute_force_extrema() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<(f64, f64, f64)> = (0..1000)
            .map(|_| {
                (
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-2.0..5.0),
                )
            })
            .collect();
        let cloud = cloud_from(&pts);
        let spec = GridSpec::anchored(&cloud, 0.4).unwrap();
        let grid = build_grid(&cloud, spec).unwrap();

        // Brute force: reassign every point and fold extrema per cell.
        let mut expected: HashMap<(i64, i64), (Vec<u32>, f64, f64)> = HashMap::new();
        for (i, &(x, y, z)) in pts.iter().enumerate() {
            let cell = spec.cell_of(x, y);
            let e = expected
                .entry(cell)
                .or_insert((Vec::new(), f64::INFINITY, f64::NEG_INFINITY));
            e.0.push(i as u32);
            e.1 = e.1.min(z);
            e.2 = e.2.max(z);
        }
        assert_eq!(grid.len(), expected.len());
        let mut total = 0;
        for p in grid.pillars() {
            let (idx, z_min, z_max) = expected.get(&p.cell).expect("pillar cell missing");
            assert_eq!(&p.point_indices, idx);
            assert_eq!(p.z_min, *z_min);
            assert_eq!(p.z_max, *z_max);
            assert!(p.z_min <= p.z_max);
            total += p.point_indices.len();
        }
        assert_eq!(total, cloud.len());
    }

    #[test]
    fn neighborhood_min_of_isolated_pillar_is_its_own() {
        let cloud = cloud_from(&[(0.1, 0.1, 2.5)]);
        let grid = build_grid(&cloud, default_spec()).unwrap();
        assert_eq!(neighborhood_min_z(&grid, (0, 0), 1.8).unwrap(), 2.5);
    }

    #[test]
    fn neighborhood_min_spans_adjacent_cells() {
        let cloud = cloud_from(&[(0.1, 0.1, 0.0), (0.5, 0.1, 1.0)]);
        let grid = build_grid(&cloud, default_spec()).unwrap();
        assert_eq!(neighborhood_min_z(&grid, (0, 0), 0.4).unwrap(), 0.0);
        assert_eq!(neighborhood_min_z(&grid, (1, 0), 0.4).unwrap(), 0.0);
    }

    #[test]
    fn neighborhood_query_on_missing_cell_fails() {
        let cloud = cloud_from(&[(0.1, 0.1, 0.0)]);
        let grid = build_grid(&cloud, default_spec()).unwrap();
        assert!(matches!(
            neighborhood_min_z(&grid, (5, 5), 1.8),
            Err(Error::CellNotFound(5, 5))
        ));
    }

    #[test]
    fn neighborhood_min_matches_brute_force_window() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<(f64, f64, f64)> = (0..600)
            .map(|_| {
                (
                    rng.random_range(-8.0..8.0),
                    rng.random_range(-8.0..8.0),
                    rng.random_range(-1.0..3.0),
                )
            })
            .collect();
        let cloud = cloud_from(&pts);
        let spec = GridSpec::anchored(&cloud, 0.4).unwrap();
        let grid = build_grid(&cloud, spec).unwrap();
        let radius = 1.8;
        let w = (radius / spec.resolution).floor() as i64;
        for p in grid.pillars() {
            let expected = grid
                .pillars()
                .iter()
                .filter(|q| (q.cell.0 - p.cell.0).abs() <= w && (q.cell.1 - p.cell.1).abs() <= w)
                .map(|q| q.z_min)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(neighborhood_min_z(&grid, p.cell, radius).unwrap(), expected);
        }
    }

    #[test]
    fn chessboard_distance_examples() {
        let grid = build_grid(
            &cloud_from(&[
                (0.1, 0.1, 0.0),
                (0.5, 0.1, 0.0),
                (0.9, 1.3, 0.0),
                (2.1, 0.5, 0.0),
            ]),
            default_spec(),
        )
        .unwrap();
        let at = |cell| grid.pillar_at(cell).unwrap();
        assert_eq!(pillar_chessboard_distance(at((0, 0)), at((0, 0))), 0.0);
        assert!((pillar_chessboard_distance(at((0, 0)), at((1, 0))) - 0.4).abs() < 1e-12);
        // cells (2, 3) vs (5, 1): max(1.2, 0.8) = 1.2
        let a = Pillar {
            cell: (2, 3),
            point_indices: vec![0],
            z_min: 0.0,
            z_max: 0.0,
            center_x: 0.4 * 2.5,
            center_y: 0.4 * 3.5,
            range_2d: 0.0,
        };
        let b = Pillar {
            cell: (5, 1),
            point_indices: vec![0],
            z_min: 0.0,
            z_max: 0.0,
            center_x: 0.4 * 5.5,
            center_y: 0.4 * 1.5,
            range_2d: 0.0,
        };
        assert!((pillar_chessboard_distance(&a, &b) - 1.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_property(points in prop::collection::vec(
            (-50.0f64..50.0, -50.0f64..50.0, -3.0f64..6.0), 0..300,
        )) {
            let cloud = cloud_from(&points);
            let spec = GridSpec::anchored(&cloud, 0.4).unwrap();
            let grid = build_grid(&cloud, spec).unwrap();
            let mut seen = vec![0u32; cloud.len()];
            for p in grid.pillars() {
                prop_assert!(!p.point_indices.is_empty());
                for &i in &p.point_indices {
                    seen[i as usize] += 1;
                    let cell = spec.cell_of(points[i as usize].0, points[i as usize].1);
                    prop_assert_eq!(cell, p.cell);
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn translation_covariance(
            points in prop::collection::vec(
                (-20.0f64..20.0, -20.0f64..20.0, -3.0f64..6.0), 1..200,
            ),
            shift in (-40.0f64..40.0, -40.0f64..40.0),
        ) {
            let cloud = cloud_from(&points);
            let spec = GridSpec::anchored(&cloud, 0.4).unwrap();
            let grid = build_grid(&cloud, spec).unwrap();

            let moved = cloud.translated(shift.0, shift.1, 0.0);
            let spec2 = GridSpec::new(0.4, spec.origin_x + shift.0, spec.origin_y + shift.1)
                .unwrap();
            let grid2 = build_grid(&moved, spec2).unwrap();

            prop_assert_eq!(grid.len(), grid2.len());
            for (a, b) in grid.pillars().iter().zip(grid2.pillars()) {
                prop_assert_eq!(a.cell, b.cell);
                prop_assert_eq!(&a.point_indices, &b.point_indices);
                prop_assert_eq!(a.z_min, b.z_min);
                prop_assert_eq!(a.z_max, b.z_max);
            }
        }

        #[test]
        fn neighborhood_min_is_monotone_in_radius(
            points in prop::collection::vec(
                (-10.0f64..10.0, -10.0f64..10.0, -2.0f64..4.0), 1..150,
            ),
            r1 in 0.2f64..3.0,
            r2 in 0.2f64..3.0,
        ) {
            let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let cloud = cloud_from(&points);
            let spec = GridSpec::anchored(&cloud, 0.4).unwrap();
            let grid = build_grid(&cloud, spec).unwrap();
            for p in grid.pillars() {
                let a = neighborhood_min_z(&grid, p.cell, small).unwrap();
                let b = neighborhood_min_z(&grid, p.cell, large).unwrap();
                prop_assert!(b <= a);
            }
        }

        #[test]
        fn chessboard_distance_is_a_metric(
            cells in prop::collection::vec((-30i64..30, -30i64..30), 3),
        ) {
            let spec = default_spec();
            let mk = |cell: (i64, i64)| {
                let (cx, cy) = spec.cell_center(cell);
                Pillar {
                    cell,
                    point_indices: vec![0],
                    z_min: 0.0,
                    z_max: 0.0,
                    center_x: cx,
                    center_y: cy,
                    range_2d: cx.hypot(cy),
                }
            };
            let (a, b, c) = (mk(cells[0]), mk(cells[1]), mk(cells[2]));
            let dab = pillar_chessboard_distance(&a, &b);
            let dba = pillar_chessboard_distance(&b, &a);
            let dac = pillar_chessboard_distance(&a, &c);
            let dcb = pillar_chessboard_distance(&c, &b);
            prop_assert_eq!(dab, dba);
            prop_assert_eq!(pillar_chessboard_distance(&a, &a), 0.0);
            prop_assert!((a.cell == b.cell) == (dab == 0.0));
            prop_assert!(dab <= dac + dcb + 1e-12);
        }
    }
}
