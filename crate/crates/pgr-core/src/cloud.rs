//! Point-cloud frames, oriented bounding boxes, and ground masks.
//!
//! Coordinates are meters in the sensor frame: sensor at the origin, z up.
//! A frame stores its points in column layout so every point carries the
//! same attribute arity by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frame of N points with per-point scalar attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    frame_id: String,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    /// Row-major attribute block, `len() * attribute_arity` values.
    attributes: Vec<f32>,
    attribute_arity: usize,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, attribute_arity: usize) -> Self {
        Self {
            frame_id: frame_id.into(),
            xs: Vec::new(),
            ys: Vec::new(),
            zs: Vec::new(),
            attributes: Vec::new(),
            attribute_arity,
        }
    }

    pub fn with_capacity(
        frame_id: impl Into<String>,
        attribute_arity: usize,
        capacity: usize,
    ) -> Self {
        let mut cloud = Self::new(frame_id, attribute_arity);
        cloud.xs.reserve(capacity);
        cloud.ys.reserve(capacity);
        cloud.zs.reserve(capacity);
        cloud.attributes.reserve(capacity * attribute_arity);
        cloud
    }

    /// Append one point. `attrs` must match the frame's attribute arity.
    pub fn push(&mut self, x: f64, y: f64, z: f64, attrs: &[f32]) {
        assert_eq!(
            attrs.len(),
            self.attribute_arity,
            "attribute arity mismatch"
        );
        self.xs.push(x);
        self.ys.push(y);
        self.zs.push(z);
        self.attributes.extend_from_slice(attrs);
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn set_frame_id(&mut self, frame_id: impl Into<String>) {
        self.frame_id = frame_id.into();
    }

    pub fn attribute_arity(&self) -> usize {
        self.attribute_arity
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        [self.xs[i], self.ys[i], self.zs[i]]
    }

    pub fn attributes_of(&self, i: usize) -> &[f32] {
        let a = self.attribute_arity;
        &self.attributes[i * a..(i + 1) * a]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn iter_points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Index of the first non-finite coordinate, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| {
            !(self.xs[i].is_finite() && self.ys[i].is_finite() && self.zs[i].is_finite())
        })
    }

    /// Translate every point by `(dx, dy, dz)`.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> PointCloud {
        let mut out = self.clone();
        for v in &mut out.xs {
            *v += dx;
        }
        for v in &mut out.ys {
            *v += dy;
        }
        for v in &mut out.zs {
            *v += dz;
        }
        out
    }
}

/// Object class carried by box annotations. Unrecognized labels map to
/// [`ClassLabel::Other`] when parsing annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    /// "Car" on KITTI-style labels, "Vehicle" on Waymo-style labels.
    #[serde(alias = "Vehicle")]
    Car,
    Pedestrian,
    Cyclist,
    #[serde(other)]
    Other,
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClassLabel::Car => "Car",
            ClassLabel::Pedestrian => "Pedestrian",
            ClassLabel::Cyclist => "Cyclist",
            ClassLabel::Other => "Other",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "Car" | "Vehicle" => ClassLabel::Car,
            "Pedestrian" => ClassLabel::Pedestrian,
            "Cyclist" => ClassLabel::Cyclist,
            _ => ClassLabel::Other,
        })
    }
}

/// Oriented 3D bounding box in the sensor frame, yaw about the vertical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Radians in [-pi, pi].
    pub yaw: f64,
    pub class_label: ClassLabel,
}

impl Box3D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        center_x: f64,
        center_y: f64,
        center_z: f64,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
        class_label: ClassLabel,
    ) -> Result<Self> {
        let b = Self {
            center_x,
            center_y,
            center_z,
            length,
            width,
            height,
            yaw,
            class_label,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.center_x,
            self.center_y,
            self.center_z,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::validation("box has non-finite field"));
        }
        if self.length <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::validation(format!(
                "box dimensions must be positive, got ({}, {}, {})",
                self.length, self.width, self.height
            )));
        }
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&self.yaw) {
            return Err(Error::validation(format!(
                "yaw must lie in [-pi, pi], got {}",
                self.yaw
            )));
        }
        Ok(())
    }

    /// Whether `point` lies in this box with all three dimensions multiplied
    /// by `scale`. Boundary points count as inside.
    pub fn contains(&self, point: [f64; 3], scale: f64) -> bool {
        let dx = point[0] - self.center_x;
        let dy = point[1] - self.center_y;
        let dz = point[2] - self.center_z;
        // Rotate the offset by -yaw into the box-aligned frame.
        let (sin, cos) = self.yaw.sin_cos();
        let local_x = cos * dx + sin * dy;
        let local_y = -sin * dx + cos * dy;
        local_x.abs() <= scale * self.length * 0.5
            && local_y.abs() <= scale * self.width * 0.5
            && dz.abs() <= scale * self.height * 0.5
    }
}

/// Indices of the points of `cloud` inside `bbox` scaled by `scale` about
/// its center. Ascending order; boundary inclusive.
pub fn points_in_box(cloud: &PointCloud, bbox: &Box3D, scale: f64) -> Vec<usize> {
    assert!(scale >= 0.0, "scale must be non-negative");
    (0..cloud.len())
        .filter(|&i| bbox.contains(cloud.point(i), scale))
        .collect()
}

/// Per-point ground labels paired with a frame of the same length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundMask(Vec<bool>);

impl GroundMask {
    pub fn new(flags: Vec<bool>) -> Self {
        GroundMask(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_ground(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ground(&self) -> usize {
        self.0.iter().filter(|&&g| g).count()
    }

    /// Errors unless the mask length matches the frame's point count.
    pub fn check_pairing(&self, cloud: &PointCloud) -> Result<()> {
        if self.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}
