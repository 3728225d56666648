//! File formats for frames, box annotations, and ground masks.
//!
//! * Frames: headerless little-endian `f32` records `[x, y, z, intensity]`,
//!   densely packed (the KITTI velodyne convention).
//! * Boxes: CSV with header `class,cx,cy,cz,length,width,height,yaw`.
//! * Ground masks: text, one `0` or `1` per line, one line per point.
//!
//! Masks and boxes pair with a frame through the shared filename stem.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{Box3D, ClassLabel, GroundMask, PointCloud};
use crate::error::{Error, Result};

const RECORD_BYTES: usize = 16;

/// Load a binary frame. The filename stem becomes the frame id.
pub fn load_frame_binary(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::format(
            path,
            format!(
                "file size {} is not a multiple of the {}-byte record",
                bytes.len(),
                RECORD_BYTES
            ),
        ));
    }
    let n = bytes.len() / RECORD_BYTES;
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut cloud = PointCloud::with_capacity(frame_id, 1, n);
    for i in 0..n {
        let rec = &bytes[i * RECORD_BYTES..(i + 1) * RECORD_BYTES];
        let x = f32::from_le_bytes(rec[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(rec[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(rec[8..12].try_into().unwrap());
        let intensity = f32::from_le_bytes(rec[12..16].try_into().unwrap());
        if !(x.is_finite() && y.is_finite() && z.is_finite() && intensity.is_finite()) {
            return Err(Error::Data {
                index: i,
                reason: "non-finite value in record".into(),
            });
        }
        cloud.push(x as f64, y as f64, z as f64, &[intensity]);
    }
    Ok(cloud)
}

/// Save a frame with exactly one attribute per point as a binary file
/// readable by [`load_frame_binary`]. Written atomically.
pub fn save_frame_binary(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud.attribute_arity() != 1 {
        return Err(Error::validation(format!(
            "binary frames carry exactly one attribute, cloud has {}",
            cloud.attribute_arity()
        )));
    }
    let mut bytes = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for i in 0..cloud.len() {
        let [x, y, z] = cloud.point(i);
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
        bytes.extend_from_slice(&(y as f32).to_le_bytes());
        bytes.extend_from_slice(&(z as f32).to_le_bytes());
        bytes.extend_from_slice(&cloud.attributes_of(i)[0].to_le_bytes());
    }
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    class: String,
    cx: f64,
    cy: f64,
    cz: f64,
    length: f64,
    width: f64,
    height: f64,
    yaw: f64,
}

/// Load box annotations from a CSV file. Entry order is preserved.
pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<Box3D>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let mut boxes = Vec::new();
    for (i, row) in reader.deserialize::<BoxRecord>().enumerate() {
        let line = i + 2; // 1-based, after the header line
        let rec = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let label: ClassLabel = rec.class.parse().unwrap();
        let bbox = Box3D::new(
            rec.cx, rec.cy, rec.cz, rec.length, rec.width, rec.height, rec.yaw, label,
        )
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
        boxes.push(bbox);
    }
    Ok(boxes)
}

/// Save box annotations as CSV readable by [`load_boxes`].
pub fn save_boxes(boxes: &[Box3D], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(Vec::new());
    for b in boxes {
        writer
            .serialize(BoxRecord {
                class: b.class_label.to_string(),
                cx: b.center_x,
                cy: b.center_y,
                cz: b.center_z,
                length: b.length,
                width: b.width,
                height: b.height,
                yaw: b.yaw,
            })
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Load a per-point ground mask: one `0`/`1` per line.
pub fn load_ground_mask(path: impl AsRef<Path>) -> Result<GroundMask> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "0" => flags.push(false),
            "1" => flags.push(true),
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 0 or 1, got {other:?}"),
                ))
            }
        }
    }
    Ok(GroundMask::new(flags))
}

/// Save a ground mask readable by [`load_ground_mask`].
pub fn save_ground_mask(mask: &GroundMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(mask.len() * 2);
    for &g in mask.flags() {
        text.push(if g { '1' } else { '0' });
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
