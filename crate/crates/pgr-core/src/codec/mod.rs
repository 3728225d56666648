//! Octree geometry codec: quantize, deduplicate, code the octree
//! occupancy with an adaptive binary arithmetic coder, and carry
//! attributes through uncompressed.
//!
//! The structure mirrors geometry-based point cloud compression closely
//! enough that relative rate comparisons are meaningful; the bitstream is
//! not interoperable with any standard codec.
//!
//! # Bitstream layout
//!
//! All integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PGRB"
//! 4       1     version (1)
//! 5       4     CRC-32 of every byte after this field
//! 9       4     frame id length L
//! 13      L     frame id (UTF-8)
//! ..      8     geometry scale (f64)
//! ..      24    translation offset x, y, z (3 x f64)
//! ..      8     original point count N_orig (u64)
//! ..      8     coded cell count (u64)
//! ..      1     octree depth
//! ..      2     attribute arity (u16)
//! ..      8     geometry payload length in bytes (u64)
//! ..      8     attribute payload length in bytes (u64)
//! ..      .     geometry payload (arithmetic-coded occupancy)
//! ..      .     attribute payload (f32 per attribute, leaf order)
//! ```

pub mod arith;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use arith::{BitDecoder, BitEncoder, BitModel};

const MAGIC: [u8; 4] = *b"PGRB";
const VERSION: u8 = 1;

/// The six geometry scaling factors used by the rate sweeps.
pub const GEOMETRY_SCALES: [f64; 6] = [0.01, 0.012, 0.015, 0.022, 0.035, 0.063];

/// Geometry quantization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    /// Coordinate multiplier applied before rounding, in (0, 1].
    pub geometry_scale: f64,
}

impl CodecConfig {
    pub fn new(geometry_scale: f64) -> Result<Self> {
        let cfg = CodecConfig { geometry_scale };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.geometry_scale.is_finite()
            && self.geometry_scale > 0.0
            && self.geometry_scale <= 1.0)
        {
            return Err(Error::validation(format!(
                "geometry scale must lie in (0, 1], got {}",
                self.geometry_scale
            )));
        }
        Ok(())
    }
}

/// Deduplicated integer coordinates plus what it takes to undo them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCloud {
    /// Unique cells in Morton order.
    pub cells: Vec<[u32; 3]>,
    /// For each cell, the original index of the surviving point.
    pub surviving: Vec<u32>,
    /// Per-axis minimum of the original coordinates.
    pub offset: [f64; 3],
    pub scale: f64,
}

impl QuantizedCloud {
    /// Real-space coordinate of cell `i`.
    pub fn dequantize(&self, i: usize) -> [f64; 3] {
        let c = self.cells[i];
        [
            c[0] as f64 / self.scale + self.offset[0],
            c[1] as f64 / self.scale + self.offset[1],
            c[2] as f64 / self.scale + self.offset[2],
        ]
    }
}

/// Shift to per-axis minima, scale, round half-up, and deduplicate.
/// When several points land in one cell the last one in input order
/// survives.
pub fn quantize(cloud: &PointCloud, cfg: CodecConfig) -> Result<QuantizedCloud> {
    cfg.validate()?;
    if let Some(i) = cloud.first_non_finite() {
        return Err(Error::Data {
            index: i,
            reason: "non-finite coordinate".into(),
        });
    }
    let scale = cfg.geometry_scale;
    if cloud.is_empty() {
        return Ok(QuantizedCloud {
            cells: Vec::new(),
            surviving: Vec::new(),
            offset: [0.0; 3],
            scale,
        });
    }
    let mut offset = [f64::INFINITY; 3];
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        for a in 0..3 {
            offset[a] = offset[a].min(p[a]);
        }
    }
    let mut survivor_of: HashMap<[u32; 3], u32> = HashMap::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let mut cell = [0u32; 3];
        for a in 0..3 {
            let q = ((p[a] - offset[a]) * scale).round();
            if q > u32::MAX as f64 {
                return Err(Error::Data {
                    index: i,
                    reason: format!("quantized coordinate {q} exceeds the 32-bit cell range"),
                });
            }
            cell[a] = q as u32;
        }
        survivor_of.insert(cell, i as u32);
    }
    let mut pairs: Vec<([u32; 3], u32)> = survivor_of.into_iter().collect();
    pairs.sort_unstable_by_key(|(cell, _)| morton_key(*cell));
    let (cells, surviving) = pairs.into_iter().unzip();
    Ok(QuantizedCloud {
        cells,
        surviving,
        offset,
        scale,
    })
}

/// 96-bit Morton code; x outranks y outranks z, matching the octree
/// child index `(x << 2) | (y << 1) | z`.
fn morton_key(cell: [u32; 3]) -> u128 {
    let mut key = 0u128;
    for bit in 0..32 {
        key |= (((cell[0] >> bit) & 1) as u128) << (3 * bit + 2);
        key |= (((cell[1] >> bit) & 1) as u128) << (3 * bit + 1);
        key |= (((cell[2] >> bit) & 1) as u128) << (3 * bit);
    }
    key
}

#[inline]
fn child_index(cell: [u32; 3], shift: u8) -> u8 {
    ((((cell[0] >> shift) & 1) << 2) | (((cell[1] >> shift) & 1) << 1) | ((cell[2] >> shift) & 1))
        as u8
}

/// Depth of the bounding cube: smallest d with every coordinate < 2^d.
fn tree_depth(cells: &[[u32; 3]]) -> u8 {
    let max = cells
        .iter()
        .flat_map(|c| c.iter().copied())
        .max()
        .unwrap_or(0);
    (32 - max.leading_zeros()) as u8
}

/// An encoded frame: header fields plus the two payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct Bitstream {
    pub frame_id: String,
    pub scale: f64,
    pub offset: [f64; 3],
    /// Pre-preprocessing point count of the frame; the bpp denominator.
    pub n_orig: u64,
    pub n_cells: u64,
    pub depth: u8,
    pub attribute_arity: u16,
    pub geometry: Vec<u8>,
    pub attributes: Vec<u8>,
}

impl Bitstream {
    /// Serialized size in bytes.
    pub fn size_bytes(&self) -> usize {
        4 + 1 + 4 // magic, version, checksum
            + 4 + self.frame_id.len()
            + 8 + 24 + 8 + 8 + 1 + 2 + 8 + 8
            + self.geometry.len()
            + self.attributes.len()
    }

    /// Serialized size in bits.
    pub fn size_bits(&self) -> u64 {
        self.size_bytes() as u64 * 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(self.size_bytes() - 9);
        body.extend_from_slice(&(self.frame_id.len() as u32).to_le_bytes());
        body.extend_from_slice(self.frame_id.as_bytes());
        body.extend_from_slice(&self.scale.to_le_bytes());
        for v in self.offset {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.extend_from_slice(&self.n_orig.to_le_bytes());
        body.extend_from_slice(&self.n_cells.to_le_bytes());
        body.push(self.depth);
        body.extend_from_slice(&self.attribute_arity.to_le_bytes());
        body.extend_from_slice(&(self.geometry.len() as u64).to_le_bytes());
        body.extend_from_slice(&(self.attributes.len() as u64).to_le_bytes());
        body.extend_from_slice(&self.geometry);
        body.extend_from_slice(&self.attributes);

        let mut out = Vec::with_capacity(9 + body.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::Decode("stream shorter than the fixed header".into()));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Decode("bad magic bytes".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Decode(format!("unsupported version {}", bytes[4])));
        }
        let stored_crc = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let body = &bytes[9..];
        if crc32fast::hash(body) != stored_crc {
            return Err(Error::Decode("checksum mismatch".into()));
        }

        let mut r = Reader { body, pos: 0 };
        let id_len = r.u32()? as usize;
        let frame_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| Error::Decode("frame id is not UTF-8".into()))?;
        let scale = r.f64()?;
        let offset = [r.f64()?, r.f64()?, r.f64()?];
        let n_orig = r.u64()?;
        let n_cells = r.u64()?;
        let depth = r.take(1)?[0];
        let attribute_arity = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        let geom_len = r.u64()? as usize;
        let attr_len = r.u64()? as usize;
        let geometry = r.take(geom_len)?.to_vec();
        let attributes = r.take(attr_len)?.to_vec();
        if r.pos != body.len() {
            return Err(Error::Decode("trailing bytes after payloads".into()));
        }
        Ok(Bitstream {
            frame_id,
            scale,
            offset,
            n_orig,
            n_cells,
            depth,
            attribute_arity,
            geometry,
            attributes,
        })
    }
}

struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.body.len())
            .ok_or_else(|| Error::Decode("truncated stream".into()))?;
        let s = &self.body[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Encode a frame using its own point count as the bpp denominator.
pub fn encode_frame(cloud: &PointCloud, cfg: CodecConfig) -> Result<Bitstream> {
    encode_frame_with_original_count(cloud, cfg, cloud.len() as u64)
}

/// Encode a frame recording `n_orig` as the bpp denominator. Preprocessed
/// frames pass the pre-removal point count here so rate savings show up
/// in bits per point.
pub fn encode_frame_with_original_count(
    cloud: &PointCloud,
    cfg: CodecConfig,
    n_orig: u64,
) -> Result<Bitstream> {
    let q = quantize(cloud, cfg)?;
    let depth = tree_depth(&q.cells);

    let mut geometry = Vec::new();
    if q.cells.len() > 1 {
        let mut enc = BitEncoder::new();
        let mut models: [BitModel; 8] = Default::default();
        // Breadth-first over (range, level); Morton order makes each
        // node's cells contiguous and its children appear in child-index
        // order.
        let mut queue: VecDeque<(usize, usize, u8)> = VecDeque::new();
        queue.push_back((0, q.cells.len(), 0));
        while let Some((lo, hi, level)) = queue.pop_front() {
            if level == depth {
                debug_assert_eq!(hi - lo, 1, "cells are unique");
                continue;
            }
            let shift = depth - 1 - level;
            let mut occupancy = 0u8;
            let mut ranges = [(0usize, 0usize); 8];
            let mut k = lo;
            while k < hi {
                let j = child_index(q.cells[k], shift);
                let start = k;
                while k < hi && child_index(q.cells[k], shift) == j {
                    k += 1;
                }
                occupancy |= 1 << j;
                ranges[j as usize] = (start, k);
            }
            for (j, model) in models.iter_mut().enumerate() {
                enc.encode(occupancy >> j & 1 == 1, model);
            }
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                if occupancy >> j & 1 == 1 {
                    queue.push_back((lo, hi, level + 1));
                }
            }
        }
        geometry = enc.finish();
    }

    let arity = cloud.attribute_arity();
    let mut attributes = Vec::with_capacity(q.cells.len() * arity * 4);
    for &survivor in &q.surviving {
        for &a in cloud.attributes_of(survivor as usize) {
            attributes.extend_from_slice(&a.to_le_bytes());
        }
    }

    Ok(Bitstream {
        frame_id: cloud.frame_id().to_string(),
        scale: q.scale,
        offset: q.offset,
        n_orig,
        n_cells: q.cells.len() as u64,
        depth,
        attribute_arity: arity as u16,
        geometry,
        attributes,
    })
}

/// Largest coded cell count accepted from a header.
const MAX_CELLS: u64 = 1 << 34;

/// Decode a frame: one point per occupied leaf, attributes reattached in
/// leaf order. Fails cleanly on corrupt input.
pub fn decode_frame(b: &Bitstream) -> Result<PointCloud> {
    if !(b.scale.is_finite() && b.scale > 0.0) {
        return Err(Error::Decode(format!("invalid scale {}", b.scale)));
    }
    if b.n_cells > MAX_CELLS {
        return Err(Error::Decode(format!(
            "cell count {} exceeds the decoder limit",
            b.n_cells
        )));
    }
    let n_cells = b.n_cells as usize;
    let mut cells: Vec<[u32; 3]> = Vec::new();
    if n_cells > 0 {
        if b.depth == 0 {
            if n_cells != 1 {
                return Err(Error::Decode(format!(
                    "depth 0 holds exactly one cell, header says {n_cells}"
                )));
            }
            cells.push([0, 0, 0]);
        } else {
            let mut dec = BitDecoder::new(&b.geometry);
            let mut models: [BitModel; 8] = Default::default();
            let mut queue: VecDeque<([u32; 3], u8)> = VecDeque::new();
            queue.push_back(([0, 0, 0], 0));
            while let Some((prefix, level)) = queue.pop_front() {
                if level == b.depth {
                    cells.push(prefix);
                    continue;
                }
                let mut occupancy = 0u8;
                for (j, model) in models.iter_mut().enumerate() {
                    occupancy |= u8::from(dec.decode(model)) << j;
                }
                if occupancy == 0 {
                    return Err(Error::Decode("empty occupancy byte".into()));
                }
                for j in 0..8u32 {
                    if occupancy >> j & 1 == 1 {
                        queue.push_back((
                            [
                                (prefix[0] << 1) | (j >> 2 & 1),
                                (prefix[1] << 1) | (j >> 1 & 1),
                                (prefix[2] << 1) | (j & 1),
                            ],
                            level + 1,
                        ));
                    }
                }
                // Every pending subtree yields at least one leaf, so this
                // sum can never legitimately pass the coded cell count.
                if cells.len() + queue.len() > n_cells {
                    return Err(Error::Decode(
                        "occupancy stream grows past the header cell count".into(),
                    ));
                }
            }
        }
    }
    if cells.len() != n_cells {
        return Err(Error::Decode(format!(
            "decoded {} cells, header says {}",
            cells.len(),
            n_cells
        )));
    }

    let arity = b.attribute_arity as usize;
    let expected = n_cells
        .checked_mul(arity)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Decode("attribute payload size overflows".into()))?;
    if b.attributes.len() != expected {
        return Err(Error::Decode(format!(
            "attribute payload is {} bytes, expected {}",
            b.attributes.len(),
            expected
        )));
    }

    let mut cloud = PointCloud::with_capacity(b.frame_id.clone(), arity, n_cells);
    let mut attrs = vec![0f32; arity];
    for (i, cell) in cells.iter().enumerate() {
        for (a, slot) in attrs.iter_mut().enumerate() {
            let at = (i * arity + a) * 4;
            *slot = f32::from_le_bytes(b.attributes[at..at + 4].try_into().unwrap());
        }
        cloud.push(
            cell[0] as f64 / b.scale + b.offset[0],
            cell[1] as f64 / b.scale + b.offset[1],
            cell[2] as f64 / b.scale + b.offset[2],
            &attrs,
        );
    }
    Ok(cloud)
}

/// Bits per point: total serialized size over the recorded original
/// point count.
pub fn measure_bpp(b: &Bitstream) -> Result<f64> {
    if b.n_orig == 0 {
        return Err(Error::UndefinedRate);
    }
    Ok(b.size_bits() as f64 / b.n_orig as f64)
}

/// Write a bitstream to disk atomically.
pub fn write_bitstream(b: &Bitstream, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, &b.to_bytes())
}

/// Read a bitstream from disk.
pub fn read_bitstream(path: impl AsRef<Path>) -> Result<Bitstream> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Bitstream::from_bytes(&bytes)
}
