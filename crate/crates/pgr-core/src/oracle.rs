//! Omniscient ground removal: drop every labeled ground point, then
//! restore the ones inside extension-scaled ground-truth boxes.
//!
//! This is the feasibility procedure the pillar pipeline approximates
//! without labels. The ground labels arrive as an input mask, so no
//! segmentation model runs here.

use crate::cloud::{Box3D, GroundMask, PointCloud};
use crate::error::{Error, Result};
use crate::pgr::KeepMask;

/// Extension factor controlling how far the ground-truth boxes grow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Each box dimension is multiplied by `1 + extension_factor`.
    pub extension_factor: f64,
}

impl OracleConfig {
    pub fn new(extension_factor: f64) -> Result<Self> {
        if !(extension_factor.is_finite() && extension_factor >= 0.0) {
            return Err(Error::validation(format!(
                "extension factor must be non-negative, got {extension_factor}"
            )));
        }
        Ok(Self { extension_factor })
    }
}

/// Keep every non-ground point; keep a ground point only when it falls in
/// some box scaled by `1 + EF` about its center. With EF = 0 only ground
/// points inside the unscaled boxes survive.
pub fn apply_oracle(
    cloud: &PointCloud,
    ground: &GroundMask,
    boxes: &[Box3D],
    cfg: OracleConfig,
) -> Result<KeepMask> {
    if !(cfg.extension_factor.is_finite() && cfg.extension_factor >= 0.0) {
        return Err(Error::validation(format!(
            "extension factor must be non-negative, got {}",
            cfg.extension_factor
        )));
    }
    ground.check_pairing(cloud)?;
    let scale = 1.0 + cfg.extension_factor;
    let mut flags = vec![false; cloud.len()];
    for (i, flag) in flags.iter_mut().enumerate() {
        if !ground.is_ground(i) {
            *flag = true;
            continue;
        }
        let p = cloud.point(i);
        *flag = boxes.iter().any(|b| b.contains(p, scale));
    }
    Ok(KeepMask::new(flags))
}
