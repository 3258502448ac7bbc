//! Volumetric evaluation: vDSC, Hausdorff distance and RAVD, per-case reports
//! with mean ± sample standard deviation, and the uniform-size simulation.

mod hausdorff;
mod report;
mod simulate;

pub use hausdorff::{
    boundary_voxels, dist2, hausdorff, hausdorff_with_spacing, HausdorffMode, Voxel,
};
pub use report::{evaluate, CaseMetrics, MetricReport, Summary};
pub use simulate::{simulate_uniform, SimulationRow, SimulationTable};

use crate::error::{Error, Result};
use crate::preprocess::Volume;

fn require_mask(v: &Volume, what: &str) -> Result<()> {
    if !v.is_binary() {
        return Err(Error::contract(format!("{what}: mask is not binary")));
    }
    Ok(())
}

/// `100 · 2|A∩B| / (|A|+|B|)`; 100 when both masks are empty.
pub fn vdsc(a: &Volume, b: &Volume) -> Result<f64> {
    a.require_same_dims(b, "vdsc")?;
    require_mask(a, "vdsc")?;
    require_mask(b, "vdsc")?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * (2 * inter) as f64 / (na + nb) as f64)
}

/// `100 · ||A| − |B|| / |B|` with `a` the prediction and `b` the reference.
pub fn ravd(a: &Volume, b: &Volume) -> Result<f64> {
    a.require_same_dims(b, "ravd")?;
    let (na, nb) = (a.count(), b.count());
    if nb == 0 {
        return Err(Error::UndefinedMetric(
            "RAVD needs a nonempty reference mask".into(),
        ));
    }
    Ok(100.0 * na.abs_diff(nb) as f64 / nb as f64)
}
