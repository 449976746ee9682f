//! On and Off responses of a volume to a balanced kernel.

use crate::block::lift_kernel;
use crate::error::Result;
use crate::kernel::{make_kernel, BalancedKernel, KernelSpec, Polarity};
use crate::tensor::{conv3d_forward, FeatureMap, Padding};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq)]
pub struct OnOffResponse {
    pub on: Volume,
    pub off: Volume,
}

/// Correlates `v` with a 3D kernel. Valid padding shrinks each axis by
/// `k - 1`; spacing is kept.
pub fn kernel_response(v: &Volume, kern: &BalancedKernel, padding: Padding) -> Result<Volume> {
    let w = lift_kernel(kern, 1, 1)?;
    let out = conv3d_forward(&FeatureMap::from_volume(v), &w, padding)?;
    out.channel_volume(0, v.spacing())
}

/// Both responses, each computed with its own kernel.
pub fn on_off_responses(v: &Volume, spec: &KernelSpec, padding: Padding) -> Result<OnOffResponse> {
    let on = make_kernel(spec, Polarity::On)?;
    let off = make_kernel(spec, Polarity::Off)?;
    Ok(OnOffResponse {
        on: kernel_response(v, &on, padding)?,
        off: kernel_response(v, &off, padding)?,
    })
}
