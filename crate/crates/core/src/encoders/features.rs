//! Spatial feature sampling for the style loss.

use stylestroke_tensor::Var;

use crate::error::{Error, Result};
use crate::rng::Rng32;

pub const DEFAULT_MAX_FEATURES: usize = 1024;

/// Sampled (M, C) feature rows per tapped layer, with the flat row-major
/// locations they came from.
pub struct FeatureSet<'t> {
    pub layers: Vec<(String, Var<'t>)>,
    pub coords: Vec<Vec<usize>>,
}

/// Up to `m` distinct locations out of `h·w`, ascending. All locations (in
/// row-major order) when the map has no more than `m`; otherwise a partial
/// Fisher–Yates shuffle driven by `rng`.
pub fn sample_coords(hw: usize, m: usize, rng: &mut Rng32) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::config("feature sample count must be at least 1"));
    }
    if hw <= m {
        return Ok((0..hw).collect());
    }
    let mut idx: Vec<usize> = (0..hw).collect();
    for i in 0..m {
        let j = i + rng.below(hw - i);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx)
}

/// Rows of a (1, C, H, W) map at flat locations `coords`, as (M, C).
pub fn gather_features<'t>(map: Var<'t>, coords: &[usize]) -> Result<Var<'t>> {
    let shape = map.shape();
    let (c, hw) = match shape[..] {
        [1, c, h, w] => (c, h * w),
        _ => {
            return Err(Error::Tensor(stylestroke_tensor::TensorError::InvalidShape(format!(
                "feature map must be (1, C, H, W), got {shape:?}"
            ))))
        }
    };
    Ok(map.reshape(&[c, hw])?.index_select(1, coords)?.transpose(&[1, 0])?)
}
