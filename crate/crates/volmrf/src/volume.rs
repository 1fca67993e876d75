//! Volume containers and the probability-map post-processing steps:
//! argmax label decoding and per-slice bilinear upsampling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Dims;

/// Per-voxel class probabilities, `channels >= 2`, channel outermost.
///
/// Layout: `data[c * nvox + z * nx * ny + y * nx + x]`, so each class map is
/// one contiguous plane of `voxel_count` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

/// Tolerance on per-voxel channel sums accepted at construction and load.
pub const CHANNEL_SUM_TOLERANCE: f64 = 1e-4;

impl ProbabilityVolume {
    pub fn new(dims: Dims, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels < 2 {
            return Err(Error::Validation(format!(
                "probability volume needs at least 2 channels, got {channels}"
            )));
        }
        if channels > usize::from(u16::MAX) + 1 {
            return Err(Error::Validation(format!(
                "label count {channels} exceeds the u16 label space"
            )));
        }
        let nvox = dims.voxel_count();
        if data.len() != nvox * channels {
            return Err(Error::Shape(format!(
                "probability payload holds {} values, dims {:?} x {} channels need {}",
                data.len(),
                dims.extent(),
                channels,
                nvox * channels
            )));
        }
        let vol = Self {
            dims,
            channels,
            data,
        };
        vol.validate()?;
        Ok(vol)
    }

    /// Constructor for values that are valid by construction (interpolation
    /// output, phantom generation). Invariants are still checked in debug.
    pub(crate) fn new_unchecked(dims: Dims, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.voxel_count() * channels);
        let vol = Self {
            dims,
            channels,
            data,
        };
        debug_assert!(vol.validate().is_ok());
        vol
    }

    fn validate(&self) -> Result<()> {
        let nvox = self.dims.voxel_count();
        for (c, plane) in self.data.chunks_exact(nvox).enumerate() {
            for (i, &p) in plane.iter().enumerate() {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "probability {p} out of [0,1] at voxel {:?}, channel {c}",
                        self.dims.coord_of(i)
                    )));
                }
            }
        }
        for i in 0..nvox {
            let sum: f64 = (0..self.channels).map(|c| self.data[c * nvox + i]).sum();
            if (sum - 1.0).abs() > CHANNEL_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "channel sum {sum} at voxel {:?} is not within {CHANNEL_SUM_TOLERANCE} of 1",
                    self.dims.coord_of(i)
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Contiguous class map for one channel.
    pub fn channel_plane(&self, channel: usize) -> &[f64] {
        let nvox = self.dims.voxel_count();
        &self.data[channel * nvox..(channel + 1) * nvox]
    }

    /// Probability of `channel` at linear voxel index `voxel`.
    #[inline]
    pub fn value(&self, voxel: usize, channel: usize) -> f64 {
        self.data[channel * self.dims.voxel_count() + voxel]
    }
}

/// Scalar voxel intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVolume {
    dims: Dims,
    data: Vec<f64>,
}

impl IntensityVolume {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.voxel_count() {
            return Err(Error::Shape(format!(
                "intensity payload holds {} values, dims {:?} need {}",
                data.len(),
                dims.extent(),
                dims.voxel_count()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite intensity at voxel {:?}",
                dims.coord_of(i)
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, voxel: usize) -> f64 {
        self.data[voxel]
    }
}

/// One labeling: a label index per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    data: Vec<u16>,
}

impl LabelVolume {
    pub fn new(dims: Dims, data: Vec<u16>) -> Result<Self> {
        if data.len() != dims.voxel_count() {
            return Err(Error::Shape(format!(
                "label payload holds {} values, dims {:?} need {}",
                data.len(),
                dims.extent(),
                dims.voxel_count()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn label(&self, voxel: usize) -> u16 {
        self.data[voxel]
    }

    pub fn max_label(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct labels, including 0 when present.
    pub fn distinct_labels(&self) -> Vec<u16> {
        let mut seen = vec![false; usize::from(self.max_label()) + 1];
        for &l in &self.data {
            seen[usize::from(l)] = true;
        }
        seen.iter()
            .enumerate()
            .filter_map(|(l, &s)| s.then_some(l as u16))
            .collect()
    }
}

/// Per-voxel argmax over channels; ties break to the lowest label index.
pub fn argmax_labeling(prob: &ProbabilityVolume) -> LabelVolume {
    let nvox = prob.dims().voxel_count();
    let mut best: Vec<f64> = prob.channel_plane(0).to_vec();
    let mut labels = vec![0u16; nvox];
    for c in 1..prob.channels() {
        let plane = prob.channel_plane(c);
        for i in 0..nvox {
            if plane[i] > best[i] {
                best[i] = plane[i];
                labels[i] = c as u16;
            }
        }
    }
    LabelVolume {
        dims: *prob.dims(),
        data: labels,
    }
}

/// Source indices i0/i1 and the fractional weight toward i1, per output
/// sample along one axis.
type AxisTaps = Vec<(usize, usize, f64)>;

/// Precomputed 1D interpolation taps for one axis. Output sample `g` maps to
/// source coordinate `(g + 0.5) / factor - 0.5`, clamped to the borders.
fn axis_taps(n_in: usize, factor: usize) -> AxisTaps {
    let n_out = n_in * factor;
    (0..n_out)
        .map(|g| {
            let src = (g as f64 + 0.5) / factor as f64 - 0.5;
            let src = src.clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn upsample_plane(src: &[f64], nx: usize, xt: &AxisTaps, yt: &AxisTaps, dst: &mut [f64]) {
    let ox = xt.len();
    for (gy, &(y0, y1, ty)) in yt.iter().enumerate() {
        let row0 = &src[y0 * nx..y0 * nx + nx];
        let row1 = &src[y1 * nx..y1 * nx + nx];
        let out_row = &mut dst[gy * ox..(gy + 1) * ox];
        for (gx, &(x0, x1, tx)) in xt.iter().enumerate() {
            let top = row0[x0] * (1.0 - tx) + row0[x1] * tx;
            let bot = row1[x0] * (1.0 - tx) + row1[x1] * tx;
            out_row[gx] = top * (1.0 - ty) + bot * ty;
        }
    }
}

/// 2D bilinear upsampling of every z-slice of every channel by an integer
/// factor; z is untouched. Per-pixel channel sums are preserved up to
/// floating-point rounding because the four bilinear weights sum to 1.
///
/// With the default `parallel` feature the slices are processed on the rayon
/// pool; the output is bit-identical to [`upsample_bilinear_seq`].
pub fn upsample_bilinear(prob: &ProbabilityVolume, factor: usize) -> Result<ProbabilityVolume> {
    #[cfg(feature = "parallel")]
    {
        upsample_bilinear_par(prob, factor)
    }
    #[cfg(not(feature = "parallel"))]
    {
        upsample_bilinear_seq(prob, factor)
    }
}

fn upsample_setup(
    prob: &ProbabilityVolume,
    factor: usize,
) -> Result<(Dims, AxisTaps, AxisTaps, Vec<f64>)> {
    if factor == 0 {
        return Err(Error::Parameter("upsampling factor must be >= 1".into()));
    }
    let d = prob.dims();
    let [sx, sy, sz] = d.spacing_mm();
    let out_dims = Dims::new(
        d.x() * factor,
        d.y() * factor,
        d.z(),
        [sx / factor as f64, sy / factor as f64, sz],
    )?;
    let xt = axis_taps(d.x(), factor);
    let yt = axis_taps(d.y(), factor);
    let out = vec![0.0; out_dims.voxel_count() * prob.channels()];
    Ok((out_dims, xt, yt, out))
}

/// Sequential reference path of [`upsample_bilinear`].
pub fn upsample_bilinear_seq(prob: &ProbabilityVolume, factor: usize) -> Result<ProbabilityVolume> {
    let (out_dims, xt, yt, mut out) = upsample_setup(prob, factor)?;
    let d = prob.dims();
    let (in_plane, out_plane) = (d.x() * d.y(), out_dims.x() * out_dims.y());
    for (k, dst) in out.chunks_exact_mut(out_plane).enumerate() {
        let (c, z) = (k / d.z(), k % d.z());
        let src = &prob.channel_plane(c)[z * in_plane..(z + 1) * in_plane];
        upsample_plane(src, d.x(), &xt, &yt, dst);
    }
    Ok(ProbabilityVolume::new_unchecked(
        out_dims,
        prob.channels(),
        out,
    ))
}

/// Rayon path of [`upsample_bilinear`]: one task per (channel, slice) plane.
#[cfg(feature = "parallel")]
pub fn upsample_bilinear_par(prob: &ProbabilityVolume, factor: usize) -> Result<ProbabilityVolume> {
    let (out_dims, xt, yt, mut out) = upsample_setup(prob, factor)?;
    let d = *prob.dims();
    let (in_plane, out_plane) = (d.x() * d.y(), out_dims.x() * out_dims.y());
    out.par_chunks_exact_mut(out_plane)
        .enumerate()
        .for_each(|(k, dst)| {
            let (c, z) = (k / d.z(), k % d.z());
            let src = &prob.channel_plane(c)[z * in_plane..(z + 1) * in_plane];
            upsample_plane(src, d.x(), &xt, &yt, dst);
        });
    Ok(ProbabilityVolume::new_unchecked(
        out_dims,
        prob.channels(),
        out,
    ))
}
