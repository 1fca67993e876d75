//! Synthetic phantoms: spherical structures over a background, a corrupted
//! probability prior, and an intensity volume with per-structure contrast.
//! Deterministic given the seed, so pipeline outputs are reproducible
//! byte-for-byte across platforms.
//!
//! All randomness flows from one ChaCha8 stream seeded with the
//! [`PhantomSpec`] 64-bit seed. Draw order is fixed: per voxel in linear
//! order, one corruption coin and `L` exponential variates for the
//! probability volume, then one uniform per voxel for the intensity noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::volume::{IntensityVolume, LabelVolume, ProbabilityVolume};

/// One spherical structure, in voxel units.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Geometry and corruption parameters of a phantom. Structure `k` (0-based)
/// produces label `k + 1`; label 0 is the background.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub structures: Vec<SphereSpec>,
    /// Prior corruption level in [0, 1): the probability that a voxel's
    /// distribution is replaced by pure noise. Clean voxels still get their
    /// one-hot prior blended with noise at weight `eta`.
    pub eta: f64,
    /// Intensity step between consecutive structure means.
    pub contrast: f64,
    /// Amplitude of the uniform additive intensity noise.
    pub noise_amp: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.structures.is_empty() {
            return Err(Error::Parameter(
                "phantom needs at least one structure".into(),
            ));
        }
        if self.structures.len() + 1 > usize::from(u16::MAX) {
            return Err(Error::Parameter("too many structures".into()));
        }
        if !self.eta.is_finite() || !(0.0..1.0).contains(&self.eta) {
            return Err(Error::Parameter(format!(
                "eta must lie in [0, 1), got {}",
                self.eta
            )));
        }
        if !self.contrast.is_finite() || self.contrast <= 0.0 {
            return Err(Error::Parameter(format!(
                "contrast must be finite and positive, got {}",
                self.contrast
            )));
        }
        if !self.noise_amp.is_finite() || self.noise_amp < 0.0 {
            return Err(Error::Parameter(format!(
                "noise amplitude must be finite and non-negative, got {}",
                self.noise_amp
            )));
        }
        let extent = self.dims.extent();
        for (k, s) in self.structures.iter().enumerate() {
            let finite = s.center.iter().all(|c| c.is_finite()) && s.radius.is_finite();
            if !finite || s.radius <= 0.0 {
                return Err(Error::Parameter(format!(
                    "structure {k} has invalid geometry"
                )));
            }
            for axis in 0..3 {
                let lo = s.center[axis] - s.radius;
                let hi = s.center[axis] + s.radius;
                if lo < 0.0 || hi > (extent[axis] - 1) as f64 {
                    return Err(Error::Parameter(format!(
                        "structure {k} does not fit inside dims {extent:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn label_count(&self) -> usize {
        self.structures.len() + 1
    }
}

/// Builds (ground truth, probability prior, intensity) for a spec.
pub fn make_phantom(
    spec: &PhantomSpec,
) -> Result<(LabelVolume, ProbabilityVolume, IntensityVolume)> {
    spec.validate()?;
    let dims = spec.dims;
    let nvox = dims.voxel_count();
    let labels = spec.label_count();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Ground truth geometry: the first containing sphere wins.
    let mut gt = vec![0u16; nvox];
    for (idx, slot) in gt.iter_mut().enumerate() {
        let [x, y, z] = dims.coord_of(idx);
        let p = [x as f64, y as f64, z as f64];
        for (k, s) in spec.structures.iter().enumerate() {
            let d2: f64 = (0..3).map(|a| (p[a] - s.center[a]).powi(2)).sum();
            if d2 <= s.radius * s.radius {
                *slot = (k + 1) as u16;
                break;
            }
        }
    }

    // Probability prior: one-hot softened with noise; corrupted voxels are
    // replaced by a plain Dirichlet(1,..,1) draw so their argmax is random.
    let mut prob = vec![0.0; nvox * labels];
    let mut draw = vec![0.0; labels];
    for idx in 0..nvox {
        let corrupted = rng.gen::<f64>() < spec.eta;
        let mut sum = 0.0;
        for g in draw.iter_mut() {
            *g = -(1.0 - rng.gen::<f64>()).ln();
            sum += *g;
        }
        if sum == 0.0 {
            draw.fill(1.0);
            sum = labels as f64;
        }
        let truth = usize::from(gt[idx]);
        let mut total = 0.0;
        for c in 0..labels {
            let noise = draw[c] / sum;
            let p = if corrupted {
                noise
            } else {
                let onehot = if c == truth { 1.0 } else { 0.0 };
                (1.0 - spec.eta) * onehot + spec.eta * noise
            };
            prob[c * nvox + idx] = p;
            total += p;
        }
        for c in 0..labels {
            prob[c * nvox + idx] /= total;
        }
    }

    // Intensity: distinct mean per structure plus bounded uniform noise.
    let mut intensity = vec![0.0; nvox];
    for (idx, v) in intensity.iter_mut().enumerate() {
        let mean = f64::from(gt[idx]) * spec.contrast;
        let noise = spec.noise_amp * (2.0 * rng.gen::<f64>() - 1.0);
        *v = mean + noise;
    }

    Ok((
        LabelVolume::new(dims, gt)?,
        ProbabilityVolume::new_unchecked(dims, labels, prob),
        IntensityVolume::new(dims, intensity)?,
    ))
}

/// The two-sphere 32-cube phantom used by the examples and the test suite.
pub fn default_spec(seed: u64) -> PhantomSpec {
    PhantomSpec {
        dims: Dims::isotropic(32, 32, 32).expect("static dims are valid"),
        structures: vec![
            SphereSpec {
                center: [11.0, 11.0, 11.0],
                radius: 7.0,
            },
            SphereSpec {
                center: [21.0, 21.0, 21.0],
                radius: 6.0,
            },
        ],
        eta: 0.4,
        contrast: 100.0,
        noise_amp: 5.0,
        seed,
    }
}
