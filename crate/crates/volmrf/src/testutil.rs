//! Seeded random volume builders shared by the unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Dims;
use crate::volume::{IntensityVolume, ProbabilityVolume};

pub(crate) fn random_probability(
    rng: &mut ChaCha8Rng,
    dims: Dims,
    channels: usize,
) -> ProbabilityVolume {
    let nvox = dims.voxel_count();
    let mut data = vec![0.0; nvox * channels];
    for i in 0..nvox {
        let raw: Vec<f64> = (0..channels)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        for c in 0..channels {
            data[c * nvox + i] = raw[c] / sum;
        }
    }
    ProbabilityVolume::new(dims, channels, data).unwrap()
}

pub(crate) fn random_intensity(rng: &mut ChaCha8Rng, dims: Dims, scale: f64) -> IntensityVolume {
    let data = (0..dims.voxel_count())
        .map(|_| rng.gen::<f64>() * scale)
        .collect();
    IntensityVolume::new(dims, data).unwrap()
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
