//! The labeling energy: negative-log unary potentials, contrast-sensitive
//! Potts pairwise weights, contrast scale estimation, and the total energy
//! of a labeling.
//!
//! For a labeling `S` the energy is
//!
//! ```text
//! E(S) = sum_i -ln(max(P_i(l_i), eps)) + lambda * sum_(i,j) w_ij * [l_i != l_j]
//! ```
//!
//! with `w_ij = exp(-(I_i - I_j)^2 / (2 sigma^2))` over the 6-neighborhood
//! grid edges. Both sums run in the canonical voxel/edge order so energy
//! traces reproduce bit-for-bit across runs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::volume::{IntensityVolume, LabelVolume, ProbabilityVolume};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-12;
/// Upper bound on the probability clamp; larger values would distort the
/// unary ordering of well-separated probabilities.
pub const MAX_EPSILON: f64 = 1e-3;

/// Contrast scale configuration: a fixed value or estimated from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    /// Estimate via [`estimate_sigma`] on the intensity volume.
    Auto,
    Fixed(f64),
}

/// Contrast scale after resolution against a concrete intensity volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedSigma {
    Scale(f64),
    /// Degenerate case (constant intensities): every edge weight is 1.
    Uniform,
}

/// Everything that pins down the energy besides the volumes themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    lambda: f64,
    sigma: Sigma,
    epsilon: f64,
    labels: usize,
}

impl EnergyParams {
    pub fn new(lambda: f64, sigma: Sigma, epsilon: f64, labels: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Parameter(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if let Sigma::Fixed(s) = sigma {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Parameter(format!(
                    "sigma must be finite and > 0, got {s}"
                )));
            }
        }
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > MAX_EPSILON {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, {MAX_EPSILON}], got {epsilon}"
            )));
        }
        if labels < 2 {
            return Err(Error::Parameter(format!(
                "label count must be >= 2, got {labels}"
            )));
        }
        Ok(Self {
            lambda,
            sigma,
            epsilon,
            labels,
        })
    }

    /// lambda = 1, sigma auto, epsilon 1e-12.
    pub fn with_defaults(labels: usize) -> Result<Self> {
        Self::new(DEFAULT_LAMBDA, Sigma::Auto, DEFAULT_EPSILON, labels)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn labels(&self) -> usize {
        self.labels
    }
}

/// Unary potential `-ln(max(P, eps))`; finite for every probability,
/// including exact zeros on background.
#[inline]
pub fn unary(prob: &ProbabilityVolume, voxel: usize, label: u16, epsilon: f64) -> f64 {
    unary_of(prob.value(voxel, usize::from(label)), epsilon)
}

#[inline]
pub(crate) fn unary_of(p: f64, epsilon: f64) -> f64 {
    -p.max(epsilon).ln()
}

/// Contrast-sensitive Potts edge weight `exp(-(dI)^2 / (2 sigma^2))`.
///
/// Computed through the ratio `dI / sigma`, so rescaling intensities and
/// sigma by the same power of two leaves the weight bit-identical. The
/// result is clamped away from zero to keep weights in (0, 1] even when the
/// exponential underflows.
#[inline]
pub fn pairwise_weight(intensity_i: f64, intensity_j: f64, sigma: f64) -> f64 {
    let r = (intensity_i - intensity_j) / sigma;
    (-0.5 * r * r).exp().max(f64::MIN_POSITIVE)
}

/// RMS intensity difference over all grid edges. Returns
/// [`ResolvedSigma::Uniform`] for constant volumes (every weight becomes 1)
/// and a parameter error for volumes without any edge.
pub fn estimate_sigma(intensity: &IntensityVolume) -> Result<ResolvedSigma> {
    let dims = intensity.dims();
    if dims.edge_count() == 0 {
        return Err(Error::Parameter(
            "sigma estimation needs at least one grid edge".into(),
        ));
    }
    let data = intensity.data();
    let mut sum = 0.0;
    for (i, j) in dims.edges() {
        let d = data[i] - data[j];
        sum += d * d;
    }
    let mean = sum / dims.edge_count() as f64;
    if !mean.is_finite() {
        return Err(Error::Parameter(
            "intensity differences overflow the sigma estimate; rescale the volume".into(),
        ));
    }
    if mean == 0.0 {
        Ok(ResolvedSigma::Uniform)
    } else {
        Ok(ResolvedSigma::Scale(mean.sqrt()))
    }
}

/// Resolve a [`Sigma`] against an intensity volume. Grids without edges
/// resolve to `Uniform` since no pairwise term exists to weight.
pub fn resolve_sigma(sigma: Sigma, intensity: &IntensityVolume) -> Result<ResolvedSigma> {
    match sigma {
        Sigma::Fixed(s) => Ok(ResolvedSigma::Scale(s)),
        Sigma::Auto => {
            if intensity.dims().edge_count() == 0 {
                Ok(ResolvedSigma::Uniform)
            } else {
                estimate_sigma(intensity)
            }
        }
    }
}

/// One weight per undirected grid edge, stored in the canonical edge order
/// of [`Dims::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    extent: [usize; 3],
    weights: Vec<f64>,
}

impl EdgeWeights {
    /// Hand-built weights; must supply one value in (0, 1] per grid edge in
    /// canonical order.
    pub fn new(dims: &Dims, weights: Vec<f64>) -> Result<EdgeWeights> {
        if weights.len() != dims.edge_count() {
            return Err(Error::Shape(format!(
                "{} weights supplied, grid {:?} has {} edges",
                weights.len(),
                dims.extent(),
                dims.edge_count()
            )));
        }
        if let Some(&w) = weights
            .iter()
            .find(|w| !w.is_finite() || **w <= 0.0 || **w > 1.0)
        {
            return Err(Error::Validation(format!("edge weight {w} outside (0, 1]")));
        }
        Ok(EdgeWeights {
            extent: dims.extent(),
            weights,
        })
    }

    /// Contrast weights for every edge of the intensity grid.
    pub fn compute(intensity: &IntensityVolume, sigma: ResolvedSigma) -> EdgeWeights {
        #[cfg(feature = "parallel")]
        {
            Self::compute_par(intensity, sigma)
        }
        #[cfg(not(feature = "parallel"))]
        {
            Self::compute_seq(intensity, sigma)
        }
    }

    /// Sequential reference path of [`EdgeWeights::compute`].
    pub fn compute_seq(intensity: &IntensityVolume, sigma: ResolvedSigma) -> EdgeWeights {
        let dims = intensity.dims();
        let mut weights = vec![0.0; dims.edge_count()];
        match sigma {
            ResolvedSigma::Uniform => weights.fill(1.0),
            ResolvedSigma::Scale(s) => {
                let mut offset = 0;
                for z in 0..dims.z() {
                    let n = dims.slice_edge_count(z);
                    fill_slice_weights(intensity, s, z, &mut weights[offset..offset + n]);
                    offset += n;
                }
            }
        }
        EdgeWeights {
            extent: dims.extent(),
            weights,
        }
    }

    /// Rayon path of [`EdgeWeights::compute`]: the edge range is carved into
    /// per-slice chunks, so the output is bit-identical to the sequential
    /// path.
    #[cfg(feature = "parallel")]
    pub fn compute_par(intensity: &IntensityVolume, sigma: ResolvedSigma) -> EdgeWeights {
        let dims = intensity.dims();
        let mut weights = vec![0.0; dims.edge_count()];
        match sigma {
            ResolvedSigma::Uniform => weights.fill(1.0),
            ResolvedSigma::Scale(s) => {
                let mut chunks = Vec::with_capacity(dims.z());
                let mut rest = weights.as_mut_slice();
                for z in 0..dims.z() {
                    let (head, tail) = rest.split_at_mut(dims.slice_edge_count(z));
                    chunks.push(head);
                    rest = tail;
                }
                chunks.into_par_iter().enumerate().for_each(|(z, chunk)| {
                    fill_slice_weights(intensity, s, z, chunk);
                });
            }
        }
        EdgeWeights {
            extent: dims.extent(),
            weights,
        }
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weights for all edges whose lower endpoint lies in slice `z`, written in
/// canonical order into `out`.
fn fill_slice_weights(intensity: &IntensityVolume, sigma: f64, z: usize, out: &mut [f64]) {
    let dims = intensity.dims();
    let data = intensity.data();
    let (nx, ny, nz) = (dims.x(), dims.y(), dims.z());
    let dxy = nx * ny;
    let base = z * dxy;
    let mut k = 0;
    for y in 0..ny {
        for x in 0..nx {
            let i = base + y * nx + x;
            if x + 1 < nx {
                out[k] = pairwise_weight(data[i], data[i + 1], sigma);
                k += 1;
            }
            if y + 1 < ny {
                out[k] = pairwise_weight(data[i], data[i + nx], sigma);
                k += 1;
            }
            if z + 1 < nz {
                out[k] = pairwise_weight(data[i], data[i + dxy], sigma);
                k += 1;
            }
        }
    }
    debug_assert_eq!(k, out.len());
}

/// Total energy of a labeling: unary sum plus lambda-weighted Potts pairwise
/// sum, each undirected edge counted once, accumulated in canonical order.
pub fn total_energy(
    labeling: &LabelVolume,
    prob: &ProbabilityVolume,
    weights: &EdgeWeights,
    params: &EnergyParams,
) -> Result<f64> {
    let dims = prob.dims();
    if !labeling.dims().same_extent(dims) {
        return Err(Error::Shape(format!(
            "labeling extent {:?} does not match probability extent {:?}",
            labeling.dims().extent(),
            dims.extent()
        )));
    }
    if weights.extent() != dims.extent() {
        return Err(Error::Shape(format!(
            "edge weights extent {:?} does not match probability extent {:?}",
            weights.extent(),
            dims.extent()
        )));
    }
    if params.labels() != prob.channels() {
        return Err(Error::Shape(format!(
            "params declare {} labels, probability volume has {} channels",
            params.labels(),
            prob.channels()
        )));
    }
    let labels = labeling.data();
    if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= prob.channels()) {
        return Err(Error::Validation(format!(
            "label {bad} exceeds the {}-label space",
            prob.channels()
        )));
    }

    let mut energy = 0.0;
    for (voxel, &label) in labels.iter().enumerate() {
        energy += unary(prob, voxel, label, params.epsilon());
    }
    let w = weights.weights();
    for (k, (i, j)) in dims.edges().enumerate() {
        if labels[i] != labels[j] {
            energy += params.lambda() * w[k];
        }
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_intensity, random_probability, rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unary_examples() {
        let dims = Dims::isotropic(1, 1, 1).unwrap();
        let v = ProbabilityVolume::new(dims, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(unary(&v, 0, 0, 1e-12), 0.0);
        // -ln(1e-12) = 12 ln 10
        assert_abs_diff_eq!(
            unary(&v, 0, 1, 1e-12),
            12.0 * 10.0_f64.ln(),
            epsilon = 1e-12
        );

        let e_inv = (-1.0_f64).exp();
        let v = ProbabilityVolume::new(dims, 2, vec![e_inv, 1.0 - e_inv]).unwrap();
        assert_abs_diff_eq!(unary(&v, 0, 0, 1e-12), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_weight(7.5, 7.5, 3.0), 1.0);
        let dl = 4.0 * 2.0_f64.sqrt();
        assert_abs_diff_eq!(
            pairwise_weight(0.0, dl, 4.0),
            (-1.0_f64).exp(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pairwise_weight(10.0, 20.0, 10.0),
            (-0.5_f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sigma_estimation_examples() {
        let two = Dims::isotropic(2, 1, 1).unwrap();
        let v = IntensityVolume::new(two, vec![1.0, 3.0]).unwrap();
        assert_eq!(estimate_sigma(&v).unwrap(), ResolvedSigma::Scale(2.0));

        // Edge differences {0, 2}: sqrt(mean{0, 4}) = sqrt(2).
        let three = Dims::isotropic(3, 1, 1).unwrap();
        let v = IntensityVolume::new(three, vec![1.0, 1.0, 3.0]).unwrap();
        match estimate_sigma(&v).unwrap() {
            ResolvedSigma::Scale(s) => assert_abs_diff_eq!(s, 2.0_f64.sqrt(), epsilon = 1e-12),
            other => panic!("expected scale, got {other:?}"),
        }

        let constant = IntensityVolume::new(three, vec![5.0; 3]).unwrap();
        assert_eq!(estimate_sigma(&constant).unwrap(), ResolvedSigma::Uniform);
        let w = EdgeWeights::compute(&constant, ResolvedSigma::Uniform);
        assert!(w.weights().iter().all(|&w| w == 1.0));

        let single = Dims::isotropic(1, 1, 1).unwrap();
        let v = IntensityVolume::new(single, vec![1.0]).unwrap();
        assert!(matches!(estimate_sigma(&v), Err(Error::Parameter(_))));
    }

    #[test]
    fn total_energy_examples() {
        let eps = 1e-12;
        // Single voxel: just the unary of its label.
        let one = Dims::isotropic(1, 1, 1).unwrap();
        let prob = ProbabilityVolume::new(one, 2, vec![0.8, 0.2]).unwrap();
        let labeling = LabelVolume::new(one, vec![1]).unwrap();
        let weights = EdgeWeights::compute(
            &IntensityVolume::new(one, vec![0.0]).unwrap(),
            ResolvedSigma::Uniform,
        );
        let params = EnergyParams::new(1.0, Sigma::Fixed(1.0), eps, 2).unwrap();
        let e = total_energy(&labeling, &prob, &weights, &params).unwrap();
        assert_abs_diff_eq!(e, -(0.2_f64.ln()), epsilon = 1e-12);

        // Two adjacent voxels, same label: sum of the two unaries.
        let two = Dims::isotropic(2, 1, 1).unwrap();
        let prob = ProbabilityVolume::new(two, 2, vec![0.6, 0.3, 0.4, 0.7]).unwrap();
        let intensity = IntensityVolume::new(two, vec![0.0, 0.0]).unwrap();
        let weights = EdgeWeights::compute(&intensity, ResolvedSigma::Uniform);
        let same = LabelVolume::new(two, vec![0, 0]).unwrap();
        let e = total_energy(&same, &prob, &weights, &params).unwrap();
        assert_abs_diff_eq!(e, -(0.6_f64.ln()) - (0.3_f64.ln()), epsilon = 1e-12);

        // Different labels, w = 0.5, lambda = 2: unaries + 1.0.
        let params2 = EnergyParams::new(2.0, Sigma::Fixed(1.0), eps, 2).unwrap();
        let half = EdgeWeights::new(&two, vec![0.5]).unwrap();
        let diff = LabelVolume::new(two, vec![0, 1]).unwrap();
        let e = total_energy(&diff, &prob, &half, &params2).unwrap();
        assert_abs_diff_eq!(e, -(0.6_f64.ln()) - (0.7_f64.ln()) + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn total_energy_rejects_mismatched_shapes() {
        let a = Dims::isotropic(2, 2, 2).unwrap();
        let b = Dims::isotropic(2, 2, 3).unwrap();
        let prob = random_probability(&mut rng(0), a, 2);
        let labeling = LabelVolume::new(b, vec![0; b.voxel_count()]).unwrap();
        let weights = EdgeWeights::compute(
            &random_intensity(&mut rng(1), a, 1.0),
            ResolvedSigma::Uniform,
        );
        let params = EnergyParams::with_defaults(2).unwrap();
        assert!(matches!(
            total_energy(&labeling, &prob, &weights, &params),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn potts_term_is_a_metric() {
        // V(a,b) = w * [a != b] with any fixed w >= 0: identity, symmetry,
        // triangle inequality.
        for w in [0.0, 0.25, 1.0] {
            let v = |a: u16, b: u16| if a == b { 0.0 } else { w };
            for a in 0..3u16 {
                for b in 0..3u16 {
                    assert_eq!(v(a, b) == 0.0, a == b || w == 0.0);
                    assert_eq!(v(a, b), v(b, a));
                    for c in 0..3u16 {
                        assert!(v(a, b) <= v(a, c) + v(c, b) + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn computed_weights_follow_the_canonical_edge_order() {
        let dims = Dims::isotropic(4, 3, 5).unwrap();
        let intensity = random_intensity(&mut rng(2), dims, 50.0);
        let sigma = 7.5;
        let weights = EdgeWeights::compute(&intensity, ResolvedSigma::Scale(sigma));
        assert_eq!(weights.len(), dims.edge_count());
        for (k, (i, j)) in dims.edges().enumerate() {
            assert_eq!(
                weights.weights()[k],
                pairwise_weight(intensity.value(i), intensity.value(j), sigma),
                "weight {k} does not belong to edge ({i}, {j})"
            );
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_weights_are_bit_identical() {
        let dims = Dims::isotropic(9, 7, 5).unwrap();
        let intensity = random_intensity(&mut rng(4), dims, 100.0);
        let sigma = estimate_sigma(&intensity).unwrap();
        let a = EdgeWeights::compute_par(&intensity, sigma);
        let b = EdgeWeights::compute_seq(&intensity, sigma);
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn rescaling_intensities_and_sigma_together_changes_nothing() {
        let mut r = rng(7);
        for _ in 0..200 {
            let a: f64 = rand::Rng::gen_range(&mut r, -50.0..50.0);
            let b: f64 = rand::Rng::gen_range(&mut r, -50.0..50.0);
            let s: f64 = rand::Rng::gen_range(&mut r, 0.1..20.0);
            // Power-of-two scales are bit-exact thanks to the ratio form.
            for c in [0.5, 2.0, 4.0, 1024.0] {
                assert_eq!(
                    pairwise_weight(a, b, s),
                    pairwise_weight(c * a, c * b, c * s),
                    "scale {c} changed the weight"
                );
            }
            // Arbitrary positive scales agree to rounding error.
            let w = pairwise_weight(a, b, s);
            for c in [0.3, 3.7, 123.456] {
                let scaled = pairwise_weight(c * a, c * b, c * s);
                assert!((scaled - w).abs() <= 1e-12 * w.max(1e-300));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unary_is_strictly_decreasing_in_p(
            p1 in 1e-12f64..1.0, delta in 1e-6f64..0.5
        ) {
            let eps = 1e-12;
            let p2 = (p1 + delta).min(1.0);
            prop_assume!(p2 > p1);
            prop_assert!(unary_of(p2, eps) < unary_of(p1, eps));
        }

        #[test]
        fn pairwise_is_symmetric_and_in_range(
            a in -1e3f64..1e3, b in -1e3f64..1e3, s in 1e-3f64..1e3
        ) {
            let w = pairwise_weight(a, b, s);
            prop_assert_eq!(w, pairwise_weight(b, a, s));
            prop_assert!(w > 0.0 && w <= 1.0);
            if a == b {
                prop_assert_eq!(w, 1.0);
            } else if (a - b).abs() / s > 1e-6 {
                // Away from the underflow-to-1 region of exp, distinct
                // intensities give a weight strictly below 1.
                prop_assert!(w < 1.0);
            }
        }

        #[test]
        fn energy_bounds_on_random_instances(
            seed in 0u64..500, nx in 1usize..4, ny in 1usize..4, nz in 1usize..4,
            channels in 2usize..4
        ) {
            let mut r = rng(seed);
            let dims = Dims::isotropic(nx, ny, nz).unwrap();
            let prob = random_probability(&mut r, dims, channels);
            let intensity = random_intensity(&mut r, dims, 10.0);
            let sigma = resolve_sigma(Sigma::Auto, &intensity).unwrap();
            let weights = EdgeWeights::compute(&intensity, sigma);
            let params = EnergyParams::with_defaults(channels).unwrap();
            let labels: Vec<u16> = (0..dims.voxel_count())
                .map(|_| rand::Rng::gen_range(&mut r, 0..channels as u16))
                .collect();
            let labeling = LabelVolume::new(dims, labels).unwrap();
            let e = total_energy(&labeling, &prob, &weights, &params).unwrap();
            let upper = dims.voxel_count() as f64 * -(params.epsilon().ln())
                + params.lambda() * dims.edge_count() as f64;
            prop_assert!(e >= 0.0);
            prop_assert!(e <= upper + 1e-9);
        }
    }
}
